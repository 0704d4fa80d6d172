//! Experimental conditions and feedback modalities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The five study conditions, serialized under their protocol names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "Non-sync")]
    NonSync,
    #[serde(rename = "No Feedback")]
    NoFeedback,
    Visual,
    Auditory,
    Haptic,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::NonSync,
        Condition::NoFeedback,
        Condition::Visual,
        Condition::Auditory,
        Condition::Haptic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Condition::NonSync => "Non-sync",
            Condition::NoFeedback => "No Feedback",
            Condition::Visual => "Visual",
            Condition::Auditory => "Auditory",
            Condition::Haptic => "Haptic",
        }
    }

    /// Modality a trial of this condition drives unless overridden.
    pub fn default_modality(self) -> Modality {
        match self {
            Condition::NonSync | Condition::NoFeedback => Modality::None,
            Condition::Visual => Modality::Visual,
            Condition::Auditory => Modality::Auditory,
            Condition::Haptic => Modality::Haptic,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown label {0:?}")]
pub struct UnknownLabel(pub String);

fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl FromStr for Condition {
    type Err = UnknownLabel;

    /// Accepts the protocol names, ignoring case, spaces and hyphens.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize(s);
        Condition::ALL
            .into_iter()
            .find(|c| normalize(c.label()) == key)
            .ok_or_else(|| UnknownLabel(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    #[default]
    None,
    Visual,
    Auditory,
    Haptic,
}

impl Modality {
    pub fn label(self) -> &'static str {
        match self {
            Modality::None => "none",
            Modality::Visual => "visual",
            Modality::Auditory => "auditory",
            Modality::Haptic => "haptic",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Modality {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "off" => Ok(Modality::None),
            "visual" => Ok(Modality::Visual),
            "auditory" | "audio" => Ok(Modality::Auditory),
            "haptic" => Ok(Modality::Haptic),
            _ => Err(UnknownLabel(s.to_owned())),
        }
    }
}
