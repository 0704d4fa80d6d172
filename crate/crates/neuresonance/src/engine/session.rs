//! Control commands and the trial/condition state machine.
//!
//! Commands are validated against the requested state as soon as they
//! arrive and acknowledged immediately; the resulting events are applied to
//! the active state at the next tick.

use serde::{Deserialize, Serialize};

use crate::session::{Condition, Modality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialAction {
    Start,
    Stop,
}

/// Inbound control messages, one JSON object per line, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    SetCondition { label: String },
    MarkTrial { action: TrialAction },
    SetModality { modality: String },
    SetSynthCoupling { value: f64 },
    Status,
    Stop,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SetCondition { .. } => "set_condition",
            Command::MarkTrial { .. } => "mark_trial",
            Command::SetModality { .. } => "set_modality",
            Command::SetSynthCoupling { .. } => "set_synth_coupling",
            Command::Status => "status",
            Command::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionState {
    pub condition: Option<Condition>,
    /// Id of the open trial, or of the last one once it has stopped.
    pub trial_id: Option<u32>,
    pub trial_open: bool,
    pub running: bool,
    pub modality_override: Option<Modality>,
    /// What updates currently drive; muted between trials.
    pub modality: Modality,
    pub consecutive_holds: usize,
}

impl SessionState {
    fn new(forced: Option<Modality>) -> Self {
        Self {
            condition: None,
            trial_id: None,
            trial_open: false,
            running: true,
            modality_override: forced,
            modality: Modality::None,
            consecutive_holds: 0,
        }
    }

    fn refresh_modality(&mut self) {
        self.modality = match (self.trial_open, self.condition) {
            (true, Some(c)) => self.modality_override.unwrap_or(c.default_modality()),
            (true, None) => self.modality_override.unwrap_or_default(),
            (false, _) => Modality::None,
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ack {
    pub command: &'static str,
    pub ok: bool,
    /// Rejection reason or warning, verbatim for the operator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// State as it will be after the next tick.
    pub state: SessionState,
}

/// State change waiting for the next tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SessionEvent {
    Condition(Condition),
    Modality(Modality),
    TrialStart { trial_id: u32, condition: Condition },
    TrialStop { trial_id: u32 },
    Stop,
}

#[derive(Debug, Clone)]
pub struct Session {
    requested: SessionState,
    active: SessionState,
    queue: Vec<SessionEvent>,
    next_trial_id: u32,
}

pub enum Outcome {
    Accepted,
    Warning(String),
    Rejected(String),
}

impl Session {
    pub fn new(forced: Option<Modality>) -> Self {
        Self {
            requested: SessionState::new(forced),
            active: SessionState::new(forced),
            queue: Vec::new(),
            next_trial_id: 1,
        }
    }

    pub fn active(&self) -> &SessionState {
        &self.active
    }

    pub fn requested(&self) -> &SessionState {
        &self.requested
    }

    pub fn set_condition(&mut self, label: &str) -> Outcome {
        let condition = match label.parse::<Condition>() {
            Ok(c) => c,
            Err(e) => return Outcome::Rejected(e.to_string()),
        };
        if self.requested.trial_open {
            return Outcome::Rejected(format!(
                "trial {} is open; conditions change only between trials",
                self.requested.trial_id.unwrap_or_default()
            ));
        }
        self.requested.condition = Some(condition);
        self.queue.push(SessionEvent::Condition(condition));
        Outcome::Accepted
    }

    pub fn set_modality(&mut self, label: &str) -> Outcome {
        match label.parse::<Modality>() {
            Ok(m) => {
                self.requested.modality_override = Some(m);
                self.requested.refresh_modality();
                self.queue.push(SessionEvent::Modality(m));
                Outcome::Accepted
            }
            Err(e) => Outcome::Rejected(e.to_string()),
        }
    }

    pub fn mark_trial(&mut self, action: TrialAction) -> Outcome {
        match action {
            TrialAction::Start => {
                if self.requested.trial_open {
                    return Outcome::Rejected(format!(
                        "trial {} is already open",
                        self.requested.trial_id.unwrap_or_default()
                    ));
                }
                let Some(condition) = self.requested.condition else {
                    return Outcome::Rejected("set a condition before starting a trial".into());
                };
                let trial_id = self.next_trial_id;
                self.next_trial_id += 1;
                self.requested.trial_open = true;
                self.requested.trial_id = Some(trial_id);
                self.requested.refresh_modality();
                self.queue.push(SessionEvent::TrialStart {
                    trial_id,
                    condition,
                });
                Outcome::Accepted
            }
            TrialAction::Stop => {
                if !self.requested.trial_open {
                    return Outcome::Warning("no open trial; stop ignored".into());
                }
                let trial_id = self.requested.trial_id.expect("open trial has an id");
                self.requested.trial_open = false;
                self.requested.refresh_modality();
                self.queue.push(SessionEvent::TrialStop { trial_id });
                Outcome::Accepted
            }
        }
    }

    pub fn stop(&mut self) -> Outcome {
        if self.requested.trial_open {
            if let Outcome::Rejected(m) = self.mark_trial(TrialAction::Stop) {
                return Outcome::Rejected(m);
            }
        }
        self.requested.running = false;
        self.queue.push(SessionEvent::Stop);
        Outcome::Accepted
    }

    /// Applies queued events to the active state and returns them in order.
    pub fn apply_pending(&mut self) -> Vec<SessionEvent> {
        let events = std::mem::take(&mut self.queue);
        for event in &events {
            let s = &mut self.active;
            match *event {
                SessionEvent::Condition(c) => {
                    s.condition = Some(c);
                    s.modality_override = self.requested.modality_override;
                }
                SessionEvent::Modality(m) => s.modality_override = Some(m),
                SessionEvent::TrialStart {
                    trial_id,
                    condition,
                } => {
                    s.trial_open = true;
                    s.trial_id = Some(trial_id);
                    s.condition = Some(condition);
                }
                SessionEvent::TrialStop { .. } => s.trial_open = false,
                SessionEvent::Stop => s.running = false,
            }
            s.refresh_modality();
        }
        events
    }

    pub fn set_consecutive_holds(&mut self, holds: usize) {
        self.active.consecutive_holds = holds;
        self.requested.consecutive_holds = holds;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_changes_only_between_trials() {
        let mut s = Session::new(None);
        assert!(matches!(s.set_condition("Auditory"), Outcome::Accepted));
        assert!(matches!(s.mark_trial(TrialAction::Start), Outcome::Accepted));
        assert!(matches!(s.set_condition("Visual"), Outcome::Rejected(_)));
        assert_eq!(s.active().modality, Modality::None);
        s.apply_pending();
        assert_eq!(s.active().modality, Modality::Auditory);
        assert!(matches!(s.mark_trial(TrialAction::Stop), Outcome::Accepted));
        assert!(matches!(s.mark_trial(TrialAction::Stop), Outcome::Warning(_)));
        s.apply_pending();
        assert_eq!(s.active().modality, Modality::None);
        assert_eq!(s.active().condition, Some(Condition::Auditory));
    }

    #[test]
    fn unknown_label_leaves_state() {
        let mut s = Session::new(None);
        let before = s.requested().clone();
        assert!(matches!(s.set_condition("Sync"), Outcome::Rejected(_)));
        assert!(matches!(s.mark_trial(TrialAction::Start), Outcome::Rejected(_)));
        assert_eq!(s.requested(), &before);
    }

    #[test]
    fn commands_parse_from_json() {
        let c: Command = serde_json::from_str(r#"{"type":"set_condition","label":"Haptic"}"#).unwrap();
        assert_eq!(c, Command::SetCondition { label: "Haptic".into() });
        let c: Command = serde_json::from_str(r#"{"type":"mark_trial","action":"stop"}"#).unwrap();
        assert_eq!(c.name(), "mark_trial");
        assert!(serde_json::from_str::<Command>(r#"{"type":"explode"}"#).is_err());
    }
}
