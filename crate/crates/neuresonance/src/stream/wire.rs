//! Binary sample framing shared by the TCP ingest path and the file logs.
//!
//! ```text
//! offset  size  field
//! 0       2     magic "NR"
//! 2       1     stream_id
//! 3       1     channel_count
//! 4       8     timestamp, µs, little-endian u64
//! 12      4·n   samples, little-endian f32
//! ```

use std::io::{self, Read};

use neuresonance_core::SampleFrame;

pub const FRAME_MAGIC: [u8; 2] = *b"NR";
pub const HEADER_LEN: usize = 12;

pub const fn frame_len(channel_count: usize) -> usize {
    HEADER_LEN + 4 * channel_count
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("bad magic at byte {offset}")]
    BadMagic { offset: usize },
    #[error("frame truncated at byte {offset}: {needed} bytes needed, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("channel-count mismatch at byte {offset}: stream {stream_id} expects {expected}, frame declares {found}")]
    ChannelMismatch {
        offset: usize,
        stream_id: u8,
        expected: usize,
        found: usize,
    },
    #[error("{found} trailing bytes after frame end at byte {offset}")]
    Trailing { offset: usize, found: usize },
    #[error("unknown stream {stream_id} at byte {offset}")]
    UnknownStream { offset: usize, stream_id: u8 },
    #[error("frame has {0} channels; at most 255 fit the header")]
    TooManyChannels(usize),
}

impl FrameError {
    /// Byte position the error refers to, relative to the decoded slice.
    pub fn offset(&self) -> usize {
        match *self {
            FrameError::BadMagic { offset }
            | FrameError::Truncated { offset, .. }
            | FrameError::ChannelMismatch { offset, .. }
            | FrameError::Trailing { offset, .. }
            | FrameError::UnknownStream { offset, .. } => offset,
            FrameError::TooManyChannels(_) => 3,
        }
    }

    /// Same error shifted by `base` bytes, for positions inside a larger buffer.
    pub fn shifted(self, base: usize) -> Self {
        match self {
            FrameError::BadMagic { offset } => FrameError::BadMagic {
                offset: offset + base,
            },
            FrameError::Truncated {
                offset,
                needed,
                available,
            } => FrameError::Truncated {
                offset: offset + base,
                needed,
                available,
            },
            FrameError::ChannelMismatch {
                offset,
                stream_id,
                expected,
                found,
            } => FrameError::ChannelMismatch {
                offset: offset + base,
                stream_id,
                expected,
                found,
            },
            FrameError::Trailing { offset, found } => FrameError::Trailing {
                offset: offset + base,
                found,
            },
            FrameError::UnknownStream { offset, stream_id } => FrameError::UnknownStream {
                offset: offset + base,
                stream_id,
            },
            other => other,
        }
    }
}

pub fn encode_frame(frame: &SampleFrame) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::with_capacity(frame_len(frame.channels.len()));
    encode_frame_into(frame, &mut out)?;
    Ok(out)
}

/// Appends the encoded frame to `out`.
pub fn encode_frame_into(frame: &SampleFrame, out: &mut Vec<u8>) -> Result<(), FrameError> {
    let count = u8::try_from(frame.channels.len())
        .map_err(|_| FrameError::TooManyChannels(frame.channels.len()))?;
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(frame.stream_id);
    out.push(count);
    out.extend_from_slice(&frame.timestamp_us.to_le_bytes());
    for v in &frame.channels {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Decodes one frame from the start of `bytes`, returning it with the number
/// of bytes consumed. Anything after the frame is left alone.
pub fn decode_frame_prefix(bytes: &[u8]) -> Result<(SampleFrame, usize), FrameError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 2 && bytes[..2] != FRAME_MAGIC {
            return Err(FrameError::BadMagic { offset: 0 });
        }
        return Err(FrameError::Truncated {
            offset: bytes.len(),
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    if bytes[..2] != FRAME_MAGIC {
        return Err(FrameError::BadMagic { offset: 0 });
    }
    let stream_id = bytes[2];
    let count = usize::from(bytes[3]);
    let len = frame_len(count);
    if bytes.len() < len {
        return Err(FrameError::Truncated {
            offset: bytes.len(),
            needed: len,
            available: bytes.len(),
        });
    }
    let timestamp_us = u64::from_le_bytes(bytes[4..12].try_into().expect("8-byte slice"));
    let channels = bytes[HEADER_LEN..len]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Ok((SampleFrame::new(stream_id, timestamp_us, channels), len))
}

/// Decodes a buffer holding exactly one frame.
pub fn decode_frame(bytes: &[u8]) -> Result<SampleFrame, FrameError> {
    let (frame, used) = decode_frame_prefix(bytes)?;
    if used != bytes.len() {
        return Err(FrameError::Trailing {
            offset: used,
            found: bytes.len() - used,
        });
    }
    Ok(frame)
}

/// Expected channel count per stream id; frames declaring anything else are
/// rejected with [`FrameError::ChannelMismatch`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamLayout {
    channels: [Option<u8>; 256],
}

impl StreamLayout {
    pub fn new() -> Self {
        Self {
            channels: [None; 256],
        }
    }

    pub fn with_stream(mut self, stream_id: u8, channel_count: u8) -> Self {
        self.channels[usize::from(stream_id)] = Some(channel_count);
        self
    }

    pub fn expected(&self, stream_id: u8) -> Option<usize> {
        self.channels[usize::from(stream_id)].map(usize::from)
    }

    /// Header-only validation, so a bad frame is rejected before its body is read.
    pub fn check_header(&self, header: &[u8; HEADER_LEN]) -> Result<(), FrameError> {
        if header[..2] != FRAME_MAGIC {
            return Err(FrameError::BadMagic { offset: 0 });
        }
        let stream_id = header[2];
        match self.expected(stream_id) {
            None => Err(FrameError::UnknownStream {
                offset: 2,
                stream_id,
            }),
            Some(expected) if expected != usize::from(header[3]) => {
                Err(FrameError::ChannelMismatch {
                    offset: 3,
                    stream_id,
                    expected,
                    found: usize::from(header[3]),
                })
            }
            Some(_) => Ok(()),
        }
    }

    pub fn decode(&self, bytes: &[u8]) -> Result<SampleFrame, FrameError> {
        if let Some(header) = bytes.get(..HEADER_LEN) {
            self.check_header(header.try_into().expect("header slice"))?;
        }
        decode_frame(bytes)
    }
}

impl Default for StreamLayout {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReadFrameError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{source} (stream byte {position})")]
    Framing { source: FrameError, position: u64 },
}

/// Pulls self-delimiting frames off a byte stream such as a TCP connection.
pub struct FrameReader<R> {
    inner: R,
    layout: StreamLayout,
    position: u64,
    buf: Vec<u8>,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R, layout: StreamLayout) -> Self {
        Self {
            inner,
            layout,
            position: 0,
            buf: Vec::with_capacity(frame_len(255)),
        }
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// `Ok(None)` on a clean end of stream between frames.
    pub fn read_frame(&mut self) -> Result<Option<SampleFrame>, ReadFrameError> {
        let mut header = [0u8; HEADER_LEN];
        let got = read_full(&mut self.inner, &mut header)?;
        if got == 0 {
            return Ok(None);
        }
        let start = self.position;
        if got < HEADER_LEN {
            self.position += got as u64;
            return Err(self.framing(
                FrameError::Truncated {
                    offset: got,
                    needed: HEADER_LEN,
                    available: got,
                },
                start,
            ));
        }
        if let Err(e) = self.layout.check_header(&header) {
            self.position += HEADER_LEN as u64;
            return Err(self.framing(e, start));
        }
        let len = frame_len(usize::from(header[3]));
        self.buf.clear();
        self.buf.extend_from_slice(&header);
        self.buf.resize(len, 0);
        let body = read_full(&mut self.inner, &mut self.buf[HEADER_LEN..])?;
        self.position += (HEADER_LEN + body) as u64;
        if body < len - HEADER_LEN {
            return Err(self.framing(
                FrameError::Truncated {
                    offset: HEADER_LEN + body,
                    needed: len,
                    available: HEADER_LEN + body,
                },
                start,
            ));
        }
        let frame = decode_frame(&self.buf).map_err(|e| self.framing(e, start))?;
        Ok(Some(frame))
    }

    fn framing(&self, source: FrameError, start: u64) -> ReadFrameError {
        ReadFrameError::Framing {
            position: start + source.offset() as u64,
            source,
        }
    }
}

/// Reads until `buf` is full or the stream ends; returns bytes read.
fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}
