//! Encoder wire protocol, the chunked session container, the multi-stream
//! recorder and the fixed-rate alignment.
//!
//! A session carries five streams on one monotonic nanosecond clock:
//!
//! | id | name              | payload                                       |
//! |----|-------------------|-----------------------------------------------|
//! | 0  | `joint-bus`       | 22 encoder wire frames, one per joint id 0-21 |
//! | 1  | `wrist-cam-left`  | image frame, source id `0x20`                 |
//! | 2  | `wrist-cam-right` | image frame, source id `0x21`                 |
//! | 3  | `tactile-left`    | super-image frame, source id `0x10`           |
//! | 4  | `tactile-right`   | super-image frame, source id `0x11`           |
//!
//! Episode files add `joint-state` (5) and `action` (6); see
//! [`crate::export`]. Image frames use the 16-byte header from
//! [`crate::tactile`].
//!
//! Joint ids follow the layout `[left arm 0-3, right arm 4-7, left hand
//! 8-14, right hand 15-21]`.

mod align;
mod container;
mod encoder;
mod record;
pub mod synth;
mod wire;

pub use align::{align, align_samples, write_aligned, AlignOptions, AlignedStep, Alignment};
pub use container::{
    validate, validate_bytes, FileKind, Header, IndexEntry, JointChannel, SessionReader, SessionWriter, StreamInfo, ValidationReport, CHUNK_TARGET, EPISODE_TAG, MAGIC,
    SESSION_TAG, VERSION,
};
pub use encoder::{count_to_radians, radians_to_count, wrap_angle, EncoderSpec, COUNTS_PER_REV, LSB};
pub use record::{record, record_to_path, FileSource, Overflow, RecordFailure, RecordOptions, RecordSummary, Source, StreamStats};
pub use wire::{crc8, parse_encoder_frames, EncoderFrame, ParseDiagnostics, WireParser, FRAME_LEN, SYNC};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JOINT_COUNT: usize = 22;
pub const ARM_JOINTS: usize = 8;
pub const HAND_JOINTS: usize = 14;
pub const DEFAULT_RATE_HZ: f64 = 20.0;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("not a session file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    VersionUnsupported(u16),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("corrupt chunk at offset {offset}: {reason}")]
    CorruptChunk { offset: u64, reason: String },
    #[error("stream {stream}: timestamp {ts} after {last}")]
    OutOfOrder { stream: StreamId, ts: u64, last: u64 },
    #[error("stream {0} is not declared in the header")]
    UndeclaredStream(StreamId),
    #[error("unknown stream id {0}")]
    UnknownStream(u8),
    #[error("missing stream {0}")]
    MissingStream(StreamId),
    #[error("stream {stream} stalled: nothing for {timeout_ms} ms after t={last_ts} ns")]
    StreamStalled { stream: StreamId, last_ts: u64, timeout_ms: u64 },
    #[error("encoder count {0} out of range")]
    CountOutOfRange(u16),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum StreamId {
    JointBus = 0,
    WristCamLeft = 1,
    WristCamRight = 2,
    TactileLeft = 3,
    TactileRight = 4,
    JointState = 5,
    Action = 6,
}

impl StreamId {
    /// The streams every recorded session carries, in id order.
    pub const SESSION: [StreamId; 5] = [
        StreamId::JointBus,
        StreamId::WristCamLeft,
        StreamId::WristCamRight,
        StreamId::TactileLeft,
        StreamId::TactileRight,
    ];

    pub fn from_u8(v: u8) -> Result<Self, SessionError> {
        use StreamId::*;
        Ok(match v {
            0 => JointBus,
            1 => WristCamLeft,
            2 => WristCamRight,
            3 => TactileLeft,
            4 => TactileRight,
            5 => JointState,
            6 => Action,
            other => return Err(SessionError::UnknownStream(other)),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            StreamId::JointBus => "joint-bus",
            StreamId::WristCamLeft => "wrist-cam-left",
            StreamId::WristCamRight => "wrist-cam-right",
            StreamId::TactileLeft => "tactile-left",
            StreamId::TactileRight => "tactile-right",
            StreamId::JointState => "joint-state",
            StreamId::Action => "action",
        }
    }

    /// Source id written into image frame headers on this stream.
    pub fn frame_id(self) -> Option<u8> {
        match self {
            StreamId::WristCamLeft => Some(0x20),
            StreamId::WristCamRight => Some(0x21),
            StreamId::TactileLeft => Some(0x10),
            StreamId::TactileRight => Some(0x11),
            _ => None,
        }
    }

    fn payload_kind(self) -> &'static str {
        match self {
            StreamId::JointBus => "encoder-frames",
            StreamId::WristCamLeft | StreamId::WristCamRight => "image",
            StreamId::TactileLeft | StreamId::TactileRight => "super-image",
            StreamId::JointState => "step-state",
            StreamId::Action => "f64x22",
        }
    }

    pub fn info(self) -> StreamInfo {
        StreamInfo {
            id: self as u8,
            name: self.name().to_owned(),
            payload: self.payload_kind().to_owned(),
        }
    }
}

impl std::fmt::Display for StreamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StreamId {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        (0..=6)
            .map(|v| StreamId::from_u8(v).unwrap())
            .find(|id| id.name() == s)
            .ok_or_else(|| SessionError::Invalid(format!("unknown stream `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sample {
    pub stream: StreamId,
    pub timestamp_ns: u64,
    pub payload: Vec<u8>,
}

/// Canonical names of the 22 joint channels.
pub fn joint_names() -> Vec<String> {
    let mut names = Vec::with_capacity(JOINT_COUNT);
    for side in ["left", "right"] {
        names.extend((0..4).map(|i| format!("{side}-arm.{i}")));
    }
    for side in ["left", "right"] {
        names.extend((0..7).map(|i| format!("{side}-hand.{i}")));
    }
    names
}

/// Encodes 22 angles as one joint-bus payload.
pub fn encode_joint_payload(angles: &[f64], channels: &[JointChannel], seq: u8) -> Result<Vec<u8>, SessionError> {
    if angles.len() != JOINT_COUNT || channels.len() != JOINT_COUNT {
        return Err(SessionError::Invalid(format!(
            "need {JOINT_COUNT} angles and channels, got {} and {}",
            angles.len(),
            channels.len()
        )));
    }
    let mut out = Vec::with_capacity(JOINT_COUNT * FRAME_LEN);
    for (i, (&a, ch)) in angles.iter().zip(channels).enumerate() {
        let count = radians_to_count(a, &ch.spec());
        out.extend_from_slice(&EncoderFrame::new(i as u8, count, seq)?.to_bytes());
    }
    Ok(out)
}

/// Decodes a joint-bus payload into 22 angles. Every joint id must appear
/// exactly once with a valid CRC.
pub fn decode_joint_payload(payload: &[u8], channels: &[JointChannel]) -> Result<Vec<f64>, SessionError> {
    let (frames, diag) = parse_encoder_frames(payload);
    if diag.crc_failures > 0 {
        return Err(SessionError::Malformed(format!("{} joint frames failed CRC", diag.crc_failures)));
    }
    let mut angles = vec![None; JOINT_COUNT];
    for f in frames {
        let slot = angles
            .get_mut(f.joint as usize)
            .ok_or_else(|| SessionError::Malformed(format!("joint id {} out of range", f.joint)))?;
        if slot.is_some() {
            return Err(SessionError::Malformed(format!("joint id {} repeated", f.joint)));
        }
        let ch = channels
            .get(f.joint as usize)
            .ok_or_else(|| SessionError::Malformed(format!("no calibration for joint {}", f.joint)))?;
        *slot = Some(count_to_radians(f.count, &ch.spec())?);
    }
    angles
        .into_iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| SessionError::Malformed(format!("joint id {i} missing"))))
        .collect()
}
