//! Fixed-rate view of a session.
//!
//! The grid starts at the latest first-sample timestamp over the five
//! streams and runs while it does not pass the earliest last-sample
//! timestamp. Each tick takes, per stream, the sample nearest in time, the
//! earlier one on a tie. A tick is dropped when any chosen sample is more
//! than half a period away.

use std::io::{Read, Seek, Write};

use super::{decode_joint_payload, encode_joint_payload, Header, Sample, SessionError, SessionReader, SessionWriter, StreamId, DEFAULT_RATE_HZ};
use crate::tactile::{decode_frame, encode_frame, Image};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    pub rate_hz: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self { rate_hz: DEFAULT_RATE_HZ }
    }
}

impl AlignOptions {
    pub fn period_ns(&self) -> u64 {
        (1e9 / self.rate_hz).round() as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedStep {
    pub timestamp_ns: u64,
    /// `[left arm 4, right arm 4, left hand 7, right hand 7]`, radians.
    pub joints: Vec<f64>,
    /// Left, right.
    pub wrist: [Image; 2],
    /// Left, right super-images.
    pub tactile: [Image; 2],
    /// Source timestamp per stream, in [`StreamId::SESSION`] order.
    pub source_ts: [u64; 5],
}

impl AlignedStep {
    pub fn arm(&self) -> &[f64] {
        &self.joints[..8]
    }

    pub fn hand(&self) -> &[f64] {
        &self.joints[8..]
    }

    /// Largest `|source - grid|` over the five fields.
    pub fn max_skew_ns(&self) -> u64 {
        self.source_ts.iter().map(|&s| s.abs_diff(self.timestamp_ns)).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub steps: Vec<AlignedStep>,
    pub dropped: usize,
    pub start_ns: u64,
    pub period_ns: u64,
}

pub fn align<R: Read + Seek>(reader: &mut SessionReader<R>, opts: &AlignOptions) -> Result<Alignment, SessionError> {
    let header = reader.header().clone();
    let samples = reader.samples()?;
    align_samples(&header, &samples, opts)
}

/// Nearest sample index by timestamp, ties to the earlier one.
fn nearest(ts: &[u64], g: u64) -> usize {
    let i = ts.partition_point(|&t| t < g);
    if i == 0 {
        0
    } else if i == ts.len() || g - ts[i - 1] <= ts[i] - g {
        i - 1
    } else {
        i
    }
}

fn decode_image(s: &Sample) -> Result<Image, SessionError> {
    let (id, _, image) = decode_frame(&s.payload).map_err(|e| SessionError::Malformed(format!("{} at {}: {e}", s.stream, s.timestamp_ns)))?;
    if Some(id) != s.stream.frame_id() {
        return Err(SessionError::Malformed(format!("{} carries frame id {id:#x}", s.stream)));
    }
    Ok(image)
}

pub fn align_samples(header: &Header, samples: &[Sample], opts: &AlignOptions) -> Result<Alignment, SessionError> {
    if !(opts.rate_hz.is_finite() && opts.rate_hz > 0.0) {
        return Err(SessionError::Invalid(format!("rate {} Hz", opts.rate_hz)));
    }
    let period = opts.period_ns();
    let streams: Vec<Vec<&Sample>> = StreamId::SESSION.iter().map(|&id| samples.iter().filter(|s| s.stream == id).collect()).collect();
    for (id, s) in StreamId::SESSION.iter().zip(&streams) {
        if s.is_empty() {
            return Err(SessionError::MissingStream(*id));
        }
    }
    let times: Vec<Vec<u64>> = streams.iter().map(|s| s.iter().map(|x| x.timestamp_ns).collect()).collect();
    let start = times.iter().map(|t| t[0]).max().unwrap();
    let end = times.iter().map(|t| *t.last().unwrap()).min().unwrap();

    let mut steps = Vec::new();
    let mut dropped = 0;
    let mut g = start;
    while g <= end {
        let picks: Vec<usize> = times.iter().map(|t| nearest(t, g)).collect();
        let within = picks.iter().zip(&times).all(|(&i, t)| 2 * t[i].abs_diff(g) <= period);
        if within {
            let pick = |k: usize| streams[k][picks[k]];
            steps.push(AlignedStep {
                timestamp_ns: g,
                joints: decode_joint_payload(&pick(0).payload, &header.joints)?,
                wrist: [decode_image(pick(1))?, decode_image(pick(2))?],
                tactile: [decode_image(pick(3))?, decode_image(pick(4))?],
                source_ts: std::array::from_fn(|k| times[k][picks[k]]),
            });
        } else {
            dropped += 1;
        }
        g += period;
    }
    Ok(Alignment {
        steps,
        dropped,
        start_ns: start,
        period_ns: period,
    })
}

/// Writes aligned steps back as a session whose samples all sit on the
/// grid. Re-aligning that file at the same rate reproduces the steps.
pub fn write_aligned<W: Write>(out: W, header: &Header, steps: &[AlignedStep]) -> Result<W, SessionError> {
    let mut h = header.clone();
    h.meta.insert("aligned".into(), "true".into());
    let mut w = SessionWriter::new(out, h)?;
    for (i, step) in steps.iter().enumerate() {
        let ts = step.timestamp_ns;
        w.write(&Sample {
            stream: StreamId::JointBus,
            timestamp_ns: ts,
            payload: encode_joint_payload(&step.joints, &header.joints, i as u8)?,
        })?;
        let images = [&step.wrist[0], &step.wrist[1], &step.tactile[0], &step.tactile[1]];
        for (&stream, image) in StreamId::SESSION[1..].iter().zip(images) {
            w.write(&Sample {
                stream,
                timestamp_ns: ts,
                payload: encode_frame(stream.frame_id().unwrap(), ts, image),
            })?;
        }
    }
    w.finish(&Default::default())
}
