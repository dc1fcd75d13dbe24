use std::fmt;
use std::io::{Read, Seek, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExportError;
use crate::session::{AlignedStep, FileKind, Header, Sample, SessionReader, SessionWriter, StreamId, ARM_JOINTS, HAND_JOINTS, JOINT_COUNT};
use crate::tactile::{decode_frame, encode_frame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Perioperation,
    Teleoperation,
}

impl fmt::Display for SourceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceTag::Perioperation => "perioperation",
            SourceTag::Teleoperation => "teleoperation",
        })
    }
}

impl FromStr for SourceTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perioperation" | "periop" => Ok(SourceTag::Perioperation),
            "teleoperation" | "teleop" => Ok(SourceTag::Teleoperation),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub arm_delta: [f64; ARM_JOINTS],
    pub hand: [f64; HAND_JOINTS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub task: String,
    pub source: SourceTag,
    pub horizon: usize,
    pub steps: Vec<AlignedStep>,
    pub actions: Vec<Action>,
}

impl Episode {
    pub fn duration_s(&self) -> f64 {
        match (self.steps.first(), self.steps.last()) {
            (Some(a), Some(b)) => (b.timestamp_ns - a.timestamp_ns) as f64 * 1e-9,
            _ => 0.0,
        }
    }
}

pub fn export_episode(steps: &[AlignedStep], horizon: usize, source: SourceTag, task: &str) -> Result<Episode, ExportError> {
    if steps.len() < 2 {
        return Err(ExportError::TooShort(steps.len()));
    }
    if horizon == 0 {
        return Err(ExportError::BadHorizon);
    }
    if let Some(s) = steps.iter().find(|s| s.joints.len() != JOINT_COUNT) {
        return Err(ExportError::Malformed(format!("step at {} has {} joints", s.timestamp_ns, s.joints.len())));
    }
    let last = steps.len() - 1;
    let actions = (0..steps.len())
        .map(|t| {
            let ahead = &steps[(t + horizon).min(last)];
            let next = &steps[(t + 1).min(last)];
            Action {
                arm_delta: std::array::from_fn(|j| ahead.joints[j] - steps[t].joints[j]),
                hand: std::array::from_fn(|j| next.joints[ARM_JOINTS + j]),
            }
        })
        .collect();
    Ok(Episode {
        task: task.to_owned(),
        source,
        horizon,
        steps: steps.to_vec(),
        actions,
    })
}

fn f64s(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}

/// `session` supplies the variant and joint calibration for provenance.
pub fn write_episode<W: Write>(out: W, ep: &Episode, session: &Header) -> Result<W, ExportError> {
    let mut h = session.clone();
    h.kind = FileKind::Episode;
    h.streams = [StreamId::JointState, StreamId::Action]
        .iter()
        .chain(&StreamId::SESSION[1..])
        .map(|s| s.info())
        .collect();
    h.meta.insert("task".into(), ep.task.clone());
    h.meta.insert("source".into(), ep.source.to_string());
    h.meta.insert("horizon".into(), ep.horizon.to_string());
    h.meta.insert("duration_s".into(), format!("{}", ep.duration_s()));
    let mut w = SessionWriter::new(out, h)?;
    for (step, action) in ep.steps.iter().zip(&ep.actions) {
        let ts = step.timestamp_ns;
        let mut state = Vec::with_capacity(5 * 8 + JOINT_COUNT * 8);
        for s in step.source_ts {
            state.extend_from_slice(&s.to_le_bytes());
        }
        for a in &step.joints {
            state.extend_from_slice(&a.to_le_bytes());
        }
        let act: Vec<u8> = action.arm_delta.iter().chain(&action.hand).flat_map(|v| v.to_le_bytes()).collect();
        w.write(&Sample {
            stream: StreamId::JointState,
            timestamp_ns: ts,
            payload: state,
        })?;
        w.write(&Sample {
            stream: StreamId::Action,
            timestamp_ns: ts,
            payload: act,
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
    Ok(w.finish(&Default::default())?)
}

pub fn read_episode<R: Read + Seek>(reader: &mut SessionReader<R>) -> Result<Episode, ExportError> {
    let h = reader.header().clone();
    if h.kind != FileKind::Episode {
        return Err(ExportError::Malformed("file is a session, not an episode".into()));
    }
    let meta = |k: &str| h.meta.get(k).cloned().ok_or_else(|| ExportError::Malformed(format!("missing `{k}`")));
    let source = meta("source")?.parse().map_err(ExportError::Malformed)?;
    let horizon = meta("horizon")?.parse().map_err(|_| ExportError::Malformed("bad horizon".into()))?;
    let task = meta("task")?;
    let samples = reader.samples()?;
    let mut steps = Vec::with_capacity(samples.len() / 6);
    let mut actions = Vec::with_capacity(samples.len() / 6);
    for group in samples.chunks(6) {
        let order: Vec<_> = group.iter().map(|s| s.stream).collect();
        let expected = [StreamId::JointState, StreamId::Action, StreamId::WristCamLeft, StreamId::WristCamRight, StreamId::TactileLeft, StreamId::TactileRight];
        if order != expected || group.iter().any(|s| s.timestamp_ns != group[0].timestamp_ns) {
            return Err(ExportError::Malformed(format!("step at {} is incomplete", group[0].timestamp_ns)));
        }
        let state = &group[0].payload;
        let act = f64s(&group[1].payload);
        if state.len() != 40 + JOINT_COUNT * 8 || act.len() != JOINT_COUNT {
            return Err(ExportError::Malformed(format!("step at {} has bad vector sizes", group[0].timestamp_ns)));
        }
        let image = |s: &Sample| decode_frame(&s.payload).map(|(_, _, img)| img).map_err(|e| ExportError::Malformed(e.to_string()));
        steps.push(AlignedStep {
            timestamp_ns: group[0].timestamp_ns,
            joints: f64s(&state[40..]),
            wrist: [image(&group[2])?, image(&group[3])?],
            tactile: [image(&group[4])?, image(&group[5])?],
            source_ts: std::array::from_fn(|k| u64::from_le_bytes(state[k * 8..k * 8 + 8].try_into().unwrap())),
        });
        actions.push(Action {
            arm_delta: act[..ARM_JOINTS].try_into().unwrap(),
            hand: act[ARM_JOINTS..].try_into().unwrap(),
        });
    }
    Ok(Episode {
        task,
        source,
        horizon,
        steps,
        actions,
    })
}
