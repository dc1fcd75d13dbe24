use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ExportError, SourceTag};

/// Trials longer than this count as failures.
pub const DEFAULT_CAP_S: f64 = 180.0;
const STAGES: usize = 6;

/// Neumaier-compensated sum.
fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + c
}

/// Order-independent sum: sorted, then compensated.
fn sorted_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    sum(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub success: bool,
    pub time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputReport {
    /// `60 / mean success time`; zero without successes.
    pub per_minute: f64,
    pub successes: usize,
    pub failures: usize,
    /// Successes longer than the cap, now counted as failures.
    pub reclassified: usize,
    pub mean_success_s: Option<f64>,
}

pub fn throughput(trials: &[Trial], cap_s: f64) -> Result<ThroughputReport, ExportError> {
    if trials.is_empty() {
        return Err(ExportError::EmptyInput);
    }
    if let Some(t) = trials.iter().find(|t| !(t.time_s.is_finite() && t.time_s > 0.0)) {
        return Err(ExportError::InvalidTime(t.time_s));
    }
    let times: Vec<f64> = trials.iter().filter(|t| t.success && t.time_s <= cap_s).map(|t| t.time_s).collect();
    let reclassified = trials.iter().filter(|t| t.success && t.time_s > cap_s).count();
    let mean = (!times.is_empty()).then(|| sorted_sum(&times) / times.len() as f64);
    Ok(ThroughputReport {
        per_minute: mean.map_or(0.0, |m| 60.0 / m),
        successes: times.len(),
        failures: trials.len() - times.len(),
        reclassified,
        mean_success_s: mean,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessReport {
    pub value: f64,
    /// Cumulative rates should not increase from one stage to the next.
    pub monotone: bool,
    pub warnings: Vec<String>,
}

/// `(S1 + ... + S6) / 6`.
pub fn normalized_success(rates: &[f64]) -> Result<SuccessReport, ExportError> {
    if rates.len() != STAGES {
        return Err(ExportError::WrongStageCount(rates.len()));
    }
    if let Some((i, &v)) = rates.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(ExportError::RateOutOfRange { stage: i + 1, value: v });
    }
    let warnings: Vec<String> = rates
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0])
        .map(|(i, w)| format!("stage {} rate {} exceeds stage {} rate {}", i + 2, w[1], i + 1, w[0]))
        .collect();
    Ok(SuccessReport {
        value: sorted_sum(rates) / STAGES as f64,
        monotone: warnings.is_empty(),
        warnings,
    })
}

/// `0.513±0.032`.
pub fn format_mean_sem(mean: f64, sem: f64) -> String {
    format!("{mean:.3}±{sem:.3}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageStats {
    pub stage: usize,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; zero when `n == 1`.
    pub sem: f64,
    /// Set when `n == 1` and the SEM is undefined.
    pub single: bool,
}

/// Per-stage mean and SEM. Each trial lists its stage durations in
/// order; a trial that failed early simply has fewer entries.
pub fn stage_time_stats(trials: &[Vec<f64>]) -> Result<Vec<StageStats>, ExportError> {
    let stages = trials.iter().map(Vec::len).max().unwrap_or(0);
    if stages == 0 {
        return Err(ExportError::EmptyStage(1));
    }
    if let Some(&t) = trials.iter().flatten().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(ExportError::InvalidTime(t));
    }
    (0..stages)
        .map(|i| {
            let v: Vec<f64> = trials.iter().filter_map(|t| t.get(i).copied()).collect();
            let n = v.len();
            let mean = sorted_sum(&v) / n as f64;
            let sem = if n > 1 {
                let ss = sorted_sum(&v.iter().map(|x| (x - mean).powi(2)).collect::<Vec<_>>());
                (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
            } else {
                0.0
            };
            Ok(StageStats {
                stage: i + 1,
                n,
                mean,
                sem,
                single: n == 1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub path: String,
    pub source: SourceTag,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceBatch {
    pub count: usize,
    pub per_demo_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    pub counts: BTreeMap<SourceTag, usize>,
    pub minutes: BTreeMap<SourceTag, f64>,
    pub total_minutes: f64,
}

impl Manifest {
    pub fn from_records(records: Vec<ManifestRecord>) -> Self {
        let mut counts = BTreeMap::new();
        let mut minutes = BTreeMap::new();
        for tag in [SourceTag::Perioperation, SourceTag::Teleoperation] {
            let d: Vec<f64> = records.iter().filter(|r| r.source == tag).map(|r| r.duration_s).collect();
            counts.insert(tag, d.len());
            minutes.insert(tag, sum(d) / 60.0);
        }
        let total_minutes = sum(records.iter().map(|r| r.duration_s)) / 60.0;
        Self {
            records,
            counts,
            minutes,
            total_minutes,
        }
    }

    /// One JSON object per line: `{"path", "source", "duration_s"}`.
    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ExportError> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| ExportError::Malformed(format!("manifest line {}: {e}", i + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_records(records))
    }
}

/// Collection-time accounting for a mixed dataset without per-episode
/// records: minutes per source are `count * per_demo_s / 60`.
pub fn mix_manifest(periop: SourceBatch, teleop: SourceBatch) -> Manifest {
    let p = periop.count as f64 * periop.per_demo_s;
    let t = teleop.count as f64 * teleop.per_demo_s;
    Manifest {
        records: Vec::new(),
        counts: BTreeMap::from([(SourceTag::Perioperation, periop.count), (SourceTag::Teleoperation, teleop.count)]),
        minutes: BTreeMap::from([(SourceTag::Perioperation, p / 60.0), (SourceTag::Teleoperation, t / 60.0)]),
        total_minutes: (p + t) / 60.0,
    }
}
