use std::path::PathBuf;

use clap::{Args, Subcommand};
use periop::export::{format_mean_sem, mix_manifest, normalized_success, stage_time_stats, throughput, Manifest, SourceBatch, SourceTag, Trial, DEFAULT_CAP_S};
use serde::Deserialize;

use crate::{float_list, usage, Cell, Ctx, Table};

#[derive(Debug, Subcommand)]
pub enum MetricsCmd {
    /// Successful completions per minute. Input CSV: success,time_s.
    Throughput(ThroughputArgs),
    /// Normalized cumulative success over six stage rates.
    Success(SuccessArgs),
    /// Per-stage mean and SEM. Input CSV: one trial per line, stage durations in order.
    Stages(StagesArgs),
    /// Collection minutes per data source.
    Manifest(ManifestArgs),
}

#[derive(Debug, Args)]
pub struct ThroughputArgs {
    #[arg(long)]
    pub trials: PathBuf,
    /// Successes slower than this count as failures, seconds.
    #[arg(long, default_value_t = DEFAULT_CAP_S)]
    pub cap_s: f64,
}

#[derive(Debug, Args)]
pub struct SuccessArgs {
    /// Six comma-separated stage success rates in [0, 1].
    #[arg(long)]
    pub rates: String,
    /// Optional SEM to print next to the value.
    #[arg(long)]
    pub sem: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StagesArgs {
    #[arg(long)]
    pub trials: PathBuf,
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    /// Line-delimited `{path, source, duration_s}` records.
    #[arg(long, conflicts_with_all = ["periop", "teleop"])]
    pub manifest: Option<PathBuf>,
    /// `COUNT@SECONDS` perioperation demonstrations.
    #[arg(long)]
    pub periop: Option<String>,
    /// `COUNT@SECONDS` teleoperation demonstrations.
    #[arg(long)]
    pub teleop: Option<String>,
}

#[derive(Debug, Deserialize)]
struct TrialRow {
    success: String,
    time_s: f64,
}

fn truthy(s: &str) -> anyhow::Result<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "success" => Ok(true),
        "0" | "false" | "no" | "failure" => Ok(false),
        other => Err(usage(format!("`{other}` is not a success flag"))),
    }
}

fn batch(raw: Option<&str>) -> anyhow::Result<SourceBatch> {
    let Some(raw) = raw else {
        return Ok(SourceBatch { count: 0, per_demo_s: 0.0 });
    };
    let (n, s) = raw.split_once('@').ok_or_else(|| usage(format!("expected COUNT@SECONDS, got `{raw}`")))?;
    Ok(SourceBatch {
        count: n.trim().parse().map_err(|_| usage(format!("bad count `{n}`")))?,
        per_demo_s: s.trim().parse().map_err(|_| usage(format!("bad duration `{s}`")))?,
    })
}

fn manifest_table(m: &Manifest) -> Table {
    let mut t = Table::new(&["source", "count", "minutes"]);
    for tag in [SourceTag::Perioperation, SourceTag::Teleoperation] {
        t.push(vec![tag.to_string().into(), m.counts[&tag].into(), Cell::Fixed(m.minutes[&tag], 1)]);
    }
    t.push(vec!["total".into(), m.counts.values().sum::<usize>().into(), Cell::Fixed(m.total_minutes, 1)]);
    t
}

pub fn run(cmd: MetricsCmd, ctx: &mut Ctx) -> anyhow::Result<()> {
    match cmd {
        MetricsCmd::Throughput(a) => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(ctx.input(&a.trials))?;
            let trials = rdr
                .deserialize::<TrialRow>()
                .map(|r| {
                    let r = r?;
                    Ok(Trial {
                        success: truthy(&r.success)?,
                        time_s: r.time_s,
                    })
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let r = throughput(&trials, a.cap_s)?;
            let mut t = Table::new(&["per_minute", "successes", "failures", "reclassified", "mean_success_s"]);
            t.push(vec![r.per_minute.into(), r.successes.into(), r.failures.into(), r.reclassified.into(), r.mean_success_s.into()]);
            ctx.emit(&t)
        }
        MetricsCmd::Success(a) => {
            let r = normalized_success(&float_list(&a.rates)?)?;
            let mut t = Table::new(&["value", "monotone", "report"]);
            let report = a.sem.map(|s| format_mean_sem(r.value, s)).unwrap_or_else(|| format!("{:.3}", r.value));
            t.push(vec![r.value.into(), r.monotone.into(), report.into()]);
            ctx.emit(&t)?;
            for w in &r.warnings {
                ctx.note(format!("warning: {w}"));
            }
            Ok(())
        }
        MetricsCmd::Stages(a) => {
            let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_path(ctx.input(&a.trials))?;
            let mut trials = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                let row = rec
                    .iter()
                    .filter(|f| !f.is_empty())
                    .map(|f| f.parse::<f64>().map_err(|_| usage(format!("`{f}` is not a duration"))))
                    .collect::<anyhow::Result<Vec<_>>>()?;
                trials.push(row);
            }
            let mut t = Table::new(&["stage", "n", "mean_s", "sem_s", "report"]);
            for s in stage_time_stats(&trials)? {
                t.push(vec![s.stage.into(), s.n.into(), s.mean.into(), s.sem.into(), format_mean_sem(s.mean, s.sem).into()]);
            }
            ctx.emit(&t)
        }
        MetricsCmd::Manifest(a) => {
            let m = match &a.manifest {
                Some(path) => Manifest::from_jsonl(&std::fs::read_to_string(ctx.input(path))?)?,
                None if a.periop.is_none() && a.teleop.is_none() => return Err(usage("give --manifest or --periop/--teleop")),
                None => mix_manifest(batch(a.periop.as_deref())?, batch(a.teleop.as_deref())?),
            };
            ctx.emit(&manifest_table(&m))
        }
    }
}
