use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, ValueEnum};
use periop::session::synth::{self, SynthConfig};
use periop::session::{
    joint_names, record_to_path, write_aligned, AlignOptions, FileSource, Overflow, RecordOptions, RecordSummary, SessionReader, StreamId,
};
use periop::tactile::decode_frame;

use crate::{usage, Cell, Ctx, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OverflowArg {
    Block,
    Drop,
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    /// Output file; defaults to `session-<seed>.prx`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Re-record the streams of an existing session instead of synthesizing.
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20.0)]
    pub rate: f64,
    /// Timestamp jitter bound of the synthetic streams, each side.
    #[arg(long, default_value_t = 10.0)]
    pub jitter_ms: f64,
    #[arg(long, default_value = "DEXOP-7")]
    pub variant: String,
    #[arg(long, value_enum, default_value_t = OverflowArg::Block)]
    pub overflow: OverflowArg,
    #[arg(long, default_value_t = 64)]
    pub queue_depth: usize,
    #[arg(long, default_value_t = 500)]
    pub stall_ms: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub session: PathBuf,
    /// Only this stream.
    #[arg(long)]
    pub stream: Option<String>,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    pub session: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    pub rate: f64,
    /// Also write the aligned steps as a session file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub file: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub file: PathBuf,
}

fn summary_table(path: &std::path::Path, summary: &RecordSummary) -> Table {
    let mut t = Table::new(&["path", "stream", "written", "dropped", "first_ts_ns", "last_ts_ns"]);
    for (id, s) in &summary.streams {
        t.push(vec![
            path.display().to_string().into(),
            id.name().into(),
            s.written.into(),
            s.dropped.into(),
            s.first_ts.into(),
            s.last_ts.into(),
        ]);
    }
    t
}

pub fn record(a: RecordArgs, ctx: &mut Ctx) -> anyhow::Result<()> {
    if !(a.duration_s.is_finite() && a.duration_s > 0.0) {
        return Err(usage("--duration-s must be positive"));
    }
    if !(a.jitter_ms.is_finite() && a.jitter_ms >= 0.0) {
        return Err(usage("--jitter-ms must be non-negative"));
    }
    let duration_ns = (a.duration_s * 1e9).round() as u64;
    let (header, sources) = match &a.from {
        Some(path) => FileSource::open_all(ctx.input(path))?,
        None => {
            let cfg = SynthConfig {
                duration_ns,
                rate_hz: a.rate,
                jitter_ns: (a.jitter_ms * 1e6).round() as u64,
                seed: a.seed,
                variant: a.variant.clone(),
                ..SynthConfig::default()
            };
            (synth::header(&cfg), synth::sources(&cfg)?)
        }
    };
    let path = ctx.output(&a.out.clone().unwrap_or_else(|| PathBuf::from(format!("session-{}.prx", a.seed))));
    let opts = RecordOptions {
        stall_timeout: Duration::from_millis(a.stall_ms),
        queue_depth: a.queue_depth,
        overflow: match a.overflow {
            OverflowArg::Block => Overflow::Block,
            OverflowArg::Drop => Overflow::Drop,
        },
        duration_ns: Some(duration_ns),
        ..RecordOptions::default()
    };
    match record_to_path(sources, header, &path, &opts) {
        Ok(summary) => ctx.emit(&summary_table(&path, &summary)),
        Err(failure) => {
            ctx.emit(&summary_table(&path, &failure.summary))?;
            Err(failure.error.into())
        }
    }
}

pub fn replay(a: ReplayArgs, ctx: &mut Ctx) -> anyhow::Result<()> {
    let only: Option<StreamId> = a.stream.as_deref().map(str::parse).transpose().map_err(|e: periop::session::SessionError| usage(e.to_string()))?;
    let mut reader = SessionReader::open(ctx.input(&a.session))?;
    let mut t = Table::new(&["stream", "timestamp_ns", "bytes", "height", "width"]);
    for s in reader.samples()? {
        if only.is_some_and(|id| id != s.stream) {
            continue;
        }
        let dims = if s.stream.frame_id().is_some() {
            let (_, _, img) = decode_frame(&s.payload)?;
            (Cell::from(img.height), Cell::from(img.width))
        } else {
            (Cell::Empty, Cell::Empty)
        };
        t.push(vec![s.stream.name().into(), s.timestamp_ns.into(), s.payload.len().into(), dims.0, dims.1]);
    }
    ctx.emit(&t)
}

pub fn align(a: AlignArgs, ctx: &mut Ctx) -> anyhow::Result<()> {
    let mut reader = SessionReader::open(ctx.input(&a.session))?;
    let aligned = periop::session::align(&mut reader, &AlignOptions { rate_hz: a.rate })?;
    if let Some(out) = &a.out {
        let path = ctx.output(out);
        let w = write_aligned(BufWriter::new(File::create(&path)?), reader.header(), &aligned.steps)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    let mut columns = vec!["step".to_owned(), "timestamp_ns".to_owned(), "max_skew_ms".to_owned()];
    columns.extend(joint_names());
    let mut t = Table::with_columns(columns);
    for (i, s) in aligned.steps.iter().enumerate() {
        let mut row: Vec<Cell> = vec![i.into(), s.timestamp_ns.into(), Cell::Fixed(s.max_skew_ns() as f64 / 1e6, 3)];
        row.extend(s.joints.iter().map(|&q| Cell::Fixed(q, 9)));
        t.push(row);
    }
    ctx.emit(&t)?;
    ctx.note(format!("{} steps, {} dropped ticks", aligned.steps.len(), aligned.dropped));
    Ok(())
}

pub fn inspect(a: InspectArgs, ctx: &mut Ctx) -> anyhow::Result<()> {
    let reader = SessionReader::open(ctx.input(&a.file))?;
    let h = reader.header();
    let kind = serde_json::to_value(h.kind)?;
    let mut per: BTreeMap<StreamId, (u64, Option<u64>, Option<u64>)> = BTreeMap::new();
    for info in &h.streams {
        per.insert(StreamId::from_u8(info.id)?, (0, None, None));
    }
    for e in reader.index() {
        let slot = per.entry(e.stream).or_default();
        slot.0 += 1;
        slot.1.get_or_insert(e.timestamp_ns);
        slot.2 = Some(e.timestamp_ns);
    }
    let mut t = Table::new(&["kind", "variant", "rate_hz", "stream", "samples", "first_ts_ns", "last_ts_ns", "dropped"]);
    for (id, (n, first, last)) in per {
        t.push(vec![
            kind.as_str().unwrap_or_default().into(),
            h.variant.clone().into(),
            h.rate_hz.into(),
            id.name().into(),
            n.into(),
            first.into(),
            last.into(),
            reader.drops().get(&id).copied().unwrap_or(0).into(),
        ]);
    }
    ctx.emit(&t)
}

pub fn validate(a: ValidateArgs, ctx: &mut Ctx) -> anyhow::Result<()> {
    let path = ctx.input(&a.file);
    let report = periop::session::validate(&path)?;
    let mut t = Table::new(&["path", "chunks", "records", "problems", "status"]);
    t.push(vec![
        path.display().to_string().into(),
        report.chunks.into(),
        report.records.into(),
        report.problems.len().into(),
        if report.is_ok() { "ok" } else { "corrupt" }.into(),
    ]);
    ctx.emit(&t)?;
    for p in &report.problems {
        ctx.note(p);
    }
    if !report.is_ok() {
        anyhow::bail!("{} failed validation", path.display());
    }
    Ok(())
}
