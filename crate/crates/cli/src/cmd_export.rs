use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use periop::export::{augment as augment_episode, export_episode, read_episode, write_episode, AugmentConfig, ManifestRecord, SourceTag};
use periop::session::{AlignOptions, SessionReader};

use crate::{usage, Cell, Ctx, Table};

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub session: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Arm targets are `arm(t + k) - arm(t)`.
    #[arg(long, default_value_t = 1)]
    pub chunks: usize,
    /// perioperation or teleoperation.
    #[arg(long, default_value = "perioperation")]
    pub source: String,
    #[arg(long, default_value = "task")]
    pub task: String,
    #[arg(long, default_value_t = 20.0)]
    pub rate: f64,
    /// Append a `{path, source, duration_s}` line to this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    pub episode: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub brightness: f64,
    #[arg(long, default_value_t = 0.1)]
    pub hue: f64,
    #[arg(long, default_value_t = 10.0)]
    pub joint_noise_deg: f64,
    #[arg(long, default_value_t = 0.1)]
    pub joint_noise_prob: f64,
    #[arg(long, default_value_t = 0.3)]
    pub wrist_dropout: f64,
}

fn write_file(path: &std::path::Path, write: impl FnOnce(BufWriter<File>) -> anyhow::Result<BufWriter<File>>) -> anyhow::Result<()> {
    let w = write(BufWriter::new(File::create(path)?))?;
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    Ok(())
}

pub fn export(a: ExportArgs, ctx: &mut Ctx) -> anyhow::Result<()> {
    let source: SourceTag = a.source.parse().map_err(usage)?;
    if a.chunks == 0 {
        return Err(usage("--chunks must be at least 1"));
    }
    let mut reader = SessionReader::open(ctx.input(&a.session))?;
    let aligned = periop::session::align(&mut reader, &AlignOptions { rate_hz: a.rate })?;
    let ep = export_episode(&aligned.steps, a.chunks, source, &a.task)?;
    let path = ctx.output(&a.out);
    write_file(&path, |w| Ok(write_episode(w, &ep, reader.header())?))?;
    if let Some(m) = &a.manifest {
        let record = ManifestRecord {
            path: path.display().to_string(),
            source,
            duration_s: ep.duration_s(),
        };
        let mut f = OpenOptions::new().create(true).append(true).open(ctx.output(m))?;
        writeln!(f, "{}", serde_json::to_string(&record)?)?;
    }
    let mut t = Table::new(&["path", "source", "task", "steps", "horizon", "duration_s"]);
    t.push(vec![
        path.display().to_string().into(),
        source.to_string().into(),
        ep.task.clone().into(),
        ep.steps.len().into(),
        ep.horizon.into(),
        ep.duration_s().into(),
    ]);
    ctx.emit(&t)
}

pub fn augment(a: AugmentArgs, ctx: &mut Ctx) -> anyhow::Result<()> {
    let input = ctx.input(&a.episode);
    let out = ctx.output(&a.out);
    if input == out {
        return Err(usage("augment never overwrites its input; choose another --out"));
    }
    let mut reader = SessionReader::open(&input)?;
    let ep = read_episode(&mut reader)?;
    let cfg = AugmentConfig {
        brightness: a.brightness,
        hue: a.hue,
        joint_noise_deg: a.joint_noise_deg,
        joint_noise_prob: a.joint_noise_prob,
        wrist_dropout: a.wrist_dropout,
        seed: a.seed,
    };
    let (aug, stats) = augment_episode(&ep, &cfg)?;
    write_file(&out, |w| Ok(write_episode(w, &aug, reader.header())?))?;
    let mut t = Table::new(&["path", "seed", "steps", "noised_steps", "max_noise_deg", "wrist_images", "dropped_images"]);
    t.push(vec![
        out.display().to_string().into(),
        a.seed.into(),
        stats.steps.into(),
        stats.noised_steps.into(),
        Cell::Fixed(stats.max_noise_rad.to_degrees(), 6),
        stats.wrist_images.into(),
        stats.dropped_images.into(),
    ]);
    ctx.emit(&t)
}
