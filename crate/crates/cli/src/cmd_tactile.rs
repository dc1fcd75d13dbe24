use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use periop::tactile::{contact_summary, decode_frame, delta, super_delta, synth_press, DeltaImage, Hand, SensorId, SuperImage, SynthParams, TactileFrame};

use crate::{usage, Cell, Ctx, Table};

#[derive(Debug, Subcommand)]
pub enum TactileCmd {
    /// Synthetic press on one sensor, written as a binary frame.
    Synth(SynthArgs),
    /// Contact mask statistics of `current - initial`.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// thumb-distal, index-distal, middle-distal, thumb-proximal, index-proximal, middle-proximal or palm.
    #[arg(long, default_value = "index-distal")]
    pub sensor: String,
    #[arg(long, default_value_t = 60.0)]
    pub row: f64,
    #[arg(long, default_value_t = 80.0)]
    pub col: f64,
    /// Newtons; 0 gives a contact-free baseline.
    #[arg(long, default_value_t = 10.0)]
    pub force: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = periop::tactile::DEFAULT_HEIGHT)]
    pub height: usize,
    #[arg(long, default_value_t = periop::tactile::DEFAULT_WIDTH)]
    pub width: usize,
    #[arg(long, default_value_t = 0)]
    pub timestamp_ns: u64,
    /// Binary frame output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a PPM image for viewing.
    #[arg(long)]
    pub ppm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub current: PathBuf,
    #[arg(long)]
    pub initial: PathBuf,
    #[arg(long, default_value_t = periop::tactile::DEFAULT_THRESHOLD)]
    pub threshold: u8,
}

fn super_hand(id: u8) -> Option<Hand> {
    [Hand::Left, Hand::Right].into_iter().find(|h| h.super_image_id() == id)
}

fn delta_of(current: &[u8], initial: &[u8]) -> anyhow::Result<DeltaImage> {
    let (id, _, _) = decode_frame(current)?;
    if let Some(hand) = super_hand(id) {
        let as_super = |bytes: &[u8]| -> anyhow::Result<SuperImage> {
            let (id, timestamp_ns, image) = decode_frame(bytes)?;
            if super_hand(id) != Some(hand) {
                anyhow::bail!("frames come from different sources ({id:#x})");
            }
            Ok(SuperImage { hand, timestamp_ns, image })
        };
        return Ok(super_delta(&as_super(current)?, &as_super(initial)?)?);
    }
    Ok(delta(&TactileFrame::from_bytes(current)?, &TactileFrame::from_bytes(initial)?)?)
}

fn read(ctx: &Ctx, path: &Path) -> anyhow::Result<Vec<u8>> {
    let p = ctx.input(path);
    std::fs::read(&p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))
}

pub fn run(cmd: TactileCmd, ctx: &mut Ctx) -> anyhow::Result<()> {
    match cmd {
        TactileCmd::Synth(a) => {
            let sensor: SensorId = a.sensor.parse().map_err(usage)?;
            let params = SynthParams {
                height: a.height,
                width: a.width,
                timestamp_ns: a.timestamp_ns,
                ..SynthParams::default()
            };
            let frame = synth_press(sensor, a.row, a.col, a.force, a.seed, &params)?;
            let out = ctx.output(&a.out);
            std::fs::write(&out, frame.to_bytes())?;
            if let Some(ppm) = &a.ppm {
                frame.image.write_ppm(BufWriter::new(File::create(ctx.output(ppm))?))?;
            }
            let peak = frame.image.data.iter().copied().max().unwrap_or(0);
            let mut t = Table::new(&["path", "sensor", "timestamp_ns", "height", "width", "peak"]);
            t.push(vec![
                out.display().to_string().into(),
                sensor.name().into(),
                a.timestamp_ns.into(),
                a.height.into(),
                a.width.into(),
                Cell::Uint(peak as u64),
            ]);
            ctx.emit(&t)
        }
        TactileCmd::Summarize(a) => {
            let d = delta_of(&read(ctx, &a.current)?, &read(ctx, &a.initial)?)?;
            let s = contact_summary(&d, a.threshold);
            let mut t = Table::new(&["in_contact", "count", "centroid_row", "centroid_col", "activation"]);
            t.push(vec![
                s.in_contact().into(),
                s.count.into(),
                s.centroid.map(|c| Cell::Fixed(c.0, 3)).unwrap_or(Cell::Empty),
                s.centroid.map(|c| Cell::Fixed(c.1, 3)).unwrap_or(Cell::Empty),
                Cell::Fixed(s.activation, 6),
            ]);
            ctx.emit(&t)
        }
    }
}
