use clap::{Args, Subcommand};
use periop::hand::{workspace_report, HandModel};

use crate::{Cell, Ctx, Table};

#[derive(Debug, Subcommand)]
pub enum ModelCmd {
    /// Fingers, segment lengths and joint axes.
    Info(ModelArgs),
    /// Per-joint range of motion and peak speed.
    Workspace(ModelArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Preset name (DEXOP-12, DEXOP-9, DEXOP-7) or a config file path.
    #[arg(long, default_value = "DEXOP-7")]
    pub model: String,
}

pub(crate) fn load(ctx: &Ctx, spec: &str) -> anyhow::Result<HandModel> {
    let resolved = if spec.parse::<periop::hand::Variant>().is_ok() {
        spec.to_owned()
    } else {
        ctx.input(std::path::Path::new(spec)).to_string_lossy().into_owned()
    };
    Ok(HandModel::from_spec(&resolved)?)
}

pub fn run(cmd: ModelCmd, ctx: &mut Ctx) -> anyhow::Result<()> {
    match cmd {
        ModelCmd::Info(a) => {
            let model = load(ctx, &a.model)?;
            let mut t = Table::new(&["variant", "joint", "kind", "axis_x", "axis_y", "axis_z", "proximal_mm", "distal_mm"]);
            for finger in &model.fingers {
                for j in &finger.joints {
                    let axis = j.axis.into_inner();
                    t.push(vec![
                        model.variant.name().into(),
                        j.id.clone().into(),
                        j.kind.label().into(),
                        Cell::Fixed(axis.x, 6),
                        Cell::Fixed(axis.y, 6),
                        Cell::Fixed(axis.z, 6),
                        Cell::Fixed(finger.proximal_length * 1000.0, 3),
                        Cell::Fixed(finger.distal_length * 1000.0, 3),
                    ]);
                }
            }
            ctx.emit(&t)
        }
        ModelCmd::Workspace(a) => {
            let model = load(ctx, &a.model)?;
            let mut t = Table::new(&["joint", "kind", "min_deg", "max_deg", "range_deg", "max_speed_rad_s"]);
            for row in workspace_report(&model) {
                t.push(vec![
                    row.joint.into(),
                    row.kind.label().into(),
                    row.min_deg.into(),
                    row.max_deg.into(),
                    row.range_deg.into(),
                    row.max_speed.into(),
                ]);
            }
            ctx.emit(&t)
        }
    }
}
