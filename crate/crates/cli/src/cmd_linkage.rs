use std::path::PathBuf;

use clap::{Args, Subcommand};
use periop::config::Config;
use periop::linkage::{closure_residual, grashof_check, solve_fourbar, sweep, transmission_ratio, Branch, BranchHint, FourBarGeometry, LinkageModel};

use crate::{float_list, usage, Cell, Ctx, Table};

#[derive(Debug, Subcommand)]
pub enum LinkageCmd {
    /// Output angle and transmission ratio over a range of input angles.
    Sweep(SweepArgs),
    /// Output angle at one input angle.
    Solve(SolveArgs),
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    /// Parallelogram with 60 mm ground and coupler and 20 mm cranks.
    #[arg(long, conflicts_with_all = ["lengths", "config"])]
    pub parallelogram: bool,
    /// Ground, input, coupler, output lengths in mm.
    #[arg(long, value_name = "G,A,B,C", conflicts_with = "config")]
    pub lengths: Option<String>,
    /// Input and output mounting offsets in degrees.
    #[arg(long, value_name = "IN,OUT", allow_hyphen_values = true)]
    pub offsets_deg: Option<String>,
    /// Assembly branch at the reference angle.
    #[arg(long, value_parser = ["open", "crossed"])]
    pub branch: Option<String>,
    /// Input angle at which the branch label applies, degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub reference_deg: Option<f64>,
    /// Linkage config file; pick a stage with `--stage`.
    #[arg(long, requires = "stage")]
    pub config: Option<PathBuf>,
    /// Stage id such as `index.mcp_flexion`.
    #[arg(long)]
    pub stage: Option<String>,
    /// Hand model the linkage config applies to.
    #[arg(long, default_value = "DEXOP-7")]
    pub model: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Start angle in degrees; defaults to the start of the first assemblable interval.
    #[arg(long, allow_hyphen_values = true)]
    pub from_deg: Option<f64>,
    /// End angle in degrees; defaults to the end of that interval.
    #[arg(long, allow_hyphen_values = true)]
    pub to_deg: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub step_deg: f64,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub theta_deg: f64,
}

fn geometry(a: &GeometryArgs, ctx: &Ctx) -> anyhow::Result<FourBarGeometry> {
    let mut g = if let Some(path) = &a.config {
        let cfg = Config::load(ctx.input(path))?;
        let hand = crate::cmd_model::load(ctx, &a.model)?;
        let link = LinkageModel::from_config(&hand, &cfg)?;
        let id = a.stage.as_deref().unwrap_or_default();
        let stage = link.stages.iter().find(|s| s.id == id).ok_or_else(|| usage(format!("no stage `{id}`")))?;
        stage.geometry.ok_or_else(|| usage(format!("stage `{id}` is coaxial")))?
    } else if let Some(raw) = &a.lengths {
        let l = float_list(raw)?;
        if l.len() != 4 {
            return Err(usage("--lengths takes four values"));
        }
        FourBarGeometry::new(l[0] / 1000.0, l[1] / 1000.0, l[2] / 1000.0, l[3] / 1000.0)
    } else if a.parallelogram {
        FourBarGeometry::parallelogram(0.060, 0.020)
    } else {
        return Err(usage("give --parallelogram, --lengths or --config with --stage"));
    };
    if let Some(raw) = &a.offsets_deg {
        let o = float_list(raw)?;
        if o.len() != 2 {
            return Err(usage("--offsets-deg takes two values"));
        }
        g = g.with_offsets(o[0].to_radians(), o[1].to_radians());
    }
    if a.branch.is_some() || a.reference_deg.is_some() {
        let branch: Branch = match &a.branch {
            Some(b) => b.parse().map_err(usage)?,
            None => g.branch,
        };
        let reference = a.reference_deg.map_or(g.reference_input, f64::to_radians);
        g = g.with_branch(branch, reference);
    }
    g.check()?;
    Ok(g)
}

pub fn run(cmd: LinkageCmd, ctx: &mut Ctx) -> anyhow::Result<()> {
    match cmd {
        LinkageCmd::Sweep(a) => {
            let g = geometry(&a.geometry, ctx)?;
            if !(a.step_deg > 0.0) {
                return Err(usage("--step-deg must be positive"));
            }
            let report = grashof_check(&g);
            let first = report.range.intervals.first().copied();
            let from = a.from_deg.map(f64::to_radians).or(first.map(|r| r.0));
            let to = a.to_deg.map(f64::to_radians).or(first.map(|r| r.1));
            let (Some(from), Some(to)) = (from, to) else {
                anyhow::bail!("the linkage does not assemble at any input angle");
            };
            let rows = sweep(&g, from, to, a.step_deg.to_radians())?;
            let mut t = Table::new(&["theta_deg", "phi_deg", "ratio"]);
            for r in rows {
                t.push(vec![Cell::Fixed(r.theta.to_degrees(), 6), Cell::Fixed(r.phi.to_degrees(), 6), r.ratio.map(|v| Cell::Fixed(v, 9)).unwrap_or(Cell::Empty)]);
            }
            ctx.emit(&t)
        }
        LinkageCmd::Solve(a) => {
            let g = geometry(&a.geometry, ctx)?;
            let theta = a.theta_deg.to_radians();
            let phi = solve_fourbar(&g, theta, BranchHint::Declared)?;
            let ratio = transmission_ratio(&g, theta, phi).ok();
            let class = serde_json::to_value(grashof_check(&g).class)?;
            let mut t = Table::new(&["theta_deg", "phi_deg", "ratio", "residual", "class"]);
            t.push(vec![
                Cell::Fixed(a.theta_deg, 6),
                Cell::Fixed(phi.to_degrees(), 6),
                ratio.map(|v| Cell::Fixed(v, 9)).unwrap_or(Cell::Empty),
                Cell::Float(closure_residual(&g, theta, phi)),
                class.as_str().unwrap_or_default().into(),
            ]);
            ctx.emit(&t)
        }
    }
}
