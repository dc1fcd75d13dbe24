use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use nalgebra::Vector3;
use periop::hand::{ContactPoint, FingerName, HandModel, JointState, Phalanx};
use periop::linkage::{exo_to_hand, LinkageContext, LinkageModel};
use periop::session::{align, AlignOptions, SessionReader};
use periop::torque::{joint_torques, observability, ContactWrench};
use serde::Deserialize;

use crate::{float_list, usage, Cell, Ctx, Table};

#[derive(Debug, Subcommand)]
pub enum TorqueCmd {
    /// `tau = sum J^T F` for every state.
    Estimate(TorqueArgs),
    /// Rank of the contact Jacobian and the joints no contact can explain.
    Observability(TorqueArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Args)]
pub struct TorqueArgs {
    #[arg(long, default_value = "DEXOP-7")]
    pub model: String,
    /// Joint angles in radians, canonical order.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "session")]
    pub state: Option<String>,
    /// Session whose aligned hand angles supply one state per step.
    #[arg(long)]
    pub session: Option<PathBuf>,
    /// Which hand of the session to use.
    #[arg(long, value_enum, default_value_t = Side::Right)]
    pub hand: Side,
    #[arg(long, default_value_t = 20.0)]
    pub rate: f64,
    /// CSV: [step,]finger,phalanx,x_m,y_m,z_m[,fx_n,fy_n,fz_n]. Rows without a
    /// step apply to every step.
    #[arg(long)]
    pub contacts: PathBuf,
}

#[derive(Debug, Deserialize)]
struct ContactRow {
    #[serde(default)]
    step: Option<usize>,
    finger: String,
    phalanx: String,
    x_m: f64,
    y_m: f64,
    z_m: f64,
    #[serde(default)]
    fx_n: f64,
    #[serde(default)]
    fy_n: f64,
    #[serde(default)]
    fz_n: f64,
}

struct Contact {
    step: Option<usize>,
    wrench: ContactWrench,
}

fn read_contacts(ctx: &Ctx, path: &std::path::Path) -> anyhow::Result<Vec<Contact>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(ctx.input(path))?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ContactRow>().enumerate() {
        let row = row.map_err(|e| anyhow::anyhow!("contacts row {}: {e}", i + 1))?;
        let finger: FingerName = row.finger.parse().map_err(anyhow::Error::msg)?;
        let phalanx: Phalanx = row.phalanx.parse().map_err(anyhow::Error::msg)?;
        let point = ContactPoint::new(finger, phalanx, Vector3::new(row.x_m, row.y_m, row.z_m));
        let wrench = ContactWrench::new(point, Vector3::new(row.fx_n, row.fy_n, row.fz_n))?;
        out.push(Contact { step: row.step, wrench });
    }
    Ok(out)
}

/// `(step, timestamp, state)` triples.
fn states(a: &TorqueArgs, model: &HandModel, ctx: &Ctx) -> anyhow::Result<Vec<(usize, Option<u64>, JointState)>> {
    if let Some(raw) = &a.state {
        return Ok(vec![(0, None, JointState::new(float_list(raw)?))]);
    }
    let Some(path) = &a.session else {
        return Err(usage("give --state or --session"));
    };
    if model.dof() != 7 {
        anyhow::bail!("session hands carry 7 joints; {} has {}", model.variant, model.dof());
    }
    let mut reader = SessionReader::open(ctx.input(path))?;
    let aligned = align(&mut reader, &AlignOptions { rate_hz: a.rate })?;
    let link = LinkageModel::for_hand(model);
    let mut lctx = LinkageContext::new();
    let range = match a.hand {
        Side::Left => 0..7,
        Side::Right => 7..14,
    };
    aligned
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let exo = JointState::new(s.hand()[range.clone()].to_vec());
            Ok((i, Some(s.timestamp_ns), exo_to_hand(&link, &exo, &mut lctx)?))
        })
        .collect()
}

pub fn run(cmd: TorqueCmd, ctx: &mut Ctx) -> anyhow::Result<()> {
    let (estimate, a) = match cmd {
        TorqueCmd::Estimate(a) => (true, a),
        TorqueCmd::Observability(a) => (false, a),
    };
    let model = crate::cmd_model::load(ctx, &a.model)?;
    let contacts = read_contacts(ctx, &a.contacts)?;
    let ids: Vec<String> = model.joints().map(|j| j.id.clone()).collect();
    let mut columns = vec!["step".to_owned(), "timestamp_ns".to_owned()];
    if estimate {
        columns.extend(ids.iter().map(|id| format!("tau_{id}")));
        columns.extend(["rank".to_owned(), "unobservable_dim".to_owned()]);
    } else {
        columns.extend(["rank", "nullspace_dim", "hidden_joints"].map(String::from));
    }
    let mut t = Table::with_columns(columns);
    for (step, ts, state) in states(&a, &model, ctx)? {
        let active: Vec<ContactWrench> = contacts.iter().filter(|c| c.step.is_none_or(|s| s == step)).map(|c| c.wrench).collect();
        let mut row: Vec<Cell> = vec![step.into(), ts.into()];
        if estimate {
            let est = joint_torques(&model, &state, &active)?;
            row.extend(est.torques.iter().map(|&v| Cell::Float(v)));
            row.extend([est.rank.into(), est.unobservable_dim.into()]);
        } else {
            let points: Vec<ContactPoint> = active.iter().map(|w| w.contact).collect();
            let obs = observability(&model, &state, &points)?;
            // joints whose unit torque lies entirely in the unidentifiable subspace
            let hidden: Vec<&str> = ids
                .iter()
                .enumerate()
                .filter(|(j, _)| obs.unidentifiable.iter().map(|v| v[*j] * v[*j]).sum::<f64>() > 1.0 - 1e-9)
                .map(|(_, id)| id.as_str())
                .collect();
            row.extend([obs.rank.into(), obs.nullspace_dim.into(), hidden.join(";").into()]);
        }
        t.push(row);
    }
    ctx.emit(&t)
}
