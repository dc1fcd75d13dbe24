//! Four-bar couplings between exoskeleton joints and passive-hand joints.
//!
//! A planar four-bar is described in its own frame: the fixed pivot of the
//! input link sits at the origin and the fixed pivot of the output link at
//! `(ground, 0)`. Link angles are measured counter-clockwise from that
//! ground line. The mechanism-level angles seen by callers are shifted by the
//! mounting offsets: `link_in = theta + input_offset` and
//! `phi = link_out - output_offset`.
//!
//! Loop closure `|B - A| = coupler` with `A` the moving end of the input link
//! and `B` the moving end of the output link reduces to
//! `P cos(link_out) + Q sin(link_out) = R`, which has the two roots
//! `atan2(Q, P) ± acos(R / hypot(P, Q))`. The `+` root is the open branch
//! and the `-` root the crossed branch.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::hand::{FingerName, HandModel, JointKind, JointState};

/// Default continuity threshold for branch tracking, radians.
pub const BRANCH_THRESHOLD: f64 = 0.5;
/// Transmission angles closer than this to 0 or pi are singular.
pub const SINGULAR_TOL: f64 = 1e-6;
const CONTINUATION_STEP: f64 = 0.01;
const REFERENCE_NUDGE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum LinkageError {
    #[error("stage {stage}: not assemblable at input angle {theta:.6} rad")]
    NotAssemblable { stage: String, theta: f64 },
    #[error("branch jump: nearest root is {distance:.4} rad from the hint (threshold {threshold})")]
    BranchJump { distance: f64, threshold: f64 },
    #[error("singular configuration: transmission angle degenerate at input {theta:.6} rad")]
    SingularConfiguration { theta: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid linkage: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Open,
    Crossed,
}

impl FromStr for Branch {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "open" => Ok(Branch::Open),
            "crossed" => Ok(Branch::Crossed),
            other => Err(format!("unknown branch `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourBarGeometry {
    /// Fixed pivot distance (the virtual ground), meters.
    pub ground: f64,
    pub input: f64,
    pub coupler: f64,
    pub output: f64,
    pub input_offset: f64,
    pub output_offset: f64,
    pub branch: Branch,
    /// Input angle at which `branch` is declared.
    pub reference_input: f64,
}

impl FourBarGeometry {
    pub fn new(ground: f64, input: f64, coupler: f64, output: f64) -> Self {
        Self {
            ground,
            input,
            coupler,
            output,
            input_offset: 0.0,
            output_offset: 0.0,
            branch: Branch::Open,
            reference_input: 0.0,
        }
    }

    /// Input and output links of length `link`, ground and coupler of `span`.
    pub fn parallelogram(span: f64, link: f64) -> Self {
        Self::new(span, link, span, link)
    }

    pub fn with_offsets(mut self, input: f64, output: f64) -> Self {
        self.input_offset = input;
        self.output_offset = output;
        self
    }

    pub fn with_branch(mut self, branch: Branch, reference_input: f64) -> Self {
        self.branch = branch;
        self.reference_input = reference_input;
        self
    }

    fn lengths(&self) -> [f64; 4] {
        [self.ground, self.input, self.coupler, self.output]
    }

    fn lengths_positive(&self) -> bool {
        self.lengths().iter().all(|l| l.is_finite() && *l > 0.0)
    }

    fn grashof_sums(&self) -> (f64, f64) {
        let mut l = self.lengths();
        l.sort_by(f64::total_cmp);
        (l[0] + l[3], l[1] + l[2])
    }

    fn is_change_point(&self) -> bool {
        let (sl, pq) = self.grashof_sums();
        (sl - pq).abs() <= 1e-12 * (sl + pq)
    }

    /// Input and output pivots swapped, mirrored so the input pivot stays at
    /// the origin. Link angles map as `x -> pi - x`; offsets are dropped.
    pub fn reversed(&self) -> Self {
        Self::new(self.ground, self.output, self.coupler, self.input)
    }

    pub fn check(&self) -> Result<(), LinkageError> {
        if !self.lengths_positive() {
            return Err(LinkageError::Invalid("four-bar link lengths must be positive".into()));
        }
        match roots(self, self.reference_input + self.input_offset) {
            None => Err(LinkageError::NotAssemblable {
                stage: "reference".into(),
                theta: self.reference_input,
            }),
            // a tangent reference is labelled just above it, which needs two
            // distinct roots there
            Some((o, x)) if wrap_angle(o - x).abs() < 1e-9 => match roots(self, self.reference_input + REFERENCE_NUDGE + self.input_offset) {
                Some((o, x)) if wrap_angle(o - x).abs() >= 1e-9 => Ok(()),
                _ => Err(LinkageError::Invalid("branch cannot be declared where both roots coincide".into())),
            },
            Some(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrashofClass {
    CrankRocker,
    DoubleCrank,
    /// Also covers the rocker-crank case where only the output link can
    /// revolve: seen from the input, the input still rocks.
    DoubleRocker,
    ChangePoint,
    NonGrashof,
}

/// Closed intervals of input angle (mechanism convention) where the loop
/// closes. A full revolution is reported as a single interval of width 2*pi.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssemblyRange {
    pub intervals: Vec<(f64, f64)>,
}

impl AssemblyRange {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_full_revolution(&self) -> bool {
        self.intervals.len() == 1 && (self.intervals[0].1 - self.intervals[0].0 - TAU).abs() < 1e-12
    }

    pub fn contains(&self, theta: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| {
            if hi - lo >= TAU - 1e-12 {
                return true;
            }
            let t = lo + (theta - lo).rem_euclid(TAU);
            t <= hi
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrashofReport {
    pub class: GrashofClass,
    pub range: AssemblyRange,
}

pub fn grashof_check(geom: &FourBarGeometry) -> GrashofReport {
    if !geom.lengths_positive() {
        return GrashofReport {
            class: GrashofClass::NonGrashof,
            range: AssemblyRange { intervals: vec![] },
        };
    }
    let (sl, pq) = geom.grashof_sums();
    let class = if geom.is_change_point() {
        GrashofClass::ChangePoint
    } else if sl > pq {
        GrashofClass::NonGrashof
    } else {
        let shortest = geom.lengths().iter().copied().fold(f64::INFINITY, f64::min);
        if geom.ground == shortest {
            GrashofClass::DoubleCrank
        } else if geom.input == shortest {
            GrashofClass::CrankRocker
        } else {
            GrashofClass::DoubleRocker
        }
    };
    GrashofReport {
        class,
        range: assembly_range(geom),
    }
}

/// The diagonal from the input tip to the output pivot must lie in
/// `[|coupler - output|, coupler + output]`; its length depends on the input
/// link angle only through `cos`.
fn assembly_range(geom: &FourBarGeometry) -> AssemblyRange {
    let (g, a, b, c) = (geom.ground, geom.input, geom.coupler, geom.output);
    let base = a * a + g * g;
    let lo_cos = (base - (b + c) * (b + c)) / (2.0 * a * g);
    let hi_cos = (base - (b - c) * (b - c)) / (2.0 * a * g);
    if lo_cos > 1.0 || hi_cos < -1.0 {
        return AssemblyRange { intervals: vec![] };
    }
    let t_min = hi_cos.clamp(-1.0, 1.0).acos();
    let t_max = lo_cos.clamp(-1.0, 1.0).acos();
    let shift = geom.input_offset;
    let intervals = if t_min == 0.0 && t_max == PI {
        vec![(-PI - shift, PI - shift)]
    } else if t_min == 0.0 {
        vec![(-t_max - shift, t_max - shift)]
    } else if t_max == PI {
        vec![(t_min - shift, TAU - t_min - shift)]
    } else {
        vec![(-t_max - shift, -t_min - shift), (t_min - shift, t_max - shift)]
    };
    AssemblyRange { intervals }
}

/// Wraps to `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Open and crossed roots for the output link angle at input link angle
/// `link_in`, or `None` when the loop cannot close.
fn roots(geom: &FourBarGeometry, link_in: f64) -> Option<(f64, f64)> {
    let (g, a, b, c) = (geom.ground, geom.input, geom.coupler, geom.output);
    let (s, co) = link_in.sin_cos();
    let p = 2.0 * c * (g - a * co);
    let q = -2.0 * a * c * s;
    let r = b * b - a * a - c * c - g * g + 2.0 * g * a * co;
    let h = p.hypot(q);
    if h == 0.0 {
        // input tip on the output pivot: any output angle closes the loop
        return (r.abs() <= 1e-15).then_some((0.0, 0.0));
    }
    let ratio = r / h;
    if ratio.abs() > 1.0 + 1e-12 {
        return None;
    }
    let gamma = q.atan2(p);
    // within rounding of a tangent, the two roots are one double root
    let ratio = if 1.0 - ratio.abs() <= 8.0 * f64::EPSILON { ratio.signum() } else { ratio };
    let delta = ratio.clamp(-1.0, 1.0).acos();
    Some((gamma + delta, gamma - delta))
}

/// Signed closure error `|B - A| - coupler`, meters.
pub fn closure_residual(geom: &FourBarGeometry, theta_in: f64, phi_out: f64) -> f64 {
    let (a_pt, b_pt) = joint_points(geom, theta_in + geom.input_offset, phi_out + geom.output_offset);
    (b_pt.0 - a_pt.0).hypot(b_pt.1 - a_pt.1) - geom.coupler
}

fn joint_points(geom: &FourBarGeometry, link_in: f64, link_out: f64) -> ((f64, f64), (f64, f64)) {
    let a_pt = (geom.input * link_in.cos(), geom.input * link_in.sin());
    let b_pt = (geom.ground + geom.output * link_out.cos(), geom.output * link_out.sin());
    (a_pt, b_pt)
}

/// Branch selection for [`solve_fourbar`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BranchHint {
    /// Follow the geometry's declared branch from its reference input.
    Declared,
    /// Pick the root continuous with a previous output angle.
    Previous(f64),
}

/// Branch tracking with a custom continuity threshold.
pub fn solve_fourbar_with(
    geom: &FourBarGeometry,
    theta_in: f64,
    hint: BranchHint,
    threshold: f64,
) -> Result<f64, LinkageError> {
    let not_assemblable = || LinkageError::NotAssemblable {
        stage: "four-bar".into(),
        theta: theta_in,
    };
    if !geom.lengths_positive() {
        return Err(LinkageError::Invalid("four-bar link lengths must be positive".into()));
    }
    match hint {
        BranchHint::Previous(prev) => {
            let (open, crossed) = roots(geom, theta_in + geom.input_offset).ok_or_else(not_assemblable)?;
            let pick = |root: f64| {
                let phi = root - geom.output_offset;
                prev + wrap_angle(phi - prev)
            };
            let (o, x) = (pick(open), pick(crossed));
            let (best, dist) = if (o - prev).abs() <= (x - prev).abs() {
                (o, (o - prev).abs())
            } else {
                (x, (x - prev).abs())
            };
            if dist > threshold {
                return Err(LinkageError::BranchJump {
                    distance: dist,
                    threshold,
                });
            }
            Ok(best)
        }
        BranchHint::Declared => {
            let declared = |t: f64| {
                roots(geom, t + geom.input_offset).map(|(o, x)| {
                    let root = match geom.branch {
                        Branch::Open => o,
                        Branch::Crossed => x,
                    };
                    wrap_angle(root - geom.output_offset)
                })
            };
            if !geom.is_change_point() {
                return declared(theta_in).ok_or_else(not_assemblable);
            }
            // Branches exchange at change points; follow the mechanism from
            // its reference configuration instead of trusting the labels.
            let mut t0 = geom.reference_input;
            let mut start = declared(t0).ok_or_else(not_assemblable)?;
            if transmission_ratio(geom, t0, start).is_err() {
                // The roots meet at the reference, so its label is read
                // just above it.
                t0 += REFERENCE_NUDGE;
                start = declared(t0).ok_or_else(not_assemblable)?;
            }
            follow(geom, (t0, start), None, theta_in, threshold)
                .or_else(|_| declared(theta_in).ok_or_else(not_assemblable))
        }
    }
}

/// Continuation from a known configuration `from = (theta, phi)` to
/// `target` in small steps. Each step picks the root nearest a secant
/// prediction, which stays on the physical branch through change points
/// where both roots meet. `slope` seeds the first prediction.
fn follow(
    geom: &FourBarGeometry,
    from: (f64, f64),
    slope: Option<f64>,
    target: f64,
    threshold: f64,
) -> Result<f64, LinkageError> {
    let span = target - from.0;
    let steps = (span.abs() / CONTINUATION_STEP).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let (mut t, mut phi) = from;
    let mut slope = slope.or_else(|| transmission_ratio(geom, from.0, from.1).ok()).unwrap_or(0.0);
    for _ in 0..steps {
        let next_t = t + h;
        let predicted = phi + slope * h;
        let next = solve_fourbar_with(geom, next_t, BranchHint::Previous(predicted), threshold)?;
        if h != 0.0 {
            slope = (next - phi) / h;
        }
        t = next_t;
        phi = next;
    }
    Ok(phi)
}

/// Output angle for `theta_in` on the branch selected by `hint`.
pub fn solve_fourbar(geom: &FourBarGeometry, theta_in: f64, hint: BranchHint) -> Result<f64, LinkageError> {
    solve_fourbar_with(geom, theta_in, hint, BRANCH_THRESHOLD)
}

/// `dphi/dtheta` at a solved configuration.
pub fn transmission_ratio(geom: &FourBarGeometry, theta_in: f64, phi_out: f64) -> Result<f64, LinkageError> {
    let link_in = theta_in + geom.input_offset;
    let link_out = phi_out + geom.output_offset;
    let (a_pt, b_pt) = joint_points(geom, link_in, link_out);
    let coupler = (b_pt.0 - a_pt.0, b_pt.1 - a_pt.1);
    let rocker = (b_pt.0 - geom.ground, b_pt.1);
    let sin_mu = (coupler.0 * rocker.1 - coupler.1 * rocker.0) / (geom.coupler * geom.output);
    if sin_mu.abs() < SINGULAR_TOL {
        return Err(LinkageError::SingularConfiguration { theta: theta_in });
    }
    // F = |B - A|^2 - b^2;  dphi/dtheta = -F_theta / F_phi
    let da = (-a_pt.1, a_pt.0);
    let db = (-rocker.1, rocker.0);
    let f_theta = -2.0 * (coupler.0 * da.0 + coupler.1 * da.1);
    let f_phi = 2.0 * (coupler.0 * db.0 + coupler.1 * db.1);
    Ok(-f_theta / f_phi)
}

/// Transmission ratio on the declared branch.
pub fn mechanical_advantage(geom: &FourBarGeometry, theta_in: f64) -> Result<f64, LinkageError> {
    let phi = solve_fourbar(geom, theta_in, BranchHint::Declared)?;
    transmission_ratio(geom, theta_in, phi)
}

/// `dtheta/dphi` computed by driving the mechanism backwards through
/// [`FourBarGeometry::reversed`].
pub fn inverse_transmission_ratio(geom: &FourBarGeometry, theta_in: f64, phi_out: f64) -> Result<f64, LinkageError> {
    let rev = geom.reversed();
    let rev_in = PI - (phi_out + geom.output_offset);
    let rev_out = solve_fourbar(&rev, rev_in, BranchHint::Previous(PI - (theta_in + geom.input_offset)))?;
    transmission_ratio(&rev, rev_in, rev_out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub theta: f64,
    pub phi: f64,
    /// `None` at singular configurations.
    pub ratio: Option<f64>,
}

/// Sweeps `theta` from `from` to `to` inclusive, tracking the branch.
pub fn sweep(geom: &FourBarGeometry, from: f64, to: f64, step: f64) -> Result<Vec<SweepRow>, LinkageError> {
    if !(step > 0.0) {
        return Err(LinkageError::Invalid("sweep step must be positive".into()));
    }
    let n = ((to - from).abs() / step + 1e-9).floor() as usize;
    let dir = if to >= from { 1.0 } else { -1.0 };
    let mut rows = Vec::with_capacity(n + 1);
    let mut prev: Option<(f64, f64)> = None;
    let mut slope = None;
    for k in 0..=n {
        let theta = from + dir * step * k as f64;
        let phi = match prev {
            None => {
                let phi = solve_fourbar(geom, theta, BranchHint::Declared)?;
                slope = transmission_ratio(geom, theta, phi).ok();
                phi
            }
            // leaving a singular start: no slope to follow, trust the declared branch
            Some(_) if slope.is_none() => solve_fourbar(geom, theta, BranchHint::Declared)?,
            Some(p) => {
                let phi = follow(geom, p, slope, theta, BRANCH_THRESHOLD)?;
                slope = Some((phi - p.1) / (theta - p.0));
                phi
            }
        };
        prev = Some((theta, phi));
        rows.push(SweepRow {
            theta,
            phi,
            ratio: transmission_ratio(geom, theta, phi).ok(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    FourBar,
    Coaxial,
    /// Second four-bar whose ground is the coupler of an earlier stage.
    ChainedFourBarStage2,
}

impl FromStr for StageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "fourbar" | "four-bar" => Ok(StageKind::FourBar),
            "coaxial" => Ok(StageKind::Coaxial),
            "chained" | "chained-four-bar-stage2" => Ok(StageKind::ChainedFourBarStage2),
            other => Err(format!("unknown stage kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingStage {
    pub id: String,
    pub kind: StageKind,
    pub source: usize,
    pub target: usize,
    pub geometry: Option<FourBarGeometry>,
    /// For chained stages: index of the stage whose coupler is this ground.
    pub ground_stage: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkageModel {
    pub stages: Vec<CouplingStage>,
    pub dof: usize,
    /// Standoff between exoskeleton and hand pivots, meters.
    pub standoff: f64,
}

/// Default mounting offset: keeps the identity linkage clear of the
/// collinear change point over the finger flexion range.
const DEFAULT_MOUNT: f64 = 35.0 * PI / 180.0;
const DEFAULT_STANDOFF: f64 = 0.060;
const DEFAULT_LEVER: f64 = 0.012;

impl LinkageModel {
    /// Identity coupling for every joint of `hand`: parallelogram four-bars
    /// for flexion, coaxial pass-through for abduction.
    pub fn for_hand(hand: &HandModel) -> Self {
        Self::build(hand, None).expect("default linkage is valid")
    }

    pub fn from_config(hand: &HandModel, cfg: &Config) -> Result<Self, LinkageError> {
        Self::build(hand, Some(cfg))
    }

    fn build(hand: &HandModel, cfg: Option<&Config>) -> Result<Self, LinkageError> {
        let standoff = match cfg {
            Some(c) => c.parse::<f64>("linkage.standoff_mm")?.map_or(DEFAULT_STANDOFF, |mm| mm / 1000.0),
            None => DEFAULT_STANDOFF,
        };
        if !(standoff > 0.0) {
            return Err(LinkageError::Invalid("standoff must be positive".into()));
        }
        let mut stages: Vec<CouplingStage> = Vec::new();
        let mut index = 0;
        for finger in &hand.fingers {
            let mut stage1: Option<usize> = None;
            for joint in &finger.joints {
                let (mut kind, mut geometry) = match joint.kind {
                    JointKind::McpAbduction | JointKind::TmAbduction => (StageKind::Coaxial, None),
                    JointKind::McpFlexion | JointKind::TmFlexion => (
                        StageKind::FourBar,
                        Some(FourBarGeometry::parallelogram(standoff, finger.proximal_length).with_offsets(DEFAULT_MOUNT, DEFAULT_MOUNT)),
                    ),
                    JointKind::Pip => (
                        StageKind::ChainedFourBarStage2,
                        Some(FourBarGeometry::parallelogram(standoff, DEFAULT_LEVER).with_branch(Branch::Open, DEFAULT_MOUNT)),
                    ),
                    JointKind::Ip => (
                        StageKind::FourBar,
                        Some(FourBarGeometry::parallelogram(standoff, DEFAULT_LEVER).with_offsets(DEFAULT_MOUNT, DEFAULT_MOUNT)),
                    ),
                };
                if let Some(cfg) = cfg {
                    let key = |field: &str| format!("linkage.{}.{field}", joint.id);
                    if let Some(k) = cfg.get(&key("kind")) {
                        kind = k.parse().map_err(LinkageError::Invalid)?;
                    }
                    if let Some(l) = cfg.floats(&key("lengths_mm"), 4)? {
                        let base = geometry.unwrap_or(FourBarGeometry::new(1.0, 1.0, 1.0, 1.0));
                        geometry = Some(FourBarGeometry {
                            ground: l[0] / 1000.0,
                            input: l[1] / 1000.0,
                            coupler: l[2] / 1000.0,
                            output: l[3] / 1000.0,
                            ..base
                        });
                    }
                    if let Some(o) = cfg.floats(&key("offsets_deg"), 2)? {
                        let g = geometry.as_mut().ok_or_else(|| LinkageError::Invalid(format!("{}: offsets on a coaxial stage", joint.id)))?;
                        g.input_offset = o[0].to_radians();
                        g.output_offset = o[1].to_radians();
                    }
                    if let Some(b) = cfg.get(&key("branch")) {
                        let g = geometry.as_mut().ok_or_else(|| LinkageError::Invalid(format!("{}: branch on a coaxial stage", joint.id)))?;
                        g.branch = b.parse().map_err(LinkageError::Invalid)?;
                    }
                    if let Some(r) = cfg.parse::<f64>(&key("reference_deg"))? {
                        let g = geometry.as_mut().ok_or_else(|| LinkageError::Invalid(format!("{}: reference on a coaxial stage", joint.id)))?;
                        g.reference_input = r.to_radians();
                    }
                }
                if kind == StageKind::Coaxial {
                    geometry = None;
                }
                let ground_stage = match kind {
                    StageKind::ChainedFourBarStage2 => stage1,
                    _ => None,
                };
                if kind == StageKind::FourBar && matches!(joint.kind, JointKind::McpFlexion | JointKind::TmFlexion) {
                    stage1 = Some(stages.len());
                }
                stages.push(CouplingStage {
                    id: joint.id.clone(),
                    kind,
                    source: index,
                    target: index,
                    geometry,
                    ground_stage,
                });
                index += 1;
            }
        }
        if let Some(cfg) = cfg {
            for key in cfg.keys().filter(|k| k.starts_with("linkage.")) {
                let known = key == "linkage.standoff_mm"
                    || stages.iter().any(|s| {
                        ["kind", "lengths_mm", "offsets_deg", "branch", "reference_deg"]
                            .iter()
                            .any(|f| key == format!("linkage.{}.{f}", s.id))
                    });
                if !known {
                    return Err(ConfigError::UnknownKey(key.to_owned()).into());
                }
            }
        }
        let model = Self {
            stages,
            dof: index,
            standoff,
        };
        model.check(hand)?;
        Ok(model)
    }

    /// Structural invariants: bijective joint map, coaxial thumb abduction,
    /// chained stages grounded on an earlier four-bar's coupler.
    pub fn check(&self, hand: &HandModel) -> Result<(), LinkageError> {
        let n = self.dof;
        let mut src = vec![false; n];
        let mut dst = vec![false; n];
        for s in &self.stages {
            for (slot, used) in [(s.source, &mut src), (s.target, &mut dst)] {
                if slot >= n || used[slot] {
                    return Err(LinkageError::Invalid(format!("{}: joint map is not a bijection", s.id)));
                }
                used[slot] = true;
            }
        }
        if src.iter().chain(&dst).any(|u| !u) || self.stages.len() != n {
            return Err(LinkageError::Invalid("joint map is not a bijection".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            let joint = hand
                .joints()
                .nth(s.target)
                .ok_or_else(|| LinkageError::Invalid(format!("{}: no such hand joint", s.id)))?;
            if joint.kind == JointKind::TmAbduction && s.kind != StageKind::Coaxial {
                return Err(LinkageError::Invalid("thumb abduction stage must be coaxial".into()));
            }
            match s.kind {
                StageKind::Coaxial => {}
                StageKind::FourBar => s.geometry.as_ref().ok_or_else(|| LinkageError::Invalid(format!("{}: missing geometry", s.id)))?.check()?,
                StageKind::ChainedFourBarStage2 => {
                    let g = s.geometry.as_ref().ok_or_else(|| LinkageError::Invalid(format!("{}: missing geometry", s.id)))?;
                    let ground = s
                        .ground_stage
                        .filter(|&k| k < i && self.stages[k].kind == StageKind::FourBar)
                        .ok_or_else(|| LinkageError::Invalid(format!("{}: chained stage needs an earlier four-bar", s.id)))?;
                    let coupler = self.stages[ground].geometry.as_ref().map(|g| g.coupler).unwrap_or(f64::NAN);
                    if (coupler - g.ground).abs() > 1e-12 {
                        return Err(LinkageError::Invalid(format!(
                            "{}: ground {} m must equal the stage-1 coupler {} m",
                            s.id, g.ground, coupler
                        )));
                    }
                    g.check()?;
                }
            }
        }
        Ok(())
    }

    pub fn fingers_of<'a>(&'a self, hand: &'a HandModel) -> impl Iterator<Item = (FingerName, &'a CouplingStage)> {
        let names: Vec<FingerName> = hand.fingers.iter().flat_map(|f| f.joints.iter().map(move |_| f.name)).collect();
        self.stages.iter().map(move |s| (names[s.target], s))
    }
}

/// Caller-owned branch-tracking state for [`exo_to_hand`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkageContext {
    hints: Vec<Option<Track>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Track {
    theta: f64,
    phi: f64,
    slope: Option<f64>,
}

impl Track {
    fn advance(prev: Option<Track>, g: &FourBarGeometry, theta: f64) -> Result<Track, LinkageError> {
        let phi = match prev {
            None => solve_fourbar(g, theta, BranchHint::Declared)?,
            Some(t) => follow(g, (t.theta, t.phi), t.slope, theta, BRANCH_THRESHOLD)?,
        };
        let slope = match prev {
            Some(t) if theta != t.theta => Some((phi - t.phi) / (theta - t.theta)),
            Some(t) => t.slope,
            None => None,
        };
        Ok(Track { theta, phi, slope })
    }
}

impl LinkageContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.hints.clear();
    }
}

/// Angles of the stage-1 links and coupler in the stage's own frame.
struct StageSolution {
    link_in: f64,
    link_out: f64,
    coupler_dir: f64,
}

fn stage_solution(g: &FourBarGeometry, theta: f64, phi: f64) -> StageSolution {
    let link_in = theta + g.input_offset;
    let link_out = phi + g.output_offset;
    let (a_pt, b_pt) = joint_points(g, link_in, link_out);
    StageSolution {
        link_in,
        link_out,
        coupler_dir: (b_pt.1 - a_pt.1).atan2(b_pt.0 - a_pt.0),
    }
}

/// Maps exoskeleton joint angles to passive-hand joint angles.
pub fn exo_to_hand(linkage: &LinkageModel, exo: &JointState, ctx: &mut LinkageContext) -> Result<JointState, LinkageError> {
    if exo.angles.len() != linkage.dof {
        return Err(LinkageError::DimensionMismatch {
            expected: linkage.dof,
            got: exo.angles.len(),
        });
    }
    ctx.hints.resize(linkage.stages.len(), None);
    let mut out = vec![0.0; linkage.dof];
    let mut solved: Vec<Option<StageSolution>> = Vec::with_capacity(linkage.stages.len());
    let mut new_hints = ctx.hints.clone();
    for (i, stage) in linkage.stages.iter().enumerate() {
        let q = exo.angles[stage.source];
        let tag = |e: LinkageError| match e {
            LinkageError::NotAssemblable { theta, .. } => LinkageError::NotAssemblable {
                stage: stage.id.clone(),
                theta,
            },
            other => other,
        };
        match stage.kind {
            StageKind::Coaxial => {
                out[stage.target] = q;
                solved.push(None);
            }
            StageKind::FourBar => {
                let g = stage.geometry.as_ref().expect("checked");
                let track = Track::advance(ctx.hints[i], g, q).map_err(tag)?;
                new_hints[i] = Some(track);
                let phi = track.phi;
                out[stage.target] = phi;
                solved.push(Some(stage_solution(g, q, phi)));
            }
            StageKind::ChainedFourBarStage2 => {
                let g = stage.geometry.as_ref().expect("checked");
                let base = solved[stage.ground_stage.expect("checked")]
                    .as_ref()
                    .expect("ground stage is a four-bar");
                // distal links measured against the moving coupler
                let theta = q + (base.link_in - base.coupler_dir);
                let track = Track::advance(ctx.hints[i], g, theta).map_err(tag)?;
                new_hints[i] = Some(track);
                let phi = track.phi;
                out[stage.target] = wrap_angle(phi - (base.link_out - base.coupler_dir));
                solved.push(None);
            }
        }
    }
    ctx.hints = new_hints;
    Ok(JointState {
        angles: out,
        timestamp_ns: exo.timestamp_ns,
    })
}

/// Angle of a stage-2 lever relative to the coupler, exposed for tests that
/// compose per-stage solutions by hand.
pub fn chained_input(stage1: &FourBarGeometry, theta1: f64, phi1: f64, q: f64) -> f64 {
    let s = stage_solution(stage1, theta1, phi1);
    q + (s.link_in - s.coupler_dir)
}

/// Inverse of [`chained_input`] on the output side.
pub fn chained_output(stage1: &FourBarGeometry, theta1: f64, phi1: f64, phi2: f64) -> f64 {
    let s = stage_solution(stage1, theta1, phi1);
    wrap_angle(phi2 - (s.link_out - s.coupler_dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::{load_model, Variant};
    use std::f64::consts::FRAC_PI_2;

    fn crank_rocker() -> FourBarGeometry {
        FourBarGeometry::new(0.10, 0.04, 0.10, 0.08)
    }

    #[test]
    fn classifies_reference_geometries() {
        let para = grashof_check(&FourBarGeometry::new(0.08, 0.05, 0.08, 0.05));
        assert_eq!(para.class, GrashofClass::ChangePoint);
        assert!(para.range.is_full_revolution());

        let far = grashof_check(&FourBarGeometry::new(0.30, 0.02, 0.05, 0.05));
        assert_eq!(far.class, GrashofClass::NonGrashof);
        assert!(!far.range.contains(0.0));
        assert!(far.range.is_empty());

        assert_eq!(grashof_check(&crank_rocker()).class, GrashofClass::CrankRocker);
        assert_eq!(grashof_check(&FourBarGeometry::new(0.02, 0.06, 0.07, 0.05)).class, GrashofClass::DoubleCrank);
        assert_eq!(grashof_check(&FourBarGeometry::new(0.06, 0.07, 0.02, 0.05)).class, GrashofClass::DoubleRocker);

        let degenerate = grashof_check(&FourBarGeometry::new(0.1, 0.0, 0.1, 0.1));
        assert_eq!(degenerate.class, GrashofClass::NonGrashof);
        assert!(degenerate.range.is_empty());
    }

    #[test]
    fn parallelogram_transmits_identically() {
        let g = FourBarGeometry::parallelogram(0.08, 0.05);
        let phi = solve_fourbar(&g, 0.6, BranchHint::Declared).unwrap();
        assert!((phi - 0.6).abs() < 1e-9);
        assert!(closure_residual(&g, 0.6, phi).abs() < 1e-10);
        let phi = solve_fourbar(&g, -2.0, BranchHint::Declared).unwrap();
        assert!((phi + 2.0).abs() < 1e-9);
    }

    #[test]
    fn unassemblable_input_is_rejected() {
        let g = FourBarGeometry::new(0.30, 0.02, 0.05, 0.05);
        assert!(matches!(
            solve_fourbar(&g, 0.0, BranchHint::Declared),
            Err(LinkageError::NotAssemblable { .. })
        ));
    }

    #[test]
    fn far_hint_is_a_branch_jump() {
        let g = crank_rocker();
        let phi = solve_fourbar(&g, 0.3, BranchHint::Declared).unwrap();
        let err = solve_fourbar(&g, 0.3, BranchHint::Previous(phi + 2.0)).unwrap_err();
        assert!(matches!(err, LinkageError::BranchJump { .. }));
    }

    #[test]
    fn mechanical_advantage_of_parallelogram_is_one() {
        let g = FourBarGeometry::parallelogram(0.08, 0.05);
        for theta in [0.2, 1.0, 2.5, -1.3] {
            assert!((mechanical_advantage(&g, theta).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn toggle_position_is_singular() {
        // input tip on the far edge of its assembly range: coupler and
        // output become collinear
        let g = FourBarGeometry::new(0.10, 0.07, 0.05, 0.04);
        let report = grashof_check(&g);
        let edge = report.range.intervals.iter().map(|iv| iv.1).fold(f64::NEG_INFINITY, f64::max);
        assert!(matches!(
            mechanical_advantage(&g, edge),
            Err(LinkageError::SingularConfiguration { .. })
        ));
    }

    #[test]
    fn reciprocity_with_reversed_drive() {
        let g = crank_rocker();
        for theta in [0.3, 1.1, 2.0, -2.4] {
            let phi = solve_fourbar(&g, theta, BranchHint::Declared).unwrap();
            let fwd = transmission_ratio(&g, theta, phi).unwrap();
            let back = inverse_transmission_ratio(&g, theta, phi).unwrap();
            assert!((fwd * back - 1.0).abs() < 1e-8, "theta {theta}: {fwd} * {back}");
        }
    }

    #[test]
    fn default_linkage_is_identity() {
        for v in Variant::ALL {
            let hand = load_model(v, None).unwrap();
            let link = LinkageModel::for_hand(&hand);
            let mut ctx = LinkageContext::new();
            let exo = JointState::new(hand.joints().map(|j| j.limits.min + 0.7 * j.limits.span()).collect());
            let out = exo_to_hand(&link, &exo, &mut ctx).unwrap();
            for (a, b) in exo.angles.iter().zip(&out.angles) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn coaxial_thumb_abduction_is_copied() {
        let hand = load_model(Variant::Dexop12, None).unwrap();
        let link = LinkageModel::for_hand(&hand);
        let (ti, _) = hand.finger(FingerName::Thumb).unwrap();
        let abd = hand.joint_offset(ti);
        let mut exo = JointState::zeros(&hand);
        exo.angles[abd] = 0.3;
        let out = exo_to_hand(&link, &exo, &mut LinkageContext::new()).unwrap();
        assert_eq!(out.angles[abd], 0.3);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let hand = load_model(Variant::Dexop9, None).unwrap();
        let link = LinkageModel::for_hand(&hand);
        let r = exo_to_hand(&link, &JointState::new(vec![0.0; 4]), &mut LinkageContext::new());
        assert!(matches!(r, Err(LinkageError::DimensionMismatch { expected: 9, got: 4 })));
    }

    #[test]
    fn config_rejects_non_coaxial_thumb_abduction_and_bad_chain() {
        let hand = load_model(Variant::Dexop9, None).unwrap();
        let cfg: Config = "linkage.thumb.tm_abduction.kind = fourbar\nlinkage.thumb.tm_abduction.lengths_mm = 60,30,60,30"
            .parse()
            .unwrap();
        assert!(matches!(LinkageModel::from_config(&hand, &cfg), Err(LinkageError::Invalid(_))));
        let cfg: Config = "linkage.index.pip.lengths_mm = 50,12,50,12".parse().unwrap();
        assert!(matches!(LinkageModel::from_config(&hand, &cfg), Err(LinkageError::Invalid(_))));
        let cfg: Config = "linkage.index.mcp_flexion.lengths_mm = 300,20,50,50".parse().unwrap();
        assert!(LinkageModel::from_config(&hand, &cfg).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-15);
    }
}
