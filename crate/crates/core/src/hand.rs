//! Kinematic chains of the passive hand variants.
//!
//! Frame conventions: in the palm frame `x` points along the extended
//! fingers, `y` points laterally toward the thumb and `z` points out of the
//! back of the hand, so the palm faces `-z`. All angles are radians, zero is
//! the fully extended finger and positive flexion bends toward the palm.
//!
//! Every finger chain ends in its PIP (or thumb IP) joint. Joints before it
//! move the proximal phalanx, all joints move the distal phalanx.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, Isometry3, Matrix3xX, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::config::{Config, ConfigError};

/// Rigid transform, meters and radians.
pub type Pose = Isometry3<f64>;

const AXIS_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum HandError {
    #[error("unknown hand variant `{0}`")]
    UnknownVariant(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown phalanx {phalanx:?} on finger {finger:?}")]
    UnknownPhalanx { finger: FingerName, phalanx: Phalanx },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Variant {
    #[serde(rename = "DEXOP-12")]
    Dexop12,
    #[serde(rename = "DEXOP-9")]
    Dexop9,
    #[serde(rename = "DEXOP-7")]
    Dexop7,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Dexop12, Variant::Dexop9, Variant::Dexop7];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dexop12 => "DEXOP-12",
            Variant::Dexop9 => "DEXOP-9",
            Variant::Dexop7 => "DEXOP-7",
        }
    }

    pub fn fingers(self) -> &'static [FingerName] {
        use FingerName::*;
        match self {
            Variant::Dexop12 => &[Thumb, Index, Middle, Ring],
            Variant::Dexop9 | Variant::Dexop7 => &[Thumb, Index, Middle],
        }
    }

    pub fn has_finger_abduction(self) -> bool {
        !matches!(self, Variant::Dexop7)
    }

    pub fn dof(self) -> usize {
        self.fingers()
            .iter()
            .map(|f| match f {
                FingerName::Thumb => 3,
                _ if self.has_finger_abduction() => 3,
                _ => 2,
            })
            .sum()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = HandError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('_', "-").as_str() {
            "DEXOP-12" | "DEXOP12" => Ok(Variant::Dexop12),
            "DEXOP-9" | "DEXOP9" => Ok(Variant::Dexop9),
            "DEXOP-7" | "DEXOP7" => Ok(Variant::Dexop7),
            _ => Err(HandError::UnknownVariant(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FingerName {
    Thumb,
    Index,
    Middle,
    Ring,
}

impl FingerName {
    pub fn key(self) -> &'static str {
        match self {
            FingerName::Thumb => "thumb",
            FingerName::Index => "index",
            FingerName::Middle => "middle",
            FingerName::Ring => "ring",
        }
    }
}

impl FromStr for FingerName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "thumb" => Ok(FingerName::Thumb),
            "index" => Ok(FingerName::Index),
            "middle" => Ok(FingerName::Middle),
            "ring" => Ok(FingerName::Ring),
            other => Err(format!("unknown finger `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phalanx {
    Proximal,
    Distal,
}

impl FromStr for Phalanx {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "proximal" => Ok(Phalanx::Proximal),
            "distal" => Ok(Phalanx::Distal),
            other => Err(format!("unknown phalanx `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum JointKind {
    #[serde(rename = "MCP-flexion")]
    McpFlexion,
    #[serde(rename = "MCP-abduction")]
    McpAbduction,
    #[serde(rename = "PIP")]
    Pip,
    #[serde(rename = "TM-flexion")]
    TmFlexion,
    #[serde(rename = "TM-abduction")]
    TmAbduction,
    #[serde(rename = "IP")]
    Ip,
}

impl JointKind {
    /// Config key fragment, e.g. `mcp_flexion`.
    pub fn key(self) -> &'static str {
        match self {
            JointKind::McpFlexion => "mcp_flexion",
            JointKind::McpAbduction => "mcp_abduction",
            JointKind::Pip => "pip",
            JointKind::TmFlexion => "tm_flexion",
            JointKind::TmAbduction => "tm_abduction",
            JointKind::Ip => "ip",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            JointKind::McpFlexion => "MCP-flexion",
            JointKind::McpAbduction => "MCP-abduction",
            JointKind::Pip => "PIP",
            JointKind::TmFlexion => "TM-flexion",
            JointKind::TmAbduction => "TM-abduction",
            JointKind::Ip => "IP",
        }
    }

    pub fn is_abduction(self) -> bool {
        matches!(self, JointKind::McpAbduction | JointKind::TmAbduction)
    }

    /// Default range of motion in degrees and peak speed in rad/s.
    ///
    /// Flexion joints span `[0, range]`, abduction joints are symmetric.
    /// Finger abduction is absent on the measured variant, so its values are
    /// an anthropomorphic guess.
    fn defaults(self) -> (f64, f64) {
        match self {
            JointKind::McpFlexion => (110.0, 35.0),
            JointKind::Pip => (105.0, 15.0),
            JointKind::TmFlexion => (75.0, 17.0),
            JointKind::TmAbduction => (90.0, 12.0),
            JointKind::Ip => (65.0, 9.0),
            JointKind::McpAbduction => (40.0, 10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointLimits {
    pub min: f64,
    pub max: f64,
}

impl JointLimits {
    pub fn from_degrees(min: f64, max: f64) -> Self {
        Self {
            min: min.to_radians(),
            max: max.to_radians(),
        }
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.min && q <= self.max
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub id: String,
    pub kind: JointKind,
    /// Unit rotation axis in the joint's own frame.
    pub axis: Unit<Vector3<f64>>,
    /// Transform from the parent joint frame to this joint's frame at q = 0.
    pub offset: Pose,
    pub limits: JointLimits,
    /// Peak angular speed, rad/s.
    pub max_speed: f64,
}

impl JointSpec {
    fn new(finger: FingerName, kind: JointKind, axis: Vector3<f64>, offset: Pose) -> Result<Self, HandError> {
        let (range, speed) = kind.defaults();
        let limits = if kind.is_abduction() {
            JointLimits::from_degrees(-range / 2.0, range / 2.0)
        } else {
            JointLimits::from_degrees(0.0, range)
        };
        let spec = Self {
            id: format!("{}.{}", finger.key(), kind.key()),
            kind,
            axis: checked_axis(axis)?,
            offset,
            limits,
            max_speed: speed,
        };
        Ok(spec)
    }

    fn check(&self) -> Result<(), HandError> {
        if !(self.limits.min < self.limits.max) {
            return Err(HandError::InvalidGeometry(format!("{}: limits min must be below max", self.id)));
        }
        if !(self.max_speed > 0.0) {
            return Err(HandError::InvalidGeometry(format!("{}: max speed must be positive", self.id)));
        }
        Ok(())
    }
}

fn checked_axis(axis: Vector3<f64>) -> Result<Unit<Vector3<f64>>, HandError> {
    if (axis.norm() - 1.0).abs() > AXIS_NORM_TOL {
        return Err(HandError::InvalidGeometry(format!(
            "axis {:?} is not unit length",
            axis.as_slice()
        )));
    }
    Ok(Unit::new_unchecked(axis))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingerChain {
    pub name: FingerName,
    /// Finger base in the palm frame.
    pub base: Pose,
    pub joints: Vec<JointSpec>,
    /// Proximal and distal segment lengths, meters.
    pub proximal_length: f64,
    pub distal_length: f64,
}

impl FingerChain {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// Number of leading joints that move the given phalanx.
    pub fn joints_moving(&self, phalanx: Phalanx) -> usize {
        match phalanx {
            Phalanx::Proximal => self.joints.len() - 1,
            Phalanx::Distal => self.joints.len(),
        }
    }
}

/// Anthropomorphic defaults; the hardware dimensions are not published.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub proximal_length: f64,
    pub distal_length: f64,
    pub palm_spacing: f64,
    /// Perpendicular distance between the two thumb TM axes.
    pub tm_axis_offset: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            proximal_length: 0.045,
            distal_length: 0.035,
            palm_spacing: 0.022,
            tm_axis_offset: 0.012,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandModel {
    pub variant: Variant,
    pub palm: Pose,
    pub fingers: Vec<FingerChain>,
}

/// IP axis is tilted away from the TM flexion axis.
fn thumb_ip_axis() -> Vector3<f64> {
    let tilt = 20f64.to_radians();
    Vector3::new(0.0, tilt.sin(), -tilt.cos())
}

fn finger_chain(name: FingerName, variant: Variant, geom: &Geometry) -> Result<FingerChain, HandError> {
    let prox = Translation3::new(geom.proximal_length, 0.0, 0.0);
    let (base, joints) = match name {
        FingerName::Thumb => {
            let base = Pose::from_parts(
                Translation3::new(-0.040, 0.030, -0.010),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 60f64.to_radians()),
            );
            let joints = vec![
                JointSpec::new(name, JointKind::TmAbduction, Vector3::y(), Pose::identity())?,
                JointSpec::new(
                    name,
                    JointKind::TmFlexion,
                    -Vector3::z(),
                    Pose::from_parts(Translation3::new(geom.tm_axis_offset, 0.0, 0.0), UnitQuaternion::identity()),
                )?,
                JointSpec::new(
                    name,
                    JointKind::Ip,
                    thumb_ip_axis(),
                    Pose::from_parts(prox, UnitQuaternion::identity()),
                )?,
            ];
            (base, joints)
        }
        _ => {
            let slot = match name {
                FingerName::Index => 1.0,
                FingerName::Middle => 0.0,
                _ => -1.0,
            };
            let base = Pose::translation(0.0, slot * geom.palm_spacing, 0.0);
            let mut joints = Vec::with_capacity(3);
            if variant.has_finger_abduction() {
                joints.push(JointSpec::new(name, JointKind::McpAbduction, Vector3::z(), Pose::identity())?);
            }
            joints.push(JointSpec::new(name, JointKind::McpFlexion, Vector3::y(), Pose::identity())?);
            joints.push(JointSpec::new(
                name,
                JointKind::Pip,
                Vector3::y(),
                Pose::from_parts(prox, UnitQuaternion::identity()),
            )?);
            (base, joints)
        }
    };
    Ok(FingerChain {
        name,
        base,
        joints,
        proximal_length: geom.proximal_length,
        distal_length: geom.distal_length,
    })
}

/// Builds one of the preset hands, optionally overridden from a config.
pub fn load_model(variant: Variant, config: Option<&Config>) -> Result<HandModel, HandError> {
    let mut geom = Geometry::default();
    if let Some(cfg) = config {
        for (key, slot) in [
            ("palm_spacing_mm", &mut geom.palm_spacing),
            ("thumb.tm_axis_offset_mm", &mut geom.tm_axis_offset),
        ] {
            if let Some(mm) = cfg.parse::<f64>(key)? {
                *slot = mm / 1000.0;
            }
        }
        check_keys(cfg, variant)?;
    }
    if !(geom.tm_axis_offset >= 0.0) {
        return Err(HandError::InvalidGeometry("thumb TM axis offset must be non-negative".into()));
    }

    let mut fingers = Vec::new();
    for &name in variant.fingers() {
        let mut g = geom;
        if let Some(cfg) = config {
            if let Some(mm) = cfg.parse::<f64>(&format!("{}.proximal_mm", name.key()))? {
                g.proximal_length = mm / 1000.0;
            }
            if let Some(mm) = cfg.parse::<f64>(&format!("{}.distal_mm", name.key()))? {
                g.distal_length = mm / 1000.0;
            }
        }
        if !(g.proximal_length > 0.0 && g.distal_length > 0.0) {
            return Err(HandError::InvalidGeometry(format!(
                "{}: segment lengths must be positive",
                name.key()
            )));
        }
        let mut chain = finger_chain(name, variant, &g)?;
        if let Some(cfg) = config {
            for joint in &mut chain.joints {
                if let Some(l) = cfg.floats(&format!("{}.limits_deg", joint.id), 2)? {
                    joint.limits = JointLimits::from_degrees(l[0], l[1]);
                }
                if let Some(s) = cfg.parse::<f64>(&format!("{}.max_speed", joint.id))? {
                    joint.max_speed = s;
                }
                if let Some(a) = cfg.floats(&format!("{}.axis", joint.id), 3)? {
                    joint.axis = checked_axis(Vector3::new(a[0], a[1], a[2]))?;
                }
            }
        }
        for joint in &chain.joints {
            joint.check()?;
        }
        fingers.push(chain);
    }

    Ok(HandModel {
        variant,
        palm: Pose::identity(),
        fingers,
    })
}

fn check_keys(cfg: &Config, variant: Variant) -> Result<(), HandError> {
    for key in cfg.keys() {
        if key == "variant" || key.starts_with("linkage.") {
            continue;
        }
        if key == "palm_spacing_mm" || key == "thumb.tm_axis_offset_mm" {
            continue;
        }
        let known = variant.fingers().iter().any(|f| {
            let k = f.key();
            key == format!("{k}.proximal_mm")
                || key == format!("{k}.distal_mm")
                || [
                    JointKind::McpAbduction,
                    JointKind::McpFlexion,
                    JointKind::Pip,
                    JointKind::TmAbduction,
                    JointKind::TmFlexion,
                    JointKind::Ip,
                ]
                .iter()
                .any(|j| {
                    ["limits_deg", "max_speed", "axis"]
                        .iter()
                        .any(|field| key == format!("{k}.{}.{field}", j.key()))
                })
        });
        if !known {
            return Err(ConfigError::UnknownKey(key.to_owned()).into());
        }
    }
    Ok(())
}

impl HandModel {
    /// Resolves `--model <variant|path>`: a preset name, or a config file
    /// whose `variant` key names the preset to override.
    pub fn from_spec(spec: &str) -> Result<Self, HandError> {
        if let Ok(variant) = spec.parse::<Variant>() {
            return load_model(variant, None);
        }
        let path = Path::new(spec);
        if !path.exists() {
            return Err(HandError::UnknownVariant(spec.to_owned()));
        }
        let cfg = Config::load(path)?;
        let variant = cfg
            .get("variant")
            .ok_or_else(|| HandError::UnknownVariant(format!("{spec}: missing `variant` key")))?
            .parse()?;
        load_model(variant, Some(&cfg))
    }

    pub fn dof(&self) -> usize {
        self.fingers.iter().map(FingerChain::dof).sum()
    }

    pub fn finger(&self, name: FingerName) -> Option<(usize, &FingerChain)> {
        self.fingers.iter().position(|f| f.name == name).map(|i| (i, &self.fingers[i]))
    }

    /// Index of the finger's first joint in the canonical joint order.
    pub fn joint_offset(&self, finger_index: usize) -> usize {
        self.fingers[..finger_index].iter().map(FingerChain::dof).sum()
    }

    pub fn joints(&self) -> impl Iterator<Item = &JointSpec> {
        self.fingers.iter().flat_map(|f| f.joints.iter())
    }

    fn check_dim(&self, n: usize) -> Result<(), HandError> {
        if n != self.dof() {
            return Err(HandError::DimensionMismatch {
                expected: self.dof(),
                got: n,
            });
        }
        Ok(())
    }

    fn finger_slot(&self, finger: FingerName, phalanx: Phalanx) -> Result<(usize, &FingerChain), HandError> {
        self.finger(finger).ok_or(HandError::UnknownPhalanx { finger, phalanx })
    }
}

/// Joint angles in canonical order plus a monotonic timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub angles: Vec<f64>,
    pub timestamp_ns: u64,
}

impl JointState {
    pub fn new(angles: Vec<f64>) -> Self {
        Self { angles, timestamp_ns: 0 }
    }

    pub fn zeros(model: &HandModel) -> Self {
        Self::new(vec![0.0; model.dof()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub within_limits: Vec<bool>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.within_limits.iter().all(|&ok| ok)
    }

    pub fn violations(&self) -> Vec<usize> {
        self.within_limits
            .iter()
            .enumerate()
            .filter_map(|(i, &ok)| (!ok).then_some(i))
            .collect()
    }
}

pub fn validate_state(model: &HandModel, state: &JointState) -> Result<ValidationReport, HandError> {
    model.check_dim(state.angles.len())?;
    let within_limits = model
        .joints()
        .zip(&state.angles)
        .map(|(j, &q)| j.limits.contains(q))
        .collect();
    Ok(ValidationReport { within_limits })
}

/// World frames of one finger at a given state.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerFrames {
    /// Frame of each joint after its rotation is applied.
    pub joints: Vec<Pose>,
    pub proximal: Pose,
    pub distal: Pose,
    pub tip: Pose,
}

impl FingerFrames {
    pub fn phalanx(&self, phalanx: Phalanx) -> &Pose {
        match phalanx {
            Phalanx::Proximal => &self.proximal,
            Phalanx::Distal => &self.distal,
        }
    }
}

fn chain_frames(palm: &Pose, finger: &FingerChain, angles: &[f64]) -> FingerFrames {
    let mut frame = palm * finger.base;
    let mut joints = Vec::with_capacity(finger.dof());
    for (joint, &q) in finger.joints.iter().zip(angles) {
        frame = frame * joint.offset * UnitQuaternion::from_axis_angle(&joint.axis, q);
        joints.push(frame);
    }
    let n = joints.len();
    let proximal = joints[n - 2];
    let distal = joints[n - 1];
    let tip = distal * Translation3::new(finger.distal_length, 0.0, 0.0);
    FingerFrames {
        joints,
        proximal,
        distal,
        tip,
    }
}

pub fn forward_kinematics(model: &HandModel, state: &JointState) -> Result<Vec<FingerFrames>, HandError> {
    model.check_dim(state.angles.len())?;
    let mut out = Vec::with_capacity(model.fingers.len());
    let mut at = 0;
    for finger in &model.fingers {
        out.push(chain_frames(&model.palm, finger, &state.angles[at..at + finger.dof()]));
        at += finger.dof();
    }
    Ok(out)
}

/// A point fixed in a phalanx frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    pub finger: FingerName,
    pub phalanx: Phalanx,
    pub point: Vector3<f64>,
}

impl ContactPoint {
    pub fn new(finger: FingerName, phalanx: Phalanx, point: Vector3<f64>) -> Self {
        Self { finger, phalanx, point }
    }

    /// Center of the pad at the fingertip end of the distal phalanx.
    pub fn fingertip(model: &HandModel, finger: FingerName) -> Option<Self> {
        let (_, chain) = model.finger(finger)?;
        Some(Self::new(finger, Phalanx::Distal, Vector3::new(chain.distal_length, 0.0, 0.0)))
    }
}

/// Palm-frame position of a contact point.
pub fn contact_position(model: &HandModel, state: &JointState, contact: &ContactPoint) -> Result<Vector3<f64>, HandError> {
    let (fi, finger) = model.finger_slot(contact.finger, contact.phalanx)?;
    model.check_dim(state.angles.len())?;
    let off = model.joint_offset(fi);
    let frames = chain_frames(&model.palm, finger, &state.angles[off..off + finger.dof()]);
    Ok((frames.phalanx(contact.phalanx) * Point3::from(contact.point)).coords)
}

/// Linear-velocity Jacobian (3 x dof) of a contact point.
pub fn contact_jacobian(model: &HandModel, state: &JointState, contact: &ContactPoint) -> Result<Matrix3xX<f64>, HandError> {
    let full = spatial_jacobian(model, state, contact)?;
    Ok(full.fixed_rows::<3>(0).into_owned())
}

/// Experimental 6 x dof Jacobian: linear rows followed by angular rows.
///
/// Only the linear block is used for torque recovery; the angular block is
/// provided for callers that want to map contact couples.
pub fn contact_jacobian_spatial(model: &HandModel, state: &JointState, contact: &ContactPoint) -> Result<DMatrix<f64>, HandError> {
    spatial_jacobian(model, state, contact)
}

fn spatial_jacobian(model: &HandModel, state: &JointState, contact: &ContactPoint) -> Result<DMatrix<f64>, HandError> {
    model.check_dim(state.angles.len())?;
    let (fi, finger) = model.finger_slot(contact.finger, contact.phalanx)?;
    let off = model.joint_offset(fi);
    let frames = chain_frames(&model.palm, finger, &state.angles[off..off + finger.dof()]);
    let p = frames.phalanx(contact.phalanx) * Point3::from(contact.point);

    let mut jac = DMatrix::zeros(6, model.dof());
    for (j, (joint, frame)) in finger
        .joints
        .iter()
        .zip(&frames.joints)
        .take(finger.joints_moving(contact.phalanx))
        .enumerate()
    {
        let axis = frame.rotation * joint.axis.into_inner();
        let origin = frame.translation.vector;
        let lin = axis.cross(&(p.coords - origin));
        jac.fixed_view_mut::<3, 1>(0, off + j).copy_from(&lin);
        jac.fixed_view_mut::<3, 1>(3, off + j).copy_from(&axis);
    }
    Ok(jac)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkspaceRow {
    pub joint: String,
    pub kind: JointKind,
    pub min_deg: f64,
    pub max_deg: f64,
    pub range_deg: f64,
    pub max_speed: f64,
}

/// Degrees, rounded to nine decimals so round-tripped presets print exactly.
fn report_degrees(rad: f64) -> f64 {
    (rad.to_degrees() * 1e9).round() / 1e9
}

pub fn workspace_report(model: &HandModel) -> Vec<WorkspaceRow> {
    model
        .joints()
        .map(|j| WorkspaceRow {
            joint: j.id.clone(),
            kind: j.kind,
            min_deg: report_degrees(j.limits.min),
            max_deg: report_degrees(j.limits.max),
            range_deg: report_degrees(j.limits.span()),
            max_speed: j.max_speed,
        })
        .collect()
}
