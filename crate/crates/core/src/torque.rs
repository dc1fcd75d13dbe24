//! Joint torques from contact forces through the Jacobian transpose.
//!
//! Every contact is a point force expressed in the palm frame and applied at
//! a point fixed in a phalanx frame. The torque it induces is `J_c(q)^T F_c`.
//! When some contacts are not observed the recovered torque misses exactly
//! their contribution, and joints with no observed contact distal to them are
//! unidentifiable; [`observability`] reports that subspace.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::hand::{contact_jacobian, ContactPoint, FingerName, HandError, HandModel, JointState, Phalanx};

/// Peak fingertip force measured on the thumb, N.
pub const DEFAULT_FORCE_CEILING: f64 = 70.0;
/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-9;
pub const DEFAULT_RIDGE: f64 = 1e-8;
const RIDGE_PASSES: usize = 4;

#[derive(Debug, Error)]
pub enum TorqueError {
    #[error(transparent)]
    Hand(#[from] HandError),
    #[error("contact force is not finite")]
    NonFinite,
    #[error("contact force {magnitude:.2} N exceeds the sensor ceiling of {ceiling} N")]
    AboveCeiling { magnitude: f64, ceiling: f64 },
    #[error("finger {0:?} is not part of this hand")]
    UnknownFinger(FingerName),
    #[error("singular configuration: fingertip Jacobian is rank deficient")]
    SingularConfiguration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactWrench {
    pub contact: ContactPoint,
    /// Palm-frame force, N.
    pub force: Vector3<f64>,
}

impl ContactWrench {
    /// Checks finiteness and the default force ceiling.
    pub fn new(contact: ContactPoint, force: Vector3<f64>) -> Result<Self, TorqueError> {
        Self::with_ceiling(contact, force, DEFAULT_FORCE_CEILING)
    }

    pub fn with_ceiling(contact: ContactPoint, force: Vector3<f64>, ceiling: f64) -> Result<Self, TorqueError> {
        if !(force.iter().chain(contact.point.iter()).all(|v| v.is_finite())) {
            return Err(TorqueError::NonFinite);
        }
        let magnitude = force.norm();
        if magnitude > ceiling {
            return Err(TorqueError::AboveCeiling { magnitude, ceiling });
        }
        Ok(Self { contact, force })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TorqueEstimate {
    /// N*m, canonical joint order.
    pub torques: Vec<f64>,
    /// Rank of the stacked contact Jacobian.
    pub rank: usize,
    /// Dimension of the torque subspace the contacts cannot explain.
    pub unobservable_dim: usize,
}

impl TorqueEstimate {
    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.torques)
    }
}

/// `tau = sum_c J_c(q)^T F_c`.
pub fn joint_torques(model: &HandModel, state: &JointState, contacts: &[ContactWrench]) -> Result<TorqueEstimate, TorqueError> {
    let mut tau = DVector::zeros(model.dof());
    let mut jacobians = Vec::with_capacity(contacts.len());
    for c in contacts {
        if !c.force.iter().all(|v| v.is_finite()) {
            return Err(TorqueError::NonFinite);
        }
        let jac = contact_jacobian(model, state, &c.contact)?;
        tau += jac.transpose() * c.force;
        jacobians.push(jac);
    }
    if contacts.is_empty() {
        // still reject mismatched states
        crate::hand::validate_state(model, state)?;
    }
    let rank = stacked_rank(&jacobians, model.dof()).rank;
    Ok(TorqueEstimate {
        torques: tau.as_slice().to_vec(),
        rank,
        unobservable_dim: model.dof() - rank,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observability {
    pub rank: usize,
    pub nullspace_dim: usize,
    /// Orthonormal torque directions no observed contact can produce.
    pub unidentifiable: Vec<Vec<f64>>,
}

fn stacked_rank(jacobians: &[nalgebra::Matrix3xX<f64>], dof: usize) -> Observability {
    // pad with zero rows so the SVD returns a full right basis
    let rows = (3 * jacobians.len()).max(dof);
    let mut stacked = DMatrix::zeros(rows, dof);
    for (i, jac) in jacobians.iter().enumerate() {
        stacked.view_mut((3 * i, 0), (3, dof)).copy_from(jac);
    }
    let svd = stacked.svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let sigma_max = svd.singular_values.max();
    let cutoff = RANK_TOL * sigma_max;
    let mut rank = 0;
    let mut unidentifiable = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if sigma_max > 0.0 && s > cutoff {
            rank += 1;
        } else {
            unidentifiable.push(v_t.row(i).iter().copied().collect());
        }
    }
    Observability {
        rank,
        nullspace_dim: dof - rank,
        unidentifiable,
    }
}

/// Rank of the observed-contact Jacobian and the torque directions it
/// cannot explain.
pub fn observability(model: &HandModel, state: &JointState, observed: &[ContactPoint]) -> Result<Observability, TorqueError> {
    crate::hand::validate_state(model, state)?;
    let jacobians = observed
        .iter()
        .map(|c| contact_jacobian(model, state, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(stacked_rank(&jacobians, model.dof()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FingertipForce {
    /// Palm-frame force, N.
    pub force: [f64; 3],
    /// `|J^T F - tau|` over the finger's joints, N*m.
    pub residual: f64,
}

/// Least-squares fingertip force explaining one finger's torques.
///
/// The normal equations are damped by `ridge` (`|J^T F - tau|^2 + ridge |F|^2`)
/// and refined a few times, so well-conditioned fingers get the undamped
/// least-squares force while rank-deficient directions stay damped to zero.
/// With `ridge == 0` a rank-deficient fingertip Jacobian is an error.
pub fn estimate_fingertip_force(
    model: &HandModel,
    state: &JointState,
    tau: &[f64],
    finger: FingerName,
    ridge: f64,
) -> Result<FingertipForce, TorqueError> {
    let (fi, chain) = model.finger(finger).ok_or(TorqueError::UnknownFinger(finger))?;
    if tau.len() != model.dof() {
        return Err(HandError::DimensionMismatch {
            expected: model.dof(),
            got: tau.len(),
        }
        .into());
    }
    let tip = ContactPoint::new(finger, Phalanx::Distal, Vector3::new(chain.distal_length, 0.0, 0.0));
    let off = model.joint_offset(fi);
    let n = chain.dof();
    let jac = contact_jacobian(model, state, &tip)?.columns(off, n).into_owned();
    let tau_f = DVector::from_column_slice(&tau[off..off + n]);

    let normal: Matrix3<f64> = &jac * jac.transpose() + Matrix3::identity() * ridge;
    let force = if ridge == 0.0 {
        let rank = jac.clone().svd(false, false).rank(RANK_TOL * jac.norm().max(f64::MIN_POSITIVE));
        if rank < 3 {
            return Err(TorqueError::SingularConfiguration);
        }
        normal.lu().solve(&(&jac * &tau_f)).ok_or(TorqueError::SingularConfiguration)?
    } else {
        let chol = normal.cholesky().ok_or(TorqueError::SingularConfiguration)?;
        // Iterated Tikhonov: each pass shrinks the ridge bias along a
        // direction with singular value s by ridge / (s^2 + ridge), while
        // directions with s = 0 stay at zero.
        let mut force = Vector3::zeros();
        for _ in 0..RIDGE_PASSES {
            let r = &tau_f - jac.transpose() * force;
            force += chol.solve(&(&jac * r));
        }
        force
    };
    let residual = (jac.transpose() * force - tau_f).norm();
    Ok(FingertipForce {
        force: [force.x, force.y, force.z],
        residual,
    })
}
