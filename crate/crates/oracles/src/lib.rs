//! Naive reference implementations for tests.
//!
//! Everything here is written for obviousness, not speed, and avoids the
//! code paths it is used to check: plain `[f64; 16]` transforms instead of
//! nalgebra isometries, bisection instead of the closed-form four-bar
//! roots, a byte-at-a-time frame scanner, and an exhaustive nearest-sample
//! search.

use periop::hand::{contact_position, ContactPoint, HandModel, JointState, Pose};
use periop::linkage::FourBarGeometry;
use periop::session::{crc8, Sample, StreamId};

pub type Mat4 = [f64; 16];

pub fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[r * 4 + c] = (0..4).map(|k| a[r * 4 + k] * b[k * 4 + c]).sum();
        }
    }
    out
}

pub fn pose_matrix(p: &Pose) -> Mat4 {
    let h = p.to_homogeneous();
    let mut out = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[r * 4 + c] = h[(r, c)];
        }
    }
    out
}

/// Rodrigues rotation about a unit axis.
pub fn rotation(axis: [f64; 3], q: f64) -> Mat4 {
    let [x, y, z] = axis;
    let (s, c) = q.sin_cos();
    let t = 1.0 - c;
    [
        t * x * x + c,
        t * x * y - s * z,
        t * x * z + s * y,
        0.0,
        t * x * y + s * z,
        t * y * y + c,
        t * y * z - s * x,
        0.0,
        t * x * z - s * y,
        t * y * z + s * x,
        t * z * z + c,
        0.0,
        0.0,
        0.0,
        0.0,
        1.0,
    ]
}

pub fn translation(x: f64, y: f64, z: f64) -> Mat4 {
    [1.0, 0.0, 0.0, x, 0.0, 1.0, 0.0, y, 0.0, 0.0, 1.0, z, 0.0, 0.0, 0.0, 1.0]
}

/// Fingertip positions of every finger by multiplying per-joint 4x4
/// matrices.
pub fn fingertips(model: &HandModel, state: &JointState) -> Vec<[f64; 3]> {
    let mut at = 0;
    model
        .fingers
        .iter()
        .map(|f| {
            let mut t = mat_mul(&pose_matrix(&model.palm), &pose_matrix(&f.base));
            for j in &f.joints {
                let a = j.axis.into_inner();
                t = mat_mul(&t, &pose_matrix(&j.offset));
                t = mat_mul(&t, &rotation([a.x, a.y, a.z], state.angles[at]));
                at += 1;
            }
            t = mat_mul(&t, &translation(f.distal_length, 0.0, 0.0));
            [t[3], t[7], t[11]]
        })
        .collect()
}

/// Central-difference Jacobian of a contact point, column-major `3 x n`.
pub fn fd_jacobian(model: &HandModel, state: &JointState, contact: &ContactPoint, h: f64) -> Vec<[f64; 3]> {
    (0..state.angles.len())
        .map(|j| {
            let mut plus = state.clone();
            let mut minus = state.clone();
            plus.angles[j] += h;
            minus.angles[j] -= h;
            let p = contact_position(model, &plus, contact).unwrap();
            let m = contact_position(model, &minus, contact).unwrap();
            [(p.x - m.x) / (2.0 * h), (p.y - m.y) / (2.0 * h), (p.z - m.z) / (2.0 * h)]
        })
        .collect()
}

/// `|B - A| - coupler` for the given input and output angles.
pub fn closure(g: &FourBarGeometry, theta: f64, phi: f64) -> f64 {
    let (ai, ao) = (theta + g.input_offset, phi + g.output_offset);
    let ax = g.input * ai.cos();
    let ay = g.input * ai.sin();
    let bx = g.ground + g.output * ao.cos();
    let by = g.output * ao.sin();
    ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt() - g.coupler
}

/// All output angles in `[-pi, pi)` closing the loop at `theta`, by a grid
/// scan for sign changes followed by bisection.
pub fn fourbar_roots(g: &FourBarGeometry, theta: f64, grid: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let f = |phi: f64| closure(g, theta, phi);
    let step = 2.0 * PI / grid as f64;
    let mut roots = Vec::new();
    for i in 0..grid {
        let (mut lo, mut hi) = (-PI + i as f64 * step, -PI + (i + 1) as f64 * step);
        let (flo, fhi) = (f(lo), f(hi));
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo.signum() == fhi.signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid).signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    roots
}

/// Smallest angular distance between `x` and any of `roots`.
pub fn angular_distance(x: f64, roots: &[f64]) -> f64 {
    use std::f64::consts::{PI, TAU};
    roots
        .iter()
        .map(|r| {
            let d = (x - r).rem_euclid(TAU);
            d.min(TAU - d)
        })
        .fold(PI, f64::min)
}

/// Byte-at-a-time scan: at each offset, accept a frame if the sync byte,
/// CRC and 12-bit count all check out, then jump past it; otherwise move
/// one byte. Returns `(joint, count, seq)` triples.
pub fn scan_frames(bytes: &[u8]) -> Vec<(u8, u16, u8)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + 6 <= bytes.len() {
        let b = &bytes[i..i + 6];
        if b[0] == 0xAA && crc8(&b[..5]) == b[5] && b[3] < 16 {
            out.push((b[1], b[2] as u16 | (b[3] as u16) << 8, b[4]));
            i += 6;
        } else {
            i += 1;
        }
    }
    out
}

/// Bitwise CRC-8 (poly 0x07), independent of the table in the parser.
pub fn crc8_bitwise(bytes: &[u8]) -> u8 {
    let mut crc = 0u8;
    for &b in bytes {
        crc ^= b;
        for _ in 0..8 {
            crc = if crc & 0x80 != 0 { (crc << 1) ^ 0x07 } else { crc << 1 };
        }
    }
    crc
}

/// Exhaustive nearest-sample matcher. Returns, per kept tick, the grid time
/// and the chosen source timestamp per session stream, plus the number of
/// dropped ticks.
pub fn match_nearest(samples: &[Sample], period_ns: u64) -> (Vec<(u64, [u64; 5])>, usize) {
    let per: Vec<Vec<u64>> = StreamId::SESSION
        .iter()
        .map(|&id| samples.iter().filter(|s| s.stream == id).map(|s| s.timestamp_ns).collect())
        .collect();
    let start = per.iter().map(|v| *v.iter().min().unwrap()).max().unwrap();
    let end = per.iter().map(|v| *v.iter().max().unwrap()).min().unwrap();
    let mut kept = Vec::new();
    let mut dropped = 0;
    let mut g = start;
    while g <= end {
        let mut picks = [0u64; 5];
        let mut ok = true;
        for (k, ts) in per.iter().enumerate() {
            // earliest among the minimal distances
            let mut best = ts[0];
            for &t in ts {
                let (d, bd) = (t.abs_diff(g), best.abs_diff(g));
                if d < bd || (d == bd && t < best) {
                    best = t;
                }
            }
            picks[k] = best;
            ok &= 2 * best.abs_diff(g) <= period_ns;
        }
        if ok {
            kept.push((g, picks));
        } else {
            dropped += 1;
        }
        g += period_ns;
    }
    (kept, dropped)
}

/// `q(t + k) - q(t)` with the index clamped to the last step.
pub fn chunked_deltas(traj: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let last = traj.len() - 1;
    (0..traj.len())
        .map(|t| {
            let ahead = &traj[(t + k).min(last)];
            ahead.iter().zip(&traj[t]).map(|(a, b)| a - b).collect()
        })
        .collect()
}

/// Two-sided binomial bounds `p ± z * sqrt(p (1 - p) / n)`.
pub fn binomial_band(p: f64, n: usize, z: f64) -> (f64, f64) {
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    (p - z * sd, p + z * sd)
}
