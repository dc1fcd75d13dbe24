//! Browser bindings for the demo page in `www/`.
//!
//! Each export has a plain Rust twin returning `Result<_, String>` so the
//! logic can be exercised natively; the `#[wasm_bindgen]` wrappers only
//! convert errors into JavaScript exceptions.

use periop::hand::{forward_kinematics, load_model, HandModel, JointState, Variant};
use periop::linkage::{grashof_check, sweep, Branch, FourBarGeometry};
use periop::tactile::{contact_summary, delta, synth_press, SensorId, SynthParams, DEFAULT_HEIGHT, DEFAULT_WIDTH};
use wasm_bindgen::prelude::*;

fn model(variant: &str) -> Result<HandModel, String> {
    let v: Variant = variant.parse().map_err(|e| format!("{e}"))?;
    load_model(v, None).map_err(|e| e.to_string())
}

/// `[theta_deg, phi_deg, ...]` over every assemblable interval of the
/// open-branch linkage with lengths in millimeters. Intervals are separated
/// by a `NaN, NaN` pair.
pub fn linkage_points(ground: f64, input: f64, coupler: f64, output: f64, step_deg: f64) -> Result<Vec<f64>, String> {
    if ![ground, input, coupler, output].iter().all(|l| l.is_finite() && *l > 0.0) {
        return Err("link lengths must be positive".into());
    }
    let g = FourBarGeometry::new(ground * 1e-3, input * 1e-3, coupler * 1e-3, output * 1e-3);
    let intervals = grashof_check(&g).range.intervals;
    if intervals.is_empty() {
        return Err("this linkage cannot be assembled at any input angle".into());
    }
    let mut out = Vec::new();
    for (k, (lo, hi)) in intervals.into_iter().enumerate() {
        if k > 0 {
            out.extend([f64::NAN, f64::NAN]);
        }
        let g = g.with_branch(Branch::Open, 0.5 * (lo + hi));
        for row in sweep(&g, lo, hi, step_deg.to_radians()).map_err(|e| e.to_string())? {
            out.extend([row.theta.to_degrees(), row.phi.to_degrees()]);
        }
    }
    Ok(out)
}

/// Joint limits in degrees as `[min, max, ...]` in state order.
pub fn limits_deg(variant: &str) -> Result<Vec<f64>, String> {
    Ok(model(variant)?.joints().flat_map(|j| [j.limits.min.to_degrees(), j.limits.max.to_degrees()]).collect())
}

pub fn joint_names(variant: &str) -> Result<Vec<String>, String> {
    Ok(model(variant)?.joints().map(|j| j.id.clone()).collect())
}

/// Joint origins and fingertip of every finger as `[x, y, z, ...]` in
/// millimeters, fingers separated by a `NaN, NaN, NaN` triple.
pub fn finger_points(variant: &str, angles_deg: &[f64]) -> Result<Vec<f64>, String> {
    let model = model(variant)?;
    let state = JointState::new(angles_deg.iter().map(|a| a.to_radians()).collect());
    let frames = forward_kinematics(&model, &state).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for (k, f) in frames.iter().enumerate() {
        if k > 0 {
            out.extend([f64::NAN; 3]);
        }
        for pose in f.joints.iter().chain([&f.tip]) {
            out.extend(pose.translation.vector.iter().map(|v| v * 1e3));
        }
    }
    Ok(out)
}

/// A synthetic press rendered as RGBA on the default sensor size.
pub struct Press {
    pub rgba: Vec<u8>,
    /// Centroid of the contact region against a zero-force frame.
    pub centroid: Option<(f64, f64)>,
    pub pixels: usize,
}

pub fn press(row: f64, col: f64, force: f64, seed: u64) -> Result<Press, String> {
    let params = SynthParams::default();
    let frame = synth_press(SensorId::IndexDistal, row, col, force, seed, &params).map_err(|e| e.to_string())?;
    let rest = synth_press(SensorId::IndexDistal, row, col, 0.0, seed, &params).map_err(|e| e.to_string())?;
    let summary = contact_summary(&delta(&frame, &rest).map_err(|e| e.to_string())?, 12);
    let rgba = frame.image.data.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect();
    Ok(Press {
        rgba,
        centroid: summary.centroid,
        pixels: summary.count,
    })
}

#[wasm_bindgen(js_name = linkageCurve)]
pub fn linkage_curve(ground: f64, input: f64, coupler: f64, output: f64, step_deg: f64) -> Result<Vec<f64>, JsError> {
    linkage_points(ground, input, coupler, output, step_deg).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = jointLimits)]
pub fn joint_limits(variant: &str) -> Result<Vec<f64>, JsError> {
    limits_deg(variant).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = jointNames)]
pub fn joint_names_js(variant: &str) -> Result<Vec<String>, JsError> {
    joint_names(variant).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = fingerPoints)]
pub fn finger_points_js(variant: &str, angles_deg: &[f64]) -> Result<Vec<f64>, JsError> {
    finger_points(variant, angles_deg).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sensorSize)]
pub fn sensor_size() -> Vec<u32> {
    vec![DEFAULT_HEIGHT as u32, DEFAULT_WIDTH as u32]
}

/// `[r, g, b, a, ...]` row-major; `pressCentroid` reports the detected
/// contact.
#[wasm_bindgen(js_name = tactilePress)]
pub fn tactile_press(row: f64, col: f64, force: f64, seed: u32) -> Result<Vec<u8>, JsError> {
    press(row, col, force, seed as u64).map(|p| p.rgba).map_err(|e| JsError::new(&e))
}

/// `[row, col, pixels]`, or an empty array without contact.
#[wasm_bindgen(js_name = pressCentroid)]
pub fn press_centroid(row: f64, col: f64, force: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    let p = press(row, col, force, seed as u64).map_err(|e| JsError::new(&e))?;
    Ok(p.centroid.map(|(r, c)| vec![r, c, p.pixels as f64]).unwrap_or_default())
}
