use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Episode, ExportError};
use crate::session::ARM_JOINTS;
use crate::tactile::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Multiplicative brightness offset bound.
    pub brightness: f64,
    /// Hue rotation bound, as a fraction of the hue circle.
    pub hue: f64,
    pub joint_noise_deg: f64,
    pub joint_noise_prob: f64,
    pub wrist_dropout: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            brightness: 0.1,
            hue: 0.1,
            joint_noise_deg: 10.0,
            joint_noise_prob: 0.1,
            wrist_dropout: 0.3,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Everything off: `augment` returns its input unchanged.
    pub fn identity() -> Self {
        Self {
            brightness: 0.0,
            hue: 0.0,
            joint_noise_deg: 0.0,
            joint_noise_prob: 0.0,
            wrist_dropout: 0.0,
            seed: 0,
        }
    }

    fn check(&self) -> Result<(), ExportError> {
        for (name, v) in [("brightness", self.brightness), ("hue", self.hue), ("joint noise", self.joint_noise_deg)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ExportError::InvalidConfig(format!("{name} bound {v}")));
            }
        }
        for (name, p) in [("joint noise probability", self.joint_noise_prob), ("dropout", self.wrist_dropout)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ExportError::InvalidConfig(format!("{name} {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AugmentStats {
    pub steps: usize,
    pub noised_steps: usize,
    /// Largest absolute arm perturbation applied, radians.
    pub max_noise_rad: f64,
    pub wrist_images: usize,
    pub dropped_images: usize,
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

/// Scales HSV value by `1 + brightness` and rotates hue by `hue` turns.
pub fn jitter_image(img: &mut Image, brightness: f64, hue: f64) {
    for px in img.data.chunks_exact_mut(3) {
        let (h, s, v) = rgb_to_hsv(px[0] as f64 / 255.0, px[1] as f64 / 255.0, px[2] as f64 / 255.0);
        let (r, g, b) = hsv_to_rgb(h + hue, s, (v * (1.0 + brightness)).min(1.0));
        for (dst, c) in px.iter_mut().zip([r, g, b]) {
            *dst = (c * 255.0).round().clamp(0.0, 255.0) as u8;
        }
    }
}

/// Randomizes states and wrist images of a copy of `ep`. Per step, in
/// order: one draw decides arm noise (then one uniform draw per arm
/// joint); per wrist image, brightness and hue offsets (only when either
/// bound is non-zero) then one dropout draw. Actions, timestamps and
/// tactile images are never touched.
pub fn augment(ep: &Episode, cfg: &AugmentConfig) -> Result<(Episode, AugmentStats), ExportError> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = ep.clone();
    let mut stats = AugmentStats {
        steps: ep.steps.len(),
        ..Default::default()
    };
    let bound = cfg.joint_noise_deg.to_radians();
    let color = cfg.brightness > 0.0 || cfg.hue > 0.0;
    for step in &mut out.steps {
        if rng.gen::<f64>() < cfg.joint_noise_prob {
            stats.noised_steps += 1;
            for q in &mut step.joints[..ARM_JOINTS] {
                let n = if bound > 0.0 { rng.gen_range(-bound..=bound) } else { 0.0 };
                stats.max_noise_rad = stats.max_noise_rad.max(n.abs());
                *q += n;
            }
        }
        for img in &mut step.wrist {
            stats.wrist_images += 1;
            if color {
                let b = rng.gen_range(-cfg.brightness..=cfg.brightness);
                let h = rng.gen_range(-cfg.hue..=cfg.hue);
                jitter_image(img, b, h);
            }
            if rng.gen::<f64>() < cfg.wrist_dropout {
                stats.dropped_images += 1;
                img.data.fill(0);
            }
        }
    }
    Ok((out, stats))
}
