//! Tactile frames, delta images and per-hand super-images.
//!
//! Images are `H x W x 3` interleaved 8-bit RGB, row-major. On disk and
//! inside session files a frame is a 16-byte header followed by the raw
//! pixel bytes:
//!
//! ```text
//! offset  size  field
//!      0     1  source id (see SensorId / session stream ids)
//!      1     2  height, u16 little-endian
//!      3     2  width, u16 little-endian
//!      5     8  timestamp ns, u64 little-endian
//!     13     3  reserved, zero
//!     16   H*W*3 pixels
//! ```

use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub const FRAME_HEADER_LEN: usize = 16;
pub const DEFAULT_HEIGHT: usize = 120;
pub const DEFAULT_WIDTH: usize = 160;
pub const DEFAULT_THRESHOLD: u8 = 12;
/// Neutral value of an offset-128 delta image.
pub const DELTA_ZERO: u8 = 128;

#[derive(Debug, Error, PartialEq)]
pub enum TactileError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("sensor mismatch: {0:?} vs {1:?}")]
    SensorMismatch(SensorId, SensorId),
    #[error("super-image needs exactly one thumb, index and middle distal frame")]
    WrongSensorSet,
    #[error("frame timestamps spread over {spread_ns} ns, more than the {window_ns} ns window")]
    TimestampSpread { spread_ns: u64, window_ns: u64 },
    #[error("contact point ({row}, {col}) outside a {height}x{width} image")]
    OutOfBounds { row: f64, col: f64, height: usize, width: usize },
    #[error("force must be finite and non-negative, got {0}")]
    InvalidForce(f64),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown sensor id {0}")]
    UnknownSensor(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum SensorId {
    ThumbDistal = 0,
    IndexDistal = 1,
    MiddleDistal = 2,
    ThumbProximal = 3,
    IndexProximal = 4,
    MiddleProximal = 5,
    Palm = 6,
}

impl SensorId {
    /// Fixed order of the constituents of a super-image.
    pub const SUPER_ORDER: [SensorId; 3] = [SensorId::ThumbDistal, SensorId::IndexDistal, SensorId::MiddleDistal];

    pub fn from_u8(v: u8) -> Result<Self, TactileError> {
        use SensorId::*;
        Ok(match v {
            0 => ThumbDistal,
            1 => IndexDistal,
            2 => MiddleDistal,
            3 => ThumbProximal,
            4 => IndexProximal,
            5 => MiddleProximal,
            6 => Palm,
            other => return Err(TactileError::UnknownSensor(other)),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorId::ThumbDistal => "thumb-distal",
            SensorId::IndexDistal => "index-distal",
            SensorId::MiddleDistal => "middle-distal",
            SensorId::ThumbProximal => "thumb-proximal",
            SensorId::IndexProximal => "index-proximal",
            SensorId::MiddleProximal => "middle-proximal",
            SensorId::Palm => "palm",
        }
    }
}

impl FromStr for SensorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        (0..=6)
            .map(|v| SensorId::from_u8(v).unwrap())
            .find(|id| id.name() == s.trim())
            .ok_or_else(|| format!("unknown sensor `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    /// Frame id used when a super-image is serialized.
    pub fn super_image_id(self) -> u8 {
        match self {
            Hand::Left => 0x10,
            Hand::Right => 0x11,
        }
    }
}

/// `H x W x 3` interleaved RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width * 3],
        }
    }

    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Result<Self, TactileError> {
        if data.len() != height * width * 3 {
            return Err(TactileError::DimensionMismatch(format!(
                "{} bytes for a {height}x{width}x3 image",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Columns `[col, col + width)` as a new image.
    pub fn crop_columns(&self, col: usize, width: usize) -> Image {
        let mut data = Vec::with_capacity(self.height * width * 3);
        for r in 0..self.height {
            let start = (r * self.width + col) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Image {
            height: self.height,
            width,
            data,
        }
    }

    /// Binary PPM (P6), handy for eyeballing frames.
    pub fn write_ppm(&self, mut out: impl Write) -> std::io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.data)
    }
}

/// Serializes an image behind the 16-byte frame header.
pub fn encode_frame(id: u8, timestamp_ns: u64, image: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + image.data.len());
    out.push(id);
    out.extend_from_slice(&(image.height as u16).to_le_bytes());
    out.extend_from_slice(&(image.width as u16).to_le_bytes());
    out.extend_from_slice(&timestamp_ns.to_le_bytes());
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&image.data);
    out
}

/// Inverse of [`encode_frame`]: `(id, timestamp, image)`.
pub fn decode_frame(bytes: &[u8]) -> Result<(u8, u64, Image), TactileError> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(TactileError::Malformed(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let height = u16::from_le_bytes([bytes[1], bytes[2]]) as usize;
    let width = u16::from_le_bytes([bytes[3], bytes[4]]) as usize;
    let ts = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes"));
    let pixels = &bytes[FRAME_HEADER_LEN..];
    if pixels.len() != height * width * 3 {
        return Err(TactileError::Malformed(format!(
            "header says {height}x{width} but {} pixel bytes follow",
            pixels.len()
        )));
    }
    Ok((bytes[0], ts, Image::from_raw(height, width, pixels.to_vec())?))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TactileFrame {
    pub sensor: SensorId,
    pub timestamp_ns: u64,
    pub image: Image,
}

impl TactileFrame {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_frame(self.sensor as u8, self.timestamp_ns, &self.image)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TactileError> {
        let (id, timestamp_ns, image) = decode_frame(bytes)?;
        Ok(Self {
            sensor: SensorId::from_u8(id)?,
            timestamp_ns,
            image,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperImage {
    pub hand: Hand,
    pub timestamp_ns: u64,
    /// `H x 3W x 3`: thumb, index, middle left to right.
    pub image: Image,
}

impl SuperImage {
    /// Recovers the constituent frame at position `slot` of
    /// [`SensorId::SUPER_ORDER`].
    pub fn slice(&self, slot: usize) -> Image {
        let w = self.image.width / 3;
        self.image.crop_columns(slot * w, w)
    }
}

/// Offset-128 signed difference; 128 encodes no change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaImage {
    pub reference_ns: u64,
    pub current_ns: u64,
    pub image: Image,
}

fn delta_pixels(current: &Image, initial: &Image) -> Result<Image, TactileError> {
    if !current.same_dims(initial) {
        return Err(TactileError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            current.height, current.width, initial.height, initial.width
        )));
    }
    let data = current
        .data
        .iter()
        .zip(&initial.data)
        .map(|(&c, &i)| (c as i16 - i as i16 + DELTA_ZERO as i16).clamp(0, 255) as u8)
        .collect();
    Ok(Image {
        height: current.height,
        width: current.width,
        data,
    })
}

/// Per-channel `clamp(current - initial + 128, 0, 255)`.
pub fn delta(current: &TactileFrame, initial: &TactileFrame) -> Result<DeltaImage, TactileError> {
    if current.sensor != initial.sensor {
        return Err(TactileError::SensorMismatch(current.sensor, initial.sensor));
    }
    Ok(DeltaImage {
        reference_ns: initial.timestamp_ns,
        current_ns: current.timestamp_ns,
        image: delta_pixels(&current.image, &initial.image)?,
    })
}

/// Delta of two super-images of the same hand.
pub fn super_delta(current: &SuperImage, initial: &SuperImage) -> Result<DeltaImage, TactileError> {
    Ok(DeltaImage {
        reference_ns: initial.timestamp_ns,
        current_ns: current.timestamp_ns,
        image: delta_pixels(&current.image, &initial.image)?,
    })
}

/// Default spread allowed between the three constituents: half a 20 Hz tick.
pub const SUPER_WINDOW_NS: u64 = 25_000_000;

/// Concatenates the three distal frames of one hand horizontally in thumb,
/// index, middle order. Input order does not matter.
pub fn super_image(hand: Hand, frames: &[TactileFrame]) -> Result<SuperImage, TactileError> {
    super_image_within(hand, frames, SUPER_WINDOW_NS)
}

pub fn super_image_within(hand: Hand, frames: &[TactileFrame], window_ns: u64) -> Result<SuperImage, TactileError> {
    if frames.len() != 3 {
        return Err(TactileError::WrongSensorSet);
    }
    let mut ordered = Vec::with_capacity(3);
    for id in SensorId::SUPER_ORDER {
        let mut it = frames.iter().filter(|f| f.sensor == id);
        match (it.next(), it.next()) {
            (Some(f), None) => ordered.push(f),
            _ => return Err(TactileError::WrongSensorSet),
        }
    }
    let (h, w) = (ordered[0].image.height, ordered[0].image.width);
    if ordered.iter().any(|f| f.image.height != h || f.image.width != w) {
        return Err(TactileError::DimensionMismatch("super-image constituents differ in size".into()));
    }
    let lo = ordered.iter().map(|f| f.timestamp_ns).min().unwrap_or(0);
    let hi = ordered.iter().map(|f| f.timestamp_ns).max().unwrap_or(0);
    if hi - lo > window_ns {
        return Err(TactileError::TimestampSpread {
            spread_ns: hi - lo,
            window_ns,
        });
    }
    let mut data = Vec::with_capacity(h * w * 9);
    for r in 0..h {
        for f in &ordered {
            data.extend_from_slice(&f.image.data[r * w * 3..(r + 1) * w * 3]);
        }
    }
    Ok(SuperImage {
        hand,
        timestamp_ns: hi,
        image: Image {
            height: h,
            width: 3 * w,
            data,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContactSummary {
    #[serde(skip)]
    pub mask: Vec<bool>,
    pub count: usize,
    /// `(row, col)` weighted by per-pixel magnitude; `None` without contact.
    pub centroid: Option<(f64, f64)>,
    /// Mean per-pixel magnitude over the mask.
    pub activation: f64,
}

impl ContactSummary {
    pub fn in_contact(&self) -> bool {
        self.count > 0
    }
}

/// Thresholds a delta image. A pixel is in contact when any channel differs
/// from 128 by more than `threshold`; its magnitude is the channel mean of
/// `|p - 128|`.
pub fn contact_summary(delta: &DeltaImage, threshold: u8) -> ContactSummary {
    let img = &delta.image;
    let mut mask = vec![false; img.height * img.width];
    let (mut count, mut total, mut sr, mut sc) = (0usize, 0.0, 0.0, 0.0);
    for r in 0..img.height {
        for c in 0..img.width {
            let px = img.pixel(r, c);
            let dev = px.map(|v| (v as i16 - DELTA_ZERO as i16).unsigned_abs());
            if dev.iter().any(|&d| d > threshold as u16) {
                let mag = dev.iter().map(|&d| d as f64).sum::<f64>() / 3.0;
                mask[r * img.width + c] = true;
                count += 1;
                total += mag;
                sr += mag * r as f64;
                sc += mag * c as f64;
            }
        }
    }
    ContactSummary {
        mask,
        count,
        centroid: (count > 0 && total > 0.0).then(|| (sr / total, sc / total)),
        activation: if count > 0 { total / count as f64 } else { 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub height: usize,
    pub width: usize,
    /// Gel brightness without contact.
    pub base_level: u8,
    pub timestamp_ns: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            height: DEFAULT_HEIGHT,
            width: DEFAULT_WIDTH,
            base_level: 64,
            timestamp_ns: 0,
        }
    }
}

/// Synthetic press: a Gaussian blob of peak `min(255, round(3 F))` counts
/// and sigma `8 + 0.15 F` px at `(row, col)`, over a flat gel with uniform
/// integer noise in `[-2, 2]` drawn from `seed`. The noise does not depend
/// on the force, so a zero-force frame with the same seed is an exact
/// baseline.
pub fn synth_press(sensor: SensorId, row: f64, col: f64, force: f64, seed: u64, params: &SynthParams) -> Result<TactileFrame, TactileError> {
    if !(force.is_finite() && force >= 0.0) {
        return Err(TactileError::InvalidForce(force));
    }
    let (h, w) = (params.height, params.width);
    if !(row >= 0.0 && col >= 0.0 && row <= (h as f64 - 1.0) && col <= (w as f64 - 1.0)) {
        return Err(TactileError::OutOfBounds {
            row,
            col,
            height: h,
            width: w,
        });
    }
    let amp = (3.0 * force).round().min(255.0);
    let sigma = 8.0 + 0.15 * force;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        for c in 0..w {
            let d2 = (r as f64 - row).powi(2) + (c as f64 - col).powi(2);
            let blob = (amp * (-d2 / (2.0 * sigma * sigma)).exp()).round();
            for _ in 0..3 {
                let noise: i32 = rng.gen_range(-2..=2);
                let v = params.base_level as f64 + blob + noise as f64;
                data.push(v.clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok(TactileFrame {
        sensor,
        timestamp_ns: params.timestamp_ns,
        image: Image { height: h, width: w, data },
    })
}
