//! Seeded synthetic sources for the five session streams.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{encode_joint_payload, joint_names, Header, JointChannel, SessionError, Source, StreamId, JOINT_COUNT};
use crate::tactile::{encode_frame, super_image, synth_press, Hand, Image, SensorId, SynthParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub duration_ns: u64,
    pub rate_hz: f64,
    /// Uniform timestamp jitter bound, each side.
    pub jitter_ns: u64,
    pub seed: u64,
    /// Clock value of the first nominal tick.
    pub start_ns: u64,
    pub wrist_dims: (usize, usize),
    /// Size of one tactile sensor image; super-images are three wide.
    pub tactile_dims: (usize, usize),
    /// Ends one stream early, at this offset from the start.
    pub stop_after: Option<(StreamId, u64)>,
    pub variant: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_ns: 10_000_000_000,
            rate_hz: 20.0,
            jitter_ns: 10_000_000,
            seed: 0,
            start_ns: 1_000_000_000,
            wrist_dims: (48, 64),
            tactile_dims: (30, 40),
            stop_after: None,
            variant: "DEXOP-7".into(),
        }
    }
}

impl SynthConfig {
    pub fn period_ns(&self) -> u64 {
        (1e9 / self.rate_hz).round() as u64
    }

    pub fn ticks(&self) -> u64 {
        self.duration_ns.div_ceil(self.period_ns())
    }

    fn check(&self) -> Result<(), SessionError> {
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(SessionError::Invalid(format!("rate {} Hz", self.rate_hz)));
        }
        if 2 * self.jitter_ns >= self.period_ns() {
            return Err(SessionError::Invalid("jitter must stay under half a period".into()));
        }
        if self.jitter_ns > self.start_ns {
            return Err(SessionError::Invalid("start must exceed the jitter bound".into()));
        }
        Ok(())
    }
}

/// Fixed, deliberately non-trivial calibration: offsets spread over the
/// count range and alternating directions.
pub fn channels() -> Vec<JointChannel> {
    joint_names()
        .into_iter()
        .enumerate()
        .map(|(i, name)| JointChannel {
            name,
            zero_offset: ((i * 397 + 11) % 4096) as u16,
            sign: if i % 3 == 2 { -1 } else { 1 },
        })
        .collect()
}

pub fn header(cfg: &SynthConfig) -> Header {
    let mut h = Header::session(&cfg.variant, cfg.rate_hz, channels());
    h.meta.insert("source".into(), "synthetic".into());
    h.meta.insert("seed".into(), cfg.seed.to_string());
    h
}

/// Smooth joint trajectory at `t` seconds: arms swing about zero, hands
/// flex between roughly 0.2 and 1.0 rad.
pub fn trajectory(t: f64) -> Vec<f64> {
    (0..JOINT_COUNT)
        .map(|i| {
            let p = i as f64;
            if i < 8 {
                0.3 * (TAU * 0.2 * t + p).sin()
            } else {
                0.6 + 0.4 * (TAU * 0.3 * t + 0.5 * p).sin()
            }
        })
        .collect()
}

/// Deterministic test pattern for wrist cameras.
pub fn wrist_image(h: usize, w: usize, tick: u64, side: u8) -> Image {
    let mut data = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        for c in 0..w {
            for ch in 0..3 {
                data.push(((r * 3 + c * 5 + ch * 70) as u64 + tick * 7 + side as u64 * 40) as u8);
            }
        }
    }
    Image { height: h, width: w, data }
}

pub struct SynthSource {
    stream: StreamId,
    cfg: SynthConfig,
    channels: Vec<JointChannel>,
    rng: ChaCha8Rng,
    tick: u64,
    last_tick: u64,
}

impl SynthSource {
    pub fn new(stream: StreamId, cfg: &SynthConfig) -> Result<Self, SessionError> {
        cfg.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream as u64);
        let mut last_tick = cfg.ticks();
        if let Some((s, after)) = cfg.stop_after {
            if s == stream {
                last_tick = last_tick.min(after.div_ceil(cfg.period_ns()));
            }
        }
        Ok(Self {
            stream,
            cfg: cfg.clone(),
            channels: channels(),
            rng,
            tick: 0,
            last_tick,
        })
    }

    fn payload(&self, k: u64, ts: u64) -> Vec<u8> {
        let cfg = &self.cfg;
        match self.stream {
            StreamId::JointBus => {
                let t = (ts as f64 - cfg.start_ns as f64) * 1e-9;
                encode_joint_payload(&trajectory(t), &self.channels, k as u8).expect("22 channels")
            }
            StreamId::WristCamLeft | StreamId::WristCamRight => {
                let side = (self.stream == StreamId::WristCamRight) as u8;
                let (h, w) = cfg.wrist_dims;
                encode_frame(self.stream.frame_id().unwrap(), ts, &wrist_image(h, w, k, side))
            }
            StreamId::TactileLeft | StreamId::TactileRight => {
                let hand = if self.stream == StreamId::TactileLeft { Hand::Left } else { Hand::Right };
                let (h, w) = cfg.tactile_dims;
                let params = SynthParams {
                    height: h,
                    width: w,
                    timestamp_ns: ts,
                    ..SynthParams::default()
                };
                let frames: Vec<_> = SensorId::SUPER_ORDER
                    .iter()
                    .enumerate()
                    .map(|(i, &sensor)| {
                        let force = 10.0 + 10.0 * (k as f64 * 0.2 + i as f64).sin();
                        let seed = cfg.seed ^ (k << 8) ^ ((self.stream as u64) << 4) ^ i as u64;
                        synth_press(sensor, h as f64 / 2.0, w as f64 / 2.0, force, seed, &params).expect("centre is in bounds")
                    })
                    .collect();
                let s = super_image(hand, &frames).expect("three frames of one size");
                encode_frame(hand.super_image_id(), ts, &s.image)
            }
            StreamId::JointState | StreamId::Action => Vec::new(),
        }
    }
}

impl Source for SynthSource {
    fn stream(&self) -> StreamId {
        self.stream
    }

    fn next_sample(&mut self) -> Option<(u64, Vec<u8>)> {
        if self.tick >= self.last_tick {
            return None;
        }
        let k = self.tick;
        self.tick += 1;
        let j = self.cfg.jitter_ns as i64;
        let jitter = if j > 0 { self.rng.gen_range(-j..=j) } else { 0 };
        let ts = (self.cfg.start_ns as i64 + (k * self.cfg.period_ns()) as i64 + jitter) as u64;
        Some((ts, self.payload(k, ts)))
    }
}

/// One synthetic source per session stream.
pub fn sources(cfg: &SynthConfig) -> Result<Vec<Box<dyn Source>>, SessionError> {
    StreamId::SESSION
        .iter()
        .map(|&s| SynthSource::new(s, cfg).map(|s| Box::new(s) as Box<dyn Source>))
        .collect()
}
