use periop::tactile::{
    contact_summary, decode_frame, delta, encode_frame, super_delta, super_image, synth_press, Hand, Image, SensorId, SynthParams, TactileError, TactileFrame,
    DEFAULT_THRESHOLD, SUPER_WINDOW_NS,
};
use proptest::prelude::*;

fn image_strategy(max_h: usize, max_w: usize) -> impl Strategy<Value = Image> {
    (1..=max_h, 1..=max_w).prop_flat_map(|(h, w)| proptest::collection::vec(any::<u8>(), h * w * 3).prop_map(move |d| Image::from_raw(h, w, d).unwrap()))
}

/// Radius beyond which the synthetic blob falls under the contact threshold.
fn footprint_radius(force: f64) -> f64 {
    let amp = (3.0 * force).round().min(255.0);
    let sigma = 8.0 + 0.15 * force;
    sigma * (2.0 * (amp / DEFAULT_THRESHOLD as f64).ln()).sqrt()
}

#[test]
fn synthetic_press_is_located() {
    let params = SynthParams::default();
    let (h, w) = (params.height as f64 - 1.0, params.width as f64 - 1.0);
    // injection points whose whole footprint lies on the gel
    for (k, force) in [5.0, 8.0, 12.0, 20.0, 30.0, 50.0, 70.0].into_iter().enumerate() {
        let m = footprint_radius(force).ceil();
        let seed = 1000 + k as u64;
        let base = synth_press(SensorId::IndexDistal, 60.0, 80.0, 0.0, seed, &params).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let row = m + (h - 2.0 * m) * i as f64 / 4.0;
                let col = m + (w - 2.0 * m) * j as f64 / 4.0;
                let press = synth_press(SensorId::IndexDistal, row, col, force, seed, &params).unwrap();
                let s = contact_summary(&delta(&press, &base).unwrap(), DEFAULT_THRESHOLD);
                let (r, c) = s.centroid.expect("contact");
                let dist = ((r - row).powi(2) + (c - col).powi(2)).sqrt();
                assert!(dist <= 2.0, "F={force} at ({row:.1},{col:.1}) -> ({r:.2},{c:.2})");
            }
        }
    }
}

#[test]
fn noise_alone_is_not_contact() {
    let params = SynthParams::default();
    let a = synth_press(SensorId::ThumbDistal, 10.0, 10.0, 0.0, 1, &params).unwrap();
    let b = synth_press(SensorId::ThumbDistal, 10.0, 10.0, 0.0, 2, &params).unwrap();
    assert!(!contact_summary(&delta(&a, &b).unwrap(), DEFAULT_THRESHOLD).in_contact());
}

#[test]
fn full_size_super_image() {
    let frames: Vec<_> = [SensorId::MiddleDistal, SensorId::ThumbDistal, SensorId::IndexDistal]
        .into_iter()
        .enumerate()
        .map(|(i, s)| TactileFrame {
            sensor: s,
            timestamp_ns: 1_000 + i as u64,
            image: Image::filled(120, 160, 10 * i as u8),
        })
        .collect();
    let sup = super_image(Hand::Right, &frames).unwrap();
    assert_eq!((sup.image.height, sup.image.width), (120, 480));
    assert_eq!(sup.timestamp_ns, 1_002);
    // thumb, index, middle regardless of input order
    assert_eq!(sup.slice(0), frames[1].image);
    assert_eq!(sup.slice(1), frames[2].image);
    assert_eq!(sup.slice(2), frames[0].image);
    let same = super_delta(&sup, &sup).unwrap();
    assert!(!contact_summary(&same, DEFAULT_THRESHOLD).in_contact());
}

#[test]
fn super_image_rejects_bad_sets() {
    let f = |s, ts| TactileFrame {
        sensor: s,
        timestamp_ns: ts,
        image: Image::filled(4, 5, 0),
    };
    let dup = [f(SensorId::ThumbDistal, 0), f(SensorId::ThumbDistal, 0), f(SensorId::IndexDistal, 0)];
    assert!(matches!(super_image(Hand::Left, &dup), Err(TactileError::WrongSensorSet)));
    let prox = [f(SensorId::ThumbDistal, 0), f(SensorId::IndexProximal, 0), f(SensorId::MiddleDistal, 0)];
    assert!(matches!(super_image(Hand::Left, &prox), Err(TactileError::WrongSensorSet)));
    let late = [f(SensorId::ThumbDistal, 0), f(SensorId::IndexDistal, SUPER_WINDOW_NS + 1), f(SensorId::MiddleDistal, 0)];
    assert!(matches!(super_image(Hand::Left, &late), Err(TactileError::TimestampSpread { .. })));
}

proptest! {
    #[test]
    fn delta_is_antisymmetric_below_saturation(a in proptest::collection::vec(any::<u8>(), 3 * 6 * 7), b in proptest::collection::vec(any::<u8>(), 3 * 6 * 7)) {
        let fa = TactileFrame { sensor: SensorId::Palm, timestamp_ns: 1, image: Image::from_raw(6, 7, a.clone()).unwrap() };
        let fb = TactileFrame { sensor: SensorId::Palm, timestamp_ns: 2, image: Image::from_raw(6, 7, b.clone()).unwrap() };
        let ab = delta(&fa, &fb).unwrap().image.data;
        let ba = delta(&fb, &fa).unwrap().image.data;
        for i in 0..a.len() {
            let d = a[i] as i32 - b[i] as i32;
            if d.abs() <= 127 {
                prop_assert_eq!(ab[i] as u32 + ba[i] as u32, 256);
            }
        }
    }

    #[test]
    fn super_image_slices_recover_inputs(imgs in image_strategy(8, 9).prop_flat_map(|i| {
        let (h, w) = (i.height, i.width);
        let more = proptest::collection::vec(proptest::collection::vec(any::<u8>(), h * w * 3), 2);
        (Just(i), more)
    })) {
        let (first, rest) = imgs;
        let h = first.height;
        let w = first.width;
        let images = [first, Image::from_raw(h, w, rest[0].clone()).unwrap(), Image::from_raw(h, w, rest[1].clone()).unwrap()];
        let frames: Vec<_> = SensorId::SUPER_ORDER
            .iter()
            .zip(&images)
            .map(|(&s, im)| TactileFrame { sensor: s, timestamp_ns: 5, image: im.clone() })
            .collect();
        let sup = super_image(Hand::Left, &frames).unwrap();
        for (slot, im) in images.iter().enumerate() {
            prop_assert_eq!(&sup.slice(slot), im);
        }
    }

    #[test]
    fn frames_round_trip(id in any::<u8>(), ts in any::<u64>(), image in image_strategy(10, 12)) {
        let bytes = encode_frame(id, ts, &image);
        prop_assert_eq!(decode_frame(&bytes).unwrap(), (id, ts, image));
        prop_assert!(decode_frame(&bytes[..bytes.len() - 1]).is_err());
    }
}
