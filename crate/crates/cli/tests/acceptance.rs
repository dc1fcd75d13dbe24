//! Acceptance suite: one PASS/FAIL line per criterion, then a nonzero exit
//! if anything failed. Runs as a plain binary (`harness = false`) so the
//! report is printed in order and never captured.

use std::f64::consts::PI;
use std::io::Cursor;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use nalgebra::{DVector, Vector3};
use periop::export::{augment, export_episode, format_mean_sem, mix_manifest, normalized_success, throughput, AugmentConfig, SourceBatch, SourceTag, Trial, DEFAULT_CAP_S};
use periop::hand::{contact_jacobian, load_model, ContactPoint, HandModel, JointState, Phalanx, Variant};
use periop::linkage::{closure_residual, grashof_check, solve_fourbar, sweep, Branch, BranchHint, FourBarGeometry, GrashofClass};
use periop::session::synth::{self, SynthConfig};
use periop::session::{
    align, count_to_radians, parse_encoder_frames, radians_to_count, record, validate_bytes, wrap_angle, AlignOptions, AlignedStep, EncoderFrame, EncoderSpec,
    RecordOptions, Sample, SessionError, SessionReader, StreamId, COUNTS_PER_REV, LSB,
};
use periop::tactile::Image;
use periop::torque::{joint_torques, ContactWrench};
use periop_oracles::{angular_distance, chunked_deltas, fd_jacobian, fourbar_roots, scan_frames};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String>;

const VARIANTS: [Variant; 3] = [Variant::Dexop7, Variant::Dexop9, Variant::Dexop12];

fn random_state(model: &HandModel, rng: &mut impl Rng) -> JointState {
    JointState::new(model.joints().map(|j| rng.gen_range(j.limits.min..=j.limits.max)).collect())
}

fn random_contact(model: &HandModel, rng: &mut impl Rng) -> ContactPoint {
    let chain = &model.fingers[rng.gen_range(0..model.fingers.len())];
    let (phalanx, len) = if rng.gen_bool(0.5) {
        (Phalanx::Proximal, chain.proximal_length)
    } else {
        (Phalanx::Distal, chain.distal_length)
    };
    ContactPoint::new(chain.name, phalanx, Vector3::new(rng.gen_range(0.0..=len), rng.gen_range(-0.008..0.008), rng.gen_range(-0.008..0.008)))
}

fn random_wrenches(model: &HandModel, rng: &mut impl Rng, n: usize) -> Vec<ContactWrench> {
    (0..n)
        .map(|_| {
            let f = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            ContactWrench::new(random_contact(model, rng), f.normalize() * rng.gen_range(0.0..60.0)).unwrap()
        })
        .collect()
}

fn parallelogram_identity() -> Result<String> {
    let started = Instant::now();
    let mut worst = 0.0f64;
    let mut rows = 0;
    for g in [FourBarGeometry::parallelogram(0.06, 0.02), FourBarGeometry::parallelogram(0.08, 0.05)] {
        for (lo, hi) in grashof_check(&g).range.intervals {
            for r in sweep(&g, lo, hi, 0.01)? {
                worst = worst.max((r.phi - r.theta).abs());
                rows += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    ensure!(worst < 1e-9, "max |phi - theta| = {worst:.3e}");
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("{rows} rows, max |phi - theta| = {worst:.1e}, {elapsed:.2?}"))
}

fn fourbar_oracle() -> Result<String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let (mut dist, mut resid) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let g = loop {
            let mut l = || rng.gen_range(0.02..0.15);
            let g = FourBarGeometry::new(l(), l(), l(), l()).with_offsets(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
            let report = grashof_check(&g);
            if report.class != GrashofClass::ChangePoint && !report.range.is_empty() {
                break g;
            }
        };
        let intervals = grashof_check(&g).range.intervals;
        for i in 0..50 {
            let (lo, hi) = intervals[rng.gen_range(0..intervals.len())];
            let margin = 1e-3f64.min((hi - lo) / 4.0);
            let theta = rng.gen_range(lo + margin..hi - margin);
            let branch = if i % 2 == 0 { Branch::Open } else { Branch::Crossed };
            let phi = solve_fourbar(&g.with_branch(branch, 0.0), theta, BranchHint::Declared)?;
            dist = dist.max(angular_distance(phi, &fourbar_roots(&g, theta, 4096)));
            resid = resid.max(closure_residual(&g, theta, phi).abs());
        }
    }
    let elapsed = started.elapsed();
    ensure!(dist < 1e-8, "oracle disagreement {dist:.3e}");
    ensure!(resid < 1e-10, "closure residual {resid:.3e}");
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("max disagreement {dist:.1e}, max residual {resid:.1e}, {elapsed:.2?}"))
}

fn jacobian_correctness() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let model = load_model(VARIANTS[i % 3], None)?;
        let state = random_state(&model, &mut rng);
        let c = random_contact(&model, &mut rng);
        let jac = contact_jacobian(&model, &state, &c)?;
        let fd = fd_jacobian(&model, &state, &c, 1e-6);
        let scale = jac.norm().max(f64::MIN_POSITIVE);
        let diff: f64 = fd.iter().enumerate().flat_map(|(j, col)| (0..3).map(move |k| (col[k], j, k))).map(|(v, j, k)| (jac[(k, j)] - v).powi(2)).sum();
        worst = worst.max(diff.sqrt() / scale);
        let (fi, chain) = model.fingers.iter().enumerate().find(|(_, f)| f.name == c.finger).unwrap();
        let moving = model.joint_offset(fi)..model.joint_offset(fi) + chain.joints_moving(c.phalanx);
        for j in (0..model.dof()).filter(|j| !moving.contains(j)) {
            ensure!(jac.column(j).iter().all(|&x| x == 0.0), "nonzero column {j} outside the moving chain");
        }
    }
    ensure!(worst < 1e-6, "relative error {worst:.3e}");
    Ok(format!("max relative error {worst:.1e}"))
}

fn virtual_work() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let model = load_model(VARIANTS[i % 3], None)?;
        let state = random_state(&model, &mut rng);
        let n = rng.gen_range(1..=4);
        let contacts = random_wrenches(&model, &mut rng, n);
        let dq = DVector::from_fn(model.dof(), |_, _| rng.gen_range(-1.0..1.0));
        let tau = joint_torques(&model, &state, &contacts)?.as_vector();
        let mut work = 0.0;
        for c in &contacts {
            work += c.force.dot(&(contact_jacobian(&model, &state, &c.contact)? * &dq));
        }
        worst = worst.max((work - tau.dot(&dq)).abs());
    }
    ensure!(worst < 1e-9, "virtual work gap {worst:.3e}");
    Ok(format!("max gap {worst:.1e}"))
}

fn observability_decomposition() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let model = load_model(VARIANTS[i % 3], None)?;
        let state = random_state(&model, &mut rng);
        let n = rng.gen_range(2..=6);
        let all = random_wrenches(&model, &mut rng, n);
        let hidden = rng.gen_range(1..all.len());
        let (observed, unseen) = all.split_at(all.len() - hidden);
        let truth = joint_torques(&model, &state, &all)?.as_vector();
        let est = joint_torques(&model, &state, observed)?.as_vector();
        let mut missing = DVector::zeros(model.dof());
        for c in unseen {
            missing -= contact_jacobian(&model, &state, &c.contact)?.transpose() * c.force;
        }
        worst = worst.max((est - truth - missing).amax());
    }
    ensure!(worst < 1e-12, "decomposition error {worst:.3e}");
    Ok(format!("max error {worst:.1e}"))
}

fn encoder_quantization() -> Result<String> {
    for spec in [EncoderSpec::default(), EncoderSpec { zero_offset: 1234, sign: -1 }] {
        for c in 0..COUNTS_PER_REV {
            let back = radians_to_count(count_to_radians(c, &spec)?, &spec);
            ensure!(back == c, "count {c} came back as {back}");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    for i in 0..100_000 {
        let spec = EncoderSpec {
            zero_offset: rng.gen_range(0..4096),
            sign: if i % 2 == 0 { 1 } else { -1 },
        };
        let theta = rng.gen_range(-20.0..20.0);
        let back = count_to_radians(radians_to_count(theta, &spec), &spec)?;
        worst = worst.max(wrap_angle(back - wrap_angle(theta)).abs());
    }
    let bound = PI / 4096.0;
    ensure!(worst <= bound * (1.0 + 1e-9), "quantization error {worst:.6e} > {bound:.6e}");
    ensure!((LSB - 2.0 * PI / 4096.0).abs() < 1e-18, "LSB {LSB}");
    let lsb = format!("{LSB:.3e}");
    ensure!(lsb == "1.534e-3", "LSB prints as {lsb}");
    ensure!(format!("{LSB:.1e}") == "1.5e-3", "LSB does not round to 1.5e-3");
    Ok(format!("4096 counts exact, max error {worst:.4e} <= {bound:.4e}, LSB {lsb}"))
}

fn wire_robustness() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut buf = Vec::with_capacity((1 << 20) + 16);
    while buf.len() < 1 << 20 {
        match rng.gen_range(0..10) {
            0..=5 => {
                let mut b = EncoderFrame::new(rng.gen(), rng.gen_range(0..4096), rng.gen())?.to_bytes();
                if rng.gen_bool(0.1) {
                    let bit = rng.gen_range(0..48);
                    b[bit / 8] ^= 1 << (bit % 8);
                }
                buf.extend_from_slice(&b);
            }
            6 => buf.push(0xAA),
            _ => {
                let n = rng.gen_range(1..8);
                buf.extend((0..n).map(|_| rng.gen::<u8>()));
            }
        }
    }
    let got: Vec<_> = parse_encoder_frames(&buf).0.iter().map(|f| (f.joint, f.count, f.seq)).collect();
    let want = scan_frames(&buf);
    ensure!(got == want, "parser kept {} frames, reference scanner {}", got.len(), want.len());
    let mut flips = 0;
    for _ in 0..2000 {
        let clean = EncoderFrame::new(rng.gen(), rng.gen_range(0..4096), rng.gen())?.to_bytes();
        for bit in 0..48 {
            let mut b = clean;
            b[bit / 8] ^= 1 << (bit % 8);
            ensure!(parse_encoder_frames(&b).0.is_empty(), "bit {bit} flip of {clean:02x?} accepted");
            flips += 1;
        }
    }
    Ok(format!("{} frames identical over {} bytes, {flips} bit flips rejected", got.len(), buf.len()))
}

fn session_round_trip() -> Result<String> {
    let cfg = SynthConfig {
        seed: 106,
        ..SynthConfig::default()
    };
    ensure!(cfg.duration_ns == 10_000_000_000 && cfg.jitter_ns == 10_000_000, "unexpected synthetic defaults");
    let mut expected = Vec::new();
    for mut src in synth::sources(&cfg)? {
        while let Some((ts, payload)) = src.next_sample() {
            expected.push(Sample {
                stream: src.stream(),
                timestamp_ns: ts,
                payload,
            });
        }
    }
    let (_, bytes) = record(synth::sources(&cfg)?, synth::header(&cfg), Vec::new(), &RecordOptions::default())?;
    let mut reader = SessionReader::new(Cursor::new(bytes.clone()))?;
    let read = reader.samples()?;
    for id in StreamId::SESSION {
        let a: Vec<_> = expected.iter().filter(|s| s.stream == id).collect();
        let b: Vec<_> = read.iter().filter(|s| s.stream == id).collect();
        ensure!(a.len() == 200, "{id}: {} samples", a.len());
        ensure!(a == b, "{id}: payloads differ after the round trip");
    }
    let aligned = align(&mut reader, &AlignOptions::default())?;
    let skew = aligned.steps.iter().map(AlignedStep::max_skew_ns).max().unwrap_or(0);
    ensure!(!aligned.steps.is_empty() && skew <= 25_000_000, "max skew {skew} ns");

    let truncated = &bytes[..bytes.len() - 13];
    ensure!(SessionReader::new(Cursor::new(truncated.to_vec())).is_err(), "truncated file opened");
    let target = reader.index()[10].offset + 30;
    let mut bad = bytes.clone();
    bad[target as usize] ^= 0x01;
    match SessionReader::new(Cursor::new(bad.clone()))?.samples() {
        Err(SessionError::CorruptChunk { .. }) => {}
        other => bail!("damaged chunk not detected: {:?}", other.map(|s| s.len())),
    }
    let report = validate_bytes(&bad)?;
    ensure!(report.problems.iter().any(|p| p.starts_with("chunk")), "validate missed the damaged chunk");
    Ok(format!("{} samples identical, {} steps, max skew {:.1} ms, truncation and damage detected", read.len(), aligned.steps.len(), skew as f64 * 1e-6))
}

fn workspace_fixture() -> Result<String> {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = prx::run(["prx", "model", "workspace", "--model", "DEXOP-7"], &mut out, &mut err);
    ensure!(code == 0, "exit {code}: {}", String::from_utf8_lossy(&err));
    let mut rdr = csv::Reader::from_reader(out.as_slice());
    let mut got = std::collections::BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        got.insert(row[1].to_owned(), (row[4].to_owned(), row[5].to_owned()));
    }
    for (kind, range, speed) in [("MCP-flexion", "110", "35"), ("PIP", "105", "15"), ("TM-flexion", "75", "17"), ("TM-abduction", "90", "12"), ("IP", "65", "9")] {
        let (r, s) = got.get(kind).with_context(|| format!("{kind} missing"))?;
        ensure!(r == range && s == speed, "{kind}: range {r} speed {s}, expected {range}/{speed}");
    }
    Ok("ranges 110/105/75/90/65 deg, speeds 35/15/17/12/9 rad/s".into())
}

fn metrics_fixtures() -> Result<String> {
    let s = normalized_success(&[1.0; 6])?.value;
    ensure!(s == 1.0, "normalized success {s}");
    let text = format_mean_sem(0.513, 0.032);
    ensure!(text == "0.513±0.032", "formatted as {text}");
    let r = throughput(&[Trial { success: true, time_s: 190.0 }], DEFAULT_CAP_S)?;
    ensure!(r.successes == 0 && r.failures == 1 && r.reclassified == 1, "190 s trial kept as success");
    let none = SourceBatch { count: 0, per_demo_s: 0.0 };
    let a = mix_manifest(none, SourceBatch { count: 200, per_demo_s: 85.0 }).total_minutes;
    ensure!((a - 283.3).abs() <= 0.05, "teleop-only manifest {a}");
    let b = mix_manifest(SourceBatch { count: 160, per_demo_s: 31.0 }, SourceBatch { count: 40, per_demo_s: 85.0 }).total_minutes;
    ensure!((b - 139.3).abs() <= 0.5, "mixed manifest {b}");
    Ok(format!("success 1.0, {text}, 190 s reclassified, {a:.2} min, {b:.2} min"))
}

fn steps_from(traj: &[Vec<f64>]) -> Vec<AlignedStep> {
    traj.iter()
        .enumerate()
        .map(|(i, q)| {
            let ts = 1_000_000_000 + 50_000_000 * i as u64;
            AlignedStep {
                timestamp_ns: ts,
                joints: q.clone(),
                wrist: [Image::filled(2, 2, 100), Image::filled(2, 2, 150)],
                tactile: [Image::filled(2, 2, 128), Image::filled(2, 2, 128)],
                source_ts: [ts; 5],
            }
        })
        .collect()
}

fn random_traj(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<f64> = (0..22).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (0..n)
        .map(|_| {
            for v in &mut q {
                *v += rng.gen_range(-0.05..0.05);
            }
            q.clone()
        })
        .collect()
}

fn augmentation_statistics() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let ep = export_episode(&steps_from(&random_traj(&mut rng, 100_000)), 1, SourceTag::Perioperation, "rates")?;
    let cfg = AugmentConfig {
        seed: 2024,
        ..AugmentConfig::default()
    };
    let (a, stats) = augment(&ep, &cfg)?;
    let (b, again) = augment(&ep, &cfg)?;
    ensure!(stats == again, "statistics differ between runs");
    let same = a.steps.iter().zip(&b.steps).all(|(x, y)| x.joints.iter().zip(&y.joints).all(|(p, q)| p.to_bits() == q.to_bits()) && x.wrist == y.wrist);
    ensure!(same, "two runs with one seed differ");
    let noise = stats.noised_steps as f64 / stats.steps as f64;
    let drop = stats.dropped_images as f64 / stats.wrist_images as f64;
    ensure!((0.098..=0.102).contains(&noise), "noise rate {noise}");
    ensure!((0.294..=0.306).contains(&drop), "dropout rate {drop}");
    let bound = 10f64.to_radians();
    let mut worst = 0.0f64;
    for (orig, aug) in ep.steps.iter().zip(&a.steps) {
        for (x, y) in orig.joints.iter().zip(&aug.joints) {
            worst = worst.max((y - x).abs());
        }
    }
    ensure!(worst <= bound + 1e-12, "perturbation {:.3} deg", worst.to_degrees());
    Ok(format!("noise rate {noise:.4}, dropout rate {drop:.4}, max perturbation {:.2} deg, deterministic", worst.to_degrees()))
}

fn export_inverse() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let traj = random_traj(&mut rng, 400);
    let ep = export_episode(&steps_from(&traj), 1, SourceTag::Perioperation, "inverse")?;
    let mut q = traj[0][..8].to_vec();
    let mut worst = 0.0f64;
    for (t, a) in ep.actions.iter().enumerate() {
        for j in 0..8 {
            worst = worst.max((q[j] - traj[t][j]).abs());
            q[j] += a.arm_delta[j];
        }
    }
    ensure!(worst < 1e-12, "reconstruction error {worst:.3e}");
    for k in [1, 2, 5, 17] {
        let traj = random_traj(&mut rng, 120);
        let ep = export_episode(&steps_from(&traj), k, SourceTag::Perioperation, "chunks")?;
        let arm: Vec<Vec<f64>> = traj.iter().map(|q| q[..8].to_vec()).collect();
        for (t, (a, w)) in ep.actions.iter().zip(chunked_deltas(&arm, k)).enumerate() {
            ensure!(a.arm_delta.as_slice() == w.as_slice(), "k = {k}, step {t} differs");
        }
    }
    Ok(format!("cumulative sum within {worst:.1e}, chunks k = 1/2/5/17 exact"))
}

fn main() {
    let criteria: [(&str, Check); 12] = [
        ("parallelogram identity", parallelogram_identity),
        ("four-bar oracle equivalence", fourbar_oracle),
        ("jacobian correctness", jacobian_correctness),
        ("virtual-work consistency", virtual_work),
        ("observability decomposition", observability_decomposition),
        ("encoder quantization", encoder_quantization),
        ("wire parser robustness", wire_robustness),
        ("session round-trip", session_round_trip),
        ("workspace fixture", workspace_fixture),
        ("metrics fixtures", metrics_fixtures),
        ("augmentation statistics", augmentation_statistics),
        ("export inverse", export_inverse),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e:#}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
