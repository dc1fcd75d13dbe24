use nalgebra::{DVector, Vector3};
use periop::hand::{contact_jacobian, contact_position, load_model, ContactPoint, FingerName, HandModel, JointState, Phalanx, Variant};
use periop::torque::{estimate_fingertip_force, joint_torques, observability, ContactWrench, DEFAULT_RIDGE};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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
    let point = Vector3::new(rng.gen_range(0.0..=len), rng.gen_range(-0.008..0.008), rng.gen_range(-0.008..0.008));
    ContactPoint::new(chain.name, phalanx, point)
}

fn random_force(rng: &mut impl Rng) -> Vector3<f64> {
    let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    v.normalize() * rng.gen_range(0.0..60.0)
}

fn random_wrenches(model: &HandModel, rng: &mut impl Rng, n: usize) -> Vec<ContactWrench> {
    (0..n)
        .map(|_| ContactWrench::new(random_contact(model, rng), random_force(rng)).unwrap())
        .collect()
}

#[test]
fn virtual_work_balances() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for i in 0..1000 {
        let model = load_model(VARIANTS[i % 3], None).unwrap();
        let state = random_state(&model, &mut rng);
        let n = rng.gen_range(1..=4);
        let contacts = random_wrenches(&model, &mut rng, n);
        let dq = DVector::from_fn(model.dof(), |_, _| rng.gen_range(-1.0..1.0));
        let tau = joint_torques(&model, &state, &contacts).unwrap().as_vector();
        let work: f64 = contacts
            .iter()
            .map(|c| c.force.dot(&(contact_jacobian(&model, &state, &c.contact).unwrap() * &dq)))
            .sum();
        assert!((work - tau.dot(&dq)).abs() < 1e-9);
    }
}

#[test]
fn virtual_work_matches_displaced_contacts() {
    // independent of the analytic Jacobian: move the joints a little and
    // measure how far each contact travels
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h = 1e-6;
    for i in 0..300 {
        let model = load_model(VARIANTS[i % 3], None).unwrap();
        let state = random_state(&model, &mut rng);
        let contacts = random_wrenches(&model, &mut rng, 3);
        let dq: Vec<f64> = (0..model.dof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shifted = |s: f64| JointState::new(state.angles.iter().zip(&dq).map(|(q, d)| q + s * d).collect());
        let (plus, minus) = (shifted(h), shifted(-h));
        let work: f64 = contacts
            .iter()
            .map(|c| {
                let v = (contact_position(&model, &plus, &c.contact).unwrap() - contact_position(&model, &minus, &c.contact).unwrap()) / (2.0 * h);
                c.force.dot(&v)
            })
            .sum();
        let tau = joint_torques(&model, &state, &contacts).unwrap();
        let power: f64 = tau.torques.iter().zip(&dq).map(|(t, d)| t * d).sum();
        assert!((work - power).abs() < 1e-6, "{work} vs {power}");
    }
}

#[test]
fn hidden_contacts_account_for_the_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for i in 0..500 {
        let model = load_model(VARIANTS[i % 3], None).unwrap();
        let state = random_state(&model, &mut rng);
        let n = rng.gen_range(2..=6);
        let all = random_wrenches(&model, &mut rng, n);
        let hidden = rng.gen_range(1..all.len());
        let (observed, unseen) = all.split_at(all.len() - hidden);
        let truth = joint_torques(&model, &state, &all).unwrap().as_vector();
        let est = joint_torques(&model, &state, observed).unwrap().as_vector();
        let mut missing = DVector::zeros(model.dof());
        for c in unseen {
            missing -= contact_jacobian(&model, &state, &c.contact).unwrap().transpose() * c.force;
        }
        assert!((est - truth - missing).amax() < 1e-12);
    }
}

#[test]
fn unidentifiable_directions_are_orthogonal_to_observed_contacts() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for i in 0..200 {
        let model = load_model(VARIANTS[i % 3], None).unwrap();
        let state = random_state(&model, &mut rng);
        let n = rng.gen_range(0..=3);
        let contacts: Vec<_> = (0..n).map(|_| random_contact(&model, &mut rng)).collect();
        let obs = observability(&model, &state, &contacts).unwrap();
        assert_eq!(obs.rank + obs.nullspace_dim, model.dof());
        assert_eq!(obs.unidentifiable.len(), obs.nullspace_dim);
        for c in &contacts {
            let jac = contact_jacobian(&model, &state, c).unwrap();
            for v in &obs.unidentifiable {
                let prod = &jac * DVector::from_column_slice(v);
                assert!(prod.amax() < 1e-9 * jac.norm().max(1.0));
            }
        }
    }
}

#[test]
fn fingertip_contacts_observe_their_finger() {
    let model = load_model(Variant::Dexop12, None).unwrap();
    let state = JointState::new((0..12).map(|i| 0.25 + 0.02 * i as f64).collect());
    let tips: Vec<_> = model.fingers.iter().map(|f| ContactPoint::fingertip(&model, f.name).unwrap()).collect();
    // a 3-DoF finger with a bent chain is fully observable from its tip
    assert_eq!(observability(&model, &state, &tips).unwrap().nullspace_dim, 0);
    let thumb_only = observability(&model, &state, &tips[..1]).unwrap();
    assert_eq!(thumb_only.nullspace_dim, model.dof() - model.fingers[0].dof());
}

#[test]
fn fingertip_force_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let model = load_model(Variant::Dexop12, None).unwrap();
    let mut checked = 0;
    while checked < 200 {
        let state = random_state(&model, &mut rng);
        let finger = [FingerName::Thumb, FingerName::Index, FingerName::Middle, FingerName::Ring][rng.gen_range(0..4)];
        let tip = ContactPoint::fingertip(&model, finger).unwrap();
        let jac = contact_jacobian(&model, &state, &tip).unwrap();
        let sv = jac.clone().svd(false, false).singular_values;
        // stay clear of near-straight fingers where the force is ill posed
        if sv.min() < 0.01 * sv.max() {
            continue;
        }
        let force = random_force(&mut rng);
        let tau = joint_torques(&model, &state, &[ContactWrench::new(tip, force).unwrap()]).unwrap();
        let est = estimate_fingertip_force(&model, &state, &tau.torques, finger, DEFAULT_RIDGE).unwrap();
        let err = (Vector3::from(est.force) - force).norm();
        assert!(err < 1e-6 * force.norm().max(1.0), "{finger:?} err {err}");
        assert!(est.residual < 1e-9);
        checked += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torques_are_linear_in_force(seed in any::<u64>(), s in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = load_model(VARIANTS[(seed % 3) as usize], None).unwrap();
        let state = random_state(&model, &mut rng);
        let a = random_wrenches(&model, &mut rng, 2);
        let scaled: Vec<_> = a.iter().map(|w| ContactWrench::new(w.contact, w.force * s).unwrap()).collect();
        let ta = joint_torques(&model, &state, &a).unwrap().as_vector();
        let ts = joint_torques(&model, &state, &scaled).unwrap().as_vector();
        prop_assert!((ts - ta * s).amax() < 1e-12);
        let single: DVector<f64> = a.iter().map(|w| joint_torques(&model, &state, &[*w]).unwrap().as_vector()).sum();
        prop_assert!((joint_torques(&model, &state, &a).unwrap().as_vector() - single).amax() < 1e-12);
    }
}
