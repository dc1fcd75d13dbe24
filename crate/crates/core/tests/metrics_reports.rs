use periop::export::{
    format_mean_sem, mix_manifest, normalized_success, stage_time_stats, throughput, Manifest, ManifestRecord, SourceBatch, SourceTag, Trial, DEFAULT_CAP_S,
};
use proptest::prelude::*;

fn trial() -> impl Strategy<Value = Trial> {
    (any::<bool>(), 1.0f64..240.0).prop_map(|(success, time_s)| Trial { success, time_s })
}

#[test]
fn fixtures() {
    assert_eq!(normalized_success(&[1.0; 6]).unwrap().value, 1.0);
    assert_eq!(format_mean_sem(0.513, 0.032), "0.513±0.032");
    let r = throughput(&[Trial { success: true, time_s: 190.0 }, Trial { success: true, time_s: 30.0 }], DEFAULT_CAP_S).unwrap();
    assert_eq!((r.successes, r.failures, r.reclassified), (1, 1, 1));
    assert_eq!(r.per_minute, 2.0);
    let none = SourceBatch { count: 0, per_demo_s: 0.0 };
    assert!((mix_manifest(none, SourceBatch { count: 200, per_demo_s: 85.0 }).total_minutes - 283.3).abs() < 0.05);
    let mixed = mix_manifest(SourceBatch { count: 160, per_demo_s: 31.0 }, SourceBatch { count: 40, per_demo_s: 85.0 });
    assert!((mixed.total_minutes - 139.3).abs() < 0.5);
}

#[test]
fn crossing_the_cap_can_raise_throughput() {
    let fast = Trial { success: true, time_s: 20.0 };
    let slow = |t| Trial { success: true, time_s: t };
    let under = throughput(&[fast, slow(170.0)], DEFAULT_CAP_S).unwrap().per_minute;
    let over = throughput(&[fast, slow(190.0)], DEFAULT_CAP_S).unwrap().per_minute;
    assert!(over > under);
}

#[test]
fn failures_only_give_zero_throughput() {
    let r = throughput(&[Trial { success: false, time_s: 50.0 }; 4], DEFAULT_CAP_S).unwrap();
    assert_eq!((r.per_minute, r.successes, r.mean_success_s), (0.0, 0, None));
}

#[test]
fn ragged_stage_times() {
    let s = stage_time_stats(&[vec![10.0, 20.0, 30.0], vec![12.0, 22.0], vec![14.0]]).unwrap();
    assert_eq!(s.iter().map(|x| x.n).collect::<Vec<_>>(), vec![3, 2, 1]);
    assert_eq!(s[0].mean, 12.0);
    assert!((s[0].sem - 2.0 / 3f64.sqrt()).abs() < 1e-12);
    assert!(s[2].single);
}

#[test]
fn manifest_lines_round_trip() {
    let records: Vec<_> = (0..5)
        .map(|i| ManifestRecord {
            path: format!("episodes/{i:03}.prx"),
            source: if i % 2 == 0 { SourceTag::Perioperation } else { SourceTag::Teleoperation },
            duration_s: 30.0 + i as f64,
        })
        .collect();
    let m = Manifest::from_records(records);
    let text = m.to_jsonl();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().next().unwrap().contains("\"source\":\"perioperation\""));
    assert_eq!(Manifest::from_jsonl(&text).unwrap(), m);
    assert_eq!(m.counts[&SourceTag::Perioperation], 3);
    assert!((m.total_minutes - 160.0 / 60.0).abs() < 1e-12);
    assert!(Manifest::from_jsonl("{\"path\": 1}").is_err());
}

proptest! {
    #[test]
    fn success_is_bounded_and_order_free(rates in proptest::array::uniform6(0.0f64..=1.0), rot in 0usize..6) {
        let a = normalized_success(&rates).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&a));
        let mut r = rates;
        r.rotate_left(rot);
        r.swap(0, 5);
        prop_assert_eq!(normalized_success(&r).unwrap().value, a);
    }

    #[test]
    fn throughput_is_order_free(trials in proptest::collection::vec(trial(), 1..40), rot in 0usize..40) {
        let a = throughput(&trials, DEFAULT_CAP_S).unwrap();
        let mut t = trials.clone();
        t.reverse();
        let k = rot % t.len();
        t.rotate_left(k);
        prop_assert_eq!(throughput(&t, DEFAULT_CAP_S).unwrap(), a);
    }

    #[test]
    fn slower_successes_never_raise_throughput(trials in proptest::collection::vec(trial(), 1..40), pick in 0usize..40, extra in 0.0f64..100.0) {
        let before = throughput(&trials, DEFAULT_CAP_S).unwrap().per_minute;
        let mut t = trials.clone();
        let i = pick % t.len();
        t[i].time_s += extra;
        // crossing the cap turns the trial into a failure and removes it
        // from the mean, which can raise the rate
        prop_assume!(t[i].time_s <= DEFAULT_CAP_S || trials[i].time_s > DEFAULT_CAP_S);
        prop_assert!(throughput(&t, DEFAULT_CAP_S).unwrap().per_minute <= before + 1e-12);
    }
}
