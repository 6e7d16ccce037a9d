use cvqkd_core::channel::ChannelParams;
use cvqkd_core::info::{mean_error, selection_stats, InfoParams};
use cvqkd_core::protocol::{
    check_ordering, replay_sift, run_local, SessionConfig, ThresholdSpec, ThresholdUnits,
};
use cvqkd_core::wire::Message;
use proptest::prelude::*;

fn session(eta: f64, threshold: ThresholdSpec, n_events: u32, seed: u64) -> SessionConfig {
    SessionConfig {
        alpha: 0.6,
        channel: ChannelParams::lossy(eta).unwrap(),
        threshold,
        n_events,
        seed,
        eve: false,
        distill: None,
    }
}

fn outcome(value: f64) -> ThresholdSpec {
    ThresholdSpec::Fixed {
        value,
        units: ThresholdUnits::Outcome,
    }
}

fn assert_binomial(count: usize, n: usize, p: f64, what: &str) {
    let observed = count as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!(
        (observed - p).abs() <= 4.0 * se,
        "{what}: {observed} vs {p} (4 SE = {})",
        4.0 * se
    );
}

#[test]
fn unselected_disagreement_matches_mean_error() {
    let out = run_local(&session(0.79, outcome(0.0), 1_000_000, 21)).unwrap();
    let s = &out.summary;
    assert_eq!(s.decided, s.selected);
    let p = mean_error(0.6 * 0.79f64.sqrt(), 0.5).unwrap();
    assert_binomial(s.pre_errors, s.decided, p, "pre-selection error");
    assert_eq!(out.raw.mismatches(), s.post_errors);
}

#[test]
fn kept_bits_agree_with_probability_one_minus_post_error() {
    for (eta, seed) in [(0.79, 3), (0.36, 4)] {
        let n = 1_000_000;
        let out = run_local(&session(eta, ThresholdSpec::Auto, n, seed)).unwrap();
        let s = &out.summary;
        let model = s.model.expect("auto threshold is positive");
        assert_binomial(s.selected, n as usize, model.yield_fraction, "yield");
        assert_binomial(
            out.raw.mismatches(),
            out.raw.len(),
            model.post_error,
            "post error",
        );
        let params = InfoParams::new(0.6, eta, 0.5).unwrap();
        let direct = selection_stats(&params, s.threshold).unwrap();
        assert_eq!(direct, model);
    }
}

#[test]
fn announcement_is_exactly_the_kept_set() {
    let t = 0.7;
    let out = run_local(&session(0.5, outcome(t), 50_000, 8)).unwrap();
    let expected: Vec<u32> = out
        .measured
        .iter()
        .filter(|r| r.x != 0.0 && r.x.abs() >= t)
        .map(|r| r.event_id)
        .collect();
    let messages = out.transcript.messages().unwrap();
    match &messages[0] {
        Message::BasisAnnouncement { event_ids, bases } => {
            assert_eq!(event_ids, &expected);
            for (id, b) in event_ids.iter().zip(bases) {
                assert_eq!(out.measured[*id as usize].basis, *b);
            }
        }
        other => panic!("first frame is {other:?}"),
    }
    assert!(messages[1..]
        .iter()
        .all(|m| !matches!(m, Message::BasisAnnouncement { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transcript_replay_and_ordering(
        seed in any::<u64>(),
        n in 1u32..3000,
        eta in 0.2f64..=1.0,
        t in 0.0f64..1.5,
    ) {
        let out = run_local(&session(eta, outcome(t), n, seed)).unwrap();
        check_ordering(&out.transcript).unwrap();
        let replayed = replay_sift(&out.sent, &out.measured, &out.transcript).unwrap();
        prop_assert_eq!(replayed, out.raw);
    }
}
