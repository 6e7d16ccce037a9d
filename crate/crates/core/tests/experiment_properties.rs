use cvqkd_core::cascade::BlockLength;
use cvqkd_core::experiment::{default_eta_grid, run, scan, write_events_csv, ExperimentConfig};
use cvqkd_core::info::AdvantageEstimator;
use cvqkd_core::protocol::{ThresholdSpec, ThresholdUnits};
use proptest::prelude::*;

#[test]
fn auto_threshold_scan() {
    let rows = scan(&ExperimentConfig::default(), &default_eta_grid()).unwrap();
    assert_eq!(rows.len(), 10);
    for w in rows.windows(2) {
        assert!(w[0].eta < w[1].eta);
        assert!(
            w[1].threshold <= w[0].threshold + 1e-12,
            "{:?}",
            (w[0].threshold, w[1].threshold)
        );
    }
    let lossless = rows.last().unwrap();
    assert_eq!(lossless.eta, 1.0);
    assert_eq!(lossless.threshold, 0.0);
    let high_loss = scan(&ExperimentConfig::default(), &[0.36]).unwrap();
    assert!(high_loss[0].advantage > 0.0);
    assert!(high_loss[0].final_fraction > 0.0);
    for r in &rows {
        assert!(r.advantage > 0.0, "eta {}", r.eta);
    }
}

#[test]
fn lossless_row_has_the_largest_advantage_at_a_common_threshold() {
    let cfg = ExperimentConfig {
        threshold: ThresholdSpec::Fixed {
            value: 0.0,
            units: ThresholdUnits::Outcome,
        },
        ..ExperimentConfig::default()
    };
    let rows = scan(&cfg, &default_eta_grid()).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].advantage > w[0].advantage);
        assert!(w[1].advantage_aggregate > w[0].advantage_aggregate);
    }
}

fn small_run(eta: f64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        eta,
        n_events: 200_000,
        seed,
        eve: true,
        ..ExperimentConfig::default()
    }
}

#[test]
fn report_rates_are_ordered_and_exact() {
    for (eta, seed) in [(0.79, 1), (0.36, 2), (0.95, 3)] {
        let cfg = small_run(eta, seed);
        let r = run(&cfg).unwrap().report;
        let period = cfg.n_events as f64 * cfg.event_duration;
        assert_eq!(r.raw_rate, r.raw_bits as f64 / period);
        assert_eq!(r.post_rate, r.post_bits as f64 / period);
        assert_eq!(r.ec_rate, r.ec_bits as f64 / period);
        assert_eq!(r.final_rate, r.final_bits as f64 / period);
        assert!(r.post_rate <= r.raw_rate);
        assert!(r.ec_rate <= r.post_rate);
        assert!(r.final_rate <= r.ec_rate);
        let adv = r.advantage.per_event.unwrap().clamp(0.0, 1.0);
        assert_eq!(
            r.final_bits,
            cvqkd_core::cascade::final_key_length(r.ec_bits, 0, adv, 0).unwrap()
        );
        assert_eq!(r.final_keys_match, Some(true));
    }
}

#[test]
fn artifacts_are_byte_identical_across_runs() {
    let cfg = small_run(0.36, 9);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(
        a.session.transcript.as_bytes(),
        b.session.transcript.as_bytes()
    );
    assert_eq!(a.report.to_text(), b.report.to_text());
    assert_eq!(a.report.to_json(), b.report.to_json());
    let csv = |o: &cvqkd_core::experiment::RunOutput| {
        let mut buf = Vec::new();
        write_events_csv(&o.session, &mut buf).unwrap();
        buf
    };
    assert_eq!(csv(&a), csv(&b));
    let other = run(&small_run(0.36, 10)).unwrap();
    assert_ne!(
        a.session.transcript.as_bytes(),
        other.session.transcript.as_bytes()
    );
}

fn threshold_strategy() -> impl Strategy<Value = ThresholdSpec> {
    prop_oneof![
        Just(ThresholdSpec::Auto),
        (0.0f64..5.0, 0usize..3).prop_map(|(value, u)| ThresholdSpec::Fixed {
            value,
            units: [
                ThresholdUnits::Outcome,
                ThresholdUnits::AlphaSent,
                ThresholdUnits::AlphaReceived
            ][u],
        }),
        (0.01f64..1.0).prop_map(|target| ThresholdSpec::Yield { target }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_round_trips(
        alpha in 0.01f64..5.0,
        eta in 0.001f64..=1.0,
        excess_noise in 0.0f64..2.0,
        n_events in 0u64..10_000_000,
        event_duration in 1e-6f64..1.0,
        dead_time_fraction in 0.0f64..0.99,
        seed in any::<u64>(),
        eve in any::<bool>(),
        threshold in threshold_strategy(),
        passes in 1u32..10,
        block in prop::option::of(1usize..5000),
        cascade_seed in prop::option::of(any::<u64>()),
        safety_margin in 0usize..1000,
        aggregate in any::<bool>(),
        report in prop::option::of("[a-z]{1,8}/[a-z]{1,8}\\.txt"),
    ) {
        let mut cfg = ExperimentConfig {
            alpha, eta, excess_noise, n_events, event_duration, dead_time_fraction,
            seed, eve, threshold,
            ..ExperimentConfig::default()
        };
        cfg.cascade.passes = passes;
        cfg.cascade.initial_block = block.map_or(BlockLength::Auto, BlockLength::Fixed);
        cfg.cascade.seed = cascade_seed;
        cfg.cascade.safety_margin = safety_margin;
        cfg.cascade.estimator = if aggregate { AdvantageEstimator::Aggregate } else { AdvantageEstimator::PerEvent };
        cfg.output.report = report.map(Into::into);
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
