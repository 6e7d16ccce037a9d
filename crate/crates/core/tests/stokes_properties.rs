use cvqkd_core::stokes::{
    antipodal_overlap, bridge_allowance, coherent_state, overlap, FockCutoff, StokesAlgebra,
    StokesAxis,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn polar(r: f64, phase: f64) -> Complex64 {
    Complex64::from_polar(r, phase)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn antipodal_overlap_within_truncation(
        n_max in 6usize..=12,
        frac in 0.0f64..=1.0,
        phase in 0.0f64..std::f64::consts::TAU,
    ) {
        let cut = FockCutoff::new(n_max).unwrap();
        let r = frac * (n_max as f64 / 4.0).sqrt();
        let zero = Complex64::new(0.0, 0.0);
        let plus = coherent_state(zero, polar(r, phase), cut).unwrap();
        let minus = coherent_state(zero, -polar(r, phase), cut).unwrap();
        let f = overlap(&plus, &minus).unwrap();
        let dev = (f - antipodal_overlap(r)).norm();
        prop_assert!(dev < 1e-6 + plus.norm_deficit(), "dev {dev}, deficit {}", plus.norm_deficit());
        prop_assert!(f.im.abs() < 1e-12);
    }

    #[test]
    fn uncertainty_never_violated(
        rx in 0.0f64..=1.0, px in 0.0f64..std::f64::consts::TAU,
        ry in 0.0f64..=1.0, py in 0.0f64..std::f64::consts::TAU,
    ) {
        let cut = FockCutoff::new(8).unwrap();
        let alg = StokesAlgebra::new(cut);
        let state = coherent_state(polar(rx * 2f64.sqrt(), px), polar(ry * 2f64.sqrt(), py), cut).unwrap();
        for k in StokesAxis::ALL {
            for l in StokesAxis::ALL {
                if k != l {
                    let u = alg.uncertainty(&state, k, l).unwrap();
                    prop_assert!(u.slack() > -1e-10, "{k},{l}: {u:?}");
                }
            }
        }
    }

    #[test]
    fn coherent_variances_are_shot_noise(
        rx in 0.0f64..=1.0, px in 0.0f64..std::f64::consts::TAU,
        ry in 0.0f64..=1.0, py in 0.0f64..std::f64::consts::TAU,
    ) {
        let cut = FockCutoff::new(10).unwrap();
        let alg = StokesAlgebra::new(cut);
        let ops = alg.operators();
        let radius = 2.5f64.sqrt();
        let state = coherent_state(polar(rx * radius, px), polar(ry * radius, py), cut).unwrap();
        let s0 = state.expectation(&ops.s0).re;
        let allowed = bridge_allowance(&state);
        for op in [&ops.s2, &ops.s3] {
            let v = state.variance(op);
            prop_assert!((v - s0).abs() <= allowed, "V {v} vs <S0> {s0}, allowance {allowed}");
        }
    }
}

#[test]
fn algebra_holds_across_cutoffs() {
    for n_max in 2..=10 {
        let alg = StokesAlgebra::new(FockCutoff::new(n_max).unwrap());
        for op in alg.operators().all() {
            assert!(op.is_hermitian(1e-12));
        }
        for (k, l) in [
            (StokesAxis::S1, StokesAxis::S2),
            (StokesAxis::S2, StokesAxis::S3),
            (StokesAxis::S3, StokesAxis::S1),
        ] {
            let d = alg.commutator_deviation(k, l).unwrap();
            assert!(d < 1e-10, "n_max {n_max}, [{k},{l}]: {d}");
        }
    }
}

#[test]
fn truncated_norm_stays_below_one() {
    let cut = FockCutoff::new(8).unwrap();
    let s = coherent_state(Complex64::new(1.2, 0.3), Complex64::new(-0.4, 0.9), cut).unwrap();
    let norm = s.norm_sqr();
    assert!(norm <= 1.0 + 1e-12);
    assert!(norm >= 1.0 - s.norm_deficit() - 1e-12);
}
