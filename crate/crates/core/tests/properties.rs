use std::f64::consts::PI;

use proptest::prelude::*;

use umimo_core::capacity::{capacity, fit_normal};
use umimo_core::geometry::{direction, angles_of, wrap_angle};
use umimo_core::newchar::{chd, fit_aperture_trends, sccf, AperturePathTrace, HardeningEnsemble};
use umimo_core::propagation::{fspl_db, foliage_excess_loss_db, LeafState};
use umimo_core::sounding::Cir;
use umimo_core::stats::{angular_spread, fit_ci, fit_fi, rms_delay_spread, PathLossSample};
use umimo_core::steering::steering_planar;
use umimo_core::synth::{iid_rayleigh, synth_channel};
use umimo_core::{ArrayGeometry, Complex64, Mpc, ScenarioClass, ScenarioConfig, Wavefront};

fn cvec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), n).prop_map(|v| {
        v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect()
    })
}

fn nonzero(v: &[Complex64]) -> bool {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>() > 1e-6
}

fn link() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::link(
        ScenarioClass::FfLos,
        ArrayGeometry::planar(2, 2, 0.01).unwrap(),
        ArrayGeometry::ula(3, 0.01).unwrap(),
        40.0,
        3.0,
        1.5,
    )
    .unwrap();
    cfg.num_freq = 16;
    cfg.bandwidth_hz = 20e6;
    cfg
}

fn mpc_strategy() -> impl Strategy<Value = Mpc> {
    (0.01f64..1.0, -PI..PI, 150e-9f64..600e-9, -1.2f64..1.2, -1.2f64..1.2, -0.5f64..0.5, -0.5f64..0.5).prop_map(
        |(a, ph, tau, aod, aoa, eod, eoa)| Mpc::new(Complex64::from_polar(a, ph), tau, aod, aoa, eod, eoa).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sccf_bounded_and_symmetric((a, b) in (cvec(12), cvec(12))) {
        prop_assume!(nonzero(&a) && nonzero(&b));
        let ab = sccf(&a, &b).unwrap();
        let ba = sccf(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn angular_spread_rotation_invariant(
        ang in prop::collection::vec(-PI..PI, 1..8),
        rot in -PI..PI,
    ) {
        let pw: Vec<f64> = (0..ang.len()).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let a = angular_spread(&ang, &pw).unwrap();
        let shifted: Vec<f64> = ang.iter().map(|x| wrap_angle(x + rot)).collect();
        let b = angular_spread(&shifted, &pw).unwrap();
        prop_assert!((a.rad - b.rad).abs() < 1e-6);
        prop_assert!(a.rad >= 0.0);
    }

    #[test]
    fn delay_spread_shift_and_scale(
        delays in prop::collection::vec(0.0f64..1e-6, 1..8),
        shift in 0.0f64..1e-6,
        k in 0.1f64..10.0,
    ) {
        let pw: Vec<f64> = (0..delays.len()).map(|i| 1.0 + i as f64).collect();
        let base = rms_delay_spread(&delays, &pw).unwrap();
        let moved: Vec<f64> = delays.iter().map(|d| d + shift).collect();
        let scaled: Vec<f64> = pw.iter().map(|p| p * k).collect();
        prop_assert!((rms_delay_spread(&moved, &pw).unwrap() - base).abs() < 1e-15);
        prop_assert!((rms_delay_spread(&delays, &scaled).unwrap() - base).abs() < 1e-15);
    }

    #[test]
    fn synthesis_is_linear(m1 in mpc_strategy(), m2 in mpc_strategy(), k in -3.0f64..3.0) {
        let cfg = link();
        let h1 = synth_channel(&cfg, &[m1], Wavefront::Planar).unwrap();
        let h2 = synth_channel(&cfg, &[m2], Wavefront::Planar).unwrap();
        let scaled = m1.with_amplitude(m1.amplitude * k);
        let both = synth_channel(&cfg, &[scaled, m2], Wavefront::Planar).unwrap();
        for ((a, b), c) in h1.data().iter().zip(h2.data()).zip(both.data()) {
            prop_assert!((a * k + b - c).norm() < 1e-9);
        }
    }

    #[test]
    fn planar_steering_has_unit_modulus(az in -1.5f64..1.5, el in -1.5f64..1.5) {
        let g = ArrayGeometry::planar(3, 4, 0.01).unwrap();
        for v in steering_planar(&g, az, el, 15e9).unwrap() {
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn direction_angle_round_trip(az in -3.1f64..3.1, el in -1.5f64..1.5) {
        let (a, e) = angles_of(&direction(az, el));
        prop_assert!((a - az).abs() < 1e-9 && (e - el).abs() < 1e-9);
    }

    #[test]
    fn capacity_scale_invariant_and_monotone(seed in 0u64..1000, k in 0.1f64..10.0, snr in -5.0f64..25.0) {
        let h = iid_rayleigh(4, 6, 1, 2, seed).unwrap();
        let base = capacity(&h, snr).unwrap();
        let mut s = h.clone();
        s.scale(Complex64::new(k, 0.0));
        let scaled = capacity(&s, snr).unwrap();
        let higher = capacity(&h, snr + 1.0).unwrap();
        for i in 0..2 {
            prop_assert!((base.values[i] - scaled.values[i]).abs() < 1e-9);
            prop_assert!(higher.values[i] > base.values[i]);
            prop_assert!(base.values[i] >= 0.0);
        }
    }

    #[test]
    fn hardening_nonnegative(seed in 0u64..1000) {
        let mut ens = HardeningEnsemble::new(vec![1, 2, 4]);
        for m in 0..6 {
            ens.push(&iid_rayleigh(4, 4, 1, 3, seed * 10 + m).unwrap()).unwrap();
        }
        for n in [1, 2, 4] {
            prop_assert!(chd(&ens, n).unwrap() >= 0.0);
        }
    }

    #[test]
    fn quadratic_phase_fit_never_worse(
        gains in prop::collection::vec((0.1f64..2.0, -PI..PI), 3..40),
    ) {
        let g: Vec<Complex64> = gains.iter().map(|(a, p)| Complex64::from_polar(*a, *p)).collect();
        let t = fit_aperture_trends(&AperturePathTrace::from_gains(&g).unwrap()).unwrap();
        prop_assert!(t.phase_quadfit_rmse_rad <= t.phase_linfit_rmse_rad + 1e-9);
        prop_assert!(t.power_linfit_rmse_db <= t.power_std_db + 1e-9);
    }

    #[test]
    fn cir_tensor_round_trip(taps in cvec(3 * 2 * 9)) {
        let cir = Cir::from_taps(3, 2, 9, taps.clone(), 4e-9, 15e9).unwrap();
        let back = Cir::from_tensor(&cir.to_tensor().unwrap(), 0).unwrap();
        for (a, b) in taps.iter().zip(back.taps()) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn path_loss_models_monotone(d in 1.0f64..500.0, step in 0.1f64..100.0, f in 1e9f64..30e9) {
        prop_assert!(fspl_db(d + step, f).unwrap() > fspl_db(d, f).unwrap());
        let p = LeafState::OutOfLeaf.original();
        let fm = f / 1e6;
        prop_assert!(foliage_excess_loss_db(d + step, fm, p).unwrap() > foliage_excess_loss_db(d, fm, p).unwrap());
    }

    #[test]
    fn noiseless_fits_are_exact(ple in 1.0f64..5.0, alpha in 30.0f64..90.0, beta in 0.5f64..5.0) {
        let ds = [2.0, 5.0, 11.0, 30.0, 75.0];
        let fc = 15e9;
        let ci: Vec<PathLossSample> = ds
            .iter()
            .map(|&d| PathLossSample::new(d, fspl_db(1.0, fc).unwrap() + 10.0 * ple * d.log10(), ScenarioClass::NfLos, 0.0).unwrap())
            .collect();
        let fi: Vec<PathLossSample> = ds
            .iter()
            .map(|&d| PathLossSample::new(d, alpha + 10.0 * beta * d.log10(), ScenarioClass::NfLos, 0.0).unwrap())
            .collect();
        let c = fit_ci(&ci, fc, 1.0).unwrap();
        let f = fit_fi(&fi, 1.0).unwrap();
        prop_assert!((c.param("ple").unwrap() - ple).abs() < 1e-9 && c.rmse_db < 1e-9);
        prop_assert!((f.param("alpha").unwrap() - alpha).abs() < 1e-8);
        prop_assert!((f.param("beta").unwrap() - beta).abs() < 1e-9);
    }

    #[test]
    fn normal_fit_matches_moments(xs in prop::collection::vec(-50.0f64..50.0, 2..60)) {
        prop_assume!(xs.iter().any(|x| (x - xs[0]).abs() > 1e-6));
        let f = fit_normal(&xs).unwrap();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert!((f.mean() - m).abs() < 1e-9);
    }
}
