//! Acceptance suite: every criterion is evaluated, reported on one line and
//! the process exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use umimo_core::capacity::{capacity, capacity_with, fit_gmm2, DistFit, DistParams, Normalization};
use umimo_core::geometry::{rayleigh_distance, L_ARRAY_SPACING_M};
use umimo_core::newchar::{chd, cscf, fit_aperture_trends, sccf, AperturePathTrace, CscfPairing, HardeningEnsemble};
use umimo_core::propagation::{foliage_excess_loss_db, fspl_db, LeafState};
use umimo_core::sage::{sage_estimate, SageConfig};
use umimo_core::sounding::{
    chamber_cir, ota_calibrate, sound_link, Cir, FrontEndResponse, PnSequence, SounderResponse,
    DEFAULT_OVERSAMPLE,
};
use umimo_core::stats::{angular_spread, fit_ci, fit_fi, rms_delay_spread, FitModel, PathLossSample, REFERENCE_PATH_LOSS};
use umimo_core::synth::{iid_rayleigh, synth_channel};
use umimo_core::{
    ArrayGeometry, ChannelTensor, Complex64, FrequencyGrid, Mpc, ScenarioClass, ScenarioConfig, Wavefront,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn iid_capacity_anchor() -> Outcome {
    let h = iid_rayleigh(64, 128, 2000, 1, 11).unwrap();
    let c = capacity_with(&h, 10.0, Normalization::Ensemble).unwrap();
    let (m, s) = (c.mean(), c.std());
    outcome(
        c.values.len() >= 2000 && (m - 200.0).abs() <= 2.0 && (s - 0.987).abs() <= 0.3,
        format!("draws {} mean {m:.3} std {s:.3}", c.values.len()),
    )
}

fn mixture_mean_identity() -> Outcome {
    let fit = DistFit::from_params(DistParams::Gmm2 {
        w1: 0.367,
        mu1: 145.0,
        sigma1: 1.0,
        w2: 0.633,
        mu2: 124.0,
        sigma2: 1.0,
    });
    let m = fit.mean();
    outcome((m - 131.7).abs() <= 0.05, format!("mean {m:.4}"))
}

fn rayleigh_distance_check() -> Outcome {
    let d = rayleigh_distance(0.652, 15e9).unwrap();
    outcome((d - 42.5).abs() <= 0.1, format!("{d:.4} m"))
}

fn cost235_magnitude() -> Outcome {
    let l = foliage_excess_loss_db(3.0, 15_000.0, LeafState::OutOfLeaf.original()).unwrap();
    outcome((l - 6.73).abs() <= 0.05, format!("{l:.4} dB"))
}

fn path_loss_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let fc = 15e9;
    let mut pass = true;
    let mut detail = Vec::new();
    for r in REFERENCE_PATH_LOSS.iter().filter(|r| matches!(r.model, FitModel::Ci | FitModel::Fi)) {
        let noise = Normal::new(0.0, r.sigma_db).unwrap();
        let samples: Vec<PathLossSample> = (0..n)
            .map(|_| {
                let d = 10f64.powf(rng.gen_range(0.7..2.3));
                let x = 10.0 * d.log10();
                let mean = match r.model {
                    FitModel::Ci => fspl_db(1.0, fc).unwrap() + r.params[0] * x,
                    _ => r.params[0] + r.params[1] * x,
                };
                PathLossSample::new(d, mean + noise.sample(&mut rng), ScenarioClass::NfLos, 0.0).unwrap()
            })
            .collect();
        match r.model {
            FitModel::Ci => {
                let f = fit_ci(&samples, fc, 1.0).unwrap();
                let ple = f.param("ple").unwrap();
                pass &= (ple - r.params[0]).abs() <= 0.02 && (f.sigma_db - r.sigma_db).abs() <= 0.05;
                detail.push(format!("{} CI ple {ple:.4} sigma {:.3}", r.scenario, f.sigma_db));
            }
            _ => {
                let f = fit_fi(&samples, 1.0).unwrap();
                let (a, b) = (f.param("alpha").unwrap(), f.param("beta").unwrap());
                pass &= (a - r.params[0]).abs() <= 0.5
                    && (b - r.params[1]).abs() <= 0.03
                    && (f.sigma_db - r.sigma_db).abs() <= 0.05;
                detail.push(format!("{} FI alpha {a:.3} beta {b:.4} sigma {:.3}", r.scenario, f.sigma_db));
            }
        }
    }
    outcome(pass, detail.join("; "))
}

fn sounding_round_trip() -> Outcome {
    let start = Instant::now();
    let fc = 15e9;
    let tx = ArrayGeometry::planar(8, 4, 0.01).unwrap();
    let rx = ArrayGeometry::planar(4, 4, 0.01).unwrap();
    let cfg = ScenarioConfig::link(ScenarioClass::FfLos, tx, rx, 100.0, 0.0, 0.0).unwrap();
    let d = |deg: f64| deg.to_radians();
    let g0 = umimo_core::propagation::free_space_gain(100.0, fc);
    let specs = [
        (0.0, 333.6e-9, 0.0, 0.0, 0.0, 0.0, 0.3),
        (-3.0, 345.0e-9, 20.0, -25.0, 5.0, -4.0, 1.1),
        (-6.0, 362.0e-9, -30.0, 35.0, -6.0, 3.0, 2.0),
        (-9.0, 381.0e-9, 40.0, 15.0, 2.0, 8.0, -1.4),
        (-12.0, 404.0e-9, -15.0, -45.0, 10.0, -2.0, -2.5),
    ];
    let truth: Vec<Mpc> = specs
        .iter()
        .map(|&(p_db, tau, aod, aoa, eod, eoa, ph)| {
            Mpc::new(
                Complex64::from_polar(g0 * 10f64.powf(p_db / 20.0), ph),
                tau,
                d(aod),
                d(aoa),
                d(eod),
                d(eoa),
            )
            .unwrap()
        })
        .collect();
    let h = synth_channel(&cfg, &truth, Wavefront::Planar).unwrap();
    let cir = Cir::from_tensor(&h, 0).unwrap();
    let pn = PnSequence::default_1023();
    let response = SounderResponse {
        g_sys: FrontEndResponse::Ripple {
            peak_to_peak_db: 3.0,
            period_hz: 70e6,
            phase_rad: 0.4,
            group_delay_s: 3e-9,
        },
        ..SounderResponse::default()
    };
    let clean = sound_link(&cir, &pn, &response, f64::NEG_INFINITY, DEFAULT_OVERSAMPLE, 0).unwrap();
    let noise_dbm = 10.0 * clean.mean_power().log10() - 30.0;
    let y = sound_link(&cir, &pn, &response, noise_dbm, DEFAULT_OVERSAMPLE, 1).unwrap();
    let d_ane = 1.0;
    let cal_cir = chamber_cir(d_ane, fc, cfg.bandwidth_hz, 1023).unwrap();
    let y_cal = sound_link(&cal_cir, &pn, &response, noise_dbm, DEFAULT_OVERSAMPLE, 2).unwrap();
    let est_cir = ota_calibrate(&y, &y_cal, d_ane, fc).unwrap();
    let est = est_cir.to_tensor().unwrap();
    let sc = SageConfig {
        window_rx: 16,
        window_tx: 32,
        max_paths: 10,
        ..SageConfig::default()
    };
    let r = sage_estimate(&est, &cfg.tx_geometry, &cfg.rx_geometry, &sc).unwrap();
    let mut pass = true;
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for t in &truth {
        let best = r
            .mpcs
            .iter()
            .min_by(|a, b| (a.delay - t.delay).abs().total_cmp(&(b.delay - t.delay).abs()));
        match best {
            Some(m) => {
                let de = (m.delay - t.delay).abs();
                let ae = (m.aaoa - t.aaoa).abs().max((m.aaod - t.aaod).abs()).to_degrees();
                let pe = (m.power_db() - t.power_db()).abs();
                worst = (worst.0.max(de), worst.1.max(ae), worst.2.max(pe));
                pass &= de < 4e-9 && ae < 2.0 && pe < 0.5;
            }
            None => pass = false,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    outcome(
        pass,
        format!(
            "{} estimated, worst delay {:.3} ns, azimuth {:.3} deg, power {:.3} dB, {secs:.1} s",
            r.mpcs.len(),
            worst.0 * 1e9,
            worst.1,
            worst.2
        ),
    )
}

fn los_aperture_trends(distance: f64) -> umimo_core::newchar::ApertureTrends {
    let tx = ArrayGeometry::ula(1, 0.01).unwrap();
    let rx = ArrayGeometry::ula(64, L_ARRAY_SPACING_M).unwrap();
    let mut cfg = ScenarioConfig::link(ScenarioClass::NfLos, tx, rx, distance, 0.0, 0.0).unwrap();
    cfg.num_freq = 32;
    cfg.bandwidth_hz = 10e6;
    let los = Mpc::line_of_sight(&cfg.tx_geometry, &cfg.rx_geometry, Complex64::new(1.0, 0.0)).unwrap();
    let h = synth_channel(&cfg, &[los], Wavefront::Spherical).unwrap();
    let k = cfg.num_freq / 2;
    let gains: Vec<Complex64> = (0..64).map(|q| h.get(0, k, q, 0)).collect();
    fit_aperture_trends(&AperturePathTrace::from_gains(&gains).unwrap()).unwrap()
}

fn near_field_phase() -> Outcome {
    let near = los_aperture_trends(25.0);
    let far = los_aperture_trends(500.0);
    outcome(
        near.phase_quadfit_rmse_rad < near.phase_linfit_rmse_rad / 3.0 && far.phase_linfit_rmse_rad < 0.05,
        format!(
            "25 m linear {:.4} quadratic {:.2e} rad; 500 m linear {:.4} rad",
            near.phase_linfit_rmse_rad, near.phase_quadfit_rmse_rad, far.phase_linfit_rmse_rad
        ),
    )
}

fn chd_oracle() -> Outcome {
    let sizes = vec![1, 2, 4, 8, 16, 32, 64];
    let runs = 3;
    let mut mean_curve = vec![0.0; sizes.len()];
    let mut pass = true;
    let mut worst_rel = 0.0f64;
    for run in 0..runs {
        let mut ens = HardeningEnsemble::new(sizes.clone());
        for m in 0..200u64 {
            ens.push(&iid_rayleigh(64, 128, 1, 16, 1000 * run + m).unwrap()).unwrap();
        }
        for (i, &n) in sizes.iter().enumerate() {
            let v = chd(&ens, n).unwrap();
            let oracle = 1.0 / (128.0 * n as f64);
            let rel = (v - oracle).abs() / oracle;
            worst_rel = worst_rel.max(rel);
            pass &= rel <= 0.3;
            mean_curve[i] += v / runs as f64;
        }
    }
    let monotone = mean_curve.windows(2).all(|w| w[1] < w[0]);
    outcome(
        pass && monotone,
        format!("worst relative error {worst_rel:.3}, monotone {monotone}"),
    )
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex64> {
    let a = DMatrix::from_vec(n, n, random_vec(rng, n * n));
    a.qr().q()
}

fn metric_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut fails = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            fails.push(name.to_string());
        }
    };

    for _ in 0..200 {
        let a = random_vec(&mut rng, 24);
        let b = random_vec(&mut rng, 24);
        let s = sccf(&a, &b).unwrap();
        check("sccf range", (0.0..=1.0).contains(&s));
        check("sccf self", (sccf(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let k = Complex64::from_polar(rng.gen_range(0.1..10.0), rng.gen_range(-PI..PI));
        let scaled: Vec<Complex64> = a.iter().map(|v| v * k).collect();
        check("sccf scale", (sccf(&scaled, &b).unwrap() - s).abs() < 1e-12);
    }

    let grid = FrequencyGrid::band(15e9, 100e6, 8);
    let u = random_vec(&mut rng, 6);
    let v = random_vec(&mut rng, 5);
    let w = random_vec(&mut rng, 8);
    let mut rank1 = ChannelTensor::zeros(2, 6, 5, grid.frequencies()).unwrap();
    for j in 0..2 {
        for k in 0..8 {
            for q in 0..6 {
                for p in 0..5 {
                    rank1.set(j, k, q, p, u[q] * v[p] * w[k] * (j as f64 + 1.0));
                }
            }
        }
    }
    for pairing in [CscfPairing::AllRxPairs, CscfPairing::AdjacentRx] {
        check("cscf rank one", (cscf(&rank1, pairing).unwrap() - 1.0).abs() < 1e-9);
    }

    let two = angular_spread(&[d60(), -d60()], &[1.0, 1.0]).unwrap();
    check("as two-path", (two.rad - 1.1774).abs() < 1e-4);
    check("as two-path closed form", (two.rad - (-2.0 * 0.5f64.ln()).sqrt()).abs() < 1e-12);
    for _ in 0..100 {
        let n = 6;
        let ang: Vec<f64> = (0..n).map(|_| rng.gen_range(-PI..PI)).collect();
        let pw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let base = angular_spread(&ang, &pw).unwrap().rad;
        let th = rng.gen_range(-PI..PI);
        let rot: Vec<f64> = ang.iter().map(|a| a + th).collect();
        let refl: Vec<f64> = ang.iter().map(|a| -a).collect();
        check("as rotation", (angular_spread(&rot, &pw).unwrap().rad - base).abs() < 1e-9);
        check("as reflection", (angular_spread(&refl, &pw).unwrap().rad - base).abs() < 1e-9);
    }

    let ds = rms_delay_spread(&[0.0, 100e-9], &[1.0, 1.0]).unwrap();
    check("ds two-path", (ds - 50e-9).abs() < 1e-18);

    let h = iid_rayleigh(8, 12, 1, 4, 3).unwrap();
    let base = capacity(&h, 10.0).unwrap();
    let mut scaled = h.clone();
    scaled.scale(Complex64::new(3.7, -1.2));
    let sc = capacity(&scaled, 10.0).unwrap();
    let u_rx = random_unitary(&mut rng, 8);
    let u_tx = random_unitary(&mut rng, 12);
    let mut rotated = h.clone();
    for k in 0..4 {
        let m = &u_rx * h.matrix(0, k) * &u_tx;
        for q in 0..8 {
            for p in 0..12 {
                rotated.set(0, k, q, p, m[(q, p)]);
            }
        }
    }
    let ro = capacity(&rotated, 10.0).unwrap();
    for i in 0..4 {
        check("capacity scale", (sc.values[i] - base.values[i]).abs() < 1e-9);
        check("capacity unitary", (ro.values[i] - base.values[i]).abs() < 1e-9);
    }

    let mut samples: Vec<f64> = (0..400).map(|_| 124.0 + 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    samples.extend((0..250).map(|_| 145.0 + 1.5 * rng.sample::<f64, _>(StandardNormal)));
    let g = fit_gmm2(&samples, 500, 1e-10, 4).unwrap();
    check(
        "em monotone",
        g.ll_history.len() >= 2 && g.ll_history.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()),
    );

    outcome(
        fails.is_empty(),
        if fails.is_empty() {
            "all invariants hold".into()
        } else {
            format!("failed: {}", fails.join(", "))
        },
    )
}

fn d60() -> f64 {
    60f64.to_radians()
}

fn pn_suite() -> Outcome {
    let start = Instant::now();
    let pn = PnSequence::default_1023();
    let ones = pn.chips.iter().filter(|c| **c > 0.0).count();
    let zeros = pn.len() - ones;
    let off_peak = (1..pn.len()).all(|lag| pn.autocorrelation(lag) == -1.0);
    let peak = pn.autocorrelation(0);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        pn.len() == 1023 && off_peak && peak == 1023.0 && ones == 512 && zeros == 511 && secs < 1.0,
        format!("length {}, balance {ones}/{zeros}, off-peak -1 {off_peak}, {secs:.3} s", pn.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("iid Rayleigh capacity anchor", iid_capacity_anchor),
        ("mixture mean identity", mixture_mean_identity),
        ("Rayleigh distance", rayleigh_distance_check),
        ("COST 235 out-of-leaf magnitude", cost235_magnitude),
        ("path-loss generator recovery", path_loss_recovery),
        ("sounding round trip", sounding_round_trip),
        ("near-field phase curvature", near_field_phase),
        ("channel hardening oracle", chd_oracle),
        ("metric invariants", metric_invariants),
        ("PN sequence", pn_suite),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{status}] {:>2}. {name}: {} ({:.2} s)",
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    println!("acceptance: {} passed, {} failed", 10 - failed.len(), failed.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
