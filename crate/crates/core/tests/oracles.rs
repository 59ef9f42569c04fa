mod common;

use std::collections::HashSet;

use cpafdm::channel::{
    effective_channel, location_index, optimal_c1, structure_matrix, ChannelFamily, ChannelSpec,
    PathSpec, PrefixPhaseRule,
};
use cpafdm::cpim::{build_codebook, CpimScheme, MAX_CODEBOOK_BITS};
use cpafdm::detection::run_ber;
use cpafdm::metrics::{
    ambiguity, cut_metrics, ks_distance_to_analytic, papr_db, permutation_ensemble, CutKind,
    PaprCcdf,
};
use cpafdm::physec::{keygen, EavesdropExperiment};
use cpafdm::seed::{derive_seed, random_bits, rng_from_seed};
use cpafdm::transforms::kernel_sample;
use cpafdm::waveform::{default_c2, map_bits, transmit, Modem, Received, WaveformId};
use cpafdm::{
    Complex64, Constellation, CpDaft, Frame, Permutation, TransformConfig, TransformMode,
};
use rand::Rng;

use common::*;

fn random_vec<R: Rng>(n: usize, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

#[test]
fn transform_matches_triple_product() {
    let mut rng = rng_from_seed(1);
    for &n in &[1usize, 2, 5, 8, 17, 64] {
        for _ in 0..5 {
            let (c1, c2) = (rng.random::<f64>(), rng.random::<f64>());
            let p1 = Permutation::random(n, &mut rng).unwrap();
            let p2 = Permutation::random(n, &mut rng).unwrap();
            let reference = daft_matrix(n, c1, c2, &p1, &p2);
            let cfg = TransformConfig::new(n, c1, c2, p1, p2).unwrap();
            let v = random_vec(n, &mut rng);
            for mode in [TransformMode::Fast, TransformMode::Matrix] {
                let t = CpDaft::with_mode(cfg.clone(), mode);
                let want: Vec<Complex64> = (&reference
                    * cpafdm::DMatrix::from_vec(n, 1, v.clone()))
                .iter()
                .copied()
                .collect();
                assert!(max_abs_diff(&t.forward(&v).unwrap(), &want) < 1e-11);
                let back: Vec<Complex64> = (reference.adjoint()
                    * cpafdm::DMatrix::from_vec(n, 1, v.clone()))
                .iter()
                .copied()
                .collect();
                assert!(max_abs_diff(&t.inverse(&v).unwrap(), &back) < 1e-11);
            }
        }
    }
}

#[test]
fn dft_special_case() {
    let n = 12;
    let v = random_vec(n, &mut rng_from_seed(2));
    let f = dft_matrix(n);
    let want: Vec<Complex64> = (&f * cpafdm::DMatrix::from_vec(n, 1, v.clone()))
        .iter()
        .copied()
        .collect();
    let got = CpDaft::new(TransformConfig::dft(n).unwrap())
        .forward(&v)
        .unwrap();
    assert!(max_abs_diff(&got, &want) < 1e-12);
}

#[test]
fn kernel_sum_reproduces_inverse() {
    let n = 10;
    let mut rng = rng_from_seed(3);
    let cfg = TransformConfig::new(
        n,
        0.37,
        0.011,
        Permutation::random(n, &mut rng).unwrap(),
        Permutation::random(n, &mut rng).unwrap(),
    )
    .unwrap();
    let x = random_vec(n, &mut rng);
    let s = CpDaft::new(cfg.clone()).inverse(&x).unwrap();
    for (t, st) in s.iter().enumerate() {
        let acc: Complex64 = x
            .iter()
            .enumerate()
            .map(|(m, xm)| xm * kernel_sample(&cfg, t, m).unwrap())
            .sum();
        assert!((acc - st).norm() < 1e-12);
    }
    let dft = TransformConfig::dft(n).unwrap();
    assert!(
        (kernel_sample(&dft, 0, 0).unwrap() - Complex64::new(1.0 / (n as f64).sqrt(), 0.0)).norm()
            < 1e-15
    );
}

#[test]
fn circulant_channel_matches_explicit_prefix() {
    let mut rng = rng_from_seed(4);
    for &n in &[8usize, 16, 31, 64] {
        for _ in 0..10 {
            let fam = ChannelFamily::new(n, 3, 3, 2, 0);
            let spec = fam.draw(&mut rng);
            let c1 = rng.random::<f64>();
            let s = random_vec(n, &mut rng);
            let prefix = PrefixPhaseRule::AfdmChirpPeriodic { c1 };
            let got = spec.apply(&prefix, &s).unwrap();
            assert!(max_abs_diff(&got, &channel_with_explicit_prefix(&spec, c1, &s)) < 1e-12);
            let dense = spec.matrix(&prefix) * cpafdm::DMatrix::from_vec(n, 1, s.clone());
            assert!(max_abs_diff(&got, dense.as_slice()) < 1e-12);
        }
    }
}

#[test]
fn chirp_periodic_prefix_is_plain_cyclic_for_even_frames() {
    // With 2N·c1 an integer and N even, the prefix phase vanishes.
    let n = 16;
    let c1 = optimal_c1(1, 0, n);
    let rule = PrefixPhaseRule::AfdmChirpPeriodic { c1 };
    for m in -5..0 {
        let f = rule.factor(n, 0, (-m) as usize);
        assert!((f - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn effective_channel_scaling_identity() {
    let n = 24;
    let mut rng = rng_from_seed(5);
    let spec = ChannelFamily::new(n, 4, 2, 1, 0).draw(&mut rng);
    let c1 = optimal_c1(1, 0, n);
    let c2 = 0.0137;
    let perm = Permutation::random(n, &mut rng).unwrap();
    let cfg = TransformConfig::one_sided(n, c1, c2, perm.clone()).unwrap();
    let g = effective_channel(&spec, &cfg).unwrap();
    let xi = structure_matrix(&spec, &cfg).unwrap();
    for r in 0..n {
        for c in 0..n {
            let (pr, pc) = (perm.get(r) as f64, perm.get(c) as f64);
            let want = cis(-c2 * (pr * pr - pc * pc)) * xi[(r, c)];
            assert!((g.matrix()[(r, c)] - want).norm() < 1e-11);
        }
    }
}

#[test]
fn location_index_worked_example() {
    // N=16, c1 = 3/32 (fmax=1), delay 2, Doppler 1: (1 + 32·3/32·2) mod 16 = 7.
    let n = 16;
    let c1 = optimal_c1(1, 0, n);
    assert_eq!(
        location_index(&PathSpec::new(Complex64::new(1.0, 0.0), 2, 1.0), n, c1),
        7
    );
    let spec = ChannelSpec::new(
        n,
        vec![PathSpec::new(Complex64::new(0.6, 0.8), 2, 1.0)],
        2,
        1,
        0,
    )
    .unwrap();
    let g = effective_channel(&spec, &TransformConfig::daft(n, c1, 0.0).unwrap()).unwrap();
    let row0: Vec<usize> = g
        .support()
        .iter()
        .filter(|(r, _)| *r == 0)
        .map(|&(_, c)| c)
        .collect();
    assert_eq!(row0, vec![7]);
}

#[test]
fn ofdm_pipeline_is_plain_dft() {
    let n = 32;
    let m = Constellation::qam(16).unwrap();
    let mut rng = rng_from_seed(6);
    let x = map_bits(&random_bits(&mut rng, 4 * n), &m).unwrap();
    let s = Modem::new(WaveformId::ofdm(n).unwrap())
        .modulate(&x)
        .unwrap();
    let idft = dft_matrix(n).adjoint() * cpafdm::DMatrix::from_vec(n, 1, x.data().to_vec());
    assert!(max_abs_diff(s.data(), idft.as_slice()) < 1e-12);
    let y = Modem::new(WaveformId::ofdm(n).unwrap())
        .demodulate(&Frame::<Received>::new(s.into_data()))
        .unwrap();
    assert!(max_abs_diff(y.data(), x.data()) < 1e-12);
}

#[test]
fn ambiguity_zero_doppler_cut_of_constant_modulus_frame() {
    let n = 32;
    let mut rng = rng_from_seed(7);
    let s: Vec<Complex64> = (0..n).map(|_| cis(rng.random::<f64>())).collect();
    let grid = ambiguity(&s, 4).unwrap();
    for l in -(n as i64 / 2)..(n as i64 / 2) {
        let direct: Complex64 = (0..n)
            .map(|t| s[t] * s[(t as i64 - l).rem_euclid(n as i64) as usize].conj())
            .sum();
        assert!((grid.at_offset(l, 0) - direct.norm() / n as f64).abs() < 1e-12);
    }
    assert!((grid.at_offset(0, 0) - 1.0).abs() < 1e-12);
    assert!(grid
        .values()
        .iter()
        .all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
}

#[test]
fn identity_ensemble_reproduces_afdm_metrics() {
    let n = 32;
    let ones = vec![Complex64::new(1.0, 0.0); n];
    let base = TransformConfig::daft(n, optimal_c1(1, 0, n), default_c2(n)).unwrap();
    let ens = permutation_ensemble(&base, &[Permutation::identity(n).unwrap()], &ones, 8).unwrap();
    let s = CpDaft::new(base).inverse(&ones).unwrap();
    let grid = ambiguity(&s, 8).unwrap();
    assert_eq!(
        ens.records[0].doppler,
        cut_metrics(&grid, CutKind::ZeroDelay).unwrap()
    );
    assert_eq!(
        ens.records[0].delay,
        cut_metrics(&grid, CutKind::ZeroDoppler).unwrap()
    );
    assert_eq!(ens.summary.doppler_pslr.std, 0.0);
    for r in [ens.records[0].doppler, ens.records[0].delay] {
        assert!(r.pslr_db >= 0.0);
    }
}

#[test]
fn papr_ccdf_tracks_analytic_curve() {
    let gammas: Vec<f64> = (0..=24).map(|i| 0.5 * i as f64).collect();
    let mut distances = Vec::new();
    for &n in &[64usize, 256] {
        let w = WaveformId::one_sided(
            n,
            optimal_c1(2, 0, n),
            default_c2(n),
            Permutation::random(n, &mut rng_from_seed(8)).unwrap(),
        )
        .unwrap();
        let modem = Modem::new(w);
        let m = Constellation::qam(4).unwrap();
        let samples: Vec<f64> = (0..100_000u64)
            .map(|f| {
                let mut rng = rng_from_seed(derive_seed(9, "papr", f));
                papr_db(
                    modem
                        .modulate(&map_bits(&random_bits(&mut rng, 2 * n), &m).unwrap())
                        .unwrap()
                        .data(),
                )
                .unwrap()
            })
            .collect();
        distances.push((n, ks_distance_to_analytic(&samples, n)));
        let ccdf = PaprCcdf::from_samples(&samples, n, &gammas);
        for curve in [&ccdf.empirical, &ccdf.analytic] {
            assert!(curve.windows(2).all(|w| w[1] <= w[0]));
            assert!(curve.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
    println!("Kolmogorov distances: {distances:?}");
    assert!(distances.iter().all(|&(_, d)| d < 0.02), "{distances:?}");
}

#[test]
fn cpim_noiseless_sweep_and_score_margin() {
    let n = 8;
    let family = ChannelFamily::new(n, 2, 1, 1, 0);
    let scheme = CpimScheme::new(
        build_codebook(n, 3, 4).unwrap(),
        optimal_c1(1, 0, n),
        default_c2(n),
        Constellation::qam(4).unwrap(),
    )
    .unwrap();
    for k in 0..8usize {
        let mut rng = rng_from_seed(derive_seed(10, "cpim", k as u64));
        let spec = family.draw(&mut rng);
        let mut bits = random_bits(&mut rng, scheme.bits_per_frame());
        for (b, bit) in bits.iter_mut().take(3).enumerate() {
            *bit = ((k >> (2 - b)) & 1) as u8;
        }
        let (frame, s) = scheme.encode(&bits).unwrap();
        // Energy equals a plain CP-AFDM frame of the same symbols.
        assert!((s.energy() - frame.symbols.energy()).abs() < 1e-10);
        let r = transmit(&s, &spec, &scheme.prefix_rule(), f64::INFINITY, 0).unwrap();
        let dec = scheme
            .detect(&r, &scheme.effective_channels(&spec).unwrap(), 0.0)
            .unwrap();
        assert_eq!(dec.frame.chosen_index, k);
        assert_eq!(dec.frame.bits(), bits);
        let others = dec
            .scores
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, v)| *v)
            .fold(f64::INFINITY, f64::min);
        assert!(
            others - dec.scores[k] > 1e-6 * s.energy(),
            "margin {} at k={k}",
            others - dec.scores[k]
        );
    }
}

#[test]
fn cpim_index_errors_at_high_snr() {
    let exp = cpafdm::cpim::CpimExperiment {
        n: 16,
        c1: optimal_c1(1, 0, 16),
        c2: default_c2(16),
        constellation: 4,
        k_bits: 2,
        codebook_seed: 3,
        family: ChannelFamily::new(16, 3, 1, 1, 0),
        snr_grid: vec![30.0],
        trials: 2000,
        master_seed: 12,
    };
    let rec = exp.run().unwrap();
    assert!(rec[0].index_error_rate < 1e-2, "{rec:?}");
}

#[test]
fn codebook_entries_pairwise_distinct() {
    let cb = build_codebook(16, 6, 77).unwrap();
    assert_eq!(cb.len(), 64);
    for i in 0..64 {
        for j in i + 1..64 {
            assert_ne!(cb.entries()[i], cb.entries()[j]);
        }
    }
    assert!(build_codebook(64, MAX_CODEBOOK_BITS + 1, 0).is_err());
}

#[test]
fn keygen_reaches_every_small_key() {
    let ranks: HashSet<String> = (0..1000)
        .map(|s| keygen(3, s).unwrap().rank().to_string())
        .collect();
    assert_eq!(ranks.len(), 6);
}

#[test]
fn eavesdropper_flat_curve_and_phase_blur() {
    let n = 64;
    let family = ChannelFamily::new(n, 3, 3, 2, 0);
    let exp = EavesdropExperiment {
        c1: optimal_c1(2, 0, n),
        c2: default_c2(n),
        constellation: 4,
        family: family.clone(),
        snr_grid: (0..=8).map(|i| 5.0 * i as f64).collect(),
        trials: 50,
        master_seed: 21,
    };
    let key = keygen(n, 21).unwrap();
    let rep = exp.run(&key, 20).unwrap();
    let hi = rep.mismatched_ber.iter().copied().fold(f64::MIN, f64::max);
    let lo = rep.mismatched_ber.iter().copied().fold(f64::MAX, f64::min);
    assert!(hi - lo < 0.02, "{:?}", rep.mismatched_ber);
    assert!(rep.mismatched_ber.iter().all(|b| (0.45..=0.55).contains(b)));
    assert!(*rep.mismatched_phase_variance.last().unwrap() > 0.5);
    let plain = run_ber(
        &exp.waveform(&key).unwrap(),
        &family,
        4,
        &exp.snr_grid,
        50,
        21,
    )
    .unwrap();
    assert_eq!(
        rep.matched_ber,
        plain.iter().map(|r| r.ber).collect::<Vec<_>>()
    );
}
