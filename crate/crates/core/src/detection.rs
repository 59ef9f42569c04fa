//! Equalisation, hard decisions and BER Monte Carlo.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{effective_matrix, ChannelFamily, ChannelSpec};
use crate::error::{check_len, Error, Result};
use crate::seed::{derive_seed, random_bits, rng_from_seed};
use crate::waveform::{
    map_bits, noise_variance, transmit_with_rng, Constellation, Frame, Modem, WaveformId,
};

/// Largest search space [`ml_detect`] will enumerate.
pub const ML_SEARCH_CAP: u64 = 1 << 20;

/// Seed label shared by every experiment built on [`run_trial`].
pub const TRIAL_LABEL: &str = "ber";

/// Linear MMSE equaliser for a fixed channel, reusable across noise levels.
#[derive(Debug, Clone)]
pub struct MmseEqualizer {
    g: DMatrix<Complex64>,
    gram: DMatrix<Complex64>,
}

impl MmseEqualizer {
    pub fn new(g: DMatrix<Complex64>) -> Self {
        let gram = &g * g.adjoint();
        Self { g, gram }
    }

    pub fn channel(&self) -> &DMatrix<Complex64> {
        &self.g
    }

    /// `x̂ = Gᴴ (G Gᴴ + σ² I)⁻¹ y`; with `σ² = 0` solves `G x = y` directly.
    pub fn equalize(&self, y: &[Complex64], noise_var: f64) -> Result<Vec<Complex64>> {
        let n = self.g.nrows();
        check_len(n, y.len())?;
        if noise_var.is_nan() || noise_var < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise variance {noise_var} must be non-negative"
            )));
        }
        let y = DVector::from_column_slice(y);
        if noise_var == 0.0 {
            return solve_exact(&self.g, &y);
        }
        if noise_var.is_infinite() {
            return Ok(vec![Complex64::new(0.0, 0.0); n]);
        }
        let mut r = self.gram.clone();
        for i in 0..n {
            r[(i, i)] += noise_var;
        }
        let z = match r.clone().cholesky() {
            Some(ch) => ch.solve(&y),
            None => r.lu().solve(&y).ok_or(Error::RankDeficient)?,
        };
        Ok((self.g.adjoint() * z).iter().copied().collect())
    }
}

fn solve_exact(g: &DMatrix<Complex64>, y: &DVector<Complex64>) -> Result<Vec<Complex64>> {
    let lu = g.clone().lu();
    let scale = g.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let u = lu.u();
    let min_pivot = (0..u.nrows())
        .map(|i| u[(i, i)].norm())
        .fold(f64::INFINITY, f64::min);
    if scale == 0.0 || min_pivot <= 1e-12 * scale {
        return Err(Error::RankDeficient);
    }
    let x = lu.solve(y).ok_or(Error::RankDeficient)?;
    Ok(x.iter().copied().collect())
}

pub fn mmse_equalize(
    g: &DMatrix<Complex64>,
    y: &[Complex64],
    noise_var: f64,
) -> Result<Vec<Complex64>> {
    MmseEqualizer::new(g.clone()).equalize(y, noise_var)
}

pub fn hard_demap(symbols: &[Complex64], m: &Constellation) -> Vec<u8> {
    m.demap(symbols)
}

/// `‖y − G x‖²`.
pub fn residual(g: &DMatrix<Complex64>, y: &[Complex64], x: &[Complex64]) -> f64 {
    let n = g.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let mut acc = y[i];
        for (j, xj) in x.iter().enumerate() {
            acc -= g[(i, j)] * xj;
        }
        total += acc.norm_sqr();
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub symbols: Vec<Complex64>,
    pub hard_bits: Vec<u8>,
    pub residual: f64,
}

/// Exhaustive ML over all `M^N` symbol vectors. Candidates are visited in
/// lexicographic order of their point indices (first symbol most
/// significant) and only a strictly smaller metric replaces the incumbent.
pub fn ml_detect(
    g: &DMatrix<Complex64>,
    y: &[Complex64],
    m: &Constellation,
) -> Result<DetectionResult> {
    let n = g.ncols();
    check_len(g.nrows(), y.len())?;
    let size = (m.order() as f64).powi(n as i32);
    if size > ML_SEARCH_CAP as f64 {
        return Err(Error::SearchSpaceTooLarge {
            size,
            cap: ML_SEARCH_CAP,
        });
    }
    let pts = m.points();
    let mut idx = vec![0usize; n];
    let mut best_idx = idx.clone();
    let mut best = f64::INFINITY;
    let mut x = vec![pts[0]; n];
    loop {
        let d = residual(g, y, &x);
        if d < best {
            best = d;
            best_idx.copy_from_slice(&idx);
        }
        // Odometer increment, last position fastest.
        let mut pos = n;
        loop {
            if pos == 0 {
                let symbols: Vec<Complex64> = best_idx.iter().map(|&i| pts[i]).collect();
                let mut hard_bits = Vec::with_capacity(n * m.bits_per_symbol());
                for &i in &best_idx {
                    m.label_bits(i, &mut hard_bits);
                }
                return Ok(DetectionResult {
                    symbols,
                    hard_bits,
                    residual: best,
                });
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < m.order() {
                x[pos] = pts[idx[pos]];
                break;
            }
            idx[pos] = 0;
            x[pos] = pts[0];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub snr_db: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Normal-approximation 95% half-width over per-trial error fractions.
    /// Errors cluster within a frame, so trials rather than bits are the
    /// independent samples.
    pub ci95: f64,
}

impl BerRecord {
    /// `errors[t]` is the bit-error count of trial `t`.
    pub fn from_trials(snr_db: f64, errors: &[u64], bits_per_trial: u64) -> Self {
        let trials = errors.len() as u64;
        let bit_errors: u64 = errors.iter().sum();
        let bits = bits_per_trial as f64;
        let ber = bit_errors as f64 / (trials as f64 * bits);
        let ci95 = if trials > 1 {
            let var = errors
                .iter()
                .map(|&e| (e as f64 / bits - ber).powi(2))
                .sum::<f64>()
                / (trials - 1) as f64;
            1.96 * (var / trials as f64).sqrt()
        } else {
            0.0
        };
        Self {
            snr_db,
            trials,
            bit_errors,
            ber,
            ci95,
        }
    }
}

/// Everything one Monte Carlo frame produced.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub channel: ChannelSpec,
    pub sent: Vec<Complex64>,
    /// Bit errors per SNR point.
    pub bit_errors: Vec<u64>,
    /// Equalised symbols per SNR point, when requested.
    pub equalized: Vec<Vec<Complex64>>,
}

/// One frame through `tx`, a fresh channel draw and the receiver `rx` with
/// perfect knowledge of its own effective channel `A_rx·H·A_rx⁻¹`.
///
/// Channel, bits and noise depend only on `(master_seed, trial)` and the SNR
/// index, never on the waveforms, so different transmitters and receivers see
/// identical realizations.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    tx: &Modem,
    rx: &Modem,
    family: &ChannelFamily,
    m: &Constellation,
    snr_grid: &[f64],
    master_seed: u64,
    trial: u64,
    keep_symbols: bool,
) -> Result<TrialOutcome> {
    let n = tx.n();
    check_len(n, family.n)?;
    check_len(n, rx.n())?;
    let seed = derive_seed(master_seed, TRIAL_LABEL, trial);
    let mut rng = rng_from_seed(seed);
    let spec = family.draw(&mut rng);
    let bits = random_bits(&mut rng, n * m.bits_per_symbol());
    let x = map_bits(&bits, m)?;
    let s = tx.modulate(&x)?;
    // Both ends agree on c1, so the prefix seen by the receiver is the transmitter's.
    let prefix = tx.id().prefix_rule();
    let eq = MmseEqualizer::new(effective_matrix(&spec, rx.transform(), &prefix)?);
    let mut bit_errors = Vec::with_capacity(snr_grid.len());
    let mut equalized = Vec::new();
    for (i, &snr) in snr_grid.iter().enumerate() {
        let mut noise_rng = rng_from_seed(derive_seed(seed, "noise", i as u64));
        let r = transmit_with_rng(&s, &spec, &prefix, snr, &mut noise_rng)?;
        let y = rx.demodulate(&r)?;
        let xhat = eq.equalize(y.data(), noise_variance(snr))?;
        let decided = m.demap(&xhat);
        bit_errors.push(decided.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64);
        if keep_symbols {
            equalized.push(xhat);
        }
    }
    Ok(TrialOutcome {
        channel: spec,
        sent: x.into_data(),
        bit_errors,
        equalized,
    })
}

/// Sums per-trial error counts into one record per SNR point.
pub fn aggregate(snr_grid: &[f64], per_trial: &[Vec<u64>], bits_per_trial: u64) -> Vec<BerRecord> {
    snr_grid
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            let errors: Vec<u64> = per_trial.iter().map(|t| t[i]).collect();
            BerRecord::from_trials(snr, &errors, bits_per_trial)
        })
        .collect()
}

/// BER versus SNR with matched demodulation, perfect CSI and MMSE detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerExperiment {
    pub waveform: WaveformId,
    pub family: ChannelFamily,
    pub constellation: usize,
    pub snr_grid: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
}

impl BerExperiment {
    pub fn run(&self) -> Result<Vec<BerRecord>> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        self.family.validate()?;
        let m = Constellation::qam(self.constellation)?;
        let modem = Modem::new(self.waveform.clone());
        let per_trial: Vec<Vec<u64>> = (0..self.trials)
            .into_par_iter()
            .map(|t| {
                run_trial(
                    &modem,
                    &modem,
                    &self.family,
                    &m,
                    &self.snr_grid,
                    self.master_seed,
                    t,
                    false,
                )
                .map(|o| o.bit_errors)
            })
            .collect::<Result<_>>()?;
        let bits = (self.waveform.n() * m.bits_per_symbol()) as u64;
        Ok(aggregate(&self.snr_grid, &per_trial, bits))
    }
}

pub fn run_ber(
    waveform: &WaveformId,
    family: &ChannelFamily,
    constellation: usize,
    snr_grid: &[f64],
    trials: u64,
    master_seed: u64,
) -> Result<Vec<BerRecord>> {
    BerExperiment {
        waveform: waveform.clone(),
        family: family.clone(),
        constellation,
        snr_grid: snr_grid.to_vec(),
        trials,
        master_seed,
    }
    .run()
}

/// Convenience for callers holding a demodulated frame.
pub fn equalize_frame(
    g: &DMatrix<Complex64>,
    y: &Frame<crate::waveform::Demodulated>,
    noise_var: f64,
) -> Result<Vec<Complex64>> {
    mmse_equalize(g, y.data(), noise_var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{optimal_c1, ChannelFamily};
    use crate::seed::complex_gaussian;
    use crate::transforms::Permutation;
    use crate::waveform::default_c2;

    fn rand_matrix(n: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(n, n, |_, _| complex_gaussian(&mut rng, 1.0))
    }

    #[test]
    fn identity_channel_passes_through() {
        let g = DMatrix::<Complex64>::identity(4, 4);
        let y: Vec<Complex64> = (0..4).map(|i| Complex64::new(i as f64, -1.0)).collect();
        assert_eq!(mmse_equalize(&g, &y, 0.0).unwrap(), y);
        let shrunk = mmse_equalize(&g, &y, 1e-14).unwrap();
        for (a, b) in shrunk.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn noiseless_recovery_and_shrinkage() {
        let n = 12;
        let g = rand_matrix(n, 1);
        let mut rng = rng_from_seed(2);
        let x: Vec<Complex64> = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let y: Vec<Complex64> = (&g * DVector::from_vec(x.clone()))
            .iter()
            .copied()
            .collect();
        let xhat = mmse_equalize(&g, &y, 0.0).unwrap();
        for (a, b) in xhat.iter().zip(&x) {
            assert!((a - b).norm() < 1e-8);
        }
        let ls = xhat;
        let near = mmse_equalize(&g, &y, 1e-12).unwrap();
        let diff: f64 = near
            .iter()
            .zip(&ls)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let norm: f64 = ls.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-6);
        let huge = mmse_equalize(&g, &y, 1e12).unwrap();
        assert!(huge.iter().map(|a| a.norm()).fold(0.0, f64::max) < 1e-9);
        assert!(mmse_equalize(&g, &y, f64::INFINITY)
            .unwrap()
            .iter()
            .all(|a| a.norm() == 0.0));
    }

    #[test]
    fn singular_channel_is_rank_deficient() {
        let mut g = rand_matrix(4, 3);
        for j in 0..4 {
            g[(3, j)] = g[(2, j)];
        }
        let y = vec![Complex64::new(1.0, 0.0); 4];
        assert_eq!(mmse_equalize(&g, &y, 0.0), Err(Error::RankDeficient));
        assert!(mmse_equalize(&g, &y, 0.1).is_ok());
        assert!(mmse_equalize(&g, &y, -1.0).is_err());
    }

    #[test]
    fn ml_matches_independent_enumeration() {
        let m = Constellation::qam(4).unwrap();
        let g = rand_matrix(2, 7);
        let mut rng = rng_from_seed(8);
        let y: Vec<Complex64> = (0..2).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let got = ml_detect(&g, &y, &m).unwrap();
        // 16 candidates, scored directly.
        let pts = m.points();
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..4 {
            for b in 0..4 {
                let r0 = y[0] - g[(0, 0)] * pts[a] - g[(0, 1)] * pts[b];
                let r1 = y[1] - g[(1, 0)] * pts[a] - g[(1, 1)] * pts[b];
                let d = r0.norm_sqr() + r1.norm_sqr();
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        assert_eq!(got.symbols, vec![pts[best.1], pts[best.2]]);
        assert!((got.residual - best.0).abs() < 1e-12);
        assert_eq!(got.hard_bits.len(), 4);
    }

    #[test]
    fn ml_noiseless_and_cap() {
        let m = Constellation::qam(4).unwrap();
        let g = rand_matrix(4, 9);
        let x = m.map(&[0, 1, 1, 1, 1, 0, 0, 0]).unwrap();
        let y: Vec<Complex64> = (&g * DVector::from_vec(x.clone()))
            .iter()
            .copied()
            .collect();
        let r = ml_detect(&g, &y, &m).unwrap();
        assert_eq!(r.symbols, x);
        assert_eq!(r.hard_bits, vec![0, 1, 1, 1, 1, 0, 0, 0]);
        assert!(r.residual < 1e-20);
        let big = rand_matrix(11, 1);
        assert!(matches!(
            ml_detect(&big, &[Complex64::new(0.0, 0.0); 11], &m),
            Err(Error::SearchSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn ml_agrees_with_mmse_at_high_snr() {
        let m = Constellation::qam(4).unwrap();
        let n = 4;
        let mut agree = 0;
        let trials = 300;
        for t in 0..trials {
            let mut rng = rng_from_seed(1000 + t);
            let g = DMatrix::from_fn(n, n, |_, _| complex_gaussian(&mut rng, 1.0 / n as f64));
            let bits = random_bits(&mut rng, 2 * n);
            let x = m.map(&bits).unwrap();
            let var = noise_variance(40.0);
            let mut y: Vec<Complex64> = (&g * DVector::from_vec(x)).iter().copied().collect();
            for v in &mut y {
                *v += complex_gaussian(&mut rng, var);
            }
            let ml = ml_detect(&g, &y, &m).unwrap();
            let mm = hard_demap(&mmse_equalize(&g, &y, var).unwrap(), &m);
            agree += usize::from(ml.hard_bits == mm);
        }
        assert!(agree as f64 >= 0.99 * trials as f64, "{agree}/{trials}");
    }

    #[test]
    fn ber_record_arithmetic() {
        let mut errors = vec![0u64; 100];
        errors[3] = 64;
        let r = BerRecord::from_trials(10.0, &errors, 128);
        assert_eq!((r.trials, r.bit_errors), (100, 64));
        assert_eq!(r.ber, 64.0 / 12800.0);
        // Sample std of {0.5, 0 x 99} is 0.05; half-width 1.96 * 0.05 / 10.
        assert!((r.ci95 - 1.96 * 0.05 / 10.0).abs() < 1e-12);
        let spread = BerRecord::from_trials(10.0, &[1; 100], 128);
        assert_eq!(spread.ci95, 0.0);
        let zero = BerRecord::from_trials(10.0, &[0], 128);
        assert_eq!((zero.ber, zero.ci95), (0.0, 0.0));
    }

    #[test]
    fn noiseless_ber_is_zero_and_high_snr_is_small() {
        let n = 16;
        let fam = ChannelFamily::new(n, 3, 2, 1, 0);
        let w = WaveformId::afdm(n, optimal_c1(1, 0, n), default_c2(n)).unwrap();
        let r = run_ber(&w, &fam, 4, &[f64::INFINITY, 60.0], 200, 5).unwrap();
        assert_eq!(r[0].bit_errors, 0);
        assert!(r[1].ber < 1e-3);
    }

    #[test]
    fn identity_permutation_matches_afdm_trial_for_trial() {
        let n = 16;
        let fam = ChannelFamily::new(n, 3, 2, 1, 0);
        let c1 = optimal_c1(1, 0, n);
        let afdm = WaveformId::afdm(n, c1, default_c2(n)).unwrap();
        let cp =
            WaveformId::one_sided(n, c1, default_c2(n), Permutation::identity(n).unwrap()).unwrap();
        let grid = [0.0, 10.0, 20.0];
        assert_eq!(
            run_ber(&afdm, &fam, 4, &grid, 50, 3).unwrap(),
            run_ber(&cp, &fam, 4, &grid, 50, 3).unwrap()
        );
    }

    #[test]
    fn ber_is_deterministic_across_thread_counts() {
        let n = 16;
        let fam = ChannelFamily::new(n, 3, 2, 1, 0);
        let w = WaveformId::afdm(n, optimal_c1(1, 0, n), default_c2(n)).unwrap();
        let grid = [5.0, 15.0];
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| run_ber(&w, &fam, 4, &grid, 64, 9).unwrap());
        let b = four.install(|| run_ber(&w, &fam, 4, &grid, 64, 9).unwrap());
        assert_eq!(a, b);
    }
}
