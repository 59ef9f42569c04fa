//! Reference implementations used as test oracles. Each one follows the
//! textbook definition directly and shares no code path with the library.

#![allow(dead_code)]

use std::f64::consts::PI;

use cpafdm::channel::ChannelSpec;
use cpafdm::{CMatrix, Complex64, Permutation};

pub fn cis(turns: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * turns)
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Unitary DFT matrix, `F[k, n] = exp(-j2π kn/N)/√N`.
pub fn dft_matrix(n: usize) -> CMatrix {
    let s = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |k, t| cis(-(((k * t) % n) as f64) / n as f64) * s)
}

/// `diag(λ_c[perm[i]])` with `λ_c[i] = exp(-j2π c i²)`.
pub fn chirp_diag(n: usize, c: f64, perm: &Permutation) -> CMatrix {
    let mut d = CMatrix::zeros(n, n);
    for i in 0..n {
        let p = perm.get(i) as f64;
        d[(i, i)] = cis(-c * p * p);
    }
    d
}

/// Explicit triple product `Λ2 F Λ1`.
pub fn daft_matrix(
    n: usize,
    c1: f64,
    c2: f64,
    perm1: &Permutation,
    perm2: &Permutation,
) -> CMatrix {
    chirp_diag(n, c2, perm2) * dft_matrix(n) * chirp_diag(n, c1, perm1)
}

/// Conventional AFDM modulator as a direct sum over the chirp kernel.
pub fn afdm_modulate_direct(c1: f64, c2: f64, x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let s = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|t| {
            let tf = t as f64;
            x.iter()
                .enumerate()
                .map(|(m, xm)| {
                    let mf = m as f64;
                    xm * cis(c1 * tf * tf + c2 * mf * mf + ((t * m) % n) as f64 / n as f64)
                })
                .sum::<Complex64>()
                * s
        })
        .collect()
}

/// Time-domain channel with an explicit chirp-periodic prefix of `lmax`
/// samples, dropped at the receiver.
pub fn channel_with_explicit_prefix(
    spec: &ChannelSpec,
    c1: f64,
    s: &[Complex64],
) -> Vec<Complex64> {
    let n = s.len() as i64;
    let cp = spec.lmax as i64;
    let nf = n as f64;
    // ext[i] holds sample i - cp.
    let ext: Vec<Complex64> = (-cp..n)
        .map(|m| {
            if m >= 0 {
                s[m as usize]
            } else {
                let mf = m as f64;
                s[(n + m) as usize] * cis(-c1 * (nf * nf + 2.0 * nf * mf))
            }
        })
        .collect();
    (0..n)
        .map(|t| {
            spec.paths
                .iter()
                .map(|p| {
                    let src = t - p.delay as i64 + cp;
                    p.gain * cis(-p.doppler * t as f64 / nf) * ext[src as usize]
                })
                .sum()
        })
        .collect()
}

/// Periodic ambiguity magnitude by the direct triple loop, normalized by the
/// frame energy. Rows are lags `-⌊N/2⌋..`, columns Doppler bins
/// `ν_k = (k - ⌊QN/2⌋)/(QN)`.
pub fn brute_ambiguity(s: &[Complex64], q: usize) -> Vec<Vec<f64>> {
    let n = s.len();
    let bins = q * n;
    let energy: f64 = s.iter().map(|z| z.norm_sqr()).sum();
    (0..n)
        .map(|li| {
            let l = li as i64 - (n / 2) as i64;
            (0..bins)
                .map(|k| {
                    let nu = (k as f64 - (bins / 2) as f64) / bins as f64;
                    let acc: Complex64 = (0..n)
                        .map(|t| {
                            let src = (t as i64 - l).rem_euclid(n as i64) as usize;
                            s[t] * s[src].conj() * cis(-nu * t as f64)
                        })
                        .sum();
                    acc.norm() / energy
                })
                .collect()
        })
        .collect()
}

/// `⌊log2(n!)⌋` from a float sum of logarithms; exact for the sizes tested
/// here because `log2(n!)` stays well away from an integer.
pub fn log2_factorial_floor(n: usize) -> u64 {
    (2..=n).map(|k| (k as f64).log2()).sum::<f64>().floor() as u64
}
