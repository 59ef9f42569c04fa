//! PAPR statistics, discrete ambiguity functions and sidelobe metrics.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::{CpDaft, Permutation, TransformConfig};
use crate::waveform::{Frame, Time};

/// Reported ISLR when a cut has no sidelobe energy.
pub const ISLR_FLOOR_DB: f64 = -300.0;
/// Reported PSLR when a cut has no sidelobe amplitude.
pub const PSLR_CEIL_DB: f64 = 300.0;

pub fn db10(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db10(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// `10 log10(max |s|² / mean |s|²)`.
pub fn papr_db(s: &[Complex64]) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::UndefinedInput("empty frame".into()));
    }
    let powers = s.iter().map(|z| z.norm_sqr());
    let (peak, total) = powers.fold((0.0f64, 0.0), |(m, t), p| (m.max(p), t + p));
    if total == 0.0 {
        return Err(Error::UndefinedInput("all-zero frame".into()));
    }
    Ok(db10(peak / (total / s.len() as f64)))
}

pub fn papr(s: &Frame<Time>) -> Result<f64> {
    papr_db(s.data())
}

/// `P[PAPR > γ] = 1 − (1 − e^{−γ})^N` for linear `γ`.
pub fn papr_ccdf_analytic(n: usize, gamma_linear: f64) -> f64 {
    if gamma_linear <= 0.0 {
        return 1.0;
    }
    -(n as f64 * (-(-gamma_linear).exp()).ln_1p()).exp_m1()
}

/// Linear threshold at which the analytic CCDF equals `p`.
pub fn papr_threshold_analytic(n: usize, p: f64) -> f64 {
    -(-(1.0 - p).powf(1.0 / n as f64)).ln_1p()
}

/// Fraction of `samples` strictly above `threshold`.
pub fn exceedance(samples: &[f64], threshold: f64) -> f64 {
    samples.iter().filter(|&&v| v > threshold).count() as f64 / samples.len() as f64
}

/// Smallest threshold whose empirical exceedance is at most `p`.
pub fn exceedance_threshold(samples: &[f64], p: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let allowed = (p * n as f64).floor() as usize;
    sorted[n - 1 - allowed.min(n - 1)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaprCcdf {
    pub n: usize,
    pub gammas_db: Vec<f64>,
    pub empirical: Vec<f64>,
    pub analytic: Vec<f64>,
}

impl PaprCcdf {
    pub fn from_samples(samples_db: &[f64], n: usize, gammas_db: &[f64]) -> Self {
        Self {
            n,
            gammas_db: gammas_db.to_vec(),
            empirical: gammas_db
                .iter()
                .map(|&g| exceedance(samples_db, g))
                .collect(),
            analytic: gammas_db
                .iter()
                .map(|&g| papr_ccdf_analytic(n, from_db10(g)))
                .collect(),
        }
    }
}

/// Largest gap between the empirical CDF of `samples_db` and the analytic
/// PAPR distribution.
pub fn ks_distance_to_analytic(samples_db: &[f64], n: usize) -> f64 {
    let mut sorted = samples_db.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - papr_ccdf_analytic(n, from_db10(x));
            (f - i as f64 / m).abs().max((f - (i + 1) as f64 / m).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = sign * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    KsTest {
        statistic: d,
        p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutKind {
    /// `A(0, ν)`: Doppler axis.
    ZeroDelay,
    /// `A(τ, 0)`: delay axis.
    ZeroDoppler,
}

impl CutKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ZeroDelay => "zero-delay",
            Self::ZeroDoppler => "zero-doppler",
        }
    }
}

/// Periodic discrete ambiguity function
/// `A[l, k] = |Σ_n s[n] s*[(n−l) mod N] exp(−j2π ν_k n)|`, normalized by
/// `A[0, 0] = ‖s‖²`.
///
/// Lags cover `l ∈ [−⌊N/2⌋, N − ⌊N/2⌋)`. Doppler bins cover `ν_k = (k − ⌊QN/2⌋)/(QN)`
/// cycles per sample for `k ∈ [0, QN)`; the Doppler axis is reported in
/// cycles per frame (`N·ν`), so its step is `1/Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct AfGrid {
    n: usize,
    q: usize,
    /// Row-major over (lag index, Doppler index).
    values: Vec<f64>,
}

impl AfGrid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn oversampling(&self) -> usize {
        self.q
    }

    pub fn doppler_bins(&self) -> usize {
        self.q * self.n
    }

    pub fn lag_origin(&self) -> usize {
        self.n / 2
    }

    pub fn doppler_origin(&self) -> usize {
        self.doppler_bins() / 2
    }

    pub fn lag_axis(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| i as f64 - self.lag_origin() as f64)
            .collect()
    }

    pub fn doppler_axis(&self) -> Vec<f64> {
        let q = self.q as f64;
        (0..self.doppler_bins())
            .map(|k| (k as f64 - self.doppler_origin() as f64) / q)
            .collect()
    }

    /// Value at lag index `li` and Doppler index `ki` (grid indices, not offsets).
    pub fn at(&self, li: usize, ki: usize) -> f64 {
        self.values[li * self.doppler_bins() + ki]
    }

    /// Value at signed lag `l` and signed Doppler bin `k`, wrapping both axes.
    pub fn at_offset(&self, l: i64, k: i64) -> f64 {
        let li = (l + self.lag_origin() as i64).rem_euclid(self.n as i64) as usize;
        let ki = (k + self.doppler_origin() as i64).rem_euclid(self.doppler_bins() as i64) as usize;
        self.at(li, ki)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn cut(&self, kind: CutKind) -> Cut {
        match kind {
            CutKind::ZeroDelay => {
                let li = self.lag_origin();
                Cut {
                    kind,
                    axis: self.doppler_axis(),
                    values: (0..self.doppler_bins()).map(|k| self.at(li, k)).collect(),
                    origin: self.doppler_origin(),
                    step: 1.0 / self.q as f64,
                }
            }
            CutKind::ZeroDoppler => {
                let ki = self.doppler_origin();
                Cut {
                    kind,
                    axis: self.lag_axis(),
                    values: (0..self.n).map(|l| self.at(l, ki)).collect(),
                    origin: self.lag_origin(),
                    step: 1.0,
                }
            }
        }
    }
}

/// FFT-accelerated ambiguity function with Doppler oversampling `q`.
pub fn ambiguity(s: &[Complex64], q: usize) -> Result<AfGrid> {
    let n = s.len();
    if n == 0 {
        return Err(Error::UndefinedInput("empty frame".into()));
    }
    if q == 0 {
        return Err(Error::InvalidParameter(
            "oversampling factor must be at least 1".into(),
        ));
    }
    let energy: f64 = s.iter().map(|z| z.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(Error::UndefinedInput("all-zero frame".into()));
    }
    let bins = q * n;
    let fft = FftPlanner::new().plan_fft_forward(bins);
    let lag0 = (n / 2) as i64;
    let k0 = (bins / 2) as i64;
    let mut values = vec![0.0; n * bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); bins];
    for li in 0..n {
        let l = li as i64 - lag0;
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for t in 0..n {
            let src = (t as i64 - l).rem_euclid(n as i64) as usize;
            buf[t] = s[t] * s[src].conj();
        }
        fft.process(&mut buf);
        let row = &mut values[li * bins..(li + 1) * bins];
        for (k, v) in row.iter_mut().enumerate() {
            let bin = (k as i64 - k0).rem_euclid(bins as i64) as usize;
            *v = buf[bin].norm() / energy;
        }
    }
    Ok(AfGrid { n, q, values })
}

/// One-dimensional AF cut with its axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub kind: CutKind,
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
    /// Index of the origin sample.
    pub origin: usize,
    /// Axis spacing.
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidelobeMetrics {
    pub kind: CutKind,
    pub pslr_db: f64,
    pub islr_db: f64,
    /// −3 dB half-width in axis units.
    pub mainlobe_halfwidth: f64,
    /// Axis position of the highest sidelobe.
    pub peak_sidelobe_at: f64,
}

impl Cut {
    /// Distance (in samples) from the origin to the first −3 dB amplitude
    /// crossing in direction `dir`, linearly interpolated.
    fn crossing(&self, dir: i64) -> Option<f64> {
        let peak = self.values[self.origin];
        let level = peak * FRAC_1_SQRT_2;
        let mut prev = peak;
        let mut i = 1i64;
        loop {
            let idx = self.origin as i64 + dir * i;
            if idx < 0 || idx >= self.values.len() as i64 {
                return None;
            }
            let v = self.values[idx as usize];
            if v < level {
                return Some((i - 1) as f64 + (prev - level) / (prev - v));
            }
            prev = v;
            i += 1;
        }
    }

    pub fn metrics(&self) -> Result<SidelobeMetrics> {
        if self.values.is_empty() || self.origin >= self.values.len() {
            return Err(Error::DegenerateMainlobe("empty cut".into()));
        }
        let peak = self.values[self.origin];
        if peak <= 0.0 {
            return Err(Error::DegenerateMainlobe("zero peak".into()));
        }
        let right = self.crossing(1);
        let left = self.crossing(-1);
        let half = match (left, right) {
            (Some(a), Some(b)) => a.max(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => {
                return Err(Error::DegenerateMainlobe(
                    "cut never drops 3 dB below its peak".into(),
                ));
            }
        };
        let inside = |i: usize| (i as f64 - self.origin as f64).abs() <= half;
        let (mut e_in, mut e_out) = (0.0, 0.0);
        let mut any_outside = false;
        for (i, v) in self.values.iter().enumerate() {
            if inside(i) {
                e_in += v * v;
            } else {
                e_out += v * v;
                any_outside = true;
            }
        }
        if !any_outside {
            return Err(Error::DegenerateMainlobe(
                "mainlobe covers the whole cut".into(),
            ));
        }
        // Highest sidelobe, first occurrence scanning outward (right before left).
        let mut best = -1.0;
        let mut best_idx = self.origin;
        let len = self.values.len() as i64;
        for d in 1..len {
            for idx in [self.origin as i64 + d, self.origin as i64 - d] {
                if (0..len).contains(&idx)
                    && !inside(idx as usize)
                    && self.values[idx as usize] > best
                {
                    best = self.values[idx as usize];
                    best_idx = idx as usize;
                }
            }
        }
        let pslr_db = if best > 0.0 {
            20.0 * (peak / best).log10()
        } else {
            PSLR_CEIL_DB
        };
        let islr_db = if e_out > 0.0 {
            db10(e_out / e_in)
        } else {
            ISLR_FLOOR_DB
        };
        Ok(SidelobeMetrics {
            kind: self.kind,
            pslr_db,
            islr_db,
            mainlobe_halfwidth: half * self.step,
            peak_sidelobe_at: self.axis.get(best_idx).copied().unwrap_or(0.0),
        })
    }
}

pub fn cut_metrics(grid: &AfGrid, kind: CutKind) -> Result<SidelobeMetrics> {
    grid.cut(kind).metrics()
}

/// Delay-domain (zero-Doppler) and Doppler-domain (zero-delay) metrics of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfMetrics {
    pub delay: SidelobeMetrics,
    pub doppler: SidelobeMetrics,
}

pub fn af_metrics(s: &[Complex64], q: usize) -> Result<AfMetrics> {
    let grid = ambiguity(s, q)?;
    Ok(AfMetrics {
        delay: cut_metrics(&grid, CutKind::ZeroDoppler)?,
        doppler: cut_metrics(&grid, CutKind::ZeroDelay)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub delay_pslr: Stats,
    pub delay_islr: Stats,
    pub delay_halfwidth: Stats,
    pub doppler_pslr: Stats,
    pub doppler_islr: Stats,
    pub doppler_halfwidth: Stats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub records: Vec<AfMetrics>,
    pub summary: EnsembleSummary,
}

/// AF metrics of `symbols` modulated with `base` and each `perms[i]` as the
/// second-chirp permutation.
pub fn permutation_ensemble(
    base: &TransformConfig,
    perms: &[Permutation],
    symbols: &[Complex64],
    q: usize,
) -> Result<Ensemble> {
    if perms.is_empty() {
        return Err(Error::InvalidParameter(
            "ensemble needs at least one permutation".into(),
        ));
    }
    let records: Vec<AfMetrics> = perms
        .par_iter()
        .map(|p| {
            let cfg = base.with_perm2(p.clone())?;
            let s = CpDaft::new(cfg).inverse(symbols)?;
            af_metrics(&s, q)
        })
        .collect::<Result<_>>()?;
    let col = |f: &dyn Fn(&AfMetrics) -> f64| Stats::of(&records.iter().map(f).collect::<Vec<_>>());
    let summary = EnsembleSummary {
        delay_pslr: col(&|r| r.delay.pslr_db),
        delay_islr: col(&|r| r.delay.islr_db),
        delay_halfwidth: col(&|r| r.delay.mainlobe_halfwidth),
        doppler_pslr: col(&|r| r.doppler.pslr_db),
        doppler_islr: col(&|r| r.doppler.islr_db),
        doppler_halfwidth: col(&|r| r.doppler.mainlobe_halfwidth),
    };
    Ok(Ensemble { records, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

/// Equal-width histogram over the sample range; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return vec![HistBin {
            low: lo,
            high: hi,
            count: values.len(),
        }];
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistBin> = (0..bins)
        .map(|i| HistBin {
            low: lo + i as f64 * width,
            high: lo + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}
