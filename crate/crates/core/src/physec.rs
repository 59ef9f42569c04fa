//! Permutation-keyed transmission: matched versus mismatched demodulation and
//! keyspace accounting.
//!
//! The eavesdropper knows everything except the second-chirp permutation,
//! including perfect CSI for the channel it is demodulating with.

use num_bigint::BigUint;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelFamily;
use crate::detection::{aggregate, run_trial, BerRecord};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};
use crate::transforms::{factorial, Permutation};
use crate::waveform::{Constellation, Modem, WaveformId};

/// Default number of random wrong keys averaged per curve.
pub const DEFAULT_WRONG_KEYS: usize = 20;

/// Trials whose mismatched symbols go into the scatter dump.
const SCATTER_TRIALS: u64 = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermKey {
    n: usize,
    rank: BigUint,
    perm: Permutation,
}

impl PermKey {
    pub fn from_rank(n: usize, rank: BigUint) -> Result<Self> {
        let perm = Permutation::from_rank(n, &rank)?;
        Ok(Self { n, rank, perm })
    }

    pub fn from_perm(perm: Permutation) -> Self {
        Self {
            n: perm.len(),
            rank: perm.to_rank(),
            perm,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> &BigUint {
        &self.rank
    }

    pub fn perm(&self) -> &Permutation {
        &self.perm
    }
}

/// Uniform key over all `n!` permutations, deterministic per seed.
pub fn keygen(n: usize, seed: u64) -> Result<PermKey> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("keys need n >= 2, got {n}")));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "key", 0));
    Ok(PermKey::from_perm(Permutation::random(n, &mut rng)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyspaceReport {
    pub n: usize,
    /// `⌊log2(n!)⌋`.
    pub factorial_bits: u64,
    /// `n!` in decimal.
    pub keyspace: String,
    pub brute_force_note: String,
}

pub fn keyspace_report(n: usize) -> Result<KeyspaceReport> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("keys need n >= 2, got {n}")));
    }
    let f = factorial(n);
    let bits = f.bits() - 1;
    let mut note = format!(
        "{n}! = {f} keys; floor(log2({n}!)) = {bits}, so blind guessing succeeds with probability at most 2^-{bits} per attempt"
    );
    if n == 64 {
        note.push_str(
            "; the value 298 sometimes quoted for N = 64 overstates the exact figure of 295 bits",
        );
    }
    Ok(KeyspaceReport {
        n,
        factorial_bits: bits,
        keyspace: f.to_string(),
        brute_force_note: note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EveReport {
    pub snr_grid: Vec<f64>,
    pub matched_ber: Vec<f64>,
    pub mismatched_ber: Vec<f64>,
    /// RMS error to the nearest constellation point, percent.
    pub mismatched_evm: Vec<f64>,
    /// `1 − |mean exp(jθ)|` of the phase error against the sent symbols.
    pub mismatched_phase_variance: Vec<f64>,
    /// Bits counted per SNR point on the mismatched curve.
    pub mismatched_bits: u64,
    /// Mismatched equalizer output at the last SNR point (first wrong key).
    pub scatter: Vec<Complex64>,
}

/// Matched and mismatched BER of a keyed one-sided CP-AFDM link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EavesdropExperiment {
    pub c1: f64,
    pub c2: f64,
    pub constellation: usize,
    pub family: ChannelFamily,
    pub snr_grid: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
}

#[derive(Default, Clone)]
struct Tally {
    errors: u64,
    err_energy: f64,
    ref_energy: f64,
    phasor: Complex64,
    count: u64,
}

impl Tally {
    fn merge(mut self, other: &Tally) -> Tally {
        self.errors += other.errors;
        self.err_energy += other.err_energy;
        self.ref_energy += other.ref_energy;
        self.phasor += other.phasor;
        self.count += other.count;
        self
    }
}

impl EavesdropExperiment {
    pub fn waveform(&self, key: &PermKey) -> Result<WaveformId> {
        WaveformId::one_sided(self.family.n, self.c1, self.c2, key.perm().clone())
    }

    /// `count` random keys different from `key`, each redrawn until it differs.
    pub fn random_wrong_keys(&self, key: &PermKey, count: usize) -> Result<Vec<PermKey>> {
        (0..count)
            .map(|i| {
                let mut rng = rng_from_seed(derive_seed(self.master_seed, "wrong-key", i as u64));
                loop {
                    let p = Permutation::random(key.n(), &mut rng)?;
                    if &p != key.perm() {
                        return Ok(PermKey::from_perm(p));
                    }
                }
            })
            .collect()
    }

    /// Matched BER with the true key; same seeds as a plain BER run.
    pub fn matched(&self, key: &PermKey) -> Result<Vec<BerRecord>> {
        let m = Constellation::qam(self.constellation)?;
        let modem = Modem::new(self.waveform(key)?);
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
        Ok(aggregate(
            &self.snr_grid,
            &per_trial,
            (key.n() * m.bits_per_symbol()) as u64,
        ))
    }

    pub fn run(&self, key: &PermKey, wrong_keys: usize) -> Result<EveReport> {
        if wrong_keys == 0 {
            return Err(Error::InvalidParameter(
                "at least one wrong key is required".into(),
            ));
        }
        let wrong = self.random_wrong_keys(key, wrong_keys)?;
        self.run_with_keys(key, &wrong)
    }

    /// Eavesdropper curves averaged over the given wrong keys.
    pub fn run_with_keys(&self, key: &PermKey, wrong: &[PermKey]) -> Result<EveReport> {
        if wrong.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one wrong key is required".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if wrong.iter().any(|w| w.perm() == key.perm()) {
            return Err(Error::InvalidParameter(
                "a wrong key equals the true key".into(),
            ));
        }
        self.family.validate()?;
        let m = Constellation::qam(self.constellation)?;
        let tx = Modem::new(self.waveform(key)?);
        let matched = self.matched(key)?;
        let points = self.snr_grid.len();
        let last = points.saturating_sub(1);

        let jobs: Vec<(usize, u64)> = (0..wrong.len())
            .flat_map(|w| (0..self.trials).map(move |t| (w, t)))
            .collect();
        let rx: Vec<Modem> = wrong
            .iter()
            .map(|w| self.waveform(w).map(Modem::new))
            .collect::<Result<_>>()?;
        let per_job: Vec<(Vec<Tally>, Vec<Complex64>)> = jobs
            .par_iter()
            .map(|&(w, t)| {
                let out = run_trial(
                    &tx,
                    &rx[w],
                    &self.family,
                    &m,
                    &self.snr_grid,
                    self.master_seed,
                    t,
                    true,
                )?;
                let tallies = out
                    .equalized
                    .iter()
                    .zip(&out.bit_errors)
                    .map(|(xhat, &errors)| {
                        let mut tally = Tally {
                            errors,
                            ..Tally::default()
                        };
                        for (z, x) in xhat.iter().zip(&out.sent) {
                            let p = m.points()[m.nearest(*z)];
                            tally.err_energy += (z - p).norm_sqr();
                            tally.ref_energy += p.norm_sqr();
                            if z.norm() > 0.0 {
                                tally.phasor += (z * x.conj()) / (z.norm() * x.norm());
                                tally.count += 1;
                            }
                        }
                        tally
                    })
                    .collect();
                let scatter = if w == 0 && t < SCATTER_TRIALS && points > 0 {
                    out.equalized[last].clone()
                } else {
                    Vec::new()
                };
                Ok((tallies, scatter))
            })
            .collect::<Result<_>>()?;

        let bits = wrong.len() as u64 * self.trials * (key.n() * m.bits_per_symbol()) as u64;
        let mut mismatched_ber = Vec::with_capacity(points);
        let mut mismatched_evm = Vec::with_capacity(points);
        let mut mismatched_phase_variance = Vec::with_capacity(points);
        for i in 0..points {
            let total = per_job
                .iter()
                .fold(Tally::default(), |acc, (t, _)| acc.merge(&t[i]));
            mismatched_ber.push(total.errors as f64 / bits as f64);
            mismatched_evm.push(100.0 * (total.err_energy / total.ref_energy).sqrt());
            let circ = if total.count > 0 {
                1.0 - total.phasor.norm() / total.count as f64
            } else {
                1.0
            };
            mismatched_phase_variance.push(circ);
        }
        let scatter = per_job.into_iter().flat_map(|(_, s)| s).collect();
        Ok(EveReport {
            snr_grid: self.snr_grid.clone(),
            matched_ber: matched.iter().map(|r| r.ber).collect(),
            mismatched_ber,
            mismatched_evm,
            mismatched_phase_variance,
            mismatched_bits: bits,
            scatter,
        })
    }
}

/// Convenience wrapper over [`EavesdropExperiment::run`].
#[allow(clippy::too_many_arguments)]
pub fn eavesdrop_experiment(
    key: &PermKey,
    wrong_keys: usize,
    family: &ChannelFamily,
    c1: f64,
    c2: f64,
    constellation: usize,
    snr_grid: &[f64],
    trials: u64,
    master_seed: u64,
) -> Result<EveReport> {
    EavesdropExperiment {
        c1,
        c2,
        constellation,
        family: family.clone(),
        snr_grid: snr_grid.to_vec(),
        trials,
        master_seed,
    }
    .run(key, wrong_keys)
}
