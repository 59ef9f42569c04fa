//! Chirp-permutation index modulation: extra bits carried by the choice of
//! second-chirp permutation from a codebook.
//!
//! Frame bit layout: `k_bits` index bits (MSB first) followed by the
//! `N·log2(M)` symbol bits.

use std::collections::HashSet;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{structure_matrix, ChannelFamily, ChannelSpec, PrefixPhaseRule};
use crate::detection::{residual, MmseEqualizer};
use crate::error::{check_len, Error, Result};
use crate::seed::{derive_seed, random_bits, rng_from_seed};
use crate::transforms::{factorial, CpDaft, Permutation, TransformConfig};
use crate::waveform::{
    noise_variance, transmit_with_rng, Constellation, Frame, Received, Symbol, Time,
};
use crate::DMatrix;

/// Largest codebook this implementation materializes (`2^20` entries).
pub const MAX_CODEBOOK_BITS: usize = 20;

/// `⌊log2(n!)⌋`, exact.
pub fn max_index_bits(n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::InvalidSize(format!(
            "index modulation needs n >= 2, got {n}"
        )));
    }
    Ok(factorial(n).bits() as usize - 1)
}

/// `(N·log2 M, N·log2 M + log2 K)` bits per frame without and with index bits.
pub fn spectral_efficiency(n: usize, m_order: usize, k: usize) -> Result<(usize, usize)> {
    if !m_order.is_power_of_two() || m_order < 2 {
        return Err(Error::InvalidParameter(format!(
            "constellation order {m_order} is not a power of two"
        )));
    }
    if !k.is_power_of_two() || k < 2 {
        return Err(Error::InvalidParameter(format!(
            "codebook size {k} must be a power of two >= 2"
        )));
    }
    let base = n * m_order.trailing_zeros() as usize;
    Ok((base, base + k.trailing_zeros() as usize))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermCodebook {
    n: usize,
    k_bits: usize,
    entries: Vec<Permutation>,
}

impl PermCodebook {
    /// Checks size, capacity and pairwise distinctness.
    pub fn new(n: usize, entries: Vec<Permutation>) -> Result<Self> {
        let k = entries.len();
        if k < 2 || !k.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "codebook size {k} must be a power of two >= 2"
            )));
        }
        let k_bits = k.trailing_zeros() as usize;
        let cap = max_index_bits(n)?;
        if k_bits > cap {
            return Err(Error::CapacityExceeded {
                requested: k_bits,
                max: cap,
            });
        }
        let mut seen = HashSet::with_capacity(k);
        for p in &entries {
            check_len(n, p.len())?;
            if !seen.insert(p.map()) {
                return Err(Error::InvalidParameter(
                    "codebook entries must be distinct".into(),
                ));
            }
        }
        Ok(Self { n, k_bits, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_bits(&self) -> usize {
        self.k_bits
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Permutation] {
        &self.entries
    }

    pub fn get(&self, k: usize) -> Option<&Permutation> {
        self.entries.get(k)
    }
}

/// `2^k_bits` distinct permutations; entry 0 is the identity, the rest are
/// uniform random draws.
pub fn build_codebook(n: usize, k_bits: usize, seed: u64) -> Result<PermCodebook> {
    let cap = max_index_bits(n)?;
    let limit = cap.min(MAX_CODEBOOK_BITS);
    if k_bits == 0 || k_bits > limit {
        return Err(Error::CapacityExceeded {
            requested: k_bits,
            max: limit,
        });
    }
    let k = 1usize << k_bits;
    let mut rng = rng_from_seed(derive_seed(seed, "codebook", 0));
    let identity = Permutation::identity(n)?;
    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(k);
    seen.insert(identity.map().to_vec());
    let mut entries = Vec::with_capacity(k);
    entries.push(identity);
    while entries.len() < k {
        let p = Permutation::random(n, &mut rng)?;
        if seen.insert(p.map().to_vec()) {
            entries.push(p);
        }
    }
    PermCodebook::new(n, entries)
}

#[derive(Debug, Clone)]
pub struct CpimFrame {
    pub index_bits: Vec<u8>,
    pub symbol_bits: Vec<u8>,
    pub chosen_index: usize,
    pub symbols: Frame<Symbol>,
}

impl CpimFrame {
    /// Index bits followed by symbol bits.
    pub fn bits(&self) -> Vec<u8> {
        let mut out = self.index_bits.clone();
        out.extend_from_slice(&self.symbol_bits);
        out
    }
}

/// Detector output: the decided frame and the score of every candidate.
#[derive(Debug, Clone)]
pub struct CpimDecision {
    pub frame: CpimFrame,
    pub scores: Vec<f64>,
}

fn index_to_bits(k: usize, k_bits: usize) -> Vec<u8> {
    (0..k_bits).rev().map(|b| ((k >> b) & 1) as u8).collect()
}

fn bits_to_index(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Codebook, chirp rates and constellation shared by both ends.
#[derive(Debug, Clone)]
pub struct CpimScheme {
    codebook: PermCodebook,
    constellation: Constellation,
    c1: f64,
    c2: f64,
    transforms: Vec<CpDaft>,
}

impl CpimScheme {
    pub fn new(
        codebook: PermCodebook,
        c1: f64,
        c2: f64,
        constellation: Constellation,
    ) -> Result<Self> {
        let n = codebook.n();
        let transforms = codebook
            .entries()
            .iter()
            .map(|p| {
                Ok(CpDaft::new(TransformConfig::one_sided(
                    n,
                    c1,
                    c2,
                    p.clone(),
                )?))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            codebook,
            constellation,
            c1,
            c2,
            transforms,
        })
    }

    pub fn codebook(&self) -> &PermCodebook {
        &self.codebook
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn n(&self) -> usize {
        self.codebook.n()
    }

    pub fn transform(&self, k: usize) -> Option<&CpDaft> {
        self.transforms.get(k)
    }

    pub fn prefix_rule(&self) -> PrefixPhaseRule {
        PrefixPhaseRule::AfdmChirpPeriodic { c1: self.c1 }
    }

    pub fn bits_per_frame(&self) -> usize {
        self.codebook.k_bits() + self.n() * self.constellation.bits_per_symbol()
    }

    pub fn encode(&self, bits: &[u8]) -> Result<(CpimFrame, Frame<Time>)> {
        check_len(self.bits_per_frame(), bits.len())?;
        let (index_bits, symbol_bits) = bits.split_at(self.codebook.k_bits());
        let k = bits_to_index(index_bits);
        let symbols = Frame::new(self.constellation.map(symbol_bits)?);
        let s = Frame::new(self.transforms[k].inverse(symbols.data())?);
        let frame = CpimFrame {
            index_bits: index_bits.to_vec(),
            symbol_bits: symbol_bits.to_vec(),
            chosen_index: k,
            symbols,
        };
        Ok((frame, s))
    }

    /// `G_k` for every entry, from one structure matrix `Ξ` via
    /// `G_k[p, q] = Ξ[p, q]·λ_k[p]·conj(λ_k[q])`.
    pub fn effective_channels(&self, spec: &ChannelSpec) -> Result<Vec<DMatrix<Complex64>>> {
        let base = TransformConfig::daft(self.n(), self.c1, self.c2)?;
        let xi = structure_matrix(spec, &base)?;
        self.transforms
            .iter()
            .map(|t| {
                let lam = t.second_chirp();
                Ok(DMatrix::from_fn(xi.nrows(), xi.ncols(), |p, q| {
                    xi[(p, q)] * lam[p] * lam[q].conj()
                }))
            })
            .collect()
    }

    /// MMSE-aided reduced ML: per candidate, demodulate, equalize, slice and
    /// score the residual `‖y_k − G_k x̂_k‖²`; the smallest `(score, k)` wins.
    pub fn detect(
        &self,
        r: &Frame<Received>,
        channels: &[DMatrix<Complex64>],
        noise_var: f64,
    ) -> Result<CpimDecision> {
        check_len(self.codebook.len(), channels.len())?;
        check_len(self.n(), r.len())?;
        let per: Vec<(f64, Vec<Complex64>)> = self
            .transforms
            .par_iter()
            .zip(channels.par_iter())
            .map(|(t, g)| {
                let y = t.forward(r.data())?;
                let xhat = MmseEqualizer::new(g.clone()).equalize(&y, noise_var)?;
                let sliced = self.constellation.slice(&xhat);
                Ok((residual(g, &y, &sliced), sliced))
            })
            .collect::<Result<_>>()?;
        let best = per
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)))
            .map(|(k, _)| k)
            .expect("codebook is never empty");
        let scores = per.iter().map(|(s, _)| *s).collect();
        let symbols = per
            .into_iter()
            .nth(best)
            .map(|(_, x)| x)
            .unwrap_or_default();
        let frame = CpimFrame {
            index_bits: index_to_bits(best, self.codebook.k_bits()),
            symbol_bits: self.constellation.demap(&symbols),
            chosen_index: best,
            symbols: Frame::new(symbols),
        };
        Ok(CpimDecision { frame, scores })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpimRecord {
    pub snr_db: f64,
    pub index_error_rate: f64,
    pub symbol_ber: f64,
    pub total_ber: f64,
}

/// Index error rate and BER of index modulation over random channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpimExperiment {
    pub n: usize,
    pub c1: f64,
    pub c2: f64,
    pub constellation: usize,
    pub k_bits: usize,
    pub codebook_seed: u64,
    pub family: ChannelFamily,
    pub snr_grid: Vec<f64>,
    pub trials: u64,
    pub master_seed: u64,
}

impl CpimExperiment {
    pub fn scheme(&self) -> Result<CpimScheme> {
        let cb = build_codebook(self.n, self.k_bits, self.codebook_seed)?;
        CpimScheme::new(
            cb,
            self.c1,
            self.c2,
            Constellation::qam(self.constellation)?,
        )
    }

    pub fn run(&self) -> Result<Vec<CpimRecord>> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        self.family.validate()?;
        check_len(self.n, self.family.n)?;
        let scheme = self.scheme()?;
        let k_bits = scheme.codebook().k_bits();
        let sym_bits = scheme.bits_per_frame() - k_bits;
        // (index errors, symbol bit errors, index bit errors) per SNR.
        let per_trial: Vec<Vec<[u64; 3]>> = (0..self.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(self.master_seed, "cpim", t);
                let mut rng = rng_from_seed(seed);
                let spec = self.family.draw(&mut rng);
                let bits = random_bits(&mut rng, scheme.bits_per_frame());
                let (sent, s) = scheme.encode(&bits)?;
                let channels = scheme.effective_channels(&spec)?;
                let prefix = scheme.prefix_rule();
                self.snr_grid
                    .iter()
                    .enumerate()
                    .map(|(i, &snr)| {
                        let mut noise_rng = rng_from_seed(derive_seed(seed, "noise", i as u64));
                        let r = transmit_with_rng(&s, &spec, &prefix, snr, &mut noise_rng)?;
                        let got = scheme.detect(&r, &channels, noise_variance(snr))?.frame;
                        let diff = |a: &[u8], b: &[u8]| {
                            a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
                        };
                        Ok([
                            (got.chosen_index != sent.chosen_index) as u64,
                            diff(&got.symbol_bits, &sent.symbol_bits),
                            diff(&got.index_bits, &sent.index_bits),
                        ])
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let trials = self.trials as f64;
        Ok(self
            .snr_grid
            .iter()
            .enumerate()
            .map(|(i, &snr_db)| {
                let sum = |j: usize| per_trial.iter().map(|t| t[i][j]).sum::<u64>() as f64;
                let (idx, sym, ib) = (sum(0), sum(1), sum(2));
                CpimRecord {
                    snr_db,
                    index_error_rate: idx / trials,
                    symbol_ber: sym / (trials * sym_bits as f64),
                    total_ber: (sym + ib) / (trials * (sym_bits + k_bits) as f64),
                }
            })
            .collect())
    }
}
