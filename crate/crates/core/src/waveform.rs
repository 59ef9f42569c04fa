//! Constellations, typed frames and the modulator/demodulator stack.
//!
//! Frames carry their domain in the type, so the only legal pipeline is
//! `Symbol → Time → Received → Demodulated`:
//!
//! ```compile_fail
//! use cpafdm::waveform::{Frame, Modem, Symbol, WaveformId};
//! let modem = Modem::new(WaveformId::ofdm(4).unwrap());
//! let x: Frame<Symbol> = Frame::new(vec![Default::default(); 4]);
//! // A symbol frame cannot be demodulated.
//! let _ = modem.demodulate(&x);
//! ```
//!
//! ```compile_fail
//! use cpafdm::waveform::{Frame, Modem, Time, WaveformId};
//! let modem = Modem::new(WaveformId::ofdm(4).unwrap());
//! let s: Frame<Time> = Frame::new(vec![Default::default(); 4]);
//! // A time-domain frame must pass through the channel first.
//! let _ = modem.demodulate(&s);
//! ```
//!
//! ```compile_fail
//! use cpafdm::waveform::{Frame, Modem, Demodulated, WaveformId};
//! let modem = Modem::new(WaveformId::ofdm(4).unwrap());
//! let y: Frame<Demodulated> = Frame::new(vec![Default::default(); 4]);
//! let _ = modem.modulate(&y);
//! ```

use std::f64::consts::PI;
use std::marker::PhantomData;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSpec, PrefixPhaseRule};
use crate::error::{check_len, Error, Result};
use crate::seed::{complex_gaussian, rng_from_seed};
use crate::transforms::{CpDaft, Permutation, TransformConfig};

/// Square Gray-labelled QAM with unit average energy.
///
/// A label of `log2(M)` bits is split into an in-phase half (most
/// significant bits) and a quadrature half. On each axis, level `i` (ordered
/// from the most positive amplitude down) carries the Gray code `i ^ (i >> 1)`
/// and sits at amplitude `(L - 1 - 2i)·√(3 / (2(M - 1)))`, `L = √M`. Point
/// index equals the label read as an unsigned integer, so for 4-QAM the bits
/// `00` map to `(1 + j)/√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn qam(order: usize) -> Result<Self> {
        if !matches!(order, 4 | 16 | 64) {
            return Err(Error::InvalidParameter(format!(
                "unsupported QAM order {order}"
            )));
        }
        let bits_per_symbol = order.trailing_zeros() as usize;
        let half = bits_per_symbol / 2;
        let levels = 1usize << half;
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        let mut amp_of_label = vec![0.0; levels];
        for i in 0..levels {
            amp_of_label[i ^ (i >> 1)] = (levels as f64 - 1.0 - 2.0 * i as f64) * scale;
        }
        let points = (0..order)
            .map(|label| {
                Complex64::new(
                    amp_of_label[label >> half],
                    amp_of_label[label & (levels - 1)],
                )
            })
            .collect();
        Ok(Self {
            order,
            bits_per_symbol,
            points,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Nearest point index; ties go to the smallest index.
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn label_bits(&self, index: usize, out: &mut Vec<u8>) {
        for b in (0..self.bits_per_symbol).rev() {
            out.push(((index >> b) & 1) as u8);
        }
    }

    pub fn index_of_bits(&self, bits: &[u8]) -> usize {
        bits.iter()
            .fold(0, |acc, &b| (acc << 1) | usize::from(b & 1))
    }

    pub fn map(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        if bits.len() % self.bits_per_symbol != 0 {
            return Err(Error::DimensionMismatch {
                expected: bits.len().div_ceil(self.bits_per_symbol) * self.bits_per_symbol,
                got: bits.len(),
            });
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|c| self.points[self.index_of_bits(c)])
            .collect())
    }

    /// Hard nearest-point decision per symbol, emitted as label bits.
    pub fn demap(&self, symbols: &[Complex64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol);
        for &z in symbols {
            self.label_bits(self.nearest(z), &mut out);
        }
        out
    }

    /// Snaps every symbol to its nearest constellation point.
    pub fn slice(&self, symbols: &[Complex64]) -> Vec<Complex64> {
        symbols
            .iter()
            .map(|&z| self.points[self.nearest(z)])
            .collect()
    }
}

pub trait Domain {}

#[derive(Debug, Clone, Copy)]
pub enum Symbol {}
#[derive(Debug, Clone, Copy)]
pub enum Time {}
#[derive(Debug, Clone, Copy)]
pub enum Received {}
#[derive(Debug, Clone, Copy)]
pub enum Demodulated {}

impl Domain for Symbol {}
impl Domain for Time {}
impl Domain for Received {}
impl Domain for Demodulated {}

/// Length-N complex frame tagged with its domain.
#[derive(Debug, Clone)]
pub struct Frame<D: Domain> {
    data: Vec<Complex64>,
    _domain: PhantomData<D>,
}

impl<D: Domain> PartialEq for Frame<D> {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

impl<D: Domain> Frame<D> {
    pub fn new(data: Vec<Complex64>) -> Self {
        Self {
            data,
            _domain: PhantomData,
        }
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

pub fn map_bits(bits: &[u8], m: &Constellation) -> Result<Frame<Symbol>> {
    Ok(Frame::new(m.map(bits)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveformKind {
    Ofdm,
    Afdm,
    CpafdmOneSided,
    CpafdmTwoSided,
}

impl WaveformKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ofdm => "ofdm",
            Self::Afdm => "afdm",
            Self::CpafdmOneSided => "cpafdm",
            Self::CpafdmTwoSided => "cpafdm-two-sided",
        }
    }
}

/// Default second chirp rate, well below `1/(2N)`.
pub fn default_c2(n: usize) -> f64 {
    1.0 / (2.0 * n as f64 * PI)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformId {
    pub kind: WaveformKind,
    pub cfg: TransformConfig,
}

impl WaveformId {
    pub fn new(kind: WaveformKind, cfg: TransformConfig) -> Result<Self> {
        let w = Self { kind, cfg };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = &self.cfg;
        let ok = match self.kind {
            WaveformKind::Ofdm => {
                cfg.c1 == 0.0 && cfg.c2 == 0.0 && cfg.perm1.is_identity() && cfg.perm2.is_identity()
            }
            WaveformKind::Afdm => cfg.perm1.is_identity() && cfg.perm2.is_identity(),
            WaveformKind::CpafdmOneSided => cfg.perm1.is_identity(),
            WaveformKind::CpafdmTwoSided => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "transform config inconsistent with {}",
                self.kind.name()
            )))
        }
    }

    pub fn ofdm(n: usize) -> Result<Self> {
        Self::new(WaveformKind::Ofdm, TransformConfig::dft(n)?)
    }

    pub fn afdm(n: usize, c1: f64, c2: f64) -> Result<Self> {
        Self::new(WaveformKind::Afdm, TransformConfig::daft(n, c1, c2)?)
    }

    pub fn one_sided(n: usize, c1: f64, c2: f64, perm2: Permutation) -> Result<Self> {
        Self::new(
            WaveformKind::CpafdmOneSided,
            TransformConfig::one_sided(n, c1, c2, perm2)?,
        )
    }

    pub fn two_sided(
        n: usize,
        c1: f64,
        c2: f64,
        perm1: Permutation,
        perm2: Permutation,
    ) -> Result<Self> {
        Self::new(
            WaveformKind::CpafdmTwoSided,
            TransformConfig::new(n, c1, c2, perm1, perm2)?,
        )
    }

    pub fn n(&self) -> usize {
        self.cfg.n
    }

    /// Plain cyclic prefix for OFDM, chirp-periodic prefix otherwise.
    pub fn prefix_rule(&self) -> PrefixPhaseRule {
        match self.kind {
            WaveformKind::Ofdm => PrefixPhaseRule::Zero,
            _ => PrefixPhaseRule::AfdmChirpPeriodic { c1: self.cfg.c1 },
        }
    }
}

/// A waveform with its transform constructed once for repeated use.
#[derive(Debug, Clone)]
pub struct Modem {
    id: WaveformId,
    daft: CpDaft,
}

impl Modem {
    pub fn new(id: WaveformId) -> Self {
        let daft = CpDaft::new(id.cfg.clone());
        Self { id, daft }
    }

    pub fn id(&self) -> &WaveformId {
        &self.id
    }

    pub fn transform(&self) -> &CpDaft {
        &self.daft
    }

    pub fn n(&self) -> usize {
        self.id.n()
    }

    /// `s = A⁻¹ x`.
    pub fn modulate(&self, x: &Frame<Symbol>) -> Result<Frame<Time>> {
        Ok(Frame::new(self.daft.inverse(x.data())?))
    }

    /// `y = A r`.
    pub fn demodulate(&self, r: &Frame<Received>) -> Result<Frame<Demodulated>> {
        Ok(Frame::new(self.daft.forward(r.data())?))
    }
}

pub fn modulate(w: &WaveformId, x: &Frame<Symbol>) -> Result<Frame<Time>> {
    Modem::new(w.clone()).modulate(x)
}

pub fn demodulate(w: &WaveformId, r: &Frame<Received>) -> Result<Frame<Demodulated>> {
    Modem::new(w.clone()).demodulate(r)
}

/// Per-sample noise variance for unit-energy symbols at `snr_db` (Es/N0).
/// Infinite SNR disables the noise.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// `r = H·s + w` with the noise drawn from `rng`.
pub fn transmit_with_rng<R: Rng + ?Sized>(
    s: &Frame<Time>,
    spec: &ChannelSpec,
    prefix: &PrefixPhaseRule,
    snr_db: f64,
    rng: &mut R,
) -> Result<Frame<Received>> {
    spec.validate()?;
    check_len(spec.n, s.len())?;
    let mut r = spec.apply(prefix, s.data())?;
    let var = noise_variance(snr_db);
    if var > 0.0 {
        for z in &mut r {
            *z += complex_gaussian(rng, var);
        }
    }
    Ok(Frame::new(r))
}

/// `r = H·s + w`, deterministic in `seed`.
pub fn transmit(
    s: &Frame<Time>,
    spec: &ChannelSpec,
    prefix: &PrefixPhaseRule,
    snr_db: f64,
    seed: u64,
) -> Result<Frame<Received>> {
    transmit_with_rng(s, spec, prefix, snr_db, &mut rng_from_seed(seed))
}
