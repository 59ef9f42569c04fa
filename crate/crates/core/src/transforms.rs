//! Permutations, chirp sequences and the chirp-permuted DAFT.
//!
//! The forward transform is `A = diag(P2·λ(c2)) · F · diag(P1·λ(c1))` where
//! `λ(c)[n] = exp(-j2π c n²)`, `F` is the unitary DFT and `P1`, `P2` permute
//! the chirp sequences. Identity permutations give the conventional DAFT,
//! and `c1 = c2 = 0` gives the unitary DFT.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// `exp(-j2π·phase)` with the phase reduced modulo one first.
pub(crate) fn cis_neg(phase: f64) -> Complex64 {
    let t = phase.rem_euclid(1.0);
    Complex64::from_polar(1.0, -2.0 * PI * t)
}

/// Exact `n!` as a big integer.
pub fn factorial(n: usize) -> BigUint {
    (2..=n).fold(BigUint::from(1u32), |acc, k| acc * BigUint::from(k))
}

/// A bijection on `{0, …, n-1}` applied by gathering: `out[i] = v[map[i]]`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    map: Vec<usize>,
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{:?}", self.map)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(map: Vec<usize>) -> Result<Self> {
        Self::from_map(map)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.map
    }
}

impl Permutation {
    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(
                "permutation size must be at least 1".into(),
            ));
        }
        Ok(Self {
            map: (0..n).collect(),
        })
    }

    /// Validates that `map` is a bijection.
    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        if n == 0 {
            return Err(Error::InvalidSize(
                "permutation size must be at least 1".into(),
            ));
        }
        let mut seen = vec![false; n];
        for &m in &map {
            if m >= n {
                return Err(Error::IndexOutOfRange { index: m, size: n });
            }
            if seen[m] {
                return Err(Error::InvalidParameter(format!("index {m} appears twice")));
            }
            seen[m] = true;
        }
        Ok(Self { map })
    }

    /// Lehmer-code unranking; rank 0 is the identity and ranks follow
    /// lexicographic order of the maps.
    pub fn from_rank(n: usize, rank: &BigUint) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(
                "permutation size must be at least 1".into(),
            ));
        }
        if rank >= &factorial(n) {
            return Err(Error::RankOutOfRange {
                n,
                rank: rank.to_string(),
            });
        }
        let mut code = vec![0usize; n];
        let mut r = rank.clone();
        for radix in 1..=n {
            let digit = &r % BigUint::from(radix);
            code[n - radix] = digit.to_usize().expect("digit below radix");
            r /= BigUint::from(radix);
        }
        Self::from_lehmer(&code)
    }

    /// Builds the permutation whose Lehmer code is `code`
    /// (`code[i] < n - i`).
    pub fn from_lehmer(code: &[usize]) -> Result<Self> {
        let n = code.len();
        if n == 0 {
            return Err(Error::InvalidSize(
                "permutation size must be at least 1".into(),
            ));
        }
        let mut pool: Vec<usize> = (0..n).collect();
        let mut map = Vec::with_capacity(n);
        for (i, &d) in code.iter().enumerate() {
            if d >= n - i {
                return Err(Error::IndexOutOfRange {
                    index: d,
                    size: n - i,
                });
            }
            map.push(pool.remove(d));
        }
        Ok(Self { map })
    }

    pub fn lehmer_code(&self) -> Vec<usize> {
        let n = self.map.len();
        (0..n)
            .map(|i| {
                self.map[i + 1..]
                    .iter()
                    .filter(|&&m| m < self.map[i])
                    .count()
            })
            .collect()
    }

    pub fn to_rank(&self) -> BigUint {
        let n = self.map.len();
        self.lehmer_code()
            .iter()
            .enumerate()
            .fold(BigUint::zero(), |acc, (i, &d)| {
                acc * BigUint::from(n - i) + BigUint::from(d)
            })
    }

    /// Uniform draw over all `n!` permutations. Lehmer digits are drawn
    /// independently, each uniform over its own radix, so the implied rank is
    /// uniform on `[0, n!)` without any rejection step.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(
                "permutation size must be at least 1".into(),
            ));
        }
        let code: Vec<usize> = (0..n).map(|i| rng.random_range(0..n - i)).collect();
        Self::from_lehmer(&code)
    }

    /// The identity with entries `i` and `j` swapped.
    pub fn transposition(n: usize, i: usize, j: usize) -> Result<Self> {
        let mut p = Self::identity(n)?;
        if i >= n || j >= n {
            return Err(Error::IndexOutOfRange {
                index: i.max(j),
                size: n,
            });
        }
        p.map.swap(i, j);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &m)| i == m)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        Self { map: inv }
    }

    /// `self.then(other)` applies `self` first: `apply(then) = apply(other, apply(self, v))`.
    pub fn then(&self, other: &Self) -> Result<Self> {
        check_len(self.len(), other.len())?;
        Ok(Self {
            map: other.map.iter().map(|&i| self.map[i]).collect(),
        })
    }

    /// `out[i] = v[map[i]]`.
    pub fn apply<T: Copy>(&self, v: &[T]) -> Result<Vec<T>> {
        check_len(self.len(), v.len())?;
        Ok(self.map.iter().map(|&i| v[i]).collect())
    }
}

/// `λ[n] = exp(-j2π·c·n²)` for `n = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChirpSequence {
    rate: f64,
    values: Vec<Complex64>,
}

impl ChirpSequence {
    pub fn new(n: usize, rate: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize("chirp length must be at least 1".into()));
        }
        let values = (0..n)
            .map(|k| {
                let k = k as f64;
                cis_neg(rate * k * k)
            })
            .collect();
        Ok(Self { rate, values })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Permuted chirp `Π·λ`, i.e. entry `n` is `exp(-j2π c Π(n)²)`.
    pub fn permuted(&self, perm: &Permutation) -> Result<Vec<Complex64>> {
        perm.apply(&self.values)
    }
}

pub fn chirp_sequence(n: usize, rate: f64) -> Result<ChirpSequence> {
    ChirpSequence::new(n, rate)
}

/// Parameters that fully determine a CP-DAFT matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    pub n: usize,
    pub c1: f64,
    pub c2: f64,
    pub perm1: Permutation,
    pub perm2: Permutation,
}

impl TransformConfig {
    pub fn new(n: usize, c1: f64, c2: f64, perm1: Permutation, perm2: Permutation) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(
                "transform size must be at least 1".into(),
            ));
        }
        check_len(n, perm1.len())?;
        check_len(n, perm2.len())?;
        if !c1.is_finite() || !c2.is_finite() {
            return Err(Error::InvalidParameter("chirp rates must be finite".into()));
        }
        Ok(Self {
            n,
            c1,
            c2,
            perm1,
            perm2,
        })
    }

    /// Conventional DAFT (identity permutations).
    pub fn daft(n: usize, c1: f64, c2: f64) -> Result<Self> {
        Self::new(
            n,
            c1,
            c2,
            Permutation::identity(n)?,
            Permutation::identity(n)?,
        )
    }

    /// Unitary DFT.
    pub fn dft(n: usize) -> Result<Self> {
        Self::daft(n, 0.0, 0.0)
    }

    /// One-sided CP-DAFT: only the second chirp is permuted.
    pub fn one_sided(n: usize, c1: f64, c2: f64, perm2: Permutation) -> Result<Self> {
        Self::new(n, c1, c2, Permutation::identity(n)?, perm2)
    }

    pub fn is_one_sided(&self) -> bool {
        self.perm1.is_identity()
    }

    pub fn with_perm2(&self, perm2: Permutation) -> Result<Self> {
        Self::new(self.n, self.c1, self.c2, self.perm1.clone(), perm2)
    }
}

/// Modulation kernel `κ_n(m)`: the `(n, m)` entry of the inverse CP-DAFT.
pub fn kernel_sample(cfg: &TransformConfig, n: usize, m: usize) -> Result<Complex64> {
    let size = cfg.n;
    if n >= size {
        return Err(Error::IndexOutOfRange { index: n, size });
    }
    if m >= size {
        return Err(Error::IndexOutOfRange { index: m, size });
    }
    let p1 = cfg.perm1.get(n) as f64;
    let p2 = cfg.perm2.get(m) as f64;
    let dft = ((n * m) % size) as f64 / size as f64;
    let phase = (cfg.c1 * p1 * p1).rem_euclid(1.0) + (cfg.c2 * p2 * p2).rem_euclid(1.0) + dft;
    Ok(cis_neg(-phase) / (size as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformMode {
    /// Diagonal multiply, FFT, diagonal multiply.
    Fast,
    /// Dense matrix-vector products against a cached matrix.
    Matrix,
}

/// A constructed CP-DAFT, immutable and shareable across threads.
#[derive(Clone)]
pub struct CpDaft {
    config: TransformConfig,
    mode: TransformMode,
    chirp1: Vec<Complex64>,
    chirp2: Vec<Complex64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    dense: Option<Arc<DMatrix<Complex64>>>,
}

impl fmt::Debug for CpDaft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CpDaft")
            .field("config", &self.config)
            .field("mode", &self.mode)
            .finish()
    }
}

impl CpDaft {
    pub fn new(config: TransformConfig) -> Self {
        Self::with_mode(config, TransformMode::Fast)
    }

    pub fn with_mode(config: TransformConfig, mode: TransformMode) -> Self {
        let n = config.n;
        let chirp1 = ChirpSequence::new(n, config.c1)
            .and_then(|c| c.permuted(&config.perm1))
            .expect("config validated");
        let chirp2 = ChirpSequence::new(n, config.c2)
            .and_then(|c| c.permuted(&config.perm2))
            .expect("config validated");
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let dense = match mode {
            TransformMode::Fast => None,
            TransformMode::Matrix => Some(Arc::new(dense_forward(&config))),
        };
        Self {
            config,
            mode,
            chirp1,
            chirp2,
            fft,
            ifft,
            dense,
        }
    }

    pub fn config(&self) -> &TransformConfig {
        &self.config
    }

    pub fn mode(&self) -> TransformMode {
        self.mode
    }

    pub fn size(&self) -> usize {
        self.config.n
    }

    /// Permuted first chirp `Π1·λ(c1)`.
    pub fn first_chirp(&self) -> &[Complex64] {
        &self.chirp1
    }

    /// Permuted second chirp `Π2·λ(c2)`.
    pub fn second_chirp(&self) -> &[Complex64] {
        &self.chirp2
    }

    pub fn forward(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.size(), v.len())?;
        if let Some(a) = &self.dense {
            return Ok(mat_vec(a, v, false));
        }
        let mut buf: Vec<Complex64> = v.iter().zip(&self.chirp1).map(|(x, c)| x * c).collect();
        self.fft.process(&mut buf);
        let scale = 1.0 / (self.size() as f64).sqrt();
        for (x, c) in buf.iter_mut().zip(&self.chirp2) {
            *x *= c * scale;
        }
        Ok(buf)
    }

    pub fn inverse(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        check_len(self.size(), v.len())?;
        if let Some(a) = &self.dense {
            return Ok(mat_vec(a, v, true));
        }
        let mut buf: Vec<Complex64> = v
            .iter()
            .zip(&self.chirp2)
            .map(|(x, c)| x * c.conj())
            .collect();
        self.ifft.process(&mut buf);
        let scale = 1.0 / (self.size() as f64).sqrt();
        for (x, c) in buf.iter_mut().zip(&self.chirp1) {
            *x *= c.conj() * scale;
        }
        Ok(buf)
    }

    /// Dense forward matrix.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        match &self.dense {
            Some(a) => a.as_ref().clone(),
            None => dense_forward(&self.config),
        }
    }
}

fn mat_vec(a: &DMatrix<Complex64>, v: &[Complex64], adjoint: bool) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|k| {
                    if adjoint {
                        a[(k, i)].conj() * v[k]
                    } else {
                        a[(i, k)] * v[k]
                    }
                })
                .sum()
        })
        .collect()
}

/// `A[k, n] = λ2[Π2(k)] · exp(-j2π kn/N)/√N · λ1[Π1(n)]`, evaluated entry by entry.
fn dense_forward(cfg: &TransformConfig) -> DMatrix<Complex64> {
    let n = cfg.n;
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |k, m| {
        let p2 = cfg.perm2.get(k) as f64;
        let p1 = cfg.perm1.get(m) as f64;
        let dft = ((k * m) % n) as f64 / n as f64;
        let phase = (cfg.c2 * p2 * p2).rem_euclid(1.0) + dft + (cfg.c1 * p1 * p1).rem_euclid(1.0);
        cis_neg(phase) * scale
    })
}

pub fn cpdaft_forward(cfg: &TransformConfig, v: &[Complex64]) -> Result<Vec<Complex64>> {
    CpDaft::new(cfg.clone()).forward(v)
}

pub fn cpdaft_inverse(cfg: &TransformConfig, v: &[Complex64]) -> Result<Vec<Complex64>> {
    CpDaft::new(cfg.clone()).inverse(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{complex_gaussian, rng_from_seed};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect()
    }

    #[test]
    fn identity_permutation() {
        assert_eq!(Permutation::identity(4).unwrap().map(), &[0, 1, 2, 3]);
        assert_eq!(Permutation::identity(1).unwrap().map(), &[0]);
        assert!(matches!(
            Permutation::identity(0),
            Err(Error::InvalidSize(_))
        ));
        let v = [c(1.0, 2.0), c(3.0, 4.0), c(5.0, 6.0)];
        assert_eq!(Permutation::identity(3).unwrap().apply(&v).unwrap(), v);
    }

    #[test]
    fn from_map_rejects_non_bijections() {
        assert!(Permutation::from_map(vec![0, 0, 1]).is_err());
        assert!(Permutation::from_map(vec![0, 3, 1]).is_err());
        assert!(Permutation::from_map(vec![]).is_err());
    }

    #[test]
    fn unranking_small_cases() {
        let r = |k: u32| Permutation::from_rank(3, &BigUint::from(k)).unwrap();
        assert_eq!(r(0).map(), &[0, 1, 2]);
        assert_eq!(r(5).map(), &[2, 1, 0]);
        // Lexicographic enumeration of S_3.
        let expected = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for (k, e) in expected.iter().enumerate() {
            assert_eq!(r(k as u32).map(), e);
        }
        assert!(matches!(
            Permutation::from_rank(3, &BigUint::from(6u32)),
            Err(Error::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn rank_round_trip_beyond_u64() {
        let mut rng = rng_from_seed(11);
        let p = Permutation::random(40, &mut rng).unwrap();
        let rank = p.to_rank();
        assert!(rank > BigUint::from(u64::MAX));
        assert_eq!(Permutation::from_rank(40, &rank).unwrap(), p);
    }

    #[test]
    fn apply_gathers() {
        let p = Permutation::from_map(vec![2, 0, 1]).unwrap();
        let v = ['a', 'b', 'c'];
        assert_eq!(p.apply(&v).unwrap(), vec!['c', 'a', 'b']);
        let back = p.inverse().apply(&p.apply(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert!(p.apply(&['a']).is_err());
    }

    #[test]
    fn composition_matches_sequential_application() {
        let mut rng = rng_from_seed(5);
        let a = Permutation::random(9, &mut rng).unwrap();
        let b = Permutation::random(9, &mut rng).unwrap();
        let v: Vec<usize> = (100..109).collect();
        let seq = b.apply(&a.apply(&v).unwrap()).unwrap();
        assert_eq!(a.then(&b).unwrap().apply(&v).unwrap(), seq);
        assert!(a.then(&a.inverse()).unwrap().is_identity());
    }

    #[test]
    fn chirp_values() {
        let ones = ChirpSequence::new(5, 0.0).unwrap();
        assert!(ones
            .values()
            .iter()
            .all(|v| (v - c(1.0, 0.0)).norm() < 1e-15));
        let ch = ChirpSequence::new(2, 0.25).unwrap();
        assert!(max_diff(ch.values(), &[c(1.0, 0.0), c(0.0, -1.0)]) < 1e-15);
        let big = ChirpSequence::new(1024, 0.123456).unwrap();
        assert!(big.values().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn dft_reduction() {
        let n = 8;
        let cfg = TransformConfig::dft(n).unwrap();
        let v = random_vec(n, 1);
        let out = cpdaft_forward(&cfg, &v).unwrap();
        for (k, ok) in out.iter().enumerate() {
            let mut acc = Complex64::zero();
            for (m, x) in v.iter().enumerate() {
                acc += x * cis_neg((k * m) as f64 / n as f64);
            }
            assert!((acc / (n as f64).sqrt() - ok).norm() < 1e-12);
        }
    }

    #[test]
    fn mismatched_inverse_does_not_invert() {
        let n = 16;
        let mut rng = rng_from_seed(21);
        let c1 = 3.0 / 32.0;
        let c2 = 1.0 / (32.0 * PI);
        let key = Permutation::random(n, &mut rng).unwrap();
        let cfg = TransformConfig::one_sided(n, c1, c2, key).unwrap();
        let wrong = TransformConfig::daft(n, c1, c2).unwrap();
        let v = random_vec(n, 2);
        let y = cpdaft_forward(&cfg, &v).unwrap();
        let back = cpdaft_inverse(&wrong, &y).unwrap();
        let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let dist: f64 = back
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(dist > 0.1 * norm, "{dist} vs {norm}");
    }

    #[test]
    fn zero_vector_maps_to_zero() {
        let cfg = TransformConfig::daft(8, 0.1, 0.2).unwrap();
        let z = vec![Complex64::zero(); 8];
        assert!(cpdaft_inverse(&cfg, &z)
            .unwrap()
            .iter()
            .all(|x| x.norm() == 0.0));
    }

    #[test]
    fn kernel_matches_inverse() {
        let n = 8;
        let mut rng = rng_from_seed(8);
        let cfg = TransformConfig::new(
            n,
            0.137,
            0.0191,
            Permutation::random(n, &mut rng).unwrap(),
            Permutation::random(n, &mut rng).unwrap(),
        )
        .unwrap();
        let x = random_vec(n, 9);
        let s = cpdaft_inverse(&cfg, &x).unwrap();
        for (i, si) in s.iter().enumerate() {
            let k: Complex64 = x
                .iter()
                .enumerate()
                .map(|(m, xm)| xm * kernel_sample(&cfg, i, m).unwrap())
                .sum();
            assert!((k - si).norm() < 1e-10);
            for m in 0..n {
                let ks = kernel_sample(&cfg, i, m).unwrap();
                assert!((ks.norm() - 1.0 / (n as f64).sqrt()).abs() < 1e-14);
            }
        }
        let plain = TransformConfig::dft(n).unwrap();
        assert!(
            (kernel_sample(&plain, 0, 0).unwrap() - c(1.0 / (n as f64).sqrt(), 0.0)).norm() < 1e-15
        );
        assert!(kernel_sample(&cfg, n, 0).is_err());
        assert!(kernel_sample(&cfg, 0, n).is_err());
    }

    #[test]
    fn dimension_errors() {
        let cfg = TransformConfig::dft(4).unwrap();
        assert!(matches!(
            cpdaft_forward(&cfg, &[Complex64::zero(); 3]),
            Err(Error::DimensionMismatch {
                expected: 4,
                got: 3
            })
        ));
        assert!(TransformConfig::new(
            4,
            0.0,
            0.0,
            Permutation::identity(3).unwrap(),
            Permutation::identity(4).unwrap()
        )
        .is_err());
    }

    #[test]
    fn matrix_mode_matches_fast_mode() {
        let n = 32;
        let mut rng = rng_from_seed(31);
        let cfg = TransformConfig::new(
            n,
            0.3,
            0.7,
            Permutation::random(n, &mut rng).unwrap(),
            Permutation::random(n, &mut rng).unwrap(),
        )
        .unwrap();
        let fast = CpDaft::new(cfg.clone());
        let dense = CpDaft::with_mode(cfg, TransformMode::Matrix);
        let v = random_vec(n, 4);
        assert!(max_diff(&fast.forward(&v).unwrap(), &dense.forward(&v).unwrap()) < 1e-12);
        assert!(max_diff(&fast.inverse(&v).unwrap(), &dense.inverse(&v).unwrap()) < 1e-12);
    }
}
