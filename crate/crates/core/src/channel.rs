//! Doubly-dispersive channels and effective channels.
//!
//! After prefix removal a channel of `P` paths acts on one frame as
//!
//! ```text
//! H = Σ_p h_p · Φ_p · W^{f_p} · L^{ℓ_p}
//! ```
//!
//! with `L` the forward cyclic shift, `W = diag(exp(-j2π n/N))` raised
//! elementwise to the real Doppler `f_p`, and `Φ_p` the phase the prefix
//! imprints on the first `ℓ_p` received samples.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::seed::complex_gaussian;
use crate::transforms::{cis_neg, CpDaft, TransformConfig};

/// Relative magnitude below which an effective-channel entry is treated as zero.
pub const SUPPORT_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub gain: Complex64,
    /// Integer delay in samples.
    pub delay: usize,
    /// Normalized digital Doppler in cycles per frame.
    pub doppler: f64,
}

impl PathSpec {
    pub fn new(gain: Complex64, delay: usize, doppler: f64) -> Self {
        Self {
            gain,
            delay,
            doppler,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub n: usize,
    pub paths: Vec<PathSpec>,
    pub lmax: usize,
    pub fmax: usize,
    #[serde(default)]
    pub guard: usize,
}

impl ChannelSpec {
    pub fn new(
        n: usize,
        paths: Vec<PathSpec>,
        lmax: usize,
        fmax: usize,
        guard: usize,
    ) -> Result<Self> {
        let spec = Self {
            n,
            paths,
            lmax,
            fmax,
            guard,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSize("frame length must be at least 1".into()));
        }
        if self.lmax >= self.n {
            return Err(Error::InvalidParameter(format!(
                "lmax = {} must be below the frame length {}",
                self.lmax, self.n
            )));
        }
        for (i, p) in self.paths.iter().enumerate() {
            if p.delay >= self.n {
                return Err(Error::InvalidPath(format!(
                    "path {i}: delay {} >= N = {}",
                    p.delay, self.n
                )));
            }
            if p.delay > self.lmax {
                return Err(Error::InvalidPath(format!(
                    "path {i}: delay {} > lmax = {}",
                    p.delay, self.lmax
                )));
            }
            if !p.doppler.is_finite() || p.doppler.abs() > self.fmax as f64 {
                return Err(Error::InvalidPath(format!(
                    "path {i}: |doppler| = {} > fmax = {}",
                    p.doppler.abs(),
                    self.fmax
                )));
            }
            if !p.gain.re.is_finite() || !p.gain.im.is_finite() {
                return Err(Error::InvalidPath(format!("path {i}: non-finite gain")));
            }
        }
        Ok(())
    }

    /// Left side of the orthogonality condition, `2(fmax+ξ)(lmax+1) + lmax`.
    pub fn orthogonality_lhs(&self) -> usize {
        2 * (self.fmax + self.guard) * (self.lmax + 1) + self.lmax
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonality_lhs() <= self.n
    }

    /// Prefix length used when simulating the prefix explicitly.
    pub fn prefix_len(&self) -> usize {
        self.lmax
    }

    pub fn has_integer_doppler(&self) -> bool {
        self.paths.iter().all(|p| p.doppler.fract() == 0.0)
    }

    /// `H·s` without building `H`.
    pub fn apply(&self, prefix: &PrefixPhaseRule, s: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.n;
        check_len(n, s.len())?;
        let mut r = vec![Complex64::new(0.0, 0.0); n];
        for p in &self.paths {
            for (row, out) in r.iter_mut().enumerate() {
                let src = (row + n - p.delay) % n;
                let coef =
                    p.gain * prefix.factor(n, row, p.delay) * doppler_factor(n, row, p.doppler);
                *out += coef * s[src];
            }
        }
        Ok(r)
    }

    /// Dense `H`.
    pub fn matrix(&self, prefix: &PrefixPhaseRule) -> DMatrix<Complex64> {
        let n = self.n;
        let mut h = DMatrix::zeros(n, n);
        for p in &self.paths {
            for row in 0..n {
                let col = (row + n - p.delay) % n;
                h[(row, col)] +=
                    p.gain * prefix.factor(n, row, p.delay) * doppler_factor(n, row, p.doppler);
            }
        }
        h
    }
}

fn doppler_factor(n: usize, row: usize, doppler: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * doppler * row as f64 / n as f64)
}

pub fn channel_matrix(spec: &ChannelSpec, prefix: &PrefixPhaseRule) -> Result<DMatrix<Complex64>> {
    spec.validate()?;
    Ok(spec.matrix(prefix))
}

/// Phase continuation applied to the prefix samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PrefixPhaseRule {
    /// Plain cyclic prefix.
    Zero,
    /// Chirp-periodic prefix, `φ(m) = c1 (N² + 2Nm)`.
    AfdmChirpPeriodic { c1: f64 },
}

impl PrefixPhaseRule {
    /// `φ(m)` for the prefix sample at (negative) position `m`.
    pub fn phase(&self, n: usize, m: i64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::AfdmChirpPeriodic { c1 } => {
                let n = n as f64;
                let m = m as f64;
                (c1 * n * n).rem_euclid(1.0) + (2.0 * c1 * n * m).rem_euclid(1.0)
            }
        }
    }

    /// Diagonal entry `Φ[row, row]` for a path of delay `delay`. Rows below
    /// the delay read prefix sample `row - delay` and pick up its phase.
    pub fn factor(&self, n: usize, row: usize, delay: usize) -> Complex64 {
        if row >= delay {
            return Complex64::new(1.0, 0.0);
        }
        match self {
            Self::Zero => Complex64::new(1.0, 0.0),
            _ => cis_neg(self.phase(n, row as i64 - delay as i64)),
        }
    }

    /// Prefix sample `m ∈ [-Ncp, -1]` in terms of the frame: `s[m] = s[N+m]·exp(-j2π φ(m))`.
    pub fn prefix_sample(&self, s: &[Complex64], m: i64) -> Complex64 {
        let n = s.len();
        s[(n as i64 + m) as usize] * cis_neg(self.phase(n, m))
    }
}

/// `c1 = (2(fmax+ξ)+1)/(2N)`.
pub fn optimal_c1(fmax: usize, guard: usize, n: usize) -> f64 {
    (2 * (fmax + guard) + 1) as f64 / (2 * n) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpRate {
    pub c1: f64,
    /// False when the orthogonality condition fails for the channel.
    pub orthogonal: bool,
}

/// Optimal `c1` for `spec`, flagged when the channel is not orthogonal.
pub fn optimal_c1_for(spec: &ChannelSpec) -> ChirpRate {
    ChirpRate {
        c1: optimal_c1(spec.fmax, spec.guard, spec.n),
        orthogonal: spec.is_orthogonal(),
    }
}

/// `loc_p = [f_p + 2N c1 ℓ_p] mod N`, rounded to the nearest index for
/// fractional values.
pub fn location_index(path: &PathSpec, n: usize, c1: f64) -> usize {
    let v = path.doppler + 2.0 * n as f64 * c1 * path.delay as f64;
    (v.round() as i64).rem_euclid(n as i64) as usize
}

/// `loc_p = [f_p + ℓ_p (1 + 2(fmax+ξ))] mod N`; equals [`location_index`]
/// only when `c1` is optimal.
pub fn location_index_optimal(path: &PathSpec, spec: &ChannelSpec) -> usize {
    let stride = (1 + 2 * (spec.fmax + spec.guard)) as f64;
    let v = path.doppler + stride * path.delay as f64;
    (v.round() as i64).rem_euclid(spec.n as i64) as usize
}

#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    matrix: DMatrix<Complex64>,
    support: BTreeSet<(usize, usize)>,
    locs: Vec<usize>,
}

impl EffectiveChannel {
    pub fn from_matrix(matrix: DMatrix<Complex64>, locs: Vec<usize>) -> Self {
        let support = support_of(&matrix, SUPPORT_THRESHOLD);
        Self {
            matrix,
            support,
            locs,
        }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn support(&self) -> &BTreeSet<(usize, usize)> {
        &self.support
    }

    /// Per-path location indices predicted from the channel parameters.
    pub fn locs(&self) -> &[usize] {
        &self.locs
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// `(row, col, re, im)` for every support entry.
    pub fn triplets(&self) -> Vec<(usize, usize, f64, f64)> {
        self.support
            .iter()
            .map(|&(r, c)| {
                let v = self.matrix[(r, c)];
                (r, c, v.re, v.im)
            })
            .collect()
    }
}

/// Entries whose magnitude exceeds `rel_threshold` times the largest entry.
pub fn support_of(matrix: &DMatrix<Complex64>, rel_threshold: f64) -> BTreeSet<(usize, usize)> {
    let max = matrix.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut out = BTreeSet::new();
    if max == 0.0 {
        return out;
    }
    for c in 0..matrix.ncols() {
        for r in 0..matrix.nrows() {
            if matrix[(r, c)].norm() > rel_threshold * max {
                out.insert((r, c));
            }
        }
    }
    out
}

/// `A·H·A⁻¹` for the transform `daft` and the given prefix rule.
pub fn effective_matrix(
    spec: &ChannelSpec,
    daft: &CpDaft,
    prefix: &PrefixPhaseRule,
) -> Result<DMatrix<Complex64>> {
    let n = spec.n;
    check_len(n, daft.size())?;
    let mut g = DMatrix::zeros(n, n);
    let mut unit = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        unit[j] = Complex64::new(1.0, 0.0);
        let s = daft.inverse(&unit)?;
        let r = spec.apply(prefix, &s)?;
        let col = daft.forward(&r)?;
        for (i, v) in col.into_iter().enumerate() {
            g[(i, j)] = v;
        }
        unit[j] = Complex64::new(0.0, 0.0);
    }
    Ok(g)
}

/// Effective channel with the chirp-periodic prefix matched to `cfg.c1`.
pub fn effective_channel(spec: &ChannelSpec, cfg: &TransformConfig) -> Result<EffectiveChannel> {
    let prefix = PrefixPhaseRule::AfdmChirpPeriodic { c1: cfg.c1 };
    effective_channel_with_prefix(spec, cfg, &prefix)
}

pub fn effective_channel_with_prefix(
    spec: &ChannelSpec,
    cfg: &TransformConfig,
    prefix: &PrefixPhaseRule,
) -> Result<EffectiveChannel> {
    spec.validate()?;
    check_len(spec.n, cfg.n)?;
    let daft = CpDaft::new(cfg.clone());
    let matrix = effective_matrix(spec, &daft, prefix)?;
    let locs = spec
        .paths
        .iter()
        .map(|p| location_index(p, spec.n, cfg.c1))
        .collect();
    Ok(EffectiveChannel::from_matrix(matrix, locs))
}

/// Structure matrix `Ξ = F Λ1 H Λ1ᴴ Fᴴ`: the effective channel without the
/// second chirp.
pub fn structure_matrix(spec: &ChannelSpec, cfg: &TransformConfig) -> Result<DMatrix<Complex64>> {
    let bare = TransformConfig::new(
        cfg.n,
        cfg.c1,
        0.0,
        cfg.perm1.clone(),
        crate::Permutation::identity(cfg.n)?,
    )?;
    Ok(effective_channel(spec, &bare)?.into_matrix())
}

/// Recovered delay-Doppler tap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractedPath {
    pub delay: usize,
    pub doppler: i64,
    pub gain: Complex64,
    pub loc: usize,
}

/// Reads the taps off row 0 of a one-sided (or conventional) effective
/// channel with integer Dopplers, inverting the location index and removing
/// the deterministic phase of each entry.
pub fn extract_paths(
    g: &EffectiveChannel,
    spec: &ChannelSpec,
    cfg: &TransformConfig,
) -> Result<Vec<ExtractedPath>> {
    let n = spec.n;
    check_len(n, g.size())?;
    check_len(n, cfg.n)?;
    if !cfg.is_one_sided() {
        return Err(Error::InvalidParameter(
            "path extraction needs an unpermuted first chirp".into(),
        ));
    }
    if !spec.is_orthogonal() {
        return Err(Error::NonOrthogonal(format!(
            "2(fmax+ξ)(lmax+1)+lmax = {} > N = {}",
            spec.orthogonality_lhs(),
            n
        )));
    }
    let stride = 2.0 * n as f64 * cfg.c1;
    if (stride - stride.round()).abs() > 1e-9 {
        return Err(Error::NonOrthogonal(format!(
            "2N·c1 = {stride} is not an integer"
        )));
    }
    let stride = stride.round() as i64;
    let ni = n as i64;
    let row = g.matrix().row(0);
    let max = g.matrix().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let p0 = cfg.perm2.get(0) as f64;
    let mut out = Vec::new();
    for loc in 0..n {
        let entry = row[loc];
        if entry.norm() <= SUPPORT_THRESHOLD * max {
            continue;
        }
        let mut candidates = (0..=spec.lmax).filter_map(|l| {
            let d = (loc as i64 - stride * l as i64).rem_euclid(ni);
            let f = if d >= (ni + 1) / 2 { d - ni } else { d };
            (f.unsigned_abs() as usize <= spec.fmax).then_some((l, f))
        });
        let (delay, doppler) = match (candidates.next(), candidates.next()) {
            (Some(c), None) => c,
            (None, _) => {
                return Err(Error::NonOrthogonal(format!(
                    "column {loc} maps to no delay-Doppler pair"
                )));
            }
            (Some(_), Some(_)) => {
                return Err(Error::NonOrthogonal(format!(
                    "column {loc} maps to several delay-Doppler pairs"
                )));
            }
        };
        let pl = cfg.perm2.get(loc) as f64;
        let l = delay as f64;
        let scale = cis_neg(cfg.c2 * (p0 * p0 - pl * pl))
            * cis_neg(-(cfg.c1 * l * l).rem_euclid(1.0) + ((loc * delay) % n) as f64 / n as f64);
        out.push(ExtractedPath {
            delay,
            doppler,
            gain: entry / scale,
            loc,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DopplerKind {
    Integer,
    Fractional,
}

/// Randomized channel draws: unit total power, uniform delays in
/// `[0, lmax]` and Dopplers in `[-fmax, fmax]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFamily {
    pub n: usize,
    pub paths: usize,
    pub lmax: usize,
    pub fmax: usize,
    #[serde(default)]
    pub guard: usize,
    #[serde(default = "default_doppler_kind")]
    pub doppler: DopplerKind,
    /// Redraw until all integer (delay, Doppler) pairs are distinct.
    #[serde(default = "default_true")]
    pub distinct: bool,
}

fn default_doppler_kind() -> DopplerKind {
    DopplerKind::Integer
}

fn default_true() -> bool {
    true
}

impl ChannelFamily {
    pub fn new(n: usize, paths: usize, lmax: usize, fmax: usize, guard: usize) -> Self {
        Self {
            n,
            paths,
            lmax,
            fmax,
            guard,
            doppler: DopplerKind::Integer,
            distinct: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::InvalidParameter(
                "at least one path is required".into(),
            ));
        }
        if self.distinct
            && self.doppler == DopplerKind::Integer
            && self.paths > (self.lmax + 1) * (2 * self.fmax + 1)
        {
            return Err(Error::InvalidParameter(format!(
                "{} distinct paths do not fit in a {}x{} delay-Doppler grid",
                self.paths,
                self.lmax + 1,
                2 * self.fmax + 1
            )));
        }
        ChannelSpec {
            n: self.n,
            paths: vec![],
            lmax: self.lmax,
            fmax: self.fmax,
            guard: self.guard,
        }
        .validate()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelSpec {
        let mut taps: Vec<(usize, f64)> = Vec::with_capacity(self.paths);
        while taps.len() < self.paths {
            let delay = rng.random_range(0..=self.lmax);
            let fmax = self.fmax as i64;
            let doppler = match self.doppler {
                DopplerKind::Integer => rng.random_range(-fmax..=fmax) as f64,
                DopplerKind::Fractional if fmax == 0 => 0.0,
                DopplerKind::Fractional => rng.random_range(-(fmax as f64)..=fmax as f64),
            };
            if self.distinct && taps.iter().any(|&(l, f)| l == delay && f == doppler) {
                continue;
            }
            taps.push((delay, doppler));
        }
        let mut gains: Vec<Complex64> = (0..self.paths)
            .map(|_| complex_gaussian(rng, 1.0))
            .collect();
        let power: f64 = gains.iter().map(|g| g.norm_sqr()).sum();
        let norm = power.sqrt();
        for g in &mut gains {
            *g /= norm;
        }
        let paths = taps
            .into_iter()
            .zip(gains)
            .map(|((delay, doppler), gain)| PathSpec {
                gain,
                delay,
                doppler,
            })
            .collect();
        ChannelSpec {
            n: self.n,
            paths,
            lmax: self.lmax,
            fmax: self.fmax,
            guard: self.guard,
        }
    }
}
