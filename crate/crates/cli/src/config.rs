use std::fmt;
use std::path::{Path, PathBuf};

use cpafdm::channel::optimal_c1;
use cpafdm::seed::{derive_seed, rng_from_seed};
use cpafdm::waveform::default_c2;
use cpafdm::{BigUint, ChannelFamily, Permutation, TransformConfig, WaveformId, WaveformKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Ber,
    Papr,
    Af,
    Effchan,
    Cpim,
    Physec,
    Keyspace,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ber => "ber",
            Self::Papr => "papr",
            Self::Af => "af",
            Self::Effchan => "effchan",
            Self::Cpim => "cpim",
            Self::Physec => "physec",
            Self::Keyspace => "keyspace",
        }
    }

    pub fn uses_channel(&self) -> bool {
        matches!(self, Self::Ber | Self::Effchan | Self::Cpim | Self::Physec)
    }

    pub fn uses_waveforms(&self) -> bool {
        matches!(self, Self::Ber | Self::Papr | Self::Af | Self::Effchan)
    }

    pub fn uses_snr_grid(&self) -> bool {
        matches!(self, Self::Ber | Self::Cpim | Self::Physec)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// One waveform under test. Unset chirp rates take the optimal `c1` for the
/// channel and the default `c2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSpec {
    pub kind: WaveformKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    /// `"random"`, `"identity"` or a decimal permutation rank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perm: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perm_seed: Option<u64>,
}

impl WaveformSpec {
    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn is_chirped(&self) -> bool {
        self.kind != WaveformKind::Ofdm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaprParams {
    #[serde(default = "default_frames")]
    pub frames: u64,
    #[serde(default = "default_gammas")]
    pub gammas_db: Vec<f64>,
}

impl Default for PaprParams {
    fn default() -> Self {
        Self {
            frames: default_frames(),
            gammas_db: default_gammas(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AfParams {
    #[serde(default = "default_oversampling")]
    pub oversampling: usize,
    /// Size of the random-permutation ensemble; zero skips it.
    #[serde(default)]
    pub permutations: usize,
    /// Random QAM symbols instead of all-ones.
    #[serde(default)]
    pub random_data: bool,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
}

impl Default for AfParams {
    fn default() -> Self {
        Self {
            oversampling: default_oversampling(),
            permutations: 0,
            random_data: false,
            bins: default_bins(),
            c1: None,
            c2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpimParams {
    #[serde(default = "default_k_bits")]
    pub k_bits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
}

impl Default for CpimParams {
    fn default() -> Self {
        Self {
            k_bits: default_k_bits(),
            codebook_seed: None,
            c1: None,
            c2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysecParams {
    #[serde(default = "default_wrong_keys")]
    pub wrong_keys: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
}

impl Default for PhysecParams {
    fn default() -> Self {
        Self {
            wrong_keys: default_wrong_keys(),
            key_seed: None,
            c1: None,
            c2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyspaceParams {
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
}

impl Default for KeyspaceParams {
    fn default() -> Self {
        Self {
            sizes: default_sizes(),
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_constellation")]
    pub constellation: usize,
    #[serde(default = "default_snr_grid")]
    pub snr_grid: Vec<f64>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub channel: ChannelFamily,
    #[serde(default)]
    pub waveforms: Vec<WaveformSpec>,
    #[serde(default)]
    pub papr: PaprParams,
    #[serde(default)]
    pub af: AfParams,
    #[serde(default)]
    pub cpim: CpimParams,
    #[serde(default)]
    pub physec: PhysecParams,
    #[serde(default)]
    pub keyspace: KeyspaceParams,
}

fn default_trials() -> u64 {
    1000
}

fn default_constellation() -> usize {
    4
}

fn default_snr_grid() -> Vec<f64> {
    (0..=6).map(|i| 5.0 * i as f64).collect()
}

fn default_frames() -> u64 {
    10_000
}

fn default_gammas() -> Vec<f64> {
    (0..=48).map(|i| 0.25 * i as f64).collect()
}

fn default_oversampling() -> usize {
    8
}

fn default_bins() -> usize {
    20
}

fn default_k_bits() -> usize {
    2
}

fn default_wrong_keys() -> usize {
    cpafdm::physec::DEFAULT_WRONG_KEYS
}

fn default_sizes() -> Vec<usize> {
    vec![16, 64]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            origin: "<toml>".into(),
            message: e.to_string(),
        })
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            origin: "<json>".into(),
            message: e.to_string(),
        })
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Read {
            path: path.display().to_string(),
            source: e,
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        };
        parsed.map_err(|e| match e {
            CliError::Parse { message, .. } => CliError::Parse {
                origin: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Serialize(e.to_string()))
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Serialize(e.to_string()))
    }

    /// SHA-256 of the canonical serialization, ignoring the output path.
    pub fn content_hash(&self) -> CliResult<String> {
        let mut canonical = self.clone();
        canonical.out = None;
        let text =
            serde_json::to_string(&canonical).map_err(|e| CliError::Serialize(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn n(&self) -> usize {
        self.channel.n
    }

    pub fn optimal_c1(&self) -> f64 {
        optimal_c1(self.channel.fmax, self.channel.guard, self.channel.n)
    }

    pub fn default_c2(&self) -> f64 {
        default_c2(self.channel.n)
    }

    /// Builds waveform `index`. Random permutations are drawn from
    /// `perm_seed`, else from a stream keyed on the master seed and the index.
    pub fn waveform(&self, index: usize) -> CliResult<WaveformId> {
        let spec = self
            .waveforms
            .get(index)
            .ok_or_else(|| CliError::Invalid(format!("no waveform at index {index}")))?;
        let n = self.n();
        if spec.kind == WaveformKind::Ofdm {
            return Ok(WaveformId::ofdm(n)?);
        }
        let c1 = spec.c1.unwrap_or_else(|| self.optimal_c1());
        let c2 = spec.c2.unwrap_or_else(|| self.default_c2());
        let mut rng = rng_from_seed(
            spec.perm_seed
                .unwrap_or_else(|| derive_seed(self.seed, "perm", index as u64)),
        );
        let mut draw = |choice: Option<&str>| -> CliResult<Permutation> {
            match choice.unwrap_or("random") {
                "random" => Ok(Permutation::random(n, &mut rng)?),
                "identity" => Ok(Permutation::identity(n)?),
                rank => {
                    let r: BigUint = rank.parse().map_err(|_| {
                        CliError::Invalid(format!(
                            "waveforms[{index}].perm: {rank:?} is not a rank"
                        ))
                    })?;
                    Ok(Permutation::from_rank(n, &r)?)
                }
            }
        };
        let id = match spec.kind {
            WaveformKind::Ofdm => unreachable!(),
            WaveformKind::Afdm => WaveformId::afdm(n, c1, c2)?,
            WaveformKind::CpafdmOneSided => {
                WaveformId::one_sided(n, c1, c2, draw(spec.perm.as_deref())?)?
            }
            WaveformKind::CpafdmTwoSided => {
                let p1 = draw(Some("random"))?;
                let p2 = draw(spec.perm.as_deref())?;
                WaveformId::new(
                    WaveformKind::CpafdmTwoSided,
                    TransformConfig::new(n, c1, c2, p1, p2)?,
                )?
            }
        };
        Ok(id)
    }
}
