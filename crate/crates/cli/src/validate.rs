use std::collections::HashSet;
use std::fmt;

use cpafdm::cpim::{max_index_bits, MAX_CODEBOOK_BITS};
use cpafdm::{BigUint, ChannelSpec, Constellation, WaveformKind};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}: {}", self.field, self.message)
    }
}

#[derive(Default)]
struct Sink(Vec<Diagnostic>);

impl Sink {
    fn error(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Error,
            field: field.into(),
            message: message.into(),
        });
    }

    fn warn(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            severity: Severity::Warning,
            field: field.into(),
            message: message.into(),
        });
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

fn check_c1(out: &mut Sink, field: String, c1: Option<f64>, optimal: f64) {
    if let Some(c1) = c1 {
        if !c1.is_finite() {
            out.error(field, "must be finite");
        } else if (c1 - optimal).abs() > 1e-12 {
            out.warn(
                field,
                format!("{c1} differs from the optimal value {optimal}"),
            );
        }
    }
}

fn check_c2(out: &mut Sink, field: String, c2: Option<f64>) {
    if c2.is_some_and(|c| !c.is_finite()) {
        out.error(field, "must be finite");
    }
}

/// Diagnostics for `config` run as `experiment`. Errors block the run.
pub fn validate(config: &ExperimentConfig, experiment: Experiment) -> Vec<Diagnostic> {
    let mut out = Sink::default();
    let ch = &config.channel;
    let n = ch.n;

    if let Some(e) = config.experiment {
        if e != experiment {
            out.error(
                "experiment",
                format!("config is for {e}, requested {experiment}"),
            );
        }
    }
    if n == 0 {
        out.error("channel.n", "must be at least 1");
        return out.0;
    }
    if config.trials == 0
        && !matches!(
            experiment,
            Experiment::Papr | Experiment::Af | Experiment::Keyspace
        )
    {
        out.error("trials", "must be at least 1");
    }
    if Constellation::qam(config.constellation).is_err() {
        out.error(
            "constellation",
            format!("{} is not a square QAM order", config.constellation),
        );
    }
    if experiment.uses_snr_grid() {
        if config.snr_grid.is_empty() {
            out.error("snr_grid", "must not be empty");
        }
        if config.snr_grid.iter().any(|s| !s.is_finite()) {
            out.error("snr_grid", "values must be finite");
        }
    }

    if experiment.uses_channel() {
        if let Err(e) = ch.validate() {
            out.error("channel", e.to_string());
        }
        let probe = ChannelSpec {
            n,
            paths: vec![],
            lmax: ch.lmax,
            fmax: ch.fmax,
            guard: ch.guard,
        };
        let chirped = match experiment {
            Experiment::Cpim | Experiment::Physec => true,
            _ => config.waveforms.iter().any(|w| w.is_chirped()),
        };
        if chirped && !probe.is_orthogonal() {
            let message = format!(
                "2(fmax+guard)(lmax+1)+lmax = 2·{}·{}+{} = {} exceeds n = {n}",
                ch.fmax + ch.guard,
                ch.lmax + 1,
                ch.lmax,
                probe.orthogonality_lhs()
            );
            if experiment == Experiment::Effchan {
                out.error("channel", message);
            } else {
                out.warn("channel", message);
            }
        }
    }

    let optimal = config.optimal_c1();
    if experiment.uses_waveforms() {
        if config.waveforms.is_empty() {
            out.error("waveforms", "at least one waveform is required");
        }
        let mut names = HashSet::new();
        for (i, w) in config.waveforms.iter().enumerate() {
            let field = |f: &str| format!("waveforms[{i}].{f}");
            if !names.insert(w.label()) {
                out.error(
                    field("name"),
                    format!("duplicate waveform name {:?}", w.label()),
                );
            }
            if w.kind == WaveformKind::Ofdm {
                if w.c1.is_some() || w.c2.is_some() || w.perm.is_some() {
                    out.error(field("kind"), "ofdm takes no chirp rates or permutation");
                }
                continue;
            }
            check_c1(&mut out, field("c1"), w.c1, optimal);
            check_c2(&mut out, field("c2"), w.c2);
            match w.perm.as_deref() {
                None | Some("random") | Some("identity") => {}
                Some(rank) => match rank.parse::<BigUint>() {
                    Ok(r) if r < cpafdm::transforms::factorial(n) => {}
                    Ok(_) => out.error(field("perm"), format!("rank must be below {n}!")),
                    Err(_) => out.error(
                        field("perm"),
                        format!("{rank:?} is neither random, identity nor a rank"),
                    ),
                },
            }
            if w.kind == WaveformKind::Afdm && w.perm.as_deref().is_some_and(|p| p != "identity") {
                out.error(field("perm"), "afdm uses the identity permutation");
            }
        }
    }

    match experiment {
        Experiment::Papr => {
            if config.papr.frames == 0 {
                out.error("papr.frames", "must be at least 1");
            }
            if config.papr.gammas_db.is_empty() {
                out.error("papr.gammas_db", "must not be empty");
            }
        }
        Experiment::Af => {
            if config.af.oversampling == 0 {
                out.error("af.oversampling", "must be at least 1");
            }
            if config.af.permutations > 0 && config.af.bins == 0 {
                out.error("af.bins", "must be at least 1");
            }
            check_c1(&mut out, "af.c1".into(), config.af.c1, optimal);
            check_c2(&mut out, "af.c2".into(), config.af.c2);
        }
        Experiment::Cpim => {
            let k = config.cpim.k_bits;
            match max_index_bits(n) {
                Ok(cap) if k == 0 || k > cap => {
                    out.error("cpim.k_bits", format!("{k} index bits requested, floor(log2({n}!)) = {cap} available"))
                }
                Ok(_) if k > MAX_CODEBOOK_BITS => out.error(
                    "cpim.k_bits",
                    format!("{k} index bits exceed the supported codebook size of 2^{MAX_CODEBOOK_BITS}"),
                ),
                Ok(_) => {}
                Err(e) => out.error("channel.n", e.to_string()),
            }
            check_c1(&mut out, "cpim.c1".into(), config.cpim.c1, optimal);
            check_c2(&mut out, "cpim.c2".into(), config.cpim.c2);
        }
        Experiment::Physec => {
            if config.physec.wrong_keys == 0 {
                out.error("physec.wrong_keys", "must be at least 1");
            }
            if n < 2 {
                out.error("channel.n", "keys need n >= 2");
            }
            check_c1(&mut out, "physec.c1".into(), config.physec.c1, optimal);
            check_c2(&mut out, "physec.c2".into(), config.physec.c2);
        }
        Experiment::Keyspace => {
            if config.keyspace.sizes.iter().any(|&s| s < 2) {
                out.error("keyspace.sizes", "sizes must be at least 2");
            }
        }
        Experiment::Ber | Experiment::Effchan => {}
    }
    out.0
}
