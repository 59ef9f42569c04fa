use std::fs;
use std::path::{Path, PathBuf};

use cpafdm::channel::{effective_channel, location_index};
use cpafdm::cpim::{spectral_efficiency, CpimExperiment};
use cpafdm::metrics::{
    ambiguity, histogram, ks_two_sample, papr_db, permutation_ensemble, AfMetrics, Stats,
};
use cpafdm::physec::{keygen, keyspace_report, EavesdropExperiment};
use cpafdm::seed::{derive_seed, random_bits, rng_from_seed};
use cpafdm::waveform::{map_bits, Modem};
use cpafdm::{BerExperiment, Complex64, Constellation, CutKind, Permutation, TransformConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::output::{amplitude_db, write_file, Table};
use crate::validate::{has_errors, validate, Diagnostic};

/// Contents of `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub config_sha256: String,
    pub seed: u64,
    pub library_version: &'static str,
    pub outputs: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

/// Validates, runs `experiment` and writes its tables and manifest to `out_dir`.
pub fn run(
    config: &ExperimentConfig,
    experiment: Experiment,
    out_dir: &Path,
) -> CliResult<RunSummary> {
    let diagnostics = validate(config, experiment);
    if has_errors(&diagnostics) {
        let text: Vec<String> = diagnostics.iter().map(ToString::to_string).collect();
        return Err(CliError::Invalid(text.join("; ")));
    }
    let tables = compute(config, experiment)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::Write {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let mut outputs = Vec::with_capacity(tables.len());
    for t in &tables {
        let name = t.file_name(config.format);
        write_file(out_dir, &name, &t.render(config.format)?)?;
        outputs.push(name);
    }
    let manifest = Manifest {
        experiment,
        config_sha256: config.content_hash()?,
        seed: config.seed,
        library_version: cpafdm::VERSION,
        outputs,
        diagnostics,
    };
    let mut bytes =
        serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Serialize(e.to_string()))?;
    bytes.push(b'\n');
    write_file(out_dir, "manifest.json", &bytes)?;
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        manifest,
    })
}

/// Result tables of one experiment, without touching the filesystem.
pub fn compute(config: &ExperimentConfig, experiment: Experiment) -> CliResult<Vec<Table>> {
    match experiment {
        Experiment::Ber => ber(config),
        Experiment::Papr => papr(config),
        Experiment::Af => af(config),
        Experiment::Effchan => effchan(config),
        Experiment::Cpim => cpim(config),
        Experiment::Physec => physec(config),
        Experiment::Keyspace => keyspace(config),
    }
}

fn ber(config: &ExperimentConfig) -> CliResult<Vec<Table>> {
    let mut tables = Vec::new();
    for (i, spec) in config.waveforms.iter().enumerate() {
        let records = BerExperiment {
            waveform: config.waveform(i)?,
            family: config.channel.clone(),
            constellation: config.constellation,
            snr_grid: config.snr_grid.clone(),
            trials: config.trials,
            master_seed: config.seed,
        }
        .run()?;
        let mut t = Table::new(
            format!("ber_{}", spec.label()),
            &["snr_db", "trials", "bit_errors", "ber", "ci95"],
        );
        for r in records {
            t.push(vec![
                r.snr_db.into(),
                r.trials.into(),
                r.bit_errors.into(),
                r.ber.into(),
                r.ci95.into(),
            ]);
        }
        tables.push(t);
    }
    Ok(tables)
}

fn papr(config: &ExperimentConfig) -> CliResult<Vec<Table>> {
    let n = config.n();
    let m = Constellation::qam(config.constellation)?;
    let mut samples = Vec::with_capacity(config.waveforms.len());
    let mut tables = Vec::new();
    for (i, spec) in config.waveforms.iter().enumerate() {
        let modem = Modem::new(config.waveform(i)?);
        let values: Vec<f64> = (0..config.papr.frames)
            .into_par_iter()
            .map(|f| {
                let mut rng = rng_from_seed(derive_seed(config.seed, "papr", f));
                let x = map_bits(&random_bits(&mut rng, n * m.bits_per_symbol()), &m)?;
                papr_db(modem.modulate(&x)?.data())
            })
            .collect::<cpafdm::Result<_>>()?;
        let ccdf = cpafdm::PaprCcdf::from_samples(&values, n, &config.papr.gammas_db);
        let mut t = Table::new(
            format!("ccdf_{}", spec.label()),
            &["gamma_db", "p_empirical", "p_analytic"],
        );
        for ((g, e), a) in ccdf
            .gammas_db
            .iter()
            .zip(&ccdf.empirical)
            .zip(&ccdf.analytic)
        {
            t.push(vec![(*g).into(), (*e).into(), (*a).into()]);
        }
        tables.push(t);
        samples.push((spec.label(), values));
    }
    let mut ks = Table::new(
        "papr_ks",
        &["waveform_a", "waveform_b", "statistic", "p_value"],
    );
    for a in 0..samples.len() {
        for b in a + 1..samples.len() {
            let r = ks_two_sample(&samples[a].1, &samples[b].1);
            ks.push(vec![
                samples[a].0.clone().into(),
                samples[b].0.clone().into(),
                r.statistic.into(),
                r.p_value.into(),
            ]);
        }
    }
    tables.push(ks);
    Ok(tables)
}

fn af_symbols(config: &ExperimentConfig) -> CliResult<Vec<Complex64>> {
    let n = config.n();
    if !config.af.random_data {
        return Ok(vec![Complex64::new(1.0, 0.0); n]);
    }
    let m = Constellation::qam(config.constellation)?;
    let mut rng = rng_from_seed(derive_seed(config.seed, "af-data", 0));
    Ok(map_bits(&random_bits(&mut rng, n * m.bits_per_symbol()), &m)?.into_data())
}

fn metric_columns(m: &AfMetrics) -> [f64; 6] {
    [
        m.doppler.pslr_db,
        m.doppler.islr_db,
        m.doppler.mainlobe_halfwidth,
        m.delay.pslr_db,
        m.delay.islr_db,
        m.delay.mainlobe_halfwidth,
    ]
}

const METRIC_NAMES: [&str; 6] = [
    "doppler_pslr_db",
    "doppler_islr_db",
    "doppler_halfwidth",
    "delay_pslr_db",
    "delay_islr_db",
    "delay_halfwidth",
];

fn af(config: &ExperimentConfig) -> CliResult<Vec<Table>> {
    let n = config.n();
    let q = config.af.oversampling;
    let symbols = af_symbols(config)?;
    let mut tables = Vec::new();
    for (i, spec) in config.waveforms.iter().enumerate() {
        let s = Modem::new(config.waveform(i)?)
            .transform()
            .inverse(&symbols)?;
        let grid = ambiguity(&s, q)?;
        for kind in [CutKind::ZeroDelay, CutKind::ZeroDoppler] {
            let cut = grid.cut(kind);
            let mut t = Table::new(
                format!("af_{}_{}", spec.label(), kind.name().replace('-', "_")),
                &["axis", "amplitude_db"],
            );
            for (x, v) in cut.axis.iter().zip(&cut.values) {
                t.push(vec![(*x).into(), amplitude_db(*v).into()]);
            }
            tables.push(t);
        }
    }
    if config.af.permutations == 0 {
        return Ok(tables);
    }

    let c1 = config.af.c1.unwrap_or_else(|| config.optimal_c1());
    let c2 = config.af.c2.unwrap_or_else(|| config.default_c2());
    let base = TransformConfig::daft(n, c1, c2)?;
    let perms: Vec<Permutation> = (0..config.af.permutations as u64)
        .map(|i| {
            Permutation::random(
                n,
                &mut rng_from_seed(derive_seed(config.seed, "af-perm", i)),
            )
        })
        .collect::<cpafdm::Result<_>>()?;
    let ensemble = permutation_ensemble(&base, &perms, &symbols, q)?;
    let reference = permutation_ensemble(&base, &[Permutation::identity(n)?], &symbols, q)?;

    let mut columns = vec!["perm_index", "perm_rank"];
    columns.extend(METRIC_NAMES);
    let mut records = Table::new("af_ensemble", &columns);
    for (i, (p, r)) in perms.iter().zip(&ensemble.records).enumerate() {
        let mut row = vec![i.into(), p.to_rank().to_string().into()];
        row.extend(metric_columns(r).map(Into::into));
        records.push(row);
    }
    tables.push(records);

    let reference = metric_columns(&reference.records[0]);
    let mut summary = Table::new(
        "af_summary",
        &["metric", "mean", "std", "min", "max", "afdm"],
    );
    for (k, name) in METRIC_NAMES.iter().enumerate() {
        let values: Vec<f64> = ensemble
            .records
            .iter()
            .map(|r| metric_columns(r)[k])
            .collect();
        let st = Stats::of(&values);
        summary.push(vec![
            name.to_string().into(),
            st.mean.into(),
            st.std.into(),
            st.min.into(),
            st.max.into(),
            reference[k].into(),
        ]);
        let mut hist = Table::new(format!("af_hist_{name}"), &["bin_low", "bin_high", "count"]);
        for b in histogram(&values, config.af.bins) {
            hist.push(vec![b.low.into(), b.high.into(), b.count.into()]);
        }
        tables.push(hist);
    }
    tables.push(summary);
    Ok(tables)
}

fn effchan(config: &ExperimentConfig) -> CliResult<Vec<Table>> {
    let n = config.n();
    let spec = config
        .channel
        .draw(&mut rng_from_seed(derive_seed(config.seed, "effchan", 0)));
    let c1 = config.optimal_c1();
    let mut paths = Table::new(
        "effchan_paths",
        &["path", "delay", "doppler", "gain_re", "gain_im", "loc"],
    );
    for (i, p) in spec.paths.iter().enumerate() {
        paths.push(vec![
            i.into(),
            p.delay.into(),
            p.doppler.into(),
            p.gain.re.into(),
            p.gain.im.into(),
            location_index(p, n, c1).into(),
        ]);
    }
    let mut tables = vec![paths];
    for (i, w) in config.waveforms.iter().enumerate() {
        let g = effective_channel(&spec, &config.waveform(i)?.cfg)?;
        let mut t = Table::new(
            format!("effchan_{}", w.label()),
            &["row", "col", "re", "im"],
        );
        for (r, c, re, im) in g.triplets() {
            t.push(vec![r.into(), c.into(), re.into(), im.into()]);
        }
        tables.push(t);
    }
    Ok(tables)
}

fn cpim(config: &ExperimentConfig) -> CliResult<Vec<Table>> {
    let n = config.n();
    let p = &config.cpim;
    let exp = CpimExperiment {
        n,
        c1: p.c1.unwrap_or_else(|| config.optimal_c1()),
        c2: p.c2.unwrap_or_else(|| config.default_c2()),
        constellation: config.constellation,
        k_bits: p.k_bits,
        codebook_seed: p
            .codebook_seed
            .unwrap_or_else(|| derive_seed(config.seed, "codebook", 0)),
        family: config.channel.clone(),
        snr_grid: config.snr_grid.clone(),
        trials: config.trials,
        master_seed: config.seed,
    };
    let mut t = Table::new(
        "cpim",
        &["snr_db", "index_error_rate", "symbol_ber", "total_ber"],
    );
    for r in exp.run()? {
        t.push(vec![
            r.snr_db.into(),
            r.index_error_rate.into(),
            r.symbol_ber.into(),
            r.total_ber.into(),
        ]);
    }
    let (plain, indexed) = spectral_efficiency(n, config.constellation, 1 << p.k_bits)?;
    let mut rate = Table::new(
        "cpim_rate",
        &["n", "constellation", "k_bits", "afdm_bits", "cpim_bits"],
    );
    rate.push(vec![
        n.into(),
        config.constellation.into(),
        p.k_bits.into(),
        plain.into(),
        indexed.into(),
    ]);
    Ok(vec![t, rate])
}

fn physec(config: &ExperimentConfig) -> CliResult<Vec<Table>> {
    let p = &config.physec;
    let exp = EavesdropExperiment {
        c1: p.c1.unwrap_or_else(|| config.optimal_c1()),
        c2: p.c2.unwrap_or_else(|| config.default_c2()),
        constellation: config.constellation,
        family: config.channel.clone(),
        snr_grid: config.snr_grid.clone(),
        trials: config.trials,
        master_seed: config.seed,
    };
    let key = keygen(
        config.n(),
        p.key_seed
            .unwrap_or_else(|| derive_seed(config.seed, "key", 0)),
    )?;
    let rep = exp.run(&key, p.wrong_keys)?;
    let mut t = Table::new(
        "physec",
        &[
            "snr_db",
            "matched_ber",
            "mismatched_ber",
            "mismatched_evm",
            "mismatched_phase_variance",
        ],
    );
    for i in 0..rep.snr_grid.len() {
        t.push(vec![
            rep.snr_grid[i].into(),
            rep.matched_ber[i].into(),
            rep.mismatched_ber[i].into(),
            rep.mismatched_evm[i].into(),
            rep.mismatched_phase_variance[i].into(),
        ]);
    }
    let mut scatter = Table::new("physec_scatter", &["re", "im"]);
    for z in &rep.scatter {
        scatter.push(vec![z.re.into(), z.im.into()]);
    }
    Ok(vec![t, scatter])
}

fn keyspace(config: &ExperimentConfig) -> CliResult<Vec<Table>> {
    let mut t = Table::new("keyspace", &["n", "factorial_bits", "keyspace", "note"]);
    for &n in &config.keyspace.sizes {
        let r = keyspace_report(n)?;
        t.push(vec![
            r.n.into(),
            r.factorial_bits.into(),
            r.keyspace.into(),
            r.brute_force_note.into(),
        ]);
    }
    Ok(vec![t])
}
