//! `recover`, `experiment` and `diagnose`.

use std::path::{Path, PathBuf};

use eigenmatrix::eigenmatrix::{build_eigenmatrices, diagnostics, DiagnosticsReport, RESIDUAL_WARN};
use eigenmatrix::error::Warning;
use eigenmatrix::harness::{add_noise, gen_samples, gen_spikes, match_spikes, run_sweep, ExperimentReport, Matching};
use eigenmatrix::kernel::{forward_map, SampleSet, SpikeSignal};
use eigenmatrix::recovery::{recover, RecoveryResult};
use eigenmatrix::{seed, Execution, Points};
use rand::Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{self, fmt_float, Provenance};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("[{stage}] {message}")]
    Pipeline { stage: String, message: String },
    #[error("[io] {0}")]
    Io(#[from] output::IoError),
    #[error("all {0} sweep cells failed")]
    AllFailed(usize),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn pipeline(stage: &str, e: eigenmatrix::Error) -> CommandError {
    CommandError::Pipeline {
        stage: e.stage().unwrap_or(stage).to_owned(),
        message: e.to_string(),
    }
}

/// What a command wrote and printed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

impl Outcome {
    fn write(&mut self, path: PathBuf, text: &str) -> Result<(), CommandError> {
        output::write_text(&path, text)?;
        self.files.push(path);
        Ok(())
    }
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(&cfg.out)
}

#[derive(Serialize)]
struct RecoverRecord<'a> {
    config: &'a RunConfig,
    truth: Option<&'a SpikeSignal>,
    matching: Option<&'a Matching>,
    raw_matching: Option<&'a Matching>,
    result: &'a RecoveryResult,
}

pub fn cmd_recover(cfg: &RunConfig, exec: Execution) -> Result<Outcome, CommandError> {
    let prov = Provenance::new(cfg);
    let kernel = cfg.kernel();
    let dir = out_dir(cfg);
    let mut out = Outcome::default();

    let (samples, values, truth) = match &cfg.observations {
        Some(path) => {
            let (s, v) = output::read_observations(Path::new(path), cfg.d, cfg.delimiter)?;
            s.validate_for(&kernel).map_err(|e| pipeline("validate", e))?;
            (s, v, None)
        }
        None => {
            let spec = cfg.problem_spec(cfg.sigma, cfg.seed);
            spec.validate().map_err(|e| pipeline("generate", e))?;
            let truth = gen_spikes(&spec.layout, spec.n_x, spec.dim, spec.seed).map_err(|e| pipeline("generate", e))?;
            let samples = gen_samples(spec.sample_region, spec.dim, spec.n_samples, spec.exclusion, spec.seed)
                .map_err(|e| pipeline("generate", e))?;
            let clean = forward_map(&kernel, &samples, &truth).map_err(|e| pipeline("generate", e))?;
            let noisy = add_noise(&clean, spec.sigma, spec.seed).map_err(|e| pipeline("noise", e))?;
            output::write_observations(
                &dir.join("observations.csv"),
                &prov,
                cfg.delimiter,
                &samples,
                &noisy.values,
                kernel.field(),
            )?;
            out.files.push(dir.join("observations.csv"));
            (samples, noisy.values, Some(truth))
        }
    };

    let build = cfg.build_config(exec);
    let mut rc = cfg.recovery_config();
    rc.beta_seed = seed::derive_seed(cfg.seed, "beta", &[cfg.beta_seed]);
    let result = recover(&kernel, &samples, &values, &build, &rc).map_err(|e| pipeline("recover", e))?;

    let final_sig = SpikeSignal {
        spikes: result.spikes_refined.clone(),
        weights: result.weights.clone(),
    };
    let raw_sig = SpikeSignal {
        spikes: result.spikes_raw.clone(),
        weights: result.weights_raw.clone(),
    };
    let matching = truth.as_ref().map(|t| match_spikes(t, &final_sig));
    let raw_matching = truth.as_ref().map(|t| match_spikes(t, &raw_sig));

    let record = RecoverRecord {
        config: cfg,
        truth: truth.as_ref(),
        matching: matching.as_ref(),
        raw_matching: raw_matching.as_ref(),
        result: &result,
    };
    out.write(dir.join("result.json"), &output::json_record(&prov, &record))?;
    let table = output::spike_table(
        &prov,
        cfg.delimiter,
        cfg.d,
        truth
            .as_ref()
            .zip(matching.as_ref())
            .map(|(t, m)| (t, &m.assignment[..])),
        &result.spikes_raw,
        &result.spikes_refined,
        &result.weights,
    );
    out.write(dir.join("spikes.csv"), &table)?;
    out.write(dir.join("config.toml"), &output::config_echo(&prov, cfg))?;

    out.lines.push(format!(
        "recovered {} spikes, ls_residual {}",
        result.n_x(),
        fmt_float(result.ls_residual)
    ));
    for (j, p) in result.spikes_refined.iter().enumerate() {
        let coords: Vec<String> = p.iter().map(|c| format!("{c:.9}")).collect();
        let w = result.weights[j];
        out.lines.push(format!(
            "  x{j} = ({})  w = {:.6}{:+.6}i",
            coords.join(", "),
            w.re,
            w.im
        ));
    }
    if let Some(m) = &matching {
        out.lines
            .push(format!("max matched error {}", fmt_float(m.max_error())));
    }
    for w in &result.diagnostics.warnings {
        out.lines.push(format!("WARN: {}", describe(w)));
    }
    Ok(out)
}

pub fn cmd_experiment(cfg: &RunConfig, exec: Execution) -> Result<Outcome, CommandError> {
    if cfg.observations.is_some() {
        return Err(crate::config::ConfigError::Invalid {
            key: "observations".into(),
            message: "experiments generate their own data; observations files are for `recover`".into(),
        }
        .into());
    }
    let prov = Provenance::new(cfg);
    let dir = out_dir(cfg);
    let template = cfg.problem_spec(cfg.sigmas[0], cfg.seeds[0]);
    let build = cfg.build_config(exec);
    let rc = cfg.recovery_config();
    let report = run_sweep(&template, &cfg.sigmas, &cfg.seeds, &build, &rc, exec).map_err(|e| pipeline("sweep", e))?;
    let mut out = Outcome::default();

    out.write(dir.join("summary.csv"), &summary_table(&prov, cfg, &report))?;
    for c in &report.cells {
        let t = &c.trial;
        let name = format!("cells/sigma{}_seed{}.csv", c.sigma_index, c.seed_index);
        let text = match &t.result {
            Some(r) => output::spike_table(
                &prov,
                cfg.delimiter,
                cfg.d,
                t.matching.as_ref().map(|m| (&t.truth, &m.assignment[..])),
                &r.spikes_raw,
                &r.spikes_refined,
                &r.weights,
            ),
            None => output::spike_table(
                &prov,
                cfg.delimiter,
                cfg.d,
                None,
                &Points::empty(cfg.d),
                &Points::empty(cfg.d),
                &[],
            ),
        };
        out.write(dir.join(name), &text)?;
    }
    out.write(dir.join("report.json"), &output::json_record(&prov, &report))?;
    out.write(dir.join("config.toml"), &output::config_echo(&prov, cfg))?;

    for s in &report.summary {
        out.lines.push(format!(
            "sigma {}: median max error {}, worst {}, failures {}/{}",
            fmt_float(s.sigma),
            fmt_float(s.median_max_error),
            fmt_float(s.worst_max_error),
            s.failures,
            s.seeds.len()
        ));
    }
    let failures = report.failures();
    if failures == report.cells.len() {
        return Err(CommandError::AllFailed(failures));
    }
    Ok(out)
}

fn summary_table(prov: &Provenance, cfg: &RunConfig, report: &ExperimentReport) -> String {
    let cols: Vec<String> = [
        "sigma",
        "seed",
        "status",
        "max_error",
        "mean_error",
        "raw_max_error",
        "ls_residual",
        "warnings",
        "failed_stage",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut t = output::Table::new(prov, cfg.delimiter, &cols);
    for c in &report.cells {
        let tr = &c.trial;
        let warnings = tr
            .result
            .as_ref()
            .map_or(tr.build_warnings.len(), |r| r.diagnostics.warnings.len());
        t.row(&[
            fmt_float(c.sigma),
            c.seed.to_string(),
            if tr.succeeded() { "ok" } else { "failed" }.to_owned(),
            fmt_float(tr.max_error),
            fmt_float(tr.mean_error),
            fmt_float(tr.raw_max_error),
            fmt_float(tr.ls_residual),
            warnings.to_string(),
            tr.failure.as_ref().and_then(|f| f.stage.clone()).unwrap_or_default(),
        ]);
    }
    t.into_string()
}

#[derive(Serialize)]
struct DiagnoseRecord<'a> {
    config: &'a RunConfig,
    report: &'a DiagnosticsReport,
    warnings: &'a [String],
}

pub fn cmd_diagnose(cfg: &RunConfig, exec: Execution) -> Result<Outcome, CommandError> {
    let prov = Provenance::new(cfg);
    let kernel = cfg.kernel();
    let dir = out_dir(cfg);
    let samples: SampleSet = match &cfg.observations {
        Some(path) => output::read_observations(Path::new(path), cfg.d, cfg.delimiter)?.0,
        None => {
            gen_samples(cfg.region(), cfg.d, cfg.j, cfg.exclusion.0, cfg.seed).map_err(|e| pipeline("generate", e))?
        }
    };
    let build = cfg.build_config(exec);
    let grid = build.grid.build(cfg.d).map_err(|e| pipeline("build", e))?;
    let set = build_eigenmatrices(&kernel, &samples, &grid, &build).map_err(|e| pipeline("build", e))?;

    let mut rng = seed::stream(cfg.seed, "probes", &[]);
    let coords: Vec<f64> = (0..cfg.probes * cfg.d).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let probes = Points::new(cfg.d, coords).map_err(|e| pipeline("probes", e))?;
    let report = diagnostics(&set, &kernel, &samples, &probes, exec).map_err(|e| pipeline("diagnose", e))?;
    let b = &report.build;

    let mut out = Outcome::default();
    let l = &mut out.lines;
    l.push(format!(
        "kernel: {}, d = {}, J = {}, grid {}^{}",
        kernel.name(),
        cfg.d,
        samples.len(),
        cfg.grid,
        cfg.d
    ));
    l.push(format!("cond(G) = {}", fmt_float(b.cond_ghat)));
    l.push(format!("effective rank = {} of {}", b.effective_rank, b.ghat_cols));
    l.push(format!(
        "delta_used = {} ({} escalations)",
        fmt_float(b.threshold_used),
        b.escalations
    ));
    for (t, n) in b.norms.iter().enumerate() {
        l.push(format!(
            "M^{}: norm = {}, on-grid residual = {}, off-grid residual = {} ({} probes)",
            t + 1,
            fmt_float(*n),
            fmt_float(b.on_grid_residuals[t]),
            fmt_float(report.off_grid_residuals[t]),
            report.probe_count
        ));
    }
    if report.commutators.is_empty() {
        l.push("commutators: n/a (single eigenmatrix)".to_owned());
    } else {
        for c in &report.commutators {
            l.push(format!(
                "commutator [M^{}, M^{}] = {}",
                c.a + 1,
                c.b + 1,
                fmt_float(c.norm)
            ));
        }
    }

    let mut warnings: Vec<String> = b.warnings.iter().map(describe).collect();
    let off = report.max_off_grid();
    if off > RESIDUAL_WARN {
        warnings.push(format!(
            "off-grid residual {} exceeds {}",
            fmt_float(off),
            fmt_float(RESIDUAL_WARN)
        ));
    }
    for w in &warnings {
        out.lines.push(format!("WARN: {w}"));
    }
    let record = DiagnoseRecord {
        config: cfg,
        report: &report,
        warnings: &warnings,
    };
    out.write(dir.join("diagnostics.json"), &output::json_record(&prov, &record))?;
    out.write(dir.join("config.toml"), &output::config_echo(&prov, cfg))?;
    Ok(out)
}

fn describe(w: &Warning) -> String {
    match w {
        Warning::IllConditionedGhat { cond, limit } => {
            format!("cond(G) = {} exceeds limit {}", fmt_float(*cond), fmt_float(*limit))
        }
        Warning::LargeResidual { residual, tolerance } => format!(
            "on-grid residual {} exceeds {}",
            fmt_float(*residual),
            fmt_float(*tolerance)
        ),
        Warning::RankDeficientKrylov { ratio } => {
            format!(
                "Krylov matrix nearly rank deficient (sigma ratio {})",
                fmt_float(*ratio)
            )
        }
        Warning::IllConditionedShift { dim, cond } => {
            format!(
                "shift submatrix {} ill-conditioned (cond {})",
                dim + 1,
                fmt_float(*cond)
            )
        }
        Warning::CollinearSpikes { cond } => {
            format!(
                "weight system ill-conditioned (cond {}); spikes nearly collinear",
                fmt_float(*cond)
            )
        }
        Warning::SpikesOutOfBox { max_abs } => {
            format!(
                "recovered coordinate {} lies outside [-1,1]; clamped",
                fmt_float(*max_abs)
            )
        }
        Warning::BetaRedrawn { attempts } => format!("joint diagonalization needed {attempts} beta draws"),
        Warning::RefinementSkipped => "refinement skipped: ill-conditioned Jacobian".to_owned(),
        Warning::NoSpectralGap => "no clear singular-value gap; spike count is a guess".to_owned(),
    }
}
