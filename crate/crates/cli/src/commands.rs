use std::path::{Path, PathBuf};

use diiv_core::estimand::{align_parallel, aligned_cells, diiv_from_cells, diiv_from_table, edge_contrasts, pooled_iv};
use diiv_core::microsim::{
    analytic_shares, overidentified_iv, run_monte_carlo_with, simulate_trial, EnvironmentConfig, EstimatorSummary,
    Execution, MonteCarloSummary,
};
use diiv_core::twostage::{two_stage_joint, two_stage_parallel, CrossTerm, SeKind, TwoStageReport};
use diiv_core::{DesignMode, DirectedDesign, Instrument, ObservationTable, Sign, Warning};

use crate::config::{load_config, RunConfig};
use crate::csvio::{read_table, write_table};
use crate::error::{CliError, CliResult, EXIT_OK};
use crate::report::{fmt_real, Report};

/// Report plus the process exit code it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub exit_code: i32,
}

impl Outcome {
    fn failed(mut report: Report, err: &CliError) -> Self {
        report.text("error_kind", err.kind()).text("error", err.to_string());
        Outcome {
            report,
            exit_code: err.exit_code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    /// Forces the layout; inferred from the header when `None`.
    pub design: Option<DesignMode>,
    pub s1: Sign,
    pub s2: Sign,
    pub covariates: Vec<String>,
    pub se: SeKind,
    pub drop_cross: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            design: None,
            s1: Sign::Plus,
            s2: Sign::Plus,
            covariates: Vec::new(),
            se: SeKind::Robust,
            drop_cross: false,
        }
    }
}

/// DIIV 2SLS on a CSV table, with single-instrument, pooled and
/// over-identified estimates alongside.
pub fn estimate(csv: &Path, opts: &EstimateOptions) -> Outcome {
    let mut report = Report::new();
    report.text("command", "estimate");
    let table = match read_table(csv, opts.design, &opts.covariates) {
        Ok(t) => t,
        Err(e) => return Outcome::failed(report, &e),
    };
    let mode = opts.design.unwrap_or(table.inferred_mode());
    let design = DirectedDesign::new(opts.s1, opts.s2);
    report
        .text("design", mode.to_string())
        .text("s1", opts.s1.to_string())
        .text("s2", opts.s2.to_string())
        .text("se_kind", opts.se.tag())
        .count("n", table.n());
    cell_counts(&mut report, &table, mode, &design);

    let covariates: Vec<&str> = opts.covariates.iter().map(String::as_str).collect();
    let main = match mode {
        DesignMode::Joint => {
            let cross = if opts.drop_cross {
                CrossTerm::Drop
            } else {
                CrossTerm::Auto
            };
            two_stage_joint(&table, &design, opts.se, &covariates, cross)
        }
        DesignMode::Parallel => {
            align_parallel(&table, &design).and_then(|t| two_stage_parallel(&t, opts.se, &covariates))
        }
    };
    let fit = match main {
        Ok(fit) => fit,
        Err(e) => return Outcome::failed(report, &e.into()),
    };
    main_fields(&mut report, &fit, &opts.covariates);
    let mut warnings = fit.warnings.clone();
    companions(&mut report, &table, mode, &design, &mut warnings);
    let tags: Vec<&str> = warnings.iter().map(Warning::tag).collect();
    report.text("warnings", if tags.is_empty() { "none".into() } else { tags.join(",") });
    Outcome {
        report,
        exit_code: EXIT_OK,
    }
}

fn main_fields(report: &mut Report, fit: &TwoStageReport, covariates: &[String]) {
    report
        .text("method", fit.method.tag())
        .real("tau", fit.tau)
        .real("se", fit.se)
        .real("first_stage_beta", fit.first_stage_beta)
        .real("first_stage_f", fit.first_stage_f)
        .real("first_stage_f_classical", fit.first_stage_f_classical)
        .real("first_stage_f_robust", fit.first_stage_f_robust);
    if fit.method == diiv_core::twostage::TwoStageMethod::JointDelta {
        report.text("cross_included", fit.cross_included.to_string());
    }
    report.text(
        "covariates",
        if covariates.is_empty() {
            "none".into()
        } else {
            covariates.join(",")
        },
    );
}

fn cell_counts(report: &mut Report, table: &ObservationTable, mode: DesignMode, design: &DirectedDesign) {
    match mode {
        DesignMode::Joint => {
            if let Ok(cells) = aligned_cells(table, design) {
                for (a, b) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    report.count(&format!("cells.aligned_{a}{b}"), cells.counts[a][b]);
                }
            }
        }
        DesignMode::Parallel => {
            for j in [Instrument::First, Instrument::Second] {
                if let Ok(c) = edge_contrasts(table, j, mode) {
                    let (treated, control) = c.entering_counts();
                    let frame = j.index();
                    report.count(&format!("cells.frame{frame}_z0"), control);
                    report.count(&format!("cells.frame{frame}_z1"), treated);
                }
            }
        }
    }
}

/// Comparison estimates without covariates; each is omitted when undefined.
fn companions(
    report: &mut Report,
    table: &ObservationTable,
    mode: DesignMode,
    design: &DirectedDesign,
    warnings: &mut Vec<Warning>,
) {
    // Joint layout: the ratio over aligned cells, whose baseline is the
    // aligned (0,0) cell, as in the regression.
    let ratio = match mode {
        DesignMode::Joint => aligned_cells(table, design).and_then(|c| diiv_from_cells(&c.y, &c.d)),
        DesignMode::Parallel => diiv_from_table(table, design, mode),
    };
    if let Ok(ratio) = ratio {
        report.real("ratio_tau", ratio.tau);
        // The oriented first-stage difference is positive under opposing
        // shifts with relevance; a negative sample value contradicts the
        // declared orientation.
        if ratio.denominator < 0.0 {
            warnings.push(Warning::OrderingViolation);
        }
    }
    for j in [Instrument::First, Instrument::Second] {
        if let Ok(w) = edge_contrasts(table, j, mode).and_then(|c| c.wald()) {
            report.real(&format!("wald_{}", j.index()), w);
        }
    }
    if let Ok(p) = pooled_iv(table) {
        report.real("pooled_iv", p);
    }
    if let Ok(o) = overidentified_iv(table) {
        report.real("overidentified_iv", o);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimulateOptions {
    pub seed: Option<u64>,
    pub sequential: bool,
    /// Trials whose simulated tables are written as `trial_<t>.csv`.
    pub dump_trials: Vec<u64>,
}

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const HISTOGRAM_FILE: &str = "histogram.csv";

pub fn trial_file(trial: u64) -> String {
    format!("trial_{trial}.csv")
}

/// Runs the Monte Carlo study of a config file and writes its artifacts to
/// `out`. The returned report is the summary file's content.
pub fn simulate(config_path: &Path, out: &Path, opts: &SimulateOptions) -> Outcome {
    let mut report = Report::new();
    report.text("command", "simulate");
    match simulate_inner(config_path, out, opts, &mut report) {
        Ok(()) => Outcome {
            report,
            exit_code: EXIT_OK,
        },
        Err(e) => Outcome::failed(report, &e),
    }
}

fn simulate_inner(config_path: &Path, out: &Path, opts: &SimulateOptions, report: &mut Report) -> CliResult<()> {
    let run = load_config(config_path)?;
    let config = match opts.seed {
        Some(seed) => run.environment.clone().with_seed(seed),
        None => run.environment.clone(),
    };
    if let Some(&bad) = opts.dump_trials.iter().find(|&&t| t >= config.trials() as u64) {
        return Err(CliError::Core(diiv_core::DiivError::InvalidInput(format!(
            "trial {bad} is out of range for {} trials",
            config.trials()
        ))));
    }
    let execution = if opts.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let summary = run_monte_carlo_with(&config, execution);

    config_fields(report, &run, &config);
    analytic_fields(report, &config);
    report.count("flagged", summary.flagged);
    summary_fields(report, "diiv", &summary.diiv);
    summary_fields(report, "overidentified_iv", &summary.overidentified_iv);

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_file(&out.join(TRIALS_FILE), &trials_csv(&summary))?;
    write_file(&out.join(HISTOGRAM_FILE), &histogram_csv(&summary))?;
    write_file(&out.join(SUMMARY_FILE), &report.to_string())?;
    for &t in &opts.dump_trials {
        write_table(&out.join(trial_file(t)), &simulate_trial(&config, t).table)?;
    }
    Ok(())
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    std::fs::write(path, body).map_err(|e| CliError::io(path, e))
}

fn config_fields(report: &mut Report, run: &RunConfig, config: &EnvironmentConfig) {
    if let Some(p) = run.preset {
        report.text("preset", p.name());
    }
    let o = config.orientation();
    report
        .text("design", config.design().to_string())
        .text("s1", o.s1.to_string())
        .text("s2", o.s2.to_string())
        .count("n", config.n())
        .count("trials", config.trials())
        .text("seed", config.seed().to_string());
}

fn analytic_fields(report: &mut Report, config: &EnvironmentConfig) {
    match analytic_shares(config) {
        Ok(a) => {
            report
                .real("analytic.p_c1", a.p_c1)
                .real("analytic.p_c2", a.p_c2)
                .real("analytic.p_f1", a.p_f1)
                .real("analytic.p_f2", a.p_f2)
                .real("analytic.lambda", a.lambda)
                .real("analytic.target_tau", a.target_tau)
                .text("analytic.ordering", ordering(a.ordering_holds));
        }
        Err(e) => {
            report.text("analytic.error", e.kind());
        }
    }
}

fn ordering(holds: bool) -> &'static str {
    if holds {
        "holds"
    } else {
        "violated"
    }
}

fn summary_fields(report: &mut Report, prefix: &str, s: &EstimatorSummary) {
    report
        .count(&format!("{prefix}.count"), s.count)
        .real(&format!("{prefix}.mean"), s.mean)
        .real(&format!("{prefix}.sd"), s.sd);
    for &(p, v) in &s.quantiles {
        report.real(&format!("{prefix}.q{:02}", (p * 100.0).round() as u32), v);
    }
    report
        .real(&format!("{prefix}.trimmed_mean"), s.trimmed_mean)
        .real(&format!("{prefix}.trimmed_sd"), s.trimmed_sd);
}

fn optional(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

fn trials_csv(summary: &MonteCarloSummary) -> String {
    let mut out = String::from("trial,diiv,overidentified_iv,flagged\n");
    for r in &summary.records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.trial,
            optional(r.diiv),
            optional(r.overidentified_iv),
            u8::from(r.flagged())
        ));
    }
    out
}

fn histogram_csv(summary: &MonteCarloSummary) -> String {
    let h = &summary.histogram;
    let mut out = String::from("bin_lo,bin_hi,diiv,overidentified_iv\n");
    for i in 0..h.diiv_counts.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_real(h.edges[i]),
            fmt_real(h.edges[i + 1]),
            h.diiv_counts[i],
            h.overidentified_counts[i]
        ));
    }
    out
}

/// Analytic shares, weight and target of a config file.
pub fn shares(config_path: &Path) -> Outcome {
    let mut report = Report::new();
    report.text("command", "shares");
    let run = match load_config(config_path) {
        Ok(r) => r,
        Err(e) => return Outcome::failed(report, &e),
    };
    if let Some(p) = run.preset {
        report.text("preset", p.name());
    }
    match analytic_shares(&run.environment) {
        Ok(a) => {
            report
                .real("p_c1", a.p_c1)
                .real("p_c2", a.p_c2)
                .real("p_f1", a.p_f1)
                .real("p_f2", a.p_f2)
                .real("lambda", a.lambda)
                .real("target_tau", a.target_tau)
                .text("ordering", ordering(a.ordering_holds));
            Outcome {
                report,
                exit_code: EXIT_OK,
            }
        }
        Err(e) => Outcome::failed(report, &e.into()),
    }
}

/// Writes `report` to `dir/name` when an output directory was requested.
pub fn persist(report: &Report, dir: Option<&PathBuf>, name: &str) -> CliResult<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_file(&dir.join(name), &report.to_string())?;
    }
    Ok(())
}
