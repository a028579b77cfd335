//! Least squares and two-stage least squares.
//!
//! The DIIV ratio has two just-identified 2SLS forms:
//!
//! * parallel layout: instrument `w = 1 - (z XOR h)` with the frame `h` as a
//!   control;
//! * joint layout: instrument `x_delta = a1 - a2` on the aligned instruments,
//!   controlling for `x_sigma = a1 + a2` and `x_cross = a1 a2`.
//!
//! Both are built on [`two_stage_least_squares`], which factorizes with a
//! column-pivoted QR and reports classical or HC1 standard errors.

mod qr;

pub use qr::{PivotedQr, RANK_TOLERANCE};

use std::fmt;
use std::str::FromStr;

use crate::error::{DiivError, Result, Warning};
use crate::estimand::{align_instrument, aligned_cells, edge_contrasts, DATA_TOLERANCE};
use crate::table::{BinaryColumn, DesignMode, DirectedDesign, Instrument, ObservationTable};

/// First-stage F below which a report carries [`Warning::WeakContrast`].
pub const WEAK_CONTRAST_F: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeKind {
    Classical,
    /// HC1 sandwich with `n / (n - k)` scaling.
    #[default]
    Robust,
}

impl SeKind {
    pub fn tag(self) -> &'static str {
        match self {
            SeKind::Classical => "classical",
            SeKind::Robust => "robust-HC1",
        }
    }
}

impl fmt::Display for SeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SeKind {
    type Err = DiivError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "classical" => Ok(SeKind::Classical),
            "robust" | "hc1" | "robust-HC1" => Ok(SeKind::Robust),
            other => Err(DiivError::InvalidInput(format!(
                "standard errors must be `classical` or `robust`, got `{other}`"
            ))),
        }
    }
}

pub type NamedColumn = (String, Vec<f64>);

/// Response plus named regressors (the intercept is an explicit column).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    response: Vec<f64>,
    regressors: Vec<NamedColumn>,
}

impl DesignMatrix {
    pub fn new(response: Vec<f64>, regressors: Vec<NamedColumn>) -> Result<Self> {
        let n = response.len();
        for (name, col) in &regressors {
            if col.len() != n {
                return Err(DiivError::LengthMismatch {
                    column: name.clone(),
                    expected: n,
                    found: col.len(),
                });
            }
        }
        if regressors.is_empty() {
            return Err(DiivError::InvalidInput("design has no regressors".into()));
        }
        if n <= regressors.len() {
            return Err(DiivError::InvalidInput(format!(
                "need more rows ({n}) than regressors ({})",
                regressors.len()
            )));
        }
        Ok(DesignMatrix { response, regressors })
    }

    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn k(&self) -> usize {
        self.regressors.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.regressors.iter().map(|(n, _)| n.clone()).collect()
    }
}

pub fn intercept(n: usize) -> NamedColumn {
    ("const".to_string(), vec![1.0; n])
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Row-major `k x k`.
    pub covariance: Vec<f64>,
    pub se_kind: SeKind,
}

impl OlsFit {
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn se(&self, index: usize) -> f64 {
        self.covariance[index * self.k() + index].max(0.0).sqrt()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Ordinary least squares with classical or HC1 covariance.
pub fn ols_fit(design: &DesignMatrix, se_kind: SeKind) -> Result<OlsFit> {
    let columns: Vec<Vec<f64>> = design.regressors.iter().map(|(_, c)| c.clone()).collect();
    let qr = PivotedQr::new(&columns)?;
    let coefficients = qr.solve(&design.response)?;
    let residuals = residuals(&design.response, &columns, &coefficients);
    let covariance = covariance(&qr, &columns, &residuals, se_kind);
    Ok(OlsFit {
        names: design.names(),
        coefficients,
        residuals,
        covariance,
        se_kind,
    })
}

fn residuals(response: &[f64], columns: &[Vec<f64>], coefficients: &[f64]) -> Vec<f64> {
    (0..response.len())
        .map(|i| {
            let fit: f64 = columns.iter().zip(coefficients).map(|(c, b)| c[i] * b).sum();
            response[i] - fit
        })
        .collect()
}

/// Coefficient covariance from the QR of the (second-stage) regressors and
/// the structural residuals.
fn covariance(qr: &PivotedQr, columns: &[Vec<f64>], residuals: &[f64], se_kind: SeKind) -> Vec<f64> {
    let n = residuals.len();
    let k = columns.len();
    let bread = qr.gram_inverse();
    let dof = (n - k) as f64;
    match se_kind {
        SeKind::Classical => {
            let s2 = residuals.iter().map(|u| u * u).sum::<f64>() / dof;
            bread.iter().map(|v| v * s2).collect()
        }
        SeKind::Robust => {
            let mut meat = vec![0.0; k * k];
            for a in 0..k {
                for b in a..k {
                    let v: f64 = (0..n)
                        .map(|i| columns[a][i] * columns[b][i] * residuals[i] * residuals[i])
                        .sum();
                    meat[a * k + b] = v;
                    meat[b * k + a] = v;
                }
            }
            let scale = n as f64 / dof;
            let left = matmul(&bread, &meat, k);
            let mut out = matmul(&left, &bread, k);
            for a in 0..k {
                for b in a..k {
                    let v = 0.5 * (out[a * k + b] + out[b * k + a]) * scale;
                    out[a * k + b] = v;
                    out[b * k + a] = v;
                }
            }
            out
        }
    }
}

fn matmul(a: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            out[i * k + j] = (0..k).map(|m| a[i * k + m] * b[m * k + j]).sum();
        }
    }
    out
}

/// Single endogenous regressor with exogenous controls and excluded instruments.
#[derive(Debug, Clone, PartialEq)]
pub struct IvSystem {
    pub response: Vec<f64>,
    pub endogenous: NamedColumn,
    /// Included exogenous regressors, intercept included.
    pub exogenous: Vec<NamedColumn>,
    pub instruments: Vec<NamedColumn>,
}

/// First-stage coefficient of a single excluded instrument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstStage {
    pub beta: f64,
    pub se_classical: f64,
    pub se_robust: f64,
}

impl FirstStage {
    pub fn f(&self, se_kind: SeKind) -> f64 {
        let se = match se_kind {
            SeKind::Classical => self.se_classical,
            SeKind::Robust => self.se_robust,
        };
        (self.beta / se).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvFit {
    /// Exogenous names followed by the endogenous name.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: Vec<f64>,
    pub se_kind: SeKind,
    pub n: usize,
    /// Present when exactly one instrument is excluded.
    pub first_stage: Option<FirstStage>,
}

impl IvFit {
    /// Coefficient on the endogenous regressor.
    pub fn tau(&self) -> f64 {
        *self.coefficients.last().expect("fit has coefficients")
    }

    pub fn tau_se(&self) -> f64 {
        let k = self.coefficients.len();
        self.covariance[k * k - 1].max(0.0).sqrt()
    }
}

/// Two-stage least squares. Standard errors use the structural residuals
/// `y - [X, d] b`, not the second-stage residuals on the fitted take-up.
pub fn two_stage_least_squares(system: &IvSystem, se_kind: SeKind) -> Result<IvFit> {
    let n = system.response.len();
    if system.instruments.is_empty() {
        return Err(DiivError::InvalidInput("no excluded instruments".into()));
    }
    let mut first_cols: Vec<NamedColumn> = system.exogenous.clone();
    first_cols.extend(system.instruments.iter().cloned());
    let first_design = DesignMatrix::new(system.endogenous.1.clone(), first_cols)?;
    let first_cols_only: Vec<Vec<f64>> = first_design.regressors.iter().map(|(_, c)| c.clone()).collect();
    let first_qr = PivotedQr::new(&first_cols_only)?;
    let gamma = first_qr.solve(&system.endogenous.1)?;
    let first_resid = residuals(&system.endogenous.1, &first_cols_only, &gamma);
    let fitted: Vec<f64> = system
        .endogenous
        .1
        .iter()
        .zip(&first_resid)
        .map(|(d, e)| d - e)
        .collect();

    let first_stage = if system.instruments.len() == 1 {
        let idx = first_cols_only.len() - 1;
        let kf = first_cols_only.len();
        let classical = covariance(&first_qr, &first_cols_only, &first_resid, SeKind::Classical);
        let robust = covariance(&first_qr, &first_cols_only, &first_resid, SeKind::Robust);
        Some(FirstStage {
            beta: gamma[idx],
            se_classical: classical[idx * kf + idx].max(0.0).sqrt(),
            se_robust: robust[idx * kf + idx].max(0.0).sqrt(),
        })
    } else {
        None
    };
    if let Some(fs) = first_stage {
        // Just identified: the 2SLS coefficient is a ratio over this beta.
        if fs.beta.is_nan() || fs.beta.abs() <= DATA_TOLERANCE {
            return Err(DiivError::ZeroDenominator {
                denominator: fs.beta,
                tolerance: DATA_TOLERANCE,
            });
        }
    }

    let mut second: Vec<Vec<f64>> = system.exogenous.iter().map(|(_, c)| c.clone()).collect();
    second.push(fitted);
    let second_qr = PivotedQr::new(&second)?;
    let coefficients = second_qr.solve(&system.response)?;

    let mut structural: Vec<Vec<f64>> = system.exogenous.iter().map(|(_, c)| c.clone()).collect();
    structural.push(system.endogenous.1.clone());
    let u = residuals(&system.response, &structural, &coefficients);
    let covariance = covariance(&second_qr, &second, &u, se_kind);

    let mut names: Vec<String> = system.exogenous.iter().map(|(n, _)| n.clone()).collect();
    names.push(system.endogenous.0.clone());
    Ok(IvFit {
        names,
        coefficients,
        covariance,
        se_kind,
        n,
        first_stage,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoStageMethod {
    ParallelXor,
    JointDelta,
}

impl TwoStageMethod {
    pub fn tag(self) -> &'static str {
        match self {
            TwoStageMethod::ParallelXor => "parallel-xor",
            TwoStageMethod::JointDelta => "joint-delta",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageReport {
    pub tau: f64,
    pub se: f64,
    pub first_stage_beta: f64,
    /// Squared t of the first-stage coefficient under `se_kind`.
    pub first_stage_f: f64,
    pub first_stage_f_classical: f64,
    pub first_stage_f_robust: f64,
    pub n: usize,
    pub se_kind: SeKind,
    pub method: TwoStageMethod,
    /// Whether `x_cross` entered the joint specification.
    pub cross_included: bool,
    pub warnings: Vec<Warning>,
}

fn report(fit: &IvFit, method: TwoStageMethod, cross_included: bool, mut warnings: Vec<Warning>) -> TwoStageReport {
    let fs = fit.first_stage.expect("just-identified system");
    let first_stage_f = fs.f(fit.se_kind);
    if first_stage_f < WEAK_CONTRAST_F {
        warnings.push(Warning::WeakContrast { first_stage_f });
    }
    TwoStageReport {
        tau: fit.tau(),
        se: fit.tau_se(),
        first_stage_beta: fs.beta,
        first_stage_f,
        first_stage_f_classical: fs.f(SeKind::Classical),
        first_stage_f_robust: fs.f(SeKind::Robust),
        n: fit.n,
        se_kind: fit.se_kind,
        method,
        cross_included,
        warnings,
    }
}

fn covariate_columns(table: &ObservationTable, covariates: &[&str]) -> Result<Vec<NamedColumn>> {
    covariates
        .iter()
        .map(|&name| Ok((name.to_string(), table.covariate(name)?.to_vec())))
        .collect()
}

/// `w = 1` where the pooled assignment agrees with the frame: `1 - (z XOR h)`.
pub fn composite_xor_instrument(z_pool: &BinaryColumn, h: &BinaryColumn) -> Result<BinaryColumn> {
    if z_pool.len() != h.len() {
        return Err(DiivError::LengthMismatch {
            column: "h".into(),
            expected: z_pool.len(),
            found: h.len(),
        });
    }
    Ok(BinaryColumn::from_bools(
        z_pool.iter().zip(h.iter()).map(|(z, h)| (z ^ h) == 0),
    ))
}

/// XOR-instrument 2SLS for a parallel-design table: first stage
/// `d ~ 1 + w + h (+ covariates)`, second stage `y ~ 1 + d_hat + h (+ covariates)`.
///
/// Matches the cell-mean DIIV ratio when both frames carry the same
/// assignment variance `n_j p_j (1 - p_j)`; otherwise the report carries
/// [`Warning::UnbalancedFrames`].
pub fn two_stage_parallel(table: &ObservationTable, se_kind: SeKind, covariates: &[&str]) -> Result<TwoStageReport> {
    let h = table.require_h()?;
    let c1 = edge_contrasts(table, Instrument::First, DesignMode::Parallel)?;
    let c2 = edge_contrasts(table, Instrument::Second, DesignMode::Parallel)?;
    let mut warnings = Vec::new();
    let weight = |c: &crate::estimand::EdgeContrast| {
        let (t, u) = c.entering_counts();
        (t * u) as f64 / (t + u) as f64
    };
    let (w1, w2) = (weight(&c1), weight(&c2));
    if (w1 - w2).abs() > 1e-12 * w1.max(w2) {
        warnings.push(Warning::UnbalancedFrames);
    }

    let n = table.n();
    let w = composite_xor_instrument(table.z1(), h)?;
    let mut exogenous = vec![intercept(n), ("h".to_string(), h.to_reals())];
    exogenous.extend(covariate_columns(table, covariates)?);
    let system = IvSystem {
        response: table.y().to_vec(),
        endogenous: ("d".to_string(), table.d().to_reals()),
        exogenous,
        instruments: vec![("w".to_string(), w.to_reals())],
    };
    let fit = two_stage_least_squares(&system, se_kind)?;
    Ok(report(&fit, TwoStageMethod::ParallelXor, false, warnings))
}

/// Regressors built from the aligned instruments `a1`, `a2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedRegressors {
    /// `a1 - a2`
    pub x_delta: Vec<i8>,
    /// `a1 + a2`
    pub x_sigma: Vec<u8>,
    /// `a1 * a2`
    pub x_cross: BinaryColumn,
}

pub fn derived_regressors(z1: &BinaryColumn, z2: &BinaryColumn, design: &DirectedDesign) -> Result<DerivedRegressors> {
    if z1.len() != z2.len() {
        return Err(DiivError::LengthMismatch {
            column: "z2".into(),
            expected: z1.len(),
            found: z2.len(),
        });
    }
    let a1 = align_instrument(z1, design.s1);
    let a2 = align_instrument(z2, design.s2);
    let pairs = || a1.iter().zip(a2.iter());
    Ok(DerivedRegressors {
        x_delta: pairs().map(|(a, b)| a as i8 - b as i8).collect(),
        x_sigma: pairs().map(|(a, b)| a + b).collect(),
        x_cross: BinaryColumn::from_bools(pairs().map(|(a, b)| a == 1 && b == 1)),
    })
}

/// Whether `x_cross` enters the joint specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossTerm {
    /// Included unless the aligned `(1,1)` cell is empty.
    #[default]
    Auto,
    Drop,
}

/// Difference-instrument 2SLS for a joint-design table: instrument `x_delta`,
/// controls `x_sigma`, `x_cross` (and covariates).
pub fn two_stage_joint(
    table: &ObservationTable,
    design: &DirectedDesign,
    se_kind: SeKind,
    covariates: &[&str],
    cross: CrossTerm,
) -> Result<TwoStageReport> {
    let z2 = table.require_z2()?;
    let cells = aligned_cells(table, design)?;
    let derived = derived_regressors(table.z1(), z2, design)?;
    let include_cross = cross == CrossTerm::Auto && cells.counts[1][1] > 0;

    let n = table.n();
    let mut exogenous = vec![
        intercept(n),
        (
            "x_sigma".to_string(),
            derived.x_sigma.iter().map(|&v| f64::from(v)).collect(),
        ),
    ];
    if include_cross {
        exogenous.push(("x_cross".to_string(), derived.x_cross.to_reals()));
    }
    exogenous.extend(covariate_columns(table, covariates)?);
    let system = IvSystem {
        response: table.y().to_vec(),
        endogenous: ("d".to_string(), table.d().to_reals()),
        exogenous,
        instruments: vec![(
            "x_delta".to_string(),
            derived.x_delta.iter().map(|&v| f64::from(v)).collect(),
        )],
    };
    let fit = two_stage_least_squares(&system, se_kind)?;
    Ok(report(&fit, TwoStageMethod::JointDelta, include_cross, Vec::new()))
}
