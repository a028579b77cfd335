//! Behavioral-type micro-simulation.
//!
//! Four latent types: always-takers (A), never-takers (N), persuasion-prone
//! units (C) and reactance-prone units (F). C and F take the treatment when
//! the signed responsiveness to their assigned instruments clears an
//! idiosyncratic normal shock:
//!
//! ```text
//! d = 1{ kappa[t][0] z1 + kappa[t][1] z2 - threshold > eta },  eta ~ N(0, sigma^2)
//! ```
//!
//! `kappa` entries already carry the directive sign of each instrument.

mod montecarlo;
mod normal;
mod simulate;

pub use montecarlo::{
    estimate_trial, overidentified_iv, run_monte_carlo, run_monte_carlo_with, EstimatorSummary, Execution, Histogram,
    MonteCarloSummary, TrialRecord, HISTOGRAM_BIN_WIDTH, SUMMARY_QUANTILES,
};
pub use normal::{normal_cdf, normal_interval_mass};
pub use simulate::{realized_shares, simulate_trial, LatentUnit, SimulatedTrial};

use std::fmt;
use std::str::FromStr;

use crate::error::{DiivError, Result};
use crate::table::{DesignMode, DirectedDesign};

/// Shares within which type proportions must sum to one.
const SHARE_SUM_TOLERANCE: f64 = 1e-12;
/// Relevance tolerance for the analytic differential shift.
const RELEVANCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BehavioralType {
    AlwaysTaker,
    NeverTaker,
    PersuasionProne,
    ReactanceProne,
}

impl BehavioralType {
    pub fn code(self) -> char {
        match self {
            BehavioralType::AlwaysTaker => 'A',
            BehavioralType::NeverTaker => 'N',
            BehavioralType::PersuasionProne => 'C',
            BehavioralType::ReactanceProne => 'F',
        }
    }
}

/// Population shares and treatment effects per type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeProfile {
    pub pi_a: f64,
    pub pi_n: f64,
    pub pi_c: f64,
    pub pi_f: f64,
    pub tau_a: f64,
    pub tau_n: f64,
    pub tau_c: f64,
    pub tau_f: f64,
}

impl TypeProfile {
    pub fn validate(&self) -> Result<()> {
        let shares = [self.pi_a, self.pi_n, self.pi_c, self.pi_f];
        if shares.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(DiivError::InvalidInput("type shares must be nonnegative".into()));
        }
        let total: f64 = shares.iter().sum();
        if (total - 1.0).abs() > SHARE_SUM_TOLERANCE {
            return Err(DiivError::InvalidInput(format!("type shares sum to {total}, not 1")));
        }
        let effects = [self.tau_a, self.tau_n, self.tau_c, self.tau_f];
        if effects.iter().any(|t| !t.is_finite()) {
            return Err(DiivError::InvalidInput("treatment effects must be finite".into()));
        }
        Ok(())
    }

    pub fn share(&self, t: BehavioralType) -> f64 {
        match t {
            BehavioralType::AlwaysTaker => self.pi_a,
            BehavioralType::NeverTaker => self.pi_n,
            BehavioralType::PersuasionProne => self.pi_c,
            BehavioralType::ReactanceProne => self.pi_f,
        }
    }

    pub fn effect(&self, t: BehavioralType) -> f64 {
        match t {
            BehavioralType::AlwaysTaker => self.tau_a,
            BehavioralType::NeverTaker => self.tau_n,
            BehavioralType::PersuasionProne => self.tau_c,
            BehavioralType::ReactanceProne => self.tau_f,
        }
    }

    /// 10% always-takers, 10% never-takers, 40% each of C and F;
    /// effects A = 4, C = 3, F = 2, N = 1.
    pub fn reference() -> Self {
        TypeProfile {
            pi_a: 0.1,
            pi_n: 0.1,
            pi_c: 0.4,
            pi_f: 0.4,
            tau_a: 4.0,
            tau_n: 1.0,
            tau_c: 3.0,
            tau_f: 2.0,
        }
    }
}

/// Row index into [`ResponseSpec::kappa`].
pub const KAPPA_C: usize = 0;
pub const KAPPA_F: usize = 1;

/// Signed responsiveness, shock scale, instrument correlation and threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseSpec {
    /// `kappa[type][instrument]`, type 0 = C, 1 = F.
    pub kappa: [[f64; 2]; 2],
    pub sigma: f64,
    /// Loading of `e1` in the latent `e2 = u + rho e1`.
    pub rho: f64,
    pub threshold: f64,
}

impl ResponseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(DiivError::InvalidInput(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.rho.is_finite() && self.rho.abs() < 1.0) {
            return Err(DiivError::InvalidInput(format!(
                "rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        if self.kappa.iter().flatten().any(|k| !k.is_finite()) || !self.threshold.is_finite() {
            return Err(DiivError::InvalidInput("kappa and threshold must be finite".into()));
        }
        Ok(())
    }

    /// Take-up probability change of a type-row when instrument `j` moves
    /// from 0 to 1 with the other instrument at 0.
    pub fn edge_shift(&self, row: usize, j: usize) -> f64 {
        let v = self.threshold;
        let k = self.kappa[row][j];
        // P(k - v > eta) - P(-v > eta), as an interval mass of eta.
        if k >= 0.0 {
            normal_interval_mass(-v, k - v, self.sigma)
        } else {
            -normal_interval_mass(k - v, -v, self.sigma)
        }
    }
}

/// Preset environments: responsiveness asymmetry crossed with shock scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Persuasion-prone more responsive, sigma = 2.
    EnvA,
    /// Reactance-prone more responsive, sigma = 2.
    EnvB,
    /// Persuasion-prone more responsive, sigma = 1.
    EnvC,
    /// Reactance-prone more responsive, sigma = 1.
    EnvD,
}

pub const PRESET_RHO: f64 = -0.45;

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::EnvA, Preset::EnvB, Preset::EnvC, Preset::EnvD];

    pub fn name(self) -> &'static str {
        match self {
            Preset::EnvA => "env-a",
            Preset::EnvB => "env-b",
            Preset::EnvC => "env-c",
            Preset::EnvD => "env-d",
        }
    }

    pub fn response(self) -> ResponseSpec {
        let persuasion = [[2.0, 0.5], [-0.2, -0.5]];
        let reactance = [[0.5, 0.2], [-0.5, -2.0]];
        let (kappa, sigma) = match self {
            Preset::EnvA => (persuasion, 2.0),
            Preset::EnvB => (reactance, 2.0),
            Preset::EnvC => (persuasion, 1.0),
            Preset::EnvD => (reactance, 1.0),
        };
        ResponseSpec {
            kappa,
            sigma,
            rho: PRESET_RHO,
            threshold: 0.0,
        }
    }

    pub fn profile(self) -> TypeProfile {
        TypeProfile::reference()
    }

    /// Joint-design configuration with encouragement orientation.
    pub fn config(self, n: usize, trials: usize, seed: u64) -> EnvironmentConfig {
        EnvironmentConfig::new(
            self.profile(),
            self.response(),
            n,
            trials,
            seed,
            DesignMode::Joint,
            DirectedDesign::encouragements(),
        )
        .expect("preset parameters are valid")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = DiivError;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| DiivError::InvalidInput(format!("unknown preset `{s}`")))
    }
}

/// A full simulation environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentConfig {
    profile: TypeProfile,
    response: ResponseSpec,
    n: usize,
    trials: usize,
    seed: u64,
    design: DesignMode,
    orientation: DirectedDesign,
}

impl EnvironmentConfig {
    pub fn new(
        profile: TypeProfile,
        response: ResponseSpec,
        n: usize,
        trials: usize,
        seed: u64,
        design: DesignMode,
        orientation: DirectedDesign,
    ) -> Result<Self> {
        profile.validate()?;
        response.validate()?;
        if n < 2 {
            return Err(DiivError::InvalidInput(format!("n must be at least 2, got {n}")));
        }
        if trials < 1 {
            return Err(DiivError::InvalidInput("trials must be at least 1".into()));
        }
        Ok(EnvironmentConfig {
            profile,
            response,
            n,
            trials,
            seed,
            design,
            orientation,
        })
    }

    pub fn profile(&self) -> &TypeProfile {
        &self.profile
    }

    pub fn response(&self) -> &ResponseSpec {
        &self.response
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn design(&self) -> DesignMode {
        self.design
    }

    pub fn orientation(&self) -> &DirectedDesign {
        &self.orientation
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_size(mut self, n: usize, trials: usize) -> Result<Self> {
        if n < 2 || trials < 1 {
            return Err(DiivError::InvalidInput("need n >= 2 and trials >= 1".into()));
        }
        self.n = n;
        self.trials = trials;
        Ok(self)
    }

    pub fn with_profile(mut self, profile: TypeProfile) -> Result<Self> {
        profile.validate()?;
        self.profile = profile;
        Ok(self)
    }

    pub fn with_design(mut self, design: DesignMode) -> Self {
        self.design = design;
        self
    }
}

/// Population-level behavioral shares and the implied DIIV target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticShares {
    pub p_c1: f64,
    pub p_c2: f64,
    pub p_f1: f64,
    pub p_f2: f64,
    pub lambda: f64,
    pub target_tau: f64,
    /// `pC1 >= pC2 >= 0 >= -pF2 >= -pF1`: shares nonnegative and opposing.
    pub ordering_holds: bool,
}

/// Shares shifted by each instrument at the `(0,0)` edge, oriented so that a
/// C unit following instrument `j`'s directive counts positively in `pC_j`
/// and an F unit opposing it counts positively in `pF_j`.
pub fn analytic_shares(config: &EnvironmentConfig) -> Result<AnalyticShares> {
    let r = config.response();
    let p = config.profile();
    let s = [config.orientation().s1.value(), config.orientation().s2.value()];
    let pc = |j: usize| s[j] * p.pi_c * r.edge_shift(KAPPA_C, j);
    let pf = |j: usize| -s[j] * p.pi_f * r.edge_shift(KAPPA_F, j);
    let (p_c1, p_c2, p_f1, p_f2) = (pc(0), pc(1), pf(0), pf(1));
    let shift = (p_c1 - p_c2) - (p_f1 - p_f2);
    if shift.is_nan() || shift <= RELEVANCE_TOLERANCE {
        return Err(DiivError::RelevanceViolated { shift });
    }
    let lambda = (p_c1 - p_c2) / shift;
    Ok(AnalyticShares {
        p_c1,
        p_c2,
        p_f1,
        p_f2,
        lambda,
        target_tau: lambda * p.tau_c + (1.0 - lambda) * p.tau_f,
        ordering_holds: p_c1 >= p_c2 && p_c2 >= 0.0 && p_f2 >= p_f1 && p_f1 >= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::Sign;

    #[test]
    fn env_a_matches_reference_shares() {
        let a = analytic_shares(&Preset::EnvA.config(10, 1, 0)).unwrap();
        for (got, want) in [(a.p_c1, 0.137), (a.p_c2, 0.039), (a.p_f1, 0.016), (a.p_f2, 0.039)] {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        assert!((a.lambda - 0.805).abs() < 1e-3);
        assert!((a.target_tau - 2.805).abs() < 1e-3);
        assert!(a.ordering_holds);
    }

    #[test]
    fn env_d_lambda() {
        let a = analytic_shares(&Preset::EnvD.config(10, 1, 0)).unwrap();
        assert!((a.lambda - 0.282).abs() < 1e-3);
    }

    #[test]
    fn zero_kappa_violates_relevance() {
        let mut r = Preset::EnvA.response();
        r.kappa = [[0.0; 2]; 2];
        let cfg = EnvironmentConfig::new(
            TypeProfile::reference(),
            r,
            10,
            1,
            0,
            DesignMode::Joint,
            DirectedDesign::encouragements(),
        )
        .unwrap();
        assert!(matches!(
            analytic_shares(&cfg),
            Err(DiivError::RelevanceViolated { .. })
        ));
    }

    #[test]
    fn discouraging_frame_keeps_lambda() {
        // Negating the second instrument's responsiveness and its directive
        // describes the same behavior.
        let mut r = Preset::EnvA.response();
        r.kappa[KAPPA_C][1] = -r.kappa[KAPPA_C][1];
        r.kappa[KAPPA_F][1] = -r.kappa[KAPPA_F][1];
        let cfg = EnvironmentConfig::new(
            TypeProfile::reference(),
            r,
            10,
            1,
            0,
            DesignMode::Joint,
            DirectedDesign::new(Sign::Plus, Sign::Minus),
        )
        .unwrap();
        let flipped = analytic_shares(&cfg).unwrap();
        let base = analytic_shares(&Preset::EnvA.config(10, 1, 0)).unwrap();
        assert!((flipped.lambda - base.lambda).abs() < 1e-15);
        assert!(flipped.ordering_holds);
    }

    #[test]
    fn invalid_configs() {
        let bad = TypeProfile {
            pi_a: 0.5,
            ..TypeProfile::reference()
        };
        assert!(bad.validate().is_err());
        let mut r = Preset::EnvA.response();
        r.sigma = 0.0;
        assert!(r.validate().is_err());
        let cfg = EnvironmentConfig::new(
            TypeProfile::reference(),
            Preset::EnvA.response(),
            1,
            1,
            0,
            DesignMode::Joint,
            DirectedDesign::encouragements(),
        );
        assert!(cfg.is_err());
    }

    #[test]
    fn preset_names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("env-e".parse::<Preset>().is_err());
    }
}
