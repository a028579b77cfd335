//! Flat `key = value` run configuration.
//!
//! ```text
//! # environment (a) with a larger sample
//! preset = env-a
//! n = 20000
//! trials = 200
//! seed = 7
//! ```
//!
//! Without a preset, `shares.pi_*`, `kappa.*`, `sigma` and `rho` are
//! required; `effects.tau_*` default to (4, 1, 3, 2) and `threshold` to 0.
//! A preset fixes the behavioral block, so those keys are rejected next to it.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use diiv_core::microsim::{EnvironmentConfig, Preset, ResponseSpec, TypeProfile, KAPPA_C, KAPPA_F};
use diiv_core::{DesignMode, DirectedDesign, Sign};

use crate::error::{CliError, CliResult};

pub const DEFAULT_N: usize = 10_000;
pub const DEFAULT_TRIALS: usize = 1_000;
pub const DEFAULT_SEED: u64 = 0;

const SHARE_KEYS: [&str; 4] = ["shares.pi_A", "shares.pi_N", "shares.pi_C", "shares.pi_F"];
const EFFECT_KEYS: [&str; 4] = ["effects.tau_A", "effects.tau_N", "effects.tau_C", "effects.tau_F"];
const KAPPA_KEYS: [&str; 4] = ["kappa.C1", "kappa.C2", "kappa.F1", "kappa.F2"];
/// Keys a preset defines.
const BEHAVIORAL_KEYS: [&str; 3] = ["sigma", "rho", "threshold"];
const RUN_KEYS: [&str; 7] = ["preset", "design", "s1", "s2", "n", "trials", "seed"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub environment: EnvironmentConfig,
}

struct Entries {
    values: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.values.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn parse<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| CliError::Config {
                line,
                message: format!("`{key}`: {e}"),
            }),
        }
    }

    fn required_real(&self, key: &str) -> CliResult<f64> {
        self.parse::<f64>(key)?
            .ok_or_else(|| CliError::MissingKey(key.to_string()))
    }
}

fn is_behavioral(key: &str) -> bool {
    SHARE_KEYS.contains(&key)
        || EFFECT_KEYS.contains(&key)
        || KAPPA_KEYS.contains(&key)
        || BEHAVIORAL_KEYS.contains(&key)
}

fn tokenize(text: &str) -> CliResult<Entries> {
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(CliError::Config {
                line,
                message: format!("expected `key = value`, found `{content}`"),
            });
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !is_behavioral(&k) && !RUN_KEYS.contains(&k.as_str()) {
            return Err(CliError::Config {
                line,
                message: format!("unknown key `{k}`"),
            });
        }
        if values.insert(k.clone(), (v, line)).is_some() {
            return Err(CliError::Config {
                line,
                message: format!("duplicate key `{k}`"),
            });
        }
    }
    Ok(Entries { values })
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let entries = tokenize(text)?;
    let preset = entries.parse::<Preset>("preset")?;

    let (profile, response) = match preset {
        Some(p) => {
            if let Some((key, (_, line))) = entries.values.iter().find(|(k, _)| is_behavioral(k)) {
                return Err(CliError::Config {
                    line: *line,
                    message: format!("`{key}` cannot be combined with `preset`"),
                });
            }
            (p.profile(), p.response())
        }
        None => explicit_environment(&entries)?,
    };

    let design = entries.parse::<DesignMode>("design")?.unwrap_or(DesignMode::Joint);
    let s1 = entries.parse::<Sign>("s1")?.unwrap_or(Sign::Plus);
    let s2 = entries.parse::<Sign>("s2")?.unwrap_or(Sign::Plus);
    let n = entries.parse::<usize>("n")?.unwrap_or(DEFAULT_N);
    let trials = entries.parse::<usize>("trials")?.unwrap_or(DEFAULT_TRIALS);
    let seed = entries.parse::<u64>("seed")?.unwrap_or(DEFAULT_SEED);

    let environment = EnvironmentConfig::new(profile, response, n, trials, seed, design, DirectedDesign::new(s1, s2))?;
    Ok(RunConfig { preset, environment })
}

fn explicit_environment(entries: &Entries) -> CliResult<(TypeProfile, ResponseSpec)> {
    let share = |i: usize| entries.required_real(SHARE_KEYS[i]);
    let reference = TypeProfile::reference();
    let default_effects = [reference.tau_a, reference.tau_n, reference.tau_c, reference.tau_f];
    let mut effects = default_effects;
    for (slot, key) in effects.iter_mut().zip(EFFECT_KEYS) {
        if let Some(v) = entries.parse::<f64>(key)? {
            *slot = v;
        }
    }
    let profile = TypeProfile {
        pi_a: share(0)?,
        pi_n: share(1)?,
        pi_c: share(2)?,
        pi_f: share(3)?,
        tau_a: effects[0],
        tau_n: effects[1],
        tau_c: effects[2],
        tau_f: effects[3],
    };
    let k = |i: usize| entries.required_real(KAPPA_KEYS[i]);
    let mut kappa = [[0.0; 2]; 2];
    kappa[KAPPA_C] = [k(0)?, k(1)?];
    kappa[KAPPA_F] = [k(2)?, k(3)?];
    let response = ResponseSpec {
        kappa,
        sigma: entries.required_real("sigma")?,
        rho: entries.required_real("rho")?,
        threshold: entries.parse::<f64>("threshold")?.unwrap_or(0.0),
    };
    Ok((profile, response))
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}
