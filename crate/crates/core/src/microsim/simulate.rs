use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{BehavioralType, EnvironmentConfig, ResponseSpec, KAPPA_C, KAPPA_F};
use crate::table::{BinaryColumn, DesignMode, ObservationTable};

/// Latent record of one simulated unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentUnit {
    pub kind: BehavioralType,
    pub eta: f64,
    pub y0: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrial {
    pub trial: u64,
    pub table: ObservationTable,
    pub latent: Vec<LatentUnit>,
}

/// Generator for trial `trial`: ChaCha8 keyed by the master seed, with the
/// trial index selecting the stream. Each trial is reproducible in isolation.
fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn take_up(kind: BehavioralType, response: &ResponseSpec, z1: u8, z2: u8, eta: f64) -> bool {
    let row = match kind {
        BehavioralType::AlwaysTaker => return true,
        BehavioralType::NeverTaker => return false,
        BehavioralType::PersuasionProne => KAPPA_C,
        BehavioralType::ReactanceProne => KAPPA_F,
    };
    let index = response.kappa[row][0] * f64::from(z1) + response.kappa[row][1] * f64::from(z2);
    index - response.threshold > eta
}

/// Draws one trial.
///
/// Per unit, in this order: the instrument draws (joint: `e1`, `u`; parallel:
/// frame `h` then assignment, both fair coins), a uniform type draw, the
/// shock `eta ~ N(0, sigma^2)` and the outcome noise `eps ~ N(0, 1)`.
/// Potential outcomes are `Y(0) = eps`, `Y(1) = tau_type + eps`.
pub fn simulate_trial(config: &EnvironmentConfig, trial: u64) -> SimulatedTrial {
    let mut rng = trial_rng(config.seed(), trial);
    let n = config.n();
    let p = config.profile();
    let r = config.response();
    let cuts = [p.pi_a, p.pi_a + p.pi_n, p.pi_a + p.pi_n + p.pi_c];

    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut z1 = Vec::with_capacity(n);
    let mut second = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);

    for _ in 0..n {
        // In parallel mode `second` holds the frame h; a unit in frame 1
        // (h = 1) sees only instrument 1.
        let (a, b, exposure) = match config.design() {
            DesignMode::Joint => {
                let e1: f64 = rng.sample(StandardNormal);
                let u: f64 = rng.sample(StandardNormal);
                let e2 = u + r.rho * e1;
                let (a, b) = (u8::from(e1 > 0.0), u8::from(e2 > 0.0));
                (a, b, (a, b))
            }
            DesignMode::Parallel => {
                let h = u8::from(rng.random::<f64>() < 0.5);
                let z = u8::from(rng.random::<f64>() < 0.5);
                let exposure = if h == 1 { (z, 0) } else { (0, z) };
                (z, h, exposure)
            }
        };
        let draw: f64 = rng.random();
        let kind = if draw < cuts[0] {
            BehavioralType::AlwaysTaker
        } else if draw < cuts[1] {
            BehavioralType::NeverTaker
        } else if draw < cuts[2] {
            BehavioralType::PersuasionProne
        } else {
            BehavioralType::ReactanceProne
        };
        let eta = r.sigma * rng.sample::<f64, _>(StandardNormal);
        let eps: f64 = rng.sample(StandardNormal);
        let (y0, y1) = (eps, p.effect(kind) + eps);

        let took = take_up(kind, r, exposure.0, exposure.1, eta);
        y.push(if took { y1 } else { y0 });
        d.push(u8::from(took));
        z1.push(a);
        second.push(b);
        latent.push(LatentUnit { kind, eta, y0, y1 });
    }

    let d = BinaryColumn::from_bits("d", d).expect("binary");
    let z1 = BinaryColumn::from_bits("z1", z1).expect("binary");
    let second = BinaryColumn::from_bits("z2", second).expect("binary");
    let table = match config.design() {
        DesignMode::Joint => ObservationTable::joint(y, d, z1, second),
        DesignMode::Parallel => ObservationTable::parallel(y, d, z1, second),
    }
    .expect("simulated columns have equal length");
    SimulatedTrial { trial, table, latent }
}

/// Realized oriented edge shares `[pC1, pC2, pF1, pF2]`: the fraction of all
/// units whose latent take-up moves with (C) or against (F) each
/// instrument's directive when it switches on from the `(0,0)` baseline.
pub fn realized_shares(config: &EnvironmentConfig, sim: &SimulatedTrial) -> [f64; 4] {
    let r = config.response();
    let s = [config.orientation().s1.value(), config.orientation().s2.value()];
    let mut counts = [0.0_f64; 4];
    for unit in &sim.latent {
        let (slot, sign) = match unit.kind {
            BehavioralType::PersuasionProne => (0, 1.0),
            BehavioralType::ReactanceProne => (2, -1.0),
            _ => continue,
        };
        let base = f64::from(u8::from(take_up(unit.kind, r, 0, 0, unit.eta)));
        let on1 = f64::from(u8::from(take_up(unit.kind, r, 1, 0, unit.eta)));
        let on2 = f64::from(u8::from(take_up(unit.kind, r, 0, 1, unit.eta)));
        counts[slot] += sign * s[0] * (on1 - base);
        counts[slot + 1] += sign * s[1] * (on2 - base);
    }
    let n = sim.latent.len() as f64;
    counts.map(|c| c / n)
}
