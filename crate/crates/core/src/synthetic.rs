//! Random observation tables for exercising the estimator identities.
//!
//! Unlike [`crate::microsim`], these tables have no behavioral model behind
//! them: outcomes and take-up are arbitrary, only the cell structure is
//! controlled.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::table::{BinaryColumn, ObservationTable};

/// Parallel-design table with `2 * (treated + control)` rows in shuffled
/// order. Both frames share the same treated/control split, so their
/// assignment variances agree.
pub fn balanced_parallel_table<R: Rng>(rng: &mut R, treated: usize, control: usize) -> ObservationTable {
    let mut rows: Vec<(u8, u8)> = Vec::new();
    for h in [1u8, 0u8] {
        rows.extend(std::iter::repeat_n((1, h), treated));
        rows.extend(std::iter::repeat_n((0, h), control));
    }
    rows.shuffle(rng);
    let take_up = [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
    let shift = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
    let effect: f64 = rng.random_range(-3.0..3.0);

    let mut y = Vec::with_capacity(rows.len());
    let mut d = Vec::with_capacity(rows.len());
    for &(z, h) in &rows {
        let p: f64 = (take_up[h as usize] + shift[h as usize] * f64::from(z)).clamp(0.02, 0.98);
        let took = rng.random::<f64>() < p;
        let noise: f64 = rng.sample(StandardNormal);
        y.push(effect * f64::from(u8::from(took)) + 0.5 * f64::from(h) + noise);
        d.push(u8::from(took));
    }
    let (z, h): (Vec<u8>, Vec<u8>) = rows.into_iter().unzip();
    ObservationTable::parallel(
        y,
        BinaryColumn::from_bits("d", d).expect("binary"),
        BinaryColumn::from_bits("z1", z).expect("binary"),
        BinaryColumn::from_bits("h", h).expect("binary"),
    )
    .expect("consistent columns")
}

/// Joint-design table of `n` rows where every raw `(z1, z2)` cell holds at
/// least `min_cell` rows, except the cell named by `forced_empty`, which
/// stays empty.
pub fn joint_table<R: Rng>(rng: &mut R, n: usize, min_cell: usize, forced_empty: Option<(u8, u8)>) -> ObservationTable {
    let cells: Vec<(u8, u8)> = [(0, 0), (1, 0), (0, 1), (1, 1)]
        .into_iter()
        .filter(|c| Some(*c) != forced_empty)
        .collect();
    let mut rows: Vec<(u8, u8)> = Vec::with_capacity(n);
    for &c in &cells {
        rows.extend(std::iter::repeat_n(c, min_cell));
    }
    while rows.len() < n {
        rows.push(cells[rng.random_range(0..cells.len())]);
    }
    rows.shuffle(rng);

    let base: f64 = rng.random_range(0.2..0.8);
    let k1: f64 = rng.random_range(-0.4..0.4);
    let k2: f64 = rng.random_range(-0.4..0.4);
    let effect: f64 = rng.random_range(-3.0..3.0);
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for &(a, b) in &rows {
        let p = (base + k1 * f64::from(a) + k2 * f64::from(b)).clamp(0.02, 0.98);
        let took = rng.random::<f64>() < p;
        let noise: f64 = rng.sample(StandardNormal);
        y.push(effect * f64::from(u8::from(took)) + 0.3 * f64::from(a) - 0.2 * f64::from(b) + noise);
        d.push(u8::from(took));
    }
    let (z1, z2): (Vec<u8>, Vec<u8>) = rows.into_iter().unzip();
    ObservationTable::joint(
        y,
        BinaryColumn::from_bits("d", d).expect("binary"),
        BinaryColumn::from_bits("z1", z1).expect("binary"),
        BinaryColumn::from_bits("z2", z2).expect("binary"),
    )
    .expect("consistent columns")
}

/// Finite population with known types and deterministic take-up, observed
/// once in each of the `(0,0)`, `(1,0)` and `(0,1)` assignment cells.
///
/// Persuasion-prone units start untreated and the first `c_moved[j]` of them
/// take up when instrument `j` switches on. Reactance-prone units start
/// treated and the first `f_moved[j]` of them drop out.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicPopulation {
    /// Unit counts of always-takers, never-takers, C and F types.
    pub counts: [usize; 4],
    pub c_moved: [usize; 2],
    pub f_moved: [usize; 2],
    /// Effects `(tau_A, tau_N, tau_C, tau_F)`.
    pub effects: [f64; 4],
    /// Untreated outcome of unit `i` is `baseline[i % baseline.len()]`.
    pub baseline: Vec<f64>,
}

impl DeterministicPopulation {
    pub fn size(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Shares `[pC1, pC2, pF1, pF2]` of units moved by each instrument.
    pub fn shares(&self) -> [f64; 4] {
        let n = self.size() as f64;
        [self.c_moved[0], self.c_moved[1], self.f_moved[0], self.f_moved[1]].map(|k| k as f64 / n)
    }

    /// Take-up and effect of unit `i` in the given cell.
    fn unit(&self, i: usize, z1: u8, z2: u8) -> (u8, f64) {
        let [a, n, c, _] = self.counts;
        let on = |j: usize| [z1, z2][j] == 1;
        if i < a {
            (1, self.effects[0])
        } else if i < a + n {
            (0, self.effects[1])
        } else if i < a + n + c {
            let rank = i - a - n;
            let moved = (0..2).any(|j| on(j) && rank < self.c_moved[j]);
            (u8::from(moved), self.effects[2])
        } else {
            let rank = i - a - n - c;
            let moved = (0..2).any(|j| on(j) && rank < self.f_moved[j]);
            (u8::from(!moved), self.effects[3])
        }
    }

    /// Joint-design table holding every unit in each of the three edge cells.
    pub fn table(&self) -> ObservationTable {
        let mut y = Vec::new();
        let mut d = Vec::new();
        let mut z1 = Vec::new();
        let mut z2 = Vec::new();
        for (a, b) in [(0u8, 0u8), (1, 0), (0, 1)] {
            for i in 0..self.size() {
                let (took, effect) = self.unit(i, a, b);
                y.push(self.baseline[i % self.baseline.len()] + effect * f64::from(took));
                d.push(took);
                z1.push(a);
                z2.push(b);
            }
        }
        ObservationTable::joint(
            y,
            BinaryColumn::from_bits("d", d).expect("binary"),
            BinaryColumn::from_bits("z1", z1).expect("binary"),
            BinaryColumn::from_bits("z2", z2).expect("binary"),
        )
        .expect("consistent columns")
    }

    /// Every population of `size` units with the given effects and baseline
    /// outcomes: all type counts and all numbers of moved C and F units.
    pub fn enumerate(size: usize, effects: [f64; 4], baseline: &[f64]) -> Vec<DeterministicPopulation> {
        let mut out = Vec::new();
        for a in 0..=size {
            for n in 0..=size - a {
                for c in 0..=size - a - n {
                    let f = size - a - n - c;
                    for c1 in 0..=c {
                        for c2 in 0..=c {
                            for f1 in 0..=f {
                                for f2 in 0..=f {
                                    out.push(DeterministicPopulation {
                                        counts: [a, n, c, f],
                                        c_moved: [c1, c2],
                                        f_moved: [f1, f2],
                                        effects,
                                        baseline: baseline.to_vec(),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
