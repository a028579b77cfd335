//! Observation tables and the directed two-instrument design.

use std::fmt;
use std::str::FromStr;

use crate::error::{DiivError, Result};

/// A 0/1 column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryColumn(Vec<u8>);

impl BinaryColumn {
    /// Validates real-valued entries; anything other than exactly 0 or 1 is rejected.
    pub fn from_reals(name: &str, values: &[f64]) -> Result<Self> {
        values
            .iter()
            .enumerate()
            .map(|(row, &v)| {
                if v == 0.0 {
                    Ok(0)
                } else if v == 1.0 {
                    Ok(1)
                } else {
                    Err(DiivError::NonBinary {
                        column: name.to_string(),
                        row,
                        value: v,
                    })
                }
            })
            .collect::<Result<Vec<u8>>>()
            .map(BinaryColumn)
    }

    pub fn from_bits(name: &str, bits: Vec<u8>) -> Result<Self> {
        if let Some((row, &v)) = bits.iter().enumerate().find(|(_, &b)| b > 1) {
            return Err(DiivError::NonBinary {
                column: name.to_string(),
                row,
                value: f64::from(v),
            });
        }
        Ok(BinaryColumn(bits))
    }

    pub fn from_bools<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        BinaryColumn(bits.into_iter().map(u8::from).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, row: usize) -> u8 {
        self.0[row]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().copied()
    }

    pub fn to_reals(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }

    pub fn is_constant(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

/// Directive orientation of an instrument: encouragement (+1) or discouragement (-1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Sign {
    #[default]
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn from_int(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(DiivError::InvalidInput(format!(
                "orientation must be +1 or -1, got {other}"
            ))),
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+1",
            Sign::Minus => "-1",
        })
    }
}

impl FromStr for Sign {
    type Err = DiivError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+1" | "1" | "+" => Ok(Sign::Plus),
            "-1" | "-" => Ok(Sign::Minus),
            other => Err(DiivError::InvalidInput(format!(
                "orientation must be +1 or -1, got `{other}`"
            ))),
        }
    }
}

/// Frames of the two instruments: directive orientations plus free-text attribute labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DirectedDesign {
    pub s1: Sign,
    pub s2: Sign,
    pub m1: String,
    pub m2: String,
}

impl DirectedDesign {
    pub fn new(s1: Sign, s2: Sign) -> Self {
        DirectedDesign {
            s1,
            s2,
            m1: String::new(),
            m2: String::new(),
        }
    }

    /// Both instruments read as encouragements.
    pub fn encouragements() -> Self {
        Self::new(Sign::Plus, Sign::Plus)
    }

    pub fn with_labels(mut self, m1: impl Into<String>, m2: impl Into<String>) -> Self {
        self.m1 = m1.into();
        self.m2 = m2.into();
        self
    }

    pub fn sign(&self, instrument: Instrument) -> Sign {
        match instrument {
            Instrument::First => self.s1,
            Instrument::Second => self.s2,
        }
    }
}

/// Which of the two instruments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instrument {
    First,
    Second,
}

impl Instrument {
    pub fn index(self) -> usize {
        match self {
            Instrument::First => 1,
            Instrument::Second => 2,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Instrument::First => Instrument::Second,
            Instrument::Second => Instrument::First,
        }
    }
}

/// How the two instruments are laid out in a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DesignMode {
    /// Split population: `z1` holds the within-frame assignment, `h` the frame
    /// (`h = 1` for the first subpopulation).
    Parallel,
    /// Both instruments assigned to every unit.
    Joint,
}

impl fmt::Display for DesignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DesignMode::Parallel => "parallel",
            DesignMode::Joint => "joint",
        })
    }
}

impl FromStr for DesignMode {
    type Err = DiivError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "parallel" => Ok(DesignMode::Parallel),
            "joint" => Ok(DesignMode::Joint),
            other => Err(DiivError::InvalidInput(format!(
                "design must be `parallel` or `joint`, got `{other}`"
            ))),
        }
    }
}

/// Outcome, take-up, instruments and optional frame indicator and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    y: Vec<f64>,
    d: BinaryColumn,
    z1: BinaryColumn,
    z2: Option<BinaryColumn>,
    h: Option<BinaryColumn>,
    covariates: Vec<(String, Vec<f64>)>,
}

impl ObservationTable {
    pub fn new(
        y: Vec<f64>,
        d: BinaryColumn,
        z1: BinaryColumn,
        z2: Option<BinaryColumn>,
        h: Option<BinaryColumn>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(DiivError::InvalidInput("table has no rows".into()));
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(DiivError::InvalidInput(format!("outcome y is not finite at row {row}")));
        }
        check_len("d", n, d.len())?;
        check_len("z1", n, z1.len())?;
        if let Some(z2) = &z2 {
            check_len("z2", n, z2.len())?;
        }
        if let Some(h) = &h {
            check_len("h", n, h.len())?;
        }
        if z2.is_none() && h.is_none() {
            return Err(DiivError::MissingColumn("h".into()));
        }
        Ok(ObservationTable {
            y,
            d,
            z1,
            z2,
            h,
            covariates: Vec::new(),
        })
    }

    /// Parallel design: `z` is the within-frame assignment, `h` the frame.
    pub fn parallel(y: Vec<f64>, d: BinaryColumn, z: BinaryColumn, h: BinaryColumn) -> Result<Self> {
        Self::new(y, d, z, None, Some(h))
    }

    pub fn joint(y: Vec<f64>, d: BinaryColumn, z1: BinaryColumn, z2: BinaryColumn) -> Result<Self> {
        Self::new(y, d, z1, Some(z2), None)
    }

    pub fn with_covariate(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        check_len(&name, self.n(), values.len())?;
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(DiivError::InvalidInput(format!(
                "covariate `{name}` is not finite at row {row}"
            )));
        }
        self.covariates.push((name, values));
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &BinaryColumn {
        &self.d
    }

    pub fn z1(&self) -> &BinaryColumn {
        &self.z1
    }

    pub fn z2(&self) -> Option<&BinaryColumn> {
        self.z2.as_ref()
    }

    pub fn h(&self) -> Option<&BinaryColumn> {
        self.h.as_ref()
    }

    pub fn require_z2(&self) -> Result<&BinaryColumn> {
        self.z2.as_ref().ok_or_else(|| DiivError::MissingColumn("z2".into()))
    }

    pub fn require_h(&self) -> Result<&BinaryColumn> {
        self.h.as_ref().ok_or_else(|| DiivError::MissingColumn("h".into()))
    }

    pub fn covariates(&self) -> &[(String, Vec<f64>)] {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Result<&[f64]> {
        self.covariates
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| DiivError::MissingColumn(name.to_string()))
    }

    /// Joint when `z2` is present, parallel otherwise.
    pub fn inferred_mode(&self) -> DesignMode {
        if self.z2.is_some() {
            DesignMode::Joint
        } else {
            DesignMode::Parallel
        }
    }

    /// Same table with `z1` replaced.
    pub fn with_z1(&self, z1: BinaryColumn) -> Result<Self> {
        check_len("z1", self.n(), z1.len())?;
        let mut out = self.clone();
        out.z1 = z1;
        Ok(out)
    }

    /// Same table with `z2` replaced.
    pub fn with_z2(&self, z2: BinaryColumn) -> Result<Self> {
        check_len("z2", self.n(), z2.len())?;
        let mut out = self.clone();
        out.z2 = Some(z2);
        Ok(out)
    }

    /// Rows reordered by `order`, which must be a permutation of `0..n`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        if order.len() != n || !order.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true)) {
            return Err(DiivError::InvalidInput("row order is not a permutation".into()));
        }
        let pick_bits = |c: &BinaryColumn| BinaryColumn(order.iter().map(|&i| c.get(i)).collect());
        Ok(ObservationTable {
            y: order.iter().map(|&i| self.y[i]).collect(),
            d: pick_bits(&self.d),
            z1: pick_bits(&self.z1),
            z2: self.z2.as_ref().map(pick_bits),
            h: self.h.as_ref().map(pick_bits),
            covariates: self
                .covariates
                .iter()
                .map(|(name, v)| (name.clone(), order.iter().map(|&i| v[i]).collect()))
                .collect(),
        })
    }
}

fn check_len(column: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(DiivError::LengthMismatch {
            column: column.to_string(),
            expected,
            found,
        })
    }
}

/// Pairwise (cascade) summation in the given order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Pairwise mean, `None` for an empty slice.
pub fn pairwise_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(pairwise_sum(values) / values.len() as f64)
    }
}
