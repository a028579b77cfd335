//! Reduced forms, first stages and the DIIV ratio.
//!
//! Two layouts share the same algebra. In the parallel layout each unit sees
//! only the instrument of its frame, so instrument `j` is contrasted inside
//! frame `j`. In the joint layout both instruments are assigned to every unit
//! and instrument `j` is contrasted along the edge `z_{-j} = 0`.

use crate::error::{DiivError, Result, Warning};
use crate::table::{pairwise_mean, BinaryColumn, DesignMode, DirectedDesign, Instrument, ObservationTable, Sign};

/// Denominator tolerance for algebraic identities on exact inputs.
pub const EXACT_TOLERANCE: f64 = 1e-12;
/// Denominator tolerance for contrasts estimated from data.
pub const DATA_TOLERANCE: f64 = 1e-8;

/// Reduced-form and first-stage difference for one instrument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeContrast {
    pub rf: f64,
    pub fs: f64,
    /// `cell_counts[a][b]`: rows with assignment `a` for this instrument and
    /// `b` on the conditioning axis. In joint mode `b` is the other
    /// instrument; in parallel mode `b = 1` marks rows inside this
    /// instrument's frame. Only the `b = baseline` column enters the contrast.
    pub cell_counts: [[usize; 2]; 2],
    pub baseline: u8,
}

impl EdgeContrast {
    /// Counts of (treated, control) rows entering the contrast.
    pub fn entering_counts(&self) -> (usize, usize) {
        let b = self.baseline as usize;
        (self.cell_counts[1][b], self.cell_counts[0][b])
    }

    /// Contrast of a sign-flipped instrument.
    pub fn negated(&self) -> Self {
        let mut out = *self;
        out.rf = -self.rf;
        out.fs = -self.fs;
        out.cell_counts = [self.cell_counts[1], self.cell_counts[0]];
        out
    }

    /// Standard single-instrument Wald estimate `rf / fs`.
    pub fn wald(&self) -> Result<f64> {
        checked_ratio(self.rf, self.fs, DATA_TOLERANCE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiivMethod {
    Ratio,
    TwoStageParallel,
    TwoStageJoint,
}

impl DiivMethod {
    pub fn tag(self) -> &'static str {
        match self {
            DiivMethod::Ratio => "ratio",
            DiivMethod::TwoStageParallel => "two-stage-parallel",
            DiivMethod::TwoStageJoint => "two-stage-joint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiivResult {
    pub tau: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub method: DiivMethod,
}

/// Reduced form and first stage of instrument `instrument`.
pub fn edge_contrasts(table: &ObservationTable, instrument: Instrument, mode: DesignMode) -> Result<EdgeContrast> {
    let (assign, axis, baseline): (&BinaryColumn, &BinaryColumn, u8) = match mode {
        DesignMode::Parallel => {
            let h = table.require_h()?;
            (table.z1(), h, frame_indicator(instrument))
        }
        DesignMode::Joint => {
            let z2 = table.require_z2()?;
            match instrument {
                Instrument::First => (table.z1(), z2, 0),
                Instrument::Second => (z2, table.z1(), 0),
            }
        }
    };

    let mut counts = [[0usize; 2]; 2];
    let mut y_cells: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut d_cells: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for row in 0..table.n() {
        let a = assign.get(row) as usize;
        let b = axis.get(row);
        counts[a][b as usize] += 1;
        if b == baseline {
            y_cells[a].push(table.y()[row]);
            d_cells[a].push(f64::from(table.d().get(row)));
        }
    }

    let describe = |a: u8| match mode {
        DesignMode::Parallel => format!("z={a} in frame {}", instrument.index()),
        DesignMode::Joint => format!("z{}={a}, z{}=0", instrument.index(), instrument.other().index()),
    };
    let mean = |cells: &[Vec<f64>; 2], a: u8| {
        pairwise_mean(&cells[a as usize]).ok_or_else(|| DiivError::MissingCell(describe(a)))
    };
    let rf = mean(&y_cells, 1)? - mean(&y_cells, 0)?;
    let fs = mean(&d_cells, 1)? - mean(&d_cells, 0)?;
    Ok(EdgeContrast {
        rf,
        fs,
        cell_counts: counts,
        baseline,
    })
}

/// Frame indicator value `h` that marks the subpopulation of `instrument`.
pub fn frame_indicator(instrument: Instrument) -> u8 {
    match instrument {
        Instrument::First => 1,
        Instrument::Second => 0,
    }
}

/// Oriented DIIV ratio `(s1 rf1 - s2 rf2) / (s1 fs1 - s2 fs2)` with the data tolerance.
pub fn diiv_ratio(c1: &EdgeContrast, c2: &EdgeContrast, design: &DirectedDesign) -> Result<DiivResult> {
    diiv_ratio_with_tolerance(c1, c2, design, DATA_TOLERANCE)
}

pub fn diiv_ratio_with_tolerance(
    c1: &EdgeContrast,
    c2: &EdgeContrast,
    design: &DirectedDesign,
    tolerance: f64,
) -> Result<DiivResult> {
    let (s1, s2) = (design.s1.value(), design.s2.value());
    let numerator = s1 * c1.rf - s2 * c2.rf;
    let denominator = s1 * c1.fs - s2 * c2.fs;
    let tau = checked_ratio(numerator, denominator, tolerance)?;
    Ok(DiivResult {
        tau,
        numerator,
        denominator,
        method: DiivMethod::Ratio,
    })
}

/// DIIV ratio computed straight from a table in the given layout.
pub fn diiv_from_table(table: &ObservationTable, design: &DirectedDesign, mode: DesignMode) -> Result<DiivResult> {
    let c1 = edge_contrasts(table, Instrument::First, mode)?;
    let c2 = edge_contrasts(table, Instrument::Second, mode)?;
    diiv_ratio(&c1, &c2, design)
}

/// Naively pooled estimand `(RF_1 + RF_2) / (FS_1 + FS_2)`.
///
/// Under defiance this is a non-convex mix of the type effects.
pub fn pooled_iv(table: &ObservationTable) -> Result<f64> {
    let mode = table.inferred_mode();
    let c1 = edge_contrasts(table, Instrument::First, mode)?;
    let c2 = edge_contrasts(table, Instrument::Second, mode)?;
    checked_ratio(c1.rf + c2.rf, c1.fs + c2.fs, DATA_TOLERANCE)
}

/// Toggle the assignment inside frame 2 and pool. Equals the DIIV ratio with
/// both instruments read as encouragements. Parallel layout only: in the joint
/// layout toggling `z2` would also move the baseline edge of `z1`.
pub fn pool_and_flip(table: &ObservationTable) -> Result<f64> {
    let flipped = match table.inferred_mode() {
        DesignMode::Joint => {
            return Err(DiivError::InvalidInput(
                "pool-and-flip needs a parallel-design table".into(),
            ))
        }
        DesignMode::Parallel => {
            let h = table.require_h()?;
            let frame2 = frame_indicator(Instrument::Second);
            let z = BinaryColumn::from_bools(table.z1().iter().zip(h.iter()).map(|(z, h)| {
                if h == frame2 {
                    z == 0
                } else {
                    z == 1
                }
            }));
            table.with_z1(z)?
        }
    };
    pooled_iv(&flipped)
}

/// Complement of a 0/1 column.
pub fn flip_instrument(z: &BinaryColumn) -> BinaryColumn {
    BinaryColumn::from_bools(z.iter().map(|v| v == 0))
}

/// Recode so the directive reads as an encouragement: `(1 - s)/2 + s z`.
pub fn align_instrument(z: &BinaryColumn, s: Sign) -> BinaryColumn {
    match s {
        Sign::Plus => z.clone(),
        Sign::Minus => flip_instrument(z),
    }
}

/// Parallel table with the assignment of each discouraging frame toggled,
/// so both frames read as encouragements.
pub fn align_parallel(table: &ObservationTable, design: &DirectedDesign) -> Result<ObservationTable> {
    let h = table.require_h()?;
    let flip = |frame: u8| {
        let instrument = if frame == frame_indicator(Instrument::First) {
            Instrument::First
        } else {
            Instrument::Second
        };
        design.sign(instrument) == Sign::Minus
    };
    let z = BinaryColumn::from_bools(table.z1().iter().zip(h.iter()).map(|(z, h)| (z == 1) != flip(h)));
    table.with_z1(z)
}

/// Means of a variable over the four aligned-instrument cells. The `(1,1)`
/// cell is optional because it never enters the edge contrast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMeans {
    pub m00: f64,
    pub m10: f64,
    pub m01: f64,
    pub m11: Option<f64>,
}

/// Aligned-cell means of `y` and `d` together with cell counts `counts[a][b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedCells {
    pub y: CellMeans,
    pub d: CellMeans,
    pub counts: [[usize; 2]; 2],
}

/// Cell means over the aligned instruments of a joint table.
pub fn aligned_cells(table: &ObservationTable, design: &DirectedDesign) -> Result<AlignedCells> {
    let a1 = align_instrument(table.z1(), design.s1);
    let a2 = align_instrument(table.require_z2()?, design.s2);
    let mut counts = [[0usize; 2]; 2];
    let mut ys: [[Vec<f64>; 2]; 2] = Default::default();
    let mut ds: [[Vec<f64>; 2]; 2] = Default::default();
    for row in 0..table.n() {
        let (a, b) = (a1.get(row) as usize, a2.get(row) as usize);
        counts[a][b] += 1;
        ys[a][b].push(table.y()[row]);
        ds[a][b].push(f64::from(table.d().get(row)));
    }
    let need = |cells: &[[Vec<f64>; 2]; 2], a: usize, b: usize| {
        pairwise_mean(&cells[a][b]).ok_or_else(|| DiivError::MissingCell(format!("aligned cell ({a},{b})")))
    };
    let means = |cells: &[[Vec<f64>; 2]; 2]| -> Result<CellMeans> {
        Ok(CellMeans {
            m00: need(cells, 0, 0)?,
            m10: need(cells, 1, 0)?,
            m01: need(cells, 0, 1)?,
            m11: pairwise_mean(&cells[1][1]),
        })
    };
    Ok(AlignedCells {
        y: means(&ys)?,
        d: means(&ds)?,
        counts,
    })
}

/// DIIV from aligned-cell means: `(y10 - y01) / (d10 - d01)`.
pub fn diiv_from_cells(y: &CellMeans, d: &CellMeans) -> Result<DiivResult> {
    // (y10 - y00) - (y01 - y00) with the baseline cell cancelled exactly.
    let numerator = y.m10 - y.m01;
    let denominator = d.m10 - d.m01;
    let tau = checked_ratio(numerator, denominator, EXACT_TOLERANCE)?;
    Ok(DiivResult {
        tau,
        numerator,
        denominator,
        method: DiivMethod::Ratio,
    })
}

/// Convex weight on the persuasion-prone effect.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaWeight {
    pub lambda: f64,
    pub warnings: Vec<Warning>,
}

/// `lambda = (pC1 - pC2) / ((pC1 - pC2) - (pF1 - pF2))`.
pub fn lambda_weight(p_c1: f64, p_c2: f64, p_f1: f64, p_f2: f64) -> Result<LambdaWeight> {
    let shift_c = p_c1 - p_c2;
    let denominator = shift_c - (p_f1 - p_f2);
    if denominator.abs() <= EXACT_TOLERANCE {
        return Err(DiivError::ZeroDenominator {
            denominator,
            tolerance: EXACT_TOLERANCE,
        });
    }
    if denominator < 0.0 {
        return Err(DiivError::RelevanceViolated { shift: denominator });
    }
    let mut warnings = Vec::new();
    if p_c1 < p_c2 || p_f1 > p_f2 {
        warnings.push(Warning::OrderingViolation);
    }
    Ok(LambdaWeight {
        lambda: shift_c / denominator,
        warnings,
    })
}

pub(crate) fn checked_ratio(numerator: f64, denominator: f64, tolerance: f64) -> Result<f64> {
    if denominator.is_nan() || denominator.abs() <= tolerance {
        return Err(DiivError::ZeroDenominator { denominator, tolerance });
    }
    Ok(numerator / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bits(v: &[u8]) -> BinaryColumn {
        BinaryColumn::from_bits("t", v.to_vec()).unwrap()
    }

    /// Frame 1: y means 1.0 vs 0.25, d means 0.75 vs 0.25.
    /// Frame 2: y means 0.625 vs 0.375, d means 0.5 vs 0.25.
    pub(crate) fn hand_table() -> ObservationTable {
        let y = vec![
            1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, // frame 1
            2.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0, 0.5, // frame 2
        ];
        let d = bits(&[1, 1, 1, 0, 1, 0, 0, 0, 1, 1, 0, 0, 1, 0, 0, 0]);
        let z = bits(&[1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0]);
        let h = bits(&[1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        ObservationTable::parallel(y, d, z, h).unwrap()
    }

    fn contrast(rf: f64, fs: f64) -> EdgeContrast {
        EdgeContrast {
            rf,
            fs,
            cell_counts: [[1, 1], [1, 1]],
            baseline: 0,
        }
    }

    #[test]
    fn hand_table_frame_one() {
        let c = edge_contrasts(&hand_table(), Instrument::First, DesignMode::Parallel).unwrap();
        assert_eq!(c.rf, 0.75);
        assert_eq!(c.fs, 0.5);
        assert_eq!(c.entering_counts(), (4, 4));
        assert_eq!(c.cell_counts, [[4, 4], [4, 4]]);
    }

    #[test]
    fn hand_table_frame_two_and_ratio() {
        let t = hand_table();
        let c2 = edge_contrasts(&t, Instrument::Second, DesignMode::Parallel).unwrap();
        assert_eq!((c2.rf, c2.fs), (0.25, 0.25));
        let r = diiv_from_table(&t, &DirectedDesign::encouragements(), DesignMode::Parallel).unwrap();
        assert_eq!(r.tau, 2.0);
        assert_eq!(pooled_iv(&t).unwrap(), 1.0 / 0.75);
        assert_eq!(pool_and_flip(&t).unwrap(), r.tau);
    }

    #[test]
    fn constant_outcome_has_zero_reduced_form() {
        let t = hand_table();
        let t =
            ObservationTable::parallel(vec![3.5; 16], t.d().clone(), t.z1().clone(), t.h().unwrap().clone()).unwrap();
        let c = edge_contrasts(&t, Instrument::First, DesignMode::Parallel).unwrap();
        assert_eq!(c.rf, 0.0);
    }

    #[test]
    fn perfect_compliance_has_unit_first_stage() {
        let t = hand_table();
        let t =
            ObservationTable::parallel(t.y().to_vec(), t.z1().clone(), t.z1().clone(), t.h().unwrap().clone()).unwrap();
        let c = edge_contrasts(&t, Instrument::First, DesignMode::Parallel).unwrap();
        assert_eq!(c.fs, 1.0);
    }

    #[test]
    fn empty_cell_is_an_error() {
        let t = hand_table();
        let h = bits(&[1; 16]);
        let t = ObservationTable::parallel(t.y().to_vec(), t.d().clone(), t.z1().clone(), h).unwrap();
        let err = edge_contrasts(&t, Instrument::Second, DesignMode::Parallel).unwrap_err();
        assert!(matches!(err, DiivError::MissingCell(_)));
    }

    #[test]
    fn joint_mode_requires_z2() {
        let err = edge_contrasts(&hand_table(), Instrument::First, DesignMode::Joint).unwrap_err();
        assert_eq!(err, DiivError::MissingColumn("z2".into()));
    }

    #[test]
    fn single_active_instrument() {
        let r = diiv_ratio(
            &contrast(1.0, 1.0),
            &contrast(0.0, 0.0),
            &DirectedDesign::encouragements(),
        )
        .unwrap();
        assert_eq!(r.tau, 1.0);
        assert_eq!((r.numerator, r.denominator), (1.0, 1.0));
    }

    // Lemma-style contrasts built from shares pC = (0.1365, 0.0395),
    // pF = (0.0159, 0.0395) with tau_C = 3, tau_F = 2:
    // RF1 = 0.1365*3 - 0.0159*2 = 0.3777, FS1 = 0.1206, RF2 = 0.0395, FS2 = 0.
    // Ratio 0.3382 / 0.1206 = 2.80431...; the exact shares give 2.80473.
    #[test]
    fn rounded_share_contrasts() {
        let (c1, c2) = (contrast(0.3777, 0.1206), contrast(0.0395, 0.0));
        let r = diiv_ratio(&c1, &c2, &DirectedDesign::encouragements()).unwrap();
        assert_relative_eq!(r.tau, 0.3382 / 0.1206, max_relative = 1e-12);
        assert!((r.tau - 2.8047).abs() < 1e-3);

        let flipped = DirectedDesign::new(Sign::Plus, Sign::Minus);
        let r2 = diiv_ratio(&c1, &c2.negated(), &flipped).unwrap();
        assert_eq!(r2.tau, r.tau);
    }

    #[test]
    fn identical_first_stages_are_degenerate() {
        let err = diiv_ratio(
            &contrast(0.3, 0.2),
            &contrast(0.1, 0.2),
            &DirectedDesign::encouragements(),
        )
        .unwrap_err();
        assert!(matches!(err, DiivError::ZeroDenominator { .. }));
    }

    #[test]
    fn pooled_estimate_leaves_the_effect_range() {
        // Same rounded shares as above; pooled = 0.4172 / 0.1206 = 3.4594.
        let (rf1, fs1, rf2, fs2): (f64, f64, f64, f64) = (0.3777, 0.1206, 0.0395, 0.0);
        let pooled = (rf1 + rf2) / (fs1 + fs2);
        assert!((pooled - 3.45937).abs() < 1e-4);
        assert!(pooled > 3.0);
    }

    #[test]
    fn flip_and_align() {
        assert_eq!(flip_instrument(&bits(&[0, 1, 1, 0])), bits(&[1, 0, 0, 1]));
        let z = bits(&[0, 1, 1, 0, 1]);
        assert_eq!(flip_instrument(&flip_instrument(&z)), z);
        assert_eq!(align_instrument(&bits(&[1]), Sign::Plus), bits(&[1]));
        assert_eq!(align_instrument(&bits(&[1]), Sign::Minus), bits(&[0]));
        assert_eq!(align_instrument(&bits(&[0]), Sign::Minus), bits(&[1]));
    }

    #[test]
    fn cells_ignore_the_corner() {
        let y = CellMeans {
            m00: 0.0,
            m10: 1.0,
            m01: 0.0,
            m11: Some(f64::NAN),
        };
        let d = CellMeans {
            m00: 0.0,
            m10: 1.0,
            m01: 0.0,
            m11: None,
        };
        assert_eq!(diiv_from_cells(&y, &d).unwrap().tau, 1.0);

        let y = CellMeans {
            m00: 0.2,
            m10: 0.7,
            m01: 0.7,
            m11: None,
        };
        let d = CellMeans {
            m00: 0.1,
            m10: 0.4,
            m01: 0.4,
            m11: None,
        };
        assert!(matches!(
            diiv_from_cells(&y, &d),
            Err(DiivError::ZeroDenominator { .. })
        ));
    }

    #[test]
    fn lambda_special_cases() {
        assert_eq!(lambda_weight(0.3, 0.1, 0.05, 0.05).unwrap().lambda, 1.0);
        assert_eq!(lambda_weight(0.1, 0.1, 0.05, 0.2).unwrap().lambda, 0.0);
        // Three-decimal reference shares: 0.098 / 0.121.
        let l = lambda_weight(0.137, 0.039, 0.016, 0.039).unwrap();
        assert_relative_eq!(l.lambda, 0.098 / 0.121, max_relative = 1e-12);
        assert!(l.warnings.is_empty());
        let l = lambda_weight(0.039, 0.016, 0.039, 0.137).unwrap();
        assert_relative_eq!(l.lambda, 0.023 / 0.121, max_relative = 1e-12);
    }

    #[test]
    fn lambda_flags_ordering_violations() {
        let l = lambda_weight(0.1, 0.2, 0.0, 0.5).unwrap();
        assert_eq!(l.warnings, vec![Warning::OrderingViolation]);
        assert!(matches!(
            lambda_weight(0.1, 0.1, 0.2, 0.2),
            Err(DiivError::ZeroDenominator { .. })
        ));
        assert!(matches!(
            lambda_weight(0.1, 0.3, 0.2, 0.2),
            Err(DiivError::RelevanceViolated { .. })
        ));
    }
}
