//! Difference-in-instrumental-variables (DIIV) estimation.
//!
//! Two binary instruments that shift persuasion-prone and reactance-prone
//! units in opposite directions identify a convex combination of their
//! treatment effects. This crate provides
//!
//! * [`estimand`]: edge contrasts, the oriented DIIV ratio, instrument
//!   transformations and the convex weight;
//! * [`twostage`]: a QR-based least-squares engine and the two 2SLS forms
//!   of the ratio, with classical or HC1 inference;
//! * [`microsim`]: the threshold-crossing type model, its analytic shares
//!   and a seeded Monte Carlo harness.

pub mod error;
pub mod estimand;
pub mod microsim;
pub mod synthetic;
pub mod table;
pub mod twostage;

pub use error::{DiivError, Result, Warning};
pub use table::{BinaryColumn, DesignMode, DirectedDesign, Instrument, ObservationTable, Sign};
