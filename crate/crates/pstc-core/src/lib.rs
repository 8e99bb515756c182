//! Preventive self-triggered control for output-feedback LTI loops.
//!
//! The pipeline: [`setcalc`] provides the ellipsoidal calculus, [`sysmodel`]
//! the plant/controller containers and transition tables, [`reach`] the
//! offline disturbance reach sets, [`estimator`] the guaranteed state
//! estimator, [`trigger`] the worst-case triggering bound, and [`pstc`] the
//! closed-loop step and simulator.
//!
//! Everything is plain data over `f64`; operations are pure functions, so
//! values can be shared across threads freely once built.

pub mod estimator;
pub mod pstc;
pub mod reach;
pub mod setcalc;
pub mod sysmodel;
pub mod trigger;

use nalgebra::DMatrix;

/// Errors surfaced by table construction, set operations and the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },
    /// Shape matrix failed the symmetry or positive-semidefiniteness check.
    #[error("{context}: matrix is not symmetric PSD (offending value {value:.3e})")]
    NotPsd { context: &'static str, value: f64 },
    /// An operation needed a strictly positive definite matrix.
    #[error("{context}: matrix is not positive definite")]
    NotPositiveDefinite { context: &'static str },
    /// Fusion detected an empty intersection (z <= 0); callers fall back to
    /// the prior set.
    #[error("fusion: empty intersection signalled (z = {z:.3e})")]
    EmptyIntersection { z: f64 },
    /// Hyperplane/cylinder data does not have the required rank.
    #[error("{context}: rank {got} < required {required}")]
    RankDeficient {
        context: &'static str,
        required: usize,
        got: usize,
    },
    #[error("pair (A, C) is not observable (rank {rank} < {n} after {steps} powers)")]
    NotObservable { rank: usize, n: usize, steps: usize },
    #[error("{context}: expected estimator phase {expected}")]
    Phase {
        context: &'static str,
        expected: &'static str,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Every offline table the loop needs, bundled for serialization and reuse.
pub struct OfflineTables {
    pub trans: sysmodel::TransitionTables,
    pub dist: reach::DisturbanceTables,
    pub trig: trigger::TriggerTables,
    pub init: estimator::InitTables,
}

/// Wall-clock spent building each table family, for offline-cost reporting.
#[derive(Debug, Clone, Copy)]
pub struct OfflineTimings {
    pub transition_ms: f64,
    pub reach_ms: f64,
    pub trigger_ms: f64,
    pub init_ms: f64,
}

/// Builds all offline tables for one problem instance.
///
/// `v` is the measurement-noise shape (ny x ny, PSD; pass zeros for the
/// noiseless limit) and `wbar` the disturbance shape (nw x nw).
pub fn build_offline_tables(
    plant: &sysmodel::PlantModel,
    controller: &sysmodel::ControllerModel,
    cfg: &sysmodel::TriggerConfig,
    reach_cfg: &reach::ReachConfig,
    wbar: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<(OfflineTables, OfflineTimings)> {
    let t0 = std::time::Instant::now();
    let trans = sysmodel::build_transition_tables(plant, controller, cfg)?;
    let t1 = std::time::Instant::now();
    let dist = reach::build_disturbance_tables(plant, wbar, controller.h, cfg.kappa_max, reach_cfg)?;
    let t2 = std::time::Instant::now();
    let trig = trigger::build_trigger_tables(plant, controller, &trans, &dist, v, cfg.sigma, cfg.kappa_max)?;
    let t3 = std::time::Instant::now();
    let init = estimator::InitTables::build(plant, controller.h, &trans, &dist, v)?;
    let t4 = std::time::Instant::now();
    let ms = |a: std::time::Instant, b: std::time::Instant| (b - a).as_secs_f64() * 1e3;
    Ok((
        OfflineTables { trans, dist, trig, init },
        OfflineTimings {
            transition_ms: ms(t0, t1),
            reach_ms: ms(t1, t2),
            trigger_ms: ms(t2, t3),
            init_ms: ms(t3, t4),
        },
    ))
}
