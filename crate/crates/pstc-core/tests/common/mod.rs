//! Shared fixtures for the acceptance tests: the reference batch-reactor
//! problem, random system generators, ellipsoid samplers and the
//! signal-level oracle for the triggering test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use pstc_core::pstc::{DisturbanceSpec, NoiseSpec, Scenario, TriggerMode};
use pstc_core::reach::ReachConfig;
use pstc_core::setcalc::psd_sqrt;
use pstc_core::sysmodel::{discretize, ControllerModel, PlantModel, TransitionTables, TriggerConfig};
use pstc_core::{build_offline_tables, OfflineTables};

/// Open-loop unstable batch reactor with a two-channel PI controller —
/// the reference problem used throughout the acceptance suite. Matches
/// `configs/batch_reactor.cfg`.
pub fn batch_reactor() -> (PlantModel, ControllerModel) {
    let ap = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.38, -0.208, 6.715, -5.676, //
            -0.581, -4.29, 0.0, 0.675, //
            1.067, 4.273, -6.654, 5.893, //
            0.048, 4.273, 1.343, -2.104,
        ],
    );
    let bp = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 5.679, 0.0, 1.136, -3.146, 1.136, 0.0]);
    let cp = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, -1.0, 0.0, 1.0, 0.0, 0.0]);
    let e = DMatrix::from_row_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]);
    let plant = PlantModel::new(ap, bp, cp, e).unwrap();

    let ac = DMatrix::identity(2, 2);
    let bc = DMatrix::from_row_slice(2, 2, &[0.0, 0.01, 0.01, 0.0]);
    let cc = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 8.0]);
    let dc = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 5.0, 0.0]);
    let controller = ControllerModel::new(ac, bc, cc, dc, 0.01).unwrap();
    (plant, controller)
}

pub const BATCH_SIGMA: f64 = 0.1;
pub const BATCH_KAPPA_MAX: usize = 25;

pub fn batch_wbar() -> DMatrix<f64> {
    DMatrix::from_element(1, 1, 0.01)
}

pub fn batch_v() -> DMatrix<f64> {
    DMatrix::from_diagonal_element(2, 2, 2.0 * 0.011 * 0.011)
}

pub fn batch_tables() -> OfflineTables {
    let (plant, controller) = batch_reactor();
    let cfg = TriggerConfig::new(BATCH_SIGMA, BATCH_KAPPA_MAX).unwrap();
    let reach = ReachConfig::default();
    let (tables, _) =
        build_offline_tables(&plant, &controller, &cfg, &reach, &batch_wbar(), &batch_v()).unwrap();
    tables
}

/// The reference run: unstable start, bounded measurement noise, a process
/// disturbance active for the first half of the horizon.
pub fn batch_scenario(mode: TriggerMode, seed: u64, noisy: bool, epsilon: f64) -> Scenario {
    Scenario {
        mode,
        duration: 10.0,
        epsilon,
        seed,
        xi_p0: DVector::from_vec(vec![10.0, -10.0, -10.0, 10.0]),
        xc0: DVector::zeros(2),
        noise: if noisy { NoiseSpec::SeededBox { half_width: 0.01 } } else { NoiseSpec::Zero },
        disturbance: if noisy {
            DisturbanceSpec::Schedule(vec![(5.0, DVector::from_vec(vec![0.1]))])
        } else {
            DisturbanceSpec::Zero
        },
        substeps: 10,
        initial_estimate: None,
        wbar: batch_wbar(),
    }
}

/// Point on the boundary of `E(0, shape)` in a uniformly random direction.
pub fn boundary_sample<R: Rng + ?Sized>(shape: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let s = psd_sqrt(shape);
    let mut g = DVector::from_fn(s.ncols(), |_, _| rng.random_range(-1.0..1.0));
    let n = g.norm();
    if n > 0.0 {
        g /= n;
    }
    s * g
}

/// Mixed draw: mostly boundary (where quadratic worst cases live), some
/// interior and occasional exact zero.
pub fn feasible_sample<R: Rng + ?Sized>(shape: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let roll: f64 = rng.random();
    if roll < 0.1 {
        DVector::zeros(shape.nrows())
    } else if roll < 0.4 {
        boundary_sample(shape, rng) * rng.random_range(0.0..1.0)
    } else {
        boundary_sample(shape, rng)
    }
}

/// Random PSD shape with the given trace scale.
pub fn random_psd<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let m = &a * a.transpose();
    let tr = m.trace();
    if tr > 0.0 {
        m * (scale / tr)
    } else {
        DMatrix::identity(n, n) * (scale / n as f64)
    }
}

/// Measured value of the triggering test after `kappa` silent periods,
/// computed from raw signals: the true plant state starts at `xp + e`, a
/// disturbance displacement `d` accumulates over the horizon, and the
/// decision-time measurement carries noise `v`. Uses only the transition
/// tables (validated against closed forms elsewhere) — nothing from the
/// trigger tables.
#[allow(clippy::too_many_arguments)]
pub fn eta_signal_level(
    plant: &PlantModel,
    controller: &ControllerModel,
    trans: &TransitionTables,
    sigma: f64,
    xp: &DVector<f64>,
    xc: &DVector<f64>,
    y_held: &DVector<f64>,
    e: &DVector<f64>,
    d: &DVector<f64>,
    v: &DVector<f64>,
    kappa: usize,
) -> f64 {
    let u_held = controller.output(xc, y_held);
    let xp_k = &trans.phi_p[kappa] * (xp + e) + &trans.gamma_p[kappa] * &u_held + d;
    let y_k = &plant.cp * &xp_k + v;
    let xc_k = &trans.phi_c[kappa] * xc + &trans.gamma_c[kappa] * y_held;
    let ups_k = controller.output(&xc_k, y_held);

    let ny = y_k.len();
    let nu = ups_k.len();
    let mut zeta = DVector::zeros(ny + nu);
    zeta.rows_mut(0, ny).copy_from(&y_k);
    zeta.rows_mut(ny, nu).copy_from(&ups_k);
    let mut zeta_hat = DVector::zeros(ny + nu);
    zeta_hat.rows_mut(0, ny).copy_from(y_held);
    zeta_hat.rows_mut(ny, nu).copy_from(&u_held);

    let diff = &zeta - &zeta_hat;
    diff.norm_squared() - sigma * sigma * zeta.norm_squared()
}

/// Random output-feedback interconnection with 2–4 plant states. Not
/// necessarily stable — the worst-case bound is a pointwise algebraic
/// statement and needs no stability.
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, h: f64) -> (PlantModel, ControllerModel) {
    loop {
        let np = rng.random_range(2..=4);
        let ny = rng.random_range(1..=np.min(2));
        let nu = rng.random_range(1..=2);
        let nw = rng.random_range(1..=2);
        let nc = rng.random_range(1..=2);
        let ap = DMatrix::from_fn(np, np, |_, _| rng.random_range(-1.5..1.5));
        let bp = DMatrix::from_fn(np, nu, |_, _| rng.random_range(-1.0..1.0));
        let cp = DMatrix::from_fn(ny, np, |_, _| rng.random_range(-1.0..1.0));
        let e = DMatrix::from_fn(np, nw, |_, _| rng.random_range(-1.0..1.0));
        let ac = DMatrix::from_fn(nc, nc, |_, _| rng.random_range(-0.9..0.9));
        let bc = DMatrix::from_fn(nc, ny, |_, _| rng.random_range(-0.5..0.5));
        let cc = DMatrix::from_fn(nu, nc, |_, _| rng.random_range(-0.8..0.8));
        let dc = DMatrix::from_fn(nu, ny, |_, _| rng.random_range(-0.8..0.8));
        let plant = match PlantModel::new(ap, bp, cp, e) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let controller = match ControllerModel::new(ac, bc, cc, dc, h) {
            Ok(c) => c,
            Err(_) => continue,
        };
        return (plant, controller);
    }
}

/// Spectral radius of the discrete closed loop under every-period
/// transmission: state `[xp; xc]`, fresh measurement applied each period.
pub fn closed_loop_radius(plant: &PlantModel, controller: &ControllerModel, h: f64) -> f64 {
    let (phi, gamma, _) = discretize(plant, h);
    let (np, nc) = (plant.np(), controller.nc());
    let mut m = DMatrix::zeros(np + nc, np + nc);
    m.view_mut((0, 0), (np, np)).copy_from(&(&phi + &gamma * &controller.dc * &plant.cp));
    m.view_mut((0, np), (np, nc)).copy_from(&(&gamma * &controller.cc));
    m.view_mut((np, 0), (nc, np)).copy_from(&(&controller.bc * &plant.cp));
    m.view_mut((np, np), (nc, nc)).copy_from(&controller.ac);
    m.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0_f64, f64::max)
}

/// Random interconnection whose periodic closed loop is a strict
/// contraction (spectral radius below 0.98). Built from a well-damped
/// plant plus small feedback gains, then verified and resampled on the
/// rare miss.
pub fn random_stable_loop<R: Rng + ?Sized>(rng: &mut R, h: f64) -> (PlantModel, ControllerModel) {
    loop {
        let np = rng.random_range(2..=4);
        let ny = rng.random_range(1..=np.min(2));
        let nu = rng.random_range(1..=2);
        let nc = rng.random_range(1..=2);
        let g = DMatrix::from_fn(np, np, |_, _| rng.random_range(-1.0..1.0));
        let shift = g.norm() + 0.3;
        let ap = &g - DMatrix::identity(np, np) * shift;
        let bp = DMatrix::from_fn(np, nu, |_, _| rng.random_range(-1.0..1.0));
        let cp = DMatrix::from_fn(ny, np, |_, _| rng.random_range(-1.0..1.0));
        let e = DMatrix::from_fn(np, 1, |_, _| rng.random_range(-1.0..1.0));
        let ac = DMatrix::from_fn(nc, nc, |_, _| rng.random_range(-0.5..0.5));
        let bc = DMatrix::from_fn(nc, ny, |_, _| rng.random_range(-0.2..0.2));
        let cc = DMatrix::from_fn(nu, nc, |_, _| rng.random_range(-0.3..0.3));
        let dc = DMatrix::from_fn(nu, ny, |_, _| rng.random_range(-0.3..0.3));
        let plant = match PlantModel::new(ap, bp, cp, e) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let controller = match ControllerModel::new(ac, bc, cc, dc, h) {
            Ok(c) => c,
            Err(_) => continue,
        };
        if closed_loop_radius(&plant, &controller, h) < 0.98 {
            return (plant, controller);
        }
    }
}
