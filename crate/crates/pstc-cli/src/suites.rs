//! Health checks run by the `validate` subcommand.
//!
//! Every suite exercises the *loaded* tables against quantities recomputed
//! independently from the configuration (fresh discretizations, sampled
//! trajectories, direct formulas), so a stale, corrupted or mismatched
//! table file fails here rather than silently degrading a run. All
//! sampling is seeded; validation is deterministic.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pstc_core::setcalc::{psd_sqrt, Ellipsoid};
use pstc_core::sysmodel::build_transition_tables;
use pstc_core::OfflineTables;

use crate::config::ProblemConfig;

pub struct Check {
    pub name: &'static str,
    /// `Ok(detail)` on pass, `Err(detail)` on failure.
    pub outcome: Result<String, String>,
}

pub fn run_all(cfg: &ProblemConfig, tables: &OfflineTables) -> Vec<Check> {
    vec![
        Check { name: "config-round-trip", outcome: config_round_trip(cfg) },
        Check { name: "table-self-consistency", outcome: self_consistency(cfg, tables) },
        Check { name: "transition-consistency", outcome: transition_consistency(cfg, tables) },
        Check { name: "disturbance-containment", outcome: disturbance_containment(cfg, tables) },
        Check { name: "bound-dominance", outcome: bound_dominance(cfg, tables) },
        Check { name: "estimator-initialization", outcome: estimator_initialization(cfg, tables) },
    ]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

fn mat_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    a.shape() == b.shape() && (a - b).amax() <= tol * (1.0 + a.amax().max(b.amax()))
}

/// The canonical text must parse back to an identical configuration —
/// otherwise the hash embedded in table files does not identify configs.
fn config_round_trip(cfg: &ProblemConfig) -> Result<String, String> {
    let text = cfg.canonical_string();
    let reparsed = ProblemConfig::parse(&text)
        .map_err(|e| format!("canonical text failed to parse: {e:#}"))?;
    if &reparsed != cfg {
        return Err("canonical text parsed to a different configuration".into());
    }
    Ok("canonical serialization is a fixed point".into())
}

/// Cross-ties between table sections that must hold by construction.
/// Catches a file whose sections were corrupted independently.
fn self_consistency(cfg: &ProblemConfig, tables: &OfflineTables) -> Result<String, String> {
    let trig = &tables.trig;
    let dist = &tables.dist;
    if rel(trig.sigma, cfg.sigma) > 1e-12 {
        return Err(format!("stored sigma {} != config sigma {}", trig.sigma, cfg.sigma));
    }
    if !mat_close(&trig.v_shape, &cfg.v, 1e-12) {
        return Err("stored noise shape differs from config V".into());
    }
    let sv = &trig.sqrt_v * trig.sqrt_v.transpose();
    if !mat_close(&sv, &trig.v_shape, 1e-9) {
        return Err("sqrt_v is not a square root of the stored noise shape".into());
    }
    for k in 1..=trig.kappa_max {
        let sw = &trig.sqrt_w[k] * trig.sqrt_w[k].transpose();
        if !mat_close(&sw, &dist.w[k], 1e-9) {
            return Err(format!("sqrt_w[{k}] does not match the disturbance table"));
        }
        let asym = (&trig.qk[k] - trig.qk[k].transpose()).amax();
        if asym > 1e-9 * (1.0 + trig.qk[k].amax()) {
            return Err(format!("qk[{k}] is not symmetric (asymmetry {asym:.2e})"));
        }
        // Recompose the exact quadratic from its factors.
        let m2 = trig.ny + trig.nu;
        let n = trig.np + trig.nc + trig.ny;
        let mut s = DMatrix::zeros(2 * m2, n);
        s.view_mut((0, 0), (m2, n)).copy_from(&trig.nk[k]);
        s.view_mut((m2, 0), (m2, n)).copy_from(&trig.ce);
        let qk = s.transpose() * &trig.qbar * &s;
        if !mat_close(&qk, &trig.qk[k], 1e-9) {
            return Err(format!("qk[{k}] does not recompose from nk[{k}] and ce"));
        }
        if trig.cvw[k] < 0.0 || trig.cw_term[k] < -1e-12 {
            return Err(format!("negative worst-case constant at horizon {k}"));
        }
    }
    if trig.cv < 0.0 {
        return Err("negative pure-noise constant".into());
    }
    let np = trig.np;
    let id = DMatrix::identity(np, np);
    if !mat_close(&tables.trans.phi_p[0], &id, 1e-12) {
        return Err("phi_p[0] is not the identity".into());
    }
    Ok(format!("{} horizons cross-checked", trig.kappa_max))
}

/// Loaded transition tables against a fresh discretization of the config.
fn transition_consistency(cfg: &ProblemConfig, tables: &OfflineTables) -> Result<String, String> {
    let plant = cfg.plant().map_err(|e| e.to_string())?;
    let controller = cfg.controller().map_err(|e| e.to_string())?;
    let trig_cfg = cfg.trigger_config().map_err(|e| e.to_string())?;
    let fresh = build_transition_tables(&plant, &controller, &trig_cfg).map_err(|e| e.to_string())?;
    let trans = &tables.trans;
    if trans.kappa_max != cfg.kappa_max || rel(trans.h, cfg.h) > 1e-12 {
        return Err("stored horizon count or period differs from config".into());
    }
    for k in 0..=cfg.kappa_max {
        if !mat_close(&trans.phi_p[k], &fresh.phi_p[k], 1e-9)
            || !mat_close(&trans.gamma_p[k], &fresh.gamma_p[k], 1e-9)
            || !mat_close(&trans.phi_c[k], &fresh.phi_c[k], 1e-9)
            || !mat_close(&trans.gamma_c[k], &fresh.gamma_c[k], 1e-9)
        {
            return Err(format!("transition tables differ from a fresh build at horizon {k}"));
        }
    }
    // Inverse-step consistency: phi_p[k] * inv^k == I.
    let np = plant.np();
    let mut inv_pow = DMatrix::identity(np, np);
    for k in 0..=cfg.kappa_max {
        let prod = &trans.phi_p[k] * &inv_pow;
        if !mat_close(&prod, &DMatrix::identity(np, np), 1e-7) {
            return Err(format!("phi_p[{k}] times the inverse step power is not the identity"));
        }
        inv_pow = &inv_pow * &trans.phi_p_inv_step;
    }
    Ok(format!("{} horizons match a fresh discretization", cfg.kappa_max))
}

/// Monte-Carlo containment of the disturbance reach sets: integrate the
/// disturbance response under random admissible piecewise-constant signals
/// with a fine fresh discretization and check membership in the loaded
/// per-horizon shapes.
fn disturbance_containment(cfg: &ProblemConfig, tables: &OfflineTables) -> Result<String, String> {
    let plant = cfg.plant().map_err(|e| e.to_string())?;
    let dist = &tables.dist;
    if dist.w.iter().all(|w| w.trace() <= 0.0) {
        return Ok("disturbance-free problem; nothing to contain".into());
    }
    let wbar_set = Ellipsoid::centered(cfg.wbar.clone()).map_err(|e| e.to_string())?;
    let substeps = 16usize;
    let (phi_s, _, gamma_w_s) = pstc_core::sysmodel::discretize(&plant, cfg.h / substeps as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let runs = 200;
    for run in 0..runs {
        let kappa = rng.random_range(1..=cfg.kappa_max);
        let mut x = DVector::zeros(plant.np());
        for _ in 0..kappa * substeps {
            let w = wbar_set.sample_point(&mut rng);
            x = &phi_s * x + &gamma_w_s * w;
        }
        let set = Ellipsoid::centered(dist.w[kappa].clone()).map_err(|e| e.to_string())?;
        if !set.contains(&x, 1e-6) {
            return Err(format!(
                "run {run}: horizon-{kappa} disturbance response escapes the stored reach set"
            ));
        }
    }
    Ok(format!("{runs} random admissible signals contained"))
}

/// The stored worst-case bound must dominate the test value realized by any
/// admissible estimation error, disturbance and noise. Realizations are
/// computed at the signal level from a fresh discretization — nothing from
/// the trigger section of the file is reused on the realization side.
fn bound_dominance(cfg: &ProblemConfig, tables: &OfflineTables) -> Result<String, String> {
    let plant = cfg.plant().map_err(|e| e.to_string())?;
    let controller = cfg.controller().map_err(|e| e.to_string())?;
    let trig_cfg = cfg.trigger_config().map_err(|e| e.to_string())?;
    let fresh = build_transition_tables(&plant, &controller, &trig_cfg).map_err(|e| e.to_string())?;
    let trig = &tables.trig;
    let (np, nc, ny) = (trig.np, trig.nc, trig.ny);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let noise_set = if cfg.v.trace() > 0.0 {
        Some(Ellipsoid::centered(cfg.v.clone()).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let samples = 2000;
    let mut max_gap = f64::NEG_INFINITY;
    for sample in 0..samples {
        // Random decision state and a random PSD estimation-error shape.
        let xp = DVector::from_fn(np, |_, _| rng.random_range(-3.0..3.0));
        let xc = DVector::from_fn(nc, |_, _| rng.random_range(-3.0..3.0));
        let y_held = DVector::from_fn(ny, |_, _| rng.random_range(-3.0..3.0));
        let a = DMatrix::from_fn(np, np, |_, _| rng.random_range(-0.3..0.3));
        let x_shape = &a * a.transpose();
        let x_sqrt = psd_sqrt(&x_shape);
        let err_set = Ellipsoid::centered(x_shape).map_err(|e| e.to_string())?;
        let kappa = rng.random_range(1..=cfg.kappa_max);
        let dist_set = if tables.dist.w[kappa].trace() > 0.0 {
            Some(Ellipsoid::centered(tables.dist.w[kappa].clone()).map_err(|e| e.to_string())?)
        } else {
            None
        };

        let p = trig.assemble_p(&xp, &xc, &y_held);
        let bound = trig.eta_bar(kappa, &p, &x_sqrt);

        let e = err_set.sample_point(&mut rng);
        let d = dist_set
            .as_ref()
            .map(|s| s.sample_point(&mut rng))
            .unwrap_or_else(|| DVector::zeros(np));
        let v = noise_set
            .as_ref()
            .map(|s| s.sample_point(&mut rng))
            .unwrap_or_else(|| DVector::zeros(ny));

        // Signal-level realization. Both the plant input and the controller
        // output keep using the held measurement over the whole horizon —
        // the loop has not transmitted yet.
        let u_held = &controller.cc * &xc + &controller.dc * &y_held;
        let xp_k = &fresh.phi_p[kappa] * (&xp + &e) + &fresh.gamma_p[kappa] * &u_held + &d;
        let y_k = &plant.cp * &xp_k + &v;
        let xc_k = &fresh.phi_c[kappa] * &xc + &fresh.gamma_c[kappa] * &y_held;
        let ups_k = &controller.cc * &xc_k + &controller.dc * &y_held;
        let mut zeta = DVector::zeros(ny + ups_k.len());
        zeta.rows_mut(0, ny).copy_from(&y_k);
        zeta.rows_mut(ny, ups_k.len()).copy_from(&ups_k);
        let mut zeta_hat = DVector::zeros(ny + u_held.len());
        zeta_hat.rows_mut(0, ny).copy_from(&y_held);
        zeta_hat.rows_mut(ny, u_held.len()).copy_from(&u_held);
        let diff = &zeta - &zeta_hat;
        let realized = diff.norm_squared() - cfg.sigma * cfg.sigma * zeta.norm_squared();

        let tol = 1e-9 * (1.0 + bound.abs());
        if realized > bound + tol {
            return Err(format!(
                "sample {sample}: realized test value {realized:.6e} exceeds stored bound {bound:.6e} at horizon {kappa}"
            ));
        }
        max_gap = max_gap.max(realized - bound);
    }
    Ok(format!("{samples} realizations dominated (worst slack {:.2e})", -max_gap))
}

/// Loaded initialization tables against fresh simulated startup windows:
/// exact recovery without uncertainty, containment with it.
fn estimator_initialization(cfg: &ProblemConfig, tables: &OfflineTables) -> Result<String, String> {
    let plant = cfg.plant().map_err(|e| e.to_string())?;
    let init = &tables.init;
    let (phi, gamma_u, gamma_w) = pstc_core::sysmodel::discretize(&plant, cfg.h);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);

    // Noise-free windows must recover the state exactly.
    for run in 0..50 {
        let mut x = DVector::from_fn(plant.np(), |_, _| rng.random_range(-5.0..5.0));
        let mut ys = Vec::new();
        let mut us = Vec::new();
        for _ in 0..init.kbar {
            ys.push(&plant.cp * &x);
            let u = DVector::from_fn(plant.nu(), |_, _| rng.random_range(-1.0..1.0));
            x = &phi * &x + &gamma_u * &u;
            us.push(u);
        }
        ys.push(&plant.cp * &x);
        let est = init.assemble(&ys, &us).map_err(|e| e.to_string())?;
        let err = (est.center() - &x).norm();
        if err > 1e-6 * (1.0 + x.norm()) {
            return Err(format!("noise-free run {run}: recovery error {err:.2e}"));
        }
    }

    // Noisy windows must still contain the true state.
    let noise_set = if cfg.v.trace() > 0.0 {
        Some(Ellipsoid::centered(cfg.v.clone()).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let dist_set = if cfg.wbar.trace() > 0.0 {
        Some(Ellipsoid::centered(cfg.wbar.clone()).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let mut failures = 0usize;
    let runs = 100;
    for _ in 0..runs {
        let mut x = DVector::from_fn(plant.np(), |_, _| rng.random_range(-5.0..5.0));
        let mut ys = Vec::new();
        let mut us = Vec::new();
        for _ in 0..init.kbar {
            let v = noise_set
                .as_ref()
                .map(|s| s.sample_point(&mut rng))
                .unwrap_or_else(|| DVector::zeros(plant.ny()));
            ys.push(&plant.cp * &x + v);
            let u = DVector::from_fn(plant.nu(), |_, _| rng.random_range(-1.0..1.0));
            let w = dist_set
                .as_ref()
                .map(|s| s.sample_point(&mut rng))
                .unwrap_or_else(|| DVector::zeros(plant.nw()));
            x = &phi * &x + &gamma_u * &u + &gamma_w * &w;
            us.push(u);
        }
        let v = noise_set
            .as_ref()
            .map(|s| s.sample_point(&mut rng))
            .unwrap_or_else(|| DVector::zeros(plant.ny()));
        ys.push(&plant.cp * &x + v);
        let est = init.assemble(&ys, &us).map_err(|e| e.to_string())?;
        if !est.contains(&x, 1e-9) {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(format!("{failures}/{runs} noisy windows escaped the assembled estimate"));
    }
    Ok(format!("window {} recovers exactly and contains under uncertainty", init.kbar + 1))
}
