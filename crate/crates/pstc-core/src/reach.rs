//! Reachable sets of the disturbance channel, tabulated offline.
//!
//! `w[κ]` bounds every state the plant can be driven to from the origin in
//! `κ` periods by disturbances `w(t)` with `wᵀ W̄⁻¹ w ≤ 1`: the tube
//! `E(0, w[κ])` of the tight parametric family of outer ellipsoids for
//! linear reachability. Tightness is exact along one chosen support
//! direction; every direction is still a guaranteed outer bound, which is
//! the property the estimator and trigger rely on.

use nalgebra::{DMatrix, DVector};

use crate::setcalc::clamp_to_psd;
use crate::sysmodel::PlantModel;
use crate::{Error, Result};

/// Integration controls for the reach-tube ODE.
#[derive(Debug, Clone)]
pub struct ReachConfig {
    /// RK4 steps per sampling period (accuracy knob; cost is offline only).
    pub steps_per_period: usize,
    /// Support direction the tube is tight along; defaults to the
    /// normalized all-ones vector.
    pub l0: Option<DVector<f64>>,
}

impl Default for ReachConfig {
    fn default() -> Self {
        Self { steps_per_period: 20, l0: None }
    }
}

/// Outer reach-set shapes per horizon, `w[0] = 0`.
#[derive(Debug, Clone)]
pub struct DisturbanceTables {
    pub h: f64,
    pub kappa_max: usize,
    pub w: Vec<DMatrix<f64>>,
}

impl DisturbanceTables {
    /// Shape bounding the κ-period disturbance contribution.
    pub fn w(&self, kappa: usize) -> &DMatrix<f64> {
        &self.w[kappa]
    }
}

/// Shape ODE state: `Q̇ = Ap Q + Q Apᵀ + π Q + π⁻¹ G` with the tightness
/// multiplier `π = √(lᵀGl) / √(lᵀQl)` along `l(t) = e^{-Apᵀ t} l₀`.
struct TubeOde {
    ap: DMatrix<f64>,
    ap_t: DMatrix<f64>,
    g: DMatrix<f64>,
    /// Last well-defined multiplier, reused when `l` leaves the ranges of
    /// `G` or `Q` and the ratio degenerates to 0/0.
    last_pi: f64,
}

impl TubeOde {
    fn rhs(&mut self, q: &DMatrix<f64>, l: &DVector<f64>) -> DMatrix<f64> {
        let num = l.dot(&(&self.g * l)).max(0.0).sqrt();
        let den = l.dot(&(q * l)).max(0.0).sqrt();
        let pi = if num > 0.0 && den > 0.0 {
            self.last_pi = num / den;
            self.last_pi
        } else {
            self.last_pi
        };
        &self.ap * q + q * &self.ap_t + q * pi + &self.g / pi
    }

    /// One RK4 step of size `dt` from `(q, l)`; `l_half`/`l_next` are the
    /// exactly propagated support directions at the half and full step.
    fn step(
        &mut self,
        q: &DMatrix<f64>,
        dt: f64,
        l: &DVector<f64>,
        l_half: &DVector<f64>,
        l_next: &DVector<f64>,
    ) -> DMatrix<f64> {
        let k1 = self.rhs(q, l);
        let k2 = self.rhs(&(q + &k1 * (dt / 2.0)), l_half);
        let k3 = self.rhs(&(q + &k2 * (dt / 2.0)), l_half);
        let k4 = self.rhs(&(q + &k3 * dt), l_next);
        let next = q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        (&next + next.transpose()) * 0.5
    }
}

/// Integrates the tube from the origin and records the shape at each period
/// boundary `t = κ h`, κ = 0..=kappa_max.
pub fn build_disturbance_tables(
    plant: &PlantModel,
    wbar: &DMatrix<f64>,
    h: f64,
    kappa_max: usize,
    cfg: &ReachConfig,
) -> Result<DisturbanceTables> {
    let np = plant.np();
    let nw = plant.nw();
    if wbar.nrows() != nw || wbar.ncols() != nw {
        return Err(Error::DimensionMismatch {
            context: "build_disturbance_tables",
            expected: format!("{nw}x{nw} disturbance shape"),
            got: format!("{}x{}", wbar.nrows(), wbar.ncols()),
        });
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidScenario(format!("period must be positive, got {h}")));
    }
    if cfg.steps_per_period == 0 {
        return Err(Error::InvalidScenario("steps_per_period must be at least 1".into()));
    }
    let wbar = clamp_to_psd("build_disturbance_tables: disturbance shape", wbar)?;
    let g = clamp_to_psd(
        "build_disturbance_tables: lifted disturbance shape",
        &(&plant.e * &wbar * plant.e.transpose()),
    )?;

    let mut w = Vec::with_capacity(kappa_max + 1);
    w.push(DMatrix::zeros(np, np));
    if g.trace() <= 0.0 {
        // Deterministic limit: nothing is reachable from the origin.
        for _ in 0..kappa_max {
            w.push(DMatrix::zeros(np, np));
        }
        return Ok(DisturbanceTables { h, kappa_max, w });
    }

    let l0 = match &cfg.l0 {
        Some(l) => {
            if l.len() != np || l.norm() == 0.0 {
                return Err(Error::InvalidScenario(format!(
                    "support direction must be a nonzero vector of length {np}"
                )));
            }
            l.normalize()
        }
        None => DVector::from_element(np, 1.0).normalize(),
    };

    let dt = h / cfg.steps_per_period as f64;
    let l_half_step = (plant.ap.transpose() * (-dt / 2.0)).exp();

    // The ODE is singular at Q = 0; start one substep in with the exact
    // small-time expansion Q(dt) ≈ dt² G, regularized so the multiplier is
    // defined off the range of G as well.
    let mut q = &g * (dt * dt) + DMatrix::identity(np, np) * (1e-12 * g.trace());
    let mut l = &l_half_step * &l_half_step * &l0;
    let mut ode = TubeOde {
        ap: plant.ap.clone(),
        ap_t: plant.ap.transpose(),
        g,
        last_pi: 1.0,
    };
    // Prime the multiplier from the seed state.
    let _ = ode.rhs(&q, &l);

    for kappa in 1..=kappa_max {
        // The seed consumed the first substep of the first period.
        let steps = if kappa == 1 { cfg.steps_per_period - 1 } else { cfg.steps_per_period };
        for _ in 0..steps {
            let l_half = &l_half_step * &l;
            let l_next = &l_half_step * &l_half;
            q = ode.step(&q, dt, &l, &l_half, &l_next);
            l = l_next;
        }
        w.push(clamp_to_psd("build_disturbance_tables: tube shape", &q)?);
    }

    Ok(DisturbanceTables { h, kappa_max, w })
}

/// One-shot tube shape over a total span `t`, integrated with `steps` RK4
/// substeps; convenience wrapper used by validation suites.
pub fn reach_shape(
    plant: &PlantModel,
    wbar: &DMatrix<f64>,
    t: f64,
    steps: usize,
) -> Result<DMatrix<f64>> {
    let cfg = ReachConfig { steps_per_period: steps, l0: None };
    let tables = build_disturbance_tables(plant, wbar, t, 1, &cfg)?;
    Ok(tables.w[1].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::discretize;
    use approx::assert_relative_eq;
    use rand::rngs::SmallRng;
    use rand::{Rng, SeedableRng};

    fn scalar_plant(a: f64) -> PlantModel {
        PlantModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn scalar_tube_matches_closed_form() {
        // ẋ = -x + w, |w| <= 1: reach radius 1 - e^{-t}, shape its square.
        let plant = scalar_plant(-1.0);
        let wbar = DMatrix::identity(1, 1);
        let tables =
            build_disturbance_tables(&plant, &wbar, 0.1, 25, &ReachConfig::default()).unwrap();
        for kappa in 1..=25usize {
            let t = 0.1 * kappa as f64;
            let exact = (1.0 - (-t).exp()).powi(2);
            assert_relative_eq!(tables.w[kappa][(0, 0)], exact, max_relative = 5e-3);
        }
        assert_eq!(tables.w[0][(0, 0)], 0.0);
    }

    #[test]
    fn zero_disturbance_gives_zero_tables() {
        let plant = scalar_plant(-1.0);
        let wbar = DMatrix::zeros(1, 1);
        let tables =
            build_disturbance_tables(&plant, &wbar, 0.1, 5, &ReachConfig::default()).unwrap();
        for k in 0..=5 {
            assert_eq!(tables.w[k].amax(), 0.0);
        }
    }

    #[test]
    fn tube_contains_sampled_piecewise_constant_runs() {
        // Double integrator driven through the velocity channel.
        let plant = PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.3, 1.0]),
        )
        .unwrap();
        let wbar = DMatrix::from_element(1, 1, 0.5);
        let h = 0.05;
        let kappa_max = 10;
        let cfg = ReachConfig { steps_per_period: 40, l0: None };
        let tables = build_disturbance_tables(&plant, &wbar, h, kappa_max, &cfg).unwrap();

        let substeps = 8usize;
        let (phi, _, gw) = discretize(&plant, h / substeps as f64);
        let mut rng = SmallRng::seed_from_u64(42);
        let radius = 0.5f64.sqrt();
        for _ in 0..200 {
            let kappa = rng.random_range(1..=kappa_max);
            let mut x = DVector::zeros(2);
            for _ in 0..kappa * substeps {
                let wv: f64 = rng.random_range(-radius..=radius);
                x = &phi * x + &gw * DVector::from_element(1, wv);
            }
            let tube = crate::setcalc::Ellipsoid::centered(tables.w[kappa].clone()).unwrap();
            assert!(
                tube.contains(&x, 1e-6),
                "escaped tube at kappa={kappa}: x = {x:?}"
            );
        }
    }

    #[test]
    fn traces_grow_for_stable_scalar() {
        let plant = scalar_plant(-0.5);
        let wbar = DMatrix::identity(1, 1);
        let tables =
            build_disturbance_tables(&plant, &wbar, 0.2, 10, &ReachConfig::default()).unwrap();
        for k in 1..=10usize {
            assert!(tables.w[k].trace() > tables.w[k - 1].trace());
        }
    }

    #[test]
    fn one_shot_shape_matches_tables() {
        let plant = scalar_plant(-1.0);
        let wbar = DMatrix::identity(1, 1);
        let shape = reach_shape(&plant, &wbar, 0.5, 100).unwrap();
        let exact = (1.0 - (-0.5f64).exp()).powi(2);
        assert_relative_eq!(shape[(0, 0)], exact, max_relative = 5e-3);
    }
}
