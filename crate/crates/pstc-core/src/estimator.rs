//! Guaranteed state estimation.
//!
//! The estimate is an ellipsoid certified to contain the true plant state.
//! [`predict`] pushes it through the sampled dynamics and inflates by the
//! disturbance reach set; [`correct`] intersects it with the measurement
//! set. With no usable prior, [`InitTables`] assembles a first certified
//! ellipsoid from a stack of measurements taken over the shortest window
//! that makes the plant observable.

use nalgebra::{DMatrix, DVector};

use crate::reach::DisturbanceTables;
use crate::setcalc::{
    affine_map, clamp_to_psd, fusion_optimal, hyperplane_fusion, minksum_outer, Ellipsoid,
    EllipticalCylinder,
};
use crate::sysmodel::{PlantModel, TransitionTables};
use crate::{Error, Result};

/// How [`correct`] reconciled the prior with the measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrectionOutcome {
    /// Parametric fusion succeeded with the reported weight.
    Fused { lambda: f64 },
    /// Noise-free measurement: the prior was sliced by the exact
    /// measurement subspace.
    Sliced,
    /// Prior is a single point and the measurement agrees with it.
    Consistent,
    /// Prior is flat in a measured direction; kept unchanged (sound but
    /// not tightened).
    DegeneratePrior,
    /// Measurement is inconsistent with the prior under the declared
    /// bounds; prior kept. Persistent violations mean the model lies.
    ModelViolation,
}

impl CorrectionOutcome {
    pub fn is_violation(&self) -> bool {
        matches!(self, CorrectionOutcome::ModelViolation)
    }
}

/// One-step (or κ-step) time update: maps the estimate through the sampled
/// transition with the held input and inflates by the disturbance tube.
pub fn predict(
    estimate: &Ellipsoid,
    phi: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    u: &DVector<f64>,
    w_shape: &DMatrix<f64>,
) -> Result<Ellipsoid> {
    let moved = affine_map(phi, estimate, &(gamma * u))?;
    let tube = Ellipsoid::centered(w_shape.clone())?;
    minksum_outer(&moved, &tube)
}

/// Measurement update: outer bound of `prior ∩ {x : y − Cp x ∈ E(0, V)}`.
///
/// Degenerate geometry never aborts the loop — every fallback keeps the
/// prior, which remains a certified container; the outcome reports what
/// happened so callers can log it.
pub fn correct(
    prior: &Ellipsoid,
    cp: &DMatrix<f64>,
    y: &DVector<f64>,
    v_shape: &DMatrix<f64>,
) -> Result<(Ellipsoid, CorrectionOutcome)> {
    let np = prior.dim();
    let ny = y.len();
    if cp.nrows() != ny || cp.ncols() != np || v_shape.nrows() != ny || v_shape.ncols() != ny {
        return Err(Error::DimensionMismatch {
            context: "correct",
            expected: format!("{ny}x{np} output map and {ny}x{ny} noise shape"),
            got: format!(
                "{}x{} map, {}x{} shape",
                cp.nrows(),
                cp.ncols(),
                v_shape.nrows(),
                v_shape.ncols()
            ),
        });
    }

    // Point prior: nothing can shrink further; just check consistency.
    if prior.size() <= 0.0 {
        let resid = y - cp * prior.center();
        let tol = 1e-6 * (1.0 + y.norm());
        let consistent = if v_shape.trace() <= 0.0 {
            resid.norm() <= tol
        } else {
            Ellipsoid::centered(v_shape.clone())?.contains(&resid, 1e-6)
        };
        return Ok((
            prior.clone(),
            if consistent { CorrectionOutcome::Consistent } else { CorrectionOutcome::ModelViolation },
        ));
    }

    if v_shape.trace() <= 0.0 {
        // Exact measurement: slice the prior by Cp x = y.
        return match hyperplane_fusion(prior, cp, y) {
            Ok(sliced) => Ok((sliced, CorrectionOutcome::Sliced)),
            Err(Error::EmptyIntersection { .. }) => {
                Ok((prior.clone(), CorrectionOutcome::ModelViolation))
            }
            Err(Error::NotPositiveDefinite { .. }) => {
                Ok((prior.clone(), CorrectionOutcome::DegeneratePrior))
            }
            Err(e) => Err(e),
        };
    }

    // Noisy measurement: parametric fusion needs both shapes PD. A ridge
    // only enlarges a set, so adding one keeps every containment claim.
    let ridge = |m: &DMatrix<f64>| {
        let n = m.nrows();
        m + DMatrix::identity(n, n) * (1e-12 * f64::max(1.0, m.trace()))
    };
    let prior_pd = if nalgebra::Cholesky::new(prior.shape().clone()).is_some() {
        prior.clone()
    } else {
        Ellipsoid::new(prior.center().clone(), ridge(prior.shape()))?
    };
    let v_pd = if nalgebra::Cholesky::new(v_shape.clone()).is_some() {
        v_shape.clone()
    } else {
        ridge(v_shape)
    };
    let cyl = EllipticalCylinder::new(y.clone(), v_pd, cp.clone())?;
    match fusion_optimal(&prior_pd, &cyl) {
        Ok((fused, lambda)) => Ok((fused, CorrectionOutcome::Fused { lambda })),
        Err(Error::EmptyIntersection { .. }) => {
            Ok((prior.clone(), CorrectionOutcome::ModelViolation))
        }
        Err(e) => Err(e),
    }
}

/// Precomputed data for assembling the first certified estimate out of the
/// measurements `y(0..=kbar)` and applied inputs `u(0..kbar)`.
///
/// The window length `kbar` is the smallest number of extra periods that
/// makes the stacked observability map injective. Writing the stack in
/// terms of the *final* state keeps every power of the transition matrix
/// non-positive, and mapping the stacked noise bound through the
/// pseudoinverse avoids inverting it — so a noise-free setup degenerates
/// cleanly to a point estimate.
#[derive(Debug, Clone)]
pub struct InitTables {
    pub kbar: usize,
    /// Pseudoinverse of the backdated observability stack (np x (kbar+1)ny).
    pub obar_pinv: DMatrix<f64>,
    /// Shape of the assembled estimate — fixed offline.
    pub init_shape: DMatrix<f64>,
    /// `input_comp[k][j-k]` maps `u(j)` into the measurement at period `k`,
    /// for `j` in `k..kbar`.
    pub input_comp: Vec<Vec<DMatrix<f64>>>,
    pub np: usize,
    pub ny: usize,
    pub nu: usize,
}

impl InitTables {
    pub fn build(
        plant: &PlantModel,
        h: f64,
        trans: &TransitionTables,
        dist: &DisturbanceTables,
        v: &DMatrix<f64>,
    ) -> Result<Self> {
        let np = plant.np();
        let ny = plant.ny();
        let nu = plant.nu();
        if (trans.h - h).abs() > 1e-12 * h.max(1.0) {
            return Err(Error::InvalidScenario(format!(
                "transition tables built for period {}, requested {h}",
                trans.h
            )));
        }
        let v = clamp_to_psd("InitTables::build: noise shape", v)?;
        if v.nrows() != ny {
            return Err(Error::DimensionMismatch {
                context: "InitTables::build",
                expected: format!("{ny}x{ny} noise shape"),
                got: format!("{}x{}", v.nrows(), v.ncols()),
            });
        }

        // Smallest window with an injective observability stack.
        let phi_step = (plant.ap.clone() * h).exp();
        let mut stack = plant.cp.clone();
        let mut power = DMatrix::identity(np, np);
        let mut kbar = None;
        for k in 0..np {
            if k > 0 {
                power = &power * &phi_step;
                stack = DMatrix::from_fn(stack.nrows() + ny, np, |r, c| {
                    if r < stack.nrows() {
                        stack[(r, c)]
                    } else {
                        (&plant.cp * &power)[(r - stack.nrows(), c)]
                    }
                });
            }
            let rank = stack
                .clone()
                .svd(false, false)
                .rank(1e-9 * f64::max(1.0, stack.amax()));
            if rank == np {
                kbar = Some(k);
                break;
            }
        }
        let kbar = kbar.ok_or(Error::NotObservable {
            rank: stack
                .clone()
                .svd(false, false)
                .rank(1e-9 * f64::max(1.0, stack.amax())),
            n: np,
            steps: np,
        })?;
        if kbar > dist.kappa_max {
            return Err(Error::InvalidScenario(format!(
                "initialization needs disturbance tables over {kbar} periods, have {}",
                dist.kappa_max
            )));
        }

        // Inverse transition powers: inv_pows[m] = Φ^{-m}.
        let mut inv_pows = Vec::with_capacity(kbar + 1);
        inv_pows.push(DMatrix::identity(np, np));
        for m in 0..kbar {
            inv_pows.push(&trans.phi_p_inv_step * &inv_pows[m]);
        }

        // Backdated stack: block k is Cp Φ^{k - kbar}, so the unknown is
        // the state at the *end* of the window.
        let mut obar = DMatrix::zeros((kbar + 1) * ny, np);
        for k in 0..=kbar {
            obar.view_mut((k * ny, 0), (ny, np))
                .copy_from(&(&plant.cp * &inv_pows[kbar - k]));
        }
        let obar_pinv = obar
            .clone()
            .svd(true, true)
            .pseudo_inverse(1e-12 * f64::max(1.0, obar.amax()))
            .map_err(|_| Error::RankDeficient {
                context: "InitTables::build: observability stack",
                required: np,
                got: 0,
            })?;

        // Input feedthrough of measurement k: u(j) acted from period j to
        // the window end, then got backdated like the state.
        let gamma_step = &trans.gamma_p[1];
        let mut input_comp = Vec::with_capacity(kbar + 1);
        for k in 0..=kbar {
            let mut row = Vec::with_capacity(kbar - k);
            for j in k..kbar {
                // Φ^{k-1-j} Γ with k-1-j in [-kbar, -1].
                row.push(&plant.cp * &inv_pows[j + 1 - k] * gamma_step);
            }
            input_comp.push(row);
        }

        // Effective noise of measurement k: its own noise plus the
        // backdated disturbance accumulated over the remaining window.
        // Independent bounds stack into a block-diagonal outer shape with
        // equal weights.
        let mut vbar = DMatrix::zeros((kbar + 1) * ny, (kbar + 1) * ny);
        for k in 0..=kbar {
            let back = &plant.cp * &inv_pows[kbar - k];
            let pushed = affine_map(
                &back,
                &Ellipsoid::centered(dist.w(kbar - k).clone())?,
                &DVector::zeros(ny),
            )?;
            let vk = minksum_outer(&Ellipsoid::centered(v.clone())?, &pushed)?;
            vbar.view_mut((k * ny, k * ny), (ny, ny))
                .copy_from(&(vk.shape() * (kbar + 1) as f64));
        }
        let init_shape = clamp_to_psd(
            "InitTables::build: assembled shape",
            &(&obar_pinv * vbar * obar_pinv.transpose()),
        )?;

        Ok(Self { kbar, obar_pinv, init_shape, input_comp, np, ny, nu })
    }

    /// Number of measurements the window consumes.
    pub fn samples_needed(&self) -> usize {
        self.kbar + 1
    }

    /// Assembles the certified estimate of the state at the *last* sample
    /// instant from `ys = y(0..=kbar)` and `us = u(0..kbar)` (inputs held
    /// one period each).
    pub fn assemble(&self, ys: &[DVector<f64>], us: &[DVector<f64>]) -> Result<Ellipsoid> {
        if ys.len() != self.kbar + 1 || us.len() < self.kbar {
            return Err(Error::InvalidScenario(format!(
                "initialization needs {} measurements and {} inputs, got {} and {}",
                self.kbar + 1,
                self.kbar,
                ys.len(),
                us.len()
            )));
        }
        let mut psi = DVector::zeros((self.kbar + 1) * self.ny);
        for k in 0..=self.kbar {
            let mut entry = ys[k].clone();
            for (offset, m) in self.input_comp[k].iter().enumerate() {
                entry += m * &us[k + offset];
            }
            psi.rows_mut(k * self.ny, self.ny).copy_from(&entry);
        }
        Ellipsoid::new(&self.obar_pinv * psi, self.init_shape.clone())
    }
}
