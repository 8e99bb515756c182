//! Worst-case evaluation of the triggering condition.
//!
//! The loop transmits when a quadratic test on `ζ = [y; υ]` against its
//! held reference `ζ̂ = [ŷ; û]` exceeds `ε²`. Between transmissions nothing
//! is measured, so the controller instead bounds the test `κ` periods ahead
//! over everything consistent with the current state estimate: estimation
//! error in `E(0, X)`, disturbance displacement in `E(0, W(κ))` and the
//! future measurement noise in `E(0, V)`. [`TriggerTables::eta_bar`] is that
//! bound — a sum of one exact quadratic and nine worst-case interaction
//! terms, each tight for some admissible realization — and
//! [`TriggerTables::kappa_star_scan`] turns it into the next transmission
//! horizon.
//!
//! The augmented sampled state is `p = [xp; xc; ŷ]` (plant state,
//! controller state, held measurement).

use nalgebra::{DMatrix, DVector};

use crate::reach::DisturbanceTables;
use crate::setcalc::{clamp_to_psd, lambda_max_sym, psd_sqrt};
use crate::sysmodel::{check_interconnection, ControllerModel, PlantModel, TransitionTables};
use crate::{Error, Result};

/// Spectral norm; zero for empty matrices.
fn sigma_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Precomputed matrices for the worst-case trigger bound, indexed by the
/// look-ahead horizon κ (entry 0 is an unused placeholder).
#[derive(Debug, Clone)]
pub struct TriggerTables {
    pub sigma: f64,
    pub kappa_max: usize,
    pub np: usize,
    pub nc: usize,
    pub ny: usize,
    pub nu: usize,
    /// Quadratic form of the test on the stacked `[ζ; ζ̂]`.
    pub qbar: DMatrix<f64>,
    /// Maps `p` to the held reference `ζ̂`.
    pub ce: DMatrix<f64>,
    /// Horizon-κ map from `p` to the noise-free `ζ`.
    pub nk: Vec<DMatrix<f64>>,
    /// `[Nκ; CE]ᵀ Q̄ [Nκ; CE]` — exact part of the test in `p`.
    pub qk: Vec<DMatrix<f64>>,
    /// Plant-state columns of `qk` (estimation error enters only there).
    pub qk_n: Vec<DMatrix<f64>>,
    /// Plant-state diagonal block of `qk`.
    pub qk_nn: Vec<DMatrix<f64>>,
    /// Cross term between `p` and the future measurement noise.
    pub fv: Vec<DMatrix<f64>>,
    /// Cross term between `p` and the disturbance displacement.
    pub fw: Vec<DMatrix<f64>>,
    /// Pure noise / disturbance quadratics.
    pub qv: DMatrix<f64>,
    pub qw: DMatrix<f64>,
    pub v_shape: DMatrix<f64>,
    pub sqrt_v: DMatrix<f64>,
    pub sqrt_w: Vec<DMatrix<f64>>,
    /// `√Vᵀ Fv|Nᵀ` — noise/error interaction, missing only the `√X` factor.
    pub pre_v: Vec<DMatrix<f64>>,
    /// `√W(κ)ᵀ Fw|Nᵀ` — disturbance/error interaction, same convention.
    pub pre_w: Vec<DMatrix<f64>>,
    /// Worst-case noise/disturbance interaction per horizon.
    pub cvw: Vec<f64>,
    /// `λmax(W(κ) Qw)` — pure disturbance worst case per horizon.
    pub cw_term: Vec<f64>,
    /// `λmax(V Qv)` — pure noise worst case.
    pub cv: f64,
}

pub fn build_trigger_tables(
    plant: &PlantModel,
    controller: &ControllerModel,
    trans: &TransitionTables,
    dist: &DisturbanceTables,
    v: &DMatrix<f64>,
    sigma: f64,
    kappa_max: usize,
) -> Result<TriggerTables> {
    check_interconnection(plant, controller)?;
    if trans.kappa_max < kappa_max || dist.kappa_max < kappa_max {
        return Err(Error::InvalidScenario(format!(
            "transition/disturbance tables cover {}/{} horizons, need {kappa_max}",
            trans.kappa_max, dist.kappa_max
        )));
    }
    if (trans.h - dist.h).abs() > 1e-12 * trans.h.max(1.0) {
        return Err(Error::InvalidScenario(format!(
            "table period mismatch: {} vs {}",
            trans.h, dist.h
        )));
    }
    let (np, nc, ny, nu) = (plant.np(), controller.nc(), plant.ny(), plant.nu());
    if v.nrows() != ny || v.ncols() != ny {
        return Err(Error::DimensionMismatch {
            context: "build_trigger_tables",
            expected: format!("{ny}x{ny} noise shape"),
            got: format!("{}x{}", v.nrows(), v.ncols()),
        });
    }
    let v_shape = clamp_to_psd("build_trigger_tables: noise shape", v)?;
    let n = np + nc + ny;
    let m2 = ny + nu;

    // Test form on [ζ; ζ̂]: performance block decays by σ², reference enters
    // through the cross identity blocks.
    let mut qbar = DMatrix::zeros(2 * m2, 2 * m2);
    qbar.view_mut((0, 0), (m2, m2))
        .copy_from(&(DMatrix::identity(m2, m2) * (1.0 - sigma * sigma)));
    qbar.view_mut((0, m2), (m2, m2))
        .copy_from(&(DMatrix::identity(m2, m2) * -1.0));
    qbar.view_mut((m2, 0), (m2, m2))
        .copy_from(&(DMatrix::identity(m2, m2) * -1.0));
    qbar.view_mut((m2, m2), (m2, m2)).copy_from(&DMatrix::identity(m2, m2));

    // Held reference: ŷ is the stored measurement, û = Cc xc + Dc ŷ.
    let mut ce = DMatrix::zeros(m2, n);
    ce.view_mut((0, np + nc), (ny, ny)).copy_from(&DMatrix::identity(ny, ny));
    ce.view_mut((ny, np), (nu, nc)).copy_from(&controller.cc);
    ce.view_mut((ny, np + nc), (nu, ny)).copy_from(&controller.dc);

    // Noise and disturbance injection into the stacked [ζ; ζ̂] vector: both
    // perturb only the measured-output rows.
    let mut cw = DMatrix::zeros(2 * m2, np);
    cw.view_mut((0, 0), (ny, np)).copy_from(&plant.cp);
    let mut cv_map = DMatrix::zeros(2 * m2, ny);
    cv_map.view_mut((0, 0), (ny, ny)).copy_from(&DMatrix::identity(ny, ny));

    let qw = clamp_to_psd(
        "build_trigger_tables: disturbance quadratic",
        &(plant.cp.transpose() * &plant.cp * (1.0 - sigma * sigma)),
    )?;
    let qv = DMatrix::identity(ny, ny) * (1.0 - sigma * sigma);
    let sqrt_v = psd_sqrt(&v_shape);
    let cv = lambda_max_sym(&(sqrt_v.transpose() * &qv * &sqrt_v)).max(0.0);
    let cross_vw = cv_map.transpose() * &qbar * &cw;

    let empty = DMatrix::<f64>::zeros(0, 0);
    let mut nk = vec![empty.clone()];
    let mut qk = vec![empty.clone()];
    let mut qk_n = vec![empty.clone()];
    let mut qk_nn = vec![empty.clone()];
    let mut fv = vec![empty.clone()];
    let mut fw = vec![empty.clone()];
    let mut sqrt_w = vec![empty.clone()];
    let mut pre_v = vec![empty.clone()];
    let mut pre_w = vec![empty.clone()];
    let mut cvw = vec![0.0];
    let mut cw_term = vec![0.0];

    for kappa in 1..=kappa_max {
        // Noise-free ζ after κ periods with held ŷ: the plant sees the held
        // input û = Cc xc + Dc ŷ for the whole span, the controller keeps
        // integrating the held measurement.
        let cp_gamma = &plant.cp * &trans.gamma_p[kappa];
        let mut nk_k = DMatrix::zeros(m2, n);
        nk_k.view_mut((0, 0), (ny, np)).copy_from(&(&plant.cp * &trans.phi_p[kappa]));
        nk_k.view_mut((0, np), (ny, nc)).copy_from(&(&cp_gamma * &controller.cc));
        nk_k.view_mut((0, np + nc), (ny, ny)).copy_from(&(&cp_gamma * &controller.dc));
        nk_k.view_mut((ny, np), (nu, nc))
            .copy_from(&(&controller.cc * &trans.phi_c[kappa]));
        nk_k.view_mut((ny, np + nc), (nu, ny))
            .copy_from(&(&controller.cc * &trans.gamma_c[kappa] + &controller.dc));

        let mut stack = DMatrix::zeros(2 * m2, n);
        stack.view_mut((0, 0), (m2, n)).copy_from(&nk_k);
        stack.view_mut((m2, 0), (m2, n)).copy_from(&ce);

        let qk_k = {
            let raw = stack.transpose() * &qbar * &stack;
            (&raw + raw.transpose()) * 0.5
        };
        let fv_k = stack.transpose() * &qbar * &cv_map;
        let fw_k = stack.transpose() * &qbar * &cw;
        let sw_k = psd_sqrt(dist.w(kappa));

        qk_n.push(qk_k.view((0, 0), (n, np)).into_owned());
        qk_nn.push(qk_k.view((0, 0), (np, np)).into_owned());
        pre_v.push(sqrt_v.transpose() * fv_k.view((0, 0), (np, ny)).transpose());
        pre_w.push(sw_k.transpose() * fw_k.view((0, 0), (np, np)).transpose());
        cvw.push(sigma_max(&(sqrt_v.transpose() * &cross_vw * &sw_k)));
        cw_term.push(lambda_max_sym(&(sw_k.transpose() * &qw * &sw_k)).max(0.0));
        nk.push(nk_k);
        qk.push(qk_k);
        fv.push(fv_k);
        fw.push(fw_k);
        sqrt_w.push(sw_k);
    }

    Ok(TriggerTables {
        sigma,
        kappa_max,
        np,
        nc,
        ny,
        nu,
        qbar,
        ce,
        nk,
        qk,
        qk_n,
        qk_nn,
        fv,
        fw,
        qv,
        qw,
        v_shape,
        sqrt_v,
        sqrt_w,
        pre_v,
        pre_w,
        cvw,
        cw_term,
        cv,
    })
}

impl TriggerTables {
    /// Dimension of the augmented sampled state `p = [xp; xc; ŷ]`.
    pub fn state_dim(&self) -> usize {
        self.np + self.nc + self.ny
    }

    pub fn assemble_p(
        &self,
        xp: &DVector<f64>,
        xc: &DVector<f64>,
        y_held: &DVector<f64>,
    ) -> DVector<f64> {
        let mut p = DVector::zeros(self.state_dim());
        p.rows_mut(0, self.np).copy_from(xp);
        p.rows_mut(self.np, self.nc).copy_from(xc);
        p.rows_mut(self.np + self.nc, self.ny).copy_from(y_held);
        p
    }

    /// The measured test value for actual signals, `[ζ; ζ̂]ᵀ Q̄ [ζ; ζ̂]` —
    /// what a detector with full access to `ζ` would threshold.
    pub fn quadratic_test(&self, zeta: &DVector<f64>, zeta_hat: &DVector<f64>) -> f64 {
        let m2 = self.ny + self.nu;
        let mut s = DVector::zeros(2 * m2);
        s.rows_mut(0, m2).copy_from(zeta);
        s.rows_mut(m2, m2).copy_from(zeta_hat);
        (s.transpose() * &self.qbar * &s)[(0, 0)]
    }

    /// Upper bound on the κ-periods-ahead test value over every admissible
    /// estimation error (`√X` passed as `x_sqrt`), disturbance and noise.
    ///
    /// Term order: exact center quadratic; error cross and pure terms;
    /// noise cross (center/error); disturbance cross (center/error);
    /// noise–disturbance interaction; pure noise; pure disturbance.
    pub fn eta_bar(&self, kappa: usize, p: &DVector<f64>, x_sqrt: &DMatrix<f64>) -> f64 {
        debug_assert!(kappa >= 1 && kappa <= self.kappa_max);
        let qp = self.qk_n[kappa].transpose() * p;
        let fvp = self.fv[kappa].transpose() * p;
        let fwp = self.fw[kappa].transpose() * p;
        let t1 = (p.transpose() * &self.qk[kappa] * p)[(0, 0)];
        let t2 = 2.0 * (x_sqrt.transpose() * &qp).norm();
        let t3 = lambda_max_sym(&(x_sqrt.transpose() * &self.qk_nn[kappa] * x_sqrt)).max(0.0);
        let t4 = 2.0 * (self.sqrt_v.transpose() * &fvp).norm();
        let t5 = 2.0 * sigma_max(&(&self.pre_v[kappa] * x_sqrt));
        let t6 = 2.0 * (self.sqrt_w[kappa].transpose() * &fwp).norm();
        let t7 = 2.0 * sigma_max(&(&self.pre_w[kappa] * x_sqrt));
        let t8 = 2.0 * self.cvw[kappa];
        let t9 = self.cv;
        let t10 = self.cw_term[kappa];
        t1 + t2 + t3 + t4 + t5 + t6 + t7 + t8 + t9 + t10
    }

    /// Largest safe transmission horizon: the first κ whose worst-case test
    /// value exceeds `ε²`, capped at the heartbeat `kappa_max` (whose bound
    /// is never evaluated — transmission there is unconditional).
    ///
    /// Returns the horizon and every bound value probed, in order.
    pub fn kappa_star_scan(
        &self,
        p: &DVector<f64>,
        x_shape: &DMatrix<f64>,
        epsilon: f64,
    ) -> Result<(usize, Vec<f64>)> {
        if p.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "kappa_star_scan",
                expected: format!("{}", self.state_dim()),
                got: format!("{}", p.len()),
            });
        }
        if x_shape.nrows() != self.np || x_shape.ncols() != self.np {
            return Err(Error::DimensionMismatch {
                context: "kappa_star_scan",
                expected: format!("{0}x{0} estimate shape", self.np),
                got: format!("{}x{}", x_shape.nrows(), x_shape.ncols()),
            });
        }
        let x_sqrt = psd_sqrt(x_shape);
        let threshold = epsilon * epsilon;
        let mut etas = Vec::new();
        let mut kappa_star = 1;
        while kappa_star < self.kappa_max {
            let eta = self.eta_bar(kappa_star, p, &x_sqrt);
            etas.push(eta);
            if eta > threshold {
                break;
            }
            kappa_star += 1;
        }
        Ok((kappa_star, etas))
    }
}
