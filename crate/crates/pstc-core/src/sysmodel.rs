//! Plant/controller containers and sampled-data transition tables.
//!
//! The plant is continuous-time LTI with a disturbance input; the controller
//! is discrete-time LTI driven by held output samples. Everything downstream
//! works on the κ-step transition matrices tabulated here, where one step is
//! the base sampling period `h`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Continuous-time plant `ẋ = Ap x + Bp u + E w`, `y = Cp x + v`.
#[derive(Debug, Clone)]
pub struct PlantModel {
    pub ap: DMatrix<f64>,
    pub bp: DMatrix<f64>,
    pub cp: DMatrix<f64>,
    pub e: DMatrix<f64>,
}

impl PlantModel {
    pub fn new(
        ap: DMatrix<f64>,
        bp: DMatrix<f64>,
        cp: DMatrix<f64>,
        e: DMatrix<f64>,
    ) -> Result<Self> {
        let np = ap.nrows();
        if np == 0 || ap.ncols() != np {
            return Err(Error::InvalidModel(format!(
                "plant state matrix must be square and non-empty, got {}x{}",
                ap.nrows(),
                ap.ncols()
            )));
        }
        if bp.nrows() != np || bp.ncols() == 0 {
            return Err(Error::InvalidModel(format!(
                "plant input matrix must be {np}xnu, got {}x{}",
                bp.nrows(),
                bp.ncols()
            )));
        }
        if cp.ncols() != np || cp.nrows() == 0 {
            return Err(Error::InvalidModel(format!(
                "plant output matrix must be nyx{np}, got {}x{}",
                cp.nrows(),
                cp.ncols()
            )));
        }
        if e.nrows() != np || e.ncols() == 0 {
            return Err(Error::InvalidModel(format!(
                "disturbance matrix must be {np}xnw, got {}x{}",
                e.nrows(),
                e.ncols()
            )));
        }
        for (name, m) in [("Ap", &ap), ("Bp", &bp), ("Cp", &cp), ("E", &e)] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} has non-finite entries")));
            }
        }
        Ok(Self { ap, bp, cp, e })
    }

    pub fn np(&self) -> usize {
        self.ap.nrows()
    }

    pub fn nu(&self) -> usize {
        self.bp.ncols()
    }

    pub fn ny(&self) -> usize {
        self.cp.nrows()
    }

    pub fn nw(&self) -> usize {
        self.e.ncols()
    }
}

/// Discrete-time output-feedback controller, advanced once per sampling
/// period: `xc⁺ = Ac xc + Bc ŷ`, `u = Cc xc + Dc ŷ` where `ŷ` is the last
/// transmitted measurement.
#[derive(Debug, Clone)]
pub struct ControllerModel {
    pub ac: DMatrix<f64>,
    pub bc: DMatrix<f64>,
    pub cc: DMatrix<f64>,
    pub dc: DMatrix<f64>,
    /// Base sampling period in seconds.
    pub h: f64,
}

impl ControllerModel {
    pub fn new(
        ac: DMatrix<f64>,
        bc: DMatrix<f64>,
        cc: DMatrix<f64>,
        dc: DMatrix<f64>,
        h: f64,
    ) -> Result<Self> {
        let nc = ac.nrows();
        if nc == 0 || ac.ncols() != nc {
            return Err(Error::InvalidModel(format!(
                "controller state matrix must be square and non-empty, got {}x{}",
                ac.nrows(),
                ac.ncols()
            )));
        }
        let ny = bc.ncols();
        let nu = cc.nrows();
        if bc.nrows() != nc || ny == 0 {
            return Err(Error::InvalidModel(format!(
                "controller input matrix must be {nc}xny, got {}x{}",
                bc.nrows(),
                bc.ncols()
            )));
        }
        if cc.ncols() != nc || nu == 0 {
            return Err(Error::InvalidModel(format!(
                "controller output matrix must be nux{nc}, got {}x{}",
                cc.nrows(),
                cc.ncols()
            )));
        }
        if dc.nrows() != nu || dc.ncols() != ny {
            return Err(Error::InvalidModel(format!(
                "controller feedthrough must be {nu}x{ny}, got {}x{}",
                dc.nrows(),
                dc.ncols()
            )));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidModel(format!("sampling period must be positive, got {h}")));
        }
        for (name, m) in [("Ac", &ac), ("Bc", &bc), ("Cc", &cc), ("Dc", &dc)] {
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidModel(format!("{name} has non-finite entries")));
            }
        }
        Ok(Self { ac, bc, cc, dc, h })
    }

    pub fn nc(&self) -> usize {
        self.ac.nrows()
    }

    pub fn nu(&self) -> usize {
        self.cc.nrows()
    }

    pub fn ny(&self) -> usize {
        self.bc.ncols()
    }

    /// Controller output for the current state and held measurement.
    pub fn output(&self, xc: &DVector<f64>, y_held: &DVector<f64>) -> DVector<f64> {
        &self.cc * xc + &self.dc * y_held
    }

    /// One controller state update driven by the held measurement.
    pub fn advance(&self, xc: &DVector<f64>, y_held: &DVector<f64>) -> DVector<f64> {
        &self.ac * xc + &self.bc * y_held
    }
}

/// Triggering parameters shared by every offline table.
#[derive(Debug, Clone, Copy)]
pub struct TriggerConfig {
    /// Performance-decay rate σ ∈ (0, 1) of the reference quadratic test.
    pub sigma: f64,
    /// Heartbeat: largest admissible inter-sample time in periods.
    pub kappa_max: usize,
}

impl TriggerConfig {
    pub fn new(sigma: f64, kappa_max: usize) -> Result<Self> {
        if !(sigma.is_finite() && 0.0 < sigma && sigma < 1.0) {
            return Err(Error::InvalidModel(format!(
                "decay rate sigma must lie in (0, 1), got {sigma}"
            )));
        }
        if kappa_max == 0 {
            return Err(Error::InvalidModel("kappa_max must be at least 1".into()));
        }
        Ok(Self { sigma, kappa_max })
    }
}

/// Checks plant and controller agree on input/output dimensions.
pub fn check_interconnection(plant: &PlantModel, controller: &ControllerModel) -> Result<()> {
    if plant.nu() != controller.nu() || plant.ny() != controller.ny() {
        return Err(Error::InvalidModel(format!(
            "plant expects {}x{} (inputs x outputs), controller provides {}x{}",
            plant.nu(),
            plant.ny(),
            controller.nu(),
            controller.ny()
        )));
    }
    Ok(())
}

/// Zero-order-hold discretization of the plant over one interval `dt`:
/// returns `(Φ, Γu, Γw)` with `x⁺ = Φ x + Γu u + Γw w` for constant `u, w`.
///
/// Computed from a single exponential of the augmented matrix
/// `[[Ap, Bp, E], [0, 0, 0]]` so `Γ` blocks are exact integrals, not
/// quadrature.
pub fn discretize(plant: &PlantModel, dt: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (np, nu, nw) = (plant.np(), plant.nu(), plant.nw());
    let n = np + nu + nw;
    let mut aug = DMatrix::zeros(n, n);
    aug.view_mut((0, 0), (np, np)).copy_from(&plant.ap);
    aug.view_mut((0, np), (np, nu)).copy_from(&plant.bp);
    aug.view_mut((0, np + nu), (np, nw)).copy_from(&plant.e);
    let exp = (aug * dt).exp();
    (
        exp.view((0, 0), (np, np)).into_owned(),
        exp.view((0, np), (np, nu)).into_owned(),
        exp.view((0, np + nu), (np, nw)).into_owned(),
    )
}

/// κ-step transition matrices for κ = 0..=kappa_max, one step per period.
///
/// `phi_p[κ] = e^{Ap h κ}`, `gamma_p[κ] = ∫₀^{hκ} e^{Ap s} ds · Bp` (input
/// held over the whole span), `phi_c[κ] = Ac^κ`,
/// `gamma_c[κ] = Σ_{j<κ} Ac^j Bc`. Index 0 holds the identity / zero so κ
/// can be used directly.
#[derive(Debug, Clone)]
pub struct TransitionTables {
    pub h: f64,
    pub kappa_max: usize,
    pub phi_p: Vec<DMatrix<f64>>,
    pub gamma_p: Vec<DMatrix<f64>>,
    pub phi_c: Vec<DMatrix<f64>>,
    pub gamma_c: Vec<DMatrix<f64>>,
    /// `e^{-Ap h}`, the inverse single-period plant transition.
    pub phi_p_inv_step: DMatrix<f64>,
}

pub fn build_transition_tables(
    plant: &PlantModel,
    controller: &ControllerModel,
    cfg: &TriggerConfig,
) -> Result<TransitionTables> {
    check_interconnection(plant, controller)?;
    let h = controller.h;
    let kmax = cfg.kappa_max;
    let (np, nu) = (plant.np(), plant.nu());
    let (phi_step, gamma_step, _) = discretize(plant, h);
    let phi_p_inv_step = (plant.ap.clone() * (-h)).exp();

    let mut phi_p = Vec::with_capacity(kmax + 1);
    let mut gamma_p = Vec::with_capacity(kmax + 1);
    phi_p.push(DMatrix::identity(np, np));
    gamma_p.push(DMatrix::zeros(np, nu));
    for k in 0..kmax {
        phi_p.push(&phi_step * &phi_p[k]);
        // ∫₀^{t+h} = ∫₀^h + e^{Ah} ∫₀^t with the same held input.
        gamma_p.push(&phi_step * &gamma_p[k] + &gamma_step);
    }

    let nc = controller.nc();
    let ny = controller.ny();
    let mut phi_c = Vec::with_capacity(kmax + 1);
    let mut gamma_c = Vec::with_capacity(kmax + 1);
    phi_c.push(DMatrix::identity(nc, nc));
    gamma_c.push(DMatrix::zeros(nc, ny));
    for k in 0..kmax {
        phi_c.push(&controller.ac * &phi_c[k]);
        gamma_c.push(&controller.ac * &gamma_c[k] + &controller.bc);
    }

    Ok(TransitionTables {
        h,
        kappa_max: kmax,
        phi_p,
        gamma_p,
        phi_c,
        gamma_c,
        phi_p_inv_step,
    })
}
