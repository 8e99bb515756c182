//! Closed-loop simulation of the self-triggered loop and its references.
//!
//! One simulator drives three transmission policies over identical noise
//! and disturbance streams:
//!
//! * [`TriggerMode::Pstc`] — transmit, estimate, and pick the next horizon
//!   from the worst-case bound; nothing is measured in between.
//! * [`TriggerMode::Petc`] — a detector at the sensor evaluates the actual
//!   test every period and transmits on the first excess (heartbeat at
//!   `kappa_max`).
//! * [`TriggerMode::Periodic`] — transmit every period.
//!
//! Streams are pregenerated from a seeded [`SignalBank`] keyed by absolute
//! period/substep, so a run in one mode sees exactly the realization another
//! mode would have seen — the property that makes the per-trigger detector
//! reference (`petc_kappa`) a pathwise comparison rather than a statistical
//! one.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use crate::estimator::{correct, predict};
use crate::setcalc::{pd_inverse, Ellipsoid};
use crate::sysmodel::{discretize, ControllerModel, PlantModel};
use crate::trigger::TriggerTables;
use crate::{Error, OfflineTables, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerMode {
    Pstc,
    Petc,
    Periodic,
}

/// Measurement-noise generation for a run. Whatever the choice, the trigger
/// tables keep their declared noise bound — a run may exercise less noise
/// than the bound admits, never more.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    Zero,
    /// Componentwise uniform on `[-half_width, half_width]`; the box must
    /// fit inside the declared noise ellipsoid (checked on its corners).
    SeededBox { half_width: f64 },
    /// Uniform over the declared noise ellipsoid.
    SeededEllipsoid,
}

/// Disturbance generation, one value per integration substep.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSpec {
    Zero,
    /// Uniform over the admissible disturbance ellipsoid.
    Seeded,
    /// Piecewise constant in time: the first entry with `t < t_until`
    /// applies, afterwards zero. Every value must be admissible.
    Schedule(Vec<(f64, DVector<f64>)>),
}

/// A complete run description, independent of the offline tables.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub mode: TriggerMode,
    /// Total simulated time; must be an integer number of periods.
    pub duration: f64,
    /// Trigger budget ε (the test threshold is ε²).
    pub epsilon: f64,
    pub seed: u64,
    pub xi_p0: DVector<f64>,
    pub xc0: DVector<f64>,
    pub noise: NoiseSpec,
    pub disturbance: DisturbanceSpec,
    /// Plant integration substeps per period.
    pub substeps: usize,
    /// Certified initial plant-state container; `None` means unknown state
    /// and the loop starts with the measurement-stack initialization.
    pub initial_estimate: Option<Ellipsoid>,
    /// Admissible disturbance shape (matches the one the tables were built
    /// from); used to sample and validate disturbances.
    pub wbar: DMatrix<f64>,
}

/// Pregenerated stochastic streams, indexed by absolute period (noise) and
/// absolute substep (disturbance). Generated once per seed so different
/// policies and look-ahead rollouts share realizations.
#[derive(Debug, Clone)]
pub struct SignalBank {
    pub nu: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub substeps: usize,
}

impl SignalBank {
    #[allow(clippy::too_many_arguments)]
    pub fn generate(
        seed: u64,
        periods: usize,
        substeps: usize,
        kappa_max: usize,
        h: f64,
        v_shape: &DMatrix<f64>,
        wbar: &DMatrix<f64>,
        noise: &NoiseSpec,
        disturbance: &DisturbanceSpec,
    ) -> Result<Self> {
        let ny = v_shape.nrows();
        let nw = wbar.nrows();
        // Detector rollouts look up to a full heartbeat past the horizon.
        let total_periods = periods + kappa_max + 2;
        let total_substeps = total_periods * substeps;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let nu = match noise {
            NoiseSpec::Zero => vec![DVector::zeros(ny); total_periods],
            NoiseSpec::SeededBox { half_width } => {
                let hw = *half_width;
                if !(hw.is_finite() && hw >= 0.0) {
                    return Err(Error::InvalidScenario(format!(
                        "noise box half-width must be non-negative, got {hw}"
                    )));
                }
                if hw > 0.0 {
                    if ny > 20 {
                        return Err(Error::InvalidScenario(
                            "corner check for the noise box is limited to 20 outputs".into(),
                        ));
                    }
                    let v_inv = pd_inverse("SignalBank: noise shape", v_shape).map_err(|_| {
                        Error::InvalidScenario(
                            "a positive noise box needs a positive definite noise shape".into(),
                        )
                    })?;
                    for signs in 0..(1usize << ny) {
                        let corner = DVector::from_fn(ny, |i, _| {
                            if signs >> i & 1 == 1 {
                                hw
                            } else {
                                -hw
                            }
                        });
                        let q = (corner.transpose() * &v_inv * &corner)[(0, 0)];
                        if q > 1.0 + 1e-9 {
                            return Err(Error::InvalidScenario(format!(
                                "noise box corner lies outside the declared bound (quad {q:.3})"
                            )));
                        }
                    }
                }
                (0..total_periods)
                    .map(|_| {
                        DVector::from_fn(ny, |_, _| {
                            use rand::Rng;
                            rng.random_range(-hw..=hw)
                        })
                    })
                    .collect()
            }
            NoiseSpec::SeededEllipsoid => {
                let ell = Ellipsoid::centered(v_shape.clone())?;
                (0..total_periods).map(|_| ell.sample_point(&mut rng)).collect()
            }
        };

        let w = match disturbance {
            DisturbanceSpec::Zero => vec![DVector::zeros(nw); total_substeps],
            DisturbanceSpec::Seeded => {
                let ell = Ellipsoid::centered(wbar.clone())?;
                (0..total_substeps).map(|_| ell.sample_point(&mut rng)).collect()
            }
            DisturbanceSpec::Schedule(entries) => {
                let bound = Ellipsoid::centered(wbar.clone())?;
                for (t_until, value) in entries {
                    if value.len() != nw {
                        return Err(Error::InvalidScenario(format!(
                            "scheduled disturbance has {} entries, plant has {nw} channels",
                            value.len()
                        )));
                    }
                    if !bound.contains(value, 1e-9) {
                        return Err(Error::InvalidScenario(format!(
                            "scheduled disturbance for t < {t_until} exceeds the admissible bound"
                        )));
                    }
                }
                let dt = h / substeps as f64;
                (0..total_substeps)
                    .map(|g| {
                        let t = g as f64 * dt;
                        entries
                            .iter()
                            .find(|(t_until, _)| t < *t_until)
                            .map(|(_, v)| v.clone())
                            .unwrap_or_else(|| DVector::zeros(nw))
                    })
                    .collect()
            }
        };

        Ok(Self { nu, w, substeps })
    }
}

/// Online-phase timing accumulator (per-call, milliseconds).
#[derive(Debug, Clone, Copy)]
pub struct PhaseStats {
    pub count: usize,
    pub total_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl Default for PhaseStats {
    fn default() -> Self {
        Self { count: 0, total_ms: 0.0, min_ms: f64::INFINITY, max_ms: 0.0 }
    }
}

impl PhaseStats {
    fn add(&mut self, since: Instant) {
        let ms = since.elapsed().as_secs_f64() * 1e3;
        self.count += 1;
        self.total_ms += ms;
        self.min_ms = self.min_ms.min(ms);
        self.max_ms = self.max_ms.max(ms);
    }

    pub fn mean_ms(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total_ms / self.count as f64
        }
    }
}

/// Wall-clock spent in each online phase of the transmission-time
/// computation, accumulated over all triggers.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    /// Measurement fusion (estimate correction).
    pub fusion: PhaseStats,
    /// Worst-case bound scan over horizons.
    pub eta_scan: PhaseStats,
    /// Estimate prediction to the next transmission instant.
    pub prediction: PhaseStats,
    /// Whole run, including plant integration and bookkeeping.
    pub total_ms: f64,
}

/// Everything observable about one period of the loop. States are sampled
/// at the period start, `u` is the input applied over the period.
#[derive(Debug, Clone)]
pub struct PeriodRecord {
    pub k: usize,
    pub t: f64,
    pub trigger: bool,
    /// Transmission horizon chosen at this trigger (self-triggered mode) or
    /// the realized inter-transmission time (detector mode).
    pub kappa_star: Option<usize>,
    /// What the periodic detector would have done from this trigger along
    /// the same realization.
    pub petc_kappa: Option<usize>,
    /// Worst-case bound at the decision (self-triggered) or the measured
    /// test value (detector mode).
    pub eta: Option<f64>,
    pub xi_p: DVector<f64>,
    pub xc: DVector<f64>,
    pub y: DVector<f64>,
    pub u: DVector<f64>,
    pub nu: DVector<f64>,
    pub w: DVector<f64>,
    pub est_center: Option<DVector<f64>>,
    pub est_trace: Option<f64>,
    pub model_violation: bool,
    /// All bound values probed by the horizon scan at this trigger.
    pub eta_scan: Vec<f64>,
}

#[derive(Debug)]
pub struct SimulationOutput {
    pub records: Vec<PeriodRecord>,
    pub triggers: usize,
    /// Periods where the certified estimate failed to contain the true
    /// state — must stay zero; anything else disproves the guarantee.
    pub containment_failures: usize,
    /// Trigger-time corrections rejected as inconsistent with the declared
    /// bounds (prior kept). Nonzero means the model under-declares.
    pub model_violations: usize,
    pub timings: PhaseTimings,
    pub final_xi_p: DVector<f64>,
    pub final_xc: DVector<f64>,
    pub periods: usize,
    pub h: f64,
}

/// Estimator phase of the self-triggered loop.
enum EstDriver {
    Absent,
    Collecting { ys: Vec<DVector<f64>>, us: Vec<DVector<f64>> },
    Running { predicted: Ellipsoid },
}

fn stack_zeta(y: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(y.len() + u.len());
    z.rows_mut(0, y.len()).copy_from(y);
    z.rows_mut(y.len(), u.len()).copy_from(u);
    z
}

/// Rolls the loop forward from a fresh transmission with the input held and
/// returns the period at which the measured test first exceeds `ε²`
/// (heartbeat-capped). Uses the same signal bank as the main loop, so for a
/// self-triggered run this is exactly the transmission instant an ideal
/// detector would have produced on the same realization.
#[allow(clippy::too_many_arguments)]
fn detector_reference(
    plant: &PlantModel,
    controller: &ControllerModel,
    trig: &TriggerTables,
    bank: &SignalBank,
    phi_sub: &DMatrix<f64>,
    gu_sub: &DMatrix<f64>,
    gw_sub: &DMatrix<f64>,
    xp0: &DVector<f64>,
    xc0: &DVector<f64>,
    y_hat: &DVector<f64>,
    u_hat: &DVector<f64>,
    k_b: usize,
    epsilon: f64,
) -> usize {
    let zeta_hat = stack_zeta(y_hat, u_hat);
    let threshold = epsilon * epsilon;
    let mut xp = xp0.clone();
    let mut xc = xc0.clone();
    for j in 1..=trig.kappa_max {
        xc = controller.advance(&xc, y_hat);
        let base = (k_b + j - 1) * bank.substeps;
        for s in 0..bank.substeps {
            xp = phi_sub * &xp + gu_sub * u_hat + gw_sub * &bank.w[base + s];
        }
        if j == trig.kappa_max {
            return j;
        }
        let y = &plant.cp * &xp + &bank.nu[k_b + j];
        let upsilon = controller.output(&xc, y_hat);
        if trig.quadratic_test(&stack_zeta(&y, &upsilon), &zeta_hat) > threshold {
            return j;
        }
    }
    trig.kappa_max
}

/// Runs one closed-loop scenario against prebuilt offline tables.
pub fn simulate(
    plant: &PlantModel,
    controller: &ControllerModel,
    tables: &OfflineTables,
    scenario: &Scenario,
) -> Result<SimulationOutput> {
    let run_start = Instant::now();
    let trig = &tables.trig;
    let trans = &tables.trans;
    let dist = &tables.dist;
    let h = trans.h;
    let kmax = trig.kappa_max;
    let (np, nc, ny, nu) = (plant.np(), controller.nc(), plant.ny(), plant.nu());

    if scenario.xi_p0.len() != np || scenario.xc0.len() != nc {
        return Err(Error::DimensionMismatch {
            context: "simulate",
            expected: format!("initial states of length {np} and {nc}"),
            got: format!("{} and {}", scenario.xi_p0.len(), scenario.xc0.len()),
        });
    }
    if scenario.substeps == 0 {
        return Err(Error::InvalidScenario("substeps must be at least 1".into()));
    }
    if !(scenario.epsilon.is_finite() && scenario.epsilon >= 0.0) {
        return Err(Error::InvalidScenario(format!(
            "epsilon must be non-negative, got {}",
            scenario.epsilon
        )));
    }
    let periods_f = scenario.duration / h;
    let periods = periods_f.round() as usize;
    if periods == 0 || (periods_f - periods as f64).abs() > 1e-6 * periods_f.max(1.0) {
        return Err(Error::InvalidScenario(format!(
            "duration {} is not a positive whole number of periods (h = {h})",
            scenario.duration
        )));
    }
    if let Some(est) = &scenario.initial_estimate {
        if est.dim() != np {
            return Err(Error::DimensionMismatch {
                context: "simulate",
                expected: format!("{np}-dimensional initial estimate"),
                got: format!("{}", est.dim()),
            });
        }
    }

    let bank = SignalBank::generate(
        scenario.seed,
        periods,
        scenario.substeps,
        kmax,
        h,
        &trig.v_shape,
        &scenario.wbar,
        &scenario.noise,
        &scenario.disturbance,
    )?;
    let (phi_sub, gu_sub, gw_sub) = discretize(plant, h / scenario.substeps as f64);

    let mut xp = scenario.xi_p0.clone();
    let mut xc = scenario.xc0.clone();
    let mut y_held = DVector::zeros(ny);
    let mut u_held = DVector::zeros(nu);
    let mut zeta_hat = DVector::zeros(ny + nu);
    let mut est = match (scenario.mode, &scenario.initial_estimate) {
        (TriggerMode::Pstc, Some(e)) => EstDriver::Running {
            predicted: e.clone(),
        },
        (TriggerMode::Pstc, None) => EstDriver::Collecting { ys: Vec::new(), us: Vec::new() },
        _ => EstDriver::Absent,
    };
    // Last trigger's corrected estimate and input, for materializing the
    // certified container at intermediate periods.
    let mut est_at_trigger: Option<(Ellipsoid, DVector<f64>, usize)> = None;

    let mut k_b = 0usize;
    let mut next_trigger = 0usize;
    let mut triggers = 0usize;
    let mut containment_failures = 0usize;
    let mut model_violations = 0usize;
    let mut timings = PhaseTimings::default();
    let mut records = Vec::with_capacity(periods);

    for k in 0..periods {
        let t = k as f64 * h;
        let nu_k = bank.nu[k].clone();
        let y_k = &plant.cp * &xp + &nu_k;

        let mut measured_eta: Option<f64> = None;
        let is_trigger = match scenario.mode {
            TriggerMode::Periodic => true,
            TriggerMode::Pstc => k == next_trigger,
            TriggerMode::Petc => {
                if k == 0 {
                    true
                } else {
                    let j = k - k_b;
                    let upsilon = controller.output(&xc, &y_held);
                    let eta = trig.quadratic_test(&stack_zeta(&y_k, &upsilon), &zeta_hat);
                    measured_eta = Some(eta);
                    j >= kmax || eta > scenario.epsilon * scenario.epsilon
                }
            }
        };

        let mut kappa_star: Option<usize> = None;
        let mut petc_kappa: Option<usize> = None;
        let mut eta_value: Option<f64> = measured_eta;
        let mut eta_scan: Vec<f64> = Vec::new();
        let mut est_center: Option<DVector<f64>> = None;
        let mut est_trace: Option<f64> = None;
        let mut model_violation = false;

        if is_trigger {
            triggers += 1;
            if scenario.mode == TriggerMode::Petc && k > 0 {
                kappa_star = Some(k - k_b);
            }
            if scenario.mode == TriggerMode::Periodic {
                kappa_star = Some(1);
            }
            u_held = controller.output(&xc, &y_k);
            y_held = y_k.clone();
            zeta_hat = stack_zeta(&y_held, &u_held);
            k_b = k;

            match &mut est {
                EstDriver::Absent => {}
                EstDriver::Collecting { ys, us } => {
                    ys.push(y_k.clone());
                    if ys.len() == tables.init.samples_needed() {
                        let assembled = tables.init.assemble(ys, us)?;
                        if !assembled.contains(&xp, 1e-6) {
                            containment_failures += 1;
                        }
                        est_center = Some(assembled.center().clone());
                        est_trace = Some(assembled.size());
                        let t0 = Instant::now();
                        let predicted = predict(
                            &assembled,
                            &trans.phi_p[1],
                            &trans.gamma_p[1],
                            &u_held,
                            dist.w(1),
                        )?;
                        timings.prediction.add(t0);
                        est_at_trigger = Some((assembled, u_held.clone(), k));
                        est = EstDriver::Running { predicted };
                    } else {
                        us.push(u_held.clone());
                    }
                    kappa_star = Some(1);
                    next_trigger = k + 1;
                }
                EstDriver::Running { predicted } => {
                    let t0 = Instant::now();
                    let (corrected, outcome) =
                        correct(predicted, &plant.cp, &y_k, &trig.v_shape)?;
                    timings.fusion.add(t0);
                    model_violation = outcome.is_violation();
                    if model_violation {
                        model_violations += 1;
                    }
                    if !corrected.contains(&xp, 1e-6) {
                        containment_failures += 1;
                    }
                    let p_tilde = trig.assemble_p(corrected.center(), &xc, &y_held);
                    let t0 = Instant::now();
                    let (kappa, etas) =
                        trig.kappa_star_scan(&p_tilde, corrected.shape(), scenario.epsilon)?;
                    timings.eta_scan.add(t0);
                    let t0 = Instant::now();
                    let predicted_next = predict(
                        &corrected,
                        &trans.phi_p[kappa],
                        &trans.gamma_p[kappa],
                        &u_held,
                        dist.w(kappa),
                    )?;
                    timings.prediction.add(t0);
                    kappa_star = Some(kappa);
                    eta_value = etas.last().copied();
                    eta_scan = etas;
                    est_center = Some(corrected.center().clone());
                    est_trace = Some(corrected.size());
                    est_at_trigger = Some((corrected, u_held.clone(), k));
                    next_trigger = k + kappa;
                    est = EstDriver::Running { predicted: predicted_next };
                }
            }

            if scenario.mode == TriggerMode::Pstc {
                petc_kappa = Some(detector_reference(
                    plant, controller, trig, &bank, &phi_sub, &gu_sub, &gw_sub, &xp, &xc,
                    &y_held, &u_held, k, scenario.epsilon,
                ));
            }
        } else if scenario.mode == TriggerMode::Pstc {
            // Materialize the certified container this period inherits from
            // the last transmission and verify it still holds the truth.
            if let Some((est_b, u_b, kb)) = &est_at_trigger {
                let j = k - kb;
                let inter =
                    predict(est_b, &trans.phi_p[j], &trans.gamma_p[j], u_b, dist.w(j))?;
                if !inter.contains(&xp, 1e-6) {
                    containment_failures += 1;
                }
                est_center = Some(inter.center().clone());
                est_trace = Some(inter.size());
            }
        }

        records.push(PeriodRecord {
            k,
            t,
            trigger: is_trigger,
            kappa_star,
            petc_kappa,
            eta: eta_value,
            xi_p: xp.clone(),
            xc: xc.clone(),
            y: y_k,
            u: u_held.clone(),
            nu: nu_k,
            w: bank.w[k * bank.substeps].clone(),
            est_center,
            est_trace,
            model_violation,
            eta_scan,
        });

        // Controller integrates the held measurement once per period; the
        // plant sees the held input through every substep.
        xc = controller.advance(&xc, &y_held);
        let base = k * bank.substeps;
        for s in 0..bank.substeps {
            xp = &phi_sub * &xp + &gu_sub * &u_held + &gw_sub * &bank.w[base + s];
        }
    }

    timings.total_ms = run_start.elapsed().as_secs_f64() * 1e3;
    Ok(SimulationOutput {
        records,
        triggers,
        containment_failures,
        model_violations,
        timings,
        final_xi_p: xp,
        final_xc: xc,
        periods,
        h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reach::ReachConfig;
    use crate::sysmodel::TriggerConfig;
    use crate::build_offline_tables;

    fn test_loop() -> (PlantModel, ControllerModel) {
        let plant = PlantModel::new(
            DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -0.4, -1.2]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.5, 0.5]),
        )
        .unwrap();
        let controller = ControllerModel::new(
            DMatrix::from_element(1, 1, 0.9),
            DMatrix::from_element(1, 1, 0.05),
            DMatrix::from_element(1, 1, -0.4),
            DMatrix::from_element(1, 1, -0.3),
            0.05,
        )
        .unwrap();
        (plant, controller)
    }

    fn offline(
        plant: &PlantModel,
        controller: &ControllerModel,
        wbar: f64,
        v: f64,
        kappa_max: usize,
    ) -> (OfflineTables, DMatrix<f64>) {
        let cfg = TriggerConfig::new(0.3, kappa_max).unwrap();
        let wbar_m = DMatrix::from_element(1, 1, wbar);
        let v_m = DMatrix::from_element(1, 1, v);
        let (tables, _) = build_offline_tables(
            plant,
            controller,
            &cfg,
            &ReachConfig::default(),
            &wbar_m,
            &v_m,
        )
        .unwrap();
        (tables, wbar_m)
    }

    fn scenario(mode: TriggerMode, wbar: DMatrix<f64>, seed: u64) -> Scenario {
        Scenario {
            mode,
            duration: 10.0 * 0.05,
            epsilon: 0.05,
            seed,
            xi_p0: DVector::from_row_slice(&[1.0, -0.5]),
            xc0: DVector::zeros(1),
            noise: NoiseSpec::SeededBox { half_width: 0.005 },
            disturbance: DisturbanceSpec::Seeded,
            substeps: 5,
            initial_estimate: None,
            wbar,
        }
    }

    #[test]
    fn self_triggered_run_is_sound_and_dominates_detector() {
        let (plant, controller) = test_loop();
        let (tables, wbar) = offline(&plant, &controller, 1e-4, 1e-4, 6);
        let mut sc = scenario(TriggerMode::Pstc, wbar, 3);
        sc.duration = 200.0 * 0.05;
        let out = simulate(&plant, &controller, &tables, &sc).unwrap();
        assert_eq!(out.containment_failures, 0);
        assert_eq!(out.model_violations, 0);
        assert!(out.triggers >= 2);
        for r in &out.records {
            if r.trigger {
                if let (Some(ks), Some(pk)) = (r.kappa_star, r.petc_kappa) {
                    assert!(ks <= pk, "kappa* {ks} > detector {pk} at period {}", r.k);
                }
            }
        }
    }

    #[test]
    fn initialization_collects_then_runs() {
        let (plant, controller) = test_loop();
        let (tables, wbar) = offline(&plant, &controller, 1e-4, 1e-4, 6);
        let sc = scenario(TriggerMode::Pstc, wbar, 11);
        let kbar = tables.init.kbar;
        let out = simulate(&plant, &controller, &tables, &sc).unwrap();
        // Forced every-period triggers through the whole window.
        for k in 0..=kbar {
            assert!(out.records[k].trigger);
            assert_eq!(out.records[k].kappa_star, Some(1));
        }
        // First certified estimate appears exactly at the window end.
        assert!(out.records[kbar].est_trace.is_some());
        for k in 0..kbar {
            assert!(out.records[k].est_trace.is_none());
        }
    }

    #[test]
    fn identical_seeds_reproduce_trajectories() {
        let (plant, controller) = test_loop();
        let (tables, wbar) = offline(&plant, &controller, 1e-4, 1e-4, 6);
        let sc = scenario(TriggerMode::Pstc, wbar, 21);
        let a = simulate(&plant, &controller, &tables, &sc).unwrap();
        let b = simulate(&plant, &controller, &tables, &sc).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.xi_p, rb.xi_p);
            assert_eq!(ra.kappa_star, rb.kappa_star);
            assert_eq!(ra.trigger, rb.trigger);
        }
    }

    #[test]
    fn periodic_mode_triggers_every_period() {
        let (plant, controller) = test_loop();
        let (tables, wbar) = offline(&plant, &controller, 0.0, 0.0, 4);
        let mut sc = scenario(TriggerMode::Periodic, wbar, 5);
        sc.noise = NoiseSpec::Zero;
        sc.disturbance = DisturbanceSpec::Zero;
        let out = simulate(&plant, &controller, &tables, &sc).unwrap();
        assert_eq!(out.triggers, out.periods);
        assert!(out.records.iter().all(|r| r.trigger));
    }

    #[test]
    fn detector_mode_respects_heartbeat() {
        let (plant, controller) = test_loop();
        let (tables, wbar) = offline(&plant, &controller, 0.0, 0.0, 4);
        let mut sc = scenario(TriggerMode::Petc, wbar, 5);
        sc.noise = NoiseSpec::Zero;
        sc.disturbance = DisturbanceSpec::Zero;
        sc.epsilon = 1e6; // never test-triggered
        sc.duration = 20.0 * 0.05;
        let out = simulate(&plant, &controller, &tables, &sc).unwrap();
        let trigger_ks: Vec<usize> =
            out.records.iter().filter(|r| r.trigger).map(|r| r.k).collect();
        for pair in trigger_ks.windows(2) {
            assert_eq!(pair[1] - pair[0], 4);
        }
    }

    #[test]
    fn noise_box_must_fit_declared_bound() {
        let (plant, controller) = test_loop();
        let (tables, wbar) = offline(&plant, &controller, 1e-4, 1e-4, 4);
        let mut sc = scenario(TriggerMode::Pstc, wbar, 5);
        sc.noise = NoiseSpec::SeededBox { half_width: 1.0 };
        let err = simulate(&plant, &controller, &tables, &sc).unwrap_err();
        assert!(matches!(err, Error::InvalidScenario(_)));
    }

    #[test]
    fn scheduled_disturbance_is_validated_and_applied() {
        let (plant, controller) = test_loop();
        let (tables, wbar) = offline(&plant, &controller, 0.01, 0.0, 4);
        let mut sc = scenario(TriggerMode::Periodic, wbar.clone(), 5);
        sc.noise = NoiseSpec::Zero;
        sc.disturbance =
            DisturbanceSpec::Schedule(vec![(0.1, DVector::from_element(1, 0.05))]);
        let out = simulate(&plant, &controller, &tables, &sc).unwrap();
        assert_eq!(out.records[0].w[0], 0.05);
        assert_eq!(out.records.last().unwrap().w[0], 0.0);

        sc.disturbance =
            DisturbanceSpec::Schedule(vec![(0.1, DVector::from_element(1, 5.0))]);
        assert!(simulate(&plant, &controller, &tables, &sc).is_err());
    }

    #[test]
    fn zero_budget_from_origin_transmits_every_period() {
        // Starting at rest, the bound is dominated by the positive noise
        // floor from the first period on, so ε = 0 keeps κ* at 1.
        let (plant, controller) = test_loop();
        let (tables, wbar) = offline(&plant, &controller, 1e-4, 1e-4, 6);
        let mut sc = scenario(TriggerMode::Pstc, wbar, 9);
        sc.epsilon = 0.0;
        sc.xi_p0 = DVector::zeros(2);
        let out = simulate(&plant, &controller, &tables, &sc).unwrap();
        assert_eq!(out.triggers, out.periods);
        assert_eq!(out.containment_failures, 0);
    }
}
