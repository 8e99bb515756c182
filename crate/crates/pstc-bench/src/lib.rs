//! Shared fixtures for the benchmarks: the reference batch-reactor problem
//! loaded from the shipped configuration, with its offline tables built
//! once per process.

use std::path::Path;

use pstc_cli::config::ProblemConfig;
use pstc_core::pstc::{Scenario, TriggerMode};
use pstc_core::sysmodel::{ControllerModel, PlantModel};
use pstc_core::{build_offline_tables, OfflineTables};

pub struct Fixture {
    pub cfg: ProblemConfig,
    pub plant: PlantModel,
    pub controller: ControllerModel,
    pub tables: OfflineTables,
}

pub fn reference_problem() -> Fixture {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/batch_reactor.cfg");
    let cfg = ProblemConfig::from_file(&path).expect("shipped configuration must parse");
    let plant = cfg.plant().unwrap();
    let controller = cfg.controller().unwrap();
    let (tables, _) = build_offline_tables(
        &plant,
        &controller,
        &cfg.trigger_config().unwrap(),
        &cfg.reach_config(),
        &cfg.wbar,
        &cfg.v,
    )
    .unwrap();
    Fixture { cfg, plant, controller, tables }
}

impl Fixture {
    pub fn scenario(&self, duration: f64) -> Scenario {
        self.cfg.scenario(TriggerMode::Pstc, None, Some(duration), None)
    }
}
