//! Problem configuration: a plain-text format holding one plant/controller
//! pair, the uncertainty bounds and run defaults.
//!
//! Grammar: `key = value` lines, `#` comments, and matrix blocks
//!
//! ```text
//! Ap = [
//!   1.0 0.5
//!   0.0 1.0
//! ]
//! ```
//!
//! A single-row matrix may be written inline (`xc0 = [ 0 0 ]`). Vectors are
//! single-row. [`ProblemConfig::canonical_string`] re-serializes with fixed
//! key order and shortest round-tripping float formatting; its SHA-256 is
//! the identity that ties persisted table files to the config they were
//! built from.

use anyhow::{anyhow, bail, Context};
use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use pstc_core::pstc::{DisturbanceSpec, NoiseSpec, Scenario, TriggerMode};
use pstc_core::reach::ReachConfig;
use pstc_core::sysmodel::{ControllerModel, PlantModel, TriggerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub name: String,
    pub h: f64,
    pub sigma: f64,
    pub kappa_max: usize,
    /// Default trigger budget ε; the CLI can override per run.
    pub epsilon: f64,
    pub duration: f64,
    pub substeps: usize,
    pub seed: u64,
    /// RK4 substeps per period for the offline reach tube.
    pub reach_steps: usize,
    pub ap: DMatrix<f64>,
    pub bp: DMatrix<f64>,
    pub cp: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub ac: DMatrix<f64>,
    pub bc: DMatrix<f64>,
    pub cc: DMatrix<f64>,
    pub dc: DMatrix<f64>,
    pub wbar: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub xi_p0: DVector<f64>,
    pub xc0: DVector<f64>,
    pub noise: NoiseSpec,
    pub disturbance: DisturbanceSpec,
}

enum Raw {
    Scalar(String),
    Matrix(Vec<Vec<f64>>),
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_row(line: &str, line_no: usize) -> anyhow::Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .with_context(|| format!("line {line_no}: bad number {tok:?}"))
        })
        .collect()
}

fn to_matrix(key: &str, rows: &[Vec<f64>]) -> anyhow::Result<DMatrix<f64>> {
    let r = rows.len();
    if r == 0 {
        bail!("{key}: empty matrix");
    }
    let c = rows[0].len();
    if c == 0 || rows.iter().any(|row| row.len() != c) {
        bail!("{key}: rows must be non-empty and of equal length");
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ProblemConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut entries: BTreeMap<String, Raw> = BTreeMap::new();
        let mut lines = text.lines().enumerate();
        while let Some((idx, raw_line)) = lines.next() {
            let line_no = idx + 1;
            let line = strip_comment(raw_line).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`"))?;
            let key = key.trim().to_string();
            let value = value.trim();
            let raw = if value == "[" {
                let mut rows = Vec::new();
                let mut closed = false;
                for (bidx, block_line) in lines.by_ref() {
                    let inner = strip_comment(block_line).trim();
                    if inner == "]" {
                        closed = true;
                        break;
                    }
                    if inner.is_empty() {
                        continue;
                    }
                    rows.push(parse_row(inner, bidx + 1)?);
                }
                if !closed {
                    bail!("line {line_no}: matrix {key} never closed with `]`");
                }
                Raw::Matrix(rows)
            } else if let Some(inner) = value.strip_prefix('[').and_then(|v| v.strip_suffix(']')) {
                Raw::Matrix(vec![parse_row(inner, line_no)?])
            } else {
                Raw::Scalar(value.to_string())
            };
            if entries.insert(key.clone(), raw).is_some() {
                bail!("line {line_no}: duplicate key {key}");
            }
        }

        let scalar = |key: &str| -> anyhow::Result<&str> {
            match entries.get(key) {
                Some(Raw::Scalar(s)) => Ok(s.as_str()),
                Some(Raw::Matrix(_)) => bail!("{key}: expected a scalar, found a matrix"),
                None => bail!("missing required key {key}"),
            }
        };
        let opt_scalar = |key: &str| -> anyhow::Result<Option<&str>> {
            match entries.get(key) {
                Some(Raw::Scalar(s)) => Ok(Some(s.as_str())),
                Some(Raw::Matrix(_)) => bail!("{key}: expected a scalar, found a matrix"),
                None => Ok(None),
            }
        };
        let matrix = |key: &str| -> anyhow::Result<DMatrix<f64>> {
            match entries.get(key) {
                Some(Raw::Matrix(rows)) => to_matrix(key, rows),
                Some(Raw::Scalar(_)) => bail!("{key}: expected a matrix block"),
                None => bail!("missing required matrix {key}"),
            }
        };
        let vector = |key: &str| -> anyhow::Result<DVector<f64>> {
            let m = matrix(key)?;
            if m.nrows() != 1 {
                bail!("{key}: expected a single-row vector");
            }
            Ok(DVector::from_iterator(m.ncols(), m.iter().cloned()))
        };
        let parse_f64 = |key: &str, s: &str| -> anyhow::Result<f64> {
            s.parse().with_context(|| format!("{key}: bad number {s:?}"))
        };

        let name = scalar("name")?.to_string();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            bail!("name must be non-empty and use only [A-Za-z0-9_-]");
        }
        let h = parse_f64("h", scalar("h")?)?;
        let sigma = parse_f64("sigma", scalar("sigma")?)?;
        let kappa_max: usize = scalar("kappa_max")?
            .parse()
            .context("kappa_max: expected a positive integer")?;
        let duration = parse_f64("duration", scalar("duration")?)?;
        let epsilon = match opt_scalar("epsilon")? {
            Some(s) => parse_f64("epsilon", s)?,
            None => 0.0,
        };
        let substeps = match opt_scalar("substeps")? {
            Some(s) => s.parse().context("substeps: expected a positive integer")?,
            None => 10,
        };
        let seed = match opt_scalar("seed")? {
            Some(s) => s.parse().context("seed: expected an unsigned integer")?,
            None => 0,
        };
        let reach_steps = match opt_scalar("reach_steps")? {
            Some(s) => s.parse().context("reach_steps: expected a positive integer")?,
            None => 20,
        };

        let noise = match opt_scalar("noise")? {
            None => NoiseSpec::Zero,
            Some(s) => {
                let mut parts = s.split_whitespace();
                match (parts.next(), parts.next(), parts.next()) {
                    (Some("zero"), None, _) => NoiseSpec::Zero,
                    (Some("ellipsoid"), None, _) => NoiseSpec::SeededEllipsoid,
                    (Some("box"), Some(hw), None) => NoiseSpec::SeededBox {
                        half_width: parse_f64("noise", hw)?,
                    },
                    _ => bail!("noise: expected `zero`, `ellipsoid` or `box <half-width>`, got {s:?}"),
                }
            }
        };
        let disturbance = match opt_scalar("disturbance")? {
            None => DisturbanceSpec::Zero,
            Some(s) => {
                let mut parts = s.split_whitespace();
                match parts.next() {
                    Some("zero") => DisturbanceSpec::Zero,
                    Some("seeded") => DisturbanceSpec::Seeded,
                    Some("schedule") => {
                        let mut entries = Vec::new();
                        for seg in parts {
                            let (t, vals) = seg.split_once(':').ok_or_else(|| {
                                anyhow!("disturbance: schedule segment {seg:?} is not t:v1,v2,...")
                            })?;
                            let t_until = parse_f64("disturbance", t)?;
                            let values: Vec<f64> = vals
                                .split(',')
                                .map(|v| parse_f64("disturbance", v))
                                .collect::<anyhow::Result<_>>()?;
                            entries.push((t_until, DVector::from_vec(values)));
                        }
                        if entries.is_empty() {
                            bail!("disturbance: schedule needs at least one t:value segment");
                        }
                        DisturbanceSpec::Schedule(entries)
                    }
                    _ => bail!("disturbance: expected `zero`, `seeded` or `schedule ...`, got {s:?}"),
                }
            }
        };

        let cfg = Self {
            name,
            h,
            sigma,
            kappa_max,
            epsilon,
            duration,
            substeps,
            seed,
            reach_steps,
            ap: matrix("Ap")?,
            bp: matrix("Bp")?,
            cp: matrix("Cp")?,
            e: matrix("E")?,
            ac: matrix("Ac")?,
            bc: matrix("Bc")?,
            cc: matrix("Cc")?,
            dc: matrix("Dc")?,
            wbar: matrix("Wbar")?,
            v: matrix("V")?,
            xi_p0: vector("xi_p0")?,
            xc0: vector("xc0")?,
            noise,
            disturbance,
        };
        // Surface model problems at parse time rather than first use.
        cfg.plant().map_err(|e| anyhow!("{e}"))?;
        cfg.controller().map_err(|e| anyhow!("{e}"))?;
        cfg.trigger_config().map_err(|e| anyhow!("{e}"))?;
        Ok(cfg)
    }

    pub fn plant(&self) -> pstc_core::Result<PlantModel> {
        PlantModel::new(self.ap.clone(), self.bp.clone(), self.cp.clone(), self.e.clone())
    }

    pub fn controller(&self) -> pstc_core::Result<ControllerModel> {
        ControllerModel::new(
            self.ac.clone(),
            self.bc.clone(),
            self.cc.clone(),
            self.dc.clone(),
            self.h,
        )
    }

    pub fn trigger_config(&self) -> pstc_core::Result<TriggerConfig> {
        TriggerConfig::new(self.sigma, self.kappa_max)
    }

    pub fn reach_config(&self) -> ReachConfig {
        ReachConfig { steps_per_period: self.reach_steps, l0: None }
    }

    /// Run description with optional per-invocation overrides.
    pub fn scenario(
        &self,
        mode: TriggerMode,
        seed: Option<u64>,
        duration: Option<f64>,
        epsilon: Option<f64>,
    ) -> Scenario {
        Scenario {
            mode,
            duration: duration.unwrap_or(self.duration),
            epsilon: epsilon.unwrap_or(self.epsilon),
            seed: seed.unwrap_or(self.seed),
            xi_p0: self.xi_p0.clone(),
            xc0: self.xc0.clone(),
            noise: self.noise.clone(),
            disturbance: self.disturbance.clone(),
            substeps: self.substeps,
            initial_estimate: None,
            wbar: self.wbar.clone(),
        }
    }

    /// Deterministic re-serialization: fixed key order, shortest
    /// round-tripping float format. `parse(canonical_string(c)) == c`.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let fmt_f = |x: f64| format!("{x:?}");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "h = {}", fmt_f(self.h));
        let _ = writeln!(s, "sigma = {}", fmt_f(self.sigma));
        let _ = writeln!(s, "kappa_max = {}", self.kappa_max);
        let _ = writeln!(s, "epsilon = {}", fmt_f(self.epsilon));
        let _ = writeln!(s, "duration = {}", fmt_f(self.duration));
        let _ = writeln!(s, "substeps = {}", self.substeps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "reach_steps = {}", self.reach_steps);
        match &self.noise {
            NoiseSpec::Zero => {
                let _ = writeln!(s, "noise = zero");
            }
            NoiseSpec::SeededBox { half_width } => {
                let _ = writeln!(s, "noise = box {}", fmt_f(*half_width));
            }
            NoiseSpec::SeededEllipsoid => {
                let _ = writeln!(s, "noise = ellipsoid");
            }
        }
        match &self.disturbance {
            DisturbanceSpec::Zero => {
                let _ = writeln!(s, "disturbance = zero");
            }
            DisturbanceSpec::Seeded => {
                let _ = writeln!(s, "disturbance = seeded");
            }
            DisturbanceSpec::Schedule(entries) => {
                let segs: Vec<String> = entries
                    .iter()
                    .map(|(t, v)| {
                        let vals: Vec<String> = v.iter().map(|x| fmt_f(*x)).collect();
                        format!("{}:{}", fmt_f(*t), vals.join(","))
                    })
                    .collect();
                let _ = writeln!(s, "disturbance = schedule {}", segs.join(" "));
            }
        }
        let mat = |s: &mut String, key: &str, m: &DMatrix<f64>| {
            let _ = writeln!(s, "{key} = [");
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f(m[(i, j)])).collect();
                let _ = writeln!(s, "  {}", row.join(" "));
            }
            let _ = writeln!(s, "]");
        };
        mat(&mut s, "Ap", &self.ap);
        mat(&mut s, "Bp", &self.bp);
        mat(&mut s, "Cp", &self.cp);
        mat(&mut s, "E", &self.e);
        mat(&mut s, "Ac", &self.ac);
        mat(&mut s, "Bc", &self.bc);
        mat(&mut s, "Cc", &self.cc);
        mat(&mut s, "Dc", &self.dc);
        mat(&mut s, "Wbar", &self.wbar);
        mat(&mut s, "V", &self.v);
        let vecline = |s: &mut String, key: &str, v: &DVector<f64>| {
            let vals: Vec<String> = v.iter().map(|x| fmt_f(*x)).collect();
            let _ = writeln!(s, "{key} = [ {} ]", vals.join(" "));
        };
        vecline(&mut s, "xi_p0", &self.xi_p0);
        vecline(&mut s, "xc0", &self.xc0);
        s
    }

    /// Identity of this configuration for table caching.
    pub fn hash(&self) -> [u8; 32] {
        let digest = Sha256::digest(self.canonical_string().as_bytes());
        digest.into()
    }

    pub fn hash_hex(&self) -> String {
        self.hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}
