//! Binary persistence for the offline tables.
//!
//! Layout: magic `PSTCTBL1`, format version, the SHA-256 of the canonical
//! config text, dimensions, then the four table families in a fixed order.
//! Matrices are row-major f64 little-endian with a u32 rows/cols prefix.
//! The embedded hash ties a table file to exactly one configuration; the
//! loader surfaces a mismatch instead of mixing tables across problems.

use anyhow::{bail, Context};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use serde::Serialize;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use pstc_core::estimator::InitTables;
use pstc_core::reach::DisturbanceTables;
use pstc_core::sysmodel::TransitionTables;
use pstc_core::trigger::TriggerTables;
use pstc_core::{OfflineTables, OfflineTimings};

const MAGIC: &[u8; 8] = b"PSTCTBL1";
const FORMAT_VERSION: u32 = 1;

fn write_mat<W: Write>(w: &mut W, m: &DMatrix<f64>) -> anyhow::Result<()> {
    w.write_u32::<LittleEndian>(u32::try_from(m.nrows())?)?;
    w.write_u32::<LittleEndian>(u32::try_from(m.ncols())?)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_f64::<LittleEndian>(m[(i, j)])?;
        }
    }
    Ok(())
}

fn read_mat<R: Read>(r: &mut R) -> anyhow::Result<DMatrix<f64>> {
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let cols = r.read_u32::<LittleEndian>()? as usize;
    if rows.saturating_mul(cols) > 16_000_000 {
        bail!("matrix dimensions {rows}x{cols} exceed sanity bound");
    }
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = r.read_f64::<LittleEndian>()?;
        }
    }
    Ok(m)
}

fn write_mat_vec<W: Write>(w: &mut W, v: &[DMatrix<f64>]) -> anyhow::Result<()> {
    w.write_u32::<LittleEndian>(u32::try_from(v.len())?)?;
    for m in v {
        write_mat(w, m)?;
    }
    Ok(())
}

fn read_mat_vec<R: Read>(r: &mut R) -> anyhow::Result<Vec<DMatrix<f64>>> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    if n > 100_000 {
        bail!("table vector length {n} exceeds sanity bound");
    }
    (0..n).map(|_| read_mat(r)).collect()
}

fn write_f64_vec<W: Write>(w: &mut W, v: &[f64]) -> anyhow::Result<()> {
    w.write_u32::<LittleEndian>(u32::try_from(v.len())?)?;
    for x in v {
        w.write_f64::<LittleEndian>(*x)?;
    }
    Ok(())
}

fn read_f64_vec<R: Read>(r: &mut R) -> anyhow::Result<Vec<f64>> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    if n > 100_000 {
        bail!("scalar vector length {n} exceeds sanity bound");
    }
    (0..n).map(|_| Ok(r.read_f64::<LittleEndian>()?)).collect()
}

pub fn write_tables(path: &Path, tables: &OfflineTables, config_hash: &[u8; 32]) -> anyhow::Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating table file {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_all(config_hash)?;

    let trig = &tables.trig;
    w.write_u32::<LittleEndian>(u32::try_from(trig.np)?)?;
    w.write_u32::<LittleEndian>(u32::try_from(trig.nc)?)?;
    w.write_u32::<LittleEndian>(u32::try_from(trig.ny)?)?;
    w.write_u32::<LittleEndian>(u32::try_from(trig.nu)?)?;
    w.write_u32::<LittleEndian>(u32::try_from(trig.kappa_max)?)?;
    w.write_f64::<LittleEndian>(tables.trans.h)?;
    w.write_f64::<LittleEndian>(trig.sigma)?;

    let trans = &tables.trans;
    write_mat_vec(&mut w, &trans.phi_p)?;
    write_mat_vec(&mut w, &trans.gamma_p)?;
    write_mat_vec(&mut w, &trans.phi_c)?;
    write_mat_vec(&mut w, &trans.gamma_c)?;
    write_mat(&mut w, &trans.phi_p_inv_step)?;

    write_mat_vec(&mut w, &tables.dist.w)?;

    write_mat(&mut w, &trig.qbar)?;
    write_mat(&mut w, &trig.ce)?;
    write_mat_vec(&mut w, &trig.nk)?;
    write_mat_vec(&mut w, &trig.qk)?;
    write_mat_vec(&mut w, &trig.qk_n)?;
    write_mat_vec(&mut w, &trig.qk_nn)?;
    write_mat_vec(&mut w, &trig.fv)?;
    write_mat_vec(&mut w, &trig.fw)?;
    write_mat(&mut w, &trig.qv)?;
    write_mat(&mut w, &trig.qw)?;
    write_mat(&mut w, &trig.v_shape)?;
    write_mat(&mut w, &trig.sqrt_v)?;
    write_mat_vec(&mut w, &trig.sqrt_w)?;
    write_mat_vec(&mut w, &trig.pre_v)?;
    write_mat_vec(&mut w, &trig.pre_w)?;
    write_f64_vec(&mut w, &trig.cvw)?;
    write_f64_vec(&mut w, &trig.cw_term)?;
    w.write_f64::<LittleEndian>(trig.cv)?;

    let init = &tables.init;
    w.write_u32::<LittleEndian>(u32::try_from(init.kbar)?)?;
    write_mat(&mut w, &init.obar_pinv)?;
    write_mat(&mut w, &init.init_shape)?;
    w.write_u32::<LittleEndian>(u32::try_from(init.input_comp.len())?)?;
    for row in &init.input_comp {
        write_mat_vec(&mut w, row)?;
    }

    w.flush()?;
    Ok(())
}

/// Loads a table file, returning the tables and the config hash they were
/// built from. The caller compares the hash against its own config.
pub fn read_tables(path: &Path) -> anyhow::Result<(OfflineTables, [u8; 32])> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening table file {}", path.display()))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        bail!("{}: not a table file (bad magic)", path.display());
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        bail!("{}: unsupported table format version {version}", path.display());
    }
    let mut hash = [0u8; 32];
    r.read_exact(&mut hash)?;

    let np = r.read_u32::<LittleEndian>()? as usize;
    let nc = r.read_u32::<LittleEndian>()? as usize;
    let ny = r.read_u32::<LittleEndian>()? as usize;
    let nu = r.read_u32::<LittleEndian>()? as usize;
    let kappa_max = r.read_u32::<LittleEndian>()? as usize;
    let h = r.read_f64::<LittleEndian>()?;
    let sigma = r.read_f64::<LittleEndian>()?;

    let trans = TransitionTables {
        h,
        kappa_max,
        phi_p: read_mat_vec(&mut r)?,
        gamma_p: read_mat_vec(&mut r)?,
        phi_c: read_mat_vec(&mut r)?,
        gamma_c: read_mat_vec(&mut r)?,
        phi_p_inv_step: read_mat(&mut r)?,
    };
    let dist = DisturbanceTables { h, kappa_max, w: read_mat_vec(&mut r)? };
    let trig = TriggerTables {
        sigma,
        kappa_max,
        np,
        nc,
        ny,
        nu,
        qbar: read_mat(&mut r)?,
        ce: read_mat(&mut r)?,
        nk: read_mat_vec(&mut r)?,
        qk: read_mat_vec(&mut r)?,
        qk_n: read_mat_vec(&mut r)?,
        qk_nn: read_mat_vec(&mut r)?,
        fv: read_mat_vec(&mut r)?,
        fw: read_mat_vec(&mut r)?,
        qv: read_mat(&mut r)?,
        qw: read_mat(&mut r)?,
        v_shape: read_mat(&mut r)?,
        sqrt_v: read_mat(&mut r)?,
        sqrt_w: read_mat_vec(&mut r)?,
        pre_v: read_mat_vec(&mut r)?,
        pre_w: read_mat_vec(&mut r)?,
        cvw: read_f64_vec(&mut r)?,
        cw_term: read_f64_vec(&mut r)?,
        cv: r.read_f64::<LittleEndian>()?,
    };
    let kbar = r.read_u32::<LittleEndian>()? as usize;
    let obar_pinv = read_mat(&mut r)?;
    let init_shape = read_mat(&mut r)?;
    let comp_rows = r.read_u32::<LittleEndian>()? as usize;
    if comp_rows > 100_000 {
        bail!("input compensation table length {comp_rows} exceeds sanity bound");
    }
    let mut input_comp = Vec::with_capacity(comp_rows);
    for _ in 0..comp_rows {
        input_comp.push(read_mat_vec(&mut r)?);
    }
    let init = InitTables { kbar, obar_pinv, init_shape, input_comp, np, ny, nu };

    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        bail!("{}: trailing bytes after table payload", path.display());
    }

    Ok((OfflineTables { trans, dist, trig, init }, hash))
}

/// Human-readable companion written next to the binary tables.
#[derive(Debug, Serialize)]
pub struct TableSidecar {
    pub format_version: u32,
    pub config_name: String,
    pub config_hash: String,
    pub np: usize,
    pub nc: usize,
    pub ny: usize,
    pub nu: usize,
    pub kappa_max: usize,
    pub h: f64,
    pub sigma: f64,
    pub init_window: usize,
    pub offline_ms: OfflineMs,
}

#[derive(Debug, Serialize)]
pub struct OfflineMs {
    pub transition: f64,
    pub reach: f64,
    pub trigger: f64,
    pub init: f64,
    pub total: f64,
}

pub fn write_sidecar(
    path: &Path,
    name: &str,
    hash_hex: &str,
    tables: &OfflineTables,
    timings: &OfflineTimings,
) -> anyhow::Result<()> {
    let sidecar = TableSidecar {
        format_version: FORMAT_VERSION,
        config_name: name.to_string(),
        config_hash: hash_hex.to_string(),
        np: tables.trig.np,
        nc: tables.trig.nc,
        ny: tables.trig.ny,
        nu: tables.trig.nu,
        kappa_max: tables.trig.kappa_max,
        h: tables.trans.h,
        sigma: tables.trig.sigma,
        init_window: tables.init.kbar + 1,
        offline_ms: OfflineMs {
            transition: timings.transition_ms,
            reach: timings.reach_ms,
            trigger: timings.trigger_ms,
            init: timings.init_ms,
            total: timings.transition_ms + timings.reach_ms + timings.trigger_ms + timings.init_ms,
        },
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(path, json).with_context(|| format!("writing sidecar {}", path.display()))?;
    Ok(())
}
