//! Per-period CSV export of a simulation run.
//!
//! One row per sample period. Vector quantities get one column per entry
//! (`xi_p_0`, `xi_p_1`, ...), optional quantities serialize to an empty
//! field when absent, and the horizon scan is a single semicolon-joined
//! field so the file stays one-row-per-period.

use pstc_core::pstc::{PeriodRecord, SimulationOutput};
use std::fmt::Write as _;

fn push_cols(header: &mut String, prefix: &str, n: usize) {
    for i in 0..n {
        let _ = write!(header, ",{prefix}_{i}");
    }
}

/// Column header for a run with the given signal dimensions.
pub fn header(np: usize, nc: usize, ny: usize, nu: usize, nw: usize) -> String {
    let mut s = String::from("k,t,trigger,kappa_star,petc_kappa,eta,xi_norm");
    push_cols(&mut s, "xi_p", np);
    push_cols(&mut s, "xc", nc);
    push_cols(&mut s, "y", ny);
    push_cols(&mut s, "u", nu);
    push_cols(&mut s, "nu", ny);
    push_cols(&mut s, "w", nw);
    push_cols(&mut s, "est_center", np);
    s.push_str(",est_trace,model_violation,eta_scan");
    s
}

fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

fn row(rec: &PeriodRecord) -> String {
    let mut s = String::new();
    let xi_norm = (rec.xi_p.norm_squared() + rec.xc.norm_squared()).sqrt();
    let _ = write!(
        s,
        "{},{},{},{},{},{},{}",
        rec.k,
        fmt_f(rec.t),
        u8::from(rec.trigger),
        rec.kappa_star.map(|k| k.to_string()).unwrap_or_default(),
        rec.petc_kappa.map(|k| k.to_string()).unwrap_or_default(),
        rec.eta.map(fmt_f).unwrap_or_default(),
        fmt_f(xi_norm),
    );
    for v in [&rec.xi_p, &rec.xc, &rec.y, &rec.u, &rec.nu, &rec.w] {
        for x in v.iter() {
            let _ = write!(s, ",{}", fmt_f(*x));
        }
    }
    match &rec.est_center {
        Some(c) => {
            for x in c.iter() {
                let _ = write!(s, ",{}", fmt_f(*x));
            }
        }
        None => {
            for _ in 0..rec.xi_p.len() {
                s.push(',');
            }
        }
    }
    let _ = write!(
        s,
        ",{},{},{}",
        rec.est_trace.map(fmt_f).unwrap_or_default(),
        u8::from(rec.model_violation),
        rec.eta_scan.iter().map(|x| fmt_f(*x)).collect::<Vec<_>>().join(";"),
    );
    s
}

/// Serializes the whole run; first line is the header.
pub fn to_csv(out: &SimulationOutput, nw: usize) -> String {
    let (np, nc, ny, nu) = match out.records.first() {
        Some(r) => (r.xi_p.len(), r.xc.len(), r.y.len(), r.u.len()),
        None => (0, 0, 0, 0),
    };
    let mut s = header(np, nc, ny, nu, nw);
    s.push('\n');
    for rec in &out.records {
        s.push_str(&row(rec));
        s.push('\n');
    }
    s
}

pub fn write_csv(path: &std::path::Path, out: &SimulationOutput, nw: usize) -> anyhow::Result<()> {
    std::fs::write(path, to_csv(out, nw))
        .map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn sample_record(k: usize, with_est: bool) -> PeriodRecord {
        PeriodRecord {
            k,
            t: k as f64 * 0.01,
            trigger: k == 0,
            kappa_star: if k == 0 { Some(3) } else { None },
            petc_kappa: if k == 0 { Some(4) } else { None },
            eta: if k == 0 { Some(-0.25) } else { None },
            xi_p: DVector::from_vec(vec![1.0, -2.0]),
            xc: DVector::from_vec(vec![0.5]),
            y: DVector::from_vec(vec![1.0]),
            u: DVector::from_vec(vec![-0.1]),
            nu: DVector::from_vec(vec![0.001]),
            w: DVector::from_vec(vec![0.0]),
            est_center: with_est.then(|| DVector::from_vec(vec![1.0, -2.0])),
            est_trace: with_est.then_some(0.004),
            model_violation: false,
            eta_scan: if k == 0 { vec![-0.25, 0.1] } else { vec![] },
        }
    }

    #[test]
    fn header_matches_column_count() {
        let out = SimulationOutput {
            records: vec![sample_record(0, true), sample_record(1, false)],
            triggers: 1,
            containment_failures: 0,
            model_violations: 0,
            timings: Default::default(),
            final_xi_p: DVector::zeros(2),
            final_xc: DVector::zeros(1),
            periods: 2,
            h: 0.01,
        };
        let csv = to_csv(&out, 1);
        let mut lines = csv.lines();
        let head = lines.next().unwrap();
        let ncols = head.split(',').count();
        for line in lines {
            assert_eq!(line.split(',').count(), ncols, "row/header column mismatch");
        }
        assert!(head.starts_with("k,t,trigger,kappa_star,petc_kappa,eta,xi_norm,xi_p_0"));
        assert!(head.ends_with("est_trace,model_violation,eta_scan"));
    }

    #[test]
    fn optional_fields_serialize_empty() {
        let rec = sample_record(1, false);
        let line = row(&rec);
        // kappa_star, petc_kappa and eta are all absent on a non-trigger row.
        assert!(line.starts_with("1,0.01,0,,,,"));
        assert!(line.ends_with(",0,"));
    }

    #[test]
    fn scan_values_are_semicolon_joined() {
        let rec = sample_record(0, true);
        let line = row(&rec);
        assert!(line.ends_with("-0.25;0.1"));
    }
}
