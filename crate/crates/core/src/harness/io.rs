//! File formats: text serialization of spin-block 2RDMs, trajectory CSV and
//! JSON summaries.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::matcore::{pair_dim, HermitianMatrix, SpinBlock, SpinBlock2RDM, C64};

/// Writes every entry of both blocks as `i j re im` with 17 significant digits.
pub fn format_2rdm(d: &SpinBlock2RDM) -> String {
    let mut s = format!("sites {}\nparticles {}\n", d.sites, d.particles);
    for blk in SpinBlock::ALL {
        let m = d.block(blk).matrix();
        writeln!(s, "block {} {}", blk.name(), m.nrows()).unwrap();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                writeln!(s, "{i} {j} {:.16e} {:.16e}", z.re, z.im).unwrap();
            }
        }
    }
    s
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Inverse of [`format_2rdm`]. Blank lines and `#` comments are skipped;
/// entries not listed are zero.
pub fn parse_2rdm(text: &str) -> Result<SpinBlock2RDM> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.split('#').next().unwrap().trim()))
        .filter(|(_, l)| !l.is_empty())
        .peekable();
    let mut header = |key: &str| -> Result<usize> {
        let (n, l) = lines.next().ok_or_else(|| parse_err(0, format!("missing `{key}` line")))?;
        match l.split_whitespace().collect::<Vec<_>>()[..] {
            [k, v] if k == key => v.parse().map_err(|_| parse_err(n, format!("bad {key} value `{v}`"))),
            _ => Err(parse_err(n, format!("expected `{key} <n>`"))),
        }
    };
    let sites = header("sites")?;
    let particles = header("particles")?;
    if sites == 0 || sites > 16 {
        return Err(parse_err(1, format!("unsupported site count {sites}")));
    }
    let mut blocks: [Option<DMatrix<C64>>; 2] = [None, None];
    let mut current: Option<usize> = None;
    for (n, l) in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        if f[0] == "block" {
            let [_, name, dim] = f[..] else {
                return Err(parse_err(n, "expected `block <name> <dim>`"));
            };
            let k = SpinBlock::ALL
                .iter()
                .position(|b| b.name() == name)
                .ok_or_else(|| parse_err(n, format!("unknown block `{name}`")))?;
            let dim: usize = dim.parse().map_err(|_| parse_err(n, format!("bad dimension `{dim}`")))?;
            let expected = pair_dim(sites, SpinBlock::ALL[k]);
            if dim != expected {
                return Err(parse_err(n, format!("{name} block must have dimension {expected}, got {dim}")));
            }
            if blocks[k].is_some() {
                return Err(parse_err(n, format!("duplicate block `{name}`")));
            }
            blocks[k] = Some(DMatrix::zeros(dim, dim));
            current = Some(k);
            continue;
        }
        let k = current.ok_or_else(|| parse_err(n, "entry before any block header"))?;
        let [i, j, re, im] = f[..] else {
            return Err(parse_err(n, "expected `i j re im`"));
        };
        let idx = |s: &str| s.parse::<usize>().map_err(|_| parse_err(n, format!("bad index `{s}`")));
        let val = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(n, format!("bad number `{s}`")))
        };
        let (i, j) = (idx(i)?, idx(j)?);
        let m = blocks[k].as_mut().unwrap();
        if i >= m.nrows() || j >= m.ncols() {
            return Err(parse_err(n, format!("index ({i}, {j}) out of range")));
        }
        m[(i, j)] = C64::new(val(re)?, val(im)?);
    }
    let [Some(s), Some(t)] = blocks else {
        return Err(parse_err(0, "both singlet and triplet blocks are required"));
    };
    SpinBlock2RDM::new(sites, particles, HermitianMatrix::new(s)?, HermitianMatrix::new(t)?)
}

pub fn read_2rdm(path: &Path) -> Result<SpinBlock2RDM> {
    parse_2rdm(&std::fs::read_to_string(path)?)
}

pub fn write_2rdm(path: &Path, d: &SpinBlock2RDM) -> Result<()> {
    Ok(std::fs::write(path, format_2rdm(d))?)
}

pub fn csv_columns(sites: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=sites).map(|i| format!("n_{i}")));
    cols.extend(
        ["E_total", "E_int", "eta", "defect_before", "defect_after", "purif_iters"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    parse_err(line, e.to_string())
}

pub fn format_csv(records: &[TrajectoryRecord]) -> String {
    let sites = records.first().map_or(0, |r| r.site_densities.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_columns(sites)).unwrap();
    for r in records {
        let mut row = vec![r.t.to_string()];
        row.extend(r.site_densities.iter().map(f64::to_string));
        row.extend(
            [r.total_energy, r.interaction_energy, r.eta, r.defect_before, r.defect_after]
                .iter()
                .map(f64::to_string),
        );
        row.push(r.purification_iterations.to_string());
        w.write_record(&row).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn write_csv(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    Ok(std::fs::write(path, format_csv(records))?)
}

/// Parses a trajectory CSV and checks every row: finite values, increasing
/// time, `defect_after ≤ defect_before`, and an unchanged defect on rows
/// without purification iterations.
pub fn parse_csv(text: &str) -> Result<Vec<TrajectoryRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let head: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let cols = head.len();
    if cols < 8 {
        return Err(parse_err(1, "too few columns"));
    }
    let sites = cols - 7;
    if head != csv_columns(sites) {
        return Err(parse_err(1, format!("header must be `{}`", csv_columns(sites).join(","))));
    }
    let mut out: Vec<TrajectoryRecord> = Vec::new();
    for row in rd.records() {
        let row = row.map_err(csv_err)?;
        let n = row.position().map_or(0, |p| p.line() as usize);
        let mut x = Vec::with_capacity(cols - 1);
        for v in row.iter().take(cols - 1) {
            let v: f64 = v.parse().map_err(|_| parse_err(n, format!("bad number `{v}`")))?;
            if !v.is_finite() {
                return Err(Error::Validation(format!("line {n}: non-finite value")));
            }
            x.push(v);
        }
        let iters: usize = row[cols - 1]
            .parse()
            .map_err(|_| parse_err(n, format!("bad iteration count `{}`", &row[cols - 1])))?;
        let r = TrajectoryRecord {
            t: x[0],
            site_densities: x[1..=sites].to_vec(),
            total_energy: x[sites + 1],
            interaction_energy: x[sites + 2],
            eta: x[sites + 3],
            defect_before: x[sites + 4],
            defect_after: x[sites + 5],
            purification_iterations: iters,
            purification_converged: true,
        };
        if let Some(prev) = out.last() {
            if !(r.t > prev.t) {
                return Err(Error::Validation(format!("line {n}: time not increasing")));
            }
        }
        if r.defect_before < 0.0 || r.defect_after < 0.0 {
            return Err(Error::Validation(format!("line {n}: negative defect")));
        }
        if r.defect_after > r.defect_before {
            return Err(Error::Validation(format!(
                "line {n}: defect_after {} exceeds defect_before {}",
                r.defect_after, r.defect_before
            )));
        }
        if iters == 0 && r.defect_after != r.defect_before {
            return Err(Error::Validation(format!("line {n}: defect changed without purification")));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn read_csv(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    parse_csv(&std::fs::read_to_string(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    Ok(std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?)
}
