//! Quench runs and the `(U, V)` scan.
//!
//! A cell prepares the trapped ground state, releases the trap at `t = 0`,
//! propagates the 2RDM at `dt` and `dt/2`, and compares `n_1(t)` with the
//! exact many-body evolution. `U = 0` anchors compare against the
//! free-fermion closed form instead.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::io::{write_csv, write_json};
use super::metrics::{dt_convergence, metric_delta_n1, relative_drift};
use crate::dynamics::{PropagationConfig, Propagator, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::hubbard::{h1_matrix, HubbardConfig};
use crate::matcore::SpinBlock2RDM;
use crate::oracle::{free_fermion_densities, ground_state, spin_block_2rdm, spin_up_1rdm, ExactPropagator, ManyBodyState};

/// Environment variable setting the number of scan worker threads.
pub const THREADS_ENV: &str = "RDMPUR_THREADS";

/// Trapped ground state and its spin-block 2RDM.
pub fn prepare_initial(hubbard: &HubbardConfig) -> Result<(ManyBodyState, SpinBlock2RDM)> {
    let gs = ground_state(hubbard)?;
    let d = spin_block_2rdm(&gs.state)?;
    Ok((gs.state, d))
}

/// A propagated trajectory. `final_raw` is the last state before purification.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub final_raw: SpinBlock2RDM,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn site_density(&self, site: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.site_densities[site]).collect()
    }

    pub fn drifts(&self) -> Drifts {
        let col = |f: fn(&TrajectoryRecord) -> f64| relative_drift(&self.records.iter().map(f).collect::<Vec<_>>());
        Drifts {
            energy: col(|r| r.total_energy),
            eta: col(|r| r.eta),
            particles: col(|r| r.site_densities.iter().sum()),
        }
    }
}

pub fn run_trajectory(initial: &SpinBlock2RDM, hubbard: &HubbardConfig, cfg: &PropagationConfig) -> Result<Trajectory> {
    let mut p = Propagator::new(initial.clone(), hubbard.clone(), *cfg)?;
    let mut records = vec![p.record()?];
    let mut final_raw = initial.clone();
    while !p.is_done() {
        p.integrate_step()?;
        if p.is_done() {
            final_raw = p.state().d12.clone();
        }
        let (before, report) = p.purify_current()?;
        records.push(TrajectoryRecord::new(hubbard, &p.state().d12, p.state().t, before, report.as_ref())?);
    }
    Ok(Trajectory { records, final_raw })
}

/// Exact `n_1(t)` on the given grid.
pub fn exact_n1(psi: &ManyBodyState, hubbard: &HubbardConfig, times: &[f64]) -> Result<Vec<f64>> {
    let prop = ExactPropagator::new(psi, hubbard)?;
    Ok(times.iter().map(|&t| prop.state_at(t).site_densities()[0]).collect())
}

/// Non-interacting `n_1(t)` from the initial spin-up 1RDM.
pub fn free_n1(psi: &ManyBodyState, hubbard: &HubbardConfig, times: &[f64]) -> Vec<f64> {
    free_fermion_densities(&spin_up_1rdm(psi), &h1_matrix(hubbard, 0.0), times)
        .into_iter()
        .map(|n| n[0])
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Drifts {
    pub energy: f64,
    pub eta: f64,
    pub particles: f64,
}

impl Drifts {
    pub fn max(&self, other: &Self) -> Self {
        Self {
            energy: self.energy.max(other.energy),
            eta: self.eta.max(other.eta),
            particles: self.particles.max(other.particles),
        }
    }

    pub fn largest(&self) -> f64 {
        self.energy.max(self.eta).max(self.particles)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    Exact,
    FreeFermion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    #[serde(rename = "U")]
    pub u: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub reference: Reference,
    pub delta_n1_bar: Option<f64>,
    pub dt_converged: bool,
    /// `None` when only the `dt` run was made.
    pub dt_residual: Option<f64>,
    pub max_defect_before: f64,
    pub max_defect_after: f64,
    pub purified_steps: usize,
    pub max_iterations: usize,
    /// Steps where purification stopped at `k_max` above tolerance.
    pub unconverged_steps: usize,
    pub drifts: Drifts,
    pub error: Option<String>,
}

impl ScanCell {
    fn failed(u: f64, v: f64, reference: Reference, err: &Error) -> Self {
        Self {
            error: Some(err.to_string()),
            ..Self::empty(u, v, reference)
        }
    }

    fn empty(u: f64, v: f64, reference: Reference) -> Self {
        Self {
            u,
            v,
            reference,
            delta_n1_bar: None,
            dt_converged: false,
            dt_residual: None,
            max_defect_before: 0.0,
            max_defect_after: 0.0,
            purified_steps: 0,
            max_iterations: 0,
            unconverged_steps: 0,
            drifts: Drifts::default(),
            error: None,
        }
    }

    pub fn file_stem(&self) -> String {
        cell_stem(self.u, self.v)
    }
}

fn cell_stem(u: f64, v: f64) -> String {
    format!("cell_U{u}_V{v}")
}

/// Full output of one cell, including the data the summary is built from.
#[derive(Clone, Debug)]
pub struct CellOutput {
    pub cell: ScanCell,
    pub coarse: Option<Trajectory>,
    pub fine: Option<Trajectory>,
    pub reference_n1: Vec<f64>,
}

fn defect_stats(cell: &mut ScanCell, trajs: &[&Trajectory]) {
    for r in trajs.iter().flat_map(|t| &t.records) {
        cell.max_defect_before = cell.max_defect_before.max(r.defect_before);
        cell.max_defect_after = cell.max_defect_after.max(r.defect_after);
        if r.purification_iterations > 0 {
            cell.purified_steps += 1;
            cell.max_iterations = cell.max_iterations.max(r.purification_iterations);
            cell.unconverged_steps += usize::from(!r.purification_converged);
        }
    }
    cell.drifts = trajs.iter().map(|t| t.drifts()).fold(Drifts::default(), |a, b| a.max(&b));
}

/// Runs one interacting cell: `dt` and `dt/2` trajectories against exact dynamics.
pub fn run_cell(cfg: &RunConfig, u: f64, v: f64) -> CellOutput {
    let reference = Reference::Exact;
    let go = || -> Result<CellOutput> {
        let hubbard = cfg.hubbard_at(u, v);
        let (psi, d0) = prepare_initial(&hubbard)?;
        let prop = cfg.propagation();
        let coarse = run_trajectory(&d0, &hubbard, &prop)?;
        let t = coarse.times();
        let reference_n1 = exact_n1(&psi, &hubbard, &t)?;
        let n1 = coarse.site_density(0);
        let mut cell = ScanCell::empty(u, v, reference);
        cell.delta_n1_bar = Some(metric_delta_n1(&t, &n1, &t, &reference_n1)?);
        let half = PropagationConfig {
            global_dt: prop.global_dt / 2.0,
            ..prop
        };
        let fine = match run_trajectory(&d0, &hubbard, &half) {
            Ok(f) => {
                let c = dt_convergence(&t, &n1, &f.times(), &f.site_density(0))?;
                cell.dt_residual = Some(c.residual);
                cell.dt_converged = c.converged;
                Some(f)
            }
            Err(e) => {
                cell.error = Some(format!("dt/2 run aborted: {e}"));
                None
            }
        };
        let trajs: Vec<&Trajectory> = std::iter::once(&coarse).chain(fine.as_ref()).collect();
        defect_stats(&mut cell, &trajs);
        Ok(CellOutput {
            cell,
            coarse: Some(coarse),
            fine,
            reference_n1,
        })
    };
    go().unwrap_or_else(|e| CellOutput {
        cell: ScanCell::failed(u, v, reference, &e),
        coarse: None,
        fine: None,
        reference_n1: Vec::new(),
    })
}

/// `U = 0` cell at trap `v`, compared with free fermions; `dt` run only.
pub fn run_free_anchor(cfg: &RunConfig, v: f64) -> CellOutput {
    let reference = Reference::FreeFermion;
    let go = || -> Result<CellOutput> {
        let hubbard = cfg.hubbard_at(0.0, v);
        let (psi, d0) = prepare_initial(&hubbard)?;
        let coarse = run_trajectory(&d0, &hubbard, &cfg.propagation())?;
        let t = coarse.times();
        let reference_n1 = free_n1(&psi, &hubbard, &t);
        let mut cell = ScanCell::empty(0.0, v, reference);
        cell.delta_n1_bar = Some(metric_delta_n1(&t, &coarse.site_density(0), &t, &reference_n1)?);
        defect_stats(&mut cell, &[&coarse]);
        Ok(CellOutput {
            cell,
            coarse: Some(coarse),
            fine: None,
            reference_n1,
        })
    };
    go().unwrap_or_else(|e| CellOutput {
        cell: ScanCell::failed(0.0, v, reference, &e),
        coarse: None,
        fine: None,
        reference_n1: Vec::new(),
    })
}

#[derive(Clone, Copy, Debug)]
enum Job {
    Cell(f64, f64),
    Anchor(f64),
}

impl Job {
    fn run(self, cfg: &RunConfig) -> CellOutput {
        match self {
            Job::Cell(u, v) => run_cell(cfg, u, v),
            Job::Anchor(v) => run_free_anchor(cfg, v),
        }
    }
}

fn jobs(cfg: &RunConfig) -> Vec<Job> {
    let mut jobs: Vec<Job> = cfg.grid().into_iter().map(|(u, v)| Job::Cell(u, v)).collect();
    jobs.extend(cfg.free_anchors.iter().map(|&v| Job::Anchor(v)));
    jobs
}

/// Worker count from [`THREADS_ENV`], if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

/// Runs all grid cells and `U = 0` anchors, one task per cell. Results are in
/// job order regardless of scheduling. Per-cell files go to `out_dir` when given.
pub fn run_scan_outputs(cfg: &RunConfig, threads: Option<usize>, out_dir: Option<&Path>) -> Result<Vec<CellOutput>> {
    cfg.validate()?;
    if cfg.u_grid.is_empty() || cfg.v_grid.is_empty() {
        return Err(Error::InvalidConfig("scan grids must be non-empty".into()));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| {
        jobs(cfg)
            .into_par_iter()
            .map(|job| {
                let out = job.run(cfg);
                if let Some(dir) = out_dir {
                    write_cell_files(dir, &out)?;
                }
                Ok(out)
            })
            .collect()
    })
}

pub fn run_scan(cfg: &RunConfig, threads: Option<usize>, out_dir: Option<&Path>) -> Result<Vec<ScanCell>> {
    let cells: Vec<ScanCell> = run_scan_outputs(cfg, threads, out_dir)?.into_iter().map(|o| o.cell).collect();
    if let Some(dir) = out_dir {
        write_json(&dir.join("scan_summary.json"), &cells)?;
    }
    Ok(cells)
}

/// Writes `<stem>_dt.csv`, `<stem>_dt2.csv` and `<stem>.json`.
pub fn write_cell_files(dir: &Path, out: &CellOutput) -> Result<Vec<PathBuf>> {
    let stem = out.cell.file_stem();
    let mut written = Vec::new();
    for (suffix, traj) in [("dt", &out.coarse), ("dt2", &out.fine)] {
        if let Some(traj) = traj {
            let path = dir.join(format!("{stem}_{suffix}.csv"));
            write_csv(&path, &traj.records)?;
            written.push(path);
        }
    }
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, &out.cell)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            sites: 2,
            horizon: 0.5,
            dt: 0.05,
            u_grid: vec![1.0, 2.0],
            v_grid: vec![0.5],
            free_anchors: vec![0.5],
            ..Default::default()
        }
    }

    #[test]
    fn scan_is_independent_of_parallelism() {
        let cfg = small();
        let serial = run_scan(&cfg, Some(1), None).unwrap();
        let parallel = run_scan(&cfg, Some(3), None).unwrap();
        assert_eq!(serial.len(), 3);
        assert_eq!(serial, parallel);
        for c in &serial {
            assert!(c.error.is_none(), "{c:?}");
            assert!(c.delta_n1_bar.unwrap() >= 0.0);
        }
        assert_eq!(serial[2].reference, Reference::FreeFermion);
        assert!(serial[2].delta_n1_bar.unwrap() < 1e-6);
        assert!(serial[0].dt_converged);
    }

    #[test]
    fn failures_stay_inside_the_cell() {
        let cfg = RunConfig {
            u_grid: vec![f64::MAX],
            free_anchors: vec![],
            ..small()
        };
        let cells = run_scan(&cfg, Some(1), None).unwrap();
        assert_eq!(cells.len(), 1);
        assert!(cells[0].error.is_some());
        assert!(!cells[0].dt_converged);
    }

    #[test]
    fn cell_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            u_grid: vec![1.0],
            free_anchors: vec![],
            ..small()
        };
        run_scan(&cfg, None, Some(dir.path())).unwrap();
        for f in ["cell_U1_V0.5_dt.csv", "cell_U1_V0.5_dt2.csv", "cell_U1_V0.5.json", "scan_summary.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let recs = crate::harness::io::read_csv(&dir.path().join("cell_U1_V0.5_dt2.csv")).unwrap();
        assert_eq!(recs.len(), 21);
    }
}
