use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rdm_purify::harness::io::{read_2rdm, read_csv, write_2rdm, write_csv, write_json};
use rdm_purify::harness::metrics::metric_delta_n1;
use rdm_purify::harness::scan::{exact_n1, prepare_initial, run_trajectory, threads_from_env, Drifts};
use rdm_purify::harness::{run_scan, RunConfig};
use rdm_purify::matcore::contract_2rdm;
use rdm_purify::oracle::{ground_state, spin_block_2rdm};
use rdm_purify::purifier::{hubbard_purifier, PurificationReport};
use rdm_purify::{Error, Result};

#[derive(Parser)]
#[command(name = "rdmpur", version, about = "2RDM purification and quench dynamics of the Hubbard chain")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML file with run settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Propagation horizon.
    #[arg(long = "T", global = true)]
    horizon: Option<f64>,
    #[arg(long = "U", global = true, allow_negative_numbers = true)]
    interaction: Option<f64>,
    #[arg(long = "V", global = true)]
    trap: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    kmax: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Trapped ground state: writes its 2RDM and a summary.
    GroundState,
    /// Quench from the trapped ground state.
    Propagate,
    /// Runs the (U, V) grid and the U = 0 anchors.
    Scan,
    /// Purifies a serialized 2RDM. Exits with status 2 if not converged.
    Purify {
        #[arg(long)]
        input: PathBuf,
        /// Adds a random admissible perturbation of this HS norm first.
        #[arg(long)]
        perturb: Option<f64>,
    },
    /// Re-checks emitted trajectory CSV and 2RDM files.
    Validate { files: Vec<PathBuf> },
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(x) = self.$flag { c.$field = x; })*
            };
        }
        set!(dt => dt, horizon => horizon, interaction => interaction, trap => trap, alpha => alpha, kmax => k_max, seed => seed);
        if let Some(o) = &self.out {
            c.out_dir = o.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Serialize)]
struct GroundSummary {
    energy: f64,
    gap: f64,
    residual: f64,
    site_densities: Vec<f64>,
    trace: f64,
}

#[derive(Serialize)]
struct PropagateSummary {
    config: RunConfig,
    delta_n1_bar: f64,
    drifts: Drifts,
    max_defect_before: f64,
    max_defect_after: f64,
    purified_steps: usize,
    unconverged_steps: usize,
}

#[derive(Serialize)]
struct PurifySummary {
    input: PathBuf,
    output: PathBuf,
    report: PurificationReport,
}

fn ground(cfg: &RunConfig) -> Result<bool> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let gs = ground_state(&cfg.hubbard())?;
    let d = spin_block_2rdm(&gs.state)?;
    write_2rdm(&cfg.out_dir.join("ground_state.rdm"), &d)?;
    let summary = GroundSummary {
        energy: gs.energy,
        gap: gs.gap,
        residual: gs.residual,
        site_densities: gs.state.site_densities(),
        trace: d.total_trace(),
    };
    write_json(&cfg.out_dir.join("ground_state.json"), &summary)?;
    println!("E0 = {:.12}, gap = {:.6}", gs.energy, gs.gap);
    Ok(true)
}

fn propagate(cfg: &RunConfig) -> Result<bool> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let hubbard = cfg.hubbard();
    let (psi, d0) = prepare_initial(&hubbard)?;
    let traj = run_trajectory(&d0, &hubbard, &cfg.propagation())?;
    let t = traj.times();
    let delta = metric_delta_n1(&t, &traj.site_density(0), &t, &exact_n1(&psi, &hubbard, &t)?)?;
    write_csv(&cfg.out_dir.join("trajectory.csv"), &traj.records)?;
    let purified: Vec<_> = traj.records.iter().filter(|r| r.purification_iterations > 0).collect();
    let summary = PropagateSummary {
        config: cfg.clone(),
        delta_n1_bar: delta,
        drifts: traj.drifts(),
        max_defect_before: traj.records.iter().map(|r| r.defect_before).fold(0.0, f64::max),
        max_defect_after: traj.records.iter().map(|r| r.defect_after).fold(0.0, f64::max),
        purified_steps: purified.len(),
        unconverged_steps: purified.iter().filter(|r| !r.purification_converged).count(),
    };
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    println!(
        "delta_n1_bar = {delta:.6e}, max drift = {:.2e}, unconverged purifications = {}",
        summary.drifts.largest(),
        summary.unconverged_steps
    );
    Ok(summary.unconverged_steps == 0)
}

fn scan(cfg: &RunConfig) -> Result<bool> {
    let cells = run_scan(cfg, threads_from_env()?, Some(&cfg.out_dir))?;
    println!("{:>6} {:>6} {:>14} {:>10} {:>12} {:>12}", "U", "V", "delta_n1_bar", "dt_conv", "dt_resid", "max_def");
    for c in &cells {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.4e}"));
        println!(
            "{:>6} {:>6} {:>14} {:>10} {:>12} {:>12.3e}{}",
            c.u,
            c.v,
            fmt(c.delta_n1_bar),
            c.dt_converged,
            fmt(c.dt_residual),
            c.max_defect_after,
            c.error.as_ref().map_or(String::new(), |e| format!("  error: {e}"))
        );
    }
    Ok(cells.iter().all(|c| c.error.is_none()))
}

fn purify(cfg: &RunConfig, input: &Path, perturb: Option<f64>) -> Result<bool> {
    let mut d = read_2rdm(input)?;
    let hubbard = rdm_purify::hubbard::HubbardConfig {
        sites: d.sites,
        particles: d.particles,
        ..cfg.hubbard()
    };
    let purifier = hubbard_purifier(&hubbard, cfg.purification())?;
    if let Some(norm) = perturb {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        d = d.add(&purifier.admissible_direction(&mut rng, d.particles, norm));
    }
    contract_2rdm(&d)?;
    let (out, report) = purifier.purify_2rdm(&d)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let output = cfg.out_dir.join("purified.rdm");
    write_2rdm(&output, &out)?;
    println!(
        "defect {:.3e} -> {:.3e} in {} iterations ({})",
        report.defect_initial,
        report.defect_final,
        report.iterations_used,
        if report.converged { "converged" } else { "not converged" }
    );
    let converged = report.converged;
    write_json(
        &cfg.out_dir.join("purification_report.json"),
        &PurifySummary {
            input: input.to_path_buf(),
            output,
            report,
        },
    )?;
    Ok(converged)
}

fn validate(files: &[PathBuf]) -> Result<bool> {
    if files.is_empty() {
        return Err(Error::InvalidConfig("no files given".into()));
    }
    let mut ok = true;
    for f in files {
        let res = match f.extension().and_then(|e| e.to_str()) {
            Some("csv") => read_csv(f).map(|r| format!("{} rows", r.len())),
            _ => read_2rdm(f).map(|d| format!("2RDM, trace {:.6}", d.total_trace())),
        };
        match res {
            Ok(msg) => println!("ok    {}: {msg}", f.display()),
            Err(e) => {
                ok = false;
                println!("FAIL  {}: {e}", f.display());
            }
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Validate { files } => validate(files),
        cmd => cli.common.run_config().and_then(|cfg| match cmd {
            Cmd::GroundState => ground(&cfg),
            Cmd::Propagate => propagate(&cfg),
            Cmd::Scan => scan(&cfg),
            Cmd::Purify { input, perturb } => purify(&cfg, input, *perturb),
            Cmd::Validate { .. } => unreachable!(),
        }),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
