//! Batch driver: simulate ensembles, verify the energy estimates and
//! functional inequalities, run the boundary-control optimizer, and audit
//! inequalities standalone.
//!
//! Exit codes: 0 success, 1 check failure, 2 configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use acns::audit::{audit, Inequality};
use acns::config::RunConfig;
use acns::control::{
    admissibility_check, cost_j, optimize, synthesize_control, BoundaryControl, OptimizeConfig,
    Targets, TrackingNorm,
};
use acns::dynamics::{
    simulate_path, BoundaryData, IncrementProvider, ModalOperators, RngIncrements, Trajectory,
    ZeroControl,
};
use acns::io;
use acns::monitor::{estimate_check_l41, estimate_check_l42};
use acns::noise::{h1_audit, path_rng};
use acns::{Error, Result};

#[derive(Parser)]
#[command(name = "acns", about = "Stochastic two-phase channel-flow workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate sample paths and write trajectory/trace CSVs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Run the weighted-estimate and inequality checks on a fresh ensemble.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Minimize the tracking cost over the control box.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint file to continue from (also written to).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Audit the functional inequalities on random fields.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

fn load(config: &Path, out: Option<PathBuf>, seed: Option<u64>, paths: Option<usize>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(out) = out {
        cfg.out_dir = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    if let Some(paths) = paths {
        cfg.paths = paths;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn control_of(cfg: &RunConfig, params: &[f64]) -> Result<Option<BoundaryControl>> {
    if params.is_empty() {
        Ok(None)
    } else {
        Ok(Some(synthesize_control(params, &cfg.family())?))
    }
}

fn run_ensemble(cfg: &RunConfig) -> Result<(Vec<Trajectory>, acns::basis::GalerkinBasis, acns::domain::ChannelGeometry)> {
    let geom = cfg.geometry()?;
    let basis = cfg.basis(&geom)?;
    let ops = ModalOperators::build(&geom, &basis)?;
    let noise = cfg.noise_model(&geom)?;
    let init = cfg.initial_state(&geom, &basis)?;
    let ctrl = control_of(cfg, &cfg.control.params)?;
    let ctrl_ref: &dyn BoundaryData = match &ctrl {
        Some(c) => c,
        None => &ZeroControl,
    };
    if let Some(c) = &ctrl {
        let adm = admissibility_check(&geom, c, cfg.c0, cfg.delta)?;
        if !adm.pass {
            return Err(Error::Config(format!(
                "configured control violates the admissibility budget: {} >= {}",
                adm.value, cfg.delta
            )));
        }
    }
    let sim = cfg.sim();
    let mut ensemble = Vec::with_capacity(cfg.paths);
    for k in 0..cfg.paths {
        let mut inc = RngIncrements {
            rng: path_rng(cfg.master_seed, k as u64),
        };
        ensemble.push(simulate_path(
            &geom,
            &basis,
            &ops,
            &cfg.potential,
            &noise,
            ctrl_ref,
            &sim,
            &init,
            &mut inc as &mut dyn IncrementProvider,
        )?);
    }
    Ok((ensemble, basis, geom))
}

fn cmd_simulate(cfg: &RunConfig) -> Result<bool> {
    let (ensemble, _, _) = run_ensemble(cfg)?;
    let out = Path::new(&cfg.out_dir);
    for (k, traj) in ensemble.iter().enumerate() {
        io::write_text(&out.join(format!("path_{k}.csv")), &io::states_csv(traj))?;
        io::write_text(&out.join(format!("trace_{k}.csv")), &io::trace_csv(&traj.trace))?;
    }
    // The output directory is run placement, not run content; strip it so
    // identical configs give byte-identical manifests wherever they land.
    let mut canonical = cfg.clone();
    canonical.out_dir = String::new();
    let toml = canonical.to_toml()?;
    io::write_json(&out.join("manifest.json"), &io::manifest(cfg.master_seed, cfg.paths, &toml))?;
    io::write_text(&out.join("schema.txt"), &io::schema_text())?;
    println!("wrote {} paths to {}", ensemble.len(), out.display());
    Ok(true)
}

#[derive(Serialize)]
struct VerifyReport {
    l41: acns::monitor::EstimateReport,
    l42: acns::monitor::FourthMomentReport,
    h1: acns::noise::H1Audit,
    audits: Vec<acns::audit::RatioReport>,
    pass: bool,
}

fn cmd_verify(cfg: &RunConfig) -> Result<bool> {
    let (ensemble, basis, geom) = run_ensemble(cfg)?;
    let traces: Vec<_> = ensemble.iter().map(|t| t.trace.clone()).collect();
    let l41 = estimate_check_l41(&traces, cfg.c0)?;
    let l42 = estimate_check_l42(&traces, cfg.c0)?;
    let noise = cfg.noise_model(&geom)?;
    let mut rng = path_rng(cfg.master_seed, u64::MAX - 1);
    let h1 = h1_audit(&geom, &basis, &noise, 100, &mut rng)?;
    let mut audits = Vec::new();
    let mut audits_ok = true;
    for ineq in Inequality::ALL {
        let r = audit(&geom, ineq, 50, cfg.master_seed, 2.0)?;
        audits_ok &= r.trend == "stable" && r.max_ratio.is_finite();
        audits.push(r);
    }
    let pass = l41.pass && l42.estimate.pass && h1.violations == 0 && audits_ok;
    let report = VerifyReport {
        l41,
        l42,
        h1,
        audits,
        pass,
    };
    io::write_json(&Path::new(&cfg.out_dir).join("verify.json"), &report)?;
    for line in [
        format!("estimate second moment: c_hat = {:.6} {}", report.l41.c_hat, ok(report.l41.pass)),
        format!(
            "estimate fourth moment: c_hat = {:.6} {}",
            report.l42.estimate.c_hat,
            ok(report.l42.estimate.pass)
        ),
        format!("noise growth/Lipschitz: {} violations {}", report.h1.violations, ok(report.h1.violations == 0)),
        format!("inequality audits: {}", ok(audits_ok)),
    ] {
        println!("{line}");
    }
    Ok(pass)
}

fn ok(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

#[derive(Serialize)]
struct OptimizeReport {
    best_params: Vec<f64>,
    best_j: f64,
    evaluations: usize,
    history: Vec<f64>,
    reference_j: Option<f64>,
}

fn cmd_optimize(cfg: &RunConfig, resume: Option<&Path>) -> Result<bool> {
    let geom = cfg.geometry()?;
    let basis = cfg.basis(&geom)?;
    let ops = ModalOperators::build(&geom, &basis)?;
    let noise = cfg.noise_model(&geom)?;
    let init = cfg.initial_state(&geom, &basis)?;
    let sim = cfg.sim();
    let family = cfg.family();
    let opt = OptimizeConfig {
        budget: cfg.optimizer.budget,
        n_paths: cfg.paths,
        master_seed: cfg.master_seed,
        restarts: cfg.optimizer.restarts,
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
        norm: TrackingNorm::Graded,
    };
    // Targets: replay of the reference control when configured, zero else.
    let ref_ctrl = control_of(cfg, &cfg.control.target_params)?;
    let (targets, reference_j) = match &ref_ctrl {
        Some(c) => {
            let mut inc = RngIncrements {
                rng: path_rng(cfg.master_seed, 0),
            };
            let traj = simulate_path(
                &geom, &basis, &ops, &cfg.potential, &noise, c, &sim, &init, &mut inc,
            )?;
            let targets = Targets::from_trajectory(&geom, &basis, &traj, c, sim.alpha)?;
            let mut ensemble = Vec::with_capacity(cfg.paths);
            for k in 0..cfg.paths {
                let mut inc = RngIncrements {
                    rng: path_rng(cfg.master_seed, k as u64),
                };
                ensemble.push(simulate_path(
                    &geom, &basis, &ops, &cfg.potential, &noise, c, &sim, &init, &mut inc,
                )?);
            }
            let j = cost_j(
                &geom,
                &basis,
                &cfg.potential,
                &ensemble,
                &targets,
                c,
                &sim,
                cfg.lambda1,
                cfg.lambda2,
                TrackingNorm::Graded,
            )?
            .j;
            (targets, Some(j))
        }
        None => {
            let steps = sim.steps();
            let times: Vec<f64> = (0..=steps).map(|k| k as f64 * sim.dt).collect();
            (Targets::zero(&geom, &times), None)
        }
    };
    let out = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out)?;
    let default_cp = out.join("optim_checkpoint.json");
    let cp = resume.unwrap_or(&default_cp);
    let rec = optimize(
        &geom, &basis, &ops, &cfg.potential, &noise, &family, &targets, &sim, &opt, &init,
        Some(cp),
    )?;
    let report = OptimizeReport {
        best_params: rec.best_params.clone(),
        best_j: rec.best_j,
        evaluations: rec.evals.len(),
        history: rec.history.clone(),
        reference_j,
    };
    io::write_json(&out.join("optimize.json"), &report)?;
    println!(
        "best cost {:.6e} after {} evaluations{}",
        rec.best_j,
        rec.evals.len(),
        reference_j
            .map(|j| format!(" (reference {j:.6e})"))
            .unwrap_or_default()
    );
    Ok(true)
}

fn cmd_audit(cfg: &RunConfig, samples: usize) -> Result<bool> {
    let geom = cfg.geometry()?;
    let mut reports = Vec::new();
    let mut pass = true;
    for ineq in Inequality::ALL {
        let r = audit(&geom, ineq, samples, cfg.master_seed, 2.0)?;
        println!(
            "{}: max ratio {:.4} (refined {:.4}) {}",
            r.inequality,
            r.max_ratio,
            r.max_ratio_refined,
            if r.trend == "stable" { "PASS" } else { "FAIL" }
        );
        pass &= r.trend == "stable" && r.max_ratio.is_finite();
        reports.push(r);
    }
    io::write_json(&Path::new(&cfg.out_dir).join("audit.json"), &reports)?;
    Ok(pass)
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Simulate {
            config,
            out,
            seed,
            paths,
        } => cmd_simulate(&load(&config, out, seed, paths)?),
        Cmd::Verify {
            config,
            out,
            seed,
            paths,
        } => cmd_verify(&load(&config, out, seed, paths)?),
        Cmd::Optimize {
            config,
            out,
            seed,
            resume,
        } => {
            let cfg = load(&config, out, seed, None)?;
            cmd_optimize(&cfg, resume.as_deref())
        }
        Cmd::Audit {
            config,
            out,
            seed,
            samples,
        } => cmd_audit(&load(&config, out, seed, None)?, samples),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Precondition(_) | Error::Dimension(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
