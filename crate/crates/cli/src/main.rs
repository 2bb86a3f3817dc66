//! `hjnet`: configuration-driven front end for the network
//! Hamilton-Jacobi solver.
//!
//! Exit codes: 0 success, 1 validation error (bad config, inadmissible
//! inputs, flux-limiter violations), 2 runtime error (solver or I/O
//! failures). A violated time-step condition is reported as a warning only.

mod config;

use anyhow::{anyhow, bail, Result};
use clap::{Parser, Subcommand};
use config::RunConfig;
use hjnet_core::{
    cfl_margin, consistency_probe, convergence_study, export, run, solution_error,
    ConvergenceTable, DtRule, Grid, Problem, ProbeFunction, ReferenceSpec, SchemeConfig,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Semi-Lagrangian solver for Hamilton-Jacobi equations on embedded
/// networks.
#[derive(Parser)]
#[command(name = "hjnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for node updates (results are identical for any
    /// count).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for CSV files (must exist; default: config value or
    /// current directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the reference-solution dx (test2-style fine-grid
    /// references).
    #[arg(long, global = true)]
    reference_dx: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the network, flux limiter and step pairs of a config.
    Validate { config: PathBuf },
    /// Solve one (dx, dt rule) pair and export the solution.
    Run { config: PathBuf },
    /// Sweep the configured dx list against every dt rule.
    Convergence { config: PathBuf },
    /// Measure consistency defects of a smooth test function.
    Probe { config: PathBuf },
}

/// Failures that indicate bad inputs rather than a failed computation.
struct ValidationError(anyhow::Error);

enum CliError {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        CliError::Validation(e.0)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { config } => cmd_validate(config, &cli),
        Command::Run { config } => cmd_run(config, &cli),
        Command::Convergence { config } => cmd_convergence(config, &cli),
        Command::Probe { config } => cmd_probe(config, &cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(e)) => {
            eprintln!("validation error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("runtime error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Everything up to and including grid construction is a validation
/// concern; failures afterwards are runtime errors.
struct Prepared {
    cfg: RunConfig,
    problem: Problem,
    scheme: SchemeConfig,
    out_dir: PathBuf,
}

fn prepare(config_path: &Path, cli: &Cli) -> Result<Prepared, ValidationError> {
    let inner = || -> Result<Prepared> {
        let cfg = config::load(config_path)?;
        let problem = cfg.build_problem()?;
        let scheme = cfg.scheme_config(cli.workers)?;
        let out_dir = cli
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Prepared { cfg, problem, scheme, out_dir })
    };
    inner().map_err(ValidationError)
}

fn reference_spec(prep: &Prepared, cli: &Cli) -> Result<Option<ReferenceSpec>, ValidationError> {
    let problem = &prep.problem;
    let section = &prep.cfg.reference;
    let spec = if problem.name == "test1" && section.is_none() && cli.reference_dx.is_none() {
        Some(ReferenceSpec::ExactT1)
    } else if let Some(section) = section {
        let rule = match &section.dt_rule {
            Some(text) => DtRule::parse(text).map_err(|e| ValidationError(anyhow!(e)))?,
            None => DtRule::Cfl(problem.beta0),
        };
        Some(ReferenceSpec::FineGrid { dx: cli.reference_dx.unwrap_or(section.dx), rule })
    } else if problem.name == "test2" || cli.reference_dx.is_some() {
        // Desk-scale default for the state-dependent benchmark.
        Some(ReferenceSpec::FineGrid {
            dx: cli.reference_dx.unwrap_or(2.5e-3),
            rule: DtRule::Cfl(problem.beta0),
        })
    } else {
        None
    };
    Ok(spec)
}

fn cmd_validate(config_path: &Path, cli: &Cli) -> Result<(), CliError> {
    let prep = prepare(config_path, cli)?;
    let problem = &prep.problem;
    let net = &problem.network;
    println!(
        "network: {} vertices, {} arcs, connected (min arc length {:.6})",
        net.vertices().len(),
        net.arcs().len(),
        net.min_arc_length()
    );
    net.check_interior_disjoint()
        .map_err(|e| CliError::Validation(anyhow!(e)))?;
    println!("interior-disjointness sampling: ok");

    let inner = || -> Result<bool> {
        let dx_list = prep.cfg.dx.to_vec();
        let rules = prep.cfg.dt_rules()?;
        let mut grid_for_limiter = None;
        let mut cfl_ok = true;
        for &dx in &dx_list {
            for &rule in &rules {
                let dt = rule.dt(net, dx);
                let grid = Grid::build(net, dx, dt, prep.cfg.horizon)?;
                let margin = cfl_margin(&grid, problem.beta0);
                let status = if margin >= 0.0 {
                    "ok"
                } else {
                    cfl_ok = false;
                    "WARNING: consistency estimate not covered"
                };
                println!(
                    "cfl: dx={dx} rule={rule} dt_eff={:.6} margin={margin:.3e} {status}",
                    grid.dt_eff
                );
                grid_for_limiter.get_or_insert(grid);
            }
        }
        let grid = grid_for_limiter.expect("dx list is nonempty");
        let report = problem.validate_limiter(&grid);
        for check in &report.per_vertex {
            let vid = &net.vertices()[check.vertex].id;
            let c = problem.flux_limiter.value(check.vertex);
            let status = if check.margin >= 0.0 { "ok" } else { "VIOLATION" };
            println!(
                "flux limiter: vertex {vid} c={c} bound={:.6} margin={:.6} {status}",
                check.bound, check.margin
            );
        }
        if !cfl_ok {
            println!("warning: some step pairs violate the consistency time-step condition");
        }
        Ok(report.is_valid())
    };
    match inner() {
        Ok(true) => {
            println!("validate: all checks passed");
            Ok(())
        }
        Ok(false) => Err(CliError::Validation(anyhow!(
            "flux limiter violates the admissibility bound at some vertex"
        ))),
        Err(e) => Err(CliError::Validation(e)),
    }
}

fn scalar_inputs(prep: &Prepared) -> Result<(f64, DtRule), ValidationError> {
    let inner = || -> Result<(f64, DtRule)> {
        let dx_list = prep.cfg.dx.to_vec();
        let rules = prep.cfg.dt_rules()?;
        if dx_list.len() != 1 || rules.len() != 1 {
            bail!(
                "this command needs a scalar dx and a single dt rule \
                 (got {} dx values, {} rules); use `convergence` for sweeps",
                dx_list.len(),
                rules.len()
            );
        }
        Ok((dx_list[0], rules[0]))
    };
    inner().map_err(ValidationError)
}

fn cmd_run(config_path: &Path, cli: &Cli) -> Result<(), CliError> {
    let prep = prepare(config_path, cli)?;
    let (dx, rule) = scalar_inputs(&prep)?;
    let problem = &prep.problem;
    let net = &problem.network;
    let grid = Grid::build(net, dx, rule.dt(net, dx), prep.cfg.horizon)
        .map_err(|e| CliError::Validation(anyhow!(e)))?;
    let reference = reference_spec(&prep, cli)?;

    let sol = run(problem, &grid, &prep.scheme).map_err(|e| CliError::Runtime(anyhow!(e)))?;
    let solution_path = prep.out_dir.join("solution.csv");
    export::write_solution_csv(&solution_path, net, &grid, &sol)
        .map_err(|e| CliError::Runtime(anyhow!("writing {}: {e}", solution_path.display())))?;
    println!(
        "run: {} dx={dx} rule={rule} dt_eff={:.6} steps={} nodes={} -> {}",
        problem.name,
        grid.dt_eff,
        grid.n_time,
        grid.node_count(),
        solution_path.display()
    );

    if let Some(reference) = reference {
        let report = solution_error(problem, &grid, &sol, &reference, &prep.scheme)
            .map_err(|e| CliError::Runtime(anyhow!(e)))?;
        let profile_path = prep.out_dir.join("error_profile.csv");
        export::write_error_profile_csv(&profile_path, net, &grid, &report.abs_errors)
            .map_err(|e| CliError::Runtime(anyhow!("writing {}: {e}", profile_path.display())))?;
        println!("error profile -> {}", profile_path.display());
        println!(
            "E_inf={} E_1={}",
            export::fmt_float(report.e_inf),
            export::fmt_float(report.e_1)
        );
    }
    Ok(())
}

fn print_wide_table(table: &ConvergenceTable, rules: &[DtRule], dx_list: &[f64]) {
    let header: Vec<String> = rules
        .iter()
        .flat_map(|r| [format!("{r} E_inf"), format!("{r} E_1")])
        .collect();
    println!(
        "{:<12} {}",
        "dx",
        header.iter().map(|h| format!("{h:<14}")).collect::<String>()
    );
    for &dx in dx_list {
        let mut cells = String::new();
        for &rule in rules {
            if let Some(row) = table.rows.iter().find(|r| r.dx == dx && r.rule == rule) {
                cells.push_str(&format!("{:<14.3e}{:<14.3e}", row.e_inf, row.e_1));
            }
        }
        println!("{dx:<12.4} {cells}");
    }
}

fn cmd_convergence(config_path: &Path, cli: &Cli) -> Result<(), CliError> {
    let prep = prepare(config_path, cli)?;
    let problem = &prep.problem;
    let inputs = || -> Result<(Vec<f64>, Vec<DtRule>)> {
        Ok((prep.cfg.dx.to_vec(), prep.cfg.dt_rules()?))
    };
    let (dx_list, rules) = inputs().map_err(CliError::Validation)?;
    let reference = reference_spec(&prep, cli)?.ok_or_else(|| {
        CliError::Validation(anyhow!(
            "convergence needs a reference: builtin test1/test2 or a `reference` section"
        ))
    })?;

    let table = convergence_study(
        problem,
        &dx_list,
        &rules,
        prep.cfg.horizon,
        &reference,
        &prep.scheme,
    )
    .map_err(|e| CliError::Runtime(anyhow!(e)))?;

    let path = prep.out_dir.join("convergence.csv");
    export::write_convergence_csv(&path, &table)
        .map_err(|e| CliError::Runtime(anyhow!("writing {}: {e}", path.display())))?;
    println!("convergence table ({} rows) -> {}", table.rows.len(), path.display());
    print_wide_table(&table, &rules, &dx_list);
    Ok(())
}

fn cmd_probe(config_path: &Path, cli: &Cli) -> Result<(), CliError> {
    let prep = prepare(config_path, cli)?;
    let (dx, rule) = scalar_inputs(&prep)?;
    let problem = &prep.problem;
    let net = &problem.network;
    let grid = Grid::build(net, dx, rule.dt(net, dx), prep.cfg.horizon)
        .map_err(|e| CliError::Validation(anyhow!(e)))?;

    let section = prep.cfg.probe.as_ref();
    let centroid = || -> Vec<f64> {
        let mut c = vec![0.0; net.dim];
        for v in net.vertices() {
            for (ci, vi) in c.iter_mut().zip(&v.coords) {
                *ci += vi / net.vertices().len() as f64;
            }
        }
        c
    };
    let gradient = section
        .and_then(|s| s.gradient.clone())
        .unwrap_or_else(|| vec![0.0; net.dim]);
    let quad = section.and_then(|s| s.quad).unwrap_or(0.5);
    let center = section.and_then(|s| s.center.clone()).unwrap_or_else(centroid);
    let probe = ProbeFunction::ambient_quadratic(net, &gradient, quad, &center)
        .map_err(|e| CliError::Validation(anyhow!(e)))?;

    let report = consistency_probe(problem, &grid, &probe, &prep.scheme)
        .map_err(|e| CliError::Runtime(anyhow!(e)))?;
    let path = prep.out_dir.join("probe.csv");
    export::write_probe_csv(&path, net, &grid, &report)
        .map_err(|e| CliError::Runtime(anyhow!("writing {}: {e}", path.display())))?;
    println!(
        "probe: dx={dx} rule={rule} dt_eff={:.6} cfl_margin={:.3e}{}",
        grid.dt_eff,
        report.cfl_margin,
        if report.cfl_violated {
            " (condition violated; defects labeled advisory)"
        } else {
            ""
        }
    );
    println!(
        "max interior defect = {:.6e}, max vertex defect = {:.6e} -> {}",
        report.max_interior(),
        report.max_vertex(),
        path.display()
    );
    Ok(())
}
