//! `stovol`: simulate volatility models, estimate drift and diffusion from
//! price increments, and run Monte Carlo error tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stovol::bases::Family;
use stovol::config::{Preset, RunConfig};
use stovol::estimate::estimate;
use stovol::harness::{cap_global_workers, run_table, workers_from_env, McReport};
use stovol::io::{self, CURVE_POINTS};
use stovol::quadvar::{build_regression, quad_var, Target};
use stovol::rng::Purpose;
use stovol::sampling::{generate_observations, simulate_integrated, ObservationSet};
use stovol::{Error, Result};

#[derive(Parser)]
#[command(name = "stovol", version, about = "Nonparametric drift and diffusion estimation for stochastic volatility")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a volatility path and price increments.
    Simulate(Common),
    /// Estimate drift and diffusion from price increments.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// `l,dX` file of price increments on the configured observation
        /// step. Simulated from the config when absent.
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        target: TargetArg,
    },
    /// Run a Monte Carlo error table.
    McTable(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Preset, replacing the one named in the config.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Base seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "stovol-out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    basis: Option<BasisArg>,
    /// Quadratic variation block size.
    #[arg(long, value_name = "N")]
    k: Option<usize>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Table1,
    Table2,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Trig,
    Gp,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum TargetArg {
    Drift,
    DiffSq,
    Both,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let text = match &self.config {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))?,
            None => String::new(),
        };
        let preset = self.preset.map(|p| match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Table1 => Preset::Table1,
            PresetArg::Table2 => Preset::Table2,
        });
        let family = self.basis.map(|b| match b {
            BasisArg::Trig => Family::Trig,
            BasisArg::Gp => Family::PiecewisePoly,
        });
        RunConfig::parse_with_preset(&text, preset)?.with_overrides(self.seed, family, self.k)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut w = io::create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn simulate_obs(cfg: &RunConfig, keep_path: bool) -> Result<(ObservationSet, Option<Vec<f64>>)> {
    let counts = cfg.validate()?;
    let model = cfg.model_spec().build()?;
    let (j, path) = simulate_integrated(
        &model,
        cfg.sampling.fine_step,
        counts.fine_intervals,
        counts.ratio,
        &mut cfg.seeds.stream(Purpose::Volatility, 0),
        keep_path,
    )?;
    let obs = generate_observations(&j, &mut cfg.seeds.stream(Purpose::Price, 0))?;
    Ok((obs, path))
}

fn cmd_simulate(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    if common.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let out = common.out_dir()?;
    let (obs, path) = simulate_obs(&cfg, true)?;
    let path = path.expect("path kept on request");
    write_file(&out.join("path.csv"), |w| io::write_path(w, cfg.sampling.obs_step, &path))?;
    write_file(&out.join("observations.csv"), |w| io::write_observations(w, &obs))?;
    println!("model={} increments={} step={} out={}", cfg.model.name, obs.len(), obs.step, out.display());
    Ok(())
}

fn cmd_estimate(common: &Common, input: Option<&Path>, target: TargetArg) -> Result<()> {
    let cfg = common.resolve()?;
    if common.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let obs = match input {
        Some(p) => io::read_observations(io::open(p)?, cfg.sampling.obs_step)?,
        None => simulate_obs(&cfg, false)?.0,
    };
    let out = common.out_dir()?;
    let qv = quad_var(&obs, cfg.sampling.k)?;
    let est = estimate(&qv, &cfg.settings())?;
    write_file(&out.join("qv.csv"), |w| io::write_quadvar(w, &qv))?;
    let targets: &[Target] = match target {
        TargetArg::Drift => &[Target::Drift],
        TargetArg::DiffSq => &[Target::DiffSq],
        TargetArg::Both => &[Target::DiffSq, Target::Drift],
    };
    for &t in targets {
        let outcome = match t {
            Target::Drift => &est.drift,
            Target::DiffSq => &est.diffusion,
        };
        let name = t.as_str();
        let sample = build_regression(&qv, t)?;
        write_file(&out.join(format!("regression_{name}.csv")), |w| io::write_regression(w, &sample))?;
        write_file(&out.join(format!("trace_{name}.csv")), |w| io::write_selection_trace(w, outcome))?;
        write_file(&out.join(format!("curve_{name}.csv")), |w| io::write_curve(w, &outcome.fit, CURVE_POINTS))?;
        println!(
            "target={name} chosen={} dim={} criterion={}",
            outcome.chosen_spec(),
            outcome.chosen_spec().dim(),
            io::fmt_f64(outcome.min_criterion())
        );
    }
    write_file(&out.join("estimate.json"), |w| Ok(serde_json::to_writer_pretty(w, &est)?))?;
    println!(
        "blocks={} domain=[{}, {}] out={}",
        qv.len(),
        io::fmt_f64(est.domain.lo),
        io::fmt_f64(est.domain.hi),
        out.display()
    );
    Ok(())
}

fn cmd_mc_table(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    if common.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let out = common.out_dir()?;
    let started = Instant::now();
    let mut reports = Vec::new();
    for plan in cfg.experiment_plans() {
        let t = Instant::now();
        reports.push(run_table(&plan, None)?);
        eprintln!("{}: {} replications in {:.1?}", plan.model.id, plan.replications, t.elapsed());
    }
    let report = McReport::merge(reports);
    let csv = report.to_csv()?;
    fs::write(out.join("report.json"), report.to_json()?)?;
    fs::write(out.join("report.csv"), &csv)?;
    print!("{csv}");
    eprintln!("total {:.1?}, written to {}", started.elapsed(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = workers_from_env() {
        cap_global_workers(n);
    }
    let result = match &cli.command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Estimate { common, input, target } => cmd_estimate(common, input.as_deref(), *target),
        Command::McTable(c) => cmd_mc_table(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(if e.kind() == "config" { 2 } else { 1 })
        }
    }
}
