//! `cic`: achievable-region builder, region comparison, exponent checks and
//! the random-coding simulator for the cognitive interference channel.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use cic_core::config::InstanceConfig;
use cic_core::info::{property_suite, PropertyCheck};
use cic_core::instance::{random_batch, Instance, BATCH_ALPHA};
use cic_core::pmf::DERIVED_TOL;
use cic_core::polytope::{compare_regions, project_region, Comparison, Polygon2D};
use cic_core::region::{build_system, exponent_identity_check, ConstraintSystem, IdentityReport, RateVector, SystemKind};
use cic_core::sim::{binning_sweep, run_trials, sweep_csv, sweep_values, SimConfig, SimReport, DEFAULT_SEARCH_BUDGET_BITS};

#[derive(Parser)]
#[command(name = "cic", version, about = "Rate regions and random-coding simulation for the cognitive interference channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one constraint system and project it onto (R1, R2).
    Region(RegionArgs),
    /// Compare the two systems: per-constraint gaps and region inclusion.
    Compare(CompareArgs),
    /// Check the decoding-exponent identities and basic information identities.
    CheckIdentities(IdentityArgs),
    /// Monte Carlo of the superposition/binning scheme.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Dmt,
    Corrected,
}

impl From<SystemArg> for SystemKind {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Dmt => SystemKind::Dmt,
            SystemArg::Corrected => SystemKind::Corrected,
        }
    }
}

#[derive(Args)]
struct RegionArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "corrected")]
    system: SystemArg,
    /// JSON destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the polygon vertices as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, required_unless_present = "random", conflicts_with = "random")]
    config: Option<PathBuf>,
    /// Compare a batch of N random instances instead of one config.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IdentityArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON report destination; the residual table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 12)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// r1p,r1c,r2c,r2p,rp2c,rp2p in bits per channel use.
    #[arg(long, default_value = "0,0,0,0,0,0")]
    rates: String,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Cap on log2 of each decoder's search space.
    #[arg(long, default_value_t = DEFAULT_SEARCH_BUDGET_BITS)]
    search_budget_bits: f64,
    /// Encoder-side binning sweep over R'2c, as lo:hi:step.
    #[arg(long)]
    sweep_rp2c: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep CSV destination (stdout when absent).
    #[arg(long)]
    sweep_out: Option<PathBuf>,
}

fn load(path: &Path) -> Result<Instance> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg = InstanceConfig::from_json(&text).with_context(|| format!("in {}", path.display()))?;
    let mut inst = cfg.to_instance().with_context(|| format!("in {}", path.display()))?;
    if inst.label.is_none() {
        inst.label = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(inst)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

#[derive(Serialize)]
struct RegionOutput<'a> {
    label: Option<&'a str>,
    constraints: ConstraintSystem,
    polygon: Polygon2D,
}

fn cmd_region(a: RegionArgs) -> Result<u8> {
    let inst = load(&a.config)?;
    let constraints = build_system(a.system.into(), &inst.joint()?)?;
    let polygon = project_region(&constraints);
    log::info!("{} vertices", polygon.vertices.len());
    if let Some(csv) = &a.csv {
        emit(Some(csv), &polygon.to_csv())?;
    }
    emit_json(
        a.out.as_deref(),
        &RegionOutput {
            label: inst.label.as_deref(),
            constraints,
            polygon,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    label: Option<&'a str>,
    #[serde(flatten)]
    comparison: Comparison,
}

#[derive(Serialize)]
struct BatchSummary {
    instances: usize,
    seed: u64,
    alpha: f64,
    inclusions: usize,
    nonempty_dmt: usize,
    nonempty_corrected: usize,
    /// Largest absolute gap on an unchanged constraint.
    max_unchanged_gap: f64,
    /// Smallest gap on an augmented constraint.
    min_augmented_gap: f64,
    failures: Vec<String>,
}

fn cmd_compare(a: CompareArgs) -> Result<u8> {
    if let Some(count) = a.random {
        let results: Vec<(String, Result<Comparison>)> = random_batch(a.seed, count)
            .into_par_iter()
            .map(|inst| {
                let label = inst.label.clone().unwrap_or_default();
                let cmp = inst.joint().map_err(anyhow::Error::from).and_then(|j| Ok(compare_regions(&j)?));
                (label, cmp)
            })
            .collect();
        let mut s = BatchSummary {
            instances: count,
            seed: a.seed,
            alpha: BATCH_ALPHA,
            inclusions: 0,
            nonempty_dmt: 0,
            nonempty_corrected: 0,
            max_unchanged_gap: 0.0,
            min_augmented_gap: f64::INFINITY,
            failures: Vec::new(),
        };
        for (label, cmp) in results {
            let c = cmp.with_context(|| format!("instance {label}"))?;
            s.inclusions += c.inclusion as usize;
            s.nonempty_dmt += !c.dmt_polygon.is_empty() as usize;
            s.nonempty_corrected += !c.corrected_polygon.is_empty() as usize;
            for (id, g) in c.gaps.iter() {
                let num: u8 = id[2..].parse().expect("ids are 3.k");
                if cic_core::region::AUGMENTED.contains(&num) {
                    s.min_augmented_gap = s.min_augmented_gap.min(g);
                } else {
                    s.max_unchanged_gap = s.max_unchanged_gap.max(g.abs());
                }
            }
            if !c.inclusion {
                s.failures.push(label);
            }
        }
        if count == 0 {
            s.min_augmented_gap = 0.0;
        }
        emit_json(a.out.as_deref(), &s)?;
        return Ok(if s.failures.is_empty() { 0 } else { 1 });
    }
    let path = a.config.expect("clap requires --config without --random");
    let inst = load(&path)?;
    let comparison = compare_regions(&inst.joint()?)?;
    let ok = comparison.inclusion;
    emit_json(
        a.out.as_deref(),
        &CompareOutput {
            label: inst.label.as_deref(),
            comparison,
        },
    )?;
    if !ok {
        log::error!("the corrected region does not contain the earlier one");
    }
    Ok(if ok { 0 } else { 1 })
}

#[derive(Serialize)]
struct IdentityOutput<'a> {
    label: Option<&'a str>,
    tolerance: f64,
    passes: bool,
    identities: IdentityReport,
    properties: Vec<PropertyCheck>,
}

fn cmd_check_identities(a: IdentityArgs) -> Result<u8> {
    let inst = load(&a.config)?;
    let joint = inst.joint()?;
    let identities = exponent_identity_check(&joint)?;
    let properties = property_suite(&joint, DERIVED_TOL)?;
    let passes = identities.passes(DERIVED_TOL) && properties.iter().all(|p| p.passes);
    let mut table = format!(
        "{:<16} {:<6} {:>14} {:>14} {:>14} {:>10}\n",
        "event", "bound", "from entropies", "closed form", "rhs", "residual"
    );
    for r in &identities.rows {
        table.push_str(&format!(
            "{:<16} {:<6} {:>14.9} {:>14.9} {:>14.9} {:>10.2e}\n",
            r.event, r.constraint, r.exponent_from_entropies, r.exponent_closed_form, r.rhs, r.residual
        ));
    }
    for p in &properties {
        table.push_str(&format!(
            "{:<30} worst {:>10.2e}  {}\n",
            p.property,
            p.worst,
            if p.passes { "ok" } else { "FAIL" }
        ));
    }
    for note in &identities.notes {
        table.push_str(&format!("note: {note}\n"));
    }
    emit(None, &table)?;
    if let Some(out) = &a.out {
        emit_json(
            Some(out),
            &IdentityOutput {
                label: inst.label.as_deref(),
                tolerance: DERIVED_TOL,
                passes,
                identities,
                properties,
            },
        )?;
    }
    Ok(if passes { 0 } else { 1 })
}

fn parse_rates(s: &str) -> Result<RateVector> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("bad rate `{x}`: {e}")))
        .collect::<Result<_>>()?;
    let arr: [f64; 6] = v
        .try_into()
        .map_err(|v: Vec<f64>| anyhow!("--rates needs 6 values (r1p,r1c,r2c,r2p,rp2c,rp2p), got {}", v.len()))?;
    Ok(RateVector::from_slice(arr))
}

fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("bad sweep bound `{x}`: {e}")))
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else {
        bail!("--sweep-rp2c expects lo:hi:step, got `{s}`");
    };
    Ok(sweep_values(lo, hi, step)?)
}

fn cmd_simulate(a: SimulateArgs) -> Result<u8> {
    let inst = load(&a.config)?;
    let mut cfg = SimConfig::new(a.n, parse_rates(&a.rates)?, a.eps, a.trials, a.seed);
    cfg.search_budget_bits = a.search_budget_bits;
    let sweep = a.sweep_rp2c.as_deref().map(parse_sweep).transpose()?;
    let report: SimReport = run_trials(&inst.channel, &inst.aux, &cfg)?;
    log::info!("overall error rate {}", report.overall_err_rate);
    emit_json(a.out.as_deref(), &report)?;
    if let Some(values) = sweep {
        let rows = binning_sweep(&inst.channel, &inst.aux, &cfg, &values)?;
        emit(a.sweep_out.as_deref(), &sweep_csv(&rows))?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CIC_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Region(a) => cmd_region(a),
        Command::Compare(a) => cmd_compare(a),
        Command::CheckIdentities(a) => cmd_check_identities(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
