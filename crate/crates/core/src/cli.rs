//! Command-line front end. Each subcommand reads an optional config file,
//! applies flag overrides, writes CSV to `--out` (stdout when absent) and
//! prints a one-line summary.
//!
//! Exit status: 0 on success, 2 on usage or configuration errors, 3 when a
//! check fails.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::estimators::{fit_dc_mle, fit_finite_mle, fit_full_mle, fit_subset_mle, CloneConfig, FitOptions, FitResult};
use crate::harness::{
    limiting_demo, parse_triple, run_study, simulate_design, write_limiting_csv, write_study_csv, Config, DesignRule,
    LimitingConfig, StudyConfig,
};
use crate::identify::{check_b2_grid, check_m_injective, check_slepian_monotone, IdentifyReport};
use crate::information::{check_subset_inequality, info_loss};
use crate::likelihood::LikelihoodMethod;
use crate::model::io::{read_responses, write_responses};
use crate::model::{CrossedDesign, ResponseTable, SubsetKind, SubsetSpec, Theta, PARAM_NAMES};
use crate::quadrature::DEFAULT_ORDER;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "crossed-glmm", version, about = "Likelihood tools for crossed random-effects logistic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Plain-text `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// True parameter `mu,sigma2,tau2`.
    #[arg(long, allow_hyphen_values = true)]
    theta0: Option<String>,
    /// Working parameter `mu,sigma2,tau2`.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// Clone count for data cloning.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Retained posterior draws for data cloning.
    #[arg(long = "B")]
    b: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Response CSV (`i,j,k,y`) to fit instead of simulating.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a response table.
    Simulate(Common),
    /// Full-data maximum likelihood.
    Fit(Common),
    /// Maximum likelihood from the independent subsets.
    SubsetFit(Common),
    /// Data-cloning estimate.
    DcFit(Common),
    /// Maximum likelihood over a finite parameter set.
    FiniteFit(Common),
    /// Full, subset and lost information by enumeration.
    InfoLoss(Common),
    /// Verify the subset inequality by enumeration.
    CheckSubset(Common),
    /// Identification checks.
    Identify(Common),
    /// Seeded consistency study.
    Study(Common),
    /// Linear-model limiting demo.
    LimitingDemo(Common),
}

/// Outcome of a subcommand that ran to completion.
struct Finished {
    summary: String,
    passed: bool,
}

impl Finished {
    fn ok(summary: String) -> Self {
        Self { summary, passed: true }
    }
}

fn load(common: &Common) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let numbers = [
        ("seed", common.seed.map(|v| v.to_string())),
        ("threads", common.threads.map(|v| v.to_string())),
        ("m", common.m.map(|v| v.to_string())),
        ("n", common.n.map(|v| v.to_string())),
        ("K", common.k.map(|v| v.to_string())),
        ("B", common.b.map(|v| v.to_string())),
        ("reps", common.reps.map(|v| v.to_string())),
        ("theta0", common.theta0.clone()),
        ("theta", common.theta.clone()),
        ("data", common.data.as_ref().map(|p| p.display().to_string())),
        ("out", common.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in numbers {
        if let Some(v) = value {
            cfg.set(key, v);
        }
    }
    Ok(cfg)
}

fn with_output(cfg: &Config, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<bool> {
    match cfg.get("out") {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::Config(format!("cannot create {path}: {e}")))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush()?;
            Ok(true)
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            Ok(false)
        }
    }
}

fn default_theta0() -> Theta {
    Theta { mu: 0.0, sigma2: 1.0, tau2: 1.0, free: crate::model::FreeMask::MU_ONLY }
}

fn design_of(cfg: &Config, m_default: usize, n_default: usize) -> Result<CrossedDesign> {
    let (m, n) = (cfg.usize_or("m", m_default)?, cfg.usize_or("n", n_default)?);
    let design = match DesignRule::parse(cfg.str_or("design", "full_crossing"))? {
        DesignRule::FullCrossing => CrossedDesign::full_crossing(m, n, cfg.usize_or("replicates", 1)?),
        DesignRule::SalamanderStyle => CrossedDesign::salamander_style(m, n),
    };
    design.map_err(|e| Error::Config(e.to_string()))
}

fn subset_kind(text: &str) -> Result<SubsetKind> {
    match text {
        "diagonal" => Ok(SubsetKind::Diagonal),
        "replicate_pair" => Ok(SubsetKind::ReplicatePairDiagonal),
        "offdiag_pair" => Ok(SubsetKind::OffDiagonalPair),
        other => Err(Error::Config(format!(
            "unknown subset `{other}`; expected diagonal, replicate_pair or offdiag_pair"
        ))),
    }
}

const DATA_KEYS: [&str; 8] = ["data", "m", "n", "theta0", "seed", "design", "replicates", "out"];

/// The table named by `data`, or one simulated from the size, θ0 and seed.
fn data_of(cfg: &Config) -> Result<(ResponseTable, Theta)> {
    let theta0 = cfg.theta_or("theta0", "free", default_theta0())?;
    let table = match cfg.get("data") {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::Config(format!("cannot read data file {path}: {e}")))?;
            read_responses(file)?
        }
        None => {
            let design = design_of(cfg, 4, 4)?;
            simulate_design(&design, &theta0, cfg.u64_or("seed", 0)?)?
        }
    };
    Ok((table, theta0))
}

fn keys(extra: &[&'static str]) -> Vec<&'static str> {
    DATA_KEYS.iter().chain(extra).copied().collect()
}

/// Template for fits: `theta` (or θ0) with the mask from `free`.
fn template_of(cfg: &Config, theta0: &Theta) -> Result<Theta> {
    cfg.theta_or("theta", "free", *theta0)
}

fn write_fits(rows: &[(&str, FitResult)], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "parameter", "estimate", "loglik", "converged", "boundary", "evaluations"])?;
    for (name, fit) in rows {
        for i in fit.theta_hat.free_indices() {
            w.write_record([
                name.to_string(),
                PARAM_NAMES[i].to_string(),
                fit.theta_hat.values()[i].to_string(),
                fit.loglik.to_string(),
                fit.converged.to_string(),
                fit.boundary.to_string(),
                fit.evaluations.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(cfg: &Config) -> Result<Finished> {
    cfg.check_keys(&keys(&["free"]))?;
    let (table, _) = data_of(cfg)?;
    with_output(cfg, |w| write_responses(&table, w))?;
    Ok(Finished::ok(format!(
        "simulated {}x{} table with {} observations, mean {:.4}",
        table.design().m(),
        table.design().n(),
        table.design().total(),
        table.mean()
    )))
}

fn method_of(cfg: &Config) -> Result<LikelihoodMethod> {
    let order = cfg.usize_or("order", DEFAULT_ORDER)?;
    match cfg.str_or("method", "quadrature") {
        "quadrature" => Ok(LikelihoodMethod::Exact { order }),
        "mc" => Ok(LikelihoodMethod::MonteCarlo {
            draws: cfg.usize_or("draws", 1000)?,
            seed: cfg.u64_or("mc_seed", 1)?,
            order: cfg.usize_or("mc_order", 20)?,
        }),
        "is" => Ok(LikelihoodMethod::ImportanceSampling {
            draws: cfg.usize_or("draws", 1000)?,
            seed: cfg.u64_or("mc_seed", 1)?,
            order: cfg.usize_or("mc_order", 20)?,
        }),
        other => Err(Error::Config(format!("unknown method `{other}`; expected quadrature, mc or is"))),
    }
}

fn cmd_fit(cfg: &Config) -> Result<Finished> {
    cfg.check_keys(&keys(&["free", "theta", "method", "order", "draws", "mc_seed", "mc_order", "tol"]))?;
    let (table, theta0) = data_of(cfg)?;
    let template = template_of(cfg, &theta0)?;
    let method = method_of(cfg)?;
    let opts = FitOptions { tol: cfg.f64_or("tol", FitOptions::default().tol)?, ..FitOptions::default() };
    let fit = fit_full_mle(&table, &template, &method, &opts)?;
    let summary = format!("{} fit {} loglik {:.6}", fit.method, fit.theta_hat, fit.loglik);
    with_output(cfg, |w| write_fits(&[(fit.method.tag(), fit.clone())], w))?;
    Ok(Finished::ok(summary))
}

fn cmd_subset_fit(cfg: &Config) -> Result<Finished> {
    cfg.check_keys(&keys(&["free", "theta", "order"]))?;
    let (table, theta0) = data_of(cfg)?;
    let template = template_of(cfg, &theta0)?;
    let fit = fit_subset_mle(&table, &template, cfg.usize_or("order", DEFAULT_ORDER)?)?;
    let summary = format!("subset fit {} loglik {:.6}", fit.theta_hat, fit.loglik);
    with_output(cfg, |w| write_fits(&[("subset", fit.clone())], w))?;
    Ok(Finished::ok(summary))
}

fn cmd_dc_fit(cfg: &Config) -> Result<Finished> {
    cfg.check_keys(&keys(&["free", "theta", "K", "B", "burn_in", "order", "chain_seed"]))?;
    let (table, theta0) = data_of(cfg)?;
    let template = template_of(cfg, &theta0)?;
    let mut clone = CloneConfig::new(cfg.usize_or("K", 16)?, cfg.usize_or("B", 1000)?, cfg.u64_or("chain_seed", 1)?);
    clone.burn_in = cfg.usize_or("burn_in", clone.burn_in)?;
    clone.order = cfg.usize_or("order", 12)?;
    let r = fit_dc_mle(&table, &template, &clone)?;
    with_output(cfg, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["parameter", "posterior_mean", "scaled_var", "prior_mean", "prior_sd", "acceptance_rate", "ess"])?;
        for (a, &i) in r.posterior_mean.free_indices().iter().enumerate() {
            w.write_record([
                PARAM_NAMES[i].to_string(),
                r.posterior_mean.values()[i].to_string(),
                r.scaled_cov[(a, a)].to_string(),
                r.prior_mean.values()[i].to_string(),
                r.prior_sd[a].to_string(),
                r.acceptance_rate.to_string(),
                r.chain_summary.ess[a].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let mut summary = format!("data cloning K={} mean {} acceptance {:.3}", clone.k, r.posterior_mean, r.acceptance_rate);
    if let Some(warn) = &r.chain_summary.warning {
        summary.push_str(&format!(" (warning: {warn})"));
    }
    Ok(Finished::ok(summary))
}

fn cmd_finite_fit(cfg: &Config) -> Result<Finished> {
    cfg.check_keys(&keys(&["free", "grid", "shifts", "method", "order", "draws", "mc_seed", "mc_order"]))?;
    let (table, theta0) = data_of(cfg)?;
    let grid: Vec<Theta> = match cfg.list("grid") {
        Some(items) => items.iter().map(|s| parse_triple(s, theta0.free)).collect::<Result<_>>()?,
        None => cfg
            .f64_list_or("shifts", &[-1.0, 0.0, 1.0])?
            .iter()
            .map(|s| Theta { mu: theta0.mu + s, ..theta0 })
            .collect(),
    };
    let method = method_of(cfg)?;
    let fit = fit_finite_mle(&table, &grid, &method)?;
    let logliks: Vec<f64> = grid.iter().map(|t| Ok(method.evaluate(&table, t)?.loglik)).collect::<Result<_>>()?;
    let chosen = fit.grid_index.expect("finite fits record their index");
    with_output(cfg, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "mu", "sigma2", "tau2", "loglik", "selected"])?;
        for (k, (t, ll)) in grid.iter().zip(&logliks).enumerate() {
            w.write_record([
                k.to_string(),
                t.mu.to_string(),
                t.sigma2.to_string(),
                t.tau2.to_string(),
                ll.to_string(),
                (k == chosen).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(Finished::ok(format!("finite grid selects index {chosen}: {}", fit.theta_hat)))
}

fn cmd_info_loss(cfg: &Config) -> Result<Finished> {
    cfg.check_keys(&["m", "n", "design", "replicates", "theta", "free", "subset", "order", "out", "seed"])?;
    let design = design_of(cfg, 2, 2)?;
    let theta = cfg.theta_or("theta", "free", default_theta0())?;
    let subset = SubsetSpec::resolve(&design, subset_kind(cfg.str_or("subset", "diagonal"))?);
    let order = cfg.usize_or("order", DEFAULT_ORDER)?;
    let info = match info_loss(&design, &theta, &subset, order) {
        Err(Error::IdentityViolation(r)) => {
            return Ok(Finished { summary: format!("information identity violated: residual {r:e}"), passed: false })
        }
        other => other?,
    };
    let names = theta.free_names();
    with_output(cfg, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["matrix", "row", "col", "value"])?;
        for (label, mat) in [("i_full", &info.i_full), ("i_subset", &info.i_subset), ("loss", &info.loss)] {
            for a in 0..names.len() {
                for b in 0..names.len() {
                    w.write_record([label, names[a], names[b], &mat[(a, b)].to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(Finished::ok(format!("information identity holds, residual {:.3e}", info.residual)))
}

fn cmd_check_subset(cfg: &Config) -> Result<Finished> {
    cfg.check_keys(&["m", "n", "design", "replicates", "theta0", "theta", "free", "subset", "lambda", "order", "out", "seed"])?;
    let design = design_of(cfg, 2, 2)?;
    let theta0 = cfg.theta_or("theta0", "free", Theta::new(0.0, 1.0, 1.0)?)?;
    let theta = cfg.theta_or("theta", "free", Theta::new(0.5, 1.0, 1.0)?)?;
    let subset = SubsetSpec::resolve(&design, subset_kind(cfg.str_or("subset", "diagonal"))?);
    let lambda = cfg.f64_or("lambda", 1.0)?;
    let report =
        check_subset_inequality(&design, &theta0, &theta, &subset, |_| lambda, cfg.usize_or("order", DEFAULT_ORDER)?)?;
    with_output(cfg, |w| report.write_csv(w))?;
    let verdict = if report.passed { "passes" } else { "FAILS" };
    Ok(Finished {
        summary: format!("subset inequality {verdict}: max(lhs - rhs) = {:.3e}", report.max_excess),
        passed: report.passed,
    })
}

fn range_of(cfg: &Config, key: &str, default: (f64, f64)) -> Result<(f64, f64)> {
    let v = cfg.f64_list_or(key, &[default.0, default.1])?;
    match v.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(Error::Config(format!("`{key}` needs two values `lo | hi`"))),
    }
}

fn cmd_identify(cfg: &Config) -> Result<Finished> {
    cfg.check_keys(&[
        "theta0", "epsilon", "M", "density", "mu_range", "psi2_range", "m_density", "gamma_grid", "slepian_mu",
        "slepian_psi2", "order", "out", "seed",
    ])?;
    let order = cfg.usize_or("order", DEFAULT_ORDER)?;
    let theta0 = cfg.theta_or("theta0", "free", Theta::new(0.2, 1.0, 0.8)?)?;
    let b2 = check_b2_grid(&theta0, cfg.f64_or("epsilon", 0.2)?, cfg.f64_or("M", 3.0)?, cfg.usize_or("density", 7)?, order)?;
    let inj = check_m_injective(
        range_of(cfg, "mu_range", (-2.0, 2.0))?,
        range_of(cfg, "psi2_range", (0.25, 4.0))?,
        cfg.usize_or("m_density", 15)?,
        order,
    )?;
    let default_grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let gammas = cfg.f64_list_or("gamma_grid", &default_grid)?;
    let slep = check_slepian_monotone(cfg.f64_or("slepian_mu", 0.0)?, cfg.f64_or("slepian_psi2", 2.0)?, &gammas, order)?;

    let mut report = IdentifyReport { lines: Vec::new() };
    let max_kl = b2.points.iter().map(|p| p.kl_pair.max(p.kl_offdiag)).fold(f64::NEG_INFINITY, f64::max);
    report.push("kl_nonpositive", format!("{} grid points", b2.points.len()), max_kl, max_kl <= 0.0);
    report.push("b2_separation", format!("worst at {}", b2.worst.theta), b2.delta, b2.passed);
    report.push("b2_skipped", "grid points with a negative variance", b2.skipped.len() as f64, true);
    report.push("m_injective", format!("{} grid points", inj.values.len()), inj.min_ratio, inj.passed);
    report.push("slepian_monotone", format!("{} gamma values", slep.values.len()), slep.min_increment, slep.passed);
    with_output(cfg, |w| report.write_csv(w))?;
    let passed = report.passed();
    Ok(Finished {
        summary: format!(
            "identification checks {}: separation {:.3e}, injectivity ratio {:.3e}, min increment {:.3e}",
            if passed { "pass" } else { "FAIL" },
            b2.delta,
            inj.min_ratio,
            slep.min_increment
        ),
        passed,
    })
}

fn cmd_study(cfg: &Config) -> Result<Finished> {
    cfg.check_keys(&StudyConfig::KEYS)?;
    let study = StudyConfig::from_config(cfg)?;
    let rows = run_study(&study)?;
    with_output(cfg, |w| write_study_csv(&rows, w))?;
    let failed = rows.iter().filter(|r| r.status == "failed").count();
    Ok(Finished::ok(format!(
        "study: {} sizes x {} replications, {} rows ({} failed fits)",
        study.sizes.len(),
        study.replications,
        rows.len(),
        failed
    )))
}

fn cmd_limiting_demo(cfg: &Config) -> Result<Finished> {
    cfg.check_keys(&["m", "n_ladder", "reps", "seed", "out"])?;
    let m = match cfg.str_or("m", "1") {
        "n" => None,
        text => Some(text.parse().map_err(|_| Error::Config(format!("`m`: expected a count or `n`, got `{text}`")))?),
    };
    let demo = LimitingConfig {
        m,
        n_ladder: cfg.usize_list_or("n_ladder", &[10, 100, 1000])?,
        replications: cfg.usize_or("reps", 500)?,
        seed: cfg.u64_or("seed", 0)?,
    };
    let rows = limiting_demo(&demo)?;
    with_output(cfg, |w| write_limiting_csv(&rows, w))?;
    let last = rows.last().expect("ladder is nonempty");
    Ok(Finished::ok(format!(
        "limiting demo: at m={}, n={} variance {:.4} (analytic {:.4})",
        last.m, last.n, last.empirical_var, last.analytic_var
    )))
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (common, handler): (&Common, fn(&Config) -> Result<Finished>) = match &cli.command {
        Command::Simulate(c) => (c, cmd_simulate),
        Command::Fit(c) => (c, cmd_fit),
        Command::SubsetFit(c) => (c, cmd_subset_fit),
        Command::DcFit(c) => (c, cmd_dc_fit),
        Command::FiniteFit(c) => (c, cmd_finite_fit),
        Command::InfoLoss(c) => (c, cmd_info_loss),
        Command::CheckSubset(c) => (c, cmd_check_subset),
        Command::Identify(c) => (c, cmd_identify),
        Command::Study(c) => (c, cmd_study),
        Command::LimitingDemo(c) => (c, cmd_limiting_demo),
    };
    let outcome = load(common).and_then(|cfg| {
        let to_file = cfg.get("out").is_some();
        handler(&cfg).map(|f| (f, to_file))
    });
    match outcome {
        Ok((done, to_file)) => {
            if to_file {
                println!("{}", done.summary);
            } else {
                eprintln!("{}", done.summary);
            }
            if done.passed {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
