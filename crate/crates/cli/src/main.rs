use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use jointlik::dataset::{Dataset, LoadOptions};
use jointlik::estimation::{format_coefficients, format_summary, maximize, Controls, FitResult};
use jointlik::extension::UserRegistry;
use jointlik::model::Model;
use jointlik::prediction::{predict, write_csv, Contrast, PredictRequest, PredictType, Statistic};
use jointlik::spec::{parse_spec_file, Family, IntMethod, ModelSpec};
use jointlik::Error;

#[derive(Parser)]
#[command(name = "jointlik", version, about = "Multi-outcome mixed-effects and joint models by maximum likelihood")]
struct Cli {
    /// Worker threads for likelihood and prediction (default: all cores).
    #[arg(long, global = true, env = "JOINTLIK_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model file to a data set.
    Fit(FitArgs),
    /// Predict from a saved fit.
    Predict(PredictArgs),
    /// Parametric survival model from a single formula.
    Mlsurv(MlsurvArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Token marking a missing value.
    #[arg(long, default_value = "NA")]
    na: String,
}

#[derive(Args)]
struct ControlArgs {
    /// Integration points per level (one value applies to all levels).
    #[arg(long, value_delimiter = ',')]
    ip: Option<Vec<usize>>,
    /// Integration method per level: ghermite, halton, sobol or mc.
    #[arg(long, value_delimiter = ',')]
    intmethod: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Convergence tolerance on the largest gradient entry.
    #[arg(long, default_value_t = 1e-5)]
    grad_tol: f64,
    /// Convergence tolerance on the relative change in log likelihood.
    #[arg(long, default_value_t = 1e-8)]
    rel_tol: f64,
    /// Function for `user` submodels that do not name one.
    #[arg(long)]
    userf: Option<String>,
    /// Where to write the fit as JSON.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model file.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    spec: Option<PathBuf>,
    /// Model given inline; `;` separates lines.
    #[arg(long)]
    model: Option<String>,
    #[command(flatten)]
    control: ControlArgs,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fit file written by `fit` or `mlsurv`.
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    stat: String,
    #[arg(long = "type", default_value = "fixedonly")]
    kind: String,
    #[arg(long, default_value_t = 1)]
    predmodel: usize,
    /// Covariates held fixed, as `name=value,...`.
    #[arg(long, value_delimiter = ',')]
    at: Vec<String>,
    /// `name=first,second`; the difference is second minus first.
    #[arg(long)]
    contrast: Option<String>,
    /// Survival submodels acting as competing causes.
    #[arg(long, value_delimiter = ',')]
    causes: Option<Vec<usize>>,
    /// Time grid: `t1,t2,...` or `start:stop:count`.
    #[arg(long)]
    times: Option<String>,
    /// Output CSV (default: standard output).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Distribution {
    Exponential,
    Weibull,
    Gompertz,
    Rp,
    Logchazard,
    Loghazard,
}

#[derive(Args)]
struct MlsurvArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Formula with a `Surv(time, event)` response.
    formula: String,
    #[arg(long)]
    distribution: Distribution,
    /// Spline degrees of freedom of the baseline for rp, logchazard and loghazard.
    #[arg(long, default_value_t = 3)]
    df: usize,
    #[command(flatten)]
    control: ControlArgs,
}

/// Exit status for input problems and for non-convergence.
const EXIT_INPUT: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Parse(_) | Error::Spec(_) | Error::Data(_) | Error::Csv(_) | Error::Basis(_) | Error::Predict(_)) => {
            EXIT_INPUT
        }
        Some(Error::NotConverged { .. }) => EXIT_NOT_CONVERGED,
        _ => 1,
    }
}

fn load_data(args: &DataArgs) -> anyhow::Result<Dataset> {
    let options = LoadOptions {
        na_token: args.na.clone(),
        ..LoadOptions::default()
    };
    Dataset::load_table(&args.data, &options).with_context(|| format!("reading {}", args.data.display()))
}

fn apply_controls(spec: &mut ModelSpec, c: &ControlArgs, users: &UserRegistry) -> anyhow::Result<()> {
    if let Some(ip) = &c.ip {
        if ip.contains(&0) {
            return Err(Error::Parse("ip must be at least 1".into()).into());
        }
        spec.ip = ip.clone();
    }
    if let Some(methods) = &c.intmethod {
        spec.intmethod = methods
            .iter()
            .map(|m| IntMethod::from_tag(m).ok_or_else(|| Error::Parse(format!("unknown intmethod `{m}`"))))
            .collect::<Result<_, _>>()?;
    }
    if let Some(name) = &c.userf {
        if users.get(name).is_none() {
            let known: Vec<&str> = users.names().collect();
            return Err(Error::Spec(format!("unknown user function `{name}`; registered: {}", known.join(", "))).into());
        }
        for sm in &mut spec.submodels {
            if sm.family == Family::User && sm.userf.is_none() {
                sm.userf = Some(name.clone());
            }
        }
    }
    Ok(())
}

/// The likelihood runs on the global pool, sized by `--threads`.
fn controls(c: &ControlArgs) -> Controls {
    Controls {
        max_iter: c.max_iter,
        grad_tol: c.grad_tol,
        rel_tol: c.rel_tol,
        seed: c.seed,
        threads: None,
        start: None,
    }
}

fn write_fit(fit: &FitResult, out: &Option<PathBuf>) -> anyhow::Result<()> {
    if let Some(path) = out {
        fs::write(path, fit.to_json()? + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Fits and writes the JSON, also for the best point of a run that did not
/// converge.
fn run_fit(
    spec: &ModelSpec,
    data: Dataset,
    users: &UserRegistry,
    control: &ControlArgs,
) -> anyhow::Result<FitResult> {
    let model = Model::new(spec, data, users)?;
    match maximize(&model, &controls(control)) {
        Ok(fit) => {
            write_fit(&fit, &control.out)?;
            Ok(fit)
        }
        Err(Error::NotConverged { best, .. }) => {
            write_fit(&best, &control.out)?;
            Ok(*best)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_fit(args: FitArgs) -> anyhow::Result<()> {
    let text = match (&args.spec, &args.model) {
        (Some(path), _) => fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(inline)) => inline.replace(';', "\n"),
        (None, None) => bail!("one of --spec or --model is required"),
    };
    let users = UserRegistry::with_examples();
    let mut spec = parse_spec_file(&text)?;
    apply_controls(&mut spec, &args.control, &users)?;
    let data = load_data(&args.data)?;
    let fit = run_fit(&spec, data, &users, &args.control)?;
    print!("{}", format_summary(&fit));
    io::stdout().flush()?;
    finish(fit)
}

fn finish(fit: FitResult) -> anyhow::Result<()> {
    if fit.converged {
        return Ok(());
    }
    Err(Error::NotConverged {
        iterations: fit.iterations,
        loglik: fit.loglik,
        best: Box::new(fit),
    }
    .into())
}

/// Model file equivalent to an `mlsurv` call.
fn mlsurv_spec(formula: &str, dist: Distribution, df: usize) -> anyhow::Result<String> {
    let (lhs, rhs) = formula.split_once('~').ok_or_else(|| Error::Parse("formula needs `~`".into()))?;
    let inner = lhs
        .trim()
        .strip_prefix("Surv(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::Parse("mlsurv needs a Surv(time, event) response".into()))?;
    let time = inner.split(',').next().unwrap_or("").trim();
    if time.is_empty() {
        return Err(Error::Parse("Surv() needs a time variable".into()).into());
    }
    let rhs = rhs.trim();
    let baseline = format!("rcs({time}, df = {df}, log = TRUE, event = TRUE)");
    let (family, rhs) = match dist {
        Distribution::Exponential => ("exponential", rhs.to_string()),
        Distribution::Weibull => ("weibull", rhs.to_string()),
        Distribution::Gompertz => ("gompertz", rhs.to_string()),
        Distribution::Rp | Distribution::Logchazard => ("rp", join_terms(rhs, &baseline)),
        Distribution::Loghazard => ("loghazard", join_terms(rhs, &baseline)),
    };
    Ok(format!("{family} : {} ~ {rhs} | timevar={time}\n", lhs.trim()))
}

fn join_terms(rhs: &str, extra: &str) -> String {
    if rhs.is_empty() || rhs == "1" {
        extra.to_string()
    } else {
        format!("{rhs} + {extra}")
    }
}

fn cmd_mlsurv(args: MlsurvArgs) -> anyhow::Result<()> {
    if args.df == 0 {
        return Err(Error::Parse("df must be at least 1".into()).into());
    }
    let text = mlsurv_spec(&args.formula, args.distribution, args.df)?;
    log::info!("expanded model: {}", text.trim());
    let users = UserRegistry::with_examples();
    let mut spec = parse_spec_file(&text)?;
    apply_controls(&mut spec, &args.control, &users)?;
    let data = load_data(&args.data)?;
    let fit = run_fit(&spec, data, &users, &args.control)?;
    print!("{}", format_coefficients(&fit));
    io::stdout().flush()?;
    finish(fit)
}

fn parse_pair(s: &str) -> anyhow::Result<(String, &str)> {
    let (k, v) = s.split_once('=').ok_or_else(|| Error::Predict(format!("expected name=value, got `{s}`")))?;
    Ok((k.trim().to_string(), v.trim()))
}

fn parse_num(s: &str) -> anyhow::Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Predict(format!("`{s}` is not a number")).into())
}

fn parse_times(s: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [list] => list.split(',').map(parse_num).collect(),
        [a, b, n] => {
            let (a, b) = (parse_num(a)?, parse_num(b)?);
            let n: usize = n.trim().parse().map_err(|_| Error::Predict(format!("bad grid size `{n}`")))?;
            match n {
                0 => Err(Error::Predict("grid size must be positive".into()).into()),
                1 => Ok(vec![a]),
                _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
            }
        }
        _ => Err(Error::Predict(format!("times must be `t1,t2,...` or `start:stop:count`, got `{s}`")).into()),
    }
}

fn cmd_predict(args: PredictArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.fit).with_context(|| format!("reading {}", args.fit.display()))?;
    let fit = FitResult::from_json(&text)?;
    let mut req = PredictRequest::new(args.stat.parse::<Statistic>()?);
    req.kind = args.kind.parse::<PredictType>()?;
    req.predmodel = args.predmodel;
    req.at = args
        .at
        .iter()
        .map(|s| {
            let (k, v) = parse_pair(s)?;
            Ok((k, parse_num(v)?))
        })
        .collect::<anyhow::Result<_>>()?;
    if let Some(c) = &args.contrast {
        let (var, vals) = parse_pair(c)?;
        let vals: Vec<f64> = vals.split(',').map(parse_num).collect::<anyhow::Result<_>>()?;
        let [first, second] = vals[..] else {
            return Err(Error::Predict("contrast needs two values, name=first,second".into()).into());
        };
        req.contrast = Some(Contrast { var, first, second });
    }
    req.causes = args.causes.clone();
    req.times = args.times.as_deref().map(parse_times).transpose()?;
    let data = load_data(&args.data)?;
    let rows = predict(&fit, &data, &UserRegistry::with_examples(), &req)?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(io::BufWriter::new(file), req.statistic, &rows)?;
        }
        None => write_csv(io::stdout().lock(), req.statistic, &rows)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_INPUT);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Mlsurv(a) => cmd_mlsurv(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
