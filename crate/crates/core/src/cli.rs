//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataset::{load_observations, write_observations, CsvFormat, Dataset, EmpiricalChoiceRule, POOLED};
use crate::diagnostics::{attraction_effect_scan, choice_overload_scan, ram_acyclicity};
use crate::error::{Error, Result};
use crate::estimation::{estimate_model, DEFAULT_FLOOR};
use crate::hypothesis::{bootstrap_pvalue, joint_stability_test, Model, TauRule, TestSpec};
use crate::linkfn::{calibrate_eta, calibrate_full_consideration, calibrate_gamma, calibrate_m, well_defined, Link};
use crate::orders::{order_set, LotteryBook, Restriction};
use crate::synth::{co_sweep, population_rule, proportional_menu_sizes, sample_dataset, power_sweep, GeneratorSpec};
use crate::universe::ChoiceUniverse;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser, Serialize)]
#[command(name = "hrc", version, about = "Test and estimate random-consideration models of stochastic choice")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Command {
    /// Calibrate attention index and consideration rule from default shares.
    Calibrate(CalibrateArgs),
    /// Bootstrap test of a model against the data.
    Test(TestArgs),
    /// Estimate consideration, preference weights and welfare.
    Estimate(EstimateArgs),
    /// Choice-overload, attraction-effect and RAM checks.
    Diagnose(DataArgs),
    /// Overload incidence in finite RUM samples, or a synthetic dataset.
    Simulate(SimulateArgs),
    /// Rejection rates on the overload mixture.
    Power(PowerArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Observation CSV with header subject_id,treatment,menu,choice.
    pub data: PathBuf,
    /// Treatment to analyse; all observations are pooled when omitted.
    #[arg(long)]
    pub treatment: Option<String>,
    /// Number of items; inferred from the data when omitted.
    #[arg(long)]
    pub items: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// la, mm, rcg or fc.
    #[arg(long, default_value = "la")]
    pub model: String,
    /// Additive smoothing κ of frequencies.
    #[arg(long)]
    pub laplace: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// rum, eu-rum, la, mm, rcg or fc.
    #[arg(long, default_value = "la")]
    pub model: String,
    /// all, eu or crra.
    #[arg(long, default_value = "all")]
    pub prefs: String,
    /// ks, zero or a number.
    #[arg(long, default_value = "ks")]
    pub tau: String,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 200)]
    pub var_reps: usize,
    #[arg(long, default_value_t = 50)]
    pub inner_var_reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub laplace: Option<f64>,
    /// Joint test across every treatment with one preference distribution.
    #[arg(long)]
    pub joint: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// la, mm, rcg or fc.
    #[arg(long, default_value = "la")]
    pub model: String,
    #[arg(long, default_value = "crra")]
    pub prefs: String,
    /// Lower bound on projected attention-index values.
    #[arg(long, default_value_t = DEFAULT_FLOOR)]
    pub floor: f64,
    #[arg(long)]
    pub laplace: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Repetitions per cell.
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Total sample sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,500,1000,5000,15000")]
    pub n: Vec<u64>,
    /// Numbers of preference types, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,5,10,50,200")]
    pub orders: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write one overload-mixture dataset with this λ instead of sweeping.
    #[arg(long)]
    pub mixture_lambda: Option<f64>,
    /// CSV output; stdout when omitted. Existing sweep rows are kept and skipped.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PowerArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub lambda: Vec<f64>,
    #[arg(long, default_value_t = 4000)]
    pub n: u64,
    /// Bootstrap replications per dataset.
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Monte Carlo datasets per λ.
    #[arg(long, default_value_t = 50)]
    pub datasets: usize,
    #[arg(long, default_value = "la")]
    pub model: String,
    #[arg(long, default_value = "eu")]
    pub prefs: String,
    #[arg(long, default_value = "ks")]
    pub tau: String,
    #[arg(long, default_value_t = 200)]
    pub var_reps: usize,
    #[arg(long, default_value_t = 50)]
    pub inner_var_reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Summary CSV; per-dataset results go to `<out>.runs.csv` and are
    /// reused when a run is restarted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    version: &'static str,
    config: &'a Cli,
    result: T,
}

/// Parses `argv`, runs, and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(hint) = remediation(&e) {
                eprintln!("hint: {hint}");
            }
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

fn remediation(e: &Error) -> Option<&'static str> {
    match e {
        Error::Io(_) => Some("check that the input path exists and is readable"),
        Error::MalformedRow { .. } => Some("rows need subject_id,treatment,menu,choice with menu like \"1 3 4\" and choice an item index or 0 for the default"),
        Error::IncompleteCoverage(_) => Some("every nonempty menu needs at least one observation"),
        Error::DivisionByDefaultZero(_) => Some("pass --laplace <κ> to smooth zero default shares, or use --model rcg/fc"),
        _ => None,
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Calibrate(a) => {
            let link: Link = a.model.parse()?;
            let (rule, treatment) = load_rule(&a.data)?;
            let p = smoothed(&rule, a.laplace);
            let eta = calibrate_eta(&p, link)?;
            let m = calibrate_m(&p, link)?;
            let gamma = if link == Link::Mm { Some(calibrate_gamma(&p)?) } else { None };
            let pf = calibrate_full_consideration(&p, &m).ok();
            let result = serde_json::json!({
                "treatment": treatment,
                "link": link,
                "attention_index": eta.to_export(),
                "mm_gamma": gamma.as_ref().map(|g| &g.0.gamma),
                "mm_gamma_dispersion": gamma.as_ref().map(|g| g.1),
                "consideration": m.to_export(),
                "well_definedness": well_defined(&m, link),
                "full_consideration": pf.map(|f| f.to_export()),
            });
            emit_json(cli, a.data.out.as_deref(), result)
        }
        Command::Test(a) => {
            let model: Model = a.model.parse()?;
            let mut spec = TestSpec::new(model, a.prefs.parse()?);
            spec.tau = a.tau.parse::<TauRule>()?;
            spec.replications = a.reps;
            spec.variance_replications = a.var_reps;
            spec.inner_variance_replications = a.inner_var_reps;
            spec.seed = a.seed;
            spec.laplace = a.laplace;
            spec.validate()?;
            let report = if a.joint {
                let ds = load(&a.data)?;
                let rules = ds
                    .treatments()
                    .iter()
                    .map(|t| ds.rule(Some(t)))
                    .collect::<Result<Vec<EmpiricalChoiceRule>>>()?;
                joint_stability_test(&spec, &rules, None)?
            } else {
                let (rule, _) = load_rule(&a.data)?;
                bootstrap_pvalue(&spec, &rule, None)?
            };
            emit_json(cli, a.data.out.as_deref(), report)
        }
        Command::Estimate(a) => {
            let link: Link = a.model.parse()?;
            let restriction: Restriction = a.prefs.parse()?;
            let (rule, treatment) = load_rule(&a.data)?;
            let u = rule.universe().clone();
            let book = (restriction != Restriction::All).then(LotteryBook::experiment);
            let orders = order_set(&u, restriction, false, book.as_ref())?;
            let est = estimate_model(&smoothed(&rule, a.laplace), &treatment, link, &orders, a.floor)?;
            emit_json(cli, a.data.out.as_deref(), est)
        }
        Command::Diagnose(a) => {
            let (rule, treatment) = load_rule(a)?;
            let p = rule.rule();
            let result = serde_json::json!({
                "treatment": treatment,
                "choice_overload": choice_overload_scan(&p),
                "attraction_effect": attraction_effect_scan(&p),
                "ram": ram_acyclicity(&p),
            });
            emit_json(cli, a.out.as_deref(), result)
        }
        Command::Simulate(a) => {
            let u = ChoiceUniverse::indexed(5)?;
            if let Some(lambda) = a.mixture_lambda {
                let rule = population_rule(&u, &GeneratorSpec::co_mixture(lambda)?)?;
                let total = *a.n.first().ok_or_else(|| Error::Config("--n needs a value".into()))?;
                let obs = sample_dataset(&rule, &proportional_menu_sizes(&u, total), "sim", a.seed);
                write_config_sidecar(cli, a.out.as_deref())?;
                return match &a.out {
                    Some(p) => write_observations(std::fs::File::create(p)?, &obs),
                    None => write_observations(std::io::stdout().lock(), &obs),
                };
            }
            write_config_sidecar(cli, a.out.as_deref())?;
            let cells = co_sweep(&u, a.reps, &a.n, &a.orders, a.seed, a.out.as_deref())?;
            if a.out.is_none() {
                let mut w = csv::Writer::from_writer(std::io::stdout().lock());
                for c in cells {
                    w.serialize(c)?;
                }
                w.flush()?;
            }
            Ok(())
        }
        Command::Power(a) => {
            let model: Model = a.model.parse()?;
            let mut spec = TestSpec::new(model, a.prefs.parse()?);
            spec.tau = a.tau.parse()?;
            spec.replications = a.reps;
            spec.variance_replications = a.var_reps;
            spec.inner_variance_replications = a.inner_var_reps;
            spec.validate()?;
            if a.lambda.iter().any(|l| !(0.0..=1.0).contains(l)) {
                return Err(Error::Config("--lambda values must lie in [0, 1]".into()));
            }
            let runs_path = a.out.as_ref().map(|p| {
                let mut s = p.clone().into_os_string();
                s.push(".runs.csv");
                PathBuf::from(s)
            });
            let (rows, _) = power_sweep(&a.lambda, a.n, a.datasets, &spec, a.seed, runs_path.as_deref())?;
            write_config_sidecar(cli, a.out.as_deref())?;
            match &a.out {
                Some(p) => write_csv(csv::Writer::from_path(p)?, &rows),
                None => write_csv(csv::Writer::from_writer(std::io::stdout().lock()), &rows),
            }
        }
    }
}

fn write_csv<W: Write, T: Serialize>(mut w: csv::Writer<W>, rows: &[T]) -> Result<()> {
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn load(a: &DataArgs) -> Result<Dataset> {
    load_observations(&a.data, &CsvFormat { n_items: a.items, treatments: None })
}

fn load_rule(a: &DataArgs) -> Result<(EmpiricalChoiceRule, String)> {
    let ds = load(a)?;
    if let Some(t) = a.treatment.as_deref().filter(|t| *t != POOLED) {
        if !ds.treatments().iter().any(|x| x == t) {
            return Err(Error::UnknownTreatment { line: 0, treatment: t.to_string() });
        }
    }
    let rule = ds.rule(a.treatment.as_deref())?;
    let label = a.treatment.clone().unwrap_or_else(|| POOLED.to_string());
    Ok((rule, label))
}

fn smoothed(rule: &EmpiricalChoiceRule, kappa: Option<f64>) -> crate::dataset::CompleteChoiceRule {
    match kappa {
        Some(k) if k > 0.0 => rule.smoothed_rule(k),
        _ => rule.rule(),
    }
}

fn emit_json<T: Serialize>(cli: &Cli, out: Option<&Path>, result: T) -> Result<()> {
    let artifact = Artifact { version: VERSION, config: cli, result };
    let text = serde_json::to_string_pretty(&artifact)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let mut so = std::io::stdout().lock();
            writeln!(so, "{text}")?;
        }
    }
    Ok(())
}

/// CSV outputs carry their configuration in `<out>.config.json`.
fn write_config_sidecar(cli: &Cli, out: Option<&Path>) -> Result<()> {
    if let Some(p) = out {
        let mut s = p.as_os_str().to_owned();
        s.push(".config.json");
        let text = serde_json::to_string_pretty(&Artifact { version: VERSION, config: cli, result: () })?;
        std::fs::write(PathBuf::from(s), text + "\n")?;
    }
    Ok(())
}
