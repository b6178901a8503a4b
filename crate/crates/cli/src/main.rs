use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};
use serde_json::{json, Value};

use urnflow::combinatorics::{
    allocation_log_pmf_terms, efpf_log, extract_allocation, log_ordering_count, FeatureAllocation, LabeledMatrix,
};
use urnflow::cou::{
    cou_direct, cou_sequential, gbp_stick_by_block, posterior_sample, sample_directing_measure, truncation_bound,
    AtomicHazardRealization,
};
use urnflow::eppf::PartitionModel;
use urnflow::measures::{BaseMeasure, BernoulliRealization, FixedAtom, HazardMeasureSpec, Origin};
use urnflow::rng::replica_rng;
use urnflow::urn::KernelOptions;
use urnflow::verify::{reports_to_csv, reports_to_jsonl, run_suite, Budget};
use urnflow::Error;

#[derive(Parser)]
#[command(name = "urnflow", version, about = "Continuum-of-urns sampling, scoring and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw Bernoulli process sequences or hazard measure realizations.
    Sample(SampleArgs),
    /// Score a feature allocation or labeled matrix.
    Pmf(PmfArgs),
    /// Truncation bound for the round-wise construction.
    Bound(BoundArgs),
    /// Run verification suites.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    CouDirect,
    CouSeq,
    GbpRound,
    GbpBlock,
    Posterior,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct ModelArgs {
    /// Partition model as inline JSON or a path, e.g. '{"kind":"crp1","theta":1}'.
    #[arg(long)]
    model: String,
    /// Mass of the nonatomic part of the hazard measure.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[command(flatten)]
    model: ModelArgs,
    /// Fixed atoms as inline JSON or a path: [[location, mass], ...].
    #[arg(long)]
    atoms: Option<String>,
    /// Rows per sequence.
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    samples: u64,
    /// Rounds (gbp-round, posterior) or blocks (gbp-block).
    #[arg(long, default_value_t = 10)]
    rounds: u64,
    #[arg(long)]
    seed: u64,
    /// Kernel truncation tolerance.
    #[arg(long, default_value_t = urnflow::urn::DEFAULT_KERNEL_TOL)]
    tol: f64,
    /// Observed allocation for the posterior: allocation JSON, a list of rows
    /// or a sample record written by this command.
    #[arg(long)]
    obs: Option<String>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PmfArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Allocation JSON ({"n":2,"counts":{"10":3}}) or a labeled matrix
    /// (["10","01"]), inline or as a path.
    #[arg(long)]
    alloc: String,
    /// Also report the EFPF of the uniformly labeled matrix.
    #[arg(long)]
    efpf: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// First round left out.
    #[arg(long)]
    rounds: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "default")]
    budget: String,
    #[command(flatten)]
    output: OutputArgs,
}

enum Failure {
    Usage(String),
    Runtime(String),
    ReportsFailed(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::SamplingFailure { .. } => Failure::Runtime(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(format!("i/o error: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("URNFLOW_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Pmf(a) => cmd_pmf(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::ReportsFailed(k)) => {
            eprintln!("{k} report(s) failed");
            ExitCode::from(1)
        }
    }
}

/// Inline JSON, or the contents of the file it names.
fn json_arg(arg: &str) -> CliResult<String> {
    let t = arg.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        return Ok(arg.to_string());
    }
    fs::read_to_string(Path::new(arg)).map_err(|e| Failure::Usage(format!("cannot read {arg}: {e}")))
}

fn parse_json<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| Failure::Usage(format!("malformed {what}: {e}")))
}

fn load_model(args: &ModelArgs) -> CliResult<PartitionModel> {
    parse_json("model", &json_arg(&args.model)?)
}

fn load_spec(gamma: f64, atoms: Option<&str>) -> CliResult<HazardMeasureSpec> {
    let fixed: Vec<[f64; 2]> = match atoms {
        Some(a) => parse_json("atoms", &json_arg(a)?)?,
        None => Vec::new(),
    };
    let fixed = fixed
        .into_iter()
        .map(|[location, mass]| FixedAtom { location, mass })
        .collect();
    Ok(HazardMeasureSpec::new(gamma, BaseMeasure::Uniform, fixed)?)
}

fn open_output(out: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn origin_name(o: Origin) -> &'static str {
    match o {
        Origin::Fixed => "fixed",
        Origin::Ordinary => "ordinary",
    }
}

fn load_observed(arg: &str) -> CliResult<FeatureAllocation> {
    let text = json_arg(arg)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let value: Value = serde_json::from_str(&text)
        .or_else(|_| serde_json::from_str(first))
        .map_err(|e| Failure::Usage(format!("malformed observation: {e}")))?;
    let rows = match &value {
        Value::Object(o) if o.contains_key("counts") => {
            return serde_json::from_value(value).map_err(|e| Failure::Usage(format!("malformed allocation: {e}")));
        }
        Value::Object(o) => o.get("rows").cloned().ok_or_else(|| Failure::Usage("observation needs \"rows\" or \"counts\"".into()))?,
        _ => value,
    };
    let rows: Vec<BernoulliRealization> =
        serde_json::from_value(rows).map_err(|e| Failure::Usage(format!("malformed rows: {e}")))?;
    Ok(extract_allocation(&rows)?)
}

enum Draw {
    Rows(Vec<BernoulliRealization>),
    Measure(AtomicHazardRealization),
}

fn cmd_sample(a: SampleArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let spec = load_spec(a.model.gamma, a.atoms.as_deref())?;
    if !(a.tol > 0.0) {
        return Err(Failure::Usage(format!("--tol must be positive, got {}", a.tol)));
    }
    let opts = KernelOptions::with_tol(a.tol);
    let observed = match (&a.obs, a.mode) {
        (Some(o), Mode::Posterior) => Some(load_observed(o)?),
        (Some(_), _) => return Err(Failure::Usage("--obs only applies to --mode posterior".into())),
        (None, _) => None,
    };
    info!("sampling {} draws, model {model}", a.samples);
    let mut out = open_output(&a.output.out)?;
    if a.output.format == Format::Csv {
        match a.mode {
            Mode::CouDirect | Mode::CouSeq => writeln!(out, "sample,row,atom,location,origin")?,
            _ => writeln!(out, "sample,atom,location,weight,origin")?,
        }
    }
    for i in 0..a.samples {
        let mut rng = replica_rng(a.seed, i);
        let draw = match a.mode {
            Mode::CouDirect => Draw::Rows(cou_direct(&spec, &model, a.n, &mut rng)?),
            Mode::CouSeq => Draw::Rows(cou_sequential(&spec, &model, a.n, &mut rng)?),
            Mode::GbpRound => Draw::Measure(sample_directing_measure(&spec, &model, a.rounds, &opts, &mut rng)?),
            Mode::GbpBlock => Draw::Measure(gbp_stick_by_block(&spec, &model, a.rounds, &mut rng)?),
            Mode::Posterior => {
                Draw::Measure(posterior_sample(&spec, &model, observed.as_ref(), a.rounds, &opts, &mut rng)?)
            }
        };
        write_draw(&mut out, a.output.format, i, &draw)?;
        debug!("sample {i} written");
    }
    out.flush()?;
    Ok(())
}

fn write_draw(out: &mut dyn Write, format: Format, i: u64, draw: &Draw) -> CliResult<()> {
    match (format, draw) {
        (Format::Json, Draw::Rows(rows)) => writeln!(out, "{}", json!({"sample": i, "rows": rows}))?,
        (Format::Json, Draw::Measure(h)) => writeln!(out, "{}", json!({"sample": i, "measure": h}))?,
        (Format::Csv, Draw::Rows(rows)) => {
            for (r, row) in rows.iter().enumerate() {
                for atom in &row.atoms {
                    writeln!(out, "{i},{},{},{},{}", r + 1, atom.id().0, atom.location(), origin_name(atom.origin()))?;
                }
            }
        }
        (Format::Csv, Draw::Measure(h)) => {
            if h.dust() > 0.0 {
                writeln!(out, "{i},,,{},dust", h.dust())?;
            }
            for atom in h.atoms() {
                writeln!(out, "{i},{},{},{},{}", atom.id.0, atom.location, atom.weight, atom.origin)?;
            }
        }
    }
    Ok(())
}

fn load_allocation(arg: &str) -> CliResult<(FeatureAllocation, Option<LabeledMatrix>)> {
    let text = json_arg(arg)?;
    if text.trim_start().starts_with('[') {
        let m: LabeledMatrix = parse_json("labeled matrix", &text)?;
        return Ok((m.allocation()?, Some(m)));
    }
    Ok((parse_json("allocation", &text)?, None))
}

fn cmd_pmf(a: PmfArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let gamma = a.model.gamma;
    let (alloc, matrix) = load_allocation(&a.alloc)?;
    let terms = allocation_log_pmf_terms(&model, gamma, &alloc)?;
    let mut fields = vec![
        ("log_pmf", terms.total()),
        ("gamma_term", terms.gamma_term),
        ("exp_term", terms.exp_term),
        ("f_term", terms.f_term),
        ("factorial_term", terms.factorial_term),
    ];
    if a.efpf {
        let sums = match &matrix {
            Some(m) => m.column_sums(),
            None => urnflow::combinatorics::left_ordered(&alloc).column_sums(),
        };
        fields.push(("log_efpf", efpf_log(&model, gamma, alloc.n(), &sums)?));
        fields.push(("log_orderings", log_ordering_count(&alloc)));
    }
    let fields: Vec<_> = fields.into_iter().map(|(k, v)| (k, json!(v))).collect();
    let mut out = open_output(&a.output.out)?;
    write_fields(&mut out, a.output.format, &fields)?;
    out.flush()?;
    Ok(())
}

fn write_fields(out: &mut dyn Write, format: Format, fields: &[(&str, Value)]) -> CliResult<()> {
    match format {
        Format::Json => {
            let obj: serde_json::Map<String, Value> = fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
            writeln!(out, "{}", Value::Object(obj))?;
        }
        Format::Csv => {
            writeln!(out, "quantity,value")?;
            for (k, v) in fields {
                writeln!(out, "{k},{v}")?;
            }
        }
    }
    Ok(())
}

fn cmd_bound(a: BoundArgs) -> CliResult<()> {
    let model = load_model(&a.model)?;
    let b = truncation_bound(&model, a.model.gamma, a.rounds)?;
    let mut out = open_output(&a.output.out)?;
    write_fields(&mut out, a.output.format, &[("rounds", json!(a.rounds)), ("bound", json!(b)), ("probability", json!(-(-b).exp_m1()))])?;
    out.flush()?;
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> CliResult<()> {
    let budget: Budget = a.budget.parse()?;
    info!("running suite {} with seed {}", a.suite, a.seed);
    let reports = run_suite(&a.suite, a.seed, budget)?;
    let text = match a.output.format {
        Format::Json => reports_to_jsonl(&reports)?,
        Format::Csv => reports_to_csv(&reports)?,
    };
    let mut out = open_output(&a.output.out)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    for r in reports.iter().filter(|r| !r.pass) {
        eprintln!("{r}");
    }
    eprintln!("{} passed, {failed} failed", reports.len() - failed);
    if failed > 0 {
        return Err(Failure::ReportsFailed(failed));
    }
    Ok(())
}
