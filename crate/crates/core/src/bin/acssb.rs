use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use acssb::diagnostics::run_diagnostics;
use acssb::harness::{
    read_trials, run_experiment, summarize, write_metadata, write_plot_csv, write_svg, write_trials, ExperimentConfig,
    ModelKind,
};
use acssb::models::group_sparse::{contiguous_groups, GroupSparseModel};
use acssb::models::logistic::LogisticModel;
use acssb::models::mixture::MixtureModel;
use acssb::models::rank1::Rank1Model;
use acssb::models::spline::SplineModel;
use acssb::statistics::{GroupLassoCv, stat_kmeans_ratio, stat_second_eigenvalue, stat_sir, stat_spline_rss};
use acssb::{run_test, Error, ModelPlugin, TestConfig, TestOutcome};

#[derive(Parser)]
#[command(name = "acssb", version, about = "Goodness-of-fit tests by approximate co-sufficient sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate power curves and write one CSV row per trial and method.
    Run(RunArgs),
    /// Test a single dataset read from a CSV/TSV file.
    Test(TestArgs),
    /// Run the enumeration-based diagnostic suite.
    Diagnose {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Aggregate a trial CSV into a power table.
    PlotData {
        #[arg(long)]
        input: PathBuf,
        /// Destination table; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    model: Option<String>,
    /// Comma list, or start:stop:count.
    #[arg(long = "signal-grid")]
    signal_grid: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long = "B")]
    b: Option<String>,
    #[arg(long = "M")]
    m: Option<String>,
    #[arg(long = "burn-in")]
    burn_in: Option<String>,
    #[arg(long)]
    thin: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Comma list of acssb, oracle.
    #[arg(long)]
    methods: Option<String>,
    /// Sample size (matrix side for rank1).
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    /// Record wall-clock runtimes in the CSV.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Flat key = value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trial CSV; stdout if omitted. A `.meta.json` sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Numeric table with a one-line header. Column layout by model:
    /// logistic x,y,z1..zd; mixture x; rank1 the matrix; group_sparse x,z1..zd; spline x,z.
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "group-size", default_value_t = 5)]
    group_size: usize,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::InvalidParameter(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn build_config(config: Option<&Path>, o: &Overrides) -> Result<ExperimentConfig, Error> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::new(ModelKind::Logistic),
    };
    let pairs = [
        ("model", &o.model),
        ("signal_grid", &o.signal_grid),
        ("trials", &o.trials),
        ("alpha", &o.alpha),
        ("B", &o.b),
        ("M", &o.m),
        ("burn_in", &o.burn_in),
        ("thin", &o.thin),
        ("seed", &o.seed),
        ("methods", &o.methods),
        ("n", &o.n),
        ("threads", &o.threads),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    if o.timing {
        cfg.timing = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = build_config(args.config.as_deref(), &args.overrides)?;
    let records = run_experiment(&cfg)?;
    match &args.out {
        Some(path) => {
            write_trials(&records, std::fs::File::create(path)?)?;
            write_metadata(&cfg, &records, &path.with_extension("meta.json"))?;
        }
        None => write_trials(&records, io::stdout().lock())?,
    }
    let trials: Vec<_> = records
        .iter()
        .filter(|r| r.is_ok())
        .map(|r| (r.model.clone(), r.method.to_string(), r.signal, r.reject.unwrap_or(false)))
        .collect();
    let failed = records.len() - trials.len();
    let mut err = io::stderr().lock();
    writeln!(err, "{:<8} {:>8} {:>7} {:>7} {:>6}", "method", "signal", "power", "stderr", "n")?;
    for row in summarize(&trials) {
        writeln!(
            err,
            "{:<8} {:>8} {:>7.3} {:>7.3} {:>6}",
            row.method, row.signal, row.power, row.stderr, row.n_trials
        )?;
    }
    if failed > 0 {
        writeln!(err, "{failed} trials failed; see the status column")?;
    }
    Ok(())
}

fn read_table(path: &Path) -> Result<DMatrix<f64>, Error> {
    let text = std::fs::read_to_string(path)?;
    let delim = if path.extension().is_some_and(|e| e == "tsv") || text.lines().next().is_some_and(|l| l.contains('\t')) {
        b'\t'
    } else {
        b','
    };
    let mut rdr = csv::ReaderBuilder::new().delimiter(delim).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("not a number: '{v}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        if rows.first().is_some_and(|r| r.len() != row.len()) {
            return Err(Error::Parse("ragged table".into()));
        }
        rows.push(row);
    }
    let (n, d) = (rows.len(), rows.first().map_or(0, |r| r.len()));
    if n == 0 || d == 0 {
        return Err(Error::Parse("empty table".into()));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn need_cols(t: &DMatrix<f64>, k: usize, model: ModelKind) -> Result<(), Error> {
    if t.ncols() < k {
        return Err(Error::Parse(format!("{model} data needs at least {k} columns")));
    }
    Ok(())
}

fn test_with<M: ModelPlugin>(
    model: &M,
    x: &M::Data,
    stat: impl Fn(&M::Data) -> f64,
    cfg: &TestConfig,
) -> Result<TestOutcome, Error> {
    run_test(model, x, stat, cfg)
}

fn cmd_test(args: &TestArgs) -> Result<(), Failure> {
    let cfg = build_config(args.config.as_deref(), &args.overrides)?;
    let tc = cfg.test_config(cfg.seed)?;
    let t = read_table(&args.data)?;
    let nan = |r: acssb::Result<f64>| r.unwrap_or(f64::NAN);
    let outcome = match cfg.model {
        ModelKind::Logistic => {
            need_cols(&t, 3, cfg.model)?;
            let x: Vec<u8> = t.column(0).iter().map(|&v| (v > 0.5) as u8).collect();
            let y: Vec<f64> = t.column(1).iter().copied().collect();
            let z = t.columns(2, t.ncols() - 2).into_owned();
            let model = LogisticModel::new(z.clone());
            test_with(&model, &x, |x| nan(stat_sir(x, &y, &z)), &tc)?
        }
        ModelKind::Mixture => {
            let x: Vec<f64> = t.column(0).iter().copied().collect();
            test_with(&MixtureModel::new(x.len()), &x, |x| nan(stat_kmeans_ratio(x)), &tc)?
        }
        ModelKind::Rank1 => {
            if t.nrows() != t.ncols() {
                return Err(Failure::Usage("rank1 data must be a square matrix".into()));
            }
            test_with(&Rank1Model::new(t.nrows()), &t, stat_second_eigenvalue, &tc)?
        }
        ModelKind::GroupSparse => {
            need_cols(&t, 2, cfg.model)?;
            let x = DVector::from_column_slice(t.column(0).as_slice());
            let z = t.columns(1, t.ncols() - 1).into_owned();
            let groups = contiguous_groups(z.ncols(), args.group_size.max(1));
            let model = GroupSparseModel::new(z.clone(), groups.clone())?;
            let cv = GroupLassoCv::new(&z, &groups)?;
            test_with(&model, &x, |x| nan(cv.group_ratio(x)), &tc)?
        }
        ModelKind::Spline => {
            need_cols(&t, 2, cfg.model)?;
            let x = DVector::from_column_slice(t.column(0).as_slice());
            let z: Vec<f64> = t.column(1).iter().copied().collect();
            let model = SplineModel::new(z.clone())?;
            test_with(&model, &x, |x| nan(stat_spline_rss(x.as_slice(), &z)), &tc)?
        }
    };
    let summary = serde_json::json!({
        "model": cfg.model.name(),
        "t_obs": outcome.t_obs,
        "pval": outcome.pval,
        "reject": outcome.pval <= cfg.alpha,
        "diagnostics": outcome.diagnostics,
    });
    println!("{}", serde_json::to_string_pretty(&summary).map_err(|e| Failure::Runtime(e.to_string()))?);
    Ok(())
}

fn cmd_diagnose(seed: u64) -> Result<(), Failure> {
    let rows = run_diagnostics(seed)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{:<32} {:<44} {:>14} {:>14} pass", "check", "setting", "value", "bound")?;
    for r in &rows {
        writeln!(out, "{:<32} {:<44} {:>14.6e} {:>14.6e} {}", r.check, r.setting, r.value, r.bound, r.pass)?;
    }
    if rows.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(Failure::Runtime("some diagnostics failed".into()))
    }
}

fn cmd_plot_data(input: &Path, out: Option<&Path>, svg: Option<&Path>) -> Result<(), Failure> {
    let (trials, failed) = read_trials(std::fs::File::open(input)?)?;
    if trials.is_empty() {
        eprintln!("warning: {} has no successful trials; the table is empty", input.display());
    }
    if failed > 0 {
        eprintln!("warning: {failed} failed trials excluded");
    }
    let rows = summarize(&trials);
    match out {
        Some(p) => write_plot_csv(&rows, std::fs::File::create(p)?)?,
        None => write_plot_csv(&rows, io::stdout().lock())?,
    }
    if let Some(p) = svg {
        std::fs::write(p, write_svg(&rows))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Test(a) => cmd_test(a),
        Command::Diagnose { seed } => cmd_diagnose(*seed),
        Command::PlotData { input, out, svg } => cmd_plot_data(input, out.as_deref(), svg.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
