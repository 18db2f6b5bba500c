use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use klid_svm::attacks::AttackKind;
use klid_svm::data::{
    generate_synthetic, load_dataset, stratified_subsample, write_dataset, DataFormat, SyntheticKind,
};
use klid_svm::defense::DefenseMode;
use klid_svm::dsvm::DsvmConfig;
use klid_svm::harness::{
    emit_csv, emit_plot, emit_summary_csv, emit_timings, load_csv, metadata, parse_rates, run_experiment, summarize,
    DatasetSource, DefenseKind, ExperimentConfig, Summary,
};
use klid_svm::svm::tuning::{default_c_grid, default_gamma_grid, grid_search, Preset};

#[derive(Parser)]
#[command(name = "klid-svm", version, about = "K-LID weighted SVM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an attack-rate sweep and write results, summary, plot and metadata.
    Run(RunArgs),
    /// Re-summarize an existing results CSV.
    Summarize {
        results: PathBuf,
        /// Directory for summary.csv and plot.svg (defaults to the CSV's directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid-search C and gamma by stratified k-fold CV.
    Tune {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        format: Option<DataFormat>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stratified subsample drawn before the search.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 0.7)]
        noise: f64,
    },
    /// Write a synthetic dataset.
    Generate {
        #[arg(long, default_value = "two-gaussians")]
        kind: SyntheticKind,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 0.7)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "libsvm")]
        format: DataFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data file path or `synthetic:<two-gaussians|two-moons>`.
    #[arg(long)]
    dataset: Option<DatasetSource>,
    #[arg(long)]
    format: Option<DataFormat>,
    #[arg(long)]
    attack: Option<AttackKind>,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long)]
    rates: Option<String>,
    /// Comma-separated subset of svm, klid-svm, ls-svm, ln-svm.
    #[arg(long, value_delimiter = ',')]
    defenses: Option<Vec<DefenseKind>>,
    #[arg(long)]
    mode: Option<DefenseMode>,
    #[arg(long)]
    folds: Option<usize>,
    /// A count `N` (seeds 0..N) or a comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    /// Number of DSVM nodes; 0 disables distributed rows.
    #[arg(long)]
    dsvm_nodes: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Reference C and gamma for a named benchmark dataset.
    #[arg(long)]
    preset: Option<Preset>,
    /// K-LID neighbourhood size.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    synthetic_n: Option<usize>,
    #[arg(long)]
    no_standardize: bool,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if !s.contains(',') {
        let n: u64 = s.trim().parse().with_context(|| format!("bad seed count '{s}'"))?;
        return Ok((0..n).collect());
    }
    s.split(',')
        .map(|t| t.trim().parse().with_context(|| format!("bad seed '{t}'")))
        .collect()
}

fn resolve(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &args.dataset {
        cfg.dataset = d.clone();
    }
    if args.format.is_some() {
        cfg.format = args.format;
    }
    if let Some(a) = args.attack {
        cfg.attack = a;
    }
    if let Some(r) = &args.rates {
        cfg.rates = parse_rates(r)?;
    }
    if let Some(d) = &args.defenses {
        cfg.defenses = d.clone();
    }
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(f) = args.folds {
        cfg.folds = f;
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    match args.dsvm_nodes {
        Some(0) => cfg.dsvm = None,
        Some(m) => {
            cfg.dsvm = Some(DsvmConfig {
                nodes: m,
                ..cfg.dsvm.unwrap_or_default()
            })
        }
        None => {}
    }
    if let Some(p) = args.preset {
        (cfg.c, cfg.gamma) = p.c_gamma();
    }
    if let Some(c) = args.c {
        cfg.c = c;
    }
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(k) = args.k {
        cfg.defense.lid.k_neighbors = k;
    }
    if args.subsample.is_some() {
        cfg.subsample = args.subsample;
    }
    if let Some(t) = args.train_fraction {
        cfg.train_fraction = t;
    }
    if let Some(n) = args.synthetic_n {
        cfg.synthetic_n = n;
    }
    if args.no_standardize {
        cfg.standardize = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(summary: &Summary) {
    println!(
        "{:<24} {:<10} {:<16} {:>10} {:>6} {:>6}",
        "dataset", "attack", "defense", "mean_err", "rows", "failed"
    );
    for r in &summary.overall {
        let mean = r.mean_error.map_or_else(|| "-".to_string(), |m| format!("{m:.4}"));
        let mark = if r.best { " *" } else { "" };
        println!(
            "{:<24} {:<10} {:<16} {:>10} {:>6} {:>6}{mark}",
            r.dataset, r.attack, r.defense, mean, r.rows, r.failed
        );
    }
}

fn write_reports(summary: &Summary, out: &Path) -> Result<()> {
    emit_summary_csv(summary, out.join("summary.csv"))?;
    emit_plot(summary, out.join("plot.svg"))?;
    Ok(())
}

fn run(args: &RunArgs) -> Result<ExitCode> {
    let cfg = resolve(args)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(args.out.join("config.toml"), cfg.to_toml()?)?;
    fs::write(args.out.join("metadata.json"), format!("{:#}\n", metadata(&cfg)))?;
    let rows = run_experiment(&cfg)?;
    emit_csv(&rows, args.out.join("results.csv"))?;
    emit_timings(&rows, args.out.join("timings.csv"))?;
    let summary = summarize(&rows)?;
    write_reports(&summary, &args.out)?;
    print_summary(&summary);
    let failed: Vec<_> = rows.iter().filter(|r| r.failed()).collect();
    if failed.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    eprintln!(
        "{} of {} rows failed; first: {}",
        failed.len(),
        rows.len(),
        failed[0].error
    );
    Ok(ExitCode::from(2))
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => run(&args),
        Command::Summarize { results, out } => {
            let rows = load_csv(&results).with_context(|| format!("loading {}", results.display()))?;
            if rows.is_empty() {
                bail!("{} holds no rows", results.display());
            }
            let summary = summarize(&rows)?;
            let out = out.unwrap_or_else(|| results.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
            fs::create_dir_all(&out)?;
            write_reports(&summary, &out)?;
            print_summary(&summary);
            Ok(ExitCode::SUCCESS)
        }
        Command::Tune {
            dataset,
            format,
            folds,
            seed,
            subsample,
            n,
            noise,
        } => {
            let ds = match dataset.parse::<DatasetSource>()? {
                DatasetSource::Synthetic(kind) => generate_synthetic(kind, n, noise, seed)?,
                DatasetSource::File(path) => {
                    let format = format.unwrap_or_else(|| DatasetSource::infer_format(&path));
                    load_dataset(&path, format)?
                }
            };
            let ds = match subsample {
                Some(size) if size < ds.len() => stratified_subsample(&ds, size, seed)?,
                _ => ds,
            };
            let (ds, _, _) = klid_svm::data::standardize(&ds, &[])?;
            let res = grid_search(&ds, &default_c_grid(), &default_gamma_grid(), folds, seed)?;
            println!(
                "C = {}  gamma = {}  cv_error = {:.4}",
                res.best.c, res.best.gamma, res.best.cv_error
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Generate {
            kind,
            n,
            noise,
            seed,
            format,
            out,
        } => {
            let ds = generate_synthetic(kind, n, noise, seed)?;
            write_dataset(&ds, &out, format)?;
            println!("wrote {} samples to {}", ds.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
