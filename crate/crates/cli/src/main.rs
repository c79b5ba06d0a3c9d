use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use synthaug::data::{
    sample_groups, select_prompt_examples, FixtureSpec, Record, SampleParams, Table,
};
use synthaug::diagnostics::{build_report, DiagnosticsInput, DEFAULT_KDE_GRID};
use synthaug::genclient::{build_backend, BackendKind, GenError, Generator};
use synthaug::model::ForestConfig;
use synthaug::prompt::{build_prompt, PromptVariant};
use synthaug::runner::{
    read_csv, render_markdown, render_size_markdown, render_temperature_markdown, write_csv,
    write_report, Experiment, ExperimentConfig, ReportFormat, ResultsGrid, RunnerError,
    DEFAULT_SIZES, DEFAULT_TEMPERATURES,
};
use synthaug::seed::derive_seed;

const EXIT_CONFIG: u8 = 1;
const EXIT_BACKEND: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "synthaug", version, about = "Subgroup data augmentation experiments")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

#[derive(Subcommand)]
enum Command {
    /// Write a calibrated fixture table, its schema and its spec.
    Fixture {
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        /// `framingham-like` or `mimic-like`.
        #[arg(long)]
        preset: Option<String>,
        /// Group-size divisor for `mimic-like`.
        #[arg(long, default_value_t = 1)]
        scale: usize,
    },
    /// Build one prompt from real examples and write the synthetic rows as CSV.
    Generate {
        #[arg(long)]
        group: Option<String>,
        /// Rows to generate; defaults to the configured synthetic target.
        #[arg(long)]
        n: Option<usize>,
        /// Omit the group from the prompt and draw examples from the whole table.
        #[arg(long)]
        generic: bool,
    },
    /// Run the full grid.
    Run,
    /// Run the grid once per temperature.
    SweepTemp {
        #[arg(long, value_delimiter = ',')]
        temps: Option<Vec<f64>>,
    },
    /// Run the grid once per minority training size.
    SweepSize {
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Write diagnostic data files for one synthetic set.
    Diagnose {
        #[arg(long)]
        group: Option<String>,
        /// Synthetic rows to analyze; generated with the configured backend when absent.
        #[arg(long)]
        synthetic: Option<PathBuf>,
        /// Feature pair for a density grid, as `x,y`; repeatable.
        #[arg(long = "kde")]
        kde: Vec<String>,
    },
    /// Re-render a results CSV.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        #[arg(long, default_value = "dataset")]
        dataset: String,
    },
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let exhausted = error.chain().any(|c| {
            matches!(c.downcast_ref::<GenError>(), Some(GenError::BackendExhausted { .. }))
                || matches!(
                    c.downcast_ref::<RunnerError>(),
                    Some(RunnerError::Gen(GenError::BackendExhausted { .. }))
                )
        });
        Failure {
            code: if exhausted { EXIT_BACKEND } else { EXIT_CONFIG },
            error,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Fixture { spec, preset, scale } => fixture(cli, spec.as_deref(), preset.as_deref(), *scale),
        Command::Generate { group, n, generic } => generate(cli, group.as_deref(), *n, *generic),
        Command::Run => run_grid(cli),
        Command::SweepTemp { temps } => sweep_temp(cli, temps.as_deref().unwrap_or(&DEFAULT_TEMPERATURES)),
        Command::SweepSize { sizes } => sweep_size(cli, sizes.as_deref().unwrap_or(&DEFAULT_SIZES)),
        Command::Diagnose { group, synthetic, kde } => diagnose(cli, group.as_deref(), synthetic.as_deref(), kde),
        Command::Report { results, format, dataset } => report(cli, results, *format, dataset),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| anyhow!("--config is required"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(b) = cli.backend {
        cfg.backend.kind = match b {
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Http => BackendKind::Http,
        };
    }
    if let Some(t) = cli.temperature {
        cfg.temperature = t;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn fixture(cli: &Cli, spec: Option<&Path>, preset: Option<&str>, scale: usize) -> Result<u8, Failure> {
    let spec = match (spec, preset) {
        (Some(p), _) => FixtureSpec::load(p)?,
        (None, Some(name)) => synthaug::runner::DatasetSource::Preset {
            name: name.to_string(),
            scale,
            seed: 0,
        }
        .fixture_spec()?
        .expect("preset source"),
        (None, None) => return Err(anyhow!("pass --spec or --preset").into()),
    };
    let seed = cli.seed.unwrap_or(0);
    let table = spec.make_fixture(seed)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("fixture"));
    std::fs::create_dir_all(&dir)?;
    table.save_csv(dir.join("data.csv"))?;
    std::fs::write(dir.join("schema.json"), table.schema().to_json())?;
    std::fs::write(dir.join("fixture.json"), spec.to_json())?;
    log::info!("wrote {} rows to {}", table.len(), dir.display());
    Ok(0)
}

/// Prompt-example row indices and synthetic rows for `group`.
fn synthesize(
    cfg: &ExperimentConfig,
    table: &Arc<Table>,
    group: &str,
    n: usize,
    generic: bool,
) -> Result<(Vec<usize>, Vec<Record>)> {
    let schema = table.schema();
    let seed = derive_seed(cfg.master_seed, &[group, "generate"], 0);
    let params = SampleParams::new(&cfg.majority, group, cfg.n_maj, cfg.n_min, cfg.k_prompt);
    let sample = sample_groups(table, &params, seed)?;
    let pool: Vec<usize> = if generic {
        sample.non_training_rows(table)
    } else {
        let gi = schema.require_group(group)?;
        table
            .rows_in_group(gi)
            .into_iter()
            .filter(|i| !sample.minority_rows.contains(i))
            .collect()
    };
    let outcomes: Vec<usize> = cfg
        .outcomes
        .iter()
        .filter_map(|o| schema.outcome_index(o))
        .filter(|&oi| table.positives(&pool, oi) > 0)
        .collect();
    let rows = select_prompt_examples(table, &pool, &outcomes, cfg.k_prompt, seed, cfg.max_redraws)?;
    let examples: Vec<Record> = rows.iter().map(|&i| table.record(i).clone()).collect();
    let variant = if generic {
        PromptVariant::Generic
    } else {
        PromptVariant::GroupTailored(group.to_string())
    };
    let prompt = build_prompt(schema, &examples, &cfg.dataset_context, variant, cfg.batch_size)?;
    let backend = build_backend(&cfg.backend_config(), table.schema_arc())?;
    let generator = Generator::new(backend, cfg.backend_config(), table.schema_arc());
    let batch = generator.generate_to_target(&prompt, n, seed)?;
    Ok((rows, batch.rows))
}

fn generate(cli: &Cli, group: Option<&str>, n: Option<usize>, generic: bool) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    let table = Arc::new(cfg.dataset.load()?);
    cfg.validate(table.schema())?;
    let group = group
        .map(str::to_string)
        .or_else(|| cfg.minorities.first().cloned())
        .ok_or_else(|| anyhow!("no group given"))?;
    let gi = table.schema().require_group(&group)?;
    let n = n.unwrap_or_else(|| cfg.synthetic_target());
    let (_, rows) = synthesize(&cfg, &table, &group, n, generic)?;
    let synthetic = Table::new(table.schema_arc(), rows, vec![gi; n])?;
    let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("synthetic.csv"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    synthetic.save_csv(&path)?;
    log::info!("wrote {} synthetic rows to {}", synthetic.len(), path.display());
    Ok(0)
}

fn experiment(cli: &Cli) -> Result<Experiment> {
    let cfg = load_config(cli)?;
    Experiment::load(cfg).context("loading experiment")
}

fn partial_code(grids: &[&ResultsGrid]) -> u8 {
    if grids.iter().any(|g| g.is_partial()) {
        EXIT_PARTIAL
    } else {
        0
    }
}

fn run_grid(cli: &Cli) -> Result<u8, Failure> {
    let exp = experiment(cli)?;
    let grid = exp.run_grid();
    let dir = &exp.config().output_dir;
    let csv = write_report(&grid, ReportFormat::Csv, dir, &exp.config().dataset_name)?;
    let md = write_report(&grid, ReportFormat::Markdown, dir, &exp.config().dataset_name)?;
    log::info!(
        "{} cells ({} skipped, {} failed); wrote {} and {}",
        grid.len(),
        grid.skipped(),
        grid.failed(),
        csv.display(),
        md.display()
    );
    Ok(partial_code(&[&grid]))
}

fn write_grid_csv(grid: &ResultsGrid, path: &Path) -> Result<()> {
    write_csv(grid, std::fs::File::create(path)?)?;
    Ok(())
}

fn sweep_temp(cli: &Cli, temps: &[f64]) -> Result<u8, Failure> {
    let exp = experiment(cli)?;
    let grids = exp.sweep_temperature(temps)?;
    let dir = &exp.config().output_dir;
    std::fs::create_dir_all(dir)?;
    for (t, g) in &grids {
        write_grid_csv(g, &dir.join(format!("results_temp_{t}.csv")))?;
    }
    std::fs::write(dir.join("temperature.md"), render_temperature_markdown(&grids))?;
    Ok(partial_code(&grids.iter().map(|(_, g)| g).collect::<Vec<_>>()))
}

fn sweep_size(cli: &Cli, sizes: &[usize]) -> Result<u8, Failure> {
    let exp = experiment(cli)?;
    let grids = exp.sweep_minority_size(sizes)?;
    let dir = &exp.config().output_dir;
    std::fs::create_dir_all(dir)?;
    for (s, g) in &grids {
        write_grid_csv(g, &dir.join(format!("results_size_{s}.csv")))?;
    }
    std::fs::write(dir.join("size.md"), render_size_markdown(&grids))?;
    Ok(partial_code(&grids.iter().map(|(_, g)| g).collect::<Vec<_>>()))
}

fn diagnose(cli: &Cli, group: Option<&str>, synthetic: Option<&Path>, kde: &[String]) -> Result<u8, Failure> {
    let cfg = load_config(cli)?;
    let table = Arc::new(cfg.dataset.load()?);
    cfg.validate(table.schema())?;
    let schema = table.schema();
    let group = group
        .map(str::to_string)
        .or_else(|| cfg.minorities.first().cloned())
        .ok_or_else(|| anyhow!("no group given"))?;
    let gi = schema.require_group(&group)?;
    let maj = schema.require_group(&cfg.majority)?;

    let (prompt_rows, synthetic_rows) = match synthetic {
        Some(path) => {
            let t = synthaug::data::load_table(path, table.schema_arc())?;
            (Vec::new(), t.records().to_vec())
        }
        None => synthesize(&cfg, &table, &group, cfg.synthetic_target(), false)?,
    };
    let minority: Vec<Record> = table
        .rows_in_group(gi)
        .into_iter()
        .filter(|i| !prompt_rows.contains(i))
        .map(|i| table.record(i).clone())
        .collect();
    let majority: Vec<Record> = table
        .rows_in_group(maj)
        .into_iter()
        .map(|i| table.record(i).clone())
        .collect();

    let kde_pairs = if kde.is_empty() {
        let numeric: Vec<String> = schema
            .features
            .iter()
            .filter(|f| f.kind == synthaug::data::FeatureKind::Numeric)
            .map(|f| f.name.clone())
            .collect();
        numeric
            .get(..2)
            .map(|p| vec![(p[0].clone(), p[1].clone())])
            .unwrap_or_default()
    } else {
        kde.iter()
            .map(|s| {
                s.split_once(',')
                    .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                    .ok_or_else(|| anyhow!("--kde expects x,y but got {s:?}"))
            })
            .collect::<Result<_>>()?
    };
    let input = DiagnosticsInput {
        schema,
        synthetic: &synthetic_rows,
        minority: &minority,
        majority: &majority,
        correlation_features: Vec::new(),
        kde_pairs,
        kde_grid: DEFAULT_KDE_GRID,
        seed: derive_seed(cfg.master_seed, &[&group, "diagnostics"], 0),
        forest: ForestConfig::default(),
    };
    let report = build_report(&input)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("diagnostics"));
    let manifest = report.write_files(&dir)?;
    log::info!("wrote {} diagnostic files to {}", manifest.files.len(), dir.display());
    Ok(0)
}

fn report(cli: &Cli, results: &Path, format: FormatArg, dataset: &str) -> Result<u8, Failure> {
    let file = std::fs::File::open(results).with_context(|| format!("opening {}", results.display()))?;
    let grid = read_csv(file)?;
    if grid.is_empty() {
        return Err(anyhow!("{} holds no cells", results.display()).into());
    }
    match (format, &cli.out) {
        (FormatArg::Markdown, None) => print!("{}", render_markdown(&grid, dataset)),
        (FormatArg::Csv, None) => write_csv(&grid, std::io::stdout())?,
        (f, Some(dir)) => {
            let fmt = match f {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Markdown => ReportFormat::Markdown,
            };
            let path = write_report(&grid, fmt, dir, dataset)?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(0)
}
