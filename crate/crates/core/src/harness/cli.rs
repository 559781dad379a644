//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::numerics::checkpoint;
use crate::synthdata::{csv_io, domain_scenario, speaker_scenario};

use super::config::{ExperimentConfig, Method, Scenario, Supervision};
use super::experiment::{run_experiment, teacher_path, train_teacher, Prepared};
use super::gradcheck::{run_gradcheck, GRADCHECK_STEP, GRADCHECK_TOLERANCE};
use super::report::{save_metrics, write_metrics_csv, write_metrics_json, ResultRow, Summary};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;
pub const EXIT_GRADCHECK: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "distilkit", version, about = "Teacher-student adaptation experiments on synthetic data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one teacher per seed on the scenario's clean data.
    TrainTeacher(CommonArgs),
    /// Adapt the teachers with one method.
    Adapt {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Run several methods and print the comparison table.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated methods, e.g. `hard,soft_ts,interpolated(0.5),conditional`.
        #[arg(long, value_delimiter = ',')]
        method: Option<Vec<String>>,
        /// Comma-separated interpolation weights; replaces the interpolated rows.
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
    },
    /// Check every loss gradient against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        nets: usize,
        #[arg(long, hide = true)]
        inject_bug: bool,
    },
    /// Write the scenario data as CSV.
    GenData(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seed: Option<Vec<u64>>,
    #[arg(long, value_parser = ["domain", "speaker"])]
    pub scenario: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub teacher_dir: Option<PathBuf>,
    /// Print result rows to stdout in this format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup_epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub unsupervised: bool,
    #[arg(long)]
    pub teacher_epochs: Option<usize>,
}

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Divergence { .. } => EXIT_DIVERGENCE,
            Error::Io(_) | Error::Checkpoint(_) | Error::Csv(_) | Error::Json(_) | Error::DataFormat(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(e: Error) -> CliError {
    CliError {
        code: EXIT_CONFIG,
        message: e.to_string(),
    }
}

impl CommonArgs {
    fn resolve(&self) -> std::result::Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p).map_err(config_error)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.seed {
            c.seeds = s.clone();
        }
        match self.scenario.as_deref() {
            Some("domain") => c.scenario = Scenario::Domain,
            Some("speaker") => c.scenario = Scenario::Speaker,
            _ => {}
        }
        if let Some(o) = &self.out {
            c.out_dir = o.clone();
        }
        if let Some(t) = &self.teacher_dir {
            c.teacher_dir = Some(t.clone());
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.warmup_epochs {
            c.warmup_epochs = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        if self.unsupervised {
            c.supervision = Supervision::Unsupervised;
        }
        if let Some(v) = self.teacher_epochs {
            c.teacher.epochs = v;
        }
        Ok(c)
    }
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn print_rows(rows: &[ResultRow], format: Format) -> Result<()> {
    let stdout = std::io::stdout();
    match format {
        Format::Csv => write_metrics_csv(rows, stdout.lock()),
        Format::Json => write_metrics_json(rows, stdout.lock()),
    }
}

fn print_brief(rows: &[ResultRow]) {
    for r in rows {
        println!(
            "{:<20} seed {:<4} {:<12} accuracy {:.4}",
            r.method, r.seed, r.split, r.accuracy
        );
    }
}

fn emit(rows: &[ResultRow], format: Option<Format>) -> Result<()> {
    match format {
        Some(f) => print_rows(rows, f),
        None => {
            print_brief(rows);
            Ok(())
        }
    }
}

fn cmd_train_teacher(args: &CommonArgs) -> std::result::Result<(), CliError> {
    let config = args.resolve()?;
    config.validate().map_err(config_error)?;
    create_out(&config.out_dir)?;
    std::fs::write(config.out_dir.join("config.json"), config.to_json()?).map_err(Error::from)?;
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let prepared = Prepared::new(&config, seed)?;
        let (net, r) = train_teacher(&config, &prepared)?;
        checkpoint::save(&net, &teacher_path(&config.out_dir, seed))?;
        rows.extend(r);
    }
    write_metrics_csv(&rows, std::fs::File::create(config.out_dir.join("teacher_metrics.csv")).map_err(Error::from)?)?;
    write_metrics_json(&rows, std::fs::File::create(config.out_dir.join("teacher_metrics.json")).map_err(Error::from)?)?;
    emit(&rows, args.format)?;
    Ok(())
}

fn cmd_adapt(args: &CommonArgs, method: &Option<String>, lambda: Option<f64>) -> std::result::Result<(), CliError> {
    let mut config = args.resolve()?;
    if let Some(m) = method {
        config.method = m.clone();
        config.lambda = None;
    }
    if lambda.is_some() {
        config.lambda = lambda;
    }
    config.validate().map_err(config_error)?;
    let method = config.resolved_method().map_err(config_error)?;
    create_out(&config.out_dir)?;
    let out = run_experiment(&config, &[method], false)?;
    for (m, seed, suffix, net) in &out.students {
        let name = format!("student_{}_seed{seed}{suffix}.json", m.slug());
        checkpoint::save(net, &config.out_dir.join(name))?;
    }
    save_metrics(&out.rows, &config.out_dir)?;
    emit(&out.rows, args.format)?;
    Ok(())
}

fn cmd_compare(
    args: &CommonArgs,
    methods: &Option<Vec<String>>,
    lambdas: &Option<Vec<f64>>,
) -> std::result::Result<(), CliError> {
    let mut config = args.resolve()?;
    if let Some(m) = methods {
        config.methods = Some(m.clone());
    }
    config.validate().map_err(config_error)?;
    let mut list = config.resolved_methods().map_err(config_error)?;
    if let Some(ls) = lambdas {
        list.retain(|m| !matches!(m, Method::Interpolated(_)));
        for &l in ls {
            let m = Method::Interpolated(l);
            m.mode().map_err(config_error)?;
            list.push(m);
        }
    }
    create_out(&config.out_dir)?;
    let out = run_experiment(&config, &list, true)?;
    let summary = Summary::from_rows(&out.rows, &out.primary_split);
    save_metrics(&out.rows, &config.out_dir)?;
    summary.write_csv(std::fs::File::create(config.out_dir.join("compare.csv")).map_err(Error::from)?)?;
    let table = summary.render();
    std::fs::write(config.out_dir.join("compare.txt"), &table).map_err(Error::from)?;
    match args.format {
        Some(f) => print_rows(&out.rows, f)?,
        None => print!("{table}"),
    }
    Ok(())
}

fn cmd_gradcheck(seed: u64, nets: usize, inject_bug: bool) -> std::result::Result<(), CliError> {
    let results = run_gradcheck(seed, nets, inject_bug)?;
    let mut failed = Vec::new();
    println!("gradient check: {nets} random nets, step {GRADCHECK_STEP:e}, tolerance {GRADCHECK_TOLERANCE:e}");
    for r in &results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        println!("{:<14} worst relative error {:.3e}  {status}", r.loss, r.worst_relative_error);
        if !r.passed() {
            failed.push(r.loss);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_GRADCHECK,
            message: format!("gradient check failed for: {}", failed.join(", ")),
        })
    }
}

fn cmd_gen_data(args: &CommonArgs) -> std::result::Result<(), CliError> {
    let config = args.resolve()?;
    config.validate().map_err(config_error)?;
    let dir = &config.out_dir;
    create_out(dir)?;
    let mut written = Vec::new();
    for &seed in &config.seeds {
        match &config.scenario {
            Scenario::Domain => {
                let d = domain_scenario(seed)?;
                let p = |s: &str| dir.join(format!("domain_seed{seed}_{s}.csv"));
                csv_io::save_labeled(&d.clean_train, &p("clean_train"))?;
                csv_io::save_parallel(&d.noisy_pairs, &p("noisy_pairs"))?;
                csv_io::save_labeled(&d.clean_test, &p("clean_test"))?;
                csv_io::save_labeled(&d.noisy_test, &p("noisy_test"))?;
                written.extend(["clean_train", "noisy_pairs", "clean_test", "noisy_test"].map(p));
            }
            Scenario::Speaker => {
                let s = speaker_scenario(seed)?;
                let train = dir.join(format!("speaker_seed{seed}_train.csv"));
                csv_io::save_labeled(&s.train, &train)?;
                written.push(train);
                for sp in &s.speakers {
                    let id = sp.spec.speaker_id;
                    let a = dir.join(format!("speaker_seed{seed}_spk{id}_adapt.csv"));
                    let t = dir.join(format!("speaker_seed{seed}_spk{id}_test.csv"));
                    csv_io::save_labeled(&sp.adapt, &a)?;
                    csv_io::save_labeled(&sp.test, &t)?;
                    written.extend([a, t]);
                }
            }
            Scenario::FromFile { .. } => {
                return Err(config_error(Error::InvalidConfig(
                    "gen-data needs the domain or speaker scenario".to_owned(),
                )))
            }
        }
    }
    let mut out = std::io::stdout().lock();
    for p in written {
        writeln!(out, "{}", p.display()).map_err(Error::from)?;
    }
    Ok(())
}

/// Runs a parsed command; the error carries the exit code.
pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    match &cli.command {
        Command::TrainTeacher(a) => cmd_train_teacher(a),
        Command::Adapt { common, method, lambda } => cmd_adapt(common, method, *lambda),
        Command::Compare { common, method, lambda } => cmd_compare(common, method, lambda),
        Command::Gradcheck { seed, nets, inject_bug } => cmd_gradcheck(*seed, *nets, *inject_bug),
        Command::GenData(a) => cmd_gen_data(a),
    }
}
