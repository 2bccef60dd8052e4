use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use beda_core::belief::{emit_training_data, write_labeled_examples, ClipPolicy};
use beda_core::games::ckbg::{ConditionCount, DatasetSummary};
use beda_core::games::mf::MfShape;
use beda_core::games::{GameId, Scenario};
use beda_core::harness::{
    compute_metrics, generate_scenarios, load_records, training_sources_from_records,
    write_dataset, DatasetConfig, ExperimentConfig, MetricsReport, Runner,
};
use beda_core::Error;
use clap::{Parser, Subcommand};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_EMPTY: u8 = 4;

#[derive(Parser)]
#[command(name = "beda", version, about = "Belief-constrained dialogue games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario dataset as JSON lines.
    GenDataset {
        game: GameId,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Conditions per ckbg setting: a count, or `train` for the mixed preset.
        #[arg(long, default_value = "3")]
        conditions: String,
        /// Friends per list (mf).
        #[arg(long)]
        friends: Option<usize>,
        /// Attributes per friend (mf).
        #[arg(long)]
        attributes: Option<usize>,
    },
    /// Run an experiment described by a JSON or TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute metrics from episode records.
    Eval {
        #[arg(long)]
        records: PathBuf,
    },
    /// Turn episode records into labeled estimator examples.
    EmitTrainingData {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = ClipPolicy::default().max_clip)]
        clip_max: usize,
        #[arg(long, default_value_t = 1)]
        neg_ratio: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failure paired with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Parse { .. } => EXIT_CONFIG,
            Error::Transport { .. } | Error::Protocol(_) => EXIT_BACKEND,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn parse_conditions(raw: &str) -> Result<ConditionCount, Failure> {
    if raw.eq_ignore_ascii_case("train") {
        return Ok(ConditionCount::train_preset());
    }
    raw.parse().map(ConditionCount::Fixed).map_err(|_| {
        fail(
            EXIT_CONFIG,
            format!("--conditions: expected a count or `train`, got {raw:?}"),
        )
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::from(e).into()),
        _ => Ok(()),
    }
}

fn gen_dataset(
    game: GameId,
    n: usize,
    seed: u64,
    out: PathBuf,
    conditions: &str,
    friends: Option<usize>,
    attributes: Option<usize>,
) -> Result<(), Failure> {
    let mut mf_shape = MfShape::default();
    if let Some(f) = friends {
        mf_shape.friends_per_list = f;
    }
    if let Some(a) = attributes {
        mf_shape.attributes = a;
    }
    let dataset = DatasetConfig {
        condition_count: parse_conditions(conditions)?,
        mf_shape,
        ..DatasetConfig::default()
    };
    dataset
        .condition_count
        .validate()
        .map_err(|e| fail(EXIT_CONFIG, e.to_string()))?;
    let scenarios = generate_scenarios(game, n, seed, &dataset)?;
    write_dataset(&out, &scenarios)?;
    log::info!(
        "wrote {} {game} scenarios to {}",
        scenarios.len(),
        out.display()
    );
    if game == GameId::Ckbg {
        let settings: Vec<_> = scenarios
            .into_iter()
            .filter_map(|s| match s {
                Scenario::Ckbg(s) => Some(s),
                _ => None,
            })
            .collect();
        print_json(&DatasetSummary::of(&settings))
    } else {
        print_json(&serde_json::json!({ "game": game, "scenarios": scenarios.len() }))
    }
}

/// Exit status of a finished run or evaluation.
fn report_status(report: &MetricsReport) -> Result<(), Failure> {
    if !report.is_empty() {
        return Ok(());
    }
    let c = &report.counts;
    if c.episodes > 0 && c.infrastructure_failures == c.episodes {
        Err(fail(
            EXIT_BACKEND,
            format!("all {} episodes failed on the backend", c.episodes),
        ))
    } else {
        Err(fail(
            EXIT_EMPTY,
            format!(
                "no valid episodes: {} format errors, {} backend failures out of {}",
                c.format_errors, c.infrastructure_failures, c.episodes
            ),
        ))
    }
}

fn run(config: PathBuf) -> Result<(), Failure> {
    let config = ExperimentConfig::load(&config)?;
    let runner = Runner::new(config)?;
    let out = runner.run()?;
    log::info!(
        "wrote {} records to {}",
        out.records.len(),
        runner.config().output.display()
    );
    print_json(&out.report)?;
    report_status(&out.report)
}

fn game_of(
    records: &[beda_core::harness::EpisodeRecord],
    path: &std::path::Path,
) -> Result<GameId, Failure> {
    records
        .first()
        .map(|r| r.outcome.game)
        .ok_or_else(|| fail(EXIT_EMPTY, format!("{} holds no records", path.display())))
}

fn eval(path: PathBuf) -> Result<(), Failure> {
    let records = load_records(&path)?;
    let game = game_of(&records, &path)?;
    let report = compute_metrics(&records, game)?;
    print_json(&report)?;
    report_status(&report)
}

fn emit(
    records: PathBuf,
    clip_max: usize,
    neg_ratio: usize,
    out: PathBuf,
    seed: u64,
) -> Result<(), Failure> {
    let loaded = load_records(&records)?;
    let sources = training_sources_from_records(&loaded)?;
    if sources.is_empty() {
        return Err(fail(
            EXIT_EMPTY,
            format!("{} holds no valid episodes", records.display()),
        ));
    }
    let examples =
        emit_training_data(&sources, ClipPolicy { max_clip: clip_max }, neg_ratio, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    write_labeled_examples(&out, &examples)?;
    let positives = examples.iter().filter(|e| e.label).count();
    print_json(&serde_json::json!({
        "dialogues": sources.len(),
        "examples": examples.len(),
        "positives": positives,
        "negatives": examples.len() - positives,
    }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenDataset {
            game,
            n,
            seed,
            out,
            conditions,
            friends,
            attributes,
        } => gen_dataset(game, n, seed, out, &conditions, friends, attributes),
        Command::Run { config } => run(config),
        Command::Eval { records } => eval(records),
        Command::EmitTrainingData {
            records,
            clip_max,
            neg_ratio,
            out,
            seed,
        } => emit(records, clip_max, neg_ratio, out, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
