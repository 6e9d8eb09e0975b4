use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phasecode::harness::{
    draw_instance, parse_snr, run_experiment, summary_csv_string, sweep, ExperimentConfig, SweepGrid,
};
use phasecode::measurement::sigma_for_snr;
use phasecode::{
    brute_force_decode, decode, default_thresholds, AmbiguityPolicy, CodeGraph, DecodeOptions, Error, MeasurementSet,
    NoiseModel, QuantizedSignal, Result, Scheme, TestThresholds,
};

#[derive(Parser)]
#[command(name = "phasecode", version, about = "Sparse phase retrieval with PhaseCode decoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one instance and write signal.json, graph.json and measurements.json.
    Gen {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Trial index whose seeds are used.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Decode a persisted instance and print the result as JSON.
    Decode(DecodeArgs),
    /// Run a Monte Carlo experiment and write the summary CSV.
    Simulate {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Summary CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-trial records as JSON lines.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Run a grid of experiments and write one summary CSV.
    Sweep {
        /// Grid JSON: {"base": {...}, "n": [...], "K": [...], "q_multipliers": [...]}.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[arg(long = "grid-n", value_delimiter = ',')]
        grid_n: Vec<usize>,
        #[arg(long = "grid-k", value_delimiter = ',')]
        grid_k: Vec<usize>,
        #[arg(long = "q-multipliers", value_delimiter = ',')]
        q_multipliers: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Experiment configuration: a JSON file, then flag overrides.
#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "k")]
    k: Option<usize>,
    #[arg(long = "p")]
    p: Option<usize>,
    #[arg(long = "q")]
    q: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "m")]
    bins: Option<usize>,
    #[arg(long = "lm")]
    magnitude_levels: Option<usize>,
    #[arg(long = "lp")]
    phase_levels: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated SNRs in dB; `inf` for noiseless.
    #[arg(long, value_delimiter = ',', value_parser = snr_arg)]
    snr: Vec<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    ambiguity: Option<Ambiguity>,
    #[arg(long)]
    threads: Option<usize>,
    /// Write zero timing columns so output is byte-stable.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Ambiguity {
    Unique,
    BestFit,
}

impl From<Ambiguity> for AmbiguityPolicy {
    fn from(a: Ambiguity) -> Self {
        match a {
            Ambiguity::Unique => AmbiguityPolicy::Unique,
            Ambiguity::BestFit => AmbiguityPolicy::BestFit,
        }
    }
}

fn snr_arg(text: &str) -> std::result::Result<f64, String> {
    parse_snr(text).ok_or_else(|| format!("bad SNR {text:?}; use a number in dB or inf"))
}

impl ExperimentArgs {
    fn apply(&self, mut c: ExperimentConfig) -> ExperimentConfig {
        fn set<T: Clone>(field: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *field = v.clone();
            }
        }
        set(&mut c.scheme, &self.scheme);
        set(&mut c.n, &self.n);
        set(&mut c.k, &self.k);
        set(&mut c.d, &self.d);
        set(&mut c.magnitude_levels, &self.magnitude_levels);
        set(&mut c.phase_levels, &self.phase_levels);
        set(&mut c.epsilon, &self.epsilon);
        set(&mut c.trials, &self.trials);
        set(&mut c.seed, &self.seed);
        set(&mut c.max_iterations, &self.max_iterations);
        c.p = self.p.or(c.p);
        c.q = self.q.or(c.q);
        c.bins = self.bins.or(c.bins);
        c.t0 = self.t0.or(c.t0);
        c.t1 = self.t1.or(c.t1);
        c.threads = self.threads.or(c.threads);
        if let Some(a) = self.ambiguity {
            c.ambiguity = a.into();
        }
        if !self.snr.is_empty() {
            c.snr_db = self.snr.clone();
        }
        if self.no_timing {
            c.record_timing = false;
        }
        c
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path)?,
            None => ExperimentConfig::default(),
        };
        let config = self.apply(base);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    measurements: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    /// Ground truth; scores the result against it.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Must agree with the measurement file when given.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long, default_value_t = DecodeOptions::default().max_iterations)]
    max_iterations: usize,
    #[arg(long)]
    ambiguity: Option<Ambiguity>,
    /// Known sparsity used for the self-assessed outcome.
    #[arg(long = "k")]
    k: Option<usize>,
    /// Also run the exhaustive decoder with this many nonzeros at most.
    #[arg(long, value_name = "K_MAX")]
    oracle: Option<usize>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn gen(experiment: &ExperimentArgs, trial: usize, out_dir: &Path) -> Result<()> {
    let config = experiment.resolve()?;
    let [snr] = config.snr_db[..] else {
        return Err(Error::Parameter("gen takes exactly one SNR".into()));
    };
    let instance = draw_instance(&config, trial)?;
    let noise = NoiseModel::gaussian(sigma_for_snr(snr, &instance.clean)?)?;
    let measurements = instance.clean.with_noise(noise, instance.seeds.noise);
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("signal.json"), &instance.signal)?;
    write_json(&out_dir.join("graph.json"), &instance.graph)?;
    write_json(&out_dir.join("measurements.json"), &measurements)?;
    Ok(())
}

fn decode_command(args: &DecodeArgs) -> Result<()> {
    let set: MeasurementSet = read_json(&args.measurements)?;
    let graph: CodeGraph = read_json(&args.graph)?;
    let system = set.system()?;
    let scheme = args.scheme.unwrap_or(set.scheme);
    let defaults = default_thresholds(&set.alphabet, &set.noise);
    let thresholds = TestThresholds::new(args.t0.unwrap_or(defaults.t0), args.t1.unwrap_or(defaults.t1))?;
    let options = DecodeOptions {
        max_iterations: args.max_iterations,
        ambiguity: args.ambiguity.map_or_else(AmbiguityPolicy::default, Into::into),
        expected_sparsity: args.k,
        ..DecodeOptions::default()
    };
    let mut result = decode(scheme, &set, &graph, &system, &thresholds, &options)?;
    if let Some(path) = &args.truth {
        let truth: QuantizedSignal = read_json(path)?;
        result.score_against(&truth)?;
    }
    let mut report = serde_json::json!({ "decode": result });
    if let Some(k_max) = args.oracle {
        report["oracle"] = serde_json::to_value(brute_force_decode(&set, &graph, &system, k_max)?)?;
    }
    emit(None, &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn simulate(experiment: &ExperimentArgs, out: Option<&Path>, records: Option<&Path>) -> Result<()> {
    let config = experiment.resolve()?;
    let output = run_experiment(&config)?;
    if let Some(path) = records {
        let mut text = String::new();
        for record in &output.records {
            text += &serde_json::to_string(record)?;
            text.push('\n');
        }
        fs::write(path, text)?;
    }
    emit(out, &summary_csv_string(&output.summary)?)
}

fn sweep_command(
    grid: Option<&Path>,
    experiment: &ExperimentArgs,
    n: &[usize],
    k: &[usize],
    q_multipliers: &[f64],
    out: Option<&Path>,
) -> Result<()> {
    let mut grid = match grid {
        Some(path) => read_json::<SweepGrid>(path)?,
        None => SweepGrid {
            base: ExperimentConfig::default(),
            n: Vec::new(),
            k: Vec::new(),
            q_multipliers: Vec::new(),
        },
    };
    if let Some(path) = &experiment.config {
        grid.base = ExperimentConfig::from_json_file(path)?;
    }
    grid.base = experiment.apply(grid.base);
    for (axis, value) in [(&mut grid.n, n), (&mut grid.k, k)] {
        if !value.is_empty() {
            *axis = value.to_vec();
        }
    }
    if !q_multipliers.is_empty() {
        grid.q_multipliers = q_multipliers.to_vec();
    }
    emit(out, &summary_csv_string(&sweep(&grid)?)?)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen {
            experiment,
            trial,
            out_dir,
        } => gen(experiment, *trial, out_dir),
        Command::Decode(args) => decode_command(args),
        Command::Simulate {
            experiment,
            out,
            records,
        } => simulate(experiment, out.as_deref(), records.as_deref()),
        Command::Sweep {
            grid,
            experiment,
            grid_n,
            grid_k,
            q_multipliers,
            out,
        } => sweep_command(grid.as_deref(), experiment, grid_n, grid_k, q_multipliers, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
