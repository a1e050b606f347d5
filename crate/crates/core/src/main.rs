use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dpl::data::{gen_synthetic, write_features};
use dpl::harness::{self, apply_override, emit_results, ExperimentConfig};
use dpl::{gradcheck, oracle, Error, Result, SyntheticSpec};

#[derive(Parser)]
#[command(name = "dpl", version, about = "Decoupled prototype learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write results.csv and summary.csv.
    Run(RunArgs),
    /// Check every analytic loss gradient against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare the relational contrastive loss against its nested-loop form.
    OraclePrc {
        #[arg(long, default_value_t = 50)]
        banks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic dataset and write it as a feature file.
    Gen {
        /// JSON synthetic spec; omitted fields take their defaults.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Each override takes a JSON value (`0.7`, `[0.0, 0.7]`, `true`) or a bare
/// string (`fc`).
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    head: Option<String>,
    #[arg(long)]
    missing_aware: Option<String>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    train_eta: Option<String>,
    #[arg(long)]
    test_eta: Option<String>,
    #[arg(long)]
    n_seeds: Option<String>,
    #[arg(long)]
    master_seed: Option<String>,
    #[arg(long)]
    test_fraction: Option<String>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    record_wall_time: Option<String>,
    #[arg(long)]
    save_history: Option<String>,
    #[arg(long)]
    save_checkpoints: Option<String>,
    /// Nested override, e.g. `--set optim.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let named = [
            ("task", &self.task),
            ("head", &self.head),
            ("missing_aware", &self.missing_aware),
            ("scenario", &self.scenario),
            ("train_eta", &self.train_eta),
            ("test_eta", &self.test_eta),
            ("n_seeds", &self.n_seeds),
            ("master_seed", &self.master_seed),
            ("test_fraction", &self.test_fraction),
            ("metric", &self.metric),
            ("output_dir", &self.output_dir),
            ("record_wall_time", &self.record_wall_time),
            ("save_history", &self.save_history),
            ("save_checkpoints", &self.save_checkpoints),
        ];
        let mut out: Vec<(String, String)> = named
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::ConfigInvalid(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            out.push((k.to_string(), v.to_string()));
        }
        Ok(out)
    }
}

fn run(args: &RunArgs) -> Result<bool> {
    let mut value = harness::read_config_value(&args.config)?;
    for (k, v) in args.overrides()? {
        apply_override(&mut value, &k, &v)?;
    }
    let config = ExperimentConfig::from_value(value)?;
    let results = harness::run_experiment(&config)?;
    let (results_path, summary_path) = emit_results(&results, &config.output_dir)?;
    for cell in config.grid() {
        let fp = config.fingerprint(&cell)?;
        let values: Vec<f64> = results.iter().filter(|r| r.fingerprint == fp).map(|r| r.value).collect();
        let s = harness::summarize(&values)?;
        println!(
            "{:<18} {:<20} aware={:<5} train_eta={:<4} test_eta={:<4} {} mean={:.4} std={:.4} (n={})",
            cell.head, cell.scenario.name(), cell.missing_aware, cell.train_eta, cell.test_eta,
            config.metric_kind().name(), s.mean, s.std, s.n
        );
    }
    println!("wrote {} and {}", results_path.display(), summary_path.display());
    Ok(true)
}

fn gradcheck_cmd(instances: usize, seed: u64) -> Result<bool> {
    let mut all = gradcheck::check_bank_losses(instances, seed)?;
    all.extend(gradcheck::check_baseline_losses(instances, seed)?);
    for r in &all {
        println!(
            "{} {:<24} instances={} max_rel_error={:.3e}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.loss,
            r.instances,
            r.max_rel_error
        );
    }
    Ok(all.iter().all(|r| r.passed()))
}

fn oracle_prc_cmd(banks: usize, seed: u64) -> Result<bool> {
    let cmp = oracle::compare_random_banks(banks, seed)?;
    let worst = cmp.iter().map(|c| c.abs_diff()).fold(0.0, f64::max);
    let ok = worst < 1e-10;
    println!("{} prc_loss vs brute force: banks={banks} max_abs_diff={worst:.3e}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

fn gen_cmd(spec: &PathBuf, out: &PathBuf) -> Result<bool> {
    let text = std::fs::read_to_string(spec)
        .map_err(|e| Error::DataUnavailable { path: spec.clone(), reason: e.to_string() })?;
    let spec: SyntheticSpec = serde_json::from_str(&text)?;
    spec.validate()?;
    let data = gen_synthetic(&spec)?;
    write_features(&data, BufWriter::new(File::create(out)?))?;
    println!("wrote {} samples to {}", data.samples.len(), out.display());
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Gradcheck { instances, seed } => gradcheck_cmd(*instances, *seed),
        Command::OraclePrc { banks, seed } => oracle_prc_cmd(*banks, *seed),
        Command::Gen { spec, out } => gen_cmd(spec, out),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        // A check ran but did not pass.
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
