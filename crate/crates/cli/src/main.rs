use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Parser, Subcommand, ValueEnum};

use qbath::config::resolve;
use qbath::io::{emit_batch, emit_outputs, read_dataset, read_features, write_predictions};
use qbath::ml::{evaluate, load_model, save_model, train_test_split, Hyper, InferenceModel, DEFAULT_COMPONENTS};
use qbath::pipeline::{run_batch_with, run_single};
use qbath::presets::{GridName, PRESETS};
use qbath::Error;

#[derive(Parser)]
#[command(name = "qbath", version, about = "Structured quantum bath simulation and bath-parameter inference")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Short,
    Long,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration file or preset and write its outputs.
    Run {
        target: String,
        #[arg(long, default_value = "qbath-out")]
        out: PathBuf,
        #[arg(long, value_enum)]
        grid: Option<Grid>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate randomized copies of a configuration and write the dataset.
    Batch {
        config: String,
        #[arg(long)]
        runs: usize,
        /// Worker threads (0 uses every core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long, default_value = "qbath-batch")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit PCA and boosted trees on a features/targets pair and report held-out scores.
    Train {
        features: PathBuf,
        targets: PathBuf,
        #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
        pca: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "model.txt")]
        model: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
    /// Predict targets for every row of a features file.
    Predict {
        model: PathBuf,
        features: PathBuf,
        /// Output file; predictions go to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in presets.
    Presets,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Validation(_) | Error::Parse(_) => 1,
        Error::Integration { .. } => 2,
        Error::Io { .. } => 3,
    }
}

fn run(target: &str, out: &Path, grid: Option<Grid>, seed: Option<u64>) -> qbath::Result<()> {
    let mut cfg = resolve(target)?;
    if let Some(g) = grid {
        cfg.grid = match g {
            Grid::Short => GridName::Short,
            Grid::Long => GridName::Long,
        }
        .grid();
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let mut output = run_single(&cfg)?;
    output.record.files = emit_outputs(&output, out, &cfg.outputs)?;
    let r = &output.record;
    println!("run {} ({} points, t = {} .. {})", r.label, cfg.grid.n_points, cfg.grid.t_start, cfg.grid.t_end);
    println!("backflow total   {:.6e}", r.backflow.total);
    println!("backflow rate    {:.6e}", r.backflow.rate);
    println!("DEPS             {:.6e}", r.deps);
    println!("K_max            {:.6e}", r.k_max);
    println!("dominant freq    {:.6e}", r.targets.get("dominant_freq").unwrap_or(f64::NAN));
    for (t, why) in &r.targets.flags {
        println!("flag {t}: {why}");
    }
    println!("wrote {} files under {}", r.files.len(), out.display());
    Ok(())
}

fn batch(config: &str, runs: usize, workers: usize, out: &Path, seed: Option<u64>) -> qbath::Result<()> {
    let mut cfg = resolve(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let done = AtomicUsize::new(0);
    let result = run_batch_with(&cfg, runs, workers, |r| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        match &r.outcome {
            Ok(_) => eprintln!("[{k}/{runs}] run {} done", r.run_id),
            Err(e) => eprintln!("[{k}/{runs}] run {} failed: {e}", r.run_id),
        }
    })?;
    let files = emit_batch(&result, out)?;
    let excluded = result.excluded();
    println!("{} of {runs} runs in the dataset, {} excluded", result.dataset.len(), excluded.len());
    for (id, why) in &excluded {
        println!("  run {id}: {why}");
    }
    println!("wrote {} files under {}", files.len(), out.display());
    if result.dataset.is_empty() {
        if let Some(Err(e)) = result.runs.into_iter().map(|r| r.outcome).find(|o| o.is_err()) {
            return Err(e);
        }
    }
    Ok(())
}

fn train(features: &Path, targets: &Path, pca: usize, seed: u64, model: &Path, fraction: f64) -> qbath::Result<()> {
    let (ds, skipped) = read_dataset(features, targets)?;
    if !skipped.is_empty() {
        eprintln!("left out {} rows with non-finite values", skipped.len());
    }
    let (train, test) = train_test_split(&ds, fraction, seed)?;
    if test.is_empty() {
        return Err(Error::Validation(format!("{} rows leave no test set", ds.len())));
    }
    let m = InferenceModel::fit(&train, pca, &Hyper::default(), seed)?;
    let metrics = evaluate(&m.predict(&test.features)?, &test.targets)?;
    println!("{} train rows, {} test rows, {} components", train.len(), test.len(), m.pca.n_components());
    println!("{:<14} {:>12} {:>10}", "target", "mse", "r2");
    for (name, mt) in m.target_names.iter().zip(&metrics) {
        let r2 = mt.r2.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        println!("{name:<14} {:>12.4e} {r2:>10}", mt.mse);
    }
    save_model(&m, model)?;
    println!("model written to {}", model.display());
    Ok(())
}

fn predict(model: &Path, features: &Path, out: Option<&Path>) -> qbath::Result<()> {
    let m = load_model(model)?;
    let (ids, f) = read_features(features)?;
    let pred = m.predict(&f)?;
    match out {
        Some(p) => {
            write_predictions(p, &ids, &m.target_names, &pred)?;
        }
        None => {
            println!("run_id,{}", m.target_names.join(","));
            for (r, id) in ids.iter().enumerate() {
                let vals: Vec<String> = pred.row(r).iter().map(|v| v.to_string()).collect();
                println!("{id},{}", vals.join(","));
            }
        }
    }
    Ok(())
}

fn presets() {
    for p in PRESETS {
        let grid = match p.grid {
            GridName::Short => "short",
            GridName::Long => "long",
        };
        println!("{:<26} {:<12} {:<14} {:<6} {}", p.name, p.layout.name(), p.regime.label(), grid, p.description);
    }
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
    let result = match cli.cmd {
        Command::Run { target, out, grid, seed } => run(&target, &out, grid, seed),
        Command::Batch { config, runs, workers, out, seed } => batch(&config, runs, workers, &out, seed),
        Command::Train { features, targets, pca, seed, model, train_fraction } => {
            train(&features, &targets, pca, seed, &model, train_fraction)
        }
        Command::Predict { model, features, out } => predict(&model, &features, out.as_deref()),
        Command::Presets => {
            presets();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
