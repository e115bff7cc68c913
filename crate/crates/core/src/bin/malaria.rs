use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use malaria_forecast::config::{parse_kv, KeyValues};
use malaria_forecast::impute::ImputeParams;
use malaria_forecast::lstm::TrainConfig;
use malaria_forecast::pipeline::{
    cmd_aggregate, cmd_evaluate, cmd_forecast, cmd_impute, cmd_pipeline, cmd_synth,
    default_out_dir, run_log, ForecastMode, Level, PipelineConfig, WindowConfig,
};
use malaria_forecast::synth::SynthConfig;
use malaria_forecast::window::{Variant, DEFAULT_LOOKBACK, DEFAULT_TRAIN_FRACTION};
use malaria_forecast::{Error, Result};

#[derive(Parser)]
#[command(
    name = "malaria",
    version,
    about = "Malaria case forecasting with LSTM models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic 18-province dataset (truth and masked copies).
    Synth {
        /// Key-value file with generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        masked: Option<PathBuf>,
        /// `--key value` overrides of the config file.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Fill missing climate values with missForest, province by province.
    Impute {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Per-province iteration log (CSV).
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value_t = 10)]
        max_iter: usize,
        /// Features tried per split; default ⌈√p⌉.
        #[arg(long)]
        mtry: Option<usize>,
        #[arg(long, default_value_t = 5)]
        min_leaf: usize,
    },
    /// Combine old provinces into the new scheme or the whole country.
    Aggregate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// new | country
        #[arg(long, default_value = "new")]
        level: String,
        /// Redistricting CSV (old_province,new_province); built-in when absent.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Train one region's model.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        region: String,
        /// univariate | multivariate
        #[arg(long)]
        variant: String,
        #[arg(long)]
        model: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        loss: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Forecast the test horizon of a trained model's region.
    Forecast {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// one-step | recursive
        #[arg(long, default_value = "one-step")]
        mode: String,
    },
    /// Build the comparison table, totals and curves from forecast CSVs.
    Evaluate {
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(required = true)]
        forecasts: Vec<PathBuf>,
    },
    /// Run every stage from one config file.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `--key value` overrides, e.g. `--train.hidden 16`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, default_value_t = DEFAULT_LOOKBACK)]
    lookback: usize,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Mini-batch size; full batch when absent.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            hidden: self.hidden.unwrap_or(d.hidden),
            epochs: self.epochs.unwrap_or(d.epochs),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            batch_size: self.batch_size.or(d.batch_size),
            clip_norm: self.clip_norm.unwrap_or(d.clip_norm),
            seed: self.seed,
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `--key value` and `--key=value` pairs.
fn parse_overrides(args: &[String]) -> Result<KeyValues> {
    let mut kv = KeyValues::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let key = a
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected --key, found '{a}'")))?;
        let (k, v) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        kv.insert(k, v);
    }
    Ok(kv)
}

fn read_kv(path: Option<&Path>) -> Result<KeyValues> {
    match path {
        Some(p) => parse_kv(&std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?),
        None => Ok(KeyValues::new()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            config,
            truth,
            masked,
            overrides,
        } => {
            let mut kv = read_kv(config.as_deref())?;
            kv.extend(parse_overrides(&overrides)?);
            let mut cfg = SynthConfig::burundi(0);
            cfg.apply(&kv)?;
            let out = default_out_dir();
            let truth = truth.unwrap_or_else(|| out.join("truth.csv"));
            let masked = masked.unwrap_or_else(|| out.join("masked.csv"));
            let (_, m) = cmd_synth(&cfg, &truth, &masked)?;
            eprintln!(
                "seed {}: {} missing climate values",
                cfg.seed,
                m.missing_climate_count()
            );
            println!("{}\n{}", truth.display(), masked.display());
        }
        Command::Impute {
            input,
            output,
            log,
            seed,
            trees,
            max_iter,
            mtry,
            min_leaf,
        } => {
            let mut params = ImputeParams::default();
            params.forest.n_trees = trees;
            params.forest.tree.mtry = mtry;
            params.forest.tree.min_samples_leaf = min_leaf;
            params.max_iter = max_iter;
            let summary = cmd_impute(&input, &output, &log, &params, seed)?;
            for p in summary {
                eprintln!(
                    "{}: {} missing, {} iterations, delta {}",
                    p.province, p.missing, p.iterations_run, p.final_delta
                );
            }
            println!("{}", output.display());
        }
        Command::Aggregate {
            input,
            output,
            level,
            map,
        } => {
            cmd_aggregate(&input, map.as_deref(), level.parse::<Level>()?, &output)?;
            println!("{}", output.display());
        }
        Command::Train {
            input,
            region,
            variant,
            model,
            loss,
            window,
            train,
        } => {
            let cfg = train.config()?;
            let w = WindowConfig {
                lookback: window.lookback,
                train_fraction: window.train_fraction,
            };
            let m = malaria_forecast::pipeline::cmd_train(
                &input,
                &region,
                variant.parse::<Variant>()?,
                w,
                &cfg,
                &model,
                &loss,
            )?;
            if let Some(l) = m.loss_history.last() {
                eprintln!("seed {}: final loss {l}", cfg.seed);
            }
            println!("{}", model.display());
        }
        Command::Forecast {
            model,
            input,
            output,
            mode,
        } => {
            cmd_forecast(&model, &input, &output, mode.parse::<ForecastMode>()?)?;
            println!("{}", output.display());
        }
        Command::Evaluate { out_dir, forecasts } => {
            let out = out_dir.unwrap_or_else(default_out_dir);
            for p in cmd_evaluate(&forecasts, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Pipeline { config, overrides } => {
            let cfg = PipelineConfig::load(config.as_deref(), &parse_overrides(&overrides)?)?;
            eprint!("{}", run_log(&cfg));
            let run = cmd_pipeline(&cfg)?;
            print!("{}", run.table);
            for f in run.files {
                eprintln!("{}", cfg.out_dir.join(f).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error:{}: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
