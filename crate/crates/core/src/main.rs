use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use freqloc::error::{Error, Result};
use freqloc::eval::report::{summarize, write_report, SUMMARY_FILE};
use freqloc::eval::{self, Axis, ExperimentConfig};
use freqloc::features::{featurize_dataset, FeatureConfig};
use freqloc::grid::build_ieee39;
use freqloc::io;
use freqloc::localizer::train_localizer;
use freqloc::magnitude::{train_bank, LinearModelBank};
use freqloc::missing::{build_bank, predict_with_missing, BankSettings, MissingMask};

#[derive(Parser)]
#[command(name = "freqloc", version, about = "Locate and size load disturbances from generator frequency traces")]
struct Cli {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config. Relative paths resolve
    /// against the output root variable when it is set.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Test,
    Validation,
}

#[derive(Args)]
struct Window {
    /// Sampling window W_s; defaults to the config's base point.
    #[arg(long)]
    ws: Option<usize>,
    /// Averaging window W_a.
    #[arg(long)]
    wa: Option<usize>,
    /// Noise standard deviation, Hz.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one dataset split and write its traces.
    Simulate {
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a traces file into a feature file.
    Featurize {
        #[arg(long)]
        traces: PathBuf,
        #[command(flatten)]
        window: Window,
        /// Missing generators, e.g. `3-7`.
        #[arg(long, default_value = "none")]
        mask: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a localizer at a fixed λ, or tune λ on a test feature file.
    TrainLoc {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, conflicts_with = "test")]
        lambda: Option<f64>,
        /// Features to tune λ on over the config grid.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the per-bus magnitude regressions.
    TrainMag {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pre-train models for every missing pattern up to k_max generators.
    BuildBank {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value_t = 1)]
        k_max: usize,
        #[arg(long)]
        lambda: f64,
        #[command(flatten)]
        window: Window,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Localize and size every trace in a file with a model bank.
    Predict {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        /// Observed generator ids, comma-separated; all when omitted.
        #[arg(long, value_delimiter = ',')]
        observed: Option<Vec<usize>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run sweep axes (all when none given) and write the tables.
    Sweep {
        #[arg(long = "axis", value_delimiter = ',')]
        axes: Vec<String>,
    },
    /// Render the sweep tables in the output directory as markdown.
    Report {
        /// Sweep directory; the output directory by default.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
        Split::Validation => "validation",
    }
}

fn feature_config(cfg: &ExperimentConfig, w: &Window) -> FeatureConfig {
    let base = cfg.sweep.base_point;
    FeatureConfig::new(
        w.ws.unwrap_or(base.sampling_window),
        w.wa.unwrap_or(base.averaging_window),
        w.sigma.unwrap_or(base.noise_sigma),
        cfg.noise_seed,
    )
}

fn read_traces(path: &Path) -> Result<freqloc::grid::Dataset> {
    let text = io::read_file(path)?;
    Ok(io::traces_from_str(&path.display().to_string(), &text)?.0)
}

fn read_samples(path: &Path) -> Result<Vec<freqloc::features::LabeledSample>> {
    io::samples_from_str(&path.display().to_string(), &io::read_file(path)?)
}

fn done(path: &Path) {
    eprintln!("wrote {}", path.display());
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = cli.output {
        cfg.output_dir = o;
    }
    let out_dir = cfg.resolved_output_dir();
    let target = |given: Option<PathBuf>, default: &str| given.unwrap_or_else(|| out_dir.join(default));
    let model = build_ieee39(&cfg.model)?;

    match cli.command {
        Command::Simulate { split, out } => {
            let [train, test, validation] = eval::split_specs(&cfg);
            let spec = match split {
                Split::Train => train,
                Split::Test => test,
                Split::Validation => validation,
            };
            let ds = freqloc::grid::generate_dataset(&model, &spec, &cfg.sim)?;
            let path = target(out, &format!("traces-{}.txt", split_name(split)));
            io::write_file(&path, &io::traces_to_string(&ds, &model.content_hash())?)?;
            done(&path);
        }
        Command::Featurize {
            traces,
            window,
            mask,
            out,
        } => {
            let ds = read_traces(&traces)?;
            let mask: MissingMask = mask.parse()?;
            let samples = featurize_dataset(&ds, &feature_config(&cfg, &window), &mask)?;
            let path = target(out, "features.txt");
            io::write_file(&path, &io::samples_to_string(&samples)?)?;
            done(&path);
        }
        Command::TrainLoc {
            features,
            lambda,
            test,
            out,
        } => {
            let samples = read_samples(&features)?;
            let model = match (lambda, test) {
                (Some(l), _) => train_localizer(&samples, model.bus_count(), l, &cfg.optimizer)?,
                (None, Some(t)) => {
                    let test = read_samples(&t)?;
                    let tuned =
                        eval::tune_lambda(&samples, &test, &cfg.lambda_grid, model.bus_count(), &cfg.optimizer)?;
                    for c in &tuned.curve {
                        eprintln!("lambda {} test error {}", c.lambda, c.test_error);
                    }
                    eprintln!("selected lambda {}", tuned.lambda);
                    tuned.model
                }
                (None, None) => return Err(Error::Input("give --lambda or --test".into())),
            };
            let path = target(out, "localizer.txt");
            io::write_file(&path, &io::localizer_to_string(&model))?;
            done(&path);
        }
        Command::TrainMag { features, out } => {
            let samples = read_samples(&features)?;
            let first = samples
                .first()
                .ok_or_else(|| Error::Input(format!("{} holds no samples", features.display())))?;
            let mut bank = LinearModelBank::new(first.features.config);
            train_bank(&mut bank, &samples, &cfg.magnitude)?;
            let path = target(out, "magnitude.txt");
            io::write_file(&path, &io::magnitude_bank_to_string(&bank))?;
            done(&path);
        }
        Command::BuildBank {
            traces,
            k_max,
            lambda,
            window,
            out,
        } => {
            let ds = read_traces(&traces)?;
            let settings = BankSettings {
                bus_count: model.bus_count(),
                lambda,
                optimizer: cfg.optimizer,
                magnitude: cfg.magnitude,
            };
            let bank = build_bank(&ds, &feature_config(&cfg, &window), k_max, &settings)?;
            let dir = target(out, "bank");
            io::write_bank_dir(&dir, &bank)?;
            done(&dir);
        }
        Command::Predict {
            bank,
            traces,
            observed,
            out,
        } => {
            let bank = io::read_bank_dir(&bank)?;
            let ds = read_traces(&traces)?;
            let observed: BTreeSet<usize> = match observed {
                Some(ids) => ids.into_iter().collect(),
                None => (1..=bank.generator_count).collect(),
            };
            let mut s = String::from(
                "# freqloc-predictions v1\nscenario_id,true_bus,true_magnitude_mw,predicted_bus,probability,magnitude_mw\n",
            );
            let mut wrong = 0usize;
            for t in &ds.traces {
                let (p, mw) = predict_with_missing(&bank, t, &observed)?;
                if p.predicted_class != t.scenario.label_index() {
                    wrong += 1;
                }
                writeln!(
                    s,
                    "{},{},{},{},{},{mw}",
                    t.scenario_id,
                    t.scenario.label_index(),
                    t.scenario.magnitude(),
                    p.predicted_class,
                    p.probabilities[p.predicted_class]
                )
                .unwrap();
            }
            let path = target(out, "predictions.csv");
            io::write_file(&path, &s)?;
            eprintln!("classification error {}", wrong as f64 / ds.len().max(1) as f64);
            done(&path);
        }
        Command::Sweep { axes } => {
            let axes = axes.iter().map(|a| a.parse()).collect::<Result<Vec<Axis>>>()?;
            let report = eval::sweep(&cfg, &axes)?;
            for path in write_report(&out_dir, &report)? {
                done(&path);
            }
            let failures = report.failures();
            if !failures.is_empty() {
                for f in &failures {
                    eprintln!("failed row: {f}");
                }
                return Err(Error::Input(format!("{} sweep rows failed", failures.len())));
            }
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or(out_dir);
            let (text, failed) = summarize(&dir)?;
            let path = dir.join(SUMMARY_FILE);
            io::write_file(&path, &text)?;
            done(&path);
            if failed > 0 {
                return Err(Error::Input(format!("{failed} rows in {} are marked failed", dir.display())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
