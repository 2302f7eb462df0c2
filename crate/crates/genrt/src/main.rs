use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use genrt::harness::{
    ablate, evaluate, load_manifest, plot_features, prepare_data, sweep_lambda, train,
    write_ablate_outputs, write_sweep_outputs, HResult, RunConfig, Variant,
};
use genrt::netmodel::{load_network, Network};
use genrt::synthdata;

#[derive(Parser)]
#[command(name = "genrt", about = "GeNRT training and experiment harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// JSON run configuration; omit for the built-in multi-source task
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> HResult<RunConfig> {
        let cfg = match &self.config {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
            None => RunConfig::default_msda(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured datasets and write them as CSV
    Synth {
        #[command(flatten)]
        config: ConfigArg,
        /// output directory for datasets.csv and data_manifest.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one run per configured seed
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// reproduce a single recorded run instead of using --config
        #[arg(long, conflicts_with = "config")]
        manifest: Option<PathBuf>,
        /// output directory; each seed writes to <out>/seed_<n>/
        #[arg(long)]
        out: PathBuf,
    },
    /// Report accuracy and confusion counts for a finished run
    Eval {
        /// run directory containing manifest.json and net.bin
        #[arg(long)]
        run: PathBuf,
        /// evaluate on this CSV instead of the run's target test split
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a variant matrix over the shared seed set
    Ablate {
        #[command(flatten)]
        config: ConfigArg,
        /// JSON list of {"name", "overrides"} objects
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the GDC weight λ
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// comma-separated λ values
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scatter the bottleneck features of a finished run
    Plot {
        #[arg(long)]
        run: PathBuf,
        /// output SVG path (default: <run>/features.svg)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a finished run directory
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn load_run_network(run: &Path) -> HResult<Network> {
    let mut f = std::fs::File::open(run.join("net.bin"))?;
    Ok(load_network(&mut f)?)
}

fn run(cli: Cli) -> HResult<()> {
    match cli.command {
        Command::Synth { config, out } => {
            let cfg = config.load()?;
            let data = prepare_data(&cfg)?;
            std::fs::create_dir_all(&out)?;
            let mut all: Vec<&synthdata::Dataset> = data.sources.iter().collect();
            all.push(&data.target_train);
            all.push(&data.target_test);
            let mut buf = Vec::new();
            synthdata::write_csv(&all, &mut buf)?;
            std::fs::write(out.join("datasets.csv"), buf)?;
            let manifest = serde_json::json!({
                "config_hash": cfg.config_hash(),
                "dataset_checksums": data.checksums,
            });
            std::fs::write(
                out.join("data_manifest.json"),
                serde_json::to_string_pretty(&manifest)?,
            )?;
            println!("wrote {} domains to {}", data.sources.len() + 1, out.display());
        }
        Command::Train { config, manifest, out } => {
            let runs: Vec<(RunConfig, u64, PathBuf)> = if let Some(m) = manifest {
                let (cfg, seed) = load_manifest(&m)?;
                cfg.validate()?;
                vec![(cfg, seed, out.clone())]
            } else {
                let cfg = config.load()?;
                cfg.seeds
                    .iter()
                    .map(|&s| (cfg.clone(), s, out.join(format!("seed_{s}"))))
                    .collect()
            };
            for (cfg, seed, dir) in runs {
                let result = train(&cfg, seed, Some(&dir))?;
                let fin = result.final_record();
                println!(
                    "seed {seed}: test_acc {:.4}, rhcp {:.4}, noise {} -> {}",
                    fin.test_acc,
                    fin.rhcp,
                    fin.noise_level
                        .map(|v| format!("{v:.4}"))
                        .unwrap_or_else(|| "n/a".into()),
                    dir.display()
                );
            }
        }
        Command::Eval { run, data } => {
            let net = load_run_network(&run)?;
            let datasets: Vec<synthdata::Dataset> = match data {
                Some(csv) => synthdata::load_csv(&csv)?.datasets,
                None => {
                    let (cfg, _) = load_manifest(&run.join("manifest.json"))?;
                    let task = prepare_data(&cfg)?;
                    vec![task.target_test]
                }
            };
            for ds in &datasets {
                let rep = evaluate(&net, ds)?;
                println!(
                    "{}/{}: accuracy {:.4} over {} samples",
                    ds.domain, ds.split, rep.accuracy, rep.n
                );
                for (i, row) in rep.confusion.iter().enumerate() {
                    let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
                    println!("  class {i}: [{}]", cells.join(", "));
                }
            }
        }
        Command::Ablate { config, matrix, out } => {
            let cfg = config.load()?;
            let variants: Vec<Variant> =
                serde_json::from_str(&std::fs::read_to_string(&matrix)?)?;
            let report = ablate(&cfg, &variants)?;
            write_ablate_outputs(&report, &out)?;
            for s in &report.summaries {
                println!(
                    "{}: test_acc {:.4} ± {:.4}",
                    s.variant, s.test_acc_mean, s.test_acc_std
                );
            }
        }
        Command::Sweep { config, values, out } => {
            let cfg = config.load()?;
            let report = sweep_lambda(&cfg, &values)?;
            write_sweep_outputs(&report, &out)?;
            for r in &report.rows {
                println!("λ={}: test_acc {:.4} ± {:.4}", r.lambda, r.test_acc_mean, r.test_acc_std);
            }
        }
        Command::Plot { run, out } => {
            let net = load_run_network(&run)?;
            let (cfg, _) = load_manifest(&run.join("manifest.json"))?;
            let task = prepare_data(&cfg)?;
            let mut dss: Vec<&synthdata::Dataset> = task.sources.iter().collect();
            dss.push(&task.target_train);
            let svg = plot_features(&net, &dss)?;
            let path = out.unwrap_or_else(|| run.join("features.svg"));
            std::fs::write(&path, svg)?;
            println!("wrote {}", path.display());
        }
        Command::Report { run } => {
            let summary = std::fs::read_to_string(run.join("summary.json"))?;
            let v: serde_json::Value = serde_json::from_str(&summary)?;
            println!("run {}", run.display());
            println!("{}", serde_json::to_string_pretty(&v)?);
            let metrics = std::fs::read_to_string(run.join("metrics.csv"))?;
            let n_epochs = metrics.lines().count().saturating_sub(1);
            println!("epochs recorded: {n_epochs}");
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
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
