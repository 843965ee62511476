use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use kancfd::kanheads::HeadKind;
use kancfd_cli::artifacts::load_model;
use kancfd_cli::dumps::{dump_embeddings, dump_profile};
use kancfd_cli::{report, run_experiment, verify, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "kancfd", version, about = "Domain-incremental DG-KD experiments on synthetic streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on every task of the configured stream and write a run directory.
    Run {
        /// Config file; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// One of dgkd, mlp, groupkan.
        #[arg(long)]
        head: Option<String>,
        /// Components to switch off, comma separated from {sc, kd, kdcp}.
        #[arg(long, value_delimiter = ',')]
        ablate: Vec<String>,
        /// Replay stored raw inputs instead of features.
        #[arg(long)]
        replay_raw: bool,
        /// Print the effective config and exit without training.
        #[arg(long)]
        print_config: bool,
    },
    /// Print AA/AF tables of a run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the composite activation of one group as CSV.
    DumpProfile {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        group: usize,
        #[arg(long, default_value_t = 201)]
        points: usize,
        /// Destination file; defaults to `<out>/profile_group<g>.csv`.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Write 2-D PCA coordinates of the pooled eval features as CSV.
    DumpEmbeddings {
        #[arg(long)]
        out: PathBuf,
        /// Destination file; defaults to `<out>/embeddings.csv`.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Re-run a recorded experiment and compare artifact hashes.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
}

fn config_error(field: &str, message: String) -> anyhow::Error {
    CliError::Config {
        line: None,
        field: Some(field.to_owned()),
        message,
    }
    .into()
}

fn effective_config(
    config: Option<PathBuf>,
    seed: Option<u64>,
    head: Option<String>,
    ablate: &[String],
    replay_raw: bool,
) -> Result<ExperimentConfig> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.trainer.seed = seed;
    }
    if let Some(head) = head {
        cfg.trainer.head = head.parse::<HeadKind>().map_err(|e| config_error("head", e.to_string()))?;
    }
    for part in ablate {
        match part.trim() {
            "sc" => cfg.trainer.ablation.use_sc = false,
            "kd" => cfg.trainer.ablation.use_kd = false,
            "kdcp" => cfg.trainer.ablation.use_kdcp = false,
            other => return Err(config_error("ablate", format!("unknown component `{other}` (expected sc, kd, kdcp)"))),
        }
    }
    if replay_raw {
        cfg.trainer.ablation.use_raw_replay = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &PathBuf, f: impl FnOnce(&mut BufWriter<File>) -> kancfd_cli::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            head,
            ablate,
            replay_raw,
            print_config,
        } => {
            let cfg = effective_config(config, seed, head, &ablate, replay_raw)?;
            if print_config {
                print!("{}", cfg.to_text());
                return Ok(());
            }
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
            let run = run_experiment(&cfg, &dir)?;
            let last = run.summary.steps.last().expect("at least one task");
            println!(
                "{}: {} tasks, final Acc AA {:.2} AF {}",
                dir.display(),
                run.summary.steps.len(),
                last.acc_aa,
                last.acc_af.map_or("-".into(), |v| format!("{v:.2}"))
            );
        }
        Command::Report { out } => {
            let r = report(&out)?;
            print!("{}", r.markdown);
            std::fs::write(out.join("report.md"), &r.markdown)?;
        }
        Command::DumpProfile {
            out,
            group,
            points,
            file,
        } => {
            let model = load_model(&out)?;
            let path = file.unwrap_or_else(|| out.join(format!("profile_group{group}.csv")));
            write_file(&path, |w| dump_profile(&model, group, points, w))?;
            println!("{}", path.display());
        }
        Command::DumpEmbeddings { out, file } => {
            let model = load_model(&out)?;
            let path = file.unwrap_or_else(|| out.join("embeddings.csv"));
            let mut explained = [0.0; 2];
            write_file(&path, |w| {
                explained = dump_embeddings(&model, w)?.explained;
                Ok(())
            })?;
            println!(
                "{} (explained variance {:.3}, {:.3})",
                path.display(),
                explained[0],
                explained[1]
            );
        }
        Command::Verify { out } => {
            let v = verify(&out)?;
            println!("verified {} artifacts, config hash {}", v.checked, v.config_hash);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(3, CliError::exit_code);
            ExitCode::from(code)
        }
    }
}
