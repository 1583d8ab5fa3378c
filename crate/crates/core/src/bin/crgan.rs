use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use crgan::cli::{self, Experiment, Overrides, ROOT_ENV};
use crgan::corpus::Split;

#[derive(Parser)]
#[command(name = "crgan", version, about = "Mask-based speech enhancement with adversarial training")]
struct Args {
    /// Experiment TOML.
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Overrides the corpus and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// External PESQ executable (`plugin ref.wav deg.wav` prints a score).
    #[arg(long, global = true)]
    pesq_plugin: Option<PathBuf>,
    /// Experiment root; defaults to the config file's directory.
    #[arg(long, global = true, env = ROOT_ENV)]
    root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic corpus and its manifest.
    SynthCorpus {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the configured variant on the corpus's training split.
    Train {
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enhance every WAV in a directory.
    Enhance {
        /// Defaults to the run's latest checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to the corpus test split's noisy directory.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score enhanced and noisy speech against clean references.
    Evaluate {
        #[arg(long)]
        clean: Option<PathBuf>,
        #[arg(long)]
        noisy: Option<PathBuf>,
        #[arg(long)]
        enhanced: Option<PathBuf>,
        /// Row label; defaults to the variant name.
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a comparison table of saved metric files.
    Report {
        /// Metric JSON files; defaults to every `*.json` in the reports directory.
        files: Vec<PathBuf>,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    let args = Args::parse();
    let ov = Overrides {
        seed: args.seed,
        pesq_plugin: args.pesq_plugin.clone(),
        root: args.root.clone(),
    };
    let exp = Experiment::load(&args.config, &ov).with_context(|| format!("loading {}", args.config.display()))?;
    let test_dir = |kind: &str| exp.corpus_dir().join(Split::Test.name()).join(kind);

    match args.command {
        Command::SynthCorpus { out } => {
            let out = out.unwrap_or_else(|| exp.corpus_dir());
            let records = cli::cmd_synth_corpus(&exp.config.corpus, &out)?;
            println!("wrote {} mixtures to {}", records.len(), out.display());
        }
        Command::Train { resume, manifest, out } => {
            let manifest = manifest.unwrap_or_else(|| exp.corpus_dir().join("manifest.tsv"));
            let out = out.unwrap_or_else(|| exp.run_dir());
            let outcome = cli::cmd_train(&exp.train, &manifest, &out, resume, |e| {
                let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
                println!(
                    "epoch {:>3}  d {:>10.5}  g {:>10.5}  val_q {}  val_stoi {}  {:.1}s",
                    e.epoch,
                    e.d_total,
                    e.g_total,
                    opt(e.val_q),
                    opt(e.val_stoi),
                    e.wall_time_s
                )
            })?;
            println!("checkpoint {}", outcome.checkpoint.display());
        }
        Command::Enhance { checkpoint, input, out } => {
            let checkpoint = checkpoint.unwrap_or_else(|| crgan::train::latest_checkpoint(&exp.run_dir()));
            let input = input.unwrap_or_else(|| test_dir("noisy"));
            let out = out.unwrap_or_else(|| exp.enhanced_dir());
            let names = cli::cmd_enhance(&checkpoint, &input, &out)?;
            println!("enhanced {} files into {}", names.len(), out.display());
        }
        Command::Evaluate {
            clean,
            noisy,
            enhanced,
            system,
            out,
        } => {
            let clean = clean.unwrap_or_else(|| test_dir("clean"));
            let noisy = noisy.unwrap_or_else(|| test_dir("noisy"));
            let enhanced = enhanced.unwrap_or_else(|| exp.enhanced_dir());
            let system = system.unwrap_or_else(|| exp.train.variant.name().to_string());
            let out = out.unwrap_or_else(|| exp.reports_dir());
            let ev = cli::cmd_evaluate(&clean, &enhanced, &noisy, &system, &exp.quality_source())?;
            cli::write_report_files(&ev.system, &out, &system)?;
            cli::write_report_files(&ev.noisy, &out, "Noisy")?;
            print!("{}", crgan::quality::comparison_table(&[ev.noisy, ev.system]));
            println!("{}", cli::noisy_reference_note());
        }
        Command::Report { mut files, out } => {
            if files.is_empty() {
                let dir = exp.reports_dir();
                for entry in std::fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
                    let p = entry?.path();
                    if p.extension().is_some_and(|e| e == "json") {
                        files.push(p);
                    }
                }
                files.sort();
                if files.is_empty() {
                    bail!("no metric files in {}", dir.display());
                }
            }
            let table = cli::cmd_report(&files)?;
            print!("{table}");
            if let Some(out) = out {
                std::fs::write(&out, &table).with_context(|| format!("writing {}", out.display()))?;
            }
        }
    }
    Ok(())
}
