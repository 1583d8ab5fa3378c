//! Corpus, training, enhancement, evaluation and reporting in a scratch
//! directory, driven through the same functions as the command line.

use crgan::cli::{self, Experiment, ExperimentConfig};
use crgan::train::latest_checkpoint;

const CONFIG: &str = r#"
[corpus]
train_clean = 2
test_clean = 1
train_noises = ["white", "babble-surrogate"]
test_noises = ["white", "babble-surrogate"]
train_snrs = [0.0, 10.0]
test_snrs = [5.0]

[train]
variant = "Ra-CGAN"
epochs = 1
batch_size = 4
utterances_per_epoch = 4

[train.arch]
preset = "tiny"
"#;

fn main() -> crgan::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| crgan::Error::Invalid(e.to_string()))?;
    let config = ExperimentConfig::from_toml(CONFIG, "pipeline.toml".as_ref())?;
    let exp = Experiment::from_config(config, dir.path().to_path_buf())?;
    cli::cmd_synth_corpus(&exp.config.corpus, &exp.corpus_dir())?;
    cli::cmd_train(&exp.train, &exp.corpus_dir().join("manifest.tsv"), &exp.run_dir(), false, |e| {
        println!("epoch {} d {:.4} g {:.4}", e.epoch, e.d_total, e.g_total)
    })?;
    let test = exp.corpus_dir().join("test");
    cli::cmd_enhance(&latest_checkpoint(&exp.run_dir()), &test.join("noisy"), &exp.enhanced_dir())?;
    let ev = cli::cmd_evaluate(&test.join("clean"), &exp.enhanced_dir(), &test.join("noisy"), "Ra-CGAN", &exp.quality_source())?;
    let mut files = cli::write_report_files(&ev.system, &exp.reports_dir(), "Ra-CGAN")?;
    files.extend(cli::write_report_files(&ev.noisy, &exp.reports_dir(), "Noisy")?);
    files.retain(|f| f.extension().is_some_and(|e| e == "json"));
    print!("{}", cli::cmd_report(&files)?);
    Ok(())
}
