//! Trains the matcher on one leave-one-speaker-out fold and scores a
//! held-out recording against every candidate prompt.

use namegate::corpus::Corpus;
use namegate::dataio::loso_folds;
use namegate::evaluation::evaluate_fold;
use namegate::model::{Model, Objective};
use namegate::prompts::FileBackedProvider;
use namegate::synthdata::{generate, SynthSpec};
use namegate::training::{train_one, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let g = generate(&SynthSpec::default(), dir.path())?;
    let corpus = Corpus::from_manifest(&g.manifest, false)?;
    let provider = FileBackedProvider::load(&g.prompt_manifest)?;
    let folds = loso_folds(corpus.dataset(), 0)?;

    let config = TrainConfig::for_objective(Objective::Matcher, 0);
    let out = train_one(&config, &folds[0], &corpus, Some(&provider), 0)?;
    let r = &out.report;
    println!(
        "test {} / val {}  lr {:e}",
        r.test_speaker, r.val_speaker, r.lr
    );
    for v in &r.validation {
        println!("  epoch {:>2}  val macro-F1 {:.4}", v.epoch, v.metric);
    }
    println!("kept epoch {} ({:.4})", r.best_epoch, r.best_metric);

    let eval = evaluate_fold(&out.model, &folds[0], &corpus, true)?;
    println!("test accuracy {:.4}", eval.metrics.accuracy);

    if let Model::Matcher(m) = &out.model {
        let i = corpus.split(&folds[0]).test[0];
        let (scores, best) = m.score(&corpus.pooled_rows(&[i]))?;
        println!("{} ({}):", corpus.entry(i).recording_id, corpus.label(i));
        for (label, s) in m.classes.labels().iter().zip(&scores) {
            println!("  {s:+.3}  {label}");
        }
        println!("  -> {best}");
    }
    Ok(())
}
