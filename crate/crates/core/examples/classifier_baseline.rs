//! The closed-set classifier baseline across all folds.

use namegate::corpus::Corpus;
use namegate::evaluation::crossval;
use namegate::model::Objective;
use namegate::synthdata::{generate, SynthSpec};
use namegate::training::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let g = generate(&SynthSpec::default(), dir.path())?;
    let corpus = Corpus::from_manifest(&g.manifest, false)?;
    let config = TrainConfig::for_objective(Objective::Classifier, 0);
    let s = crossval(&config, &corpus, None, 4)?;
    for f in &s.folds {
        println!(
            "{}  lr {:e}  accuracy {:.4}",
            f.fold.test_speaker, f.selected_lr, f.evaluation.metrics.accuracy
        );
    }
    println!("accuracy {:.4} ± {:.4}", s.accuracy.mean, s.accuracy.std);
    println!("macro F1 {:.4} ± {:.4}", s.macro_f1.mean, s.macro_f1.std);
    Ok(())
}
