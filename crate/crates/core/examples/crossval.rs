//! Full leave-one-speaker-out comparison of the matcher and the classifier,
//! printed as the summary CSV.

use namegate::corpus::Corpus;
use namegate::evaluation::{crossval, summary_csv};
use namegate::model::Objective;
use namegate::prompts::FileBackedProvider;
use namegate::synthdata::{generate, SynthSpec};
use namegate::training::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let g = generate(&SynthSpec::default(), dir.path())?;
    let corpus = Corpus::from_manifest(&g.manifest, false)?;
    let provider = FileBackedProvider::load(&g.prompt_manifest)?;
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let matcher = crossval(
        &TrainConfig::for_objective(Objective::Matcher, 0),
        &corpus,
        Some(&provider),
        jobs,
    )?;
    let classifier = crossval(
        &TrainConfig::for_objective(Objective::Classifier, 0),
        &corpus,
        None,
        jobs,
    )?;
    print!("{}", summary_csv(&[&matcher, &classifier]));
    Ok(())
}
