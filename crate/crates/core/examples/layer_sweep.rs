//! Ranks encoder layers by cross-validated accuracy on a corpus whose
//! per-layer noise is known to bottom out at layer 12.

use std::collections::BTreeMap;

use namegate::corpus::Corpus;
use namegate::evaluation::layer_sweep;
use namegate::model::Objective;
use namegate::synthdata::{generate, LayerSweepSpec, SynthSpec};
use namegate::training::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = SynthSpec {
        n_speakers: 5,
        n_words: 8,
        repeats: 3,
        layer_sweep: Some(LayerSweepSpec {
            layers: vec![4, 8, 12, 16, 20],
            best_layer: 12,
            base_noise: 0.0,
            noise_slope: 0.15,
        }),
        ..SynthSpec::default()
    };
    let g = generate(&spec, dir.path())?;
    let mut layers = BTreeMap::new();
    for (layer, manifest) in &g.truth.layer_manifests {
        layers.insert(
            *layer,
            Corpus::from_manifest(dir.path().join(manifest), false)?,
        );
    }
    let config = TrainConfig::for_objective(Objective::Classifier, 0);
    let report = layer_sweep(&layers, &config, 4)?;
    for r in &report.ranking {
        println!(
            "layer {:>2}  accuracy {:.4} ± {:.4}",
            r.layer, r.accuracy.mean, r.accuracy.std
        );
    }
    println!("best layer {}", report.best_layer());
    Ok(())
}
