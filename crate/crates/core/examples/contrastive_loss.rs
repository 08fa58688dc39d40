//! The symmetric contrastive loss on hand-built embeddings: aligned pairs
//! score low, shuffled pairs high, and the scale sharpens both.

use namegate::matcher::{contrastive_loss, pair_logits, MatcherParams};
use namegate::numerics::Matrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let audio = Matrix::<f64>::identity(3);
    let aligned = Matrix::identity(3);
    let shuffled = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]);
    for s in [0.0, 1.0, 2.5] {
        let mut p = MatcherParams::<f64>::init(3, 3, 3, 0);
        p.s_audio.value = Matrix::scalar(s);
        p.s_text.value = Matrix::scalar(s);
        let (a, t) = pair_logits(&p, &audio, &aligned)?;
        let good = contrastive_loss(&a, &t)?;
        let (a, t) = pair_logits(&p, &audio, &shuffled)?;
        let bad = contrastive_loss(&a, &t)?;
        println!("log-scale {s:.1}: aligned {good:.4}  shuffled {bad:.4}");
    }
    Ok(())
}
