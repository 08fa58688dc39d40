//! Accuracy and macro-averaged precision, recall and F1 from labels.

use namegate::evaluation::{compute_metrics, ConfusionMatrix};
use namegate::prompts::{ClassSpace, PromptLabel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let classes = ClassSpace::new(["chat".to_string(), "pomme".to_string()]);
    let w = PromptLabel::word;
    let m = PromptLabel::Mispronounced;
    let truth = [
        w("chat"),
        w("chat"),
        w("pomme"),
        m.clone(),
        m.clone(),
        w("pomme"),
    ];
    let predicted = [
        w("chat"),
        m.clone(),
        w("pomme"),
        m.clone(),
        w("chat"),
        w("pomme"),
    ];
    let cm = ConfusionMatrix::from_labels(&classes, &truth, &predicted)?;
    for (label, row) in classes.labels().iter().zip(cm.counts()) {
        println!("{:<15} {:?}", label.to_string(), row);
    }
    let r = compute_metrics(&cm)?;
    println!("accuracy {:.4}", r.accuracy);
    println!(
        "macro P {:.4}  R {:.4}  F1 {:.4}",
        r.macro_precision, r.macro_recall, r.macro_f1
    );
    Ok(())
}
