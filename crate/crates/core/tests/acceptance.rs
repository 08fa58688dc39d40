//! Acceptance criteria 1–8. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use namegate::baselines::ctc_loss;
use namegate::corpus::Corpus;
use namegate::evaluation::{compute_metrics, crossval, layer_sweep, ConfusionMatrix, CvSummary};
use namegate::matcher::{contrastive_loss, pair_logits, MatcherParams};
use namegate::model::Objective;
use namegate::numerics::Matrix;
use namegate::prompts::FileBackedProvider;
use namegate::selfcheck::gradient_suite;
use namegate::synthdata::{generate, LayerSweepSpec, SynthSpec};
use namegate::training::{SelectionMetric, TrainConfig, TrainReport, DEFAULT_LR_GRID};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<f64> {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

fn unit_rows(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<f64> {
    random(rows, cols, rng).l2_normalize_rows(1e-12).unwrap()
}

// 1. Gradient suite.
fn gradients() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..10).collect();
    let report = gradient_suite(&seeds).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let params = |model: &str| {
        let mut p: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| c.model == model)
            .map(|c| c.param.as_str())
            .collect();
        p.sort();
        p.dedup();
        p
    };
    let coverage = params("matcher")
        == [
            "b_audio", "b_text", "s_audio", "s_text", "w_audio", "w_text",
        ]
        && params("classifier") == ["b1", "b2", "beta", "gamma", "w1", "w2"]
        && params("ctc").contains(&"logits");
    let worst = report.max_error();
    outcome(
        report.checks.iter().all(|c| c.max_rel_error < 1e-4) && coverage && secs < 120.0,
        format!(
            "max relative error {worst:.2e} over {} seeds, {secs:.2}s",
            seeds.len()
        ),
    )
}

fn loss_for(a: &Matrix<f64>, t: &Matrix<f64>, s_a: f64, s_t: f64) -> f64 {
    let mut p = MatcherParams::<f64>::init(1, 1, 1, 0);
    p.s_audio.value = Matrix::scalar(s_a);
    p.s_text.value = Matrix::scalar(s_t);
    let (l_at, l_ta) = pair_logits(&p, a, t).unwrap();
    contrastive_loss(&l_at, &l_ta).unwrap()
}

// 2. Contrastive-loss oracles.
fn contrastive() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let one = unit_rows(1, 4, &mut rng);
    let single = loss_for(&one, &unit_rows(1, 4, &mut rng), 2.6, 1.1);
    let id = Matrix::<f64>::identity(2);
    let pair = loss_for(&id, &id, 0.0, 0.0);
    let closed = (1.0 + (-1.0f64).exp()).ln();
    let mut worst_swap = 0.0f64;
    let mut worst_perm = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..9);
        let d = rng.random_range(2..7);
        let a = unit_rows(n, d, &mut rng);
        let t = unit_rows(n, d, &mut rng);
        let (s_a, s_t) = (rng.random_range(-1.0..3.0), rng.random_range(-1.0..3.0));
        let base = loss_for(&a, &t, s_a, s_t);
        worst_swap = worst_swap.max((base - loss_for(&t, &a, s_t, s_a)).abs());
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let permuted = loss_for(&a.select_rows(&perm), &t.select_rows(&perm), s_a, s_t);
        worst_perm = worst_perm.max((base - permuted).abs());
    }
    outcome(
        single == 0.0
            && (pair - 0.31326).abs() <= 1e-5
            && (pair - closed).abs() < 1e-12
            && worst_swap <= 1e-9
            && worst_perm <= 1e-9,
        format!(
            "N=1 {single}, N=2 {pair:.6}, swap Δ {worst_swap:.1e}, permutation Δ {worst_perm:.1e}"
        ),
    )
}

/// Collapse repeats, then drop blanks (symbol 0).
fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != 0 {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Total probability of `target` by enumerating all V^T paths.
fn enumerate(logprobs: &Matrix<f64>, target: &[usize]) -> f64 {
    let (t, v) = logprobs.shape();
    let mut total = 0.0;
    let mut path = vec![0usize; t];
    for code in 0..v.pow(t as u32) {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % v;
            c /= v;
        }
        if collapse(&path) == target {
            total += path
                .iter()
                .enumerate()
                .map(|(i, &s)| logprobs[(i, s)])
                .sum::<f64>()
                .exp();
        }
    }
    total
}

// 3. CTC forward algorithm against exhaustive enumeration.
fn ctc_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut compared, mut infeasible, mut worst) = (0, 0, 0.0f64);
    let mut ok = true;
    while compared < 600 {
        let t = rng.random_range(1..=6);
        let v = rng.random_range(2..=4);
        let len = rng.random_range(1..=3);
        let target: Vec<usize> = (0..len).map(|_| rng.random_range(1..v)).collect();
        let logprobs = random(t, v, &mut rng).map(|x| 3.0 * x).log_softmax_rows();
        let brute = enumerate(&logprobs, &target);
        match ctc_loss(&logprobs, &target) {
            Ok(loss) => {
                compared += 1;
                let diff = (loss + brute.ln()).abs();
                worst = worst.max(diff);
                ok &= brute > 0.0 && diff <= 1e-8;
            }
            Err(_) => {
                infeasible += 1;
                ok &= brute == 0.0;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ok && compared >= 500 && secs < 60.0,
        format!("{compared} feasible instances (max log-space Δ {worst:.1e}), {infeasible} infeasible with zero mass, {secs:.2}s"),
    )
}

// 4. Metrics oracle.
fn metrics_oracle() -> Outcome {
    let cm = ConfusionMatrix::from_indices(2, &[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
    let m = compute_metrics(&cm).unwrap();
    let hand = (m.accuracy - 0.75).abs() < 1e-12 && (m.macro_f1 - 0.73333).abs() < 1e-5;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let k = rng.random_range(2..7);
        let counts: Vec<Vec<u64>> = (0..k)
            .map(|_| {
                (0..k)
                    .map(|_| {
                        if rng.random_bool(0.3) {
                            0
                        } else {
                            rng.random_range(0..20)
                        }
                    })
                    .collect()
            })
            .collect();
        let report =
            compute_metrics(&ConfusionMatrix::from_counts(counts.clone()).unwrap()).unwrap();
        let total: u64 = counts.iter().flatten().sum();
        let diag: u64 = (0..k).map(|i| counts[i][i]).sum();
        let mut sums = [0.0f64; 3];
        for c in 0..k {
            let tp = counts[c][c] as f64;
            let predicted: u64 = (0..k).map(|r| counts[r][c]).sum();
            let support: u64 = counts[c].iter().sum();
            let p = if predicted == 0 {
                0.0
            } else {
                tp / predicted as f64
            };
            let r = if support == 0 {
                0.0
            } else {
                tp / support as f64
            };
            let f = if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            };
            sums[0] += p;
            sums[1] += r;
            sums[2] += f;
        }
        let acc = if total == 0 {
            0.0
        } else {
            diag as f64 / total as f64
        };
        let kf = k as f64;
        for (got, want) in [
            (report.accuracy, acc),
            (report.macro_precision, sums[0] / kf),
            (report.macro_recall, sums[1] / kf),
            (report.macro_f1, sums[2] / kf),
        ] {
            worst = worst.max((got - want).abs());
        }
    }
    outcome(
        hand && worst <= 1e-9,
        format!(
            "2-class accuracy {:.2}, macro F1 {:.5}; 20 random matrices max Δ {worst:.1e}",
            m.accuracy, m.macro_f1
        ),
    )
}

fn synth_spec(spread_factor: f64) -> SynthSpec {
    let mut spec = SynthSpec::from_json(
        r#"{"preset": "ds1-like", "n_speakers": 10, "n_words": 12, "repeats": 4,
            "correct_rate": 0.9, "mispronounce_mode": "swap"}"#,
    )
    .unwrap();
    spec.cluster_spread *= spread_factor;
    spec
}

fn run_cv(dir: &Path, spec: &SynthSpec, objective: Objective) -> CvSummary {
    let g = generate(spec, dir).unwrap();
    let corpus = Corpus::from_manifest(&g.manifest, objective == Objective::Ctc).unwrap();
    let provider = FileBackedProvider::load(&g.prompt_manifest).unwrap();
    let config = TrainConfig::for_objective(objective, 17);
    crossval(&config, &corpus, Some(&provider), 1).unwrap()
}

// 5. Synthetic end-to-end.
fn end_to_end(scratch: &Path) -> (Outcome, Vec<CvSummary>) {
    let start = Instant::now();
    let small = synth_spec(1.0);
    let wide = synth_spec(5.0);
    let matcher = run_cv(&scratch.join("e2e"), &small, Objective::Matcher);
    let classifier = run_cv(&scratch.join("e2e"), &small, Objective::Classifier);
    let matcher_wide = run_cv(&scratch.join("e2e_wide"), &wide, Objective::Matcher);
    let classifier_wide = run_cv(&scratch.join("e2e_wide"), &wide, Objective::Classifier);
    let secs = start.elapsed().as_secs_f64();
    let (m, c) = (matcher.accuracy.mean, classifier.accuracy.mean);
    let (mw, cw) = (matcher_wide.accuracy.mean, classifier_wide.accuracy.mean);
    let o = outcome(
        m >= 0.95 && c >= 0.95 && mw >= cw - 0.02 && secs < 600.0,
        format!("matcher {m:.4}, classifier {c:.4}; 5x spread matcher {mw:.4} vs classifier {cw:.4}; {secs:.1}s single-threaded"),
    );
    (o, vec![matcher, classifier])
}

fn validation_schedule_ok(r: &TrainReport) -> bool {
    let epochs: Vec<usize> = r.validation.iter().map(|v| v.epoch).collect();
    let full: Vec<usize> = (1..=6).map(|k| 5 * k).collect();
    let prefix = !epochs.is_empty() && full.starts_with(&epochs);
    let ends = epochs.last() == Some(&r.stopped_epoch);
    let complete_when_not_stopped = r.stopped_epoch != 30 || epochs == full;
    let best = match r.selection_metric {
        SelectionMetric::MacroF1 => r
            .validation
            .iter()
            .map(|v| v.metric)
            .fold(f64::NEG_INFINITY, f64::max),
        SelectionMetric::Wer => r
            .validation
            .iter()
            .map(|v| v.metric)
            .fold(f64::INFINITY, f64::min),
    };
    prefix && ends && complete_when_not_stopped && best == r.best_metric
}

// 6. Protocol conformance from emitted TrainReports.
fn protocol(scratch: &Path, summaries: &[CvSummary]) -> Outcome {
    let mut problems = Vec::new();
    for s in summaries {
        let speakers: Vec<&str> = s
            .folds
            .iter()
            .map(|f| f.fold.test_speaker.as_str())
            .collect();
        let mut unique = speakers.clone();
        unique.sort();
        unique.dedup();
        if unique.len() != speakers.len() || speakers.len() != 10 {
            problems.push(format!(
                "{}: {} folds over {} speakers",
                s.objective,
                speakers.len(),
                unique.len()
            ));
        }
        for f in &s.folds {
            let lrs: Vec<f64> = f.runs.iter().map(|r| r.lr).collect();
            if lrs != DEFAULT_LR_GRID {
                problems.push(format!(
                    "{} fold {}: lr runs {lrs:?}",
                    s.objective, f.fold.index
                ));
            }
            if f.runs
                .iter()
                .any(|r| r.selection_metric != SelectionMetric::MacroF1)
            {
                problems.push(format!(
                    "{} fold {}: not selected by F1",
                    s.objective, f.fold.index
                ));
            }
            let best = f
                .runs
                .iter()
                .map(|r| r.best_metric)
                .fold(f64::NEG_INFINITY, f64::max);
            let expected = f
                .runs
                .iter()
                .filter(|r| r.best_metric == best)
                .map(|r| r.lr)
                .fold(f64::INFINITY, f64::min);
            if f.selected_lr != expected {
                problems.push(format!(
                    "{} fold {}: selected {} not {expected}",
                    s.objective, f.fold.index, f.selected_lr
                ));
            }
            if !f.runs.iter().all(validation_schedule_ok) {
                problems.push(format!(
                    "{} fold {}: validation schedule",
                    s.objective, f.fold.index
                ));
            }
        }
    }

    // ASR path: training subsets hold correct-labeled entries only.
    let spec = SynthSpec {
        n_speakers: 4,
        n_words: 5,
        repeats: 2,
        correct_rate: 0.6,
        seed: 6,
        ..SynthSpec::default()
    };
    let g = generate(&spec, scratch.join("ctc")).unwrap();
    let corpus = Corpus::from_manifest(&g.manifest, true).unwrap();
    let mut config = TrainConfig::for_objective(Objective::Ctc, 6);
    config.max_epochs = 10;
    let ctc = crossval(&config, &corpus, None, 1).unwrap();
    let correct: BTreeMap<&str, bool> = corpus
        .entries()
        .iter()
        .map(|e| (e.recording_id.as_str(), e.correct))
        .collect();
    let mut ctc_runs = 0;
    for f in &ctc.folds {
        for r in &f.runs {
            ctc_runs += 1;
            let expected = corpus
                .entries()
                .iter()
                .filter(|e| {
                    e.correct
                        && e.speaker_id != f.fold.test_speaker
                        && e.speaker_id != f.fold.val_speaker
                })
                .count();
            if r.train_recordings.iter().any(|id| !correct[id.as_str()])
                || r.train_recordings.len() + r.infeasible_skipped != expected
            {
                problems.push(format!("ctc fold {}: training subset", f.fold.index));
            }
            if r.selection_metric != SelectionMetric::Wer || !validation_schedule_ok(r) {
                problems.push(format!("ctc fold {}: validation", f.fold.index));
            }
        }
    }
    let detail = if problems.is_empty() {
        format!(
            "{} matcher/classifier folds with lr grid {DEFAULT_LR_GRID:?}; {ctc_runs} ctc runs on correct-only subsets",
            summaries.iter().map(|s| s.folds.len()).sum::<usize>()
        )
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

fn without_timestamp(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["metadata"]["generated_unix_secs"] = serde_json::Value::Null;
    v
}

// 7. Determinism of the crossval command.
fn determinism(scratch: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_namegate");
    let data = scratch.join("det");
    std::fs::create_dir_all(&data).unwrap();
    let spec = data.join("spec.json");
    std::fs::write(
        &spec,
        r#"{"n_speakers": 4, "n_words": 6, "repeats": 2, "seed": 11}"#,
    )
    .unwrap();
    let gen = Command::new(bin)
        .args(["gen-synth", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&data)
        .output()
        .unwrap();
    if !gen.status.success() {
        return outcome(
            false,
            format!("gen-synth failed: {}", String::from_utf8_lossy(&gen.stderr)),
        );
    }
    let mut summaries = Vec::new();
    for (run, jobs) in [("a", "1"), ("b", "4")] {
        let out = data.join(run);
        let status = Command::new(bin)
            .args(["crossval", "--config"])
            .arg(data.join("config.json"))
            .arg("--out")
            .arg(&out)
            .args(["--jobs", jobs])
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(
                false,
                format!(
                    "crossval failed: {}",
                    String::from_utf8_lossy(&status.stderr)
                ),
            );
        }
        summaries.push(out.join("summary.json"));
    }
    let raw: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summaries[0]).unwrap()).unwrap();
    let stamped = raw["metadata"]["generated_unix_secs"].is_u64();
    let a = without_timestamp(&summaries[0]);
    let b = without_timestamp(&summaries[1]);
    let same_json = serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap();
    let csv_same = std::fs::read(data.join("a/summary.csv")).unwrap()
        == std::fs::read(data.join("b/summary.csv")).unwrap();
    outcome(
        same_json && csv_same && stamped,
        "two crossval runs (1 and 4 jobs) give identical summary JSON apart from the timestamp, and identical CSV",
    )
}

// 8. Layer sweep on the constructed synthetic sweep.
fn sweep(scratch: &Path) -> Outcome {
    let spec = SynthSpec {
        layer_sweep: Some(LayerSweepSpec {
            layers: vec![4, 8, 12, 16, 20],
            best_layer: 12,
            base_noise: 0.0,
            noise_slope: 0.15,
        }),
        seed: 8,
        ..SynthSpec::default()
    };
    let g = generate(&spec, scratch.join("sweep")).unwrap();
    let layers: BTreeMap<u32, Corpus> = g
        .truth
        .layer_manifests
        .iter()
        .map(|(k, p)| {
            (
                *k,
                Corpus::from_manifest(scratch.join("sweep").join(p), false).unwrap(),
            )
        })
        .collect();
    let config = TrainConfig::for_objective(Objective::Classifier, 8);
    let report = layer_sweep(&layers, &config, 4).unwrap();
    let ranking: Vec<String> = report
        .ranking
        .iter()
        .map(|r| format!("{}:{:.3}", r.layer, r.accuracy.mean))
        .collect();
    outcome(
        report.best_layer() == 12,
        format!("ranking {}", ranking.join(" ")),
    )
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let mut results: Vec<(u8, &str, Outcome)> = vec![
        (1, "gradient suite", gradients()),
        (2, "contrastive-loss oracles", contrastive()),
        (3, "CTC oracle equivalence", ctc_oracle()),
        (4, "metrics oracle", metrics_oracle()),
    ];
    let (e2e, summaries) = end_to_end(scratch.path());
    results.push((5, "synthetic end-to-end", e2e));
    results.push((
        6,
        "protocol conformance",
        protocol(scratch.path(), &summaries),
    ));
    results.push((7, "determinism", determinism(scratch.path())));
    results.push((8, "layer sweep", sweep(scratch.path())));

    let mut failed = 0;
    for (id, name, o) in &results {
        println!(
            "criterion {id} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
