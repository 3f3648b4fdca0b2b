//! End-to-end run on the synthetic 12-class benchmark.
//!
//! `cargo run --release -p ozsl --example desk_scale [iterations]`

use std::time::Instant;

use ozsl::linalg::euclidean;
use ozsl::metrics::EvalReport;
use ozsl::pipeline::{prepare_classifier, EvalConfig, Rejector, SWEEP_TAILS};
use ozsl::protocol::{apply_manifest, generate_synthetic, make_split, Holdout, Regime, SyntheticSpec};
use ozsl::report::render_table;
use ozsl::vacwgan::{synthesize_features, train, TrainConfig};

fn main() -> ozsl::Result<()> {
    let mut config = TrainConfig::desk_scale();
    if let Some(n) = std::env::args().nth(1).and_then(|a| a.parse().ok()) {
        config.iterations = n;
    }
    let started = Instant::now();

    let spec = SyntheticSpec::default();
    let data = generate_synthetic(&spec)?;
    let manifest = make_split(&data.base, Regime::FiftyFifty, spec.seed)?;
    let (train_view, test_view) = apply_manifest(&data.dataset, &manifest, Holdout::default())?;

    let (models, history) = train(&train_view.dataset, &config)?;
    let last = history.last().expect("at least one iteration");
    println!(
        "trained {} iterations in {:.1?}: W={:.4} gp={:.4} cls={:.4}",
        config.iterations,
        started.elapsed(),
        last.wasserstein,
        last.gp,
        last.cls
    );

    let known = manifest.known_classes();
    let n = 500;
    let generated = synthesize_features(&models, &train_view.dataset, &known, n, 1)?;
    for (k, name) in known.iter().enumerate() {
        let rows: Vec<usize> = (k * n..(k + 1) * n).collect();
        let mean = generated.features.select_rows(&rows)?.mean_rows();
        let truth = data.class_means.row(data.dataset.class_index(name).expect("registered"));
        let role = if manifest.seen.contains(name) { "seen" } else { "unseen" };
        println!("{name} {role:6} mean gap {:.3} σ", euclidean(mean.data(), truth) / spec.spread);
    }

    let mut reports: Vec<EvalReport> = Vec::new();
    for unknown_gen in [false, true] {
        for rejector in [Rejector::Softmax, Rejector::Openmax] {
            let eval = EvalConfig { rejector, unknown_gen, ..EvalConfig::default() };
            let prepared = prepare_classifier(&models, &train_view, &eval)?;
            let label = format!("{rejector:?}{}", if unknown_gen { "+unknown" } else { "" });
            reports.push(prepared.evaluate(&test_view, &manifest, &eval, &label)?);
            if rejector == Rejector::Openmax && !unknown_gen {
                reports.extend(prepared.tail_sweep(&test_view, &manifest, &eval, SWEEP_TAILS)?);
            }
        }
    }
    print!("{}", render_table(&reports));
    println!("total {:.1?}", started.elapsed());
    Ok(())
}
