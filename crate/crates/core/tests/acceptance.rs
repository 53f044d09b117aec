//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. `cargo test -p mvr-core --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use common::suites::*;
use mvr_core::checkpoint::BEST_CHECKPOINT;
use mvr_core::data::*;
use mvr_core::losses::LossWeights;
use mvr_core::model::ModelConfig;
use mvr_core::retrieval::*;
use mvr_core::trainer::*;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn loss_oracle() -> Outcome {
    let draws = 120;
    let worst = (0..draws).map(loss_oracle_case).fold(0.0, f64::max);
    ensure(worst <= LOSS_TOL, || format!("max deviation {worst:e} over {draws} draws"))?;
    let (single, equal) = trivial_loss_values();
    ensure(single == [0.0, 0.0], || format!("N=1 losses {single:?}"))?;
    let ln4 = 4f64.ln();
    ensure(equal.iter().all(|l| (l - ln4).abs() <= 1e-9), || format!("all-equal losses {equal:?}"))?;
    Ok(format!("{draws} draws x {} temperatures, max deviation {worst:.1e}", TAUS.len()))
}

fn gradient_suite() -> Outcome {
    let seeds = 20;
    let mut worst = ("", 0.0f64);
    for seed in 0..seeds {
        for (name, err) in primitive_gradients(seed) {
            if err > worst.1 {
                worst = (name, err);
            }
        }
        let err = full_objective_gradient(seed);
        if err > worst.1 {
            worst = ("full objective", err);
        }
    }
    ensure(worst.1 <= GRAD_TOL, || format!("{} relative error {:e}", worst.0, worst.1))?;
    Ok(format!("{seeds} seeds, worst {} at {:.1e}", worst.0, worst.1))
}

fn metric_oracle() -> Outcome {
    let corpora = 150;
    for seed in 0..corpora {
        metric_oracle_case(seed)?;
    }
    let n = 20;
    let (r1, se, _, _) = random_recall_stats(n, 400);
    let expected = 1.0 / n as f64;
    ensure((r1 - expected).abs() <= 3.0 * se, || format!("random R@1 {r1:.4} vs {expected} (SE {se:.4})"))?;
    Ok(format!("{corpora} corpora exact; random R@1 {r1:.4} vs 1/n = {expected} (SE {se:.4})"))
}

fn architecture() -> Outcome {
    let seeds = 20;
    for seed in 0..seeds {
        linearity_and_endpoints(seed)?;
        parameter_isolation(seed)?;
    }
    Ok(format!("{seeds} seeds: grid linearity, endpoints, isolation"))
}

fn protocol_fidelity() -> Outcome {
    let parts = subset_partition(2000, 500, 4, 11).map_err(|e| e.to_string())?;
    let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
    all.sort_unstable();
    ensure(parts.iter().all(|p| p.len() == 500) && all == (0..2000).collect::<Vec<_>>(), || {
        "4-subset partition is not disjoint and exact".into()
    })?;

    let c = random_corpus(5, 60, 4, 6, true);
    let whole = eval_self_supervised(&c, 0.3, &EvalOptions::default()).map_err(|e| e.to_string())?;
    let single = EvalOptions {
        subset_size: Some(60),
        subset_count: 1,
        subset_seed: 17,
        ..EvalOptions::default()
    };
    let one = eval_self_supervised(&c, 0.3, &single).map_err(|e| e.to_string())?;
    ensure(whole == one, || "single full subset differs from whole corpus".into())?;

    let t = GenreTaxonomy::builtin();
    let labels: Vec<(&str, usize)> = t.original_labels().collect();
    for (label, class) in &labels {
        ensure(t.condense_labels(&[*label]).ok() == Some(Condensed::Class(*class)), || format!("{label} not mapped"))?;
    }
    ensure(t.num_classes() == 11, || format!("{} classes", t.num_classes()))?;
    let multi = t.condense_labels(&["Jazz", "Rock music"]).map_err(|e| e.to_string())?;
    ensure(multi == Condensed::RejectedMultiLabel(2), || format!("multi-label item gave {multi:?}"))?;
    Ok(format!(
        "partition exact, single subset identical, {} label strings -> {} classes, multi-label rejected",
        labels.len(),
        t.num_classes()
    ))
}

/// The seed-pinned desk run shared by the training criteria.
struct Run {
    outcome: TrainOutcome<f64>,
    report: RetrievalReport,
    dir: tempfile::TempDir,
    elapsed: Duration,
}

fn desk_run(data: &Dataset, weights: LossWeights) -> Result<Run, String> {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = TrainConfig {
        epochs: 30,
        seed: 1,
        loss_weights: weights,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..TrainConfig::default()
    };
    let outcome = train::<f64>(data, &ModelConfig::desk(), &config).map_err(|e| e.to_string())?;
    let corpus = embed_corpus(&outcome.best, data, Split::Val).map_err(|e| e.to_string())?;
    let report =
        alpha_sweep(&corpus, &alpha_grid(), &Protocol::BOTH, &EvalOptions::default()).map_err(|e| e.to_string())?;
    Ok(Run {
        outcome,
        report,
        dir,
        elapsed: started.elapsed(),
    })
}

fn series(report: &RetrievalReport, protocol: Protocol, k: usize) -> Result<Series, String> {
    report.series(protocol, k, SeriesDirection::Mean).map_err(|e| e.to_string())
}

fn controllability(main: &Run) -> Outcome {
    let n = main.report.corpus_size as f64;
    let r10 = series(&main.report, Protocol::Ssl, 10)?;
    let p10 = series(&main.report, Protocol::Genre, 10)?;
    let p1 = series(&main.report, Protocol::Genre, 1)?;
    let ssl_alpha = optimal_alpha_from_series(&r10);
    let genre_alpha = optimal_alpha_from_series(&p10);
    let best_r10 = r10.points.iter().find(|p| p.0 == ssl_alpha).map_or(0.0, |p| p.1);
    let baseline = 10.0 / n;
    ensure(best_r10 >= 5.0 * baseline, || format!("(a) R@10 {best_r10:.3} vs 5 x {baseline:.3}"))?;
    let gap = p1.points[10].1 - p1.points[0].1;
    ensure(gap >= 0.10, || format!("(b) P@1 gap {gap:.3}"))?;
    ensure(ssl_alpha < genre_alpha, || format!("(c) argmax R@10 {ssl_alpha} vs argmax P@10 {genre_alpha}"))?;
    ensure(main.elapsed <= Duration::from_secs(600), || format!("took {:?}", main.elapsed))?;
    Ok(format!(
        "(a) R@10 {best_r10:.3} = {:.1}x K/n; (b) P@1 {:.3} -> {:.3}; (c) argmax R@10 {ssl_alpha} < argmax P@10 {genre_alpha}; {:.1}s",
        best_r10 / baseline,
        p1.points[0].1,
        p1.points[10].1,
        main.elapsed.as_secs_f64()
    ))
}

fn ablation(main: &Run, ssl_only: &Run) -> Outcome {
    let semi = series(&main.report, Protocol::Genre, 1)?.points[10].1;
    let ssl = series(&ssl_only.report, Protocol::Genre, 1)?.points[10].1;
    let pure = ssl_only
        .outcome
        .log
        .epochs
        .iter()
        .all(|e| (e.val.total - (e.val.l_ssl_z + e.val.l_ssl_h)).abs() < 1e-12);
    ensure(pure, || "zeroed supervised weights still contribute to the total".into())?;
    ensure(ssl < semi, || format!("self-supervised P@1 {ssl:.3} vs semi-supervised {semi:.3}"))?;
    Ok(format!("P@1 at alpha=1: self-supervised {ssl:.3} < semi-supervised {semi:.3}"))
}

fn determinism(main: &Run, repeat: &Run) -> Outcome {
    for file in [BEST_CHECKPOINT, TRAIN_LOG_FILE] {
        let a = std::fs::read(main.dir.path().join(file)).map_err(|e| e.to_string())?;
        let b = std::fs::read(repeat.dir.path().join(file)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{file} differs between runs"))?;
    }
    let a = serde_json::to_string_pretty(&main.report).map_err(|e| e.to_string())?;
    let b = serde_json::to_string_pretty(&repeat.report).map_err(|e| e.to_string())?;
    ensure(a == b, || "sweep reports differ".into())?;
    Ok("checkpoint, log and report byte-identical".into())
}

fn main() {
    let mut results: Vec<(&str, Outcome, Duration)> = Vec::new();
    let mut timed = |name, limit: Option<u64>, f: &dyn Fn() -> Outcome| {
        let started = Instant::now();
        let mut out = f();
        let took = started.elapsed();
        if let (Ok(_), Some(limit)) = (&out, limit) {
            if took > Duration::from_secs(limit) {
                out = Err(format!("took {took:?}, limit {limit}s"));
            }
        }
        results.push((name, out, took));
    };
    timed("loss oracle", Some(10), &loss_oracle);
    timed("gradient suite", Some(60), &gradient_suite);
    timed("metric oracle", Some(30), &metric_oracle);
    timed("architecture invariants", None, &architecture);
    timed("protocol fidelity", None, &protocol_fidelity);

    let data = generate_synthetic(&SyntheticConfig::default()).expect("synthetic corpus");
    let main_run = desk_run(&data, LossWeights::default());
    let repeat = desk_run(&data, LossWeights::default());
    let ssl_only = desk_run(&data, LossWeights::self_supervised());
    let training = |f: &dyn Fn(&Run, &Run) -> Outcome, other: &Result<Run, String>| match (&main_run, other) {
        (Ok(a), Ok(b)) => f(a, b),
        (Err(e), _) | (_, Err(e)) => Err(format!("training failed: {e}")),
    };
    timed("controllability", None, &|| training(&|a, _| controllability(a), &main_run));
    timed("ablation", None, &|| training(&ablation, &ssl_only));
    timed("determinism", None, &|| training(&determinism, &repeat));

    let mut failed = 0;
    for (name, out, took) in &results {
        match out {
            Ok(detail) => println!("PASS {name}: {detail} [{:.2}s]", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{:.2}s]", took.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
