//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Trained models are shared between the criteria that need them, so the
//! whole run trains 16 desk-scale models plus a few short timing runs.

use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use tgxplain::bottleneck::{compression_loss, sample_mask};
use tgxplain::disentangler::split_values;
use tgxplain::event_store::{chronological_split, EventStream, SplitIndex};
use tgxplain::evaluator::{
    average_precision, evaluate, evenly_spaced, explain_queries, model_truth_auc, mrr, reciprocal_rank, sparsity_report,
    EvalOptions, EvalReport, Explainer, RecurrenceScorer,
};
use tgxplain::model::ModelConfig;
use tgxplain::params::{Group, ParamId};
use tgxplain::rng::substream;
use tgxplain::synthetic::{generate, GenConfig, PlantedTruth};
use tgxplain::trainer::{
    batch_gradients, fit, fit_with, load_checkpoint, run_epoch, save_checkpoint, with_negatives, ModelState, TrainConfig,
};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fmt(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

struct Data {
    stream: EventStream,
    split: SplitIndex,
    truth: PlantedTruth,
}

fn dataset(cfg: &GenConfig) -> Data {
    let (stream, truth) = generate(cfg).expect("generator config is valid");
    let split = chronological_split(&stream).expect("stream is long enough");
    Data { stream, split, truth }
}

struct Trained {
    report: EvalReport,
    seconds: f64,
    random_acc_auc: f64,
    random_truth_auc: f64,
}

fn train_desk(data: &Data, seed: u64, beta: f64, gamma: f64) -> ModelState {
    let cfg = TrainConfig {
        seed,
        beta,
        gamma,
        allow_out_of_range: beta == 0.0 || gamma == 0.0,
        ..TrainConfig::desk()
    };
    fit(&data.stream, &data.split, cfg).expect("training succeeds")
}

fn train_and_evaluate(data: &Data, seed: u64, beta: f64, gamma: f64) -> Trained {
    let t0 = Instant::now();
    let state = train_desk(data, seed, beta, gamma);
    let opts = EvalOptions::default();
    let report = evaluate(&state.model, &data.stream, &data.split, Some(&data.truth), &opts).expect("evaluation succeeds");
    let queries = explain_queries(&data.stream, &data.split, opts.seed, opts.explain_limit);
    let random = Explainer::Random { seed };
    let random_acc_auc = sparsity_report(&state.model, &data.stream, &queries, random).expect("sparsity").acc_auc;
    let events = evenly_spaced(data.split.test.clone(), opts.explain_limit);
    let random_truth_auc = model_truth_auc(&state.model, &data.stream, &data.truth, &events, random).expect("truth auc");
    eprintln!(
        "  trained seed={seed} beta={beta} gamma={gamma}: epochs={} ap={:.4} mrr={:.4} truth={:.4} acc={:.4} random_acc={random_acc_auc:.4} ({:.0}s)",
        state.epoch,
        report.ap,
        report.mrr,
        report.explanation_truth_auc.unwrap_or(f64::NAN),
        report.acc_auc,
        t0.elapsed().as_secs_f64()
    );
    Trained {
        report,
        seconds: t0.elapsed().as_secs_f64(),
        random_acc_auc,
        random_truth_auc,
    }
}

/// Brute-force KL between the factorized mask distribution and the prior.
fn kl_by_enumeration(p: &[f64], r: f64) -> f64 {
    let l = p.len();
    let mut kl = 0.0;
    for z in 0u32..(1 << l) {
        let (mut lp, mut lq) = (0.0, 0.0);
        for (i, &pi) in p.iter().enumerate() {
            if z >> i & 1 == 1 {
                lp += pi.ln();
                lq += r.ln();
            } else {
                lp += (1.0 - pi).ln();
                lq += (1.0 - r).ln();
            }
        }
        kl += lp.exp() * (lp - lq);
    }
    kl
}

fn kl_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for l in 1..=10 {
        for _ in 0..200 {
            let p: Vec<f64> = (0..l).map(|_| rng.random_range(0.01..0.99)).collect();
            let r = rng.random_range(0.05..0.95);
            let real = vec![true; l];
            let got = compression_loss(&p, &real, r).expect("rate in range");
            worst = worst.max((got - kl_by_enumeration(&p, r)).abs());
        }
    }
    outcome("compression KL equals enumeration (L=1..10, 2000 instances)", worst <= 1e-9, format!("max abs err {worst:.2e} (tol 1e-9)"))
}

fn gradient_check() -> Outcome {
    let (stream, _) = generate(&GenConfig {
        num_events: 300,
        num_nodes: 30,
        num_motif_pairs: 5,
        ..GenConfig::default()
    })
    .expect("generator");
    let split = chronological_split(&stream).expect("split");
    let cfg = TrainConfig {
        model: ModelConfig {
            d: 8,
            d_t: 4,
            d_r: 4,
            l: 6,
            dropout: 0.3,
            ..ModelConfig::default()
        },
        allow_out_of_range: true,
        ..TrainConfig::default()
    };
    let mut state = ModelState::new(cfg, stream.d_n(), stream.d_e()).expect("state");
    let batch = with_negatives(&stream, split.train.start + 50..split.train.start + 52, 0, "fd", 0);
    let (beta, gamma, r, h) = (0.4, 0.6, 0.8, 1e-6);
    let objective = |st: &ModelState| batch_gradients(&st.model, &stream, &batch, beta, gamma, r, 0, [0, 0]).expect("batch").report.total;
    let grads = batch_gradients(&state.model, &stream, &batch, beta, gamma, r, 0, [0, 0]).expect("batch");
    let ids: Vec<ParamId> = state.model.store.ids().collect();
    let mut worst: f64 = 0.0;
    let mut worst_name = String::new();
    for id in ids {
        let shape = state.model.store.get(id).raw_dim();
        let analytic = if state.model.store.group(id) == Group::Discriminator {
            grads.disc.get(id).map(|g| g * -gamma)
        } else {
            grads.model.get(id).cloned()
        }
        .unwrap_or_else(|| Array2::zeros(shape));
        let mut numeric = Array2::zeros(analytic.raw_dim());
        for ((i, j), slot) in numeric.indexed_iter_mut() {
            let orig = state.model.store.get(id)[[i, j]];
            state.model.store.get_mut(id)[[i, j]] = orig + h;
            let up = objective(&state);
            state.model.store.get_mut(id)[[i, j]] = orig - h;
            let down = objective(&state);
            state.model.store.get_mut(id)[[i, j]] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let norm = |a: &Array2<f64>| a.mapv(|x| x * x).sum().sqrt();
        let rel = norm(&(&analytic - &numeric)) / norm(&analytic).max(norm(&numeric)).max(1e-12);
        if rel > worst {
            worst = rel;
            worst_name = state.model.store.name(id).to_string();
        }
    }
    outcome(
        "full-chain gradients match central differences (d=8, L=6, batch 4)",
        worst <= 1e-4,
        format!("worst relative error {worst:.2e} in {worst_name} (tol 1e-4)"),
    )
}

fn hard_mask_distribution() -> Outcome {
    let critical = ChiSquared::new(1.0).expect("dof").inverse_cdf(1.0 - 0.001);
    let n = 100_000;
    let mut stats = Vec::new();
    for (k, &p) in [0.1, 0.5, 0.9].iter().enumerate() {
        let mut rng = substream(5, "hard-mask", &[k as u64]);
        let probs = vec![p; 1000];
        let real = vec![true; 1000];
        let mut ones = 0usize;
        for _ in 0..n / 1000 {
            ones += sample_mask(&probs, &real, 1.0, &mut rng).m_hard.iter().filter(|&&b| b).count();
        }
        let (e1, e0) = (n as f64 * p, n as f64 * (1.0 - p));
        let o1 = ones as f64;
        let o0 = n as f64 - o1;
        stats.push((o1 - e1).powi(2) / e1 + (o0 - e0).powi(2) / e0);
    }
    let pass = stats.iter().all(|&s| s < critical);
    outcome(
        "hard masks are Bernoulli(p) (chi-squared, alpha 0.001, 1e5 draws)",
        pass,
        format!("chi2 for p=0.1,0.5,0.9 {} (critical {critical:.3})", fmt(&stats)),
    )
}

fn mask_split_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0usize;
    let n = 1_000_000;
    for _ in 0..n {
        let p: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        let real = [true];
        let mut noise_rng = substream(rng.random(), "split", &[]);
        let m = sample_mask(&[p], &real, 1.0, &mut noise_rng).m_soft[0];
        let p_f: f64 = rng.random();
        let (ws, wt) = split_values(m, p_f);
        if (ws + wt).to_bits() != m.to_bits() {
            failures += 1;
        }
    }
    outcome(
        "stability and transition weights sum to the mask bitwise",
        failures == 0,
        format!("{failures} mismatches in {n} (p, noise, p_f) triples"),
    )
}

/// Quadratic AP: each positive's precision at its own position in the
/// descending order (ties broken by input order).
fn ap_quadratic(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    let ahead = |j: usize, i: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
    let mut total = 0.0;
    let mut positives = 0.0;
    for i in (0..n).filter(|&i| labels[i]) {
        let rank = (0..n).filter(|&j| ahead(j, i)).count() as f64;
        let hits = (0..n).filter(|&j| labels[j] && ahead(j, i)).count() as f64;
        total += hits / rank;
        positives += 1.0;
    }
    total / positives
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst_ap: f64 = 0.0;
    for _ in 0..2000 {
        let n = rng.random_range(2..=50);
        let levels = rng.random_range(2..20);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let got = average_precision(&scores, &labels).expect("has positives");
        worst_ap = worst_ap.max((got - ap_quadratic(&scores, &labels)).abs());
    }
    // true destination ranked 1st, 2nd, 4th, then tied with one negative for 1st
    let cases: [(f64, &[f64], f64); 4] = [
        (0.9, &[0.1, 0.2, 0.3], 1.0),
        (0.5, &[0.9, 0.1, 0.2], 0.5),
        (0.5, &[0.9, 0.8, 0.7, 0.1], 0.25),
        (0.7, &[0.7, 0.1], 1.0 / 1.5),
    ];
    let mut worst_rr: f64 = 0.0;
    for (pos, negs, want) in cases {
        worst_rr = worst_rr.max((reciprocal_rank(pos, negs) - want).abs());
    }
    let mrr_three = (reciprocal_rank(0.9, cases[0].1) + reciprocal_rank(0.5, cases[1].1) + reciprocal_rank(0.5, cases[2].1)) / 3.0;
    worst_rr = worst_rr.max((mrr_three - 7.0 / 12.0).abs());
    outcome(
        "AP matches quadratic oracle and MRR matches hand-built ranks",
        worst_ap <= 1e-12 && worst_rr <= 1e-12,
        format!("AP max err {worst_ap:.2e}, MRR max err {worst_rr:.2e} (tol 1e-12)"),
    )
}

fn epoch_seconds(data: &Data, l: usize) -> f64 {
    let cfg = TrainConfig {
        max_epochs: 10,
        model: ModelConfig { l, ..TrainConfig::desk().model },
        allow_out_of_range: true,
        ..TrainConfig::desk()
    };
    let mut state = ModelState::new(cfg, data.stream.d_n(), data.stream.d_e()).expect("state");
    run_epoch(&mut state, &data.stream, &data.split).expect("warm-up epoch");
    let mut times = Vec::new();
    for _ in 0..3 {
        let t0 = Instant::now();
        run_epoch(&mut state, &data.stream, &data.split).expect("epoch");
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    times[1]
}

fn complexity_scaling() -> Outcome {
    let small = dataset(&GenConfig {
        num_events: 1500,
        ..GenConfig::default()
    });
    let double = dataset(&GenConfig {
        num_events: 3000,
        ..GenConfig::default()
    });
    let (t64, t128) = (epoch_seconds(&small, 64), epoch_seconds(&small, 128));
    let (te, t2e) = (epoch_seconds(&small, 20), epoch_seconds(&double, 20));
    let (rl, re) = (t128 / t64, t2e / te);
    outcome(
        "epoch time scales with window length and stream length",
        (2.5..=5.5).contains(&rl) && (1.7..=2.5).contains(&re),
        format!("L128/L64 = {rl:.2} (want 2.5..5.5), 2E/E = {re:.2} (want 1.7..2.5)"),
    )
}

fn reproducibility() -> Outcome {
    let data = dataset(&GenConfig {
        num_events: 1200,
        seed: 4,
        ..GenConfig::default()
    });
    let cfg = TrainConfig {
        max_epochs: 4,
        ..TrainConfig::desk()
    };
    let a = fit(&data.stream, &data.split, cfg.clone()).expect("run a");
    let b = fit(&data.stream, &data.split, cfg.clone()).expect("run b");
    let logs_identical = a.log_csv() == b.log_csv() && a.log.len() == 4;

    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("run.ckpt");
    let fresh = ModelState::new(cfg.clone(), data.stream.d_n(), data.stream.d_e()).expect("state");
    let paused = fit_with(fresh, &data.stream, &data.split, |s| Ok(s.epoch < 2)).expect("first half");
    save_checkpoint(&paused, &path).expect("save");
    let resumed = fit_with(load_checkpoint(&path).expect("load"), &data.stream, &data.split, |_| Ok(true)).expect("second half");
    let mut max_diff: f64 = 0.0;
    for id in a.model.store.ids() {
        let d = (a.model.store.get(id) - resumed.model.store.get(id)).mapv(f64::abs).fold(0.0, |m: f64, &x| m.max(x));
        max_diff = max_diff.max(d);
    }
    let opts = EvalOptions {
        explain_limit: Some(50),
        ..EvalOptions::default()
    };
    let final_a = evaluate(&a.model, &data.stream, &data.split, None, &opts).expect("eval a");
    let final_r = evaluate(&resumed.model, &data.stream, &data.split, None, &opts).expect("eval resumed");
    let metric_diff = [
        final_a.ap - final_r.ap,
        final_a.mrr - final_r.mrr,
        final_a.acc_auc - final_r.acc_auc,
        a.best.as_ref().map_or(0.0, |b| b.val_ap) - resumed.best.as_ref().map_or(0.0, |b| b.val_ap),
    ]
    .iter()
    .fold(0.0, |m: f64, d| m.max(d.abs()));
    outcome(
        "identical seeds give identical logs and resume matches",
        logs_identical && resumed.log_csv() == a.log_csv() && metric_diff <= 1e-6,
        format!("logs identical: {logs_identical}, resumed final metrics max diff {metric_diff:.2e} (tol 1e-6), max param diff {max_diff:.2e}"),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results = Vec::new();
    let mut record = |o: Outcome| {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        results.push(o);
    };

    // optional filters: `cargo test --test acceptance -- kl gradients`
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let want = |key: &str| filters.is_empty() || filters.iter().any(|f| key.contains(f.as_str()));
    let quick: [(&str, fn() -> Outcome); 7] = [
        ("kl", kl_oracle),
        ("gradients", gradient_check),
        ("hard-mask", hard_mask_distribution),
        ("split", mask_split_identity),
        ("metrics", metric_oracles),
        ("reproducibility", reproducibility),
        ("scaling", complexity_scaling),
    ];
    for (key, check) in quick {
        if want(key) {
            record(check());
        }
    }
    if want("trained") {
        trained_criteria(&mut record);
    }
    if want("seen-unseen") {
        record(seen_unseen());
    }

    let failed = results.iter().filter(|o| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed ({:.0}s)",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn trained_criteria(record: &mut impl FnMut(Outcome)) {
    let data = dataset(&GenConfig::default());
    let full: Vec<Trained> = SEEDS.iter().map(|&s| train_and_evaluate(&data, s, 1.0, 0.4)).collect();
    let aps: Vec<f64> = full.iter().map(|t| t.report.ap).collect();
    let mrrs: Vec<f64> = full.iter().map(|t| t.report.mrr).collect();
    let slowest = full.iter().map(|t| t.seconds).fold(0.0, f64::max);
    record(outcome(
        "predictive quality on the planted stream (5 seeds)",
        mean(&aps) >= 0.90 && mean(&mrrs) >= 0.35 && slowest <= 900.0,
        format!(
            "mean AP {:.4} (>= 0.90) {}, mean MRR {:.4} (>= 0.35) {}, slowest seed {slowest:.0}s (<= 900s)",
            mean(&aps),
            fmt(&aps),
            mean(&mrrs),
            fmt(&mrrs)
        ),
    ));

    let truth: Vec<f64> = full.iter().map(|t| t.report.explanation_truth_auc.expect("truth given")).collect();
    let random_truth: Vec<f64> = full.iter().map(|t| t.random_truth_auc).collect();
    record(outcome(
        "explanations recover planted causes",
        mean(&truth) >= 0.80 && mean(&random_truth) <= 0.55,
        format!("mean truth AUC {:.4} (>= 0.80) {}, random {:.4} (<= 0.55)", mean(&truth), fmt(&truth), mean(&random_truth)),
    ));

    let no_dis: Vec<Trained> = SEEDS.iter().map(|&s| train_and_evaluate(&data, s, 1.0, 0.0)).collect();
    let no_com: Vec<Trained> = SEEDS.iter().map(|&s| train_and_evaluate(&data, s, 0.0, 0.4)).collect();
    let ap_no_dis: Vec<f64> = no_dis.iter().map(|t| t.report.ap).collect();
    let truth_no_com: Vec<f64> = no_com.iter().map(|t| t.report.explanation_truth_auc.expect("truth given")).collect();
    record(outcome(
        "ablations: disentanglement helps AP, compression helps truth AUC",
        mean(&aps) > mean(&ap_no_dis) && mean(&truth) > mean(&truth_no_com),
        format!(
            "AP full {:.4} vs gamma=0 {:.4} {}; truth AUC full {:.4} vs beta=0 {:.4} {}",
            mean(&aps),
            mean(&ap_no_dis),
            fmt(&ap_no_dis),
            mean(&truth),
            mean(&truth_no_com),
            fmt(&truth_no_com)
        ),
    ));

    let acc: Vec<f64> = full.iter().map(|t| t.report.acc_auc).collect();
    let random_acc: Vec<f64> = full.iter().map(|t| t.random_acc_auc).collect();
    let monotone = full.iter().all(|t| {
        let sp = t.report.sparsity.as_ref().expect("sparsity computed");
        sp.fid_minus.windows(2).all(|w| w[1] >= w[0])
    });
    record(outcome(
        "learned explanations beat random ones and fid- is monotone",
        mean(&acc) >= mean(&random_acc) + 0.05 && monotone,
        format!(
            "ACC-AUC learned {:.4} {} vs random {:.4} {} (want gap >= 0.05), fid- monotone: {monotone}",
            mean(&acc),
            fmt(&acc),
            mean(&random_acc),
            fmt(&random_acc)
        ),
    ));
}

fn seen_unseen() -> Outcome {
    let seen_data = dataset(&GenConfig {
        repeat_ratio: 0.6,
        seed: 1,
        ..GenConfig::default()
    });
    let base = mrr(&RecurrenceScorer, &seen_data.stream, seen_data.split.test.clone(), 100, 0).expect("baseline mrr");
    let state = train_desk(&seen_data, 0, 1.0, 0.4);
    let model = mrr(&state.model, &seen_data.stream, seen_data.split.test.clone(), 100, 0).expect("model mrr");
    let gap = |s: Option<f64>, u: Option<f64>| {
        let (s, u) = (s.expect("seen queries exist"), u.expect("unseen queries exist"));
        (s - u) / s
    };
    let (gb, gm) = (gap(base.mrr_seen, base.mrr_unseen), gap(model.mrr_seen, model.mrr_unseen));
    let narrowing = 1.0 - gm / gb;
    outcome(
        "seen/unseen gap: recurrence favours seen pairs, model narrows the gap",
        base.mrr_seen > base.mrr_unseen && narrowing >= 0.20,
        format!(
            "recurrence seen {:.4} unseen {:.4} (rel gap {gb:.3}); model seen {:.4} unseen {:.4} (rel gap {gm:.3}); narrowing {:.1}% (>= 20%)",
            base.mrr_seen.unwrap_or(f64::NAN),
            base.mrr_unseen.unwrap_or(f64::NAN),
            model.mrr_seen.unwrap_or(f64::NAN),
            model.mrr_unseen.unwrap_or(f64::NAN),
            100.0 * narrowing
        ),
    )
}
