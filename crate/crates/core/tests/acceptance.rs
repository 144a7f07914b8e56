//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each, and exits non-zero if any failed.

use std::time::Instant;

use marginkd::losses::{
    combined_contrastive_loss, cross_entropy, gated_intra_loss, intra_tuplet_loss, kd_student_loss,
    kd_student_loss_combined, margin_of, teacher_total_loss, tuplet_loss, tuplet_value, Embedding, Margin,
};
use marginkd::negcache::negatives_excluding;
use marginkd::synthdata::{generate_multiview, MultiViewSpec};
use marginkd::theory::{
    empirical_distances, lambda_sweep, loss_lower_bounds, minimize_single_tuplet, minimize_tradeoff,
    random_embedder, theorem1_check, theorem2_bound_check, theorem2_constants, DistanceConfig, FreeEmbeddingConfig,
    SweepReport,
};
use marginkd::train::{mean_max_probability, train_teacher};
use marginkd::{grad_check, CacheConfig, CacheMode, Graph, NegativeCache, Tensor, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect()
}

fn simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

fn one_hot(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> Tensor {
    let mut d = vec![0.0; rows * k];
    for r in 0..rows {
        d[r * k + rng.random_range(0..k)] = 1.0;
    }
    Tensor::matrix(rows, k, d).unwrap()
}

fn simplex_rows(rng: &mut ChaCha8Rng, rows: usize, k: usize) -> Tensor {
    let r: Vec<Vec<f64>> = (0..rows).map(|_| simplex(rng, k)).collect();
    Tensor::from_rows(&r).unwrap()
}

const GRAD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (d, n, m, b, k) = (5, 4, 3, 3, 5);
    let mut worst = [0.0f64; 8];
    for _ in 0..100 {
        // Rows: anchor, positive, n inter negatives, m intra negatives.
        let emb = Tensor::from_rows(&unit_rows(&mut rng, 2 + n + m, d)).unwrap();
        let inter: Vec<usize> = (2..2 + n).collect();
        let intra: Vec<usize> = (2 + n..2 + n + m).collect();
        let logits = Tensor::from_rows(
            &(0..b).map(|_| (0..k).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>()).collect::<Vec<_>>(),
        )
        .unwrap();
        let y = one_hot(&mut rng, b, k);
        let p_t = simplex_rows(&mut rng, b, k);
        let alpha = rng.random::<f64>();
        let lambda = rng.random_range(0.01..2.0);

        let ce = grad_check(|g, x| cross_entropy(g.constant(y.clone()), x.softmax_rows()), &logits, GRAD_STEP);
        let kd = grad_check(
            |g, x| kd_student_loss(g.constant(y.clone()), g.constant(p_t.clone()), x.softmax_rows(), alpha),
            &logits,
            GRAD_STEP,
        );
        let tup = grad_check(|_, x| tuplet_loss(x.row(0)?, x.row(1)?, x.select_rows(&inter)?), &emb, GRAD_STEP);
        let itup = grad_check(
            |_, x| intra_tuplet_loss(x.row(0)?, x.row(1)?, x.select_rows(&intra)?),
            &emb,
            GRAD_STEP,
        );
        let open = grad_check(
            |_, x| gated_intra_loss(x.row(0)?, x.row(1)?, x.select_rows(&intra)?, Margin::new(0.5)?, 0.1),
            &emb,
            GRAD_STEP,
        );
        let closed = grad_check(
            |_, x| gated_intra_loss(x.row(0)?, x.row(1)?, x.select_rows(&intra)?, Margin::new(0.05)?, 0.1),
            &emb,
            GRAD_STEP,
        );
        // Logits and embeddings packed into one input: first b rows are logits.
        let packed = {
            let mut rows: Vec<Vec<f64>> = (0..b).map(|r| logits.row(r).to_vec()).collect();
            rows.extend((0..emb.rows()).map(|r| emb.row(r).to_vec()));
            Tensor::from_rows(&rows).unwrap()
        };
        let total = grad_check(
            |g, x| {
                let lg = x.select_rows(&(0..b).collect::<Vec<_>>())?;
                let ce = cross_entropy(g.constant(y.clone()), lg.softmax_rows())?;
                let shifted: Vec<usize> = intra.iter().map(|i| i + b).collect();
                let intra = intra_tuplet_loss(x.row(b)?, x.row(b + 1)?, x.select_rows(&shifted)?)?;
                teacher_total_loss(ce, intra, lambda)
            },
            &packed,
            GRAD_STEP,
        );
        let combined = grad_check(
            |_, x| {
                Ok(combined_contrastive_loss(x.row(0)?, x.row(1)?, x.select_rows(&inter)?, x.select_rows(&intra)?, lambda)?
                    .total)
            },
            &emb,
            GRAD_STEP,
        );
        for (slot, r) in [ce, kd, tup, itup, open, closed, total, combined].into_iter().enumerate() {
            let e = r.map_err(|e| format!("gradient check errored: {e}"))?;
            worst[slot] = worst[slot].max(e);
        }
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    check(max < GRAD_TOL, format!("max relative error {max:.3e} per loss {worst:?}"))?;
    Ok(format!("max relative error {max:.2e} over 100 inputs x 8 losses"))
}

fn kd_two_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(2..10);
        let y = simplex_rows(&mut rng, 1, k);
        let p_t = simplex_rows(&mut rng, 1, k);
        let p_s = simplex_rows(&mut rng, 1, k);
        let alpha = rng.random::<f64>();
        let g = Graph::new();
        let a = kd_student_loss(g.constant(y.clone()), g.constant(p_t.clone()), g.constant(p_s.clone()), alpha)
            .map_err(|e| e.to_string())?
            .item();
        let b = kd_student_loss_combined(&y, &p_t, g.constant(p_s), alpha).map_err(|e| e.to_string())?.item();
        worst = worst.max((a - b).abs());
    }
    check(worst < 1e-12, format!("max difference {worst:.3e}"))?;
    Ok(format!("max difference {worst:.2e} over 1000 triples"))
}

fn lower_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut slack = f64::INFINITY;
    for count in [1usize, 4, 16] {
        let (inter_lb, intra_lb) = loss_lower_bounds(count, count).map_err(|e| e.to_string())?;
        for trial in 0..10_000 {
            let d = rng.random_range(2..12);
            let mut rows = unit_rows(&mut rng, 2 + count, d);
            if trial % 100 == 0 {
                // The extremal configuration sits exactly on the bound.
                let a = rows[0].clone();
                let opposite: Vec<f64> = a.iter().map(|x| -x).collect();
                rows[1] = a;
                for r in rows.iter_mut().skip(2) {
                    *r = opposite.clone();
                }
            }
            let negs: Vec<&[f64]> = rows[2..].iter().map(|r| r.as_slice()).collect();
            let l = tuplet_value(&rows[0], &rows[1], &negs);
            slack = slack.min(l - inter_lb).min(l - intra_lb);
            check(l >= inter_lb - 1e-9, format!("loss {l} below inter floor {inter_lb} at n = {count}"))?;
            check(l >= intra_lb - 1e-9, format!("loss {l} below intra floor {intra_lb} at m = {count}"))?;
        }
    }
    let mut gap = 0.0f64;
    for n in 1..=4 {
        let floor = loss_lower_bounds(n, n).map_err(|e| e.to_string())?.0;
        let got = minimize_single_tuplet(n, 4, 2000, 0.5, 10 + n as u64).map_err(|e| e.to_string())?;
        gap = gap.max(got - floor);
    }
    check(gap < 1e-3, format!("minimizer gap {gap:.3e}"))?;
    Ok(format!("min slack {slack:.2e}, minimizer gap {gap:.2e}"))
}

fn distance_identity() -> Outcome {
    let ds = generate_multiview(&MultiViewSpec {
        classes: 3,
        views_per_class: 1,
        per_view: 10_001,
        d_in: 8,
        class_sep: 3.0,
        view_sep: 2.0,
        noise: 1.0,
        seed: 4,
    })
    .map_err(|e| e.to_string())?;
    let embedder = random_embedder(8, 8, 4).map_err(|e| e.to_string())?;
    let mut exact_worst = 0.0f64;
    let mut run = |m: usize, n: usize| -> Result<f64, String> {
        let reports = empirical_distances(
            &embedder,
            &ds,
            &DistanceConfig {
                anchors: 20,
                m,
                n,
                aug_strength: 0.1,
                seed: (m * 31 + n) as u64,
            },
        )
        .map_err(|e| e.to_string())?;
        let mut asym = 0.0f64;
        for r in &reports {
            let (e, a) = theorem1_check(r);
            exact_worst = exact_worst.max(e);
            asym = asym.max(a);
        }
        Ok(asym)
    };
    for (m, n) in [(1, 1), (5, 20), (100, 100)] {
        run(m, n)?;
    }
    let k1 = run(10_000, 10_000)?;
    let k4 = run(5_000, 20_000)?;
    check(exact_worst < 1e-9, format!("exact residual {exact_worst:.3e}"))?;
    check(k1 < 0.02, format!("asymptotic residual at K=1 {k1:.3e}"))?;
    check(k4 < 0.05, format!("asymptotic residual at K=4 {k4:.3e}"))?;
    Ok(format!("exact {exact_worst:.2e}, asymptotic K=1 {k1:.2e}, K=4 {k4:.2e}"))
}

fn ratio_constants() -> Outcome {
    let grid: Vec<usize> = (0..=24).map(|i| 10f64.powf(i as f64 / 4.0).round() as usize).collect();
    let mut worst = 0.0f64;
    for &m in &grid {
        for &n in &grid {
            let c = theorem2_constants(m, n).map_err(|e| e.to_string())?;
            check(
                c.c0 > 0.0 && c.c1 > 0.0 && c.c2 > 0.0 && c.c3 > 0.0,
                format!("non-positive constant at m={m}, n={n}: {c:?}"),
            )?;
            worst = worst.max((c.c1 * c.c3 - 1.0).abs());
        }
    }
    check(worst < 1e-12, format!("|c1 c3 - 1| reached {worst:.3e}"))?;
    let direct = 8.389_056_098_930_65f64.ln() / 1.135_335_283_236_612_7f64.ln() - 1.0;
    let c0 = theorem2_constants(1, 1).map_err(|e| e.to_string())?.c0;
    check((c0 - direct).abs() < 1e-3 && (c0 - 15.757).abs() < 1e-3, format!("c0 at m=1 is {c0}"))?;
    Ok(format!("{} grid points, max |c1 c3 - 1| {worst:.1e}, c0(m=1) = {c0:.4}", grid.len() * grid.len()))
}

fn ratio_bounds() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = 0;
    for lambda in [0.1, 1.0, 10.0] {
        let mut all = true;
        for seed in 0..3 {
            let r = minimize_tradeoff(&FreeEmbeddingConfig {
                lambda,
                seed,
                ..FreeEmbeddingConfig::default()
            })
            .map_err(|e| e.to_string())?;
            let b = theorem2_bound_check(r.l_intra, r.l_inter, lambda, 8, 8).map_err(|e| e.to_string())?;
            all &= b.satisfied;
            if seed == 0 {
                lines.push(format!(
                    "lambda {lambda}: ratio {:.3} in [{:.3}, {:.3}]{}",
                    b.ratio,
                    b.lower,
                    b.upper,
                    if r.converged { "" } else { " (not converged)" }
                ));
            }
        }
        ok += all as usize;
    }
    check(ok == 3, format!("{ok}/3 lambda settings satisfied; {}", lines.join("; ")))?;
    Ok(format!("3/3 settings; {}", lines.join("; ")))
}

fn margin_gate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let k = rng.random_range(2..12);
        let p = simplex(&mut rng, k);
        let rho = margin_of(&p, rng.random_range(0..k)).map_err(|e| e.to_string())?.value();
        check((-1.0..=1.0).contains(&rho), format!("margin {rho} outside [-1, 1]"))?;
    }
    for _ in 0..100 {
        let rows = unit_rows(&mut rng, 6, 4);
        let g = Graph::new();
        let a = g.param(Tensor::vector(rows[0].clone()));
        let p = g.param(Tensor::vector(rows[1].clone()));
        let negs = g.param(Tensor::from_rows(&rows[2..]).unwrap());
        let delta = rng.random_range(0.05..1.0);
        let rho = Margin::new(rng.random_range(-1.0..=delta)).map_err(|e| e.to_string())?;
        let loss = gated_intra_loss(a, p, negs, rho, delta).map_err(|e| e.to_string())?;
        check(loss.item() == 0.0, "closed gate produced non-zero loss")?;
        g.backward(loss).map_err(|e| e.to_string())?;
        for v in [a, p, negs] {
            if let Some(gr) = v.grad() {
                check(gr.data().iter().all(|x| *x == 0.0), "closed gate produced non-zero gradient")?;
            }
        }
    }
    let ds = generate_multiview(&MultiViewSpec {
        classes: 3,
        views_per_class: 2,
        per_view: 20,
        d_in: 8,
        seed: 7,
        ..MultiViewSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let base = TrainConfig {
        epochs: 15,
        batch_size: 16,
        lr_decay_epochs: vec![5, 10],
        teacher_hidden: vec![16],
        embed_dim: 8,
        capacity_m: 4,
        seed: 7,
        ..TrainConfig::default()
    };
    let (ce_model, ce_log) = train_teacher(&ds, &TrainConfig { lambda: 0.0, ..base.clone() }).map_err(|e| e.to_string())?;
    let (gated_model, gated_log) =
        train_teacher(&ds, &TrainConfig { lambda: 0.03, delta: 1.0, ..base }).map_err(|e| e.to_string())?;
    check(ce_model.to_bytes() == gated_model.to_bytes(), "delta = 1 parameters differ from CE-only run")?;
    let same_trace = ce_log.batches.len() == gated_log.batches.len()
        && ce_log
            .batches
            .iter()
            .zip(&gated_log.batches)
            .all(|(x, y)| x.total.to_bits() == y.total.to_bits() && x.ce.to_bits() == y.ce.to_bits());
    check(same_trace, "delta = 1 loss trace differs from CE-only trace")?;
    Ok(format!("1000 margins in range, 100 closed gates inert, {}-batch trace bit-identical", ce_log.batches.len()))
}

#[derive(PartialEq, Debug)]
struct CacheTrace {
    stored: Vec<usize>,
    drained: Vec<Vec<usize>>,
    final_state: String,
}

fn run_cache_script(mode: CacheMode, seed: u64) -> Result<(CacheTrace, NegativeCache), String> {
    let (classes, m) = (5usize, 7usize);
    let mut cache = NegativeCache::new(classes, CacheConfig { capacity_m: m, delta: 0.2, mode }).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = CacheTrace {
        stored: Vec::new(),
        drained: Vec::new(),
        final_state: String::new(),
    };
    let embedding_of = |id: usize| {
        let t = id as f64 * 0.618_033_988_749_895;
        Embedding::new(vec![t.cos(), t.sin()]).expect("unit circle")
    };
    for step in 0..100_000u64 {
        let c = rng.random_range(0..classes);
        if rng.random_bool(0.8) {
            let id = rng.random_range(0..400usize);
            let rho = Margin::new(rng.random_range(-1.0..=1.0)).map_err(|e| e.to_string())?;
            cache.enqueue_if_margin(c, embedding_of(id), id, rho, step).map_err(|e| e.to_string())?;
        } else {
            let before = cache.queue(c).map_err(|e| e.to_string())?.len();
            if let Some(set) = cache.drain_ready(c) {
                check(before == m && set.len() == m, format!("drain at occupancy {before}"))?;
                if mode == CacheMode::DrainAndClear {
                    check(cache.queue(c).unwrap().is_empty(), "drain left entries behind")?;
                }
                let anchor = set[rng.random_range(0..set.len())].sample_id;
                let own = embedding_of(anchor);
                let negs = negatives_excluding(&set, anchor);
                check(negs.iter().all(|e| e != &own), "anchor among its own negatives")?;
                let expected = set.iter().filter(|e| e.sample_id != anchor).count();
                check(negs.len() == expected, "exclusion dropped unrelated entries")?;
                trace.drained.push(set.iter().map(|e| e.sample_id).collect());
            } else {
                check(before != m, "full queue refused to drain")?;
            }
        }
        let stored = cache.total_stored();
        check(stored <= classes * m, format!("{stored} entries exceed capacity {}", classes * m))?;
        trace.stored.push(stored);
    }
    trace.final_state = cache.stats_json().to_string();
    Ok((trace, cache))
}

fn pipeline_cache() -> Outcome {
    let mut drains = 0;
    for mode in [CacheMode::DrainAndClear, CacheMode::SlidingWindow] {
        let (a, cache_a) = run_cache_script(mode, 8)?;
        let (b, cache_b) = run_cache_script(mode, 8)?;
        check(a == b && cache_a == cache_b, format!("{mode} replay diverged"))?;
        drains += a.drained.len();
    }
    Ok(format!("2 x 100000 events, {drains} drains, replay identical"))
}

/// One-sided paired t-test that `after` exceeds `before`; returns (mean diff, p).
fn paired_greater(before: &[f64], after: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = after.iter().zip(before).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return (mean, if mean > 0.0 { 0.0 } else { 1.0 });
    }
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid df");
    (mean, 1.0 - dist.cdf(t))
}

fn default_split() -> Result<(marginkd::Dataset, marginkd::Dataset), String> {
    let ds = generate_multiview(&MultiViewSpec::default()).map_err(|e| e.to_string())?;
    ds.split(0.3, 7).map_err(|e| e.to_string())
}

fn diversity_direction(report: &SweepReport, seeds: &[u64]) -> Outcome {
    check(report.cells.iter().all(|c| c.error.is_none()), "a sweep cell failed")?;
    let col = |lambda: f64, f: fn(&marginkd::theory::SweepCell) -> f64| -> Vec<f64> {
        seeds.iter().map(|&s| f(report.cell(lambda, s).expect("cell"))).collect()
    };
    let (d_intra, p_intra) = paired_greater(&col(0.0, |c| c.intra_distance), &col(0.03, |c| c.intra_distance));
    let (d_ent, p_ent) = paired_greater(&col(0.0, |c| c.entropy), &col(0.03, |c| c.entropy));
    let summary = format!("intra distance +{d_intra:.4} (p={p_intra:.2e}), entropy +{d_ent:.5} (p={p_ent:.2e})");
    check(d_intra > 0.0 && p_intra < 0.05 && d_ent > 0.0 && p_ent < 0.05, summary.clone())?;
    Ok(summary)
}

fn distillation_direction() -> Outcome {
    let (train, test) = default_split()?;
    let seeds: Vec<u64> = (0..10).collect();
    let report = lambda_sweep(&train, &test, &[0.0, 0.02], &TrainConfig::default(), &seeds).map_err(|e| e.to_string())?;
    check(report.cells.iter().all(|c| c.error.is_none()), "a sweep cell failed")?;
    let control = report.rows[0].student_accuracy.mean;
    let treated = report.rows[1].student_accuracy.mean;
    let gap_pp = 100.0 * (treated - control);
    let summary = format!("student accuracy {:.2}% vs control {:.2}% ({gap_pp:+.2} pp)", 100.0 * treated, 100.0 * control);
    check(gap_pp >= -0.5, summary.clone())?;
    Ok(summary)
}

fn overfit_regime() -> Outcome {
    let ds = generate_multiview(&MultiViewSpec {
        classes: 4,
        views_per_class: 2,
        per_view: 5,
        ..MultiViewSpec::default()
    })
    .map_err(|e| e.to_string())?;
    check(ds.len() == 40, "expected 40 samples")?;
    let cfg = TrainConfig {
        epochs: 500,
        batch_size: 8,
        lr_decay_epochs: vec![],
        capacity_m: 4,
        teacher_hidden: vec![400],
        seed: 1,
        ..TrainConfig::default()
    };
    let (ce, _) = train_teacher(&ds, &TrainConfig { lambda: 0.0, ..cfg.clone() }).map_err(|e| e.to_string())?;
    let (gated, _) = train_teacher(&ds, &TrainConfig { lambda: 0.03, ..cfg }).map_err(|e| e.to_string())?;
    let p_ce = mean_max_probability(&ce, &ds).map_err(|e| e.to_string())?;
    let p_gated = mean_max_probability(&gated, &ds).map_err(|e| e.to_string())?;
    let summary = format!("mean max-probability {p_ce:.5} (lambda 0) vs {p_gated:.5} (lambda 0.03)");
    check(p_ce > 0.99 && p_gated < p_ce, summary.clone())?;
    Ok(summary)
}

fn overhead(report: &SweepReport) -> Outcome {
    let ratio = report.overhead_ratio().ok_or("no overhead ratio")?;
    check(ratio.is_finite() && ratio > 0.0, format!("ratio {ratio}"))?;
    Ok(format!("intra-enabled ms/batch is {ratio:.2}x the CE-only control (informational)"))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("criterion {id:>2} {name}: FAIL ({detail}) [{secs:.1}s]");
            }
        }
    };
    report(1, "gradient correctness", &gradient_correctness);
    report(2, "distillation loss two-form identity", &kd_two_forms);
    report(3, "tuplet loss lower bounds", &lower_bounds);
    report(4, "distance/loss finite-sample identity", &distance_identity);
    report(5, "loss-ratio constants", &ratio_constants);
    report(6, "loss-ratio bounds at the minimizer", &ratio_bounds);
    report(7, "margin gate semantics", &margin_gate);
    report(8, "pipeline cache", &pipeline_cache);

    let seeds: Vec<u64> = (0..5).collect();
    let sweep = default_split().and_then(|(train, test)| {
        lambda_sweep(&train, &test, &[0.0, 0.03], &TrainConfig::default(), &seeds).map_err(|e| e.to_string())
    });
    report(9, "intra-class diversity direction", &|| diversity_direction(sweep.as_ref().map_err(|e| e.clone())?, &seeds));
    report(10, "distillation non-inferiority", &distillation_direction);
    report(11, "over-confident teacher regime", &overfit_regime);
    report(12, "training overhead report", &|| overhead(sweep.as_ref().map_err(|e| e.clone())?));

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 12 acceptance criteria passed");
}
