//! Numerical checks of the distance/loss relations, the loss-ratio bounds
//! of the inter/intra trade-off objective, and the lambda sweep.

use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::tuplet_value;
use crate::ndgrad::{Graph, Tensor};
use crate::nets::MlpModel;
use crate::synthdata::{augment, mix_seed, Dataset};
use crate::train::{
    distill_student, mean_soft_label_entropy, pairwise_dispersion, train_teacher, TrainConfig,
};

/// Anything that maps feature rows to unit-norm embedding rows.
pub trait Embedder {
    fn embed(&self, x: &Tensor) -> Result<Tensor>;
}

impl Embedder for MlpModel {
    fn embed(&self, x: &Tensor) -> Result<Tensor> {
        self.embed_normalized(x)
    }
}

/// Wraps a per-row function as an [`Embedder`]. Rows are not re-normalized.
pub struct FnEmbedder<F>(pub F);

impl<F: Fn(&[f64]) -> Vec<f64>> Embedder for FnEmbedder<F> {
    fn embed(&self, x: &Tensor) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = (0..x.rows()).map(|r| (self.0)(x.row(r))).collect();
        Tensor::from_rows(&rows)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceConfig {
    pub anchors: usize,
    pub m: usize,
    pub n: usize,
    pub aug_strength: f64,
    pub seed: u64,
}

/// Indices drawn for one anchor. Replaying these reproduces a report exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorDraw {
    pub anchor: usize,
    pub positive_seed: u64,
    pub same_class: Vec<usize>,
    pub other_class: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub anchor: usize,
    pub d_intra: f64,
    pub d_inter: f64,
    pub l_intra: f64,
    pub l_inter: f64,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: f64,
}

/// Seeded anchors, each with `m` same-class and `n` other-class samples drawn
/// without replacement.
pub fn draw_anchors(ds: &Dataset, cfg: &DistanceConfig) -> Result<Vec<AnchorDraw>> {
    if cfg.m == 0 || cfg.n == 0 || cfg.anchors == 0 {
        return Err(Error::contract("anchors, m and n must all be at least 1"));
    }
    if cfg.anchors > ds.len() {
        return Err(Error::contract(format!("{} anchors requested from {} samples", cfg.anchors, ds.len())));
    }
    for c in 0..ds.classes {
        let size = ds.class_of(c).len();
        if size <= cfg.m {
            return Err(Error::contract(format!("class {c} has {size} samples, need more than m = {}", cfg.m)));
        }
        if ds.len() - size < cfg.n {
            return Err(Error::contract(format!(
                "only {} samples outside class {c}, need n = {}",
                ds.len() - size,
                cfg.n
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let anchors = sample(&mut rng, ds.len(), cfg.anchors).into_vec();
    let mut draws = Vec::with_capacity(anchors.len());
    for a in anchors {
        let y = ds.samples[a].y;
        let same: Vec<usize> = ds.class_of(y).into_iter().filter(|&i| i != a).collect();
        let other: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].y != y).collect();
        let same_class = sample(&mut rng, same.len(), cfg.m).into_iter().map(|k| same[k]).collect();
        let other_class = sample(&mut rng, other.len(), cfg.n).into_iter().map(|k| other[k]).collect();
        draws.push(AnchorDraw {
            anchor: a,
            positive_seed: rng.random(),
            same_class,
            other_class,
        });
    }
    Ok(draws)
}

/// One report per drawn anchor. Both losses share the anchor's augmented
/// positive, so each report relates its distances and losses exactly.
pub fn empirical_distances<E: Embedder + ?Sized>(
    embedder: &E,
    ds: &Dataset,
    cfg: &DistanceConfig,
) -> Result<Vec<DistanceReport>> {
    let draws = draw_anchors(ds, cfg)?;
    let emb = embedder.embed(&ds.all_features())?;
    let mut reports = Vec::with_capacity(draws.len());
    for d in &draws {
        let x = &ds.samples[d.anchor].x;
        let pos_in = Tensor::from_rows(&[augment(x, cfg.aug_strength, d.positive_seed)])?;
        let pos = embedder.embed(&pos_in)?;
        let a = emb.row(d.anchor);
        let p = pos.row(0);
        let same: Vec<&[f64]> = d.same_class.iter().map(|&i| emb.row(i)).collect();
        let other: Vec<&[f64]> = d.other_class.iter().map(|&i| emb.row(i)).collect();
        reports.push(DistanceReport {
            anchor: d.anchor,
            d_intra: mean_exp_similarity(a, &same),
            d_inter: mean_exp_similarity(a, &other),
            l_intra: tuplet_value(a, p, &same),
            l_inter: tuplet_value(a, p, &other),
            m: cfg.m,
            n: cfg.n,
            k: cfg.n as f64 / cfg.m as f64,
        });
    }
    Ok(reports)
}

fn mean_exp_similarity(a: &[f64], others: &[&[f64]]) -> f64 {
    let s: f64 = others
        .iter()
        .map(|o| a.iter().zip(*o).map(|(x, y)| x * y).sum::<f64>().exp())
        .sum();
    s / others.len() as f64
}

/// `(exact, asymptotic)` relative residuals of the distance ratio against
/// `K (e^l_intra - 1)/(e^l_inter - 1)` and against `K e^l_intra / e^l_inter`.
pub fn theorem1_check(r: &DistanceReport) -> (f64, f64) {
    let lhs = r.d_intra / r.d_inter;
    let exact = r.k * r.l_intra.exp_m1() / r.l_inter.exp_m1();
    let asymptotic = r.k * (r.l_intra - r.l_inter).exp();
    (((lhs - exact) / lhs).abs(), ((lhs - asymptotic) / lhs).abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

pub fn theorem2_constants(m: usize, n: usize) -> Result<RatioConstants> {
    if m == 0 || n == 0 {
        return Err(Error::contract(format!("m and n must be at least 1, got m = {m}, n = {n}")));
    }
    let (m, n) = (m as f64, n as f64);
    let (e2, em2) = (2f64.exp(), (-2f64).exp());
    let m_lo = (m * em2).ln_1p();
    let n_lo = (n * em2).ln_1p();
    Ok(RatioConstants {
        c0: (m * e2).ln_1p() / m_lo - 1.0,
        c1: n_lo / m_lo,
        c2: (n * e2).ln_1p() / n_lo - 1.0,
        c3: m_lo / n_lo,
    })
}

/// `(log(1 + n e^-2), log(1 + m e^-2))`: floors of the inter and intra losses
/// over unit-norm embeddings.
pub fn loss_lower_bounds(m: usize, n: usize) -> Result<(f64, f64)> {
    if m == 0 || n == 0 {
        return Err(Error::contract(format!("m and n must be at least 1, got m = {m}, n = {n}")));
    }
    let em2 = (-2f64).exp();
    Ok(((n as f64 * em2).ln_1p(), (m as f64 * em2).ln_1p()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda: f64,
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub satisfied: bool,
}

pub fn theorem2_bound_check(l_intra: f64, l_inter: f64, lambda: f64, m: usize, n: usize) -> Result<BoundReport> {
    if !(l_inter > 0.0) {
        return Err(Error::contract(format!("l_inter must be positive, got {l_inter}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::contract(format!("lambda must be positive, got {lambda}")));
    }
    let c = theorem2_constants(m, n)?;
    let ratio = l_intra / l_inter;
    let lower = 1.0 / (c.c0 * lambda + c.c1);
    let upper = c.c2 / lambda + c.c3;
    Ok(BoundReport {
        lambda,
        ratio,
        lower,
        upper,
        c0: c.c0,
        c1: c.c1,
        c2: c.c2,
        c3: c.c3,
        satisfied: lower <= ratio && ratio <= upper,
    })
}

fn random_unit_rows(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

fn project_rows(t: &mut Tensor) {
    let cols = t.cols();
    for row in t.data_mut().chunks_mut(cols) {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        row.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Free unit-vector minimization of `L_inter + lambda * L_intra`.
///
/// Every sample owns two embeddings, an anchor view and a positive view.
/// Negatives are drawn once per seed from the views of other samples: `n`
/// from other classes, `m` from the anchor's own class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEmbeddingConfig {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for FreeEmbeddingConfig {
    fn default() -> Self {
        FreeEmbeddingConfig {
            classes: 4,
            per_class: 8,
            dim: 16,
            m: 8,
            n: 8,
            lambda: 1.0,
            steps: 6000,
            lr: 2.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEmbeddingResult {
    pub l_inter: f64,
    pub l_intra: f64,
    pub objective: f64,
    pub steps: usize,
    /// Relative objective change over the last tenth of the run stayed below 1e-6.
    pub converged: bool,
}

pub fn minimize_tradeoff(cfg: &FreeEmbeddingConfig) -> Result<FreeEmbeddingResult> {
    let samples = cfg.classes * cfg.per_class;
    if cfg.classes < 2 || cfg.per_class < 2 || cfg.dim < 2 || cfg.steps == 0 {
        return Err(Error::contract("need at least 2 classes, 2 samples per class, dim 2 and one step"));
    }
    if cfg.m > 2 * (cfg.per_class - 1) || cfg.n > 2 * (samples - cfg.per_class) || cfg.m == 0 || cfg.n == 0 {
        return Err(Error::contract(format!("m = {}, n = {} exceed the available views", cfg.m, cfg.n)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Rows 0..samples are anchor views, rows samples.. are positive views.
    let mut views = Tensor::from_rows(&random_unit_rows(2 * samples, cfg.dim, &mut rng))?;
    let class = |i: usize| (i % samples) / cfg.per_class;
    let mut intra_idx = Vec::with_capacity(samples);
    let mut inter_idx = Vec::with_capacity(samples);
    for i in 0..samples {
        let same: Vec<usize> = (0..2 * samples).filter(|&j| class(j) == class(i) && j % samples != i).collect();
        let other: Vec<usize> = (0..2 * samples).filter(|&j| class(j) != class(i)).collect();
        intra_idx.push(sample(&mut rng, same.len(), cfg.m).into_iter().map(|k| same[k]).collect::<Vec<_>>());
        inter_idx.push(sample(&mut rng, other.len(), cfg.n).into_iter().map(|k| other[k]).collect::<Vec<_>>());
    }

    let evaluate = |views: &Tensor, step: Option<f64>| -> Result<(f64, f64, Tensor)> {
        let g = Graph::new();
        let v = g.param(views.clone());
        let mut inter_sum = None;
        let mut intra_sum = None;
        for i in 0..samples {
            let a = v.row(i)?;
            let p = v.row(samples + i)?;
            let inter = crate::losses::tuplet_loss(a, p, v.select_rows(&inter_idx[i])?)?;
            let intra = crate::losses::tuplet_loss(a, p, v.select_rows(&intra_idx[i])?)?;
            inter_sum = Some(match inter_sum {
                None => inter,
                Some(s) => inter.add(s)?,
            });
            intra_sum = Some(match intra_sum {
                None => intra,
                Some(s) => intra.add(s)?,
            });
        }
        let inter = inter_sum.expect("samples > 0").scale(1.0 / samples as f64);
        let intra = intra_sum.expect("samples > 0").scale(1.0 / samples as f64);
        let total = inter.add(intra.scale(cfg.lambda))?;
        let mut next = views.clone();
        if let Some(lr) = step {
            g.backward(total)?;
            let grad = v.grad().expect("param");
            for (x, d) in next.data_mut().iter_mut().zip(grad.data()) {
                *x -= lr * d;
            }
            project_rows(&mut next);
        }
        Ok((inter.item(), intra.item(), next))
    };

    let window = (cfg.steps / 10).max(1);
    let mut history = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let (inter, intra, next) = evaluate(&views, Some(cfg.lr))?;
        let obj = inter + cfg.lambda * intra;
        if !obj.is_finite() {
            return Err(Error::Numeric(format!("free-embedding objective became {obj}")));
        }
        history.push(obj);
        views = next;
    }
    let (l_inter, l_intra, _) = evaluate(&views, None)?;
    let objective = l_inter + cfg.lambda * l_intra;
    let earlier = history[history.len().saturating_sub(window)];
    Ok(FreeEmbeddingResult {
        l_inter,
        l_intra,
        objective,
        steps: cfg.steps,
        converged: ((earlier - objective) / objective).abs() < 1e-6,
    })
}

/// Projected-gradient minimization of a single tuplet loss over free unit
/// vectors (anchor, positive, `n` negatives). Returns the final loss.
pub fn minimize_single_tuplet(n: usize, dim: usize, steps: usize, lr: f64, seed: u64) -> Result<f64> {
    if n == 0 || dim < 2 {
        return Err(Error::contract("need n >= 1 and dim >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut views = Tensor::from_rows(&random_unit_rows(n + 2, dim, &mut rng))?;
    let negs: Vec<usize> = (2..n + 2).collect();
    let mut last = f64::NAN;
    for _ in 0..=steps {
        let g = Graph::new();
        let v = g.param(views.clone());
        let loss = crate::losses::tuplet_loss(v.row(0)?, v.row(1)?, v.select_rows(&negs)?)?;
        last = loss.item();
        g.backward(loss)?;
        let grad = v.grad().expect("param");
        for (x, d) in views.data_mut().iter_mut().zip(grad.data()) {
            *x -= lr * d;
        }
        project_rows(&mut views);
    }
    Ok(last)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub lambda: f64,
    pub seed: u64,
    pub intra_distance: f64,
    pub inter_distance: f64,
    pub entropy: f64,
    pub teacher_accuracy: f64,
    pub student_accuracy: f64,
    pub ms_per_batch: f64,
    pub diverged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; 0 for fewer than two values.
    pub fn of(values: &[f64]) -> MeanStd {
        if values.is_empty() {
            return MeanStd { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub runs: usize,
    pub diverged: usize,
    pub intra_distance: MeanStd,
    pub inter_distance: MeanStd,
    pub entropy: MeanStd,
    pub student_accuracy: MeanStd,
    pub ms_per_batch: MeanStd,
}

/// Long-format metric record: one per (experiment, metric, seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_hash: String,
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
}

/// Hex SHA-256 of the JSON encoding of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn run_cell(train: &Dataset, held_out: &Dataset, cfg: &TrainConfig, lambda: f64, seed: u64) -> SweepCell {
    let cell_cfg = TrainConfig {
        lambda,
        seed,
        ..cfg.clone()
    };
    let mut cell = SweepCell {
        lambda,
        seed,
        intra_distance: f64::NAN,
        inter_distance: f64::NAN,
        entropy: f64::NAN,
        teacher_accuracy: f64::NAN,
        student_accuracy: f64::NAN,
        ms_per_batch: f64::NAN,
        diverged: false,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let (teacher, log) = train_teacher(train, &cell_cfg)?;
        cell.ms_per_batch = log.mean_ms_per_batch();
        let (intra, inter) = pairwise_dispersion(&teacher, held_out)?;
        cell.intra_distance = intra;
        cell.inter_distance = inter;
        cell.entropy = mean_soft_label_entropy(&teacher, held_out)?;
        cell.teacher_accuracy = teacher.accuracy(held_out)?;
        let (student, _) = distill_student(&teacher, train, &cell_cfg)?;
        cell.student_accuracy = student.accuracy(held_out)?;
        Ok(())
    })();
    if let Err(e) = outcome {
        cell.diverged = matches!(e, Error::NonFiniteLoss { .. } | Error::Numeric(_) | Error::DegenerateEmbedding { .. });
        cell.error = Some(e.to_string());
    }
    cell
}

/// Trains a teacher and a distilled student for every (lambda, seed) cell,
/// measuring embedding dispersion and soft-label entropy on `held_out`.
/// Cells run on separate threads; results do not depend on scheduling.
pub fn lambda_sweep(
    train: &Dataset,
    held_out: &Dataset,
    lambdas: &[f64],
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<SweepReport> {
    if lambdas.len() < 2 || !lambdas.contains(&0.0) {
        return Err(Error::contract("lambda list needs at least two values including a 0 control"));
    }
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::contract("lambdas must be non-negative"));
    }
    if seeds.is_empty() {
        return Err(Error::contract("at least one seed is required"));
    }
    cfg.validate()?;
    let jobs: Vec<(f64, u64)> = lambdas.iter().flat_map(|&l| seeds.iter().map(move |&s| (l, s))).collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    let mut cells: Vec<Option<SweepCell>> = vec![None; jobs.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let jobs = &jobs;
                scope.spawn(move || {
                    (w..jobs.len())
                        .step_by(workers)
                        .map(|j| (j, run_cell(train, held_out, cfg, jobs[j].0, jobs[j].1)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (j, cell) in h.join().expect("sweep worker panicked") {
                cells[j] = Some(cell);
            }
        }
    });
    let cells: Vec<SweepCell> = cells.into_iter().map(|c| c.expect("every job ran")).collect();

    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let ok: Vec<&SweepCell> = cells.iter().filter(|c| c.lambda == lambda && c.error.is_none()).collect();
            let col = |f: fn(&SweepCell) -> f64| MeanStd::of(&ok.iter().map(|c| f(c)).collect::<Vec<_>>());
            SweepRow {
                lambda,
                runs: ok.len(),
                diverged: cells.iter().filter(|c| c.lambda == lambda && c.error.is_some()).count(),
                intra_distance: col(|c| c.intra_distance),
                inter_distance: col(|c| c.inter_distance),
                entropy: col(|c| c.entropy),
                student_accuracy: col(|c| c.student_accuracy),
                ms_per_batch: col(|c| c.ms_per_batch),
            }
        })
        .collect();

    #[derive(Serialize)]
    struct HashInput<'a> {
        train: &'a TrainConfig,
        lambdas: &'a [f64],
        seeds: &'a [u64],
        train_seed: u64,
        train_len: usize,
        held_out_len: usize,
    }
    let config_hash = config_hash(&HashInput {
        train: cfg,
        lambdas,
        seeds,
        train_seed: train.seed,
        train_len: train.len(),
        held_out_len: held_out.len(),
    })?;
    Ok(SweepReport { config_hash, cells, rows })
}

impl SweepReport {
    /// Mean ms/batch of intra-enabled cells over the lambda = 0 control.
    pub fn overhead_ratio(&self) -> Option<f64> {
        let mean = |pick: &dyn Fn(&SweepCell) -> bool| {
            let v: Vec<f64> = self
                .cells
                .iter()
                .filter(|c| c.error.is_none() && pick(c))
                .map(|c| c.ms_per_batch)
                .collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        Some(mean(&|c| c.lambda > 0.0)? / mean(&|c| c.lambda == 0.0)?)
    }

    pub fn cell(&self, lambda: f64, seed: u64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.lambda == lambda && c.seed == seed)
    }

    pub fn metrics_rows(&self) -> Vec<MetricsRow> {
        let mut out = Vec::new();
        for c in &self.cells {
            let experiment = format!("lambda={}", c.lambda);
            for (metric, value) in [
                ("intra_distance", c.intra_distance),
                ("inter_distance", c.inter_distance),
                ("entropy", c.entropy),
                ("teacher_accuracy", c.teacher_accuracy),
                ("student_accuracy", c.student_accuracy),
                ("ms_per_batch", c.ms_per_batch),
                ("diverged", if c.diverged || c.error.is_some() { 1.0 } else { 0.0 }),
            ] {
                out.push(MetricsRow {
                    experiment: experiment.clone(),
                    metric: metric.to_string(),
                    value,
                    seed: c.seed,
                    config_hash: self.config_hash.clone(),
                });
            }
        }
        out
    }

    pub fn write_metrics_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in self.metrics_rows() {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// One line per lambda with mean ± std columns.
    pub fn write_summary_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "lambda,runs,diverged,intra_distance_mean,intra_distance_std,inter_distance_mean,inter_distance_std,\
             entropy_mean,entropy_std,student_accuracy_mean,student_accuracy_std,ms_per_batch_mean,config_hash"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.lambda,
                r.runs,
                r.diverged,
                r.intra_distance.mean,
                r.intra_distance.std,
                r.inter_distance.mean,
                r.inter_distance.std,
                r.entropy.mean,
                r.entropy.std,
                r.student_accuracy.mean,
                r.student_accuracy.std,
                r.ms_per_batch.mean,
                self.config_hash
            )?;
        }
        Ok(())
    }
}

/// Builds a dataset-sized embedder from a seeded random network, used when no
/// trained model is supplied.
pub fn random_embedder(d_in: usize, embed_dim: usize, seed: u64) -> Result<MlpModel> {
    MlpModel::init(&[d_in, 2 * embed_dim, embed_dim, 2], mix_seed(seed, 0xe3b))
}
