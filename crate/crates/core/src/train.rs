//! Teacher training with the margin-gated intra-class term, and student
//! distillation from a frozen teacher.
//!
//! Per teacher batch: softmax outputs and margins are computed, anchors whose
//! margin clears `delta` are pushed into their class queue, and every class
//! queue that fills up yields a negative set. Each gate-open anchor of such a
//! class contributes one intra term per drained set, evaluated against an
//! augmented positive. The batch intra loss is the mean of those terms, and
//! the objective is `CE + lambda * intra`, stepped with plain SGD.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    cross_entropy, gated_intra_loss, kd_student_loss, margin_of, stack_embeddings, teacher_total_loss, Embedding,
    Margin,
};
use crate::ndgrad::{Graph, Tensor, Var};
use crate::negcache::{negatives_excluding, CacheConfig, CacheEntry, CacheMode, NegativeCache};
use crate::nets::MlpModel;
use crate::synthdata::{augment, batch_iter, mix_seed, Dataset};

/// Where intra-class negatives come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraSource {
    /// Per-class pipeline cache.
    #[default]
    Cached,
    /// Gate-open same-class samples of the current batch only.
    Inline,
}

impl std::str::FromStr for IntraSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cached" => Ok(IntraSource::Cached),
            "inline" => Ok(IntraSource::Inline),
            other => Err(Error::contract(format!("unknown intra source {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    /// Weight of the intra-class term; 0 trains with cross-entropy only.
    pub lambda: f64,
    pub delta: f64,
    pub capacity_m: usize,
    pub cache_mode: CacheMode,
    pub intra_source: IntraSource,
    /// Hard-label weight in the student objective.
    pub alpha: f64,
    pub aug_strength: f64,
    pub teacher_hidden: Vec<usize>,
    pub student_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 90,
            batch_size: 64,
            lr: 0.1,
            lr_decay_epochs: vec![30, 60],
            lr_decay_factor: 0.1,
            lambda: 0.02,
            delta: 0.1,
            capacity_m: 16,
            cache_mode: CacheMode::DrainAndClear,
            intra_source: IntraSource::Cached,
            alpha: 0.1,
            aug_strength: 0.1,
            teacher_hidden: vec![64],
            student_hidden: vec![8],
            embed_dim: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.lr_decay_factor > 0.0) {
            return fail(format!("lr_decay_factor must be positive, got {}", self.lr_decay_factor));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.delta > 0.0) {
            return fail(format!("delta must be positive, got {}", self.delta));
        }
        if self.capacity_m == 0 {
            return fail("capacity_m must be at least 1".into());
        }
        if !(self.aug_strength >= 0.0) {
            return fail(format!("aug_strength must be >= 0, got {}", self.aug_strength));
        }
        Ok(())
    }

    pub fn intra_enabled(&self) -> bool {
        self.lambda > 0.0
    }

    pub fn teacher_dims(&self, d_in: usize, classes: usize) -> Vec<usize> {
        dims(d_in, &self.teacher_hidden, self.embed_dim, classes)
    }

    pub fn student_dims(&self, d_in: usize, classes: usize) -> Vec<usize> {
        dims(d_in, &self.student_hidden, self.embed_dim, classes)
    }
}

fn dims(d_in: usize, hidden: &[usize], embed: usize, classes: usize) -> Vec<usize> {
    let mut d = vec![d_in];
    d.extend_from_slice(hidden);
    d.push(embed);
    d.push(classes);
    d
}

/// Base learning rate times `lr_decay_factor` for every decay epoch already reached.
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    let steps = cfg.lr_decay_epochs.iter().filter(|&&e| e <= epoch).count();
    cfg.lr * cfg.lr_decay_factor.powi(steps as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub lr: f64,
    pub ce: f64,
    pub intra: f64,
    pub gate_frac: f64,
    pub drains: u64,
    pub ms_per_batch: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    pub epoch: usize,
    pub batch: usize,
    pub total: f64,
    pub ce: f64,
    pub intra: f64,
    /// Number of intra terms averaged into `intra`.
    pub terms: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<EpochRow>,
    pub batches: Vec<BatchLoss>,
    /// Cache statistics at the end of each epoch (teacher runs with the cache only).
    pub cache_stats: Vec<serde_json::Value>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,lr,ce,intra,gate_frac,drains,ms_per_batch";

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:e},{:.17e},{:.17e},{},{},{:.4}",
                r.epoch, r.lr, r.ce, r.intra, r.gate_frac, r.drains, r.ms_per_batch
            )?;
        }
        Ok(())
    }

    pub fn mean_ms_per_batch(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.ms_per_batch).sum::<f64>() / self.rows.len() as f64
    }
}

fn one_hot_rows(labels: &[usize], classes: usize) -> Tensor {
    let mut data = vec![0.0; labels.len() * classes];
    for (r, &y) in labels.iter().enumerate() {
        data[r * classes + y] = 1.0;
    }
    Tensor::matrix(labels.len(), classes, data).expect("sized")
}

fn check_dataset(ds: &Dataset, model: &MlpModel) -> Result<()> {
    ds.validate()?;
    if ds.classes != model.classes() {
        return Err(Error::contract(format!(
            "dataset has {} classes, model outputs {}",
            ds.classes,
            model.classes()
        )));
    }
    if ds.dim() != model.input_dim() {
        return Err(Error::dim(
            "training",
            format!("dataset dim {}, model input {}", ds.dim(), model.input_dim()),
        ));
    }
    Ok(())
}

/// Per-epoch accumulator.
#[derive(Default)]
struct EpochAcc {
    ce: f64,
    intra: f64,
    batches: usize,
    gate_open: usize,
    seen: usize,
    drains: u64,
    elapsed_ms: f64,
}

impl EpochAcc {
    fn row(&self, epoch: usize, lr: f64) -> EpochRow {
        let b = self.batches.max(1) as f64;
        EpochRow {
            epoch,
            lr,
            ce: self.ce / b,
            intra: self.intra / b,
            gate_frac: if self.seen == 0 { 0.0 } else { self.gate_open as f64 / self.seen as f64 },
            drains: self.drains,
            ms_per_batch: self.elapsed_ms / b,
        }
    }
}

/// Trains a teacher from a fresh Glorot initialization seeded by `cfg.seed`.
pub fn train_teacher(ds: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainLog)> {
    let model = MlpModel::init(&cfg.teacher_dims(ds.dim(), ds.classes), cfg.seed)?;
    train_teacher_from(model, ds, cfg)
}

/// Teacher loop starting from given parameters.
pub fn train_teacher_from(mut model: MlpModel, ds: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainLog)> {
    cfg.validate()?;
    check_dataset(ds, &model)?;
    let mut cache = NegativeCache::new(
        ds.classes,
        CacheConfig {
            capacity_m: cfg.capacity_m,
            delta: cfg.delta,
            mode: cfg.cache_mode,
        },
    )?;
    let track_cache = cfg.intra_enabled() && cfg.intra_source == IntraSource::Cached;
    let mut log = TrainLog::default();
    let mut step: u64 = 0;
    for epoch in 0..cfg.epochs {
        let lr = lr_at(cfg, epoch);
        let mut acc = EpochAcc::default();
        for (b, idx) in batch_iter(ds.len(), cfg.batch_size, mix_seed(cfg.seed, epoch as u64))
            .into_iter()
            .enumerate()
        {
            let started = Instant::now();
            let out = teacher_step(&mut model, &mut cache, ds, cfg, &idx, step, lr)?;
            acc.elapsed_ms += started.elapsed().as_secs_f64() * 1e3;
            if !out.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    ce: out.ce,
                    intra: out.intra,
                });
            }
            acc.ce += out.ce;
            acc.intra += out.intra;
            acc.batches += 1;
            acc.gate_open += out.gate_open;
            acc.seen += idx.len();
            acc.drains += out.drains;
            log.batches.push(BatchLoss {
                epoch,
                batch: b,
                total: out.total,
                ce: out.ce,
                intra: out.intra,
                terms: out.terms,
            });
            step += 1;
        }
        log.rows.push(acc.row(epoch, lr));
        if track_cache {
            log.cache_stats.push(cache.stats_json());
        }
    }
    Ok((model, log))
}

struct StepOutcome {
    total: f64,
    ce: f64,
    intra: f64,
    terms: usize,
    gate_open: usize,
    drains: u64,
}

fn teacher_step(
    model: &mut MlpModel,
    cache: &mut NegativeCache,
    ds: &Dataset,
    cfg: &TrainConfig,
    idx: &[usize],
    step: u64,
    lr: f64,
) -> Result<StepOutcome> {
    let labels = ds.labels(idx);
    let g = Graph::new();
    let bound = model.bind(&g, true);
    let out = bound.forward(g.constant(ds.features(idx)))?;
    let probs = out.logits.softmax_rows();
    let ce = cross_entropy(g.constant(one_hot_rows(&labels, ds.classes)), probs)?;

    let p = probs.value();
    let margins = labels
        .iter()
        .enumerate()
        .map(|(r, &y)| margin_of(p.row(r), y))
        .collect::<Result<Vec<Margin>>>()?;
    let gate_open = margins.iter().filter(|m| m.passes(cfg.delta)).count();

    let mut intra_terms: Vec<Var<'_>> = Vec::new();
    let mut drains = 0u64;
    if cfg.intra_enabled() && gate_open > 0 {
        let emb = out.features.l2_normalize_rows()?;
        let emb_val = emb.value();
        let mut sets: BTreeMap<usize, Vec<Vec<CacheEntry>>> = BTreeMap::new();
        match cfg.intra_source {
            IntraSource::Cached => {
                for (r, (&y, &rho)) in labels.iter().zip(&margins).enumerate() {
                    let e = Embedding::new(emb_val.row(r).to_vec())?;
                    let admitted = cache.enqueue_if_margin(y, e, idx[r], rho, step)?;
                    if admitted && cfg.cache_mode == CacheMode::DrainAndClear {
                        if let Some(set) = cache.drain_ready(y) {
                            sets.entry(y).or_default().push(set);
                        }
                    }
                }
                if cfg.cache_mode == CacheMode::SlidingWindow {
                    let mut present: Vec<usize> = labels.clone();
                    present.sort_unstable();
                    present.dedup();
                    for y in present {
                        if let Some(set) = cache.drain_ready(y) {
                            sets.entry(y).or_default().push(set);
                        }
                    }
                }
            }
            IntraSource::Inline => {
                for (r, (&y, rho)) in labels.iter().zip(&margins).enumerate() {
                    if rho.passes(cfg.delta) {
                        let e = Embedding::new(emb_val.row(r).to_vec())?;
                        let entry = CacheEntry {
                            embedding: e,
                            sample_id: idx[r],
                            step_enqueued: step,
                        };
                        match sets.entry(y).or_default().first_mut() {
                            Some(set) => set.push(entry),
                            None => sets.entry(y).or_default().push(vec![entry]),
                        }
                    }
                }
            }
        }
        drains = sets.values().map(|v| v.len() as u64).sum();

        let anchors: Vec<usize> = (0..idx.len())
            .filter(|&r| margins[r].passes(cfg.delta) && sets.contains_key(&labels[r]))
            .collect();
        if !anchors.is_empty() {
            let aug_rows: Vec<Vec<f64>> = anchors
                .iter()
                .map(|&r| {
                    let seed = mix_seed(mix_seed(cfg.seed, step), idx[r] as u64);
                    augment(&ds.samples[idx[r]].x, cfg.aug_strength, seed)
                })
                .collect();
            let pos = bound
                .forward(g.constant(Tensor::from_rows(&aug_rows)?))?
                .features
                .l2_normalize_rows()?;
            for (k, &r) in anchors.iter().enumerate() {
                let anchor = emb.row(r)?;
                let positive = pos.row(k)?;
                for set in &sets[&labels[r]] {
                    let negs = negatives_excluding(set, idx[r]);
                    if negs.is_empty() {
                        continue;
                    }
                    let negs = g.constant(stack_embeddings(&negs)?);
                    intra_terms.push(gated_intra_loss(anchor, positive, negs, margins[r], cfg.delta)?);
                }
            }
        }
    }

    let terms = intra_terms.len();
    let (total, intra_value) = if terms == 0 {
        (ce, 0.0)
    } else {
        let mut sum = intra_terms[0];
        for t in &intra_terms[1..] {
            sum = sum.add(*t)?;
        }
        let intra = sum.scale(1.0 / terms as f64);
        (teacher_total_loss(ce, intra, cfg.lambda)?, intra.item())
    };
    let total_value = total.item();
    if total_value.is_finite() {
        g.backward(total)?;
        model.sgd_step(&bound, lr);
    }
    Ok(StepOutcome {
        total: total_value,
        ce: ce.item(),
        intra: intra_value,
        terms,
        gate_open,
        drains,
    })
}

/// Source of soft labels for distillation.
pub trait SoftLabeler {
    fn soft_labels(&self, x: &Tensor) -> Result<Tensor>;
    fn classes(&self) -> usize;
}

impl SoftLabeler for MlpModel {
    fn soft_labels(&self, x: &Tensor) -> Result<Tensor> {
        self.predict_proba(x)
    }

    fn classes(&self) -> usize {
        MlpModel::classes(self)
    }
}

/// Trains a student from scratch on `alpha * CE(y, p_s) + (1 - alpha) * CE(p_t, p_s)`,
/// with teacher outputs recomputed for every batch.
pub fn distill_student<T: SoftLabeler + ?Sized>(
    teacher: &T,
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainLog)> {
    let student = MlpModel::init(&cfg.student_dims(ds.dim(), ds.classes), mix_seed(cfg.seed, 0x5eed))?;
    distill_student_from(student, teacher, ds, cfg)
}

pub fn distill_student_from<T: SoftLabeler + ?Sized>(
    mut student: MlpModel,
    teacher: &T,
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainLog)> {
    cfg.validate()?;
    check_dataset(ds, &student)?;
    if teacher.classes() != ds.classes {
        return Err(Error::contract(format!(
            "teacher predicts {} classes, dataset has {}",
            teacher.classes(),
            ds.classes
        )));
    }
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let lr = lr_at(cfg, epoch);
        let mut acc = EpochAcc::default();
        for (b, idx) in batch_iter(ds.len(), cfg.batch_size, mix_seed(cfg.seed, epoch as u64))
            .into_iter()
            .enumerate()
        {
            let started = Instant::now();
            let x = ds.features(&idx);
            let p_t = teacher.soft_labels(&x)?;
            let g = Graph::new();
            let bound = student.bind(&g, true);
            let p_s = bound.forward(g.constant(x))?.logits.softmax_rows();
            let y = g.constant(one_hot_rows(&ds.labels(&idx), ds.classes));
            let loss = kd_student_loss(y, g.constant(p_t), p_s, cfg.alpha)?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    ce: value,
                    intra: 0.0,
                });
            }
            g.backward(loss)?;
            student.sgd_step(&bound, lr);
            acc.elapsed_ms += started.elapsed().as_secs_f64() * 1e3;
            acc.ce += value;
            acc.batches += 1;
            acc.seen += idx.len();
            log.batches.push(BatchLoss {
                epoch,
                batch: b,
                total: value,
                ce: value,
                intra: 0.0,
                terms: 0,
            });
        }
        log.rows.push(acc.row(epoch, lr));
    }
    Ok((student, log))
}

/// Mean Euclidean distance between unit embeddings of distinct same-class
/// pairs, and of cross-class pairs.
pub fn pairwise_dispersion(model: &MlpModel, ds: &Dataset) -> Result<(f64, f64)> {
    let e = model.embed_normalized(&ds.all_features())?;
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..ds.len() {
        for j in i + 1..ds.len() {
            let d = e
                .row(i)
                .iter()
                .zip(e.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if ds.samples[i].y == ds.samples[j].y {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    Ok((intra / n_intra.max(1) as f64, inter / n_inter.max(1) as f64))
}

/// Mean entropy (nats) of the model's softmax outputs on `ds`.
pub fn mean_soft_label_entropy(model: &MlpModel, ds: &Dataset) -> Result<f64> {
    let p = model.predict_proba(&ds.all_features())?;
    Ok((0..p.rows()).map(|r| crate::losses::entropy(p.row(r))).sum::<f64>() / p.rows() as f64)
}

/// Mean of the largest class probability on `ds`.
pub fn mean_max_probability(model: &MlpModel, ds: &Dataset) -> Result<f64> {
    let p = model.predict_proba(&ds.all_features())?;
    Ok((0..p.rows())
        .map(|r| p.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / p.rows() as f64)
}
