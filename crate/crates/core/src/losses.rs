//! Distillation and contrastive objectives, built on [`crate::ndgrad`].
//!
//! Embedding arguments are `[d]` or `[1, d]` nodes; negative sets are `[n, d]`
//! matrices. Similarities are raw dot products, no temperature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::{Tensor, Var};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

const SIMPLEX_TOL: f64 = 1e-9;
const UNIT_TOL: f64 = 1e-9;

/// A point on the probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_simplex(&p)?;
        Ok(ProbVector(p))
    }

    pub fn one_hot(class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::Index {
                index: class,
                len: classes,
            });
        }
        let mut p = vec![0.0; classes];
        p[class] = 1.0;
        Ok(ProbVector(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(self.0.clone())
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.0)
    }
}

/// Shannon entropy in nats; zero entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

fn check_simplex(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::contract("empty probability vector"));
    }
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::contract(format!("probability vector has a negative or non-finite entry: {p:?}")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::contract(format!("probability vector sums to {s}")));
    }
    Ok(())
}

/// Unit-norm feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::contract(format!("embedding norm is {n}, expected 1")));
        }
        Ok(Embedding(v))
    }

    /// Scales `v` onto the unit sphere.
    pub fn normalize(v: &[f64]) -> Result<Self> {
        let n = norm(v);
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateEmbedding { row: 0 });
        }
        Ok(Embedding(v.iter().map(|x| x / n).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Stacks embeddings into an `[n, d]` matrix.
pub fn stack_embeddings(rows: &[Embedding]) -> Result<Tensor> {
    let rows: Vec<&[f64]> = rows.iter().map(Embedding::as_slice).collect();
    Tensor::from_rows(&rows)
}

/// True-class probability minus the largest other-class probability.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Margin(f64);

impl Margin {
    pub fn new(rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::contract(format!("margin {rho} outside [-1, 1]")));
        }
        Ok(Margin(rho))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Gate of the margin-filtered intra loss: open only when strictly above `delta`.
    pub fn passes(self, delta: f64) -> bool {
        self.0 > delta
    }
}

pub fn margin_of(p: &[f64], y: usize) -> Result<Margin> {
    if p.len() < 2 {
        return Err(Error::contract("margin needs at least two classes"));
    }
    if y >= p.len() {
        return Err(Error::Index {
            index: y,
            len: p.len(),
        });
    }
    let best_other = p
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != y)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    // Rounding can push a valid simplex a hair past the bounds.
    Margin::new((p[y] - best_other).clamp(-1.0, 1.0))
}

/// `-Σ target · log(max(pred, 1e-12))`, averaged over rows for batches.
pub fn cross_entropy<'g>(target: Var<'g>, pred: Var<'g>) -> Result<Var<'g>> {
    let (ts, ps) = (target.shape(), pred.shape());
    if ts != ps {
        return Err(Error::dim("cross_entropy", format!("target {ts:?} vs pred {ps:?}")));
    }
    let rows = pred.value().rows() as f64;
    let per_entry = target.mul(pred.clamp_min(PROB_FLOOR).ln())?;
    Ok(per_entry.sum().scale(-1.0 / rows))
}

fn check_rows_simplex(t: &Tensor) -> Result<()> {
    for r in 0..t.rows() {
        check_simplex(t.row(r))?;
    }
    Ok(())
}

/// `q = alpha * y + (1 - alpha) * p_t`.
pub fn soft_target(y: &Tensor, p_t: &Tensor, alpha: f64) -> Result<Tensor> {
    if y.shape() != p_t.shape() {
        return Err(Error::dim("soft_target", format!("{:?} vs {:?}", y.shape(), p_t.shape())));
    }
    let data = y
        .data()
        .iter()
        .zip(p_t.data())
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect();
    Tensor::new(y.shape().to_vec(), data)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::contract(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// Student objective `alpha * CE(y, p_s) + (1 - alpha) * CE(p_t, p_s)`.
pub fn kd_student_loss<'g>(y: Var<'g>, p_t: Var<'g>, p_s: Var<'g>, alpha: f64) -> Result<Var<'g>> {
    check_alpha(alpha)?;
    for v in [y, p_t, p_s] {
        check_rows_simplex(&v.value())?;
    }
    let hard = cross_entropy(y, p_s)?.scale(alpha);
    let soft = cross_entropy(p_t, p_s)?.scale(1.0 - alpha);
    hard.add(soft)
}

/// The same objective in its single-term form `CE(alpha * y + (1 - alpha) * p_t, p_s)`.
pub fn kd_student_loss_combined<'g>(
    y: &Tensor,
    p_t: &Tensor,
    p_s: Var<'g>,
    alpha: f64,
) -> Result<Var<'g>> {
    check_alpha(alpha)?;
    check_rows_simplex(y)?;
    check_rows_simplex(p_t)?;
    check_rows_simplex(&p_s.value())?;
    let q = soft_target(y, p_t, alpha)?;
    cross_entropy(p_s.graph().constant(q), p_s)
}

fn check_tuplet_shapes(anchor: &[usize], positive: &[usize], negatives: &[usize]) -> Result<()> {
    let vec_dim = |shape: &[usize]| match shape {
        [d] | [1, d] => Ok(*d),
        _ => Err(Error::dim("tuplet_loss", format!("embedding must be a vector, got {shape:?}"))),
    };
    let d = vec_dim(anchor)?;
    if vec_dim(positive)? != d {
        return Err(Error::dim(
            "tuplet_loss",
            format!("anchor {anchor:?}, positive {positive:?}"),
        ));
    }
    if negatives.len() != 2 || negatives[0] == 0 {
        return Err(Error::contract(format!(
            "tuplet loss needs a non-empty [n, d] negative set, got {negatives:?}"
        )));
    }
    if negatives[1] != d {
        return Err(Error::dim("tuplet_loss", format!("anchor dim {d}, negatives {negatives:?}")));
    }
    Ok(())
}

/// `log(1 + Σ_j exp(a·n_j) / exp(a·p))`, evaluated as
/// `log(exp(a·p) + Σ_j exp(a·n_j)) - a·p`.
pub fn tuplet_loss<'g>(anchor: Var<'g>, positive: Var<'g>, negatives: Var<'g>) -> Result<Var<'g>> {
    let a_shape = anchor.shape();
    check_tuplet_shapes(&a_shape, &positive.shape(), &negatives.shape())?;
    let anchor_col = anchor.reshape(&[*a_shape.last().expect("checked"), 1])?;
    let pos_sim = anchor.dot(positive)?;
    let neg_sims = negatives.matmul(anchor_col)?;
    pos_sim.exp().add(neg_sims.exp().sum())?.ln().sub(pos_sim)
}

/// Tuplet loss whose negatives share the anchor's class. Selecting those
/// negatives is the caller's job; the formula is [`tuplet_loss`].
pub fn intra_tuplet_loss<'g>(
    anchor: Var<'g>,
    positive: Var<'g>,
    same_class_negatives: Var<'g>,
) -> Result<Var<'g>> {
    tuplet_loss(anchor, positive, same_class_negatives)
}

/// Intra loss when `rho > delta`; otherwise a constant zero with no path back
/// to any input.
pub fn gated_intra_loss<'g>(
    anchor: Var<'g>,
    positive: Var<'g>,
    negatives: Var<'g>,
    rho: Margin,
    delta: f64,
) -> Result<Var<'g>> {
    if !(delta > 0.0) {
        return Err(Error::contract(format!("delta must be positive, got {delta}")));
    }
    if rho.passes(delta) {
        intra_tuplet_loss(anchor, positive, negatives)
    } else {
        check_tuplet_shapes(&anchor.shape(), &positive.shape(), &negatives.shape())?;
        Ok(anchor.graph().constant(Tensor::scalar(0.0)))
    }
}

/// `ce + lambda * intra`.
pub fn teacher_total_loss<'g>(ce: Var<'g>, intra: Var<'g>, lambda: f64) -> Result<Var<'g>> {
    ce.add(intra.scale(lambda))
}

/// Terms of the inter/intra trade-off objective.
#[derive(Clone, Copy, Debug)]
pub struct CombinedLoss<'g> {
    pub total: Var<'g>,
    pub inter: Var<'g>,
    pub intra: Var<'g>,
}

/// `l_inter + lambda * l_intra`, where the inter negatives come from other
/// classes and the intra negatives from the anchor's class.
pub fn combined_contrastive_loss<'g>(
    anchor: Var<'g>,
    positive: Var<'g>,
    inter_negatives: Var<'g>,
    intra_negatives: Var<'g>,
    lambda: f64,
) -> Result<CombinedLoss<'g>> {
    let inter = tuplet_loss(anchor, positive, inter_negatives)?;
    let intra = intra_tuplet_loss(anchor, positive, intra_negatives)?;
    let total = inter.add(intra.scale(lambda))?;
    Ok(CombinedLoss { total, inter, intra })
}

/// Tuplet loss on plain vectors, for evaluation outside a graph.
pub fn tuplet_value(anchor: &[f64], positive: &[f64], negatives: &[&[f64]]) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let sp = dot(anchor, positive);
    let s: f64 = negatives.iter().map(|n| dot(anchor, n).exp()).sum();
    (sp.exp() + s).ln() - sp
}
