//! Seeded multi-view Gaussian data.
//!
//! Each class owns a center; each class has `views_per_class` sub-clusters
//! ("views") placed around that center; samples are isotropic Gaussian noise
//! around their view center. Positives for contrastive terms come from
//! [`augment`], an additive Gaussian perturbation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::Tensor;

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
    pub view_id: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub classes: usize,
    pub views_per_class: usize,
    pub seed: u64,
}

/// Generator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiViewSpec {
    pub classes: usize,
    pub views_per_class: usize,
    pub per_view: usize,
    pub d_in: usize,
    pub class_sep: f64,
    pub view_sep: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for MultiViewSpec {
    /// 4 classes, 3 views each, 150 samples per class.
    fn default() -> Self {
        MultiViewSpec {
            classes: 4,
            views_per_class: 3,
            per_view: 50,
            d_in: 32,
            class_sep: 3.0,
            view_sep: 2.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

fn standard_normal(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// `count` points on the sphere of radius `radius`, pairwise at least `min_gap` apart.
fn spread_points(
    rng: &mut ChaCha8Rng,
    count: usize,
    d: usize,
    radius: f64,
    min_gap: f64,
    what: &str,
) -> Result<Vec<Vec<f64>>> {
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(count);
    while points.len() < count {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let g = standard_normal(rng, d);
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                continue;
            }
            let p: Vec<f64> = g.iter().map(|v| v * radius / n).collect();
            if points.iter().all(|q| dist(&p, q) >= min_gap) {
                points.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place {count} {what} {min_gap} apart in {d} dimension(s)"
            )));
        }
    }
    Ok(points)
}

pub fn generate_multiview(spec: &MultiViewSpec) -> Result<Dataset> {
    let MultiViewSpec {
        classes,
        views_per_class,
        per_view,
        d_in,
        class_sep,
        view_sep,
        noise,
        seed,
    } = *spec;
    if classes == 0 || views_per_class == 0 || per_view == 0 || d_in == 0 {
        return Err(Error::contract("all counts must be at least 1"));
    }
    if !(class_sep > view_sep && view_sep > noise && noise > 0.0) {
        return Err(Error::contract(format!(
            "need class_sep > view_sep > noise > 0, got {class_sep} / {view_sep} / {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_centers = spread_points(&mut rng, classes, d_in, class_sep, class_sep, "class centers")?;

    let mut samples = Vec::with_capacity(classes * views_per_class * per_view);
    for (y, center) in class_centers.iter().enumerate() {
        let mut offsets = if views_per_class == 1 {
            vec![vec![0.0; d_in]]
        } else {
            spread_points(&mut rng, views_per_class, d_in, view_sep, view_sep, "view centers")?
        };
        // Zero-mean offsets keep the class center at the mean of its views.
        for j in 0..d_in {
            let mean = offsets.iter().map(|o| o[j]).sum::<f64>() / views_per_class as f64;
            for o in offsets.iter_mut() {
                o[j] -= mean;
            }
        }
        for (view_id, off) in offsets.iter().enumerate() {
            for _ in 0..per_view {
                let g = standard_normal(&mut rng, d_in);
                let x = (0..d_in).map(|j| center[j] + off[j] + noise * g[j]).collect();
                samples.push(Sample { x, y, view_id });
            }
        }
    }
    Ok(Dataset {
        samples,
        classes,
        views_per_class,
        seed,
    })
}

/// `x + strength * g` with `g` a standard normal vector drawn from `seed`.
pub fn augment(x: &[f64], strength: f64, seed: u64) -> Vec<f64> {
    if strength == 0.0 {
        return x.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.iter()
        .map(|&v| {
            let g: f64 = StandardNormal.sample(&mut rng);
            v + strength * g
        })
        .collect()
}

/// A seeded permutation of `0..n` cut into consecutive batches.
pub fn batch_iter(n: usize, batch_size: usize, epoch_seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.x.len())
    }

    /// Indices of every sample labelled `y`.
    pub fn class_of(&self, y: usize) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.y == y)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.samples[i].y).collect()
    }

    /// Feature rows for `idx` as a `[idx.len(), dim]` matrix.
    pub fn features(&self, idx: &[usize]) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&self.samples[i].x);
        }
        Tensor::matrix(idx.len(), d, data).expect("rows share the dataset dimension")
    }

    pub fn all_features(&self) -> Tensor {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.features(&idx)
    }

    /// Stratified split; returns `(train, test)`. Each class keeps at least one
    /// training sample.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::contract(format!(
                "test_fraction must be in [0, 1), got {test_fraction}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for y in 0..self.classes {
            let mut idx = self.class_of(y);
            idx.shuffle(&mut rng);
            let n_test = ((idx.len() as f64 * test_fraction).round() as usize).min(idx.len().saturating_sub(1));
            let (te, tr) = idx.split_at(n_test);
            let mut te = te.to_vec();
            let mut tr = tr.to_vec();
            te.sort_unstable();
            tr.sort_unstable();
            test.extend(te);
            train.extend(tr);
        }
        train.sort_unstable();
        test.sort_unstable();
        let pick = |idx: &[usize]| Dataset {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            classes: self.classes,
            views_per_class: self.views_per_class,
            seed: self.seed,
        };
        Ok((pick(&train), pick(&test)))
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.y >= self.classes {
                return Err(Error::Index {
                    index: s.y,
                    len: self.classes,
                });
            }
            if s.view_id >= self.views_per_class {
                return Err(Error::Index {
                    index: s.view_id,
                    len: self.views_per_class,
                });
            }
            if s.x.len() != self.dim() {
                return Err(Error::dim("dataset", format!("sample {i} has dimension {}", s.x.len())));
            }
        }
        for y in 0..self.classes {
            if self.class_of(y).is_empty() {
                return Err(Error::contract(format!("class {y} has no samples")));
            }
        }
        Ok(())
    }

    /// CSV with header `y,view_id,x0,...`; floats carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["y".to_string(), "view_id".to_string()];
        header.extend((0..self.dim()).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![s.y.to_string(), s.view_id.to_string()];
            rec.extend(s.x.iter().map(|v| format!("{v:.16e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads [`Dataset::write_csv`] output. Class and view counts are inferred
    /// from the largest labels present.
    pub fn read_csv<R: Read>(input: R, seed: u64) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "y" || &header[1] != "view_id" {
            return Err(Error::Format {
                what: "dataset csv",
                detail: "header must start with y,view_id,x0".into(),
            });
        }
        let bad = |line: usize, what: &str| Error::Format {
            what: "dataset csv",
            detail: format!("record {line}: bad {what}"),
        };
        let mut samples = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let y = rec[0].parse().map_err(|_| bad(line, "y"))?;
            let view_id = rec[1].parse().map_err(|_| bad(line, "view_id"))?;
            let x = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(line, "feature"))?;
            samples.push(Sample { x, y, view_id });
        }
        let classes = samples.iter().map(|s| s.y + 1).max().unwrap_or(0);
        let views_per_class = samples.iter().map(|s| s.view_id + 1).max().unwrap_or(0);
        let ds = Dataset {
            samples,
            classes,
            views_per_class,
            seed,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load_csv(path: &Path, seed: u64) -> Result<Dataset> {
        Dataset::read_csv(BufReader::new(File::open(path)?), seed)
    }
}
