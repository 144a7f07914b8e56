use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use marginkd::synthdata::generate_multiview;
use marginkd::theory::{
    config_hash, empirical_distances, lambda_sweep, loss_lower_bounds, minimize_tradeoff, random_embedder,
    theorem1_check, theorem2_bound_check, theorem2_constants, DistanceConfig, Embedder, FreeEmbeddingConfig,
};
use marginkd::train::{self, distill_student};
use marginkd::{Dataset, MlpModel, MultiViewSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{read_flat, resolve, to_flat};
use crate::exit::{UsageError, VerifyFailed};

const DEFAULT_OUT: &str = "marginkd-out";

fn resolve_with<T: Serialize + serde::de::DeserializeOwned>(
    base: T,
    config: &Option<PathBuf>,
    cli: &[(String, String)],
) -> Result<T> {
    let mut kv = match config {
        Some(p) => read_flat(p)?,
        None => Vec::new(),
    };
    kv.extend_from_slice(cli);
    resolve(base, &kv)
}

/// Creates `out` and records the resolved config there before any work runs.
fn prepare_out<T: Serialize>(out: &Option<PathBuf>, command: &str, cfg: &T) -> Result<(PathBuf, String)> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT).join(command));
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let hash = config_hash(cfg)?;
    write_text(&dir.join("resolved.conf"), &to_flat(cfg)?)?;
    Ok((dir, hash))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn write_manifest<T: Serialize>(dir: &Path, command: &str, cfg: &T, hash: &str, extra: Value) -> Result<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "config_hash": hash,
        "results": extra,
    });
    write_json(&dir.join("manifest.json"), &manifest)
}

fn load_dataset(path: &str) -> Result<Dataset> {
    if path.is_empty() {
        return Err(UsageError("a dataset is required (--data or `data` in the config)".into()).into());
    }
    Dataset::load_csv(Path::new(path), 0).with_context(|| format!("reading dataset {path}"))
}

fn load_model(path: &str, what: &str) -> Result<MlpModel> {
    if path.is_empty() {
        return Err(UsageError(format!("a {what} checkpoint is required")).into());
    }
    MlpModel::load(Path::new(path)).with_context(|| format!("reading {what} checkpoint {path}"))
}

fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    model.save(path).with_context(|| format!("writing checkpoint {}", path.display()))?;
    let back = MlpModel::load(path).with_context(|| format!("re-reading checkpoint {}", path.display()))?;
    anyhow::ensure!(back.to_bytes() == model.to_bytes(), "checkpoint {} did not round-trip", path.display());
    Ok(())
}

fn save_log(log: &marginkd::TrainLog, path: &Path) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
    log.write_csv(std::io::BufWriter::new(f))?;
    Ok(())
}

pub fn gen_data(config: &Option<PathBuf>, out: &Option<PathBuf>, cli: &[(String, String)]) -> Result<()> {
    let spec: MultiViewSpec = resolve_with(MultiViewSpec::default(), config, cli)?;
    let (dir, hash) = prepare_out(out, "gen-data", &spec)?;
    let ds = generate_multiview(&spec)?;
    let path = dir.join("data.csv");
    ds.save_csv(&path).with_context(|| format!("writing dataset {}", path.display()))?;
    write_manifest(
        &dir,
        "gen-data",
        &spec,
        &hash,
        json!({"data": "data.csv", "rows": ds.len(), "classes": ds.classes, "dim": ds.dim()}),
    )?;
    println!("wrote {} samples to {}", ds.len(), path.display());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TeacherRun {
    data: String,
    #[serde(flatten)]
    train: TrainConfig,
}

pub fn train_teacher(config: &Option<PathBuf>, out: &Option<PathBuf>, cli: &[(String, String)]) -> Result<()> {
    let run: TeacherRun = resolve_with(
        TeacherRun {
            data: String::new(),
            train: TrainConfig::default(),
        },
        config,
        cli,
    )?;
    run.train.validate().map_err(|e| UsageError(e.to_string()))?;
    let (dir, hash) = prepare_out(out, "train-teacher", &run)?;
    let ds = load_dataset(&run.data)?;
    let (model, log) = train::train_teacher(&ds, &run.train)?;
    save_model(&model, &dir.join("teacher.ckpt"))?;
    save_log(&log, &dir.join("train_log.csv"))?;
    write_json(&dir.join("cache_stats.json"), &log.cache_stats)?;
    let accuracy = model.accuracy(&ds)?;
    let last = log.rows.last().expect("epochs >= 1");
    write_manifest(
        &dir,
        "train-teacher",
        &run,
        &hash,
        json!({
            "checkpoint": "teacher.ckpt",
            "log": "train_log.csv",
            "train_accuracy": accuracy,
            "final_ce": last.ce,
            "final_intra": last.intra,
            "final_gate_frac": last.gate_frac,
            "total_drains": log.rows.iter().map(|r| r.drains).sum::<u64>(),
        }),
    )?;
    println!("teacher train accuracy {:.4}, final CE {:.4}", accuracy, last.ce);
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DistillRun {
    data: String,
    teacher: String,
    #[serde(flatten)]
    train: TrainConfig,
}

pub fn distill(config: &Option<PathBuf>, out: &Option<PathBuf>, cli: &[(String, String)]) -> Result<()> {
    let run: DistillRun = resolve_with(
        DistillRun {
            data: String::new(),
            teacher: String::new(),
            train: TrainConfig::default(),
        },
        config,
        cli,
    )?;
    run.train.validate().map_err(|e| UsageError(e.to_string()))?;
    let (dir, hash) = prepare_out(out, "distill", &run)?;
    let teacher = load_model(&run.teacher, "teacher")?;
    let ds = load_dataset(&run.data)?;
    if teacher.classes() != ds.classes || teacher.input_dim() != ds.dim() {
        return Err(UsageError(format!(
            "teacher expects {} inputs and {} classes, dataset has {} and {}",
            teacher.input_dim(),
            teacher.classes(),
            ds.dim(),
            ds.classes
        ))
        .into());
    }
    let (student, log) = distill_student(&teacher, &ds, &run.train)?;
    save_model(&student, &dir.join("student.ckpt"))?;
    save_log(&log, &dir.join("train_log.csv"))?;
    let student_acc = student.accuracy(&ds)?;
    let teacher_acc = teacher.accuracy(&ds)?;
    write_manifest(
        &dir,
        "distill",
        &run,
        &hash,
        json!({
            "checkpoint": "student.ckpt",
            "log": "train_log.csv",
            "student_accuracy": student_acc,
            "teacher_accuracy": teacher_acc,
        }),
    )?;
    println!("student accuracy {student_acc:.4} (teacher {teacher_acc:.4})");
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct VerifyRun {
    data: String,
    checkpoint: String,
    anchors: usize,
    m: usize,
    n: usize,
    aug_strength: f64,
    lambdas: Vec<f64>,
    seeds: Vec<u64>,
    classes: usize,
    per_class: usize,
    dim: usize,
    steps: usize,
    lr: f64,
    inject_ratio: Option<f64>,
    seed: u64,
}

impl Default for VerifyRun {
    fn default() -> Self {
        let free = FreeEmbeddingConfig::default();
        VerifyRun {
            data: String::new(),
            checkpoint: String::new(),
            anchors: 50,
            m: free.m,
            n: free.n,
            aug_strength: 0.1,
            lambdas: vec![0.1, 1.0, 10.0],
            seeds: vec![0, 1, 2],
            classes: free.classes,
            per_class: free.per_class,
            dim: free.dim,
            steps: free.steps,
            lr: free.lr,
            inject_ratio: None,
            seed: 0,
        }
    }
}

const EXACT_TOL: f64 = 1e-9;

pub fn verify(config: &Option<PathBuf>, out: &Option<PathBuf>, cli: &[(String, String)]) -> Result<()> {
    let run: VerifyRun = resolve_with(VerifyRun::default(), config, cli)?;
    if run.lambdas.is_empty() || run.seeds.is_empty() {
        return Err(UsageError("verify needs at least one lambda and one seed".into()).into());
    }
    let (dir, hash) = prepare_out(out, "verify", &run)?;
    let ds = if run.data.is_empty() {
        generate_multiview(&MultiViewSpec {
            seed: run.seed,
            ..MultiViewSpec::default()
        })?
    } else {
        load_dataset(&run.data)?
    };
    let embedder: Box<dyn Embedder> = if run.checkpoint.is_empty() {
        Box::new(random_embedder(ds.dim(), 16, run.seed)?)
    } else {
        Box::new(load_model(&run.checkpoint, "embedder")?)
    };
    let mut failures = Vec::new();

    let distances = empirical_distances(
        embedder.as_ref(),
        &ds,
        &DistanceConfig {
            anchors: run.anchors.min(ds.len()),
            m: run.m,
            n: run.n,
            aug_strength: run.aug_strength,
            seed: run.seed,
        },
    )?;
    let (inter_lb, intra_lb) = loss_lower_bounds(run.m, run.n)?;
    let mut identity = Vec::new();
    for r in &distances {
        let (exact, asymptotic) = theorem1_check(r);
        if !(exact < EXACT_TOL) {
            failures.push(format!("anchor {}: exact residual {exact:.3e}", r.anchor));
        }
        if r.l_inter < inter_lb - 1e-9 || r.l_intra < intra_lb - 1e-9 {
            failures.push(format!("anchor {}: loss below its lower bound", r.anchor));
        }
        identity.push(json!({"anchor": r.anchor, "exact_residual": exact, "asymptotic_residual": asymptotic}));
    }

    let constants = theorem2_constants(run.m, run.n)?;
    if !(constants.c0 > 0.0 && constants.c1 > 0.0 && constants.c2 > 0.0 && constants.c3 > 0.0)
        || (constants.c1 * constants.c3 - 1.0).abs() > 1e-12
    {
        failures.push(format!("constants out of range: {constants:?}"));
    }

    let mut bounds = Vec::new();
    for &lambda in &run.lambdas {
        for &seed in &run.seeds {
            let r = minimize_tradeoff(&FreeEmbeddingConfig {
                classes: run.classes,
                per_class: run.per_class,
                dim: run.dim,
                m: run.m,
                n: run.n,
                lambda,
                steps: run.steps,
                lr: run.lr,
                seed,
            })?;
            let l_intra = match run.inject_ratio {
                Some(ratio) => ratio * r.l_inter,
                None => r.l_intra,
            };
            let b = theorem2_bound_check(l_intra, r.l_inter, lambda, run.m, run.n)?;
            if !b.satisfied {
                failures.push(format!(
                    "lambda {lambda}, seed {seed}: ratio {:.4} outside [{:.4}, {:.4}]",
                    b.ratio, b.lower, b.upper
                ));
            }
            bounds.push(json!({
                "seed": seed,
                "l_inter": r.l_inter,
                "l_intra": l_intra,
                "converged": r.converged,
                "injected": run.inject_ratio.is_some(),
                "bound": b,
            }));
        }
    }

    let summary = json!({"passed": failures.is_empty(), "failures": failures});
    write_json(
        &dir.join("verify_report.json"),
        &json!({
            "distance_reports": distances,
            "identity_residuals": identity,
            "loss_lower_bounds": {"inter": inter_lb, "intra": intra_lb},
            "constants": constants,
            "bounds": bounds,
            "summary": summary,
        }),
    )?;
    write_manifest(&dir, "verify", &run, &hash, json!({"report": "verify_report.json", "summary": summary}))?;
    println!(
        "{} distance reports, {} bound checks, c = ({:.4}, {:.4}, {:.4}, {:.4}): {}",
        distances.len(),
        bounds.len(),
        constants.c0,
        constants.c1,
        constants.c2,
        constants.c3,
        if failures.is_empty() { "all checks passed" } else { "FAILED" }
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(VerifyFailed(failures).into())
    }
}

#[derive(Serialize, Deserialize)]
struct SweepRun {
    data: String,
    lambdas: Vec<f64>,
    seeds: Vec<u64>,
    test_fraction: f64,
    #[serde(flatten)]
    train: TrainConfig,
}

pub fn sweep(config: &Option<PathBuf>, out: &Option<PathBuf>, cli: &[(String, String)]) -> Result<()> {
    let run: SweepRun = resolve_with(
        SweepRun {
            data: String::new(),
            lambdas: vec![0.0, 0.01, 0.02, 0.03],
            seeds: vec![0, 1, 2, 3, 4],
            test_fraction: 0.3,
            train: TrainConfig::default(),
        },
        config,
        cli,
    )?;
    run.train.validate().map_err(|e| UsageError(e.to_string()))?;
    if !run.lambdas.contains(&0.0) {
        return Err(UsageError("the lambda list must include the 0 control".into()).into());
    }
    let (dir, hash) = prepare_out(out, "sweep", &run)?;
    // `seed` fixes the data and the split; per-cell seeds come from `seeds`.
    let ds = if run.data.is_empty() {
        generate_multiview(&MultiViewSpec {
            seed: run.train.seed,
            ..MultiViewSpec::default()
        })?
    } else {
        load_dataset(&run.data)?
    };
    let (train, held_out) = ds.split(run.test_fraction, run.train.seed)?;
    let mut report = lambda_sweep(&train, &held_out, &run.lambdas, &run.train, &run.seeds)?;
    // Rows carry the hash of the resolved run config, which also fixes the data.
    report.config_hash = hash.clone();

    let metrics = dir.join("sweep_metrics.csv");
    report.write_metrics_csv(fs::File::create(&metrics).with_context(|| format!("writing {}", metrics.display()))?)?;
    let summary = dir.join("sweep_summary.csv");
    report.write_summary_csv(fs::File::create(&summary).with_context(|| format!("writing {}", summary.display()))?)?;
    let overhead = report.overhead_ratio();
    write_json(&dir.join("sweep.json"), &json!({"report": report, "overhead_ratio": overhead}))?;
    let flagged: Vec<Value> = report
        .cells
        .iter()
        .filter(|c| c.error.is_some())
        .map(|c| json!({"lambda": c.lambda, "seed": c.seed, "diverged": c.diverged, "error": c.error}))
        .collect();
    write_manifest(
        &dir,
        "sweep",
        &run,
        &hash,
        json!({
            "metrics": "sweep_metrics.csv",
            "summary": "sweep_summary.csv",
            "teacher_runs": report.cells.len(),
            "flagged_cells": flagged,
        }),
    )?;
    println!("lambda  intra_dist         entropy            student_acc        runs");
    for r in &report.rows {
        println!(
            "{:<7} {:.4} ± {:.4}  {:.4} ± {:.4}  {:.4} ± {:.4}  {}{}",
            r.lambda,
            r.intra_distance.mean,
            r.intra_distance.std,
            r.entropy.mean,
            r.entropy.std,
            r.student_accuracy.mean,
            r.student_accuracy.std,
            r.runs,
            if r.diverged > 0 { format!(" ({} flagged)", r.diverged) } else { String::new() }
        );
    }
    match overhead {
        Some(x) => println!("intra-loss overhead: {x:.2}x ms/batch of the CE-only control"),
        None => println!("intra-loss overhead: unavailable"),
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ReportRun {
    from: String,
}

pub fn report(config: &Option<PathBuf>, out: &Option<PathBuf>, cli: &[(String, String)]) -> Result<()> {
    let run: ReportRun = resolve_with(ReportRun { from: String::new() }, config, cli)?;
    if run.from.is_empty() {
        return Err(UsageError("report needs --from <directory>".into()).into());
    }
    let from = PathBuf::from(&run.from);
    let manifest_path = from.join("manifest.json");
    let text =
        fs::read_to_string(&manifest_path).with_context(|| format!("reading manifest {}", manifest_path.display()))?;
    let manifest: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", manifest_path.display()))?;

    let mut md = String::new();
    let command = manifest["command"].as_str().unwrap_or("unknown");
    md.push_str(&format!("# {command} run\n\nconfig hash `{}`\n\n", manifest["config_hash"].as_str().unwrap_or("")));
    if let Value::Object(results) = &manifest["results"] {
        md.push_str("| result | value |\n|---|---|\n");
        for (k, v) in results {
            if !v.is_object() && !v.is_array() {
                md.push_str(&format!("| {k} | {v} |\n"));
            }
        }
        md.push('\n');
    }
    let summary = from.join("sweep_summary.csv");
    if summary.exists() {
        let text = fs::read_to_string(&summary).with_context(|| format!("reading {}", summary.display()))?;
        let mut lines = text.lines();
        if let Some(header) = lines.next() {
            let cols: Vec<&str> = header.split(',').filter(|c| *c != "config_hash").collect();
            md.push_str(&format!("| {} |\n|{}\n", cols.join(" | "), "---|".repeat(cols.len())));
            for line in lines {
                let cells: Vec<&str> = line.split(',').take(cols.len()).collect();
                md.push_str(&format!("| {} |\n", cells.join(" | ")));
            }
            md.push('\n');
        }
    }
    let verify = from.join("verify_report.json");
    if verify.exists() {
        let v: Value = serde_json::from_str(
            &fs::read_to_string(&verify).with_context(|| format!("reading {}", verify.display()))?,
        )?;
        md.push_str("| lambda | ratio | lower | upper | satisfied |\n|---|---|---|---|---|\n");
        for b in v["bounds"].as_array().into_iter().flatten() {
            let r = &b["bound"];
            md.push_str(&format!(
                "| {} | {:.4} | {:.4} | {:.4} | {} |\n",
                r["lambda"],
                r["ratio"].as_f64().unwrap_or(f64::NAN),
                r["lower"].as_f64().unwrap_or(f64::NAN),
                r["upper"].as_f64().unwrap_or(f64::NAN),
                r["satisfied"]
            ));
        }
        md.push('\n');
    }
    let out_dir = out.clone().unwrap_or_else(|| from.join("report"));
    let (dir, _) = prepare_out(&Some(out_dir), "report", &run)?;
    write_text(&dir.join("report.md"), &md)?;
    print!("{md}");
    Ok(())
}
