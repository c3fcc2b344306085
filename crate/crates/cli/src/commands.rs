//! One function per subcommand. Each computes every output before writing
//! any of them.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use diff2dist::train::train_observed;
use diff2dist::{
    isomap_embed, knn_sweep, split_dataset, Checkpoint, Dataset, DistanceMatrix, KRange, Method, Model, Split,
};
use morpho_sim::sweep::manifest_csv;
use morpho_sim::{
    attribute_only_benchmark, attribute_parameters, parameter_grid, run_sweep, two_class_benchmark, SimulationConfig,
};

use crate::config::{GenerateMode, RunConfig};
use crate::error::{io_err, CliError, Result};
use crate::output::{strip_comments, Outputs, Stamp};

fn summary(stamp: &Stamp, written: Vec<PathBuf>, extra: Value) -> Value {
    let mut v = json!({
        "command": stamp.command,
        "seed": stamp.seed,
        "config_sha256": stamp.config_hash,
        "written": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    if let (Value::Object(map), Value::Object(more)) = (&mut v, extra) {
        map.extend(more);
    }
    v
}

fn dataset_meta(stamp: &Stamp, cfg: &RunConfig) -> Value {
    let mut meta = stamp.meta();
    meta["config"] = serde_json::to_value(RunConfig { threads: None, ..cfg.clone() }).expect("config serializes");
    meta
}

pub fn generate(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let stamp = Stamp::new("generate", cfg);
    let dataset = match cfg.generate_mode {
        GenerateMode::Sweep => return sweep(cfg, out),
        GenerateMode::TwoClass => two_class_benchmark(&cfg.benchmark)?,
        GenerateMode::AttributeOnly => attribute_only_benchmark(&cfg.benchmark, cfg.attribute_factor)?,
    };
    let dataset = split_dataset(&dataset, cfg.split_ratio, cfg.seed, cfg.split_mode)?;
    let mut files = Outputs::default();
    files.add(out.join("dataset.json"), dataset.to_json_string_with_meta(dataset_meta(&stamp, cfg))?);
    let extra = json!({ "graphs": dataset.len(), "nodes": dataset.n() });
    Ok(summary(&stamp, files.commit()?, extra))
}

/// Loads a dataset; one without validation graphs is split per `cfg`.
pub fn load_dataset(path: &Path, cfg: &RunConfig) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let d = Dataset::from_json_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if d.indices_in(Split::Validation).is_empty() {
        Ok(split_dataset(&d, cfg.split_ratio, cfg.seed, cfg.split_mode)?)
    } else {
        Ok(d)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Checkpoint::from_json_str(&text)
        .and_then(Checkpoint::into_model)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// The checkpoint's model, or an untrained method-1 model when none is given.
fn model_for(cfg: &RunConfig, dataset: &Dataset, checkpoint: Option<&Path>) -> Result<Model> {
    let model = match checkpoint {
        Some(path) => load_checkpoint(path)?,
        None if cfg.method()? == Method::UnweightedGdd => {
            let train: Vec<_> = dataset.indices_in(Split::Train).iter().map(|&i| &dataset.graphs()[i]).collect();
            Model::init(Method::UnweightedGdd, dataset.n(), &train, &cfg.model)?
        }
        None => {
            return Err(CliError::Usage(format!(
                "method {} needs --checkpoint; run `train` first",
                cfg.method
            )))
        }
    };
    if model.n() != dataset.n() {
        return Err(CliError::Config(format!(
            "checkpoint expects {}-node graphs, dataset has {}",
            model.n(),
            dataset.n()
        )));
    }
    Ok(model)
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Value> {
    let stamp = Stamp::new("train", cfg);
    let dataset = load_dataset(data, cfg)?;
    let epochs = cfg.train.epochs;
    let outcome = train_observed(&dataset, cfg.method()?, &cfg.model, &cfg.train, |e, loss, _| {
        if (e + 1) % 50 == 0 || e + 1 == epochs {
            log::info!("epoch {}/{epochs} mean loss {loss:.6}", e + 1);
        }
    })?;
    let mut meta = stamp.meta();
    meta["train"] = serde_json::to_value(&cfg.train)?;
    meta["model"] = serde_json::to_value(&cfg.model)?;
    let checkpoint = Checkpoint::from_model(&outcome.model, meta);
    let mut loss = String::from("epoch,mean_loss\n");
    for (e, l) in outcome.history.iter().enumerate() {
        loss.push_str(&format!("{},{l:.12e}\n", e + 1));
    }
    let mut files = Outputs::default();
    files.add(out.join("checkpoint.json"), checkpoint.to_json_string()?);
    files.add(out.join("loss.csv"), stamp.csv(&loss));
    let extra = json!({
        "method": cfg.method,
        "epochs": outcome.history.len(),
        "final_loss": outcome.history.last(),
    });
    Ok(summary(&stamp, files.commit()?, extra))
}

fn distances(cfg: &RunConfig, data: &Path, checkpoint: Option<&Path>) -> Result<DistanceMatrix> {
    let dataset = load_dataset(data, cfg)?;
    let model = model_for(cfg, &dataset, checkpoint)?;
    Ok(model.distance_matrix(&dataset)?)
}

pub fn eval(cfg: &RunConfig, data: &Path, checkpoint: Option<&Path>, out: &Path) -> Result<Value> {
    let stamp = Stamp::new("eval", cfg);
    let dm = distances(cfg, data, checkpoint)?;
    let report = knn_sweep(&dm, cfg.eval.k_min, cfg.eval.k_max, KRange::Inclusive)?;
    let mut files = Outputs::default();
    files.add(out.join("knn.csv"), stamp.csv(&report.to_csv()));
    let extra = json!({ "best_k": report.best_k, "best_accuracy": report.best_accuracy });
    Ok(summary(&stamp, files.commit()?, extra))
}

pub fn dist(cfg: &RunConfig, data: &Path, checkpoint: Option<&Path>, out: &Path) -> Result<Value> {
    let stamp = Stamp::new("dist", cfg);
    let dm = distances(cfg, data, checkpoint)?;
    let mut files = Outputs::default();
    files.add(out.join("distances.csv"), stamp.csv(&dm.to_csv()));
    files.add(out.join("labels.csv"), stamp.csv(&dm.labels_csv()));
    Ok(summary(&stamp, files.commit()?, json!({ "graphs": dm.len() })))
}

pub fn embed(cfg: &RunConfig, data: &Path, checkpoint: Option<&Path>, out: &Path) -> Result<Value> {
    let stamp = Stamp::new("embed", cfg);
    let dm = distances(cfg, data, checkpoint)?;
    let embedding = isomap_embed(&dm, cfg.eval.neighbors)?;
    let mut files = Outputs::default();
    files.add(out.join("embedding.csv"), stamp.csv(&embedding.to_csv()));
    Ok(summary(&stamp, files.commit()?, json!({ "rows": embedding.coords.len() })))
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<Value> {
    let stamp = Stamp::new("sweep", cfg);
    let mut configs = parameter_grid(&cfg.sweep.simulation);
    if let Some(limit) = cfg.sweep.limit {
        configs.truncate(limit);
    }
    let runs = run_sweep(&configs, &cfg.sweep.extract)?;
    let mut files = Outputs::default();
    let mut rows = Vec::with_capacity(runs.len());
    for run in &runs {
        let stem = format!("sweep/sim_{:03}", run.id);
        files.add(out.join(format!("{stem}.mesh.json")), run.tessellation.to_json_string()?);
        let output = if run.graphs.is_empty() {
            log::warn!("config {} produced no graphs", run.id);
            String::new()
        } else {
            let mut meta = stamp.meta();
            meta["config_id"] = json!(run.id);
            meta["simulation"] = serde_json::to_value(&run.config)?;
            let dataset = Dataset::new(run.graphs.clone())?;
            files.add(out.join(format!("{stem}.json")), dataset.to_json_string_with_meta(meta)?);
            format!("{stem}.json")
        };
        rows.push((run.id, run.config.clone(), output));
    }
    files.add(out.join("manifest.csv"), stamp.csv(&manifest_csv(&rows)));
    let graphs: usize = runs.iter().map(|r| r.graphs.len()).sum();
    Ok(summary(&stamp, files.commit()?, json!({ "configs": runs.len(), "graphs": graphs })))
}

/// `(config, dataset path)` per manifest row that has an output.
pub fn read_manifest(path: &Path, base: &SimulationConfig) -> Result<Vec<(SimulationConfig, Option<PathBuf>)>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let bad = |line: usize, what: &str| CliError::Config(format!("{}:{line}: {what}", path.display()));
    let body = strip_comments(&text);
    let mut lines = body.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == "config_id,spring_constant,vertex_exclusion,r_div,r_angle,seed,output" => {}
        _ => return Err(bad(1, "unexpected header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.splitn(7, ',').collect();
        if f.len() != 7 {
            return Err(bad(i + 1, "expected 7 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
        let cfg = SimulationConfig {
            spring_constant: num(f[1])?,
            vertex_exclusion: num(f[2])?,
            r_div: num(f[3])?,
            r_angle: num(f[4])?,
            seed: f[5].parse().map_err(|_| bad(i + 1, "bad seed"))?,
            ..base.clone()
        };
        out.push((cfg, (!f[6].is_empty()).then(|| dir.join(f[6]))));
    }
    Ok(out)
}

pub fn attribute(cfg: &RunConfig, data: &Path, checkpoint: &Path, manifest: &Path, out: &Path) -> Result<Value> {
    let stamp = Stamp::new("attribute", cfg);
    let text = std::fs::read_to_string(data).map_err(io_err(data))?;
    let bio = Dataset::from_json_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", data.display())))?;
    let model = model_for(cfg, &bio, Some(checkpoint))?;
    let mut sims = Vec::new();
    for (sim_cfg, path) in read_manifest(manifest, &cfg.sweep.simulation)? {
        let Some(path) = path else { continue };
        let d = Dataset::load(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        sims.push((sim_cfg, d.graphs().to_vec()));
    }
    let rows = attribute_parameters(&bio, &sims, &model, cfg.attribution_k)?;
    let mut files = Outputs::default();
    files.add(out.join("attribution.csv"), stamp.csv(&morpho_sim::sweep::attribution_csv(&rows)));
    Ok(summary(&stamp, files.commit()?, json!({ "graphs": rows.len(), "simulations": sims.len() })))
}
