//! Contrastive metric learning over the full distance chain.
//!
//! One optimizer step: weigh edges, build Laplacians, eigendecompose, take
//! pairwise distances for a sampled batch, apply the contrastive hinge, then
//! backpropagate through distance, eigendecomposition and edge weights, and
//! apply Adam.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distance::{gdd_pair, gdd_pair_backward};
use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, Dataset, Split};
use crate::model::{Method, Model, ModelConfig};
use crate::spectral::{eigh, edge_weight_grads, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub rho_lower: f64,
    pub rho_upper: f64,
    pub epochs: usize,
    /// Pairs per optimizer step.
    pub batch_pairs: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rho_lower: 0.001,
            rho_upper: 0.33,
            epochs: 600,
            batch_pairs: 256,
            batches_per_epoch: 1,
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.rho_lower && self.rho_lower < self.rho_upper) {
            return Err(Error::Config(format!(
                "need 0 <= rho_lower < rho_upper, got {} and {}",
                self.rho_lower, self.rho_upper
            )));
        }
        if self.batch_pairs == 0 || self.batches_per_epoch == 0 {
            return Err(Error::Config("batch sizes must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// `0.5 * [y max(0, d - rho_lower)^2 + (1 - y) max(0, rho_upper - d)^2]`
/// and its derivative in `d`.
pub fn contrastive_loss(d: f64, same_label: bool, cfg: &TrainConfig) -> (f64, f64) {
    if same_label {
        let gap = (d - cfg.rho_lower).max(0.0);
        (0.5 * gap * gap, gap)
    } else {
        let gap = (cfg.rho_upper - d).max(0.0);
        (0.5 * gap * gap, -gap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

/// Seeded stream of balanced pair batches.
#[derive(Debug, Clone)]
pub struct PairSampler {
    rng: ChaCha8Rng,
}

impl PairSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// `k` unordered pairs of distinct graphs, half same-label and half
    /// cross-label when both kinds exist.
    pub fn sample(&mut self, train: &[usize], labels: &[u32], k: usize) -> Result<Vec<Pair>> {
        if train.len() < 2 {
            return Err(Error::Config("need at least two training graphs".into()));
        }
        let mut by_label: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for &i in train {
            by_label.entry(labels[i]).or_default().push(i);
        }
        let pos_pool: Vec<usize> = by_label
            .values()
            .filter(|m| m.len() >= 2)
            .flatten()
            .copied()
            .collect();
        let has_neg = by_label.len() >= 2;
        let n_pos = match (pos_pool.is_empty(), has_neg) {
            (true, false) => unreachable!("two graphs always form some pair"),
            (true, true) => 0,
            (false, true) => k / 2,
            (false, false) => {
                log::warn!("no cross-label pairs available; batch is all same-label");
                k
            }
        };
        let mut out = Vec::with_capacity(k);
        for _ in 0..n_pos {
            let a = pos_pool[self.rng.gen_range(0..pos_pool.len())];
            let members = &by_label[&labels[a]];
            let b = loop {
                let b = members[self.rng.gen_range(0..members.len())];
                if b != a {
                    break b;
                }
            };
            out.push(Pair {
                a: a.min(b),
                b: a.max(b),
                same: true,
            });
        }
        for _ in n_pos..k {
            let a = train[self.rng.gen_range(0..train.len())];
            let b = loop {
                let b = train[self.rng.gen_range(0..train.len())];
                if labels[b] != labels[a] {
                    break b;
                }
            };
            out.push(Pair {
                a: a.min(b),
                b: a.max(b),
                same: false,
            });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Number of steps taken so far.
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Loss of a single pair under `model`, used for gradient checks.
pub fn pair_loss(model: &Model, g1: &AttributedGraph, g2: &AttributedGraph, same: bool, cfg: &TrainConfig) -> Result<f64> {
    let d = model.pair_distance(&model.spectrum(g1)?, &model.spectrum(g2)?)?;
    Ok(contrastive_loss(d, same, cfg).0)
}

/// Mean contrastive loss over `pairs` and its gradient with respect to
/// [`Model::trainable_flat`].
///
/// `step` only labels errors.
pub fn batch_loss_and_grad(
    model: &Model,
    graphs: &[AttributedGraph],
    pairs: &[Pair],
    cfg: &TrainConfig,
    step: usize,
) -> Result<(f64, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut ids: Vec<usize> = pairs.iter().flat_map(|p| [p.a, p.b]).collect();
    ids.sort_unstable();
    ids.dedup();
    let slot: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(s, &g)| (g, s)).collect();

    let batch_graphs: Vec<&AttributedGraph> = ids.iter().map(|&i| &graphs[i]).collect();
    let forward = model.edge_fn.weigh_many_cached(&batch_graphs)?;
    let mut offsets = Vec::with_capacity(ids.len() + 1);
    offsets.push(0);
    for g in &batch_graphs {
        offsets.push(offsets.last().unwrap() + g.edges().len());
    }
    let spectra: Vec<Spectrum> = batch_graphs
        .par_iter()
        .enumerate()
        .map(|(s, g)| eigh(&model.laplacian(g, &forward.weights[offsets[s]..offsets[s + 1]])?))
        .collect::<Result<_>>()?;

    let n = model.n();
    let scale = 1.0 / pairs.len() as f64;
    let mut loss = 0.0;
    let mut d_lambda = vec![vec![0.0; n]; ids.len()];
    let mut d_distance = vec![0.0; model.distance.p() + n];
    let p = model.distance.p();
    for pair in pairs {
        let (sa, sb) = (slot[&pair.a], slot[&pair.b]);
        let non_finite = |what| Error::NonFinite {
            what,
            step,
            a: pair.a,
            b: pair.b,
        };
        if model.method == Method::UnweightedGdd {
            let d = model.pair_distance(&spectra[sa], &spectra[sb])?;
            let (l, _) = contrastive_loss(d, pair.same, cfg);
            if !l.is_finite() {
                return Err(non_finite("loss"));
            }
            loss += scale * l;
            continue;
        }
        let ctx = gdd_pair(
            &spectra[sa].eigenvalues,
            &spectra[sb].eigenvalues,
            &model.distance,
        )
        .map_err(|e| Error::Pair {
            a: pair.a,
            b: pair.b,
            source: Box::new(e),
        })?;
        let (l, dl) = contrastive_loss(ctx.distance, pair.same, cfg);
        if !l.is_finite() || !dl.is_finite() {
            return Err(non_finite("loss"));
        }
        loss += scale * l;
        let g = gdd_pair_backward(&ctx, &model.distance, scale * dl);
        for j in 0..n {
            d_lambda[sa][j] += g.lambda1[j];
            d_lambda[sb][j] += g.lambda2[j];
        }
        for m in 0..p {
            d_distance[m] += g.t_raw[m];
        }
        for j in 0..n {
            d_distance[p + j] += g.beta_logits[j];
        }
        if d_distance.iter().any(|x| !x.is_finite()) {
            return Err(non_finite("gradient"));
        }
    }

    let mut grad = Vec::with_capacity(model.num_trainable());
    if model.method.trains_distance() {
        grad.extend(d_distance);
    }
    if model.method.trains_edge_fn() {
        let per_graph: Vec<Vec<f64>> = batch_graphs
            .par_iter()
            .enumerate()
            .map(|(s, g)| edge_weight_grads(&spectra[s], &d_lambda[s], g.edges()))
            .collect::<Result<_>>()?;
        let dw: Vec<f64> = per_graph.concat();
        grad.extend(model.edge_fn.backward_many(&batch_graphs, &forward, &dw)?.into_flat());
    }
    if let Some(k) = grad.iter().position(|x| !x.is_finite()) {
        let pair = pairs[0];
        log::error!("non-finite gradient component {k} at step {step}");
        return Err(Error::NonFinite {
            what: "gradient",
            step,
            a: pair.a,
            b: pair.b,
        });
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

/// Train `method` on the training split of `dataset`.
pub fn train(dataset: &Dataset, method: Method, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(dataset, method, model_cfg, cfg, |_, _, _| {})
}

/// [`train`], calling `observe(epoch, mean_loss, model)` after every epoch.
pub fn train_observed(
    dataset: &Dataset,
    method: Method,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut observe: impl FnMut(usize, f64, &Model),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_idx = dataset.indices_in(Split::Train);
    let train_graphs: Vec<&AttributedGraph> = train_idx.iter().map(|&i| &dataset.graphs()[i]).collect();
    let mut model = Model::init(method, dataset.n(), &train_graphs, model_cfg)?;
    if !method.trains_distance() {
        return Ok(TrainOutcome {
            model,
            history: Vec::new(),
        });
    }
    let labels = dataset.labels();
    let mut sampler = PairSampler::new(cfg.seed);
    let mut params = model.trainable_flat();
    let mut state = AdamState::new(params.len());
    let adam = cfg.adam();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..cfg.batches_per_epoch {
            let pairs = sampler.sample(&train_idx, &labels, cfg.batch_pairs)?;
            let (loss, grad) = batch_loss_and_grad(&model, dataset.graphs(), &pairs, cfg, step)?;
            adam_step(&mut params, &grad, &mut state, &adam)?;
            model.set_trainable_flat(&params)?;
            epoch_loss += loss;
            step += 1;
        }
        let mean = epoch_loss / cfg.batches_per_epoch as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        observe(epoch, mean, &model);
        history.push(mean);
    }
    Ok(TrainOutcome { model, history })
}
