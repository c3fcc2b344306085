//! Graph diffusion distances between Laplacian spectra.
//!
//! Two forms are provided:
//!
//! * [`gdd_sup`]: the classical distance, `sup_t sqrt(sum_j (E(t l1_j) - E(t l2_j))^2)`
//!   over continuous `t > 0`, with unit weight on every eigenvalue.
//! * [`gdd_pair`]: the trainable distance, a maximum over an explicit list of
//!   times with softmax-normalized per-eigenvalue weights `beta`.
//!
//! `E` is the exponential map selected by [`ExpConvention`].

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Dataset, Split};
use crate::mlp::sigmoid;
use crate::spectral::Spectrum;

/// Largest argument `exp` accepts without overflowing.
const EXP_LIMIT: f64 = 709.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpConvention {
    /// `exp(-t lambda)`: heat-kernel decay, bounded for PSD Laplacians.
    #[default]
    Decay,
    /// `exp(+t lambda)`: grows without bound in `t`.
    Growth,
}

impl ExpConvention {
    fn sign(self) -> f64 {
        match self {
            ExpConvention::Decay => -1.0,
            ExpConvention::Growth => 1.0,
        }
    }

    /// `E(t lambda)`, refusing to overflow.
    fn eval(self, t: f64, lambda: f64) -> Result<f64> {
        let arg = self.sign() * t * lambda;
        if arg > EXP_LIMIT {
            return Err(Error::ExpOverflow { t, lambda });
        }
        Ok(arg.exp())
    }
}

/// Trainable state of the distance: diffusion times and eigenvalue weights.
///
/// `t_m = t_min + (t_max - t_min) * logistic(t_raw_m)` and `beta = softmax(beta_logits)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceParams {
    pub t_raw: Vec<f64>,
    pub beta_logits: Vec<f64>,
    pub t_min: f64,
    pub t_max: f64,
    #[serde(default)]
    pub convention: ExpConvention,
}

pub const DEFAULT_T_MIN: f64 = 1e-3;
pub const DEFAULT_T_MAX: f64 = 10.0;
pub const DEFAULT_NUM_TIMES: usize = 10;

impl DistanceParams {
    /// `p` times log-spaced over `[0.01, 3.16]`, uniform `beta` over `n` eigenvalues.
    pub fn new(n: usize, p: usize, t_min: f64, t_max: f64, convention: ExpConvention) -> Result<Self> {
        let times: Vec<f64> = if p == 1 {
            vec![0.1]
        } else {
            let (lo, hi) = (0.01f64.ln(), 3.16f64.ln());
            (0..p)
                .map(|m| (lo + (hi - lo) * m as f64 / (p - 1) as f64).exp())
                .collect()
        };
        Self::with_times(n, &times, t_min, t_max, convention)
    }

    pub fn default_for(n: usize) -> Self {
        Self::new(n, DEFAULT_NUM_TIMES, DEFAULT_T_MIN, DEFAULT_T_MAX, ExpConvention::Decay)
            .expect("default t grid lies inside default bounds")
    }

    /// Explicit initial times, each strictly inside `(t_min, t_max)`.
    pub fn with_times(
        n: usize,
        times: &[f64],
        t_min: f64,
        t_max: f64,
        convention: ExpConvention,
    ) -> Result<Self> {
        if !(t_min >= 0.0 && t_max > t_min) {
            return Err(Error::Config(format!("bad t bounds [{t_min}, {t_max}]")));
        }
        if times.is_empty() {
            return Err(Error::Config("at least one diffusion time is required".into()));
        }
        let t_raw = times
            .iter()
            .map(|&t| {
                if !(t > t_min && t < t_max) {
                    return Err(Error::Config(format!("t = {t} outside ({t_min}, {t_max})")));
                }
                let u = (t - t_min) / (t_max - t_min);
                Ok((u / (1.0 - u)).ln())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            t_raw,
            beta_logits: vec![0.0; n],
            t_min,
            t_max,
            convention,
        })
    }

    pub fn n(&self) -> usize {
        self.beta_logits.len()
    }

    pub fn p(&self) -> usize {
        self.t_raw.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.t_raw.iter().map(|&r| self.time(r)).collect()
    }

    fn time(&self, raw: f64) -> f64 {
        self.t_min + (self.t_max - self.t_min) * sigmoid(raw)
    }

    fn dtime(&self, raw: f64) -> f64 {
        let s = sigmoid(raw);
        (self.t_max - self.t_min) * s * (1.0 - s)
    }

    pub fn beta(&self) -> Vec<f64> {
        let max = self.beta_logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.beta_logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    /// Flattened as `t_raw` followed by `beta_logits`.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = self.t_raw.clone();
        v.extend_from_slice(&self.beta_logits);
        v
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        let p = self.p();
        if flat.len() != p + self.n() {
            return Err(Error::DimensionMismatch {
                expected: p + self.n(),
                actual: flat.len(),
            });
        }
        self.t_raw.copy_from_slice(&flat[..p]);
        self.beta_logits.copy_from_slice(&flat[p..]);
        Ok(())
    }
}

/// What the backward pass needs from [`gdd_pair`].
#[derive(Debug, Clone)]
pub struct PairContext {
    pub distance: f64,
    pub argmax: usize,
    t: f64,
    beta: Vec<f64>,
    lambda1: Vec<f64>,
    lambda2: Vec<f64>,
    exp1: Vec<f64>,
    exp2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGrad {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub beta_logits: Vec<f64>,
    pub t_raw: Vec<f64>,
}

/// Trainable distance between two ascending eigenvalue lists.
///
/// Ties in the maximum go to the smallest time index.
pub fn gdd_pair(lambda1: &[f64], lambda2: &[f64], params: &DistanceParams) -> Result<PairContext> {
    let n = params.n();
    for l in [lambda1, lambda2] {
        if l.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: l.len(),
            });
        }
    }
    let beta = params.beta();
    let mut best: Option<(f64, usize, f64, Vec<f64>, Vec<f64>)> = None;
    for (m, &raw) in params.t_raw.iter().enumerate() {
        let t = params.time(raw);
        let exp1 = lambda1
            .iter()
            .map(|&l| params.convention.eval(t, l))
            .collect::<Result<Vec<_>>>()?;
        let exp2 = lambda2
            .iter()
            .map(|&l| params.convention.eval(t, l))
            .collect::<Result<Vec<_>>>()?;
        let s: f64 = (0..n)
            .map(|j| {
                let diff = exp1[j] - exp2[j];
                beta[j] * diff * diff
            })
            .sum();
        let d = s.sqrt();
        if best.as_ref().is_none_or(|b| d > b.0) {
            best = Some((d, m, t, exp1, exp2));
        }
    }
    let (distance, argmax, t, exp1, exp2) = best.expect("at least one time");
    Ok(PairContext {
        distance,
        argmax,
        t,
        beta,
        lambda1: lambda1.to_vec(),
        lambda2: lambda2.to_vec(),
        exp1,
        exp2,
    })
}

/// Chain `dbar = dL/dd` back to eigenvalues, `beta_logits` and `t_raw`.
///
/// Only the maximizing time receives gradient. A zero distance yields zero
/// gradients.
pub fn gdd_pair_backward(ctx: &PairContext, params: &DistanceParams, dbar: f64) -> PairGrad {
    let n = ctx.lambda1.len();
    let mut out = PairGrad {
        lambda1: vec![0.0; n],
        lambda2: vec![0.0; n],
        beta_logits: vec![0.0; n],
        t_raw: vec![0.0; params.p()],
    };
    if ctx.distance == 0.0 || dbar == 0.0 {
        return out;
    }
    // dL/dS with S the weighted sum of squares under the sqrt
    let ds = dbar / (2.0 * ctx.distance);
    let sign = params.convention.sign();
    let mut dt = 0.0;
    let mut dbeta = vec![0.0; n];
    for j in 0..n {
        let diff = ctx.exp1[j] - ctx.exp2[j];
        dbeta[j] = ds * diff * diff;
        let common = ds * ctx.beta[j] * 2.0 * diff * sign;
        // d/dlambda E(t lambda) = sign * t * E
        out.lambda1[j] = common * ctx.t * ctx.exp1[j];
        out.lambda2[j] = -common * ctx.t * ctx.exp2[j];
        dt += common * (ctx.lambda1[j] * ctx.exp1[j] - ctx.lambda2[j] * ctx.exp2[j]);
    }
    let weighted: f64 = ctx.beta.iter().zip(&dbeta).map(|(b, g)| b * g).sum();
    for j in 0..n {
        out.beta_logits[j] = ctx.beta[j] * (dbeta[j] - weighted);
    }
    out.t_raw[ctx.argmax] = dt * params.dtime(params.t_raw[ctx.argmax]);
    out
}

/// Classical diffusion distance: unweighted, supremum over continuous `t`.
///
/// The supremum is bracketed on a log-spaced grid spanning the spectral
/// scales of both inputs and refined by golden-section search. The growth
/// convention is unbounded in `t` unless the spectra coincide, which is
/// reported as an error.
pub fn gdd_sup(lambda1: &[f64], lambda2: &[f64], convention: ExpConvention) -> Result<(f64, f64)> {
    if lambda1.len() != lambda2.len() {
        return Err(Error::DimensionMismatch {
            expected: lambda1.len(),
            actual: lambda2.len(),
        });
    }
    if lambda1 == lambda2 {
        return Ok((0.0, 0.0));
    }
    if convention == ExpConvention::Growth {
        return Err(Error::Config(
            "supremum over t is unbounded under the growth convention; use an explicit t grid".into(),
        ));
    }
    let objective = |t: f64| -> f64 {
        lambda1
            .iter()
            .zip(lambda2)
            .map(|(&a, &b)| {
                let diff = (-t * a).exp() - (-t * b).exp();
                diff * diff
            })
            .sum()
    };
    let scale = lambda1
        .iter()
        .chain(lambda2)
        .fold(0.0_f64, |m, l| m.max(l.abs()));
    let floor = 1e-9 * scale;
    let smallest = lambda1
        .iter()
        .chain(lambda2)
        .filter(|l| **l > floor)
        .fold(f64::INFINITY, |m, &l| m.min(l));
    let lo = (1e-3 / scale).ln();
    let hi = (1e3 / smallest.min(scale)).ln();
    const GRID: usize = 400;
    let grid: Vec<f64> = (0..GRID)
        .map(|k| lo + (hi - lo) * k as f64 / (GRID - 1) as f64)
        .collect();
    let (mut best_k, mut best) = (0, f64::NEG_INFINITY);
    for (k, &u) in grid.iter().enumerate() {
        let f = objective(u.exp());
        if f > best {
            best = f;
            best_k = k;
        }
    }
    // golden-section on log t within the neighbouring grid cells
    let mut a = grid[best_k.saturating_sub(1)];
    let mut b = grid[(best_k + 1).min(GRID - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (objective(c.exp()), objective(d.exp()));
    for _ in 0..100 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = objective(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = objective(d.exp());
        }
    }
    let (u, f) = [(c, fc), (d, fd), (grid[best_k], best)]
        .into_iter()
        .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    Ok((f.sqrt(), u.exp()))
}

/// Which distance a [`DistanceMatrix`] is built from.
#[derive(Debug, Clone, Copy)]
pub enum DistanceKind<'a> {
    /// Unweighted supremum over `t`.
    Classical(ExpConvention),
    Learned(&'a DistanceParams),
}

impl DistanceKind<'_> {
    pub fn pair(&self, lambda1: &[f64], lambda2: &[f64]) -> Result<f64> {
        match self {
            DistanceKind::Classical(c) => gdd_sup(lambda1, lambda2, *c).map(|r| r.0),
            DistanceKind::Learned(p) => gdd_pair(lambda1, lambda2, p).map(|c| c.distance),
        }
    }
}

/// Symmetric matrix of pairwise distances with per-index metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub values: DMatrix<f64>,
    pub ids: Vec<String>,
    pub labels: Vec<u32>,
    pub split: Vec<Split>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[(a, b)]
    }

    /// CSV with graph ids as the first row and column, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for a in 0..self.len() {
            out.push_str(&self.ids[a]);
            for b in 0..self.len() {
                out.push(',');
                out.push_str(&format!("{:.11e}", self.values[(a, b)]));
            }
            out.push('\n');
        }
        out
    }

    pub fn labels_csv(&self) -> String {
        let mut out = String::from("id,label,split\n");
        for a in 0..self.len() {
            let split = match self.split[a] {
                Split::Train => "train",
                Split::Validation => "validation",
            };
            out.push_str(&format!("{},{},{}\n", self.ids[a], self.labels[a], split));
        }
        out
    }
}

/// Pairwise distances over precomputed spectra. Each unordered pair is
/// evaluated once and mirrored.
pub fn distance_matrix_from_spectra(
    dataset: &Dataset,
    spectra: &[Spectrum],
    kind: DistanceKind<'_>,
) -> Result<DistanceMatrix> {
    let m = spectra.len();
    if m != dataset.len() {
        return Err(Error::DimensionMismatch {
            expected: dataset.len(),
            actual: m,
        });
    }
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| {
            kind.pair(&spectra[a].eigenvalues, &spectra[b].eigenvalues)
                .map_err(|e| Error::Pair {
                    a,
                    b,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mat = DMatrix::zeros(m, m);
    for (&(a, b), &d) in pairs.iter().zip(&values) {
        mat[(a, b)] = d;
        mat[(b, a)] = d;
    }
    Ok(DistanceMatrix {
        values: mat,
        ids: dataset.graph_ids(),
        labels: dataset.labels(),
        split: dataset.split().to_vec(),
    })
}
