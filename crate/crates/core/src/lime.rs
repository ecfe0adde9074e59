//! Model-agnostic surrogate audit: perturb a scene by blinding object
//! features, query the black-box predictor, fit a sparse linear model along
//! the LASSO homotopy path, and compare its support with the explanation's
//! linked objects.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faithfulness::cosine_or_zero;
use crate::nn::ParameterStore;
use crate::toyworld::Scene;
use crate::vqa::VqaModel;
use crate::{par, rng};

/// One perturbed scene: mask bit 1 keeps the object's features, 0 replaces
/// them with a zero vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedSample {
    pub mask: Vec<u8>,
    pub features: Vec<Vec<f64>>,
}

pub fn perturb_samples(
    scene: &Scene,
    n: usize,
    p_blind: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PerturbedSample>> {
    if n == 0 {
        return Err(Error::Config("need at least one perturbation sample".into()));
    }
    if !(0.0..1.0).contains(&p_blind) {
        return Err(Error::Config(format!("p_blind must lie in [0,1), got {p_blind}")));
    }
    if scene.objects.is_empty() {
        return Err(Error::Degenerate("perturbing an empty scene".into()));
    }
    let dim = scene.objects[0].features.len();
    Ok((0..n)
        .map(|_| {
            let mut mask = Vec::with_capacity(scene.objects.len());
            let mut features = Vec::with_capacity(scene.objects.len());
            for obj in &scene.objects {
                if rng.gen::<f64>() < p_blind {
                    mask.push(0);
                    features.push(vec![0.0; dim]);
                } else {
                    mask.push(1);
                    features.push(obj.features.clone());
                }
            }
            PerturbedSample { mask, features }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimeResult {
    /// Surrogate coefficients, zero off-support.
    pub w: Vec<f64>,
    pub k: usize,
    pub intercept: f64,
    pub samples_used: usize,
    pub seed: u64,
}

impl LimeResult {
    pub fn support(&self) -> Vec<usize> {
        self.w
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Gaussian elimination with partial pivoting; `None` on a singular system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

const PATH_TOL: f64 = 1e-10;

/// LASSO homotopy (least-angle path with drops) on centered data, uniform
/// sample weights. Returns the coefficients at the end of the first path
/// segment with exactly `k` active units; if the path never holds exactly
/// `k` (early termination or a tie jumping past it), the densest visited
/// point with at most `k` active units is returned. Constant columns never
/// activate.
pub fn fit_lasso_path(x: &[Vec<f64>], y: &[f64], k: usize) -> Result<(Vec<f64>, f64)> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("{n} samples cannot constrain a linear model")));
    }
    if y.len() != n {
        return Err(Error::shape("lasso targets", format!("{n}"), format!("{}", y.len())));
    }
    let v = x[0].len();
    if x.iter().any(|row| row.len() != v) {
        return Err(Error::Invalid("ragged design matrix".into()));
    }
    if k > v {
        return Err(Error::Config(format!("budget {k} exceeds {v} units")));
    }
    let mx: Vec<f64> = (0..v).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let my = y.iter().sum::<f64>() / n as f64;
    let xc: Vec<Vec<f64>> = x
        .iter()
        .map(|r| r.iter().zip(&mx).map(|(a, m)| a - m).collect())
        .collect();
    let yc: Vec<f64> = y.iter().map(|a| a - my).collect();
    let included: Vec<bool> = (0..v)
        .map(|j| xc.iter().map(|r| r[j] * r[j]).sum::<f64>() > 1e-12)
        .collect();

    let intercept_for = |w: &[f64]| my - mx.iter().zip(w).map(|(m, wi)| m * wi).sum::<f64>();
    let mut c: Vec<f64> = (0..v)
        .map(|j| xc.iter().zip(&yc).map(|(r, yi)| r[j] * yi).sum())
        .collect();
    let mut w = vec![0.0; v];
    let mut lambda = (0..v)
        .filter(|&j| included[j])
        .map(|j| c[j].abs())
        .fold(0.0, f64::max);
    if k == 0 || lambda <= PATH_TOL {
        let b = intercept_for(&w);
        return Ok((w, b));
    }
    let mut active: Vec<usize> = Vec::new();
    let mut fallback: Option<Vec<f64>> = None;
    for j in 0..v {
        if included[j] && c[j].abs() >= lambda - PATH_TOL * (1.0 + lambda) {
            active.push(j);
        }
    }

    for _ in 0..8 * v + 8 {
        // equiangular direction over the active set
        let gram: Vec<Vec<f64>> = active
            .iter()
            .map(|&a| {
                active
                    .iter()
                    .map(|&b| xc.iter().map(|r| r[a] * r[b]).sum::<f64>())
                    .collect()
            })
            .collect();
        let signs: Vec<f64> = active.iter().map(|&j| c[j].signum()).collect();
        let Some(d) = solve(gram, signs) else {
            return Err(Error::Degenerate("collinear active set in the lasso path".into()));
        };
        let u: Vec<f64> = xc
            .iter()
            .map(|r| active.iter().zip(&d).map(|(&j, dj)| r[j] * dj).sum())
            .collect();
        let a_all: Vec<f64> = (0..v)
            .map(|j| xc.iter().zip(&u).map(|(r, ui)| r[j] * ui).sum())
            .collect();

        let mut gamma = lambda;
        enum Event {
            Exhausted,
            Join(usize),
            Cross(usize),
        }
        let mut event = Event::Exhausted;
        for j in 0..v {
            if !included[j] || active.contains(&j) {
                continue;
            }
            for cand in [
                (lambda - c[j]) / (1.0 - a_all[j]),
                (lambda + c[j]) / (1.0 + a_all[j]),
            ] {
                if cand > PATH_TOL && cand < gamma - PATH_TOL {
                    gamma = cand;
                    event = Event::Join(j);
                }
            }
        }
        for (pos, (&j, &dj)) in active.iter().zip(&d).enumerate() {
            if dj.abs() < PATH_TOL {
                continue;
            }
            let cand = -w[j] / dj;
            if cand > PATH_TOL && cand < gamma - PATH_TOL {
                gamma = cand;
                event = Event::Cross(pos);
            }
        }

        for (&j, dj) in active.iter().zip(&d) {
            w[j] += gamma * dj;
        }
        for j in 0..v {
            c[j] -= gamma * a_all[j];
        }
        lambda -= gamma;

        // segment just ended with the current support
        if active.len() == k {
            let b = intercept_for(&w);
            return Ok((w, b));
        }
        if active.len() < k {
            fallback = Some(w.clone());
        }

        match event {
            Event::Join(j) => active.push(j),
            Event::Cross(pos) => {
                let j = active.remove(pos);
                w[j] = 0.0;
            }
            Event::Exhausted => break,
        }
        if active.is_empty() || lambda <= PATH_TOL {
            break;
        }
    }
    let w = fallback.unwrap_or(w);
    let b = intercept_for(&w);
    Ok((w, b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    pub p_blind: f64,
    pub k: usize,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> LimeConfig {
        LimeConfig {
            n_samples: 256,
            p_blind: 0.4,
            k: 1,
            seed: 101,
        }
    }
}

/// Fit a local surrogate around one scene: sample perturbations, query the
/// predictor in parallel, then run the path fit on (mask, output) pairs.
pub fn lime_explain<F>(predict: F, scene: &Scene, cfg: &LimeConfig) -> Result<LimeResult>
where
    F: Fn(&[Vec<f64>]) -> Result<f64> + Sync,
{
    let mut r = rng::stream(cfg.seed, "lime-perturb", 0);
    let samples = perturb_samples(scene, cfg.n_samples, cfg.p_blind, &mut r)?;
    let ys: Vec<Result<f64>> = par::map(&samples, |s| predict(&s.features));
    let mut y = Vec::with_capacity(ys.len());
    for v in ys {
        y.push(v?);
    }
    let x: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.mask.iter().map(|&m| m as f64).collect())
        .collect();
    let (w, intercept) = fit_lasso_path(&x, &y, cfg.k)?;
    Ok(LimeResult {
        w,
        k: cfg.k,
        intercept,
        samples_used: cfg.n_samples,
        seed: cfg.seed,
    })
}

/// Probability the frozen answering model assigns to `answer` on perturbed
/// features, holding the question fixed.
pub fn vqa_predictor<'a>(
    model: &'a VqaModel,
    store: &'a ParameterStore,
    question: &'a [u32],
    answer: u32,
) -> impl Fn(&[Vec<f64>]) -> Result<f64> + Sync + 'a {
    move |features: &[Vec<f64>]| {
        let mut g = crate::nn::Graph::new();
        let nodes = model.forward(&mut g, store, features, question)?;
        Ok(g.value(nodes.p).data()[answer as usize])
    }
}

/// Agreement between surrogate weights and linked objects:
/// Σ_i |w_i|·max_{j∈𝓛} cos(v_i, v_j) / Σ_i |w_i|. An empty link set scores
/// 0; an all-zero weight vector has no defined score.
pub fn eq10_score(lime: &LimeResult, linked: &[usize], features: &[Vec<f64>]) -> Result<Option<f64>> {
    if lime.w.len() != features.len() {
        return Err(Error::shape(
            "agreement score",
            format!("{} objects", lime.w.len()),
            format!("{} feature vectors", features.len()),
        ));
    }
    if linked.iter().any(|&j| j >= features.len()) {
        return Err(Error::Invalid("linked object index out of range".into()));
    }
    let total: f64 = lime.w.iter().map(|w| w.abs()).sum();
    if total == 0.0 {
        return Ok(None);
    }
    if linked.is_empty() {
        return Ok(Some(0.0));
    }
    let mut acc = 0.0;
    for (i, wi) in lime.w.iter().enumerate() {
        if *wi == 0.0 {
            continue;
        }
        let best = linked
            .iter()
            .map(|&j| cosine_or_zero(&features[i], &features[j]))
            .fold(f64::MIN, f64::max);
        acc += wi.abs() * best;
    }
    Ok(Some(acc / total))
}
