//! Local objective functions and the two experiment families.
//!
//! # Random streams
//!
//! All generators draw from [`ChaCha8Rng`] seeded with `seed_from_u64(seed)`,
//! consuming the stream in this fixed order:
//!
//! * quadratic ensemble: for each node `i = 0..n`, the `p/2` small-side
//!   diagonal exponents, then the `p/2` large-side exponents (each a uniform
//!   integer in `0..=xi`), then the `p` entries of `b_i` (uniform on `[0, 1)`);
//! * logistic data: for each node, for each of its `q_i` samples, the label
//!   (`+1` with probability 1/2) followed by the `p` feature components.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Curvature constants of a local objective: `m I <= hess f <= M I` and a
/// Lipschitz constant `L` of the Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curvature {
    pub m: f64,
    pub big_m: f64,
    pub lipschitz: f64,
}

impl Curvature {
    /// Worst-case constants over a family: smallest `m`, largest `M` and `L`.
    pub fn combine<'a>(items: impl IntoIterator<Item = &'a Curvature>) -> Option<Curvature> {
        items.into_iter().fold(None, |acc: Option<Curvature>, c| {
            Some(match acc {
                None => *c,
                Some(a) => Curvature {
                    m: a.m.min(c.m),
                    big_m: a.big_m.max(c.big_m),
                    lipschitz: a.lipschitz.max(c.lipschitz),
                },
            })
        })
    }
}

/// A twice differentiable, strongly convex local cost `f_i : R^p -> R`.
pub trait LocalObjective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn curvature(&self) -> Curvature;

    /// True when the Hessian does not depend on `x`.
    fn constant_hessian(&self) -> bool {
        false
    }
}

/// `f(x) = 1/2 x' diag(a) x + b' x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalQuadratic {
    a: DVector<f64>,
    b: DVector<f64>,
}

impl DiagonalQuadratic {
    pub fn new(a: DVector<f64>, b: DVector<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension { expected: a.len(), got: b.len() });
        }
        if a.is_empty() || a.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Objective("diagonal entries must be positive and finite".into()));
        }
        Ok(Self { a, b })
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.a
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.b
    }
}

impl LocalObjective for DiagonalQuadratic {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.component_mul(&self.a).dot(x) + self.b.dot(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.a) + &self.b
    }

    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.a)
    }

    fn curvature(&self) -> Curvature {
        Curvature { m: self.a.min(), big_m: self.a.max(), lipschitz: 0.0 }
    }

    fn constant_hessian(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticEnsembleConfig {
    /// Dimension, must be even.
    pub p: usize,
    /// Condition exponent: diagonal entries lie in `[10^-xi, 10^xi]`.
    pub xi: u32,
    pub seed: u64,
}

/// Random diagonal quadratics: the first `p/2` diagonal entries are uniform on
/// `{1, 10^-1, ..., 10^-xi}`, the rest uniform on `{1, 10, ..., 10^xi}`, and
/// `b_i` is uniform on `[0, 1]^p`.
pub fn generate_quadratic(n: usize, cfg: &QuadraticEnsembleConfig) -> Result<Vec<DiagonalQuadratic>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    generate_quadratic_from(&mut rng, n, cfg.p, cfg.xi)
}

pub(crate) fn generate_quadratic_from<R: Rng>(
    rng: &mut R,
    n: usize,
    p: usize,
    xi: u32,
) -> Result<Vec<DiagonalQuadratic>> {
    if p == 0 || p % 2 != 0 {
        return Err(Error::Objective(format!("quadratic ensemble needs even p > 0, got {p}")));
    }
    if n == 0 {
        return Err(Error::Objective("need at least one node".into()));
    }
    let half = p / 2;
    (0..n)
        .map(|_| {
            let mut a = DVector::zeros(p);
            for k in 0..half {
                a[k] = 10f64.powi(-(rng.gen_range(0..=xi) as i32));
            }
            for k in half..p {
                a[k] = 10f64.powi(rng.gen_range(0..=xi) as i32);
            }
            let b = DVector::from_fn(p, |_, _| rng.gen::<f64>());
            DiagonalQuadratic::new(a, b)
        })
        .collect()
}

/// Minimizer of `sum_i f_i`: `x* = -(sum_i A_i)^{-1} sum_i b_i`.
pub fn quadratic_optimum(objectives: &[DiagonalQuadratic]) -> Result<DVector<f64>> {
    let first = objectives
        .first()
        .ok_or_else(|| Error::Objective("no objectives".into()))?;
    let p = first.dim();
    let mut a_sum = DVector::zeros(p);
    let mut b_sum = DVector::zeros(p);
    for f in objectives {
        if f.dim() != p {
            return Err(Error::Dimension { expected: p, got: f.dim() });
        }
        a_sum += &f.a;
        b_sum += &f.b;
    }
    if a_sum.iter().any(|&v| v == 0.0) {
        return Err(Error::Singular("sum of quadratic terms is singular".into()));
    }
    Ok(-b_sum.component_div(&a_sum))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticDataConfig {
    /// Feature dimension.
    pub p: usize,
    /// Samples per node.
    pub samples_per_node: usize,
    /// Class mean: `+mu` for label `+1`, `-mu` for label `-1`, per component.
    pub mu: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    /// Regularizer of the global objective; node `i` carries `lambda / n`.
    pub lambda: f64,
    pub seed: u64,
}

impl LogisticDataConfig {
    fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::Objective("feature dimension must be positive".into()));
        }
        if self.samples_per_node == 0 {
            return Err(Error::Objective("need at least one sample per node".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Objective(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.sigma_plus > 0.0 && self.sigma_minus > 0.0) {
            return Err(Error::Objective("class standard deviations must be > 0".into()));
        }
        if !self.mu.is_finite() {
            return Err(Error::Objective("mu must be finite".into()));
        }
        Ok(())
    }
}

/// Samples held by one node: one feature row per sample and labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSamples {
    pub features: DMatrix<f64>,
    pub labels: Vec<f64>,
}

/// Synthetic classification data distributed over the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticDataset {
    pub p: usize,
    pub nodes: Vec<NodeSamples>,
}

impl LogisticDataset {
    pub fn generate(n: usize, cfg: &LogisticDataConfig) -> Result<Self> {
        cfg.validate()?;
        if n == 0 {
            return Err(Error::Objective("need at least one node".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let plus = Normal::new(cfg.mu, cfg.sigma_plus).map_err(|e| Error::Objective(e.to_string()))?;
        let minus = Normal::new(-cfg.mu, cfg.sigma_minus).map_err(|e| Error::Objective(e.to_string()))?;
        let q = cfg.samples_per_node;
        let nodes = (0..n)
            .map(|_| {
                let mut features = DMatrix::zeros(q, cfg.p);
                let mut labels = Vec::with_capacity(q);
                for l in 0..q {
                    let positive = rng.gen_bool(0.5);
                    labels.push(if positive { 1.0 } else { -1.0 });
                    let dist = if positive { &plus } else { &minus };
                    for k in 0..cfg.p {
                        features[(l, k)] = dist.sample(&mut rng);
                    }
                }
                NodeSamples { features, labels }
            })
            .collect();
        Ok(Self { p: cfg.p, nodes })
    }

    /// Local objectives `f_i(x) = lambda/(2n) |x|^2 + sum_l log(1 + exp(-v u'x))`.
    pub fn objectives(&self, lambda: f64) -> Result<Vec<LogisticLoss>> {
        let n = self.nodes.len() as f64;
        self.nodes
            .iter()
            .map(|s| LogisticLoss::new(s.features.clone(), s.labels.clone(), lambda / n))
            .collect()
    }

    /// One row per sample: `node,label,f0,...,f{p-1}`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,label");
        for k in 0..self.p {
            let _ = write!(out, ",f{k}");
        }
        out.push('\n');
        for (i, s) in self.nodes.iter().enumerate() {
            for (l, v) in s.labels.iter().enumerate() {
                let _ = write!(out, "{i},{v}");
                for k in 0..self.p {
                    let _ = write!(out, ",{}", s.features[(l, k)]);
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Csv { line: 1, reason: "empty file".into() })?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "node" || cols[1] != "label" {
            return Err(Error::Csv { line: 1, reason: "expected header node,label,f0,...".into() });
        }
        let p = cols.len() - 2;
        let mut rows: Vec<Vec<(f64, Vec<f64>)>> = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::Csv { line: idx + 1, reason };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != p + 2 {
                return Err(bad(format!("expected {} fields, got {}", p + 2, fields.len())));
            }
            let node: usize = fields[0].parse().map_err(|e| bad(format!("node: {e}")))?;
            let label: f64 = fields[1].parse().map_err(|e| bad(format!("label: {e}")))?;
            if label != 1.0 && label != -1.0 {
                return Err(bad(format!("label must be -1 or 1, got {label}")));
            }
            let feats = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| bad(format!("feature: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if node >= rows.len() {
                rows.resize_with(node + 1, Vec::new);
            }
            rows[node].push((label, feats));
        }
        let nodes = rows
            .into_iter()
            .enumerate()
            .map(|(i, samples)| {
                if samples.is_empty() {
                    return Err(Error::Csv { line: 0, reason: format!("node {i} has no samples") });
                }
                let features =
                    DMatrix::from_fn(samples.len(), p, |l, k| samples[l].1[k]);
                let labels = samples.iter().map(|s| s.0).collect();
                Ok(NodeSamples { features, labels })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { p, nodes })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Generate a dataset and return the per-node logistic objectives.
pub fn generate_logistic(n: usize, cfg: &LogisticDataConfig) -> Result<Vec<LogisticLoss>> {
    LogisticDataset::generate(n, cfg)?.objectives(cfg.lambda)
}

/// Max of `|d/dz sigma(z)(1 - sigma(z))|`, attained at `sigma = 1/2 ± 1/(2 sqrt 3)`.
const SIGMOID_SECOND_DERIVATIVE_BOUND: f64 = 0.096_225_044_864_937_63; // 1 / (6 sqrt 3)

/// Regularized logistic loss `reg/2 |x|^2 + sum_l log(1 + exp(-v_l u_l' x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticLoss {
    features: DMatrix<f64>,
    labels: DVector<f64>,
    reg: f64,
    curvature: Curvature,
}

impl LogisticLoss {
    /// `reg` is the coefficient of `1/2 |x|^2` in this node's objective.
    pub fn new(features: DMatrix<f64>, labels: Vec<f64>, reg: f64) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Dimension { expected: features.nrows(), got: labels.len() });
        }
        if !(reg > 0.0) {
            return Err(Error::Objective(format!("regularizer must be > 0, got {reg}")));
        }
        let norms: Vec<f64> = features.row_iter().map(|r| r.norm()).collect();
        let curvature = Curvature {
            m: reg,
            big_m: reg + 0.25 * norms.iter().map(|u| u * u).sum::<f64>(),
            lipschitz: SIGMOID_SECOND_DERIVATIVE_BOUND * norms.iter().map(|u| u.powi(3)).sum::<f64>(),
        };
        Ok(Self { features, labels: DVector::from_vec(labels), reg, curvature })
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    /// Margins `v_l u_l' x`.
    fn margins(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.features * x).component_mul(&self.labels)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-z))` without overflow.
fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

impl LocalObjective for LogisticLoss {
    fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.reg * x.norm_squared() + self.margins(x).iter().map(|&z| log1p_exp_neg(z)).sum::<f64>()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        // d/dx log(1 + exp(-v u'x)) = -v sigma(-v u'x) u
        let coef = self
            .margins(x)
            .zip_map(&self.labels, |z, v| -v * sigmoid(-z));
        self.features.tr_mul(&coef) + x * self.reg
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let weights = self.margins(x).map(|z| {
            let s = sigmoid(z);
            s * (1.0 - s)
        });
        let mut scaled = self.features.clone();
        for (mut row, w) in scaled.row_iter_mut().zip(weights.iter()) {
            row *= *w;
        }
        let p = self.dim();
        self.features.tr_mul(&scaled) + DMatrix::identity(p, p) * self.reg
    }

    fn curvature(&self) -> Curvature {
        self.curvature
    }
}

/// Worst relative discrepancy between the analytic derivatives and central
/// finite differences with step `h`: gradient against differences of
/// `value`, Hessian against differences of `gradient`. Each error is
/// `|fd - exact| / max(|exact|, 1)` (Euclidean / Frobenius norms).
pub fn check_derivatives<O: LocalObjective + ?Sized>(obj: &O, x: &DVector<f64>, h: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Parameter(format!("finite-difference step must be > 0, got {h}")));
    }
    let p = obj.dim();
    if x.len() != p {
        return Err(Error::Dimension { expected: p, got: x.len() });
    }
    let grad = obj.gradient(x);
    let hess = obj.hessian(x);
    let mut fd_grad = DVector::zeros(p);
    let mut fd_hess = DMatrix::zeros(p, p);
    for k in 0..p {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        fd_grad[k] = (obj.value(&xp) - obj.value(&xm)) / (2.0 * h);
        let col = (obj.gradient(&xp) - obj.gradient(&xm)) / (2.0 * h);
        fd_hess.set_column(k, &col);
    }
    let ge = (&fd_grad - &grad).norm() / grad.norm().max(1.0);
    let he = (&fd_hess - &hess).norm() / hess.norm().max(1.0);
    Ok(ge.max(he))
}
