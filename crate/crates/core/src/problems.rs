//! Desk-scale differentiable objectives with exact gradients.
//!
//! Stochastic problems draw a minibatch determined entirely by `batch_seed`,
//! so `eval(params, s)` is a pure function for any fixed `s`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optim::ParamVector;
use crate::rng::{stream, Rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("cannot parse problem spec `{0}`")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, ProblemError>;

/// A differentiable objective.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Deterministic problems ignore `batch_seed`.
    fn is_deterministic(&self) -> bool;

    /// Minibatch loss and its exact gradient.
    fn eval(&self, params: &[f64], batch_seed: u64) -> (f64, Vec<f64>);

    fn init(&self, seed: u64) -> ParamVector;

    /// Loss used to score a finished run: the exact objective for analytic
    /// problems, the held-out loss for data-driven ones.
    fn eval_loss(&self, params: &[f64]) -> f64;
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn normals(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

/// `0.5 * theta' A theta` with diagonal `A`, eigenvalues log-spaced in
/// `[1, condition_number]`. With `noise > 0` the gradient is perturbed by
/// `noise * xi`, `xi ~ N(0, I)` keyed by the batch seed, and the loss by
/// the matching linear term `noise * xi' theta`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    diag: Vec<f64>,
    noise: f64,
    seed: u64,
}

impl Quadratic {
    pub fn new(dim: usize, condition_number: f64, noise: f64, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(ProblemError::Invalid("quadratic dim must be >= 1".into()));
        }
        if !(condition_number >= 1.0 && condition_number.is_finite()) {
            return Err(ProblemError::Invalid(format!(
                "condition number must be >= 1, got {condition_number}"
            )));
        }
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(ProblemError::Invalid(format!(
                "noise must be >= 0, got {noise}"
            )));
        }
        let diag = (0..dim)
            .map(|i| {
                if dim == 1 {
                    1.0
                } else {
                    condition_number.powf(i as f64 / (dim - 1) as f64)
                }
            })
            .collect();
        Ok(Self { diag, noise, seed })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.diag
    }
}

impl Problem for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn is_deterministic(&self) -> bool {
        self.noise == 0.0
    }

    fn eval(&self, params: &[f64], batch_seed: u64) -> (f64, Vec<f64>) {
        let mut grad: Vec<f64> = self.diag.iter().zip(params).map(|(a, x)| a * x).collect();
        let mut loss = 0.5 * grad.iter().zip(params).map(|(g, x)| g * x).sum::<f64>();
        if self.noise > 0.0 {
            let mut rng = stream(self.seed, "quadratic-noise", batch_seed);
            for (g, x) in grad.iter_mut().zip(params) {
                let xi = self.noise * normal(&mut rng);
                *g += xi;
                loss += xi * x;
            }
        }
        (loss, grad)
    }

    fn init(&self, seed: u64) -> ParamVector {
        ParamVector::new(normals(&mut stream(seed, "init", 0), self.dim(), 1.0))
    }

    fn eval_loss(&self, params: &[f64]) -> f64 {
        0.5 * self
            .diag
            .iter()
            .zip(params)
            .map(|(a, x)| a * x * x)
            .sum::<f64>()
    }
}

/// Separable-pairs Rosenbrock: `sum_i 100 (x_{2i+1} - x_{2i}^2)^2 + (1 - x_{2i})^2`.
#[derive(Debug, Clone)]
pub struct Rosenbrock {
    dim: usize,
}

impl Rosenbrock {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 || !dim.is_multiple_of(2) {
            return Err(ProblemError::Invalid(format!(
                "rosenbrock dim must be even and >= 2, got {dim}"
            )));
        }
        Ok(Self { dim })
    }
}

impl Problem for Rosenbrock {
    fn name(&self) -> &str {
        "rosenbrock"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn eval(&self, params: &[f64], _batch_seed: u64) -> (f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim];
        for i in (0..self.dim).step_by(2) {
            let (x, y) = (params[i], params[i + 1]);
            let r = y - x * x;
            let s = 1.0 - x;
            loss += 100.0 * r * r + s * s;
            grad[i] = -400.0 * x * r - 2.0 * s;
            grad[i + 1] = 200.0 * r;
        }
        (loss, grad)
    }

    fn init(&self, seed: u64) -> ParamVector {
        let mut rng = stream(seed, "init", 0);
        ParamVector::new(
            (0..self.dim)
                .map(|i| if i % 2 == 0 { -1.2 } else { 1.0 } + 0.1 * normal(&mut rng))
                .collect(),
        )
    }

    fn eval_loss(&self, params: &[f64]) -> f64 {
        self.eval(params, 0).0
    }
}

#[derive(Debug, Clone)]
struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn minibatch(n: usize, batch_size: usize, data_seed: u64, batch_seed: u64) -> Vec<usize> {
    if batch_size == n {
        return (0..n).collect();
    }
    let mut rng = stream(data_seed, "minibatch", batch_seed);
    index::sample(&mut rng, n, batch_size).into_vec()
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
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

/// Binary logistic regression (no intercept) on two overlapping Gaussian
/// blobs with means `+-mu`, `mu_i = 0.5 / sqrt(dim)`. Labels are `+-1`.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    dim: usize,
    batch_size: usize,
    data_seed: u64,
    train: Dataset,
    test: Dataset,
}

impl LogisticRegression {
    pub fn new(n_samples: usize, dim: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if dim == 0 || n_samples < 2 {
            return Err(ProblemError::Invalid(
                "logistic regression needs dim >= 1 and n_samples >= 2".into(),
            ));
        }
        if batch_size == 0 || batch_size > n_samples {
            return Err(ProblemError::Invalid(format!(
                "batch_size must lie in [1, n_samples={n_samples}], got {batch_size}"
            )));
        }
        let train = Self::generate(n_samples, dim, seed, "logistic-train");
        let test = Self::generate(n_samples.max(2), dim, seed, "logistic-test");
        Ok(Self {
            dim,
            batch_size,
            data_seed: seed,
            train,
            test,
        })
    }

    fn generate(n: usize, dim: usize, seed: u64, purpose: &str) -> Dataset {
        let shift = 0.5 / (dim as f64).sqrt();
        for attempt in 0.. {
            let mut rng = stream(seed, purpose, attempt);
            let y: Vec<f64> = (0..n)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            if y.iter().all(|&l| l == y[0]) {
                continue;
            }
            let x = y
                .iter()
                .map(|&l| (0..dim).map(|_| l * shift + normal(&mut rng)).collect())
                .collect();
            return Dataset { x, y };
        }
        unreachable!()
    }

    fn loss_grad(&self, data: &Dataset, idx: &[usize], params: &[f64]) -> (f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim];
        for &i in idx {
            let x = &data.x[i];
            let z = data.y[i] * x.iter().zip(params).map(|(a, b)| a * b).sum::<f64>();
            loss += softplus(-z);
            let coef = -data.y[i] * sigmoid(-z);
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += coef * xi;
            }
        }
        let inv = 1.0 / idx.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, grad)
    }

    pub fn n_samples(&self) -> usize {
        self.train.y.len()
    }

    pub fn full_batch(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let idx: Vec<usize> = (0..self.n_samples()).collect();
        self.loss_grad(&self.train, &idx, params)
    }

    pub fn labels(&self) -> &[f64] {
        &self.train.y
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.train.x
    }
}

impl Problem for LogisticRegression {
    fn name(&self) -> &str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn is_deterministic(&self) -> bool {
        self.batch_size == self.n_samples()
    }

    fn eval(&self, params: &[f64], batch_seed: u64) -> (f64, Vec<f64>) {
        let idx = minibatch(
            self.n_samples(),
            self.batch_size,
            self.data_seed,
            batch_seed,
        );
        self.loss_grad(&self.train, &idx, params)
    }

    fn init(&self, seed: u64) -> ParamVector {
        ParamVector::new(normals(&mut stream(seed, "init", 0), self.dim, 1.0))
    }

    fn eval_loss(&self, params: &[f64]) -> f64 {
        let idx: Vec<usize> = (0..self.test.y.len()).collect();
        self.loss_grad(&self.test, &idx, params).0
    }
}

/// One-hidden-layer tanh network regressing onto a fixed random teacher of
/// the same shape, squared error `0.5 * mean (f(x) - y)^2`.
///
/// Parameter layout: `W1` (hidden x in, row-major), `b1` (hidden),
/// `w2` (hidden), `b2` (1).
#[derive(Debug, Clone)]
pub struct TinyMlp {
    in_dim: usize,
    hidden_dim: usize,
    batch_size: usize,
    data_seed: u64,
    teacher: Vec<f64>,
    train: Dataset,
    test: Dataset,
}

impl TinyMlp {
    pub fn new(
        in_dim: usize,
        hidden_dim: usize,
        n_samples: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if in_dim == 0 || hidden_dim == 0 || n_samples == 0 {
            return Err(ProblemError::Invalid(
                "tiny_mlp needs in_dim, hidden_dim, n_samples >= 1".into(),
            ));
        }
        if batch_size == 0 || batch_size > n_samples {
            return Err(ProblemError::Invalid(format!(
                "batch_size must lie in [1, n_samples={n_samples}], got {batch_size}"
            )));
        }
        let mut mlp = Self {
            in_dim,
            hidden_dim,
            batch_size,
            data_seed: seed,
            teacher: Vec::new(),
            train: Dataset {
                x: vec![],
                y: vec![],
            },
            test: Dataset {
                x: vec![],
                y: vec![],
            },
        };
        mlp.teacher = mlp.random_params(&mut stream(seed, "mlp-teacher", 0), 1.0);
        mlp.train = mlp.generate(n_samples, &mut stream(seed, "mlp-train", 0));
        mlp.test = mlp.generate(n_samples, &mut stream(seed, "mlp-test", 0));
        Ok(mlp)
    }

    fn n_params(&self) -> usize {
        self.hidden_dim * (self.in_dim + 2) + 1
    }

    fn random_params(&self, rng: &mut Rng, gain: f64) -> Vec<f64> {
        let (h, d) = (self.hidden_dim, self.in_dim);
        let mut p = normals(rng, h * d, gain / (d as f64).sqrt());
        p.extend(normals(rng, h, 0.1 * gain));
        p.extend(normals(rng, h, gain / (h as f64).sqrt()));
        p.push(0.0);
        p
    }

    fn generate(&self, n: usize, rng: &mut Rng) -> Dataset {
        let x: Vec<Vec<f64>> = (0..n).map(|_| normals(rng, self.in_dim, 1.0)).collect();
        let y = x
            .iter()
            .map(|xi| self.forward(&self.teacher, xi, None))
            .collect();
        Dataset { x, y }
    }

    /// Network output; fills `hidden` with the tanh activations when given.
    fn forward(&self, p: &[f64], x: &[f64], hidden: Option<&mut Vec<f64>>) -> f64 {
        let (h, d) = (self.hidden_dim, self.in_dim);
        let (w1, rest) = p.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let mut out = b2[0];
        let mut acts = hidden;
        if let Some(a) = acts.as_deref_mut() {
            a.clear();
        }
        for j in 0..h {
            let pre = b1[j]
                + w1[j * d..(j + 1) * d]
                    .iter()
                    .zip(x)
                    .map(|(w, v)| w * v)
                    .sum::<f64>();
            let a = pre.tanh();
            out += w2[j] * a;
            if let Some(buf) = acts.as_deref_mut() {
                buf.push(a);
            }
        }
        out
    }

    fn loss_grad(&self, data: &Dataset, idx: &[usize], p: &[f64]) -> (f64, Vec<f64>) {
        let (h, d) = (self.hidden_dim, self.in_dim);
        let mut grad = vec![0.0; self.n_params()];
        let mut loss = 0.0;
        let mut acts = Vec::with_capacity(h);
        let w2_off = h * d + h;
        for &i in idx {
            let x = &data.x[i];
            let r = self.forward(p, x, Some(&mut acts)) - data.y[i];
            loss += 0.5 * r * r;
            // backprop through out = b2 + sum_j w2_j tanh(pre_j)
            grad[w2_off + h] += r;
            for j in 0..h {
                let a = acts[j];
                grad[w2_off + j] += r * a;
                let delta = r * p[w2_off + j] * (1.0 - a * a);
                grad[h * d + j] += delta;
                for (g, v) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += delta * v;
                }
            }
        }
        let inv = 1.0 / idx.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        (loss * inv, grad)
    }

    pub fn teacher_params(&self) -> &[f64] {
        &self.teacher
    }

    pub fn n_samples(&self) -> usize {
        self.train.y.len()
    }
}

impl Problem for TinyMlp {
    fn name(&self) -> &str {
        "mlp"
    }

    fn dim(&self) -> usize {
        self.n_params()
    }

    fn is_deterministic(&self) -> bool {
        self.batch_size == self.n_samples()
    }

    fn eval(&self, params: &[f64], batch_seed: u64) -> (f64, Vec<f64>) {
        let idx = minibatch(
            self.n_samples(),
            self.batch_size,
            self.data_seed,
            batch_seed,
        );
        self.loss_grad(&self.train, &idx, params)
    }

    fn init(&self, seed: u64) -> ParamVector {
        ParamVector::new(self.random_params(&mut stream(seed, "init", 0), 1.0))
    }

    fn eval_loss(&self, params: &[f64]) -> f64 {
        let idx: Vec<usize> = (0..self.test.y.len()).collect();
        self.loss_grad(&self.test, &idx, params).0
    }
}

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h` of the
/// minibatch loss selected by `batch_seed`.
pub fn finite_diff_grad(
    problem: &dyn Problem,
    params: &[f64],
    h: f64,
    batch_seed: u64,
) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ProblemError::Invalid(format!(
            "step h must be > 0, got {h}"
        )));
    }
    let mut x = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let fp = problem.eval(&x, batch_seed).0;
            x[i] = orig - h;
            let fm = problem.eval(&x, batch_seed).0;
            x[i] = orig;
            Ok((fp - fm) / (2.0 * h))
        })
        .collect()
}

/// `max_i |a_i - b_i| / max(max_i |b_i|, tiny)`: the infinity-norm relative
/// error of `a` against reference `b`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

/// Serializable description of a problem instance. The `Display` form is
/// the `problem` column of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Quadratic {
        dim: usize,
        #[serde(default = "one")]
        condition: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        data_seed: u64,
    },
    Rosenbrock {
        dim: usize,
    },
    Logistic {
        n_samples: usize,
        dim: usize,
        batch_size: usize,
        #[serde(default)]
        data_seed: u64,
    },
    Mlp {
        in_dim: usize,
        hidden_dim: usize,
        n_samples: usize,
        batch_size: usize,
        #[serde(default)]
        data_seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

impl ProblemSpec {
    pub fn build(&self) -> Result<Arc<dyn Problem>> {
        Ok(match *self {
            ProblemSpec::Quadratic {
                dim,
                condition,
                noise,
                data_seed,
            } => Arc::new(Quadratic::new(dim, condition, noise, data_seed)?),
            ProblemSpec::Rosenbrock { dim } => Arc::new(Rosenbrock::new(dim)?),
            ProblemSpec::Logistic {
                n_samples,
                dim,
                batch_size,
                data_seed,
            } => Arc::new(LogisticRegression::new(
                n_samples, dim, batch_size, data_seed,
            )?),
            ProblemSpec::Mlp {
                in_dim,
                hidden_dim,
                n_samples,
                batch_size,
                data_seed,
            } => Arc::new(TinyMlp::new(
                in_dim, hidden_dim, n_samples, batch_size, data_seed,
            )?),
        })
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::Quadratic {
                dim,
                condition,
                noise,
                data_seed,
            } => write!(
                f,
                "quadratic:dim={dim};condition={condition};noise={noise};data_seed={data_seed}"
            ),
            ProblemSpec::Rosenbrock { dim } => write!(f, "rosenbrock:dim={dim}"),
            ProblemSpec::Logistic {
                n_samples,
                dim,
                batch_size,
                data_seed,
            } => write!(
                f,
                "logistic:n_samples={n_samples};dim={dim};batch_size={batch_size};data_seed={data_seed}"
            ),
            ProblemSpec::Mlp {
                in_dim,
                hidden_dim,
                n_samples,
                batch_size,
                data_seed,
            } => write!(
                f,
                "mlp:in_dim={in_dim};hidden_dim={hidden_dim};n_samples={n_samples};batch_size={batch_size};data_seed={data_seed}"
            ),
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self> {
        let err = || ProblemError::Parse(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(err)?;
        let mut table = toml::Table::new();
        table.insert("kind".into(), toml::Value::String(kind.into()));
        for field in rest.split(';').filter(|f| !f.is_empty()) {
            let (k, v) = field.split_once('=').ok_or_else(err)?;
            let value = if let Ok(i) = v.parse::<i64>() {
                toml::Value::Integer(i)
            } else {
                toml::Value::Float(v.parse::<f64>().map_err(|_| err())?)
            };
            table.insert(k.into(), value);
        }
        // integers are accepted where floats are expected
        let spec: ProblemSpec = toml::Value::Table(table.clone())
            .try_into()
            .or_else(|_| {
                for key in ["condition", "noise"] {
                    if let Some(toml::Value::Integer(i)) = table.get(key).cloned() {
                        table.insert(key.into(), toml::Value::Float(i as f64));
                    }
                }
                toml::Value::Table(table).try_into()
            })
            .map_err(|_| err())?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Linear(Vec<f64>);

    impl Problem for Linear {
        fn name(&self) -> &str {
            "linear"
        }
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn is_deterministic(&self) -> bool {
            true
        }
        fn eval(&self, params: &[f64], _: u64) -> (f64, Vec<f64>) {
            (
                self.0.iter().zip(params).map(|(c, x)| c * x).sum(),
                self.0.clone(),
            )
        }
        fn init(&self, _: u64) -> ParamVector {
            ParamVector::zeros(self.0.len())
        }
        fn eval_loss(&self, params: &[f64]) -> f64 {
            self.eval(params, 0).0
        }
    }

    #[test]
    fn quadratic_basics() {
        let q = Quadratic::new(1, 1.0, 0.0, 0).unwrap();
        assert_eq!(q.eval(&[3.0], 0), (4.5, vec![3.0]));
        let q = Quadratic::new(10, 100.0, 0.0, 0).unwrap();
        let (l, g) = q.eval(&[0.0; 10], 5);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        assert_relative_eq!(q.eigenvalues()[9], 100.0, max_relative = 1e-14);
        assert_eq!(q.eigenvalues()[0], 1.0);
        assert!(Quadratic::new(3, 0.5, 0.0, 0).is_err());
        assert!(Quadratic::new(0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn rosenbrock_basics() {
        let r = Rosenbrock::new(4).unwrap();
        assert_eq!(r.eval(&[1.0; 4], 0), (0.0, vec![0.0; 4]));
        let r2 = Rosenbrock::new(2).unwrap();
        assert_eq!(r2.eval(&[0.0, 0.0], 0), (1.0, vec![-2.0, 0.0]));
        assert!(Rosenbrock::new(3).is_err());
        assert!(Rosenbrock::new(0).is_err());
        let fd = finite_diff_grad(&r2, &[0.0, 0.0], 1e-5, 0).unwrap();
        assert!((fd[0] + 2.0).abs() < 1e-6 && fd[1].abs() < 1e-6, "{fd:?}");
    }

    #[test]
    fn logistic_at_origin_is_ln2() {
        let p = LogisticRegression::new(200, 5, 16, 3).unwrap();
        let (l, _) = p.full_batch(&[0.0; 5]);
        assert_relative_eq!(l, std::f64::consts::LN_2, max_relative = 1e-14);
        let (lb, _) = p.eval(&[0.0; 5], 11);
        assert_relative_eq!(lb, std::f64::consts::LN_2, max_relative = 1e-14);
        assert!(LogisticRegression::new(10, 2, 11, 0).is_err());
        let labels = p.labels();
        assert!(labels.contains(&1.0) && labels.contains(&-1.0));
    }

    #[test]
    fn data_generation_is_seeded() {
        let a = LogisticRegression::new(50, 3, 10, 9).unwrap();
        let b = LogisticRegression::new(50, 3, 10, 9).unwrap();
        let c = LogisticRegression::new(50, 3, 10, 10).unwrap();
        let bits = |p: &LogisticRegression| -> Vec<u64> {
            p.features().iter().flatten().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.labels(), b.labels());
        assert_ne!(bits(&a), bits(&c));
        let m1 = TinyMlp::new(3, 4, 20, 5, 1).unwrap();
        let m2 = TinyMlp::new(3, 4, 20, 5, 1).unwrap();
        assert_eq!(m1.teacher_params(), m2.teacher_params());
        assert_eq!(m1.eval(&m1.init(2).0, 7), m2.eval(&m2.init(2).0, 7));
    }

    #[test]
    fn mlp_teacher_is_stationary() {
        let m = TinyMlp::new(4, 6, 64, 8, 2).unwrap();
        let (l, g) = m.eval(m.teacher_params(), 3);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_diff_on_linear_is_exact() {
        let c = vec![1.5, -2.0, 0.25];
        let fd = finite_diff_grad(&Linear(c.clone()), &[0.3, -1.0, 4.0], 1e-4, 0).unwrap();
        for (a, b) in fd.iter().zip(&c) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(finite_diff_grad(&Linear(c.clone()), &[0.0; 3], 0.0, 0).is_err());
        assert!(finite_diff_grad(&Linear(c), &[0.0; 3], -1e-3, 0).is_err());
    }

    #[test]
    fn finite_diff_is_second_order() {
        let q = Quadratic::new(10, 100.0, 0.0, 0).unwrap();
        let x = q.init(4).0;
        let exact = q.eval(&x, 0).1;
        let fd = finite_diff_grad(&q, &x, 1e-5, 0).unwrap();
        assert!(max_relative_error(&fd, &exact) < 1e-8);

        // cubic terms make the truncation error visible on rosenbrock
        let r = Rosenbrock::new(2).unwrap();
        let x = [0.7, -0.4];
        let exact = r.eval(&x, 0).1;
        let e1 = max_relative_error(&finite_diff_grad(&r, &x, 1e-2, 0).unwrap(), &exact);
        let e2 = max_relative_error(&finite_diff_grad(&r, &x, 5e-3, 0).unwrap(), &exact);
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn noisy_quadratic_gradient_matches_its_loss() {
        let q = Quadratic::new(5, 10.0, 0.3, 1).unwrap();
        assert!(!q.is_deterministic());
        let x = q.init(0).0;
        let (_, g) = q.eval(&x, 42);
        let fd = finite_diff_grad(&q, &x, 1e-5, 42).unwrap();
        assert!(max_relative_error(&fd, &g) < 1e-8);
        assert_ne!(q.eval(&x, 42).1, q.eval(&x, 43).1);
    }

    #[test]
    fn spec_strings_round_trip() {
        let specs = [
            ProblemSpec::Quadratic {
                dim: 10,
                condition: 100.0,
                noise: 0.05,
                data_seed: 3,
            },
            ProblemSpec::Rosenbrock { dim: 2 },
            ProblemSpec::Logistic {
                n_samples: 512,
                dim: 10,
                batch_size: 32,
                data_seed: 0,
            },
            ProblemSpec::Mlp {
                in_dim: 4,
                hidden_dim: 8,
                n_samples: 256,
                batch_size: 32,
                data_seed: 1,
            },
        ];
        for s in specs {
            let text = s.to_string();
            assert_eq!(text.parse::<ProblemSpec>().unwrap(), s, "{text}");
            assert!(s.build().is_ok());
        }
        assert!("nope:dim=3".parse::<ProblemSpec>().is_err());
        assert!("rosenbrock:dim=2;extra=1".parse::<ProblemSpec>().is_err());
    }
}
