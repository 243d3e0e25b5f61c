//! Node sets for integrating over normal random effects, and Gauss-Legendre
//! rules for time integrals.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::spec::{Covariance, IntMethod};

/// One-dimensional quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Probabilists' Gauss-Hermite rule: `E[f(Z)] ~ sum w_i f(z_i)` for standard
/// normal `Z`, exact for polynomials up to degree `2n - 1`.
pub fn gauss_hermite(n: usize) -> Result<Rule> {
    if !(1..=200).contains(&n) {
        return Err(Error::Eval(format!("Gauss-Hermite points must be in 1..=200, got {n}")));
    }
    if n == 1 {
        return Ok(Rule {
            nodes: vec![0.0],
            weights: vec![1.0],
        });
    }
    // Golub-Welsch for starting values, then Newton on the orthonormal
    // recurrence for full relative accuracy of the tail weights.
    let jac = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut start: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
    start.sort_by(f64::total_cmp);

    // p_k = He_k / sqrt(k!)
    let eval = |x: f64| {
        let (mut p0, mut p1) = (0.0, 1.0);
        for k in 0..n {
            let p2 = (x * p1 - (k as f64).sqrt() * p0) / ((k + 1) as f64).sqrt();
            p0 = p1;
            p1 = p2;
        }
        (p1, p0)
    };
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &x0 in &start {
        let mut x = x0;
        for _ in 0..100 {
            let (pn, pn1) = eval(x);
            let dx = pn / ((n as f64).sqrt() * pn1);
            x -= dx;
            if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, pn1) = eval(x);
        nodes.push(x);
        weights.push(1.0 / (n as f64 * pn1 * pn1));
    }
    // symmetrise
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = crate::sum::exact_sum(weights.iter().copied());
    for w in &mut weights {
        *w /= total;
    }
    Ok(Rule { nodes, weights })
}

fn legendre_unit(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            } else {
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

/// Cached Gauss-Legendre rule on [-1, 1].
pub fn legendre_rule(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.read().expect("rule cache poisoned").get(&n) {
        return r.clone();
    }
    let rule = Arc::new(legendre_unit(n.max(1)));
    cache.write().expect("rule cache poisoned").insert(n, rule.clone());
    rule
}

/// Gauss-Legendre rule on [a, b], exact for polynomials up to degree `2n - 1`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Rule {
    let unit = legendre_rule(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Rule {
        nodes: unit.nodes.iter().map(|x| mid + half * x).collect(),
        weights: unit.weights.iter().map(|w| half * w).collect(),
    }
}

/// `int_0^t f(u) du` by an `n`-point Gauss-Legendre rule.
pub fn integrate_0_t<F>(n: usize, t: f64, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let unit = legendre_rule(n);
    let half = 0.5 * t;
    let mut acc = 0.0;
    for (x, w) in unit.nodes.iter().zip(&unit.weights) {
        acc += w * f(half * (1.0 + x))?;
    }
    Ok(half * acc)
}

/// `int_0^t f(u) du` by an `n`-point Gauss-Legendre rule in `s` after the
/// substitution `u = t s^4`. Integrands behaving like `u^a` (a > -1) near 0,
/// as hazards with log-time or Weibull terms do, become smooth in `s`.
pub fn integrate_graded<F>(n: usize, t: f64, mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let unit = legendre_rule(n);
    let mut acc = 0.0;
    for (x, w) in unit.nodes.iter().zip(&unit.weights) {
        let s = 0.5 * (1.0 + x);
        let s3 = s * s * s;
        acc += w * f(t * s3 * s)? * 4.0 * s3;
    }
    Ok(0.5 * t * acc)
}

/// `int_0^t f(u) du` split at `breaks`: the graded rule on the first panel
/// and plain `n`-point Gauss-Legendre on each later one. Spline integrands
/// are only piecewise smooth, so panels ending at their knots keep the
/// rule's full accuracy.
pub fn integrate_graded_split<F>(n: usize, t: f64, breaks: &[f64], mut f: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inner: Vec<f64> = breaks.iter().copied().filter(|&b| b > 0.0 && b < t).collect();
    let Some(&first) = inner.first() else {
        return integrate_graded(n, t, f);
    };
    let mut acc = integrate_graded(n, first, &mut f)?;
    let unit = legendre_rule(n);
    let mut lo = first;
    for &hi in inner[1..].iter().chain(std::iter::once(&t)) {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        let mut panel = 0.0;
        for (x, w) in unit.nodes.iter().zip(&unit.weights) {
            panel += w * f(mid + half * x)?;
        }
        acc += half * panel;
        lo = hi;
    }
    Ok(acc)
}

/// Abscissae in standard-normal space with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    /// `n` points, each of dimension `r`.
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub method: IntMethod,
    pub points: usize,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, Vec::len)
    }

    /// Single point at the origin: the node set of a level without random effects.
    pub fn degenerate(r: usize) -> Self {
        Self {
            nodes: vec![vec![0.0; r]],
            weights: vec![1.0],
            method: IntMethod::GHermite,
            points: 1,
        }
    }
}

/// Product Gauss-Hermite rule in `r` dimensions (`points^r` nodes).
pub fn gauss_hermite_product(points: usize, r: usize) -> Result<NodeSet> {
    let rule = gauss_hermite(points)?;
    let total = points.checked_pow(r as u32).filter(|&n| n <= 50_000_000).ok_or_else(|| {
        Error::Eval(format!("{points}^{r} Gauss-Hermite nodes is too many; use a Monte Carlo method"))
    })?;
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut idx = vec![0usize; r];
    for _ in 0..total {
        nodes.push(idx.iter().map(|&i| rule.nodes[i]).collect());
        weights.push(idx.iter().map(|&i| rule.weights[i]).product());
        for d in (0..r).rev() {
            idx[d] += 1;
            if idx[d] < points {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(NodeSet {
        nodes,
        weights,
        method: IntMethod::GHermite,
        points,
    })
}

const PRIMES: [u32; 64] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107,
    109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229,
    233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311,
];

/// Radical inverse of `i` in `base`.
pub fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut x = 0.0;
    while i > 0 {
        x += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    x
}

/// Halton points `1..=n` (the origin is skipped) in the unit cube.
pub fn halton_uniform(n: usize, r: usize) -> Result<Vec<Vec<f64>>> {
    if r > PRIMES.len() {
        return Err(Error::Eval(format!("Halton sequences support at most {} dimensions", PRIMES.len())));
    }
    Ok((1..=n as u64)
        .map(|i| PRIMES[..r].iter().map(|&p| radical_inverse(i, p)).collect())
        .collect())
}

static SOBOL_DATA: &str = include_str!("../data/sobol_joe_kuo.txt");

struct SobolDim {
    v: [u32; 32],
}

fn sobol_dims(r: usize) -> Result<Vec<SobolDim>> {
    let mut dims = Vec::with_capacity(r);
    // first dimension: van der Corput in base 2
    let mut v = [0u32; 32];
    for (k, vk) in v.iter_mut().enumerate() {
        *vk = 1u32 << (31 - k);
    }
    dims.push(SobolDim { v });
    let mut lines = SOBOL_DATA.lines().filter(|l| !l.starts_with('#'));
    while dims.len() < r {
        let line = lines.next().ok_or_else(|| {
            Error::Eval(format!("Sobol direction numbers are available for at most {} dimensions", dims.len()))
        })?;
        let nums: Vec<u32> = line.split_whitespace().map(|x| x.parse().expect("bad sobol table")).collect();
        let (s, a) = (nums[0] as usize, nums[1]);
        let m = &nums[2..2 + s];
        let mut v = [0u32; 32];
        for k in 0..32 {
            if k < s {
                v[k] = m[k] << (31 - k);
            } else {
                let mut x = v[k - s] ^ (v[k - s] >> s);
                for j in 1..s {
                    if (a >> (s - 1 - j)) & 1 == 1 {
                        x ^= v[k - j];
                    }
                }
                v[k] = x;
            }
        }
        dims.push(SobolDim { v });
    }
    Ok(dims)
}

/// Sobol points `1..=n` (the origin is skipped) in the unit cube.
pub fn sobol_uniform(n: usize, r: usize) -> Result<Vec<Vec<f64>>> {
    let dims = sobol_dims(r)?;
    let mut x = vec![0u32; r];
    let mut out = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let c = (!i).trailing_zeros() as usize;
        for (xd, d) in x.iter_mut().zip(&dims) {
            *xd ^= d.v[c];
        }
        out.push(x.iter().map(|&b| b as f64 / 4294967296.0).collect());
    }
    Ok(out)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Quasi- or pseudo-random node set with equal weights.
pub fn qmc_nodes(method: IntMethod, n: usize, r: usize, seed: u64) -> Result<NodeSet> {
    if n < 2 || r < 1 {
        return Err(Error::Eval(format!("Monte Carlo node sets need n >= 2 and r >= 1 (got n={n}, r={r})")));
    }
    let nodes = match method {
        IntMethod::Halton | IntMethod::Sobol => {
            let u = if method == IntMethod::Halton {
                halton_uniform(n, r)?
            } else {
                sobol_uniform(n, r)?
            };
            let norm = standard_normal();
            u.into_iter().map(|p| p.into_iter().map(|x| norm.inverse_cdf(x)).collect()).collect()
        }
        IntMethod::Mc => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| (0..r).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect()
        }
        IntMethod::GHermite => return gauss_hermite_product(n, r),
    };
    Ok(NodeSet {
        nodes,
        weights: vec![1.0 / n as f64; n],
        method,
        points: n,
    })
}

/// Node set for one level under the given method.
pub fn level_nodes(method: IntMethod, points: usize, r: usize, seed: u64) -> Result<NodeSet> {
    if r == 0 {
        return Ok(NodeSet::degenerate(0));
    }
    match method {
        IntMethod::GHermite => gauss_hermite_product(points, r),
        _ => qmc_nodes(method, points, r, seed),
    }
}

/// Random-effect covariance on the unconstrained scale: log standard
/// deviations and inverse hyperbolic tangents of correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceParam {
    pub structure: Covariance,
    pub dim: usize,
    /// One value for `identity`, `dim` values otherwise.
    pub log_sd: Vec<f64>,
    /// Lower-triangle entries `(1,0), (2,0), (2,1), ...` for `unstructured`.
    pub atanh_corr: Vec<f64>,
}

impl CovarianceParam {
    pub fn n_log_sd(structure: Covariance, dim: usize) -> usize {
        match structure {
            Covariance::Identity => usize::from(dim > 0),
            _ => dim,
        }
    }

    pub fn n_corr(structure: Covariance, dim: usize) -> usize {
        match structure {
            Covariance::Unstructured => dim * dim.saturating_sub(1) / 2,
            _ => 0,
        }
    }

    pub fn n_params(structure: Covariance, dim: usize) -> usize {
        Self::n_log_sd(structure, dim) + Self::n_corr(structure, dim)
    }

    pub fn from_slice(structure: Covariance, dim: usize, theta: &[f64]) -> Self {
        let k = Self::n_log_sd(structure, dim);
        Self {
            structure,
            dim,
            log_sd: theta[..k].to_vec(),
            atanh_corr: theta[k..k + Self::n_corr(structure, dim)].to_vec(),
        }
    }

    pub fn sd(&self, i: usize) -> f64 {
        match self.structure {
            Covariance::Identity => self.log_sd[0].exp(),
            _ => self.log_sd[i].exp(),
        }
    }

    /// Cholesky factor of the correlation matrix. Each `tanh(atanh_corr)` is
    /// used as a partial correlation, which keeps the matrix positive
    /// definite for any finite input; with two effects it is the correlation.
    pub fn correlation_cholesky(&self) -> Vec<Vec<f64>> {
        let r = self.dim;
        let mut l = vec![vec![0.0; r]; r];
        if r == 0 {
            return l;
        }
        l[0][0] = 1.0;
        let mut idx = 0;
        for i in 1..r {
            let mut sumsq: f64 = 0.0;
            for j in 0..i {
                let z = if self.structure == Covariance::Unstructured {
                    let z = self.atanh_corr[idx].tanh();
                    idx += 1;
                    z
                } else {
                    0.0
                };
                l[i][j] = z * (1.0 - sumsq).max(0.0).sqrt();
                sumsq += l[i][j] * l[i][j];
            }
            l[i][i] = (1.0 - sumsq).max(0.0).sqrt();
        }
        l
    }

    /// Lower-triangular `L` with `L L' = Sigma`.
    pub fn cholesky(&self) -> Vec<Vec<f64>> {
        let mut l = self.correlation_cholesky();
        for (i, row) in l.iter_mut().enumerate() {
            let s = self.sd(i);
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        l
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let l = self.cholesky();
        let r = self.dim;
        (0..r)
            .map(|i| (0..r).map(|j| (0..r).map(|k| l[i][k] * l[j][k]).sum()).collect())
            .collect()
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let c = self.covariance();
        c[i][j] / (c[i][i] * c[j][j]).sqrt()
    }
}

/// Scales standard-normal nodes to draws `b = L z`.
pub fn transform_nodes(ns: &NodeSet, cov: &CovarianceParam) -> Result<Vec<Vec<f64>>> {
    if ns.dim() != cov.dim {
        return Err(Error::Eval(format!("node dimension {} does not match covariance dimension {}", ns.dim(), cov.dim)));
    }
    let l = cov.cholesky();
    Ok(ns
        .nodes
        .iter()
        .map(|z| (0..cov.dim).map(|i| (0..=i).map(|k| l[i][k] * z[k]).sum()).collect())
        .collect())
}
