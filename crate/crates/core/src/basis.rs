//! Restricted cubic spline and fractional polynomial bases with analytic time
//! derivatives and integrals over (0, t].

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::spec::Order;
use crate::sum::exact_sum;

/// One evaluated basis row; bases are narrow, so this stays on the stack.
pub type BasisRow = SmallVec<[f64; 8]>;

fn basis_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Basis(msg.into()))
}

/// Affine map `z = (x - means) * transform` taking raw basis rows to columns
/// that are centred and orthonormal over the sample used to build it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogTransform {
    pub means: Vec<f64>,
    /// Upper-triangular, row-major `k x k`.
    pub transform: Vec<Vec<f64>>,
}

impl OrthogTransform {
    fn apply(&self, raw: &[f64], centre: f64) -> BasisRow {
        let k = raw.len();
        let centred: BasisRow = raw.iter().zip(&self.means).map(|(x, m)| x - centre * m).collect();
        (0..k)
            .map(|j| (0..=j).map(|i| centred[i] * self.transform[i][j]).sum())
            .collect()
    }
}

/// Mean-centred Gram-Schmidt over the rows of `columns` (one inner `Vec` per
/// column). The inner product is the sample mean of elementwise products.
pub fn orthogonalize(columns: &[Vec<f64>]) -> Result<OrthogTransform> {
    let k = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 {
        return basis_err("orthogonalization needs at least two observations");
    }
    let nf = n as f64;
    let dot = |a: &[f64], b: &[f64]| exact_sum(a.iter().zip(b).map(|(x, y)| x * y)) / nf;
    let means: Vec<f64> = columns.iter().map(|c| exact_sum(c.iter().copied()) / nf).collect();
    let centred: Vec<Vec<f64>> = columns
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|x| x - m).collect())
        .collect();

    // C = Q R with R upper triangular; the transform is R^{-1}.
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut r = vec![vec![0.0; k]; k];
    for j in 0..k {
        let mut u = centred[j].clone();
        for i in 0..j {
            let proj = dot(&q[i], &u);
            r[i][j] += proj;
            for (a, b) in u.iter_mut().zip(&q[i]) {
                *a -= proj * b;
            }
        }
        let norm = dot(&u, &u).sqrt();
        let scale = dot(&centred[j], &centred[j]).sqrt();
        if !(norm > 1e-10 * scale.max(1e-300)) || norm == 0.0 {
            return basis_err(format!("basis column {} is linearly dependent on the others", j + 1));
        }
        r[j][j] = norm;
        q.push(u.into_iter().map(|x| x / norm).collect());
    }
    let mut inv = vec![vec![0.0; k]; k];
    for j in 0..k {
        inv[j][j] = 1.0 / r[j][j];
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|l| r[i][l] * inv[l][j]).sum();
            inv[i][j] = -s / r[i][i];
        }
    }
    Ok(OrthogTransform {
        means,
        transform: inv,
    })
}

/// Restricted cubic spline in `x` (or `log x`), linear beyond the boundary
/// knots. With `k` knots it has `k - 1` columns, the first being `x` itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcsBasis {
    pub knots: Vec<f64>,
    pub log_time: bool,
    pub orthog: Option<OrthogTransform>,
}

/// Knot placement: boundary knots at the extremes, `df - 1` interior knots at
/// evenly spaced centiles using the nearest-rank rule. Works on log values
/// when `log_time` is set.
pub fn rcs_knots(values: &[f64], df: usize, log_time: bool) -> Result<Vec<f64>> {
    if df == 0 {
        return basis_err("rcs() needs df >= 1");
    }
    let mut v: Vec<f64> = Vec::with_capacity(values.len());
    for &x in values {
        if log_time {
            if x <= 0.0 {
                return basis_err(format!("cannot take the log of non-positive value {x} for rcs knots"));
            }
            v.push(x.ln());
        } else {
            v.push(x);
        }
    }
    v.sort_by(f64::total_cmp);
    let mut distinct = v.clone();
    distinct.dedup();
    if distinct.len() < df + 1 {
        return basis_err(format!(
            "rcs() with df = {df} needs at least {} distinct values, found {}",
            df + 1,
            distinct.len()
        ));
    }
    let n = v.len();
    let mut knots = vec![v[0]];
    for j in 1..df {
        let p = j as f64 / df as f64;
        let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
        knots.push(v[rank - 1]);
    }
    knots.push(v[n - 1]);
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return basis_err(format!("tied values give duplicate rcs knots {knots:?}"));
    }
    Ok(knots)
}

#[inline]
fn pos(x: f64) -> f64 {
    x.max(0.0)
}

impl RcsBasis {
    pub fn new(knots: Vec<f64>, log_time: bool) -> Result<Self> {
        if knots.len() < 2 {
            return basis_err("rcs() needs at least two knots");
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return basis_err("rcs() knots must be strictly ascending");
        }
        Ok(Self {
            knots,
            log_time,
            orthog: None,
        })
    }

    pub fn n_cols(&self) -> usize {
        self.knots.len() - 1
    }

    /// Raw spline columns and their first and second derivatives in `x`.
    fn raw(&self, x: f64, deriv: usize) -> BasisRow {
        let k = &self.knots;
        let (kmin, kmax) = (k[0], k[k.len() - 1]);
        let mut out = BasisRow::new();
        out.push(match deriv {
            0 => x,
            1 => 1.0,
            _ => 0.0,
        });
        for &kj in &k[1..k.len() - 1] {
            let lam = (kmax - kj) / (kmax - kmin);
            let f = |c: f64| match deriv {
                0 => pos(x - c).powi(3),
                1 => 3.0 * pos(x - c).powi(2),
                _ => 6.0 * pos(x - c),
            };
            out.push(f(kj) - lam * f(kmin) - (1.0 - lam) * f(kmax));
        }
        out
    }

    /// Antiderivative of the raw columns with respect to time over (0, t].
    fn raw_integral(&self, t: f64) -> BasisRow {
        let k = &self.knots;
        let (kmin, kmax) = (k[0], k[k.len() - 1]);
        let mut out = BasisRow::new();
        if self.log_time {
            // int_{-inf}^{X} p(x) e^x dx with X = log t
            let xx = t.ln();
            out.push(t * (xx - 1.0));
            let cube = |c: f64| {
                if xx <= c {
                    0.0
                } else {
                    let d = xx - c;
                    t * (d * d * d - 3.0 * d * d + 6.0 * d - 6.0) + 6.0 * c.exp()
                }
            };
            for &kj in &k[1..k.len() - 1] {
                let lam = (kmax - kj) / (kmax - kmin);
                out.push(cube(kj) - lam * cube(kmin) - (1.0 - lam) * cube(kmax));
            }
        } else {
            out.push(0.5 * t * t);
            let quart = |c: f64| (pos(t - c).powi(4) - pos(-c).powi(4)) / 4.0;
            for &kj in &k[1..k.len() - 1] {
                let lam = (kmax - kj) / (kmax - kmin);
                out.push(quart(kj) - lam * quart(kmin) - (1.0 - lam) * quart(kmax));
            }
        }
        out
    }

    /// Basis row (or its time derivative / integral over (0, t]) at `t`.
    pub fn eval(&self, t: f64, order: Order) -> Result<BasisRow> {
        if self.log_time && t <= 0.0 {
            return basis_err(format!("log-scale spline evaluated at non-positive time {t}"));
        }
        let (raw, centre) = match order {
            Order::Value => (self.raw(self.x(t), 0), 1.0),
            Order::D1 => {
                let d = self.raw(self.x(t), 1);
                if self.log_time {
                    (d.into_iter().map(|v| v / t).collect(), 0.0)
                } else {
                    (d, 0.0)
                }
            }
            Order::D2 => {
                let x = self.x(t);
                let d2 = self.raw(x, 2);
                if self.log_time {
                    let d1 = self.raw(x, 1);
                    (d2.iter().zip(&d1).map(|(a, b)| (a - b) / (t * t)).collect(), 0.0)
                } else {
                    (d2, 0.0)
                }
            }
            Order::Integral => {
                if t < 0.0 {
                    return basis_err("integral over (0, t] needs t >= 0");
                }
                (self.raw_integral(t), t)
            }
        };
        Ok(match &self.orthog {
            Some(o) => o.apply(&raw, centre),
            None => raw,
        })
    }

    fn x(&self, t: f64) -> f64 {
        if self.log_time {
            t.ln()
        } else {
            t
        }
    }

    /// Builds and stores the orthogonalising transform from sample values.
    pub fn fit_orthog(&mut self, sample: &[f64]) -> Result<()> {
        self.orthog = None;
        let mut cols = vec![Vec::with_capacity(sample.len()); self.n_cols()];
        for &t in sample {
            for (c, v) in cols.iter_mut().zip(self.eval(t, Order::Value)?) {
                c.push(v);
            }
        }
        self.orthog = Some(orthogonalize(&cols)?);
        Ok(())
    }
}

/// Fractional polynomial: each term is `t^p (log t)^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpBasis {
    pub powers: Vec<f64>,
}

impl FpBasis {
    pub fn new(powers: Vec<f64>) -> Result<Self> {
        if powers.is_empty() || powers.len() > 2 {
            return basis_err("fp() takes one or two powers");
        }
        Ok(Self { powers })
    }

    pub fn n_cols(&self) -> usize {
        self.powers.len()
    }

    /// `(power, log exponent)` of each term. Power 0 is `log t`; a repeated
    /// power is multiplied by `log t` in its second appearance.
    fn terms(&self) -> SmallVec<[(f64, i32); 2]> {
        let mut out: SmallVec<[(f64, i32); 2]> = SmallVec::new();
        for &p in &self.powers {
            let base = if p == 0.0 { 1 } else { 0 };
            let repeats = out.iter().filter(|(q, _)| *q == p).count() as i32;
            out.push((p, base + repeats));
        }
        out
    }

    pub fn eval(&self, t: f64, order: Order) -> Result<BasisRow> {
        if t <= 0.0 {
            return basis_err(format!("fp() evaluated at non-positive value {t}"));
        }
        let l = t.ln();
        let lp = |m: i32| if m < 0 { 0.0 } else { l.powi(m) };
        self.terms()
            .into_iter()
            .map(|(p, m)| {
                let mf = m as f64;
                Ok(match order {
                    Order::Value => t.powf(p) * lp(m),
                    Order::D1 => t.powf(p - 1.0) * (p * lp(m) + mf * lp(m - 1)),
                    Order::D2 => {
                        t.powf(p - 2.0)
                            * (p * (p - 1.0) * lp(m) + mf * (2.0 * p - 1.0) * lp(m - 1) + mf * (mf - 1.0) * lp(m - 2))
                    }
                    Order::Integral => {
                        if p <= -1.0 {
                            return basis_err(format!("t^{p} is not integrable from 0"));
                        }
                        let q = p + 1.0;
                        let tq = t.powf(q);
                        // int u^p L^m = t^q sum_i (-1)^i m!/(m-i)! L^{m-i} / q^{i+1}
                        let mut acc = 0.0;
                        let mut fall = 1.0;
                        for i in 0..=m {
                            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                            acc += sign * fall * lp(m - i) / q.powi(i + 1);
                            fall *= (m - i) as f64;
                        }
                        tq * acc
                    }
                })
            })
            .collect()
    }
}
