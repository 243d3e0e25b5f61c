//! Data simulators shared by the integration tests.
#![allow(dead_code)]

use jointlik::dataset::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Column builder: `Some` everywhere unless the value is NaN.
#[derive(Default)]
pub struct Table {
    cols: Vec<(String, Vec<Option<f64>>)>,
}

impl Table {
    pub fn new(names: &[&str]) -> Self {
        Self {
            cols: names.iter().map(|n| (n.to_string(), Vec::new())).collect(),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols.len());
        for (c, &v) in self.cols.iter_mut().zip(row) {
            c.1.push(if v.is_nan() { None } else { Some(v) });
        }
    }

    pub fn build(self) -> Dataset {
        Dataset::from_columns(self.cols).expect("simulated table")
    }
}

/// `y = 1 + 0.5 x1 - 0.3 x2 + e`, `e ~ N(0, 0.8^2)`.
pub fn gaussian_fixed(rng: &mut impl Rng, n: usize) -> Dataset {
    let mut t = Table::new(&["y", "x1", "x2"]);
    for _ in 0..n {
        let x1 = normal(rng);
        let x2: f64 = rng.random_range(0.0..2.0);
        let y = 1.0 + 0.5 * x1 - 0.3 * x2 + 0.8 * normal(rng);
        t.push(&[y, x1, x2]);
    }
    t.build()
}

/// Weibull proportional hazards `h = lambda gamma t^(gamma-1) exp(beta x)`
/// with uniform administrative censoring.
pub fn weibull_ph(rng: &mut impl Rng, n: usize, lambda: f64, gamma: f64, beta: f64, censor_max: f64) -> Dataset {
    let mut t = Table::new(&["stime", "died", "trt"]);
    for _ in 0..n {
        let x = f64::from(rng.random_bool(0.5));
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let time = (-u.ln() / (lambda * (beta * x).exp())).powf(1.0 / gamma);
        let c = rng.random_range(0.0..censor_max);
        t.push(&[time.min(c), f64::from(time <= c), x]);
    }
    t.build()
}

/// Random-intercept gaussian: `y = 2 + 0.4 x + b_i + e` with
/// `b ~ N(0, sb^2)`, `e ~ N(0, se^2)`.
pub fn random_intercept(rng: &mut impl Rng, clusters: usize, per: usize, sb: f64, se: f64) -> Dataset {
    let mut t = Table::new(&["id", "x", "y"]);
    for i in 0..clusters {
        let b = sb * normal(rng);
        for _ in 0..per {
            let x = normal(rng);
            t.push(&[(i + 1) as f64, x, 2.0 + 0.4 * x + b + se * normal(rng)]);
        }
    }
    t.build()
}

/// Joint longitudinal-survival data with a shared random intercept:
/// `y = 1 + 0.2 time + b + e` and Weibull hazard
/// `0.1 * 1.2 t^0.2 exp(0.5 trt + alpha b)`, censored uniformly on (0, 6).
/// Measurements are taken at times 0, 1, ... before the event or censoring
/// time; the survival response sits on each subject's first row.
pub fn shared_intercept(rng: &mut impl Rng, clusters: usize, alpha: f64, sb: f64, se: f64) -> Dataset {
    let (lambda, gamma) = (0.1, 1.2);
    let mut t = Table::new(&["id", "trt", "time", "y", "stime", "died"]);
    for i in 0..clusters {
        let b = sb * normal(rng);
        let trt = f64::from(rng.random_bool(0.5));
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let event = (-u.ln() / (lambda * (0.5 * trt + alpha * b).exp())).powf(1.0 / gamma);
        let cens = rng.random_range(0.0..6.0);
        let (stime, died) = (event.min(cens), f64::from(event <= cens));
        let mut k = 0;
        while (k as f64) < stime || k == 0 {
            let time = k as f64;
            let y = 1.0 + 0.2 * time + b + se * normal(rng);
            let (s, d) = if k == 0 { (stime, died) } else { (f64::NAN, f64::NAN) };
            t.push(&[(i + 1) as f64, trt, time, y, s, d]);
            k += 1;
        }
    }
    t.build()
}

/// Inverts a cumulative hazard on a grid: the first `t` with `H(t) >= target`,
/// or `None` beyond `t_max`.
fn invert_cumhazard(target: f64, t_max: f64, hazard: impl Fn(f64) -> f64) -> Option<f64> {
    let steps = 2000;
    let dt = t_max / steps as f64;
    let mut h_acc = 0.0;
    for k in 0..steps {
        let (a, b) = (k as f64 * dt, (k + 1) as f64 * dt);
        let inc = 0.5 * (hazard(a.max(1e-9)) + hazard(b)) * dt;
        if h_acc + inc >= target {
            return Some(a + dt * (target - h_acc) / inc);
        }
        h_acc += inc;
    }
    None
}

/// Two competing causes with Weibull cause-specific hazards and a binary
/// covariate, censored uniformly on (0, 15).
pub fn competing_risks(rng: &mut impl Rng, n: usize) -> Dataset {
    let mut t = Table::new(&["stime", "cardio", "other", "type"]);
    for _ in 0..n {
        let x = f64::from(rng.random_bool(0.5));
        let h1 = move |u: f64| 0.05 * 1.3 * u.powf(0.3) * (0.6 * x).exp();
        let h2 = move |u: f64| 0.08 * 0.8 * u.powf(-0.2) * (-0.4 * x).exp();
        let e: f64 = -rng.random_range(f64::EPSILON..1.0f64).ln();
        let time = invert_cumhazard(e, 40.0, |u| h1(u) + h2(u)).unwrap_or(40.0);
        let c = rng.random_range(0.0..15.0);
        let (stime, observed) = (time.min(c), time <= c);
        let (mut d1, mut d2) = (0.0, 0.0);
        if observed {
            if rng.random_bool(h1(time) / (h1(time) + h2(time))) {
                d1 = 1.0;
            } else {
                d2 = 1.0;
            }
        }
        t.push(&[stime, d1, d2, x]);
    }
    t.build()
}

/// Four outcomes per subject, structured like the two-cause, two-marker model:
/// correlated random intercepts `(b1, b2)`, a continuous marker with mean
/// `3 - 0.01 age + 0.9 type - 0.05 time + b1`, a binary marker with logit
/// `1.4 - 0.1 time + b2`, cardiovascular death with Weibull hazard depending on
/// the marker's current value and `b2`, and other-cause death depending on
/// `b1` and a time-varying type effect.
pub fn four_outcomes(rng: &mut impl Rng, clusters: usize) -> Dataset {
    let mut t = Table::new(&["id", "age", "type", "time", "log.grad", "catef", "stime", "cardio", "other"]);
    let (s1, s2, rho): (f64, f64, f64) = (0.5, 1.0, -0.5);
    let age_dist = Normal::new(65.0, 10.0).expect("valid normal");
    for i in 0..clusters {
        let z1 = normal(rng);
        let z2 = normal(rng);
        let b1 = s1 * z1;
        let b2 = s2 * (rho * z1 + (1.0 - rho * rho).sqrt() * z2);
        let age: f64 = age_dist.sample(rng);
        let ty = f64::from(rng.random_bool(0.5));
        let marker = move |u: f64| 3.0 - 0.01 * age + 0.9 * ty - 0.05 * u + b1;
        let h1 = move |u: f64| (-6.0f64 + 0.3 * ty + 0.5 * marker(u) + 0.1 * b2).exp() * 1.5 * u.powf(0.5);
        let h2 = move |u: f64| (-4.5f64 + (0.6 - 0.3 * u.ln()) * ty + 0.8 * b1).exp() * 1.3 * u.powf(0.3);
        let e: f64 = -rng.random_range(f64::EPSILON..1.0f64).ln();
        let time = invert_cumhazard(e, 30.0, |u| h1(u) + h2(u)).unwrap_or(30.0);
        let c = rng.random_range(2.0..12.0);
        let (stime, observed) = (time.min(c), time <= c);
        let (mut d1, mut d2) = (0.0, 0.0);
        if observed {
            if rng.random_bool(h1(time) / (h1(time) + h2(time))) {
                d1 = 1.0;
            } else {
                d2 = 1.0;
            }
        }
        let mut k = 0;
        while (k as f64) < stime || k == 0 {
            let u = k as f64 + if k == 0 { 0.01 } else { rng.random_range(-0.2..0.2) };
            let y = marker(u) + 0.4 * normal(rng);
            let p = 1.0 / (1.0 + (-(1.4 - 0.1 * u + b2)).exp());
            let cat = f64::from(rng.random_bool(p));
            let (s, a, b) = if k == 0 { (stime, d1, d2) } else { (f64::NAN, f64::NAN, f64::NAN) };
            t.push(&[(i + 1) as f64, age, ty, u, y, cat, s, a, b]);
            k += 1;
        }
    }
    t.build()
}

pub const FOUR_OUTCOME_SPEC: &str = "\
levels = id
covariance = unstructured
ip = 9
weibull : Surv(stime, cardio) ~ type + EV[log.grad] + M2[id] | timevar=stime
weibull : Surv(stime, other) ~ type + type:fp(stime, powers = c(0)) + M1[id] | timevar=stime
gaussian : log.grad ~ age + type + rcs(time, df = 3, orthog = TRUE) + M1[id] * 1 | timevar=time
bernoulli : catef ~ fp(time, powers = c(1)) + M2[id] * 1 | timevar=time
";
