//! Marginal likelihood over nested random effects, BFGS maximisation and the
//! results table.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dataset::{Dataset, Response};
use crate::error::{Error, Result};
use crate::extension::UserRegistry;
use crate::families::loglik_obs;
use crate::integration::{level_nodes, transform_nodes, NodeSet};
use crate::model::{BasisEntry, DynElement, Model};
use crate::params::{ParamInfo, ParamKind};
use crate::predictor::Eval;
use crate::spec::{Family, IntMethod, ModelSpec, Order};
use crate::sum::{log_sum_exp, ExactSum};

/// Optimiser settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Controls {
    pub max_iter: usize,
    /// Largest absolute gradient entry accepted at convergence.
    pub grad_tol: f64,
    /// Largest relative change in the log likelihood accepted at convergence.
    pub rel_tol: f64,
    pub seed: u64,
    /// Worker threads for the likelihood; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Starting values in parameter order; defaults are used when `None`.
    pub start: Option<Vec<f64>>,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-5,
            rel_tol: 1e-8,
            seed: 0,
            threads: None,
            start: None,
        }
    }
}

/// Integration rule used at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelIntegrationInfo {
    pub level: String,
    pub method: IntMethod,
    pub points: usize,
    pub random_effects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec_text: String,
    pub spec: ModelSpec,
    pub params: Vec<ParamInfo>,
    pub estimates: Vec<f64>,
    /// Covariance of the estimates; `None` when the Hessian is not invertible.
    pub vcov: Option<Vec<Vec<f64>>>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_gradient: f64,
    /// Observations entering the likelihood, per submodel.
    pub n_obs: Vec<usize>,
    pub integration: Vec<LevelIntegrationInfo>,
    pub seed: u64,
    pub bases: Vec<BasisEntry>,
}

impl FitResult {
    pub fn labels(&self) -> Vec<String> {
        self.params.iter().map(|p| p.label.clone()).collect()
    }

    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.vcov.as_ref().map(|v| (0..v.len()).map(|i| v[i][i].max(0.0).sqrt()).collect())
    }

    /// Rebuilds the evaluation model on `data` with the fitted bases.
    pub fn model(&self, data: Dataset, users: &UserRegistry) -> Result<Model> {
        Model::with_bases(&self.spec, data, users, &self.bases)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Marginal log likelihood of a model with its standard-normal node sets.
pub struct Likelihood<'m> {
    pub model: &'m Model,
    nodes: Vec<NodeSet>,
    log_weights: Vec<Vec<f64>>,
    /// `children[l][c]`: clusters at level `l + 1` inside cluster `c` of level `l`.
    children: Vec<Vec<Vec<usize>>>,
    pool: Option<rayon::ThreadPool>,
    seed: u64,
}

impl<'m> Likelihood<'m> {
    pub fn new(model: &'m Model, seed: u64, threads: Option<usize>) -> Result<Self> {
        let levels = model.data.levels();
        let mut nodes = Vec::with_capacity(levels.len());
        for (l, names) in model.re_names.iter().enumerate() {
            let method = model.spec.intmethod[l];
            let points = model.spec.ip[l];
            nodes.push(level_nodes(method, points, names.len(), seed.wrapping_add(l as u64))?);
        }
        let log_weights = nodes.iter().map(|ns| ns.weights.iter().map(|w| w.ln()).collect()).collect();
        let mut children = Vec::with_capacity(levels.len());
        for l in 0..levels.len() {
            let mut ch = vec![Vec::new(); levels[l].n_clusters()];
            if let Some(next) = levels.get(l + 1) {
                let parent = next.parent.as_ref().expect("lower levels record their parent");
                for (c, &p) in parent.iter().enumerate() {
                    ch[p].push(c);
                }
            }
            children.push(ch);
        }
        let pool = match threads {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::Eval(format!("cannot start worker threads: {e}")))?,
            ),
            None => None,
        };
        Ok(Self {
            model,
            nodes,
            log_weights,
            children,
            pool,
            seed,
        })
    }

    pub fn node_sets(&self) -> &[NodeSet] {
        &self.nodes
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        match &self.pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    fn row_loglik(&self, ev: &Eval, row: usize) -> Result<f64> {
        let mut acc = 0.0;
        for &m in &self.model.row_models[row] {
            acc += loglik_obs(ev, m, row)?;
        }
        Ok(acc)
    }

    /// Scaled draws `b = L z` of every level at `theta`.
    pub fn draws(&self, theta: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
        let covs = self.model.layout.covariances(theta);
        self.nodes.iter().zip(&covs).map(|(ns, cov)| transform_nodes(ns, cov)).collect()
    }

    /// log L_j of top-level cluster `cluster`.
    pub fn cluster_loglik(&self, theta: &[f64], cluster: usize) -> Result<f64> {
        let draws = self.draws(theta)?;
        self.cluster_with_draws(theta, &draws, cluster)
    }

    fn cluster_with_draws(&self, theta: &[f64], draws: &[Vec<Vec<f64>>], cluster: usize) -> Result<f64> {
        let mut current: Vec<&[f64]> = vec![&[]; draws.len()];
        self.level_loglik(theta, draws, 0, cluster, &mut current)
    }

    fn level_loglik<'d>(
        &self,
        theta: &[f64],
        draws: &'d [Vec<Vec<f64>>],
        l: usize,
        cluster: usize,
        current: &mut Vec<&'d [f64]>,
    ) -> Result<f64> {
        let n_levels = draws.len();
        let inner = |current: &mut Vec<&'d [f64]>| -> Result<f64> {
            let mut acc = ExactSum::new();
            if l + 1 == n_levels {
                let ev = Eval::new(self.model, theta, current);
                for &r in &self.model.data.levels()[l].cluster_rows[cluster] {
                    acc.add(self.row_loglik(&ev, r)?);
                }
            } else {
                for &child in &self.children[l][cluster] {
                    acc.add(self.level_loglik(theta, draws, l + 1, child, current)?);
                }
            }
            Ok(acc.value())
        };
        if self.nodes[l].dim() == 0 {
            return inner(current);
        }
        let mut terms = Vec::with_capacity(draws[l].len());
        for (q, b) in draws[l].iter().enumerate() {
            current[l] = b;
            terms.push(self.log_weights[l][q] + inner(current)?);
        }
        current[l] = &[];
        Ok(log_sum_exp(&terms))
    }

    /// Total log likelihood, summed exactly so that the value does not depend
    /// on row order or the number of threads.
    pub fn total(&self, theta: &[f64]) -> Result<f64> {
        let draws = self.draws(theta)?;
        let parts: Vec<f64> = self.install(|| -> Result<Vec<f64>> {
            if draws.is_empty() {
                let ev = Eval::new(self.model, theta, &[]);
                (0..self.model.data.n_rows())
                    .into_par_iter()
                    .with_min_len(64)
                    .map(|r| self.row_loglik(&ev, r))
                    .collect()
            } else {
                let n_top = self.model.data.levels()[0].n_clusters();
                (0..n_top)
                    .into_par_iter()
                    .map(|c| self.cluster_with_draws(theta, &draws, c))
                    .collect()
            }
        })?;
        let mut acc = ExactSum::new();
        acc.extend(parts);
        Ok(acc.value())
    }

    fn info(&self) -> Vec<LevelIntegrationInfo> {
        self.model
            .spec
            .levels
            .iter()
            .enumerate()
            .map(|(l, name)| LevelIntegrationInfo {
                level: name.clone(),
                method: self.nodes[l].method,
                points: self.model.spec.ip[l],
                random_effects: self.model.re_names[l].clone(),
            })
            .collect()
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let mut acc = ExactSum::new();
    let mut n = 0;
    for x in xs {
        acc.add(x);
        n += 1;
    }
    (if n > 0 { acc.value() / n as f64 } else { f64::NAN }, n)
}

/// Default starting values: coefficients 0, `_cons` from the response mean on
/// the family's link scale, ancillaries and covariance parameters 0.
pub fn starting_values(model: &Model) -> Result<Vec<f64>> {
    let mut theta = vec![0.0; model.n_params()];
    for (m, sm) in model.submodels.iter().enumerate() {
        let lay = &model.layout.submodels[m];
        let scalars = || {
            sm.rows.iter().filter_map(move |&r| match sm.response(r) {
                Some(Response::Scalar(y)) => Some(y),
                _ => None,
            })
        };
        let (events, exposure) = {
            let mut e = ExactSum::new();
            let mut t = ExactSum::new();
            for &r in &sm.rows {
                if let Some(Response::TimeEvent { time, event }) = sm.response(r) {
                    e.add(if event { 1.0 } else { 0.0 });
                    t.add(time);
                }
            }
            (e.value(), t.value())
        };
        let rate = (events.max(0.5) / exposure).ln();
        let clamp = |p: f64| p.clamp(1e-4, 1.0 - 1e-4);
        let cons = match sm.family {
            Family::Gaussian => mean(scalars()).0,
            Family::Bernoulli | Family::Beta => {
                let p = clamp(mean(scalars()).0);
                (p / (1.0 - p)).ln()
            }
            Family::Poisson | Family::NegBinomial => {
                let total: f64 = crate::sum::exact_sum(scalars());
                let expo = crate::sum::exact_sum(sm.rows.iter().map(|&r| sm.offset[r].exp()));
                (total.max(0.5) / expo).ln()
            }
            Family::Exponential | Family::Weibull | Family::Gompertz | Family::LogHazard => rate,
            Family::Rp => {
                rp_start(model, m, rate, &mut theta)?;
                continue;
            }
            Family::User | Family::Null => 0.0,
        };
        if let Some(i) = lay.cons {
            if cons.is_finite() {
                theta[i] = cons;
            }
        }
    }
    Ok(theta)
}

/// Royston-Parmar start: least squares of `log(rate * t)` on the pure
/// functions of time, so the initial log cumulative hazard is increasing.
fn rp_start(model: &Model, m: usize, rate: f64, theta: &mut [f64]) -> Result<()> {
    let sm = &model.submodels[m];
    let lay = &model.layout.submodels[m];
    let mut cols: Vec<(usize, usize)> = Vec::new(); // (component, column)
    for (c, comp) in sm.components.iter().enumerate() {
        let pure_time = comp.dynamic.len() == 1
            && matches!(comp.dynamic[0], DynElement::Time | DynElement::Basis(_))
            && lay.component_start[c].is_some()
            && sm.rows.iter().all(|&r| comp.static_row(r).iter().all(|&v| v == 1.0));
        if pure_time {
            cols.extend((0..comp.width).map(|j| (c, j)));
        }
    }
    if cols.is_empty() {
        return Err(Error::Spec(format!(
            "rp submodel {} needs a function of time (for example rcs(t, df = 3, log = TRUE)) in its predictor",
            m + 1
        )));
    }
    let rows: Vec<usize> = sm.rows.clone();
    let p = cols.len() + 1;
    let mut x = DMatrix::<f64>::zeros(rows.len(), p);
    let mut y = DVector::<f64>::zeros(rows.len());
    for (i, &r) in rows.iter().enumerate() {
        let t = sm.default_time[r];
        x[(i, 0)] = 1.0;
        for (k, &(c, j)) in cols.iter().enumerate() {
            x[(i, k + 1)] = match &sm.components[c].dynamic[0] {
                DynElement::Time => t,
                DynElement::Basis(b) => b.eval(t, Order::Value)?[j],
                _ => unreachable!(),
            };
        }
        y[i] = rate + t.ln();
    }
    let svd = x.svd(true, true);
    let beta = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::Eval(format!("rp starting values: {e}")))?;
    match lay.cons {
        Some(i) => theta[i] = beta[0],
        None => {}
    }
    for (k, &(c, j)) in cols.iter().enumerate() {
        theta[lay.component_start[c].expect("unconstrained") + j] = beta[k + 1];
    }
    Ok(())
}

struct Objective<'a, 'm> {
    lik: &'a Likelihood<'m>,
    evals: usize,
}

impl Objective<'_, '_> {
    /// Negative log likelihood; non-finite values mark rejectable points.
    fn f(&mut self, x: &[f64]) -> Result<f64> {
        self.evals += 1;
        let v = -self.lik.total(x)?;
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    }

    fn grad(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let h = 1e-6 * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = self.f(&xp)?;
            xp[i] = x[i] - h;
            let fm = self.f(&xp)?;
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        Ok(g)
    }

    /// Central-difference Hessian of `f`.
    fn hessian(&mut self, x: &[f64], fx: f64) -> Result<DMatrix<f64>> {
        let p = x.len();
        let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
        let mut hess = DMatrix::<f64>::zeros(p, p);
        let mut xp = x.to_vec();
        for i in 0..p {
            xp[i] = x[i] + h[i];
            let fp = self.f(&xp)?;
            xp[i] = x[i] - h[i];
            let fm = self.f(&xp)?;
            xp[i] = x[i];
            hess[(i, i)] = (fp - 2.0 * fx + fm) / (h[i] * h[i]);
        }
        for i in 0..p {
            for j in 0..i {
                let mut corner = |si: f64, sj: f64| -> Result<f64> {
                    xp[i] = x[i] + si * h[i];
                    xp[j] = x[j] + sj * h[j];
                    let v = self.f(&xp)?;
                    xp[i] = x[i];
                    xp[j] = x[j];
                    Ok(v)
                };
                let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?)
                    / (4.0 * h[i] * h[j]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        Ok(hess)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Initial inverse Hessian from the diagonal curvature.
fn diag_inverse(obj: &mut Objective, x: &[f64], fx: f64) -> Result<DMatrix<f64>> {
    let p = x.len();
    let mut h0 = DMatrix::<f64>::identity(p, p);
    let mut xp = x.to_vec();
    for i in 0..p {
        let h = 1e-4 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = obj.f(&xp)?;
        xp[i] = x[i] - h;
        let fm = obj.f(&xp)?;
        xp[i] = x[i];
        let c = (fp - 2.0 * fx + fm) / (h * h);
        h0[(i, i)] = if c.is_finite() && c > 1e-8 { 1.0 / c } else { 1.0 };
    }
    Ok(h0)
}

/// Maximises the marginal likelihood of `model`.
///
/// On non-convergence the error carries the best point found.
pub fn maximize(model: &Model, controls: &Controls) -> Result<FitResult> {
    if let Some(m) = model.submodels.iter().position(|s| s.rows.is_empty()) {
        return Err(Error::Data(format!("submodel {} has no complete observations", m + 1)));
    }
    let lik = Likelihood::new(model, controls.seed, controls.threads)?;
    let mut obj = Objective { lik: &lik, evals: 0 };
    let mut x = match &controls.start {
        Some(s) if s.len() == model.n_params() => s.clone(),
        Some(s) => {
            return Err(Error::Spec(format!(
                "{} starting values given for {} parameters",
                s.len(),
                model.n_params()
            )))
        }
        None => starting_values(model)?,
    };
    let mut fx = obj.f(&x)?;
    if !fx.is_finite() {
        return Err(Error::Eval("the log likelihood is not finite at the starting values".into()));
    }
    let p = x.len();
    let mut g = obj.grad(&x)?;
    let mut hinv = diag_inverse(&mut obj, &x, fx)?;
    let mut converged = p == 0;
    let mut iterations = 0;
    let mut resets = 0;
    while !converged && iterations < controls.max_iter {
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut d = -(&hinv * &gv);
        let mut slope = d.dot(&gv);
        if !(slope < 0.0) {
            hinv = diag_inverse(&mut obj, &x, fx)?;
            d = -(&hinv * &gv);
            slope = d.dot(&gv);
        }
        // limit the first trial step
        let longest = d.amax();
        let mut alpha = if longest > 5.0 { 5.0 / longest } else { 1.0 };
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + alpha * b).collect();
            let ft = obj.f(&trial)?;
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            if resets < 3 {
                resets += 1;
                hinv = diag_inverse(&mut obj, &x, fx)?;
                continue;
            }
            log::warn!("line search failed at iteration {iterations}");
            break;
        };
        let gn = obj.grad(&xn)?;
        let s = DVector::from_iterator(p, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(p, gn.iter().zip(&g).map(|(a, b)| a - b));
        let rel = (fx - fxn).abs() / fxn.abs().max(1.0);
        x = xn;
        fx = fxn;
        g = gn;
        log::debug!("iteration {iterations}: log likelihood {:.6}, max |gradient| {:.3e}", -fx, max_abs(&g));
        if max_abs(&g) < controls.grad_tol && rel < controls.rel_tol {
            converged = true;
            break;
        }
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
    }
    if !converged && max_abs(&g) < controls.grad_tol {
        // the line search could not improve on a point that already meets the gradient test
        converged = true;
    }

    let hess = obj.hessian(&x, fx)?;
    let vcov = hess.clone().cholesky().map(|c| {
        let inv = c.inverse();
        (0..p).map(|i| (0..p).map(|j| inv[(i, j)]).collect()).collect()
    });
    if vcov.is_none() && p > 0 {
        log::warn!("the Hessian is not positive definite; standard errors are unavailable");
    }
    log::info!("{} likelihood evaluations", obj.evals);
    let fit = FitResult {
        spec_text: model.spec.to_string(),
        spec: model.spec.clone(),
        params: model.layout.params.clone(),
        estimates: x,
        vcov,
        loglik: -fx,
        iterations,
        converged,
        max_gradient: max_abs(&g),
        n_obs: model.submodels.iter().map(|s| s.rows.len()).collect(),
        integration: lik.info(),
        seed: lik.seed,
        bases: model.bases.clone(),
    };
    if converged {
        Ok(fit)
    } else {
        Err(Error::NotConverged {
            iterations,
            loglik: fit.loglik,
            best: Box::new(fit),
        })
    }
}

/// Validates, builds and fits in one call.
pub fn fit(spec: &ModelSpec, data: Dataset, users: &UserRegistry, controls: &Controls) -> Result<FitResult> {
    let model = Model::new(spec, data, users)?;
    maximize(&model, controls)
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub estimate: f64,
    pub std_err: f64,
    pub z: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

const Z975: f64 = 1.959_963_984_540_054;

pub fn summary_row(label: &str, estimate: f64, std_err: f64) -> SummaryRow {
    let z = estimate / std_err;
    SummaryRow {
        label: label.to_string(),
        estimate,
        std_err,
        z,
        p: erfc(z.abs() / std::f64::consts::SQRT_2),
        ci_low: estimate - Z975 * std_err,
        ci_high: estimate + Z975 * std_err,
    }
}

/// Estimates with standard errors, Wald tests and 95% intervals.
pub fn summary_table(fit: &FitResult) -> Vec<SummaryRow> {
    let se = fit.std_errors().unwrap_or_else(|| vec![f64::NAN; fit.estimates.len()]);
    fit.params
        .iter()
        .zip(&fit.estimates)
        .zip(&se)
        .map(|((p, &e), &s)| summary_row(&p.label, e, s))
        .collect()
}

/// The results table as aligned text.
pub fn format_summary(fit: &FitResult) -> String {
    let rows = summary_table(fit);
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    out.push_str("Mixed effects regression model\n");
    let _ = writeln!(out, "Log likelihood = {:.4}", fit.loglik);
    if !fit.converged {
        out.push_str("Warning: the optimiser did not converge\n");
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "{:width$} {:>10} {:>10} {:>7} {:>8} {:>10} {:>10}",
        "", "Estimate", "Std. Error", "z", "Pr(>|z|)", "[95% Conf.", "Interval]"
    );
    for r in &rows {
        let _ = writeln!(
            out,
            "{:width$} {:>10.6} {:>10.6} {:>7.3} {:>8.4} {:>10.6} {:>10.6}",
            r.label, r.estimate, r.std_err, r.z, r.p, r.ci_low, r.ci_high
        );
    }
    let with_re: Vec<&LevelIntegrationInfo> = fit.integration.iter().filter(|i| !i.random_effects.is_empty()).collect();
    if !with_re.is_empty() {
        out.push('\n');
        let methods: Vec<&str> = with_re.iter().map(|i| i.method.description()).collect();
        let points: Vec<String> = with_re.iter().map(|i| i.points.to_string()).collect();
        let _ = writeln!(out, "Integration method: {}", methods.join(", "));
        let _ = writeln!(out, "Integration points: {}", points.join(", "));
    }
    if fit.vcov.is_none() {
        out.push_str("Standard errors unavailable: the Hessian is not invertible\n");
    }
    out
}

/// Coefficient block printed by the survival wrapper.
pub fn format_coefficients(fit: &FitResult) -> String {
    let mut labels = String::new();
    let mut values = String::new();
    for (p, e) in fit.params.iter().zip(&fit.estimates) {
        if p.kind == ParamKind::Covariance {
            continue;
        }
        let w = p.label.len().max(11);
        let _ = write!(labels, " {:>w$}", p.label);
        let _ = write!(values, " {:>w$.5}", e);
    }
    format!("Coefficients:\n{labels}\n{values}\n")
}
