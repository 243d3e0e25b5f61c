//! Post-estimation statistics: predictors, means, survival quantities,
//! competing-risks cumulative incidence, time lost and contrasts.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimation::{FitResult, Likelihood};
use crate::extension::UserRegistry;
use crate::families::{cumhazard, hazard};
use crate::integration::integrate_graded_split;
use crate::model::{DynElement, Model, TimeBasis};
use crate::predictor::{Eval, MeanLink};
use crate::spec::Family;

/// Quadrature points for the CIF and time-lost integrals.
pub const DEFAULT_CIF_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    Eta,
    Mu,
    Hazard,
    Chazard,
    LogChazard,
    Survival,
    Cif,
    Rmst,
    TimeLost,
    TotalTimeLost,
    EtaDifference,
    MuDifference,
    HDifference,
    CifDifference,
    RmstDifference,
}

const STAT_TAGS: [(&str, Statistic); 15] = [
    ("eta", Statistic::Eta),
    ("mu", Statistic::Mu),
    ("hazard", Statistic::Hazard),
    ("chazard", Statistic::Chazard),
    ("logchazard", Statistic::LogChazard),
    ("survival", Statistic::Survival),
    ("cif", Statistic::Cif),
    ("rmst", Statistic::Rmst),
    ("timelost", Statistic::TimeLost),
    ("totaltimelost", Statistic::TotalTimeLost),
    ("etadifference", Statistic::EtaDifference),
    ("mudifference", Statistic::MuDifference),
    ("hdifference", Statistic::HDifference),
    ("cifdifference", Statistic::CifDifference),
    ("rmstdifference", Statistic::RmstDifference),
];

impl Statistic {
    pub fn tag(self) -> &'static str {
        STAT_TAGS.iter().find(|(_, s)| *s == self).map(|(t, _)| *t).expect("every statistic has a tag")
    }

    /// Statistic whose difference this is, if any.
    pub fn base(self) -> Option<Statistic> {
        Some(match self {
            Statistic::EtaDifference => Statistic::Eta,
            Statistic::MuDifference => Statistic::Mu,
            Statistic::HDifference => Statistic::Hazard,
            Statistic::CifDifference => Statistic::Cif,
            Statistic::RmstDifference => Statistic::Rmst,
            _ => return None,
        })
    }

    pub fn needs_survival(self) -> bool {
        !matches!(self.base().unwrap_or(self), Statistic::Eta | Statistic::Mu)
    }

    fn uses_causes(self) -> bool {
        matches!(
            self.base().unwrap_or(self),
            Statistic::Cif | Statistic::Rmst | Statistic::TimeLost | Statistic::TotalTimeLost
        )
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        STAT_TAGS.iter().find(|(t, _)| *t == s).map(|(_, v)| *v).ok_or_else(|| {
            let known: Vec<&str> = STAT_TAGS.iter().map(|(t, _)| *t).collect();
            Error::Predict(format!("unknown statistic `{s}`; expected one of {}", known.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PredictType {
    /// Random effects set to zero.
    #[default]
    FixedOnly,
    /// Statistic integrated over the random-effect distribution.
    Marginal,
}

impl FromStr for PredictType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixedonly" => Ok(PredictType::FixedOnly),
            "marginal" => Ok(PredictType::Marginal),
            _ => Err(Error::Predict(format!("unknown prediction type `{s}`; expected fixedonly or marginal"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub var: String,
    pub first: f64,
    pub second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub statistic: Statistic,
    /// 1-based submodel index.
    pub predmodel: usize,
    pub kind: PredictType,
    /// Covariates held at fixed values for every row.
    pub at: Vec<(String, f64)>,
    pub contrast: Option<Contrast>,
    /// 1-based survival submodels treated as competing causes; all of them when `None`.
    pub causes: Option<Vec<usize>>,
    /// Evaluation times applied to every row; each row's own time when `None`.
    pub times: Option<Vec<f64>>,
    pub cif_points: usize,
}

impl PredictRequest {
    pub fn new(statistic: Statistic) -> Self {
        Self {
            statistic,
            predmodel: 1,
            kind: PredictType::FixedOnly,
            at: Vec::new(),
            contrast: None,
            causes: None,
            times: None,
            cif_points: DEFAULT_CIF_POINTS,
        }
    }
}

/// One predicted value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    /// 0-based row of the input data.
    pub row: usize,
    pub time: f64,
    pub value: f64,
}

#[derive(Clone)]
struct Target {
    stat: Statistic,
    m: usize,
    causes: Vec<usize>,
    points: usize,
    /// Spline knots on the time scale, where integrands lose smoothness.
    breaks: Vec<f64>,
}

impl Target {
    fn cif(&self, ev: &Eval, row: usize, k: usize, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        integrate_graded_split(self.points, t, &self.breaks, |u| {
            let mut log_s = 0.0;
            for &c in &self.causes {
                log_s -= cumhazard(ev, c, row, u)?;
            }
            Ok(hazard(ev, k, row, u)? * log_s.exp())
        })
    }

    fn timelost(&self, ev: &Eval, row: usize, k: usize, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        integrate_graded_split(self.points, t, &self.breaks, |u| self.cif(ev, row, k, u))
    }

    fn total_timelost(&self, ev: &Eval, row: usize, t: f64) -> Result<f64> {
        let mut acc = 0.0;
        for &k in &self.causes {
            acc += self.timelost(ev, row, k, t)?;
        }
        Ok(acc)
    }

    fn eval(&self, ev: &Eval, row: usize, t: f64) -> Result<f64> {
        let m = self.m;
        match self.stat {
            Statistic::Eta => Ok(ev.eta(m, row, t, 0)?.v),
            Statistic::Mu => Ok(ev.mean_jet(m, row, t, 0)?.v),
            Statistic::Hazard => hazard(ev, m, row, t),
            Statistic::Chazard => cumhazard(ev, m, row, t),
            Statistic::LogChazard => Ok(cumhazard(ev, m, row, t)?.ln()),
            Statistic::Survival => Ok((-cumhazard(ev, m, row, t)?).exp()),
            Statistic::Cif => self.cif(ev, row, m, t),
            Statistic::TimeLost => self.timelost(ev, row, m, t),
            Statistic::TotalTimeLost => self.total_timelost(ev, row, t),
            Statistic::Rmst => Ok(t - self.total_timelost(ev, row, t)?),
            _ => unreachable!("differences are split before evaluation"),
        }
    }
}

/// Evaluates statistics on a model rebuilt with the fitted bases.
struct Evaluator<'m> {
    model: &'m Model,
    theta: &'m [f64],
    /// Scaled draws and weights per level, for marginal predictions.
    marginal: Option<(Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>)>,
}

impl<'m> Evaluator<'m> {
    fn new(model: &'m Model, fit: &'m FitResult, kind: PredictType) -> Result<Self> {
        let marginal = match kind {
            PredictType::Marginal if model.n_levels() > 0 => {
                let lik = Likelihood::new(model, fit.seed, None)?;
                let draws = lik.draws(&fit.estimates)?;
                let weights = lik.node_sets().iter().map(|ns| ns.weights.clone()).collect();
                Some((draws, weights))
            }
            _ => None,
        };
        Ok(Self {
            model,
            theta: &fit.estimates,
            marginal,
        })
    }

    fn value(&self, target: &Target, row: usize, t: f64) -> Result<f64> {
        match &self.marginal {
            None => target.eval(&Eval::new(self.model, self.theta, &[]), row, t),
            Some((draws, weights)) => {
                let mut current: Vec<&[f64]> = vec![&[]; draws.len()];
                self.integrate(target, row, t, draws, weights, 0, &mut current)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn integrate<'d>(
        &self,
        target: &Target,
        row: usize,
        t: f64,
        draws: &'d [Vec<Vec<f64>>],
        weights: &[Vec<f64>],
        l: usize,
        current: &mut Vec<&'d [f64]>,
    ) -> Result<f64> {
        if l == draws.len() {
            return target.eval(&Eval::new(self.model, self.theta, current), row, t);
        }
        let mut acc = 0.0;
        for (b, w) in draws[l].iter().zip(&weights[l]) {
            current[l] = b;
            acc += w * self.integrate(target, row, t, draws, weights, l + 1, current)?;
        }
        current[l] = &[];
        Ok(acc)
    }
}

fn check_request(fit: &FitResult, req: &PredictRequest) -> Result<(usize, Vec<usize>)> {
    let n = fit.spec.submodels.len();
    if req.predmodel == 0 || req.predmodel > n {
        return Err(Error::Predict(format!("predmodel {} out of range 1..={n}", req.predmodel)));
    }
    let m = req.predmodel - 1;
    let family = fit.spec.submodels[m].family;
    let stat = req.statistic;
    if stat.needs_survival() && !family.is_survival() {
        return Err(Error::Predict(format!("{stat} needs a survival submodel; submodel {} is {family}", m + 1)));
    }
    if matches!(stat.base().unwrap_or(stat), Statistic::Mu) && MeanLink::of(family).is_none() {
        return Err(Error::Predict(format!(
            "mu is not defined for the {family} family{}",
            if family.is_survival() { "; use survival or cif" } else { "" }
        )));
    }
    let causes: Vec<usize> = match &req.causes {
        None => (0..n).filter(|&i| fit.spec.submodels[i].family.is_survival()).collect(),
        Some(list) => {
            let mut out = Vec::with_capacity(list.len());
            for &c in list {
                if c == 0 || c > n || !fit.spec.submodels[c - 1].family.is_survival() {
                    return Err(Error::Predict(format!("cause {c} is not a survival submodel")));
                }
                if !out.contains(&(c - 1)) {
                    out.push(c - 1);
                }
            }
            out
        }
    };
    if stat.uses_causes() && !causes.contains(&m) {
        return Err(Error::Predict(format!("predmodel {} is not among the causes", m + 1)));
    }
    if req.cif_points == 0 {
        return Err(Error::Predict("cif_points must be positive".into()));
    }
    if let Some(times) = &req.times {
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Predict("prediction times must be finite and non-negative".into()));
        }
    }
    Ok((m, causes))
}

fn with_overrides(data: &Dataset, at: &[(String, f64)], extra: Option<(&str, f64)>) -> Result<Dataset> {
    let mut out = data.clone();
    for (name, v) in at.iter().map(|(n, v)| (n.as_str(), *v)).chain(extra) {
        if !out.has_column(name) {
            return Err(Error::Predict(format!("unknown covariate `{name}` in at/contrast")));
        }
        out = out.with_constant(name, v)?;
    }
    Ok(out)
}

fn rows_and_times(model: &Model, m: usize, times: &Option<Vec<f64>>) -> Vec<(usize, f64)> {
    let sm = &model.submodels[m];
    match times {
        None => sm.rows.iter().map(|&r| (r, sm.default_time[r])).collect(),
        Some(ts) => sm.rows.iter().flat_map(|&r| ts.iter().map(move |&t| (r, t))).collect(),
    }
}

fn evaluate(
    model: &Model,
    fit: &FitResult,
    req: &PredictRequest,
    target: &Target,
    points: &[(usize, f64)],
) -> Result<Vec<f64>> {
    let target = &Target {
        breaks: time_knots(model),
        ..target.clone()
    };
    let ev = Evaluator::new(model, fit, req.kind)?;
    points.par_iter().map(|&(r, t)| ev.value(target, r, t)).collect()
}

/// Knots of every time-dependent spline in the model, on the time scale.
fn time_knots(model: &Model) -> Vec<f64> {
    let mut knots: Vec<f64> = model
        .submodels
        .iter()
        .flat_map(|sm| &sm.components)
        .flat_map(|c| &c.dynamic)
        .filter_map(|d| match d {
            DynElement::Basis(TimeBasis::Rcs(b)) => Some(b),
            _ => None,
        })
        .flat_map(|b| b.knots.iter().map(|&k| if b.log_time { k.exp() } else { k }))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
}

/// Predicts `req.statistic` for every row of `data` that has an observed
/// response in the prediction submodel.
pub fn predict(fit: &FitResult, data: &Dataset, users: &UserRegistry, req: &PredictRequest) -> Result<Vec<PredictionRow>> {
    let (m, causes) = check_request(fit, req)?;
    let target = Target {
        stat: req.statistic.base().unwrap_or(req.statistic),
        m,
        causes,
        points: req.cif_points,
        breaks: Vec::new(),
    };
    match req.statistic.base() {
        None => {
            let model = fit.model(with_overrides(data, &req.at, None)?, users)?;
            let points = rows_and_times(&model, m, &req.times);
            let values = evaluate(&model, fit, req, &target, &points)?;
            Ok(points
                .into_iter()
                .zip(values)
                .map(|((row, time), value)| PredictionRow { row, time, value })
                .collect())
        }
        Some(_) => {
            let c = req
                .contrast
                .as_ref()
                .ok_or_else(|| Error::Predict(format!("{} needs a contrast", req.statistic)))?;
            if !data.has_column(&c.var) {
                return Err(Error::Predict(format!("unknown contrast covariate `{}`", c.var)));
            }
            let used = fit.spec.submodels[m]
                .components
                .iter()
                .flat_map(|comp| comp.elements.iter())
                .any(|e| e.variables().contains(&c.var.as_str()));
            if !used {
                log::warn!("contrast covariate `{}` does not appear in submodel {}", c.var, m + 1);
            }
            let first = fit.model(with_overrides(data, &req.at, Some((&c.var, c.first)))?, users)?;
            let second = fit.model(with_overrides(data, &req.at, Some((&c.var, c.second)))?, users)?;
            let points = rows_and_times(&first, m, &req.times);
            let a = evaluate(&first, fit, req, &target, &points)?;
            let b = evaluate(&second, fit, req, &target, &points)?;
            Ok(points
                .into_iter()
                .zip(a.into_iter().zip(b))
                .map(|((row, time), (a, b))| PredictionRow { row, time, value: b - a })
                .collect())
        }
    }
}

/// Writes predictions as CSV: `row,time,<statistic>`, with `row` 1-based.
pub fn write_csv<W: std::io::Write>(writer: W, stat: Statistic, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "time", stat.tag()])?;
    let fmt = |v: f64| if v.is_nan() { String::new() } else { format!("{v}") };
    for r in rows {
        w.write_record([(r.row + 1).to_string(), fmt(r.time), fmt(r.value)])?;
    }
    w.flush()?;
    Ok(())
}

/// Statistic families accepted for a given outcome family.
pub fn valid_for(stat: Statistic, family: Family) -> bool {
    if stat.needs_survival() {
        family.is_survival()
    } else if matches!(stat.base().unwrap_or(stat), Statistic::Mu) {
        MeanLink::of(family).is_some()
    } else {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::Controls;
    use crate::params::ParamInfo;
    use crate::spec::parse_spec_file;
    use approx::assert_abs_diff_eq;

    /// Fit stand-in with given estimates; predictions only read these fields.
    fn fake_fit(spec_text: &str, data: &Dataset, theta: Vec<f64>) -> FitResult {
        let spec = parse_spec_file(spec_text).unwrap();
        let model = Model::new(&spec, data.clone(), &UserRegistry::new()).unwrap();
        assert_eq!(model.n_params(), theta.len(), "{:?}", model.layout.labels());
        FitResult {
            spec_text: spec.to_string(),
            spec: model.spec.clone(),
            params: model.layout.params.clone() as Vec<ParamInfo>,
            estimates: theta,
            vcov: None,
            loglik: 0.0,
            iterations: 0,
            converged: true,
            max_gradient: 0.0,
            n_obs: vec![],
            integration: vec![],
            seed: 0,
            bases: model.bases.clone(),
        }
    }

    fn surv_data() -> Dataset {
        Dataset::from_columns(vec![
            ("t".into(), vec![Some(0.5), Some(1.0), Some(2.0), Some(3.0)]),
            ("d".into(), vec![Some(1.0), Some(0.0), Some(1.0), Some(1.0)]),
            ("x".into(), vec![Some(0.0), Some(1.0), Some(0.0), Some(1.0)]),
            ("id".into(), vec![Some(1.0), Some(1.0), Some(2.0), Some(2.0)]),
        ])
        .unwrap()
    }

    fn run(fit: &FitResult, data: &Dataset, req: &PredictRequest) -> Vec<PredictionRow> {
        predict(fit, data, &UserRegistry::new(), req).unwrap()
    }

    #[test]
    fn constant_hazard_cif_and_rmst_closed_forms() {
        let data = surv_data();
        let (l1, l2) = (0.3f64, 0.2f64);
        let text = "exponential : Surv(t, d) ~ 1\nexponential : Surv(t, d) ~ 1";
        let fit = fake_fit(text, &data, vec![l1.ln(), l2.ln()]);
        let mut req = PredictRequest::new(Statistic::Cif);
        req.times = Some(vec![0.5, 2.0, 7.0]);
        for r in run(&fit, &data, &req) {
            let exact = l1 / (l1 + l2) * (1.0 - (-(l1 + l2) * r.time).exp());
            assert_abs_diff_eq!(r.value, exact, epsilon = 1e-8);
        }
        req.causes = Some(vec![1]);
        for r in run(&fit, &data, &req) {
            assert_abs_diff_eq!(r.value, 1.0 - (-l1 * r.time).exp(), epsilon = 1e-8);
        }
        req.statistic = Statistic::Rmst;
        for r in run(&fit, &data, &req) {
            assert_abs_diff_eq!(r.value, (1.0 - (-l1 * r.time).exp()) / l1, epsilon = 1e-6);
        }
        req.times = Some(vec![1e-9]);
        for stat in [Statistic::Rmst, Statistic::TimeLost] {
            req.statistic = stat;
            assert!(run(&fit, &data, &req)[0].value.abs() < 1e-8);
        }
    }

    #[test]
    fn survival_identities() {
        let data = surv_data();
        let text = "weibull : Surv(t, d) ~ x + x:fp(t, powers = c(0)) | timevar = t";
        let fit = fake_fit(text, &data, vec![0.4, 0.2, -1.0, 0.3]);
        let get = |s| {
            let mut req = PredictRequest::new(s);
            req.times = Some(vec![0.3, 1.7]);
            run(&fit, &data, &req)
        };
        let (h, s, lh) = (get(Statistic::Chazard), get(Statistic::Survival), get(Statistic::LogChazard));
        for i in 0..h.len() {
            assert_abs_diff_eq!(s[i].value, (-h[i].value).exp(), epsilon = 1e-12);
            assert_abs_diff_eq!(lh[i].value, h[i].value.ln(), epsilon = 1e-12);
        }
        // fixedonly and marginal coincide without random effects
        let mut req = PredictRequest::new(Statistic::Survival);
        req.kind = PredictType::Marginal;
        assert_eq!(run(&fit, &data, &req).iter().map(|r| r.value).collect::<Vec<_>>(), {
            req.kind = PredictType::FixedOnly;
            run(&fit, &data, &req).iter().map(|r| r.value).collect::<Vec<_>>()
        });
    }

    #[test]
    fn hdifference_closed_form_and_zero_contrast() {
        let data = surv_data();
        let fit = fake_fit("exponential : Surv(t, d) ~ x", &data, vec![0.7, -1.2]);
        let mut req = PredictRequest::new(Statistic::HDifference);
        req.contrast = Some(Contrast { var: "x".into(), first: 0.0, second: 1.0 });
        for r in run(&fit, &data, &req) {
            assert_abs_diff_eq!(r.value, (-1.2f64).exp() * (0.7f64.exp() - 1.0), epsilon = 1e-10);
        }
        req.statistic = Statistic::CifDifference;
        req.times = Some((1..20).map(|i| i as f64 * 0.4).collect());
        assert!(run(&fit, &data, &req).iter().all(|r| r.value > 0.0));
        req.contrast = Some(Contrast { var: "x".into(), first: 0.0, second: 0.0 });
        assert!(run(&fit, &data, &req).iter().all(|r| r.value == 0.0));
        req.contrast = None;
        assert!(predict(&fit, &data, &UserRegistry::new(), &req).is_err());
    }

    #[test]
    fn at_and_marginal() {
        let data = surv_data();
        let fit = fake_fit("levels = id\ngaussian : t ~ x + M1[id] * 1", &data, vec![0.5, 1.0, -0.5, (0.8f64).ln()]);
        let mut req = PredictRequest::new(Statistic::Mu);
        req.at = vec![("x".into(), 1.0)];
        let rows = run(&fit, &data, &req);
        assert!(rows.iter().all(|r| r.value == 1.5));
        req.at = vec![("nope".into(), 1.0)];
        assert!(predict(&fit, &data, &UserRegistry::new(), &req).is_err());
        // identity link: the marginal mean equals the fixed-effects mean
        req.at.clear();
        req.kind = PredictType::Marginal;
        let marg = run(&fit, &data, &req);
        req.kind = PredictType::FixedOnly;
        let fixed = run(&fit, &data, &req);
        for (a, b) in marg.iter().zip(&fixed) {
            assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-12);
        }
        assert!(predict(&fit, &data, &UserRegistry::new(), &PredictRequest::new(Statistic::Hazard)).is_err());
    }

    #[test]
    fn marginal_logistic_mean_matches_integral() {
        let data = Dataset::from_columns(vec![
            ("y".into(), vec![Some(1.0), Some(0.0)]),
            ("id".into(), vec![Some(1.0), Some(2.0)]),
        ])
        .unwrap();
        let fit = fake_fit("levels = id\nip = 30\nbernoulli : y ~ M1[id] * 1", &data, vec![0.4, 0.0]);
        let mut req = PredictRequest::new(Statistic::Mu);
        req.kind = PredictType::Marginal;
        let v = run(&fit, &data, &req)[0].value;
        // E[logistic(0.4 + Z)] by a fine trapezoid rule
        let (mut acc, h) = (0.0, 1e-3);
        let mut z = -10.0;
        while z < 10.0 {
            acc += h * crate::predictor::logistic(0.4 + z) * (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            z += h;
        }
        assert_abs_diff_eq!(v, acc, epsilon = 1e-6);
        assert!(v < crate::predictor::logistic(0.4));
    }

    #[test]
    fn fitted_exponential_prediction_runs_end_to_end() {
        let data = surv_data();
        let spec = parse_spec_file("exponential : Surv(t, d) ~ 1").unwrap();
        let fit = crate::estimation::fit(&spec, data.clone(), &UserRegistry::new(), &Controls::default()).unwrap();
        let rate: f64 = 3.0 / 6.5;
        assert_abs_diff_eq!(fit.estimates[0], rate.ln(), epsilon = 1e-5);
        let rows = run(&fit, &data, &PredictRequest::new(Statistic::Survival));
        assert_eq!(rows.len(), 4);
        assert_abs_diff_eq!(rows[0].value, (-rate * 0.5f64).exp(), epsilon = 1e-5);
        let mut buf = Vec::new();
        write_csv(&mut buf, Statistic::Survival, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("row,time,survival\n1,0.5,"));
    }
}
