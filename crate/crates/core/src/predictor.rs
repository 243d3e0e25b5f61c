//! Complex predictor of a submodel at (row, time, random-effect draw), with
//! analytic time derivatives, integrals over (0, t] and cross-submodel links.

use smallvec::{smallvec, SmallVec};

use crate::basis::BasisRow;
use crate::error::{eval_err, Result};
use crate::integration::integrate_graded;
use crate::model::{CompiledComponent, DynElement, Model};
use crate::spec::{Family, LinkKind, Order};

/// Value with first and second time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const fn constant(v: f64) -> Self {
        Self { v, d1: 0.0, d2: 0.0 }
    }

    pub fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        }
    }

    pub fn scale(self, k: f64) -> Jet {
        Jet {
            v: self.v * k,
            d1: self.d1 * k,
            d2: self.d2 * k,
        }
    }

    pub fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d1: self.d1 + o.d1,
            d2: self.d2 + o.d2,
        }
    }

    /// Shifts derivatives down one order; the new second derivative is unknown.
    fn shift(self) -> Jet {
        Jet {
            v: self.d1,
            d1: self.d2,
            d2: f64::NAN,
        }
    }

    pub fn get(&self, order: Order) -> f64 {
        match order {
            Order::Value | Order::Integral => self.v,
            Order::D1 => self.d1,
            Order::D2 => self.d2,
        }
    }
}

/// Inverse link used for expected values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanLink {
    Identity,
    Logistic,
    Exp,
}

impl MeanLink {
    pub fn of(family: Family) -> Option<MeanLink> {
        match family {
            Family::Gaussian | Family::Null => Some(MeanLink::Identity),
            Family::Bernoulli | Family::Beta => Some(MeanLink::Logistic),
            Family::Poisson | Family::NegBinomial => Some(MeanLink::Exp),
            _ => None,
        }
    }

    pub fn apply(self, eta: f64) -> f64 {
        match self {
            MeanLink::Identity => eta,
            MeanLink::Logistic => logistic(eta),
            MeanLink::Exp => eta.exp(),
        }
    }

    pub fn jet(self, e: Jet) -> Jet {
        match self {
            MeanLink::Identity => e,
            MeanLink::Exp => {
                let m = e.v.exp();
                Jet {
                    v: m,
                    d1: m * e.d1,
                    d2: m * (e.d2 + e.d1 * e.d1),
                }
            }
            MeanLink::Logistic => {
                let p = logistic(e.v);
                let g1 = p * (1.0 - p);
                let g2 = g1 * (1.0 - 2.0 * p);
                Jet {
                    v: p,
                    d1: g1 * e.d1,
                    d2: g2 * e.d1 * e.d1 + g1 * e.d2,
                }
            }
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Everything needed to evaluate predictors: the model, a parameter vector
/// and the current random-effect draw of each level.
#[derive(Clone, Copy)]
pub struct Eval<'a> {
    pub model: &'a Model,
    pub theta: &'a [f64],
    /// One slice per level; an empty slice means all effects at that level are 0.
    pub draws: &'a [&'a [f64]],
}

impl<'a> Eval<'a> {
    pub fn new(model: &'a Model, theta: &'a [f64], draws: &'a [&'a [f64]]) -> Self {
        Self { model, theta, draws }
    }

    fn draw(&self, level: usize, pos: usize) -> f64 {
        self.draws.get(level).and_then(|d| d.get(pos)).copied().unwrap_or(0.0)
    }

    /// Time at which submodel `m` is evaluated on `row` when none is given.
    pub fn default_time(&self, m: usize, row: usize) -> f64 {
        self.model.submodels[m].default_time[row]
    }

    pub fn ancillary(&self, m: usize, k: usize) -> f64 {
        let l = &self.model.layout.submodels[m];
        self.theta[l.anc_start + k]
    }

    fn coef(&self, m: usize, c: usize, j: usize) -> f64 {
        match self.model.layout.submodels[m].component_start[c] {
            Some(s) => self.theta[s + j],
            None => 1.0,
        }
    }

    fn fixed_shift(&self, m: usize, row: usize) -> f64 {
        let cons = self.model.layout.submodels[m].cons.map_or(0.0, |i| self.theta[i]);
        cons + self.model.submodels[m].offset[row]
    }

    /// Predictor and its first `n` time derivatives (n <= 2).
    pub fn eta(&self, m: usize, row: usize, t: f64, n: usize) -> Result<Jet> {
        if n > 2 {
            return eval_err("derivatives beyond the second are not available");
        }
        let sm = &self.model.submodels[m];
        let mut acc = Jet::constant(self.fixed_shift(m, row));
        for (c, comp) in sm.components.iter().enumerate() {
            acc = acc.add(self.component_jet(m, c, comp, row, t, n)?);
        }
        Ok(acc)
    }

    fn component_jet(&self, m: usize, c: usize, comp: &CompiledComponent, row: usize, t: f64, n: usize) -> Result<Jet> {
        let stat = comp.static_row(row);
        if comp.width == 1 {
            let mut j = Jet::constant(stat[0]);
            for d in &comp.dynamic {
                j = j.mul(match d {
                    DynElement::Basis(b) => basis_jets(b, t, n)?[0],
                    other => self.scalar_jet(other, row, t, n)?,
                });
            }
            return Ok(j.scale(self.coef(m, c, 0)));
        }
        let mut cols: SmallVec<[Jet; 8]> = stat.iter().map(|&v| Jet::constant(v)).collect();
        for d in &comp.dynamic {
            match d {
                DynElement::Basis(b) => {
                    let bj = basis_jets(b, t, n)?;
                    if bj.len() == 1 {
                        cols.iter_mut().for_each(|x| *x = x.mul(bj[0]));
                    } else {
                        for (x, y) in cols.iter_mut().zip(bj) {
                            *x = x.mul(y);
                        }
                    }
                }
                other => {
                    let s = self.scalar_jet(other, row, t, n)?;
                    cols.iter_mut().for_each(|x| *x = x.mul(s));
                }
            }
        }
        let mut out = Jet::default();
        for (j, x) in cols.into_iter().enumerate() {
            out = out.add(x.scale(self.coef(m, c, j)));
        }
        Ok(out)
    }

    fn scalar_jet(&self, d: &DynElement, row: usize, t: f64, n: usize) -> Result<Jet> {
        Ok(match d {
            DynElement::Time => Jet { v: t, d1: 1.0, d2: 0.0 },
            DynElement::RandomEffect { level, pos } => Jet::constant(self.draw(*level, *pos)),
            DynElement::Link { kind, target } => self.link_jet(*kind, *target, row, t, n)?,
            DynElement::Basis(_) => unreachable!("bases are handled by the caller"),
        })
    }

    /// Value of a link element and its first `n` derivatives.
    pub fn link_jet(&self, kind: LinkKind, target: usize, row: usize, t: f64, n: usize) -> Result<Jet> {
        let unsupported = || eval_err(format!("{} cannot be differentiated {n} more time(s)", kind.tag()));
        let zero_tail = |mut j: Jet, keep: usize| {
            if keep < 2 {
                j.d2 = 0.0;
            }
            if keep < 1 {
                j.d1 = 0.0;
            }
            j
        };
        match kind {
            LinkKind::Xb => self.eta(target, row, t, n),
            LinkKind::Ev => self.mean_jet(target, row, t, n),
            LinkKind::DXb | LinkKind::DEv => {
                if n + 1 > 2 {
                    return unsupported();
                }
                let j = if kind == LinkKind::DXb {
                    self.eta(target, row, t, n + 1)?
                } else {
                    self.mean_jet(target, row, t, n + 1)?
                };
                Ok(zero_tail(j.shift(), n))
            }
            LinkKind::D2Xb | LinkKind::D2Ev => {
                if n > 0 {
                    return unsupported();
                }
                let j = if kind == LinkKind::D2Xb {
                    self.eta(target, row, t, 2)?
                } else {
                    self.mean_jet(target, row, t, 2)?
                };
                Ok(Jet::constant(j.d2))
            }
            LinkKind::IXb | LinkKind::IEv => {
                if n > 1 {
                    return unsupported();
                }
                let (v, inner) = if kind == LinkKind::IXb {
                    (self.eta_integral(target, row, t)?, self.eta(target, row, t, 0)?)
                } else {
                    (self.mean_integral(target, row, t)?, self.mean_jet(target, row, t, 0)?)
                };
                Ok(Jet {
                    v,
                    d1: if n >= 1 { inner.v } else { 0.0 },
                    d2: 0.0,
                })
            }
        }
    }

    /// Expected response of submodel `m` and its first `n` time derivatives.
    pub fn mean_jet(&self, m: usize, row: usize, t: f64, n: usize) -> Result<Jet> {
        let link = self.mean_link(m)?;
        Ok(link.jet(self.eta(m, row, t, n)?))
    }

    fn mean_link(&self, m: usize) -> Result<MeanLink> {
        let fam = self.model.submodels[m].family;
        MeanLink::of(fam).ok_or_else(|| crate::Error::Eval(format!("the expected value of a {fam} submodel is not defined")))
    }

    pub fn mean_integral(&self, m: usize, row: usize, t: f64) -> Result<f64> {
        match self.mean_link(m)? {
            MeanLink::Identity => self.eta_integral(m, row, t),
            link => {
                let gl = self.model.submodels[m].gl_points;
                integrate_graded(gl, t, |u| Ok(link.apply(self.eta(m, row, u, 0)?.v)))
            }
        }
    }

    /// `int_0^t eta(u) du`.
    pub fn eta_integral(&self, m: usize, row: usize, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return eval_err(format!("integral over (0, t] needs t >= 0, got {t}"));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let sm = &self.model.submodels[m];
        let mut acc = self.fixed_shift(m, row) * t;
        for (c, comp) in sm.components.iter().enumerate() {
            acc += self.component_integral(m, c, comp, row, t)?;
        }
        Ok(acc)
    }

    fn is_time_varying(&self, d: &DynElement) -> bool {
        match d {
            DynElement::Time | DynElement::Basis(_) => true,
            DynElement::RandomEffect { .. } => false,
            DynElement::Link { target, .. } => self.model.submodels[*target].time_dependent,
        }
    }

    fn component_integral(&self, m: usize, c: usize, comp: &CompiledComponent, row: usize, t: f64) -> Result<f64> {
        if comp
            .dynamic
            .iter()
            .any(|d| matches!(d, DynElement::Link { kind: LinkKind::D2Xb | LinkKind::D2Ev, .. }))
        {
            return eval_err("the integral of a component containing a second-derivative link is not supported");
        }
        let varying: SmallVec<[&DynElement; 4]> = comp.dynamic.iter().filter(|d| self.is_time_varying(d)).collect();
        if varying.is_empty() {
            return Ok(self.component_jet(m, c, comp, row, t, 0)?.v * t);
        }
        if varying.len() == 1 {
            let analytic: Option<BasisRow> = match varying[0] {
                DynElement::Time => Some(smallvec![0.5 * t * t]),
                DynElement::Basis(b) => Some(b.eval(t, Order::Integral)?),
                DynElement::Link { kind: LinkKind::Xb, target } => Some(smallvec![self.eta_integral(*target, row, t)?]),
                DynElement::Link { kind: LinkKind::Ev, target }
                    if self.model.submodels[*target].family == Family::Gaussian =>
                {
                    Some(smallvec![self.eta_integral(*target, row, t)?])
                }
                _ => None,
            };
            if let Some(int) = analytic {
                // constant factor from the remaining elements
                let mut k = 1.0;
                for d in &comp.dynamic {
                    if !self.is_time_varying(d) {
                        k *= self.scalar_jet(d, row, t, 0)?.v;
                    }
                }
                let stat = comp.static_row(row);
                let mut out = 0.0;
                for j in 0..comp.width {
                    let iv = if int.len() == 1 { int[0] } else { int[j] };
                    out += self.coef(m, c, j) * stat[j] * k * iv;
                }
                return Ok(out);
            }
        }
        let gl = self.model.submodels[m].gl_points;
        integrate_graded(gl, t, |u| Ok(self.component_jet(m, c, comp, row, u, 0)?.v))
    }

    /// Predictor value, derivative or integral at `t`.
    pub fn xzb(&self, m: usize, row: usize, t: f64, order: Order) -> Result<f64> {
        match order {
            Order::Value => Ok(self.eta(m, row, t, 0)?.v),
            Order::D1 => Ok(self.eta(m, row, t, 1)?.d1),
            Order::D2 => Ok(self.eta(m, row, t, 2)?.d2),
            Order::Integral => self.eta_integral(m, row, t),
        }
    }

    /// Expected value, derivative or integral at `t`.
    pub fn expval(&self, m: usize, row: usize, t: f64, order: Order) -> Result<f64> {
        match order {
            Order::Value => Ok(self.mean_jet(m, row, t, 0)?.v),
            Order::D1 => Ok(self.mean_jet(m, row, t, 1)?.d1),
            Order::D2 => Ok(self.mean_jet(m, row, t, 2)?.d2),
            Order::Integral => self.mean_integral(m, row, t),
        }
    }
}

fn basis_jets(b: &crate::model::TimeBasis, t: f64, n: usize) -> Result<SmallVec<[Jet; 8]>> {
    let v = b.eval(t, Order::Value)?;
    let d1 = if n >= 1 { Some(b.eval(t, Order::D1)?) } else { None };
    let d2 = if n >= 2 { Some(b.eval(t, Order::D2)?) } else { None };
    Ok((0..v.len())
        .map(|j| Jet {
            v: v[j],
            d1: d1.as_ref().map_or(0.0, |x| x[j]),
            d2: d2.as_ref().map_or(0.0, |x| x[j]),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::extension::UserRegistry;
    use crate::spec::parse_spec_file;
    use approx::assert_abs_diff_eq;

    fn data() -> Dataset {
        let cols = vec![
            ("id".to_string(), vec![Some(1.0), Some(1.0), Some(2.0), Some(2.0)]),
            ("sex".to_string(), vec![Some(0.0), Some(0.0), Some(1.0), Some(1.0)]),
            ("age".to_string(), vec![Some(75.06027), Some(75.06027), Some(60.0), Some(60.0)]),
            ("time".to_string(), vec![Some(0.5), Some(1.5), Some(0.3), Some(2.5)]),
            ("y".to_string(), vec![Some(2.0), Some(2.5), Some(1.0), Some(3.0)]),
            ("b".to_string(), vec![Some(1.0), Some(0.0), Some(1.0), Some(0.0)]),
            ("st".to_string(), vec![Some(3.0), None, Some(2.0), None]),
            ("d".to_string(), vec![Some(1.0), None, Some(0.0), None]),
        ];
        Dataset::from_columns(cols).unwrap()
    }

    fn model(text: &str) -> Model {
        Model::new(&parse_spec_file(text).unwrap(), data(), &UserRegistry::new()).unwrap()
    }

    #[test]
    fn linear_predictor_at_fixture_estimates() {
        let m = model("gaussian : y ~ sex + age + time | timevar=time");
        let theta = [0.140489, -0.002212, -0.013541, 2.771597, -0.383205];
        let ev = Eval::new(&m, &theta, &[]);
        for t in [0.1, 1.0, 7.5] {
            let expect = 2.771597 - 0.002212 * 75.06027 - 0.013541 * t;
            assert_abs_diff_eq!(ev.xzb(0, 0, t, Order::Value).unwrap(), expect, epsilon = 1e-12);
            assert_abs_diff_eq!(ev.xzb(0, 0, t, Order::D1).unwrap(), -0.013541, epsilon = 1e-15);
            assert_abs_diff_eq!(ev.xzb(0, 0, t, Order::D2).unwrap(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn constrained_random_effect_adds_draw() {
        let m = model("levels = id\ngaussian : y ~ sex + M1[id] * 1 | timevar=time");
        let theta = [0.2, 1.0, 0.0, 0.0];
        let b = [0.37];
        let draws: [&[f64]; 1] = [&b];
        let with = Eval::new(&m, &theta, &draws).xzb(0, 2, 1.0, Order::Value).unwrap();
        let without = Eval::new(&m, &theta, &[]).xzb(0, 2, 1.0, Order::Value).unwrap();
        assert_abs_diff_eq!(with - without, 0.37, epsilon = 1e-14);
    }

    #[test]
    fn expected_value_links() {
        let m = model("bernoulli : b ~ time | timevar=time\ngaussian : y ~ EV[b] + dEV[b] + iEV[b] | timevar=time");
        // eta_b = 0 at t = 0 with coefficient 0.8 and intercept 0
        let theta = [0.8, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let ev = Eval::new(&m, &theta, &[]);
        let mu = ev.mean_jet(0, 0, 1e-300, 1).unwrap();
        assert_abs_diff_eq!(mu.v, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(mu.d1, 0.25 * 0.8, epsilon = 1e-12);
        // integral of logistic(0.8 u) over (0, 2]
        let exact = ((1.0 + (1.6f64).exp()).ln() - 2f64.ln()) / 0.8;
        assert_abs_diff_eq!(ev.expval(0, 0, 2.0, Order::Integral).unwrap(), exact, epsilon = 1e-10);
    }

    #[test]
    fn integral_of_constant_predictor() {
        let m = model("gaussian : y ~ sex + age");
        let theta = [0.5, 0.01, 1.5, 0.0];
        let ev = Eval::new(&m, &theta, &[]);
        let c = ev.xzb(0, 0, 1.0, Order::Value).unwrap();
        assert_abs_diff_eq!(ev.xzb(0, 0, 3.0, Order::Integral).unwrap(), 3.0 * c, epsilon = 1e-10);
        assert_abs_diff_eq!(ev.expval(0, 0, 3.0, Order::Integral).unwrap(), 3.0 * c, epsilon = 1e-10);
    }

    #[test]
    fn xb_of_gaussian_equals_ev() {
        let m = model("gaussian : y ~ time | timevar=time\ngaussian : age ~ XB[y] + EV[y] | timevar=time");
        let theta = [0.3, 1.2, 0.0, 1.0, 1.0, 0.0, 0.0];
        let ev = Eval::new(&m, &theta, &[]);
        for t in [0.2, 1.7] {
            let xb = ev.link_jet(LinkKind::Xb, 0, 1, t, 2).unwrap();
            let e = ev.link_jet(LinkKind::Ev, 0, 1, t, 2).unwrap();
            assert_eq!(xb, e);
        }
    }

    #[test]
    fn unsupported_compositions() {
        let m = model("gaussian : y ~ time | timevar=time\ngaussian : age ~ iEV[y] + d2XB[y] | timevar=time");
        let theta = [0.3, 1.2, 0.0, 1.0, 1.0, 0.0, 0.0];
        let ev = Eval::new(&m, &theta, &[]);
        assert!(ev.link_jet(LinkKind::IEv, 0, 0, 1.0, 2).is_err());
        assert!(ev.link_jet(LinkKind::D2Xb, 0, 0, 1.0, 1).is_err());
        assert!(ev.link_jet(LinkKind::DXb, 0, 0, 1.0, 2).is_err());
        assert!(ev.xzb(1, 0, 1.0, Order::Integral).is_err());
    }
}
