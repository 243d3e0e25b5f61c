//! User-defined families: a per-observation log-likelihood callback that
//! reads the current observation through [`UserFamilyContext`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::dataset::Response;
use crate::error::{eval_err, spec_err, Result};
use crate::predictor::Eval;
use crate::spec::Order;

/// Log-likelihood of one observation. Must be pure; it is called from
/// several threads at once.
pub type UserLoglik = Arc<dyn Fn(&UserFamilyContext<'_>) -> Result<f64> + Send + Sync>;

/// Named user families available to `family = user, userf = <name>`.
#[derive(Clone, Default)]
pub struct UserRegistry {
    fns: BTreeMap<String, UserLoglik>,
}

impl fmt::Debug for UserRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.fns.keys()).finish()
    }
}

impl UserRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding the example families shipped with the library:
    /// `logl_gaussian`, `logl_exponential` and `logl_zero`.
    pub fn with_examples() -> Self {
        let mut r = Self::new();
        r.register("logl_gaussian", logl_gaussian).expect("fresh registry");
        r.register("logl_exponential", logl_exponential).expect("fresh registry");
        r.register("logl_zero", |_: &UserFamilyContext<'_>| Ok(0.0)).expect("fresh registry");
        r
    }

    pub fn register<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: Fn(&UserFamilyContext<'_>) -> Result<f64> + Send + Sync + 'static,
    {
        if self.fns.contains_key(name) {
            return spec_err(format!("a user family named `{name}` is already registered"));
        }
        self.fns.insert(name.to_string(), Arc::new(f));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&UserLoglik> {
        self.fns.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.fns.keys().map(String::as_str)
    }
}

/// Gaussian log-density with `log sd = ap(1)`.
pub fn logl_gaussian(ctx: &UserFamilyContext<'_>) -> Result<f64> {
    let y = ctx.depvar()[0];
    let se = ctx.ap(1)?.exp();
    let mu = ctx.xzb(None)?;
    Ok(-0.5 * (2.0 * std::f64::consts::PI).ln() - se.ln() - (y - mu).powi(2) / (2.0 * se * se))
}

/// Exponential survival with `log h = xzb`.
pub fn logl_exponential(ctx: &UserFamilyContext<'_>) -> Result<f64> {
    let y = ctx.depvar();
    if y.len() != 2 {
        return eval_err("logl_exponential needs a Surv(time, event) response");
    }
    let eta = ctx.xzb(None)?;
    Ok(y[1] * eta - y[0] * eta.exp())
}

/// Read-only view of the current observation for a user log-likelihood.
/// Submodel indices in the `_mod` accessors are 1-based.
#[derive(Clone, Copy)]
pub struct UserFamilyContext<'a> {
    ev: &'a Eval<'a>,
    m: usize,
    row: usize,
}

impl<'a> UserFamilyContext<'a> {
    pub fn new(ev: &'a Eval<'a>, m: usize, row: usize) -> Self {
        Self { ev, m, row }
    }

    pub fn row(&self) -> usize {
        self.row
    }

    /// 1-based index of the submodel being evaluated.
    pub fn submodel(&self) -> usize {
        self.m + 1
    }

    pub fn n_submodels(&self) -> usize {
        self.ev.model.submodels.len()
    }

    fn index(&self, i: usize) -> Result<usize> {
        if i == 0 || i > self.n_submodels() {
            return eval_err(format!("submodel index {i} out of range 1..={}", self.n_submodels()));
        }
        Ok(i - 1)
    }

    fn time(&self, m: usize, t: Option<f64>) -> f64 {
        t.unwrap_or_else(|| self.ev.default_time(m, self.row))
    }

    fn depvar_of(&self, m: usize) -> Vec<f64> {
        match self.ev.model.submodels[m].response(self.row) {
            Some(Response::Scalar(y)) => vec![y],
            Some(Response::TimeEvent { time, event }) => vec![time, if event { 1.0 } else { 0.0 }],
            None => vec![f64::NAN],
        }
    }

    /// Response: one value, or `(time, event)` for a survival response.
    pub fn depvar(&self) -> Vec<f64> {
        self.depvar_of(self.m)
    }

    pub fn depvar_mod(&self, i: usize) -> Result<Vec<f64>> {
        Ok(self.depvar_of(self.index(i)?))
    }

    /// Value of the submodel's timevar on this row.
    pub fn timevar(&self) -> f64 {
        self.ev.default_time(self.m, self.row)
    }

    pub fn timevar_mod(&self, i: usize) -> Result<f64> {
        Ok(self.ev.default_time(self.index(i)?, self.row))
    }

    /// `ap(i)`, 1-based.
    pub fn ap(&self, i: usize) -> Result<f64> {
        self.ap_of(self.m, i)
    }

    pub fn ap_mod(&self, m: usize, i: usize) -> Result<f64> {
        self.ap_of(self.index(m)?, i)
    }

    fn ap_of(&self, m: usize, i: usize) -> Result<f64> {
        let n = self.ev.model.layout.submodels[m].n_anc;
        if i == 0 || i > n {
            return eval_err(format!("ancillary parameter {i} out of range 1..={n}"));
        }
        Ok(self.ev.ancillary(m, i - 1))
    }

    pub fn xzb(&self, t: Option<f64>) -> Result<f64> {
        self.ev.xzb(self.m, self.row, self.time(self.m, t), Order::Value)
    }
    pub fn xzb_deriv(&self, t: Option<f64>) -> Result<f64> {
        self.ev.xzb(self.m, self.row, self.time(self.m, t), Order::D1)
    }
    pub fn xzb_deriv2(&self, t: Option<f64>) -> Result<f64> {
        self.ev.xzb(self.m, self.row, self.time(self.m, t), Order::D2)
    }
    pub fn xzb_integ(&self, t: Option<f64>) -> Result<f64> {
        self.ev.xzb(self.m, self.row, self.time(self.m, t), Order::Integral)
    }

    pub fn expval(&self, t: Option<f64>) -> Result<f64> {
        self.ev.expval(self.m, self.row, self.time(self.m, t), Order::Value)
    }
    pub fn expval_deriv(&self, t: Option<f64>) -> Result<f64> {
        self.ev.expval(self.m, self.row, self.time(self.m, t), Order::D1)
    }
    pub fn expval_deriv2(&self, t: Option<f64>) -> Result<f64> {
        self.ev.expval(self.m, self.row, self.time(self.m, t), Order::D2)
    }
    pub fn expval_integ(&self, t: Option<f64>) -> Result<f64> {
        self.ev.expval(self.m, self.row, self.time(self.m, t), Order::Integral)
    }

    /// Predictor of submodel `i` (1-based) at `t`, or at its own default time.
    pub fn xzb_mod(&self, i: usize, t: Option<f64>, order: Order) -> Result<f64> {
        let m = self.index(i)?;
        self.ev.xzb(m, self.row, self.time(m, t), order)
    }

    pub fn expval_mod(&self, i: usize, t: Option<f64>, order: Order) -> Result<f64> {
        let m = self.index(i)?;
        self.ev.expval(m, self.row, self.time(m, t), order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::families::loglik_obs;
    use crate::model::Model;
    use crate::predictor::Eval;
    use crate::spec::parse_spec_file;

    fn data() -> Dataset {
        Dataset::from_columns(vec![
            ("y".into(), vec![Some(2.5), Some(3.0)]),
            ("x".into(), vec![Some(1.0), Some(2.0)]),
            ("t".into(), vec![Some(0.5), Some(1.5)]),
            ("st".into(), vec![Some(4.0), Some(2.0)]),
            ("d".into(), vec![Some(1.0), Some(0.0)]),
        ])
        .unwrap()
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut r = UserRegistry::with_examples();
        assert!(r.register("logl_gaussian", |_: &UserFamilyContext<'_>| Ok(0.0)).is_err());
        assert!(r.register("mine", |_: &UserFamilyContext<'_>| Ok(0.0)).is_ok());
        assert_eq!(r.names().count(), 4);
    }

    #[test]
    fn user_gaussian_equals_builtin() {
        let reg = UserRegistry::with_examples();
        let text = "gaussian : y ~ x + t\nuser : y ~ x + t + ap(1) | userf=logl_gaussian";
        let m = Model::new(&parse_spec_file(text).unwrap(), data(), &reg).unwrap();
        let theta = [0.3, -0.2, 1.1, -0.4, 0.3, -0.2, 1.1, -0.4];
        let ev = Eval::new(&m, &theta, &[]);
        for row in 0..2 {
            assert_eq!(loglik_obs(&ev, 0, row).unwrap(), loglik_obs(&ev, 1, row).unwrap());
        }
    }

    #[test]
    fn accessors() {
        let reg = UserRegistry::with_examples();
        let text = "user : Surv(st, d) ~ x + ap(2) | userf=logl_exponential\ngaussian : y ~ x + t | timevar=t";
        let m = Model::new(&parse_spec_file(text).unwrap(), data(), &reg).unwrap();
        let theta = [0.5, -1.0, 0.25, 0.75, 0.1, 0.2, 0.3, 0.0];
        let ev = Eval::new(&m, &theta, &[]);
        let ctx = UserFamilyContext::new(&ev, 0, 0);
        assert_eq!(ctx.depvar(), vec![4.0, 1.0]);
        assert_eq!(ctx.ap(1).unwrap(), 0.25);
        assert_eq!(ctx.ap(2).unwrap(), 0.75);
        assert!(ctx.ap(3).is_err());
        assert_eq!(ctx.depvar_mod(2).unwrap(), vec![2.5]);
        assert!(ctx.depvar_mod(3).is_err());
        // default time of the gaussian submodel is its own timevar
        assert_eq!(ctx.xzb_mod(2, None, Order::Value).unwrap(), ctx.xzb_mod(2, Some(0.5), Order::Value).unwrap());
        assert_eq!(ctx.xzb(None).unwrap(), 0.5 - 1.0);
        assert_eq!(ctx.xzb(None).unwrap(), ctx.xzb(None).unwrap());
        assert_eq!(ctx.expval_mod(2, Some(2.0), Order::D1).unwrap(), 0.2);
        let ll = logl_exponential(&ctx).unwrap();
        assert_eq!(ll, -0.5 - 4.0 * (-0.5f64).exp());
    }
}
