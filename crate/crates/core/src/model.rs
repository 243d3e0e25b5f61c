//! A validated spec bound to a dataset: bases fitted, static design values
//! cached per row, parameters laid out.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::basis::{rcs_knots, FpBasis, RcsBasis};
use crate::dataset::{Dataset, Response, ResponseView};
use crate::error::{spec_err, Error, Result};
use crate::extension::{UserLoglik, UserRegistry};
use crate::params::Layout;
use crate::spec::{validate_spec, Element, Family, LinkKind, ModelSpec, Order, ResponseSpec};

/// A fitted restricted cubic spline, keyed by its position in the spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisEntry {
    pub submodel: usize,
    pub component: usize,
    pub element: usize,
    pub basis: RcsBasis,
}

#[derive(Debug, Clone)]
pub enum TimeBasis {
    Rcs(RcsBasis),
    Fp(FpBasis),
}

impl TimeBasis {
    pub fn eval(&self, t: f64, order: Order) -> Result<crate::basis::BasisRow> {
        match self {
            TimeBasis::Rcs(b) => b.eval(t, order),
            TimeBasis::Fp(b) => b.eval(t, order),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            TimeBasis::Rcs(b) => b.n_cols(),
            TimeBasis::Fp(b) => b.n_cols(),
        }
    }
}

/// Elements whose value depends on the evaluation time or the random effects.
#[derive(Debug, Clone)]
pub enum DynElement {
    /// The submodel's timevar, replaced by the evaluation time.
    Time,
    Basis(TimeBasis),
    RandomEffect { level: usize, pos: usize },
    Link { kind: LinkKind, target: usize },
}

#[derive(Debug, Clone)]
pub struct CompiledComponent {
    pub width: usize,
    pub constrained: bool,
    pub dynamic: Vec<DynElement>,
    /// Product of the time-constant elements, `width` values per row.
    pub statics: Vec<f64>,
}

impl CompiledComponent {
    pub fn static_row(&self, row: usize) -> &[f64] {
        &self.statics[row * self.width..(row + 1) * self.width]
    }
}

#[derive(Clone)]
pub struct CompiledSubmodel {
    pub family: Family,
    pub components: Vec<CompiledComponent>,
    pub response: ResponseView,
    /// Rows that enter the likelihood: response observed, covariates complete.
    pub rows: Vec<usize>,
    /// Evaluation time per row when none is given (response time for
    /// survival submodels, timevar value otherwise).
    pub default_time: Vec<f64>,
    /// log exposure, added with a unit coefficient.
    pub offset: Vec<f64>,
    pub bhazard: Option<Vec<f64>>,
    pub gl_points: usize,
    /// Whether the predictor changes with the evaluation time.
    pub time_dependent: bool,
    pub userf: Option<UserLoglik>,
}

impl std::fmt::Debug for CompiledSubmodel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompiledSubmodel")
            .field("family", &self.family)
            .field("components", &self.components.len())
            .field("rows", &self.rows.len())
            .field("time_dependent", &self.time_dependent)
            .finish()
    }
}

impl CompiledSubmodel {
    pub fn is_survival(&self) -> bool {
        self.family.is_survival()
    }

    pub fn response(&self, row: usize) -> Option<Response> {
        self.response.values[row]
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub data: Dataset,
    pub submodels: Vec<CompiledSubmodel>,
    pub layout: Layout,
    /// Random-effect names per level, in parameter order.
    pub re_names: Vec<Vec<String>>,
    pub bases: Vec<BasisEntry>,
    /// Submodels contributing to the likelihood on each row.
    pub row_models: Vec<Vec<usize>>,
    pub users: UserRegistry,
}

fn surv_time_name(sm: &crate::spec::Submodel) -> Option<&str> {
    match &sm.response {
        ResponseSpec::Surv { time, .. } => Some(time),
        ResponseSpec::Scalar(_) => None,
    }
}

impl Model {
    /// Validates `spec` against `data` and fits any spline bases from the data.
    pub fn new(spec: &ModelSpec, data: Dataset, users: &UserRegistry) -> Result<Self> {
        Self::build(spec, data, users, None)
    }

    /// Like [`Model::new`] but reuses spline bases from an earlier fit, so
    /// evaluation on new data matches the fitted model.
    pub fn with_bases(spec: &ModelSpec, data: Dataset, users: &UserRegistry, bases: &[BasisEntry]) -> Result<Self> {
        Self::build(spec, data, users, Some(bases))
    }

    fn build(spec: &ModelSpec, data: Dataset, users: &UserRegistry, saved: Option<&[BasisEntry]>) -> Result<Self> {
        let spec = validate_spec(spec, &data)?;
        let data = data.build_levels(&spec.levels)?;
        let n = data.n_rows();
        let re_names = spec.random_effects();
        let mut re_index: HashMap<&str, (usize, usize)> = HashMap::new();
        for (l, names) in re_names.iter().enumerate() {
            for (p, name) in names.iter().enumerate() {
                re_index.insert(name, (l, p));
            }
        }

        let col = |name: &str| -> Result<&[f64]> { Ok(&data.column(name)?.values) };

        let mut submodels: Vec<CompiledSubmodel> = Vec::with_capacity(spec.submodels.len());
        let mut bases = Vec::new();
        let mut widths = Vec::with_capacity(spec.submodels.len());
        for (m, sm) in spec.submodels.iter().enumerate() {
            let response = data.response_view(&sm.response)?;
            let timevar = sm.timevar.as_deref().or_else(|| surv_time_name(sm));

            // listwise: every column the submodel reads must be present
            let mut needed: Vec<&str> = Vec::new();
            for c in &sm.components {
                for e in &c.elements {
                    for v in e.variables() {
                        if Some(v) != timevar || !sm.family.is_survival() {
                            needed.push(v);
                        }
                    }
                }
            }
            if !sm.family.is_survival() {
                if let Some(tv) = sm.timevar.as_deref() {
                    needed.push(tv);
                }
            }
            needed.extend(sm.bhazard.as_deref());
            needed.extend(sm.exposure.as_deref());
            let needed_cols: Vec<&crate::dataset::Column> =
                needed.iter().map(|v| data.column(v)).collect::<Result<_>>()?;
            let rows: Vec<usize> = response
                .observed_rows
                .iter()
                .copied()
                .filter(|&r| needed_cols.iter().all(|c| !c.missing[r]))
                .collect();
            let excluded = response.observed_rows.len() - rows.len();
            if excluded > 0 {
                log::warn!("submodel {}: {excluded} rows with missing covariates excluded", m + 1);
            }

            let default_time: Vec<f64> = (0..n)
                .map(|r| match response.values[r] {
                    Some(Response::TimeEvent { time, .. }) => time,
                    _ => match sm.timevar.as_deref() {
                        Some(tv) => data.column(tv).map(|c| c.values[r]).unwrap_or(f64::NAN),
                        None => f64::NAN,
                    },
                })
                .collect();

            let mut components = Vec::with_capacity(sm.components.len());
            let mut comp_widths = Vec::with_capacity(sm.components.len());
            for (c, comp) in sm.components.iter().enumerate() {
                let mut width = 1usize;
                let mut statics = vec![1.0; n];
                let mut static_multi: Option<Vec<Vec<f64>>> = None;
                let mut dynamic = Vec::new();
                for (e, el) in comp.elements.iter().enumerate() {
                    let is_time = |v: &str| Some(v) == timevar;
                    match el {
                        Element::Variable(v) if is_time(v) => dynamic.push(DynElement::Time),
                        Element::Variable(v) => {
                            let x = col(v)?;
                            for (s, xv) in statics.iter_mut().zip(x) {
                                *s *= xv;
                            }
                        }
                        Element::Constant(k) => statics.iter_mut().for_each(|s| *s *= k),
                        Element::RandomEffect { name, .. } => {
                            let (level, pos) = re_index[name.as_str()];
                            dynamic.push(DynElement::RandomEffect { level, pos });
                        }
                        Element::Link { kind, target } => {
                            let target = spec.link_target(target).expect("validated link");
                            dynamic.push(DynElement::Link { kind: *kind, target });
                        }
                        Element::Rcs(cfg) => {
                            let basis = match saved.and_then(|s| {
                                s.iter().find(|b| b.submodel == m && b.component == c && b.element == e)
                            }) {
                                Some(entry) => entry.basis.clone(),
                                None => {
                                    let x = col(&cfg.var)?;
                                    let sample: Vec<f64> = rows
                                        .iter()
                                        .filter(|&&r| {
                                            !cfg.event
                                                || !matches!(response.values[r], Some(Response::TimeEvent { event: false, .. }))
                                        })
                                        .map(|&r| x[r])
                                        .collect();
                                    let knots = match (&cfg.knots, cfg.df) {
                                        (Some(k), _) if cfg.log => {
                                            if k.iter().any(|&v| v <= 0.0) {
                                                return spec_err("rcs() knots must be positive with log = TRUE");
                                            }
                                            k.iter().map(|v| v.ln()).collect()
                                        }
                                        (Some(k), _) => k.clone(),
                                        (None, Some(df)) => rcs_knots(&sample, df, cfg.log)?,
                                        (None, None) => return spec_err("rcs() needs df or knots"),
                                    };
                                    let mut b = RcsBasis::new(knots, cfg.log)?;
                                    if cfg.orthog {
                                        let all: Vec<f64> = rows.iter().map(|&r| x[r]).collect();
                                        b.fit_orthog(&all)?;
                                    }
                                    b
                                }
                            };
                            bases.push(BasisEntry {
                                submodel: m,
                                component: c,
                                element: e,
                                basis: basis.clone(),
                            });
                            Self::add_basis(
                                TimeBasis::Rcs(basis),
                                is_time(&cfg.var),
                                col(&cfg.var)?,
                                &mut width,
                                &mut static_multi,
                                &mut dynamic,
                                comp,
                            )?;
                        }
                        Element::Fp(cfg) => {
                            let basis = FpBasis::new(cfg.powers.clone())?;
                            Self::add_basis(
                                TimeBasis::Fp(basis),
                                is_time(&cfg.var),
                                col(&cfg.var)?,
                                &mut width,
                                &mut static_multi,
                                &mut dynamic,
                                comp,
                            )?;
                        }
                        Element::Ancillary(_) | Element::Bhazard(_) | Element::Exposure(_) => {
                            return spec_err(format!("`{el}` cannot be part of an interaction"));
                        }
                    }
                }
                if comp.constrained && width > 1 {
                    return spec_err(format!("component `{comp}` has several columns and cannot be constrained"));
                }
                let mut flat = Vec::with_capacity(n * width);
                for r in 0..n {
                    match &static_multi {
                        Some(cols) => flat.extend(cols[r].iter().map(|v| v * statics[r])),
                        None => flat.extend(std::iter::repeat_n(statics[r], width)),
                    }
                }
                comp_widths.push(width);
                components.push(CompiledComponent {
                    width,
                    constrained: comp.constrained,
                    dynamic,
                    statics: flat,
                });
            }
            widths.push(comp_widths);

            let offset = match &sm.exposure {
                Some(v) => col(v)?.iter().map(|x| x.ln()).collect(),
                None => vec![0.0; n],
            };
            let bhazard = match &sm.bhazard {
                Some(v) => Some(col(v)?.to_vec()),
                None => None,
            };
            let userf = match &sm.userf {
                Some(name) if sm.family == Family::User => Some(
                    users
                        .get(name)
                        .cloned()
                        .ok_or_else(|| Error::Spec(format!("no user family registered as `{name}`")))?,
                ),
                _ => None,
            };
            submodels.push(CompiledSubmodel {
                family: sm.family,
                components,
                response,
                rows,
                default_time,
                offset,
                bhazard,
                gl_points: sm.gl_points,
                time_dependent: false,
                userf,
            });
        }

        // time dependence through links, resolved in dependency order
        let n_sub = submodels.len();
        let mut done = vec![false; n_sub];
        while done.iter().any(|d| !d) {
            for m in 0..n_sub {
                if done[m] {
                    continue;
                }
                let mut ready = true;
                let mut dep = false;
                for c in &submodels[m].components {
                    for d in &c.dynamic {
                        match d {
                            DynElement::Time => dep = true,
                            DynElement::Basis(_) => dep = true,
                            DynElement::Link { target, .. } => {
                                if done[*target] {
                                    dep |= submodels[*target].time_dependent;
                                } else {
                                    ready = false;
                                }
                            }
                            DynElement::RandomEffect { .. } => {}
                        }
                    }
                }
                if ready {
                    submodels[m].time_dependent = dep;
                    done[m] = true;
                }
            }
        }

        let mut row_models = vec![Vec::new(); n];
        for (m, sm) in submodels.iter().enumerate() {
            for &r in &sm.rows {
                row_models[r].push(m);
            }
        }
        let layout = Layout::new(&spec, &widths, &re_names);
        Ok(Self {
            spec,
            data,
            submodels,
            layout,
            re_names,
            bases,
            row_models,
            users: users.clone(),
        })
    }

    fn add_basis(
        basis: TimeBasis,
        is_time: bool,
        x: &[f64],
        width: &mut usize,
        static_multi: &mut Option<Vec<Vec<f64>>>,
        dynamic: &mut Vec<DynElement>,
        comp: &crate::spec::Component,
    ) -> Result<()> {
        let w = basis.width();
        if w > 1 {
            if *width > 1 {
                return spec_err(format!("component `{comp}` multiplies two multi-column functions"));
            }
            *width = w;
        }
        if is_time {
            dynamic.push(DynElement::Basis(basis));
        } else {
            let vals: Vec<Vec<f64>> = x
                .iter()
                .map(|&v| {
                    if v.is_nan() {
                        vec![f64::NAN; w]
                    } else {
                        basis.eval(v, Order::Value).map(|r| r.to_vec()).unwrap_or_else(|_| vec![f64::NAN; w])
                    }
                })
                .collect();
            match static_multi {
                // two static functions of width 1 or one of width w: fold scalars into the other
                Some(prev) => {
                    for (p, v) in prev.iter_mut().zip(vals) {
                        if p.len() == 1 {
                            *p = v.iter().map(|x| x * p[0]).collect();
                        } else {
                            p.iter_mut().for_each(|x| *x *= v[0]);
                        }
                    }
                }
                None => *static_multi = Some(vals),
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.layout.len()
    }

    pub fn n_levels(&self) -> usize {
        self.spec.levels.len()
    }
}
