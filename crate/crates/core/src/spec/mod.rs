//! Model specification: submodels built from components, components built
//! from elements.
//!
//! A submodel is written `response ~ component + component + ...`, a component
//! is a product of elements joined with `:` and optionally constrained to a
//! unit coefficient with `*1`.

mod file;
mod parse;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use crate::dataset::ResponseSpec;
pub use file::parse_spec_file;
pub use parse::{parse_component, parse_model, ParseOptions};
pub use validate::validate_spec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Gaussian,
    Bernoulli,
    Poisson,
    Beta,
    NegBinomial,
    Exponential,
    Weibull,
    Gompertz,
    Rp,
    LogHazard,
    User,
    Null,
}

impl Family {
    pub fn from_tag(tag: &str) -> Option<Family> {
        Some(match tag {
            "gaussian" => Family::Gaussian,
            "bernoulli" => Family::Bernoulli,
            "poisson" => Family::Poisson,
            "beta" => Family::Beta,
            "negbinomial" => Family::NegBinomial,
            "exponential" => Family::Exponential,
            "weibull" => Family::Weibull,
            "gompertz" => Family::Gompertz,
            "rp" => Family::Rp,
            "loghazard" => Family::LogHazard,
            "user" => Family::User,
            "null" => Family::Null,
            _ => return None,
        })
    }

    pub fn tag(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Bernoulli => "bernoulli",
            Family::Poisson => "poisson",
            Family::Beta => "beta",
            Family::NegBinomial => "negbinomial",
            Family::Exponential => "exponential",
            Family::Weibull => "weibull",
            Family::Gompertz => "gompertz",
            Family::Rp => "rp",
            Family::LogHazard => "loghazard",
            Family::User => "user",
            Family::Null => "null",
        }
    }

    pub fn is_survival(self) -> bool {
        matches!(
            self,
            Family::Exponential | Family::Weibull | Family::Gompertz | Family::Rp | Family::LogHazard
        )
    }

    /// Labels of the family's built-in ancillary parameters.
    pub fn ancillary_labels(self) -> &'static [&'static str] {
        match self {
            Family::Gaussian => &["log_sd(resid.)"],
            Family::Weibull => &["log(gamma)"],
            Family::Gompertz => &["gamma"],
            Family::NegBinomial => &["log(alpha)"],
            Family::Beta => &["log(phi)"],
            _ => &[],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Cross-submodel link kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    Ev,
    DEv,
    D2Ev,
    IEv,
    Xb,
    DXb,
    D2Xb,
    IXb,
}

/// Which time functional of the target a link reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    Value,
    D1,
    D2,
    Integral,
}

impl LinkKind {
    pub fn from_tag(tag: &str) -> Option<LinkKind> {
        Some(match tag {
            "EV" => LinkKind::Ev,
            "dEV" => LinkKind::DEv,
            "d2EV" => LinkKind::D2Ev,
            "iEV" => LinkKind::IEv,
            "XB" => LinkKind::Xb,
            "dXB" => LinkKind::DXb,
            "d2XB" => LinkKind::D2Xb,
            "iXB" => LinkKind::IXb,
            _ => return None,
        })
    }

    pub fn tag(self) -> &'static str {
        match self {
            LinkKind::Ev => "EV",
            LinkKind::DEv => "dEV",
            LinkKind::D2Ev => "d2EV",
            LinkKind::IEv => "iEV",
            LinkKind::Xb => "XB",
            LinkKind::DXb => "dXB",
            LinkKind::D2Xb => "d2XB",
            LinkKind::IXb => "iXB",
        }
    }

    /// True for the expected-value links, false for the linear-predictor ones.
    pub fn is_expval(self) -> bool {
        matches!(self, LinkKind::Ev | LinkKind::DEv | LinkKind::D2Ev | LinkKind::IEv)
    }

    pub fn order(self) -> Order {
        match self {
            LinkKind::Ev | LinkKind::Xb => Order::Value,
            LinkKind::DEv | LinkKind::DXb => Order::D1,
            LinkKind::D2Ev | LinkKind::D2Xb => Order::D2,
            LinkKind::IEv | LinkKind::IXb => Order::Integral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkTarget {
    /// Submodel whose response column has this name.
    Response(String),
    /// One-based submodel index.
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcsConfig {
    pub var: String,
    pub df: Option<usize>,
    pub knots: Option<Vec<f64>>,
    pub orthog: bool,
    pub log: bool,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpConfig {
    pub var: String,
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Element {
    Variable(String),
    Rcs(RcsConfig),
    Fp(FpConfig),
    RandomEffect { name: String, level: String },
    Link { kind: LinkKind, target: LinkTarget },
    Ancillary(usize),
    Bhazard(String),
    Exposure(String),
    Constant(f64),
}

impl Element {
    /// Name used in result tables.
    pub fn label(&self) -> String {
        match self {
            Element::Variable(v) => v.clone(),
            Element::Rcs(_) => "rcs()".into(),
            Element::Fp(_) => "fp()".into(),
            Element::RandomEffect { name, .. } => name.clone(),
            Element::Link { kind, .. } => format!("{}[]", kind.tag()),
            Element::Ancillary(k) => format!("ap({k})"),
            Element::Bhazard(v) => format!("bhazard({v})"),
            Element::Exposure(v) => format!("exposure({v})"),
            Element::Constant(c) => format!("{c}"),
        }
    }

    /// Data columns read by this element.
    pub fn variables(&self) -> Vec<&str> {
        match self {
            Element::Variable(v) | Element::Bhazard(v) | Element::Exposure(v) => vec![v.as_str()],
            Element::Rcs(c) => vec![c.var.as_str()],
            Element::Fp(c) => vec![c.var.as_str()],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Variable(v) => f.write_str(v),
            Element::Rcs(c) => {
                write!(f, "rcs({}", c.var)?;
                if let Some(df) = c.df {
                    write!(f, ", df = {df}")?;
                }
                if let Some(k) = &c.knots {
                    write!(f, ", knots = {}", num_list(k))?;
                }
                for (flag, name) in [(c.orthog, "orthog"), (c.log, "log"), (c.event, "event")] {
                    if flag {
                        write!(f, ", {name} = TRUE")?;
                    }
                }
                f.write_str(")")
            }
            Element::Fp(c) => write!(f, "fp({}, powers = {})", c.var, num_list(&c.powers)),
            Element::RandomEffect { name, level } => write!(f, "{name}[{level}]"),
            Element::Link { kind, target } => match target {
                LinkTarget::Response(r) => write!(f, "{}[{r}]", kind.tag()),
                LinkTarget::Index(i) => write!(f, "{}[{i}]", kind.tag()),
            },
            Element::Ancillary(k) => write!(f, "ap({k})"),
            Element::Bhazard(v) => write!(f, "bhazard({v})"),
            Element::Exposure(v) => write!(f, "exposure({v})"),
            Element::Constant(c) => write!(f, "{c:?}"),
        }
    }
}

fn num_list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
    format!("c({})", items.join(", "))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub elements: Vec<Element>,
    pub constrained: bool,
}

impl Component {
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.elements.iter().map(Element::label).collect();
        parts.join(":")
    }

    pub fn has_random_effect(&self) -> bool {
        self.elements.iter().any(|e| matches!(e, Element::RandomEffect { .. }))
    }

    pub fn has_link(&self) -> bool {
        self.elements.iter().any(|e| matches!(e, Element::Link { .. }))
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.elements.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(":"))?;
        if self.constrained {
            f.write_str(" * 1")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submodel {
    pub response: ResponseSpec,
    pub components: Vec<Component>,
    pub family: Family,
    /// Registered user log-likelihood, for the `user` family.
    pub userf: Option<String>,
    pub timevar: Option<String>,
    pub intercept: bool,
    /// Number of user ancillary parameters declared with `ap(k)`.
    pub user_ancillaries: usize,
    pub bhazard: Option<String>,
    pub exposure: Option<String>,
    /// Gauss-Legendre points for cumulative-hazard and time integrals.
    pub gl_points: usize,
}

pub const DEFAULT_GL_POINTS: usize = 30;

impl Submodel {
    pub fn formula(&self) -> String {
        let response = match &self.response {
            ResponseSpec::Scalar(y) => y.clone(),
            ResponseSpec::Surv { time, event } => format!("Surv({time}, {event})"),
        };
        let mut terms: Vec<String> = self.components.iter().map(ToString::to_string).collect();
        if let Some(v) = &self.bhazard {
            terms.push(format!("bhazard({v})"));
        }
        if let Some(v) = &self.exposure {
            terms.push(format!("exposure({v})"));
        }
        if self.user_ancillaries > 0 {
            terms.push(format!("ap({})", self.user_ancillaries));
        }
        if terms.is_empty() {
            format!("{response} ~ 1")
        } else {
            format!("{response} ~ {}", terms.join(" + "))
        }
    }

    /// Labels of the ancillary parameters, in parameter order.
    pub fn ancillary_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.family.ancillary_labels().iter().map(|s| s.to_string()).collect();
        out.extend((1..=self.user_ancillaries).map(|k| format!("_ap{k}")));
        out
    }

    pub fn n_ancillaries(&self) -> usize {
        self.family.ancillary_labels().len() + self.user_ancillaries
    }

    /// Name of the response column, as matched by `EV[name]`.
    pub fn response_name(&self) -> &str {
        match &self.response {
            ResponseSpec::Scalar(y) => y,
            ResponseSpec::Surv { time, .. } => time,
        }
    }
}

impl fmt::Display for Submodel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} : {}", self.family, self.formula())?;
        let mut opts = Vec::new();
        if let Some(t) = &self.timevar {
            opts.push(format!("timevar={t}"));
        }
        if let Some(u) = &self.userf {
            opts.push(format!("userf={u}"));
        }
        if !self.intercept {
            opts.push("noconstant".to_string());
        }
        if self.gl_points != DEFAULT_GL_POINTS {
            opts.push(format!("gl={}", self.gl_points));
        }
        if !opts.is_empty() {
            write!(f, " | {}", opts.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Covariance {
    Identity,
    Diagonal,
    Unstructured,
}

impl Covariance {
    pub fn from_tag(tag: &str) -> Option<Covariance> {
        Some(match tag {
            "identity" => Covariance::Identity,
            "diagonal" => Covariance::Diagonal,
            "unstructured" => Covariance::Unstructured,
            _ => return None,
        })
    }

    pub fn tag(self) -> &'static str {
        match self {
            Covariance::Identity => "identity",
            Covariance::Diagonal => "diagonal",
            Covariance::Unstructured => "unstructured",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntMethod {
    GHermite,
    Halton,
    Sobol,
    Mc,
}

impl IntMethod {
    pub fn from_tag(tag: &str) -> Option<IntMethod> {
        Some(match tag {
            "ghermite" => IntMethod::GHermite,
            "halton" => IntMethod::Halton,
            "sobol" => IntMethod::Sobol,
            "mc" => IntMethod::Mc,
            _ => return None,
        })
    }

    pub fn tag(self) -> &'static str {
        match self {
            IntMethod::GHermite => "ghermite",
            IntMethod::Halton => "halton",
            IntMethod::Sobol => "sobol",
            IntMethod::Mc => "mc",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            IntMethod::GHermite => "Non-adaptive Gauss-Hermite quadrature",
            IntMethod::Halton => "Monte Carlo integration using Halton sequences",
            IntMethod::Sobol => "Monte Carlo integration using Sobol sequences",
            IntMethod::Mc => "Monte Carlo integration using normal draws",
        }
    }

    pub fn default_points(self) -> usize {
        match self {
            IntMethod::GHermite => 7,
            _ => 100,
        }
    }
}

/// Integration rule resolved for one level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelIntegration {
    pub method: IntMethod,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub submodels: Vec<Submodel>,
    /// Level variables, highest to lowest.
    pub levels: Vec<String>,
    pub covariance: Covariance,
    /// Per-level methods as written; missing trailing entries repeat the last one.
    pub intmethod: Vec<IntMethod>,
    /// Per-level point counts as written; missing entries take the method default.
    pub ip: Vec<usize>,
}

impl ModelSpec {
    pub fn new(submodels: Vec<Submodel>) -> Self {
        Self {
            submodels,
            levels: Vec::new(),
            covariance: Covariance::Identity,
            intmethod: Vec::new(),
            ip: Vec::new(),
        }
    }

    pub fn with_levels<S: Into<String>>(mut self, levels: impl IntoIterator<Item = S>) -> Self {
        self.levels = levels.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_covariance(mut self, cov: Covariance) -> Self {
        self.covariance = cov;
        self
    }

    pub fn with_ip(mut self, ip: usize) -> Self {
        self.ip = vec![ip];
        self
    }

    pub fn with_intmethod(mut self, methods: Vec<IntMethod>) -> Self {
        self.intmethod = methods;
        self
    }

    /// Integration rule used at level `l` (0 = highest).
    pub fn level_integration(&self, l: usize) -> LevelIntegration {
        let method = self
            .intmethod
            .get(l)
            .or(self.intmethod.last())
            .copied()
            .unwrap_or(IntMethod::GHermite);
        let points = if self.ip.len() > 1 {
            self.ip.get(l).copied()
        } else {
            self.ip.first().copied()
        }
        .unwrap_or_else(|| method.default_points());
        LevelIntegration { method, points }
    }

    /// Resolves a link target to a zero-based submodel index.
    pub fn link_target(&self, target: &LinkTarget) -> Option<usize> {
        match target {
            LinkTarget::Index(i) => (*i >= 1 && *i <= self.submodels.len()).then(|| i - 1),
            LinkTarget::Response(name) => {
                let hits: Vec<usize> = self
                    .submodels
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.response_name() == name)
                    .map(|(i, _)| i)
                    .collect();
                (hits.len() == 1).then(|| hits[0])
            }
        }
    }

    /// Random-effect names per level in order of first appearance.
    pub fn random_effects(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new(); self.levels.len()];
        for sm in &self.submodels {
            for c in &sm.components {
                for e in &c.elements {
                    if let Element::RandomEffect { name, level } = e {
                        if let Some(l) = self.levels.iter().position(|x| x == level) {
                            if !out[l].contains(name) {
                                out[l].push(name.clone());
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn has_random_effects(&self) -> bool {
        self.random_effects().iter().any(|v| !v.is_empty())
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.levels.is_empty() {
            writeln!(f, "levels = {}", self.levels.join(", "))?;
        }
        if self.covariance != Covariance::Identity {
            writeln!(f, "covariance = {}", self.covariance.tag())?;
        }
        if !self.intmethod.is_empty() {
            let m: Vec<&str> = self.intmethod.iter().map(|m| m.tag()).collect();
            writeln!(f, "intmethod = {}", m.join(", "))?;
        }
        if !self.ip.is_empty() {
            let p: Vec<String> = self.ip.iter().map(ToString::to_string).collect();
            writeln!(f, "ip = {}", p.join(", "))?;
        }
        for sm in &self.submodels {
            writeln!(f, "{sm}")?;
        }
        Ok(())
    }
}
