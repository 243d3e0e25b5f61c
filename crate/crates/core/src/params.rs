//! Flat parameter vector: per submodel its coefficients, `_cons` and
//! ancillaries, then the random-effect covariance parameters of each level.

use serde::{Deserialize, Serialize};

use crate::integration::CovarianceParam;
use crate::spec::{Covariance, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    Identity,
    LogSd,
    AtanhCorr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Coefficient,
    Constant,
    Ancillary,
    Covariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub label: String,
    pub kind: ParamKind,
    pub transform: Transform,
    /// Owning submodel (zero-based) for coefficients and ancillaries.
    pub submodel: Option<usize>,
    /// Owning level (zero-based) for covariance parameters.
    pub level: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmodelLayout {
    /// First coefficient of each component, `None` when constrained to 1.
    pub component_start: Vec<Option<usize>>,
    pub widths: Vec<usize>,
    pub cons: Option<usize>,
    pub anc_start: usize,
    pub n_anc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelLayout {
    pub start: usize,
    pub dim: usize,
    pub structure: Covariance,
}

impl LevelLayout {
    pub fn n_params(&self) -> usize {
        CovarianceParam::n_params(self.structure, self.dim)
    }

    pub fn covariance(&self, theta: &[f64]) -> CovarianceParam {
        CovarianceParam::from_slice(self.structure, self.dim, &theta[self.start..self.start + self.n_params()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub params: Vec<ParamInfo>,
    pub submodels: Vec<SubmodelLayout>,
    pub levels: Vec<LevelLayout>,
}

impl Layout {
    /// `widths[m][c]` is the number of coefficient columns of component `c`.
    pub fn new(spec: &ModelSpec, widths: &[Vec<usize>], re_names: &[Vec<String>]) -> Self {
        let mut params = Vec::new();
        let mut submodels = Vec::with_capacity(spec.submodels.len());
        for (m, sm) in spec.submodels.iter().enumerate() {
            let mut component_start = Vec::with_capacity(sm.components.len());
            for (c, comp) in sm.components.iter().enumerate() {
                if comp.constrained {
                    component_start.push(None);
                    continue;
                }
                component_start.push(Some(params.len()));
                let w = widths[m][c];
                let label = comp.label();
                for j in 0..w {
                    params.push(ParamInfo {
                        label: if w > 1 { format!("{label}:{}", j + 1) } else { label.clone() },
                        kind: ParamKind::Coefficient,
                        transform: Transform::Identity,
                        submodel: Some(m),
                        level: None,
                    });
                }
            }
            let cons = sm.intercept.then(|| {
                params.push(ParamInfo {
                    label: "_cons".into(),
                    kind: ParamKind::Constant,
                    transform: Transform::Identity,
                    submodel: Some(m),
                    level: None,
                });
                params.len() - 1
            });
            let anc_start = params.len();
            let anc = sm.ancillary_labels();
            for label in &anc {
                params.push(ParamInfo {
                    label: label.clone(),
                    kind: ParamKind::Ancillary,
                    transform: Transform::Identity,
                    submodel: Some(m),
                    level: None,
                });
            }
            submodels.push(SubmodelLayout {
                component_start,
                widths: widths[m].clone(),
                cons,
                anc_start,
                n_anc: anc.len(),
            });
        }
        let mut levels = Vec::with_capacity(re_names.len());
        for (l, names) in re_names.iter().enumerate() {
            let start = params.len();
            let dim = names.len();
            let cov = |label: String, transform| ParamInfo {
                label,
                kind: ParamKind::Covariance,
                transform,
                submodel: None,
                level: Some(l),
            };
            match spec.covariance {
                Covariance::Identity if dim > 0 => {
                    params.push(cov(format!("log_sd({})", names.join(",")), Transform::LogSd));
                }
                Covariance::Identity => {}
                Covariance::Diagonal | Covariance::Unstructured => {
                    for n in names {
                        params.push(cov(format!("log_sd({n})"), Transform::LogSd));
                    }
                }
            }
            if spec.covariance == Covariance::Unstructured {
                for i in 1..dim {
                    for j in 0..i {
                        params.push(cov(format!("atanh_corr({},{})", names[i], names[j]), Transform::AtanhCorr));
                    }
                }
            }
            levels.push(LevelLayout {
                start,
                dim,
                structure: spec.covariance,
            });
        }
        Self {
            params,
            submodels,
            levels,
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.params.iter().map(|p| p.label.clone()).collect()
    }

    pub fn covariances(&self, theta: &[f64]) -> Vec<CovarianceParam> {
        self.levels.iter().map(|l| l.covariance(theta)).collect()
    }
}
