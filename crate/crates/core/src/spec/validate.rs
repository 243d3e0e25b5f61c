use std::collections::HashMap;

use super::{Element, Family, ModelSpec};
use crate::dataset::Dataset;
use crate::error::{spec_err, Result};

/// Resolves names against the data and checks the cross-submodel structure.
///
/// On success the returned spec has one integration rule per level.
pub fn validate_spec(spec: &ModelSpec, data: &Dataset) -> Result<ModelSpec> {
    let mut spec = spec.clone();
    if spec.submodels.is_empty() {
        return spec_err("model has no submodels");
    }
    let need = |name: &str, what: &str| -> Result<()> {
        if data.has_column(name) {
            Ok(())
        } else {
            spec_err(format!("{what} `{name}` is not a column of the data"))
        }
    };
    for l in &spec.levels {
        need(l, "level variable")?;
    }
    if spec.intmethod.len() > spec.levels.len().max(1) {
        return spec_err(format!(
            "{} integration methods given for {} levels",
            spec.intmethod.len(),
            spec.levels.len()
        ));
    }
    if spec.ip.len() > 1 && spec.ip.len() != spec.levels.len() {
        return spec_err("ip must be a single value or one value per level");
    }
    if let Some(&0) = spec.ip.iter().min() {
        return spec_err("ip must be at least 1");
    }

    let mut re_level: HashMap<String, String> = HashMap::new();
    for (m, sm) in spec.submodels.iter().enumerate() {
        let which = format!("submodel {}", m + 1);
        for c in sm.response.columns() {
            need(c, "response variable")?;
        }
        if sm.family.is_survival() && !sm.response.is_survival() {
            return spec_err(format!("{which}: family {} needs a Surv(time, event) response", sm.family));
        }
        if !sm.family.is_survival()
            && sm.response.is_survival()
            && !matches!(sm.family, Family::User | Family::Null)
        {
            return spec_err(format!("{which}: family {} needs a scalar response", sm.family));
        }
        if let Some(tv) = &sm.timevar {
            need(tv, "timevar")?;
        }
        if matches!(sm.family, Family::Rp | Family::LogHazard) && sm.timevar.is_none() {
            return spec_err(format!(
                "{which}: family {} needs a timevar so that its time-dependent predictor can be differentiated or integrated",
                sm.family
            ));
        }
        if sm.family == Family::User && sm.userf.is_none() {
            return spec_err(format!("{which}: family user needs userf=<name>"));
        }
        if sm.family != Family::User && sm.user_ancillaries > 0 {
            return spec_err(format!("{which}: ap() is only valid for the user family"));
        }
        if let Some(v) = &sm.bhazard {
            need(v, "bhazard variable")?;
            if !sm.family.is_survival() {
                return spec_err(format!("{which}: bhazard() needs a survival family"));
            }
        }
        if let Some(v) = &sm.exposure {
            need(v, "exposure variable")?;
            if !matches!(sm.family, Family::Poisson | Family::NegBinomial) {
                return spec_err(format!("{which}: exposure() is for count families"));
            }
        }
        if sm.gl_points == 0 {
            return spec_err(format!("{which}: gl must be at least 1"));
        }
        for comp in &sm.components {
            let mut levels_seen: Vec<&str> = Vec::new();
            for e in &comp.elements {
                for v in e.variables() {
                    need(v, "variable")?;
                }
                match e {
                    Element::RandomEffect { name, level } => {
                        if !spec.levels.contains(level) {
                            return spec_err(format!("{which}: random effect {name}[{level}] refers to an undeclared level"));
                        }
                        if levels_seen.contains(&level.as_str()) {
                            return spec_err(format!("{which}: component `{comp}` has two random effects at level `{level}`"));
                        }
                        levels_seen.push(level);
                        if let Some(prev) = re_level.insert(name.clone(), level.clone()) {
                            if &prev != level {
                                return spec_err(format!("random effect {name} is declared at levels `{prev}` and `{level}`"));
                            }
                        }
                    }
                    Element::Link { kind, target } => {
                        let Some(t) = spec.link_target(target) else {
                            return spec_err(format!("{which}: link `{e}` does not resolve to exactly one submodel"));
                        };
                        let tf = spec.submodels[t].family;
                        if kind.is_expval() && (tf.is_survival() || tf == Family::User) {
                            return spec_err(format!(
                                "{which}: `{e}` asks for the expected value of a {tf} submodel, which is not defined"
                            ));
                        }
                    }
                    Element::Rcs(r) => {
                        if let Some(k) = &r.knots {
                            if k.windows(2).any(|w| w[1] <= w[0]) {
                                return spec_err(format!("{which}: rcs() knots must be strictly ascending"));
                            }
                        }
                    }
                    Element::Fp(f) => {
                        if f.powers.is_empty() || f.powers.len() > 2 {
                            return spec_err(format!("{which}: fp() takes one or two powers"));
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    detect_link_cycles(&spec)?;

    let n_levels = spec.levels.len();
    if n_levels > 0 {
        let resolved: Vec<_> = (0..n_levels).map(|l| spec.level_integration(l)).collect();
        spec.intmethod = resolved.iter().map(|r| r.method).collect();
        spec.ip = resolved.iter().map(|r| r.points).collect();
    }
    Ok(spec)
}

fn detect_link_cycles(spec: &ModelSpec) -> Result<()> {
    let n = spec.submodels.len();
    let edges: Vec<Vec<usize>> = spec
        .submodels
        .iter()
        .map(|sm| {
            sm.components
                .iter()
                .flat_map(|c| c.elements.iter())
                .filter_map(|e| match e {
                    Element::Link { target, .. } => spec.link_target(target),
                    _ => None,
                })
                .collect()
        })
        .collect();
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(v: usize, edges: &[Vec<usize>], state: &mut [u8]) -> bool {
        state[v] = 1;
        for &w in &edges[v] {
            if state[w] == 1 || (state[w] == 0 && visit(w, edges, state)) {
                return true;
            }
        }
        state[v] = 2;
        false
    }
    let mut state = vec![0u8; n];
    for v in 0..n {
        if state[v] == 0 && visit(v, &edges, &mut state) {
            return spec_err(format!("links between submodels form a cycle through submodel {}", v + 1));
        }
    }
    Ok(())
}
