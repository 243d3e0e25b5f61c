//! Plain-text model file.
//!
//! ```text
//! # comments start with '#'
//! levels = id
//! covariance = unstructured
//! intmethod = ghermite
//! ip = 7
//! weibull  : Surv(stime, died) ~ type + M1[id] | timevar=stime
//! gaussian : log.grad ~ sex + age + time + M1[id]*1 | timevar=time
//! ```
//!
//! Header lines are `key = value`; submodel lines are `family : formula`,
//! optionally followed by `|` and space-separated options (`timevar=`,
//! `userf=`, `gl=`, `noconstant`). A header `timevar=` applies to every
//! submodel that does not set its own.

use super::{parse_model, Covariance, Family, IntMethod, ModelSpec, ParseOptions};
use crate::error::{parse_err, Result};

pub fn parse_spec_file(text: &str) -> Result<ModelSpec> {
    let mut spec = ModelSpec::new(Vec::new());
    let mut global_timevar: Option<String> = None;
    let mut pending: Vec<(usize, String, String)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            // `#` inside brackets is a submodel index, not a comment
            Some(i) if !raw[..i].contains('[') => &raw[..i],
            _ => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        if line.contains('~') {
            let Some((family, rest)) = line.split_once(':') else {
                return parse_err(format!("line {lineno}: expected `family : formula`"));
            };
            pending.push((lineno, family.trim().to_string(), rest.trim().to_string()));
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return parse_err(format!("line {lineno}: expected `key = value`"));
        };
        let key = key.trim();
        let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        match key {
            "levels" | "level" => spec.levels = items.iter().map(|s| s.to_string()).collect(),
            "covariance" => {
                spec.covariance = match items.as_slice() {
                    [c] => match Covariance::from_tag(c) {
                        Some(c) => c,
                        None => return parse_err(format!("line {lineno}: unknown covariance `{c}`")),
                    },
                    _ => return parse_err(format!("line {lineno}: covariance takes one value")),
                }
            }
            "intmethod" => {
                spec.intmethod = items
                    .iter()
                    .map(|m| IntMethod::from_tag(m).ok_or_else(|| crate::Error::Parse(format!("line {lineno}: unknown intmethod `{m}`"))))
                    .collect::<Result<_>>()?
            }
            "ip" => {
                spec.ip = items
                    .iter()
                    .map(|p| match p.parse::<usize>() {
                        Ok(n) if n >= 1 => Ok(n),
                        _ => Err(crate::Error::Parse(format!("line {lineno}: ip must be a positive integer, got `{p}`"))),
                    })
                    .collect::<Result<_>>()?
            }
            "timevar" => global_timevar = items.first().map(|s| s.to_string()),
            other => return parse_err(format!("line {lineno}: unknown setting `{other}`")),
        }
    }

    for (lineno, family_tag, rest) in pending {
        let family = match Family::from_tag(&family_tag) {
            Some(f) => f,
            None => return parse_err(format!("line {lineno}: unknown family `{family_tag}`")),
        };
        let (formula, opts_text) = match rest.split_once('|') {
            Some((f, o)) => (f.trim(), o.trim()),
            None => (rest.as_str(), ""),
        };
        let mut opts = ParseOptions {
            timevar: global_timevar.clone(),
            ..ParseOptions::default()
        };
        let normalized = opts_text.replace(" =", "=").replace("= ", "=");
        for tok in normalized.split_whitespace() {
            match tok.split_once('=') {
                Some(("timevar", v)) => opts.timevar = Some(v.to_string()),
                Some(("userf", v)) => opts.userf = Some(v.to_string()),
                Some(("gl", v)) => {
                    opts.gl_points = match v.parse::<usize>() {
                        Ok(n) if n >= 1 => n,
                        _ => return parse_err(format!("line {lineno}: gl must be a positive integer")),
                    }
                }
                None if tok == "noconstant" => opts.intercept = false,
                _ => return parse_err(format!("line {lineno}: unknown option `{tok}`")),
            }
        }
        let sm = parse_model(formula, family, &opts).map_err(|e| match e {
            crate::Error::Parse(m) => crate::Error::Parse(format!("line {lineno}: {m}")),
            other => other,
        })?;
        spec.submodels.push(sm);
    }
    if spec.submodels.is_empty() {
        return parse_err("model file contains no submodels");
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{LinkKind, LinkTarget};
    use proptest::prelude::*;

    /// Reference heart-valve models covering every element type and family.
    pub(crate) const EXAMPLE_MODELS: &[&str] = &[
        "gaussian : log.grad ~ sex + age + time",
        "levels = id\ngaussian : log.grad ~ sex + age + rcs(time, df = 3, orthog = TRUE) | timevar=time",
        "levels = id\ncovariance = unstructured\ngaussian : log.grad ~ sex + age + rcs(time, df = 3, orthog = TRUE) + M1[id] * 1 + time:M2[id] * 1 | timevar=time",
        "user : log.grad ~ sex + age + time + ap(1) | userf=logl_gaussian",
        "weibull : Surv(stime, died) ~ age + type",
        "rp : Surv(stime, died) ~ age + type + rcs(stime, df = 3, log = TRUE, event = TRUE) | timevar=stime",
        "rp : Surv(stime, died) ~ age + type + type:fp(stime, powers = c(0)) + rcs(stime, df = 3, log = TRUE, event = TRUE) | timevar=stime",
        "rp : Surv(stime, died) ~ type + fp(age, powers = c(1, 1)) + rcs(stime, df = 3, log = TRUE, event = TRUE) | timevar=stime",
        "timevar = stime\nrp : Surv(stime, cardio) ~ type + rcs(stime, df = 3, log = TRUE, event = TRUE)\nrp : Surv(stime, other) ~ type + rcs(stime, df = 3, log = TRUE, event = TRUE)",
        "levels = id\nweibull : Surv(stime, died) ~ type + M1[id] | timevar=stime\ngaussian : log.grad ~ sex + age + time + M1[id] * 1 | timevar=time",
        "levels = id\nweibull : Surv(stime, died) ~ type + EV[log.grad] | timevar=stime\ngaussian : log.grad ~ sex + age + time + M1[id] * 1 | timevar=time",
        "levels = id\nweibull : Surv(stime, died) ~ type + dEV[log.grad] | timevar=stime\ngaussian : log.grad ~ sex + age + time + time:M1[id] * 1 | timevar=time",
        "levels = id\nweibull : Surv(stime, died) ~ type + EV[log.grad] + EV[log.grad]:fp(stime, powers = c(0)) | timevar=stime\ngaussian : log.grad ~ time + M1[id] * 1 | timevar=time",
        "levels = id\ncovariance = unstructured\nip = 9\n\
         weibull : Surv(stime, cardio) ~ type + EV[log.grad] + M2[id] | timevar=stime\n\
         weibull : Surv(stime, other) ~ type + type:fp(stime, powers = c(0)) + M1[id] | timevar=stime\n\
         gaussian : log.grad ~ age + type + rcs(time, df = 3, orthog = TRUE) + M1[id] * 1 | timevar=time\n\
         bernoulli : catef ~ fp(time, powers = c(1)) + M2[id] * 1 | timevar=time",
    ];

    #[test]
    fn all_example_models_parse() {
        for text in EXAMPLE_MODELS {
            let spec = parse_spec_file(text).unwrap_or_else(|e| panic!("{text}: {e}"));
            assert!(!spec.submodels.is_empty());
        }
    }

    #[test]
    fn example_models_round_trip() {
        for text in EXAMPLE_MODELS {
            let spec = parse_spec_file(text).unwrap();
            let printed = spec.to_string();
            let back = parse_spec_file(&printed).unwrap_or_else(|e| panic!("{printed}: {e}"));
            assert_eq!(spec, back, "{printed}");
        }
    }

    #[test]
    fn m14_structure() {
        let spec = parse_spec_file(EXAMPLE_MODELS[13]).unwrap();
        assert_eq!(spec.submodels.len(), 4);
        assert_eq!(spec.covariance, Covariance::Unstructured);
        assert_eq!(spec.level_integration(0).points, 9);
        assert_eq!(spec.random_effects(), vec![vec!["M2".to_string(), "M1".to_string()]]);
        let ev = &spec.submodels[0].components[1].elements[0];
        assert!(matches!(ev, Element::Link { kind: LinkKind::Ev, target: LinkTarget::Response(r) } if r == "log.grad"));
        assert_eq!(spec.link_target(&LinkTarget::Response("log.grad".into())), Some(2));
    }

    #[test]
    fn header_errors() {
        assert!(parse_spec_file("covariance = weird\ngaussian : y ~ x").is_err());
        assert!(parse_spec_file("ip = 0\ngaussian : y ~ x").is_err());
        assert!(parse_spec_file("poisson2 : y ~ x").is_err());
        assert!(parse_spec_file("# nothing").is_err());
        assert!(parse_spec_file("gaussian : y ~ x | bogus=1").is_err());
    }

    #[test]
    fn integration_per_level() {
        let spec = parse_spec_file("levels = a, b, c\nintmethod = ghermite, halton\ngaussian : y ~ x").unwrap();
        assert_eq!(spec.level_integration(0).method, IntMethod::GHermite);
        assert_eq!(spec.level_integration(0).points, 7);
        assert_eq!(spec.level_integration(1).method, IntMethod::Halton);
        assert_eq!(spec.level_integration(1).points, 100);
        assert_eq!(spec.level_integration(2).method, IntMethod::Halton);
    }

    use crate::spec::Element;

    fn arb_element() -> impl Strategy<Value = String> {
        prop_oneof![
            "[a-z][a-z0-9_.]{0,5}".prop_filter("reserved", |s| !matches!(s.as_str(), "c" | "rcs" | "fp" | "ap")),
            (1usize..5).prop_map(|d| format!("rcs(t, df = {d}, log = TRUE)")),
            (-2i32..3, -2i32..3).prop_map(|(a, b)| format!("fp(t, powers = c({a}, {b}))")),
            (1usize..4).prop_map(|k| format!("M{k}[id]")),
            prop_oneof![Just("EV"), Just("dXB"), Just("iEV")].prop_map(|k| format!("{k}[y2]")),
        ]
    }

    proptest! {
        #[test]
        fn printed_specs_reparse_identically(
            comps in proptest::collection::vec((proptest::collection::vec(arb_element(), 1..3), any::<bool>()), 1..5)
        ) {
            let terms: Vec<String> = comps.iter().map(|(els, c)| {
                let mut s = els.join(":");
                if *c { s.push_str(" * 1"); }
                s
            }).collect();
            let text = format!("levels = id\ngaussian : y ~ {} | timevar=t\ngaussian : y2 ~ t", terms.join(" + "));
            let spec = parse_spec_file(&text).unwrap();
            let back = parse_spec_file(&spec.to_string()).unwrap();
            prop_assert_eq!(spec, back);
        }
    }
}
