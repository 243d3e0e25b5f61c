use super::{
    Component, Element, Family, FpConfig, LinkKind, LinkTarget, RcsConfig, ResponseSpec, Submodel,
    DEFAULT_GL_POINTS,
};
use crate::error::{parse_err, Result};

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub userf: Option<String>,
    pub timevar: Option<String>,
    pub intercept: bool,
    pub gl_points: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            userf: None,
            timevar: None,
            intercept: true,
            gl_points: DEFAULT_GL_POINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Sym(char),
}

fn tokenize(text: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit))
            || (c == '-' && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit() || *n == '.'))
        {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let s: String = chars[start..i].iter().collect();
            match s.parse::<f64>() {
                Ok(v) => out.push(Tok::Num(v)),
                Err(_) => return parse_err(format!("malformed number `{s}`")),
            }
        } else if c.is_alphabetic() || c == '_' || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "()[],=~+:*#".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return parse_err(format!("unexpected character `{c}`"));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Self {
            toks: tokenize(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn at_sym(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Sym(c))
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.at_sym(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<()> {
        match self.next() {
            Some(Tok::Sym(s)) if s == c => Ok(()),
            other => parse_err(format!("expected `{c}`, found {}", describe(other.as_ref()))),
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            other => parse_err(format!("expected a name, found {}", describe(other.as_ref()))),
        }
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn response(&mut self) -> Result<ResponseSpec> {
        let name = self.ident()?;
        if name == "Surv" {
            if !self.eat_sym('(') {
                return parse_err("malformed Surv(): expected `(`");
            }
            let time = self.ident().map_err(|_| crate::Error::Parse("malformed Surv(): expected time variable".into()))?;
            if !self.eat_sym(',') {
                return parse_err("malformed Surv(): expected time and event indicator");
            }
            let event = self.ident().map_err(|_| crate::Error::Parse("malformed Surv(): expected event variable".into()))?;
            if !self.eat_sym(')') {
                return parse_err("malformed Surv(): expected `)`");
            }
            Ok(ResponseSpec::Surv { time, event })
        } else {
            Ok(ResponseSpec::Scalar(name))
        }
    }

    fn component(&mut self) -> Result<Component> {
        let mut elements = vec![self.element()?];
        while self.eat_sym(':') {
            if self.at_sym(':') || self.at_sym('+') || self.at_sym('*') || self.done() {
                return parse_err("empty element in interaction");
            }
            elements.push(self.element()?);
        }
        let mut constrained = false;
        if self.eat_sym('*') {
            match self.next() {
                Some(Tok::Num(v)) if v == 1.0 => constrained = true,
                other => return parse_err(format!("only `*1` constraints are supported, found {}", describe(other.as_ref()))),
            }
        }
        Ok(Component { elements, constrained })
    }

    fn element(&mut self) -> Result<Element> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Element::Constant(v)),
            Some(Tok::Ident(name)) => {
                if self.eat_sym('(') {
                    self.function(&name)
                } else if self.eat_sym('[') {
                    let target = match self.next() {
                        Some(Tok::Ident(s)) => s,
                        Some(Tok::Num(v)) if v.fract() == 0.0 && v >= 1.0 => {
                            self.expect_sym(']')?;
                            return self.bracket(&name, BracketArg::Index(v as usize));
                        }
                        Some(Tok::Sym('#')) => match self.next() {
                            Some(Tok::Num(v)) if v.fract() == 0.0 && v >= 1.0 => {
                                self.expect_sym(']')?;
                                return self.bracket(&name, BracketArg::Index(v as usize));
                            }
                            other => return parse_err(format!("expected submodel index, found {}", describe(other.as_ref()))),
                        },
                        other => return parse_err(format!("expected name inside `[]`, found {}", describe(other.as_ref()))),
                    };
                    self.expect_sym(']')?;
                    self.bracket(&name, BracketArg::Name(target))
                } else {
                    Ok(Element::Variable(name))
                }
            }
            other => parse_err(format!("expected an element, found {}", describe(other.as_ref()))),
        }
    }

    fn bracket(&self, head: &str, arg: BracketArg) -> Result<Element> {
        if let Some(kind) = LinkKind::from_tag(head) {
            let target = match arg {
                BracketArg::Name(n) => LinkTarget::Response(n),
                BracketArg::Index(i) => LinkTarget::Index(i),
            };
            return Ok(Element::Link { kind, target });
        }
        let is_re = head.len() > 1 && head.starts_with('M') && head[1..].chars().all(|c| c.is_ascii_digit());
        if !is_re {
            return parse_err(format!(
                "`{head}[...]`: random effects must be named M followed by a number; links are EV/dEV/d2EV/iEV/XB/dXB/d2XB/iXB"
            ));
        }
        match arg {
            BracketArg::Name(level) => Ok(Element::RandomEffect {
                name: head.to_string(),
                level,
            }),
            BracketArg::Index(_) => parse_err(format!("`{head}[...]` needs a level variable name")),
        }
    }

    fn function(&mut self, name: &str) -> Result<Element> {
        let args = self.args()?;
        match name {
            "rcs" => {
                let var = positional(&args, name)?;
                let mut cfg = RcsConfig {
                    var,
                    df: None,
                    knots: None,
                    orthog: false,
                    log: false,
                    event: false,
                };
                for (k, v) in args.iter().skip(1) {
                    match (k.as_deref(), v) {
                        (Some("df"), Arg::Nums(x)) if x.len() == 1 && x[0] >= 1.0 && x[0].fract() == 0.0 => {
                            cfg.df = Some(x[0] as usize)
                        }
                        (Some("knots"), Arg::Nums(x)) => cfg.knots = Some(x.clone()),
                        (Some("orthog"), Arg::Bool(b)) => cfg.orthog = *b,
                        (Some("log"), Arg::Bool(b)) => cfg.log = *b,
                        (Some("event"), Arg::Bool(b)) => cfg.event = *b,
                        _ => return parse_err(format!("rcs(): bad argument {}", show_arg(k, v))),
                    }
                }
                match (&cfg.df, &cfg.knots) {
                    (Some(_), Some(_)) => return parse_err("rcs(): give either df or knots, not both"),
                    (None, None) => return parse_err("rcs(): df or knots required"),
                    (None, Some(k)) if k.len() < 2 => return parse_err("rcs(): at least two knots required"),
                    _ => {}
                }
                Ok(Element::Rcs(cfg))
            }
            "fp" => {
                let var = positional(&args, name)?;
                let mut powers = None;
                for (k, v) in args.iter().skip(1) {
                    match (k.as_deref(), v) {
                        (Some("powers"), Arg::Nums(x)) => powers = Some(x.clone()),
                        _ => return parse_err(format!("fp(): bad argument {}", show_arg(k, v))),
                    }
                }
                let powers = match powers {
                    Some(p) if p.is_empty() => return parse_err("fp(): powers must not be empty"),
                    Some(p) if p.len() > 2 => return parse_err("fp(): at most two powers (order 1 or 2)"),
                    Some(p) => p,
                    None => return parse_err("fp(): powers required"),
                };
                Ok(Element::Fp(FpConfig { var, powers }))
            }
            "bhazard" | "exposure" => {
                if args.len() != 1 {
                    return parse_err(format!("{name}() takes exactly one variable"));
                }
                let var = positional(&args, name)?;
                Ok(if name == "bhazard" {
                    Element::Bhazard(var)
                } else {
                    Element::Exposure(var)
                })
            }
            "ap" => match args.as_slice() {
                [(None, Arg::Nums(x))] if x.len() == 1 && x[0] >= 1.0 && x[0].fract() == 0.0 => {
                    Ok(Element::Ancillary(x[0] as usize))
                }
                _ => parse_err("ap() takes one positive integer"),
            },
            _ => parse_err(format!("unknown function `{name}()`")),
        }
    }

    fn args(&mut self) -> Result<Vec<(Option<String>, Arg)>> {
        let mut out = Vec::new();
        if self.eat_sym(')') {
            return Ok(out);
        }
        loop {
            let key = match (self.peek().cloned(), self.toks.get(self.pos + 1)) {
                (Some(Tok::Ident(k)), Some(Tok::Sym('='))) => {
                    self.pos += 2;
                    Some(k)
                }
                _ => None,
            };
            out.push((key, self.arg_value()?));
            if self.eat_sym(')') {
                return Ok(out);
            }
            self.expect_sym(',')?;
        }
    }

    fn arg_value(&mut self) -> Result<Arg> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Arg::Nums(vec![v])),
            Some(Tok::Ident(s)) if s == "c" && self.at_sym('(') => {
                self.pos += 1;
                let mut xs = Vec::new();
                if self.eat_sym(')') {
                    return Ok(Arg::Nums(xs));
                }
                loop {
                    match self.next() {
                        Some(Tok::Num(v)) => xs.push(v),
                        other => return parse_err(format!("expected a number in c(...), found {}", describe(other.as_ref()))),
                    }
                    if self.eat_sym(')') {
                        return Ok(Arg::Nums(xs));
                    }
                    self.expect_sym(',')?;
                }
            }
            Some(Tok::Ident(s)) => Ok(match s.as_str() {
                "TRUE" | "T" | "true" => Arg::Bool(true),
                "FALSE" | "F" | "false" => Arg::Bool(false),
                _ => Arg::Name(s),
            }),
            other => parse_err(format!("expected an argument, found {}", describe(other.as_ref()))),
        }
    }
}

enum BracketArg {
    Name(String),
    Index(usize),
}

#[derive(Debug, Clone)]
enum Arg {
    Nums(Vec<f64>),
    Bool(bool),
    Name(String),
}

fn show_arg(k: &Option<String>, v: &Arg) -> String {
    match k {
        Some(k) => format!("`{k} = {v:?}`"),
        None => format!("`{v:?}`"),
    }
}

fn positional(args: &[(Option<String>, Arg)], func: &str) -> Result<String> {
    match args.first() {
        Some((None, Arg::Name(n))) => Ok(n.clone()),
        _ => parse_err(format!("{func}(): first argument must be a variable name")),
    }
}

fn describe(t: Option<&Tok>) -> String {
    match t {
        None => "end of input".into(),
        Some(Tok::Ident(s)) => format!("`{s}`"),
        Some(Tok::Num(v)) => format!("`{v}`"),
        Some(Tok::Sym(c)) => format!("`{c}`"),
    }
}

/// Parses a single component such as `type:fp(stime, powers = c(0))`.
pub fn parse_component(text: &str) -> Result<Component> {
    let mut p = Parser::new(text)?;
    if p.done() {
        return parse_err("empty component");
    }
    let c = p.component()?;
    if !p.done() {
        return parse_err(format!("unexpected {} after component", describe(p.peek())));
    }
    Ok(c)
}

/// Parses `response ~ component + ...` into a submodel of the given family.
pub fn parse_model(text: &str, family: Family, options: &ParseOptions) -> Result<Submodel> {
    let mut p = Parser::new(text)?;
    let response = p.response()?;
    p.expect_sym('~')?;
    let mut sm = Submodel {
        response,
        components: Vec::new(),
        family,
        userf: options.userf.clone(),
        timevar: options.timevar.clone(),
        intercept: options.intercept,
        user_ancillaries: 0,
        bhazard: None,
        exposure: None,
        gl_points: options.gl_points,
    };
    // `y ~ 1` is an intercept-only model
    if matches!(p.toks.get(p.pos..), Some([Tok::Num(v)]) if *v == 1.0) {
        return Ok(sm);
    }
    loop {
        if p.done() || p.at_sym('+') {
            return parse_err("empty component");
        }
        let c = p.component()?;
        match c.elements.as_slice() {
            [Element::Ancillary(k)] => sm.user_ancillaries += k,
            [Element::Bhazard(v)] => sm.bhazard = Some(v.clone()),
            [Element::Exposure(v)] => sm.exposure = Some(v.clone()),
            els if els.iter().any(|e| matches!(e, Element::Ancillary(_) | Element::Bhazard(_) | Element::Exposure(_))) => {
                return parse_err("ap(), bhazard() and exposure() must stand alone as a term");
            }
            _ => {
                if c.constrained && !c.has_random_effect() && !c.has_link() {
                    log::warn!("component `{c}` is constrained to 1 but has no random effect or link");
                }
                sm.components.push(c);
            }
        }
        if p.done() {
            break;
        }
        p.expect_sym('+')?;
    }
    Ok(sm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::Order;

    fn gaussian(text: &str) -> Submodel {
        parse_model(text, Family::Gaussian, &ParseOptions::default()).unwrap()
    }

    #[test]
    fn linear_model_components() {
        let sm = gaussian("log.grad ~ sex + age + time");
        assert_eq!(sm.response, ResponseSpec::Scalar("log.grad".into()));
        let labels: Vec<String> = sm.components.iter().map(Component::label).collect();
        assert_eq!(labels, ["sex", "age", "time"]);
        assert!(sm.intercept);
        assert_eq!(sm.ancillary_labels(), ["log_sd(resid.)"]);
    }

    #[test]
    fn weibull_surv_response() {
        let sm = parse_model("Surv(stime, died) ~ age + type", Family::Weibull, &ParseOptions::default()).unwrap();
        assert_eq!(
            sm.response,
            ResponseSpec::Surv {
                time: "stime".into(),
                event: "died".into()
            }
        );
        assert_eq!(sm.components.len(), 2);
        assert_eq!(sm.ancillary_labels(), ["log(gamma)"]);
    }

    #[test]
    fn constrained_random_effects() {
        let sm = gaussian("log.grad ~ sex + age + rcs(time, df = 3, orthog = TRUE) + M1[id] * 1 + time:M2[id] * 1");
        let c3 = &sm.components[3];
        assert!(c3.constrained);
        assert_eq!(
            c3.elements,
            vec![Element::RandomEffect {
                name: "M1".into(),
                level: "id".into()
            }]
        );
        let c4 = &sm.components[4];
        assert!(c4.constrained);
        assert_eq!(c4.elements[0], Element::Variable("time".into()));
        assert!(matches!(&c4.elements[1], Element::RandomEffect { name, .. } if name == "M2"));
    }

    #[test]
    fn interaction_with_fp() {
        let c = parse_component("type:fp(stime, powers = c(0))").unwrap();
        assert_eq!(c.elements.len(), 2);
        assert_eq!(
            c.elements[1],
            Element::Fp(FpConfig {
                var: "stime".into(),
                powers: vec![0.0]
            })
        );
        assert_eq!(c.label(), "type:fp()");
    }

    #[test]
    fn ev_link_element() {
        let c = parse_component("EV[log.grad]").unwrap();
        match &c.elements[0] {
            Element::Link { kind, target } => {
                assert_eq!(*kind, LinkKind::Ev);
                assert_eq!(kind.order(), Order::Value);
                assert_eq!(*target, LinkTarget::Response("log.grad".into()));
            }
            other => panic!("{other:?}"),
        }
        let c = parse_component("dXB[2]").unwrap();
        assert!(matches!(&c.elements[0], Element::Link { kind: LinkKind::DXb, target: LinkTarget::Index(2) }));
    }

    #[test]
    fn rcs_orthog_element() {
        let c = parse_component("rcs(time, df = 3, orthog = TRUE)").unwrap();
        match &c.elements[0] {
            Element::Rcs(r) => {
                assert_eq!(r.df, Some(3));
                assert!(r.orthog && !r.log && !r.event);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors() {
        let o = ParseOptions::default();
        assert!(parse_model("y ~ foo(x)", Family::Gaussian, &o).is_err());
        assert!(parse_model("Surv(t) ~ x", Family::Weibull, &o).is_err());
        assert!(parse_model("Surv(t, d ~ x", Family::Weibull, &o).is_err());
        assert!(parse_model("y ~ fp(x, powers = c(1, 2, 3))", Family::Gaussian, &o).is_err());
        assert!(parse_model("y ~ x * 2", Family::Gaussian, &o).is_err());
        assert!(parse_model("y ~ x + ", Family::Gaussian, &o).is_err());
        assert!(parse_component("a::b").is_err());
        assert!(parse_component("").is_err());
        assert!(parse_component("rcs(x, df = 2, knots = c(1, 2))").is_err());
        assert!(parse_component("Z1[id]").is_err());
    }

    #[test]
    fn constrained_plain_variable_is_allowed() {
        let sm = gaussian("y ~ x * 1");
        assert!(sm.components[0].constrained);
    }

    #[test]
    fn user_ancillaries_and_offsets() {
        let sm = parse_model("log.grad ~ sex + age + time + ap(1)", Family::User, &ParseOptions::default()).unwrap();
        assert_eq!(sm.user_ancillaries, 1);
        assert_eq!(sm.components.len(), 3);
        assert_eq!(sm.ancillary_labels(), ["_ap1"]);
        let sm = parse_model("y ~ x + exposure(pt)", Family::Poisson, &ParseOptions::default()).unwrap();
        assert_eq!(sm.exposure.as_deref(), Some("pt"));
        let sm = parse_model("Surv(t, d) ~ x + bhazard(rate)", Family::Weibull, &ParseOptions::default()).unwrap();
        assert_eq!(sm.bhazard.as_deref(), Some("rate"));
    }

    #[test]
    fn whitespace_insensitive() {
        let a = gaussian("y~x:rcs(t,df=2,log=T)+M1[id]*1");
        let b = gaussian("  y ~ x : rcs( t , df = 2 , log = TRUE ) + M1 [ id ] * 1 ");
        assert_eq!(a, b);
    }
}
