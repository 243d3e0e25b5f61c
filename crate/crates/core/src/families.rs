//! Per-observation log-likelihood kernels and the hazard calculus of the
//! survival families.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

use crate::dataset::Response;
use crate::error::{eval_err, Error, Result};
use crate::extension::UserFamilyContext;
use crate::integration::integrate_graded;
use crate::predictor::{Eval, MeanLink};
use crate::spec::Family;

fn survival_only(ev: &Eval, m: usize) -> Result<Family> {
    let fam = ev.model.submodels[m].family;
    if fam.is_survival() {
        Ok(fam)
    } else {
        Err(Error::Eval(format!("hazard functions are only defined for survival families, not {fam}")))
    }
}

/// `log h(t)` of the modelled (excess) hazard. For `rp` this is `-inf` when
/// the log cumulative hazard is not increasing at `t`.
pub fn log_hazard(ev: &Eval, m: usize, row: usize, t: f64) -> Result<f64> {
    let fam = survival_only(ev, m)?;
    if !(t > 0.0) {
        return eval_err(format!("hazard needs t > 0, got {t}"));
    }
    Ok(match fam {
        Family::Exponential | Family::LogHazard => ev.eta(m, row, t, 0)?.v,
        Family::Weibull => {
            let lg = ev.ancillary(m, 0);
            ev.eta(m, row, t, 0)?.v + lg + (lg.exp() - 1.0) * t.ln()
        }
        Family::Gompertz => ev.eta(m, row, t, 0)?.v + ev.ancillary(m, 0) * t,
        Family::Rp => {
            let j = ev.eta(m, row, t, 1)?;
            if j.d1 > 0.0 {
                j.d1.ln() + j.v
            } else {
                f64::NEG_INFINITY
            }
        }
        _ => unreachable!(),
    })
}

pub fn hazard(ev: &Eval, m: usize, row: usize, t: f64) -> Result<f64> {
    if ev.model.submodels[m].family == Family::Rp {
        // keep the sign so that a non-monotone fit is visible in predictions
        let j = ev.eta(m, row, t, 1)?;
        return Ok(j.d1 * j.v.exp());
    }
    Ok(log_hazard(ev, m, row, t)?.exp())
}

/// `H(t) = int_0^t h(u) du`, analytic where the predictor is constant in time.
pub fn cumhazard(ev: &Eval, m: usize, row: usize, t: f64) -> Result<f64> {
    let fam = survival_only(ev, m)?;
    if !(t >= 0.0) {
        return eval_err(format!("cumulative hazard needs t >= 0, got {t}"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let sm = &ev.model.submodels[m];
    if fam == Family::Rp {
        return Ok(ev.eta(m, row, t, 0)?.v.exp());
    }
    if !sm.time_dependent && fam != Family::LogHazard {
        let e = ev.eta(m, row, t, 0)?.v.exp();
        return Ok(match fam {
            Family::Exponential => e * t,
            Family::Weibull => e * t.powf(ev.ancillary(m, 0).exp()),
            Family::Gompertz => {
                let g = ev.ancillary(m, 0);
                if g.abs() < 1e-12 {
                    e * t
                } else {
                    e * (g * t).exp_m1() / g
                }
            }
            _ => unreachable!(),
        });
    }
    integrate_graded(sm.gl_points, t, |u| hazard(ev, m, row, u))
}

pub fn survival(ev: &Eval, m: usize, row: usize, t: f64) -> Result<f64> {
    Ok((-cumhazard(ev, m, row, t)?).exp())
}

/// Expected response `g^{-1}(eta(t))`.
pub fn mean_response(ev: &Eval, m: usize, row: usize, t: f64) -> Result<f64> {
    ev.expval(m, row, t, crate::spec::Order::Value)
}

/// Log-likelihood contribution of submodel `m` on `row`.
pub fn loglik_obs(ev: &Eval, m: usize, row: usize) -> Result<f64> {
    let sm = &ev.model.submodels[m];
    let fam = sm.family;
    if fam == Family::Null {
        return Ok(0.0);
    }
    if fam == Family::User {
        let f = sm.userf.as_ref().expect("user family without function");
        return f(&UserFamilyContext::new(ev, m, row));
    }
    let resp = match sm.response(row) {
        Some(r) => r,
        None => return eval_err(format!("row {} has no response for submodel {}", row + 1, m + 1)),
    };
    if let Response::TimeEvent { time, event } = resp {
        let mut ll = -cumhazard(ev, m, row, time)?;
        if event {
            let lh = log_hazard(ev, m, row, time)?;
            ll += match &sm.bhazard {
                Some(b) => (b[row] + lh.exp()).ln(),
                None => lh,
            };
        }
        return Ok(ll);
    }
    let Response::Scalar(y) = resp else { unreachable!() };
    let t = ev.default_time(m, row);
    let eta = ev.eta(m, row, t, 0)?.v;
    Ok(match fam {
        Family::Gaussian => gaussian_logpdf(y, eta, ev.ancillary(m, 0)),
        Family::Bernoulli => {
            // y*eta - log(1 + e^eta), stable in both tails
            let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            y * eta - softplus
        }
        Family::Poisson => y * eta - eta.exp() - ln_gamma(y + 1.0),
        Family::NegBinomial => {
            let alpha = ev.ancillary(m, 0).exp();
            let mu = eta.exp();
            let r = 1.0 / alpha;
            let lp = (alpha * mu).ln_1p();
            ln_gamma(y + r) - ln_gamma(r) - ln_gamma(y + 1.0) - r * lp + y * (eta + alpha.ln() - lp)
        }
        Family::Beta => {
            let phi = ev.ancillary(m, 0).exp();
            let mu = MeanLink::Logistic.apply(eta);
            let (a, b) = (mu * phi, (1.0 - mu) * phi);
            ln_gamma(phi) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * y.ln() + (b - 1.0) * (1.0 - y).ln()
        }
        _ => unreachable!("survival families handled above"),
    })
}

/// Normal log-density with standard deviation `exp(log_sd)`.
pub fn gaussian_logpdf(y: f64, mu: f64, log_sd: f64) -> f64 {
    let se = log_sd.exp();
    -0.5 * (2.0 * PI).ln() - se.ln() - (y - mu).powi(2) / (2.0 * se * se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use crate::extension::UserRegistry;
    use crate::integration::integrate_0_t;
    use crate::model::Model;
    use crate::spec::parse_spec_file;
    use approx::assert_abs_diff_eq;

    fn data() -> Dataset {
        Dataset::from_columns(vec![
            ("id".into(), vec![Some(1.0), Some(2.0), Some(3.0)]),
            ("age".into(), vec![Some(75.06027), Some(50.0), Some(60.0)]),
            ("type".into(), vec![Some(1.0), Some(0.0), Some(1.0)]),
            ("stime".into(), vec![Some(4.956164), Some(2.0), Some(6.0)]),
            ("died".into(), vec![Some(0.0), Some(1.0), Some(1.0)]),
            ("y".into(), vec![Some(1.0), Some(0.0), Some(4.0)]),
            ("p".into(), vec![Some(0.3), Some(0.5), Some(0.8)]),
        ])
        .unwrap()
    }

    fn model(text: &str) -> Model {
        Model::new(&parse_spec_file(text).unwrap(), data(), &UserRegistry::new()).unwrap()
    }

    #[test]
    fn gaussian_at_mean() {
        assert_abs_diff_eq!(gaussian_logpdf(0.0, 0.0, 0.0), -0.9189385332046727, epsilon = 1e-15);
        let m = model("gaussian : y ~ 1");
        let theta = [1.0, 0.0];
        assert_abs_diff_eq!(loglik_obs(&Eval::new(&m, &theta, &[]), 0, 0).unwrap(), -0.9189385, epsilon = 1e-7);
    }

    #[test]
    fn bernoulli_at_zero() {
        let m = model("bernoulli : died ~ 1");
        let theta = [0.0];
        let ev = Eval::new(&m, &theta, &[]);
        assert_abs_diff_eq!(loglik_obs(&ev, 0, 1).unwrap(), 0.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn weibull_survival_matches_fixture() {
        let m = model("weibull : Surv(stime, died) ~ age + type");
        let theta = [0.09731, 0.03834, -11.68669, 0.64107];
        let ev = Eval::new(&m, &theta, &[]);
        let s = survival(&ev, 0, 0, 4.956164).unwrap();
        assert_abs_diff_eq!(s, 0.7625097, epsilon = 1e-3);
        // hazard ratio between type 1 and 0 at equal age
        let hr = (0.03834f64).exp();
        assert_abs_diff_eq!(hr, 1.039, epsilon = 1e-3);
    }

    #[test]
    fn means_of_count_and_proportion_families() {
        let m = model("poisson : y ~ 1\nbeta : p ~ 1");
        let theta = [4f64.ln(), 0.0, 0.0];
        let ev = Eval::new(&m, &theta, &[]);
        assert_abs_diff_eq!(mean_response(&ev, 0, 0, 1.0).unwrap(), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mean_response(&ev, 1, 0, 1.0).unwrap(), 0.5, epsilon = 1e-12);
        assert!(mean_response(&Eval::new(&model("weibull : Surv(stime, died) ~ 1"), &[0.0, 0.0], &[]), 0, 0, 1.0).is_err());
    }

    #[test]
    fn exponential_closed_form() {
        let m = model("exponential : Surv(stime, died) ~ 1");
        let lambda: f64 = 0.3;
        let theta = [lambda.ln()];
        let ev = Eval::new(&m, &theta, &[]);
        for t in [0.5, 2.0, 9.0] {
            assert_abs_diff_eq!(hazard(&ev, 0, 0, t).unwrap(), lambda, epsilon = 1e-14);
            assert_abs_diff_eq!(survival(&ev, 0, 0, t).unwrap(), (-lambda * t).exp(), epsilon = 1e-14);
        }
        assert!(hazard(&Eval::new(&model("gaussian : y ~ 1"), &[0.0, 0.0], &[]), 0, 0, 1.0).is_err());
    }

    #[test]
    fn count_and_proportion_densities() {
        let m = model("poisson : y ~ 1\nnegbinomial : y ~ 1\nbeta : p ~ 1");
        let theta = [0.7, 0.7, -1.0, 0.2, 1.5];
        let ev = Eval::new(&m, &theta, &[]);
        let mu = 0.7f64.exp();
        let y = 4.0;
        let pois = y * mu.ln() - mu - (24f64).ln();
        assert_abs_diff_eq!(loglik_obs(&ev, 0, 2).unwrap(), pois, epsilon = 1e-12);
        // NB2 pmf by its product form
        let a = (-1f64).exp();
        let r = 1.0 / a;
        let p = r / (r + mu);
        let coef: f64 = (0..4).map(|k| (r + k as f64).ln()).sum::<f64>() - 24f64.ln();
        let nb = coef + r * p.ln() + y * (1.0 - p).ln();
        assert_abs_diff_eq!(loglik_obs(&ev, 1, 2).unwrap(), nb, epsilon = 1e-10);
        // beta density at 0.8
        let mu = logistic(0.2);
        let phi = 1.5f64.exp();
        let dens = statrs::distribution::Beta::new(mu * phi, (1.0 - mu) * phi).unwrap();
        use statrs::distribution::Continuous;
        assert_abs_diff_eq!(loglik_obs(&ev, 2, 2).unwrap(), dens.ln_pdf(0.8), epsilon = 1e-10);
    }

    use crate::predictor::logistic;

    #[test]
    fn cumhazard_matches_integrated_hazard() {
        let specs = [
            ("weibull : Surv(stime, died) ~ age + type", vec![0.05, 0.3, -4.0, 0.4]),
            ("gompertz : Surv(stime, died) ~ type", vec![0.3, -2.0, 0.2]),
            (
                "weibull : Surv(stime, died) ~ type + type:fp(stime, powers = c(0)) | timevar=stime",
                vec![0.3, -0.2, -2.0, -0.3],
            ),
            ("loghazard : Surv(stime, died) ~ type + fp(stime, powers = c(1)) | timevar=stime", vec![0.3, 0.1, -2.0]),
            (
                "rp : Surv(stime, died) ~ type + rcs(stime, df = 2, log = TRUE) | timevar=stime",
                vec![0.2, 1.1, 0.05, -1.5],
            ),
        ];
        for (text, theta) in specs {
            let m = model(text);
            let ev = Eval::new(&m, &theta, &[]);
            for t in [0.5, 2.0, 5.0] {
                let h = cumhazard(&ev, 0, 0, t).unwrap();
                let num = graded_oracle(|u| hazard(&ev, 0, 0, u).unwrap(), t);
                assert!((h - num).abs() <= 1e-6 * h.abs().max(1e-12), "{text} t={t}: {h} vs {num}");
            }
        }
    }

    /// Geometric panels [t 2^-(k+1), t 2^-k], 20-point rule on each.
    fn graded_oracle(f: impl Fn(f64) -> f64, t: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..80 {
            let (a, b) = (t * 0.5f64.powi(k + 1), t * 0.5f64.powi(k));
            acc += integrate_0_t(20, b - a, |u| Ok(f(a + u))).unwrap();
        }
        acc
    }

    #[test]
    fn log_time_effect_is_integrated_accurately() {
        // h = e^c t^b gamma t^(gamma-1), so H = e^c gamma t^(gamma+b) / (gamma+b)
        let (b, c, lg) = (-0.2f64, -1.7f64, -0.3f64);
        let g = lg.exp();
        let exact = c.exp() * g * 2f64.powf(g + b) / (g + b);
        for gl in [15, 30, 60] {
            let text = format!("weibull : Surv(stime, died) ~ type:fp(stime, powers = c(0)) | timevar=stime gl={gl}");
            let m = model(&text);
            let theta = [b, c, lg];
            let err = (cumhazard(&Eval::new(&m, &theta, &[]), 0, 2, 2.0).unwrap() - exact).abs() / exact;
            assert!(err < 1e-6, "gl={gl}: {err}");
        }
    }

    #[test]
    fn rp_hazard_is_derivative_of_cumhazard() {
        let m = model("rp : Surv(stime, died) ~ type + rcs(stime, df = 2, log = TRUE) | timevar=stime");
        let theta = [0.2, 1.1, 0.05, -1.5];
        let ev = Eval::new(&m, &theta, &[]);
        for k in 1..=100 {
            let t = 0.06 * k as f64;
            let h = 1e-6 * t;
            let fd = (cumhazard(&ev, 0, 0, t + h).unwrap() - cumhazard(&ev, 0, 0, t - h).unwrap()) / (2.0 * h);
            let an = hazard(&ev, 0, 0, t).unwrap();
            assert!((fd - an).abs() <= 1e-5 * an.abs(), "t={t}: {fd} vs {an}");
        }
    }

    #[test]
    fn censored_contribution_is_minus_cumhazard() {
        let m = model("weibull : Surv(stime, died) ~ age");
        let theta = [0.02, -3.0, 0.3];
        let ev = Eval::new(&m, &theta, &[]);
        assert_eq!(loglik_obs(&ev, 0, 0).unwrap(), -cumhazard(&ev, 0, 0, 4.956164).unwrap());
        assert!(cumhazard(&ev, 0, 0, 1e-12).unwrap() < 1e-10);
    }

    #[test]
    fn rp_non_monotone_is_rejectable() {
        let m = model("rp : Surv(stime, died) ~ rcs(stime, df = 1, log = TRUE) | timevar=stime");
        let theta = [-1.0, 0.0];
        let ev = Eval::new(&m, &theta, &[]);
        assert_eq!(loglik_obs(&ev, 0, 1).unwrap(), f64::NEG_INFINITY);
    }
}
