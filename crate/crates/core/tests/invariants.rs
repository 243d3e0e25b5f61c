mod common;

use jointlik::dataset::Dataset;
use jointlik::estimation::{FitResult, Likelihood};
use jointlik::extension::UserRegistry;
use jointlik::model::Model;
use jointlik::prediction::{predict, PredictRequest, Statistic};
use jointlik::spec::parse_spec_file;
use proptest::prelude::*;

fn permuted(data: &Dataset, order: &[usize]) -> Dataset {
    let cols = data
        .names()
        .iter()
        .map(|name| {
            let c = data.column(name).unwrap();
            (name.clone(), order.iter().map(|&i| c.get(i)).collect())
        })
        .collect();
    Dataset::from_columns(cols).unwrap()
}

fn loglik(spec: &str, data: Dataset, theta: &[f64]) -> f64 {
    let spec = parse_spec_file(spec).unwrap();
    let model = Model::new(&spec, data, &UserRegistry::new()).unwrap();
    Likelihood::new(&model, 3, Some(1)).unwrap().total(theta).unwrap()
}

const JOINT: &str = "levels = id\nip = 5\n\
    weibull : Surv(stime, died) ~ trt + M1[id] | timevar=stime\n\
    gaussian : y ~ time + M1[id] * 1 | timevar=time";

/// A fit file at arbitrary parameter values, enough for prediction.
fn fit_at(spec_text: &str, data: &Dataset, theta: Vec<f64>) -> FitResult {
    let spec = parse_spec_file(spec_text).unwrap();
    let model = Model::new(&spec, data.clone(), &UserRegistry::new()).unwrap();
    let mut fit = jointlik::estimation::fit(&spec, data.clone(), &UserRegistry::new(), &jointlik::estimation::Controls {
        max_iter: 0,
        ..Default::default()
    })
    .unwrap_or_else(|e| match e {
        jointlik::Error::NotConverged { best, .. } => *best,
        e => panic!("{e}"),
    });
    assert_eq!(theta.len(), model.n_params());
    fit.estimates = theta;
    fit
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn likelihood_ignores_row_order(seed in 0u64..1000, shift in 1usize..50) {
        let data = common::shared_intercept(&mut common::rng(seed), 25, 0.8, 0.5, 0.4);
        let n = data.n_rows();
        let mut order: Vec<usize> = (0..n).map(|i| (i * 7 + shift) % n).collect();
        if n % 7 == 0 {
            order = (0..n).rev().collect();
        }
        let theta = [0.4, 0.7, -2.0, 0.1, 0.2, 1.0, -1.0, -0.6];
        let a = loglik(JOINT, data.clone(), &theta);
        let b = loglik(JOINT, permuted(&data, &order), &theta);
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn survival_is_exp_minus_chazard_and_cif_grows(b in -1.0f64..1.0, cons in -3.0f64..-1.0, lg in -0.5f64..0.5) {
        let data = common::weibull_ph(&mut common::rng(1), 30, 0.1, 1.5, 0.5, 12.0);
        let spec = "weibull : Surv(stime, died) ~ trt";
        let fit = fit_at(spec, &data, vec![b, cons, lg]);
        let times: Vec<f64> = (1..=12).map(|i| 0.7 * i as f64).collect();
        let run = |stat| {
            let mut req = PredictRequest::new(stat);
            req.times = Some(times.clone());
            predict(&fit, &data, &UserRegistry::new(), &req).unwrap()
        };
        let (s, h, cif) = (run(Statistic::Survival), run(Statistic::Chazard), run(Statistic::Cif));
        for (x, y) in s.iter().zip(&h) {
            prop_assert!((x.value - (-y.value).exp()).abs() < 1e-14);
        }
        for w in cif.windows(2).filter(|w| w[0].row == w[1].row) {
            prop_assert!(w[1].value >= w[0].value);
        }
        // one cause: CIF = 1 - S
        for (c, x) in cif.iter().zip(&s) {
            prop_assert!((c.value + x.value - 1.0).abs() < 1e-9);
        }
    }
}
