use sivism::metrics::{test_loglik, GlmKind, SampleSet};
use sivism::targets::GlmDataset;
use statrs::distribution::{ContinuousCDF, Normal};

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Composite Simpson rule for `E[sigmoid(beta)]`, `beta ~ N(mu, s^2)`.
fn predictive_by_quadrature(mu: f64, s: f64) -> f64 {
    let n = 20_000;
    let (a, b) = (mu - 12.0 * s, mu + 12.0 * s);
    let h = (b - a) / n as f64;
    let f = |x: f64| {
        let u = (x - mu) / s;
        sigmoid(x) * (-0.5 * u * u).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    };
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn intercept_model_matches_quadrature() {
    // no covariates: the parameter is the intercept alone
    let labels = vec![1, 1, 0, 1, 0, 1, 1, 0, 1, 1];
    let data = GlmDataset::new(&[], 0, labels.clone()).unwrap();
    for (mu, s) in [(0.3, 0.5), (-1.2, 1.5), (2.0, 0.2)] {
        // 8,000 draws placed at normal quantiles
        let normal = Normal::new(mu, s).unwrap();
        let draws: Vec<f64> = (0..8_000).map(|i| normal.inverse_cdf((i as f64 + 0.5) / 8_000.0)).collect();
        let set = SampleSet::new(draws, 1, "quantiles", 0).unwrap();
        let got = test_loglik(&set, &data, GlmKind::Logistic).unwrap();
        let p1 = predictive_by_quadrature(mu, s);
        let ones = labels.iter().filter(|&&y| y == 1).count() as f64;
        let want = (ones * p1.ln() + (labels.len() as f64 - ones) * (1.0 - p1).ln()) / labels.len() as f64;
        assert!((got - want).abs() < 1e-3, "mu {mu} s {s}: {got} vs {want}");
    }
}

#[test]
fn predictive_average_sits_inside_the_log() {
    // two parameter samples with opposite predictions: log of the average,
    // not the average of logs
    let data = GlmDataset::new(&[1.0], 1, vec![1]).unwrap();
    let set = SampleSet::new(vec![0.0, 3.0, 0.0, -3.0], 2, "pair", 0).unwrap();
    let got = test_loglik(&set, &data, GlmKind::Logistic).unwrap();
    let want = (0.5 * (sigmoid(3.0) + sigmoid(-3.0))).ln();
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn multinomial_intercepts_match_softmax() {
    let data = GlmDataset::new(&[], 0, vec![1, 2, 3, 3]).unwrap();
    let beta = [0.5, -0.2, 1.0];
    let set = SampleSet::new(beta.to_vec(), 3, "one", 0).unwrap();
    let got = test_loglik(&set, &data, GlmKind::Multinomial { classes: 3 }).unwrap();
    let z: f64 = beta.iter().map(|b| b.exp()).sum();
    let lp = |k: usize| beta[k] - z.ln();
    let want = (lp(0) + lp(1) + 2.0 * lp(2)) / 4.0;
    assert!((got - want).abs() < 1e-12);
}
