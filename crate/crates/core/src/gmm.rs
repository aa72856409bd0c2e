//! Two-component 1-D Gaussian mixture fitted by EM.
//!
//! Component 0 is always the one with the smaller mean. Initialisation is
//! deterministic: means at the 10th/90th percentiles, equal weights, both
//! variances equal to the sample variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the per-sample mean log-likelihood improves by less than this.
    pub tol: f64,
    /// Absolute variance floor; `None` uses `1e-6 * sample variance`, at least `1e-12`.
    pub variance_floor: Option<f64>,
    /// Unused by the deterministic initialisation; kept so callers can thread
    /// one seed through every stage.
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            variance_floor: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm1D {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    pub variance_floor: f64,
    /// Total log-likelihood of the initial parameters followed by one entry
    /// per EM iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

#[derive(Clone, Copy)]
struct Params {
    weights: [f64; 2],
    means: [f64; 2],
    variances: [f64; 2],
}

impl Params {
    /// Per-component `log(pi_c) + log N(v; mu_c, var_c)`.
    fn log_joint(&self, v: f64) -> [f64; 2] {
        let f = |c: usize| {
            self.weights[c].ln()
                - 0.5 * (LN_2PI + self.variances[c].ln())
                - (v - self.means[c]).powi(2) / (2.0 * self.variances[c])
        };
        [f(0), f(1)]
    }

    fn log_likelihood(&self, sorted: &[f64]) -> f64 {
        sorted
            .iter()
            .map(|&v| {
                let [a, b] = self.log_joint(v);
                log_add(a, b)
            })
            .sum()
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn fit_em(values: &[f64], cfg: &EmConfig) -> Result<Gmm1D> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite value at index {i}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let distinct = sorted.windows(2).any(|w| w[0] != w[1]);
    if !distinct {
        return Err(Error::Degenerate(format!(
            "GMM fit needs at least 2 distinct values, got {} sample(s) of one value",
            values.len()
        )));
    }
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let floor = cfg
        .variance_floor
        .unwrap_or((1e-6 * var).max(1e-12))
        .max(f64::MIN_POSITIVE);

    let (mut lo, mut hi) = (percentile(&sorted, 0.1), percentile(&sorted, 0.9));
    if lo == hi {
        lo = sorted[0];
        hi = sorted[sorted.len() - 1];
    }
    let mut params = Params {
        weights: [0.5, 0.5],
        means: [lo, hi],
        variances: [var.max(floor); 2],
    };

    let mut trace = vec![params.log_likelihood(&sorted)];
    let mut converged = false;
    let mut resp = vec![0.0; sorted.len()];
    for _ in 0..cfg.max_iters {
        // E-step: responsibility of component 0.
        for (r, &v) in resp.iter_mut().zip(&sorted) {
            let [a, b] = params.log_joint(v);
            *r = 1.0 / (1.0 + (b - a).exp());
        }
        // M-step.
        let n0: f64 = resp.iter().sum();
        let n1 = n - n0;
        let mut next = params;
        next.weights = [n0 / n, n1 / n];
        if n0 > 0.0 {
            next.means[0] = resp.iter().zip(&sorted).map(|(r, v)| r * v).sum::<f64>() / n0;
            next.variances[0] = (resp
                .iter()
                .zip(&sorted)
                .map(|(r, v)| r * (v - next.means[0]).powi(2))
                .sum::<f64>()
                / n0)
                .max(floor);
        }
        if n1 > 0.0 {
            next.means[1] = resp
                .iter()
                .zip(&sorted)
                .map(|(r, v)| (1.0 - r) * v)
                .sum::<f64>()
                / n1;
            next.variances[1] = (resp
                .iter()
                .zip(&sorted)
                .map(|(r, v)| (1.0 - r) * (v - next.means[1]).powi(2))
                .sum::<f64>()
                / n1)
                .max(floor);
        }
        params = next;
        let ll = params.log_likelihood(&sorted);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(ll);
        if (ll - prev) / n < cfg.tol {
            converged = true;
            break;
        }
    }

    if params.means[0] > params.means[1] {
        params.weights.swap(0, 1);
        params.means.swap(0, 1);
        params.variances.swap(0, 1);
    }
    Ok(Gmm1D {
        weights: params.weights,
        means: params.means,
        variances: params.variances,
        variance_floor: floor,
        log_likelihood: trace,
        converged,
    })
}

impl Gmm1D {
    fn params(&self) -> Params {
        Params {
            weights: self.weights,
            means: self.means,
            variances: self.variances,
        }
    }

    /// Posterior probability that `v` came from the small-mean component.
    pub fn posterior_small(&self, v: f64) -> f64 {
        let [a, b] = self.params().log_joint(v);
        if a == f64::NEG_INFINITY {
            return 0.0;
        }
        1.0 / (1.0 + (b - a).exp())
    }

    pub fn iterations(&self) -> usize {
        self.log_likelihood.len() - 1
    }

    pub fn std_devs(&self) -> [f64; 2] {
        [self.variances[0].sqrt(), self.variances[1].sqrt()]
    }
}

/// Small-component posterior for each value.
pub fn posterior_small(model: &Gmm1D, values: &[f64]) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v.is_finite() {
                Ok(model.posterior_small(v))
            } else {
                Err(Error::Validation(format!("non-finite value at index {i}")))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn draws(rng: &mut ChaCha8Rng, n: usize, mean: f64, sd: f64) -> Vec<f64> {
        let d = Normal::new(mean, sd).unwrap();
        (0..n).map(|_| d.sample(rng)).collect()
    }

    fn model(w: [f64; 2], m: [f64; 2], v: [f64; 2]) -> Gmm1D {
        Gmm1D {
            weights: w,
            means: m,
            variances: v,
            variance_floor: 1e-12,
            log_likelihood: vec![0.0],
            converged: true,
        }
    }

    #[test]
    fn recovers_well_separated_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut v = draws(&mut rng, 5000, 0.0, 1.0);
        v.extend(draws(&mut rng, 5000, 10.0, 1.0));
        let g = fit_em(&v, &EmConfig::default()).unwrap();
        assert!((g.means[0] - 0.0).abs() < 0.1, "{:?}", g.means);
        assert!((g.means[1] - 10.0).abs() < 0.1, "{:?}", g.means);
        assert!((g.weights[0] - 0.5).abs() < 0.03);
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_input_is_degenerate() {
        assert!(matches!(
            fit_em(&[3.0; 10], &EmConfig::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(fit_em(&[1.0], &EmConfig::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn single_cluster_gives_finite_posteriors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = draws(&mut rng, 2000, 0.0, 1.0);
        let g = fit_em(&v, &EmConfig::default()).unwrap();
        for p in posterior_small(&g, &v).unwrap() {
            assert!((0.0..=1.0).contains(&p));
        }
        for x in [-1e3, -5.0, 0.0, 5.0, 1e3] {
            assert!(g.posterior_small(x).is_finite());
        }
    }

    #[test]
    fn posterior_at_small_mean_far_apart() {
        let g = model([0.5, 0.5], [0.0, 10.0], [1.0, 1.0]);
        // closed form: 1 / (1 + exp(-50))
        assert!(g.posterior_small(0.0) > 0.999);
        assert!((g.posterior_small(0.0) - 1.0 / (1.0 + (-50.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn posterior_at_symmetric_midpoint_is_half() {
        let g = model([0.5, 0.5], [-2.0, 2.0], [1.5, 1.5]);
        assert_eq!(g.posterior_small(0.0), 0.5);
    }

    #[test]
    fn posterior_vanishes_in_right_tail() {
        let g = model([0.5, 0.5], [0.0, 10.0], [1.0, 1.0]);
        assert!(g.posterior_small(60.0) < 1e-6);
    }

    #[test]
    fn variance_floor_prevents_collapse() {
        let mut v = vec![0.0; 500];
        v.extend([1.0, 2.0, 3.0]);
        let g = fit_em(&v, &EmConfig::default()).unwrap();
        assert!(g.variances.iter().all(|&s| s >= g.variance_floor));
        assert!(g.log_likelihood.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn rejects_non_finite_values() {
        assert!(fit_em(&[0.0, f64::NAN, 1.0], &EmConfig::default()).is_err());
        let g = model([0.5, 0.5], [0.0, 1.0], [1.0, 1.0]);
        assert!(posterior_small(&g, &[f64::INFINITY]).is_err());
    }
}
