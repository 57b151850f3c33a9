//! Change-point process and sensor observation models.
//!
//! The state of nature flips from 0 to 1 at a random slot `T` with
//! `P(T = 0) = rho` and, conditional on `T > 0`, `P(T = k) = p(1-p)^(k-1)`.
//! Observations are i.i.d. across sensors and sampling instants with density
//! `f0` before the change and `f1` after it. Detectors only ever consume
//! log-densities, so every observation family here must expose a log-density
//! that is finite at every finite point.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Parameter validation failure for the change or observation model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
}

/// Prior mass at zero and per-slot hazard of the geometric change time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeSpec {
    /// Probability that the change predates the first slot, `P(T = 0)`.
    pub rho: f64,
    /// Per-slot change hazard, `P(T = k | T >= k, T > 0)`.
    pub p: f64,
}

impl ChangeSpec {
    pub fn new(rho: f64, p: f64) -> Result<Self, ModelError> {
        let spec = Self { rho, p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "p must lie in (0, 1), got {}",
                self.p
            )));
        }
        Ok(())
    }
}

/// Draws a change slot: 0 with probability `rho`, otherwise geometric with
/// hazard `p` on `{1, 2, ...}`.
pub fn sample_change_time<R: Rng + ?Sized>(spec: &ChangeSpec, rng: &mut R) -> u64 {
    if spec.rho > 0.0 && rng.random::<f64>() < spec.rho {
        return 0;
    }
    // Inverse transform for the geometric tail: the smallest k >= 1 with
    // 1 - (1-p)^k > u.
    let u: f64 = rng.random();
    let k = ((1.0 - u).ln() / (1.0 - spec.p).ln()).floor();
    k as u64 + 1
}

/// Probability that the state of nature flips across one sampling period of
/// `period` slots: `1 - (1-p)^period`.
pub fn batch_change_prob(p: f64, period: u32) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0 && period >= 1);
    -f64::exp_m1(f64::from(period) * f64::ln_1p(-p))
}

/// One realized change trajectory; the indicator `theta_at` is nondecreasing
/// in the slot index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NatureTrajectory {
    pub change_time: u64,
}

impl NatureTrajectory {
    pub fn sample<R: Rng + ?Sized>(spec: &ChangeSpec, rng: &mut R) -> Self {
        Self {
            change_time: sample_change_time(spec, rng),
        }
    }

    /// State of nature at the beginning of `slot`: true once the change has
    /// happened, and forever after.
    pub fn theta_at(&self, slot: u64) -> bool {
        slot >= self.change_time
    }
}

/// Pre/post-change observation distribution pair.
///
/// Detectors are family-agnostic: they only call `log_likelihood` and
/// `sample`. Both families have log-densities that are finite at every
/// finite observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ObservationModel {
    Gaussian {
        pre_mean: f64,
        pre_var: f64,
        post_mean: f64,
        post_var: f64,
    },
    Laplace {
        pre_loc: f64,
        pre_scale: f64,
        post_loc: f64,
        post_scale: f64,
    },
}

impl ObservationModel {
    /// The standard pair used throughout the experiment suite:
    /// `f0 = N(0,1)`, `f1 = N(1,1)`.
    pub fn unit_gaussian_shift() -> Self {
        Self::Gaussian {
            pre_mean: 0.0,
            pre_var: 1.0,
            post_mean: 1.0,
            post_var: 1.0,
        }
    }

    /// A degenerate pair with `f0 = f1`; observations carry no information,
    /// which turns every posterior recursion into its prior-only closed form.
    pub fn uninformative() -> Self {
        Self::Gaussian {
            pre_mean: 0.0,
            pre_var: 1.0,
            post_mean: 0.0,
            post_var: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let check = |name: &str, v: f64, positive: bool| -> Result<(), ModelError> {
            if !v.is_finite() || (positive && v <= 0.0) {
                return Err(ModelError::InvalidParameter(format!(
                    "{name} must be finite{}, got {v}",
                    if positive { " and > 0" } else { "" }
                )));
            }
            Ok(())
        };
        match *self {
            Self::Gaussian {
                pre_mean,
                pre_var,
                post_mean,
                post_var,
            } => {
                check("pre_mean", pre_mean, false)?;
                check("post_mean", post_mean, false)?;
                check("pre_var", pre_var, true)?;
                check("post_var", post_var, true)?;
            }
            Self::Laplace {
                pre_loc,
                pre_scale,
                post_loc,
                post_scale,
            } => {
                check("pre_loc", pre_loc, false)?;
                check("post_loc", post_loc, false)?;
                check("pre_scale", pre_scale, true)?;
                check("post_scale", post_scale, true)?;
            }
        }
        Ok(())
    }

    fn params(&self, changed: bool) -> (f64, f64) {
        match *self {
            Self::Gaussian {
                pre_mean,
                pre_var,
                post_mean,
                post_var,
            } => {
                if changed {
                    (post_mean, post_var)
                } else {
                    (pre_mean, pre_var)
                }
            }
            Self::Laplace {
                pre_loc,
                pre_scale,
                post_loc,
                post_scale,
            } => {
                if changed {
                    (post_loc, post_scale)
                } else {
                    (pre_loc, pre_scale)
                }
            }
        }
    }

    /// `log f1(x)` when `changed`, else `log f0(x)`.
    pub fn log_likelihood(&self, changed: bool, x: f64) -> f64 {
        match self {
            Self::Gaussian { .. } => {
                let (mean, var) = self.params(changed);
                let d = x - mean;
                -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
            }
            Self::Laplace { .. } => {
                let (loc, scale) = self.params(changed);
                -(2.0 * scale).ln() - (x - loc).abs() / scale
            }
        }
    }

    /// `log f1(x) - log f0(x)`.
    pub fn log_likelihood_ratio(&self, x: f64) -> f64 {
        self.log_likelihood(true, x) - self.log_likelihood(false, x)
    }

    /// Draws one observation under the pre- or post-change density.
    pub fn sample<R: Rng + ?Sized>(&self, changed: bool, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian { .. } => {
                let (mean, var) = self.params(changed);
                Normal::new(mean, var.sqrt()).expect("validated variance").sample(rng)
            }
            Self::Laplace { .. } => {
                let (loc, scale) = self.params(changed);
                let u: f64 = rng.random::<f64>() - 0.5;
                // Inverse CDF; the max() keeps the log finite at u = -0.5.
                let t = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
                loc - scale * u.signum() * t.ln()
            }
        }
    }

    /// Kullback-Leibler divergence `I(f1, f0) = ∫ f1 log(f1/f0)`.
    pub fn kl_divergence(&self) -> f64 {
        match *self {
            Self::Gaussian {
                pre_mean,
                pre_var,
                post_mean,
                post_var,
            } => {
                let dm = post_mean - pre_mean;
                0.5 * ((pre_var / post_var).ln() + (post_var + dm * dm) / pre_var - 1.0)
            }
            Self::Laplace {
                pre_loc,
                pre_scale,
                post_loc,
                post_scale,
            } => {
                let dm = (post_loc - pre_loc).abs();
                (pre_scale / post_scale).ln()
                    + (post_scale * (-dm / post_scale).exp() + dm) / pre_scale
                    - 1.0
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn change_spec_validation() {
        assert!(ChangeSpec::new(0.0, 0.5).is_ok());
        assert!(ChangeSpec::new(1.0, 0.5).is_err());
        assert!(ChangeSpec::new(0.0, 0.0).is_err());
        assert!(ChangeSpec::new(0.0, 1.0).is_err());
        assert!(ChangeSpec::new(-0.1, 0.5).is_err());
    }

    #[test]
    fn change_time_all_prior_mass_gives_zero() {
        // rho = 1 is outside the validated domain but the sampler must still
        // honor full prior mass at zero when driven directly.
        let spec = ChangeSpec { rho: 1.0 - 1e-15, p: 0.5 };
        let mut r = rng(1);
        for _ in 0..1000 {
            assert_eq!(sample_change_time(&spec, &mut r), 0);
        }
    }

    #[test]
    fn change_time_mean_matches_geometric() {
        // p = 0.0005 gives a mean change time of 2000 slots.
        let spec = ChangeSpec::new(0.0, 0.0005).unwrap();
        let mut r = rng(2);
        let n = 1_000_000u64;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_change_time(&spec, &mut r) as f64;
        }
        let mean = sum / n as f64;
        // std of Geometric(p) is ~2000, so the mean of 1e6 draws has se ~2.
        assert!(
            (mean - 2000.0).abs() < 8.0,
            "empirical mean {mean} too far from 2000"
        );
    }

    #[test]
    fn change_time_pmf_goodness_of_fit() {
        // Chi-square test against the closed-form pmf on bins {1..10, tail}.
        let p = 0.5;
        let spec = ChangeSpec::new(0.0, p).unwrap();
        let mut r = rng(3);
        let n = 100_000usize;
        let mut counts = [0u64; 11];
        for _ in 0..n {
            let t = sample_change_time(&spec, &mut r);
            assert!(t >= 1);
            let bin = (t as usize - 1).min(10);
            counts[bin] += 1;
        }
        let mut chi2 = 0.0;
        for (bin, &c) in counts.iter().enumerate() {
            let prob = if bin < 10 {
                p * (1.0 - p).powi(bin as i32)
            } else {
                (1.0 - p).powi(10)
            };
            let expected = prob * n as f64;
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        // 1% critical value of chi-square with 10 degrees of freedom.
        assert!(chi2 < 23.209, "chi2 = {chi2} rejects the geometric pmf");
        // Spot checks quoted in the operation contract.
        assert!((counts[0] as f64 / n as f64 - 0.5).abs() < 0.01);
        assert!((counts[1] as f64 / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn batch_change_prob_examples() {
        assert_eq!(batch_change_prob(0.37, 1), 0.37);
        assert!(batch_change_prob(1e-12, 17) < 1e-9);
        // High-precision value of 1 - 0.9995^34.
        assert!((batch_change_prob(0.0005, 34) - 0.016860495110174528).abs() < 1e-15);
    }

    #[test]
    fn batch_change_prob_composition_identity() {
        // 1 - (1-p)^(a*b) built by composing the per-a flip probability b times.
        let mut r = rng(4);
        for _ in 0..200 {
            let p: f64 = r.random::<f64>() * 0.8 + 1e-4;
            let a = r.random_range(1u32..12);
            let b = r.random_range(1u32..12);
            let direct = batch_change_prob(p, a * b);
            let composed = -f64::exp_m1(f64::from(b) * f64::ln_1p(-batch_change_prob(p, a)));
            assert!(
                (direct - composed).abs() < 1e-12,
                "composition failed for p={p}, a={a}, b={b}"
            );
        }
    }

    #[test]
    fn log_likelihood_examples() {
        let m = ObservationModel::unit_gaussian_shift();
        assert!(m.log_likelihood_ratio(0.5).abs() < 1e-15);
        assert!((m.log_likelihood_ratio(1.0) - 0.5).abs() < 1e-15);
        let log_norm = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((m.log_likelihood(false, 0.0) - log_norm).abs() < 1e-15);
    }

    fn simpson_integral<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut acc = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + h * i as f64;
            acc += f(x) * if i % 2 == 0 { 2.0 } else { 4.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn densities_are_normalized() {
        let models = [
            ObservationModel::unit_gaussian_shift(),
            ObservationModel::Gaussian {
                pre_mean: -1.0,
                pre_var: 0.25,
                post_mean: 2.0,
                post_var: 4.0,
            },
            ObservationModel::Laplace {
                pre_loc: 0.0,
                pre_scale: 1.0,
                post_loc: 1.0,
                post_scale: 0.5,
            },
        ];
        for m in &models {
            for changed in [false, true] {
                let mass =
                    simpson_integral(|x| m.log_likelihood(changed, x).exp(), -60.0, 60.0, 400_000);
                assert!(
                    (mass - 1.0).abs() < 1e-6,
                    "density mass {mass} for {m:?} changed={changed}"
                );
            }
        }
    }

    #[test]
    fn kl_divergence_examples() {
        let m = ObservationModel::unit_gaussian_shift();
        assert!((m.kl_divergence() - 0.5).abs() < 1e-15);
        assert!(ObservationModel::uninformative().kl_divergence().abs() < 1e-15);
        let wide = ObservationModel::Gaussian {
            pre_mean: 0.0,
            pre_var: 1.0,
            post_mean: 2.0,
            post_var: 1.0,
        };
        assert!((wide.kl_divergence() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn kl_divergence_matches_quadrature() {
        let models = [
            ObservationModel::unit_gaussian_shift(),
            ObservationModel::Gaussian {
                pre_mean: 0.5,
                pre_var: 2.0,
                post_mean: -0.5,
                post_var: 0.5,
            },
            ObservationModel::Laplace {
                pre_loc: 0.0,
                pre_scale: 1.0,
                post_loc: 0.7,
                post_scale: 1.3,
            },
        ];
        for m in &models {
            let quad = simpson_integral(
                |x| {
                    let l1 = m.log_likelihood(true, x);
                    l1.exp() * (l1 - m.log_likelihood(false, x))
                },
                -80.0,
                80.0,
                400_000,
            );
            let closed = m.kl_divergence();
            assert!(closed >= 0.0);
            assert!(
                (closed - quad).abs() < 1e-6,
                "KL mismatch for {m:?}: closed {closed}, quadrature {quad}"
            );
        }
    }

    #[test]
    fn sample_means_match_models() {
        let m = ObservationModel::unit_gaussian_shift();
        let mut r = rng(5);
        let n = 1_000_000;
        for (changed, target) in [(false, 0.0), (true, 1.0)] {
            let mut sum = 0.0;
            for _ in 0..n {
                sum += m.sample(changed, &mut r);
            }
            let mean = sum / n as f64;
            let bound = 4.0 / (n as f64).sqrt();
            assert!(
                (mean - target).abs() < bound,
                "sample mean {mean} outside {bound} of {target}"
            );
        }
    }

    #[test]
    fn laplace_sample_mean_matches() {
        let m = ObservationModel::Laplace {
            pre_loc: -2.0,
            pre_scale: 0.7,
            post_loc: 3.0,
            post_scale: 1.1,
        };
        let mut r = rng(6);
        let n = 500_000;
        for (changed, target) in [(false, -2.0), (true, 3.0)] {
            let mut sum = 0.0;
            for _ in 0..n {
                sum += m.sample(changed, &mut r);
            }
            let mean = sum / n as f64;
            assert!((mean - target).abs() < 0.02, "mean {mean} vs {target}");
        }
    }

    #[test]
    fn degenerate_model_samples_are_indistinguishable() {
        // Two-sample Kolmogorov-Smirnov test at the 1% level.
        let m = ObservationModel::uninformative();
        let mut r = rng(7);
        let n = 20_000;
        let mut a: Vec<f64> = (0..n).map(|_| m.sample(false, &mut r)).collect();
        let mut b: Vec<f64> = (0..n).map(|_| m.sample(true, &mut r)).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        let (mut i, mut j) = (0usize, 0usize);
        while i < n && j < n {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / n as f64 - j as f64 / n as f64).abs());
        }
        let crit = 1.628 * (2.0 / n as f64).sqrt();
        assert!(d < crit, "KS statistic {d} exceeds 1% critical value {crit}");
    }

    #[test]
    fn theta_is_monotone() {
        let t = NatureTrajectory { change_time: 5 };
        let mut prev = false;
        for k in 0..20 {
            let cur = t.theta_at(k);
            assert!(cur >= prev, "theta dropped back at slot {k}");
            prev = cur;
        }
        assert!(!t.theta_at(4));
        assert!(t.theta_at(5));
    }
}
