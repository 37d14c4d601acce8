//! Closed-form Bayesian leaf scores.
//!
//! Every function here returns a log marginal likelihood: the probability of
//! the data at one tree leaf with the leaf parameters integrated out under a
//! conjugate prior.
//!
//! * Discrete leaves use a symmetric Dirichlet prior (the BDe family).
//! * Binary-Gaussian leaves add a Beta-binomial presence term to a
//!   Normal–Inverse-Gamma marginal over the present values.
//!
//! The math is generic over the scalar type so the same code serves `f32`
//! and `f64`.

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::ops::{Add, Sub};

/// Floating point scalar usable by the scoring math.
pub trait Real: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {}
impl Real for f32 {}
impl Real for f64 {}

#[inline]
fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = lit::<T>(0.5);
    if x < half {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let pi = lit::<T>(std::f64::consts::PI);
        return (pi / (pi * x).sin()).abs().ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = lit::<T>(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + lit::<T>(c) / (x + T::from_usize(i).unwrap());
    }
    let t = x + lit::<T>(LANCZOS_G) + half;
    lit::<T>(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + half) * t.ln() - t + acc.ln()
}

/// Log marginal likelihood of category counts under a symmetric Dirichlet
/// whose pseudo-counts total `ess`.
pub fn multinomial_log_ml<T: Real>(counts: &[T], ess: T) -> T {
    let total = counts.iter().fold(T::zero(), |a, &c| a + c);
    if total == T::zero() || counts.is_empty() {
        return T::zero();
    }
    let alpha = ess / T::from_usize(counts.len()).unwrap();
    let ln_alpha = ln_gamma(alpha);
    let per_cell = counts
        .iter()
        .filter(|&&c| c > T::zero())
        .fold(T::zero(), |a, &c| a + ln_gamma(alpha + c) - ln_alpha);
    ln_gamma(ess) - ln_gamma(ess + total) + per_cell
}

/// Normal–Inverse-Gamma prior: `σ² ~ IG(alpha, beta)`, `μ | σ² ~ N(mu, σ²/kappa)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigPrior<T> {
    pub mu: T,
    pub kappa: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> NigPrior<T> {
    /// `N(0, σ²)` on the mean, `IG(1, 1)` on the variance; meant for
    /// standardized values.
    pub fn standard() -> Self {
        NigPrior {
            mu: T::zero(),
            kappa: T::one(),
            alpha: T::one(),
            beta: T::one(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.mu.is_finite()
            && self.kappa > T::zero()
            && self.alpha > T::zero()
            && self.beta > T::zero()
            && self.kappa.is_finite()
            && self.alpha.is_finite()
            && self.beta.is_finite()
    }

    /// Conjugate update with the sufficient statistics of present values.
    pub fn posterior(&self, stats: &GaussianStats<T>) -> NigPrior<T> {
        if stats.n == T::zero() {
            return *self;
        }
        let mean = stats.sum / stats.n;
        let kappa = self.kappa + stats.n;
        let alpha = self.alpha + stats.n * lit(0.5);
        let dev = mean - self.mu;
        let beta = self.beta
            + stats.centered_sum_sq() * lit(0.5)
            + self.kappa * stats.n * dev * dev / (lit::<T>(2.0) * kappa);
        NigPrior {
            mu: (self.kappa * self.mu + stats.sum) / kappa,
            kappa,
            alpha,
            beta,
        }
    }

    /// Student-t posterior predictive as `(location, scale², degrees of freedom)`.
    pub fn predictive(&self) -> (T, T, T) {
        let scale_sq = self.beta * (self.kappa + T::one()) / (self.alpha * self.kappa);
        (self.mu, scale_sq, lit::<T>(2.0) * self.alpha)
    }

    /// Variance of the posterior predictive; falls back to the t scale² when
    /// the degrees of freedom are too low for a finite variance.
    pub fn predictive_variance(&self) -> T {
        let (_, scale_sq, dof) = self.predictive();
        let two = lit::<T>(2.0);
        if dof > two {
            scale_sq * dof / (dof - two)
        } else {
            scale_sq
        }
    }

    /// Log density of the posterior predictive at `x`.
    pub fn predictive_ln_pdf(&self, x: T) -> T {
        let (loc, scale_sq, dof) = self.predictive();
        let half = lit::<T>(0.5);
        let z = (x - loc) * (x - loc) / (scale_sq * dof);
        ln_gamma((dof + T::one()) * half)
            - ln_gamma(dof * half)
            - half * (dof * lit::<T>(std::f64::consts::PI) * scale_sq).ln()
            - (dof + T::one()) * half * (T::one() + z).ln()
    }
}

/// Additive sufficient statistics for a Gaussian: count, sum, sum of squares.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GaussianStats<T> {
    pub n: T,
    pub sum: T,
    pub sum_sq: T,
}

impl<T: Real> GaussianStats<T> {
    pub fn from_values(values: &[T]) -> Self {
        values.iter().fold(Self::default(), |mut s, &v| {
            s.push(v);
            s
        })
    }

    #[inline]
    pub fn push(&mut self, v: T) {
        self.n = self.n + T::one();
        self.sum = self.sum + v;
        self.sum_sq = self.sum_sq + v * v;
    }

    /// Σ (x − x̄)², clamped at zero against cancellation.
    pub fn centered_sum_sq(&self) -> T {
        if self.n == T::zero() {
            return T::zero();
        }
        let c = self.sum_sq - self.sum * self.sum / self.n;
        if c < T::zero() {
            T::zero()
        } else {
            c
        }
    }
}

impl<T: Real> Add for GaussianStats<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        GaussianStats {
            n: self.n + o.n,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }
}

impl<T: Real> Sub for GaussianStats<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        GaussianStats {
            n: self.n - o.n,
            sum: self.sum - o.sum,
            sum_sq: self.sum_sq - o.sum_sq,
        }
    }
}

/// Log marginal likelihood of the values summarized by `stats` under `prior`.
pub fn gaussian_log_ml<T: Real>(stats: &GaussianStats<T>, prior: &NigPrior<T>) -> T {
    if stats.n == T::zero() {
        return T::zero();
    }
    let post = prior.posterior(stats);
    let half = lit::<T>(0.5);
    ln_gamma(post.alpha) - ln_gamma(prior.alpha) + prior.alpha * prior.beta.ln()
        - post.alpha * post.beta.ln()
        + half * (prior.kappa.ln() - post.kappa.ln())
        - stats.n * half * lit::<T>((2.0 * std::f64::consts::PI).ln())
}

/// Sufficient statistics for a binary-Gaussian leaf.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BinaryGaussianStats<T> {
    pub absent: T,
    pub present: GaussianStats<T>,
}

impl<T: Real> BinaryGaussianStats<T> {
    pub fn from_values(values: &[Option<T>]) -> Self {
        let mut s = Self::default();
        for v in values {
            s.push(*v);
        }
        s
    }

    #[inline]
    pub fn push(&mut self, v: Option<T>) {
        match v {
            Some(x) => self.present.push(x),
            None => self.absent = self.absent + T::one(),
        }
    }

    pub fn total(&self) -> T {
        self.absent + self.present.n
    }
}

impl<T: Real> Add for BinaryGaussianStats<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        BinaryGaussianStats {
            absent: self.absent + o.absent,
            present: self.present + o.present,
        }
    }
}

impl<T: Real> Sub for BinaryGaussianStats<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        BinaryGaussianStats {
            absent: self.absent - o.absent,
            present: self.present - o.present,
        }
    }
}

/// Presence term (Beta with `presence_ess` total pseudo-count) plus the
/// Gaussian marginal over present values.
pub fn binary_gaussian_log_ml<T: Real>(
    stats: &BinaryGaussianStats<T>,
    presence_ess: T,
    prior: &NigPrior<T>,
) -> T {
    binomial_term(stats, presence_ess) + gaussian_log_ml(&stats.present, prior)
}

/// The presence half of [`binary_gaussian_log_ml`].
pub fn binomial_term<T: Real>(stats: &BinaryGaussianStats<T>, presence_ess: T) -> T {
    multinomial_log_ml(&[stats.present.n, stats.absent], presence_ess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_known_values() {
        assert_relative_eq!(ln_gamma(1.0_f64), 0.0, epsilon = 1e-13);
        assert_relative_eq!(ln_gamma(2.0_f64), 0.0, epsilon = 1e-13);
        assert_relative_eq!(ln_gamma(0.5_f64), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-13);
        assert_relative_eq!(ln_gamma(10.0_f64), 362_880.0_f64.ln(), max_relative = 1e-13);
        assert_relative_eq!(ln_gamma(0.1_f64), 2.252_712_651_734_206, max_relative = 1e-12);
        // Stirling regime
        let x = 1.0e4_f64;
        let stirling = (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x);
        assert_relative_eq!(ln_gamma(x), stirling, max_relative = 1e-12);
    }

    #[test]
    fn ln_gamma_f32_tracks_f64() {
        for &x in &[0.3_f32, 1.7, 4.0, 25.5] {
            let lo = ln_gamma(x) as f64;
            let hi = ln_gamma(x as f64);
            assert!((lo - hi).abs() < 1e-4, "x={x}: {lo} vs {hi}");
        }
    }

    #[test]
    fn empty_counts_score_zero() {
        assert_eq!(multinomial_log_ml(&[0.0_f64, 0.0, 0.0], 1.0), 0.0);
        assert_eq!(gaussian_log_ml(&GaussianStats::<f64>::default(), &NigPrior::standard()), 0.0);
    }

    #[test]
    fn first_draw_under_uniform_prior_is_half() {
        assert_relative_eq!(multinomial_log_ml(&[1.0_f64, 0.0], 1.0), 0.5_f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn all_absent_is_binomial_only() {
        let s = BinaryGaussianStats::<f64>::from_values(&[None, None, None]);
        let total = binary_gaussian_log_ml(&s, 2.0, &NigPrior::standard());
        assert_relative_eq!(total, multinomial_log_ml(&[0.0, 3.0], 2.0), epsilon = 1e-14);
        // Beta(1,1): P(3 absent in a row) = 1/4
        assert_relative_eq!(total, 0.25_f64.ln(), epsilon = 1e-13);
    }

    #[test]
    fn binary_gaussian_is_sum_of_terms() {
        let vals = [Some(0.3), None, Some(-1.2), Some(2.0), None];
        let s = BinaryGaussianStats::<f64>::from_values(&vals);
        let prior = NigPrior::standard();
        let total = binary_gaussian_log_ml(&s, 2.0, &prior);
        let g = GaussianStats::from_values(&[0.3, -1.2, 2.0]);
        assert_relative_eq!(
            total,
            multinomial_log_ml(&[3.0, 2.0], 2.0) + gaussian_log_ml(&g, &prior),
            epsilon = 1e-13
        );
    }

    #[test]
    fn gaussian_score_chain_rule() {
        // p(x1, x2) = p(x1) p(x2 | x1): the second factor is the posterior
        // predictive after the first observation.
        let prior = NigPrior::<f64>::standard();
        let a = GaussianStats::from_values(&[0.7]);
        let ab = GaussianStats::from_values(&[0.7, -0.4]);
        let post = prior.posterior(&a);
        assert_relative_eq!(
            gaussian_log_ml(&ab, &prior),
            gaussian_log_ml(&a, &prior) + post.predictive_ln_pdf(-0.4),
            max_relative = 1e-12
        );
        // and the one-point marginal is the prior predictive
        assert_relative_eq!(
            gaussian_log_ml(&a, &prior),
            prior.predictive_ln_pdf(0.7),
            max_relative = 1e-12
        );
    }

    #[test]
    fn stats_subtract_back() {
        let a = BinaryGaussianStats::<f64>::from_values(&[Some(1.0), None, Some(2.0)]);
        let b = BinaryGaussianStats::<f64>::from_values(&[Some(1.0)]);
        let d = a - b;
        assert_eq!(d.absent, 1.0);
        assert_eq!(d.present.n, 1.0);
        assert_eq!(d.present.sum, 2.0);
    }

    #[test]
    fn f32_scores_close_to_f64() {
        let prior32 = NigPrior::<f32>::standard();
        let prior64 = NigPrior::<f64>::standard();
        let v32 = GaussianStats::from_values(&[0.1_f32, 0.5, -0.3]);
        let v64 = GaussianStats::from_values(&[0.1_f64, 0.5, -0.3]);
        let diff = gaussian_log_ml(&v32, &prior32) as f64 - gaussian_log_ml(&v64, &prior64);
        assert!(diff.abs() < 1e-4);
    }
}
