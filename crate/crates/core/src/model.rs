//! Bandit environment: the hidden reward vector, noisy rewards and regret.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::rng::{Purpose, SeedTree};
use crate::vector::{dot, norm2};

/// Slack allowed on the unit-ball constraint for actions.
pub const ACTION_SLACK: f64 = 1e-9;

/// Ground truth of one linear bandit problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditInstance {
    theta_star: Vec<f64>,
    sigma: f64,
    sparsity: Option<usize>,
    seed: u64,
}

impl BanditInstance {
    pub fn new(
        theta_star: Vec<f64>,
        sigma: f64,
        sparsity: Option<usize>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let d = theta_star.len();
        if d == 0 {
            return Err(ModelError::EmptyDimension);
        }
        if theta_star.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(ModelError::InvalidSigma(sigma));
        }
        let norm = norm2(&theta_star);
        if norm > 1.0 + 1e-12 {
            return Err(ModelError::NormTooLarge(norm));
        }
        if let Some(s) = sparsity {
            if s == 0 || s > d {
                return Err(ModelError::InvalidSparsity { sparsity: s, dim: d });
            }
            let nonzeros = theta_star.iter().filter(|x| **x != 0.0).count();
            if nonzeros > s {
                return Err(ModelError::SupportTooLarge { nonzeros, sparsity: s });
            }
        }
        Ok(Self { theta_star, sigma, sparsity, seed })
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sparsity(&self) -> Option<usize> {
        self.sparsity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Best achievable expected reward, `‖θ*‖₂`.
    pub fn optimal_value(&self) -> f64 {
        norm2(&self.theta_star)
    }

    /// Same ground truth with a different noise scale.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self, ModelError> {
        Self::new(self.theta_star.clone(), sigma, self.sparsity, self.seed)
    }

    /// One noisy reward for `action`.
    pub fn pull<R: Rng + ?Sized>(&self, action: &Action, rng: &mut R) -> Result<f64, ModelError> {
        self.check_dim(action)?;
        Ok(self.noisy(dot(&self.theta_star, action.direction()), rng))
    }

    /// Reward draw around a precomputed mean `⟨θ*, a⟩`; used by exploration
    /// loops that pull the same validated action many times.
    #[inline]
    pub(crate) fn noisy<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        if self.sigma == 0.0 {
            mean
        } else {
            let z: f64 = rng.sample(StandardNormal);
            mean + self.sigma * z
        }
    }

    /// `‖θ*‖₂ − ⟨θ*, a⟩`.
    pub fn instantaneous_regret(&self, action: &Action) -> Result<f64, ModelError> {
        self.check_dim(action)?;
        Ok(self.regret_of(action.direction()))
    }

    pub(crate) fn regret_of(&self, direction: &[f64]) -> f64 {
        self.optimal_value() - dot(&self.theta_star, direction)
    }

    pub(crate) fn mean_reward(&self, direction: &[f64]) -> f64 {
        dot(&self.theta_star, direction)
    }

    fn check_dim(&self, action: &Action) -> Result<(), ModelError> {
        if action.dim() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), got: action.dim() });
        }
        Ok(())
    }
}

/// A point of the unit ball `{a : ‖a‖₂ ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    direction: Vec<f64>,
}

impl Action {
    pub fn new(direction: Vec<f64>) -> Result<Self, ModelError> {
        if direction.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        let n = norm2(&direction);
        if n > 1.0 + ACTION_SLACK {
            return Err(ModelError::ActionOutsideBall(n));
        }
        Ok(Self { direction })
    }

    pub fn basis(d: usize, i: usize) -> Self {
        let mut direction = vec![0.0; d];
        direction[i] = 1.0;
        Self { direction }
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }
}

/// Draws an instance with a uniformly random direction scaled to `norm`,
/// supported on a random `sparsity`-subset of coordinates when given.
pub fn sample_instance(
    d: usize,
    norm: f64,
    sigma: f64,
    sparsity: Option<usize>,
    seed: u64,
) -> Result<BanditInstance, ModelError> {
    if d == 0 {
        return Err(ModelError::EmptyDimension);
    }
    if !(0.0..=1.0).contains(&norm) {
        return Err(ModelError::InvalidNorm(norm));
    }
    if let Some(s) = sparsity {
        if s == 0 || s > d {
            return Err(ModelError::InvalidSparsity { sparsity: s, dim: d });
        }
    }
    let mut rng = SeedTree::new(seed).stream(Purpose::Instance, 0);
    let support: Vec<usize> = match sparsity {
        Some(s) => {
            let mut idx = sample(&mut rng, d, s).into_vec();
            idx.sort_unstable();
            idx
        }
        None => (0..d).collect(),
    };
    let mut theta = vec![0.0; d];
    if norm > 0.0 {
        loop {
            for &i in &support {
                theta[i] = rng.sample(StandardNormal);
            }
            let n = norm2(&theta);
            if n > 1e-12 {
                for x in &mut theta {
                    *x *= norm / n;
                }
                break;
            }
        }
    }
    // Rescaling can overshoot the unit ball by an ulp.
    let n = norm2(&theta);
    if n > 1.0 {
        for x in &mut theta {
            *x /= n;
        }
    }
    BanditInstance::new(theta, sigma, sparsity, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::normalized;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn inst(theta: &[f64], sigma: f64) -> BanditInstance {
        BanditInstance::new(theta.to_vec(), sigma, None, 0).unwrap()
    }

    #[test]
    fn noiseless_pulls_are_exact_inner_products() {
        let mut rng = SeedTree::new(1).stream(Purpose::Scratch, 0);
        let a = inst(&[1.0, 0.0], 0.0);
        assert_eq!(a.pull(&Action::new(vec![1.0, 0.0]).unwrap(), &mut rng).unwrap(), 1.0);
        let b = inst(&[0.6, 0.8], 0.0);
        assert_eq!(b.pull(&Action::new(vec![0.0, 1.0]).unwrap(), &mut rng).unwrap(), 0.8);
    }

    #[test]
    fn noise_has_zero_mean() {
        let mut rng = SeedTree::new(2).stream(Purpose::Scratch, 0);
        let a = inst(&[0.0, 0.0, 0.0], 1.0);
        let act = Action::new(vec![0.3, -0.4, 0.5]).unwrap();
        let n = 1_000_000;
        let mean = (0..n).map(|_| a.pull(&act, &mut rng).unwrap()).sum::<f64>() / n as f64;
        // 3 sigma / sqrt(N) = 0.003, well inside the 0.01 band.
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn rejects_actions_outside_the_ball() {
        assert!(matches!(Action::new(vec![0.8, 0.7]), Err(ModelError::ActionOutsideBall(_))));
        assert!(Action::new(vec![1.0 + 0.5e-9, 0.0]).is_ok());
        let a = inst(&[0.5, 0.0], 0.0);
        let wrong = Action::new(vec![1.0]).unwrap();
        assert!(a.instantaneous_regret(&wrong).is_err());
    }

    #[test]
    fn regret_examples() {
        let a = inst(&[0.8, 0.0], 0.0);
        assert_eq!(a.instantaneous_regret(&Action::new(vec![1.0, 0.0]).unwrap()).unwrap(), 0.0);
        assert_relative_eq!(
            a.instantaneous_regret(&Action::new(vec![0.0, 1.0]).unwrap()).unwrap(),
            0.8
        );
        let est = normalized(&[0.8, 0.1]).unwrap();
        let r = a.instantaneous_regret(&Action::new(est).unwrap()).unwrap();
        // 0.8 - 0.8 * 0.8 / sqrt(0.65)
        assert_relative_eq!(r, 0.8 - 0.64 / 0.65f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(r, 0.006178, epsilon = 1e-6);
        assert!(r <= 0.1 * 0.1 / 0.8);
    }

    #[test]
    fn zero_instance_has_zero_regret() {
        let a = inst(&[0.0, 0.0], 0.0);
        assert_eq!(a.optimal_value(), 0.0);
        assert_eq!(a.instantaneous_regret(&Action::new(vec![0.6, 0.8]).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn invalid_instances() {
        assert!(BanditInstance::new(vec![], 0.0, None, 0).is_err());
        assert!(BanditInstance::new(vec![0.9, 0.9], 0.0, None, 0).is_err());
        assert!(BanditInstance::new(vec![0.1], -1.0, None, 0).is_err());
        assert!(BanditInstance::new(vec![0.1, 0.1], 0.0, Some(1), 0).is_err());
        assert!(BanditInstance::new(vec![0.1, 0.0], 0.0, Some(1), 0).is_ok());
    }

    #[test]
    fn sampling_examples() {
        let z = sample_instance(3, 0.0, 0.5, None, 9).unwrap();
        assert!(z.theta_star().iter().all(|x| *x == 0.0));
        let s = sample_instance(4, 0.7, 0.5, Some(1), 9).unwrap();
        assert_eq!(s.theta_star().iter().filter(|x| **x != 0.0).count(), 1);
        assert_relative_eq!(s.optimal_value(), 0.7, epsilon = 1e-12);
        let a = sample_instance(5, 0.5, 0.5, None, 77).unwrap();
        let b = sample_instance(5, 0.5, 0.5, None, 77).unwrap();
        assert_eq!(a.theta_star(), b.theta_star());
        assert!(sample_instance(3, 1.5, 0.5, None, 0).is_err());
        assert!(sample_instance(3, 0.5, 0.5, Some(4), 0).is_err());
    }

    proptest! {
        #[test]
        fn sampled_instances_respect_norm_and_support(
            d in 1usize..30, norm in 0.0f64..=1.0, s_frac in 0.0f64..1.0, seed: u64
        ) {
            let s = 1 + ((d - 1) as f64 * s_frac) as usize;
            let inst = sample_instance(d, norm, 0.1, Some(s), seed).unwrap();
            prop_assert!(inst.optimal_value() <= 1.0);
            prop_assert!(inst.theta_star().iter().filter(|x| **x != 0.0).count() <= s);
        }

        #[test]
        fn regret_is_nonnegative_on_the_ball(
            theta in prop::collection::vec(-1.0f64..1.0, 4),
            a in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            let nt = norm2(&theta).max(1.0);
            let theta: Vec<f64> = theta.iter().map(|x| x / nt).collect();
            let na = norm2(&a).max(1.0);
            let a: Vec<f64> = a.iter().map(|x| x / na).collect();
            let inst = BanditInstance::new(theta, 0.0, None, 0).unwrap();
            let r = inst.instantaneous_regret(&Action::new(a).unwrap()).unwrap();
            prop_assert!(r >= -1e-12);
        }
    }
}
