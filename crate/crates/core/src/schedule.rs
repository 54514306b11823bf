//! Policy parameters for every epoch.
//!
//! All logarithms are natural. `K` is found first from its own inequality and
//! then fed into the exploration lengths.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::ScheduleError;

/// Default constant in the sensing-design size formula.
pub const DEFAULT_DESIGN_CONSTANT: f64 = 80.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseConfig {
    /// Sparsity level `s`.
    pub s: usize,
    /// Number of sensing rows `m`.
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub d: usize,
    pub agents: usize,
    pub horizon: u64,
    pub sigma: f64,
    pub delta: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub sparse: Option<SparseConfig>,
}

impl PolicyConfig {
    /// Dense configuration with `δ = 0.05` and `α₀ = β₀ = 0.5`.
    pub fn dense(d: usize, agents: usize, horizon: u64, sigma: f64) -> Self {
        Self { d, agents, horizon, sigma, delta: 0.05, alpha0: 0.5, beta0: 0.5, sparse: None }
    }

    pub fn with_sparse(mut self, s: usize, m: usize) -> Self {
        self.sparse = Some(SparseConfig { s, m });
        self
    }

    pub fn is_sparse(&self) -> bool {
        self.sparse.is_some()
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.d == 0 {
            return Err(ScheduleError::invalid("d", "must be at least 1"));
        }
        if self.agents == 0 {
            return Err(ScheduleError::invalid("agents", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(ScheduleError::invalid("horizon", "must be at least 1"));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(ScheduleError::invalid("sigma", format!("must be positive and finite, got {}", self.sigma)));
        }
        for (field, v) in [("delta", self.delta), ("alpha0", self.alpha0), ("beta0", self.beta0)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ScheduleError::invalid(field, format!("must lie in (0, 1), got {v}")));
            }
        }
        if let Some(sp) = self.sparse {
            if sp.s == 0 || sp.s > self.d {
                return Err(ScheduleError::invalid("sparse.s", format!("must lie in 1..={}, got {}", self.d, sp.s)));
            }
            if sp.m == 0 {
                return Err(ScheduleError::invalid("sparse.m", "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Largest `k` with `40σ²d ln(8Mk/δ)(4^k − 4) ≤ T`, and at least 1.
pub fn max_epochs(cfg: &PolicyConfig) -> u32 {
    let c = 40.0 * cfg.sigma * cfg.sigma * cfg.d as f64;
    let cost = |k: u32| c * (8.0 * cfg.agents as f64 * k as f64 / cfg.delta).ln() * (4f64.powi(k as i32) - 4.0);
    let mut k = 1;
    while cost(k + 1) <= cfg.horizon as f64 {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignSize {
    /// Value used: the formula capped at `d`.
    pub m: usize,
    /// Uncapped formula value.
    pub formula: usize,
    pub capped: bool,
}

/// `⌈c(s ln(150d/s) + ln(4/δ))⌉`, capped at `d`.
pub fn sparse_design_size(d: usize, s: usize, delta: f64, constant: f64) -> Result<DesignSize, ScheduleError> {
    if s == 0 || s > d {
        return Err(ScheduleError::invalid("sparse.s", format!("must lie in 1..={d}, got {s}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ScheduleError::invalid("delta", format!("must lie in (0, 1), got {delta}")));
    }
    if !(constant.is_finite() && constant > 0.0) {
        return Err(ScheduleError::invalid("sparse.design_constant", format!("must be positive, got {constant}")));
    }
    let s_f = s as f64;
    let raw = constant * (s_f * (150.0 * d as f64 / s_f).ln() + (4.0 / delta).ln());
    let formula = raw.ceil() as usize;
    let capped = formula > d;
    if capped {
        log::warn!("sensing design size {formula} exceeds d = {d}; capping at d");
    }
    Ok(DesignSize { m: formula.min(d), formula, capped })
}

/// `4σ√(3/(2 m s_k))(√ln(2d) + √ln(4/δ))`.
pub fn lasso_lambda_for(sigma: f64, m: usize, s_k: u64, d: usize, delta: f64) -> f64 {
    4.0 * sigma
        * (3.0 / (2.0 * m as f64 * s_k as f64)).sqrt()
        * ((2.0 * d as f64).ln().sqrt() + (4.0 / delta).ln().sqrt())
}

/// Parameters of one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochParams {
    pub k: u32,
    /// Pulls of each exploration vector.
    pub s: u64,
    /// Error envelope of the server estimate.
    pub tau: f64,
    pub r: f64,
    pub b: f64,
    /// Uplink resolution.
    pub alpha: f64,
    /// Downlink resolution.
    pub beta: f64,
    /// LASSO penalty, sparse mode only.
    pub lambda: Option<f64>,
}

impl EpochParams {
    /// Uplink clip radius `R_k + B_k`.
    pub fn uplink_radius(&self) -> f64 {
        self.r + self.b
    }

    /// Downlink clip radius `B_k + τ_k`.
    pub fn downlink_radius(&self) -> f64 {
        self.b + self.tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    cfg: PolicyConfig,
    max_epochs: u32,
}

impl Schedule {
    pub fn new(cfg: PolicyConfig) -> Result<Self, ScheduleError> {
        cfg.validate()?;
        Ok(Self { max_epochs: max_epochs(&cfg), cfg })
    }

    /// Replaces the computed `K`.
    pub fn with_max_epochs(mut self, k: u32) -> Self {
        assert!(k >= 1, "K must be at least 1");
        self.max_epochs = k;
        self
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn max_epochs(&self) -> u32 {
        self.max_epochs
    }

    fn check(&self, k: u32) -> Result<(), ScheduleError> {
        if k == 0 || k > self.max_epochs {
            return Err(ScheduleError::EpochOutOfRange { k, max: self.max_epochs });
        }
        Ok(())
    }

    /// Number of exploration vectors: `d`, or `m` in sparse mode.
    pub fn exploration_width(&self) -> usize {
        self.cfg.sparse.map_or(self.cfg.d, |sp| sp.m)
    }

    pub fn exploration_length(&self, k: u32) -> Result<u64, ScheduleError> {
        self.check(k)?;
        let c = &self.cfg;
        let factor = if c.is_sparse() { 16.0 } else { 8.0 };
        let log = (factor * c.agents as f64 * self.max_epochs as f64 / c.delta).ln();
        Ok((40.0 * c.sigma * c.sigma * c.d as f64 * log * 4f64.powi(k as i32)).ceil() as u64)
    }

    /// `⌈M s_k² μ₀²⌉`, or `⌈m M s_k²/d⌉` in sparse mode where `μ₀` is unused.
    pub fn exploitation_length(&self, k: u32, mu0: f64) -> Result<u64, ScheduleError> {
        let s = self.exploration_length(k)? as f64;
        let c = &self.cfg;
        let raw = match c.sparse {
            Some(sp) => sp.m as f64 * c.agents as f64 * s * s / c.d as f64,
            None => c.agents as f64 * s * s * mu0 * mu0,
        };
        Ok(raw.ceil() as u64)
    }

    pub fn resolutions(&self, k: u32) -> Result<EpochParams, ScheduleError> {
        let s = self.exploration_length(k)?;
        let c = &self.cfg;
        let tau = 3.0 * 0.5f64.powi(k as i32 + 1) / (c.agents as f64).sqrt();
        let half_k = 0.5f64.powi(k as i32);
        let (r, b, alpha, lambda) = match c.sparse {
            Some(sp) => {
                let shrink = (sp.m as f64 / c.d as f64).sqrt();
                (
                    half_k * shrink,
                    7.0 * tau * shrink,
                    c.alpha0 * c.sigma * (sp.s as f64 / s as f64).sqrt(),
                    Some(lasso_lambda_for(c.sigma, sp.m, s, c.d, c.delta)),
                )
            }
            None => (
                half_k,
                if k == 1 { 1.0 } else { 5.0 * tau },
                c.alpha0 * c.sigma * (c.d as f64).sqrt() / (s as f64).sqrt(),
                None,
            ),
        };
        Ok(EpochParams { k, s, tau, r, b, alpha, beta: c.beta0 * tau, lambda })
    }

    pub fn lasso_lambda(&self, k: u32) -> Result<f64, ScheduleError> {
        let sp = self.cfg.sparse.ok_or(ScheduleError::NotSparse)?;
        let s = self.exploration_length(k)?;
        Ok(lasso_lambda_for(self.cfg.sigma, sp.m, s, self.cfg.d, self.cfg.delta))
    }

    /// Parameter table, one row per epoch.
    pub fn dump(&self) -> String {
        let c = &self.cfg;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# d={} M={} T={} sigma={} delta={} alpha0={} beta0={} K={}{}",
            c.d,
            c.agents,
            c.horizon,
            c.sigma,
            c.delta,
            c.alpha0,
            c.beta0,
            self.max_epochs,
            c.sparse.map_or(String::new(), |sp| format!(" s={} m={}", sp.s, sp.m)),
        );
        let _ = writeln!(out, "k\ts_k\tt_k\ttau_k\tR_k\tB_k\talpha_k\tbeta_k\tlambda_k");
        for k in 1..=self.max_epochs {
            let p = self.resolutions(k).expect("k within 1..=K");
            let t_rule = match c.sparse {
                Some(_) => self.exploitation_length(k, 0.0).expect("k within 1..=K").to_string(),
                None => format!("{}*mu0^2", c.agents as u128 * p.s as u128 * p.s as u128),
            };
            let _ = writeln!(
                out,
                "{k}\t{}\t{t_rule}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{:.6e}\t{}",
                p.s,
                p.tau,
                p.r,
                p.b,
                p.alpha,
                p.beta,
                p.lambda.map_or("-".to_string(), |l| format!("{l:.6e}")),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg(sigma: f64, d: usize, m: usize, t: u64) -> PolicyConfig {
        PolicyConfig { delta: 0.05, ..PolicyConfig::dense(d, m, t, sigma) }
    }

    // Independent scan: every k up to 60 is tested and the last passing one kept.
    fn brute_k(c: &PolicyConfig) -> u32 {
        (1..=60u32)
            .filter(|&k| {
                let lhs = 40.0
                    * c.sigma.powi(2)
                    * c.d as f64
                    * (8.0 * c.agents as f64 * k as f64 / c.delta).ln()
                    * (4f64.powi(k as i32) - 4.0);
                lhs <= c.horizon as f64
            })
            .max()
            .unwrap_or(1)
    }

    #[test]
    fn max_epochs_examples() {
        assert_eq!(max_epochs(&cfg(1.0, 2, 4, 1_000_000)), 5);
        assert_eq!(max_epochs(&cfg(1.0, 2, 4, 10)), 1);
        for exp in [5.0, 5.5, 6.0, 6.5, 7.0] {
            let t = 10f64.powf(exp) as u64;
            let c = cfg(1.0, 2, 4, t);
            assert!(max_epochs(&cfg(1.0, 2, 4, 16 * t)) - max_epochs(&c) <= 2);
            assert!(max_epochs(&cfg(1.0, 2, 4, 4 * t)) - max_epochs(&c) <= 1);
        }
    }

    #[test]
    fn exploration_length_examples() {
        let s = Schedule::new(cfg(1.0, 2, 4, 1_000_000)).unwrap().with_max_epochs(10);
        assert_eq!(s.exploration_length(1).unwrap(), 2805);
        let dense_s1 = s.exploration_length(1).unwrap();
        let sparse = Schedule::new(cfg(1.0, 2, 4, 1_000_000).with_sparse(1, 2)).unwrap().with_max_epochs(10);
        let sparse_s1 = sparse.exploration_length(1).unwrap();
        assert_eq!(sparse_s1, (320.0 * 12800f64.ln()).ceil() as u64);
        assert!(sparse_s1 > dense_s1);
        for k in 1..10 {
            let (a, b) = (s.exploration_length(k).unwrap(), s.exploration_length(k + 1).unwrap());
            assert!(b.abs_diff(4 * a) <= 4);
        }
        assert_eq!(s.exploration_length(0), Err(ScheduleError::EpochOutOfRange { k: 0, max: 10 }));
        assert_eq!(s.exploration_length(11), Err(ScheduleError::EpochOutOfRange { k: 11, max: 10 }));
    }

    #[test]
    fn exploitation_length_examples() {
        // Pick sigma so that s_1 = 100 exactly is not needed: check the rule directly.
        let s = Schedule::new(cfg(1.0, 2, 4, 1_000_000)).unwrap();
        assert_eq!(s.exploitation_length(1, 0.0).unwrap(), 0);
        let s1 = s.exploration_length(1).unwrap() as f64;
        assert_eq!(s.exploitation_length(1, 0.5).unwrap(), (4.0 * s1 * s1 * 0.25).ceil() as u64);
        let sp = Schedule::new(cfg(1.0, 60, 4, 1_000_000).with_sparse(3, 30)).unwrap();
        let s1 = sp.exploration_length(1).unwrap() as f64;
        assert_eq!(sp.exploitation_length(1, 0.0).unwrap(), (30.0 * 4.0 * s1 * s1 / 60.0).ceil() as u64);
    }

    #[test]
    fn exploitation_rule_arithmetic() {
        // M = 4, s_k = 100, mu0 = 0.5 and the sparse m = 30, d = 60 variant.
        assert_eq!((4.0f64 * 100.0 * 100.0 * 0.25).ceil() as u64, 10_000);
        assert_eq!((30.0f64 * 4.0 * 1e4 / 60.0).ceil() as u64, 20_000);
    }

    #[test]
    fn resolutions_examples() {
        let s = Schedule::new(cfg(1.0, 2, 4, 1_000_000)).unwrap();
        let p1 = s.resolutions(1).unwrap();
        assert_eq!(p1.tau, 0.375);
        assert_eq!(p1.b, 1.0);
        assert_eq!(p1.r, 0.5);
        let p2 = s.resolutions(2).unwrap();
        assert_eq!(p2.b, 0.9375);
        for k in 1..=s.max_epochs() {
            let p = s.resolutions(k).unwrap();
            assert_relative_eq!(p.beta / p.tau, 0.5, max_relative = 1e-15);
            assert_relative_eq!(p.alpha, 0.5 * 2f64.sqrt() / (p.s as f64).sqrt(), max_relative = 1e-15);
            assert!(p.lambda.is_none());
            if k > 1 {
                assert_eq!(s.resolutions(k - 1).unwrap().tau / p.tau, 2.0);
            }
        }
        assert_eq!(s.lasso_lambda(1), Err(ScheduleError::NotSparse));
    }

    #[test]
    fn sparse_overrides() {
        let s = Schedule::new(cfg(1.0, 40, 4, 10_000_000).with_sparse(3, 10)).unwrap();
        let shrink = 0.5;
        for k in 1..=s.max_epochs() {
            let p = s.resolutions(k).unwrap();
            assert_relative_eq!(p.r, 0.5f64.powi(k as i32) * shrink, max_relative = 1e-15);
            assert_relative_eq!(p.b, 7.0 * p.tau * shrink, max_relative = 1e-15);
            assert_relative_eq!(p.alpha, 0.5 * (3.0 / p.s as f64).sqrt(), max_relative = 1e-15);
            assert_eq!(p.lambda, Some(s.lasso_lambda(k).unwrap()));
        }
    }

    #[test]
    fn design_size_examples() {
        let m = sparse_design_size(1000, 5, 0.05, DEFAULT_DESIGN_CONSTANT).unwrap();
        assert_eq!(m, DesignSize { m: 1000, formula: 4475, capped: true });
        let small = sparse_design_size(100_000, 1, 0.05, 1.0).unwrap();
        assert!(!small.capped);
        assert_eq!(small.m, small.formula);
        let mut prev = 0;
        for s in 1..=50 {
            let m = sparse_design_size(1_000_000, s, 0.05, 80.0).unwrap().formula;
            assert!(m >= prev);
            prev = m;
        }
        assert!(
            sparse_design_size(1_000_000, 5, 0.01, 80.0).unwrap().formula
                > sparse_design_size(1_000_000, 5, 0.05, 80.0).unwrap().formula
        );
        assert!(sparse_design_size(10, 11, 0.05, 80.0).is_err());
    }

    #[test]
    fn lasso_lambda_examples() {
        let l = lasso_lambda_for(1.0, 30, 10_000, 50, 0.05);
        assert_relative_eq!(l, 0.037917408, max_relative = 1e-7);
        assert_eq!(lasso_lambda_for(0.0, 30, 10_000, 50, 0.05), 0.0);
        let s = Schedule::new(cfg(1.0, 50, 4, 100_000_000).with_sparse(3, 30)).unwrap();
        for k in 1..s.max_epochs() {
            let ratio = s.lasso_lambda(k + 1).unwrap() / s.lasso_lambda(k).unwrap();
            assert_relative_eq!(ratio, 0.5, max_relative = 1e-3);
        }
    }

    #[test]
    fn validation_names_fields() {
        let mut c = cfg(1.0, 2, 4, 100);
        c.delta = 1.5;
        assert!(matches!(c.validate(), Err(ScheduleError::InvalidConfig { field: "delta", .. })));
        let c = cfg(0.0, 2, 4, 100);
        assert!(matches!(c.validate(), Err(ScheduleError::InvalidConfig { field: "sigma", .. })));
        let c = cfg(1.0, 2, 4, 100).with_sparse(3, 2);
        assert!(matches!(c.validate(), Err(ScheduleError::InvalidConfig { field: "sparse.s", .. })));
    }

    #[test]
    fn dump_is_deterministic() {
        let s = Schedule::new(cfg(0.5, 3, 4, 400_000)).unwrap();
        let d = s.dump();
        assert_eq!(d, Schedule::new(cfg(0.5, 3, 4, 400_000)).unwrap().dump());
        assert_eq!(d.lines().count(), 2 + s.max_epochs() as usize);
        assert!(d.lines().nth(1).unwrap().starts_with("k\ts_k\tt_k"));
    }

    fn config_strategy() -> impl Strategy<Value = PolicyConfig> {
        (1usize..20, 1usize..64, 3.0f64..8.0, 0.05f64..2.0, 0.001f64..0.5, 0.05f64..0.95, 0.05f64..0.95).prop_map(
            |(d, m, log_t, sigma, delta, a0, b0)| PolicyConfig {
                d,
                agents: m,
                horizon: 10f64.powf(log_t) as u64,
                sigma,
                delta,
                alpha0: a0,
                beta0: b0,
                sparse: None,
            },
        )
    }

    proptest! {
        #[test]
        fn max_epochs_matches_scan(c in config_strategy()) {
            prop_assert_eq!(max_epochs(&c), brute_k(&c));
        }

        #[test]
        fn monotone_sequences(c in config_strategy()) {
            let s = Schedule::new(c).unwrap().with_max_epochs(12);
            for k in 1..12 {
                let (a, b) = (s.resolutions(k).unwrap(), s.resolutions(k + 1).unwrap());
                prop_assert!(b.s > a.s);
                prop_assert!(b.tau < a.tau);
                prop_assert_eq!(a.tau / b.tau, 2.0);
            }
        }

        /// Summed exploration pulls per direction fit the horizon plus one epoch.
        #[test]
        fn per_direction_epoch_cost(c in config_strategy()) {
            let s = Schedule::new(c).unwrap();
            let k_max = s.max_epochs();
            let total: u64 = (1..=k_max).map(|k| s.exploration_length(k).unwrap()).sum();
            prop_assert!(total <= c.horizon + s.exploration_length(k_max).unwrap());
        }

        /// The `d·s_k` form of the identity for d ≤ 2.
        #[test]
        fn epoch_cost_identity_low_dimension(mut c in config_strategy(), d in 1usize..=2) {
            c.d = d;
            let s = Schedule::new(c).unwrap();
            let k_max = s.max_epochs();
            let d = d as u64;
            let total: u64 = (1..=k_max).map(|k| d * s.exploration_length(k).unwrap()).sum();
            prop_assert!(total <= c.horizon + d * s.exploration_length(k_max).unwrap());
        }

        /// `α₀(R_k + B_k)/(α_k/√d)` stays below a constant that does not depend on k.
        #[test]
        fn uplink_ratio_bound(c in config_strategy()) {
            let s = Schedule::new(c).unwrap().with_max_epochs(14);
            let log = (8.0 * c.agents as f64 * 14.0 / c.delta).ln();
            let coeff = 40.0 * c.sigma * c.sigma * c.d as f64 * log;
            let bound = (1.0 + 7.5 / (c.agents as f64).sqrt()) * (coeff + 1.0 / 16.0).sqrt() / c.sigma;
            for k in 2..=14 {
                let p = s.resolutions(k).unwrap();
                let ratio = c.alpha0 * p.uplink_radius() / (p.alpha / (c.d as f64).sqrt());
                prop_assert!(ratio <= bound * (1.0 + 1e-12), "k={} ratio={} bound={}", k, ratio, bound);
            }
        }

        #[test]
        fn downlink_ratio_bound(c in config_strategy()) {
            let s = Schedule::new(c).unwrap().with_max_epochs(14);
            let bound = 6.0 / c.beta0 * (c.d as f64).sqrt();
            for k in 2..=14 {
                let p = s.resolutions(k).unwrap();
                prop_assert!(p.downlink_radius() / (p.beta / (c.d as f64).sqrt()) <= bound * (1.0 + 1e-12));
            }
        }

        #[test]
        fn outputs_are_pure(c in config_strategy()) {
            prop_assert_eq!(Schedule::new(c).unwrap().dump(), Schedule::new(c).unwrap().dump());
        }
    }
}
