//! Agent and server state machines.
//!
//! Agents explore a fixed probe set (the standard basis, or the rows of a
//! sensing design), upload clipped stochastic-quantized unary messages, and
//! apply the server's deterministic-quantized updates to a shared estimate
//! `θ̄`. The server aggregates uploads, runs the norm test, and broadcasts
//! differential updates. Everything here is synchronous; the driver in
//! [`crate::sim`] moves all parties through each epoch in lockstep.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::codec::{
    decode_fixed, decode_unary, encode_fixed, encode_unary, unary_len_bound, BitMessage, Direction, Encoding,
};
use crate::error::{ModelError, ProtocolError};
use crate::model::BanditInstance;
use crate::quant::{clip, quant_on_grid, vector_grid, QuantMode, QuantizedVector};
use crate::rng::{Purpose, SeedTree};
use crate::schedule::EpochParams;
use crate::sparse::{lasso_solve, LassoProblem, SensingDesign};
use crate::vector::{add_assign, dot, norm2, normalized, sub};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    NormEstimation,
    Refinement,
    Done,
}

impl Phase {
    fn as_str(&self) -> &'static str {
        match self {
            Phase::NormEstimation => "norm-estimation",
            Phase::Refinement => "refinement",
            Phase::Done => "done",
        }
    }
}

/// How exploration rewards are simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Draw the per-probe sample mean directly from its exact law
    /// `N(μ_i, σ²/s)`; one normal per probe per epoch.
    #[default]
    SampleMean,
    /// Draw and average every reward.
    PerPull,
}

/// How estimates travel between parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sharing {
    /// Clip, quantize and encode every message.
    Quantized,
    /// Send real vectors unchanged; no bits are accounted.
    Exact,
}

/// Exploration actions with their exact mean rewards and regrets.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    vectors: Vec<Vec<f64>>,
    means: Vec<f64>,
    regrets: Arc<[f64]>,
    basis: bool,
}

impl ProbeSet {
    pub fn standard_basis(instance: &BanditInstance) -> Self {
        let d = instance.dim();
        let vectors: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                e
            })
            .collect();
        Self::build(vectors, instance, true)
    }

    pub fn sensing(design: &SensingDesign, instance: &BanditInstance) -> Result<Self, ModelError> {
        if design.d() != instance.dim() {
            return Err(ModelError::DimensionMismatch { expected: instance.dim(), got: design.d() });
        }
        for row in design.rows() {
            let n = norm2(row);
            if n > 1.0 + crate::model::ACTION_SLACK {
                return Err(ModelError::ActionOutsideBall(n));
            }
        }
        Ok(Self::build(design.rows().to_vec(), instance, false))
    }

    fn build(vectors: Vec<Vec<f64>>, instance: &BanditInstance, basis: bool) -> Self {
        let means = vectors.iter().map(|v| instance.mean_reward(v)).collect();
        let regrets: Vec<f64> = vectors.iter().map(|v| instance.regret_of(v)).collect();
        Self { vectors, means, regrets: regrets.into(), basis }
    }

    pub fn width(&self) -> usize {
        self.vectors.len()
    }

    pub fn regrets(&self) -> Arc<[f64]> {
        Arc::clone(&self.regrets)
    }

    /// `(⟨v_i, θ⟩)_i`, the noiseless exploration means under `θ`.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        if self.basis {
            theta.to_vec()
        } else {
            self.vectors.iter().map(|v| dot(v, theta)).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Exploration {
    /// Per-probe sample means.
    Complete(Vec<f64>),
    /// The budget ran out after `pulls` pulls; nothing is sent.
    Partial { pulls: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Bits(BitMessage),
    Exact { epoch: u32, values: Vec<f64> },
}

impl Payload {
    /// Bit length, or `None` for exact payloads.
    pub fn bits(&self) -> Option<usize> {
        match self {
            Payload::Bits(m) => Some(m.len()),
            Payload::Exact { .. } => None,
        }
    }

    pub fn message(&self) -> Option<&BitMessage> {
        match self {
            Payload::Bits(m) => Some(m),
            Payload::Exact { .. } => None,
        }
    }
}

/// Rejects messages longer than `p(3 + 2(r/ε + 1))` with `ε = ε′/√p`.
pub fn check_message_size(msg: &BitMessage, p: usize, radius: f64, eps_prime: f64) -> Result<(), ProtocolError> {
    let bound = unary_len_bound(p, radius, eps_prime / (p as f64).sqrt());
    if msg.len() as f64 > bound {
        return Err(ProtocolError::MessageTooLarge {
            epoch: msg.epoch,
            direction: msg.direction.as_str(),
            bits: msg.len(),
            bound,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AgentState {
    id: usize,
    phase: Phase,
    epoch: u32,
    theta_bar: Vec<f64>,
    mu0: Option<f64>,
    k0: Option<u32>,
    pulls_used: u64,
    horizon: u64,
    noise: ChaCha8Rng,
    quantizer: ChaCha8Rng,
    sampling: Sampling,
}

impl AgentState {
    /// Agent `id` drawing from noise and quantizer streams `stream` of `seeds`.
    pub fn new(id: usize, d: usize, horizon: u64, seeds: &SeedTree, stream: u64) -> Self {
        Self {
            id,
            phase: Phase::NormEstimation,
            epoch: 1,
            theta_bar: vec![0.0; d],
            mu0: None,
            k0: None,
            pulls_used: 0,
            horizon,
            noise: seeds.stream(Purpose::Noise, stream),
            quantizer: seeds.stream(Purpose::Quantizer, stream),
            sampling: Sampling::default(),
        }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn theta_bar(&self) -> &[f64] {
        &self.theta_bar
    }

    pub fn mu0(&self) -> Option<f64> {
        self.mu0
    }

    pub fn k0(&self) -> Option<u32> {
        self.k0
    }

    pub fn pulls_used(&self) -> u64 {
        self.pulls_used
    }

    pub fn remaining(&self) -> u64 {
        self.horizon - self.pulls_used
    }

    /// Plays each probe `s` times round-robin and returns the sample means.
    ///
    /// The mean of probe `i` is formed as `μ_i + σ·z̄` with `z̄` the average
    /// standard-normal noise, so `σ = 0` reproduces `μ_i` exactly.
    pub fn explore(&mut self, probes: &ProbeSet, instance: &BanditInstance, s: u64) -> Exploration {
        let p = probes.width() as u64;
        let want = p * s;
        if want > self.remaining() {
            let pulls = self.remaining();
            self.pulls_used = self.horizon;
            self.phase = Phase::Done;
            return Exploration::Partial { pulls };
        }
        let sigma = instance.sigma();
        let mut noise = vec![0.0; probes.width()];
        if sigma > 0.0 {
            match self.sampling {
                Sampling::SampleMean => {
                    let scale = 1.0 / (s as f64).sqrt();
                    for z in noise.iter_mut() {
                        *z = scale * self.noise.sample::<f64, _>(StandardNormal);
                    }
                }
                Sampling::PerPull => {
                    for _ in 0..s {
                        for acc in noise.iter_mut() {
                            *acc += self.noise.sample::<f64, _>(StandardNormal);
                        }
                    }
                    noise.iter_mut().for_each(|z| *z /= s as f64);
                }
            }
        }
        self.pulls_used += want;
        let estimate = probes.means.iter().zip(&noise).map(|(mu, z)| mu + sigma * z).collect();
        Exploration::Complete(estimate)
    }

    /// Clips and quantizes `estimate − reference(θ̄)` and encodes it.
    pub fn uplink(
        &mut self,
        estimate: &[f64],
        probes: &ProbeSet,
        params: &EpochParams,
        sharing: Sharing,
    ) -> Result<Payload, ProtocolError> {
        if self.phase == Phase::Done {
            return Err(ProtocolError::WrongPhase(self.phase.as_str()));
        }
        let diff = sub(estimate, &probes.project(&self.theta_bar));
        match sharing {
            Sharing::Exact => Ok(Payload::Exact { epoch: self.epoch, values: diff }),
            Sharing::Quantized => {
                let radius = params.uplink_radius();
                let clipped = clip(&diff, radius);
                let grid = vector_grid(diff.len(), params.alpha, radius)?;
                let q = quant_on_grid(&clipped, grid, QuantMode::Stochastic, &mut self.quantizer)?;
                let msg = encode_unary(&q, Direction::Uplink, self.epoch);
                check_message_size(&msg, diff.len(), radius, params.alpha)?;
                Ok(Payload::Bits(msg))
            }
        }
    }

    /// Handles the norm-stage verdict. Returns true on termination.
    pub fn receive_control(&mut self, msg: &BitMessage) -> Result<bool, ProtocolError> {
        if self.phase != Phase::NormEstimation {
            return Err(ProtocolError::WrongPhase(self.phase.as_str()));
        }
        if msg.encoding != Encoding::Control || msg.len() != 1 || msg.epoch != self.epoch {
            return Err(ProtocolError::Desynchronized { epoch: self.epoch, agent: self.id });
        }
        if msg.bits[0] {
            self.phase = Phase::Refinement;
            self.k0 = Some(self.epoch);
            Ok(true)
        } else {
            self.epoch += 1;
            Ok(false)
        }
    }

    /// Applies a refinement broadcast: `θ̄ ← θ̄ + Q`, and sets `μ₀` at `k₀`.
    pub fn receive_update(&mut self, payload: &Payload, params: &EpochParams) -> Result<(), ProtocolError> {
        if self.phase != Phase::Refinement {
            return Err(ProtocolError::WrongPhase(self.phase.as_str()));
        }
        let d = self.theta_bar.len();
        let update = match payload {
            Payload::Exact { values, .. } => values.clone(),
            Payload::Bits(msg) => {
                if msg.epoch != self.epoch {
                    return Err(ProtocolError::Desynchronized { epoch: self.epoch, agent: self.id });
                }
                let grid = vector_grid(d, params.beta, params.downlink_radius())?;
                let indices = if Some(self.epoch) == self.k0 {
                    decode_fixed(msg, d, grid.half_levels())?
                } else {
                    decode_unary(msg, d)?
                };
                QuantizedVector::new(indices, grid)?.values()
            }
        };
        add_assign(&mut self.theta_bar, &update);
        if Some(self.epoch) == self.k0 {
            self.mu0 = Some(norm2(&self.theta_bar));
        }
        Ok(())
    }

    /// Exploitation action `θ̄/‖θ̄‖`, or `None` when `θ̄ = 0`.
    pub fn exploit_direction(&self) -> Option<Vec<f64>> {
        normalized(&self.theta_bar)
    }

    /// Spends up to `rounds` exploitation rounds; returns the number spent.
    /// Rewards during exploitation are never used, so none are drawn.
    pub fn exploit(&mut self, rounds: u64) -> u64 {
        let n = rounds.min(self.remaining());
        self.pulls_used += n;
        if self.remaining() == 0 {
            self.phase = Phase::Done;
        }
        n
    }

    pub fn finish_epoch(&mut self) {
        self.epoch += 1;
    }
}

/// How the server turns the averaged upload into `θ̂`.
#[derive(Debug, Clone)]
pub enum Estimator {
    /// `θ̂ = θ̄ + mean`.
    Dense,
    /// `θ̂ = argmin (d/m)‖mean − X(θ − θ̄)‖² + λ‖θ‖₁`.
    Lasso { design: Arc<SensingDesign>, tol: f64, max_sweeps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerEstimate {
    pub theta_hat: Vec<f64>,
    /// `(sweeps, converged)` of the LASSO solve.
    pub lasso: Option<(usize, bool)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormDecision {
    Continue,
    Terminate,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    phase: Phase,
    epoch: u32,
    theta_bar: Vec<f64>,
    k0: Option<u32>,
    agents: usize,
    estimator: Estimator,
}

impl ServerState {
    pub fn new(agents: usize, d: usize, estimator: Estimator) -> Self {
        Self { phase: Phase::NormEstimation, epoch: 1, theta_bar: vec![0.0; d], k0: None, agents, estimator }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn theta_bar(&self) -> &[f64] {
        &self.theta_bar
    }

    pub fn k0(&self) -> Option<u32> {
        self.k0
    }

    /// Decodes every upload and returns their average.
    pub fn aggregate(&self, uploads: &[Payload], width: usize, params: &EpochParams) -> Result<Vec<f64>, ProtocolError> {
        if uploads.len() != self.agents {
            return Err(ProtocolError::MissingMessages { epoch: self.epoch, expected: self.agents, got: uploads.len() });
        }
        let mut sum = vec![0.0; width];
        for (agent, up) in uploads.iter().enumerate() {
            let values = match up {
                Payload::Exact { epoch, values } => {
                    if *epoch != self.epoch || values.len() != width {
                        return Err(ProtocolError::Desynchronized { epoch: self.epoch, agent });
                    }
                    values.clone()
                }
                Payload::Bits(msg) => {
                    if msg.epoch != self.epoch {
                        return Err(ProtocolError::Desynchronized { epoch: self.epoch, agent });
                    }
                    let grid = vector_grid(width, params.alpha, params.uplink_radius())?;
                    QuantizedVector::new(decode_unary(msg, width)?, grid)?.values()
                }
            };
            add_assign(&mut sum, &values);
        }
        let m = self.agents as f64;
        Ok(sum.into_iter().map(|x| x / m).collect())
    }

    /// Server estimate `θ̂_k` from the averaged upload.
    pub fn estimate(&self, mean: &[f64], params: &EpochParams) -> ServerEstimate {
        match &self.estimator {
            Estimator::Dense => {
                let mut theta_hat = mean.to_vec();
                add_assign(&mut theta_hat, &self.theta_bar);
                ServerEstimate { theta_hat, lasso: None }
            }
            Estimator::Lasso { design, tol, max_sweeps } => {
                let problem = LassoProblem {
                    design,
                    y: mean,
                    offset: &self.theta_bar,
                    lambda: params.lambda.expect("sparse schedule provides a penalty"),
                };
                let sol = lasso_solve(&problem, *tol, *max_sweeps);
                ServerEstimate { theta_hat: sol.theta, lasso: Some((sol.sweeps, sol.converged)) }
            }
        }
    }

    /// Norm test `τ_k ≤ ‖θ̂‖/4`, forced to terminate at `max_epochs`.
    pub fn norm_step(
        &mut self,
        estimate: &ServerEstimate,
        params: &EpochParams,
        max_epochs: u32,
    ) -> Result<(NormDecision, BitMessage), ProtocolError> {
        if self.phase != Phase::NormEstimation {
            return Err(ProtocolError::WrongPhase(self.phase.as_str()));
        }
        let k = self.epoch;
        let fire = params.tau <= norm2(&estimate.theta_hat) / 4.0 || k >= max_epochs;
        let msg = BitMessage::control(fire, k);
        if fire {
            self.phase = Phase::Refinement;
            self.k0 = Some(k);
            Ok((NormDecision::Terminate, msg))
        } else {
            self.epoch += 1;
            Ok((NormDecision::Continue, msg))
        }
    }

    /// Broadcast of `DetQuant(θ̂ − θ̄, β_k, B_k + τ_k)`; updates `θ̄` by the
    /// decoded broadcast value. Fixed-width at `k₀`, unary afterwards.
    pub fn refine_step(
        &mut self,
        estimate: &ServerEstimate,
        params: &EpochParams,
        sharing: Sharing,
    ) -> Result<Payload, ProtocolError> {
        if self.phase != Phase::Refinement {
            return Err(ProtocolError::WrongPhase(self.phase.as_str()));
        }
        let diff = sub(&estimate.theta_hat, &self.theta_bar);
        let payload = match sharing {
            Sharing::Exact => {
                add_assign(&mut self.theta_bar, &diff);
                Payload::Exact { epoch: self.epoch, values: diff }
            }
            Sharing::Quantized => {
                let radius = params.downlink_radius();
                let d = diff.len();
                let grid = vector_grid(d, params.beta, radius)?;
                let q = quant_on_grid(&clip(&diff, radius), grid, QuantMode::Deterministic, &mut NoDraws)?;
                let msg = if Some(self.epoch) == self.k0 {
                    encode_fixed(&q, Direction::Downlink, self.epoch)
                } else {
                    encode_unary(&q, Direction::Downlink, self.epoch)
                };
                check_message_size(&msg, d, radius, params.beta)?;
                add_assign(&mut self.theta_bar, &q.values());
                Payload::Bits(msg)
            }
        };
        self.epoch += 1;
        Ok(payload)
    }
}

/// Random source handed to the deterministic quantizer; never read.
struct NoDraws;

impl rand::RngCore for NoDraws {
    fn next_u32(&mut self) -> u32 {
        unreachable!("deterministic quantizer drew a random number")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("deterministic quantizer drew a random number")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("deterministic quantizer drew a random number")
    }
}
