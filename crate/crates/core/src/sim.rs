//! Lockstep runs, baselines and replication batches.
//!
//! A run moves `M` agents and the server through the protocol one epoch at a
//! time. All agents in a lockstep group play the same action sequence (the
//! probe cycle during exploration, `θ̄/‖θ̄‖` during exploitation), so regret
//! is kept as a [`Timeline`] of blocks and evaluated exactly at checkpoints.
//! Exploitation rewards are never consumed by the protocol and are not drawn.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::Quantiles;
use crate::codec::{ChannelLedger, Encoding};
use crate::error::{ProtocolError, SimError};
use crate::model::{sample_instance, BanditInstance};
use crate::pls::{
    AgentState, Estimator, Exploration, NormDecision, Payload, Phase, ProbeSet, Sampling, ServerState, Sharing,
};
use crate::rng::SeedTree;
use crate::schedule::{PolicyConfig, Schedule};
use crate::sparse::{SensingDesign, LASSO_MAX_SWEEPS, LASSO_TOL};
use crate::timeline::Timeline;
use crate::vector::{distance, normalized};

pub use crate::timeline::Segment;

/// Version of the serialized [`RunRecord`] layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Pls,
    SparsePls,
    /// PLS sharing real vectors; bits are not accounted.
    UnquantizedPls,
    /// `M` single-agent PLS learners that never communicate.
    IndependentAgents,
    /// Every agent plays `θ*/‖θ*‖`.
    FixedOptimal,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Pls => "pls",
            Algorithm::SparsePls => "sparse_pls",
            Algorithm::UnquantizedPls => "unquantized_pls",
            Algorithm::IndependentAgents => "independent_agents",
            Algorithm::FixedOptimal => "fixed_optimal",
        }
    }
}

/// Everything that determines a run besides the instance and the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub policy: PolicyConfig,
    pub algorithm: Algorithm,
    /// Channel capacity `R` in bits per use.
    pub capacity: u64,
}

impl RunSpec {
    pub fn new(policy: PolicyConfig, algorithm: Algorithm) -> Self {
        Self { policy, algorithm, capacity: 64 }
    }

    pub fn with_capacity(mut self, capacity: u64) -> Self {
        self.capacity = capacity;
        self
    }

    /// Policy actually used: the sparse block only matters for Sparse-PLS.
    fn effective_policy(&self) -> PolicyConfig {
        let mut p = self.policy;
        if self.algorithm != Algorithm::SparsePls {
            p.sparse = None;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochStage {
    Norm,
    Refine,
    /// Rounds after the last communication.
    Tail,
}

/// One protocol epoch of one lockstep group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Lockstep group; always 0 except for independent agents.
    pub group: usize,
    pub k: u32,
    pub stage: EpochStage,
    pub start_t: u64,
    /// End of the exploration part; communication happens here.
    pub explore_end_t: u64,
    pub end_t: u64,
    /// False when the horizon cut the exploration short.
    pub completed: bool,
    pub tau: Option<f64>,
    /// `‖θ̂_k − θ*‖₂` of the server estimate.
    pub server_error: Option<f64>,
    pub uplink_bits: Option<u64>,
    pub uplink_max_message_bits: Option<u64>,
    pub downlink_bits: Option<u64>,
    pub downlink_encoding: Option<Encoding>,
    pub terminated: Option<bool>,
    pub exploit_rounds: u64,
    pub lasso_sweeps: Option<usize>,
    pub lasso_converged: Option<bool>,
}

impl EpochRecord {
    pub fn pulls(&self) -> u64 {
        self.end_t - self.start_t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    /// Cumulative regret over all agents.
    pub regret: f64,
    /// Uplink bits over all agents; `None` when bits are not accounted.
    pub c_u_bits: Option<u64>,
    /// Downlink bits per agent.
    pub c_d_bits: Option<u64>,
    pub segment: Segment,
    pub epoch: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config_hash: String,
    pub spec: RunSpec,
    pub instance: BanditInstance,
    pub max_epochs: u32,
    pub k0: Option<u32>,
    pub mu0: Option<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub epochs: Vec<EpochRecord>,
    pub final_error: f64,
    pub total_regret: f64,
    pub uplink_bits: Option<u64>,
    pub downlink_bits: Option<u64>,
    pub uplink_uses: Option<u64>,
    pub downlink_uses: Option<u64>,
    /// Largest number of uplink messages sent by any one agent.
    pub uplink_messages_per_agent: u32,
}

/// One CSV row of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub run_id: String,
    pub t: u64,
    pub regret: f64,
    pub c_u_bits: Option<u64>,
    pub c_d_bits: Option<u64>,
    pub stage: Segment,
    pub epoch: u32,
}

impl RunRecord {
    pub fn curve_rows<'a>(&'a self, run_id: &'a str) -> impl Iterator<Item = CurveRow> + 'a {
        self.checkpoints.iter().map(move |c| CurveRow {
            run_id: run_id.to_string(),
            t: c.t,
            regret: c.regret,
            c_u_bits: c.c_u_bits,
            c_d_bits: c.c_d_bits,
            stage: c.segment,
            epoch: c.epoch,
        })
    }

    /// Cumulative regret at a checkpoint time.
    pub fn regret_at(&self, t: u64) -> Option<f64> {
        self.checkpoint(t).map(|c| c.regret)
    }

    pub fn checkpoint(&self, t: u64) -> Option<&Checkpoint> {
        self.checkpoints.binary_search_by_key(&t, |c| c.t).ok().map(|i| &self.checkpoints[i])
    }
}

/// Powers of two below `horizon`, then `horizon` itself.
pub fn checkpoint_grid(horizon: u64) -> Vec<u64> {
    let mut grid: Vec<u64> = (0..64).map(|i| 1u64 << i).take_while(|t| *t < horizon).collect();
    grid.push(horizon);
    grid
}

/// Hex SHA-256 of the canonical JSON of everything that determines a run.
pub fn config_hash(spec: &RunSpec, instance: &BanditInstance) -> String {
    let doc = serde_json::to_vec(&(spec, instance)).expect("config serializes");
    hex::encode(Sha256::digest(&doc))
}

/// Bits sent at one moment, as seen by the bit curves.
#[derive(Debug, Clone, Copy)]
struct CommEvent {
    t: u64,
    uplink: u64,
    downlink: u64,
}

struct GroupOutcome {
    timeline: Timeline,
    epochs: Vec<EpochRecord>,
    events: Vec<CommEvent>,
    ledger: ChannelLedger,
    theta_bar: Vec<f64>,
    k0: Option<u32>,
    mu0: Option<f64>,
    uplinks: u32,
}

/// Inputs of one lockstep group.
struct Group<'a> {
    schedule: &'a Schedule,
    instance: &'a BanditInstance,
    probes: &'a ProbeSet,
    estimator: Estimator,
    sharing: Sharing,
    sampling: Sampling,
    seeds: SeedTree,
    /// Stream index of the first agent.
    first_stream: u64,
    group: usize,
    capacity: u64,
}

impl Group<'_> {
    fn drive(self) -> Result<GroupOutcome, SimError> {
        let cfg = self.schedule.config();
        let (m, d, horizon) = (cfg.agents, cfg.d, cfg.horizon);
        let big_k = self.schedule.max_epochs();
        let width = self.probes.width();
        let mut agents: Vec<AgentState> = (0..m)
            .map(|j| {
                AgentState::new(j, d, horizon, &self.seeds, self.first_stream + j as u64).with_sampling(self.sampling)
            })
            .collect();
        let mut server = ServerState::new(m, d, self.estimator.clone());
        let mut timeline = Timeline::new(m);
        let mut ledger = ChannelLedger::new(self.capacity);
        let mut epochs = Vec::new();
        let mut events = Vec::new();
        let mut uplinks = 0u32;
        let regrets = self.probes.regrets();
        let theta_star = self.instance.theta_star();

        loop {
            let t = agents[0].pulls_used();
            if t == horizon {
                break;
            }
            let k = server.epoch();
            for a in &agents {
                if a.epoch() != k || a.pulls_used() != t {
                    return Err(ProtocolError::Desynchronized { epoch: k, agent: a.id() }.into());
                }
            }
            if uplinks >= big_k {
                self.tail(&mut agents, &mut timeline, &mut epochs, &regrets, k.saturating_sub(1), t);
                break;
            }
            let params = self.schedule.resolutions(k)?;
            let stage = match server.phase() {
                Phase::NormEstimation => EpochStage::Norm,
                _ => EpochStage::Refine,
            };
            let segment = if stage == EpochStage::Norm { Segment::Norm } else { Segment::Explore };
            let mut record = EpochRecord {
                group: self.group,
                k,
                stage,
                start_t: t,
                explore_end_t: t,
                end_t: t,
                completed: false,
                tau: Some(params.tau),
                server_error: None,
                uplink_bits: None,
                uplink_max_message_bits: None,
                downlink_bits: None,
                downlink_encoding: None,
                terminated: None,
                exploit_rounds: 0,
                lasso_sweeps: None,
                lasso_converged: None,
            };

            let mut estimates = Vec::with_capacity(m);
            for a in agents.iter_mut() {
                match a.explore(self.probes, self.instance, params.s) {
                    Exploration::Complete(e) => estimates.push(e),
                    Exploration::Partial { pulls } => {
                        timeline.push_cyclic(segment, k, pulls, Arc::clone(&regrets));
                        record.explore_end_t = t + pulls;
                        record.end_t = t + pulls;
                        estimates.clear();
                        break;
                    }
                }
            }
            if estimates.is_empty() {
                // Every agent shares the same budget, so all ran out together.
                for a in agents.iter_mut().skip(1) {
                    a.explore(self.probes, self.instance, params.s);
                }
                epochs.push(record);
                break;
            }
            let explore_len = width as u64 * params.s;
            timeline.push_cyclic(segment, k, explore_len, Arc::clone(&regrets));
            let t_comm = t + explore_len;
            record.explore_end_t = t_comm;
            record.completed = true;

            let mut uploads = Vec::with_capacity(m);
            for (a, e) in agents.iter_mut().zip(&estimates) {
                uploads.push(a.uplink(e, self.probes, &params, self.sharing)?);
            }
            uplinks += 1;
            let mut up_total = 0u64;
            let mut up_max = 0u64;
            for u in &uploads {
                if let Some(msg) = u.message() {
                    ledger.transmit(msg);
                    up_total += msg.len() as u64;
                    up_max = up_max.max(msg.len() as u64);
                }
            }
            let mean = server.aggregate(&uploads, width, &params)?;
            let estimate = server.estimate(&mean, &params);
            record.server_error = Some(distance(&estimate.theta_hat, theta_star));
            if let Some((sweeps, converged)) = estimate.lasso {
                record.lasso_sweeps = Some(sweeps);
                record.lasso_converged = Some(converged);
            }

            let down_bits;
            match stage {
                EpochStage::Norm => {
                    let (decision, control) = server.norm_step(&estimate, &params, big_k)?;
                    for a in agents.iter_mut() {
                        let stop = a.receive_control(&control)?;
                        if stop != (decision == NormDecision::Terminate) {
                            return Err(ProtocolError::Desynchronized { epoch: k, agent: a.id() }.into());
                        }
                    }
                    ledger.transmit(&control);
                    down_bits = control.len() as u64;
                    record.downlink_encoding = Some(Encoding::Control);
                    record.terminated = Some(decision == NormDecision::Terminate);
                    record.end_t = t_comm;
                }
                _ => {
                    let payload = server.refine_step(&estimate, &params, self.sharing)?;
                    for a in agents.iter_mut() {
                        a.receive_update(&payload, &params)?;
                        if a.theta_bar() != server.theta_bar() {
                            return Err(ProtocolError::Desynchronized { epoch: k, agent: a.id() }.into());
                        }
                    }
                    down_bits = payload.bits().unwrap_or(0) as u64;
                    if let Payload::Bits(msg) = &payload {
                        ledger.transmit(msg);
                        record.downlink_encoding = Some(msg.encoding);
                    }
                    let mu0 = agents[0].mu0().expect("set at the first refinement epoch");
                    let t_k = self.schedule.exploitation_length(k, mu0)?;
                    let direction = agents[0].exploit_direction();
                    let wanted = if direction.is_some() { t_k } else { 0 };
                    let mut spent = 0;
                    for a in agents.iter_mut() {
                        spent = a.exploit(wanted);
                        a.finish_epoch();
                    }
                    if let Some(dir) = direction {
                        timeline.push_constant(Segment::Exploit, k, spent, self.instance.regret_of(&dir));
                    }
                    record.exploit_rounds = spent;
                    record.end_t = t_comm + spent;
                }
            }
            if self.sharing == Sharing::Quantized {
                record.uplink_bits = Some(up_total);
                record.uplink_max_message_bits = Some(up_max);
                record.downlink_bits = Some(down_bits);
                events.push(CommEvent { t: t_comm, uplink: up_total, downlink: down_bits });
            }
            epochs.push(record);
        }

        Ok(GroupOutcome {
            timeline,
            epochs,
            events,
            ledger,
            theta_bar: server.theta_bar().to_vec(),
            k0: server.k0(),
            mu0: agents[0].mu0(),
            uplinks,
        })
    }

    /// Plays out the horizon after the last permitted uplink: `θ̄/‖θ̄‖` if
    /// available, the probe cycle otherwise.
    fn tail(
        &self,
        agents: &mut [AgentState],
        timeline: &mut Timeline,
        epochs: &mut Vec<EpochRecord>,
        regrets: &Arc<[f64]>,
        k: u32,
        t: u64,
    ) {
        let rest = agents[0].remaining();
        match normalized(agents[0].theta_bar()) {
            Some(dir) => timeline.push_constant(Segment::Tail, k, rest, self.instance.regret_of(&dir)),
            None => timeline.push_cyclic(Segment::Tail, k, rest, Arc::clone(regrets)),
        }
        for a in agents.iter_mut() {
            a.exploit(rest);
        }
        epochs.push(EpochRecord {
            group: self.group,
            k,
            stage: EpochStage::Tail,
            start_t: t,
            explore_end_t: t,
            end_t: t + rest,
            completed: true,
            tau: None,
            server_error: None,
            uplink_bits: None,
            uplink_max_message_bits: None,
            downlink_bits: None,
            downlink_encoding: None,
            terminated: None,
            exploit_rounds: rest,
            lasso_sweeps: None,
            lasso_converged: None,
        });
    }
}

/// Executes one run of `spec` on `instance`. Deterministic in
/// `(spec, instance, seed)`.
pub fn run(spec: &RunSpec, instance: &BanditInstance, seed: u64) -> Result<RunRecord, SimError> {
    run_with(spec, instance, seed, Sampling::default())
}

/// [`run`] with an explicit exploration sampling mode.
pub fn run_with(spec: &RunSpec, instance: &BanditInstance, seed: u64, sampling: Sampling) -> Result<RunRecord, SimError> {
    let policy = spec.effective_policy();
    policy.validate()?;
    if instance.dim() != policy.d {
        return Err(SimError::Setup(format!(
            "instance dimension {} does not match d = {}",
            instance.dim(),
            policy.d
        )));
    }
    if spec.capacity == 0 {
        return Err(SimError::Setup("channel capacity must be at least 1".into()));
    }
    if spec.algorithm == Algorithm::SparsePls && policy.sparse.is_none() {
        return Err(SimError::Setup("sparse_pls needs a sparse block with s and m".into()));
    }
    let seeds = SeedTree::new(seed);
    let schedule = Schedule::new(policy)?;
    let horizon = policy.horizon;
    let theta_star = instance.theta_star();

    let (groups, accounted): (Vec<GroupOutcome>, bool) = match spec.algorithm {
        Algorithm::Pls | Algorithm::UnquantizedPls | Algorithm::SparsePls => {
            let (probes, estimator) = if spec.algorithm == Algorithm::SparsePls {
                let sp = policy.sparse.expect("checked above");
                let design = Arc::new(SensingDesign::sample(policy.d, sp.m, seed));
                let probes = ProbeSet::sensing(&design, instance)?;
                (probes, Estimator::Lasso { design, tol: LASSO_TOL, max_sweeps: LASSO_MAX_SWEEPS })
            } else {
                (ProbeSet::standard_basis(instance), Estimator::Dense)
            };
            let sharing =
                if spec.algorithm == Algorithm::UnquantizedPls { Sharing::Exact } else { Sharing::Quantized };
            let outcome = Group {
                schedule: &schedule,
                instance,
                probes: &probes,
                estimator,
                sharing,
                sampling,
                seeds,
                first_stream: 0,
                group: 0,
                capacity: spec.capacity,
            }
            .drive()?;
            (vec![outcome], sharing == Sharing::Quantized)
        }
        Algorithm::IndependentAgents => {
            let single = Schedule::new(PolicyConfig { agents: 1, ..policy })?;
            let probes = ProbeSet::standard_basis(instance);
            let outcomes = (0..policy.agents)
                .map(|j| {
                    Group {
                        schedule: &single,
                        instance,
                        probes: &probes,
                        estimator: Estimator::Dense,
                        sharing: Sharing::Exact,
                        sampling,
                        seeds,
                        first_stream: j as u64,
                        group: j,
                        capacity: spec.capacity,
                    }
                    .drive()
                })
                .collect::<Result<Vec<_>, _>>()?;
            (outcomes, true)
        }
        Algorithm::FixedOptimal => {
            let mut timeline = Timeline::new(policy.agents);
            timeline.push_constant(Segment::Exploit, 0, horizon, 0.0);
            let theta_bar = normalized(theta_star)
                .map(|u| u.iter().map(|x| x * instance.optimal_value()).collect())
                .unwrap_or_else(|| vec![0.0; policy.d]);
            let outcome = GroupOutcome {
                timeline,
                epochs: vec![EpochRecord {
                    group: 0,
                    k: 0,
                    stage: EpochStage::Tail,
                    start_t: 0,
                    explore_end_t: 0,
                    end_t: horizon,
                    completed: true,
                    tau: None,
                    server_error: None,
                    uplink_bits: None,
                    uplink_max_message_bits: None,
                    downlink_bits: None,
                    downlink_encoding: None,
                    terminated: None,
                    exploit_rounds: horizon,
                    lasso_sweeps: None,
                    lasso_converged: None,
                }],
                events: Vec::new(),
                ledger: ChannelLedger::new(spec.capacity),
                theta_bar,
                k0: None,
                mu0: None,
                uplinks: 0,
            };
            (vec![outcome], true)
        }
    };

    Ok(assemble(spec, instance, seed, schedule.max_epochs(), groups, accounted))
}

fn assemble(
    spec: &RunSpec,
    instance: &BanditInstance,
    seed: u64,
    max_epochs: u32,
    groups: Vec<GroupOutcome>,
    accounted: bool,
) -> RunRecord {
    let horizon = spec.policy.horizon;
    let mut times = checkpoint_grid(horizon);
    for g in &groups {
        times.extend(g.timeline.boundaries());
    }
    times.sort_unstable();
    times.dedup();

    let mut events: Vec<CommEvent> = groups.iter().flat_map(|g| g.events.iter().copied()).collect();
    events.sort_by_key(|e| e.t);
    let mut next_event = 0;
    let (mut up, mut down) = (0u64, 0u64);
    let label_source = &groups[0].timeline;
    let checkpoints = times
        .into_iter()
        .map(|t| {
            while next_event < events.len() && events[next_event].t <= t {
                up += events[next_event].uplink;
                down += events[next_event].downlink;
                next_event += 1;
            }
            let regret = groups.iter().map(|g| g.timeline.cumulative(t)).sum();
            let (segment, epoch) = label_source.label(t).unwrap_or((Segment::Exploit, 0));
            Checkpoint {
                t,
                regret,
                c_u_bits: accounted.then_some(up),
                c_d_bits: accounted.then_some(down),
                segment,
                epoch,
            }
        })
        .collect::<Vec<_>>();

    let total_regret = checkpoints.last().map_or(0.0, |c| c.regret);
    let theta_star = instance.theta_star();
    let final_error =
        groups.iter().map(|g| distance(&g.theta_bar, theta_star)).sum::<f64>() / groups.len() as f64;
    let sum = |f: fn(&ChannelLedger) -> u64| accounted.then(|| groups.iter().map(|g| f(&g.ledger)).sum::<u64>());
    let lead = &groups[0];
    RunRecord {
        schema_version: SCHEMA_VERSION,
        algorithm: spec.algorithm,
        seed,
        config_hash: config_hash(spec, instance),
        spec: *spec,
        instance: instance.clone(),
        max_epochs,
        k0: lead.k0,
        mu0: lead.mu0,
        checkpoints,
        epochs: groups.iter().flat_map(|g| g.epochs.iter().cloned()).collect(),
        final_error,
        total_regret,
        uplink_bits: sum(|l| l.uplink_bits),
        downlink_bits: sum(|l| l.downlink_bits),
        uplink_uses: sum(|l| l.uplink_uses),
        downlink_uses: sum(|l| l.downlink_uses),
        uplink_messages_per_agent: groups.iter().map(|g| g.uplinks).max().unwrap_or(0),
    }
}

/// Where replication instances come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSpec {
    /// The same `θ*` for every replication.
    Fixed(BanditInstance),
    /// Fresh uniformly random direction (and support) per replication.
    RandomDirection { d: usize, norm: f64, sigma: f64, sparsity: Option<usize> },
}

impl InstanceSpec {
    pub fn instance_for(&self, seed: u64) -> Result<BanditInstance, SimError> {
        match self {
            InstanceSpec::Fixed(i) => Ok(i.clone()),
            InstanceSpec::RandomDirection { d, norm, sigma, sparsity } => {
                Ok(sample_instance(*d, *norm, *sigma, *sparsity, seed)?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub t: u64,
    pub regret: Quantiles,
    pub c_u_bits: Option<Quantiles>,
    pub c_d_bits: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub reps: usize,
    pub points: Vec<SummaryPoint>,
    pub total_regret: Quantiles,
    pub final_error: Quantiles,
}

impl Summary {
    /// Quantiles over records at every shared grid point.
    pub fn of(records: &[RunRecord]) -> Option<Self> {
        let first = records.first()?;
        let grid = checkpoint_grid(first.spec.policy.horizon);
        let points = grid
            .into_iter()
            .filter_map(|t| {
                let cps: Option<Vec<&Checkpoint>> = records.iter().map(|r| r.checkpoint(t)).collect();
                let cps = cps?;
                let regret = Quantiles::of(&cps.iter().map(|c| c.regret).collect::<Vec<_>>());
                let bits = |f: fn(&Checkpoint) -> Option<u64>| {
                    let v: Option<Vec<f64>> = cps.iter().map(|c| f(c).map(|b| b as f64)).collect();
                    v.map(|v| Quantiles::of(&v))
                };
                Some(SummaryPoint { t, regret, c_u_bits: bits(|c| c.c_u_bits), c_d_bits: bits(|c| c.c_d_bits) })
            })
            .collect();
        Some(Summary {
            reps: records.len(),
            points,
            total_regret: Quantiles::of(&records.iter().map(|r| r.total_regret).collect::<Vec<_>>()),
            final_error: Quantiles::of(&records.iter().map(|r| r.final_error).collect::<Vec<_>>()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

/// Seed of replication `rep` under a batch seed.
pub fn replication_seed(batch_seed: u64, rep: u64) -> u64 {
    SeedTree::new(batch_seed).child(rep).root()
}

/// Runs `n_reps` independent replications on `parallelism` worker threads.
/// Results are identical for every `parallelism`.
pub fn replicate(
    spec: &RunSpec,
    instances: &InstanceSpec,
    n_reps: usize,
    batch_seed: u64,
    parallelism: usize,
) -> Result<Replication, SimError> {
    if n_reps == 0 {
        return Err(SimError::Setup("n_reps must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| SimError::Setup(format!("worker pool: {e}")))?;
    let records = pool.install(|| {
        (0..n_reps as u64)
            .into_par_iter()
            .map(|r| {
                let seed = replication_seed(batch_seed, r);
                let instance = instances.instance_for(seed)?;
                run(spec, &instance, seed)
            })
            .collect::<Result<Vec<_>, SimError>>()
    })?;
    let summary = Summary::of(&records).expect("at least one record");
    Ok(Replication { records, summary })
}
