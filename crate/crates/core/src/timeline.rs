//! Exact cumulative regret from a sequence of action blocks.
//!
//! Every round of a lockstep group falls into a block that either cycles
//! through a fixed list of probe actions or repeats one action. Prefix regret
//! at any round is then a closed form per block.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::vector::KahanSum;

/// What the agents are doing during a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    /// Exploration while estimating the norm.
    Norm,
    /// Refinement exploration.
    Explore,
    /// Refinement exploitation.
    Exploit,
    /// Play after the last communication round.
    Tail,
}

impl Segment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Segment::Norm => "norm",
            Segment::Explore => "explore",
            Segment::Exploit => "exploit",
            Segment::Tail => "tail",
        }
    }
}

#[derive(Debug, Clone)]
enum Pattern {
    Cyclic { regrets: Arc<[f64]>, cycle_sum: f64 },
    Constant(f64),
}

#[derive(Debug, Clone)]
struct Block {
    start: u64,
    len: u64,
    segment: Segment,
    epoch: u32,
    pattern: Pattern,
}

impl Block {
    /// Regret of the first `n` rounds of the block, one agent.
    fn prefix(&self, n: u64) -> f64 {
        match &self.pattern {
            Pattern::Constant(r) => *r * n as f64,
            Pattern::Cyclic { regrets, cycle_sum } => {
                let p = regrets.len() as u64;
                let full = n / p;
                let rem = (n % p) as usize;
                *cycle_sum * full as f64 + regrets[..rem].iter().sum::<f64>()
            }
        }
    }
}

/// Blocks of one lockstep group of `weight` agents.
#[derive(Debug, Clone)]
pub(crate) struct Timeline {
    blocks: Vec<Block>,
    /// Group regret accumulated up to the end of each block.
    totals: Vec<f64>,
    running: KahanSum,
    weight: f64,
}

impl Timeline {
    pub fn new(weight: usize) -> Self {
        Self { blocks: Vec::new(), totals: Vec::new(), running: KahanSum::default(), weight: weight as f64 }
    }

    pub fn end(&self) -> u64 {
        self.blocks.last().map_or(0, |b| b.start + b.len)
    }

    /// Appends `len` rounds cycling through actions with the given regrets.
    pub fn push_cyclic(&mut self, segment: Segment, epoch: u32, len: u64, regrets: Arc<[f64]>) {
        assert!(!regrets.is_empty());
        let cycle_sum = regrets.iter().sum();
        self.push(segment, epoch, len, Pattern::Cyclic { regrets, cycle_sum });
    }

    pub fn push_constant(&mut self, segment: Segment, epoch: u32, len: u64, regret: f64) {
        self.push(segment, epoch, len, Pattern::Constant(regret.max(0.0)));
    }

    fn push(&mut self, segment: Segment, epoch: u32, len: u64, pattern: Pattern) {
        if len == 0 {
            return;
        }
        let block = Block { start: self.end(), len, segment, epoch, pattern };
        self.running.add(self.weight * block.prefix(len));
        self.totals.push(self.running.value());
        self.blocks.push(block);
    }

    /// Index of the block holding round `t` (0-based), if any.
    fn block_of(&self, t: u64) -> Option<usize> {
        let i = self.blocks.partition_point(|b| b.start + b.len <= t);
        (i < self.blocks.len()).then_some(i)
    }

    /// Group regret over rounds `0..t`.
    pub fn cumulative(&self, t: u64) -> f64 {
        if t == 0 || self.blocks.is_empty() {
            return 0.0;
        }
        match self.block_of(t - 1) {
            None => *self.totals.last().expect("non-empty"),
            Some(i) => {
                let before = if i == 0 { 0.0 } else { self.totals[i - 1] };
                let b = &self.blocks[i];
                before + self.weight * b.prefix(t - b.start)
            }
        }
    }

    /// Segment and epoch of round `t − 1`, the last round counted by
    /// `cumulative(t)`.
    pub fn label(&self, t: u64) -> Option<(Segment, u32)> {
        let i = self.block_of(t.saturating_sub(1))?;
        Some((self.blocks[i].segment, self.blocks[i].epoch))
    }

    /// Round index at the end of every block.
    pub fn boundaries(&self) -> impl Iterator<Item = u64> + '_ {
        self.blocks.iter().map(|b| b.start + b.len)
    }
}
