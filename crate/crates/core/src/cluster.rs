//! In-memory simulation of a storage cluster: `n` nodes holding striped
//! shards, failure injection, helper-count policies and repair traffic
//! metering.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::encoder::Encoder;
use crate::field::FieldElement;
use crate::params::CodeParams;
use crate::reconstructor::{ReconstructError, ReconstructionSession};
use crate::repairer::{repair_symbols_raw, RepairError, RepairSession};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("source has {len} symbols, not a multiple of the stripe size {stripe}")]
    SourceLength { len: usize, stripe: usize },
    #[error("source symbol modulus {actual} does not match code modulus {expected}")]
    Modulus { expected: u32, actual: u32 },
    #[error("node index {index} out of range 1..={n}")]
    NodeIndex { index: usize, n: usize },
    #[error("node {0} is already failed")]
    AlreadyFailed(usize),
    #[error("node {0} is alive; only failed nodes can be repaired")]
    NotFailed(usize),
    #[error("need {needed} alive nodes but only {alive} are alive (short by {})", needed - alive)]
    InsufficientNodes { needed: usize, alive: usize },
    #[error("helper count {d} is not in D = {valid:?}")]
    InvalidHelperCount { d: usize, valid: Vec<usize> },
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Repair(#[from] RepairError),
}

/// How many helpers a repair contacts. Which helpers is always a seeded
/// uniform draw among the alive nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HelperPolicy {
    /// Largest `d` in `D` not exceeding the alive count.
    MaxD,
    /// Smallest `d` in `D`.
    MinD,
    Fixed(usize),
}

impl HelperPolicy {
    /// Picks `d` for a repair with `alive` candidate helpers.
    pub fn choose(&self, params: &CodeParams, alive: usize) -> Result<usize, ClusterError> {
        let valid = params.helper_counts();
        let d = match *self {
            HelperPolicy::MaxD => valid.iter().rev().find(|&&d| d <= alive).copied(),
            HelperPolicy::MinD => valid.first().copied().filter(|&d| d <= alive),
            HelperPolicy::Fixed(d) => {
                if !params.is_helper_count(d) {
                    return Err(ClusterError::InvalidHelperCount {
                        d,
                        valid: valid.to_vec(),
                    });
                }
                Some(d).filter(|&d| d <= alive)
            }
        };
        d.ok_or_else(|| ClusterError::InsufficientNodes {
            needed: match *self {
                HelperPolicy::Fixed(d) => d,
                _ => valid[0],
            },
            alive,
        })
    }
}

impl fmt::Display for HelperPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HelperPolicy::MaxD => write!(f, "max-d"),
            HelperPolicy::MinD => write!(f, "min-d"),
            HelperPolicy::Fixed(d) => write!(f, "fixed:{d}"),
        }
    }
}

impl FromStr for HelperPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max-d" => Ok(HelperPolicy::MaxD),
            "min-d" => Ok(HelperPolicy::MinD),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|d| d.parse().ok())
                .map(HelperPolicy::Fixed)
                .ok_or_else(|| format!("unknown policy `{s}` (expected max-d, min-d or fixed:<d>)")),
        }
    }
}

/// One completed repair. `symbols_moved` counts the traffic for a single
/// stripe, `d * beta(d)`; multiply by `stripe_count` for the total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairRecord {
    pub stripe_count: usize,
    pub failed: usize,
    pub d: usize,
    pub helpers: Vec<usize>,
    pub symbols_moved: usize,
}

impl RepairRecord {
    pub fn total_symbols_moved(&self) -> usize {
        self.symbols_moved * self.stripe_count
    }

    /// `stripe_count,f,d,helpers,symbols_moved`; helpers are `;`-separated.
    pub fn csv_line(&self) -> String {
        let helpers: Vec<String> = self.helpers.iter().map(|h| h.to_string()).collect();
        format!(
            "{},{},{},{},{}",
            self.stripe_count,
            self.failed,
            self.d,
            helpers.join(";"),
            self.symbols_moved
        )
    }
}

pub const LEDGER_HEADER: &str = "stripe_count,f,d,helpers,symbols_moved";

#[derive(Debug, Clone, PartialEq, Eq)]
enum NodeState {
    /// Concatenated `alpha`-symbol shards, one per stripe.
    Alive(Vec<u32>),
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    params: CodeParams,
    nodes: Vec<NodeState>,
    stripes: usize,
    ledger: Vec<RepairRecord>,
}

impl Cluster {
    /// An empty cluster with every node alive and no stripes.
    pub fn new(params: &CodeParams) -> Self {
        Self {
            params: params.clone(),
            nodes: vec![NodeState::Alive(Vec::new()); params.n()],
            stripes: 0,
            ledger: Vec::new(),
        }
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn stripe_count(&self) -> usize {
        self.stripes
    }

    pub fn ledger(&self) -> &[RepairRecord] {
        &self.ledger
    }

    pub fn ledger_csv(&self) -> String {
        let mut out = String::from(LEDGER_HEADER);
        out.push('\n');
        for r in &self.ledger {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn is_alive(&self, node: usize) -> bool {
        matches!(self.nodes.get(node.wrapping_sub(1)), Some(NodeState::Alive(_)))
    }

    pub fn alive_nodes(&self) -> Vec<usize> {
        (1..=self.params.n()).filter(|&j| self.is_alive(j)).collect()
    }

    /// Everything node `node` currently holds, or `None` if it is failed.
    pub fn node_symbols(&self, node: usize) -> Option<Vec<FieldElement>> {
        let field = self.params.field();
        match self.nodes.get(node.wrapping_sub(1))? {
            NodeState::Alive(data) => Some(data.iter().map(|&v| field.element(v as u64)).collect()),
            NodeState::Failed => None,
        }
    }

    fn check_index(&self, node: usize) -> Result<(), ClusterError> {
        let n = self.params.n();
        if node == 0 || node > n {
            return Err(ClusterError::NodeIndex { index: node, n });
        }
        Ok(())
    }

    /// Replaces the stored content with `source`, split into stripes of `F`
    /// symbols. Every node is brought back alive; the ledger is kept.
    pub fn store(&mut self, source: &[FieldElement]) -> Result<(), ClusterError> {
        let q = self.params.q();
        if let Some(bad) = source.iter().find(|s| s.field().modulus() != q) {
            return Err(ClusterError::Modulus {
                expected: q,
                actual: bad.field().modulus(),
            });
        }
        let raw: Vec<u32> = source.iter().map(|s| s.value()).collect();
        self.store_raw(&raw)
    }

    pub(crate) fn store_raw(&mut self, source: &[u32]) -> Result<(), ClusterError> {
        let stripe = self.params.file_symbols();
        if !source.len().is_multiple_of(stripe) {
            return Err(ClusterError::SourceLength {
                len: source.len(),
                stripe,
            });
        }
        let encoder = Encoder::new(&self.params);
        let encoded: Vec<Vec<Vec<u32>>> = source
            .par_chunks(stripe)
            .map(|chunk| encoder.encode_stripe_raw(chunk))
            .collect();
        let alpha = self.params.alpha();
        let stripes = encoded.len();
        self.nodes = (0..self.params.n())
            .map(|j| {
                let mut data = Vec::with_capacity(stripes * alpha);
                for s in &encoded {
                    data.extend_from_slice(&s[j]);
                }
                NodeState::Alive(data)
            })
            .collect();
        self.stripes = stripes;
        Ok(())
    }

    pub fn fail_node(&mut self, node: usize) -> Result<(), ClusterError> {
        self.check_index(node)?;
        if !self.is_alive(node) {
            return Err(ClusterError::AlreadyFailed(node));
        }
        self.nodes[node - 1] = NodeState::Failed;
        Ok(())
    }

    /// Decodes every stripe from the lowest-indexed `k` alive nodes.
    pub fn read_all(&self) -> Result<Vec<FieldElement>, ClusterError> {
        let field = self.params.field();
        Ok(self
            .read_all_raw()?
            .into_iter()
            .map(|v| field.element(v as u64))
            .collect())
    }

    pub(crate) fn read_all_raw(&self) -> Result<Vec<u32>, ClusterError> {
        let k = self.params.k();
        let alive = self.alive_nodes();
        if alive.len() < k {
            return Err(ClusterError::InsufficientNodes {
                needed: k,
                alive: alive.len(),
            });
        }
        let readers = &alive[..k];
        let session = ReconstructionSession::new(&self.params, readers)?;
        let alpha = self.params.alpha();
        let data: Vec<&[u32]> = readers.iter().map(|&j| self.alive_data(j)).collect();
        let stripes: Vec<Vec<u32>> = (0..self.stripes)
            .into_par_iter()
            .map(|s| {
                let rows: Vec<Vec<u32>> = data.iter().map(|d| d[s * alpha..(s + 1) * alpha].to_vec()).collect();
                session.reconstruct_raw(&rows)
            })
            .collect::<Result<_, _>>()?;
        Ok(stripes.concat())
    }

    fn alive_data(&self, node: usize) -> &[u32] {
        match &self.nodes[node - 1] {
            NodeState::Alive(data) => data,
            NodeState::Failed => unreachable!("caller selects alive nodes"),
        }
    }

    /// Repairs failed node `failed`: `policy` picks `d`, a `ChaCha8` stream
    /// seeded with `seed` picks the helpers. Returns the new ledger entry.
    pub fn run_repair(&mut self, failed: usize, policy: HelperPolicy, seed: u64) -> Result<&RepairRecord, ClusterError> {
        self.check_index(failed)?;
        if self.is_alive(failed) {
            return Err(ClusterError::NotFailed(failed));
        }
        let alive = self.alive_nodes();
        let d = policy.choose(&self.params, alive.len())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut helpers: Vec<usize> = alive.choose_multiple(&mut rng, d).copied().collect();
        helpers.sort_unstable();

        let session = RepairSession::new(&self.params, failed, &helpers)?;
        let alpha = self.params.alpha();
        let params = &self.params;
        let data: Vec<&[u32]> = helpers.iter().map(|&h| self.alive_data(h)).collect();
        let mut moved_per_stripe = 0;
        let repaired: Vec<(Vec<u32>, usize)> = (0..self.stripes)
            .into_par_iter()
            .map(|s| {
                let upsilon: Vec<Vec<u32>> = data
                    .iter()
                    .map(|h| repair_symbols_raw(params, &h[s * alpha..(s + 1) * alpha], failed, d))
                    .collect();
                let moved = upsilon.iter().map(Vec::len).sum();
                (session.repair_raw(&upsilon), moved)
            })
            .collect();
        let mut shard = Vec::with_capacity(self.stripes * alpha);
        for (symbols, moved) in repaired {
            moved_per_stripe = moved;
            shard.extend_from_slice(&symbols);
        }
        if self.stripes == 0 {
            moved_per_stripe = 0;
        }
        self.nodes[failed - 1] = NodeState::Alive(shard);
        self.ledger.push(RepairRecord {
            stripe_count: self.stripes,
            failed,
            d,
            helpers,
            symbols_moved: moved_per_stripe,
        });
        Ok(self.ledger.last().expect("just pushed"))
    }
}
