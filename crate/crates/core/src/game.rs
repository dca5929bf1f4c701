//! Cooperative games and the memoizing handle estimators evaluate them
//! through.

use std::sync::atomic::{AtomicU64, Ordering};

use dashmap::DashMap;

use crate::coalition::Coalition;
use crate::domain::MemberDataset;
use crate::error::Result;
use crate::pipeline::{Action, CoalitionValue, PipelineConfig, PreparedPipeline};

/// Result of evaluating one coalition.
///
/// `label` is a discrete summary of the outcome (for the trading game, the
/// action taken). Implementations guarantee that equal labels imply equal
/// values, so a marginal contribution vanishes wherever the labels agree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub value: f64,
    pub label: i64,
}

pub trait CoalitionGame: Sync {
    fn players(&self) -> usize;

    fn outcome(&self, coalition: &Coalition) -> Outcome;

    fn player_id(&self, index: usize) -> String {
        format!("p{index}")
    }
}

/// The trading pipeline as a cooperative game over dataset members, indexed
/// in sorted member-id order.
#[derive(Debug, Clone)]
pub struct PipelineGame {
    prepared: PreparedPipeline,
}

fn action_label(action: Action) -> i64 {
    match action {
        Action::NoTrade => 0,
        Action::Long => 1,
        Action::Short => -1,
    }
}

impl PipelineGame {
    pub fn new(dataset: &MemberDataset, config: PipelineConfig) -> Result<Self> {
        Ok(PipelineGame {
            prepared: PreparedPipeline::new(dataset, config)?,
        })
    }

    pub fn prepared(&self) -> &PreparedPipeline {
        &self.prepared
    }

    pub fn coalition_value(&self, coalition: &Coalition) -> CoalitionValue {
        self.prepared.evaluate(coalition.iter())
    }

    pub fn grand_value(&self) -> CoalitionValue {
        self.coalition_value(&Coalition::full(self.players()))
    }
}

impl CoalitionGame for PipelineGame {
    fn players(&self) -> usize {
        self.prepared.len()
    }

    fn outcome(&self, coalition: &Coalition) -> Outcome {
        let v = self.coalition_value(coalition);
        Outcome {
            value: v.value,
            label: action_label(v.decision.action),
        }
    }

    fn player_id(&self, index: usize) -> String {
        self.prepared.ids()[index].clone()
    }
}

/// A game given by an explicit value for every coalition of up to 20
/// players, indexed by bitmask. Labels are the values' bit patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGame {
    players: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub fn new(players: usize, values: Vec<f64>) -> Self {
        assert!(players <= 20, "table games hold at most 20 players");
        assert_eq!(values.len(), 1 << players, "one value per coalition");
        TableGame { players, values }
    }

    pub fn from_fn(players: usize, f: impl Fn(u64) -> f64) -> Self {
        TableGame::new(players, (0..1u64 << players).map(f).collect())
    }

    /// Tabulate any game with few enough players.
    pub fn tabulate<G: CoalitionGame + ?Sized>(game: &G) -> Self {
        let n = game.players();
        TableGame::from_fn(n, |mask| game.outcome(&Coalition::from_mask(n, mask)).value)
    }

    pub fn value_of_mask(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }
}

impl CoalitionGame for TableGame {
    fn players(&self) -> usize {
        self.players
    }

    fn outcome(&self, coalition: &Coalition) -> Outcome {
        let mask: u64 = coalition.iter().map(|i| 1u64 << i).sum();
        let value = self.values[mask as usize];
        Outcome {
            value,
            // +0.0 and -0.0 must share a label
            label: if value == 0.0 { 0 } else { value.to_bits() as i64 },
        }
    }
}

/// Wraps a game with a coalition memo and evaluation counters. Cached and
/// fresh evaluations return identical outcomes; the cache only saves work.
pub struct GameHandle<G> {
    game: G,
    cache: Option<DashMap<Coalition, Outcome>>,
    requests: AtomicU64,
    computed: AtomicU64,
}

impl<G: CoalitionGame> GameHandle<G> {
    pub fn new(game: G) -> Self {
        GameHandle {
            game,
            cache: Some(DashMap::new()),
            requests: AtomicU64::new(0),
            computed: AtomicU64::new(0),
        }
    }

    pub fn uncached(game: G) -> Self {
        GameHandle {
            cache: None,
            ..GameHandle::new(game)
        }
    }

    pub fn game(&self) -> &G {
        &self.game
    }

    pub fn players(&self) -> usize {
        self.game.players()
    }

    pub fn outcome(&self, coalition: &Coalition) -> Outcome {
        self.requests.fetch_add(1, Ordering::Relaxed);
        match &self.cache {
            Some(cache) => *cache.entry(coalition.clone()).or_insert_with(|| self.compute(coalition)),
            None => self.compute(coalition),
        }
    }

    /// Evaluate without consulting or filling the memo.
    pub fn outcome_fresh(&self, coalition: &Coalition) -> Outcome {
        self.requests.fetch_add(1, Ordering::Relaxed);
        self.compute(coalition)
    }

    pub fn value(&self, coalition: &Coalition) -> f64 {
        self.outcome(coalition).value
    }

    fn compute(&self, coalition: &Coalition) -> Outcome {
        self.computed.fetch_add(1, Ordering::Relaxed);
        self.game.outcome(coalition)
    }

    /// Characteristic-function evaluations actually performed.
    pub fn eval_count(&self) -> u64 {
        self.computed.load(Ordering::Relaxed)
    }

    /// Evaluations requested, including those answered from the memo.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.as_ref().map_or(0, DashMap::len)
    }

    pub fn player_id(&self, index: usize) -> String {
        self.game.player_id(index)
    }

    pub fn grand_value(&self) -> f64 {
        self.value(&Coalition::full(self.players()))
    }
}
