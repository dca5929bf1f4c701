use rand::seq::SliceRandom;

use crate::coalition::Coalition;
use crate::game::{CoalitionGame, GameHandle, Outcome};
use crate::rng::{key_of, stream};

/// A random order in which every player except `subject` is removed from
/// the grand coalition. After `k` removals the remaining coalition is
/// `T_k = order[k..]`, of size `n - 1 - k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemovalChain {
    pub subject: usize,
    pub order: Vec<usize>,
}

impl RemovalChain {
    pub fn players(&self) -> usize {
        self.order.len() + 1
    }

    /// `T_k` as a coalition.
    pub fn remaining(&self, k: usize) -> Coalition {
        Coalition::from_indices(self.players(), self.order[k..].iter().copied())
    }
}

/// Uniform removal order for `subject`, determined by `(seed, subject, index)`.
pub fn sample_chain(subject: usize, players: usize, seed: u64, index: u64) -> RemovalChain {
    assert!(subject < players, "subject {subject} out of range for {players} players");
    let mut order: Vec<usize> = (0..players).filter(|&p| p != subject).collect();
    order.shuffle(&mut stream(seed, key_of("chain").wrapping_add(subject as u64), index));
    RemovalChain { subject, order }
}

/// Marginal contributions of the subject along one removal chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalProfile {
    /// `deltas[k] = v(T_k + subject) - v(T_k)` for `k = 0..n`.
    pub deltas: Vec<f64>,
    /// Indices `k` where the outcome with the subject differs from the
    /// outcome without.
    pub flips: Vec<usize>,
    /// Characteristic-function evaluations requested.
    pub evals: usize,
    /// Set when the search's shape checks failed and it fell back to a scan.
    pub fallback: bool,
}

impl MarginalProfile {
    /// Smallest number of removals at which the subject changes the outcome.
    pub fn pivot(&self) -> Option<usize> {
        self.flips.first().copied()
    }

    fn from_outcomes(with: &[Outcome], without: &[Outcome], evals: usize) -> Self {
        let deltas = with.iter().zip(without).map(|(a, b)| a.value - b.value).collect();
        let flips = with
            .iter()
            .zip(without)
            .enumerate()
            .filter(|(_, (a, b))| a.label != b.label)
            .map(|(k, _)| k)
            .collect();
        MarginalProfile {
            deltas,
            flips,
            evals,
            fallback: false,
        }
    }
}

/// Evaluate the subject's marginal contribution at every prefix.
pub fn marginal_profile_scan<G: CoalitionGame>(handle: &GameHandle<G>, chain: &RemovalChain) -> MarginalProfile {
    let n = chain.players();
    let mut without = chain.remaining(0);
    let mut with_out = Vec::with_capacity(n);
    let mut without_out = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 {
            without.remove(chain.order[k - 1]);
        }
        with_out.push(handle.outcome(&without.with(chain.subject)));
        without_out.push(handle.outcome(&without));
    }
    MarginalProfile::from_outcomes(&with_out, &without_out, 2 * n)
}

/// Outcome pairs `(with subject, without)` at chain positions, evaluated at
/// most once each.
struct Probe<'a, G> {
    handle: &'a GameHandle<G>,
    chain: &'a RemovalChain,
    seen: Vec<Option<(Outcome, Outcome)>>,
    evals: usize,
}

impl<'a, G: CoalitionGame> Probe<'a, G> {
    fn new(handle: &'a GameHandle<G>, chain: &'a RemovalChain) -> Self {
        Probe {
            handle,
            chain,
            seen: vec![None; chain.players()],
            evals: 0,
        }
    }

    fn at(&mut self, k: usize) -> (Outcome, Outcome) {
        if let Some(pair) = self.seen[k] {
            return pair;
        }
        let without = self.chain.remaining(k);
        let pair = (self.handle.outcome(&without.with(self.chain.subject)), self.handle.outcome(&without));
        self.evals += 2;
        self.seen[k] = Some(pair);
        pair
    }

    fn differs(&mut self, k: usize) -> bool {
        let (a, b) = self.at(k);
        a.label != b.label
    }
}

/// Binary search for the fewest removals after which the subject changes
/// the outcome.
///
/// Assumes the difference indicator along the chain is a single step: no
/// difference before some `k*`, a difference from `k*` on. The search finds
/// `k*`, takes every marginal contribution before it as zero, and evaluates
/// from `k*` to the end explicitly. The zero region is checked at its
/// endpoints and midpoint; any difference there abandons the search for a
/// full [`marginal_profile_scan`] and sets `fallback`.
///
/// The result equals the scan whenever the indicator really is a step (or
/// identically zero). Differences confined to positions the probes never
/// visit go unnoticed.
pub fn marginal_profile_bsearch<G: CoalitionGame>(handle: &GameHandle<G>, chain: &RemovalChain) -> MarginalProfile {
    let n = chain.players();
    let mut probe = Probe::new(handle, chain);
    let last = n - 1;

    let pivot = if probe.differs(0) {
        Some(0)
    } else if !probe.differs(last) {
        None
    } else {
        let (mut lo, mut hi) = (0, last);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if probe.differs(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    };

    // zero region is [0, zero_end]
    let zero_end = match pivot {
        Some(0) => None,
        Some(k) => Some(k - 1),
        None => Some(last),
    };
    if let Some(end) = zero_end {
        if probe.differs(end) || probe.differs(end / 2) {
            let mut full = marginal_profile_scan(handle, chain);
            full.evals += probe.evals;
            full.fallback = true;
            return full;
        }
    }

    let start = pivot.unwrap_or(n);
    let mut deltas = vec![0.0; n];
    let mut flips = Vec::new();
    for k in start..n {
        let (a, b) = probe.at(k);
        deltas[k] = a.value - b.value;
        if a.label != b.label {
            flips.push(k);
        }
    }
    MarginalProfile {
        deltas,
        flips,
        evals: probe.evals,
        fallback: false,
    }
}
