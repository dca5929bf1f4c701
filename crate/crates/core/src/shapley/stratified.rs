use super::chain::{marginal_profile_bsearch, marginal_profile_scan, sample_chain};
use super::{fold_ordered, Method, Moments, ValuationEstimate};
use crate::game::{CoalitionGame, GameHandle};

/// How many removals each chain needed before the member changed the
/// outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PivotHistogram {
    pub member_id: String,
    /// `counts[k]`: chains whose first outcome change came after `k` removals.
    pub counts: Vec<u64>,
    /// Chains along which the member never changed the outcome.
    pub never: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberRun {
    pub estimate: ValuationEstimate,
    pub fallbacks: u64,
    pub pivots: PivotHistogram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedRun {
    pub estimates: Vec<ValuationEstimate>,
    pub fallbacks: u64,
    pub pivots: Vec<PivotHistogram>,
}

/// Stratified estimate for one member.
///
/// Each chain contributes one marginal contribution to every coalition-size
/// stratum. Strata are averaged with equal weight, since a uniform ordering
/// places a player after exactly `m` others with probability `1/n` for each
/// `m`. The standard error is taken over chains, the independent unit,
/// so it includes the covariance between strata sampled on the same chain.
pub fn estimate_member<G: CoalitionGame>(
    handle: &GameHandle<G>,
    member: usize,
    n_chains: usize,
    seed: u64,
    use_bsearch: bool,
) -> MemberRun {
    let n = handle.players();
    let mut strata = vec![Moments::default(); n];
    let mut per_chain = Moments::default();
    let mut evals = 0u64;
    let mut fallbacks = 0u64;
    let mut pivots = PivotHistogram {
        member_id: handle.player_id(member),
        counts: vec![0; n],
        never: 0,
    };

    fold_ordered(
        n_chains,
        |c| {
            let chain = sample_chain(member, n, seed, c as u64);
            if use_bsearch {
                marginal_profile_bsearch(handle, &chain)
            } else {
                marginal_profile_scan(handle, &chain)
            }
        },
        |_, profile| {
            for (s, d) in strata.iter_mut().zip(&profile.deltas) {
                s.push(*d);
            }
            per_chain.push(profile.deltas.iter().sum::<f64>() / n as f64);
            evals += profile.evals as u64;
            fallbacks += u64::from(profile.fallback);
            match profile.pivot() {
                Some(k) => pivots.counts[k] += 1,
                None => pivots.never += 1,
            }
        },
    );

    let value = strata.iter().map(Moments::mean).sum::<f64>() / n as f64;
    MemberRun {
        estimate: ValuationEstimate {
            member_id: handle.player_id(member),
            method: Method::Stratified,
            value,
            std_error: per_chain.std_error(),
            samples: n_chains as u64,
            evals,
        },
        fallbacks,
        pivots,
    }
}

pub fn stratified_shapley<G: CoalitionGame>(
    handle: &GameHandle<G>,
    n_chains: usize,
    seed: u64,
    use_bsearch: bool,
) -> StratifiedRun {
    let runs: Vec<MemberRun> = (0..handle.players())
        .map(|i| estimate_member(handle, i, n_chains, seed, use_bsearch))
        .collect();
    StratifiedRun {
        fallbacks: runs.iter().map(|r| r.fallbacks).sum(),
        pivots: runs.iter().map(|r| r.pivots.clone()).collect(),
        estimates: runs.into_iter().map(|r| r.estimate).collect(),
    }
}
