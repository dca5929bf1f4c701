use rand::seq::SliceRandom;

use super::{fold_ordered, Method, Moments, ValuationEstimate};
use crate::coalition::Coalition;
use crate::game::{CoalitionGame, GameHandle};
use crate::rng::{key_of, stream};

/// Monte Carlo over uniformly random orderings: each sampled ordering adds
/// every player's marginal contribution to the set of players before it.
pub fn permutation_shapley<G: CoalitionGame>(
    handle: &GameHandle<G>,
    n_permutations: usize,
    seed: u64,
) -> Vec<ValuationEstimate> {
    let n = handle.players();
    let key = key_of("permutation");
    let mut moments = vec![Moments::default(); n];

    fold_ordered(
        n_permutations,
        |p| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut stream(seed, key, p as u64));
            let mut prefix = Coalition::empty(n);
            let mut before = handle.value(&prefix);
            let mut contribution = vec![0.0; n];
            for &player in &order {
                prefix.insert(player);
                let after = handle.value(&prefix);
                contribution[player] = after - before;
                before = after;
            }
            contribution
        },
        |_, contribution| {
            for (m, c) in moments.iter_mut().zip(contribution) {
                m.push(c);
            }
        },
    );

    let evals = (n_permutations * (n + 1)) as u64;
    moments
        .into_iter()
        .enumerate()
        .map(|(i, m)| ValuationEstimate {
            member_id: handle.player_id(i),
            method: Method::Permutation,
            value: m.mean(),
            std_error: m.std_error(),
            samples: m.count(),
            evals,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::TableGame;

    #[test]
    fn null_game() {
        let h = GameHandle::new(TableGame::from_fn(5, |_| 0.0));
        for e in permutation_shapley(&h, 50, 1) {
            assert_eq!(e.value, 0.0);
            assert_eq!(e.std_error, 0.0);
            assert_eq!(e.samples, 50);
        }
    }

    #[test]
    fn single_member_is_exact_after_one_ordering() {
        let h = GameHandle::new(TableGame::new(1, vec![0.0, 0.7]));
        let e = permutation_shapley(&h, 1, 9);
        assert_eq!(e[0].value, 0.7);
        assert_eq!(e[0].std_error, 0.0);
    }

    #[test]
    fn additive_game_is_recovered_exactly() {
        let w = [0.5, -1.0, 2.0, 0.25];
        let h = GameHandle::new(TableGame::from_fn(4, |m| (0..4).filter(|i| m >> i & 1 == 1).map(|i| w[i]).sum()));
        for (e, want) in permutation_shapley(&h, 17, 3).iter().zip(w) {
            assert!((e.value - want).abs() < 1e-12);
            assert!(e.std_error < 1e-12);
        }
    }
}
