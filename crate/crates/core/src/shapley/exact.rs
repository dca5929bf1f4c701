use rayon::prelude::*;

use super::{Method, ValuationEstimate};
use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::game::{CoalitionGame, GameHandle};

/// Largest player count the exact enumeration accepts.
pub const EXACT_LIMIT: usize = 20;

/// Shapley value by enumerating every coalition once:
/// `phi_i = sum_{S not containing i} |S|! (n-|S|-1)! / n! * (v(S+i) - v(S))`.
pub fn exact_shapley<G: CoalitionGame>(handle: &GameHandle<G>) -> Result<Vec<ValuationEstimate>> {
    let n = handle.players();
    if n > EXACT_LIMIT {
        return Err(Error::Capacity {
            members: n,
            limit: EXACT_LIMIT,
        });
    }
    let size = 1usize << n;
    let values: Vec<f64> = (0..size as u64)
        .into_par_iter()
        .map(|mask| handle.outcome_fresh(&Coalition::from_mask(n, mask)).value)
        .collect();

    // |S|!(n-|S|-1)!/n! = 1 / (n * C(n-1, |S|))
    let mut binom = vec![1.0f64; n.max(1)];
    for s in 1..n {
        binom[s] = binom[s - 1] * (n - s) as f64 / s as f64;
    }
    let weight: Vec<f64> = binom.iter().map(|c| 1.0 / (n as f64 * c)).collect();

    let phi: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << i;
            let mut acc = 0.0;
            for mask in 0..size {
                if mask & bit == 0 {
                    acc += weight[mask.count_ones() as usize] * (values[mask | bit] - values[mask]);
                }
            }
            acc
        })
        .collect();

    Ok(phi
        .into_iter()
        .enumerate()
        .map(|(i, value)| ValuationEstimate {
            member_id: handle.player_id(i),
            method: Method::Exact,
            value,
            std_error: 0.0,
            samples: size as u64,
            evals: size as u64,
        })
        .collect())
}
