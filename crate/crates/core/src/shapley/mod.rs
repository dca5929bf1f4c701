//! Shapley values of the coalition game, exact and estimated.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

mod chain;
mod cluster;
mod exact;
mod permutation;
mod stratified;

pub use chain::{marginal_profile_bsearch, marginal_profile_scan, sample_chain, MarginalProfile, RemovalChain};
pub use cluster::{cluster_members, clustered_shapley, kmeans_farthest_first, member_features, ClusteredRun};
pub use exact::{exact_shapley, EXACT_LIMIT};
pub use permutation::permutation_shapley;
pub use stratified::{estimate_member, stratified_shapley, MemberRun, PivotHistogram, StratifiedRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Permutation,
    Stratified,
    Cluster,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Permutation => "permutation",
            Method::Stratified => "stratified",
            Method::Cluster => "cluster",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Method::Exact),
            "permutation" | "perm" => Ok(Method::Permutation),
            "stratified" | "strat" => Ok(Method::Stratified),
            "cluster" | "clustered" => Ok(Method::Cluster),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationEstimate {
    pub member_id: String,
    pub method: Method,
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    pub evals: u64,
}

/// Running mean and variance, accumulated in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub(crate) fn mean(&self) -> f64 {
        self.mean
    }

    pub(crate) fn count(&self) -> u64 {
        self.n
    }

    /// Standard error of the mean; 0 with fewer than two samples.
    pub(crate) fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

const BLOCK: usize = 1024;

/// Compute `unit(i)` for `i in 0..n` on the current rayon pool and feed the
/// results to `fold` strictly in index order, a block at a time. The result
/// is independent of the number of worker threads.
pub(crate) fn fold_ordered<T, U, F>(n: usize, unit: U, mut fold: F)
where
    T: Send,
    U: Fn(usize) -> T + Sync,
    F: FnMut(usize, T),
{
    let mut start = 0;
    while start < n {
        let end = (start + BLOCK).min(n);
        let block: Vec<T> = (start..end).into_par_iter().map(&unit).collect();
        for (offset, item) in block.into_iter().enumerate() {
            fold(start + offset, item);
        }
        start = end;
    }
}
