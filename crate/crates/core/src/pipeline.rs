//! The characteristic function: the trading decision and realized profit a
//! coalition's data alone would have produced.
//!
//! Five stages run per coalition: normalize each member's spend into a growth
//! signal, weight members into a balanced panel, score the weighted mean,
//! gate on a significance statistic, and realize the relative profit or loss
//! of the resulting position.
//!
//! Only members with at least one surviving record contribute data. A member
//! whose grant filtered everything away leaves the coalition's data, and so
//! its value, unchanged.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{MemberDataset, PriceSeries};
use crate::error::{Error, Result};

/// Slack on the effective-sample-size gate so that `k` equal weights count
/// as exactly `k` members despite rounding in `1 / sum(w^2)`.
const N_EFF_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Significance threshold on |z|.
    pub tau: f64,
    /// Floor on the weighted standard deviation.
    pub sigma_min: f64,
    /// Minimum effective sample size to trade.
    pub n_min: u32,
    /// Signals are clipped to `[-clip, clip]`.
    pub clip: f64,
    /// Floor on the entry-side spend used as growth denominator.
    pub eps: f64,
    pub capital: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tau: 2.0,
            sigma_min: 0.05,
            n_min: 3,
            clip: 1.0,
            eps: 1.0,
            capital: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau", self.tau),
            ("sigma_min", self.sigma_min),
            ("clip", self.clip),
            ("eps", self.eps),
            ("capital", self.capital),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Precondition(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_min < 1 {
            return Err(Error::Precondition("n_min must be at least 1".into()));
        }
        Ok(())
    }
}

/// The set of members whose data a pipeline run may read.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CoalitionMask {
    pub included: BTreeSet<String>,
}

impl CoalitionMask {
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        CoalitionMask {
            included: ids.into_iter().map(Into::into).collect(),
        }
    }

    pub fn grand(dataset: &MemberDataset) -> Self {
        CoalitionMask::new(dataset.members.iter().map(|m| m.member_id.as_str()))
    }

    pub fn empty() -> Self {
        CoalitionMask::default()
    }

    pub fn contains(&self, member_id: &str) -> bool {
        self.included.contains(member_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    NoTrade,
    Long,
    Short,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::NoTrade => "NoTrade",
            Action::Long => "Long",
            Action::Short => "Short",
        }
    }

    fn direction(self) -> f64 {
        match self {
            Action::NoTrade => 0.0,
            Action::Long => 1.0,
            Action::Short => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeDecision {
    pub action: Action,
    pub z: f64,
    pub score: f64,
}

impl TradeDecision {
    pub const IDLE: TradeDecision = TradeDecision {
        action: Action::NoTrade,
        z: 0.0,
        score: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoalitionValue {
    pub value: f64,
    pub decision: TradeDecision,
}

/// Per-member growth signal: exit-side spend against entry-side spend,
/// relative to `max(entry-side spend, eps)` and clipped. Members without
/// records get 0; nulled amounts count as 0 and records without a period
/// fall on neither side.
pub fn normalize_signals(dataset: &MemberDataset, config: &PipelineConfig) -> BTreeMap<String, f64> {
    let entry = dataset.prices.entry_period;
    let exit = dataset.prices.exit_period;
    let mut sides: HashMap<&str, (f64, f64)> = HashMap::new();
    for r in &dataset.records {
        let slot = sides.entry(r.member_id.as_str()).or_default();
        let amount = r.amount.unwrap_or(0.0);
        match r.period {
            Some(p) if p < entry => slot.0 += amount,
            Some(p) if p < exit => slot.1 += amount,
            _ => {}
        }
    }
    dataset
        .members
        .iter()
        .map(|m| {
            let signal = match sides.get(m.member_id.as_str()) {
                Some(&(before, after)) => ((after - before) / before.max(config.eps)).clamp(-config.clip, config.clip),
                None => 0.0,
            };
            (m.member_id.clone(), signal)
        })
        .collect()
}

/// Dataset compiled for repeated coalition evaluation: members in sorted id
/// order, segments interned, signals precomputed.
#[derive(Debug, Clone)]
pub struct PreparedPipeline {
    ids: Vec<String>,
    signals: Vec<f64>,
    segment: Vec<usize>,
    contributes: Vec<bool>,
    volumes: Vec<usize>,
    segment_labels: Vec<String>,
    target: Vec<f64>,
    trade_return: f64,
    config: PipelineConfig,
}

impl PreparedPipeline {
    pub fn new(dataset: &MemberDataset, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let signals_by_id = normalize_signals(dataset, &config);
        let mut members: Vec<_> = dataset.members.iter().collect();
        members.sort_by(|a, b| a.member_id.cmp(&b.member_id));

        let segment_labels: Vec<String> = dataset.target_shares.keys().cloned().collect();
        let target: Vec<f64> = dataset.target_shares.values().copied().collect();
        let mut record_counts: HashMap<&str, usize> = HashMap::new();
        for r in &dataset.records {
            *record_counts.entry(r.member_id.as_str()).or_default() += 1;
        }

        let mut segment = Vec::with_capacity(members.len());
        for m in &members {
            let idx = segment_labels.binary_search(&m.segment).map_err(|_| {
                Error::Precondition(format!("member `{}` has segment `{}` with no target share", m.member_id, m.segment))
            })?;
            segment.push(idx);
        }
        let entry = dataset
            .prices
            .entry_price()
            .ok_or_else(|| Error::Precondition("price series lacks an entry price".into()))?;
        let exit = dataset
            .prices
            .exit_price()
            .ok_or_else(|| Error::Precondition("price series lacks an exit price".into()))?;

        Ok(PreparedPipeline {
            ids: members.iter().map(|m| m.member_id.clone()).collect(),
            signals: members.iter().map(|m| signals_by_id[&m.member_id]).collect(),
            contributes: members
                .iter()
                .map(|m| record_counts.get(m.member_id.as_str()).copied().unwrap_or(0) > 0)
                .collect(),
            volumes: members.iter().map(|m| m.volume).collect(),
            segment,
            segment_labels,
            target,
            trade_return: (exit - entry) / entry,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, member_id: &str) -> Option<usize> {
        self.ids.binary_search_by(|id| id.as_str().cmp(member_id)).ok()
    }

    pub fn signals(&self) -> &[f64] {
        &self.signals
    }

    pub fn volumes(&self) -> &[usize] {
        &self.volumes
    }

    pub fn segments(&self) -> &[usize] {
        &self.segment
    }

    pub fn segment_count(&self) -> usize {
        self.segment_labels.len()
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn contributes(&self, index: usize) -> bool {
        self.contributes[index]
    }

    /// The members of `members` that actually carry data, in index order.
    fn contributors<I: IntoIterator<Item = usize>>(&self, members: I) -> Vec<usize> {
        let mut out: Vec<usize> = members.into_iter().filter(|&i| self.contributes[i]).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Balanced-panel weights over contributing members, aligned with the
    /// returned index list. Empty when no member contributes.
    pub fn weights<I: IntoIterator<Item = usize>>(&self, members: I) -> (Vec<usize>, Vec<f64>) {
        let members = self.contributors(members);
        if members.is_empty() {
            return (members, Vec::new());
        }
        let n = members.len() as f64;
        let mut counts = vec![0usize; self.segment_labels.len()];
        for &i in &members {
            counts[self.segment[i]] += 1;
        }
        let present_target: f64 = counts
            .iter()
            .zip(&self.target)
            .filter(|(c, _)| **c > 0)
            .map(|(_, t)| t)
            .sum();
        let raw: Vec<f64> = members
            .iter()
            .map(|&i| {
                let g = self.segment[i];
                let target_share = self.target[g] / present_target;
                let coalition_share = counts[g] as f64 / n;
                target_share / coalition_share
            })
            .collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.into_iter().map(|u| u / total).collect();
        (members, weights)
    }

    pub fn decide<I: IntoIterator<Item = usize>>(&self, members: I) -> TradeDecision {
        let (members, weights) = self.weights(members);
        if members.is_empty() {
            return TradeDecision::IDLE;
        }
        let cfg = &self.config;
        let score: f64 = members.iter().zip(&weights).map(|(&i, w)| w * self.signals[i]).sum();
        let spread: f64 = members
            .iter()
            .zip(&weights)
            .map(|(&i, w)| w * (self.signals[i] - score).powi(2))
            .sum();
        let sigma = spread.sqrt().max(cfg.sigma_min);
        let n_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let z = score * n_eff.sqrt() / sigma;

        let action = if n_eff + N_EFF_SLACK < f64::from(cfg.n_min) || z.abs() < cfg.tau {
            Action::NoTrade
        } else if score > 0.0 {
            Action::Long
        } else {
            Action::Short
        };
        TradeDecision { action, z, score }
    }

    pub fn realize(&self, decision: TradeDecision) -> CoalitionValue {
        CoalitionValue {
            value: self.action_value(decision.action),
            decision,
        }
    }

    /// Value of taking `action`; depends on nothing but the action and the
    /// prices.
    pub fn action_value(&self, action: Action) -> f64 {
        match action {
            Action::NoTrade => 0.0,
            a => a.direction() * self.config.capital * self.trade_return,
        }
    }

    pub fn evaluate<I: IntoIterator<Item = usize>>(&self, members: I) -> CoalitionValue {
        self.realize(self.decide(members))
    }

    fn mask_indices(&self, mask: &CoalitionMask) -> Result<Vec<usize>> {
        mask.included
            .iter()
            .map(|id| {
                self.index_of(id)
                    .ok_or_else(|| Error::Precondition(format!("coalition names unknown member `{id}`")))
            })
            .collect()
    }
}

fn nonempty(mask: &CoalitionMask) -> Result<()> {
    if mask.included.is_empty() {
        return Err(Error::Precondition("coalition is empty".into()));
    }
    Ok(())
}

/// Panel weights making the coalition's segment mix match the target shares
/// renormalized over the segments present. Members without data get no
/// weight and are absent from the result.
pub fn panel_weights(dataset: &MemberDataset, mask: &CoalitionMask) -> Result<BTreeMap<String, f64>> {
    nonempty(mask)?;
    let prepared = PreparedPipeline::new(dataset, PipelineConfig::default())?;
    let (members, weights) = prepared.weights(prepared.mask_indices(mask)?);
    if members.is_empty() {
        return Err(Error::Precondition("no member of the coalition contributes data".into()));
    }
    Ok(members
        .into_iter()
        .zip(weights)
        .map(|(i, w)| (prepared.ids[i].clone(), w))
        .collect())
}

/// Weighted mean of normalized signals over the coalition.
pub fn score(dataset: &MemberDataset, mask: &CoalitionMask, config: &PipelineConfig) -> Result<f64> {
    nonempty(mask)?;
    let prepared = PreparedPipeline::new(dataset, *config)?;
    let (members, weights) = prepared.weights(prepared.mask_indices(mask)?);
    if members.is_empty() {
        return Err(Error::Precondition("no member of the coalition contributes data".into()));
    }
    Ok(members.iter().zip(&weights).map(|(&i, w)| w * prepared.signals[i]).sum())
}

pub fn decide(dataset: &MemberDataset, mask: &CoalitionMask, config: &PipelineConfig) -> Result<TradeDecision> {
    let prepared = PreparedPipeline::new(dataset, *config)?;
    Ok(prepared.decide(prepared.mask_indices(mask)?))
}

/// Profit or loss of the decided position relative to not trading.
pub fn realize_pnl(decision: &TradeDecision, prices: &PriceSeries, config: &PipelineConfig) -> f64 {
    match decision.action {
        Action::NoTrade => 0.0,
        a => a.direction() * config.capital * prices.relative_return(),
    }
}

pub fn coalition_value(dataset: &MemberDataset, mask: &CoalitionMask, config: &PipelineConfig) -> Result<CoalitionValue> {
    let prepared = PreparedPipeline::new(dataset, *config)?;
    Ok(prepared.evaluate(prepared.mask_indices(mask)?))
}
