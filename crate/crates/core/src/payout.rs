//! Member payouts from valuation estimates.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::MemberRecord;
use crate::error::{Error, Result};
use crate::shapley::ValuationEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Pay each member their estimate, negative values included.
    Direct,
    /// Split a pot in proportion to positive estimates.
    NonnegProportional,
    /// Split a pot by a blend of data volume share and value share.
    VolumeBlend,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Direct => "direct",
            PolicyKind::NonnegProportional => "nonneg_proportional",
            PolicyKind::VolumeBlend => "volume_blend",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "direct" => Ok(PolicyKind::Direct),
            "nonneg_proportional" => Ok(PolicyKind::NonnegProportional),
            "volume_blend" => Ok(PolicyKind::VolumeBlend),
            other => Err(format!("unknown payout policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoutPolicy {
    pub kind: PolicyKind,
    pub pot: f64,
    /// Weight on volume share under `VolumeBlend`.
    pub alpha: f64,
}

impl PayoutPolicy {
    pub fn direct() -> Self {
        PayoutPolicy {
            kind: PolicyKind::Direct,
            pot: 0.0,
            alpha: 0.5,
        }
    }

    pub fn proportional(pot: f64) -> Self {
        PayoutPolicy {
            kind: PolicyKind::NonnegProportional,
            pot,
            alpha: 0.5,
        }
    }

    pub fn volume_blend(pot: f64, alpha: f64) -> Self {
        PayoutPolicy {
            kind: PolicyKind::VolumeBlend,
            pot,
            alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kind != PolicyKind::Direct && !(self.pot >= 0.0 && self.pot.is_finite()) {
            return Err(Error::Precondition(format!("pot must be nonnegative, got {}", self.pot)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Precondition(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payout {
    pub member_id: String,
    pub payout: f64,
}

/// `max(v, 0) / sum max(v, 0)`, or an equal split if no value is positive.
fn value_shares(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    if total > 0.0 {
        values.iter().map(|v| v.max(0.0) / total).collect()
    } else {
        vec![1.0 / values.len() as f64; values.len()]
    }
}

/// Payouts in estimate order.
pub fn allocate(estimates: &[ValuationEstimate], members: &[MemberRecord], policy: &PayoutPolicy) -> Result<Vec<Payout>> {
    policy.validate()?;
    let estimated: BTreeSet<&str> = estimates.iter().map(|e| e.member_id.as_str()).collect();
    let known: BTreeSet<&str> = members.iter().map(|m| m.member_id.as_str()).collect();
    if estimated != known || estimated.len() != estimates.len() {
        return Err(Error::Precondition(
            "estimates must cover exactly the member set, once each".into(),
        ));
    }
    if estimates.is_empty() {
        return Ok(Vec::new());
    }

    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let amounts: Vec<f64> = match policy.kind {
        PolicyKind::Direct => values,
        PolicyKind::NonnegProportional => value_shares(&values).into_iter().map(|s| policy.pot * s).collect(),
        PolicyKind::VolumeBlend => {
            let volume: HashMap<&str, usize> = members.iter().map(|m| (m.member_id.as_str(), m.volume)).collect();
            let vols: Vec<f64> = estimates.iter().map(|e| volume[e.member_id.as_str()] as f64).collect();
            let vol_total: f64 = vols.iter().sum();
            let n = vols.len() as f64;
            value_shares(&values)
                .into_iter()
                .zip(vols)
                .map(|(share, v)| {
                    let vol_share = if vol_total > 0.0 { v / vol_total } else { 1.0 / n };
                    policy.pot * (policy.alpha * vol_share + (1.0 - policy.alpha) * share)
                })
                .collect()
        }
    };

    Ok(estimates
        .iter()
        .zip(amounts)
        .map(|(e, payout)| Payout {
            member_id: e.member_id.clone(),
            payout,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DataGrant;
    use crate::shapley::Method;
    use proptest::prelude::*;

    fn setup(values: &[f64], volumes: &[usize]) -> (Vec<ValuationEstimate>, Vec<MemberRecord>) {
        let est = values
            .iter()
            .enumerate()
            .map(|(i, v)| ValuationEstimate {
                member_id: format!("m{i}"),
                method: Method::Exact,
                value: *v,
                std_error: 0.0,
                samples: 1,
                evals: 1,
            })
            .collect();
        let members = volumes
            .iter()
            .enumerate()
            .map(|(i, v)| MemberRecord {
                volume: *v,
                ..MemberRecord::new(format!("m{i}"), "x", DataGrant::none())
            })
            .collect();
        (est, members)
    }

    fn amounts(p: Vec<Payout>) -> Vec<f64> {
        p.into_iter().map(|p| p.payout).collect()
    }

    #[test]
    fn policy_examples() {
        let (e, m) = setup(&[2.0, -1.0, 0.0], &[1, 1, 1]);
        assert_eq!(amounts(allocate(&e, &m, &PayoutPolicy::direct()).unwrap()), vec![2.0, -1.0, 0.0]);

        let (e, m) = setup(&[3.0, 1.0, 0.0], &[1, 1, 1]);
        assert_eq!(amounts(allocate(&e, &m, &PayoutPolicy::proportional(100.0)).unwrap()), vec![75.0, 25.0, 0.0]);

        let (e, m) = setup(&[1.0, 0.0], &[10, 10]);
        assert_eq!(amounts(allocate(&e, &m, &PayoutPolicy::volume_blend(100.0, 0.5)).unwrap()), vec![75.0, 25.0]);

        let (e, m) = setup(&[-1.0, -2.0, 0.0, 0.0], &[1, 1, 1, 1]);
        assert_eq!(amounts(allocate(&e, &m, &PayoutPolicy::proportional(8.0)).unwrap()), vec![2.0; 4]);
    }

    #[test]
    fn mismatched_members_rejected() {
        let (e, _) = setup(&[1.0, 2.0], &[]);
        let (_, m) = setup(&[], &[1, 1, 1]);
        assert!(allocate(&e, &m, &PayoutPolicy::direct()).is_err());
        let (e, m) = setup(&[1.0], &[1]);
        assert!(allocate(&e, &m, &PayoutPolicy::proportional(-1.0)).is_err());
    }

    proptest! {
        #[test]
        fn proportional_kinds_conserve_pot(
            values in proptest::collection::vec(-5.0f64..5.0, 1..10),
            seed_vol in proptest::collection::vec(0usize..50, 10),
            pot in 0.0f64..1000.0,
            alpha in 0.0f64..=1.0,
        ) {
            let (e, m) = setup(&values, &seed_vol[..values.len()]);
            for policy in [PayoutPolicy::proportional(pot), PayoutPolicy::volume_blend(pot, alpha)] {
                let total: f64 = amounts(allocate(&e, &m, &policy).unwrap()).iter().sum();
                prop_assert!((total - pot).abs() <= 1e-9 * pot.max(1.0));
            }
            let direct: f64 = amounts(allocate(&e, &m, &PayoutPolicy::direct()).unwrap()).iter().sum();
            prop_assert!((direct - values.iter().sum::<f64>()).abs() < 1e-9);
        }

        #[test]
        fn proportional_is_monotone(
            values in proptest::collection::vec(-5.0f64..5.0, 2..8),
            bump in 0.0f64..3.0,
            who in 0usize..8,
        ) {
            let who = who % values.len();
            let (e, m) = setup(&values, &vec![1; values.len()]);
            let mut raised = values.clone();
            raised[who] += bump;
            let (e2, _) = setup(&raised, &vec![1; values.len()]);
            let policy = PayoutPolicy::proportional(100.0);
            let before = amounts(allocate(&e, &m, &policy).unwrap())[who];
            let after = amounts(allocate(&e2, &m, &policy).unwrap())[who];
            prop_assert!(after + 1e-9 >= before, "{before} -> {after}");
        }
    }
}
