//! Deterministic synthetic consortia with planted signal carriers.
//!
//! Generation procedure, fully determined by `GenSpec::seed`:
//!
//! 1. Members are named `m00`, `m01`, ... (zero padded to at least two
//!    digits) and assigned to segments in listed order, with counts given by
//!    largest-remainder apportionment of the target shares.
//! 2. One xoshiro256++ stream (see [`crate::rng`]) drives everything below.
//!    A Fisher-Yates shuffle of the member indices picks the first
//!    `n_carriers` as carriers.
//! 3. The trade enters at `entry = n_periods / 2` and exits at
//!    `exit = 2 * entry`. Each member draws a base spend `50 + U[0,100)`
//!    rounded to cents, then a growth `g = noise_scale * Z` (`Z` from
//!    Box-Muller), plus `carrier_strength` for carriers. Periods before
//!    `entry` record the base spend; later periods record
//!    `max(0, base * (1 + g))`. Each record's company is drawn from
//!    `A`, `B`, `C`.
//! 4. The price is 100 up to `entry`, rises linearly to 110 at `exit`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::domain::{apply_grant_filters, DataGrant, MemberDataset, MemberRecord, PriceSeries, SignalRecord, DEFAULT_SOURCE};
use crate::error::{Error, Result};
use crate::rng::{key_of, standard_normal, stream};

const COMPANIES: [&str; 3] = ["A", "B", "C"];
const ENTRY_PRICE: f64 = 100.0;
const EXIT_PRICE: f64 = 110.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub n_members: usize,
    pub n_periods: u32,
    pub n_carriers: usize,
    pub carrier_strength: f64,
    pub noise_scale: f64,
    /// Segment labels with their target population shares.
    pub segments: Vec<(String, f64)>,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            n_members: 8,
            n_periods: 4,
            n_carriers: 2,
            carrier_strength: 0.5,
            noise_scale: 0.1,
            segments: vec![("north".into(), 0.5), ("south".into(), 0.5)],
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: String| Err(Error::InvalidSpec { field, reason });
        if self.n_members < 1 {
            return bad("n_members", format!("must be at least 1, got {}", self.n_members));
        }
        if self.n_periods < 2 {
            return bad("n_periods", format!("must be at least 2, got {}", self.n_periods));
        }
        if self.n_carriers > self.n_members {
            return bad(
                "n_carriers",
                format!("{} exceeds n_members {}", self.n_carriers, self.n_members),
            );
        }
        if !(self.carrier_strength > 0.0 && self.carrier_strength.is_finite()) {
            return bad("carrier_strength", format!("must be positive, got {}", self.carrier_strength));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise_scale", format!("must be nonnegative, got {}", self.noise_scale));
        }
        if self.segments.is_empty() {
            return bad("segments", "must name at least one segment".into());
        }
        let mut labels: Vec<&str> = self.segments.iter().map(|(s, _)| s.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("segments", "labels must be unique".into());
        }
        if let Some((s, share)) = self.segments.iter().find(|(s, share)| s.is_empty() || !(*share > 0.0 && *share <= 1.0)) {
            return bad("segments", format!("segment `{s}` has share {share} outside (0, 1]"));
        }
        let total: f64 = self.segments.iter().map(|(_, s)| s).sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad("segments", format!("shares sum to {total}, expected 1"));
        }
        Ok(())
    }

    pub fn entry_period(&self) -> u32 {
        self.n_periods / 2
    }

    pub fn exit_period(&self) -> u32 {
        2 * self.entry_period()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub dataset: MemberDataset,
    /// Ground-truth carrier ids, sorted.
    pub carriers: Vec<String>,
}

/// Largest-remainder apportionment of `total` seats over `shares`; ties in
/// the remainder go to the earlier entry.
pub fn apportion(total: usize, shares: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

pub fn member_id(index: usize, n_members: usize) -> String {
    let width = (n_members.saturating_sub(1)).to_string().len().max(2);
    format!("m{index:0width$}")
}

pub fn generate(spec: &GenSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = stream(spec.seed, key_of("synthgen"), 0);

    let shares: Vec<f64> = spec.segments.iter().map(|(_, s)| *s).collect();
    let counts = apportion(spec.n_members, &shares);
    let mut segment_of = Vec::with_capacity(spec.n_members);
    for ((label, _), count) in spec.segments.iter().zip(&counts) {
        segment_of.extend(std::iter::repeat_n(label.clone(), *count));
    }

    let mut order: Vec<usize> = (0..spec.n_members).collect();
    order.shuffle(&mut rng);
    let mut is_carrier = vec![false; spec.n_members];
    for &i in &order[..spec.n_carriers] {
        is_carrier[i] = true;
    }

    let entry = spec.entry_period();
    let exit = spec.exit_period();

    let mut members = Vec::with_capacity(spec.n_members);
    let mut raw = Vec::with_capacity(spec.n_members * spec.n_periods as usize);
    for i in 0..spec.n_members {
        let id = member_id(i, spec.n_members);
        members.push(MemberRecord::new(id.clone(), segment_of[i].clone(), DataGrant::full([DEFAULT_SOURCE])));

        let base = 50.0 + (rng.random::<f64>() * 10_000.0).round() / 100.0;
        let shift = if is_carrier[i] { spec.carrier_strength } else { 0.0 };
        let growth = spec.noise_scale * standard_normal(&mut rng) + shift;
        let later = (base * (1.0 + growth)).max(0.0);
        for period in 0..spec.n_periods {
            let amount = if period < entry { base } else { later };
            let company = COMPANIES[rng.random_range(0..COMPANIES.len())];
            raw.push(SignalRecord::new(id.clone(), period, amount, company));
        }
    }
    let filtered = apply_grant_filters(&raw, &members)?;

    let last = exit.max(spec.n_periods - 1);
    let prices: BTreeMap<u32, f64> = (0..=last)
        .map(|p| {
            let price = if p <= entry {
                ENTRY_PRICE
            } else if p >= exit {
                EXIT_PRICE
            } else {
                ENTRY_PRICE + (EXIT_PRICE - ENTRY_PRICE) * f64::from(p - entry) / f64::from(exit - entry)
            };
            (p, price)
        })
        .collect();

    let carriers = (0..spec.n_members)
        .filter(|&i| is_carrier[i])
        .map(|i| member_id(i, spec.n_members))
        .collect();

    Ok(Generated {
        dataset: MemberDataset {
            members: filtered.members,
            records: filtered.records,
            prices: PriceSeries {
                entry_period: entry,
                exit_period: exit,
                prices,
            },
            target_shares: spec.segments.iter().cloned().collect(),
        },
        carriers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_dataset;
    use crate::pipeline::{normalize_signals, PipelineConfig};

    #[test]
    fn apportionment_matches_shares() {
        assert_eq!(apportion(10, &[0.5, 0.5]), vec![5, 5]);
        assert_eq!(apportion(5, &[0.5, 0.5]), vec![3, 2]);
        assert_eq!(apportion(7, &[0.2, 0.3, 0.5]), vec![1, 2, 4]);
        assert_eq!(apportion(1, &[0.3, 0.3, 0.4]), vec![0, 0, 1]);
    }

    #[test]
    fn zero_noise_zero_carriers_gives_flat_signals() {
        let spec = GenSpec {
            n_members: 4,
            n_carriers: 0,
            noise_scale: 0.0,
            ..GenSpec::default()
        };
        let g = generate(&spec).unwrap();
        let signals = normalize_signals(&g.dataset, &PipelineConfig::default());
        assert_eq!(signals.len(), 4);
        assert!(signals.values().all(|&s| s == 0.0), "{signals:?}");
    }

    #[test]
    fn invalid_specs_name_the_field() {
        let cases = [
            (GenSpec { n_members: 0, n_carriers: 0, ..GenSpec::default() }, "n_members"),
            (GenSpec { n_periods: 1, ..GenSpec::default() }, "n_periods"),
            (GenSpec { n_carriers: 9, ..GenSpec::default() }, "n_carriers"),
            (GenSpec { carrier_strength: 0.0, ..GenSpec::default() }, "carrier_strength"),
            (GenSpec { segments: vec![("a".into(), 0.4)], ..GenSpec::default() }, "segments"),
        ];
        for (spec, field) in cases {
            match generate(&spec) {
                Err(Error::InvalidSpec { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected InvalidSpec({field}), got {other:?}"),
            }
        }
    }

    #[test]
    fn planted_carriers_stand_out() {
        let spec = GenSpec {
            n_members: 10,
            n_carriers: 3,
            carrier_strength: 0.5,
            noise_scale: 0.1,
            seed: 7,
            ..GenSpec::default()
        };
        let g = generate(&spec).unwrap();
        assert_eq!(g.carriers.len(), 3);
        let signals = normalize_signals(&g.dataset, &PipelineConfig::default());
        let (mut c, mut nc) = (vec![], vec![]);
        for (id, s) in &signals {
            if g.carriers.contains(id) { c.push(*s) } else { nc.push(*s) }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&c) - mean(&nc) >= 0.3, "carriers {c:?} others {nc:?}");
    }

    #[test]
    fn generated_datasets_validate() {
        for seed in 0..20 {
            for n_periods in [2, 3, 4, 7] {
                let spec = GenSpec {
                    n_members: 1 + (seed as usize % 9),
                    n_carriers: 1,
                    n_periods,
                    seed,
                    segments: vec![("a".into(), 0.2), ("b".into(), 0.3), ("c".into(), 0.5)],
                    ..GenSpec::default()
                };
                let g = generate(&spec).unwrap();
                assert!(validate_dataset(&g.dataset).is_empty(), "{:?}", validate_dataset(&g.dataset));
                let mut per_segment = BTreeMap::<&str, usize>::new();
                for m in &g.dataset.members {
                    *per_segment.entry(&m.segment).or_default() += 1;
                }
                for (label, share) in &spec.segments {
                    let have = per_segment.get(label.as_str()).copied().unwrap_or(0) as f64;
                    assert!((have - share * spec.n_members as f64).abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GenSpec { seed: 99, ..GenSpec::default() };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = GenSpec { seed: 100, ..GenSpec::default() };
        assert_ne!(generate(&spec).unwrap().dataset, generate(&other).unwrap().dataset);
    }
}
