//! Consortium members, the data they grant, and the dataset the valuation
//! pipeline reads.
//!
//! Everything here is an immutable value type; the operations are pure
//! functions that return new values.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source label assigned to records that do not name one.
pub const DEFAULT_SOURCE: &str = "receipts";

const SHARE_SUM_TOLERANCE: f64 = 1e-9;

/// Record fields a member may expose through a grant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Amount,
    Company,
    Period,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::Amount, Field::Company, Field::Period];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::Amount => "amount",
            Field::Company => "company",
            Field::Period => "period",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "amount" => Ok(Field::Amount),
            "company" => Ok(Field::Company),
            "period" => Ok(Field::Period),
            other => Err(format!("unknown field `{other}`")),
        }
    }
}

/// Which sources the consortium may read for a member, and which fields of
/// those records survive.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataGrant {
    pub allowed_sources: BTreeSet<String>,
    pub allowed_fields: BTreeSet<Field>,
}

impl DataGrant {
    /// Grant over `sources` exposing every field.
    pub fn full<I, S>(sources: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        DataGrant {
            allowed_sources: sources.into_iter().map(Into::into).collect(),
            allowed_fields: Field::ALL.into_iter().collect(),
        }
    }

    /// Grant that admits nothing.
    pub fn none() -> Self {
        DataGrant::default()
    }

    pub fn allows_source(&self, source: &str) -> bool {
        self.allowed_sources.contains(source)
    }

    pub fn allows_field(&self, field: Field) -> bool {
        self.allowed_fields.contains(&field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub member_id: String,
    pub segment: String,
    pub insider: bool,
    pub grant: DataGrant,
    /// Number of signal records that survived grant filtering.
    pub volume: usize,
}

impl MemberRecord {
    pub fn new(member_id: impl Into<String>, segment: impl Into<String>, grant: DataGrant) -> Self {
        MemberRecord {
            member_id: member_id.into(),
            segment: segment.into(),
            insider: false,
            grant,
            volume: 0,
        }
    }
}

/// One receipt-style observation. `None` marks a field nulled by a grant
/// (or left empty in the input file).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    pub member_id: String,
    pub source: String,
    pub period: Option<u32>,
    pub amount: Option<f64>,
    pub company: Option<String>,
}

impl SignalRecord {
    pub fn new(member_id: impl Into<String>, period: u32, amount: f64, company: impl Into<String>) -> Self {
        SignalRecord {
            member_id: member_id.into(),
            source: DEFAULT_SOURCE.to_string(),
            period: Some(period),
            amount: Some(amount),
            company: Some(company.into()),
        }
    }
}

/// Historical prices for the traded instrument, with the entry and exit
/// periods of the single evaluated trade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub entry_period: u32,
    pub exit_period: u32,
    pub prices: BTreeMap<u32, f64>,
}

impl PriceSeries {
    pub fn entry_price(&self) -> Option<f64> {
        self.prices.get(&self.entry_period).copied()
    }

    pub fn exit_price(&self) -> Option<f64> {
        self.prices.get(&self.exit_period).copied()
    }

    /// Relative price move from entry to exit. Panics if either price is
    /// missing; validated datasets always carry both.
    pub fn relative_return(&self) -> f64 {
        let entry = self.entry_price().expect("entry price present");
        let exit = self.exit_price().expect("exit price present");
        (exit - entry) / entry
    }

    /// Inclusive period range covered by the series.
    pub fn period_range(&self) -> Option<(u32, u32)> {
        let first = *self.prices.keys().next()?;
        let last = *self.prices.keys().next_back()?;
        Some((first, last))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberDataset {
    pub members: Vec<MemberRecord>,
    pub records: Vec<SignalRecord>,
    pub prices: PriceSeries,
    pub target_shares: BTreeMap<String, f64>,
}

impl MemberDataset {
    pub fn member(&self, member_id: &str) -> Option<&MemberRecord> {
        self.members.iter().find(|m| m.member_id == member_id)
    }

    pub fn member_ids(&self) -> Vec<String> {
        self.members.iter().map(|m| m.member_id.clone()).collect()
    }

    pub fn records_of<'a>(&'a self, member_id: &'a str) -> impl Iterator<Item = &'a SignalRecord> + 'a {
        self.records.iter().filter(move |r| r.member_id == member_id)
    }
}

/// Output of grant filtering: surviving records plus members with their
/// volumes recounted.
#[derive(Debug, Clone, PartialEq)]
pub struct GrantFiltered {
    pub members: Vec<MemberRecord>,
    pub records: Vec<SignalRecord>,
}

/// Drop records from sources a member did not grant and null the fields
/// they did not expose. Volumes are recounted from the survivors.
pub fn apply_grant_filters(raw_records: &[SignalRecord], members: &[MemberRecord]) -> Result<GrantFiltered> {
    let grants: HashMap<&str, &DataGrant> = members.iter().map(|m| (m.member_id.as_str(), &m.grant)).collect();

    let mut records = Vec::with_capacity(raw_records.len());
    for (index, record) in raw_records.iter().enumerate() {
        let grant = grants.get(record.member_id.as_str()).ok_or_else(|| Error::UnknownMember {
            index,
            member_id: record.member_id.clone(),
        })?;
        if !grant.allows_source(&record.source) {
            continue;
        }
        records.push(SignalRecord {
            member_id: record.member_id.clone(),
            source: record.source.clone(),
            period: record.period.filter(|_| grant.allows_field(Field::Period)),
            amount: record.amount.filter(|_| grant.allows_field(Field::Amount)),
            company: record.company.clone().filter(|_| grant.allows_field(Field::Company)),
        });
    }

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in &records {
        *counts.entry(r.member_id.as_str()).or_default() += 1;
    }
    let members = members
        .iter()
        .map(|m| MemberRecord {
            volume: counts.get(m.member_id.as_str()).copied().unwrap_or(0),
            ..m.clone()
        })
        .collect();

    Ok(GrantFiltered { members, records })
}

/// Remove insider members together with every record they contributed.
pub fn exclude_insiders(dataset: &MemberDataset) -> MemberDataset {
    let insiders: HashSet<&str> = dataset
        .members
        .iter()
        .filter(|m| m.insider)
        .map(|m| m.member_id.as_str())
        .collect();
    if insiders.is_empty() {
        return dataset.clone();
    }
    MemberDataset {
        members: dataset.members.iter().filter(|m| !m.insider).cloned().collect(),
        records: dataset
            .records
            .iter()
            .filter(|r| !insiders.contains(r.member_id.as_str()))
            .cloned()
            .collect(),
        prices: dataset.prices.clone(),
        target_shares: dataset.target_shares.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationCode {
    DuplicateMember,
    OrphanRecord,
    VolumeMismatch,
    GrantFieldsEmpty,
    PeriodOutOfRange,
    NegativeAmount,
    PriceMissing,
    PriceNonPositive,
    PeriodOrder,
    TargetShareRange,
    TargetSharesSum,
    UnknownSegment,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::DuplicateMember => "DUPLICATE_MEMBER",
            ViolationCode::OrphanRecord => "ORPHAN_RECORD",
            ViolationCode::VolumeMismatch => "VOLUME_MISMATCH",
            ViolationCode::GrantFieldsEmpty => "GRANT_FIELDS_EMPTY",
            ViolationCode::PeriodOutOfRange => "PERIOD_OUT_OF_RANGE",
            ViolationCode::NegativeAmount => "NEGATIVE_AMOUNT",
            ViolationCode::PriceMissing => "PRICE_MISSING",
            ViolationCode::PriceNonPositive => "PRICE_NONPOSITIVE",
            ViolationCode::PeriodOrder => "PERIOD_ORDER",
            ViolationCode::TargetShareRange => "TARGET_SHARE_RANGE",
            ViolationCode::TargetSharesSum => "TARGET_SHARES_SUM",
            ViolationCode::UnknownSegment => "UNKNOWN_SEGMENT",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

/// Check every dataset invariant, returning one violation per breach.
pub fn validate_dataset(dataset: &MemberDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |code, detail: String| out.push(Violation { code, detail });

    let mut seen = HashSet::new();
    for m in &dataset.members {
        if !seen.insert(m.member_id.as_str()) {
            push(ViolationCode::DuplicateMember, format!("member `{}` listed twice", m.member_id));
        }
        if !m.grant.allowed_sources.is_empty() && m.grant.allowed_fields.is_empty() {
            push(
                ViolationCode::GrantFieldsEmpty,
                format!("member `{}` grants sources but no fields", m.member_id),
            );
        }
        if !dataset.target_shares.contains_key(&m.segment) {
            push(
                ViolationCode::UnknownSegment,
                format!("member `{}` has segment `{}` with no target share", m.member_id, m.segment),
            );
        }
    }

    let range = dataset.prices.period_range();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (i, r) in dataset.records.iter().enumerate() {
        if !seen.contains(r.member_id.as_str()) {
            push(
                ViolationCode::OrphanRecord,
                format!("record {i} references absent member `{}`", r.member_id),
            );
        }
        *counts.entry(r.member_id.as_str()).or_default() += 1;
        if let Some(p) = r.period {
            if range.is_none_or(|(lo, hi)| p < lo || p > hi) {
                push(ViolationCode::PeriodOutOfRange, format!("record {i} has period {p}"));
            }
        }
        if let Some(a) = r.amount {
            if !(a >= 0.0 && a.is_finite()) {
                push(ViolationCode::NegativeAmount, format!("record {i} has amount {a}"));
            }
        }
    }
    for m in &dataset.members {
        let actual = counts.get(m.member_id.as_str()).copied().unwrap_or(0);
        if actual != m.volume {
            push(
                ViolationCode::VolumeMismatch,
                format!("member `{}` declares volume {} but has {actual} records", m.member_id, m.volume),
            );
        }
    }

    let prices = &dataset.prices;
    for (label, period) in [("entry", prices.entry_period), ("exit", prices.exit_period)] {
        if !prices.prices.contains_key(&period) {
            push(ViolationCode::PriceMissing, format!("no price at {label} period {period}"));
        }
    }
    if prices.entry_period >= prices.exit_period {
        push(
            ViolationCode::PeriodOrder,
            format!(
                "entry period {} is not before exit period {}",
                prices.entry_period, prices.exit_period
            ),
        );
    }
    for (period, price) in &prices.prices {
        if !(*price > 0.0 && price.is_finite()) {
            push(ViolationCode::PriceNonPositive, format!("price {price} at period {period}"));
        }
    }

    for (segment, share) in &dataset.target_shares {
        if !(*share > 0.0 && *share <= 1.0) {
            push(
                ViolationCode::TargetShareRange,
                format!("segment `{segment}` has share {share} outside (0, 1]"),
            );
        }
    }
    let total: f64 = dataset.target_shares.values().sum();
    if (total - 1.0).abs() > SHARE_SUM_TOLERANCE {
        push(ViolationCode::TargetSharesSum, format!("target shares sum to {total}"));
    }

    out
}
