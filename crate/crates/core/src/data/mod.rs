//! Properties, filings, neighborhood and owner attributes, and the
//! construction of labeled feature matrices over temporal windows.

mod features;
pub(crate) mod io;
pub mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

pub use features::{
    attorney_flags_by_owner, base_rate, build_dataset, owner_attorney_flags, rank_attorneys,
    AttorneyFlags, AttorneyRanking, DataQualityReport, DatasetInputs, FeatureSet,
    LabeledDataset, OWNER_COLUMNS,
};
pub use io::{
    load_filings, load_neighborhoods, load_properties, load_tenures, write_filings,
    write_neighborhoods, write_properties, write_tenures, FilterReport, PropertyFilter,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub property_id: String,
    pub location: GeoPoint,
    pub units: u32,
    pub owner_id: String,
    pub block_id: String,
    pub block_group_id: String,
    pub is_rental: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionFiling {
    pub case_id: String,
    pub property_id: String,
    pub filing_date: NaiveDate,
    pub attorney_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationClass {
    Local,
    InState,
    OutOfState,
}

impl LocationClass {
    pub const ALL: [LocationClass; 3] = [
        LocationClass::Local,
        LocationClass::InState,
        LocationClass::OutOfState,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LocationClass::Local => "local",
            LocationClass::InState => "in_state",
            LocationClass::OutOfState => "out_of_state",
        }
    }
}

impl FromStr for LocationClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "local" => Ok(LocationClass::Local),
            "in_state" => Ok(LocationClass::InState),
            "out_of_state" => Ok(LocationClass::OutOfState),
            other => Err(format!("unknown location class `{other}`")),
        }
    }
}

/// One owner-property holding with its ownership interval (`end` inclusive,
/// `None` while still held).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerTenure {
    pub owner_id: String,
    pub property_id: String,
    pub start: NaiveDate,
    pub end: Option<NaiveDate>,
    pub is_business: bool,
    pub is_owner_occupied: bool,
    pub location_class: LocationClass,
}

impl OwnerTenure {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && self.end.is_none_or(|end| date <= end)
    }
}

/// Resolves which owner held a property on a given date.
#[derive(Debug, Clone, Default)]
pub struct OwnershipIndex {
    by_property: HashMap<String, Vec<OwnerTenure>>,
}

impl OwnershipIndex {
    /// Builds the index, rejecting overlapping tenures on one property. A
    /// transfer where one tenure ends on the day the next begins is allowed.
    pub fn new(tenures: &[OwnerTenure]) -> Result<Self> {
        let mut by_property: HashMap<String, Vec<OwnerTenure>> = HashMap::new();
        for t in tenures {
            if t.end.is_some_and(|end| end < t.start) {
                return Err(Error::invalid(format!(
                    "tenure of `{}` on `{}` ends before it starts",
                    t.owner_id, t.property_id
                )));
            }
            by_property.entry(t.property_id.clone()).or_default().push(t.clone());
        }
        for (pid, list) in by_property.iter_mut() {
            list.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.owner_id.cmp(&b.owner_id)));
            for w in list.windows(2) {
                let overlaps = match w[0].end {
                    None => true,
                    Some(end) => w[1].start < end,
                };
                if overlaps {
                    return Err(Error::invalid(format!(
                        "overlapping tenures on property `{pid}` (`{}` and `{}`)",
                        w[0].owner_id, w[1].owner_id
                    )));
                }
            }
        }
        Ok(OwnershipIndex { by_property })
    }

    /// Tenure covering `date`; a same-day transfer resolves to the owner
    /// whose tenure starts later.
    pub fn owner_at(&self, property_id: &str, date: NaiveDate) -> Option<&OwnerTenure> {
        self.by_property
            .get(property_id)?
            .iter()
            .rev()
            .find(|t| t.contains(date))
    }

    /// Number of distinct properties held by each owner on `date`.
    pub fn holdings_at(&self, date: NaiveDate) -> HashMap<&str, u32> {
        let mut counts: HashMap<&str, u32> = HashMap::new();
        for pid in self.by_property.keys() {
            if let Some(t) = self.owner_at(pid, date) {
                *counts.entry(t.owner_id.as_str()).or_default() += 1;
            }
        }
        counts
    }
}

/// Block-level fields (Decennial census).
pub const BLOCK_FIELDS: [&str; 7] = [
    "pct_under_18",
    "pct_units_occupied",
    "pct_white",
    "pct_black",
    "pct_hispanic",
    "pct_asian",
    "pct_other_race",
];

/// Block-group fields (ACS five-year estimates).
pub const BLOCK_GROUP_FIELDS: [&str; 12] = [
    "median_household_income",
    "median_gross_rent",
    "grapi",
    "pct_renter_occupied",
    "pct_renter_multi_occupant",
    "pct_below_poverty",
    "pct_with_mortgage",
    "pct_snap_assistance",
    "pct_health_insurance",
    "pct_female_head_children",
    "pct_high_school",
    "pct_veteran",
];

/// Fields measured in dollars rather than as a rate.
pub const LEVEL_FIELDS: [&str; 2] = ["median_household_income", "median_gross_rent"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeoLevel {
    Block,
    BlockGroup,
}

impl GeoLevel {
    pub fn fields(self) -> &'static [&'static str] {
        match self {
            GeoLevel::Block => &BLOCK_FIELDS,
            GeoLevel::BlockGroup => &BLOCK_GROUP_FIELDS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GeoLevel::Block => "block",
            GeoLevel::BlockGroup => "block_group",
        }
    }
}

/// Neighborhood attributes keyed by census geography. Missing values are
/// `None`; they are imputed when a dataset is built, never read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Neighborhoods {
    pub blocks: BTreeMap<String, Vec<Option<f64>>>,
    pub block_groups: BTreeMap<String, Vec<Option<f64>>>,
}

impl Neighborhoods {
    pub fn insert(&mut self, level: GeoLevel, geo_id: String, values: Vec<Option<f64>>) -> Result<()> {
        let fields = level.fields();
        if values.len() != fields.len() {
            return Err(Error::invalid(format!(
                "{} `{geo_id}` has {} values, expected {}",
                level.as_str(),
                values.len(),
                fields.len()
            )));
        }
        for (name, v) in fields.iter().zip(&values) {
            if let Some(v) = v {
                validate_neighborhood_value(name, *v).map_err(Error::InvalidInput)?;
            }
        }
        let table = match level {
            GeoLevel::Block => &mut self.blocks,
            GeoLevel::BlockGroup => &mut self.block_groups,
        };
        if table.insert(geo_id.clone(), values).is_some() {
            return Err(Error::Duplicate {
                kind: "neighborhood geography",
                id: geo_id,
            });
        }
        Ok(())
    }

    pub fn field_names() -> impl Iterator<Item = &'static str> {
        BLOCK_FIELDS.iter().chain(BLOCK_GROUP_FIELDS.iter()).copied()
    }

    pub fn field_count() -> usize {
        BLOCK_FIELDS.len() + BLOCK_GROUP_FIELDS.len()
    }
}

pub(crate) fn validate_neighborhood_value(name: &str, v: f64) -> Result<(), String> {
    if !v.is_finite() {
        return Err(format!("{name} is not finite"));
    }
    if LEVEL_FIELDS.contains(&name) {
        if v < 0.0 {
            return Err(format!("{name} = {v} is negative"));
        }
    } else if !(0.0..=1.0).contains(&v) {
        return Err(format!("{name} = {v} outside [0, 1]"));
    }
    Ok(())
}

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::invalid(format!("month {month} outside 1..=12")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        YearMonth {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    fn ordinal(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    fn from_ordinal(ord: i64) -> Self {
        YearMonth {
            year: ord.div_euclid(12) as i32,
            month: ord.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: YearMonth) -> i64 {
        other.ordinal() - self.ordinal()
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }

    pub fn last_day(self) -> NaiveDate {
        self.offset(1).first_day().pred_opt().expect("valid date")
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("expected YYYY-MM, got `{s}`"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month)
    }
}

impl TryFrom<String> for YearMonth {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<YearMonth> for String {
    fn from(m: YearMonth) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowRole {
    Feature,
    Label,
}

/// Inclusive range of calendar months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodWindow {
    pub start: YearMonth,
    pub end: YearMonth,
    pub role: WindowRole,
}

impl PeriodWindow {
    pub fn new(start: YearMonth, end: YearMonth, role: WindowRole) -> Result<Self> {
        if end < start {
            return Err(Error::invalid(format!("window {start}..{end} is empty")));
        }
        Ok(PeriodWindow { start, end, role })
    }

    /// `months` consecutive months beginning at `start`.
    pub fn spanning(start: YearMonth, months: u32, role: WindowRole) -> Result<Self> {
        if months == 0 {
            return Err(Error::invalid("window must span at least one month"));
        }
        Self::new(start, start.offset(i64::from(months) - 1), role)
    }

    pub fn len_months(&self) -> usize {
        (self.start.months_until(self.end) + 1) as usize
    }

    pub fn contains_month(&self, m: YearMonth) -> bool {
        self.start <= m && m <= self.end
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.contains_month(YearMonth::of(date))
    }

    /// Zero-based month position of `date` inside the window.
    pub fn month_index(&self, date: NaiveDate) -> Option<usize> {
        let m = YearMonth::of(date);
        self.contains_month(m).then(|| self.start.months_until(m) as usize)
    }
}

impl fmt::Display for PeriodWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

/// A feature window followed, without overlap, by a label window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPair {
    pub feature: PeriodWindow,
    pub label: PeriodWindow,
}

impl WindowPair {
    pub fn new(feature: PeriodWindow, label: PeriodWindow) -> Result<Self> {
        if feature.end >= label.start {
            return Err(Error::invalid(format!(
                "feature window {feature} must end before label window {label} starts"
            )));
        }
        Ok(WindowPair {
            feature: PeriodWindow { role: WindowRole::Feature, ..feature },
            label: PeriodWindow { role: WindowRole::Label, ..label },
        })
    }

    /// Feature months starting at `start`, immediately followed by the label
    /// months.
    pub fn training(start: YearMonth, feature_months: u32, label_months: u32) -> Result<Self> {
        let feature = PeriodWindow::spanning(start, feature_months, WindowRole::Feature)?;
        let label = PeriodWindow::spanning(feature.end.offset(1), label_months, WindowRole::Label)?;
        Self::new(feature, label)
    }

    /// Label months starting at `label_start`, with features drawn from the
    /// `feature_months` immediately before it.
    pub fn preceding(label_start: YearMonth, feature_months: u32, label_months: u32) -> Result<Self> {
        if feature_months == 0 {
            return Err(Error::invalid("window must span at least one month"));
        }
        Self::training(label_start.offset(-i64::from(feature_months)), feature_months, label_months)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn tenure(owner: &str, start: &str, end: Option<&str>) -> OwnerTenure {
        OwnerTenure {
            owner_id: owner.into(),
            property_id: "P1".into(),
            start: d(start),
            end: end.map(d),
            is_business: false,
            is_owner_occupied: false,
            location_class: LocationClass::Local,
        }
    }

    #[test]
    fn same_day_transfer_goes_to_later_owner() {
        let idx = OwnershipIndex::new(&[
            tenure("A", "2019-01-01", Some("2021-03-15")),
            tenure("B", "2021-03-15", None),
        ])
        .unwrap();
        assert_eq!(idx.owner_at("P1", d("2021-03-14")).unwrap().owner_id, "A");
        assert_eq!(idx.owner_at("P1", d("2021-03-15")).unwrap().owner_id, "B");
        assert_eq!(idx.owner_at("P1", d("2030-01-01")).unwrap().owner_id, "B");
        assert!(idx.owner_at("P1", d("2018-01-01")).is_none());
    }

    #[test]
    fn overlapping_tenures_rejected() {
        let err = OwnershipIndex::new(&[
            tenure("A", "2019-01-01", Some("2021-03-15")),
            tenure("B", "2021-03-01", None),
        ]);
        assert!(err.is_err());
        let err = OwnershipIndex::new(&[tenure("A", "2019-01-01", None), tenure("B", "2021-03-01", None)]);
        assert!(err.is_err());
    }

    #[test]
    fn year_month_arithmetic() {
        let m: YearMonth = "2021-11".parse().unwrap();
        assert_eq!(m.offset(3).to_string(), "2022-02");
        assert_eq!(m.offset(-11).to_string(), "2020-12");
        assert_eq!(m.months_until("2022-01".parse().unwrap()), 2);
        assert_eq!(m.last_day(), d("2021-11-30"));
        assert!("2021-13".parse::<YearMonth>().is_err());
        assert!("21/01".parse::<YearMonth>().is_err());
    }

    #[test]
    fn window_pairs() {
        let start = "2021-01".parse().unwrap();
        let w = WindowPair::training(start, 7, 3).unwrap();
        assert_eq!(w.feature.to_string(), "2021-01..2021-07");
        assert_eq!(w.label.to_string(), "2021-08..2021-10");
        let t = WindowPair::preceding("2021-11".parse().unwrap(), 7, 3).unwrap();
        assert_eq!(t.feature.to_string(), "2021-04..2021-10");
        assert_eq!(t.label.to_string(), "2021-11..2022-01");

        let f = PeriodWindow::spanning(start, 7, WindowRole::Feature).unwrap();
        let overlapping = PeriodWindow::spanning(start.offset(6), 3, WindowRole::Label).unwrap();
        assert!(WindowPair::new(f, overlapping).is_err());
    }

    #[test]
    fn neighborhood_values_validated() {
        let mut n = Neighborhoods::default();
        let mut vals = vec![Some(0.5); BLOCK_FIELDS.len()];
        vals[0] = Some(1.5);
        assert!(n.insert(GeoLevel::Block, "B1".into(), vals).is_err());
        let mut vals = vec![Some(0.5); BLOCK_GROUP_FIELDS.len()];
        vals[0] = Some(45_000.0);
        vals[3] = None;
        n.insert(GeoLevel::BlockGroup, "G1".into(), vals.clone()).unwrap();
        assert!(n.insert(GeoLevel::BlockGroup, "G1".into(), vals).is_err());
    }
}
