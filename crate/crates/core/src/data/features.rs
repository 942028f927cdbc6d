use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{
    EvictionFiling, LocationClass, Neighborhoods, OwnerTenure, OwnershipIndex, PeriodWindow,
    PropertyRecord, WindowPair, BLOCK_FIELDS, BLOCK_GROUP_FIELDS,
};
use crate::error::{Error, Result};

/// Nested feature sets: eviction history, plus neighborhood, plus owner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    E,
    EN,
    ENO,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::E, FeatureSet::EN, FeatureSet::ENO];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::E => "E",
            FeatureSet::EN => "EN",
            FeatureSet::ENO => "ENO",
        }
    }

    fn has_neighborhood(self) -> bool {
        self != FeatureSet::E
    }

    fn has_owner(self) -> bool {
        self == FeatureSet::ENO
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "E" => Ok(FeatureSet::E),
            "EN" => Ok(FeatureSet::EN),
            "ENO" => Ok(FeatureSet::ENO),
            other => Err(Error::invalid(format!("unknown feature set `{other}`"))),
        }
    }
}

pub const OWNER_COLUMNS: [&str; 9] = [
    "units",
    "owner_property_count",
    "owner_is_business",
    "owner_occupied",
    "owner_top25_attorney",
    "owner_top26_50_attorney",
    "owner_local",
    "owner_in_state",
    "owner_out_of_state",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub feature_set: FeatureSet,
    pub windows: WindowPair,
    pub columns: Vec<String>,
    pub property_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            feature_set: self.feature_set,
            windows: self.windows,
            columns: self.columns.clone(),
            property_ids: idx.iter().map(|&i| self.property_ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Fraction of rows labeled positive.
pub fn base_rate(dataset: &LabeledDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("base rate of an empty dataset"));
    }
    Ok(dataset.positives() as f64 / dataset.len() as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataQualityReport {
    pub feature_set: String,
    pub rows: usize,
    pub positives: usize,
    /// Imputed (median) values per neighborhood column.
    pub imputed: BTreeMap<String, usize>,
    /// Properties with no owner on the reference date; owner columns are zero.
    pub owner_missing: usize,
    /// Filings dated inside the feature or label window.
    pub filings_in_feature_window: usize,
    pub filings_in_label_window: usize,
}

/// Attorneys ordered by descending filing count, ties by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttorneyRanking {
    pub ordered: Vec<(String, usize)>,
}

impl AttorneyRanking {
    /// 1-based rank of an attorney, if ranked.
    pub fn rank_of(&self, attorney_id: &str) -> Option<usize> {
        self.ordered.iter().position(|(a, _)| a == attorney_id).map(|i| i + 1)
    }

    fn rank_map(&self) -> HashMap<&str, usize> {
        self.ordered
            .iter()
            .enumerate()
            .map(|(i, (a, _))| (a.as_str(), i + 1))
            .collect()
    }
}

pub fn rank_attorneys(filings: &[EvictionFiling], window: &PeriodWindow) -> AttorneyRanking {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for f in filings.iter().filter(|f| window.contains(f.filing_date)) {
        if let Some(a) = &f.attorney_id {
            *counts.entry(a.as_str()).or_default() += 1;
        }
    }
    let mut ordered: Vec<(String, usize)> = counts.into_iter().map(|(a, c)| (a.to_string(), c)).collect();
    ordered.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    AttorneyRanking { ordered }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttorneyFlags {
    pub top25: bool,
    pub top26_to_50: bool,
}

fn filing_owner<'a>(
    f: &'a EvictionFiling,
    ownership: &'a OwnershipIndex,
    fallback: &'a HashMap<&str, &str>,
) -> Option<&'a str> {
    ownership
        .owner_at(&f.property_id, f.filing_date)
        .map(|t| t.owner_id.as_str())
        .or_else(|| fallback.get(f.property_id.as_str()).copied())
}

/// Attorney flags for every owner who filed inside `window`. The owner of a
/// filing is whoever held the property on the filing date; `current_owner`
/// covers properties without tenure records.
pub fn attorney_flags_by_owner<'a>(
    filings: &'a [EvictionFiling],
    window: &PeriodWindow,
    ownership: &'a OwnershipIndex,
    current_owner: &'a HashMap<&'a str, &'a str>,
    ranking: &AttorneyRanking,
) -> HashMap<&'a str, AttorneyFlags> {
    let ranks = ranking.rank_map();
    let mut out: HashMap<&str, AttorneyFlags> = HashMap::new();
    for f in filings.iter().filter(|f| window.contains(f.filing_date)) {
        let Some(owner) = filing_owner(f, ownership, current_owner) else {
            continue;
        };
        let rank = f.attorney_id.as_deref().and_then(|a| ranks.get(a).copied());
        let flags = out.entry(owner).or_default();
        match rank {
            Some(1..=25) => flags.top25 = true,
            Some(26..=50) => flags.top26_to_50 = true,
            _ => {}
        }
    }
    out
}

/// Flags for one owner: did they file inside `window` through an attorney
/// ranked 1-25, or 26-50. Unknown owners get both false.
pub fn owner_attorney_flags(
    owner_id: &str,
    filings: &[EvictionFiling],
    window: &PeriodWindow,
    ownership: &OwnershipIndex,
    ranking: &AttorneyRanking,
) -> AttorneyFlags {
    let none = HashMap::new();
    attorney_flags_by_owner(filings, window, ownership, &none, ranking)
        .get(owner_id)
        .copied()
        .unwrap_or_default()
}

/// Everything needed to build feature matrices. `properties` are the
/// admitted properties; `filings` may also reference excluded ones.
#[derive(Debug, Clone, Copy)]
pub struct DatasetInputs<'a> {
    pub properties: &'a [PropertyRecord],
    pub filings: &'a [EvictionFiling],
    pub neighborhoods: &'a Neighborhoods,
    pub tenures: &'a [OwnerTenure],
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

fn eviction_columns(window: &PeriodWindow) -> Vec<String> {
    let months = window.len_months();
    let quarters = months.div_ceil(3);
    (1..=months)
        .map(|m| format!("evictions_m{m}"))
        .chain((1..=quarters).map(|q| format!("evictions_q{q}")))
        .collect()
}

/// Builds the feature matrix and labels for one feature set.
///
/// Eviction features are per-month filing counts over the feature window,
/// followed by counts over consecutive three-month chunks of it (the last
/// chunk may be shorter). Neighborhood gaps are filled with the column median
/// over the admitted properties. Owner features describe the owner on the
/// last day of the feature window.
pub fn build_dataset(
    inputs: DatasetInputs<'_>,
    windows: &WindowPair,
    feature_set: FeatureSet,
) -> Result<(LabeledDataset, DataQualityReport)> {
    let feature_window = &windows.feature;
    let label_window = &windows.label;
    let props = inputs.properties;

    let mut index: HashMap<&str, usize> = HashMap::with_capacity(props.len());
    for (i, p) in props.iter().enumerate() {
        if index.insert(p.property_id.as_str(), i).is_some() {
            return Err(Error::Duplicate {
                kind: "property_id",
                id: p.property_id.clone(),
            });
        }
    }

    let months = feature_window.len_months();
    let mut monthly = vec![vec![0.0; months]; props.len()];
    let mut labels = vec![false; props.len()];
    let mut report = DataQualityReport {
        feature_set: feature_set.as_str().to_string(),
        rows: props.len(),
        ..Default::default()
    };
    for f in inputs.filings {
        if let Some(m) = feature_window.month_index(f.filing_date) {
            report.filings_in_feature_window += 1;
            if let Some(&i) = index.get(f.property_id.as_str()) {
                monthly[i][m] += 1.0;
            }
        } else if label_window.contains(f.filing_date) {
            report.filings_in_label_window += 1;
            if let Some(&i) = index.get(f.property_id.as_str()) {
                labels[i] = true;
            }
        }
    }

    let mut columns = eviction_columns(feature_window);
    let mut rows: Vec<Vec<f64>> = monthly
        .into_iter()
        .map(|counts| {
            let quarters: Vec<f64> = counts.chunks(3).map(|c| c.iter().sum()).collect();
            let mut row = counts;
            row.extend(quarters);
            row
        })
        .collect();

    if feature_set.has_neighborhood() {
        columns.extend(Neighborhoods::field_names().map(String::from));
        append_neighborhood(&mut rows, props, inputs.neighborhoods, &mut report);
    }

    if feature_set.has_owner() {
        columns.extend(OWNER_COLUMNS.iter().map(|c| c.to_string()));
        append_owner(&mut rows, props, inputs, feature_window, &mut report)?;
    }

    report.positives = labels.iter().filter(|&&l| l).count();
    let dataset = LabeledDataset {
        feature_set,
        windows: *windows,
        columns,
        property_ids: props.iter().map(|p| p.property_id.clone()).collect(),
        rows,
        labels,
    };
    Ok((dataset, report))
}

fn append_neighborhood(
    rows: &mut [Vec<f64>],
    props: &[PropertyRecord],
    neighborhoods: &Neighborhoods,
    report: &mut DataQualityReport,
) {
    let lookup = |p: &PropertyRecord, level_block: bool, j: usize| -> Option<f64> {
        if level_block {
            neighborhoods.blocks.get(&p.block_id).and_then(|v| v[j])
        } else {
            neighborhoods.block_groups.get(&p.block_group_id).and_then(|v| v[j])
        }
    };
    let specs = BLOCK_FIELDS
        .iter()
        .enumerate()
        .map(|(j, name)| (true, j, *name))
        .chain(BLOCK_GROUP_FIELDS.iter().enumerate().map(|(j, name)| (false, j, *name)));
    for (is_block, j, name) in specs {
        let values: Vec<Option<f64>> = props.iter().map(|p| lookup(p, is_block, j)).collect();
        let mut present: Vec<f64> = values.iter().flatten().copied().collect();
        let fill = median(&mut present).unwrap_or(0.0);
        let mut imputed = 0;
        for (row, v) in rows.iter_mut().zip(&values) {
            row.push(v.unwrap_or_else(|| {
                imputed += 1;
                fill
            }));
        }
        if imputed > 0 {
            report.imputed.insert(name.to_string(), imputed);
        }
    }
}

fn append_owner(
    rows: &mut [Vec<f64>],
    props: &[PropertyRecord],
    inputs: DatasetInputs<'_>,
    feature_window: &PeriodWindow,
    report: &mut DataQualityReport,
) -> Result<()> {
    let ownership = OwnershipIndex::new(inputs.tenures)?;
    let reference = feature_window.end.last_day();
    let holdings = ownership.holdings_at(reference);
    let current_owner: HashMap<&str, &str> = props
        .iter()
        .map(|p| (p.property_id.as_str(), p.owner_id.as_str()))
        .collect();
    let ranking = rank_attorneys(inputs.filings, feature_window);
    let flags = attorney_flags_by_owner(inputs.filings, feature_window, &ownership, &current_owner, &ranking);
    let b = |x: bool| if x { 1.0 } else { 0.0 };
    for (row, p) in rows.iter_mut().zip(props) {
        row.push(f64::from(p.units));
        match ownership.owner_at(&p.property_id, reference) {
            Some(t) => {
                let f = flags.get(t.owner_id.as_str()).copied().unwrap_or_default();
                row.push(f64::from(holdings.get(t.owner_id.as_str()).copied().unwrap_or(0)));
                row.push(b(t.is_business));
                row.push(b(t.is_owner_occupied));
                row.push(b(f.top25));
                row.push(b(f.top26_to_50));
                for class in LocationClass::ALL {
                    row.push(b(t.location_class == class));
                }
            }
            None => {
                report.owner_missing += 1;
                row.extend([0.0; OWNER_COLUMNS.len() - 1]);
            }
        }
    }
    Ok(())
}
