//! Comma-separated input and output for the four data tables.
//!
//! Row numbers in errors count data rows from 1 (the header is not counted).

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{
    EvictionFiling, GeoLevel, Neighborhoods, OwnerTenure, PropertyRecord,
    BLOCK_FIELDS, BLOCK_GROUP_FIELDS,
};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;

const PROPERTY_COLUMNS: [&str; 8] = [
    "property_id", "lat", "lon", "units", "owner_id", "block_id", "block_group_id", "is_rental",
];
const FILING_COLUMNS: [&str; 4] = ["case_id", "property_id", "filing_date", "attorney_id"];
const TENURE_COLUMNS: [&str; 7] = [
    "owner_id", "property_id", "start_date", "end_date", "is_business", "is_owner_occupied",
    "location_class",
];

/// Which properties are admitted to modeling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropertyFilter {
    pub min_units: u32,
    pub rental_only: bool,
}

impl Default for PropertyFilter {
    fn default() -> Self {
        PropertyFilter {
            min_units: 2,
            rental_only: true,
        }
    }
}

impl PropertyFilter {
    /// Splits valid records into admitted ones and a report of the rest.
    pub fn apply(&self, records: Vec<PropertyRecord>) -> (Vec<PropertyRecord>, FilterReport) {
        let mut report = FilterReport {
            rows_read: records.len(),
            ..FilterReport::default()
        };
        let mut admitted = Vec::with_capacity(records.len());
        for r in records {
            if r.units < self.min_units {
                report.below_min_units += 1;
                report.excluded_ids.push(r.property_id);
            } else if self.rental_only && !r.is_rental {
                report.non_rental += 1;
                report.excluded_ids.push(r.property_id);
            } else {
                admitted.push(r);
            }
        }
        report.admitted = admitted.len();
        (admitted, report)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub rows_read: usize,
    pub admitted: usize,
    pub below_min_units: usize,
    pub non_rental: usize,
    /// Valid properties kept out of modeling; filings on them are still
    /// legitimate (they count toward attorney rankings).
    #[serde(skip)]
    pub excluded_ids: Vec<String>,
}

struct Table {
    file: String,
    columns: HashMap<String, usize>,
    reader: csv::Reader<File>,
}

struct Row<'a> {
    file: &'a str,
    row: usize,
    columns: &'a HashMap<String, usize>,
    record: &'a csv::StringRecord,
}

impl Table {
    fn open(path: &Path, required: &[&str]) -> Result<Table> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let columns: HashMap<String, usize> = reader
            .headers()?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let name = path.display().to_string();
        for col in required {
            if !columns.contains_key(*col) {
                return Err(Error::MissingColumn {
                    file: name,
                    column: col.to_string(),
                });
            }
        }
        Ok(Table {
            file: name,
            columns,
            reader,
        })
    }

    fn for_each(mut self, mut f: impl FnMut(Row<'_>) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        let mut row = 0;
        while self.reader.read_record(&mut record)? {
            row += 1;
            f(Row {
                file: &self.file,
                row,
                columns: &self.columns,
                record: &record,
            })?;
        }
        Ok(())
    }
}

impl Row<'_> {
    fn error(&self, field: &str, message: impl Into<String>) -> Error {
        Error::InvalidRow {
            file: self.file.to_string(),
            row: self.row,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn raw(&self, field: &str) -> &str {
        self.columns
            .get(field)
            .and_then(|&i| self.record.get(i))
            .unwrap_or("")
    }

    fn text(&self, field: &str) -> Result<String> {
        let v = self.raw(field);
        if v.is_empty() {
            return Err(self.error(field, "value is required"));
        }
        Ok(v.to_string())
    }

    fn optional_text(&self, field: &str) -> Option<String> {
        let v = self.raw(field);
        (!v.is_empty()).then(|| v.to_string())
    }

    fn parse<T: FromStr>(&self, field: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(field);
        v.parse()
            .map_err(|e| self.error(field, format!("cannot parse `{v}`: {e}")))
    }

    fn optional_f64(&self, field: &str) -> Result<Option<f64>> {
        let v = self.raw(field);
        if v.is_empty() || v.eq_ignore_ascii_case("na") {
            return Ok(None);
        }
        self.parse(field).map(Some)
    }

    fn flag(&self, field: &str) -> Result<bool> {
        match self.raw(field) {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            other => Err(self.error(field, format!("expected true/false, got `{other}`"))),
        }
    }

    fn date(&self, field: &str) -> Result<NaiveDate> {
        let v = self.raw(field);
        NaiveDate::parse_from_str(v, "%Y-%m-%d")
            .map_err(|e| self.error(field, format!("cannot parse date `{v}`: {e}")))
    }
}

/// Reads and validates properties, then applies `filter`.
pub fn load_properties(path: &Path, filter: &PropertyFilter) -> Result<(Vec<PropertyRecord>, FilterReport)> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    Table::open(path, &PROPERTY_COLUMNS)?.for_each(|row| {
        let property_id = row.text("property_id")?;
        let lat: f64 = row.parse("lat")?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(row.error("lat", format!("latitude {lat} outside [-90, 90]")));
        }
        let lon: f64 = row.parse("lon")?;
        if !(-180.0..=180.0).contains(&lon) {
            return Err(row.error("lon", format!("longitude {lon} outside [-180, 180]")));
        }
        let units: u32 = row.parse("units")?;
        if units == 0 {
            return Err(row.error("units", "must be positive"));
        }
        if !seen.insert(property_id.clone()) {
            return Err(Error::Duplicate {
                kind: "property_id",
                id: property_id,
            });
        }
        records.push(PropertyRecord {
            property_id,
            location: GeoPoint { lat, lon },
            units,
            owner_id: row.text("owner_id")?,
            block_id: row.text("block_id")?,
            block_group_id: row.text("block_group_id")?,
            is_rental: row.flag("is_rental")?,
        });
        Ok(())
    })?;
    Ok(filter.apply(records))
}

/// Reads filings; every `property_id` must be in `known_properties`.
pub fn load_filings(path: &Path, known_properties: &HashSet<&str>) -> Result<Vec<EvictionFiling>> {
    let mut filings = Vec::new();
    let mut seen = HashSet::new();
    Table::open(path, &FILING_COLUMNS)?.for_each(|row| {
        let case_id = row.text("case_id")?;
        let property_id = row.text("property_id")?;
        if !known_properties.contains(property_id.as_str()) {
            return Err(row.error("property_id", format!("unknown property `{property_id}`")));
        }
        if !seen.insert(case_id.clone()) {
            return Err(Error::Duplicate {
                kind: "case_id",
                id: case_id,
            });
        }
        filings.push(EvictionFiling {
            case_id,
            property_id,
            filing_date: row.date("filing_date")?,
            attorney_id: row.optional_text("attorney_id"),
        });
        Ok(())
    })?;
    Ok(filings)
}

pub fn load_neighborhoods(path: &Path) -> Result<Neighborhoods> {
    let mut required = vec!["level", "geo_id"];
    required.extend(BLOCK_FIELDS);
    required.extend(BLOCK_GROUP_FIELDS);
    let mut out = Neighborhoods::default();
    Table::open(path, &required)?.for_each(|row| {
        let level = match row.raw("level") {
            "block" => GeoLevel::Block,
            "block_group" => GeoLevel::BlockGroup,
            other => return Err(row.error("level", format!("expected block or block_group, got `{other}`"))),
        };
        let geo_id = row.text("geo_id")?;
        let mut values = Vec::new();
        for name in level.fields() {
            let v = row.optional_f64(name)?;
            if let Some(v) = v {
                super::validate_neighborhood_value(name, v).map_err(|m| row.error(name, m))?;
            }
            values.push(v);
        }
        out.insert(level, geo_id, values)
    })?;
    Ok(out)
}

pub fn load_tenures(path: &Path) -> Result<Vec<OwnerTenure>> {
    let mut out = Vec::new();
    Table::open(path, &TENURE_COLUMNS)?.for_each(|row| {
        let end = match row.raw("end_date") {
            "" => None,
            _ => Some(row.date("end_date")?),
        };
        let start = row.date("start_date")?;
        if end.is_some_and(|e| e < start) {
            return Err(row.error("end_date", "ends before start_date"));
        }
        out.push(OwnerTenure {
            owner_id: row.text("owner_id")?,
            property_id: row.text("property_id")?,
            start,
            end,
            is_business: row.flag("is_business")?,
            is_owner_occupied: row.flag("is_owner_occupied")?,
            location_class: row.parse("location_class")?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub(crate) fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub(crate) fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_properties(path: &Path, records: &[PropertyRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(PROPERTY_COLUMNS)?;
    for r in records {
        w.write_record([
            r.property_id.clone(),
            r.location.lat.to_string(),
            r.location.lon.to_string(),
            r.units.to_string(),
            r.owner_id.clone(),
            r.block_id.clone(),
            r.block_group_id.clone(),
            r.is_rental.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn write_filings(path: &Path, filings: &[EvictionFiling]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(FILING_COLUMNS)?;
    for f in filings {
        w.write_record([
            f.case_id.as_str(),
            f.property_id.as_str(),
            &f.filing_date.format("%Y-%m-%d").to_string(),
            f.attorney_id.as_deref().unwrap_or(""),
        ])?;
    }
    finish(w, path)
}

pub fn write_neighborhoods(path: &Path, n: &Neighborhoods) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["level", "geo_id"];
    header.extend(Neighborhoods::field_names());
    w.write_record(&header)?;
    let blank_groups = vec![String::new(); BLOCK_GROUP_FIELDS.len()];
    let blank_blocks = vec![String::new(); BLOCK_FIELDS.len()];
    let fmt = |vals: &[Option<f64>]| -> Vec<String> {
        vals.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()).collect()
    };
    for (id, vals) in &n.blocks {
        let mut rec = vec!["block".to_string(), id.clone()];
        rec.extend(fmt(vals));
        rec.extend(blank_groups.iter().cloned());
        w.write_record(&rec)?;
    }
    for (id, vals) in &n.block_groups {
        let mut rec = vec!["block_group".to_string(), id.clone()];
        rec.extend(blank_blocks.iter().cloned());
        rec.extend(fmt(vals));
        w.write_record(&rec)?;
    }
    finish(w, path)
}

pub fn write_tenures(path: &Path, tenures: &[OwnerTenure]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TENURE_COLUMNS)?;
    for t in tenures {
        w.write_record([
            t.owner_id.clone(),
            t.property_id.clone(),
            t.start.format("%Y-%m-%d").to_string(),
            t.end.map(|e| e.format("%Y-%m-%d").to_string()).unwrap_or_default(),
            t.is_business.to_string(),
            t.is_owner_occupied.to_string(),
            t.location_class.as_str().to_string(),
        ])?;
    }
    finish(w, path)
}
