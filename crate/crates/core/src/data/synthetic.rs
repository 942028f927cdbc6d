//! Seeded synthetic region: properties on a census-like grid, owners with
//! latent filing propensity, and monthly filings drawn from a logistic risk
//! model so that history, neighborhood and owner covariates all carry signal.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use super::{
    EvictionFiling, GeoLevel, LocationClass, Neighborhoods, OwnerTenure, OwnershipIndex,
    PropertyRecord, YearMonth, BLOCK_FIELDS, BLOCK_GROUP_FIELDS,
};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitBucket {
    pub min: u32,
    pub max: u32,
    pub weight: f64,
}

/// Coefficients of the monthly filing log-odds:
///
/// `intercept + log_units*ln(units) + neighborhood*z + owner*o + business*[is business]
///  + history*[filing in previous 3 months] + u`, with `z` the block-group
/// latent, `o` the owner latent and `u ~ N(0, property_sd)` a property effect.
/// A `hotspot_share` of properties, those ranking highest on
/// `hotspot_neighborhood*z + o_first + hotspot_log_units*ln(units) + N(0, 1)`
/// (with `o_first` the original owner's latent), get `hotspot_effect` added
/// to `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskCoefficients {
    pub intercept: f64,
    pub log_units: f64,
    pub neighborhood: f64,
    pub owner: f64,
    pub business: f64,
    pub history: f64,
    pub property_sd: f64,
    /// Extra filings per event: `Poisson(extra_filings_log_units * ln(units))`.
    pub extra_filings_log_units: f64,
    pub hotspot_share: f64,
    pub hotspot_effect: f64,
    pub hotspot_neighborhood: f64,
    pub hotspot_log_units: f64,
}

impl Default for RiskCoefficients {
    fn default() -> Self {
        RiskCoefficients {
            intercept: -6.8,
            log_units: 0.3,
            neighborhood: 0.5,
            owner: 0.25,
            business: 0.2,
            history: 0.3,
            property_sd: 0.2,
            extra_filings_log_units: 0.3,
            hotspot_share: 0.03,
            hotspot_effect: 3.6,
            hotspot_neighborhood: 1.0,
            hotspot_log_units: 0.5,
        }
    }
}

impl RiskCoefficients {
    /// Every effect zero: each property-month files with probability
    /// `sigmoid(intercept)` independently.
    pub fn intercept_only(intercept: f64) -> Self {
        RiskCoefficients {
            intercept,
            log_units: 0.0,
            neighborhood: 0.0,
            owner: 0.0,
            business: 0.0,
            history: 0.0,
            property_sd: 0.0,
            extra_filings_log_units: 0.0,
            hotspot_share: 0.0,
            hotspot_effect: 0.0,
            hotspot_neighborhood: 0.0,
            hotspot_log_units: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub properties: usize,
    pub bbox: BoundingBox,
    /// Block groups form a `grid_rows x grid_cols` grid over the box.
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Each block group splits into `blocks_per_side^2` blocks.
    pub blocks_per_side: usize,
    pub start_month: YearMonth,
    pub months: u32,
    pub owners_per_property: f64,
    pub attorneys: usize,
    pub single_unit_share: f64,
    pub non_rental_share: f64,
    pub transfer_share: f64,
    pub missing_rate: f64,
    pub unit_buckets: Vec<UnitBucket>,
    pub coefficients: RiskCoefficients,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            properties: 2000,
            bbox: BoundingBox {
                lat_min: 38.60,
                lat_max: 38.66,
                lon_min: -90.28,
                lon_max: -90.20,
            },
            grid_rows: 6,
            grid_cols: 6,
            blocks_per_side: 2,
            start_month: YearMonth::new(2021, 1).expect("valid month"),
            months: 13,
            owners_per_property: 0.4,
            attorneys: 60,
            single_unit_share: 0.04,
            non_rental_share: 0.02,
            transfer_share: 0.03,
            missing_rate: 0.02,
            unit_buckets: vec![
                UnitBucket { min: 2, max: 4, weight: 0.58 },
                UnitBucket { min: 5, max: 9, weight: 0.2 },
                UnitBucket { min: 10, max: 24, weight: 0.11 },
                UnitBucket { min: 25, max: 49, weight: 0.06 },
                UnitBucket { min: 50, max: 99, weight: 0.03 },
                UnitBucket { min: 100, max: 300, weight: 0.02 },
            ],
            coefficients: RiskCoefficients::default(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("synthetic: {m}")));
        if self.properties == 0 {
            return fail("property count must be positive");
        }
        let b = &self.bbox;
        if !(b.lat_min < b.lat_max && b.lon_min < b.lon_max)
            || b.lat_min < -90.0
            || b.lat_max > 90.0
            || b.lon_min < -180.0
            || b.lon_max > 180.0
        {
            return fail("bounding box must be non-empty and within WGS84 bounds");
        }
        if self.grid_rows == 0 || self.grid_cols == 0 || self.blocks_per_side == 0 {
            return fail("grid dimensions must be positive");
        }
        if self.months == 0 {
            return fail("months must be positive");
        }
        if !(self.owners_per_property > 0.0 && self.owners_per_property <= 1.0) {
            return fail("owners_per_property must be in (0, 1]");
        }
        if self.attorneys == 0 {
            return fail("need at least one attorney");
        }
        for (name, v) in [
            ("single_unit_share", self.single_unit_share),
            ("non_rental_share", self.non_rental_share),
            ("transfer_share", self.transfer_share),
            ("missing_rate", self.missing_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("synthetic: {name} must be in [0, 1]")));
            }
        }
        if self.unit_buckets.is_empty()
            || self
                .unit_buckets
                .iter()
                .any(|u| u.min < 2 || u.max < u.min || !(u.weight >= 0.0))
            || self.unit_buckets.iter().all(|u| u.weight == 0.0)
        {
            return fail("unit buckets need 2 <= min <= max and non-negative weights, not all zero");
        }
        let c = &self.coefficients;
        let all = [
            c.intercept, c.log_units, c.neighborhood, c.owner, c.business, c.history,
            c.property_sd, c.extra_filings_log_units, c.hotspot_effect, c.hotspot_neighborhood,
            c.hotspot_log_units,
        ];
        if all.iter().any(|v| !v.is_finite()) || c.property_sd < 0.0 || c.extra_filings_log_units < 0.0 {
            return fail("coefficients must be finite with non-negative property_sd and extra_filings_log_units");
        }
        if !(0.0..=1.0).contains(&c.hotspot_share) {
            return fail("hotspot_share must be in [0, 1]");
        }
        Ok(())
    }
}

/// Latent quantities behind a synthetic region, kept for validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub coefficients: RiskCoefficients,
    pub block_group_latent: BTreeMap<String, f64>,
    pub owner_latent: BTreeMap<String, f64>,
    /// Static part of each property's monthly log-odds (no history term),
    /// using the owner at the start of the horizon.
    pub property_log_odds: BTreeMap<String, f64>,
    pub hotspots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// All properties, including ones a default filter would exclude.
    pub properties: Vec<PropertyRecord>,
    pub filings: Vec<EvictionFiling>,
    pub neighborhoods: Neighborhoods,
    pub tenures: Vec<OwnerTenure>,
    pub truth: GroundTruth,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Owner {
    id: String,
    latent: f64,
    is_business: bool,
    location: LocationClass,
}

pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    // Block groups and their attributes.
    let mut neighborhoods = Neighborhoods::default();
    let mut group_latent: BTreeMap<String, f64> = BTreeMap::new();
    let mut group_ids = Vec::new();
    for r in 0..config.grid_rows {
        for c in 0..config.grid_cols {
            let id = format!("G{r:02}{c:02}");
            let z: f64 = std_normal.sample(&mut rng);
            let values = block_group_values(z, config.missing_rate, &mut rng, &std_normal);
            neighborhoods.insert(GeoLevel::BlockGroup, id.clone(), values)?;
            for i in 0..config.blocks_per_side {
                for j in 0..config.blocks_per_side {
                    let zb = z + 0.3 * std_normal.sample(&mut rng);
                    let values = block_values(zb, config.missing_rate, &mut rng, &std_normal);
                    neighborhoods.insert(GeoLevel::Block, format!("{id}-B{i}{j}"), values)?;
                }
            }
            group_latent.insert(id.clone(), z);
            group_ids.push((r, c, id));
        }
    }

    // Owners; portfolio size grows with the latent propensity.
    let n_owners = ((config.properties as f64 * config.owners_per_property).round() as usize).max(1);
    let owners: Vec<Owner> = (0..n_owners)
        .map(|k| {
            let latent: f64 = std_normal.sample(&mut rng);
            let is_business = rng.random::<f64>() < sigmoid(-0.3 + 1.5 * latent);
            let u: f64 = rng.random();
            let location = if u < sigmoid(-1.8 + 0.9 * latent) {
                LocationClass::OutOfState
            } else if u < sigmoid(-1.8 + 0.9 * latent) + 0.15 {
                LocationClass::InState
            } else {
                LocationClass::Local
            };
            Owner {
                id: format!("O{k:05}"),
                latent,
                is_business,
                location,
            }
        })
        .collect();
    let owner_weights: Vec<f64> = owners
        .iter()
        .map(|o| (0.8 * o.latent).exp() * rng.random_range(0.05f64..1.0).powf(-0.6))
        .collect();
    let owner_pick = WeightedIndex::new(&owner_weights).expect("positive weights");
    let bucket_pick =
        WeightedIndex::new(config.unit_buckets.iter().map(|b| b.weight)).expect("validated weights");

    // Properties.
    let b = config.bbox;
    let cell_lat = (b.lat_max - b.lat_min) / config.grid_rows as f64;
    let cell_lon = (b.lon_max - b.lon_min) / config.grid_cols as f64;
    let sub = config.blocks_per_side;
    let horizon_start = config.start_month.first_day();
    let horizon_days = (config.start_month.offset(i64::from(config.months)).first_day() - horizon_start).num_days();
    let tenure_start = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");

    let mut properties = Vec::with_capacity(config.properties);
    let mut tenures = Vec::new();
    let mut property_effect = Vec::with_capacity(config.properties);
    let mut hotspot_propensity = Vec::with_capacity(config.properties);
    for i in 0..config.properties {
        let (r, c, gid) = &group_ids[rng.random_range(0..group_ids.len())];
        let (bi, bj) = (rng.random_range(0..sub), rng.random_range(0..sub));
        let lat = b.lat_min + cell_lat * (*r as f64 + (bi as f64 + rng.random::<f64>()) / sub as f64);
        let lon = b.lon_min + cell_lon * (*c as f64 + (bj as f64 + rng.random::<f64>()) / sub as f64);
        let units = if rng.random::<f64>() < config.single_unit_share {
            1
        } else {
            let bucket = config.unit_buckets[bucket_pick.sample(&mut rng)];
            rng.random_range(bucket.min..=bucket.max)
        };
        let is_rental = rng.random::<f64>() >= config.non_rental_share;
        let pid = format!("P{i:05}");
        let first = &owners[owner_pick.sample(&mut rng)];
        let occupied = |o: &Owner, rng: &mut ChaCha8Rng| !o.is_business && units <= 4 && rng.random::<f64>() < 0.3;
        let mut current = first;
        if rng.random::<f64>() < config.transfer_share {
            let second = &owners[owner_pick.sample(&mut rng)];
            let transfer = horizon_start + chrono::Duration::days(rng.random_range(1..horizon_days));
            tenures.push(OwnerTenure {
                owner_id: first.id.clone(),
                property_id: pid.clone(),
                start: tenure_start,
                end: Some(transfer),
                is_business: first.is_business,
                is_owner_occupied: occupied(first, &mut rng),
                location_class: first.location,
            });
            tenures.push(OwnerTenure {
                owner_id: second.id.clone(),
                property_id: pid.clone(),
                start: transfer,
                end: None,
                is_business: second.is_business,
                is_owner_occupied: occupied(second, &mut rng),
                location_class: second.location,
            });
            current = second;
        } else {
            tenures.push(OwnerTenure {
                owner_id: first.id.clone(),
                property_id: pid.clone(),
                start: tenure_start,
                end: None,
                is_business: first.is_business,
                is_owner_occupied: occupied(first, &mut rng),
                location_class: first.location,
            });
        }
        property_effect.push(config.coefficients.property_sd * std_normal.sample(&mut rng));
        let c = &config.coefficients;
        hotspot_propensity.push(
            c.hotspot_neighborhood * group_latent[gid]
                + first.latent
                + c.hotspot_log_units * f64::from(units).ln()
                + std_normal.sample(&mut rng),
        );
        properties.push(PropertyRecord {
            property_id: pid,
            location: GeoPoint { lat, lon },
            units,
            owner_id: current.id.clone(),
            block_id: format!("{gid}-B{bi}{bj}"),
            block_group_id: gid.clone(),
            is_rental,
        });
    }

    let n_hot = (config.coefficients.hotspot_share * config.properties as f64).round() as usize;
    let mut by_propensity: Vec<usize> = (0..config.properties).collect();
    by_propensity.sort_by(|&a, &b| hotspot_propensity[b].total_cmp(&hotspot_propensity[a]).then(a.cmp(&b)));
    let mut hotspots: Vec<String> = Vec::with_capacity(n_hot);
    for &i in &by_propensity[..n_hot] {
        property_effect[i] += config.coefficients.hotspot_effect;
        hotspots.push(properties[i].property_id.clone());
    }
    hotspots.sort();

    let ownership = OwnershipIndex::new(&tenures)?;
    let owner_by_id: BTreeMap<&str, &Owner> = owners.iter().map(|o| (o.id.as_str(), o)).collect();
    let coef = config.coefficients;
    let static_log_odds = |p: &PropertyRecord, effect: f64, date: NaiveDate| -> f64 {
        let owner = ownership
            .owner_at(&p.property_id, date)
            .map(|t| owner_by_id[t.owner_id.as_str()]);
        let (o, biz) = owner.map_or((0.0, false), |o| (o.latent, o.is_business));
        coef.intercept
            + coef.log_units * f64::from(p.units).ln()
            + coef.neighborhood * group_latent[&p.block_group_id]
            + coef.owner * o
            + if biz { coef.business } else { 0.0 }
            + effect
    };

    // Attorneys: popularity ~ 1/rank; high-propensity owners favor the top 25.
    let attorney_ids: Vec<String> = (1..=config.attorneys).map(|k| format!("ATT{k:03}")).collect();
    let popularity: Vec<f64> = (1..=config.attorneys).map(|k| 1.0 / k as f64).collect();
    let any_attorney = WeightedIndex::new(&popularity).expect("positive weights");
    let top = config.attorneys.min(25);
    let top_attorney = WeightedIndex::new(&popularity[..top]).expect("positive weights");

    let mut filings = Vec::new();
    let mut last_event_month: Vec<Option<u32>> = vec![None; properties.len()];
    for m in 0..config.months {
        let month = config.start_month.offset(i64::from(m));
        let month_start = month.first_day();
        let days_in_month = month.last_day() - month_start;
        for (i, p) in properties.iter().enumerate() {
            let recent = last_event_month[i].is_some_and(|last| m - last <= 3);
            let eta = static_log_odds(p, property_effect[i], month_start)
                + if recent { coef.history } else { 0.0 };
            if rng.random::<f64>() >= sigmoid(eta) {
                continue;
            }
            last_event_month[i] = Some(m);
            let lambda = coef.extra_filings_log_units * f64::from(p.units).ln();
            let count = 1 + if lambda > 0.0 {
                Poisson::new(lambda).expect("positive rate").sample(&mut rng) as u32
            } else {
                0
            };
            for _ in 0..count {
                let date = month_start + chrono::Duration::days(rng.random_range(0..=days_in_month.num_days()));
                let owner_latent = ownership
                    .owner_at(&p.property_id, date)
                    .map_or(0.0, |t| owner_by_id[t.owner_id.as_str()].latent);
                let attorney = if rng.random::<f64>() < 0.1 {
                    None
                } else if rng.random::<f64>() < sigmoid(1.5 * owner_latent) {
                    Some(attorney_ids[top_attorney.sample(&mut rng)].clone())
                } else {
                    Some(attorney_ids[any_attorney.sample(&mut rng)].clone())
                };
                filings.push(EvictionFiling {
                    case_id: format!("C{:07}", filings.len() + 1),
                    property_id: p.property_id.clone(),
                    filing_date: date,
                    attorney_id: attorney,
                });
            }
        }
    }

    let truth = GroundTruth {
        seed,
        coefficients: coef,
        block_group_latent: group_latent.clone(),
        owner_latent: owners.iter().map(|o| (o.id.clone(), o.latent)).collect(),
        property_log_odds: properties
            .iter()
            .zip(&property_effect)
            .map(|(p, &e)| (p.property_id.clone(), static_log_odds(p, e, horizon_start)))
            .collect(),
        hotspots,
    };

    Ok(SyntheticData {
        properties,
        filings,
        neighborhoods,
        tenures,
        truth,
    })
}

fn maybe_missing(v: f64, missing_rate: f64, rng: &mut ChaCha8Rng) -> Option<f64> {
    (rng.random::<f64>() >= missing_rate).then_some(v)
}

fn rate(base: f64, slope: f64, z: f64, rng: &mut ChaCha8Rng, n: &Normal<f64>) -> f64 {
    sigmoid(base + slope * z + 0.35 * n.sample(rng))
}

fn block_group_values(z: f64, missing: f64, rng: &mut ChaCha8Rng, n: &Normal<f64>) -> Vec<Option<f64>> {
    // (base, slope) per rate field, in BLOCK_GROUP_FIELDS order after the two dollar fields
    const RATES: [(f64, f64); 10] = [
        (-1.0, 0.3),  // grapi
        (0.0, 0.7),   // pct_renter_occupied
        (-0.5, 0.2),  // pct_renter_multi_occupant
        (-1.6, 0.8),  // pct_below_poverty
        (0.2, -0.6),  // pct_with_mortgage
        (-1.7, 0.8),  // pct_snap_assistance
        (2.0, -0.5),  // pct_health_insurance
        (-2.0, 0.7),  // pct_female_head_children
        (1.8, -0.6),  // pct_high_school
        (-2.4, 0.0),  // pct_veteran
    ];
    let income = 52_000.0 * (-0.35 * z + 0.15 * n.sample(rng)).exp();
    let rent = 850.0 * (-0.1 * z + 0.1 * n.sample(rng)).exp();
    let mut out = vec![maybe_missing(income.round(), missing, rng), maybe_missing(rent.round(), missing, rng)];
    for (base, slope) in RATES {
        let v = rate(base, slope, z, rng, n);
        out.push(maybe_missing(v, missing, rng));
    }
    debug_assert_eq!(out.len(), BLOCK_GROUP_FIELDS.len());
    out
}

fn block_values(z: f64, missing: f64, rng: &mut ChaCha8Rng, n: &Normal<f64>) -> Vec<Option<f64>> {
    let under_18 = rate(-1.4, 0.4, z, rng, n);
    let occupied = rate(2.0, -0.6, z, rng, n);
    // race/ethnicity shares: softmax over four groups plus other
    let logits = [
        0.8 - 0.9 * z + 0.3 * n.sample(rng),
        0.2 + 0.9 * z + 0.3 * n.sample(rng),
        -2.5 + 0.2 * n.sample(rng),
        -2.8 + 0.2 * n.sample(rng),
        -3.0 + 0.2 * n.sample(rng),
    ];
    let total: f64 = logits.iter().map(|l| l.exp()).sum();
    let mut out = vec![maybe_missing(under_18, missing, rng), maybe_missing(occupied, missing, rng)];
    for l in logits {
        out.push(maybe_missing(l.exp() / total, missing, rng));
    }
    debug_assert_eq!(out.len(), BLOCK_FIELDS.len());
    out
}
