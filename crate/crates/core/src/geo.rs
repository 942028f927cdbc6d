//! Distance and time cost model for canvassing routes.
//!
//! Travel between two properties is charged at `distance / speed`, where the
//! speed is a step function of the leg distance (short hops are walked, longer
//! ones driven). Each dwelling unit at a visited property costs a fixed
//! door-knock time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MILES: f64 = 3958.7613;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::invalid(format!("latitude {lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(Error::invalid(format!("longitude {lon} outside [-180, 180]")));
        }
        Ok(GeoPoint { lat, lon })
    }
}

/// Great-circle (haversine) distance in miles.
pub fn geodesic_miles(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let s_phi = (dphi / 2.0).sin();
    let s_lambda = (dlambda / 2.0).sin();
    let h = s_phi * s_phi + phi1.cos() * phi2.cos() * s_lambda * s_lambda;
    2.0 * EARTH_RADIUS_MILES * h.sqrt().min(1.0).asin()
}

/// Knock time per unit plus a piecewise-constant speed table.
///
/// `breakpoints_miles[i]` is the inclusive upper bound of band `i`; the last
/// entry of `speeds_mph` applies beyond the final breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    pub knock_hours_per_unit: f64,
    pub breakpoints_miles: Vec<f64>,
    pub speeds_mph: Vec<f64>,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            knock_hours_per_unit: 0.1,
            breakpoints_miles: vec![1.0, 3.0, 5.0],
            speeds_mph: vec![4.0, 15.0, 30.0, 55.0],
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.knock_hours_per_unit > 0.0 && self.knock_hours_per_unit.is_finite()) {
            return Err(Error::Config(format!(
                "knock_hours_per_unit must be positive, got {}",
                self.knock_hours_per_unit
            )));
        }
        if self.speeds_mph.len() != self.breakpoints_miles.len() + 1 {
            return Err(Error::Config(format!(
                "speed table needs one more speed than breakpoints ({} speeds, {} breakpoints)",
                self.speeds_mph.len(),
                self.breakpoints_miles.len()
            )));
        }
        if self.breakpoints_miles.iter().any(|b| !(b.is_finite() && *b > 0.0))
            || self.breakpoints_miles.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(
                "speed breakpoints must be positive and strictly increasing".into(),
            ));
        }
        if self.speeds_mph.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("speeds must be strictly positive".into()));
        }
        Ok(())
    }

    /// Travel speed for a leg of `miles`. Band bounds are upper-inclusive.
    pub fn speed_for_distance(&self, miles: f64) -> Result<f64> {
        if miles.is_nan() || miles < 0.0 {
            return Err(Error::invalid(format!("negative distance {miles}")));
        }
        Ok(self.speed_unchecked(miles))
    }

    fn speed_unchecked(&self, miles: f64) -> f64 {
        let band = self
            .breakpoints_miles
            .iter()
            .position(|&upper| miles <= upper)
            .unwrap_or(self.breakpoints_miles.len());
        self.speeds_mph[band]
    }

    /// Hours to travel `miles`.
    ///
    /// Not monotone across band edges: 1.0 mi at walking speed takes longer
    /// than 1.01 mi at driving speed.
    pub fn leg_time(&self, miles: f64) -> Result<f64> {
        Ok(miles / self.speed_for_distance(miles)?)
    }

    pub(crate) fn leg_time_between(&self, a: GeoPoint, b: GeoPoint) -> f64 {
        let d = geodesic_miles(a, b);
        d / self.speed_unchecked(d)
    }

    pub fn knock_time(&self, units: u32) -> f64 {
        self.knock_hours_per_unit * f64::from(units)
    }
}
