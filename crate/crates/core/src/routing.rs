//! Open-path tours over property sets and budget-constrained selection.
//!
//! Tours start at the northwesternmost stop (largest `lat - lon`, ties by
//! input order), are built by nearest neighbor on travel time and improved
//! with first-improvement 2-opt and Or-opt, then seeded double-bridge kicks.
//! The start stays fixed and the path does not return to it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::io::{finish, writer};
use crate::error::{Error, Result};
use crate::geo::{CostParams, GeoPoint};

/// Improvements smaller than this (hours) are treated as ties.
pub const IMPROVEMENT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub property_id: String,
    pub location: GeoPoint,
    pub units: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TourOptions {
    /// Upper bound on full 2-opt passes per tour.
    pub max_sweeps: usize,
    /// Seeded perturbation rounds applied after local search by
    /// [`route_tsp`]; a kick is kept only if it shortens the tour.
    pub kicks: usize,
}

impl Default for TourOptions {
    fn default() -> Self {
        TourOptions { max_sweeps: 50, kicks: 30 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub visit_order: Vec<String>,
    pub locations: Vec<GeoPoint>,
    pub units: Vec<u32>,
    /// Travel hours between consecutive visits (`len - 1` entries).
    pub leg_times: Vec<f64>,
    pub knock_times: Vec<f64>,
    pub total_time: f64,
    pub total_units: u64,
    pub total_properties: usize,
    /// 2-opt stopped at the sweep cap while still improving.
    pub sweep_cap_hit: bool,
}

impl RoutePlan {
    pub fn empty() -> Self {
        RoutePlan::default()
    }

    pub fn is_empty(&self) -> bool {
        self.visit_order.is_empty()
    }

    /// Plan visiting `stops` in the given order.
    pub fn from_ordered<'a>(stops: impl IntoIterator<Item = &'a Stop>, params: &CostParams) -> Self {
        let mut plan = RoutePlan::empty();
        let mut prev: Option<GeoPoint> = None;
        for s in stops {
            if let Some(p) = prev {
                plan.leg_times.push(params.leg_time_between(p, s.location));
            }
            prev = Some(s.location);
            plan.visit_order.push(s.property_id.clone());
            plan.locations.push(s.location);
            plan.units.push(s.units);
            plan.knock_times.push(params.knock_time(s.units));
            plan.total_units += u64::from(s.units);
        }
        plan.total_properties = plan.visit_order.len();
        plan.total_time = route_time(&plan);
        plan
    }

    pub fn travel_time(&self) -> f64 {
        self.leg_times.iter().sum()
    }

    /// One row per visit: position, id, coordinates, units, the travel leg
    /// into the visit, its knock time and the running total.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = writer(path)?;
        w.write_record(["order", "property_id", "lat", "lon", "units", "leg_hours", "knock_hours", "cumulative_hours"])?;
        let mut cumulative = 0.0;
        for i in 0..self.visit_order.len() {
            let leg = if i == 0 { 0.0 } else { self.leg_times[i - 1] };
            cumulative += leg + self.knock_times[i];
            w.write_record([
                (i + 1).to_string(),
                self.visit_order[i].clone(),
                self.locations[i].lat.to_string(),
                self.locations[i].lon.to_string(),
                self.units[i].to_string(),
                leg.to_string(),
                self.knock_times[i].to_string(),
                cumulative.to_string(),
            ])?;
        }
        finish(w, path)
    }

    /// GeoJSON feature collection: the path as a LineString (when it has at
    /// least two visits) followed by one Point per visit.
    pub fn to_geojson(&self, name: &str) -> serde_json::Value {
        let mut features = Vec::with_capacity(self.visit_order.len() + 1);
        if self.locations.len() >= 2 {
            features.push(json!({
                "type": "Feature",
                "geometry": {
                    "type": "LineString",
                    "coordinates": self.locations.iter().map(|p| [p.lon, p.lat]).collect::<Vec<_>>(),
                },
                "properties": {
                    "name": name,
                    "total_hours": self.total_time,
                    "total_units": self.total_units,
                    "total_properties": self.total_properties,
                },
            }));
        }
        for (i, (id, p)) in self.visit_order.iter().zip(&self.locations).enumerate() {
            features.push(json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.lon, p.lat]},
                "properties": {"order": i + 1, "property_id": id, "units": self.units[i]},
            }));
        }
        json!({"type": "FeatureCollection", "features": features})
    }
}

/// Sum of leg and knock times.
pub fn route_time(plan: &RoutePlan) -> f64 {
    plan.leg_times.iter().sum::<f64>() + plan.knock_times.iter().sum::<f64>()
}

fn northwest_key(p: GeoPoint) -> f64 {
    p.lat - p.lon
}

fn northwest_index(stops: &[Stop]) -> usize {
    let mut best = 0;
    for (i, s) in stops.iter().enumerate().skip(1) {
        if northwest_key(s.location) > northwest_key(stops[best].location) {
            best = i;
        }
    }
    best
}

/// Symmetric travel-time lookup between stop indices.
pub trait TravelCost {
    fn cost(&self, a: usize, b: usize) -> f64;
}

/// Dense travel-time matrix.
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(stops: &[Stop], params: &CostParams) -> Self {
        let n = stops.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let t = params.leg_time_between(stops[i].location, stops[j].location);
                data[i * n + j] = t;
                data[j * n + i] = t;
            }
        }
        CostMatrix { n, data }
    }
}

impl TravelCost for CostMatrix {
    #[inline]
    fn cost(&self, a: usize, b: usize) -> f64 {
        self.data[a * self.n + b]
    }
}

/// Travel time along `tour`.
pub fn path_cost(tour: &[usize], cost: &impl TravelCost) -> f64 {
    tour.windows(2).map(|w| cost.cost(w[0], w[1])).sum()
}

/// Change in path cost from reversing `tour[i+1..=j]`.
#[inline]
fn reversal_delta(tour: &[usize], i: usize, j: usize, cost: &impl TravelCost) -> f64 {
    let (a, b, c) = (tour[i], tour[i + 1], tour[j]);
    let mut delta = cost.cost(a, c) - cost.cost(a, b);
    if j + 1 < tour.len() {
        let d = tour[j + 1];
        delta += cost.cost(b, d) - cost.cost(c, d);
    }
    delta
}

/// First-improvement 2-opt keeping `tour[0]` fixed. Returns true when the
/// sweep cap was reached while a sweep was still improving.
pub fn two_opt(tour: &mut [usize], cost: &impl TravelCost, max_sweeps: usize) -> bool {
    let n = tour.len();
    if n < 3 {
        return false;
    }
    for _ in 0..max_sweeps {
        let mut improved = false;
        for i in 0..n - 2 {
            for j in (i + 2)..n {
                if reversal_delta(tour, i, j, cost) < -IMPROVEMENT_EPS {
                    tour[i + 1..=j].reverse();
                    improved = true;
                }
            }
        }
        if !improved {
            return false;
        }
    }
    true
}

/// 2-opt driven by a queue of stops whose edges changed, starting from
/// `seed_stop` and its neighbours. Each queued stop is checked against every
/// move that removes one of its edges. Cheaper than [`two_opt`] on long
/// tours after a local edit, but it does not prove 2-opt stability. Returns
/// true if `max_moves_per_stop * len` moves were applied without settling.
fn two_opt_local(tour: &mut [usize], cost: &impl TravelCost, seed_stop: usize, max_moves_per_stop: usize) -> bool {
    let n = tour.len();
    if n < 3 {
        return false;
    }
    let mut pos = vec![0usize; tour.iter().max().map_or(0, |m| m + 1)];
    for (p, &s) in tour.iter().enumerate() {
        pos[s] = p;
    }
    let mut queued = vec![false; pos.len()];
    let mut queue = std::collections::VecDeque::new();
    let enqueue = |s: usize, queue: &mut std::collections::VecDeque<usize>, queued: &mut Vec<bool>| {
        if !queued[s] {
            queued[s] = true;
            queue.push_back(s);
        }
    };
    let p0 = pos[seed_stop];
    for p in p0.saturating_sub(1)..=(p0 + 1).min(n - 1) {
        enqueue(tour[p], &mut queue, &mut queued);
    }
    let mut moves_left = max_moves_per_stop.saturating_mul(n);
    while let Some(s) = queue.pop_front() {
        queued[s] = false;
        let p = pos[s];
        let mut found = None;
        'search: for e in [p.wrapping_sub(1), p] {
            if e >= n - 1 {
                continue;
            }
            // `e` as the first removed edge, then as the second
            for j in (e + 2)..n {
                if reversal_delta(tour, e, j, cost) < -IMPROVEMENT_EPS {
                    found = Some((e, j));
                    break 'search;
                }
            }
            for i in 0..e.saturating_sub(1) {
                if reversal_delta(tour, i, e, cost) < -IMPROVEMENT_EPS {
                    found = Some((i, e));
                    break 'search;
                }
            }
        }
        if p == n - 1 && found.is_none() {
            for i in 0..n.saturating_sub(2) {
                if reversal_delta(tour, i, n - 1, cost) < -IMPROVEMENT_EPS {
                    found = Some((i, n - 1));
                    break;
                }
            }
        }
        let Some((i, j)) = found else { continue };
        if moves_left == 0 {
            return true;
        }
        moves_left -= 1;
        tour[i + 1..=j].reverse();
        for (q, &t) in tour.iter().enumerate().take(j + 1).skip(i + 1) {
            pos[t] = q;
        }
        for q in [i, i + 1, j, j + 1, n - 1] {
            if q < n {
                enqueue(tour[q], &mut queue, &mut queued);
            }
        }
        enqueue(s, &mut queue, &mut queued);
    }
    false
}

/// One first-improvement pass of Or-opt: relocate a segment of up to three
/// stops (either orientation) elsewhere in the path, never moving `tour[0]`.
/// Returns true if any move was applied.
pub fn or_opt_pass(tour: &mut Vec<usize>, cost: &impl TravelCost) -> bool {
    let n = tour.len();
    let mut improved = false;
    for len in 1..=3usize {
        if n < len + 2 {
            break;
        }
        let mut i = 1;
        while i + len <= n {
            let (first, last) = (tour[i], tour[i + len - 1]);
            let prev = tour[i - 1];
            let next = tour.get(i + len).copied();
            let removal = cost.cost(prev, first) + next.map_or(0.0, |x| cost.cost(last, x))
                - next.map_or(0.0, |x| cost.cost(prev, x));
            let mut best: Option<(usize, bool, f64)> = None;
            // insert after tour[p], p outside [i - 1, i + len - 1]
            for p in 0..n {
                if p + 1 >= i && p < i + len {
                    continue;
                }
                let a = tour[p];
                let b = tour.get(p + 1).copied();
                let base = b.map_or(0.0, |b| cost.cost(a, b));
                let fwd = cost.cost(a, first) + b.map_or(0.0, |b| cost.cost(last, b)) - base;
                let rev = cost.cost(a, last) + b.map_or(0.0, |b| cost.cost(first, b)) - base;
                for (reversed, add) in [(false, fwd), (true, rev)] {
                    let gain = add - removal;
                    if gain < -IMPROVEMENT_EPS && best.is_none_or(|(_, _, g)| gain < g) {
                        best = Some((p, reversed, gain));
                    }
                }
            }
            if let Some((p, reversed, _)) = best {
                let mut seg: Vec<usize> = tour.drain(i..i + len).collect();
                if reversed {
                    seg.reverse();
                }
                let at = if p < i { p + 1 } else { p + 1 - len };
                tour.splice(at..at, seg);
                improved = true;
            }
            i += 1;
        }
    }
    improved
}

/// 2-opt to a local optimum, then Or-opt, repeated until neither improves.
/// The result is always 2-opt-stable unless the sweep cap is reached.
pub fn local_search(tour: &mut Vec<usize>, cost: &impl TravelCost, max_sweeps: usize) -> bool {
    let mut budget = max_sweeps;
    loop {
        if two_opt(tour, cost, budget) {
            return true;
        }
        if !or_opt_pass(tour, cost) {
            return false;
        }
        budget = budget.saturating_sub(1);
        if budget == 0 {
            return true;
        }
    }
}

/// Reorders three cut segments of `tour[1..]`: `A B C D -> A C B D`.
fn double_bridge(tour: &mut [usize], rng: &mut ChaCha8Rng) {
    let n = tour.len();
    let mut cuts = [rng.random_range(1..n), rng.random_range(1..n), rng.random_range(1..n)];
    cuts.sort_unstable();
    let [a, b, c] = cuts;
    if a == b || b == c {
        // degenerate cut: fall back to reversing the span
        tour[a..c.max(a + 1)].reverse();
        return;
    }
    tour[a..c].rotate_left(b - a);
}

/// Nearest-neighbor path from `start`; ties go to the lower index.
pub fn nearest_neighbor(n: usize, start: usize, cost: &impl TravelCost) -> Vec<usize> {
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    let mut cur = start;
    visited[cur] = true;
    tour.push(cur);
    for _ in 1..n {
        let mut best: Option<(usize, f64)> = None;
        for (j, &seen) in visited.iter().enumerate() {
            if seen {
                continue;
            }
            let c = cost.cost(cur, j);
            if best.is_none_or(|(_, bc)| c < bc) {
                best = Some((j, c));
            }
        }
        let (next, _) = best.expect("unvisited stop remains");
        visited[next] = true;
        tour.push(next);
        cur = next;
    }
    tour
}

/// Nearest-neighbor construction without improvement, for comparison.
pub fn route_nearest_neighbor(stops: &[Stop], params: &CostParams) -> Result<RoutePlan> {
    if stops.is_empty() {
        return Err(Error::invalid("cannot route an empty set of stops"));
    }
    let cost = CostMatrix::new(stops, params);
    let tour = nearest_neighbor(stops.len(), northwest_index(stops), &cost);
    Ok(RoutePlan::from_ordered(tour.iter().map(|&i| &stops[i]), params))
}

/// Approximate shortest open tour: nearest neighbor, 2-opt and Or-opt to a
/// local optimum, then `opts.kicks` double-bridge perturbations drawn from
/// `seed`.
pub fn route_tsp(stops: &[Stop], params: &CostParams, opts: &TourOptions, seed: u64) -> Result<RoutePlan> {
    if stops.is_empty() {
        return Err(Error::invalid("cannot route an empty set of stops"));
    }
    let cost = CostMatrix::new(stops, params);
    let mut tour = nearest_neighbor(stops.len(), northwest_index(stops), &cost);
    let mut cap_hit = local_search(&mut tour, &cost, opts.max_sweeps);
    let n = tour.len();
    if n >= 5 && opts.kicks > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best_cost = path_cost(&tour, &cost);
        for _ in 0..opts.kicks {
            let mut cand = tour.clone();
            double_bridge(&mut cand, &mut rng);
            let hit = local_search(&mut cand, &cost, opts.max_sweeps);
            let c = path_cost(&cand, &cost);
            if c < best_cost - IMPROVEMENT_EPS {
                best_cost = c;
                tour = cand;
                cap_hit = hit;
            }
        }
    }
    let mut plan = RoutePlan::from_ordered(tour.iter().map(|&i| &stops[i]), params);
    plan.sweep_cap_hit = cap_hit;
    Ok(plan)
}

/// Lower-triangular travel times over a growing stop list.
#[derive(Default)]
struct GrowingCost {
    rows: Vec<Vec<f64>>,
}

impl TravelCost for GrowingCost {
    #[inline]
    fn cost(&self, a: usize, b: usize) -> f64 {
        use std::cmp::Ordering::*;
        match a.cmp(&b) {
            Less => self.rows[b][a],
            Greater => self.rows[a][b],
            Equal => 0.0,
        }
    }
}

/// A tour grown one stop at a time: each new stop is placed by cheapest
/// insertion (or becomes the start if it lies further northwest), then
/// 2-opt moves are tried around the edges that changed.
pub struct IncrementalRoute<'a> {
    params: &'a CostParams,
    opts: TourOptions,
    stops: Vec<Stop>,
    cost: GrowingCost,
    tour: Vec<usize>,
    knock_total: f64,
    cap_hit: bool,
}

impl<'a> IncrementalRoute<'a> {
    pub fn new(params: &'a CostParams, opts: TourOptions) -> Self {
        IncrementalRoute {
            params,
            opts,
            stops: Vec::new(),
            cost: GrowingCost::default(),
            tour: Vec::new(),
            knock_total: 0.0,
            cap_hit: false,
        }
    }

    pub fn len(&self) -> usize {
        self.stops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stops.is_empty()
    }

    pub fn push(&mut self, stop: Stop) {
        let k = self.stops.len();
        let row = self
            .stops
            .iter()
            .map(|s| self.params.leg_time_between(s.location, stop.location))
            .collect();
        self.cost.rows.push(row);
        self.knock_total += self.params.knock_time(stop.units);
        let new_start = self
            .tour
            .first()
            .is_none_or(|&s| northwest_key(stop.location) > northwest_key(self.stops[s].location));
        self.stops.push(stop);
        if new_start {
            self.tour.insert(0, k);
        } else {
            let c = &self.cost;
            let last = *self.tour.last().expect("non-empty tour");
            let mut best_pos = self.tour.len();
            let mut best = c.cost(last, k);
            for p in 1..self.tour.len() {
                let (a, b) = (self.tour[p - 1], self.tour[p]);
                let delta = c.cost(a, k) + c.cost(k, b) - c.cost(a, b);
                if delta < best {
                    best = delta;
                    best_pos = p;
                }
            }
            self.tour.insert(best_pos, k);
        }
        self.cap_hit |= two_opt_local(&mut self.tour, &self.cost, k, self.opts.max_sweeps);
    }

    pub fn total_time(&self) -> f64 {
        path_cost(&self.tour, &self.cost) + self.knock_total
    }

    pub fn plan(&self) -> RoutePlan {
        let mut plan = RoutePlan::from_ordered(self.tour.iter().map(|&i| &self.stops[i]), self.params);
        plan.sweep_cap_hit = self.cap_hit;
        plan
    }
}

/// Result of a time-budgeted top-k search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub k: usize,
    pub plan: RoutePlan,
    /// Route time with `k + 1` stops, when the list was not exhausted.
    pub exceeded_time: Option<f64>,
}

/// Largest prefix of `ranked` whose incrementally built route fits in
/// `budget_hours`. The search grows the prefix one stop at a time and stops
/// at the first prefix that exceeds the budget; because route time need not
/// be monotone in `k`, a later prefix could fit again, but it is not
/// considered.
pub fn select_topk_within_time(
    ranked: &[Stop],
    budget_hours: f64,
    params: &CostParams,
    opts: &TourOptions,
) -> Result<TopK> {
    if !(budget_hours > 0.0) {
        return Err(Error::invalid(format!("time budget must be positive, got {budget_hours}")));
    }
    let mut route = IncrementalRoute::new(params, *opts);
    let mut best = RoutePlan::empty();
    for stop in ranked {
        route.push(stop.clone());
        let t = route.total_time();
        if t > budget_hours {
            return Ok(TopK {
                k: route.len() - 1,
                plan: best,
                exceeded_time: Some(t),
            });
        }
        best = route.plan();
    }
    Ok(TopK {
        k: ranked.len(),
        plan: best,
        exceeded_time: None,
    })
}

/// Length of the longest prefix whose cumulative units stay within
/// `unit_budget`.
pub fn select_within_units(ranked: &[Stop], unit_budget: u64) -> usize {
    let mut total = 0u64;
    for (i, s) in ranked.iter().enumerate() {
        total += u64::from(s.units);
        if total > unit_budget {
            return i;
        }
    }
    ranked.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stop(id: &str, lat: f64, lon: f64, units: u32) -> Stop {
        Stop {
            property_id: id.into(),
            location: GeoPoint { lat, lon },
            units,
        }
    }

    #[test]
    fn csv_and_geojson_exports() {
        let p = CostParams::default();
        let plan = RoutePlan::from_ordered(&[stop("a", 38.6, -90.2, 2), stop("b", 38.61, -90.2, 3)], &p);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("route.csv");
        plan.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("order,property_id,lat,lon"));
        let last: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(last[1], "b");
        assert!((last[7].parse::<f64>().unwrap() - plan.total_time).abs() < 1e-12);

        let g = plan.to_geojson("demo");
        let features = g["features"].as_array().unwrap();
        assert_eq!(features.len(), 3);
        assert_eq!(features[0]["geometry"]["type"], "LineString");
        assert_eq!(features[1]["geometry"]["coordinates"][0], -90.2);
        assert_eq!(features[2]["properties"]["order"], 2);
        assert_eq!(RoutePlan::from_ordered(&[stop("a", 38.6, -90.2, 2)], &p).to_geojson("x")["features"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn single_stop_is_knock_only() {
        let plan = route_tsp(&[stop("a", 38.6, -90.2, 10)], &CostParams::default(), &TourOptions::default(), 0).unwrap();
        assert!(plan.leg_times.is_empty());
        assert!((plan.total_time - 1.0).abs() < 1e-12);
        assert!(route_tsp(&[], &CostParams::default(), &TourOptions::default(), 0).is_err());
    }

    fn brute_force_best(stops: &[Stop], p: &CostParams) -> f64 {
        fn permute(rest: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
            if k == rest.len() {
                f(rest);
                return;
            }
            for i in k..rest.len() {
                rest.swap(k, i);
                permute(rest, k + 1, f);
                rest.swap(k, i);
            }
        }
        let cost = CostMatrix::new(stops, p);
        let mut best = f64::INFINITY;
        permute(&mut (0..stops.len()).collect(), 0, &mut |order| {
            best = best.min(path_cost(order, &cost));
        });
        best
    }

    #[test]
    fn collinear_points_match_brute_force() {
        let p = CostParams::default();
        // walking distance: the straight sweep is optimal
        let stops = vec![
            stop("mid", 38.60, -90.212, 2),
            stop("west", 38.60, -90.214, 2),
            stop("east", 38.60, -90.210, 2),
        ];
        let plan = route_tsp(&stops, &p, &TourOptions::default(), 0).unwrap();
        assert_eq!(plan.visit_order, ["west", "mid", "east"]);
        assert!((plan.travel_time() - brute_force_best(&stops, &p)).abs() < 1e-12);

        // ~0.54 mi spacing: skipping past the middle stop is faster by car
        let stops = vec![
            stop("mid", 38.60, -90.21, 2),
            stop("west", 38.60, -90.22, 2),
            stop("east", 38.60, -90.20, 2),
        ];
        let plan = route_tsp(&stops, &p, &TourOptions::default(), 0).unwrap();
        assert_eq!(plan.visit_order, ["west", "east", "mid"]);
        assert!((plan.travel_time() - brute_force_best(&stops, &p)).abs() < 1e-12);
    }

    #[test]
    fn route_time_sums_components() {
        let plan = RoutePlan {
            knock_times: vec![1.0],
            ..RoutePlan::default()
        };
        assert_eq!(route_time(&plan), 1.0);
        let plan = RoutePlan {
            leg_times: vec![0.125, 0.2],
            knock_times: vec![0.2, 0.3, 0.5],
            ..RoutePlan::default()
        };
        assert!((route_time(&plan) - 1.325).abs() < 1e-12);
    }

    #[test]
    fn reordering_changes_only_travel() {
        let stops = vec![
            stop("a", 38.60, -90.21, 3),
            stop("b", 38.61, -90.25, 7),
            stop("c", 38.63, -90.22, 4),
        ];
        let p = CostParams::default();
        let x = RoutePlan::from_ordered(stops.iter(), &p);
        let y = RoutePlan::from_ordered(stops.iter().rev(), &p);
        let knocks = |r: &RoutePlan| r.knock_times.iter().sum::<f64>();
        assert!((knocks(&x) - knocks(&y)).abs() < 1e-12);
        assert!(((x.total_time - y.total_time) - (x.travel_time() - y.travel_time())).abs() < 1e-12);
    }

    #[test]
    fn topk_budget_edges() {
        let p = CostParams::default();
        let opts = TourOptions::default();
        let stops = vec![stop("a", 38.6, -90.2, 2), stop("b", 38.6, -90.201, 3), stop("c", 38.6, -90.202, 4)];
        let r = select_topk_within_time(&stops, 0.05, &p, &opts).unwrap();
        assert_eq!(r.k, 0);
        assert!(r.plan.is_empty());

        let mut route = IncrementalRoute::new(&p, opts);
        for s in &stops {
            route.push(s.clone());
        }
        let exact = route.total_time();
        let r = select_topk_within_time(&stops, exact, &p, &opts).unwrap();
        assert_eq!(r.k, 3);
        assert_eq!(r.exceeded_time, None);
        assert!(select_topk_within_time(&stops, 0.0, &p, &opts).is_err());
    }

    #[test]
    fn unit_prefix() {
        let s = |u| stop("x", 0.0, 0.0, u);
        assert_eq!(select_within_units(&[s(50), s(60)], 100), 1);
        assert_eq!(select_within_units(&[s(50), s(60)], 1000), 2);
        assert_eq!(select_within_units(&[s(40), s(40), s(40)], 120), 3);
        assert_eq!(select_within_units(&[s(140)], 120), 0);
    }

    #[test]
    fn incremental_start_stays_northwest() {
        let p = CostParams::default();
        let mut route = IncrementalRoute::new(&p, TourOptions::default());
        route.push(stop("se", 38.60, -90.20, 2));
        route.push(stop("nw", 38.62, -90.23, 2));
        route.push(stop("mid", 38.61, -90.21, 2));
        assert_eq!(route.plan().visit_order[0], "nw");
        assert!((route.plan().total_time - route.total_time()).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn stops(max: usize) -> impl Strategy<Value = Vec<Stop>> {
            prop::collection::vec((38.55..38.70f64, -90.35..-90.15f64, 2u32..40), 1..max).prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(i, (lat, lon, u))| stop(&format!("s{i}"), lat, lon, u))
                    .collect()
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn two_opt_improves_on_nearest_neighbor(s in stops(40)) {
                let p = CostParams::default();
                let nn = route_nearest_neighbor(&s, &p).unwrap();
                let tsp = route_tsp(&s, &p, &TourOptions::default(), 0).unwrap();
                prop_assert!(tsp.travel_time() <= nn.travel_time() + 1e-12);
                prop_assert!((tsp.total_time - route_time(&tsp)).abs() < 1e-9);
                let mut ids = tsp.visit_order.clone();
                ids.sort();
                ids.dedup();
                prop_assert_eq!(ids.len(), s.len());
                let again = route_tsp(&s, &p, &TourOptions::default(), 0).unwrap();
                prop_assert_eq!(again.visit_order, tsp.visit_order);
            }

            #[test]
            fn topk_respects_budget(s in stops(30), budget in 0.5..20.0f64) {
                let p = CostParams::default();
                let r = select_topk_within_time(&s, budget, &p, &TourOptions::default()).unwrap();
                prop_assert!(r.plan.total_time <= budget);
                prop_assert_eq!(r.plan.total_properties, r.k);
                if let Some(t) = r.exceeded_time {
                    prop_assert!(t > budget);
                }
                let knock: f64 = s[..r.k].iter().map(|x| p.knock_time(x.units)).sum();
                prop_assert!((r.plan.knock_times.iter().sum::<f64>() - knock).abs() < 1e-9);
            }

            #[test]
            fn unit_prefix_is_maximal(units in prop::collection::vec(1u32..100, 0..30), budget in 1u64..1500) {
                let s: Vec<Stop> = units.iter().map(|&u| stop("x", 0.0, 0.0, u)).collect();
                let k = select_within_units(&s, budget);
                let used: u64 = units[..k].iter().map(|&u| u64::from(u)).sum();
                prop_assert!(used <= budget);
                if k < units.len() {
                    prop_assert!(used + u64::from(units[k]) > budget);
                }
            }
        }
    }
}
