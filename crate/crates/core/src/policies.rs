//! Outreach policies under a shared time or unit budget, and their
//! evaluation against held-out filings.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{EvictionFiling, FeatureSet, PeriodWindow, PropertyRecord};
use crate::error::{Error, Result};
use crate::geo::CostParams;
use crate::metrics::{discovery_rate, format_percent, lift};
use crate::risk::{RiskGroup, RiskThresholds};
use crate::routing::{route_tsp, select_topk_within_time, select_within_units, RoutePlan, Stop, TourOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    NeoTO,
    RsEvictionOnly,
    RsEvictionNeighborhood,
    PriorEvictionCount,
    NeighborhoodCanvass,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::NeoTO => "NEO-T-O",
            PolicyKind::RsEvictionOnly => "RS-E",
            PolicyKind::RsEvictionNeighborhood => "RS-EN",
            PolicyKind::PriorEvictionCount => "Previous Eviction Count",
            PolicyKind::NeighborhoodCanvass => "Neighborhood Based",
        }
    }

    /// Feature set whose scores drive a score-based policy.
    pub fn feature_set(self) -> Option<FeatureSet> {
        match self {
            PolicyKind::NeoTO => Some(FeatureSet::ENO),
            PolicyKind::RsEvictionOnly => Some(FeatureSet::E),
            PolicyKind::RsEvictionNeighborhood => Some(FeatureSet::EN),
            PolicyKind::PriorEvictionCount | PolicyKind::NeighborhoodCanvass => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Time,
    Units,
}

impl fmt::Display for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Control::Time => "Time",
            Control::Units => "Unit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Budget dimension. NEO-T-O sets the budgets and reports `time`.
    pub control: Control,
}

impl PolicySpec {
    pub const fn new(kind: PolicyKind, control: Control) -> Self {
        PolicySpec { kind, control }
    }

    /// The seven comparison rows in report order.
    pub fn standard() -> Vec<PolicySpec> {
        use Control::*;
        use PolicyKind::*;
        vec![
            PolicySpec::new(NeoTO, Time),
            PolicySpec::new(RsEvictionOnly, Time),
            PolicySpec::new(RsEvictionNeighborhood, Time),
            PolicySpec::new(PriorEvictionCount, Time),
            PolicySpec::new(PriorEvictionCount, Units),
            PolicySpec::new(NeighborhoodCanvass, Time),
            PolicySpec::new(NeighborhoodCanvass, Units),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.control) {
            (PolicyKind::NeoTO | PolicyKind::RsEvictionOnly | PolicyKind::RsEvictionNeighborhood, Control::Units) => {
                Err(Error::Config(format!("{} is time-controlled only", self.kind.label())))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Hours(f64),
    Units(u64),
}

impl Budget {
    fn control(self) -> Control {
        match self {
            Budget::Hours(_) => Control::Time,
            Budget::Units(_) => Control::Units,
        }
    }
}

/// A route chosen by a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPlan {
    pub plan: RoutePlan,
    pub budget: Option<Budget>,
    /// Cost (hours or units, matching the budget) of the selection extended
    /// by the next ranked candidate; `None` when no candidate remained.
    pub next_cost: Option<f64>,
    pub warnings: Vec<String>,
}

/// Shared planning inputs.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub properties: &'a [PropertyRecord],
    pub params: &'a CostParams,
    pub tour: TourOptions,
    pub thresholds: RiskThresholds,
    pub seed: u64,
}

fn stop_of(p: &PropertyRecord) -> Stop {
    Stop {
        property_id: p.property_id.clone(),
        location: p.location,
        units: p.units,
    }
}

fn covered_scores(ctx: &PlanContext<'_>, scores: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    ctx.properties
        .iter()
        .map(|p| {
            scores
                .get(&p.property_id)
                .copied()
                .ok_or_else(|| Error::invalid(format!("no score for property {}", p.property_id)))
        })
        .collect()
}

/// Routes every property binned Medium or High.
pub fn plan_neo_t_o(ctx: &PlanContext<'_>, scores: &BTreeMap<String, f64>) -> Result<PolicyPlan> {
    ctx.thresholds.validate()?;
    let s = covered_scores(ctx, scores)?;
    let mut targets = Vec::new();
    for (p, &score) in ctx.properties.iter().zip(&s) {
        if ctx.thresholds.bin(score)? >= RiskGroup::Medium {
            targets.push(stop_of(p));
        }
    }
    if targets.is_empty() {
        return Err(Error::invalid("no property scores in the Medium or High risk groups"));
    }
    targets.sort_by(|a, b| a.property_id.cmp(&b.property_id));
    Ok(PolicyPlan {
        plan: route_tsp(&targets, ctx.params, &ctx.tour, ctx.seed)?,
        budget: None,
        next_cost: None,
        warnings: Vec::new(),
    })
}

fn select_ranked(ctx: &PlanContext<'_>, ranked: &[Stop], budget: Budget) -> Result<PolicyPlan> {
    match budget {
        Budget::Hours(h) => {
            let top = select_topk_within_time(ranked, h, ctx.params, &ctx.tour)?;
            Ok(PolicyPlan {
                plan: top.plan,
                budget: Some(budget),
                next_cost: top.exceeded_time,
                warnings: Vec::new(),
            })
        }
        Budget::Units(u) => {
            let k = select_within_units(ranked, u);
            let plan = if k == 0 {
                RoutePlan::empty()
            } else {
                route_tsp(&ranked[..k], ctx.params, &ctx.tour, ctx.seed)?
            };
            Ok(PolicyPlan {
                next_cost: ranked.get(k).map(|s| (plan.total_units + u64::from(s.units)) as f64),
                plan,
                budget: Some(budget),
                warnings: Vec::new(),
            })
        }
    }
}

/// Visits the highest-scoring properties (ties by id) that fit the time budget.
pub fn plan_rs_budgeted(ctx: &PlanContext<'_>, scores: &BTreeMap<String, f64>, budget_hours: f64) -> Result<PolicyPlan> {
    let s = covered_scores(ctx, scores)?;
    let mut order: Vec<usize> = (0..ctx.properties.len()).collect();
    order.sort_by(|&a, &b| {
        s[b].total_cmp(&s[a])
            .then_with(|| ctx.properties[a].property_id.cmp(&ctx.properties[b].property_id))
    });
    let ranked: Vec<Stop> = order.iter().map(|&i| stop_of(&ctx.properties[i])).collect();
    select_ranked(ctx, &ranked, Budget::Hours(budget_hours))
}

fn filing_counts<'f>(filings: &'f [EvictionFiling], window: &PeriodWindow) -> HashMap<&'f str, usize> {
    let mut counts = HashMap::new();
    for f in filings.iter().filter(|f| window.contains(f.filing_date)) {
        *counts.entry(f.property_id.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Ranks properties with at least one filing in `prior_window` by count,
/// then units (descending), then id.
pub fn plan_prior_count(
    ctx: &PlanContext<'_>,
    filings: &[EvictionFiling],
    prior_window: &PeriodWindow,
    budget: Budget,
) -> Result<PolicyPlan> {
    let counts = filing_counts(filings, prior_window);
    let mut ranked: Vec<(&PropertyRecord, usize)> = ctx
        .properties
        .iter()
        .filter_map(|p| counts.get(p.property_id.as_str()).map(|&c| (p, c)))
        .collect();
    if ranked.is_empty() {
        return Ok(PolicyPlan {
            plan: RoutePlan::empty(),
            budget: Some(budget),
            next_cost: None,
            warnings: vec![format!("no property has a filing in {prior_window}")],
        });
    }
    ranked.sort_by(|(a, ca), (b, cb)| {
        cb.cmp(ca)
            .then(b.units.cmp(&a.units))
            .then_with(|| a.property_id.cmp(&b.property_id))
    });
    let stops: Vec<Stop> = ranked.iter().map(|(p, _)| stop_of(p)).collect();
    select_ranked(ctx, &stops, budget)
}

/// Block groups ranked by prior-window filings (ties by id) with their
/// member properties.
pub fn rank_block_groups<'p>(
    properties: &'p [PropertyRecord],
    filings: &[EvictionFiling],
    prior_window: &PeriodWindow,
) -> Vec<(&'p str, usize, Vec<&'p PropertyRecord>)> {
    let counts = filing_counts(filings, prior_window);
    let mut groups: BTreeMap<&str, (usize, Vec<&PropertyRecord>)> = BTreeMap::new();
    for p in properties {
        let g = groups.entry(p.block_group_id.as_str()).or_default();
        g.0 += counts.get(p.property_id.as_str()).copied().unwrap_or(0);
        g.1.push(p);
    }
    let mut ranked: Vec<_> = groups.into_iter().map(|(id, (c, ps))| (id, c, ps)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked
}

/// Canvasses whole block groups in ranked order, each along its own tour,
/// and stops at the first property that would break the budget.
pub fn plan_neighborhood(
    ctx: &PlanContext<'_>,
    filings: &[EvictionFiling],
    prior_window: &PeriodWindow,
    budget: Budget,
) -> Result<PolicyPlan> {
    let mut visits: Vec<Stop> = Vec::new();
    let mut hours = 0.0;
    let mut units = 0u64;
    let mut next_cost = None;
    'groups: for (_, _, members) in rank_block_groups(ctx.properties, filings, prior_window) {
        let stops: Vec<Stop> = members.iter().map(|p| stop_of(p)).collect();
        let tour = route_tsp(&stops, ctx.params, &ctx.tour, ctx.seed)?;
        for (id, (&loc, &u)) in tour.visit_order.iter().zip(tour.locations.iter().zip(&tour.units)) {
            let leg = visits.last().map_or(0.0, |prev| ctx.params.leg_time_between(prev.location, loc));
            let (h, n) = (hours + leg + ctx.params.knock_time(u), units + u64::from(u));
            let over = match budget {
                Budget::Hours(b) => (h > b).then_some(h),
                Budget::Units(b) => (n > b).then_some(n as f64),
            };
            if let Some(c) = over {
                next_cost = Some(c);
                break 'groups;
            }
            hours = h;
            units = n;
            visits.push(Stop {
                property_id: id.clone(),
                location: loc,
                units: u,
            });
        }
    }
    Ok(PolicyPlan {
        plan: RoutePlan::from_ordered(&visits, ctx.params),
        budget: Some(budget),
        next_cost,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    /// Visited properties with at least one filing in the test window.
    pub evictions_discovered: u64,
    /// Test-window filings at visited properties.
    pub filings_discovered: u64,
    pub properties_visited: u64,
    pub units_visited: u64,
    pub outreach_hours: f64,
    pub normalized_time: f64,
    /// Zero for an empty plan, see `empty`.
    pub discovery_rate: f64,
    pub empty: bool,
}

/// Scores a plan against test-window filings. `reference_hours` is the
/// NEO-T-O outreach time used for normalization.
pub fn evaluate_policy(
    plan: &RoutePlan,
    test_filings: &[EvictionFiling],
    test_window: &PeriodWindow,
    reference_hours: f64,
) -> PolicyOutcome {
    let visited: HashSet<&str> = plan.visit_order.iter().map(String::as_str).collect();
    let mut hit: HashSet<&str> = HashSet::new();
    let mut filings = 0u64;
    for f in test_filings {
        if test_window.contains(f.filing_date) && visited.contains(f.property_id.as_str()) {
            hit.insert(f.property_id.as_str());
            filings += 1;
        }
    }
    let discovered = hit.len() as u64;
    let properties = visited.len() as u64;
    PolicyOutcome {
        evictions_discovered: discovered,
        filings_discovered: filings,
        properties_visited: properties,
        units_visited: plan.total_units,
        outreach_hours: plan.total_time,
        normalized_time: if reference_hours > 0.0 { plan.total_time / reference_hours } else { 0.0 },
        discovery_rate: discovery_rate(discovered, properties).unwrap_or(0.0),
        empty: properties == 0,
    }
}

/// Inputs for a policy comparison.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonInputs<'a> {
    pub scores: &'a BTreeMap<FeatureSet, BTreeMap<String, f64>>,
    pub filings: &'a [EvictionFiling],
    pub prior_window: &'a PeriodWindow,
    pub test_window: &'a PeriodWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub spec: PolicySpec,
    pub outcome: PolicyOutcome,
    /// NEO-T-O evictions discovered relative to this row; absent for the
    /// NEO-T-O row and for rows that discovered nothing.
    pub neo_lift: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub budget_hours: f64,
    pub budget_units: u64,
    pub rows: Vec<ComparisonRow>,
    #[serde(skip)]
    pub plans: Vec<PolicyPlan>,
}

impl ComparisonReport {
    pub fn row(&self, spec: PolicySpec) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.spec == spec)
    }

    pub fn plan(&self, spec: PolicySpec) -> Option<&PolicyPlan> {
        self.rows.iter().position(|r| r.spec == spec).map(|i| &self.plans[i])
    }
}

fn scores_for<'a>(inputs: &ComparisonInputs<'a>, set: FeatureSet) -> Result<&'a BTreeMap<String, f64>> {
    inputs
        .scores
        .get(&set)
        .ok_or_else(|| Error::invalid(format!("no {set} scores supplied")))
}

/// Plans and evaluates every spec. NEO-T-O always runs first and sets the
/// budgets; it is reported only if listed in `specs`.
pub fn compare_policies(ctx: &PlanContext<'_>, specs: &[PolicySpec], inputs: &ComparisonInputs<'_>) -> Result<ComparisonReport> {
    for s in specs {
        s.validate()?;
    }
    let neo = plan_neo_t_o(ctx, scores_for(inputs, FeatureSet::ENO)?)?;
    let hours = neo.plan.total_time;
    let units = neo.plan.total_units;
    let plans = specs
        .par_iter()
        .map(|spec| {
            let budget = match spec.control {
                Control::Time => Budget::Hours(hours),
                Control::Units => Budget::Units(units),
            };
            match spec.kind {
                PolicyKind::NeoTO => Ok(neo.clone()),
                PolicyKind::RsEvictionOnly | PolicyKind::RsEvictionNeighborhood => {
                    let set = spec.kind.feature_set().expect("score-based policy");
                    plan_rs_budgeted(ctx, scores_for(inputs, set)?, hours)
                }
                PolicyKind::PriorEvictionCount => plan_prior_count(ctx, inputs.filings, inputs.prior_window, budget),
                PolicyKind::NeighborhoodCanvass => plan_neighborhood(ctx, inputs.filings, inputs.prior_window, budget),
            }
        })
        .collect::<Result<Vec<PolicyPlan>>>()?;

    let neo_outcome = evaluate_policy(&neo.plan, inputs.filings, inputs.test_window, hours);
    let rows = specs
        .iter()
        .zip(&plans)
        .map(|(spec, p)| {
            debug_assert_eq!(p.budget.map_or(Control::Time, Budget::control), spec.control);
            let outcome = evaluate_policy(&p.plan, inputs.filings, inputs.test_window, hours);
            let neo_lift = (spec.kind != PolicyKind::NeoTO)
                .then(|| lift(neo_outcome.evictions_discovered as f64, outcome.evictions_discovered as f64).ok())
                .flatten();
            ComparisonRow {
                policy: spec.kind.label().to_string(),
                spec: *spec,
                outcome,
                neo_lift,
                warnings: p.warnings.clone(),
            }
        })
        .collect();
    Ok(ComparisonReport {
        budget_hours: hours,
        budget_units: units,
        rows,
        plans,
    })
}

fn thousands(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn signed_percent(f: f64) -> String {
    let p = format_percent(f);
    if p.starts_with('-') { p } else { format!("+{p}") }
}

/// Aligned plain-text rendering of a comparison.
pub fn render_table(report: &ComparisonReport) -> String {
    let header = [
        "Routing Policy",
        "Control",
        "Normalized Time",
        "Evictions Discovered",
        "Properties Visited",
        "Units Visited",
        "Discovery Rate",
        "NEO-T-O Lift",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
    for r in &report.rows {
        let o = &r.outcome;
        cells.push(vec![
            r.policy.clone(),
            r.spec.control.to_string(),
            format!("{:.2}", o.normalized_time),
            thousands(o.evictions_discovered),
            thousands(o.properties_visited),
            thousands(o.units_visited),
            if o.empty { "n/a".into() } else { format_percent(o.discovery_rate) },
            r.neo_lift.map_or_else(|| "-".into(), signed_percent),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|j| cells.iter().map(|row| row[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in cells.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, c)| if j == 0 { format!("{c:<w$}", w = widths[j]) } else { format!("{c:>w$}", w = widths[j]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        }
    }
    let _ = writeln!(
        out,
        "\nbudget: {:.2} h, {} units",
        report.budget_hours,
        thousands(report.budget_units)
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{WindowRole, YearMonth};
    use crate::geo::GeoPoint;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn prop(id: &str, lat: f64, lon: f64, units: u32, bg: &str) -> PropertyRecord {
        PropertyRecord {
            property_id: id.into(),
            location: GeoPoint { lat, lon },
            units,
            owner_id: format!("o-{id}"),
            block_id: format!("{bg}-b"),
            block_group_id: bg.into(),
            is_rental: true,
        }
    }

    fn filing(n: usize, id: &str, date: &str) -> EvictionFiling {
        EvictionFiling {
            case_id: format!("c{n}"),
            property_id: id.into(),
            filing_date: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
            attorney_id: None,
        }
    }

    fn window(start: &str, months: u32) -> PeriodWindow {
        PeriodWindow::spanning(start.parse::<YearMonth>().unwrap(), months, WindowRole::Label).unwrap()
    }

    fn ctx<'a>(properties: &'a [PropertyRecord], params: &'a CostParams) -> PlanContext<'a> {
        PlanContext {
            properties,
            params,
            tour: TourOptions::default(),
            thresholds: RiskThresholds::default(),
            seed: 7,
        }
    }

    fn grid(n: usize) -> Vec<PropertyRecord> {
        (0..n)
            .map(|i| {
                prop(
                    &format!("p{i:03}"),
                    38.6 + 0.001 * (i % 7) as f64,
                    -90.2 + 0.001 * (i / 7) as f64,
                    1 + (i % 5) as u32,
                    &format!("g{}", i % 3),
                )
            })
            .collect()
    }

    fn score_map(ps: &[PropertyRecord], s: &[f64]) -> BTreeMap<String, f64> {
        ps.iter().zip(s).map(|(p, &v)| (p.property_id.clone(), v)).collect()
    }

    #[test]
    fn neo_without_medium_scores_is_an_error() {
        let ps = grid(5);
        let params = CostParams::default();
        let err = plan_neo_t_o(&ctx(&ps, &params), &score_map(&ps, &[0.1, 0.2, 0.0, 0.05, 0.19])).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn neo_single_high_property() {
        let ps = grid(4);
        let params = CostParams::default();
        let plan = plan_neo_t_o(&ctx(&ps, &params), &score_map(&ps, &[0.01, 0.9, 0.1, 0.2])).unwrap();
        assert_eq!(plan.plan.visit_order, vec!["p001".to_string()]);
        assert!((plan.plan.total_time - params.knock_time(ps[1].units)).abs() < 1e-12);
    }

    #[test]
    fn missing_score_is_rejected() {
        let ps = grid(3);
        let params = CostParams::default();
        let s = score_map(&ps[..2], &[0.9, 0.9]);
        assert!(plan_neo_t_o(&ctx(&ps, &params), &s).is_err());
        assert!(plan_rs_budgeted(&ctx(&ps, &params), &s, 10.0).is_err());
    }

    #[test]
    fn rs_breaks_score_ties_by_id() {
        let ps: Vec<_> = ["d", "b", "c", "a"].iter().map(|id| prop(id, 38.6, -90.2, 1, "g")).collect();
        let params = CostParams::default();
        let s = score_map(&ps, &[0.5; 4]);
        let plan = plan_rs_budgeted(&ctx(&ps, &params), &s, 0.25).unwrap();
        let mut got = plan.plan.visit_order.clone();
        got.sort();
        assert_eq!(got, vec!["a".to_string(), "b".to_string()]);
        assert!(plan.next_cost.unwrap() > 0.25);
    }

    #[test]
    fn rs_takes_highest_scores_first() {
        let ps = grid(6);
        let params = CostParams::default();
        let s = score_map(&ps, &[0.1, 0.7, 0.3, 0.9, 0.2, 0.6]);
        let budget = params.knock_time(ps[3].units)
            + params.knock_time(ps[1].units)
            + params.leg_time_between(ps[1].location, ps[3].location)
            + 1e-9;
        let plan = plan_rs_budgeted(&ctx(&ps, &params), &s, budget).unwrap();
        let mut got = plan.plan.visit_order.clone();
        got.sort();
        assert_eq!(got, vec!["p001".to_string(), "p003".to_string()]);
        assert!(plan.plan.total_time <= budget);
    }

    #[test]
    fn prior_count_ranks_by_count_and_skips_non_filers() {
        let ps = vec![
            prop("A", 38.60, -90.20, 2, "g"),
            prop("B", 38.61, -90.20, 2, "g"),
            prop("C", 38.62, -90.20, 2, "g"),
        ];
        let filings = vec![
            filing(0, "A", "2021-08-03"),
            filing(1, "A", "2021-09-03"),
            filing(2, "A", "2021-10-03"),
            filing(3, "B", "2021-09-10"),
            filing(4, "C", "2021-06-10"),
        ];
        let params = CostParams::default();
        let prior = window("2021-08", 3);
        let all = plan_prior_count(&ctx(&ps, &params), &filings, &prior, Budget::Units(100)).unwrap();
        let mut got = all.plan.visit_order.clone();
        got.sort();
        assert_eq!(got, vec!["A".to_string(), "B".to_string()]);
        assert_eq!(all.next_cost, None);

        let one = plan_prior_count(&ctx(&ps, &params), &filings, &prior, Budget::Units(3)).unwrap();
        assert_eq!(one.plan.visit_order, vec!["A".to_string()]);
        assert_eq!(one.next_cost, Some(4.0));
    }

    #[test]
    fn prior_count_breaks_count_ties_by_units_then_id() {
        let ps = vec![
            prop("a", 38.60, -90.20, 3, "g"),
            prop("b", 38.60, -90.21, 9, "g"),
            prop("c", 38.60, -90.22, 3, "g"),
        ];
        let filings = vec![filing(0, "a", "2021-08-03"), filing(1, "b", "2021-08-03"), filing(2, "c", "2021-08-03")];
        let params = CostParams::default();
        let prior = window("2021-08", 3);
        let plan = plan_prior_count(&ctx(&ps, &params), &filings, &prior, Budget::Units(12)).unwrap();
        let mut got = plan.plan.visit_order.clone();
        got.sort();
        assert_eq!(got, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn prior_count_without_filers_warns() {
        let ps = grid(3);
        let params = CostParams::default();
        let plan = plan_prior_count(&ctx(&ps, &params), &[], &window("2021-08", 3), Budget::Hours(5.0)).unwrap();
        assert!(plan.plan.is_empty());
        assert_eq!(plan.warnings.len(), 1);
        let o = evaluate_policy(&plan.plan, &[], &window("2021-11", 3), 5.0);
        assert!(o.empty);
        assert_eq!(o.discovery_rate, 0.0);
    }

    #[test]
    fn neighborhood_canvasses_top_group_then_cuts_the_next() {
        let ps = vec![
            prop("x1", 38.600, -90.200, 1, "g2"),
            prop("x2", 38.601, -90.200, 1, "g2"),
            prop("y1", 38.700, -90.300, 1, "g1"),
            prop("y2", 38.701, -90.300, 1, "g1"),
            prop("y3", 38.702, -90.300, 1, "g1"),
        ];
        let filings = vec![filing(0, "x1", "2021-08-05"), filing(1, "x2", "2021-09-05"), filing(2, "y1", "2021-08-20")];
        let params = CostParams::default();
        let prior = window("2021-08", 3);
        let ranked = rank_block_groups(&ps, &filings, &prior);
        assert_eq!(ranked.iter().map(|g| g.0).collect::<Vec<_>>(), vec!["g2", "g1"]);

        let plan = plan_neighborhood(&ctx(&ps, &params), &filings, &prior, Budget::Units(3)).unwrap();
        assert_eq!(plan.plan.total_units, 3);
        assert_eq!(plan.plan.visit_order[..2].iter().filter(|id| id.starts_with('x')).count(), 2);
        assert!(plan.plan.visit_order[2].starts_with('y'));
        assert_eq!(plan.next_cost, Some(4.0));

        let leg = params.leg_time_between(ps[0].location, ps[1].location);
        let tight = 2.0 * params.knock_time(1) + leg + 1e-9;
        let plan = plan_neighborhood(&ctx(&ps, &params), &filings, &prior, Budget::Hours(tight)).unwrap();
        assert_eq!(plan.plan.total_properties, 2);
        assert!(plan.next_cost.unwrap() > tight);
    }

    #[test]
    fn tied_groups_rank_by_id() {
        let ps = vec![prop("a", 38.6, -90.2, 1, "gB"), prop("b", 38.6, -90.3, 1, "gA")];
        let ranked = rank_block_groups(&ps, &[], &window("2021-08", 3));
        assert_eq!(ranked.iter().map(|g| g.0).collect::<Vec<_>>(), vec!["gA", "gB"]);
    }

    #[test]
    fn score_policies_reject_unit_control() {
        assert!(PolicySpec::new(PolicyKind::RsEvictionOnly, Control::Units).validate().is_err());
        assert!(PolicySpec::standard().iter().all(|s| s.validate().is_ok()));
        assert_eq!(PolicySpec::standard().len(), 7);
    }

    #[test]
    fn lift_formatting_matches_table() {
        assert_eq!(signed_percent(lift(936.0, 863.0).unwrap()), "+8.5%");
        assert_eq!(signed_percent(lift(936.0, 731.0).unwrap()), "+28.0%");
        assert_eq!(signed_percent(lift(90.0, 100.0).unwrap()), "-10.0%");
        assert_eq!(thousands(1234567), "1,234,567");
        assert_eq!(thousands(999), "999");
    }

    #[test]
    fn comparison_shares_the_neo_budget() {
        let ps = grid(30);
        let params = CostParams::default();
        let s: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).fract()).collect();
        let mut scores = BTreeMap::new();
        for set in [FeatureSet::E, FeatureSet::EN, FeatureSet::ENO] {
            scores.insert(set, score_map(&ps, &s));
        }
        let filings: Vec<_> = (0..30)
            .step_by(4)
            .flat_map(|i| [filing(i, &ps[i].property_id, "2021-09-01"), filing(100 + i, &ps[(i + 1) % 30].property_id, "2021-12-01")])
            .collect();
        let prior = window("2021-08", 3);
        let test = window("2021-11", 3);
        let inputs = ComparisonInputs {
            scores: &scores,
            filings: &filings,
            prior_window: &prior,
            test_window: &test,
        };
        let report = compare_policies(&ctx(&ps, &params), &PolicySpec::standard(), &inputs).unwrap();
        assert_eq!(report.rows.len(), 7);
        let neo = &report.rows[0];
        assert_eq!(neo.outcome.properties_visited as usize, s.iter().filter(|&&v| v > 0.2).count());
        assert!((neo.outcome.normalized_time - 1.0).abs() < 1e-12);
        for r in &report.rows {
            match r.spec.control {
                Control::Time => assert!(r.outcome.outreach_hours <= report.budget_hours + 1e-9),
                Control::Units => assert!(r.outcome.units_visited <= report.budget_units),
            }
        }
        let text = render_table(&report);
        assert!(text.starts_with("Routing Policy"));
        assert_eq!(text.lines().filter(|l| l.starts_with("Previous Eviction Count")).count(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn neo_visits_exactly_the_medium_and_high(scores in prop::collection::vec(0.0f64..=1.0, 1..25)) {
            prop_assume!(scores.iter().any(|&s| s > 0.2));
            let ps = grid(scores.len());
            let params = CostParams::default();
            let plan = plan_neo_t_o(&ctx(&ps, &params), &score_map(&ps, &scores)).unwrap();
            let mut want: Vec<String> = ps.iter().zip(&scores).filter(|(_, &s)| s > 0.2).map(|(p, _)| p.property_id.clone()).collect();
            let mut got = plan.plan.visit_order.clone();
            want.sort();
            got.sort();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn neo_depends_only_on_bins(scores in prop::collection::vec(0.0f64..=1.0, 1..20), jitter in prop::collection::vec(0.0f64..1.0, 20)) {
            prop_assume!(scores.iter().any(|&s| s > 0.2));
            let t = RiskThresholds::default();
            let edges = [0.0, 0.05, 0.2, 0.8, 1.0];
            let moved: Vec<f64> = scores
                .iter()
                .zip(&jitter)
                .map(|(&s, &j)| {
                    let g = t.bin(s).unwrap() as usize;
                    let (lo, hi) = (edges[g], edges[g + 1]);
                    let v = lo + (hi - lo) * j;
                    if v <= lo && g > 0 { hi } else { v }
                })
                .collect();
            for (a, b) in scores.iter().zip(&moved) {
                prop_assert_eq!(t.bin(*a).unwrap(), t.bin(*b).unwrap());
            }
            let ps = grid(scores.len());
            let params = CostParams::default();
            let a = plan_neo_t_o(&ctx(&ps, &params), &score_map(&ps, &scores)).unwrap();
            let b = plan_neo_t_o(&ctx(&ps, &params), &score_map(&ps, &moved)).unwrap();
            prop_assert_eq!(a.plan, b.plan);
        }

        #[test]
        fn evaluation_matches_a_recount(
            visit in prop::collection::vec(any::<bool>(), 12),
            raw in prop::collection::vec((0usize..12, 0u32..8), 0..40),
        ) {
            let ps = grid(12);
            let params = CostParams::default();
            let stops: Vec<Stop> = ps.iter().zip(&visit).filter(|(_, &v)| v).map(|(p, _)| stop_of(p)).collect();
            let plan = RoutePlan::from_ordered(&stops, &params);
            let filings: Vec<EvictionFiling> = raw
                .iter()
                .enumerate()
                .map(|(n, &(i, m))| {
                    let ym: YearMonth = "2021-09".parse::<YearMonth>().unwrap().offset(i64::from(m));
                    filing(n, &ps[i].property_id, &ym.first_day().to_string())
                })
                .collect();
            let test = window("2021-11", 3);
            let o = evaluate_policy(&plan, &filings, &test, 10.0);

            let mut hit = 0;
            let mut count = 0;
            for (i, p) in ps.iter().enumerate() {
                if !visit[i] {
                    continue;
                }
                let n = filings.iter().filter(|f| f.property_id == p.property_id && test.contains(f.filing_date)).count();
                count += n;
                hit += usize::from(n > 0);
            }
            prop_assert_eq!(o.evictions_discovered as usize, hit);
            prop_assert_eq!(o.filings_discovered as usize, count);
            prop_assert_eq!(o.properties_visited as usize, stops.len());
            prop_assert_eq!(o.empty, stops.is_empty());
            if !stops.is_empty() {
                prop_assert!((o.discovery_rate - hit as f64 / stops.len() as f64).abs() < 1e-15);
            }
        }
    }
}
