//! Multi-day bidding plan over a scenario fan, solved as one LP.
//!
//! First-stage variables fix a target rule for end-of-day reservoir
//! levels: a plain vector for the first day (its features are already
//! known when the plan is made) and an affine map from inflow and price
//! features for every later day. Second-stage variables replay hourly
//! bids and flows per scenario under that rule, with revenue averaged at
//! equal weights. The duals of the rows chaining day 1 into day 2 price
//! stored water at the first day boundary; they feed the day-ahead
//! trader as water values.

use std::time::Instant;

use thiserror::Error;

use crate::cascade::{Cascade, Ratings};
use crate::lpcore::{ConId, LinearProgram, LpError, LpStatus, Sense, VarId};
use crate::trader::{CollectiveBids, Flows};

/// Rule coefficients live in a generous box instead of being fully free.
/// With few scenarios the fit is underdetermined, and unboxed coefficients
/// drift along mutually cancelling directions that wreck the solver's
/// conditioning; the box pulls those directions back to zero without
/// touching any optimum whose gains are of sane magnitude (targets and
/// features are both normalized to order one, so a gain of a hundred is
/// already an extreme policy).
const GAIN_BOX: f64 = 1e2;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no scenarios supplied")]
    EmptyScenarios,
    #[error("plan infeasible from day {day}")]
    Infeasible { day: usize },
    #[error("planner LP unbounded")]
    Unbounded,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Per-day affine rule mapping daily features to end-of-day target
/// levels, all in natural units (m3, EUR/MWh).
///
/// Entry 0 is the first planning day and holds the collapsed constant
/// rule: its gain entries are zero and `intercept[0]` is the target
/// itself. Sink rows and columns are zero throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePolicy {
    /// Base target per day and reservoir [m3].
    pub intercept: Vec<Vec<f64>>,
    /// Gain on the same-day inflow sum of each reservoir.
    pub day_inflow: Vec<Vec<Vec<f64>>>,
    /// Gain on the inflows accumulated over all prior days.
    pub cum_inflow: Vec<Vec<Vec<f64>>>,
    /// Gain on the day-average spot price [m3 per EUR/MWh].
    pub spot_price: Vec<Vec<f64>>,
}

impl AffinePolicy {
    pub fn days(&self) -> usize {
        self.intercept.len()
    }

    pub fn num_reservoirs(&self) -> usize {
        self.intercept.first().map_or(0, Vec::len)
    }
}

/// Applies the day-`day` rule to the given features: same-day inflow sum
/// per reservoir [m3], inflows accumulated over all earlier days [m3],
/// and the day-average spot price. Returns raw targets without clipping;
/// bounds are the planner LP's business.
pub fn evaluate_policy(
    policy: &AffinePolicy,
    day: usize,
    day_inflow: &[f64],
    cum_inflow: &[f64],
    avg_spot: f64,
) -> Result<Vec<f64>, PlannerError> {
    if day >= policy.days() {
        return Err(PlannerError::Dimension(format!(
            "day {day} outside the {}-day rule",
            policy.days()
        )));
    }
    let r = policy.num_reservoirs();
    if day_inflow.len() != r || cum_inflow.len() != r {
        return Err(PlannerError::Dimension(format!(
            "features must have {r} entries, got {} and {}",
            day_inflow.len(),
            cum_inflow.len()
        )));
    }
    Ok((0..r)
        .map(|i| {
            let mut w = policy.intercept[day][i] + policy.spot_price[day][i] * avg_spot;
            for j in 0..r {
                w += policy.day_inflow[day][i][j] * day_inflow[j]
                    + policy.cum_inflow[day][i][j] * cum_inflow[j];
            }
            w
        })
        .collect())
}

/// One sampled price/inflow path over the whole planning horizon.
#[derive(Debug, Clone)]
pub struct PlannerScenario {
    /// Spot price per hour [EUR/MWh].
    pub spot: Vec<f64>,
    /// Inflow per hour and reservoir [m3/h].
    pub inflows: Vec<Vec<f64>>,
}

pub struct PlannerInput<'a> {
    pub cascade: &'a Cascade,
    /// Ratings covering all `days * hours_per_day` hours.
    pub ratings: &'a Ratings,
    pub days: usize,
    pub hours_per_day: usize,
    /// Offset into the bound profiles for hour 0 of the horizon.
    pub start_hour: usize,
    pub start_level: Vec<f64>,
    pub scenarios: Vec<PlannerScenario>,
    /// Expected reserve payment per offered MW and hour, computed under
    /// the price model itself rather than from the sampled scenarios.
    pub reserve_up_price: Vec<f64>,
    pub reserve_down_price: Vec<f64>,
    /// Forces zero reserve bids (spot-only benchmark).
    pub spot_only: bool,
}

struct ScenarioVars {
    s: Vec<VarId>,
    u: Vec<VarId>,
    v: Vec<VarId>,
    g: Vec<Vec<VarId>>,
    p: Vec<Vec<VarId>>,
    z: Vec<Vec<VarId>>,
}

/// Assembled planner LP plus the bookkeeping needed to read a solution
/// back out of it.
pub struct PlannerLp {
    pub lp: LinearProgram,
    days: usize,
    num_reservoirs: usize,
    nonsink: Vec<usize>,
    /// Cubic meters per LP volume unit, one entry per nonsink slot; each
    /// reservoir is normalized by its own magnitude so every trajectory
    /// is O(1) regardless of how dissimilar the reservoirs are.
    unit: Vec<f64>,
    /// Cubic meters per LP flow unit, per arc.
    funit: Vec<f64>,
    inflow_scale: Vec<f64>,
    price_scale: f64,
    day1_target: Vec<VarId>,
    intercept: Vec<Vec<VarId>>,
    day_gain: Vec<Vec<Vec<VarId>>>,
    cum_gain: Vec<Vec<Vec<VarId>>>,
    price_gain: Vec<Vec<VarId>>,
    scen: Vec<ScenarioVars>,
    link_day2: Vec<Vec<ConId>>,
    day_row_end: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ScenarioPlan {
    pub bids: CollectiveBids,
    pub flows: Flows,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub rows: usize,
    pub cols: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PlannerSolution {
    pub policy: AffinePolicy,
    pub plans: Vec<ScenarioPlan>,
    pub objective: f64,
    /// Marginal revenue of a m3 stored at the first day boundary
    /// [EUR/m3], zero for the sink.
    pub water_values: Vec<f64>,
    pub stats: SolveStats,
}

/// Solve-statistics line: scenario count, rows, columns, wall seconds.
pub fn stats_csv_row(num_scenarios: usize, stats: &SolveStats) -> String {
    format!(
        "{},{},{},{:.3}",
        num_scenarios, stats.rows, stats.cols, stats.wall_seconds
    )
}

/// Closed-form size of the assembled LP, with K = reservoirs minus the
/// sink. Columns: per scenario and hour 3 bids, 3A flows and K levels;
/// per scenario K end-of-day and K begin-of-day levels for each day
/// after the first; shared first stage of K day-1 targets plus, per
/// later day, 2K gains on intercept/price and 2K^2 inflow gains. Rows:
/// per scenario and hour one delivery, one cut and K balances; per day K
/// carried-level inequalities; per later day K rule and K linking
/// equalities; K terminal rows.
pub fn planner_dimensions(
    num_reservoirs: usize,
    num_arcs: usize,
    days: usize,
    hours_per_day: usize,
    num_scenarios: usize,
) -> (usize, usize) {
    let k = num_reservoirs - 1;
    let h = days * hours_per_day;
    let cols = num_scenarios * (h * (3 + 3 * num_arcs + k) + (days - 1) * 2 * k)
        + k
        + (days - 1) * (2 * k + 2 * k * k);
    let rows = num_scenarios * (h * (2 + k) + days * k + (days - 1) * 2 * k + k);
    (rows, cols)
}

pub fn assemble_planner_saa(input: &PlannerInput) -> Result<PlannerLp, PlannerError> {
    let cascade = input.cascade;
    let nres = cascade.num_reservoirs();
    let arcs = cascade.num_arcs();
    let (days, hours) = (input.days, input.hours_per_day);
    let horizon = days * hours;
    if days < 2 {
        return Err(PlannerError::Dimension("plan needs at least two days".into()));
    }
    if hours == 0 {
        return Err(PlannerError::Dimension("empty day".into()));
    }
    if input.scenarios.is_empty() {
        return Err(PlannerError::EmptyScenarios);
    }
    if input.ratings.hours() != horizon || input.ratings.num_arcs() != arcs {
        return Err(PlannerError::Dimension(format!(
            "ratings cover {}h x {} arcs, horizon needs {}h x {}",
            input.ratings.hours(),
            input.ratings.num_arcs(),
            horizon,
            arcs
        )));
    }
    if input.start_level.len() != nres {
        return Err(PlannerError::Dimension(format!(
            "start level has {} entries for {} reservoirs",
            input.start_level.len(),
            nres
        )));
    }
    if input.reserve_up_price.len() != horizon || input.reserve_down_price.len() != horizon {
        return Err(PlannerError::Dimension("reserve price series length".into()));
    }
    for (n, sc) in input.scenarios.iter().enumerate() {
        if sc.spot.len() != horizon
            || sc.inflows.len() != horizon
            || sc.inflows.iter().any(|f| f.len() != nres)
        {
            return Err(PlannerError::Dimension(format!(
                "scenario {n} is not {horizon}h x {nres} reservoirs"
            )));
        }
    }

    let sink = cascade.sink();
    let nonsink: Vec<usize> = (0..nres).filter(|&r| r != sink).collect();
    let k = nonsink.len();
    let nscen = input.scenarios.len();
    let weight = 1.0 / nscen as f64;
    let incidence = cascade.incidence();
    let rat = input.ratings;

    // Daily features per scenario, plus scales that bring them near 1
    // inside the LP. The rule gains are rescaled back on extraction.
    let mut day_sum = vec![vec![vec![0.0; k]; days]; nscen];
    let mut cum_sum = vec![vec![vec![0.0; k]; days]; nscen];
    let mut avg_spot = vec![vec![0.0; days]; nscen];
    for (n, sc) in input.scenarios.iter().enumerate() {
        for i in 0..days {
            for t in i * hours..(i + 1) * hours {
                for (slot, &r) in nonsink.iter().enumerate() {
                    day_sum[n][i][slot] += sc.inflows[t][r];
                }
                avg_spot[n][i] += sc.spot[t];
            }
            avg_spot[n][i] /= hours as f64;
            if i + 1 < days {
                for slot in 0..k {
                    cum_sum[n][i + 1][slot] = cum_sum[n][i][slot] + day_sum[n][i][slot];
                }
            }
        }
    }
    let mut inflow_scale = vec![0.0; k];
    for n in 0..nscen {
        for i in 0..days {
            for slot in 0..k {
                inflow_scale[slot] += day_sum[n][i][slot].abs();
            }
        }
    }
    for s in &mut inflow_scale {
        *s /= (nscen * days) as f64;
        if *s <= 1e-12 {
            *s = 1.0;
        }
    }
    let mut price_scale = input
        .scenarios
        .iter()
        .flat_map(|sc| &sc.spot)
        .map(|p| p.abs())
        .sum::<f64>()
        / (nscen * horizon) as f64;
    if price_scale <= 1e-12 {
        price_scale = 1.0;
    }

    // Per-reservoir volume unit: the largest magnitude the level can
    // plausibly reach, from the band profiles, the start, and (for
    // open-topped reservoirs) the mean total inflow.
    let mut unit = vec![1.0f64; k];
    for (slot, &r) in nonsink.iter().enumerate() {
        let mut m = input.start_level[r].abs().max(1.0);
        let mut capped = false;
        for t in 0..horizon {
            let hi = cascade.upper.at(input.start_hour + t)[r];
            if hi.is_finite() {
                m = m.max(hi.abs());
                capped = true;
            }
            m = m.max(cascade.lower.at(input.start_hour + t)[r].abs());
        }
        if !capped {
            let mean_total: f64 = (0..nscen)
                .map(|n| (0..days).map(|i| day_sum[n][i][slot]).sum::<f64>())
                .sum::<f64>()
                / nscen as f64;
            m = m.max(input.start_level[r].abs() + mean_total.abs());
        }
        unit[slot] = m;
    }
    // Flows are normalized by their arc's largest rating for the same
    // reason; spill shares the arc's unit.
    let funit: Vec<f64> = (0..arcs)
        .map(|a| {
            (0..horizon)
                .map(|t| rat.gen_cap[t][a].max(rat.pump_cap[t][a]))
                .fold(1.0f64, f64::max)
        })
        .collect();

    let mut lp = LinearProgram::new();
    let day_bound_hour = |i: usize| input.start_hour + (i + 1) * hours - 1;

    // First stage: day-1 target vector, then one affine rule per later day.
    let day1_target: Vec<VarId> = nonsink
        .iter()
        .enumerate()
        .map(|(slot, &r)| {
            let lb = cascade.lower.at(day_bound_hour(0))[r] / unit[slot];
            let ub = cascade.upper.at(day_bound_hour(0))[r] / unit[slot];
            lp.add_var(format!("tgt1_{r}"), lb, ub)
        })
        .collect();
    let mut intercept = Vec::new();
    let mut day_gain = Vec::new();
    let mut cum_gain = Vec::new();
    let mut price_gain = Vec::new();
    for i in 1..days {
        let boxed = |lp: &mut LinearProgram, name: String| {
            lp.add_var(name, -GAIN_BOX, GAIN_BOX)
        };
        intercept.push(
            (0..k)
                .map(|s| boxed(&mut lp, format!("base{i}_{s}")))
                .collect::<Vec<_>>(),
        );
        day_gain.push(
            (0..k)
                .map(|s| {
                    (0..k)
                        .map(|j| boxed(&mut lp, format!("gday{i}_{s}_{j}")))
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>(),
        );
        cum_gain.push(
            (0..k)
                .map(|s| {
                    (0..k)
                        .map(|j| boxed(&mut lp, format!("gcum{i}_{s}_{j}")))
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>(),
        );
        price_gain.push(
            (0..k)
                .map(|s| boxed(&mut lp, format!("gpx{i}_{s}")))
                .collect::<Vec<_>>(),
        );
    }

    // Second stage. Variables may be created in any order; rows are
    // emitted day-major below so an infeasibility can be pinned to the
    // first day whose row prefix has no solution.
    let reserve_ub = if input.spot_only { 0.0 } else { f64::INFINITY };
    let mut scen = Vec::with_capacity(nscen);
    let mut levels = Vec::with_capacity(nscen);
    let mut wday = Vec::with_capacity(nscen);
    let mut wminus = Vec::with_capacity(nscen);
    for (n, sc) in input.scenarios.iter().enumerate() {
        let mut sv = ScenarioVars {
            s: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            g: Vec::new(),
            p: Vec::new(),
            z: Vec::new(),
        };
        for t in 0..horizon {
            sv.s.push(lp.add_var(format!("s{n}_{t}"), f64::NEG_INFINITY, f64::INFINITY));
            sv.u.push(lp.add_var(format!("u{n}_{t}"), 0.0, reserve_ub));
            sv.v.push(lp.add_var(format!("v{n}_{t}"), 0.0, reserve_ub));
            lp.set_objective_coeff(sv.s[t], weight * sc.spot[t]);
            lp.set_objective_coeff(sv.u[t], weight * input.reserve_up_price[t]);
            lp.set_objective_coeff(sv.v[t], weight * input.reserve_down_price[t]);
            let (mut gs, mut ps, mut zs) = (Vec::new(), Vec::new(), Vec::new());
            for a in 0..arcs {
                gs.push(lp.add_var(format!("g{n}_{t}_{a}"), 0.0, rat.gen_cap[t][a] / funit[a]));
                ps.push(lp.add_var(format!("p{n}_{t}_{a}"), 0.0, rat.pump_cap[t][a] / funit[a]));
                zs.push(lp.add_var(format!("z{n}_{t}_{a}"), 0.0, f64::INFINITY));
            }
            sv.g.push(gs);
            sv.p.push(ps);
            sv.z.push(zs);
        }
        let lv: Vec<Vec<VarId>> = (0..horizon)
            .map(|t| {
                nonsink
                    .iter()
                    .enumerate()
                    .map(|(slot, &r)| {
                        let lb = cascade.lower.at(input.start_hour + t)[r] / unit[slot];
                        let ub = cascade.upper.at(input.start_hour + t)[r] / unit[slot];
                        lp.add_var(format!("l{n}_{t}_{r}"), lb, ub)
                    })
                    .collect()
            })
            .collect();
        // Daily boxes are read from the band profile at the day's last hour.
        let mut wd = vec![day1_target.clone()];
        for i in 1..days {
            wd.push(
                nonsink
                    .iter()
                    .enumerate()
                    .map(|(slot, &r)| {
                        let lb = cascade.lower.at(day_bound_hour(i))[r] / unit[slot];
                        let ub = cascade.upper.at(day_bound_hour(i))[r] / unit[slot];
                        lp.add_var(format!("w{n}_{i}_{r}"), lb, ub)
                    })
                    .collect::<Vec<_>>(),
            );
        }
        let wm: Vec<Vec<VarId>> = (1..days)
            .map(|i| {
                nonsink
                    .iter()
                    .map(|&r| {
                        lp.add_var(format!("wm{n}_{i}_{r}"), f64::NEG_INFINITY, f64::INFINITY)
                    })
                    .collect()
            })
            .collect();
        scen.push(sv);
        levels.push(lv);
        wday.push(wd);
        wminus.push(wm);
    }

    let mut link_day2 = vec![Vec::new(); nscen];
    let mut day_row_end = Vec::with_capacity(days);
    for i in 0..days {
        for (n, sc) in input.scenarios.iter().enumerate() {
            let sv = &scen[n];
            for t in i * hours..(i + 1) * hours {
                // Market delivery and the no-overcommit cut.
                let mut del = vec![(sv.s[t], 1.0), (sv.u[t], 1.0)];
                let mut cut_rhs = 0.0;
                for a in 0..arcs {
                    del.push((sv.g[t][a], -rat.gen_eff[t][a] * funit[a]));
                    del.push((sv.p[t][a], rat.inv_pump_eff[t][a] * funit[a]));
                    cut_rhs -= rat.inv_pump_eff[t][a] * rat.pump_cap[t][a];
                }
                lp.add_constraint(format!("del{n}_{t}"), &del, Sense::Eq, 0.0);
                lp.add_constraint(
                    format!("cut{n}_{t}"),
                    &[(sv.s[t], 1.0), (sv.v[t], -1.0)],
                    Sense::Ge,
                    cut_rhs,
                );
                // Volume balance; the first hour of a day chains to the
                // carried begin-of-day level (a constant on day 1).
                for (slot, &r) in nonsink.iter().enumerate() {
                    let mut terms = vec![(levels[n][t][slot], 1.0)];
                    let mut rhs = sc.inflows[t][r] / unit[slot];
                    if t == i * hours {
                        if i == 0 {
                            rhs += input.start_level[r] / unit[slot];
                        } else {
                            terms.push((wminus[n][i - 1][slot], -1.0));
                        }
                    } else {
                        terms.push((levels[n][t - 1][slot], -1.0));
                    }
                    for a in 0..arcs {
                        let c = incidence[r][a] * funit[a] / unit[slot];
                        if c != 0.0 {
                            terms.push((sv.g[t][a], -c));
                            terms.push((sv.p[t][a], c));
                            terms.push((sv.z[t][a], -c));
                        }
                    }
                    lp.add_constraint(format!("bal{n}_{t}_{r}"), &terms, Sense::Eq, rhs);
                }
            }
            if i >= 1 {
                for (slot, &r) in nonsink.iter().enumerate() {
                    // Target rule: end-of-day level equals the affine map
                    // of this scenario's (scaled) features.
                    let mut rule = vec![
                        (wday[n][i][slot], 1.0),
                        (intercept[i - 1][slot], -1.0),
                        (price_gain[i - 1][slot], -avg_spot[n][i] / price_scale),
                    ];
                    for j in 0..k {
                        rule.push((day_gain[i - 1][slot][j], -day_sum[n][i][j] / inflow_scale[j]));
                        rule.push((
                            cum_gain[i - 1][slot][j],
                            -cum_sum[n][i][j] / (inflow_scale[j] * i as f64),
                        ));
                    }
                    lp.add_constraint(format!("rule{n}_{i}_{r}"), &rule, Sense::Eq, 0.0);
                    // Water carried over: begin-of-day copy equals the
                    // previous end-of-day target.
                    let link = lp.add_constraint(
                        format!("link{n}_{i}_{r}"),
                        &[(wminus[n][i - 1][slot], 1.0), (wday[n][i - 1][slot], -1.0)],
                        Sense::Eq,
                        0.0,
                    );
                    if i == 1 {
                        link_day2[n].push(link);
                    }
                }
            }
            for (slot, &r) in nonsink.iter().enumerate() {
                // The carried level cannot exceed what the flows leave.
                lp.add_constraint(
                    format!("day{n}_{i}_{r}"),
                    &[
                        (wday[n][i][slot], 1.0),
                        (levels[n][(i + 1) * hours - 1][slot], -1.0),
                    ],
                    Sense::Le,
                    0.0,
                );
            }
            if i == days - 1 {
                for (slot, &r) in nonsink.iter().enumerate() {
                    // End no lower than the start, against end-of-horizon
                    // drawdown.
                    lp.add_constraint(
                        format!("term{n}_{r}"),
                        &[(wday[n][i][slot], 1.0)],
                        Sense::Ge,
                        input.start_level[r] / unit[slot],
                    );
                }
            }
        }
        day_row_end.push(lp.num_constraints());
    }

    Ok(PlannerLp {
        lp,
        days,
        num_reservoirs: nres,
        nonsink,
        unit,
        funit,
        inflow_scale,
        price_scale,
        day1_target,
        intercept,
        day_gain,
        cum_gain,
        price_gain,
        scen,
        link_day2,
        day_row_end,
    })
}

impl PlannerLp {
    /// Day whose constraint-row prefix first turns infeasible, as a
    /// 1-based day number; falls back to the last day.
    fn first_infeasible_day(&self) -> usize {
        for (i, &end) in self.day_row_end.iter().enumerate() {
            let mut probe = self.lp.truncated(end);
            probe.clear_objective();
            if matches!(probe.solve(), Ok(s) if s.status == LpStatus::Infeasible) {
                return i + 1;
            }
        }
        self.days
    }
}

pub fn solve_planner(built: &PlannerLp) -> Result<PlannerSolution, PlannerError> {
    let start = Instant::now();
    let sol = built.lp.solve()?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Unbounded => return Err(PlannerError::Unbounded),
        LpStatus::Infeasible => {
            return Err(PlannerError::Infeasible {
                day: built.first_infeasible_day(),
            })
        }
    }
    let days = built.days;
    let nres = built.num_reservoirs;
    let value = |v: VarId| sol.primal[v.index()];

    let mut policy = AffinePolicy {
        intercept: vec![vec![0.0; nres]; days],
        day_inflow: vec![vec![vec![0.0; nres]; nres]; days],
        cum_inflow: vec![vec![vec![0.0; nres]; nres]; days],
        spot_price: vec![vec![0.0; nres]; days],
    };
    for (slot, &r) in built.nonsink.iter().enumerate() {
        policy.intercept[0][r] = value(built.day1_target[slot]) * built.unit[slot];
    }
    for i in 1..days {
        for (slot, &r) in built.nonsink.iter().enumerate() {
            let u = built.unit[slot];
            policy.intercept[i][r] = value(built.intercept[i - 1][slot]) * u;
            policy.spot_price[i][r] =
                value(built.price_gain[i - 1][slot]) * u / built.price_scale;
            for (jslot, &j) in built.nonsink.iter().enumerate() {
                policy.day_inflow[i][r][j] =
                    value(built.day_gain[i - 1][slot][jslot]) * u / built.inflow_scale[jslot];
                policy.cum_inflow[i][r][j] = value(built.cum_gain[i - 1][slot][jslot]) * u
                    / (built.inflow_scale[jslot] * i as f64);
            }
        }
    }

    let plans = built
        .scen
        .iter()
        .map(|sv| {
            let grid = |vars: &Vec<Vec<VarId>>| {
                vars.iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .map(|(a, &v)| value(v).max(0.0) * built.funit[a])
                            .collect()
                    })
                    .collect()
            };
            ScenarioPlan {
                bids: CollectiveBids {
                    spot: sv.s.iter().map(|&v| value(v)).collect(),
                    up: sv.u.iter().map(|&v| value(v).max(0.0)).collect(),
                    down: sv.v.iter().map(|&v| value(v).max(0.0)).collect(),
                },
                flows: Flows {
                    gen: grid(&sv.g),
                    pump: grid(&sv.p),
                    spill: grid(&sv.z),
                },
            }
        })
        .collect();

    // Linking-row duals, summed over scenarios: the objective already
    // carries the 1/N weights, so the sum is the marginal value of one
    // extra m3 carried into day 2 in every scenario at once.
    let mut water_values = vec![0.0; nres];
    for rows in &built.link_day2 {
        for (slot, &con) in rows.iter().enumerate() {
            water_values[built.nonsink[slot]] += sol.dual[con.index()] / built.unit[slot];
        }
    }

    Ok(PlannerSolution {
        policy,
        plans,
        objective: sol.objective,
        water_values,
        stats: SolveStats {
            rows: built.lp.num_constraints(),
            cols: built.lp.num_vars(),
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

/// Difference-quotient cross-check of the reported water values.
#[derive(Debug, Clone)]
pub struct WaterValueCheck {
    /// Central quotient per reservoir [EUR/m3].
    pub finite_difference: Vec<f64>,
    /// One-sided quotients. The optimum is concave in the linking shift,
    /// so forward <= dual <= backward up to solver noise.
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
    /// Set when the one-sided slopes split by more than 0.1%: the
    /// optimum has a kink within the probed range and the dual is only
    /// one point of an interval.
    pub degenerate: Vec<bool>,
}

/// Re-solves with the day-2 linking rows shifted by `epsilon` m3 (one
/// reservoir at a time, both signs) and differences the optima.
pub fn water_value_fd(built: &PlannerLp, epsilon: f64) -> Result<WaterValueCheck, PlannerError> {
    if epsilon <= 0.0 {
        return Err(PlannerError::Dimension("perturbation must be positive".into()));
    }
    let base = built.lp.solve()?;
    match base.status {
        LpStatus::Optimal => {}
        LpStatus::Unbounded => return Err(PlannerError::Unbounded),
        LpStatus::Infeasible => {
            return Err(PlannerError::Infeasible {
                day: built.first_infeasible_day(),
            })
        }
    }
    let nres = built.num_reservoirs;
    let mut check = WaterValueCheck {
        finite_difference: vec![0.0; nres],
        forward: vec![0.0; nres],
        backward: vec![0.0; nres],
        degenerate: vec![false; nres],
    };
    for (slot, &r) in built.nonsink.iter().enumerate() {
        let shifted = |shift: f64| -> Result<f64, PlannerError> {
            let mut lp = built.lp.clone();
            for rows in &built.link_day2 {
                lp.set_constraint_rhs(rows[slot], shift / built.unit[slot]);
            }
            let sol = lp.solve()?;
            match sol.status {
                LpStatus::Optimal => Ok(sol.objective),
                LpStatus::Unbounded => Err(PlannerError::Unbounded),
                LpStatus::Infeasible => Err(PlannerError::Infeasible { day: 2 }),
            }
        };
        let up = shifted(epsilon)?;
        let down = shifted(-epsilon)?;
        check.finite_difference[r] = (up - down) / (2.0 * epsilon);
        check.forward[r] = (up - base.objective) / epsilon;
        check.backward[r] = (base.objective - down) / epsilon;
        check.degenerate[r] = check.backward[r] - check.forward[r]
            > 1e-3 * check.finite_difference[r].abs().max(1.0);
    }
    Ok(check)
}
