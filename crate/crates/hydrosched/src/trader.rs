//! Day-ahead trader problems: the reduced bidding LPs in individual and
//! collective mode, complementarity repair, recovery of activation-contingent
//! dispatch policies, the water-valued bidding variant used on the current
//! trading day, and the hourly truncated dispatch LP that tracks realized
//! reserve calls.

use crate::cascade::{Cascade, Ratings};
use crate::lpcore::{LinearProgram, LpError, LpSolution, LpStatus, Sense, VarId};
use crate::stochastic::BidCoefficients;
use thiserror::Error;

/// Slack allowed on the optimal value when re-solving for minimal spill.
const LEX_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum TraderError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("bids admit no feasible dispatch at hour {hour}: {detail}")]
    DispatchInfeasible { hour: usize, detail: String },
    #[error("no robust day plan exists: {0}")]
    RobustInfeasible(String),
    #[error("flows on arc {arc} in hour {hour} generate and pump simultaneously")]
    NotComplementary { hour: usize, arc: usize },
    #[error("solution inconsistency: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Scalar per-hour bids: spot energy (signed), reserve-up and reserve-down
/// capacity (nonnegative).
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveBids {
    pub spot: Vec<f64>,
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

/// Per-hour per-arc bids.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualBids {
    pub spot: Vec<Vec<f64>>,
    pub up: Vec<Vec<f64>>,
    pub down: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bids {
    Individual(IndividualBids),
    Collective(CollectiveBids),
}

/// Per-hour per-arc water movements: generation discharge, pumping, spill,
/// all in m3/h.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flows {
    pub gen: Vec<Vec<f64>>,
    pub pump: Vec<Vec<f64>>,
    pub spill: Vec<Vec<f64>>,
}

impl Flows {
    pub fn hours(&self) -> usize {
        self.gen.len()
    }

    /// Net outflow vector g - p + z for one hour.
    pub fn net_outflow(&self, t: usize) -> Vec<f64> {
        (0..self.gen[t].len())
            .map(|a| self.gen[t][a] - self.pump[t][a] + self.spill[t][a])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TraderSolution {
    pub bids: Bids,
    /// Flows guaranteeing reservoir feasibility for every activation pattern.
    pub flows: Flows,
    /// Flows under expected activations (water-valued variant only).
    pub nominal: Option<Flows>,
    pub objective: f64,
}

/// Result of a bidding solve: the target levels may be unattainable, which
/// callers treat as a value of negative infinity rather than an error.
#[derive(Debug, Clone)]
pub enum TraderOutcome {
    Optimal(TraderSolution),
    Infeasible,
}

impl TraderOutcome {
    pub fn optimal(&self) -> Option<&TraderSolution> {
        match self {
            TraderOutcome::Optimal(s) => Some(s),
            TraderOutcome::Infeasible => None,
        }
    }

    pub fn into_optimal(self) -> Option<TraderSolution> {
        match self {
            TraderOutcome::Optimal(s) => Some(s),
            TraderOutcome::Infeasible => None,
        }
    }
}

/// Data for one trading day.
#[derive(Debug, Clone)]
pub struct TraderInput<'a> {
    pub cascade: &'a Cascade,
    pub ratings: &'a Ratings,
    /// Reservoir levels at day start [m3].
    pub start_level: Vec<f64>,
    /// End-of-day floor per reservoir [m3]; the sink entry is ignored since
    /// its band is [0, inf) and a zero target is always attainable. `None`
    /// in the water-valued variant.
    pub target_level: Option<Vec<f64>>,
    /// [hour][reservoir] inflow rates [m3/h].
    pub inflows: Vec<Vec<f64>>,
    pub coefficients: BidCoefficients,
    /// Marginal value of stored water per reservoir [EUR/m3], water-valued
    /// variant only; the sink entry is forced to zero.
    pub water_values: Option<Vec<f64>>,
    /// Global hour index of the day's first hour (selects bound profiles).
    pub start_hour: usize,
}

pub(crate) fn validate_input(input: &TraderInput) -> Result<usize, TraderError> {
    let h = input.ratings.hours();
    let r = input.cascade.num_reservoirs();
    let a = input.cascade.num_arcs();
    if h == 0 {
        return Err(TraderError::Dimension("day has no hours".into()));
    }
    if input.ratings.num_arcs() != a {
        return Err(TraderError::Dimension("ratings cover a different arc set".into()));
    }
    if input.start_level.len() != r {
        return Err(TraderError::Dimension("start level length != reservoir count".into()));
    }
    if let Some(t) = &input.target_level {
        if t.len() != r {
            return Err(TraderError::Dimension("target length != reservoir count".into()));
        }
    }
    if input.inflows.len() != h || input.inflows.iter().any(|row| row.len() != r) {
        return Err(TraderError::Dimension("inflow table shape != hours x reservoirs".into()));
    }
    let c = &input.coefficients;
    if c.spot.len() != h || c.reserve_up.len() != h || c.reserve_down.len() != h {
        return Err(TraderError::Dimension("bid coefficient series length != hours".into()));
    }
    if let Some(v) = &input.water_values {
        if v.len() != r {
            return Err(TraderError::Dimension("water value length != reservoir count".into()));
        }
    }
    Ok(h)
}

/// Per-hour per-arc flow variables with rating caps. Each arc's variables
/// live in units of the arc's largest rating so they are order one in the
/// solver; `unit` converts back to m3/h.
pub(crate) struct FlowVars {
    pub(crate) g: Vec<Vec<VarId>>,
    pub(crate) p: Vec<Vec<VarId>>,
    pub(crate) z: Vec<Vec<VarId>>,
    pub(crate) unit: Vec<f64>,
}

impl FlowVars {
    /// Spill variables with their natural-unit weights, for spill accounting.
    pub(crate) fn all_spill(&self) -> Vec<(VarId, f64)> {
        self.z
            .iter()
            .flat_map(|row| row.iter().zip(&self.unit).map(|(&z, &w)| (z, w)))
            .collect()
    }

    pub(crate) fn extract(&self, sol: &LpSolution) -> Flows {
        let grid = |vars: &Vec<Vec<VarId>>| {
            vars.iter()
                .map(|row| {
                    row.iter()
                        .zip(&self.unit)
                        .map(|(v, u)| (sol.primal[v.index()] * u).max(0.0))
                        .collect()
                })
                .collect()
        };
        Flows { gen: grid(&self.g), pump: grid(&self.p), spill: grid(&self.z) }
    }
}

/// Adds flow variables for day-local hours `range`, capped by the ratings.
pub(crate) fn add_flows(
    lp: &mut LinearProgram,
    ratings: &Ratings,
    range: std::ops::Range<usize>,
    tag: &str,
) -> FlowVars {
    let arcs = ratings.num_arcs();
    let unit: Vec<f64> = (0..arcs)
        .map(|a| {
            range
                .clone()
                .map(|t| ratings.gen_cap[t][a].max(ratings.pump_cap[t][a]))
                .fold(1.0f64, f64::max)
        })
        .collect();
    let mut fv = FlowVars { g: Vec::new(), p: Vec::new(), z: Vec::new(), unit };
    for t in range {
        let (mut gs, mut ps, mut zs) = (Vec::new(), Vec::new(), Vec::new());
        for a in 0..arcs {
            gs.push(lp.add_var(format!("g{tag}{t}_{a}"), 0.0, ratings.gen_cap[t][a] / fv.unit[a]));
            ps.push(lp.add_var(format!("p{tag}{t}_{a}"), 0.0, ratings.pump_cap[t][a] / fv.unit[a]));
            zs.push(lp.add_var(format!("z{tag}{t}_{a}"), 0.0, f64::INFINITY));
        }
        fv.g.push(gs);
        fv.p.push(ps);
        fv.z.push(zs);
    }
    fv
}

/// Level-state variables per hour and non-sink reservoir, each scaled by
/// its reservoir's magnitude; `unit` converts back to m3.
pub(crate) struct LevelVars {
    pub(crate) vars: Vec<Vec<VarId>>,
    pub(crate) unit: Vec<f64>,
}

/// Adds level-state variables and water-balance rows for every non-sink
/// reservoir over day-local hours `range`; flows[i] drives hour
/// range.start + i. `entry_level` is the volume before the first hour.
/// Returns level variables as [hour-offset][reservoir index among non-sink].
/// The sink is skipped throughout: its band is [0, inf) and every arc into
/// it only adds water, so its rows are vacuous.
pub(crate) fn add_levels(
    lp: &mut LinearProgram,
    cascade: &Cascade,
    entry_level: &[f64],
    inflows: &[Vec<f64>],
    range: std::ops::Range<usize>,
    start_hour: usize,
    flows: &FlowVars,
    tag: &str,
) -> LevelVars {
    let sink = cascade.sink();
    let incidence = cascade.incidence();
    // Per-reservoir volume unit: the largest magnitude the level can reach
    // within the window, from the band profile, the entry volume, and (for
    // open-topped reservoirs) the total inflow.
    let mut unit = Vec::new();
    for n in (0..cascade.num_reservoirs()).filter(|&n| n != sink) {
        let mut m = entry_level[n].abs().max(1.0);
        let mut capped = false;
        for t in range.clone() {
            let hi = cascade.upper.at(start_hour + t)[n];
            if hi.is_finite() {
                m = m.max(hi.abs());
                capped = true;
            }
            m = m.max(cascade.lower.at(start_hour + t)[n].abs());
        }
        if !capped {
            let total: f64 = range.clone().map(|t| inflows[t][n]).sum();
            m = m.max(entry_level[n].abs() + total.abs());
        }
        unit.push(m);
    }
    let mut levels: Vec<Vec<VarId>> = Vec::new();
    for (i, t) in range.clone().enumerate() {
        let lo = cascade.lower.at(start_hour + t);
        let hi = cascade.upper.at(start_hour + t);
        let mut this_hour = Vec::new();
        for n in (0..cascade.num_reservoirs()).filter(|&n| n != sink) {
            let u = unit[this_hour.len()];
            let ub = if hi[n].is_finite() { hi[n] / u } else { f64::INFINITY };
            let lv = lp.add_var(format!("l{tag}{t}_{n}"), lo[n] / u, ub);
            let mut terms: Vec<(VarId, f64)> = vec![(lv, 1.0)];
            if i > 0 {
                terms.push((levels[i - 1][this_hour.len()], -1.0));
            }
            for a in 0..cascade.num_arcs() {
                let m = incidence[n][a];
                if m != 0.0 {
                    let c = m * flows.unit[a] / u;
                    terms.push((flows.g[i][a], -c));
                    terms.push((flows.p[i][a], c));
                    terms.push((flows.z[i][a], -c));
                }
            }
            let mut rhs = inflows[t][n] / u;
            if i == 0 {
                rhs += entry_level[n] / u;
            }
            lp.add_constraint(format!("bal{tag}{t}_{n}"), &terms, Sense::Eq, rhs);
            this_hour.push(lv);
        }
        levels.push(this_hour);
    }
    LevelVars { vars: levels, unit }
}

/// Raises the lower bound of the final level variables to the end-of-day
/// targets (the target is an inequality floor, so a tightened bound is
/// equivalent and lets the solver report unattainable targets as
/// infeasibility).
fn apply_targets(lp: &mut LinearProgram, cascade: &Cascade, levels: &LevelVars, target: &[f64]) {
    let sink = cascade.sink();
    let last = levels.vars.last().expect("level window is nonempty");
    for (slot, n) in (0..cascade.num_reservoirs()).filter(|&n| n != sink).enumerate() {
        let (lo, hi) = lp.bounds(last[slot]);
        lp.set_var_bounds(last[slot], lo.max(target[n] / levels.unit[slot]), hi);
    }
}

/// Re-solves at (tolerance-)fixed optimal value, minimizing total spill over
/// the weighted `spill_vars` (weights convert to m3/h). Falls back to the
/// first-pass solution if the second pass fails. Returns the point to report
/// flows from.
pub(crate) fn spill_min_resolve(
    lp: &mut LinearProgram,
    first: LpSolution,
    spill_vars: &[(VarId, f64)],
) -> LpSolution {
    let hold = lp.objective_terms();
    if hold.is_empty() || spill_vars.is_empty() {
        return first;
    }
    let current: f64 = spill_vars.iter().map(|&(z, w)| first.primal[z.index()] * w).sum();
    let dust = spill_vars.iter().map(|&(_, w)| w).fold(1.0, f64::max);
    if current <= 1e-7 * dust {
        // already spill-free up to solver dust; a re-solve could only blur
        // the solution
        return first;
    }
    let floor = first.objective - LEX_TOL * (1.0 + first.objective.abs());
    lp.add_constraint("hold_optimum", &hold, Sense::Ge, floor);
    lp.clear_objective();
    for &(z, w) in spill_vars {
        lp.set_objective_coeff(z, -w);
    }
    match lp.solve() {
        Ok(s) if s.status == LpStatus::Optimal => s,
        _ => first,
    }
}

/// Whether bids are placed per arc or once for the whole cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Individual,
    Collective,
}

/// Shared core of the two reduced bidding problems. Objective: expected
/// market revenue of the bids. Constraints per hour: energy delivery
/// (spot plus reserve-up equals generated minus pumped energy), the
/// reserve-down cut (spot minus reserve-down at least the worst-case pumping
/// energy), rating caps, hourly reservoir bands, end-of-day targets.
fn solve_reduced(input: &TraderInput, mode: Mode) -> Result<TraderOutcome, TraderError> {
    let h = validate_input(input)?;
    let target = input
        .target_level
        .as_ref()
        .ok_or_else(|| TraderError::Dimension("reduced problem requires target levels".into()))?;
    let arcs = input.cascade.num_arcs();
    let coef = &input.coefficients;

    let mut lp = LinearProgram::new();
    let mut s_vars: Vec<Vec<VarId>> = Vec::new();
    let mut u_vars: Vec<Vec<VarId>> = Vec::new();
    let mut v_vars: Vec<Vec<VarId>> = Vec::new();
    let width = match mode {
        Mode::Individual => arcs,
        Mode::Collective => 1,
    };
    for t in 0..h {
        let s: Vec<VarId> = (0..width)
            .map(|a| lp.add_var(format!("s{t}_{a}"), f64::NEG_INFINITY, f64::INFINITY))
            .collect();
        let u: Vec<VarId> =
            (0..width).map(|a| lp.add_var(format!("u{t}_{a}"), 0.0, f64::INFINITY)).collect();
        let v: Vec<VarId> =
            (0..width).map(|a| lp.add_var(format!("v{t}_{a}"), 0.0, f64::INFINITY)).collect();
        for a in 0..width {
            lp.set_objective_coeff(s[a], coef.spot[t]);
            lp.set_objective_coeff(u[a], coef.reserve_up[t]);
            lp.set_objective_coeff(v[a], coef.reserve_down[t]);
        }
        s_vars.push(s);
        u_vars.push(u);
        v_vars.push(v);
    }
    let fv = add_flows(&mut lp, input.ratings, 0..h, "");
    for t in 0..h {
        match mode {
            Mode::Individual => {
                for a in 0..arcs {
                    let eta = input.ratings.gen_eff[t][a];
                    let zeta = input.ratings.inv_pump_eff[t][a];
                    lp.add_constraint(
                        format!("dlv{t}_{a}"),
                        &[
                            (s_vars[t][a], 1.0),
                            (u_vars[t][a], 1.0),
                            (fv.g[t][a], -eta * fv.unit[a]),
                            (fv.p[t][a], zeta * fv.unit[a]),
                        ],
                        Sense::Eq,
                        0.0,
                    );
                    lp.add_constraint(
                        format!("cut{t}_{a}"),
                        &[(s_vars[t][a], 1.0), (v_vars[t][a], -1.0)],
                        Sense::Ge,
                        -zeta * input.ratings.pump_cap[t][a],
                    );
                }
            }
            Mode::Collective => {
                let mut dlv = vec![(s_vars[t][0], 1.0), (u_vars[t][0], 1.0)];
                let mut cut_rhs = 0.0;
                for a in 0..arcs {
                    dlv.push((fv.g[t][a], -input.ratings.gen_eff[t][a] * fv.unit[a]));
                    dlv.push((fv.p[t][a], input.ratings.inv_pump_eff[t][a] * fv.unit[a]));
                    cut_rhs -= input.ratings.inv_pump_eff[t][a] * input.ratings.pump_cap[t][a];
                }
                lp.add_constraint(format!("dlv{t}"), &dlv, Sense::Eq, 0.0);
                lp.add_constraint(
                    format!("cut{t}"),
                    &[(s_vars[t][0], 1.0), (v_vars[t][0], -1.0)],
                    Sense::Ge,
                    cut_rhs,
                );
            }
        }
    }
    let levels = add_levels(
        &mut lp,
        input.cascade,
        &input.start_level,
        &input.inflows,
        0..h,
        input.start_hour,
        &fv,
        "",
    );
    apply_targets(&mut lp, input.cascade, &levels, target);

    let first = lp.solve()?;
    if first.status == LpStatus::Infeasible {
        return Ok(TraderOutcome::Infeasible);
    }
    if first.status != LpStatus::Optimal {
        return Err(TraderError::Inconsistent(
            "capacity-bounded bidding problem reported unbounded".into(),
        ));
    }
    let objective = first.objective;
    let sol = spill_min_resolve(&mut lp, first, &fv.all_spill());

    let grid = |vars: &Vec<Vec<VarId>>, lo: f64| -> Vec<Vec<f64>> {
        vars.iter()
            .map(|row| row.iter().map(|v| sol.primal[v.index()].max(lo)).collect())
            .collect()
    };
    let bids = match mode {
        Mode::Individual => Bids::Individual(IndividualBids {
            spot: grid(&s_vars, f64::NEG_INFINITY),
            up: grid(&u_vars, 0.0),
            down: grid(&v_vars, 0.0),
        }),
        Mode::Collective => Bids::Collective(CollectiveBids {
            spot: s_vars.iter().map(|r| sol.primal[r[0].index()]).collect(),
            up: u_vars.iter().map(|r| sol.primal[r[0].index()].max(0.0)).collect(),
            down: v_vars.iter().map(|r| sol.primal[r[0].index()].max(0.0)).collect(),
        }),
    };
    Ok(TraderOutcome::Optimal(TraderSolution {
        bids,
        flows: fv.extract(&sol),
        nominal: None,
        objective,
    }))
}

/// Reduced bidding with one bid triple per arc and hour.
pub fn solve_reduced_individual(input: &TraderInput) -> Result<TraderOutcome, TraderError> {
    solve_reduced(input, Mode::Individual)
}

/// Reduced bidding with one scalar bid triple per hour for the whole
/// cascade.
pub fn solve_reduced_collective(input: &TraderInput) -> Result<TraderOutcome, TraderError> {
    solve_reduced(input, Mode::Collective)
}

/// Water-valued collective bidding for the current trading day: no
/// end-of-day targets; instead the objective credits the end-of-day water
/// positions of a second, nominal flow trajectory at the given water values.
/// The robust trajectory keeps every activation pattern feasible; the
/// nominal one values water under expected activations.
pub fn solve_day1_variant(input: &TraderInput) -> Result<TraderSolution, TraderError> {
    solve_day1(input, true)
}

/// Same day problem with the reserve bids pinned to zero (spot-only
/// benchmark); the dual trajectories then coincide.
pub fn solve_day1_spot_only(input: &TraderInput) -> Result<TraderSolution, TraderError> {
    solve_day1(input, false)
}

fn solve_day1(input: &TraderInput, allow_reserves: bool) -> Result<TraderSolution, TraderError> {
    let h = validate_input(input)?;
    let values = input
        .water_values
        .as_ref()
        .ok_or_else(|| TraderError::Dimension("water-valued variant requires water values".into()))?;
    let arcs = input.cascade.num_arcs();
    let sink = input.cascade.sink();
    let incidence = input.cascade.incidence();
    let coef = &input.coefficients;

    // the sink stores nothing of value
    let mut theta = values.clone();
    theta[sink] = 0.0;

    let mut lp = LinearProgram::new();
    let mut s_vars = Vec::new();
    let mut u_vars = Vec::new();
    let mut v_vars = Vec::new();
    let reserve_ub = if allow_reserves { f64::INFINITY } else { 0.0 };
    for t in 0..h {
        let s = lp.add_var(format!("s{t}"), f64::NEG_INFINITY, f64::INFINITY);
        let u = lp.add_var(format!("u{t}"), 0.0, reserve_ub);
        let v = lp.add_var(format!("v{t}"), 0.0, reserve_ub);
        lp.set_objective_coeff(s, coef.spot[t]);
        lp.set_objective_coeff(u, coef.reserve_up[t]);
        lp.set_objective_coeff(v, coef.reserve_down[t]);
        s_vars.push(s);
        u_vars.push(u);
        v_vars.push(v);
    }
    let robust = add_flows(&mut lp, input.ratings, 0..h, "");
    let nominal = add_flows(&mut lp, input.ratings, 0..h, "n");
    // water credit for the nominal end-of-day position: theta' M (gn-pn+zn)
    for t in 0..h {
        for a in 0..arcs {
            let weight: f64 = (0..input.cascade.num_reservoirs())
                .map(|n| theta[n] * incidence[n][a])
                .sum::<f64>()
                * nominal.unit[a];
            if weight != 0.0 {
                lp.add_objective_coeff(nominal.g[t][a], weight);
                lp.add_objective_coeff(nominal.p[t][a], -weight);
                lp.add_objective_coeff(nominal.z[t][a], weight);
            }
        }
    }
    for t in 0..h {
        let mut dlv = vec![(s_vars[t], 1.0), (u_vars[t], 1.0)];
        let mut nom = vec![
            (s_vars[t], 1.0),
            (u_vars[t], coef.mean_up),
            (v_vars[t], -coef.mean_down),
        ];
        let mut cut_rhs = 0.0;
        for a in 0..arcs {
            let eta = input.ratings.gen_eff[t][a];
            let zeta = input.ratings.inv_pump_eff[t][a];
            dlv.push((robust.g[t][a], -eta * robust.unit[a]));
            dlv.push((robust.p[t][a], zeta * robust.unit[a]));
            nom.push((nominal.g[t][a], -eta * nominal.unit[a]));
            nom.push((nominal.p[t][a], zeta * nominal.unit[a]));
            cut_rhs -= zeta * input.ratings.pump_cap[t][a];
        }
        lp.add_constraint(format!("dlv{t}"), &dlv, Sense::Eq, 0.0);
        lp.add_constraint(format!("ndlv{t}"), &nom, Sense::Eq, 0.0);
        lp.add_constraint(
            format!("cut{t}"),
            &[(s_vars[t], 1.0), (v_vars[t], -1.0)],
            Sense::Ge,
            cut_rhs,
        );
    }
    add_levels(&mut lp, input.cascade, &input.start_level, &input.inflows, 0..h, input.start_hour, &robust, "");
    add_levels(&mut lp, input.cascade, &input.start_level, &input.inflows, 0..h, input.start_hour, &nominal, "n");

    let first = lp.solve()?;
    match first.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(TraderError::RobustInfeasible(
                "no flow plan keeps every reservoir inside its band for all activation \
                 patterns; inflows likely exceed discharge capability against an upper bound"
                    .into(),
            ));
        }
        LpStatus::Unbounded => {
            return Err(TraderError::Inconsistent(
                "capacity-bounded bidding problem reported unbounded".into(),
            ));
        }
    }
    // inflow volumes carry the same water value regardless of the decisions
    let constant: f64 = (0..h)
        .map(|t| {
            (0..input.cascade.num_reservoirs())
                .map(|n| theta[n] * input.inflows[t][n])
                .sum::<f64>()
        })
        .sum();
    let objective = first.objective + constant;
    let mut spills = robust.all_spill();
    spills.extend(nominal.all_spill());
    let sol = spill_min_resolve(&mut lp, first, &spills);

    Ok(TraderSolution {
        bids: Bids::Collective(CollectiveBids {
            spot: s_vars.iter().map(|v| sol.primal[v.index()]).collect(),
            up: u_vars.iter().map(|v| sol.primal[v.index()].max(0.0)).collect(),
            down: v_vars.iter().map(|v| sol.primal[v.index()].max(0.0)).collect(),
        }),
        flows: robust.extract(&sol),
        nominal: Some(nominal.extract(&sol)),
        objective,
    })
}

/// Removes simultaneous generation and pumping on each arc-hour by shifting
/// the overlap into spill: with the transfer d = min(g/zeta, p/eta), the
/// update g -= zeta d, p -= eta d, z += (zeta - eta) d keeps both the net
/// outflow g - p + z and the net energy eta g - zeta p exactly unchanged.
/// The binding side is set to exactly zero. Bids are untouched.
pub fn repair_complementarity(sol: &TraderSolution, ratings: &Ratings) -> TraderSolution {
    let fix = |flows: &Flows| -> Flows {
        let mut out = flows.clone();
        for t in 0..out.hours() {
            for a in 0..out.gen[t].len() {
                let (g, p) = (out.gen[t][a], out.pump[t][a]);
                if g <= 0.0 || p <= 0.0 {
                    continue;
                }
                let eta = ratings.gen_eff[t][a];
                let zeta = ratings.inv_pump_eff[t][a];
                let by_g = if zeta > 0.0 { g / zeta } else { f64::INFINITY };
                let by_p = if eta > 0.0 { p / eta } else { f64::INFINITY };
                let d = by_g.min(by_p);
                if !d.is_finite() {
                    continue;
                }
                if by_g <= by_p {
                    out.gen[t][a] = 0.0;
                    out.pump[t][a] = p - eta * d;
                } else {
                    out.gen[t][a] = g - zeta * d;
                    out.pump[t][a] = 0.0;
                }
                out.spill[t][a] += (zeta - eta) * d;
            }
        }
        out
    };
    TraderSolution {
        bids: sol.bids.clone(),
        flows: fix(&sol.flows),
        nominal: sol.nominal.as_ref().map(&fix),
        objective: sol.objective,
    }
}

/// Closed-form dispatch rule for individual-mode solutions: given the
/// realized activations of an hour it returns flows meeting the committed
/// energy exactly while preserving each hour's net reservoir outflow.
#[derive(Debug, Clone)]
pub struct ContingentPolicy {
    bids: IndividualBids,
    gen: Vec<Vec<f64>>,
    pump: Vec<Vec<f64>>,
    spill: Vec<Vec<f64>>,
    gen_eff: Vec<Vec<f64>>,
    inv_pump_eff: Vec<Vec<f64>>,
}

impl ContingentPolicy {
    pub fn hours(&self) -> usize {
        self.gen.len()
    }

    pub fn bids(&self) -> &IndividualBids {
        &self.bids
    }

    /// Flows (g, p, z) per arc for hour `t` under realized activations.
    /// The committed energy e = s + ru u - rv v is regenerated on arcs that
    /// were generating and repumped on arcs that were pumping; the spill
    /// adjustment keeps the net outflow equal to the planned one, so every
    /// reservoir trajectory of the plan is reproduced exactly.
    pub fn flows(&self, t: usize, rho_up: f64, rho_down: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let arcs = self.gen[t].len();
        let mut g = Vec::with_capacity(arcs);
        let mut p = Vec::with_capacity(arcs);
        let mut z = Vec::with_capacity(arcs);
        for a in 0..arcs {
            let e = self.bids.spot[t][a] + rho_up * self.bids.up[t][a]
                - rho_down * self.bids.down[t][a];
            let eta = self.gen_eff[t][a];
            let zeta = self.inv_pump_eff[t][a];
            let (ga, pa) = if self.gen[t][a] > 0.0 {
                (
                    if eta > 0.0 { e.max(0.0) / eta } else { 0.0 },
                    if zeta > 0.0 { (-e).max(0.0) / zeta } else { 0.0 },
                )
            } else {
                (0.0, if zeta > 0.0 { (-e).max(0.0) / zeta } else { 0.0 })
            };
            let za = (self.spill[t][a] + (self.gen[t][a] - self.pump[t][a]) - (ga - pa)).max(0.0);
            g.push(ga);
            p.push(pa);
            z.push(za);
        }
        (g, p, z)
    }
}

/// Turns a complementarity-repaired individual-mode solution into the
/// explicit activation-contingent dispatch rule.
pub fn recover_policy(
    sol: &TraderSolution,
    ratings: &Ratings,
) -> Result<ContingentPolicy, TraderError> {
    let bids = match &sol.bids {
        Bids::Individual(b) => b.clone(),
        Bids::Collective(_) => {
            return Err(TraderError::Inconsistent(
                "closed-form recovery needs per-arc bids; collective solutions dispatch \
                 through the hourly truncated problem"
                    .into(),
            ));
        }
    };
    for t in 0..sol.flows.hours() {
        for a in 0..sol.flows.gen[t].len() {
            if sol.flows.gen[t][a] > 1e-9 && sol.flows.pump[t][a] > 1e-9 {
                return Err(TraderError::NotComplementary { hour: t, arc: a });
            }
        }
    }
    Ok(ContingentPolicy {
        bids,
        gen: sol.flows.gen.clone(),
        pump: sol.flows.pump.clone(),
        spill: sol.flows.spill.clone(),
        gen_eff: ratings.gen_eff.clone(),
        inv_pump_eff: ratings.inv_pump_eff.clone(),
    })
}

/// A day's committed collective bids plus the data needed to dispatch them
/// hour by hour.
#[derive(Debug, Clone)]
pub struct DayCommitment<'a> {
    pub cascade: &'a Cascade,
    pub ratings: &'a Ratings,
    pub start_level: Vec<f64>,
    pub inflows: Vec<Vec<f64>>,
    pub start_hour: usize,
    pub bids: CollectiveBids,
    pub mean_up: f64,
    pub mean_down: f64,
    pub water_values: Vec<f64>,
}

/// Flows chosen for one hour.
#[derive(Debug, Clone)]
pub struct HourDispatch {
    pub gen: Vec<f64>,
    pub pump: Vec<f64>,
    pub spill: Vec<f64>,
    pub objective: f64,
}

/// Dispatches hour `theta` of a committed day under the realized
/// activations. `past` holds the realized flows of hours 0..theta, which fix
/// the reservoir state. The LP keeps two trajectories over the remaining
/// hours: a robust one proving every later activation pattern stays
/// feasible, and a nominal one whose end-of-day water position is valued in
/// the objective. Infeasibility cannot occur for bids produced by
/// [`solve_day1_variant`] and is reported as a contract violation.
pub fn truncated_dispatch(
    day: &DayCommitment,
    past: &Flows,
    theta: usize,
    rho_up: f64,
    rho_down: f64,
) -> Result<HourDispatch, TraderError> {
    let h = day.ratings.hours();
    let r = day.cascade.num_reservoirs();
    let arcs = day.cascade.num_arcs();
    if theta >= h {
        return Err(TraderError::Dimension(format!("hour {theta} outside day of {h} hours")));
    }
    if past.hours() != theta {
        return Err(TraderError::Dimension(format!(
            "expected {theta} realized hours, got {}",
            past.hours()
        )));
    }
    if day.bids.spot.len() != h || day.bids.up.len() != h || day.bids.down.len() != h {
        return Err(TraderError::Dimension("bid series length != hours".into()));
    }
    if day.water_values.len() != r || day.start_level.len() != r {
        return Err(TraderError::Dimension("per-reservoir vectors != reservoir count".into()));
    }
    if day.inflows.len() != h || day.inflows.iter().any(|row| row.len() != r) {
        return Err(TraderError::Dimension("inflow table shape != hours x reservoirs".into()));
    }

    let sink = day.cascade.sink();
    let incidence = day.cascade.incidence();
    let mut theta_vals = day.water_values.clone();
    theta_vals[sink] = 0.0;

    // realized level right before hour theta
    let mut entry = day.start_level.clone();
    for tau in 0..theta {
        let net = past.net_outflow(tau);
        let delta = day.cascade.apply_incidence(&net);
        for n in 0..r {
            entry[n] += day.inflows[tau][n] + delta[n];
        }
    }

    let mut lp = LinearProgram::new();
    let robust = add_flows(&mut lp, day.ratings, theta..h, "");
    let nominal = add_flows(&mut lp, day.ratings, theta..h, "n");

    let arc_value: Vec<f64> = (0..arcs)
        .map(|a| (0..r).map(|n| theta_vals[n] * incidence[n][a]).sum())
        .collect();
    // hour-theta flows are valued directly; later hours through the nominal
    // trajectory
    for a in 0..arcs {
        if arc_value[a] == 0.0 {
            continue;
        }
        let w = arc_value[a] * robust.unit[a];
        lp.add_objective_coeff(robust.g[0][a], w);
        lp.add_objective_coeff(robust.p[0][a], -w);
        lp.add_objective_coeff(robust.z[0][a], w);
        for i in 1..h - theta {
            lp.add_objective_coeff(nominal.g[i][a], w);
            lp.add_objective_coeff(nominal.p[i][a], -w);
            lp.add_objective_coeff(nominal.z[i][a], w);
        }
    }

    for t in theta..h {
        let i = t - theta;
        let eta = &day.ratings.gen_eff[t];
        let zeta = &day.ratings.inv_pump_eff[t];
        if t == theta {
            // realized commitment for the dispatched hour
            let rhs = day.bids.spot[t] + rho_up * day.bids.up[t] - rho_down * day.bids.down[t];
            let terms: Vec<(VarId, f64)> = (0..arcs)
                .flat_map(|a| {
                    let u = robust.unit[a];
                    [(robust.g[i][a], eta[a] * u), (robust.p[i][a], -zeta[a] * u)]
                })
                .collect();
            lp.add_constraint(format!("dlv{t}"), &terms, Sense::Eq, rhs);
        } else {
            let rob_rhs = day.bids.spot[t] + day.bids.up[t];
            let terms: Vec<(VarId, f64)> = (0..arcs)
                .flat_map(|a| {
                    let u = robust.unit[a];
                    [(robust.g[i][a], eta[a] * u), (robust.p[i][a], -zeta[a] * u)]
                })
                .collect();
            lp.add_constraint(format!("dlv{t}"), &terms, Sense::Eq, rob_rhs);
            let nom_rhs = day.bids.spot[t] + day.mean_up * day.bids.up[t]
                - day.mean_down * day.bids.down[t];
            let nterms: Vec<(VarId, f64)> = (0..arcs)
                .flat_map(|a| {
                    let u = nominal.unit[a];
                    [(nominal.g[i][a], eta[a] * u), (nominal.p[i][a], -zeta[a] * u)]
                })
                .collect();
            lp.add_constraint(format!("ndlv{t}"), &nterms, Sense::Eq, nom_rhs);
        }
    }
    add_levels(&mut lp, day.cascade, &entry, &day.inflows, theta..h, day.start_hour, &robust, "");
    add_levels(&mut lp, day.cascade, &entry, &day.inflows, theta..h, day.start_hour, &nominal, "n");

    let first = lp.solve()?;
    match first.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(TraderError::DispatchInfeasible {
                hour: theta,
                detail: "committed bids leave no in-band dispatch; bids were not produced by \
                         a robust day plan"
                    .into(),
            });
        }
        LpStatus::Unbounded => {
            return Err(TraderError::Inconsistent(
                "capacity-bounded dispatch reported unbounded".into(),
            ));
        }
    }
    let objective = first.objective;
    let mut spills = robust.all_spill();
    spills.extend(nominal.all_spill());
    let sol = spill_min_resolve(&mut lp, first, &spills);

    let hour0 = |vars: &[VarId]| {
        vars.iter()
            .zip(&robust.unit)
            .map(|(v, u)| (sol.primal[v.index()] * u).max(0.0))
            .collect()
    };
    Ok(HourDispatch {
        gen: hour0(&robust.g[0]),
        pump: hour0(&robust.p[0]),
        spill: hour0(&robust.z[0]),
        objective,
    })
}
