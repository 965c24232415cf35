//! Brute-force ground truth for the one-day bidding problems: a single LP
//! over the complete tree of reserve-activation histories, with flows
//! indexed by activation history and delivery rows using each node's
//! realized activations. Used by tests to confirm that the reduced LPs and
//! the recovered dispatch policies lose nothing.

use crate::lpcore::{LinearProgram, LpError, LpStatus, Sense, VarId};
use crate::stochastic::ActivationModel;
use crate::trader::{
    validate_input, Bids, CollectiveBids, ContingentPolicy, IndividualBids, Mode, TraderInput,
};
use thiserror::Error;

/// Enumeration cap: 3^8 = 6561 leaf histories.
pub const MAX_TREE_HOURS: usize = 8;

/// Levels enter the LP in thousands of m3, mirroring the reduced builders.
const VOL_SCALE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("horizon of {0} hours exceeds the {MAX_TREE_HOURS}-hour enumeration cap")]
    HorizonTooLarge(usize),
    #[error("invalid activation model: {0}")]
    Model(#[from] crate::stochastic::StochasticError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("policy violates the scenario-tree constraints: {0}")]
    PolicyViolation(String),
    #[error("capacity-bounded tree problem reported unbounded")]
    Unbounded,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Complete ternary tree of activation histories. A node at level t
/// (0-based hour) encodes the activations of hours 0..=t as little-endian
/// trits of its index; branch order is fixed as none, up, down.
#[derive(Debug, Clone)]
pub struct ActivationTree {
    hours: usize,
    /// (probability, rho_up, rho_down) per branch
    branches: [(f64, f64, f64); 3],
}

pub fn enumerate_activation_tree(
    hours: usize,
    model: &ActivationModel,
) -> Result<ActivationTree, OracleError> {
    if hours == 0 || hours > MAX_TREE_HOURS {
        return Err(OracleError::HorizonTooLarge(hours));
    }
    model.validate()?;
    Ok(ActivationTree {
        hours,
        branches: [
            (model.p_none, 0.0, 0.0),
            (model.p_up, 1.0, 0.0),
            (model.p_down, 0.0, 1.0),
        ],
    })
}

impl ActivationTree {
    pub fn hours(&self) -> usize {
        self.hours
    }

    /// Nodes at level t: one per activation history of length t+1.
    pub fn num_nodes(&self, t: usize) -> usize {
        3usize.pow(t as u32 + 1)
    }

    pub fn num_leaves(&self) -> usize {
        self.num_nodes(self.hours - 1)
    }

    /// The hour-t activation encoded in a node index of level >= t.
    pub fn node_activation(&self, t: usize, node: usize) -> (f64, f64) {
        let trit = (node / 3usize.pow(t as u32)) % 3;
        let (_, up, down) = self.branches[trit];
        (up, down)
    }

    /// The level-(t-1) ancestor of a level-t node (its history prefix).
    pub fn parent(&self, t: usize, node: usize) -> usize {
        node % 3usize.pow(t as u32)
    }

    pub fn leaf_sequence(&self, leaf: usize) -> Vec<(f64, f64)> {
        (0..self.hours).map(|t| self.node_activation(t, leaf)).collect()
    }

    pub fn leaf_probability(&self, leaf: usize) -> f64 {
        let mut key = leaf;
        let mut p = 1.0;
        for _ in 0..self.hours {
            p *= self.branches[key % 3].0;
            key /= 3;
        }
        p
    }
}

/// Tree solution: bids are day-ahead constants, flows live on tree nodes.
#[derive(Debug, Clone)]
pub struct ExtensiveSolution {
    pub bids: Bids,
    /// [hour][node][arc]; node indexes level-t histories
    pub gen: Vec<Vec<Vec<f64>>>,
    pub pump: Vec<Vec<Vec<f64>>>,
    pub spill: Vec<Vec<Vec<f64>>>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub enum OracleOutcome {
    Optimal(ExtensiveSolution),
    Infeasible,
}

impl OracleOutcome {
    pub fn optimal(&self) -> Option<&ExtensiveSolution> {
        match self {
            OracleOutcome::Optimal(s) => Some(s),
            OracleOutcome::Infeasible => None,
        }
    }
}

/// Solves the one-day bidding problem exactly over the activation tree.
/// Bids (per arc or collective scalars) are chosen before any activation is
/// known; flows adapt to the activation history. Each node's delivery row
/// uses its realized activations, reservoir bands apply along every path,
/// and the end-of-day floor binds at every leaf. The objective prices the
/// bids at the expected coefficients; activations enter only through the
/// constraints.
pub fn solve_extensive_trader(
    input: &TraderInput,
    mode: Mode,
    tree: &ActivationTree,
) -> Result<OracleOutcome, OracleError> {
    let h = validate_input(input).map_err(|e| OracleError::Dimension(e.to_string()))?;
    if h != tree.hours {
        return Err(OracleError::Dimension(format!(
            "tree covers {} hours, day has {h}",
            tree.hours
        )));
    }
    let target = input.target_level.as_ref().ok_or_else(|| {
        OracleError::Dimension("tree problem requires end-of-day targets".into())
    })?;
    let cascade = input.cascade;
    let ratings = input.ratings;
    let arcs = cascade.num_arcs();
    let sink = cascade.sink();
    let incidence = cascade.incidence();
    let coef = &input.coefficients;

    let mut lp = LinearProgram::new();
    let width = match mode {
        Mode::Individual => arcs,
        Mode::Collective => 1,
    };
    let mut s_vars: Vec<Vec<VarId>> = Vec::new();
    let mut u_vars: Vec<Vec<VarId>> = Vec::new();
    let mut v_vars: Vec<Vec<VarId>> = Vec::new();
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

    // node-indexed flows and levels
    let mut g_vars: Vec<Vec<Vec<VarId>>> = Vec::new();
    let mut p_vars: Vec<Vec<Vec<VarId>>> = Vec::new();
    let mut z_vars: Vec<Vec<Vec<VarId>>> = Vec::new();
    let mut level_vars: Vec<Vec<Vec<VarId>>> = Vec::new(); // [t][node][non-sink slot]
    for t in 0..h {
        let nodes = tree.num_nodes(t);
        let lo = cascade.lower.at(input.start_hour + t);
        let hi = cascade.upper.at(input.start_hour + t);
        let (mut gt, mut pt, mut zt, mut lt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for node in 0..nodes {
            let g: Vec<VarId> = (0..arcs)
                .map(|a| lp.add_var(format!("g{t}_{node}_{a}"), 0.0, ratings.gen_cap[t][a]))
                .collect();
            let p: Vec<VarId> = (0..arcs)
                .map(|a| lp.add_var(format!("p{t}_{node}_{a}"), 0.0, ratings.pump_cap[t][a]))
                .collect();
            let z: Vec<VarId> = (0..arcs)
                .map(|a| lp.add_var(format!("z{t}_{node}_{a}"), 0.0, f64::INFINITY))
                .collect();

            let (rho_up, rho_down) = tree.node_activation(t, node);
            match mode {
                Mode::Individual => {
                    for a in 0..arcs {
                        lp.add_constraint(
                            format!("dlv{t}_{node}_{a}"),
                            &[
                                (s_vars[t][a], 1.0),
                                (u_vars[t][a], rho_up),
                                (v_vars[t][a], -rho_down),
                                (g[a], -ratings.gen_eff[t][a]),
                                (p[a], ratings.inv_pump_eff[t][a]),
                            ],
                            Sense::Eq,
                            0.0,
                        );
                    }
                }
                Mode::Collective => {
                    let mut terms = vec![
                        (s_vars[t][0], 1.0),
                        (u_vars[t][0], rho_up),
                        (v_vars[t][0], -rho_down),
                    ];
                    for a in 0..arcs {
                        terms.push((g[a], -ratings.gen_eff[t][a]));
                        terms.push((p[a], ratings.inv_pump_eff[t][a]));
                    }
                    lp.add_constraint(format!("dlv{t}_{node}"), &terms, Sense::Eq, 0.0);
                }
            }

            // levels per non-sink reservoir, chained to the parent history
            let mut lvl = Vec::new();
            for n in (0..cascade.num_reservoirs()).filter(|&n| n != sink) {
                let slot = lvl.len();
                let ub = if hi[n].is_finite() { hi[n] * VOL_SCALE } else { f64::INFINITY };
                let mut lb = lo[n] * VOL_SCALE;
                if t == h - 1 {
                    lb = lb.max(target[n] * VOL_SCALE);
                }
                let lv = lp.add_var(format!("l{t}_{node}_{n}"), lb, ub);
                let mut terms: Vec<(VarId, f64)> = vec![(lv, 1.0)];
                if t > 0 {
                    terms.push((level_vars[t - 1][tree.parent(t, node)][slot], -1.0));
                }
                for a in 0..arcs {
                    let m = incidence[n][a];
                    if m != 0.0 {
                        terms.push((g[a], -m * VOL_SCALE));
                        terms.push((p[a], m * VOL_SCALE));
                        terms.push((z[a], -m * VOL_SCALE));
                    }
                }
                let mut rhs = input.inflows[t][n] * VOL_SCALE;
                if t == 0 {
                    rhs += input.start_level[n] * VOL_SCALE;
                }
                lp.add_constraint(format!("bal{t}_{node}_{n}"), &terms, Sense::Eq, rhs);
                lvl.push(lv);
            }

            gt.push(g);
            pt.push(p);
            zt.push(z);
            lt.push(lvl);
        }
        g_vars.push(gt);
        p_vars.push(pt);
        z_vars.push(zt);
        level_vars.push(lt);
    }

    let sol = lp.solve()?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(OracleOutcome::Infeasible),
        LpStatus::Unbounded => return Err(OracleError::Unbounded),
    }

    let read = |v: &VarId| sol.primal[v.index()];
    let bids = match mode {
        Mode::Individual => Bids::Individual(IndividualBids {
            spot: s_vars.iter().map(|r| r.iter().map(&read).collect()).collect(),
            up: u_vars.iter().map(|r| r.iter().map(|v| read(v).max(0.0)).collect()).collect(),
            down: v_vars.iter().map(|r| r.iter().map(|v| read(v).max(0.0)).collect()).collect(),
        }),
        Mode::Collective => Bids::Collective(CollectiveBids {
            spot: s_vars.iter().map(|r| read(&r[0])).collect(),
            up: u_vars.iter().map(|r| read(&r[0]).max(0.0)).collect(),
            down: v_vars.iter().map(|r| read(&r[0]).max(0.0)).collect(),
        }),
    };
    let grid = |vars: &Vec<Vec<Vec<VarId>>>| -> Vec<Vec<Vec<f64>>> {
        vars.iter()
            .map(|nodes| {
                nodes.iter().map(|r| r.iter().map(|v| read(v).max(0.0)).collect()).collect()
            })
            .collect()
    };
    Ok(OracleOutcome::Optimal(ExtensiveSolution {
        bids,
        gen: grid(&g_vars),
        pump: grid(&p_vars),
        spill: grid(&z_vars),
        objective: sol.objective,
    }))
}

/// Replays a recovered dispatch policy along every activation history of the
/// tree and checks it against the exact constraints the tree LP enforces:
/// rating caps, per-arc delivery, reservoir bands, and the end-of-day floor.
/// Returns the policy's objective (the priced bids), which by construction
/// any feasible injection shares with its originating reduced solution.
pub fn verify_policy(
    input: &TraderInput,
    tree: &ActivationTree,
    policy: &ContingentPolicy,
) -> Result<f64, OracleError> {
    let h = validate_input(input).map_err(|e| OracleError::Dimension(e.to_string()))?;
    if h != tree.hours || policy.hours() != h {
        return Err(OracleError::Dimension("policy/tree/day horizons differ".into()));
    }
    let target = input.target_level.as_ref().ok_or_else(|| {
        OracleError::Dimension("verification requires end-of-day targets".into())
    })?;
    let cascade = input.cascade;
    let ratings = input.ratings;
    let arcs = cascade.num_arcs();
    let sink = cascade.sink();
    let bids = policy.bids();
    let tol = |x: f64| 1e-7 * (1.0 + x.abs());

    for leaf in 0..tree.num_leaves() {
        let mut level = input.start_level.clone();
        for (t, (rho_up, rho_down)) in tree.leaf_sequence(leaf).into_iter().enumerate() {
            let (g, p, z) = policy.flows(t, rho_up, rho_down);
            for a in 0..arcs {
                if g[a] < -1e-9 || g[a] > ratings.gen_cap[t][a] + tol(ratings.gen_cap[t][a]) {
                    return Err(OracleError::PolicyViolation(format!(
                        "generation cap on arc {a}, hour {t}: {}",
                        g[a]
                    )));
                }
                if p[a] < -1e-9 || p[a] > ratings.pump_cap[t][a] + tol(ratings.pump_cap[t][a]) {
                    return Err(OracleError::PolicyViolation(format!(
                        "pump cap on arc {a}, hour {t}: {}",
                        p[a]
                    )));
                }
                if z[a] < -1e-9 {
                    return Err(OracleError::PolicyViolation(format!(
                        "negative spill on arc {a}, hour {t}"
                    )));
                }
                let committed =
                    bids.spot[t][a] + rho_up * bids.up[t][a] - rho_down * bids.down[t][a];
                let made = ratings.gen_eff[t][a] * g[a] - ratings.inv_pump_eff[t][a] * p[a];
                if (made - committed).abs() > tol(committed) {
                    return Err(OracleError::PolicyViolation(format!(
                        "delivery on arc {a}, hour {t}: made {made}, committed {committed}"
                    )));
                }
            }
            let net: Vec<f64> = (0..arcs).map(|a| g[a] - p[a] + z[a]).collect();
            let delta = cascade.apply_incidence(&net);
            let lo = cascade.lower.at(input.start_hour + t);
            let hi = cascade.upper.at(input.start_hour + t);
            for n in 0..cascade.num_reservoirs() {
                level[n] += input.inflows[t][n] + delta[n];
                if n == sink {
                    continue;
                }
                if level[n] < lo[n] - tol(lo[n]) || level[n] > hi[n] + tol(hi[n]) {
                    return Err(OracleError::PolicyViolation(format!(
                        "reservoir {n} leaves [{}, {}] at hour {t}: {}",
                        lo[n], hi[n], level[n]
                    )));
                }
            }
        }
        for n in (0..cascade.num_reservoirs()).filter(|&n| n != sink) {
            if level[n] < target[n] - tol(target[n]) {
                return Err(OracleError::PolicyViolation(format!(
                    "end-of-day level of reservoir {n} is {} against target {}",
                    level[n], target[n]
                )));
            }
        }
    }

    let c = &input.coefficients;
    let objective = (0..h)
        .map(|t| {
            (0..arcs)
                .map(|a| {
                    c.spot[t] * bids.spot[t][a]
                        + c.reserve_up[t] * bids.up[t][a]
                        + c.reserve_down[t] * bids.down[t][a]
                })
                .sum::<f64>()
        })
        .sum();
    Ok(objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{BoundProfile, Cascade, Ratings};
    use crate::stochastic::BidCoefficients;
    use crate::trader::{
        recover_policy, repair_complementarity, solve_reduced_collective,
        solve_reduced_individual, TraderOutcome,
    };
    use proptest::prelude::*;

    fn model() -> ActivationModel {
        ActivationModel { p_none: 0.98, p_up: 0.01, p_down: 0.01 }
    }

    #[test]
    fn single_hour_tree() {
        let tree = enumerate_activation_tree(1, &model()).unwrap();
        assert_eq!(tree.num_leaves(), 3);
        let probs: Vec<f64> = (0..3).map(|l| tree.leaf_probability(l)).collect();
        assert_eq!(probs, vec![0.98, 0.01, 0.01]);
        assert_eq!(tree.leaf_sequence(1), vec![(1.0, 0.0)]);
        assert_eq!(tree.leaf_sequence(2), vec![(0.0, 1.0)]);
    }

    #[test]
    fn two_hour_probabilities_multiply() {
        let tree = enumerate_activation_tree(2, &model()).unwrap();
        assert_eq!(tree.num_leaves(), 9);
        // leaf 0 = (none, none), leaf 4 = (up, up), leaf 5 = (down, up)
        assert!((tree.leaf_probability(0) - 0.98 * 0.98).abs() < 1e-15);
        assert!((tree.leaf_probability(4) - 0.01 * 0.01).abs() < 1e-15);
        assert!((tree.leaf_probability(5) - 0.01 * 0.01).abs() < 1e-15);
    }

    #[test]
    fn leaf_probabilities_sum_to_one() {
        let tree = enumerate_activation_tree(3, &model()).unwrap();
        let total: f64 = (0..tree.num_leaves()).map(|l| tree.leaf_probability(l)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn horizon_cap_enforced() {
        assert!(matches!(
            enumerate_activation_tree(9, &model()),
            Err(OracleError::HorizonTooLarge(9))
        ));
        assert!(enumerate_activation_tree(8, &model()).is_ok());
    }

    fn tiny_cascade() -> Cascade {
        Cascade::new(
            vec!["res".into(), "out".into()],
            vec!["a".into()],
            vec![(0, 1)],
            vec![50.0, 0.0],
            BoundProfile::Constant(vec![0.0, 0.0]),
            BoundProfile::Constant(vec![100.0, f64::INFINITY]),
        )
    }

    fn tiny_input<'a>(c: &'a Cascade, r: &'a Ratings) -> TraderInput<'a> {
        TraderInput {
            cascade: c,
            ratings: r,
            start_level: vec![50.0, 0.0],
            target_level: Some(vec![40.0, 0.0]),
            inflows: vec![vec![0.0, 0.0]],
            coefficients: BidCoefficients {
                spot: vec![1.0],
                reserve_up: vec![0.5],
                reserve_down: vec![0.3],
                mean_up: 0.01,
                mean_down: 0.01,
            },
            water_values: None,
            start_hour: 0,
        }
    }

    #[test]
    fn tree_optimum_matches_reduced_lp() {
        let c = tiny_cascade();
        let r = Ratings::constant(1, vec![10.0], vec![0.0], vec![1.0], vec![1.0]);
        let input = tiny_input(&c, &r);
        let tree = enumerate_activation_tree(1, &model()).unwrap();
        let ind = solve_extensive_trader(&input, Mode::Individual, &tree).unwrap();
        let col = solve_extensive_trader(&input, Mode::Collective, &tree).unwrap();
        assert!((ind.optimal().unwrap().objective - 13.0).abs() < 1e-6);
        assert!((col.optimal().unwrap().objective - 13.0).abs() < 1e-6);
    }

    #[test]
    fn worthless_reserves_reduce_to_single_scenario() {
        // strongly negative reserve coefficients force u = v = 0, making all
        // tree nodes identical; the optimum must match the reduced LP, which
        // then is a plain deterministic dispatch problem
        let c = tiny_cascade();
        let r = Ratings::constant(1, vec![10.0], vec![0.0], vec![1.0], vec![1.0]);
        let mut input = tiny_input(&c, &r);
        input.coefficients.reserve_up = vec![-1000.0];
        input.coefficients.reserve_down = vec![-1000.0];
        let tree = enumerate_activation_tree(1, &model()).unwrap();
        let tree_sol = solve_extensive_trader(&input, Mode::Individual, &tree).unwrap();
        let reduced = solve_reduced_individual(&input).unwrap().into_optimal().unwrap();
        let got = tree_sol.optimal().unwrap().objective;
        assert!((got - 10.0).abs() < 1e-6, "expected pure spot revenue, got {got}");
        assert!((got - reduced.objective).abs() < 1e-6);
    }

    #[test]
    fn infeasible_verdicts_agree() {
        let c = tiny_cascade();
        let r = Ratings::constant(1, vec![10.0], vec![0.0], vec![1.0], vec![1.0]);
        let mut input = tiny_input(&c, &r);
        input.target_level = Some(vec![60.0, 0.0]);
        let tree = enumerate_activation_tree(1, &model()).unwrap();
        assert!(matches!(
            solve_extensive_trader(&input, Mode::Individual, &tree).unwrap(),
            OracleOutcome::Infeasible
        ));
        assert!(matches!(
            solve_reduced_individual(&input).unwrap(),
            TraderOutcome::Infeasible
        ));
    }

    /// Chain cascade with a pumped upper arc; zero-flow feasible by
    /// construction (ample bounds, target below start).
    fn random_instance(
        hours: usize,
        gen_cap: f64,
        pump_cap: f64,
        eta: f64,
        zeta_margin: f64,
        inflow: f64,
        up_coef: f64,
        down_coef: f64,
        spot0: f64,
    ) -> (Cascade, Ratings, Vec<Vec<f64>>, BidCoefficients) {
        let zeta = eta * zeta_margin;
        let c = Cascade::new(
            vec!["a".into(), "b".into(), "out".into()],
            vec!["ab".into(), "bo".into()],
            vec![(0, 1), (1, 2)],
            vec![500.0, 300.0, 0.0],
            BoundProfile::Constant(vec![0.0, 0.0, 0.0]),
            BoundProfile::Constant(vec![5000.0, 5000.0, f64::INFINITY]),
        );
        let r = Ratings::constant(
            hours,
            vec![gen_cap, gen_cap * 1.3],
            vec![pump_cap, 0.0],
            vec![eta, eta * 0.8],
            vec![zeta, zeta],
        );
        let inflows = vec![vec![inflow, inflow * 0.5, 0.0]; hours];
        let coeffs = BidCoefficients {
            spot: (0..hours).map(|t| spot0 + 0.1 * t as f64).collect(),
            reserve_up: vec![up_coef; hours],
            reserve_down: vec![down_coef; hours],
            mean_up: 0.01,
            mean_down: 0.01,
        };
        (c, r, inflows, coeffs)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn reduced_lps_lose_nothing_against_the_tree(
            hours in 1usize..4,
            gen_cap in 1.0f64..30.0,
            pump_cap in 0.0f64..20.0,
            eta in 0.2f64..1.0,
            margin in 1.05f64..2.0,
            inflow in 0.0f64..20.0,
            up_coef in 0.0f64..2.0,
            down_coef in 0.0f64..2.0,
            spot0 in 0.5f64..3.0,
        ) {
            let (c, r, inflows, coeffs) = random_instance(
                hours, gen_cap, pump_cap, eta, margin, inflow, up_coef, down_coef, spot0,
            );
            let input = TraderInput {
                cascade: &c,
                ratings: &r,
                start_level: vec![500.0, 300.0, 0.0],
                target_level: Some(vec![400.0, 200.0, 0.0]),
                inflows,
                coefficients: coeffs,
                water_values: None,
                start_hour: 0,
            };
            let tree = enumerate_activation_tree(hours, &model()).unwrap();
            let oracle_ind = solve_extensive_trader(&input, Mode::Individual, &tree)
                .unwrap().optimal().unwrap().objective;
            let oracle_col = solve_extensive_trader(&input, Mode::Collective, &tree)
                .unwrap().optimal().unwrap().objective;
            let red_ind = solve_reduced_individual(&input)
                .unwrap().into_optimal().unwrap().objective;
            let red_col = solve_reduced_collective(&input)
                .unwrap().into_optimal().unwrap().objective;
            let scale = 1.0 + oracle_ind.abs();
            prop_assert!((oracle_ind - red_ind).abs() < 1e-6 * scale,
                "individual: tree {oracle_ind} vs reduced {red_ind}");
            prop_assert!((oracle_col - red_col).abs() < 1e-6 * scale,
                "collective: tree {oracle_col} vs reduced {red_col}");
            prop_assert!((oracle_ind - oracle_col).abs() < 1e-6 * scale,
                "modes differ: individual {oracle_ind} vs collective {oracle_col}");
        }

        #[test]
        fn tree_optima_respect_the_worst_case_cut(
            hours in 1usize..3,
            gen_cap in 1.0f64..30.0,
            pump_cap in 0.5f64..20.0,
            eta in 0.2f64..1.0,
            margin in 1.05f64..2.0,
            up_coef in 0.0f64..2.0,
            down_coef in 0.0f64..2.0,
        ) {
            let (c, r, inflows, coeffs) = random_instance(
                hours, gen_cap, pump_cap, eta, margin, 5.0, up_coef, down_coef, 1.0,
            );
            let input = TraderInput {
                cascade: &c,
                ratings: &r,
                start_level: vec![500.0, 300.0, 0.0],
                target_level: Some(vec![400.0, 200.0, 0.0]),
                inflows,
                coefficients: coeffs,
                water_values: None,
                start_hour: 0,
            };
            let tree = enumerate_activation_tree(hours, &model()).unwrap();
            let sol = solve_extensive_trader(&input, Mode::Individual, &tree).unwrap();
            let sol = sol.optimal().unwrap();
            let Bids::Individual(b) = &sol.bids else { panic!("wrong mode") };
            // feasibility under the all-down history forces the bids to
            // stay dispatchable even when every down reserve is called
            for t in 0..hours {
                for a in 0..2 {
                    let floor = -r.inv_pump_eff[t][a] * r.pump_cap[t][a];
                    let slack = b.spot[t][a] - b.down[t][a] - floor;
                    prop_assert!(slack > -1e-6 * (1.0 + floor.abs()),
                        "cut violated at hour {t}, arc {a}: slack {slack}");
                }
            }
        }

        #[test]
        fn recovered_policy_is_tree_feasible_at_full_value(
            hours in 1usize..4,
            gen_cap in 1.0f64..30.0,
            pump_cap in 0.0f64..20.0,
            eta in 0.2f64..1.0,
            margin in 1.05f64..2.0,
            inflow in 0.0f64..20.0,
            up_coef in 0.0f64..2.0,
            down_coef in 0.0f64..2.0,
        ) {
            let (c, r, inflows, coeffs) = random_instance(
                hours, gen_cap, pump_cap, eta, margin, inflow, up_coef, down_coef, 1.0,
            );
            let input = TraderInput {
                cascade: &c,
                ratings: &r,
                start_level: vec![500.0, 300.0, 0.0],
                target_level: Some(vec![400.0, 200.0, 0.0]),
                inflows,
                coefficients: coeffs,
                water_values: None,
                start_hour: 0,
            };
            let reduced = solve_reduced_individual(&input).unwrap().into_optimal().unwrap();
            let repaired = repair_complementarity(&reduced, &r);
            let policy = recover_policy(&repaired, &r).unwrap();
            let tree = enumerate_activation_tree(hours, &model()).unwrap();
            let injected = verify_policy(&input, &tree, &policy).unwrap();
            prop_assert!((injected - reduced.objective).abs()
                < 1e-6 * (1.0 + reduced.objective.abs()),
                "injected value {injected} vs reduced optimum {}", reduced.objective);
        }
    }
}
