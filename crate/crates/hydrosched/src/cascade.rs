//! Reservoir network topology, physical ratings and the constructive
//! spill mapping used to absorb water-balance deficits.

use thiserror::Error;

/// Per-reservoir bound profile. `Constant` applies at every hour; `Hourly`
/// cycles through its rows when the horizon is longer than the profile.
#[derive(Debug, Clone)]
pub enum BoundProfile {
    Constant(Vec<f64>),
    Hourly(Vec<Vec<f64>>),
}

impl BoundProfile {
    /// Bounds for absolute hour `t` (one entry per reservoir).
    pub fn at(&self, t: usize) -> &[f64] {
        match self {
            BoundProfile::Constant(v) => v,
            BoundProfile::Hourly(rows) => &rows[t % rows.len()],
        }
    }

    fn reservoir_count(&self) -> usize {
        match self {
            BoundProfile::Constant(v) => v.len(),
            BoundProfile::Hourly(rows) => rows.first().map_or(0, |r| r.len()),
        }
    }

    fn hours(&self) -> usize {
        match self {
            BoundProfile::Constant(_) => 1,
            BoundProfile::Hourly(rows) => rows.len(),
        }
    }
}

/// Reservoir network. Reservoirs are indexed `0..R` with the dummy sink
/// (the downstream river) always last; arcs are directed reservoir pairs.
/// Upper bounds use `f64::INFINITY` as the unbounded marker.
#[derive(Debug, Clone)]
pub struct Cascade {
    pub reservoir_names: Vec<String>,
    pub arc_names: Vec<String>,
    arcs: Vec<(usize, usize)>,
    /// Initial filling levels [m^3].
    pub w0: Vec<f64>,
    pub lower: BoundProfile,
    pub upper: BoundProfile,
    incidence: Vec<Vec<f64>>,
}

impl Cascade {
    pub fn new(
        reservoir_names: Vec<String>,
        arc_names: Vec<String>,
        arcs: Vec<(usize, usize)>,
        w0: Vec<f64>,
        lower: BoundProfile,
        upper: BoundProfile,
    ) -> Self {
        let r = reservoir_names.len();
        let mut incidence = vec![vec![0.0; arcs.len()]; r];
        for (a, &(from, to)) in arcs.iter().enumerate() {
            if from < r {
                incidence[from][a] -= 1.0;
            }
            if to < r {
                incidence[to][a] += 1.0;
            }
        }
        Cascade {
            reservoir_names,
            arc_names,
            arcs,
            w0,
            lower,
            upper,
            incidence,
        }
    }

    pub fn num_reservoirs(&self) -> usize {
        self.reservoir_names.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.len()
    }

    /// Index of the dummy sink (always the last reservoir).
    pub fn sink(&self) -> usize {
        self.num_reservoirs() - 1
    }

    pub fn arcs(&self) -> &[(usize, usize)] {
        &self.arcs
    }

    /// R x A incidence matrix: column `a` has -1 at the tail and +1 at the
    /// head of arc `a`.
    pub fn incidence(&self) -> &[Vec<f64>] {
        &self.incidence
    }

    /// M . f for a per-arc flow vector.
    pub fn apply_incidence(&self, flow: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_reservoirs()];
        for (a, &(from, to)) in self.arcs.iter().enumerate() {
            out[from] -= flow[a];
            out[to] += flow[a];
        }
        out
    }

    fn arcs_from(&self, r: usize) -> impl Iterator<Item = usize> + '_ {
        self.arcs
            .iter()
            .enumerate()
            .filter(move |(_, &(from, _))| from == r)
            .map(|(a, _)| a)
    }
}

/// Per-hour per-arc generator/pump ratings. Flow caps are volumes per hour
/// [m^3]; efficiencies convert volume to energy [MWh/m^3].
#[derive(Debug, Clone)]
pub struct Ratings {
    pub gen_cap: Vec<Vec<f64>>,
    pub pump_cap: Vec<Vec<f64>>,
    pub gen_eff: Vec<Vec<f64>>,
    pub inv_pump_eff: Vec<Vec<f64>>,
}

impl Ratings {
    /// Same ratings at every hour of the day.
    pub fn constant(
        hours: usize,
        gen_cap: Vec<f64>,
        pump_cap: Vec<f64>,
        gen_eff: Vec<f64>,
        inv_pump_eff: Vec<f64>,
    ) -> Self {
        Ratings {
            gen_cap: vec![gen_cap; hours],
            pump_cap: vec![pump_cap; hours],
            gen_eff: vec![gen_eff; hours],
            inv_pump_eff: vec![inv_pump_eff; hours],
        }
    }

    pub fn hours(&self) -> usize {
        self.gen_cap.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.gen_cap.first().map_or(0, |r| r.len())
    }

    /// Ratings restricted to the given hour range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Ratings {
        Ratings {
            gen_cap: self.gen_cap[range.clone()].to_vec(),
            pump_cap: self.pump_cap[range.clone()].to_vec(),
            gen_eff: self.gen_eff[range.clone()].to_vec(),
            inv_pump_eff: self.inv_pump_eff[range].to_vec(),
        }
    }

    /// Same hour count, read cyclically starting at `offset`.
    pub fn rotated(&self, offset: usize) -> Ratings {
        let h = self.hours();
        let cycle = |grid: &Vec<Vec<f64>>| (0..h).map(|t| grid[(offset + t) % h].clone()).collect();
        Ratings {
            gen_cap: cycle(&self.gen_cap),
            pump_cap: cycle(&self.pump_cap),
            gen_eff: cycle(&self.gen_eff),
            inv_pump_eff: cycle(&self.inv_pump_eff),
        }
    }
}

/// Outcome of structural validation; empty `violations` means valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("reservoir {0} is the sink; no path required")]
    PathFromSink(usize),
    #[error("no directed path from reservoir {0} to the sink")]
    NoPath(usize),
    #[error("deficit must be nonpositive, got h[{0}] = {1}")]
    PositiveDeficit(usize, f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Checks every structural assumption the optimization models rely on.
/// Returns a report rather than failing fast so configs can list every
/// problem at once.
pub fn validate_cascade(c: &Cascade, ratings: &Ratings) -> ValidationReport {
    let mut v = Vec::new();
    let r = c.num_reservoirs();
    let a = c.num_arcs();

    if r < 2 {
        v.push("cascade needs at least one reservoir plus the sink".to_string());
        return ValidationReport { violations: v };
    }
    if c.w0.len() != r {
        v.push(format!("initial levels have {} entries, expected {}", c.w0.len(), r));
    }

    for (i, &(from, to)) in c.arcs.iter().enumerate() {
        if from >= r || to >= r {
            v.push(format!("arc {i} references a missing reservoir"));
        } else if from == to {
            v.push(format!("arc {i} is a self-loop"));
        }
    }
    if !v.is_empty() {
        return ValidationReport { violations: v };
    }

    // Kahn's algorithm; leftovers mean a directed cycle.
    let mut indeg = vec![0usize; r];
    for &(_, to) in &c.arcs {
        indeg[to] += 1;
    }
    let mut queue: Vec<usize> = (0..r).filter(|&n| indeg[n] == 0).collect();
    let mut seen = 0;
    while let Some(n) = queue.pop() {
        seen += 1;
        for &(from, to) in &c.arcs {
            if from == n {
                indeg[to] -= 1;
                if indeg[to] == 0 {
                    queue.push(to);
                }
            }
        }
    }
    if seen != r {
        v.push("not acyclic".to_string());
    }

    let sink = c.sink();
    for n in 0..r {
        let outdeg = c.arcs_from(n).count();
        if n == sink && outdeg > 0 {
            v.push("sink has outgoing arcs".to_string());
        }
        if n != sink && outdeg == 0 {
            v.push(format!(
                "reservoir '{}' has no outgoing arc",
                c.reservoir_names[n]
            ));
        }
    }

    for col in 0..a {
        let neg = (0..r).filter(|&row| c.incidence[row][col] == -1.0).count();
        let pos = (0..r).filter(|&row| c.incidence[row][col] == 1.0).count();
        if neg != 1 || pos != 1 {
            v.push(format!("incidence column {col} is not a (-1,+1) pair"));
        }
    }

    if ratings.num_arcs() != a {
        v.push(format!(
            "ratings cover {} arcs, cascade has {}",
            ratings.num_arcs(),
            a
        ));
        return ValidationReport { violations: v };
    }
    for t in 0..ratings.hours() {
        for arc in 0..a {
            let (gc, pc) = (ratings.gen_cap[t][arc], ratings.pump_cap[t][arc]);
            let (eta, zeta) = (ratings.gen_eff[t][arc], ratings.inv_pump_eff[t][arc]);
            if gc < 0.0 || pc < 0.0 || eta < 0.0 || zeta < 0.0 {
                v.push(format!("negative rating on arc {arc} at hour {t}"));
            }
            if pc > 0.0 {
                if c.arcs[arc].1 == sink {
                    v.push(format!("pump into sink on arc '{}'", c.arc_names[arc]));
                }
                if eta >= zeta {
                    v.push(format!(
                        "arc '{}' hour {t}: generation efficiency must be below inverse pumping efficiency",
                        c.arc_names[arc]
                    ));
                }
            }
        }
    }

    if c.lower.reservoir_count() != r || c.upper.reservoir_count() != r {
        v.push("bound profiles do not match reservoir count".to_string());
    } else {
        let span = c.lower.hours().max(c.upper.hours());
        for t in 0..span {
            let (lo, hi) = (c.lower.at(t), c.upper.at(t));
            for n in 0..r {
                if lo[n] > hi[n] {
                    v.push(format!(
                        "lower bound exceeds upper bound for reservoir '{}' at hour {t}",
                        c.reservoir_names[n]
                    ));
                }
            }
            if lo[sink] != 0.0 {
                v.push(format!("sink lower bound must be 0 at hour {t}"));
            }
            if hi[sink].is_finite() {
                v.push(format!("sink upper bound must be unbounded at hour {t}"));
            }
        }
    }

    ValidationReport { violations: v }
}

/// One simple directed path from `r` to the sink, as arc indices. Among all
/// such paths the lexicographically smallest arc-id sequence is returned,
/// which makes downstream constructions deterministic.
pub fn path_to_sink(c: &Cascade, r: usize) -> Result<Vec<usize>, CascadeError> {
    if r == c.sink() {
        return Err(CascadeError::PathFromSink(r));
    }
    let mut path = Vec::new();
    let mut node = r;
    // In a valid cascade every walk ends at the unique sink, so greedily
    // taking the smallest outgoing arc id yields the lexicographic minimum.
    while node != c.sink() {
        match c.arcs_from(node).min() {
            Some(a) => {
                path.push(a);
                node = c.arcs[a].1;
            }
            None => return Err(CascadeError::NoPath(r)),
        }
        if path.len() > c.num_arcs() {
            return Err(CascadeError::NoPath(r));
        }
    }
    Ok(path)
}

/// Given per-non-sink-reservoir deficits `h <= 0`, constructs spills
/// `z >= 0` with `M z = [h; -1'h]`: each reservoir's deficit is routed
/// along one simple path to the sink and the path flows superposed.
pub fn spill_to_match(c: &Cascade, h: &[f64]) -> Result<Vec<f64>, CascadeError> {
    if h.len() != c.num_reservoirs() - 1 {
        return Err(CascadeError::Dimension(format!(
            "expected {} deficits, got {}",
            c.num_reservoirs() - 1,
            h.len()
        )));
    }
    for (r, &hr) in h.iter().enumerate() {
        if hr > 0.0 {
            return Err(CascadeError::PositiveDeficit(r, hr));
        }
    }
    let mut z = vec![0.0; c.num_arcs()];
    for (r, &hr) in h.iter().enumerate() {
        if hr == 0.0 {
            continue;
        }
        for a in path_to_sink(c, r)? {
            z[a] += -hr;
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain(levels: &[f64]) -> Cascade {
        // 0 -> 1 -> ... -> sink
        let r = levels.len();
        let arcs: Vec<(usize, usize)> = (0..r - 1).map(|i| (i, i + 1)).collect();
        Cascade::new(
            (0..r).map(|i| format!("r{i}")).collect(),
            (0..r - 1).map(|i| format!("a{i}")).collect(),
            arcs,
            levels.to_vec(),
            BoundProfile::Constant(vec![0.0; r]),
            BoundProfile::Constant({
                let mut u = vec![1e9; r];
                u[r - 1] = f64::INFINITY;
                u
            }),
        )
    }

    fn unit_ratings(c: &Cascade, hours: usize) -> Ratings {
        Ratings::constant(
            hours,
            vec![10.0; c.num_arcs()],
            vec![0.0; c.num_arcs()],
            vec![1.0; c.num_arcs()],
            vec![2.0; c.num_arcs()],
        )
    }

    #[test]
    fn valid_chain_passes() {
        let c = chain(&[50.0, 20.0, 0.0]);
        let rep = validate_cascade(&c, &unit_ratings(&c, 1));
        assert!(rep.is_valid(), "{:?}", rep.violations);
    }

    #[test]
    fn pump_into_sink_flagged() {
        let c = chain(&[50.0, 20.0, 0.0]);
        let mut r = unit_ratings(&c, 1);
        r.pump_cap[0][1] = 5.0; // arc into sink
        let rep = validate_cascade(&c, &r);
        assert!(rep.violations.iter().any(|v| v.contains("pump into sink")));
    }

    #[test]
    fn pumped_arc_with_eta_below_zeta_is_valid() {
        let c = chain(&[50.0, 20.0, 0.0]);
        let mut r = unit_ratings(&c, 1);
        r.pump_cap[0][0] = 5.0; // eta=1 < zeta=2
        assert!(validate_cascade(&c, &r).is_valid());
    }

    #[test]
    fn cycle_flagged() {
        let c = Cascade::new(
            vec!["a".into(), "b".into(), "sink".into()],
            vec!["a0".into(), "a1".into(), "a2".into()],
            vec![(0, 1), (1, 0), (0, 2)],
            vec![1.0, 1.0, 0.0],
            BoundProfile::Constant(vec![0.0; 3]),
            BoundProfile::Constant(vec![10.0, 10.0, f64::INFINITY]),
        );
        let rep = validate_cascade(&c, &unit_ratings(&c, 1));
        assert!(rep.violations.iter().any(|v| v.contains("not acyclic")));
    }

    #[test]
    fn chain_paths() {
        let c = chain(&[50.0, 20.0, 0.0]);
        assert_eq!(path_to_sink(&c, 0).unwrap(), vec![0, 1]);
        assert_eq!(path_to_sink(&c, 1).unwrap(), vec![1]);
        assert!(path_to_sink(&c, 2).is_err());
    }

    #[test]
    fn diamond_path_takes_lexicographic_branch() {
        // 0 -> 1 -> 3 and 0 -> 2 -> 3(sink); arc ids in listed order.
        let c = Cascade::new(
            vec!["0".into(), "1".into(), "2".into(), "sink".into()],
            (0..4).map(|i| format!("a{i}")).collect(),
            vec![(0, 1), (1, 3), (0, 2), (2, 3)],
            vec![1.0; 4],
            BoundProfile::Constant(vec![0.0; 4]),
            BoundProfile::Constant(vec![10.0, 10.0, 10.0, f64::INFINITY]),
        );
        // both [0,1] and [2,3] reach the sink; lexicographically [0,1] wins
        assert_eq!(path_to_sink(&c, 0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn spill_chain_example() {
        let c = chain(&[50.0, 20.0, 0.0]);
        let z = spill_to_match(&c, &[-2.0, -3.0]).unwrap();
        assert_eq!(z, vec![2.0, 5.0]);
        assert_eq!(c.apply_incidence(&z), vec![-2.0, -3.0, 5.0]);
    }

    #[test]
    fn spill_zero_deficit() {
        let c = chain(&[50.0, 20.0, 0.0]);
        assert_eq!(spill_to_match(&c, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn spill_single_reservoir() {
        let c = chain(&[50.0, 0.0]);
        assert_eq!(spill_to_match(&c, &[-5.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn spill_rejects_positive_deficit() {
        let c = chain(&[50.0, 20.0, 0.0]);
        assert!(matches!(
            spill_to_match(&c, &[0.5, -1.0]),
            Err(CascadeError::PositiveDeficit(0, _))
        ));
    }

    #[test]
    fn incidence_columns_sum_to_zero() {
        let c = chain(&[1.0, 1.0, 1.0, 0.0]);
        for a in 0..c.num_arcs() {
            let col: f64 = (0..c.num_reservoirs()).map(|r| c.incidence()[r][a]).sum();
            assert_eq!(col, 0.0);
        }
    }

    /// Random DAG cascade: each non-sink node gets 1..=2 outgoing arcs to
    /// strictly larger nodes, so the last node is the unique sink.
    fn random_cascade(r: usize, extra_arcs: &[usize]) -> Cascade {
        let mut arcs = Vec::new();
        for node in 0..r - 1 {
            let spread = extra_arcs[node % extra_arcs.len()] % (r - node);
            arcs.push((node, node + 1 + spread.min(r - node - 2)));
            if extra_arcs[(node + 1) % extra_arcs.len()] % 2 == 0 && node + 2 < r {
                arcs.push((node, r - 1));
            }
        }
        // guarantee every node still reaches the sink by construction: all
        // arcs point forward and every node has an outgoing arc
        Cascade::new(
            (0..r).map(|i| format!("r{i}")).collect(),
            (0..arcs.len()).map(|i| format!("a{i}")).collect(),
            arcs.clone(),
            vec![10.0; r],
            BoundProfile::Constant(vec![0.0; r]),
            BoundProfile::Constant({
                let mut u = vec![1e9; r];
                u[r - 1] = f64::INFINITY;
                u
            }),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn spill_matches_deficit(
            r in 2usize..=6,
            extras in proptest::collection::vec(0usize..4, 6),
            hraw in proptest::collection::vec(0.0f64..100.0, 5),
        ) {
            let c = random_cascade(r, &extras);
            let h: Vec<f64> = hraw[..r - 1].iter().map(|x| -x).collect();
            let z = spill_to_match(&c, &h).unwrap();
            prop_assert!(z.iter().all(|&x| x >= 0.0));
            let mz = c.apply_incidence(&z);
            let total: f64 = h.iter().sum();
            for (i, &hi) in h.iter().enumerate() {
                prop_assert!((mz[i] - hi).abs() <= 1e-9, "row {i}: {} vs {}", mz[i], hi);
            }
            prop_assert!((mz[r - 1] + total).abs() <= 1e-9);
        }
    }
}
