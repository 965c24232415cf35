//! Configuration files, result export, and the command-line interface.
//!
//! Configs are strict JSON: unknown keys are rejected by name, and semantic
//! validation collects every violation before reporting. Config files use
//! natural units (m3, m3/h, MWh, EUR/MWh); exported revenue columns are
//! EUR x 10^3 and volume columns m3 x 10^3.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::{validate_cascade, BoundProfile, Cascade, Ratings};
use crate::oracle::{enumerate_activation_tree, solve_extensive_trader, MAX_TREE_HOURS};
use crate::planner::{
    assemble_planner_saa, solve_planner, stats_csv_row, PlannerError, PlannerInput,
    PlannerScenario,
};
use crate::simulator::{
    percentile_bands, run_baselines, MarketModels, RunResult, SimulationConfig, SimulatorError,
    Strategy,
};
use crate::stochastic::{
    activation_prices, expected_bid_coefficients, sample_inflows, sample_spot_prices, stream_rng,
    ActivationModel, BidCoefficients, InflowModel, PeakSplit, PriceModel, StochasticError,
};
use crate::trader::{
    solve_reduced_collective, solve_reduced_individual, Bids, Mode, TraderError, TraderInput,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

// ---------------------------------------------------------------------------
// config schema

/// Top-level run configuration. Paths are resolved relative to the config
/// file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default)]
    pub notes: Vec<String>,
    pub cascade_json: String,
    pub forward_curve_csv: String,
    pub inflow_means_csv: String,
    pub price: PriceSection,
    pub reserve: ReserveSection,
    #[serde(default)]
    pub inflow_noise: InflowNoiseSection,
    pub simulation: SimulationSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSection {
    /// Pull of the hourly price factor back to the forward curve, in [0, 1].
    pub mean_reversion: f64,
    pub short_factor_vol: f64,
    pub long_factor_vol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReserveSection {
    pub activation_probability_up: f64,
    pub activation_probability_down: f64,
    pub capacity_price_up_eur_mwh: f64,
    pub capacity_price_down_eur_mwh: f64,
    pub activation_price_up_eur_mwh: PeakSplitSection,
    pub activation_price_down_eur_mwh: PeakSplitSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakSplitSection {
    pub peak: f64,
    pub off_peak: f64,
}

/// Inflow noise per reservoir name; reservoirs without an entry get zero.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InflowNoiseSection {
    #[serde(default)]
    pub year_type_sd: BTreeMap<String, f64>,
    #[serde(default)]
    pub daily_sd_m3: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub days: usize,
    pub hours_per_day: usize,
    /// Scenario count for the planner's sample average.
    pub num_scenarios: usize,
    pub resolve_period_days: usize,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeFile {
    pub reservoirs: Vec<ReservoirSection>,
    pub arcs: Vec<ArcSection>,
}

/// A reservoir; omit `max_volume_m3` on exactly one entry to mark the
/// unbounded downstream sink (the river).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirSection {
    pub name: String,
    pub start_volume_m3: f64,
    #[serde(default)]
    pub min_volume_m3: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_volume_m3: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcSection {
    pub name: String,
    pub from: String,
    pub to: String,
    pub turbine: MachineSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump: Option<MachineSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSection {
    pub max_flow_m3_per_h: f64,
    pub energy_mwh_per_m3: f64,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {detail}", path.display())]
    Parse { path: PathBuf, detail: String },
    #[error("invalid configuration:\n  - {}", violations.join("\n  - "))]
    Invalid { violations: Vec<String> },
}

/// A run configuration with every referenced file loaded, cross-checked,
/// and converted into model inputs covering the full horizon.
#[derive(Debug)]
pub struct LoadedConfig {
    pub raw: RunConfig,
    pub cascade: Cascade,
    pub ratings: Ratings,
    pub models: MarketModels,
    pub sim: SimulationConfig,
}

/// Stable serialized form used for config round-trips and the manifest:
/// pretty-printed JSON with sorted maps and a trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("value serializes");
    out.push('\n');
    out
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de)
        .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), detail: e.to_string() })
}

fn parse_error(path: &Path, detail: String) -> ConfigError {
    ConfigError::Parse { path: path.to_path_buf(), detail }
}

fn csv_error(path: &Path, e: csv::Error) -> ConfigError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => ConfigError::Io { path: path.to_path_buf(), source },
            other => parse_error(path, format!("{other:?}")),
        }
    } else {
        parse_error(path, e.to_string())
    }
}

/// Reads the hourly forward curve: columns `hour,price_eur_mwh`, hours
/// consecutive from zero.
fn read_forward_curve(path: &Path) -> Result<Vec<f64>, ConfigError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["hour", "price_eur_mwh"];
    if headers.iter().ne(expected) {
        return Err(parse_error(
            path,
            format!(
                "expected header \"{}\", found \"{}\"",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = i + 2;
        let hour: usize = record
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| parse_error(path, format!("row {row}: hour is not an integer")))?;
        if hour != i {
            return Err(parse_error(
                path,
                format!("row {row}: hours must run consecutively from 0, found {hour}"),
            ));
        }
        let price: f64 = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| parse_error(path, format!("row {row}: price is not a number")))?;
        if !price.is_finite() {
            return Err(parse_error(path, format!("row {row}: price is not finite")));
        }
        out.push(price);
    }
    if out.is_empty() {
        return Err(parse_error(path, "no data rows".into()));
    }
    Ok(out)
}

/// Reads the daily inflow-means table: a `day` column plus one column per
/// reservoir name. Reservoirs without a column get zero inflow; columns
/// naming no reservoir are an error.
fn read_inflow_means(path: &Path, names: &[String]) -> Result<Vec<Vec<f64>>, ConfigError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some("day") {
        return Err(parse_error(path, "first column must be \"day\"".into()));
    }
    let mut cols: Vec<usize> = Vec::new();
    let mut unknown = Vec::new();
    for col in headers.iter().skip(1) {
        match names.iter().position(|n| n == col) {
            Some(i) if cols.contains(&i) => {
                return Err(parse_error(path, format!("duplicate column \"{col}\"")));
            }
            Some(i) => cols.push(i),
            None => unknown.push(format!("\"{col}\"")),
        }
    }
    if !unknown.is_empty() {
        return Err(parse_error(
            path,
            format!("columns naming no reservoir: {}", unknown.join(", ")),
        ));
    }
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = i + 2;
        let day: usize = record
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| parse_error(path, format!("row {row}: day is not an integer")))?;
        if day != i {
            return Err(parse_error(
                path,
                format!("row {row}: days must run consecutively from 0, found {day}"),
            ));
        }
        let mut means = vec![0.0; names.len()];
        for (j, &res) in cols.iter().enumerate() {
            let val: f64 = record
                .get(j + 1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| parse_error(path, format!("row {row}: inflow is not a number")))?;
            if !val.is_finite() || val < 0.0 {
                return Err(parse_error(
                    path,
                    format!("row {row}: inflow must be finite and nonnegative"),
                ));
            }
            means[res] = val;
        }
        out.push(means);
    }
    if out.is_empty() {
        return Err(parse_error(path, "no data rows".into()));
    }
    Ok(out)
}

/// Fits a configured series to the horizon: longer series are truncated,
/// shorter ones are tiled cyclically when their length divides the horizon.
fn fit_series<T: Clone>(xs: &[T], len: usize, what: &str, violations: &mut Vec<String>) -> Vec<T> {
    if xs.len() >= len {
        xs[..len].to_vec()
    } else if !xs.is_empty() && len % xs.len() == 0 {
        (0..len).map(|i| xs[i % xs.len()].clone()).collect()
    } else {
        violations.push(format!(
            "{what}: {} entries neither cover nor evenly tile the {len} required",
            xs.len()
        ));
        Vec::new()
    }
}

fn noise_vec(
    map: &BTreeMap<String, f64>,
    names: &[String],
    section: &str,
    violations: &mut Vec<String>,
) -> Vec<f64> {
    let mut out = vec![0.0; names.len()];
    for (name, &sd) in map {
        match names.iter().position(|n| n == name) {
            Some(i) => {
                if !(sd >= 0.0) || !sd.is_finite() {
                    violations.push(format!("{section}.{name}: must be finite and nonnegative"));
                }
                out[i] = sd;
            }
            None => violations.push(format!("{section}.{name}: names no reservoir")),
        }
    }
    out
}

/// Builds the cascade from the file, placing the sink last. The sink is the
/// single reservoir with no `max_volume_m3`; file order is otherwise kept.
fn build_cascade(
    file: &CascadeFile,
    violations: &mut Vec<String>,
) -> Option<(Cascade, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    for (i, r) in file.reservoirs.iter().enumerate() {
        let at = format!("cascade.reservoirs[{i}] ({})", r.name);
        if file.reservoirs[..i].iter().any(|o| o.name == r.name) {
            violations.push(format!("{at}: duplicate name"));
        }
        if !(r.min_volume_m3 >= 0.0) {
            violations.push(format!("{at}: min_volume_m3 must be nonnegative"));
        }
        match r.max_volume_m3 {
            Some(hi) if hi < r.min_volume_m3 => {
                violations.push(format!("{at}: max_volume_m3 below min_volume_m3"));
            }
            Some(hi) if !(r.start_volume_m3 >= r.min_volume_m3 && r.start_volume_m3 <= hi) => {
                violations.push(format!("{at}: start_volume_m3 outside the volume band"));
            }
            None if r.start_volume_m3 < 0.0 => {
                violations.push(format!("{at}: start_volume_m3 must be nonnegative"));
            }
            _ => {}
        }
    }
    let sinks: Vec<usize> = (0..file.reservoirs.len())
        .filter(|&i| file.reservoirs[i].max_volume_m3.is_none())
        .collect();
    let sink = match sinks[..] {
        [one] => one,
        [] => {
            violations.push(
                "cascade.reservoirs: no sink (exactly one reservoir must omit max_volume_m3)"
                    .into(),
            );
            return None;
        }
        _ => {
            violations.push(format!(
                "cascade.reservoirs: {} reservoirs omit max_volume_m3, want exactly one sink",
                sinks.len()
            ));
            return None;
        }
    };
    // order map: file index -> model index, sink forced last
    let mut order: Vec<usize> = (0..file.reservoirs.len()).filter(|&i| i != sink).collect();
    order.push(sink);
    let index_of = |name: &str| -> Option<usize> {
        let file_idx = file.reservoirs.iter().position(|r| r.name == name)?;
        order.iter().position(|&i| i == file_idx)
    };

    let mut names = Vec::new();
    let mut w0 = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for &i in &order {
        let r = &file.reservoirs[i];
        names.push(r.name.clone());
        w0.push(r.start_volume_m3);
        if i == sink {
            lo.push(0.0);
            hi.push(f64::INFINITY);
        } else {
            lo.push(r.min_volume_m3);
            hi.push(r.max_volume_m3.expect("non-sink has a max"));
        }
    }

    let mut arc_names = Vec::new();
    let mut arcs = Vec::new();
    let (mut gen_cap, mut pump_cap, mut gen_eff, mut inv_pump_eff) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut resolved = true;
    for (i, arc) in file.arcs.iter().enumerate() {
        let at = format!("cascade.arcs[{i}] ({})", arc.name);
        if file.arcs[..i].iter().any(|o| o.name == arc.name) {
            violations.push(format!("{at}: duplicate name"));
        }
        let from = index_of(&arc.from);
        let to = index_of(&arc.to);
        if from.is_none() {
            violations.push(format!("{at}: from names no reservoir: \"{}\"", arc.from));
        }
        if to.is_none() {
            violations.push(format!("{at}: to names no reservoir: \"{}\"", arc.to));
        }
        let (Some(from), Some(to)) = (from, to) else {
            resolved = false;
            continue;
        };
        arc_names.push(arc.name.clone());
        arcs.push((from, to));
        gen_cap.push(arc.turbine.max_flow_m3_per_h);
        gen_eff.push(arc.turbine.energy_mwh_per_m3);
        match &arc.pump {
            Some(p) => {
                pump_cap.push(p.max_flow_m3_per_h);
                inv_pump_eff.push(p.energy_mwh_per_m3);
            }
            None => {
                pump_cap.push(0.0);
                inv_pump_eff.push(0.0);
            }
        }
    }
    if !resolved {
        return None;
    }
    let cascade = Cascade::new(
        names,
        arc_names,
        arcs,
        w0,
        BoundProfile::Constant(lo),
        BoundProfile::Constant(hi),
    );
    Some((cascade, gen_cap, pump_cap, gen_eff, inv_pump_eff))
}

/// Loads a run config and everything it references, reporting either a
/// ready-to-use model bundle or the full list of problems.
pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let raw: RunConfig = read_json(path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let cascade_file: CascadeFile = read_json(&dir.join(&raw.cascade_json))?;
    let forward_raw = read_forward_curve(&dir.join(&raw.forward_curve_csv))?;

    let mut violations = Vec::new();
    let sim = &raw.simulation;
    if sim.days < 2 {
        violations.push("simulation.days: need at least two days".into());
    }
    if sim.hours_per_day == 0 {
        violations.push("simulation.hours_per_day: must be positive".into());
    }
    if sim.num_scenarios == 0 {
        violations.push("simulation.num_scenarios: must be positive".into());
    }
    if sim.resolve_period_days == 0 {
        violations.push("simulation.resolve_period_days: must be positive".into());
    }
    if sim.seeds.is_empty() {
        violations.push("simulation.seeds: need at least one seed".into());
    }
    let p = &raw.price;
    if !(0.0..=1.0).contains(&p.mean_reversion) {
        violations.push("price.mean_reversion: must lie in [0, 1]".into());
    }
    if !(p.short_factor_vol >= 0.0) {
        violations.push("price.short_factor_vol: must be nonnegative".into());
    }
    if !(p.long_factor_vol >= 0.0) {
        violations.push("price.long_factor_vol: must be nonnegative".into());
    }
    let rsv = &raw.reserve;
    for (what, prob) in [
        ("activation_probability_up", rsv.activation_probability_up),
        ("activation_probability_down", rsv.activation_probability_down),
    ] {
        if !(prob > 0.0 && prob < 1.0) {
            violations.push(format!("reserve.{what}: must lie strictly inside (0, 1)"));
        }
    }
    if rsv.activation_probability_up + rsv.activation_probability_down >= 1.0 {
        violations.push("reserve: activation probabilities must sum below 1".into());
    }
    for (what, price) in [
        ("capacity_price_up_eur_mwh", rsv.capacity_price_up_eur_mwh),
        ("capacity_price_down_eur_mwh", rsv.capacity_price_down_eur_mwh),
        ("activation_price_up_eur_mwh.peak", rsv.activation_price_up_eur_mwh.peak),
        ("activation_price_up_eur_mwh.off_peak", rsv.activation_price_up_eur_mwh.off_peak),
        ("activation_price_down_eur_mwh.peak", rsv.activation_price_down_eur_mwh.peak),
        ("activation_price_down_eur_mwh.off_peak", rsv.activation_price_down_eur_mwh.off_peak),
    ] {
        if !(price >= 0.0) {
            violations.push(format!("reserve.{what}: must be nonnegative"));
        }
    }
    if sim.days < 2 || sim.hours_per_day == 0 {
        return Err(ConfigError::Invalid { violations });
    }
    let horizon = sim.days * sim.hours_per_day;

    let Some((cascade, gen_cap, pump_cap, gen_eff, inv_pump_eff)) =
        build_cascade(&cascade_file, &mut violations)
    else {
        return Err(ConfigError::Invalid { violations });
    };
    let means_raw = read_inflow_means(&dir.join(&raw.inflow_means_csv), &cascade.reservoir_names)?;

    let forward = fit_series(&forward_raw, horizon, "forward_curve_csv", &mut violations);
    if forward.iter().any(|&p| !(p > 0.0)) {
        violations.push("forward_curve_csv: prices must be positive".into());
    }
    let daily_means = fit_series(&means_raw, sim.days, "inflow_means_csv", &mut violations);
    let year_type_sd = noise_vec(
        &raw.inflow_noise.year_type_sd,
        &cascade.reservoir_names,
        "inflow_noise.year_type_sd",
        &mut violations,
    );
    let daily_sd = noise_vec(
        &raw.inflow_noise.daily_sd_m3,
        &cascade.reservoir_names,
        "inflow_noise.daily_sd_m3",
        &mut violations,
    );

    let ratings = Ratings::constant(horizon, gen_cap, pump_cap, gen_eff, inv_pump_eff);
    let report = validate_cascade(&cascade, &ratings);
    violations.extend(report.violations.iter().map(|v| format!("cascade: {v}")));
    if !violations.is_empty() {
        return Err(ConfigError::Invalid { violations });
    }

    let models = MarketModels {
        price: PriceModel {
            forward_curve: forward,
            mean_reversion: p.mean_reversion,
            vol_x: p.short_factor_vol,
            vol_y: p.long_factor_vol,
            capacity_up: vec![rsv.capacity_price_up_eur_mwh; horizon],
            capacity_down: vec![rsv.capacity_price_down_eur_mwh; horizon],
            activation_up: PeakSplit {
                peak: rsv.activation_price_up_eur_mwh.peak,
                off_peak: rsv.activation_price_up_eur_mwh.off_peak,
            },
            activation_down: PeakSplit {
                peak: rsv.activation_price_down_eur_mwh.peak,
                off_peak: rsv.activation_price_down_eur_mwh.off_peak,
            },
        },
        inflow: InflowModel {
            daily_means,
            year_type_sd,
            daily_sd: vec![daily_sd; sim.days],
        },
        activation: ActivationModel {
            p_none: 1.0 - rsv.activation_probability_up - rsv.activation_probability_down,
            p_up: rsv.activation_probability_up,
            p_down: rsv.activation_probability_down,
        },
    };
    let sim = SimulationConfig {
        days: sim.days,
        hours_per_day: sim.hours_per_day,
        num_scenarios: sim.num_scenarios,
        resolve_period: sim.resolve_period_days,
        seeds: sim.seeds.clone(),
    };
    // belt over the per-field checks above: the assembled models must pass
    // their own validation
    let mut late = Vec::new();
    if let Err(e) = models.price.validate() {
        late.push(format!("price: {e}"));
    }
    if let Err(e) = models.inflow.validate() {
        late.push(format!("inflows: {e}"));
    }
    if let Err(e) = models.activation.validate() {
        late.push(format!("reserve: {e}"));
    }
    if let Err(e) = sim.validate() {
        late.push(format!("simulation: {e}"));
    }
    if !late.is_empty() {
        return Err(ConfigError::Invalid { violations: late });
    }
    Ok(LoadedConfig { raw, cascade, ratings, models, sim })
}

// ---------------------------------------------------------------------------
// result export

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub name: String,
    pub config: String,
    pub notes: Vec<String>,
    pub seeds: Vec<u64>,
    pub strategies: Vec<String>,
    /// Data files written next to this manifest.
    pub files: Vec<String>,
}

/// Writes summary, percentile bands, one day table per run, and a manifest
/// into `dir`. Revenue columns are EUR x 10^3, level columns m3 x 10^3.
pub fn export_results(
    loaded: &LoadedConfig,
    config_path: &Path,
    runs: &[RunResult],
    dir: &Path,
) -> Result<RunManifest, ConfigError> {
    fs::create_dir_all(dir)
        .map_err(|source| ConfigError::Io { path: dir.to_path_buf(), source })?;
    let mut files = Vec::new();

    let summary = dir.join("summary.csv");
    write_summary(&summary, runs).map_err(|e| csv_error(&summary, e))?;
    files.push("summary.csv".to_string());

    let bands = dir.join("bands.csv");
    write_bands(&bands, runs).map_err(|e| csv_error(&bands, e))?;
    files.push("bands.csv".to_string());

    for run in runs {
        let name = format!("days_{}_seed{}.csv", run.strategy.label(), run.seed);
        let path = dir.join(&name);
        write_days(&path, &loaded.cascade, run).map_err(|e| csv_error(&path, e))?;
        files.push(name);
    }

    let manifest = RunManifest {
        name: loaded.raw.name.clone(),
        config: config_path.display().to_string(),
        notes: loaded.raw.notes.clone(),
        seeds: loaded.sim.seeds.clone(),
        strategies: Strategy::ALL.iter().map(|s| s.label().to_string()).collect(),
        files,
    };
    let mpath = dir.join("manifest.json");
    fs::write(&mpath, canonical_json(&manifest))
        .map_err(|source| ConfigError::Io { path: mpath.clone(), source })?;
    Ok(manifest)
}

fn write_summary(path: &Path, runs: &[RunResult]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "strategy", "day", "cum_revenue"])?;
    for run in runs {
        for (day, &cum) in run.cumulative.iter().enumerate() {
            w.write_record([
                run.seed.to_string(),
                run.strategy.label().to_string(),
                day.to_string(),
                format!("{:.6}", cum / 1e3),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_bands(path: &Path, runs: &[RunResult]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["strategy", "day", "p10", "p50", "p90"])?;
    for strategy in Strategy::ALL {
        let series: Vec<Vec<f64>> = runs
            .iter()
            .filter(|r| r.strategy == strategy)
            .map(|r| r.cumulative.clone())
            .collect();
        if series.is_empty() {
            continue;
        }
        let bands = percentile_bands(&series, &[10.0, 50.0, 90.0]);
        for day in 0..bands[0].len() {
            w.write_record([
                strategy.label().to_string(),
                day.to_string(),
                format!("{:.6}", bands[0][day] / 1e3),
                format!("{:.6}", bands[1][day] / 1e3),
                format!("{:.6}", bands[2][day] / 1e3),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_days(path: &Path, cascade: &Cascade, run: &RunResult) -> Result<(), csv::Error> {
    let sink = cascade.sink();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["day".into()];
    for (n, name) in cascade.reservoir_names.iter().enumerate() {
        if n != sink {
            header.push(format!("end_level_{name}_km3"));
        }
    }
    for col in [
        "spot_bid_mwh",
        "reserve_up_bid_mwh",
        "reserve_down_bid_mwh",
        "spot_keur",
        "reserve_up_keur",
        "reserve_down_keur",
        "total_keur",
        "fallback",
    ] {
        header.push(col.to_string());
    }
    w.write_record(&header)?;
    for day in &run.days {
        let mut rec: Vec<String> = vec![day.day.to_string()];
        for n in 0..cascade.num_reservoirs() {
            if n != sink {
                rec.push(format!("{:.6}", day.end_level[n] / 1e3));
            }
        }
        let sum = |xs: &[f64]| xs.iter().sum::<f64>();
        rec.push(format!("{:.6}", sum(&day.bids.spot)));
        rec.push(format!("{:.6}", sum(&day.bids.up)));
        rec.push(format!("{:.6}", sum(&day.bids.down)));
        rec.push(format!("{:.6}", day.revenue.spot / 1e3));
        rec.push(format!("{:.6}", day.revenue.reserve_up / 1e3));
        rec.push(format!("{:.6}", day.revenue.reserve_down / 1e3));
        rec.push(format!("{:.6}", day.revenue.total() / 1e3));
        rec.push(if day.fallback { "1" } else { "0" }.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// command-line interface

#[derive(Debug, Parser)]
#[command(
    name = "hydrosched",
    about = "Cascade hydropower scheduling across spot and reserve markets",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a config, report every problem, and print the model summary.
    Validate {
        /// Run configuration JSON.
        config: PathBuf,
    },
    /// Solve one day's bidding problem against an end-of-day storage floor.
    Trade {
        config: PathBuf,
        /// Day index supplying prices and inflows.
        #[arg(long, default_value_t = 0)]
        day: usize,
        /// End-of-day floor as a fraction of the start volumes.
        #[arg(long, default_value_t = 1.0)]
        target_fraction: f64,
    },
    /// Sample scenarios, solve the seasonal planner, print water values.
    Plan {
        config: PathBuf,
        /// Override the configured scenario count.
        #[arg(long)]
        scenarios: Option<usize>,
        /// Scenario sampling seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Roll the full horizon for every seed and strategy; export CSVs.
    Simulate {
        config: PathBuf,
        /// Output directory for the CSV reports.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Cross-check the reduced bidding LP against full scenario-tree
    /// enumeration on a small random instance.
    Oracle {
        /// Hours in the trading day; the tree has 3^hours leaves.
        #[arg(long, default_value_t = 2)]
        hours: usize,
        /// Instance seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Infeasible(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Other(_) => EXIT_FAILURE,
        }
    }
}

impl From<TraderError> for CliError {
    fn from(e: TraderError) -> Self {
        match e {
            TraderError::RobustInfeasible(_) | TraderError::DispatchInfeasible { .. } => {
                CliError::Infeasible(e.to_string())
            }
            other => CliError::Other(other.into()),
        }
    }
}

impl From<PlannerError> for CliError {
    fn from(e: PlannerError) -> Self {
        match e {
            PlannerError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

impl From<StochasticError> for CliError {
    fn from(e: StochasticError) -> Self {
        CliError::Other(e.into())
    }
}

impl From<SimulatorError> for CliError {
    fn from(e: SimulatorError) -> Self {
        let infeasible = match &e {
            SimulatorError::Dispatch { .. } => true,
            SimulatorError::Planner { source, .. } => {
                matches!(source, PlannerError::Infeasible { .. })
            }
            SimulatorError::Bidding { source, .. } => matches!(
                source,
                TraderError::RobustInfeasible(_) | TraderError::DispatchInfeasible { .. }
            ),
            _ => false,
        };
        if infeasible {
            CliError::Infeasible(e.to_string())
        } else {
            CliError::Other(e.into())
        }
    }
}

/// Caps the worker pool used for parallel seed runs.
fn init_worker_pool() {
    let Ok(raw) = std::env::var("HYDROSCHED_THREADS") else {
        return;
    };
    match raw.parse::<usize>() {
        Ok(n) if n >= 1 => {
            // a later re-init (tests, repeated calls) keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring HYDROSCHED_THREADS={raw} (want a positive integer)"),
    }
}

/// Binary entry point: parses `argv`, runs the command, and returns the
/// process exit code (0 ok, 1 failure, 2 bad config or usage, 3 infeasible).
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    init_worker_pool();
    match run_command(cli.command) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            err.exit_code()
        }
    }
}

fn run_command(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Validate { config } => cmd_validate(&config),
        Command::Trade { config, day, target_fraction } => cmd_trade(&config, day, target_fraction),
        Command::Plan { config, scenarios, seed } => cmd_plan(&config, scenarios, seed),
        Command::Simulate { config, out } => cmd_simulate(&config, &out),
        Command::Oracle { hours, seed } => cmd_oracle(hours, seed),
    }
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let loaded = load_config(path)?;
    let cascade = &loaded.cascade;
    let sink = cascade.sink();
    println!("OK: {}", loaded.raw.name);
    for n in 0..cascade.num_reservoirs() {
        let detail = if n == sink {
            "sink, unbounded".to_string()
        } else {
            format!(
                "band [{}, {}] m3",
                cascade.lower.at(0)[n],
                cascade.upper.at(0)[n]
            )
        };
        println!(
            "  reservoir {:<14} start {} m3, {}",
            cascade.reservoir_names[n], cascade.w0[n], detail
        );
    }
    for (a, &(from, to)) in cascade.arcs().iter().enumerate() {
        let mut line = format!(
            "  arc {:<20} {} -> {}: turbine {} m3/h at {} MWh/m3",
            cascade.arc_names[a],
            cascade.reservoir_names[from],
            cascade.reservoir_names[to],
            loaded.ratings.gen_cap[0][a],
            loaded.ratings.gen_eff[0][a],
        );
        if loaded.ratings.pump_cap[0][a] > 0.0 {
            line.push_str(&format!(
                ", pump {} m3/h at {} MWh/m3",
                loaded.ratings.pump_cap[0][a], loaded.ratings.inv_pump_eff[0][a]
            ));
        }
        println!("{line}");
    }
    let sim = &loaded.sim;
    println!(
        "  horizon {} days x {} hours, {} planner scenarios, re-solve every {} days, {} seeds",
        sim.days,
        sim.hours_per_day,
        sim.num_scenarios,
        sim.resolve_period,
        sim.seeds.len()
    );
    Ok(())
}

fn cmd_trade(path: &Path, day: usize, target_fraction: f64) -> Result<(), CliError> {
    let loaded = load_config(path)?;
    let sim = &loaded.sim;
    if day >= sim.days {
        return Err(ConfigError::Invalid {
            violations: vec![format!("--day {day}: outside the {}-day horizon", sim.days)],
        }
        .into());
    }
    if !(target_fraction >= 0.0) {
        return Err(ConfigError::Invalid {
            violations: vec!["--target-fraction: must be nonnegative".into()],
        }
        .into());
    }
    let h = sim.hours_per_day;
    let range = day * h..(day + 1) * h;
    let day_spot = loaded.models.price.forward_curve[range.clone()].to_vec();
    let coefficients =
        expected_bid_coefficients(&loaded.models.price, &loaded.models.activation, &day_spot, day)?;
    let inflows: Vec<Vec<f64>> = (0..h)
        .map(|_| loaded.models.inflow.daily_means[day].iter().map(|&m| m / h as f64).collect())
        .collect();
    let mut target: Vec<f64> = loaded.cascade.w0.iter().map(|w| w * target_fraction).collect();
    target[loaded.cascade.sink()] = 0.0;
    let ratings = loaded.ratings.slice(range);
    let input = TraderInput {
        cascade: &loaded.cascade,
        ratings: &ratings,
        start_level: loaded.cascade.w0.clone(),
        target_level: Some(target),
        inflows,
        coefficients,
        water_values: None,
        start_hour: day * h,
    };
    let individual = solve_reduced_individual(&input).map_err(CliError::from)?;
    let collective = solve_reduced_collective(&input).map_err(CliError::from)?;
    let (ind, col) = match (individual.optimal(), collective.optimal()) {
        (Some(i), Some(c)) => (i, c),
        _ => {
            return Err(CliError::Infeasible(format!(
                "infeasible target: day-{day} inflows cannot hold {target_fraction} of the \
                 start volumes"
            )));
        }
    };
    println!(
        "day {day}: expected revenue {:.3} kEUR (per-arc bids {:.3} kEUR)",
        col.objective / 1e3,
        ind.objective / 1e3
    );
    if let Bids::Collective(bids) = &col.bids {
        println!("hour  spot_mwh  reserve_up_mwh  reserve_down_mwh");
        for t in 0..h {
            println!(
                "{:>4}  {:>8.2}  {:>14.2}  {:>16.2}",
                t, bids.spot[t], bids.up[t], bids.down[t]
            );
        }
    }
    Ok(())
}

fn cmd_plan(path: &Path, scenarios: Option<usize>, seed: u64) -> Result<(), CliError> {
    let loaded = load_config(path)?;
    let sim = &loaded.sim;
    let nscen = scenarios.unwrap_or(sim.num_scenarios);
    if nscen == 0 {
        return Err(ConfigError::Invalid {
            violations: vec!["--scenarios: must be positive".into()],
        }
        .into());
    }
    let (days, h) = (sim.days, sim.hours_per_day);
    let horizon = days * h;
    let scen = (0..nscen)
        .map(|n| -> Result<PlannerScenario, CliError> {
            let mut rng = stream_rng(seed, &format!("cli-plan-spot-{n}"));
            let spot = sample_spot_prices(&loaded.models.price, horizon, &mut rng)?;
            let mut rng = stream_rng(seed, &format!("cli-plan-inflow-{n}"));
            let inflows = sample_inflows(&loaded.models.inflow, &loaded.cascade, h, &mut rng)?;
            Ok(PlannerScenario { spot, inflows })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (psi_up, psi_down) = activation_prices(&loaded.models.price, 0, days, h);
    let act = &loaded.models.activation;
    let price = &loaded.models.price;
    let reserve_up_price: Vec<f64> =
        (0..horizon).map(|t| price.capacity_up[t] + act.p_up * psi_up[t]).collect();
    let reserve_down_price: Vec<f64> =
        (0..horizon).map(|t| price.capacity_down[t] + act.p_down * psi_down[t]).collect();
    let input = PlannerInput {
        cascade: &loaded.cascade,
        ratings: &loaded.ratings,
        days,
        hours_per_day: h,
        start_hour: 0,
        start_level: loaded.cascade.w0.clone(),
        scenarios: scen,
        reserve_up_price,
        reserve_down_price,
        spot_only: false,
    };
    let built = assemble_planner_saa(&input).map_err(CliError::from)?;
    let sol = solve_planner(&built).map_err(CliError::from)?;
    println!(
        "expected revenue {:.3} kEUR over {days} days ({nscen} scenarios, seed {seed})",
        sol.objective / 1e3
    );
    for (n, name) in loaded.cascade.reservoir_names.iter().enumerate() {
        println!("  water value {:<14} {:>10.4} EUR per 1000 m3", name, sol.water_values[n] * 1e3);
    }
    println!("scenarios,rows,cols,wall_seconds");
    println!("{}", stats_csv_row(nscen, &sol.stats));
    Ok(())
}

fn cmd_simulate(path: &Path, out: &Path) -> Result<(), CliError> {
    let loaded = load_config(path)?;
    let runs = run_baselines(&loaded.sim, &loaded.cascade, &loaded.ratings, &loaded.models)
        .map_err(CliError::from)?;
    let manifest = export_results(&loaded, path, &runs, out)?;

    for strategy in Strategy::ALL {
        let mut finals: Vec<f64> = runs
            .iter()
            .filter(|r| r.strategy == strategy)
            .filter_map(|r| r.cumulative.last().copied())
            .collect();
        finals.sort_by(f64::total_cmp);
        let fallbacks: usize = runs
            .iter()
            .filter(|r| r.strategy == strategy)
            .map(|r| r.fallback_days)
            .sum();
        let note = if fallbacks > 0 { format!(", {fallbacks} fallback days") } else { String::new() };
        println!(
            "{:<14} median cumulative {:>12.3} kEUR over {} seeds{}",
            strategy.label(),
            median_of(&finals) / 1e3,
            finals.len(),
            note
        );
    }
    let violations: usize =
        runs.iter().map(|r| r.bound_violations + r.delivery_violations).sum();
    let worst = runs.iter().map(|r| r.max_conservation_residual).fold(0.0, f64::max);
    println!("safety: {violations} violations, worst volume bookkeeping gap {worst:.2e} m3");
    println!("wrote {} files to {}", manifest.files.len() + 1, out.display());
    Ok(())
}

fn median_of(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn cmd_oracle(hours: usize, seed: u64) -> Result<(), CliError> {
    if hours == 0 || hours > MAX_TREE_HOURS {
        return Err(ConfigError::Invalid {
            violations: vec![format!("--hours: must lie in 1..={MAX_TREE_HOURS}")],
        }
        .into());
    }
    use rand::Rng;
    let mut rng = stream_rng(seed, "cli-oracle");
    let cascade = Cascade::new(
        vec!["upper".into(), "lower".into(), "river".into()],
        vec!["head".into(), "tail".into()],
        vec![(0, 1), (1, 2)],
        vec![
            60.0 + rng.random_range(0.0..20.0),
            30.0 + rng.random_range(0.0..10.0),
            0.0,
        ],
        BoundProfile::Constant(vec![0.0, 0.0, 0.0]),
        BoundProfile::Constant(vec![120.0, 60.0, f64::INFINITY]),
    );
    let ratings =
        Ratings::constant(hours, vec![10.0, 12.0], vec![6.0, 0.0], vec![1.0, 0.8], vec![1.6, 0.0]);
    let inflows: Vec<Vec<f64>> = (0..hours)
        .map(|_| vec![rng.random_range(0.0..4.0), rng.random_range(0.0..2.0), 0.0])
        .collect();
    let coefficients = BidCoefficients {
        spot: (0..hours).map(|_| rng.random_range(20.0..60.0)).collect(),
        reserve_up: (0..hours).map(|_| rng.random_range(0.0..15.0)).collect(),
        reserve_down: (0..hours).map(|_| rng.random_range(0.0..8.0)).collect(),
        mean_up: 0.25,
        mean_down: 0.25,
    };
    let target: Vec<f64> = cascade.w0.iter().map(|w| 0.9 * w).collect();
    let input = TraderInput {
        cascade: &cascade,
        ratings: &ratings,
        start_level: cascade.w0.clone(),
        target_level: Some(target),
        inflows,
        coefficients,
        water_values: None,
        start_hour: 0,
    };
    let model = ActivationModel { p_none: 0.5, p_up: 0.25, p_down: 0.25 };
    let tree = enumerate_activation_tree(hours, &model)
        .map_err(|e| CliError::Other(e.into()))?;
    let reduced = solve_reduced_individual(&input).map_err(CliError::from)?;
    let exact = solve_extensive_trader(&input, Mode::Individual, &tree)
        .map_err(|e| CliError::Other(e.into()))?;
    let (Some(reduced), Some(exact)) = (reduced.optimal(), exact.optimal()) else {
        return Err(CliError::Infeasible(
            "random instance has an unattainable target; try another seed".into(),
        ));
    };
    let gap = (exact.objective - reduced.objective).abs();
    let tol = 1e-6 * (1.0 + reduced.objective.abs());
    println!("reduced LP optimum     {:.9}", reduced.objective);
    println!("scenario-tree optimum  {:.9}", exact.objective);
    println!("gap {gap:.3e} within {tol:.3e} over {} leaves", tree.num_leaves());
    if gap > tol {
        return Err(CliError::Other(anyhow::anyhow!(
            "reduced and enumerated optima differ: gap {gap:.3e} exceeds {tol:.3e}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{DayResult, RevenueBreakdown};
    use crate::trader::{CollectiveBids, Flows};

    fn write(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, contents).unwrap();
        p
    }

    fn cascade_json() -> &'static str {
        r#"{
  "reservoirs": [
    {"name": "res", "start_volume_m3": 500.0, "min_volume_m3": 0.0, "max_volume_m3": 1000.0},
    {"name": "river", "start_volume_m3": 0.0}
  ],
  "arcs": [
    {"name": "plant", "from": "res", "to": "river",
     "turbine": {"max_flow_m3_per_h": 30.0, "energy_mwh_per_m3": 1.0}}
  ]
}"#
    }

    fn run_json() -> &'static str {
        r#"{
  "name": "mini",
  "cascade_json": "cascade.json",
  "forward_curve_csv": "forward.csv",
  "inflow_means_csv": "inflows.csv",
  "price": {"mean_reversion": 0.2, "short_factor_vol": 0.0, "long_factor_vol": 0.0},
  "reserve": {
    "activation_probability_up": 0.01,
    "activation_probability_down": 0.01,
    "capacity_price_up_eur_mwh": 0.0,
    "capacity_price_down_eur_mwh": 0.0,
    "activation_price_up_eur_mwh": {"peak": 90.0, "off_peak": 45.0},
    "activation_price_down_eur_mwh": {"peak": 25.0, "off_peak": 15.0}
  },
  "inflow_noise": {"year_type_sd": {"res": 0.1}, "daily_sd_m3": {"res": 5.0}},
  "simulation": {"days": 2, "hours_per_day": 2, "num_scenarios": 2,
                 "resolve_period_days": 1, "seeds": [7]}
}"#
    }

    fn minimal_config(dir: &Path) -> PathBuf {
        write(dir, "cascade.json", cascade_json());
        write(dir, "forward.csv", "hour,price_eur_mwh\n0,40.0\n1,42.0\n2,41.0\n3,39.0\n");
        write(dir, "inflows.csv", "day,res\n0,40.0\n1,20.0\n");
        write(dir, "run.json", run_json())
    }

    #[test]
    fn minimal_config_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        let loaded = load_config(&path).unwrap();
        assert_eq!(loaded.cascade.sink(), 1);
        assert_eq!(loaded.models.price.forward_curve, vec![40.0, 42.0, 41.0, 39.0]);
        assert_eq!(loaded.models.inflow.daily_means[1], vec![20.0, 0.0]);
        assert_eq!(loaded.models.inflow.year_type_sd, vec![0.1, 0.0]);
        assert!((loaded.models.activation.p_none - 0.98).abs() < 1e-12);
        assert_eq!(loaded.sim.resolve_period, 1);
    }

    #[test]
    fn config_round_trips_canonically() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        let loaded = load_config(&path).unwrap();
        let first = canonical_json(&loaded.raw);
        let reparsed: RunConfig = serde_json::from_str(&first).unwrap();
        assert_eq!(canonical_json(&reparsed), first);
    }

    #[test]
    fn unknown_key_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        write(dir.path(), "cascade.json", r#"{"resevoirs": [], "arcs": []}"#);
        let err = load_config(&path).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("resevoirs"), "{text}");
    }

    #[test]
    fn violations_are_enumerated_together() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        let bad = run_json()
            .replace("\"activation_probability_up\": 0.01", "\"activation_probability_up\": 1.5")
            .replace("\"resolve_period_days\": 1", "\"resolve_period_days\": 0")
            .replace("\"year_type_sd\": {\"res\": 0.1}", "\"year_type_sd\": {\"rse\": 0.1}");
        write(dir.path(), "run.json", &bad);
        let err = load_config(&path).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("reserve.activation_probability_up"), "{text}");
        assert!(text.contains("simulation.resolve_period_days"), "{text}");
        assert!(text.contains("inflow_noise.year_type_sd.rse"), "{text}");
    }

    #[test]
    fn sink_is_reordered_to_last() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        write(
            dir.path(),
            "cascade.json",
            r#"{
  "reservoirs": [
    {"name": "river", "start_volume_m3": 0.0},
    {"name": "res", "start_volume_m3": 500.0, "max_volume_m3": 1000.0}
  ],
  "arcs": [
    {"name": "plant", "from": "res", "to": "river",
     "turbine": {"max_flow_m3_per_h": 30.0, "energy_mwh_per_m3": 1.0}}
  ]
}"#,
        );
        let loaded = load_config(&path).unwrap();
        assert_eq!(loaded.cascade.reservoir_names, vec!["res", "river"]);
        assert_eq!(loaded.cascade.arcs(), &[(0, 1)]);
        assert_eq!(loaded.cascade.w0, vec![500.0, 0.0]);
    }

    #[test]
    fn short_series_tile_when_they_divide_the_horizon() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        // 2 hours for a 4-hour horizon, 1 day of means for 2 days
        write(dir.path(), "forward.csv", "hour,price_eur_mwh\n0,40.0\n1,42.0\n");
        write(dir.path(), "inflows.csv", "day,res\n0,40.0\n");
        let loaded = load_config(&path).unwrap();
        assert_eq!(loaded.models.price.forward_curve, vec![40.0, 42.0, 40.0, 42.0]);
        assert_eq!(loaded.models.inflow.daily_means.len(), 2);
        assert_eq!(loaded.models.inflow.daily_means[1], vec![40.0, 0.0]);
    }

    #[test]
    fn series_that_do_not_tile_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        write(dir.path(), "forward.csv", "hour,price_eur_mwh\n0,40.0\n1,42.0\n2,41.0\n");
        let err = load_config(&path).unwrap_err();
        assert!(err.to_string().contains("forward_curve_csv"), "{err}");
    }

    #[test]
    fn unknown_inflow_column_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        write(dir.path(), "inflows.csv", "day,rse\n0,40.0\n1,20.0\n");
        let err = load_config(&path).unwrap_err();
        assert!(err.to_string().contains("rse"), "{err}");
    }

    #[test]
    fn two_sinks_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        write(
            dir.path(),
            "cascade.json",
            r#"{
  "reservoirs": [
    {"name": "res", "start_volume_m3": 500.0},
    {"name": "river", "start_volume_m3": 0.0}
  ],
  "arcs": [
    {"name": "plant", "from": "res", "to": "river",
     "turbine": {"max_flow_m3_per_h": 30.0, "energy_mwh_per_m3": 1.0}}
  ]
}"#,
        );
        let err = load_config(&path).unwrap_err();
        assert!(err.to_string().contains("exactly one"), "{err}");
    }

    fn synthetic_run(seed: u64, strategy: Strategy) -> RunResult {
        let bids = CollectiveBids { spot: vec![1.0, 2.0], up: vec![0.0; 2], down: vec![0.0; 2] };
        let flows = Flows {
            gen: vec![vec![1.0]; 2],
            pump: vec![vec![0.0]; 2],
            spill: vec![vec![0.0]; 2],
        };
        let day = |d: usize| DayResult {
            day: d,
            bids: bids.clone(),
            activations: vec![(0.0, 0.0); 2],
            flows: flows.clone(),
            start_level: vec![500.0, 0.0],
            end_level: vec![510.0, 0.0],
            revenue: RevenueBreakdown { spot: 100.0, reserve_up: 0.0, reserve_down: 0.0 },
            fallback: false,
        };
        RunResult {
            seed,
            strategy,
            days: vec![day(0), day(1)],
            cumulative: vec![100.0, 200.0],
            bound_violations: 0,
            delivery_violations: 0,
            max_conservation_residual: 0.0,
            fallback_days: 0,
        }
    }

    #[test]
    fn summary_csv_has_the_fixed_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        write_summary(&path, &[synthetic_run(7, Strategy::WithReserves)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("seed,strategy,day,cum_revenue"));
        assert_eq!(lines.next(), Some("7,with-reserves,0,0.100000"));
        assert_eq!(lines.next(), Some("7,with-reserves,1,0.200000"));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn day_table_lists_levels_in_thousands() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        let loaded = load_config(&path).unwrap();
        let out = dir.path().join("days.csv");
        write_days(&out, &loaded.cascade, &synthetic_run(7, Strategy::SpotOnly)).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some(
                "day,end_level_res_km3,spot_bid_mwh,reserve_up_bid_mwh,reserve_down_bid_mwh,\
                 spot_keur,reserve_up_keur,reserve_down_keur,total_keur,fallback"
            )
        );
        assert_eq!(
            lines.next(),
            Some("0,0.510000,3.000000,0.000000,0.000000,0.100000,0.000000,0.000000,0.100000,0")
        );
    }

    #[test]
    fn export_writes_manifest_and_bands() {
        let dir = tempfile::tempdir().unwrap();
        let path = minimal_config(dir.path());
        let loaded = load_config(&path).unwrap();
        let runs =
            vec![synthetic_run(7, Strategy::WithReserves), synthetic_run(8, Strategy::WithReserves)];
        let out = dir.path().join("results");
        let manifest = export_results(&loaded, &path, &runs, &out).unwrap();
        assert_eq!(manifest.files[0], "summary.csv");
        assert!(manifest.files.contains(&"days_with-reserves_seed7.csv".to_string()));
        let bands = fs::read_to_string(out.join("bands.csv")).unwrap();
        assert!(bands.starts_with("strategy,day,p10,p50,p90\n"), "{bands}");
        let text = fs::read_to_string(out.join("manifest.json")).unwrap();
        let reparsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(reparsed["name"], "mini");
        assert_eq!(reparsed["seeds"][0], 7);
    }

    #[test]
    fn median_interpolates_even_counts() {
        assert_eq!(median_of(&[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(median_of(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        assert!(median_of(&[]).is_nan());
    }
}
