//! Random-process models for the three market uncertainties (spot prices,
//! natural inflows, reserve activations) plus the expected bid coefficients
//! a trader prices its day-ahead bids with.

use crate::cascade::Cascade;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StochasticError {
    #[error("hour count must be positive")]
    EmptyHorizon,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// A quantity with distinct values in peak and off-peak hours.
#[derive(Debug, Clone, Copy)]
pub struct PeakSplit {
    pub peak: f64,
    pub off_peak: f64,
}

impl PeakSplit {
    pub fn at(&self, day: usize, hour_of_day: usize) -> f64 {
        if is_peak(day, hour_of_day) {
            self.peak
        } else {
            self.off_peak
        }
    }
}

/// Peak window: 08:00-20:00 on weekdays. Day 0 is a Monday, so weekdays are
/// day % 7 < 5.
pub fn is_peak(day: usize, hour_of_day: usize) -> bool {
    day % 7 < 5 && (8..20).contains(&hour_of_day)
}

/// Spot-price process: log-deviations from a forward curve follow a
/// mean-reverting walk around a drifting long-term level,
///   x_{t+1} = x_t + a (y_t - x_t) + vol_x w,   y_{t+1} = y_t + vol_y w',
/// with x_0 = y_0 = 0, and the price is
///   spot_t = forward_t * exp(x_t) / E[exp(x_t)].
/// The normalizer keeps E[spot_t] = forward_t exactly.
#[derive(Debug, Clone)]
pub struct PriceModel {
    /// per-hour forward curve over the full horizon [EUR/MWh]
    pub forward_curve: Vec<f64>,
    pub mean_reversion: f64,
    pub vol_x: f64,
    pub vol_y: f64,
    /// per-hour reserve capacity prices [EUR/MWh], same length as the curve
    pub capacity_up: Vec<f64>,
    pub capacity_down: Vec<f64>,
    /// expected activation energy prices [EUR/MWh], split peak/off-peak
    pub activation_up: PeakSplit,
    pub activation_down: PeakSplit,
}

impl PriceModel {
    pub fn validate(&self) -> Result<(), StochasticError> {
        if !(0.0..=1.0).contains(&self.mean_reversion) {
            return Err(StochasticError::Invalid("mean reversion must lie in [0, 1]".into()));
        }
        if self.vol_x < 0.0 || self.vol_y < 0.0 {
            return Err(StochasticError::Invalid("volatilities must be nonnegative".into()));
        }
        if self.forward_curve.is_empty() || self.forward_curve.iter().any(|&p| p <= 0.0) {
            return Err(StochasticError::Invalid(
                "forward curve must be nonempty and strictly positive".into(),
            ));
        }
        if self.capacity_up.len() != self.forward_curve.len()
            || self.capacity_down.len() != self.forward_curve.len()
        {
            return Err(StochasticError::Dimension(
                "capacity price series must match the forward curve length".into(),
            ));
        }
        Ok(())
    }
}

/// Inflow process: reservoir r receives (year_factor_r * daily_mean +
/// daily_shock)^+ spread evenly over the day's hours. The year factor is
/// drawn once per run, the shock once per day.
#[derive(Debug, Clone)]
pub struct InflowModel {
    /// expected inflow volume per day per reservoir [m3], [day][reservoir]
    pub daily_means: Vec<Vec<f64>>,
    /// standard deviation of the year factor around 1, per reservoir
    pub year_type_sd: Vec<f64>,
    /// standard deviation of the additive daily shock [m3], [day][reservoir]
    pub daily_sd: Vec<Vec<f64>>,
}

impl InflowModel {
    pub fn validate(&self) -> Result<(), StochasticError> {
        if self.daily_means.is_empty() {
            return Err(StochasticError::Invalid("daily means table is empty".into()));
        }
        let r = self.daily_means[0].len();
        if self.daily_means.iter().any(|row| row.len() != r)
            || self.daily_sd.len() != self.daily_means.len()
            || self.daily_sd.iter().any(|row| row.len() != r)
            || self.year_type_sd.len() != r
        {
            return Err(StochasticError::Dimension("ragged inflow tables".into()));
        }
        if self.daily_means.iter().flatten().any(|&m| m < 0.0)
            || self.daily_sd.iter().flatten().any(|&s| s < 0.0)
            || self.year_type_sd.iter().any(|&s| s < 0.0)
        {
            return Err(StochasticError::Invalid("inflow parameters must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn num_days(&self) -> usize {
        self.daily_means.len()
    }
}

/// Hourly reserve-activation events: independent draws over
/// {none, up, down}. Up and down are never called in the same hour.
#[derive(Debug, Clone, Copy)]
pub struct ActivationModel {
    pub p_none: f64,
    pub p_up: f64,
    pub p_down: f64,
}

impl ActivationModel {
    pub fn validate(&self) -> Result<(), StochasticError> {
        if self.p_none <= 0.0 || self.p_up <= 0.0 || self.p_down <= 0.0 {
            return Err(StochasticError::Invalid(
                "activation probabilities must be strictly positive".into(),
            ));
        }
        if ((self.p_none + self.p_up + self.p_down) - 1.0).abs() > 1e-9 {
            return Err(StochasticError::Invalid("activation probabilities must sum to 1".into()));
        }
        Ok(())
    }
}

/// One realized path of all exogenous quantities.
#[derive(Debug, Clone)]
pub struct Scenario {
    /// per-hour spot price [EUR/MWh]
    pub spot: Vec<f64>,
    /// [hour][reservoir] inflow rate [m3/h]
    pub inflows: Vec<Vec<f64>>,
    /// per-hour (up, down) activation indicators, each 0.0 or 1.0
    pub activations: Vec<(f64, f64)>,
    /// per-hour realized activation energy prices [EUR/MWh]
    pub act_price_up: Vec<f64>,
    pub act_price_down: Vec<f64>,
    /// seed and stream the scenario was drawn from
    pub seed: u64,
    pub label: String,
}

/// Expected prices and activation fractions used as bid-coefficient inputs
/// for one trading day.
#[derive(Debug, Clone)]
pub struct BidCoefficients {
    pub spot: Vec<f64>,
    pub reserve_up: Vec<f64>,
    pub reserve_down: Vec<f64>,
    /// expected activation fraction (the probability of a call)
    pub mean_up: f64,
    pub mean_down: f64,
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Named substream of the run-level seed: reproducible and independent of
/// the order other streams are consumed in.
pub fn stream_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(name));
    rng
}

/// E[exp(x_t)] for t = 1..=hours, computed from the exact Gaussian variance
/// recursion of (x, y). Entry k normalizes the price of hour k (0-based),
/// which is driven by x_{k+1}.
pub fn price_normalizers(m: &PriceModel, hours: usize) -> Vec<f64> {
    let a = m.mean_reversion;
    let (mut vxx, mut vxy, mut vyy) = (0.0f64, 0.0f64, 0.0f64);
    let mut out = Vec::with_capacity(hours);
    for _ in 0..hours {
        let nxx = (1.0 - a).powi(2) * vxx
            + 2.0 * a * (1.0 - a) * vxy
            + a * a * vyy
            + m.vol_x * m.vol_x;
        let nxy = (1.0 - a) * vxy + a * vyy;
        let nyy = vyy + m.vol_y * m.vol_y;
        vxx = nxx;
        vxy = nxy;
        vyy = nyy;
        out.push((vxx / 2.0).exp());
    }
    out
}

pub fn sample_spot_prices(
    m: &PriceModel,
    hours: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, StochasticError> {
    if hours == 0 {
        return Err(StochasticError::EmptyHorizon);
    }
    if m.forward_curve.len() < hours {
        return Err(StochasticError::Dimension(format!(
            "forward curve has {} hours, {} requested",
            m.forward_curve.len(),
            hours
        )));
    }
    let norms = price_normalizers(m, hours);
    let (mut x, mut y) = (0.0f64, 0.0f64);
    let mut out = Vec::with_capacity(hours);
    for k in 0..hours {
        let wx: f64 = rng.sample(StandardNormal);
        let wy: f64 = rng.sample(StandardNormal);
        let xn = x + m.mean_reversion * (y - x) + m.vol_x * wx;
        y += m.vol_y * wy;
        x = xn;
        out.push(m.forward_curve[k] * x.exp() / norms[k]);
    }
    Ok(out)
}

/// Samples hourly inflows for every reservoir over the model's full day
/// range. Output is [hour][reservoir] with hours = days * hours_per_day;
/// each reservoir's rate is constant within a day.
pub fn sample_inflows(
    m: &InflowModel,
    cascade: &Cascade,
    hours_per_day: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>, StochasticError> {
    m.validate()?;
    if hours_per_day == 0 {
        return Err(StochasticError::EmptyHorizon);
    }
    let r = cascade.num_reservoirs();
    if m.daily_means[0].len() != r {
        return Err(StochasticError::Dimension(format!(
            "inflow table covers {} reservoirs, cascade has {r}",
            m.daily_means[0].len()
        )));
    }
    let year_factor: Vec<f64> = m
        .year_type_sd
        .iter()
        .map(|&sd| 1.0 + sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut out = Vec::with_capacity(m.num_days() * hours_per_day);
    for d in 0..m.num_days() {
        let mut rates = Vec::with_capacity(r);
        for res in 0..r {
            let shock = m.daily_sd[d][res] * rng.sample::<f64, _>(StandardNormal);
            let volume = (year_factor[res] * m.daily_means[d][res] + shock).max(0.0);
            rates.push(volume / hours_per_day as f64);
        }
        for _ in 0..hours_per_day {
            out.push(rates.clone());
        }
    }
    Ok(out)
}

pub fn sample_activations(
    m: &ActivationModel,
    hours: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(f64, f64)> {
    (0..hours)
        .map(|_| {
            let u: f64 = rng.random();
            if u < m.p_up {
                (1.0, 0.0)
            } else if u < m.p_up + m.p_down {
                (0.0, 1.0)
            } else {
                (0.0, 0.0)
            }
        })
        .collect()
}

/// Realized activation energy prices over a day range: the peak/off-peak
/// expected values, which is how the simulation settles called reserves.
pub fn activation_prices(
    m: &PriceModel,
    start_day: usize,
    days: usize,
    hours_per_day: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut up = Vec::with_capacity(days * hours_per_day);
    let mut down = Vec::with_capacity(days * hours_per_day);
    for d in start_day..start_day + days {
        for h in 0..hours_per_day {
            up.push(m.activation_up.at(d, h));
            down.push(m.activation_down.at(d, h));
        }
    }
    (up, down)
}

/// Bid coefficients for day `day` given that day's (already revealed) spot
/// prices: the spot coefficient is the price itself, the reserve
/// coefficients add the expected activation payment on top of the capacity
/// price, and the mean activation fractions are the call probabilities.
pub fn expected_bid_coefficients(
    m: &PriceModel,
    a: &ActivationModel,
    day_spot: &[f64],
    day: usize,
) -> Result<BidCoefficients, StochasticError> {
    let h = day_spot.len();
    if h == 0 {
        return Err(StochasticError::EmptyHorizon);
    }
    let offset = day * h;
    if offset + h > m.capacity_up.len() {
        return Err(StochasticError::Dimension(format!(
            "capacity prices end before day {day}"
        )));
    }
    let mut reserve_up = Vec::with_capacity(h);
    let mut reserve_down = Vec::with_capacity(h);
    for hod in 0..h {
        reserve_up.push(m.capacity_up[offset + hod] + a.p_up * m.activation_up.at(day, hod));
        reserve_down
            .push(m.capacity_down[offset + hod] + a.p_down * m.activation_down.at(day, hod));
    }
    Ok(BidCoefficients {
        spot: day_spot.to_vec(),
        reserve_up,
        reserve_down,
        mean_up: a.p_up,
        mean_down: a.p_down,
    })
}
