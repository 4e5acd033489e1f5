//! Model parameters and how they are derived from market data.
//!
//! Three groups of numbers drive the simulation:
//!
//! * the investment-horizon weights `ξ_l ∝ l^-1.12` and their normalizer `k`,
//!   which turn a stock's return history into the weighted return `R'`;
//! * the co-movement degrees `H_M` (whole market) and `H_j` (per sector),
//!   measured on normalized empirical returns;
//! * the individual trading probability `p` and the M-group probability
//!   `P = 1 - (1 - p)^(n·H_M)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::NormalizedPanel;
use crate::error::{Error, Result};

/// Power-law exponent of the investment-horizon distribution.
pub const HORIZON_EXPONENT: f64 = 1.12;
pub const DEFAULT_MAX_HORIZON: usize = 1000;
pub const DEFAULT_AGENTS: u64 = 600_000;
pub const DEFAULT_BURN_IN: usize = 10_000;
pub const DEFAULT_INSTITUTIONAL_FRACTION: f64 = 0.603;
pub const DEFAULT_YEARLY_TURNOVER: f64 = 1.64;
pub const DEFAULT_TRADING_DAYS: u32 = 250;

/// Population weights `ξ_1..ξ_L` of the investment horizons together with
/// the coefficient `k` that keeps `R'` on the same scale as `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonWeights {
    exponent: f64,
    xi: Vec<f64>,
    k: f64,
    /// `tail[m] = k · Σ_{l>m} ξ_l`, the weight of `R(t-m)` in `R'(t)`.
    tail: Vec<f64>,
}

impl HorizonWeights {
    pub fn new(max_horizon: usize) -> Result<Self> {
        Self::with_exponent(max_horizon, HORIZON_EXPONENT)
    }

    pub fn with_exponent(max_horizon: usize, exponent: f64) -> Result<Self> {
        if max_horizon < 1 {
            return Err(Error::Argument("maximum horizon L must be at least 1".into()));
        }
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::Argument(format!("horizon exponent must be positive, got {exponent}")));
        }
        let raw: Vec<f64> = (1..=max_horizon).map(|l| (l as f64).powf(-exponent)).collect();
        // Smallest terms first.
        let total: f64 = raw.iter().rev().sum();
        let xi: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let first_moment: f64 = xi.iter().enumerate().rev().map(|(i, w)| (i + 1) as f64 * w).sum();
        let k = 1.0 / first_moment;

        let mut tail = vec![0.0; max_horizon];
        let mut acc = 0.0;
        for m in (0..max_horizon).rev() {
            acc += xi[m];
            tail[m] = k * acc;
        }
        Ok(Self { exponent, xi, k, tail })
    }

    /// Maximum horizon `L`.
    pub fn max_horizon(&self) -> usize {
        self.xi.len()
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// `ξ_l` for `l = 1..=L` (index 0 holds `ξ_1`).
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Per-lag coefficients of the single-pass form of `R'`; entry `m` multiplies
    /// `R(t-m)`.
    pub fn lag_coefficients(&self) -> &[f64] {
        &self.tail
    }

    /// Fraction of agents whose horizon is strictly shorter than `horizon` days.
    pub fn mass_below(&self, horizon: usize) -> f64 {
        self.xi.iter().take(horizon.saturating_sub(1)).sum()
    }

    /// Weighted average return `R'(t) = k Σ_l ξ_l Σ_{m<l} R(t-m)`.
    ///
    /// `history` runs oldest to newest and ends with `R(t)`; entries older than
    /// the slice are taken as zero. Swapping the two sums gives
    /// `R'(t) = Σ_m R(t-m) · k Σ_{l>m} ξ_l`, which is what is evaluated here.
    pub fn weighted_return(&self, history: &[f64]) -> f64 {
        history
            .iter()
            .rev()
            .zip(&self.tail)
            .map(|(r, c)| r * c)
            .sum()
    }
}

/// Rising/falling trend amplitudes of one day's normalized returns.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DayTrend {
    pub v_plus: f64,
    pub v_minus: f64,
    pub v_dom: f64,
    pub v_non: f64,
    /// Fraction of stocks in the dominating trend.
    pub zeta: f64,
}

/// Splits one day's returns into rising and falling trends.
///
/// Zero returns belong to neither trend but still count in `n_s`. When
/// `v+ == v-` the rising trend is taken as dominating.
pub fn daily_trend_amplitudes(r: &[f64]) -> DayTrend {
    debug_assert!(!r.is_empty());
    let n_s = r.len() as f64;
    let (mut up, mut down) = (0.0, 0.0);
    let (mut n_up, mut n_down) = (0usize, 0usize);
    for &x in r {
        if x > 0.0 {
            up += x * x;
            n_up += 1;
        } else if x < 0.0 {
            down += x * x;
            n_down += 1;
        }
    }
    let (v_plus, v_minus) = (up / n_s, down / n_s);
    let rising = v_plus >= v_minus;
    DayTrend {
        v_plus,
        v_minus,
        v_dom: if rising { v_plus } else { v_minus },
        v_non: if rising { v_minus } else { v_plus },
        zeta: if rising { n_up } else { n_down } as f64 / n_s,
    }
}

/// Stock set over which a co-movement degree is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Market,
    Sector(usize),
}

/// Day-by-day trend statistics for the stocks in `scope`.
pub fn trend_series(panel: &NormalizedPanel, scope: Scope) -> Result<Vec<DayTrend>> {
    let stocks = match scope {
        Scope::Market => (0..panel.n_stocks()).collect(),
        Scope::Sector(j) => {
            if j >= panel.sectors().n_sectors() {
                return Err(Error::Argument(format!("sector index {j} out of range")));
            }
            panel.sectors().members(j)
        }
    };
    if stocks.is_empty() {
        return Err(Error::Argument("co-movement scope selects no stocks".into()));
    }
    let mut day = Vec::with_capacity(stocks.len());
    Ok((0..panel.n_days())
        .map(|t| {
            panel.day(t, &stocks, &mut day);
            daily_trend_amplitudes(&day)
        })
        .collect())
}

/// `H = ⟨ζ⟩ · ⟨v_dom - v_non⟩` over all days of the panel.
pub fn co_movement_degree(panel: &NormalizedPanel, scope: Scope) -> Result<f64> {
    Ok(degree_from_trends(&trend_series(panel, scope)?))
}

pub(crate) fn degree_from_trends(days: &[DayTrend]) -> f64 {
    let t = days.len() as f64;
    let zeta = days.iter().map(|d| d.zeta).sum::<f64>() / t;
    let amplitude = days.iter().map(|d| d.v_dom - d.v_non).sum::<f64>() / t;
    zeta * amplitude
}

/// Market and per-sector co-movement degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoMovement {
    pub market: f64,
    pub sectors: Vec<f64>,
}

impl CoMovement {
    /// Unweighted mean `H̄` of the sector degrees.
    pub fn mean_sector(&self) -> f64 {
        self.sectors.iter().sum::<f64>() / self.sectors.len() as f64
    }

    /// Checks `0 < H < 1` everywhere and `H_j > H_M` for every sector.
    /// `labels`, when given, name the sectors in error messages.
    pub fn validate(&self, labels: Option<&[String]>) -> Result<()> {
        let name = |j: usize| {
            labels
                .and_then(|l| l.get(j).cloned())
                .unwrap_or_else(|| format!("#{}", j + 1))
        };
        if self.sectors.is_empty() {
            return Err(Error::Calibration("no sector co-movement degrees".into()));
        }
        if !(self.market > 0.0 && self.market < 1.0) {
            return Err(Error::Calibration(format!(
                "market co-movement H_M = {} is outside (0, 1)",
                self.market
            )));
        }
        for (j, &h) in self.sectors.iter().enumerate() {
            if !(h > 0.0 && h < 1.0) {
                return Err(Error::Calibration(format!(
                    "sector {} co-movement H = {h} is outside (0, 1)",
                    name(j)
                )));
            }
            if h <= self.market {
                return Err(Error::Calibration(format!(
                    "sector {} co-movement H = {h:.4} does not exceed the market value H_M = {:.4}; \
                     the sector manifest should group stocks that move together more strongly than the market",
                    name(j),
                    self.market
                )));
            }
        }
        Ok(())
    }
}

/// Daily buy (= sell) probability of one individual investor:
/// yearly trades per retail share, spread over the trading year and split
/// evenly between buying and selling.
pub fn individual_probability(institutional_fraction: f64, yearly_turnover: f64, trading_days: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&institutional_fraction) {
        return Err(Error::Argument(format!(
            "institutional fraction must be in [0, 1), got {institutional_fraction}"
        )));
    }
    if !(yearly_turnover > 0.0 && yearly_turnover.is_finite()) {
        return Err(Error::Argument(format!("yearly turnover must be positive, got {yearly_turnover}")));
    }
    if trading_days == 0 {
        return Err(Error::Argument("trading days per year must be positive".into()));
    }
    let p = yearly_turnover / (1.0 - institutional_fraction) / trading_days as f64 / 2.0;
    if p >= 0.5 {
        return Err(Error::Calibration(format!(
            "individual trading probability p = {p} must stay below 0.5"
        )));
    }
    Ok(p)
}

/// Buy (= sell) probability of an M-group whose `n·H_M` members each trade
/// with probability `p`.
pub fn group_probability(p: f64, n_stocks: usize, h_market: f64) -> Result<f64> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::Calibration(format!("individual probability p = {p} must lie in (0, 0.5)")));
    }
    let exponent = n_stocks as f64 * h_market;
    if !(exponent > 0.0 && exponent.is_finite()) {
        return Err(Error::Calibration(format!("n·H_M = {exponent} must be positive")));
    }
    let big_p = 1.0 - (1.0 - p).powf(exponent);
    if big_p > 0.5 {
        return Err(Error::Calibration(format!(
            "M-group probability P = {big_p:.4} exceeds 0.5, leaving a negative hold probability"
        )));
    }
    Ok(big_p)
}

/// Every constant the simulation needs. Serializes to the params JSON format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(rename = "n")]
    pub n_stocks: usize,
    #[serde(rename = "n_sec")]
    pub n_sectors: usize,
    #[serde(rename = "N")]
    pub n_agents: u64,
    #[serde(rename = "L")]
    pub max_horizon: usize,
    pub exponent: f64,
    #[serde(rename = "H_M")]
    pub h_market: f64,
    #[serde(rename = "H")]
    pub h_sectors: Vec<f64>,
    #[serde(rename = "p")]
    pub p_individual: f64,
    #[serde(rename = "P")]
    pub p_group: f64,
    pub burn_in: usize,
    #[serde(rename = "T_out")]
    pub t_out: usize,
}

impl ModelParams {
    /// Table-1 NYSE configuration: 150 stocks in 5 sectors, `P = 0.363`.
    pub fn nyse() -> Self {
        Self::preset_market(0.363, vec![0.491, 0.414, 0.438, 0.431, 0.546], 4286)
    }

    /// Table-1 HKSE configuration: 150 stocks in 5 sectors, `P = 0.317`.
    pub fn hkse() -> Self {
        Self::preset_market(0.306, vec![0.426, 0.406, 0.364, 0.361, 0.340], 2146)
    }

    fn preset_market(h_market: f64, h_sectors: Vec<f64>, t_out: usize) -> Self {
        let p = individual_probability(DEFAULT_INSTITUTIONAL_FRACTION, DEFAULT_YEARLY_TURNOVER, DEFAULT_TRADING_DAYS)
            .expect("default constants are valid");
        let n_stocks = 150;
        Self {
            n_stocks,
            n_sectors: 5,
            n_agents: DEFAULT_AGENTS,
            max_horizon: DEFAULT_MAX_HORIZON,
            exponent: HORIZON_EXPONENT,
            p_group: group_probability(p, n_stocks, h_market).expect("table values are valid"),
            h_market,
            h_sectors,
            p_individual: p,
            burn_in: DEFAULT_BURN_IN,
            t_out,
        }
    }

    pub fn stocks_per_sector(&self) -> usize {
        self.n_stocks / self.n_sectors
    }

    pub fn co_movement(&self) -> CoMovement {
        CoMovement { market: self.h_market, sectors: self.h_sectors.clone() }
    }

    pub fn weights(&self) -> Result<HorizonWeights> {
        HorizonWeights::with_exponent(self.max_horizon, self.exponent)
    }

    /// Recomputes `P` from the current `p`, `n` and `H_M`.
    pub fn refresh_group_probability(&mut self) -> Result<()> {
        self.p_group = group_probability(self.p_individual, self.n_stocks, self.h_market)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let arg = |m: String| Err(Error::Argument(m));
        if self.n_stocks == 0 || self.n_sectors == 0 || self.n_stocks % self.n_sectors != 0 {
            return arg(format!("n = {} must be a positive multiple of n_sec = {}", self.n_stocks, self.n_sectors));
        }
        if self.n_agents < self.n_stocks as u64 {
            return arg(format!("N = {} must be at least n = {}", self.n_agents, self.n_stocks));
        }
        if self.n_agents > u32::MAX as u64 {
            return arg(format!("N = {} exceeds the supported agent count", self.n_agents));
        }
        if self.max_horizon < 1 {
            return arg("L must be at least 1".into());
        }
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return arg(format!("exponent must be positive, got {}", self.exponent));
        }
        if self.h_sectors.len() != self.n_sectors {
            return arg(format!("{} sector H values given for n_sec = {}", self.h_sectors.len(), self.n_sectors));
        }
        if self.t_out < 1 {
            return arg("T_out must be at least 1".into());
        }
        self.co_movement().validate(None)?;
        if !(self.p_individual > 0.0 && self.p_individual < 0.5) {
            return arg(format!("p = {} must lie in (0, 0.5)", self.p_individual));
        }
        if !(self.p_group >= 0.0 && self.p_group <= 0.5) {
            return arg(format!("P = {} must lie in [0, 0.5]", self.p_group));
        }
        Ok(())
    }

    /// Params JSON with every real value rounded to 10 significant digits.
    pub fn to_json(&self) -> Result<String> {
        let mut rounded = self.clone();
        rounded.exponent = sig10(rounded.exponent);
        rounded.h_market = sig10(rounded.h_market);
        rounded.h_sectors.iter_mut().for_each(|h| *h = sig10(*h));
        rounded.p_individual = sig10(rounded.p_individual);
        rounded.p_group = sig10(rounded.p_group);
        Ok(serde_json::to_string_pretty(&rounded)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn sig10(x: f64) -> f64 {
    format!("{x:.9e}").parse().unwrap_or(x)
}

/// Where the individual probability `p` comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbabilitySource {
    Fixed(f64),
    Derived {
        institutional_fraction: f64,
        yearly_turnover: f64,
        trading_days: u32,
    },
}

impl Default for ProbabilitySource {
    fn default() -> Self {
        ProbabilitySource::Derived {
            institutional_fraction: DEFAULT_INSTITUTIONAL_FRACTION,
            yearly_turnover: DEFAULT_YEARLY_TURNOVER,
            trading_days: DEFAULT_TRADING_DAYS,
        }
    }
}

impl ProbabilitySource {
    pub fn resolve(self) -> Result<f64> {
        match self {
            ProbabilitySource::Fixed(p) => {
                if p > 0.0 && p < 0.5 {
                    Ok(p)
                } else {
                    Err(Error::Calibration(format!("p = {p} must lie in (0, 0.5)")))
                }
            }
            ProbabilitySource::Derived { institutional_fraction, yearly_turnover, trading_days } => {
                individual_probability(institutional_fraction, yearly_turnover, trading_days)
            }
        }
    }
}

/// Constants that are configured rather than measured.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub n_agents: u64,
    pub max_horizon: usize,
    pub exponent: f64,
    pub probability: ProbabilitySource,
    pub burn_in: usize,
    /// Output length; `None` uses the panel length.
    pub t_out: Option<usize>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            n_agents: DEFAULT_AGENTS,
            max_horizon: DEFAULT_MAX_HORIZON,
            exponent: HORIZON_EXPONENT,
            probability: ProbabilitySource::default(),
            burn_in: DEFAULT_BURN_IN,
            t_out: None,
        }
    }
}

/// Measures `H_M` and every `H_j` on `panel` and combines them with the
/// configured constants.
pub fn calibrate(panel: &NormalizedPanel, config: &CalibrationConfig) -> Result<ModelParams> {
    let labels = panel.sectors().labels();
    let n_sec = labels.len();
    let market = co_movement_degree(panel, Scope::Market)?;
    let sectors = (0..n_sec)
        .into_par_iter()
        .map(|j| co_movement_degree(panel, Scope::Sector(j)))
        .collect::<Result<Vec<_>>>()?;
    let co = CoMovement { market, sectors };
    co.validate(Some(labels))?;

    let n = panel.n_stocks();
    if n % n_sec != 0 {
        return Err(Error::Calibration(format!(
            "{n} stocks cannot be simulated as {n_sec} equal sectors"
        )));
    }
    HorizonWeights::with_exponent(config.max_horizon, config.exponent)?;
    let p = config.probability.resolve()?;
    let params = ModelParams {
        n_stocks: n,
        n_sectors: n_sec,
        n_agents: config.n_agents,
        max_horizon: config.max_horizon,
        exponent: config.exponent,
        h_market: co.market,
        p_group: group_probability(p, n, co.market)?,
        h_sectors: co.sectors,
        p_individual: p,
        burn_in: config.burn_in,
        t_out: config.t_out.unwrap_or(panel.n_days()),
    };
    params.validate()?;
    Ok(params)
}

/// Plain-text table of the calibrated values.
pub fn summary(params: &ModelParams, labels: &[String]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "stocks n = {}, sectors n_sec = {}, agents N = {}", params.n_stocks, params.n_sectors, params.n_agents);
    let _ = writeln!(s, "max horizon L = {}, exponent = {}", params.max_horizon, params.exponent);
    if let Ok(w) = params.weights() {
        let _ = writeln!(s, "k = {:.6}, horizon mass below 500 days = {:.4}", w.k(), w.mass_below(500));
    }
    let _ = writeln!(s, "market co-movement H_M = {:.4}", params.h_market);
    for (j, h) in params.h_sectors.iter().enumerate() {
        let label = labels.get(j).map(String::as_str).unwrap_or("?");
        let _ = writeln!(s, "  sector {} ({label}): H = {h:.4}, n(H - H_M) = {:.3}", j + 1, params.n_stocks as f64 * (h - params.h_market));
    }
    let _ = writeln!(s, "mean sector co-movement = {:.4}", params.co_movement().mean_sector());
    let _ = writeln!(s, "individual probability p = {:.6}", params.p_individual);
    let _ = writeln!(s, "M-group probability P = {:.4} (hold {:.4})", params.p_group, 1.0 - 2.0 * params.p_group);
    let _ = writeln!(s, "burn-in = {}, output length = {}", params.burn_in, params.t_out);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize, ReturnKind, ReturnPanel, SectorMap};
    use proptest::prelude::*;

    /// Literal double sum of the weighted-return definition.
    fn weighted_return_double_sum(w: &HorizonWeights, history: &[f64]) -> f64 {
        let at = |m: usize| history.len().checked_sub(m + 1).map_or(0.0, |i| history[i]);
        let mut total = 0.0;
        for l in 1..=w.max_horizon() {
            let inner: f64 = (0..l).map(at).sum();
            total += w.xi()[l - 1] * inner;
        }
        w.k() * total
    }

    /// `1 / Σ_l Σ_{m≥l} ξ_m`, the normalizer as written with a double sum.
    fn k_double_sum(w: &HorizonWeights) -> f64 {
        let l_max = w.max_horizon();
        let mut s = 0.0;
        for l in 1..=l_max {
            for m in l..=l_max {
                s += w.xi()[m - 1];
            }
        }
        1.0 / s
    }

    #[test]
    fn single_horizon() {
        let w = HorizonWeights::new(1).unwrap();
        assert_eq!(w.xi(), &[1.0]);
        assert_eq!(w.k(), 1.0);
        assert!(HorizonWeights::new(0).is_err());
    }

    #[test]
    fn two_horizons() {
        let w = HorizonWeights::new(2).unwrap();
        let r = 2f64.powf(-1.12);
        assert!((r - 0.460_094).abs() < 1e-6);
        assert!((w.xi()[0] - 1.0 / (1.0 + r)).abs() < 1e-15);
        assert!((w.xi()[0] - 0.68488).abs() < 1e-5);
        assert!((w.xi()[1] - 0.31512).abs() < 1e-5);
        assert!((w.k() - 0.76039).abs() < 1e-5);
        assert!((w.k() - 1.0 / (1.0 + w.xi()[1])).abs() < 1e-15);
        assert!((w.k() - k_double_sum(&w)).abs() < 1e-12);
        // (R(t-1), R(t)) = (1, 0)
        let rp = w.weighted_return(&[1.0, 0.0]);
        assert!((rp - w.k() * w.xi()[1]).abs() < 1e-15);
        assert!((rp - 0.23962).abs() < 2e-5);
    }

    #[test]
    fn k_matches_double_sum() {
        for l in [1, 2, 3, 10, 57, 1000] {
            let w = HorizonWeights::new(l).unwrap();
            assert!((w.k() - k_double_sum(&w)).abs() < 1e-12, "L = {l}");
        }
    }

    #[test]
    fn ninety_four_percent_below_five_hundred_days() {
        let w = HorizonWeights::new(1000).unwrap();
        assert!((w.mass_below(500) - 0.94).abs() < 0.005, "{}", w.mass_below(500));
    }

    #[test]
    fn normalization_identities_for_all_horizons() {
        for l in 1..=2000 {
            let w = HorizonWeights::new(l).unwrap();
            let sum: f64 = w.xi().iter().sum();
            let moment: f64 = w.xi().iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
            assert!((sum - 1.0).abs() < 1e-12, "L = {l}");
            assert!((w.k() * moment - 1.0).abs() < 1e-12, "L = {l}");
            assert!(w.xi().windows(2).all(|p| p[1] < p[0]), "L = {l}");
        }
    }

    #[test]
    fn weighted_return_fixed_points() {
        let w = HorizonWeights::new(50).unwrap();
        assert_eq!(w.weighted_return(&[0.0; 50]), 0.0);
        let c = -3.25;
        assert!((w.weighted_return(&[c; 50]) - c).abs() < 1e-12);
        // short history is zero-padded
        assert!((w.weighted_return(&[2.0]) - 2.0 * w.lag_coefficients()[0]).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn single_pass_equals_double_sum(
            l in 1usize..60,
            hist in prop::collection::vec(-100.0f64..100.0, 0..80),
        ) {
            let w = HorizonWeights::new(l).unwrap();
            let a = w.weighted_return(&hist);
            let b = weighted_return_double_sum(&w, &hist);
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }

        #[test]
        fn weighted_return_bound_and_linearity(
            l in 1usize..300,
            seed_x in prop::collection::vec(-1.0f64..1.0, 300),
            seed_y in prop::collection::vec(-1.0f64..1.0, 300),
            bound in 0.1f64..5000.0,
            a in -10.0f64..10.0,
            b in -10.0f64..10.0,
        ) {
            let w = HorizonWeights::new(l).unwrap();
            let x: Vec<f64> = seed_x[..l].iter().map(|v| v * bound).collect();
            let y: Vec<f64> = seed_y[..l].to_vec();
            prop_assert!(w.weighted_return(&x).abs() <= bound * (1.0 + 1e-12));
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = w.weighted_return(&mix);
            let rhs = a * w.weighted_return(&x) + b * w.weighted_return(&y);
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn trend_examples() {
        let d = daily_trend_amplitudes(&[1.0, 1.0]);
        assert_eq!((d.v_plus, d.v_minus, d.v_dom, d.v_non, d.zeta), (1.0, 0.0, 1.0, 0.0, 1.0));

        let d = daily_trend_amplitudes(&[1.0, -1.0]);
        assert_eq!((d.v_plus, d.v_minus, d.zeta), (0.5, 0.5, 0.5));

        let d = daily_trend_amplitudes(&[2.0, -1.0, 0.0]);
        assert!((d.v_plus - 4.0 / 3.0).abs() < 1e-15);
        assert!((d.v_minus - 1.0 / 3.0).abs() < 1e-15);
        assert!((d.zeta - 1.0 / 3.0).abs() < 1e-15);

        // falling trend dominates
        let d = daily_trend_amplitudes(&[0.5, -3.0, -0.1, 0.0]);
        assert_eq!(d.v_dom, d.v_minus);
        assert_eq!(d.zeta, 0.5);
    }

    fn panel_from(series: Vec<Vec<f64>>, sector_of: Vec<usize>, n_sec: usize) -> NormalizedPanel {
        let n = series.len();
        let labels = (0..n_sec).map(|j| format!("s{j}")).collect();
        let tickers = (0..n).map(|i| format!("T{i}")).collect();
        let sectors = SectorMap::new(labels, sector_of).unwrap();
        normalize(&ReturnPanel::from_columns(tickers, sectors, series, ReturnKind::LogEmpirical).unwrap()).unwrap()
    }

    fn noise(seed: u64, n: usize, t: usize) -> Vec<Vec<f64>> {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..t).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn identical_series_give_unit_co_movement() {
        let base = noise(3, 1, 500).remove(0);
        let panel = panel_from(vec![base; 6], vec![0, 0, 0, 1, 1, 1], 2);
        for scope in [Scope::Market, Scope::Sector(0), Scope::Sector(1)] {
            assert!((co_movement_degree(&panel, scope).unwrap() - 1.0).abs() < 1e-9);
        }
        let err = calibrate(&panel, &CalibrationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Calibration(_)), "{err}");
        assert!(err.to_string().contains("s0"), "{err}");
    }

    #[test]
    fn co_movement_bounds_and_permutation_invariance() {
        let panel = panel_from(noise(11, 12, 400), (0..12).map(|i| i / 4).collect(), 3);
        let h = co_movement_degree(&panel, Scope::Market).unwrap();
        let days = trend_series(&panel, Scope::Market).unwrap();
        let zeta = days.iter().map(|d| d.zeta).sum::<f64>() / days.len() as f64;
        let vdom = days.iter().map(|d| d.v_dom).sum::<f64>() / days.len() as f64;
        let max_ms = (0..panel.n_days())
            .map(|t| (0..12).map(|i| panel.series(i)[t].powi(2)).sum::<f64>() / 12.0)
            .fold(0.0, f64::max);
        assert!(0.0 <= h && h <= zeta * vdom && zeta * vdom <= max_ms);

        let order = [5, 2, 11, 0, 7, 1, 9, 3, 10, 4, 8, 6];
        let shuffled = panel.permuted(&order);
        let h2 = co_movement_degree(&shuffled, Scope::Market).unwrap();
        assert!((h - h2).abs() < 1e-12);
        assert!(co_movement_degree(&panel, Scope::Sector(7)).is_err());
    }

    #[test]
    fn probability_chain() {
        let p = individual_probability(0.603, 1.64, 250).unwrap();
        assert!((p - 0.00826).abs() < 1e-5, "{p}");
        assert!((individual_probability(0.5, 1.0, 250).unwrap() - 0.004).abs() < 1e-15);
        assert!(individual_probability(0.0, 0.0, 250).is_err());
        assert!(individual_probability(0.9, 300.0, 250).is_err());

        let nyse = group_probability(0.00826, 150, 0.363).unwrap();
        let hkse = group_probability(0.00826, 150, 0.306).unwrap();
        assert!((nyse - 0.363).abs() < 1e-3, "{nyse}");
        assert!((hkse - 0.317).abs() < 1e-3, "{hkse}");
        assert!(group_probability(1e-12, 150, 0.363).unwrap() < 1e-9);
        assert!(group_probability(0.0, 150, 0.363).is_err());
        assert!(group_probability(0.2, 150, 0.9).is_err());
    }

    proptest! {
        #[test]
        fn group_probability_is_increasing(
            p in 0.0001f64..0.004, n in 1usize..200, h in 0.01f64..0.9, bump in 1e-3f64..0.5,
        ) {
            let base = group_probability(p, n, h).unwrap();
            if let Ok(v) = group_probability(p * (1.0 + bump), n, h) { prop_assert!(v > base); }
            if let Ok(v) = group_probability(p, n + 1, h) { prop_assert!(v > base); }
            if let Ok(v) = group_probability(p, n, h * (1.0 + bump)) { prop_assert!(v > base); }
        }
    }

    #[test]
    fn params_json_round_trip() {
        let params = ModelParams::nyse();
        params.validate().unwrap();
        assert!((params.p_group - 0.363).abs() < 1e-3);
        let json = params.to_json().unwrap();
        for key in ["\"n\"", "\"n_sec\"", "\"N\"", "\"L\"", "\"exponent\"", "\"H_M\"", "\"H\"", "\"p\"", "\"P\"", "\"burn_in\"", "\"T_out\""] {
            assert!(json.contains(key), "{key} missing in {json}");
        }
        let back = ModelParams::from_json(&json).unwrap();
        assert_eq!(back.h_sectors, params.h_sectors);
        assert!((back.p_group - params.p_group).abs() < 1e-10 * params.p_group);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn validation_rejects_inverted_co_movement() {
        let mut params = ModelParams::nyse();
        params.h_sectors[2] = 0.3;
        assert!(params.validate().is_err());
        let mut params = ModelParams::nyse();
        params.n_stocks = 151;
        assert!(params.validate().is_err());
    }

    #[test]
    fn calibrate_on_factor_panel() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (n, t) = (20, 1500);
        let mut cols = vec![Vec::with_capacity(t); n];
        for _ in 0..t {
            let m: f64 = StandardNormal.sample(&mut rng);
            let s: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
            for (i, col) in cols.iter_mut().enumerate() {
                let e: f64 = StandardNormal.sample(&mut rng);
                col.push(0.5 * m + 0.6 * s[i / 10] + 0.5 * e);
            }
        }
        let panel = panel_from(cols, (0..n).map(|i| i / 10).collect(), 2);
        let params = calibrate(&panel, &CalibrationConfig::default()).unwrap();
        assert_eq!(params.t_out, t);
        assert!(params.h_sectors.iter().all(|&h| h > params.h_market));
        let direct = co_movement_degree(&panel, Scope::Sector(1)).unwrap();
        assert_eq!(params.h_sectors[1], direct);

        let cfg = CalibrationConfig { probability: ProbabilitySource::Fixed(0.004), ..Default::default() };
        let params = calibrate(&panel, &cfg).unwrap();
        assert_eq!(params.p_individual, 0.004);
        assert_eq!(params.p_group, group_probability(0.004, n, params.h_market).unwrap());
    }
}
