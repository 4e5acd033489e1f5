//! Synthetic price panels for testing without proprietary data.
//!
//! Returns follow a factor model with one market factor, one factor per
//! sector and idiosyncratic noise, all scaled by a shared log-AR(1)
//! volatility. Loadings are tuned by bisection so that the co-movement
//! degrees measured on the generated panel land on the requested targets.
//! The same random draws are reused across every tuning step, which makes the
//! measured degrees smooth in the loadings.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::{co_movement_degree, CoMovement, ModelParams, Scope};
use crate::data::{normalize, PricePanel, ReturnKind, ReturnPanel, SectorMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixtureKind {
    NyseLike,
    HkseLike,
    Noise,
}

impl FixtureKind {
    pub fn name(self) -> &'static str {
        match self {
            FixtureKind::NyseLike => "nyse-like",
            FixtureKind::HkseLike => "hkse-like",
            FixtureKind::Noise => "noise",
        }
    }

    /// Co-movement targets; `None` for pure noise.
    pub fn targets(self) -> Option<CoMovement> {
        match self {
            FixtureKind::NyseLike => Some(ModelParams::nyse().co_movement()),
            FixtureKind::HkseLike => Some(ModelParams::hkse().co_movement()),
            FixtureKind::Noise => None,
        }
    }

    /// Number of price rows matching the market's sample length.
    pub fn default_rows(self) -> usize {
        match self {
            FixtureKind::HkseLike => 2146,
            _ => 4286,
        }
    }
}

impl fmt::Display for FixtureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FixtureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nyse-like" | "nyse" => Ok(FixtureKind::NyseLike),
            "hkse-like" | "hkse" => Ok(FixtureKind::HkseLike),
            "noise" => Ok(FixtureKind::Noise),
            _ => Err(Error::Argument(format!("unknown fixture kind '{s}' (expected nyse-like, hkse-like or noise)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub kind: FixtureKind,
    pub seed: u64,
    pub n_stocks: usize,
    pub n_sectors: usize,
    /// Price rows; the return panel has one row fewer.
    pub rows: usize,
}

impl FixtureSpec {
    pub fn new(kind: FixtureKind, seed: u64) -> Self {
        Self { kind, seed, n_stocks: 150, n_sectors: 5, rows: kind.default_rows() }
    }
}

/// Factor loadings as correlations: `market` between any two stocks and
/// `sectors[j]` between two stocks of sector `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loadings {
    pub market: f64,
    pub sectors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub kind: FixtureKind,
    pub prices: PricePanel,
    pub loadings: Loadings,
    /// Co-movement degrees of the generated panel's log returns.
    pub measured: CoMovement,
}

/// Stochastic volatility persistence and shock size.
const VOL_PERSISTENCE: f64 = 0.98;
const VOL_SHOCK: f64 = 0.2;
/// Daily return scale used to turn shocks into prices.
const RETURN_SCALE: f64 = 0.01;
const BISECTION_STEPS: usize = 24;

struct Draws {
    vol: Vec<f64>,
    market: Vec<f64>,
    sector: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
}

impl Draws {
    fn new(seed: u64, days: usize, n_stocks: usize, n_sectors: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normals = |len: usize| -> Vec<f64> { (0..len).map(|_| StandardNormal.sample(&mut rng)).collect() };
        let shocks = normals(days);
        let market = normals(days);
        let sector = (0..n_sectors).map(|_| normals(days)).collect();
        let noise = (0..n_stocks).map(|_| normals(days)).collect();
        let mut h = 0.0;
        let vol = shocks
            .iter()
            .map(|z| {
                h = VOL_PERSISTENCE * h + VOL_SHOCK * z;
                (0.5 * h).exp()
            })
            .collect();
        Self { vol, market, sector, noise }
    }

    fn returns(&self, sectors: &SectorMap, loadings: &Loadings, stocks: &[usize]) -> Vec<Vec<f64>> {
        let a = loadings.market.sqrt();
        stocks
            .iter()
            .map(|&i| {
                let j = sectors.sector(i);
                let rho = loadings.sectors[j];
                let b = (rho - loadings.market).max(0.0).sqrt();
                let c = (1.0 - rho).max(0.0).sqrt();
                (0..self.vol.len())
                    .map(|t| self.vol[t] * (a * self.market[t] + b * self.sector[j][t] + c * self.noise[i][t]))
                    .collect()
            })
            .collect()
    }
}

/// Co-movement degree of the given stocks treated as one market.
fn measure(draws: &Draws, sectors: &SectorMap, stocks: &[usize], loadings: &Loadings) -> Result<f64> {
    let columns = draws.returns(sectors, loadings, stocks);
    let sub = SectorMap::new(vec!["all".into()], vec![0; stocks.len()])?;
    let tickers = stocks.iter().map(|i| i.to_string()).collect();
    let panel = ReturnPanel::from_columns(tickers, sub, columns, ReturnKind::LogEmpirical)?;
    co_movement_degree(&normalize(&panel)?, Scope::Market)
}

/// Bisection for `f(x) = target` with `f` increasing on `[lo, hi]`.
fn bisect(mut lo: f64, mut hi: f64, target: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn tune(draws: &Draws, sectors: &SectorMap, targets: &CoMovement) -> Result<Loadings> {
    let n_sec = sectors.n_sectors();
    let members: Vec<Vec<usize>> = (0..n_sec).map(|j| sectors.members(j)).collect();
    let everyone: Vec<usize> = (0..sectors.n_stocks()).collect();
    // Each sector's degree depends only on its own loading, so the sectors
    // are fitted one at a time for a given market loading.
    let fit_sectors = |market: f64| -> Result<Vec<f64>> {
        (0..n_sec)
            .map(|j| {
                bisect(market, 1.0, targets.sectors[j], |rho| {
                    let mut l = Loadings { market, sectors: vec![market; n_sec] };
                    l.sectors[j] = rho;
                    measure(draws, sectors, &members[j], &l)
                })
            })
            .collect()
    };
    // The market loading cannot exceed the loosest sector's loading.
    let cap = fit_sectors(0.0)?.into_iter().fold(f64::INFINITY, f64::min);
    let market = bisect(0.0, cap, targets.market, |m| {
        let l = Loadings { market: m, sectors: fit_sectors(m)? };
        measure(draws, sectors, &everyone, &l)
    })?;
    Ok(Loadings { market, sectors: fit_sectors(market)? })
}

/// Consecutive weekdays starting 1990-01-02.
pub fn business_days(count: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(1990, 1, 2).expect("valid date");
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

pub fn generate(spec: &FixtureSpec) -> Result<Fixture> {
    if spec.rows < 3 {
        return Err(Error::Argument("a fixture needs at least 3 price rows".into()));
    }
    if spec.n_sectors == 0 || spec.n_stocks < spec.n_sectors {
        return Err(Error::Argument(format!(
            "cannot split {} stocks into {} sectors",
            spec.n_stocks, spec.n_sectors
        )));
    }
    let days = spec.rows - 1;
    let sectors = SectorMap::contiguous(spec.n_stocks, spec.n_sectors)?;
    let tickers: Vec<String> = (1..=spec.n_stocks).map(|i| format!("F{i:03}")).collect();
    let draws = Draws::new(spec.seed, days, spec.n_stocks, spec.n_sectors);

    let loadings = match spec.kind.targets() {
        Some(mut targets) => {
            targets.sectors.resize(spec.n_sectors, targets.mean_sector());
            tune(&draws, &sectors, &targets)?
        }
        None => Loadings { market: 0.0, sectors: vec![0.0; spec.n_sectors] },
    };

    let all: Vec<usize> = (0..spec.n_stocks).collect();
    let returns = draws.returns(&sectors, &loadings, &all);
    let prices: Vec<Vec<f64>> = returns
        .iter()
        .map(|r| {
            let mut level = 100.0f64.ln();
            std::iter::once(100.0)
                .chain(r.iter().map(|x| {
                    level += RETURN_SCALE * x;
                    level.exp()
                }))
                .collect()
        })
        .collect();
    let prices = PricePanel::new(business_days(spec.rows), tickers, prices, sectors)?;

    let normalized = normalize(&crate::data::log_returns(&prices)?)?;
    let measured = CoMovement {
        market: co_movement_degree(&normalized, Scope::Market)?,
        sectors: (0..spec.n_sectors)
            .map(|j| co_movement_degree(&normalized, Scope::Sector(j)))
            .collect::<Result<_>>()?,
    };
    Ok(Fixture { kind: spec.kind, prices, loadings, measured })
}
