//! Daily multi-level herding simulation.
//!
//! Each simulated day:
//!
//! 1. every stock computes its weighted return `R'` from the previous `L`
//!    returns and splits its holders into `G_I` I-groups of near-equal size;
//! 2. the I-groups of each sector join `G_S` S-groups, avoiding S-groups that
//!    already hold an I-group of the same stock;
//! 3. the S-groups of sector `j` join the first `G_M_j` M-groups, avoiding
//!    M-groups that already hold an S-group of the same sector;
//! 4. every M-group buys, sells or holds with probabilities `(P, P, 1 - 2P)`
//!    and each member agent trades one share accordingly;
//! 5. the return of stock `i` is its holders' net demand, and all groups
//!    disband.
//!
//! The history starts with `L` zero returns, so the first days are maximally
//! fragmented (every agent alone in its I-group).

mod dispersion;
mod herding;
mod population;
pub mod rng;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use dispersion::{assign_with_dispersion, disperse};
pub use herding::{market_group_counts, sector_group_count, stock_herding};
pub use population::{init_population, AgentPopulation, PopulationMode};

use crate::calibration::{CoMovement, ModelParams};
use crate::data::{ReturnKind, ReturnPanel, SectorMap};
use crate::error::{Error, Result};
use rng::{Level, Streams};

/// The herding hierarchy of one day. Buffers are reused from day to day.
#[derive(Debug, Clone, Default)]
pub struct DayState {
    /// Zero-based simulated day (burn-in included).
    pub day: u64,
    /// Weighted return each stock's agents use on this day.
    pub r_prime: Vec<f64>,
    /// `D_I` per stock.
    pub herding_degree: Vec<f64>,
    /// `G_I` per stock.
    pub i_groups: Vec<u32>,
    /// `N_I_j` per sector.
    pub i_groups_sector: Vec<u64>,
    /// `N_I_M`.
    pub i_groups_market: u64,
    /// `G_S` per sector.
    pub s_groups: Vec<u32>,
    /// `G_M_j` per sector.
    pub m_groups_sector: Vec<u32>,
    /// Total number of M-groups.
    pub m_groups_total: u32,
    /// I-groups of stock `i` are `i_group_offset[i]..i_group_offset[i + 1]`.
    pub i_group_offset: Vec<usize>,
    pub i_group_size: Vec<u32>,
    /// Global S-group index of each I-group.
    pub i_group_s: Vec<u32>,
    /// S-groups of sector `j` are `s_group_offset[j]..s_group_offset[j + 1]`.
    pub s_group_offset: Vec<usize>,
    /// M-group index of each S-group.
    pub s_group_m: Vec<u32>,
    /// One draw per M-group: +1 buy, -1 sell, 0 hold.
    pub decisions: Vec<i8>,
    /// Global I-group of every agent; only filled when agent tracking is on.
    pub agent_i_group: Option<Vec<u32>>,
}

impl DayState {
    /// Checks the structural invariants of the hierarchy against the
    /// population and sector layout. Returns a description of the first
    /// violation.
    pub fn verify(&self, counts: &[u32], sectors: &SectorMap) -> std::result::Result<(), String> {
        let n = counts.len();
        if self.i_group_offset.len() != n + 1 {
            return Err("I-group offsets do not cover every stock".into());
        }
        for i in 0..n {
            let range = self.i_group_offset[i]..self.i_group_offset[i + 1];
            let g = range.len();
            if g != self.i_groups[i] as usize || g == 0 || g > counts[i] as usize {
                return Err(format!("stock {i}: {g} I-groups for {} holders", counts[i]));
            }
            let sizes = &self.i_group_size[range.clone()];
            let total: u64 = sizes.iter().map(|&s| s as u64).sum();
            if total != counts[i] as u64 {
                return Err(format!("stock {i}: I-group members sum to {total}, expected {}", counts[i]));
            }
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            if *lo == 0 || hi - lo > 1 {
                return Err(format!("stock {i}: uneven I-group sizes {lo}..{hi}"));
            }
            let j = sectors.sector(i);
            let s_range = self.s_group_offset[j] as u32..self.s_group_offset[j + 1] as u32;
            for &s in &self.i_group_s[range] {
                if !s_range.contains(&s) {
                    return Err(format!("stock {i}: I-group joined S-group {s} outside its sector"));
                }
            }
        }
        for j in 0..sectors.n_sectors() {
            let members: u64 = sectors.members(j).iter().map(|&i| self.i_groups[i] as u64).sum();
            if members != self.i_groups_sector[j] {
                return Err(format!("sector {j}: N_I_j = {} but stocks hold {members}", self.i_groups_sector[j]));
            }
            let gs = self.s_group_offset[j + 1] - self.s_group_offset[j];
            if gs != self.s_groups[j] as usize || gs == 0 || gs as u64 > self.i_groups_sector[j] {
                return Err(format!("sector {j}: {gs} S-groups for {} I-groups", self.i_groups_sector[j]));
            }
            let gm = self.m_groups_sector[j];
            if gm == 0 || gm > self.m_groups_total {
                return Err(format!("sector {j}: G_M_j = {gm} outside 1..={}", self.m_groups_total));
            }
            for &m in &self.s_group_m[self.s_group_offset[j]..self.s_group_offset[j + 1]] {
                if m >= gm {
                    return Err(format!("sector {j}: S-group joined M-group {m} ≥ G_M_j = {gm}"));
                }
            }
        }
        if self.i_groups_market != self.i_groups_sector.iter().sum::<u64>() {
            return Err("N_I_M differs from the sum over sectors".into());
        }
        if self.m_groups_total != self.m_groups_sector.iter().copied().max().unwrap_or(0) {
            return Err("total M-groups is not the largest per-sector count".into());
        }
        if self.decisions.len() != self.m_groups_total as usize {
            return Err("one decision per M-group expected".into());
        }
        if let Some(agents) = &self.agent_i_group {
            let mut filled = vec![0u32; self.i_group_size.len()];
            for &g in agents {
                filled[g as usize] += 1;
            }
            if filled != self.i_group_size {
                return Err("agent → I-group map disagrees with I-group sizes".into());
            }
        }
        Ok(())
    }
}

/// History of the last `L` returns of one stock, stored twice so the window
/// is always one contiguous slice.
#[derive(Debug, Clone)]
struct History {
    buf: Vec<f64>,
    head: usize,
    len: usize,
}

impl History {
    fn zeros(len: usize) -> Self {
        Self { buf: vec![0.0; 2 * len], head: 0, len }
    }

    /// Oldest to newest.
    fn window(&self) -> &[f64] {
        &self.buf[self.head..self.head + self.len]
    }

    fn push(&mut self, r: f64) {
        self.buf[self.head] = r;
        self.buf[self.head + self.len] = r;
        self.head = (self.head + 1) % self.len;
    }
}

/// Dot product with a fixed summation order (four interleaved partial sums).
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Day-by-day simulator for one parameter set and seed.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: ModelParams,
    co: CoMovement,
    sectors: SectorMap,
    population: AgentPopulation,
    /// Lag coefficients reversed so they line up with an oldest→newest window.
    coefficients: Vec<f64>,
    streams: Streams,
    history: Vec<History>,
    day: u64,
    state: DayState,
    track_agents: bool,
}

impl Simulator {
    pub fn new(params: ModelParams, seed: u64, mode: PopulationMode) -> Result<Self> {
        params.validate()?;
        let population = init_population(params.n_agents, params.n_stocks, seed, mode)?;
        Self::with_population(params, population, seed)
    }

    pub fn with_population(params: ModelParams, population: AgentPopulation, seed: u64) -> Result<Self> {
        params.validate()?;
        if population.n_stocks() != params.n_stocks {
            return Err(Error::Argument("population and params disagree on the stock count".into()));
        }
        if params.n_stocks as u64 > rng::MAX_INDEX {
            return Err(Error::Argument(format!("at most {} stocks are supported", rng::MAX_INDEX)));
        }
        let weights = params.weights()?;
        let mut coefficients = weights.lag_coefficients().to_vec();
        coefficients.reverse();
        let sectors = SectorMap::contiguous(params.n_stocks, params.n_sectors)?;
        Ok(Self {
            co: params.co_movement(),
            history: vec![History::zeros(params.max_horizon); params.n_stocks],
            params,
            sectors,
            population,
            coefficients,
            streams: Streams::new(seed),
            day: 0,
            state: DayState::default(),
            track_agents: false,
        })
    }

    /// Also record which agent joined which I-group (costs one shuffle of
    /// every stock's holders per day).
    pub fn track_agents(&mut self, on: bool) {
        self.track_agents = on;
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn population(&self) -> &AgentPopulation {
        &self.population
    }

    pub fn sectors(&self) -> &SectorMap {
        &self.sectors
    }

    /// Hierarchy formed on the most recent day.
    pub fn day_state(&self) -> &DayState {
        &self.state
    }

    /// Days simulated so far.
    pub fn days_elapsed(&self) -> u64 {
        self.day
    }

    /// Last `L` returns of stock `i`, oldest first.
    pub fn history(&self, i: usize) -> &[f64] {
        self.history[i].window()
    }

    /// Weighted return `R'` stock `i` will use on the next day.
    pub fn weighted_return(&self, i: usize) -> f64 {
        dot(self.history[i].window(), &self.coefficients)
    }

    /// Simulates one day and writes each stock's net demand into `out`.
    pub fn step_into(&mut self, out: &mut Vec<i64>) -> Result<()> {
        let n = self.params.n_stocks;
        let n_sec = self.params.n_sectors;
        let day = self.day;
        let counts = self.population.counts();
        let st = &mut self.state;
        st.day = day;

        // Stock level.
        let history = &self.history;
        let coefficients = &self.coefficients;
        st.r_prime.clear();
        st.r_prime.par_extend((0..n).into_par_iter().map(|i| dot(history[i].window(), coefficients)));
        st.i_groups.clear();
        st.herding_degree.clear();
        for (i, &rp) in st.r_prime.iter().enumerate() {
            let (d, g) = stock_herding(rp, counts[i]);
            st.herding_degree.push(d);
            st.i_groups.push(g);
        }
        st.i_group_offset.clear();
        st.i_group_offset.push(0);
        for &g in &st.i_groups {
            st.i_group_offset.push(st.i_group_offset.last().unwrap() + g as usize);
        }
        st.i_group_size.clear();
        for (i, &g) in st.i_groups.iter().enumerate() {
            let (q, r) = (counts[i] / g, counts[i] % g);
            st.i_group_size.extend((0..g).map(|b| q + u32::from(b < r)));
        }

        // Sector level.
        st.i_groups_sector.clear();
        st.i_groups_sector.resize(n_sec, 0);
        for (i, &g) in st.i_groups.iter().enumerate() {
            st.i_groups_sector[self.sectors.sector(i)] += g as u64;
        }
        st.i_groups_market = st.i_groups_sector.iter().sum();
        st.s_groups.clear();
        for (j, &nij) in st.i_groups_sector.iter().enumerate() {
            st.s_groups.push(sector_group_count(nij, n, self.co.sectors[j], self.co.market)?);
        }
        st.s_group_offset.clear();
        st.s_group_offset.push(0);
        for &g in &st.s_groups {
            st.s_group_offset.push(st.s_group_offset.last().unwrap() + g as usize);
        }

        // Each stock spreads its I-groups over its sector's S-groups.
        let streams = &self.streams;
        let sectors = &self.sectors;
        let (i_groups, s_groups, s_off) = (&st.i_groups, &st.s_groups, &st.s_group_offset);
        let per_stock: Vec<Vec<u32>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let j = sectors.sector(i);
                let mut rng = streams.stream(day, Level::IGroups, i as u64);
                let mut targets = Vec::with_capacity(i_groups[i] as usize);
                disperse(i_groups[i] as usize, s_groups[j], &mut rng, &mut targets);
                let base = s_off[j] as u32;
                targets.iter_mut().for_each(|t| *t += base);
                targets
            })
            .collect();
        st.i_group_s.clear();
        for t in &per_stock {
            st.i_group_s.extend_from_slice(t);
        }

        // Market level.
        let (m_counts, m_total) = market_group_counts(st.i_groups_market, &self.co, n);
        st.m_groups_sector = m_counts;
        st.m_groups_total = m_total;
        st.s_group_m.clear();
        for j in 0..n_sec {
            let mut rng = streams.stream(day, Level::SGroups, j as u64);
            disperse(st.s_groups[j] as usize, st.m_groups_sector[j], &mut rng, &mut st.s_group_m);
        }

        // Decisions and net demand.
        let p = self.params.p_group;
        let mut rng = streams.stream(day, Level::Decisions, 0);
        st.decisions.clear();
        st.decisions.extend((0..m_total).map(|_| {
            let u: f64 = rng.random();
            if u < p {
                1
            } else if u < 2.0 * p {
                -1
            } else {
                0
            }
        }));
        out.clear();
        for i in 0..n {
            let range = st.i_group_offset[i]..st.i_group_offset[i + 1];
            let r: i64 = st.i_group_size[range.clone()]
                .iter()
                .zip(&st.i_group_s[range])
                .map(|(&size, &s)| size as i64 * st.decisions[st.s_group_m[s as usize] as usize] as i64)
                .sum();
            out.push(r);
        }

        if self.track_agents {
            let population = &self.population;
            let (offsets, sizes) = (&st.i_group_offset, &st.i_group_size);
            let mut map = st.agent_i_group.take().unwrap_or_default();
            map.clear();
            map.resize(population.n_agents(), 0);
            let assignments: Vec<Vec<(u32, u32)>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut holders = population.holders(i).to_vec();
                    holders.shuffle(&mut streams.stream(day, Level::Agents, i as u64));
                    let mut pairs = Vec::with_capacity(holders.len());
                    let mut cursor = 0usize;
                    for g in offsets[i]..offsets[i + 1] {
                        for &agent in &holders[cursor..cursor + sizes[g] as usize] {
                            pairs.push((agent, g as u32));
                        }
                        cursor += sizes[g] as usize;
                    }
                    pairs
                })
                .collect();
            for (agent, g) in assignments.into_iter().flatten() {
                map[agent as usize] = g;
            }
            st.agent_i_group = Some(map);
        } else {
            st.agent_i_group = None;
        }

        for (h, &r) in self.history.iter_mut().zip(out.iter()) {
            h.push(r as f64);
        }
        self.day += 1;
        Ok(())
    }

    /// Simulates one day and returns each stock's net demand.
    pub fn step_day(&mut self) -> Result<Vec<i64>> {
        let mut out = Vec::with_capacity(self.params.n_stocks);
        self.step_into(&mut out)?;
        Ok(out)
    }
}

/// Reproducibility record of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub seed: u64,
    pub params_digest: String,
    pub wall_time_seconds: f64,
    pub version: String,
    pub population_mode: PopulationMode,
    pub burn_in: usize,
    pub days: usize,
}

/// Simulated return panel plus its manifest.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub returns: ReturnPanel,
    pub manifest: SimManifest,
}

/// SHA-256 of the params JSON, hex encoded.
pub fn params_digest(params: &ModelParams) -> Result<String> {
    Ok(hex::encode(Sha256::digest(params.to_json()?.as_bytes())))
}

/// Tickers used for simulated stocks: `S001`, `S002`, ...
pub fn simulated_tickers(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(3);
    (1..=n).map(|i| format!("S{i:0width$}")).collect()
}

/// Runs `burn_in + T_out` days with a randomly assigned population and keeps
/// the last `T_out`.
pub fn run_simulation(params: &ModelParams, seed: u64) -> Result<SimOutput> {
    run_simulation_with(params, seed, PopulationMode::Random)
}

pub fn run_simulation_with(params: &ModelParams, seed: u64, mode: PopulationMode) -> Result<SimOutput> {
    let start = Instant::now();
    let mut sim = Simulator::new(params.clone(), seed, mode)?;
    let n = params.n_stocks;
    let mut day = Vec::with_capacity(n);
    for _ in 0..params.burn_in {
        sim.step_into(&mut day)?;
    }
    let mut series = vec![Vec::with_capacity(params.t_out); n];
    for _ in 0..params.t_out {
        sim.step_into(&mut day)?;
        for (col, &r) in series.iter_mut().zip(&day) {
            col.push(r as f64);
        }
    }
    let returns = ReturnPanel::from_columns(
        simulated_tickers(n),
        sim.sectors().clone(),
        series,
        ReturnKind::SimulatedCount,
    )?;
    Ok(SimOutput {
        returns,
        manifest: SimManifest {
            seed,
            params_digest: params_digest(params)?,
            wall_time_seconds: start.elapsed().as_secs_f64(),
            version: crate::VERSION.to_string(),
            population_mode: mode,
            burn_in: params.burn_in,
            days: params.t_out,
        },
    })
}
