use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{Level, Streams};
use crate::error::{Error, Result};

/// How agents are distributed over stocks at start-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopulationMode {
    /// Each agent picks a stock uniformly at random.
    #[default]
    Random,
    /// Exactly `N / n` agents per stock.
    Uniform,
}

impl std::str::FromStr for PopulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Argument(format!("unknown population mode `{other}`"))),
        }
    }
}

/// Fixed agent → stock assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentPopulation {
    stock_of: Vec<u32>,
    counts: Vec<u32>,
    /// Agent ids grouped by stock; `members[offsets[i]..offsets[i + 1]]`.
    members: Vec<u32>,
    offsets: Vec<usize>,
}

impl AgentPopulation {
    pub fn from_assignment(stock_of: Vec<u32>, n_stocks: usize) -> Result<Self> {
        let mut counts = vec![0u32; n_stocks];
        for &s in &stock_of {
            *counts
                .get_mut(s as usize)
                .ok_or_else(|| Error::Argument(format!("agent assigned to stock {s} of {n_stocks}")))? += 1;
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Argument(format!("stock {i} has no agents")));
        }
        let mut offsets = Vec::with_capacity(n_stocks + 1);
        offsets.push(0);
        for &c in &counts {
            offsets.push(offsets.last().unwrap() + c as usize);
        }
        let mut cursor = offsets[..n_stocks].to_vec();
        let mut members = vec![0u32; stock_of.len()];
        for (agent, &s) in stock_of.iter().enumerate() {
            members[cursor[s as usize]] = agent as u32;
            cursor[s as usize] += 1;
        }
        Ok(Self { stock_of, counts, members, offsets })
    }

    pub fn n_agents(&self) -> usize {
        self.stock_of.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.counts.len()
    }

    /// `N_i` for every stock.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn stock_of(&self) -> &[u32] {
        &self.stock_of
    }

    /// Ids of the agents holding stock `i`, ascending.
    pub fn holders(&self, i: usize) -> &[u32] {
        &self.members[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Assigns `n_agents` agents to `n_stocks` stocks.
///
/// In random mode the first `n_stocks` agents hold one stock each and the rest
/// choose uniformly, so no stock is ever left without holders.
pub fn init_population(n_agents: u64, n_stocks: usize, seed: u64, mode: PopulationMode) -> Result<AgentPopulation> {
    if n_stocks == 0 || n_agents < n_stocks as u64 {
        return Err(Error::Argument(format!("need at least one agent per stock (N = {n_agents}, n = {n_stocks})")));
    }
    if n_agents > u32::MAX as u64 {
        return Err(Error::Argument(format!("N = {n_agents} exceeds the supported agent count")));
    }
    let n_agents = n_agents as usize;
    let stock_of: Vec<u32> = match mode {
        PopulationMode::Uniform => {
            if n_agents % n_stocks != 0 {
                return Err(Error::Argument(format!(
                    "uniform population needs N divisible by n (N = {n_agents}, n = {n_stocks})"
                )));
            }
            let per = n_agents / n_stocks;
            (0..n_agents).map(|a| (a / per) as u32).collect()
        }
        PopulationMode::Random => {
            let mut rng = Streams::new(seed).stream(0, Level::Population, 0);
            (0..n_agents)
                .map(|a| if a < n_stocks { a as u32 } else { rng.random_range(0..n_stocks as u32) })
                .collect()
        }
    };
    AgentPopulation::from_assignment(stock_of, n_stocks)
}
