//! Group counts at the stock, sector and market levels.
//!
//! The herding degrees are real numbers; the number of groups they imply is
//! rounded half away from zero and clamped to `[1, members]`.

use crate::calibration::CoMovement;
use crate::error::{Error, Result};

fn whole_groups(nominal: f64, max: f64) -> u32 {
    nominal.round().clamp(1.0, max) as u32
}

/// I-groups for one stock: the average group size is `|R'|` (at least one
/// agent), so `G_I = N_i / max(|R'|, 1)`. Returns `(D_I, G_I)` with
/// `D_I = 1 / G_I`.
pub fn stock_herding(r_prime: f64, holders: u32) -> (f64, u32) {
    debug_assert!(holders >= 1);
    let size = r_prime.abs().max(1.0);
    let groups = whole_groups(holders as f64 / size, holders as f64);
    (1.0 / groups as f64, groups)
}

/// S-groups for one sector. Each S-group holds `n·(H_j - H_M)` I-groups on
/// average, i.e. `D_S = n (H_j - H_M) / N_I_j`.
pub fn sector_group_count(i_groups: u64, n_stocks: usize, h_sector: f64, h_market: f64) -> Result<u32> {
    if h_sector <= h_market {
        return Err(Error::Model(format!(
            "sector co-movement {h_sector} must exceed market co-movement {h_market}"
        )));
    }
    if i_groups == 0 {
        return Err(Error::Model("sector has no I-groups".into()));
    }
    let per_group = n_stocks as f64 * (h_sector - h_market);
    Ok(whole_groups(i_groups as f64 / per_group, i_groups as f64))
}

/// M-groups reachable from each sector and the total number of M-groups.
///
/// Sector `j` sees `N_M_j = H̄ · N_I_M / H_j` effective I-groups and
/// `D_M_j = n·H_M / N_M_j`; its S-groups may join the first `G_M_j`
/// M-groups. The total is the largest `G_M_j` (rounded per sector first).
pub fn market_group_counts(i_groups_market: u64, co: &CoMovement, n_stocks: usize) -> (Vec<u32>, u32) {
    let h_bar = co.mean_sector();
    let per_group = n_stocks as f64 * co.market;
    let counts: Vec<u32> = co
        .sectors
        .iter()
        .map(|&h| {
            let effective = h_bar * i_groups_market as f64 / h;
            whole_groups(effective / per_group, f64::from(u32::MAX))
        })
        .collect();
    let total = counts.iter().copied().max().unwrap_or(1);
    (counts, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stock_level() {
        assert_eq!(stock_herding(40.0, 4000), (0.01, 100));
        assert_eq!(stock_herding(-40.0, 4000), (0.01, 100));
        assert_eq!(stock_herding(0.0, 4000).1, 4000);
        assert_eq!(stock_herding(0.7, 4000).1, 4000);
        assert_eq!(stock_herding(4000.0, 4000), (1.0, 1));
        assert_eq!(stock_herding(1e9, 4000).1, 1);
        // 10 / 4 = 2.5 rounds away from zero
        assert_eq!(stock_herding(4.0, 10).1, 3);
    }

    #[test]
    fn sector_level() {
        // NYSE sector 5: 150 × (0.546 - 0.363) = 27.45 I-groups per S-group
        let per = 150.0 * (0.546 - 0.363);
        assert!((per - 27.45f64).abs() < 1e-9);
        assert_eq!(sector_group_count(2745, 150, 0.546, 0.363).unwrap(), 100);
        assert_eq!(sector_group_count(10_000, 150, 0.546, 0.363).unwrap(), (10_000.0 / per).round() as u32);
        // clamp floor: 10 I-groups, 20 per S-group
        assert_eq!(sector_group_count(10, 100, 0.4, 0.2).unwrap(), 1);
        // clamp ceiling: 100 I-groups, 1 per S-group
        assert_eq!(sector_group_count(100, 10, 0.4, 0.3).unwrap(), 100);
        assert!(sector_group_count(100, 150, 0.3, 0.363).is_err());
    }

    #[test]
    fn market_level() {
        let nyse = CoMovement { market: 0.363, sectors: vec![0.491, 0.414, 0.438, 0.431, 0.546] };
        assert!((nyse.mean_sector() - 0.464).abs() < 1e-12);

        // n·H_M = 10 with n = 100, H_M = 0.1
        let co = CoMovement { market: 0.1, sectors: vec![0.4, 0.5] };
        let (g, total) = market_group_counts(100, &co, 100);
        assert_eq!(g, vec![11, 9]);
        assert_eq!(total, 11);

        let flat = CoMovement { market: 0.2, sectors: vec![0.3; 4] };
        let (g, total) = market_group_counts(5000, &flat, 40);
        assert!(g.iter().all(|&x| x == g[0]));
        assert_eq!(g[0], (5000.0f64 / 8.0).round() as u32);
        assert_eq!(total, g[0]);

        let (g, _) = market_group_counts(1, &co, 100);
        assert_eq!(g, vec![1, 1]);
    }
}
