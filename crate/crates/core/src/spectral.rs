//! Observables computed from a normalized return panel: the volatility
//! autocorrelation `A(t)`, the equal-time cross-correlation matrix `C`, its
//! spectrum, per-sector eigenvector weights and the eigenvalue histogram.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{NormalizedPanel, SectorMap};
use crate::error::{Error, Result};

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    /// Builds from row-major data; the lower triangle is mirrored from the
    /// upper one so the result is exactly symmetric.
    pub fn from_row_major(n: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Argument(format!("{} entries cannot form a {n}×{n} matrix", data.len())));
        }
        for i in 0..n {
            for j in 0..i {
                data[i * n + j] = data[j * n + i];
            }
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

/// Equal-time cross-correlation matrix `C_ij = ⟨r_i(t) r_j(t)⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix(SymmetricMatrix);

impl CorrelationMatrix {
    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }
}

/// `C_ij = ⟨r_i r_j⟩` over all days. Rows are computed in parallel; each entry
/// is a plain left-to-right sum, so the result does not depend on threading.
pub fn cross_correlation(panel: &NormalizedPanel) -> CorrelationMatrix {
    let n = panel.n_stocks();
    let t = panel.n_days() as f64;
    let cols = panel.columns();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            for j in i..n {
                row[j] = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum::<f64>() / t;
            }
            row
        })
        .collect();
    let data = rows.into_iter().flatten().collect();
    CorrelationMatrix(SymmetricMatrix::from_row_major(n, data).expect("square by construction"))
}

/// Eigenvalues in descending order with unit eigenvectors. Each vector's sign
/// is chosen so its components sum to a non-negative number.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sweep limit of the Jacobi iteration.
pub const MAX_SWEEPS: usize = 100;
/// Convergence threshold on the off-diagonal Frobenius norm.
pub const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;

fn off_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for p in 0..n {
        for q in p + 1..n {
            s += 2.0 * a[p * n + q] * a[p * n + q];
        }
    }
    s.sqrt()
}

/// Full eigen-decomposition by cyclic Jacobi rotations.
///
/// Each rotation zeroes one off-diagonal pair; sweeps repeat until the
/// off-diagonal Frobenius norm is below [`OFF_DIAGONAL_TOLERANCE`] (relative
/// to the matrix norm when that exceeds one). Entries that are negligible next
/// to both diagonal elements are set to zero directly, which lets the norm
/// reach the threshold instead of stalling at rounding level.
pub fn eigendecompose(matrix: &SymmetricMatrix) -> Result<Spectrum> {
    let n = matrix.n;
    if matrix.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let mut a = matrix.data.clone();
    let mut v = SymmetricMatrix::identity(n).data;
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let tol = OFF_DIAGONAL_TOLERANCE * scale;

    let mut converged = off_norm(&a, n) <= tol;
    let mut sweep = 0;
    while !converged {
        if sweep == MAX_SWEEPS {
            return Err(Error::Numeric(format!(
                "Jacobi iteration did not converge in {MAX_SWEEPS} sweeps (off-diagonal norm {:e})",
                off_norm(&a, n)
            )));
        }
        sweep += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let g = 100.0 * apq.abs();
                if sweep > 4 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A ← Jᵀ A J on rows/columns p and q.
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_norm(&a, n) <= tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y * n + y].total_cmp(&a[x * n + x]).then(x.cmp(&y)));
    let values = order.iter().map(|&k| a[k * n + k]).collect();
    let vectors = order
        .iter()
        .map(|&k| {
            let mut u: Vec<f64> = (0..n).map(|i| v[i * n + k]).collect();
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let sign = if u.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            u.iter_mut().for_each(|x| *x *= sign / norm);
            u
        })
        .collect();
    Ok(Spectrum { values, vectors })
}

/// Mean `|u_i|` per sector for one eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorDominance {
    pub eigen_index: usize,
    pub lambda: f64,
    pub scores: Vec<f64>,
    /// Sector with the largest score.
    pub top_sector: usize,
    /// Top score over the mean of the other scores (1 with a single sector,
    /// `None` when every other score is zero).
    pub ratio: Option<f64>,
}

pub fn sector_dominance(spectrum: &Spectrum, sectors: &SectorMap, k: usize) -> Result<SectorDominance> {
    let u = spectrum
        .vectors
        .get(k)
        .ok_or_else(|| Error::Argument(format!("eigen index {k} out of range for {} eigenvalues", spectrum.len())))?;
    if sectors.n_stocks() != u.len() {
        return Err(Error::Argument("sector map does not match the spectrum dimension".into()));
    }
    let n_sec = sectors.n_sectors();
    let mut sum = vec![0.0; n_sec];
    let mut count = vec![0usize; n_sec];
    for (i, x) in u.iter().enumerate() {
        let j = sectors.sector(i);
        sum[j] += x.abs();
        count[j] += 1;
    }
    let scores: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    let top_sector = (0..n_sec)
        .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
        .unwrap_or(0);
    let ratio = if n_sec == 1 {
        Some(1.0)
    } else {
        let rest = (scores.iter().sum::<f64>() - scores[top_sector]) / (n_sec - 1) as f64;
        (rest > 0.0).then(|| scores[top_sector] / rest)
    };
    Ok(SectorDominance { eigen_index: k, lambda: spectrum.values[k], scores, top_sector, ratio })
}

/// Density histogram of the eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenHistogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
    /// The (up to) three largest eigenvalues.
    pub largest: Vec<f64>,
}

impl EigenHistogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// `Σ density · width`, which is 1 for a proper density.
    pub fn total_mass(&self) -> f64 {
        self.edges.windows(2).zip(&self.densities).map(|(w, d)| d * (w[1] - w[0])).sum()
    }
}

/// `bins` uniform bins over `[0, 1.05 λ_0]`.
pub fn eigenvalue_histogram(spectrum: &Spectrum, bins: usize) -> Result<EigenHistogram> {
    let top = spectrum.values.first().copied().unwrap_or(1.0).max(0.0);
    let hi = if top > 0.0 { 1.05 * top } else { 1.0 };
    eigenvalue_histogram_in(spectrum, bins, 0.0, hi)
}

/// Histogram over `[lo, hi]`; values outside the range go to the nearest end
/// bin so the total mass stays 1.
pub fn eigenvalue_histogram_in(spectrum: &Spectrum, bins: usize, lo: f64, hi: f64) -> Result<EigenHistogram> {
    if bins == 0 {
        return Err(Error::Argument("histogram needs at least one bin".into()));
    }
    if !(hi > lo) || spectrum.is_empty() {
        return Err(Error::Argument(format!("empty histogram range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| lo + b as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &x in &spectrum.values {
        let b = ((x - lo) / width).floor();
        let b = if b.is_nan() { 0 } else { b.clamp(0.0, (bins - 1) as f64) as usize };
        counts[b] += 1;
    }
    let total = spectrum.len() as f64;
    let densities = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    let largest = spectrum.values.iter().take(3).copied().collect();
    Ok(EigenHistogram { edges, densities, largest })
}

/// Autocorrelation of `|r|` for one series at lags `0..=max_lag`.
fn volatility_autocorrelation_one(r: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let t = r.len();
    let v: Vec<f64> = r.iter().map(|x| x.abs()).collect();
    let mean = v.iter().sum::<f64>() / t as f64;
    let second = v.iter().map(|x| x * x).sum::<f64>() / t as f64;
    let a0 = second - mean * mean;
    if !(a0 > 0.0) {
        return None;
    }
    Some(
        (0..=max_lag)
            .map(|lag| {
                let pairs = t - lag;
                let cross = v[..pairs].iter().zip(&v[lag..]).map(|(a, b)| a * b).sum::<f64>() / pairs as f64;
                (cross - mean * mean) / a0
            })
            .collect(),
    )
}

/// `A(t)` for `t = 0..=max_lag`, averaged over stocks.
///
/// For each stock `A_i(t) = (⟨|r(t')||r(t'+t)|⟩ - ⟨|r|⟩²) / A_i⁰` where the
/// lagged product averages over the `T - t` overlapping pairs and `⟨|r|⟩` and
/// `A_i⁰ = ⟨r²⟩ - ⟨|r|⟩²` use the whole series.
pub fn volatility_autocorrelation(panel: &NormalizedPanel, max_lag: usize) -> Result<Vec<f64>> {
    let t = panel.n_days();
    if max_lag >= t {
        return Err(Error::Argument(format!("max lag {max_lag} must be below the series length {t}")));
    }
    let per_stock: Vec<Option<Vec<f64>>> = panel
        .columns()
        .par_iter()
        .map(|r| volatility_autocorrelation_one(r, max_lag))
        .collect();
    let mut total = vec![0.0; max_lag + 1];
    for (i, a) in per_stock.iter().enumerate() {
        let a = a.as_ref().ok_or_else(|| {
            Error::Numeric(format!("volatility of stock {} is constant (A⁰ = 0)", panel.tickers()[i]))
        })?;
        total.iter_mut().zip(a).for_each(|(s, x)| *s += x);
    }
    let n = panel.n_stocks() as f64;
    Ok(total.into_iter().map(|s| s / n).collect())
}

/// Settings for [`analyze`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub max_lag: usize,
    pub bins: usize,
    /// How many leading eigenvectors to report.
    pub top_vectors: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { max_lag: 100, bins: 50, top_vectors: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopVector {
    pub lambda: f64,
    pub components: Vec<f64>,
}

/// Everything the analysis stage produces for one panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<f64>,
    pub top_vectors: Vec<TopVector>,
    pub sector_scores: Vec<SectorDominance>,
    pub histogram: EigenHistogram,
    #[serde(rename = "A")]
    pub autocorrelation: Vec<f64>,
    pub tickers: Vec<String>,
    pub sectors: Vec<String>,
    pub sector_of: Vec<usize>,
    pub n_days: usize,
}

pub fn analyze(panel: &NormalizedPanel, config: &AnalysisConfig) -> Result<SpectralReport> {
    let max_lag = config.max_lag.min(panel.n_days().saturating_sub(1));
    let autocorrelation = volatility_autocorrelation(panel, max_lag)?;
    let c = cross_correlation(panel);
    let spectrum = eigendecompose(c.matrix())?;
    let k = config.top_vectors.min(spectrum.len());
    let top_vectors = (0..k)
        .map(|i| TopVector { lambda: spectrum.values[i], components: spectrum.vectors[i].clone() })
        .collect();
    let sector_scores = (0..k)
        .map(|i| sector_dominance(&spectrum, panel.sectors(), i))
        .collect::<Result<Vec<_>>>()?;
    let histogram = eigenvalue_histogram(&spectrum, config.bins)?;
    Ok(SpectralReport {
        eigenvalues: spectrum.values,
        top_vectors,
        sector_scores,
        histogram,
        autocorrelation,
        tickers: panel.tickers().to_vec(),
        sectors: panel.sectors().labels().to_vec(),
        sector_of: panel.sectors().sector_of().to_vec(),
        n_days: panel.n_days(),
    })
}

impl SpectralReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// `lag,value`
    pub fn write_autocorrelation_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lag", "value"])?;
        for (lag, a) in self.autocorrelation.iter().enumerate() {
            w.write_record([lag.to_string(), a.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `stock,abs_u,sector` for eigenvector `k`.
    pub fn write_eigenvector_csv<W: Write>(&self, k: usize, out: W) -> Result<()> {
        let v = self
            .top_vectors
            .get(k)
            .ok_or_else(|| Error::Argument(format!("eigenvector {k} not in report")))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["stock", "abs_u", "sector"])?;
        for (i, u) in v.components.iter().enumerate() {
            w.write_record([self.tickers[i].clone(), u.abs().to_string(), self.sectors[self.sector_of[i]].clone()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `bin_center,density`
    pub fn write_histogram_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_center", "density"])?;
        for (c, d) in self.histogram.centers().iter().zip(&self.histogram.densities) {
            w.write_record([c.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
