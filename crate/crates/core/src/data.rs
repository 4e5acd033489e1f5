//! Price panels, sector manifests and return series.
//!
//! All tables are stored per stock (one `Vec<f64>` per ticker, indexed by
//! day) because every downstream statistic walks one stock's series at a time.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ticker → sector assignment. Sector indices are contiguous in `0..n_sectors`
/// and every sector has at least one member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorMap {
    labels: Vec<String>,
    sector_of: Vec<usize>,
}

impl SectorMap {
    pub fn new(labels: Vec<String>, sector_of: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Argument("at least one sector is required".into()));
        }
        let mut counts = vec![0usize; labels.len()];
        for (i, &j) in sector_of.iter().enumerate() {
            let slot = counts.get_mut(j).ok_or_else(|| {
                Error::Argument(format!("stock {i} has sector index {j} out of range"))
            })?;
            *slot += 1;
        }
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Argument(format!("sector {} has no stocks", labels[j])));
        }
        Ok(Self { labels, sector_of })
    }

    /// Equal-size sectors laid out in consecutive blocks, labelled
    /// `sector1..sectorK`. This is the layout the simulator uses.
    pub fn contiguous(n_stocks: usize, n_sectors: usize) -> Result<Self> {
        if n_sectors == 0 || n_stocks == 0 || n_stocks % n_sectors != 0 {
            return Err(Error::Argument(format!(
                "{n_stocks} stocks cannot be split evenly into {n_sectors} sectors"
            )));
        }
        let per = n_stocks / n_sectors;
        let labels = (1..=n_sectors).map(|j| format!("sector{j}")).collect();
        let sector_of = (0..n_stocks).map(|i| i / per).collect();
        Self::new(labels, sector_of)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sector_of(&self) -> &[usize] {
        &self.sector_of
    }

    pub fn sector(&self, stock: usize) -> usize {
        self.sector_of[stock]
    }

    pub fn n_sectors(&self) -> usize {
        self.labels.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.sector_of.len()
    }

    /// Stock indices belonging to sector `j`, in column order.
    pub fn members(&self, j: usize) -> Vec<usize> {
        self.sector_of
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (s == j).then_some(i))
            .collect()
    }

    /// The same map with stock columns reordered: new column `k` is old
    /// column `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            labels: self.labels.clone(),
            sector_of: order.iter().map(|&i| self.sector_of[i]).collect(),
        }
    }
}

/// Aligned date × stock table of daily closing prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    prices: Vec<Vec<f64>>,
    sectors: SectorMap,
}

impl PricePanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        prices: Vec<Vec<f64>>,
        sectors: SectorMap,
    ) -> Result<Self> {
        if tickers.is_empty() || dates.is_empty() {
            return Err(Error::Argument("price panel must have at least one date and one ticker".into()));
        }
        if prices.len() != tickers.len() || sectors.n_stocks() != tickers.len() {
            return Err(Error::Argument("price columns, tickers and sector map disagree in length".into()));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Argument(format!("dates not strictly increasing at {}", w[1])));
        }
        for (ticker, column) in tickers.iter().zip(&prices) {
            if column.len() != dates.len() {
                return Err(Error::Argument(format!("column {ticker} has {} rows, expected {}", column.len(), dates.len())));
            }
            if let Some(t) = column.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
                return Err(Error::Argument(format!(
                    "non-positive price {} for {ticker} on {}",
                    column[t], dates[t]
                )));
            }
        }
        Ok(Self { dates, tickers, prices, sectors })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    /// Closing prices of stock `i`, one entry per date.
    pub fn prices(&self, i: usize) -> &[f64] {
        &self.prices[i]
    }

    pub fn sectors(&self) -> &SectorMap {
        &self.sectors
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.tickers.len()
    }
}

/// Origin of the numbers in a [`ReturnPanel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReturnKind {
    /// `ln(Y(t)/Y(t-1))` of observed closing prices.
    LogEmpirical,
    /// Integer demand minus supply from the herding simulation.
    SimulatedCount,
}

/// Date × stock table of returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    tickers: Vec<String>,
    sectors: SectorMap,
    series: Vec<Vec<f64>>,
    kind: ReturnKind,
}

impl ReturnPanel {
    /// Builds a panel from per-stock series. Every series must have the same
    /// non-zero length and contain only finite values.
    pub fn from_columns(
        tickers: Vec<String>,
        sectors: SectorMap,
        series: Vec<Vec<f64>>,
        kind: ReturnKind,
    ) -> Result<Self> {
        if tickers.len() != series.len() || sectors.n_stocks() != series.len() {
            return Err(Error::Argument("return columns, tickers and sector map disagree in length".into()));
        }
        let t = series.first().map_or(0, Vec::len);
        if t == 0 {
            return Err(Error::Argument("return panel must have at least one row".into()));
        }
        for (ticker, s) in tickers.iter().zip(&series) {
            if s.len() != t {
                return Err(Error::Argument(format!("return column {ticker} has {} rows, expected {t}", s.len())));
            }
            if let Some(row) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::Argument(format!("non-finite return for {ticker} at row {}", row + 1)));
            }
        }
        Ok(Self { tickers, sectors, series, kind })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn sectors(&self) -> &SectorMap {
        &self.sectors
    }

    pub fn series(&self, i: usize) -> &[f64] {
        &self.series[i]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.series
    }

    pub fn kind(&self) -> ReturnKind {
        self.kind
    }

    pub fn n_days(&self) -> usize {
        self.series[0].len()
    }

    pub fn n_stocks(&self) -> usize {
        self.series.len()
    }
}

/// Returns shifted and scaled to zero mean and unit population variance per
/// stock.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPanel {
    tickers: Vec<String>,
    sectors: SectorMap,
    series: Vec<Vec<f64>>,
    mean: Vec<f64>,
    sigma: Vec<f64>,
}

impl NormalizedPanel {
    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn sectors(&self) -> &SectorMap {
        &self.sectors
    }

    pub fn series(&self, i: usize) -> &[f64] {
        &self.series[i]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.series
    }

    /// Mean of the raw returns that were removed.
    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    /// Population standard deviation of the raw returns.
    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    pub fn n_days(&self) -> usize {
        self.series[0].len()
    }

    pub fn n_stocks(&self) -> usize {
        self.series.len()
    }

    /// Normalized returns of the given stocks on day `t`.
    pub fn day(&self, t: usize, stocks: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.extend(stocks.iter().map(|&i| self.series[i][t]));
    }

    /// Same panel viewed as an ordinary return panel, e.g. for re-normalizing.
    pub fn to_returns(&self) -> ReturnPanel {
        ReturnPanel {
            tickers: self.tickers.clone(),
            sectors: self.sectors.clone(),
            series: self.series.clone(),
            kind: ReturnKind::LogEmpirical,
        }
    }

    /// Reorders stock columns: new column `k` is old column `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            tickers: order.iter().map(|&i| self.tickers[i].clone()).collect(),
            sectors: self.sectors.permuted(order),
            series: order.iter().map(|&i| self.series[i].clone()).collect(),
            mean: pick(&self.mean),
            sigma: pick(&self.sigma),
        }
    }
}

/// Options for [`load_price_panel`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Drop every date on which any ticker has a blank cell instead of
    /// rejecting the panel.
    pub intersect_dates: bool,
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::load(display(path), "file", e.to_string()))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Reads a `ticker,sector` manifest and resolves it against `tickers`.
/// Sector labels get indices in order of first appearance.
pub fn read_sector_manifest(path: &Path, tickers: &[String]) -> Result<SectorMap> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 2
        || !header[0].eq_ignore_ascii_case("ticker")
        || !header[1].eq_ignore_ascii_case("sector")
    {
        return Err(Error::load(display(path), "header", "expected `ticker,sector`"));
    }
    let column: HashMap<&str, usize> =
        tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut labels: Vec<String> = Vec::new();
    let mut sector_of: Vec<Option<usize>> = vec![None; tickers.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let ticker = record.get(0).unwrap_or("");
        let label = record.get(1).unwrap_or("");
        if ticker.is_empty() {
            return Err(Error::load(display(path), format!("row {line}"), "blank ticker"));
        }
        if label.is_empty() {
            return Err(Error::load(display(path), format!("row {line}, ticker {ticker}"), "empty sector label"));
        }
        let Some(&i) = column.get(ticker) else {
            return Err(Error::load(
                display(path),
                format!("row {line}, ticker {ticker}"),
                "unknown ticker (not present in the price file)",
            ));
        };
        if sector_of[i].is_some() {
            return Err(Error::load(display(path), format!("row {line}, ticker {ticker}"), "ticker listed twice"));
        }
        let j = match labels.iter().position(|l| l == label) {
            Some(j) => j,
            None => {
                labels.push(label.to_string());
                labels.len() - 1
            }
        };
        sector_of[i] = Some(j);
    }
    let sector_of = sector_of
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.ok_or_else(|| {
                Error::load(display(path), format!("ticker {}", tickers[i]), "ticker has no sector")
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SectorMap::new(labels, sector_of)
}

fn parse_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, first: &str) -> Result<Vec<String>> {
    let header = reader.headers()?.clone();
    if header.is_empty() || !header[0].eq_ignore_ascii_case(first) {
        return Err(Error::load(display(path), "header", format!("first column must be `{first}`")));
    }
    let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if tickers.is_empty() {
        return Err(Error::load(display(path), "header", "no ticker columns"));
    }
    for (k, t) in tickers.iter().enumerate() {
        if t.is_empty() {
            return Err(Error::load(display(path), format!("column {}", k + 2), "blank ticker name"));
        }
        if tickers[..k].contains(t) {
            return Err(Error::load(display(path), format!("column {t}"), "duplicate ticker"));
        }
    }
    Ok(tickers)
}

/// Loads a `date,<tickers...>` price file and its sector manifest.
pub fn load_price_panel(prices_file: &Path, sectors_file: &Path, options: LoadOptions) -> Result<PricePanel> {
    let mut reader = csv_reader(prices_file)?;
    let tickers = parse_header(prices_file, &mut reader, "date")?;
    let n = tickers.len();
    let mut dates = Vec::new();
    let mut columns = vec![Vec::new(); n];
    let mut row_cells: Vec<Option<f64>> = Vec::with_capacity(n);
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let raw_date = record.get(0).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| {
            Error::load(display(prices_file), format!("row {line}, column date"), format!("unparseable date `{raw_date}`"))
        })?;
        row_cells.clear();
        for (k, ticker) in tickers.iter().enumerate() {
            let cell = record.get(k + 1).unwrap_or("");
            if cell.is_empty() {
                row_cells.push(None);
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| {
                Error::load(display(prices_file), format!("date {date}, ticker {ticker}"), format!("unparseable price `{cell}`"))
            })?;
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::load(
                    display(prices_file),
                    format!("date {date}, ticker {ticker}"),
                    format!("price must be positive, got {value}"),
                ));
            }
            row_cells.push(Some(value));
        }
        if let Some(k) = row_cells.iter().position(Option::is_none) {
            if options.intersect_dates {
                continue;
            }
            return Err(Error::load(
                display(prices_file),
                format!("date {date}, ticker {}", tickers[k]),
                "missing price",
            ));
        }
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::load(
                    display(prices_file),
                    format!("row {line}, column date"),
                    format!("date {date} does not follow {prev}"),
                ));
            }
        }
        dates.push(date);
        for (col, v) in columns.iter_mut().zip(&row_cells) {
            col.push(v.expect("checked above"));
        }
    }
    if dates.is_empty() {
        return Err(Error::load(display(prices_file), "body", "no complete rows"));
    }
    let sectors = read_sector_manifest(sectors_file, &tickers)?;
    PricePanel::new(dates, tickers, columns, sectors)
}

/// `R_i(t) = ln(Y_i(t) / Y_i(t-1))`; the result has one row fewer than the
/// price panel.
pub fn log_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    if panel.n_days() < 2 {
        return Err(Error::Argument("log returns need at least two dates".into()));
    }
    let series = panel
        .prices
        .iter()
        .map(|p| p.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
        .collect();
    ReturnPanel::from_columns(panel.tickers.clone(), panel.sectors.clone(), series, ReturnKind::LogEmpirical)
}

/// Shifts each stock to zero mean and scales it by its population (divide by
/// `T`) standard deviation.
pub fn normalize(panel: &ReturnPanel) -> Result<NormalizedPanel> {
    let n = panel.n_stocks();
    let mut series = Vec::with_capacity(n);
    let mut mean = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for (ticker, s) in panel.tickers.iter().zip(&panel.series) {
        let t = s.len() as f64;
        let m = s.iter().sum::<f64>() / t;
        let var = s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / t;
        let sd = var.sqrt();
        // Anything below this is rounding noise around a constant series.
        if !(sd.is_finite() && sd > 1e-300 && sd > m.abs() * 1e-14) {
            return Err(Error::ZeroVariance { ticker: ticker.clone() });
        }
        series.push(s.iter().map(|v| (v - m) / sd).collect());
        mean.push(m);
        sigma.push(sd);
    }
    Ok(NormalizedPanel {
        tickers: panel.tickers.clone(),
        sectors: panel.sectors.clone(),
        series,
        mean,
        sigma,
    })
}

fn format_value(v: f64, kind: ReturnKind) -> String {
    match kind {
        ReturnKind::SimulatedCount => format!("{}", v as i64),
        ReturnKind::LogEmpirical => format!("{v}"),
    }
}

/// Writes `t,<tickers...>` with `t` counting from 1. Simulated panels are
/// written as integers; everything else uses the shortest representation that
/// parses back to the same `f64`.
pub fn write_returns_csv<W: Write>(panel: &ReturnPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(panel.tickers.iter().cloned());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(panel.n_stocks() + 1);
    for t in 0..panel.n_days() {
        row.clear();
        row.push((t + 1).to_string());
        row.extend(panel.series.iter().map(|s| format_value(s[t], panel.kind)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a returns CSV written by [`write_returns_csv`] (or by hand). When
/// `kind` is `None` it is inferred: all-integer tables are simulated counts.
pub fn read_returns_csv(path: &Path, sectors_file: &Path, kind: Option<ReturnKind>) -> Result<ReturnPanel> {
    let mut reader = csv_reader(path)?;
    let tickers = parse_header(path, &mut reader, "t")?;
    let mut series = vec![Vec::new(); tickers.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        for (k, ticker) in tickers.iter().enumerate() {
            let cell = record.get(k + 1).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::load(display(path), format!("row {line}, ticker {ticker}"), "missing return"));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::load(display(path), format!("row {line}, ticker {ticker}"), format!("unparseable return `{cell}`"))
            })?;
            series[k].push(v);
        }
    }
    let kind = kind.unwrap_or_else(|| {
        if series.iter().flatten().all(|v| v.fract() == 0.0) {
            ReturnKind::SimulatedCount
        } else {
            ReturnKind::LogEmpirical
        }
    });
    let sectors = read_sector_manifest(sectors_file, &tickers)?;
    ReturnPanel::from_columns(tickers, sectors, series, kind)
        .map_err(|e| Error::load(display(path), "body", e.to_string()))
}

/// Writes a `date,<tickers...>` price file.
pub fn write_prices_csv<W: Write>(panel: &PricePanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(panel.tickers.iter().cloned());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(panel.n_stocks() + 1);
    for (t, date) in panel.dates.iter().enumerate() {
        row.clear();
        row.push(date.format("%Y-%m-%d").to_string());
        row.extend(panel.prices.iter().map(|p| format!("{}", p[t])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a `ticker,sector` manifest.
pub fn write_sectors_csv<W: Write>(tickers: &[String], sectors: &SectorMap, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ticker", "sector"])?;
    for (i, t) in tickers.iter().enumerate() {
        w.write_record([t.as_str(), sectors.labels()[sectors.sector(i)].as_str()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn one_sector(n: usize) -> SectorMap {
        SectorMap::new(vec!["A".into()], vec![0; n]).unwrap()
    }

    fn panel(series: Vec<Vec<f64>>) -> ReturnPanel {
        let n = series.len();
        let tickers = (0..n).map(|i| format!("X{i}")).collect();
        ReturnPanel::from_columns(tickers, one_sector(n), series, ReturnKind::LogEmpirical).unwrap()
    }

    #[test]
    fn loads_minimal_panel() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "date,AAA,BBB\n2020-01-02,10,20\n2020-01-03,11,19\n");
        let s = write(dir.path(), "s.csv", "ticker,sector\nAAA,A\nBBB,A\n");
        let panel = load_price_panel(&p, &s, LoadOptions::default()).unwrap();
        assert_eq!(panel.n_days(), 2);
        assert_eq!(panel.n_stocks(), 2);
        assert_eq!(panel.sectors().n_sectors(), 1);
        assert_eq!(panel.prices(1), &[20.0, 19.0]);
    }

    #[test]
    fn blank_cell_names_date_and_ticker() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "date,AAA,BBB\n2020-01-02,10,20\n2020-01-03,,19\n");
        let s = write(dir.path(), "s.csv", "ticker,sector\nAAA,A\nBBB,A\n");
        let err = load_price_panel(&p, &s, LoadOptions::default()).unwrap_err().to_string();
        assert!(err.contains("2020-01-03") && err.contains("AAA"), "{err}");

        let opts = LoadOptions { intersect_dates: true };
        let panel = load_price_panel(&p, &s, opts).unwrap();
        assert_eq!(panel.n_days(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", "ticker,sector\nAAA,A\nBBB,B\n");
        let cases = [
            ("date,AAA,BBB\n2020-01-02,10,0\n", "positive"),
            ("date,AAA,BBB\n2020-01-02,10,-3\n", "positive"),
            ("date,AAA,BBB\n02/01/2020,10,3\n", "unparseable date"),
            ("date,AAA,BBB\n2020-01-03,10,3\n2020-01-02,10,3\n", "does not follow"),
            ("date,AAA,BBB\n2020-01-02,10,abc\n", "unparseable price"),
        ];
        for (body, needle) in cases {
            let p = write(dir.path(), "p.csv", body);
            let err = load_price_panel(&p, &s, LoadOptions::default()).unwrap_err().to_string();
            assert!(err.contains(needle), "{body:?} -> {err}");
        }
    }

    #[test]
    fn sector_manifest_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "date,AAA,BBB\n2020-01-02,10,20\n");
        let cases = [
            ("ticker,sector\nAAA,A\nBBB,A\nCCC,B\n", "unknown ticker"),
            ("ticker,sector\nAAA,A\n", "has no sector"),
            ("ticker,sector\nAAA,A\nBBB,\n", "empty sector"),
            ("ticker,sector\nAAA,A\nAAA,B\nBBB,A\n", "twice"),
        ];
        for (body, needle) in cases {
            let s = write(dir.path(), "s.csv", body);
            let err = load_price_panel(&p, &s, LoadOptions::default()).unwrap_err().to_string();
            assert!(err.contains(needle), "{body:?} -> {err}");
        }
    }

    #[test]
    fn sector_labels_follow_manifest_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "date,AAA,BBB,CCC\n2020-01-02,1,2,3\n");
        let s = write(dir.path(), "s.csv", "ticker,sector\nCCC,Utility\nAAA,Materials\nBBB,Utility\n");
        let panel = load_price_panel(&p, &s, LoadOptions::default()).unwrap();
        assert_eq!(panel.sectors().labels(), &["Utility".to_string(), "Materials".to_string()]);
        assert_eq!(panel.sectors().sector_of(), &[1, 0, 0]);
    }

    #[test]
    fn log_return_examples() {
        let dates: Vec<NaiveDate> = (2..5).map(|d| NaiveDate::from_ymd_opt(2020, 1, d).unwrap()).collect();
        let one = PricePanel::new(dates[..2].to_vec(), vec!["E".into()], vec![vec![1.0, std::f64::consts::E]], one_sector(1)).unwrap();
        assert!((log_returns(&one).unwrap().series(0)[0] - 1.0).abs() < 1e-15);

        let flat = PricePanel::new(dates.clone(), vec!["F".into()], vec![vec![5.0; 3]], one_sector(1)).unwrap();
        assert_eq!(log_returns(&flat).unwrap().series(0), &[0.0, 0.0]);

        let p = PricePanel::new(dates, vec!["P".into()], vec![vec![100.0, 110.0, 99.0]], one_sector(1)).unwrap();
        let r = log_returns(&p).unwrap();
        assert!((r.series(0)[0] - 0.0953101798).abs() < 1e-9);
        assert!((r.series(0)[1] - (-0.1053605157)).abs() < 1e-9);
        assert_eq!(r.kind(), ReturnKind::LogEmpirical);
    }

    #[test]
    fn geometric_prices_give_constant_returns() {
        let g: f64 = 1.0137;
        let dates: Vec<NaiveDate> = (0..200)
            .map(|d| NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + chrono::Days::new(d))
            .collect();
        let prices = (0..200).map(|t| 42.0 * g.powi(t)).collect();
        let p = PricePanel::new(dates, vec!["G".into()], vec![prices], one_sector(1)).unwrap();
        for r in log_returns(&p).unwrap().series(0) {
            assert!((r - g.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_examples() {
        let n = normalize(&panel(vec![vec![-1.0, 1.0]])).unwrap();
        assert_eq!(n.series(0), &[-1.0, 1.0]);

        let err = normalize(&panel(vec![vec![0.0, 0.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { ref ticker } if ticker == "X0"));

        let n = normalize(&panel(vec![vec![1.0, 2.0, 3.0]])).unwrap();
        let expect = 1.5f64.sqrt();
        assert!((n.series(0)[0] + expect).abs() < 1e-12);
        assert!(n.series(0)[1].abs() < 1e-12);
        assert!((n.series(0)[2] - expect).abs() < 1e-12);
        assert!((n.means()[0] - 2.0).abs() < 1e-15);
        assert!((n.sigmas()[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn returns_csv_round_trip_and_kind_inference() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", "ticker,sector\nX0,A\nX1,A\n");
        let p = panel(vec![vec![0.1, -0.25, 1.0 / 3.0], vec![1e-17, 2.5e10, -7.0]]);
        let mut buf = Vec::new();
        write_returns_csv(&p, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,X0,X1\n1,"));
        let f = dir.path().join("r.csv");
        fs::write(&f, &buf).unwrap();
        let back = read_returns_csv(&f, &s, None).unwrap();
        assert_eq!(back.columns(), p.columns());
        assert_eq!(back.kind(), ReturnKind::LogEmpirical);

        let ints = ReturnPanel::from_columns(
            vec!["X0".into(), "X1".into()],
            one_sector(2),
            vec![vec![3.0, -4.0], vec![0.0, 12.0]],
            ReturnKind::SimulatedCount,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_returns_csv(&ints, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "t,X0,X1\n1,3,0\n2,-4,12\n");
        fs::write(&f, &buf).unwrap();
        assert_eq!(read_returns_csv(&f, &s, None).unwrap().kind(), ReturnKind::SimulatedCount);
    }

    #[test]
    fn contiguous_sector_layout() {
        let m = SectorMap::contiguous(6, 3).unwrap();
        assert_eq!(m.sector_of(), &[0, 0, 1, 1, 2, 2]);
        assert_eq!(m.members(2), vec![4, 5]);
        assert!(SectorMap::contiguous(7, 3).is_err());
    }
}
