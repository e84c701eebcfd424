//! Vintage-aware storage of time-series releases and revisions.
//!
//! A [`VintageStore`] is an append-only log of `(vintage, period, value)`
//! records per series. [`VintageStore::as_of`] replays the log up to a query
//! time, keeping the latest value per period, which yields the information set
//! available at that moment. [`align`] then turns a snapshot into a
//! [`MixedFrequencyPanel`] of high-frequency lag windows per low-frequency
//! target period, marking the ragged edge where recent observations have not
//! been released yet.
//!
//! The as-of boundary is closed: a release stamped exactly at the query time
//! is visible.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lagpoly::LagSpec;

/// Release timestamp of a vintage.
pub type Vintage = NaiveDateTime;

/// Parses an ISO-8601 date or date-time. Offsets are converted to UTC.
pub fn parse_timestamp(s: &str) -> Result<Vintage> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight is valid"));
    }
    Err(Error::Parse(format!("unrecognised timestamp `{s}`")))
}

/// Canonical text form of a vintage timestamp.
pub fn format_timestamp(v: &Vintage) -> String {
    v.format("%Y-%m-%dT%H:%M:%S").to_string()
}

/// Calendar convention of an observation period label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeriodKind {
    /// Plain integer index.
    Index,
    /// `YYYYQn`, indexed as `4 * year + n - 1`.
    Quarterly,
    /// `YYYY-MM`, indexed as `12 * year + month - 1`.
    Monthly,
}

/// An observation period: an integer position on the series' own frequency.
///
/// Quarterly and monthly indices are chosen so that month index `m` falls in
/// quarter index `m.div_euclid(3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Period {
    pub index: i64,
    pub kind: PeriodKind,
}

impl Period {
    pub fn index(index: i64) -> Self {
        Self { index, kind: PeriodKind::Index }
    }
}

impl FromStr for Period {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(i) = s.parse::<i64>() {
            return Ok(Period::index(i));
        }
        let bad = || Error::Parse(format!("unrecognised observation period `{s}`"));
        if let Some((y, q)) = s.split_once(['Q', 'q']) {
            let y: i64 = y.parse().map_err(|_| bad())?;
            let q: i64 = q.parse().map_err(|_| bad())?;
            if !(1..=4).contains(&q) {
                return Err(bad());
            }
            return Ok(Period { index: 4 * y + q - 1, kind: PeriodKind::Quarterly });
        }
        if let Some((y, m)) = s.split_once('-') {
            let y: i64 = y.parse().map_err(|_| bad())?;
            let m: i64 = m.parse().map_err(|_| bad())?;
            if !(1..=12).contains(&m) {
                return Err(bad());
            }
            return Ok(Period { index: 12 * y + m - 1, kind: PeriodKind::Monthly });
        }
        Err(bad())
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PeriodKind::Index => write!(f, "{}", self.index),
            PeriodKind::Quarterly => {
                write!(f, "{}Q{}", self.index.div_euclid(4), self.index.rem_euclid(4) + 1)
            }
            PeriodKind::Monthly => {
                write!(f, "{}-{:02}", self.index.div_euclid(12), self.index.rem_euclid(12) + 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Record {
    vintage: Vintage,
    period: i64,
    value: f64,
}

#[derive(Debug, Clone, Default)]
struct SeriesLog {
    kind: Option<PeriodKind>,
    frequency: Option<usize>,
    records: Vec<Record>,
}

/// One line of the persisted store log.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum LogEntry {
    Declare { series: String, high_freq_per_low: usize },
    Release { series: String, vintage: String, observations: Vec<(String, f64)> },
}

/// Append-only store of vintage-stamped observations.
#[derive(Debug, Clone, Default)]
pub struct VintageStore {
    series: BTreeMap<String, SeriesLog>,
    journal: Vec<LogEntry>,
}

impl VintageStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares how many observations of `series` fall in one target period.
    pub fn declare_frequency(&mut self, series: &str, high_freq_per_low: usize) -> Result<()> {
        if high_freq_per_low == 0 {
            return invalid(format!("frequency ratio for `{series}` must be positive"));
        }
        self.series.entry(series.to_string()).or_default().frequency = Some(high_freq_per_low);
        self.journal.push(LogEntry::Declare { series: series.to_string(), high_freq_per_low });
        Ok(())
    }

    pub fn frequency(&self, series: &str) -> Option<usize> {
        self.series.get(series).and_then(|s| s.frequency)
    }

    pub fn series_ids(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    /// Appends one release of `series`. Periods already present become
    /// revisions visible only at or after `vintage`.
    pub fn ingest_release(
        &mut self,
        series: &str,
        vintage: Vintage,
        observations: &[(Period, f64)],
    ) -> Result<()> {
        if observations.is_empty() {
            return Ok(());
        }
        let log = self.series.get(series);
        if let Some(last) = log.and_then(|l| l.records.last()) {
            if vintage < last.vintage {
                return Err(Error::OutOfOrderVintage {
                    series: series.to_string(),
                    vintage: format_timestamp(&vintage),
                    latest: format_timestamp(&last.vintage),
                });
            }
        }
        let mut kind = log.and_then(|l| l.kind);
        for (p, v) in observations {
            if !v.is_finite() {
                return invalid(format!("non-finite value for `{series}` period {p}"));
            }
            match kind {
                Some(k) if k != p.kind => {
                    return invalid(format!(
                        "series `{series}` mixes period conventions {k:?} and {:?}",
                        p.kind
                    ))
                }
                _ => kind = Some(p.kind),
            }
        }
        let log = self.series.entry(series.to_string()).or_default();
        log.kind = kind;
        log.records.extend(observations.iter().map(|(p, v)| Record {
            vintage,
            period: p.index,
            value: *v,
        }));
        self.journal.push(LogEntry::Release {
            series: series.to_string(),
            vintage: format_timestamp(&vintage),
            observations: observations.iter().map(|(p, v)| (p.to_string(), *v)).collect(),
        });
        Ok(())
    }

    /// Distinct release times `t_1 <= ... <= t_R` across all series.
    pub fn release_calendar(&self) -> Vec<Vintage> {
        let mut v: Vec<Vintage> =
            self.series.values().flat_map(|s| s.records.iter().map(|r| r.vintage)).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Information set at `query_time`: the latest value per period among
    /// records with vintage `<= query_time`. Series with nothing released yet
    /// are absent.
    pub fn as_of(&self, query_time: Vintage) -> Snapshot {
        let mut series = BTreeMap::new();
        for (id, log) in &self.series {
            let mut values = BTreeMap::new();
            for r in log.records.iter().take_while(|r| r.vintage <= query_time) {
                values.insert(r.period, r.value);
            }
            if !values.is_empty() {
                series.insert(
                    id.clone(),
                    SnapshotSeries {
                        kind: log.kind.unwrap_or(PeriodKind::Index),
                        frequency: log.frequency,
                        values,
                    },
                );
            }
        }
        Snapshot { query_time, series }
    }

    /// Snapshot including every release.
    pub fn latest(&self) -> Snapshot {
        self.as_of(NaiveDateTime::MAX)
    }

    /// Writes the store as a newline-delimited JSON log that
    /// [`VintageStore::replay`] reads back.
    pub fn write_log<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.journal {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Rebuilds a store from a log written by [`VintageStore::write_log`].
    pub fn replay<R: BufRead>(r: R) -> Result<Self> {
        let mut store = Self::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LogEntry>(&line)? {
                LogEntry::Declare { series, high_freq_per_low } => {
                    store.declare_frequency(&series, high_freq_per_low)?
                }
                LogEntry::Release { series, vintage, observations } => {
                    let obs = observations
                        .iter()
                        .map(|(p, v)| Ok((p.parse::<Period>()?, *v)))
                        .collect::<Result<Vec<_>>>()?;
                    store.ingest_release(&series, parse_timestamp(&vintage)?, &obs)?;
                }
            }
        }
        Ok(store)
    }

    /// Ingests a CSV with columns `series_id, vintage_timestamp,
    /// observation_period, value`. Consecutive rows sharing series and vintage
    /// form one release; releases are applied in file order.
    pub fn ingest_csv<R: Read>(&mut self, r: R) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("missing CSV column `{name}`")))
        };
        let (cs, cv, cp, cx) =
            (col("series_id")?, col("vintage_timestamp")?, col("observation_period")?, col("value")?);
        let mut pending: Option<(String, Vintage, Vec<(Period, f64)>)> = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let series = rec[cs].to_string();
            let vintage = parse_timestamp(&rec[cv])?;
            let period: Period = rec[cp].parse()?;
            let value: f64 = rec[cx]
                .parse()
                .map_err(|_| Error::Parse(format!("bad value `{}` on data row {}", &rec[cx], line + 1)))?;
            match &mut pending {
                Some((s, v, obs)) if *s == series && *v == vintage => obs.push((period, value)),
                _ => {
                    if let Some((s, v, obs)) = pending.take() {
                        self.ingest_release(&s, v, &obs)?;
                    }
                    pending = Some((series, vintage, vec![(period, value)]));
                }
            }
        }
        if let Some((s, v, obs)) = pending {
            self.ingest_release(&s, v, &obs)?;
        }
        Ok(())
    }
}

/// One series inside a [`Snapshot`].
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSeries {
    pub kind: PeriodKind,
    pub frequency: Option<usize>,
    pub values: BTreeMap<i64, f64>,
}

/// The information set available at a query time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub query_time: Vintage,
    pub series: BTreeMap<String, SnapshotSeries>,
}

impl Snapshot {
    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn value(&self, series: &str, period: i64) -> Option<f64> {
        self.series.get(series).and_then(|s| s.values.get(&period).copied())
    }

    /// Exports as CSV with columns `series_id, observation_period, value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["series_id", "observation_period", "value"])?;
        for (id, s) in &self.series {
            for (p, v) in &s.values {
                let period = Period { index: *p, kind: s.kind };
                wtr.write_record([id.clone(), period.to_string(), format!("{v}")])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Aligned high-frequency lags of one covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateLagMatrix {
    pub name: String,
    pub high_freq_per_low: usize,
    /// `lags[row][j]` holds `x_{t - j / n^H}` for the row's period `t`.
    pub lags: Vec<Vec<Option<f64>>>,
    /// Smallest released lag index per row; `None` when nothing is released.
    pub earliest_lag: Vec<Option<usize>>,
}

/// How missing lag cells are treated before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillPolicy {
    /// Rows with any missing lag are dropped by the design builder.
    #[default]
    DropIncomplete,
    /// Missing lag cells are replaced by zero and flagged.
    ZeroFill,
}

/// Target series plus aligned lag windows of each covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedFrequencyPanel {
    /// Low-frequency period of each row, contiguous and increasing.
    pub periods: Vec<i64>,
    pub period_kind: PeriodKind,
    pub target_name: String,
    /// `y_t` for the row's period.
    pub target: Vec<Option<f64>>,
    pub horizon: usize,
    pub covariates: Vec<CovariateLagMatrix>,
    /// `(covariate, row, lag)` cells that were filled rather than observed.
    pub filled_cells: Vec<(usize, usize, usize)>,
}

/// A covariate given as a plain high-frequency sequence: element `i` belongs
/// to low-frequency period `i / high_freq_per_low` (zero based).
#[derive(Debug, Clone)]
pub struct HighFrequencySeries {
    pub name: String,
    pub high_freq_per_low: usize,
    pub values: Vec<f64>,
}

impl MixedFrequencyPanel {
    pub fn rows(&self) -> usize {
        self.periods.len()
    }

    /// The forecast target `y_{t+h}` paired with row `row`.
    pub fn response(&self, row: usize) -> Option<f64> {
        self.target.get(row + self.horizon).copied().flatten()
    }

    /// Builds a panel from complete in-memory series indexed from period 0.
    pub fn from_high_frequency(
        target_name: &str,
        target: &[f64],
        covariates: &[HighFrequencySeries],
        spec: &LagSpec,
    ) -> Result<Self> {
        let mut series = BTreeMap::new();
        series.insert(
            target_name.to_string(),
            SnapshotSeries {
                kind: PeriodKind::Index,
                frequency: Some(1),
                values: target.iter().enumerate().map(|(i, v)| (i as i64, *v)).collect(),
            },
        );
        for c in covariates {
            series.insert(
                c.name.clone(),
                SnapshotSeries {
                    kind: PeriodKind::Index,
                    frequency: Some(c.high_freq_per_low),
                    values: c.values.iter().enumerate().map(|(i, v)| (i as i64, *v)).collect(),
                },
            );
        }
        let snap = Snapshot { query_time: NaiveDateTime::MAX, series };
        let panel = align(&snap, target_name, spec)?;
        // keep only periods covered by the target
        let keep = target.len().min(panel.rows());
        Ok(panel.truncate_rows(keep))
    }

    fn truncate_rows(mut self, n: usize) -> Self {
        self.periods.truncate(n);
        self.target.truncate(n);
        for c in &mut self.covariates {
            c.lags.truncate(n);
            c.earliest_lag.truncate(n);
        }
        self.filled_cells.retain(|(_, r, _)| *r < n);
        self
    }

    /// Applies a fill policy to missing lag cells.
    pub fn apply_fill(mut self, policy: FillPolicy) -> Self {
        if policy == FillPolicy::ZeroFill {
            for (k, c) in self.covariates.iter_mut().enumerate() {
                for (row, lags) in c.lags.iter_mut().enumerate() {
                    for (j, cell) in lags.iter_mut().enumerate() {
                        if cell.is_none() {
                            *cell = Some(0.0);
                            self.filled_cells.push((k, row, j));
                        }
                    }
                }
            }
        }
        self
    }
}

/// Aligns a snapshot into a mixed-frequency panel for `target` and the
/// covariates named in `spec`.
///
/// Row `t` of covariate `k` holds the high-frequency observations with index
/// `(t + 1) * n^H - 1 - j` for lags `j = 0..m_k`. Missing cells stay `None`
/// and the earliest released lag per row is recorded.
pub fn align(snapshot: &Snapshot, target: &str, spec: &LagSpec) -> Result<MixedFrequencyPanel> {
    let tgt = snapshot
        .series
        .get(target)
        .ok_or_else(|| Error::InvalidArgument(format!("target series `{target}` not in snapshot")))?;
    match tgt.frequency {
        Some(1) => {}
        Some(f) => return invalid(format!("target `{target}` declared with ratio {f}, expected 1")),
        None => return invalid(format!("frequency ratio of target `{target}` is not declared")),
    }
    let mut covs = Vec::with_capacity(spec.covariates.len());
    for c in &spec.covariates {
        let s = snapshot.series.get(&c.name);
        let freq = match s {
            Some(s) => s.frequency,
            None => None,
        };
        match freq {
            Some(f) if f == c.high_freq_per_low => {}
            Some(f) => {
                return invalid(format!(
                    "covariate `{}` declared with ratio {f} but lag spec uses {}",
                    c.name, c.high_freq_per_low
                ))
            }
            None if s.is_none() => {
                return Err(Error::TooShortSample {
                    covariate: c.name.clone(),
                    detail: "no observations released".into(),
                })
            }
            None => return invalid(format!("frequency ratio of `{}` is not declared", c.name)),
        }
        covs.push((c, s.expect("checked above")));
    }

    let first = *tgt.values.keys().next().expect("snapshot series are nonempty");
    let mut last = *tgt.values.keys().next_back().expect("nonempty");
    for (c, s) in &covs {
        if let Some(&hf) = s.values.keys().next_back() {
            last = last.max(hf.div_euclid(c.high_freq_per_low as i64));
        }
    }
    let periods: Vec<i64> = (first..=last).collect();
    let target_vals = periods.iter().map(|p| tgt.values.get(p).copied()).collect();
    let covariates = covs
        .iter()
        .map(|(c, s)| {
            let nh = c.high_freq_per_low as i64;
            let m = c.total_lags();
            let lags: Vec<Vec<Option<f64>>> = periods
                .iter()
                .map(|t| (0..m).map(|j| s.values.get(&((t + 1) * nh - 1 - j as i64)).copied()).collect())
                .collect();
            let earliest_lag = lags.iter().map(|row| row.iter().position(Option::is_some)).collect();
            CovariateLagMatrix {
                name: c.name.clone(),
                high_freq_per_low: c.high_freq_per_low,
                lags,
                earliest_lag,
            }
        })
        .collect();
    Ok(MixedFrequencyPanel {
        periods,
        period_kind: tgt.kind,
        target_name: target.to_string(),
        target: target_vals,
        horizon: spec.horizon,
        covariates,
        filled_cells: Vec::new(),
    })
}
