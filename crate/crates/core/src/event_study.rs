//! Log returns around news events versus returns elsewhere.
//!
//! An event is mapped to its nearest trading day `c`; the with-news return
//! is `log(p[c + w/2] / p[c − w/2])`. Every other span `[s, s + w]` that does
//! not overlap an event window contributes a without-news return.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use log::warn;

use crate::error::{Error, Result};
use crate::labels::NewsEvent;
use crate::stats::{ks_two_sample, quantile_sorted, skewness, KsResult};
use crate::tsv;

pub const DEFAULT_LEVELS: [f64; 5] = [0.01, 0.05, 0.5, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub symbol: String,
    points: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    pub fn new(symbol: impl Into<String>, points: Vec<(NaiveDate, f64)>) -> Result<Self> {
        let symbol = symbol.into();
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config(format!("{symbol}: dates not strictly increasing")));
        }
        if let Some(p) = points.iter().find(|p| !(p.1 > 0.0) || !p.1.is_finite()) {
            return Err(Error::Config(format!("{symbol}: non-positive price {} on {}", p.1, p.0)));
        }
        Ok(PriceSeries { symbol, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(NaiveDate, f64)] {
        &self.points
    }

    /// Index of the trading day closest to `date` (earlier on ties), or
    /// `None` outside the series range.
    pub fn nearest_index(&self, date: NaiveDate) -> Option<usize> {
        let (first, last) = (self.points.first()?.0, self.points.last()?.0);
        if date < first || date > last {
            return None;
        }
        match self.points.binary_search_by_key(&date, |p| p.0) {
            Ok(i) => Some(i),
            Err(i) => {
                let before = (date - self.points[i - 1].0).num_days();
                let after = (self.points[i].0 - date).num_days();
                Some(if before <= after { i - 1 } else { i })
            }
        }
    }

    fn log_return(&self, start: usize, end: usize) -> f64 {
        (self.points[end].1 / self.points[start].1).ln()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowReturns {
    pub with_news: Vec<f64>,
    pub without_news: Vec<f64>,
    /// Events that fell outside the series or too close to its ends.
    pub skipped: usize,
}

pub fn window_log_returns(series: &PriceSeries, event_dates: &[NaiveDate], window: usize) -> Result<WindowReturns> {
    if window < 2 || window % 2 != 0 {
        return Err(Error::Config(format!("window must be even and ≥ 2, got {window}")));
    }
    let n = series.len();
    if n <= window {
        return Err(Error::SampleTooSmall {
            needed: window + 1,
            got: n,
        });
    }
    let half = window / 2;
    let mut out = WindowReturns::default();
    let mut event_windows: Vec<(usize, usize)> = Vec::new();
    for &date in event_dates {
        let Some(c) = series.nearest_index(date) else {
            warn!("{}: event {date} outside price range", series.symbol);
            out.skipped += 1;
            continue;
        };
        // Windows that run off either end still block overlapping spans.
        let (lo, hi) = (c.saturating_sub(half), (c + half).min(n - 1));
        event_windows.push((lo, hi));
        if c < half || c + half >= n {
            warn!("{}: event {date} too close to the series ends", series.symbol);
            out.skipped += 1;
            continue;
        }
        out.with_news.push(series.log_return(c - half, c + half));
    }
    for s in 0..n - window {
        let e = s + window;
        if event_windows.iter().all(|&(a, b)| !(s < b && a < e)) {
            out.without_news.push(series.log_return(s, e));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub count: usize,
    pub quantiles: Vec<(f64, f64)>,
    pub skewness: f64,
}

pub fn sample_stats(sample: &[f64], levels: &[f64]) -> Result<SampleStats> {
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("non-finite return".into()));
    }
    let skew = skewness(sample)?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = levels
        .iter()
        .map(|&p| Ok((p, quantile_sorted(&sorted, p)?)))
        .collect::<Result<_>>()?;
    Ok(SampleStats {
        count: sample.len(),
        quantiles,
        skewness: skew,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventStudy {
    pub with_news: SampleStats,
    pub without_news: SampleStats,
    pub ks: KsResult,
    pub skipped_events: usize,
}

/// Pools window returns over all symbols. Events are matched to price
/// series by firm key = symbol.
pub fn run_event_study(series: &[PriceSeries], events: &[NewsEvent], window: usize) -> Result<EventStudy> {
    let mut by_firm: BTreeMap<&str, Vec<NaiveDate>> = BTreeMap::new();
    for ev in events {
        by_firm.entry(ev.firm.as_str()).or_default().push(ev.date);
    }
    let mut pooled = WindowReturns::default();
    for s in series {
        let dates = by_firm.get(s.symbol.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let r = match window_log_returns(s, dates, window) {
            Ok(r) => r,
            Err(Error::SampleTooSmall { .. }) => {
                warn!("{}: series too short for a {window}-day window", s.symbol);
                continue;
            }
            Err(e) => return Err(e),
        };
        pooled.with_news.extend(r.with_news);
        pooled.without_news.extend(r.without_news);
        pooled.skipped += r.skipped;
    }
    Ok(EventStudy {
        with_news: sample_stats(&pooled.with_news, &DEFAULT_LEVELS)?,
        without_news: sample_stats(&pooled.without_news, &DEFAULT_LEVELS)?,
        ks: ks_two_sample(&pooled.with_news, &pooled.without_news)?,
        skipped_events: pooled.skipped,
    })
}

/// Reads `symbol <TAB> date <TAB> close` rows into per-symbol series.
pub fn read_prices(path: &Path) -> Result<Vec<PriceSeries>> {
    let name = path.display().to_string();
    let mut by_symbol: BTreeMap<String, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for (n, line) in tsv::read_lines(path)? {
        if tsv::is_skippable(&line) || line.starts_with("symbol\t") {
            continue;
        }
        let f = tsv::fields(&line, 3).map_err(|m| tsv::parse_error(&name, n, m))?;
        let date = tsv::parse_date(f[1]).map_err(|m| tsv::parse_error(&name, n, m))?;
        let close: f64 = f[2]
            .trim()
            .parse()
            .map_err(|_| tsv::parse_error(&name, n, format!("bad price {:?}", f[2])))?;
        by_symbol.entry(f[0].trim().to_string()).or_default().push((date, close));
    }
    by_symbol
        .into_iter()
        .map(|(sym, mut pts)| {
            pts.sort_by_key(|p| p.0);
            PriceSeries::new(sym, pts)
        })
        .collect()
}

pub fn write_event_study<W: Write>(study: &EventStudy, mut w: W) -> std::io::Result<()> {
    write!(w, "group\tcount")?;
    for p in DEFAULT_LEVELS {
        write!(w, "\tq{p}")?;
    }
    writeln!(w, "\tskewness")?;
    for (group, s) in [("with_news", &study.with_news), ("without_news", &study.without_news)] {
        write!(w, "{group}\t{}", s.count)?;
        for (_, q) in &s.quantiles {
            write!(w, "\t{q:.6}")?;
        }
        writeln!(w, "\t{:.6}", s.skewness)?;
    }
    writeln!(w, "# ks_statistic\t{:.6}", study.ks.statistic)?;
    writeln!(w, "# ks_p_value\t{:e}", study.ks.p_value)?;
    writeln!(w, "# skipped_events\t{}", study.skipped_events)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn series(prices: &[f64]) -> PriceSeries {
        let start = tsv::parse_date("2015-01-01").unwrap();
        let pts = prices
            .iter()
            .enumerate()
            .map(|(i, &p)| (start + Duration::days(i as i64), p))
            .collect();
        PriceSeries::new("XYZ", pts).unwrap()
    }

    fn day(s: &PriceSeries, i: usize) -> NaiveDate {
        s.points()[i].0
    }

    #[test]
    fn constant_prices_give_zero_returns() {
        let s = series(&[10.0; 30]);
        let r = window_log_returns(&s, &[day(&s, 15)], 10).unwrap();
        assert_eq!(r.with_news, vec![0.0]);
        assert!(r.without_news.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centered_window_indices() {
        let prices: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
        let s = series(&prices);
        let r = window_log_returns(&s, &[day(&s, 15)], 10).unwrap();
        assert_eq!(r.with_news.len(), 1);
        assert!((r.with_news[0] - (120.0f64 / 110.0).ln()).abs() < 1e-15);
        // Spans [s, s+10] with s in 0..20 that avoid (10, 20): s ≤ 0 or s ≥ 20.
        assert_eq!(r.without_news.len(), 1);
    }

    #[test]
    fn no_events_uses_every_span() {
        let s = series(&[1.0; 30]);
        let r = window_log_returns(&s, &[], 10).unwrap();
        assert!(r.with_news.is_empty());
        assert_eq!(r.without_news.len(), 20);
    }

    #[test]
    fn out_of_range_and_bad_windows() {
        let s = series(&[1.0; 30]);
        let before = tsv::parse_date("2014-01-01").unwrap();
        let r = window_log_returns(&s, &[before, day(&s, 2)], 10).unwrap();
        assert_eq!(r.skipped, 2);
        assert!(r.with_news.is_empty());
        assert!(window_log_returns(&s, &[], 9).is_err());
        assert!(window_log_returns(&series(&[1.0; 10]), &[], 10).is_err());
        assert!(PriceSeries::new("X", vec![(before, 0.0)]).is_err());
    }

    #[test]
    fn nearest_trading_day() {
        let d = |s: &str| tsv::parse_date(s).unwrap();
        let s = PriceSeries::new("X", vec![(d("2015-01-02"), 1.0), (d("2015-01-05"), 1.0), (d("2015-01-06"), 1.0)])
            .unwrap();
        assert_eq!(s.nearest_index(d("2015-01-03")), Some(0));
        assert_eq!(s.nearest_index(d("2015-01-04")), Some(1));
        assert_eq!(s.nearest_index(d("2015-01-07")), None);
    }

    #[test]
    fn stats_and_monotone_quantiles() {
        let st = sample_stats(&[-1.0, 0.0, 1.0], &DEFAULT_LEVELS).unwrap();
        assert_eq!(st.skewness, 0.0);
        assert_eq!(st.quantiles[2], (0.5, 0.0));
        assert!(st.quantiles.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(sample_stats(&[1.0, 2.0], &DEFAULT_LEVELS).is_err());
    }
}
