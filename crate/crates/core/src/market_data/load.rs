use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{MarketDataError, PriceSeries, Result};

/// On-disk layout of a price file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceFormat {
    /// `date,ticker,adj_close`, one observation per row.
    #[default]
    LongCsv,
    /// `date,<ticker1>,<ticker2>,...`; an empty cell is a missing price.
    WideCsv,
}

impl FromStr for PriceFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "long" | "long_csv" => Ok(Self::LongCsv),
            "wide" | "wide_csv" => Ok(Self::WideCsv),
            other => Err(format!("unknown price format {other:?} (expected long or wide)")),
        }
    }
}

pub fn load_prices(path: impl AsRef<Path>, format: PriceFormat) -> Result<BTreeMap<String, PriceSeries>> {
    let path = path.as_ref();
    let unreadable = |reason: String| MarketDataError::FileUnreadable { path: path.display().to_string(), reason };
    let mut text = String::new();
    std::fs::File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(|e| unreadable(e.to_string()))?;
    if text.trim().is_empty() {
        return Err(unreadable("file is empty".into()));
    }
    parse_prices(text.as_bytes(), format).map_err(|e| match e {
        MarketDataError::FileUnreadable { reason, .. } => unreadable(reason),
        other => other,
    })
}

/// Parses price CSV from any reader.
pub fn parse_prices<R: Read>(reader: R, format: PriceFormat) -> Result<BTreeMap<String, PriceSeries>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| MarketDataError::FileUnreadable { path: String::new(), reason: e.to_string() })?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(MarketDataError::FileUnreadable { path: String::new(), reason: "missing header".into() });
    }
    match format {
        PriceFormat::LongCsv => parse_long(&mut rdr, &headers),
        PriceFormat::WideCsv => parse_wide(&mut rdr, &headers),
    }
}

/// Writes `series` in `format`; the inverse of [`parse_prices`]. Wide files
/// use the union of all dates, with empty cells where a ticker has no row.
pub fn write_prices<W: Write>(series: &BTreeMap<String, PriceSeries>, format: PriceFormat, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let cell = |p: Option<f64>| p.map(|v| v.to_string()).unwrap_or_default();
    match format {
        PriceFormat::LongCsv => {
            w.write_record(["date", "ticker", "adj_close"])?;
            for (ticker, s) in series {
                for (d, p) in s.dates.iter().zip(&s.adj_close) {
                    w.write_record([d.to_string(), ticker.clone(), cell(*p)])?;
                }
            }
        }
        PriceFormat::WideCsv => {
            let dates: BTreeSet<NaiveDate> = series.values().flat_map(|s| s.dates.iter().copied()).collect();
            let mut header = vec!["date".to_string()];
            header.extend(series.keys().cloned());
            w.write_record(&header)?;
            for d in dates {
                let mut row = vec![d.to_string()];
                row.extend(series.values().map(|s| cell(s.price_on(d).flatten())));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn malformed(line: u64, reason: impl Into<String>) -> MarketDataError {
    MarketDataError::MalformedRow { line, reason: reason.into() }
}

fn parse_date(field: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field, "%Y-%m-%d").map_err(|e| malformed(line, format!("bad date {field:?}: {e}")))
}

fn parse_price(field: &str, line: u64) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    let v: f64 = field.parse().map_err(|_| malformed(line, format!("bad price {field:?}")))?;
    if !v.is_finite() {
        return Err(malformed(line, format!("non-finite price {field:?}")));
    }
    Ok(Some(v))
}

type Rows = BTreeMap<String, Vec<(NaiveDate, Option<f64>)>>;

fn finish(rows: Rows) -> Result<BTreeMap<String, PriceSeries>> {
    rows.into_iter()
        .map(|(ticker, obs)| {
            let (dates, prices) = obs.into_iter().unzip();
            PriceSeries::new(ticker.clone(), dates, prices).map(|s| (ticker, s))
        })
        .collect()
}

fn parse_long<R: Read>(rdr: &mut csv::Reader<R>, headers: &csv::StringRecord) -> Result<BTreeMap<String, PriceSeries>> {
    let expected = ["date", "ticker", "adj_close"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e)) {
        return Err(malformed(
            1,
            format!("expected header date,ticker,adj_close, got {:?}", headers.iter().collect::<Vec<_>>()),
        ));
    }
    let mut rows = Rows::new();
    for record in rdr.records() {
        let record = record.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(malformed(line, format!("expected 3 fields, got {}", record.len())));
        }
        let date = parse_date(&record[0], line)?;
        let ticker = &record[1];
        if ticker.is_empty() {
            return Err(malformed(line, "empty ticker"));
        }
        let price = parse_price(&record[2], line)?;
        rows.entry(ticker.to_string()).or_default().push((date, price));
    }
    finish(rows)
}

fn parse_wide<R: Read>(rdr: &mut csv::Reader<R>, headers: &csv::StringRecord) -> Result<BTreeMap<String, PriceSeries>> {
    if !headers[0].eq_ignore_ascii_case("date") || headers.len() < 2 {
        return Err(malformed(1, "expected header date,<ticker>,..."));
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if let Some(t) = tickers.iter().find(|t| t.is_empty()) {
        return Err(malformed(1, format!("empty ticker name {t:?}")));
    }
    let mut rows = Rows::new();
    for t in &tickers {
        if rows.insert(t.clone(), Vec::new()).is_some() {
            return Err(malformed(1, format!("ticker {t} appears twice in header")));
        }
    }
    for record in rdr.records() {
        let record = record.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(malformed(line, format!("expected {} fields, got {}", headers.len(), record.len())));
        }
        let date = parse_date(&record[0], line)?;
        for (t, field) in tickers.iter().zip(record.iter().skip(1)) {
            let price = parse_price(field, line)?;
            rows.get_mut(t).expect("ticker registered from header").push((date, price));
        }
    }
    finish(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_rows_are_grouped_and_sorted() {
        let csv = "date,ticker,adj_close\n2020-01-03,AAA,11\n2020-01-02,AAA,10\n2020-01-02,BBB,-1.00\n";
        let m = parse_prices(csv.as_bytes(), PriceFormat::LongCsv).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m["AAA"].adj_close, vec![Some(10.0), Some(11.0)]);
        assert_eq!(m["BBB"].adj_close, vec![Some(-1.0)]);
    }

    #[test]
    fn wide_empty_cell_is_missing() {
        let csv = "date,AAA,BBB\n2020-01-02,10,\n2020-01-03,11,5\n";
        let m = parse_prices(csv.as_bytes(), PriceFormat::WideCsv).unwrap();
        assert_eq!(m["BBB"].adj_close, vec![None, Some(5.0)]);
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "date,ticker,adj_close\n2020-01-02,AAA,10\n2020-01-03,AAA,abc\n";
        match parse_prices(csv.as_bytes(), PriceFormat::LongCsv) {
            Err(MarketDataError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_date_rejected() {
        let csv = "date,ticker,adj_close\n2020-01-02,AAA,10\n2020-01-02,AAA,11\n";
        assert!(matches!(
            parse_prices(csv.as_bytes(), PriceFormat::LongCsv),
            Err(MarketDataError::DuplicateDateForTicker { .. })
        ));
    }

    #[test]
    fn empty_input_is_unreadable() {
        assert!(matches!(
            parse_prices("".as_bytes(), PriceFormat::LongCsv),
            Err(MarketDataError::FileUnreadable { .. })
        ));
    }
}
