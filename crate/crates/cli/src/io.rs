//! Price and market-quote CSV ingestion.
//!
//! Prices use the header `date,close` with ISO dates; market quotes use
//! `strike,market_price,expiry`. Extra columns are ignored. Errors name the
//! file line (the header is line 1).

use std::collections::HashMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use roughvol_core::analytics::EmpiricalSeries;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct MarketQuote {
    pub strike: f64,
    pub market_price: f64,
    pub expiry: NaiveDate,
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))
}

fn column(headers: &csv::StringRecord, name: &str, source: &str) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| CliError::validation(format!("{source}: missing column '{name}' in header")))
}

fn csv_error(source: &str, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => CliError::Io(format!("{source}: {e}")),
        _ => match e.position() {
            Some(pos) => CliError::validation(format!("{source}: line {}: {e}", pos.line())),
            None => CliError::validation(format!("{source}: {e}")),
        },
    }
}

fn parse_number(field: &str, what: &str, source: &str, line: u64) -> CliResult<f64> {
    let x: f64 = field
        .trim()
        .parse()
        .map_err(|_| CliError::validation(format!("{source}: line {line}: invalid {what} '{field}'")))?;
    if !x.is_finite() {
        return Err(CliError::validation(format!(
            "{source}: line {line}: {what} must be finite, got '{field}'"
        )));
    }
    Ok(x)
}

fn parse_date(field: &str, source: &str, line: u64) -> CliResult<NaiveDate> {
    NaiveDate::parse_from_str(field.trim(), "%Y-%m-%d").map_err(|_| {
        CliError::validation(format!(
            "{source}: line {line}: invalid date '{field}' (expected YYYY-MM-DD)"
        ))
    })
}

pub fn load_prices(path: &Path) -> CliResult<EmpiricalSeries> {
    parse_prices(open(path)?, &path.display().to_string())
}

/// Parses a `date,close` table, sorts it by date and derives returns and
/// realised variance.
pub fn parse_prices<R: Read>(reader: R, source: &str) -> CliResult<EmpiricalSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let date_col = column(&headers, "date", source)?;
    let close_col = column(&headers, "close", source)?;

    let mut rows: Vec<(NaiveDate, f64, u64)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let date = parse_date(record.get(date_col).unwrap_or(""), source, line)?;
        let close = parse_number(record.get(close_col).unwrap_or(""), "close", source, line)?;
        if close <= 0.0 {
            return Err(CliError::validation(format!(
                "{source}: line {line}: non-positive close {close} on {date}"
            )));
        }
        rows.push((date, close, line));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(CliError::validation(format!(
            "{source}: duplicate date {} (lines {} and {})",
            w[0].0, w[0].2, w[1].2
        )));
    }
    if rows.len() < 2 {
        return Err(CliError::validation(format!(
            "{source}: need at least 2 price rows, got {}",
            rows.len()
        )));
    }
    let dates = rows.iter().map(|r| r.0.format("%Y-%m-%d").to_string()).collect();
    let close = rows.iter().map(|r| r.1).collect();
    Ok(EmpiricalSeries::from_prices(dates, close)?)
}

pub fn load_market(path: &Path) -> CliResult<Vec<MarketQuote>> {
    parse_market(open(path)?, &path.display().to_string())
}

pub fn parse_market<R: Read>(reader: R, source: &str) -> CliResult<Vec<MarketQuote>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let strike_col = column(&headers, "strike", source)?;
    let price_col = column(&headers, "market_price", source)?;
    let expiry_col = column(&headers, "expiry", source)?;

    let mut quotes = Vec::new();
    let mut seen: HashMap<u64, u64> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let strike = parse_number(record.get(strike_col).unwrap_or(""), "strike", source, line)?;
        let market_price =
            parse_number(record.get(price_col).unwrap_or(""), "market_price", source, line)?;
        let expiry = parse_date(record.get(expiry_col).unwrap_or(""), source, line)?;
        if strike <= 0.0 || market_price <= 0.0 {
            return Err(CliError::validation(format!(
                "{source}: line {line}: strike and market_price must be positive"
            )));
        }
        if let Some(first) = seen.insert(strike.to_bits(), line) {
            return Err(CliError::validation(format!(
                "{source}: line {line}: strike {strike} already quoted on line {first}"
            )));
        }
        quotes.push(MarketQuote {
            strike,
            market_price,
            expiry,
        });
    }
    Ok(quotes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_give_two_returns() {
        let s = parse_prices("date,close\n2024-01-02,100\n2024-01-03,101\n2024-01-04,99.5\n".as_bytes(), "t")
            .unwrap();
        assert_eq!(s.log_returns.len(), 2);
        assert!(s.realized_var.is_empty());
        assert!((s.log_returns[0] - (101.0f64 / 100.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn rows_are_sorted_by_date() {
        let s = parse_prices("date,close\n2024-01-04,3\n2024-01-02,1\n2024-01-03,2\n".as_bytes(), "t").unwrap();
        assert_eq!(s.close, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.dates[0], "2024-01-02");
    }

    #[test]
    fn zero_close_names_the_line() {
        let err = parse_prices("date,close\n2024-01-02,100\n2024-01-03,0\n".as_bytes(), "p.csv").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn duplicate_date_is_named() {
        let err = parse_prices(
            "date,close\n2024-01-02,100\n2024-01-03,101\n2024-01-02,102\n".as_bytes(),
            "p.csv",
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate date 2024-01-02"), "{err}");
    }

    #[test]
    fn bad_date_and_header_are_rejected() {
        assert!(parse_prices("date,close\n01/02/2024,100\n".as_bytes(), "t").is_err());
        assert!(parse_prices("day,price\n2024-01-02,100\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn constant_prices_have_zero_returns_and_variance() {
        let mut text = String::from("date,close\n");
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        for i in 0..30 {
            text.push_str(&format!("{},50\n", start + chrono::Days::new(i)));
        }
        let s = parse_prices(text.as_bytes(), "t").unwrap();
        assert_eq!(s.log_returns.len(), 29);
        assert!(s.log_returns.iter().all(|&r| r == 0.0));
        assert_eq!(s.realized_var.len(), 10);
        assert!(s.realized_var.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn market_quotes_parse_and_report_bad_lines() {
        let q = parse_market(
            "strike,market_price,expiry\n500,149.39,2025-11-21\n505,144.73,2025-11-21\n".as_bytes(),
            "m",
        )
        .unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q[1].strike, 505.0);
        let err = parse_market(
            "strike,market_price,expiry\n500,149.39,2025-11-21\n505,abc,2025-11-21\n".as_bytes(),
            "m.csv",
        )
        .unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let ragged = parse_market(
            "strike,market_price,expiry\n500,149.39,2025-11-21\n505,1\n".as_bytes(),
            "m.csv",
        )
        .unwrap_err();
        assert!(ragged.to_string().contains("line 3"), "{ragged}");
    }
}
