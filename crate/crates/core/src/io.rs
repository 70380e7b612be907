//! CSV and JSON reading and writing.
//!
//! Price files have a `timestamp,price` header. Timestamps are integers or
//! ISO-8601 strings (converted to Unix seconds). Lines starting with `#`
//! are comments; written files put the resolved configuration there.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::PriceStream;

/// Float format for CSV cells: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parses an integer timestamp or an ISO-8601 date/time (UTC when no
/// offset is given) into Unix seconds.
pub fn parse_timestamp(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Ok(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt.and_utc().timestamp());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp());
    }
    Err(Error::Parse(format!("unrecognised timestamp {s:?}")))
}

/// Reads a `timestamp,price` table. Extra columns are ignored.
pub fn read_prices<R: Read>(reader: R) -> Result<PriceStream> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or_else(|| Error::Parse(format!("missing column {name:?}")))
    };
    let (ts_col, price_col) = (column("timestamp")?, column("price")?);
    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).ok_or_else(|| Error::Parse(format!("row {} is missing a column", row + 1)));
        timestamps.push(parse_timestamp(field(ts_col)?)?);
        let p = field(price_col)?;
        prices.push(p.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: bad price {p:?}", row + 1)))?);
    }
    PriceStream::new(timestamps, prices)
}

pub fn read_price_csv(path: &Path) -> Result<PriceStream> {
    read_prices(File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?)
}

/// Writes a CSV table preceded by an optional `#` comment line.
pub fn write_table<W: Write>(writer: W, comment: Option<&str>, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = BufWriter::new(writer);
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_prices<W: Write>(writer: W, prices: &PriceStream, comment: Option<&str>) -> Result<()> {
    let rows = prices.timestamps().iter().zip(prices.prices()).map(|(t, p)| vec![t.to_string(), fmt_float(*p)]);
    write_table(writer, comment, &["timestamp", "price"], rows)
}

pub fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps() {
        assert_eq!(parse_timestamp("42").unwrap(), 42);
        assert_eq!(parse_timestamp("1970-01-02").unwrap(), 86400);
        assert_eq!(parse_timestamp("1970-01-01T01:00:00Z").unwrap(), 3600);
        assert_eq!(parse_timestamp("1970-01-01 00:00:30").unwrap(), 30);
        assert_eq!(parse_timestamp("1970-01-01T02:00:00+01:00").unwrap(), 3600);
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn round_trip() {
        let prices = PriceStream::new(vec![0, 1, 2], vec![100.0, 101.5, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        write_prices(&mut buf, &prices, Some("config={\"a\":1}")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config={\"a\":1}\ntimestamp,price\n0,1.0000000000000000e2\n"));
        assert_eq!(read_prices(buf.as_slice()).unwrap(), prices);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(read_prices("timestamp,price\n0,1\n0,2\n".as_bytes()), Err(Error::UnorderedTimestamps(1))));
        assert!(matches!(read_prices("timestamp,price\n1,1\n0,2\n".as_bytes()), Err(Error::UnorderedTimestamps(1))));
        assert!(matches!(read_prices("timestamp,price\n0,1\n1,-2\n".as_bytes()), Err(Error::NonPositivePrice { index: 1, .. })));
        assert!(matches!(read_prices("time,price\n0,1\n1,2\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_prices("timestamp,price\n0,abc\n1,2\n".as_bytes()), Err(Error::Parse(_))));
        let iso = "timestamp,price,volume\n2020-01-02T10:00:00Z,10,5\n2020-01-02T11:00:00Z,11,6\n";
        assert_eq!(read_prices(iso.as_bytes()).unwrap().prices(), &[10.0, 11.0]);
    }
}
