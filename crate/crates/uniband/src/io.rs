//! File formats: one-column CSV in, JSON and plot-ready CSV out.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use uniband_core::{BootstrapDraws, Sample, UniformBand};

use crate::error::AppError;
use crate::sim::ReplicationOutcome;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io { path: path.to_path_buf(), source }
}

/// Reads a single numeric column. A non-numeric first row is taken as a
/// header; any later non-numeric row is an error. Blank lines are skipped and
/// both LF and CRLF endings are accepted.
pub fn read_sample_csv(path: &Path) -> Result<Sample, AppError> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_sample_csv(file, path)
}

pub fn parse_sample_csv<R: Read>(reader: R, path: &Path) -> Result<Sample, AppError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let csv_err = |line: u64, reason: String| AppError::Csv { path: path.to_path_buf(), line, reason };
    let mut values = Vec::new();
    let mut first = true;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let fields: Vec<&str> = record.iter().filter(|f| !f.is_empty()).collect();
        match fields.as_slice() {
            [] => continue,
            [field] => match field.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                Ok(_) => return Err(csv_err(line, format!("non-finite value `{field}`"))),
                Err(_) if first => {}
                Err(_) => return Err(csv_err(line, format!("not a number: `{field}`"))),
            },
            _ => return Err(csv_err(line, format!("expected one column, found {}", fields.len()))),
        }
        first = false;
    }
    if values.len() < 2 {
        return Err(csv_err(0, format!("need at least 2 observations, found {}", values.len())));
    }
    Ok(Sample::new(values)?)
}

/// Pretty JSON with a trailing newline, to `path` or stdout.
pub fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), AppError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(&text, path)
}

pub fn write_text(text: &str, path: Option<&Path>) -> Result<(), AppError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, AppError> {
    let file = File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_write_err(path: &Path) -> impl Fn(csv::Error) -> AppError + '_ {
    move |e| AppError::Io { path: PathBuf::from(path), source: std::io::Error::other(e) }
}

/// `x,center,lower,upper,sigma_hat` per grid point.
pub fn write_band_csv(band: &UniformBand, path: &Path) -> Result<(), AppError> {
    let mut w = csv_writer(path)?;
    let err = csv_write_err(path);
    w.write_record(["x", "center", "lower", "upper", "sigma_hat"]).map_err(&err)?;
    for j in 0..band.grid.p() {
        w.serialize((band.grid.points[j], band.center[j], band.lower[j], band.upper[j], band.sigma_hat[j]))
            .map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Sorted bootstrap maxima, one per row.
pub fn write_maxima_csv(draws: &BootstrapDraws, path: &Path) -> Result<(), AppError> {
    let mut w = csv_writer(path)?;
    let err = csv_write_err(path);
    w.write_record(["rank", "max_abs_t_star"]).map_err(&err)?;
    for (k, m) in draws.maxima.iter().enumerate() {
        w.serialize((k + 1, m)).map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Per-replication trace of a coverage run.
pub fn write_trace_csv(trace: &[ReplicationOutcome], path: &Path) -> Result<(), AppError> {
    let mut w = csv_writer(path)?;
    let err = csv_write_err(path);
    for row in trace {
        w.serialize(row).map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Sample, AppError> {
        parse_sample_csv(text.as_bytes(), Path::new("test.csv"))
    }

    #[test]
    fn header_and_line_endings() {
        let s = parse("value\r\n1.5\r\n-2\r\n\r\n3e-1\n").unwrap();
        assert_eq!(s.values(), &[1.5, -2.0, 0.3]);
        let s = parse("1\n2\n").unwrap();
        assert_eq!(s.values(), &[1.0, 2.0]);
    }

    #[test]
    fn malformed_rows_name_the_line() {
        match parse("x\n1\n2\nabc\n") {
            Err(AppError::Csv { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("1,2\n3,4\n"), Err(AppError::Csv { .. })));
        // locale decimal commas are not accepted
        assert!(parse("1\n2,5\n").is_err());
        assert!(matches!(parse(""), Err(AppError::Csv { .. })));
        assert!(matches!(parse("x\n"), Err(AppError::Csv { .. })));
        assert!(parse("1\ninf\n").is_err());
    }

    proptest::proptest! {
        #[test]
        fn shortest_repr_round_trips(
            values in proptest::collection::vec(-1e300f64..1e300, 2..50),
            header: bool,
            crlf: bool,
        ) {
            let eol = if crlf { "\r\n" } else { "\n" };
            let mut text = if header { format!("value{eol}") } else { String::new() };
            for v in &values {
                text.push_str(&format!("{v}{eol}"));
            }
            let parsed = parse(&text).unwrap();
            proptest::prop_assert_eq!(parsed.values(), &values[..]);
        }
    }
}
