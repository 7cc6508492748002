//! CSV reading and writing with round-trip-exact float formatting.
//!
//! Floats are printed with 17 significant digits so that re-parsing yields
//! bit-identical values; NaN marks samples a residue channel cannot reach.

use std::io::Write;
use std::path::Path;

use crate::commands::CliError;

/// Formats a float so that parsing recovers the identical bit pattern.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Parses a float written by [`fmt_f64`].
pub fn parse_f64(text: &str) -> Result<f64, CliError> {
    text.trim()
        .parse::<f64>()
        .map_err(|e| CliError::Config(format!("bad float {text:?}: {e}")))
}

/// Writes a header row and data rows as comma-separated values.
pub fn write_csv<P, R>(path: P, header: &[String], rows: R) -> Result<(), CliError>
where
    P: AsRef<Path>,
    R: IntoIterator<Item = Vec<String>>,
{
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Config(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
    let mut out = std::io::BufWriter::new(file);
    let io_result = (|| -> std::io::Result<()> {
        debug_assert!(header.iter().all(|f| !f.contains([',', '\n'])));
        writeln!(out, "{}", header.join(","))?;
        for row in rows {
            debug_assert!(row.iter().all(|f| !f.contains([',', '\n'])));
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    })();
    io_result.map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Reads a CSV file into its header and data rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips_exactly() {
        for v in [
            0.0,
            -0.0,
            1.0,
            0.1,
            -3.1150908638455953e-5,
            6.493506493506494e-3,
            f64::MIN_POSITIVE,
            1.7976931348623157e308,
        ] {
            let back = parse_f64(&fmt_f64(v)).unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v}");
        }
        assert!(parse_f64(&fmt_f64(f64::NAN)).unwrap().is_nan());
    }

    #[test]
    fn csv_round_trips_rows() {
        let dir = std::env::temp_dir().join("threetank_csvio_test");
        let path = dir.join("t.csv");
        let header = vec!["a".to_string(), "b".to_string()];
        let rows = vec![
            vec![fmt_f64(1.5), fmt_f64(f64::NAN)],
            vec![fmt_f64(-2.0), "1".to_string()],
        ];
        write_csv(&path, &header, rows.clone()).unwrap();
        let (h, r) = read_csv(&path).unwrap();
        assert_eq!(h, header);
        assert_eq!(r, rows);
        std::fs::remove_dir_all(&dir).ok();
    }
}
