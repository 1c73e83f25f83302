//! P-value files: CSV with an optional header, one value per row or
//! `id,p` pairs. Blank lines and `#` comments are skipped.

use std::io::Read;
use std::path::Path;

use fact_core::PValueVector;

use crate::error::CliError;

pub fn read_path(path: &Path) -> Result<PValueVector, CliError> {
    let bytes = if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        std::io::stdin().read_to_end(&mut buf).map_err(|e| CliError::input(None, format!("reading stdin: {e}")))?;
        buf
    } else {
        std::fs::read(path).map_err(|e| CliError::input(None, format!("cannot read {}: {e}", path.display())))?
    };
    parse(&bytes)
}

fn parse_p(field: &str) -> Option<f64> {
    let v: f64 = field.parse().ok()?;
    // Rejects nan/inf spellings along with anything outside [0, 1].
    (v.is_finite() && (0.0..=1.0).contains(&v)).then_some(v)
}

pub fn parse(bytes: &[u8]) -> Result<PValueVector, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line());
            CliError::input(line, format!("malformed row: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let (id, raw) = match record.len() {
            1 => (None, &record[0]),
            2 => (Some(&record[0]), &record[1]),
            n => return Err(CliError::input(Some(line), format!("expected `p` or `id,p`, found {n} fields"))),
        };
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(CliError::input(Some(line), "rows mix `p` and `id,p` layouts"));
        }
        let Some(p) = parse_p(raw) else {
            // A first row that is not a p-value is a header.
            if i == 0 && raw.parse::<f64>().is_err() {
                width = None;
                continue;
            }
            return Err(CliError::input(Some(line), format!("`{raw}` is not a p-value in [0, 1]")));
        };
        if let Some(id) = id {
            if id.is_empty() {
                return Err(CliError::input(Some(line), "empty hypothesis id"));
            }
            ids.push(id.to_string());
        }
        values.push(p);
    }
    if values.is_empty() {
        return Err(CliError::input(None, "input contains no p-values"));
    }
    if ids.is_empty() {
        Ok(PValueVector::from_values(values)?)
    } else {
        Ok(PValueVector::new(values, ids)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err_line(text: &str) -> Option<u64> {
        match parse(text.as_bytes()) {
            Err(CliError::Input { line, .. }) => line,
            other => panic!("expected input error, got {other:?}"),
        }
    }

    #[test]
    fn plain_and_paired_layouts() {
        let v = parse(b"0.01\n0.02\n\n0.2\n").unwrap();
        assert_eq!(v.values(), &[0.01, 0.02, 0.2]);
        assert_eq!(v.ids(), &["1", "2", "3"]);
        let v = parse(b"id,p\n a , 0.5\n# note\nb,1e-3\n").unwrap();
        assert_eq!(v.ids(), &["a", "b"]);
        assert_eq!(v.values(), &[0.5, 0.001]);
        let v = parse(b"p\n0.3\n").unwrap();
        assert_eq!(v.values(), &[0.3]);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        assert_eq!(err_line("0.1\n0.2\nabc\n"), Some(3));
        assert_eq!(err_line("0.1\n1.5\n"), Some(2));
        assert_eq!(err_line("a,0.1\n0.2\n"), Some(2));
        assert_eq!(err_line("a,0.1,x\n"), Some(1));
        assert_eq!(err_line("0.1\nnan\n"), Some(2));
        assert_eq!(err_line("0,5\n"), Some(1));
        assert_eq!(err_line(""), None);
        assert_eq!(err_line("p\n"), None);
    }

    #[test]
    fn duplicate_ids_are_refused() {
        assert!(matches!(parse(b"a,0.1\na,0.2\n"), Err(CliError::Core(_))));
    }
}
