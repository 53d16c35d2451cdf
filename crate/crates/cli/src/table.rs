//! Numeric CSV tables with a header row.

use std::io::Write;

use csv::{ReaderBuilder, Trim, WriterBuilder};

/// A header plus rows of floats, all of the header's width.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Table { header, rows: Vec::new() }
    }

    /// Parses CSV text; `#` starts a comment line. Errors name the line and
    /// column.
    pub fn parse(text: &str, name: &str) -> Result<Table, String> {
        let mut rdr = ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| format!("{name}: {e}"))?
            .iter()
            .map(String::from)
            .collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(format!("{name}: missing header row"));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| format!("{name}: {e}"))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != header.len() {
                return Err(format!(
                    "{name} line {line}: expected {} fields, found {}",
                    header.len(),
                    rec.len()
                ));
            }
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, f)| {
                    f.parse::<f64>()
                        .map_err(|_| format!("{name} line {line}, column {}: invalid number {f:?}", j + 1))
                })
                .collect::<Result<Vec<f64>, String>>()?;
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn width(&self) -> usize {
        self.header.len()
    }

    /// CSV text with shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut w = WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format!("{v}"))).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("ascii output")
    }
}

/// `prefix1, …, prefixn`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Parses `"a,b,c"` into floats.
pub fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("{what}: invalid number {:?}", p.trim()))
        })
        .collect()
}

pub fn write_output(path: Option<&str>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_write() {
        let t = Table::parse("# comment\nt, x1\n0, 1.5\n0.5,-2\n", "p.csv").unwrap();
        assert_eq!(t.header, vec!["t", "x1"]);
        assert_eq!(t.rows, vec![vec![0.0, 1.5], vec![0.5, -2.0]]);
        assert_eq!(t.to_csv(), "t,x1\n0,1.5\n0.5,-2\n");
        let third = 1.0 / 3.0;
        let mut u = Table::new(numbered("x", 1));
        u.rows.push(vec![third]);
        let back = Table::parse(&u.to_csv(), "u").unwrap();
        assert_eq!(back.rows[0][0].to_bits(), third.to_bits());
    }

    #[test]
    fn errors_carry_location() {
        let e = Table::parse("t,x\n0,1\n1,abc\n", "q.csv").unwrap_err();
        assert!(e.contains("line 3") && e.contains("column 2"), "{e}");
        let e = Table::parse("t,x\n0\n", "q.csv").unwrap_err();
        assert!(e.contains("line 2"), "{e}");
        assert_eq!(parse_list("1, 2.5", "x0").unwrap(), vec![1.0, 2.5]);
        assert!(parse_list("1,,2", "x0").is_err());
    }
}
