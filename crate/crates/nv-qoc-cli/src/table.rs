//! Tab-separated numeric tables with fixed 17-significant-digit formatting,
//! enough to round-trip every f64 bit pattern.

/// One float cell: scientific notation with 16 fractional digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A rectangular table of floats under a fixed header.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Table {
        assert!(!header.is_empty(), "table needs at least one column");
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row.to_vec());
    }

    /// Header line plus one line per row, tab separated, `\n` line endings.
    pub fn render(&self) -> String {
        let mut out = self.header.join("\t");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }
}
