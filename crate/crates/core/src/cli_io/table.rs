//! Plain-text tables.
//!
//! Layout:
//!
//! ```text
//! # <kind>; units: col=unit ...; <key>=<value>; config_hash=<16 hex>
//! col_a,col_b,...
//! 1,0.5,...
//! # optional trailer lines
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so parsing a
//! cell gives back the exact value that was written.

use std::fmt::Write as _;

/// One table ready for emission, or one parsed back from text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub kind: String,
    /// `(column, unit)` pairs listed in the header.
    pub units: Vec<(String, String)>,
    /// Extra header fields, emitted in order after the units.
    pub meta: Vec<(String, String)>,
    pub config_hash: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// `#` lines after the rows, without the leading `# `.
    pub trailer: Vec<String>,
}

/// Shortest round-trip text of `v`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

impl Table {
    pub fn new(kind: &str, config_hash: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            kind: kind.into(),
            units: columns.iter().map(|(c, u)| (c.to_string(), u.to_string())).collect(),
            config_hash: config_hash.into(),
            columns: columns.iter().map(|(c, _)| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<String>) -> Self {
        self.meta.push((key.into(), value.into()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let units: Vec<String> = self.units.iter().map(|(c, u)| format!("{c}={u}")).collect();
        write!(out, "# {}; units: {}", self.kind, units.join(" ")).unwrap();
        for (k, v) in &self.meta {
            write!(out, "; {k}={v}").unwrap();
        }
        writeln!(out, "; config_hash={}", self.config_hash).unwrap();
        writeln!(out, "{}", self.columns.join(",")).unwrap();
        for row in &self.rows {
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        for line in &self.trailer {
            writeln!(out, "# {line}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or("missing `# ` header line")?;
        let mut fields = header.split("; ");
        let mut table = Table {
            kind: fields.next().unwrap_or_default().to_string(),
            ..Table::default()
        };
        for field in fields {
            if let Some(units) = field.strip_prefix("units: ") {
                table.units = units
                    .split(' ')
                    .filter(|s| !s.is_empty())
                    .map(|s| split_pair(s).ok_or(format!("bad unit entry `{s}`")))
                    .collect::<Result<_, _>>()?;
            } else {
                let (k, v) = split_pair(field).ok_or(format!("bad header field `{field}`"))?;
                if k == "config_hash" {
                    table.config_hash = v;
                } else {
                    table.meta.push((k, v));
                }
            }
        }
        table.columns = lines
            .next()
            .ok_or("missing column line")?
            .split(',')
            .map(str::to_string)
            .collect();
        for line in lines {
            if let Some(t) = line.strip_prefix('#') {
                table.trailer.push(t.strip_prefix(' ').unwrap_or(t).to_string());
            } else if !table.trailer.is_empty() {
                return Err("data row after trailer".into());
            } else {
                let row: Vec<String> = line.split(',').map(str::to_string).collect();
                if row.len() != table.columns.len() {
                    return Err(format!("row has {} cells, expected {}", row.len(), table.columns.len()));
                }
                table.rows.push(row);
            }
        }
        Ok(table)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cells of column `name` parsed as floats.
    pub fn floats(&self, name: &str) -> Result<Vec<f64>, String> {
        let c = self.column(name).ok_or(format!("no column `{name}`"))?;
        self.rows
            .iter()
            .map(|r| r[c].parse::<f64>().map_err(|e| format!("`{}`: {e}", r[c])))
            .collect()
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn split_pair(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    Some((k.to_string(), v.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn render_and_parse() {
        let mut t = Table::new("demo", "0123456789abcdef", &[("m", "index"), ("r_m", "m")])
            .with_meta("grid", "r_step_m=0.4");
        t.push(vec!["0".into(), fmt_f64(0.1)]);
        t.push(vec!["1".into(), fmt_f64(81.92)]);
        t.trailer.push("delay_range_s=1,2".into());
        let text = t.render();
        assert!(text.starts_with("# demo; units: m=index r_m=m; grid=r_step_m=0.4; config_hash=0123456789abcdef\n"));
        let back = Table::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.floats("r_m").unwrap(), vec![0.1, 81.92]);
    }

    #[test]
    fn header_only_table() {
        let t = Table::new("empty", "ffff", &[("a", "-")]);
        let back = Table::parse(&t.render()).unwrap();
        assert!(back.rows.is_empty());
        assert_eq!(back.columns, vec!["a"]);
    }

    #[test]
    fn special_floats() {
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!("inf".parse::<f64>().unwrap(), f64::INFINITY);
        assert_eq!(fmt_f64(-0.5), "-0.5");
    }

    proptest! {
        #[test]
        fn floats_round_trip(values in proptest::collection::vec(-1e12f64..1e12, 1..20)) {
            let mut t = Table::new("p", "0", &[("v", "-")]);
            for v in &values {
                t.push(vec![fmt_f64(*v)]);
            }
            let back = Table::parse(&t.render()).unwrap();
            prop_assert_eq!(back.floats("v").unwrap(), values);
        }
    }
}
