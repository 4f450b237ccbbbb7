//! Report rendering. JSON reports are `{"config": ..., "result": ...}`; CSV
//! reports start with a `# config: <json>` line followed by a table, with
//! floats written to 17 significant digits.

use serde_json::{json, Value};

use crate::config::{Format, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Num(x) => json!(x),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Rows as JSON objects keyed by column name.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| Value::Object(self.columns.iter().cloned().zip(r.iter().map(Cell::to_json)).collect()))
                .collect(),
        )
    }
}

/// Result of a command: the JSON body and the table used for CSV output.
/// When `table` is absent the CSV form is the flattened JSON body.
pub struct Report {
    pub result: Value,
    pub table: Option<Table>,
}

fn flatten(prefix: &str, v: &Value, out: &mut Table) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::Number(n) => {
            let cell = match (n.as_i64(), n.as_f64()) {
                (Some(i), _) if !n.is_f64() => Cell::Int(i),
                (_, Some(x)) => Cell::Num(x),
                _ => Cell::Text(n.to_string()),
            };
            out.push(vec![Cell::Text(prefix.to_string()), cell]);
        }
        Value::String(s) => out.push(vec![Cell::Text(prefix.to_string()), Cell::Text(s.clone())]),
        Value::Bool(b) => out.push(vec![Cell::Text(prefix.to_string()), Cell::Text(b.to_string())]),
        Value::Null => out.push(vec![Cell::Text(prefix.to_string()), Cell::Text(String::new())]),
    }
}

pub fn render(config: &RunConfig, report: &Report) -> String {
    match config.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&json!({"config": config, "result": report.result})).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => {
            let flat;
            let table = match &report.table {
                Some(t) => t,
                None => {
                    let mut t = Table::new(&["key", "value"]);
                    flatten("", &report.result, &mut t);
                    flat = t;
                    &flat
                }
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&table.columns).expect("in-memory write");
            for r in &table.rows {
                w.write_record(r.iter().map(Cell::render)).expect("in-memory write");
            }
            let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8");
            format!("# config: {}\n{body}", serde_json::to_string(config).expect("config serializes"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Command;

    #[test]
    fn csv_uses_17_digits_and_quotes() {
        let cfg = RunConfig { command: Command::ExampleStep { n: 3 }, seed: 0, threads: 0, format: Format::Csv };
        let mut t = Table::new(&["m", "kappa"]);
        t.push(vec![Cell::Text("(2,0)".into()), Cell::Num(4.0 / 9.0)]);
        let out = render(&cfg, &Report { result: t.to_json(), table: Some(t) });
        let lines: Vec<&str> = out.lines().collect();
        assert!(lines[0].starts_with("# config: {"));
        assert_eq!(lines[1], "m,kappa");
        assert_eq!(lines[2], "\"(2,0)\",4.4444444444444442e-1");
        let back: f64 = "4.4444444444444442e-1".parse().unwrap();
        assert_eq!(back, 4.0 / 9.0);
    }

    #[test]
    fn flattened_csv() {
        let cfg = RunConfig { command: Command::ExampleStep { n: 3 }, seed: 0, threads: 0, format: Format::Csv };
        let out = render(&cfg, &Report { result: json!({"a": 1, "b": {"c": [0.5]}}), table: None });
        assert!(out.ends_with("key,value\na,1\nb.c[0],5.0000000000000000e-1\n"), "{out}");
    }
}
