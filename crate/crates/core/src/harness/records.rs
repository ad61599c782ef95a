use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{HarnessError, Method};

/// One evaluated target point of one method's run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    pub replication: usize,
    pub iteration: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub best_so_far: f64,
}

/// Mean best-so-far over replications and its two-standard-error half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub iteration: usize,
    pub mean_best: f64,
    pub se2: f64,
}

/// Shortest round-trip-safe representation: 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<(), HarnessError> {
    let dim = records.iter().map(|r| r.x.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["method", "replication", "iteration", "y", "best_so_far"].map(String::from).to_vec();
    header.extend((0..dim).map(|i| format!("x_{i}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.method.name().to_string(), r.replication.to_string(), r.iteration.to_string()];
        row.push(format_float(r.y));
        row.push(format_float(r.best_so_far));
        row.extend(r.x.iter().map(|&v| format_float(v)));
        row.resize(header.len(), String::new());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>, HarnessError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    let fixed = ["method", "replication", "iteration", "y", "best_so_far"];
    if header.len() < fixed.len() || header.iter().zip(fixed).any(|(a, b)| a != b) {
        return Err(HarnessError::Parse(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let parse_f = |s: &str| s.parse::<f64>().map_err(|e| HarnessError::Parse(format!("{s:?}: {e}")));
    let parse_u = |s: &str| s.parse::<usize>().map_err(|e| HarnessError::Parse(format!("{s:?}: {e}")));
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let x = row.iter().skip(fixed.len()).filter(|s| !s.is_empty()).map(parse_f).collect::<Result<_, _>>()?;
        out.push(RunRecord {
            method: row[0].parse()?,
            replication: parse_u(&row[1])?,
            iteration: parse_u(&row[2])?,
            y: parse_f(&row[3])?,
            best_so_far: parse_f(&row[4])?,
            x,
        });
    }
    Ok(out)
}

/// Per (method, iteration): mean best-so-far and `2 * std / sqrt(R)` with the
/// sample standard deviation. Methods keep their order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut methods: Vec<Method> = Vec::new();
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        let m = match methods.iter().position(|&m| m == r.method) {
            Some(i) => i,
            None => {
                methods.push(r.method);
                methods.len() - 1
            }
        };
        groups.entry((m, r.iteration)).or_default().push(r.best_so_far);
    }
    groups
        .into_iter()
        .map(|((m, iteration), values)| {
            let n = values.len();
            if n < 2 {
                return Err(HarnessError::InsufficientReplications { method: methods[m], iteration, count: n });
            }
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            Ok(SummaryRow { method: methods[m], iteration, mean_best: mean, se2: 2.0 * (var / n as f64).sqrt() })
        })
        .collect()
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "iteration", "mean_best", "se2"])?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.iteration.to_string(),
            format_float(r.mean_best),
            format_float(r.se2),
        ])?;
    }
    w.flush()?;
    Ok(())
}
