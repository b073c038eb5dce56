//! Observer data tables.
//!
//! Achromatic files carry `stimulus_id,luminance_cd_m2` with optional
//! `ci_low_cd_m2,ci_high_cd_m2`. Chromatic files carry
//! `stimulus_id,l_star,a_star,b_star` with optional bounds named
//! `ci_low_l_star` ... `ci_high_b_star`. Any other column is kept as a
//! condition label.

use std::collections::BTreeMap;
use std::path::Path;

use induction_core::fitting::{Measurement, ObserverDatum};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Luminance,
    Lab,
}

/// A datum plus the (1-based) file line it came from.
#[derive(Debug, Clone)]
pub struct Row {
    pub line: u64,
    pub datum: ObserverDatum,
}

const LAB: [&str; 3] = ["l_star", "a_star", "b_star"];

fn columns(quantity: Quantity) -> (Vec<String>, Vec<String>, Vec<String>) {
    match quantity {
        Quantity::Luminance => (
            vec!["luminance_cd_m2".into()],
            vec!["ci_low_cd_m2".into()],
            vec!["ci_high_cd_m2".into()],
        ),
        Quantity::Lab => (
            LAB.iter().map(|s| s.to_string()).collect(),
            LAB.iter().map(|s| format!("ci_low_{s}")).collect(),
            LAB.iter().map(|s| format!("ci_high_{s}")).collect(),
        ),
    }
}

fn measurement(quantity: Quantity, v: &[f64]) -> Measurement {
    match quantity {
        Quantity::Luminance => Measurement::Luminance(v[0]),
        Quantity::Lab => Measurement::Lab([v[0], v[1], v[2]]),
    }
}

pub fn read_observer_csv(path: &Path, quantity: Quantity) -> CliResult<Vec<Row>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    parse(file, quantity).map_err(|e| e.context(path.display()))
}

pub fn parse(input: impl std::io::Read, quantity: Quantity) -> CliResult<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| CliError::io(format!("line 1: {e}")))?
        .clone();
    let index = |name: &str| headers.iter().position(|h| h == name);
    let id_col = index("stimulus_id").ok_or_else(|| CliError::io("line 1: missing column stimulus_id"))?;
    let (value_names, low_names, high_names) = columns(quantity);
    let find_all = |names: &[String]| names.iter().map(|n| index(n)).collect::<Option<Vec<usize>>>();
    let values = find_all(&value_names)
        .ok_or_else(|| CliError::io(format!("line 1: expected columns {}", value_names.join(", "))))?;
    let low = find_all(&low_names);
    let high = find_all(&high_names);
    if low.is_some() != high.is_some() {
        return Err(CliError::io("line 1: confidence bounds need both low and high columns"));
    }
    let bounds = low.zip(high);
    let known: Vec<usize> = std::iter::once(id_col)
        .chain(values.iter().copied())
        .chain(bounds.iter().flat_map(|(l, h)| l.iter().chain(h).copied()))
        .collect();

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::io(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let at = |msg: String| CliError::io(format!("line {line}: {msg}"));
        let number = |col: usize| -> CliResult<f64> {
            let raw = &record[col];
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| at(format!("column {}: {raw:?} is not a finite number", &headers[col])))
        };
        let id = record[id_col].to_string();
        if id.is_empty() {
            return Err(at("empty stimulus_id".into()));
        }
        let v: Vec<f64> = values.iter().map(|&c| number(c)).collect::<CliResult<_>>()?;
        let response = measurement(quantity, &v);
        let (ci_low, ci_high) = match &bounds {
            Some((l, h)) => {
                let l: Vec<f64> = l.iter().map(|&c| number(c)).collect::<CliResult<_>>()?;
                let h: Vec<f64> = h.iter().map(|&c| number(c)).collect::<CliResult<_>>()?;
                (measurement(quantity, &l), measurement(quantity, &h))
            }
            None => (response, response),
        };
        let condition: BTreeMap<String, String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !known.contains(i))
            .map(|(i, h)| (h.to_string(), record[i].to_string()))
            .collect();
        let datum =
            ObserverDatum::new(id, response, ci_low, ci_high, condition).map_err(|e| at(e.to_string()))?;
        rows.push(Row { line, datum });
    }
    if rows.is_empty() {
        return Err(CliError::io("no data rows"));
    }
    Ok(rows)
}
