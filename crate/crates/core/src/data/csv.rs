//! CSV ingestion.
//!
//! Header: `series_id,time,value_1..value_D[,mask_1..mask_D][,target]`.
//! Rows may come in any order; they are grouped by `series_id` and sorted by
//! time. Series share the union of all time stamps as their grid, with the
//! mask cleared where a series has no row. An empty value cell counts as
//! unobserved. Without a `target` column, targets are the next step's values.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TargetKind, TimeSeriesBatch};
use crate::diffcore::Array;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Interpret the `target` column as binary labels instead of regression values.
    pub label_target: bool,
}

struct Columns {
    values: Vec<usize>,
    masks: Option<Vec<usize>>,
    target: Option<usize>,
}

fn parse_header(header: &csv::StringRecord) -> Result<Columns> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let missing = |what: &str| Error::Parse { line: 1, msg: format!("missing column `{what}`") };
    if names.first() != Some(&"series_id") {
        return Err(missing("series_id"));
    }
    if names.get(1) != Some(&"time") {
        return Err(missing("time"));
    }
    let find = |name: String| names.iter().position(|n| *n == name);
    let values: Vec<usize> = (1..).map_while(|j| find(format!("value_{j}"))).collect();
    if values.is_empty() {
        return Err(missing("value_1"));
    }
    let masks: Vec<usize> = (1..).map_while(|j| find(format!("mask_{j}"))).collect();
    let masks = match masks.len() {
        0 => None,
        l if l == values.len() => Some(masks),
        l => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("{l} mask columns for {} value columns", values.len()),
            })
        }
    };
    Ok(Columns { values, masks, target: find("target".into()) })
}

struct Row {
    line: usize,
    time: f64,
    values: Vec<f64>,
    mask: Vec<f64>,
    target: Option<f64>,
}

fn number(field: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("non-numeric `{column}` cell `{field}`") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite `{column}` cell") });
    }
    Ok(v)
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<TimeSeriesBatch> {
    let file = std::fs::File::open(path)?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<TimeSeriesBatch> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no data rows".into() });
    }
    let cols = parse_header(&header)?;
    let dim = cols.values.len();

    let mut order: Vec<String> = Vec::new();
    let mut series: HashMap<String, Vec<Row>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let id = field(0).trim().to_string();
        let time = number(field(1), line, "time")?;
        let mut values = vec![0.0; dim];
        let mut mask = vec![0.0; dim];
        for (j, &c) in cols.values.iter().enumerate() {
            let cell = field(c);
            if !cell.trim().is_empty() {
                values[j] = number(cell, line, &format!("value_{}", j + 1))?;
                mask[j] = 1.0;
            }
        }
        if let Some(mcols) = &cols.masks {
            for (j, &c) in mcols.iter().enumerate() {
                let mv = number(field(c), line, &format!("mask_{}", j + 1))?;
                if mv != 0.0 && mv != 1.0 {
                    return Err(Error::Parse { line, msg: format!("mask_{} must be 0 or 1", j + 1) });
                }
                mask[j] = mv;
            }
        }
        let target = match cols.target {
            Some(c) if !field(c).trim().is_empty() => Some(number(field(c), line, "target")?),
            _ => None,
        };
        if !series.contains_key(&id) {
            order.push(id.clone());
        }
        series.entry(id).or_default().push(Row { line, time, values, mask, target });
    }
    if order.is_empty() {
        return Err(Error::Parse { line: 2, msg: "no data rows".into() });
    }

    let mut grid: Vec<f64> = Vec::new();
    for id in &order {
        let rows = series.get_mut(id).expect("grouped");
        rows.sort_by(|a, b| a.time.total_cmp(&b.time));
        for w in rows.windows(2) {
            if w[0].time == w[1].time {
                return Err(Error::Parse {
                    line: w[1].line,
                    msg: format!("duplicate time {} in series `{id}` (also line {})", w[1].time, w[0].line),
                });
            }
        }
        grid.extend(rows.iter().map(|r| r.time));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let n = grid.len();
    let k = order.len();
    let pos = |t: f64| grid.binary_search_by(|g| g.total_cmp(&t)).expect("time in grid");

    let mut x = vec![0.0; k * n * dim];
    let mut m = vec![0.0; k * n * dim];
    let (kind, out_dim) = match (cols.target, schema.label_target) {
        (None, _) => (TargetKind::NextValue, dim),
        (Some(_), false) => (TargetKind::Explicit, 1),
        (Some(_), true) => (TargetKind::Label, 1),
    };
    let mut tg = vec![0.0; k * n * out_dim];
    let mut tm = vec![0.0; k * n * out_dim];
    for (s, id) in order.iter().enumerate() {
        for row in &series[id] {
            let i = pos(row.time);
            let base = (s * n + i) * dim;
            x[base..base + dim].copy_from_slice(&row.values);
            m[base..base + dim].copy_from_slice(&row.mask);
            if let Some(v) = row.target {
                if kind == TargetKind::Label && v != 0.0 && v != 1.0 {
                    return Err(Error::Parse { line: row.line, msg: "label target must be 0 or 1".into() });
                }
                tg[s * n + i] = v;
                tm[s * n + i] = 1.0;
            }
        }
        if kind == TargetKind::NextValue {
            for i in 0..n.saturating_sub(1) {
                for d in 0..dim {
                    let next = (s * n + i + 1) * dim + d;
                    tg[(s * n + i) * dim + d] = x[next] * m[next];
                    tm[(s * n + i) * dim + d] = m[next];
                }
            }
        }
    }
    TimeSeriesBatch::new(
        Array::new(vec![k, n, dim], x)?,
        Array::new(vec![k, n, dim], m)?,
        grid,
        Array::new(vec![k, n, out_dim], tg)?,
        Array::new(vec![k, n, out_dim], tm)?,
        kind,
        order,
    )
}
