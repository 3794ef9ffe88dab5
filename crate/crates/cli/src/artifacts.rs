//! CSV trajectories and JSON artifacts.
//!
//! Trajectory CSVs have the header `t,x1,...,xd,sample`, where `sample`
//! numbers the trajectories in the file. Every JSON artifact carries a
//! `schema_version`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mpflow::om::Path as Trajectory;
use serde::Serialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Write trajectories in order; `None` entries keep their id but add no rows.
pub fn write_paths(
    file: &Path,
    dim: usize,
    paths: &[Option<&Trajectory<f64>>],
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(file)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    header.push("sample".into());
    w.write_record(&header)?;
    for (id, p) in paths.iter().enumerate() {
        let Some(p) = p else { continue };
        for (t, x) in p.times.iter().zip(&p.points) {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(f64::to_string));
            row.push(id.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a trajectory CSV back, grouped by `sample` (0 when the column is
/// absent), in increasing id order.
pub fn read_paths(file: &Path) -> Result<BTreeMap<usize, Trajectory<f64>>, CliError> {
    let mut r = csv::Reader::from_path(file)?;
    let header = r.headers()?.clone();
    let t_col = header.iter().position(|h| h == "t");
    let sample_col = header.iter().position(|h| h == "sample");
    let x_cols: Vec<usize> = (1..)
        .map_while(|i| header.iter().position(|h| h == format!("x{i}")))
        .collect();
    let Some(t_col) = t_col.filter(|_| !x_cols.is_empty()) else {
        return Err(CliError::Io(format!(
            "{}: expected header t,x1,...,xd[,sample]",
            file.display()
        )));
    };
    let mut groups: BTreeMap<usize, (Vec<f64>, Vec<Vec<f64>>)> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64, CliError> {
            rec.get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| {
                    CliError::Io(format!(
                        "{}: bad number on data row {}",
                        file.display(),
                        line + 1
                    ))
                })
        };
        let id = match sample_col {
            Some(c) => num(c)? as usize,
            None => 0,
        };
        let x = x_cols
            .iter()
            .map(|&c| num(c))
            .collect::<Result<Vec<_>, _>>()?;
        let g = groups.entry(id).or_default();
        g.0.push(num(t_col)?);
        g.1.push(x);
    }
    groups
        .into_iter()
        .map(|(id, (t, x))| {
            Trajectory::new(t, x)
                .map(|p| (id, p))
                .map_err(|e| CliError::Io(format!("{}: trajectory {id}: {e}", file.display())))
        })
        .collect()
}

pub fn write_json<T: Serialize>(file: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(file, text)?;
    Ok(())
}
