//! CSV persistence for sampled fields.
//!
//! Layout: one header row (`t`, then value columns), numbers written with 17
//! significant digits so artifacts round-trip bit-exactly.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, SpaceTimeField, TimeGrid, TimeSeries};

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_time_series(w: &mut impl Write, s: &TimeSeries) -> Result<()> {
    writeln!(w, "t,value")?;
    let g = s.grid();
    for (n, v) in s.values().iter().enumerate() {
        writeln!(w, "{},{}", fmt(g.node(n)), fmt(*v))?;
    }
    Ok(())
}

pub fn write_space_time(w: &mut impl Write, f: &SpaceTimeField) -> Result<()> {
    let cols: Vec<String> = (0..f.sgrid().len()).map(|i| format!("x_{i}")).collect();
    writeln!(w, "t,{}", cols.join(","))?;
    let g = f.tgrid();
    for n in 0..g.len() {
        let row: Vec<String> = f.row(n).iter().map(|v| fmt(*v)).collect();
        writeln!(w, "{},{}", fmt(g.node(n)), row.join(","))?;
    }
    Ok(())
}

pub fn save_time_series(path: &Path, s: &TimeSeries) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    write_time_series(&mut f, s)
}

pub fn save_space_time(path: &Path, f: &SpaceTimeField) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    write_space_time(&mut file, f)
}

fn parse_line(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::CsvParse(format!("line {lineno}: '{tok}': {e}")))
        })
        .collect()
}

/// Read a `t,value` series; the grid is inferred from the node count and the
/// last time stamp.
pub fn read_time_series(r: impl Read) -> Result<TimeSeries> {
    let reader = BufReader::new(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if k == 0 && trimmed.parse::<f64>().is_err() && !trimmed.contains(|c: char| c.is_ascii_digit()) {
            continue; // header
        }
        if k == 0 && trimmed.starts_with('t') {
            continue;
        }
        rows.push(parse_line(trimmed, k + 1)?);
    }
    if rows.len() < 3 {
        return Err(Error::CsvParse("need at least 3 data rows".into()));
    }
    for (k, row) in rows.iter().enumerate() {
        if row.len() != 2 {
            return Err(Error::CsvParse(format!("row {k} has {} columns, expected 2", row.len())));
        }
    }
    let t_end = rows.last().unwrap()[0];
    let grid = TimeGrid::new(t_end, rows.len() - 1)?;
    TimeSeries::new(grid, rows.iter().map(|r| r[1]).collect())
}

pub fn load_time_series(path: &Path) -> Result<TimeSeries> {
    read_time_series(std::fs::File::open(path)?)
}

/// Read a `t,x_0..x_M` table into a space-time field.
pub fn read_space_time(r: impl Read) -> Result<SpaceTimeField> {
    let reader = BufReader::new(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if k == 0 && trimmed.starts_with('t') {
            continue;
        }
        rows.push(parse_line(trimmed, k + 1)?);
    }
    if rows.len() < 3 {
        return Err(Error::CsvParse("need at least 3 data rows".into()));
    }
    let width = rows[0].len();
    if width < 6 {
        return Err(Error::CsvParse("need at least 5 space columns".into()));
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::CsvParse("ragged rows".into()));
    }
    let t_end = rows.last().unwrap()[0];
    let tgrid = TimeGrid::new(t_end, rows.len() - 1)?;
    let sgrid = SpaceGrid::new(width - 2)?;
    let mut out = SpaceTimeField::zeros(tgrid, sgrid);
    for (n, row) in rows.iter().enumerate() {
        out.row_mut(n).copy_from_slice(&row[1..]);
    }
    Ok(out)
}

pub fn load_space_time(path: &Path) -> Result<SpaceTimeField> {
    read_space_time(std::fs::File::open(path)?)
}
