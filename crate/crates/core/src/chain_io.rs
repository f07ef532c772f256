//! CSV persistence for draws, posterior summaries and plain matrices.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading a
//! file back reproduces every `f64` bit for bit. All writes go to a temporary
//! file in the target directory which is then renamed over the destination.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gibbs::{scalar_names, Draw, ScalarSummary};
use crate::model::{Dataset, DeltaLayout};

/// Writes `path` by filling a temporary sibling file and renaming it.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn csv_writer(w: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file))
}

fn records(path: &Path) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in open(path)?.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::format(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(out.len() + 1, |p| p.line() as usize);
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_row(path: &Path, line: usize, rec: &csv::StringRecord) -> Result<Vec<f64>> {
    rec.iter()
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::format(path, line, format!("not a number: `{f}`")))
        })
        .collect()
}

/// Writes a matrix as headerless CSV, one row per line.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv_writer(w);
        for i in 0..m.nrows() {
            csv.write_record(m.row(i).iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        csv.flush()
    })
}

/// Reads a headerless numeric CSV into a matrix. An empty file gives `0 × 0`.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = records(path)?
        .into_iter()
        .map(|(line, rec)| parse_row(path, line, &rec).map(|r| (line, r)))
        .collect::<Result<Vec<_>>>()?;
    matrix_from_rows(path, rows)
}

fn matrix_from_rows(path: &Path, rows: Vec<(usize, Vec<f64>)>) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, |(_, r)| r.len());
    for (line, r) in &rows {
        if r.len() != ncols {
            return Err(Error::format(path, *line, format!("expected {ncols} fields, got {}", r.len())));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i].1[j]))
}

/// Reads observations: a `T × N` numeric CSV with an optional header row.
pub fn read_data(path: &Path) -> Result<Dataset> {
    let mut recs = records(path)?;
    let has_header = recs
        .first()
        .is_some_and(|(_, r)| r.iter().any(|f| f.trim().parse::<f64>().is_err()));
    if has_header {
        recs.remove(0);
    }
    if recs.is_empty() {
        return Err(Error::format(path, 1, "no observations"));
    }
    let rows = recs
        .into_iter()
        .map(|(line, rec)| parse_row(path, line, &rec).map(|r| (line, r)))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(matrix_from_rows(path, rows)?)
}

/// Writes observations with a `r[1],…,r[N]` header.
pub fn write_data(path: &Path, data: &Dataset) -> Result<()> {
    let m = data.matrix();
    write_atomic(path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record((1..=m.ncols()).map(|j| format!("r[{j}]"))).map_err(csv_err)?;
        for i in 0..m.nrows() {
            csv.write_record(m.row(i).iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        csv.flush()
    })
}

/// Writes one row per draw: `iter`, then the scalars named by [`scalar_names`].
pub fn write_chain(path: &Path, draws: &[Draw], layout: DeltaLayout) -> Result<()> {
    let with_varphi = draws.first().is_some_and(|d| d.varphi.is_some());
    write_atomic(path, |w| {
        let mut csv = csv_writer(w);
        let mut header = vec!["iter".to_string()];
        header.extend(scalar_names(layout, with_varphi));
        csv.write_record(&header).map_err(csv_err)?;
        for d in draws {
            let mut row = vec![d.iteration.to_string()];
            row.extend(d.scalars(layout).into_iter().map(|v| v.to_string()));
            csv.write_record(&row).map_err(csv_err)?;
        }
        csv.flush()
    })
}

fn bad_header(path: &Path, message: impl Into<String>) -> Error {
    Error::format(path, 1, message)
}

/// Recovers the dimension, layout and presence of `varphi` from a chain header.
fn parse_header(path: &Path, header: &csv::StringRecord) -> Result<(DeltaLayout, bool)> {
    let names: Vec<&str> = header.iter().collect();
    if names.first() != Some(&"iter") {
        return Err(bad_header(path, "first column must be `iter`"));
    }
    let count = |prefix: &str| names.iter().filter(|s| s.starts_with(prefix)).count();
    let n = count("mu[");
    let nd = count("delta[");
    let with_varphi = names.last() == Some(&"varphi");
    if n == 0 {
        return Err(bad_header(path, "no mu columns"));
    }
    let layout = if nd == n * (n + 1) / 2 {
        DeltaLayout::Lower(n)
    } else if nd == n * n {
        DeltaLayout::Full(n)
    } else {
        return Err(bad_header(path, format!("{nd} delta columns do not fit dimension {n}")));
    };
    let mut expected = vec!["iter".to_string()];
    expected.extend(scalar_names(layout, with_varphi));
    if names != expected {
        return Err(bad_header(path, "column names are not in the expected order"));
    }
    Ok((layout, with_varphi))
}

/// Reads a file produced by [`write_chain`]. Latent states are not stored.
pub fn read_chain(path: &Path) -> Result<(DeltaLayout, Vec<Draw>)> {
    let mut recs = records(path)?.into_iter();
    let (_, header) = recs.next().ok_or_else(|| bad_header(path, "empty chain file"))?;
    let (layout, with_varphi) = parse_header(path, &header)?;
    let n = layout.n();
    let positions = layout.positions();
    let width = header.len();
    let mut draws = Vec::new();
    for (line, rec) in recs {
        if rec.len() != width {
            return Err(Error::format(path, line, format!("expected {width} fields, got {}", rec.len())));
        }
        let iteration = rec[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::format(path, line, format!("bad iteration `{}`", &rec[0])))?;
        let vals = parse_row(path, line, &rec.iter().skip(1).collect::<csv::StringRecord>())?;
        let mu = DVector::from_column_slice(&vals[..n]);
        let mut delta = DMatrix::zeros(n, n);
        for (k, &(i, j)) in positions.iter().enumerate() {
            delta[(i, j)] = vals[n + k];
        }
        let off = n + positions.len();
        let omega = DMatrix::from_row_slice(n, n, &vals[off..off + n * n]);
        draws.push(Draw {
            iteration,
            mu,
            delta,
            omega,
            varphi: with_varphi.then(|| vals[off + n * n]),
            z: None,
        });
    }
    Ok((layout, draws))
}

/// Writes `name,mean,q025,q50,q975`, one row per scalar.
pub fn write_scalar_summary(path: &Path, scalars: &[ScalarSummary]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(["name", "mean", "q025", "q50", "q975"]).map_err(csv_err)?;
        for s in scalars {
            csv.write_record([
                s.name.clone(),
                s.mean.to_string(),
                s.q025.to_string(),
                s.q50.to_string(),
                s.q975.to_string(),
            ])
            .map_err(csv_err)?;
        }
        csv.flush()
    })
}

/// Writes a CSV with the given header and preformatted rows.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv_writer(w);
        csv.write_record(header).map_err(csv_err)?;
        for r in rows {
            csv.write_record(r).map_err(csv_err)?;
        }
        csv.flush()
    })
}
