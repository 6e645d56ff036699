//! CSV input and output: comma-separated, header row, `.` decimals, `NA`
//! for missing values, LF line endings. Floats are written in shortest
//! round-trip form, so reading a file back and writing it again reproduces
//! it byte for byte.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::curve::{CurvePoint, LearningCurve};
use crate::error::{Error, Result};
use crate::harness::{DatasetStudyRow, StudyResult};
use crate::logistic::Dataset;

pub const NA: &str = "NA";

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

/// `m,tau,std_error` rows for the given points.
pub fn write_points<W: Write>(w: W, points: &[CurvePoint]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["m", "tau", "std_error"]).map_err(io_err)?;
    for p in points {
        out.write_record([p.m.to_string(), p.value.to_string(), opt(p.std_error)])
            .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// A curve as reported, values clamped to `[0, 1]`.
pub fn write_curve<W: Write>(w: W, curve: &LearningCurve) -> Result<()> {
    let pts: Vec<CurvePoint> = curve.reported().into_iter().map(|(p, _)| p).collect();
    write_points(w, &pts)
}

fn parse_f64(s: &str, line: u64, column: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        column: column.to_string(),
        message: format!("`{s}` is not a number"),
    })
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

pub fn read_points<R: Read>(r: R) -> Result<Vec<CurvePoint>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(r);
    let header = rdr.headers().map_err(io_err)?.clone();
    if header.iter().collect::<Vec<_>>() != ["m", "tau", "std_error"] {
        return Err(Error::Parse {
            line: 1,
            column: String::new(),
            message: "expected header m,tau,std_error".into(),
        });
    }
    let mut pts = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(io_err)?;
        let line = record_line(&rec);
        let m = rec[0].trim().parse::<usize>().map_err(|_| Error::Parse {
            line,
            column: "m".into(),
            message: format!("`{}` is not a size", &rec[0]),
        })?;
        let value = parse_f64(&rec[1], line, "tau")?;
        let std_error = match rec[2].trim() {
            NA => None,
            s => Some(parse_f64(s, line, "std_error")?),
        };
        pts.push(CurvePoint { m, value, std_error });
    }
    Ok(pts)
}

/// Study table: `p,r,estimator,quantity,m_from,m_to,truth,mean,sd`.
pub fn write_study<W: Write>(w: W, res: &StudyResult) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["p", "r", "estimator", "quantity", "m_from", "m_to", "truth", "mean", "sd"])
        .map_err(io_err)?;
    for row in &res.rows {
        out.write_record([
            row.p.to_string(),
            row.r.to_string(),
            row.estimator.to_string(),
            row.quantity.as_str().to_string(),
            opt(row.m_from),
            row.m_to.to_string(),
            row.truth.to_string(),
            row.mean.to_string(),
            opt(row.sd),
        ])
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// `kind,n,cv,tau_<k>...,gain_<k>...` with one column pair per multiplier.
pub fn write_dataset_study<W: Write>(w: W, rows: &[DatasetStudyRow]) -> Result<()> {
    let mut out = writer(w);
    let Some(first) = rows.first() else {
        return out.flush().map_err(io_err);
    };
    let mut header = vec!["kind".to_string(), "n".into(), "cv".into()];
    header.extend(first.multipliers.iter().map(|k| format!("tau_{k}n")));
    header.extend(first.multipliers.iter().map(|k| format!("gain_{k}n")));
    out.write_record(&header).map_err(io_err)?;
    for row in rows {
        let mut rec = vec![row.kind.to_string(), row.n.to_string(), row.cv.to_string()];
        rec.extend(row.tau.iter().map(f64::to_string));
        rec.extend(row.gain.iter().map(f64::to_string));
        out.write_record(&rec).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Read a numeric table whose column `label` holds 0/1 labels; every
/// other column becomes a feature.
pub fn read_dataset<R: Read>(r: R, label: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers().map_err(io_err)?.iter().map(str::to_string).collect();
    let label_col = header.iter().position(|h| h == label).ok_or_else(|| Error::Parse {
        line: 1,
        column: label.to_string(),
        message: "label column not found in header".into(),
    })?;
    let names: Vec<String> = header.iter().enumerate().filter(|(j, _)| *j != label_col).map(|(_, h)| h.clone()).collect();
    let mut cells = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(io_err)?;
        let line = record_line(&rec);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for (j, field) in rec.iter().enumerate() {
            let v = parse_f64(field, line, &header[j])?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: header[j].clone(),
                    message: format!("non-finite value `{field}`"),
                });
            }
            if j == label_col {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Parse {
                        line,
                        column: header[j].clone(),
                        message: format!("label must be 0 or 1, found `{field}`"),
                    });
                }
                labels.push(v as u8);
            } else {
                cells.push(v);
            }
        }
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::DegenerateData("no data rows".into()));
    }
    let x = DMatrix::from_row_slice(n, names.len(), &cells);
    Dataset::new(x, labels)?.with_column_names(names)
}

/// Inverse of [`read_dataset`]: features then the label column.
pub fn write_dataset<W: Write>(w: W, data: &Dataset, label: &str) -> Result<()> {
    let mut out = writer(w);
    let names: Vec<String> = match data.column_names() {
        Some(n) => n.to_vec(),
        None => (1..=data.p()).map(|j| format!("x{j}")).collect(),
    };
    let mut header = names;
    header.push(label.to_string());
    out.write_record(&header).map_err(io_err)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.features().row(i).iter().map(f64::to_string).collect();
        rec.push(data.labels()[i].to_string());
        out.write_record(&rec).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
