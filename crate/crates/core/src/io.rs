//! CSV formats. Every file has a header row; floats are written in their
//! shortest round-trip decimal form, so reading a file back gives the
//! same bits.
//!
//! | content | header |
//! |---|---|
//! | volatility path on the observation grid | `t,V` |
//! | price increments | `l,dX` |
//! | quadratic variation blocks | `i,qv` |
//! | regression pairs | `i,x,y` |
//! | fitted curve | `v,fhat` |
//! | selection trace | `family,dim,contrast,penalty,criterion,chosen` |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lsq::Fit;
use crate::quadvar::{QuadVarSeries, RegressionSample};
use crate::sampling::ObservationSet;
use crate::selection::SelectionOutcome;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    ryu::Buffer::new().format(x).to_string()
}

/// Points of an exported fitted curve.
pub const CURVE_POINTS: usize = 512;

fn write_rows<W: Write, I, R>(w: W, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// `V` at times `t = i * step`.
pub fn write_path<W: Write>(w: W, step: f64, values: &[f64]) -> Result<()> {
    write_rows(w, &["t", "V"], values.iter().enumerate().map(|(i, v)| [fmt_f64(i as f64 * step), fmt_f64(*v)]))
}

/// Increments indexed from `l = 1`.
pub fn write_observations<W: Write>(w: W, obs: &ObservationSet) -> Result<()> {
    write_rows(w, &["l", "dX"], obs.increments.iter().enumerate().map(|(i, x)| [(i + 1).to_string(), fmt_f64(*x)]))
}

pub fn write_quadvar<W: Write>(w: W, qv: &QuadVarSeries) -> Result<()> {
    write_rows(w, &["i", "qv"], qv.values.iter().enumerate().map(|(i, v)| [i.to_string(), fmt_f64(*v)]))
}

pub fn write_regression<W: Write>(w: W, sample: &RegressionSample) -> Result<()> {
    write_rows(
        w,
        &["i", "x", "y"],
        sample.xs.iter().zip(&sample.ys).enumerate().map(|(i, (x, y))| [i.to_string(), fmt_f64(*x), fmt_f64(*y)]),
    )
}

/// The fit on `points` equally spaced points of its domain.
pub fn write_curve<W: Write>(w: W, fit: &Fit, points: usize) -> Result<()> {
    write_rows(w, &["v", "fhat"], fit.curve(points).into_iter().map(|(v, f)| [fmt_f64(v), fmt_f64(f)]))
}

pub fn write_selection_trace<W: Write>(w: W, outcome: &SelectionOutcome) -> Result<()> {
    write_rows(
        w,
        &["family", "dim", "contrast", "penalty", "criterion", "chosen"],
        outcome.table.iter().enumerate().map(|(i, r)| {
            [
                r.spec.family().to_string(),
                r.spec.dim().to_string(),
                fmt_f64(r.contrast),
                fmt_f64(r.penalty),
                fmt_f64(r.criterion),
                u8::from(i == outcome.chosen).to_string(),
            ]
        }),
    )
}

/// Reads an `l,dX` file. Rows must be numbered `1, 2, ...` in order.
pub fn read_observations<R: Read>(r: R, step: f64) -> Result<ObservationSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.len() != 2 || &header[0] != "l" || &header[1] != "dX" {
        return Err(Error::Malformed {
            line: 1,
            message: format!("expected header `l,dX`, found `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut increments = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let malformed = |message: String| Error::Malformed { line, message };
        if rec.len() != 2 {
            return Err(malformed(format!("expected 2 fields, found {}", rec.len())));
        }
        let l: usize = rec[0].parse().map_err(|_| malformed(format!("bad index `{}`", &rec[0])))?;
        if l != i + 1 {
            return Err(malformed(format!("index {l} out of sequence, expected {}", i + 1)));
        }
        let x: f64 = rec[1].parse().map_err(|_| malformed(format!("bad increment `{}`", &rec[1])))?;
        increments.push(x);
    }
    ObservationSet::new(step, increments)
}

/// Buffered writer on a new file.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}
