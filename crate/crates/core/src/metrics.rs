//! Phase-aligned SNR, successive relative errors and trace CSV I/O.

use std::io::Write;

use num_complex::Complex64 as C64;

use crate::error::{check_len, Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{ComplexImage, IterationRecord, SolverTrace};

/// Reported in place of `+inf` for exact reconstructions.
pub const SNR_CAP_DB: f64 = 300.0;

pub const TRACE_HEADER: &str = "iter,objective,snr,err_u,err_D,sparsity,seconds";

/// Which norm divides the aligned error.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SnrDenominator {
    /// `||u_hat||`, the estimate.
    #[default]
    Estimate,
    /// `||u||`, the ground truth.
    Truth,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrReport {
    pub snr_db: f64,
    /// Unit-modulus phase applied to the estimate.
    pub phase: C64,
}

/// `-20 log10(||s u_hat - u|| / ||.||)` minimized over `|s| = 1`.
pub fn snr(u_hat: &ComplexImage, u_true: &ComplexImage, denom: SnrDenominator) -> Result<SnrReport> {
    check_len("snr rows", u_true.rows(), u_hat.rows())?;
    check_len("snr cols", u_true.cols(), u_hat.cols())?;
    let est_norm = u_hat.norm();
    if est_norm == 0.0 {
        return Err(Error::Domain("snr of a zero estimate".into()));
    }
    let cross: C64 = u_hat
        .as_slice()
        .iter()
        .zip(u_true.as_slice())
        .map(|(a, b)| a * b.conj())
        .sum();
    let phase = if cross.norm() > 0.0 {
        cross.conj() / cross.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let err = u_hat
        .as_slice()
        .iter()
        .zip(u_true.as_slice())
        .map(|(a, b)| (a * phase - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let scale = match denom {
        SnrDenominator::Estimate => est_norm,
        SnrDenominator::Truth => u_true.norm(),
    };
    if scale == 0.0 {
        return Err(Error::Domain("snr against a zero reference".into()));
    }
    let snr_db = if err == 0.0 {
        SNR_CAP_DB
    } else {
        (-20.0 * (err / scale).log10()).min(SNR_CAP_DB)
    };
    Ok(SnrReport { snr_db, phase })
}

fn relative(diff_sq: f64, current_sq: f64, what: &str) -> Result<f64> {
    if current_sq == 0.0 {
        return Err(Error::Domain(format!("relative error with zero current {what}")));
    }
    Ok((diff_sq / current_sq).sqrt())
}

/// `||u_k - u_prev|| / ||u_k||` and `||D_k - D_prev||_F / ||D_k||_F`.
pub fn successive_errors(
    u_k: &ComplexImage,
    u_prev: &ComplexImage,
    d_k: &CMat,
    d_prev: &CMat,
) -> Result<(f64, f64)> {
    check_len("image", u_k.len(), u_prev.len())?;
    check_len("dictionary", d_k.len(), d_prev.len())?;
    let err_u = relative(u_k.distance(u_prev).powi(2), u_k.norm().powi(2), "image")?;
    let err_d = relative(linalg::frobenius_sq(&(d_k - d_prev)), linalg::frobenius_sq(d_k), "dictionary")?;
    Ok((err_u, err_d))
}

/// Wraps records in a trace, rejecting non-increasing iteration indices.
pub fn assemble_trace(records: Vec<IterationRecord>) -> Result<SolverTrace> {
    for pair in records.windows(2) {
        if pair[1].iter <= pair[0].iter {
            return Err(Error::InvalidParameter(format!(
                "trace iterations not increasing: {} then {}",
                pair[0].iter, pair[1].iter
            )));
        }
    }
    Ok(SolverTrace { records })
}

/// Writes the header and one row per record. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_trace_csv<W: Write>(trace: &SolverTrace, mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iter, r.objective, r.snr_db, r.err_u, r.err_d, r.sparsity, r.seconds
        )?;
    }
    Ok(())
}

pub fn trace_to_csv(trace: &SolverTrace) -> String {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv is ascii")
}

pub fn parse_trace_csv(text: &str) -> Result<SolverTrace> {
    let mut lines = text.lines();
    let mut offset = 0;
    match lines.next() {
        Some(h) if h.trim_end() == TRACE_HEADER => offset += h.len() + 1,
        _ => {
            return Err(Error::Format {
                offset: 0,
                msg: format!("expected header `{TRACE_HEADER}`"),
            })
        }
    }
    let mut records = Vec::new();
    for line in lines {
        let row = line.trim_end();
        if row.is_empty() {
            offset += line.len() + 1;
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Format {
                offset,
                msg: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|e| Error::Format {
                offset,
                msg: format!("field {i}: {e}"),
            })
        };
        let iter = fields[0].parse::<usize>().map_err(|e| Error::Format {
            offset,
            msg: format!("iter: {e}"),
        })?;
        records.push(IterationRecord {
            iter,
            objective: num(1)?,
            snr_db: num(2)?,
            err_u: num(3)?,
            err_d: num(4)?,
            sparsity: num(5)?,
            seconds: num(6)?,
        });
        offset += line.len() + 1;
    }
    assemble_trace(records)
}
