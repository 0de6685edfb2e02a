use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Time-indexed inputs `u_1..u_T` and measurements `z_1..z_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    measurements: Vec<Vec<f64>>,
    dt: f64,
    label: String,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, measurements: Vec<Vec<f64>>, dt: f64, label: impl Into<String>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Dataset("dataset must contain at least one sample".into()));
        }
        if inputs.len() != measurements.len() {
            return Err(Error::Dataset(format!(
                "{} inputs but {} measurements",
                inputs.len(),
                measurements.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Dataset(format!("sampling interval must be > 0, got {dt}")));
        }
        let (nu, nz) = (inputs[0].len(), measurements[0].len());
        if inputs.iter().any(|u| u.len() != nu) || measurements.iter().any(|z| z.len() != nz) {
            return Err(Error::Dataset("ragged input or measurement rows".into()));
        }
        Ok(Self {
            inputs,
            measurements,
            dt,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn measurements(&self) -> &[Vec<f64>] {
        &self.measurements
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn meas_dim(&self) -> usize {
        self.measurements[0].len()
    }

    /// First `n` samples (at least one).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.clamp(1, self.len());
        Self {
            inputs: self.inputs[..n].to_vec(),
            measurements: self.measurements[..n].to_vec(),
            dt: self.dt,
            label: self.label.clone(),
        }
    }

    /// Default column names `u1..`, `z1..`.
    pub fn generic_header(input_dim: usize, meas_dim: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=input_dim).map(|i| format!("u{i}")));
        h.extend((1..=meas_dim).map(|i| format!("z{i}")));
        h
    }

    /// Writes `t,<inputs>,<measurements>` rows with `t_k = k·dt`.
    ///
    /// Values use Rust's shortest round-trip float formatting, so writing the
    /// same dataset twice is byte-identical and reading it back is exact.
    pub fn write_csv<W: Write>(&self, writer: W, header: &[String]) -> Result<()> {
        if header.len() != 1 + self.input_dim() + self.meas_dim() {
            return Err(Error::Dataset("header width does not match dataset".into()));
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(header).map_err(csv_err)?;
        for (k, (u, z)) in self.inputs.iter().zip(&self.measurements).enumerate() {
            let t = (k + 1) as f64 * self.dt;
            let row: Vec<String> = std::iter::once(t)
                .chain(u.iter().copied())
                .chain(z.iter().copied())
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`Dataset::write_csv`].
    ///
    /// The first column is time, the next `input_dim` columns are inputs and
    /// the rest are measurements. `dt` is taken from the time column.
    pub fn read_csv<R: Read>(reader: R, input_dim: usize, label: &str) -> Result<(Self, Vec<String>)> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
        if header.len() < 2 + input_dim {
            return Err(Error::Dataset(format!(
                "expected at least {} columns, header has {}",
                2 + input_dim,
                header.len()
            )));
        }
        let mut times = Vec::new();
        let mut inputs = Vec::new();
        let mut meas = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            if rec.len() != header.len() {
                return Err(Error::Dataset(format!("row {} has {} fields", line + 2, rec.len())));
            }
            let vals = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Dataset(format!("row {}: cannot parse `{s}`", line + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            times.push(vals[0]);
            inputs.push(vals[1..1 + input_dim].to_vec());
            meas.push(vals[1 + input_dim..].to_vec());
        }
        if times.is_empty() {
            return Err(Error::Dataset("no data rows".into()));
        }
        let dt = if times.len() == 1 {
            times[0]
        } else {
            let dt = times[1] - times[0];
            for w in times.windows(2) {
                if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.abs().max(1.0) {
                    return Err(Error::Dataset("non-uniform sampling interval".into()));
                }
            }
            dt
        };
        Ok((Self::new(inputs, meas, dt, label)?, header))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Dataset(e.to_string())
}
