use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SysIdError;

/// Sampled input/output record with a uniform sample period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemData {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    sample_period: f64,
}

impl SystemData {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
        sample_period: f64,
    ) -> Result<Self, SysIdError> {
        if !(sample_period > 0.0 && sample_period.is_finite()) {
            return Err(SysIdError::InvalidData(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        if inputs.len() != outputs.len() {
            return Err(SysIdError::InvalidData(format!(
                "{} input samples but {} output samples",
                inputs.len(),
                outputs.len()
            )));
        }
        let n_u = inputs.first().map_or(0, Vec::len);
        let n_y = outputs.first().map_or(0, Vec::len);
        for (t, (u, y)) in inputs.iter().zip(&outputs).enumerate() {
            if u.len() != n_u || y.len() != n_y {
                return Err(SysIdError::InvalidData(format!(
                    "sample {t} has {} inputs and {} outputs, expected {n_u} and {n_y}",
                    u.len(),
                    y.len()
                )));
            }
            if u.iter().chain(y).any(|v| !v.is_finite()) {
                return Err(SysIdError::InvalidData(format!("sample {t} is not finite")));
            }
        }
        Ok(Self {
            inputs,
            outputs,
            sample_period,
        })
    }

    /// Single-input single-output convenience constructor.
    pub fn siso(inputs: &[f64], outputs: &[f64], sample_period: f64) -> Result<Self, SysIdError> {
        Self::new(
            inputs.iter().map(|&u| vec![u]).collect(),
            outputs.iter().map(|&y| vec![y]).collect(),
            sample_period,
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.first().map_or(0, Vec::len)
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    /// Parses the `t,u1..u_nu,y1..y_ny` CSV layout. The sample period is taken
    /// from the first two time stamps and must be uniform.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SysIdError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| csv_error(&e, "header"))?
            .clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.first() != Some(&"t") {
            return Err(SysIdError::Csv {
                line: 1,
                message: "first column must be `t`".into(),
            });
        }
        let mut n_u = 0;
        let mut n_y = 0;
        for (i, name) in cols.iter().enumerate().skip(1) {
            if n_y == 0 && *name == format!("u{}", n_u + 1) {
                n_u += 1;
            } else if *name == format!("y{}", n_y + 1) {
                n_y += 1;
            } else {
                return Err(SysIdError::Csv {
                    line: 1,
                    message: format!("unexpected column {} `{name}`", i + 1),
                });
            }
        }
        if n_u == 0 || n_y == 0 {
            return Err(SysIdError::Csv {
                line: 1,
                message: "need at least one u and one y column".into(),
            });
        }
        let mut times = Vec::new();
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(&e, "row"))?;
            let line = rec.position().map_or(0, |p| p.line());
            let mut values = Vec::with_capacity(rec.len());
            for (i, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| SysIdError::Csv {
                    line,
                    message: format!("column `{}` has non-numeric value `{field}`", cols[i]),
                })?;
                values.push(v);
            }
            times.push(values[0]);
            inputs.push(values[1..=n_u].to_vec());
            outputs.push(values[n_u + 1..].to_vec());
        }
        if times.len() < 2 {
            return Err(SysIdError::Csv {
                line: 2,
                message: "need at least two samples".into(),
            });
        }
        let dt = times[1] - times[0];
        for (k, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.abs().max(1e-12) {
                return Err(SysIdError::Csv {
                    line: k as u64 + 3,
                    message: "time stamps are not uniformly spaced".into(),
                });
            }
        }
        Self::new(inputs, outputs, dt)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SysIdError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.input_dim()).map(|i| format!("u{i}")));
        header.extend((1..=self.output_dim()).map(|i| format!("y{i}")));
        w.write_record(&header).map_err(|e| csv_error(&e, "write"))?;
        for (k, (u, y)) in self.inputs.iter().zip(&self.outputs).enumerate() {
            let mut row = vec![format!("{}", k as f64 * self.sample_period)];
            row.extend(u.iter().chain(y).map(|v| format!("{v:?}")));
            w.write_record(&row).map_err(|e| csv_error(&e, "write"))?;
        }
        w.flush().map_err(|e| SysIdError::Io(e.to_string()))?;
        Ok(())
    }
}

fn csv_error(e: &csv::Error, ctx: &str) -> SysIdError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("row has {len} fields, expected {expected_len}"),
        _ => format!("{ctx}: {e}"),
    };
    SysIdError::Csv { line, message }
}
