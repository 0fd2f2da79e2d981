use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "step,epoch,class,critic_loss,generator_loss,gradient_penalty,wasserstein_estimate,wall_clock_ms";

/// One row per generator update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    /// 1-based generator update index.
    pub step: u64,
    /// 1-based epoch.
    pub epoch: usize,
    pub class: usize,
    /// Mean critic loss over the turn's critic updates.
    pub critic_loss: f64,
    pub generator_loss: f64,
    /// Mean penalty over the turn's critic updates (zero outside wgan-gp).
    pub gradient_penalty: f64,
    /// Mean of `E[D(x)] - E[D(G(z))]` over the turn's critic updates.
    pub wasserstein_estimate: f64,
    pub wall_clock_ms: f64,
}

impl TelemetryRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3}",
            self.step,
            self.epoch,
            self.class,
            self.critic_loss,
            self.generator_loss,
            self.gradient_penalty,
            self.wasserstein_estimate,
            self.wall_clock_ms
        )
    }

    /// Every field except wall-clock time, which is the only
    /// non-reproducible column.
    pub fn deterministic_eq(&self, other: &Self) -> bool {
        self.step == other.step
            && self.epoch == other.epoch
            && self.class == other.class
            && self.critic_loss.to_bits() == other.critic_loss.to_bits()
            && self.generator_loss.to_bits() == other.generator_loss.to_bits()
            && self.gradient_penalty.to_bits() == other.gradient_penalty.to_bits()
            && self.wasserstein_estimate.to_bits() == other.wasserstein_estimate.to_bits()
    }
}

pub fn write_csv<W: Write>(mut w: W, records: &[TelemetryRecord]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.to_csv_row())?;
    }
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<TelemetryRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::InvalidArgument("telemetry csv header mismatch".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::InvalidArgument(format!("bad telemetry row {line:?}")));
            }
            let num = |i: usize| -> Result<f64> {
                f[i].parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad number {:?} in {line:?}", f[i])))
            };
            Ok(TelemetryRecord {
                step: num(0)? as u64,
                epoch: num(1)? as usize,
                class: num(2)? as usize,
                critic_loss: num(3)?,
                generator_loss: num(4)?,
                gradient_penalty: num(5)?,
                wasserstein_estimate: num(6)?,
                wall_clock_ms: num(7)?,
            })
        })
        .collect()
}

/// Mean Wasserstein estimate of each epoch.
pub fn epoch_means(records: &[TelemetryRecord]) -> Vec<f64> {
    let Some(last) = records.iter().map(|r| r.epoch).max() else {
        return Vec::new();
    };
    (1..=last)
        .map(|e| {
            let v: Vec<f64> = records.iter().filter(|r| r.epoch == e).map(|r| r.wasserstein_estimate).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        })
        .collect()
}

/// Trailing mean over up to `window` values ending at each index.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let s = &values[lo..=i];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let r = TelemetryRecord {
            step: 3,
            epoch: 1,
            class: 2,
            critic_loss: -0.125,
            generator_loss: 1.0 / 3.0,
            gradient_penalty: 0.0,
            wasserstein_estimate: 0.7,
            wall_clock_ms: 12.5,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        let back = parse_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert!(back[0].deterministic_eq(&r));
    }

    #[test]
    fn moving_average_window() {
        assert_eq!(moving_average(&[1.0, 3.0, 5.0], 2), vec![1.0, 2.0, 4.0]);
    }
}
