use std::io::{self, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::convexify::PredictionVector;

/// Iterates of a test-time run. Entry 0 is the initial prediction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub iterates: Vec<PredictionVector>,
    pub losses: Vec<f64>,
    pub wall_times: Vec<Duration>,
    /// Raw outputs of `g` per step (entry 0 mirrors the initial prediction).
    pub proposals: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub(crate) fn push(&mut self, iterate: PredictionVector, loss: f64, elapsed: Duration, proposal: Vec<f64>) {
        self.iterates.push(iterate);
        self.losses.push(loss);
        self.wall_times.push(elapsed);
        self.proposals.push(proposal);
    }

    pub fn last(&self) -> Option<&PredictionVector> {
        self.iterates.last()
    }

    /// Columns `iter, loss, omega_0.., [wall_time_us]`. Timing is optional
    /// because it is the only non-reproducible column.
    pub fn write_csv<W: Write>(&self, mut w: W, with_timing: bool) -> io::Result<()> {
        let d = self.iterates.first().map_or(0, |p| p.dim());
        let mut header = vec!["iter".to_string(), "loss".to_string()];
        header.extend((0..d).map(|i| format!("omega_{i}")));
        if with_timing {
            header.push("wall_time_us".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for (i, (it, loss)) in self.iterates.iter().zip(&self.losses).enumerate() {
            let mut row = vec![i.to_string(), format!("{loss:.16e}")];
            row.extend(it.values().iter().map(|v| format!("{v:.16e}")));
            if with_timing {
                row.push(self.wall_times[i].as_micros().to_string());
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, with_timing).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}
