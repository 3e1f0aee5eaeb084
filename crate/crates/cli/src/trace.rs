//! Per-iteration run traces.

use serde::{Deserialize, Serialize};

use crate::{CliResult, Failure};

pub const TRACE_HEADER: &[&str] = &[
    "iteration",
    "J",
    "J_latent",
    "L_R",
    "L_P",
    "SIR",
    "V_gap",
    "slack_avd",
    "slack_value",
    "slack_spi",
    "audit",
];

/// One row per policy; quantities that do not apply to a loop are blank.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "J_latent")]
    pub j_latent: Option<f64>,
    #[serde(rename = "L_R")]
    pub l_r: Option<f64>,
    #[serde(rename = "L_P")]
    pub l_p: Option<f64>,
    #[serde(rename = "SIR")]
    pub sir: Option<f64>,
    #[serde(rename = "V_gap")]
    pub v_gap: Option<f64>,
    pub slack_avd: Option<f64>,
    pub slack_value: Option<f64>,
    pub slack_spi: Option<f64>,
    pub audit: String,
}

impl TraceRow {
    fn values(&self) -> [Option<f64>; 9] {
        [
            Some(self.j),
            self.j_latent,
            self.l_r,
            self.l_p,
            self.sir,
            self.v_gap,
            self.slack_avd,
            self.slack_value,
            self.slack_spi,
        ]
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn push(&mut self, row: TraceRow) -> CliResult<()> {
        if let Some(last) = self.rows.last() {
            if row.iteration <= last.iteration {
                return Err(Failure::Config(format!(
                    "trace row {} after {}",
                    row.iteration, last.iteration
                )));
            }
        }
        if row.values().iter().flatten().any(|x| x.is_nan()) {
            return Err(Failure::Config(format!(
                "NaN in trace row {}",
                row.iteration
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(TRACE_HEADER)?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        Ok(
            String::from_utf8(w.into_inner().map_err(|e| Failure::Config(e.to_string()))?)
                .expect("csv is utf-8"),
        )
    }
}

pub const BOUNDS_HEADER: &[&str] = &[
    "instance",
    "theorem",
    "lhs",
    "rhs",
    "slack",
    "holds",
    "vacuous",
    "inputs_digest",
];

/// One verifier verdict on one suite instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub instance: usize,
    pub theorem: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
    pub vacuous: bool,
    pub inputs_digest: String,
}
