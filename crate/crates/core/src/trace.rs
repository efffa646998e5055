//! Per-step optimisation logs and their CSV form.
//!
//! The CSV columns are fixed: `step, loss, grad_norm, full_pass_equivalent,
//! wall_clock_s, recombinations`. Floats are written in Rust's shortest
//! round-trip form, so parsing an emitted file gives back the same values.

use std::io::{Read, Write};
use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 6] = [
    "step",
    "loss",
    "grad_norm",
    "full_pass_equivalent",
    "wall_clock_s",
    "recombinations",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    /// Parameter snapshot. Not part of the CSV form.
    #[serde(skip)]
    pub theta: DVector<f64>,
    pub loss: f64,
    /// `NaN` when the full gradient was not computed at this step.
    pub grad_norm: f64,
    pub full_pass_equivalent: f64,
    pub wall_clock: f64,
    pub recombinations: usize,
}

/// One run of reduced-measure steps following a recombination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedPhase {
    /// Step index of the anchor the measure was built at.
    pub anchor_step: usize,
    /// Coordinates the phase moved (all of them for plain CaGD).
    pub coords: Vec<usize>,
    /// Atoms in the reduced measure.
    pub support: usize,
    /// Control statistic after each attempted step, including a rejected last one.
    pub deltas: Vec<f64>,
    /// Steps kept after the rollback.
    pub retained: usize,
    /// The phase ran into the per-recombination step cap.
    pub capped: bool,
    /// The phase was cut short by the global step limit.
    pub truncated: bool,
}

impl ReducedPhase {
    /// Attempted steps, i.e. `τ_{k+1} − τ_k` counted up to the first
    /// violation of the control rule.
    pub fn length(&self) -> usize {
        self.deltas.len()
    }

    /// Checks the control-statistic discipline: the retained Δ values start
    /// at or below zero and decrease strictly, and the phase length lies in
    /// `[2, it_max_ca]` unless the phase was truncated.
    pub fn disciplined(&self, it_max_ca: usize) -> std::result::Result<(), String> {
        let kept = &self.deltas[..self.retained.min(self.deltas.len())];
        if let Some(first) = kept.first() {
            if *first > 0.0 {
                return Err(format!("phase at step {} starts with Δ = {first:e}", self.anchor_step));
            }
        }
        if let Some(w) = kept.windows(2).find(|w| !(w[1] < w[0])) {
            return Err(format!(
                "phase at step {}: Δ went {:e} -> {:e}",
                self.anchor_step, w[0], w[1]
            ));
        }
        if !self.truncated && (self.length() < 2 || self.length() > it_max_ca) {
            return Err(format!(
                "phase at step {} has length {} outside [2, {it_max_ca}]",
                self.anchor_step,
                self.length()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// Step indices at which the measure was recombined.
    pub tau_events: Vec<usize>,
    pub phases: Vec<ReducedPhase>,
    /// Anchor steps taken on the full gradient without recombining, because
    /// the first step did not lower the control statistic.
    #[serde(default)]
    pub plain_steps: usize,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_theta(&self) -> Option<&DVector<f64>> {
        self.records.last().map(|r| &r.theta)
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn full_passes(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.full_pass_equivalent)
    }

    pub fn recombinations(&self) -> usize {
        self.records.last().map_or(0, |r| r.recombinations)
    }

    /// First record whose loss is at or below `target`.
    pub fn first_reaching(&self, target: f64) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.loss <= target)
    }

    /// Lowest recorded loss among records within a full-pass budget.
    pub fn best_loss_within(&self, budget: f64) -> f64 {
        self.records
            .iter()
            .filter(|r| r.full_pass_equivalent <= budget && r.loss.is_finite())
            .map(|r| r.loss)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.step.to_string(),
                r.loss.to_string(),
                r.grad_norm.to_string(),
                r.full_pass_equivalent.to_string(),
                r.wall_clock.to_string(),
                r.recombinations.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trace csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Parses the CSV form. Parameter snapshots come back empty.
    pub fn read_csv<R: Read>(input: R) -> Result<Trace> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
            return Err(Error::InvalidConfig(format!(
                "trace header {:?} does not match {:?}",
                headers.iter().collect::<Vec<_>>(),
                CSV_COLUMNS
            )));
        }
        let mut records = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = |i: usize| -> Result<&str> {
                rec.get(i).ok_or_else(|| Error::Parse {
                    path: "<trace csv>".into(),
                    row: row + 1,
                    column: CSV_COLUMNS[i].into(),
                    message: "missing field".into(),
                })
            };
            let num = |i: usize| -> Result<f64> {
                field(i)?.parse::<f64>().map_err(|e| Error::Parse {
                    path: "<trace csv>".into(),
                    row: row + 1,
                    column: CSV_COLUMNS[i].into(),
                    message: e.to_string(),
                })
            };
            let int = |i: usize| -> Result<usize> {
                field(i)?.parse::<usize>().map_err(|e| Error::Parse {
                    path: "<trace csv>".into(),
                    row: row + 1,
                    column: CSV_COLUMNS[i].into(),
                    message: e.to_string(),
                })
            };
            records.push(TraceRecord {
                step: int(0)?,
                theta: DVector::zeros(0),
                loss: num(1)?,
                grad_norm: num(2)?,
                full_pass_equivalent: num(3)?,
                wall_clock: num(4)?,
                recombinations: int(5)?,
            });
        }
        Ok(Trace {
            records,
            ..Trace::default()
        })
    }
}

/// Accumulates wall time only while running, so monitoring work can be
/// excluded from reported timings.
#[derive(Debug)]
pub(crate) struct Stopwatch {
    elapsed: Duration,
    started: Option<Instant>,
}

impl Stopwatch {
    pub(crate) fn started() -> Self {
        Self {
            elapsed: Duration::ZERO,
            started: Some(Instant::now()),
        }
    }

    pub(crate) fn pause(&mut self) {
        if let Some(t) = self.started.take() {
            self.elapsed += t.elapsed();
        }
    }

    pub(crate) fn resume(&mut self) {
        if self.started.is_none() {
            self.started = Some(Instant::now());
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        let running = self.started.map_or(Duration::ZERO, |t| t.elapsed());
        (self.elapsed + running).as_secs_f64()
    }
}
