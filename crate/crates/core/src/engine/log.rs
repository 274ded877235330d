use std::fs::File;
use std::path::Path;

use crate::error::Result;
use crate::scalar::Real;

/// One particle at one logged step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord<F> {
    pub t: usize,
    pub particle: usize,
    /// Slot at the previous resampling event this particle was copied from.
    pub ancestor: Option<usize>,
    /// Aggregated raw reward `r(x̂₀|t)` (before the guidance scale).
    pub reward: F,
    /// Applied `log G_t`; `None` on logging-only steps.
    pub log_potential: Option<F>,
    /// Normalised weight at this step (uniform on logging-only steps).
    pub weight: F,
    pub tokens: Option<String>,
    pub snapshot: Option<String>,
}

/// One resampling event.
#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord<F> {
    pub t: usize,
    pub ess: F,
    pub entropy: F,
    /// Offspring count of each pre-resampling slot.
    pub multiplicities: Vec<usize>,
}

/// Receives log rows as the run produces them.
pub trait LogSink<F> {
    fn record_steps(&mut self, rows: &[StepRecord<F>]) -> Result<()>;
    fn record_event(&mut self, event: &EventRecord<F>) -> Result<()>;
}

/// Discards everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullSink;

impl<F> LogSink<F> for NullSink {
    fn record_steps(&mut self, _: &[StepRecord<F>]) -> Result<()> {
        Ok(())
    }

    fn record_event(&mut self, _: &EventRecord<F>) -> Result<()> {
        Ok(())
    }
}

/// In-memory log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog<F> {
    pub steps: Vec<StepRecord<F>>,
    pub events: Vec<EventRecord<F>>,
}

impl<F> Default for TrajectoryLog<F> {
    fn default() -> Self {
        Self {
            steps: Vec::new(),
            events: Vec::new(),
        }
    }
}

impl<F: Real> TrajectoryLog<F> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Distinct logged steps, descending.
    pub fn logged_steps(&self) -> Vec<usize> {
        let mut ts: Vec<usize> = self.steps.iter().map(|r| r.t).collect();
        ts.dedup();
        ts
    }

    pub fn rows_at(&self, t: usize) -> impl Iterator<Item = &StepRecord<F>> {
        self.steps.iter().filter(move |r| r.t == t)
    }
}

impl<F: Clone> LogSink<F> for TrajectoryLog<F> {
    fn record_steps(&mut self, rows: &[StepRecord<F>]) -> Result<()> {
        self.steps.extend_from_slice(rows);
        Ok(())
    }

    fn record_event(&mut self, event: &EventRecord<F>) -> Result<()> {
        self.events.push(event.clone());
        Ok(())
    }
}

/// Forwards to two sinks.
pub struct Tee<'a, A: ?Sized, B: ?Sized>(pub &'a mut A, pub &'a mut B);

impl<F, A: LogSink<F> + ?Sized, B: LogSink<F> + ?Sized> LogSink<F> for Tee<'_, A, B> {
    fn record_steps(&mut self, rows: &[StepRecord<F>]) -> Result<()> {
        self.0.record_steps(rows)?;
        self.1.record_steps(rows)
    }

    fn record_event(&mut self, event: &EventRecord<F>) -> Result<()> {
        self.0.record_event(event)?;
        self.1.record_event(event)
    }
}

pub const TRAJECTORY_HEADER: [&str; 8] = [
    "t",
    "particle",
    "reward",
    "weight",
    "ancestor",
    "log_potential",
    "tokens",
    "snapshot",
];
pub const EVENTS_HEADER: [&str; 4] = ["t", "ess", "entropy", "multiplicities"];

/// Streams `trajectory.csv` and `events.csv`, flushing after every step.
pub struct CsvLogSink {
    trajectory: csv::Writer<File>,
    events: csv::Writer<File>,
}

impl CsvLogSink {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut trajectory = csv::Writer::from_path(dir.join("trajectory.csv"))?;
        trajectory.write_record(TRAJECTORY_HEADER)?;
        trajectory.flush()?;
        let mut events = csv::Writer::from_path(dir.join("events.csv"))?;
        events.write_record(EVENTS_HEADER)?;
        events.flush()?;
        Ok(Self { trajectory, events })
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// `slot:count` pairs for slots that left offspring, `;`-separated.
pub fn format_multiplicities(m: &[usize]) -> String {
    m.iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, c)| format!("{i}:{c}"))
        .collect::<Vec<_>>()
        .join(";")
}

impl<F: Real> LogSink<F> for CsvLogSink {
    fn record_steps(&mut self, rows: &[StepRecord<F>]) -> Result<()> {
        for r in rows {
            self.trajectory.write_record([
                r.t.to_string(),
                r.particle.to_string(),
                r.reward.to_string(),
                r.weight.to_string(),
                opt(&r.ancestor),
                opt(&r.log_potential),
                r.tokens.clone().unwrap_or_default(),
                r.snapshot.clone().unwrap_or_default(),
            ])?;
        }
        self.trajectory.flush()?;
        Ok(())
    }

    fn record_event(&mut self, e: &EventRecord<F>) -> Result<()> {
        self.events.write_record([
            e.t.to_string(),
            e.ess.to_string(),
            e.entropy.to_string(),
            format_multiplicities(&e.multiplicities),
        ])?;
        self.events.flush()?;
        Ok(())
    }
}
