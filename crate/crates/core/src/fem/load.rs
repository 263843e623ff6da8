use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic piecewise-linear profile over one cycle.
///
/// Breakpoints are `(phase, value)` pairs with phase in `[0, 1]`, strictly
/// increasing, starting at phase 0 and ending at phase 1 with the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    points: Vec<(f64, f64)>,
}

impl Waveform {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Argument("waveform needs at least two breakpoints".into()));
        }
        let first = points[0];
        let last = points[points.len() - 1];
        if first.0 != 0.0 || last.0 != 1.0 {
            return Err(Error::Argument("waveform phases must span [0, 1]".into()));
        }
        if (first.1 - last.1).abs() > 1e-14 {
            return Err(Error::Argument("waveform must be periodic".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Argument("waveform phases must increase".into()));
        }
        Ok(Waveform { points })
    }

    /// Load-unload-load triangle 0 → +1 → 0 → −1 → 0.
    pub fn fully_reversed() -> Self {
        Waveform {
            points: vec![(0.0, 0.0), (0.25, 1.0), (0.5, 0.0), (0.75, -1.0), (1.0, 0.0)],
        }
    }

    /// One-sided triangle 0 → 1 → 0.
    pub fn pulsating() -> Self {
        Waveform {
            points: vec![(0.0, 0.0), (0.5, 1.0), (1.0, 0.0)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Value at a phase; the phase is wrapped into `[0, 1)`.
    pub fn value(&self, phase: f64) -> f64 {
        let p = phase - phase.floor();
        let idx = self.points.partition_point(|&(ph, _)| ph <= p);
        let (p0, v0) = self.points[idx.saturating_sub(1)];
        let (p1, v1) = self.points[idx.min(self.points.len() - 1)];
        if p1 == p0 {
            return v0;
        }
        v0 + (v1 - v0) * (p - p0) / (p1 - p0)
    }
}

/// Cyclic loading history.
///
/// Prescribed displacements follow `u_D(t) = u_max·w(t/T_1) + drift·t` (mm);
/// Neumann tractions follow the waveform alone, `f_N(t) = t̄·w(t/T_1)`;
/// body forces are constant in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProgram {
    pub amplitude: f64,
    pub cycle_duration: f64,
    pub cycle_count: usize,
    pub waveform: Waveform,
    pub drift_slope: f64,
    pub body_force: [f64; 2],
}

impl LoadProgram {
    pub fn new(amplitude: f64, cycle_duration: f64, cycle_count: usize) -> Result<Self> {
        let lp = LoadProgram {
            amplitude,
            cycle_duration,
            cycle_count,
            waveform: Waveform::fully_reversed(),
            drift_slope: 0.0,
            body_force: [0.0, 0.0],
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cycle_duration > 0.0 && self.cycle_duration.is_finite()) {
            return Err(Error::Argument("cycle duration must be positive".into()));
        }
        if !self.amplitude.is_finite() || !self.drift_slope.is_finite() {
            return Err(Error::Argument("load amplitude and drift must be finite".into()));
        }
        Ok(())
    }

    /// Adds a linearly increasing average with slope `u_max / t_final`.
    pub fn with_drift_over(mut self, t_final: f64) -> Self {
        self.drift_slope = self.amplitude / t_final;
        self
    }

    pub fn waveform_value(&self, t: f64) -> f64 {
        self.waveform.value(t / self.cycle_duration)
    }

    /// Prescribed displacement amplitude u_D(t).
    pub fn dirichlet_amplitude(&self, t: f64) -> f64 {
        self.amplitude * self.waveform_value(t) + self.drift_slope * t
    }

    /// Periodic part of the load, i.e. `u_D` without the drift term.
    pub fn periodic_part(&self, t: f64) -> f64 {
        self.amplitude * self.waveform_value(t)
    }

    pub fn total_duration(&self) -> f64 {
        self.cycle_duration * self.cycle_count as f64
    }
}
