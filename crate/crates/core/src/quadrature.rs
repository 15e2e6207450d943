//! Composite Simpson quadrature with a one-step Richardson error estimate.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult {
    pub value: f64,
    /// `|S_N - S_{N/2}| / 15`, the Richardson estimate for the error of `S_N`.
    pub error_estimate: f64,
}

/// Composite Simpson weights on `panels + 1` equispaced nodes, together with
/// the weights of the rule on every other node (half as many panels).
#[derive(Debug, Clone)]
pub struct SimpsonRule {
    panels: usize,
    h: f64,
}

impl SimpsonRule {
    /// `panels` must be even and at least 2; a multiple of 4 makes the halved rule
    /// a Simpson rule as well, otherwise the halved estimate degrades to the
    /// trapezoid rule.
    pub fn new(a: f64, b: f64, panels: usize) -> Result<Self> {
        if panels < 2 || !panels.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("Simpson panel count must be even and >= 2, got {panels}")));
        }
        Ok(Self { panels, h: (b - a) / panels as f64 })
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn weight(&self, k: usize) -> f64 {
        simpson_weight(k, self.panels) * self.h / 3.0
    }

    /// Weight of node `k` in the coarse rule (zero on odd nodes).
    pub fn coarse_weight(&self, k: usize) -> f64 {
        if !k.is_multiple_of(2) {
            return 0.0;
        }
        let coarse = self.panels / 2;
        let h = 2.0 * self.h;
        if coarse.is_multiple_of(2) {
            simpson_weight(k / 2, coarse) * h / 3.0
        } else if k == 0 || k == self.panels {
            h / 2.0
        } else {
            h
        }
    }

    /// Both estimates from samples `f_0, ..., f_N`.
    pub fn integrate_samples(&self, samples: &[f64]) -> QuadResult {
        assert_eq!(samples.len(), self.panels + 1);
        // integer Simpson weights first, scaled once at the end
        let mut fine = 0.0;
        let mut coarse = 0.0;
        for (k, &f) in samples.iter().enumerate() {
            fine += simpson_weight(k, self.panels) * f;
            coarse += self.coarse_weight(k) * f;
        }
        let fine = fine * (self.h * self.panels as f64) / (3 * self.panels) as f64;
        QuadResult { value: fine, error_estimate: (fine - coarse).abs() / 15.0 }
    }
}

fn simpson_weight(k: usize, panels: usize) -> f64 {
    if k == 0 || k == panels {
        1.0
    } else if k % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// `int_a^b f(s) ds` by composite Simpson.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> Result<QuadResult> {
    let rule = SimpsonRule::new(a, b, panels)?;
    let samples: Vec<f64> = (0..=panels).map(|k| f(a + k as f64 * rule.step())).collect();
    Ok(rule.integrate_samples(&samples))
}
