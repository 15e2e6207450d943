//! Verdicts: per-site margins of an inequality check and their aggregate.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Holds,
    /// Violated only within the quadrature error band.
    Inconclusive,
    Fails,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Holds => "holds",
            Status::Inconclusive => "inconclusive",
            Status::Fails => "fails",
        }
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Holds
        } else {
            Status::Fails
        }
    }

    fn rank(self) -> u8 {
        match self {
            Status::Holds => 0,
            Status::Inconclusive => 1,
            Status::Fails => 2,
        }
    }

    pub fn worst(self, other: Status) -> Status {
        if other.rank() > self.rank() {
            other
        } else {
            self
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    /// Reduced to finitely many exact inequalities.
    Exact,
    /// Checked on randomly drawn test vectors only.
    Sampled,
}

/// Where a margin was evaluated: the test pair `u = e_u`, `v' = e_v` (for
/// kernels, entry `(x, y) = (v, u)`), plus the resolvent parameter or time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Site {
    pub u: usize,
    pub v: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Index of the random draw replacing `e_u` in sampled checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
}

impl Site {
    pub fn pair(u: usize, v: usize) -> Self {
        Self { u, v, lambda: None, t: None, sample: None }
    }

    pub fn at_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn at_time(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    pub fn sampled(mut self, sample: usize) -> Self {
        self.sample = Some(sample);
        self
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sample {
            Some(s) => write!(f, "(sample {s}, v={})", self.v)?,
            None => write!(f, "(u={}, v={})", self.u, self.v)?,
        }
        if let Some(l) = self.lambda {
            write!(f, " lambda={l}")?;
        }
        if let Some(t) = self.t {
            write!(f, " t={t}")?;
        }
        Ok(())
    }
}

/// One evaluated instance of `lhs <= rhs`; `margin = rhs - lhs`, possibly rescaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SiteMargin {
    pub site: Site,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    /// Quadrature error band attached to `rhs` (zero for exact evaluations).
    pub band: f64,
}

impl SiteMargin {
    pub fn new(site: Site, lhs: f64, rhs: f64) -> Self {
        Self { site, lhs, rhs, margin: rhs - lhs, band: 0.0 }
    }

    pub fn scaled(site: Site, lhs: f64, rhs: f64, scale: f64) -> Self {
        Self { site, lhs, rhs, margin: (rhs - lhs) * scale, band: 0.0 }
    }

    pub fn with_band(mut self, band: f64) -> Self {
        self.band = band;
        self
    }

    pub fn status(&self, tolerance: f64) -> Status {
        if self.margin >= -tolerance {
            Status::Holds
        } else if self.margin >= -(tolerance + self.band) {
            Status::Inconclusive
        } else {
            Status::Fails
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub status: Status,
    /// `worst_margin >= -tolerance`.
    pub holds: bool,
    pub exactness: Exactness,
    pub worst_margin: f64,
    pub worst_site: Site,
    pub tolerance: f64,
    pub details: Vec<SiteMargin>,
}

impl Verdict {
    /// Aggregates margins; the worst site is the first one (in the given order)
    /// attaining the minimal margin. `details` must be nonempty.
    pub fn from_details(details: Vec<SiteMargin>, tolerance: f64, exactness: Exactness) -> Self {
        assert!(!details.is_empty(), "a verdict needs at least one site");
        let mut worst = 0;
        let mut status = Status::Holds;
        for (k, d) in details.iter().enumerate() {
            if d.margin < details[worst].margin {
                worst = k;
            }
            status = status.worst(d.status(tolerance));
        }
        let worst_margin = details[worst].margin;
        Self {
            status,
            holds: worst_margin >= -tolerance,
            exactness,
            worst_margin,
            worst_site: details[worst].site,
            tolerance,
            details,
        }
    }

    /// Concatenates the sites of several verdicts under the largest tolerance.
    pub fn combine(parts: Vec<Verdict>) -> Self {
        let tolerance = parts.iter().map(|v| v.tolerance).fold(0.0, f64::max);
        let exactness =
            if parts.iter().all(|v| v.exactness == Exactness::Exact) { Exactness::Exact } else { Exactness::Sampled };
        let details = parts.into_iter().flat_map(|v| v.details).collect();
        Self::from_details(details, tolerance, exactness)
    }

    pub fn sites_with_status(&self, status: Status) -> impl Iterator<Item = &SiteMargin> {
        self.details.iter().filter(move |d| d.status(self.tolerance) == status)
    }
}
