//! Piecewise diversity-multiplexing tradeoff curves.
//!
//! A curve is a list of contiguous segments over `[0, r_max]`. Each segment
//! carries a form `c0 + c1 r + c2/r + c3/(1-r)`, which covers every branch
//! the closed-form results need, and segment endpoints are exact
//! [`Breakpoint`]s so values like `2 - sqrt(2)` do not drift.

mod antenna;
mod catalog;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use antenna::{antenna_selection_dmt, marc_cf_cutset_curves};
pub use catalog::{catalog_keys, dmt_curve, CurveInfo, CurveKey, Variant};

const R_SLACK: f64 = 1e-12;

/// Exact segment endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Breakpoint {
    /// `num / den`.
    Rational { num: i64, den: i64 },
    /// `a + b sqrt(c)`.
    Surd { a: i64, b: i64, c: i64 },
    /// Parameter-dependent point, e.g. a listening fraction.
    Numeric(f64),
}

impl Breakpoint {
    pub const ZERO: Breakpoint = Breakpoint::Rational { num: 0, den: 1 };
    pub const ONE: Breakpoint = Breakpoint::Rational { num: 1, den: 1 };

    pub fn rational(num: i64, den: i64) -> Self {
        Breakpoint::Rational { num, den }
    }

    pub fn int(v: i64) -> Self {
        Breakpoint::Rational { num: v, den: 1 }
    }

    pub fn value(self) -> f64 {
        match self {
            Breakpoint::Rational { num, den } => num as f64 / den as f64,
            Breakpoint::Surd { a, b, c } => a as f64 + b as f64 * (c as f64).sqrt(),
            Breakpoint::Numeric(v) => v,
        }
    }
}

impl fmt::Display for Breakpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Breakpoint::Rational { num, den: 1 } => write!(f, "{num}"),
            Breakpoint::Rational { num, den } => write!(f, "{num}/{den}"),
            Breakpoint::Surd { a, b, c } => {
                let sign = if b < 0 { '-' } else { '+' };
                match b.abs() {
                    1 => write!(f, "{a}{sign}sqrt({c})"),
                    m => write!(f, "{a}{sign}{m}sqrt({c})"),
                }
            }
            Breakpoint::Numeric(v) => write!(f, "{v}"),
        }
    }
}

/// `c0 + c1 r + c2 / r + c3 / (1 - r)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Form {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Form {
    pub const ZERO: Form = Form { c0: 0.0, c1: 0.0, c2: 0.0, c3: 0.0 };

    pub fn linear(c0: f64, c1: f64) -> Self {
        Form { c0, c1, ..Form::ZERO }
    }

    /// `k (1 - r/z)`.
    pub fn ramp(k: f64, z: f64) -> Self {
        Form::linear(k, -k / z)
    }

    /// `k (1 - r) / r`.
    pub fn ratio(k: f64) -> Self {
        Form { c0: -k, c2: k, ..Form::ZERO }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let mut v = self.c0 + self.c1 * r;
        if self.c2 != 0.0 {
            v += self.c2 / r;
        }
        if self.c3 != 0.0 {
            v += self.c3 / (1.0 - r);
        }
        v
    }
}

impl std::ops::Add for Form {
    type Output = Form;
    fn add(self, o: Form) -> Form {
        Form { c0: self.c0 + o.c0, c1: self.c1 + o.c1, c2: self.c2 + o.c2, c3: self.c3 + o.c3 }
    }
}

impl std::ops::Mul<Form> for f64 {
    type Output = Form;
    fn mul(self, o: Form) -> Form {
        Form { c0: self * o.c0, c1: self * o.c1, c2: self * o.c2, c3: self * o.c3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lo: Breakpoint,
    pub hi: Breakpoint,
    pub form: Form,
}

/// Piecewise DMT curve `d(r)` on `[0, r_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmtCurve {
    segments: Vec<Segment>,
}

impl DmtCurve {
    /// Builds a curve from consecutive branches, each given by its right
    /// endpoint; the first starts at 0.
    pub fn piecewise(branches: Vec<(Breakpoint, Form)>) -> Self {
        assert!(!branches.is_empty(), "curve needs a branch");
        let mut lo = Breakpoint::ZERO;
        let mut segments = Vec::with_capacity(branches.len());
        for (hi, form) in branches {
            assert!(hi.value() > lo.value(), "branch endpoints must increase");
            segments.push(Segment { lo, hi, form });
            lo = hi;
        }
        DmtCurve { segments }
    }

    /// `sum_k c_k (1 - r/z_k)^+` on `[0, r_max]`.
    pub fn ramps(terms: &[(f64, Breakpoint)], r_max: Breakpoint) -> Self {
        let mut cuts: Vec<Breakpoint> = terms
            .iter()
            .map(|t| t.1)
            .filter(|z| z.value() < r_max.value() - R_SLACK)
            .collect();
        cuts.push(r_max);
        sort_dedup(&mut cuts);
        let branches = cuts
            .into_iter()
            .map(|hi| {
                let form = terms
                    .iter()
                    .filter(|(_, z)| z.value() >= hi.value() - R_SLACK)
                    .fold(Form::ZERO, |acc, &(k, z)| acc + Form::ramp(k, z.value()));
                (hi, form)
            })
            .collect();
        DmtCurve::piecewise(branches)
    }

    /// Extends the curve with zero up to `r_max`.
    pub fn padded(mut self, r_max: Breakpoint) -> Self {
        let end = self.r_max_point();
        if r_max.value() > end.value() + R_SLACK {
            self.segments.push(Segment { lo: end, hi: r_max, form: Form::ZERO });
        }
        self
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn r_max_point(&self) -> Breakpoint {
        self.segments.last().expect("nonempty").hi
    }

    pub fn r_max(&self) -> f64 {
        self.r_max_point().value()
    }

    /// Interior breakpoints.
    pub fn breakpoints(&self) -> Vec<Breakpoint> {
        self.segments[..self.segments.len() - 1].iter().map(|s| s.hi).collect()
    }

    /// `d(r)`, clamped at 0; `r` must lie in `[0, r_max]`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= -R_SLACK && r <= self.r_max() + R_SLACK) {
            return Err(Error::Domain(format!("r = {r} outside [0, {}]", self.r_max())));
        }
        let r = r.clamp(0.0, self.r_max());
        let idx = self.segments.partition_point(|s| s.hi.value() < r).min(self.segments.len() - 1);
        Ok(self.segments[idx].form.eval(r).max(0.0))
    }

    /// Like [`DmtCurve::eval`] but zero beyond `r_max`.
    pub fn eval_extended(&self, r: f64) -> Result<f64> {
        if r > self.r_max() {
            return Ok(0.0);
        }
        self.eval(r)
    }

    /// Value just right of breakpoint `i` (the left value is `eval`).
    pub fn right_limit(&self, i: usize) -> f64 {
        let s = &self.segments[i + 1];
        s.form.eval(s.lo.value()).max(0.0)
    }

    /// Largest jump across an interior breakpoint.
    pub fn max_jump(&self) -> f64 {
        (0..self.segments.len() - 1)
            .map(|i| {
                let left = self.segments[i].form.eval(self.segments[i].hi.value()).max(0.0);
                (left - self.right_limit(i)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Samples on `0, step, 2 step, ...` up to and including `r_max`.
    pub fn sample(&self, step: f64) -> Vec<(f64, f64)> {
        grid(self.r_max(), step)
            .into_iter()
            .map(|r| (r, self.eval(r).expect("grid inside range")))
            .collect()
    }

    /// Whether the curve never increases on a grid of the given step.
    pub fn is_nonincreasing(&self, step: f64) -> bool {
        let s = self.sample(step);
        s.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12)
    }

    /// Segment-wise sum over a common range.
    pub fn add(&self, other: &DmtCurve) -> Result<DmtCurve> {
        if (self.r_max() - other.r_max()).abs() > R_SLACK {
            return Err(Error::Domain(format!(
                "cannot add curves on [0, {}] and [0, {}]",
                self.r_max(),
                other.r_max()
            )));
        }
        let mut cuts: Vec<Breakpoint> = self.segments.iter().chain(&other.segments).map(|s| s.hi).collect();
        sort_dedup(&mut cuts);
        let form_at = |c: &DmtCurve, hi: f64| {
            let idx = c.segments.partition_point(|s| s.hi.value() < hi - R_SLACK);
            c.segments[idx.min(c.segments.len() - 1)].form
        };
        Ok(DmtCurve::piecewise(
            cuts.into_iter()
                .map(|hi| (hi, form_at(self, hi.value()) + form_at(other, hi.value())))
                .collect(),
        ))
    }
}

/// `0, step, ...` up to `end` inclusive, with the last point snapped to
/// `end`.
pub fn grid(end: f64, step: f64) -> Vec<f64> {
    let n = (end / step).round() as usize;
    let mut v: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(end)).collect();
    if let Some(last) = v.last_mut() {
        *last = end;
    }
    v
}

fn sort_dedup(v: &mut Vec<Breakpoint>) {
    v.sort_by(|a, b| a.value().total_cmp(&b.value()));
    v.dedup_by(|a, b| (a.value() - b.value()).abs() <= R_SLACK);
}
