use serde::{Deserialize, Serialize};

use super::region::{build_region, Listen, ModeProtocol, RegionId, RegionParams};
use super::solver::solve_inf;
use crate::dmt::{dmt_curve, marc_cf_cutset_curves, CurveKey};
use crate::protocol::TimeSplit;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverSettings {
    pub grid_step: f64,
    pub refine_passes: u32,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { grid_step: 0.01, refine_passes: 3 }
    }
}

/// Problems whose answer is a max over a relay time split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeSplitFamily {
    /// Shared relay DDF conditional region with a fixed listening fraction
    /// in `[r, 1]`.
    SrcDdf,
    /// Shared relay CF conditional cutsets, `t` in `(0, 1)`.
    SrcCf,
    /// MARC CF closed-form cutset curves, `t` in `(0, 1)`.
    MarcCf { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSplitResult {
    pub t_star: f64,
    pub d_value: f64,
    /// `(t, d(t))` for every `t` on the grid.
    pub profile: Vec<(f64, f64)>,
}

impl TimeSplitResult {
    /// Grid points whose value is within `tol` of the maximum.
    pub fn maximizers(&self, tol: f64) -> Vec<f64> {
        self.profile.iter().filter(|(_, d)| *d >= self.d_value - tol).map(|(t, _)| *t).collect()
    }
}

fn family_value(family: TimeSplitFamily, r: f64, t: f64, s: SolverSettings) -> Result<f64> {
    match family {
        TimeSplitFamily::SrcDdf => {
            let p = RegionParams::with_protocol(ModeProtocol::Ddf(Listen::Fixed(t)));
            Ok(solve_inf(&build_region(RegionId::SrcDdfCond, r, &p)?, s.grid_step, s.refine_passes)?.d_value)
        }
        TimeSplitFamily::SrcCf => {
            let p = RegionParams { t: Some(t), ..Default::default() };
            Ok(solve_inf(&build_region(RegionId::SrcCfCond, r, &p)?, s.grid_step, s.refine_passes)?.d_value)
        }
        TimeSplitFamily::MarcCf { n } => {
            let (bc, mac) = marc_cf_cutset_curves(n, TimeSplit::new(t)?)?;
            Ok(bc.eval(r)?.min(mac.eval(r)?))
        }
    }
}

/// Maximizes the per-`t` infimum over a grid of `t` with spacing
/// `t_step`. Ties go to the smallest `t`.
pub fn optimize_time_split(
    family: TimeSplitFamily,
    r: f64,
    t_step: f64,
    settings: SolverSettings,
) -> Result<TimeSplitResult> {
    if !(t_step > 0.0 && t_step < 1.0) {
        return Err(Error::Domain(format!("t step must lie in (0, 1), got {t_step}")));
    }
    let (lo, hi_inclusive) = match family {
        TimeSplitFamily::SrcDdf => (r.max(t_step), true),
        _ => (t_step, false),
    };
    let mut ts = Vec::new();
    let mut k = 0;
    loop {
        let t = lo + k as f64 * t_step;
        if t > 1.0 - 1e-12 {
            break;
        }
        ts.push(t);
        k += 1;
    }
    if hi_inclusive {
        ts.push(1.0);
    }
    let mut profile = Vec::with_capacity(ts.len());
    for t in ts {
        profile.push((t, family_value(family, r, t, settings)?));
    }
    let (t_star, d_value) = profile
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, p| if p.1 > best.1 + 1e-12 { p } else { best });
    Ok(TimeSplitResult { t_star, d_value, profile })
}

/// What the solver computes for a catalog check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SolverTarget {
    Region { id: RegionId, params: RegionParams },
    TimeSplit { family: TimeSplitFamily, t_step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogCheck {
    pub label: String,
    pub target: SolverTarget,
    pub key: CurveKey,
}

impl CatalogCheck {
    pub fn region(label: &str, id: RegionId, params: RegionParams, key: &str) -> Self {
        CatalogCheck {
            label: label.into(),
            target: SolverTarget::Region { id, params },
            key: key.parse().expect("static key"),
        }
    }

    pub fn solve(&self, r: f64, settings: SolverSettings) -> Result<f64> {
        match self.target {
            SolverTarget::Region { id, params } => {
                Ok(solve_inf(&build_region(id, r, &params)?, settings.grid_step, settings.refine_passes)?.d_value)
            }
            SolverTarget::TimeSplit { family, t_step } => Ok(optimize_time_split(family, r, t_step, settings)?.d_value),
        }
    }
}

/// The solver problems behind the shared relay, MARC and X-relay NAF, DDF
/// and CF closed forms.
pub fn default_checks() -> Vec<CatalogCheck> {
    let decode = ModeProtocol::Ddf(Listen::UntilDecoded);
    let marc = |protocol| RegionParams { n: 2, protocol, ..Default::default() };
    vec![
        CatalogCheck::region("SRC-NAF-conditional", RegionId::SrcNafCond, RegionParams::default(), "src:2/cond-naf"),
        CatalogCheck::region(
            "SRC-DDF-conditional",
            RegionId::SrcDdfCond,
            RegionParams::with_protocol(decode),
            "src:2/cond-ddf",
        ),
        CatalogCheck {
            label: "SRC-CF-conditional".into(),
            target: SolverTarget::TimeSplit { family: TimeSplitFamily::SrcCf, t_step: 0.1 },
            key: "src:2/cond-cf".parse().expect("static key"),
        },
        CatalogCheck::region("MARC-NAF", RegionId::MarcJoint, marc(ModeProtocol::Naf), "marc:2/naf"),
        CatalogCheck::region("MARC-DDF", RegionId::MarcJoint, marc(decode), "marc:2/ddf"),
        CatalogCheck::region("MARC-CF", RegionId::MarcJoint, marc(ModeProtocol::Cf(0.5)), "marc:2/cf"),
        CatalogCheck::region("X-relay-NAF", RegionId::XRelayJoint, RegionParams::default(), "x-relay/naf"),
        CatalogCheck::region("X-relay-DDF", RegionId::XRelayJoint, RegionParams::with_protocol(decode), "x-relay/ddf"),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub label: String,
    pub key: String,
    pub r: f64,
    pub solver: f64,
    pub catalog: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
    pub max_diff: f64,
    pub tol: f64,
    pub pass: bool,
}

impl VerifyReport {
    /// Largest difference per check label, in check order.
    pub fn per_label(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for row in &self.rows {
            match out.iter_mut().find(|(l, _)| *l == row.label) {
                Some(entry) => entry.1 = entry.1.max(row.diff),
                None => out.push((row.label.clone(), row.diff)),
            }
        }
        out
    }
}

/// Solves every check at every `r` of `r_grid` and compares with the
/// catalog. Multiplexing gains outside a curve's range compare against 0.
pub fn verify_catalog(
    checks: &[CatalogCheck],
    r_grid: &[f64],
    tol: f64,
    settings: SolverSettings,
) -> Result<VerifyReport> {
    let mut rows = Vec::with_capacity(checks.len() * r_grid.len());
    for check in checks {
        let curve = dmt_curve(check.key)?;
        for &r in r_grid {
            let solver = check.solve(r, settings)?;
            let catalog = curve.eval_extended(r)?;
            rows.push(VerifyRow {
                label: check.label.clone(),
                key: check.key.to_string(),
                r,
                solver,
                catalog,
                diff: (solver - catalog).abs(),
            });
        }
    }
    let max_diff = rows.iter().map(|r| r.diff).fold(0.0, f64::max);
    Ok(VerifyReport { rows, max_diff, tol, pass: max_diff <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    const COARSE: SolverSettings = SolverSettings { grid_step: 0.02, refine_passes: 2 };

    #[test]
    fn src_cf_split_is_balanced() {
        for r in [0.2, 0.4] {
            let res = optimize_time_split(TimeSplitFamily::SrcCf, r, 0.05, COARSE).unwrap();
            assert!((res.t_star - 0.5).abs() < 1e-9, "r={r}: t*={}", res.t_star);
            assert!((res.d_value - (1.0 - 1.5 * r)).abs() <= 0.02, "r={r}: {}", res.d_value);
        }
    }

    #[test]
    fn marc_cf_plateau() {
        let res = optimize_time_split(TimeSplitFamily::MarcCf { n: 2 }, 0.5, 0.01, COARSE).unwrap();
        assert!((res.d_value - 1.5).abs() <= 0.03);
        let top = res.maximizers(1e-9);
        assert!(top.iter().all(|&t| t > 1.0 / 3.0 - 0.011 && t < 2.0 / 3.0 + 0.011));
        assert!(top.len() >= 30, "{top:?}");
    }

    #[test]
    fn ddf_split_matches_decoding_time_model() {
        for r in [0.2, 0.4] {
            let res = optimize_time_split(TimeSplitFamily::SrcDdf, r, 0.05, COARSE).unwrap();
            let expect = 1.0 - r / (1.0 - r) * (1.0 - r / 2.0);
            assert!((res.d_value - expect).abs() <= 0.02, "r={r}: {}", res.d_value);
            assert!((res.t_star - r).abs() < 1e-9);
        }
        // Tiny rate: full diversity of the conditioned mode.
        let res = optimize_time_split(TimeSplitFamily::SrcDdf, 0.01, 0.05, COARSE).unwrap();
        assert!(res.d_value > 0.97);
    }

    #[test]
    fn verify_marc_naf_examples() {
        let check = default_checks().into_iter().find(|c| c.label == "MARC-NAF").unwrap();
        let grid: Vec<f64> = (2..=9).map(|k| k as f64 * 0.05).collect();
        let rep = verify_catalog(&[check], &grid, 0.03, COARSE).unwrap();
        assert!(rep.pass, "{:?}", rep.rows);
        let rep = verify_catalog(&default_checks()[..1], &[1.0], 0.03, COARSE).unwrap();
        assert_eq!(rep.rows[0].catalog, 0.0);
        assert!(rep.rows[0].solver.abs() < 1e-9);
    }

    #[test]
    fn solver_is_monotone_in_r() {
        for check in default_checks().iter().filter(|c| matches!(c.target, SolverTarget::Region { .. })) {
            if check.label.starts_with("X-relay") {
                continue;
            }
            let values: Vec<f64> = (0..=10).map(|k| check.solve(k as f64 * 0.1, COARSE).unwrap()).collect();
            for w in values.windows(2) {
                assert!(w[1] <= w[0] + 0.02, "{}: {values:?}", check.label);
            }
        }
    }
}
