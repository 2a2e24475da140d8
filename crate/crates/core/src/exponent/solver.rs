//! Grid infimum by min-sum variable elimination.
//!
//! Each constraint is a 0/inf factor over the variables it mentions and
//! the objective is a sum of unary terms, so eliminating one variable at a
//! time only ever builds tables over a constraint's neighbourhood. The
//! joint MARC and X-relay regions have at most two shared variables left
//! when a variable is eliminated, which keeps a 0.01 grid cheap.

use rayon::prelude::*;
use serde::Serialize;

use super::expr::Pred;
use super::region::OutageRegion;
use crate::{Error, Result};

/// Box width above each support's lower end. Every weight is +1 and every
/// constraint only sees exponents through `(1 - v)^+` or through sums that
/// saturate below 2, so a larger coordinate never lowers the objective.
pub const BOX_WIDTH: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub d_value: f64,
    pub argmin: Vec<(String, f64)>,
    /// Step of the finest grid searched.
    pub grid_step: f64,
    pub refine_passes: u32,
    /// Some coordinate of the argmin sits on the top of the box.
    pub at_box_edge: bool,
}

impl SolveResult {
    pub fn point(&self) -> Vec<f64> {
        self.argmin.iter().map(|(_, v)| *v).collect()
    }
}

enum FactorKind<'a> {
    Constraint(&'a Pred),
    Table(Vec<f64>),
}

struct Factor<'a> {
    scope: Vec<usize>,
    kind: FactorKind<'a>,
}

struct Elimination {
    var: usize,
    scope: Vec<usize>,
    argmin: Vec<u32>,
}

fn flat_index(scope: &[usize], idx: &[usize], grids: &[Vec<f64>]) -> usize {
    scope.iter().fold(0, |acc, &v| acc * grids[v].len() + idx[v])
}

/// Minimizes the objective over the product grid; returns the value and
/// the grid indices of a minimizer.
fn eliminate_all(region: &OutageRegion, grids: &[Vec<f64>]) -> Option<(f64, Vec<usize>)> {
    let nv = grids.len();
    let mut factors: Vec<Factor> = region
        .constraints
        .iter()
        .map(|p| Factor { scope: p.vars(), kind: FactorKind::Constraint(p) })
        .collect();
    let mut remaining: Vec<usize> = (0..nv).collect();
    let mut trail = Vec::with_capacity(nv);
    let mut constant = 0.0;

    while !remaining.is_empty() {
        // Eliminate the variable whose new table is smallest.
        let scope_of = |x: usize, factors: &[Factor]| {
            let mut s: Vec<usize> = factors
                .iter()
                .filter(|f| f.scope.contains(&x))
                .flat_map(|f| f.scope.iter().copied())
                .filter(|&v| v != x)
                .collect();
            s.sort_unstable();
            s.dedup();
            s
        };
        let (pos, x, scope) = remaining
            .iter()
            .enumerate()
            .map(|(p, &x)| (p, x, scope_of(x, &factors)))
            .min_by_key(|(_, x, s)| (s.iter().map(|&v| grids[v].len()).product::<usize>(), *x))
            .expect("nonempty");
        remaining.remove(pos);

        let (bucket, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.scope.contains(&x));
        factors = rest;
        let var = &region.variables[x];
        let unary: Vec<f64> = grids[x].iter().map(|&g| var.weight * g + var.offset).collect();
        let size: usize = scope.iter().map(|&v| grids[v].len()).product();

        let cells: Vec<(f64, u32)> = (0..size)
            .into_par_iter()
            .map_init(
                || (vec![0.0; nv], vec![0usize; nv]),
                |(vals, idx), cell| {
                    let mut rem = cell;
                    for &v in scope.iter().rev() {
                        let len = grids[v].len();
                        idx[v] = rem % len;
                        vals[v] = grids[v][idx[v]];
                        rem /= len;
                    }
                    let mut best = (f64::INFINITY, 0u32);
                    for (k, &g) in grids[x].iter().enumerate() {
                        idx[x] = k;
                        vals[x] = g;
                        let mut cost = unary[k];
                        for f in &bucket {
                            cost += match &f.kind {
                                FactorKind::Constraint(p) => {
                                    if p.holds(vals) {
                                        0.0
                                    } else {
                                        f64::INFINITY
                                    }
                                }
                                FactorKind::Table(t) => t[flat_index(&f.scope, idx, grids)],
                            };
                            if cost == f64::INFINITY {
                                break;
                            }
                        }
                        if cost < best.0 {
                            best = (cost, k as u32);
                        }
                    }
                    best
                },
            )
            .collect();

        let (table, argmin): (Vec<f64>, Vec<u32>) = cells.into_iter().unzip();
        if scope.is_empty() {
            constant += table[0];
        } else {
            factors.push(Factor { scope: scope.clone(), kind: FactorKind::Table(table) });
        }
        trail.push(Elimination { var: x, scope, argmin });
    }

    if !constant.is_finite() {
        return None;
    }
    let mut idx = vec![0usize; nv];
    for e in trail.iter().rev() {
        idx[e.var] = e.argmin[flat_index(&e.scope, &idx, grids)] as usize;
    }
    Some((constant, idx))
}

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

/// Infimum of the region's objective: a full grid scan at `grid_step`
/// followed by `refine_passes` local scans, each halving the step in a
/// window of two previous steps around the incumbent.
pub fn solve_inf(region: &OutageRegion, grid_step: f64, refine_passes: u32) -> Result<SolveResult> {
    if !(grid_step > 0.0 && grid_step <= 0.02) {
        return Err(Error::Domain(format!("grid step must lie in (0, 0.02], got {grid_step}")));
    }
    let mut grids: Vec<Vec<f64>> = region.variables.iter().map(|v| axis(v.lo, v.lo + BOX_WIDTH, grid_step)).collect();
    let (mut d, idx) = eliminate_all(region, &grids).ok_or_else(|| {
        Error::Infeasible(format!("{} at r = {}: no grid point lies in the outage region", region.id, region.r))
    })?;
    let mut point: Vec<f64> = idx.iter().zip(&grids).map(|(&i, g)| g[i]).collect();
    let at_box_edge = region
        .variables
        .iter()
        .zip(&point)
        .any(|(v, &x)| x >= v.lo + BOX_WIDTH - grid_step / 2.0);

    let mut step = grid_step;
    for _ in 0..refine_passes {
        let half = step / 2.0;
        grids = region
            .variables
            .iter()
            .zip(&point)
            .map(|(v, &x)| {
                let lo = (x - 2.0 * step).max(v.lo);
                let hi = (x + 2.0 * step).min(v.lo + BOX_WIDTH);
                // Keep the incumbent on the grid so a pass never gets worse.
                let below = ((x - lo) / half).round() as usize;
                let above = ((hi - x) / half).round() as usize;
                (0..=below + above).map(|k| x + (k as f64 - below as f64) * half).collect()
            })
            .collect();
        if let Some((val, idx)) = eliminate_all(region, &grids) {
            if val < d {
                d = val;
                point = idx.iter().zip(&grids).map(|(&i, g)| g[i]).collect();
            }
        }
        step = half;
    }

    Ok(SolveResult {
        d_value: d,
        argmin: region.variables.iter().map(|v| v.name.clone()).zip(point).collect(),
        grid_step: step,
        refine_passes,
        at_box_edge,
    })
}

#[cfg(test)]
mod tests {
    use super::super::region::{build_region, Listen, ModeProtocol, RegionId, RegionParams};
    use super::*;

    fn solve(id: RegionId, r: f64, p: &RegionParams) -> SolveResult {
        solve_inf(&build_region(id, r, p).unwrap(), 0.01, 3).unwrap()
    }

    #[test]
    fn src_naf_conditional_examples() {
        let p = RegionParams::default();
        assert!((solve(RegionId::SrcNafCond, 0.25, &p).d_value - 0.5).abs() <= 0.02);
        assert!(solve(RegionId::SrcNafCond, 0.5, &p).d_value.abs() <= 0.02);
    }

    #[test]
    fn argmin_is_feasible_and_interior() {
        let p = RegionParams::default();
        for r in [0.1, 0.3] {
            let reg = build_region(RegionId::SrcNafCond, r, &p).unwrap();
            let s = solve_inf(&reg, 0.01, 3).unwrap();
            assert!(reg.contains(&s.point()));
            assert!((reg.objective(&s.point()) - s.d_value).abs() < 1e-12);
            assert!(!s.at_box_edge);
        }
    }

    #[test]
    fn removing_the_support_shift_gives_plain_naf() {
        let p = RegionParams { support_shift: false, ..Default::default() };
        for r in [0.1, 0.25, 0.4, 0.7] {
            let d = solve(RegionId::SrcNafCond, r, &p).d_value;
            let expect = (1.0 - r) + (1.0f64 - 2.0 * r).max(0.0);
            assert!((d - expect).abs() <= 0.02, "r={r}: {d} vs {expect}");
        }
    }

    #[test]
    fn src_ddf_conditional_with_decoding_time() {
        let p = RegionParams::with_protocol(ModeProtocol::Ddf(Listen::UntilDecoded));
        let d = solve(RegionId::SrcDdfCond, 0.4, &p).d_value;
        assert!((d - 0.466_666_7).abs() <= 0.02, "{d}");
        let d = solve(RegionId::SrcDdfCond, 0.55, &p).d_value;
        assert!((d - (0.45 / 0.55 - 0.725)).abs() <= 0.02, "{d}");
    }

    #[test]
    fn single_mode_regions() {
        for r in [0.2, 0.6] {
            let naf = solve(RegionId::NafMode, r, &RegionParams::default()).d_value;
            assert!((naf - ((1.0 - r) + (1.0f64 - 2.0 * r).max(0.0))).abs() <= 0.02);
            let p = RegionParams::with_protocol(ModeProtocol::Ddf(Listen::UntilDecoded));
            let ddf = solve(RegionId::DdfMode, r, &p).d_value;
            let expect = if r <= 0.5 { 2.0 * (1.0 - r) } else { (1.0 - r) / r };
            assert!((ddf - expect).abs() <= 0.02, "r={r}: {ddf} vs {expect}");
        }
    }

    #[test]
    fn marc_joint_ddf_example() {
        let p = RegionParams::with_protocol(ModeProtocol::Ddf(Listen::UntilDecoded));
        let d = solve(RegionId::MarcJoint, 0.5, &p).d_value;
        assert!((d - 1.5).abs() <= 0.03, "{d}");
    }

    #[test]
    fn joint_region_decomposes_when_the_shared_link_is_free() {
        // For r >= 1/2 the NAF relay-destination order costs nothing.
        for n in [1usize, 2, 3] {
            let p = RegionParams { n, ..Default::default() };
            let joint = solve(RegionId::MarcJoint, 0.6, &p).d_value;
            let single = solve(RegionId::NafMode, 0.6, &p).d_value;
            assert!((joint - n as f64 * single).abs() <= 0.02 * n as f64, "n={n}: {joint} vs {single}");
        }
    }

    #[test]
    fn refinement_never_hurts() {
        let p = RegionParams::default();
        for r in [0.15, 0.35] {
            let reg = build_region(RegionId::SrcNafCond, r, &p).unwrap();
            let coarse = solve_inf(&reg, 0.02, 0).unwrap().d_value;
            let fine = solve_inf(&reg, 0.02, 3).unwrap().d_value;
            assert!(fine <= coarse + 1e-12);
            assert!(coarse - fine <= 0.02 + 1e-12);
        }
    }

    #[test]
    fn bad_step_is_rejected() {
        let reg = build_region(RegionId::NafMode, 0.2, &RegionParams::default()).unwrap();
        assert!(solve_inf(&reg, 0.05, 0).is_err());
    }
}
