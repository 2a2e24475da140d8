//! Piecewise expressions over exponential orders.

use std::ops::{Add, Mul, Sub};

/// Slack used when testing region membership on grid points that land
/// exactly on a boundary.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    /// `(x)^+`.
    Pos(Box<Expr>),
}

pub fn c(v: f64) -> Expr {
    Expr::Const(v)
}

pub fn var(i: usize) -> Expr {
    Expr::Var(i)
}

/// `1 - e`.
pub fn one_minus(e: Expr) -> Expr {
    c(1.0) - e
}

impl Expr {
    pub fn pos(self) -> Expr {
        Expr::Pos(Box::new(self))
    }

    pub fn min(self, o: Expr) -> Expr {
        Expr::Min(Box::new(self), Box::new(o))
    }

    pub fn max(self, o: Expr) -> Expr {
        Expr::Max(Box::new(self), Box::new(o))
    }

    pub fn div(self, o: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(o))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Min(a, b) => a.eval(x).min(b.eval(x)),
            Expr::Max(a, b) => a.eval(x).max(b.eval(x)),
            Expr::Pos(a) => a.eval(x).max(0.0),
        }
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(i) => out.push(*i),
            Expr::Pos(a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Min(a, b) | Expr::Max(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, o: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(o))
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, o: Expr) -> Expr {
        self + c(-1.0) * o
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, o: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(o))
    }
}

impl Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, o: Expr) -> Expr {
        c(self) * o
    }
}

/// Membership test built from inequalities.
#[derive(Debug, Clone, PartialEq)]
pub enum Pred {
    /// `lhs <= rhs`.
    Le(Expr, Expr),
    All(Vec<Pred>),
    Any(Vec<Pred>),
}

impl Pred {
    pub fn le(lhs: Expr, rhs: Expr) -> Pred {
        Pred::Le(lhs, rhs)
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        match self {
            Pred::Le(l, r) => l.eval(x) <= r.eval(x) + MEMBERSHIP_SLACK,
            Pred::All(ps) => ps.iter().all(|p| p.holds(x)),
            Pred::Any(ps) => ps.iter().any(|p| p.holds(x)),
        }
    }

    /// Sorted, deduplicated variable indices.
    pub fn vars(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Pred::Le(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Pred::All(ps) | Pred::Any(ps) => ps.iter().for_each(|p| p.collect_vars(out)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_piecewise_forms() {
        // max(1 - v0, (1 - (v1 + v2))/2)^+ at (0.9, 0.2, 0.1)
        let e = one_minus(var(0)).max(0.5 * one_minus(var(1) + var(2))).pos();
        assert!((e.eval(&[0.9, 0.2, 0.1]) - 0.35).abs() < 1e-15);
        assert_eq!(e.eval(&[2.0, 2.0, 2.0]), 0.0);
        let d = c(0.3).div(one_minus(var(0)).max(c(0.3)));
        assert!((d.eval(&[0.4]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn predicate_scope_and_union() {
        let p = Pred::Any(vec![Pred::le(var(3), c(0.1)), Pred::le(var(1) + var(3), c(0.5))]);
        assert_eq!(p.vars(), vec![1, 3]);
        let mut x = [0.0; 4];
        x[3] = 0.3;
        assert!(p.holds(&x));
        x[1] = 0.3;
        assert!(!p.holds(&x));
    }
}
