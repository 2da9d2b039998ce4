//! Dense two-phase simplex with Bland's rule, generic over exact rationals
//! and floating point.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{One, Signed, Zero};

use crate::ratio::Ratio;

pub trait LpNum:
    Clone
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn is_zero_val(&self) -> bool {
        !self.is_pos() && !self.is_neg()
    }
}

impl LpNum for Ratio {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
}

pub const FLOAT_TOL: f64 = 1e-9;

impl LpNum for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_pos(&self) -> bool {
        *self > FLOAT_TOL
    }
    fn is_neg(&self) -> bool {
        *self < -FLOAT_TOL
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

/// `maximize obj·x` subject to sparse rows and `x ≥ 0`.
#[derive(Clone, Debug)]
pub struct Lp<T> {
    pub vars: usize,
    pub obj: Vec<T>,
    pub rows: Vec<(Vec<(usize, T)>, Cmp, T)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpResult<T> {
    Optimal { x: Vec<T>, value: T },
    Infeasible,
    Unbounded,
}

impl<T: LpNum> Lp<T> {
    pub fn new(vars: usize) -> Self {
        Lp {
            vars,
            obj: vec![T::zero(); vars],
            rows: Vec::new(),
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, T)>, cmp: Cmp, rhs: T) {
        self.rows.push((coeffs, cmp, rhs));
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.0.len()).sum()
    }

    pub fn solve(&self) -> LpResult<T> {
        Tableau::build(self).run(self)
    }
}

struct Tableau<T> {
    /// `rows[i]` holds the coefficients followed by the right-hand side.
    rows: Vec<Vec<T>>,
    basis: Vec<usize>,
    cols: usize,
    first_art: usize,
}

impl<T: LpNum> Tableau<T> {
    fn build(lp: &Lp<T>) -> Self {
        let m = lp.rows.len();
        let mut slack = 0;
        let mut art = 0;
        let mut norm: Vec<(Vec<T>, Cmp, T)> = Vec::with_capacity(m);
        for (coeffs, cmp, rhs) in &lp.rows {
            let mut dense = vec![T::zero(); lp.vars];
            for (j, c) in coeffs {
                dense[*j] = dense[*j].clone() + c.clone();
            }
            let (dense, cmp, rhs) = if rhs.is_neg() {
                let flipped = match cmp {
                    Cmp::Le => Cmp::Ge,
                    Cmp::Ge => Cmp::Le,
                    Cmp::Eq => Cmp::Eq,
                };
                (dense.into_iter().map(|v| -v).collect(), flipped, -rhs.clone())
            } else {
                (dense, *cmp, rhs.clone())
            };
            match cmp {
                Cmp::Le => slack += 1,
                Cmp::Ge => {
                    slack += 1;
                    art += 1
                }
                Cmp::Eq => art += 1,
            }
            norm.push((dense, cmp, rhs));
        }
        let first_art = lp.vars + slack;
        let cols = first_art + art;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let (mut s, mut a) = (lp.vars, first_art);
        for (dense, cmp, rhs) in norm {
            let mut row = dense;
            row.resize(cols + 1, T::zero());
            match cmp {
                Cmp::Le => {
                    row[s] = T::one();
                    basis.push(s);
                    s += 1;
                }
                Cmp::Ge => {
                    row[s] = -T::one();
                    s += 1;
                    row[a] = T::one();
                    basis.push(a);
                    a += 1;
                }
                Cmp::Eq => {
                    row[a] = T::one();
                    basis.push(a);
                    a += 1;
                }
            }
            row[cols] = rhs;
            rows.push(row);
        }
        Tableau {
            rows,
            basis,
            cols,
            first_art,
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            if !v.is_zero_val() {
                *v = v.clone() / p.clone();
            }
        }
        let prow = self.rows[r].clone();
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c].clone();
            if f.is_zero_val() {
                continue;
            }
            for (j, pv) in prow.iter().enumerate() {
                if !pv.is_zero_val() {
                    self.rows[i][j] = self.rows[i][j].clone() - f.clone() * pv.clone();
                }
            }
        }
        self.basis[r] = c;
    }

    /// Maximizes `cost·x` over columns `< limit`; `false` when unbounded.
    fn optimize(&mut self, cost: &[T], limit: usize) -> bool {
        loop {
            // reduced cost of column j: cost_j − Σ_i cost_{basis_i} a_ij
            let mut entering = None;
            for j in 0..limit {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j].clone();
                for (i, &b) in self.basis.iter().enumerate() {
                    let a = &self.rows[i][j];
                    if !a.is_zero_val() && !cost[b].is_zero_val() {
                        rc = rc - cost[b].clone() * a.clone();
                    }
                }
                if rc.is_pos() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else { return true };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][c];
                if !a.is_pos() {
                    continue;
                }
                let ratio = self.rows[i][self.cols].clone() / a.clone();
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < *lr || (!(ratio > *lr) && self.basis[i] < self.basis[*li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }

    fn run(mut self, lp: &Lp<T>) -> LpResult<T> {
        if self.cols > self.first_art {
            let mut cost = vec![T::zero(); self.cols];
            for c in cost.iter_mut().skip(self.first_art) {
                *c = -T::one();
            }
            self.optimize(&cost, self.cols);
            let infeasible = self
                .basis
                .iter()
                .enumerate()
                .any(|(i, &b)| b >= self.first_art && self.rows[i][self.cols].is_pos());
            if infeasible {
                return LpResult::Infeasible;
            }
            let mut i = 0;
            while i < self.rows.len() {
                if self.basis[i] >= self.first_art {
                    match (0..self.first_art).find(|&j| !self.rows[i][j].is_zero_val()) {
                        Some(j) => {
                            self.pivot(i, j);
                            i += 1;
                        }
                        None => {
                            self.rows.remove(i);
                            self.basis.remove(i);
                        }
                    }
                } else {
                    i += 1;
                }
            }
        }
        let mut cost = vec![T::zero(); self.cols];
        cost[..lp.vars].clone_from_slice(&lp.obj);
        if !self.optimize(&cost, self.first_art) {
            return LpResult::Unbounded;
        }
        let mut x = vec![T::zero(); lp.vars];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < lp.vars {
                x[b] = self.rows[i][self.cols].clone();
            }
        }
        let mut value = T::zero();
        for (xj, cj) in x.iter().zip(&lp.obj) {
            value = value + xj.clone() * cj.clone();
        }
        LpResult::Optimal { x, value }
    }
}
