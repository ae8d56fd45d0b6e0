//! Grid-partitioned F-beta passed through a cubic regulator.

use num_rational::BigRational;
use num_traits::{One, Zero};

use super::confusion::{fbeta, Confusion, METRIC_EPSILON};
use super::real::Real;
use crate::error::{Error, Result};
use crate::mask::SegMask;

/// Regulator and grid parameters with the derived cubic coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct MgridConfig<R> {
    pub beta: R,
    pub cell_h: usize,
    pub cell_w: usize,
    pub f_m: R,
    pub c_m: R,
    /// `(1 − c_m) / (1 − f_m)³`
    pub s_coef: R,
    /// `(f_m / (1 − f_m))³`
    pub t: R,
    /// Limit of the regulator as `f → 0⁺`: `c_m(1 + t) − t`.
    pub b: R,
    pub epsilon: R,
}

impl<R: Real> MgridConfig<R> {
    /// Fails unless `0 < f_m < 1` and `t/(1+t) < c_m < (f_m+t)/(1+t)`, checked
    /// in exact rational arithmetic on the given values.
    pub fn new(beta: R, cell_h: usize, cell_w: usize, f_m: R, c_m: R) -> Result<Self> {
        if !(beta > R::zero()) {
            return Err(Error::Config(format!("beta must be positive, got {beta:?}")));
        }
        if cell_h == 0 || cell_w == 0 {
            return Err(Error::Config(format!("grid cell {cell_h}x{cell_w} is empty")));
        }
        check_regulator_interval(&f_m, &c_m)?;
        let one = R::one();
        let s_coef = (one.clone() - c_m.clone()) / (one.clone() - f_m.clone()).cube();
        let t = (f_m.clone() / (one.clone() - f_m.clone())).cube();
        let b = c_m.clone() * (one + t.clone()) - t.clone();
        Ok(MgridConfig {
            beta,
            cell_h,
            cell_w,
            f_m,
            c_m,
            s_coef,
            t,
            b,
            epsilon: R::from_f64(METRIC_EPSILON),
        })
    }

    /// β = 0.5, 12×12 cells, `(f_m, c_m) = (0.5, 0.525)`.
    pub fn defaults() -> Self {
        Self::new(
            R::from_ratio(1, 2),
            12,
            12,
            R::from_ratio(1, 2),
            R::from_ratio(21, 40),
        )
        .expect("default regulator is valid")
    }

    pub fn with_cell(mut self, cell_h: usize, cell_w: usize) -> Result<Self> {
        if cell_h == 0 || cell_w == 0 {
            return Err(Error::Config(format!("grid cell {cell_h}x{cell_w} is empty")));
        }
        self.cell_h = cell_h;
        self.cell_w = cell_w;
        Ok(self)
    }
}

/// The open interval `c_m` must lie in for a given `f_m`, exactly.
pub fn regulator_interval(f_m: &BigRational) -> (BigRational, BigRational) {
    let one = BigRational::one();
    let r = f_m / (&one - f_m);
    let t = &r * &r * &r;
    let lo = &t / (&one + &t);
    let hi = (f_m + &t) / (&one + &t);
    (lo, hi)
}

fn check_regulator_interval<R: Real>(f_m: &R, c_m: &R) -> Result<()> {
    let (Some(fm), Some(cm)) = (f_m.to_exact(), c_m.to_exact()) else {
        return Err(Error::Config("f_m and c_m must be finite".into()));
    };
    if !(fm > BigRational::zero() && fm < BigRational::one()) {
        return Err(Error::Config(format!("f_m = {} must lie in (0, 1)", f_m.to_f64())));
    }
    let (lo, hi) = regulator_interval(&fm);
    if !(cm > lo && cm < hi) {
        return Err(Error::Config(format!(
            "c_m = {} violates the regulator validity interval ({}, {}) for f_m = {}",
            c_m.to_f64(),
            Real::to_f64(&lo),
            Real::to_f64(&hi),
            f_m.to_f64()
        )));
    }
    Ok(())
}

/// `Γ(0) = 0`, otherwise `s·(f − f_m)³ + c_m`.
pub fn regulator<R: Real>(f: &R, cfg: &MgridConfig<R>) -> R {
    if f.is_zero() {
        return R::zero();
    }
    cfg.s_coef.clone() * (f.clone() - cfg.f_m.clone()).cube() + cfg.c_m.clone()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Mgrid<R> {
    Score(R),
    /// No cell holds a positive pixel in either mask.
    NoEvidence,
}

impl<R: Clone> Mgrid<R> {
    pub fn score(&self) -> Option<R> {
        match self {
            Mgrid::Score(v) => Some(v.clone()),
            Mgrid::NoEvidence => None,
        }
    }
}

/// Confusion counts of every grid cell, row-major, anchored at (0, 0); edge
/// cells are truncated.
pub fn cell_confusions(pred: &SegMask, gt: &SegMask, positive: u8, cell_h: usize, cell_w: usize) -> Result<Vec<Confusion>> {
    pred.same_extent(gt, "mgrid")?;
    let (h, w) = pred.extent();
    let (rows, cols) = (h.div_ceil(cell_h), w.div_ceil(cell_w));
    let mut cells = vec![Confusion::default(); rows * cols];
    for r in 0..h {
        let row_cells = &mut cells[(r / cell_h) * cols..(r / cell_h + 1) * cols];
        for c in 0..w {
            row_cells[c / cell_w].record(pred.get(r, c) == positive, gt.get(r, c) == positive);
        }
    }
    Ok(cells)
}

/// Mean regulated F-beta over evidential cells.
pub fn mgrid<R: Real>(pred: &SegMask, gt: &SegMask, positive: u8, cfg: &MgridConfig<R>) -> Result<Mgrid<R>> {
    let cells = cell_confusions(pred, gt, positive, cfg.cell_h, cfg.cell_w)?;
    let mut sum = R::zero();
    let mut n = 0u64;
    for c in cells.iter().filter(|c| c.is_evidential()) {
        sum = sum + regulator(&fbeta(c, &cfg.beta, &cfg.epsilon), cfg);
        n += 1;
    }
    Ok(if n == 0 {
        Mgrid::NoEvidence
    } else {
        Mgrid::Score(sum / R::from_u64(n))
    })
}

/// `(f, Γ(f))` at `f = 0, step, 2·step, …, 1`.
pub fn regulator_curve(cfg: &MgridConfig<f64>, steps: usize) -> Vec<(f64, f64)> {
    (0..=steps)
        .map(|i| {
            let f = i as f64 / steps as f64;
            (f, regulator(&f, cfg))
        })
        .collect()
}
