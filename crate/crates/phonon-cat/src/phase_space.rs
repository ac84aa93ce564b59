//! Phase-space tools: Wigner function on a grid, integrated negativity,
//! cattiness, reference-state constructors, and fidelity.
//!
//! Wigner normalization is fixed to ∫W d²α = 1, i.e.
//! W(α) = (2/π) Σ_n (−1)^n ⟨n|D†(α) ρ D(α)|n⟩.

use crate::hilbert::{number_op, DensityOperator, HilbertConfig, Ket};
use crate::{C64, Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Requested phase-space grid. With `half_width = None` the grid is sized
/// from the state (±1.5(√⟨n⟩+3)) and auto-expanded until the boundary is
/// quiet (|W| < 1e−6).
#[derive(Clone, Copy, Debug)]
pub struct GridSpec {
    pub half_width: Option<f64>,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width: None,
            points: 201,
        }
    }
}

/// Wigner samples W(α) on a square uniform grid α = re + i·im.
#[derive(Clone, Debug)]
pub struct WignerGrid {
    pub re_axis: Vec<f64>,
    pub im_axis: Vec<f64>,
    /// values[(i, j)] = W(re_axis[i] + i im_axis[j])
    pub values: DMatrix<f64>,
    /// Grid step h (same in both directions).
    pub step: f64,
}

/// Boundary quietness threshold for support coverage.
pub const BOUNDARY_TOL: f64 = 1e-6;

impl WignerGrid {
    /// ∫ W d²α by the trapezoid-free Riemann sum (adequate for quiet
    /// boundaries).
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.step * self.step
    }

    /// Largest |W| on the outermost frame of the grid.
    pub fn boundary_max(&self) -> f64 {
        let (nr, nc) = self.values.shape();
        let mut m = 0.0f64;
        for i in 0..nr {
            m = m.max(self.values[(i, 0)].abs());
            m = m.max(self.values[(i, nc - 1)].abs());
        }
        for j in 0..nc {
            m = m.max(self.values[(0, j)].abs());
            m = m.max(self.values[(nr - 1, j)].abs());
        }
        m
    }

    /// Value at the grid point closest to the origin.
    pub fn at_origin(&self) -> f64 {
        let i = nearest_index(&self.re_axis, 0.0);
        let j = nearest_index(&self.im_axis, 0.0);
        self.values[(i, j)]
    }

    /// Grid-local maxima above `threshold`, as (re, im, W), sorted by height.
    pub fn local_maxima(&self, threshold: f64) -> Vec<(f64, f64, f64)> {
        let (nr, nc) = self.values.shape();
        let mut out = Vec::new();
        for i in 1..nr - 1 {
            for j in 1..nc - 1 {
                let v = self.values[(i, j)];
                if v < threshold {
                    continue;
                }
                let mut is_max = true;
                'nb: for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        if self.values[((i as i64 + di) as usize, (j as i64 + dj) as usize)] > v {
                            is_max = false;
                            break 'nb;
                        }
                    }
                }
                if is_max {
                    out.push((self.re_axis[i], self.im_axis[j], v));
                }
            }
        }
        out.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
        out
    }
}

fn nearest_index(axis: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (k, &v) in axis.iter().enumerate() {
        let d = (v - x).abs();
        if d < dist {
            dist = d;
            best = k;
        }
    }
    best
}

/// Even/odd superposition of |±β⟩.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Clone, Copy, Debug)]
pub struct CatSpec {
    pub beta: C64,
    pub parity: Parity,
}

/// Coherent state c_n = e^{−|α|²/2} αⁿ/√n! on an oscillator-only config.
pub fn coherent_state(alpha: C64, config: HilbertConfig) -> Result<Ket> {
    if config.qubit_dim() != 1 {
        return Err(Error::InvalidParameter(
            "coherent_state expects an oscillator-only config".into(),
        ));
    }
    let n_max = config.n_max();
    check_poisson_tail(alpha.norm(), n_max)?;
    let mut amp = DVector::zeros(n_max);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..n_max {
        amp[n] = c;
        c *= alpha / C64::new(((n + 1) as f64).sqrt(), 0.0);
    }
    Ket::new(config, amp)
}

/// Poisson(|α|²) tail mass p(n ≥ n_max) must be below 1e−10.
pub(crate) fn check_poisson_tail(amplitude: f64, n_max: usize) -> Result<()> {
    let lam = amplitude * amplitude;
    if lam == 0.0 {
        return Ok(());
    }
    // Work in log space to avoid underflow for large λ.
    let ln_lam = lam.ln();
    let mut ln_p = -lam; // ln p(0)
    let mut cum = ln_p.exp();
    for n in 1..n_max {
        ln_p += ln_lam - (n as f64).ln();
        cum += ln_p.exp();
    }
    let tail = (1.0 - cum).max(0.0);
    if tail >= 1e-10 {
        // Report the truncation that would suffice (10σ above the mean).
        let needed = (lam + 10.0 * lam.sqrt() + 20.0).ceil() as usize;
        return Err(Error::Truncation(format!(
            "coherent amplitude |α| = {amplitude:.3} has tail mass {tail:.3e} at n_max = {n_max}; need n_max ≳ {needed}"
        )));
    }
    Ok(())
}

/// Normalized cat state N±(|β⟩ ± |−β⟩).
pub fn cat_state(spec: &CatSpec, config: HilbertConfig) -> Result<Ket> {
    let plus = coherent_state(spec.beta, config)?;
    let minus = coherent_state(-spec.beta, config)?;
    let sign = match spec.parity {
        Parity::Even => 1.0,
        Parity::Odd => -1.0,
    };
    let amp = plus.amplitudes() + minus.amplitudes() * C64::new(sign, 0.0);
    let mut ket = Ket::new(config, amp)?;
    ket.normalize()?;
    Ok(ket)
}

/// Matrix elements ⟨m|D(β)|n⟩ for m, n < dim, by stable two-term recurrences.
/// These are exact infinite-space elements (truncation only limits which ones
/// are tabulated).
pub fn displacement_elements(beta: C64, dim: usize) -> DMatrix<C64> {
    let mut d = DMatrix::zeros(dim, dim);
    let bconj = beta.conj();
    d[(0, 0)] = C64::new((-beta.norm_sqr() / 2.0).exp(), 0.0);
    for m in 1..dim {
        d[(m, 0)] = d[(m - 1, 0)] * beta / C64::new((m as f64).sqrt(), 0.0);
    }
    for n in 0..dim - 1 {
        let scale = C64::new(((n + 1) as f64).sqrt(), 0.0);
        for m in 0..dim {
            let lower = if m > 0 {
                C64::new((m as f64).sqrt(), 0.0) * d[(m - 1, n)]
            } else {
                C64::new(0.0, 0.0)
            };
            d[(m, n + 1)] = (lower - bconj * d[(m, n)]) / scale;
        }
    }
    d
}

/// Evaluate W over a grid; `rho` must be a reduced oscillator state.
pub fn wigner(rho: &DensityOperator, spec: &GridSpec) -> Result<WignerGrid> {
    if rho.config().qubit_dim() != 1 {
        return Err(Error::InvalidParameter(
            "wigner expects a reduced oscillator state (partial trace first)".into(),
        ));
    }
    if spec.points < 3 {
        return Err(Error::InvalidParameter("grid needs at least 3 points".into()));
    }
    let n_mean = number_op(rho.config()).expect_rho(rho)?.re.max(0.0);
    let mut half = spec
        .half_width
        .unwrap_or_else(|| 1.5 * (n_mean.sqrt() + 3.0));
    let auto = spec.half_width.is_none();
    let mut attempts = 0;
    loop {
        let grid = wigner_fixed(rho, half, spec.points);
        if !auto || grid.boundary_max() < BOUNDARY_TOL || attempts >= 8 {
            return Ok(grid);
        }
        half *= 1.3;
        attempts += 1;
    }
}

fn wigner_fixed(rho: &DensityOperator, half: f64, points: usize) -> WignerGrid {
    let axis: Vec<f64> = (0..points)
        .map(|k| -half + 2.0 * half * k as f64 / (points - 1) as f64)
        .collect();
    let step = 2.0 * half / (points - 1) as f64;
    let n = rho.config().n_max();
    let rows: Vec<Vec<f64>> = axis
        .par_iter()
        .map(|&re| {
            let mut row = Vec::with_capacity(points);
            for &im in &axis {
                let alpha = C64::new(re, im);
                row.push(wigner_point(rho.matrix(), n, alpha));
            }
            row
        })
        .collect();
    let mut values = DMatrix::zeros(points, points);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    WignerGrid {
        re_axis: axis.clone(),
        im_axis: axis,
        values,
        step,
    }
}

/// W(α) = (2/π) Re Σ_{m,n} ρ_{mn} (−1)^m D(2α)_{nm}.
pub(crate) fn wigner_point(rho: &DMatrix<C64>, n_max: usize, alpha: C64) -> f64 {
    let d = displacement_elements(alpha * C64::new(2.0, 0.0), n_max);
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..n_max {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for n in 0..n_max {
            acc += rho[(m, n)] * d[(n, m)] * C64::new(sign, 0.0);
        }
    }
    acc.re * 2.0 / std::f64::consts::PI
}

/// 𝒩 = ∫ max(−W, 0) d²α.
pub fn negativity(grid: &WignerGrid) -> Result<f64> {
    let b = grid.boundary_max();
    if b >= BOUNDARY_TOL {
        return Err(Error::Numerical(format!(
            "Wigner grid does not cover the state support (boundary |W| = {b:.3e})"
        )));
    }
    let mut acc = 0.0;
    for v in grid.values.iter() {
        if *v < 0.0 {
            acc -= v;
        }
    }
    Ok(acc * grid.step * grid.step)
}

/// 𝒞 = 𝒩(ρ) / 𝒩(ρ_cat), with the reference an even cat of equal mean
/// occupation (β = i√⟨n⟩), evaluated on the same grid.
pub fn cattiness(rho: &DensityOperator, spec: &GridSpec) -> Result<f64> {
    if rho.config().qubit_dim() != 1 {
        return Err(Error::InvalidParameter(
            "cattiness expects a reduced oscillator state".into(),
        ));
    }
    let n_mean = number_op(rho.config()).expect_rho(rho)?.re;
    if n_mean <= 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "cattiness undefined: ⟨n⟩ = {n_mean:.3e} gives no reference cat"
        )));
    }
    let grid = wigner(rho, spec)?;
    let neg = negativity(&grid)?;
    let beta = C64::new(0.0, n_mean.sqrt());
    let cat = cat_state(
        &CatSpec {
            beta,
            parity: Parity::Even,
        },
        rho.config(),
    )?;
    // Same grid extents for the reference so quadrature bias cancels.
    let half = *grid.re_axis.last().unwrap();
    let ref_grid = wigner(
        &cat.to_density(),
        &GridSpec {
            half_width: Some(half),
            points: grid.re_axis.len(),
        },
    )?;
    let ref_neg = negativity(&ref_grid)?;
    if ref_neg <= 1e-12 {
        return Err(Error::Numerical(
            "cattiness reference negativity vanished (⟨n⟩ too small)".into(),
        ));
    }
    Ok(neg / ref_neg)
}

/// F = √(⟨target|ρ|target⟩) (square-root convention).
pub fn fidelity(rho: &DensityOperator, target: &Ket) -> Result<f64> {
    if rho.config() != target.config() {
        return Err(Error::DimensionMismatch(
            "fidelity: state and target configs differ".into(),
        ));
    }
    let v = target.amplitudes();
    let mv = rho.matrix() * v;
    let overlap = v.dotc(&mv).re.max(0.0);
    Ok(overlap.sqrt())
}

/// ⟨(−1)^n⟩ of a reduced oscillator state.
pub fn parity_expectation(rho: &DensityOperator) -> f64 {
    let n = rho.config().n_max();
    let qd = rho.config().qubit_dim();
    let mut acc = 0.0;
    for k in 0..n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        for q in 0..qd {
            acc += sign * rho.matrix()[(k * qd + q, k * qd + q)].re;
        }
    }
    acc
}
