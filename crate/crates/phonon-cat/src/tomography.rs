//! Simulated readout: displaced phonon-number measurements, quadrature
//! estimation, and the displacement-then-parity route to the Wigner function.
//!
//! Sign convention: "displacing the state by α" means ρ → D(α)ρD†(α) with the
//! standard D(α) = exp(αa† − ᾱa), so the displaced mode reads ã = a + α. A
//! coherent state |γ⟩ displaced by α therefore measures Poisson(|γ + α|²),
//! which pins all phase conventions below.

use crate::hilbert::{number_op, DensityOperator, HilbertConfig, LinearOperator};
use crate::phase_space::{check_poisson_tail, displacement_elements, GridSpec, WignerGrid, BOUNDARY_TOL};
use crate::trajectories::derive_seed;
use crate::{C64, Error, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// One tomography acquisition: displacements A·e^{iθ} over a set of angles.
#[derive(Clone, Debug, Deserialize, PartialEq, Serialize)]
pub struct MeasurementPlan {
    /// Displacement magnitude |α|.
    pub amplitude: f64,
    /// Displacement angles θ, radians, each in [0, 2π).
    pub angles: Vec<f64>,
    /// Shots per angle.
    pub shots: u64,
    /// Master seed; per-angle streams are derived from it.
    pub seed: u64,
}

impl MeasurementPlan {
    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::InvalidParameter("MeasurementPlan.shots must be > 0".into()));
        }
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Error::InvalidParameter(
                "MeasurementPlan.amplitude must be finite and ≥ 0".into(),
            ));
        }
        if self.angles.is_empty() {
            return Err(Error::InvalidParameter("MeasurementPlan needs at least one angle".into()));
        }
        for &th in &self.angles {
            if !(0.0..TAU).contains(&th) {
                return Err(Error::InvalidParameter(format!(
                    "angle {th} outside [0, 2π)"
                )));
            }
        }
        Ok(())
    }
}

/// Sampled counts per angle; `counts[j][n]` is the number of shots at angle
/// `plan.angles[j]` that measured phonon number n.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct MeasurementData {
    pub plan: MeasurementPlan,
    pub counts: Vec<Vec<u64>>,
}

impl MeasurementData {
    /// Empirical probability histogram for one angle.
    pub fn empirical_distribution(&self, angle_index: usize) -> Vec<f64> {
        let total = self.plan.shots as f64;
        self.counts[angle_index].iter().map(|&c| c as f64 / total).collect()
    }
}

fn require_oscillator(config: HilbertConfig, what: &str) -> Result<()> {
    if config.qubit_dim() != 1 {
        return Err(Error::InvalidParameter(format!(
            "{what} expects a reduced oscillator state (partial trace first)"
        )));
    }
    Ok(())
}

/// Truncated matrix of D(α) = exp(αa† − ᾱa) on an oscillator-only space.
/// Elements are the exact infinite-space ones; the tail check guarantees the
/// operator is unitary within 1e−8 on the low-lying subspace actually used.
pub fn displacement_operator(alpha: C64, config: HilbertConfig) -> Result<LinearOperator> {
    require_oscillator(config, "displacement_operator")?;
    check_poisson_tail(alpha.norm(), config.n_max())?;
    let d = displacement_elements(alpha, config.n_max());
    // unitarity on the adequately-truncated columns: ‖D|n⟩‖ = 1 within 1e−8
    // for every n whose displaced image still fits under the truncation
    for n in 0..config.n_max() {
        if check_poisson_tail(alpha.norm() + (n as f64).sqrt(), config.n_max()).is_err() {
            break;
        }
        let norm2: f64 = (0..config.n_max()).map(|m| d[(m, n)].norm_sqr()).sum();
        if (norm2 - 1.0).abs() > 1e-8 {
            return Err(Error::Numerical(format!(
                "displacement_operator: column {n} norm² = {norm2} (unitarity loss)"
            )));
        }
    }
    LinearOperator::from_dense(config, &d)
}

/// p(n) of the state displaced by α: p(n) = ⟨n|D(α)ρD†(α)|n⟩.
pub fn displaced_number_distribution(rho: &DensityOperator, alpha: C64) -> Result<Vec<f64>> {
    require_oscillator(rho.config(), "displaced_number_distribution")?;
    let n_max = rho.config().n_max();
    let n_mean = number_op(rho.config()).expect_rho(rho)?.re.max(0.0);
    check_poisson_tail(alpha.norm() + n_mean.sqrt(), n_max)?;
    let d = displacement_elements(alpha, n_max);
    let m = &d * rho.matrix();
    let p: Vec<f64> = (0..n_max)
        .map(|k| {
            let v: C64 = (0..n_max).map(|n| m[(k, n)] * d[(k, n)].conj()).sum();
            v.re.max(0.0)
        })
        .collect();
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Truncation(format!(
            "displaced distribution sums to {total} (truncation too tight)"
        )));
    }
    Ok(p)
}

/// Multinomial sampling of displaced number measurements, one independent
/// deterministic RNG stream per angle (order-independent under parallelism).
pub fn sample_measurements(rho: &DensityOperator, plan: &MeasurementPlan) -> Result<MeasurementData> {
    plan.validate()?;
    require_oscillator(rho.config(), "sample_measurements")?;
    let counts: Vec<Vec<u64>> = plan
        .angles
        .par_iter()
        .enumerate()
        .map(|(j, &theta)| {
            let alpha = C64::from_polar(plan.amplitude, theta);
            let p = displaced_number_distribution(rho, alpha)?;
            let mut cdf = Vec::with_capacity(p.len());
            let mut acc = 0.0;
            for &pk in &p {
                acc += pk;
                cdf.push(acc);
            }
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(plan.seed, j as u64));
            let mut c = vec![0u64; p.len()];
            for _ in 0..plan.shots {
                let u: f64 = rng.gen();
                let idx = cdf.partition_point(|&x| x < u).min(p.len() - 1);
                c[idx] += 1;
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    Ok(MeasurementData {
        plan: plan.clone(),
        counts,
    })
}

/// Quadrature estimator from the exact displaced distribution:
/// (⟨ã†ã⟩ − |α|²)/(√2|α|) ≈ ⟨Q_θ⟩ with θ = arg α and
/// Q_θ = (ae^{−iθ} + a†e^{iθ})/√2.
pub fn quadrature_estimate(rho: &DensityOperator, alpha: C64) -> Result<f64> {
    if alpha.norm() == 0.0 {
        return Err(Error::InvalidParameter("quadrature_estimate needs |α| > 0".into()));
    }
    let n_mean = number_op(rho.config()).expect_rho(rho)?.re.max(0.0);
    if alpha.norm_sqr() < 10.0 * n_mean {
        log::warn!(
            "quadrature_estimate: |α|² = {:.3} < 10⟨n⟩ = {:.3}; estimator bias is not small",
            alpha.norm_sqr(),
            10.0 * n_mean
        );
    }
    let p = displaced_number_distribution(rho, alpha)?;
    let n_disp: f64 = p.iter().enumerate().map(|(k, &pk)| k as f64 * pk).sum();
    Ok((n_disp - alpha.norm_sqr()) / (2.0f64.sqrt() * alpha.norm()))
}

/// Same estimator from sampled counts at one angle.
pub fn quadrature_estimate_from_counts(counts: &[u64], alpha: C64) -> Result<f64> {
    if alpha.norm() == 0.0 {
        return Err(Error::InvalidParameter("quadrature_estimate needs |α| > 0".into()));
    }
    let shots: u64 = counts.iter().sum();
    if shots == 0 {
        return Err(Error::InvalidParameter("no shots in counts".into()));
    }
    let n_disp: f64 = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| k as f64 * c as f64)
        .sum::<f64>()
        / shots as f64;
    Ok((n_disp - alpha.norm_sqr()) / (2.0f64.sqrt() * alpha.norm()))
}

/// Wigner function through the measurement path: displace by −α, measure the
/// number distribution, form the parity, W(α) = (2/π)Σ(−1)ⁿ p(n).
pub fn parity_scan(rho: &DensityOperator, spec: &GridSpec) -> Result<WignerGrid> {
    require_oscillator(rho.config(), "parity_scan")?;
    if spec.points < 3 {
        return Err(Error::InvalidParameter("grid needs at least 3 points".into()));
    }
    let n_mean = number_op(rho.config()).expect_rho(rho)?.re.max(0.0);
    let mut half = spec.half_width.unwrap_or_else(|| 1.5 * (n_mean.sqrt() + 3.0));
    let auto = spec.half_width.is_none();
    let mut attempts = 0;
    loop {
        let grid = parity_scan_fixed(rho, half, spec.points)?;
        if !auto || grid.boundary_max() < BOUNDARY_TOL || attempts >= 8 {
            return Ok(grid);
        }
        half *= 1.3;
        attempts += 1;
    }
}

fn parity_scan_fixed(rho: &DensityOperator, half: f64, points: usize) -> Result<WignerGrid> {
    let axis: Vec<f64> = (0..points)
        .map(|k| -half + 2.0 * half * k as f64 / (points - 1) as f64)
        .collect();
    let step = 2.0 * half / (points - 1) as f64;
    let rows: Vec<Vec<f64>> = axis
        .par_iter()
        .map(|&re| {
            axis.iter()
                .map(|&im| {
                    let alpha = C64::new(re, im);
                    let p = displaced_number_distribution(rho, -alpha)?;
                    Ok((2.0 / PI)
                        * p.iter()
                            .enumerate()
                            .map(|(n, &pn)| if n % 2 == 0 { pn } else { -pn })
                            .sum::<f64>())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut values = DMatrix::zeros(points, points);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    Ok(WignerGrid {
        re_axis: axis.clone(),
        im_axis: axis,
        values,
        step,
    })
}
