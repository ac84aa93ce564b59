//! Analytic magnetostatics for the two-nanomagnet geometry.
//!
//! Two identical coaxial cylinders, both uniformly magnetized along +z, face
//! each other across a gap. On the axis the field of one cylinder has the
//! closed form B(ζ) = (μ₀M_s/2)[f(ζ+L/2) − f(ζ−L/2)] with
//! f(u) = u/√(u²+R²); the pair field and its first two z-derivatives follow
//! analytically. This replaces a micromagnetic relaxation with the ideal
//! saturated-magnet limit, which reproduces headline gradients to within a
//! factor ~2.

use crate::model::{self, DeviceParams};
use crate::{Error, Result};
use serde::Deserialize;
use std::collections::BTreeMap;

/// Two identical coaxial cylinders magnetized +z, separated by `gap`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagnetPair {
    /// Cylinder radius, m.
    pub radius: f64,
    /// Cylinder length, m.
    pub length: f64,
    /// Face-to-face gap, m.
    pub gap: f64,
    /// μ₀ × saturation magnetization, T.
    pub mu0_ms: f64,
}

/// Field and gradients at an axial evaluation point inside the gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientReport {
    /// B_z at the evaluation point, T.
    pub b0: f64,
    /// ∂B_z/∂z, T/m.
    pub g1: f64,
    /// ∂²B_z/∂z², T/m².
    pub g2: f64,
    /// Evaluation point relative to the gap center, m.
    pub offset: f64,
}

/// Recorded material constants; only μ₀M_s enters the analytic model.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
pub struct Material {
    pub mu0_ms_tesla: f64,
    pub exchange_stiffness_j_per_m: f64,
    pub gilbert_damping: f64,
}

/// Material table (Dy, Co, FeCo) shipped with the crate.
pub fn material_table() -> BTreeMap<String, Material> {
    serde_json::from_str(include_str!("../data/materials.json"))
        .expect("embedded material table is valid JSON")
}

pub fn material(name: &str) -> Result<Material> {
    material_table()
        .get(name)
        .copied()
        .ok_or_else(|| Error::InvalidParameter(format!("unknown magnet material '{name}'")))
}

impl MagnetPair {
    pub fn new(radius: f64, length: f64, gap: f64, mu0_ms: f64) -> Result<Self> {
        for (name, v) in [("radius", radius), ("length", length), ("gap", gap)] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "MagnetPair.{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !mu0_ms.is_finite() {
            return Err(Error::InvalidParameter("MagnetPair.mu0_ms must be finite".into()));
        }
        Ok(Self {
            radius,
            length,
            gap,
            mu0_ms,
        })
    }

    fn check_in_gap(&self, z: f64) -> Result<()> {
        if !z.is_finite() || z.abs() >= self.gap / 2.0 {
            return Err(Error::InvalidParameter(format!(
                "evaluation point z = {z} m lies outside the open gap (|z| < {})",
                self.gap / 2.0
            )));
        }
        Ok(())
    }
}

/// f(u) = u/√(u²+R²) and its first two derivatives.
fn f0(u: f64, r: f64) -> f64 {
    u / (u * u + r * r).sqrt()
}
fn f1(u: f64, r: f64) -> f64 {
    let s = u * u + r * r;
    r * r / (s * s.sqrt())
}
fn f2(u: f64, r: f64) -> f64 {
    let s = u * u + r * r;
    -3.0 * u * r * r / (s * s * s.sqrt())
}

/// On-axis B_z of a single cylinder whose center sits at `zc`, evaluated at z.
fn single_field(pair: &MagnetPair, zc: f64, z: f64) -> f64 {
    let zeta = z - zc;
    0.5 * pair.mu0_ms * (f0(zeta + pair.length / 2.0, pair.radius) - f0(zeta - pair.length / 2.0, pair.radius))
}

fn single_g1(pair: &MagnetPair, zc: f64, z: f64) -> f64 {
    let zeta = z - zc;
    0.5 * pair.mu0_ms * (f1(zeta + pair.length / 2.0, pair.radius) - f1(zeta - pair.length / 2.0, pair.radius))
}

fn single_g2(pair: &MagnetPair, zc: f64, z: f64) -> f64 {
    let zeta = z - zc;
    0.5 * pair.mu0_ms * (f2(zeta + pair.length / 2.0, pair.radius) - f2(zeta - pair.length / 2.0, pair.radius))
}

/// Centers of the two cylinders (gap center at z = 0).
fn centers(pair: &MagnetPair) -> [f64; 2] {
    let c = pair.gap / 2.0 + pair.length / 2.0;
    [-c, c]
}

/// Total on-axis B_z at `z` from the gap center, T.
pub fn on_axis_field(pair: &MagnetPair, z: f64) -> Result<f64> {
    pair.check_in_gap(z)?;
    Ok(centers(pair).iter().map(|&zc| single_field(pair, zc, z)).sum())
}

/// Field and analytic gradients at `offset` from the gap center.
pub fn gradients(pair: &MagnetPair, offset: f64) -> Result<GradientReport> {
    pair.check_in_gap(offset)?;
    let cs = centers(pair);
    Ok(GradientReport {
        b0: cs.iter().map(|&zc| single_field(pair, zc, offset)).sum(),
        g1: cs.iter().map(|&zc| single_g1(pair, zc, offset)).sum(),
        g2: cs.iter().map(|&zc| single_g2(pair, zc, offset)).sum(),
        offset,
    })
}

/// One grid point of a device-design sweep.
#[derive(Clone, Copy, Debug)]
pub struct CouplingMapPoint {
    pub z_zpf: f64,
    pub quality_factor: f64,
    pub g2: f64,
    pub cooperativity: f64,
}

/// Design map: g₂ and C over a (z_zpf, Q) grid, plus the C = 1 contour
/// expressed as the critical Q at each z_zpf (C is linear in Q).
#[derive(Clone, Debug)]
pub struct CouplingMap {
    pub points: Vec<CouplingMapPoint>,
    /// (z_zpf, Q at which C = 1) pairs.
    pub unity_contour: Vec<(f64, f64)>,
}

/// Geometric or linear ranges for sweeps.
pub fn log_range(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

pub fn coupling_map(
    dev_template: &DeviceParams,
    z_zpf_values: &[f64],
    q_values: &[f64],
) -> Result<CouplingMap> {
    if z_zpf_values.iter().chain(q_values).any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "coupling_map sweep ranges must be finite and positive".into(),
        ));
    }
    let n_th = model::thermal_occupation(dev_template.omega_m, dev_template.temperature);
    let mut points = Vec::with_capacity(z_zpf_values.len() * q_values.len());
    let mut unity_contour = Vec::with_capacity(z_zpf_values.len());
    for &z in z_zpf_values {
        let dev = DeviceParams {
            z_zpf: z,
            ..*dev_template
        };
        let g2 = model::g2_from_device(&dev);
        for &q in q_values {
            let gamma_m = dev.omega_m / q;
            points.push(CouplingMapPoint {
                z_zpf: z,
                quality_factor: q,
                g2,
                cooperativity: model::cooperativity(g2, dev.gamma_z, gamma_m, n_th)?,
            });
        }
        // C = 4g₂²Q / [γ_z ω_m (n_th+1)] = 1 at Q_c:
        let c_per_q =
            4.0 * g2 * g2 / (dev.gamma_z * dev.omega_m * (n_th + 1.0));
        if c_per_q > 0.0 {
            unity_contour.push((z, 1.0 / c_per_q));
        }
    }
    Ok(CouplingMap {
        points,
        unity_contour,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::consts;
    use std::f64::consts::PI;

    fn dy_pair() -> MagnetPair {
        // 30 nm diameter, 150 nm length, 30 nm gap
        MagnetPair::new(15e-9, 150e-9, 30e-9, 3.7).unwrap()
    }

    /// Independent oracle: on-axis field of a uniformly magnetized cylinder
    /// as a surface-current (solenoid) model, B(z) = (μ₀M/2)∫ R²/(R²+(z−z')²)^{3/2} dz'
    /// over the cylinder extent, integrated by composite Simpson quadrature.
    fn solenoid_field(pair: &MagnetPair, zc: f64, z: f64) -> f64 {
        let integrand = |zp: f64| {
            let d = z - zp;
            let r2 = pair.radius * pair.radius;
            r2 / (r2 + d * d).powf(1.5)
        };
        let a = zc - pair.length / 2.0;
        let b = zc + pair.length / 2.0;
        let n = 20_000; // even
        let h = (b - a) / n as f64;
        let mut s = integrand(a) + integrand(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * integrand(a + k as f64 * h);
        }
        0.5 * pair.mu0_ms * s * h / 3.0
    }

    #[test]
    fn field_matches_surface_current_oracle() {
        let pair = dy_pair();
        for &z in &[0.0, 5e-9, -9e-9, 1.3e-8] {
            let analytic = on_axis_field(&pair, z).unwrap();
            let oracle: f64 = centers(&pair).iter().map(|&zc| solenoid_field(&pair, zc, z)).sum();
            assert!(
                ((analytic - oracle) / oracle).abs() < 1e-3,
                "z={z}: {analytic} vs {oracle}"
            );
        }
    }

    #[test]
    fn headline_dy_values() {
        let pair = dy_pair();
        let b = on_axis_field(&pair, 0.0).unwrap();
        assert!((b - 1.07).abs() < 0.02, "B(0) = {b}");
        let rep = gradients(&pair, 0.0).unwrap();
        assert!(rep.g1.abs() < 1.0, "G1(0) = {}", rep.g1);
        // within a factor 2 of 9e15 T/m²
        assert!(rep.g2 > 4.5e15 && rep.g2 < 1.8e16, "G2 = {:.4e}", rep.g2);
        assert!((rep.g2 - 8.7e15).abs() / 8.7e15 < 0.02, "G2 = {:.4e}", rep.g2);
    }

    #[test]
    fn symmetry_and_parity() {
        let pair = dy_pair();
        for &z in &[1e-9, 4e-9, 1.2e-8] {
            let bp = on_axis_field(&pair, z).unwrap();
            let bm = on_axis_field(&pair, -z).unwrap();
            assert!((bp - bm).abs() <= 1e-12 * bp.abs());
            let gp = gradients(&pair, z).unwrap();
            let gm = gradients(&pair, -z).unwrap();
            assert!((gp.g1 + gm.g1).abs() <= 1e-9 * gp.g1.abs().max(1e-300));
            assert!((gp.g2 - gm.g2).abs() <= 1e-9 * gp.g2.abs());
        }
        let rep0 = gradients(&pair, 0.0).unwrap();
        assert!(rep0.g1.abs() < 1e-6 * rep0.g2.abs() * pair.gap);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let pair = dy_pair();
        let h = 1e-3 * pair.gap;
        for &z in &[0.0, 3e-9, -7e-9] {
            let rep = gradients(&pair, z).unwrap();
            let bp = on_axis_field(&pair, z + h).unwrap();
            let bm = on_axis_field(&pair, z - h).unwrap();
            let b0 = on_axis_field(&pair, z).unwrap();
            let g1_fd = (bp - bm) / (2.0 * h);
            let g2_fd = (bp - 2.0 * b0 + bm) / (h * h);
            if rep.g1.abs() > 1e3 {
                assert!(((rep.g1 - g1_fd) / rep.g1).abs() < 1e-6);
            } else {
                assert!((rep.g1 - g1_fd).abs() < 1e-3 * rep.g2.abs() * h);
            }
            assert!(((rep.g2 - g2_fd) / rep.g2).abs() < 1e-5, "z={z}");
        }
    }

    #[test]
    fn linearity_and_superposition() {
        let pair = dy_pair();
        let scaled = MagnetPair { mu0_ms: 2.5 * pair.mu0_ms, ..pair };
        let z = 6e-9;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(on_axis_field(&scaled, z).unwrap(), 2.5 * on_axis_field(&pair, z).unwrap()) < 1e-15);
        let g = gradients(&pair, z).unwrap();
        let gs = gradients(&scaled, z).unwrap();
        assert!(rel(gs.g1, 2.5 * g.g1) < 1e-15);
        assert!(rel(gs.g2, 2.5 * g.g2) < 1e-15);
        // superposition: pair = sum of single-magnet contributions
        let total: f64 = centers(&pair).iter().map(|&zc| single_field(&pair, zc, z)).sum();
        assert_eq!(on_axis_field(&pair, z).unwrap(), total);
    }

    #[test]
    fn far_field_vanishes() {
        let pair = MagnetPair::new(15e-9, 150e-9, 1e-3, 3.7).unwrap();
        let b = on_axis_field(&pair, 0.0).unwrap();
        assert!(b.abs() < 1e-6, "B = {b}");
    }

    #[test]
    fn inside_material_rejected() {
        let pair = dy_pair();
        assert!(on_axis_field(&pair, 15e-9).is_err());
        assert!(on_axis_field(&pair, -16e-9).is_err());
        assert!(gradients(&pair, pair.gap).is_err());
    }

    #[test]
    fn material_table_contents() {
        let table = material_table();
        assert_eq!(table.len(), 3);
        assert_eq!(material("Dy").unwrap().mu0_ms_tesla, 3.7);
        assert_eq!(material("Co").unwrap().mu0_ms_tesla, 1.79);
        assert_eq!(material("FeCo").unwrap().mu0_ms_tesla, 2.4);
        assert!(material("Nd").is_err());
        // ordering by M_s at equal geometry: Dy above FeCo above Co
        let g = |m: f64| {
            gradients(&MagnetPair { mu0_ms: m, ..dy_pair() }, 0.0).unwrap().g2
        };
        assert!(g(3.7) > g(2.4) && g(2.4) > g(1.79));
    }

    #[test]
    fn offset_gives_khz_linear_coupling() {
        // 0.1 nm misalignment, z_zpf = 200 fm → g₁ in the kHz range
        let pair = dy_pair();
        let rep = gradients(&pair, 0.1e-9).unwrap();
        let g1 = consts::MU_B * consts::G_S * 200e-15 * rep.g1.abs() / consts::HBAR;
        let g1_hz = g1 / (2.0 * PI);
        assert!(g1_hz > 1e3 && g1_hz < 1e5, "g1 = {g1_hz} Hz");
    }

    #[test]
    fn coupling_map_points_a_and_b() {
        let dev = DeviceParams {
            z_zpf: 200e-15,
            omega_m: 2.0 * PI * 1.8e6,
            quality_factor: 4.2e8,
            temperature: 10e-3,
            gamma_z: 2.0 * PI * 10.0,
            g2_gradient: gradients(&dy_pair(), 0.0).unwrap().g2,
            g1_gradient: 0.0,
        };
        let zs = vec![43e-15, 200e-15];
        let qs = vec![4.2e8, 4.2e9];
        let map = coupling_map(&dev, &zs, &qs).unwrap();
        let find = |z: f64, q: f64| {
            map.points
                .iter()
                .find(|p| p.z_zpf == z && p.quality_factor == q)
                .unwrap()
                .cooperativity
        };
        let c_b = find(200e-15, 4.2e8);
        let c_a = find(43e-15, 4.2e9);
        assert!((c_b - 20.0).abs() / 20.0 < 0.1, "C_B = {c_b}");
        assert!((c_a - 0.4).abs() / 0.4 < 0.15, "C_A = {c_a}");
        // monotone in Q and z_zpf
        assert!(find(200e-15, 4.2e9) > c_b);
        assert!(c_b > find(43e-15, 4.2e8));
        // contour consistency: C(Q_c) = 1
        for &(z, qc) in &map.unity_contour {
            let dev_z = DeviceParams { z_zpf: z, ..dev };
            let g2 = crate::model::g2_from_device(&dev_z);
            let c = crate::model::cooperativity(
                g2,
                dev.gamma_z,
                dev.omega_m / qc,
                crate::model::thermal_occupation(dev.omega_m, dev.temperature),
            )
            .unwrap();
            assert!((c - 1.0).abs() < 1e-9);
        }
    }
}
