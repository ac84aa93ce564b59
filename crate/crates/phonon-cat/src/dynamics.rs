//! Lindblad master-equation evolution, steady states, and observable
//! extraction.
//!
//! The master equation is
//! ρ̇ = −i[H,ρ] + Σ_i (γ_i/2) 𝓛_{O_i}[ρ],  𝓛_O[ρ] ≡ 2OρO† − O†Oρ − ρO†O.

use crate::hilbert::{
    annihilation, number_op, qubit_lowering, DensityOperator, HilbertConfig, LinearOperator,
};
use crate::integrate::{integrate_dp5, OdeOptions};
use crate::{C64, Error, Result};
use nalgebra::DMatrix;

/// Threshold above which the direct vectorized Liouvillian solve is skipped
/// in favor of long-time integration.
pub const DIRECT_SOLVE_MAX_DIM: usize = 200;

/// Top-Fock-level population above which a truncation warning is raised.
pub const TRUNCATION_THRESHOLD: f64 = 1e-8;

/// One collapse channel (O, γ) contributing (γ/2)𝓛_O[ρ].
#[derive(Clone, Debug)]
pub struct CollapseChannel {
    pub op: LinearOperator,
    pub rate: f64,
    op_dagger: LinearOperator,
    odo: LinearOperator,
}

impl CollapseChannel {
    pub fn new(op: LinearOperator, rate: f64) -> Result<Self> {
        if rate < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "collapse rate must be >= 0, got {rate}"
            )));
        }
        let op_dagger = op.dagger();
        let odo = op_dagger.matmul(&op)?;
        Ok(Self {
            op,
            rate,
            op_dagger,
            odo,
        })
    }

    /// O†O (cached).
    pub fn odo(&self) -> &LinearOperator {
        &self.odo
    }

    pub fn op_dagger(&self) -> &LinearOperator {
        &self.op_dagger
    }
}

/// Hamiltonian plus collapse channels.
#[derive(Clone, Debug)]
pub struct MasterEquationSpec {
    pub hamiltonian: LinearOperator,
    pub channels: Vec<CollapseChannel>,
}

impl MasterEquationSpec {
    pub fn new(hamiltonian: LinearOperator, channels: Vec<(LinearOperator, f64)>) -> Result<Self> {
        let config = hamiltonian.config();
        let mut built = Vec::with_capacity(channels.len());
        for (op, rate) in channels {
            if op.config() != config {
                return Err(Error::DimensionMismatch(
                    "collapse channel config differs from Hamiltonian".into(),
                ));
            }
            built.push(CollapseChannel::new(op, rate)?);
        }
        Ok(Self {
            hamiltonian,
            channels: built,
        })
    }

    /// The paper's default dissipators: phonon loss at the inflated rate
    /// γ_m·n_th and pure dephasing (σ†σ, γ_z).
    pub fn with_standard_channels(
        hamiltonian: LinearOperator,
        gamma_m: f64,
        n_th: f64,
        gamma_z: f64,
    ) -> Result<Self> {
        let config = hamiltonian.config();
        let a = annihilation(config);
        let sm = qubit_lowering(config)?;
        let pop = sm.dagger().matmul(&sm)?;
        Self::new(hamiltonian, vec![(a, gamma_m * n_th), (pop, gamma_z)])
    }

    pub fn config(&self) -> HilbertConfig {
        self.hamiltonian.config()
    }
}

/// Scratch space for the allocation-free RHS evaluation.
pub struct RhsBuffers {
    t1: DMatrix<C64>,
    t2: DMatrix<C64>,
}

impl RhsBuffers {
    pub fn new(dim: usize) -> Self {
        Self {
            t1: DMatrix::zeros(dim, dim),
            t2: DMatrix::zeros(dim, dim),
        }
    }
}

/// out += c · src, elementwise on contiguous storage.
fn mat_axpy(out: &mut DMatrix<C64>, c: C64, src: &DMatrix<C64>) {
    for i in 0..out.len() {
        out[i] += c * src[i];
    }
}

/// out = −i[H,ρ] + Σ (γ/2)(2OρO† − O†Oρ − ρO†O), on raw matrices.
pub fn lindblad_rhs_into(
    rho: &DMatrix<C64>,
    spec: &MasterEquationSpec,
    out: &mut DMatrix<C64>,
    buf: &mut RhsBuffers,
) {
    let mi = C64::new(0.0, -1.0);
    let pi = C64::new(0.0, 1.0);
    // −i Hρ
    spec.hamiltonian.mul_dense_into(rho, &mut buf.t1);
    out.copy_from(&buf.t1);
    *out *= mi;
    // +i ρH
    spec.hamiltonian.right_mul_dense_into(rho, &mut buf.t1);
    mat_axpy(out, pi, &buf.t1);
    for ch in &spec.channels {
        if ch.rate == 0.0 {
            continue;
        }
        let g = C64::new(ch.rate, 0.0);
        let gh = C64::new(ch.rate / 2.0, 0.0);
        // γ OρO†
        ch.op.mul_dense_into(rho, &mut buf.t1);
        ch.op_dagger.right_mul_dense_into(&buf.t1, &mut buf.t2);
        mat_axpy(out, g, &buf.t2);
        // −γ/2 O†Oρ
        ch.odo.mul_dense_into(rho, &mut buf.t1);
        mat_axpy(out, -gh, &buf.t1);
        // −γ/2 ρO†O
        ch.odo.right_mul_dense_into(rho, &mut buf.t1);
        mat_axpy(out, -gh, &buf.t1);
    }
}

/// ρ̇ as a raw (traceless, anti-Hermitian-free) matrix derivative.
pub fn lindblad_rhs(rho: &DensityOperator, spec: &MasterEquationSpec) -> Result<DMatrix<C64>> {
    if rho.config() != spec.config() {
        return Err(Error::DimensionMismatch(
            "lindblad_rhs: state and spec configs differ".into(),
        ));
    }
    let dim = rho.config().dim();
    let mut out = DMatrix::zeros(dim, dim);
    let mut buf = RhsBuffers::new(dim);
    lindblad_rhs_into(rho.matrix(), spec, &mut out, &mut buf);
    Ok(out)
}

/// Observable time series from a master-equation (or ensemble) run.
#[derive(Clone, Debug, Default)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    /// ⟨a†a⟩
    pub n_phonon: Vec<f64>,
    /// ⟨a⟩
    pub a_mean: Vec<C64>,
    /// Var(a + a†)
    pub x_variance: Vec<f64>,
    /// ⟨σ†σ⟩ (present only for qubit_dim = 2)
    pub qubit_excitation: Option<Vec<f64>>,
    /// Stored density matrices at requested times.
    pub snapshots: Vec<(f64, DensityOperator)>,
    /// max |Tr ρ − 1| observed at output times.
    pub trace_drift: f64,
    /// max top-Fock-level occupation observed at output times.
    pub max_top_occupation: f64,
    /// Set when max_top_occupation exceeded the truncation threshold.
    pub truncation_warning: bool,
}

/// Observables evaluated at output times.
pub(crate) struct StandardObservables {
    pub num: LinearOperator,
    pub a: LinearOperator,
    pub x: LinearOperator,
    pub x2: LinearOperator,
    pub qubit_pop: Option<LinearOperator>,
}

impl StandardObservables {
    pub fn new(config: HilbertConfig) -> Self {
        let a = annihilation(config);
        let x = a.add(&a.dagger()).expect("same config");
        let x2 = x.matmul(&x).expect("same config");
        let qubit_pop = if config.qubit_dim() == 2 {
            let sm = qubit_lowering(config).expect("qubit_dim checked");
            Some(sm.dagger().matmul(&sm).expect("same config"))
        } else {
            None
        };
        Self {
            num: number_op(config),
            a,
            x,
            x2,
            qubit_pop,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Times (must appear in `output_times`, within 1e-12 relative) at which
    /// full density matrices are stored.
    pub snapshot_times: Vec<f64>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-12,
            snapshot_times: Vec::new(),
        }
    }
}

/// Integrate the master equation from `rho0`, reporting observables at
/// `output_times` (strictly increasing, first may be 0).
pub fn evolve(
    rho0: &DensityOperator,
    spec: &MasterEquationSpec,
    output_times: &[f64],
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    if rho0.config() != spec.config() {
        return Err(Error::DimensionMismatch(
            "evolve: state and spec configs differ".into(),
        ));
    }
    let config = rho0.config();
    let dim = config.dim();
    let obs = StandardObservables::new(config);
    let mut buf = RhsBuffers::new(dim);
    let mut result = EvolutionResult {
        qubit_excitation: obs.qubit_pop.as_ref().map(|_| Vec::new()),
        ..Default::default()
    };

    let snap_match = |t: f64, opts: &EvolveOptions| {
        opts.snapshot_times
            .iter()
            .any(|&s| (s - t).abs() <= 1e-12 * (1.0 + s.abs()))
    };

    let mut rhs = |_t: f64, y: &DMatrix<C64>, dy: &mut DMatrix<C64>| {
        lindblad_rhs_into(y, spec, dy, &mut buf);
    };
    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        ..Default::default()
    };

    let record = |result: &mut EvolutionResult, t: f64, m: &DMatrix<C64>| {
        let state = DensityOperator::new(config, m.clone()).expect("dims fixed");
        record_observables(result, &obs, t, &state);
        if snap_match(t, opts) {
            result.snapshots.push((t, state));
        }
    };

    {
        let mut observe = |_k: usize, t: f64, y: &DMatrix<C64>| {
            record(&mut result, t, y);
        };
        integrate_dp5(
            &mut rhs,
            0.0,
            rho0.matrix(),
            output_times,
            &ode_opts,
            &mut observe,
        )?;
    }
    if result.truncation_warning {
        log::warn!(
            "truncation warning: top Fock occupation reached {:.3e} (threshold {:.0e}); increase n_max",
            result.max_top_occupation,
            TRUNCATION_THRESHOLD
        );
    }
    Ok(result)
}

pub(crate) fn record_observables(
    result: &mut EvolutionResult,
    obs: &StandardObservables,
    t: f64,
    state: &DensityOperator,
) {
    result.times.push(t);
    let n = obs.num.expect_rho(state).expect("dims fixed").re;
    result.n_phonon.push(n);
    result
        .a_mean
        .push(obs.a.expect_rho(state).expect("dims fixed"));
    let x1 = obs.x.expect_rho(state).expect("dims fixed").re;
    let x2 = obs.x2.expect_rho(state).expect("dims fixed").re;
    result.x_variance.push(x2 - x1 * x1);
    if let (Some(op), Some(series)) = (&obs.qubit_pop, result.qubit_excitation.as_mut()) {
        series.push(op.expect_rho(state).expect("dims fixed").re);
    }
    let drift = (state.trace().re - 1.0).abs().max(state.trace().im.abs());
    result.trace_drift = result.trace_drift.max(drift);
    let top = state.top_fock_occupation();
    result.max_top_occupation = result.max_top_occupation.max(top);
    if top > TRUNCATION_THRESHOLD {
        result.truncation_warning = true;
    }
}

/// How the steady state was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SteadyStateMethod {
    DirectSolve,
    LongTimeIntegration,
}

#[derive(Clone, Debug)]
pub struct SteadyStateReport {
    pub method: SteadyStateMethod,
    /// ‖𝓛ρ_ss‖_F
    pub residual: f64,
}

/// Solve 𝓛ρ_ss = 0.
///
/// For dim ≤ 200 this vectorizes the Liouvillian (column-major, with the top
/// row replaced by the trace constraint) and performs one sparse LU solve;
/// otherwise, or if the direct path fails its residual check, it falls back
/// to long-time integration.
pub fn steady_state(spec: &MasterEquationSpec) -> Result<(DensityOperator, SteadyStateReport)> {
    if spec.channels.iter().all(|c| c.rate == 0.0) {
        return Err(Error::InvalidParameter(
            "steady_state requires at least one dissipative channel".into(),
        ));
    }
    if spec.config().dim() <= DIRECT_SOLVE_MAX_DIM {
        match steady_state_direct(spec) {
            Ok(rho) => {
                let residual = lindblad_rhs(&rho, spec)?.norm();
                if residual < 1e-9 * rate_scale(spec) {
                    return Ok((
                        rho,
                        SteadyStateReport {
                            method: SteadyStateMethod::DirectSolve,
                            residual,
                        },
                    ));
                }
                log::warn!(
                    "direct steady-state residual {residual:.3e} too large; falling back to long-time integration"
                );
            }
            Err(e) => {
                log::warn!("direct steady-state solve failed ({e}); falling back to long-time integration");
            }
        }
    }
    let rho = steady_state_longtime(spec)?;
    let residual = lindblad_rhs(&rho, spec)?.norm();
    Ok((
        rho,
        SteadyStateReport {
            method: SteadyStateMethod::LongTimeIntegration,
            residual,
        },
    ))
}

/// Characteristic rate used to make residual thresholds scale-free.
fn rate_scale(spec: &MasterEquationSpec) -> f64 {
    let h = spec.hamiltonian.inf_norm();
    let g = spec
        .channels
        .iter()
        .map(|c| c.rate * c.odo.inf_norm())
        .fold(0.0f64, f64::max);
    (h + g).max(1.0)
}

/// Direct vectorized solve (exposed for cross-validation).
pub fn steady_state_direct(spec: &MasterEquationSpec) -> Result<DensityOperator> {
    use faer::sparse::{SparseColMat, Triplet};
    type Fc = faer::c64;

    let d = spec.config().dim();
    let nn = d * d;
    let idx = |i: usize, j: usize| i + j * d; // column-major vec(ρ)

    let mut trips: Vec<Triplet<usize, usize, Fc>> = Vec::new();
    let mut push = |r: usize, c: usize, v: C64| {
        if r != 0 {
            trips.push(Triplet::new(r, c, Fc::new(v.re, v.im)));
        }
    };

    // −i(Hρ − ρH)
    for (i, k, h) in spec.hamiltonian.iter() {
        let v = C64::new(0.0, -1.0) * h;
        for j in 0..d {
            push(idx(i, j), idx(k, j), v);
        }
    }
    for (k, j, h) in spec.hamiltonian.iter() {
        let v = C64::new(0.0, 1.0) * h;
        for i in 0..d {
            push(idx(i, j), idx(i, k), v);
        }
    }
    for ch in &spec.channels {
        if ch.rate == 0.0 {
            continue;
        }
        let g = ch.rate;
        // γ OρO†
        for (i, k, v1) in ch.op.iter() {
            for (j, l, v2) in ch.op.iter() {
                push(idx(i, j), idx(k, l), C64::new(g, 0.0) * v1 * v2.conj());
            }
        }
        // −γ/2 (O†Oρ + ρO†O)
        for (i, k, w) in ch.odo.iter() {
            let v = C64::new(-g / 2.0, 0.0) * w;
            for j in 0..d {
                push(idx(i, j), idx(k, j), v);
            }
        }
        for (k, j, w) in ch.odo.iter() {
            let v = C64::new(-g / 2.0, 0.0) * w;
            for i in 0..d {
                push(idx(i, j), idx(i, k), v);
            }
        }
    }
    // Row 0 — trace constraint Σ_k ρ_kk = 1.
    for k in 0..d {
        trips.push(Triplet::new(0usize, idx(k, k), Fc::new(1.0, 0.0)));
    }

    let lmat = SparseColMat::<usize, Fc>::try_new_from_triplets(nn, nn, &trips)
        .map_err(|e| Error::Numerical(format!("Liouvillian assembly failed: {e:?}")))?;
    let lu = lmat
        .sp_lu()
        .map_err(|e| Error::Numerical(format!("sparse LU failed: {e:?}")))?;

    let mut rhs = faer::Mat::<Fc>::zeros(nn, 1);
    rhs[(0, 0)] = Fc::new(1.0, 0.0);
    use faer::linalg::solvers::Solve;
    let x = lu.solve(&rhs);

    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            let v = x[(idx(i, j), 0)];
            m[(i, j)] = C64::new(v.re, v.im);
        }
    }
    let mut rho = DensityOperator::new(spec.config(), m)?;
    rho.hermitize();
    Ok(rho)
}

/// Long-time integration fallback (exposed for cross-validation).
pub fn steady_state_longtime(spec: &MasterEquationSpec) -> Result<DensityOperator> {
    let d = spec.config().dim();
    // Start from the maximally mixed state: overlaps every basin.
    let m = DMatrix::from_diagonal_element(d, d, C64::new(1.0 / d as f64, 0.0));
    let mut rho = DensityOperator::new(spec.config(), m)?;

    let slowest = spec
        .channels
        .iter()
        .filter(|c| c.rate > 0.0)
        .map(|c| c.rate)
        .fold(f64::INFINITY, f64::min);
    let chunk = 10.0 / slowest;
    let scale = rate_scale(spec);
    let mut buf = RhsBuffers::new(d);
    let mut dm = DMatrix::zeros(d, d);
    let opts_snap = EvolveOptions {
        snapshot_times: vec![chunk],
        ..EvolveOptions::default()
    };
    for _ in 0..500 {
        let res = evolve(&rho, spec, &[chunk], &opts_snap)?;
        rho = res.snapshots.into_iter().next().map(|(_, s)| s).ok_or_else(|| {
            Error::Numerical("long-time steady-state integration lost its snapshot".into())
        })?;
        lindblad_rhs_into(rho.matrix(), spec, &mut dm, &mut buf);
        if dm.norm() < 1e-10 * scale {
            rho.hermitize();
            return Ok(rho);
        }
    }
    Err(Error::Numerical(
        "long-time steady-state integration did not converge".into(),
    ))
}

/// Var(X) with X = a + a† on the state's own space (full or reduced).
pub fn position_variance(rho: &DensityOperator) -> f64 {
    let a = annihilation(rho.config());
    let x = a.add(&a.dagger()).expect("same config");
    let x2 = x.matmul(&x).expect("same config");
    let m1 = x.expect_rho(rho).expect("same config").re;
    let m2 = x2.expect_rho(rho).expect("same config").re;
    m2 - m1 * m1
}
