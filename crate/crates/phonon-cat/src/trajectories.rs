//! Monte-Carlo wavefunction (quantum-jump) unfolding of the master equation.
//!
//! The fixed-step first-order scheme: at each step of size dt, each channel i
//! draws one uniform r_i and jumps (|ψ⟩ ∝ O_i|ψ⟩) if r_i < p_i with
//! p_i = γ_i dt ⟨ψ|O_i†O_i|ψ⟩; otherwise |ψ⟩ ∝ e^{−iH_eff dt}|ψ⟩ with the
//! non-Hermitian H_eff = H − (i/2)Σ γ_i O_i†O_i. dt is halved (and the
//! trajectory deterministically restarted) whenever any p_i reaches 0.01.

use crate::dynamics::{EvolutionResult, MasterEquationSpec, StandardObservables, TRUNCATION_THRESHOLD};
use crate::hilbert::{Ket, LinearOperator};
use crate::{C64, Error, Result};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

/// One recorded quantum jump.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub channel_index: usize,
}

/// One stochastic unfolding; bit-exactly reproducible from (seed, inputs).
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub seed: u64,
    /// Observable series on the requested output grid.
    pub series: EvolutionResult,
    pub jumps: Vec<JumpRecord>,
    /// Pure-state snapshots at requested output times.
    pub snapshots: Vec<(f64, Ket)>,
    /// Step size actually used (after any halvings).
    pub dt_used: f64,
}

/// SplitMix64 round; used to derive independent per-trajectory streams.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic per-trajectory seed, independent of scheduling.
pub fn derive_seed(master_seed: u64, run_index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(run_index.wrapping_add(0xabcdef12345)))
}

#[derive(Clone, Debug)]
pub struct McwfOptions {
    /// Requested step; reduced automatically if the propagator or jump
    /// probabilities require it.
    pub dt: f64,
    /// Output times at which pure-state snapshots are kept.
    pub snapshot_times: Vec<f64>,
}

impl McwfOptions {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            snapshot_times: Vec::new(),
        }
    }
}

/// Suggested dt so that ‖H_eff‖·dt < 0.05.
pub fn default_dt(spec: &MasterEquationSpec) -> f64 {
    let h_eff = effective_hamiltonian(spec);
    0.05 / h_eff.inf_norm().max(1e-300)
}

/// H_eff = H − (i/2) Σ γ_i O_i†O_i.
pub fn effective_hamiltonian(spec: &MasterEquationSpec) -> LinearOperator {
    let mut h = spec.hamiltonian.clone();
    for ch in &spec.channels {
        if ch.rate > 0.0 {
            h = h
                .add(&ch.odo().scale(C64::new(0.0, -ch.rate / 2.0)))
                .expect("same config");
        }
    }
    h
}

/// Run one trajectory from `psi0`, reporting observables at `output_times`.
pub fn mcwf_run(
    psi0: &Ket,
    spec: &MasterEquationSpec,
    output_times: &[f64],
    opts: &McwfOptions,
    seed: u64,
) -> Result<TrajectoryRecord> {
    if psi0.config() != spec.config() {
        return Err(Error::DimensionMismatch(
            "mcwf_run: state and spec configs differ".into(),
        ));
    }
    if output_times.is_empty() {
        return Err(Error::InvalidParameter("no output times requested".into()));
    }
    for w in output_times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidParameter(
                "output times must be strictly increasing".into(),
            ));
        }
    }
    let h_eff = effective_hamiltonian(spec);
    let mut dt = opts.dt.min(0.05 / h_eff.inf_norm().max(1e-300));
    for _halving in 0..24 {
        match mcwf_attempt(psi0, spec, &h_eff, output_times, opts, seed, dt)? {
            Some(rec) => return Ok(rec),
            None => dt *= 0.5, // a jump probability reached 0.01: restart
        }
    }
    Err(Error::Numerical(
        "mcwf_run: step rejection cascade (dt halved 24 times)".into(),
    ))
}

/// One deterministic attempt at fixed dt; Ok(None) requests a dt halving.
#[allow(clippy::too_many_arguments)]
fn mcwf_attempt(
    psi0: &Ket,
    spec: &MasterEquationSpec,
    h_eff: &LinearOperator,
    output_times: &[f64],
    opts: &McwfOptions,
    seed: u64,
    dt: f64,
) -> Result<Option<TrajectoryRecord>> {
    let config = psi0.config();
    let obs = StandardObservables::new(config);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut psi = psi0.clone();
    psi.normalize()?;

    let mut series = EvolutionResult {
        qubit_excitation: if config.qubit_dim() == 2 {
            Some(Vec::new())
        } else {
            None
        },
        ..Default::default()
    };
    let mut jumps = Vec::new();
    let mut snapshots = Vec::new();

    let mut work = DVector::<C64>::zeros(config.dim());
    let mut term = DVector::<C64>::zeros(config.dim());
    let mut accum = DVector::<C64>::zeros(config.dim());

    let mut t = 0.0f64;
    let emit = |series: &mut EvolutionResult,
                    snapshots: &mut Vec<(f64, Ket)>,
                    t: f64,
                    psi: &Ket| {
        record_ket_observables(series, &obs, t, psi);
        if opts
            .snapshot_times
            .iter()
            .any(|&s| (s - t).abs() <= 1e-12 * (1.0 + s.abs()))
        {
            snapshots.push((t, psi.clone()));
        }
    };

    let mut out_iter = output_times.iter().peekable();
    while let Some(&&t_out) = out_iter.peek() {
        if t_out <= t + 1e-300 {
            emit(&mut series, &mut snapshots, t, &psi);
            out_iter.next();
            continue;
        }
        let span = t_out - t;
        let n_sub = (span / dt).ceil().max(1.0) as usize;
        let h = span / n_sub as f64;
        for step in 0..n_sub {
            // jump probabilities from the current (normalized) state
            let mut jumped = false;
            let mut jump_idx = 0usize;
            for (i, ch) in spec.channels.iter().enumerate() {
                if ch.rate == 0.0 {
                    // still consume no draw for zero-rate channels: they can
                    // never fire and contribute nothing to the statistics
                    continue;
                }
                let p = ch.rate * h * ch.odo().expect_ket(&psi)?.re;
                if p >= 0.01 {
                    return Ok(None);
                }
                let r: f64 = rng.gen();
                if !jumped && r < p {
                    jumped = true;
                    jump_idx = i;
                }
            }
            let t_next = t + h * (step + 1) as f64;
            if jumped {
                let ch = &spec.channels[jump_idx];
                ch.op.matvec_into(psi.amplitudes(), &mut work);
                psi.amplitudes_mut().copy_from(&work);
                psi.normalize().map_err(|_| {
                    Error::Numerical("mcwf jump produced a zero state".into())
                })?;
                jumps.push(JumpRecord {
                    time: t_next,
                    channel_index: jump_idx,
                });
            } else {
                propagate_taylor(h_eff, h, psi.amplitudes_mut(), &mut accum, &mut term, &mut work);
                psi.normalize().map_err(|_| {
                    Error::Numerical("mcwf norm underflow during no-jump evolution".into())
                })?;
            }
        }
        t = t_out;
        emit(&mut series, &mut snapshots, t, &psi);
        out_iter.next();
    }

    if series.truncation_warning {
        log::warn!(
            "mcwf trajectory truncation warning: top Fock occupation {:.3e}",
            series.max_top_occupation
        );
    }
    Ok(Some(TrajectoryRecord {
        seed,
        series,
        jumps,
        snapshots,
        dt_used: dt,
    }))
}

/// ψ ← e^{−iH_eff h}ψ by truncated Taylor series (‖H_eff‖h ≲ 0.05 keeps this
/// a handful of terms at full precision).
fn propagate_taylor(
    h_eff: &LinearOperator,
    h: f64,
    psi: &mut DVector<C64>,
    accum: &mut DVector<C64>,
    term: &mut DVector<C64>,
    work: &mut DVector<C64>,
) {
    accum.copy_from(psi);
    term.copy_from(psi);
    let norm0 = psi.norm();
    for k in 1..=30 {
        h_eff.matvec_into(term, work);
        let coeff = C64::new(0.0, -h / k as f64);
        term.copy_from(work);
        *term *= coeff;
        *accum += &*term;
        if term.norm() <= 1e-16 * norm0 {
            break;
        }
    }
    psi.copy_from(accum);
}

fn record_ket_observables(
    series: &mut EvolutionResult,
    obs: &StandardObservables,
    t: f64,
    psi: &Ket,
) {
    series.times.push(t);
    series
        .n_phonon
        .push(obs.num.expect_ket(psi).expect("config fixed").re);
    series
        .a_mean
        .push(obs.a.expect_ket(psi).expect("config fixed"));
    let x1 = obs.x.expect_ket(psi).expect("config fixed").re;
    let x2 = obs.x2.expect_ket(psi).expect("config fixed").re;
    series.x_variance.push(x2 - x1 * x1);
    if let (Some(op), Some(v)) = (&obs.qubit_pop, series.qubit_excitation.as_mut()) {
        v.push(op.expect_ket(psi).expect("config fixed").re);
    }
    let qd = psi.config().qubit_dim();
    let nm = psi.config().n_max();
    let top: f64 = (0..qd)
        .map(|q| psi.amplitudes()[psi.config().index(nm - 1, q)].norm_sqr())
        .sum();
    series.max_top_occupation = series.max_top_occupation.max(top);
    if top > TRUNCATION_THRESHOLD {
        series.truncation_warning = true;
    }
    let drift = (psi.norm() - 1.0).abs();
    series.trace_drift = series.trace_drift.max(drift);
}

/// Run `n_traj` independent trajectories with per-index derived seeds,
/// in parallel, returned in index order.
pub fn run_ensemble(
    psi0: &Ket,
    spec: &MasterEquationSpec,
    output_times: &[f64],
    opts: &McwfOptions,
    master_seed: u64,
    n_traj: usize,
) -> Result<Vec<TrajectoryRecord>> {
    (0..n_traj)
        .into_par_iter()
        .map(|i| mcwf_run(psi0, spec, output_times, opts, derive_seed(master_seed, i as u64)))
        .collect()
}

/// Ensemble mean ± standard error per observable per time point.
#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean_n: Vec<f64>,
    pub stderr_n: Vec<f64>,
    pub mean_a: Vec<C64>,
    pub mean_qubit: Option<Vec<f64>>,
    pub stderr_qubit: Option<Vec<f64>>,
    pub n_trajectories: usize,
}

/// Pairwise (cascade) summation: deterministic, order-independent reduction.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub fn ensemble_average(runs: &[TrajectoryRecord]) -> Result<EnsembleResult> {
    if runs.is_empty() {
        return Err(Error::InvalidParameter("empty ensemble".into()));
    }
    let times = runs[0].series.times.clone();
    for r in runs {
        if r.series.times.len() != times.len()
            || r.series
                .times
                .iter()
                .zip(&times)
                .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
        {
            return Err(Error::DimensionMismatch(
                "ensemble_average: trajectories have mismatched time grids".into(),
            ));
        }
    }
    let m = runs.len();
    let npts = times.len();
    let mean_stderr = |get: &dyn Fn(&TrajectoryRecord, usize) -> f64| -> (Vec<f64>, Vec<f64>) {
        let mut means = Vec::with_capacity(npts);
        let mut errs = Vec::with_capacity(npts);
        let mut vals = vec![0.0; m];
        let mut sqs = vec![0.0; m];
        for k in 0..npts {
            for (j, r) in runs.iter().enumerate() {
                let v = get(r, k);
                vals[j] = v;
                sqs[j] = v * v;
            }
            let mean = pairwise_sum(&vals) / m as f64;
            let var = if m > 1 {
                ((pairwise_sum(&sqs) - m as f64 * mean * mean) / (m as f64 - 1.0)).max(0.0)
            } else {
                0.0
            };
            means.push(mean);
            errs.push((var / m as f64).sqrt());
        }
        (means, errs)
    };
    let (mean_n, stderr_n) = mean_stderr(&|r, k| r.series.n_phonon[k]);
    let mean_a: Vec<C64> = (0..npts)
        .map(|k| {
            let re: Vec<f64> = runs.iter().map(|r| r.series.a_mean[k].re).collect();
            let im: Vec<f64> = runs.iter().map(|r| r.series.a_mean[k].im).collect();
            C64::new(pairwise_sum(&re) / m as f64, pairwise_sum(&im) / m as f64)
        })
        .collect();
    let (mean_qubit, stderr_qubit) = if runs[0].series.qubit_excitation.is_some() {
        let (mu, se) = mean_stderr(&|r, k| r.series.qubit_excitation.as_ref().unwrap()[k]);
        (Some(mu), Some(se))
    } else {
        (None, None)
    };
    Ok(EnsembleResult {
        times,
        mean_n,
        stderr_n,
        mean_a,
        mean_qubit,
        stderr_qubit,
        n_trajectories: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, EvolveOptions, MasterEquationSpec};
    use crate::hilbert::{annihilation, HilbertConfig};
    use crate::model::{build_two_phonon_jc, SystemParams};

    #[test]
    fn zero_rates_reproduce_unitary_evolution() {
        let cfg = HilbertConfig::new(8, 2).unwrap();
        let params = SystemParams {
            g2: 3.0,
            omega: 0.0,
            delta_sigma: 0.0,
            delta_m: 0.0,
            gamma_m: 0.0,
            n_th: 0.0,
            gamma_z: 0.0,
        };
        let h = build_two_phonon_jc(&params, cfg).unwrap();
        let spec = MasterEquationSpec::new(h, vec![]).unwrap();
        let psi0 = Ket::basis_state(cfg, 0, 1).unwrap();
        let times: Vec<f64> = (1..=8).map(|k| 0.05 * k as f64).collect();
        let rec = mcwf_run(&psi0, &spec, &times, &McwfOptions::with_dt(1e-3), 42).unwrap();
        assert!(rec.jumps.is_empty());
        let res = evolve(&psi0.to_density(), &spec, &times, &EvolveOptions::default()).unwrap();
        for k in 0..times.len() {
            assert!(
                (rec.series.n_phonon[k] - res.n_phonon[k]).abs() < 1e-5,
                "k={k}: {} vs {}",
                rec.series.n_phonon[k],
                res.n_phonon[k]
            );
        }
    }

    #[test]
    fn deterministic_replay() {
        let cfg = HilbertConfig::new(6, 2).unwrap();
        let params = SystemParams {
            g2: 1.0,
            omega: 2.0,
            delta_sigma: 0.0,
            delta_m: 0.0,
            gamma_m: 0.4,
            n_th: 1.0,
            gamma_z: 0.8,
        };
        let h = build_two_phonon_jc(&params, cfg).unwrap();
        let spec =
            MasterEquationSpec::with_standard_channels(h, params.gamma_m, params.n_th, params.gamma_z)
                .unwrap();
        let psi0 = Ket::basis_state(cfg, 0, 0).unwrap();
        let times: Vec<f64> = (1..=20).map(|k| 0.25 * k as f64).collect();
        let opts = McwfOptions::with_dt(1e-3);
        let r1 = mcwf_run(&psi0, &spec, &times, &opts, 7).unwrap();
        let r2 = mcwf_run(&psi0, &spec, &times, &opts, 7).unwrap();
        assert_eq!(r1.jumps, r2.jumps);
        assert_eq!(r1.series.n_phonon, r2.series.n_phonon);
        // bit-exactness of amplitudes via a snapshot
        let opts_snap = McwfOptions {
            dt: 1e-3,
            snapshot_times: vec![5.0],
        };
        let s1 = mcwf_run(&psi0, &spec, &times, &opts_snap, 7).unwrap();
        let s2 = mcwf_run(&psi0, &spec, &times, &opts_snap, 7).unwrap();
        assert_eq!(s1.snapshots[0].1.amplitudes(), s2.snapshots[0].1.amplitudes());
        // identical seeds → zero ensemble variance
        let avg = ensemble_average(&[r1.clone(), r2]).unwrap();
        for se in avg.stderr_n {
            assert_eq!(se, 0.0);
        }
    }

    #[test]
    fn exponential_waiting_times() {
        // H = 0, channel (a, γ), ψ0 = |1⟩: first-jump time ~ Exp(γ).
        let cfg = HilbertConfig::oscillator(3).unwrap();
        let gamma = 2.0;
        let spec = MasterEquationSpec::new(
            LinearOperator::zeros(cfg),
            vec![(annihilation(cfg), gamma)],
        )
        .unwrap();
        let psi0 = Ket::basis_state(cfg, 1, 0).unwrap();
        let t_end = 6.0 / gamma;
        let times = vec![t_end];
        let opts = McwfOptions::with_dt(5e-4 / gamma);
        let n_runs = 1000;
        let mut waits: Vec<f64> = Vec::new();
        for i in 0..n_runs {
            let rec = mcwf_run(&psi0, &spec, &times, &opts, derive_seed(99, i)).unwrap();
            if let Some(j) = rec.jumps.first() {
                waits.push(j.time);
            }
        }
        // censored tail beyond t_end is tiny (e^{-12}); KS against the
        // exponential CDF
        waits.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = waits.len() as f64;
        let mut d = 0.0f64;
        for (k, &t) in waits.iter().enumerate() {
            let cdf = 1.0 - (-gamma * t).exp();
            let emp_hi = (k + 1) as f64 / n;
            let emp_lo = k as f64 / n;
            d = d.max((cdf - emp_lo).abs()).max((emp_hi - cdf).abs());
        }
        // critical value at significance 0.01
        let crit = 1.628 / n.sqrt();
        assert!(d < crit, "KS statistic {d:.4} >= {crit:.4}");
    }

    #[test]
    fn ensemble_matches_master_equation() {
        let cfg = HilbertConfig::new(6, 2).unwrap();
        let params = SystemParams {
            g2: 1.5,
            omega: 1.0,
            delta_sigma: 0.0,
            delta_m: 0.0,
            gamma_m: 0.5,
            n_th: 0.8,
            gamma_z: 1.0,
        };
        let h = build_two_phonon_jc(&params, cfg).unwrap();
        let spec =
            MasterEquationSpec::with_standard_channels(h, params.gamma_m, params.n_th, params.gamma_z)
                .unwrap();
        let psi0 = Ket::basis_state(cfg, 0, 1).unwrap();
        let times: Vec<f64> = (1..=10).map(|k| 0.3 * k as f64).collect();
        let opts = McwfOptions::with_dt(2e-3);
        let runs = run_ensemble(&psi0, &spec, &times, &opts, 1234, 300).unwrap();
        let avg = ensemble_average(&runs).unwrap();
        let exact = evolve(&psi0.to_density(), &spec, &times, &EvolveOptions::default()).unwrap();
        let mut ok = 0;
        for k in 0..times.len() {
            let dev = (avg.mean_n[k] - exact.n_phonon[k]).abs();
            if dev <= 3.0 * avg.stderr_n[k].max(1e-6) {
                ok += 1;
            }
        }
        assert!(
            ok as f64 >= 0.9 * times.len() as f64,
            "only {ok}/{} points within 3σ",
            times.len()
        );
    }

    #[test]
    fn dt_halving_convergence() {
        let cfg = HilbertConfig::new(5, 2).unwrap();
        let params = SystemParams {
            g2: 1.0,
            omega: 1.5,
            delta_sigma: 0.0,
            delta_m: 0.0,
            gamma_m: 0.6,
            n_th: 0.5,
            gamma_z: 0.7,
        };
        let h = build_two_phonon_jc(&params, cfg).unwrap();
        let spec =
            MasterEquationSpec::with_standard_channels(h, params.gamma_m, params.n_th, params.gamma_z)
                .unwrap();
        let psi0 = Ket::basis_state(cfg, 0, 1).unwrap();
        let times = vec![1.0, 2.0, 3.0];
        let m = 200;
        let coarse = run_ensemble(&psi0, &spec, &times, &McwfOptions::with_dt(4e-3), 5, m).unwrap();
        let fine = run_ensemble(&psi0, &spec, &times, &McwfOptions::with_dt(2e-3), 5, m).unwrap();
        let ac = ensemble_average(&coarse).unwrap();
        let af = ensemble_average(&fine).unwrap();
        for k in 0..times.len() {
            let joint = (ac.stderr_n[k].powi(2) + af.stderr_n[k].powi(2)).sqrt();
            assert!(
                (ac.mean_n[k] - af.mean_n[k]).abs() < 4.0 * joint.max(1e-3),
                "k={k}: {} vs {}",
                ac.mean_n[k],
                af.mean_n[k]
            );
        }
    }

    #[test]
    fn unbiasedness_convergence_rate() {
        // |ensemble mean − exact| shrinks like 1/√M.
        let cfg = HilbertConfig::new(4, 2).unwrap();
        let params = SystemParams {
            g2: 1.0,
            omega: 1.0,
            delta_sigma: 0.0,
            delta_m: 0.0,
            gamma_m: 0.8,
            n_th: 0.5,
            gamma_z: 1.0,
        };
        let h = build_two_phonon_jc(&params, cfg).unwrap();
        let spec =
            MasterEquationSpec::with_standard_channels(h, params.gamma_m, params.n_th, params.gamma_z)
                .unwrap();
        let psi0 = Ket::basis_state(cfg, 0, 1).unwrap();
        let times = vec![2.0];
        let exact = evolve(&psi0.to_density(), &spec, &times, &EvolveOptions::default()).unwrap();
        let target = exact.n_phonon[0];
        let opts = McwfOptions::with_dt(2e-3);
        // average the absolute error over several independent replicas per M
        // to tame the noise of a single realization
        let ms = [50usize, 100, 200, 400];
        let mut errs = Vec::new();
        for (mi, &m) in ms.iter().enumerate() {
            let mut acc = 0.0;
            let reps = 6;
            for rep in 0..reps {
                let seed = 1000 + (mi * 97 + rep) as u64;
                let runs = run_ensemble(&psi0, &spec, &times, &opts, seed, m).unwrap();
                let avg = ensemble_average(&runs).unwrap();
                acc += (avg.mean_n[0] - target).abs();
            }
            errs.push(acc / reps as f64);
        }
        // least-squares slope of log(err) vs log(M)
        let xs: Vec<f64> = ms.iter().map(|&m| (m as f64).ln()).collect();
        let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let slope = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - xm) * (y - ym))
            .sum::<f64>()
            / xs.iter().map(|x| (x - xm).powi(2)).sum::<f64>();
        assert!(
            (slope + 0.5).abs() < 0.35,
            "convergence slope {slope:.3} not ≈ −0.5 (errors: {errs:?})"
        );
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|k| ((k * 37 % 101) as f64) * 0.01 - 0.3).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
    }
}
