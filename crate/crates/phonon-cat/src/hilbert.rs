//! Truncated Fock ⊗ qubit Hilbert space, sparse operator algebra, and state
//! containers.
//!
//! Tensor ordering: the oscillator index varies slowest, i.e. the basis state
//! |n⟩⊗|q⟩ sits at flat index `n * qubit_dim + q`. This keeps oscillator
//! blocks contiguous for the partial-trace and Wigner kernels.

use crate::{C64, Error, Result};
use nalgebra::{DMatrix, DVector};

/// Dimensions of the truncated oscillator ⊗ qubit space.
///
/// `qubit_dim` is 2 for the effective two-level system, 3 for the lab-frame
/// spin-1 model, and 1 for reduced oscillator-only states (as produced by the
/// partial trace).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct HilbertConfig {
    n_max: usize,
    qubit_dim: usize,
}

impl HilbertConfig {
    pub fn new(n_max: usize, qubit_dim: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_max must be >= 2, got {n_max}"
            )));
        }
        if !(1..=3).contains(&qubit_dim) {
            return Err(Error::InvalidParameter(format!(
                "qubit_dim must be 1, 2 or 3, got {qubit_dim}"
            )));
        }
        Ok(Self { n_max, qubit_dim })
    }

    /// Oscillator-only space (qubit_dim = 1).
    pub fn oscillator(n_max: usize) -> Result<Self> {
        Self::new(n_max, 1)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn qubit_dim(&self) -> usize {
        self.qubit_dim
    }

    /// Total dimension `n_max * qubit_dim`.
    pub fn dim(&self) -> usize {
        self.n_max * self.qubit_dim
    }

    /// Flat index of |n⟩⊗|q⟩.
    pub fn index(&self, n: usize, q: usize) -> usize {
        debug_assert!(n < self.n_max && q < self.qubit_dim);
        n * self.qubit_dim + q
    }
}

/// Sparse complex square matrix in CSR form, tagged with its Hilbert space.
///
/// The sparsity structure is immutable after construction; all algebra
/// returns new operators.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    config: HilbertConfig,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl LinearOperator {
    /// Build from (row, col, value) triplets; duplicates are summed and exact
    /// zeros dropped.
    pub fn from_triplets(config: HilbertConfig, triplets: &[(usize, usize, C64)]) -> Result<Self> {
        let dim = config.dim();
        let mut entries: Vec<(usize, usize, C64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({r},{c}) outside dimension {dim}"
                )));
            }
            entries.push((r, c, v));
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut i = 0;
        while i < entries.len() {
            let (r, c, mut v) = entries[i];
            i += 1;
            while i < entries.len() && entries[i].0 == r && entries[i].1 == c {
                v += entries[i].2;
                i += 1;
            }
            if v != C64::new(0.0, 0.0) {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            config,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(config: HilbertConfig) -> Self {
        Self {
            config,
            row_ptr: vec![0; config.dim() + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(config: HilbertConfig) -> Self {
        let dim = config.dim();
        Self {
            config,
            row_ptr: (0..=dim).collect(),
            col_idx: (0..dim).collect(),
            values: vec![C64::new(1.0, 0.0); dim],
        }
    }

    /// Wrap a dense matrix, keeping every nonzero entry.
    pub fn from_dense(config: HilbertConfig, m: &DMatrix<C64>) -> Result<Self> {
        if m.nrows() != config.dim() || m.ncols() != config.dim() {
            return Err(Error::DimensionMismatch(format!(
                "dense matrix {}x{} vs config dim {}",
                m.nrows(),
                m.ncols(),
                config.dim()
            )));
        }
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != C64::new(0.0, 0.0) {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(config, &t)
    }

    pub fn config(&self) -> HilbertConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterate stored entries as (row, col, value).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    /// y = A x (allocating).
    pub fn matvec(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut y = DVector::zeros(self.dim());
        self.matvec_into(x, &mut y);
        y
    }

    /// y = A x into a caller-provided buffer (hot path of the jump unfolding).
    pub fn matvec_into(&self, x: &DVector<C64>, y: &mut DVector<C64>) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        for r in 0..self.dim() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    /// A · M for dense M.
    pub fn mul_dense(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim(), m.ncols());
        self.mul_dense_into(m, &mut out);
        out
    }

    pub fn mul_dense_into(&self, m: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        debug_assert_eq!(m.nrows(), self.dim());
        for c in 0..m.ncols() {
            let col = m.column(c);
            for r in 0..self.dim() {
                let mut acc = C64::new(0.0, 0.0);
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.values[k] * col[self.col_idx[k]];
                }
                out[(r, c)] = acc;
            }
        }
    }

    /// M · A for dense M.
    pub fn right_mul_dense(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(m.nrows(), self.dim());
        self.right_mul_dense_into(m, &mut out);
        out
    }

    pub fn right_mul_dense_into(&self, m: &DMatrix<C64>, out: &mut DMatrix<C64>) {
        debug_assert_eq!(m.ncols(), self.dim());
        out.fill(C64::new(0.0, 0.0));
        for k_row in 0..self.dim() {
            for k in self.row_ptr[k_row]..self.row_ptr[k_row + 1] {
                let c = self.col_idx[k];
                let v = self.values[k];
                let src = m.column(k_row).clone_owned();
                let mut dst = out.column_mut(c);
                dst.axpy(v, &src, C64::new(1.0, 0.0));
            }
        }
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let t: Vec<(usize, usize, C64)> =
            self.iter().map(|(r, c, v)| (c, r, v.conj())).collect();
        Self::from_triplets(self.config, &t).expect("dagger preserves dimensions")
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.config != other.config {
            return Err(Error::DimensionMismatch(
                "operator addition with mismatched configs".into(),
            ));
        }
        let mut t: Vec<(usize, usize, C64)> = self.iter().collect();
        t.extend(other.iter());
        Self::from_triplets(self.config, &t)
    }

    /// Sparse-sparse product A · B.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.config != other.config {
            return Err(Error::DimensionMismatch(
                "operator product with mismatched configs".into(),
            ));
        }
        let dim = self.dim();
        let mut acc: Vec<C64> = vec![C64::new(0.0, 0.0); dim];
        let mut touched: Vec<usize> = Vec::new();
        let mut t: Vec<(usize, usize, C64)> = Vec::new();
        for r in 0..dim {
            touched.clear();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let mid = self.col_idx[k];
                let va = self.values[k];
                for j in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    let c = other.col_idx[j];
                    if acc[c] == C64::new(0.0, 0.0) {
                        touched.push(c);
                    }
                    acc[c] += va * other.values[j];
                }
            }
            for &c in &touched {
                if acc[c] != C64::new(0.0, 0.0) {
                    t.push((r, c, acc[c]));
                }
                acc[c] = C64::new(0.0, 0.0);
            }
        }
        Self::from_triplets(self.config, &t)
    }

    /// Kronecker product; the result lives on (n_max = dim(A), qubit_dim = dim(B)).
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let config = HilbertConfig::new(self.dim(), other.dim())?;
        let db = other.dim();
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (ra, ca, va) in self.iter() {
            for (rb, cb, vb) in other.iter() {
                t.push((ra * db + rb, ca * db + cb, va * vb));
            }
        }
        Self::from_triplets(config, &t)
    }

    /// Maximum absolute row sum (induced infinity norm); used for step sizing.
    pub fn inf_norm(&self) -> f64 {
        let mut best = 0.0f64;
        for r in 0..self.dim() {
            let s: f64 = (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(|k| self.values[k].norm())
                .sum();
            best = best.max(s);
        }
        best
    }

    /// ⟨ψ|A|ψ⟩.
    pub fn expect_ket(&self, psi: &Ket) -> Result<C64> {
        if psi.config != self.config {
            return Err(Error::DimensionMismatch("expect_ket config mismatch".into()));
        }
        let y = self.matvec(&psi.amplitudes);
        Ok(psi.amplitudes.dotc(&y))
    }

    /// Tr(ρ A) = Σ_{rc} A_{rc} ρ_{cr}.
    pub fn expect_rho(&self, rho: &DensityOperator) -> Result<C64> {
        if rho.config != self.config {
            return Err(Error::DimensionMismatch("expect_rho config mismatch".into()));
        }
        let mut acc = C64::new(0.0, 0.0);
        for (r, c, v) in self.iter() {
            acc += v * rho.matrix[(c, r)];
        }
        Ok(acc)
    }
}

/// Pure state on a `HilbertConfig`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket {
    config: HilbertConfig,
    amplitudes: DVector<C64>,
}

impl Ket {
    pub fn new(config: HilbertConfig, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != config.dim() {
            return Err(Error::DimensionMismatch(format!(
                "ket length {} vs config dim {}",
                amplitudes.len(),
                config.dim()
            )));
        }
        Ok(Self { config, amplitudes })
    }

    /// Basis state |n⟩⊗|q⟩.
    pub fn basis_state(config: HilbertConfig, n: usize, q: usize) -> Result<Self> {
        if n >= config.n_max() || q >= config.qubit_dim() {
            return Err(Error::InvalidParameter(format!(
                "basis state ({n},{q}) outside config"
            )));
        }
        let mut amp = DVector::zeros(config.dim());
        amp[config.index(n, q)] = C64::new(1.0, 0.0);
        Ok(Self {
            config,
            amplitudes: amp,
        })
    }

    /// |osc⟩ ⊗ (qubit amplitude vector).
    pub fn from_osc_qubit(osc: &Ket, qubit_amps: &[C64]) -> Result<Self> {
        if osc.config.qubit_dim() != 1 {
            return Err(Error::InvalidParameter(
                "from_osc_qubit expects an oscillator-only ket".into(),
            ));
        }
        let config = HilbertConfig::new(osc.config.n_max(), qubit_amps.len())?;
        let mut amp = DVector::zeros(config.dim());
        for n in 0..config.n_max() {
            for q in 0..config.qubit_dim() {
                amp[config.index(n, q)] = osc.amplitudes[n] * qubit_amps[q];
            }
        }
        Ok(Self {
            config,
            amplitudes: amp,
        })
    }

    pub fn config(&self) -> HilbertConfig {
        self.config
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut DVector<C64> {
        &mut self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(Error::Numerical("cannot normalize zero ket".into()));
        }
        self.amplitudes /= C64::new(n, 0.0);
        Ok(())
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Ket) -> Result<C64> {
        if self.config != other.config {
            return Err(Error::DimensionMismatch("inner product config mismatch".into()));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn to_density(&self) -> DensityOperator {
        let d = self.config.dim();
        let mut m = DMatrix::zeros(d, d);
        for r in 0..d {
            for c in 0..d {
                m[(r, c)] = self.amplitudes[r] * self.amplitudes[c].conj();
            }
        }
        DensityOperator {
            config: self.config,
            matrix: m,
        }
    }
}

/// Dense density matrix on a `HilbertConfig`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    config: HilbertConfig,
    matrix: DMatrix<C64>,
}

impl DensityOperator {
    pub fn new(config: HilbertConfig, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != config.dim() || matrix.ncols() != config.dim() {
            return Err(Error::DimensionMismatch(format!(
                "density matrix {}x{} vs config dim {}",
                matrix.nrows(),
                matrix.ncols(),
                config.dim()
            )));
        }
        Ok(Self { config, matrix })
    }

    /// Thermal oscillator state with mean occupation `nbar`, renormalized on
    /// the truncated space.
    pub fn thermal(config: HilbertConfig, nbar: f64) -> Result<Self> {
        if config.qubit_dim() != 1 {
            return Err(Error::InvalidParameter(
                "thermal state is oscillator-only".into(),
            ));
        }
        if nbar < 0.0 {
            return Err(Error::InvalidParameter("nbar must be >= 0".into()));
        }
        let d = config.dim();
        let mut m = DMatrix::zeros(d, d);
        if nbar == 0.0 {
            m[(0, 0)] = C64::new(1.0, 0.0);
        } else {
            let x = nbar / (nbar + 1.0);
            let mut p = 1.0;
            let mut total = 0.0;
            for n in 0..d {
                m[(n, n)] = C64::new(p, 0.0);
                total += p;
                p *= x;
            }
            m /= C64::new(total, 0.0);
        }
        Ok(Self { config, matrix: m })
    }

    pub fn config(&self) -> HilbertConfig {
        self.config
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.matrix
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Symmetrize and rescale to unit trace.
    pub fn hermitize(&mut self) {
        let d = self.config.dim();
        for r in 0..d {
            for c in (r + 1)..d {
                let avg = 0.5 * (self.matrix[(r, c)] + self.matrix[(c, r)].conj());
                self.matrix[(r, c)] = avg;
                self.matrix[(c, r)] = avg.conj();
            }
            self.matrix[(r, r)] = C64::new(self.matrix[(r, r)].re, 0.0);
        }
        let t = self.trace().re;
        if t > 1e-300 {
            self.matrix /= C64::new(t, 0.0);
        }
    }

    /// Trace out the qubit, returning the reduced oscillator state.
    pub fn partial_trace_qubit(&self) -> Result<DensityOperator> {
        let n_max = self.config.n_max();
        let qd = self.config.qubit_dim();
        let osc = HilbertConfig::oscillator(n_max)?;
        let mut m = DMatrix::zeros(n_max, n_max);
        for a in 0..n_max {
            for b in 0..n_max {
                let mut acc = C64::new(0.0, 0.0);
                for q in 0..qd {
                    acc += self.matrix[(a * qd + q, b * qd + q)];
                }
                m[(a, b)] = acc;
            }
        }
        Ok(DensityOperator { config: osc, matrix: m })
    }

    /// Zero-pad an oscillator-only state to a larger truncation.
    pub fn embed(&self, n_max_new: usize) -> Result<DensityOperator> {
        if self.config.qubit_dim() != 1 {
            return Err(Error::InvalidParameter("embed is oscillator-only".into()));
        }
        if n_max_new < self.config.n_max() {
            return Err(Error::InvalidParameter(
                "embed target truncation smaller than source".into(),
            ));
        }
        let config = HilbertConfig::oscillator(n_max_new)?;
        let mut m = DMatrix::zeros(n_max_new, n_max_new);
        let old = self.config.n_max();
        m.view_mut((0, 0), (old, old)).copy_from(&self.matrix);
        Ok(DensityOperator { config, matrix: m })
    }

    /// Total population of the topmost Fock level (truncation diagnostic).
    pub fn top_fock_occupation(&self) -> f64 {
        let qd = self.config.qubit_dim();
        let n = self.config.n_max() - 1;
        (0..qd).map(|q| self.matrix[(n * qd + q, n * qd + q)].re).sum()
    }

    /// Eigenvalues of the Hermitian part (ascending).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()).map(|x| x * 0.5);
        let eig = herm.symmetric_eigenvalues();
        let mut v: Vec<f64> = eig.iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

/// State argument for the generic expectation helper.
pub enum StateRef<'a> {
    Ket(&'a Ket),
    Density(&'a DensityOperator),
}

/// ⟨ψ|O|ψ⟩ or Tr(ρO).
pub fn expectation(state: StateRef<'_>, op: &LinearOperator) -> Result<C64> {
    match state {
        StateRef::Ket(k) => op.expect_ket(k),
        StateRef::Density(r) => op.expect_rho(r),
    }
}

/// a ⊗ I_qubit with ⟨n−1|a|n⟩ = √n.
pub fn annihilation(config: HilbertConfig) -> LinearOperator {
    let qd = config.qubit_dim();
    let mut t = Vec::new();
    for n in 1..config.n_max() {
        for q in 0..qd {
            t.push((config.index(n - 1, q), config.index(n, q), C64::new((n as f64).sqrt(), 0.0)));
        }
    }
    LinearOperator::from_triplets(config, &t).expect("valid annihilation triplets")
}

/// a† ⊗ I_qubit.
pub fn creation(config: HilbertConfig) -> LinearOperator {
    annihilation(config).dagger()
}

/// a†a ⊗ I_qubit.
pub fn number_op(config: HilbertConfig) -> LinearOperator {
    let qd = config.qubit_dim();
    let mut t = Vec::new();
    for n in 1..config.n_max() {
        for q in 0..qd {
            let i = config.index(n, q);
            t.push((i, i, C64::new(n as f64, 0.0)));
        }
    }
    LinearOperator::from_triplets(config, &t).expect("valid number triplets")
}

/// Qubit basis convention for `qubit_dim = 2`: index 0 is the ground (dark)
/// state |d⟩, index 1 the excited state |e⟩; σ = I_osc ⊗ |d⟩⟨e|.
pub const QUBIT_GROUND: usize = 0;
pub const QUBIT_EXCITED: usize = 1;

/// I_osc ⊗ σ with σ|e⟩ = |d⟩.
pub fn qubit_lowering(config: HilbertConfig) -> Result<LinearOperator> {
    if config.qubit_dim() != 2 {
        return Err(Error::InvalidParameter(format!(
            "qubit_lowering requires qubit_dim = 2, got {}",
            config.qubit_dim()
        )));
    }
    let mut t = Vec::new();
    for n in 0..config.n_max() {
        t.push((
            config.index(n, QUBIT_GROUND),
            config.index(n, QUBIT_EXCITED),
            C64::new(1.0, 0.0),
        ));
    }
    LinearOperator::from_triplets(config, &t)
}

/// Standard spin-1 operators (ħ = 1) in the basis {|−1⟩, |0⟩, |+1⟩}, each
/// tensored with the oscillator identity. Returns (S_x, S_y, S_z).
pub fn spin1_ops(config: HilbertConfig) -> Result<(LinearOperator, LinearOperator, LinearOperator)> {
    if config.qubit_dim() != 3 {
        return Err(Error::InvalidParameter(format!(
            "spin1_ops requires qubit_dim = 3, got {}",
            config.qubit_dim()
        )));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut tx = Vec::new();
    let mut ty = Vec::new();
    let mut tz = Vec::new();
    for n in 0..config.n_max() {
        let i = |q: usize| config.index(n, q);
        // S_x = ((0 1 0),(1 0 1),(0 1 0))/√2
        tx.push((i(0), i(1), C64::new(s, 0.0)));
        tx.push((i(1), i(0), C64::new(s, 0.0)));
        tx.push((i(1), i(2), C64::new(s, 0.0)));
        tx.push((i(2), i(1), C64::new(s, 0.0)));
        // S_y = ((0 i 0),(−i 0 i),(0 −i 0))/√2 in this basis ordering
        ty.push((i(0), i(1), C64::new(0.0, s)));
        ty.push((i(1), i(0), C64::new(0.0, -s)));
        ty.push((i(1), i(2), C64::new(0.0, s)));
        ty.push((i(2), i(1), C64::new(0.0, -s)));
        // S_z = diag(−1, 0, +1)
        tz.push((i(0), i(0), C64::new(-1.0, 0.0)));
        tz.push((i(2), i(2), C64::new(1.0, 0.0)));
    }
    Ok((
        LinearOperator::from_triplets(config, &tx)?,
        LinearOperator::from_triplets(config, &ty)?,
        LinearOperator::from_triplets(config, &tz)?,
    ))
}
