//! Dense complex linear algebra for registers of at most a few qubits.
//!
//! Qubit 0 is the most significant bit of a computational-basis index and the
//! leftmost factor of every tensor product.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Absolute tolerance for structural invariants (Hermiticity, trace, equality).
pub const STRUCT_TOL: f64 = 1e-12;
/// Tolerance on eigenvalues when checking positivity.
pub const PSD_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Row-major dense complex matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Self {
            rows: n_rows,
            cols: n_cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    /// Projector |v><v| onto a column vector.
    pub fn outer(v: &[C64]) -> Self {
        let d = v.len();
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = v[i] * v[j].conj();
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// Entry-wise `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.dims(), other.dims());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&x, &y)| x * a + y * b)
                .collect(),
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `U * self * U^dagger`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        u.matmul(self).matmul(&u.dagger())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.dims() != other.dims() {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.dagger()) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.is_square()
            && self
                .dagger()
                .matmul(self)
                .approx_eq(&Self::identity(self.rows), tol)
    }

    /// Multiplies by a global phase so the first non-negligible entry (row-major)
    /// is real and positive.
    pub fn phase_canonical(&self) -> Self {
        match self.data.iter().find(|z| z.norm() > 1e-9) {
            Some(&z) => self.scale(z.conj() / z.norm()),
            None => self.clone(),
        }
    }

    /// Equality modulo a global U(1) phase.
    pub fn eq_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        self.phase_canonical()
            .approx_eq(&other.phase_canonical(), tol)
    }

    /// Eigenvalues of a Hermitian matrix in ascending order.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let m = nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.data);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

/// Equality within [`STRUCT_TOL`].
impl PartialEq for ComplexMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.approx_eq(other, STRUCT_TOL)
    }
}

impl fmt::Display for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.5}{:+.5}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Kronecker product; `a` is the leftmost (most significant) factor.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac) = a.dims();
    let (br, bc) = b.dims();
    let mut out = ComplexMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn tensor_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors
        .into_iter()
        .fold(ComplexMatrix::identity(1), |acc, m| tensor(&acc, m))
}

/// Normalized statevector of a pure preparation.
pub fn normalize(v: &[C64]) -> Vec<C64> {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter().map(|&z| z / norm).collect()
}

/// Unit-trace positive semidefinite Hermitian operator on `num_qubits` qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    num_qubits: usize,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let d = matrix.rows();
        if !matrix.is_square() || !d.is_power_of_two() || d < 2 {
            return Err(Error::InvalidState(format!(
                "shape {:?} is not a 2^N square",
                matrix.dims()
            )));
        }
        if !matrix.is_hermitian(STRUCT_TOL) {
            return Err(Error::InvalidState("not Hermitian".into()));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > STRUCT_TOL {
            return Err(Error::InvalidState(format!("trace {tr} != 1")));
        }
        let min_ev = matrix.hermitian_eigenvalues()[0];
        if min_ev < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_ev:e}")));
        }
        Ok(Self::from_matrix_unchecked(matrix))
    }

    pub(crate) fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        let num_qubits = matrix.rows().trailing_zeros() as usize;
        Self { matrix, num_qubits }
    }

    /// |psi><psi| for a statevector; the vector is normalized first.
    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        if !psi.len().is_power_of_two() || psi.len() < 2 {
            return Err(Error::InvalidState(format!(
                "statevector length {} is not 2^N",
                psi.len()
            )));
        }
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if norm < 1e-300 {
            return Err(Error::InvalidState("zero statevector".into()));
        }
        Ok(Self::from_matrix_unchecked(ComplexMatrix::outer(
            &normalize(psi),
        )))
    }

    pub fn basis_state(num_qubits: usize, index: usize) -> Self {
        let mut m = ComplexMatrix::zeros(1 << num_qubits, 1 << num_qubits);
        m[(index, index)] = ONE;
        Self::from_matrix_unchecked(m)
    }

    pub fn maximally_mixed(num_qubits: usize) -> Self {
        let d = 1usize << num_qubits;
        Self::from_matrix_unchecked(ComplexMatrix::identity(d).scale(C64::new(1.0 / d as f64, 0.0)))
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// Unitary evolution `U rho U^dagger`.
    pub fn evolve(&self, u: &ComplexMatrix) -> Self {
        assert_eq!(u.rows(), self.dim(), "unitary dimension mismatch");
        Self::from_matrix_unchecked(self.matrix.conjugate_by(u))
    }

    /// `self (x) other`, with `self` on the leading qubits.
    pub fn tensor(&self, other: &Self) -> Self {
        Self::from_matrix_unchecked(tensor(&self.matrix, &other.matrix))
    }

    /// Computational-basis outcome probabilities (Born rule), clamped at zero.
    pub fn diagonal_probabilities(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re.max(0.0)).collect()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.matrix.hermitian_eigenvalues()
    }

    /// True when every entry has vanishing imaginary part.
    pub fn is_real(&self, tol: f64) -> bool {
        self.matrix.as_slice().iter().all(|z| z.im.abs() <= tol)
    }
}

/// Tr(rho^2).
pub fn purity(rho: &DensityMatrix) -> f64 {
    // For Hermitian rho, Tr(rho^2) = sum_ij |rho_ij|^2.
    rho.matrix().as_slice().iter().map(|z| z.norm_sqr()).sum()
}

/// Reduced state on the qubits in `keep` (output ordered by increasing index).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.num_qubits();
    let keep = normalize_subset(keep, n)?;
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let dk = 1usize << keep.len();
    let dt = 1usize << traced.len();
    let compose = |k: usize, t: usize| -> usize {
        let mut idx = 0usize;
        for (pos, &q) in keep.iter().enumerate() {
            let bit = (k >> (keep.len() - 1 - pos)) & 1;
            idx |= bit << (n - 1 - q);
        }
        for (pos, &q) in traced.iter().enumerate() {
            let bit = (t >> (traced.len() - 1 - pos)) & 1;
            idx |= bit << (n - 1 - q);
        }
        idx
    };
    let m = rho.matrix();
    let mut out = ComplexMatrix::zeros(dk, dk);
    for i in 0..dk {
        for j in 0..dk {
            out[(i, j)] = (0..dt).map(|t| m[(compose(i, t), compose(j, t))]).sum();
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// Sorted, de-duplicated subset, rejected when empty, full, or out of range.
pub(crate) fn normalize_subset(keep: &[usize], num_qubits: usize) -> Result<Vec<usize>> {
    let mut k = keep.to_vec();
    k.sort_unstable();
    k.dedup();
    if k.is_empty() || k.len() >= num_qubits || k.iter().any(|&q| q >= num_qubits) {
        return Err(Error::InvalidSubsystem {
            keep: keep.to_vec(),
            num_qubits,
        });
    }
    Ok(k)
}

/// Single-qubit Pauli letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> ComplexMatrix {
        match self {
            Pauli::I => ComplexMatrix::identity(2),
            Pauli::X => ComplexMatrix::from_rows(&[vec![ZERO, ONE], vec![ONE, ZERO]]),
            Pauli::Y => ComplexMatrix::from_rows(&[vec![ZERO, -I], vec![I, ZERO]]),
            Pauli::Z => ComplexMatrix::from_diag(&[ONE, -ONE]),
        }
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    fn phases(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// Tensor product of single-qubit Paulis; letter 0 acts on qubit 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Self {
        Self { letters }
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn num_qubits(&self) -> usize {
        self.letters.len()
    }

    /// The `index`-th string in lexicographic (I < X < Y < Z) order.
    pub fn from_index(num_qubits: usize, index: usize) -> Self {
        let letters = (0..num_qubits)
            .map(|q| Pauli::ALL[(index >> (2 * (num_qubits - 1 - q))) & 3])
            .collect();
        Self { letters }
    }

    /// All 4^N strings in lexicographic order.
    pub fn all(num_qubits: usize) -> impl Iterator<Item = PauliString> {
        (0..1usize << (2 * num_qubits)).map(move |i| Self::from_index(num_qubits, i))
    }

    pub fn matrix(&self) -> ComplexMatrix {
        self.letters
            .iter()
            .fold(ComplexMatrix::identity(1), |acc, p| tensor(&acc, &p.matrix()))
    }

    /// Tr(P rho), using the one-nonzero-per-column structure of Pauli strings.
    pub fn expectation(&self, rho: &DensityMatrix) -> f64 {
        assert_eq!(self.num_qubits(), rho.num_qubits());
        let n = self.num_qubits();
        let mut x_mask = 0usize;
        let mut z_mask = 0usize;
        let mut n_y = 0;
        for (q, p) in self.letters.iter().enumerate() {
            let bit = 1 << (n - 1 - q);
            if p.flips() {
                x_mask |= bit;
            }
            if p.phases() {
                z_mask |= bit;
            }
            if *p == Pauli::Y {
                n_y += 1;
            }
        }
        masked_expectation(rho, x_mask, z_mask, n_y)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Tr(P rho) for all 4^N Pauli strings in lexicographic order.
pub fn pauli_expectations(rho: &DensityMatrix) -> Vec<f64> {
    let n = rho.num_qubits();
    (0..1usize << (2 * n))
        .map(|idx| {
            let (mut x, mut z, mut n_y) = (0, 0, 0);
            for q in 0..n {
                let bit = 1 << (n - 1 - q);
                match (idx >> (2 * (n - 1 - q))) & 3 {
                    1 => x |= bit,
                    2 => {
                        x |= bit;
                        z |= bit;
                        n_y += 1;
                    }
                    3 => z |= bit,
                    _ => {}
                }
            }
            masked_expectation(rho, x, z, n_y)
        })
        .collect()
}

/// Tr(P ρ) for the Pauli string with flip mask `x`, phase mask `z` and `n_y` Y letters.
// P|j⟩ = i^{n_y} (-1)^{|j & z|} |j ^ x⟩, so Tr(Pρ) = Σ_j P_{j^x, j} ρ_{j, j^x}.
fn masked_expectation(rho: &DensityMatrix, x: usize, z: usize, n_y: usize) -> f64 {
    let m = rho.matrix();
    let sum: C64 = (0..rho.dim())
        .map(|j| {
            let v = m[(j, j ^ x)];
            if (j & z).count_ones().is_multiple_of(2) {
                v
            } else {
                -v
            }
        })
        .sum();
    (sum * [ONE, I, -ONE, -I][n_y % 4]).re
}

/// Gaussian-random normalized statevector (Haar distributed).
pub fn random_statevector<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> Vec<C64> {
    let v: Vec<C64> = (0..1usize << num_qubits)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    normalize(&v)
}

pub fn random_pure_state<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> DensityMatrix {
    DensityMatrix::from_matrix_unchecked(ComplexMatrix::outer(&random_statevector(
        num_qubits, rng,
    )))
}

/// Random full-rank mixed state `G G^dagger / Tr(G G^dagger)` (Hilbert-Schmidt measure).
pub fn random_mixed_state<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> DensityMatrix {
    let d = 1usize << num_qubits;
    let g = ComplexMatrix::from_vec(
        d,
        d,
        (0..d * d)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect(),
    );
    let m = g.matmul(&g.dagger());
    let tr = m.trace().re;
    DensityMatrix::from_matrix_unchecked(m.scale(C64::new(1.0 / tr, 0.0)))
}

/// Haar-random 2x2 unitary.
pub fn random_unitary_2<R: Rng + ?Sized>(rng: &mut R) -> ComplexMatrix {
    let a = random_statevector(1, rng);
    // Second column orthogonal to the first, with a random phase.
    let phase = C64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU);
    let b = [-a[1].conj() * phase, a[0].conj() * phase];
    ComplexMatrix::from_rows(&[vec![a[0], b[0]], vec![a[1], b[1]]])
}
