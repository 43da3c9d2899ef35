//! Dense complex matrix helpers shared by every model.
//!
//! Vectorization is column stacking throughout, which is also nalgebra's
//! storage order: `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use rand::Rng;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().sum()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `|ρ − ρ†|`.
pub fn hermiticity_drift(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of the Hermitian part `(ρ + ρ†)/2`, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let h = (m + m.adjoint()).scale(0.5);
    let mut values: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Column-stacked vectorization.
pub fn vec_of(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVector, dim: usize) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// Superoperator of `ρ ↦ A ρ B`.
pub fn sandwich_super(a: &CMatrix, b: &CMatrix) -> CMatrix {
    kron(&b.transpose(), a)
}

/// Matrix 1-norm (maximum absolute column sum).
pub fn norm_one(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Random density matrix `G G† / Tr(G G†)` with `G` a `dim × rank` complex
/// Ginibre matrix.
pub fn random_density_matrix<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> CMatrix {
    let rank = rank.clamp(1, dim.max(1));
    let g = CMatrix::from_fn(dim, rank, |_, _| {
        c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let rho = &g * g.adjoint();
    let tr = trace(&rho).re;
    rho.unscale(tr)
}

/// Random Hermitian matrix with entries of order one (not normalized).
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| {
        c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    (&g + g.adjoint()).scale(0.5)
}

pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    })
}

/// How [`Exponential`] evaluates `exp(L t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpMethod {
    Eigen,
    ScalingSquaring,
}

/// Eigenvector condition number above which the spectral route is abandoned.
pub const EIGEN_CONDITION_LIMIT: f64 = 1e12;

/// Relative reconstruction residual `‖V Λ V⁻¹ − L‖₁ / ‖L‖₁` tolerated by the
/// spectral route.
pub const EIGEN_RESIDUAL_LIMIT: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Spectral {
    values: CVector,
    vectors: CMatrix,
    inverse: CMatrix,
}

/// `t ↦ exp(L t)` for a fixed generator `L`.
///
/// `L` is first split into the connected components of its sparsity graph;
/// each component is diagonalized on its own (complex Schur form, then
/// eigenvectors by back substitution). A component whose eigenvector basis is
/// ill conditioned, or fails to reproduce its block, falls back to Padé
/// scaling and squaring.
#[derive(Debug, Clone)]
pub struct Exponential {
    generator: CMatrix,
    pieces: Vec<Piece>,
    condition: f64,
}

#[derive(Debug, Clone)]
struct Piece {
    indices: Vec<usize>,
    block: CMatrix,
    spectral: Option<Spectral>,
}

impl Piece {
    fn at(&self, t: f64) -> CMatrix {
        match &self.spectral {
            Some(s) => {
                let mut scaled = s.vectors.clone();
                for (j, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= (s.values[j] * t).exp();
                }
                scaled * &s.inverse
            }
            None => self.block.scale(t).exp(),
        }
    }
}

/// Index sets that `l` couples, directly or through other indices.
pub fn coupled_components(l: &CMatrix) -> Vec<Vec<usize>> {
    let n = l.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in 0..n {
        for i in 0..n {
            if i != j && l[(i, j)] != ZERO {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

impl Exponential {
    pub fn new(generator: CMatrix) -> Self {
        Self::with_condition_limit(generator, EIGEN_CONDITION_LIMIT)
    }

    pub fn with_condition_limit(generator: CMatrix, limit: f64) -> Self {
        let mut condition = 1.0f64;
        let pieces = coupled_components(&generator)
            .into_iter()
            .map(|indices| {
                let block = generator.select_rows(&indices).select_columns(&indices);
                let spectral = match diagonalize(&block) {
                    Some((s, cond)) if cond <= limit => {
                        condition = condition.max(cond);
                        Some(s)
                    }
                    Some((_, cond)) => {
                        condition = condition.max(cond);
                        None
                    }
                    None => {
                        condition = f64::INFINITY;
                        None
                    }
                };
                Piece {
                    indices,
                    block,
                    spectral,
                }
            })
            .collect();
        Exponential {
            generator,
            pieces,
            condition,
        }
    }

    /// Force scaling-and-squaring for every evaluation.
    pub fn scaling_squaring(generator: CMatrix) -> Self {
        let n = generator.nrows();
        Exponential {
            pieces: vec![Piece {
                indices: (0..n).collect(),
                block: generator.clone(),
                spectral: None,
            }],
            generator,
            condition: f64::NAN,
        }
    }

    /// `Eigen` only when every component was diagonalized.
    pub fn method(&self) -> ExpMethod {
        if self.pieces.iter().all(|p| p.spectral.is_some()) {
            ExpMethod::Eigen
        } else {
            ExpMethod::ScalingSquaring
        }
    }

    /// Largest condition number `‖V‖₁ ‖V⁻¹‖₁` over the components' eigenvector
    /// matrices, infinite when a decomposition failed and NaN when it was
    /// never attempted.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn generator(&self) -> &CMatrix {
        &self.generator
    }

    pub fn components(&self) -> usize {
        self.pieces.len()
    }

    pub fn at(&self, t: f64) -> CMatrix {
        let n = self.generator.nrows();
        if t == 0.0 {
            return identity(n);
        }
        let mut out = CMatrix::zeros(n, n);
        for p in &self.pieces {
            let e = p.at(t);
            for (a, &i) in p.indices.iter().enumerate() {
                for (b, &j) in p.indices.iter().enumerate() {
                    out[(i, j)] = e[(a, b)];
                }
            }
        }
        out
    }
}

fn diagonalize(l: &CMatrix) -> Option<(Spectral, f64)> {
    let n = l.nrows();
    if n == 0 {
        return None;
    }
    let scale = norm_one(l);
    if scale == 0.0 {
        let s = Spectral {
            values: CVector::zeros(n),
            vectors: identity(n),
            inverse: identity(n),
        };
        return Some((s, 1.0));
    }
    let (q, t) = Schur::try_new(l.clone(), 1e-15, 100 * n.max(10))?.unpack();

    // Reject quasi-triangular output (unconverged 2x2 bumps).
    for j in 0..n.saturating_sub(1) {
        if t[(j + 1, j)].norm() > 1e-13 * scale {
            return None;
        }
    }

    let mut x = CMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        x[(k, k)] = ONE;
        for i in (0..k).rev() {
            let mut acc = ZERO;
            for j in (i + 1)..=k {
                acc += t[(i, j)] * x[(j, k)];
            }
            let denom = t[(i, i)] - lambda;
            if denom.norm() <= f64::EPSILON * scale {
                if acc.norm() <= 1e3 * f64::EPSILON * scale {
                    x[(i, k)] = ZERO;
                    continue;
                }
                return None;
            }
            x[(i, k)] = -acc / denom;
        }
        let norm = x.column(k).norm();
        x.column_mut(k).unscale_mut(norm);
    }
    let vectors = q * x;
    let inverse = vectors.clone().try_inverse()?;
    let condition = norm_one(&vectors) * norm_one(&inverse);
    if !condition.is_finite() {
        return None;
    }

    let values = t.diagonal();
    let mut rebuilt = vectors.clone();
    for (j, mut col) in rebuilt.column_iter_mut().enumerate() {
        col *= values[j];
    }
    let residual = norm_one(&(rebuilt * &inverse - l)) / scale;
    if residual.is_nan() || residual > EIGEN_RESIDUAL_LIMIT {
        return None;
    }
    Some((
        Spectral {
            values,
            vectors,
            inverse,
        },
        condition,
    ))
}
