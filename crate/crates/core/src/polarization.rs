//! Schwinger su(2) polarization operators and the fixed-`N` block structure.

use std::sync::Arc;

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::fock::{annihilation_op, number_op, FockBasis, OperatorMatrix, Polarization};
use crate::linalg::{real, trace, CMatrix, I};

/// `J_{j±}`, `J_{jz}` and `N_j` for one spatiotemporal mode.
#[derive(Debug, Clone)]
pub struct ModeOperators {
    pub j_plus: OperatorMatrix,
    pub j_minus: OperatorMatrix,
    pub j_z: OperatorMatrix,
    pub n: OperatorMatrix,
}

/// Total Stokes operators `J = S/2`, total photon number and the per-mode
/// pieces they are summed from.
#[derive(Debug, Clone)]
pub struct PolarizationOperators {
    pub j_plus: OperatorMatrix,
    pub j_minus: OperatorMatrix,
    pub j_z: OperatorMatrix,
    pub j_x: OperatorMatrix,
    pub j_y: OperatorMatrix,
    pub n_total: OperatorMatrix,
    pub per_mode: Vec<ModeOperators>,
}

impl PolarizationOperators {
    pub fn basis(&self) -> &Arc<FockBasis> {
        self.n_total.basis()
    }

    /// `J² = J_z² + (J_+J_− + J_−J_+)/2`.
    pub fn casimir(&self) -> CMatrix {
        let jp = self.j_plus.matrix();
        let jm = self.j_minus.matrix();
        let jz = self.j_z.matrix();
        jz * jz + (jp * jm + jm * jp).scale(0.5)
    }

    /// `J_x`, `J_y`, `J_z` in that order.
    pub fn cartesian(&self) -> [&OperatorMatrix; 3] {
        [&self.j_x, &self.j_y, &self.j_z]
    }
}

pub fn build_polarization_ops(basis: &Arc<FockBasis>) -> PolarizationOperators {
    let dim = basis.dim();
    let mut total_plus = CMatrix::zeros(dim, dim);
    let mut total_z = CMatrix::zeros(dim, dim);
    let mut total_n = CMatrix::zeros(dim, dim);
    let mut per_mode = Vec::with_capacity(basis.modes());

    for mode in 0..basis.modes() {
        let a_plus = annihilation_op(basis, mode, Polarization::Plus)
            .expect("mode in range")
            .into_matrix();
        let a_minus = annihilation_op(basis, mode, Polarization::Minus)
            .expect("mode in range")
            .into_matrix();
        let n_plus = number_op(basis, mode, Polarization::Plus)
            .expect("mode in range")
            .into_matrix();
        let n_minus = number_op(basis, mode, Polarization::Minus)
            .expect("mode in range")
            .into_matrix();

        let j_plus = a_plus.adjoint() * &a_minus;
        let j_minus = j_plus.adjoint();
        let j_z = (&n_plus - &n_minus).scale(0.5);
        let n = &n_plus + &n_minus;

        total_plus += &j_plus;
        total_z += &j_z;
        total_n += &n;

        let label = mode + 1;
        per_mode.push(ModeOperators {
            j_plus: OperatorMatrix::from_parts(Arc::clone(basis), format!("J_{label}+"), j_plus),
            j_minus: OperatorMatrix::from_parts(Arc::clone(basis), format!("J_{label}-"), j_minus),
            j_z: OperatorMatrix::from_parts(Arc::clone(basis), format!("J_{label}z"), j_z),
            n: OperatorMatrix::from_parts(Arc::clone(basis), format!("N_{label}"), n),
        });
    }

    let total_minus = total_plus.adjoint();
    let j_x = (&total_plus + &total_minus).scale(0.5);
    let j_y = (&total_plus - &total_minus) / (I * 2.0);
    let op = |label: &str, data: CMatrix| {
        OperatorMatrix::from_parts(Arc::clone(basis), label.to_string(), data)
    };
    PolarizationOperators {
        j_plus: op("J+", total_plus),
        j_minus: op("J-", total_minus),
        j_z: op("Jz", total_z),
        j_x: op("Jx", j_x),
        j_y: op("Jy", j_y),
        n_total: op("N", total_n),
        per_mode,
    }
}

/// Block weights `r_N` of an unpolarized state `⊕_N r_N 1_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnpolarizedWeights(Vec<f64>);

impl UnpolarizedWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(bad) = weights.iter().find(|r| !r.is_finite() || **r < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "unpolarized weight {bad} is not a nonnegative real"
            )));
        }
        Ok(UnpolarizedWeights(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `Σ_N d_N r_N` with `d_N` the block dimensions of `basis`.
    pub fn trace_on(&self, basis: &FockBasis) -> f64 {
        self.0
            .iter()
            .enumerate()
            .map(|(n, r)| r * basis.block_dim(n) as f64)
            .sum()
    }
}

/// One diagonal block of a state, by total photon number.
#[derive(Debug, Clone)]
pub struct Block {
    pub n: usize,
    pub matrix: CMatrix,
    pub weight: f64,
}

/// Diagonal fixed-`N` blocks of `rho`. Blocks that are identically zero are
/// omitted.
pub fn block_decompose(rho: &CMatrix, basis: &FockBasis) -> Result<Vec<Block>> {
    if rho.nrows() != basis.dim() || rho.ncols() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: rho.nrows().max(rho.ncols()),
        });
    }
    let mut blocks = Vec::new();
    for n in 0..=basis.n_max() {
        let range = basis.block_range(n);
        let len = range.len();
        let matrix = rho
            .view((range.start, range.start), (len, len))
            .into_owned();
        if matrix.iter().all(|z| z.norm() == 0.0) {
            continue;
        }
        let weight = trace(&matrix).re;
        blocks.push(Block { n, matrix, weight });
    }
    Ok(blocks)
}

/// Trace of every fixed-`N` block, `N = 0..=N_max`.
pub fn block_weights(rho: &CMatrix, basis: &FockBasis) -> Vec<f64> {
    (0..=basis.n_max())
        .map(|n| basis.block_range(n).map(|i| rho[(i, i)].re).sum())
        .collect()
}

/// `ρ_unpol = ⊕_N r_N 1_N`.
pub fn unpolarized_state(
    basis: &Arc<FockBasis>,
    weights: &UnpolarizedWeights,
) -> Result<DensityMatrix> {
    if weights.as_slice().len() > basis.n_max() + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} weights given for blocks 0..={}",
            weights.as_slice().len(),
            basis.n_max()
        )));
    }
    let tr = weights.trace_on(basis);
    if (tr - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidState(format!(
            "unpolarized weights give trace {tr} (deficit {})",
            1.0 - tr
        )));
    }
    let mut data = basis.zeros();
    for (n, &r) in weights.as_slice().iter().enumerate() {
        for i in basis.block_range(n) {
            data[(i, i)] = real(r);
        }
    }
    Ok(DensityMatrix::from_trusted(Arc::clone(basis), data))
}
