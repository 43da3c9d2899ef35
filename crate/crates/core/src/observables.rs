//! Polarization observables of a field state.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hermiticity_drift, min_eigenvalue, trace, CMatrix, ZERO};
use crate::polarization::{block_weights, PolarizationOperators};

/// Below this mean photon number a state counts as vacuum: `s = 0`, `P = 0`.
pub const VACUUM_PHOTON_THRESHOLD: f64 = 1e-12;

/// `s = ⟨S⟩/⟨N⟩ = 2⟨J⟩/⟨N⟩` together with `⟨N⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolarizationVector {
    pub s_x: f64,
    pub s_y: f64,
    pub s_z: f64,
    pub n_mean: f64,
}

impl PolarizationVector {
    pub fn new(s_x: f64, s_y: f64, s_z: f64) -> Self {
        PolarizationVector {
            s_x,
            s_y,
            s_z,
            n_mean: 1.0,
        }
    }

    pub fn components(&self) -> [f64; 3] {
        [self.s_x, self.s_y, self.s_z]
    }

    pub fn norm(&self) -> f64 {
        self.components().iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

/// `Tr(ρ A)`.
pub fn expectation(op: &CMatrix, rho: &CMatrix) -> Result<Complex64> {
    if op.shape() != rho.shape() || !op.is_square() {
        return Err(Error::DimensionMismatch {
            expected: rho.nrows(),
            found: op.nrows(),
        });
    }
    let n = op.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += rho[(i, j)] * op[(j, i)];
        }
    }
    Ok(acc)
}

fn expect_real(op: &CMatrix, rho: &CMatrix) -> f64 {
    expectation(op, rho)
        .expect("operators and states share the basis")
        .re
}

pub fn polarization_vector(rho: &CMatrix, ops: &PolarizationOperators) -> PolarizationVector {
    let n_mean = expect_real(ops.n_total.matrix(), rho);
    if n_mean.abs() <= VACUUM_PHOTON_THRESHOLD {
        return PolarizationVector {
            s_x: 0.0,
            s_y: 0.0,
            s_z: 0.0,
            n_mean,
        };
    }
    let [jx, jy, jz] = ops.cartesian().map(|op| expect_real(op.matrix(), rho));
    PolarizationVector {
        s_x: 2.0 * jx / n_mean,
        s_y: 2.0 * jy / n_mean,
        s_z: 2.0 * jz / n_mean,
        n_mean,
    }
}

/// `P = |⟨S⟩| / ⟨N⟩`, zero for the vacuum.
pub fn degree_of_polarization(rho: &CMatrix, ops: &PolarizationOperators) -> f64 {
    polarization_vector(rho, ops).norm()
}

/// `Tr(ρ²)`.
pub fn purity(rho: &CMatrix) -> f64 {
    rho.iter().map(|z| z.norm_sqr()).sum()
}

/// Bloch vector `Tr(ρ σ)` of a 2×2 one-photon block written in the
/// `{|+⟩, |−⟩}` basis, `ρ = (1 + s·σ)/2`.
pub fn bloch_vector(block: &CMatrix) -> Result<[f64; 3]> {
    if block.shape() != (2, 2) {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: block.nrows(),
        });
    }
    let s_x = 2.0 * block[(1, 0)].re;
    let s_y = 2.0 * block[(1, 0)].im;
    let s_z = (block[(0, 0)] - block[(1, 1)]).re;
    Ok([s_x, s_y, s_z])
}

/// Everything recorded per sampled time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observables {
    pub s: PolarizationVector,
    pub degree: f64,
    pub purity: f64,
    pub trace: f64,
    pub min_eig: f64,
    pub hermiticity_drift: f64,
    pub block_weights: Vec<f64>,
}

pub fn observe(rho: &CMatrix, ops: &PolarizationOperators) -> Observables {
    let s = polarization_vector(rho, ops);
    Observables {
        degree: s.norm(),
        s,
        purity: purity(rho),
        trace: trace(rho).re,
        min_eig: min_eigenvalue(rho),
        hermiticity_drift: hermiticity_drift(rho),
        block_weights: block_weights(rho, ops.basis()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockBasis;
    use crate::linalg::{c, real};
    use crate::polarization::{build_polarization_ops, unpolarized_state, UnpolarizedWeights};
    use std::sync::Arc;

    fn ops(m: usize, n: usize) -> PolarizationOperators {
        build_polarization_ops(&Arc::new(FockBasis::new(m, n).unwrap()))
    }

    #[test]
    fn photon_number_and_jz() {
        let p = ops(1, 1);
        let plus = p.basis().projector(1);
        assert_eq!(expectation(p.n_total.matrix(), &plus).unwrap(), real(1.0));
        assert_eq!(expectation(p.j_z.matrix(), &plus).unwrap(), real(0.5));
        assert!(expectation(p.j_z.matrix(), &CMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn circular_and_vacuum_vectors() {
        let p = ops(1, 1);
        let s = polarization_vector(&p.basis().projector(1), &p);
        assert_eq!(s.components(), [0.0, 0.0, 1.0]);
        let vac = polarization_vector(&p.basis().projector(0), &p);
        assert_eq!(vac.components(), [0.0, 0.0, 0.0]);
        assert_eq!(degree_of_polarization(&p.basis().projector(0), &p), 0.0);
    }

    #[test]
    fn diagonal_linear_polarization() {
        // (|+⟩ + |−⟩)/√2: every entry of the one-photon block is 1/2.
        let p = ops(1, 1);
        let mut rho = p.basis().zeros();
        for i in 1..3 {
            for j in 1..3 {
                rho[(i, j)] = real(0.5);
            }
        }
        let s = polarization_vector(&rho, &p);
        assert!((s.s_x - 1.0).abs() < 1e-15);
        assert!(s.s_y.abs() < 1e-15 && s.s_z.abs() < 1e-15);
    }

    #[test]
    fn unpolarized_states_have_zero_degree() {
        let p = ops(1, 3);
        let basis = p.basis().clone();
        // Σ (N+1) r_N = 0.1 + 0.4 + 0.3 + 0.2 = 1
        let w = UnpolarizedWeights::new(vec![0.1, 0.2, 0.1, 0.05]).unwrap();
        let rho = unpolarized_state(&basis, &w).unwrap();
        assert!(degree_of_polarization(rho.matrix(), &p) < 1e-15);
    }

    #[test]
    fn purity_values() {
        let p = ops(1, 1);
        assert_eq!(purity(&p.basis().projector(2)), 1.0);
        let mut mixed = p.basis().zeros();
        mixed[(1, 1)] = real(0.5);
        mixed[(2, 2)] = real(0.5);
        assert_eq!(purity(&mixed), 0.5);
    }

    #[test]
    fn two_mode_jx_expectation_is_real_part_of_four_coherences() {
        let p = ops(2, 2);
        let b = p.basis().clone();
        let idx: Vec<usize> = [[1, 0, 1, 0], [1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 0, 1]]
            .iter()
            .map(|s| b.index_of(s).unwrap())
            .collect();
        let mut rho = b.zeros();
        let vals = [
            [0.4, 0.0, 0.0, 0.0],
            [0.1, 0.3, 0.0, 0.0],
            [-0.05, 0.02, 0.2, 0.0],
            [0.01, 0.07, 0.03, 0.1],
        ];
        for a in 0..4 {
            for k in 0..=a {
                let z = if a == k {
                    real(vals[a][k])
                } else {
                    c(vals[a][k], 0.3 * vals[a][k])
                };
                rho[(idx[a], idx[k])] = z;
                rho[(idx[k], idx[a])] = z.conj();
            }
        }
        let r = |a: usize, k: usize| rho[(idx[a], idx[k])];
        let expect = (r(0, 1) + r(0, 2) + r(1, 3) + r(2, 3)).re;
        let jx = expectation(p.j_x.matrix(), &rho).unwrap();
        assert!((jx.re - expect).abs() < 1e-15);
        assert!(jx.im.abs() < 1e-15);
    }

    #[test]
    fn bloch_vector_matches_stokes_definition() {
        let p = ops(1, 1);
        let (sx, sy, sz) = (0.3, -0.4, 0.5);
        let mut rho = p.basis().zeros();
        rho[(1, 1)] = real((1.0 + sz) / 2.0);
        rho[(2, 2)] = real((1.0 - sz) / 2.0);
        rho[(1, 2)] = c(sx / 2.0, -sy / 2.0);
        rho[(2, 1)] = c(sx / 2.0, sy / 2.0);
        let block = rho.view((1, 1), (2, 2)).into_owned();
        let b = bloch_vector(&block).unwrap();
        let s = polarization_vector(&rho, &p).components();
        for k in 0..3 {
            assert!((b[k] - s[k]).abs() < 1e-15);
        }
        assert!((b[0] - sx).abs() < 1e-15 && (b[1] - sy).abs() < 1e-15);
    }
}
