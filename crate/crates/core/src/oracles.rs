//! Closed-form solutions used to check the propagators.
//!
//! The two-mode solution lives on the subspace with exactly one photon in
//! each spatial mode, in the basis
//! `|1⟩ = |+⟩₁|+⟩₂, |2⟩ = |+⟩₁|−⟩₂, |3⟩ = |−⟩₁|+⟩₂, |4⟩ = |−⟩₁|−⟩₂`.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::linalg::{hermiticity_drift, real, trace, CMatrix};
use crate::lindblad::ModelSpec;
use crate::observables::PolarizationVector;
use crate::propagator::{evolve_exact, TimeGrid};

/// Bloch vector under pure dephasing: transverse components decay at
/// `(γ₊ + γ₋)/2`, `s_z` is conserved.
pub fn dephasing_bloch(
    s0: PolarizationVector,
    gamma_plus: f64,
    gamma_minus: f64,
    t: f64,
) -> PolarizationVector {
    let f = (-(gamma_plus + gamma_minus) * t / 2.0).exp();
    PolarizationVector {
        s_x: s0.s_x * f,
        s_y: s0.s_y * f,
        ..s0
    }
}

/// One-photon Bloch vector under depolarization.
pub fn depolarizing_bloch(s0: PolarizationVector, gamma: f64, t: f64) -> PolarizationVector {
    let f = (-gamma * t).exp();
    PolarizationVector {
        s_x: s0.s_x * f,
        s_y: s0.s_y * f,
        s_z: s0.s_z * f * f,
        n_mean: s0.n_mean,
    }
}

/// `P(t) = [s_x² + s_y² + s_z² e^{−2γt}]^{1/2} e^{−γt}` for one photon.
pub fn depolarizing_degree(s0: PolarizationVector, gamma: f64, t: f64) -> f64 {
    let e2 = (-2.0 * gamma * t).exp();
    (s0.s_x * s0.s_x + s0.s_y * s0.s_y + s0.s_z * s0.s_z * e2).sqrt() * (-gamma * t).exp()
}

/// `1/(N+1)` on the `N`-photon block of a single-mode basis.
pub fn steady_state_block(n: usize, basis: &Arc<FockBasis>) -> Result<DensityMatrix> {
    if basis.modes() != 1 {
        return Err(Error::InvalidArgument(format!(
            "block steady state is defined for one mode, basis has {}",
            basis.modes()
        )));
    }
    if n > basis.n_max() {
        return Err(Error::InvalidArgument(format!(
            "block N = {n} exceeds N_max = {}",
            basis.n_max()
        )));
    }
    let mut data = basis.zeros();
    let w = real(1.0 / (n as f64 + 1.0));
    for i in basis.block_range(n) {
        data[(i, i)] = w;
    }
    Ok(DensityMatrix::from_trusted(Arc::clone(basis), data))
}

/// Occupations of the four basis states `|1⟩..|4⟩` in a two-mode basis.
pub const TWO_MODE_OCCUPATIONS: [[u32; 4]; 4] =
    [[1, 0, 1, 0], [1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 0, 1]];

/// Positions of `|1⟩..|4⟩` inside a two-mode [`FockBasis`].
pub fn two_mode_indices(basis: &FockBasis) -> Result<[usize; 4]> {
    if basis.modes() != 2 || basis.n_max() < 2 {
        return Err(Error::InvalidArgument(format!(
            "one photon per mode needs m = 2 and N_max >= 2, got m = {}, N_max = {}",
            basis.modes(),
            basis.n_max()
        )));
    }
    let mut out = [0; 4];
    for (slot, occ) in out.iter_mut().zip(TWO_MODE_OCCUPATIONS.iter()) {
        *slot = basis
            .index_of(occ)
            .expect("occupation lies below the cutoff");
    }
    Ok(out)
}

/// Hermitian unit-trace 4×4 state on the one-photon-per-mode subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeState {
    data: CMatrix,
}

impl TwoModeState {
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.shape() != (4, 4) {
            return Err(Error::DimensionMismatch {
                expected: 4,
                found: data.nrows().max(data.ncols()),
            });
        }
        let drift = hermiticity_drift(&data);
        if drift > 1e-12 {
            return Err(Error::InvalidState(format!(
                "not Hermitian: max |ρ - ρ†| = {drift:e}"
            )));
        }
        let tr = trace(&data);
        if (tr - real(1.0)).norm() > 1e-12 {
            return Err(Error::InvalidState(format!(
                "trace is {} (deficit {:.3e})",
                tr.re,
                1.0 - tr.re
            )));
        }
        Ok(TwoModeState { data })
    }

    /// `ρ_ab` with the 1-based labels used for the basis.
    pub fn rho(&self, a: usize, b: usize) -> Complex64 {
        self.data[(a - 1, b - 1)]
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    /// Restriction of a full two-mode state to the subspace.
    pub fn extract(rho: &CMatrix, basis: &FockBasis) -> Result<Self> {
        let idx = two_mode_indices(basis)?;
        let data = CMatrix::from_fn(4, 4, |a, b| rho[(idx[a], idx[b])]);
        Self::new(data)
    }

    /// The same state as a density matrix on a two-mode Fock basis.
    pub fn embed(&self, basis: &Arc<FockBasis>) -> Result<DensityMatrix> {
        let idx = two_mode_indices(basis)?;
        let mut data = basis.zeros();
        for a in 0..4 {
            for b in 0..4 {
                data[(idx[a], idx[b])] = self.data[(a, b)];
            }
        }
        DensityMatrix::new(Arc::clone(basis), data)
    }

    /// `|⟨J⟩|`, which equals the degree of polarization since `⟨N⟩ = 2`.
    pub fn degree_of_polarization(&self) -> f64 {
        let (coh, diag) = self.polarization_terms();
        (coh * coh + diag * diag).sqrt()
    }

    /// `|ρ12 + ρ13 + ρ24 + ρ34|` and `|ρ11 − ρ44|`.
    fn polarization_terms(&self) -> (f64, f64) {
        let r = |a, b| self.rho(a, b);
        let coh = (r(1, 2) + r(1, 3) + r(2, 4) + r(3, 4)).norm();
        let diag = (r(1, 1) - r(4, 4)).norm();
        (coh, diag)
    }

    /// Same sum of squares without the square root.
    pub fn degree_without_sqrt(&self) -> f64 {
        let (coh, diag) = self.polarization_terms();
        coh * coh + diag * diag
    }
}

/// Two-mode depolarizing solution on the one-photon-per-mode subspace.
pub fn two_mode_solution(rho0: &TwoModeState, gamma1: f64, gamma2: f64, t: f64) -> TwoModeState {
    let r = |a, b| rho0.rho(a, b);
    let d = |a, b| rho0.rho(a, b).re;
    let f1 = (-gamma1 * t).exp();
    let f2 = (-gamma2 * t).exp();
    let e1 = f1 * f1;
    let e2 = f2 * f2;

    let mut out = CMatrix::zeros(4, 4);
    let mut set = |a: usize, b: usize, z: Complex64| {
        out[(a - 1, b - 1)] = z;
        out[(b - 1, a - 1)] = z.conj();
    };
    set(
        2,
        1,
        (r(2, 1) * (1.0 + e1) + r(4, 3) * (1.0 - e1)) * (0.5 * f2),
    );
    set(
        3,
        1,
        (r(3, 1) * (1.0 + e2) + r(4, 2) * (1.0 - e2)) * (0.5 * f1),
    );
    set(4, 1, r(4, 1) * (f1 * f2));
    set(3, 2, r(3, 2) * (f1 * f2));
    set(
        4,
        2,
        (r(4, 2) * (1.0 + e2) + r(3, 1) * (1.0 - e2)) * (0.5 * f1),
    );
    set(
        4,
        3,
        (r(4, 3) * (1.0 + e1) + r(2, 1) * (1.0 - e1)) * (0.5 * f2),
    );

    let diag = |a, b1, b2, b3| {
        0.25 * (1.0
            + (2.0 * (d(a, a) + d(b1, b1)) - 1.0) * e1
            + (2.0 * (d(a, a) + d(b2, b2)) - 1.0) * e2
            + (2.0 * (d(a, a) + d(b3, b3)) - 1.0) * e1 * e2)
    };
    let p11 = diag(1, 2, 3, 4);
    let p22 = diag(2, 1, 4, 3);
    let p33 = diag(3, 4, 1, 2);
    set(1, 1, real(p11));
    set(2, 2, real(p22));
    set(3, 3, real(p33));
    set(4, 4, real(1.0 - p11 - p22 - p33));
    TwoModeState { data: out }
}

/// Named two-mode states from the one-photon-per-mode subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoModePreset {
    /// `|+⟩₁|+⟩₂`.
    ProductPlusPlus,
    /// `(|+−⟩ + |−+⟩)/√2`.
    BellPlus,
    /// `(|+−⟩ − |−+⟩)/√2`.
    Singlet,
}

impl TwoModePreset {
    pub const ALL: [TwoModePreset; 3] = [
        TwoModePreset::ProductPlusPlus,
        TwoModePreset::BellPlus,
        TwoModePreset::Singlet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TwoModePreset::ProductPlusPlus => "product_pp",
            TwoModePreset::BellPlus => "bell_plus",
            TwoModePreset::Singlet => "singlet",
        }
    }

    pub fn state(self) -> TwoModeState {
        let mut m = CMatrix::zeros(4, 4);
        match self {
            TwoModePreset::ProductPlusPlus => m[(0, 0)] = real(1.0),
            TwoModePreset::BellPlus | TwoModePreset::Singlet => {
                let sign = if self == TwoModePreset::BellPlus {
                    0.5
                } else {
                    -0.5
                };
                m[(1, 1)] = real(0.5);
                m[(2, 2)] = real(0.5);
                m[(1, 2)] = real(sign);
                m[(2, 1)] = real(sign);
            }
        }
        TwoModeState { data: m }
    }

    /// Value of `P(t)` that the published derivation attributes to this state.
    pub fn claimed_degree(self, gamma1: f64, gamma2: f64, t: f64) -> f64 {
        match self {
            TwoModePreset::ProductPlusPlus => {
                0.5 * ((-2.0 * gamma1 * t).exp() + (-2.0 * gamma2 * t).exp())
            }
            TwoModePreset::BellPlus | TwoModePreset::Singlet => {
                0.5 * (-(gamma1 + gamma2) * t).exp()
            }
        }
    }
}

/// One row of the two-mode polarization comparison.
#[derive(Debug, Clone, Serialize)]
pub struct TwoModeClaimRow {
    pub state: &'static str,
    pub t: f64,
    /// `|⟨S⟩|/⟨N⟩` from the full numerical propagation.
    pub p_numeric: f64,
    /// Same quantity from the closed-form solution.
    pub p_closed_form: f64,
    /// Sum of squares with the square root omitted.
    pub p_without_sqrt: f64,
    pub p_claimed: f64,
    pub j_mean: [f64; 3],
    /// `|ρ23(t)|`.
    pub coherence_23: f64,
    pub singlet_population: f64,
    pub triplet_populations: [f64; 3],
    /// Weight of the `N = 2` block, numerically.
    pub block_weight: f64,
}

/// Propagates the product, `ψ+` and singlet states with the two-mode
/// depolarizing equation and tabulates the computed degree of polarization
/// against the claimed closed forms.
pub fn two_mode_claims(gamma1: f64, gamma2: f64, times: &[f64]) -> Result<Vec<TwoModeClaimRow>> {
    let basis = Arc::new(FockBasis::new(2, 2)?);
    let ops = crate::polarization::build_polarization_ops(&basis);
    let model = ModelSpec::multimode(vec![gamma1, gamma2]);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let singlet = [0.0, s, -s, 0.0];
    let psi_plus = [0.0, s, s, 0.0];
    let population = |st: &TwoModeState, v: &[f64; 4]| -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..4 {
            for b in 0..4 {
                acc += v[a] * st.matrix()[(a, b)] * v[b];
            }
        }
        acc.re
    };

    let mut rows = Vec::new();
    for preset in TwoModePreset::ALL {
        let rho0 = preset.state();
        let full = rho0.embed(&basis)?;
        for &t in times {
            let numeric = if t > 0.0 {
                let grid = TimeGrid::new(0.0, t, 1)?;
                evolve_exact(&full, &model, &grid)?
                    .states
                    .pop()
                    .expect("grid has a final sample")
            } else {
                full.matrix().clone()
            };
            let obs = crate::observables::observe(&numeric, &ops);
            let closed = two_mode_solution(&rho0, gamma1, gamma2, t);
            let j_mean = ops
                .cartesian()
                .map(|op| crate::observables::expectation(op.matrix(), &numeric).map(|z| z.re));
            let [jx, jy, jz] = j_mean;
            rows.push(TwoModeClaimRow {
                state: preset.name(),
                t,
                p_numeric: obs.degree,
                p_closed_form: closed.degree_of_polarization(),
                p_without_sqrt: closed.degree_without_sqrt(),
                p_claimed: preset.claimed_degree(gamma1, gamma2, t),
                j_mean: [jx?, jy?, jz?],
                coherence_23: closed.rho(2, 3).norm(),
                singlet_population: population(&closed, &singlet),
                triplet_populations: [
                    population(&closed, &psi_plus),
                    closed.rho(1, 1).re,
                    closed.rho(4, 4).re,
                ],
                block_weight: obs.block_weights[2],
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs, min_eigenvalue, random_density_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng) -> TwoModeState {
        TwoModeState::new(random_density_matrix(rng, 4, 4)).unwrap()
    }

    /// Independent route: each mode is a qubit depolarized by a Pauli-diagonal
    /// channel with transfer factors (1, e^{−γt}, e^{−γt}, e^{−2γt}).
    fn local_channels(rho: &CMatrix, g1: f64, g2: f64, t: f64) -> CMatrix {
        let paulis = [
            CMatrix::identity(2, 2),
            CMatrix::from_row_slice(2, 2, &[real(0.0), real(1.0), real(1.0), real(0.0)]),
            CMatrix::from_row_slice(2, 2, &[real(0.0), c(0.0, -1.0), c(0.0, 1.0), real(0.0)]),
            CMatrix::from_row_slice(2, 2, &[real(1.0), real(0.0), real(0.0), real(-1.0)]),
        ];
        let factors = |g: f64| {
            let f = (-g * t).exp();
            [1.0, f, f, f * f]
        };
        let (l1, l2) = (factors(g1), factors(g2));
        let mut out = CMatrix::zeros(4, 4);
        for a in 0..4 {
            for b in 0..4 {
                let sigma = paulis[a].kronecker(&paulis[b]);
                let coeff = (rho * &sigma).trace();
                out += sigma.scale(0.25) * (coeff * (l1[a] * l2[b]));
            }
        }
        out
    }

    #[test]
    fn bloch_oracles() {
        let s0 = PolarizationVector::new(1.0, 0.0, 0.0);
        let s = depolarizing_bloch(s0, 1.0, 2f64.ln());
        assert!((s.s_x - 0.5).abs() < 1e-15);
        let z = PolarizationVector::new(0.0, 0.0, 1.0);
        assert_eq!(dephasing_bloch(z, 0.3, 0.9, 5.0), z);
        let p = depolarizing_degree(PolarizationVector::new(0.6, 0.0, 0.8), 1.0, 0.0);
        assert!((p - 1.0).abs() < 1e-15);
    }

    #[test]
    fn steady_state_blocks() {
        let basis = Arc::new(FockBasis::new(1, 2).unwrap());
        let one = steady_state_block(1, &basis).unwrap();
        assert_eq!(one.matrix()[(1, 1)], real(0.5));
        assert_eq!(one.matrix()[(2, 2)], real(0.5));
        assert_eq!(
            *steady_state_block(0, &basis).unwrap().matrix(),
            basis.projector(0)
        );
        assert!(steady_state_block(3, &basis).is_err());
        let two = Arc::new(FockBasis::new(2, 2).unwrap());
        assert!(steady_state_block(1, &two).is_err());
    }

    #[test]
    fn closed_form_matches_local_channel_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 0..20 {
            let rho0 = random_state(&mut rng);
            let (g1, g2, t) = (0.2 + 0.1 * k as f64, 1.3 - 0.05 * k as f64, 0.1 * k as f64);
            let closed = two_mode_solution(&rho0, g1, g2, t);
            let expect = local_channels(rho0.matrix(), g1, g2, t);
            assert!(max_abs(&(closed.matrix() - expect)) < 1e-13);
        }
    }

    #[test]
    fn corner_coherence_and_product_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho0 = random_state(&mut rng);
        let out = two_mode_solution(&rho0, 0.4, 0.7, 1.5);
        let expect = rho0.rho(4, 1) * (-(0.4f64 + 0.7) * 1.5).exp();
        assert!((out.rho(4, 1) - expect).norm() < 1e-15);

        let prod = TwoModePreset::ProductPlusPlus.state();
        let (g1, g2, t) = (0.3, 1.1, 0.8);
        let st = two_mode_solution(&prod, g1, g2, t);
        let half_sum = 0.5 * ((-2.0 * g1 * t).exp() + (-2.0 * g2 * t).exp());
        assert!(((st.rho(1, 1) - st.rho(4, 4)).re - half_sum).abs() < 1e-15);
        assert!((st.degree_of_polarization() - half_sum).abs() < 1e-15);
    }

    #[test]
    fn semigroup_limit_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let rho0 = random_state(&mut rng);
            let a = two_mode_solution(&two_mode_solution(&rho0, 0.3, 0.8, 0.7), 0.3, 0.8, 1.1);
            let b = two_mode_solution(&rho0, 0.3, 0.8, 1.8);
            assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-10);
            assert!(min_eigenvalue(b.matrix()) >= -1e-10);
            let late = two_mode_solution(&rho0, 0.3, 0.8, 200.0);
            assert!(max_abs(&(late.matrix() - CMatrix::identity(4, 4).scale(0.25))) < 1e-12);
        }
    }

    #[test]
    fn state_validation_and_embedding() {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = real(0.9);
        let err = TwoModeState::new(m).unwrap_err().to_string();
        assert!(err.contains("deficit 1.000e-1"), "{err}");
        assert!(TwoModeState::new(CMatrix::zeros(3, 3)).is_err());

        let basis = Arc::new(FockBasis::new(2, 2).unwrap());
        let st = TwoModePreset::Singlet.state();
        let full = st.embed(&basis).unwrap();
        assert_eq!(TwoModeState::extract(full.matrix(), &basis).unwrap(), st);
        let small = FockBasis::new(2, 1).unwrap();
        assert!(two_mode_indices(&small).is_err());
    }

    #[test]
    fn bell_states_carry_no_mean_polarization() {
        for preset in [TwoModePreset::BellPlus, TwoModePreset::Singlet] {
            let st = two_mode_solution(&preset.state(), 0.5, 0.5, 0.3);
            assert!(st.degree_of_polarization() < 1e-15);
        }
    }
}
