//! Lindblad generators for the field-level master equations.
//!
//! All four models share the dissipator `L[C] ρ = 2 C ρ C† − {C† C, ρ}`:
//!
//! * damping: `ρ̇ = Σ_s (γ_s/2) L[a_s] ρ`
//! * dephasing: `ρ̇ = Σ_s (γ_s/2) L[a_s† a_s] ρ`
//! * depolarizing: `ρ̇ = (γ/2)(L[N] + L[J_+] + L[J_−]) ρ`
//! * multimode: `ρ̇ = Σ_j (γ_j/2)(L[N_j] + L[J_{j+}] + L[J_{j−}]) ρ`
//!
//! The free term `−i Σ_j ω_j [N_j, ρ]` is added only when
//! `include_unitary` is set; it commutes with every polarization observable.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation_op, number_op, FockBasis, Polarization};
use crate::linalg::{identity, kron, CMatrix, I, ZERO};
use crate::polarization::{build_polarization_ops, PolarizationOperators};
use num_complex::Complex64;

/// Ceiling on the Hilbert-space dimension squared for superoperators, i.e.
/// a Liouvillian has at most `4096²` entries.
pub const DEFAULT_SUPEROPERATOR_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Damping { gamma_plus: f64, gamma_minus: f64 },
    Dephasing { gamma_plus: f64, gamma_minus: f64 },
    Depolarizing { gamma: f64 },
    Multimode { gamma_j: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Per-mode angular frequencies; empty means all zero.
    #[serde(default)]
    pub omega_j: Vec<f64>,
    #[serde(default)]
    pub include_unitary: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            omega_j: Vec::new(),
            include_unitary: false,
        }
    }

    pub fn damping(gamma_plus: f64, gamma_minus: f64) -> Self {
        Self::new(ModelKind::Damping {
            gamma_plus,
            gamma_minus,
        })
    }

    pub fn dephasing(gamma_plus: f64, gamma_minus: f64) -> Self {
        Self::new(ModelKind::Dephasing {
            gamma_plus,
            gamma_minus,
        })
    }

    pub fn depolarizing(gamma: f64) -> Self {
        Self::new(ModelKind::Depolarizing { gamma })
    }

    pub fn multimode(gamma_j: Vec<f64>) -> Self {
        Self::new(ModelKind::Multimode { gamma_j })
    }

    /// Switch on `−i Σ_j ω_j [N_j, ρ]`.
    pub fn with_unitary(mut self, omega_j: Vec<f64>) -> Self {
        self.omega_j = omega_j;
        self.include_unitary = true;
        self
    }

    pub fn rates(&self) -> Vec<f64> {
        match &self.kind {
            ModelKind::Damping {
                gamma_plus,
                gamma_minus,
            }
            | ModelKind::Dephasing {
                gamma_plus,
                gamma_minus,
            } => vec![*gamma_plus, *gamma_minus],
            ModelKind::Depolarizing { gamma } => vec![*gamma],
            ModelKind::Multimode { gamma_j } => gamma_j.clone(),
        }
    }

    pub fn max_rate(&self) -> f64 {
        self.rates().into_iter().fold(0.0, f64::max)
    }

    /// Mode count the model is written for, if fixed.
    pub fn required_modes(&self) -> Option<usize> {
        match &self.kind {
            ModelKind::Multimode { gamma_j } => Some(gamma_j.len()),
            _ => Some(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in self.rates() {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "rate {r} must be finite and nonnegative"
                )));
            }
        }
        if let Some(w) = self.omega_j.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "frequency {w} is not finite"
            )));
        }
        if let ModelKind::Multimode { gamma_j } = &self.kind {
            if gamma_j.is_empty() {
                return Err(Error::InvalidArgument(
                    "multimode model needs gamma_j".into(),
                ));
            }
        }
        Ok(())
    }

    fn check_basis(&self, basis: &FockBasis) -> Result<()> {
        self.validate()?;
        if let Some(m) = self.required_modes() {
            if m != basis.modes() {
                return Err(Error::InvalidArgument(format!(
                    "model is written for {m} mode(s), basis has {}",
                    basis.modes()
                )));
            }
        }
        if !self.omega_j.is_empty() && self.omega_j.len() != basis.modes() {
            return Err(Error::InvalidArgument(format!(
                "{} frequencies given for {} modes",
                self.omega_j.len(),
                basis.modes()
            )));
        }
        Ok(())
    }
}

/// `L[C] ρ = 2 C ρ C† − C†C ρ − ρ C†C`.
pub fn lindblad_apply(c: &CMatrix, rho: &CMatrix) -> Result<CMatrix> {
    if !c.is_square() || c.shape() != rho.shape() {
        return Err(Error::DimensionMismatch {
            expected: c.nrows(),
            found: rho.nrows(),
        });
    }
    let cd = c.adjoint();
    let cdc = &cd * c;
    Ok((c * rho * &cd).scale(2.0) - &cdc * rho - rho * &cdc)
}

/// One `coefficient · L[C]` term with `C†C` cached.
#[derive(Debug, Clone)]
pub struct Dissipator {
    pub coefficient: f64,
    pub op: CMatrix,
    op_dag: CMatrix,
    op_dag_op: CMatrix,
}

impl Dissipator {
    pub fn new(coefficient: f64, op: CMatrix) -> Self {
        let op_dag = op.adjoint();
        let op_dag_op = &op_dag * &op;
        Dissipator {
            coefficient,
            op,
            op_dag,
            op_dag_op,
        }
    }

    fn accumulate(&self, rho: &CMatrix, out: &mut CMatrix) {
        if self.coefficient == 0.0 {
            return;
        }
        let jump = &self.op * rho * &self.op_dag;
        let anti = &self.op_dag_op * rho + rho * &self.op_dag_op;
        *out += (jump.scale(2.0) - anti).scale(self.coefficient);
    }
}

/// `ρ ↦ −i[H, ρ] + Σ_k c_k L[C_k] ρ` on a fixed dimension.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    hamiltonian: Option<CMatrix>,
    dissipators: Vec<Dissipator>,
    // K = −iH − Σ c C†C, so that ρ̇ = Kρ + ρK† + Σ 2c CρC†.
    drift: Triplets,
    jumps: Vec<(f64, Triplets)>,
}

/// Nonzero entries `(row, col, value)` of a matrix.
#[derive(Debug, Clone)]
struct Triplets(Vec<(usize, usize, Complex64)>);

impl Triplets {
    fn of(m: &CMatrix) -> Self {
        let mut out = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != ZERO {
                    out.push((i, j, v));
                }
            }
        }
        Triplets(out)
    }
}

impl Generator {
    pub fn new(
        dim: usize,
        hamiltonian: Option<CMatrix>,
        dissipators: Vec<Dissipator>,
    ) -> Result<Self> {
        let shapes = hamiltonian
            .iter()
            .map(|h| h.shape())
            .chain(dissipators.iter().map(|d| d.op.shape()));
        for (r, c) in shapes {
            if r != dim || c != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.max(c),
                });
            }
        }
        let mut k = CMatrix::zeros(dim, dim);
        if let Some(h) = &hamiltonian {
            k -= h * I;
        }
        let mut jumps = Vec::new();
        for d in dissipators.iter().filter(|d| d.coefficient != 0.0) {
            k -= d.op_dag_op.scale(d.coefficient);
            jumps.push((2.0 * d.coefficient, Triplets::of(&d.op)));
        }
        Ok(Generator {
            dim,
            hamiltonian,
            dissipators,
            drift: Triplets::of(&k),
            jumps,
        })
    }

    pub fn for_model(model: &ModelSpec, ops: &PolarizationOperators) -> Result<Self> {
        let basis = ops.basis();
        model.check_basis(basis)?;
        let mut terms = Vec::new();
        match &model.kind {
            ModelKind::Damping {
                gamma_plus,
                gamma_minus,
            } => {
                for (pol, rate) in [
                    (Polarization::Plus, gamma_plus),
                    (Polarization::Minus, gamma_minus),
                ] {
                    let a = annihilation_op(basis, 0, pol)?.into_matrix();
                    terms.push(Dissipator::new(rate / 2.0, a));
                }
            }
            ModelKind::Dephasing {
                gamma_plus,
                gamma_minus,
            } => {
                for (pol, rate) in [
                    (Polarization::Plus, gamma_plus),
                    (Polarization::Minus, gamma_minus),
                ] {
                    let n = number_op(basis, 0, pol)?.into_matrix();
                    terms.push(Dissipator::new(rate / 2.0, n));
                }
            }
            ModelKind::Depolarizing { gamma } => {
                for op in [&ops.n_total, &ops.j_plus, &ops.j_minus] {
                    terms.push(Dissipator::new(gamma / 2.0, op.matrix().clone()));
                }
            }
            ModelKind::Multimode { gamma_j } => {
                for (mode, rate) in ops.per_mode.iter().zip(gamma_j) {
                    for op in [&mode.n, &mode.j_plus, &mode.j_minus] {
                        terms.push(Dissipator::new(rate / 2.0, op.matrix().clone()));
                    }
                }
            }
        }

        let hamiltonian = if model.include_unitary && model.omega_j.iter().any(|w| *w != 0.0) {
            let mut h = basis.zeros();
            for (mode, w) in ops.per_mode.iter().zip(&model.omega_j) {
                h += mode.n.matrix().scale(*w);
            }
            Some(h)
        } else {
            None
        };
        Generator::new(basis.dim(), hamiltonian, terms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> Option<&CMatrix> {
        self.hamiltonian.as_ref()
    }

    pub fn dissipators(&self) -> &[Dissipator] {
        &self.dissipators
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let n = self.dim;
        let mut out = CMatrix::zeros(n, n);
        for &(a, i, k) in &self.drift.0 {
            for j in 0..n {
                out[(a, j)] += k * rho[(i, j)];
                out[(j, a)] += rho[(j, i)] * k.conj();
            }
        }
        for (w, c) in &self.jumps {
            for &(a, i, ca) in &c.0 {
                let ca = ca * *w;
                for &(b, j, cb) in &c.0 {
                    out[(a, b)] += ca * rho[(i, j)] * cb.conj();
                }
            }
        }
        out
    }

    /// Dense reference for [`Generator::apply`].
    pub fn apply_dense(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        if let Some(h) = &self.hamiltonian {
            out += (h * rho - rho * h) * (-I);
        }
        for d in &self.dissipators {
            d.accumulate(rho, &mut out);
        }
        out
    }

    pub fn liouvillian(&self) -> Result<CMatrix> {
        self.liouvillian_with_limit(DEFAULT_SUPEROPERATOR_LIMIT)
    }

    /// Column-stacking superoperator; `limit` bounds `dim²`.
    pub fn liouvillian_with_limit(&self, limit: usize) -> Result<CMatrix> {
        let n = self.dim;
        if n * n > limit {
            return Err(Error::SizeLimit {
                what: "Liouvillian",
                requested: n * n,
                limit,
            });
        }
        let id = identity(n);
        let mut l = CMatrix::zeros(n * n, n * n);
        if let Some(h) = &self.hamiltonian {
            l += (kron(&id, h) - kron(&h.transpose(), &id)) * (-I);
        }
        for d in &self.dissipators {
            if d.coefficient == 0.0 {
                continue;
            }
            let jump = kron(&d.op.conjugate(), &d.op).scale(2.0);
            let anti = kron(&id, &d.op_dag_op) + kron(&d.op_dag_op.transpose(), &id);
            l += (jump - anti).scale(d.coefficient);
        }
        Ok(l)
    }
}

/// Right-hand side of `model` at `rho`.
pub fn rhs(model: &ModelSpec, ops: &PolarizationOperators, rho: &CMatrix) -> Result<CMatrix> {
    let dim = ops.basis().dim();
    if rho.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: rho.nrows().max(rho.ncols()),
        });
    }
    Ok(Generator::for_model(model, ops)?.apply(rho))
}

pub fn build_liouvillian(model: &ModelSpec, basis: &Arc<FockBasis>) -> Result<CMatrix> {
    build_liouvillian_with_limit(model, basis, DEFAULT_SUPEROPERATOR_LIMIT)
}

pub fn build_liouvillian_with_limit(
    model: &ModelSpec,
    basis: &Arc<FockBasis>,
    limit: usize,
) -> Result<CMatrix> {
    let n = basis.dim();
    if n * n > limit {
        return Err(Error::SizeLimit {
            what: "Liouvillian",
            requested: n * n,
            limit,
        });
    }
    let ops = build_polarization_ops(basis);
    Generator::for_model(model, &ops)?.liouvillian_with_limit(limit)
}
