use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::linalg::{hermiticity_drift, min_eigenvalue, real, trace, CMatrix, CVector};

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Hermitian, unit-trace, positive semidefinite state on a [`FockBasis`].
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    basis: Arc<FockBasis>,
    data: CMatrix,
}

impl DensityMatrix {
    pub fn new(basis: Arc<FockBasis>, data: CMatrix) -> Result<Self> {
        if data.nrows() != basis.dim() || data.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: data.nrows().max(data.ncols()),
            });
        }
        check_physical(&data)?;
        Ok(DensityMatrix { basis, data })
    }

    /// `|ψ⟩⟨ψ|` for a normalized amplitude vector.
    pub fn pure(basis: Arc<FockBasis>, amplitudes: &CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "state vector has norm {norm}, expected 1"
            )));
        }
        let data = amplitudes * amplitudes.adjoint();
        Self::new(basis, data)
    }

    /// Projector onto a single occupation state.
    pub fn occupation(basis: Arc<FockBasis>, occupation: &[u32]) -> Result<Self> {
        let i = basis
            .index_of(occupation)
            .ok_or_else(|| Error::InvalidArgument(format!("{occupation:?} is not in the basis")))?;
        let data = basis.projector(i);
        Ok(DensityMatrix { basis, data })
    }

    pub fn vacuum(basis: Arc<FockBasis>) -> Self {
        let data = basis.projector(0);
        DensityMatrix { basis, data }
    }

    pub(crate) fn from_trusted(basis: Arc<FockBasis>, data: CMatrix) -> Self {
        DensityMatrix { basis, data }
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }
}

impl AsRef<CMatrix> for DensityMatrix {
    fn as_ref(&self) -> &CMatrix {
        &self.data
    }
}

/// Checks the density-matrix invariants, reporting the measured violation.
pub fn check_physical(data: &CMatrix) -> Result<()> {
    if data.nrows() != data.ncols() {
        return Err(Error::InvalidState(format!(
            "matrix is {}x{}, not square",
            data.nrows(),
            data.ncols()
        )));
    }
    if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidState("matrix has non-finite entries".into()));
    }
    let drift = hermiticity_drift(data);
    if drift > HERMITICITY_TOL {
        return Err(Error::InvalidState(format!(
            "not Hermitian: max |ρ - ρ†| = {drift:e}"
        )));
    }
    let tr = trace(data);
    let deficit = (real(1.0) - tr).norm();
    if deficit > TRACE_TOL {
        return Err(Error::InvalidState(format!(
            "trace is {} (deficit {:.3e})",
            tr.re,
            1.0 - tr.re
        )));
    }
    let min_eig = min_eigenvalue(data);
    if min_eig < -POSITIVITY_TOL {
        return Err(Error::InvalidState(format!(
            "negative eigenvalue {min_eig:e}"
        )));
    }
    Ok(())
}
