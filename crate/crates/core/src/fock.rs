//! Truncated Fock spaces of `m` spatiotemporal modes, each carrying two
//! circular polarizations.
//!
//! Occupation tuples are laid out mode-major, `+` before `−`:
//! `(n_{1+}, n_{1−}, n_{2+}, n_{2−}, …)`. The space is truncated by total
//! photon number, so every fixed-`N` block is kept whole. States are ordered
//! by ascending `N`; inside a block the tuple with more photons in earlier
//! slots comes first, which for one mode gives `|1,0⟩, |0,1⟩` and for two
//! modes reproduces the product basis `|++⟩, |+−⟩, |−+⟩, |−−⟩`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{real, CMatrix};

/// Default ceiling on the number of basis states.
pub const DEFAULT_MAX_STATES: usize = 10_000;

/// Circular polarization label of a mode operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    Plus,
    Minus,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::Plus, Polarization::Minus];

    fn offset(self) -> usize {
        match self {
            Polarization::Plus => 0,
            Polarization::Minus => 1,
        }
    }

    fn symbol(self) -> char {
        match self {
            Polarization::Plus => '+',
            Polarization::Minus => '-',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockBasis {
    modes: usize,
    n_max: usize,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
    block_offsets: Vec<usize>,
}

impl FockBasis {
    pub fn new(modes: usize, n_max: usize) -> Result<Self> {
        Self::with_limit(modes, n_max, DEFAULT_MAX_STATES)
    }

    pub fn with_limit(modes: usize, n_max: usize, max_states: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidArgument(
                "mode count must be at least 1".into(),
            ));
        }
        let slots = 2 * modes;
        let mut requested = 0usize;
        for n in 0..=n_max {
            requested = requested.saturating_add(block_size(slots, n));
        }
        if requested > max_states {
            return Err(Error::SizeLimit {
                what: "Fock basis",
                requested,
                limit: max_states,
            });
        }

        let mut states = Vec::with_capacity(requested);
        let mut block_offsets = Vec::with_capacity(n_max + 1);
        let mut scratch = vec![0u32; slots];
        for n in 0..=n_max {
            block_offsets.push(states.len());
            compositions(n as u32, 0, &mut scratch, &mut states);
        }
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(FockBasis {
            modes,
            n_max,
            states,
            index,
            block_offsets,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<u32>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &[u32] {
        &self.states[i]
    }

    pub fn index_of(&self, occupation: &[u32]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    pub fn block_offsets(&self) -> &[usize] {
        &self.block_offsets
    }

    /// Index range of the fixed-`N` block.
    pub fn block_range(&self, n: usize) -> std::ops::Range<usize> {
        assert!(n <= self.n_max, "block {n} above cutoff {}", self.n_max);
        let start = self.block_offsets[n];
        let end = self
            .block_offsets
            .get(n + 1)
            .copied()
            .unwrap_or(self.states.len());
        start..end
    }

    pub fn block_dim(&self, n: usize) -> usize {
        self.block_range(n).len()
    }

    /// Total photon number of basis state `i`.
    pub fn photons(&self, i: usize) -> usize {
        self.states[i].iter().map(|&k| k as usize).sum()
    }

    /// Slot of `(mode, polarization)` inside an occupation tuple.
    pub fn slot(&self, mode: usize, pol: Polarization) -> usize {
        2 * mode + pol.offset()
    }

    pub fn zeros(&self) -> CMatrix {
        CMatrix::zeros(self.dim(), self.dim())
    }

    /// Projector `|i⟩⟨i|`.
    pub fn projector(&self, i: usize) -> CMatrix {
        let mut m = self.zeros();
        m[(i, i)] = real(1.0);
        m
    }
}

/// `C(N + slots − 1, slots − 1)`, saturating.
pub fn block_size(slots: usize, n: usize) -> usize {
    let k = slots.saturating_sub(1);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n + k - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

// Fills `scratch[slot..]` with every composition of `remaining`, largest
// leading entry first.
fn compositions(remaining: u32, slot: usize, scratch: &mut [u32], out: &mut Vec<Vec<u32>>) {
    if slot + 1 == scratch.len() {
        scratch[slot] = remaining;
        out.push(scratch.to_vec());
        return;
    }
    for k in (0..=remaining).rev() {
        scratch[slot] = k;
        compositions(remaining - k, slot + 1, scratch, out);
    }
    scratch[slot] = 0;
}

/// Dense operator on a [`FockBasis`].
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    basis: Arc<FockBasis>,
    label: String,
    data: CMatrix,
}

impl OperatorMatrix {
    pub fn new(basis: Arc<FockBasis>, label: impl Into<String>, data: CMatrix) -> Result<Self> {
        let dim = basis.dim();
        if data.nrows() != dim || data.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.nrows().max(data.ncols()),
            });
        }
        Ok(OperatorMatrix {
            basis,
            label: label.into(),
            data,
        })
    }

    pub(crate) fn from_parts(basis: Arc<FockBasis>, label: String, data: CMatrix) -> Self {
        debug_assert_eq!(data.nrows(), basis.dim());
        OperatorMatrix { basis, label, data }
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn dagger(&self) -> OperatorMatrix {
        OperatorMatrix::from_parts(
            Arc::clone(&self.basis),
            format!("({})†", self.label),
            self.data.adjoint(),
        )
    }
}

impl fmt::Display for OperatorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}x{}]",
            self.label,
            self.data.nrows(),
            self.data.ncols()
        )
    }
}

fn check_mode(basis: &FockBasis, mode: usize) -> Result<()> {
    if mode >= basis.modes() {
        return Err(Error::InvalidArgument(format!(
            "mode index {mode} out of range for {} modes",
            basis.modes()
        )));
    }
    Ok(())
}

/// `a_{js}`: `⟨…, n−1, …| a |…, n, …⟩ = √n`.
pub fn annihilation_op(
    basis: &Arc<FockBasis>,
    mode: usize,
    pol: Polarization,
) -> Result<OperatorMatrix> {
    check_mode(basis, mode)?;
    let slot = basis.slot(mode, pol);
    let mut data = basis.zeros();
    let mut lowered = vec![0u32; 2 * basis.modes()];
    for (col, state) in basis.states().iter().enumerate() {
        let n = state[slot];
        if n == 0 {
            continue;
        }
        lowered.copy_from_slice(state);
        lowered[slot] -= 1;
        let row = basis
            .index_of(&lowered)
            .expect("lowering stays inside a total-number truncation");
        data[(row, col)] = real((n as f64).sqrt());
    }
    Ok(OperatorMatrix::from_parts(
        Arc::clone(basis),
        format!("a_{}{}", mode + 1, pol.symbol()),
        data,
    ))
}

/// `a†_{js}`; amplitudes that would leave the cutoff are dropped.
pub fn creation_op(
    basis: &Arc<FockBasis>,
    mode: usize,
    pol: Polarization,
) -> Result<OperatorMatrix> {
    let a = annihilation_op(basis, mode, pol)?;
    Ok(OperatorMatrix::from_parts(
        Arc::clone(basis),
        format!("a†_{}{}", mode + 1, pol.symbol()),
        a.into_matrix().adjoint(),
    ))
}

/// `a†_{js} a_{js}`, diagonal.
pub fn number_op(basis: &Arc<FockBasis>, mode: usize, pol: Polarization) -> Result<OperatorMatrix> {
    check_mode(basis, mode)?;
    let slot = basis.slot(mode, pol);
    let mut data = basis.zeros();
    for (i, state) in basis.states().iter().enumerate() {
        data[(i, i)] = real(state[slot] as f64);
    }
    Ok(OperatorMatrix::from_parts(
        Arc::clone(basis),
        format!("n_{}{}", mode + 1, pol.symbol()),
        data,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, identity, max_abs};

    fn basis(m: usize, n: usize) -> Arc<FockBasis> {
        Arc::new(FockBasis::new(m, n).unwrap())
    }

    #[test]
    fn one_mode_one_photon_ordering() {
        let b = basis(1, 1);
        assert_eq!(b.states(), &[vec![0, 0], vec![1, 0], vec![0, 1]]);
        assert_eq!(b.block_offsets(), &[0, 1]);
        assert_eq!(b.block_dim(0), 1);
        assert_eq!(b.block_dim(1), 2);
    }

    #[test]
    fn one_mode_block_sizes_are_n_plus_one() {
        let b = basis(1, 2);
        assert_eq!(b.dim(), 6);
        let sizes: Vec<_> = (0..=2).map(|n| b.block_dim(n)).collect();
        assert_eq!(sizes, vec![1, 2, 3]);
    }

    #[test]
    fn two_mode_one_photon_each_matches_product_order() {
        let b = basis(2, 2);
        let pos: Vec<_> = [[1, 0, 1, 0], [1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 0, 1]]
            .iter()
            .map(|s| b.index_of(s).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{pos:?}");
    }

    #[test]
    fn rejects_zero_modes_and_oversize() {
        assert!(matches!(
            FockBasis::new(0, 2),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            FockBasis::new(4, 12),
            Err(Error::SizeLimit { .. })
        ));
        assert!(FockBasis::with_limit(1, 3, 9).is_err());
        assert!(FockBasis::with_limit(1, 3, 10).is_ok());
    }

    #[test]
    fn annihilation_on_single_photon_and_vacuum() {
        let b = basis(1, 1);
        let a = annihilation_op(&b, 0, Polarization::Plus).unwrap();
        let one = b.index_of(&[1, 0]).unwrap();
        let vac = b.index_of(&[0, 0]).unwrap();
        assert_eq!(a.matrix()[(vac, one)], real(1.0));
        assert!(a.matrix().column(vac).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn creation_truncates_at_cutoff() {
        let b = basis(1, 1);
        let ad = creation_op(&b, 0, Polarization::Plus).unwrap();
        let one = b.index_of(&[1, 0]).unwrap();
        let vac = b.index_of(&[0, 0]).unwrap();
        assert_eq!(ad.matrix()[(one, vac)], real(1.0));
        assert!(ad.matrix().column(one).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn creation_is_adjoint_of_annihilation() {
        let b = basis(2, 3);
        for mode in 0..2 {
            for pol in Polarization::BOTH {
                let a = annihilation_op(&b, mode, pol).unwrap();
                let ad = creation_op(&b, mode, pol).unwrap();
                assert_eq!(a.matrix().adjoint(), *ad.matrix());
            }
        }
    }

    #[test]
    fn canonical_commutator_below_cutoff() {
        let b = basis(2, 3);
        let below = b.block_offsets()[3];
        for mode in 0..2 {
            for pol in Polarization::BOTH {
                let a = annihilation_op(&b, mode, pol).unwrap();
                let ad = creation_op(&b, mode, pol).unwrap();
                let comm = commutator(a.matrix(), ad.matrix());
                let head = comm.view((0, 0), (below, below)).into_owned();
                assert!(max_abs(&(head - identity(below))) < 1e-14);
            }
        }
    }

    #[test]
    fn distinct_modes_commute_everywhere() {
        let b = basis(2, 3);
        let mut ops = Vec::new();
        for mode in 0..2 {
            for pol in Polarization::BOTH {
                ops.push((
                    (mode, pol),
                    annihilation_op(&b, mode, pol).unwrap().into_matrix(),
                ));
            }
        }
        let below = b.block_offsets()[3];
        for (ka, a) in &ops {
            for (kb, bop) in &ops {
                if ka == kb {
                    continue;
                }
                assert!(max_abs(&commutator(a, bop)) < 1e-14);
                assert!(max_abs(&commutator(&a.adjoint(), &bop.adjoint())) < 1e-14);
                // a_i a†_j loses the top block to truncation, a†_j a_i does not.
                let mixed = commutator(a, &bop.adjoint());
                let head = mixed.view((0, 0), (below, below)).into_owned();
                assert!(max_abs(&head) < 1e-14);
            }
        }
    }

    #[test]
    fn mode_index_checked() {
        let b = basis(1, 1);
        assert!(annihilation_op(&b, 1, Polarization::Plus).is_err());
    }

    #[test]
    fn block_size_formula() {
        assert_eq!(block_size(2, 3), 4);
        assert_eq!(block_size(4, 2), 10);
        assert_eq!(block_size(4, 0), 1);
    }
}
