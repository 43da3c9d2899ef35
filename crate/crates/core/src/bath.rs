//! Microscopic random-phase bath: a single field mode (two polarizations)
//! coupled dispersively to thermally damped two-level atoms.
//!
//! The composite space is `field ⊗ atom_1 ⊗ … ⊗ atom_n` with each atom in
//! the basis `{|e⟩, |g⟩}`. Couplings are `g_± = |g| e^{±iφ/2}` with one
//! random phase `φ` per atom. Averaging the reduced field dynamics over the
//! phases should reproduce the depolarizing master equation.

use std::sync::Arc;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::linalg::{c, identity, kron, real, CMatrix, Exponential, ZERO};
use crate::lindblad::{Dissipator, Generator, ModelSpec};
use crate::observables::{observe, Observables};
use crate::polarization::{build_polarization_ops, PolarizationOperators};
use crate::propagator::{
    evolve_exact, propagate_exact, propagate_rk4, DriftBounds, TimeGrid, Trajectory,
};

/// `|g|/|Δ|` above which the dispersive approximation is flagged.
pub const DISPERSIVE_LIMIT: f64 = 0.1;
/// `n̄` below which the high-temperature assumption is flagged.
pub const HIGH_TEMPERATURE_LIMIT: f64 = 10.0;
/// `γ_λ n̄_λ Δ_λ / ‖𝒥_λ‖` below which atoms are not clearly faster than the
/// field dynamics they induce.
pub const SEPARATION_WARN: f64 = 10.0;
pub const MAX_ATOMS: usize = 8;
pub const MAX_COMPOSITE_DIM: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    /// Coupling magnitude `|g|`.
    pub g_abs: f64,
    /// Detuning `Δ = ω_atom − ω`.
    pub delta: f64,
    /// Decay rate into the thermal reservoir.
    pub gamma_decay: f64,
    /// Thermal occupation of the reservoir.
    pub n_bar: f64,
}

impl AtomSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g_abs", self.g_abs),
            ("delta", self.delta),
            ("gamma_decay", self.gamma_decay),
            ("n_bar", self.n_bar),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("atom {name} is {v}")));
            }
        }
        if self.g_abs < 0.0 || self.gamma_decay < 0.0 || self.n_bar < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "atom parameters must be nonnegative: {self:?}"
            )));
        }
        if self.delta == 0.0 {
            return Err(Error::InvalidArgument(
                "resonant atom (delta = 0) has no dispersive limit".into(),
            ));
        }
        Ok(())
    }

    pub fn dispersive_ratio(&self) -> f64 {
        self.g_abs / self.delta.abs()
    }

    /// Phase-dependent couplings `(g_+, g_−)`.
    pub fn couplings(&self, phi: f64) -> [num_complex::Complex64; 2] {
        [
            num_complex::Complex64::from_polar(self.g_abs, phi / 2.0),
            num_complex::Complex64::from_polar(self.g_abs, -phi / 2.0),
        ]
    }
}

/// Which system Hamiltonian drives the composite dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    #[default]
    Full,
    Effective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathModel {
    pub atoms: Vec<AtomSpec>,
    /// Field frequency; zero works in the frame rotating with `ω𝒩`.
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub hamiltonian: HamiltonianKind,
    /// Keep the atom-atom exchange term of the effective Hamiltonian.
    #[serde(default)]
    pub cross_atom_term: bool,
}

impl BathModel {
    pub fn new(atoms: Vec<AtomSpec>) -> Self {
        BathModel {
            atoms,
            omega: 0.0,
            hamiltonian: HamiltonianKind::Full,
            cross_atom_term: false,
        }
    }

    pub fn effective(mut self) -> Self {
        self.hamiltonian = HamiltonianKind::Effective;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms.is_empty() || self.atoms.len() > MAX_ATOMS {
            return Err(Error::InvalidArgument(format!(
                "need 1..={MAX_ATOMS} atoms, got {}",
                self.atoms.len()
            )));
        }
        if !self.omega.is_finite() {
            return Err(Error::InvalidArgument(format!("omega is {}", self.omega)));
        }
        self.atoms.iter().try_for_each(AtomSpec::validate)
    }
}

/// `field ⊗ atoms` with the field index major.
#[derive(Debug, Clone)]
pub struct CompositeBasis {
    field: Arc<FockBasis>,
    n_atoms: usize,
}

impl CompositeBasis {
    pub fn new(field: Arc<FockBasis>, n_atoms: usize) -> Result<Self> {
        if field.modes() != 1 {
            return Err(Error::InvalidArgument(format!(
                "the atomic bath couples to one field mode, basis has {}",
                field.modes()
            )));
        }
        if n_atoms == 0 || n_atoms > MAX_ATOMS {
            return Err(Error::InvalidArgument(format!(
                "need 1..={MAX_ATOMS} atoms, got {n_atoms}"
            )));
        }
        let dim = field.dim() << n_atoms;
        if dim > MAX_COMPOSITE_DIM {
            return Err(Error::SizeLimit {
                what: "composite dimension",
                requested: dim,
                limit: MAX_COMPOSITE_DIM,
            });
        }
        Ok(CompositeBasis { field, n_atoms })
    }

    pub fn field(&self) -> &Arc<FockBasis> {
        &self.field
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn atom_dim(&self) -> usize {
        1 << self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.field.dim() * self.atom_dim()
    }

    pub fn index(&self, field: usize, atoms: usize) -> usize {
        field * self.atom_dim() + atoms
    }

    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / self.atom_dim(), index % self.atom_dim())
    }

    /// `A ⊗ 1_atoms`.
    pub fn lift_field(&self, op: &CMatrix) -> CMatrix {
        kron(op, &identity(self.atom_dim()))
    }

    /// A single-atom operator acting on atom `k`.
    pub fn atom_op(&self, k: usize, op: &CMatrix) -> CMatrix {
        let before = identity(self.field.dim() << k);
        let after = identity(1 << (self.n_atoms - k - 1));
        kron(&kron(&before, op), &after)
    }

    /// `ρ_field ⊗ (1/2)^{⊗n}`.
    pub fn with_mixed_atoms(&self, rho_field: &CMatrix) -> CMatrix {
        let atoms = identity(self.atom_dim()).unscale(self.atom_dim() as f64);
        kron(rho_field, &atoms)
    }

    pub fn trace_atoms(&self, rho: &CMatrix) -> CMatrix {
        let a = self.atom_dim();
        CMatrix::from_fn(self.field.dim(), self.field.dim(), |i, j| {
            (0..a).map(|k| rho[(i * a + k, j * a + k)]).sum()
        })
    }

    /// `𝒩 = N + Σ_λ σ_λ^z / 2`.
    pub fn excitation_number(&self, ops: &PolarizationOperators) -> CMatrix {
        let mut out = self.lift_field(ops.n_total.matrix());
        for k in 0..self.n_atoms {
            out += self.atom_op(k, &sigma_z()).scale(0.5);
        }
        out
    }
}

/// `σ^− = |g⟩⟨e|` in the basis `{|e⟩, |g⟩}`.
pub fn sigma_minus() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, real(1.0), ZERO])
}

pub fn sigma_plus() -> CMatrix {
    sigma_minus().adjoint()
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[real(1.0), ZERO, ZERO, real(-1.0)])
}

/// Field operators derived from one atom at a given phase.
#[derive(Debug, Clone)]
pub struct DerivedFrequencies {
    /// `δ = |g|²/Δ`.
    pub delta_shift: f64,
    /// `𝒥 = 2|g|²(N + J_+ e^{iφ} + J_− e^{−iφ})`.
    pub j_op: CMatrix,
    /// `Ω = Δ + δ + 𝒥/Δ`.
    pub omega: CMatrix,
}

pub fn derived_frequencies(
    atom: &AtomSpec,
    phi: f64,
    ops: &PolarizationOperators,
) -> DerivedFrequencies {
    let g2 = atom.g_abs * atom.g_abs;
    let delta_shift = g2 / atom.delta;
    let phase = c(phi.cos(), phi.sin());
    let j_op =
        (ops.n_total.matrix() + ops.j_plus.matrix() * phase + ops.j_minus.matrix() * phase.conj())
            .scale(2.0 * g2);
    let dim = j_op.nrows();
    let omega = identity(dim).scale(atom.delta + delta_shift) + j_op.unscale(atom.delta);
    DerivedFrequencies {
        delta_shift,
        j_op,
        omega,
    }
}

fn check_phases(model: &BathModel, composite: &CompositeBasis, phases: &[f64]) -> Result<()> {
    if phases.len() != model.atoms.len() || composite.n_atoms() != model.atoms.len() {
        return Err(Error::DimensionMismatch {
            expected: model.atoms.len(),
            found: if phases.len() != model.atoms.len() {
                phases.len()
            } else {
                composite.n_atoms()
            },
        });
    }
    Ok(())
}

/// `ω N + Σ_λ ω_λ σ_λ^z / 2 + Σ_λ Σ_s (g_{λs} σ_λ^− a_s† + h.c.)`, written
/// as `ω 𝒩 + Σ_λ Δ_λ σ_λ^z / 2 + V`.
pub fn build_full_hamiltonian(
    model: &BathModel,
    composite: &CompositeBasis,
    phases: &[f64],
) -> Result<CMatrix> {
    check_phases(model, composite, phases)?;
    let field = composite.field();
    let ops = build_polarization_ops(field);
    let mut h = composite.excitation_number(&ops).scale(model.omega);
    let creation = [
        crate::fock::creation_op(field, 0, crate::fock::Polarization::Plus)?.into_matrix(),
        crate::fock::creation_op(field, 0, crate::fock::Polarization::Minus)?.into_matrix(),
    ];
    for (k, (atom, &phi)) in model.atoms.iter().zip(phases).enumerate() {
        h += composite.atom_op(k, &sigma_z()).scale(atom.delta / 2.0);
        let [gp, gm] = atom.couplings(phi);
        let b = &creation[0] * gp + &creation[1] * gm;
        let v = kron(&b, &identity(composite.atom_dim())) * composite.atom_op(k, &sigma_minus());
        h += &v + v.adjoint();
    }
    Ok(h)
}

/// `ω 𝒩 + Σ_λ Ω_λ σ_λ^z / 2`, plus the atom-atom exchange term when
/// `model.cross_atom_term` is set.
pub fn build_effective_hamiltonian(
    model: &BathModel,
    composite: &CompositeBasis,
    phases: &[f64],
) -> Result<CMatrix> {
    check_phases(model, composite, phases)?;
    let ops = build_polarization_ops(composite.field());
    let mut h = composite.excitation_number(&ops).scale(model.omega);
    for (k, (atom, &phi)) in model.atoms.iter().zip(phases).enumerate() {
        let freq = derived_frequencies(atom, phi, &ops);
        h += composite.lift_field(&freq.omega) * composite.atom_op(k, &sigma_z()).scale(0.5);
    }
    if model.cross_atom_term {
        for (k, (a, &pa)) in model.atoms.iter().zip(phases).enumerate() {
            for (l, (b, &pb)) in model.atoms.iter().zip(phases).enumerate() {
                if k == l {
                    continue;
                }
                let ga = a.couplings(pa);
                let gb = b.couplings(pb);
                let coupling: num_complex::Complex64 =
                    ga.iter().zip(&gb).map(|(x, y)| x * y.conj()).sum();
                let weight = coupling * (0.5 * (1.0 / a.delta + 1.0 / b.delta));
                h += composite.atom_op(k, &sigma_plus())
                    * composite.atom_op(l, &sigma_minus())
                    * weight;
            }
        }
    }
    Ok(h)
}

/// Generator of the composite master equation: Hamiltonian part plus
/// `(γ_λ/2)[(n̄_λ+1) L[σ_λ^−] + n̄_λ L[σ_λ^+]]` for every atom.
pub fn bath_generator(
    model: &BathModel,
    composite: &CompositeBasis,
    phases: &[f64],
) -> Result<Generator> {
    model.validate()?;
    let h = match model.hamiltonian {
        HamiltonianKind::Full => build_full_hamiltonian(model, composite, phases)?,
        HamiltonianKind::Effective => build_effective_hamiltonian(model, composite, phases)?,
    };
    let mut terms = Vec::with_capacity(2 * model.atoms.len());
    for (k, atom) in model.atoms.iter().enumerate() {
        let half = atom.gamma_decay / 2.0;
        terms.push(Dissipator::new(
            half * (atom.n_bar + 1.0),
            composite.atom_op(k, &sigma_minus()),
        ));
        terms.push(Dissipator::new(
            half * atom.n_bar,
            composite.atom_op(k, &sigma_plus()),
        ));
    }
    Generator::new(composite.dim(), Some(h), terms)
}

/// Time derivative of the composite state.
pub fn rhs_full(
    model: &BathModel,
    composite: &CompositeBasis,
    phases: &[f64],
    rho_sys: &CMatrix,
) -> Result<CMatrix> {
    if rho_sys.shape() != (composite.dim(), composite.dim()) {
        return Err(Error::DimensionMismatch {
            expected: composite.dim(),
            found: rho_sys.nrows().max(rho_sys.ncols()),
        });
    }
    Ok(bath_generator(model, composite, phases)?.apply(rho_sys))
}

/// `γ = 4 Σ_λ |g_λ|⁴ / (γ_λ Δ_λ² n̄_λ)`.
pub fn gamma_effective(atoms: &[AtomSpec]) -> Result<f64> {
    let mut total = 0.0;
    for atom in atoms {
        if atom.gamma_decay == 0.0 || atom.delta == 0.0 || atom.n_bar == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "effective rate needs nonzero gamma_decay, delta and n_bar: {atom:?}"
            )));
        }
        total +=
            4.0 * atom.g_abs.powi(4) / (atom.gamma_decay * atom.delta * atom.delta * atom.n_bar);
    }
    Ok(total)
}

/// Rate obtained by eliminating a telegraph-noise atom with flip rate
/// `γ_λ(2n̄_λ + 1)`: `Σ_λ 2|g_λ|⁴ / (γ_λ (2n̄_λ + 1) Δ_λ²)`.
pub fn gamma_elimination(atoms: &[AtomSpec]) -> Result<f64> {
    let mut total = 0.0;
    for atom in atoms {
        if atom.gamma_decay == 0.0 || atom.delta == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "effective rate needs nonzero gamma_decay and delta: {atom:?}"
            )));
        }
        let flip = atom.gamma_decay * (2.0 * atom.n_bar + 1.0);
        total += 2.0 * atom.g_abs.powi(4) / (flip * atom.delta * atom.delta);
    }
    Ok(total)
}

/// Regime diagnostics for a bath run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    /// Largest `|g|/|Δ|`.
    pub dispersive_ratio: f64,
    pub min_n_bar: f64,
    /// Smallest `γ_λ n̄_λ / (‖𝒥_λ‖/|Δ_λ|)` on the highest occupied block.
    pub separation_ratio: f64,
    pub warnings: Vec<String>,
    /// Set when an approximation is plainly broken, not merely marginal.
    pub violated: bool,
}

/// Checks the dispersive, high-temperature and timescale-separation
/// assumptions for a given initial field state.
pub fn assess_regime(atoms: &[AtomSpec], rho_field0: &DensityMatrix) -> RegimeReport {
    let weights = crate::polarization::block_weights(rho_field0.matrix(), rho_field0.basis());
    let top = weights.iter().rposition(|w| *w > 1e-12).unwrap_or(0).max(1) as f64;
    let mut report = RegimeReport {
        dispersive_ratio: 0.0,
        min_n_bar: f64::INFINITY,
        separation_ratio: f64::INFINITY,
        warnings: Vec::new(),
        violated: false,
    };
    for (k, atom) in atoms.iter().enumerate() {
        let ratio = atom.dispersive_ratio();
        report.dispersive_ratio = report.dispersive_ratio.max(ratio);
        if ratio > DISPERSIVE_LIMIT {
            report.warnings.push(format!(
                "atom {k}: |g|/|delta| = {ratio:.3} exceeds {DISPERSIVE_LIMIT}, not dispersive"
            ));
            report.violated = true;
        }
        report.min_n_bar = report.min_n_bar.min(atom.n_bar);
        if atom.n_bar < HIGH_TEMPERATURE_LIMIT {
            report.warnings.push(format!(
                "atom {k}: n_bar = {} below {HIGH_TEMPERATURE_LIMIT}, not high temperature",
                atom.n_bar
            ));
        }
        // ‖𝒥‖ on block N is 2|g|²(N + N) for the extremal J_x eigenvalue.
        let j_norm = 4.0 * atom.g_abs * atom.g_abs * top;
        let separation = if j_norm == 0.0 {
            f64::INFINITY
        } else {
            atom.gamma_decay * atom.n_bar * atom.delta.abs() / j_norm
        };
        report.separation_ratio = report.separation_ratio.min(separation);
        if separation < 1.0 {
            report.warnings.push(format!(
                "atom {k}: bath rate is slower than the induced field rotation (ratio {separation:.3})"
            ));
            report.violated = true;
        } else if separation < SEPARATION_WARN {
            report.warnings.push(format!(
                "atom {k}: weak timescale separation, ratio {separation:.3}"
            ));
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    #[default]
    Exact,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSettings {
    pub n_samples: usize,
    pub seed: u64,
    /// Pair every phase draw `φ` with `−φ`.
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default)]
    pub propagation: Propagation,
}

impl EnsembleSettings {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        EnsembleSettings {
            n_samples,
            seed,
            antithetic: false,
            propagation: Propagation::Exact,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument(
                "n_samples must be at least 1".into(),
            ));
        }
        if self.antithetic && !self.n_samples.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "antithetic sampling needs an even n_samples, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }
}

/// Phases of sample `index`. Each sample (or antithetic pair) draws from its
/// own ChaCha stream, so the draw does not depend on scheduling.
pub fn sample_phases(settings: &EnsembleSettings, n_atoms: usize, index: usize) -> Vec<f64> {
    let (stream, flip) = if settings.antithetic {
        (index / 2, index % 2 == 1)
    } else {
        (index, false)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    rng.set_stream(stream as u64);
    (0..n_atoms)
        .map(|_| {
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            if flip {
                -phi
            } else {
                phi
            }
        })
        .collect()
}

/// Monte-Carlo standard errors of the per-sample observables.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct ObservableErrors {
    pub s_x: f64,
    pub s_y: f64,
    pub s_z: f64,
    pub degree: f64,
}

impl ObservableErrors {
    pub fn as_array(&self) -> [f64; 4] {
        [self.s_x, self.s_y, self.s_z, self.degree]
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    /// Phase-averaged reduced field states and their observables.
    pub trajectory: Trajectory,
    pub stderr: Vec<ObservableErrors>,
    pub regime: RegimeReport,
    /// Largest total-variation change of the block weights.
    pub leakage: f64,
    pub n_samples: usize,
}

fn observable_array(obs: &Observables) -> [f64; 4] {
    [obs.s.s_x, obs.s.s_y, obs.s.s_z, obs.degree]
}

/// Sums in a fixed binary tree so the rounding does not depend on how the
/// samples were scheduled.
fn pairwise_sum<T: Clone>(items: &[T], add: &impl Fn(&T, &T) -> T) -> T {
    match items.len() {
        0 => panic!("pairwise_sum of an empty slice"),
        1 => items[0].clone(),
        n => {
            let (left, right) = items.split_at(n / 2);
            add(&pairwise_sum(left, add), &pairwise_sum(right, add))
        }
    }
}

/// Propagates one composite state for a fixed phase draw and returns the
/// sampled composite states.
pub fn propagate_composite(
    model: &BathModel,
    composite: &CompositeBasis,
    phases: &[f64],
    rho_sys0: &CMatrix,
    grid: &TimeGrid,
    propagation: Propagation,
) -> Result<Vec<CMatrix>> {
    let gen = bath_generator(model, composite, phases)?;
    let bounds = DriftBounds::default();
    match propagation {
        Propagation::Exact => {
            let exp = Exponential::new(gen.liouvillian()?);
            propagate_exact(&exp, rho_sys0, grid, &bounds)
        }
        Propagation::Rk4 => propagate_rk4(&gen, rho_sys0, grid, &bounds),
    }
}

/// Draws phases, propagates the composite system from `ρ_field ⊗ 1/2^n`,
/// traces out the atoms and averages over the ensemble.
pub fn run_phase_ensemble(
    model: &BathModel,
    rho_field0: &DensityMatrix,
    grid: &TimeGrid,
    settings: &EnsembleSettings,
) -> Result<EnsembleResult> {
    model.validate()?;
    settings.validate()?;
    let field = Arc::clone(rho_field0.basis());
    let composite = CompositeBasis::new(Arc::clone(&field), model.atoms.len())?;
    let regime = assess_regime(&model.atoms, rho_field0);
    for w in &regime.warnings {
        warn!("{w}");
    }
    let ops = build_polarization_ops(&field);
    let rho_sys0 = composite.with_mixed_atoms(rho_field0.matrix());

    let per_sample: Vec<Vec<CMatrix>> = (0..settings.n_samples)
        .into_par_iter()
        .map(|index| {
            let phases = sample_phases(settings, model.atoms.len(), index);
            let states = propagate_composite(
                model,
                &composite,
                &phases,
                &rho_sys0,
                grid,
                settings.propagation,
            )?;
            Ok(states.iter().map(|s| composite.trace_atoms(s)).collect())
        })
        .collect::<Result<_>>()?;

    let n = settings.n_samples as f64;
    let n_times = grid.sample_steps().len();
    let mut averaged = Vec::with_capacity(n_times);
    let mut stderr = Vec::with_capacity(n_times);
    // Antithetic pairs are the independent units for the error estimate.
    let group = if settings.antithetic { 2 } else { 1 };
    let groups = settings.n_samples / group;
    for k in 0..n_times {
        let states: Vec<&CMatrix> = per_sample.iter().map(|s| &s[k]).collect();
        let mean = pairwise_sum(
            &states.iter().map(|s| (*s).clone()).collect::<Vec<_>>(),
            &|a, b| a + b,
        )
        .unscale(n);
        let values: Vec<[f64; 4]> = states
            .chunks(group)
            .map(|chunk| {
                let mut acc = [0.0; 4];
                for s in chunk {
                    let v = observable_array(&observe(s, &ops));
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += x / chunk.len() as f64;
                    }
                }
                acc
            })
            .collect();
        let mut err = [0.0; 4];
        if groups > 1 {
            for (j, e) in err.iter_mut().enumerate() {
                let col: Vec<f64> = values.iter().map(|v| v[j]).collect();
                let mu = pairwise_sum(&col, &|a, b| a + b) / groups as f64;
                let sq: Vec<f64> = col.iter().map(|x| (x - mu) * (x - mu)).collect();
                let var = pairwise_sum(&sq, &|a, b| a + b) / (groups - 1) as f64;
                *e = (var / groups as f64).sqrt();
            }
        }
        stderr.push(ObservableErrors {
            s_x: err[0],
            s_y: err[1],
            s_z: err[2],
            degree: err[3],
        });
        averaged.push(mean);
    }

    let trajectory = Trajectory::from_states(field, grid.sample_times(), averaged);
    let initial = &trajectory.records[0].block_weights;
    let leakage = trajectory
        .records
        .iter()
        .map(|r| {
            0.5 * r
                .block_weights
                .iter()
                .zip(initial)
                .map(|(w, w0)| (w - w0).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    Ok(EnsembleResult {
        trajectory,
        stderr,
        regime,
        leakage,
        n_samples: settings.n_samples,
    })
}

/// Deviation of a phase-averaged bath run from the depolarizing equation.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveComparison {
    pub gamma: f64,
    /// Max `|bath − effective|` for `s_x, s_y, s_z, P`.
    pub max_abs_deviation: [f64; 4],
    /// Max `|bath − effective| / stderr` over samples with a nonzero error.
    pub max_normalized_deviation: [Option<f64>; 4],
    pub regime: RegimeReport,
    #[serde(skip)]
    pub effective: Trajectory,
}

/// Propagates the depolarizing equation at `rate` (the closed-form
/// effective rate when `None`) and compares it with `averaged`.
pub fn compare_to_effective(
    averaged: &EnsembleResult,
    model: &BathModel,
    rho_field0: &DensityMatrix,
    grid: &TimeGrid,
    rate: Option<f64>,
) -> Result<EffectiveComparison> {
    let times = grid.sample_times();
    if times != averaged.trajectory.times {
        return Err(Error::InvalidArgument(format!(
            "grid has {} samples, averaged trajectory has {}",
            times.len(),
            averaged.trajectory.times.len()
        )));
    }
    let gamma = match rate {
        Some(g) => g,
        None if model.atoms.iter().all(|a| a.g_abs == 0.0) => 0.0,
        None => gamma_effective(&model.atoms)?,
    };
    let mut spec = ModelSpec::depolarizing(gamma);
    if model.omega != 0.0 {
        spec = spec.with_unitary(vec![model.omega]);
    }
    let effective = evolve_exact(rho_field0, &spec, grid)?;
    let mut max_abs = [0.0f64; 4];
    let mut max_norm = [None::<f64>; 4];
    for ((bath, eff), err) in averaged
        .trajectory
        .records
        .iter()
        .zip(&effective.records)
        .zip(&averaged.stderr)
    {
        let (b, e, s) = (
            observable_array(bath),
            observable_array(eff),
            err.as_array(),
        );
        for j in 0..4 {
            let d = (b[j] - e[j]).abs();
            max_abs[j] = max_abs[j].max(d);
            if s[j] > 0.0 {
                let r = d / s[j];
                max_norm[j] = Some(max_norm[j].map_or(r, |m| m.max(r)));
            }
        }
    }
    Ok(EffectiveComparison {
        gamma,
        max_abs_deviation: max_abs,
        max_normalized_deviation: max_norm,
        regime: averaged.regime.clone(),
        effective,
    })
}

/// Least-squares `k` in `y ≈ A e^{−k t}` from the positive samples.
pub fn fit_decay_rate(times: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, y)| **y > 0.0)
        .map(|(t, y)| (*t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt) * (t - mt)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}
