//! Time evolution of density matrices.
//!
//! [`evolve_rk4`] is the workhorse; [`evolve_exact`] exponentiates the
//! Liouvillian and serves as its oracle. Neither renormalizes: a state that
//! leaves the physical set beyond [`DriftBounds`] aborts the run with the
//! offending time.

use std::collections::HashMap;
use std::sync::Arc;

use log::warn;
use serde::Serialize;

use crate::density::DensityMatrix;
use crate::error::{Drift, Error, Result};
use crate::fock::FockBasis;
use crate::linalg::{
    hermiticity_drift, min_eigenvalue, trace, unvec, vec_of, CMatrix, Exponential,
};
use crate::lindblad::{Generator, ModelSpec};
use crate::observables::{observe, Observables};
use crate::polarization::build_polarization_ops;

/// Step size warning threshold for `γ_max · dt`.
pub const RK4_STEP_WARN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub n_steps: usize,
    pub sample_every: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, n_steps: usize) -> Result<Self> {
        Self::sampled(t0, t1, n_steps, 1)
    }

    pub fn sampled(t0: f64, t1: f64, n_steps: usize, sample_every: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t1 <= t0 {
            return Err(Error::InvalidArgument(format!(
                "time grid needs finite t1 > t0, got [{t0}, {t1}]"
            )));
        }
        if n_steps == 0 || sample_every == 0 {
            return Err(Error::InvalidArgument(
                "n_steps and sample_every must be at least 1".into(),
            ));
        }
        Ok(TimeGrid {
            t0,
            t1,
            n_steps,
            sample_every,
        })
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.n_steps as f64
    }

    /// Step indices at which a sample is recorded; always includes both ends.
    pub fn sample_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (0..=self.n_steps).step_by(self.sample_every).collect();
        if *steps.last().expect("step 0 is always sampled") != self.n_steps {
            steps.push(self.n_steps);
        }
        steps
    }

    pub fn time_at(&self, step: usize) -> f64 {
        if step == self.n_steps {
            self.t1
        } else {
            self.t0 + step as f64 * self.dt()
        }
    }

    pub fn sample_times(&self) -> Vec<f64> {
        self.sample_steps()
            .into_iter()
            .map(|k| self.time_at(k))
            .collect()
    }
}

/// Tolerated drift of a propagated state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftBounds {
    pub trace: f64,
    pub hermiticity: f64,
    pub positivity: f64,
}

impl Default for DriftBounds {
    fn default() -> Self {
        DriftBounds {
            trace: 1e-9,
            hermiticity: 1e-10,
            positivity: 1e-8,
        }
    }
}

impl DriftBounds {
    pub fn check(&self, rho: &CMatrix, time: f64) -> Result<()> {
        let tr = (trace(rho).re - 1.0).abs().max(trace(rho).im.abs());
        if tr.is_nan() || tr > self.trace {
            return Err(Error::InvariantDrift {
                time,
                kind: Drift::Trace,
                value: tr,
            });
        }
        let herm = hermiticity_drift(rho);
        if herm.is_nan() || herm > self.hermiticity {
            return Err(Error::InvariantDrift {
                time,
                kind: Drift::Hermiticity,
                value: herm,
            });
        }
        let min_eig = min_eigenvalue(rho);
        if min_eig.is_nan() || min_eig < -self.positivity {
            return Err(Error::InvariantDrift {
                time,
                kind: Drift::Positivity,
                value: min_eig,
            });
        }
        Ok(())
    }
}

/// Sampled evolution of a field state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub basis: Arc<FockBasis>,
    pub times: Vec<f64>,
    pub records: Vec<Observables>,
    pub states: Vec<CMatrix>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&CMatrix> {
        self.states.last()
    }

    pub(crate) fn from_states(
        basis: Arc<FockBasis>,
        times: Vec<f64>,
        states: Vec<CMatrix>,
    ) -> Self {
        let ops = build_polarization_ops(&basis);
        let records = states.iter().map(|rho| observe(rho, &ops)).collect();
        Trajectory {
            basis,
            times,
            records,
            states,
        }
    }
}

fn rk4_step(gen: &Generator, rho: &CMatrix, dt: f64) -> CMatrix {
    let k1 = gen.apply(rho);
    let k2 = gen.apply(&(rho + k1.scale(dt / 2.0)));
    let k3 = gen.apply(&(rho + k2.scale(dt / 2.0)));
    let k4 = gen.apply(&(rho + k3.scale(dt)));
    rho + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0)
}

/// Fixed-step RK4 under an arbitrary generator; returns the sampled states.
pub fn propagate_rk4(
    gen: &Generator,
    rho0: &CMatrix,
    grid: &TimeGrid,
    bounds: &DriftBounds,
) -> Result<Vec<CMatrix>> {
    let dt = grid.dt();
    let steps = grid.sample_steps();
    let mut out = Vec::with_capacity(steps.len());
    let mut rho = rho0.clone();
    let mut k = 0;
    for &target in &steps {
        while k < target {
            rho = rk4_step(gen, &rho, dt);
            k += 1;
        }
        bounds.check(&rho, grid.time_at(k))?;
        out.push(rho.clone());
    }
    Ok(out)
}

/// `vec(ρ(t)) = exp(L (t − t0)) vec(ρ0)` at every sample time.
pub fn propagate_exact(
    liouvillian: &Exponential,
    rho0: &CMatrix,
    grid: &TimeGrid,
    bounds: &DriftBounds,
) -> Result<Vec<CMatrix>> {
    let dim = rho0.nrows();
    let dt = grid.dt();
    let steps = grid.sample_steps();
    let mut cache: HashMap<usize, CMatrix> = HashMap::new();
    let mut out = Vec::with_capacity(steps.len());
    let mut v = vec_of(rho0);
    let mut prev = 0usize;
    for &k in &steps {
        if k > prev {
            let gap = k - prev;
            let span = grid.time_at(k) - grid.time_at(prev);
            let step = if k == grid.n_steps {
                liouvillian.at(span)
            } else {
                cache
                    .entry(gap)
                    .or_insert_with(|| liouvillian.at(gap as f64 * dt))
                    .clone()
            };
            v = step * v;
            prev = k;
        }
        let rho = unvec(&v, dim);
        bounds.check(&rho, grid.time_at(k))?;
        out.push(rho);
    }
    Ok(out)
}

fn warn_step(model: &ModelSpec, grid: &TimeGrid) {
    let stiffness = model.max_rate() * grid.dt();
    if stiffness > RK4_STEP_WARN {
        warn!("RK4 step gamma_max*dt = {stiffness:.3} exceeds {RK4_STEP_WARN}; expect drift");
    }
}

pub fn evolve_rk4(rho0: &DensityMatrix, model: &ModelSpec, grid: &TimeGrid) -> Result<Trajectory> {
    let basis = Arc::clone(rho0.basis());
    let ops = build_polarization_ops(&basis);
    let gen = Generator::for_model(model, &ops)?;
    warn_step(model, grid);
    let states = propagate_rk4(&gen, rho0.matrix(), grid, &DriftBounds::default())?;
    Ok(Trajectory::from_states(basis, grid.sample_times(), states))
}

pub fn evolve_exact(
    rho0: &DensityMatrix,
    model: &ModelSpec,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    let basis = Arc::clone(rho0.basis());
    let ops = build_polarization_ops(&basis);
    let l = Generator::for_model(model, &ops)?.liouvillian()?;
    let exp = Exponential::new(l);
    let states = propagate_exact(&exp, rho0.matrix(), grid, &DriftBounds::default())?;
    Ok(Trajectory::from_states(basis, grid.sample_times(), states))
}
