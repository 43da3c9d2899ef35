//! JSON scenario files and the runner behind the `depol` binary.
//!
//! A scenario names a model, a basis, an initial state and a time grid:
//!
//! ```json
//! {"model": "depolarizing", "m": 1, "N_max": 1, "gamma": 1.0,
//!  "state": "plus", "t1": 2.0, "n_steps": 2000}
//! ```
//!
//! Unknown keys are rejected. Rates that do not belong to the chosen model
//! are rejected too, so a typo cannot silently fall back to a default.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bath::{
    compare_to_effective, fit_decay_rate, gamma_effective, gamma_elimination, run_phase_ensemble,
    AtomSpec, BathModel, EnsembleSettings, HamiltonianKind, ObservableErrors, Propagation,
};
use crate::density::DensityMatrix;
use crate::error::{Drift, Error, Result};
use crate::fock::FockBasis;
use crate::linalg::{c, real, CMatrix, CVector};
use crate::lindblad::{ModelKind, ModelSpec};
use crate::oracles::{TwoModePreset, TwoModeState};
use crate::propagator::{
    evolve_exact, evolve_rk4, DriftBounds, TimeGrid, Trajectory, RK4_STEP_WARN,
};

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable consulted for the default output directory.
pub const OUT_DIR_ENV: &str = "DEPOL_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Damping,
    Dephasing,
    Depolarizing,
    Multimode,
    Microscopic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    Exact,
}

/// Named initial states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Plus,
    Minus,
    XPlus,
    Vacuum,
    BellPlus,
    BellMinus,
    Singlet,
    ProductPp,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Plus,
        Preset::Minus,
        Preset::XPlus,
        Preset::Vacuum,
        Preset::BellPlus,
        Preset::BellMinus,
        Preset::Singlet,
        Preset::ProductPp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Plus => "plus",
            Preset::Minus => "minus",
            Preset::XPlus => "x_plus",
            Preset::Vacuum => "vacuum",
            Preset::BellPlus => "bell_plus",
            Preset::BellMinus => "bell_minus",
            Preset::Singlet => "singlet",
            Preset::ProductPp => "product_pp",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Plus => "one photon, |+>  (m = 1)",
            Preset::Minus => "one photon, |->  (m = 1)",
            Preset::XPlus => "one photon, (|+> + |->)/sqrt2  (m = 1)",
            Preset::Vacuum => "no photons  (any m)",
            Preset::BellPlus => "(|+>1|->2 + |->1|+>2)/sqrt2  (m = 2)",
            Preset::BellMinus => "same as singlet  (m = 2)",
            Preset::Singlet => "(|+>1|->2 - |->1|+>2)/sqrt2  (m = 2)",
            Preset::ProductPp => "|+>1|+>2  (m = 2)",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn build(self, basis: &Arc<FockBasis>) -> Result<DensityMatrix> {
        let one_mode = |occ: &[u32]| -> Result<DensityMatrix> {
            self.require(basis, 1, 1)?;
            DensityMatrix::occupation(Arc::clone(basis), occ)
        };
        let two_mode = |p: TwoModePreset| -> Result<DensityMatrix> {
            self.require(basis, 2, 2)?;
            p.state().embed(basis)
        };
        match self {
            Preset::Plus => one_mode(&[1, 0]),
            Preset::Minus => one_mode(&[0, 1]),
            Preset::XPlus => {
                self.require(basis, 1, 1)?;
                let mut psi = CVector::zeros(basis.dim());
                let amp = real(std::f64::consts::FRAC_1_SQRT_2);
                psi[basis.index_of(&[1, 0]).expect("one photon fits")] = amp;
                psi[basis.index_of(&[0, 1]).expect("one photon fits")] = amp;
                DensityMatrix::pure(Arc::clone(basis), &psi)
            }
            Preset::Vacuum => Ok(DensityMatrix::vacuum(Arc::clone(basis))),
            Preset::BellPlus => two_mode(TwoModePreset::BellPlus),
            Preset::BellMinus | Preset::Singlet => two_mode(TwoModePreset::Singlet),
            Preset::ProductPp => two_mode(TwoModePreset::ProductPlusPlus),
        }
    }

    fn require(self, basis: &FockBasis, modes: usize, n_min: usize) -> Result<()> {
        if basis.modes() != modes || basis.n_max() < n_min {
            return Err(Error::InvalidArgument(format!(
                "preset `{}` needs m = {modes} and N_max >= {n_min}, got m = {}, N_max = {}",
                self.name(),
                basis.modes(),
                basis.n_max()
            )));
        }
        Ok(())
    }
}

/// A preset name or an explicit matrix of `[re, im]` pairs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpec {
    Preset(Preset),
    Matrix(Vec<Vec<[f64; 2]>>),
}

impl Serialize for StateSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StateSpec::Preset(p) => s.serialize_str(p.name()),
            StateSpec::Matrix(m) => json!({ "matrix": m }).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for StateSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let value = Value::deserialize(d)?;
        match value {
            Value::String(name) => {
                Preset::from_name(&name)
                    .map(StateSpec::Preset)
                    .ok_or_else(|| {
                        let known: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                        D::Error::custom(format!(
                            "unknown preset `{name}`, expected one of {known:?}"
                        ))
                    })
            }
            Value::Object(mut map) => {
                let matrix = map
                    .remove("matrix")
                    .ok_or_else(|| D::Error::custom("explicit state needs a `matrix` key"))?;
                if let Some(extra) = map.keys().next() {
                    return Err(D::Error::custom(format!("unknown key `{extra}` in state")));
                }
                serde_json::from_value(matrix)
                    .map(StateSpec::Matrix)
                    .map_err(|e| D::Error::custom(format!("matrix: {e}")))
            }
            other => Err(D::Error::custom(format!(
                "state must be a preset name or {{\"matrix\": ...}}, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Used when neither `--out` nor the environment variable is set.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_csv")]
    pub csv: PathBuf,
    #[serde(default = "default_metadata")]
    pub metadata: PathBuf,
    /// `null` disables the final-state dump.
    #[serde(default = "default_final_state")]
    pub final_state: Option<PathBuf>,
}

fn default_csv() -> PathBuf {
    "trajectory.csv".into()
}

fn default_metadata() -> PathBuf {
    "metadata.json".into()
}

fn default_final_state() -> Option<PathBuf> {
    Some("final_state.json".into())
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            csv: default_csv(),
            metadata: default_metadata(),
            final_state: default_final_state(),
        }
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_sample_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub model: ModelName,
    pub m: usize,
    #[serde(alias = "N_max")]
    pub n_max: usize,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_j: Option<Vec<f64>>,
    #[serde(default)]
    pub omega_j: Vec<f64>,
    #[serde(default)]
    pub include_unitary: bool,

    pub state: StateSpec,
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    pub n_steps: usize,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub seed: u64,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<Vec<AtomSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<HamiltonianKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_atom_term: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antithetic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagation: Option<Propagation>,

    #[serde(default)]
    pub output: OutputSpec,
}

pub const DEFAULT_SAMPLES: usize = 256;

/// Parses and fully validates a scenario, including its initial state.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| Error::config(".", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        self.check_keys()?;
        self.grid()?;
        if let Some(spec) = self.model_spec() {
            spec.validate()
                .map_err(|e| Error::config("model", e.to_string()))?;
        }
        if let Some(bath) = self.bath_model() {
            bath.validate()
                .map_err(|e| Error::config("atoms", e.to_string()))?;
            if self.samples() == 0 {
                return Err(Error::config("n_samples", "must be at least 1"));
            }
            if self.antithetic.unwrap_or(false) && !self.samples().is_multiple_of(2) {
                return Err(Error::config(
                    "n_samples",
                    "antithetic sampling needs an even count",
                ));
            }
        }
        self.initial_state()?;
        Ok(())
    }

    fn check_keys(&self) -> Result<()> {
        let rates: [(&str, bool); 4] = [
            ("gamma", self.gamma.is_some()),
            ("gamma_plus", self.gamma_plus.is_some()),
            ("gamma_minus", self.gamma_minus.is_some()),
            ("gamma_j", self.gamma_j.is_some()),
        ];
        let bath_keys: [(&str, bool); 7] = [
            ("atoms", self.atoms.is_some()),
            ("omega", self.omega.is_some()),
            ("hamiltonian", self.hamiltonian.is_some()),
            ("cross_atom_term", self.cross_atom_term.is_some()),
            ("n_samples", self.n_samples.is_some()),
            ("antithetic", self.antithetic.is_some()),
            ("propagation", self.propagation.is_some()),
        ];
        let (required, modes): (&[&str], Option<usize>) = match self.model {
            ModelName::Damping | ModelName::Dephasing => (&["gamma_plus", "gamma_minus"], Some(1)),
            ModelName::Depolarizing => (&["gamma"], Some(1)),
            ModelName::Multimode => (&["gamma_j"], None),
            ModelName::Microscopic => (&["atoms"], Some(1)),
        };
        for (key, present) in rates {
            if present && !required.contains(&key) {
                return Err(Error::config(
                    key,
                    format!("not used by model {:?}", self.model),
                ));
            }
            if !present && required.contains(&key) {
                return Err(Error::config(
                    key,
                    format!("required by model {:?}", self.model),
                ));
            }
        }
        let microscopic = self.model == ModelName::Microscopic;
        for (key, present) in bath_keys {
            if present && !microscopic {
                return Err(Error::config(key, "only used by the microscopic model"));
            }
        }
        if microscopic && self.atoms.is_none() {
            return Err(Error::config("atoms", "required by model Microscopic"));
        }
        if microscopic && (self.include_unitary || !self.omega_j.is_empty()) {
            return Err(Error::config(
                "include_unitary",
                "the microscopic model takes its field frequency from `omega`",
            ));
        }
        if self.m == 0 {
            return Err(Error::config("m", "need at least one mode"));
        }
        if let Some(m) = modes {
            if self.m != m {
                return Err(Error::config(
                    "m",
                    format!("model {:?} needs m = {m}", self.model),
                ));
            }
        }
        if let Some(g) = &self.gamma_j {
            if g.len() != self.m {
                return Err(Error::config(
                    "gamma_j",
                    format!("{} rates for m = {}", g.len(), self.m),
                ));
            }
        }
        if !self.omega_j.is_empty() && self.omega_j.len() != self.m {
            return Err(Error::config(
                "omega_j",
                format!("{} frequencies for m = {}", self.omega_j.len(), self.m),
            ));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<Arc<FockBasis>> {
        FockBasis::new(self.m, self.n_max)
            .map(Arc::new)
            .map_err(|e| Error::config("N_max", e.to_string()))
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::sampled(self.t0, self.t1, self.n_steps, self.sample_every)
            .map_err(|e| Error::config("t1", e.to_string()))
    }

    pub fn initial_state(&self) -> Result<DensityMatrix> {
        let basis = self.basis()?;
        let state = match &self.state {
            StateSpec::Preset(p) => p.build(&basis),
            StateSpec::Matrix(rows) => explicit_state(rows, &basis),
        };
        state.map_err(|e| Error::config("state", e.to_string()))
    }

    /// Field-level model, `None` for the microscopic bath.
    pub fn model_spec(&self) -> Option<ModelSpec> {
        let kind = match self.model {
            ModelName::Damping => ModelKind::Damping {
                gamma_plus: self.gamma_plus?,
                gamma_minus: self.gamma_minus?,
            },
            ModelName::Dephasing => ModelKind::Dephasing {
                gamma_plus: self.gamma_plus?,
                gamma_minus: self.gamma_minus?,
            },
            ModelName::Depolarizing => ModelKind::Depolarizing { gamma: self.gamma? },
            ModelName::Multimode => ModelKind::Multimode {
                gamma_j: self.gamma_j.clone()?,
            },
            ModelName::Microscopic => return None,
        };
        Some(ModelSpec {
            kind,
            omega_j: self.omega_j.clone(),
            include_unitary: self.include_unitary,
        })
    }

    pub fn bath_model(&self) -> Option<BathModel> {
        if self.model != ModelName::Microscopic {
            return None;
        }
        Some(BathModel {
            atoms: self.atoms.clone()?,
            omega: self.omega.unwrap_or(0.0),
            hamiltonian: self.hamiltonian.unwrap_or_default(),
            cross_atom_term: self.cross_atom_term.unwrap_or(false),
        })
    }

    pub fn samples(&self) -> usize {
        self.n_samples.unwrap_or(DEFAULT_SAMPLES)
    }

    pub fn ensemble(&self, seed: u64) -> EnsembleSettings {
        EnsembleSettings {
            n_samples: self.samples(),
            seed,
            antithetic: self.antithetic.unwrap_or(false),
            propagation: self.propagation.unwrap_or_default(),
        }
    }
}

/// A full-dimension matrix, or for two modes a 4×4 matrix on the
/// one-photon-per-mode subspace.
fn explicit_state(rows: &[Vec<[f64; 2]>], basis: &Arc<FockBasis>) -> Result<DensityMatrix> {
    let n = rows.len();
    if let Some(bad) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::InvalidState(format!(
            "row {bad} has {} entries, matrix has {n} rows",
            rows[bad].len()
        )));
    }
    let data = CMatrix::from_fn(n, n, |i, j| c(rows[i][j][0], rows[i][j][1]));
    if n == basis.dim() {
        DensityMatrix::new(Arc::clone(basis), data)
    } else if n == 4 && basis.modes() == 2 {
        let sub = TwoModeState::new(data)?;
        crate::density::check_physical(sub.matrix())?;
        sub.embed(basis)
    } else {
        Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: n,
        })
    }
}

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub csv: PathBuf,
    pub metadata: PathBuf,
    pub final_state: Option<PathBuf>,
    pub rows: usize,
    pub warnings: Vec<String>,
}

struct Outcome {
    trajectory: Trajectory,
    stderr: Option<Vec<ObservableErrors>>,
    warnings: Vec<String>,
    extra: Value,
}

fn simulate(cfg: &ScenarioConfig, seed: u64) -> Result<Outcome> {
    let rho0 = cfg.initial_state()?;
    let grid = cfg.grid()?;
    if let Some(spec) = cfg.model_spec() {
        let mut warnings = Vec::new();
        let trajectory = match cfg.integrator {
            Integrator::Rk4 => {
                let stiffness = spec.max_rate() * grid.dt();
                if stiffness > RK4_STEP_WARN {
                    warnings.push(format!(
                        "RK4 step gamma_max*dt = {stiffness:.3} exceeds {RK4_STEP_WARN}"
                    ));
                }
                evolve_rk4(&rho0, &spec, &grid)?
            }
            Integrator::Exact => evolve_exact(&rho0, &spec, &grid)?,
        };
        return Ok(Outcome {
            trajectory,
            stderr: None,
            warnings,
            extra: Value::Null,
        });
    }

    let bath = cfg.bath_model().expect("validated microscopic config");
    let settings = cfg.ensemble(seed);
    let result = run_phase_ensemble(&bath, &rho0, &grid, &settings)?;
    let has_coupling = bath.atoms.iter().any(|a| a.g_abs > 0.0);
    let rates = if has_coupling
        && bath
            .atoms
            .iter()
            .all(|a| a.gamma_decay > 0.0 && a.n_bar > 0.0)
    {
        Some((
            gamma_effective(&bath.atoms)?,
            gamma_elimination(&bath.atoms)?,
        ))
    } else {
        None
    };
    let comparison = match rates {
        Some(_) => Some(compare_to_effective(&result, &bath, &rho0, &grid, None)?),
        None => None,
    };
    let s_z: Vec<f64> = result.trajectory.records.iter().map(|r| r.s.s_z).collect();
    // s_z ∝ e^{−2γt} under the depolarizing equation.
    let fitted = if s_z[0].abs() > 1e-12 {
        let sign = s_z[0].signum();
        let scaled: Vec<f64> = s_z.iter().map(|v| v * sign).collect();
        fit_decay_rate(&result.trajectory.times, &scaled).map(|k| k / 2.0)
    } else {
        None
    };
    let extra = json!({
        "n_samples": result.n_samples,
        "gamma_effective": rates.map(|r| r.0),
        "gamma_elimination": rates.map(|r| r.1),
        "gamma_fitted_from_s_z": fitted,
        "block_leakage": result.leakage,
        "regime": result.regime,
        "comparison_to_effective": comparison,
    });
    Ok(Outcome {
        warnings: result.regime.warnings.clone(),
        trajectory: result.trajectory,
        stderr: Some(result.stderr),
        extra,
    })
}

/// `{:.16e}`: 17 significant digits, enough to round-trip an `f64`.
fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_header(n_max: usize, with_stderr: bool) -> String {
    let mut cols: Vec<String> = ["t", "s_x", "s_y", "s_z", "P", "purity", "trace", "min_eig"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..=n_max).map(|n| format!("block_w_{n}")));
    if with_stderr {
        cols.extend(["stderr_s_x", "stderr_s_y", "stderr_s_z", "stderr_P"].map(String::from));
    }
    cols.join(",")
}

fn render_csv(traj: &Trajectory, stderr: Option<&[ObservableErrors]>, n_max: usize) -> String {
    let mut out = csv_header(n_max, stderr.is_some());
    out.push('\n');
    for (k, (t, r)) in traj.times.iter().zip(&traj.records).enumerate() {
        let mut vals = vec![
            *t, r.s.s_x, r.s.s_y, r.s.s_z, r.degree, r.purity, r.trace, r.min_eig,
        ];
        vals.extend(&r.block_weights);
        if let Some(err) = stderr {
            vals.extend(err[k].as_array());
        }
        let line: Vec<String> = vals.into_iter().map(fmt_float).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

fn check_rows(traj: &Trajectory) -> Result<()> {
    let bounds = DriftBounds::default();
    for (t, r) in traj.times.iter().zip(&traj.records) {
        if (r.trace - 1.0).abs() > bounds.trace {
            return Err(Error::InvariantDrift {
                time: *t,
                kind: Drift::Trace,
                value: (r.trace - 1.0).abs(),
            });
        }
        if r.min_eig < -bounds.positivity {
            return Err(Error::InvariantDrift {
                time: *t,
                kind: Drift::Positivity,
                value: r.min_eig,
            });
        }
    }
    Ok(())
}

/// Row-major `[re, im]` pairs plus the occupation labels of the basis.
pub fn state_json(rho: &CMatrix, basis: &FockBasis) -> Value {
    let rows: Vec<Vec<[f64; 2]>> = (0..rho.nrows())
        .map(|i| {
            (0..rho.ncols())
                .map(|j| [rho[(i, j)].re, rho[(i, j)].im])
                .collect()
        })
        .collect();
    json!({
        "dim": basis.dim(),
        "basis": basis.states(),
        "rho": rows,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Output directory: the explicit option, else the config's `output.dir`,
/// else the current directory. The CLI fills `out_dir` from `--out` or the
/// environment.
pub fn resolve_out_dir(cfg: &ScenarioConfig, opts: &RunOptions) -> PathBuf {
    opts.out_dir
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Runs a validated scenario and writes its CSV, metadata and final state.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunSummary> {
    let start = Instant::now();
    let seed = opts.seed.unwrap_or(cfg.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let outcome = pool.install(|| simulate(cfg, seed))?;
    check_rows(&outcome.trajectory)?;

    let dir = resolve_out_dir(cfg, opts);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let csv = dir.join(&cfg.output.csv);
    let metadata = dir.join(&cfg.output.metadata);
    let final_state = cfg.output.final_state.as_ref().map(|p| dir.join(p));

    let body = render_csv(&outcome.trajectory, outcome.stderr.as_deref(), cfg.n_max);
    write_file(&csv, body.as_bytes())?;
    if let Some(path) = &final_state {
        let rho = outcome.trajectory.final_state().expect("grid has samples");
        let text = serde_json::to_string_pretty(&state_json(rho, &outcome.trajectory.basis))?;
        write_file(path, text.as_bytes())?;
    }
    let meta = json!({
        "config": cfg,
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "threads": threads,
        "rows": outcome.trajectory.len(),
        "warnings": outcome.warnings,
        "microscopic": outcome.extra,
        "outputs": {
            "csv": csv,
            "final_state": final_state,
        },
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    write_file(&metadata, serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(RunSummary {
        csv,
        metadata,
        final_state,
        rows: outcome.trajectory.len(),
        warnings: outcome.warnings,
    })
}
