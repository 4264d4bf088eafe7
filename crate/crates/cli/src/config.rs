//! JSON experiment configuration with dotted-path overrides.
//!
//! Every field has a default (the 3-state example: grid {0, 1, 2},
//! `H = p^2/2`, single-step kernel with `lambda = 1`), so an empty `{}` is a
//! complete config.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use stickykin::{
    validate_hamiltonian, validate_rate_kernel, BurgersSetup, Hamiltonian, HamiltonianKind, RateKernel, SchemeKind,
    SolverScheme, StateGrid, TestFunction,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HamiltonianConfig {
    /// `quadratic`, `scaled_quadratic` or `polynomial`.
    pub kind: String,
    /// Ascending-degree coefficients for `polynomial`, `[c]` for `scaled_quadratic`.
    pub coefficients: Vec<f64>,
    pub p_max: f64,
}

impl Default for HamiltonianConfig {
    fn default() -> Self {
        Self { kind: "quadratic".into(), coefficients: Vec::new(), p_max: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Number of uniform steps on `[0, P]`; ignored when `states` is given.
    pub k: usize,
    pub states: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { k: 2, states: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// `single_step`, `uniform_up` or `custom_matrix`.
    pub generator: String,
    pub step: usize,
    pub lambda: f64,
    pub matrix: Option<Vec<Vec<f64>>>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { generator: "single_step".into(), step: 1, lambda: 1.0, matrix: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub length: f64,
    pub horizon: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { length: 5.0, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub scheme: SchemeKind,
    pub dt: f64,
    /// Store every n-th step.
    pub output_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { scheme: SchemeKind::Rk4, dt: 1e-3, output_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub paths: usize,
    pub seed: u64,
    /// 0 uses every available core.
    pub workers: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { paths: 10_000, seed: 1, workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    /// Test functions; the built-in family of ten when absent.
    pub tests: Option<Vec<TestFunction>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    pub short_length: f64,
    pub long_length: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { short_length: 5.0, long_length: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma5Config {
    pub probe_times: Vec<f64>,
    pub chains: Vec<Vec<usize>>,
    pub dt: f64,
    pub refinement: usize,
}

impl Default for Lemma5Config {
    fn default() -> Self {
        Self {
            probe_times: vec![0.0, 0.5],
            chains: vec![vec![0], vec![1], vec![0, 1], vec![0, 2], vec![1, 2], vec![0, 1, 2]],
            dt: 1e-2,
            refinement: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub steps: Vec<usize>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { steps: vec![64, 128, 256, 512] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Paths written by `simulate` (the Monte Carlo path count is separate).
    pub paths: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { paths: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    /// `json` is always written; `csv` adds the summary table.
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: "out".into(), formats: vec!["json".into(), "csv".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub hamiltonian: HamiltonianConfig,
    pub grid: GridConfig,
    pub kernel: KernelConfig,
    pub domain: DomainConfig,
    pub solver: SolverConfig,
    pub montecarlo: MonteCarloConfig,
    pub propagation: PropagationConfig,
    pub coupling: CouplingConfig,
    pub lemma5: Lemma5Config,
    pub convergence: ConvergenceConfig,
    pub burgers: BurgersSetup,
    pub simulate: SimulateConfig,
    pub output: OutputConfig,
}

/// Validated numerical objects built from a config.
pub struct Model {
    pub hamiltonian: Hamiltonian<f64>,
    pub grid: StateGrid<f64>,
    pub kernel: RateKernel<f64>,
    pub scheme: SolverScheme<f64>,
}

/// Parses `KEY=VALUE`; the value is read as JSON, falling back to a string.
fn parse_override(raw: &str) -> Result<(Vec<String>, Value)> {
    let (key, value) = raw.split_once('=').ok_or_else(|| anyhow!("override `{raw}` is not KEY=VALUE"))?;
    if key.is_empty() {
        bail!("override `{raw}` has an empty key");
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn apply_override(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut node = root;
    for (depth, key) in path.iter().enumerate() {
        let last = depth + 1 == path.len();
        node = match node {
            Value::Object(map) => {
                if !map.contains_key(key) {
                    bail!("unknown config key `{}`", path[..=depth].join("."));
                }
                map.get_mut(key).expect("checked above")
            }
            _ => bail!("config key `{}` is not a table", path[..depth].join(".")),
        };
        if last {
            *node = value;
            return Ok(());
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base: Value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Value::Object(Default::default()),
        };
        let parsed: Self = serde_json::from_value(base).context("invalid config")?;
        let mut tree = serde_json::to_value(&parsed)?;
        for raw in overrides {
            let (path, value) = parse_override(raw)?;
            apply_override(&mut tree, &path, value).with_context(|| format!("applying --set {raw}"))?;
        }
        serde_json::from_value(tree).context("invalid config after overrides")
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian<f64>> {
        let c = &self.hamiltonian;
        let kind = match c.kind.as_str() {
            "quadratic" => HamiltonianKind::Quadratic,
            "scaled_quadratic" => match c.coefficients.as_slice() {
                [scale] => HamiltonianKind::ScaledQuadratic { c: *scale },
                _ => bail!("hamiltonian.coefficients: scaled_quadratic needs exactly one value"),
            },
            "polynomial" => HamiltonianKind::Polynomial { coefficients: c.coefficients.clone() },
            other => bail!("hamiltonian.kind: unknown flux `{other}`"),
        };
        let h = Hamiltonian::new(kind, c.p_max).context("hamiltonian")?;
        let report = validate_hamiltonian(&h, 257)?;
        if !report.is_valid() {
            bail!("hamiltonian: {report}");
        }
        Ok(h)
    }

    pub fn grid(&self) -> Result<StateGrid<f64>> {
        let grid = match &self.grid.states {
            Some(states) => StateGrid::new(states.clone()),
            None => StateGrid::uniform(self.grid.k, self.hamiltonian.p_max),
        }
        .context("grid")?;
        if grid.p_max() != self.hamiltonian.p_max {
            bail!("grid: top state {} differs from hamiltonian.p_max {}", grid.p_max(), self.hamiltonian.p_max);
        }
        Ok(grid)
    }

    pub fn kernel(&self, n: usize) -> Result<RateKernel<f64>> {
        let c = &self.kernel;
        let g = match c.generator.as_str() {
            "single_step" => RateKernel::single_step(n, c.step, c.lambda),
            "uniform_up" => RateKernel::uniform_up(n, c.lambda),
            "custom_matrix" => {
                let rows = c.matrix.clone().ok_or_else(|| anyhow!("kernel.matrix: required for custom_matrix"))?;
                RateKernel::from_rows(rows)
            }
            other => bail!("kernel.generator: unknown generator `{other}`"),
        }
        .context("kernel")?;
        if g.dim() != n {
            bail!("kernel: dimension {} does not match the {n}-state grid", g.dim());
        }
        let report = validate_rate_kernel(&g, c.lambda, false);
        if !report.is_valid() {
            bail!("kernel: {report}");
        }
        Ok(g)
    }

    pub fn scheme(&self) -> Result<SolverScheme<f64>> {
        SolverScheme::new(self.solver.scheme, self.solver.dt, self.solver.output_every).context("solver")
    }

    /// Builds and validates every model object before any compute starts.
    pub fn model(&self) -> Result<Model> {
        let hamiltonian = self.hamiltonian()?;
        let grid = self.grid()?;
        let kernel = self.kernel(grid.len())?;
        let scheme = self.scheme()?;
        if !(self.domain.length > 0.0 && self.domain.horizon >= 0.0) {
            bail!("domain: need length > 0 and horizon >= 0");
        }
        Ok(Model { hamiltonian, grid, kernel, scheme })
    }

    pub fn tests(&self) -> Vec<TestFunction> {
        self.propagation.tests.clone().unwrap_or_else(TestFunction::default_family)
    }

    /// Config as embedded in artifacts. Worker count and output directory
    /// do not affect any number, so they are left out to keep artifacts
    /// identical across pool sizes and locations.
    pub fn provenance(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(mc) = v.get_mut("montecarlo").and_then(Value::as_object_mut) {
            mc.remove("workers");
        }
        if let Some(out) = v.get_mut("output").and_then(Value::as_object_mut) {
            out.remove("directory");
        }
        v
    }
}
