use std::path::Path;

use anyhow::{bail, Context};
use pullback_lab::corpus::DemoRun;
use pullback_lab::fiber::{RunSpec, StopCriteria, DEFAULT_MAX_ITERS};
use pullback_lab::Tolerances;
use serde::{Deserialize, Serialize};

/// A run configuration file: the map and marked points, plus run controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    #[serde(flatten)]
    pub spec: RunSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub min_steps: usize,
    /// Iterate `g^{∘m}` to run with; the branch data are composed accordingly.
    #[serde(default = "default_iterate")]
    pub iterate: usize,
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

fn default_iterate() -> usize {
    1
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            bail!("config name {:?} is not a valid file stem", self.name);
        }
        self.tolerances.validate()?;
        if self.iterate == 0 {
            bail!("iterate must be at least 1");
        }
        if self.max_iters == 0 {
            bail!("max_iters must be at least 1");
        }
        let mut labels: Vec<&str> = self.spec.marked.iter().map(|m| m.label()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            bail!("marked labels must be distinct");
        }
        Ok(())
    }

    /// Applies `--max-iters` and `--tol NAME=VALUE` overrides.
    pub fn apply_overrides(&mut self, max_iters: Option<usize>, tols: &[String]) -> anyhow::Result<()> {
        if let Some(n) = max_iters {
            self.max_iters = n;
        }
        for entry in tols {
            let (name, value) = entry
                .split_once('=')
                .with_context(|| format!("--tol expects NAME=VALUE, got {entry:?}"))?;
            let value: f64 = value
                .trim()
                .parse()
                .with_context(|| format!("--tol {name}: {value:?} is not a number"))?;
            self.tolerances.set(name.trim(), value)?;
        }
        self.validate()
    }

    pub fn stop(&self) -> StopCriteria {
        StopCriteria {
            max_iters: self.max_iters,
            min_steps: self.min_steps,
        }
    }
}

impl From<DemoRun> for RunConfig {
    fn from(d: DemoRun) -> Self {
        RunConfig {
            name: d.name.to_string(),
            spec: d.spec,
            tolerances: Tolerances::default(),
            max_iters: d.stop.max_iters,
            min_steps: d.stop.min_steps,
            iterate: d.iterate,
        }
    }
}
