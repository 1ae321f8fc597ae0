use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every numerical threshold the engine uses. All values are overridable
/// from a run configuration and are embedded in emitted certificates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Chordal separation below which two sphere points coincide.
    pub eps_sep: f64,
    /// Accuracy of Möbius interpolation.
    pub eps_map: f64,
    /// Nondegeneracy threshold for determinants and resultants.
    pub eps_det: f64,
    /// Orbit-return detection radius in the postsingular analysis.
    pub eps_cycle: f64,
    /// Residual bound for accepted lifts.
    pub eps_lift: f64,
    /// Minimum clearance of a lifted path from critical values.
    pub eps_cv: f64,
    /// Minimum clearance of a path from the punctures.
    pub eps_clear: f64,
    /// Step size below which consecutive fiber points count as converged.
    pub eps_conv: f64,
    /// Distance to a puncture that counts as puncture convergence.
    pub eps_p: f64,
    /// Fixed-point residual accepted for a realized verdict.
    pub eps_fix: f64,
    /// Newton displacement safeguard relative to the critical-point distance.
    pub eta: f64,
    pub max_subdivision_depth: usize,
    /// Consecutive converged steps required for interior convergence.
    pub converged_steps: usize,
    pub max_orbit: usize,
    /// Boundary samples per circle in the injectivity test.
    pub injectivity_samples: usize,
    /// Relative margin used to inscribe separating annuli.
    pub annulus_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_sep: 1e-9,
            eps_map: 1e-10,
            eps_det: 1e-12,
            eps_cycle: 1e-6,
            eps_lift: 1e-9,
            eps_cv: 1e-6,
            eps_clear: 1e-8,
            eps_conv: 1e-10,
            eps_p: 1e-8,
            eps_fix: 1e-8,
            eta: 0.25,
            max_subdivision_depth: 40,
            converged_steps: 5,
            max_orbit: 200,
            injectivity_samples: 512,
            annulus_margin: 0.05,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("eps_sep", self.eps_sep),
            ("eps_map", self.eps_map),
            ("eps_det", self.eps_det),
            ("eps_cycle", self.eps_cycle),
            ("eps_lift", self.eps_lift),
            ("eps_cv", self.eps_cv),
            ("eps_clear", self.eps_clear),
            ("eps_conv", self.eps_conv),
            ("eps_p", self.eps_p),
            ("eps_fix", self.eps_fix),
            ("eta", self.eta),
            ("annulus_margin", self.annulus_margin),
        ];
        for (name, value) in reals {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidRun(format!(
                    "tolerance {name} must be positive, got {value}"
                )));
            }
        }
        if self.annulus_margin >= 1.0 || self.eta >= 1.0 {
            return Err(Error::InvalidRun("eta and annulus_margin must lie in (0, 1)".into()));
        }
        if self.converged_steps == 0 || self.max_orbit == 0 || self.injectivity_samples < 8 {
            return Err(Error::InvalidRun("count tolerances too small".into()));
        }
        Ok(())
    }

    /// Overrides one field by name, as accepted by `--tol NAME=VALUE`.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let slot: &mut f64 = match name {
            "eps_sep" => &mut self.eps_sep,
            "eps_map" => &mut self.eps_map,
            "eps_det" => &mut self.eps_det,
            "eps_cycle" => &mut self.eps_cycle,
            "eps_lift" => &mut self.eps_lift,
            "eps_cv" => &mut self.eps_cv,
            "eps_clear" => &mut self.eps_clear,
            "eps_conv" => &mut self.eps_conv,
            "eps_p" => &mut self.eps_p,
            "eps_fix" => &mut self.eps_fix,
            "eta" => &mut self.eta,
            "annulus_margin" => &mut self.annulus_margin,
            "max_subdivision_depth" => {
                self.max_subdivision_depth = value as usize;
                return self.validate();
            }
            "converged_steps" => {
                self.converged_steps = value as usize;
                return self.validate();
            }
            "max_orbit" => {
                self.max_orbit = value as usize;
                return self.validate();
            }
            "injectivity_samples" => {
                self.injectivity_samples = value as usize;
                return self.validate();
            }
            other => return Err(Error::UnknownLabel(other.to_string())),
        };
        *slot = value;
        self.validate()
    }
}
