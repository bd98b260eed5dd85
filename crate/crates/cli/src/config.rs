//! Run configuration: a JSON file overridden by command-line flags.

use std::path::{Path, PathBuf};

use conjgamma::experiments::{ExperimentParams, McSettings};
use conjgamma::inversion::ProfileSettings;
use conjgamma::kernels::{Dimension, KernelTable};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Everything that determines the output of a run. Paths are recorded but
/// excluded from the configuration hash because they do not affect results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dimension: u32,
    pub seed: u64,
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
    pub profiles: ProfileSettings,
    pub kernel_points_per_decade: usize,
    pub kernel_quad_rel_tol: f64,
    pub mc: McSettings,
    pub experiments: ExperimentParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dimension: 3,
            seed: 1,
            cache_dir: PathBuf::from("tables"),
            out_dir: PathBuf::from("reports"),
            profiles: ProfileSettings::default(),
            kernel_points_per_decade: KernelTable::DEFAULT_POINTS_PER_DECADE,
            kernel_quad_rel_tol: 1e-6,
            mc: McSettings::default(),
            experiments: ExperimentParams::default(),
        }
    }
}

/// Flag values that override the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dimension: Option<u32>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub dt: Option<f64>,
    pub eps: Option<f64>,
    pub accuracy: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

/// Why `d ≤ 2` is refused.
pub const TRANSIENCE_NOTE: &str = "the process is transient only for d >= 3; for d <= 2 the potential \
density u(t) ~ 2 makes the Green function integral diverge at infinity, so Green functions, \
capacities and the experiments built on them are undefined";

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Applies flag overrides; `experiment` receives the `--samples` value.
    pub fn apply(&mut self, o: &Overrides, experiment: Option<&str>) -> Result<(), CliError> {
        if let Some(d) = o.dimension {
            self.dimension = d;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(dt) = o.dt {
            self.mc.dt = Some(dt);
        }
        if let Some(eps) = o.eps {
            self.mc.eps = Some(eps);
        }
        if let Some(a) = o.accuracy {
            self.profiles.accuracy = a;
        }
        if let Some(p) = &o.out_dir {
            self.out_dir = p.clone();
        }
        if let Some(p) = &o.cache_dir {
            self.cache_dir = p.clone();
        }
        if let Some(n) = o.samples {
            match experiment {
                Some(name) if self.experiments.set_samples(name, n) => {}
                Some(name) => return Err(CliError::Config(format!("experiment {name} does not take --samples"))),
                None => return Err(CliError::Config("--samples needs an experiment".into())),
            }
        }
        self.validate()
    }

    pub fn dim(&self) -> Result<Dimension, CliError> {
        if self.dimension < 3 {
            return Err(CliError::Dimension {
                d: self.dimension,
                note: TRANSIENCE_NOTE,
            });
        }
        Ok(Dimension::new(self.dimension)?)
    }

    pub fn validate(&mut self) -> Result<(), CliError> {
        let d = self.dim()?;
        self.experiments.fit_dimension(d);
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if let Some(eps) = self.mc.eps {
            if !(eps > 0.0 && eps < 1.0) {
                return bad("eps must lie in (0, 1)");
            }
        }
        if let Some(dt) = self.mc.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad("dt must be positive");
            }
        }
        if !(self.mc.steps_per_radius >= 1.0) || !(self.mc.horizon > 0.0) {
            return bad("mc.steps_per_radius must be >= 1 and mc.horizon > 0");
        }
        let a = self.profiles.accuracy;
        if !(1e-12..=1e-3).contains(&a) {
            return bad("accuracy must lie in [1e-12, 1e-3]");
        }
        if self.profiles.points_per_decade < 8 || self.kernel_points_per_decade < 8 {
            return bad("tables need at least 8 points per decade");
        }
        if !(self.kernel_quad_rel_tol > 0.0 && self.kernel_quad_rel_tol < 1e-2) {
            return bad("kernel_quad_rel_tol must lie in (0, 1e-2)");
        }
        Ok(())
    }

    /// Configuration without paths, as recorded in every report.
    pub fn hashed_view(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("cache_dir");
            m.remove("out_dir");
        }
        v
    }

    /// SHA-256 of the canonical JSON of [`RunConfig::hashed_view`].
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.hashed_view().to_string().as_bytes()))
    }

    /// Key of the inputs that determine the tables.
    pub fn table_key(&self) -> String {
        let v = serde_json::json!({
            "version": conjgamma::report::ARTIFACT_VERSION,
            "format": conjgamma::table::FORMAT_VERSION,
            "dimension": self.dimension,
            "profiles": self.profiles,
            "kernel_points_per_decade": self.kernel_points_per_decade,
            "kernel_quad_rel_tol": self.kernel_quad_rel_tol,
        });
        hex(&Sha256::digest(v.to_string().as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_paths_but_not_parameters() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.cache_dir = "cache".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.table_key(), b.table_key());
    }

    #[test]
    fn samples_override_targets_the_experiment() {
        let mut c = RunConfig::default();
        let o = Overrides {
            samples: Some(123),
            ..Default::default()
        };
        c.apply(&o, Some("harnack")).unwrap();
        assert_eq!(c.experiments.harnack.samples, 123);
        assert!(RunConfig::default().apply(&o, Some("asymptotics")).is_err());
    }

    #[test]
    fn dimension_two_is_rejected_with_reason() {
        let mut c = RunConfig {
            dimension: 2,
            ..Default::default()
        };
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("transient"), "{e}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"dimensions": 3}"#).unwrap();
        assert!(RunConfig::load(Some(&p)).is_err());
        std::fs::write(&p, r#"{"dimension": 4, "mc": {"steps_per_radius": 12}}"#).unwrap();
        let c = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(c.dimension, 4);
        assert_eq!(c.mc.steps_per_radius, 12.0);
        assert_eq!(c.mc.horizon, McSettings::default().horizon);
    }
}
