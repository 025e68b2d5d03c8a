use std::path::{Path, PathBuf};

use avenc_core::cost::DeviceModel;
use avenc_core::objective::{LossWeights, SequenceConfig};
use avenc_core::search::{ReweightConfig, SearchConfig, TrainConfig};
use avenc_core::supernet::{Profile, SupernetSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Synthetic capture traces used when no sequence file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub world_seed: u64,
    pub train_seed: u64,
    pub test_seed: u64,
    pub train: SequenceConfig,
    pub test: SequenceConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            world_seed: 11,
            train_seed: 5,
            test_seed: 100,
            train: SequenceConfig {
                n_frames: 512,
                keyframe_rate: 0.5,
                ..SequenceConfig::default()
            },
            test: SequenceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatexConfig {
    pub window: usize,
    /// Explicit thresholds; when empty, `grid_points` quantiles of the early-head differences.
    pub thresholds: Vec<f64>,
    pub grid_points: usize,
    /// Also simulate an infinite threshold.
    pub include_infinity: bool,
    /// Write the per-frame JSON trace next to the CSV.
    pub trace: bool,
}

impl Default for LatexConfig {
    fn default() -> Self {
        Self {
            window: 4,
            thresholds: Vec::new(),
            grid_points: 20,
            include_infinity: true,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Latency LUT CSV; a synthetic LUT for `device` is used when absent.
    pub lut: Option<PathBuf>,
    /// Architecture JSON; defaults to `<out>/arch.json`.
    pub arch: Option<PathBuf>,
    /// Trained weights; defaults to `<out>/params.json`.
    pub params: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub profile: Profile,
    pub search: SearchConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
    pub reweight: ReweightConfig,
    pub data: DataConfig,
    pub latex: LatexConfig,
    pub device: DeviceModel,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            profile: Profile::ToyDims,
            search: SearchConfig::default(),
            train: TrainConfig::default(),
            loss: LossWeights::default(),
            reweight: ReweightConfig::default(),
            data: DataConfig::default(),
            latex: LatexConfig::default(),
            device: DeviceModel::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self, CliError> {
        toml::from_str(src).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&src)
    }

    pub fn spec(&self) -> SupernetSpec {
        SupernetSpec::profile(self.profile)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn arch_path(&self) -> PathBuf {
        self.paths.arch.clone().unwrap_or_else(|| self.out_dir().join("arch.json"))
    }

    pub fn params_path(&self) -> PathBuf {
        self.paths.params.clone().unwrap_or_else(|| self.out_dir().join("params.json"))
    }

    /// Checks values and that every explicitly configured input file exists.
    pub fn validate(&self) -> Result<(), CliError> {
        let v = |r: avenc_core::Result<()>| r.map_err(CliError::from);
        v(self.search.validate())?;
        v(self.train.validate())?;
        v(self.loss.validate())?;
        v(self.data.train.validate())?;
        v(self.data.test.validate())?;
        v(self.spec().validate())?;
        if self.latex.window < 2 {
            return Err(CliError::Validation("latex.window must be at least 2".into()));
        }
        if self.latex.thresholds.iter().any(|t| t.is_nan() || *t < 0.0) {
            return Err(CliError::Validation("latex thresholds must be non-negative".into()));
        }
        let p = &self.paths;
        for (key, path) in [
            ("paths.lut", &p.lut),
            ("paths.train_data", &p.train_data),
            ("paths.test_data", &p.test_data),
        ] {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(CliError::Validation(format!("{key}: {} does not exist", path.display())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for src in [
            "sed = 1",
            "[search]\nstep = 10",
            "[loss]\nlatnet = 1.0",
            "[latex]\nwindw = 4",
            "[paths]\noutput = \"x\"",
            "[data.train]\nframes = 3",
        ] {
            assert!(matches!(RunConfig::from_toml(src), Err(CliError::Validation(_))), "{src}");
        }
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::from_toml(
            "seed = 3\nprofile = \"micro\"\n[search]\nsteps = 10\n[latex]\nthresholds = [0.0, 0.1, inf]\n",
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.profile, Profile::Micro);
        assert_eq!(c.search.steps, 10);
        assert_eq!(c.latex.thresholds[2], f64::INFINITY);
    }

    #[test]
    fn missing_lut_is_a_validation_error() {
        let mut c = RunConfig::default();
        c.paths.lut = Some(PathBuf::from("/nonexistent/lut.csv"));
        assert!(matches!(c.validate(), Err(CliError::Validation(_))));
    }
}
