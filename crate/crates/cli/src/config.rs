//! Pipeline configuration file (TOML or JSON, unknown keys rejected).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stentrom::dataset::{CampaignConfig, PredictorKind};
use stentrom::{Error, Result};
use stentrom_classify::{ClassifierConfig, ClassifierKind};
use stentrom_rom::{GprConfig, RomConfig, Truncation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dataset: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { dataset: "dataset".into(), models: "models".into(), reports: "reports".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictorChoice {
    #[serde(rename = "mu_b", alias = "mu_B")]
    MuB,
    #[serde(rename = "mu_cl")]
    MuCl,
}

impl std::str::FromStr for PredictorChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mu_b" => Ok(Self::MuB),
            "mu_cl" => Ok(Self::MuCl),
            _ => Err(Error::Argument(format!("unknown predictor set {s:?} (expected mu_b or mu_cl)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RomSettings {
    pub eps_pod: f64,
    /// Fixed number of modes; `eps_pod` decides when absent.
    pub rank: Option<usize>,
    pub truncation: Truncation,
    pub predictors: PredictorChoice,
    pub n_cl: usize,
    pub gpr: GprConfig,
}

impl Default for RomSettings {
    fn default() -> Self {
        let rom = RomConfig::default();
        Self {
            eps_pod: rom.eps_pod,
            rank: None,
            truncation: rom.truncation,
            predictors: PredictorChoice::MuCl,
            n_cl: 3,
            gpr: rom.gpr,
        }
    }
}

impl RomSettings {
    pub fn predictor_kind(&self) -> PredictorKind {
        match self.predictors {
            PredictorChoice::MuB => PredictorKind::MuB,
            PredictorChoice::MuCl => PredictorKind::MuCl { n_cl: self.n_cl },
        }
    }

    pub fn rom_config(&self) -> RomConfig {
        RomConfig { eps_pod: self.eps_pod, rank: self.rank, truncation: self.truncation, gpr: self.gpr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    /// Labeled samples held out for the report.
    pub n_test: usize,
    pub split_seed: u64,
    /// Classifier gating predictions (short name such as "SVM"); when absent
    /// the most accurate on the held-out split, ties going to specificity.
    pub gate: Option<String>,
    /// Mode counts at which the held-out prediction error is reported.
    pub rank_sweep: Vec<usize>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { n_test: 15, split_seed: 0, gate: None, rank_sweep: vec![1, 2, 3, 4, 6, 8, 10, 12, 15, 20] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceSettings {
    pub bind: String,
    pub port: u16,
    /// Directory of UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self { bind: "127.0.0.1".into(), port: 8080, static_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub campaign: CampaignConfig,
    pub rom: RomSettings,
    pub classifier: ClassifierConfig,
    pub train: TrainSettings,
    pub service: ServiceSettings,
}

impl PipelineConfig {
    /// Reads a `.json` or TOML file; relative paths are taken from the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        cfg.resolve(base)?;
        Ok(cfg)
    }

    /// Anchors relative paths at `base` and checks that each one can be a
    /// directory.
    pub fn resolve(&mut self, base: &Path) -> Result<()> {
        let base = base.canonicalize().map_err(|e| Error::Config(format!("{}: {e}", base.display())))?;
        let mut dirs: Vec<&mut PathBuf> =
            vec![&mut self.paths.dataset, &mut self.paths.models, &mut self.paths.reports];
        if let Some(s) = self.service.static_dir.as_mut() {
            dirs.push(s);
        }
        for p in dirs {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if p.exists() && !p.is_dir() {
                return Err(Error::Config(format!("{} exists and is not a directory", p.display())));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.campaign.validate()?;
        if !(0.0..1.0).contains(&self.rom.eps_pod) {
            return Err(Error::Config(format!("eps_pod must be in [0, 1), got {}", self.rom.eps_pod)));
        }
        if self.rom.rank == Some(0) {
            return Err(Error::Config("rank must be positive".into()));
        }
        if self.rom.n_cl < 2 {
            return Err(Error::Config("n_cl must be at least 2".into()));
        }
        if let Some(g) = &self.train.gate {
            ClassifierKind::from_short_name(g).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml().unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("[rom]\neps = 0.1\n").is_err());
        assert!(toml::from_str::<PipelineConfig>("[campaign.space]\nd_x = [1.0, 2.0]\n").is_err());
        let ok: PipelineConfig = toml::from_str("[rom]\npredictors = \"mu_b\"\nrank = 4\n").unwrap();
        assert_eq!(ok.rom.predictor_kind(), PredictorKind::MuB);
        assert_eq!(ok.rom.rank, Some(4));
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[paths]\nmodels = \"out/m\"\n").unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.models, dir.path().canonicalize().unwrap().join("out/m"));
    }

    #[test]
    fn inverted_range_is_a_config_error() {
        let cfg: PipelineConfig = toml::from_str("[campaign.space]\nd_v = [4.0, 2.0]\n").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
