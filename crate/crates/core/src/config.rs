//! Pipeline configuration file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::association::DEFAULT_GATE_PX;
use crate::error::{Error, Result};
use crate::hdmap::HousingCatalog;
use crate::statefilter::{FlashingConfig, HmmConfig, HmmSet};
use crate::tracker::TrackerConfig;

/// Everything the runner needs besides the input streams. Missing fields
/// take their defaults, so `{}` is a valid file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Grid rate. Detections are binned to the nearest grid frame counted
    /// from the first pose.
    pub frame_rate_hz: f64,
    pub gate_px: f64,
    /// Diagonal of the default transition matrices.
    pub self_transition: f64,
    pub tracker: TrackerConfig,
    pub flashing: FlashingConfig,
    pub housings: HousingCatalog,
    /// Per-type overrides of the default HMMs.
    pub hmm: Vec<HmmConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            frame_rate_hz: 10.0,
            gate_px: DEFAULT_GATE_PX,
            self_transition: 0.98,
            tracker: TrackerConfig::default(),
            flashing: FlashingConfig::default(),
            housings: HousingCatalog::default(),
            hmm: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return Err(Error::invalid("frame_rate_hz", "must be positive"));
        }
        if !(self.gate_px > 0.0) {
            return Err(Error::invalid("gate_px", "must be positive"));
        }
        if !(0.0 < self.self_transition && self.self_transition <= 1.0) {
            return Err(Error::invalid("self_transition", "must lie in (0, 1]"));
        }
        self.tracker.validate()?;
        self.flashing.validate()?;
        self.housings.validate()?;
        self.hmm_set().map(|_| ())
    }

    pub fn hmm_set(&self) -> Result<HmmSet> {
        HmmSet::from_configs(self.self_transition, &self.hmm)
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::parse(source_name, &e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::TlType;

    #[test]
    fn empty_object_is_defaults() {
        assert_eq!(PipelineConfig::parse("{}", "cfg").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.tracker.n_death = 7;
        let hmm = cfg.hmm_set().unwrap().get(TlType::FourArrow).to_config();
        cfg.hmm.push(hmm);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(PipelineConfig::parse(&text, "cfg").unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(matches!(PipelineConfig::parse("{\"gate\": 3}", "cfg"), Err(Error::Parse { .. })));
        assert!(PipelineConfig::parse("{\"frame_rate_hz\": 0}", "cfg").is_err());
        assert!(PipelineConfig::parse("{\"tracker\": {\"n_birth_map\": 0}}", "cfg").is_err());
    }
}
