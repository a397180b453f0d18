//! TOML run configuration shared by every CLI subcommand.
//!
//! ```toml
//! seed = 7
//! threads = 1
//!
//! [model]
//! n_frames = 4
//! enc_channels = 24
//!
//! [burst]
//! n_frames = 4
//! max_shift_px = 2.0
//!
//! [chart]
//! eval_height_px = 360
//!
//! [paths]
//! checkpoint = "model.bfck"
//! ```
//!
//! Every section and key is optional; unknown keys are rejected. The burst
//! noise seed is the top-level `seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ChartGeometry;
use crate::model::ModelConfig;
use crate::simulate::SyntheticBurstSpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub model: ModelConfig,
    pub burst: SyntheticBurstSpec,
    pub chart: ChartGeometry,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start);
            Error::format("config", "toml", offset, e.message().to_string())
        })?;
        if cfg.burst.seed != 0 {
            return Err(Error::invalid("RunConfig", "set the seed at the top level, not in [burst]"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies a `--seed` override and validates every section.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.burst.seed = self.seed;
        self.model.validate()?;
        self.burst.validate()?;
        self.chart.validate()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_sections() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let cfg = RunConfig::parse("seed = 3\n[model]\nn_frames = 2\n[burst]\nn_frames = 2\n").unwrap();
        assert_eq!(cfg.model.n_frames, 2);
        assert_eq!(cfg.burst.n_frames, 2);
        let cfg = cfg.resolve(Some(9)).unwrap();
        assert_eq!((cfg.seed, cfg.burst.seed), (9, 9));
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["sed = 1", "[model]\nwindw = 4", "[burst]\nframes = 3", "[extra]\n"] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Format { .. })), "{text}");
        }
        assert!(RunConfig::parse("[burst]\nseed = 4").is_err());
        assert!(RunConfig::parse("[model]\nenc_channels = 10").unwrap().resolve(None).is_err());
    }
}
