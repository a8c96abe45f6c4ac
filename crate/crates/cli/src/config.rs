use std::path::{Path, PathBuf};

use anyhow::Context;
use rpskin::atlas::AtlasConfig;
use rpskin::continuation::ContinuationConfig;
use rpskin::dkp::DkpConfig;
use rpskin::trajectory::TrajectoryConfig;
use rpskin::{DesignParams, OperationMode};
use serde::{Deserialize, Serialize};

use crate::Usage;

pub const SEED_ENV: &str = "RPSKIN_SEED";

/// Grid resolution and box. `bounds` holds `lo hi` pairs per axis; the
/// command's default box applies when it is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub res: usize,
    pub bounds: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { res: 60, bounds: None }
    }
}

/// Everything that determines a run. Echoed into every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub design: DesignParams,
    pub mode: OperationMode,
    pub seed: Option<u64>,
    pub dkp: DkpConfig,
    pub atlas: AtlasConfig,
    pub trajectory: TrajectoryConfig,
    pub continuation: ContinuationConfig,
    pub grid: GridConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            design: DesignParams::unit(),
            mode: OperationMode::Om1,
            seed: None,
            dkp: DkpConfig::default(),
            atlas: AtlasConfig::default(),
            trajectory: TrajectoryConfig::default(),
            continuation: ContinuationConfig::default(),
            grid: GridConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

/// Values given on the command line; each one overrides the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub g: Option<f64>,
    pub h: Option<f64>,
    pub mode: Option<OperationMode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub res: Option<usize>,
    pub bounds: Option<Vec<f64>>,
    pub starts: Option<usize>,
}

impl RunConfig {
    /// Reads a JSON or TOML file, chosen by extension (`.json` is JSON,
    /// everything else TOML).
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(Usage::wrap)?;
        let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(anyhow::Error::from)
        } else {
            toml::from_str(&text).map_err(anyhow::Error::from)
        };
        parsed
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(Usage::wrap)
    }

    /// Applies flag overrides, then resolves the seed (flag, file, then
    /// the environment, then zero) into every seeded stage.
    pub fn resolve(mut self, o: &Overrides, env_seed: Option<&str>) -> anyhow::Result<Self> {
        if o.g.is_some() || o.h.is_some() {
            let g = o.g.unwrap_or(self.design.g);
            let h = o.h.unwrap_or(self.design.h);
            self.design = DesignParams::new(g, h)?;
        }
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(res) = o.res {
            self.grid.res = res;
        }
        if let Some(b) = &o.bounds {
            self.grid.bounds = Some(b.clone());
        }
        if let Some(n) = o.starts {
            self.dkp.n_starts = n;
        }
        let env = match env_seed {
            Some(s) => Some(
                s.trim()
                    .parse::<u64>()
                    .map_err(|e| Usage::wrap(anyhow::anyhow!("{SEED_ENV}={s:?}: {e}")))?,
            ),
            None => None,
        };
        let seed = o.seed.or(self.seed).or(env).unwrap_or(0);
        self.seed = Some(seed);
        self.dkp.seed = seed;
        self.continuation.seed = seed;
        self.atlas.dkp = self.dkp;
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}
