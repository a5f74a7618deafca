//! Run configuration: one JSON document describing a whole experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eki::EkiConfig;
use crate::error::{Error, Result};
use crate::forward::ForwardConfig;
use crate::mesh::MeshGenConfig;
use crate::momentum::SyntheticKind;
use crate::raster::{RasterSpec, Smoother};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Synthetic target momentum; required by `make-target`.
    pub scenario: Option<SyntheticKind>,
    pub mesh: MeshGenConfig,
    /// Load the template from a `.msh` file instead of generating it.
    pub mesh_file: Option<PathBuf>,
    /// Forward parameters used to generate targets.
    pub target_forward: ForwardConfig,
    /// Forward parameters used inside the inversion.
    pub inversion_forward: ForwardConfig,
    pub raster: RasterSpec,
    pub smoother: Smoother,
    /// EKI settings; the RNG seed comes from `seed`.
    pub eki: EkiConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Where `invert` reads the target from; defaults to `out_dir`.
    pub target_dir: Option<PathBuf>,
    /// Momentum CSV for `forward`; without it the scenario momentum is used.
    pub momentum_file: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: None,
            mesh: MeshGenConfig::default(),
            mesh_file: None,
            target_forward: ForwardConfig::target(),
            inversion_forward: ForwardConfig::inversion(),
            raster: RasterSpec::default(),
            smoother: Smoother::default(),
            eki: EkiConfig::default(),
            seed: 0,
            out_dir: PathBuf::from("run"),
            target_dir: None,
            momentum_file: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// EKI settings with the run seed applied.
    pub fn eki_config(&self) -> EkiConfig {
        EkiConfig { seed: self.seed, ..self.eki.clone() }
    }

    pub fn target_dir(&self) -> &Path {
        self.target_dir.as_deref().unwrap_or(&self.out_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh_file.is_none() {
            self.mesh.validate()?;
        }
        self.target_forward.validate()?;
        self.inversion_forward.validate()?;
        self.raster.validate()?;
        self.smoother.validate()?;
        self.eki_config().validate()?;
        if self.eki.seed != 0 && self.eki.seed != self.seed {
            return Err(Error::Config("set the RNG seed with the top-level `seed` key, not `eki.seed`".into()));
        }
        Ok(())
    }
}
