//! Run configuration read from TOML. Every field has a default, so a config
//! file only needs the keys it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::PropagationConfig;
use crate::error::{Error, Result};
use crate::hubbard::HubbardConfig;
use crate::purifier::PurificationConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sites: usize,
    /// Defaults to half filling.
    pub particles: Option<usize>,
    pub hopping: f64,
    #[serde(rename = "U")]
    pub interaction: f64,
    #[serde(rename = "V")]
    pub trap: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub rkf_rel_tol: f64,
    pub rkf_abs_tol: f64,
    pub alpha: f64,
    pub k_max: usize,
    pub defect_tol_rel: f64,
    pub purify: bool,
    /// Interaction values of the scan grid.
    pub u_grid: Vec<f64>,
    /// Trap values of the scan grid.
    pub v_grid: Vec<f64>,
    /// Trap values of the extra `U = 0` cells checked against free fermions.
    pub free_anchors: Vec<f64>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PropagationConfig::default();
        Self {
            sites: 6,
            particles: None,
            hopping: 1.0,
            interaction: 2.2,
            trap: 1.0,
            dt: p.global_dt,
            horizon: p.horizon,
            rkf_rel_tol: p.rkf_rel_tol,
            rkf_abs_tol: p.rkf_abs_tol,
            alpha: p.purification.alpha,
            k_max: p.purification.k_max,
            defect_tol_rel: p.purification.defect_tol_rel,
            purify: true,
            u_grid: vec![0.5, 1.0, 2.2],
            v_grid: vec![0.4, 1.0],
            free_anchors: vec![0.4, 1.0],
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hubbard(&self) -> HubbardConfig {
        self.hubbard_at(self.interaction, self.trap)
    }

    pub fn hubbard_at(&self, interaction: f64, trap: f64) -> HubbardConfig {
        HubbardConfig {
            sites: self.sites,
            particles: self.particles.unwrap_or(self.sites),
            hopping: self.hopping,
            interaction,
            trap,
        }
    }

    pub fn purification(&self) -> PurificationConfig {
        PurificationConfig {
            alpha: self.alpha,
            k_max: self.k_max,
            defect_tol_rel: self.defect_tol_rel,
        }
    }

    pub fn propagation(&self) -> PropagationConfig {
        PropagationConfig {
            global_dt: self.dt,
            horizon: self.horizon,
            rkf_rel_tol: self.rkf_rel_tol,
            rkf_abs_tol: self.rkf_abs_tol,
            purification: self.purification(),
            purify: self.purify,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hubbard().validate()?;
        self.propagation().validate()?;
        if self.u_grid.iter().chain(&self.v_grid).chain(&self.free_anchors).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("grid values must be finite".into()));
        }
        Ok(())
    }

    /// Scan grid in row-major order (`U` outer, `V` inner).
    pub fn grid(&self) -> Vec<(f64, f64)> {
        self.u_grid
            .iter()
            .flat_map(|&u| self.v_grid.iter().map(move |&v| (u, v)))
            .collect()
    }
}
