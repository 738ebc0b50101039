pub mod fit;
pub mod ml;
pub mod surface_tension;
pub mod tortuosity;
pub mod verify;

use anyhow::{bail, Result};
use rfim_core::model::CouplingParams;
use rfim_core::sampler::SampleMode;
use serde::{Deserialize, Serialize};

/// Physics flags shared by the sampling commands.
#[derive(clap::Args, Serialize, Deserialize, Clone, Default)]
#[serde(default)]
pub struct PhysicsArgs {
    /// Inverse temperature.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Coupling strength.
    #[arg(long = "J")]
    #[serde(rename = "J")]
    pub j: Option<f64>,
    /// Uniform external field.
    #[arg(long)]
    pub h: Option<f64>,
    /// Disorder intensity.
    #[arg(long)]
    pub eps: Option<f64>,
}

impl PhysicsArgs {
    pub fn overlay(self, file: PhysicsArgs) -> PhysicsArgs {
        PhysicsArgs {
            beta: self.beta.or(file.beta),
            j: self.j.or(file.j),
            h: self.h.or(file.h),
            eps: self.eps.or(file.eps),
        }
    }

    pub fn resolve(&self) -> Result<CouplingParams> {
        Ok(CouplingParams::new(
            self.beta.unwrap_or(1.0),
            self.j.unwrap_or(1.0),
            self.h.unwrap_or(0.0),
            self.eps.unwrap_or(1.0),
        )?)
    }
}

pub fn parse_mode(s: &str) -> Result<SampleMode> {
    match s {
        "glauber" => Ok(SampleMode::Glauber),
        "cftp" => Ok(SampleMode::Cftp),
        other => bail!("unknown mode '{other}', expected glauber or cftp"),
    }
}
