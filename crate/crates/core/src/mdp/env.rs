use serde::{Deserialize, Serialize};

use super::{build_binned_cartpole, build_gridworld, BinnedCartPoleSpec, GridworldSpec, MdpDocument, Move, TabularMdp, Wind};
use crate::error::{Error, Result};

/// Anything that builds a [`TabularMdp`], as read from an environment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvSpec {
    Gridworld(GridworldSpec),
    Cartpole(CartpoleEnv),
    Tabular(MdpDocument),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CartpoleEnv {
    pub spec: BinnedCartPoleSpec,
    pub samples_per_cell: usize,
    #[serde(default)]
    pub seed: u64,
}

impl EnvSpec {
    /// `gridworld7`, `windy-gridworld7` or `cartpole`.
    pub fn named(name: &str) -> Option<Self> {
        match name {
            "gridworld7" => Some(Self::Gridworld(GridworldSpec::seven_by_seven())),
            "windy-gridworld7" => Some(Self::Gridworld(GridworldSpec::seven_by_seven().with_wind(Wind {
                p_wind: 0.2,
                direction: Move::Right,
                columns: None,
            }))),
            "cartpole" => Some(Self::Cartpole(CartpoleEnv {
                spec: BinnedCartPoleSpec::new([3, 3, 6, 6]),
                samples_per_cell: 20,
                seed: 0,
            })),
            _ => None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    pub fn build(&self) -> Result<TabularMdp> {
        match self {
            Self::Gridworld(g) => build_gridworld(g),
            Self::Cartpole(c) => build_binned_cartpole(&c.spec, c.samples_per_cell, c.seed),
            Self::Tabular(doc) => TabularMdp::from_document(doc.clone()),
        }
    }

    pub fn gridworld(&self) -> Option<&GridworldSpec> {
        match self {
            Self::Gridworld(g) => Some(g),
            _ => None,
        }
    }
}
