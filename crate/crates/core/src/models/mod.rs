//! Benchmark workloads: PCS and Highway.

pub mod highway;
pub mod pcs;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::Model;
pub use highway::{Highway, HighwayConfig};
pub use pcs::{Pcs, PcsConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pcs,
    Highway,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Load {
    Light,
    Medium,
    Heavy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    #[default]
    Balanced,
    Unbalanced,
}

impl Load {
    pub const ALL: [Load; 3] = [Load::Light, Load::Medium, Load::Heavy];

    fn index(self) -> usize {
        self as usize
    }
}

macro_rules! text_enum {
    ($t:ty { $($v:ident => $s:literal),+ }) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),+ })
            }
        }

        impl FromStr for $t {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, ModelError> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok(Self::$v),)+
                    other => Err(ModelError::Config(format!("unknown {} '{other}'", stringify!($t).to_lowercase()))),
                }
            }
        }
    };
}

text_enum!(ModelKind { Pcs => "pcs", Highway => "highway" });
text_enum!(Load { Light => "light", Medium => "medium", Heavy => "heavy" });
text_enum!(Balance { Balanced => "balanced", Unbalanced => "unbalanced" });

/// Which model to build and at what size.
///
/// `scale` shrinks the full-size object counts (4096 cells, 3000 zones).
/// `cells`, `channels` and `zones` override the scaled values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub model: ModelKind,
    pub load: Load,
    #[serde(default)]
    pub balance: Balance,
    #[serde(default = "full_scale")]
    pub scale: f64,
    #[serde(default)]
    pub cells: Option<usize>,
    #[serde(default)]
    pub channels: Option<u32>,
    #[serde(default)]
    pub zones: Option<usize>,
}

fn full_scale() -> f64 {
    1.0
}

pub const DESK_CELLS: usize = 256;
pub const DESK_CHANNELS: u32 = 512;
pub const DESK_ZONES: usize = 256;

impl WorkloadConfig {
    /// Full-size workload.
    pub fn full(model: ModelKind, load: Load, balance: Balance) -> Self {
        WorkloadConfig { model, load, balance, scale: 1.0, cells: None, channels: None, zones: None }
    }

    /// 256 cells of 512 channels, or 256 zones.
    pub fn desk(model: ModelKind, load: Load, balance: Balance) -> Self {
        WorkloadConfig {
            scale: DESK_CELLS as f64 / pcs::FULL_CELLS as f64,
            cells: Some(DESK_CELLS),
            channels: Some(DESK_CHANNELS),
            zones: Some(DESK_ZONES),
            ..Self::full(model, load, balance)
        }
    }

    /// Drops the size overrides and scales from the full-size counts.
    pub fn scaled(model: ModelKind, load: Load, balance: Balance, scale: f64) -> Self {
        WorkloadConfig { scale, ..Self::full(model, load, balance) }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(ModelError::Config(format!("scale {} must lie in (0, 1]", self.scale)));
        }
        if self.balance == Balance::Unbalanced && self.model != ModelKind::Highway {
            return Err(ModelError::Config("unbalanced load is defined only for highway".into()));
        }
        if self.model == ModelKind::Highway && self.zone_count() < 2 {
            return Err(ModelError::Config("highway needs at least 2 zones".into()));
        }
        if self.model == ModelKind::Pcs && self.cell_count() == 0 {
            return Err(ModelError::Config("pcs needs at least one cell".into()));
        }
        Ok(())
    }

    /// Cell count, rounded to the nearest square.
    pub fn cell_count(&self) -> usize {
        let raw = self.cells.map(|c| c as f64).unwrap_or(self.scale * pcs::FULL_CELLS as f64);
        let side = raw.sqrt().round() as usize;
        side * side
    }

    pub fn channel_count(&self) -> u32 {
        self.channels.unwrap_or(pcs::FULL_CHANNELS)
    }

    pub fn zone_count(&self) -> usize {
        self.zones.unwrap_or((self.scale * highway::FULL_ZONES as f64).round() as usize)
    }

    pub fn pcs_config(&self) -> PcsConfig {
        PcsConfig::new(self.cell_count(), self.channel_count(), pcs::FULL_TARGETS[self.load.index()])
    }

    pub fn highway_config(&self) -> HighwayConfig {
        let ratio = highway::DENSITY_RATIOS[self.load.index()];
        match self.balance {
            Balance::Balanced => HighwayConfig::uniform(self.zone_count(), ratio),
            Balance::Unbalanced => HighwayConfig::unbalanced(self.zone_count(), ratio),
        }
    }

    pub fn build(&self) -> Result<Workload, ModelError> {
        self.validate()?;
        Ok(match self.model {
            ModelKind::Pcs => Workload::Pcs(Pcs::new(&self.pcs_config())?),
            ModelKind::Highway => Workload::Highway(Highway::new(&self.highway_config())?),
        })
    }
}

/// A built model; dispatch with `match` to keep engines monomorphic.
#[derive(Clone, Debug)]
pub enum Workload {
    Pcs(Pcs),
    Highway(Highway),
}

impl Workload {
    pub fn n_objects(&self) -> usize {
        match self {
            Workload::Pcs(m) => m.n_objects(),
            Workload::Highway(m) => m.n_objects(),
        }
    }

    pub fn lookahead(&self) -> f64 {
        match self {
            Workload::Pcs(m) => m.lookahead(),
            Workload::Highway(m) => m.lookahead(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_sizes() {
        let p = WorkloadConfig::full(ModelKind::Pcs, Load::Heavy, Balance::Balanced);
        assert_eq!((p.cell_count(), p.channel_count()), (4096, 5000));
        let h = WorkloadConfig::full(ModelKind::Highway, Load::Heavy, Balance::Balanced);
        assert_eq!(h.zone_count(), 3000);
        let Workload::Highway(m) = h.build().unwrap() else { panic!() };
        assert_eq!(m.n_objects(), 3000);
    }

    #[test]
    fn desk_sizes() {
        let p = WorkloadConfig::desk(ModelKind::Pcs, Load::Light, Balance::Balanced);
        let Workload::Pcs(m) = p.build().unwrap() else { panic!() };
        assert_eq!((m.n_objects(), m.channels()), (256, 512));
        let h = WorkloadConfig::desk(ModelKind::Highway, Load::Light, Balance::Unbalanced);
        assert_eq!(h.build().unwrap_or_else(|e| panic!("{e}")).n_objects(), 256);
    }

    #[test]
    fn scaled_cells_round_to_square() {
        let p = WorkloadConfig::scaled(ModelKind::Pcs, Load::Light, Balance::Balanced, 0.01);
        // 40.96 cells -> 6 x 6.
        assert_eq!(p.cell_count(), 36);
    }

    #[test]
    fn rejects_invalid_configs() {
        for s in [0.0, -1.0, 1.5, f64::NAN] {
            assert!(WorkloadConfig::scaled(ModelKind::Pcs, Load::Light, Balance::Balanced, s).build().is_err());
        }
        assert!(WorkloadConfig::desk(ModelKind::Pcs, Load::Heavy, Balance::Unbalanced).build().is_err());
        assert!(WorkloadConfig::scaled(ModelKind::Highway, Load::Heavy, Balance::Balanced, 1e-4).build().is_err());
    }

    #[test]
    fn names_round_trip() {
        for l in Load::ALL {
            assert_eq!(l.to_string().parse::<Load>().unwrap(), l);
        }
        assert_eq!("HIGHWAY".parse::<ModelKind>().unwrap(), ModelKind::Highway);
        assert!("bogus".parse::<Balance>().is_err());
    }
}
