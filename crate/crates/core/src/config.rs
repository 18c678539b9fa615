//! Flat `key = value` run configuration (TOML subset).
//!
//! Keys: `grid` ("N" or "NXxNYxNZ"), `steps`, `engine` (naive|spatial|1wd|mwd),
//! `dw`, `bz`, `shape` ("tgz,tgx,tgc"), `cache_bytes`, `usable_fraction`,
//! `bandwidth_gbs`, `threads`, `seed`. Every key is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::field::GridDims;
use crate::models::MachineProfile;
use crate::mwd::ThreadGroupShape;
use crate::report::EngineKind;
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default, with = "text", skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridDims>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, with = "text", skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dw: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bz: Option<usize>,
    #[serde(default, with = "text", skip_serializing_if = "Option::is_none")]
    pub shape: Option<ThreadGroupShape>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub usable_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_gbs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl BenchConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Values set in `over` replace ours.
    pub fn merged(mut self, over: &BenchConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f.clone(); } )* };
        }
        take!(grid, steps, engine, dw, bz, shape, cache_bytes, usable_fraction, bandwidth_gbs, threads, seed);
        self
    }

    /// Machine profile with configured overrides applied to `base`.
    pub fn profile(&self, base: MachineProfile) -> Result<MachineProfile> {
        let p = MachineProfile {
            cache_bytes: self.cache_bytes.unwrap_or(base.cache_bytes),
            usable_fraction: self.usable_fraction.unwrap_or(base.usable_fraction),
            bandwidth_gbs: self.bandwidth_gbs.unwrap_or(base.bandwidth_gbs),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Serialises an optional value through its `Display`/`FromStr` text form.
mod text {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.collect_str(v),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<Option<T>, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(u64),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(s) => s,
            Raw::Int(n) => n.to_string(),
        };
        text.parse().map(Some).map_err(de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let c = BenchConfig::from_toml_str(
            r#"
            grid = "64x128x64"
            steps = 16
            engine = "mwd"
            dw = 8
            bz = 2
            shape = "2,2,3"
            cache_bytes = 47185920
            usable_fraction = 0.5
            bandwidth_gbs = 50.0
            threads = 12
            seed = 7
            "#,
        )
        .unwrap();
        assert_eq!(c.grid, Some(GridDims::new(64, 128, 64).unwrap()));
        assert_eq!(c.engine, Some(EngineKind::Mwd));
        assert_eq!(c.shape, Some(ThreadGroupShape::new(2, 2, 3)));
        assert_eq!(c.profile(MachineProfile::default()).unwrap(), MachineProfile::HASWELL_EP);
    }

    #[test]
    fn cube_shorthand_and_errors() {
        assert_eq!(BenchConfig::from_toml_str("grid = 48").unwrap().grid, Some(GridDims::cube(48).unwrap()));
        assert!(BenchConfig::from_toml_str("grid = \"2x2x2\"").is_err());
        assert!(BenchConfig::from_toml_str("colour = 3").is_err());
        assert!(BenchConfig::from_toml_str("engine = \"pluto\"").is_err());
    }

    #[test]
    fn later_values_win() {
        let file = BenchConfig { steps: Some(4), threads: Some(2), ..Default::default() };
        let flags = BenchConfig { threads: Some(8), ..Default::default() };
        let m = file.merged(&flags);
        assert_eq!((m.steps, m.threads), (Some(4), Some(8)));
    }
}
