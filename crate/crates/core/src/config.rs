//! Run configuration: named presets, TOML overrides, and run manifests.
//!
//! A configuration file is a partial [`RunConfig`] in TOML. Values are
//! layered: preset (from `--preset`, else the file's `preset` key, else
//! `fig10`), then the file, then command-line overrides.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::demos::{ChirpDemoConfig, MorphDemoConfig};
use crate::error::{Error, Result};
use crate::filters::FilterDescriptor;
use crate::scenarios::OutlierKind;
use crate::sweep::{ExperimentConfig, SweepGrid};

pub const PRESETS: [&str; 5] = ["fig10", "fig11", "fig12", "chirp", "morph"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub experiment: ExperimentConfig,
    pub sweep: SweepGrid,
    pub chirp: ChirpDemoConfig,
    pub morph: MorphDemoConfig,
}

/// −20 … +30 dB in 5 dB steps.
fn outlier_axis() -> Vec<f64> {
    (0..11).map(|k| -20.0 + 5.0 * k as f64).collect()
}

fn grid(scenario: &str, kind: OutlierKind, rates: Vec<f64>, duty_cycles: Vec<f64>) -> SweepGrid {
    SweepGrid {
        scenario: scenario.into(),
        kind,
        rates,
        duty_cycles,
        outlier_rel_db: outlier_axis(),
        thermal_snr_db: vec![10.0, 30.0],
        replicates: 4,
        seed: 1,
        no_harm_check: false,
    }
}

/// Built-in configuration by name.
pub fn preset(name: &str) -> Result<RunConfig> {
    let poisson = || {
        grid(
            "fig10-poisson",
            OutlierKind::PoissonNormal,
            vec![0.01, 0.05, 0.2, 1.0],
            vec![1.0],
        )
    };
    let sweep = match name {
        "fig10" | "chirp" | "morph" => poisson(),
        "fig11" => grid(
            "fig11-bursts",
            OutlierKind::PeriodicGaussianBurst,
            vec![0.01, 0.05, 0.2, 1.0],
            vec![0.1],
        ),
        "fig12" => grid(
            "fig12-duty",
            OutlierKind::PeriodicGaussianBurst,
            vec![0.05],
            vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        ),
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(RunConfig {
        preset: name.into(),
        experiment: ExperimentConfig::default(),
        sweep,
        chirp: ChirpDemoConfig::default(),
        morph: MorphDemoConfig::default(),
    })
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Turns `a.b=value` into the nested table `{a = {b = value}}`.
fn parse_override(set: &str) -> Result<toml::Value> {
    let (key, raw) = set
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{set}' is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override '{set}' has an empty key")));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    Ok(key
        .rsplit('.')
        .fold(value, |acc, k| toml::Value::Table(toml::Table::from_iter([(k.to_string(), acc)]))))
}

impl RunConfig {
    /// Layers a TOML document over a preset. `preset` wins over the
    /// document's own `preset` key.
    pub fn from_toml(text: &str, preset_name: Option<&str>) -> Result<Self> {
        Self::resolve(preset_name, Some(text), &[])
    }

    /// Full layering: preset, then an optional TOML document, then
    /// `section.key=value` overrides (values in TOML syntax; bare words
    /// are taken as strings).
    pub fn resolve(preset_name: Option<&str>, text: Option<&str>, sets: &[String]) -> Result<Self> {
        let doc: toml::Table = match text {
            Some(t) => t
                .parse()
                .map_err(|e: toml::de::Error| Error::Config(format!("config parse error: {e}")))?,
            None => toml::Table::new(),
        };
        let name = match (preset_name, doc.get("preset")) {
            (Some(p), _) => p.to_string(),
            (None, Some(toml::Value::String(p))) => p.clone(),
            (None, Some(_)) => return Err(Error::Config("'preset' must be a string".into())),
            (None, None) => "fig10".to_string(),
        };
        let base_cfg = preset(&name)?;
        let mut base = toml::Value::try_from(&base_cfg)
            .map_err(|e| Error::Config(format!("preset serialization: {e}")))?;
        merge(&mut base, toml::Value::Table(doc));
        for set in sets {
            merge(&mut base, parse_override(set)?);
        }
        if let toml::Value::Table(t) = &mut base {
            t.insert("preset".into(), toml::Value::String(name));
        }
        let cfg: RunConfig = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("config error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file, or the configuration embedded in a JSON run
    /// manifest, then applies overrides. A manifest's own preset is kept
    /// unless `preset_name` is given.
    pub fn load(path: &Path, preset_name: Option<&str>, sets: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let m: RunManifest = serde_json::from_str(&text).map_err(|e| {
                Error::Config(format!("manifest parse error at line {}: {e}", e.line()))
            })?;
            let embedded = m.config.to_toml()?;
            return Self::resolve(preset_name, Some(&embedded), sets);
        }
        Self::resolve(preset_name, Some(&text), sets)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialization: {e}")))
    }

    /// Same seed for every random source.
    pub fn set_seed(&mut self, seed: u64) {
        self.sweep.seed = seed;
        self.chirp.seed = seed;
        self.morph.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.sweep.validate()?;
        let e = &self.experiment;
        if e.samples < 1 << 12 {
            return Err(Error::Config("experiment.samples must be at least 4096".into()));
        }
        if e.sample_rate_fc < 16.0 {
            return Err(Error::Config("experiment.sample_rate_fc must be at least 16".into()));
        }
        e.chain(crate::sweep::Variant::ClipperCaf)?;
        Ok(())
    }
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub filters: Vec<FilterDescriptor>,
    /// Output file name → SHA-256 of its contents.
    pub outputs: Vec<(String, String)>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig, started_unix: u64) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seeds: vec![config.sweep.seed, config.chirp.seed, config.morph.seed],
            filters: config.experiment.filter_digests()?,
            config: config.clone(),
            outputs: Vec::new(),
            started_unix,
            finished_unix: started_unix,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_exist_and_validate() {
        for p in PRESETS {
            let c = preset(p).unwrap();
            c.validate().unwrap();
        }
        assert!(matches!(preset("fig99"), Err(Error::Config(_))));
    }

    #[test]
    fn fig_presets_match_axes() {
        let f10 = preset("fig10").unwrap().sweep;
        assert_eq!(f10.kind, OutlierKind::PoissonNormal);
        assert_eq!(f10.thermal_snr_db, vec![10.0, 30.0]);
        assert_eq!(f10.outlier_rel_db.first(), Some(&-20.0));
        assert_eq!(f10.outlier_rel_db.last(), Some(&30.0));
        let f12 = preset("fig12").unwrap().sweep;
        assert_eq!(f12.rates, vec![0.05]);
        assert!(f12.duty_cycles.len() > 3);
    }

    #[test]
    fn file_values_override_preset() {
        let c = RunConfig::from_toml(
            "preset = \"fig12\"\n[experiment]\nsamples = 65536\n[sweep]\nreplicates = 1\n",
            None,
        )
        .unwrap();
        assert_eq!(c.preset, "fig12");
        assert_eq!(c.experiment.samples, 65536);
        assert_eq!(c.sweep.replicates, 1);
        assert_eq!(c.sweep.rates, vec![0.05]);
        let flag = RunConfig::from_toml("preset = \"fig12\"\n", Some("fig11")).unwrap();
        assert_eq!(flag.preset, "fig11");
    }

    #[test]
    fn overrides_apply_last() {
        let sets = vec![
            "sweep.replicates=2".to_string(),
            "sweep.kind=periodic-gaussian-burst".to_string(),
            "experiment.samples = 32768".to_string(),
        ];
        let c = RunConfig::resolve(None, Some("[sweep]\nreplicates = 3\n"), &sets).unwrap();
        assert_eq!(c.sweep.replicates, 2);
        assert_eq!(c.sweep.kind, OutlierKind::PeriodicGaussianBurst);
        assert_eq!(c.experiment.samples, 32768);
        assert!(RunConfig::resolve(None, None, &["noequals".into()]).is_err());
        assert!(RunConfig::resolve(None, None, &["sweep.nope=1".into()]).is_err());
    }

    #[test]
    fn parse_errors_carry_line_context() {
        let e = RunConfig::from_toml("[experiment]\nsamples = \n", None).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        let e = RunConfig::from_toml("[experiment]\nbogus = 1\n", None).unwrap_err();
        assert!(e.to_string().contains("bogus"));
    }

    #[test]
    fn roundtrip_through_toml_and_manifest() {
        let mut c = preset("fig11").unwrap();
        c.set_seed(42);
        let back = RunConfig::from_toml(&c.to_toml().unwrap(), None).unwrap();
        assert_eq!(back, c);
        let m = RunManifest::new("sweep", &c, 1).unwrap();
        let json = m.to_json().unwrap();
        let m2: RunManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(m2.config, c);
        assert_eq!(m2.seeds, vec![42, 42, 42]);
        assert!(m2.filters.iter().all(|f| f.digest.len() == 64));
    }
}
