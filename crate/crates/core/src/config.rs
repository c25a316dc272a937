//! Run configuration: every model, training and readout parameter in one
//! TOML-serializable tree.
//!
//! A config file names a preset (`desk` or `paper`) and overrides any subset
//! of its keys. The fully resolved tree is what gets hashed and recorded.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neuron::{NeuronParams, VoltageTraceParams};
use crate::plasticity::{ExcPlasticityParams, InhPlasticityParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Integration step (ms).
    pub dt: f64,
    /// Stimulus presentation time (ms).
    pub presentation_ms: f64,
    pub n_train_patches: u64,
    /// Probability of mirroring a training patch, drawn independently per axis.
    pub flip_probability: f64,
    /// Rate of an input unit at the source image's absolute maximum (Hz).
    pub max_rate_hz: f64,
    /// Simulated time between ON/OFF norm equalizations (ms).
    pub normalization_period_ms: f64,
    pub master_seed: u64,
    /// Training-log cadence in patches.
    pub log_every: u64,
    /// Checkpoint cadence in patches; 0 disables periodic snapshots.
    pub snapshot_every: u64,
    /// Abort training after this many consecutive patches without an excitatory spike.
    pub dead_patch_limit: u64,
    /// Plausible mean excitatory rate during training (Hz); violations are logged.
    pub rate_band_hz: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronConfig {
    pub exc: NeuronParams,
    pub inh: NeuronParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlasticityConfig {
    pub input_exc: ExcPlasticityParams,
    pub input_inh: ExcPlasticityParams,
    pub exc_inh: ExcPlasticityParams,
    pub inh_exc: InhPlasticityParams,
    pub inh_inh: InhPlasticityParams,
    /// Excitatory weights start uniform in `[w_min, init_exc_fraction * w_max)`.
    pub init_exc_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Whitened natural-scene store (NIMG format).
    pub natural_images: PathBuf,
    /// Directory holding the four standard MNIST IDX files.
    pub mnist_dir: PathBuf,
}

impl DataConfig {
    pub fn mnist_files(&self, train: bool) -> (PathBuf, PathBuf) {
        let prefix = if train { "train" } else { "t10k" };
        (
            self.mnist_dir.join(format!("{prefix}-images-idx3-ubyte")),
            self.mnist_dir.join(format!("{prefix}-labels-idx1-ubyte")),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    /// Min-max per feature, fitted on the training matrix; test values clipped to [0, 1].
    PerFeature,
    /// Min-max within each activity vector.
    PerVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutConfig {
    /// Presentations averaged per digit patch.
    pub reps: u32,
    /// Digits taken from the head of each MNIST split (0 = all).
    pub n_train_digits: usize,
    pub n_test_digits: usize,
    pub svm_c: f64,
    pub svm_tol: f64,
    pub svm_max_epochs: usize,
    pub intercept_scaling: f64,
    pub scaling: ScalingMode,
    /// Erasement levels of the robustness sweep.
    pub levels: Vec<f64>,
    /// Master seeds of the independently trained networks that get averaged.
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub simulation: SimulationConfig,
    pub neuron: NeuronConfig,
    pub plasticity: PlasticityConfig,
    pub data: DataConfig,
    pub readout: ReadoutConfig,
}

/// The parts of a config that determine network state; snapshots carry its hash.
/// Run length, logging cadence and guards are left out so a snapshot can be
/// resumed with a longer run or different checkpoint spacing.
#[derive(Serialize)]
struct ModelPart<'a> {
    dt: f64,
    presentation_ms: f64,
    flip_probability: f64,
    max_rate_hz: f64,
    normalization_period_ms: f64,
    master_seed: u64,
    neuron: &'a NeuronConfig,
    plasticity: &'a PlasticityConfig,
}

pub fn erasement_levels() -> Vec<f64> {
    (0..20).map(|k| k as f64 * 0.05).map(|l| (l * 100.0).round() / 100.0).collect()
}

fn default_exc_plasticity() -> ExcPlasticityParams {
    ExcPlasticityParams {
        a_ltp: 1.25e-4,
        a_ltd: 1.75e-3,
        theta_plus: -45.3,
        theta_minus: -70.6,
        tau_plus: 7.0,
        tau_minus: 10.0,
        tau_x: 15.0,
        u_ref: 60.0,
        tau_homeo: 1000.0,
        w_min: 0.0,
        w_max: 2000.0,
    }
}

fn default_inh_plasticity() -> InhPlasticityParams {
    InhPlasticityParams {
        eta: 0.0125,
        rho: 0.8,
        tau_pre: 20.0,
        tau_post: 20.0,
        w_min: 0.0,
        w_max: 400.0,
    }
}

impl RunConfig {
    /// `desk`: 100k training patches, 10k/2k MNIST digits, 3 repetitions.
    /// `paper`: 400k patches, full MNIST, 10 repetitions, 5 seeds.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self {
            preset: "desk".into(),
            simulation: SimulationConfig {
                dt: 1.0,
                presentation_ms: 125.0,
                n_train_patches: 100_000,
                flip_probability: 0.5,
                max_rate_hz: 125.0,
                normalization_period_ms: 20_000.0,
                master_seed: 1,
                log_every: 1000,
                snapshot_every: 0,
                dead_patch_limit: 1000,
                rate_band_hz: [0.1, 50.0],
            },
            neuron: NeuronConfig {
                exc: NeuronParams::default(),
                inh: NeuronParams::default(),
            },
            plasticity: PlasticityConfig {
                input_exc: default_exc_plasticity(),
                input_inh: default_exc_plasticity(),
                exc_inh: default_exc_plasticity(),
                inh_exc: default_inh_plasticity(),
                inh_inh: default_inh_plasticity(),
                init_exc_fraction: 0.3,
            },
            data: DataConfig {
                natural_images: PathBuf::from("data/natural.nimg"),
                mnist_dir: PathBuf::from("data/mnist"),
            },
            readout: ReadoutConfig {
                reps: 3,
                n_train_digits: 10_000,
                n_test_digits: 2_000,
                svm_c: 1.0,
                svm_tol: 1e-4,
                svm_max_epochs: 100_000,
                intercept_scaling: 1.0,
                scaling: ScalingMode::PerFeature,
                levels: erasement_levels(),
                seeds: vec![1],
            },
        };
        match name {
            "desk" => Ok(base),
            "paper" => {
                let mut cfg = base;
                cfg.preset = "paper".into();
                cfg.simulation.n_train_patches = 400_000;
                cfg.readout.reps = 10;
                cfg.readout.n_train_digits = 0;
                cfg.readout.n_test_digits = 0;
                cfg.readout.seeds = vec![1, 2, 3, 4, 5];
                Ok(cfg)
            }
            other => Err(Error::config("preset", format!("unknown preset `{other}` (expected desk or paper)"))),
        }
    }

    /// Parses a config document: the named preset (default `desk`) overlaid with the document's keys.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let overrides: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("<file>", e.to_string()))?;
        let preset = match overrides.get("preset") {
            None => "desk".to_string(),
            Some(toml::Value::String(s)) => s.clone(),
            Some(_) => return Err(Error::config("preset", "must be a string")),
        };
        let base = Self::preset(&preset)?;
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::config("<preset>", e.to_string()))?;
        merge(&mut merged, overrides);
        let cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(field_of(&e), e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over everything that shapes the trained weights.
    pub fn model_hash(&self) -> [u8; 32] {
        let s = &self.simulation;
        let text = toml::to_string(&ModelPart {
            dt: s.dt,
            presentation_ms: s.presentation_ms,
            flip_probability: s.flip_probability,
            max_rate_hz: s.max_rate_hz,
            normalization_period_ms: s.normalization_period_ms,
            master_seed: s.master_seed,
            neuron: &self.neuron,
            plasticity: &self.plasticity,
        })
        .expect("config serializes");
        Sha256::digest(text.as_bytes()).into()
    }

    pub fn steps_per_presentation(&self) -> usize {
        (self.simulation.presentation_ms / self.simulation.dt).round() as usize
    }

    /// Presentations between two ON/OFF norm equalizations.
    pub fn normalization_every(&self) -> u64 {
        (self.simulation.normalization_period_ms / self.simulation.presentation_ms).round() as u64
    }

    pub fn exc_voltage_traces(&self) -> VoltageTraceParams {
        traces_of(&self.plasticity.input_exc)
    }

    pub fn inh_voltage_traces(&self) -> VoltageTraceParams {
        traces_of(&self.plasticity.input_inh)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.simulation;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(Error::config("simulation.dt", "must be positive"));
        }
        if !(s.presentation_ms > 0.0) || !divides(s.dt, s.presentation_ms) {
            return Err(Error::config("simulation.presentation_ms", "must be a positive multiple of dt"));
        }
        if !(s.normalization_period_ms > 0.0) || !divides(s.presentation_ms, s.normalization_period_ms) {
            return Err(Error::config("simulation.normalization_period_ms", "must be a positive multiple of presentation_ms"));
        }
        if !(0.0..=1.0).contains(&s.flip_probability) {
            return Err(Error::config("simulation.flip_probability", "must lie in [0, 1]"));
        }
        if !(s.max_rate_hz > 0.0 && s.max_rate_hz * s.dt / 1000.0 <= 1.0) {
            return Err(Error::config("simulation.max_rate_hz", "must be positive and at most one spike per step"));
        }
        if s.log_every == 0 {
            return Err(Error::config("simulation.log_every", "must be at least 1"));
        }
        if s.dead_patch_limit == 0 {
            return Err(Error::config("simulation.dead_patch_limit", "must be at least 1"));
        }
        if !(s.rate_band_hz[0] <= s.rate_band_hz[1]) {
            return Err(Error::config("simulation.rate_band_hz", "lower bound exceeds upper bound"));
        }
        for (name, p) in [("neuron.exc", &self.neuron.exc), ("neuron.inh", &self.neuron.inh)] {
            p.validate(name)?;
            if s.dt > p.fastest_time_constant() {
                return Err(Error::config("simulation.dt", format!("exceeds the fastest time constant of {name}")));
            }
        }
        let pl = &self.plasticity;
        for (name, p) in [("plasticity.input_exc", &pl.input_exc), ("plasticity.input_inh", &pl.input_inh), ("plasticity.exc_inh", &pl.exc_inh)] {
            p.validate(name)?;
            if s.dt > p.tau_plus.min(p.tau_minus).min(p.tau_x).min(p.tau_homeo) {
                return Err(Error::config(format!("{name}.tau_plus"), "time constants must be at least dt"));
            }
        }
        for (name, p) in [("plasticity.inh_exc", &pl.inh_exc), ("plasticity.inh_inh", &pl.inh_inh)] {
            p.validate(name)?;
            if s.dt > p.tau_pre.min(p.tau_post) {
                return Err(Error::config(format!("{name}.tau_pre"), "time constants must be at least dt"));
            }
        }
        if traces_of(&pl.input_inh) != traces_of(&pl.exc_inh) {
            return Err(Error::config(
                "plasticity.exc_inh.tau_plus",
                "membrane-average time constants must match plasticity.input_inh (both read the inhibitory population)",
            ));
        }
        if !(pl.init_exc_fraction > 0.0 && pl.init_exc_fraction <= 1.0) {
            return Err(Error::config("plasticity.init_exc_fraction", "must lie in (0, 1]"));
        }
        let r = &self.readout;
        if r.reps == 0 {
            return Err(Error::config("readout.reps", "must be at least 1"));
        }
        if !(r.svm_c > 0.0) || !(r.svm_tol > 0.0) || r.svm_max_epochs == 0 || !(r.intercept_scaling > 0.0) {
            return Err(Error::config("readout.svm_c", "SVM C, tol, max_epochs and intercept_scaling must be positive"));
        }
        if r.levels.iter().any(|l| !(0.0..1.0).contains(l)) || r.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("readout.levels", "levels must be strictly increasing within [0, 1)"));
        }
        Ok(())
    }
}

fn traces_of(p: &ExcPlasticityParams) -> VoltageTraceParams {
    VoltageTraceParams {
        tau_plus: p.tau_plus,
        tau_minus: p.tau_minus,
        tau_homeo: p.tau_homeo,
    }
}

fn divides(step: f64, span: f64) -> bool {
    let n = (span / step).round();
    n >= 1.0 && (n * step - span).abs() < 1e-9 * span.max(1.0)
}

fn merge(base: &mut toml::Table, overrides: toml::Table) {
    for (key, value) in overrides {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn field_of(e: &toml::de::Error) -> String {
    // toml reports the offending key inside the message; keep it as the field name when present.
    let msg = e.message();
    match msg.split('`').nth(1) {
        Some(key) => key.to_string(),
        None => "<file>".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        RunConfig::preset("desk").unwrap().validate().unwrap();
        let paper = RunConfig::preset("paper").unwrap();
        paper.validate().unwrap();
        assert_eq!(paper.simulation.n_train_patches, 400_000);
        assert_eq!(paper.readout.reps, 10);
        assert!(RunConfig::preset("huge").is_err());
    }

    #[test]
    fn normalization_every_160_presentations() {
        assert_eq!(RunConfig::preset("desk").unwrap().normalization_every(), 160);
    }

    #[test]
    fn overrides_merge_over_preset() {
        let cfg = RunConfig::from_toml_str(
            "preset = \"paper\"\n[simulation]\nmaster_seed = 9\n[plasticity.inh_exc]\neta = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.simulation.master_seed, 9);
        assert_eq!(cfg.simulation.n_train_patches, 400_000);
        assert_eq!(cfg.plasticity.inh_exc.eta, 0.5);
        assert_eq!(cfg.plasticity.inh_inh.eta, RunConfig::preset("paper").unwrap().plasticity.inh_inh.eta);
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig::preset("desk").unwrap();
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_name_their_field() {
        let err = RunConfig::from_toml_str("[simulation]\npresentation_ms = 125.5\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "simulation.presentation_ms"), "{err}");
        let err = RunConfig::from_toml_str("[neuron.exc]\ntau_z = -1.0\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "neuron.exc.tau_z"), "{err}");
        assert!(RunConfig::from_toml_str("[simulation]\nbogus = 1\n").is_err());
    }

    #[test]
    fn model_hash_ignores_readout_settings() {
        let a = RunConfig::preset("desk").unwrap();
        let mut b = a.clone();
        b.readout.reps = 7;
        b.simulation.n_train_patches += 10;
        b.simulation.snapshot_every = 5;
        assert_eq!(a.model_hash(), b.model_hash());
        b.simulation.master_seed += 1;
        assert_ne!(a.model_hash(), b.model_hash());
    }

    #[test]
    fn levels_are_five_percent_steps() {
        let levels = erasement_levels();
        assert_eq!(levels.len(), 20);
        assert_eq!(levels[1], 0.05);
        assert_eq!(levels[19], 0.95);
    }
}
