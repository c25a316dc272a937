//! The two-layer network: 648 Poisson inputs (18×18 ON + OFF), 324 excitatory
//! and 81 inhibitory AdEx neurons, five all-to-all projections.
//!
//! Each clock step runs in a fixed order:
//! 1. sample this step's input spikes,
//! 2. compute drives from the previous step's spikes of every population,
//! 3. integrate all neurons,
//! 4. apply plasticity (training only),
//! 5. record spikes and keep them for the next step's drives.

use crate::config::RunConfig;
use crate::encoding::{encode, sample_input_spikes, sample_patch, StimulusPatch, INPUT_UNITS, PATCH_PIXELS};
use crate::error::{Error, Result};
use crate::images::WhitenedImageStore;
use crate::neuron::{neuron_step, NeuronParams, NeuronState, VoltageTraceParams};
use crate::plasticity::{spike_indices, Projection, Rule};
use crate::rng::{stream, SimRng, Stream, TrainStreams};

pub const EXC_SIZE: usize = 324;
pub const INH_SIZE: usize = 81;

/// Fixed model constants shared by every presentation.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub dt: f64,
    pub exc: NeuronParams,
    pub inh: NeuronParams,
    pub exc_traces: VoltageTraceParams,
    pub inh_traces: VoltageTraceParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Connectivity {
    pub input_exc: Projection,
    pub input_inh: Projection,
    pub exc_inh: Projection,
    pub inh_exc: Projection,
    pub inh_inh: Projection,
}

impl Connectivity {
    pub fn named(&self) -> [(&'static str, &Projection); 5] {
        [
            ("input_exc", &self.input_exc),
            ("input_inh", &self.input_inh),
            ("exc_inh", &self.exc_inh),
            ("inh_exc", &self.inh_exc),
            ("inh_inh", &self.inh_inh),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Projection); 5] {
        [
            ("input_exc", &mut self.input_exc),
            ("input_inh", &mut self.input_inh),
            ("exc_inh", &mut self.exc_inh),
            ("inh_exc", &mut self.inh_exc),
            ("inh_inh", &mut self.inh_inh),
        ]
    }

    fn apply_plasticity(&mut self, d: &Dynamics, input_now: &[bool], dt: f64) -> Result<()> {
        self.input_exc.exc_weight_step(input_now, &d.exc, dt)?;
        self.input_inh.exc_weight_step(input_now, &d.inh, dt)?;
        self.exc_inh.exc_weight_step(&d.last_exc, &d.inh, dt)?;
        self.inh_exc.inh_weight_step(&d.last_inh, &d.last_exc, dt)?;
        self.inh_inh.inh_weight_step(&d.last_inh, &d.last_inh, dt)?;
        Ok(())
    }
}

/// Everything that changes from step to step apart from weights and traces.
#[derive(Clone, Debug, PartialEq)]
pub struct Dynamics {
    pub exc: Vec<NeuronState>,
    pub inh: Vec<NeuronState>,
    /// Spikes of the most recent step; they drive the next one.
    pub last_input: Vec<bool>,
    pub last_exc: Vec<bool>,
    pub last_inh: Vec<bool>,
}

impl Dynamics {
    pub fn at_rest(model: &Model) -> Self {
        Self {
            exc: vec![NeuronState::at_rest(&model.exc); EXC_SIZE],
            inh: vec![NeuronState::at_rest(&model.inh); INH_SIZE],
            last_input: vec![false; INPUT_UNITS],
            last_exc: vec![false; EXC_SIZE],
            last_inh: vec![false; INH_SIZE],
        }
    }
}

/// Spikes per neuron over one presentation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpikeCounts {
    pub input: Vec<u32>,
    pub exc: Vec<u32>,
    pub inh: Vec<u32>,
}

impl SpikeCounts {
    fn zeros() -> Self {
        Self {
            input: vec![0; INPUT_UNITS],
            exc: vec![0; EXC_SIZE],
            inh: vec![0; INH_SIZE],
        }
    }

    pub fn total_exc(&self) -> u64 {
        self.exc.iter().map(|&c| c as u64).sum()
    }

    pub fn total_inh(&self) -> u64 {
        self.inh.iter().map(|&c| c as u64).sum()
    }
}

struct Scratch {
    input_now: Vec<bool>,
    exc_e: Vec<f64>,
    exc_i: Vec<f64>,
    inh_e: Vec<f64>,
    inh_i: Vec<f64>,
}

impl Scratch {
    fn new() -> Self {
        Self {
            input_now: vec![false; INPUT_UNITS],
            exc_e: vec![0.0; EXC_SIZE],
            exc_i: vec![0.0; EXC_SIZE],
            inh_e: vec![0.0; INH_SIZE],
            inh_i: vec![0.0; INH_SIZE],
        }
    }
}

/// Steps 1-3 of the clock cycle. Leaves this step's input spikes in
/// `scratch.input_now` and the neurons' `spiked` flags set.
fn integrate(model: &Model, conn: &Connectivity, d: &mut Dynamics, rates: &[f64], rng: &mut SimRng, s: &mut Scratch, t_ms: f64) -> Result<()> {
    sample_input_spikes(rates, model.dt, rng, &mut s.input_now);

    let idx_input = spike_indices(&d.last_input);
    let idx_exc = spike_indices(&d.last_exc);
    let idx_inh = spike_indices(&d.last_inh);
    for buf in [&mut s.exc_e, &mut s.exc_i, &mut s.inh_e, &mut s.inh_i] {
        buf.fill(0.0);
    }
    conn.input_exc.accumulate_drive(&idx_input, &mut s.exc_e);
    conn.inh_exc.accumulate_drive(&idx_inh, &mut s.exc_i);
    conn.input_inh.accumulate_drive(&idx_input, &mut s.inh_e);
    conn.exc_inh.accumulate_drive(&idx_exc, &mut s.inh_e);
    conn.inh_inh.accumulate_drive(&idx_inh, &mut s.inh_i);

    for (j, state) in d.exc.iter_mut().enumerate() {
        neuron_step(state, &model.exc, &model.exc_traces, s.exc_e[j], s.exc_i[j], model.dt).map_err(|e| Error::Numerical {
            population: "exc",
            index: j,
            time_ms: t_ms,
            detail: e.to_string(),
        })?;
    }
    for (j, state) in d.inh.iter_mut().enumerate() {
        neuron_step(state, &model.inh, &model.inh_traces, s.inh_e[j], s.inh_i[j], model.dt).map_err(|e| Error::Numerical {
            population: "inh",
            index: j,
            time_ms: t_ms,
            detail: e.to_string(),
        })?;
    }
    Ok(())
}

/// Step 5: promote this step's spikes to "last" and count them.
fn record(d: &mut Dynamics, s: &Scratch, counts: &mut SpikeCounts) {
    for (i, &spk) in s.input_now.iter().enumerate() {
        d.last_input[i] = spk;
        counts.input[i] += spk as u32;
    }
    for (j, st) in d.exc.iter().enumerate() {
        d.last_exc[j] = st.spiked;
        counts.exc[j] += st.spiked as u32;
    }
    for (j, st) in d.inh.iter().enumerate() {
        d.last_inh[j] = st.spiked;
        counts.inh[j] += st.spiked as u32;
    }
}

fn check_patch(patch: &StimulusPatch, steps: usize) -> Result<Vec<f64>> {
    if patch.on.len() != PATCH_PIXELS || patch.off.len() != PATCH_PIXELS {
        return Err(Error::Shape(format!("stimulus must have {PATCH_PIXELS} ON and OFF rates")));
    }
    if steps == 0 {
        return Err(Error::Invalid("presentation shorter than one step".into()));
    }
    Ok(patch.rates())
}

/// Runs a presentation on fixed weights, mutating only `d`.
pub fn present_frozen(model: &Model, conn: &Connectivity, d: &mut Dynamics, patch: &StimulusPatch, duration_ms: f64, rng: &mut SimRng) -> Result<SpikeCounts> {
    let steps = (duration_ms / model.dt).round() as usize;
    let rates = check_patch(patch, steps)?;
    let mut s = Scratch::new();
    let mut counts = SpikeCounts::zeros();
    for k in 0..steps {
        integrate(model, conn, d, &rates, rng, &mut s, k as f64 * model.dt)?;
        record(d, &s, &mut counts);
    }
    Ok(counts)
}

fn present_plastic(model: &Model, conn: &mut Connectivity, d: &mut Dynamics, patch: &StimulusPatch, duration_ms: f64, rng: &mut SimRng) -> Result<SpikeCounts> {
    let steps = (duration_ms / model.dt).round() as usize;
    let rates = check_patch(patch, steps)?;
    let mut s = Scratch::new();
    let mut counts = SpikeCounts::zeros();
    for k in 0..steps {
        integrate(model, conn, d, &rates, rng, &mut s, k as f64 * model.dt)?;
        // Plasticity sees this step's spikes through the "last" vectors, so record first.
        record(d, &s, &mut counts);
        conn.apply_plasticity(d, &s.input_now, model.dt)?;
    }
    Ok(counts)
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainLogRow {
    pub patch_index: u64,
    pub mean_exc_rate_hz: f64,
    pub mean_inh_rate_hz: f64,
    pub input_exc_norm_mean: f64,
    pub inh_exc_weight_mean: f64,
}

impl TrainLogRow {
    pub const CSV_HEADER: &'static str = "patch_index,mean_exc_rate_hz,mean_inh_rate_hz,input_exc_norm_mean,inh_exc_weight_mean";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.patch_index, self.mean_exc_rate_hz, self.mean_inh_rate_hz, self.input_exc_norm_mean, self.inh_exc_weight_mean
        )
    }
}

pub enum TrainEvent<'a> {
    Log(TrainLogRow),
    /// Emitted every `snapshot_every` patches, at a presentation boundary.
    Checkpoint(&'a Network),
}

#[derive(Clone, Debug)]
pub struct Network {
    pub model: Model,
    pub conn: Connectivity,
    pub dynamics: Dynamics,
    /// Training patches presented so far.
    pub patches_seen: u64,
    /// Consecutive training patches without an excitatory spike.
    pub silent_patches: u64,
    pub streams: TrainStreams,
    pub config_hash: [u8; 32],
}

/// Instantiates the topology with initial weights drawn from the init stream.
pub fn build_network(config: &RunConfig) -> Result<Network> {
    config.validate()?;
    let pl = &config.plasticity;
    let mut init = stream(config.simulation.master_seed, Stream::Init);
    let frac = pl.init_exc_fraction;

    let mut input_exc = Projection::new(INPUT_UNITS, EXC_SIZE, Rule::ExcitatoryVoltage(pl.input_exc.clone())).with_channels(PATCH_PIXELS);
    input_exc.randomize(&mut init, pl.input_exc.w_min, pl.input_exc.w_min.max(frac * pl.input_exc.w_max));
    let mut input_inh = Projection::new(INPUT_UNITS, INH_SIZE, Rule::ExcitatoryVoltage(pl.input_inh.clone())).with_channels(PATCH_PIXELS);
    input_inh.randomize(&mut init, pl.input_inh.w_min, pl.input_inh.w_min.max(frac * pl.input_inh.w_max));
    let mut exc_inh = Projection::new(EXC_SIZE, INH_SIZE, Rule::ExcitatoryVoltage(pl.exc_inh.clone()));
    exc_inh.randomize(&mut init, pl.exc_inh.w_min, pl.exc_inh.w_min.max(frac * pl.exc_inh.w_max));
    let inh_exc = Projection::new(INH_SIZE, EXC_SIZE, Rule::InhibitorySymmetric(pl.inh_exc.clone()));
    let inh_inh = Projection::new(INH_SIZE, INH_SIZE, Rule::InhibitorySymmetric(pl.inh_inh.clone())).without_self_connections();

    let model = Model {
        dt: config.simulation.dt,
        exc: config.neuron.exc.clone(),
        inh: config.neuron.inh.clone(),
        exc_traces: config.exc_voltage_traces(),
        inh_traces: config.inh_voltage_traces(),
    };
    let dynamics = Dynamics::at_rest(&model);
    Ok(Network {
        model,
        conn: Connectivity {
            input_exc,
            input_inh,
            exc_inh,
            inh_exc,
            inh_inh,
        },
        dynamics,
        patches_seen: 0,
        silent_patches: 0,
        streams: TrainStreams::new(config.simulation.master_seed),
        config_hash: config.model_hash(),
    })
}

impl Network {
    /// Presents `patch` for `duration_ms`, continuing from the current dynamic state.
    /// With `plastic == false` no weight or trace changes.
    pub fn simulate_presentation(&mut self, patch: &StimulusPatch, duration_ms: f64, plastic: bool, rng: &mut SimRng) -> Result<SpikeCounts> {
        if plastic {
            present_plastic(&self.model, &mut self.conn, &mut self.dynamics, patch, duration_ms, rng)
        } else {
            present_frozen(&self.model, &self.conn, &mut self.dynamics, patch, duration_ms, rng)
        }
    }

    /// Presents `patch` to a fresh resting copy of the dynamics; the network is untouched.
    pub fn present_from_rest(&self, patch: &StimulusPatch, duration_ms: f64, rng: &mut SimRng) -> Result<SpikeCounts> {
        let mut d = Dynamics::at_rest(&self.model);
        present_frozen(&self.model, &self.conn, &mut d, patch, duration_ms, rng)
    }

    /// A copy with every inhibitory synapse (inh→exc, inh→inh) set to zero and frozen.
    pub fn without_inhibition(&self) -> Network {
        let mut net = self.clone();
        for proj in [&mut net.conn.inh_exc, &mut net.conn.inh_inh] {
            let (_, w_max) = proj.rule.bounds();
            proj.rule = Rule::Static { w_min: 0.0, w_max };
            proj.fill(0.0);
        }
        net
    }

    /// Trains until `config.simulation.n_train_patches` patches have been
    /// presented in total, so a restored snapshot resumes where it stopped.
    pub fn train(&mut self, store: &WhitenedImageStore, config: &RunConfig, mut on_event: impl FnMut(TrainEvent<'_>) -> Result<()>) -> Result<()> {
        if self.config_hash != config.model_hash() {
            return Err(Error::config("<config>", "network was built from a different model configuration"));
        }
        if store.is_empty() {
            return Err(Error::Invalid("natural image store is empty".into()));
        }
        let sim = &config.simulation;
        let norm_every = config.normalization_every();
        let (mut exc_spikes, mut inh_spikes, mut window) = (0u64, 0u64, 0u64);

        while self.patches_seen < sim.n_train_patches {
            let signed = sample_patch(store, &mut self.streams.patch, &mut self.streams.flip, sim.flip_probability);
            let stimulus = encode(&signed.values, signed.abs_max, sim.max_rate_hz);
            let counts = present_plastic(&self.model, &mut self.conn, &mut self.dynamics, &stimulus, sim.presentation_ms, &mut self.streams.input)?;
            self.patches_seen += 1;

            let n_exc = counts.total_exc();
            exc_spikes += n_exc;
            inh_spikes += counts.total_inh();
            window += 1;
            self.silent_patches = if n_exc == 0 { self.silent_patches + 1 } else { 0 };
            if self.silent_patches >= sim.dead_patch_limit {
                return Err(Error::DeadNetwork {
                    patch_index: self.patches_seen,
                    silent_patches: self.silent_patches,
                });
            }

            if self.patches_seen % norm_every == 0 {
                self.conn.input_exc.equalize_off_to_on()?;
                self.conn.input_inh.equalize_off_to_on()?;
            }

            if self.patches_seen % sim.log_every == 0 || self.patches_seen == sim.n_train_patches {
                let seconds = window as f64 * sim.presentation_ms / 1000.0;
                let row = TrainLogRow {
                    patch_index: self.patches_seen,
                    mean_exc_rate_hz: exc_spikes as f64 / (EXC_SIZE as f64 * seconds),
                    mean_inh_rate_hz: inh_spikes as f64 / (INH_SIZE as f64 * seconds),
                    input_exc_norm_mean: self.conn.input_exc.mean_row_norm(),
                    inh_exc_weight_mean: self.conn.inh_exc.weights.iter().map(|&w| w as f64).sum::<f64>() / self.conn.inh_exc.weights.len() as f64,
                };
                let [lo, hi] = sim.rate_band_hz;
                if !(lo..=hi).contains(&row.mean_exc_rate_hz) {
                    log::warn!(
                        "mean excitatory rate {:.2} Hz outside [{lo}, {hi}] Hz at patch {}",
                        row.mean_exc_rate_hz,
                        row.patch_index
                    );
                }
                on_event(TrainEvent::Log(row))?;
                (exc_spikes, inh_spikes, window) = (0, 0, 0);
            }
            if sim.snapshot_every > 0 && self.patches_seen % sim.snapshot_every == 0 {
                on_event(TrainEvent::Checkpoint(self))?;
            }
        }
        Ok(())
    }
}
