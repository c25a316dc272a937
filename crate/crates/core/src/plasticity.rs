//! Dense all-to-all projections and their learning rules.
//!
//! Excitatory synapses follow a voltage-based STDP rule gated by the
//! postsynaptic membrane potential and two of its running averages, with an
//! LTD amplitude scaled by a homeostatic average. Inhibitory synapses follow a
//! symmetric trace rule that potentiates on any coincidence and depresses on
//! isolated presynaptic spikes by a constant offset.
//!
//! Weights are stored as `f32` in post-major order (`weights[post * pre_size + pre]`),
//! the same layout the snapshot format uses. Updates are computed in `f64`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::NeuronState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcPlasticityParams {
    /// LTP rate (weight units per mV² per ms).
    pub a_ltp: f64,
    /// LTD rate (weight units per mV, applied per presynaptic spike).
    pub a_ltd: f64,
    /// Depolarization threshold on the instantaneous potential (mV).
    pub theta_plus: f64,
    /// Threshold on the membrane averages (mV).
    pub theta_minus: f64,
    pub tau_plus: f64,
    pub tau_minus: f64,
    /// Presynaptic spike trace time constant (ms).
    pub tau_x: f64,
    /// Homeostatic reference (mV²).
    pub u_ref: f64,
    /// Homeostatic average time constant (ms).
    pub tau_homeo: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl ExcPlasticityParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, value) in [
            ("a_ltp", self.a_ltp),
            ("a_ltd", self.a_ltd),
            ("u_ref", self.u_ref),
            ("tau_plus", self.tau_plus),
            ("tau_minus", self.tau_minus),
            ("tau_x", self.tau_x),
            ("tau_homeo", self.tau_homeo),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config(format!("{prefix}.{name}"), "must be positive and finite"));
            }
        }
        check_bounds(prefix, self.w_min, self.w_max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InhPlasticityParams {
    pub eta: f64,
    /// Offset subtracted from the postsynaptic trace on presynaptic spikes.
    pub rho: f64,
    pub tau_pre: f64,
    pub tau_post: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl InhPlasticityParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, value) in [("eta", self.eta), ("tau_pre", self.tau_pre), ("tau_post", self.tau_post)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config(format!("{prefix}.{name}"), "must be positive and finite"));
            }
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::config(format!("{prefix}.rho"), "must be non-negative"));
        }
        check_bounds(prefix, self.w_min, self.w_max)
    }
}

fn check_bounds(prefix: &str, w_min: f64, w_max: f64) -> Result<()> {
    if !(w_min >= 0.0 && w_min.is_finite()) {
        return Err(Error::config(format!("{prefix}.w_min"), "must be non-negative"));
    }
    if !(w_max > w_min && w_max.is_finite()) {
        return Err(Error::config(format!("{prefix}.w_max"), "must exceed w_min"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rule {
    ExcitatoryVoltage(ExcPlasticityParams),
    InhibitorySymmetric(InhPlasticityParams),
    Static { w_min: f64, w_max: f64 },
}

impl Rule {
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Rule::ExcitatoryVoltage(p) => (p.w_min, p.w_max),
            Rule::InhibitorySymmetric(p) => (p.w_min, p.w_max),
            Rule::Static { w_min, w_max } => (*w_min, *w_max),
        }
    }

    pub fn tag(&self) -> u8 {
        match self {
            Rule::ExcitatoryVoltage(_) => 0,
            Rule::InhibitorySymmetric(_) => 1,
            Rule::Static { .. } => 2,
        }
    }
}

// ---- per-synapse kernels -------------------------------------------------

/// `A_LTP (u - θ₊)⁺ (ū₊ - θ₋)⁺`, the postsynaptic LTP gate per ms and per unit trace.
#[inline]
pub fn ltp_factor(p: &ExcPlasticityParams, u: f64, u_plus: f64) -> f64 {
    p.a_ltp * (u - p.theta_plus).max(0.0) * (u_plus - p.theta_minus).max(0.0)
}

/// `A_LTD (ū̄ / u_ref) (ū₋ - θ₋)⁺`, the depression applied at each presynaptic spike.
#[inline]
pub fn ltd_amount(p: &ExcPlasticityParams, u_minus: f64, u_homeo: f64) -> f64 {
    p.a_ltd * (u_homeo / p.u_ref) * (u_minus - p.theta_minus).max(0.0)
}

/// Weight change of one excitatory synapse, given the postsynaptic gates
/// `ltp = dt * ltp_factor(..)` and `ltd = ltd_amount(..)`.
#[inline]
pub fn exc_delta(ltp: f64, ltd: f64, pre_trace: f64, pre_spike: bool) -> f64 {
    ltp * pre_trace - if pre_spike { ltd } else { 0.0 }
}

/// Weight change of one inhibitory synapse.
#[inline]
pub fn inh_delta(p: &InhPlasticityParams, pre_trace: f64, post_trace: f64, pre_spike: bool, post_spike: bool) -> f64 {
    let on_pre = if pre_spike { post_trace - p.rho } else { 0.0 };
    let on_post = if post_spike { pre_trace } else { 0.0 };
    p.eta * (on_pre + on_post)
}

#[inline]
fn apply(w: &mut f32, delta: f64, lo: f32, hi: f32) {
    *w = ((*w as f64 + delta) as f32).clamp(lo, hi);
}

#[inline]
fn decay_traces(traces: &mut [f64], spikes: &[bool], tau: f64, dt: f64) {
    let keep = 1.0 - dt / tau;
    for (x, &s) in traces.iter_mut().zip(spikes) {
        *x = *x * keep + if s { 1.0 } else { 0.0 };
    }
}

// ---- projection ----------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub pre_size: usize,
    pub post_size: usize,
    /// Post-major dense matrix, `post_size * pre_size` entries.
    pub weights: Vec<f32>,
    /// Presynaptic spike trace, one per presynaptic neuron.
    pub pre_trace: Vec<f64>,
    /// Postsynaptic spike trace (inhibitory rule only; empty otherwise).
    pub post_trace: Vec<f64>,
    pub rule: Rule,
    /// Presynaptic indices `0..n` are ON channels and `n..pre_size` OFF channels.
    pub on_channels: Option<usize>,
    /// When false the projection is square and its diagonal stays at zero.
    pub self_connections: bool,
}

impl Projection {
    /// A projection with every weight at `w_min` and zero traces.
    pub fn new(pre_size: usize, post_size: usize, rule: Rule) -> Self {
        let (w_min, _) = rule.bounds();
        let post_trace = match rule {
            Rule::InhibitorySymmetric(_) => vec![0.0; post_size],
            _ => Vec::new(),
        };
        Self {
            pre_size,
            post_size,
            weights: vec![w_min as f32; pre_size * post_size],
            pre_trace: vec![0.0; pre_size],
            post_trace,
            rule,
            on_channels: None,
            self_connections: true,
        }
    }

    pub fn with_channels(mut self, on_channels: usize) -> Self {
        assert!(on_channels <= self.pre_size);
        self.on_channels = Some(on_channels);
        self
    }

    /// Removes self-connections; the projection must be square.
    pub fn without_self_connections(mut self) -> Self {
        assert_eq!(self.pre_size, self.post_size, "self-connection mask needs a square projection");
        self.self_connections = false;
        for j in 0..self.post_size {
            self.weights[j * self.pre_size + j] = 0.0;
        }
        self
    }

    /// Draws every weight uniformly from `[lo, hi)`.
    pub fn randomize<R: Rng + ?Sized>(&mut self, rng: &mut R, lo: f64, hi: f64) {
        let (lo, hi) = (lo as f32, hi as f32);
        for w in &mut self.weights {
            *w = if hi > lo { rng.random_range(lo..hi) } else { lo };
        }
        self.zero_diagonal();
    }

    pub fn fill(&mut self, value: f32) {
        self.weights.fill(value);
        self.zero_diagonal();
    }

    fn zero_diagonal(&mut self) {
        if !self.self_connections {
            for j in 0..self.post_size {
                self.weights[j * self.pre_size + j] = 0.0;
            }
        }
    }

    #[inline]
    pub fn weight(&self, post: usize, pre: usize) -> f32 {
        self.weights[post * self.pre_size + pre]
    }

    pub fn row(&self, post: usize) -> &[f32] {
        &self.weights[post * self.pre_size..(post + 1) * self.pre_size]
    }

    fn bounds_f32(&self) -> (f32, f32) {
        let (lo, hi) = self.rule.bounds();
        (lo as f32, hi as f32)
    }

    /// Adds `Σ_i w[j, i]` over spiking presynaptic indices to `out[j]`.
    pub fn accumulate_drive(&self, spiking: &[usize], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.post_size);
        if spiking.is_empty() {
            return;
        }
        for (j, acc) in out.iter_mut().enumerate() {
            let row = &self.weights[j * self.pre_size..(j + 1) * self.pre_size];
            let mut sum = 0.0f64;
            for &i in spiking {
                sum += row[i] as f64;
            }
            *acc += sum;
        }
    }

    fn check_len(&self, what: &str, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(Error::Shape(format!("{what}: got {got}, projection expects {want}")));
        }
        Ok(())
    }

    /// One step of the voltage-based excitatory rule.
    ///
    /// The LTP term uses the presynaptic trace as it stood before this step's
    /// spikes; the LTD term fires for presynaptic spikes of this step. The
    /// trace is decayed and incremented afterwards.
    pub fn exc_weight_step(&mut self, pre_spikes: &[bool], post: &[NeuronState], dt: f64) -> Result<()> {
        let p = match &self.rule {
            Rule::ExcitatoryVoltage(p) => p.clone(),
            _ => return Err(Error::Invalid("exc_weight_step on a non-excitatory projection".into())),
        };
        self.check_len("presynaptic spikes", pre_spikes.len(), self.pre_size)?;
        self.check_len("postsynaptic states", post.len(), self.post_size)?;
        let (lo, hi) = self.bounds_f32();
        let spiking: Vec<usize> = spike_indices(pre_spikes);
        let n_pre = self.pre_size;

        for (j, state) in post.iter().enumerate() {
            let ltp = dt * ltp_factor(&p, state.u, state.u_plus);
            let ltd = ltd_amount(&p, state.u_minus, state.u_homeo);
            let row = &mut self.weights[j * n_pre..(j + 1) * n_pre];
            let skip = if self.self_connections { usize::MAX } else { j };
            if ltp > 0.0 {
                for (i, w) in row.iter_mut().enumerate() {
                    let d = exc_delta(ltp, ltd, self.pre_trace[i], pre_spikes[i]);
                    if d != 0.0 && i != skip {
                        apply(w, d, lo, hi);
                    }
                }
            } else if ltd > 0.0 {
                for &i in &spiking {
                    if i != skip {
                        apply(&mut row[i], exc_delta(ltp, ltd, self.pre_trace[i], true), lo, hi);
                    }
                }
            }
        }
        decay_traces(&mut self.pre_trace, pre_spikes, p.tau_x, dt);
        Ok(())
    }

    /// One step of the symmetric inhibitory rule. Deltas use the traces from
    /// before this step; both traces then decay and add one per spike.
    pub fn inh_weight_step(&mut self, pre_spikes: &[bool], post_spikes: &[bool], dt: f64) -> Result<()> {
        let p = match &self.rule {
            Rule::InhibitorySymmetric(p) => p.clone(),
            _ => return Err(Error::Invalid("inh_weight_step on a non-inhibitory projection".into())),
        };
        self.check_len("presynaptic spikes", pre_spikes.len(), self.pre_size)?;
        self.check_len("postsynaptic spikes", post_spikes.len(), self.post_size)?;
        let (lo, hi) = self.bounds_f32();
        let spiking = spike_indices(pre_spikes);
        let n_pre = self.pre_size;

        for (j, &post_spike) in post_spikes.iter().enumerate() {
            let row = &mut self.weights[j * n_pre..(j + 1) * n_pre];
            let x_post = self.post_trace[j];
            let skip = if self.self_connections { usize::MAX } else { j };
            if post_spike {
                for (i, w) in row.iter_mut().enumerate() {
                    if i != skip {
                        apply(w, inh_delta(&p, self.pre_trace[i], x_post, pre_spikes[i], true), lo, hi);
                    }
                }
            } else {
                for &i in &spiking {
                    if i != skip {
                        apply(&mut row[i], inh_delta(&p, self.pre_trace[i], x_post, true, false), lo, hi);
                    }
                }
            }
        }
        decay_traces(&mut self.pre_trace, pre_spikes, p.tau_pre, dt);
        decay_traces(&mut self.post_trace, post_spikes, p.tau_post, dt);
        Ok(())
    }

    /// Rescales each postsynaptic neuron's OFF weights so their L2 norm equals
    /// that of its ON weights, then clips. Returns the neurons whose OFF
    /// weights were all zero (left unchanged).
    pub fn equalize_off_to_on(&mut self) -> Result<Vec<usize>> {
        let split = self
            .on_channels
            .ok_or_else(|| Error::Invalid("equalize_off_to_on needs an ON/OFF channel split".into()))?;
        let (lo, hi) = self.bounds_f32();
        let n_pre = self.pre_size;
        let mut dead = Vec::new();
        for j in 0..self.post_size {
            let row = &mut self.weights[j * n_pre..(j + 1) * n_pre];
            let (on, off) = row.split_at_mut(split);
            let on_norm = l2(on);
            let off_norm = l2(off);
            if off_norm == 0.0 {
                dead.push(j);
                continue;
            }
            let scale = on_norm / off_norm;
            for w in off.iter_mut() {
                *w = ((*w as f64 * scale) as f32).clamp(lo, hi);
            }
        }
        if !dead.is_empty() {
            log::warn!("OFF channel silent for {} postsynaptic neurons; left unscaled", dead.len());
        }
        Ok(dead)
    }

    /// Clamps every weight into the rule's bounds.
    pub fn clip_weights(&mut self) {
        let (lo, hi) = self.bounds_f32();
        for w in &mut self.weights {
            *w = w.clamp(lo, hi);
        }
        self.zero_diagonal();
    }

    /// Per-neuron ON and OFF L2 norms.
    pub fn channel_norms(&self, post: usize) -> Option<(f64, f64)> {
        let split = self.on_channels?;
        let (on, off) = self.row(post).split_at(split);
        Some((l2(on), l2(off)))
    }

    /// Mean over postsynaptic neurons of the L2 norm of their incoming weights.
    pub fn mean_row_norm(&self) -> f64 {
        (0..self.post_size).map(|j| l2(self.row(j))).sum::<f64>() / self.post_size.max(1) as f64
    }

    /// True when every weight lies within the rule's bounds (and the masked
    /// diagonal is zero).
    pub fn within_bounds(&self) -> bool {
        let (lo, hi) = self.bounds_f32();
        self.weights.iter().enumerate().all(|(k, &w)| {
            let (j, i) = (k / self.pre_size, k % self.pre_size);
            if !self.self_connections && i == j {
                w == 0.0
            } else {
                (lo..=hi).contains(&w)
            }
        })
    }
}

pub fn spike_indices(spikes: &[bool]) -> Vec<usize> {
    spikes.iter().enumerate().filter_map(|(i, &s)| s.then_some(i)).collect()
}

fn l2(w: &[f32]) -> f64 {
    w.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::NeuronParams;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exc_params() -> ExcPlasticityParams {
        ExcPlasticityParams {
            a_ltp: 8e-5,
            a_ltd: 14e-5,
            theta_plus: -45.3,
            theta_minus: -70.6,
            tau_plus: 7.0,
            tau_minus: 10.0,
            tau_x: 15.0,
            u_ref: 60.0,
            tau_homeo: 1000.0,
            w_min: 0.0,
            w_max: 3.0,
        }
    }

    fn inh_params() -> InhPlasticityParams {
        InhPlasticityParams {
            eta: 0.01,
            rho: 0.2,
            tau_pre: 20.0,
            tau_post: 20.0,
            w_min: 0.0,
            w_max: 10.0,
        }
    }

    fn post_state(u: f64, u_plus: f64, u_minus: f64, u_homeo: f64) -> NeuronState {
        let mut s = NeuronState::at_rest(&NeuronParams::default());
        s.u = u;
        s.u_plus = u_plus;
        s.u_minus = u_minus;
        s.u_homeo = u_homeo;
        s
    }

    #[test]
    fn quiet_postsynaptic_and_no_spike_leaves_weights() {
        let p = exc_params();
        let mut proj = Projection::new(4, 2, Rule::ExcitatoryVoltage(p.clone()));
        proj.fill(1.0);
        proj.pre_trace = vec![0.3, 0.0, 1.2, 0.5];
        let post = vec![post_state(p.theta_plus - 1.0, -60.0, p.theta_minus - 1.0, 50.0); 2];
        let before = proj.weights.clone();
        proj.exc_weight_step(&[false; 4], &post, 1.0).unwrap();
        assert_eq!(proj.weights, before);
    }

    #[test]
    fn ltd_on_presynaptic_spike_with_unit_homeostatic_ratio() {
        let p = exc_params();
        let post = post_state(-80.0, -80.0, p.theta_minus + 4.0, p.u_ref);
        let ltd = ltd_amount(&p, post.u_minus, post.u_homeo);
        let d = exc_delta(1.0 * ltp_factor(&p, post.u, post.u_plus), ltd, 0.7, true);
        assert!((d - (-p.a_ltd * 4.0)).abs() < 1e-15);

        let mut proj = Projection::new(1, 1, Rule::ExcitatoryVoltage(p.clone()));
        proj.fill(1.0);
        proj.exc_weight_step(&[true], &[post], 1.0).unwrap();
        assert!(proj.weights[0] < 1.0);
        assert_eq!(proj.pre_trace[0], 1.0);
    }

    #[test]
    fn ltp_direct_evaluation() {
        let p = exc_params();
        let dt = 0.5;
        let post = post_state(p.theta_plus + 2.0, p.theta_minus + 3.0, -90.0, 0.0);
        let d = exc_delta(dt * ltp_factor(&p, post.u, post.u_plus), 0.0, 0.5, false);
        let expected = dt * p.a_ltp * 0.5 * 2.0 * 3.0;
        assert!(((d - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn ltd_scales_linearly_with_homeostatic_average() {
        let p = exc_params();
        let single = ltd_amount(&p, -60.0, 40.0);
        let double = ltd_amount(&p, -60.0, 80.0);
        assert!((double - 2.0 * single).abs() < 1e-15);
        assert_eq!(ltp_factor(&p, -40.0, -50.0), ltp_factor(&p, -40.0, -50.0));
    }

    #[test]
    fn inhibitory_zero_crossing_and_signs() {
        let p = inh_params();
        assert_eq!(inh_delta(&p, 0.4, p.rho, true, false), 0.0);
        assert!((inh_delta(&p, 0.8, 0.0, false, true) - 0.8 * p.eta).abs() < 1e-15);
        assert!((inh_delta(&p, 0.0, 0.0, true, false) + p.eta * p.rho).abs() < 1e-15);
    }

    #[test]
    fn inhibitory_traces_increase_by_one() {
        let mut proj = Projection::new(2, 2, Rule::InhibitorySymmetric(inh_params()));
        proj.inh_weight_step(&[true, false], &[false, true], 1.0).unwrap();
        assert_eq!(proj.pre_trace, vec![1.0, 0.0]);
        assert_eq!(proj.post_trace, vec![0.0, 1.0]);
        proj.inh_weight_step(&[false, false], &[false, false], 1.0).unwrap();
        assert!((proj.pre_trace[0] - (1.0 - 1.0 / 20.0)).abs() < 1e-15);
    }

    #[test]
    fn self_connections_stay_zero() {
        let mut proj = Projection::new(3, 3, Rule::InhibitorySymmetric(inh_params())).without_self_connections();
        proj.fill(1.0);
        proj.post_trace = vec![0.9; 3];
        proj.pre_trace = vec![0.9; 3];
        for _ in 0..10 {
            proj.inh_weight_step(&[true; 3], &[true; 3], 1.0).unwrap();
        }
        for j in 0..3 {
            assert_eq!(proj.weight(j, j), 0.0);
            assert!(proj.weight(j, (j + 1) % 3) > 1.0);
        }
        assert!(proj.within_bounds());
    }

    #[test]
    fn mismatched_lengths_are_structural_faults() {
        let mut proj = Projection::new(3, 2, Rule::InhibitorySymmetric(inh_params()));
        assert!(matches!(proj.inh_weight_step(&[true; 2], &[false; 2], 1.0), Err(Error::Shape(_))));
        let mut proj = Projection::new(3, 2, Rule::ExcitatoryVoltage(exc_params()));
        let post = vec![NeuronState::at_rest(&NeuronParams::default()); 3];
        assert!(matches!(proj.exc_weight_step(&[true; 3], &post, 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn equalize_cases() {
        let mut proj = Projection::new(4, 2, Rule::ExcitatoryVoltage(exc_params())).with_channels(2);
        proj.weights = vec![0.6, 0.8, 0.8, 0.6, 2.0, 0.0, 0.5, 0.0];
        let before = proj.weights.clone();
        let dead = proj.equalize_off_to_on().unwrap();
        assert!(dead.is_empty());
        assert_eq!(&proj.weights[..4], &before[..4]);
        // Second neuron: ON norm 2, OFF norm 0.5 -> OFF scaled by 4.
        assert_eq!(&proj.weights[4..], &[2.0, 0.0, 2.0, 0.0]);
    }

    #[test]
    fn equalize_reports_dead_off_channel() {
        let mut proj = Projection::new(4, 1, Rule::ExcitatoryVoltage(exc_params())).with_channels(2);
        proj.weights = vec![1.0, 1.0, 0.0, 0.0];
        assert_eq!(proj.equalize_off_to_on().unwrap(), vec![0]);
        assert_eq!(proj.weights, vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn equalize_clips_to_upper_bound() {
        let mut proj = Projection::new(4, 1, Rule::ExcitatoryVoltage(exc_params())).with_channels(2);
        proj.weights = vec![3.0, 3.0, 0.1, 0.1];
        proj.equalize_off_to_on().unwrap();
        assert_eq!(&proj.weights[2..], &[3.0, 3.0]);
    }

    #[test]
    fn clip_cases() {
        let mut proj = Projection::new(3, 1, Rule::ExcitatoryVoltage(exc_params()));
        proj.weights = vec![1.5, 4.0, -1.0];
        proj.clip_weights();
        assert_eq!(proj.weights, vec![1.5, 3.0, 0.0]);
    }

    #[test]
    fn drive_sums_spiking_columns() {
        let mut proj = Projection::new(3, 2, Rule::Static { w_min: 0.0, w_max: 10.0 });
        proj.weights = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut out = vec![0.5, 0.0];
        proj.accumulate_drive(&[0, 2], &mut out);
        assert_eq!(out, vec![4.5, 10.0]);
    }

    proptest! {
        #[test]
        fn equalized_norms_match(seed in any::<u64>(), post in 1usize..6, half in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p = exc_params();
            p.w_max = 1e6;
            let mut proj = Projection::new(2 * half, post, Rule::ExcitatoryVoltage(p)).with_channels(half);
            proj.randomize(&mut rng, 0.01, 1.0);
            proj.equalize_off_to_on().unwrap();
            for j in 0..post {
                let (on, off) = proj.channel_norms(j).unwrap();
                prop_assert!(((on - off) / on).abs() < 1e-6);
            }
        }

        #[test]
        fn weights_stay_bounded(seed in any::<u64>(), steps in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = exc_params();
            let mut exc = Projection::new(5, 3, Rule::ExcitatoryVoltage(p.clone()));
            exc.randomize(&mut rng, p.w_min, p.w_max);
            let mut inh = Projection::new(3, 3, Rule::InhibitorySymmetric(inh_params())).without_self_connections();
            inh.randomize(&mut rng, 0.0, 10.0);
            for _ in 0..steps {
                let pre: Vec<bool> = (0..5).map(|_| rng.random_bool(0.3)).collect();
                let post: Vec<NeuronState> = (0..3)
                    .map(|_| post_state(rng.random_range(-80.0..30.0), rng.random_range(-80.0..0.0), rng.random_range(-80.0..0.0), rng.random_range(0.0..1e4)))
                    .collect();
                exc.exc_weight_step(&pre, &post, 1.0).unwrap();
                let a: Vec<bool> = (0..3).map(|_| rng.random_bool(0.5)).collect();
                let b: Vec<bool> = (0..3).map(|_| rng.random_bool(0.5)).collect();
                inh.inh_weight_step(&a, &b, 1.0).unwrap();
                prop_assert!(exc.within_bounds());
                prop_assert!(inh.within_bounds());
                prop_assert!(exc.pre_trace.iter().chain(&inh.pre_trace).chain(&inh.post_trace).all(|&x| x >= 0.0));
            }
        }
    }
}
