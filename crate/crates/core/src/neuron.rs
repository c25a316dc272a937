//! Adaptive exponential integrate-and-fire neurons with an adaptive threshold,
//! a depolarizing after-potential and current-based synapses.
//!
//! All quantities use mV, ms, pA, nS and pF. One call to [`neuron_step`]
//! advances a single neuron by one explicit-Euler step; the caller supplies
//! the weighted presynaptic spike sums of the previous step as drives.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The exponential spike-initiation term is evaluated at most this many
/// slope factors above threshold.
pub const EXP_CLIP_SLOPES: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronParams {
    /// Membrane capacitance (pF).
    pub c: f64,
    /// Leak conductance (nS).
    pub g_l: f64,
    /// Resting potential (mV).
    pub e_l: f64,
    /// Slope factor (mV).
    pub delta_t: f64,
    /// Resting spike threshold (mV).
    pub v_t_rest: f64,
    /// Threshold right after a spike (mV).
    pub v_t_max: f64,
    /// Threshold relaxation time constant (ms).
    pub tau_vt: f64,
    /// After-potential current set at each spike (pA).
    pub i_sp: f64,
    /// After-potential decay (ms).
    pub tau_z: f64,
    /// Subthreshold adaptation coupling (nS).
    pub a: f64,
    /// Spike-triggered adaptation increment (pA).
    pub b: f64,
    /// Adaptation time constant (ms).
    pub tau_wad: f64,
    /// Excitatory synaptic current decay (ms).
    pub tau_i_exc: f64,
    /// Inhibitory synaptic current decay (ms).
    pub tau_i_inh: f64,
    /// Potential held right after a spike (mV).
    pub u_reset: f64,
    /// Duration of the post-spike clamp (ms).
    pub t_clamp: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            c: 281.0,
            g_l: 30.0,
            e_l: -70.6,
            delta_t: 2.0,
            v_t_rest: -50.4,
            v_t_max: -30.4,
            tau_vt: 50.0,
            i_sp: 400.0,
            tau_z: 40.0,
            a: 4.0,
            b: 0.805,
            tau_wad: 144.0,
            tau_i_exc: 1.0,
            tau_i_inh: 10.0,
            u_reset: 29.0,
            t_clamp: 2.0,
        }
    }
}

impl NeuronParams {
    /// Checks the parameter invariants. `prefix` names the config section in errors.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let positive = [
            ("c", self.c),
            ("g_l", self.g_l),
            ("delta_t", self.delta_t),
            ("tau_vt", self.tau_vt),
            ("tau_z", self.tau_z),
            ("tau_wad", self.tau_wad),
            ("tau_i_exc", self.tau_i_exc),
            ("tau_i_inh", self.tau_i_inh),
            ("t_clamp", self.t_clamp),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config(format!("{prefix}.{name}"), "must be positive and finite"));
            }
        }
        for (name, value) in [
            ("e_l", self.e_l),
            ("v_t_rest", self.v_t_rest),
            ("v_t_max", self.v_t_max),
            ("i_sp", self.i_sp),
            ("a", self.a),
            ("b", self.b),
            ("u_reset", self.u_reset),
        ] {
            if !value.is_finite() {
                return Err(Error::config(format!("{prefix}.{name}"), "must be finite"));
            }
        }
        if self.v_t_rest >= self.v_t_max {
            return Err(Error::config(format!("{prefix}.v_t_rest"), "must be below v_t_max"));
        }
        Ok(())
    }

    /// Smallest time constant; explicit Euler needs `dt` at or below it.
    pub fn fastest_time_constant(&self) -> f64 {
        [self.tau_vt, self.tau_z, self.tau_wad, self.tau_i_exc, self.tau_i_inh, self.c / self.g_l]
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Time constants of the membrane-potential averages that the voltage-based
/// plasticity rule reads (ū₊, ū₋ and the homeostatic ū̄).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoltageTraceParams {
    pub tau_plus: f64,
    pub tau_minus: f64,
    pub tau_homeo: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub u: f64,
    pub v_t: f64,
    pub z: f64,
    pub w_ad: f64,
    pub u_plus: f64,
    pub u_minus: f64,
    /// Homeostatic average of the squared rectified depolarization (mV²).
    pub u_homeo: f64,
    pub i_exc: f64,
    pub i_inh: f64,
    /// Time left in the post-spike clamp (ms); zero when free.
    pub clamp_remaining: f64,
    pub spiked: bool,
}

impl NeuronState {
    /// Resting state: u = E_L, threshold at rest, membrane averages at E_L, everything else zero.
    pub fn at_rest(params: &NeuronParams) -> Self {
        Self {
            u: params.e_l,
            v_t: params.v_t_rest,
            z: 0.0,
            w_ad: 0.0,
            u_plus: params.e_l,
            u_minus: params.e_l,
            u_homeo: 0.0,
            i_exc: 0.0,
            i_inh: 0.0,
            clamp_remaining: 0.0,
            spiked: false,
        }
    }

    pub fn is_clamped(&self) -> bool {
        self.clamp_remaining > 0.0
    }

    fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("u", self.u),
            ("v_t", self.v_t),
            ("z", self.z),
            ("w_ad", self.w_ad),
            ("u_plus", self.u_plus),
            ("u_minus", self.u_minus),
            ("u_homeo", self.u_homeo),
            ("i_exc", self.i_exc),
            ("i_inh", self.i_inh),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

/// A state variable became NaN or infinite during a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NonFinite {
    pub variable: &'static str,
}

impl fmt::Display for NonFinite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}` is not finite; reduce dt", self.variable)
    }
}

/// One Euler step of `tau dx/dt = target - x`.
#[inline]
pub fn relax(x: f64, target: f64, tau: f64, dt: f64) -> f64 {
    x + dt * (target - x) / tau
}

/// Adaptive threshold relaxation toward `v_t_rest`.
#[inline]
pub fn threshold_decay(v_t: f64, params: &NeuronParams, dt: f64) -> f64 {
    relax(v_t, params.v_t_rest, params.tau_vt, dt)
}

/// Homeostatic average: relaxes toward `((u - e_l)+)²`.
#[inline]
pub fn homeostasis_step(u_homeo: f64, u: f64, e_l: f64, tau_homeo: f64, dt: f64) -> f64 {
    let depol = (u - e_l).max(0.0);
    relax(u_homeo, depol * depol, tau_homeo, dt)
}

/// Right-hand side of the membrane equation, `du/dt` in mV/ms.
#[inline]
pub fn membrane_derivative(state: &NeuronState, params: &NeuronParams) -> f64 {
    let exp_arg = ((state.u - state.v_t) / params.delta_t).min(EXP_CLIP_SLOPES);
    let current = -params.g_l * (state.u - params.e_l) + params.g_l * params.delta_t * exp_arg.exp()
        - state.w_ad
        + state.z
        + state.i_exc
        - state.i_inh;
    current / params.c
}

/// Advances one neuron by `dt` ms.
///
/// Synaptic currents decay first and are then incremented by the drives.
/// Every other variable takes an explicit Euler step from the pre-step state.
/// A spike is registered when the free (unclamped) potential ends the step
/// above the threshold.
pub fn neuron_step(
    state: &mut NeuronState,
    params: &NeuronParams,
    traces: &VoltageTraceParams,
    exc_drive: f64,
    inh_drive: f64,
    dt: f64,
) -> std::result::Result<(), NonFinite> {
    debug_assert!(dt > 0.0);
    state.i_exc = state.i_exc * (1.0 - dt / params.tau_i_exc) + exc_drive;
    state.i_inh = state.i_inh * (1.0 - dt / params.tau_i_inh) + inh_drive;

    let u = state.u;
    let clamped = state.is_clamped();
    let next_u = if clamped {
        state.clamp_remaining -= dt;
        if state.clamp_remaining <= 0.5 * dt {
            state.clamp_remaining = 0.0;
            params.e_l
        } else {
            params.u_reset
        }
    } else {
        u + dt * membrane_derivative(state, params)
    };

    state.v_t = threshold_decay(state.v_t, params, dt);
    state.z = relax(state.z, 0.0, params.tau_z, dt);
    state.w_ad = relax(state.w_ad, params.a * (u - params.e_l), params.tau_wad, dt);
    state.u_plus = relax(state.u_plus, u, traces.tau_plus, dt);
    state.u_minus = relax(state.u_minus, u, traces.tau_minus, dt);
    state.u_homeo = homeostasis_step(state.u_homeo, u, params.e_l, traces.tau_homeo, dt);
    state.u = next_u;
    if let Some(variable) = state.first_non_finite() {
        return Err(NonFinite { variable });
    }

    state.spiked = !clamped && state.u > state.v_t;
    if state.spiked {
        state.u = params.u_reset;
        state.clamp_remaining = params.t_clamp;
        state.v_t = params.v_t_max;
        state.z = params.i_sp;
        state.w_ad += params.b;
    }
    Ok(())
}
