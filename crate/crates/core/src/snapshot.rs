//! Network snapshots: weights, traces, neuron states, last-step spikes and
//! the training RNG positions, enough to resume training bit-exactly.
//!
//! Layout (little-endian, in a `codec` container with magic `V1SNNSNP`):
//! config hash (32 bytes), patches seen, silent patches, then per projection
//! `rule tag u8 | pre u64 | post u64 | weights f32 | pre trace f64 | post trace f64`,
//! then both neuron populations, the three last-spike vectors and three RNG states.

use std::fs;
use std::path::Path;

use crate::codec::{Decoder, Encoder};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::network::{build_network, Network};
use crate::neuron::NeuronState;
use crate::plasticity::Projection;
use crate::rng::{RngState, TrainStreams};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"V1SNNSNP";
pub const SNAPSHOT_VERSION: u32 = 1;

fn put_state(e: &mut Encoder, s: &NeuronState) {
    e.f64s(&[s.u, s.v_t, s.z, s.w_ad, s.u_plus, s.u_minus, s.u_homeo, s.i_exc, s.i_inh, s.clamp_remaining]);
    e.u8(s.spiked as u8);
}

fn get_state(d: &mut Decoder<'_>) -> Result<NeuronState> {
    let v = d.f64s(10)?;
    Ok(NeuronState {
        u: v[0],
        v_t: v[1],
        z: v[2],
        w_ad: v[3],
        u_plus: v[4],
        u_minus: v[5],
        u_homeo: v[6],
        i_exc: v[7],
        i_inh: v[8],
        clamp_remaining: v[9],
        spiked: d.u8()? != 0,
    })
}

fn put_spikes(e: &mut Encoder, s: &[bool]) {
    e.u64(s.len() as u64);
    for &b in s {
        e.u8(b as u8);
    }
}

fn get_spikes(d: &mut Decoder<'_>, want: usize) -> Result<Vec<bool>> {
    let n = d.u64()? as usize;
    if n != want {
        return Err(d.fail(format!("spike vector of length {n}, expected {want}")));
    }
    Ok(d.bytes(n)?.iter().map(|&b| b != 0).collect())
}

pub fn snapshot_bytes(net: &Network) -> Vec<u8> {
    let mut e = Encoder::new(SNAPSHOT_MAGIC, SNAPSHOT_VERSION);
    e.bytes(&net.config_hash);
    e.u64(net.patches_seen);
    e.u64(net.silent_patches);
    for (_, p) in net.conn.named() {
        e.u8(p.rule.tag());
        e.u64(p.pre_size as u64);
        e.u64(p.post_size as u64);
        e.f32s(&p.weights);
        e.f64s(&p.pre_trace);
        e.f64s(&p.post_trace);
    }
    let d = &net.dynamics;
    for s in d.exc.iter().chain(&d.inh) {
        put_state(&mut e, s);
    }
    put_spikes(&mut e, &d.last_input);
    put_spikes(&mut e, &d.last_exc);
    put_spikes(&mut e, &d.last_inh);
    for st in net.streams.capture() {
        e.bytes(&st.to_bytes());
    }
    e.finish()
}

fn read_projection(d: &mut Decoder<'_>, name: &str, into: &mut Projection) -> Result<()> {
    let tag = d.u8()?;
    let (pre, post) = (d.u64()? as usize, d.u64()? as usize);
    if tag != into.rule.tag() || pre != into.pre_size || post != into.post_size {
        return Err(d.fail(format!("projection {name} does not match the configured topology")));
    }
    into.weights = d.f32s(pre * post)?;
    into.pre_trace = d.f64s(pre)?;
    into.post_trace = d.f64s(into.post_trace.len())?;
    Ok(())
}

/// Restores a network, checking that it was produced under `config`'s model settings.
pub fn network_from_bytes(bytes: &[u8], path: &Path, config: &RunConfig) -> Result<Network> {
    let mut d = Decoder::open(bytes, path, SNAPSHOT_MAGIC, "snapshot", SNAPSHOT_VERSION)?;
    let hash = d.bytes(32)?;
    let mut net = build_network(config)?;
    if hash != net.config_hash {
        return Err(Error::config(
            "--config",
            format!("{} was written under a different model configuration", path.display()),
        ));
    }
    net.patches_seen = d.u64()?;
    net.silent_patches = d.u64()?;
    for (name, p) in net.conn.named_mut() {
        read_projection(&mut d, name, p)?;
    }
    let dy = &mut net.dynamics;
    for s in dy.exc.iter_mut().chain(dy.inh.iter_mut()) {
        *s = get_state(&mut d)?;
    }
    dy.last_input = get_spikes(&mut d, dy.last_input.len())?;
    dy.last_exc = get_spikes(&mut d, dy.last_exc.len())?;
    dy.last_inh = get_spikes(&mut d, dy.last_inh.len())?;
    let mut states = [RngState::from_bytes(&[0; RngState::BYTES]); 3];
    for st in &mut states {
        *st = RngState::from_bytes(d.bytes(RngState::BYTES)?.try_into().unwrap());
    }
    net.streams = TrainStreams::restore(&states);
    d.finish()?;
    Ok(net)
}

pub fn save_snapshot(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, snapshot_bytes(net))?;
    Ok(())
}

pub fn load_snapshot(path: &Path, config: &RunConfig) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::data(path, e.to_string()))?;
    network_from_bytes(&bytes, path, config)
}
