use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use v1snn::config::RunConfig;
use v1snn::images::WhitenedImageStore;
use v1snn::network::{build_network, Network, TrainEvent};
use v1snn::snapshot::{load_snapshot, network_from_bytes, save_snapshot, snapshot_bytes};
use v1snn::Error;

fn store() -> WhitenedImageStore {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let images = (0..3).map(|_| (0..48 * 48).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect();
    WhitenedImageStore::new(48, 48, images).unwrap()
}

fn config(patches: u64) -> RunConfig {
    let mut cfg = RunConfig::preset("desk").unwrap();
    cfg.simulation.n_train_patches = patches;
    cfg.simulation.log_every = 5;
    cfg.simulation.dead_patch_limit = 1_000_000;
    cfg.simulation.normalization_period_ms = 4.0 * cfg.simulation.presentation_ms;
    cfg
}

fn trained(cfg: &RunConfig) -> Network {
    let mut net = build_network(cfg).unwrap();
    net.train(&store(), cfg, |_| Ok(())).unwrap();
    net
}

#[test]
fn snapshot_round_trip_is_bit_exact() {
    let cfg = config(6);
    let net = trained(&cfg);
    let bytes = snapshot_bytes(&net);
    let back = network_from_bytes(&bytes, Path::new("mem"), &cfg).unwrap();
    assert_eq!(snapshot_bytes(&back), bytes);
    assert_eq!(back.patches_seen, 6);
    for ((_, a), (_, b)) in net.conn.named().iter().zip(back.conn.named().iter()) {
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.pre_trace, b.pre_trace);
    }
    assert_eq!(net.dynamics.exc, back.dynamics.exc);
}

#[test]
fn damaged_snapshots_are_rejected() {
    let cfg = config(1);
    let bytes = snapshot_bytes(&trained(&cfg));
    let truncated = &bytes[..bytes.len() / 2];
    assert!(matches!(network_from_bytes(truncated, Path::new("t"), &cfg), Err(Error::Checksum { .. })));
    let mut flipped = bytes.clone();
    flipped[100] ^= 0x10;
    assert!(matches!(network_from_bytes(&flipped, Path::new("f"), &cfg), Err(Error::Checksum { .. })));
    assert!(matches!(network_from_bytes(&[], Path::new("e"), &cfg), Err(Error::Checksum { .. })));
}

#[test]
fn snapshot_refuses_other_model_config() {
    let cfg = config(1);
    let bytes = snapshot_bytes(&trained(&cfg));
    let mut other = cfg.clone();
    other.plasticity.input_exc.a_ltp *= 2.0;
    assert!(matches!(network_from_bytes(&bytes, Path::new("s"), &other), Err(Error::Config { .. })));
    let mut longer = cfg.clone();
    longer.simulation.n_train_patches = 50;
    network_from_bytes(&bytes, Path::new("s"), &longer).unwrap();
}

#[test]
fn resumed_training_equals_uninterrupted_training() {
    let full_cfg = config(12);
    let full = trained(&full_cfg);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("half.bin");
    let half_cfg = config(7);
    save_snapshot(&trained(&half_cfg), &path).unwrap();
    let mut resumed = load_snapshot(&path, &full_cfg).unwrap();
    resumed.train(&store(), &full_cfg, |_| Ok(())).unwrap();

    assert_eq!(snapshot_bytes(&resumed), snapshot_bytes(&full));
}

#[test]
fn checkpoints_match_a_shorter_run() {
    let mut cfg = config(8);
    cfg.simulation.snapshot_every = 4;
    let mut net = build_network(&cfg).unwrap();
    let mut checkpoints = Vec::new();
    net.train(&store(), &cfg, |event| {
        if let TrainEvent::Checkpoint(n) = event {
            checkpoints.push(snapshot_bytes(n));
        }
        Ok(())
    })
    .unwrap();
    assert_eq!(checkpoints.len(), 2);
    assert_eq!(checkpoints[0], snapshot_bytes(&trained(&config(4))));
    assert_eq!(checkpoints[1], snapshot_bytes(&net));
}

#[test]
fn same_seed_same_weights_other_seed_differs() {
    let a = snapshot_bytes(&trained(&config(3)));
    let b = snapshot_bytes(&trained(&config(3)));
    assert_eq!(a, b);
    let mut other = config(3);
    other.simulation.master_seed = 2;
    assert_ne!(snapshot_bytes(&trained(&other))[44..], a[44..]);
}
