use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use v1snn::images::WhitenedImageStore;
use v1snn::mnist::{write_idx_images, write_idx_labels, MnistSet};

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

/// Ten digit classes drawn as a bright 6×6 block at a class-specific spot, plus noise.
fn digits(n: usize, seed: u64) -> MnistSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0u8; n * 784];
    let mut labels = Vec::with_capacity(n);
    for k in 0..n {
        let label = (k % 10) as u8;
        let (r0, c0) = (4 + 4 * (label as usize / 5) * 2, 3 + 4 * (label as usize % 5));
        let img = &mut pixels[k * 784..(k + 1) * 784];
        for r in r0..r0 + 6 {
            for c in c0..c0 + 6 {
                img[r * 28 + c] = rng.random_range(180..=255);
            }
        }
        for _ in 0..10 {
            img[rng.random_range(0..784)] = rng.random_range(1..120);
        }
        labels.push(label);
    }
    MnistSet { rows: 28, cols: 28, pixels, labels }
}

fn fixture(extra: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let images = (0..3).map(|_| (0..40 * 40).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect();
    fs::write(root.join("natural.nimg"), WhitenedImageStore::new(40, 40, images).unwrap().to_bytes()).unwrap();
    let mnist = root.join("mnist");
    fs::create_dir_all(&mnist).unwrap();
    for (prefix, set) in [("train", digits(40, 1)), ("t10k", digits(20, 2))] {
        fs::write(mnist.join(format!("{prefix}-images-idx3-ubyte")), write_idx_images(&set)).unwrap();
        fs::write(mnist.join(format!("{prefix}-labels-idx1-ubyte")), write_idx_labels(&set)).unwrap();
    }
    let config = root.join("run.toml");
    fs::write(
        &config,
        format!(
            "[simulation]\nn_train_patches = 12\nlog_every = 4\nsnapshot_every = 6\ndead_patch_limit = 100000\n\
             [data]\nnatural_images = {:?}\nmnist_dir = {:?}\n\
             [readout]\nreps = 1\nn_train_digits = 0\nn_test_digits = 0\nlevels = [0.0, 0.5]\nseeds = [1]\n{extra}",
            root.join("natural.nimg"),
            mnist
        ),
    )
    .unwrap();
    Fixture { _dir: dir, root, config }
}

fn v1snn(fx: &Fixture, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_v1snn"))
        .arg("--config")
        .arg(&fx.config)
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    o
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_writes_every_artifact() {
    let fx = fixture("");
    let out = fx.root.join("out");
    ok(v1snn(&fx, &out, &["pipeline"]));
    let seed = out.join("seed_1");
    for f in [
        "snapshot.bin",
        "train_log.csv",
        "checkpoints/patch_0000006.bin",
        "rf/montage.pgm",
        "rf/rf_323.pgm",
        "features_train_intact_L0.00.bin",
        "features_train_no-inhibition_L0.00.bin",
        "model_intact.bin",
        "model_no-inhibition.bin",
        "sweep_intact.csv",
        "sweep_no-inhibition.csv",
        "manifest.jsonl",
    ] {
        assert!(seed.join(f).exists(), "missing {f}");
    }
    let sweep = fs::read_to_string(seed.join("sweep_intact.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "level,accuracy,n_test,model_id,variant");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.00,") && lines[2].starts_with("0.50,"));
    assert_eq!(lines[1].split(',').nth(2), Some("20"));

    let log = fs::read_to_string(seed.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 3);

    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("variant,level,mean_accuracy,std_accuracy,n_runs\n"));
    assert_eq!(agg.lines().count(), 1 + 4);
}

#[test]
fn stages_are_reproducible_byte_for_byte() {
    let fx = fixture("");
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = fx.root.join(run);
        ok(v1snn(&fx, &out, &["train"]));
        let snap = out.join("snapshot.bin");
        ok(v1snn(&fx, &out, &["extract", "--snapshot", s(&snap), "--split", "train", "--csv"]));
        let feats = out.join("features_train_intact_L0.00.bin");
        ok(v1snn(&fx, &out, &["fit", "--features", s(&feats)]));
        let model = out.join("model_intact.bin");
        ok(v1snn(&fx, &out, &["sweep", "--snapshot", s(&snap), "--model", s(&model), "--levels", "0,0.25"]));
        files.push(["snapshot.bin", "features_train_intact_L0.00.bin", "features_train_intact_L0.00.csv", "model_intact.bin", "sweep_intact.csv"].map(|f| fs::read(out.join(f)).unwrap()));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn thread_count_does_not_change_features() {
    let fx = fixture("");
    let out = fx.root.join("out");
    ok(v1snn(&fx, &out, &["train"]));
    let snap = out.join("snapshot.bin");
    let mut feats = Vec::new();
    for threads in ["1", "3"] {
        let dir = fx.root.join(format!("t{threads}"));
        ok(v1snn(&fx, &dir, &["--threads", threads, "extract", "--snapshot", s(&snap), "--split", "test"]));
        feats.push(fs::read(dir.join("features_test_intact_L0.00.bin")).unwrap());
    }
    assert_eq!(feats[0], feats[1]);
}

#[test]
fn resume_from_checkpoint_matches_full_run() {
    let fx = fixture("");
    let full = fx.root.join("full");
    ok(v1snn(&fx, &full, &["train"]));
    let part = fx.root.join("part");
    ok(v1snn(&fx, &part, &["train"]));
    let ckpt = part.join("checkpoints/patch_0000006.bin");
    let resumed = fx.root.join("resumed");
    ok(v1snn(&fx, &resumed, &["train", "--resume", s(&ckpt)]));
    assert_eq!(fs::read(full.join("snapshot.bin")).unwrap(), fs::read(resumed.join("snapshot.bin")).unwrap());
}

#[test]
fn ablated_sweep_leaves_the_snapshot_untouched() {
    let fx = fixture("");
    let out = fx.root.join("out");
    ok(v1snn(&fx, &out, &["train"]));
    let snap = out.join("snapshot.bin");
    let before = fs::read(&snap).unwrap();
    ok(v1snn(&fx, &out, &["extract", "--snapshot", s(&snap), "--split", "train", "--variant", "no-inhibition"]));
    let model = out.join("model_no-inhibition.bin");
    ok(v1snn(&fx, &out, &["fit", "--features", s(&out.join("features_train_no-inhibition_L0.00.bin"))]));
    ok(v1snn(&fx, &out, &["sweep", "--snapshot", s(&snap), "--model", s(&model), "--variant", "no-inhibition", "--levels", "0"]));
    assert_eq!(fs::read(&snap).unwrap(), before);
    let sweep = fs::read_to_string(out.join("sweep_no-inhibition.csv")).unwrap();
    assert!(sweep.lines().nth(1).unwrap().ends_with(",no-inhibition"));
}

#[test]
fn exit_codes() {
    let fx = fixture("");
    let out = fx.root.join("out");

    let bad = fixture("[neuron.exc]\ntau_z = -1.0\n");
    assert_eq!(code(&v1snn(&bad, &out, &["train"])), 2);
    let unknown = fixture("[plasticity.inh_exc]\nbogus = 3\n");
    assert_eq!(code(&v1snn(&unknown, &out, &["train"])), 2);

    let no_data = fixture("");
    fs::remove_file(no_data.root.join("natural.nimg")).unwrap();
    assert_eq!(code(&v1snn(&no_data, &out, &["train"])), 3);

    ok(v1snn(&fx, &out, &["train"]));
    let snap = out.join("snapshot.bin");

    // Test-split features cannot train the readout.
    ok(v1snn(&fx, &out, &["extract", "--snapshot", s(&snap), "--split", "test"]));
    assert_eq!(code(&v1snn(&fx, &out, &["fit", "--features", s(&out.join("features_test_intact_L0.00.bin"))])), 3);

    // Erased training features cannot either.
    ok(v1snn(&fx, &out, &["extract", "--snapshot", s(&snap), "--split", "train", "--level", "0.3"]));
    assert_eq!(code(&v1snn(&fx, &out, &["fit", "--features", s(&out.join("features_train_intact_L0.30.bin"))])), 3);

    // A file the manifest does not list.
    let stray = out.join("stray.bin");
    fs::copy(&snap, &stray).unwrap();
    assert_eq!(code(&v1snn(&fx, &out, &["export-rf", "--snapshot", s(&stray)])), 3);

    // A tracked file modified after it was written.
    let mut bytes = fs::read(&snap).unwrap();
    bytes[200] ^= 1;
    fs::write(&snap, bytes).unwrap();
    assert_eq!(code(&v1snn(&fx, &out, &["export-rf", "--snapshot", s(&snap)])), 3);

    // Snapshot from another model configuration.
    let other = fixture("[plasticity.input_exc]\na_ltp = 1e-6\n");
    let out2 = fx.root.join("out2");
    ok(v1snn(&fx, &out2, &["train"]));
    assert_eq!(code(&v1snn(&other, &out2, &["export-rf", "--snapshot", s(&out2.join("snapshot.bin"))])), 2);

    assert_eq!(code(&v1snn(&fx, &out, &["sweep", "--snapshot", "x", "--model", "y", "--levels", "0.5,0.2"])), 2);
}
