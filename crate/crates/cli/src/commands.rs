//! Stage implementations. Each stage writes its artifacts into the output
//! directory and appends one manifest record there.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Deserialize;

use v1snn::config::RunConfig;
use v1snn::features::{extract_features, ExtractRequest, FeatureMatrix, Split, Variant};
use v1snn::images::{whiten, WhitenFilter, WhitenedImageStore};
use v1snn::mnist::{load_mnist, MnistSet};
use v1snn::network::{build_network, Network, TrainEvent, TrainLogRow};
use v1snn::readout::{accuracy, LinearModel};
use v1snn::snapshot::{load_snapshot, snapshot_bytes};
use v1snn::svm::SvmParams;
use v1snn::{Error, Result};

use crate::export::{export_receptive_fields, load_gray_square};
use crate::manifest::{append_manifest, artifact, build_id, hex, unix_now, verify_input, Artifact, RunManifest};
use crate::{Cli, Command};

pub const SNAPSHOT_FILE: &str = "snapshot.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const SWEEP_HEADER: &str = "level,accuracy,n_test,model_id,variant";

/// Resolved config plus output directory, shared by all stages.
pub struct Ctx {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

impl Ctx {
    pub fn new(config: RunConfig, out_dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&out_dir)?;
        Ok(Self { config, out_dir })
    }

    fn record(&self, stage: &str, started: Instant, datasets: Vec<Artifact>, inputs: Vec<Artifact>, outputs: &[PathBuf], notes: Vec<(String, String)>) -> Result<()> {
        let outputs = outputs.iter().map(|p| artifact(&self.out_dir, p)).collect::<Result<Vec<_>>>()?;
        append_manifest(
            &self.out_dir,
            &RunManifest {
                stage: stage.into(),
                started_unix_s: unix_now(),
                wallclock_s: started.elapsed().as_secs_f64(),
                build: build_id(),
                master_seed: self.config.simulation.master_seed,
                model_hash: hex(&self.config.model_hash()),
                config: self.config.to_toml(),
                datasets,
                inputs,
                outputs,
                notes,
            },
        )
    }

    fn svm_params(&self) -> SvmParams {
        let r = &self.config.readout;
        SvmParams {
            c: r.svm_c,
            tol: r.svm_tol,
            max_epochs: r.svm_max_epochs,
            intercept_scaling: r.intercept_scaling,
            seed: self.config.simulation.master_seed,
        }
    }
}

/// Writes `bytes` next to `path` and renames, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn dataset(path: &Path) -> Result<Artifact> {
    Ok(Artifact {
        path: path.to_string_lossy().into_owned(),
        sha256: crate::manifest::sha256_file(path)?,
    })
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::preset("desk")?,
    };
    if let Some(seed) = cli.seed {
        cfg.simulation.master_seed = seed;
        cfg.readout.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("--threads", e.to_string()))?;
    }
    let config = load_config(&cli)?;
    let ctx = Ctx::new(config, cli.out_dir.clone())?;
    match cli.command {
        Command::Train { resume } => train(&ctx, resume.as_deref()).map(|_| ()),
        Command::Extract {
            snapshot,
            split,
            level,
            reps,
            variant,
            csv,
        } => extract(&ctx, &snapshot, Split::parse(&split)?, level, reps, Variant::parse(&variant)?, csv).map(|_| ()),
        Command::Fit { features } => fit(&ctx, &features).map(|_| ()),
        Command::Eval { model, features } => {
            let acc = eval(&ctx, &model, &features)?;
            println!("{acc}");
            Ok(())
        }
        Command::Sweep {
            snapshot,
            model,
            variant,
            levels,
        } => sweep(&ctx, &snapshot, &model, Variant::parse(&variant)?, levels).map(|_| ()),
        Command::ExportRf { snapshot } => export_rf(&ctx, &snapshot).map(|_| ()),
        Command::Aggregate { inputs } => aggregate(&ctx, &inputs).map(|_| ()),
        Command::Whiten { inputs, output, size, f0 } => whiten_images(&ctx, &inputs, &output, size, f0),
        Command::Pipeline => pipeline(&ctx).map(|_| ()),
    }
}

// ---- train ---------------------------------------------------------------

pub fn train(ctx: &Ctx, resume: Option<&Path>) -> Result<PathBuf> {
    let started = Instant::now();
    let cfg = &ctx.config;
    let store_path = &cfg.data.natural_images;
    let store = WhitenedImageStore::load(store_path)?;
    let mut inputs = Vec::new();
    let mut net = match resume {
        Some(path) => {
            inputs.push(verify_input(path)?);
            load_snapshot(path, cfg)?
        }
        None => build_network(cfg)?,
    };
    let log_path = ctx.out_dir.join(TRAIN_LOG_FILE);
    let mut log = if resume.is_some() && log_path.exists() {
        BufWriter::new(OpenOptions::new().append(true).open(&log_path)?)
    } else {
        let mut w = BufWriter::new(File::create(&log_path)?);
        writeln!(w, "{}", TrainLogRow::CSV_HEADER)?;
        w
    };
    let ckpt_dir = ctx.out_dir.join("checkpoints");
    let mut outputs = Vec::new();
    net.train(&store, cfg, |event| {
        match event {
            TrainEvent::Log(row) => {
                log::info!(
                    "patch {}: exc {:.2} Hz, inh {:.2} Hz, |w_in| {:.3}",
                    row.patch_index,
                    row.mean_exc_rate_hz,
                    row.mean_inh_rate_hz,
                    row.input_exc_norm_mean
                );
                writeln!(log, "{}", row.to_csv())?;
                log.flush()?;
            }
            TrainEvent::Checkpoint(net) => {
                fs::create_dir_all(&ckpt_dir)?;
                let path = ckpt_dir.join(format!("patch_{:07}.bin", net.patches_seen));
                write_atomic(&path, &snapshot_bytes(net))?;
                outputs.push(path);
            }
        }
        Ok(())
    })?;
    drop(log);
    let snap = ctx.out_dir.join(SNAPSHOT_FILE);
    write_atomic(&snap, &snapshot_bytes(&net))?;
    outputs.push(snap.clone());
    outputs.push(log_path);
    ctx.record(
        "train",
        started,
        vec![dataset(store_path)?],
        inputs,
        &outputs,
        vec![("patches".into(), net.patches_seen.to_string())],
    )?;
    Ok(snap)
}

// ---- extract -------------------------------------------------------------

pub fn load_split(cfg: &RunConfig, split: Split) -> Result<(MnistSet, Vec<Artifact>)> {
    let (img, lab) = cfg.data.mnist_files(split == Split::Train);
    let set = load_mnist(&img, &lab)?;
    let n = match split {
        Split::Train => cfg.readout.n_train_digits,
        Split::Test => cfg.readout.n_test_digits,
    };
    let set = if n == 0 { set } else { set.head(n) };
    Ok((set, vec![dataset(&img)?, dataset(&lab)?]))
}

pub fn features_name(split: Split, variant: Variant, level: f64) -> String {
    format!("features_{}_{}_L{:.2}.bin", split.name(), variant.name(), level)
}

#[allow(clippy::too_many_arguments)]
pub fn extract(ctx: &Ctx, snapshot: &Path, split: Split, level: f64, reps: Option<u32>, variant: Variant, csv: bool) -> Result<PathBuf> {
    let started = Instant::now();
    let cfg = &ctx.config;
    let snap_art = verify_input(snapshot)?;
    let net = load_snapshot(snapshot, cfg)?;
    let (set, datasets) = load_split(cfg, split)?;
    let reps = reps.unwrap_or(cfg.readout.reps);
    let m = extract_matrix(cfg, &net, &set, split, level, reps, variant)?;
    let path = ctx.out_dir.join(features_name(split, variant, level));
    write_atomic(&path, &m.to_bytes())?;
    let mut outputs = vec![path.clone()];
    if csv {
        let csv_path = path.with_extension("csv");
        let mut w = BufWriter::new(File::create(&csv_path)?);
        m.write_csv(&mut w)?;
        w.flush()?;
        outputs.push(csv_path);
    }
    ctx.record(
        "extract",
        started,
        datasets,
        vec![snap_art],
        &outputs,
        vec![
            ("split".into(), split.name().into()),
            ("level".into(), level.to_string()),
            ("reps".into(), reps.to_string()),
            ("variant".into(), variant.name().into()),
        ],
    )?;
    Ok(path)
}

pub fn extract_matrix(cfg: &RunConfig, net: &Network, set: &MnistSet, split: Split, level: f64, reps: u32, variant: Variant) -> Result<FeatureMatrix> {
    let t = Instant::now();
    let m = extract_features(
        net,
        set,
        &ExtractRequest {
            split,
            variant,
            level,
            reps,
            master_seed: cfg.simulation.master_seed,
            presentation_ms: cfg.simulation.presentation_ms,
            max_rate_hz: cfg.simulation.max_rate_hz,
        },
    )?;
    log::info!(
        "extracted {} {} digits ({}, level {level:.2}, reps {reps}) in {:.1} s",
        m.len(),
        split.name(),
        variant.name(),
        t.elapsed().as_secs_f64()
    );
    Ok(m)
}

// ---- fit / eval ----------------------------------------------------------

pub fn model_name(variant: Variant) -> String {
    format!("model_{}.bin", variant.name())
}

pub fn fit(ctx: &Ctx, features: &Path) -> Result<PathBuf> {
    let started = Instant::now();
    let feat_art = verify_input(features)?;
    let train = FeatureMatrix::load(features)?;
    if train.meta.split != Split::Train {
        return Err(Error::data(features, "the readout is fitted on training-split features"));
    }
    if train.meta.level != 0.0 {
        return Err(Error::data(
            features,
            format!("features were extracted at erasement level {}; the readout is fitted on original digits only", train.meta.level),
        ));
    }
    let model = LinearModel::fit(&train, ctx.config.readout.scaling, ctx.svm_params())?;
    let path = ctx.out_dir.join(model_name(train.meta.variant));
    write_atomic(&path, &model.to_bytes())?;
    log::info!("fitted readout on {} digits, train accuracy {:.4}", train.len(), accuracy(&model, &train)?);
    ctx.record("fit", started, vec![], vec![feat_art], std::slice::from_ref(&path), vec![("variant".into(), train.meta.variant.name().into())])?;
    Ok(path)
}

/// Short model identifier: the first 16 hex digits of the model file's SHA-256.
pub fn model_id(art: &Artifact) -> String {
    art.sha256[..16].to_string()
}

pub fn eval(ctx: &Ctx, model: &Path, features: &Path) -> Result<f64> {
    let started = Instant::now();
    let model_art = verify_input(model)?;
    let feat_art = verify_input(features)?;
    let lm = LinearModel::load(model)?;
    let test = FeatureMatrix::load(features)?;
    let acc = accuracy(&lm, &test)?;
    let path = ctx.out_dir.join("eval.csv");
    let mut text = String::from("features,accuracy,n_test,model_id,variant\n");
    text.push_str(&format!("{},{acc},{},{},{}\n", features.display(), test.len(), model_id(&model_art), test.meta.variant.name()));
    write_atomic(&path, text.as_bytes())?;
    ctx.record("eval", started, vec![], vec![model_art, feat_art], &[path], vec![])?;
    Ok(acc)
}

// ---- sweep ---------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub level: f64,
    pub accuracy: f64,
    pub n_test: usize,
    pub model_id: String,
    pub variant: Variant,
}

pub fn sweep_name(variant: Variant) -> String {
    format!("sweep_{}.csv", variant.name())
}

pub fn sweep(ctx: &Ctx, snapshot: &Path, model: &Path, variant: Variant, levels: Option<Vec<f64>>) -> Result<Vec<SweepRow>> {
    let started = Instant::now();
    let cfg = &ctx.config;
    let levels = levels.unwrap_or_else(|| cfg.readout.levels.clone());
    if levels.is_empty() || levels.iter().any(|l| !(0.0..1.0).contains(l)) || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("--levels", "levels must be non-empty, strictly increasing and within [0, 1)"));
    }
    let snap_art = verify_input(snapshot)?;
    let model_art = verify_input(model)?;
    let net = load_snapshot(snapshot, cfg)?;
    let lm = LinearModel::load(model)?;
    let (set, datasets) = load_split(cfg, Split::Test)?;
    let id = model_id(&model_art);
    let mut rows = Vec::with_capacity(levels.len());
    for &level in &levels {
        let m = extract_matrix(cfg, &net, &set, Split::Test, level, cfg.readout.reps, variant)?;
        let acc = accuracy(&lm, &m)?;
        log::info!("{} level {level:.2}: accuracy {acc:.4}", variant.name());
        rows.push(SweepRow {
            level,
            accuracy: acc,
            n_test: m.len(),
            model_id: id.clone(),
            variant,
        });
    }
    for w in rows.windows(2) {
        if w[1].accuracy > w[0].accuracy + 0.005 {
            log::warn!("accuracy rises from {:.4} at level {:.2} to {:.4} at level {:.2}", w[0].accuracy, w[0].level, w[1].accuracy, w[1].level);
        }
    }
    let path = ctx.out_dir.join(sweep_name(variant));
    write_atomic(&path, sweep_csv(&rows).as_bytes())?;
    ctx.record("sweep", started, datasets, vec![snap_art, model_art], std::slice::from_ref(&path), vec![("variant".into(), variant.name().into())])?;
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&format!("{:.2},{},{},{},{}\n", r.level, r.accuracy, r.n_test, r.model_id, r.variant.name()));
    }
    s
}

// ---- export-rf -----------------------------------------------------------

pub fn export_rf(ctx: &Ctx, snapshot: &Path) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let snap_art = verify_input(snapshot)?;
    let net = load_snapshot(snapshot, &ctx.config)?;
    let files = export_receptive_fields(&net.conn.input_exc, &ctx.out_dir.join("rf"))?;
    log::info!(
        "mean receptive-field sparseness {:.4}",
        v1snn::rf::mean_rf_sparseness(&net.conn.input_exc)
    );
    ctx.record("export-rf", started, vec![], vec![snap_art], &files, vec![])?;
    Ok(files)
}

// ---- aggregate -----------------------------------------------------------

#[derive(Debug, Deserialize)]
struct SweepRecord {
    level: f64,
    accuracy: f64,
    #[allow(dead_code)]
    n_test: usize,
    #[allow(dead_code)]
    model_id: String,
    variant: String,
}

/// Mean and sample standard deviation of accuracy per (variant, level).
pub fn aggregate(ctx: &Ctx, inputs: &[PathBuf]) -> Result<PathBuf> {
    let started = Instant::now();
    let mut groups: Vec<(String, String, Vec<f64>)> = Vec::new();
    let mut arts = Vec::new();
    for path in inputs {
        arts.push(verify_input(path)?);
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
        for rec in rdr.deserialize::<SweepRecord>() {
            let rec = rec.map_err(|e| Error::data(path, e.to_string()))?;
            let level = format!("{:.2}", rec.level);
            match groups.iter_mut().find(|(v, l, _)| *v == rec.variant && *l == level) {
                Some((_, _, accs)) => accs.push(rec.accuracy),
                None => groups.push((rec.variant, level, vec![rec.accuracy])),
            }
        }
    }
    let mut out = String::from("variant,level,mean_accuracy,std_accuracy,n_runs\n");
    for (variant, level, accs) in &groups {
        let n = accs.len() as f64;
        let mean = accs.iter().sum::<f64>() / n;
        let std = if accs.len() > 1 { (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        out.push_str(&format!("{variant},{level},{mean},{std},{}\n", accs.len()));
    }
    let path = ctx.out_dir.join("aggregate.csv");
    write_atomic(&path, out.as_bytes())?;
    ctx.record("aggregate", started, vec![], arts, std::slice::from_ref(&path), vec![])?;
    Ok(path)
}

// ---- whiten --------------------------------------------------------------

pub fn whiten_images(ctx: &Ctx, inputs: &[PathBuf], output: &Path, size: u32, f0: f64) -> Result<()> {
    let started = Instant::now();
    let images = inputs.iter().map(|p| load_gray_square(p, size)).collect::<Result<Vec<_>>>()?;
    let store = whiten(&images, WhitenFilter::Olshausen { f0 })?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_atomic(output, &store.to_bytes())?;
    let datasets = inputs.iter().map(|p| dataset(p)).collect::<Result<Vec<_>>>()?;
    let out = vec![dataset(output)?];
    append_manifest(
        &ctx.out_dir,
        &RunManifest {
            stage: "whiten".into(),
            started_unix_s: unix_now(),
            wallclock_s: started.elapsed().as_secs_f64(),
            build: build_id(),
            master_seed: 0,
            model_hash: String::new(),
            config: String::new(),
            datasets,
            inputs: vec![],
            outputs: out,
            notes: vec![("size".into(), size.to_string()), ("f0".into(), f0.to_string())],
        },
    )
}

// ---- pipeline ------------------------------------------------------------

pub struct SeedResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub intact: Vec<SweepRow>,
    pub ablated: Vec<SweepRow>,
}

/// Full run for one seed into `ctx.out_dir`.
pub fn run_seed(ctx: &Ctx) -> Result<SeedResult> {
    let snap = train(ctx, None)?;
    export_rf(ctx, &snap)?;
    let mut rows = Vec::new();
    for variant in [Variant::Intact, Variant::NoInhibition] {
        let feats = extract(ctx, &snap, Split::Train, 0.0, None, variant, false)?;
        let model = fit(ctx, &feats)?;
        rows.push(sweep(ctx, &snap, &model, variant, None)?);
    }
    let ablated = rows.pop().unwrap();
    let intact = rows.pop().unwrap();
    Ok(SeedResult {
        seed: ctx.config.simulation.master_seed,
        dir: ctx.out_dir.clone(),
        intact,
        ablated,
    })
}

pub fn pipeline(ctx: &Ctx) -> Result<Vec<SeedResult>> {
    let mut results = Vec::new();
    let mut sweeps = Vec::new();
    for &seed in &ctx.config.readout.seeds {
        let mut cfg = ctx.config.clone();
        cfg.simulation.master_seed = seed;
        let sub = Ctx::new(cfg, ctx.out_dir.join(format!("seed_{seed}")))?;
        let r = run_seed(&sub)?;
        sweeps.push(r.dir.join(sweep_name(Variant::Intact)));
        sweeps.push(r.dir.join(sweep_name(Variant::NoInhibition)));
        results.push(r);
    }
    aggregate(ctx, &sweeps)?;
    Ok(results)
}
