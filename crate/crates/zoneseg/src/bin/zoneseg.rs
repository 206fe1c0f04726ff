//! Single executable for the whole workflow: phantom generation, dataset
//! stats, resampling, training, cross-validation, prediction, evaluation
//! and feature-map introspection. Every subcommand writes all of its
//! outputs, plus one `manifest.json`, under its `--out` directory.
//! Exit codes: 0 success, 1 usage/config error, 2 data/format error.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use zoneseg::augment::AugmentationConfig;
use zoneseg::inspect::{
    match_feature_maps, mid_prostate_slice, render_feature_grid, tap_slice, write_matches_csv,
    write_pgm,
};
use zoneseg::manifest::{sha256_file, unix_now, write_manifest, InputDigest, RunManifest};
use zoneseg::model::{load_model, NetworkSpec, Variant};
use zoneseg::train::{
    dice_coefficient, evaluate_volume, pad_image, regional_dice, run_crossval, run_final_test,
    write_curves_csv, write_per_volume_csv, write_summary_csv, LabeledVolume, Padding,
    TrainingConfig,
};
use zoneseg::volume::phantom::{synth_phantom, LabelMode};
use zoneseg::volume::resample::{resample, ResampleMode};
use zoneseg::volume::stats::label_balance_stats;
use zoneseg::volume::{read_volume, write_volume, LabelVolume, Volume};
use zoneseg::{Error, Result};

#[derive(Parser)]
#[command(name = "zoneseg", version, about = "Volumetric prostate-zone segmentation toolkit")]
struct Cli {
    /// Worker thread cap; 1 (the default) guarantees bit-reproducible runs.
    /// Falls back to the ZONESEG_THREADS environment variable.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic phantom image/label volume pairs.
    Synth(SynthArgs),
    /// Label-balance statistics over a set of label volumes.
    Stats(StatsArgs),
    /// Resample one volume to a new spacing.
    Resample(ResampleArgs),
    /// Train on a dataset and score a held-out test split.
    Train(TrainArgs),
    /// K-fold cross-validation with per-epoch Dice curves.
    Crossval(TrainArgs),
    /// Segment one image with a trained model.
    Predict(PredictArgs),
    /// Dice (overall and per prostate slab) of a prediction against truth.
    Evaluate(EvaluateArgs),
    /// Render tiled feature-map grids, optionally matched across two models.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Volume extents as NXxNYxNZ.
    #[arg(long, default_value = "64x64x16")]
    dims: String,
    /// Voxel spacing in mm as SXxSYxSZ.
    #[arg(long, default_value = "1.0x1.0x3.6")]
    spacing: String,
    /// Label count: 3 (background/TZ/PZ) or 6 (adds bladder/rectum/femur).
    #[arg(long, default_value = "3")]
    labels: String,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Noise/bias severity in [0,1].
    #[arg(long, default_value_t = 0.5)]
    difficulty: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Label volumes (.zvol) to analyze.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ResampleArgs {
    #[arg(long)]
    input: PathBuf,
    /// Target spacing in mm as SXxSYxSZ.
    #[arg(long)]
    spacing: String,
    /// trilinear (images) or nearest (images or labels).
    #[arg(long, default_value = "trilinear")]
    mode: String,
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by `train` and `crossval`. Every experiment flag is optional
/// here; values resolve as defaults, then `--config` JSON, then flags.
#[derive(Args)]
struct TrainArgs {
    /// Directory of `<id>.zvol` / `<id>_labels.zvol` pairs.
    #[arg(long)]
    data: PathBuf,
    /// JSON file with any subset of the experiment config fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated volume ids held out for the final test (train only).
    #[arg(long)]
    test: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    labels: Option<usize>,
    #[arg(long)]
    width_scale: Option<f64>,
    #[arg(long)]
    normalization: Option<bool>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    /// Comma-separated per-label loss weights.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shuffle_seed: Option<u64>,
    #[arg(long)]
    augment: Option<bool>,
    /// One progress line per epoch on stderr.
    #[arg(long)]
    progress: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Tap to render: conv1b..conv7b or head.
    #[arg(long, default_value = "conv7b")]
    tap: String,
    /// Full-resolution axial slice index; defaults to the mid-prostate
    /// slice of --truth.
    #[arg(long)]
    slice: Option<usize>,
    /// Ground-truth labels used to pick the mid-prostate slice.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Second checkpoint; renders its grid too and writes the best
    /// |Pearson| match per feature map.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Resolved experiment configuration; written back as `config.json` so the
/// exact settings of a run are never ambiguous.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExpConfig {
    variant: String,
    labels: usize,
    width_scale: f64,
    normalization: bool,
    folds: usize,
    epochs: usize,
    lr: f64,
    l2: f64,
    weights: Option<Vec<f64>>,
    seed: u64,
    shuffle_seed: u64,
    augment: bool,
    test: Option<Vec<String>>,
}

impl Default for ExpConfig {
    fn default() -> Self {
        ExpConfig {
            variant: "aniso".into(),
            labels: 3,
            width_scale: 1.0,
            normalization: true,
            folds: 5,
            epochs: 300,
            lr: 1e-5,
            l2: 1e-5,
            weights: None,
            seed: 0,
            shuffle_seed: 0,
            augment: true,
            test: None,
        }
    }
}

impl ExpConfig {
    fn resolve(args: &TrainArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let bytes = std::fs::read(path)?;
                serde_json::from_slice(&bytes)
                    .map_err(|e| Error::Config(format!("bad config file: {e}")))?
            }
            None => ExpConfig::default(),
        };
        if let Some(v) = &args.variant {
            cfg.variant = v.clone();
        }
        if let Some(v) = args.labels {
            cfg.labels = v;
        }
        if let Some(v) = args.width_scale {
            cfg.width_scale = v;
        }
        if let Some(v) = args.normalization {
            cfg.normalization = v;
        }
        if let Some(v) = args.folds {
            cfg.folds = v;
        }
        if let Some(v) = args.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = args.lr {
            cfg.lr = v;
        }
        if let Some(v) = args.l2 {
            cfg.l2 = v;
        }
        if let Some(w) = &args.weights {
            cfg.weights = Some(parse_weights(w)?);
        }
        if let Some(v) = args.seed {
            cfg.seed = v;
        }
        if let Some(v) = args.shuffle_seed {
            cfg.shuffle_seed = v;
        }
        if let Some(v) = args.augment {
            cfg.augment = v;
        }
        if let Some(t) = &args.test {
            cfg.test = Some(t.split(',').map(|s| s.trim().to_string()).collect());
        }
        Ok(cfg)
    }

    fn network_spec(&self) -> Result<NetworkSpec> {
        let variant: Variant = self.variant.parse()?;
        let mut spec = NetworkSpec::new(variant, self.labels);
        spec.width_scale = self.width_scale;
        spec.normalization = self.normalization;
        spec.validate()?;
        Ok(spec)
    }

    fn training_config(&self, progress: bool) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            l2_lambda: self.l2,
            folds: self.folds,
            class_weights: self.weights.clone(),
            model_seed: self.seed,
            shuffle_seed: self.shuffle_seed,
            adam: Default::default(),
            progress,
        }
    }
}

fn parse_triple<T: std::str::FromStr>(s: &str, what: &str) -> Result<(T, T, T)> {
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() == 3 {
        if let (Ok(a), Ok(b), Ok(c)) = (parts[0].parse(), parts[1].parse(), parts[2].parse()) {
            return Ok((a, b, c));
        }
    }
    Err(Error::Usage(format!("cannot parse {what} '{s}' (expected AxBxC)")))
}

fn parse_weights(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Usage(format!("cannot parse weight '{p}'")))
        })
        .collect()
}

fn ensure_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn read_labels(path: &Path) -> Result<LabelVolume> {
    match read_volume(path)? {
        Volume::Labels(l) => Ok(l),
        Volume::Image(_) => {
            Err(Error::Usage(format!("{} is an image volume, expected labels", path.display())))
        }
    }
}

/// Loads every `<id>.zvol` / `<id>_labels.zvol` pair in a directory, sorted
/// by id, and digests the files for the manifest.
fn load_dataset(dir: &Path) -> Result<(Vec<LabeledVolume>, Vec<InputDigest>)> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix("_labels.zvol") {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Data(format!("no *_labels.zvol files in {}", dir.display())));
    }
    let mut dataset = Vec::new();
    let mut digests = Vec::new();
    for id in ids {
        let img_path = dir.join(format!("{id}.zvol"));
        let lbl_path = dir.join(format!("{id}_labels.zvol"));
        let Volume::Image(image) = read_volume(&img_path)? else {
            return Err(Error::Data(format!("{} is not an image volume", img_path.display())));
        };
        let labels = read_labels(&lbl_path)?;
        digests.push(sha256_file(&img_path)?);
        digests.push(sha256_file(&lbl_path)?);
        dataset.push(LabeledVolume { id, image, labels });
    }
    Ok((dataset, digests))
}

struct ManifestBuilder {
    command: Vec<String>,
    started: f64,
    threads: usize,
}

impl ManifestBuilder {
    fn start(threads: usize) -> Self {
        ManifestBuilder { command: std::env::args().collect(), started: unix_now(), threads }
    }

    fn finish(
        self,
        out: &Path,
        config: serde_json::Value,
        seeds: Vec<u64>,
        inputs: Vec<InputDigest>,
    ) -> Result<()> {
        write_manifest(
            &RunManifest {
                command: self.command,
                version: env!("CARGO_PKG_VERSION").into(),
                config,
                seeds,
                threads: self.threads,
                inputs,
                started_unix: self.started,
                finished_unix: unix_now(),
            },
            out,
        )
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let threads = cli
        .threads
        .or_else(|| std::env::var("ZONESEG_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1);
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().ok();
    if let Err(e) = run(cli.cmd, threads) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cmd: Cmd, threads: usize) -> Result<()> {
    let mb = ManifestBuilder::start(threads);
    match cmd {
        Cmd::Synth(a) => cmd_synth(a, mb),
        Cmd::Stats(a) => cmd_stats(a, mb),
        Cmd::Resample(a) => cmd_resample(a, mb),
        Cmd::Train(a) => cmd_train(a, mb),
        Cmd::Crossval(a) => cmd_crossval(a, mb),
        Cmd::Predict(a) => cmd_predict(a, mb),
        Cmd::Evaluate(a) => cmd_evaluate(a, mb),
        Cmd::Inspect(a) => cmd_inspect(a, mb),
    }
}

fn cmd_synth(a: SynthArgs, mb: ManifestBuilder) -> Result<()> {
    let dims: (usize, usize, usize) = parse_triple(&a.dims, "dims")?;
    let spacing: (f64, f64, f64) = parse_triple(&a.spacing, "spacing")?;
    let mode: LabelMode = a.labels.parse()?;
    if a.count == 0 {
        return Err(Error::Usage("count must be >= 1".into()));
    }
    ensure_out(&a.out)?;
    let mut seeds = Vec::new();
    for i in 0..a.count {
        let seed = a.seed + i as u64;
        seeds.push(seed);
        let (image, labels) = synth_phantom(seed, dims, spacing, mode, a.difficulty)?;
        write_volume(&Volume::Image(image), &a.out.join(format!("phantom_{i:03}.zvol")))?;
        write_volume(&Volume::Labels(labels), &a.out.join(format!("phantom_{i:03}_labels.zvol")))?;
    }
    let config = serde_json::json!({
        "seed": a.seed, "dims": a.dims, "spacing": a.spacing,
        "labels": a.labels, "count": a.count, "difficulty": a.difficulty,
    });
    mb.finish(&a.out, config, seeds, vec![])
}

fn cmd_stats(a: StatsArgs, mb: ManifestBuilder) -> Result<()> {
    ensure_out(&a.out)?;
    let mut volumes = Vec::new();
    let mut digests = Vec::new();
    for p in &a.inputs {
        digests.push(sha256_file(p)?);
        let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        volumes.push((id, read_labels(p)?));
    }
    let refs: Vec<(String, &LabelVolume)> =
        volumes.iter().map(|(id, v)| (id.clone(), v)).collect();
    let stats = label_balance_stats(&refs);

    let mut s = String::from("id,tz_fraction,bg_tz_ratio,excluded\n");
    for v in &stats.per_volume {
        let fmt = |o: Option<f64>| o.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{}\n",
            v.id,
            fmt(v.tz_fraction),
            fmt(v.bg_tz_ratio),
            v.excluded
        ));
    }
    std::fs::write(a.out.join("balance.csv"), s)?;

    let mut h = String::from("lo,hi,count\n");
    for b in &stats.histogram {
        h.push_str(&format!("{},{},{}\n", b.lo, b.hi, b.count));
    }
    std::fs::write(a.out.join("histogram.csv"), h)?;

    let summary = serde_json::json!({ "mean_tz_fraction": stats.mean_tz_fraction() });
    std::fs::write(a.out.join("summary.json"), serde_json::to_vec_pretty(&summary).unwrap())?;

    let config = serde_json::json!({
        "inputs": a.inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    mb.finish(&a.out, config, vec![], digests)
}

fn cmd_resample(a: ResampleArgs, mb: ManifestBuilder) -> Result<()> {
    let spacing: (f64, f64, f64) = parse_triple(&a.spacing, "spacing")?;
    let mode: ResampleMode = a.mode.parse()?;
    ensure_out(&a.out)?;
    let digest = sha256_file(&a.input)?;
    let vol = read_volume(&a.input)?;
    let out = resample(&vol, spacing, mode)?;
    write_volume(&out, &a.out.join("resampled.zvol"))?;
    let config = serde_json::json!({
        "input": a.input.display().to_string(), "spacing": a.spacing, "mode": a.mode,
    });
    mb.finish(&a.out, config, vec![], vec![digest])
}

fn write_exp_outputs(
    out: &Path,
    cfg: &ExpConfig,
    per_volume: &[zoneseg::train::PerVolumeDice],
    summary: &[zoneseg::train::DiceReport],
) -> Result<()> {
    std::fs::write(out.join("config.json"), serde_json::to_vec_pretty(cfg).unwrap())?;
    write_per_volume_csv(per_volume, &out.join("per_volume.csv"))?;
    write_summary_csv(summary, &out.join("summary.csv"))?;
    Ok(())
}

fn cmd_train(a: TrainArgs, mb: ManifestBuilder) -> Result<()> {
    let cfg = ExpConfig::resolve(&a)?;
    let Some(test_ids) = cfg.test.clone() else {
        return Err(Error::Usage("train requires --test (or \"test\" in the config file)".into()));
    };
    ensure_out(&a.out)?;
    let (dataset, digests) = load_dataset(&a.data)?;
    let known: std::collections::BTreeSet<&str> =
        dataset.iter().map(|v| v.id.as_str()).collect();
    for id in &test_ids {
        if !known.contains(id.as_str()) {
            return Err(Error::Usage(format!("test id '{id}' not found in the dataset")));
        }
    }
    let (test, train): (Vec<LabeledVolume>, Vec<LabeledVolume>) =
        dataset.into_iter().partition(|v| test_ids.contains(&v.id));
    let spec = cfg.network_spec()?;
    let tcfg = cfg.training_config(a.progress);
    let aug = cfg.augment.then(AugmentationConfig::default);
    let outcome = run_final_test(&train, &test, &spec, &tcfg, aug.as_ref())?;
    outcome.model.save(&a.out.join("model.ckpt"))?;
    write_exp_outputs(&a.out, &cfg, &outcome.per_volume, &outcome.summary)?;
    mb.finish(
        &a.out,
        serde_json::to_value(&cfg).unwrap(),
        vec![cfg.seed, cfg.shuffle_seed],
        digests,
    )
}

fn cmd_crossval(a: TrainArgs, mb: ManifestBuilder) -> Result<()> {
    let cfg = ExpConfig::resolve(&a)?;
    if cfg.test.is_some() {
        return Err(Error::Usage("crossval does not take a test split".into()));
    }
    ensure_out(&a.out)?;
    let (dataset, digests) = load_dataset(&a.data)?;
    let spec = cfg.network_spec()?;
    let tcfg = cfg.training_config(a.progress);
    let aug = cfg.augment.then(AugmentationConfig::default);
    let outcome = run_crossval(&dataset, &spec, &tcfg, aug.as_ref())?;
    write_curves_csv(&outcome.curves, &a.out.join("curves.csv"))?;
    write_exp_outputs(&a.out, &cfg, &outcome.per_volume, &outcome.summary)?;
    mb.finish(
        &a.out,
        serde_json::to_value(&cfg).unwrap(),
        vec![cfg.seed, cfg.shuffle_seed],
        digests,
    )
}

fn cmd_predict(a: PredictArgs, mb: ManifestBuilder) -> Result<()> {
    ensure_out(&a.out)?;
    let digests = vec![sha256_file(&a.model)?, sha256_file(&a.image)?];
    let model = load_model(&a.model)?;
    let Volume::Image(image) = read_volume(&a.image)? else {
        return Err(Error::Usage(format!("{} is not an image volume", a.image.display())));
    };
    let (pred, _) = evaluate_volume(&model, &image)?;
    write_volume(&Volume::Labels(pred), &a.out.join("pred.zvol"))?;
    let config = serde_json::json!({
        "model": a.model.display().to_string(), "image": a.image.display().to_string(),
    });
    mb.finish(&a.out, config, vec![model.seed], digests)
}

fn cmd_evaluate(a: EvaluateArgs, mb: ManifestBuilder) -> Result<()> {
    ensure_out(&a.out)?;
    let digests = vec![sha256_file(&a.pred)?, sha256_file(&a.truth)?];
    let pred = read_labels(&a.pred)?;
    let truth = read_labels(&a.truth)?;
    if pred.header.dims != truth.header.dims {
        return Err(Error::Data(format!(
            "prediction dims {:?} != truth dims {:?}",
            pred.header.dims, truth.header.dims
        )));
    }
    let n_labels = pred.n_labels().max(truth.n_labels());
    let names = zoneseg::volume::label_names(n_labels);
    let mut s = String::from("label,region,dice\n");
    for l in 1..n_labels {
        let d = dice_coefficient(&pred.voxels, &truth.voxels, l as u8)?;
        s.push_str(&format!("{},all,{}\n", names[l], d));
    }
    // slab breakdown only applies when the truth contains a prostate
    match regional_dice(&pred, &truth) {
        Ok(slabs) => {
            for slab in slabs {
                let region = format!("{:?}", slab.slab).to_lowercase();
                for (l, d) in slab.dice {
                    s.push_str(&format!("{},{},{}\n", names[l as usize], region, d));
                }
            }
        }
        Err(Error::Data(_)) => {}
        Err(e) => return Err(e),
    }
    std::fs::write(a.out.join("dice.csv"), s)?;
    let config = serde_json::json!({
        "pred": a.pred.display().to_string(), "truth": a.truth.display().to_string(),
    });
    mb.finish(&a.out, config, vec![], digests)
}

fn cmd_inspect(a: InspectArgs, mb: ManifestBuilder) -> Result<()> {
    ensure_out(&a.out)?;
    let mut digests = vec![sha256_file(&a.model)?, sha256_file(&a.image)?];
    let model = load_model(&a.model)?;
    let Volume::Image(image) = read_volume(&a.image)? else {
        return Err(Error::Usage(format!("{} is not an image volume", a.image.display())));
    };
    let full_z = match (a.slice, &a.truth) {
        (Some(z), _) => z,
        (None, Some(truth_path)) => {
            digests.push(sha256_file(truth_path)?);
            mid_prostate_slice(&read_labels(truth_path)?)?
        }
        (None, None) => {
            return Err(Error::Usage("need --slice or --truth to pick a slice".into()));
        }
    };
    let nz = image.header.dims.2;
    if full_z >= nz {
        return Err(Error::Usage(format!("slice {full_z} out of range for {nz} slices")));
    }

    let pad = Padding::for_dims(image.header.dims, model.spec.required_input_multiple());
    let input = pad_image(&image, &pad);
    let (zf, _, _) = model.spec.tap_downsample(&a.tap)?;
    let z = tap_slice(full_z + pad.lo.0, zf);

    let capture = [a.tap.as_str()];
    let tap_of = |m: &zoneseg::model::Model<f32>| -> Result<zoneseg::engine::Tensor<f32>> {
        let tape = zoneseg::engine::Tape::inference();
        let fwd = m.forward(&tape, &input, &capture)?;
        let (_, t) = fwd
            .taps
            .into_iter()
            .next()
            .ok_or_else(|| Error::Usage(format!("tap '{}' was not captured", a.tap)))?;
        Ok(t)
    };

    let tap_a = tap_of(&model)?;
    write_pgm(&render_feature_grid(&tap_a, z)?, &a.out.join(format!("grid_{}.pgm", a.tap)))?;

    if let Some(other_path) = &a.compare {
        digests.push(sha256_file(other_path)?);
        let other = load_model(other_path)?;
        let tap_b = tap_of(&other)?;
        write_pgm(
            &render_feature_grid(&tap_b, z)?,
            &a.out.join(format!("grid_{}_compare.pgm", a.tap)),
        )?;
        let matches = match_feature_maps(&tap_a, &tap_b, z)?;
        write_matches_csv(&matches, &a.out.join("matches.csv"))?;
    }

    let config = serde_json::json!({
        "model": a.model.display().to_string(),
        "image": a.image.display().to_string(),
        "tap": a.tap,
        "slice": full_z,
        "compare": a.compare.as_ref().map(|p| p.display().to_string()),
    });
    mb.finish(&a.out, config, vec![model.seed], digests)
}

// keep clap's derive honest at test time
#[test]
fn cli_definition_is_consistent() {
    use clap::CommandFactory;
    Cli::command().debug_assert();
}
