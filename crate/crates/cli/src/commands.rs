//! One function per subcommand. Every artifact lands in the configured
//! output directory under a fixed name.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sctnet::data::io::{decode_raw_cube, decode_raw_labels, label_path_for, Interleave, RawDtype};
use sctnet::data::patches::{extract_patches, PatchSet, Sample, Split};
use sctnet::data::{
    load_cube, pca_reduce, read_cube, read_labels, stratified_split, write_cube, write_labels, LabelRaster, SynthSpec,
};
use sctnet::model::checkpoint;
use sctnet::model::Model;
use sctnet::train::ablation::ablation_csv;
use sctnet::train::trainer::epoch_csv;
use sctnet::train::{ablate, param_report, predict, train_with, ConfusionMatrix, MetricsReport};

use crate::config::RunConfig;
use crate::palette::{write_ppm, ClassPalette};
use crate::CliError;

pub const REDUCED: &str = "reduced.hsic";
pub const PCA: &str = "pca.toml";
pub const MANIFEST: &str = "manifest.toml";
pub const SPLIT: &str = "split.csv";
pub const CHECKPOINT: &str = "model.toml";
pub const EPOCHS: &str = "epochs.csv";
pub const METRICS: &str = "metrics.toml";
pub const CONFUSION: &str = "confusion.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const ABLATION: &str = "ablation.csv";
pub const MAP: &str = "map.ppm";

const PREDICT_BATCH: usize = 64;

/// Summary of a preprocessing run, written next to the split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataManifest {
    pub source: PathBuf,
    pub height: usize,
    pub width: usize,
    /// Bands `C` of the source cube.
    pub input_bands: usize,
    /// Retained components `B`.
    pub bands: usize,
    pub patch: usize,
    pub classes: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub explained_variance_ratio: f64,
    pub train: usize,
    pub test: usize,
    /// Training pixels of class `k+1`.
    pub class_train: Vec<usize>,
    /// Labeled pixels of class `k+1`.
    pub class_total: Vec<usize>,
}

/// Reduced cube, labels and split reconstructed from preprocessing output.
pub struct Prepared {
    pub manifest: DataManifest,
    pub labels: LabelRaster,
    pub set: PatchSet,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::file(path, e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::file(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::file(dir, e))
}

/// Attaches the path to bare I/O failures from the core library.
fn at<T>(path: &Path, r: sctnet::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        sctnet::Error::Io(io) => CliError::file(path, io),
        e => CliError::Core(e),
    })
}

pub fn split_csv(set: &PatchSet) -> String {
    let mut s = String::from("row,col,label,split\n");
    for x in set.samples() {
        let split = match x.split {
            Some(Split::Train) => "train",
            Some(Split::Test) => "test",
            None => "none",
        };
        s.push_str(&format!("{},{},{},{split}\n", x.row, x.col, x.label));
    }
    s
}

pub fn parse_split_csv(text: &str) -> Result<Vec<Sample>, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "row,col,label,split")) => {}
        _ => return Err("missing header `row,col,label,split`".into()),
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || format!("line {}: malformed record `{line}`", i + 1);
            if f.len() != 4 {
                return Err(bad());
            }
            let split = match f[3] {
                "train" => Some(Split::Train),
                "test" => Some(Split::Test),
                "none" => None,
                _ => return Err(bad()),
            };
            Ok(Sample {
                row: f[0].parse().map_err(|_| bad())?,
                col: f[1].parse().map_err(|_| bad())?,
                label: f[2].parse().map_err(|_| bad())?,
                split,
            })
        })
        .collect()
}

/// Reduces the cube, splits labeled pixels and writes the reduced cube,
/// PCA model, manifest and split.
pub fn preprocess(cfg: &RunConfig) -> Result<DataManifest, CliError> {
    cfg.validate()?;
    let src = cfg.cube_path()?;
    let (cube, labels) = at(src, load_cube(src))?;
    if cfg.bands > cube.bands() {
        return Err(CliError::Invalid(format!(
            "cannot retain {} components from a {}-band cube",
            cfg.bands,
            cube.bands()
        )));
    }
    let classes = labels.validate_contiguous()?;
    let (pca, reduced) = pca_reduce(&cube, cfg.bands)?;
    ensure_dir(&cfg.out)?;
    let reduced_path = cfg.artifact(REDUCED);
    at(&reduced_path, write_cube(&reduced_path, &reduced))?;
    let labels_path = label_path_for(&reduced_path);
    at(&labels_path, write_labels(&labels_path, &labels))?;
    let set = stratified_split(extract_patches(reduced, &labels, cfg.patch)?, cfg.train_fraction, cfg.seed)?;
    let mut class_train = vec![0; classes];
    for s in set.samples().iter().filter(|s| s.split == Some(Split::Train)) {
        class_train[s.class()] += 1;
    }
    let train = class_train.iter().sum();
    let manifest = DataManifest {
        source: src.to_path_buf(),
        height: cube.height(),
        width: cube.width(),
        input_bands: cube.bands(),
        bands: cfg.bands,
        patch: cfg.patch,
        classes,
        train_fraction: cfg.train_fraction,
        seed: cfg.seed,
        explained_variance_ratio: pca.explained_ratio().iter().sum(),
        train,
        test: set.len() - train,
        class_train,
        class_total: labels.class_counts(),
    };
    write(&cfg.artifact(PCA), toml::to_string(&pca).expect("PCA model serializes"))?;
    write(&cfg.artifact(SPLIT), split_csv(&set))?;
    write(&cfg.artifact(MANIFEST), toml::to_string(&manifest).expect("manifest serializes"))?;
    println!(
        "reduced {}→{} bands ({:.2}% variance), {} classes, {} train / {} test",
        manifest.input_bands,
        manifest.bands,
        100.0 * manifest.explained_variance_ratio,
        classes,
        manifest.train,
        manifest.test
    );
    Ok(manifest)
}

pub fn read_manifest(cfg: &RunConfig) -> Result<DataManifest, CliError> {
    let path = cfg.artifact(MANIFEST);
    let text = read_text(&path).map_err(|e| CliError::Invalid(format!("{e}; run `preprocess` first")))?;
    toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// Loads preprocessing output as a patch set with the configured window.
pub fn load_prepared(cfg: &RunConfig) -> Result<Prepared, CliError> {
    let manifest = read_manifest(cfg)?;
    if manifest.bands != cfg.bands {
        return Err(CliError::Invalid(format!(
            "data was reduced to {} components but the configuration asks for {}",
            manifest.bands, cfg.bands
        )));
    }
    let cube_path = cfg.artifact(REDUCED);
    let cube = at(&cube_path, read_cube(&cube_path))?;
    let labels_path = label_path_for(&cube_path);
    let labels = at(&labels_path, read_labels(&labels_path))?;
    let split_path = cfg.artifact(SPLIT);
    let samples = parse_split_csv(&read_text(&split_path)?)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", split_path.display())))?;
    let set = PatchSet::from_samples(cube, cfg.patch, manifest.classes, samples)?;
    Ok(Prepared { manifest, labels, set })
}

/// Trains a fresh model and writes the checkpoint and epoch log.
pub fn train(cfg: &RunConfig) -> Result<Model<f32>, CliError> {
    cfg.validate()?;
    let p = load_prepared(cfg)?;
    let mut model = Model::<f32>::new(cfg.model_config(p.manifest.classes), cfg.seed)?;
    let log = train_with(&mut model, &p.set, &cfg.train_config(), |e| {
        println!("epoch {:>4}  loss {:.5}  train OA {:.4}", e.epoch, e.loss, e.train_oa);
    })?;
    let path = cfg.artifact(CHECKPOINT);
    at(&path, checkpoint::save(&model, &path))?;
    write(&cfg.artifact(EPOCHS), epoch_csv(&log))?;
    println!("checkpoint written to {}", path.display());
    Ok(model)
}

fn load_model(cfg: &RunConfig, classes: usize, checkpoint: Option<&Path>) -> Result<Model<f32>, CliError> {
    let path = checkpoint.map_or_else(|| cfg.artifact(CHECKPOINT), Path::to_path_buf);
    at(&path, checkpoint::load_for(&cfg.model_config(classes), &path))
}

/// Evaluates a checkpoint on one split; writes metrics, the confusion
/// matrix and per-pixel predictions.
pub fn eval(cfg: &RunConfig, checkpoint: Option<&Path>, split: Split) -> Result<MetricsReport, CliError> {
    cfg.validate()?;
    let p = load_prepared(cfg)?;
    let model = load_model(cfg, p.manifest.classes, checkpoint)?;
    let idx = p.set.indices(split);
    if idx.is_empty() {
        return Err(CliError::Invalid(format!("the {split:?} split is empty")));
    }
    let preds = predict(&model, &p.set, &idx, PREDICT_BATCH)?;
    let truth: Vec<usize> = idx.iter().map(|&i| p.set.samples()[i].class()).collect();
    let cm = ConfusionMatrix::from_pairs(p.set.classes(), &truth, &preds);
    let report = cm.metrics();
    let mut listing = String::from("row,col,label,predicted\n");
    for (&i, &k) in idx.iter().zip(&preds) {
        let s = p.set.samples()[i];
        listing.push_str(&format!("{},{},{},{}\n", s.row, s.col, s.label, k + 1));
    }
    ensure_dir(&cfg.out)?;
    write(&cfg.artifact(METRICS), report.to_toml())?;
    write(&cfg.artifact(CONFUSION), cm.to_csv())?;
    write(&cfg.artifact(PREDICTIONS), listing)?;
    println!("{report}");
    Ok(report)
}

/// Trains and evaluates each requested ablation case on the same split.
pub fn ablation(cfg: &RunConfig, cases: &[usize]) -> Result<String, CliError> {
    cfg.validate()?;
    if let Some(c) = cases.iter().find(|&&c| !(1..=6).contains(&c)) {
        return Err(CliError::Invalid(format!("no ablation case {c}; use 1-6")));
    }
    let p = load_prepared(cfg)?;
    let rows = ablate(&cfg.model_config(p.manifest.classes), cases, &p.set, &cfg.train_config(), cfg.seed)?;
    for r in &rows {
        println!("case {} {:<22} {:>9} params  {}", r.case, r.ablation.label(), r.parameters, r.metrics);
    }
    let csv = ablation_csv(&rows);
    ensure_dir(&cfg.out)?;
    write(&cfg.artifact(ABLATION), &csv)?;
    Ok(csv)
}

/// Parameter breakdown of the configured model and totals for 1..=5
/// encoders.
pub fn params(cfg: &RunConfig, classes: Option<usize>) -> Result<String, CliError> {
    cfg.validate()?;
    let classes = match classes {
        Some(k) => k,
        None => read_manifest(cfg).map(|m| m.classes).unwrap_or(16),
    };
    let base = cfg.model_config(classes);
    let mut out = format!("{}\n\nencoders  parameters  delta\n", param_report(&Model::<f32>::new(base.clone(), 0)?));
    let mut prev = None;
    for l in 1..=5 {
        let total =
            param_report(&Model::<f32>::new(sctnet::model::ModelConfig { encoders: l, ..base.clone() }, 0)?).total;
        let delta = prev.map_or_else(|| "-".to_string(), |p: usize| format!("{}", total - p));
        out.push_str(&format!("{l:>8}  {total:>10}  {delta}\n"));
        prev = Some(total);
    }
    print!("{out}");
    Ok(out)
}

/// Renders predicted classes as a pixmap the size of the cube.
pub fn map(cfg: &RunConfig, checkpoint: Option<&Path>, full: bool) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let p = load_prepared(cfg)?;
    let model = load_model(cfg, p.manifest.classes, checkpoint)?;
    let (h, w) = (p.labels.height(), p.labels.width());
    let mut samples = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let label = p.labels.get(row, col);
            if label != 0 || full {
                // unlabeled pixels carry a placeholder label; only the prediction is used
                samples.push(Sample { row, col, label: label.max(1), split: None });
            }
        }
    }
    let set = PatchSet::from_samples(p.set.cube().clone(), cfg.patch, p.manifest.classes, samples)?;
    let idx: Vec<usize> = (0..set.len()).collect();
    let preds = predict(&model, &set, &idx, PREDICT_BATCH)?;
    let palette = ClassPalette::new(p.manifest.classes);
    let mut pixels = vec![palette.color(0); h * w];
    for (s, k) in set.samples().iter().zip(preds) {
        pixels[s.row * w + s.col] = palette.color(k + 1);
    }
    ensure_dir(&cfg.out)?;
    let path = cfg.artifact(MAP);
    let mut buf = Vec::with_capacity(3 * h * w + 16);
    write_ppm(&mut buf, w, h, &pixels).expect("writing to memory");
    write(&path, buf)?;
    println!("{}×{} map written to {}", w, h, path.display());
    Ok(path)
}

/// Writes a generated scene as `<name>.hsic` plus labels.
pub fn synth(cfg: &RunConfig, spec: &SynthSpec, name: &str) -> Result<PathBuf, CliError> {
    let (cube, labels) = spec.generate().map_err(|e| CliError::Invalid(e.to_string()))?;
    ensure_dir(&cfg.out)?;
    let path = cfg.artifact(&format!("{name}.hsic"));
    at(&path, write_cube(&path, &cube))?;
    let lp = label_path_for(&path);
    at(&lp, write_labels(&lp, &labels))?;
    println!(
        "{}×{}×{} scene with {} classes written to {}",
        spec.height,
        spec.width,
        spec.bands,
        spec.classes,
        path.display()
    );
    Ok(path)
}

/// Raw export dimensions and layout.
#[derive(Clone, Debug)]
pub struct RawLayout {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: RawDtype,
    pub interleave: Interleave,
    /// Labels stored as little-endian `u16` rather than `u8`.
    pub wide_labels: bool,
}

/// Converts headerless raw cube and label files to the native containers.
pub fn convert(
    cfg: &RunConfig,
    cube: &Path,
    labels: &Path,
    layout: &RawLayout,
    name: &str,
) -> Result<PathBuf, CliError> {
    let bytes = fs::read(cube).map_err(|e| CliError::file(cube, e))?;
    let c =
        at(cube, decode_raw_cube(&bytes, layout.height, layout.width, layout.bands, layout.dtype, layout.interleave))?;
    let bytes = fs::read(labels).map_err(|e| CliError::file(labels, e))?;
    let l = at(labels, decode_raw_labels(&bytes, layout.height, layout.width, layout.wide_labels))?;
    ensure_dir(&cfg.out)?;
    let path = cfg.artifact(&format!("{name}.hsic"));
    at(&path, write_cube(&path, &c))?;
    let lp = label_path_for(&path);
    at(&lp, write_labels(&lp, &l))?;
    println!("converted to {}", path.display());
    Ok(path)
}
