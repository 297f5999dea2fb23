//! Subcommand implementations. Each returns [`Outcome::Partial`] when some
//! per-item work failed but the rest completed; hard failures are errors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use patchq::imgcore::{load_image, ImageBuf};
use patchq::neuralq::{
    evaluate_predictions, prepare_picture, train, write_loss_curve, Checkpoint, ModelKind, QualityModel, TrainSample,
};
use patchq::patcher::{propose_patches_for, validate_patchset};
use patchq::psychlab::{
    assess_subjects, compute_mos, inter_subject_consistency, read_mos_csv, read_ratings_csv, sessions_from_records,
    simulate_raters, srcc, write_mos_csv, write_ratings_csv, RaterModel, RatingRecord, RejectionReport, SpamMode,
    SubjectSession,
};
use patchq::qmap::{predict_map, render_map};
use patchq::rng::{derive_seed, substream};
use patchq::sampler::{greedy_sample, SamplingProblem, TargetSet};
use patchq::ugcfeat::{feature_vector, read_features_csv, write_features_csv, FEATURE_NAMES};
use patchq::{Error, MosTable, Rect, Result, SCHEMA_VERSION};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::manifest::{Entry, Manifest, PatchEntry, SamplingSummary};
use crate::parallel::parallel_map;
use crate::pngio::save_png_tagged;
use crate::settings::Settings;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Partial,
}

impl Outcome {
    fn from_failures(n: usize) -> Self {
        if n == 0 {
            Outcome::Success
        } else {
            Outcome::Partial
        }
    }
}

#[derive(Clone, Debug)]
pub struct Context {
    pub seed: u64,
    pub jobs: usize,
    pub settings: Settings,
}

impl Context {
    fn preamble(&self) -> String {
        format!("schema_version={SCHEMA_VERSION},seed={}", self.seed)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn is_picture(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
}

fn list_pictures(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_picture(p))
        .collect();
    files.sort();
    Ok(files)
}

fn file_id(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn read_faces(path: &Path) -> Result<BTreeMap<String, i64>> {
    #[derive(Deserialize)]
    struct Row {
        id: String,
        face_count: i64,
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| Error::Validation(e.to_string()))?;
    rdr.deserialize::<Row>()
        .map(|r| r.map(|r| (r.id, r.face_count)).map_err(|e| Error::Validation(format!("{}: {e}", path.display()))))
        .collect()
}

/// One feature row per picture in `images`, sorted by file name.
pub fn cmd_features(ctx: &Context, images: &Path, faces: Option<&Path>, out: &Path) -> Result<Outcome> {
    let faces = match faces {
        Some(p) if p.is_file() => read_faces(p)?,
        Some(p) => {
            eprintln!("warning: faces file {} not found; face counts set to 0", p.display());
            BTreeMap::new()
        }
        None => {
            eprintln!("warning: no faces file given; face counts set to 0");
            BTreeMap::new()
        }
    };
    let files = list_pictures(images)?;
    let results = parallel_map(&files, ctx.jobs, |p| {
        let id = file_id(p);
        let img = load_image::<f64>(p)?;
        feature_vector(&img, faces.get(&id).copied().unwrap_or(0)).map(|f| (id, f))
    });
    let mut rows = Vec::new();
    let mut failed = 0;
    for (p, r) in files.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                failed += 1;
                eprintln!("error: {}: {e}", p.display());
            }
        }
    }
    write_features_csv(create(out)?, &rows, Some(&ctx.preamble()))?;
    println!("features: {} rows written, {failed} failed", rows.len());
    Ok(Outcome::from_failures(failed))
}

/// Histogram-matched selection of `k` rows; writes a manifest of the
/// selected pictures (paths resolved against `images`).
pub fn cmd_sample(ctx: &Context, features: &Path, targets: &Path, k: usize, images: Option<&Path>, out: &Path) -> Result<Outcome> {
    let rows = read_features_csv::<f64, _>(File::open(features)?)?;
    let targets = TargetSet::from_json(&std::fs::read_to_string(targets)?)?;
    let (ids, candidates): (Vec<String>, Vec<_>) = rows.into_iter().unzip();
    let problem = SamplingProblem::new(candidates, targets, k)?;
    let selection = greedy_sample(&problem, ctx.seed)?;
    let objective = problem.objective(&selection)?;
    let distances = problem.feature_distances(&selection)?;
    let image_dir = match images {
        Some(d) => d.to_path_buf(),
        None => features.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let out_dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let entries = selection
        .iter()
        .map(|&i| {
            let p = image_dir.join(&ids[i]);
            let image_path = relative_to(&p, &out_dir);
            Entry { id: ids[i].clone(), image_path, mos: None, patches: None }
        })
        .collect();
    let mut m = Manifest::new(entries, Some(ctx.seed));
    m.sampling = Some(SamplingSummary {
        objective,
        distances: FEATURE_NAMES.iter().zip(distances).map(|(n, d)| (n.to_string(), d)).collect(),
    });
    m.save(out)?;
    println!("sample: selected {} of {}, J = {objective:.6}", selection.len(), ids.len());
    for (n, d) in FEATURE_NAMES.iter().zip(distances) {
        println!("  {n}: {d:.6}");
    }
    Ok(Outcome::Success)
}

/// `path` relative to `base` when it lies inside it, else unchanged.
fn relative_to(path: &Path, base: &Path) -> PathBuf {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    abs(path).strip_prefix(abs(base)).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

/// Three validated patches per entry; per-entry seeds derive from the run
/// seed and the entry's position.
pub fn cmd_crop(ctx: &Context, manifest: &Path, out: &Path) -> Result<Outcome> {
    let mut m = Manifest::load(manifest)?;
    let base = m.base_dir.clone();
    let items: Vec<(usize, Entry)> = m.entries.iter().cloned().enumerate().collect();
    let results = parallel_map(&items, ctx.jobs, |(i, e)| -> Result<Vec<PatchEntry>> {
        let img = load_image::<f64>(resolve(&base, e))?;
        let (w, h) = (img.width(), img.height());
        let patches = propose_patches_for(&e.id, w, h, derive_seed(ctx.seed, *i as u64))?;
        let violations = validate_patchset(w, h, &patches);
        if !violations.is_empty() {
            return Err(Error::Placement(format!("validator rejected patches: {violations:?}")));
        }
        Ok(patches.into_iter().map(|p| PatchEntry { scale: p.scale, rect: p.rect, mos: None }).collect())
    });
    let mut failed = 0;
    for (e, r) in m.entries.iter_mut().zip(results) {
        match r {
            Ok(p) => e.patches = Some(p),
            Err(err) => {
                failed += 1;
                e.patches = None;
                eprintln!("error: {}: {err}", e.id);
            }
        }
    }
    m.seed = Some(ctx.seed);
    let out_dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    for e in &mut m.entries {
        e.image_path = relative_to(&resolve(&base, e), &out_dir);
    }
    m.save(out)?;
    println!("crop: {} entries, {failed} failed", m.entries.len());
    Ok(Outcome::from_failures(failed))
}

fn resolve(base: &Path, e: &Entry) -> PathBuf {
    if e.image_path.is_absolute() {
        e.image_path.clone()
    } else {
        base.join(&e.image_path)
    }
}

/// Synthetic study description for `study --simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub contents: usize,
    pub raters: usize,
    pub noise_sigma: f64,
    pub gain: [f64; 2],
    pub bias: [f64; 2],
    pub constant_spammers: usize,
    pub random_spammers: usize,
    pub spam_value: f64,
    pub hit_size: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            contents: 50,
            raters: 35,
            noise_sigma: 5.0,
            gain: [0.5, 2.0],
            bias: [-20.0, 20.0],
            constant_spammers: 0,
            random_spammers: 0,
            spam_value: 50.0,
            hit_size: None,
        }
    }
}

impl SimulationConfig {
    /// Ground truth (contents `c000..` with MOS uniform in [10, 90]) and
    /// the simulated sessions.
    pub fn run(&self, hit_size: usize, seed: u64) -> Result<(MosTable, Vec<SubjectSession<f64>>)> {
        if self.gain[0] > self.gain[1] || self.bias[0] > self.bias[1] || self.gain[0] <= 0.0 {
            return Err(Error::Config("gain and bias ranges must be ordered, gains positive".into()));
        }
        let mut rng = substream(seed, 1);
        let truth = MosTable::from_scores((0..self.contents).map(|i| (format!("c{i:03}"), rng.random_range(10.0..90.0))))?;
        let mut rng = substream(seed, 2);
        let mut models: Vec<RaterModel> = (0..self.raters)
            .map(|_| RaterModel {
                gain: rng.random_range(self.gain[0]..=self.gain[1]),
                bias: rng.random_range(self.bias[0]..=self.bias[1]),
                ..RaterModel::faithful(self.noise_sigma)
            })
            .collect();
        models.extend((0..self.constant_spammers).map(|_| RaterModel::spammer(SpamMode::Constant(self.spam_value))));
        models.extend((0..self.random_spammers).map(|_| RaterModel::spammer(SpamMode::Random)));
        let hit = self.hit_size.unwrap_or_else(|| hit_size.min(self.contents + 10));
        let sessions = simulate_raters(&truth, &models, hit, derive_seed(seed, 3))?;
        Ok((truth, sessions))
    }
}

#[derive(Clone, Debug)]
pub enum StudyInput {
    Ratings(PathBuf),
    Simulate(PathBuf),
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyReport {
    pub schema_version: u32,
    pub seed: u64,
    pub subjects: usize,
    pub contents: usize,
    pub rejection: RejectionReport,
    pub split_lcc: Option<f64>,
    pub truth_srcc: Option<f64>,
}

/// Rejection, MOS and consistency for a ratings table or a simulated study.
pub fn cmd_study(ctx: &Context, input: &StudyInput, out: &Path, report_path: Option<&Path>, ratings_out: Option<&Path>) -> Result<Outcome> {
    let (sessions, truth) = match input {
        StudyInput::Ratings(p) => {
            let records = read_ratings_csv::<f64, _>(File::open(p)?)?;
            (sessions_from_records(&records, 1.0), None)
        }
        StudyInput::Simulate(p) => {
            let cfg: SimulationConfig = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            let (truth, sessions) = cfg.run(ctx.settings.hit_size, ctx.seed)?;
            (sessions, Some(truth))
        }
    };
    let records: Vec<RatingRecord<f64>> = sessions.iter().flat_map(|s| s.records.iter().cloned()).collect();
    if let Some(p) = ratings_out {
        write_ratings_csv(create(p)?, &records, Some(&ctx.preamble()))?;
    }
    let rejection = assess_subjects(&sessions, &ctx.settings.policy)?;
    let mos = compute_mos(&records, &rejection.accepted)?;
    write_mos_csv(create(out)?, &mos, Some(&ctx.preamble()))?;
    let split_lcc = match inter_subject_consistency(&records, &rejection.accepted, ctx.settings.consistency_splits, ctx.seed) {
        Ok(v) => Some(v),
        Err(e) => {
            eprintln!("warning: consistency not computed: {e}");
            None
        }
    };
    let truth_srcc = match &truth {
        Some(t) => {
            let (a, b) = mos.paired(t);
            Some(srcc(&a, &b)?)
        }
        None => None,
    };
    let subjects = rejection.accepted.len() + rejection.rejected.len();
    println!("study: {} subjects, {} accepted, {} rejected", subjects, rejection.accepted.len(), rejection.rejected.len());
    println!("study: {} contents scored", mos.len());
    match split_lcc {
        Some(v) => println!("study: mean split LCC {v:.4} over {} splits", ctx.settings.consistency_splits),
        None => println!("study: mean split LCC undefined"),
    }
    if let Some(v) = truth_srcc {
        println!("study: SRCC vs ground truth {v:.4}");
    }
    if let Some(p) = report_path {
        let report = StudyReport {
            schema_version: SCHEMA_VERSION,
            seed: ctx.seed,
            subjects,
            contents: mos.len(),
            rejection,
            split_lcc,
            truth_srcc,
        };
        std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(Outcome::Success)
}

/// Fills missing picture and patch MOS from a study table. Patch `k` of
/// entry `id` is looked up as `id#k`.
pub fn attach_mos(m: &mut Manifest, table: &MosTable) {
    for e in &mut m.entries {
        if e.mos.is_none() {
            e.mos = table.mos(&e.id);
        }
        let ids: Vec<String> = (0..e.patches.as_ref().map_or(0, Vec::len)).map(|k| e.patch_id(k)).collect();
        for (p, id) in e.patches.iter_mut().flatten().zip(ids) {
            if p.mos.is_none() {
                p.mos = table.mos(&id);
            }
        }
    }
}

fn load_manifest_with_mos(manifest: &Path, mos: Option<&Path>) -> Result<Manifest> {
    let mut m = Manifest::load(manifest)?;
    if let Some(p) = mos {
        attach_mos(&mut m, &read_mos_csv(File::open(p)?)?);
    }
    Ok(m)
}

fn training_sample(m: &Manifest, e: &Entry, kind: ModelKind, pad_side: usize, d: usize) -> Result<TrainSample<f64>> {
    let mos = e.mos.ok_or_else(|| Error::Validation(format!("entry {} has no MOS", e.id)))?;
    let img = load_image::<f64>(m.resolve(e))?;
    let (image, content) = prepare_picture(&img, pad_side, d)?;
    let (patches, patch_mos) = if kind.uses_patches() {
        let ps = e
            .patches
            .as_ref()
            .ok_or_else(|| Error::Validation(format!("entry {} has no patches", e.id)))?;
        let mut rects = Vec::new();
        let mut scores = Vec::new();
        for p in ps {
            rects.push(p.rect.translate(content.left, content.top));
            scores.push(p.mos.ok_or_else(|| Error::Validation(format!("entry {}: patch without MOS", e.id)))?);
        }
        (rects, scores)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(TrainSample { image, patches, mos, patch_mos })
}

/// Trains a model on every manifest entry and writes a checkpoint.
pub fn cmd_train(ctx: &Context, manifest: &Path, kind: Option<ModelKind>, mos: Option<&Path>, out: &Path, loss_curve: Option<&Path>) -> Result<Outcome> {
    let m = load_manifest_with_mos(manifest, mos)?;
    let mut model_cfg = ctx.settings.model.clone();
    if let Some(k) = kind {
        model_cfg.kind = k;
    }
    let mut cfg = ctx.settings.train.clone();
    cfg.seed = ctx.seed;
    let d = model_cfg.backbone.downsampling();
    let samples: Vec<TrainSample<f64>> = parallel_map(&m.entries, ctx.jobs, |e| training_sample(&m, e, model_cfg.kind, cfg.pad_side, d))
        .into_iter()
        .collect::<Result<_>>()?;
    let (model, curve) = train(&model_cfg, &samples, &cfg)?;
    Checkpoint::from_model(&model, &cfg).save(out)?;
    if let Some(p) = loss_curve {
        write_loss_curve(create(p)?, &curve, ctx.seed)?;
    }
    let last = curve.last().map_or(f64::NAN, |p| p.mse);
    println!("train: {} model, {} samples, {} steps, final batch MSE {last:.4}", model_cfg.kind, samples.len(), curve.len());
    Ok(Outcome::Success)
}

/// Loads a checkpoint and rejects explicitly configured model settings
/// that disagree with it.
fn load_checkpoint(ctx: &Context, path: &Path) -> Result<(QualityModel<f64>, Checkpoint)> {
    let ck = Checkpoint::load(path)?;
    let model_keys = [
        "model",
        "head_hidden",
        "patches",
        "score_center",
        "score_scale",
        "stem_channels",
        "stem_stride",
        "widths",
        "blocks_per_stage",
        "strides",
    ];
    if model_keys.iter().any(|k| ctx.settings.is_explicit(k)) && ctx.settings.model != ck.model {
        return Err(Error::Version("configured model settings differ from the checkpoint".into()));
    }
    if ctx.settings.is_explicit("pad_side") && ctx.settings.train.pad_side != ck.train.pad_side {
        return Err(Error::Version("configured pad_side differs from the checkpoint".into()));
    }
    Ok((ck.to_model()?, ck))
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub seed: u64,
    pub items: usize,
    pub srcc: Option<f64>,
    pub lcc: Option<f64>,
    pub predictions: BTreeMap<String, f64>,
}

/// SRCC and LCC of picture predictions against manifest MOS.
pub fn cmd_eval(ctx: &Context, checkpoint: &Path, manifest: &Path, mos: Option<&Path>, out: Option<&Path>) -> Result<Outcome> {
    let (model, ck) = load_checkpoint(ctx, checkpoint)?;
    let m = load_manifest_with_mos(manifest, mos)?;
    let targets: Vec<f64> = m
        .entries
        .iter()
        .map(|e| e.mos.ok_or_else(|| Error::Validation(format!("entry {} has no MOS", e.id))))
        .collect::<Result<_>>()?;
    let pad = ck.train.pad_side;
    let preds: Vec<f64> = parallel_map(&m.entries, ctx.jobs, |e| -> Result<f64> {
        let img: ImageBuf<f64> = load_image(m.resolve(e))?;
        let rects: Option<Vec<Rect>> = e.patches.as_ref().map(|ps| ps.iter().map(|p| p.rect).collect());
        let rects = rects.filter(|r| r.len() == model.config.patches);
        Ok(model.predict(&img, pad, rects.as_deref())?.picture)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let result = evaluate_predictions(&preds, &targets);
    let (srcc_v, lcc_v, outcome) = match &result {
        Ok(e) => {
            println!("SRCC {:.3}  LCC {:.3}  ({} items)", e.srcc, e.lcc, preds.len());
            (Some(e.srcc), Some(e.lcc), Outcome::Success)
        }
        Err(err) => {
            println!("SRCC undefined  LCC undefined  ({err})");
            (None, None, Outcome::Partial)
        }
    };
    if let Some(p) = out {
        let report = EvalReport {
            schema_version: SCHEMA_VERSION,
            seed: ck.seed,
            items: preds.len(),
            srcc: srcc_v,
            lcc: lcc_v,
            predictions: m.entries.iter().map(|e| e.id.clone()).zip(preds).collect(),
        };
        std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(outcome)
}

/// Block quality map of one picture rendered as a magma overlay.
pub fn cmd_map(ctx: &Context, checkpoint: &Path, image: &Path, out: &Path, csv_out: Option<&Path>, alpha: Option<f64>, grid: Option<usize>) -> Result<Outcome> {
    let (model, ck) = load_checkpoint(ctx, checkpoint)?;
    let img: ImageBuf<f64> = load_image(image)?;
    let n = grid.unwrap_or(ctx.settings.grid);
    let alpha = alpha.unwrap_or(ctx.settings.alpha);
    let map = predict_map(&model, &img, n, ck.train.pad_side)?;
    let rendered = render_map(&img, &map, alpha)?;
    save_png_tagged(&rendered, out, ck.seed)?;
    if let Some(p) = csv_out {
        map.write_csv(create(p)?, Some(ck.seed))?;
    }
    let mean = map.block_scores.iter().sum::<f64>() / map.block_scores.len() as f64;
    println!("map: {n}x{n} blocks, mean block score {mean:.2}");
    Ok(Outcome::Success)
}
