//! Acceptance gate. Runs every primary criterion, prints one PASS/FAIL line
//! per criterion and exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use patchq::imgcore::{crop, load_image, to_luma, ImageBuf};
use patchq::neuralq::{
    dataset_mse, grad_check_kind, roi_pool, toy_objective, train, BackboneConfig, ModelConfig, ModelKind,
    QualityModel, Tensor, TrainConfig, TrainSample, ROI_GRID,
};
use patchq::nssiqa::{ggd_fit, niqe_fit, niqe_score, NIQE_PATCH};
use patchq::patcher::{propose_patches, validate_patchset, PATCH_SCALES};
use patchq::psychlab::{
    assess_subjects, average_ranks, compute_mos, inter_subject_consistency, lcc, srcc, znormalize, RatingRecord,
    RejectionPolicy, CONSISTENCY_SPLITS, GOLDS_PER_HIT, HIT_SIZES, REPEATS_PER_HIT,
};
use patchq::qmap::{predict_map, render_map, DEFAULT_ALPHA, DEFAULT_GRID};
use patchq::rng::seeded;
use patchq::sampler::{Histogram, SamplingProblem, TargetSet};
use patchq::ugcfeat::FeatureVector;
use patchq::Rect;
use patchq_cli::commands::SimulationConfig;
use patchq_cli::pngio::save_png_tagged;
use patchq_cli::Settings;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

type Verdict = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Gate {
    failures: usize,
}

impl Gate {
    fn run(&mut self, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let timing = match limit {
            Some(l) => format!("{:.2}s, limit {}s", elapsed.as_secs_f64(), l.as_secs()),
            None => format!("{:.2}s", elapsed.as_secs_f64()),
        };
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !pass {
            self.failures += 1;
        }
        println!("{} {name}: {detail} ({timing})", if pass { "PASS" } else { "FAIL" });
    }
}

// roi_pool --------------------------------------------------------------

/// Brute-force reference: maps the rect with float floor/ceil, splits the
/// window at floor(k * extent / 2) and takes each cell's max by scanning
/// the whole map.
fn roi_oracle(map: &[f64], c: usize, h: usize, w: usize, d: usize, roi: Rect) -> Vec<f64> {
    let df = d as f64;
    let x0 = (roi.left as f64 / df).floor() as usize;
    let y0 = (roi.top as f64 / df).floor() as usize;
    let x1 = ((roi.right as f64 / df).ceil() as usize).min(w).max(x0 + 1);
    let y1 = ((roi.bottom as f64 / df).ceil() as usize).min(h).max(y0 + 1);
    let bounds = |a: usize, b: usize, k: usize| {
        let lo = a + (k * (b - a)) / 2;
        let hi = (a + ((k + 1) * (b - a)) / 2).max(lo + 1);
        (lo, hi)
    };
    let mut out = Vec::new();
    for ch in 0..c {
        for cy in 0..2 {
            for cx in 0..2 {
                let (ya, yb) = bounds(y0, y1, cy);
                let (xa, xb) = bounds(x0, x1, cx);
                let mut best = f64::NEG_INFINITY;
                for y in 0..h {
                    for x in 0..w {
                        if (ya..yb).contains(&y) && (xa..xb).contains(&x) {
                            best = best.max(map[(ch * h + y) * w + x]);
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    out
}

fn roi_pool_equivalence() -> Verdict {
    let mut rng = seeded(101);
    let mut exact = 0;
    for _ in 0..100 {
        let (c, h, w) = (rng.random_range(1..5), rng.random_range(1..9), rng.random_range(1..9));
        let d = 1usize << rng.random_range(0..4);
        let feat = Tensor::randn(&[c, h, w], 1.0, &mut rng);
        let (iw, ih) = (w * d, h * d);
        let left = rng.random_range(0..iw);
        let top = rng.random_range(0..ih);
        let roi = Rect::new(left, top, rng.random_range(left + 1..=iw), rng.random_range(top + 1..=ih)).unwrap();
        let got = roi_pool(&feat, roi, (iw, ih)).map_err(|e| e.to_string())?.values;
        if got == roi_oracle(feat.values(), c, h, w, d, roi) {
            exact += 1;
        }
    }
    ensure(exact == 100, format!("{exact}/100 random cases equal the brute-force oracle exactly"))
}

// gradients -------------------------------------------------------------

fn gradient_verification() -> Verdict {
    let params = toy_objective(ModelKind::Feedback, 0).unwrap().model.param_count();
    let err = grad_check_kind(ModelKind::Feedback, 1e-4, 0).map_err(|e| e.to_string())?;
    // Other seeds: a finite-difference step can straddle a ReLU or max-pool
    // kink. Such seeds must agree once the step is shrunk.
    let mut kinked = Vec::new();
    for seed in 1..10 {
        if grad_check_kind(ModelKind::Feedback, 1e-4, seed).map_err(|e| e.to_string())? >= 1e-3 {
            let fine = grad_check_kind(ModelKind::Feedback, 1e-6, seed).map_err(|e| e.to_string())?;
            if fine >= 1e-3 {
                return Err(format!("seed {seed} disagrees even at eps 1e-6 ({fine:.2e})"));
            }
            kinked.push(seed);
        }
    }
    ensure(
        err < 1e-3 && params <= 5000,
        format!(
            "Feedback toy model ({params} params), eps 1e-4, max relative error {err:.2e}; \
             seeds 1-9 agree except kink crossings {kinked:?}, which agree at eps 1e-6"
        ),
    )
}

// overfit ---------------------------------------------------------------

fn luma_mean(luma: &ImageBuf<f64>, r: Rect) -> f64 {
    let c = crop(luma, r).unwrap();
    100.0 * c.samples().iter().sum::<f64>() / c.samples().len() as f64
}

/// Noisy brightness ramps; picture and patch MOS are 100 × mean luma.
fn ramp_dataset(n: usize, side: usize, seed: u64) -> Vec<TrainSample<f64>> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|i| {
            let b: f64 = rng.random_range(0.25..0.75);
            let g: f64 = rng.random_range(-0.4..0.4);
            let last = (side - 1) as f64;
            let image = ImageBuf::from_fn(side, side, 3, |x, _, _| b + g * (x as f64 / last - 0.5) + rng.random_range(-0.05..0.05)).unwrap();
            let luma = to_luma(&image);
            let patches: Vec<Rect> = propose_patches(side, side, i as u64).unwrap().iter().map(|p| p.rect).collect();
            let patch_mos = patches.iter().map(|&r| luma_mean(&luma, r)).collect();
            TrainSample { mos: luma_mean(&luma, Rect::full(side, side)), image, patches, patch_mos }
        })
        .collect()
}

fn overfit_check() -> Verdict {
    let data = ramp_dataset(32, 64, 42);
    let mut mc = ModelConfig::new(ModelKind::Feedback);
    mc.backbone = BackboneConfig {
        in_channels: 3,
        stem_channels: 8,
        stem_stride: 2,
        widths: vec![8, 16, 16],
        blocks_per_stage: vec![1, 1, 1],
        strides: vec![1, 2, 2],
    };
    mc.head_hidden = 32;
    let cfg = TrainConfig { batch_size: 8, epochs: 125, lr_backbone: 5e-4, lr_head: 2e-3, pad_side: 64, seed: 1, ..Default::default() };
    let (model, curve) = train(&mc, &data, &cfg).map_err(|e| e.to_string())?;
    let mse = dataset_mse(&model, &data).map_err(|e| e.to_string())?;
    ensure(
        mse < 1.0 && curve.len() <= 500,
        format!("Feedback on 32 pictures 64x64 with 3 patches: train MSE {mse:.3} after {} steps", curve.len()),
    )
}

// weight sharing ----------------------------------------------------------

fn weight_sharing() -> Verdict {
    let mut identical = 0;
    for seed in 0..20 {
        let model = QualityModel::<f64>::seeded(&ModelConfig::new(ModelKind::RoiPool), seed).unwrap();
        let x = Tensor::randn(&[3, 64, 64], 0.3, &mut seeded(500 + seed));
        let s = model.forward(&x, &[Rect::full(64, 64)]).map_err(|e| e.to_string())?;
        if s.patches[0].to_bits() == s.picture.to_bits() {
            identical += 1;
        }
    }
    ensure(identical == 20, format!("{identical}/20 initializations give bit-identical whole-picture roi and picture scores"))
}

// correlations ------------------------------------------------------------

fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// rank_i = #(x_j < x_i) + (#(x_j == x_i) + 1) / 2
fn counting_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Average over every sorting permutation of the position each item lands in.
fn enumerated_ranks(x: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; x.len()];
    let mut count = 0.0;
    for p in permutations(x.len()) {
        if p.windows(2).all(|w| x[w[0]] <= x[w[1]]) {
            for (pos, &i) in p.iter().enumerate() {
                sums[i] += (pos + 1) as f64;
            }
            count += 1.0;
        }
    }
    sums.iter().map(|s| s / count).collect()
}

fn correlation_oracles() -> Verdict {
    let mut rng = seeded(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(3..60);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Mix of correlated, tied and independent partners.
        let y: Vec<f64> = match rng.random_range(0..3) {
            0 => x.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect(),
            1 => (0..n).map(|_| rng.random_range(0..5) as f64).collect(),
            _ => (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        if y.iter().all(|&v| v == y[0]) {
            continue;
        }
        worst = worst.max((lcc(&x, &y).unwrap() - pearson_oracle(&x, &y)).abs());
        let s = pearson_oracle(&counting_ranks(&x), &counting_ranks(&y));
        worst = worst.max((srcc(&x, &y).unwrap() - s).abs());
    }
    let mut patterns = 0;
    let mut tie_errors = 0;
    for code in 0..256usize {
        let x: Vec<f64> = (0..4).map(|i| ((code >> (2 * i)) & 3) as f64).collect();
        patterns += 1;
        if average_ranks(&x) != enumerated_ranks(&x) {
            tie_errors += 1;
        }
        let y = [2.0, 0.0, 3.0, 1.0];
        if x.iter().any(|&v| v != x[0]) {
            let r = srcc(&x, &y).unwrap();
            let o = pearson_oracle(&enumerated_ranks(&x), &enumerated_ranks(&y));
            worst = worst.max((r - o).abs());
        }
    }
    ensure(
        worst <= 1e-12 && tie_errors == 0,
        format!("max deviation {worst:.1e} on 1000 random pairs; {patterns} 4-element tie patterns, {tie_errors} rank mismatches"),
    )
}

// patches -----------------------------------------------------------------

fn patch_constraints() -> Verdict {
    let sizes = [(640, 480), (480, 640), (1024, 768), (100, 100), (37, 53)];
    let mut violations = 0;
    let mut area_errors = 0;
    for &(w, h) in &sizes {
        for seed in 0..10_000u64 {
            let p = propose_patches(w, h, seed).map_err(|e| format!("{w}x{h} seed {seed}: {e}"))?;
            violations += validate_patchset(w, h, &p).len();
            for ps in &p {
                let (fw, fh) = (ps.scale * w as f64, ps.scale * h as f64);
                let exact = ps.scale * ps.scale * (w * h) as f64;
                // Rounding each side by at most half a pixel.
                let slack = 0.5 * (fw + fh) + 0.25;
                if (ps.rect.area() as f64 - exact).abs() > slack + 1e-9 {
                    area_errors += 1;
                }
            }
        }
    }
    let fractions: Vec<String> = PATCH_SCALES.iter().map(|s| format!("{:.0}%", 100.0 * s * s)).collect();
    ensure(
        violations == 0 && area_errors == 0,
        format!(
            "50000 runs over 5 sizes: {violations} violations, {area_errors} areas off {} by more than rounding",
            fractions.join("/")
        ),
    )
}

// study -------------------------------------------------------------------

fn study_recovery() -> Verdict {
    let policy = RejectionPolicy::default();
    let mut worst_srcc = f64::INFINITY;
    let mut spam_kept = 0;
    for seed in 0..5 {
        let cfg = SimulationConfig { constant_spammers: 5, ..SimulationConfig::default() };
        let (truth, sessions) = cfg.run(HIT_SIZES[0], seed).map_err(|e| e.to_string())?;
        let records: Vec<RatingRecord<f64>> = sessions.iter().flat_map(|s| s.records.clone()).collect();
        let report = assess_subjects(&sessions, &policy).map_err(|e| e.to_string())?;
        spam_kept += (35..40).filter(|i| report.accepted.contains(&format!("sim-{i:04}"))).count();
        let mos = compute_mos(&records, &report.accepted).map_err(|e| e.to_string())?;
        let (a, b) = mos.paired(&truth);
        worst_srcc = worst_srcc.min(srcc(&a, &b).unwrap());
    }
    let clean = SimulationConfig { noise_sigma: 0.0, gain: [0.5, 1.1], bias: [-4.0, 4.0], ..SimulationConfig::default() };
    let (_, sessions) = clean.run(HIT_SIZES[0], 9).map_err(|e| e.to_string())?;
    let records: Vec<RatingRecord<f64>> = sessions.iter().flat_map(|s| s.records.clone()).collect();
    let report = assess_subjects(&sessions, &policy).map_err(|e| e.to_string())?;
    let split = inter_subject_consistency(&records, &report.accepted, CONSISTENCY_SPLITS, 9).map_err(|e| e.to_string())?;
    ensure(
        worst_srcc >= 0.95 && spam_kept == 0 && (split - 1.0).abs() <= 1e-9,
        format!(
            "50 contents x 35 raters (sigma 5, gain 0.5-2, bias +-20): min SRCC {worst_srcc:.4} over 5 seeds; \
             {spam_kept} of 25 constant spammers accepted; noise-free split LCC {split:.12} over {CONSISTENCY_SPLITS} splits"
        ),
    )
}

fn z_affine_invariance() -> Verdict {
    let mut rng = seeded(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..80);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
        let (a, b) = (rng.random_range(0.01..10.0), rng.random_range(-100.0..100.0));
        let zx = znormalize(&x).unwrap();
        let zy = znormalize(&x.iter().map(|v| a * v + b).collect::<Vec<_>>()).unwrap();
        worst = zx.iter().zip(&zy).map(|(p, q)| (p - q).abs()).fold(worst, f64::max);
    }
    ensure(worst <= 1e-12, format!("max |z(ax+b) - z(x)| = {worst:.1e} over 100 random cases"))
}

// sampler -----------------------------------------------------------------

fn random_instance(rng: &mut patchq::rng::Rng) -> SamplingProblem<f64> {
    let candidates: Vec<FeatureVector<f64>> = (0..15)
        .map(|_| FeatureVector {
            brightness: rng.random_range(0.0..3.0),
            colorfulness: rng.random_range(0.0..1.0),
            rms_contrast: rng.random_range(0.0..1.0),
            spatial_information: rng.random_range(0.0..2.0),
            pixel_count: rng.random_range(1..1_000_000),
            face_count: rng.random_range(0..4),
        })
        .collect();
    let mut hist = |hi: f64| {
        let mass: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = mass.iter().sum();
        let edges = (0..=4).map(|i| hi * i as f64 / 4.0).collect();
        Histogram::new(edges, mass.iter().map(|m| m / total).collect()).unwrap()
    };
    let histograms = [hist(3.0), hist(1.0), hist(1.0), hist(2.0), hist(1_000_000.0), hist(4.0)];
    SamplingProblem::new(candidates, TargetSet { histograms }, 5).unwrap()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    (k - 1..n)
        .flat_map(|last| {
            combinations(last, k - 1).into_iter().map(move |mut c| {
                c.push(last);
                c
            })
        })
        .collect()
}

fn sampler_quality() -> Verdict {
    let mut rng = seeded(2024);
    let subsets = combinations(15, 5);
    let mut worst_ratio = 0.0f64;
    let mut above_random = 0;
    for inst in 0..20u64 {
        let p = random_instance(&mut rng);
        let sel = patchq::sampler::greedy_sample(&p, inst).map_err(|e| e.to_string())?;
        let j = p.objective(&sel).unwrap();
        let best = subsets.iter().map(|s| p.objective(s).unwrap()).fold(f64::INFINITY, f64::min);
        let idx: Vec<usize> = (0..15).collect();
        let random_mean = (0..100)
            .map(|_| {
                let s: Vec<usize> = idx.choose_multiple(&mut rng, 5).copied().collect();
                p.objective(&s).unwrap()
            })
            .sum::<f64>()
            / 100.0;
        worst_ratio = worst_ratio.max(if best > 0.0 { j / best } else if j == 0.0 { 1.0 } else { f64::INFINITY });
        if j > random_mean {
            above_random += 1;
        }
    }
    ensure(
        worst_ratio <= 1.1 && above_random == 0,
        format!("20 instances (15 choose 5): worst J / optimum {worst_ratio:.4}; {above_random} instances above the random-subset mean"),
    )
}

// NSS ---------------------------------------------------------------------

/// Smooth gradient with soft-edged discs and squares.
fn natural(w: usize, h: usize, seed: u64) -> ImageBuf<f64> {
    let mut rng = seeded(seed);
    let base: f64 = rng.random_range(0.2..0.6);
    let (gx, gy): (f64, f64) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    let shapes: Vec<(f64, f64, f64, f64, bool)> = (0..8)
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(4.0..(w.min(h) as f64 / 3.0)),
                rng.random_range(-0.35..0.35),
                rng.random(),
            )
        })
        .collect();
    ImageBuf::from_fn(w, h, 1, |x, y, _| {
        let (fx, fy) = (x as f64 / w as f64, y as f64 / h as f64);
        let mut v = base + gx * fx + gy * fy + 0.03 * (fx * 17.0).sin() * (fy * 11.0).cos();
        for &(cx, cy, r, amp, disc) in &shapes {
            let d = if disc {
                ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt() - r
            } else {
                (x as f64 - cx).abs().max((y as f64 - cy).abs()) - r
            };
            v += amp / (1.0 + (d / 0.8).exp());
        }
        v
    })
    .unwrap()
}

fn with_noise(img: &ImageBuf<f64>, sigma: f64, seed: u64) -> ImageBuf<f64> {
    let mut rng = seeded(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let samples = img.samples().iter().map(|s| (s + normal.sample(&mut rng)).clamp(0.0, 1.0)).collect();
    ImageBuf::new(img.width(), img.height(), img.channels(), samples).unwrap()
}

fn nss_sanity() -> Verdict {
    let mut rng = seeded(11);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let gauss: Vec<f64> = (0..1_000_000).map(|_| normal.sample(&mut rng)).collect();
    let laplace: Vec<f64> = (0..1_000_000)
        .map(|_| {
            let u: f64 = rng.random_range(-0.5..0.5);
            -u.signum() * (1.0 - 2.0 * u.abs()).ln()
        })
        .collect();
    let ag = ggd_fit(&gauss).map_err(|e| e.to_string())?.alpha;
    let al = ggd_fit(&laplace).map_err(|e| e.to_string())?.alpha;
    let corpus: Vec<ImageBuf<f64>> = (0..20).map(|s| with_noise(&natural(192, 192, s), 0.005, 900 + s)).collect();
    let model = niqe_fit(&corpus, NIQE_PATCH).map_err(|e| e.to_string())?;
    let mut ranked = 0;
    for i in 0..50u64 {
        let clean = natural(192, 192, 1000 + i);
        let noisy = with_noise(&clean, 0.05, 2000 + i);
        if niqe_score(&noisy, &model).unwrap() > niqe_score(&clean, &model).unwrap() {
            ranked += 1;
        }
    }
    ensure(
        (ag - 2.0).abs() <= 0.05 && (al - 1.0).abs() <= 0.05 && ranked >= 45,
        format!("GGD alpha {ag:.4} (gaussian), {al:.4} (laplacian) on 1e6 samples; NIQE ranks noisy above pristine in {ranked}/50 pairs"),
    )
}

// quality maps ------------------------------------------------------------

fn box_blur(img: &ImageBuf<f64>, passes: usize) -> ImageBuf<f64> {
    let (w, h) = (img.width(), img.height());
    let mut cur = img.clone();
    for _ in 0..passes {
        let src = cur.clone();
        cur = ImageBuf::from_fn(w, h, 3, |x, y, c| {
            let mut s = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                    let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                    s += src.get(xx, yy, c);
                }
            }
            s / 9.0
        })
        .unwrap();
    }
    cur
}

fn texture(side: usize, rng: &mut patchq::rng::Rng) -> ImageBuf<f64> {
    let base: f64 = rng.random_range(0.3..0.7);
    ImageBuf::from_fn(side, side, 3, |_, _, _| base + rng.random_range(-0.3..0.3)).unwrap()
}

/// Sharp textures score 80, blurred ones 20; every fourth picture is split
/// into a sharp left part and blurred right part with patch scores
/// interpolated by the sharp fraction of each patch.
fn sharpness_dataset(side: usize, seed: u64, rng: &mut patchq::rng::Rng) -> Vec<TrainSample<f64>> {
    (0..16u64)
        .map(|i| {
            let tex = texture(side, rng);
            let patches: Vec<Rect> = propose_patches(side, side, seed * 100 + i).unwrap().iter().map(|p| p.rect).collect();
            if i % 4 == 3 {
                let split = rng.random_range(side / 4..3 * side / 4);
                let blurred = box_blur(&tex, 3);
                let image = ImageBuf::from_fn(side, side, 3, |x, y, c| if x < split { tex.get(x, y, c) } else { blurred.get(x, y, c) }).unwrap();
                let label = |r: &Rect| 20.0 + 60.0 * (split.clamp(r.left, r.right) - r.left) as f64 / r.width() as f64;
                let patch_mos = patches.iter().map(label).collect();
                return TrainSample { mos: label(&Rect::full(side, side)), image, patches, patch_mos };
            }
            let (image, mos) = if i % 2 == 0 { (tex, 80.0) } else { (box_blur(&tex, 3), 20.0) };
            TrainSample { image, patches, mos, patch_mos: vec![mos; 3] }
        })
        .collect()
}

fn quality_map_direction() -> Verdict {
    let side = 32;
    let mut wins = 0;
    for seed in 0..20u64 {
        let mut rng = seeded(1000 + seed);
        let data = sharpness_dataset(side, seed, &mut rng);
        let cfg = TrainConfig { batch_size: 8, epochs: 100, lr_backbone: 1e-3, lr_head: 3e-3, pad_side: side, seed, ..Default::default() };
        let (model, _) = train(&ModelConfig::toy(ModelKind::Feedback), &data, &cfg).map_err(|e| e.to_string())?;
        let sharp = texture(side, &mut rng);
        let blurred = box_blur(&texture(side, &mut rng), 3);
        let composite = ImageBuf::from_fn(side, side, 3, |x, y, c| if x < side / 2 { sharp.get(x, y, c) } else { blurred.get(x, y, c) }).unwrap();
        let map = predict_map(&model, &composite, 16, side).map_err(|e| e.to_string())?;
        let (mut left, mut right) = (0.0, 0.0);
        for gy in 0..16 {
            for gx in 0..16 {
                if gx < 8 {
                    left += map.score(gx, gy);
                } else {
                    right += map.score(gx, gy);
                }
            }
        }
        if left > right {
            wins += 1;
        }
    }
    // Alpha 0 render through PNG.
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("in.png");
    texture(40, &mut seeded(5)).save_png(&src).unwrap();
    let img: ImageBuf<f64> = load_image(&src).unwrap();
    let model = QualityModel::<f64>::seeded(&ModelConfig::toy(ModelKind::RoiPool), 1).unwrap();
    let map = predict_map(&model, &img, DEFAULT_GRID, 40).unwrap();
    let out = dir.path().join("out.png");
    save_png_tagged(&render_map(&img, &map, 0.0).unwrap(), &out, 0).unwrap();
    let same = decode_png(&src) == decode_png(&out);
    ensure(
        wins >= 19 && same,
        format!("sharp half scored higher in {wins}/20 seeds; alpha 0 render decodes byte-identical: {same}"),
    )
}

fn decode_png(path: &std::path::Path) -> Vec<u8> {
    let mut reader = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(path).unwrap())).read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    buf.truncate(info.buffer_size());
    buf
}

// configuration -----------------------------------------------------------

fn config_echoes() -> Verdict {
    let s = Settings::default();
    let t = &s.train;
    let checks = [
        ("pad_side 640", t.pad_side == 640),
        ("RoIPool output 2x2", ROI_GRID == 2),
        ("map grid 32x32", s.grid == 32 && DEFAULT_GRID == 32),
        ("blend alpha 0.8", s.alpha == 0.8 && DEFAULT_ALPHA == 0.8),
        ("adam beta1 0.9", t.beta1 == 0.9),
        ("adam beta2 0.99", t.beta2 == 0.99),
        ("weight decay 0.01", t.weight_decay == 0.01),
        ("lr backbone 3e-4", t.lr_backbone == 3e-4),
        ("lr head 3e-3", t.lr_head == 3e-3),
        ("batch 120", t.batch_size == 120),
        ("10 epochs", t.epochs == 10),
        ("HIT sizes 60/210", HIT_SIZES == [60, 210] && s.hit_size == 60),
        ("5 repeats", REPEATS_PER_HIT == 5),
        ("5 golds", GOLDS_PER_HIT == 5),
        ("75% acceptance", s.policy.min_acceptance_rate == 0.75),
        ("25 splits", s.consistency_splits == 25 && CONSISTENCY_SPLITS == 25),
    ];
    let bad: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    ensure(bad.is_empty(), format!("{} defaults checked, mismatches: {bad:?}", checks.len()))
}

fn main() {
    // Keep panics inside criteria from printing backtraces between lines.
    std::panic::set_hook(Box::new(|_| {}));
    let secs = |s| Some(Duration::from_secs(s));
    let mut gate = Gate { failures: 0 };
    gate.run("roi_pool oracle equivalence", secs(5), roi_pool_equivalence);
    gate.run("gradient verification", secs(30), gradient_verification);
    gate.run("overfit check", secs(300), overfit_check);
    gate.run("weight-sharing identity", None, weight_sharing);
    gate.run("SRCC/LCC oracles", None, correlation_oracles);
    gate.run("patch constraints", None, patch_constraints);
    gate.run("study pipeline recovery", None, study_recovery);
    gate.run("z-score affine invariance", None, z_affine_invariance);
    gate.run("sampler quality", secs(60), sampler_quality);
    gate.run("NSS sanity", None, nss_sanity);
    gate.run("quality-map direction", None, quality_map_direction);
    gate.run("configuration defaults", None, config_echoes);
    if gate.failures > 0 {
        println!("{} criteria failed", gate.failures);
        std::process::exit(1);
    }
    println!("all 12 criteria passed");
}
