//! Shared fixtures and naive reference implementations for integration tests.
#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use rds_bench::eval::MemoryMasks;
use rds_bench::mask_io::TransportedMask;
use rds_bench::predictors::synth::{generate, SynthConfig, SynthDataset};
use rds_bench::{BinaryMask, ProbMask, PredictionRecord, Templates, VqaSegSample};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mask(rng: &mut impl Rng, max_w: u32, max_h: u32) -> BinaryMask {
    let w = rng.gen_range(1..=max_w);
    let h = rng.gen_range(1..=max_h);
    // Mix sparse, dense and blocky masks so long runs and empty/full masks occur.
    let density = [0.0, 0.02, 0.5, 0.98, 1.0][rng.gen_range(0..5)];
    if rng.gen_bool(0.3) {
        let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
        let (x1, y1) = (rng.gen_range(x0..w), rng.gen_range(y0..h));
        return BinaryMask::from_fn(w, h, |x, y| x >= x0 && x <= x1 && y >= y0 && y <= y1).unwrap();
    }
    let bits = (0..w * h).map(|_| rng.gen_bool(density)).collect();
    BinaryMask::new(w, h, bits).unwrap()
}

pub fn random_mask_like(rng: &mut impl Rng, w: u32, h: u32) -> BinaryMask {
    let density = rng.gen_range(0.0..=1.0);
    BinaryMask::new(w, h, (0..w * h).map(|_| rng.gen_bool(density)).collect()).unwrap()
}

pub fn random_prob(rng: &mut impl Rng, w: u32, h: u32) -> ProbMask {
    let values = (0..w * h)
        .map(|_| match rng.gen_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..=1.0),
        })
        .collect();
    ProbMask::new(w, h, values).unwrap()
}

// Naive oracles: plain loops over (x, y), left-to-right summation.

pub fn naive_dice(p: &BinaryMask, g: &BinaryMask) -> f64 {
    let (mut np, mut ng, mut ni) = (0u64, 0u64, 0u64);
    for y in 0..p.height() {
        for x in 0..p.width() {
            let a = p.get(x, y);
            let b = g.get(x, y);
            np += a as u64;
            ng += b as u64;
            ni += (a && b) as u64;
        }
    }
    if np + ng == 0 {
        1.0
    } else {
        (2 * ni) as f64 / (np + ng) as f64
    }
}

pub fn naive_bce(p: &ProbMask, g: &BinaryMask) -> f64 {
    let eps = 1e-7;
    let mut acc = 0.0;
    for (i, &v) in p.values().iter().enumerate() {
        let q = v.max(eps).min(1.0 - eps);
        acc += if g.bits()[i] { -q.ln() } else { -(1.0 - q).ln() };
    }
    acc / p.values().len() as f64
}

pub fn naive_soft_dice_loss(p: &ProbMask, g: &BinaryMask) -> f64 {
    let s = 1e-6;
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for (i, &v) in p.values().iter().enumerate() {
        let m = if g.bits()[i] { 1.0 } else { 0.0 };
        inter += v * m;
        sp += v;
        sg += m;
    }
    1.0 - (2.0 * inter + s) / (sp + sg + s)
}

pub fn naive_prf(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = div(tp, tp + fp);
    let r = div(tp, tp + fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// F1 of predictions against an all-ones truth vector, from confusion counts.
pub fn naive_diag_f1(v: &[u8]) -> f64 {
    let tp = v.iter().filter(|&&x| x == 1).count() as u64;
    let fn_ = v.len() as u64 - tp;
    naive_prf(tp, 0, fn_).2
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn synth(n: usize, seed: u64) -> SynthDataset {
    generate(&SynthConfig {
        n_samples: n,
        width: 24,
        height: 20,
        seed,
        modalities: rds_bench::Modality::ALL.to_vec(),
        ..Default::default()
    })
    .unwrap()
}

pub fn samples_of(ds: &SynthDataset) -> Vec<VqaSegSample> {
    ds.manifest().vqaseg_samples(&Templates::default()).unwrap()
}

/// Oracle predictions built by hand, independent of the predictor module.
pub fn hand_oracle(samples: &[VqaSegSample], masks: &MemoryMasks) -> Vec<PredictionRecord> {
    samples
        .iter()
        .map(|s| {
            let Some(dx) = &s.gt_diagnosis else {
                return PredictionRecord {
                    sample_id: s.id.clone(),
                    answer: "1. No.".into(),
                    masks: vec![],
                };
            };
            let targets: Vec<String> = s
                .gt_targets
                .iter()
                .enumerate()
                .map(|(i, t)| format!("{} <seg{i:03}>", t.name))
                .collect();
            PredictionRecord {
                sample_id: s.id.clone(),
                answer: format!(
                    "1. Yes. 2. There is {}. 3. Here is the mask for {}.",
                    dx.label,
                    targets.join(" and ")
                ),
                masks: s
                    .gt_targets
                    .iter()
                    .enumerate()
                    .map(|(i, t)| TransportedMask::encode(format!("seg{i:03}"), &masks.0[&t.mask_path]))
                    .collect(),
            }
        })
        .collect()
}

pub fn write_jsonl(path: &Path, records: &[PredictionRecord]) {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).unwrap());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}
