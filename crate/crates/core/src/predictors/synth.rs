//! Synthetic VQA-Seg datasets for smoke tests and benchmarks of the harness.
//!
//! Organs are ellipses, abnormalities are rectangles clipped to the organ.
//! Output is deterministic in the config.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use image::GrayImage;
use rand::Rng;
use thiserror::Error;

use crate::dataset::{
    DatasetManifest, Finding, ManifestSamples, Modality, SegTarget, SourceRecord, TargetKind,
    VqaSegEntry,
};
use crate::eval::MemoryMasks;
use crate::mask_io::{save_mask, MaskIoError};
use crate::metrics::BinaryMask;
use crate::rng::keyed_rng;

const MIN_SIDE: u32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub positive_fraction: f64,
    pub modalities: Vec<Modality>,
    /// Slices sharing one volume id (CT and MRI only).
    pub slices_per_volume: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 40,
            width: 64,
            height: 64,
            seed: 0,
            positive_fraction: 0.5,
            modalities: vec![Modality::XRay, Modality::Ct],
            slices_per_volume: 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least {needed} samples to cover every modality with both classes, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("canvas must be at least {MIN_SIDE}x{MIN_SIDE}")]
    Canvas,
    #[error("positive fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("no modalities given")]
    NoModalities,
    #[error("slices per volume must be positive")]
    Slices,
    #[error(transparent)]
    Mask(#[from] MaskIoError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("writing {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

struct Anatomy {
    organ: &'static str,
    organ_synonyms: &'static [&'static str],
    findings: &'static [(&'static str, &'static [&'static str])],
}

const XRAY: &[Anatomy] = &[Anatomy {
    organ: "lungs",
    organ_synonyms: &["lung fields"],
    findings: &[
        ("COVID-19", &["COVID 19", "coronavirus infection"]),
        ("non-COVID infection", &["non-COVID pneumonia"]),
    ],
}];

const CT: &[Anatomy] = &[
    Anatomy {
        organ: "liver",
        organ_synonyms: &["hepatic parenchyma"],
        findings: &[("liver tumor", &["liver tumour", "hepatic tumor"])],
    },
    Anatomy {
        organ: "pancreas",
        organ_synonyms: &["pancreatic gland"],
        findings: &[("pancreas tumor", &["pancreatic tumor", "pancreas tumour"])],
    },
];

const MRI: &[Anatomy] = &[Anatomy {
    organ: "brain",
    organ_synonyms: &["cerebrum"],
    findings: &[("brain tumor", &["brain tumour", "intracranial tumor"])],
}];

fn anatomies(m: Modality) -> &'static [Anatomy] {
    match m {
        Modality::XRay => XRAY,
        Modality::Ct => CT,
        Modality::Mri => MRI,
    }
}

/// Records plus their masks, keyed by the relative mask paths the records use.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub records: Vec<SourceRecord>,
    pub masks: MemoryMasks,
    pub width: u32,
    pub height: u32,
}

impl SynthDataset {
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest::new(ManifestSamples::VqaSeg(
            self.records
                .iter()
                .map(|r| VqaSegEntry {
                    record: r.clone(),
                    split: None,
                    question: None,
                })
                .collect(),
        ))
    }

    /// Writes images, masks and `manifest.json` under `dir`; returns the
    /// manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, SynthError> {
        for sub in ["images", "masks"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|source| SynthError::Io {
                path: p.display().to_string(),
                source,
            })?;
        }
        for r in &self.records {
            let mut img = GrayImage::from_pixel(self.width, self.height, image::Luma([40]));
            for t in &r.targets {
                let m = &self.masks.0[&t.mask_path];
                save_mask(m, &dir.join(&t.mask_path))?;
                let level = match t.kind {
                    TargetKind::Organ => 120,
                    TargetKind::Abnormality => 220,
                };
                for (i, &b) in m.bits().iter().enumerate() {
                    if b {
                        let (x, y) = (i as u32 % self.width, i as u32 / self.width);
                        img.put_pixel(x, y, image::Luma([level]));
                    }
                }
            }
            let p = dir.join(&r.image_path);
            img.save(&p).map_err(|source| SynthError::Image {
                path: p.display().to_string(),
                source,
            })?;
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, self.manifest().to_json_pretty()).map_err(|source| {
            SynthError::Io {
                path: path.display().to_string(),
                source,
            }
        })?;
        Ok(path)
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset, SynthError> {
    let k = config.modalities.len();
    if k == 0 {
        return Err(SynthError::NoModalities);
    }
    if config.n_samples < 2 * k {
        return Err(SynthError::TooFewSamples {
            needed: 2 * k,
            got: config.n_samples,
        });
    }
    if config.width < MIN_SIDE || config.height < MIN_SIDE {
        return Err(SynthError::Canvas);
    }
    if !(0.0..=1.0).contains(&config.positive_fraction) {
        return Err(SynthError::Fraction(config.positive_fraction));
    }
    if config.slices_per_volume == 0 {
        return Err(SynthError::Slices);
    }

    let (w, h) = (config.width, config.height);
    let mut seen: HashMap<Modality, usize> = HashMap::new();
    let mut records = Vec::with_capacity(config.n_samples);
    let mut masks = HashMap::new();

    for i in 0..config.n_samples {
        let id = format!("syn-{i:05}");
        let mut rng = keyed_rng("synth", config.seed, &id);
        // The first 2k samples pin one positive and one negative per modality.
        let (modality, positive) = if i < 2 * k {
            (config.modalities[i % k], i < k)
        } else {
            (
                config.modalities[rng.gen_range(0..k)],
                rng.gen::<f64>() < config.positive_fraction,
            )
        };
        let nth = seen.entry(modality).or_default();
        let volume_index = *nth / config.slices_per_volume;
        *nth += 1;
        let volume_id = (modality != Modality::XRay)
            .then(|| format!("{}-vol{volume_index:03}", modality.code().to_lowercase()));

        let choices = anatomies(modality);
        let anatomy = match &volume_id {
            Some(v) => {
                &choices[keyed_rng("synth-volume", config.seed, v).gen_range(0..choices.len())]
            }
            None => &choices[rng.gen_range(0..choices.len())],
        };

        let mut record = SourceRecord {
            id: id.clone(),
            image_path: PathBuf::from(format!("images/{id}.png")),
            modality,
            finding: Finding::Negative,
            targets: Vec::new(),
            volume_id,
        };
        if positive {
            let (label, synonyms) = anatomy.findings[rng.gen_range(0..anatomy.findings.len())];
            let (organ, lesion) = draw_shapes(&mut rng, w, h);
            let organ_path = PathBuf::from(format!("masks/{id}_organ.png"));
            let lesion_path = PathBuf::from(format!("masks/{id}_abn.png"));
            record.finding = Finding::Positive {
                label: label.to_string(),
                synonyms: synonyms.iter().map(|s| s.to_string()).collect(),
            };
            record.targets = vec![
                SegTarget::new(
                    anatomy.organ,
                    anatomy.organ_synonyms.iter().copied(),
                    organ_path.clone(),
                    TargetKind::Organ,
                ),
                SegTarget::new(
                    label,
                    synonyms.iter().copied(),
                    lesion_path.clone(),
                    TargetKind::Abnormality,
                ),
            ];
            masks.insert(organ_path, organ);
            masks.insert(lesion_path, lesion);
        }
        records.push(record);
    }
    Ok(SynthDataset {
        records,
        masks: MemoryMasks(masks),
        width: w,
        height: h,
    })
}

fn draw_shapes(rng: &mut impl Rng, w: u32, h: u32) -> (BinaryMask, BinaryMask) {
    let (wf, hf) = (w as f64, h as f64);
    let rx = wf * rng.gen_range(0.2..0.4);
    let ry = hf * rng.gen_range(0.2..0.4);
    let cx = rng.gen_range(rx..=(wf - rx));
    let cy = rng.gen_range(ry..=(hf - ry));
    let organ = BinaryMask::from_fn(w, h, |x, y| {
        let dx = (x as f64 + 0.5 - cx) / rx;
        let dy = (y as f64 + 0.5 - cy) / ry;
        dx * dx + dy * dy <= 1.0
    })
    .expect("canvas checked");

    // A rectangle with half-sides f*r around a point jittered by at most
    // 0.1*r stays inside the ellipse for f <= 0.6.
    let f = rng.gen_range(0.2..0.6);
    let (ax, ay) = (rx * f, ry * f);
    let lx = cx + rx * rng.gen_range(-0.1..0.1);
    let ly = cy + ry * rng.gen_range(-0.1..0.1);
    let mut lesion = BinaryMask::from_fn(w, h, |x, y| {
        organ.get(x, y)
            && (x as f64 + 0.5 - lx).abs() <= ax
            && (y as f64 + 0.5 - ly).abs() <= ay
    })
    .expect("canvas checked");
    if lesion.is_empty() {
        let (px, py) = (cx.floor() as u32, cy.floor() as u32);
        lesion.set(px.min(w - 1), py.min(h - 1), true);
    }
    let mut organ = organ;
    for (i, &b) in lesion.bits().to_vec().iter().enumerate() {
        if b {
            organ.set(i as u32 % w, i as u32 / w, true);
        }
    }
    (organ, lesion)
}
