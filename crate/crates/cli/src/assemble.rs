use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use rds_bench::dataset::{
    compute_label_distribution, render_refseg_sample, render_vqaseg_sample, split_by_volume,
    DatasetManifest, ManifestSamples, VqaSegEntry,
};
use rds_bench::{SourceRecord, Split, Templates, VqaPair};

use crate::Status;

/// A bare list of records, or records plus plain VQA pairs.
#[derive(Deserialize)]
#[serde(untagged)]
enum Sources {
    List(Vec<SourceRecord>),
    Bundle {
        records: Vec<SourceRecord>,
        #[serde(default)]
        vqa: Vec<VqaPair>,
    },
}

struct Rebase {
    from: PathBuf,
    to: PathBuf,
}

impl Rebase {
    fn new(sources: &Path, out: &Path) -> Result<Self> {
        let from = std::path::absolute(sources.parent().unwrap_or(Path::new("")))?;
        Ok(Rebase {
            from,
            to: std::path::absolute(out)?,
        })
    }

    // Source paths are relative to the sources file; manifests need them
    // relative to the output directory.
    fn apply(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        let abs = self.from.join(p);
        pathdiff::diff_paths(&abs, &self.to).unwrap_or(abs)
    }

    fn record(&self, r: &SourceRecord) -> SourceRecord {
        let mut r = r.clone();
        r.image_path = self.apply(&r.image_path);
        for t in &mut r.targets {
            t.mask_path = self.apply(&t.mask_path);
        }
        r
    }
}

fn write(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    std::fs::write(path, manifest.to_json_pretty())
        .with_context(|| format!("writing {}", path.display()))
}

pub fn run(
    sources: &Path,
    out: &Path,
    test_fraction: f64,
    seed: u64,
    templates: &Templates,
) -> Result<Status> {
    let text = std::fs::read_to_string(sources)
        .with_context(|| format!("reading {}", sources.display()))?;
    let (records, vqa) = match serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", sources.display()))?
    {
        Sources::List(r) => (r, Vec::new()),
        Sources::Bundle { records, vqa } => (records, vqa),
    };
    let mut seen = HashSet::new();
    for id in records.iter().map(|r| &r.id).chain(vqa.iter().map(|p| &p.id)) {
        if !seen.insert(id) {
            bail!("duplicate source id `{id}`");
        }
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let rebase = Rebase::new(sources, out)?;

    let mut status = Status::Ok;
    let mut summary = String::new();
    if !records.is_empty() {
        let split = split_by_volume(&records, test_fraction, seed)?;
        for w in &split.warnings {
            eprintln!("warning: {w}");
            status = Status::Warnings;
        }
        let test_ids: HashSet<&str> = split.test.iter().map(|r| r.id.as_str()).collect();
        let split_of = |r: &SourceRecord| {
            if test_ids.contains(r.id.as_str()) {
                Split::Test
            } else {
                Split::Train
            }
        };

        let mut vqaseg = Vec::with_capacity(records.len());
        let mut refseg = Vec::new();
        for r in &records {
            render_vqaseg_sample(r, templates)
                .with_context(|| format!("rendering record `{}`", r.id))?;
            let rebased = rebase.record(r);
            for i in 0..rebased.targets.len() {
                let mut s = render_refseg_sample(&rebased, i, seed, templates)
                    .with_context(|| format!("rendering target {i} of `{}`", r.id))?;
                s.split = Some(split_of(r));
                refseg.push(s);
            }
            vqaseg.push(VqaSegEntry {
                record: rebased,
                split: Some(split_of(r)),
                question: None,
            });
        }
        let vqaseg = DatasetManifest::new(ManifestSamples::VqaSeg(vqaseg));
        let refseg = DatasetManifest::new(ManifestSamples::RefSeg(refseg));
        write(&out.join("vqa_seg.json"), &vqaseg)?;
        write(&out.join("ref_seg.json"), &refseg)?;
        summary.push_str(&format!(
            "VQA-Seg: {} samples, test fraction {:.4} (requested {:.4})\n",
            records.len(),
            split.achieved_fraction,
            test_fraction
        ));
        summary.push_str(&compute_label_distribution(&vqaseg).to_table());
        summary.push_str(&format!("\nRef-Seg: {} samples\n", refseg.samples.len()));
        summary.push_str(&compute_label_distribution(&refseg).to_table());
    }
    if !vqa.is_empty() {
        let pairs: Vec<VqaPair> = vqa
            .into_iter()
            .map(|mut p| {
                p.image_path = p.image_path.map(|i| rebase.apply(&i));
                p
            })
            .collect();
        let manifest = DatasetManifest::new(ManifestSamples::Vqa(pairs));
        write(&out.join("vqa.json"), &manifest)?;
        summary.push_str(&format!("\nVQA: {} pairs\n", manifest.samples.len()));
        summary.push_str(&compute_label_distribution(&manifest).to_table());
    }
    if summary.is_empty() {
        bail!("{} holds no records", sources.display());
    }
    std::fs::write(out.join("stats.txt"), &summary)?;
    print!("{summary}");
    Ok(status)
}
