//! Seeded dataset generation from a directory of clean images.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::degrade::{degrade, sample_recipe, Degraded, SamplerConfig};
use crate::error::{Error, Result};
use crate::imgcore::io::{read_png, write_png};
use crate::imgcore::rng::stage;
use crate::imgcore::{Image, Rng};

use super::{
    write_annotation, write_manifest, AnnotationRecord, GeneratorConfig, Manifest, ManifestEntry, SamplePaths,
    SkipEntry, Split, ANNOTATION_SCHEMA, MANIFEST_SCHEMA,
};

const SUBDIRS: [&str; 4] = ["clean", "degraded", "stages", "annotations"];

/// The stream an image's recipe and degradation draw from.
pub fn image_rng(master_seed: u64, index: u64) -> Rng {
    Rng::for_image(master_seed, index, stage::RECIPE)
}

/// Samples a recipe for image `index` and applies it, exactly as generation does.
pub fn degrade_indexed(clean: &Image, master_seed: u64, index: u64, sampler: &SamplerConfig) -> Result<Degraded> {
    let rng = image_rng(master_seed, index);
    let recipe = sample_recipe(&rng, sampler)?;
    degrade(clean, &recipe, &rng)
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Indices (into `n` decoded images) assigned to the test split.
fn test_members(n: usize, fraction: f64, master_seed: u64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Rng::new(master_seed, stage::SPLIT);
    for i in (1..n).rev() {
        let j = rng.range_inclusive(0, i as u32) as usize;
        order.swap(i, j);
    }
    let n_test = (n as f64 * fraction).round() as usize;
    let mut test = vec![false; n];
    for &i in &order[..n_test.min(n)] {
        test[i] = true;
    }
    test
}

struct Decoded {
    index: u64,
    source: String,
    image: Image,
}

fn write_sample(root: &Path, item: &Decoded, split: Split, config: &GeneratorConfig, seed: u64) -> Result<ManifestEntry> {
    let id = format!("{:05}", item.index);
    let degraded = degrade_indexed(&item.image, seed, item.index, &config.sampler)?;
    let mut paths = SamplePaths {
        clean: format!("clean/{id}.png"),
        degraded: format!("degraded/{id}.png"),
        stages: Vec::new(),
    };
    write_png(root.join(&paths.clean), &item.image)?;
    write_png(root.join(&paths.degraded), &degraded.image)?;
    if config.snapshots(split) {
        for (k, snap) in degraded.stages.iter().enumerate() {
            let rel = format!("stages/{id}_{k}_{}.png", snap.stage.name());
            write_png(root.join(&rel), &snap.image)?;
            paths.stages.push(rel);
        }
    }
    let annotation = format!("annotations/{id}.json");
    let record = AnnotationRecord {
        schema: ANNOTATION_SCHEMA.into(),
        id: id.clone(),
        index: item.index,
        seed,
        split,
        source: item.source.clone(),
        paths,
        recipe: degraded.recipe,
    };
    write_annotation(root, &annotation, &record)?;
    Ok(ManifestEntry { id, split, annotation })
}

/// Degrades every decodable image in `clean_dir` into `out_root`.
///
/// Undecodable files are listed in the manifest's skip log. Output bytes depend
/// only on the inputs, the config and `master_seed`.
pub fn generate_dataset(clean_dir: &Path, out_root: &Path, config: &GeneratorConfig, master_seed: u64) -> Result<Manifest> {
    config.validate()?;
    let files = sorted_files(clean_dir)?;
    let attempts: Vec<(u64, String, Result<Image>)> = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let source = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            (i as u64, source, read_png(path))
        })
        .collect();
    let mut decoded = Vec::new();
    let mut skipped = Vec::new();
    for (index, source, result) in attempts {
        match result {
            Ok(image) => decoded.push(Decoded { index, source, image }),
            Err(e) if e.is_io() => return Err(e),
            Err(e) => skipped.push(SkipEntry {
                source,
                reason: e.to_string(),
            }),
        }
    }
    if decoded.is_empty() {
        return Err(Error::param(
            "clean",
            format!("no decodable PNG images in {}", clean_dir.display()),
        ));
    }
    for sub in SUBDIRS {
        let dir = out_root.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let test = test_members(decoded.len(), config.test_fraction, master_seed);
    let records = decoded
        .par_iter()
        .zip(test.par_iter())
        .map(|(item, &is_test)| {
            let split = if is_test { Split::Test } else { Split::Train };
            write_sample(out_root, item, split, config, master_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.into(),
        name: config.name.clone(),
        master_seed,
        config_hash: config.hash(),
        config: config.clone(),
        record_count: records.len(),
        records,
        skipped,
    };
    write_manifest(out_root, &manifest)?;
    Ok(manifest)
}
