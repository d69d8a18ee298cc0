//! PSNR/SSIM of restored images against a dataset's clean references.

use std::path::Path;

use rayon::prelude::*;

use crate::error::Result;
use crate::imgcore::io::read_png;
use crate::imgcore::{psnr, ssim};

use super::{read_annotation, Manifest};

pub const TABLE_HEADER: &str = "id\tpsnr_db\tssim";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub id: String,
    /// `(psnr_db, ssim)`, or why the restored image could not be scored.
    pub result: std::result::Result<(f64, f64), String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
    /// Means over scored rows only.
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl EvalTable {
    pub fn is_complete(&self) -> bool {
        self.rows.iter().all(|r| r.result.is_ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &str)> {
        self.rows.iter().filter_map(|r| r.result.as_ref().err().map(|e| (r.id.as_str(), e.as_str())))
    }
}

/// Scores `restored_dir/<id>.png` for every manifest record.
///
/// Missing or undecodable restorations are flagged per row and excluded from
/// the means; unreadable clean references are hard errors.
pub fn evaluate(root: &Path, manifest: &Manifest, restored_dir: &Path) -> Result<EvalTable> {
    let rows = manifest
        .records
        .par_iter()
        .map(|entry| {
            let record = read_annotation(root, &entry.annotation)?;
            let clean = read_png(root.join(&record.paths.clean))?;
            let path = restored_dir.join(format!("{}.png", entry.id));
            let result = if !path.is_file() {
                Err(format!("missing {}", path.display()))
            } else {
                match read_png(&path) {
                    Ok(img) => match (psnr(&img, &clean), ssim(&img, &clean)) {
                        (Ok(p), Ok(s)) => Ok((p, s)),
                        (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
                    },
                    Err(e) => Err(e.to_string()),
                }
            };
            Ok(EvalRow {
                id: entry.id.clone(),
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scored: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.result.clone().ok()).collect();
    let n = scored.len() as f64;
    Ok(EvalTable {
        mean_psnr: scored.iter().map(|s| s.0).sum::<f64>() / n,
        mean_ssim: scored.iter().map(|s| s.1).sum::<f64>() / n,
        rows,
    })
}

/// Tab-separated table with a header and a final `MEAN` row.
pub fn render_table(table: &EvalTable) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for row in &table.rows {
        match &row.result {
            Ok((p, s)) => out.push_str(&format!("{}\t{p:.4}\t{s:.6}\n", row.id)),
            Err(_) => out.push_str(&format!("{}\tmissing\tmissing\n", row.id)),
        }
    }
    out.push_str(&format!("MEAN\t{:.4}\t{:.6}\n", table.mean_psnr, table.mean_ssim));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasetio::{generate_dataset, GeneratorConfig};
    use crate::imgcore::io::write_png;
    use crate::scene::indexed_scene;
    use std::fs;

    fn dataset() -> (tempfile::TempDir, Manifest) {
        let input = tempfile::tempdir().unwrap();
        for i in 0..3 {
            write_png(input.path().join(format!("{i}.png")), &indexed_scene(2, i, 32, 32).unwrap()).unwrap();
        }
        let root = tempfile::tempdir().unwrap();
        let m = generate_dataset(input.path(), root.path(), &GeneratorConfig::default(), 8).unwrap();
        (root, m)
    }

    #[test]
    fn clean_copies_score_perfectly() {
        let (root, m) = dataset();
        let table = evaluate(root.path(), &m, &root.path().join("clean")).unwrap();
        assert!(table.is_complete());
        assert_eq!(table.mean_psnr, 99.0);
        assert_eq!(table.mean_ssim, 1.0);
        let text = render_table(&table);
        assert!(text.starts_with("id\tpsnr_db\tssim\n"));
        assert!(text.ends_with("MEAN\t99.0000\t1.000000\n"));
    }

    #[test]
    fn missing_restorations_are_flagged() {
        let (root, m) = dataset();
        let restored = tempfile::tempdir().unwrap();
        for e in &m.records[1..] {
            fs::copy(
                root.path().join(format!("degraded/{}.png", e.id)),
                restored.path().join(format!("{}.png", e.id)),
            )
            .unwrap();
        }
        let table = evaluate(root.path(), &m, restored.path()).unwrap();
        assert!(!table.is_complete());
        assert_eq!(table.failures().count(), 1);
        assert!(table.mean_psnr < 99.0);
        assert!(render_table(&table).contains("\tmissing\tmissing\n"));
    }
}
