//! Manifest files: one "image-path TAB annotation-path" line per sample,
//! '#' comments and blank lines skipped, relative paths resolved against the
//! manifest's own directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{load_annotation, load_image, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub annotation_path: PathBuf,
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let image = parts.next().unwrap_or("");
        let annotation = parts.next().unwrap_or("");
        if image.is_empty() || annotation.is_empty() || annotation.contains('\t') {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                msg: "expected exactly two tab-separated paths".into(),
            });
        }
        let image_path = base.join(image);
        let id = image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("sample_{}", idx + 1));
        entries.push(ManifestEntry {
            id,
            image_path,
            annotation_path: base.join(annotation),
        });
    }
    Ok(entries)
}

/// Writes a manifest of paths relative to its own directory.
pub fn save_manifest(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let mut text = String::from("# image\tannotation\n");
    for (img, ann) in pairs {
        text.push_str(img);
        text.push('\t');
        text.push_str(ann);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads every manifest entry as a Sample, checking that image and
/// annotation dims agree.
pub fn load_dataset(path: &Path) -> Result<Vec<Sample>> {
    let entries = load_manifest(path)?;
    let mut samples = Vec::with_capacity(entries.len());
    for entry in entries {
        let image = load_image(&entry.image_path)?;
        let truth = load_annotation(&entry.annotation_path)?;
        if (image.h(), image.w()) != (truth.h(), truth.w()) {
            return Err(Error::shape(
                format!("sample {}", entry.id),
                format!("annotation dims {}x{}", image.h(), image.w()),
                format!("{}x{}", truth.h(), truth.w()),
            ));
        }
        samples.push(Sample {
            id: entry.id,
            image,
            truth,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{save_annotation, save_image, Image};
    use crate::loss::GroundTruth;
    use tempfile::tempdir;

    #[test]
    fn manifest_skips_comments_and_blanks() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.txt");
        fs::write(&path, "# header\n\na.pgm\ta.gt.pgm\n  \nb.pgm\tb.gt.pgm\n").unwrap();
        let entries = load_manifest(&path).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].id, "a");
        assert_eq!(entries[0].image_path, dir.path().join("a.pgm"));
        assert_eq!(entries[1].annotation_path, dir.path().join("b.gt.pgm"));
    }

    #[test]
    fn malformed_lines_report_their_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.txt");
        fs::write(&path, "a.pgm\ta.gt.pgm\nno-tab-here\n").unwrap();
        match load_manifest(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn dataset_round_trips_through_manifest() {
        let dir = tempdir().unwrap();
        let img = Image::gray(4, 4, vec![0.5; 16]).unwrap();
        let mut gt = vec![0u8; 16];
        gt[5] = 1;
        let gt = GroundTruth::new(4, 4, gt).unwrap();
        save_image(&dir.path().join("x.pgm"), &img).unwrap();
        save_annotation(&dir.path().join("x.gt.pgm"), &gt).unwrap();
        let mpath = dir.path().join("manifest.txt");
        save_manifest(&mpath, &[("x.pgm".into(), "x.gt.pgm".into())]).unwrap();
        let samples = load_dataset(&mpath).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].id, "x");
        assert_eq!(samples[0].truth.values(), gt.values());
    }

    #[test]
    fn missing_image_is_an_io_error() {
        let dir = tempdir().unwrap();
        let mpath = dir.path().join("manifest.txt");
        fs::write(&mpath, "ghost.pgm\tghost.gt.pgm\n").unwrap();
        match load_dataset(&mpath).unwrap_err() {
            Error::Io { path, .. } => assert!(path.to_string_lossy().contains("ghost.pgm")),
            other => panic!("expected io error, got {:?}", other),
        }
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let dir = tempdir().unwrap();
        save_image(
            &dir.path().join("x.pgm"),
            &Image::gray(4, 4, vec![0.5; 16]).unwrap(),
        )
        .unwrap();
        save_annotation(
            &dir.path().join("x.gt.pgm"),
            &GroundTruth::new(2, 2, vec![0, 1, 0, 1]).unwrap(),
        )
        .unwrap();
        let mpath = dir.path().join("manifest.txt");
        save_manifest(&mpath, &[("x.pgm".into(), "x.gt.pgm".into())]).unwrap();
        assert!(load_dataset(&mpath).is_err());
    }
}
