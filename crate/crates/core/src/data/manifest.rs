//! RSNA-style manifest: `patientId,x,y,width,height,Target`, one row per box.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{BoundingBox, DataError, GrayImage, Sample};

pub const MANIFEST_HEADER: [&str; 6] = ["patientId", "x", "y", "width", "height", "Target"];

/// One patient after merging its rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub label: u8,
    pub bbox: Option<BoundingBox>,
}

/// Samples that loaded plus the per-sample failures that did not.
#[derive(Debug, Default)]
pub struct LoadedDataset {
    pub samples: Vec<Sample>,
    pub failures: Vec<DataError>,
}

fn parse_coord(field: &str, line: usize, name: &str) -> Result<i64, DataError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| DataError::Parse { line, message: format!("{name} is not a number: {field:?}") })?;
    if !v.is_finite() {
        return Err(DataError::Parse { line, message: format!("{name} is not finite") });
    }
    Ok(v.round() as i64)
}

/// Parses the manifest, merging multiple boxes per patient into their
/// tight union. Entries keep first-appearance order.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    let header = reader.headers().map_err(|e| DataError::Parse { line: 1, message: e.to_string() })?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != MANIFEST_HEADER {
        return Err(DataError::Parse { line: 1, message: format!("expected header {}", MANIFEST_HEADER.join(",")) });
    }

    let mut entries: Vec<ManifestEntry> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let id = record[0].trim().to_string();
        if id.is_empty() {
            return Err(DataError::Parse { line, message: "empty patientId".into() });
        }
        let label: u8 = match record[5].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(DataError::Parse { line, message: format!("Target must be 0 or 1, got {other:?}") }),
        };
        let coords: Vec<&str> = (1..5).map(|i| record[i].trim()).collect();
        let bbox = if coords.iter().all(|c| c.is_empty()) {
            None
        } else if coords.iter().any(|c| c.is_empty()) {
            return Err(DataError::Parse { line, message: "partially empty box coordinates".into() });
        } else {
            let x = parse_coord(coords[0], line, "x")?;
            let y = parse_coord(coords[1], line, "y")?;
            let w = parse_coord(coords[2], line, "width")?;
            let h = parse_coord(coords[3], line, "height")?;
            Some(BoundingBox::new(x, y, w, h).map_err(|e| DataError::Parse { line, message: e.to_string() })?)
        };
        // Only positive rows carry lesion boxes.
        let bbox = if label == 1 { bbox } else { None };

        match index.get(&id) {
            Some(&i) => {
                let entry = &mut entries[i];
                if entry.label != label {
                    return Err(DataError::Parse { line, message: format!("conflicting Target for {id}") });
                }
                entry.bbox = match (entry.bbox, bbox) {
                    (Some(a), Some(b)) => Some(a.union(&b)),
                    (a, b) => a.or(b),
                };
            }
            None => {
                index.insert(id.clone(), entries.len());
                entries.push(ManifestEntry { id, label, bbox });
            }
        }
    }
    Ok(entries)
}

fn image_path(image_dir: &Path, id: &str) -> Option<PathBuf> {
    ["png", "pgm"].iter().map(|ext| image_dir.join(format!("{id}.{ext}"))).find(|p| p.is_file())
}

/// Reads the manifest and every referenced image. Missing or unreadable
/// images are collected as failures; the remaining samples still load.
pub fn load_manifest(csv_path: &Path, image_dir: &Path) -> Result<LoadedDataset, DataError> {
    let entries = read_manifest(csv_path)?;
    let mut out = LoadedDataset::default();
    for e in entries {
        let Some(path) = image_path(image_dir, &e.id) else {
            out.failures.push(DataError::MissingImage {
                id: e.id.clone(),
                path: image_dir.join(format!("{}.png", e.id)).display().to_string(),
            });
            continue;
        };
        match GrayImage::open(&path) {
            Ok(image) => out.samples.push(Sample { id: e.id, image, label: e.label, bbox: e.bbox }),
            Err(err) => out.failures.push(err),
        }
    }
    Ok(out)
}

/// Writes one row per entry; normals and box-less positives get empty
/// coordinate fields.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), DataError> {
    let io = |e: std::io::Error| DataError::Io(format!("{}: {e}", path.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "{}", MANIFEST_HEADER.join(",")).map_err(io)?;
    for e in entries {
        match e.bbox {
            Some(b) => writeln!(f, "{},{},{},{},{},{}", e.id, b.x, b.y, b.w, b.h, e.label),
            None => writeln!(f, "{},,,,,{}", e.id, e.label),
        }
        .map_err(io)?;
    }
    f.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, format!("patientId,x,y,width,height,Target\n{body}")).unwrap();
        (dir, p)
    }

    #[test]
    fn rows_map_to_entries() {
        let (_d, p) = manifest("p1,10,20,30,40,1\np2,,,,,0\n");
        let e = read_manifest(&p).unwrap();
        assert_eq!(e[0], ManifestEntry { id: "p1".into(), label: 1, bbox: Some(BoundingBox::new(10, 20, 30, 40).unwrap()) });
        assert_eq!(e[1], ManifestEntry { id: "p2".into(), label: 0, bbox: None });
    }

    #[test]
    fn multiple_boxes_are_merged() {
        let (_d, p) = manifest("p1,0,0,10,10,1\np1,20,20,10,10,1\n");
        let e = read_manifest(&p).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].bbox, Some(BoundingBox::new(0, 0, 30, 30).unwrap()));
    }

    #[test]
    fn malformed_row_reports_line() {
        let (_d, p) = manifest("p1,0,0,10,10,1\np2,a,0,1,1,1\n");
        match read_manifest(&p).unwrap_err() {
            DataError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        std::fs::write(&p, "id,x,y,w,h,label\n").unwrap();
        assert!(matches!(read_manifest(&p), Err(DataError::Parse { line: 1, .. })));
    }

    #[test]
    fn missing_images_are_collected() {
        let (d, p) = manifest("p1,,,,,0\np2,,,,,0\n");
        GrayImage::filled(4, 4, 9).save(&d.path().join("p2.pgm")).unwrap();
        let loaded = load_manifest(&p, d.path()).unwrap();
        assert_eq!(loaded.samples.len(), 1);
        assert_eq!(loaded.samples[0].id, "p2");
        assert!(matches!(&loaded.failures[0], DataError::MissingImage { id, .. } if id == "p1"));
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let entries = vec![
            ManifestEntry { id: "a".into(), label: 1, bbox: Some(BoundingBox::new(1, 2, 3, 4).unwrap()) },
            ManifestEntry { id: "b".into(), label: 0, bbox: None },
        ];
        write_manifest(&p, &entries).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), entries);
    }
}
