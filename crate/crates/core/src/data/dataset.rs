use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Labelled image files under `root/<class_name>/*.ppm`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub class_names: Vec<String>,
    /// `(path, class index)`; paths are absolute or relative to the working directory.
    pub entries: Vec<(PathBuf, usize)>,
}

impl DatasetManifest {
    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.entries.iter().filter(|e| e.1 == class).count()
    }
}

fn ingest(path: &Path, reason: impl Into<String>) -> Error {
    Error::Ingest {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let rd = fs::read_dir(dir).map_err(|e| ingest(dir, format!("cannot list directory: {e}")))?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| ingest(dir, e.to_string()))?;
        let name = entry
            .file_name()
            .into_string()
            .map_err(|_| ingest(&entry.path(), "file name is not UTF-8"))?;
        out.push((name, entry.path()));
    }
    // byte-wise lexicographic order
    out.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
    Ok(out)
}

/// Scans one sub-directory per class. Classes and files are ordered by the
/// bytes of their names; class indices follow that order.
///
/// `expected_classes` of `Some(n)` rejects layouts with a different class count.
pub fn load_dataset(root: &Path, expected_classes: Option<usize>) -> Result<DatasetManifest> {
    let mut class_names = Vec::new();
    let mut entries = Vec::new();
    for (name, path) in sorted_entries(root)? {
        if !path.is_dir() {
            continue;
        }
        let class = class_names.len();
        let mut found = 0;
        for (file, fpath) in sorted_entries(&path)? {
            let is_ppm = Path::new(&file)
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
            if !is_ppm || !fpath.is_file() {
                continue;
            }
            fs::File::open(&fpath).map_err(|e| ingest(&fpath, format!("unreadable file: {e}")))?;
            entries.push((fpath, class));
            found += 1;
        }
        if found == 0 {
            return Err(ingest(&path, format!("class directory `{name}` contains no .ppm images")));
        }
        class_names.push(name);
    }
    if class_names.is_empty() {
        return Err(ingest(root, "no class directories found"));
    }
    if class_names.len() < 2 {
        return Err(ingest(
            root,
            format!("need at least two classes, found only `{}`", class_names[0]),
        ));
    }
    if let Some(n) = expected_classes {
        if class_names.len() != n {
            return Err(ingest(
                root,
                format!(
                    "mode mismatch: expected {n} classes, found {} ({})",
                    class_names.len(),
                    class_names.join(", ")
                ),
            ));
        }
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        class_names,
        entries,
    })
}

/// Writes `path<TAB>class` lines with paths relative to the manifest's root.
pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut text = String::new();
    for (p, class) in &manifest.entries {
        let rel = p.strip_prefix(&manifest.root).unwrap_or(p);
        text.push_str(&format!("{}\t{}\n", rel.display(), manifest.class_names[*class]));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a manifest written by [`write_manifest`]; class order is first appearance.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut class_names: Vec<String> = Vec::new();
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (rel, class) = line
            .split_once('\t')
            .ok_or_else(|| Error::Parse(format!("{}:{}: expected `path<TAB>class`", path.display(), n + 1)))?;
        let idx = match class_names.iter().position(|c| c == class) {
            Some(i) => i,
            None => {
                class_names.push(class.to_string());
                class_names.len() - 1
            }
        };
        entries.push((root.join(rel), idx));
    }
    Ok(DatasetManifest {
        root,
        class_names,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_ppm;
    use crate::pfm::RgbImage;

    fn touch(dir: &Path, class: &str, file: &str) {
        let d = dir.join(class);
        fs::create_dir_all(&d).unwrap();
        write_ppm(&d.join(file), &RgbImage::filled(2, 2, [1, 2, 3])).unwrap();
    }

    #[test]
    fn classes_in_lexicographic_order() {
        let tmp = tempfile::tempdir().unwrap();
        touch(tmp.path(), "banana", "b.ppm");
        touch(tmp.path(), "apple", "z.ppm");
        touch(tmp.path(), "apple", "a.ppm");
        let m = load_dataset(tmp.path(), Some(2)).unwrap();
        assert_eq!(m.class_names, vec!["apple", "banana"]);
        let names: Vec<_> = m
            .entries
            .iter()
            .map(|(p, c)| (p.file_name().unwrap().to_str().unwrap().to_string(), *c))
            .collect();
        assert_eq!(names, vec![("a.ppm".into(), 0), ("z.ppm".into(), 0), ("b.ppm".into(), 1)]);
    }

    #[test]
    fn empty_class_directory_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        touch(tmp.path(), "apple", "a.ppm");
        fs::create_dir_all(tmp.path().join("banana")).unwrap();
        let err = load_dataset(tmp.path(), None).unwrap_err().to_string();
        assert!(err.contains("banana"), "{err}");
    }

    #[test]
    fn class_count_mismatch() {
        let tmp = tempfile::tempdir().unwrap();
        for c in ["a", "b", "c"] {
            touch(tmp.path(), c, "x.ppm");
        }
        let err = load_dataset(tmp.path(), Some(2)).unwrap_err().to_string();
        assert!(err.contains("mode mismatch"), "{err}");
        assert_eq!(load_dataset(tmp.path(), None).unwrap().class_names.len(), 3);
    }

    #[test]
    fn empty_root_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(tmp.path(), None), Err(Error::Ingest { .. })));
    }

    #[test]
    fn manifest_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        touch(tmp.path(), "apple", "a.ppm");
        touch(tmp.path(), "banana", "b.ppm");
        let m = load_dataset(tmp.path(), Some(2)).unwrap();
        let mp = tmp.path().join(MANIFEST_FILE);
        write_manifest(&m, &mp).unwrap();
        assert_eq!(fs::read_to_string(&mp).unwrap(), "apple/a.ppm\tapple\nbanana/b.ppm\tbanana\n");
        let back = read_manifest(&mp).unwrap();
        assert_eq!(back.class_names, m.class_names);
        assert_eq!(back.entries, m.entries);
    }
}
