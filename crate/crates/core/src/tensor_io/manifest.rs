//! Dataset manifests: which images to evaluate and which salience map each
//! explanation method produced for them.
//!
//! ```json
//! {"id": "demo", "entries": [
//!   {"image": "img0.stf", "label": 3, "salience": {"rollout": "img0.rollout.stf"}}
//! ]}
//! ```
//!
//! Relative paths resolve against the manifest's directory. An entry may also
//! carry an `"id"`; otherwise the image file stem is used as the sample id.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use super::{read_image, ImageTensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub label: Option<i64>,
    /// Salience map path per explanation method, in file order.
    pub salience: Vec<(String, PathBuf)>,
}

impl ManifestEntry {
    pub fn salience_path(&self, method: &str) -> Option<&Path> {
        self.salience
            .iter()
            .find(|(name, _)| name == method)
            .map(|(_, p)| p.as_path())
    }

    pub fn methods(&self) -> impl Iterator<Item = &str> {
        self.salience.iter().map(|(name, _)| name.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetManifest {
    pub id: String,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Loads every image once and checks they agree on H, W, C.
    ///
    /// Returns the common shape, or `None` for an empty manifest.
    pub fn check_shapes(&self) -> Result<Option<[usize; 3]>> {
        let mut common: Option<[usize; 3]> = None;
        for entry in &self.entries {
            let shape = read_image(&entry.image)?.shape();
            match common {
                None => common = Some(shape),
                Some(s) if s != shape => {
                    return Err(Error::Manifest(format!(
                        "entry {:?} has shape {shape:?}, expected {s:?}",
                        entry.id
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(common)
    }

    pub fn load_image(&self, index: usize) -> Result<ImageTensor> {
        read_image(&self.entries[index].image)
    }

    /// Method names in first-seen order across all entries.
    pub fn methods(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for entry in &self.entries {
            for name in entry.methods() {
                if !seen.iter().any(|s| s == name) {
                    seen.push(name.to_string());
                }
            }
        }
        seen
    }
}

#[derive(Deserialize)]
struct RawManifest {
    id: String,
    entries: Vec<RawEntry>,
}

#[derive(Deserialize)]
struct RawEntry {
    #[serde(default)]
    id: Option<String>,
    image: PathBuf,
    #[serde(default)]
    label: Option<i64>,
    #[serde(default)]
    salience: OrderedPaths,
}

/// JSON object kept as an ordered list so duplicate keys can be reported
/// instead of silently collapsing.
#[derive(Default)]
struct OrderedPaths(Vec<(String, PathBuf)>);

impl<'de> Deserialize<'de> for OrderedPaths {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct PathsVisitor;

        impl<'de> Visitor<'de> for PathsVisitor {
            type Value = OrderedPaths;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping method names to paths")
            }

            fn visit_map<A: MapAccess<'de>>(
                self,
                mut map: A,
            ) -> std::result::Result<OrderedPaths, A::Error> {
                let mut out: Vec<(String, PathBuf)> = Vec::new();
                while let Some((name, path)) = map.next_entry::<String, PathBuf>()? {
                    if out.iter().any(|(n, _)| *n == name) {
                        return Err(de::Error::custom(format!("duplicate method name {name:?}")));
                    }
                    out.push((name, path));
                }
                Ok(OrderedPaths(out))
            }
        }

        deserializer.deserialize_map(PathsVisitor)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));

    let mut seen_ids = HashSet::new();
    let mut entries = Vec::with_capacity(raw.entries.len());
    for (index, entry) in raw.entries.into_iter().enumerate() {
        let image = base.join(&entry.image);
        let id = match entry.id {
            Some(id) => id,
            None => image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("{index}")),
        };
        if !seen_ids.insert(id.clone()) {
            return Err(Error::Schema(format!(
                "entry {index}: duplicate sample id {id:?}"
            )));
        }
        require_file(&image, index, &id, "image")?;
        let mut salience = Vec::with_capacity(entry.salience.0.len());
        for (method, rel) in entry.salience.0 {
            let p = base.join(rel);
            require_file(&p, index, &id, &format!("salience map for {method:?}"))?;
            salience.push((method, p));
        }
        entries.push(ManifestEntry {
            id,
            image,
            label: entry.label,
            salience,
        });
    }

    Ok(DatasetManifest {
        id: raw.id,
        entries,
    })
}

fn require_file(path: &Path, index: usize, id: &str, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Manifest(format!(
            "entry {index} ({id}): {what} not found at {}",
            path.display()
        )))
    }
}
