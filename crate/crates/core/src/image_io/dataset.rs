use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SplitMix64;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "ppm", "pgm"];

/// Files belonging to one class directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassListing {
    pub name: String,
    pub files: Vec<String>,
}

impl ClassListing {
    pub fn new(name: impl Into<String>, files: Vec<String>) -> Self {
        ClassListing {
            name: name.into(),
            files,
        }
    }
}

/// Reads `root/<class>/*.{png,ppm,pgm}`. Classes and files come back sorted by name;
/// file names are relative to their class directory. Hidden directories are skipped.
pub fn list_dataset(root: impl AsRef<Path>) -> Result<Vec<ClassListing>> {
    let root = root.as_ref();
    let mut classes = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()).map(str::to_owned) else {
            continue;
        };
        if name.starts_with('.') {
            continue;
        }
        let mut files = Vec::new();
        for f in fs::read_dir(&path).map_err(|e| Error::io(&path, e))? {
            let f = f.map_err(|e| Error::io(&path, e))?.path();
            let supported = f
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
            if f.is_file() && supported {
                if let Some(n) = f.file_name().and_then(|n| n.to_str()) {
                    files.push(n.to_owned());
                }
            }
        }
        files.sort();
        classes.push(ClassListing { name, files });
    }
    classes.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(classes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub name: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Disjoint per-class train/test listings produced by [`split_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train_fraction: f64,
    pub classes: Vec<ClassSplit>,
}

impl DatasetSplit {
    pub fn class_names(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn class(&self, name: &str) -> Option<&ClassSplit> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn train_len(&self) -> usize {
        self.classes.iter().map(|c| c.train.len()).sum()
    }

    pub fn test_len(&self) -> usize {
        self.classes.iter().map(|c| c.test.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid!("split JSON: {e}"))
    }
}

/// Number of training items: `round(fraction · n)` with halves rounding up.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    ((train_fraction * n as f64 + 0.5).floor() as usize).min(n)
}

/// Sorts each class, shuffles it with one SplitMix64 stream (classes in listing
/// order), and cuts the first `round(fraction·N)` files off as the train set.
/// Both output lists are sorted.
pub fn split_dataset(listing: &[ClassListing], train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid!("train fraction must be in (0, 1), got {train_fraction}"));
    }
    if listing.is_empty() {
        return Err(invalid!("dataset has no classes"));
    }
    let mut rng = SplitMix64::new(seed);
    let mut classes = Vec::with_capacity(listing.len());
    for class in listing {
        if class.files.is_empty() {
            return Err(Error::EmptyClass(class.name.clone()));
        }
        let mut files = class.files.clone();
        files.sort();
        files.dedup();
        rng.shuffle(&mut files);
        let n_train = train_count(files.len(), train_fraction);
        let mut test = files.split_off(n_train);
        files.sort();
        test.sort();
        classes.push(ClassSplit {
            name: class.name.clone(),
            train: files,
            test,
        });
    }
    Ok(DatasetSplit {
        seed,
        train_fraction,
        classes,
    })
}
