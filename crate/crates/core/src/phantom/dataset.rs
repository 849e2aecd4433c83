use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::groups::{enumerate_projection_groups, GroupId};
use super::labels::project_labels;
use super::render::render_view;
use super::tree::{derive_seed, generate_tree, CoronaryTree, PhantomConfig, Side};
use super::PhantomError;
use crate::geometry::{build_view, CameraJson, GeometryConfig};

pub const DATASET_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub subjects: usize,
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            subjects: 1,
            seed: 0,
            geometry: GeometryConfig::default(),
            val_fraction: 5.0 / 99.0,
            test_fraction: 10.0 / 99.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: usize,
    pub lca_seed: u64,
    pub rca_seed: u64,
}

impl SubjectEntry {
    pub fn seed(&self, side: Side) -> u64 {
        match side {
            Side::Lca => self.lca_seed,
            Side::Rca => self.rca_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub index: usize,
    pub group: GroupId,
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub subjects: Vec<SubjectEntry>,
    pub splits: Splits,
    pub views: Vec<ViewEntry>,
    /// SHA-256 of every data file, keyed by path relative to the root.
    pub checksums: BTreeMap<String, String>,
}

pub fn image_path(subject: usize, side: Side, view: usize) -> String {
    format!("subject_{subject}/{side}/{view}.pgm")
}

pub fn labels_path(subject: usize, side: Side, view: usize) -> String {
    format!("subject_{subject}/{side}/{view}.labels.json")
}

pub fn camera_path(subject: usize, side: Side, view: usize) -> String {
    format!("subject_{subject}/{side}/{view}.camera.json")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Tree of one subject and side, as generated by [`make_dataset`].
pub fn subject_tree(dataset_seed: u64, subject: usize, side: Side) -> Result<CoronaryTree, PhantomError> {
    let seed = derive_seed(dataset_seed, &[subject as u64, side as u64]);
    generate_tree(&PhantomConfig::new(seed, side))
}

/// Seeded subject split with the given validation and test fractions.
pub fn assign_splits(subjects: usize, val_fraction: f64, test_fraction: f64, seed: u64) -> Splits {
    let mut ids: Vec<usize> = (0..subjects).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5917]));
    ids.shuffle(&mut rng);
    let n_test = (subjects as f64 * test_fraction).round() as usize;
    let n_val = (subjects as f64 * val_fraction).round() as usize;
    let n_test = n_test.min(subjects);
    let n_val = n_val.min(subjects - n_test);
    let mut test = ids[..n_test].to_vec();
    let mut val = ids[n_test..n_test + n_val].to_vec();
    let mut train = ids[n_test + n_val..].to_vec();
    test.sort_unstable();
    val.sort_unstable();
    train.sort_unstable();
    Splits { train, val, test }
}

fn write_file(root: &Path, rel: &str, bytes: &[u8], sums: &mut BTreeMap<String, String>) -> Result<(), PhantomError> {
    let path = root.join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PhantomError::Io { path: dir.to_path_buf(), source: e })?;
    }
    fs::write(&path, bytes).map_err(|e| PhantomError::Io { path: path.clone(), source: e })?;
    sums.insert(rel.to_string(), sha256_hex(bytes));
    Ok(())
}

/// Renders every subject, both sides, over all 63 angulations, with labels
/// and camera parameters, and writes the manifest last.
pub fn make_dataset(root: &Path, cfg: &DatasetConfig) -> Result<Manifest, PhantomError> {
    if cfg.subjects == 0 {
        return Err(PhantomError::InvalidConfig("subject count must be at least 1".into()));
    }
    let fractions_ok = (0.0..1.0).contains(&cfg.val_fraction)
        && (0.0..1.0).contains(&cfg.test_fraction)
        && cfg.val_fraction + cfg.test_fraction < 1.0;
    if !fractions_ok {
        return Err(PhantomError::InvalidConfig("split fractions must lie in [0, 1) and sum below 1".into()));
    }
    fs::create_dir_all(root).map_err(|e| PhantomError::Io { path: root.to_path_buf(), source: e })?;

    let groups = enumerate_projection_groups();
    let views: Vec<_> = groups
        .iter()
        .enumerate()
        .map(|(i, (g, a))| {
            build_view(*a, &cfg.geometry).map(|v| (ViewEntry { index: i, group: *g, alpha_deg: a.alpha_deg, beta_deg: a.beta_deg }, v))
        })
        .collect::<Result<_, _>>()?;

    let mut sums = BTreeMap::new();
    let mut subjects = Vec::with_capacity(cfg.subjects);
    for k in 0..cfg.subjects {
        let mut entry = SubjectEntry { id: k, lca_seed: 0, rca_seed: 0 };
        for side in Side::ALL {
            let tree = subject_tree(cfg.seed, k, side)?;
            match side {
                Side::Lca => entry.lca_seed = tree.seed,
                Side::Rca => entry.rca_seed = tree.seed,
            }
            for (ve, view) in &views {
                let img = render_view(&tree, view)?;
                let labels = project_labels(&tree, view)?;
                let camera = CameraJson::from(view);
                write_file(root, &image_path(k, side, ve.index), &img.to_pgm(), &mut sums)?;
                let lj = serde_json::to_vec(&labels).map_err(|e| PhantomError::Json { path: labels_path(k, side, ve.index).into(), source: e })?;
                write_file(root, &labels_path(k, side, ve.index), &lj, &mut sums)?;
                let cj = serde_json::to_vec_pretty(&camera).map_err(|e| PhantomError::Json { path: camera_path(k, side, ve.index).into(), source: e })?;
                write_file(root, &camera_path(k, side, ve.index), &cj, &mut sums)?;
            }
        }
        subjects.push(entry);
    }

    let manifest = Manifest {
        version: DATASET_VERSION,
        seed: cfg.seed,
        geometry: cfg.geometry,
        subjects,
        splits: assign_splits(cfg.subjects, cfg.val_fraction, cfg.test_fraction, cfg.seed),
        views: views.into_iter().map(|(e, _)| e).collect(),
        checksums: sums,
    };
    let bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| PhantomError::Json { path: PathBuf::from(MANIFEST_FILE), source: e })?;
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, bytes).map_err(|e| PhantomError::Io { path, source: e })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_split_proportions() {
        let s = assign_splits(99, 5.0 / 99.0, 10.0 / 99.0, 4);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (84, 5, 10));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..99).collect::<Vec<_>>());
        assert_eq!(s, assign_splits(99, 5.0 / 99.0, 10.0 / 99.0, 4));
    }

    #[test]
    fn rejects_zero_subjects() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DatasetConfig { subjects: 0, ..Default::default() };
        assert!(matches!(make_dataset(dir.path(), &cfg), Err(PhantomError::InvalidConfig(_))));
    }
}
