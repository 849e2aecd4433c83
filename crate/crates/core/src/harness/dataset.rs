//! On-disk datasets, view records and evaluation pairing.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::corrmodel::{CorrError, PairSample, PairSource, PhantomSource};
use crate::geometry::{angle_between_angulations, Angulation};
use crate::phantom::{
    enumerate_projection_groups, image_path, labels_path, sha256_hex, GroupId, Image2D, Manifest, Side, ViewLabels,
    DATASET_VERSION, MANIFEST_FILE,
};

/// One rendered view of one tree. Ids number views tree by tree:
/// `id = tree * views_per_tree + view` with `tree = 2 * subject + side`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub id: usize,
    pub subject: usize,
    pub side: Side,
    pub view: usize,
    pub tree: usize,
    pub group: GroupId,
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

impl ViewRecord {
    pub fn angulation(&self) -> Angulation {
        Angulation { alpha_deg: self.alpha_deg, beta_deg: self.beta_deg }
    }
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Lca => 0,
        Side::Rca => 1,
    }
}

fn side_of(tree: usize) -> Side {
    Side::ALL[tree % 2]
}

/// Records for `trees` consecutive trees over the clinical angulations.
pub fn records_for_trees(trees: usize) -> Vec<ViewRecord> {
    let groups = enumerate_projection_groups();
    let per = groups.len();
    (0..trees)
        .flat_map(|t| {
            groups.iter().enumerate().map(move |(v, (g, a))| ViewRecord {
                id: t * per + v,
                subject: t / 2,
                side: side_of(t),
                view: v,
                tree: t,
                group: *g,
                alpha_deg: a.alpha_deg,
                beta_deg: a.beta_deg,
            })
        })
        .collect()
}

/// A reference view paired with another view of the same tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub reference: usize,
    pub target: usize,
    pub tree: usize,
    pub angle_deg: f64,
    pub reference_group: GroupId,
    pub target_group: GroupId,
}

/// Every view of the given trees serves once as reference, paired with a
/// seeded-random different view of the same tree.
pub fn pair_views(records: &[ViewRecord], trees: &[usize], seed: u64) -> Vec<EvalPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &t in trees {
        let views: Vec<&ViewRecord> = records.iter().filter(|r| r.tree == t).collect();
        for r in &views {
            let others: Vec<&&ViewRecord> = views.iter().filter(|o| o.id != r.id).collect();
            let Some(o) = others.choose(&mut rng) else { continue };
            out.push(EvalPair {
                reference: r.id,
                target: o.id,
                tree: t,
                angle_deg: angle_between_angulations(r.angulation(), o.angulation()),
                reference_group: r.group,
                target_group: o.group,
            });
        }
    }
    out
}

/// Source of image pairs for evaluation at model resolution.
pub trait PairProvider {
    fn records(&self) -> Vec<ViewRecord>;
    fn load_pair(&mut self, pair: &EvalPair) -> Result<PairSample, HarnessError>;
}

impl PairProvider for PhantomSource {
    fn records(&self) -> Vec<ViewRecord> {
        records_for_trees(self.trees().len())
    }

    fn load_pair(&mut self, pair: &EvalPair) -> Result<PairSample, HarnessError> {
        let n = self.view_count();
        Ok(self.pair(pair.tree, pair.reference % n, pair.target % n)?)
    }
}

/// A dataset written by `make_dataset`. Files are read on demand.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    records: Vec<ViewRecord>,
}

/// A file that failed verification.
#[derive(Debug, Clone, PartialEq)]
pub struct FileIssue {
    pub path: PathBuf,
    pub problem: String,
}

fn read(path: &Path) -> Result<Vec<u8>, HarnessError> {
    fs::read(path).map_err(|e| HarnessError::File { path: path.to_path_buf(), reason: e.to_string() })
}

/// Opens a dataset and checks a sample of its files: checksums, label
/// parsing and label resolution.
pub fn load_dataset(root: &Path) -> Result<Dataset, HarnessError> {
    let mpath = root.join(MANIFEST_FILE);
    if !mpath.is_file() {
        return Err(HarnessError::ManifestMissing(mpath));
    }
    let raw: serde_json::Value = serde_json::from_slice(&read(&mpath)?)
        .map_err(|e| HarnessError::File { path: mpath.clone(), reason: e.to_string() })?;
    let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != DATASET_VERSION as u64 {
        return Err(HarnessError::SchemaVersionMismatch { found: version, expected: DATASET_VERSION });
    }
    let manifest: Manifest =
        serde_json::from_value(raw).map_err(|e| HarnessError::File { path: mpath.clone(), reason: e.to_string() })?;
    let per = manifest.views.len();
    let mut records = Vec::with_capacity(manifest.subjects.len() * 2 * per);
    for s in &manifest.subjects {
        for side in Side::ALL {
            let tree = 2 * s.id + side_index(side);
            for v in &manifest.views {
                records.push(ViewRecord {
                    id: tree * per + v.index,
                    subject: s.id,
                    side,
                    view: v.index,
                    tree,
                    group: v.group,
                    alpha_deg: v.alpha_deg,
                    beta_deg: v.beta_deg,
                });
            }
        }
    }
    let ds = Dataset { root: root.to_path_buf(), manifest, records };
    let step = (ds.records.len() / 8).max(1);
    let sample: Vec<usize> = (0..ds.records.len()).step_by(step).collect();
    if let Some(issue) = ds.verify(&sample).into_iter().next() {
        return Err(HarnessError::File { path: issue.path, reason: issue.problem });
    }
    Ok(ds)
}

impl Dataset {
    pub fn records(&self) -> &[ViewRecord] {
        &self.records
    }

    pub fn record(&self, id: usize) -> Result<&ViewRecord, HarnessError> {
        self.records.get(id).ok_or(HarnessError::UnknownView(id))
    }

    fn rel(&self, id: usize, labels: bool) -> Result<String, HarnessError> {
        let r = self.record(id)?;
        Ok(if labels { labels_path(r.subject, r.side, r.view) } else { image_path(r.subject, r.side, r.view) })
    }

    /// The stored PGM bytes of a view.
    pub fn image_bytes(&self, id: usize) -> Result<Vec<u8>, HarnessError> {
        read(&self.root.join(self.rel(id, false)?))
    }

    pub fn image(&self, id: usize) -> Result<Image2D, HarnessError> {
        let path = self.root.join(self.rel(id, false)?);
        Image2D::from_pgm(&read(&path)?).map_err(|e| HarnessError::File { path, reason: e.to_string() })
    }

    pub fn labels(&self, id: usize) -> Result<ViewLabels, HarnessError> {
        let path = self.root.join(self.rel(id, true)?);
        serde_json::from_slice(&read(&path)?).map_err(|e| HarnessError::File { path, reason: e.to_string() })
    }

    /// Checks checksums and label files of the given views; one issue per
    /// failing file.
    pub fn verify(&self, ids: &[usize]) -> Vec<FileIssue> {
        let mut issues = Vec::new();
        let size = self.manifest.geometry.image_size;
        for &id in ids {
            for labels in [false, true] {
                let Ok(rel) = self.rel(id, labels) else { continue };
                let path = self.root.join(&rel);
                let bytes = match fs::read(&path) {
                    Ok(b) => b,
                    Err(e) => {
                        issues.push(FileIssue { path, problem: e.to_string() });
                        continue;
                    }
                };
                if self.manifest.checksums.get(&rel).map(String::as_str) != Some(sha256_hex(&bytes).as_str()) {
                    issues.push(FileIssue { path, problem: "checksum mismatch".into() });
                    continue;
                }
                if labels {
                    match serde_json::from_slice::<ViewLabels>(&bytes) {
                        Ok(l) if l.image_size != (size, size) => issues.push(FileIssue {
                            path,
                            problem: format!("labels for {:?}, dataset renders {size}", l.image_size),
                        }),
                        Ok(_) => {}
                        Err(e) => issues.push(FileIssue { path, problem: e.to_string() }),
                    }
                }
            }
        }
        issues
    }

    pub fn verify_all(&self) -> Vec<FileIssue> {
        self.verify(&(0..self.records.len()).collect::<Vec<_>>())
    }

    /// Trees of the test split.
    pub fn test_trees(&self) -> Vec<usize> {
        self.manifest.splits.test.iter().flat_map(|&s| [2 * s, 2 * s + 1]).collect()
    }

    /// Evaluation pairs over the test split.
    pub fn eval_pairs(&self, seed: u64) -> Vec<EvalPair> {
        pair_views(&self.records, &self.test_trees(), seed)
    }

    /// Provider yielding pairs downsampled to `size`.
    pub fn at_size(&self, size: usize) -> DatasetPairs<'_> {
        DatasetPairs { dataset: self, size }
    }
}

/// Evaluation pairs over the test split, which must not be empty.
pub fn make_eval_pairs(dataset: &Dataset, seed: u64) -> Result<Vec<EvalPair>, HarnessError> {
    if dataset.manifest.splits.test.is_empty() {
        return Err(HarnessError::EmptySplit);
    }
    Ok(dataset.eval_pairs(seed))
}

/// A dataset read at model resolution.
pub struct DatasetPairs<'a> {
    pub dataset: &'a Dataset,
    pub size: usize,
}

impl DatasetPairs<'_> {
    fn view(&self, id: usize) -> Result<(Image2D, ViewLabels), HarnessError> {
        let img = self.dataset.image(id)?;
        let labels = self.dataset.labels(id)?;
        if img.width % self.size != 0 || img.width != img.height {
            return Err(HarnessError::InvalidConfig(format!("cannot scale {}px images to {}", img.width, self.size)));
        }
        let img = if img.width == self.size { img } else { img.downsample(img.width / self.size)? };
        Ok((img, labels.rescaled((self.size, self.size))))
    }
}

impl PairProvider for DatasetPairs<'_> {
    fn records(&self) -> Vec<ViewRecord> {
        self.dataset.records.clone()
    }

    fn load_pair(&mut self, pair: &EvalPair) -> Result<PairSample, HarnessError> {
        let (ri, rl) = self.view(pair.reference)?;
        let (ti, tl) = self.view(pair.target)?;
        Ok(PairSample { reference: ri, target: ti, reference_labels: rl, target_labels: tl, angle_deg: pair.angle_deg })
    }
}

/// Training pairs drawn from the train split: a random tree and two
/// distinct random views of it.
pub struct TrainingPairs<'a> {
    pairs: DatasetPairs<'a>,
    trees: Vec<usize>,
}

impl<'a> TrainingPairs<'a> {
    pub fn new(dataset: &'a Dataset, size: usize) -> Result<Self, HarnessError> {
        let trees: Vec<usize> = dataset.manifest.splits.train.iter().flat_map(|&s| [2 * s, 2 * s + 1]).collect();
        if trees.is_empty() {
            return Err(HarnessError::InvalidConfig("train split is empty".into()));
        }
        let g = &dataset.manifest.geometry;
        if size == 0 || g.image_size % size != 0 {
            return Err(HarnessError::InvalidConfig(format!("cannot scale {}px images to {size}", g.image_size)));
        }
        Ok(Self { pairs: dataset.at_size(size), trees })
    }
}

impl PairSource for TrainingPairs<'_> {
    fn sample_pair(&mut self, rng: &mut ChaCha8Rng) -> Result<PairSample, CorrError> {
        let per = self.pairs.dataset.manifest.views.len();
        let tree = self.trees[rng.random_range(0..self.trees.len())];
        let a = rng.random_range(0..per);
        let b = (a + rng.random_range(1..per)) % per;
        let recs = &self.pairs.dataset.records;
        let (r, t) = (&recs[tree * per + a], &recs[tree * per + b]);
        let pair = EvalPair {
            reference: r.id,
            target: t.id,
            tree,
            angle_deg: angle_between_angulations(r.angulation(), t.angulation()),
            reference_group: r.group,
            target_group: t.group,
        };
        self.pairs.load_pair(&pair).map_err(|e| match e {
            HarnessError::Corr(e) => e,
            HarnessError::Phantom(e) => CorrError::Phantom(e),
            other => CorrError::CorruptFile(other.to_string()),
        })
    }
}
