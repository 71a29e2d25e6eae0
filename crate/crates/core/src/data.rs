//! Datasets: the synthetic multipartite generator, the canonical JSON file
//! format, and train/validation/test splits.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{edge_homophily, Graph};
use crate::numerics::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    pub features: Arc<Matrix>,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Homophily declared by the source, if any.
    pub declared_homophily: Option<f64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graph: Graph, features: Matrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        let n = graph.n_nodes();
        if features.rows() != n {
            return Err(Error::Validation(format!("{} feature rows for {n} nodes", features.rows())));
        }
        if labels.len() != n {
            return Err(Error::Validation(format!("{} labels for {n} nodes", labels.len())));
        }
        if classes == 0 {
            return Err(Error::Validation("class count must be positive".into()));
        }
        if let Some((node, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
            return Err(Error::Validation(format!("label {y} of node {node} outside [0, {classes})")));
        }
        if !features.is_finite() {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        Ok(Self {
            name: name.into(),
            graph,
            features: Arc::new(features),
            labels,
            classes,
            declared_homophily: None,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn edge_homophily(&self) -> Result<f64> {
        edge_homophily(&self.graph, &self.labels)
    }

    /// Same dataset with the labels of `nodes` replaced.
    pub fn with_labels_replaced(&self, nodes: &[usize], f: impl Fn(usize) -> usize) -> Self {
        let mut out = self.clone();
        for &u in nodes {
            out.labels[u] = f(out.labels[u]) % self.classes;
        }
        out
    }
}

/// Node indices of one trial.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Masks are in range, duplicate-free, pairwise disjoint, and non-empty;
    /// with `cover`, their union is every node.
    pub fn validate(&self, n: usize, cover: bool) -> Result<()> {
        let mut seen = vec![None::<&str>; n];
        for (name, mask) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if mask.is_empty() {
                return Err(Error::Validation(format!("empty {name} mask")));
            }
            for &u in mask.iter() {
                if u >= n {
                    return Err(Error::Validation(format!("{name} mask has node {u} >= {n}")));
                }
                if let Some(prev) = seen[u] {
                    return Err(Error::Validation(format!("node {u} appears in both {prev} and {name}")));
                }
                seen[u] = Some(name);
            }
        }
        if cover && seen.iter().any(Option::is_none) {
            return Err(Error::Validation("masks do not cover every node".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub trials: Vec<Split>,
}

impl SplitSet {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }
}

/// Partition sizes for `n` nodes in `k` groups: `n / k` each, with the first
/// `n mod k` groups one larger.
pub fn partition_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Random `k`-partite graph with no intra-partition edges, labels equal to
/// partition index, and iid standard normal features.
///
/// Each node draws neighbors uniformly from the union of the other
/// partitions. The per-node draw counts sum to `round(n · avg_degree / 2)`,
/// so after symmetrization the mean degree is `avg_degree` less the few
/// duplicate draws.
pub fn generate_multipartite<R: Rng + ?Sized>(
    k: usize,
    n: usize,
    avg_degree: f64,
    feat_dim: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 partitions, got {k}")));
    }
    if n < k {
        return Err(Error::Config(format!("{n} nodes cannot fill {k} partitions")));
    }
    if !(avg_degree >= 1.0) || !avg_degree.is_finite() {
        return Err(Error::Config(format!("average degree must be at least 1, got {avg_degree}")));
    }
    if feat_dim == 0 {
        return Err(Error::Config("feature dimension must be positive".into()));
    }
    let sizes = partition_sizes(n, k);
    let smallest_outside = n - sizes[0];
    if avg_degree >= smallest_outside as f64 {
        return Err(Error::Config(format!(
            "average degree {avg_degree} needs more than the {smallest_outside} nodes outside a partition"
        )));
    }

    let mut labels = Vec::with_capacity(n);
    let mut starts = Vec::with_capacity(k);
    for (p, &size) in sizes.iter().enumerate() {
        starts.push(labels.len());
        labels.extend(std::iter::repeat_n(p, size));
    }

    let total_draws = (n as f64 * avg_degree / 2.0).round() as usize;
    let mut draws = vec![total_draws / n; n];
    for u in index::sample(rng, n, total_draws % n) {
        draws[u] += 1;
    }

    let mut edges = Vec::with_capacity(total_draws);
    for v in 0..n {
        let own = labels[v];
        let outside = n - sizes[own];
        for pick in index::sample(rng, outside, draws[v].min(outside)) {
            // Skip over v's own partition block.
            let u = if pick >= starts[own] { pick + sizes[own] } else { pick };
            edges.push((v.min(u), v.max(u)));
        }
    }
    let graph = Graph::from_edge_list_quiet(n, &edges)?;

    let features = Matrix::from_fn(n, feat_dim, |_, _| rng.sample(StandardNormal));
    let name = match k {
        2 => "bipartite".to_string(),
        3 => "tripartite".to_string(),
        _ => format!("{k}-partite"),
    };
    Dataset::new(name, graph, features, labels, k)
}

/// Independent uniform shuffles cut into train/val/test by `fractions`.
pub fn make_random_splits<R: Rng + ?Sized>(n: usize, fractions: (f64, f64, f64), trials: usize, rng: &mut R) -> Result<SplitSet> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(*f >= 0.0)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let n_train = (a * n as f64).round() as usize;
    let n_val = (b * n as f64).round() as usize;
    if n_train + n_val >= n || n_train == 0 || n_val == 0 {
        return Err(Error::Config(format!("fractions {fractions:?} leave an empty mask for {n} nodes")));
    }
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let test = order.split_off(n_train + n_val);
        let val = order.split_off(n_train);
        out.push(Split { train: order, val, test });
    }
    Ok(SplitSet { trials: out })
}

#[derive(Serialize, Deserialize)]
struct CanonicalFile {
    name: String,
    n: usize,
    f: usize,
    #[serde(rename = "C")]
    classes: usize,
    edges: Vec<[usize; 2]>,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    splits: Vec<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    homophily: Option<f64>,
}

/// Reads a canonical dataset file, validating every field. Embedded splits
/// come back as `Some`.
pub fn load_canonical(path: &Path) -> Result<(Dataset, Option<SplitSet>)> {
    let file = fs::File::open(path)?;
    let mut de = serde_json::Deserializer::from_reader(BufReader::new(file));
    let raw: CanonicalFile = serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Parse {
        path: format!("{}: {}", path.display(), e.path()),
        msg: e.inner().to_string(),
    })?;
    de.end().map_err(|e| Error::Parse {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    from_canonical(raw)
}

fn from_canonical(raw: CanonicalFile) -> Result<(Dataset, Option<SplitSet>)> {
    let CanonicalFile {
        name,
        n,
        f,
        classes,
        edges,
        features,
        labels,
        splits,
        homophily,
    } = raw;
    if features.len() != n {
        return Err(Error::Validation(format!("{} feature rows for n = {n}", features.len())));
    }
    if let Some((i, row)) = features.iter().enumerate().find(|(_, r)| r.len() != f) {
        return Err(Error::Validation(format!("feature row {i} has {} entries, f = {f}", row.len())));
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().map(|[u, v]| (u, v)).collect();
    let graph = Graph::from_edge_list(n, &edges)?;
    let matrix = Matrix::from_vec(n, f, features.into_iter().flatten().collect())?;
    let mut ds = Dataset::new(name, graph, matrix, labels, classes)?;
    ds.declared_homophily = homophily;
    for (i, s) in splits.iter().enumerate() {
        s.validate(n, false).map_err(|e| Error::Validation(format!("split {i}: {e}")))?;
    }
    let splits = (!splits.is_empty()).then_some(SplitSet { trials: splits });
    Ok((ds, splits))
}

/// Writes the canonical JSON document through a temporary sibling file, so
/// a crash never leaves a truncated dataset at `path`.
pub fn save_canonical(path: &Path, ds: &Dataset, splits: Option<&SplitSet>) -> Result<()> {
    let raw = CanonicalFile {
        name: ds.name.clone(),
        n: ds.n_nodes(),
        f: ds.feature_dim(),
        classes: ds.classes,
        edges: ds.graph.edges().iter().map(|&(u, v)| [u, v]).collect(),
        features: (0..ds.n_nodes()).map(|i| ds.features.row(i).to_vec()).collect(),
        labels: ds.labels.clone(),
        splits: splits.map(|s| s.trials.clone()).unwrap_or_default(),
        homophily: ds.declared_homophily,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("json.partial");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        serde_json::to_writer(&mut w, &raw)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Per-class node counts.
pub fn class_counts(ds: &Dataset) -> Vec<usize> {
    let mut counts = vec![0; ds.classes];
    for &y in &ds.labels {
        counts[y] += 1;
    }
    counts
}

/// Number of edges joining two nodes of the same label.
pub fn intra_class_edges(ds: &Dataset) -> usize {
    ds.graph.edges().iter().filter(|&&(u, v)| ds.labels[u] == ds.labels[v]).count()
}

/// Distinct nodes across every mask of a split.
pub fn covered_nodes(split: &Split) -> BTreeSet<usize> {
    split.train.iter().chain(&split.val).chain(&split.test).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partition_sizes_near_equal() {
        assert_eq!(partition_sizes(1600, 2), vec![800, 800]);
        assert_eq!(partition_sizes(1600, 3), vec![534, 533, 533]);
        assert_eq!(partition_sizes(5, 5), vec![1; 5]);
    }

    #[test]
    fn generator_rejects_bad_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(generate_multipartite(1, 10, 2.0, 4, &mut rng), Err(Error::Config(_))));
        assert!(matches!(generate_multipartite(3, 2, 2.0, 4, &mut rng), Err(Error::Config(_))));
        assert!(matches!(generate_multipartite(2, 10, 0.5, 4, &mut rng), Err(Error::Config(_))));
        assert!(matches!(generate_multipartite(2, 10, 5.0, 4, &mut rng), Err(Error::Config(_))));
        assert!(generate_multipartite(2, 10, 4.0, 4, &mut rng).is_ok());
    }

    #[test]
    fn splits_have_expected_sizes() {
        let s = make_random_splits(1600, (0.6, 0.2, 0.2), 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.len(), 10);
        for t in &s.trials {
            assert_eq!((t.train.len(), t.val.len(), t.test.len()), (960, 320, 320));
            t.validate(1600, true).unwrap();
        }
        assert_ne!(s.trials[0], s.trials[1]);
        assert!(make_random_splits(10, (0.5, 0.5, 0.0), 1, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
        assert!(make_random_splits(10, (0.5, 0.2, 0.2), 1, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn split_validation_catches_overlap() {
        let s = Split {
            train: vec![0, 1],
            val: vec![2],
            test: vec![1],
        };
        assert!(matches!(s.validate(3, false), Err(Error::Validation(_))));
        let s = Split {
            train: vec![0],
            val: vec![2],
            test: vec![3],
        };
        assert!(s.validate(4, false).is_ok());
        assert!(s.validate(4, true).is_err());
    }
}
