//! Agglomerative clustering, cophenetic correlation, and the recursive
//! top-down partitioning of a dendrogram.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dissimilarity::DissimilarityMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("unknown machine {0}")]
    UnknownMachine(String),
    #[error("cophenetic correlation is undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("cannot cut a dendrogram with a single leaf")]
    SingleLeaf,
    #[error("cannot cluster an empty matrix")]
    Empty,
}

pub type Result<T, E = ClusterError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Single,
    Complete,
    Average,
    /// Lance-Williams Ward update. Assumes Euclidean geometry of the inputs.
    Ward,
}

/// A reference to a leaf or to the cluster produced by an earlier merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf(usize),
    Merge(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: Node,
    pub right: Node,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
    pub linkage: Linkage,
}

impl Dendrogram {
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    fn root(&self) -> Node {
        match self.merges.len() {
            0 => Node::Leaf(0),
            m => Node::Merge(m - 1),
        }
    }

    /// Leaf indices under `node`, in left-to-right drawing order.
    pub fn leaves_under(&self, node: Node) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            match n {
                Node::Leaf(i) => out.push(i),
                Node::Merge(m) => {
                    stack.push(self.merges[m].right);
                    stack.push(self.merges[m].left);
                }
            }
        }
        out
    }

    /// All leaves in drawing order.
    pub fn leaf_order(&self) -> Vec<usize> {
        self.leaves_under(self.root())
    }

    /// Full matrix of dendrogrammic distances, indexed like `leaves`.
    pub fn cophenetic_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.leaves.len();
        let mut t = vec![vec![0.0; n]; n];
        let mut members: Vec<Vec<usize>> = Vec::with_capacity(self.merges.len());
        for m in &self.merges {
            let take = |node: Node, members: &Vec<Vec<usize>>| match node {
                Node::Leaf(i) => vec![i],
                Node::Merge(k) => members[k].clone(),
            };
            let left = take(m.left, &members);
            let right = take(m.right, &members);
            for &a in &left {
                for &b in &right {
                    t[a][b] = m.height;
                    t[b][a] = m.height;
                }
            }
            members.push([left, right].concat());
        }
        t
    }

    fn leaf_index(&self, id: &str) -> Result<usize> {
        self.leaves.iter().position(|l| l == id).ok_or_else(|| ClusterError::UnknownMachine(id.to_string()))
    }

    /// Nested `{height, children}` / `{leaf}` representation for reports.
    pub fn to_nested_json(&self) -> Value {
        fn walk(d: &Dendrogram, n: Node) -> Value {
            match n {
                Node::Leaf(i) => json!({ "leaf": d.leaves[i] }),
                Node::Merge(m) => {
                    let mg = &d.merges[m];
                    json!({
                        "height": mg.height,
                        "size": mg.size,
                        "children": [walk(d, mg.left), walk(d, mg.right)],
                    })
                }
            }
        }
        json!({
            "linkage": self.linkage,
            "leaves": self.leaves,
            "tree": walk(self, self.root()),
        })
    }

    /// The sub-dendrogram rooted at `node`, with leaves and merges re-indexed.
    fn subtree(&self, node: Node) -> Dendrogram {
        let mut leaf_ids = self.leaves_under(node);
        leaf_ids.sort_unstable();
        let leaf_map = |i: usize| leaf_ids.binary_search(&i).expect("leaf belongs to subtree");

        let mut merge_ids = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            if let Node::Merge(m) = n {
                merge_ids.push(m);
                stack.push(self.merges[m].left);
                stack.push(self.merges[m].right);
            }
        }
        merge_ids.sort_unstable();
        let remap = |n: Node| match n {
            Node::Leaf(i) => Node::Leaf(leaf_map(i)),
            Node::Merge(m) => Node::Merge(merge_ids.binary_search(&m).expect("merge belongs to subtree")),
        };
        Dendrogram {
            leaves: leaf_ids.iter().map(|&i| self.leaves[i].clone()).collect(),
            merges: merge_ids
                .iter()
                .map(|&m| {
                    let mg = &self.merges[m];
                    Merge { left: remap(mg.left), right: remap(mg.right), height: mg.height, size: mg.size }
                })
                .collect(),
            linkage: self.linkage,
        }
    }
}

/// Bottom-up agglomeration with Lance-Williams distance updates.
///
/// Ties between candidate merges go to the lexicographically smallest pair of
/// cluster ids, where a cluster's id is its smallest member leaf.
pub fn agglomerate(matrix: &DissimilarityMatrix, linkage: Linkage) -> Result<Dendrogram> {
    let n = matrix.len();
    if n == 0 {
        return Err(ClusterError::Empty);
    }
    let mut dist = matrix.values.clone();
    let mut active = vec![true; n];
    let mut node: Vec<Node> = (0..n).map(Node::Leaf).collect();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);

    for _ in 1..n {
        let mut best: Option<(usize, usize)> = None;
        let mut best_d = f64::INFINITY;
        for a in (0..n).filter(|&a| active[a]) {
            for b in (a + 1..n).filter(|&b| active[b]) {
                if best.is_none() || dist[a][b] < best_d {
                    best = Some((a, b));
                    best_d = dist[a][b];
                }
            }
        }
        let (a, b) = best.expect("at least two active clusters");
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let (dka, dkb) = (dist[k][a], dist[k][b]);
            let nk = size[k] as f64;
            let d = match linkage {
                Linkage::Single => dka.min(dkb),
                Linkage::Complete => dka.max(dkb),
                Linkage::Average => (na * dka + nb * dkb) / (na + nb),
                Linkage::Ward => (((na + nk) * dka * dka + (nb + nk) * dkb * dkb - nk * best_d * best_d)
                    / (na + nb + nk))
                    .max(0.0)
                    .sqrt(),
            };
            dist[k][a] = d;
            dist[a][k] = d;
        }
        merges.push(Merge { left: node[a], right: node[b], height: best_d, size: size[a] + size[b] });
        node[a] = Node::Merge(merges.len() - 1);
        size[a] += size[b];
        active[b] = false;
    }

    Ok(Dendrogram { leaves: matrix.machine_ids.clone(), merges, linkage })
}

/// Height of the first merge joining `x` and `y`.
pub fn dendrogrammic_distance(dendrogram: &Dendrogram, x: &str, y: &str) -> Result<f64> {
    let (ix, iy) = (dendrogram.leaf_index(x)?, dendrogram.leaf_index(y)?);
    if ix == iy {
        return Ok(0.0);
    }
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(dendrogram.merges.len());
    for m in &dendrogram.merges {
        let take = |node: Node| match node {
            Node::Leaf(i) => vec![i],
            Node::Merge(k) => members[k].clone(),
        };
        let (left, right) = (take(m.left), take(m.right));
        let joins = (left.contains(&ix) && right.contains(&iy)) || (left.contains(&iy) && right.contains(&ix));
        if joins {
            return Ok(m.height);
        }
        members.push([left, right].concat());
    }
    unreachable!("every pair of leaves is joined by the root merge")
}

fn near_zero_spread(values: &[f64], ss: f64) -> bool {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ss == 0.0 || ss <= (1e-12 * scale).powi(2) * values.len() as f64
}

/// Pearson correlation of two equally long samples, or `None` when either
/// has (numerically) no spread.
pub fn pearson(s: &[f64], t: &[f64]) -> Option<f64> {
    assert_eq!(s.len(), t.len());
    let n = s.len() as f64;
    let ms = s.iter().sum::<f64>() / n;
    let mt = t.iter().sum::<f64>() / n;
    let (mut sst, mut sss, mut stt) = (0.0, 0.0, 0.0);
    for (a, b) in s.iter().zip(t) {
        sst += (a - ms) * (b - mt);
        sss += (a - ms) * (a - ms);
        stt += (b - mt) * (b - mt);
    }
    if near_zero_spread(s, sss) || near_zero_spread(t, stt) {
        return None;
    }
    Some((sst / (sss * stt).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation between matrix dissimilarities and dendrogrammic
/// distances over every pair of the dendrogram's leaves. Only the pairs among
/// those leaves are used, so the matrix may cover a larger fleet.
pub fn cophenetic_correlation(matrix: &DissimilarityMatrix, dendrogram: &Dendrogram) -> Result<f64> {
    let idx: Vec<usize> = dendrogram
        .leaves
        .iter()
        .map(|id| matrix.index_of(id).ok_or_else(|| ClusterError::UnknownMachine(id.clone())))
        .collect::<Result<_>>()?;
    let n = idx.len();
    if n < 3 {
        return Err(ClusterError::UndefinedCorrelation(format!("{n} leaves give fewer than 2 pairs")));
    }
    let coph = dendrogram.cophenetic_matrix();
    let mut s = Vec::with_capacity(n * (n - 1) / 2);
    let mut t = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            s.push(matrix.get(idx[a], idx[b]));
            t.push(coph[a][b]);
        }
    }
    pearson(&s, &t).ok_or_else(|| ClusterError::UndefinedCorrelation("zero variance".into()))
}

/// The two subtrees joined by the root merge.
pub fn cut_at_highest_level(dendrogram: &Dendrogram) -> Result<(Dendrogram, Dendrogram)> {
    let root = dendrogram.merges.last().ok_or(ClusterError::SingleLeaf)?;
    Ok((dendrogram.subtree(root.left), dendrogram.subtree(root.right)))
}

/// Disjoint clusters covering every machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub clusters: Vec<Vec<String>>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster_of(&self, id: &str) -> Option<usize> {
        self.clusters.iter().position(|c| c.iter().any(|m| m == id))
    }

    pub fn machine_count(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }
}

/// Recursively splits the dendrogram at its root while the cophenetic
/// correlation of the current subtree is strictly above `thr_cc`.
///
/// Subtrees whose correlation is undefined (two leaves, or no spread) are not
/// split.
pub fn partition(dendrogram: &Dendrogram, matrix: &DissimilarityMatrix, thr_cc: f64) -> Result<Partition> {
    let mut clusters = Vec::new();
    split_into(dendrogram, matrix, thr_cc, &mut clusters)?;
    Ok(Partition { clusters })
}

fn split_into(d: &Dendrogram, matrix: &DissimilarityMatrix, thr_cc: f64, out: &mut Vec<Vec<String>>) -> Result<()> {
    let split = match cophenetic_correlation(matrix, d) {
        Ok(cc) => cc > thr_cc,
        Err(ClusterError::UndefinedCorrelation(_)) => false,
        Err(e) => return Err(e),
    };
    if split {
        let (left, right) = cut_at_highest_level(d)?;
        split_into(&left, matrix, thr_cc, out)?;
        split_into(&right, matrix, thr_cc, out)?;
    } else {
        out.push(d.leaf_order().into_iter().map(|i| d.leaves[i].clone()).collect());
    }
    Ok(())
}
