//! Similarity-driven layer grouping.
//!
//! Layers are compared by the cosine similarity of their flattened parameter
//! vectors (base and adapter). The resulting complete graph is partitioned
//! with unnormalised spectral clustering: the eigenvectors belonging to the
//! `k` smallest Laplacian eigenvalues embed every layer as a point in `R^k`,
//! and k-means on those points yields the groups.
//!
//! Cosine similarities can be negative, so the Laplacian is built on the
//! shifted affinity `w' = (1 + w) / 2` (zero diagonal). For a complete graph
//! the shift adds `(n·I − J)/2` to the raw Laplacian, which leaves the
//! eigenvectors unchanged and only makes the spectrum nonnegative. The cut
//! objective itself is evaluated on the raw similarities.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LayeredModel;
use crate::numerics::{cosine_similarity, kmeans, symmetric_eigh, DenseVector, SymmetricMatrix};

/// Pairwise cosine similarity of layer vectors; unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(SymmetricMatrix);

impl SimilarityMatrix {
    pub fn from_vectors(vectors: &[DenseVector]) -> Result<Self> {
        let n = vectors.len();
        let mut m = SymmetricMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
            for j in (i + 1)..n {
                m.set(i, j, cosine_similarity(&vectors[i], &vectors[j])?);
            }
        }
        Ok(SimilarityMatrix(m))
    }

    /// Wraps an arbitrary similarity table; diagonal must be 1 and entries in `[-1, 1]`.
    pub fn from_symmetric(m: SymmetricMatrix) -> Result<Self> {
        for i in 0..m.order() {
            if m.get(i, i) != 1.0 {
                return Err(Error::InvalidPartition(format!("similarity diagonal at {i} is not 1")));
            }
            if m.row(i).iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::InvalidPartition(format!("similarity row {i} outside [-1, 1]")));
            }
        }
        Ok(SimilarityMatrix(m))
    }

    pub fn order(&self) -> usize {
        self.0.order()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_symmetric(&self) -> &SymmetricMatrix {
        &self.0
    }

    /// Nonnegative graph weights `(1 + w_ij) / 2` off the diagonal, zero on it.
    pub fn shifted_affinity(&self) -> SymmetricMatrix {
        SymmetricMatrix::from_upper(
            self.order(),
            |i, j| {
                if i == j {
                    0.0
                } else {
                    (1.0 + self.get(i, j)) / 2.0
                }
            },
        )
    }

    /// `D − W'` over the shifted affinity.
    pub fn laplacian(&self) -> SymmetricMatrix {
        let w = self.shifted_affinity();
        let n = w.order();
        let mut lap = SymmetricMatrix::zeros(n);
        for i in 0..n {
            let degree: f64 = w.row(i).iter().sum();
            lap.set(i, i, degree);
            for j in (i + 1)..n {
                lap.set(i, j, -w.get(i, j));
            }
        }
        lap
    }
}

/// Cosine similarity between every pair of flattened layers.
pub fn similarity_matrix(model: &LayeredModel) -> Result<SimilarityMatrix> {
    let vectors = model.layers().iter().map(|l| l.flatten()).collect::<Result<Vec<_>>>()?;
    SimilarityMatrix::from_vectors(&vectors)
}

/// Disjoint, covering, non-empty groups of layer indices.
///
/// Stored canonically: members ascending, groups ordered by anchor (the
/// smallest member).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct GroupPartition {
    groups: Vec<Vec<usize>>,
    layers: usize,
}

impl GroupPartition {
    pub fn new(mut groups: Vec<Vec<usize>>, layers: usize) -> Result<Self> {
        let mut seen = vec![false; layers];
        for g in &mut groups {
            if g.is_empty() {
                return Err(Error::InvalidPartition("empty group".into()));
            }
            g.sort_unstable();
            for &i in g.iter() {
                if i >= layers {
                    return Err(Error::InvalidPartition(format!("layer {i} out of range 0..{layers}")));
                }
                if seen[i] {
                    return Err(Error::InvalidPartition(format!("layer {i} appears twice")));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("layer {missing} not covered")));
        }
        groups.sort_by_key(|g| g[0]);
        Ok(GroupPartition { groups, layers })
    }

    pub fn from_labels(labels: &[usize], k: usize) -> Result<Self> {
        let mut groups = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::InvalidPartition(format!("label {l} >= {k}")));
            }
            groups[l].push(i);
        }
        GroupPartition::new(groups, labels.len())
    }

    pub fn singletons(layers: usize) -> Self {
        GroupPartition {
            groups: (0..layers).map(|i| vec![i]).collect(),
            layers,
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn anchors(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g[0]).collect()
    }

    /// Group index of every layer.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.layers];
        for (n, g) in self.groups.iter().enumerate() {
            for &i in g {
                labels[i] = n;
            }
        }
        labels
    }

    pub fn is_singletons(&self) -> bool {
        self.groups.len() == self.layers
    }
}

impl TryFrom<Vec<Vec<usize>>> for GroupPartition {
    type Error = Error;

    fn try_from(groups: Vec<Vec<usize>>) -> Result<Self> {
        let layers = groups.iter().map(Vec::len).sum();
        GroupPartition::new(groups, layers)
    }
}

impl From<GroupPartition> for Vec<Vec<usize>> {
    fn from(p: GroupPartition) -> Self {
        p.groups
    }
}

/// Total similarity mass across groups, summed over ordered group pairs
/// (each unordered cross pair counts twice).
pub fn cut_value(w: &SimilarityMatrix, p: &GroupPartition) -> Result<f64> {
    if p.layers() != w.order() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} layers, similarity has order {}",
            p.layers(),
            w.order()
        )));
    }
    let labels = p.labels();
    let n = w.order();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] != labels[j] {
                total += w.get(i, j);
            }
        }
    }
    Ok(total)
}

/// Spectral partition of the similarity graph into `groups` clusters.
pub fn spectral_partition(w: &SimilarityMatrix, groups: usize, seed: u64) -> Result<GroupPartition> {
    let n = w.order();
    if groups == 0 || groups > n {
        return Err(Error::TooManyGroups { groups, layers: n });
    }
    if groups == 1 {
        return GroupPartition::new(vec![(0..n).collect()], n);
    }
    let eig = symmetric_eigh(&w.laplacian())?;
    let embedding: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..groups).map(|t| eig.eigenvectors[(i, t)]).collect())
        .collect();
    let spread = embedding
        .iter()
        .flat_map(|r| r.iter().zip(&embedding[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    if spread <= 1e-12 {
        return Err(Error::DegenerateEmbedding { rows: n, groups });
    }
    let assignment = kmeans(&embedding, groups, seed)?;
    GroupPartition::from_labels(&assignment.labels, groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingStrategy {
    Spectral,
    Random,
    Even,
}

impl GroupingStrategy {
    pub fn name(self) -> &'static str {
        match self {
            GroupingStrategy::Spectral => "spectral",
            GroupingStrategy::Random => "random",
            GroupingStrategy::Even => "even",
        }
    }
}

impl std::str::FromStr for GroupingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(GroupingStrategy::Spectral),
            "random" => Ok(GroupingStrategy::Random),
            "even" => Ok(GroupingStrategy::Even),
            other => Err(Error::config("grouping", format!("unknown strategy `{other}`"))),
        }
    }
}

/// Block sizes for `layers` split into `groups`: the remainder goes one
/// extra layer per group, starting at the front.
fn block_sizes(layers: usize, groups: usize) -> Vec<usize> {
    let (q, r) = (layers / groups, layers % groups);
    (0..groups).map(|g| q + usize::from(g < r)).collect()
}

fn cut_blocks(order: &[usize], sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        out.push(order[start..start + s].to_vec());
        start += s;
    }
    out
}

/// Contiguous depth blocks.
pub fn even_partition(layers: usize, groups: usize) -> Result<GroupPartition> {
    if groups == 0 || groups > layers {
        return Err(Error::TooManyGroups { groups, layers });
    }
    let order: Vec<usize> = (0..layers).collect();
    GroupPartition::new(cut_blocks(&order, &block_sizes(layers, groups)), layers)
}

/// A seeded shuffle cut into the even block sizes.
pub fn random_partition(layers: usize, groups: usize, seed: u64) -> Result<GroupPartition> {
    if groups == 0 || groups > layers {
        return Err(Error::TooManyGroups { groups, layers });
    }
    let mut order: Vec<usize> = (0..layers).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    GroupPartition::new(cut_blocks(&order, &block_sizes(layers, groups)), layers)
}

pub fn grouping_strategy(
    model: &LayeredModel,
    groups: usize,
    strategy: GroupingStrategy,
    seed: u64,
) -> Result<GroupPartition> {
    let layers = model.depth();
    match strategy {
        GroupingStrategy::Spectral => {
            if groups == 0 || groups > layers {
                return Err(Error::TooManyGroups { groups, layers });
            }
            spectral_partition(&similarity_matrix(model)?, groups, seed)
        }
        GroupingStrategy::Random => random_partition(layers, groups, seed),
        GroupingStrategy::Even => even_partition(layers, groups),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn hand_evaluated_similarity() {
        let vs = [
            v(&[1.0, 0.0, 0.0, 0.0]),
            v(&[1.0, 1.0, 0.0, 0.0]),
            v(&[0.0, 0.0, 2.0, -2.0]),
        ];
        let w = SimilarityMatrix::from_vectors(&vs).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expected = [[1.0, h, 0.0], [h, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((w.get(i, j) - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cut_examples() {
        let w = SimilarityMatrix::from_symmetric(
            SymmetricMatrix::from_matrix(Matrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 1.0]]).unwrap()).unwrap(),
        )
        .unwrap();
        let single = GroupPartition::new(vec![vec![0, 1]], 2).unwrap();
        assert_eq!(cut_value(&w, &single).unwrap(), 0.0);
        let split = GroupPartition::new(vec![vec![1], vec![0]], 2).unwrap();
        assert!((cut_value(&w, &split).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn group_order_is_canonical() {
        let a = GroupPartition::new(vec![vec![3, 1], vec![0, 2]], 4).unwrap();
        let b = GroupPartition::new(vec![vec![2, 0], vec![1, 3]], 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.groups(), &[vec![0, 2], vec![1, 3]]);
        assert_eq!(a.anchors(), vec![0, 1]);
    }

    #[test]
    fn invalid_partitions() {
        assert!(GroupPartition::new(vec![vec![0], vec![]], 1).is_err());
        assert!(GroupPartition::new(vec![vec![0, 1], vec![1]], 2).is_err());
        assert!(GroupPartition::new(vec![vec![0]], 2).is_err());
        assert!(GroupPartition::new(vec![vec![0, 5]], 2).is_err());
    }

    #[test]
    fn even_blocks() {
        let p = even_partition(8, 4).unwrap();
        assert_eq!(p.groups(), &[vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]);
        let sizes: Vec<usize> = even_partition(10, 4).unwrap().groups().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
        assert!(even_partition(3, 4).is_err());
    }

    #[test]
    fn random_is_reproducible() {
        assert_eq!(
            random_partition(12, 5, 77).unwrap(),
            random_partition(12, 5, 77).unwrap()
        );
        let mut sizes: Vec<usize> = random_partition(10, 4, 1)
            .unwrap()
            .groups()
            .iter()
            .map(Vec::len)
            .collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3, 3]);
    }

    #[test]
    fn json_is_list_of_lists() {
        let p = even_partition(5, 2).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[[0,1,2],[3,4]]");
        let back: GroupPartition = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<GroupPartition>("[[0,2]]").is_err());
    }

    #[test]
    fn laplacian_ground_state() {
        let vs: Vec<DenseVector> = (0..6)
            .map(|i| v(&[(i as f64).sin(), (i as f64 * 0.7).cos(), 1.0 - i as f64 * 0.3]))
            .collect();
        let w = SimilarityMatrix::from_vectors(&vs).unwrap();
        let eig = symmetric_eigh(&w.laplacian()).unwrap();
        assert!(eig.eigenvalues[0].abs() < 1e-8);
        let c = 1.0 / (6f64).sqrt();
        for x in eig.vector(0) {
            assert!((x - c).abs() < 1e-8);
        }
    }

    #[test]
    fn spectral_extremes() {
        let vs: Vec<DenseVector> = (0..5).map(|i| v(&[1.0, i as f64, (i * i) as f64 - 3.0])).collect();
        let w = SimilarityMatrix::from_vectors(&vs).unwrap();
        assert_eq!(spectral_partition(&w, 1, 0).unwrap().groups(), &[vec![0, 1, 2, 3, 4]]);
        assert!(spectral_partition(&w, 5, 0).unwrap().is_singletons());
        assert!(matches!(spectral_partition(&w, 6, 0), Err(Error::TooManyGroups { .. })));
    }
}
