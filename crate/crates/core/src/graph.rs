//! Per-user psychological graph, the entity/post bipartite graph and
//! symmetric degree normalization.

use serde::Serialize;
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;
use thiserror::Error;

use crate::autodiff::{CsrMatrix, LinearOperator, Matrix};
use crate::embeddings::EmbeddingTable;
use crate::lexicon::{EntitySet, Lexicon};

/// Node count above which normalized adjacencies are stored sparse.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("adjacency must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("adjacency is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("adjacency entry ({0}, {1}) is not 0 or 1")]
    NotBinary(usize, usize),
}

/// Symmetric binary adjacency kept as sorted neighbor lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn empty(n: usize) -> Self {
        Self {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Every pair of distinct nodes connected.
    pub fn complete(n: usize) -> Self {
        Self {
            neighbors: (0..n)
                .map(|i| (0..n).filter(|&j| j != i).collect())
                .collect(),
        }
    }

    /// Builds from undirected edges; duplicates collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut sets = vec![BTreeSet::new(); n];
        for (i, j) in edges {
            sets[i].insert(j);
            sets[j].insert(i);
        }
        Self {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn from_dense(m: &Matrix) -> Result<Self, GraphError> {
        let (r, c) = m.shape();
        if r != c {
            return Err(GraphError::NotSquare(r, c));
        }
        let mut neighbors = vec![Vec::new(); r];
        for i in 0..r {
            for j in 0..r {
                let v = m.get(i, j);
                if v != 0.0 && v != 1.0 {
                    return Err(GraphError::NotBinary(i, j));
                }
                if v != m.get(j, i) {
                    return Err(GraphError::Asymmetric(i, j));
                }
                if v == 1.0 {
                    neighbors[i].push(j);
                }
            }
        }
        Ok(Self { neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Undirected edges as `(i, j)` with `i <= j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, ns) in self.neighbors.iter().enumerate() {
            out.extend(ns.iter().filter(|&&j| j >= i).map(|&j| (i, j)));
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.len();
        let mut m = Matrix::zeros(n, n);
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &j in ns {
                m.set(i, j, 1.0);
            }
        }
        m
    }
}

/// `D^{-1/2} (A [+ I]) D^{-1/2}` as a constant operator for the tape.
#[derive(Clone, Debug)]
pub struct NormalizedAdjacency {
    pub operator: Arc<LinearOperator>,
    pub self_loops: bool,
}

impl NormalizedAdjacency {
    pub fn size(&self) -> usize {
        self.operator.shape().0
    }

    pub fn to_dense(&self) -> Matrix {
        self.operator.to_dense()
    }
}

/// Symmetric normalization. Nodes of degree zero get all-zero rows.
pub fn normalize(a: &Adjacency, self_loops: bool) -> NormalizedAdjacency {
    let n = a.len();
    let loop_w = usize::from(self_loops);
    let deg: Vec<f64> = (0..n).map(|i| (a.degree(i) + loop_w) as f64).collect();
    // 1 / sqrt(d_i d_j) keeps 1/n exact on complete graphs with self loops
    let weight = |i: usize, j: usize| (deg[i] * deg[j]).sqrt().recip();
    let operator = if n <= DENSE_LIMIT {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            if self_loops {
                m.set(i, i, weight(i, i));
            }
            for &j in a.neighbors(i) {
                m.set(i, j, weight(i, j));
            }
        }
        LinearOperator::Dense(m)
    } else {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            let mut cols: Vec<usize> = a.neighbors(i).to_vec();
            if self_loops {
                let at = cols.partition_point(|&c| c < i);
                cols.insert(at, i);
            }
            for j in cols {
                indices.push(j);
                values.push(weight(i, j));
            }
            indptr.push(indices.len());
        }
        LinearOperator::Sparse(CsrMatrix {
            rows: n,
            cols: n,
            indptr,
            indices,
            values,
        })
    };
    NormalizedAdjacency {
        operator: Arc::new(operator),
        self_loops,
    }
}

/// Normalizes a dense binary matrix, rejecting asymmetric input.
pub fn normalize_adjacency(a: &Matrix, self_loops: bool) -> Result<NormalizedAdjacency, GraphError> {
    Ok(normalize(&Adjacency::from_dense(a)?, self_loops))
}

/// Entities of one user, their embeddings, and co-category edges.
#[derive(Clone, Debug)]
pub struct PsychGraph {
    pub entities: EntitySet,
    pub node_features: Matrix,
    pub adjacency: Adjacency,
}

impl PsychGraph {
    pub fn num_nodes(&self) -> usize {
        self.entities.len()
    }
}

/// Two entities are linked when their category sets intersect; no self edges.
pub fn co_category_adjacency(entities: &EntitySet, lexicon: &Lexicon) -> Adjacency {
    let mut by_category: HashMap<u32, Vec<usize>> = HashMap::new();
    for (i, e) in entities.iter().enumerate() {
        for c in lexicon.category_ids(e) {
            by_category.entry(c).or_default().push(i);
        }
    }
    let mut edges = Vec::new();
    for members in by_category.values() {
        for (a, &i) in members.iter().enumerate() {
            edges.extend(members[a + 1..].iter().map(|&j| (i, j)));
        }
    }
    Adjacency::from_edges(entities.len(), edges)
}

pub fn build_psych_graph(entities: &EntitySet, lexicon: &Lexicon, table: &EmbeddingTable) -> PsychGraph {
    let k = entities.len();
    let mut node_features = Matrix::zeros(k, table.dim());
    for (i, e) in entities.iter().enumerate() {
        node_features.row_mut(i).copy_from_slice(&table.embed(e));
    }
    PsychGraph {
        entities: entities.clone(),
        node_features,
        adjacency: co_category_adjacency(entities, lexicon),
    }
}

/// Entity/post incidence graph: rows `0..K` are entities, `K..K+N` posts.
#[derive(Clone, Debug)]
pub struct BipartiteGraph {
    pub num_entities: usize,
    pub num_posts: usize,
    pub adjacency: Adjacency,
}

impl BipartiteGraph {
    /// `(entity, post)` pairs with an edge, sorted.
    pub fn incidences(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .edges()
            .into_iter()
            .map(|(i, j)| (i, j - self.num_entities))
            .collect()
    }
}

pub fn build_bipartite<S: AsRef<str>>(entities: &EntitySet, posts: &[Vec<S>]) -> BipartiteGraph {
    let k = entities.len();
    let index: HashMap<&str, usize> = entities.iter().enumerate().map(|(i, e)| (e, i)).collect();
    let mut edges = Vec::new();
    for (j, post) in posts.iter().enumerate() {
        for tok in post {
            if let Some(&i) = index.get(tok.as_ref()) {
                edges.push((i, k + j));
            }
        }
    }
    BipartiteGraph {
        num_entities: k,
        num_posts: posts.len(),
        adjacency: Adjacency::from_edges(k + posts.len(), edges),
    }
}

/// Inspection dump of one user's graphs.
#[derive(Clone, Debug, Serialize)]
pub struct GraphDump {
    pub entities: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    /// `(entity, post)` index pairs.
    pub bipartite_edges: Vec<(usize, usize)>,
}

impl GraphDump {
    pub fn new(graph: &PsychGraph, bipartite: &BipartiteGraph) -> Self {
        Self {
            entities: graph.entities.entities.clone(),
            edges: graph.adjacency.edges(),
            bipartite_edges: bipartite.incidences(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{extract_entities, fixture_lexicon};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(words: &[&str]) -> EntitySet {
        EntitySet {
            entities: words.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn brute_force_adjacency(entities: &EntitySet, lex: &Lexicon) -> Matrix {
        let k = entities.len();
        let cats: Vec<_> = entities.iter().map(|e| lex.category_ids(e)).collect();
        let mut m = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                if i != j && !cats[i].is_disjoint(&cats[j]) {
                    m.set(i, j, 1.0);
                }
            }
        }
        m
    }

    fn random_entity_pool(rng: &mut ChaCha8Rng, lex: &Lexicon, count: usize) -> EntitySet {
        let mut words = Vec::new();
        let mut seen = std::collections::HashSet::new();
        while words.len() < count {
            let e = lex.entries().choose(rng).unwrap();
            let stem = e.pattern.trim_end_matches('*');
            let w = if e.is_wildcard() {
                format!("{stem}{}", ["", "s", "ed", "ing", "ly"][rng.gen_range(0..5)])
            } else {
                stem.to_string()
            };
            if seen.insert(w.clone()) {
                words.push(w);
            }
            if seen.len() > 200 {
                break;
            }
        }
        EntitySet { entities: words }
    }

    #[test]
    fn co_category_edges_follow_shared_categories() {
        let text = "%\n1\taffect\n2\tposemo\n3\tnegemo\n4\tachieve\n%\nhappy\t1\t2\nsad\t1\t3\nwin\t4\n";
        let lex = Lexicon::parse_dic(text).unwrap();
        let table = EmbeddingTable::fallback_only(3, 1).unwrap();
        let g = build_psych_graph(&set(&["happy", "sad", "win"]), &lex, &table);
        assert_eq!(g.adjacency.edges(), vec![(0, 1)]);
        assert_eq!(g.node_features.shape(), (3, 3));
        assert_eq!(g.node_features.row(2), table.embed("win").as_slice());
    }

    #[test]
    fn shared_category_gives_complete_graph() {
        let lex = fixture_lexicon();
        let table = EmbeddingTable::fallback_only(4, 1).unwrap();
        let g = build_psych_graph(&set(&["happy", "sad", "joyful", "angry"]), &lex, &table);
        assert_eq!(g.adjacency, Adjacency::complete(4));
    }

    #[test]
    fn empty_entity_set_gives_empty_graph() {
        let lex = fixture_lexicon();
        let table = EmbeddingTable::fallback_only(4, 1).unwrap();
        let g = build_psych_graph(&EntitySet::default(), &lex, &table);
        assert_eq!(g.num_nodes(), 0);
        assert_eq!(g.node_features.shape(), (0, 4));
    }

    #[test]
    fn adjacency_matches_brute_force_on_random_entities() {
        let lex = fixture_lexicon();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let entities = random_entity_pool(&mut rng, &lex, 50);
            let a = co_category_adjacency(&entities, &lex);
            assert_eq!(a.to_dense(), brute_force_adjacency(&entities, &lex));
        }
    }

    #[test]
    fn adjacency_is_permutation_equivariant() {
        let lex = fixture_lexicon();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let entities = random_entity_pool(&mut rng, &lex, 20);
        let mut perm: Vec<usize> = (0..entities.len()).collect();
        perm.shuffle(&mut rng);
        let permuted = EntitySet {
            entities: perm.iter().map(|&i| entities.entities[i].clone()).collect(),
        };
        let a = co_category_adjacency(&entities, &lex);
        let b = co_category_adjacency(&permuted, &lex);
        for (pi, &i) in perm.iter().enumerate() {
            for (pj, &j) in perm.iter().enumerate() {
                assert_eq!(a.has_edge(i, j), b.has_edge(pi, pj));
            }
        }
    }

    #[test]
    fn bipartite_edges_follow_containment() {
        let entities = set(&["happy"]);
        let posts = vec![vec!["happy", "day"], vec!["rain"], vec!["so", "happy"]];
        let b = build_bipartite(&entities, &posts);
        assert_eq!(b.incidences(), vec![(0, 0), (0, 2)]);
        assert_eq!(b.adjacency.edges(), vec![(0, 1), (0, 3)]);

        let tiny = build_bipartite(&entities, &[vec!["happy"]]);
        assert_eq!(
            tiny.adjacency.to_dense(),
            Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])
        );
    }

    #[test]
    fn bipartite_matches_containment_scan_on_random_corpus() {
        let lex = fixture_lexicon();
        let vocab = ["the", "happy", "sad", "friends", "thinking", "game", "a", "winner"];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let posts: Vec<Vec<&str>> = (0..rng.gen_range(1..6))
                .map(|_| (0..rng.gen_range(0..8)).map(|_| *vocab.choose(&mut rng).unwrap()).collect())
                .collect();
            let entities = extract_entities(&lex, &posts);
            let b = build_bipartite(&entities, &posts);
            let k = entities.len();
            let dense = b.adjacency.to_dense();
            for i in 0..k + posts.len() {
                for j in 0..k + posts.len() {
                    let expected = if i < k && j >= k {
                        posts[j - k].contains(&entities.entities[i].as_str())
                    } else if j < k && i >= k {
                        posts[i - k].contains(&entities.entities[j].as_str())
                    } else {
                        false
                    };
                    assert_eq!(dense.get(i, j) == 1.0, expected);
                }
            }
        }
    }

    #[test]
    fn normalization_closed_forms() {
        let two = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let n = normalize_adjacency(&two, true).unwrap();
        assert_eq!(n.to_dense(), Matrix::filled(2, 2, 0.5));

        let single = normalize_adjacency(&Matrix::zeros(1, 1), true).unwrap();
        assert_eq!(single.to_dense(), Matrix::filled(1, 1, 1.0));

        let isolated = normalize_adjacency(&Matrix::zeros(1, 1), false).unwrap();
        assert_eq!(isolated.to_dense(), Matrix::zeros(1, 1));

        for k in 1..=12 {
            let full = normalize(&Adjacency::complete(k), true);
            assert_eq!(full.to_dense(), Matrix::filled(k, k, 1.0 / k as f64), "k={k}");
        }
    }

    #[test]
    fn asymmetric_or_non_binary_input_is_rejected() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert_eq!(
            normalize_adjacency(&m, true).unwrap_err(),
            GraphError::Asymmetric(0, 1)
        );
        let m = Matrix::from_rows(&[vec![0.0, 2.0], vec![2.0, 0.0]]);
        assert!(normalize_adjacency(&m, true).is_err());
        assert!(normalize_adjacency(&Matrix::zeros(2, 3), true).is_err());
    }

    fn spectral_radius(m: &Matrix, rng: &mut ChaCha8Rng) -> f64 {
        let n = m.rows();
        let mut v = Matrix::from_vec(n, 1, (0..n).map(|_| rng.gen_range(0.1..1.0)).collect()).unwrap();
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = m.matmul(&v);
            let norm = w.frobenius_norm();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm / v.frobenius_norm();
            v = w.scale(1.0 / norm);
        }
        lambda
    }

    #[test]
    fn normalized_output_is_symmetric_with_radius_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..40 {
            let n = rng.gen_range(1..12);
            let p = rng.gen_range(0.1..0.9);
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(p) {
                        edges.push((i, j));
                    }
                }
            }
            let a = Adjacency::from_edges(n, edges);
            for self_loops in [true, false] {
                let m = normalize(&a, self_loops).to_dense();
                assert_eq!(m, m.transpose(), "trial {trial}");
                assert!(m.data().iter().all(|&v| v >= 0.0));
                assert!(spectral_radius(&m, &mut rng) <= 1.0 + 1e-6);
                for i in 0..n {
                    let row_sum: f64 = m.row(i).iter().sum();
                    assert_eq!(row_sum == 0.0, a.degree(i) == 0 && !self_loops);
                }
            }
        }
    }

    #[test]
    fn sparse_representation_above_dense_limit() {
        let n = DENSE_LIMIT + 5;
        let a = Adjacency::from_edges(n, (0..n - 1).map(|i| (i, i + 1)));
        let norm = normalize(&a, true);
        assert!(matches!(norm.operator.as_ref(), LinearOperator::Sparse(_)));
        // path graph: interior nodes have degree 3 with the self loop
        let dense = norm.to_dense();
        assert!((dense.get(5, 6) - 1.0 / 3.0).abs() < 1e-15);
        assert!((dense.get(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dump_lists_edges_and_incidences() {
        let lex = fixture_lexicon();
        let table = EmbeddingTable::fallback_only(2, 1).unwrap();
        let posts = vec![vec!["happy", "sad"], vec!["friend"]];
        let entities = extract_entities(&lex, &posts);
        let dump = GraphDump::new(
            &build_psych_graph(&entities, &lex, &table),
            &build_bipartite(&entities, &posts),
        );
        let json = serde_json::to_value(&dump).unwrap();
        assert_eq!(json["entities"], serde_json::json!(["happy", "sad", "friend"]));
        assert_eq!(json["edges"], serde_json::json!([[0, 1]]));
        assert_eq!(json["bipartite_edges"], serde_json::json!([[0, 0], [1, 0], [2, 1]]));
    }
}
