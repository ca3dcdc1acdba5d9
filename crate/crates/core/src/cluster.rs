//! Agglomerative clustering of configuration vectors.
//!
//! Distances are Euclidean; cluster distances are updated with the
//! Lance-Williams recurrences. When several pairs are equally close, the pair
//! whose cluster keys (smallest member id) sort first is merged, so the result
//! depends only on the ids and vectors, never on input order.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Average,
    Complete,
    Ward,
}

impl std::str::FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "ward" => Ok(Linkage::Ward),
            _ => Err(format!("unknown linkage `{s}` (average, complete, ward)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
}

/// One merge. Nodes `0..n` are leaves; merge `k` creates node `n + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge<T> {
    pub a: usize,
    pub b: usize,
    pub height: T,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram<T> {
    pub linkage: Linkage,
    /// Leaf labels, sorted; leaf node `k` is `leaves[k]`.
    pub leaves: Vec<String>,
    pub merges: Vec<Merge<T>>,
    /// Leaf indices in display order.
    pub leaf_order: Vec<usize>,
}

pub fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

pub fn cluster_models<T: Scalar>(
    vectors: &[(String, Vec<T>)],
    linkage: Linkage,
    _metric: Metric,
) -> Result<Dendrogram<T>> {
    if vectors.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: vectors.len(),
        });
    }
    let mut items: Vec<&(String, Vec<T>)> = vectors.iter().collect();
    items.sort_by(|x, y| x.0.cmp(&y.0));
    if let Some(w) = items.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Precondition(format!("duplicate config id {}", w[0].0)));
    }
    let dim = items[0].1.len();
    if let Some(bad) = items.iter().find(|(_, v)| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.1.len(),
        });
    }

    let n = items.len();
    // Working distance matrix over active clusters; Ward works on squares.
    let squared = linkage == Linkage::Ward;
    let mut dist = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..i {
            let d = euclidean(&items[i].1, &items[j].1);
            let d = if squared { d * d } else { d };
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    // Active slots: (node id, size). Slot i's key is items[i] label since
    // a merged cluster keeps the slot of its smaller-key member.
    let mut node: Vec<Option<(usize, usize)>> = (0..n).map(|i| Some((i, 1))).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(T, usize, usize)> = None;
        for i in 0..n {
            if node[i].is_none() {
                continue;
            }
            for j in i + 1..n {
                if node[j].is_none() {
                    continue;
                }
                // Slots are in key order, so (i, j) iterates pairs in
                // lexicographic key order; strict `<` keeps the first tie.
                if best.is_none_or(|(d, _, _)| dist[i][j] < d) {
                    best = Some((dist[i][j], i, j));
                }
            }
        }
        let (d, i, j) = best.expect("at least two active clusters");
        let (node_i, n_i) = node[i].expect("active");
        let (node_j, n_j) = node[j].expect("active");
        let height = if squared { d.sqrt() } else { d };
        merges.push(Merge {
            a: node_i,
            b: node_j,
            height,
            size: n_i + n_j,
        });
        let (ni, nj) = (T::of_usize(n_i), T::of_usize(n_j));
        for k in 0..n {
            if k == i || k == j {
                continue;
            }
            let Some((_, n_k)) = node[k] else { continue };
            let nk = T::of_usize(n_k);
            let (dki, dkj) = (dist[k][i], dist[k][j]);
            let updated = match linkage {
                Linkage::Average => (ni * dki + nj * dkj) / (ni + nj),
                Linkage::Complete => dki.max(dkj),
                Linkage::Ward => ((nk + ni) * dki + (nk + nj) * dkj - nk * d) / (nk + ni + nj),
            };
            dist[k][i] = updated;
            dist[i][k] = updated;
        }
        node[i] = Some((n + step, n_i + n_j));
        node[j] = None;
    }

    let leaf_order = display_order(n, &merges);
    Ok(Dendrogram {
        linkage,
        leaves: items.iter().map(|(id, _)| id.clone()).collect(),
        merges,
        leaf_order,
    })
}

fn display_order<T>(n: usize, merges: &[Merge<T>]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    let mut stack = vec![n + merges.len() - 1];
    while let Some(id) = stack.pop() {
        if id < n {
            out.push(id);
        } else {
            let m = &merges[id - n];
            stack.push(m.b);
            stack.push(m.a);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tree<T> {
    Leaf { id: String },
    Node { height: T, children: [Box<Tree<T>>; 2] },
}

impl<T: Scalar> Dendrogram<T> {
    pub fn ordered_labels(&self) -> Vec<&str> {
        self.leaf_order.iter().map(|&k| self.leaves[k].as_str()).collect()
    }

    fn height_of(&self, id: usize) -> T {
        if id < self.leaves.len() {
            T::zero()
        } else {
            self.merges[id - self.leaves.len()].height
        }
    }

    pub fn tree(&self) -> Tree<T> {
        self.subtree(self.leaves.len() + self.merges.len() - 1)
    }

    fn subtree(&self, id: usize) -> Tree<T> {
        let n = self.leaves.len();
        if id < n {
            return Tree::Leaf {
                id: self.leaves[id].clone(),
            };
        }
        let m = &self.merges[id - n];
        Tree::Node {
            height: m.height,
            children: [Box::new(self.subtree(m.a)), Box::new(self.subtree(m.b))],
        }
    }

    /// Newick string with branch lengths equal to height differences.
    pub fn to_newick(&self) -> String {
        let mut s = String::new();
        self.newick(self.leaves.len() + self.merges.len() - 1, &mut s);
        s.push(';');
        s
    }

    fn newick(&self, id: usize, out: &mut String) {
        let n = self.leaves.len();
        if id < n {
            out.push_str(&newick_label(&self.leaves[id]));
            return;
        }
        let m = &self.merges[id - n];
        out.push('(');
        for (k, child) in [m.a, m.b].into_iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            self.newick(child, out);
            let _ = write!(out, ":{}", (m.height - self.height_of(child)).as_f64());
        }
        out.push(')');
    }
}

fn newick_label(id: &str) -> String {
    if id.chars().any(|c| "()[]':;, \t".contains(c)) {
        format!("'{}'", id.replace('\'', "''"))
    } else {
        id.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(id: &str, x: &[f64]) -> (String, Vec<f64>) {
        (id.to_string(), x.to_vec())
    }

    #[test]
    fn three_four_five() {
        let d = cluster_models(&[v("a", &[0.0, 0.0]), v("b", &[3.0, 4.0])], Linkage::Average, Metric::Euclidean)
            .unwrap();
        assert_eq!(d.merges.len(), 1);
        assert_eq!(d.merges[0].height, 5.0);
        assert_eq!(d.to_newick(), "(a:5,b:5);");
    }

    #[test]
    fn identical_pair_first() {
        for linkage in [Linkage::Average, Linkage::Complete, Linkage::Ward] {
            let d = cluster_models(
                &[v("z", &[1.0, 1.0]), v("x", &[5.0, 0.0]), v("y", &[1.0, 1.0])],
                linkage,
                Metric::Euclidean,
            )
            .unwrap();
            let first = &d.merges[0];
            assert_eq!(first.height, 0.0);
            assert_eq!((d.leaves[first.a].as_str(), d.leaves[first.b].as_str()), ("y", "z"));
        }
    }

    #[test]
    fn input_errors() {
        assert!(matches!(
            cluster_models(&[v("a", &[0.0])], Linkage::Average, Metric::Euclidean),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(
            cluster_models(&[v("a", &[0.0]), v("b", &[0.0, 1.0])], Linkage::Average, Metric::Euclidean),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn newick_quotes_labels() {
        let d = cluster_models(&[v("gpt 4", &[0.0]), v("o'k", &[2.0])], Linkage::Complete, Metric::Euclidean)
            .unwrap();
        assert_eq!(d.to_newick(), "('gpt 4':2,'o''k':2);");
    }
}
