use std::collections::BTreeSet;

use proptest::prelude::*;
use styloshift::cluster::{cluster_models, euclidean, Linkage, Metric};

type Set = BTreeSet<usize>;

/// Brute force: recompute every cluster distance from its definition.
fn oracle(points: &[Vec<f64>], linkage: Linkage) -> Vec<(Set, Set, f64)> {
    let mut clusters: Vec<Set> = (0..points.len()).map(|i| BTreeSet::from([i])).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let d = cluster_distance(points, &clusters[a], &clusters[b], linkage);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let (d, a, b) = best.unwrap();
        let sb = clusters.remove(b);
        let sa = clusters[a].clone();
        clusters[a].extend(sb.iter().copied());
        out.push((sa, sb, d));
        // keep clusters sorted by smallest member so ties break by key
        clusters.sort_by_key(|c| *c.iter().next().unwrap());
    }
    out
}

fn cluster_distance(points: &[Vec<f64>], a: &Set, b: &Set, linkage: Linkage) -> f64 {
    let pair = |i: usize, j: usize| euclidean(&points[i], &points[j]);
    match linkage {
        Linkage::Average => {
            let s: f64 = a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).map(|(i, j)| pair(i, j)).sum();
            s / (a.len() * b.len()) as f64
        }
        Linkage::Complete => a
            .iter()
            .flat_map(|&i| b.iter().map(move |&j| (i, j)))
            .map(|(i, j)| pair(i, j))
            .fold(0.0, f64::max),
        Linkage::Ward => {
            let centroid = |s: &Set| {
                let mut c = vec![0.0; points[0].len()];
                for &i in s {
                    for (k, x) in points[i].iter().enumerate() {
                        c[k] += x / s.len() as f64;
                    }
                }
                c
            };
            let (na, nb) = (a.len() as f64, b.len() as f64);
            (2.0 * na * nb / (na + nb)).sqrt() * euclidean(&centroid(a), &centroid(b))
        }
    }
}

fn members(d: &styloshift::cluster::Dendrogram<f64>, node: usize) -> Set {
    let n = d.leaves.len();
    if node < n {
        return BTreeSet::from([node]);
    }
    let m = &d.merges[node - n];
    let mut s = members(d, m.a);
    s.extend(members(d, m.b));
    s
}

fn check(points: Vec<Vec<f64>>, linkage: Linkage) -> Result<(), TestCaseError> {
    // Leaf ids sort in index order so leaf k is points[k].
    let input: Vec<(String, Vec<f64>)> =
        points.iter().enumerate().map(|(k, p)| (format!("m{k}"), p.clone())).collect();
    let d = cluster_models(&input, linkage, Metric::Euclidean).unwrap();
    let want = oracle(&points, linkage);
    prop_assert_eq!(d.merges.len(), points.len() - 1);
    for (m, (sa, sb, h)) in d.merges.iter().zip(&want) {
        prop_assert_eq!(&members(&d, m.a), sa);
        prop_assert_eq!(&members(&d, m.b), sb);
        prop_assert!((m.height - h).abs() <= 1e-9 * h.max(1.0), "{} vs {}", m.height, h);
    }
    let mut order = d.leaf_order.clone();
    order.sort();
    prop_assert_eq!(order, (0..points.len()).collect::<Vec<_>>());
    Ok(())
}

fn arb_points() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=6, 1usize..=4).prop_flat_map(|(n, dim)| {
        proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, dim), n)
    })
}

proptest! {
    #[test]
    fn average_matches_oracle(p in arb_points()) { check(p, Linkage::Average)?; }

    #[test]
    fn complete_matches_oracle(p in arb_points()) { check(p, Linkage::Complete)?; }

    #[test]
    fn ward_matches_oracle(p in arb_points()) { check(p, Linkage::Ward)?; }

    #[test]
    fn heights_monotone(p in arb_points()) {
        for linkage in [Linkage::Average, Linkage::Complete, Linkage::Ward] {
            let input: Vec<_> = p.iter().enumerate().map(|(k, v)| (format!("m{k}"), v.clone())).collect();
            let d = cluster_models(&input, linkage, Metric::Euclidean).unwrap();
            for w in d.merges.windows(2) {
                prop_assert!(w[0].height <= w[1].height + 1e-12);
            }
        }
    }

    #[test]
    fn shuffled_input_gives_same_tree(p in arb_points(), rot in 0usize..6) {
        let input: Vec<_> = p.iter().enumerate().map(|(k, v)| (format!("m{k}"), v.clone())).collect();
        let mut shuffled = input.clone();
        let r = rot % shuffled.len();
        shuffled.rotate_left(r);
        shuffled.reverse();
        for linkage in [Linkage::Average, Linkage::Complete, Linkage::Ward] {
            let a = cluster_models(&input, linkage, Metric::Euclidean).unwrap();
            let b = cluster_models(&shuffled, linkage, Metric::Euclidean).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn four_hand_picked_vectors() {
    let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![5.0, 0.0], vec![5.0, 2.5]];
    for linkage in [Linkage::Average, Linkage::Complete, Linkage::Ward] {
        check(pts.clone(), linkage).unwrap();
    }
    let input: Vec<_> = pts.iter().enumerate().map(|(k, v)| (format!("m{k}"), v.clone())).collect();
    let d = cluster_models(&input, Linkage::Average, Metric::Euclidean).unwrap();
    assert_eq!(d.merges[0].height, 1.0);
    assert_eq!(d.merges[1].height, 2.5);
    // average of 5, 5.590.., 4, 4.716..
    let top = (5.0 + 31.25f64.sqrt() + 4.0 + 22.25f64.sqrt()) / 4.0;
    assert!((d.merges[2].height - top).abs() < 1e-12);
}

#[test]
fn exact_ties_break_by_id() {
    // Equilateral-ish ties: all three pairwise distances equal.
    let h = 3f64.sqrt() / 2.0;
    let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, h]];
    let input: Vec<_> = ["c", "a", "b"].iter().zip(&pts).map(|(k, v)| (k.to_string(), v.clone())).collect();
    let d = cluster_models(&input, Linkage::Complete, Metric::Euclidean).unwrap();
    let first = &d.merges[0];
    let dist_ab = euclidean(&pts[1], &pts[2]);
    let dist_ac = euclidean(&pts[1], &pts[0]);
    let expect = if dist_ab <= dist_ac { ("a", "b") } else { ("a", "c") };
    assert_eq!((d.leaves[first.a].as_str(), d.leaves[first.b].as_str()), expect);
}
