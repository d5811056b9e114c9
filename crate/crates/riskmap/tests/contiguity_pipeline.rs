//! Whole-pipeline contiguity tests: a jittered county-style grid of 47
//! polygons checked against two independent adjacency oracles, one
//! combinatorial (lattice neighborhood rules) and one geometric
//! (brute-force pairwise comparison of snapped rings).

use std::collections::BTreeSet;

use riskmap::contiguity::{build_graph_from_polygons_with, ContiguityRule, PolygonFeature};
use riskmap::Graph64;

const ROWS: usize = 6;
const COLS: usize = 8;
/// One interior cell is removed, like a lake with no resident population.
const SKIP: (usize, usize) = (3, 4);
const TOL: f64 = 1e-9;

/// Deterministic per-corner jitter in [-amp, amp], decorrelated across
/// features so shared boundaries only survive snapping, not exact equality.
fn jitter(feature: usize, corner: usize, axis: usize, amp: f64) -> f64 {
    let mut h = (feature as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (corner as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (axis as u64 + 1).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    h = h.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    h ^= h >> 27;
    let unit = (h % 2_000_001) as f64 / 1_000_000.0 - 1.0;
    unit * amp
}

fn cells() -> Vec<(usize, usize)> {
    (0..ROWS)
        .flat_map(|r| (0..COLS).map(move |c| (r, c)))
        .filter(|&rc| rc != SKIP)
        .collect()
}

fn cell_id(r: usize, c: usize) -> String {
    format!("r{r}c{c}")
}

/// 47 unit squares on integer corners, each corner shifted by its own
/// jitter. The bounding box is 8 x 6, so the default snap cell is
/// TOL * 10 = 1e-8 and any amp well below 5e-9 keeps corners coincident.
fn grid_features(amp: f64) -> Vec<PolygonFeature<f64>> {
    cells()
        .iter()
        .enumerate()
        .map(|(k, &(r, c))| {
            let base = [
                [c as f64, r as f64],
                [c as f64 + 1.0, r as f64],
                [c as f64 + 1.0, r as f64 + 1.0],
                [c as f64, r as f64 + 1.0],
            ];
            let mut ring: Vec<[f64; 2]> = (0..4)
                .map(|i| {
                    [
                        base[i][0] + jitter(k, i, 0, amp),
                        base[i][1] + jitter(k, i, 1, amp),
                    ]
                })
                .collect();
            ring.push(ring[0]);
            PolygonFeature::simple(cell_id(r, c), ring)
        })
        .collect()
}

fn pair_key(a: String, b: String) -> (String, String) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn graph_edge_ids(g: &Graph64) -> BTreeSet<(String, String)> {
    g.edges()
        .into_iter()
        .map(|(i, j, _)| pair_key(g.regions()[i].id.clone(), g.regions()[j].id.clone()))
        .collect()
}

/// Oracle 1: lattice neighborhoods. Rook shares a side (one step along an
/// axis); queen also shares a corner (one diagonal step).
fn lattice_oracle(rule: ContiguityRule) -> BTreeSet<(String, String)> {
    let present: BTreeSet<(usize, usize)> = cells().into_iter().collect();
    let steps: &[(i64, i64)] = match rule {
        ContiguityRule::Rook => &[(0, 1), (1, 0)],
        ContiguityRule::Queen => &[(0, 1), (1, 0), (1, 1), (1, -1)],
    };
    let mut out = BTreeSet::new();
    for &(r, c) in &present {
        for &(dr, dc) in steps {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            if nr < 0 || nc < 0 {
                continue;
            }
            let n = (nr as usize, nc as usize);
            if present.contains(&n) {
                out.insert(pair_key(cell_id(r, c), cell_id(n.0, n.1)));
            }
        }
    }
    out
}

/// Snap every ring to the same integer grid the builder documents:
/// round(coord / (tol * bbox diagonal)).
fn snap_rings(features: &[PolygonFeature<f64>], tol: f64) -> Vec<Vec<(i64, i64)>> {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for f in features {
        for part in &f.polygons {
            for ring in part {
                for p in ring {
                    for a in 0..2 {
                        lo[a] = lo[a].min(p[a]);
                        hi[a] = hi[a].max(p[a]);
                    }
                }
            }
        }
    }
    let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt();
    let cell = tol * diag;
    features
        .iter()
        .map(|f| {
            let ring = &f.polygons[0][0];
            let mut pts: Vec<(i64, i64)> = ring
                .iter()
                .map(|p| ((p[0] / cell).round() as i64, (p[1] / cell).round() as i64))
                .collect();
            if pts.len() > 1 && pts.first() == pts.last() {
                pts.pop();
            }
            pts
        })
        .collect()
}

fn ring_edges(pts: &[(i64, i64)]) -> BTreeSet<((i64, i64), (i64, i64))> {
    (0..pts.len())
        .map(|k| {
            let a = pts[k];
            let b = pts[(k + 1) % pts.len()];
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        })
        .collect()
}

/// Oracle 2: brute-force pairwise scan over snapped rings, no hashing or
/// grouping shared with the builder.
fn geometric_oracle(
    features: &[PolygonFeature<f64>],
    rule: ContiguityRule,
    tol: f64,
) -> BTreeSet<(String, String)> {
    let snapped = snap_rings(features, tol);
    let mut out = BTreeSet::new();
    for i in 0..snapped.len() {
        for j in (i + 1)..snapped.len() {
            let touch = match rule {
                ContiguityRule::Queen => {
                    snapped[i].iter().any(|p| snapped[j].contains(p))
                }
                ContiguityRule::Rook => {
                    let ej = ring_edges(&snapped[j]);
                    ring_edges(&snapped[i]).iter().any(|e| ej.contains(e))
                }
            };
            if touch {
                out.insert(pair_key(features[i].id.clone(), features[j].id.clone()));
            }
        }
    }
    out
}

#[test]
fn jittered_grid_matches_both_oracles() {
    let features = grid_features(2e-10);
    let rook = build_graph_from_polygons_with(&features, ContiguityRule::Rook, TOL).unwrap();
    let queen = build_graph_from_polygons_with(&features, ContiguityRule::Queen, TOL).unwrap();
    assert_eq!(rook.n_regions(), 47);
    assert_eq!(queen.n_regions(), 47);

    let rook_edges = graph_edge_ids(&rook);
    let queen_edges = graph_edge_ids(&queen);
    assert_eq!(rook_edges, lattice_oracle(ContiguityRule::Rook));
    assert_eq!(queen_edges, lattice_oracle(ContiguityRule::Queen));
    assert_eq!(rook_edges, geometric_oracle(&features, ContiguityRule::Rook, TOL));
    assert_eq!(queen_edges, geometric_oracle(&features, ContiguityRule::Queen, TOL));

    // 6x8 grid: 42 + 40 side pairs and 70 corner pairs, minus the 4 + 4
    // adjacencies lost with the removed interior cell.
    assert_eq!(rook_edges.len(), 78);
    assert_eq!(queen_edges.len(), 144);
    assert!(rook_edges.is_subset(&queen_edges));
}

#[test]
fn adjacency_is_symmetric_with_no_self_loops() {
    let features = grid_features(2e-10);
    let g = build_graph_from_polygons_with(&features, ContiguityRule::Queen, TOL).unwrap();
    for i in 0..g.n_regions() {
        for &j in g.neighbors(i) {
            assert_ne!(i, j, "self loop at region {i}");
            assert!(
                g.neighbors(j).contains(&i),
                "edge {i}->{j} has no mirror"
            );
        }
    }
}

#[test]
fn build_is_deterministic() {
    let features = grid_features(2e-10);
    let a = build_graph_from_polygons_with(&features, ContiguityRule::Queen, TOL).unwrap();
    let b = build_graph_from_polygons_with(&features, ContiguityRule::Queen, TOL).unwrap();
    assert_eq!(a.fingerprint(), b.fingerprint());
    assert_eq!(graph_edge_ids(&a), graph_edge_ids(&b));
}

#[test]
fn jitter_beyond_the_snap_cell_splits_boundaries() {
    // amp of five snap cells: shared corners usually round apart, and the
    // builder must agree exactly with the brute-force scan on what is left.
    let features = grid_features(5e-8);
    let rook = build_graph_from_polygons_with(&features, ContiguityRule::Rook, TOL).unwrap();
    let queen = build_graph_from_polygons_with(&features, ContiguityRule::Queen, TOL).unwrap();
    let rook_edges = graph_edge_ids(&rook);
    let queen_edges = graph_edge_ids(&queen);
    assert_eq!(rook_edges, geometric_oracle(&features, ContiguityRule::Rook, TOL));
    assert_eq!(queen_edges, geometric_oracle(&features, ContiguityRule::Queen, TOL));
    assert!(
        rook_edges.len() < 78,
        "expected lost side adjacencies, still have {}",
        rook_edges.len()
    );
    assert!(rook_edges.is_subset(&queen_edges));
}
