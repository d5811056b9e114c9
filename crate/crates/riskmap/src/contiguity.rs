//! Adjacency from polygon boundaries under rook or queen contiguity.
//!
//! Coordinates are snapped to an integer grid before any comparison
//! (default cell: 1e-9 of the bounding-box diagonal), which heals the
//! near-coincident vertices common in digitized boundary files. All
//! geometric predicates after snapping use exact integer arithmetic.
//!
//! Neighbor detection assumes conforming boundaries: features that touch
//! share the vertices along their common border, the usual situation for
//! administrative boundary files. Queen contiguity connects features with
//! any shared snapped vertex; rook requires a shared snapped boundary
//! segment of positive length.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{AdjacencyGraph, Region};
use crate::scalar::Scalar;

/// Default snapping cell size relative to the bounding-box diagonal.
pub const DEFAULT_SNAP_TOLERANCE: f64 = 1e-9;

/// Which boundary contacts count as adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContiguityRule {
    /// Shared boundary segment of positive length.
    Rook,
    /// Any shared boundary point.
    Queen,
}

impl ContiguityRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rook" => Ok(ContiguityRule::Rook),
            "queen" => Ok(ContiguityRule::Queen),
            other => Err(Error::Config(format!(
                "unknown contiguity rule '{other}' (expected 'rook' or 'queen')"
            ))),
        }
    }
}

impl fmt::Display for ContiguityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContiguityRule::Rook => write!(f, "rook"),
            ContiguityRule::Queen => write!(f, "queen"),
        }
    }
}

/// One areal unit's boundary geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonFeature<F> {
    pub id: String,
    /// Display name; the id stands in when absent.
    pub name: Option<String>,
    /// `polygons[p][r]` is ring `r` of part `p`: ring 0 is the outer
    /// boundary, later rings are holes. Every ring repeats its first
    /// point at the end.
    pub polygons: Vec<Vec<Vec<[F; 2]>>>,
}

impl<F: Scalar> PolygonFeature<F> {
    /// Single-part, hole-free feature from one closed ring.
    pub fn simple(id: impl Into<String>, ring: Vec<[F; 2]>) -> Self {
        PolygonFeature { id: id.into(), name: None, polygons: vec![vec![ring]] }
    }

    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.id)
    }
}

type IPoint = (i64, i64);

/// Boundary of one feature on the snapped grid: closed rings with the
/// duplicate closing point dropped and consecutive duplicates merged.
struct SnappedFeature {
    rings: Vec<Vec<IPoint>>,
}

fn orient(a: IPoint, b: IPoint, c: IPoint) -> i128 {
    let abx = (b.0 - a.0) as i128;
    let aby = (b.1 - a.1) as i128;
    let acx = (c.0 - a.0) as i128;
    let acy = (c.1 - a.1) as i128;
    abx * acy - aby * acx
}

/// Whether `p`, known collinear with segment `ab`, lies on it.
fn on_collinear_segment(a: IPoint, b: IPoint, p: IPoint) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Whether closed segments `ab` and `cd` share at least one point.
fn segments_touch(a: IPoint, b: IPoint, c: IPoint, d: IPoint) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)) {
        return true;
    }
    (d1 == 0 && on_collinear_segment(c, d, a))
        || (d2 == 0 && on_collinear_segment(c, d, b))
        || (d3 == 0 && on_collinear_segment(a, b, c))
        || (d4 == 0 && on_collinear_segment(a, b, d))
}

fn snap_feature<F: Scalar>(feature: &PolygonFeature<F>, cell: f64) -> Result<SnappedFeature> {
    let fail = |msg: String| Err(Error::Geometry(format!("feature '{}': {msg}", feature.id)));
    if feature.polygons.is_empty() || feature.polygons.iter().any(Vec::is_empty) {
        return fail("empty geometry".into());
    }
    let mut rings = Vec::new();
    for part in &feature.polygons {
        for ring in part {
            if ring.len() < 4 {
                return fail(format!("ring has {} points, needs at least 4", ring.len()));
            }
            if ring.first() != ring.last() {
                return fail("ring is not closed (first point differs from last)".into());
            }
            let mut snapped: Vec<IPoint> = Vec::with_capacity(ring.len() - 1);
            for pt in &ring[..ring.len() - 1] {
                let x = pt[0].as_f64();
                let y = pt[1].as_f64();
                if !(x.is_finite() && y.is_finite()) {
                    return fail("non-finite coordinate".into());
                }
                let p = ((x / cell).round() as i64, (y / cell).round() as i64);
                if snapped.last() != Some(&p) {
                    snapped.push(p);
                }
            }
            while snapped.len() > 1 && snapped.first() == snapped.last() {
                snapped.pop();
            }
            if snapped.len() < 3 {
                return fail("ring degenerates to fewer than 3 distinct points".into());
            }
            // Simplicity: non-adjacent segments must not meet; adjacent
            // segments must share only their common endpoint.
            let m = snapped.len();
            for i in 0..m {
                let (a, b) = (snapped[i], snapped[(i + 1) % m]);
                for j in (i + 1)..m {
                    let (c, d) = (snapped[j], snapped[(j + 1) % m]);
                    let adjacent = j == i + 1 || (i == 0 && j == m - 1);
                    if adjacent {
                        // Shared endpoint q joins (p, q) and (q, r); a
                        // fold-back puts r on pq or p on qr.
                        let (p, q, r) = if j == i + 1 { (a, b, d) } else { (c, d, b) };
                        if (orient(p, q, r) == 0 && on_collinear_segment(p, q, r))
                            || (orient(q, r, p) == 0 && on_collinear_segment(q, r, p))
                        {
                            return fail("ring folds back on itself".into());
                        }
                    } else if segments_touch(a, b, c, d) {
                        return fail("ring is self-intersecting".into());
                    }
                }
            }
            // Exact shoelace: twice the signed area. A simple ring on the
            // grid always has nonzero area, so this is a backstop.
            let mut area2 = 0i128;
            for i in 0..m {
                let p = snapped[i];
                let q = snapped[(i + 1) % m];
                area2 += p.0 as i128 * q.1 as i128 - q.0 as i128 * p.1 as i128;
            }
            if area2 == 0 {
                return fail("ring has zero area".into());
            }
            rings.push(snapped);
        }
    }
    Ok(SnappedFeature { rings })
}

/// Builds a binary contiguity graph from polygon features under the
/// default snapping tolerance.
pub fn build_graph_from_polygons<F: Scalar>(
    features: &[PolygonFeature<F>],
    rule: ContiguityRule,
) -> Result<AdjacencyGraph<F>> {
    build_graph_from_polygons_with(features, rule, DEFAULT_SNAP_TOLERANCE)
}

/// Builds a binary contiguity graph, snapping coordinates to a grid of
/// `snap_tolerance` times the bounding-box diagonal.
pub fn build_graph_from_polygons_with<F: Scalar>(
    features: &[PolygonFeature<F>],
    rule: ContiguityRule,
    snap_tolerance: f64,
) -> Result<AdjacencyGraph<F>> {
    if features.is_empty() {
        return Err(Error::Geometry("no polygon features given".into()));
    }
    if !(snap_tolerance.is_finite() && snap_tolerance > 0.0) {
        return Err(Error::Config(format!(
            "snap tolerance must be a positive real, got {snap_tolerance}"
        )));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for f in features {
        for part in &f.polygons {
            for ring in part {
                for pt in ring {
                    for axis in 0..2 {
                        let v = pt[axis].as_f64();
                        lo[axis] = lo[axis].min(v);
                        hi[axis] = hi[axis].max(v);
                    }
                }
            }
        }
    }
    let diag = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt();
    let cell = if diag.is_finite() && diag > 0.0 { snap_tolerance * diag } else { 1.0 };

    let snapped: Vec<SnappedFeature> =
        features.iter().map(|f| snap_feature(f, cell)).collect::<Result<_>>()?;

    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    match rule {
        ContiguityRule::Queen => {
            let mut by_vertex: HashMap<IPoint, Vec<usize>> = HashMap::new();
            for (k, feat) in snapped.iter().enumerate() {
                for ring in &feat.rings {
                    for &p in ring {
                        let owners = by_vertex.entry(p).or_default();
                        if owners.last() != Some(&k) {
                            owners.push(k);
                        }
                    }
                }
            }
            for owners in by_vertex.values() {
                collect_pairs(owners, &mut edges);
            }
        }
        ContiguityRule::Rook => {
            let mut by_segment: HashMap<(IPoint, IPoint), Vec<usize>> = HashMap::new();
            for (k, feat) in snapped.iter().enumerate() {
                for ring in &feat.rings {
                    let m = ring.len();
                    for i in 0..m {
                        let a = ring[i];
                        let b = ring[(i + 1) % m];
                        let key = if a <= b { (a, b) } else { (b, a) };
                        let owners = by_segment.entry(key).or_default();
                        if owners.last() != Some(&k) {
                            owners.push(k);
                        }
                    }
                }
            }
            for owners in by_segment.values() {
                collect_pairs(owners, &mut edges);
            }
        }
    }

    let regions: Vec<Region> = features
        .iter()
        .enumerate()
        .map(|(k, f)| Region {
            id: f.id.clone(),
            name: f.display_name().to_string(),
            geometry_ref: Some(k),
        })
        .collect();
    let weighted: Vec<(usize, usize, F)> =
        edges.into_iter().map(|(i, j)| (i, j, F::one())).collect();
    AdjacencyGraph::with_regions(regions, &weighted)
}

fn collect_pairs(owners: &[usize], edges: &mut BTreeSet<(usize, usize)>) {
    // Owner lists carry only local consecutive dedup, so sort first.
    let mut sorted: Vec<usize> = owners.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for (a, &i) in sorted.iter().enumerate() {
        for &j in &sorted[a + 1..] {
            edges.insert((i, j));
        }
    }
}
