//! Convex-hull volume of observed configurations in the normalized numeric
//! embedding.
//!
//! Up to six numeric dimensions the volume comes from an incremental
//! beneath-beyond hull: points insert one at a time, visible facets are
//! replaced by cones over the horizon, and the volume is a fan decomposition
//! from an interior point. Above six dimensions the exact hull is not worth
//! its cost and the volume falls back to the product of per-dimension ranges.
//!
//! Grid-valued options make exactly-degenerate point sets (hypercube corners,
//! shared hyperplanes) the common case, which is hostile territory for
//! floating-point hull predicates: sliver facets through affinely dependent
//! points get joggle-scale normals whose visibility classifications can
//! disagree, pinching the horizon. Construction therefore runs on
//! deterministically joggled copies of the points and validates the finished
//! complex (every ridge on exactly two facets, every point inside every
//! facet). A failed validation rebuilds with the next joggle salt; if no
//! salt yields a sound complex the volume falls back to the range product
//! for that snapshot. All paths are deterministic.

use crate::stats::fnv1a;

const JOGGLE: f64 = 1e-7;
const VISIBILITY_EPS: f64 = 1e-12;
const RANK_TOL: f64 = 1e-9;
const CONTAINMENT_TOL: f64 = 1e-5;
const MAX_SALT: u64 = 4;

#[derive(Debug, Clone)]
struct Facet {
    vertices: Vec<usize>,
    normal: Vec<f64>,
    offset: f64,
}

#[derive(Debug, Clone)]
struct BuiltHull {
    joggled: Vec<Vec<f64>>,
    facets: Vec<Facet>,
    interior: Vec<f64>,
}

/// Incremental volume tracker over points in the unit cube.
#[derive(Debug, Clone, Default)]
pub struct HullVolume {
    dims: usize,
    points: Vec<Vec<f64>>,
    built: Option<BuiltHull>,
    synced: usize,
    salt: u64,
    cache: Option<(usize, f64)>,
}

impl HullVolume {
    pub fn new(dims: usize) -> Self {
        HullVolume { dims, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn insert(&mut self, point: Vec<f64>) {
        assert_eq!(point.len(), self.dims, "dimension mismatch");
        self.points.push(point);
    }

    /// Current volume. Exact for ≤ 6 dimensions on well-posed inputs;
    /// product of coordinate ranges above 6 dimensions or when every joggle
    /// salt fails to produce a sound complex. Zero while the cloud does not
    /// span all dimensions.
    pub fn volume(&mut self) -> f64 {
        if let Some((count, cached)) = self.cache {
            if count == self.points.len() {
                return cached;
            }
        }
        let v = self.compute_volume();
        self.cache = Some((self.points.len(), v));
        v
    }

    fn compute_volume(&mut self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        if self.dims == 0 {
            return 1.0;
        }
        if self.dims > 6 {
            return self.range_product();
        }
        if self.dims == 1 {
            let lo = self.points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let hi = self.points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            return (hi - lo).max(0.0);
        }
        if !self.raw_full_rank() {
            return 0.0;
        }

        // Incremental sync with the current salt, then validate; on failure
        // walk the salt ladder with full rebuilds.
        if self.built.is_some() {
            self.sync_pending();
            if self.complex_is_sound() {
                return self.fan_volume();
            }
        }
        for attempt in 0..=MAX_SALT {
            self.salt = attempt;
            self.built = None;
            self.synced = 0;
            self.build_initial();
            if self.built.is_none() {
                continue;
            }
            self.sync_pending();
            if self.complex_is_sound() {
                return self.fan_volume();
            }
        }
        self.built = None;
        self.range_product()
    }

    fn range_product(&self) -> f64 {
        let mut vol = 1.0;
        for d in 0..self.dims {
            let lo = self.points.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
            let hi = self.points.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
            vol *= (hi - lo).max(0.0);
        }
        vol
    }

    fn joggled(&self, index: usize) -> Vec<f64> {
        let p = &self.points[index];
        (0..self.dims)
            .map(|d| {
                let key = [
                    self.salt.to_le_bytes(),
                    (index as u64).to_le_bytes(),
                    (d as u64).to_le_bytes(),
                ]
                .concat();
                let unit = (fnv1a(&key) % 1_000_000) as f64 / 1_000_000.0 - 0.5;
                p[d] + JOGGLE * unit
            })
            .collect()
    }

    fn sync_pending(&mut self) {
        if self.built.is_none() {
            return;
        }
        for i in self.synced..self.points.len() {
            let p = self.joggled(i);
            self.insert_built(i, p);
        }
        self.synced = self.points.len();
    }

    /// Affine rank check on the raw points via Gram-Schmidt.
    fn raw_full_rank(&self) -> bool {
        if self.points.len() < self.dims + 1 {
            return false;
        }
        let origin = &self.points[0];
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for p in &self.points[1..] {
            if basis.len() == self.dims {
                return true;
            }
            let mut v: Vec<f64> = p.iter().zip(origin).map(|(a, b)| a - b).collect();
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= dot * bi;
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > RANK_TOL {
                for x in &mut v {
                    *x /= norm;
                }
                basis.push(v);
            }
        }
        basis.len() == self.dims
    }

    fn build_initial(&mut self) {
        let d = self.dims;
        let joggled: Vec<Vec<f64>> = (0..self.points.len()).map(|i| self.joggled(i)).collect();
        let mut chosen = vec![0usize];
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for _ in 0..d {
            let origin = &joggled[chosen[0]];
            let mut best: Option<(usize, f64, Vec<f64>)> = None;
            for (i, p) in joggled.iter().enumerate() {
                if chosen.contains(&i) {
                    continue;
                }
                let mut v: Vec<f64> = p.iter().zip(origin).map(|(a, b)| a - b).collect();
                for b in &basis {
                    let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi -= dot * bi;
                    }
                }
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if best.as_ref().map(|(_, n, _)| norm > *n).unwrap_or(true) {
                    best = Some((i, norm, v));
                }
            }
            match best {
                Some((i, norm, mut v)) if norm > RANK_TOL / 100.0 => {
                    for x in &mut v {
                        *x /= norm;
                    }
                    basis.push(v);
                    chosen.push(i);
                }
                _ => return,
            }
        }
        let interior: Vec<f64> = (0..d)
            .map(|c| chosen.iter().map(|&i| joggled[i][c]).sum::<f64>() / (d + 1) as f64)
            .collect();
        let mut facets = Vec::new();
        for skip in 0..chosen.len() {
            let vertices: Vec<usize> = chosen
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != skip)
                .map(|(_, &v)| v)
                .collect();
            if let Some(f) = make_facet(&joggled, &vertices, &interior) {
                facets.push(f);
            }
        }
        if facets.len() == d + 1 {
            self.built = Some(BuiltHull { joggled, facets, interior });
        }
    }

    fn insert_built(&mut self, index: usize, point: Vec<f64>) {
        let hull = self.built.as_mut().expect("hull built");
        // The joggled array mirrors the raw points index-for-index.
        if index >= hull.joggled.len() {
            debug_assert_eq!(index, hull.joggled.len());
            hull.joggled.push(point);
        }
        let pid = index;
        let p = &hull.joggled[pid];

        let visible: Vec<usize> = hull
            .facets
            .iter()
            .enumerate()
            .filter(|(_, f)| {
                let dot: f64 = f.normal.iter().zip(p).map(|(n, x)| n * x).sum();
                dot > f.offset + VISIBILITY_EPS
            })
            .map(|(i, _)| i)
            .collect();
        if visible.is_empty() {
            return;
        }

        use std::collections::{BTreeMap, BTreeSet};
        let mut ridge_count: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for &fi in &visible {
            let vs = &hull.facets[fi].vertices;
            for skip in 0..vs.len() {
                let mut ridge: Vec<usize> =
                    vs.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &v)| v).collect();
                ridge.sort_unstable();
                *ridge_count.entry(ridge).or_insert(0) += 1;
            }
        }
        let visible_set: BTreeSet<usize> = visible.iter().copied().collect();
        let mut new_facets: Vec<Facet> = Vec::new();
        for (ridge, count) in &ridge_count {
            // Horizon ridges sit on exactly one visible facet; their twin
            // survives.
            if *count != 1 {
                continue;
            }
            let mut vertices = ridge.clone();
            vertices.push(pid);
            if let Some(f) = make_facet(&hull.joggled, &vertices, &hull.interior) {
                new_facets.push(f);
            }
        }
        let mut kept: Vec<Facet> = hull
            .facets
            .iter()
            .enumerate()
            .filter(|(i, _)| !visible_set.contains(i))
            .map(|(_, f)| f.clone())
            .collect();
        kept.extend(new_facets);
        hull.facets = kept;
    }

    /// Soundness of the finished complex: simplicial closed (every ridge on
    /// exactly two facets) and every point inside every facet halfspace.
    fn complex_is_sound(&self) -> bool {
        let Some(hull) = &self.built else { return false };
        use std::collections::BTreeMap;
        let mut degree: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for f in &hull.facets {
            for skip in 0..f.vertices.len() {
                let mut ridge: Vec<usize> = f
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != skip)
                    .map(|(_, &v)| v)
                    .collect();
                ridge.sort_unstable();
                *degree.entry(ridge).or_insert(0) += 1;
            }
        }
        if degree.values().any(|&d| d != 2) {
            return false;
        }
        for p in &hull.joggled {
            for f in &hull.facets {
                let dot: f64 = f.normal.iter().zip(p).map(|(n, x)| n * x).sum();
                if dot > f.offset + CONTAINMENT_TOL {
                    return false;
                }
            }
        }
        true
    }

    fn fan_volume(&self) -> f64 {
        let hull = self.built.as_ref().expect("hull built");
        let d = self.dims;
        let mut total = 0.0;
        let mut mat = vec![0.0; d * d];
        for facet in &hull.facets {
            for (r, &v) in facet.vertices.iter().enumerate() {
                for c in 0..d {
                    mat[r * d + c] = hull.joggled[v][c] - hull.interior[c];
                }
            }
            total += determinant(&mat, d).abs();
        }
        total / factorial(d)
    }
}

/// Hyperplane through `vertices`, oriented away from `interior`.
fn make_facet(points: &[Vec<f64>], vertices: &[usize], interior: &[f64]) -> Option<Facet> {
    let d = interior.len();
    debug_assert_eq!(vertices.len(), d);
    let origin = &points[vertices[0]];
    // Null vector of the (d-1)×d edge matrix via cofactor expansion.
    let mut edges = vec![0.0; (d - 1) * d];
    for (r, &v) in vertices[1..].iter().enumerate() {
        for c in 0..d {
            edges[r * d + c] = points[v][c] - origin[c];
        }
    }
    let mut normal = vec![0.0; d];
    let mut minor = vec![0.0; (d - 1) * (d - 1)];
    for skip in 0..d {
        for r in 0..(d - 1) {
            let mut cc = 0;
            for c in 0..d {
                if c == skip {
                    continue;
                }
                minor[r * (d - 1) + cc] = edges[r * d + c];
                cc += 1;
            }
        }
        let sign = if skip % 2 == 0 { 1.0 } else { -1.0 };
        normal[skip] = sign * determinant(&minor, d - 1);
    }
    let norm: f64 = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-14 {
        return None;
    }
    for x in &mut normal {
        *x /= norm;
    }
    let mut offset: f64 = normal.iter().zip(origin).map(|(n, x)| n * x).sum();
    let interior_side: f64 = normal.iter().zip(interior).map(|(n, x)| n * x).sum();
    if interior_side > offset {
        for x in &mut normal {
            *x = -*x;
        }
        offset = -offset;
    }
    Some(Facet { vertices: vertices.to_vec(), normal, offset })
}

fn determinant(m: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if n == 1 {
        return m[0];
    }
    if n == 2 {
        return m[0] * m[3] - m[1] * m[2];
    }
    let mut a = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for r in (col + 1)..n {
            if a[r * n + col].abs() > a[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            det = -det;
        }
        det *= a[col * n + col];
        for r in (col + 1)..n {
            let f = a[r * n + col] / a[col * n + col];
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
        }
    }
    det
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};

    #[test]
    fn one_dimensional_range() {
        let mut h = HullVolume::new(1);
        assert_eq!(h.volume(), 0.0);
        h.insert(vec![0.25]);
        assert_eq!(h.volume(), 0.0);
        h.insert(vec![0.75]);
        assert!((h.volume() - 0.5).abs() < 1e-12);
        h.insert(vec![0.5]);
        assert!((h.volume() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unit_square_area() {
        let mut h = HullVolume::new(2);
        for p in [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]] {
            h.insert(p.to_vec());
        }
        assert!((h.volume() - 1.0).abs() < 1e-5, "area {}", h.volume());
    }

    #[test]
    fn triangle_area() {
        let mut h = HullVolume::new(2);
        for p in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]] {
            h.insert(p.to_vec());
        }
        assert!((h.volume() - 0.5).abs() < 1e-5, "area {}", h.volume());
    }

    #[test]
    fn collinear_points_have_zero_area() {
        let mut h = HullVolume::new(2);
        for t in 0..10 {
            let x = t as f64 / 10.0;
            h.insert(vec![x, x]);
        }
        assert_eq!(h.volume(), 0.0);
    }

    #[test]
    fn unit_cube_volume() {
        let mut h = HullVolume::new(3);
        for i in 0..8 {
            h.insert(vec![(i & 1) as f64, (i >> 1 & 1) as f64, (i >> 2 & 1) as f64]);
        }
        assert!((h.volume() - 1.0).abs() < 1e-4, "volume {}", h.volume());
        h.insert(vec![0.5, 0.5, 0.5]);
        h.insert(vec![0.2, 0.7, 0.9]);
        assert!((h.volume() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn tetrahedron_volume() {
        let mut h = HullVolume::new(3);
        for p in [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
            h.insert(p.to_vec());
        }
        assert!((h.volume() - 1.0 / 6.0).abs() < 1e-5, "volume {}", h.volume());
    }

    #[test]
    fn four_dimensional_cube() {
        let mut h = HullVolume::new(4);
        for i in 0..16 {
            h.insert(vec![
                (i & 1) as f64,
                (i >> 1 & 1) as f64,
                (i >> 2 & 1) as f64,
                (i >> 3 & 1) as f64,
            ]);
        }
        assert!((h.volume() - 1.0).abs() < 1e-3, "volume {}", h.volume());
    }

    #[test]
    fn hull_contains_all_points_and_matches_monte_carlo() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(19);
        let mut h = HullVolume::new(3);
        let pts: Vec<Vec<f64>> =
            (0..120).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        for p in &pts {
            h.insert(p.clone());
        }
        let vol = h.volume();
        let built = h.built.as_ref().expect("random points build a sound hull");
        for p in built.joggled.iter() {
            for f in &built.facets {
                let dot: f64 = f.normal.iter().zip(p).map(|(n, x)| n * x).sum();
                assert!(dot <= f.offset + 1e-6, "point escapes facet");
            }
        }
        let mut inside = 0usize;
        let trials = 40_000;
        for _ in 0..trials {
            let q: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            if built
                .facets
                .iter()
                .all(|f| f.normal.iter().zip(&q).map(|(n, x)| n * x).sum::<f64>() <= f.offset)
            {
                inside += 1;
            }
        }
        let mc = inside as f64 / trials as f64;
        assert!((vol - mc).abs() < 0.02, "det-sum {vol} vs monte carlo {mc}");
    }

    #[test]
    fn incremental_matches_batch() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(23);
        let pts: Vec<Vec<f64>> =
            (0..60).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let mut incremental = HullVolume::new(4);
        for p in &pts {
            incremental.insert(p.clone());
            let _ = incremental.volume();
        }
        let mut batch = HullVolume::new(4);
        for p in &pts {
            batch.insert(p.clone());
        }
        assert!((incremental.volume() - batch.volume()).abs() < 1e-9);
    }

    #[test]
    fn repeated_volume_calls_are_stable() {
        let mut h = HullVolume::new(2);
        for p in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
            h.insert(p.to_vec());
        }
        let v1 = h.volume();
        let v2 = h.volume();
        assert_eq!(v1, v2);
    }

    #[test]
    fn high_dimensional_fallback_is_range_product() {
        let mut h = HullVolume::new(7);
        h.insert(vec![0.0; 7]);
        h.insert(vec![0.5; 7]);
        let expect = 0.5f64.powi(7);
        assert!((h.volume() - expect).abs() < 1e-12);
    }
}
