//! Finite metric measure space core: balls, doubling constants, geometric
//! property checks and eta-discretisations.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{leq, TOL};

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("triangle violation ({0},{1},{2})")]
    TriangleViolation(usize, usize, usize),
    #[error("asymmetric distance at ({0},{1})")]
    Asymmetric(usize, usize),
    #[error("nonzero diagonal at {0}")]
    NonzeroDiagonal(usize),
    #[error("negative distance at ({0},{1})")]
    NegativeDistance(usize, usize),
    #[error("nonpositive mass at {0}")]
    NonpositiveMass(usize),
    #[error("graph metric is not connected (point {0} unreachable)")]
    Disconnected(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("bad document: {0}")]
    Document(String),
    #[error("net eta {eta} does not match c/2 = {expected}")]
    EtaMismatch { eta: f64, expected: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// The ambient finite `(M, d, mu)`: point count, dense symmetric distance
/// matrix, strictly positive point masses and the reference radius.
#[derive(Debug, Clone)]
pub struct Space {
    n: usize,
    dist: Vec<f64>,
    mass: Vec<f64>,
    scale_unit: f64,
}

/// A closed metric ball.  Membership is `d(center, x) <= radius`; on a finite
/// space every ball is realized by some radius in the finite set of pairwise
/// distances, which keeps radius grids stable.
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: usize,
    pub radius: f64,
    pub members: Vec<usize>,
    pub measure: f64,
    bits: Vec<u64>,
}

impl Ball {
    #[inline]
    pub fn contains(&self, x: usize) -> bool {
        self.bits[x >> 6] & (1 << (x & 63)) != 0
    }

    #[inline]
    pub fn is_subset_of(&self, other: &Ball) -> bool {
        self.bits
            .iter()
            .zip(&other.bits)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn same_members(&self, other: &Ball) -> bool {
        self.bits == other.bits
    }

    pub fn bits(&self) -> &[u64] {
        &self.bits
    }
}

/// A maximal eta-separated point set together with its covering statistics.
#[derive(Debug, Clone)]
pub struct Net {
    pub eta: f64,
    pub centers: Vec<usize>,
}

/// The smallest constant `D_{tau,s}` realized on this finite space, with the
/// ball pair attaining it.
#[derive(Debug, Clone)]
pub struct DoublingReport {
    pub tau: f64,
    pub s: f64,
    pub value: f64,
    pub witness: Option<(Ball, Ball)>,
}

/// Outcome of the approximate-midpoint check; failure is data, not an error.
#[derive(Debug, Clone)]
pub struct MidpointReport {
    pub holds: bool,
    pub violating_pair: Option<(usize, usize)>,
}

/// Per-point multiplicities of the net covering `{B_c(z)}` with the certified
/// doubling bound.
#[derive(Debug, Clone)]
pub struct CoveringReport {
    pub mult_point: Vec<usize>,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpaceDocument {
    n: usize,
    metric: MetricDocument,
    mass: Vec<f64>,
    #[serde(default = "default_scale")]
    scale_unit: f64,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "lowercase")]
enum MetricDocument {
    Dense(Vec<Vec<f64>>),
    Graph(Vec<(usize, usize, f64)>),
}

impl Space {
    pub fn new(dist: Vec<Vec<f64>>, mass: Vec<f64>, scale_unit: f64) -> Result<Self, SpaceError> {
        let n = mass.len();
        if dist.len() != n || dist.iter().any(|row| row.len() != n) {
            return Err(SpaceError::Dimension(format!(
                "expected {n}x{n} distance matrix"
            )));
        }
        if scale_unit <= 0.0 {
            return Err(SpaceError::Parameter("scale_unit must be positive".into()));
        }
        let mut flat = Vec::with_capacity(n * n);
        for row in &dist {
            flat.extend_from_slice(row);
        }
        let space = Space {
            n,
            dist: flat,
            mass,
            scale_unit,
        };
        space.validate()?;
        Ok(space)
    }

    /// Builds a space from a shortest-path closure of a weighted edge list.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize, f64)],
        mass: Vec<f64>,
        scale_unit: f64,
    ) -> Result<Self, SpaceError> {
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(SpaceError::Dimension(format!("edge ({i},{j}) out of range")));
            }
            if w < 0.0 {
                return Err(SpaceError::NegativeDistance(i, j));
            }
            if w < d[i][j] {
                d[i][j] = w;
                d[j][i] = w;
            }
        }
        // Floyd-Warshall closure.
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                        d[j][i] = via;
                    }
                }
            }
        }
        for (i, row) in d.iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                let _ = i;
                return Err(SpaceError::Disconnected(j));
            }
        }
        Space::new(d, mass, scale_unit)
    }

    /// Parses the ingestion document (JSON): `{ "n", "metric": {"type":
    /// "dense"|"graph", "data": ...}, "mass", "scale_unit" }`.
    pub fn from_document(text: &str) -> Result<Self, SpaceError> {
        let doc: SpaceDocument =
            serde_json::from_str(text).map_err(|e| SpaceError::Document(e.to_string()))?;
        if doc.mass.len() != doc.n {
            return Err(SpaceError::Dimension(format!(
                "mass has {} entries, expected {}",
                doc.mass.len(),
                doc.n
            )));
        }
        match doc.metric {
            MetricDocument::Dense(rows) => Space::new(rows, doc.mass, doc.scale_unit),
            MetricDocument::Graph(edges) => {
                Space::from_edges(doc.n, &edges, doc.mass, doc.scale_unit)
            }
        }
    }

    pub fn to_document(&self) -> String {
        let rows: Vec<Vec<f64>> = (0..self.n)
            .map(|i| (0..self.n).map(|j| self.d(i, j)).collect())
            .collect();
        let doc = SpaceDocument {
            n: self.n,
            metric: MetricDocument::Dense(rows),
            mass: self.mass.clone(),
            scale_unit: self.scale_unit,
        };
        serde_json::to_string_pretty(&doc).expect("space document serializes")
    }

    fn validate(&self) -> Result<(), SpaceError> {
        let n = self.n;
        for i in 0..n {
            if self.mass[i] <= 0.0 {
                return Err(SpaceError::NonpositiveMass(i));
            }
            if self.d(i, i).abs() > TOL {
                return Err(SpaceError::NonzeroDiagonal(i));
            }
            for j in 0..n {
                let dij = self.d(i, j);
                if dij < 0.0 {
                    return Err(SpaceError::NegativeDistance(i, j));
                }
                if (dij - self.d(j, i)).abs() > TOL {
                    return Err(SpaceError::Asymmetric(i, j));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if self.d(i, j) > self.d(i, k) + self.d(k, j) + TOL {
                        return Err(SpaceError::TriangleViolation(i, k, j));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    #[inline]
    pub fn mass(&self, i: usize) -> f64 {
        self.mass[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn scale_unit(&self) -> f64 {
        self.scale_unit
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_positive_distance(&self) -> f64 {
        self.dist
            .iter()
            .cloned()
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn ball(&self, center: usize, radius: f64) -> Ball {
        let words = self.n.div_ceil(64);
        let mut members = Vec::new();
        let mut bits = vec![0u64; words];
        let mut measure = 0.0;
        for x in 0..self.n {
            if self.d(center, x) <= radius {
                members.push(x);
                bits[x >> 6] |= 1 << (x & 63);
                measure += self.mass[x];
            }
        }
        Ball {
            center,
            radius,
            members,
            measure,
            bits,
        }
    }

    /// Sorted distinct distances from `center`, capped at `s`, with `s`
    /// itself appended.  These radii realize every distinct closed ball of
    /// radius `<= s` around `center`.
    pub fn radii_upto(&self, center: usize, s: f64) -> Vec<f64> {
        let cap = if s.is_finite() { s } else { self.diameter() };
        let mut radii: Vec<f64> = (0..self.n)
            .map(|x| self.d(center, x))
            .filter(|&v| v <= cap)
            .collect();
        if s.is_finite() {
            radii.push(s);
        } else {
            radii.push(self.diameter());
        }
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        radii.dedup_by(|a, b| (*a - *b).abs() <= TOL * 0.01);
        radii
    }

    /// All distinct balls of radius `<= s`, one per realized member set and
    /// center, each carrying the largest nominal radius `<= s` that realizes
    /// its member set.  The largest nominal radius gives every downstream
    /// ratio constraint (`r_{B'} <= tau r_B`) its widest legitimate scope.
    pub fn distinct_balls_upto(&self, s: f64) -> Vec<Ball> {
        let mut out = Vec::new();
        for c in 0..self.n {
            let radii = self.radii_upto(c, s);
            let mut prev: Option<Ball> = None;
            for &r in &radii {
                let ball = self.ball(c, r);
                match prev.take() {
                    Some(p) if p.same_members(&ball) => prev = Some(ball),
                    Some(p) => {
                        out.push(p);
                        prev = Some(ball);
                    }
                    None => prev = Some(ball),
                }
            }
            if let Some(p) = prev {
                out.push(p);
            }
        }
        out
    }

    /// The smallest constant `D_{tau,s}` on this space: the maximum of
    /// `mu(B') / mu(B)` over pairs `B subset B'` with `r_B <= s` and
    /// `r_{B'} <= tau r_B`.  For fixed `B` the ratio is maximized by the ball
    /// `B(c', tau r_B)`, so only one candidate per center is needed.
    ///
    /// The supremum ranges over real radii, not just realized distances: the
    /// ratio is piecewise constant in `r_B` with breakpoints where either
    /// `r_B` or `tau r_B` crosses a distance value, so the small balls are
    /// enumerated at radii `{d} cup {d/tau}` (capped at `s`).  This makes the
    /// computed value dominate `mu(B(z, tau u)) / mu(B(z, u))` for every real
    /// `u <= s`.
    pub fn doubling_constant(&self, tau: f64, s: f64) -> DoublingReport {
        assert!(tau >= 1.0, "tau must be >= 1");
        assert!(s > 0.0, "s must be positive");
        let mut value = 1.0;
        let mut witness: Option<(Ball, Ball)> = None;
        let mut scaled: Vec<f64> = self
            .dist
            .iter()
            .map(|d| d / tau)
            .filter(|v| *v <= s)
            .collect();
        scaled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        scaled.dedup_by(|a, b| (*a - *b).abs() <= TOL * 0.01);
        let mut smalls: Vec<Ball> = Vec::new();
        for c in 0..self.n {
            let mut radii = self.radii_upto(c, s);
            radii.extend_from_slice(&scaled);
            radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
            radii.dedup_by(|a, b| (*a - *b).abs() <= TOL * 0.01);
            let mut prev: Option<Ball> = None;
            for &r in &radii {
                let ball = self.ball(c, r);
                match prev.take() {
                    Some(p) if p.same_members(&ball) => prev = Some(ball),
                    Some(p) => {
                        smalls.push(p);
                        prev = Some(ball);
                    }
                    None => prev = Some(ball),
                }
            }
            if let Some(p) = prev {
                smalls.push(p);
            }
        }
        for small in smalls {
            let rmax = tau * small.radius;
            for c2 in 0..self.n {
                // Quick reject: the big ball must reach the small one.
                if self.d(c2, small.center) > rmax + small.radius {
                    continue;
                }
                let big = self.ball(c2, rmax);
                if small.is_subset_of(&big) {
                    let ratio = big.measure / small.measure;
                    if ratio > value {
                        value = ratio;
                        witness = Some((small.clone(), big));
                    }
                }
            }
        }
        DoublingReport {
            tau,
            s,
            value,
            witness,
        }
    }

    /// Approximate midpoint check: every pair with `d(x,y) > R0` must admit a
    /// `z` with `d(x,z) < beta d(x,y)` and `d(y,z) < beta d(x,y)`.
    pub fn check_midpoint(&self, beta: f64, r0: f64) -> MidpointReport {
        for x in 0..self.n {
            for y in (x + 1)..self.n {
                let dxy = self.d(x, y);
                if dxy <= r0 {
                    continue;
                }
                let ok = (0..self.n)
                    .any(|z| self.d(x, z) < beta * dxy && self.d(y, z) < beta * dxy);
                if !ok {
                    return MidpointReport {
                        holds: false,
                        violating_pair: Some((x, y)),
                    };
                }
            }
        }
        MidpointReport {
            holds: true,
            violating_pair: None,
        }
    }

    /// Greedy eta-discretisation: scan points in ascending index order and
    /// accept a point iff its distance to every accepted center exceeds eta.
    /// The result is eta-separated and maximal.
    pub fn build_net(&self, eta: f64) -> Net {
        assert!(eta > 0.0, "eta must be positive");
        let mut centers: Vec<usize> = Vec::new();
        for x in 0..self.n {
            if centers.iter().all(|&z| self.d(z, x) > eta) {
                centers.push(x);
            }
        }
        Net { eta, centers }
    }

    /// Greedy net seeded with `seed` centers (assumed already separated),
    /// then completed over the remaining points in ascending order.
    pub fn build_net_seeded(&self, eta: f64, seed: &[usize]) -> Net {
        let mut centers: Vec<usize> = Vec::new();
        for &z in seed {
            if centers.iter().all(|&w| self.d(w, z) > eta) {
                centers.push(z);
            }
        }
        for x in 0..self.n {
            if centers.iter().all(|&z| self.d(z, x) > eta) {
                centers.push(x);
            }
        }
        Net { eta, centers }
    }

    /// Point multiplicities of the covering `{B_c(z) : z in net}` for a
    /// `c/2`-discretisation, certified against `D_{12,c/4}` computed on the
    /// same space.
    pub fn covering_multiplicity(
        &self,
        net: &Net,
        c: f64,
        cache: &DoublingCache,
    ) -> Result<CoveringReport, SpaceError> {
        if (net.eta - c / 2.0).abs() > TOL {
            return Err(SpaceError::EtaMismatch {
                eta: net.eta,
                expected: c / 2.0,
            });
        }
        let mult_point: Vec<usize> = (0..self.n)
            .map(|x| net.centers.iter().filter(|&&z| self.d(z, x) <= c).count())
            .collect();
        let bound = cache.value(self, 12.0, c / 4.0);
        let max_mult = mult_point.iter().copied().max().unwrap_or(0);
        Ok(CoveringReport {
            holds: leq(max_mult as f64, bound),
            mult_point,
            bound,
        })
    }

    /// `#M_B`: the number of net points `z` with `B_{2 eta}(z)` meeting `B`.
    pub fn net_ball_count(&self, net: &Net, ball: &Ball) -> usize {
        net.centers
            .iter()
            .filter(|&&z| ball.members.iter().any(|&x| self.d(z, x) <= 2.0 * net.eta))
            .count()
    }

    /// The induced space on a subset of points (indices keep their order).
    pub fn subspace(&self, indices: &[usize]) -> Space {
        let m = indices.len();
        let mut dist = vec![0.0; m * m];
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                dist[a * m + b] = self.d(i, j);
            }
        }
        Space {
            n: m,
            dist,
            mass: indices.iter().map(|&i| self.mass[i]).collect(),
            scale_unit: self.scale_unit,
        }
    }
}

/// Memoizes `D_{tau,s}` values per space; the enumeration is the expensive
/// part of every certified bound.
#[derive(Debug, Default)]
pub struct DoublingCache {
    map: Mutex<HashMap<(u64, u64), f64>>,
}

impl DoublingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, space: &Space, tau: f64, s: f64) -> f64 {
        let key = (tau.to_bits(), s.to_bits());
        if let Some(&v) = self.map.lock().unwrap().get(&key) {
            return v;
        }
        let v = space.doubling_constant(tau, s).value;
        self.map.lock().unwrap().insert(key, v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn cycle(n: usize) -> Space {
        let edges: Vec<(usize, usize, f64)> =
            (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Space::from_edges(n, &edges, vec![1.0; n], 1.0).unwrap()
    }

    fn path(n: usize) -> Space {
        let edges: Vec<(usize, usize, f64)> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        Space::from_edges(n, &edges, vec![1.0; n], 1.0).unwrap()
    }

    #[test]
    fn path_closure() {
        let s = path(3);
        assert_eq!(s.d(0, 2), 2.0);
    }

    #[test]
    fn triangle_violation_reported() {
        let d = vec![
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ];
        match Space::new(d, vec![1.0; 3], 1.0) {
            Err(SpaceError::TriangleViolation(0, 1, 2)) => {}
            other => panic!("expected triangle violation, got {other:?}"),
        }
    }

    #[test]
    fn six_cycle_diameter() {
        // Brute-force all-pairs shortest paths on the 6-cycle gives max 3.
        let s = cycle(6);
        assert_eq!(s.diameter(), 3.0);
    }

    #[test]
    fn six_cycle_ball() {
        let s = cycle(6);
        let b = s.ball(0, 1.0);
        assert_eq!(b.members, vec![0, 1, 5]);
        assert_eq!(b.measure, 3.0);
        let b0 = s.ball(2, 0.0);
        assert_eq!(b0.members, vec![2]);
        assert_eq!(b0.measure, 1.0);
    }

    #[test]
    fn path_ball_covers_all() {
        let s = path(3);
        assert_eq!(s.ball(1, 2.0).members, vec![0, 1, 2]);
    }

    #[test]
    fn six_cycle_doubling() {
        // Exhaustive enumeration over real radii: the singleton B(x, 1/2)
        // doubles to B(x, 1) of measure 3, beating the grid pair
        // B(x,1) -> B(x,2) with ratio 5/3.
        let s = cycle(6);
        let rep = s.doubling_constant(2.0, 1.0);
        assert!((rep.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_doubling() {
        let s = Space::new(vec![vec![0.0]], vec![2.0], 1.0).unwrap();
        assert_eq!(s.doubling_constant(2.0, 1.0).value, 1.0);
    }

    #[test]
    fn path_doubling_endpoint() {
        // The midpoint singleton B(1, 1/2) doubles to the whole path.
        let s = path(3);
        let rep = s.doubling_constant(2.0, 1.0);
        assert!((rep.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn midpoint_checks() {
        let s = cycle(6);
        assert!(s.check_midpoint(0.75, 1.0).holds);
        let two = Space::new(
            vec![vec![0.0, 2.0], vec![2.0, 0.0]],
            vec![1.0, 1.0],
            1.0,
        )
        .unwrap();
        let rep = two.check_midpoint(0.9, 1.0);
        assert!(!rep.holds);
        assert_eq!(rep.violating_pair, Some((0, 1)));
        // R0 at/above the diameter: vacuous.
        assert!(two.check_midpoint(0.9, 2.0).holds);
    }

    #[test]
    fn net_three_point_line() {
        let d: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| (i as f64 - j as f64).abs()).collect())
            .collect();
        let s = Space::new(d, vec![1.0; 3], 1.0).unwrap();
        assert_eq!(s.build_net(1.5).centers, vec![0, 2]);
    }

    #[test]
    fn net_extremes() {
        let s = cycle(6);
        assert_eq!(s.build_net(0.5).centers.len(), 6);
        assert_eq!(s.build_net(3.0).centers, vec![0]);
    }

    #[test]
    fn covering_six_cycle() {
        let s = cycle(6);
        let cache = DoublingCache::new();
        let net = s.build_net(1.0);
        let rep = s.covering_multiplicity(&net, 2.0, &cache).unwrap();
        assert!(rep.holds);
        // Ball-count variant against the product bound.
        let b = s.ball(0, 3.0);
        let count = s.net_ball_count(&net, &b) as f64;
        let bound = cache.value(&s, 4.0 * (3.0 / 2.0) + 8.0, 0.5) * cache.value(&s, 12.0, 0.5);
        assert!(leq(count, bound));
    }

    #[test]
    fn covering_single_point() {
        let s = Space::new(vec![vec![0.0]], vec![1.0], 1.0).unwrap();
        let cache = DoublingCache::new();
        let net = s.build_net(0.5);
        let rep = s.covering_multiplicity(&net, 1.0, &cache).unwrap();
        assert_eq!(rep.mult_point, vec![1]);
        assert!(rep.bound >= 1.0);
        assert!(rep.holds);
    }

    #[test]
    fn document_roundtrip() {
        let s = cycle(6);
        let doc = s.to_document();
        let s2 = Space::from_document(&doc).unwrap();
        assert_eq!(s2.n(), 6);
        assert_eq!(s2.d(0, 3), 3.0);
    }

    #[test]
    fn graph_document() {
        let doc = r#"{
            "n": 3,
            "metric": {"type": "graph", "data": [[0,1,1.0],[1,2,1.0]]},
            "mass": [1.0, 1.0, 1.0],
            "scale_unit": 1.0
        }"#;
        let s = Space::from_document(doc).unwrap();
        assert_eq!(s.d(0, 2), 2.0);
    }
}
