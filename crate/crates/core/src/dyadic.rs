//! Christ-style dyadic cube systems, their axioms as checkable contracts,
//! and Whitney coverings inside a cube.
//!
//! The construction uses nested nets: the level-`k` net is a
//! `delta^k / 2`-discretisation seeded with the coarser net's centers, points
//! are assigned to the nearest admissible center (ties broken by lowest
//! index), and nesting is enforced by restricting each point's candidate
//! centers to those lying in its parent cube.  Every cube contains its own
//! center, so the inner/outer ball constants can be measured per cube.
//!
//! The diameter axiom is implemented as `diam(Q) <= a1 delta^k`, consistent
//! with the inner/outer ball property (the bare `a1^k` form appears to drop
//! the `delta`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Ball, DoublingCache, Space};
use crate::{approx_eq, leq, TOL};

#[derive(Debug, Error)]
pub enum DyadicError {
    #[error("delta must lie in (0,1), got {0}")]
    DeltaRange(f64),
    #[error("k_min must not exceed k_max")]
    LevelRange,
    #[error("ball center {0} is not in the cube")]
    CenterNotInCube(usize),
    #[error("Whitney set must be a nonempty proper subset of the cube")]
    BadWhitneySet,
}

/// One dyadic cube: resolution level, designated center and member set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cube {
    pub level: i32,
    pub center: usize,
    pub members: Vec<usize>,
    pub measure: f64,
}

impl Cube {
    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }
}

/// A full system of nested partitions with measured constants `a0`, `a1`.
#[derive(Debug, Clone)]
pub struct CubeSystem {
    pub delta: f64,
    pub k_min: i32,
    pub k_max: i32,
    pub a0: f64,
    pub a1: f64,
    /// `levels[k - k_min]` is the partition at resolution `k`.
    pub levels: Vec<Vec<Cube>>,
}

impl CubeSystem {
    pub fn level(&self, k: i32) -> &[Cube] {
        &self.levels[(k - self.k_min) as usize]
    }

    pub fn cube_of(&self, k: i32, x: usize) -> &Cube {
        self.level(k)
            .iter()
            .find(|q| q.contains(x))
            .expect("levels partition the space")
    }

    /// `C_{tau,k} = D_{tau, a1 delta^k} * D_{a1/(a0 delta), delta^k}`:
    /// the uniform bound on the doubling constants of the level-`k` cubes.
    pub fn cube_doubling_bound(
        &self,
        space: &Space,
        cache: &DoublingCache,
        tau: f64,
        k: i32,
    ) -> f64 {
        let dk = self.delta.powi(k);
        cache.value(space, tau, self.a1 * dk) * cache.value(space, self.a1 / (self.a0 * self.delta), dk)
    }
}

/// Result of one axiom check; violations carry a witness description.
#[derive(Debug, Clone)]
pub struct AxiomCheck {
    pub name: &'static str,
    pub holds: bool,
    pub witness: Option<String>,
}

/// Whitney covering of an open set `E` inside a cube `Q` by balls
/// `B_i = B(x, d(x, Q \ E)/3)` selected greedily in ascending index order.
#[derive(Debug, Clone)]
pub struct WhitneyCover {
    pub balls: Vec<Ball>,
    /// Member sets of `B_i` intersected with `Q`.
    pub pieces: Vec<Vec<usize>>,
    pub multiplicity: usize,
    pub covers: bool,
    pub triple_meets_complement: bool,
}

pub fn build_cubes(
    space: &Space,
    delta: f64,
    k_min: i32,
    k_max: i32,
) -> Result<CubeSystem, DyadicError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(DyadicError::DeltaRange(delta));
    }
    if k_min > k_max {
        return Err(DyadicError::LevelRange);
    }
    let n = space.n();
    let mut levels: Vec<Vec<Cube>> = Vec::new();
    // assignment[x] = index of x's cube in the previous level.
    let mut assignment: Vec<usize> = vec![0; n];
    let mut prev_centers: Vec<usize> = Vec::new();

    for k in k_min..=k_max {
        let eta = delta.powi(k);
        let net = space.build_net_seeded(eta, &prev_centers);
        let centers = net.centers.clone();

        // Nearest admissible center per point.  At the coarsest level every
        // center is admissible; below that only centers in the parent cube.
        let mut point_center: Vec<usize> = vec![usize::MAX; n];
        for x in 0..n {
            let mut best: Option<(f64, usize)> = None;
            for &z in &centers {
                if k > k_min {
                    let parent = &levels.last().unwrap()[assignment[x]];
                    if !parent.contains(z) {
                        continue;
                    }
                }
                let dzx = space.d(z, x);
                let better = match best {
                    None => true,
                    Some((bd, bz)) => dzx < bd - TOL || (dzx < bd + TOL && z < bz),
                };
                if better {
                    best = Some((dzx, z));
                }
            }
            // The parent cube always contains its own center, which belongs
            // to every finer net, so a candidate exists.
            point_center[x] = best.expect("admissible center exists").1;
        }

        let mut cubes: Vec<Cube> = Vec::new();
        let mut new_assignment = vec![0; n];
        for &z in &centers {
            let members: Vec<usize> = (0..n).filter(|&x| point_center[x] == z).collect();
            if members.is_empty() {
                continue;
            }
            let measure = members.iter().map(|&x| space.mass(x)).sum();
            for &x in &members {
                new_assignment[x] = cubes.len();
            }
            cubes.push(Cube {
                level: k,
                center: z,
                members,
                measure,
            });
        }
        assignment = new_assignment;
        prev_centers = centers;
        levels.push(cubes);
    }

    // Measure realized a0 (largest certified inner radius over cubes) and a1
    // (smallest admissible outer radius, taken as the cube diameter so that
    // the diameter axiom holds with the same constant).
    let mut a0 = f64::INFINITY;
    let mut a1: f64 = 0.0;
    for cubes in &levels {
        for q in cubes {
            let dk = delta.powi(q.level);
            let rho = if q.members.len() == space.n() {
                space.diameter() + 1.0
            } else {
                (0..space.n())
                    .filter(|x| !q.contains(*x))
                    .map(|y| space.d(q.center, y))
                    .fold(f64::INFINITY, f64::min)
            };
            a0 = a0.min(rho / dk);
            let diam = q
                .members
                .iter()
                .flat_map(|&x| q.members.iter().map(move |&y| space.d(x, y)))
                .fold(0.0, f64::max);
            a1 = a1.max(diam / dk);
        }
    }
    // Shrink the inner constant so closed-ball membership stays strict, and
    // keep the outer one positive even for all-singleton systems.
    let a0 = a0 * (1.0 - 1e-9);
    let a1 = if a1 > 0.0 {
        a1
    } else {
        space.min_positive_distance().min(1.0) * 0.5
    };
    Ok(CubeSystem {
        delta,
        k_min,
        k_max,
        a0,
        a1,
        levels,
    })
}

/// Exhaustively checks the five cube axioms against the system's realized
/// constants.  Violations are report rows, not errors.
pub fn verify_cube_axioms(space: &Space, sys: &CubeSystem) -> Vec<AxiomCheck> {
    let n = space.n();
    let mut out = Vec::new();

    // (i) each level is a partition of the full point set.
    let mut partition = AxiomCheck {
        name: "partition",
        holds: true,
        witness: None,
    };
    for cubes in &sys.levels {
        let mut seen = vec![0usize; n];
        for q in cubes {
            for &x in &q.members {
                seen[x] += 1;
            }
        }
        if let Some(x) = seen.iter().position(|&c| c != 1) {
            partition.holds = false;
            partition.witness = Some(format!("point {x} covered {} times", seen[x]));
        }
    }
    out.push(partition);

    // (ii) nesting across all level pairs.
    let mut nesting = AxiomCheck {
        name: "nesting",
        holds: true,
        witness: None,
    };
    'nest: for (ci, coarse) in sys.levels.iter().enumerate() {
        for fine in sys.levels.iter().skip(ci + 1) {
            for qf in fine {
                let inside = coarse
                    .iter()
                    .filter(|qc| qf.members.iter().any(|&x| qc.contains(x)))
                    .count();
                let contained = coarse
                    .iter()
                    .any(|qc| qf.members.iter().all(|&x| qc.contains(x)));
                if inside != 1 || !contained {
                    nesting.holds = false;
                    nesting.witness = Some(format!(
                        "level {} cube at center {} straddles level {}",
                        qf.level,
                        qf.center,
                        coarse[0].level
                    ));
                    break 'nest;
                }
            }
        }
    }
    out.push(nesting);

    // (iii) unique parent across consecutive levels.
    let mut parent = AxiomCheck {
        name: "unique-parent",
        holds: true,
        witness: None,
    };
    for w in sys.levels.windows(2) {
        for qf in &w[1] {
            let parents = w[0]
                .iter()
                .filter(|qc| qc.contains(qf.center))
                .count();
            if parents != 1 {
                parent.holds = false;
                parent.witness =
                    Some(format!("cube at center {} has {parents} parents", qf.center));
            }
        }
    }
    out.push(parent);

    // (iv) diam(Q) <= a1 delta^k.
    let mut diam_check = AxiomCheck {
        name: "diameter",
        holds: true,
        witness: None,
    };
    for cubes in &sys.levels {
        for q in cubes {
            let dk = sys.delta.powi(q.level);
            let diam = q
                .members
                .iter()
                .flat_map(|&x| q.members.iter().map(move |&y| space.d(x, y)))
                .fold(0.0, f64::max);
            if !leq(diam, sys.a1 * dk) {
                diam_check.holds = false;
                diam_check.witness = Some(format!(
                    "cube level {} center {}: diam {} > {}",
                    q.level,
                    q.center,
                    diam,
                    sys.a1 * dk
                ));
            }
        }
    }
    out.push(diam_check);

    // (v) inner and outer balls around the designated center.
    let mut balls = AxiomCheck {
        name: "inner-outer-balls",
        holds: true,
        witness: None,
    };
    for cubes in &sys.levels {
        for q in cubes {
            let dk = sys.delta.powi(q.level);
            let inner = space.ball(q.center, sys.a0 * dk);
            let outer = space.ball(q.center, sys.a1 * dk);
            let inner_ok = inner.members.iter().all(|&x| q.contains(x));
            let outer_ok = q.members.iter().all(|&x| outer.contains(x));
            if !inner_ok || !outer_ok {
                balls.holds = false;
                balls.witness = Some(format!(
                    "cube level {} center {}: inner {} outer {}",
                    q.level, q.center, inner_ok, outer_ok
                ));
            }
        }
    }
    out.push(balls);

    out
}

/// Which branch of the ball-vs-cube measure comparison applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeBallBranch {
    /// `r_B >= a1 delta^k`, so `mu(B cap Q) = mu(Q)`.
    Equality,
    /// `r_B < a1 delta^k`, so `mu(B cap Q) >= D^{-1} mu(B)`.
    LowerBound,
}

#[derive(Debug, Clone)]
pub struct CubeBallReport {
    pub branch: CubeBallBranch,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Measure comparison between a ball centred in a cube and the cube itself,
/// with the doubling constant taken at the coarsest system scale.
pub fn cube_ball_bounds(
    space: &Space,
    sys: &CubeSystem,
    cache: &DoublingCache,
    cube: &Cube,
    ball: &Ball,
) -> Result<CubeBallReport, DyadicError> {
    if !cube.contains(ball.center) {
        return Err(DyadicError::CenterNotInCube(ball.center));
    }
    let dk = sys.delta.powi(cube.level);
    let cap_measure: f64 = ball
        .members
        .iter()
        .filter(|&&x| cube.contains(x))
        .map(|&x| space.mass(x))
        .sum();
    if ball.radius >= sys.a1 * dk {
        Ok(CubeBallReport {
            branch: CubeBallBranch::Equality,
            lhs: cap_measure,
            rhs: cube.measure,
            holds: approx_eq(cap_measure, cube.measure),
        })
    } else {
        let nu = sys.delta.powi(sys.k_min);
        let d = cache.value(space, sys.a1 / (sys.a0 * sys.delta), nu);
        let rhs = ball.measure / d;
        Ok(CubeBallReport {
            branch: CubeBallBranch::LowerBound,
            lhs: cap_measure,
            rhs,
            holds: leq(rhs, cap_measure),
        })
    }
}

/// Whitney covering of `E` inside `Q` with radius factor `1/3` and closed
/// balls: `3 B_i` then reaches `Q \ E` exactly.
pub fn whitney_cover(space: &Space, cube: &Cube, e: &[usize]) -> Result<WhitneyCover, DyadicError> {
    let e_sorted: Vec<usize> = {
        let mut v = e.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    if e_sorted.is_empty()
        || e_sorted.len() >= cube.members.len()
        || !e_sorted.iter().all(|&x| cube.contains(x))
    {
        return Err(DyadicError::BadWhitneySet);
    }
    let complement: Vec<usize> = cube
        .members
        .iter()
        .copied()
        .filter(|x| e_sorted.binary_search(x).is_err())
        .collect();

    let mut balls = Vec::new();
    let mut pieces: Vec<Vec<usize>> = Vec::new();
    let mut covered = vec![false; space.n()];
    for &x in &e_sorted {
        if covered[x] {
            continue;
        }
        let dist_comp = complement
            .iter()
            .map(|&y| space.d(x, y))
            .fold(f64::INFINITY, f64::min);
        let ball = space.ball(x, dist_comp / 3.0);
        let piece: Vec<usize> = ball
            .members
            .iter()
            .copied()
            .filter(|y| cube.contains(*y))
            .collect();
        for &y in &piece {
            covered[y] = true;
        }
        balls.push(ball);
        pieces.push(piece);
    }

    let covers = e_sorted.iter().all(|&x| covered[x])
        && pieces
            .iter()
            .flatten()
            .all(|y| e_sorted.binary_search(y).is_ok());
    let mut mult = vec![0usize; space.n()];
    for piece in &pieces {
        for &y in piece {
            mult[y] += 1;
        }
    }
    let multiplicity = mult.into_iter().max().unwrap_or(0);
    let triple_meets_complement = balls.iter().all(|b| {
        let triple = space.ball(b.center, 3.0 * b.radius);
        triple
            .members
            .iter()
            .any(|y| complement.binary_search(y).is_ok())
    });

    Ok(WhitneyCover {
        balls,
        pieces,
        multiplicity,
        covers,
        triple_meets_complement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> Space {
        let edges: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Space::from_edges(n, &edges, vec![1.0; n], 1.0).unwrap()
    }

    fn six_cycle_system() -> (Space, CubeSystem) {
        let s = cycle(6);
        let sys = build_cubes(&s, 0.5, -2, 3).unwrap();
        (s, sys)
    }

    #[test]
    fn finest_level_singletons() {
        let (_, sys) = six_cycle_system();
        // delta^3 = 1/8 < min distance 1, so the finest level is singletons.
        assert_eq!(sys.level(3).len(), 6);
        assert!(sys.level(3).iter().all(|q| q.members.len() == 1));
    }

    #[test]
    fn coarsest_level_single_cube() {
        let (_, sys) = six_cycle_system();
        // delta^{-2} = 4 >= diameter 3: one cube.
        assert_eq!(sys.level(-2).len(), 1);
        assert_eq!(sys.level(-2)[0].members.len(), 6);
    }

    #[test]
    fn axioms_pass_exhaustively() {
        let (s, sys) = six_cycle_system();
        let checks = verify_cube_axioms(&s, &sys);
        for c in &checks {
            assert!(c.holds, "axiom {} failed: {:?}", c.name, c.witness);
        }
        assert!(sys.a0 > 0.0 && sys.a1 > 0.0);
    }

    #[test]
    fn overlapping_cubes_fail_partition() {
        let (s, mut sys) = six_cycle_system();
        // Hand-built overlap at the finest level.
        let extra = sys.level(3)[0].clone();
        let idx = (3 - sys.k_min) as usize;
        sys.levels[idx].push(extra);
        let checks = verify_cube_axioms(&s, &sys);
        let partition = checks.iter().find(|c| c.name == "partition").unwrap();
        assert!(!partition.holds);
        assert!(partition.witness.is_some());
    }

    #[test]
    fn singleton_level_diameter_any_a1() {
        let s = cycle(4);
        let sys = build_cubes(&s, 0.5, 2, 3).unwrap();
        let checks = verify_cube_axioms(&s, &sys);
        assert!(checks.iter().find(|c| c.name == "diameter").unwrap().holds);
    }

    #[test]
    fn cube_ball_branches() {
        let (s, sys) = six_cycle_system();
        let cache = DoublingCache::new();
        let q = &sys.level(0)[0];
        // Big ball: equality branch.
        let big = s.ball(q.center, sys.a1 + 1.0);
        let rep = cube_ball_bounds(&s, &sys, &cache, q, &big).unwrap();
        assert_eq!(rep.branch, CubeBallBranch::Equality);
        assert!(rep.holds);
        // Inner ball: lower-bound branch (B cap Q = B).
        let inner = s.ball(q.center, sys.a0 * sys.delta.powi(q.level));
        let rep = cube_ball_bounds(&s, &sys, &cache, q, &inner).unwrap();
        assert!(rep.holds, "lhs {} rhs {}", rep.lhs, rep.rhs);
        // Random small balls centred in Q.
        for &z in &q.members {
            for r in [0.0, 1.0, 1.5] {
                let b = s.ball(z, r);
                let rep = cube_ball_bounds(&s, &sys, &cache, q, &b).unwrap();
                assert!(rep.holds, "z={z} r={r}: lhs {} rhs {}", rep.lhs, rep.rhs);
            }
        }
    }

    #[test]
    fn cube_ball_center_outside_errors() {
        let (s, sys) = six_cycle_system();
        let cache = DoublingCache::new();
        let level = sys.level(2);
        assert!(level.len() >= 2);
        let q = &level[0];
        let other = level.iter().find(|c| c.center != q.center).unwrap();
        let b = s.ball(other.center, 1.0);
        assert!(cube_ball_bounds(&s, &sys, &cache, q, &b).is_err());
    }

    #[test]
    fn whitney_single_point() {
        let (s, sys) = six_cycle_system();
        let q = &sys.level(-2)[0];
        let cover = whitney_cover(&s, q, &[2]).unwrap();
        assert_eq!(cover.balls.len(), 1);
        // d(2, Q \ {2}) = 1, so the radius is 1/3 and the ball is {2}.
        assert!((cover.balls[0].radius - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(cover.pieces[0], vec![2]);
        assert!(cover.covers && cover.triple_meets_complement);
    }

    #[test]
    fn whitney_all_but_one() {
        let (s, sys) = six_cycle_system();
        let q = &sys.level(-2)[0];
        let e: Vec<usize> = (1..6).collect();
        let cover = whitney_cover(&s, q, &e).unwrap();
        assert!(cover.covers);
        assert!(cover.triple_meets_complement);
        assert!(cover.multiplicity >= 1);
    }

    #[test]
    fn whitney_nested_multiplicities() {
        let (s, sys) = six_cycle_system();
        let q = &sys.level(-2)[0];
        let c1 = whitney_cover(&s, q, &[1, 2]).unwrap();
        let c2 = whitney_cover(&s, q, &[1, 2, 3]).unwrap();
        let k0 = c1.multiplicity.max(c2.multiplicity);
        assert!(c1.multiplicity <= k0 && c2.multiplicity <= k0);
    }

    #[test]
    fn whitney_rejects_degenerate_sets() {
        let (s, sys) = six_cycle_system();
        let q = &sys.level(-2)[0];
        assert!(whitney_cover(&s, q, &[]).is_err());
        let all: Vec<usize> = (0..6).collect();
        assert!(whitney_cover(&s, q, &all).is_err());
    }
}
