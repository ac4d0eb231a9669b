//! Local maximal operators, sharp functions and good-lambda level sets,
//! all computed exactly by finite enumeration of the relevant balls.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atoms::FnOnSpace;
use crate::dyadic::{Cube, CubeSystem};
use crate::par::{map_indices, map_indices_seq};
use crate::space::{DoublingCache, Space};
use crate::TOL;

#[derive(Debug, Error)]
pub enum MaximalError {
    #[error("beta = {0} is below the threshold 2 C_{{2,k}} = {1}")]
    BetaBelowThreshold(f64, f64),
    #[error("no grid levels above lambda0 = {0}")]
    EmptyGrid(f64),
}

/// Ball average of `|f|^q` raised to `1/q` for `q >= 1`.
fn avg_q(space: &Space, f: &FnOnSpace, members: &[usize], measure: f64, q: f64) -> f64 {
    let s: f64 = members
        .iter()
        .map(|&x| f.0[x].abs().powf(q) * space.mass(x))
        .sum();
    (s / measure).powf(1.0 / q)
}

fn avg_signed(space: &Space, f: &FnOnSpace, members: &[usize], measure: f64) -> f64 {
    members.iter().map(|&x| f.0[x] * space.mass(x)).sum::<f64>() / measure
}

/// Mean `q`-oscillation of `f` on a member set around the level `c`.
fn osc_q(space: &Space, f: &FnOnSpace, members: &[usize], measure: f64, q: f64, c: f64) -> f64 {
    let s: f64 = members
        .iter()
        .map(|&x| (f.0[x] - c).abs().powf(q) * space.mass(x))
        .sum();
    (s / measure).powf(1.0 / q)
}

/// Fold `g` over the distinct centred balls `B(x, r)`, `r <= s`, including
/// the singleton (the radius-to-zero limit).
fn fold_centred_balls<T>(
    space: &Space,
    x: usize,
    s: f64,
    init: T,
    mut g: impl FnMut(T, &[usize], f64) -> T,
) -> T {
    let mut acc = init;
    let mut prev_len = usize::MAX;
    for r in space.radii_upto(x, s) {
        let ball = space.ball(x, r);
        if ball.members.len() == prev_len {
            continue;
        }
        prev_len = ball.members.len();
        acc = g(acc, &ball.members, ball.measure);
    }
    acc
}

/// Local centred Hardy-Littlewood maximal function at scale `s`,
/// `M f(x) = max over r <= s of the average of |f| over B(x, r)`.
pub fn hl_maximal_local(space: &Space, f: &FnOnSpace, s: f64) -> FnOnSpace {
    FnOnSpace(map_indices(space.n(), |x| {
        fold_centred_balls(space, x, s, 0.0f64, |best, members, measure| {
            best.max(avg_q(space, f, members, measure, 1.0))
        })
    }))
}

/// Always-sequential twin of [`hl_maximal_local`], for benchmarking.
pub fn hl_maximal_local_seq(space: &Space, f: &FnOnSpace, s: f64) -> FnOnSpace {
    FnOnSpace(map_indices_seq(space.n(), |x| {
        fold_centred_balls(space, x, s, 0.0f64, |best, members, measure| {
            best.max(avg_q(space, f, members, measure, 1.0))
        })
    }))
}

/// Local sharp maximal function `f^{sharp,q}_b`: per point the max over the
/// centred balls of radius `<= b` of the mean `q`-oscillation around the
/// ball average.
pub fn sharp_maximal(space: &Space, f: &FnOnSpace, q: f64, b: f64) -> FnOnSpace {
    FnOnSpace(map_indices(space.n(), |x| {
        fold_centred_balls(space, x, b, 0.0f64, |best, members, measure| {
            let c = avg_signed(space, f, members, measure);
            best.max(osc_q(space, f, members, measure, q, c))
        })
    }))
}

/// `N_0 f(x)`: the average of `|f|` over the single ball `B(x, b)`.
pub fn n0(space: &Space, f: &FnOnSpace, b: f64) -> FnOnSpace {
    FnOnSpace(map_indices(space.n(), |x| {
        let ball = space.ball(x, b);
        avg_q(space, f, &ball.members, ball.measure, 1.0)
    }))
}

/// The grand operator `N f = f^sharp + N_0 f` at `q = 1`, scale `b`.
pub fn n_operator(space: &Space, f: &FnOnSpace, b: f64) -> FnOnSpace {
    let sharp = sharp_maximal(space, f, 1.0, b);
    let big = n0(space, f, b);
    FnOnSpace(sharp.0.iter().zip(&big.0).map(|(a, b)| a + b).collect())
}

/// Best-constant oscillation `f^{s,q}`: the sharp function with the inner
/// centring constant minimized instead of taken as the ball average.  For
/// `q = 1` the minimizer is a weighted median, for `q = 2` the mean; other
/// exponents are solved by golden-section search (the objective is convex).
pub fn s_sharp(space: &Space, f: &FnOnSpace, q: f64, b: f64) -> FnOnSpace {
    FnOnSpace(map_indices(space.n(), |x| {
        fold_centred_balls(space, x, b, 0.0f64, |best, members, measure| {
            best.max(best_osc(space, f, members, measure, q))
        })
    }))
}

fn weighted_median(space: &Space, f: &FnOnSpace, members: &[usize]) -> f64 {
    let mut vals: Vec<(f64, f64)> = members.iter().map(|&x| (f.0[x], space.mass(x))).collect();
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = vals.iter().map(|(_, m)| m).sum();
    let mut acc = 0.0;
    for (v, m) in &vals {
        acc += m;
        if acc >= total / 2.0 {
            return *v;
        }
    }
    vals.last().unwrap().0
}

fn best_osc(space: &Space, f: &FnOnSpace, members: &[usize], measure: f64, q: f64) -> f64 {
    if (q - 1.0).abs() < 1e-12 {
        let c = weighted_median(space, f, members);
        return osc_q(space, f, members, measure, q, c);
    }
    if (q - 2.0).abs() < 1e-12 {
        let c = avg_signed(space, f, members, measure);
        return osc_q(space, f, members, measure, q, c);
    }
    let mut lo = members.iter().map(|&x| f.0[x]).fold(f64::INFINITY, f64::min);
    let mut hi = members
        .iter()
        .map(|&x| f.0[x])
        .fold(f64::NEG_INFINITY, f64::max);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let obj = |c: f64| osc_q(space, f, members, measure, q, c);
    for _ in 0..200 {
        if hi - lo < 1e-13 * (1.0 + hi.abs().max(lo.abs())) {
            break;
        }
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if obj(m1) <= obj(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    obj((lo + hi) / 2.0)
}

/// The modified sharp function `N^q_b f(x) = f^{sharp,q}_b(x) +
/// (avg over B(x,b) of |f|^q)^{1/q}` -- the two terms are summed, as in the
/// definition of the `bmo^q_b` norm.
pub fn modified_sharp(space: &Space, f: &FnOnSpace, q: f64, b: f64) -> FnOnSpace {
    let sharp = sharp_maximal(space, f, q, b);
    FnOnSpace(
        (0..space.n())
            .map(|x| {
                let ball = space.ball(x, b);
                sharp.0[x] + avg_q(space, f, &ball.members, ball.measure, q)
            })
            .collect(),
    )
}

/// Distinct intersections `B cap Q` over balls centred in `Q` with radius
/// `<= cap`, as (members, measure) pairs.
fn cube_sections(space: &Space, q: &Cube, cap: f64) -> Vec<(Vec<usize>, f64)> {
    let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
    for &z in &q.members {
        let mut prev_len = usize::MAX;
        for r in space.radii_upto(z, cap) {
            let ball = space.ball(z, r);
            if ball.members.len() == prev_len {
                continue;
            }
            prev_len = ball.members.len();
            let sect: Vec<usize> = ball
                .members
                .iter()
                .copied()
                .filter(|&y| q.contains(y))
                .collect();
            if sect.is_empty() || out.iter().any(|(m, _)| *m == sect) {
                continue;
            }
            let measure = sect.iter().map(|&y| space.mass(y)).sum();
            out.push((sect, measure));
        }
    }
    out
}

/// Noncentred cube maximal function `M^Q f` on `Q`: per `x` in `Q` the max
/// over balls `B` centred in `Q` with `x` in `B cap Q` of the average of
/// `|f|` over `B cap Q`.  Radii are capped at `a1 delta^k` (larger balls
/// saturate to the whole cube, which the cap already realizes).
pub fn cube_maximal(space: &Space, sys: &CubeSystem, q: &Cube, f: &FnOnSpace) -> FnOnSpace {
    let cap = sys.a1 * sys.delta.powi(q.level);
    let sections = cube_sections(space, q, cap);
    let mut out = FnOnSpace::zeros(space.n());
    for &x in &q.members {
        out.0[x] = sections
            .iter()
            .filter(|(m, _)| m.binary_search(&x).is_ok())
            .map(|(m, mu)| avg_q(space, f, m, *mu, 1.0))
            .fold(0.0, f64::max);
    }
    out
}

/// Centred cube maximal function `M~^Q f`: balls centred at `x` itself,
/// radius up to `2 a1 delta^k`, averaged over `B cap Q`.
pub fn cube_maximal_centred(space: &Space, sys: &CubeSystem, q: &Cube, f: &FnOnSpace) -> FnOnSpace {
    let cap = 2.0 * sys.a1 * sys.delta.powi(q.level);
    let mut out = FnOnSpace::zeros(space.n());
    for &x in &q.members {
        let mut prev_len = usize::MAX;
        let mut best = 0.0f64;
        for r in space.radii_upto(x, cap) {
            let ball = space.ball(x, r);
            if ball.members.len() == prev_len {
                continue;
            }
            prev_len = ball.members.len();
            let sect: Vec<usize> = ball
                .members
                .iter()
                .copied()
                .filter(|&y| q.contains(y))
                .collect();
            if sect.is_empty() {
                continue;
            }
            let mu: f64 = sect.iter().map(|&y| space.mass(y)).sum();
            best = best.max(avg_q(space, f, &sect, mu, 1.0));
        }
        out.0[x] = best;
    }
    out
}

/// Noncentred cube sharp function `f^{sharp,Q}`: per `x` in `Q` the max over
/// sections `B cap Q` containing `x` of the mean oscillation around the
/// section average.
pub fn cube_sharp(space: &Space, sys: &CubeSystem, q: &Cube, f: &FnOnSpace) -> FnOnSpace {
    let cap = sys.a1 * sys.delta.powi(q.level);
    let sections = cube_sections(space, q, cap);
    let mut out = FnOnSpace::zeros(space.n());
    for &x in &q.members {
        out.0[x] = sections
            .iter()
            .filter(|(m, _)| m.binary_search(&x).is_ok())
            .map(|(m, mu)| {
                let c = avg_signed(space, f, m, *mu);
                osc_q(space, f, m, *mu, 1.0, c)
            })
            .fold(0.0, f64::max);
    }
    out
}

/// Measured weak-type `(1,1)` constant of `M^Q` on `Q` for a batch of test
/// functions: the max over levels of `lambda mu{M^Q f > lambda} / ||f||_1`.
pub fn weak_type_constant(
    space: &Space,
    sys: &CubeSystem,
    q: &Cube,
    fs: &[FnOnSpace],
) -> f64 {
    let mut c0 = 0.0f64;
    for f in fs {
        let mf = cube_maximal(space, sys, q, f);
        let l1: f64 = q
            .members
            .iter()
            .map(|&x| f.0[x].abs() * space.mass(x))
            .sum();
        if l1 <= TOL {
            continue;
        }
        let mut levels: Vec<f64> = q
            .members
            .iter()
            .map(|&x| mf.0[x])
            .filter(|v| *v > TOL)
            .collect();
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for lam in levels {
            // Just below each attained value the level set is largest.
            let lam = lam * (1.0 - 1e-12);
            let mu: f64 = q
                .members
                .iter()
                .filter(|&&x| mf.0[x] > lam)
                .map(|&x| space.mass(x))
                .sum();
            c0 = c0.max(lam * mu / l1);
        }
    }
    c0
}

/// One row of a good-lambda run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoodLambdaRow {
    pub lambda: f64,
    /// `mu(E_{beta lambda} cap F_{gamma lambda})`.
    pub mu_intersection: f64,
    /// `mu(E_lambda)`.
    pub mu_base: f64,
}

/// Level sets and the smallest constant `A` satisfying
/// `mu(E_{beta la} cap F_{gamma la}) <= A (gamma/beta) mu(E_la)` on the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelSets {
    pub beta: f64,
    pub gamma: f64,
    pub lambda0: f64,
    pub c0: f64,
    pub a: f64,
    pub rows: Vec<GoodLambdaRow>,
}

/// Good-lambda level sets on the cube `Q` for `E_la = {M^Q f > la}` and
/// `F_la = {f^{sharp,Q} <= la}`.  Requires `beta > 2 C_{2,k}` and a grid
/// with at least one level above `lambda0 = C0 ||f||_{L1(Q)} / mu(Q)`.
pub fn good_lambda_sets(
    space: &Space,
    cache: &DoublingCache,
    sys: &CubeSystem,
    q: &Cube,
    f: &FnOnSpace,
    beta: f64,
    gamma: f64,
    grid: &[f64],
) -> Result<LevelSets, MaximalError> {
    let c2k = sys.cube_doubling_bound(space, cache, 2.0, q.level);
    if beta <= 2.0 * c2k {
        return Err(MaximalError::BetaBelowThreshold(beta, 2.0 * c2k));
    }
    let mf = cube_maximal(space, sys, q, f);
    let sharp = cube_sharp(space, sys, q, f);
    let c0 = weak_type_constant(space, sys, q, std::slice::from_ref(f));
    let l1: f64 = q
        .members
        .iter()
        .map(|&x| f.0[x].abs() * space.mass(x))
        .sum();
    let lambda0 = c0 * l1 / q.measure;
    let grid: Vec<f64> = grid.iter().copied().filter(|&l| l > lambda0).collect();
    if grid.is_empty() {
        return Err(MaximalError::EmptyGrid(lambda0));
    }

    let mut rows = Vec::new();
    let mut a = 0.0f64;
    for &lam in &grid {
        let mu_intersection: f64 = q
            .members
            .iter()
            .filter(|&&x| mf.0[x] > beta * lam && sharp.0[x] <= gamma * lam)
            .map(|&x| space.mass(x))
            .sum();
        let mu_base: f64 = q
            .members
            .iter()
            .filter(|&&x| mf.0[x] > lam)
            .map(|&x| space.mass(x))
            .sum();
        if mu_intersection > 0.0 {
            // beta > 1 makes E_{beta la} a subset of E_la, so mu_base > 0.
            a = a.max(mu_intersection * beta / (gamma * mu_base));
        }
        rows.push(GoodLambdaRow {
            lambda: lam,
            mu_intersection,
            mu_base,
        });
    }
    Ok(LevelSets {
        beta,
        gamma,
        lambda0,
        c0,
        a,
        rows,
    })
}
