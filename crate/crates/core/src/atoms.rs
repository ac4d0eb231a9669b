//! Atoms, ions and the explicit decomposition algorithms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Ball, DoublingCache, Space};
use crate::{leq, TOL};

#[derive(Debug, Error)]
pub enum AtomError {
    #[error("input atom does not validate: {0}")]
    InvalidAtom(String),
    #[error("input ion does not validate: {0}")]
    InvalidIon(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

/// A real-valued function on the space, stored as per-point values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnOnSpace(pub Vec<f64>);

impl FnOnSpace {
    pub fn zeros(n: usize) -> Self {
        FnOnSpace(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn integral(&self, space: &Space) -> f64 {
        self.0
            .iter()
            .zip(space.masses())
            .map(|(v, m)| v * m)
            .sum()
    }

    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > TOL)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn scaled(&self, c: f64) -> FnOnSpace {
        FnOnSpace(self.0.iter().map(|v| v * c).collect())
    }

    pub fn add_scaled(&mut self, c: f64, other: &FnOnSpace) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }

    pub fn abs(&self) -> FnOnSpace {
        FnOnSpace(self.0.iter().map(|v| v.abs()).collect())
    }

    pub fn max_abs_diff(&self, other: &FnOnSpace) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Integrability exponent; `p = infinity` is a distinct code path rather
/// than a large-`p` limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    /// The conjugate exponent `p' = p/(p-1)`, as a finite real (`p = inf`
    /// gives `1`, `p = 1` gives infinity and is rejected for atoms).
    pub fn conjugate(self) -> f64 {
        match self {
            Exponent::Infinity => 1.0,
            Exponent::Finite(p) => p / (p - 1.0),
        }
    }

    pub fn is_valid_for_atoms(self) -> bool {
        match self {
            Exponent::Infinity => true,
            Exponent::Finite(p) => p > 1.0 && p.is_finite(),
        }
    }
}

/// Weighted `L^p` norm of the restriction of `f` to `members`.
pub fn lp_norm_on(space: &Space, f: &FnOnSpace, members: &[usize], p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => members
            .iter()
            .map(|&x| f.0[x].abs())
            .fold(0.0, f64::max),
        Exponent::Finite(p) => members
            .iter()
            .map(|&x| f.0[x].abs().powf(p) * space.mass(x))
            .sum::<f64>()
            .powf(1.0 / p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtomKind {
    Standard,
    Global,
}

/// A candidate atom: values, supporting ball, exponent, scale and kind.
#[derive(Debug, Clone)]
pub struct Atom {
    pub values: FnOnSpace,
    pub support: Ball,
    pub p: Exponent,
    pub scale: f64,
    pub kind: AtomKind,
}

/// A candidate `(p, alpha)`-ion.
#[derive(Debug, Clone)]
pub struct Ion {
    pub values: FnOnSpace,
    pub support: Ball,
    pub p: Exponent,
    pub alpha: f64,
}

/// Per-condition slack certificate; `holds` iff every condition passes.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub holds: bool,
    /// Largest `|value|` outside the supporting ball.
    pub support_leak: f64,
    /// `(lhs, rhs)` of the size condition.
    pub size: (f64, f64),
    /// `(lhs, rhs)` of the cancellation / integral condition, when checked.
    pub integral: Option<(f64, f64)>,
    pub failures: Vec<String>,
}

/// The size bound `mu(B)^{-1}` (`p = inf`) or `mu(B)^{-1/p'}`.
fn size_bound(measure: f64, p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => 1.0 / measure,
        Exponent::Finite(_) => measure.powf(-1.0 / p.conjugate()),
    }
}

pub fn validate_atom(space: &Space, atom: &Atom) -> Certificate {
    let mut failures = Vec::new();
    if !atom.p.is_valid_for_atoms() {
        failures.push("exponent must lie in (1, infinity]".into());
    }
    let support_leak = (0..space.n())
        .filter(|&x| !atom.support.contains(x))
        .map(|x| atom.values.0[x].abs())
        .fold(0.0, f64::max);
    if support_leak > TOL {
        failures.push(format!("support leak {support_leak}"));
    }
    match atom.kind {
        AtomKind::Standard => {
            if !leq(atom.support.radius, atom.scale) {
                failures.push(format!(
                    "standard atom ball radius {} exceeds scale {}",
                    atom.support.radius, atom.scale
                ));
            }
        }
        AtomKind::Global => {
            if (atom.support.radius - atom.scale).abs() > TOL {
                failures.push(format!(
                    "global atom ball radius {} != scale {}",
                    atom.support.radius, atom.scale
                ));
            }
        }
    }
    let size_lhs = lp_norm_on(space, &atom.values, &atom.support.members, atom.p);
    let size_rhs = size_bound(atom.support.measure, atom.p);
    if !leq(size_lhs, size_rhs) {
        failures.push(format!("size {size_lhs} > {size_rhs}"));
    }
    let integral = match atom.kind {
        AtomKind::Standard => {
            let int = atom.values.integral(space).abs();
            let l1 = lp_norm_on(space, &atom.values, &atom.support.members, Exponent::Finite(1.0));
            // Relative cancellation tolerance so the check survives rescaling.
            let rhs = TOL * l1.max(1e-300);
            if int > rhs && l1 > 0.0 {
                failures.push(format!("cancellation {int} > {rhs}"));
            }
            Some((int, rhs))
        }
        AtomKind::Global => None,
    };
    Certificate {
        holds: failures.is_empty(),
        support_leak,
        size: (size_lhs, size_rhs),
        integral,
        failures,
    }
}

pub fn validate_ion(space: &Space, ion: &Ion) -> Certificate {
    let mut failures = Vec::new();
    if !ion.p.is_valid_for_atoms() {
        failures.push("exponent must lie in (1, infinity]".into());
    }
    if ion.alpha <= 0.0 {
        failures.push("alpha must be positive".into());
    }
    let support_leak = (0..space.n())
        .filter(|&x| !ion.support.contains(x))
        .map(|x| ion.values.0[x].abs())
        .fold(0.0, f64::max);
    if support_leak > TOL {
        failures.push(format!("support leak {support_leak}"));
    }
    let size_lhs = lp_norm_on(space, &ion.values, &ion.support.members, ion.p);
    let size_rhs = size_bound(ion.support.measure, ion.p);
    if !leq(size_lhs, size_rhs) {
        failures.push(format!("size {size_lhs} > {size_rhs}"));
    }
    let int_lhs = ion.values.integral(space).abs();
    let int_rhs = ion.support.radius.powf(ion.alpha);
    if !leq(int_lhs, int_rhs) {
        failures.push(format!("integral bound {int_lhs} > {int_rhs}"));
    }
    Certificate {
        holds: failures.is_empty(),
        support_leak,
        size: (size_lhs, size_rhs),
        integral: Some((int_lhs, int_rhs)),
        failures,
    }
}

/// A weighted list of atoms reconstructing a target function.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub terms: Vec<(f64, Atom)>,
    pub target: FnOnSpace,
}

impl Decomposition {
    pub fn coefficient_sum(&self) -> f64 {
        self.terms.iter().map(|(l, _)| l.abs()).sum()
    }

    pub fn reconstruction(&self, n: usize) -> FnOnSpace {
        let mut acc = FnOnSpace::zeros(n);
        for (l, a) in &self.terms {
            acc.add_scaled(*l, &a.values);
        }
        acc
    }

    pub fn reconstruction_error(&self) -> f64 {
        self.reconstruction(self.target.len()).max_abs_diff(&self.target)
    }

    /// Every emitted atom must re-validate.
    pub fn all_valid(&self, space: &Space) -> bool {
        self.terms.iter().all(|(_, a)| validate_atom(space, a).holds)
    }
}

/// Certified coefficient bound for an economical decomposition.  The exact
/// per-instance chain gives `sum |lambda| <= [D_{12,c/4} * R]^{1/p'}` with
/// `R = mu(B_{b+2c}(c_B)) / mu(B)`; when `r_B = b` the enlargement factor is
/// further bounded by `D_{1+2c/b, b}`.
#[derive(Debug, Clone)]
pub struct EconomicalBound {
    pub coefficient_sum: f64,
    pub bound: f64,
    pub d_cover: f64,
    pub enlargement_ratio: f64,
    pub d_enlargement: f64,
    pub holds: bool,
}

/// Decomposes a `p`-atom at scale `b` into global `p`-atoms at scale
/// `c < b` over the radius-`c` balls of a `c/2`-discretisation.
pub fn economical_decompose(
    space: &Space,
    cache: &DoublingCache,
    atom: &Atom,
    c: f64,
) -> Result<(Decomposition, EconomicalBound), AtomError> {
    if c <= 0.0 || c >= atom.scale {
        return Err(AtomError::Parameter(format!(
            "need 0 < c < scale, got c = {c}, scale = {}",
            atom.scale
        )));
    }
    let cert = validate_atom(space, atom);
    if !cert.holds {
        return Err(AtomError::InvalidAtom(cert.failures.join("; ")));
    }
    let b = atom.scale;
    let net = space.build_net(c / 2.0);
    let support_ball = &atom.support;
    let net_balls: Vec<Ball> = net
        .centers
        .iter()
        .filter(|&&z| {
            support_ball
                .members
                .iter()
                .any(|&x| space.d(z, x) <= c)
        })
        .map(|&z| space.ball(z, c))
        .collect();

    // psi_j = 1_{B_j} / sum_k 1_{B_k} on the union of the net balls.
    let mut cover_count = vec![0usize; space.n()];
    for ball in &net_balls {
        for &x in &ball.members {
            cover_count[x] += 1;
        }
    }

    let mut terms = Vec::new();
    for ball in &net_balls {
        let mut piece = FnOnSpace::zeros(space.n());
        for &x in &ball.members {
            if cover_count[x] > 0 {
                piece.0[x] = atom.values.0[x] / cover_count[x] as f64;
            }
        }
        let lambda = lp_norm_on(space, &piece, &ball.members, atom.p)
            * ball.measure.powf(1.0 / atom.p.conjugate());
        if lambda <= TOL * TOL {
            continue;
        }
        terms.push((
            lambda,
            Atom {
                values: piece.scaled(1.0 / lambda),
                support: ball.clone(),
                p: atom.p,
                scale: c,
                kind: AtomKind::Global,
            },
        ));
    }
    let decomposition = Decomposition {
        terms,
        target: atom.values.clone(),
    };

    let d_cover = cache.value(space, 12.0, c / 4.0);
    let enlarged = space.ball(support_ball.center, b + 2.0 * c);
    let enlargement_ratio = enlarged.measure / support_ball.measure;
    let d_enlargement = cache.value(space, 1.0 + 2.0 * c / b, b);
    let sum = decomposition.coefficient_sum();
    let bound = (d_cover * enlargement_ratio).powf(1.0 / atom.p.conjugate());
    let report = EconomicalBound {
        coefficient_sum: sum,
        bound,
        d_cover,
        enlargement_ratio,
        d_enlargement,
        holds: leq(sum, bound),
    };
    Ok((decomposition, report))
}

/// Rescales an atom from scale `c` up to scale `b > c`; the returned
/// coefficient is bounded by `D_{b/c,c}^{1/p'}` on the same instance.
pub fn rescale_atom(
    space: &Space,
    cache: &DoublingCache,
    atom: &Atom,
    b: f64,
) -> Result<(Atom, f64, f64), AtomError> {
    let c = atom.scale;
    if b < c {
        return Err(AtomError::Parameter(format!("need b >= c, got b = {b} < {c}")));
    }
    let cert = validate_atom(space, atom);
    if !cert.holds {
        return Err(AtomError::InvalidAtom(cert.failures.join("; ")));
    }
    if (b - c).abs() <= TOL {
        return Ok((atom.clone(), 1.0, 1.0));
    }
    let enlarged = space.ball(atom.support.center, (b / c) * atom.support.radius);
    let coefficient = (enlarged.measure / atom.support.measure).powf(1.0 / atom.p.conjugate());
    let rescaled = Atom {
        values: atom.values.scaled(1.0 / coefficient),
        support: atom.support.clone(),
        p: atom.p,
        scale: b,
        kind: atom.kind,
    };
    let bound = cache.value(space, b / c, c).powf(1.0 / atom.p.conjugate());
    Ok((rescaled, coefficient, bound))
}

/// Per-piece size bounds recorded by the ion-to-atom telescoping.
#[derive(Debug, Clone)]
pub struct IonPieceBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Splits an ion into a standard atom plus a telescoping series of
/// indicator differences over the doubled balls `2^i B`, as in the
/// atom/ion equivalence construction.  Reconstruction is exact; the size
/// of every telescoping piece is certified against
/// `2^{1/p} D_{2,b}^{1/p'} r_B^alpha mu(2^i B)^{-1/p'}`.
pub fn ion_to_atoms(
    space: &Space,
    cache: &DoublingCache,
    ion: &Ion,
    b: f64,
) -> Result<(Decomposition, Vec<IonPieceBound>), AtomError> {
    let cert = validate_ion(space, ion);
    if !cert.holds {
        return Err(AtomError::InvalidIon(cert.failures.join("; ")));
    }
    let r = ion.support.radius;
    if r > b + TOL {
        return Err(AtomError::Parameter(format!(
            "ion ball radius {r} exceeds target scale {b}"
        )));
    }
    let integral = ion.values.integral(space);
    let mut terms: Vec<(f64, Atom)> = Vec::new();
    let mut piece_bounds = Vec::new();

    // Mean-zero part: a = g - (1_B / mu(B)) * integral, normalized by 1 + b^alpha.
    let mut mean_zero = ion.values.clone();
    for &x in &ion.support.members {
        mean_zero.0[x] -= integral / ion.support.measure;
    }
    let lam_a = 1.0 + b.powf(ion.alpha);
    if lp_norm_on(space, &mean_zero, &ion.support.members, Exponent::Finite(1.0)) > TOL {
        terms.push((
            lam_a,
            Atom {
                values: mean_zero.scaled(1.0 / lam_a),
                support: if ion.support.radius <= b {
                    ion.support.clone()
                } else {
                    ion.support.clone()
                },
                p: ion.p,
                scale: b,
                kind: AtomKind::Standard,
            },
        ));
    }

    if integral.abs() > TOL {
        // Remainder h = (1_B / mu(B)) * integral.
        if (r - b).abs() <= TOL {
            // Ball radius exactly b: h / b^alpha is a global atom at scale b.
            let lam_h = b.powf(ion.alpha);
            let ball = space.ball(ion.support.center, b);
            let mut h = FnOnSpace::zeros(space.n());
            for &x in &ball.members {
                h.0[x] = integral / ball.measure;
            }
            terms.push((
                lam_h,
                Atom {
                    values: h.scaled(1.0 / lam_h),
                    support: ball,
                    p: ion.p,
                    scale: b,
                    kind: AtomKind::Global,
                },
            ));
        } else {
            // Telescope: N = floor(log2(b / r_B)).
            let n_steps = (b / r).log2().floor() as i32;
            let d2 = cache.value(space, 2.0, b);
            let pinv = match ion.p {
                Exponent::Infinity => 0.0,
                Exponent::Finite(p) => 1.0 / p,
            };
            let pp = ion.p.conjugate();
            let ralpha = r.powf(ion.alpha);
            let mut doubled: Vec<Ball> = Vec::new();
            for i in 0..=(n_steps + 1) {
                doubled.push(space.ball(ion.support.center, 2f64.powi(i) * r));
            }
            for i in 1..=n_steps + 1 {
                let inner = &doubled[(i - 1) as usize];
                let outer = &doubled[i as usize];
                let mut h_i = FnOnSpace::zeros(space.n());
                for &x in &inner.members {
                    h_i.0[x] += integral / inner.measure;
                }
                for &x in &outer.members {
                    h_i.0[x] -= integral / outer.measure;
                }
                let norm = lp_norm_on(space, &h_i, &outer.members, ion.p);
                let rhs = 2f64.powf(pinv) * d2.powf(1.0 / pp) * ralpha
                    / outer.measure.powf(1.0 / pp);
                piece_bounds.push(IonPieceBound {
                    lhs: norm,
                    rhs,
                    holds: leq(norm, rhs),
                });
                if norm <= TOL * TOL {
                    continue;
                }
                if outer.radius <= b + TOL {
                    // Standard atom at scale b.
                    terms.push((
                        norm * outer.measure.powf(1.0 / pp),
                        Atom {
                            values: h_i.scaled(1.0 / (norm * outer.measure.powf(1.0 / pp))),
                            support: outer.clone(),
                            p: ion.p,
                            scale: b,
                            kind: AtomKind::Standard,
                        },
                    ));
                } else {
                    // The last difference may live on a ball of radius up to
                    // 2b: treat it as a standard atom at its own scale and
                    // push it back to scale b economically.
                    let scale_big = outer.radius;
                    let lam = norm * outer.measure.powf(1.0 / pp);
                    let big_atom = Atom {
                        values: h_i.scaled(1.0 / lam),
                        support: outer.clone(),
                        p: ion.p,
                        scale: scale_big,
                        kind: AtomKind::Standard,
                    };
                    let (sub, _) = economical_decompose(space, cache, &big_atom, b)?;
                    for (l, a) in sub.terms {
                        terms.push((lam * l, a));
                    }
                }
            }
            // Head of the telescope: the average over the largest ball.
            let top = &doubled[(n_steps + 1) as usize];
            let mut h_top = FnOnSpace::zeros(space.n());
            for &x in &top.members {
                h_top.0[x] = integral / top.measure;
            }
            let norm = lp_norm_on(space, &h_top, &top.members, ion.p);
            if norm > TOL * TOL {
                let lam = norm * top.measure.powf(1.0 / pp);
                if top.radius <= b + TOL {
                    terms.push((
                        lam,
                        Atom {
                            values: h_top.scaled(1.0 / lam),
                            support: space.ball(top.center, b.min(top.radius.max(TOL))),
                            p: ion.p,
                            scale: b,
                            kind: AtomKind::Global,
                        },
                    ));
                } else {
                    let big_atom = Atom {
                        values: h_top.scaled(1.0 / lam),
                        support: top.clone(),
                        p: ion.p,
                        scale: top.radius,
                        kind: AtomKind::Global,
                    };
                    let (sub, _) = economical_decompose(space, cache, &big_atom, b)?;
                    for (l, a) in sub.terms {
                        terms.push((lam * l, a));
                    }
                }
            }
        }
    }

    Ok((
        Decomposition {
            terms,
            target: ion.values.clone(),
        },
        piece_bounds,
    ))
}

/// Constructive upper bound for the `h1` norm: wrap the function as a global
/// `infinity`-atom on a radius-`>= 1` ball around its support and decompose
/// economically down to scale 1.
pub fn greedy_atomic_decomposition(
    space: &Space,
    cache: &DoublingCache,
    f: &FnOnSpace,
) -> Decomposition {
    let support = f.support();
    if support.is_empty() {
        return Decomposition {
            terms: Vec::new(),
            target: f.clone(),
        };
    }
    // 1-center of the support: the candidate minimizing the max distance.
    let (center, reach) = support
        .iter()
        .map(|&c| {
            let reach = support
                .iter()
                .map(|&x| space.d(c, x))
                .fold(0.0, f64::max);
            (c, reach)
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();

    // Identity decomposition when the input already is a scale-1 atom.
    if reach <= 1.0 + TOL {
        let ball = space.ball(center, reach.min(1.0));
        let standard = Atom {
            values: f.clone(),
            support: ball,
            p: Exponent::Infinity,
            scale: 1.0,
            kind: AtomKind::Standard,
        };
        if validate_atom(space, &standard).holds {
            return Decomposition {
                terms: vec![(1.0, standard)],
                target: f.clone(),
            };
        }
        let global = Atom {
            values: f.clone(),
            support: space.ball(center, 1.0),
            p: Exponent::Infinity,
            scale: 1.0,
            kind: AtomKind::Global,
        };
        if validate_atom(space, &global).holds {
            return Decomposition {
                terms: vec![(1.0, global)],
                target: f.clone(),
            };
        }
    }

    let radius = reach.max(1.0);
    let ball = space.ball(center, radius);
    let norm = lp_norm_on(space, f, &ball.members, Exponent::Infinity);
    let lambda = norm * ball.measure;
    let wrapped = Atom {
        values: f.scaled(1.0 / lambda),
        support: ball,
        p: Exponent::Infinity,
        scale: radius,
        kind: AtomKind::Global,
    };
    if radius <= 1.0 + TOL {
        return Decomposition {
            terms: vec![(lambda, wrapped)],
            target: f.clone(),
        };
    }
    let (sub, _) = economical_decompose(space, cache, &wrapped, 1.0)
        .expect("wrapped global atom is valid");
    Decomposition {
        terms: sub
            .terms
            .into_iter()
            .map(|(l, a)| (lambda * l, a))
            .collect(),
        target: f.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> Space {
        let edges: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Space::from_edges(n, &edges, vec![1.0; n], 1.0).unwrap()
    }

    fn two_points() -> Space {
        Space::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 1.0], 1.0).unwrap()
    }

    #[test]
    fn two_point_size_condition() {
        let s = two_points();
        let ball = s.ball(0, 1.0);
        let atom = Atom {
            values: FnOnSpace(vec![1.0, -1.0]),
            support: ball.clone(),
            p: Exponent::Infinity,
            scale: 1.0,
            kind: AtomKind::Standard,
        };
        // ||a||_inf = 1 > 1/mu(B) = 1/2.
        assert!(!validate_atom(&s, &atom).holds);
        let halved = Atom {
            values: FnOnSpace(vec![0.5, -0.5]),
            ..atom
        };
        assert!(validate_atom(&s, &halved).holds);
    }

    #[test]
    fn normalized_indicator_is_global_atom() {
        let s = cycle(6);
        let ball = s.ball(0, 1.0);
        let mut v = FnOnSpace::zeros(6);
        for &x in &ball.members {
            v.0[x] = 1.0 / ball.measure;
        }
        let atom = Atom {
            values: v,
            support: ball,
            p: Exponent::Infinity,
            scale: 1.0,
            kind: AtomKind::Global,
        };
        assert!(validate_atom(&s, &atom).holds);
    }

    fn random_standard_atom(s: &Space, seed: u64) -> Atom {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let ball = s.ball(rng.gen_range(0..s.n()), 1.0);
        let mut v = FnOnSpace::zeros(s.n());
        for &x in &ball.members {
            v.0[x] = rng.gen_range(-1.0..1.0);
        }
        // Project out the mean, then scale to equality in the size bound.
        let mean = v.integral(s) / ball.measure;
        for &x in &ball.members {
            v.0[x] -= mean;
        }
        let norm = lp_norm_on(s, &v, &ball.members, Exponent::Infinity);
        let target = 1.0 / ball.measure;
        let v = v.scaled(target / norm);
        Atom {
            values: v,
            support: ball,
            p: Exponent::Infinity,
            scale: 1.0,
            kind: AtomKind::Standard,
        }
    }

    #[test]
    fn random_atom_at_size_equality_is_valid() {
        let s = cycle(6);
        for seed in 0..20 {
            let atom = random_standard_atom(&s, seed);
            let cert = validate_atom(&s, &atom);
            assert!(cert.holds, "{:?}", cert.failures);
        }
    }

    #[test]
    fn standard_atom_is_ion_for_every_alpha() {
        let s = cycle(6);
        let atom = random_standard_atom(&s, 7);
        for alpha in [0.5, 1.0, 2.0] {
            let ion = Ion {
                values: atom.values.clone(),
                support: atom.support.clone(),
                p: atom.p,
                alpha,
            };
            assert!(validate_ion(&s, &ion).holds);
        }
    }

    #[test]
    fn alpha_ge_one_ion_is_plain_ion() {
        let s = cycle(6);
        // Global atom at scale 1 (radius 1 >= 1): integral <= 1 <= r_B.
        let ball = s.ball(0, 1.0);
        let mut v = FnOnSpace::zeros(6);
        for &x in &ball.members {
            v.0[x] = 1.0 / ball.measure;
        }
        for alpha in [1.0, 1.7, 3.0] {
            let ion = Ion {
                values: v.clone(),
                support: ball.clone(),
                p: Exponent::Infinity,
                alpha,
            };
            assert!(validate_ion(&s, &ion).holds);
            let plain = Ion { alpha: 1.0, ..ion };
            assert!(validate_ion(&s, &plain).holds);
        }
    }

    #[test]
    fn small_ball_indicator_fails_integral_bound() {
        // g = 1_B / mu(B) with r_B = 0.5, alpha = 2: requires 1 <= 0.25.
        let s = Space::new(
            vec![vec![0.0, 0.5], vec![0.5, 0.0]],
            vec![1.0, 1.0],
            1.0,
        )
        .unwrap();
        let ball = s.ball(0, 0.5);
        let mut v = FnOnSpace::zeros(2);
        for &x in &ball.members {
            v.0[x] = 1.0 / ball.measure;
        }
        let ion = Ion {
            values: v,
            support: ball,
            p: Exponent::Infinity,
            alpha: 2.0,
        };
        assert!(!validate_ion(&s, &ion).holds);
    }

    #[test]
    fn economical_reconstructs_exactly() {
        let s = cycle(6);
        let cache = DoublingCache::new();
        for seed in 0..20 {
            let mut atom = random_standard_atom(&s, seed);
            let small = atom.support.measure;
            atom.scale = 2.0;
            atom.support = s.ball(atom.support.center, 2.0);
            // The size bound tightens with the bigger ball: renormalize.
            atom.values = atom.values.scaled(small / atom.support.measure);
            assert!(validate_atom(&s, &atom).holds);
            let (dec, bound) = economical_decompose(&s, &cache, &atom, 1.0).unwrap();
            assert!(dec.reconstruction_error() < 1e-12);
            assert!(dec.all_valid(&s));
            assert!(bound.holds, "sum {} > bound {}", bound.coefficient_sum, bound.bound);
        }
    }

    #[test]
    fn economical_single_point_support() {
        let s = cycle(6);
        let cache = DoublingCache::new();
        let ball = s.ball(0, 2.0);
        let mut v = FnOnSpace::zeros(6);
        v.0[0] = 1.0 / ball.measure;
        let atom = Atom {
            values: v,
            support: ball,
            p: Exponent::Infinity,
            scale: 2.0,
            kind: AtomKind::Global,
        };
        let (dec, bound) = economical_decompose(&s, &cache, &atom, 1.0).unwrap();
        assert!(dec.reconstruction_error() < 1e-12);
        assert!(bound.holds);
    }

    #[test]
    fn rescale_identity_and_bound() {
        let s = cycle(6);
        let cache = DoublingCache::new();
        let atom = random_standard_atom(&s, 3);
        let (same, coeff, _) = rescale_atom(&s, &cache, &atom, 1.0).unwrap();
        assert_eq!(coeff, 1.0);
        assert!(validate_atom(&s, &same).holds);
        let (bigger, coeff, bound) = rescale_atom(&s, &cache, &atom, 2.5).unwrap();
        assert!(coeff <= bound + 1e-12, "coeff {coeff} > bound {bound}");
        let cert = validate_atom(&s, &bigger);
        assert!(cert.holds, "{:?}", cert.failures);
        assert_eq!(bigger.scale, 2.5);
    }

    #[test]
    fn ion_standard_atom_single_term() {
        let s = cycle(6);
        let cache = DoublingCache::new();
        let atom = random_standard_atom(&s, 11);
        let ion = Ion {
            values: atom.values.clone(),
            support: atom.support.clone(),
            p: atom.p,
            alpha: 1.0,
        };
        let (dec, _) = ion_to_atoms(&s, &cache, &ion, 1.0).unwrap();
        assert_eq!(dec.terms.len(), 1);
        assert!(dec.reconstruction_error() < 1e-12);
    }

    #[test]
    fn ion_telescoping_reconstructs() {
        use rand::{Rng, SeedableRng};
        let s = cycle(8);
        let cache = DoublingCache::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let ball = s.ball(rng.gen_range(0..8), 1.0);
            let mut v = FnOnSpace::zeros(8);
            for &x in &ball.members {
                v.0[x] = rng.gen_range(-1.0..1.0);
            }
            let norm = lp_norm_on(&s, &v, &ball.members, Exponent::Infinity);
            let mut v = v.scaled(1.0 / (norm * ball.measure));
            // Clip the integral into the ion window |.| <= r_B^alpha.
            let alpha = 1.0;
            let int = v.integral(&s);
            let cap = ball.radius.powf(alpha);
            if int.abs() > cap {
                let shift = (int - int.signum() * cap) / ball.measure;
                for &x in &ball.members {
                    v.0[x] -= shift;
                }
            }
            let ion = Ion {
                values: v,
                support: ball,
                p: Exponent::Infinity,
                alpha,
            };
            if !validate_ion(&s, &ion).holds {
                continue;
            }
            let (dec, pieces) = ion_to_atoms(&s, &cache, &ion, 3.5).unwrap();
            assert!(dec.reconstruction_error() < 1e-12);
            assert!(dec.all_valid(&s), "pieces fail to validate");
            for p in &pieces {
                assert!(p.holds, "piece bound {} > {}", p.lhs, p.rhs);
            }
        }
    }

    #[test]
    fn greedy_zero_and_atom_inputs() {
        let s = cycle(6);
        let cache = DoublingCache::new();
        let dec = greedy_atomic_decomposition(&s, &cache, &FnOnSpace::zeros(6));
        assert!(dec.terms.is_empty());
        assert_eq!(dec.coefficient_sum(), 0.0);

        let atom = random_standard_atom(&s, 2);
        let dec = greedy_atomic_decomposition(&s, &cache, &atom.values);
        assert!(dec.coefficient_sum() <= 1.0 + 1e-9);
        assert!(dec.reconstruction_error() < 1e-12);
    }

    #[test]
    fn greedy_reconstructs_random_functions() {
        use rand::{Rng, SeedableRng};
        let s = cycle(6);
        let cache = DoublingCache::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let f = FnOnSpace((0..6).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let dec = greedy_atomic_decomposition(&s, &cache, &f);
            assert!(dec.reconstruction_error() < 1e-12);
            assert!(dec.all_valid(&s));
        }
    }
}
