//! Formal group laws: validation, formal inverse, n-series, Honda laws over
//! finite fields, and Lubin-Tate universal deformations built from
//! functional-equation logarithms.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rational::{functional_equation_log, QPoly};
use crate::ring::{RingDescriptor, RingElem, RingMap};
use crate::series::{gser, Coeff, PowerSeries1, PowerSeries2};

/// A bivariate series certified to satisfy the unit, commutativity and
/// associativity axioms at the declared truncation, together with the
/// residue-embedding twist of its deformation structure (eta is always id).
#[derive(Clone, PartialEq, Debug)]
pub struct FormalGroupLaw {
    pub desc: Arc<RingDescriptor>,
    pub series: PowerSeries2,
    pub base_twist: usize,
}

impl FormalGroupLaw {
    /// Certify the axioms; errors name the first violated identity.
    pub fn validate(series: PowerSeries2) -> Result<FormalGroupLaw> {
        Self::validate_with_twist(series, 0)
    }

    pub fn validate_with_twist(series: PowerSeries2, base_twist: usize) -> Result<FormalGroupLaw> {
        let d = series.trunc_t;
        // commutativity
        for i in 0..=d {
            for j in 0..=(d - i) {
                if series.get(i, j) != series.get(j, i) {
                    return Err(Error::AxiomFailure {
                        axiom: "commutativity",
                        degree: i + j,
                    });
                }
            }
        }
        // unit axioms F(x, 0) = x and F(0, y) = y
        for i in 0..=d {
            let want_x = i == 1;
            if series.get(i, 0).is_zero() == want_x {
                return Err(Error::AxiomFailure {
                    axiom: "unit",
                    degree: i,
                });
            }
            if want_x && *series.get(i, 0) != RingElem::one(&series.desc) {
                return Err(Error::AxiomFailure {
                    axiom: "unit",
                    degree: i,
                });
            }
            if series.get(0, i).is_zero() == want_x
                || (want_x && *series.get(0, i) != RingElem::one(&series.desc))
            {
                return Err(Error::AxiomFailure {
                    axiom: "unit",
                    degree: i,
                });
            }
        }
        // associativity F(F(x,y), z) = F(x, F(y,z)) up to total degree d
        let lhs = tri_outer_left(&series);
        let rhs = tri_outer_right(&series);
        if let Some(degree) = lhs.first_difference(&rhs) {
            return Err(Error::AxiomFailure {
                axiom: "associativity",
                degree,
            });
        }
        Ok(FormalGroupLaw {
            desc: series.desc.clone(),
            series,
            base_twist,
        })
    }

    /// Construct without re-running the axiom check (for outputs that are
    /// axiomatic by construction, e.g. coordinate changes of a valid law).
    pub(crate) fn from_parts(series: PowerSeries2, base_twist: usize) -> FormalGroupLaw {
        FormalGroupLaw {
            desc: series.desc.clone(),
            series,
            base_twist,
        }
    }

    pub fn trunc_t(&self) -> usize {
        self.series.trunc_t
    }

    /// The inverse series: F(t, neg(t)) = 0 with neg(t) = -t + ...
    pub fn formal_neg(&self) -> PowerSeries1 {
        let d = self.trunc_t();
        let mut neg = PowerSeries1::zero(&self.desc, d);
        if d >= 1 {
            neg.coeffs[1] = RingElem::from_i64(&self.desc, -1);
        }
        let t = PowerSeries1::identity(&self.desc, d);
        for k in 2..=d {
            let probe = self.series.eval_two(&t, &neg);
            // d/d(neg_k) of [t^k] F(t, neg(t)) is F_y(0,0) = 1
            neg.coeffs[k] = neg.coeffs[k].sub(&probe.coeffs[k]);
        }
        debug_assert!(self.series.eval_two(&t, &neg).is_zero());
        neg
    }

    /// The n-series: [0] = 0, [n+1](t) = F(t, [n](t)), negatives through the
    /// formal inverse.
    pub fn n_series(&self, n: i64) -> PowerSeries1 {
        let d = self.trunc_t();
        let t = PowerSeries1::identity(&self.desc, d);
        let mut acc = PowerSeries1::zero(&self.desc, d);
        for _ in 0..n.unsigned_abs() {
            acc = self.series.eval_two(&t, &acc);
        }
        if n < 0 {
            let neg = self.formal_neg();
            acc = neg
                .compose(&acc)
                .expect("n-series has zero constant term");
        }
        acc
    }

    /// The p-series [p^r].
    pub fn p_power_series(&self, r: u32) -> Result<PowerSeries1> {
        let pr = (self.desc.p as i64)
            .checked_pow(r)
            .ok_or_else(|| Error::TruncationTooSmall("p^r overflows".into()))?;
        Ok(self.n_series(pr))
    }

    /// x +_F y evaluated on two univariate series.
    pub fn add_series(&self, a: &PowerSeries1, b: &PowerSeries1) -> PowerSeries1 {
        self.series.eval_two(a, b)
    }

    /// Coefficientwise image over the residue field.
    pub fn residue_law(&self) -> PowerSeries2 {
        self.series.residue()
    }

    /// Base change / classifying-map image: apply the ring map to every
    /// coefficient; the residue twist grows by the map's Frobenius power.
    pub fn map_coeffs(&self, f: &RingMap) -> FormalGroupLaw {
        FormalGroupLaw {
            desc: f.dst.clone(),
            series: self.series.map_coeffs(f),
            base_twist: (self.base_twist + f.frobenius_power) % f.dst.m,
        }
    }

    /// Twist every coefficient by the Frobenius lift sigma^j (u fixed).
    pub fn galois_twist(&self, j: usize) -> FormalGroupLaw {
        FormalGroupLaw {
            desc: self.desc.clone(),
            series: self.series.galois_twist(j),
            base_twist: (self.base_twist + j) % self.desc.m,
        }
    }

    /// Change of coordinate: delta(F(delta^{-1} x, delta^{-1} y)) for an
    /// isomorphism delta (zero constant term, unit linear coefficient).
    pub fn conjugate(&self, delta: &PowerSeries1) -> Result<FormalGroupLaw> {
        let dinv = delta.reversion()?;
        let inner = self.series.substitute_vars(&dinv, &dinv);
        let series = inner.compose_outer(delta);
        Ok(FormalGroupLaw::from_parts(series, self.base_twist))
    }
}

// ---------------------------------------------------------------------------
// Trivariate scratch space for the associativity check.
// ---------------------------------------------------------------------------

struct Tri {
    d: usize,
    offs: Vec<usize>,
    coeffs: Vec<RingElem>,
}

impl Tri {
    fn zero(desc: &Arc<RingDescriptor>, d: usize) -> Tri {
        let mut offs = Vec::with_capacity(d + 2);
        let mut acc = 0usize;
        for i in 0..=d {
            offs.push(acc);
            acc += gser::len2(d - i);
        }
        offs.push(acc);
        Tri {
            d,
            offs,
            coeffs: vec![RingElem::zero(desc); acc],
        }
    }

    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        self.offs[i] + gser::idx2(self.d - i, j, k)
    }

    fn add_at(&mut self, i: usize, j: usize, k: usize, c: &RingElem) {
        let idx = self.idx(i, j, k);
        self.coeffs[idx] = self.coeffs[idx].add(c);
    }

    fn first_difference(&self, other: &Tri) -> Option<usize> {
        let mut worst: Option<usize> = None;
        for i in 0..=self.d {
            for j in 0..=(self.d - i) {
                for k in 0..=(self.d - i - j) {
                    if self.coeffs[self.idx(i, j, k)] != other.coeffs[other.idx(i, j, k)] {
                        let deg = i + j + k;
                        worst = Some(worst.map_or(deg, |w: usize| w.min(deg)));
                    }
                }
            }
        }
        worst
    }
}

fn ps2_powers(f: &PowerSeries2, upto: usize) -> Vec<PowerSeries2> {
    let mut pows = Vec::with_capacity(upto + 1);
    let mut one = PowerSeries2::zero(&f.desc, f.trunc_t);
    one.set(0, 0, RingElem::one(&f.desc));
    pows.push(one);
    for a in 1..=upto {
        let next = pows[a - 1].mul(f);
        pows.push(next);
    }
    pows
}

/// F(F(x,y), z) as a trivariate table.
fn tri_outer_left(f: &PowerSeries2) -> Tri {
    let d = f.trunc_t;
    let pows = ps2_powers(f, d);
    let mut out = Tri::zero(&f.desc, d);
    for a in 0..=d {
        for b in 0..=(d - a) {
            let c = f.get(a, b);
            if c.is_zero() {
                continue;
            }
            let pa = &pows[a];
            for i in 0..=d {
                for j in 0..=(d - i) {
                    if i + j + b > d {
                        continue;
                    }
                    let v = pa.get(i, j);
                    if v.is_zero() {
                        continue;
                    }
                    out.add_at(i, j, b, &v.mul(c));
                }
            }
        }
    }
    out
}

/// F(x, F(y,z)) as a trivariate table.
fn tri_outer_right(f: &PowerSeries2) -> Tri {
    let d = f.trunc_t;
    let pows = ps2_powers(f, d);
    let mut out = Tri::zero(&f.desc, d);
    for a in 0..=d {
        for b in 0..=(d - a) {
            let c = f.get(a, b);
            if c.is_zero() {
                continue;
            }
            let pb = &pows[b];
            for j in 0..=d {
                for k in 0..=(d - j) {
                    if a + j + k > d {
                        continue;
                    }
                    let v = pb.get(j, k);
                    if v.is_zero() {
                        continue;
                    }
                    out.add_at(a, j, k, &v.mul(c));
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Honda laws and universal deformations through rational staging.
// ---------------------------------------------------------------------------

fn staged_group_law(
    log: &[QPoly],
    p: u64,
    nvars: usize,
    trunc_u: usize,
) -> Result<Vec<QPoly>> {
    let d = log.len() - 1;
    let zero = QPoly::zero(p, nvars, trunc_u);
    let exp = gser::reverse(log).ok_or(Error::NonUnitLinear)?;
    // S(x, y) = f(x) + f(y)
    let mut s = gser::zero2(&zero, d);
    for (e, c) in log.iter().enumerate() {
        if c.is_zero_c() {
            continue;
        }
        let ix = gser::idx2(d, e, 0);
        s[ix] = s[ix].add_c(c);
        let iy = gser::idx2(d, 0, e);
        s[iy] = s[iy].add_c(c);
    }
    Ok(gser::compose12(d, &exp, &s))
}

fn staged_to_series(
    staged: Vec<QPoly>,
    desc: &Arc<RingDescriptor>,
    d: usize,
) -> Result<PowerSeries2> {
    let mut out = PowerSeries2::zero(desc, d);
    for i in 0..=d {
        for j in 0..=(d - i) {
            let q = &staged[gser::idx2(d, i, j)];
            if !q.is_integral() {
                return Err(Error::IntegralityFailure(format!(
                    "group-law coefficient at ({i},{j}) has a residual denominator"
                )));
            }
            out.set(i, j, q.to_ring_elem(desc)?);
        }
    }
    Ok(out)
}

/// The height-n Honda formal group law over F_{p^m} ([p](t) = t^{p^n}),
/// through the rationally staged functional-equation logarithm.
pub fn honda_law(p: u64, height: usize, m: usize, trunc_t: usize) -> Result<FormalGroupLaw> {
    let pn = (p as u128).pow(height as u32);
    if (trunc_t as u128) < pn {
        return Err(Error::TruncationTooSmall(format!(
            "trunc_t = {trunc_t} < p^n = {pn}"
        )));
    }
    let desc = RingDescriptor::with_defaults(p, m, 1, 1, 0)?;
    let log = functional_equation_log(p, height, 0, 0, trunc_t)?;
    let staged = staged_group_law(&log, p, 0, 0)?;
    let series = staged_to_series(staged, &desc, trunc_t)?;
    let law = FormalGroupLaw::validate(series)?;
    debug_assert_eq!(
        law.p_power_series(1).unwrap(),
        PowerSeries1::monomial(&desc, trunc_t, pn as usize, RingElem::one(&desc)),
    );
    Ok(law)
}

/// A Lubin-Tate universal deformation of the height-n Honda law over the
/// given descriptor (height read from the descriptor), with the Frobenius
/// lift inside the functional equation fixed to u_j -> u_j^p so outputs are
/// bit-reproducible. Its reduction modulo (p, u) is the Honda law.
pub fn universal_deformation(desc: &Arc<RingDescriptor>, trunc_t: usize) -> Result<FormalGroupLaw> {
    let height = desc.n;
    let pn = (desc.p as u128).pow(height as u32);
    if (trunc_t as u128) < pn {
        return Err(Error::TruncationTooSmall(format!(
            "trunc_t = {trunc_t} < p^n = {pn}"
        )));
    }
    let nvars = desc.num_vars();
    let log = functional_equation_log(desc.p, height, nvars, desc.trunc_u, trunc_t)?;
    let staged = staged_group_law(&log, desc.p, nvars, desc.trunc_u)?;
    let series = staged_to_series(staged, desc, trunc_t)?;
    let law = FormalGroupLaw::validate(series)?;
    // the defining property: reduction mod (p, u) is the Honda law
    let honda = honda_law(desc.p, height, desc.m, trunc_t)?;
    if law.residue_law() != honda.series {
        return Err(Error::IntegralityFailure(
            "universal deformation does not reduce to the Honda law".into(),
        ));
    }
    Ok(law)
}

/// The multiplicative law x + y + xy (a convenient height-one fixture).
pub fn multiplicative_law(desc: &Arc<RingDescriptor>, trunc_t: usize) -> Result<FormalGroupLaw> {
    let mut s = PowerSeries2::additive(desc, trunc_t);
    if trunc_t >= 2 {
        s.set(1, 1, RingElem::one(desc));
    }
    FormalGroupLaw::validate(s)
}

/// Seeded star-isomorphism sample: t plus higher terms with maximal-ideal
/// coefficients.
pub fn sample_star_iso<R: Rng>(
    desc: &Arc<RingDescriptor>,
    trunc_t: usize,
    rng: &mut R,
) -> PowerSeries1 {
    let mut s = PowerSeries1::identity(desc, trunc_t);
    for k in 2..=trunc_t {
        s.coeffs[k] = sample_maximal_ideal(desc, rng);
    }
    s
}

/// Seeded element of the maximal ideal (p, u_1..u_{n-1}).
pub fn sample_maximal_ideal<R: Rng>(desc: &Arc<RingDescriptor>, rng: &mut R) -> RingElem {
    let mut out = RingElem::zero(desc);
    let p_part: i64 = rng.gen_range(0..desc.modulus() as i64);
    out = out.add(&RingElem::from_i64(desc, p_part * desc.p as i64));
    for mono in crate::ring::all_monomials(desc) {
        if mono.total() == 0 {
            continue;
        }
        let w = crate::ring::Witt(
            (0..desc.m)
                .map(|_| rng.gen_range(0..desc.modulus()))
                .collect(),
        );
        out.insert_term(mono, w);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zp(p: u64, prec: u32) -> Arc<RingDescriptor> {
        RingDescriptor::with_defaults(p, 1, 1, prec, 0).unwrap()
    }

    #[test]
    fn additive_and_multiplicative_laws_validate() {
        let d = zp(2, 3);
        let add = PowerSeries2::additive(&d, 5);
        assert!(FormalGroupLaw::validate(add).is_ok());
        assert!(multiplicative_law(&d, 5).is_ok());
    }

    #[test]
    fn symmetry_violation_is_rejected() {
        let d = zp(2, 3);
        let mut s = PowerSeries2::additive(&d, 4);
        s.set(2, 0, RingElem::one(&d)); // x + y + x^2
        match FormalGroupLaw::validate(s) {
            Err(Error::AxiomFailure { axiom, .. }) => assert_eq!(axiom, "commutativity"),
            other => panic!("expected symmetry failure, got {other:?}"),
        }
    }

    #[test]
    fn associativity_violation_is_rejected() {
        let d = zp(5, 2);
        let mut s = PowerSeries2::additive(&d, 4);
        s.set(1, 1, RingElem::from_i64(&d, 1));
        s.set(2, 2, RingElem::from_i64(&d, 3)); // breaks associativity at degree 4
        match FormalGroupLaw::validate(s) {
            Err(Error::AxiomFailure { axiom, .. }) => assert_eq!(axiom, "associativity"),
            other => panic!("expected associativity failure, got {other:?}"),
        }
    }

    #[test]
    fn formal_neg_of_multiplicative_is_geometric() {
        let d = zp(2, 4);
        let law = multiplicative_law(&d, 6).unwrap();
        let neg = law.formal_neg();
        // 1/(1+t) - 1 = -t + t^2 - t^3 + ...
        for k in 1..=6 {
            let want = if k % 2 == 1 { -1 } else { 1 };
            assert_eq!(neg.coeffs[k], RingElem::from_i64(&d, want));
        }
        let t = PowerSeries1::identity(&d, 6);
        assert!(law.series.eval_two(&t, &neg).is_zero());
    }

    #[test]
    fn n_series_basics() {
        let d = zp(3, 3);
        let law = multiplicative_law(&d, 9).unwrap();
        assert_eq!(law.n_series(1), PowerSeries1::identity(&d, 9));
        // [3](t) = (1+t)^3 - 1
        let three = law.n_series(3);
        assert_eq!(three.coeffs[1], RingElem::from_i64(&d, 3));
        assert_eq!(three.coeffs[2], RingElem::from_i64(&d, 3));
        assert_eq!(three.coeffs[3], RingElem::from_i64(&d, 1));
        // homomorphism property [a+b] = F([a], [b]) for random small a, b
        for (a, b) in [(2i64, 3i64), (-1, 4), (2, -3), (-2, -2)] {
            let lhs = law.n_series(a + b);
            let rhs = law
                .series
                .eval_two(&law.n_series(a), &law.n_series(b));
            assert_eq!(lhs, rhs, "[{a}+{b}] = F([{a}],[{b}])");
        }
    }

    #[test]
    fn honda_law_has_pure_frobenius_p_series() {
        for (p, n, m, d) in [(2u64, 1usize, 1usize, 4usize), (2, 2, 1, 8), (3, 1, 2, 9)] {
            let law = honda_law(p, n, m, d).unwrap();
            let ps = law.p_power_series(1).unwrap();
            let pn = (p as usize).pow(n as u32);
            for k in 0..=d {
                if k == pn {
                    assert!(ps.coeffs[k].is_unit());
                    assert_eq!(ps.coeffs[k], RingElem::one(&law.desc));
                } else {
                    assert!(ps.coeffs[k].is_zero(), "p={p} n={n}: [p] must be t^{pn}");
                }
            }
        }
    }

    #[test]
    fn universal_deformation_height_one() {
        let desc = zp(2, 4);
        let law = universal_deformation(&desc, 8).unwrap();
        let ps = law.p_power_series(1).unwrap();
        assert_eq!(ps.coeffs[1], RingElem::from_i64(&desc, 2), "[p]'(0) = p");
        // reduction is the Honda law (checked inside the constructor too)
        let honda = honda_law(2, 1, 1, 8).unwrap();
        assert_eq!(law.residue_law(), honda.series);
    }

    #[test]
    fn universal_deformation_height_two() {
        let desc = RingDescriptor::with_defaults(2, 1, 2, 3, 4).unwrap();
        let law = universal_deformation(&desc, 8).unwrap();
        let ps = law.p_power_series(1).unwrap();
        let u = RingElem::var(&desc, 0);
        assert_eq!(ps.coeffs[1], RingElem::from_i64(&desc, 2));
        // t^2 coefficient is u_1 up to I^2 corrections
        assert!(ps.coeffs[2].sub(&u).i_order() >= 2, "c2 = u1 mod I^2");
        // t^4 coefficient is a unit congruent to 1
        assert_eq!(ps.coeffs[4].residue(), RingElem::one(&desc).residue());
        // residue reduction of the p-series is t^4
        let r = ps.residue();
        for k in 0..=8 {
            if k == 4 {
                assert!(!r.coeffs[k].is_zero());
            } else {
                assert!(r.coeffs[k].is_zero());
            }
        }
    }

    #[test]
    fn conjugation_preserves_law_axioms() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let desc = RingDescriptor::with_defaults(2, 1, 2, 3, 3).unwrap();
        let law = universal_deformation(&desc, 6).unwrap();
        let s = sample_star_iso(&desc, 6, &mut rng);
        let conj = law.conjugate(&s).unwrap();
        assert!(FormalGroupLaw::validate(conj.series.clone()).is_ok());
        // conjugating back recovers the law
        let sinv = s.reversion().unwrap();
        let back = conj.conjugate(&sinv).unwrap();
        assert_eq!(back.series, law.series);
    }
}
