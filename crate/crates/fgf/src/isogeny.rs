//! Kernel polynomials of full-torsion subgroups, the quotient isogeny
//! obtained as a norm over the subgroup divisor, and the quotient formal
//! group law.

use crate::error::{Error, Result};
use crate::fgl::FormalGroupLaw;
use crate::ring::RingElem;
use crate::series::{
    companion_norm, divide_by_distinguished, weierstrass_prepare, DistinguishedPoly,
    PowerSeries1, PowerSeries2,
};

/// A distinguished monic polynomial of degree p^degree_log cutting out a
/// finite subgroup divisor of the source law; t divides it (the identity
/// section is in the divisor).
#[derive(Clone, Debug)]
pub struct KernelPolynomial {
    pub poly: DistinguishedPoly,
    /// log_p of the polynomial degree (the isogeny degree).
    pub degree_log: usize,
    /// Torsion level s with the divisor contained in F[p^s].
    pub level: u32,
    pub source: FormalGroupLaw,
}

impl KernelPolynomial {
    /// Validate a user-supplied divisor polynomial against a law: it must be
    /// distinguished, divisible by t, of p-power degree, and divide the
    /// Weierstrass part of the p^s-series that kills it.
    pub fn from_poly(law: &FormalGroupLaw, poly: DistinguishedPoly) -> Result<KernelPolynomial> {
        if !poly.divisible_by_t() {
            return Err(Error::ResidueMismatch(
                "kernel polynomial must vanish at t = 0".into(),
            ));
        }
        let deg = poly.degree();
        let p = law.desc.p;
        let mut degree_log = 0usize;
        let mut q = 1usize;
        while q < deg {
            q = q
                .checked_mul(p as usize)
                .ok_or_else(|| Error::TruncationTooSmall("kernel degree overflow".into()))?;
            degree_log += 1;
        }
        if q != deg {
            return Err(Error::ResidueMismatch(format!(
                "kernel degree {deg} is not a power of p = {p}"
            )));
        }
        if degree_log > 0 {
            // the divisor is killed by [p^degree_log]
            let ps = law.p_power_series(degree_log as u32)?;
            let (torsion, _) = weierstrass_prepare(&ps)?;
            let (_, rem) = divide_by_distinguished(&torsion.as_series(law.trunc_t()), &poly)?;
            if !rem.is_zero() {
                return Err(Error::ResidueMismatch(
                    "polynomial does not divide the full-torsion Weierstrass part".into(),
                ));
            }
        }
        Ok(KernelPolynomial {
            poly,
            degree_log,
            level: degree_log as u32,
            source: law.clone(),
        })
    }
}

/// The Weierstrass polynomial of the p^level-series: the kernel of the
/// full-torsion subgroup F[p^level].
pub fn kernel_polynomial(law: &FormalGroupLaw, level: u32) -> Result<KernelPolynomial> {
    let ps = law.p_power_series(level)?;
    let (poly, _unit) = weierstrass_prepare(&ps)?;
    if !poly.divisible_by_t() {
        return Err(Error::ResidueMismatch(
            "torsion Weierstrass part misses the identity section".into(),
        ));
    }
    let deg = poly.degree();
    let p = law.desc.p as usize;
    let mut degree_log = 0usize;
    let mut q = 1usize;
    while q < deg {
        q *= p;
        degree_log += 1;
    }
    if q != deg {
        return Err(Error::ResidueMismatch(format!(
            "Weierstrass degree {deg} of the p^{level}-series is not a p-power"
        )));
    }
    Ok(KernelPolynomial {
        poly,
        degree_log,
        level,
        source: law.clone(),
    })
}

/// An isogeny of formal group laws with its quotient coordinate series:
/// h(F(x,y)) = Phi(h(x), h(y)) at truncation and h reduces to x^{p^r}.
#[derive(Clone, Debug)]
pub struct Isogeny {
    pub source: FormalGroupLaw,
    pub target: FormalGroupLaw,
    pub series: PowerSeries1,
    pub degree_log: usize,
    /// Residue-twist bookkeeping for the pushforward (equals degree_log).
    pub frobenius_power: usize,
}

impl Isogeny {
    /// h(F(x,y)) = Phi(h(x), h(y)) coefficientwise at truncation.
    pub fn verify_homomorphism(&self) -> bool {
        let lhs = self.source.series.compose_outer(&self.series);
        let rhs = self.target.series.substitute_vars(&self.series, &self.series);
        lhs == rhs
    }
}

/// The norm of the group-law translation series over the kernel divisor:
/// the product of x +_F x(Q) over the divisor points, as a companion-matrix
/// determinant. Reduces to x^{p^r} over the residue field.
pub fn norm_series(law: &FormalGroupLaw, kernel: &KernelPolynomial) -> Result<PowerSeries1> {
    let h = companion_norm(&kernel.poly, &law.series);
    if !h.coeffs[0].is_zero() {
        return Err(Error::ResidueMismatch(
            "norm series has a nonzero constant term".into(),
        ));
    }
    let q = kernel.poly.degree();
    let r = h.residue();
    let rdesc = r.desc.clone();
    for (k, c) in r.coeffs.iter().enumerate() {
        let ok = if k == q {
            *c == RingElem::one(&rdesc)
        } else {
            c.is_zero()
        };
        if !ok {
            return Err(Error::ResidueMismatch(format!(
                "norm series does not reduce to x^{q} (degree {k} differs); \
                 the polynomial does not cut a subgroup divisor"
            )));
        }
    }
    Ok(h)
}

/// The quotient isogeny f_H: source -> source/H with coordinate pulled back
/// through the norm, together with the solved quotient law.
pub fn lubin_isogeny(law: &FormalGroupLaw, kernel: &KernelPolynomial) -> Result<Isogeny> {
    let h = norm_series(law, kernel)?;
    let target = quotient_law(law, &h, None)?;
    Ok(Isogeny {
        source: law.clone(),
        target,
        series: h,
        degree_log: kernel.degree_log,
        frobenius_power: kernel.degree_log,
    })
}

/// Solve Phi(h(x), h(y)) = h(F(x,y)) for the quotient law Phi by
/// undetermined coefficients: the system is unitriangular modulo the
/// maximal ideal with leading monomials x^{qi} y^{qj} (q the isogeny
/// degree), and is drained by successive approximation through the
/// (p, u)-filtration. An optional seed supplies coefficients the window
/// cannot see (used when the expected target is known).
pub fn quotient_law(
    law: &FormalGroupLaw,
    h: &PowerSeries1,
    seed: Option<&PowerSeries2>,
) -> Result<FormalGroupLaw> {
    let desc = &law.desc;
    let d = law.trunc_t();
    // isogeny degree from the residue of h
    let hres = h.residue();
    let q = hres
        .coeffs
        .iter()
        .position(|c| !c.is_zero())
        .ok_or_else(|| Error::ResidueMismatch("isogeny series vanishes mod m".into()))?;
    if q == 0 {
        return Err(Error::ResidueMismatch(
            "isogeny series has a unit constant term".into(),
        ));
    }
    let degree_log = {
        let p = desc.p as usize;
        let mut dl = 0;
        let mut acc = 1usize;
        while acc < q {
            acc *= p;
            dl += 1;
        }
        if acc != q {
            return Err(Error::ResidueMismatch(format!(
                "isogeny residue degree {q} is not a p-power"
            )));
        }
        dl
    };
    if q > 1 && d < 2 * q {
        return Err(Error::TruncationTooSmall(format!(
            "trunc_t = {d} < 2 p^r = {}",
            2 * q
        )));
    }
    let rhs = law.series.compose_outer(h);
    let mut phi = match seed {
        Some(s) => s.clone(),
        None => PowerSeries2::zero(desc, d),
    };
    // powers of h and the unit pivots at the lattice points
    let mut hp: Vec<PowerSeries1> = Vec::new();
    let mut one = PowerSeries1::zero(desc, d);
    one.coeffs[0] = RingElem::one(desc);
    hp.push(one);
    for i in 1..=(d / q) {
        let next = hp[i - 1].mul(h);
        hp.push(next);
    }
    let lattice: Vec<(usize, usize)> = {
        let mut v = Vec::new();
        for s in 0..=(d / q) {
            for i in 0..=s {
                v.push((i, s - i));
            }
        }
        v
    };
    let mut pivot_inv = Vec::with_capacity(lattice.len());
    for &(i, j) in &lattice {
        let unit = hp[i].coeffs[q * i].mul(&hp[j].coeffs[q * j]);
        pivot_inv.push(unit.inverse().ok_or_else(|| {
            Error::ResidueMismatch("lattice pivot is not a unit".into())
        })?);
    }
    let mut residual = rhs.sub(&phi.substitute_vars(h, h));
    let cap = desc.filtration_cap() + 2;
    let mut last_order = residual.i_order();
    for _pass in 0..cap {
        if residual.is_zero() {
            break;
        }
        for (idx, &(i, j)) in lattice.iter().enumerate() {
            let r = residual.get(q * i, q * j);
            if r.is_zero() {
                continue;
            }
            let delta = r.mul(&pivot_inv[idx]);
            phi.add_at(i, j, &delta);
            // subtract delta * h(x)^i h(y)^j from the residual
            for (a, ca) in hp[i].coeffs.iter().enumerate() {
                if ca.is_zero() {
                    continue;
                }
                for (b, cb) in hp[j].coeffs.iter().enumerate() {
                    if a + b > d {
                        break;
                    }
                    if cb.is_zero() {
                        continue;
                    }
                    let t = delta.mul(ca).mul(cb).neg();
                    residual.add_at(a, b, &t);
                }
            }
        }
        if residual.is_zero() {
            break;
        }
        let order = residual.i_order();
        if order <= last_order {
            return Err(Error::NotInvariant { stage: order });
        }
        last_order = order;
    }
    if !residual.is_zero() {
        return Err(Error::NotInvariant { stage: last_order });
    }
    let twist = (law.base_twist + degree_log) % desc.m;
    FormalGroupLaw::validate_with_twist(phi, twist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fgl::{multiplicative_law, universal_deformation};
    use crate::ring::{RingDescriptor, RingElem, RingMap};
    use crate::series::weierstrass_prepare;
    use std::sync::Arc;

    fn zp(p: u64, prec: u32) -> Arc<RingDescriptor> {
        RingDescriptor::with_defaults(p, 1, 1, prec, 0).unwrap()
    }

    #[test]
    fn multiplicative_two_torsion_kernel() {
        let d = zp(2, 3);
        let law = multiplicative_law(&d, 6).unwrap();
        let k = kernel_polynomial(&law, 1).unwrap();
        assert_eq!(k.degree_log, 1);
        assert_eq!(k.poly.coeffs[0], RingElem::zero(&d));
        assert_eq!(k.poly.coeffs[1], RingElem::from_i64(&d, 2));
        assert_eq!(k.poly.coeffs[2], RingElem::one(&d));
    }

    #[test]
    fn honda_height_two_kernel_is_t4() {
        let law = crate::fgl::honda_law(2, 2, 1, 8).unwrap();
        let k = kernel_polynomial(&law, 1).unwrap();
        assert_eq!(k.poly.degree(), 4);
        for i in 0..4 {
            assert!(k.poly.coeffs[i].is_zero(), "kernel of [2] over F_2 is t^4");
        }
    }

    #[test]
    fn universal_height_two_kernel_reduces_to_t4() {
        let desc = RingDescriptor::with_defaults(2, 1, 2, 3, 4).unwrap();
        let law = universal_deformation(&desc, 8).unwrap();
        let k = kernel_polynomial(&law, 1).unwrap();
        assert_eq!(k.poly.degree(), 4);
        for i in 0..4 {
            assert!(k.poly.coeffs[i].in_maximal_ideal());
        }
    }

    #[test]
    fn lubin_isogeny_multiplicative_p2() {
        let d = zp(2, 3);
        let law = multiplicative_law(&d, 6).unwrap();
        let k = kernel_polynomial(&law, 1).unwrap();
        let iso = lubin_isogeny(&law, &k).unwrap();
        // product over roots {0, -2}: x (x + (-2) + x(-2)) = -x^2 - 2x
        assert_eq!(iso.series.coeffs[1], RingElem::from_i64(&d, -2));
        assert_eq!(iso.series.coeffs[2], RingElem::from_i64(&d, -1));
        assert!(iso.verify_homomorphism());
        // quotient law is u + v - uv
        assert_eq!(iso.target.series.get(1, 1), &RingElem::from_i64(&d, -1));
        assert_eq!(iso.target.series.get(1, 0), &RingElem::one(&d));
    }

    #[test]
    fn lubin_isogeny_multiplicative_p3_is_cyclotomic() {
        let d = zp(3, 3);
        let law = multiplicative_law(&d, 9).unwrap();
        let k = kernel_polynomial(&law, 1).unwrap();
        let iso = lubin_isogeny(&law, &k).unwrap();
        // (1+x)^3 - 1
        assert_eq!(iso.series.coeffs[1], RingElem::from_i64(&d, 3));
        assert_eq!(iso.series.coeffs[2], RingElem::from_i64(&d, 3));
        assert_eq!(iso.series.coeffs[3], RingElem::from_i64(&d, 1));
        assert!(iso.verify_homomorphism());
        // quotient law is u + v + uv again
        assert_eq!(iso.target.series, law.series);
    }

    #[test]
    fn trivial_kernel_gives_identity_isogeny() {
        let d = zp(2, 3);
        let law = multiplicative_law(&d, 5).unwrap();
        let poly = DistinguishedPoly::new(&d, vec![RingElem::zero(&d), RingElem::one(&d)]).unwrap();
        let k = KernelPolynomial::from_poly(&law, poly).unwrap();
        assert_eq!(k.degree_log, 0);
        let iso = lubin_isogeny(&law, &k).unwrap();
        assert_eq!(iso.series, PowerSeries1::identity(&d, 5));
        assert_eq!(iso.target.series, law.series);
    }

    #[test]
    fn kernel_recovery_from_norm_series() {
        let d = zp(3, 3);
        let law = multiplicative_law(&d, 9).unwrap();
        let k = kernel_polynomial(&law, 1).unwrap();
        let iso = lubin_isogeny(&law, &k).unwrap();
        let (g, _) = weierstrass_prepare(&iso.series).unwrap();
        assert_eq!(g.coeffs, k.poly.coeffs, "Weierstrass part of h recovers g");
    }

    #[test]
    fn tower_degrees_add() {
        let d = zp(2, 4);
        let law = multiplicative_law(&d, 12).unwrap();
        let k1 = kernel_polynomial(&law, 1).unwrap();
        let iso1 = lubin_isogeny(&law, &k1).unwrap();
        let k2 = kernel_polynomial(&iso1.target, 1).unwrap();
        let iso2 = lubin_isogeny(&iso1.target, &k2).unwrap();
        let composite = iso2
            .series
            .compose(&iso1.series)
            .expect("composable series");
        let k_full = kernel_polynomial(&law, 2).unwrap();
        assert_eq!(k_full.degree_log, 2);
        assert_eq!(iso1.degree_log + iso2.degree_log, k_full.degree_log);
        // the composite is a homomorphism onto the two-stage quotient
        let lhs = law.series.compose_outer(&composite);
        let rhs = iso2
            .target
            .series
            .substitute_vars(&composite, &composite);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn rejects_divisor_that_is_not_a_subgroup() {
        let d = zp(2, 3);
        let law = multiplicative_law(&d, 6).unwrap();
        // t^2 + 4t is distinguished but does not divide [2] = t^2 + 2t
        let poly = DistinguishedPoly::new(
            &d,
            vec![
                RingElem::zero(&d),
                RingElem::from_i64(&d, 4),
                RingElem::one(&d),
            ],
        )
        .unwrap();
        assert!(KernelPolynomial::from_poly(&law, poly).is_err());
    }

    #[test]
    fn quotient_commutes_with_base_change() {
        // quotient then specialize u = 2c equals specialize then quotient
        let e2 = RingDescriptor::with_defaults(2, 1, 2, 2, 1).unwrap();
        let z2 = RingDescriptor::with_defaults(2, 1, 1, 2, 0).unwrap();
        let law = universal_deformation(&e2, 8).unwrap();
        let beta = RingMap::new(&e2, &z2, 0, vec![RingElem::from_i64(&z2, 2)]).unwrap();

        let k = kernel_polynomial(&law, 1).unwrap();
        let iso = lubin_isogeny(&law, &k).unwrap();
        let quotient_then_specialize = iso.target.map_coeffs(&beta);

        let specialized = law.map_coeffs(&beta);
        let k2 = kernel_polynomial(&specialized, 1).unwrap();
        let iso2 = lubin_isogeny(&specialized, &k2).unwrap();
        assert_eq!(iso2.series, iso.series.map_coeffs(&beta));
        assert_eq!(iso2.target.series, quotient_then_specialize.series);
    }
}
