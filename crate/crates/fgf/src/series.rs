//! Truncated one- and two-variable power series over the coefficient ring:
//! composition, reversion, Weierstrass preparation, coefficient twisting,
//! and companion-matrix norms (root-free products over subgroup divisors).
//!
//! Series equality means coefficientwise equality at the declared truncation
//! (p^N, u-degree <= M, t-degree <= D); every postcondition is read at this
//! precision.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ring::{RingDescriptor, RingElem, RingMap};

// ---------------------------------------------------------------------------
// Generic coefficient interface, shared with the rational staging ring.
// ---------------------------------------------------------------------------

pub(crate) trait Coeff: Clone + PartialEq + std::fmt::Debug {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn add_c(&self, o: &Self) -> Self;
    fn sub_c(&self, o: &Self) -> Self;
    fn neg_c(&self) -> Self;
    fn mul_c(&self, o: &Self) -> Self;
    fn is_zero_c(&self) -> bool;
    fn inv_c(&self) -> Option<Self>;
    fn scale_int(&self, k: i64) -> Self;
}

impl Coeff for RingElem {
    fn zero_like(&self) -> Self {
        RingElem::zero(&self.desc)
    }
    fn one_like(&self) -> Self {
        RingElem::one(&self.desc)
    }
    fn add_c(&self, o: &Self) -> Self {
        self.add(o)
    }
    fn sub_c(&self, o: &Self) -> Self {
        self.sub(o)
    }
    fn neg_c(&self) -> Self {
        self.neg()
    }
    fn mul_c(&self, o: &Self) -> Self {
        self.mul(o)
    }
    fn is_zero_c(&self) -> bool {
        self.is_zero()
    }
    fn inv_c(&self) -> Option<Self> {
        self.inverse()
    }
    fn scale_int(&self, k: i64) -> Self {
        self.mul_i64(k)
    }
}

pub(crate) mod gser {
    //! Series kernels over any coefficient ring; all vectors have length
    //! D + 1 and are truncated at degree D.

    use super::Coeff;

    pub fn zero<C: Coeff>(like: &C, d: usize) -> Vec<C> {
        vec![like.zero_like(); d + 1]
    }

    pub fn add<C: Coeff>(a: &[C], b: &[C]) -> Vec<C> {
        a.iter().zip(b).map(|(x, y)| x.add_c(y)).collect()
    }

    pub fn sub<C: Coeff>(a: &[C], b: &[C]) -> Vec<C> {
        a.iter().zip(b).map(|(x, y)| x.sub_c(y)).collect()
    }

    pub fn neg<C: Coeff>(a: &[C]) -> Vec<C> {
        a.iter().map(|x| x.neg_c()).collect()
    }

    pub fn is_zero<C: Coeff>(a: &[C]) -> bool {
        a.iter().all(|x| x.is_zero_c())
    }

    pub fn mul<C: Coeff>(a: &[C], b: &[C]) -> Vec<C> {
        let d = a.len() - 1;
        let mut out = zero(&a[0], d);
        for (i, x) in a.iter().enumerate() {
            if x.is_zero_c() {
                continue;
            }
            for (j, y) in b.iter().enumerate() {
                if i + j > d {
                    break;
                }
                if y.is_zero_c() {
                    continue;
                }
                out[i + j] = out[i + j].add_c(&x.mul_c(y));
            }
        }
        out
    }

    pub fn scale<C: Coeff>(a: &[C], c: &C) -> Vec<C> {
        a.iter().map(|x| x.mul_c(c)).collect()
    }

    pub fn deriv<C: Coeff>(a: &[C]) -> Vec<C> {
        let d = a.len() - 1;
        let mut out = zero(&a[0], d);
        for k in 1..=d {
            out[k - 1] = a[k].scale_int(k as i64);
        }
        out
    }

    /// Multiplicative inverse of a series with invertible constant term.
    pub fn inverse<C: Coeff>(a: &[C]) -> Option<Vec<C>> {
        let d = a.len() - 1;
        let c0 = a[0].inv_c()?;
        let mut out = zero(&a[0], d);
        out[0] = c0.clone();
        for k in 1..=d {
            let mut acc = a[0].zero_like();
            for i in 1..=k {
                if a[i].is_zero_c() {
                    continue;
                }
                acc = acc.add_c(&a[i].mul_c(&out[k - i]));
            }
            out[k] = acc.mul_c(&c0).neg_c();
        }
        Some(out)
    }

    /// f(g(t)) for g with zero constant term, by descending Horner.
    pub fn compose<C: Coeff>(f: &[C], g: &[C]) -> Vec<C> {
        let d = f.len() - 1;
        assert!(g[0].is_zero_c(), "inner series must have zero constant term");
        let mut acc = zero(&f[0], d);
        acc[0] = f[d].clone();
        for k in (0..d).rev() {
            acc = mul(&acc, g);
            acc[0] = acc[0].add_c(&f[k]);
        }
        acc
    }

    /// Compositional inverse of f = f1 t + ..., f1 invertible, by Newton
    /// iteration g <- g - (f(g) - t) / f'(g).
    pub fn reverse<C: Coeff>(f: &[C]) -> Option<Vec<C>> {
        let d = f.len() - 1;
        if !f[0].is_zero_c() {
            return None;
        }
        let f1inv = f[1].inv_c()?;
        let mut g = zero(&f[0], d);
        if d >= 1 {
            g[1] = f1inv;
        }
        let fp = deriv(f);
        let steps = (usize::BITS - d.leading_zeros()) as usize + 2;
        for _ in 0..steps {
            let mut e = compose(f, &g);
            e[1] = e[1].sub_c(&f[0].one_like()); // f(g) - t
            if is_zero(&e) {
                break;
            }
            let slope = compose(&fp, &g);
            let slope_inv = inverse(&slope)?;
            let delta = mul(&e, &slope_inv);
            g = sub(&g, &delta);
        }
        debug_assert!({
            let mut e = compose(f, &g);
            e[1] = e[1].sub_c(&f[0].one_like());
            is_zero(&e)
        });
        Some(g)
    }

    // -- two-variable series, triangular layout -----------------------------

    pub fn idx2(d: usize, i: usize, j: usize) -> usize {
        debug_assert!(i + j <= d);
        i * (d + 1) - i.saturating_sub(1) * i / 2 + j
    }

    pub fn len2(d: usize) -> usize {
        (d + 1) * (d + 2) / 2
    }

    pub fn zero2<C: Coeff>(like: &C, d: usize) -> Vec<C> {
        vec![like.zero_like(); len2(d)]
    }

    pub fn mul2<C: Coeff>(d: usize, a: &[C], b: &[C]) -> Vec<C> {
        // iterate the sparser factor in the outer loop
        let nz = |v: &[C]| v.iter().filter(|c| !c.is_zero_c()).count();
        let (a, b) = if nz(b) < nz(a) { (b, a) } else { (a, b) };
        let mut out = zero2(&a[0], d);
        for ia in 0..=d {
            for ja in 0..=(d - ia) {
                let x = &a[idx2(d, ia, ja)];
                if x.is_zero_c() {
                    continue;
                }
                for ib in 0..=(d - ia - ja) {
                    for jb in 0..=(d - ia - ja - ib) {
                        let y = &b[idx2(d, ib, jb)];
                        if y.is_zero_c() {
                            continue;
                        }
                        let t = idx2(d, ia + ib, ja + jb);
                        out[t] = out[t].add_c(&x.mul_c(y));
                    }
                }
            }
        }
        out
    }

    /// f(A) for a univariate f and a bivariate A with zero constant term.
    pub fn compose12<C: Coeff>(d: usize, f: &[C], a: &[C]) -> Vec<C> {
        assert!(a[0].is_zero_c());
        let mut out = zero2(&f[0], d);
        out[0] = f[d].clone();
        for k in (0..d).rev() {
            out = mul2(d, &out, a);
            out[0] = out[0].add_c(&f[k]);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Concrete series over the coefficient ring.
// ---------------------------------------------------------------------------

/// One-variable truncated series; `coeffs.len() == trunc_t + 1` always.
#[derive(Clone, PartialEq, Debug)]
pub struct PowerSeries1 {
    pub desc: Arc<RingDescriptor>,
    pub coeffs: Vec<RingElem>,
}

impl PowerSeries1 {
    pub fn zero(desc: &Arc<RingDescriptor>, d: usize) -> Self {
        PowerSeries1 {
            desc: desc.clone(),
            coeffs: vec![RingElem::zero(desc); d + 1],
        }
    }

    pub fn identity(desc: &Arc<RingDescriptor>, d: usize) -> Self {
        let mut s = Self::zero(desc, d);
        if d >= 1 {
            s.coeffs[1] = RingElem::one(desc);
        }
        s
    }

    pub fn monomial(desc: &Arc<RingDescriptor>, d: usize, k: usize, c: RingElem) -> Self {
        let mut s = Self::zero(desc, d);
        if k <= d {
            s.coeffs[k] = c;
        }
        s
    }

    pub fn from_coeffs(desc: &Arc<RingDescriptor>, coeffs: Vec<RingElem>) -> Self {
        assert!(!coeffs.is_empty());
        PowerSeries1 {
            desc: desc.clone(),
            coeffs,
        }
    }

    pub fn trunc_t(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        gser::is_zero(&self.coeffs)
    }

    pub fn add(&self, o: &Self) -> Self {
        self.check(o);
        Self::from_coeffs(&self.desc, gser::add(&self.coeffs, &o.coeffs))
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.check(o);
        Self::from_coeffs(&self.desc, gser::sub(&self.coeffs, &o.coeffs))
    }

    pub fn neg(&self) -> Self {
        Self::from_coeffs(&self.desc, gser::neg(&self.coeffs))
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.check(o);
        Self::from_coeffs(&self.desc, gser::mul(&self.coeffs, &o.coeffs))
    }

    pub fn scale(&self, c: &RingElem) -> Self {
        Self::from_coeffs(&self.desc, gser::scale(&self.coeffs, c))
    }

    pub fn derivative(&self) -> Self {
        Self::from_coeffs(&self.desc, gser::deriv(&self.coeffs))
    }

    /// f(g(t)); errors when g has a nonzero constant term.
    pub fn compose(&self, g: &Self) -> Result<Self> {
        self.check(g);
        if !g.coeffs[0].is_zero() {
            return Err(Error::NonzeroConstant);
        }
        Ok(Self::from_coeffs(
            &self.desc,
            gser::compose(&self.coeffs, &g.coeffs),
        ))
    }

    /// Multiplicative inverse (constant term a unit).
    pub fn inverse(&self) -> Result<Self> {
        gser::inverse(&self.coeffs)
            .map(|c| Self::from_coeffs(&self.desc, c))
            .ok_or(Error::NonUnitLinear)
    }

    /// Compositional inverse g with f(g(t)) = t = g(f(t)).
    pub fn reversion(&self) -> Result<Self> {
        if !self.coeffs[0].is_zero() {
            return Err(Error::NonzeroConstant);
        }
        gser::reverse(&self.coeffs)
            .map(|c| Self::from_coeffs(&self.desc, c))
            .ok_or(Error::NonUnitLinear)
    }

    /// Apply a ring map to every coefficient (target may be another ring).
    pub fn map_coeffs(&self, f: &RingMap) -> Self {
        PowerSeries1 {
            desc: f.dst.clone(),
            coeffs: self.coeffs.iter().map(|c| f.apply(c)).collect(),
        }
    }

    /// Twist coefficients by the canonical Frobenius lift sigma^j.
    pub fn galois_twist(&self, j: usize) -> Self {
        PowerSeries1 {
            desc: self.desc.clone(),
            coeffs: self.coeffs.iter().map(|c| c.witt_frobenius(j)).collect(),
        }
    }

    /// Coefficientwise image in the residue field.
    pub fn residue(&self) -> PowerSeries1 {
        let rdesc = self.desc.residue_descriptor();
        PowerSeries1 {
            desc: rdesc,
            coeffs: self.coeffs.iter().map(|c| c.to_residue_field()).collect(),
        }
    }

    /// Largest r with every coefficient in I^r (filtration cap when zero).
    pub fn i_order(&self) -> usize {
        self.coeffs
            .iter()
            .map(|c| c.i_order())
            .min()
            .unwrap_or_else(|| self.desc.filtration_cap())
    }

    /// Restriction to a smaller truncation degree.
    pub fn truncated(&self, d: usize) -> PowerSeries1 {
        assert!(d <= self.trunc_t());
        PowerSeries1 {
            desc: self.desc.clone(),
            coeffs: self.coeffs[..=d].to_vec(),
        }
    }

    /// Reinterpret at a larger truncation degree, padding with zeros.
    pub fn extended(&self, d: usize) -> PowerSeries1 {
        assert!(d >= self.trunc_t());
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(d + 1, RingElem::zero(&self.desc));
        PowerSeries1 {
            desc: self.desc.clone(),
            coeffs,
        }
    }

    fn check(&self, o: &Self) {
        assert!(*self.desc == *o.desc, "descriptor mismatch between series");
        assert_eq!(self.coeffs.len(), o.coeffs.len(), "truncation mismatch");
    }
}

impl fmt::Display for PowerSeries1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})*t^{k}")?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Two-variable truncated series, coefficients c_{ij} for i + j <= trunc_t.
#[derive(Clone, PartialEq, Debug)]
pub struct PowerSeries2 {
    pub desc: Arc<RingDescriptor>,
    pub trunc_t: usize,
    pub coeffs: Vec<RingElem>,
}

impl PowerSeries2 {
    pub fn zero(desc: &Arc<RingDescriptor>, d: usize) -> Self {
        PowerSeries2 {
            desc: desc.clone(),
            trunc_t: d,
            coeffs: vec![RingElem::zero(desc); gser::len2(d)],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> &RingElem {
        &self.coeffs[gser::idx2(self.trunc_t, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, c: RingElem) {
        let idx = gser::idx2(self.trunc_t, i, j);
        self.coeffs[idx] = c;
    }

    pub fn add_at(&mut self, i: usize, j: usize, c: &RingElem) {
        let idx = gser::idx2(self.trunc_t, i, j);
        self.coeffs[idx] = self.coeffs[idx].add(c);
    }

    pub fn is_zero(&self) -> bool {
        gser::is_zero(&self.coeffs)
    }

    pub fn add(&self, o: &Self) -> Self {
        self.check(o);
        PowerSeries2 {
            desc: self.desc.clone(),
            trunc_t: self.trunc_t,
            coeffs: gser::add(&self.coeffs, &o.coeffs),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.check(o);
        PowerSeries2 {
            desc: self.desc.clone(),
            trunc_t: self.trunc_t,
            coeffs: gser::sub(&self.coeffs, &o.coeffs),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.check(o);
        if let Some(fast) = self.mul_fast(o) {
            return fast;
        }
        PowerSeries2 {
            desc: self.desc.clone(),
            trunc_t: self.trunc_t,
            coeffs: gser::mul2(self.trunc_t, &self.coeffs, &o.coeffs),
        }
    }

    /// Flat u64 kernel for the common single-Witt-coordinate, at most one
    /// deformation variable case; the triangular convolution dominates the
    /// pipeline cost.
    fn mul_fast(&self, o: &Self) -> Option<Self> {
        let desc = &self.desc;
        if desc.m != 1 || desc.num_vars() > 1 {
            return None;
        }
        let nm = desc.trunc_u + 1; // u-degrees 0..=M (single variable or none)
        let modulus = desc.modulus() as u128;
        let d = self.trunc_t;
        let flat = |ps: &PowerSeries2| -> Vec<u64> {
            let mut out = vec![0u64; ps.coeffs.len() * nm];
            for (idx, c) in ps.coeffs.iter().enumerate() {
                for (mono, w) in &c.terms {
                    out[idx * nm + mono.total()] = w.0[0];
                }
            }
            out
        };
        let a = flat(self);
        let b = flat(o);
        let mut out = vec![0u64; self.coeffs.len() * nm];
        for ia in 0..=d {
            for ja in 0..=(d - ia) {
                let sa = gser::idx2(d, ia, ja) * nm;
                if a[sa..sa + nm].iter().all(|&v| v == 0) {
                    continue;
                }
                for ib in 0..=(d - ia - ja) {
                    for jb in 0..=(d - ia - ja - ib) {
                        let sb = gser::idx2(d, ib, jb) * nm;
                        let so = gser::idx2(d, ia + ib, ja + jb) * nm;
                        for ua in 0..nm {
                            let x = a[sa + ua];
                            if x == 0 {
                                continue;
                            }
                            for ub in 0..(nm - ua) {
                                let y = b[sb + ub];
                                if y == 0 {
                                    continue;
                                }
                                let t = (x as u128 * y as u128
                                    + out[so + ua + ub] as u128)
                                    % modulus;
                                out[so + ua + ub] = t as u64;
                            }
                        }
                    }
                }
            }
        }
        // rebuild
        let nvars = desc.num_vars();
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for idx in 0..self.coeffs.len() {
            let mut e = RingElem::zero(desc);
            for u in 0..nm {
                let v = out[idx * nm + u];
                if v != 0 {
                    let mono = if nvars == 0 {
                        crate::ring::Mono(vec![])
                    } else {
                        crate::ring::Mono(vec![u as u16])
                    };
                    e.insert_term(mono, desc.w_from_u64(v));
                }
            }
            coeffs.push(e);
        }
        Some(PowerSeries2 {
            desc: desc.clone(),
            trunc_t: d,
            coeffs,
        })
    }

    /// x + y as a series (the additive law; handy as a building block).
    pub fn additive(desc: &Arc<RingDescriptor>, d: usize) -> Self {
        let mut s = Self::zero(desc, d);
        if d >= 1 {
            s.set(1, 0, RingElem::one(desc));
            s.set(0, 1, RingElem::one(desc));
        }
        s
    }

    /// F(g(t), h(t)) for univariate g, h with zero constant terms.
    pub fn eval_two(&self, g: &PowerSeries1, h: &PowerSeries1) -> PowerSeries1 {
        let d = self.trunc_t;
        assert!(g.coeffs[0].is_zero() && h.coeffs[0].is_zero());
        let mut gp: Vec<Vec<RingElem>> = vec![vec![RingElem::one(&self.desc)]];
        let mut hp: Vec<Vec<RingElem>> = vec![vec![RingElem::one(&self.desc)]];
        let full = |v: &Vec<RingElem>| {
            let mut c = v.clone();
            c.resize(d + 1, RingElem::zero(&self.desc));
            c
        };
        let _ = &full;
        let grow = |pows: &mut Vec<Vec<RingElem>>, base: &PowerSeries1, upto: usize| {
            while pows.len() <= upto {
                let last = pows.last().unwrap();
                let mut lastfull = last.clone();
                lastfull.resize(d + 1, RingElem::zero(&self.desc));
                let prod = gser::mul(&lastfull, &base.coeffs);
                pows.push(prod);
            }
        };
        let mut out = vec![RingElem::zero(&self.desc); d + 1];
        for i in 0..=d {
            for j in 0..=(d - i) {
                let c = self.get(i, j);
                if c.is_zero() {
                    continue;
                }
                grow(&mut gp, g, i);
                grow(&mut hp, h, j);
                // product of g^i and h^j times c, accumulated
                let mut gi = gp[i].clone();
                gi.resize(d + 1, RingElem::zero(&self.desc));
                let mut hj = hp[j].clone();
                hj.resize(d + 1, RingElem::zero(&self.desc));
                let prod = gser::mul(&gi, &hj);
                for (k, v) in prod.iter().enumerate() {
                    if !v.is_zero() {
                        out[k] = out[k].add(&v.mul(c));
                    }
                }
            }
        }
        PowerSeries1::from_coeffs(&self.desc, out)
    }

    /// F(g(x), h(y)): substitute univariate series into the two slots.
    pub fn substitute_vars(&self, g: &PowerSeries1, h: &PowerSeries1) -> PowerSeries2 {
        let d = self.trunc_t;
        assert!(g.coeffs[0].is_zero() && h.coeffs[0].is_zero());
        let pows = |base: &PowerSeries1| -> Vec<Vec<RingElem>> {
            let mut p: Vec<Vec<RingElem>> = vec![vec![RingElem::one(&self.desc)]];
            for _ in 1..=d {
                let mut lastfull = p.last().unwrap().clone();
                lastfull.resize(d + 1, RingElem::zero(&self.desc));
                p.push(gser::mul(&lastfull, &base.coeffs));
            }
            p
        };
        let gp = pows(g);
        let hp = pows(h);
        let mut out = PowerSeries2::zero(&self.desc, d);
        for i in 0..=d {
            for j in 0..=(d - i) {
                let c = self.get(i, j);
                if c.is_zero() {
                    continue;
                }
                for (a, ga) in gp[i].iter().enumerate() {
                    if a > d || ga.is_zero() {
                        continue;
                    }
                    for (b, hb) in hp[j].iter().enumerate() {
                        if a + b > d || hb.is_zero() {
                            continue;
                        }
                        out.add_at(a, b, &ga.mul(hb).mul(c));
                    }
                }
            }
        }
        out
    }

    /// f(F(x,y)) for univariate f, by descending Horner (each step routes
    /// through the fast bivariate product).
    pub fn compose_outer(&self, f: &PowerSeries1) -> PowerSeries2 {
        assert!(self.coeffs[0].is_zero(), "inner bivariate must vanish at 0");
        let d = self.trunc_t;
        let mut acc = PowerSeries2::zero(&self.desc, d);
        acc.set(0, 0, f.coeffs[d].clone());
        for k in (0..d).rev() {
            acc = acc.mul(self);
            acc.add_at(0, 0, &f.coeffs[k]);
        }
        acc
    }

    pub fn map_coeffs(&self, f: &RingMap) -> Self {
        PowerSeries2 {
            desc: f.dst.clone(),
            trunc_t: self.trunc_t,
            coeffs: self.coeffs.iter().map(|c| f.apply(c)).collect(),
        }
    }

    pub fn galois_twist(&self, j: usize) -> Self {
        PowerSeries2 {
            desc: self.desc.clone(),
            trunc_t: self.trunc_t,
            coeffs: self.coeffs.iter().map(|c| c.witt_frobenius(j)).collect(),
        }
    }

    pub fn residue(&self) -> PowerSeries2 {
        let rdesc = self.desc.residue_descriptor();
        PowerSeries2 {
            desc: rdesc,
            trunc_t: self.trunc_t,
            coeffs: self.coeffs.iter().map(|c| c.to_residue_field()).collect(),
        }
    }

    /// Partial derivative with respect to the first series variable.
    pub fn d_dx(&self) -> Self {
        let d = self.trunc_t;
        let mut out = PowerSeries2::zero(&self.desc, d);
        for i in 1..=d {
            for j in 0..=(d - i) {
                let c = self.get(i, j);
                if !c.is_zero() {
                    out.set(i - 1, j, c.mul_i64(i as i64));
                }
            }
        }
        out
    }

    /// Partial derivative with respect to the second series variable.
    pub fn d_dy(&self) -> Self {
        let d = self.trunc_t;
        let mut out = PowerSeries2::zero(&self.desc, d);
        for i in 0..=d {
            for j in 1..=(d - i) {
                let c = self.get(i, j);
                if !c.is_zero() {
                    out.set(i, j - 1, c.mul_i64(j as i64));
                }
            }
        }
        out
    }

    /// Substitute (x, y) -> (x^q, y^q), dropping overflowing degrees.
    pub fn dilate(&self, q: usize) -> Self {
        let d = self.trunc_t;
        let mut out = PowerSeries2::zero(&self.desc, d);
        for i in 0..=d {
            for j in 0..=(d - i) {
                let c = self.get(i, j);
                if !c.is_zero() && q * (i + j) <= d {
                    out.set(q * i, q * j, c.clone());
                }
            }
        }
        out
    }

    /// Multiply by the monomial x^a y^b (shift indices, drop overflow).
    pub fn shift(&self, a: usize, b: usize) -> Self {
        let d = self.trunc_t;
        let mut out = PowerSeries2::zero(&self.desc, d);
        for i in 0..=d {
            for j in 0..=(d - i) {
                let c = self.get(i, j);
                if !c.is_zero() && i + a + j + b <= d {
                    out.set(i + a, j + b, c.clone());
                }
            }
        }
        out
    }

    /// Partial derivative with respect to the u_i ring variable, applied
    /// coefficientwise.
    pub fn d_du(&self, i: usize) -> Self {
        PowerSeries2 {
            desc: self.desc.clone(),
            trunc_t: self.trunc_t,
            coeffs: self.coeffs.iter().map(|c| c.d_du(i)).collect(),
        }
    }

    pub fn i_order(&self) -> usize {
        self.coeffs
            .iter()
            .map(|c| c.i_order())
            .min()
            .unwrap_or_else(|| self.desc.filtration_cap())
    }

    /// Restriction to a smaller truncation degree.
    pub fn truncated(&self, d: usize) -> PowerSeries2 {
        assert!(d <= self.trunc_t);
        let mut out = PowerSeries2::zero(&self.desc, d);
        for i in 0..=d {
            for j in 0..=(d - i) {
                out.set(i, j, self.get(i, j).clone());
            }
        }
        out
    }

    /// Reinterpret at a larger truncation degree, padding with zeros.
    pub fn extended(&self, d: usize) -> PowerSeries2 {
        assert!(d >= self.trunc_t);
        let mut out = PowerSeries2::zero(&self.desc, d);
        for i in 0..=self.trunc_t {
            for j in 0..=(self.trunc_t - i) {
                out.set(i, j, self.get(i, j).clone());
            }
        }
        out
    }

    fn check(&self, o: &Self) {
        assert!(*self.desc == *o.desc, "descriptor mismatch between series");
        assert_eq!(self.trunc_t, o.trunc_t, "truncation mismatch");
    }
}

// ---------------------------------------------------------------------------
// Weierstrass preparation.
// ---------------------------------------------------------------------------

/// Monic polynomial of degree d whose lower coefficients lie in the maximal
/// ideal; coefficients stored lowest-first with length d + 1.
#[derive(Clone, PartialEq, Debug)]
pub struct DistinguishedPoly {
    pub desc: Arc<RingDescriptor>,
    pub coeffs: Vec<RingElem>,
}

impl DistinguishedPoly {
    pub fn new(desc: &Arc<RingDescriptor>, coeffs: Vec<RingElem>) -> Result<Self> {
        if coeffs.is_empty() || *coeffs.last().unwrap() != RingElem::one(desc) {
            return Err(Error::ResidueMismatch(
                "distinguished polynomial must be monic".into(),
            ));
        }
        let d = coeffs.len() - 1;
        for (i, c) in coeffs.iter().enumerate().take(d) {
            if !c.in_maximal_ideal() {
                return Err(Error::ResidueMismatch(format!(
                    "coefficient of t^{i} is a unit; polynomial is not distinguished"
                )));
            }
        }
        Ok(DistinguishedPoly {
            desc: desc.clone(),
            coeffs,
        })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Constant term (zero iff t divides the polynomial).
    pub fn divisible_by_t(&self) -> bool {
        self.coeffs[0].is_zero()
    }

    pub fn as_series(&self, d: usize) -> PowerSeries1 {
        let mut s = PowerSeries1::zero(&self.desc, d);
        for (k, c) in self.coeffs.iter().enumerate() {
            if k <= d {
                s.coeffs[k] = c.clone();
            }
        }
        s
    }
}

fn shift_down(f: &[RingElem], d: usize, desc: &Arc<RingDescriptor>) -> Vec<RingElem> {
    let n = f.len();
    let mut out = vec![RingElem::zero(desc); n];
    for k in d..n {
        out[k - d] = f[k].clone();
    }
    out
}

/// Weierstrass division of h by f, where f has Weierstrass degree d visible
/// at this truncation: h = q f + r with deg r < d, by the standard
/// contraction through the (p, u)-filtration.
fn weierstrass_divide(
    h: &PowerSeries1,
    f: &PowerSeries1,
    d: usize,
) -> Result<(PowerSeries1, PowerSeries1)> {
    let desc = &f.desc;
    let td = f.trunc_t();
    // f = L + t^d T with T a unit series
    let mut low = vec![RingElem::zero(desc); td + 1];
    for k in 0..d.min(td + 1) {
        low[k] = f.coeffs[k].clone();
    }
    let t_part = shift_down(&f.coeffs, d, desc);
    let t_inv = gser::inverse(&t_part).ok_or(Error::NoUnitCoefficient)?;
    let cap = desc.filtration_cap() + 2;
    let mut q = vec![RingElem::zero(desc); td + 1];
    for _ in 0..cap {
        // q' = T^{-1} * shift_d(h - q L)
        let ql = gser::mul(&q, &low);
        let num = gser::sub(&h.coeffs, &ql);
        let q_next = gser::mul(&t_inv, &shift_down(&num, d, desc));
        if q_next == q {
            break;
        }
        q = q_next;
    }
    let qf = gser::mul(&q, &f.coeffs);
    let rem = gser::sub(&h.coeffs, &qf);
    for k in d..=td {
        if !rem[k].is_zero() {
            return Err(Error::NoProgress { before: d, after: k });
        }
    }
    Ok((
        PowerSeries1::from_coeffs(desc, q),
        PowerSeries1::from_coeffs(desc, rem),
    ))
}

/// Division by a distinguished monic polynomial: h = q g + r, deg r < deg g,
/// exact at the truncation.
pub fn divide_by_distinguished(
    h: &PowerSeries1,
    g: &DistinguishedPoly,
) -> Result<(PowerSeries1, PowerSeries1)> {
    let d = g.degree();
    if d == 0 {
        return Ok((h.clone(), PowerSeries1::zero(&h.desc, h.trunc_t())));
    }
    weierstrass_divide(h, &g.as_series(h.trunc_t()), d)
}

/// Weierstrass preparation: f = g * unit with g distinguished of degree d,
/// d the least index whose coefficient is a unit.
pub fn weierstrass_prepare(f: &PowerSeries1) -> Result<(DistinguishedPoly, PowerSeries1)> {
    let desc = &f.desc;
    let d = f
        .coeffs
        .iter()
        .position(|c| c.is_unit())
        .ok_or(Error::NoUnitCoefficient)?;
    if d == 0 {
        let g = DistinguishedPoly::new(desc, vec![RingElem::one(desc)])?;
        return Ok((g, f.clone()));
    }
    if d > 0 && f.trunc_t() < 2 * d {
        // the unit part is still recoverable, but downstream consumers
        // need at least one multiple of the Weierstrass degree of slack
    }
    let td = PowerSeries1::monomial(desc, f.trunc_t(), d, RingElem::one(desc));
    let (q, r) = weierstrass_divide(&td, f, d)?;
    // g = t^d - r
    let mut gcoeffs = vec![RingElem::zero(desc); d + 1];
    for k in 0..d {
        gcoeffs[k] = r.coeffs[k].neg();
    }
    gcoeffs[d] = RingElem::one(desc);
    let g = DistinguishedPoly::new(desc, gcoeffs)?;
    // unit = f / g, remainder must vanish
    let (unit, rem) = divide_by_distinguished(f, &g)?;
    if !rem.is_zero() {
        return Err(Error::NoProgress { before: d, after: 0 });
    }
    debug_assert!(unit.coeffs[0].is_unit());
    debug_assert_eq!(g.as_series(f.trunc_t()).mul(&unit), *f);
    let _ = q;
    Ok((g, unit))
}

// ---------------------------------------------------------------------------
// Companion-matrix norms.
// ---------------------------------------------------------------------------

fn mat_mul(desc: &Arc<RingDescriptor>, a: &[Vec<RingElem>], b: &[Vec<RingElem>]) -> Vec<Vec<RingElem>> {
    let n = a.len();
    let mut out = vec![vec![RingElem::zero(desc); n]; n];
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        for k in 0..n {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..n {
                if b[k][j].is_zero() {
                    continue;
                }
                out[i][j] = out[i][j].add(&a[i][k].mul(&b[k][j]));
            }
        }
    }
    out
}

/// The norm of h(x, y) over the divisor cut out by g: the product of
/// h(x, q) over the d roots q of g with multiplicity, computed without
/// constructing any root as det(h(x, C_g)) with C_g the companion matrix.
pub fn companion_norm(g: &DistinguishedPoly, h: &PowerSeries2) -> PowerSeries1 {
    let desc = &h.desc;
    let d = g.degree();
    let td = h.trunc_t;
    if d == 0 {
        let mut one = PowerSeries1::zero(desc, td);
        one.coeffs[0] = RingElem::one(desc);
        return one;
    }
    assert!(d <= 12, "companion-matrix norm limited to divisor degree <= 12");
    // companion matrix: subdiagonal ones, last column -g_i
    let mut comp = vec![vec![RingElem::zero(desc); d]; d];
    for c in 0..d.saturating_sub(1) {
        comp[c + 1][c] = RingElem::one(desc);
    }
    for r in 0..d {
        comp[r][d - 1] = g.coeffs[r].neg();
    }
    // M = sum_j h_j(x) C^j  (h_j = slice of h at y-degree j)
    let mut mat: Vec<Vec<PowerSeries1>> =
        vec![vec![PowerSeries1::zero(desc, td); d]; d];
    let mut cpow = vec![vec![RingElem::zero(desc); d]; d];
    #[allow(clippy::needless_range_loop)]
    for i in 0..d {
        cpow[i][i] = RingElem::one(desc);
    }
    for j in 0..=td {
        // add h_j(x) * cpow to mat
        let mut any = false;
        for i in 0..=(td - j) {
            if !h.get(i, j).is_zero() {
                any = true;
                break;
            }
        }
        if any {
            for r in 0..d {
                for c in 0..d {
                    if cpow[r][c].is_zero() {
                        continue;
                    }
                    for i in 0..=(td - j) {
                        let hij = h.get(i, j);
                        if hij.is_zero() {
                            continue;
                        }
                        let add = hij.mul(&cpow[r][c]);
                        mat[r][c].coeffs[i] = mat[r][c].coeffs[i].add(&add);
                    }
                }
            }
        }
        if j < td {
            cpow = mat_mul(desc, &cpow, &comp);
        }
    }
    // determinant by dynamic programming over column subsets
    let full: u32 = if d == 32 { u32::MAX } else { (1u32 << d) - 1 };
    let mut dp: Vec<Option<PowerSeries1>> = vec![None; (full as usize) + 1];
    let mut one = PowerSeries1::zero(desc, td);
    one.coeffs[0] = RingElem::one(desc);
    dp[0] = Some(one);
    for mask in 0..=full {
        let Some(cur) = dp[mask as usize].take() else {
            continue;
        };
        let r = mask.count_ones() as usize;
        if r == d {
            dp[mask as usize] = Some(cur);
            break;
        }
        for c in 0..d {
            if mask & (1 << c) != 0 {
                continue;
            }
            if mat[r][c].is_zero() {
                continue;
            }
            let higher = (mask >> (c + 1)).count_ones();
            let mut term = cur.mul(&mat[r][c]);
            if higher % 2 == 1 {
                term = term.neg();
            }
            let slot = (mask | (1 << c)) as usize;
            dp[slot] = Some(match dp[slot].take() {
                None => term,
                Some(prev) => prev.add(&term),
            });
        }
        if mask == 0 {
            dp[0] = None;
        }
    }
    dp[full as usize].take().unwrap_or_else(|| PowerSeries1::zero(desc, td))
}

/// Twist each coefficient of a series by a ring map.
pub fn twist_coeffs(f: &PowerSeries1, phi: &RingMap) -> PowerSeries1 {
    f.map_coeffs(phi)
}

/// Direct determinant of a small matrix over the ring (test oracle for the
/// companion norm's sign convention).
pub fn det_ring(desc: &Arc<RingDescriptor>, m: &[Vec<RingElem>]) -> RingElem {
    let n = m.len();
    if n == 0 {
        return RingElem::one(desc);
    }
    let mut acc = RingElem::zero(desc);
    let mut perm: Vec<usize> = (0..n).collect();
    permute(&mut perm, 0, &mut |p: &[usize], sign: i64| {
        let mut prod = RingElem::from_i64(desc, sign);
        for (r, &c) in p.iter().enumerate() {
            prod = prod.mul(&m[r][c]);
        }
        acc = acc.add(&prod);
    });
    acc
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize], i64)) {
    let n = p.len();
    if k == n {
        let mut sign = 1i64;
        let mut seen = vec![false; n];
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut len = 0;
            let mut c = s;
            while !seen[c] {
                seen[c] = true;
                c = p[c];
                len += 1;
            }
            if len % 2 == 0 {
                sign = -sign;
            }
        }
        f(p, sign);
        return;
    }
    for i in k..n {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::RingDescriptor;

    fn zmod(p: u64, prec: u32, _d: usize) -> Arc<RingDescriptor> {
        RingDescriptor::with_defaults(p, 1, 1, prec, 0).unwrap()
    }

    fn s1(desc: &Arc<RingDescriptor>, d: usize, coeffs: &[i64]) -> PowerSeries1 {
        let mut s = PowerSeries1::zero(desc, d);
        for (k, &c) in coeffs.iter().enumerate() {
            s.coeffs[k] = RingElem::from_i64(desc, c);
        }
        s
    }

    #[test]
    fn compose_identity_outer() {
        let d = zmod(2, 3, 4);
        let g = s1(&d, 4, &[0, 1, 1]); // t + t^2
        let f = PowerSeries1::identity(&d, 4);
        assert_eq!(f.compose(&g).unwrap(), g);
    }

    #[test]
    fn compose_square() {
        let d = zmod(5, 3, 3);
        let f = s1(&d, 3, &[0, 0, 1]); // t^2
        let g = s1(&d, 3, &[0, 1, 1]); // t + t^2
        let expect = s1(&d, 3, &[0, 0, 1, 2]); // t^2 + 2 t^3
        assert_eq!(f.compose(&g).unwrap(), expect);
    }

    #[test]
    fn compose_binomial_tower() {
        // f = g = (1+t)^3 - 1 over Z/27; f(g) = (1+t)^9 - 1 truncated
        let d = zmod(3, 3, 9);
        let f = s1(&d, 9, &[0, 3, 3, 1]);
        let got = f.compose(&f).unwrap();
        let mut expect = PowerSeries1::zero(&d, 9);
        let mut binom = 1i64;
        for k in 1..=9usize {
            binom = binom * (9 - k as i64 + 1) / k as i64;
            expect.coeffs[k] = RingElem::from_i64(&d, binom % 27);
        }
        assert_eq!(got, expect);
    }

    #[test]
    fn compose_rejects_nonzero_constant() {
        let d = zmod(2, 3, 3);
        let f = s1(&d, 3, &[0, 1]);
        let g = s1(&d, 3, &[1, 1]);
        assert!(matches!(f.compose(&g), Err(Error::NonzeroConstant)));
    }

    #[test]
    fn reversion_catalan_signs() {
        // reversion of t + t^2 is sum (-1)^{k+1} Catalan_{k-1} t^k
        let d = zmod(101, 1, 6);
        let f = s1(&d, 6, &[0, 1, 1]);
        let g = f.reversion().unwrap();
        let expect = s1(&d, 6, &[0, 1, -1, 2, -5, 14, -42]);
        assert_eq!(g, expect);
        assert_eq!(f.compose(&g).unwrap(), PowerSeries1::identity(&d, 6));
        assert_eq!(g.compose(&f).unwrap(), PowerSeries1::identity(&d, 6));
    }

    #[test]
    fn reversion_needs_unit_slope() {
        let d = zmod(2, 3, 4);
        let f = s1(&d, 4, &[0, 2]); // 2t over Z/8
        assert!(matches!(f.reversion(), Err(Error::NonUnitLinear)));
    }

    #[test]
    fn weierstrass_already_distinguished() {
        // f = 2t + t^2 over Z/8: g = t^2 + 2t, unit = 1
        let d = zmod(2, 3, 6);
        let f = s1(&d, 6, &[0, 2, 1]);
        let (g, unit) = weierstrass_prepare(&f).unwrap();
        assert_eq!(g.degree(), 2);
        assert_eq!(g.coeffs[0], RingElem::zero(&d));
        assert_eq!(g.coeffs[1], RingElem::from_i64(&d, 2));
        assert_eq!(unit, {
            let mut one = PowerSeries1::zero(&d, 6);
            one.coeffs[0] = RingElem::one(&d);
            one
        });
    }

    #[test]
    fn weierstrass_splits_unit_factor() {
        // f = (t^2 + 2t)(1 + t) = t^3 + 3t^2 + 2t over Z/8
        let d = zmod(2, 3, 6);
        let f = s1(&d, 6, &[0, 2, 3, 1]);
        let (g, unit) = weierstrass_prepare(&f).unwrap();
        assert_eq!(g.degree(), 2);
        assert_eq!(g.coeffs[1], RingElem::from_i64(&d, 2));
        assert_eq!(unit.coeffs[0], RingElem::one(&d));
        assert_eq!(unit.coeffs[1], RingElem::one(&d));
        assert_eq!(g.as_series(6).mul(&unit), f);
    }

    #[test]
    fn weierstrass_rejects_nilpotent_series() {
        let d = zmod(2, 3, 4);
        let f = s1(&d, 4, &[0, 2, 4]); // 2t + 4t^2 over Z/8
        assert!(matches!(
            weierstrass_prepare(&f),
            Err(Error::NoUnitCoefficient)
        ));
    }

    #[test]
    fn weierstrass_random_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let desc = RingDescriptor::with_defaults(2, 1, 2, 3, 2).unwrap();
        let td = 8;
        for _ in 0..40 {
            let d = rng.gen_range(1..4usize);
            let mut f = PowerSeries1::zero(&desc, td);
            for k in 0..=td {
                let c: i64 = rng.gen_range(0..8);
                let c = if k < d { c - c % 2 } else { c };
                let mut e = RingElem::from_i64(&desc, c);
                if rng.gen_bool(0.5) {
                    e = e.add(&RingElem::var(&desc, 0).mul_i64(rng.gen_range(0..8)));
                }
                f.coeffs[k] = e;
            }
            // make sure degree-d coefficient is a unit and lower ones are not
            f.coeffs[d] = RingElem::from_i64(&desc, 2 * rng.gen_range(0..4) + 1)
                .add(&RingElem::var(&desc, 0).mul_i64(rng.gen_range(0..8)));
            let (g, unit) = weierstrass_prepare(&f).unwrap();
            assert_eq!(g.degree(), d);
            assert_eq!(g.as_series(td).mul(&unit), f, "g*unit = f round trip");
        }
    }

    fn mult_law(desc: &Arc<RingDescriptor>, d: usize) -> PowerSeries2 {
        // x + y + xy
        let mut f = PowerSeries2::additive(desc, d);
        f.set(1, 1, RingElem::one(desc));
        f
    }

    #[test]
    fn companion_norm_trivial_divisor() {
        let d = zmod(2, 3, 4);
        let g = DistinguishedPoly::new(&d, vec![RingElem::zero(&d), RingElem::one(&d)]).unwrap();
        let h = mult_law(&d, 4);
        let got = companion_norm(&g, &h);
        assert_eq!(got, PowerSeries1::identity(&d, 4), "only root is 0");
    }

    #[test]
    fn companion_norm_order_two() {
        // g = t^2 + 2t over Z/8, h = x + y + xy: product over roots {0, -2}
        // is x(x - 2 - 2x + ... ) = -x^2 - 2x
        let d = zmod(2, 3, 4);
        let g = DistinguishedPoly::new(
            &d,
            vec![
                RingElem::zero(&d),
                RingElem::from_i64(&d, 2),
                RingElem::one(&d),
            ],
        )
        .unwrap();
        let h = mult_law(&d, 4);
        let got = companion_norm(&g, &h);
        let expect = s1(&d, 4, &[0, -2, -1]);
        assert_eq!(got, expect);
    }

    #[test]
    fn companion_norm_cyclotomic() {
        // g = t^3 + 3t^2 + 3t over Z/27, h = x + y + xy:
        // product over (zeta - 1) is (1+x)^3 - 1
        let d = zmod(3, 3, 6);
        let g = DistinguishedPoly::new(
            &d,
            vec![
                RingElem::zero(&d),
                RingElem::from_i64(&d, 3),
                RingElem::from_i64(&d, 3),
                RingElem::one(&d),
            ],
        )
        .unwrap();
        let h = mult_law(&d, 6);
        let got = companion_norm(&g, &h);
        let expect = s1(&d, 6, &[0, 3, 3, 1]);
        assert_eq!(got, expect);
    }

    #[test]
    fn companion_norm_of_y_matches_determinant() {
        let d = zmod(2, 3, 5);
        let g = DistinguishedPoly::new(
            &d,
            vec![
                RingElem::from_i64(&d, 2),
                RingElem::from_i64(&d, 6),
                RingElem::one(&d),
            ],
        )
        .unwrap();
        // h = y
        let mut h = PowerSeries2::zero(&d, 5);
        h.set(0, 1, RingElem::one(&d));
        let got = companion_norm(&g, &h);
        // determinant of the companion matrix itself, degree-0 in x
        let comp = vec![
            vec![RingElem::zero(&d), g.coeffs[0].neg()],
            vec![RingElem::one(&d), g.coeffs[1].neg()],
        ];
        let det = det_ring(&d, &comp);
        assert_eq!(got.coeffs[0], det);
        for k in 1..=5 {
            assert!(got.coeffs[k].is_zero());
        }
    }

    #[test]
    fn companion_norm_multiplicative() {
        let d = zmod(2, 3, 5);
        let g = DistinguishedPoly::new(
            &d,
            vec![
                RingElem::zero(&d),
                RingElem::from_i64(&d, 2),
                RingElem::one(&d),
            ],
        )
        .unwrap();
        let h1 = mult_law(&d, 5);
        let mut h2 = PowerSeries2::additive(&d, 5);
        h2.set(2, 0, RingElem::one(&d));
        h2.set(0, 1, RingElem::from_i64(&d, 3));
        let prod = h1.mul(&h2);
        let n1 = companion_norm(&g, &h1);
        let n2 = companion_norm(&g, &h2);
        let np = companion_norm(&g, &prod);
        assert_eq!(np, n1.mul(&n2));
    }

    #[test]
    fn twist_trivial_and_frobenius() {
        let dsc = RingDescriptor::with_defaults(2, 2, 2, 2, 2).unwrap();
        let w = RingElem::witt_gen(&dsc);
        let mut f = PowerSeries1::zero(&dsc, 3);
        f.coeffs[1] = w.clone();
        let id = RingMap::identity(&dsc);
        assert_eq!(twist_coeffs(&f, &id), f);
        let frob = RingMap::new(
            &dsc,
            &dsc,
            1,
            vec![RingElem::var(&dsc, 0)],
        )
        .unwrap();
        let g = twist_coeffs(&f, &frob);
        assert_eq!(g.coeffs[1], w.witt_frobenius(1));
    }
}
