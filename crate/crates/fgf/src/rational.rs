//! Exact rational staging for logarithm constructions.
//!
//! Functional-equation logarithms have denominators that are bounded powers
//! of p, so they cannot live in the modular coefficient ring directly. This
//! module carries them over Q[u_1..u_{n-1}] (truncated at the same u-degree)
//! and hands integral results back to the modular ring once every
//! denominator has cancelled. Scalars are kept as num / p^exp with a big
//! integer numerator; no gcd ever runs, the p-power is stripped lazily.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::ring::{Mono, RingDescriptor, RingElem};
use crate::series::Coeff;

/// An exact rational of the form num / p^exp.
#[derive(Clone, Debug)]
pub struct PFrac {
    pub p: u64,
    pub num: BigInt,
    pub exp: u32,
}

impl PFrac {
    fn from_int(p: u64, c: i64) -> PFrac {
        PFrac {
            p,
            num: BigInt::from(c),
            exp: 0,
        }
    }

    /// Strip common p-powers between numerator and denominator.
    fn normalize(&mut self) {
        if self.num.is_zero() {
            self.exp = 0;
            return;
        }
        let p = BigInt::from(self.p);
        while self.exp > 0 {
            let (q, r) = (&self.num / &p, &self.num % &p);
            if r.is_zero() {
                self.num = q;
                self.exp -= 1;
            } else {
                break;
            }
        }
    }

    fn add(&self, o: &PFrac) -> PFrac {
        let p = BigInt::from(self.p);
        let (hi, lo, hi_exp) = if self.exp >= o.exp {
            (self, o, self.exp)
        } else {
            (o, self, o.exp)
        };
        let scale = p.pow(hi.exp - lo.exp);
        let mut out = PFrac {
            p: self.p,
            num: &hi.num + &lo.num * scale,
            exp: hi_exp,
        };
        out.normalize();
        out
    }

    fn mul(&self, o: &PFrac) -> PFrac {
        let mut out = PFrac {
            p: self.p,
            num: &self.num * &o.num,
            exp: self.exp + o.exp,
        };
        if out.exp > 64 {
            out.normalize();
        }
        out
    }

    fn neg(&self) -> PFrac {
        PFrac {
            p: self.p,
            num: -self.num.clone(),
            exp: self.exp,
        }
    }

    fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    fn div_p(&self) -> PFrac {
        PFrac {
            p: self.p,
            num: self.num.clone(),
            exp: self.exp + 1,
        }
    }

    fn recip(&self) -> Option<PFrac> {
        // only +-p^k values are invertible in this representation
        let p = BigInt::from(self.p);
        let mut n = self.num.clone();
        let mut k = 0u32;
        let neg = n.is_negative();
        if neg {
            n = -n;
        }
        while (&n % &p).is_zero() && !n.is_zero() {
            n = &n / &p;
            k += 1;
        }
        if n != BigInt::from(1) {
            return None;
        }
        let mut num = p.pow(self.exp);
        if neg {
            num = -num;
        }
        Some(PFrac {
            p: self.p,
            num,
            exp: k,
        })
    }

    fn eq_frac(&self, o: &PFrac) -> bool {
        let p = BigInt::from(self.p);
        if self.exp >= o.exp {
            self.num == &o.num * p.pow(self.exp - o.exp)
        } else {
            &self.num * p.pow(o.exp - self.exp) == o.num
        }
    }

    pub fn is_integral(&mut self) -> bool {
        self.normalize();
        self.exp == 0
    }
}

impl PartialEq for PFrac {
    fn eq(&self, other: &Self) -> bool {
        self.eq_frac(other)
    }
}

/// A u-polynomial with exact p-power-denominator coefficients, truncated at
/// the descriptor's u-degree bound.
#[derive(Clone, PartialEq, Debug)]
pub struct QPoly {
    pub p: u64,
    pub nvars: usize,
    pub trunc_u: usize,
    pub terms: BTreeMap<Mono, PFrac>,
}

impl QPoly {
    pub fn zero(p: u64, nvars: usize, trunc_u: usize) -> Self {
        QPoly {
            p,
            nvars,
            trunc_u,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_int(p: u64, nvars: usize, trunc_u: usize, c: i64) -> Self {
        let mut q = Self::zero(p, nvars, trunc_u);
        if c != 0 {
            q.terms.insert(Mono::one(nvars), PFrac::from_int(p, c));
        }
        q
    }

    pub fn var(p: u64, nvars: usize, trunc_u: usize, i: usize) -> Self {
        let mut q = Self::zero(p, nvars, trunc_u);
        if trunc_u >= 1 {
            q.terms.insert(Mono::var(nvars, i), PFrac::from_int(p, 1));
        }
        q
    }

    fn insert(&mut self, m: Mono, c: PFrac) {
        if c.is_zero() || m.total() > self.trunc_u {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                let s = e.get().add(&c);
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    /// Divide every coefficient by p.
    pub fn div_p(&self) -> Self {
        QPoly {
            p: self.p,
            nvars: self.nvars,
            trunc_u: self.trunc_u,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c.div_p()))
                .collect(),
        }
    }

    /// Substitute u_j -> u_j^{power} for every variable.
    pub fn scale_exponents(&self, power: u16) -> Self {
        let mut out = Self::zero(self.p, self.nvars, self.trunc_u);
        for (m, c) in &self.terms {
            let scaled = Mono(m.0.iter().map(|&e| e * power).collect());
            out.insert(scaled, c.clone());
        }
        out
    }

    /// True when every coefficient is p-integral.
    pub fn is_integral(&self) -> bool {
        self.terms.values().all(|c| c.clone().is_integral())
    }

    /// Reduce into the modular ring; errors if any denominator survives.
    pub fn to_ring_elem(&self, desc: &Arc<RingDescriptor>) -> Result<RingElem> {
        assert_eq!(self.nvars, desc.num_vars());
        let modulus = BigInt::from(desc.modulus());
        let mut out = RingElem::zero(desc);
        for (m, c) in &self.terms {
            let mut c = c.clone();
            if !c.is_integral() {
                return Err(Error::IntegralityFailure(format!(
                    "coefficient {:?}/p^{} of a staged series is not p-integral",
                    c.num, c.exp
                )));
            }
            let mut r = &c.num % &modulus;
            if r.is_negative() {
                r += &modulus;
            }
            let digits = r.to_u64_digits().1;
            let val = digits.first().copied().unwrap_or(0);
            out.insert_term(m.clone(), desc.w_from_u64(val));
        }
        Ok(out)
    }
}

impl Coeff for QPoly {
    fn zero_like(&self) -> Self {
        Self::zero(self.p, self.nvars, self.trunc_u)
    }
    fn one_like(&self) -> Self {
        Self::from_int(self.p, self.nvars, self.trunc_u, 1)
    }
    fn add_c(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.insert(m.clone(), c.clone());
        }
        out
    }
    fn sub_c(&self, o: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &o.terms {
            out.insert(m.clone(), c.neg());
        }
        out
    }
    fn neg_c(&self) -> Self {
        QPoly {
            p: self.p,
            nvars: self.nvars,
            trunc_u: self.trunc_u,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c.neg()))
                .collect(),
        }
    }
    fn mul_c(&self, o: &Self) -> Self {
        let mut out = Self::zero(self.p, self.nvars, self.trunc_u);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &o.terms {
                if ma.total() + mb.total() > self.trunc_u {
                    continue;
                }
                out.insert(ma.mul(mb), ca.mul(cb));
            }
        }
        out
    }
    fn is_zero_c(&self) -> bool {
        self.terms.is_empty()
    }
    fn inv_c(&self) -> Option<Self> {
        // only constant polynomials need inversion during staging
        if self.terms.len() != 1 {
            return None;
        }
        let (m, c) = self.terms.iter().next()?;
        if m.total() != 0 {
            return None;
        }
        let mut out = Self::zero(self.p, self.nvars, self.trunc_u);
        out.terms.insert(m.clone(), c.recip()?);
        Some(out)
    }
    fn scale_int(&self, k: i64) -> Self {
        if k == 0 {
            return self.zero_like();
        }
        let kf = PFrac::from_int(self.p, k);
        QPoly {
            p: self.p,
            nvars: self.nvars,
            trunc_u: self.trunc_u,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c.mul(&kf)))
                .collect(),
        }
    }
}

/// Coefficients of the functional-equation logarithm
/// `f(t) = t + sum_{i=1}^{height} (v_i / p) f^{(p^i)}(t^{p^i})`
/// with `v_i = u_i` for `i < height` and `v_height = 1`, where the twist
/// raises each u-variable to its p^i-th power. Honda staging is the
/// `nvars = 0` case.
pub fn functional_equation_log(
    p: u64,
    height: usize,
    nvars: usize,
    trunc_u: usize,
    trunc_t: usize,
) -> Result<Vec<QPoly>> {
    let zero = QPoly::zero(p, nvars, trunc_u);
    let mut f: Vec<QPoly> = vec![zero.clone(); trunc_t + 1];
    if trunc_t >= 1 {
        f[1] = QPoly::from_int(p, nvars, trunc_u, 1);
    }
    // v_i / p as staged scalars
    let mut weights: Vec<QPoly> = Vec::new();
    for i in 1..=height {
        let v = if i < height {
            if i - 1 < nvars {
                QPoly::var(p, nvars, trunc_u, i - 1)
            } else {
                zero.clone()
            }
        } else {
            QPoly::from_int(p, nvars, trunc_u, 1)
        };
        weights.push(v.div_p());
    }
    for e in 2..=trunc_t {
        let mut acc = zero.clone();
        let mut q = p as usize;
        for i in 1..=height {
            if q > e {
                break;
            }
            if e % q == 0 {
                let twisted = f[e / q].scale_exponents(
                    u16::try_from(q).map_err(|_| {
                        Error::TruncationTooSmall("p^i exceeds exponent range".into())
                    })?,
                );
                acc = acc.add_c(&weights[i - 1].mul_c(&twisted));
            }
            q = q
                .checked_mul(p as usize)
                .ok_or_else(|| Error::TruncationTooSmall("p^i overflow".into()))?;
        }
        f[e] = acc;
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frac(p: u64, num: i64, exp: u32) -> PFrac {
        PFrac {
            p,
            num: BigInt::from(num),
            exp,
        }
    }

    #[test]
    fn honda_log_is_geometric_in_p_powers() {
        // height 1: f = t + t^p/p + t^{p^2}/p^2 + ...
        let f = functional_equation_log(2, 1, 0, 0, 8).unwrap();
        assert_eq!(f[1].terms[&Mono(vec![])], frac(2, 1, 0));
        assert_eq!(f[2].terms[&Mono(vec![])], frac(2, 1, 1));
        assert_eq!(f[4].terms[&Mono(vec![])], frac(2, 1, 2));
        assert_eq!(f[8].terms[&Mono(vec![])], frac(2, 1, 3));
        assert!(f[3].is_zero_c() && f[5].is_zero_c() && f[6].is_zero_c() && f[7].is_zero_c());
    }

    #[test]
    fn height_two_log_mixes_u_weights() {
        // f2 = u1/2; f4 = (u1/2)(u1^2/2) + 1/2
        let f = functional_equation_log(2, 2, 1, 5, 4).unwrap();
        assert_eq!(f[2].terms[&Mono(vec![1])], frac(2, 1, 1));
        assert_eq!(f[4].terms[&Mono(vec![0])], frac(2, 1, 1));
        assert_eq!(f[4].terms[&Mono(vec![3])], frac(2, 1, 2));
    }

    #[test]
    fn pfrac_arithmetic_normalizes() {
        let a = frac(2, 6, 1); // 3
        let b = frac(2, 1, 1); // 1/2
        let s = a.add(&b); // 7/2
        assert_eq!(s, frac(2, 7, 1));
        let m = a.mul(&b); // 3/2
        assert_eq!(m, frac(2, 6, 2));
        assert_eq!(m, frac(2, 3, 1));
        assert!(frac(2, 4, 2).clone().is_integral());
        assert!(!frac(2, 3, 1).clone().is_integral());
    }
}
