//! Exact arithmetic in the truncated base ring `W(F_{p^m})[[u_1..u_{n-1}]]`
//! modulo `p^N` and u-total-degree `> M`.
//!
//! Witt vectors over `F_{p^m}` are represented as `(Z/p^N)[w]/(witt_poly)`
//! where `witt_poly` is a fixed monic integer lift of an irreducible
//! polynomial over `F_p`. The canonical Frobenius lift is the Hensel-lifted
//! root swap `w -> (root congruent to w^p mod p)` and is cached per
//! descriptor.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

/// Parameters of the coefficient ring, shared by every value computed over it.
#[derive(Debug)]
pub struct RingDescriptor {
    /// Residue characteristic.
    pub p: u64,
    /// Residue field degree: `k = F_{p^m}`.
    pub m: usize,
    /// Monic integer polynomial of degree `m`, irreducible mod `p`,
    /// lowest coefficient first.
    pub witt_poly: Vec<i64>,
    /// Height; the ring has `n - 1` deformation variables.
    pub n: usize,
    /// Work modulo `p^prec_p`.
    pub prec_p: u32,
    /// Discard u-monomials of total degree `> trunc_u`.
    pub trunc_u: usize,

    modulus: u64,
    // w^{m+k} reduced mod witt_poly, for k = 0..m-1
    red_table: Vec<Vec<u64>>,
    frob_root: OnceLock<Witt>,
    residue: OnceLock<Arc<RingDescriptor>>,
}

impl PartialEq for RingDescriptor {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p
            && self.m == other.m
            && self.witt_poly == other.witt_poly
            && self.n == other.n
            && self.prec_p == other.prec_p
            && self.trunc_u == other.trunc_u
    }
}
impl Eq for RingDescriptor {}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Monic integer lifts of irreducible polynomials over `F_p` (the usual
/// Conway choices for small degrees), lowest coefficient first.
pub fn default_witt_poly(p: u64, m: usize) -> Option<Vec<i64>> {
    match (p, m) {
        (_, 1) => Some(vec![0, 1]),
        (2, 2) => Some(vec![1, 1, 1]),
        (2, 3) => Some(vec![1, 1, 0, 1]),
        (2, 4) => Some(vec![1, 1, 0, 0, 1]),
        (3, 2) => Some(vec![2, 2, 1]),
        (3, 3) => Some(vec![1, 2, 0, 1]),
        (5, 2) => Some(vec![2, 4, 1]),
        (5, 3) => Some(vec![3, 3, 0, 1]),
        (7, 2) => Some(vec![3, 6, 1]),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// F_p[x] helpers, used for the irreducibility check of witt_poly.
// ---------------------------------------------------------------------------

fn fp_trim(a: &mut Vec<u64>) {
    while a.last() == Some(&0) {
        a.pop();
    }
}

fn fp_rem(mut a: Vec<u64>, b: &[u64], p: u64) -> Vec<u64> {
    let db = b.len() - 1;
    let lead_inv = mod_inv(b[db], p);
    while a.len() > db {
        let da = a.len() - 1;
        let c = a[da] % p;
        if c != 0 {
            let f = c * lead_inv % p;
            for i in 0..=db {
                let idx = da - db + i;
                a[idx] = (a[idx] + p - f * b[i] % p) % p;
            }
        }
        a.pop();
        fp_trim(&mut a);
        if a.is_empty() {
            break;
        }
    }
    a
}

fn fp_gcd(mut a: Vec<u64>, mut b: Vec<u64>, p: u64) -> Vec<u64> {
    fp_trim(&mut a);
    fp_trim(&mut b);
    while !b.is_empty() {
        let r = fp_rem(a, &b, p);
        a = b;
        b = r;
    }
    a
}

fn fp_mulmod(a: &[u64], b: &[u64], modp: &[u64], p: u64) -> Vec<u64> {
    let mut prod = vec![0u64; a.len() + b.len()];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            prod[i + j] = (prod[i + j] + x * y) % p;
        }
    }
    fp_trim(&mut prod);
    if prod.is_empty() {
        return prod;
    }
    fp_rem(prod, modp, p)
}

fn mod_inv(a: u64, p: u64) -> u64 {
    // p prime, a != 0 mod p
    mod_pow(a % p, p - 2, p)
}

fn mod_pow(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            acc = (acc as u128 * b as u128 % p as u128) as u64;
        }
        b = (b as u128 * b as u128 % p as u128) as u64;
        e >>= 1;
    }
    acc
}

fn fp_irreducible(poly: &[u64], p: u64) -> bool {
    let m = poly.len() - 1;
    if m == 1 {
        return true;
    }
    // x^{p^k} mod poly, by repeated p-th powering of x
    let mut xp: Vec<u64> = vec![0, 1]; // x
    for k in 1..=m {
        // raise to p-th power
        let mut acc: Vec<u64> = vec![1];
        let mut base = xp.clone();
        let mut e = p;
        while e > 0 {
            if e & 1 == 1 {
                acc = fp_mulmod(&acc, &base, poly, p);
            }
            base = fp_mulmod(&base, &base, poly, p);
            e >>= 1;
        }
        xp = acc;
        // gcd(x^{p^k} - x, poly) must be 1 for k < m
        let mut diff = xp.clone();
        while diff.len() < 2 {
            diff.push(0);
        }
        diff[1] = (diff[1] + p - 1) % p;
        fp_trim(&mut diff);
        if k < m {
            let g = fp_gcd(poly.to_vec(), diff.clone(), p);
            if g.len() != 1 {
                return false;
            }
        } else {
            // x^{p^m} must equal x
            if !diff.is_empty() {
                return false;
            }
        }
    }
    true
}

impl RingDescriptor {
    pub fn new(
        p: u64,
        m: usize,
        witt_poly: Vec<i64>,
        n: usize,
        prec_p: u32,
        trunc_u: usize,
    ) -> Result<Arc<RingDescriptor>> {
        if !is_prime(p) {
            return Err(Error::BadDescriptor(format!("p = {p} is not prime")));
        }
        if m == 0 || n == 0 || prec_p == 0 {
            return Err(Error::BadDescriptor(
                "m, n and prec_p must all be at least 1".into(),
            ));
        }
        if witt_poly.len() != m + 1 || *witt_poly.last().unwrap() != 1 {
            return Err(Error::BadDescriptor(format!(
                "witt_poly must be monic of degree m = {m}"
            )));
        }
        let modulus = p
            .checked_pow(prec_p)
            .filter(|&q| q <= (1 << 62))
            .ok_or_else(|| Error::BadDescriptor(format!("p^{prec_p} too large")))?;
        let red: Vec<u64> = witt_poly
            .iter()
            .map(|&c| c.rem_euclid(p as i64) as u64)
            .collect();
        if !fp_irreducible(&red, p) {
            return Err(Error::BadDescriptor(
                "witt_poly is not irreducible mod p".into(),
            ));
        }

        // w^m = -sum_{i<m} witt_poly[i] w^i; extend to w^{m+k} by multiplying by w.
        let neg = |c: i64| ((-c).rem_euclid(modulus as i64)) as u64;
        let mut red_table: Vec<Vec<u64>> = Vec::with_capacity(m.max(1));
        let base: Vec<u64> = (0..m).map(|i| neg(witt_poly[i])).collect();
        red_table.push(base);
        for k in 1..m {
            let prev = red_table[k - 1].clone();
            // multiply by w: shift, then reduce the overflow coefficient
            let top = prev[m - 1];
            let mut cur = vec![0u64; m];
            for i in 1..m {
                cur[i] = prev[i - 1];
            }
            for i in 0..m {
                cur[i] = (cur[i] as u128 + top as u128 * red_table[0][i] as u128
                    % modulus as u128) as u64
                    % modulus;
            }
            red_table.push(cur);
        }

        Ok(Arc::new(RingDescriptor {
            p,
            m,
            witt_poly,
            n,
            prec_p,
            trunc_u,
            modulus,
            red_table,
            frob_root: OnceLock::new(),
            residue: OnceLock::new(),
        }))
    }

    pub fn with_defaults(p: u64, m: usize, n: usize, prec_p: u32, trunc_u: usize) -> Result<Arc<Self>> {
        let poly = default_witt_poly(p, m).ok_or_else(|| {
            Error::BadDescriptor(format!(
                "no built-in witt_poly for p = {p}, m = {m}; supply one explicitly"
            ))
        })?;
        Self::new(p, m, poly, n, prec_p, trunc_u)
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn num_vars(&self) -> usize {
        self.n - 1
    }

    /// The residue field `F_{p^m}` as a prec-1 descriptor with no variables.
    pub fn residue_descriptor(self: &Arc<Self>) -> Arc<RingDescriptor> {
        self.residue
            .get_or_init(|| {
                RingDescriptor::new(self.p, self.m, self.witt_poly.clone(), 1, 1, 0)
                    .expect("residue descriptor of a valid descriptor is valid")
            })
            .clone()
    }

    pub fn same_ring(&self, other: &Self) -> bool {
        self == other
    }

    /// Largest s with I^s != 0 at this truncation is prec_p + trunc_u - 1;
    /// used as the cap for filtration iterations.
    pub fn filtration_cap(&self) -> usize {
        self.prec_p as usize + self.trunc_u
    }

    // ---------------------------------------------------------------------
    // Witt scalar arithmetic: elements of (Z/p^N)[w]/(witt_poly).
    // ---------------------------------------------------------------------

    pub fn w_zero(&self) -> Witt {
        Witt(vec![0; self.m])
    }

    pub fn w_from_u64(&self, c: u64) -> Witt {
        let mut v = vec![0; self.m];
        v[0] = c % self.modulus;
        Witt(v)
    }

    pub fn w_from_i64(&self, c: i64) -> Witt {
        let mut v = vec![0; self.m];
        v[0] = c.rem_euclid(self.modulus as i64) as u64;
        Witt(v)
    }

    pub fn w_gen(&self) -> Witt {
        let mut v = vec![0; self.m];
        if self.m > 1 {
            v[1] = 1;
        }
        Witt(v)
    }

    pub fn w_is_zero(&self, a: &Witt) -> bool {
        a.0.iter().all(|&c| c == 0)
    }

    pub fn w_add(&self, a: &Witt, b: &Witt) -> Witt {
        Witt(
            a.0.iter()
                .zip(&b.0)
                .map(|(&x, &y)| (x + y) % self.modulus)
                .collect(),
        )
    }

    pub fn w_sub(&self, a: &Witt, b: &Witt) -> Witt {
        Witt(
            a.0.iter()
                .zip(&b.0)
                .map(|(&x, &y)| (x + self.modulus - y) % self.modulus)
                .collect(),
        )
    }

    pub fn w_neg(&self, a: &Witt) -> Witt {
        Witt(a.0.iter().map(|&x| (self.modulus - x) % self.modulus).collect())
    }

    pub fn w_mul(&self, a: &Witt, b: &Witt) -> Witt {
        let m = self.m;
        let q = self.modulus as u128;
        let mut prod = vec![0u128; 2 * m - 1];
        for i in 0..m {
            if a.0[i] == 0 {
                continue;
            }
            for j in 0..m {
                prod[i + j] = (prod[i + j] + a.0[i] as u128 * b.0[j] as u128) % q;
            }
        }
        let mut out = vec![0u64; m];
        for i in 0..m {
            out[i] = prod[i] as u64;
        }
        for k in 0..m.saturating_sub(1) {
            let c = prod[m + k];
            if c == 0 {
                continue;
            }
            for i in 0..m {
                out[i] = ((out[i] as u128 + c * self.red_table[k][i] as u128) % q) as u64;
            }
        }
        Witt(out)
    }

    pub fn w_pow(&self, a: &Witt, mut e: u64) -> Witt {
        let mut acc = self.w_from_u64(1);
        let mut base = a.clone();
        while e > 0 {
            if e & 1 == 1 {
                acc = self.w_mul(&acc, &base);
            }
            base = self.w_mul(&base, &base);
            e >>= 1;
        }
        acc
    }

    pub fn w_val(&self, a: &Witt) -> u32 {
        let mut best = self.prec_p;
        for &c in &a.0 {
            if c == 0 {
                continue;
            }
            let mut v = 0u32;
            let mut x = c;
            while x % self.p == 0 {
                v += 1;
                x /= self.p;
            }
            best = best.min(v);
        }
        best
    }

    pub fn w_is_unit(&self, a: &Witt) -> bool {
        a.0.iter().any(|&c| c % self.p != 0)
    }

    /// Exact division by p^k; None if some coordinate is not divisible.
    /// The quotient is the canonical integer quotient, well defined mod
    /// p^{N-k}.
    pub fn w_div_p(&self, a: &Witt, k: u32) -> Option<Witt> {
        let pk = self.p.checked_pow(k)?;
        let mut out = vec![0u64; self.m];
        for (i, &c) in a.0.iter().enumerate() {
            if c % pk != 0 {
                return None;
            }
            out[i] = c / pk;
        }
        Some(Witt(out))
    }

    pub fn w_reduce_mod_p(&self, a: &Witt) -> Witt {
        Witt(a.0.iter().map(|&c| c % self.p).collect())
    }

    /// Inverse of a unit: mod-p inverse by Fermat in F_{p^m}, then Newton.
    pub fn w_inv(&self, a: &Witt) -> Option<Witt> {
        if !self.w_is_unit(a) {
            return None;
        }
        // inverse mod p: a^(p^m - 2) computed with mod-p Witt arithmetic
        let abar = self.w_reduce_mod_p(a);
        let mut inv = {
            // exponent p^m - 2 by square and multiply over this same ring,
            // reducing mod p after every step to stay in the residue field
            let mut e_hi = 1u128;
            for _ in 0..self.m {
                e_hi *= self.p as u128;
            }
            let mut e = e_hi - 2;
            let mut acc = self.w_from_u64(1);
            let mut base = abar.clone();
            while e > 0 {
                if e & 1 == 1 {
                    acc = self.w_reduce_mod_p(&self.w_mul(&acc, &base));
                }
                base = self.w_reduce_mod_p(&self.w_mul(&base, &base));
                e >>= 1;
            }
            acc
        };
        // Newton: x <- x(2 - a x), doubling p-adic precision
        let two = self.w_from_u64(2);
        for _ in 0..(64 - (self.prec_p as u64).leading_zeros() + 2) {
            let t = self.w_sub(&two, &self.w_mul(a, &inv));
            inv = self.w_mul(&inv, &t);
        }
        debug_assert!(self.w_mul(a, &inv) == self.w_from_u64(1));
        Some(inv)
    }

    /// Image of the generator w under the canonical Frobenius lift: the
    /// unique root of witt_poly congruent to w^p mod p, by Hensel/Newton.
    fn frobenius_root(&self) -> &Witt {
        self.frob_root.get_or_init(|| {
            if self.m == 1 {
                return self.w_zero();
            }
            let eval = |x: &Witt| -> Witt {
                let mut acc = self.w_from_i64(self.witt_poly[self.m]);
                for i in (0..self.m).rev() {
                    acc = self.w_add(&self.w_mul(&acc, x), &self.w_from_i64(self.witt_poly[i]));
                }
                acc
            };
            let eval_deriv = |x: &Witt| -> Witt {
                let mut acc = self.w_from_i64(self.m as i64 * self.witt_poly[self.m]);
                for i in (1..self.m).rev() {
                    acc = self.w_add(
                        &self.w_mul(&acc, x),
                        &self.w_from_i64(i as i64 * self.witt_poly[i]),
                    );
                }
                acc
            };
            let mut r = self.w_pow(&self.w_gen(), self.p);
            for _ in 0..(64 - (self.prec_p as u64).leading_zeros() + 2) {
                let f = eval(&r);
                if self.w_is_zero(&f) {
                    break;
                }
                let d = eval_deriv(&r);
                let dinv = self.w_inv(&d).expect("witt_poly is separable mod p");
                r = self.w_sub(&r, &self.w_mul(&f, &dinv));
            }
            assert!(
                self.w_is_zero(&eval(&r)),
                "Hensel iteration for the Frobenius root did not converge"
            );
            r
        })
    }

    /// Canonical lift of the p^j-power Frobenius on Witt scalars.
    pub fn w_frobenius(&self, a: &Witt, j: usize) -> Witt {
        let j = j % self.m;
        if j == 0 {
            return a.clone();
        }
        let mut img_w = self.frobenius_root().clone();
        for _ in 1..j {
            img_w = self.w_apply_gen_image(&img_w, self.frobenius_root());
        }
        self.w_apply_gen_image(a, &img_w)
    }

    /// Evaluate the polynomial a(w) at w = img (a ring endomorphism fixing Z/p^N).
    fn w_apply_gen_image(&self, a: &Witt, img: &Witt) -> Witt {
        let mut acc = self.w_zero();
        for i in (0..self.m).rev() {
            acc = self.w_mul(&acc, img);
            let mut t = self.w_zero();
            t.0[0] = a.0[i];
            acc = self.w_add(&acc, &t);
        }
        acc
    }
}

/// A Witt scalar: coefficients of 1, w, .., w^{m-1}, each reduced mod p^N.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Witt(pub Vec<u64>);

// ---------------------------------------------------------------------------
// Monomials in the deformation variables.
// ---------------------------------------------------------------------------

/// Exponent vector of a u-monomial, ordered graded-lexicographically.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Mono(pub Vec<u16>);

impl Mono {
    pub fn one(nvars: usize) -> Mono {
        Mono(vec![0; nvars])
    }

    pub fn var(nvars: usize, i: usize) -> Mono {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Mono(e)
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn mul(&self, other: &Mono) -> Mono {
        Mono(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| a + b)
                .collect(),
        )
    }
}

impl Ord for Mono {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total()
            .cmp(&other.total())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Mono {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// ---------------------------------------------------------------------------
// Ring elements.
// ---------------------------------------------------------------------------

/// An element of the truncated ring, in canonical form: no stored monomial
/// exceeds trunc_u and no stored scalar is zero.
#[derive(Clone, Debug)]
pub struct RingElem {
    pub desc: Arc<RingDescriptor>,
    pub terms: BTreeMap<Mono, Witt>,
}

impl PartialEq for RingElem {
    fn eq(&self, other: &Self) -> bool {
        *self.desc == *other.desc && self.terms == other.terms
    }
}
impl Eq for RingElem {}

impl RingElem {
    pub fn zero(desc: &Arc<RingDescriptor>) -> RingElem {
        RingElem {
            desc: desc.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn one(desc: &Arc<RingDescriptor>) -> RingElem {
        RingElem::from_i64(desc, 1)
    }

    pub fn from_i64(desc: &Arc<RingDescriptor>, c: i64) -> RingElem {
        let w = desc.w_from_i64(c);
        let mut terms = BTreeMap::new();
        if !desc.w_is_zero(&w) {
            terms.insert(Mono::one(desc.num_vars()), w);
        }
        RingElem {
            desc: desc.clone(),
            terms,
        }
    }

    pub fn from_witt(desc: &Arc<RingDescriptor>, w: Witt) -> RingElem {
        let mut terms = BTreeMap::new();
        if !desc.w_is_zero(&w) {
            terms.insert(Mono::one(desc.num_vars()), w);
        }
        RingElem {
            desc: desc.clone(),
            terms,
        }
    }

    /// The generator w of the Witt ring, as a ring element.
    pub fn witt_gen(desc: &Arc<RingDescriptor>) -> RingElem {
        RingElem::from_witt(desc, desc.w_gen())
    }

    /// The deformation variable u_{i+1} (0-indexed).
    pub fn var(desc: &Arc<RingDescriptor>, i: usize) -> RingElem {
        assert!(i < desc.num_vars(), "variable index out of range");
        let mut terms = BTreeMap::new();
        if desc.trunc_u >= 1 {
            terms.insert(Mono::var(desc.num_vars(), i), desc.w_from_u64(1));
        }
        RingElem {
            desc: desc.clone(),
            terms,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn insert_term(&mut self, mono: Mono, w: Witt) {
        if mono.total() > self.desc.trunc_u || self.desc.w_is_zero(&w) {
            return;
        }
        let desc = self.desc.clone();
        match self.terms.entry(mono) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(w);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = desc.w_add(e.get(), &w);
                if desc.w_is_zero(&s) {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &RingElem) -> RingElem {
        self.check_same(other);
        let mut out = self.clone();
        for (m, w) in &other.terms {
            out.insert_term(m.clone(), w.clone());
        }
        out
    }

    pub fn sub(&self, other: &RingElem) -> RingElem {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> RingElem {
        RingElem {
            desc: self.desc.clone(),
            terms: self
                .terms
                .iter()
                .map(|(m, w)| (m.clone(), self.desc.w_neg(w)))
                .collect(),
        }
    }

    pub fn mul(&self, other: &RingElem) -> RingElem {
        self.check_same(other);
        let mut out = RingElem::zero(&self.desc);
        for (ma, wa) in &self.terms {
            let da = ma.total();
            for (mb, wb) in &other.terms {
                if da + mb.total() > self.desc.trunc_u {
                    continue;
                }
                out.insert_term(ma.mul(mb), self.desc.w_mul(wa, wb));
            }
        }
        out
    }

    pub fn scale(&self, w: &Witt) -> RingElem {
        if self.desc.w_is_zero(w) {
            return RingElem::zero(&self.desc);
        }
        let mut out = RingElem::zero(&self.desc);
        for (m, a) in &self.terms {
            out.insert_term(m.clone(), self.desc.w_mul(a, w));
        }
        out
    }

    pub fn mul_i64(&self, c: i64) -> RingElem {
        self.scale(&self.desc.w_from_i64(c))
    }

    pub fn pow(&self, e: usize) -> RingElem {
        let mut acc = RingElem::one(&self.desc);
        for _ in 0..e {
            acc = acc.mul(self);
        }
        acc
    }

    fn check_same(&self, other: &RingElem) {
        assert!(
            *self.desc == *other.desc,
            "descriptor mismatch between ring elements"
        );
    }

    /// Constant-monomial scalar (zero scalar if absent).
    pub fn constant_scalar(&self) -> Witt {
        self.terms
            .get(&Mono::one(self.desc.num_vars()))
            .cloned()
            .unwrap_or_else(|| self.desc.w_zero())
    }

    /// Image in the residue field F_{p^m}: set p = 0 and all u_i = 0.
    pub fn residue(&self) -> Witt {
        self.desc.w_reduce_mod_p(&self.constant_scalar())
    }

    pub fn is_unit(&self) -> bool {
        self.desc.w_is_unit(&self.constant_scalar())
    }

    /// Lies in the maximal ideal (p, u_1..u_{n-1})?
    pub fn in_maximal_ideal(&self) -> bool {
        !self.is_unit()
    }

    /// Largest r with self in I^r (capped at filtration_cap for zero).
    pub fn i_order(&self) -> usize {
        let cap = self.desc.filtration_cap();
        let mut best = cap;
        for (m, w) in &self.terms {
            let o = m.total() + self.desc.w_val(w) as usize;
            best = best.min(o);
        }
        best
    }

    /// Multiplicative inverse of a unit. The constant scalar c is a Witt
    /// unit, and a c^{-1} = 1 + v with v supported on positive u-degrees,
    /// so v is nilpotent at this truncation.
    pub fn inverse(&self) -> Option<RingElem> {
        let c = self.constant_scalar();
        let cinv = self.desc.w_inv(&c)?;
        let scaled = self.scale(&cinv);
        let v = scaled.sub(&RingElem::one(&self.desc));
        let mut acc = RingElem::one(&self.desc);
        let mut pw = RingElem::one(&self.desc);
        for _ in 0..self.desc.trunc_u {
            pw = pw.mul(&v).neg();
            if pw.is_zero() {
                break;
            }
            acc = acc.add(&pw);
        }
        Some(acc.scale(&cinv))
    }

    /// Apply the canonical Frobenius lift sigma^j to every Witt scalar;
    /// u-variables are fixed.
    pub fn witt_frobenius(&self, j: usize) -> RingElem {
        RingElem {
            desc: self.desc.clone(),
            terms: self
                .terms
                .iter()
                .map(|(m, w)| (m.clone(), self.desc.w_frobenius(w, j)))
                .collect(),
        }
    }

    /// Formal partial derivative with respect to u_i.
    pub fn d_du(&self, i: usize) -> RingElem {
        let mut out = RingElem::zero(&self.desc);
        for (m, w) in &self.terms {
            let e = m.0[i];
            if e == 0 {
                continue;
            }
            let mut lower = m.clone();
            lower.0[i] -= 1;
            out.insert_term(lower, self.desc.w_mul(w, &self.desc.w_from_u64(e as u64)));
        }
        out
    }

    /// Graded component in I^s/I^{s+1} at the basis element p^a u^e:
    /// the coefficient of u^e divided exactly by p^a, reduced mod p.
    /// None when the coefficient is not divisible by p^a.
    pub fn graded_component(&self, a: u32, e: &Mono) -> Option<Witt> {
        match self.terms.get(e) {
            None => Some(self.desc.w_zero()),
            Some(w) => {
                let q = self.desc.w_div_p(w, a)?;
                Some(self.desc.w_reduce_mod_p(&q))
            }
        }
    }

    /// p^a u^e times the canonical lift of a residue scalar.
    pub fn from_graded(desc: &Arc<RingDescriptor>, a: u32, e: &Mono, kappa: &Witt) -> RingElem {
        let pa = desc.w_from_u64(desc.p.pow(a));
        let mut out = RingElem::zero(desc);
        out.insert_term(e.clone(), desc.w_mul(kappa, &pa));
        out
    }

    /// Map into another descriptor with the same Witt data (and enough room),
    /// e.g. the residue descriptor. Only constants survive when the target
    /// has fewer variables only if the element is constant.
    pub fn to_residue_field(&self) -> RingElem {
        let rdesc = self.desc.residue_descriptor();
        let r = self.residue();
        let mut terms = BTreeMap::new();
        if !rdesc.w_is_zero(&r) {
            terms.insert(Mono::one(0), Witt(r.0));
        }
        RingElem { desc: rdesc, terms }
    }
}

impl fmt::Display for RingElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, w) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let coeffs: Vec<String> = w.0.iter().map(|c| c.to_string()).collect();
            if self.desc.m == 1 {
                write!(f, "{}", coeffs[0])?;
            } else {
                write!(f, "({})", coeffs.join(",w*"))?;
            }
            for (i, &e) in m.0.iter().enumerate() {
                if e == 1 {
                    write!(f, "*u{}", i + 1)?;
                } else if e > 1 {
                    write!(f, "*u{}^{}", i + 1, e)?;
                }
            }
        }
        Ok(())
    }
}

/// Enumerate the monomial basis p^a u^e of I^s/I^{s+1} at this truncation.
pub fn graded_basis(desc: &RingDescriptor, s: usize) -> Vec<(u32, Mono)> {
    let mut out = Vec::new();
    let nvars = desc.num_vars();
    let mut exps = vec![0u16; nvars];
    // enumerate u-monomials of total degree b <= min(s, trunc_u)
    fn rec(
        exps: &mut Vec<u16>,
        pos: usize,
        remaining: usize,
        total_target: usize,
        out: &mut Vec<Mono>,
    ) {
        if pos == exps.len() {
            if remaining == 0 {
                out.push(Mono(exps.clone()));
            }
            return;
        }
        for e in 0..=remaining {
            exps[pos] = e as u16;
            rec(exps, pos + 1, remaining - e, total_target, out);
        }
        exps[pos] = 0;
    }
    for b in 0..=s.min(desc.trunc_u) {
        let a = (s - b) as u32;
        if a >= desc.prec_p {
            continue;
        }
        let mut monos = Vec::new();
        if nvars == 0 {
            if b == 0 {
                monos.push(Mono(vec![]));
            }
        } else {
            rec(&mut exps, 0, b, b, &mut monos);
        }
        monos.sort();
        for e in monos {
            out.push((a, e));
        }
    }
    out
}

/// All u-monomials of total degree <= trunc_u, in graded-lex order.
pub fn all_monomials(desc: &RingDescriptor) -> Vec<Mono> {
    let mut out = Vec::new();
    for s in 0..=desc.trunc_u {
        for (a, e) in graded_basis_u_only(desc, s) {
            let _ = a;
            out.push(e);
        }
    }
    out
}

fn graded_basis_u_only(desc: &RingDescriptor, b: usize) -> Vec<(u32, Mono)> {
    let nvars = desc.num_vars();
    if nvars == 0 {
        return if b == 0 {
            vec![(0, Mono(vec![]))]
        } else {
            vec![]
        };
    }
    let mut monos: Vec<Mono> = Vec::new();
    let mut exps = vec![0u16; nvars];
    fn rec(exps: &mut Vec<u16>, pos: usize, remaining: usize, out: &mut Vec<Mono>) {
        if pos == exps.len() {
            if remaining == 0 {
                out.push(Mono(exps.clone()));
            }
            return;
        }
        for e in 0..=remaining {
            exps[pos] = e as u16;
            rec(exps, pos + 1, remaining - e, out);
        }
        exps[pos] = 0;
    }
    rec(&mut exps, 0, b, &mut monos);
    monos.sort();
    monos.into_iter().map(|e| (0, e)).collect()
}

// ---------------------------------------------------------------------------
// Ring maps: substitution of the deformation variables plus a Witt
// Frobenius power. Endomorphisms are the src == dst case.
// ---------------------------------------------------------------------------

/// A local homomorphism between truncated rings with the same Witt data:
/// acts on W(k) as the canonical lift of x -> x^{p^j} and sends each u_i to
/// a maximal-ideal element of the target.
#[derive(Clone, Debug)]
pub struct RingMap {
    pub src: Arc<RingDescriptor>,
    pub dst: Arc<RingDescriptor>,
    pub frobenius_power: usize,
    pub u_images: Vec<RingElem>,
}

/// Endomorphism alias; invert() is only available in this case.
pub type RingEndo = RingMap;

impl PartialEq for RingMap {
    fn eq(&self, other: &Self) -> bool {
        *self.src == *other.src
            && *self.dst == *other.dst
            && self.frobenius_power % self.src.m == other.frobenius_power % other.src.m
            && self.u_images == other.u_images
    }
}

impl RingMap {
    pub fn new(
        src: &Arc<RingDescriptor>,
        dst: &Arc<RingDescriptor>,
        frobenius_power: usize,
        u_images: Vec<RingElem>,
    ) -> Result<RingMap> {
        if src.p != dst.p || src.m != dst.m || src.witt_poly != dst.witt_poly {
            return Err(Error::DescriptorMismatch(
                "ring map requires identical Witt data on both sides".into(),
            ));
        }
        if src.prec_p != dst.prec_p {
            return Err(Error::DescriptorMismatch(
                "ring map requires equal p-precision on both sides".into(),
            ));
        }
        if u_images.len() != src.num_vars() {
            return Err(Error::DescriptorMismatch(format!(
                "expected {} u-images, got {}",
                src.num_vars(),
                u_images.len()
            )));
        }
        for (i, img) in u_images.iter().enumerate() {
            if *img.desc != **dst {
                return Err(Error::DescriptorMismatch(format!(
                    "u-image {} lives in the wrong ring",
                    i + 1
                )));
            }
            if !img.in_maximal_ideal() {
                return Err(Error::DescriptorMismatch(format!(
                    "u-image {} is not in the maximal ideal",
                    i + 1
                )));
            }
        }
        Ok(RingMap {
            src: src.clone(),
            dst: dst.clone(),
            frobenius_power,
            u_images,
        })
    }

    pub fn identity(desc: &Arc<RingDescriptor>) -> RingMap {
        RingMap {
            src: desc.clone(),
            dst: desc.clone(),
            frobenius_power: 0,
            u_images: (0..desc.num_vars()).map(|i| RingElem::var(desc, i)).collect(),
        }
    }

    pub fn is_endo(&self) -> bool {
        *self.src == *self.dst
    }

    pub fn apply(&self, a: &RingElem) -> RingElem {
        assert!(*a.desc == *self.src, "ring map applied to foreign element");
        // cache powers of each u-image as needed
        let nv = self.src.num_vars();
        let mut pow_cache: Vec<Vec<RingElem>> =
            (0..nv).map(|_| vec![RingElem::one(&self.dst)]).collect();
        let mut out = RingElem::zero(&self.dst);
        for (m, w) in &a.terms {
            let tw = self.src.w_frobenius(w, self.frobenius_power);
            let mut term = RingElem::from_witt(&self.dst, tw);
            for i in 0..nv {
                let e = m.0[i] as usize;
                while pow_cache[i].len() <= e {
                    let last = pow_cache[i].last().unwrap().clone();
                    pow_cache[i].push(last.mul(&self.u_images[i]));
                }
                if e > 0 {
                    term = term.mul(&pow_cache[i][e]);
                }
            }
            out = out.add(&term);
        }
        out
    }

    /// self after inner: (self.compose(inner))(x) = self(inner(x)).
    pub fn compose(&self, inner: &RingMap) -> Result<RingMap> {
        if *inner.dst != *self.src {
            return Err(Error::DescriptorMismatch(
                "composition of ring maps with incompatible middle ring".into(),
            ));
        }
        let u_images = inner.u_images.iter().map(|img| self.apply(img)).collect();
        RingMap::new(
            &inner.src,
            &self.dst,
            self.frobenius_power + inner.frobenius_power,
            u_images,
        )
    }

    /// Two-sided inverse of an automorphism, by Newton iteration on the
    /// generator images through the (p, u)-filtration. Requires the
    /// linearization on the u-variables to be invertible mod (p, u).
    pub fn inverse(&self) -> Result<RingMap> {
        if !self.is_endo() {
            return Err(Error::DescriptorMismatch(
                "only endomorphisms can be inverted".into(),
            ));
        }
        let desc = &self.src;
        let nv = desc.num_vars();
        let jinv = (desc.m - self.frobenius_power % desc.m) % desc.m;
        if nv == 0 {
            return RingMap::new(desc, desc, jinv, vec![]);
        }
        // Twisted images: P_i = sigma^{jinv}(phi(u_i)) as polynomials in u.
        let twisted: Vec<RingElem> = self
            .u_images
            .iter()
            .map(|img| img.witt_frobenius(jinv))
            .collect();
        // Check the linearization is a unit matrix mod (p, u).
        // Jacobian entries d P_i / d u_j evaluated at current iterate.
        let mut s: Vec<RingElem> = (0..nv).map(|i| RingElem::var(desc, i)).collect();
        let cap = desc.filtration_cap() + 2;
        for iter in 0..cap {
            let subst = RingMap {
                src: desc.clone(),
                dst: desc.clone(),
                frobenius_power: 0,
                u_images: s.clone(),
            };
            let vals: Vec<RingElem> = twisted.iter().map(|p| subst.apply(p)).collect();
            let errs: Vec<RingElem> = vals
                .iter()
                .enumerate()
                .map(|(i, v)| v.sub(&RingElem::var(desc, i)))
                .collect();
            if errs.iter().all(|e| e.is_zero()) {
                let out = RingMap::new(desc, desc, jinv, s)?;
                return Ok(out);
            }
            if iter == cap - 1 {
                return Err(Error::NoProgress {
                    before: iter,
                    after: iter,
                });
            }
            // Jacobian at s
            let jac: Vec<Vec<RingElem>> = (0..nv)
                .map(|i| {
                    (0..nv)
                        .map(|j| subst.apply(&twisted[i].d_du(j)))
                        .collect()
                })
                .collect();
            let delta = solve_unit_system(desc, &jac, &errs).ok_or(Error::NonUnitJacobian)?;
            for j in 0..nv {
                s[j] = s[j].sub(&delta[j]);
            }
        }
        unreachable!()
    }
}

/// Solve J x = b over the truncated ring by Gauss-Jordan with unit pivots.
/// Returns None when no unit pivot exists for some column (singular mod m).
fn solve_unit_system(
    desc: &Arc<RingDescriptor>,
    jac: &[Vec<RingElem>],
    rhs: &[RingElem],
) -> Option<Vec<RingElem>> {
    let n = jac.len();
    let mut a: Vec<Vec<RingElem>> = jac.to_vec();
    let mut b: Vec<RingElem> = rhs.to_vec();
    let mut col_of_row = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for col in 0..n {
        let piv = (0..n).find(|&r| !used[r] && a[r][col].is_unit())?;
        used[piv] = true;
        col_of_row[piv] = col;
        let inv = a[piv][col].inverse()?;
        for c in 0..n {
            a[piv][c] = a[piv][c].mul(&inv);
        }
        b[piv] = b[piv].mul(&inv);
        for r in 0..n {
            if r == piv || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for c in 0..n {
                let t = a[piv][c].mul(&f);
                a[r][c] = a[r][c].sub(&t);
            }
            let t = b[piv].mul(&f);
            b[r] = b[r].sub(&t);
        }
    }
    let mut x = vec![RingElem::zero(desc); n];
    for r in 0..n {
        x[col_of_row[r]] = b[r].clone();
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zp(p: u64, prec: u32) -> Arc<RingDescriptor> {
        RingDescriptor::with_defaults(p, 1, 1, prec, 0).unwrap()
    }

    fn w4(prec: u32) -> Arc<RingDescriptor> {
        RingDescriptor::with_defaults(2, 2, 1, prec, 0).unwrap()
    }

    #[test]
    fn add_wraps_modulo_p_power() {
        let d = zp(2, 3);
        let a = RingElem::from_i64(&d, 3);
        let b = RingElem::from_i64(&d, 5);
        assert!(a.add(&b).is_zero(), "3 + 5 = 8 = 0 mod 2^3");
    }

    #[test]
    fn u_truncation_is_an_ideal() {
        let d = RingDescriptor::with_defaults(3, 1, 2, 2, 1).unwrap();
        let u = RingElem::var(&d, 0);
        assert!(u.mul(&u).is_zero(), "u^2 dies at trunc_u = 1");
    }

    #[test]
    fn witt_mul_reduces_by_witt_poly() {
        // w * w = -w - 1 = 3w + 3 in (Z/4)[w]/(w^2+w+1)
        let d = w4(2);
        let w = RingElem::witt_gen(&d);
        let expect = RingElem::from_witt(&d, Witt(vec![3, 3]));
        assert_eq!(w.mul(&w), expect);
    }

    #[test]
    fn frobenius_trivial_on_prime_field() {
        let d = zp(5, 4);
        let a = RingElem::from_i64(&d, 17);
        assert_eq!(a.witt_frobenius(1), a);
    }

    #[test]
    fn frobenius_mod_2_on_f4() {
        let d = w4(1);
        let w = RingElem::witt_gen(&d);
        let expect = RingElem::from_witt(&d, Witt(vec![1, 1]));
        assert_eq!(w.witt_frobenius(1), expect, "w -> w^2 = w + 1 in F_4");
    }

    #[test]
    fn frobenius_is_hensel_root_at_higher_precision() {
        // Independent oracle: enumerate all of (Z/8)[w]/(w^2+w+1) and find the
        // roots of the witt polynomial; sigma(w) is the one congruent to w^2
        // mod 2.
        let d = w4(3);
        let eval = |x: &Witt| {
            let xe = RingElem::from_witt(&d, x.clone());
            xe.mul(&xe)
                .add(&xe)
                .add(&RingElem::one(&d))
                .constant_scalar()
        };
        let mut expected = None;
        for c0 in 0..8u64 {
            for c1 in 0..8u64 {
                let cand = Witt(vec![c0, c1]);
                if d.w_is_zero(&eval(&cand)) {
                    // congruent to w^2 = w + 1 mod 2?
                    if c0 % 2 == 1 && c1 % 2 == 1 {
                        expected = Some(cand);
                    }
                }
            }
        }
        let w = RingElem::witt_gen(&d);
        assert_eq!(
            w.witt_frobenius(1).constant_scalar(),
            expected.expect("root exists"),
        );
    }

    #[test]
    fn frobenius_power_m_is_identity() {
        let d = RingDescriptor::with_defaults(2, 3, 1, 4, 0).unwrap();
        let w = RingElem::witt_gen(&d);
        assert_eq!(w.witt_frobenius(3), w);
        // and it is a ring homomorphism
        let a = w.mul(&w).add(&RingElem::from_i64(&d, 5));
        let b = w.add(&RingElem::from_i64(&d, 3));
        assert_eq!(
            a.mul(&b).witt_frobenius(1),
            a.witt_frobenius(1).mul(&b.witt_frobenius(1))
        );
        assert_eq!(
            a.add(&b).witt_frobenius(1),
            a.witt_frobenius(1).add(&b.witt_frobenius(1))
        );
    }

    #[test]
    fn apply_endo_substitutes_and_twists() {
        // phi(u1) = u1 + p on Z_p[[u1]]: u1^2 -> u1^2 + 2p u1 + p^2
        let d = RingDescriptor::with_defaults(3, 1, 2, 3, 3).unwrap();
        let u = RingElem::var(&d, 0);
        let img = u.add(&RingElem::from_i64(&d, 3));
        let phi = RingMap::new(&d, &d, 0, vec![img]).unwrap();
        let expect = u
            .mul(&u)
            .add(&u.mul_i64(6))
            .add(&RingElem::from_i64(&d, 9));
        assert_eq!(phi.apply(&u.mul(&u)), expect);

        // w * u1 -> sigma(w) * u1^2 under (u1 -> u1^2, frobenius 1) over W(F_4)
        let d4 = RingDescriptor::with_defaults(2, 2, 2, 2, 4).unwrap();
        let u = RingElem::var(&d4, 0);
        let w = RingElem::witt_gen(&d4);
        let phi = RingMap::new(&d4, &d4, 1, vec![u.mul(&u)]).unwrap();
        assert_eq!(
            phi.apply(&w.mul(&u)),
            w.witt_frobenius(1).mul(&u.mul(&u))
        );
    }

    #[test]
    fn invert_endo_round_trips() {
        let d = RingDescriptor::with_defaults(2, 1, 2, 3, 4).unwrap();
        let u = RingElem::var(&d, 0);
        // phi(u) = u + p
        let phi = RingMap::new(&d, &d, 0, vec![u.add(&RingElem::from_i64(&d, 2))]).unwrap();
        let psi = phi.inverse().unwrap();
        assert_eq!(psi.u_images[0], u.sub(&RingElem::from_i64(&d, 2)));
        // and on a messier automorphism
        let img = u
            .add(&RingElem::from_i64(&d, 2))
            .add(&u.mul(&u).mul_i64(3));
        let phi = RingMap::new(&d, &d, 0, vec![img]).unwrap();
        let psi = phi.inverse().unwrap();
        let probe = u.mul(&u).add(&u.mul_i64(5)).add(&RingElem::from_i64(&d, 7));
        assert_eq!(psi.apply(&phi.apply(&probe)), probe);
        assert_eq!(phi.apply(&psi.apply(&probe)), probe);
    }

    #[test]
    fn invert_endo_rejects_singular_linearization() {
        let d = RingDescriptor::with_defaults(2, 1, 2, 3, 4).unwrap();
        let u = RingElem::var(&d, 0);
        let phi = RingMap::new(&d, &d, 0, vec![u.mul(&u)]).unwrap();
        match phi.inverse() {
            Err(Error::NonUnitJacobian) => {}
            other => panic!("expected NonUnitJacobian, got {other:?}"),
        }
    }

    #[test]
    fn residue_reduction() {
        let d = RingDescriptor::with_defaults(2, 1, 2, 4, 2).unwrap();
        let a = RingElem::from_i64(&d, 2)
            .add(&RingElem::var(&d, 0))
            .add(&RingElem::one(&d));
        assert_eq!(a.residue(), Witt(vec![1]));
        let w4 = RingDescriptor::with_defaults(2, 2, 1, 3, 0).unwrap();
        let w = RingElem::witt_gen(&w4);
        assert_eq!(w.residue(), Witt(vec![0, 1]));
    }

    #[test]
    fn inverse_of_units() {
        let d = RingDescriptor::with_defaults(5, 1, 2, 4, 3).unwrap();
        let a = RingElem::from_i64(&d, 7)
            .add(&RingElem::var(&d, 0).mul_i64(13))
            .add(&RingElem::var(&d, 0).pow(2).mul_i64(55));
        let inv = a.inverse().unwrap();
        assert_eq!(a.mul(&inv), RingElem::one(&d));
    }

    #[test]
    fn graded_components_round_trip() {
        let d = RingDescriptor::with_defaults(2, 1, 2, 4, 3).unwrap();
        let u = RingElem::var(&d, 0);
        let x = u.mul_i64(2).add(&RingElem::from_i64(&d, 4)); // 2u + 4: I^2 layer
        assert_eq!(x.i_order(), 2);
        let basis = graded_basis(&d, 2);
        let mut rebuilt = RingElem::zero(&d);
        for (a, e) in &basis {
            let kappa = x.graded_component(*a, e).unwrap();
            rebuilt = rebuilt.add(&RingElem::from_graded(&d, *a, e, &kappa));
        }
        assert_eq!(rebuilt, x);
    }

    #[test]
    fn ring_axioms_randomized() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let d = RingDescriptor::with_defaults(2, 2, 3, 3, 2).unwrap();
        let sample = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut x = RingElem::zero(&d);
            for m in all_monomials(&d) {
                let w = Witt(vec![rng.gen_range(0..8), rng.gen_range(0..8)]);
                x.insert_term(m, w);
            }
            x
        };
        for _ in 0..50 {
            let (a, b, c) = (sample(&mut rng), sample(&mut rng), sample(&mut rng));
            assert_eq!(a.mul(&b), b.mul(&a));
            assert_eq!(a.mul(&b.mul(&c)), a.mul(&b).mul(&c));
            assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        }
    }
}
