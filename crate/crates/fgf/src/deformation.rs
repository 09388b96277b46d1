//! Executable Lubin-Tate classification: produce the unique classifying map
//! and star-isomorphism from a deformation to (a pullback of) the chosen
//! universal law, derive the Frobenius-lift endomorphism attached to
//! full-torsion quotients, and compute canonical Frobenius-lift
//! homomorphisms exactly.
//!
//! One solver drives all of it. Given a source law F, an isogeny series h
//! (h = t for plain classification) and a starting series g0, it finds the
//! correction g (and optionally the classifying map alpha) such that
//! u = g . h satisfies
//!
//!   u(F(x, y)) = (alpha^* F_univ)(u(x), u(y))
//!
//! exactly at the truncation. Each iteration linearizes at the current
//! state and solves modulo the next step of the (p, u)-filtration; the
//! graded defect is a symmetric 2-cocycle of the special fiber, split into
//! a coboundary part (updating g) and a deformation-direction part
//! (updating the images alpha(u_i)). Corrections whose imprints only show
//! up deeper in the filtration (tail coefficients acting through
//! maximal-ideal pivots) are admitted at exactly the depth their column
//! demands, which keeps each stage uniquely solvable; the permitted depth
//! escalates only when a stage would otherwise be inconsistent.



use crate::error::{Error, Result};
use crate::fgl::FormalGroupLaw;
use crate::isogeny::Isogeny;
use crate::ring::{all_monomials, Mono, RingDescriptor, RingElem, RingMap, Witt};
use crate::series::{gser, PowerSeries1, PowerSeries2};
use crate::zsolve::FlatSystem;

/// The classifying map and star-isomorphism of a deformation: g has linear
/// coefficient congruent to 1 and g(F(x,y)) = (alpha^* F_univ)(g(x), g(y)).
#[derive(Clone, Debug)]
pub struct ClassifiedDeformation {
    pub alpha: RingMap,
    pub star_iso: PowerSeries1,
    pub target_twist: usize,
}

/// Deformation-structure bookkeeping: the law together with the power of
/// Frobenius twisting the residue embedding (eta is always the identity).
#[derive(Clone, Debug)]
pub struct DeformationTag {
    pub law: FormalGroupLaw,
    pub base_twist: usize,
}

impl DeformationTag {
    /// Check the tag against a reference special fiber: the residue of the
    /// law must be the sigma^twist-twist of the fiber.
    pub fn verify(&self, fiber: &PowerSeries2) -> bool {
        self.law.residue_law() == fiber.galois_twist(self.base_twist)
    }
}

/// Pushforward of the deformation structure along an isogeny of degree p^r:
/// the residue embedding gains r powers of Frobenius.
pub fn pushforward_tag(tag: &DeformationTag, iso: &Isogeny) -> Result<DeformationTag> {
    if tag.law.series != iso.source.series {
        return Err(Error::DescriptorMismatch(
            "isogeny source does not match the tagged law".into(),
        ));
    }
    Ok(DeformationTag {
        law: iso.target.clone(),
        base_twist: (tag.base_twist + iso.degree_log) % tag.law.desc.m,
    })
}

/// Either a fixed target law, or a pullback of the universal law along an
/// unknown classifying map (to be solved).
pub(crate) enum TargetSpec<'a> {
    Fixed(&'a FormalGroupLaw),
    Classify(&'a FormalGroupLaw),
}

struct Flattener {
    monos: Vec<Mono>,
    m: usize,
    dim: usize,
}

impl Flattener {
    fn new(desc: &RingDescriptor) -> Flattener {
        let monos = all_monomials(desc);
        let m = desc.m;
        Flattener {
            dim: monos.len() * m,
            monos,
            m,
        }
    }

    fn elem_into(&self, e: &RingElem, out: &mut Vec<u64>) {
        for mono in &self.monos {
            match e.terms.get(mono) {
                Some(w) => out.extend_from_slice(&w.0),
                None => out.extend(std::iter::repeat(0).take(self.m)),
            }
        }
    }

    fn ps2_flat(&self, ps: &PowerSeries2) -> Vec<u64> {
        let mut out = Vec::with_capacity(ps.coeffs.len() * self.dim);
        for c in &ps.coeffs {
            self.elem_into(c, &mut out);
        }
        out
    }

    /// The u-degree of the flat coordinate at `row`.
    fn row_u_degree(&self, row: usize) -> usize {
        let within = (row / self.m) % self.monos.len();
        self.monos[within].total()
    }
}

/// Embed a univariate series as a bivariate one along x or y.
fn embed(ps: &PowerSeries1, along_x: bool) -> PowerSeries2 {
    let d = ps.trunc_t();
    let mut out = PowerSeries2::zero(&ps.desc, d);
    for (k, c) in ps.coeffs.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        if along_x {
            out.set(k, 0, c.clone());
        } else {
            out.set(0, k, c.clone());
        }
    }
    out
}

fn modpow_small(p: u64, e: u32, modulus: u64) -> u64 {
    let mut acc = 1u64 % modulus;
    for _ in 0..e {
        acc = (acc as u128 * p as u128 % modulus as u128) as u64;
    }
    acc
}

fn p_power_log(p: u64, q: usize) -> Option<usize> {
    let mut dl = 0usize;
    let mut acc = 1usize;
    while acc < q {
        acc = acc.checked_mul(p as usize)?;
        dl += 1;
    }
    (acc == q).then_some(dl)
}

/// Core solver: find g (coefficientwise corrections on top of `g_init`) and
/// optionally alpha with (g . h)(F(x,y)) = (alpha^* F_univ)((g.h)x, (g.h)y).
/// `g_init . h` must reduce to a pure Frobenius power x^q.
pub(crate) fn solve_conjugation(
    source: &FormalGroupLaw,
    h: &PowerSeries1,
    g_init: &PowerSeries1,
    target: TargetSpec<'_>,
    twist: usize,
) -> Result<(Option<RingMap>, PowerSeries1)> {
    let desc = &source.desc;
    let d = source.trunc_t();

    // the initial u must reduce to a pure Frobenius power
    let u0 = g_init.compose(h)?;
    let u0res = u0.residue();
    let rdesc = desc.residue_descriptor();
    let q = u0res
        .coeffs
        .iter()
        .position(|c| !c.is_zero())
        .ok_or_else(|| Error::ResidueMismatch("initial map vanishes mod m".into()))?;
    if u0res.coeffs[q] != RingElem::one(&rdesc)
        || u0res.coeffs.iter().skip(q + 1).any(|c| !c.is_zero())
    {
        return Err(Error::ResidueMismatch(
            "initial map does not reduce to a pure Frobenius power".into(),
        ));
    }
    let r_frob = p_power_log(desc.p, q)
        .ok_or_else(|| Error::ResidueMismatch("residue degree is not a p-power".into()))?;

    let tbar = match &target {
        TargetSpec::Fixed(t) => t.residue_law(),
        TargetSpec::Classify(f_univ) => f_univ.residue_law().galois_twist(twist),
    };
    if source.residue_law().galois_twist(r_frob) != tbar {
        return Err(Error::NotADeformation(
            "residue fibers disagree (after the Frobenius twist)".into(),
        ));
    }

    let (f_univ_opt, n_alpha) = match &target {
        TargetSpec::Fixed(_) => (None, 0),
        TargetSpec::Classify(f_univ) => (Some(*f_univ), f_univ.desc.num_vars()),
    };

    let flat = Flattener::new(desc);
    let rows = gser::len2(d) * flat.dim;
    let prec = desc.prec_p;
    let modulus = desc.modulus();
    let basis_elems: Vec<(RingElem, usize)> = {
        let mut v = Vec::with_capacity(flat.dim);
        for mono in &flat.monos {
            for a in 0..flat.m {
                let mut w = vec![0u64; flat.m];
                w[a] = 1;
                let mut e = RingElem::zero(desc);
                e.insert_term(mono.clone(), Witt(w));
                v.push((e, mono.total()));
            }
        }
        v
    };

    // h(F(x,y)) and the powers of h are fixed across iterations; the
    // unknown coefficient g_k acts through (hF)^k - d1T . h(x)^k - d2T . h(y)^k
    let hf = source.series.compose_outer(h);
    let mut hf_pows: Vec<PowerSeries2> = Vec::with_capacity(d + 1);
    let mut one2 = PowerSeries2::zero(desc, d);
    one2.set(0, 0, RingElem::one(desc));
    hf_pows.push(one2);
    for k in 1..=d {
        let next = hf_pows[k - 1].mul(&hf);
        hf_pows.push(next);
    }
    let mut hx_emb: Vec<PowerSeries2> = Vec::with_capacity(d + 1);
    let mut hy_emb: Vec<PowerSeries2> = Vec::with_capacity(d + 1);
    {
        let mut hp = PowerSeries1::zero(desc, d);
        hp.coeffs[0] = RingElem::one(desc);
        for k in 0..=d {
            hx_emb.push(embed(&hp, true));
            hy_emb.push(embed(&hp, false));
            if k < d {
                hp = hp.mul(h);
            }
        }
    }

    let mut g = g_init.clone();
    let mut alpha = match &target {
        TargetSpec::Fixed(_) => None,
        TargetSpec::Classify(f_univ) => Some(RingMap {
            src: f_univ.desc.clone(),
            dst: desc.clone(),
            frobenius_power: twist,
            u_images: vec![RingElem::zero(desc); n_alpha],
        }),
    };
    let cap = desc.filtration_cap();
    let mut prev_order = 0usize;
    let mut stalls = 0usize;
    for _iter in 0..(2 * cap + 4) {
        let u = g.compose(h)?;
        let target_law = match &target {
            TargetSpec::Fixed(t) => (*t).clone(),
            TargetSpec::Classify(f_univ) => {
                f_univ.map_coeffs(alpha.as_ref().expect("classifying map present"))
            }
        };
        let lhs = source.series.compose_outer(&u);
        let rhs = target_law.series.substitute_vars(&u, &u);
        let xi = lhs.sub(&rhs);
        if xi.is_zero() {
            return Ok((alpha, g));
        }
        let stage = xi.i_order();
        if stage <= prev_order {
            stalls += 1;
            if stalls > 2 {
                return Err(Error::ObstructionUnsolvable { stage, degree: 0 });
            }
        } else {
            stalls = 0;
        }
        prev_order = prev_order.max(stage);

        let p1 = target_law.series.d_dx().substitute_vars(&u, &u);
        let p2 = target_law.series.d_dy().substitute_vars(&u, &u);
        let mut dir_series: Vec<PowerSeries2> = Vec::with_capacity(d + n_alpha);
        for k in 1..=d {
            let img = hf_pows[k]
                .sub(&p1.mul(&hx_emb[k]))
                .sub(&p2.mul(&hy_emb[k]));
            dir_series.push(img);
        }
        if let Some(f_univ) = f_univ_opt {
            let am = alpha.as_ref().expect("classifying map present");
            for i in 0..n_alpha {
                let dcol = f_univ.series.d_du(i).map_coeffs(am);
                let evaluated = dcol.substitute_vars(&u, &u);
                let negd = PowerSeries2::zero(desc, d).sub(&evaluated);
                dir_series.push(negd);
            }
        }

        let mut raw_cols: Vec<Vec<u64>> = Vec::with_capacity(dir_series.len() * flat.dim);
        let mut col_depth: Vec<usize> = Vec::with_capacity(dir_series.len() * flat.dim);
        for dirs in &dir_series {
            let w = dirs.i_order();
            for (be, bdeg) in &basis_elems {
                let scaled = PowerSeries2 {
                    desc: desc.clone(),
                    trunc_t: d,
                    coeffs: dirs.coeffs.iter().map(|c| c.mul(be)).collect(),
                };
                raw_cols.push(flat.ps2_flat(&scaled));
                col_depth.push(w + *bdeg);
            }
        }
        let raw_rhs: Vec<u64> = flat
            .ps2_flat(&xi)
            .into_iter()
            .map(|v| (modulus - v % modulus) % modulus)
            .collect();
        // Attempt policy. The alpha components of a stage correction are
        // pinned by the residue-level cocycle decomposition, so they come
        // from the solve at the loose tolerance I^{stage+1}. The g
        // components admit window artifacts (free branches) whose canonical
        // zeroes can paint the walk into a corner at the top filtration
        // layer, so with alpha fixed the g part is re-solved at the deepest
        // consistent tolerance, pinning the branch against as much of the
        // equation as possible. Corrections are verified and rolled back
        // unless the residual stops regressing.
        let cap_tol = prec as usize + desc.trunc_u;
        let n_g = d * flat.dim;
        let scale_system = |tol: usize| -> (Vec<u64>, FlatSystem) {
            let row_scale: Vec<u64> = (0..rows)
                .map(|r| {
                    let ud = flat.row_u_degree(r);
                    let t = tol.saturating_sub(ud).min(prec as usize) as u32;
                    modpow_small(desc.p, prec - t, modulus)
                })
                .collect();
            let cols: Vec<Vec<u64>> = raw_cols
                .iter()
                .map(|col| {
                    col.iter()
                        .enumerate()
                        .map(|(r, &v)| (v as u128 * row_scale[r] as u128 % modulus as u128) as u64)
                        .collect()
                })
                .collect();
            let rhs_flat: Vec<u64> = raw_rhs
                .iter()
                .enumerate()
                .map(|(r, &v)| (v as u128 * row_scale[r] as u128 % modulus as u128) as u64)
                .collect();
            (
                rhs_flat,
                FlatSystem {
                    p: desc.p,
                    modulus,
                    rows,
                    cols,
                },
            )
        };
        let mut applied = false;
        for tau in 0..=stage {
            let floors: Vec<u32> = col_depth
                .iter()
                .map(|&w| (stage.saturating_sub(tau + w)).min(prec as usize) as u32)
                .collect();
            let (rhs_loose, system_loose) = scale_system(stage + 1);
            let Some(mut x) = system_loose.solve(&rhs_loose, &floors) else {
                continue;
            };
            // refine the g part at the deepest tolerance consistent with
            // the alpha values just found
            let mut tol = cap_tol;
            while tol > stage + 1 {
                let (mut rhs_deep, mut system_deep) = scale_system(tol);
                for c in n_g..x.len() {
                    if x[c] != 0 {
                        for r in 0..rows {
                            let t =
                                (system_deep.cols[c][r] as u128 * x[c] as u128 % modulus as u128) as u64;
                            rhs_deep[r] = (rhs_deep[r] + modulus - t) % modulus;
                        }
                    }
                    system_deep.cols[c] = vec![0; rows];
                }
                if let Some(xg) = system_deep.solve(&rhs_deep, &floors) {
                    for c in 0..n_g {
                        x[c] = xg[c];
                    }
                    break;
                }
                tol -= 1;
            }
            let mut g_try = g.clone();
            let mut alpha_try = alpha.clone();
            let mut idx = 0usize;
            for k in 1..=d {
                for (be, _) in &basis_elems {
                    let val = x[idx];
                    idx += 1;
                    if val == 0 {
                        continue;
                    }
                    let add = be.scale(&desc.w_from_u64(val));
                    g_try.coeffs[k] = g_try.coeffs[k].add(&add);
                }
            }
            if let Some(am) = alpha_try.as_mut() {
                for i in 0..n_alpha {
                    for (be, _) in &basis_elems {
                        let val = x[idx];
                        idx += 1;
                        if val == 0 {
                            continue;
                        }
                        let add = be.scale(&desc.w_from_u64(val));
                        am.u_images[i] = am.u_images[i].add(&add);
                    }
                }
            }
            // commit only on verified progress
            let u_try = g_try.compose(h)?;
            let target_try = match &target {
                TargetSpec::Fixed(t) => (*t).clone(),
                TargetSpec::Classify(f_univ) => {
                    f_univ.map_coeffs(alpha_try.as_ref().expect("classifying map present"))
                }
            };
            let lhs_try = source.series.compose_outer(&u_try);
            let rhs_try = target_try.series.substitute_vars(&u_try, &u_try);
            let xi_try = lhs_try.sub(&rhs_try);
            // ideal: the residual deepens; acceptable: it stays at this
            // stage (self-healing second-order noise, bounded by the stall
            // counter); a regression is rolled back and the depth escalated
            if xi_try.is_zero() || xi_try.i_order() >= stage {
                g = g_try;
                alpha = alpha_try;
                applied = true;
                break;
            }
        }
        if !applied {
            if std::env::var("FGF_DEBUG_SOLVE").is_ok() {
                eprintln!("[solve] STUCK at stage {stage}; residual:");
                for (slot, c) in xi.coeffs.iter().enumerate() {
                    if !c.is_zero() {
                        eprintln!("   slot {slot}: {c}");
                    }
                }
            }
            return Err(Error::ObstructionUnsolvable { stage, degree: 0 });
        }
    }
    Err(Error::ObstructionUnsolvable {
        stage: prev_order,
        degree: 0,
    })
}

/// Classify a deformation against the universal law: the unique (alpha, g)
/// with g(F(x,y)) = (alpha^* F_univ)(g(x), g(y)), alpha reducing to
/// sigma^twist on residues and g to t.
pub fn classify(
    law: &FormalGroupLaw,
    f_univ: &FormalGroupLaw,
    twist: usize,
) -> Result<ClassifiedDeformation> {
    let t = PowerSeries1::identity(&law.desc, law.trunc_t());
    let (alpha, g) = solve_conjugation(law, &t, &t, TargetSpec::Classify(f_univ), twist)?;
    Ok(ClassifiedDeformation {
        alpha: alpha.expect("classification always produces a map"),
        star_iso: g,
        target_twist: twist,
    })
}

/// The canonical lift of the relative p^r-power Frobenius out of a law: the
/// unique homomorphism to the pullback of the universal law along the
/// (solved) classifying map that reduces to x^{p^r}. No norms are involved,
/// so the output is the exact truncation of the true series.
pub fn frobenius_lift(
    law: &FormalGroupLaw,
    f_univ: &FormalGroupLaw,
    r: u32,
) -> Result<(RingMap, PowerSeries1)> {
    let desc = &law.desc;
    let q = (desc.p as usize)
        .checked_pow(r * law_height(f_univ) as u32)
        .filter(|&q| q <= law.trunc_t())
        .ok_or_else(|| Error::TruncationTooSmall("p^{rn} exceeds trunc_t".into()))?;
    let t = PowerSeries1::identity(desc, law.trunc_t());
    let init = PowerSeries1::monomial(desc, law.trunc_t(), q, RingElem::one(desc));
    let (alpha, v) = solve_conjugation(
        law,
        &t,
        &init,
        TargetSpec::Classify(f_univ),
        (r as usize) * law_height(f_univ),
    )?;
    Ok((alpha.expect("classification always produces a map"), v))
}

/// Canonical Frobenius lift against a fixed target law.
pub fn frobenius_lift_to(
    law: &FormalGroupLaw,
    target: &FormalGroupLaw,
    q: usize,
) -> Result<PowerSeries1> {
    let desc = &law.desc;
    if q > law.trunc_t() {
        return Err(Error::TruncationTooSmall("p^{rn} exceeds trunc_t".into()));
    }
    let t = PowerSeries1::identity(desc, law.trunc_t());
    let init = PowerSeries1::monomial(desc, law.trunc_t(), q, RingElem::one(desc));
    let (_, v) = solve_conjugation(law, &t, &init, TargetSpec::Fixed(target), 0)?;
    Ok(v)
}

fn law_height(f_univ: &FormalGroupLaw) -> usize {
    f_univ.desc.n
}

/// True when the special fiber has [p] = t^{p^n} on the nose.
fn has_honda_fiber(law: &FormalGroupLaw) -> Result<bool> {
    let q = (law.desc.p as usize)
        .checked_pow(law.desc.n as u32)
        .filter(|&q| q <= law.trunc_t())
        .ok_or_else(|| Error::TruncationTooSmall("p^n exceeds trunc_t".into()))?;
    let ps = law.p_power_series(1)?.residue();
    let rdesc = ps.desc.clone();
    Ok(ps
        .coeffs
        .iter()
        .enumerate()
        .all(|(k, c)| {
            if k == q {
                *c == RingElem::one(&rdesc)
            } else {
                c.is_zero()
            }
        }))
}

/// The Frobenius-lift endomorphism attached to the full p^r-torsion
/// quotient of the universal law: the classifying map of
/// F_univ / F_univ[p^r] with its pushed-forward structure. It lifts
/// sigma^{rn} and alters each u_i by a unit (checked through inversion).
pub fn frobenius_assoc(f_univ: &FormalGroupLaw, r: u32) -> Result<RingMap> {
    let desc = &f_univ.desc;
    let twist = (r as usize) * desc.n;
    // When the universal law has Frobenius-invariant coefficients and a
    // Honda special fiber, [p^r] factors as lambda . f_{F[p^r]} with lambda
    // an isomorphism reducing to the identity, so the full-torsion quotient
    // is star-isomorphic to the law itself carrying the sigma^{rn}-twisted
    // structure. Its classifying map is then the plain Frobenius lift
    // fixing every u_i.
    if f_univ.series.galois_twist(1) == f_univ.series && has_honda_fiber(f_univ)? {
        let images = (0..desc.num_vars()).map(|i| RingElem::var(desc, i)).collect();
        return RingMap::new(desc, desc, twist, images);
    }
    let (phi, _v) = frobenius_lift(f_univ, f_univ, r)?;
    phi.inverse()?; // NonUnitJacobian when the linearization is singular
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use crate::fgl::{multiplicative_law, sample_star_iso, universal_deformation};
    use crate::isogeny::{kernel_polynomial, lubin_isogeny};
    use rand::SeedableRng;

    fn zp(p: u64, prec: u32) -> Arc<RingDescriptor> {
        RingDescriptor::with_defaults(p, 1, 1, prec, 0).unwrap()
    }

    #[test]
    fn classify_universal_against_itself() {
        let desc = RingDescriptor::with_defaults(2, 1, 2, 3, 3).unwrap();
        let law = universal_deformation(&desc, 6).unwrap();
        let c = classify(&law, &law, 0).unwrap();
        assert_eq!(c.star_iso, PowerSeries1::identity(&desc, 6));
        assert_eq!(c.alpha.u_images[0], RingElem::var(&desc, 0));
        assert_eq!(c.alpha.frobenius_power, 0);
    }

    #[test]
    fn classify_mirror_multiplicative_laws() {
        // F = u + v - uv against F_univ = u + v + uv over Z_2: g = -t
        let d = zp(2, 4);
        let f_univ = multiplicative_law(&d, 8).unwrap();
        let iso = lubin_isogeny(&f_univ, &kernel_polynomial(&f_univ, 1).unwrap()).unwrap();
        let mirrored = iso.target; // u + v - uv
        let c = classify(&mirrored, &f_univ, 0).unwrap();
        let mut neg_t = PowerSeries1::zero(&d, 8);
        neg_t.coeffs[1] = RingElem::from_i64(&d, -1);
        assert_eq!(c.star_iso, neg_t);
    }

    #[test]
    fn classify_round_trips_seeded_map() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let desc = RingDescriptor::with_defaults(2, 1, 2, 3, 4).unwrap();
        let d = 10;
        let f_univ = universal_deformation(&desc, d).unwrap();
        let alpha = RingMap::new(
            &desc,
            &desc,
            0,
            vec![crate::fgl::sample_maximal_ideal(&desc, &mut rng)],
        )
        .unwrap();
        let s = sample_star_iso(&desc, d, &mut rng);
        let deformed = f_univ.map_coeffs(&alpha).conjugate(&s).unwrap();
        let c = classify(&deformed, &f_univ, 0).unwrap();
        assert_eq!(c.alpha.u_images, alpha.u_images, "alpha recovered exactly");
        // the certificate identity: g(F(x,y)) = (alpha^* F_univ)(g(x), g(y))
        let target = f_univ.map_coeffs(&c.alpha);
        let lhs = deformed.series.compose_outer(&c.star_iso);
        let rhs = target.series.substitute_vars(&c.star_iso, &c.star_iso);
        assert_eq!(lhs, rhs);
        // and g undoes the conjugation on the special fiber
        let composite = c.star_iso.compose(&s).unwrap();
        assert_eq!(
            composite.residue().coeffs[1],
            RingElem::one(&desc).to_residue_field()
        );
    }

    #[test]
    fn classify_rejects_wrong_fiber() {
        let d = zp(2, 3);
        let mult = multiplicative_law(&d, 6).unwrap();
        let univ = universal_deformation(&d, 6).unwrap();
        assert!(matches!(
            classify(&mult, &univ, 0),
            Err(Error::NotADeformation(_))
        ));
    }

    #[test]
    fn frobenius_assoc_trivial_at_height_one_over_fp() {
        let d = zp(2, 4);
        let law = universal_deformation(&d, 8).unwrap();
        let phi = frobenius_assoc(&law, 1).unwrap();
        assert!(phi.u_images.is_empty());
        let a = RingElem::from_i64(&d, 13);
        assert_eq!(phi.apply(&a), a);
    }

    #[test]
    fn frobenius_assoc_lifts_sigma_over_f4() {
        let desc = RingDescriptor::with_defaults(2, 2, 1, 3, 0).unwrap();
        let law = universal_deformation(&desc, 8).unwrap();
        let phi = frobenius_assoc(&law, 1).unwrap();
        assert_eq!(phi.frobenius_power % 2, 1, "lifts sigma once");
        let w = RingElem::witt_gen(&desc);
        assert_eq!(phi.apply(&w), w.witt_frobenius(1));
    }

    #[test]
    fn frobenius_assoc_height_two_is_the_plain_lift() {
        // The full-torsion quotient F/F[p] is star-isomorphic to F itself
        // through the factorization [p] = lambda . f_p (the connecting
        // isomorphism reduces to the identity on a Honda fiber), so for a
        // universal law with Frobenius-invariant coefficients the attached
        // endomorphism fixes every u_i. Anything else would contradict the
        // invertibility the normalizer needs.
        let desc = RingDescriptor::with_defaults(2, 1, 2, 3, 4).unwrap();
        let law = universal_deformation(&desc, 10).unwrap();
        let phi = frobenius_assoc(&law, 1).unwrap();
        let u = RingElem::var(&desc, 0);
        assert_eq!(phi.u_images[0], u, "phi(u) = u for this universal law");
        assert_eq!(phi.frobenius_power % desc.m, 0);
        let inv = phi.inverse().unwrap();
        assert_eq!(inv.u_images[0], u);
    }

    #[test]
    fn frobenius_assoc_composes() {
        let desc = RingDescriptor::with_defaults(2, 1, 2, 2, 2).unwrap();
        let law = universal_deformation(&desc, 18).unwrap();
        let phi1 = frobenius_assoc(&law, 1).unwrap();
        let phi2 = frobenius_assoc(&law, 2).unwrap();
        let composed = phi1.compose(&phi1).unwrap();
        assert_eq!(phi2.u_images, composed.u_images);
        assert_eq!(phi2.frobenius_power % desc.m, composed.frobenius_power % desc.m);
    }

    #[test]
    fn pushforward_increments_twist() {
        let desc = RingDescriptor::with_defaults(2, 2, 1, 2, 0).unwrap();
        let law = universal_deformation(&desc, 4).unwrap();
        let kern = kernel_polynomial(&law, 1).unwrap();
        let iso = lubin_isogeny(&law, &kern).unwrap();
        let tag = DeformationTag {
            law: law.clone(),
            base_twist: 0,
        };
        let pushed = pushforward_tag(&tag, &iso).unwrap();
        assert_eq!(pushed.base_twist, 1, "sigma twist on F_4");
        let again = pushforward_tag(
            &DeformationTag {
                law: iso.target.clone(),
                base_twist: pushed.base_twist,
            },
            &lubin_isogeny(&iso.target, &kernel_polynomial(&iso.target, 1).unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(again.base_twist, 0, "sigma^2 = id on F_4");
    }
}
