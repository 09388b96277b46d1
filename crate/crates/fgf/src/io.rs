//! Deterministic JSON serialization for every domain type: single-file
//! artifacts with graded-lex coefficient order and decimal-string scalars,
//! diffable across implementations.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coherence::{CoherenceDefect, CoherenceReport, NormalizationResult};
use crate::deformation::ClassifiedDeformation;
use crate::error::{Error, Result};
use crate::fgl::FormalGroupLaw;
use crate::isogeny::{Isogeny, KernelPolynomial};
use crate::ring::{Mono, RingDescriptor, RingElem, RingMap, Witt};
use crate::series::{DistinguishedPoly, PowerSeries1, PowerSeries2};

#[derive(Serialize, Deserialize)]
pub struct DescriptorJson {
    pub p: u64,
    pub m: usize,
    pub witt_poly: Vec<i64>,
    pub n: usize,
    pub prec_p: u32,
    pub trunc_u: usize,
}

#[derive(Serialize, Deserialize)]
pub struct MonomialJson {
    pub u: Vec<u16>,
    pub scalar: Vec<String>,
}

#[derive(Serialize, Deserialize)]
pub struct RingElemJson {
    pub monomials: Vec<MonomialJson>,
}

#[derive(Serialize, Deserialize)]
pub struct Series1Json {
    pub trunc_t: usize,
    pub coeffs: Vec<RingElemJson>,
}

#[derive(Serialize, Deserialize)]
pub struct Series2EntryJson {
    pub i: usize,
    pub j: usize,
    pub c: RingElemJson,
}

#[derive(Serialize, Deserialize)]
pub struct Series2Json {
    pub trunc_t: usize,
    pub coeffs: Vec<Series2EntryJson>,
}

#[derive(Serialize, Deserialize)]
pub struct FglTagsJson {
    pub base_twist: usize,
}

#[derive(Serialize, Deserialize)]
pub struct FglJson {
    pub descriptor: DescriptorJson,
    pub law: Series2Json,
    pub tags: FglTagsJson,
}

#[derive(Serialize, Deserialize)]
pub struct IsogenyJson {
    pub series: Series1Json,
    pub degree_log: usize,
}

#[derive(Serialize, Deserialize)]
pub struct KernelJson {
    pub coeffs: Vec<RingElemJson>,
    pub degree_log: usize,
    pub level: u32,
}

#[derive(Serialize, Deserialize)]
pub struct RingMapJson {
    pub frobenius_power: usize,
    pub u_images: Vec<RingElemJson>,
}

#[derive(Serialize, Deserialize)]
pub struct ClassifiedJson {
    pub alpha: RingMapJson,
    pub star_iso: Series1Json,
    pub target_twist: usize,
}

#[derive(Serialize, Deserialize)]
pub struct ReportJson {
    pub pass: bool,
    pub defect: Series1Json,
    pub filtration_order: usize,
    pub iterations: usize,
}

#[derive(Serialize, Deserialize)]
pub struct NormalizationJson {
    pub law: FglJson,
    pub coordinate_change: Series1Json,
    pub iterations: usize,
    pub certificate: ReportJson,
}

#[derive(Serialize, Deserialize)]
pub struct QuotientJson {
    pub isogeny: IsogenyJson,
    pub law: FglJson,
}

// -- encoding ---------------------------------------------------------------

pub fn descriptor_json(desc: &RingDescriptor) -> DescriptorJson {
    DescriptorJson {
        p: desc.p,
        m: desc.m,
        witt_poly: desc.witt_poly.clone(),
        n: desc.n,
        prec_p: desc.prec_p,
        trunc_u: desc.trunc_u,
    }
}

pub fn elem_json(e: &RingElem) -> RingElemJson {
    RingElemJson {
        monomials: e
            .terms
            .iter()
            .map(|(m, w)| MonomialJson {
                u: m.0.clone(),
                scalar: w.0.iter().map(|c| c.to_string()).collect(),
            })
            .collect(),
    }
}

pub fn series1_json(s: &PowerSeries1) -> Series1Json {
    Series1Json {
        trunc_t: s.trunc_t(),
        coeffs: s.coeffs.iter().map(elem_json).collect(),
    }
}

pub fn series2_json(s: &PowerSeries2) -> Series2Json {
    let mut coeffs = Vec::new();
    for total in 0..=s.trunc_t {
        for i in 0..=total {
            let j = total - i;
            let c = s.get(i, j);
            if !c.is_zero() {
                coeffs.push(Series2EntryJson {
                    i,
                    j,
                    c: elem_json(c),
                });
            }
        }
    }
    Series2Json {
        trunc_t: s.trunc_t,
        coeffs,
    }
}

pub fn fgl_json(law: &FormalGroupLaw) -> FglJson {
    FglJson {
        descriptor: descriptor_json(&law.desc),
        law: series2_json(&law.series),
        tags: FglTagsJson {
            base_twist: law.base_twist,
        },
    }
}

pub fn isogeny_json(iso: &Isogeny) -> IsogenyJson {
    IsogenyJson {
        series: series1_json(&iso.series),
        degree_log: iso.degree_log,
    }
}

pub fn kernel_json(k: &KernelPolynomial) -> KernelJson {
    KernelJson {
        coeffs: k.poly.coeffs.iter().map(elem_json).collect(),
        degree_log: k.degree_log,
        level: k.level,
    }
}

pub fn ringmap_json(m: &RingMap) -> RingMapJson {
    RingMapJson {
        frobenius_power: m.frobenius_power,
        u_images: m.u_images.iter().map(elem_json).collect(),
    }
}

pub fn classified_json(c: &ClassifiedDeformation) -> ClassifiedJson {
    ClassifiedJson {
        alpha: ringmap_json(&c.alpha),
        star_iso: series1_json(&c.star_iso),
        target_twist: c.target_twist,
    }
}

pub fn defect_report_json(d: &CoherenceDefect, iterations: usize) -> ReportJson {
    ReportJson {
        pass: d.is_zero(),
        defect: series1_json(&d.series),
        filtration_order: d.filtration_order,
        iterations,
    }
}

pub fn coherence_report_json(r: &CoherenceReport) -> ReportJson {
    ReportJson {
        pass: r.pass,
        defect: series1_json(&r.defect.series),
        filtration_order: r.defect.filtration_order,
        iterations: 0,
    }
}

pub fn normalization_json(n: &NormalizationResult) -> NormalizationJson {
    NormalizationJson {
        law: fgl_json(&n.law),
        coordinate_change: series1_json(&n.coordinate_change),
        iterations: n.iterations,
        certificate: defect_report_json(&n.certificate, n.iterations),
    }
}

// -- decoding ---------------------------------------------------------------

pub fn descriptor_from_json(j: &DescriptorJson) -> Result<Arc<RingDescriptor>> {
    RingDescriptor::new(j.p, j.m, j.witt_poly.clone(), j.n, j.prec_p, j.trunc_u)
}

pub fn elem_from_json(desc: &Arc<RingDescriptor>, j: &RingElemJson) -> Result<RingElem> {
    let mut out = RingElem::zero(desc);
    for mono in &j.monomials {
        if mono.u.len() != desc.num_vars() {
            return Err(Error::Json(format!(
                "monomial has {} exponents, descriptor expects {}",
                mono.u.len(),
                desc.num_vars()
            )));
        }
        if mono.scalar.len() != desc.m {
            return Err(Error::Json(format!(
                "scalar has {} coordinates, descriptor expects {}",
                mono.scalar.len(),
                desc.m
            )));
        }
        let mut w = Vec::with_capacity(desc.m);
        for c in &mono.scalar {
            let v: u64 = c
                .parse()
                .map_err(|_| Error::Json(format!("bad scalar digit string {c:?}")))?;
            w.push(v % desc.modulus());
        }
        out.insert_term(Mono(mono.u.clone()), Witt(w));
    }
    Ok(out)
}

pub fn series1_from_json(desc: &Arc<RingDescriptor>, j: &Series1Json) -> Result<PowerSeries1> {
    if j.coeffs.len() != j.trunc_t + 1 {
        return Err(Error::Json(format!(
            "series has {} coefficients for trunc_t {}",
            j.coeffs.len(),
            j.trunc_t
        )));
    }
    let mut coeffs = Vec::with_capacity(j.coeffs.len());
    for c in &j.coeffs {
        coeffs.push(elem_from_json(desc, c)?);
    }
    Ok(PowerSeries1::from_coeffs(desc, coeffs))
}

pub fn series2_from_json(desc: &Arc<RingDescriptor>, j: &Series2Json) -> Result<PowerSeries2> {
    let mut out = PowerSeries2::zero(desc, j.trunc_t);
    for e in &j.coeffs {
        if e.i + e.j > j.trunc_t {
            return Err(Error::Json(format!(
                "entry ({}, {}) exceeds trunc_t {}",
                e.i, e.j, j.trunc_t
            )));
        }
        out.set(e.i, e.j, elem_from_json(desc, &e.c)?);
    }
    Ok(out)
}

pub fn fgl_from_json(j: &FglJson) -> Result<FormalGroupLaw> {
    let desc = descriptor_from_json(&j.descriptor)?;
    let series = series2_from_json(&desc, &j.law)?;
    FormalGroupLaw::validate_with_twist(series, j.tags.base_twist)
}

pub fn kernel_from_json(law: &FormalGroupLaw, j: &KernelJson) -> Result<KernelPolynomial> {
    let mut coeffs = Vec::with_capacity(j.coeffs.len());
    for c in &j.coeffs {
        coeffs.push(elem_from_json(&law.desc, c)?);
    }
    let poly = DistinguishedPoly::new(&law.desc, coeffs)?;
    KernelPolynomial::from_poly(law, poly)
}

pub fn to_pretty(value: &impl Serialize) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Json(e.to_string()))
}

pub fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Json(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fgl::{multiplicative_law, universal_deformation};
    use crate::ring::RingDescriptor;

    #[test]
    fn fgl_round_trip() {
        let desc = RingDescriptor::with_defaults(2, 2, 2, 3, 2).unwrap();
        let law = universal_deformation(&desc, 6).unwrap();
        let text = to_pretty(&fgl_json(&law)).unwrap();
        let parsed: FglJson = parse(&text).unwrap();
        let back = fgl_from_json(&parsed).unwrap();
        assert_eq!(back.series, law.series);
        assert_eq!(back.base_twist, law.base_twist);
        // determinism: serialize twice, byte-identical
        let again = to_pretty(&fgl_json(&back)).unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn series_round_trip_preserves_scalars() {
        let desc = RingDescriptor::with_defaults(3, 1, 1, 3, 0).unwrap();
        let law = multiplicative_law(&desc, 5).unwrap();
        let s = law.n_series(3);
        let text = to_pretty(&series1_json(&s)).unwrap();
        let parsed: Series1Json = parse(&text).unwrap();
        let back = series1_from_json(&desc, &parsed).unwrap();
        assert_eq!(back, s);
    }
}
