//! Exact computation with one-dimensional formal group laws over truncated
//! complete local rings `W(F_{p^m})[[u_1..u_{n-1}]] / (p^N, deg_u > M)`.
//!
//! The crate builds Lubin-Tate universal deformations, extracts full-torsion
//! kernel polynomials, forms quotient isogenies through companion-matrix
//! norms, classifies deformations by successive cocycle solves over the
//! residue field, and iterates a coordinate change until the canonical
//! Frobenius lift coincides with the norm-built quotient map (the
//! norm-coherent coordinate). All arithmetic is exact modular arithmetic;
//! every equality below is coefficientwise at the declared truncation.

pub mod cli;
pub mod coherence;
pub mod deformation;
pub mod error;
pub mod io;
pub mod fgl;
pub mod isogeny;
pub mod zsolve;
pub mod rational;
pub mod ring;
pub mod series;

pub use error::{Error, Result};
pub use fgl::{
    honda_law, multiplicative_law, sample_star_iso, universal_deformation, FormalGroupLaw,
};
pub use coherence::{
    check_coherence, defect, functoriality_check, galois_twist, normalize, CoherenceDefect,
    CoherenceReport, FunctorialitySpec, NormalizationResult,
};
pub use deformation::{
    classify, frobenius_assoc, pushforward_tag, ClassifiedDeformation, DeformationTag,
};
pub use isogeny::{kernel_polynomial, lubin_isogeny, quotient_law, Isogeny, KernelPolynomial};
pub use ring::{RingDescriptor, RingElem, RingEndo, RingMap};
pub use series::{
    companion_norm, divide_by_distinguished, twist_coeffs, weierstrass_prepare,
    DistinguishedPoly, PowerSeries1, PowerSeries2,
};
