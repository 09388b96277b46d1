//! Command-line front end: construct laws, compute torsion kernels and
//! quotients, classify deformations, and drive the norm-coherence
//! normalizer. Every artifact is deterministic JSON; identical configs
//! produce byte-identical output.
//!
//! Exit codes: 0 on success/pass, 2 on a mathematical check failure, 1 on
//! usage or validation errors.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use serde::Serialize;

use crate::coherence::{
    check_coherence, defect, functoriality_check, galois_twist, normalize, FunctorialitySpec,
};
use crate::deformation::{classify, frobenius_assoc};
use crate::error::{Error, Result};
use crate::fgl::{honda_law, sample_star_iso, universal_deformation, FormalGroupLaw};
use crate::io;
use crate::isogeny::{kernel_polynomial, lubin_isogeny};
use crate::ring::{RingDescriptor, RingElem, RingMap};

#[derive(Parser)]
#[command(
    name = "fgf",
    about = "exact computation with formal group laws over truncated Lubin-Tate rings",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RingArgs {
    /// Residue characteristic (prime)
    #[arg(long)]
    p: u64,
    /// Residue field degree (k = F_{p^m})
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Height (the ring has n-1 deformation variables)
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Work modulo p^{prec_p}
    #[arg(long = "prec-p", default_value_t = 1)]
    prec_p: u32,
    /// Discard u-monomials of total degree above this
    #[arg(long = "trunc-u", default_value_t = 0)]
    trunc_u: usize,
    /// Truncation degree for power series
    #[arg(long = "trunc-t")]
    trunc_t: usize,
}

#[derive(Args)]
struct OutArgs {
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the height-n Honda formal group law over F_{p^m}
    Honda {
        #[arg(long)]
        p: u64,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long = "trunc-t")]
        trunc_t: usize,
        /// Conjugate the law by a seeded star-isomorphism (fixture making)
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Emit a Lubin-Tate universal deformation of the Honda law
    UnivDef {
        #[command(flatten)]
        ring: RingArgs,
        /// Conjugate the law by a seeded star-isomorphism (fixture making)
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// The p^r-series of a law
    PSeries {
        #[arg(long)]
        law: PathBuf,
        #[arg(long, default_value_t = 1)]
        r: u32,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Kernel polynomial of the full p^r-torsion subgroup
    Kernel {
        #[arg(long)]
        law: PathBuf,
        #[arg(long, default_value_t = 1)]
        r: u32,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Quotient isogeny and quotient law by a subgroup divisor
    Quotient {
        #[arg(long)]
        law: PathBuf,
        /// Kernel polynomial file; defaults to the full p^r-torsion
        #[arg(long)]
        kernel: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        r: u32,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Classifying map and star-isomorphism to a universal law
    Classify {
        #[arg(long)]
        law: PathBuf,
        #[arg(long)]
        univ: PathBuf,
        #[arg(long, default_value_t = 0)]
        twist: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Norm-coherence defect of a deformation
    Defect {
        #[arg(long)]
        law: PathBuf,
        /// Universal law file; defaults to the built-in construction
        #[arg(long)]
        univ: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Iterate to the unique norm-coherent representative
    Normalize {
        #[arg(long)]
        law: PathBuf,
        #[arg(long)]
        univ: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Audit kernel polynomials for norm coherence
    Check {
        #[arg(long)]
        law: PathBuf,
        /// Comma-separated kernel polynomial files
        #[arg(long, value_delimiter = ',')]
        kernels: Vec<PathBuf>,
        #[arg(long)]
        univ: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Verify normalize commutes with the Galois twist sigma^j
    GaloisCheck {
        #[arg(long)]
        law: PathBuf,
        #[arg(long)]
        univ: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        j: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Verify norm coherence survives base change and quotients
    FunctorialityCheck {
        /// A normalized law (the output of `normalize`)
        #[arg(long)]
        law: PathBuf,
        #[arg(long)]
        univ: Option<PathBuf>,
        /// Comma-separated maximal-ideal values for u_1..u_{n-1}
        /// (repeatable); each runs one base-change check
        #[arg(long = "base-change", action = clap::ArgAction::Append)]
        base_change: Vec<String>,
        /// Also check the full p-torsion quotient
        #[arg(long)]
        quotient: bool,
        #[command(flatten)]
        out: OutArgs,
    },
}

/// Entry point used by the binary and by tests. Returns the process exit
/// code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(pass) => {
            if pass {
                0
            } else {
                2
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::BadDescriptor(_)
                | Error::DescriptorMismatch(_) => 1,
                _ => 2,
            }
        }
    }
}

fn emit(out: &OutArgs, value: &impl Serialize) -> Result<()> {
    let text = io::to_pretty(value)?;
    match &out.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_law(path: &PathBuf) -> Result<FormalGroupLaw> {
    let text = std::fs::read_to_string(path)?;
    // accept either a bare law artifact or the output of `normalize`
    if let Ok(json) = io::parse::<io::FglJson>(&text) {
        return io::fgl_from_json(&json);
    }
    let nc: io::NormalizationJson = io::parse(&text).map_err(|_| {
        Error::Json(format!(
            "{} is neither a law artifact nor a normalization result",
            path.display()
        ))
    })?;
    io::fgl_from_json(&nc.law)
}

fn default_univ(law: &FormalGroupLaw) -> Result<FormalGroupLaw> {
    universal_deformation(&law.desc, law.trunc_t())
}

fn load_univ(path: &Option<PathBuf>, law: &FormalGroupLaw) -> Result<FormalGroupLaw> {
    match path {
        Some(p) => load_law(p),
        None => default_univ(law),
    }
}

fn max_iter_from_env() -> Result<Option<usize>> {
    match std::env::var("FGF_MAX_ITER") {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Usage(format!("FGF_MAX_ITER must be an integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

#[derive(Serialize)]
struct SeededFglJson {
    #[serde(flatten)]
    law: io::FglJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

fn maybe_conjugate(law: FormalGroupLaw, seed: Option<u64>) -> Result<SeededFglJson> {
    let law = match seed {
        None => law,
        Some(s) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
            let iso = sample_star_iso(&law.desc, law.trunc_t(), &mut rng);
            law.conjugate(&iso)?
        }
    };
    Ok(SeededFglJson {
        law: io::fgl_json(&law),
        seed,
    })
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Honda {
            p,
            n,
            m,
            trunc_t,
            seed,
            out,
        } => {
            let law = honda_law(p, n, m, trunc_t)?;
            emit(&out, &maybe_conjugate(law, seed)?)?;
            Ok(true)
        }
        Command::UnivDef { ring, seed, out } => {
            let desc = RingDescriptor::with_defaults(ring.p, ring.m, ring.n, ring.prec_p, ring.trunc_u)?;
            let law = universal_deformation(&desc, ring.trunc_t)?;
            emit(&out, &maybe_conjugate(law, seed)?)?;
            Ok(true)
        }
        Command::PSeries { law, r, out } => {
            let law = load_law(&law)?;
            let s = law.p_power_series(r)?;
            emit(&out, &io::series1_json(&s))?;
            Ok(true)
        }
        Command::Kernel { law, r, out } => {
            let law = load_law(&law)?;
            let k = kernel_polynomial(&law, r)?;
            emit(&out, &io::kernel_json(&k))?;
            Ok(true)
        }
        Command::Quotient {
            law,
            kernel,
            r,
            out,
        } => {
            let law = load_law(&law)?;
            let kern = match kernel {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)?;
                    let json: io::KernelJson = io::parse(&text)?;
                    io::kernel_from_json(&law, &json)?
                }
                None => kernel_polynomial(&law, r)?,
            };
            let iso = lubin_isogeny(&law, &kern)?;
            emit(
                &out,
                &io::QuotientJson {
                    isogeny: io::isogeny_json(&iso),
                    law: io::fgl_json(&iso.target),
                },
            )?;
            Ok(true)
        }
        Command::Classify {
            law,
            univ,
            twist,
            out,
        } => {
            let law = load_law(&law)?;
            let univ = load_law(&univ)?;
            let c = classify(&law, &univ, twist)?;
            emit(&out, &io::classified_json(&c))?;
            Ok(true)
        }
        Command::Defect { law, univ, out } => {
            let law = load_law(&law)?;
            let univ = load_univ(&univ, &law)?;
            let phi = frobenius_assoc(&univ, 1)?;
            let d = defect(&law, &univ, &phi)?;
            let pass = d.is_zero();
            emit(&out, &io::defect_report_json(&d, 0))?;
            Ok(pass)
        }
        Command::Normalize { law, univ, out } => {
            let law = load_law(&law)?;
            let univ = load_univ(&univ, &law)?;
            let nc = normalize(&law, &univ, max_iter_from_env()?)?;
            emit(&out, &io::normalization_json(&nc))?;
            Ok(true)
        }
        Command::Check {
            law,
            kernels,
            univ,
            out,
        } => {
            let law = load_law(&law)?;
            let univ = load_univ(&univ, &law)?;
            let phi = frobenius_assoc(&univ, 1)?;
            let mut parsed = Vec::new();
            for path in &kernels {
                let text = std::fs::read_to_string(path)?;
                let json: io::KernelJson = io::parse(&text)?;
                parsed.push(io::kernel_from_json(&law, &json)?);
            }
            let reports = check_coherence(&law, &univ, &parsed, &phi)?;
            let pass = reports.iter().all(|r| r.pass);
            let json: Vec<io::ReportJson> =
                reports.iter().map(io::coherence_report_json).collect();
            emit(&out, &json)?;
            Ok(pass)
        }
        Command::GaloisCheck { law, univ, j, out } => {
            let law = load_law(&law)?;
            let univ = load_univ(&univ, &law)?;
            let max_iter = max_iter_from_env()?;
            let twisted_then_normalized = normalize(&galois_twist(&law, j), &univ, max_iter)?;
            let normalized_then_twisted =
                galois_twist(&normalize(&law, &univ, max_iter)?.law, j);
            let pass =
                twisted_then_normalized.law.series == normalized_then_twisted.series;
            #[derive(Serialize)]
            struct GaloisReport {
                pass: bool,
                twist: usize,
            }
            emit(&out, &GaloisReport { pass, twist: j })?;
            Ok(pass)
        }
        Command::FunctorialityCheck {
            law,
            univ,
            base_change,
            quotient,
            out,
        } => {
            let law = load_law(&law)?;
            let univ = load_univ(&univ, &law)?;
            let phi = frobenius_assoc(&univ, 1)?;
            let nc = normalize(&law, &univ, max_iter_from_env()?)?;
            if nc.iterations != 0 {
                return Err(Error::Usage(
                    "functoriality-check expects an already normalized law".into(),
                ));
            }
            let mut reports = Vec::new();
            let mut pass = true;
            for spec in &base_change {
                let beta = parse_base_change(&law.desc, spec)?;
                let rep = functoriality_check(&nc, &phi, FunctorialitySpec::BaseChange(&beta))?;
                pass &= rep.pass;
                reports.push(io::coherence_report_json(&rep));
            }
            if quotient {
                let rep = functoriality_check(&nc, &phi, FunctorialitySpec::Quotient)?;
                pass &= rep.pass;
                reports.push(io::coherence_report_json(&rep));
            }
            if reports.is_empty() {
                return Err(Error::Usage(
                    "nothing to check: pass --base-change and/or --quotient".into(),
                ));
            }
            emit(&out, &reports)?;
            Ok(pass)
        }
    }
}

/// Parse "c1,c2,..." into the base change u_i -> c_i into the variable-free
/// ring with the same Witt data.
fn parse_base_change(desc: &Arc<RingDescriptor>, spec: &str) -> Result<RingMap> {
    let values: Vec<i64> = spec
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Usage(format!("bad base-change value {v:?}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != desc.num_vars() {
        return Err(Error::Usage(format!(
            "base change needs {} values, got {}",
            desc.num_vars(),
            values.len()
        )));
    }
    let target = RingDescriptor::new(
        desc.p,
        desc.m,
        desc.witt_poly.clone(),
        1,
        desc.prec_p,
        0,
    )?;
    let images = values
        .iter()
        .map(|&v| RingElem::from_i64(&target, v))
        .collect();
    RingMap::new(desc, &target, 0, images)
}
