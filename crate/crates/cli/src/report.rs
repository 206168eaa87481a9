//! Machine-readable reports: JSON structures, rational/coefficient
//! serialization, and atomic output.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use lds_core::lattice::LatticeSpec;
use lds_core::reduction::LinearCombination;
use lds_core::ring::Coefficient;

use crate::config::format_rational;

/// Envelope carrying the resolved configuration with every result.
#[derive(Serialize)]
pub struct Report<T: Serialize> {
    pub command: String,
    pub config: String,
    pub results: T,
}

/// One monomial factor of an exact coefficient.
#[derive(Serialize)]
pub struct MonomialJson {
    pub symbols: Vec<(String, i32)>,
    pub rational: String,
}

pub fn coefficient_json(coeff: &Coefficient) -> Vec<MonomialJson> {
    coeff
        .terms()
        .map(|(monomial, q)| MonomialJson {
            symbols: monomial
                .exponents()
                .map(|(sym, exp)| (sym.name().to_owned(), exp))
                .collect(),
            rational: format_rational(q),
        })
        .collect()
}

#[derive(Serialize)]
pub struct TermJson {
    pub index: Vec<u32>,
    pub coefficient: Vec<MonomialJson>,
}

pub fn combination_json(combo: &LinearCombination, spec: &LatticeSpec) -> Vec<TermJson> {
    combo
        .iter()
        .map(|(nu, coeff)| TermJson {
            index: nu.dense(spec),
            coefficient: coefficient_json(coeff),
        })
        .collect()
}

/// Writes the report atomically: temp file in the target directory, then
/// rename. Without a path the text goes to stdout.
pub fn emit(path: Option<&Path>, text: &str) -> std::io::Result<()> {
    match path {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                stdout.write_all(b"\n")?;
            }
            Ok(())
        }
        Some(path) => {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, text)?;
            fs::rename(&tmp, path)
        }
    }
}

pub fn to_json<T: Serialize>(report: &Report<T>) -> String {
    serde_json::to_string_pretty(report).expect("report serialization")
}
