//! Plain-text and JSON file formats shared by the CLI and the collector.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::LocationDomain;
use crate::error::{Error, Result};
use crate::estimation::DistributionEstimate;
use crate::geo::EncodedLocation;
use crate::srr::{table_from_betas, SchemeTable};

pub const SCHEME_TABLE_FORMAT: &str = "staircase-scheme-table";
pub const SCHEME_TABLE_VERSION: u32 = 1;

/// First line of a domain file. Odd bit lengths cannot be written as a level.
pub fn domain_header(bit_len: u8) -> String {
    if bit_len % 2 == 0 {
        format!("level={}", bit_len / 2)
    } else {
        format!("bits={bit_len}")
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn format_domain(domain: &LocationDomain) -> String {
    let mut s = domain_header(domain.bit_len());
    s.push('\n');
    for l in domain.locations() {
        s.push_str(&l.to_hex());
        s.push('\n');
    }
    s
}

pub fn parse_domain(text: &str) -> Result<LocationDomain> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty domain file"))?;
    let bit_len = match header.trim().split_once('=') {
        Some(("level", v)) => v.parse::<u8>().map(|h| h * 2).map_err(|e| parse_err(1, e.to_string()))?,
        Some(("bits", v)) => v.parse::<u8>().map_err(|e| parse_err(1, e.to_string()))?,
        _ => return Err(parse_err(1, format!("expected `level=<h>`, got `{header}`"))),
    };
    let mut locs = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        locs.push(EncodedLocation::from_hex(line, bit_len).map_err(|e| parse_err(i + 1, e.to_string()))?);
    }
    LocationDomain::build(locs)
}

pub fn write_domain(path: &Path, domain: &LocationDomain) -> Result<()> {
    Ok(fs::write(path, format_domain(domain))?)
}

pub fn read_domain(path: &Path) -> Result<LocationDomain> {
    parse_domain(&fs::read_to_string(path)?)
}

/// On-disk form of a scheme table. Probabilities are rebuilt from the thresholds
/// on load and must match the stored ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SchemeTableFile {
    format: String,
    version: u32,
    domain_hash: String,
    epsilon_target: f64,
    epsilon_achieved: f64,
    c: f64,
    m: usize,
    betas: Vec<Vec<u8>>,
    alphas: Vec<Vec<f64>>,
}

pub fn format_scheme_table(table: &SchemeTable) -> Result<String> {
    let file = SchemeTableFile {
        format: SCHEME_TABLE_FORMAT.into(),
        version: SCHEME_TABLE_VERSION,
        domain_hash: table.domain_hash.clone(),
        epsilon_target: table.epsilon_target,
        epsilon_achieved: table.epsilon_achieved,
        c: table.c,
        m: table.m,
        betas: table.schemes.iter().map(|s| s.partition.beta.clone()).collect(),
        alphas: table.schemes.iter().map(|s| s.alphas.clone()).collect(),
    };
    Ok(serde_json::to_string(&file)? + "\n")
}

/// Parses a table and checks it against `domain` before rebuilding the probabilities.
pub fn parse_scheme_table(text: &str, domain: &LocationDomain) -> Result<SchemeTable> {
    let file: SchemeTableFile = serde_json::from_str(text)?;
    if file.format != SCHEME_TABLE_FORMAT || file.version != SCHEME_TABLE_VERSION {
        return Err(parse_err(1, format!("unsupported table format {} v{}", file.format, file.version)));
    }
    let expected = domain.hash();
    if file.domain_hash != expected {
        return Err(Error::DomainMismatch { expected, found: file.domain_hash });
    }
    let table = table_from_betas(domain, &file.betas, file.c, file.epsilon_target)?;
    if (table.epsilon_achieved - file.epsilon_achieved).abs() > 1e-9 {
        return Err(parse_err(
            1,
            format!("stored epsilon {} does not match rebuilt {}", file.epsilon_achieved, table.epsilon_achieved),
        ));
    }
    let drift = table
        .schemes
        .iter()
        .zip(&file.alphas)
        .flat_map(|(s, a)| s.alphas.iter().zip(a).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    if file.alphas.len() != table.size() || drift > 1e-12 {
        return Err(parse_err(1, "stored probabilities do not match the thresholds"));
    }
    Ok(table)
}

pub fn write_scheme_table(path: &Path, table: &SchemeTable) -> Result<()> {
    Ok(fs::write(path, format_scheme_table(table)?)?)
}

pub fn read_scheme_table(path: &Path, domain: &LocationDomain) -> Result<SchemeTable> {
    parse_scheme_table(&fs::read_to_string(path)?, domain)
}

/// Estimate export: a `# key=value` header line, then `hex,frequency` rows.
pub fn format_estimate(domain: &LocationDomain, est: &DistributionEstimate, epsilon: f64) -> String {
    let mut s = format!(
        "# n={},epsilon={},residual_norm={:e},low_confidence={}\n",
        est.n, epsilon, est.residual_norm, est.low_confidence
    );
    for (loc, p) in domain.locations().iter().zip(&est.p_hat) {
        let _ = writeln!(s, "{},{}", loc.to_hex(), p);
    }
    s
}

/// Reads the `hex,frequency` rows of an estimate export, in domain order.
pub fn parse_estimate(text: &str, domain: &LocationDomain) -> Result<Vec<f64>> {
    let mut p = vec![0.0; domain.size()];
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let (hex, f) = line.split_once(',').ok_or_else(|| parse_err(i + 1, "expected hex,frequency"))?;
        let loc = EncodedLocation::from_hex(hex, domain.bit_len()).map_err(|e| parse_err(i + 1, e.to_string()))?;
        let x = domain.index_of(&loc).ok_or_else(|| parse_err(i + 1, format!("{hex} is not in the domain")))?;
        p[x] = f.trim().parse().map_err(|_| parse_err(i + 1, format!("bad frequency `{f}`")))?;
    }
    Ok(p)
}
