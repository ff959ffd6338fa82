use std::collections::BTreeMap;

use super::elements;
use crate::error::{Error, Result};

const STO_3G: &str = include_str!("../../data/sto-3g.basis");

/// One shell of an element record; coefficients refer to normalized primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellTemplate {
    pub l: u32,
    pub exponents: Vec<f64>,
    pub coefficients: Vec<f64>,
}

/// Element symbol to shell list.
///
/// Text format, `#` starts a comment:
///
/// ```text
/// element O
/// 0 3
///   130.70932  0.15432897
///   23.808861  0.53532814
///   6.4436083  0.44463454
/// 1 3
///   ...
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BasisSet {
    elements: BTreeMap<String, Vec<ShellTemplate>>,
}

impl BasisSet {
    pub fn sto3g() -> Self {
        Self::parse(STO_3G).expect("bundled STO-3G table is well formed")
    }

    /// Resolves a built-in name (`sto-3g`) or reads a basis file from disk.
    pub fn load(name_or_path: &str) -> Result<Self> {
        match name_or_path.to_ascii_lowercase().as_str() {
            "sto-3g" | "sto3g" => Ok(Self::sto3g()),
            _ => Self::parse(&std::fs::read_to_string(name_or_path)?),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut elements: BTreeMap<String, Vec<ShellTemplate>> = BTreeMap::new();
        let mut current: Option<String> = None;
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        while let Some((lineno, line)) = lines.next() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0].eq_ignore_ascii_case("element") {
                let sym = fields
                    .get(1)
                    .ok_or_else(|| Error::parse(lineno, "element record without a symbol"))?;
                let z = elements::atomic_number(sym)
                    .ok_or_else(|| Error::parse(lineno, format!("unknown element symbol `{sym}`")))?;
                let sym = elements::symbol(z).unwrap().to_string();
                elements.entry(sym.clone()).or_default();
                current = Some(sym);
                continue;
            }
            let Some(sym) = &current else {
                return Err(Error::parse(lineno, "shell header before any `element` record"));
            };
            let [l, k] = fields[..] else {
                return Err(Error::parse(lineno, "expected shell header `L K`"));
            };
            let l: u32 = l
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad angular momentum `{l}`")))?;
            let k: usize = k
                .parse()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| Error::parse(lineno, format!("bad contraction degree `{k}`")))?;
            let mut exponents = Vec::with_capacity(k);
            let mut coefficients = Vec::with_capacity(k);
            for _ in 0..k {
                let (row_no, row) = lines
                    .next()
                    .ok_or_else(|| Error::parse(lineno, format!("shell declares {k} primitives, input ended")))?;
                let nums: Vec<f64> = row
                    .split_whitespace()
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(row_no, format!("malformed primitive row `{row}`")))?;
                let [e, c] = nums[..] else {
                    return Err(Error::parse(row_no, "expected `exponent coefficient`"));
                };
                if e.is_nan() || e <= 0.0 {
                    return Err(Error::parse(row_no, format!("non-positive exponent {e}")));
                }
                exponents.push(e);
                coefficients.push(c);
            }
            elements.get_mut(sym).unwrap().push(ShellTemplate {
                l,
                exponents,
                coefficients,
            });
        }
        Ok(BasisSet { elements })
    }

    pub fn shells_for(&self, symbol: &str) -> Option<&[ShellTemplate]> {
        let z = elements::atomic_number(symbol)?;
        self.elements
            .get(elements::symbol(z)?)
            .map(Vec::as_slice)
            .filter(|s| !s.is_empty())
    }

    pub fn element_symbols(&self) -> impl Iterator<Item = &str> {
        self.elements.keys().map(String::as_str)
    }
}
