//! Text formats for masks and reports.
//!
//! - PBM `P1`: one bitmap per head, `1` marks an admissible pair, one image
//!   row per text line.
//! - CSV: `layer,head,row,col`, all 0-based, class token at index 0.
//! - JSON: pretty-printed, struct field order, trailing newline.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maskgen::SupportSet;

pub const CSV_HEADER: &str = "layer,head,row,col";

pub fn pbm(mask: &SupportSet) -> String {
    let g = mask.grid_size();
    let mut out = String::with_capacity(2 * g * g + 32);
    let _ = writeln!(out, "P1");
    let _ = writeln!(out, "{g} {g}");
    let mut line = vec!["0"; g];
    for j in 0..g {
        line.iter_mut().for_each(|c| *c = "0");
        for k in mask.row(j) {
            line[k] = "1";
        }
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Parses a plain PBM (comments allowed) into a bit matrix.
pub fn parse_pbm(text: &str) -> Result<Array2<bool>> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P1") {
        return Err(Error::arg("not a plain PBM (missing P1 magic)"));
    }
    let mut dim = || -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::arg("bad PBM dimensions"))
    };
    let (w, h) = (dim()?, dim()?);
    let bits: Vec<bool> = tokens
        .flat_map(str::chars)
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::arg(format!("unexpected PBM character {other:?}"))),
        })
        .collect::<Result<_>>()?;
    Array2::from_shape_vec((h, w), bits).map_err(|e| Error::shape(e.to_string()))
}

/// Coordinate rows for a sequence of `(layer, head, mask)`, header included.
pub fn coordinate_csv<'a>(masks: impl IntoIterator<Item = (usize, usize, &'a SupportSet)>) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (layer, head, mask) in masks {
        for j in 0..mask.grid_size() {
            for k in mask.row(j) {
                let _ = writeln!(out, "{layer},{head},{j},{k}");
            }
        }
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialise infallibly");
    s.push('\n');
    s
}
