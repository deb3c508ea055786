//! Parser for the StRD nonlinear regression `.dat` layout.

use std::path::{Path, PathBuf};

use super::read_file;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Difficulty {
    Lower,
    Average,
    Higher,
}

impl Difficulty {
    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Lower => "lower",
            Difficulty::Average => "average",
            Difficulty::Higher => "higher",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NistProblem {
    pub name: String,
    pub difficulty: Difficulty,
    /// The model formula as printed, continuation lines joined.
    pub model: String,
    pub starts: [Vec<f64>; 2],
    pub certified: Vec<f64>,
    pub certified_sd: Vec<f64>,
    pub certified_sse: f64,
    /// The certified SSE exactly as written in the file.
    pub certified_sse_text: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl NistProblem {
    pub fn n_params(&self) -> usize {
        self.certified.len()
    }
}

pub fn read_nist(path: impl AsRef<Path>) -> Result<NistProblem> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not UTF-8 text"))?;
    parse_nist(&text, path)
}

/// `path` is only used in error messages.
pub fn parse_nist(text: &str, path: &Path) -> Result<NistProblem> {
    let fail = |msg: String| Error::format(PathBuf::from(path), msg);
    let num = |s: &str, line: usize| s.parse::<f64>().map_err(|_| fail(format!("line {line}: `{s}` is not a number")));

    let mut name = None;
    let mut difficulty = None;
    let mut model = String::new();
    let mut in_model = false;
    let mut starts = [Vec::new(), Vec::new()];
    let mut certified = Vec::new();
    let mut certified_sd = Vec::new();
    let mut sse_text = None;
    let mut declared_obs = None;
    let mut columns = None;
    let (mut x, mut y) = (Vec::new(), Vec::new());

    for (i, line) in text.lines().enumerate() {
        let lno = i + 1;
        let t: Vec<&str> = line.split_whitespace().collect();
        if let Some(cols) = columns {
            if t.is_empty() {
                continue;
            }
            if t.len() != cols {
                return Err(fail(format!("line {lno}: expected {cols} columns, got {}", t.len())));
            }
            y.push(num(t[0], lno)?);
            x.push(num(t[1], lno)?);
            continue;
        }
        let trimmed = line.trim();
        if in_model {
            if trimmed.is_empty() || trimmed.starts_with("Starting") {
                in_model = model.is_empty();
            } else if trimmed.contains('=') || !model.is_empty() {
                if !model.is_empty() {
                    model.push(' ');
                }
                model.push_str(trimmed);
            }
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("Dataset Name:") {
            name = rest.split_whitespace().next().map(str::to_string);
        } else if trimmed.starts_with("Model:") {
            in_model = true;
        } else if trimmed.contains("Level of Difficulty") {
            difficulty = Some(match t[0] {
                "Lower" => Difficulty::Lower,
                "Average" => Difficulty::Average,
                "Higher" => Difficulty::Higher,
                w => return Err(fail(format!("line {lno}: unknown difficulty `{w}`"))),
            });
        } else if t.len() == 6 && t[1] == "=" && is_param(t[0], certified.len() + 1) {
            starts[0].push(num(t[2], lno)?);
            starts[1].push(num(t[3], lno)?);
            certified.push(num(t[4], lno)?);
            certified_sd.push(num(t[5], lno)?);
        } else if trimmed.starts_with("Residual Sum of Squares:") {
            sse_text = t.last().map(|s| s.to_string());
        } else if trimmed.starts_with("Number of Observations:") {
            declared_obs = Some(num(t[t.len() - 1], lno)? as usize);
        } else if t.first() == Some(&"Data:") && t.len() >= 3 && t[1] == "y" {
            if t.len() != 3 {
                return Err(fail(format!("{} predictor columns; only univariate problems are supported", t.len() - 2)));
            }
            columns = Some(3 - 1);
        }
    }

    let name = name.ok_or_else(|| fail("missing dataset name".into()))?;
    let difficulty = difficulty.ok_or_else(|| fail("missing difficulty level".into()))?;
    if certified.is_empty() {
        return Err(fail("no parameter lines".into()));
    }
    let sse_text = sse_text.ok_or_else(|| fail("missing certified residual sum of squares".into()))?;
    let certified_sse = num(&sse_text, 0)?;
    if columns.is_none() || y.is_empty() {
        return Err(fail("missing data section".into()));
    }
    if let Some(n) = declared_obs {
        if n != y.len() {
            return Err(fail(format!("{} observations, header declares {n}", y.len())));
        }
    }
    if model.is_empty() {
        return Err(fail("missing model formula".into()));
    }
    Ok(NistProblem {
        name,
        difficulty,
        model,
        starts,
        certified,
        certified_sd,
        certified_sse,
        certified_sse_text: sse_text,
        x,
        y,
    })
}

/// `b<k>` with the expected index, so formula lines are never mistaken for parameters.
fn is_param(tok: &str, k: usize) -> bool {
    tok.strip_prefix('b').and_then(|d| d.parse::<usize>().ok()) == Some(k)
}
