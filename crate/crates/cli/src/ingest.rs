//! CSV ingestion with per-column domain and unit tags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use twcm::angle::wrap;
use twcm::{Domain, Family, Observation};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Radians,
    Degrees,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub domain: Domain,
    pub unit: Unit,
}

/// Three named columns, written `name:domain[:unit]` and comma separated,
/// e.g. `phi:circular:degrees,psi:circular,height:linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub columns: Vec<Column>,
}

impl FromStr for ColumnSpec {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let columns = s
            .split(',')
            .map(|part| {
                let fields: Vec<&str> = part.trim().split(':').collect();
                if fields.is_empty() || fields.len() > 3 || fields[0].is_empty() {
                    return Err(CliError::input(format!("bad column spec `{part}`")));
                }
                let domain = match fields.get(1).copied().unwrap_or("circular") {
                    "circular" => Domain::Circular,
                    "linear" => Domain::Linear,
                    other => return Err(CliError::input(format!("unknown domain `{other}` in `{part}`"))),
                };
                let unit = match fields.get(2).copied() {
                    None | Some("radians") | Some("rad") => Unit::Radians,
                    Some("degrees") | Some("deg") => Unit::Degrees,
                    Some(other) => return Err(CliError::input(format!("unknown unit `{other}` in `{part}`"))),
                };
                if domain == Domain::Linear && unit == Unit::Degrees {
                    return Err(CliError::input(format!("linear column `{}` cannot be in degrees", fields[0])));
                }
                Ok(Column {
                    name: fields[0].to_string(),
                    domain,
                    unit,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        if columns.len() != 3 {
            return Err(CliError::input(format!("expected 3 columns, got {}", columns.len())));
        }
        Ok(ColumnSpec { columns })
    }
}

impl ColumnSpec {
    /// Check the declared domains against the families to be fitted.
    pub fn check_families(&self, families: [Family; 3]) -> CliResult<()> {
        for (c, f) in self.columns.iter().zip(families) {
            if c.domain != f.domain() {
                return Err(CliError::input(format!(
                    "column `{}` is {} but marginal {} needs {} data",
                    c.name,
                    c.domain,
                    f,
                    f.domain()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: Vec<Observation>,
    pub rejected: Vec<Rejection>,
}

/// Read three columns from `path`. Without a spec the first three columns are
/// used with the given default domains (radians). Lines starting with `#` are
/// comments.
pub fn ingest(path: &Path, spec: Option<&ColumnSpec>, default_domains: [Domain; 3]) -> CliResult<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path.display().to_string(), io),
            other => CliError::input(format!("{}: {other:?}", path.display())),
        })?;
    let headers = reader.headers()?.clone();
    let (indices, columns): (Vec<usize>, Vec<Column>) = match spec {
        Some(spec) => spec
            .columns
            .iter()
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h == c.name)
                    .map(|i| (i, c.clone()))
                    .ok_or_else(|| CliError::input(format!("column `{}` not found in {}", c.name, path.display())))
            })
            .collect::<CliResult<Vec<_>>>()?
            .into_iter()
            .unzip(),
        None => {
            if headers.len() < 3 {
                return Err(CliError::input(format!("{} has fewer than 3 columns", path.display())));
            }
            (0..3)
                .map(|i| {
                    (
                        i,
                        Column {
                            name: headers[i].to_string(),
                            domain: default_domains[i],
                            unit: Unit::Radians,
                        },
                    )
                })
                .unzip()
        }
    };

    let mut rows = Vec::new();
    let mut rejected = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let mut obs = [0.0; 3];
        let mut problem = None;
        for (k, (&idx, col)) in indices.iter().zip(&columns).enumerate() {
            let Some(raw) = record.get(idx).filter(|s| !s.is_empty()) else {
                problem = Some(format!("missing value in column `{}`", col.name));
                break;
            };
            let Ok(v) = raw.parse::<f64>() else {
                problem = Some(format!("non-numeric value `{raw}` in column `{}`", col.name));
                break;
            };
            if !v.is_finite() {
                problem = Some(format!("non-finite value in column `{}`", col.name));
                break;
            }
            obs[k] = match (col.domain, col.unit) {
                (Domain::Circular, Unit::Degrees) => wrap(v.to_radians()),
                (Domain::Circular, Unit::Radians) => wrap(v),
                (Domain::Linear, _) if v > 0.0 => v,
                (Domain::Linear, _) => {
                    problem = Some(format!("value {v} in linear column `{}` is not positive", col.name));
                    break;
                }
            };
        }
        match problem {
            Some(reason) => rejected.push(Rejection { line, reason }),
            None => rows.push(obs),
        }
    }
    if rows.is_empty() {
        return Err(CliError::input(format!(
            "{}: no valid rows ({} rejected)",
            path.display(),
            rejected.len()
        )));
    }
    Ok(Dataset { rows, rejected })
}
