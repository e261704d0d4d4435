//! Plain-text labeled point files.
//!
//! One point per line: `x y z label` or `x y z r g b label`, whitespace
//! separated; `#` starts a comment. A file may not mix the two layouts.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

pub fn parse_xyzl(text: &str) -> Result<PointCloud> {
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut labels = Vec::new();
    let mut columns: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 && fields.len() != 7 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 or 7 columns, found {}", fields.len()),
            });
        }
        match columns {
            None => columns = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(Error::Format(format!(
                    "line {line_no} has {} columns but earlier lines have {c}",
                    fields.len()
                )))
            }
            _ => {}
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("invalid number `{s}`"),
                })
        };
        positions.push([num(fields[0])?, num(fields[1])?, num(fields[2])?]);
        if fields.len() == 7 {
            colors.push([num(fields[3])?, num(fields[4])?, num(fields[5])?]);
        }
        let label = fields[fields.len() - 1];
        labels.push(label.parse::<u32>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("invalid label `{label}`"),
        })?);
    }
    if positions.is_empty() {
        return Err(Error::Parse {
            line: text.lines().count(),
            message: "no points".into(),
        });
    }
    let mut cloud = PointCloud::new(positions)?.with_labels(labels)?;
    if columns == Some(7) {
        cloud = cloud.with_colors(colors)?;
    }
    Ok(cloud)
}

/// Renders a labeled cloud; values carry 17 significant digits.
pub fn format_xyzl(cloud: &PointCloud) -> Result<String> {
    let labels = cloud
        .labels()
        .ok_or_else(|| Error::invalid("cannot write an unlabeled cloud as XYZL"))?;
    let mut s = String::with_capacity(cloud.len() * 80);
    for (i, p) in cloud.positions().iter().enumerate() {
        let _ = write!(s, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]);
        if let Some(c) = cloud.colors() {
            let _ = write!(s, " {:.16e} {:.16e} {:.16e}", c[i][0], c[i][1], c[i][2]);
        }
        let _ = writeln!(s, " {}", labels[i]);
    }
    Ok(s)
}

pub fn load_xyzl(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_xyzl(&text)
}

pub fn save_xyzl(cloud: &PointCloud, path: &Path) -> Result<()> {
    std::fs::write(path, format_xyzl(cloud)?).map_err(|e| Error::io(path, e))
}
