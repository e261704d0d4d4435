//! Dataset directories: XYZL files plus a `manifest.csv` describing them.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pointsift::data::{load_xyzl, Scene};
use pointsift::PointCloud;

use crate::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.csv";
pub const MANIFEST_HEADER: &str = "filename,shapes,scales,seed";

/// One manifest line.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub filename: String,
    pub shapes: Vec<String>,
    pub scales: Vec<f64>,
    pub seed: u64,
}

impl ManifestRow {
    /// Row for `scene`, generated from `seed`.
    pub fn for_scene(filename: String, scene: &Scene, seed: u64) -> Self {
        ManifestRow {
            filename,
            shapes: scene.specs.iter().map(|s| s.kind.name().to_string()).collect(),
            scales: scene.specs.iter().map(|s| s.scale).collect(),
            seed,
        }
    }
}

pub fn format_manifest(rows: &[ManifestRow]) -> String {
    let mut s = format!("{MANIFEST_HEADER}\n");
    for r in rows {
        let scales: Vec<String> = r.scales.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{},{},{},{}", r.filename, r.shapes.join(";"), scales.join(";"), r.seed);
    }
    s
}

pub fn parse_manifest(text: &str) -> CliResult<Vec<ManifestRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MANIFEST_HEADER) {
        return Err(CliError::usage(format!("manifest must start with `{MANIFEST_HEADER}`")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| CliError::usage(format!("manifest line {}: {what}", i + 2));
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        let scales = cols[2]
            .split(';')
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad("bad scale"))?;
        rows.push(ManifestRow {
            filename: cols[0].to_string(),
            shapes: cols[1].split(';').map(str::to_string).collect(),
            scales,
            seed: cols[3].parse().map_err(|_| bad("bad seed"))?,
        });
    }
    Ok(rows)
}

pub fn read_manifest(dir: &Path) -> CliResult<Option<Vec<ManifestRow>>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    parse_manifest(&text).map(Some)
}

/// File names of a dataset directory: manifest order when a manifest is
/// present, otherwise every `.xyzl` file sorted by name.
pub fn list(dir: &Path) -> CliResult<Vec<String>> {
    if let Some(rows) = read_manifest(dir)? {
        return Ok(rows.into_iter().map(|r| r.filename).collect());
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".xyzl"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::usage(format!("{} holds no .xyzl files", dir.display())));
    }
    Ok(names)
}

/// Loads every scene of a dataset directory, returning names alongside.
pub fn load(dir: &Path) -> CliResult<(Vec<String>, Vec<PointCloud>)> {
    let names = list(dir)?;
    let clouds = names
        .iter()
        .map(|n| load_xyzl(&dir.join(n)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((names, clouds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let rows = vec![
            ManifestRow {
                filename: "scene_00000.xyzl".into(),
                shapes: vec!["sphere".into(), "plane".into()],
                scales: vec![0.4171, 2.0],
                seed: 17,
            },
            ManifestRow {
                filename: "scene_00001.xyzl".into(),
                shapes: vec!["cuboid".into()],
                scales: vec![0.1 + 0.2],
                seed: u64::MAX,
            },
        ];
        assert_eq!(parse_manifest(&format_manifest(&rows)).unwrap(), rows);
    }

    #[test]
    fn rejects_a_foreign_header() {
        assert!(parse_manifest("name,seed\n").is_err());
    }
}
