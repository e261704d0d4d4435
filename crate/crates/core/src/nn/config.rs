//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::FpsStart;

/// Parsed `key = value` lines. `#` starts a comment.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            if entries.insert(k.to_string(), (line_no, v.trim().to_string())).is_some() {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(KeyValues {
            entries,
            used: Default::default(),
        })
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        let e = self.entries.get(key);
        if e.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        e
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|_| Error::Config {
                line: *line,
                message: format!("cannot parse `{v}` for `{key}`"),
            }),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse().map_err(|_| Error::Config {
                        line: *line,
                        message: format!("cannot parse list item `{s}` for `{key}`"),
                    })
                })
                .collect(),
        }
    }

    /// Comma-separated modules, each a `:`-separated dim list or `-` for none.
    fn get_modules(&self, key: &str, default: Vec<Option<Vec<usize>>>) -> Result<Vec<Option<Vec<usize>>>> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v
                .split(',')
                .map(|m| m.trim())
                .filter(|m| !m.is_empty())
                .map(|m| {
                    if m == "-" {
                        return Ok(None);
                    }
                    m.split(':')
                        .map(|d| {
                            d.trim().parse().map_err(|_| Error::Config {
                                line: *line,
                                message: format!("bad module dims `{m}` for `{key}`"),
                            })
                        })
                        .collect::<Result<Vec<usize>>>()
                        .map(Some)
                })
                .collect(),
        }
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map(|e| e.0).unwrap_or(0)
    }

    /// Fails on the first key no consumer asked for.
    pub fn ensure_all_used(&self) -> Result<()> {
        let used = self.used.borrow();
        for (k, (line, _)) in &self.entries {
            if !used.contains(k) {
                return Err(Error::Config {
                    line: *line,
                    message: format!("unknown key `{k}`"),
                });
            }
        }
        Ok(())
    }
}

/// Which neighborhood block sits next to each SA/FP layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Stacked orientation-encoding units with fused outputs.
    PointSift,
    /// Ball-query grouping followed by a point-wise convolution over the group.
    BallConv,
    /// Plain SA/FP network.
    None,
}

impl FromStr for BlockKind {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "pointsift" => Ok(BlockKind::PointSift),
            "ball_conv" => Ok(BlockKind::BallConv),
            "none" => Ok(BlockKind::None),
            _ => Err(()),
        }
    }
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::PointSift => "pointsift",
            BlockKind::BallConv => "ball_conv",
            BlockKind::None => "none",
        }
    }
}

/// Architecture of the segmentation network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_points: usize,
    pub num_classes: usize,
    pub use_rgb: bool,
    /// Centroid count of each SA stage.
    pub stage_sizes: Vec<usize>,
    /// Feature width per level; one more entry than `stage_sizes`.
    pub channel_widths: Vec<usize>,
    /// Neighborhood radius per level for the inserted blocks.
    pub oe_radii: Vec<f64>,
    pub block: BlockKind,
    /// OE output dims of the block before each SA stage (`None`: no block).
    pub down_oe_dims: Vec<Option<Vec<usize>>>,
    /// Block after each FP stage, listed from the coarsest level down.
    pub up_oe_dims: Vec<Option<Vec<usize>>>,
    /// Block at the coarsest level, between the encoder and decoder.
    pub bottleneck_oe_dims: Option<Vec<usize>>,
    pub ball_conv_k: usize,
    pub max_k: usize,
    pub sa_radii: Vec<f64>,
    pub sa_mlp_layers: usize,
    pub fp_mlp_layers: usize,
    pub seed: u64,
    pub fps_canonical: bool,
    pub relative_coords_only: bool,
    pub fusion_activation: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let widths = vec![32, 64, 128, 256];
        NetworkConfig {
            input_points: 1024,
            num_classes: 3,
            use_rgb: false,
            stage_sizes: vec![256, 64, 16],
            down_oe_dims: widths[..3].iter().map(|&w| Some(vec![w, w])).collect(),
            up_oe_dims: vec![Some(vec![128, 128]), Some(vec![64, 64]), None],
            bottleneck_oe_dims: None,
            channel_widths: widths,
            oe_radii: vec![0.1, 0.2, 0.4, 0.8],
            block: BlockKind::PointSift,
            ball_conv_k: 8,
            max_k: 32,
            sa_radii: vec![0.2, 0.4, 0.8],
            sa_mlp_layers: 1,
            fp_mlp_layers: 1,
            seed: 1,
            fps_canonical: true,
            relative_coords_only: false,
            fusion_activation: true,
        }
    }
}

impl NetworkConfig {
    pub fn stages(&self) -> usize {
        self.stage_sizes.len()
    }

    /// Point count at each level, input level first.
    pub fn level_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_points).chain(self.stage_sizes.iter().copied()).collect()
    }

    pub fn input_dim(&self) -> usize {
        let base = if self.relative_coords_only { 1 } else { 3 };
        base + if self.use_rgb { 3 } else { 0 }
    }

    pub fn fps_start(&self) -> FpsStart {
        if self.fps_canonical {
            FpsStart::Canonical
        } else {
            FpsStart::Seeded(self.seed)
        }
    }

    /// Replaces every block dim list with `[width, width]` of its level.
    pub fn with_uniform_blocks(mut self, units: usize, up_levels: usize) -> Self {
        let s = self.stages();
        let w = &self.channel_widths;
        self.down_oe_dims = (0..s).map(|l| Some(vec![w[l]; units])).collect();
        self.up_oe_dims = (0..s)
            .map(|j| {
                let level = s - 1 - j;
                (j < up_levels).then(|| vec![w[level]; units])
            })
            .collect();
        self
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let d = NetworkConfig::default();
        let fps: String = kv.get("fps_start", "canonical".to_string())?;
        let depthwise: bool = kv.get("oec_depthwise", false)?;
        if depthwise {
            return Err(Error::Config {
                line: kv.line_of("oec_depthwise"),
                message: "oec_depthwise is reserved and not implemented".into(),
            });
        }
        let block: String = kv.get("block", "pointsift".to_string())?;
        let bottleneck = kv.get_modules("bottleneck_oe_dims", vec![None])?;
        let cfg = NetworkConfig {
            input_points: kv.get("input_points", d.input_points)?,
            num_classes: kv.get("num_classes", d.num_classes)?,
            use_rgb: kv.get("use_rgb", d.use_rgb)?,
            stage_sizes: kv.get_list("stage_sizes", d.stage_sizes.clone())?,
            channel_widths: kv.get_list("channel_widths", d.channel_widths.clone())?,
            oe_radii: kv.get_list("oe_radii", d.oe_radii.clone())?,
            block: block.parse().map_err(|_| Error::Config {
                line: kv.line_of("block"),
                message: format!("unknown block `{block}` (pointsift | ball_conv | none)"),
            })?,
            down_oe_dims: kv.get_modules("down_oe_dims", d.down_oe_dims.clone())?,
            up_oe_dims: kv.get_modules("up_oe_dims", d.up_oe_dims.clone())?,
            bottleneck_oe_dims: bottleneck.into_iter().next().flatten(),
            ball_conv_k: kv.get("ball_conv_k", d.ball_conv_k)?,
            max_k: kv.get("max_k", d.max_k)?,
            sa_radii: kv.get_list("sa_radii", d.sa_radii.clone())?,
            sa_mlp_layers: kv.get("sa_mlp_layers", d.sa_mlp_layers)?,
            fp_mlp_layers: kv.get("fp_mlp_layers", d.fp_mlp_layers)?,
            seed: kv.get("seed", d.seed)?,
            fps_canonical: match fps.as_str() {
                "canonical" => true,
                "seeded" => false,
                other => {
                    return Err(Error::Config {
                        line: kv.line_of("fps_start"),
                        message: format!("unknown fps_start `{other}` (canonical | seeded)"),
                    })
                }
            },
            relative_coords_only: kv.get("relative_coords_only", d.relative_coords_only)?,
            fusion_activation: kv.get("fusion_activation", d.fusion_activation)?,
        };
        cfg.validate().map_err(|e| Error::Config {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.stages();
        let bad = |m: String| Err(Error::invalid(m));
        if s == 0 {
            return bad("at least one SA stage is required".into());
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2".into());
        }
        if self.channel_widths.len() != s + 1 {
            return bad(format!("channel_widths needs {} entries", s + 1));
        }
        if self.oe_radii.len() < s + 1 || self.oe_radii.iter().any(|&r| !(r > 0.0)) {
            return bad(format!("oe_radii needs {} positive entries", s + 1));
        }
        if self.sa_radii.len() != s || self.sa_radii.iter().any(|&r| !(r > 0.0)) {
            return bad(format!("sa_radii needs {s} positive entries"));
        }
        if self.down_oe_dims.len() != s || self.up_oe_dims.len() != s {
            return bad(format!("down_oe_dims and up_oe_dims need {s} entries each"));
        }
        let mut prev = self.input_points;
        for &m in &self.stage_sizes {
            if m == 0 || m > prev {
                return bad(format!("stage sizes must shrink: {:?}", self.stage_sizes));
            }
            prev = m;
        }
        if self.channel_widths.contains(&0) || self.max_k == 0 || self.ball_conv_k == 0 {
            return bad("widths, max_k and ball_conv_k must be positive".into());
        }
        if self.sa_mlp_layers == 0 || self.fp_mlp_layers == 0 {
            return bad("sa_mlp_layers and fp_mlp_layers must be positive".into());
        }
        let dims = self.down_oe_dims.iter().chain(&self.up_oe_dims).chain(std::iter::once(&self.bottleneck_oe_dims));
        for d in dims.flatten() {
            if d.is_empty() || d.contains(&0) {
                return bad("block dims must be non-empty and positive".into());
            }
        }
        Ok(())
    }

    /// Renders the configuration in the same `key = value` format it is read from.
    pub fn to_text(&self) -> String {
        fn list<T: std::fmt::Display>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        }
        fn modules(v: &[Option<Vec<usize>>]) -> String {
            v.iter()
                .map(|m| match m {
                    None => "-".to_string(),
                    Some(d) => d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":"),
                })
                .collect::<Vec<_>>()
                .join(", ")
        }
        let mut s = String::new();
        let _ = writeln!(s, "input_points = {}", self.input_points);
        let _ = writeln!(s, "num_classes = {}", self.num_classes);
        let _ = writeln!(s, "use_rgb = {}", self.use_rgb);
        let _ = writeln!(s, "stage_sizes = {}", list(&self.stage_sizes));
        let _ = writeln!(s, "channel_widths = {}", list(&self.channel_widths));
        let _ = writeln!(s, "oe_radii = {}", list(&self.oe_radii));
        let _ = writeln!(s, "block = {}", self.block.as_str());
        let _ = writeln!(s, "down_oe_dims = {}", modules(&self.down_oe_dims));
        let _ = writeln!(s, "up_oe_dims = {}", modules(&self.up_oe_dims));
        let _ = writeln!(s, "bottleneck_oe_dims = {}", modules(std::slice::from_ref(&self.bottleneck_oe_dims)));
        let _ = writeln!(s, "ball_conv_k = {}", self.ball_conv_k);
        let _ = writeln!(s, "max_k = {}", self.max_k);
        let _ = writeln!(s, "sa_radii = {}", list(&self.sa_radii));
        let _ = writeln!(s, "sa_mlp_layers = {}", self.sa_mlp_layers);
        let _ = writeln!(s, "fp_mlp_layers = {}", self.fp_mlp_layers);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "fps_start = {}", if self.fps_canonical { "canonical" } else { "seeded" });
        let _ = writeln!(s, "relative_coords_only = {}", self.relative_coords_only);
        let _ = writeln!(s, "fusion_activation = {}", self.fusion_activation);
        s
    }
}
