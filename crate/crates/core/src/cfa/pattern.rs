//! Color filter array tiles and their plane layouts.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::svec::{svec_pattern, SvecConfig};

pub type Rgb = [f64; 3];

const RED: Rgb = [1.0, 0.0, 0.0];
const GREEN: Rgb = [0.0, 1.0, 0.0];
const BLUE: Rgb = [0.0, 0.0, 1.0];

const CYAN: Rgb = [0.0, 1.0, 1.0];
const YELLOW: Rgb = [1.0, 1.0, 0.0];
const MAGENTA: Rgb = [1.0, 0.0, 1.0];

// CSS named colors, scaled to [0, 1].
const DEEP_PINK: Rgb = [1.0, 0.078, 0.576];
const SPRING_GREEN: Rgb = [0.0, 1.0, 0.498];
const SLATE_BLUE: Rgb = [0.416, 0.353, 0.804];
const CHARTREUSE: Rgb = [0.498, 1.0, 0.0];

pub const BUILTIN_NAMES: [&str; 5] = ["bayer", "diagonal_stripe", "cygm", "hirakawa", "svec"];

/// An `tile_h x tile_w` repeating tile of per-cell RGB filter weights with an
/// exposure multiplier per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CfaPattern {
    pub name: String,
    pub tile_h: usize,
    pub tile_w: usize,
    /// Row-major, `tile_h * tile_w` entries.
    pub filters: Vec<Rgb>,
    pub exposures: Vec<f64>,
}

impl CfaPattern {
    pub fn new(
        name: impl Into<String>,
        tile_h: usize,
        tile_w: usize,
        filters: Vec<Rgb>,
        exposures: Option<Vec<f64>>,
    ) -> Result<Self> {
        let cells = tile_h * tile_w;
        let p = CfaPattern {
            name: name.into(),
            tile_h,
            tile_w,
            exposures: exposures.unwrap_or_else(|| vec![1.0; cells]),
            filters,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tile_h == 0 || self.tile_w == 0 {
            return Err(Error::InvalidPattern(format!(
                "tile must be at least 1x1, got {}x{}",
                self.tile_h, self.tile_w
            )));
        }
        let cells = self.tile_h * self.tile_w;
        if self.filters.len() != cells || self.exposures.len() != cells {
            return Err(Error::InvalidPattern(format!(
                "{}x{} tile needs {cells} cells, got {} filters and {} exposures",
                self.tile_h,
                self.tile_w,
                self.filters.len(),
                self.exposures.len()
            )));
        }
        for (i, f) in self.filters.iter().enumerate() {
            if f.iter().any(|w| !(0.0..=1.0).contains(w)) {
                return Err(Error::InvalidPattern(format!(
                    "cell {i} filter {f:?} outside [0, 1]"
                )));
            }
        }
        for (i, &e) in self.exposures.iter().enumerate() {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::InvalidPattern(format!(
                    "cell {i} exposure {e} must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "bayer" => Self::bayer(),
            "diagonal_stripe" => {
                let primaries = [RED, GREEN, BLUE];
                let filters = (0..3)
                    .flat_map(|r| (0..3).map(move |c| primaries[(c + 3 - r) % 3]))
                    .collect();
                Self::new(name, 3, 3, filters, None)
            }
            "cygm" => Self::new(name, 2, 2, vec![CYAN, YELLOW, GREEN, MAGENTA], None),
            "hirakawa" => {
                let row = [DEEP_PINK, SPRING_GREEN, SLATE_BLUE, CHARTREUSE];
                let filters = (0..2)
                    .flat_map(|r| (0..4).map(move |c| row[(c + 2 * r) % 4]))
                    .collect();
                Self::new(name, 2, 4, filters, None)
            }
            "svec" => Ok(svec_pattern(&SvecConfig::default())),
            other => Err(Error::UnknownPattern(other.to_string())),
        }
    }

    /// The 2x2 Bayer tile `[G R; B G]`.
    pub fn bayer() -> Result<Self> {
        Self::new("bayer", 2, 2, vec![GREEN, RED, BLUE, GREEN], None)
    }

    /// Same layout with the tile origin moved so that new cell `(y, x)` is old
    /// cell `(y + dy, x + dx)` modulo the tile.
    pub fn shifted(&self, dy: usize, dx: usize) -> Self {
        let mut out = self.clone();
        for y in 0..self.tile_h {
            for x in 0..self.tile_w {
                let src = self.cell_index(y + dy, x + dx);
                out.filters[y * self.tile_w + x] = self.filters[src];
                out.exposures[y * self.tile_w + x] = self.exposures[src];
            }
        }
        out
    }

    #[inline]
    pub fn cell_index(&self, y: usize, x: usize) -> usize {
        (y % self.tile_h) * self.tile_w + (x % self.tile_w)
    }

    pub fn cell_count(&self) -> usize {
        self.tile_h * self.tile_w
    }

    /// Planes shared by cells with identical filter and exposure.
    ///
    /// Planes are ordered by exposure (ascending) and then filter
    /// (descending lexicographic), which puts R, G, B in that order.
    pub fn plane_layout(&self) -> PlaneLayout {
        let mut keys: Vec<(f64, Rgb)> = Vec::new();
        for (f, &e) in self.filters.iter().zip(&self.exposures) {
            if !keys.iter().any(|(ke, kf)| *ke == e && kf == f) {
                keys.push((e, *f));
            }
        }
        keys.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal))
        });
        let cell_plane = self
            .filters
            .iter()
            .zip(&self.exposures)
            .map(|(f, &e)| {
                keys.iter()
                    .position(|(ke, kf)| *ke == e && kf == f)
                    .expect("key present")
            })
            .collect();
        PlaneLayout {
            tile_h: self.tile_h,
            tile_w: self.tile_w,
            cell_plane,
            filters: keys.iter().map(|k| k.1).collect(),
            exposures: keys.iter().map(|k| k.0).collect(),
        }
    }

    /// One plane per cell, in row-major cell order.
    pub fn per_cell_layout(&self) -> PlaneLayout {
        PlaneLayout {
            tile_h: self.tile_h,
            tile_w: self.tile_w,
            cell_plane: (0..self.cell_count()).collect(),
            filters: self.filters.clone(),
            exposures: self.exposures.clone(),
        }
    }

    pub fn plane_count(&self) -> usize {
        self.plane_layout().planes()
    }

    /// Serializes to the pattern text format.
    ///
    /// ```text
    /// # comment
    /// name bayer
    /// tile 2 2
    /// 0 1 0
    /// 1 0 0
    /// 0 0 1
    /// 0 1 0 1
    /// ```
    ///
    /// `tile <rows> <cols>` is followed by one line per cell in row-major
    /// order, each `r g b [exposure]` (exposure defaults to 1).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "name {}", self.name).unwrap();
        writeln!(s, "tile {} {}", self.tile_h, self.tile_w).unwrap();
        for (f, e) in self.filters.iter().zip(&self.exposures) {
            write!(s, "{} {} {}", f[0], f[1], f[2]).unwrap();
            if *e != 1.0 {
                write!(s, " {e}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut name = String::from("custom");
        let mut tile: Option<(usize, usize)> = None;
        let mut filters = Vec::new();
        let mut exposures = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad =
                |msg: &str| Error::Format(format!("pattern line {}: {msg}: `{raw}`", lineno + 1));
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap_or_default();
            match head {
                "name" => {
                    name = parts.collect::<Vec<_>>().join(" ");
                }
                "tile" => {
                    let dims: Vec<usize> = parts
                        .map(|p| p.parse().map_err(|_| bad("tile dims must be integers")))
                        .collect::<Result<_>>()?;
                    if dims.len() != 2 {
                        return Err(bad("expected `tile <rows> <cols>`"));
                    }
                    tile = Some((dims[0], dims[1]));
                }
                _ => {
                    if tile.is_none() {
                        return Err(bad("cell before `tile` line"));
                    }
                    let vals: Vec<f64> = line
                        .split_whitespace()
                        .map(|p| p.parse().map_err(|_| bad("expected decimal numbers")))
                        .collect::<Result<_>>()?;
                    match vals.len() {
                        3 => exposures.push(1.0),
                        4 => exposures.push(vals[3]),
                        _ => return Err(bad("cell needs `r g b [exposure]`")),
                    }
                    filters.push([vals[0], vals[1], vals[2]]);
                }
            }
        }
        let (h, w) = tile.ok_or_else(|| Error::Format("pattern has no `tile` line".into()))?;
        if filters.len() != h * w {
            return Err(Error::Format(format!(
                "pattern declares {h}x{w} tile but lists {} cells",
                filters.len()
            )));
        }
        Self::new(name, h, w, filters, Some(exposures))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Builtin name, optionally with a tile phase as `name@dy,dx`, or a path
    /// to a pattern file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if BUILTIN_NAMES.contains(&name_or_path) {
            return Self::builtin(name_or_path);
        }
        if let Some((name, phase)) = name_or_path.split_once('@') {
            if BUILTIN_NAMES.contains(&name) {
                let shift: Vec<usize> = phase
                    .split(',')
                    .map(|v| v.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::UnknownPattern(name_or_path.to_string()))?;
                if shift.len() != 2 {
                    return Err(Error::UnknownPattern(name_or_path.to_string()));
                }
                let mut p = Self::builtin(name)?.shifted(shift[0], shift[1]);
                p.name = name_or_path.to_string();
                return Ok(p);
            }
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::load(path);
        }
        Err(Error::UnknownPattern(name_or_path.to_string()))
    }
}

/// Assignment of tile cells to planes of a [`PlaneStack`](super::PlaneStack).
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneLayout {
    pub tile_h: usize,
    pub tile_w: usize,
    pub cell_plane: Vec<usize>,
    /// Filter of each plane.
    pub filters: Vec<Rgb>,
    /// Exposure of each plane.
    pub exposures: Vec<f64>,
}

impl PlaneLayout {
    pub fn planes(&self) -> usize {
        self.filters.len()
    }

    #[inline]
    pub fn cell(&self, y: usize, x: usize) -> usize {
        (y % self.tile_h) * self.tile_w + (x % self.tile_w)
    }

    #[inline]
    pub fn plane_at(&self, y: usize, x: usize) -> usize {
        self.cell_plane[self.cell(y, x)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bayer_layout() {
        let p = CfaPattern::builtin("bayer").unwrap();
        assert_eq!(p.filters[1], [1.0, 0.0, 0.0]);
        let l = p.plane_layout();
        assert_eq!(l.planes(), 3);
        assert_eq!(l.filters, vec![RED, GREEN, BLUE]);
        assert_eq!(l.cell_plane, vec![1, 0, 2, 1]);
    }

    #[test]
    fn builtin_plane_counts() {
        let k = |n: &str| CfaPattern::builtin(n).unwrap().plane_count();
        assert_eq!(k("diagonal_stripe"), 3);
        assert_eq!(k("cygm"), 4);
        assert_eq!(k("hirakawa"), 4);
        assert_eq!(k("svec"), 6);
        let h = CfaPattern::builtin("hirakawa").unwrap();
        assert_eq!((h.tile_w, h.tile_h), (4, 2));
    }

    #[test]
    fn diagonal_stripe_rows_rotate() {
        let p = CfaPattern::builtin("diagonal_stripe").unwrap();
        for r in 1..3 {
            for c in 0..3 {
                assert_eq!(p.filters[r * 3 + c], p.filters[(r - 1) * 3 + (c + 2) % 3]);
            }
        }
        assert_eq!(p.filters[0..3], [RED, GREEN, BLUE]);
    }

    #[test]
    fn hirakawa_second_row_rotated_by_two() {
        let p = CfaPattern::builtin("hirakawa").unwrap();
        assert_eq!(p.filters[4], SLATE_BLUE);
        assert_eq!(p.filters[6], DEEP_PINK);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(
            CfaPattern::builtin("xtrans"),
            Err(Error::UnknownPattern(_))
        ));
    }

    #[test]
    fn invalid_patterns_rejected() {
        assert!(CfaPattern::new("x", 1, 1, vec![[1.2, 0.0, 0.0]], None).is_err());
        assert!(CfaPattern::new("x", 1, 1, vec![[1.0, 0.0, 0.0]], Some(vec![0.0])).is_err());
        assert!(CfaPattern::new("x", 2, 1, vec![[1.0, 0.0, 0.0]], None).is_err());
        assert!(CfaPattern::new("x", 0, 1, vec![], None).is_err());
    }

    #[test]
    fn text_round_trip_for_builtins() {
        for name in BUILTIN_NAMES {
            let p = CfaPattern::builtin(name).unwrap();
            assert_eq!(CfaPattern::parse_text(&p.to_text()).unwrap(), p);
        }
    }

    #[test]
    fn text_parse_errors() {
        assert!(CfaPattern::parse_text("0 1 0\n").is_err());
        assert!(CfaPattern::parse_text("tile 1 2\n0 1 0\n").is_err());
        assert!(CfaPattern::parse_text("tile 1 1\n0 x 0\n").is_err());
        let p = CfaPattern::parse_text("# hi\ntile 1 1\n0.5 0.5 0.5 2 # tail\n").unwrap();
        assert_eq!(p.exposures, vec![2.0]);
    }

    #[test]
    fn shift_moves_origin() {
        let p = CfaPattern::bayer().unwrap().shifted(0, 1);
        let named = CfaPattern::resolve("bayer@0,1").unwrap();
        assert_eq!(named.filters, p.filters);
        assert!(CfaPattern::resolve("bayer@1").is_err());
        assert_eq!(p.filters, vec![RED, GREEN, GREEN, BLUE]);
    }
}
