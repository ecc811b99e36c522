//! Grid file format for unit potentials.
//!
//! ```text
//! HELIOTRAP-ALPHA v1
//! electrode=<name>
//! nx=<int> ny=<int> x0=<float> y0=<float> dx=<float> dy=<float>
//! <ny rows of nx space-separated values, y increasing row by row>
//! ```
//!
//! Lengths are micrometers. Values are written with Rust's shortest
//! round-trip float formatting, so save → load reproduces bit-identical
//! grids. Unknown versions are rejected.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::{GridGeometry, PotentialField, UnitPotentialGrid};

const MAGIC: &str = "HELIOTRAP-ALPHA";
const VERSION: &str = "v1";

pub fn write_grid<W: Write>(grid: &UnitPotentialGrid, mut w: W) -> Result<()> {
    let g = grid.geometry();
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(w, "electrode={}", grid.electrode())?;
    writeln!(
        w,
        "nx={} ny={} x0={} y0={} dx={} dy={}",
        g.nx, g.ny, g.x0, g.y0, g.dx, g.dy
    )?;
    let mut line = String::new();
    for j in 0..g.ny {
        line.clear();
        for i in 0..g.nx {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{}", grid.node(i, j)));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_grid<R: Read>(r: R) -> Result<UnitPotentialGrid> {
    let mut lines = BufReader::new(r).lines();
    let mut next_line = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::GridFormat(format!("missing {what}")))
            .map(|s| s.trim_end().to_string())
    };

    let header = next_line("header line")?;
    match header.strip_prefix(MAGIC) {
        Some(rest) => {
            let version = rest.trim();
            if version != VERSION {
                return Err(Error::GridFormat(format!(
                    "unsupported grid format version '{version}'"
                )));
            }
        }
        None => {
            return Err(Error::GridFormat(format!(
                "not a {MAGIC} file (header '{header}')"
            )))
        }
    }

    let electrode_line = next_line("electrode line")?;
    let electrode = electrode_line
        .strip_prefix("electrode=")
        .ok_or_else(|| Error::GridFormat(format!("expected electrode=<name>, got '{electrode_line}'")))?
        .to_string();

    let geom_line = next_line("geometry line")?;
    let mut nx = None;
    let mut ny = None;
    let mut x0 = None;
    let mut y0 = None;
    let mut dx = None;
    let mut dy = None;
    for tok in geom_line.split_whitespace() {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| Error::GridFormat(format!("bad geometry token '{tok}'")))?;
        match key {
            "nx" => nx = Some(parse_usize(key, value)?),
            "ny" => ny = Some(parse_usize(key, value)?),
            "x0" => x0 = Some(parse_f64(key, value)?),
            "y0" => y0 = Some(parse_f64(key, value)?),
            "dx" => dx = Some(parse_f64(key, value)?),
            "dy" => dy = Some(parse_f64(key, value)?),
            other => return Err(Error::GridFormat(format!("unknown geometry key '{other}'"))),
        }
    }
    let geom = GridGeometry {
        nx: require(nx, "nx")?,
        ny: require(ny, "ny")?,
        x0: require(x0, "x0")?,
        y0: require(y0, "y0")?,
        dx: require(dx, "dx")?,
        dy: require(dy, "dy")?,
    };

    let mut values = Vec::with_capacity(geom.nx * geom.ny);
    for j in 0..geom.ny {
        let row = next_line(&format!("data row {j}"))?;
        let before = values.len();
        for tok in row.split_whitespace() {
            values.push(parse_f64("value", tok)?);
        }
        let got = values.len() - before;
        if got != geom.nx {
            return Err(Error::GridFormat(format!(
                "row {j} has {got} values, expected {}",
                geom.nx
            )));
        }
    }
    for rest in lines {
        let rest = rest?;
        if !rest.trim().is_empty() {
            return Err(Error::GridFormat("trailing content after grid data".into()));
        }
    }

    UnitPotentialGrid::new(electrode, geom, values)
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::GridFormat(format!("bad integer for {key}: '{value}'")))
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| Error::GridFormat(format!("bad float for {key}: '{value}'")))?;
    if !v.is_finite() {
        return Err(Error::GridFormat(format!("non-finite {key}: '{value}'")));
    }
    Ok(v)
}

fn require<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::GridFormat(format!("geometry line missing {key}")))
}

pub fn save_grid(grid: &UnitPotentialGrid, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_grid(grid, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_grid(path: &Path) -> Result<UnitPotentialGrid> {
    let file = fs::File::open(path)?;
    read_grid(file)
}

/// Load one grid per path and assemble a field (shared-geometry and
/// superposition checks included).
pub fn load_field<P: AsRef<Path>>(paths: &[P]) -> Result<PotentialField> {
    let grids = paths
        .iter()
        .map(|p| load_grid(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    PotentialField::new(grids)
}

/// Write every grid of a field into `dir` as `<electrode>.alpha`.
pub fn save_field(field: &PotentialField, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for grid in field.grids() {
        let path = dir.join(format!("{}.alpha", grid.electrode()));
        save_grid(grid, &path)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grid() -> UnitPotentialGrid {
        let geom = GridGeometry { nx: 5, ny: 4, x0: -1.0, y0: 0.25, dx: 0.5, dy: 0.125 };
        let values: Vec<f64> = (0..20).map(|k| (k as f64) / 19.0 * 0.937).collect();
        UnitPotentialGrid::new("resonator_upper", geom, values).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let grid = sample_grid();
        let mut buf = Vec::new();
        write_grid(&grid, &mut buf).unwrap();
        let back = read_grid(buf.as_slice()).unwrap();
        assert_eq!(back.electrode(), grid.electrode());
        assert_eq!(back.geometry(), grid.geometry());
        for (a, b) in back.values().iter().zip(grid.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn four_by_four_zeros_accepted() {
        let text = "HELIOTRAP-ALPHA v1\nelectrode=bottom\nnx=4 ny=4 x0=0 y0=0 dx=1 dy=1\n\
                    0 0 0 0\n0 0 0 0\n0 0 0 0\n0 0 0 0\n";
        let grid = read_grid(text.as_bytes()).unwrap();
        assert_eq!(grid.electrode(), "bottom");
        assert!(grid.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_unknown_version() {
        let text = "HELIOTRAP-ALPHA v2\nelectrode=bottom\nnx=4 ny=4 x0=0 y0=0 dx=1 dy=1\n";
        let err = read_grid(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn rejects_malformed_header_and_rows() {
        assert!(read_grid("TRAPGRID v1\n".as_bytes()).is_err());
        let missing_key = "HELIOTRAP-ALPHA v1\nelectrode=b\nnx=4 ny=4 x0=0 y0=0 dx=1\n";
        assert!(read_grid(missing_key.as_bytes()).is_err());
        let short_row = "HELIOTRAP-ALPHA v1\nelectrode=b\nnx=4 ny=4 x0=0 y0=0 dx=1 dy=1\n0 0 0\n";
        assert!(read_grid(short_row.as_bytes()).is_err());
        let bad_value = "HELIOTRAP-ALPHA v1\nelectrode=b\nnx=4 ny=4 x0=0 y0=0 dx=1 dy=1\n\
                         0 0 0 nan\n0 0 0 0\n0 0 0 0\n0 0 0 0\n";
        assert!(read_grid(bad_value.as_bytes()).is_err());
    }

    #[test]
    fn file_round_trip_through_field() {
        let dir = tempfile::tempdir().unwrap();
        let geom = GridGeometry { nx: 6, ny: 6, x0: 0.0, y0: 0.0, dx: 0.2, dy: 0.2 };
        let a = UnitPotentialGrid::new("bottom", geom, vec![0.25; 36]).unwrap();
        let b = UnitPotentialGrid::new("unload", geom, vec![0.5; 36]).unwrap();
        let field = PotentialField::new(vec![a, b]).unwrap();
        let paths = save_field(&field, dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let loaded = load_field(&paths).unwrap();
        assert_eq!(loaded, field);
    }

    #[test]
    fn mismatched_geometry_fails_at_assembly() {
        let dir = tempfile::tempdir().unwrap();
        let g1 = GridGeometry { nx: 6, ny: 6, x0: 0.0, y0: 0.0, dx: 0.2, dy: 0.2 };
        let g2 = GridGeometry { nx: 6, ny: 6, x0: 0.0, y0: 0.0, dx: 0.25, dy: 0.2 };
        save_grid(
            &UnitPotentialGrid::new("bottom", g1, vec![0.2; 36]).unwrap(),
            &dir.path().join("a.alpha"),
        )
        .unwrap();
        save_grid(
            &UnitPotentialGrid::new("unload", g2, vec![0.2; 36]).unwrap(),
            &dir.path().join("b.alpha"),
        )
        .unwrap();
        let err = load_field(&[dir.path().join("a.alpha"), dir.path().join("b.alpha")]);
        assert!(matches!(err, Err(Error::GridMismatch(_))));
    }
}
