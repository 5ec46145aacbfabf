//! ESRI ASCII grid reader/writer: six `key value` header lines (ncols,
//! nrows, xllcorner, yllcorner, cellsize, NODATA_value) then row-major
//! values, north row first.

use std::io::Write;
use std::path::Path;

use super::{GridDef, RasterGrid};
use crate::error::{Error, Result};

pub fn read_ascii_grid(path: &Path) -> Result<RasterGrid> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let mut ncols = None;
    let mut nrows = None;
    let mut xll = None;
    let mut yll = None;
    let mut cellsize = None;
    let mut nodata = None;
    let mut consumed = 0usize;
    for (lineno, line) in lines.by_ref() {
        let mut parts = line.split_whitespace();
        let key = parts
            .next()
            .ok_or_else(|| Error::Format {
                line: lineno + 1,
                message: "empty header line".into(),
            })?
            .to_ascii_lowercase();
        let value = parts.next().ok_or_else(|| Error::Format {
            line: lineno + 1,
            message: format!("header key '{key}' has no value"),
        })?;
        let parse = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::Format {
                line: lineno + 1,
                message: format!("cannot parse '{v}' as a number"),
            })
        };
        match key.as_str() {
            "ncols" => ncols = Some(parse(value)? as usize),
            "nrows" => nrows = Some(parse(value)? as usize),
            "xllcorner" => xll = Some(parse(value)?),
            "yllcorner" => yll = Some(parse(value)?),
            "cellsize" => cellsize = Some(parse(value)?),
            "nodata_value" => nodata = Some(parse(value)?),
            _ => {
                return Err(Error::Format {
                    line: lineno + 1,
                    message: format!("unknown header key '{key}'"),
                })
            }
        }
        consumed += 1;
        if consumed == 6 {
            break;
        }
    }
    let require = |name: &str, v: Option<f64>| -> Result<f64> {
        v.ok_or_else(|| Error::Format {
            line: consumed,
            message: format!("header is missing '{name}'"),
        })
    };
    let def = GridDef {
        ncols: require("ncols", ncols.map(|v| v as f64))? as usize,
        nrows: require("nrows", nrows.map(|v| v as f64))? as usize,
        xll: require("xllcorner", xll)?,
        yll: require("yllcorner", yll)?,
        cellsize: require("cellsize", cellsize)?,
        nodata: require("NODATA_value", nodata)?,
    };
    def.validate()?;

    let mut values = Vec::with_capacity(def.len());
    for (lineno, line) in lines {
        for token in line.split_whitespace() {
            let v = token.parse::<f64>().map_err(|_| Error::Format {
                line: lineno + 1,
                message: format!("cannot parse grid value '{token}'"),
            })?;
            values.push(v);
        }
    }
    if values.len() != def.len() {
        return Err(Error::Format {
            line: text.lines().count(),
            message: format!(
                "expected {} values for {}x{} grid, found {}",
                def.len(),
                def.nrows,
                def.ncols,
                values.len()
            ),
        });
    }
    Ok(RasterGrid { def, values })
}

pub fn write_ascii_grid(grid: &RasterGrid, path: &Path) -> Result<()> {
    grid.validate()?;
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "ncols {}", grid.def.ncols)?;
    writeln!(w, "nrows {}", grid.def.nrows)?;
    writeln!(w, "xllcorner {}", grid.def.xll)?;
    writeln!(w, "yllcorner {}", grid.def.yll)?;
    writeln!(w, "cellsize {}", grid.def.cellsize)?;
    writeln!(w, "NODATA_value {}", grid.def.nodata)?;
    for row in 0..grid.def.nrows {
        let mut line = String::new();
        for col in 0..grid.def.ncols {
            if col > 0 {
                line.push(' ');
            }
            // Shortest representation that round-trips the exact f64.
            line.push_str(&format!("{}", grid.get(row, col)));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_identical() {
        let def = GridDef {
            ncols: 2,
            nrows: 2,
            xll: 100.25,
            yll: -3.5,
            cellsize: 30.0,
            nodata: -9999.0,
        };
        let grid = RasterGrid {
            def,
            values: vec![1.0 / 3.0, -9999.0, 2.5e-17, 7.0],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        write_ascii_grid(&grid, &path).unwrap();
        let back = read_ascii_grid(&path).unwrap();
        assert_eq!(back.def, def);
        for (a, b) in grid.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Nodata sentinel cells survive as the sentinel.
        assert!(back.is_nodata(back.values[1]));
    }

    #[test]
    fn missing_cellsize_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.asc");
        std::fs::write(
            &path,
            "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\nNODATA_value -9999\n5\n",
        )
        .unwrap();
        match read_ascii_grid(&path) {
            Err(Error::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn value_count_mismatch_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.asc");
        std::fs::write(
            &path,
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2 3\n",
        )
        .unwrap();
        match read_ascii_grid(&path) {
            Err(Error::Format { message, .. }) => assert!(message.contains("expected 4")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn header_keys_are_case_insensitive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("caps.asc");
        std::fs::write(
            &path,
            "NCOLS 1\nNROWS 1\nXLLCORNER 0\nYLLCORNER 0\nCELLSIZE 1\nNODATA_VALUE -1\n5\n",
        )
        .unwrap();
        let grid = read_ascii_grid(&path).unwrap();
        assert_eq!(grid.values, vec![5.0]);
    }
}
