//! Georeferenced grids: ESRI ASCII I/O, stack alignment, resampling,
//! band-algebra covariates and terrain derivatives.

pub mod ascii;
pub mod indices;
pub mod terrain;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDef {
    pub ncols: usize,
    pub nrows: usize,
    /// Lower-left corner of the grid, map units.
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
}

impl GridDef {
    pub fn validate(&self) -> Result<()> {
        if self.ncols < 1 || self.nrows < 1 {
            return Err(Error::Config("grid needs at least one cell".into()));
        }
        if !(self.cellsize > 0.0) {
            return Err(Error::Config("cellsize must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Map coordinates of the center of cell (row, col); row 0 is the
    /// northernmost row, matching the ASCII layout.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.xll + (col as f64 + 0.5) * self.cellsize,
            self.yll + ((self.nrows - 1 - row) as f64 + 0.5) * self.cellsize,
        )
    }

    /// Cell containing the map point, if inside the extent.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.xll) / self.cellsize;
        let fy = (y - self.yll) / self.cellsize;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let col = fx.floor() as usize;
        let row_from_bottom = fy.floor() as usize;
        if col >= self.ncols || row_from_bottom >= self.nrows {
            return None;
        }
        Some((self.nrows - 1 - row_from_bottom, col))
    }

    pub fn x_max(&self) -> f64 {
        self.xll + self.ncols as f64 * self.cellsize
    }

    pub fn y_max(&self) -> f64 {
        self.yll + self.nrows as f64 * self.cellsize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterGrid {
    pub def: GridDef,
    /// Row-major, north row first.
    pub values: Vec<f64>,
}

impl RasterGrid {
    pub fn filled(def: GridDef, value: f64) -> RasterGrid {
        RasterGrid {
            def,
            values: vec![value; def.len()],
        }
    }

    pub fn nodata_grid(def: GridDef) -> RasterGrid {
        RasterGrid::filled(def, def.nodata)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.def.ncols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.values[row * self.def.ncols + col] = value;
    }

    pub fn is_nodata(&self, value: f64) -> bool {
        value == self.def.nodata || !value.is_finite()
    }

    pub fn validate(&self) -> Result<()> {
        self.def.validate()?;
        if self.values.len() != self.def.len() {
            return Err(Error::Shape(format!(
                "grid holds {} values for {}x{} cells",
                self.values.len(),
                self.def.nrows,
                self.def.ncols
            )));
        }
        Ok(())
    }
}

/// Named layers sharing one grid definition, in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterStack {
    pub def: GridDef,
    layers: Vec<(String, RasterGrid)>,
}

impl RasterStack {
    pub fn new(def: GridDef) -> RasterStack {
        RasterStack {
            def,
            layers: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: &str, grid: RasterGrid) -> Result<()> {
        if grid.def != self.def {
            return Err(Error::Alignment(format!(
                "layer '{name}' does not match the stack grid definition"
            )));
        }
        grid.validate()?;
        if self.layers.iter().any(|(n, _)| n == name) {
            return Err(Error::Schema(format!("duplicate layer name '{name}'")));
        }
        self.layers.push((name.to_string(), grid));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&RasterGrid> {
        self.layers.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// Loads a stack from a JSON manifest mapping layer name to grid path.
    /// Paths are resolved relative to the manifest's directory. Layers are
    /// inserted in the manifest's key order.
    pub fn load_manifest(path: &Path) -> Result<RasterStack> {
        let text = std::fs::read_to_string(path)?;
        let entries: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut stack: Option<RasterStack> = None;
        for (name, value) in entries {
            let rel = value.as_str().ok_or_else(|| Error::Schema(format!(
                "manifest entry '{name}' must be a file path string"
            )))?;
            let grid = ascii::read_ascii_grid(&base.join(rel))?;
            match &mut stack {
                None => {
                    let mut s = RasterStack::new(grid.def);
                    s.insert(&name, grid)?;
                    stack = Some(s);
                }
                Some(s) => s.insert(&name, grid)?,
            }
        }
        stack.ok_or_else(|| Error::Config("stack manifest lists no layers".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMethod {
    Nearest,
    Bilinear,
}

/// Resamples onto a new grid definition. Cells whose center falls outside
/// the source extent become nodata; bilinear falls back to the nearest
/// non-nodata corner when the 2x2 neighborhood is incomplete.
pub fn resample(src: &RasterGrid, target: GridDef, method: ResampleMethod) -> Result<RasterGrid> {
    src.validate()?;
    target.validate()?;
    let overlap_x = target.xll < src.def.x_max() && src.def.xll < target.x_max();
    let overlap_y = target.yll < src.def.y_max() && src.def.yll < target.y_max();
    if !overlap_x || !overlap_y {
        return Err(Error::Extent(
            "target grid does not overlap the source extent".into(),
        ));
    }

    let mut out = RasterGrid::nodata_grid(target);
    for row in 0..target.nrows {
        for col in 0..target.ncols {
            let (x, y) = target.cell_center(row, col);
            let value = match method {
                ResampleMethod::Nearest => sample_nearest(src, x, y),
                ResampleMethod::Bilinear => sample_bilinear(src, x, y),
            };
            if let Some(v) = value {
                out.set(row, col, v);
            }
        }
    }
    Ok(out)
}

fn sample_nearest(src: &RasterGrid, x: f64, y: f64) -> Option<f64> {
    let (row, col) = src.def.cell_at(x, y)?;
    let v = src.get(row, col);
    (!src.is_nodata(v)).then_some(v)
}

fn sample_bilinear(src: &RasterGrid, x: f64, y: f64) -> Option<f64> {
    let def = &src.def;
    // Continuous position in cell-center coordinates.
    let fx = (x - def.xll) / def.cellsize - 0.5;
    let fy = (y - def.yll) / def.cellsize - 0.5;
    if x < def.xll || y < def.yll || x > def.x_max() || y > def.y_max() {
        return None;
    }
    let col0 = fx.floor().clamp(0.0, (def.ncols - 1) as f64) as usize;
    let rowb0 = fy.floor().clamp(0.0, (def.nrows - 1) as f64) as usize;
    let col1 = (col0 + 1).min(def.ncols - 1);
    let rowb1 = (rowb0 + 1).min(def.nrows - 1);
    let tx = (fx - col0 as f64).clamp(0.0, 1.0);
    let ty = (fy - rowb0 as f64).clamp(0.0, 1.0);

    let corner = |rowb: usize, col: usize| -> f64 {
        src.get(def.nrows - 1 - rowb, col)
    };
    let corners = [
        (corner(rowb0, col0), (1.0 - tx) * (1.0 - ty)),
        (corner(rowb0, col1), tx * (1.0 - ty)),
        (corner(rowb1, col0), (1.0 - tx) * ty),
        (corner(rowb1, col1), tx * ty),
    ];
    if corners.iter().all(|(v, _)| src.is_nodata(*v)) {
        return None;
    }
    if corners.iter().any(|(v, _)| src.is_nodata(*v)) {
        // Fall back to the highest-weight valid corner (nearest in the
        // bilinear sense); ties resolve to the earlier corner.
        let mut best: Option<(f64, f64)> = None;
        for &(v, w) in &corners {
            if !src.is_nodata(v) && best.map_or(true, |(_, bw)| w > bw) {
                best = Some((v, w));
            }
        }
        return best.map(|(v, _)| v);
    }
    Some(corners.iter().map(|(v, w)| v * w).sum())
}

/// Nearest-cell covariate matrix for sample points; columns follow the
/// stack layer order. Points outside the extent (or hitting nodata) get
/// the missing-value sentinel.
pub fn extract_at_points(stack: &RasterStack, points: &[(f64, f64)]) -> Result<Matrix> {
    if stack.is_empty() {
        return Err(Error::Config("cannot extract from an empty stack".into()));
    }
    let mut out = Matrix::zeros(points.len(), stack.len());
    for (r, &(x, y)) in points.iter().enumerate() {
        let cell = stack.def.cell_at(x, y);
        for (c, (_, grid)) in stack.layers.iter().enumerate() {
            let v = match cell {
                Some((row, col)) => {
                    let v = grid.get(row, col);
                    if grid.is_nodata(v) {
                        crate::samples::MISSING
                    } else {
                        v
                    }
                }
                None => crate::samples::MISSING,
            };
            out.set(r, c, v);
        }
    }
    Ok(out)
}
