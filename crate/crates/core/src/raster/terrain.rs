//! Terrain derivatives from a DEM: Horn 3x3 slope and aspect,
//! Zevenbergen-Thorne plan curvature, D8 flow accumulation without pit
//! filling, and the topographic wetness index. Stencil operators use
//! mirrored border padding; a nodata cell or neighbor yields nodata.

use super::RasterGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerrainAttribute {
    /// Degrees, from the Horn gradient magnitude.
    Slope,
    /// Compass degrees clockwise from north; flat cells get -1.
    Aspect,
    PlanCurvature,
    /// Contributing cell count (including self) times cell area.
    FlowAccumulation,
    Twi,
}

impl TerrainAttribute {
    pub const ALL: [(&'static str, TerrainAttribute); 5] = [
        ("slope", TerrainAttribute::Slope),
        ("aspect", TerrainAttribute::Aspect),
        ("plan_curvature", TerrainAttribute::PlanCurvature),
        ("flow_accumulation", TerrainAttribute::FlowAccumulation),
        ("twi", TerrainAttribute::Twi),
    ];

    pub fn parse(name: &str) -> Result<TerrainAttribute> {
        Self::ALL
            .iter()
            .find(|(n, _)| name.eq_ignore_ascii_case(n))
            .map(|(_, a)| *a)
            .ok_or_else(|| Error::Registry {
                name: name.to_string(),
                supported: Self::ALL
                    .iter()
                    .map(|(n, _)| *n)
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }
}

/// Aspect value for cells with zero gradient.
pub const FLAT_ASPECT: f64 = -1.0;
/// Lower bound on tan(slope) in the wetness index.
pub const TWI_SLOPE_FLOOR: f64 = 0.001;

pub fn terrain(dem: &RasterGrid, attribute: TerrainAttribute) -> Result<RasterGrid> {
    dem.validate()?;
    if dem.def.nrows < 3 || dem.def.ncols < 3 {
        return Err(Error::Config(
            "terrain derivatives need a DEM of at least 3x3 cells".into(),
        ));
    }
    Ok(match attribute {
        TerrainAttribute::Slope => stencil_map(dem, |w, cell| Some(slope_deg(w, cell))),
        TerrainAttribute::Aspect => stencil_map(dem, |w, _| Some(aspect_deg(w))),
        TerrainAttribute::PlanCurvature => stencil_map(dem, |w, cell| Some(plan_curvature(w, cell))),
        TerrainAttribute::FlowAccumulation => flow_accumulation(dem),
        TerrainAttribute::Twi => twi(dem)?,
    })
}

/// 3x3 window around (row, col) with mirrored border padding, north row
/// first; None if the center or any mirrored neighbor is nodata.
fn window(dem: &RasterGrid, row: usize, col: usize) -> Option<[f64; 9]> {
    let reflect = |i: isize, n: usize| -> usize {
        if i < 0 {
            (-i) as usize
        } else if i as usize >= n {
            2 * n - 2 - i as usize
        } else {
            i as usize
        }
    };
    let mut w = [0.0; 9];
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            let r = reflect(row as isize + dr, dem.def.nrows);
            let c = reflect(col as isize + dc, dem.def.ncols);
            let v = dem.get(r, c);
            if dem.is_nodata(v) {
                return None;
            }
            w[((dr + 1) * 3 + dc + 1) as usize] = v;
        }
    }
    Some(w)
}

fn stencil_map(dem: &RasterGrid, f: impl Fn(&[f64; 9], f64) -> Option<f64>) -> RasterGrid {
    let mut out = RasterGrid::nodata_grid(dem.def);
    for row in 0..dem.def.nrows {
        for col in 0..dem.def.ncols {
            if let Some(w) = window(dem, row, col) {
                if let Some(v) = f(&w, dem.def.cellsize) {
                    out.set(row, col, v);
                }
            }
        }
    }
    out
}

/// Horn gradient; window is [a b c / d e f / g h i] with a at north-west.
fn horn_gradient(w: &[f64; 9], cell: f64) -> (f64, f64) {
    let (a, b, c, d, f, g, h, i) = (w[0], w[1], w[2], w[3], w[5], w[6], w[7], w[8]);
    let dzdx = ((c + 2.0 * f + i) - (a + 2.0 * d + g)) / (8.0 * cell);
    let dzdy = ((a + 2.0 * b + c) - (g + 2.0 * h + i)) / (8.0 * cell);
    (dzdx, dzdy)
}

fn slope_rad(w: &[f64; 9], cell: f64) -> f64 {
    let (dzdx, dzdy) = horn_gradient(w, cell);
    (dzdx * dzdx + dzdy * dzdy).sqrt().atan()
}

fn slope_deg(w: &[f64; 9], cell: f64) -> f64 {
    slope_rad(w, cell).to_degrees()
}

fn aspect_deg(w: &[f64; 9]) -> f64 {
    let (dzdx, dzdy) = horn_gradient(w, 1.0);
    if dzdx == 0.0 && dzdy == 0.0 {
        return FLAT_ASPECT;
    }
    // Angle of steepest descent (south-positive y), as compass degrees.
    let deg = (-dzdy).atan2(-dzdx).to_degrees();
    if deg < 0.0 {
        90.0 - deg
    } else if deg > 90.0 {
        450.0 - deg
    } else {
        90.0 - deg
    }
}

/// Zevenbergen-Thorne plan curvature; zero where the gradient vanishes.
fn plan_curvature(w: &[f64; 9], cell: f64) -> f64 {
    let l2 = cell * cell;
    let (z1, z2, z3, z4, z5, z6, z7, z8, z9) =
        (w[0], w[1], w[2], w[3], w[4], w[5], w[6], w[7], w[8]);
    let d = ((z4 + z6) / 2.0 - z5) / l2;
    let e = ((z2 + z8) / 2.0 - z5) / l2;
    let f = (-z1 + z3 + z7 - z9) / (4.0 * l2);
    let g = (-z4 + z6) / (2.0 * cell);
    let h = (z2 - z8) / (2.0 * cell);
    let denom = g * g + h * h;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * (d * h * h + e * g * g - f * g * h) / denom
    }
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// D8 receiver of each cell: the in-grid neighbor with the steepest
/// strictly positive drop (diagonal distance cell*sqrt(2)); slope ties go
/// to the lowest neighbor index. Cells with no lower neighbor are sinks.
fn d8_receiver(dem: &RasterGrid, row: usize, col: usize) -> Option<usize> {
    let z = dem.get(row, col);
    let mut best: Option<(f64, usize)> = None;
    for (dr, dc) in NEIGHBORS {
        let r = row as isize + dr;
        let c = col as isize + dc;
        if r < 0 || c < 0 || r as usize >= dem.def.nrows || c as usize >= dem.def.ncols {
            continue;
        }
        let (r, c) = (r as usize, c as usize);
        let zn = dem.get(r, c);
        if dem.is_nodata(zn) {
            continue;
        }
        let dist = if dr != 0 && dc != 0 {
            dem.def.cellsize * std::f64::consts::SQRT_2
        } else {
            dem.def.cellsize
        };
        let drop = (z - zn) / dist;
        if drop > 0.0 && best.map_or(true, |(bd, _)| drop > bd) {
            best = Some((drop, r * dem.def.ncols + c));
        }
    }
    best.map(|(_, idx)| idx)
}

/// Upstream cell count (including self) times cell area. No pit filling:
/// local minima act as sinks. Cells are processed from highest to lowest,
/// so every contributor is settled before its receiver.
fn flow_accumulation(dem: &RasterGrid) -> RasterGrid {
    let n = dem.def.len();
    let mut order: Vec<usize> = (0..n)
        .filter(|&i| !dem.is_nodata(dem.values[i]))
        .collect();
    order.sort_by(|&a, &b| {
        dem.values[b]
            .partial_cmp(&dem.values[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut count = vec![0u64; n];
    for &i in &order {
        count[i] += 1;
        let (row, col) = (i / dem.def.ncols, i % dem.def.ncols);
        if let Some(rx) = d8_receiver(dem, row, col) {
            count[rx] += count[i];
        }
    }

    let area = dem.def.cellsize * dem.def.cellsize;
    let mut out = RasterGrid::nodata_grid(dem.def);
    for i in 0..n {
        if !dem.is_nodata(dem.values[i]) {
            out.values[i] = count[i] as f64 * area;
        }
    }
    out
}

/// ln(specific catchment area / tan(slope)), with the catchment area per
/// unit contour width floored at one cell width and the slope floored to
/// keep flat terrain finite.
fn twi(dem: &RasterGrid) -> Result<RasterGrid> {
    let fa = flow_accumulation(dem);
    let mut out = RasterGrid::nodata_grid(dem.def);
    for row in 0..dem.def.nrows {
        for col in 0..dem.def.ncols {
            let a = fa.get(row, col);
            if fa.is_nodata(a) {
                continue;
            }
            let Some(w) = window(dem, row, col) else {
                continue;
            };
            let sca = (a / dem.def.cellsize).max(dem.def.cellsize);
            let tan_s = slope_rad(&w, dem.def.cellsize).tan().max(TWI_SLOPE_FLOOR);
            out.set(row, col, (sca / tan_s).ln());
        }
    }
    Ok(out)
}
