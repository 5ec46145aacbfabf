//! Band-algebra covariate registry. Each supported index is a per-pixel
//! closed-form expression over named reflectance bands; prose-only
//! covariates are listed as external inputs, and self-inconsistent
//! formulas as unsupported.

use super::{RasterGrid, RasterStack};
use crate::error::{Error, Result};

/// Soil-adjustment constant in SAVI and EVI.
pub const L: f64 = 0.5;
/// Aerosol resistance coefficients in EVI.
pub const C1: f64 = 6.0;
pub const C2: f64 = 7.5;

const DIV_GUARD: f64 = 1e-12;

fn div(num: f64, den: f64) -> Option<f64> {
    (den.abs() >= DIV_GUARD).then(|| num / den)
}

fn sqrt(v: f64) -> Option<f64> {
    (v >= 0.0).then(|| v.sqrt())
}

pub enum IndexKind {
    Computed {
        bands: &'static [&'static str],
        eval: fn(&[f64]) -> Option<f64>,
    },
    /// Defined only in prose; must be supplied as a precomputed layer.
    External,
    /// Printed formula is self-inconsistent; deliberately not guessed.
    Unsupported { reason: &'static str },
}

pub struct IndexDef {
    pub name: &'static str,
    pub kind: IndexKind,
}

macro_rules! computed {
    ($name:expr, [$($band:expr),+], |$args:ident| $body:expr) => {
        IndexDef {
            name: $name,
            kind: IndexKind::Computed {
                bands: &[$($band),+],
                eval: |$args: &[f64]| -> Option<f64> { $body },
            },
        }
    };
}

/// Normalized difference (a - b)/(a + b); also covers the table rows whose
/// numerator/denominator parentheses are elided in print.
fn nd(a: f64, b: f64) -> Option<f64> {
    div(a - b, a + b)
}

pub fn registry() -> &'static [IndexDef] {
    static REGISTRY: &[IndexDef] = &[
        computed!("WBDI", ["TC3", "TC1"], |v| div(v[0], v[1])),
        computed!("ARVI", ["NIR", "RED"], |v| {
            nd(v[0], v[1]).map(|r| -0.18 + 1.17 * r)
        }),
        computed!("BWDRVI", ["NIR", "BLUE"], |v| nd(0.1 * v[0], v[1])),
        computed!("BI", ["RED", "NIR"], |v| sqrt(v[0] * v[0] + v[1] * v[1])),
        computed!("CI", ["SWIR1", "GREEN"], |v| Some(v[0] - v[1])),
        computed!("CARBONATE", ["RED", "GREEN"], |v| div(v[0], v[1])),
        computed!("CVI", ["NIR", "RED", "GREEN"], |v| {
            sqrt(v[2]).and_then(|s| div(v[0] * v[1], s))
        }),
        computed!("CLAY", ["SWIR1", "SWIR2"], |v| div(v[0], v[1])),
        computed!("COLORATION", ["RED", "GREEN"], |v| nd(v[0], v[1])),
        computed!("DVI", ["NIR", "RED"], |v| Some(v[0] - v[1])),
        computed!("EVI", ["NIR", "RED", "BLUE"], |v| {
            div(v[0] - v[1], v[0] + C1 * v[1] - C2 * v[2] + L)
        }),
        computed!("FERROUS", ["SWIR1", "NIR"], |v| div(v[0], v[1])),
        computed!("GARI", ["NIR", "GREEN", "BLUE", "RED"], |v| {
            let adj = v[2] - v[3];
            div(v[0] - (v[1] - adj), v[0] - (v[1] + adj))
        }),
        computed!("GLI", ["GREEN", "RED", "BLUE"], |v| {
            div(2.0 * v[0] - v[1] - v[2], 2.0 * v[0] + v[1] + v[2])
        }),
        computed!("GNDVI", ["NIR", "GREEN"], |v| nd(v[0], v[1])),
        computed!("GBNDVI", ["NIR", "GREEN", "BLUE"], |v| nd(v[0], v[1] + v[2])),
        computed!("GRVI", ["GREEN", "RED"], |v| Some(v[0] - v[1])),
        computed!("GYPSUM", ["SWIR1", "NIR"], |v| nd(v[0], v[1])),
        computed!("HUE", ["RED", "GREEN", "BLUE"], |v| {
            div(2.0 * (v[0] - v[1] - v[2]), v[1] - v[2])
        }),
        computed!("IPVI", ["NIR", "RED"], |v| div(v[0], v[0] + v[1])),
        computed!("IRON_OXIDE", ["RED", "BLUE"], |v| div(v[0], v[1])),
        computed!("LWC", ["SWIR1", "SWIR2"], |v| div(v[0], v[1])),
        computed!("MSAVI", ["NIR", "RED"], |v| {
            let q = (2.0 * v[0] + 1.0).powi(2) - 8.0 * (v[0] - v[1]);
            sqrt(q).map(|s| 0.5 * (2.0 * (v[0] + 1.0) - s))
        }),
        computed!("NIR_RATIO", ["NIR", "RED"], |v| div(v[0], v[1])),
        computed!("NORM_GREEN", ["GREEN", "NIR", "RED"], |v| {
            div(v[0], v[1] + v[2] + v[0])
        }),
        computed!("NORM_NIR", ["NIR", "RED", "GREEN"], |v| {
            div(v[0], v[0] + v[1] + v[2])
        }),
        computed!("NORM_RED", ["RED", "NIR", "GREEN"], |v| {
            div(v[0], v[1] + v[0] + v[2])
        }),
        computed!("NORM_BASED", ["NIR", "BLUE", "GREEN"], |v| {
            nd(v[0], v[1] + v[2])
        }),
        computed!("NCI", ["SWIR1", "GREEN"], |v| nd(v[0], v[1])),
        computed!("NDMI", ["NIR", "SWIR1"], |v| nd(v[0], v[1])),
        computed!("NDSI", ["RED", "NIR"], |v| nd(v[0], v[1])),
        computed!("NDVI", ["NIR", "RED"], |v| nd(v[0], v[1])),
        computed!("RVI", ["NIR", "RED", "GREEN"], |v| {
            div(v[0], v[1]).and_then(|r| div(r, v[2] + v[1]))
        }),
        computed!("REDNESS", ["RED", "BLUE", "GREEN"], |v| {
            div(v[0] * v[0], v[1] * v[2])
        }),
        computed!("RAI", ["NIR", "RED", "SWIR1"], |v| div(v[0], v[1] + v[2])),
        computed!("RDVI", ["NIR", "RED"], |v| {
            sqrt(v[0] + v[1]).and_then(|s| div(v[0] - v[1], s))
        }),
        computed!("MODIS_NDVI", ["MODIS_NIR", "MODIS_RED"], |v| nd(v[0], v[1])),
        computed!("MODIS_BI", ["MODIS_RED", "MODIS_NIR"], |v| {
            sqrt(v[0] * v[0] + v[1] * v[1])
        }),
        computed!("SAVI", ["NIR", "RED"], |v| {
            div(v[0] - v[1], v[0] + v[1] + L).map(|r| (1.0 + L) * r)
        }),
        // Printed as NIR/RED + SWIR-1; evaluated with that literal
        // precedence rather than the conventional NIR/(RED + SWIR-1),
        // which the table already lists separately as RAI.
        computed!("SLAVI", ["NIR", "RED", "SWIR1"], |v| {
            div(v[0], v[1]).map(|r| r + v[2])
        }),
        computed!("STRESS", ["BLUE", "GREEN", "RED"], |v| div(v[0] * v[1], v[2])),
        computed!("VI", ["SWIR2", "SWIR1"], |v| nd(v[0], v[1])),
        IndexDef { name: "GVI", kind: IndexKind::Unsupported { reason: "printed formula repeats the GREEN term; coefficients cannot be trusted" } },
        IndexDef { name: "PVI", kind: IndexKind::Unsupported { reason: "printed formula uses undefined symbols r and mu" } },
        IndexDef { name: "MRVBF", kind: IndexKind::External },
        IndexDef { name: "MRRTF", kind: IndexKind::External },
        IndexDef { name: "CATCHMENT_SLOPE", kind: IndexKind::External },
        IndexDef { name: "CONVERGENCE", kind: IndexKind::External },
        IndexDef { name: "DIFFUSE_INSOLATION", kind: IndexKind::External },
        IndexDef { name: "DIRECT_INSOLATION", kind: IndexKind::External },
        IndexDef { name: "TOTAL_INSOLATION", kind: IndexKind::External },
        IndexDef { name: "OPENNESS_POS", kind: IndexKind::External },
        IndexDef { name: "OPENNESS_NEG", kind: IndexKind::External },
        IndexDef { name: "WIND_EFFECT", kind: IndexKind::External },
        IndexDef { name: "MASS_BALANCE", kind: IndexKind::External },
        IndexDef { name: "VALLEY_DEPTH", kind: IndexKind::External },
        IndexDef { name: "PC1", kind: IndexKind::External },
        IndexDef { name: "PC2", kind: IndexKind::External },
        IndexDef { name: "PC3", kind: IndexKind::External },
        IndexDef { name: "TC1", kind: IndexKind::External },
        IndexDef { name: "TC2", kind: IndexKind::External },
        IndexDef { name: "TC3", kind: IndexKind::External },
    ];
    REGISTRY
}

pub fn lookup(name: &str) -> Result<&'static IndexDef> {
    registry()
        .iter()
        .find(|d| d.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Registry {
            name: name.to_string(),
            supported: registry()
                .iter()
                .filter(|d| matches!(d.kind, IndexKind::Computed { .. }))
                .map(|d| d.name)
                .collect::<Vec<_>>()
                .join(", "),
        })
}

/// Computes one index over the stack. Any nodata input pixel, guarded
/// division, or out-of-domain root yields nodata.
pub fn band_index(stack: &RasterStack, name: &str) -> Result<RasterGrid> {
    let def = lookup(name)?;
    let (bands, eval) = match &def.kind {
        IndexKind::Computed { bands, eval } => (bands, eval),
        IndexKind::External => {
            return Err(Error::Dependency(format!(
                "'{}' has no closed-form definition; supply it as a precomputed layer",
                def.name
            )))
        }
        IndexKind::Unsupported { reason } => {
            return Err(Error::Dependency(format!(
                "'{}' is not computable: {reason}",
                def.name
            )))
        }
    };
    let layers: Vec<&RasterGrid> = bands
        .iter()
        .map(|b| {
            stack.get(b).ok_or_else(|| {
                Error::Dependency(format!("index '{}' needs band '{b}'", def.name))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = RasterGrid::nodata_grid(stack.def);
    let mut inputs = vec![0.0f64; layers.len()];
    for i in 0..stack.def.len() {
        let mut valid = true;
        for (slot, layer) in inputs.iter_mut().zip(&layers) {
            let v = layer.values[i];
            if layer.is_nodata(v) {
                valid = false;
                break;
            }
            *slot = v;
        }
        if !valid {
            continue;
        }
        if let Some(v) = eval(&inputs) {
            if v.is_finite() && v != stack.def.nodata {
                out.values[i] = v;
            }
        }
    }
    Ok(out)
}
