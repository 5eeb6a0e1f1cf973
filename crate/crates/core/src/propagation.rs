//! Per-site SNR fields over the receiver grid.
//!
//! The built-in model is a line-of-sight ray cast: free-space path loss plus
//! absorption along every chord the direct path spends inside a building.
//! Received power is divided by the thermal noise floor of the configured
//! bandwidth, so every field is an SNR with unit noise power. Fields from
//! other propagation tools can be brought in through the exchange format.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{segment_inside_intervals, Point2, Point3};
use crate::scene::{CandidateSet, ReceiverGrid, Scene, Site};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Thermal noise power spectral density at room temperature.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    /// Hz.
    pub carrier_frequency: f64,
    pub tx_power_dbm: f64,
    /// Hz.
    pub bandwidth: f64,
    /// Shannon gap, linear.
    pub gap: f64,
    /// Meters; path lengths are clamped to at least this value.
    pub min_distance: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            carrier_frequency: 1.8e9,
            tx_power_dbm: 40.0,
            bandwidth: 10e6,
            gap: 2.0,
            min_distance: 1.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.carrier_frequency) {
            return Err(Error::validation("carrier frequency must be positive"));
        }
        if !positive(self.bandwidth) {
            return Err(Error::validation("bandwidth must be positive"));
        }
        if !positive(self.min_distance) {
            return Err(Error::validation("min_distance must be positive"));
        }
        if !self.tx_power_dbm.is_finite() {
            return Err(Error::validation("tx power must be finite"));
        }
        if !(self.gap.is_finite() && self.gap >= 1.0) {
            return Err(Error::validation("gap must be at least 1"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Thermal noise floor over the configured bandwidth.
    pub fn noise_floor_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_PER_HZ + linear_to_db(self.bandwidth)
    }

    pub fn noise_floor_watts(&self) -> f64 {
        db_to_linear(self.noise_floor_dbm() - 30.0)
    }

    /// Transmit power over noise power, linear.
    fn tx_over_noise(&self) -> f64 {
        db_to_linear(self.tx_power_dbm - self.noise_floor_dbm())
    }
}

/// Total absorption in dB along the direct path between two 3D points.
///
/// A chord through a footprint counts only when the path height at the chord
/// midpoint is below the building roof.
pub fn path_attenuation_db(from: Point3, to: Point3, scene: &Scene) -> f64 {
    let (a, b) = (from.xy(), to.xy());
    let len3 = from.distance(to);
    let mut total = 0.0;
    for bld in &scene.buildings {
        let Some(att) = scene.materials.get(&bld.material) else {
            continue;
        };
        if att == 0.0 {
            continue;
        }
        if a.distance(b) == 0.0 {
            // Vertical path: only the part below the roof counts, if inside.
            if crate::geometry::point_in_polygon(a, &bld.footprint) {
                let lo = from.z.min(to.z).max(0.0);
                let hi = from.z.max(to.z).min(bld.height);
                if hi > lo {
                    total += att * (hi - lo);
                }
            }
            continue;
        }
        for (t0, t1) in segment_inside_intervals(a, b, &bld.footprint) {
            let tm = 0.5 * (t0 + t1);
            let z = from.z + tm * (to.z - from.z);
            if z < bld.height {
                total += att * (t1 - t0) * len3;
            }
        }
    }
    total
}

/// Linear SNR at `point` from a transmitter at `site`.
pub fn path_snr(site: &Site, point: Point3, scene: &Scene, radio: &RadioConfig) -> f64 {
    let tx = Point3::new(site.position.x, site.position.y, site.height);
    let d = tx.distance(point).max(radio.min_distance);
    let spread = radio.wavelength() / (4.0 * std::f64::consts::PI * d);
    let absorption = path_attenuation_db(tx, point, scene);
    radio.tx_over_noise() * spread * spread * db_to_linear(-absorption)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerField {
    pub site: Site,
    pub grid: ReceiverGrid,
    /// Row-major linear SNR values.
    pub values: Vec<f64>,
}

impl PowerField {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.grid.cols + col]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

pub fn compute_field(
    site: &Site,
    scene: &Scene,
    grid: &ReceiverGrid,
    radio: &RadioConfig,
) -> PowerField {
    let values = grid
        .centers()
        .map(|c| path_snr(site, Point3::new(c.x, c.y, grid.height), scene, radio))
        .collect();
    PowerField {
        site: *site,
        grid: grid.clone(),
        values,
    }
}

fn grid_header(grid: &ReceiverGrid) -> String {
    format!(
        "{} {} {} {} {} {}",
        grid.rows, grid.cols, grid.origin.x, grid.origin.y, grid.spacing, grid.height
    )
}

fn parse_header(line: &str, path: &Path) -> Result<ReceiverGrid> {
    let bad = |m: &str| Error::Parse {
        path: path.to_path_buf(),
        message: m.to_string(),
    };
    let tok: Vec<&str> = line.split_whitespace().collect();
    if tok.len() != 6 {
        return Err(bad(
            "header must have 6 fields: rows cols origin_x origin_y spacing height",
        ));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer in header"));
    let flt = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number in header"));
    Ok(ReceiverGrid {
        rows: int(tok[0])?,
        cols: int(tok[1])?,
        origin: Point2::new(flt(tok[2])?, flt(tok[3])?),
        spacing: flt(tok[4])?,
        height: flt(tok[5])?,
    })
}

fn check_values(grid: &ReceiverGrid, values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidValue {
                row: i / grid.cols,
                col: i % grid.cols,
                value: v,
            });
        }
    }
    Ok(())
}

fn check_grid(expected: &ReceiverGrid, found: &ReceiverGrid) -> Result<()> {
    if expected.same_layout(found) {
        Ok(())
    } else {
        Err(Error::GridMismatch {
            expected: grid_header(expected),
            found: grid_header(found),
        })
    }
}

/// Writes a raster in the text exchange format. Values are printed in
/// shortest round-trip form, so reading back is bit-exact.
pub fn write_raster_text(
    path: impl AsRef<Path>,
    grid: &ReceiverGrid,
    values: &[f64],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = grid_header(grid);
    out.push('\n');
    for row in values.chunks(grid.cols) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a text raster, returning its header grid and values.
pub fn read_raster_text(path: impl AsRef<Path>) -> Result<(ReceiverGrid, Vec<f64>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        message: "empty file".into(),
    })?;
    let grid = parse_header(header, path)?;
    let values = lines
        .flat_map(str::split_whitespace)
        .map(|t| {
            // Rust's parser accepts "NaN"/"inf"; those are caught by validation.
            t.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                message: format!("bad value `{t}`"),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != grid.len() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("expected {} values, found {}", grid.len(), values.len()),
        });
    }
    Ok((grid, values))
}

pub fn export_field(path: impl AsRef<Path>, field: &PowerField) -> Result<()> {
    write_raster_text(path, &field.grid, &field.values)
}

/// Imports an externally computed field for `site` and checks it against `grid`.
pub fn import_field(path: impl AsRef<Path>, grid: &ReceiverGrid, site: Site) -> Result<PowerField> {
    let (found, values) = read_raster_text(path)?;
    check_grid(grid, &found)?;
    check_values(grid, &values)?;
    Ok(PowerField {
        site,
        grid: grid.clone(),
        values,
    })
}

/// Binary cache variant: the text header, a blank line, then little-endian f64s.
pub fn write_raster_binary(path: &Path, grid: &ReceiverGrid, values: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + 8 * values.len());
    buf.extend_from_slice(grid_header(grid).as_bytes());
    buf.extend_from_slice(b"\n\n");
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_raster_binary(path: &Path) -> Result<(ReceiverGrid, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            message: "missing header terminator".into(),
        })?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        message: "header is not UTF-8".into(),
    })?;
    let grid = parse_header(header, path)?;
    let body = &bytes[split + 2..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!(
                "expected {} bytes of values, found {}",
                8 * grid.len(),
                body.len()
            ),
        });
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((grid, values))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

/// On-disk store of computed fields keyed by a digest of everything the
/// field depends on.
#[derive(Debug)]
pub struct FieldCache {
    dir: PathBuf,
    stats: Mutex<CacheStats>,
}

/// Bumped whenever the propagation model changes numerically.
const MODEL_REVISION: &str = "los-absorption-1";

impl FieldCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(FieldCache {
            dir,
            stats: Mutex::new(CacheStats::default()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stats(&self) -> CacheStats {
        *self.stats.lock().expect("cache stats poisoned")
    }

    fn key(scene: &Scene, grid: &ReceiverGrid, radio: &RadioConfig, site: &Site) -> String {
        let mut h = Sha256::new();
        h.update(MODEL_REVISION.as_bytes());
        for part in [
            serde_json::to_vec(scene),
            serde_json::to_vec(grid),
            serde_json::to_vec(radio),
            serde_json::to_vec(site),
        ] {
            h.update(part.expect("plain data serializes"));
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }

    pub fn path_for(
        &self,
        scene: &Scene,
        grid: &ReceiverGrid,
        radio: &RadioConfig,
        site: &Site,
    ) -> PathBuf {
        self.dir
            .join(format!("{}.field", Self::key(scene, grid, radio, site)))
    }

    /// Returns the cached field, computing and storing it on a miss.
    pub fn get_or_compute(
        &self,
        site: &Site,
        scene: &Scene,
        grid: &ReceiverGrid,
        radio: &RadioConfig,
    ) -> Result<PowerField> {
        let path = self.path_for(scene, grid, radio, site);
        if path.exists() {
            let (found, values) = read_raster_binary(&path)?;
            check_grid(grid, &found)?;
            self.stats.lock().expect("cache stats poisoned").hits += 1;
            return Ok(PowerField {
                site: *site,
                grid: grid.clone(),
                values,
            });
        }
        let field = compute_field(site, scene, grid, radio);
        write_raster_binary(&path, grid, &field.values)?;
        self.stats.lock().expect("cache stats poisoned").misses += 1;
        Ok(field)
    }
}

/// Computes (or loads) one field per site, in site order.
pub fn fields_for_sites(
    sites: &[Site],
    scene: &Scene,
    grid: &ReceiverGrid,
    radio: &RadioConfig,
    cache: Option<&FieldCache>,
) -> Result<Vec<PowerField>> {
    radio.validate()?;
    sites
        .par_iter()
        .map(|site| match cache {
            Some(c) => c.get_or_compute(site, scene, grid, radio),
            None => Ok(compute_field(site, scene, grid, radio)),
        })
        .collect()
}

/// Fields for every candidate, cache-backed when a cache is given.
pub fn field_matrix(
    candidates: &CandidateSet,
    scene: &Scene,
    grid: &ReceiverGrid,
    radio: &RadioConfig,
    cache: Option<&FieldCache>,
) -> Result<Vec<PowerField>> {
    fields_for_sites(&candidates.sites, scene, grid, radio, cache)
}
