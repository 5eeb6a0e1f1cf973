//! The 2.5D environment: a rectangular domain with extruded building
//! footprints, the receiver lattice laid over it, and the candidate
//! transmitter sites.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{is_simple_polygon, point_in_polygon, signed_area2, Point2, Rect, Region};

/// Attenuation coefficients in dB per meter, keyed by material id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaterialTable {
    pub entries: BTreeMap<String, f64>,
}

impl MaterialTable {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.entries.get(id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub footprint: Vec<Point2>,
    pub height: f64,
    pub material: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bounds: Rect,
    pub buildings: Vec<Building>,
    pub materials: MaterialTable,
    pub grid_spacing: f64,
    pub receiver_height: f64,
}

impl Scene {
    /// Validates every invariant and normalizes footprints to counter-clockwise order.
    pub fn new(
        bounds: Rect,
        buildings: Vec<Building>,
        materials: MaterialTable,
        grid_spacing: f64,
        receiver_height: f64,
    ) -> Result<Self> {
        if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
            return Err(Error::validation(
                "bounds must have positive width and height",
            ));
        }
        if !(grid_spacing.is_finite() && grid_spacing > 0.0) {
            return Err(Error::validation("grid spacing must be positive"));
        }
        if !(receiver_height.is_finite() && receiver_height >= 0.0) {
            return Err(Error::validation("receiver height must be non-negative"));
        }
        for (id, &att) in &materials.entries {
            if !(att.is_finite() && att >= 0.0) {
                return Err(Error::validation(format!(
                    "material `{id}` has invalid attenuation {att}"
                )));
            }
        }
        let mut buildings = buildings;
        for (i, b) in buildings.iter_mut().enumerate() {
            if b.footprint.len() < 3 {
                return Err(Error::validation(format!(
                    "building {i} has fewer than 3 vertices"
                )));
            }
            if !(b.height.is_finite() && b.height > 0.0) {
                return Err(Error::validation(format!(
                    "building {i} has non-positive height"
                )));
            }
            if materials.get(&b.material).is_none() {
                return Err(Error::validation(format!(
                    "building {i} references unknown material `{}`",
                    b.material
                )));
            }
            if let Some(v) = b.footprint.iter().find(|v| !bounds.contains(**v)) {
                return Err(Error::validation(format!(
                    "building {i} vertex ({}, {}) lies outside bounds",
                    v.x, v.y
                )));
            }
            if !is_simple_polygon(&b.footprint) {
                return Err(Error::validation(format!(
                    "building {i} footprint is not simple"
                )));
            }
            let area2 = signed_area2(&b.footprint);
            if area2 == 0.0 {
                return Err(Error::validation(format!(
                    "building {i} footprint has zero area"
                )));
            }
            if area2 < 0.0 {
                b.footprint.reverse();
            }
        }
        Ok(Scene {
            bounds,
            buildings,
            materials,
            grid_spacing,
            receiver_height,
        })
    }

    /// True when the point lies inside any building footprint.
    pub fn is_indoor(&self, p: Point2) -> bool {
        self.buildings
            .iter()
            .any(|b| point_in_polygon(p, &b.footprint))
    }

    /// Same scene with a different receiver height.
    pub fn at_receiver_height(&self, height: f64) -> Result<Scene> {
        if !(height.is_finite() && height >= 0.0) {
            return Err(Error::validation("receiver height must be non-negative"));
        }
        let mut s = self.clone();
        s.receiver_height = height;
        Ok(s)
    }
}

/// Reads the scene part of a scenario file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    Ok(crate::scenario::Scenario::load(path)?.scene)
}

/// Lattice of receiver cell centers. Row `r` sits at
/// `y = origin.y + (r + 0.5) * spacing`, column `c` at
/// `x = origin.x + (c + 0.5) * spacing`; storage is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverGrid {
    pub origin: Point2,
    pub spacing: f64,
    pub rows: usize,
    pub cols: usize,
    pub height: f64,
}

impl ReceiverGrid {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Area element of one cell in m².
    pub fn cell_weight(&self) -> f64 {
        self.spacing * self.spacing
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        Point2::new(
            self.origin.x + (col as f64 + 0.5) * self.spacing,
            self.origin.y + (row as f64 + 0.5) * self.spacing,
        )
    }

    pub fn center_of(&self, index: usize) -> Point2 {
        self.cell_center(index / self.cols, index % self.cols)
    }

    /// Row-major iterator over cell centers.
    pub fn centers(&self) -> impl Iterator<Item = Point2> + '_ {
        (0..self.len()).map(move |i| self.center_of(i))
    }

    /// Header compatibility check used by field import.
    pub fn same_layout(&self, other: &ReceiverGrid) -> bool {
        const TOL: f64 = 1e-9;
        self.rows == other.rows
            && self.cols == other.cols
            && (self.origin.x - other.origin.x).abs() <= TOL
            && (self.origin.y - other.origin.y).abs() <= TOL
            && (self.spacing - other.spacing).abs() <= TOL
            && (self.height - other.height).abs() <= TOL
    }
}

/// Number of whole cells of size `spacing` that fit into `extent`.
fn whole_cells(extent: f64, spacing: f64) -> usize {
    // Relative slack so that e.g. 0.3 / 0.1 yields 3 rather than 2.
    ((extent / spacing) * (1.0 + 1e-12)).floor() as usize
}

pub fn make_grid(scene: &Scene) -> Result<ReceiverGrid> {
    let s = scene.grid_spacing;
    let (w, h) = (scene.bounds.width(), scene.bounds.height());
    if s > w || s > h {
        return Err(Error::validation(format!(
            "grid spacing {s} exceeds a bounds dimension ({w} x {h})"
        )));
    }
    Ok(ReceiverGrid {
        origin: scene.bounds.min,
        spacing: s,
        rows: whole_cells(h, s),
        cols: whole_cells(w, s),
        height: scene.receiver_height,
    })
}

/// A transmitter location with its mount height above ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub position: Point2,
    pub height: f64,
}

impl Site {
    pub fn new(x: f64, y: f64, height: f64) -> Self {
        Site {
            position: Point2::new(x, y),
            height,
        }
    }
}

/// How candidates are generated before exclusion filtering.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSpec {
    /// Explicit site positions.
    #[serde(default)]
    pub sites: Vec<Point2>,
    /// Pitch of an auto-generated lattice. Lattice points start half a pitch
    /// in from the lower-left corner: `min + pitch/2 + i*pitch`.
    #[serde(default)]
    pub pitch: Option<f64>,
    pub mount_height: f64,
    #[serde(default)]
    pub exclusions: Vec<Region>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub sites: Vec<Site>,
    pub exclusion_zones: Vec<Region>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Index of the candidate within `tol` meters of `p`, if any.
    pub fn find(&self, p: Point2, tol: f64) -> Option<usize> {
        self.sites
            .iter()
            .position(|s| s.position.distance(p) <= tol)
    }

    pub fn is_excluded(&self, p: Point2) -> bool {
        self.exclusion_zones.iter().any(|z| z.contains(p))
    }
}

fn lattice_axis(min: f64, max: f64, pitch: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut i = 0usize;
    loop {
        let v = min + pitch * (0.5 + i as f64);
        if v >= max {
            break;
        }
        out.push(v);
        i += 1;
    }
    out
}

/// Generates the feasible candidate set. Explicit sites take precedence over
/// lattice sites; any site closer than one grid spacing to an already kept
/// site is dropped. Output is sorted row-major (by `y`, then `x`).
pub fn build_candidates(scene: &Scene, spec: &CandidateSpec) -> Result<CandidateSet> {
    if !(spec.mount_height.is_finite() && spec.mount_height >= 0.0) {
        return Err(Error::validation(
            "candidate mount height must be non-negative",
        ));
    }
    let mut raw: Vec<Point2> = spec.sites.clone();
    if let Some(pitch) = spec.pitch {
        if !(pitch.is_finite() && pitch >= scene.grid_spacing) {
            return Err(Error::validation(format!(
                "lattice pitch {pitch} must be at least the grid spacing {}",
                scene.grid_spacing
            )));
        }
        let b = &scene.bounds;
        let xs = lattice_axis(b.min.x, b.max.x, pitch);
        for y in lattice_axis(b.min.y, b.max.y, pitch) {
            raw.extend(xs.iter().map(|&x| Point2::new(x, y)));
        }
    }

    let mut kept: Vec<Point2> = Vec::with_capacity(raw.len());
    for p in raw {
        if !scene.bounds.contains(p) {
            continue;
        }
        if spec.exclusions.iter().any(|z| z.contains(p)) {
            continue;
        }
        if kept.iter().any(|q| q.distance(p) < scene.grid_spacing) {
            continue;
        }
        kept.push(p);
    }
    if kept.is_empty() {
        return Err(Error::validation(
            "candidate set is empty after exclusion filtering",
        ));
    }
    kept.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));

    Ok(CandidateSet {
        sites: kept
            .into_iter()
            .map(|p| Site {
                position: p,
                height: spec.mount_height,
            })
            .collect(),
        exclusion_zones: spec.exclusions.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Ellipse;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
        vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ]
    }

    fn materials() -> MaterialTable {
        MaterialTable {
            entries: [("concrete".to_string(), 0.5)].into_iter().collect(),
        }
    }

    fn scene(w: f64, h: f64, spacing: f64) -> Scene {
        Scene::new(
            Rect {
                min: Point2::new(0.0, 0.0),
                max: Point2::new(w, h),
            },
            vec![],
            materials(),
            spacing,
            1.5,
        )
        .unwrap()
    }

    #[test]
    fn footprint_is_reoriented_ccw() {
        let mut fp = rect(10.0, 10.0, 20.0, 20.0);
        fp.reverse();
        let s = Scene::new(
            Rect {
                min: Point2::new(0.0, 0.0),
                max: Point2::new(100.0, 100.0),
            },
            vec![Building {
                footprint: fp,
                height: 10.0,
                material: "concrete".into(),
            }],
            materials(),
            10.0,
            1.5,
        )
        .unwrap();
        assert!(signed_area2(&s.buildings[0].footprint) > 0.0);
    }

    #[test]
    fn building_outside_bounds_is_rejected() {
        let err = Scene::new(
            Rect {
                min: Point2::new(0.0, 0.0),
                max: Point2::new(100.0, 100.0),
            },
            vec![Building {
                footprint: rect(90.0, 90.0, 120.0, 95.0),
                height: 10.0,
                material: "concrete".into(),
            }],
            materials(),
            10.0,
            1.5,
        )
        .unwrap_err();
        assert!(err.to_string().contains("outside bounds"));
    }

    #[test]
    fn unknown_material_is_rejected() {
        let err = Scene::new(
            Rect {
                min: Point2::new(0.0, 0.0),
                max: Point2::new(100.0, 100.0),
            },
            vec![Building {
                footprint: rect(10.0, 10.0, 20.0, 20.0),
                height: 10.0,
                material: "brick".into(),
            }],
            materials(),
            10.0,
            1.5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn grid_dimensions() {
        let g = make_grid(&scene(200.0, 200.0, 10.0)).unwrap();
        assert_eq!((g.rows, g.cols), (20, 20));
        let g = make_grid(&scene(200.0, 100.0, 10.0)).unwrap();
        assert_eq!((g.rows, g.cols), (10, 20));
        assert!(make_grid(&scene(200.0, 200.0, 300.0)).is_err());
        let g = make_grid(&scene(0.3, 0.3, 0.1)).unwrap();
        assert_eq!((g.rows, g.cols), (3, 3));
    }

    #[test]
    fn grid_centers_inside_bounds() {
        let s = scene(205.0, 97.0, 10.0);
        let g = make_grid(&s).unwrap();
        assert!(g.centers().all(|p| s.bounds.contains(p)));
        assert_eq!(g.cell_weight(), 100.0);
    }

    #[test]
    fn lattice_of_sixteen() {
        let s = scene(200.0, 200.0, 10.0);
        let spec = CandidateSpec {
            pitch: Some(50.0),
            mount_height: 20.0,
            ..Default::default()
        };
        let c = build_candidates(&s, &spec).unwrap();
        assert_eq!(c.len(), 16);
        let xs: Vec<f64> = c.sites[..4].iter().map(|s| s.position.x).collect();
        assert_eq!(xs, vec![25.0, 75.0, 125.0, 175.0]);
        assert!(c.sites.iter().all(|s| s.height == 20.0));
        // idempotent and order-stable
        assert_eq!(c, build_candidates(&s, &spec).unwrap());
    }

    #[test]
    fn ellipse_exclusion_removes_center_sites() {
        let s = scene(200.0, 200.0, 10.0);
        let zone = Region::Ellipse(Ellipse {
            center: Point2::new(100.0, 100.0),
            semi_axes: [40.0, 40.0],
            rotation_deg: 0.0,
        });
        let spec = CandidateSpec {
            pitch: Some(50.0),
            mount_height: 20.0,
            exclusions: vec![zone.clone()],
            ..Default::default()
        };
        let c = build_candidates(&s, &spec).unwrap();
        assert!(c.len() < 16);
        assert!(c.sites.iter().all(|s| !zone.contains(s.position)));
    }

    #[test]
    fn explicit_site_in_zone_is_dropped() {
        let s = scene(200.0, 200.0, 10.0);
        let spec = CandidateSpec {
            sites: vec![
                Point2::new(20.0, 20.0),
                Point2::new(100.0, 100.0),
                Point2::new(180.0, 20.0),
            ],
            mount_height: 20.0,
            exclusions: vec![Region::Polygon {
                vertices: rect(90.0, 90.0, 110.0, 110.0),
            }],
            ..Default::default()
        };
        let c = build_candidates(&s, &spec).unwrap();
        let pts: Vec<Point2> = c.sites.iter().map(|s| s.position).collect();
        assert_eq!(pts, vec![Point2::new(20.0, 20.0), Point2::new(180.0, 20.0)]);
    }

    #[test]
    fn near_duplicates_are_merged() {
        let s = scene(200.0, 200.0, 10.0);
        let spec = CandidateSpec {
            sites: vec![Point2::new(24.0, 24.0)],
            pitch: Some(50.0),
            mount_height: 20.0,
            ..Default::default()
        };
        let c = build_candidates(&s, &spec).unwrap();
        assert_eq!(c.len(), 16);
        assert_eq!(c.sites[0].position, Point2::new(24.0, 24.0));
    }

    #[test]
    fn everything_excluded_is_an_error() {
        let s = scene(200.0, 200.0, 10.0);
        let spec = CandidateSpec {
            pitch: Some(50.0),
            mount_height: 20.0,
            exclusions: vec![Region::Polygon {
                vertices: rect(0.0, 0.0, 200.0, 200.0),
            }],
            ..Default::default()
        };
        assert!(build_candidates(&s, &spec).is_err());
    }
}
