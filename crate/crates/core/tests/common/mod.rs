#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use txplace::geometry::{Point2, Rect};
use txplace::metrics::Aggregation;
use txplace::objective::{Objective, PriorityDensity, WeightSpec};
use txplace::optimizer::PlacementProblem;
use txplace::propagation::{field_matrix, RadioConfig};
use txplace::scenario::{Prepared, Scenario};
use txplace::scene::{build_candidates, make_grid, Building, CandidateSpec, MaterialTable, Scene};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

pub fn load_prepared(name: &str) -> (Scenario, Prepared) {
    let s = Scenario::load(scenario_path(name)).expect("scenario loads");
    let p = s.prepare(None).expect("scenario prepares");
    (s, p)
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
    vec![
        Point2::new(x0, y0),
        Point2::new(x1, y0),
        Point2::new(x1, y1),
        Point2::new(x0, y1),
    ]
}

/// A random scene of at most 30 x 30 cells with up to four buildings and
/// exactly `n_candidates` explicit sites.
pub fn random_problem(
    rng: &mut ChaCha8Rng,
    n_candidates: usize,
    weight: WeightSpec,
    mode: Aggregation,
) -> PlacementProblem {
    let spacing = 5.0;
    let cols = rng.gen_range(10..=30);
    let rows = rng.gen_range(10..=30);
    let (w, h) = (spacing * cols as f64, spacing * rows as f64);
    let bounds = Rect {
        min: Point2::new(0.0, 0.0),
        max: Point2::new(w, h),
    };
    let materials = MaterialTable {
        entries: [("concrete".to_string(), 1.0), ("glass".to_string(), 0.3)].into(),
    };
    let buildings = (0..rng.gen_range(0..=4))
        .map(|_| {
            let bw = rng.gen_range(5.0..w / 3.0);
            let bh = rng.gen_range(5.0..h / 3.0);
            let x0 = rng.gen_range(0.0..w - bw);
            let y0 = rng.gen_range(0.0..h - bh);
            Building {
                footprint: rect(x0, y0, x0 + bw, y0 + bh),
                height: rng.gen_range(5.0..40.0),
                material: if rng.gen_bool(0.5) {
                    "concrete"
                } else {
                    "glass"
                }
                .to_string(),
            }
        })
        .collect();
    let scene = Scene::new(bounds, buildings, materials, spacing, 1.5).expect("valid scene");

    let mut sites: Vec<Point2> = Vec::new();
    while sites.len() < n_candidates {
        let p = Point2::new(rng.gen_range(0.0..w), rng.gen_range(0.0..h));
        if sites.iter().all(|q| q.distance(p) >= 2.0 * spacing) {
            sites.push(p);
        }
    }
    let spec = CandidateSpec {
        sites,
        pitch: None,
        mount_height: rng.gen_range(10.0..30.0),
        exclusions: Vec::new(),
    };
    let grid = make_grid(&scene).unwrap();
    let candidates = build_candidates(&scene, &spec).unwrap();
    assert_eq!(candidates.len(), n_candidates);
    let fields = field_matrix(&candidates, &scene, &grid, &RadioConfig::default(), None).unwrap();
    let density = if rng.gen_bool(0.5) {
        PriorityDensity::uniform_outdoor(&scene, &grid).unwrap()
    } else {
        PriorityDensity::from_weights((0..grid.len()).map(|_| rng.gen_range(0.0..1.0)).collect())
            .unwrap()
    };
    let objective = Objective::new(mode, weight, density, &fields).unwrap();
    PlacementProblem::new(fields, objective).unwrap()
}
