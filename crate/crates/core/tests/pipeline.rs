mod common;

use txplace::metrics::TransmitterSet;
use txplace::optimizer::{
    feasibility_precheck, ia_spa, OptimizerConfig, TerminatedBy, Termination,
};
use txplace::propagation::{export_field, field_matrix, import_field, FieldCache};
use txplace::scenario::Scenario;
use txplace::scene::{build_candidates, load_scene, make_grid};
use txplace::Error;

use common::{load_prepared, scenario_path};

#[test]
fn toy_scene_loads() {
    let scene = load_scene(scenario_path("toy_city.toml")).unwrap();
    assert_eq!(scene.buildings.len(), 8);
    assert_eq!(scene.materials.entries.len(), 2);
    let grid = make_grid(&scene).unwrap();
    assert_eq!((grid.rows, grid.cols), (16, 20));
}

#[test]
fn scenario_errors_are_classified() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[bounds\n").unwrap();
    assert_eq!(Scenario::load(&bad).unwrap_err().class(), "parse");
    assert_eq!(
        Scenario::load(dir.path().join("missing.toml"))
            .unwrap_err()
            .class(),
        "io"
    );
    let text = std::fs::read_to_string(scenario_path("toy_city.toml"))
        .unwrap()
        .replace("[172.0, 130.0]", "[272.0, 130.0]");
    std::fs::write(&bad, text).unwrap();
    assert_eq!(Scenario::load(&bad).unwrap_err().class(), "validation");
}

#[test]
fn field_matrix_shape_and_cache() {
    let (scenario, prepared) = load_prepared("toy_city.toml");
    assert_eq!(prepared.problem.fields.len(), 20);
    assert!(prepared
        .problem
        .fields
        .iter()
        .all(|f| f.values.len() == 320));

    let dir = tempfile::tempdir().unwrap();
    let cache = FieldCache::open(dir.path()).unwrap();
    let cold = scenario.prepare(Some(&cache)).unwrap();
    assert_eq!(cache.stats().misses, 20);
    let warm = scenario.prepare(Some(&cache)).unwrap();
    assert_eq!(cache.stats().hits, 20);
    for ((a, b), c) in cold
        .problem
        .fields
        .iter()
        .zip(&warm.problem.fields)
        .zip(&prepared.problem.fields)
    {
        assert_eq!(a.values, b.values);
        assert_eq!(a.values, c.values);
    }
}

#[test]
fn fields_do_not_depend_on_candidate_order() {
    let (scenario, prepared) = load_prepared("toy_city.toml");
    let mut candidates = prepared.candidates.clone();
    candidates.sites.reverse();
    let reversed = field_matrix(
        &candidates,
        &scenario.scene,
        &prepared.grid,
        &scenario.radio,
        None,
    )
    .unwrap();
    for (a, b) in reversed.iter().rev().zip(&prepared.problem.fields) {
        assert_eq!(a.values, b.values);
    }
}

#[test]
fn imported_fields_reproduce_the_problem() {
    let (scenario, prepared) = load_prepared("toy_city.toml");
    let dir = tempfile::tempdir().unwrap();
    let imported = prepared
        .problem
        .fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.path().join(format!("{i}.txt"));
            export_field(&path, f).unwrap();
            import_field(&path, &prepared.grid, f.site).unwrap()
        })
        .collect();
    let again = scenario
        .prepare_with_fields(prepared.grid.clone(), prepared.candidates.clone(), imported)
        .unwrap();
    assert_eq!(again.problem.fingerprint(), prepared.problem.fingerprint());
}

/// Plain greedy that re-evaluates `S` from scratch for every candidate and
/// breaks ties by the lowest index.
fn naive_greedy(prepared: &txplace::scenario::Prepared, k: usize) -> Vec<usize> {
    let problem = &prepared.problem;
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..k {
        let base = problem.s_eval(&TransmitterSet::selected(chosen.clone()));
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for x in 0..problem.n_candidates() {
            if chosen.contains(&x) {
                continue;
            }
            let mut with = chosen.clone();
            with.push(x);
            let g = problem.s_eval(&TransmitterSet::selected(with)) - base;
            if g > best.0 {
                best = (g, x);
            }
        }
        chosen.push(best.1);
    }
    chosen
}

#[test]
fn greedy_matches_naive_reference() {
    let (_, prepared) = load_prepared("toy_city.toml");
    let cfg = OptimizerConfig {
        termination: Termination::Budget(3),
        ..prepared.config.clone()
    };
    let result = ia_spa(&prepared.problem, &cfg).unwrap();
    assert!(result.trajectory.iter().all(|r| r.omega_size == 1));
    assert_eq!(result.selection.selected, naive_greedy(&prepared, 3));
}

#[test]
fn lazy_schedule_matches_eager() {
    let (_, prepared) = load_prepared("toy_city.toml");
    let eager = ia_spa(&prepared.problem, &prepared.config).unwrap();
    let lazy = ia_spa(
        &prepared.problem,
        &OptimizerConfig {
            lazy: true,
            ..prepared.config.clone()
        },
    )
    .unwrap();
    assert!(lazy.lazy_used);
    assert_eq!(lazy.selection, eager.selection);
    assert_eq!(lazy.final_value(), eager.final_value());
    assert!(lazy.gain_evaluations < eager.gain_evaluations);
}

#[test]
fn coverage_target_on_toy() {
    let (_, prepared) = load_prepared("toy_city.toml");
    let all = feasibility_precheck(&prepared.problem);
    let target = 0.97 * all;
    let result = ia_spa(
        &prepared.problem,
        &OptimizerConfig {
            termination: Termination::Coverage(target),
            ..prepared.config.clone()
        },
    )
    .unwrap();
    assert_eq!(result.terminated_by, TerminatedBy::Coverage);
    assert!(result.final_value() >= target);
    let before = result.trajectory[result.trajectory.len() - 2].value_after;
    assert!(before < target);

    let err = ia_spa(
        &prepared.problem,
        &OptimizerConfig {
            termination: Termination::Coverage(all * 1.01),
            ..prepared.config.clone()
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::InfeasibleTarget { .. }));
}

#[test]
fn exclusion_removes_center_candidates() {
    let (scenario, prepared) = load_prepared("toy_exclusion.toml");
    assert_eq!(prepared.candidates.len(), 14);
    let unconstrained = build_candidates(
        &scenario.scene,
        &txplace::scene::CandidateSpec {
            exclusions: Vec::new(),
            ..scenario.candidates.clone()
        },
    )
    .unwrap();
    assert_eq!(unconstrained.len(), 20);
}
