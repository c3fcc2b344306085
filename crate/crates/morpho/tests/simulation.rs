use std::f64::consts::PI;

use morpho_sim::sim::initial_tissue;
use morpho_sim::*;

fn ks_uniform(samples: &[f64], lo: f64, hi: f64) -> f64 {
    let mut x: Vec<f64> = samples.iter().map(|&s| (s - lo) / (hi - lo)).collect();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &u)| (u - i as f64 / n).max((i + 1) as f64 / n - u))
        .fold(0.0, f64::max)
}

fn random_orientation_config() -> SimulationConfig {
    SimulationConfig {
        r_angle: 1.0,
        steps: 2000,
        max_cells: 520,
        seed: 7,
        ..SimulationConfig::default()
    }
}

#[test]
fn random_orientations_are_uniform() {
    let cfg = random_orientation_config();
    let out = simulate(&cfg, &default_initial_tissue(cfg.seed).unwrap()).unwrap();
    let angles: Vec<f64> = out.divisions.iter().map(|e| e.angle).collect();
    assert!(angles.len() >= 500, "only {} divisions", angles.len());
    let angles = &angles[..500];
    assert!(out.divisions.iter().all(|e| e.random_orientation));
    assert!(angles.iter().all(|&a| (0.0..PI).contains(&a)));
    let d = ks_uniform(angles, 0.0, PI);
    assert!(d < 1.358 / (500f64).sqrt(), "KS statistic {d}");
}

#[test]
fn ks_oracle_rejects_a_skewed_sample() {
    let skewed: Vec<f64> = (0..500).map(|i| PI * (i as f64 / 500.0).powi(2)).collect();
    assert!(ks_uniform(&skewed, 0.0, PI) > 1.358 / (500f64).sqrt());
}

#[test]
fn divisions_partition_parent_area() {
    let cfg = SimulationConfig {
        r_angle: 0.5,
        r_div: 1e-4,
        steps: 400,
        max_cells: 200,
        seed: 3,
        ..SimulationConfig::default()
    };
    let out = simulate(&cfg, &default_initial_tissue(3).unwrap()).unwrap();
    assert!(!out.divisions.is_empty());
    for e in &out.divisions {
        let sum = e.child_areas[0] + e.child_areas[1];
        assert!((sum - e.parent_area).abs() <= 1e-9 * e.parent_area, "{e:?}");
        assert!(e.child_areas.iter().all(|&a| a > 0.0));
    }
}

#[test]
fn total_area_follows_growth_only() {
    let init = initial_tissue(2, 11).unwrap();
    let a0 = init.total_area();
    let cfg = SimulationConfig {
        r_angle: 0.3,
        r_div: 1e-4,
        vertex_exclusion: 0.1,
        steps: 300,
        max_cells: 10_000,
        seed: 11,
        ..SimulationConfig::default()
    };
    let out = simulate(&cfg, &init).unwrap();
    assert_eq!(out.steps_run, 300);
    let expected = a0 * (1.0 + cfg.growth_rate).powi(300);
    let rel = (out.tessellation.total_area() - expected).abs() / expected;
    assert!(rel < 1e-6 * 300.0, "relative drift {rel}");
    let areas = out.tessellation.areas();
    assert!(areas.iter().all(|&a| a > 0.0));
}

#[test]
fn cell_count_never_decreases() {
    let cfg = SimulationConfig {
        r_angle: 0.1,
        steps: 500,
        max_cells: 150,
        seed: 5,
        ..SimulationConfig::default()
    };
    let init = default_initial_tissue(5).unwrap();
    let out = simulate(&cfg, &init).unwrap();
    assert!(out.divisions.windows(2).all(|w| w[0].step <= w[1].step));
    for (i, e) in out.divisions.iter().enumerate() {
        assert_eq!(e.new_cell, init.num_cells() + i);
    }
    assert_eq!(out.tessellation.num_cells(), init.num_cells() + out.divisions.len());
    assert!(out.tessellation.num_cells() <= cfg.max_cells);
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let cfg = SimulationConfig {
        r_angle: 0.5,
        r_div: 3e-5,
        steps: 300,
        max_cells: 150,
        seed: 21,
        ..SimulationConfig::default()
    };
    let run = |c: &SimulationConfig| simulate(c, &default_initial_tissue(c.seed).unwrap()).unwrap();
    let (a, b) = (run(&cfg), run(&cfg));
    assert_eq!(a, b);
    assert_eq!(a.tessellation.to_json_string().unwrap(), b.tessellation.to_json_string().unwrap());
    let other = run(&SimulationConfig { seed: 22, ..cfg.clone() });
    let angles = |r: &SimulationResult| r.divisions.iter().map(|e| e.angle).collect::<Vec<_>>();
    assert_ne!(angles(&a), angles(&other));
}

#[test]
fn mesh_file_round_trips() {
    let cfg = SimulationConfig { steps: 200, max_cells: 60, seed: 2, ..SimulationConfig::default() };
    let out = simulate(&cfg, &default_initial_tissue(2).unwrap()).unwrap();
    let json = out.tessellation.to_json_string().unwrap();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    for key in ["vertices", "walls", "cells"] {
        assert!(value.get(key).is_some(), "missing {key}");
    }
    let back = Tessellation::from_json_str(&json).unwrap();
    assert_eq!(back.to_json_string().unwrap(), json);
}

#[test]
fn extracted_graphs_are_valid_and_central() {
    let cfg = SimulationConfig { steps: 1000, max_cells: 300, seed: 4, ..SimulationConfig::default() };
    let out = simulate(&cfg, &default_initial_tissue(4).unwrap()).unwrap();
    let ex = ExtractConfig { neighborhood: 16, ..ExtractConfig::default() };
    let graphs = extract_graphs(&out.tessellation, &ex, 0, "t").unwrap();
    assert!(!graphs.is_empty());
    for g in &graphs {
        assert_eq!(g.n(), 16);
        for e in g.edges() {
            assert!(e.i < e.j && e.attr[0] > 0.0 && e.attr[2] > 0.0);
        }
    }
}
