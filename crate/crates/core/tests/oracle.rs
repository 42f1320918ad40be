use std::sync::Arc;

use signorini::analytic::Scenario;
use signorini::geometry::{build_grid, NodeClass};
use signorini::solver::{discrete_energy, minimize, oracle_minimize, SolverError, SolverParams, ORACLE_MAX_FREE};

fn scenarios() -> Vec<Scenario> {
    vec![
        Scenario::constant(0.0, 2).unwrap(),
        Scenario::constant(1.0, 2).unwrap(),
        Scenario::constant(2.0, 2).unwrap().with_amplitude(0.5),
        Scenario::slit_trace(0.5, 2).unwrap(),
        Scenario::slit_trace(1.5, 2).unwrap(),
        Scenario::shifted_slit(1.5, 0.3, 2).unwrap(),
        Scenario::shifted_slit(0.5, -0.2, 2).unwrap(),
    ]
}

#[test]
fn projected_relaxation_matches_enumeration() {
    for n in [8usize, 9, 10, 11, 12] {
        let g = Arc::new(build_grid(2, 1.0 / n as f64).unwrap());
        assert!(g.count(NodeClass::ThinFree) <= ORACLE_MAX_FREE);
        for s in scenarios() {
            let (u, _) = minimize(&g, &s, &SolverParams::default()).unwrap();
            let exact = oracle_minimize(&g, &s).unwrap();
            let diff = u
                .values()
                .iter()
                .zip(exact.field.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff <= 1e-8, "1/{n} {}: {diff:e}", s.name);
            assert!(exact.field.is_admissible());
            let e = (discrete_energy(&u) - discrete_energy(&exact.field)).abs();
            assert!(e <= 1e-9, "1/{n} {}: energy gap {e:e}", s.name);
        }
    }
}

#[test]
fn nonzero_data_has_a_unique_minimizing_pattern() {
    let g = Arc::new(build_grid(2, 1.0 / 10.0).unwrap());
    for s in scenarios().into_iter().skip(1) {
        let exact = oracle_minimize(&g, &s).unwrap();
        assert_eq!(exact.tied_patterns, 1, "{}", s.name);
        assert_eq!(exact.active.len(), exact.free_nodes.len());
        for (&id, &active) in exact.free_nodes.iter().zip(&exact.active) {
            if active {
                assert_eq!(exact.field.value(id), 0.0, "{}", s.name);
            }
        }
    }
}

#[test]
fn oracle_refuses_large_grids() {
    let g = Arc::new(build_grid(2, 1.0 / 32.0).unwrap());
    let s = Scenario::constant(1.0, 2).unwrap();
    assert!(matches!(oracle_minimize(&g, &s), Err(SolverError::OracleTooLarge(_))));
}
