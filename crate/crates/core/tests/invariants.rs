//! Property tests over random fields, points and data.

use std::sync::Arc;

use proptest::prelude::*;

use signorini::analytic::{slit_value, Scenario};
use signorini::cli::fieldio::{format_field, parse_field};
use signorini::field::ScalarField;
use signorini::freeboundary::decompose_thin;
use signorini::geometry::{build_grid, interpolate, mirror, GridSpec, NodeClass};
use signorini::solver::{minimize, SolverParams};

fn grid(dim: usize, n: usize) -> Arc<GridSpec> {
    Arc::new(build_grid(dim, 1.0 / n as f64).unwrap())
}

fn field_from(g: &Arc<GridSpec>, seed: &[f64]) -> ScalarField {
    ScalarField::from_fn(g.clone(), |p| {
        let k = ((p[0] + 2.0 * p[1] + 3.0 * p[2]) * 97.0).abs() as usize;
        seed[k % seed.len()] + p[0] * p[1]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_is_even_in_the_normal_coordinate(
        seed in prop::collection::vec(-1.0f64..1.0, 8..32),
        x in -0.65f64..0.65, y in -0.65f64..0.65, z in -0.5f64..0.5,
        dim in 2usize..=3,
    ) {
        let g = grid(dim, 16);
        let u = field_from(&g, &seed);
        let p = if dim == 2 { [x, y, 0.0] } else { [x, y, z] };
        prop_assume!(p.iter().map(|c| c * c).sum::<f64>() <= 0.9);
        let a = interpolate(&u, &p).unwrap();
        let b = interpolate(&u, &mirror(&p, dim)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }

    #[test]
    fn thin_decomposition_partitions_the_thin_set(
        seed in prop::collection::vec(0.0f64..1.0, 4..24),
        zero_below in 0.0f64..0.5,
        dim in 2usize..=3,
    ) {
        let g = grid(dim, if dim == 2 { 32 } else { 8 });
        let mut u = field_from(&g, &seed);
        for id in 0..g.len() {
            let v = u.value(id);
            u.values_mut()[id] = if g.class(id) == NodeClass::ThinClamped || v < zero_below { 0.0 } else { v.abs() };
        }
        let d = decompose_thin(&u, 1e-9, 3.0 * g.h());
        let thin: Vec<usize> = (0..g.len()).filter(|&i| g.class(i).is_thin()).collect();
        let mut all = d.coincidence.clone();
        all.extend(&d.positivity);
        all.sort_unstable();
        prop_assert_eq!(&all, &thin);
        prop_assert!(d.coincidence.iter().all(|i| !d.positivity.contains(i)));
        prop_assert!(d.free_boundary.iter().all(|i| d.coincidence.contains(i)));
        prop_assert!(g.ids_of(NodeClass::ThinClamped).all(|i| d.coincidence.contains(&i)));
        prop_assert_eq!(d.flags.len(), d.fixed_boundary.len());
    }

    #[test]
    fn slit_solutions_are_homogeneous(
        m in 1usize..5,
        t in 0.1f64..2.0,
        x1 in -1.0f64..1.0,
        xn in -1.0f64..1.0,
    ) {
        let kappa = m as f64 - 0.5;
        let a = slit_value(kappa, t * x1, t * xn).unwrap();
        let b = t.powf(kappa) * slit_value(kappa, x1, xn).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        prop_assert_eq!(slit_value(kappa, x1, xn).unwrap(), slit_value(kappa, x1, -xn).unwrap());
    }

    #[test]
    fn dumps_round_trip_bit_exactly(seed in prop::collection::vec(-1e6f64..1e6, 4..16), dim in 2usize..=3) {
        let g = grid(dim, 8);
        let u = field_from(&g, &seed);
        let back = parse_field(&format_field(&u), None).unwrap();
        prop_assert!(u.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solutions_are_admissible_and_positively_homogeneous_in_the_data(
        scale in 0.25f64..4.0,
        kappa_index in 0usize..3,
        offset in -0.4f64..0.4,
    ) {
        let g = grid(2, 16);
        let kappa = [0.5, 1.5, 2.5][kappa_index];
        let s = Scenario::shifted_slit(kappa, offset, 2).unwrap();
        let params = SolverParams::default();
        let (u, _) = minimize(&g, &s, &params).unwrap();
        let (v, _) = minimize(&g, &s.clone().with_amplitude(scale), &params).unwrap();
        prop_assert!(u.is_admissible() && v.is_admissible());
        let err = u.values().iter().zip(v.values()).map(|(a, b)| (scale * a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 10.0 * params.tolerance * scale.max(1.0), "{err:e}");
    }
}
