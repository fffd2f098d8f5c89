//! Property tests over random grids, metrics and fields.
//!
//! Fields are generated from a seeded xorshift so shrinking works on the
//! scalar parameters; band-limited tensors are used where the centered
//! stencils are blind to Nyquist modes.

use proptest::prelude::*;

use harmflow::grid::{build_grid, EmbeddedField, VectorField2};
use harmflow::metric::{MetricField, TeichParams};
use harmflow::ops::{dirichlet_energy, vector_l2};
use harmflow::projection::{horizontal_basis, project_basis_with};
use harmflow::rng::SimRng;
use harmflow::tensor::{divergence, inner_l2, lie_derivative, trace, SymTensorField};

fn params() -> impl Strategy<Value = (usize, usize, f64, f64, u64)> {
    (8usize..20, 8usize..20, -0.9f64..0.9, 0.4f64..2.2, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn inner_l2_symmetric_and_positive((nx, ny, a, b, seed) in params()) {
        let grid = build_grid(nx, ny).unwrap();
        let g = MetricField::flat(grid, TeichParams::new(a, b).unwrap());
        let mut rng = SimRng::new(seed);
        let k = SymTensorField::random_smooth(grid, &mut rng);
        let h = SymTensorField::random_smooth(grid, &mut rng);
        let kh = inner_l2(&g, &k, &h).unwrap();
        let hk = inner_l2(&g, &h, &k).unwrap();
        prop_assert!((kh - hk).abs() <= 1e-12 * (1.0 + kh.abs()));
        let kk = inner_l2(&g, &k, &k).unwrap();
        prop_assert!(kk >= 0.0);
        if k.max_abs() > 1e-6 {
            prop_assert!(kk > 0.0);
        }
    }

    #[test]
    fn divergence_lie_adjoint_identity((nx, ny, a, b, seed) in params()) {
        let grid = build_grid(nx, ny).unwrap();
        let g = MetricField::flat(grid, TeichParams::new(a, b).unwrap());
        let mut rng = SimRng::new(seed);
        let k = SymTensorField::random_smooth(grid, &mut rng);
        let xf = VectorField2::from_fn(grid, |_, _| (rng.symmetric(), rng.symmetric()));
        let lhs = vector_l2(&g, &divergence(&g, &k).unwrap(), &xf);
        let rhs = inner_l2(&g, &k, &lie_derivative(&g, &xf).unwrap()).unwrap();
        prop_assert!((lhs + rhs).abs() <= 1e-11 * (1.0 + rhs.abs()), "lhs {} rhs {}", lhs, rhs);
    }

    #[test]
    fn hopf_tensor_trace_free((nx, ny, a, b, seed) in params()) {
        let grid = build_grid(nx, ny).unwrap();
        let g = MetricField::flat(grid, TeichParams::new(a, b).unwrap());
        let mut rng = SimRng::new(seed);
        let u = EmbeddedField::from_fn(grid, 3, |_, _, out| {
            for v in out.iter_mut() {
                *v = rng.symmetric();
            }
        });
        let k = harmflow::tensor::hopf_real_tensor(&u, &g).unwrap();
        let tr = trace(&g, &k).unwrap();
        let scale = 1.0 + k.max_abs();
        prop_assert!(tr.max_abs() <= 1e-12 * scale, "max |tr| = {}", tr.max_abs());
    }

    #[test]
    fn hopf_frame_roundtrip((nx, ny, a, b, seed) in params()) {
        let grid = build_grid(nx, ny).unwrap();
        let g = MetricField::flat(grid, TeichParams::new(a, b).unwrap());
        let mut rng = SimRng::new(seed);
        let u = EmbeddedField::from_fn(grid, 3, |_, _, out| {
            for v in out.iter_mut() {
                *v = rng.symmetric();
            }
        });
        let k = harmflow::tensor::hopf_real_tensor(&u, &g).unwrap();
        let q = harmflow::tensor::hopf_complex(&u, &g).unwrap();
        let back = q.to_real_tensor();
        let scale = 1.0 + k.max_abs();
        let mut diff = back;
        diff.axpy(-1.0, &k);
        prop_assert!(diff.max_abs() <= 1e-10 * scale);
    }

    #[test]
    fn projection_idempotent_and_contractive((nx, ny, a, b, seed) in params()) {
        let grid = build_grid(nx, ny).unwrap();
        let g = MetricField::flat(grid, TeichParams::new(a, b).unwrap());
        let basis = horizontal_basis(&g).unwrap();
        let mut rng = SimRng::new(seed);
        let k = SymTensorField::random_smooth(grid, &mut rng);
        let p = project_basis_with(&g, &basis, &k).unwrap();
        let pp = project_basis_with(&g, &basis, &p).unwrap();
        let mut diff = pp.clone();
        diff.axpy(-1.0, &p);
        prop_assert!(diff.max_abs() <= 1e-10 * (1.0 + p.max_abs()));
        // orthogonal projection never increases the norm
        let nk = inner_l2(&g, &k, &k).unwrap();
        let np = inner_l2(&g, &p, &p).unwrap();
        prop_assert!(np <= nk * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn dirichlet_energy_nonnegative_and_detects_variation((nx, ny, a, b, seed) in params()) {
        let grid = build_grid(nx, ny).unwrap();
        let g = MetricField::flat(grid, TeichParams::new(a, b).unwrap());
        let mut rng = SimRng::new(seed);
        let u = EmbeddedField::from_fn(grid, 3, |_, _, out| {
            for v in out.iter_mut() {
                *v = rng.symmetric();
            }
        });
        let e = dirichlet_energy(&u, &g).unwrap();
        prop_assert!(e >= 0.0);
        // random fields vary across cells, so the energy is strictly positive
        prop_assert!(e > 0.0);
        let constant = EmbeddedField::from_fn(grid, 3, |_, _, out| out.copy_from_slice(&[0.3, -0.1, 0.7]));
        prop_assert_eq!(dirichlet_energy(&constant, &g).unwrap(), 0.0);
    }
}
