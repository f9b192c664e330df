use proptest::prelude::*;

use hilbfs::geometry::{fs_metric, reference_metric, ManifoldModel};
use hilbfs::linalg::{c64, hs_norm, max_norm, op_norm, MatrixJson};
use hilbfs::maps::{hilb, hilb_with};
use hilbfs::par::Exec;
use hilbfs::pushforward::{dpsi0, psi0_closed, ScaleClass};
use hilbfs::random::{random_hermitian, random_pd, seeded};
use hilbfs::report::to_json_string;
use hilbfs::{CMat, HermitianForm};

fn matrix(n: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), n * n)
        .prop_map(move |v| CMat::from_fn(n, n, |i, j| c64(v[i * n + j].0, v[i * n + j].1)))
}

fn sized_matrix() -> impl Strategy<Value = CMat> {
    (1usize..8).prop_flat_map(matrix)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn norm_chain(a in sized_matrix()) {
        let n = a.nrows() as f64;
        let (op, hs, mx) = (op_norm(&a), hs_norm(&a), max_norm(&a));
        prop_assert!(op <= hs * (1.0 + 1e-12) + 1e-300);
        prop_assert!(hs <= n * mx * (1.0 + 1e-12) + 1e-300);
        prop_assert!(mx <= op * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn matrix_json_round_trip_is_bitwise(a in sized_matrix(), scale in -300i32..300) {
        let a = a * c64(10f64.powi(scale), 0.0);
        let text = to_json_string(&MatrixJson::from_matrix(&a)).unwrap();
        let back: MatrixJson = serde_json::from_str(&text).unwrap();
        let b = back.to_matrix().unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
            prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn psi0_is_scale_invariant_with_unit_trace(seed in any::<u64>(), n in 2usize..5, alpha in 0.01..100.0f64) {
        let b = random_pd(&mut seeded(seed), n, 50.0);
        let p = psi0_closed(&ScaleClass::new(&b).unwrap()).unwrap();
        let q = psi0_closed(&ScaleClass::new(&b.scaled(alpha)).unwrap()).unwrap();
        prop_assert!(max_norm(&(p.matrix() - q.matrix())) <= 1e-12);
        prop_assert!((p.matrix().trace().re - 1.0).abs() <= 1e-13);
        prop_assert!(p.min_eigenvalue() > 0.0);
    }

    #[test]
    fn dpsi0_is_traceless_hermitian(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = seeded(seed);
        let b = random_pd(&mut rng, n, 10.0);
        let a = random_hermitian(&mut rng, n);
        let d = dpsi0(&b, &a).unwrap();
        prop_assert!(d.trace().abs() <= 1e-12);
        prop_assert!(max_norm(&(d.matrix() - d.matrix().adjoint())) == 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trace_identity(seed in any::<u64>(), k in 1u32..5) {
        let m = ManifoldModel::p1_default(1, k).unwrap();
        let h = random_pd(&mut seeded(seed), m.n_sections(), 100.0);
        let g = hilb(&m, &fs_metric(&m, &h).unwrap()).unwrap();
        let tr = (h.inverse().unwrap().matrix() * g.matrix()).trace().re;
        prop_assert!((tr - m.n_sections() as f64).abs() <= 1e-8);
    }

    #[test]
    fn fs_shifts_potential_under_scaling(seed in any::<u64>(), c in 0.01..100.0f64) {
        let m = ManifoldModel::p1_default(1, 2).unwrap();
        let h = random_pd(&mut seeded(seed), 3, 10.0);
        let u = fs_metric(&m, &h).unwrap();
        let v = fs_metric(&m, &h.scaled(c)).unwrap();
        for (a, b) in u.potential().iter().zip(v.potential()) {
            // |s|²_{FS(cH)} = |s|²_{FS(H)} / c
            prop_assert!((b - a + c.ln()).abs() <= 1e-12);
        }
    }

    #[test]
    fn hilb_is_basis_equivariant(seed in any::<u64>()) {
        let m = ManifoldModel::p1_default(1, 2).unwrap();
        let a = random_pd(&mut seeded(seed), 3, 5.0).into_matrix()
            + CMat::from_fn(3, 3, |i, j| c64(0.0, 0.1 * (i as f64 - j as f64)));
        let g = hilb(&m, &reference_metric(&m)).unwrap();
        let mb = m.with_basis(&a).unwrap();
        let gb = hilb(&mb, &reference_metric(&mb)).unwrap();
        let want = HermitianForm::new(&a * g.matrix() * a.adjoint()).unwrap();
        prop_assert!(max_norm(&(gb.matrix() - want.matrix())) <= 1e-10 * max_norm(want.matrix()));
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise(seed in any::<u64>()) {
        let m = ManifoldModel::p1_default(1, 3).unwrap();
        let metric = fs_metric(&m, &random_pd(&mut seeded(seed), 4, 10.0)).unwrap();
        let a = hilb_with(Exec::Sequential, &m, &metric).unwrap();
        let b = hilb_with(Exec::Parallel, &m, &metric).unwrap();
        prop_assert_eq!(a.matrix(), b.matrix());
    }
}
