// Copyright 2026 qsd contributors
// SPDX-License-Identifier: Apache-2.0

//! Property tests for the algebraic invariants the simulator relies on:
//! whatever the operator or state, these must hold to tight tolerances.

use num_complex::Complex64;
use proptest::prelude::*;

use qsd_core::integrator::{self, IntegrationConfig, ModelSpec};
use qsd_core::linalg::{
    eigendecompose, expectation, outer_product, variance, Operator, StateVector,
};
use qsd_core::noise;

fn complex_unit() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

/// Random Hermitian operator of the given dimension, entries of order one.
fn hermitian(dim: usize) -> impl Strategy<Value = Operator> {
    prop::collection::vec(complex_unit(), dim * dim).prop_map(move |raw| {
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                entries[i * dim + j] = 0.5 * (raw[i * dim + j] + raw[j * dim + i].conj());
            }
        }
        Operator::new(dim, entries).expect("symmetrized entries are Hermitian")
    })
}

/// Random normalizable state of the given dimension.
fn state(dim: usize) -> impl Strategy<Value = StateVector> {
    prop::collection::vec(complex_unit(), dim)
        .prop_filter("needs nonzero norm", |v| {
            v.iter().map(|a| a.norm_sqr()).sum::<f64>() > 1e-6
        })
        .prop_map(|v| StateVector::new(v).expect("nonzero finite vector"))
}

fn dim_and<T: std::fmt::Debug>(
    inner: impl Fn(usize) -> BoxedStrategy<T> + Copy,
) -> impl Strategy<Value = (usize, T)> {
    (1usize..=6).prop_flat_map(move |d| inner(d).prop_map(move |v| (d, v)))
}

proptest! {
    #[test]
    fn hermitian_expectations_are_real(
        (dim, (op, psi)) in dim_and(|d| (hermitian(d), state(d)).boxed())
    ) {
        let _ = dim;
        let value = expectation(&op, &psi).unwrap();
        prop_assert!(value.im.abs() < 1e-12, "imaginary part {}", value.im);
    }

    #[test]
    fn eigendecomposition_reconstructs_the_operator(
        (dim, op) in dim_and(|d| hermitian(d).boxed())
    ) {
        let es = eigendecompose(&op).unwrap();
        let scale = es
            .eigenvalues()
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(1e-6);
        for i in 0..dim {
            for j in 0..dim {
                // (V diag V^dag)_(i,j) = sum_k lambda_k v_k[i] conj(v_k[j])
                let mut rebuilt = Complex64::new(0.0, 0.0);
                for (k, &lambda) in es.eigenvalues().iter().enumerate() {
                    let v = es.eigenvector(k);
                    rebuilt += lambda * v.amplitude(i) * v.amplitude(j).conj();
                }
                let err = (rebuilt - op.entry(i, j)).norm();
                prop_assert!(err <= 1e-9 * scale, "entry ({i},{j}) residual {err}");
            }
        }
        // Eigenvectors are orthonormal.
        for a in 0..dim {
            for b in 0..dim {
                let overlap = es.eigenvector(a).inner(es.eigenvector(b)).unwrap();
                let expected = if a == b { 1.0 } else { 0.0 };
                prop_assert!((overlap.re - expected).abs() < 1e-10);
                prop_assert!(overlap.im.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eigenvalue_groups_partition_the_spectrum(
        (dim, op) in dim_and(|d| hermitian(d).boxed())
    ) {
        let es = eigendecompose(&op).unwrap();
        let mut seen = vec![false; dim];
        for g in 0..es.group_count() {
            for &i in es.group_indices(g) {
                prop_assert!(!seen[i], "index {i} in two groups");
                seen[i] = true;
                prop_assert_eq!(es.group_of(i), g);
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn variance_vanishes_on_every_eigenvector(
        (_, op) in dim_and(|d| hermitian(d).boxed())
    ) {
        let es = eigendecompose(&op).unwrap();
        for k in 0..es.eigenvalues().len() {
            let var = variance(&op, es.eigenvector(k)).unwrap();
            prop_assert!(var.abs() < 1e-10, "eigenvector {k} variance {var}");
        }
    }

    #[test]
    fn constructed_states_have_unit_norm(
        (_, psi) in dim_and(|d| state(d).boxed())
    ) {
        prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_projectors_are_valid_density_matrices(
        (dim, psi) in dim_and(|d| state(d).boxed())
    ) {
        let rho = outer_product(&psi);
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-12);
        prop_assert!(rho.trace().im.abs() < 1e-14);
        prop_assert!(rho.min_eigenvalue().unwrap() >= -1e-9);
        // Idempotent: rho^2 = rho for a pure state.
        for i in 0..dim {
            for j in 0..dim {
                let mut sq = Complex64::new(0.0, 0.0);
                for k in 0..dim {
                    sq += rho.entry(i, k) * rho.entry(k, j);
                }
                prop_assert!((sq - rho.entry(i, j)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_steps_return_unit_norm_states(
        h in hermitian(2),
        l in hermitian(2),
        psi in state(2),
        seed in any::<u64>()
    ) {
        let model = ModelSpec::new(h, vec![l], vec!["L0".into()]).unwrap();
        let config = IntegrationConfig::new(1e-3, 1.0).unwrap();
        let mut stream = noise::derive_stream(seed, 0, 1);
        let next = integrator::step(&model, &psi, &config, &mut stream).unwrap();
        prop_assert!((next.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derived_streams_are_reproducible_and_distinct(
        seed in any::<u64>(),
        index in 0u64..1000
    ) {
        let mut a = noise::derive_stream(seed, index, 2);
        let mut b = noise::derive_stream(seed, index, 2);
        let mut other = noise::derive_stream(seed, index + 1, 2);
        for _ in 0..16 {
            let xa = a.next_increments(0.01).unwrap();
            let xb = b.next_increments(0.01).unwrap();
            prop_assert_eq!(&xa, &xb);
            let xo = other.next_increments(0.01).unwrap();
            prop_assert_ne!(&xa, &xo);
        }
    }
}
