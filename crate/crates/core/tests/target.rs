use cflow_core::target::SpaceForm;
use proptest::prelude::*;

/// `Γ^a_{bc} = ½h^{ad}(∂_b h_dc + ∂_c h_db − ∂_d h_bc)` with `∂h` from central
/// differences of `metric_h`.
fn christoffel_fd(t: &SpaceForm, y: &[f64], eps: f64) -> Vec<f64> {
    let n = t.dim();
    let dh: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|d| {
            let mut p = y.to_vec();
            let mut m = y.to_vec();
            p[d] += eps;
            m[d] -= eps;
            let (hp, hm) = (t.metric_h(&p).unwrap(), t.metric_h(&m).unwrap());
            (0..n).map(|a| (0..n).map(|b| (hp[a][b] - hm[a][b]) / (2.0 * eps)).collect()).collect()
        })
        .collect();
    let h = nalgebra::DMatrix::from_fn(n, n, |a, b| t.metric_h(y).unwrap()[a][b]);
    let hinv = h.try_inverse().unwrap();
    let mut out = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                out[(a * n + b) * n + c] =
                    0.5 * (0..n).map(|d| hinv[(a, d)] * (dh[b][d][c] + dh[c][d][b] - dh[d][b][c])).sum::<f64>();
            }
        }
    }
    out
}

/// `R(X,Y)Z` from `R^a_{bcd} = ∂_cΓ^a_{db} − ∂_dΓ^a_{cb} + Γ^a_{ce}Γ^e_{db} − Γ^a_{de}Γ^e_{cb}`
/// with `∂Γ` by central differences of `christoffel_n`.
fn curvature_fd(t: &SpaceForm, y: &[f64], x: &[f64], yv: &[f64], z: &[f64], eps: f64) -> Vec<f64> {
    let n = t.dim();
    let g = t.christoffel_n(y).unwrap();
    let gm = |a: usize, b: usize, c: usize| g[(a * n + b) * n + c];
    let dg: Vec<Vec<f64>> = (0..n)
        .map(|d| {
            let mut p = y.to_vec();
            let mut m = y.to_vec();
            p[d] += eps;
            m[d] -= eps;
            let (gp, gn) = (t.christoffel_n(&p).unwrap(), t.christoffel_n(&m).unwrap());
            gp.iter().zip(&gn).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
        })
        .collect();
    let mut out = vec![0.0; n];
    for (a, o) in out.iter_mut().enumerate() {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let mut r = dg[c][(a * n + d) * n + b] - dg[d][(a * n + c) * n + b];
                    for e in 0..n {
                        r += gm(a, c, e) * gm(e, d, b) - gm(a, d, e) * gm(e, c, b);
                    }
                    *o += r * z[b] * x[c] * yv[d];
                }
            }
        }
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn ball_point() -> impl Strategy<Value = (usize, f64, Vec<f64>)> {
    (1usize..=4, -3.0f64..-0.2).prop_flat_map(|(n, k)| {
        (Just(n), Just(k), prop::collection::vec(-1.0f64..1.0, n).prop_map(move |v| {
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let cap = 0.7 / (n as f64).sqrt();
            v.into_iter().map(|x| if r > 0.7 { x * cap } else { x }).collect()
        }))
    })
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

#[test]
fn christoffels_match_metric_differences_at_second_order() {
    let t = SpaceForm::ball(3, -1.0).unwrap();
    let y = [0.5, 0.1, -0.2];
    let exact = t.christoffel_n(&y).unwrap();
    let e1 = max_diff(&exact, &christoffel_fd(&t, &y, 1e-3));
    let e2 = max_diff(&exact, &christoffel_fd(&t, &y, 5e-4));
    assert!((e1 / e2).log2() >= 1.9, "errors {e1} {e2}");
    let on_axis = [0.5, 0.0, 0.0, 0.0];
    let t4 = SpaceForm::ball(4, -1.0).unwrap();
    let err = max_diff(&t4.christoffel_n(&on_axis).unwrap(), &christoffel_fd(&t4, &on_axis, 1e-5));
    assert!(err <= 1e-6, "err {err}");
}

#[test]
fn orthonormal_pair_at_origin() {
    let t = SpaceForm::ball(3, -1.0).unwrap();
    // h(0) = 4·Id, so these are orthonormal
    let x = [0.5, 0.0, 0.0];
    let z = [0.0, 0.0, 0.5];
    let r = t.curv_op(&[0.0; 3], &x, &z, &z).unwrap();
    assert!(max_diff(&r, &[-0.5, 0.0, 0.0]) <= 1e-15);
}

#[test]
fn wrap_reduces_into_fundamental_domain() {
    let t = SpaceForm::torus(vec![1.0, 2.5]).unwrap();
    let w = t.wrap(&[3.75, -0.5]).unwrap();
    assert!(max_diff(&w, &[0.75, 2.0]) <= 1e-15);
    assert_eq!(t.wrap(&[0.0, 2.5]).unwrap(), vec![0.0, 0.0]);
    assert!(t.wrap(&[f64::NAN, 0.0]).is_err());
    assert!(t.wrap(&[0.1]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn curvature_matches_christoffel_differences((n, k, y) in ball_point(), seed in any::<u64>()) {
        let t = SpaceForm::ball(n, k).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut v = || (0..n).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect::<Vec<f64>>();
        let (x, yv, z) = (v(), v(), v());
        let exact = t.curv_op(&y, &x, &yv, &z).unwrap();
        let fd = curvature_fd(&t, &y, &x, &yv, &z, 1e-5);
        let scale = exact.iter().chain(&fd).fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(max_diff(&exact, &fd) <= 1e-6 * scale, "{exact:?} vs {fd:?}");
    }

    #[test]
    fn curvature_operator_antisymmetries((n, k, y) in ball_point(), x in vector(4), yv in vector(4), z in vector(4), w in vector(4)) {
        let t = SpaceForm::ball(n, k).unwrap();
        let (x, yv, z, w) = (&x[..n], &yv[..n], &z[..n], &w[..n]);
        let r = t.curv_op(&y, x, yv, z).unwrap();
        let swapped = t.curv_op(&y, yv, x, z).unwrap();
        prop_assert!(r.iter().zip(&swapped).all(|(a, b)| (a + b).abs() <= 1e-12 * (1.0 + a.abs())));
        // ⟨R(X,Y)Z, W⟩ = −⟨R(X,Y)W, Z⟩
        let a = t.inner(&y, &r, w).unwrap();
        let b = t.inner(&y, &t.curv_op(&y, x, yv, w).unwrap(), z).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn sectional_curvature_is_constant_and_nonpositive((n, k, y) in ball_point(), x in vector(4), yv in vector(4)) {
        prop_assume!(n >= 2);
        let t = SpaceForm::ball(n, k).unwrap();
        let (x, yv) = (&x[..n], &yv[..n]);
        let area = t.inner(&y, x, x).unwrap() * t.inner(&y, yv, yv).unwrap() - t.inner(&y, x, yv).unwrap().powi(2);
        prop_assume!(area > 1e-6);
        let sec = t.inner(&y, &t.curv_op(&y, x, yv, yv).unwrap(), x).unwrap() / area;
        prop_assert!(sec <= 1e-12);
        prop_assert!((sec - k).abs() <= 1e-9 * k.abs());
    }

    #[test]
    fn wrap_is_idempotent_and_shift_invariant(y in vector(3), m in prop::collection::vec(-5i32..5, 3)) {
        let t = SpaceForm::torus(vec![1.0, 0.5, 3.0]).unwrap();
        let w = t.wrap(&y).unwrap();
        prop_assert_eq!(t.wrap(&w).unwrap(), w.clone());
        let p = t.periods().unwrap();
        prop_assert!(w.iter().zip(p).all(|(v, p)| *v >= 0.0 && v < p));
        let shifted: Vec<f64> = y.iter().zip(p).zip(&m).map(|((v, p), k)| v + f64::from(*k) * p).collect();
        let agree = t.wrap(&shifted).unwrap().iter().zip(&w).zip(p).all(|((a, b), p)| {
            let d = (a - b).abs();
            d <= 1e-12 || (p - d).abs() <= 1e-12
        });
        prop_assert!(agree);
    }
}
