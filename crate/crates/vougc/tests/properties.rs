//! Property-based checks of the numerical invariants: solver residuals,
//! algebraic identities, path agreements, and round trips on randomized
//! inputs.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use vougc::formats::{dump_vou_model, parse_vou_model};
use vougc::gc::{
    conditional_rate, conditional_rate_path, pairwise_graph, Partition, RiccatiPath, VouModel,
};
use vougc::langevin::{builtin_lorenz, linearize, lorenz_det_j};
use vougc::linalg::{
    care_solve, expm, lyapunov_solve, max_abs, pbh_detectable, spectrum, symmetrize,
    van_loan_integral,
};
use vougc::map::pairwise_sum;
use vougc::oracle::{rate_via_subsampling, subsample};

fn entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n * n)
}

fn square(n: usize, vals: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, vals)
}

/// Shift the diagonal so the spectrum sits strictly left of the axis.
fn make_hurwitz(mut a: DMatrix<f64>) -> DMatrix<f64> {
    let shift = spectrum(&a).unwrap().max_real_part + 0.5;
    for i in 0..a.nrows() {
        a[(i, i)] -= shift;
    }
    a
}

fn make_spd(b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = b.nrows();
    b * b.transpose() + DMatrix::identity(n, n) * 0.5
}

fn stable_model(n: usize, a_vals: &[f64], s_vals: &[f64]) -> VouModel {
    let a = make_hurwitz(square(n, a_vals));
    let sigma = make_spd(&square(n, s_vals));
    VouModel::new(a, sigma).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // matrix exponential semigroup property
    #[test]
    fn expm_semigroup(vals in entries(3), s in 0.05f64..1.0, t in 0.05f64..1.0) {
        let a = square(3, &vals);
        let whole = expm(&a, s + t).unwrap();
        let split = expm(&a, s).unwrap() * expm(&a, t).unwrap();
        let scale = max_abs(&whole).max(1.0);
        prop_assert!(max_abs(&(&whole - &split)) <= 1e-10 * scale);
    }

    // Lyapunov solution is symmetric with a small residual
    #[test]
    fn lyapunov_residual(a_vals in entries(4), q_vals in entries(4)) {
        let a = make_hurwitz(square(4, &a_vals));
        let q = make_spd(&square(4, &q_vals));
        let p = lyapunov_solve(&a, &q).unwrap();
        prop_assert!(max_abs(&(&p - p.transpose())) <= 1e-12 * max_abs(&p).max(1.0));
        let res = &a * &p + &p * a.transpose() + &q;
        prop_assert!(max_abs(&res) <= 1e-10 * max_abs(&q).max(1.0));
    }

    // with no quadratic term the Riccati equation is a Lyapunov equation
    #[test]
    fn care_reduces_to_lyapunov(a_vals in entries(3), q_vals in entries(3)) {
        let ahat = make_hurwitz(square(3, &a_vals));
        let qhat = make_spd(&square(3, &q_vals));
        let zero = DMatrix::zeros(3, 3);
        let care = care_solve(&ahat, &zero, &qhat).unwrap();
        let lyap = lyapunov_solve(&ahat, &qhat).unwrap();
        let scale = max_abs(&lyap).max(1.0);
        prop_assert!(max_abs(&(&care.p - &lyap)) <= 1e-10 * scale);
    }

    // (1/h) integral_0^h e^{Au} Q e^{A^T u} du -> Q as h -> 0
    #[test]
    fn van_loan_small_h(a_vals in entries(3), q_vals in entries(3)) {
        let a = square(3, &a_vals);
        let q = make_spd(&square(3, &q_vals));
        let h = 1e-5;
        let integral = van_loan_integral(&a, &q, h).unwrap();
        let diff = max_abs(&(integral / h - &q));
        prop_assert!(diff <= 1e-3 * max_abs(&q).max(1.0));
    }

    // a Hurwitz source block is always detectable, whatever the observation
    #[test]
    fn hurwitz_is_detectable(a_vals in entries(3), c_vals in prop::collection::vec(-2.0f64..2.0, 6)) {
        let a33 = make_hurwitz(square(3, &a_vals));
        let c = DMatrix::from_row_slice(2, 3, &c_vals);
        prop_assert!(pbh_detectable(&a33, &c, 1e-10).unwrap());
    }

    // scalar-quadratic and Hamiltonian Riccati paths agree
    #[test]
    fn riccati_paths_agree(a_vals in entries(3), s_vals in entries(3)) {
        let model = stable_model(3, &a_vals, &s_vals);
        let part = Partition::new(3, vec![0], vec![1], vec![2]).unwrap();
        let fast = conditional_rate_path(&model, &part, RiccatiPath::Auto).unwrap();
        let slow = conditional_rate_path(&model, &part, RiccatiPath::ForceGeneral).unwrap();
        let scale = fast.rate.abs().max(1e-6);
        prop_assert!((fast.rate - slow.rate).abs() <= 1e-10 * scale);
    }

    // rates are invariant under Sigma -> nu Sigma and te = rate/2 exactly
    #[test]
    fn scale_invariance_and_te(a_vals in entries(3), s_vals in entries(3), log_nu in -6.0f64..6.0) {
        let model = stable_model(3, &a_vals, &s_vals);
        let part = Partition::new(3, vec![0], vec![1], vec![2]).unwrap();
        let base = conditional_rate(&model, &part).unwrap();
        prop_assert_eq!(base.te_rate.to_bits(), (base.rate / 2.0).to_bits());
        let nu = 10f64.powf(log_nu);
        let scaled = conditional_rate(&model.scaled_sigma(nu).unwrap(), &part).unwrap();
        let rel = (scaled.rate - base.rate).abs() / base.rate.abs().max(1e-300);
        prop_assert!(rel <= 1e-8, "rel = {}", rel);
    }

    // graph entries match the dedicated conditional computation bitwise
    #[test]
    fn graph_matches_conditional(a_vals in entries(3), s_vals in entries(3)) {
        let model = stable_model(3, &a_vals, &s_vals);
        let g = pairwise_graph(&model).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j { continue; }
                let part = Partition::pairwise(3, i, j).unwrap();
                let direct = conditional_rate(&model, &part).unwrap();
                prop_assert_eq!(g.rate(i, j).unwrap().to_bits(), direct.rate.to_bits());
            }
        }
    }

    // subsampled VAR(1) satisfies the stationarity identity, and the GC
    // estimate is nonnegative
    #[test]
    fn subsampling_consistency(a_vals in entries(3), s_vals in entries(3), dt in 0.01f64..0.5) {
        let model = stable_model(3, &a_vals, &s_vals);
        let v = subsample(&model, dt).unwrap();
        let omega = lyapunov_solve(model.drift(), model.sigma()).unwrap();
        let res = &omega - &v.abar * &omega * v.abar.transpose() - &v.sigma_bar;
        prop_assert!(max_abs(&res) <= 1e-9 * max_abs(&omega).max(1.0));
        let part = Partition::new(3, vec![0], vec![1], vec![2]).unwrap();
        let f = rate_via_subsampling(&model, &part, dt).unwrap();
        prop_assert!(f >= -1e-12);
    }

    // model document round trip is bitwise
    #[test]
    fn model_round_trip(a_vals in entries(3), s_vals in entries(3)) {
        let model = stable_model(3, &a_vals, &s_vals);
        let text = dump_vou_model(&model);
        let back = parse_vou_model(&text).unwrap();
        prop_assert_eq!(model.drift(), back.drift());
        prop_assert_eq!(model.sigma(), back.sigma());
    }

    // pairwise summation agrees with a compensated reference
    #[test]
    fn pairwise_sum_accuracy(vals in prop::collection::vec(-1e6f64..1e6, 1..200)) {
        let mut kahan = 0.0f64;
        let mut comp = 0.0f64;
        for &v in &vals {
            let y = v - comp;
            let t = kahan + y;
            comp = (t - kahan) - y;
            kahan = t;
        }
        let p = pairwise_sum(&vals);
        prop_assert!((p - kahan).abs() <= 1e-9 * kahan.abs().max(1.0));
    }
}

// Expression trees: the symbolic derivative tracks central finite differences.
mod symbolic {
    use super::*;
    use vougc::langevin::expr::{bin, call, neg, BinOp, Expr, Func};

    fn leaf() -> impl Strategy<Value = Expr> {
        prop_oneof![
            (-2.0f64..2.0).prop_map(Expr::Num),
            (0usize..2).prop_map(Expr::Var),
        ]
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        leaf().prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| bin(BinOp::Add, a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| bin(BinOp::Sub, a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| bin(BinOp::Mul, a, b)),
                inner.clone().prop_map(neg),
                inner.clone().prop_map(|a| call(Func::Sin, a)),
                inner.clone().prop_map(|a| call(Func::Cos, a)),
                inner.clone().prop_map(|a| call(Func::Tanh, a)),
                inner.prop_map(|a| call(Func::Exp, bin(BinOp::Mul, Expr::Num(0.3), a))),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn derivative_matches_finite_difference(
            e in arb_expr(),
            y0 in -1.5f64..1.5,
            y1 in -1.5f64..1.5,
            wrt in 0usize..2,
        ) {
            let point = [y0, y1];
            let val = e.eval(&point);
            prop_assume!(val.is_finite() && val.abs() < 1e6);
            let sym = e.differentiate(wrt).eval(&point);
            prop_assume!(sym.is_finite());
            let h = f64::EPSILON.cbrt() * point[wrt].abs().max(1.0);
            let mut lo = point;
            let mut hi = point;
            lo[wrt] -= h;
            hi[wrt] += h;
            let flo = e.eval(&lo);
            let fhi = e.eval(&hi);
            prop_assume!(flo.is_finite() && fhi.is_finite());
            let fd = (fhi - flo) / (2.0 * h);
            // second-derivative scale can be large for nested products;
            // compare against a scale that tracks the function magnitude
            let scale = sym.abs().max(fd.abs()).max(val.abs()).max(1.0);
            prop_assert!((sym - fd).abs() <= 1e-5 * scale,
                "sym {} vs fd {} for {}", sym, fd, e);
        }
    }
}

// The Lorenz determinant identity holds across phase space.
#[test]
fn lorenz_det_identity_bulk() {
    let (s, r, b) = (10.0, 28.0, 8.0 / 3.0);
    let system = builtin_lorenz(s, r, b, 1.0).unwrap();
    let mut rng = StdRng::seed_from_u64(777);
    for _ in 0..10_000 {
        let y = [
            rng.gen_range(-25.0..25.0),
            rng.gen_range(-30.0..30.0),
            rng.gen_range(-5.0..55.0),
        ];
        let lin = linearize(&system, &y).unwrap();
        let expect = lorenz_det_j(s, r, b, &y);
        let rel = (lin.det_j - expect).abs() / expect.abs().max(1.0);
        assert!(rel <= 1e-9, "point {y:?}: {} vs {expect}", lin.det_j);
    }
}

// Downstream rates from a linearization are invariant under the isotropic
// diffusion level.
#[test]
fn linearization_scale_consistency() {
    let part = Partition::new(3, vec![0], vec![1], vec![2]).unwrap();
    let y = [3.0, -2.0, 24.0];
    let base = {
        let system = builtin_lorenz(10.0, 28.0, 8.0 / 3.0, 1.0).unwrap();
        conditional_rate(&linearize(&system, &y).unwrap().vou, &part)
            .unwrap()
            .rate
    };
    for nu in [1e-4, 0.5, 1e4] {
        let system = builtin_lorenz(10.0, 28.0, 8.0 / 3.0, nu).unwrap();
        let rate = conditional_rate(&linearize(&system, &y).unwrap().vou, &part)
            .unwrap()
            .rate;
        let rel = (rate - base).abs() / base.abs().max(1e-300);
        assert!(rel <= 1e-8, "nu={nu}: rel {rel:.3e}");
    }
}

// Symmetrize is idempotent and preserves symmetric inputs exactly.
#[test]
fn symmetrize_fixed_point() {
    let mut rng = StdRng::seed_from_u64(5);
    let a = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
    let s = symmetrize(&a);
    assert_eq!(symmetrize(&s), s);
}
