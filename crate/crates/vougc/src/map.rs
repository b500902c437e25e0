//! Trajectory generation and causality/stability maps.
//!
//! Deterministic trajectories use fixed-step classical RK4 (substep dt/10)
//! instead of an adaptive scheme so runs reproduce bitwise across platforms;
//! the target is attractor statistics, not the exact path. Stochastic
//! trajectories use Euler-Maruyama with the same substep and a seeded
//! counter-based RNG (ChaCha12). Map sampling over points is data-parallel
//! with order-independent (bitwise) results; global averages reduce with
//! pairwise summation to fix floating-point order.

use crate::gc::{conditional_rate, pairwise_graph, GcGraph, GraphEntry, Partition};
use crate::langevin::{linearize, DiffusionSpec, LangevinSystem};
use crate::linalg::spectrum;
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Internal integration substeps per output sample interval.
pub const SUBSTEPS: usize = 10;

/// Hard bound on the state norm; beyond it the trajectory has diverged.
pub const OVERFLOW_GUARD: f64 = 1e12;

/// Maximum fraction of failed map samples tolerated by [`global_rate`].
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;

/// Name of the RNG algorithm, recorded in run manifests.
pub const RNG_ALGORITHM: &str = "chacha12";

/// An equally-spaced sampled trajectory after transient removal.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Sampling interval between consecutive states.
    pub dt: f64,
    /// Sample times, equally spaced by dt.
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Duration discarded before the first sample.
    pub transient_dropped: f64,
}

fn check_integration_args(
    system: &LangevinSystem,
    y0: &[f64],
    duration: f64,
    dt: f64,
    transient: f64,
) -> Result<(usize, usize)> {
    if y0.len() != system.dim() {
        return Err(Error::Dimension(format!(
            "initial state has {} coordinates for dimension {}",
            y0.len(),
            system.dim()
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("initial state must be finite".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Validation(format!("dt = {dt} must be > 0")));
    }
    if !(transient.is_finite() && transient >= 0.0) {
        return Err(Error::Validation(format!(
            "transient = {transient} must be >= 0"
        )));
    }
    if !(duration.is_finite() && duration > transient) {
        return Err(Error::Validation(format!(
            "duration = {duration} must exceed transient = {transient}"
        )));
    }
    let total = (duration / dt).round() as usize;
    let skip = (transient / dt).round() as usize;
    if total < skip + 2 {
        return Err(Error::Validation(
            "trajectory must retain at least 2 samples after the transient".into(),
        ));
    }
    Ok((total, skip))
}

fn guard_state(y: &DVector<f64>, t: f64) -> Result<()> {
    let norm = y.norm();
    if !norm.is_finite() || norm > OVERFLOW_GUARD {
        return Err(Error::Divergence { t, norm });
    }
    Ok(())
}

/// Deterministic trajectory of dy/dt = f(y) via fixed-step RK4, sampled
/// every dt after dropping the transient.
pub fn integrate_ode(
    system: &LangevinSystem,
    y0: &[f64],
    duration: f64,
    dt: f64,
    transient: f64,
) -> Result<Trajectory> {
    let (total, skip) = check_integration_args(system, y0, duration, dt, transient)?;
    let h = dt / SUBSTEPS as f64;
    let mut y = DVector::from_column_slice(y0);
    let mut times = Vec::with_capacity(total - skip);
    let mut states = Vec::with_capacity(total - skip);
    for k in 0..total {
        let t = k as f64 * dt;
        if k >= skip {
            times.push(t);
            states.push(y.clone());
        }
        for s in 0..SUBSTEPS {
            let k1 = system.drift_at(y.as_slice())?;
            let k2 = system.drift_at((&y + &k1 * (h / 2.0)).as_slice())?;
            let k3 = system.drift_at((&y + &k2 * (h / 2.0)).as_slice())?;
            let k4 = system.drift_at((&y + &k3 * h).as_slice())?;
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            guard_state(&y, t + (s + 1) as f64 * h)?;
        }
    }
    Ok(Trajectory {
        dt,
        times,
        states,
        transient_dropped: transient,
    })
}

/// Stochastic trajectory via Euler-Maruyama: per substep the noise increment
/// has covariance Sigma(y) * substep. Deterministic given the seed.
pub fn integrate_sde(
    system: &LangevinSystem,
    y0: &[f64],
    duration: f64,
    dt: f64,
    transient: f64,
    seed: u64,
) -> Result<Trajectory> {
    let (total, skip) = check_integration_args(system, y0, duration, dt, transient)?;
    let n = system.dim();
    let h = dt / SUBSTEPS as f64;
    let sqrt_h = h.sqrt();

    // constant diffusion: factor Sigma = L L^T once
    let fixed_factor: Option<DMatrix<f64>> = match system.sigma_spec() {
        DiffusionSpec::Expressions(_) => None,
        _ => Some(noise_factor(system, y0)?),
    };

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut y = DVector::from_column_slice(y0);
    let mut z = DVector::zeros(n);
    let mut times = Vec::with_capacity(total - skip);
    let mut states = Vec::with_capacity(total - skip);
    for k in 0..total {
        let t = k as f64 * dt;
        if k >= skip {
            times.push(t);
            states.push(y.clone());
        }
        for s in 0..SUBSTEPS {
            let f = system.drift_at(y.as_slice())?;
            let l = match &fixed_factor {
                Some(l) => l.clone(),
                None => noise_factor(system, y.as_slice())?,
            };
            for i in 0..n {
                z[i] = StandardNormal.sample(&mut rng);
            }
            y += f * h + l * &z * sqrt_h;
            guard_state(&y, t + (s + 1) as f64 * h)?;
        }
    }
    Ok(Trajectory {
        dt,
        times,
        states,
        transient_dropped: transient,
    })
}

fn noise_factor(system: &LangevinSystem, y: &[f64]) -> Result<DMatrix<f64>> {
    let sigma = system.sigma_at(y)?;
    let chol = Cholesky::new(sigma).ok_or_else(|| {
        Error::Degeneracy(format!("diffusion covariance not factorizable at {y:?}"))
    })?;
    Ok(chol.l().into())
}

/// Which rates to compute at each map point.
#[derive(Debug, Clone)]
pub enum MapAnalysis {
    /// Full pairwise-conditional causal graph.
    Graph,
    /// One conditional rate for a fixed partition.
    Partition(Partition),
}

/// Rates computed at one map point.
#[derive(Debug, Clone)]
pub enum SampleValues {
    Graph(GcGraph),
    Rate(f64),
}

/// One point of a causality/stability map.
#[derive(Debug, Clone)]
pub struct GcMapSample {
    pub point: DVector<f64>,
    /// Stability exponent: largest real part of the local Jacobian spectrum.
    pub lambda: f64,
    pub det_j: f64,
    pub singular: bool,
    /// Rates, or the failure reason for this point.
    pub values: std::result::Result<SampleValues, String>,
}

impl GcMapSample {
    /// True when every requested rate at this point was computed.
    pub fn ok(&self) -> bool {
        match &self.values {
            Err(_) => false,
            Ok(SampleValues::Rate(_)) => true,
            Ok(SampleValues::Graph(g)) => {
                let n = g.dim();
                (0..n).all(|i| {
                    (0..n).all(|j| i == j || matches!(g.entry(i, j), GraphEntry::Rate(_)))
                })
            }
        }
    }
}

fn sample_point(
    system: &LangevinSystem,
    point: &DVector<f64>,
    analysis: &MapAnalysis,
) -> GcMapSample {
    let lin = match linearize(system, point.as_slice()) {
        Ok(lin) => lin,
        Err(e) => {
            return GcMapSample {
                point: point.clone(),
                lambda: f64::NAN,
                det_j: f64::NAN,
                singular: false,
                values: Err(e.to_string()),
            }
        }
    };
    let values = match analysis {
        MapAnalysis::Graph => pairwise_graph(&lin.vou)
            .map(SampleValues::Graph)
            .map_err(|e| e.to_string()),
        MapAnalysis::Partition(part) => conditional_rate(&lin.vou, part)
            .map(|r| SampleValues::Rate(r.rate))
            .map_err(|e| e.to_string()),
    };
    GcMapSample {
        point: point.clone(),
        lambda: lin.stability_exponent,
        det_j: lin.det_j,
        singular: lin.singular,
        values,
    }
}

/// Evaluate the causality map at each point: linearize, then the requested
/// rates on the local VOU. Per-point failures are recorded in place and never
/// abort the sweep; results are independent of point order and parallelism.
pub fn gc_map(
    system: &LangevinSystem,
    points: &[DVector<f64>],
    analysis: &MapAnalysis,
) -> Vec<GcMapSample> {
    points
        .par_iter()
        .map(|p| sample_point(system, p, analysis))
        .collect()
}

/// Aggregated map values: the trajectory average of each requested rate.
#[derive(Debug, Clone)]
pub enum GlobalValues {
    /// Mean of each graph entry; diagonal entries are zero placeholders.
    Graph(DMatrix<f64>),
    Rate(f64),
}

#[derive(Debug, Clone)]
pub struct GlobalRates {
    pub values: GlobalValues,
    /// Fraction of samples excluded because some requested rate failed.
    pub excluded_fraction: f64,
    pub included: usize,
}

/// Sum with pairwise splitting: a deterministic reduction whose result does
/// not depend on chunking or thread count.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => pairwise_sum(&values[..n / 2]) + pairwise_sum(&values[n / 2..]),
    }
}

/// Arithmetic mean of each requested rate over the ok samples (rectangle-rule
/// time average for an equally-spaced trajectory sweep). Errors if more than
/// [`MAX_EXCLUDED_FRACTION`] of the samples failed.
pub fn global_rate(samples: &[GcMapSample], analysis: &MapAnalysis) -> Result<GlobalRates> {
    if samples.is_empty() {
        return Err(Error::Coverage("no samples to aggregate".into()));
    }
    let ok: Vec<&GcMapSample> = samples.iter().filter(|s| s.ok()).collect();
    let excluded_fraction = 1.0 - ok.len() as f64 / samples.len() as f64;
    if excluded_fraction > MAX_EXCLUDED_FRACTION {
        return Err(Error::Coverage(format!(
            "{:.2}% of samples failed (limit {:.0}%)",
            100.0 * excluded_fraction,
            100.0 * MAX_EXCLUDED_FRACTION
        )));
    }
    let count = ok.len() as f64;
    let values = match analysis {
        MapAnalysis::Graph => {
            let n = match &ok[0].values {
                Ok(SampleValues::Graph(g)) => g.dim(),
                _ => return Err(Error::Coverage("graph analysis produced no graphs".into())),
            };
            let mut means = DMatrix::zeros(n, n);
            let mut column = Vec::with_capacity(ok.len());
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    column.clear();
                    for s in &ok {
                        match &s.values {
                            Ok(SampleValues::Graph(g)) => {
                                column.push(g.rate(i, j).expect("ok sample has full graph"))
                            }
                            _ => unreachable!("ok sample matches analysis"),
                        }
                    }
                    means[(i, j)] = pairwise_sum(&column) / count;
                }
            }
            GlobalValues::Graph(means)
        }
        MapAnalysis::Partition(_) => {
            let rates: Vec<f64> = ok
                .iter()
                .map(|s| match &s.values {
                    Ok(SampleValues::Rate(r)) => *r,
                    _ => unreachable!("ok sample matches analysis"),
                })
                .collect();
            GlobalValues::Rate(pairwise_sum(&rates) / count)
        }
    };
    Ok(GlobalRates {
        values,
        excluded_fraction,
        included: ok.len(),
    })
}

/// Stability classification per point: (point, lambda, detJ, singular).
pub fn stability_map(
    system: &LangevinSystem,
    points: &[DVector<f64>],
) -> Result<Vec<(DVector<f64>, f64, f64, bool)>> {
    points
        .par_iter()
        .map(|p| {
            let j = system.jacobian_at(p.as_slice())?;
            let det = j.clone().lu().determinant();
            let inf_norm = (0..j.nrows())
                .map(|i| j.row(i).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0f64, f64::max);
            let singular = det.abs() <= crate::langevin::SING_TOL * inf_norm.max(1.0);
            let lambda = spectrum(&j)?.max_real_part;
            Ok((p.clone(), lambda, det, singular))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gc::VouModel;
    use crate::langevin::{builtin_lorenz, parse_system};
    use nalgebra::dvector;

    fn decay_system() -> LangevinSystem {
        parse_system("[system]\nn = 1\n[drift]\ndy1 = -y1\n[sigma]\nscalar = 1\n").unwrap()
    }

    #[test]
    fn zero_drift_constant_trajectory() {
        let sys =
            parse_system("[system]\nn = 1\n[drift]\ndy1 = y1 - y1\n[sigma]\nscalar = 1\n")
                .unwrap();
        let tr = integrate_ode(&sys, &[3.5], 1.0, 0.1, 0.0).unwrap();
        assert_eq!(tr.states.len(), 10);
        assert!(tr.states.iter().all(|s| s[0] == 3.5));
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let tr = integrate_ode(&decay_system(), &[1.0], 2.0, 0.01, 0.0).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            assert!((s[0] - (-t).exp()).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn rk4_fourth_order_on_linear_problem() {
        // halving dt halves the substep; endpoint error at t=0.5 drops >= 8x
        let sys = decay_system();
        let exact = (-0.5f64).exp();
        let coarse = integrate_ode(&sys, &[1.0], 1.0, 0.1, 0.0).unwrap();
        let fine = integrate_ode(&sys, &[1.0], 1.0, 0.05, 0.0).unwrap();
        let e_coarse = (coarse.states[5][0] - exact).abs();
        let e_fine = (fine.states[10][0] - exact).abs();
        assert!(
            e_coarse >= 8.0 * e_fine,
            "coarse {e_coarse:.3e} fine {e_fine:.3e}"
        );
    }

    #[test]
    fn divergence_detected() {
        let sys =
            parse_system("[system]\nn = 1\n[drift]\ndy1 = y1^2\n[sigma]\nscalar = 1\n").unwrap();
        match integrate_ode(&sys, &[10.0], 10.0, 0.01, 0.0) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_windows_rejected() {
        let sys = decay_system();
        assert!(integrate_ode(&sys, &[1.0], 1.0, 0.1, 1.0).is_err()); // duration == transient
        assert!(integrate_ode(&sys, &[1.0], 0.5, 0.1, 1.0).is_err());
        assert!(integrate_ode(&sys, &[1.0], 1.0, -0.1, 0.0).is_err());
    }

    #[test]
    fn lorenz_trajectory_bounded_on_attractor() {
        let sys = builtin_lorenz(10.0, 28.0, 8.0 / 3.0, 1.0).unwrap();
        let tr = integrate_ode(&sys, &[1.0, 1.0, 1.0], 60.0, 0.01, 30.0).unwrap();
        assert_eq!(tr.states.len(), 3000);
        assert!(tr
            .states
            .iter()
            .all(|s| s.iter().all(|v| v.abs() < 60.0)));
    }

    #[test]
    fn sde_deterministic_given_seed() {
        let sys = decay_system();
        let a = integrate_sde(&sys, &[1.0], 2.0, 0.1, 0.0, 42).unwrap();
        let b = integrate_sde(&sys, &[1.0], 2.0, 0.1, 0.0, 42).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(x[0], y[0]);
        }
        let c = integrate_sde(&sys, &[1.0], 2.0, 0.1, 0.0, 43).unwrap();
        assert!(a.states.iter().zip(&c.states).any(|(x, y)| x[0] != y[0]));
    }

    #[test]
    fn ou_stationary_variance() {
        // dy = -y dt + dW: Var = 1/2
        let sys = decay_system();
        let tr = integrate_sde(&sys, &[0.0], 2000.0, 0.05, 50.0, 7).unwrap();
        let vals: Vec<f64> = tr.states.iter().map(|s| s[0]).collect();
        let mean = pairwise_sum(&vals) / vals.len() as f64;
        let sq: Vec<f64> = vals.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&sq) / sq.len() as f64;
        assert!((var - 0.5).abs() / 0.5 < 0.05, "var = {var}");
    }

    #[test]
    fn vanishing_noise_approaches_ode() {
        let sys_tiny = parse_system(
            "[system]\nn = 1\n[drift]\ndy1 = -y1\n[sigma]\nscalar = 1e-30\n",
        )
        .unwrap();
        let sde = integrate_sde(&sys_tiny, &[1.0], 1.0, 0.1, 0.0, 1).unwrap();
        // Euler-Maruyama with noise off is first-order accurate in the substep
        for (t, s) in sde.times.iter().zip(&sde.states) {
            assert!((s[0] - (-t).exp()).abs() < 1e-2, "t={t}");
        }
    }

    #[test]
    fn lorenz_map_has_exact_zero_column() {
        let sys = builtin_lorenz(10.0, 28.0, 8.0 / 3.0, 1.0).unwrap();
        let points = vec![
            dvector![1.0, 1.0, 1.0],
            dvector![-5.0, 3.0, 20.0],
            dvector![10.0, -8.0, 30.0],
        ];
        let samples = gc_map(&sys, &points, &MapAnalysis::Graph);
        for s in &samples {
            assert!(s.ok(), "sample failed: {:?}", s.values);
            match &s.values {
                Ok(SampleValues::Graph(g)) => assert_eq!(g.rate(0, 2).unwrap(), 0.0),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn linear_system_map_constant_and_consistent() {
        let text = "[system]\nn = 2\n[drift]\ndy1 = -y1 + 0.7*y2\ndy2 = -y2\n[sigma]\nscalar = 1\n";
        let sys = parse_system(text).unwrap();
        let a = nalgebra::dmatrix![-1.0, 0.7; 0.0, -1.0];
        let vou = VouModel::new(a, DMatrix::identity(2, 2)).unwrap();
        let part = Partition::new(2, vec![0], vec![], vec![1]).unwrap();
        let direct = conditional_rate(&vou, &part).unwrap().rate;

        let points = vec![dvector![0.0, 0.0], dvector![5.0, -3.0], dvector![1e3, 1e3]];
        let analysis = MapAnalysis::Partition(part);
        let samples = gc_map(&sys, &points, &analysis);
        for s in &samples {
            match &s.values {
                Ok(SampleValues::Rate(r)) => assert_eq!(*r, direct),
                other => panic!("unexpected {other:?}"),
            }
        }
        let g = global_rate(&samples, &analysis).unwrap();
        match g.values {
            GlobalValues::Rate(r) => assert!((r - direct).abs() <= 1e-15),
            _ => unreachable!(),
        }
        assert_eq!(g.excluded_fraction, 0.0);
    }

    #[test]
    fn global_rate_of_constant_samples() {
        let part = Partition::new(2, vec![0], vec![], vec![1]).unwrap();
        let samples: Vec<GcMapSample> = (0..3)
            .map(|_| GcMapSample {
                point: dvector![0.0, 0.0],
                lambda: -1.0,
                det_j: 1.0,
                singular: false,
                values: Ok(SampleValues::Rate(0.2)),
            })
            .collect();
        let g = global_rate(&samples, &MapAnalysis::Partition(part)).unwrap();
        match g.values {
            GlobalValues::Rate(r) => assert!((r - 0.2).abs() < 1e-15),
            _ => unreachable!(),
        }
    }

    #[test]
    fn excessive_exclusion_is_a_coverage_error() {
        let part = Partition::new(2, vec![0], vec![], vec![1]).unwrap();
        let mut samples: Vec<GcMapSample> = (0..50)
            .map(|_| GcMapSample {
                point: dvector![0.0, 0.0],
                lambda: -1.0,
                det_j: 1.0,
                singular: false,
                values: Ok(SampleValues::Rate(0.2)),
            })
            .collect();
        samples[0].values = Err("boom".into());
        match global_rate(&samples, &MapAnalysis::Partition(part)) {
            Err(Error::Coverage(_)) => {}
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    #[test]
    fn map_results_independent_of_point_order() {
        let sys = builtin_lorenz(10.0, 28.0, 8.0 / 3.0, 1.0).unwrap();
        let points = vec![
            dvector![1.0, 2.0, 3.0],
            dvector![-4.0, 0.5, 22.0],
            dvector![8.0, 8.0, 27.0],
        ];
        let mut reversed = points.clone();
        reversed.reverse();
        let fwd = gc_map(&sys, &points, &MapAnalysis::Graph);
        let rev = gc_map(&sys, &reversed, &MapAnalysis::Graph);
        for (s, r) in fwd.iter().zip(rev.iter().rev()) {
            match (&s.values, &r.values) {
                (Ok(SampleValues::Graph(a)), Ok(SampleValues::Graph(b))) => {
                    for i in 0..3 {
                        for j in 0..3 {
                            if i != j {
                                assert_eq!(a.rate(i, j), b.rate(i, j));
                            }
                        }
                    }
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn stability_map_signs() {
        let sys = parse_system(
            "[system]\nn = 2\n[drift]\ndy1 = -y1 + 0.3*y2\ndy2 = -2*y2\n[sigma]\nscalar = 1\n",
        )
        .unwrap();
        let points = vec![dvector![0.0, 0.0], dvector![4.0, -1.0]];
        let rows = stability_map(&sys, &points).unwrap();
        assert!(rows.iter().all(|(_, l, _, _)| *l < 0.0));
        // Lorenz origin is unstable
        let lorenz = builtin_lorenz(10.0, 28.0, 8.0 / 3.0, 1.0).unwrap();
        let rows = stability_map(&lorenz, &[dvector![0.0, 0.0, 0.0]]).unwrap();
        assert!(rows[0].1 > 0.0);
    }
}
