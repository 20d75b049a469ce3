//! Fixed-step classical Runge-Kutta integration with a conserved-quantity
//! monitor, plus quadrature helpers for primitive fields.

use crate::error::{Error, Result};
use nalgebra::DVector;

/// Upper bound on substep doubling before giving up.
const MAX_SUBSTEPS: usize = 1 << 16;

/// Trajectory of an initial-value problem sampled at the requested nodes.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Largest deviation of the monitor from its initial value, if monitored.
    pub monitor_drift: Option<f64>,
}

fn rk4_step<F>(rhs: &F, t: f64, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = rhs(t, y);
    let k2 = rhs(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = rhs(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = rhs(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

fn integrate_once<F>(
    rhs: &F,
    initial: &DVector<f64>,
    times: &[f64],
    substeps: usize,
) -> Vec<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let mut states = Vec::with_capacity(times.len());
    let mut y = initial.clone();
    states.push(y.clone());
    for w in times.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        let mut t = w[0];
        for _ in 0..substeps {
            y = rk4_step(rhs, t, &y, h);
            t += h;
        }
        states.push(y.clone());
    }
    states
}

/// Integrates `y' = rhs(t, y)` over the given node times (strictly
/// increasing). When a monitor is supplied, the number of substeps per cell
/// is doubled until the monitor drifts by less than `drift_tol` over the
/// whole trajectory; running out of substeps is an accuracy error.
pub fn integrate<F, M>(
    rhs: F,
    initial: &DVector<f64>,
    times: &[f64],
    monitor: Option<M>,
    drift_tol: f64,
) -> Result<Trajectory>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
    M: Fn(f64, &DVector<f64>) -> f64,
{
    if times.len() < 2 {
        return Err(Error::ParameterRange(
            "integration needs at least two node times".into(),
        ));
    }
    if !times.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::ParameterRange(
            "integration times must be strictly increasing".into(),
        ));
    }
    let mut substeps = 1usize;
    loop {
        let states = integrate_once(&rhs, initial, times, substeps);
        let drift = monitor.as_ref().map(|m| {
            let m0 = m(times[0], &states[0]);
            states
                .iter()
                .zip(times)
                .map(|(y, &t)| (m(t, y) - m0).abs())
                .fold(0.0f64, f64::max)
        });
        match drift {
            Some(d) if d > drift_tol => {
                if substeps >= MAX_SUBSTEPS {
                    return Err(Error::IntegratorAccuracy(format!(
                        "monitor drift {d:.3e} above target {drift_tol:.1e} at {substeps} substeps/cell"
                    )));
                }
                substeps *= 2;
            }
            _ => {
                return Ok(Trajectory {
                    times: times.to_vec(),
                    states,
                    monitor_drift: drift,
                })
            }
        }
    }
}

/// No-monitor convenience wrapper.
pub fn integrate_plain<F>(rhs: F, initial: &DVector<f64>, times: &[f64], substeps: usize) -> Vec<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    integrate_once(&rhs, initial, times, substeps.max(1))
}

/// Primitive `F(t) = F(t0) + int_{t0}^t f` of a vector integrand on uniform
/// nodes, by RK4 on the trivial ODE; `substeps` refines each cell.
pub fn quadrature<F>(integrand: F, start: &DVector<f64>, times: &[f64], substeps: usize) -> Vec<DVector<f64>>
where
    F: Fn(f64) -> DVector<f64>,
{
    integrate_once(&|t, _y: &DVector<f64>| integrand(t), start, times, substeps.max(1))
}

pub fn uniform_times(t0: f64, t1: f64, nodes: usize) -> Vec<f64> {
    let n = nodes.max(2);
    (0..n)
        .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hyperbolic_pair_matches_closed_form() {
        // y0' = y1, y1' = y0 from (1, 0) gives (cosh t, sinh t).
        let times = uniform_times(0.0, 2.0, 81);
        let traj = integrate(
            |_t, y: &DVector<f64>| DVector::from_vec(vec![y[1], y[0]]),
            &DVector::from_vec(vec![1.0, 0.0]),
            &times,
            Some(|_t: f64, y: &DVector<f64>| y[0] * y[0] - y[1] * y[1]),
            1e-12,
        )
        .unwrap();
        for (i, &t) in times.iter().enumerate() {
            assert_abs_diff_eq!(traj.states[i][0], t.cosh(), epsilon = 1e-9);
            assert_abs_diff_eq!(traj.states[i][1], t.sinh(), epsilon = 1e-9);
        }
        assert!(traj.monitor_drift.unwrap() <= 1e-12);
    }

    #[test]
    fn zero_initial_state_stays_zero() {
        let times = uniform_times(0.0, 1.0, 11);
        let traj = integrate(
            |_t, y: &DVector<f64>| y.clone(),
            &DVector::zeros(3),
            &times,
            None::<fn(f64, &DVector<f64>) -> f64>,
            1e-9,
        )
        .unwrap();
        for s in &traj.states {
            assert_abs_diff_eq!(s.norm(), 0.0);
        }
    }

    #[test]
    fn unreachable_drift_target_errors() {
        // A stiff wrong monitor that can never be conserved.
        let times = uniform_times(0.0, 1.0, 3);
        let res = integrate(
            |_t, y: &DVector<f64>| y.clone(),
            &DVector::from_vec(vec![1.0]),
            &times,
            Some(|_t: f64, y: &DVector<f64>| y[0]),
            1e-12,
        );
        assert!(matches!(res, Err(Error::IntegratorAccuracy(_))));
    }

    #[test]
    fn quadrature_of_exponential() {
        let times = uniform_times(0.0, 1.0, 33);
        let vals = quadrature(
            |t: f64| DVector::from_vec(vec![t.exp()]),
            &DVector::from_vec(vec![1.0]),
            &times,
            4,
        );
        for (i, &t) in times.iter().enumerate() {
            assert_abs_diff_eq!(vals[i][0], t.exp(), epsilon = 1e-10);
        }
    }
}
