//! Box-constrained maximization of the concave flux objective by a
//! projected Newton method with an Armijo line search.

use super::FLUX_FLOOR;
use crate::error::Result;
use crate::likelihood::{FluxObjective, Observations};
use crate::model::{AcquisitionConfig, DetectorMode};

const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 200;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxSolution {
    pub signal: f64,
    pub background: f64,
    /// Objective at the solution.
    pub value: f64,
    pub iterations: usize,
    /// False when the iteration cap was reached first.
    pub converged: bool,
}

/// `S_max = B_max = 10 · max(N / n_r, 1)`.
pub fn flux_upper_bound(count: f64, pulses: u64) -> f64 {
    10.0 * (count / pulses as f64).max(1.0)
}

/// Maximizes the mode's log-likelihood over `(S, B)` at a fixed depth.
pub fn maximize_flux(
    data: Observations<'_>,
    depth: f64,
    mode: DetectorMode,
    cfg: &AcquisitionConfig,
    init: (f64, f64),
) -> Result<FluxSolution> {
    let obj = FluxObjective::new(mode, cfg, data, depth)?;
    let hi = flux_upper_bound(obj.count(), cfg.pulses);
    Ok(maximize_flux_objective(&obj, init, [FLUX_FLOOR, hi]))
}

fn project(x: [f64; 2], bounds: [f64; 2]) -> [f64; 2] {
    [x[0].clamp(bounds[0], bounds[1]), x[1].clamp(bounds[0], bounds[1])]
}

/// Whether coordinate `i` is held at a bound by the gradient.
fn pinned(x: f64, g: f64, bounds: [f64; 2]) -> bool {
    (x <= bounds[0] && g < 0.0) || (x >= bounds[1] && g > 0.0)
}

/// Projected Newton ascent on `[lo, hi]²` from a clamped `init`.
pub fn maximize_flux_objective(obj: &FluxObjective, init: (f64, f64), bounds: [f64; 2]) -> FluxSolution {
    let mut x = project([init.0, init.1], bounds);
    let mut fx = obj.value(x[0], x[1]);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        let g = obj.gradient(x[0], x[1]);
        let free = [!pinned(x[0], g[0], bounds), !pinned(x[1], g[1], bounds)];
        let pg = [if free[0] { g[0] } else { 0.0 }, if free[1] { g[1] } else { 0.0 }];
        if pg[0].abs().max(pg[1].abs()) < GRADIENT_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let h = obj.hessian(x[0], x[1]);
        let dir = newton_direction(h, pg, free).unwrap_or(pg);

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = project([x[0] + t * dir[0], x[1] + t * dir[1]], bounds);
            let ft = obj.value(trial[0], trial[1]);
            let step = [trial[0] - x[0], trial[1] - x[1]];
            let predicted = g[0] * step[0] + g[1] * step[1];
            // near the optimum the objective change drops below rounding,
            // so also accept steps that do not lose value and shrink the
            // projected gradient
            let flat = ft >= fx - 1e-13 * fx.abs() && projected_norm(obj, trial, bounds) < pg[0].abs().max(pg[1].abs());
            if ft.is_finite() && (ft >= fx + ARMIJO * predicted || flat) {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, ft)) => {
                let moved = trial != x;
                x = trial;
                fx = ft;
                if !moved {
                    converged = true;
                    break;
                }
            }
            None => {
                // no ascent left at machine precision
                converged = true;
                break;
            }
        }
    }
    FluxSolution {
        signal: x[0],
        background: x[1],
        value: fx,
        iterations,
        converged,
    }
}

fn projected_norm(obj: &FluxObjective, x: [f64; 2], bounds: [f64; 2]) -> f64 {
    let g = obj.gradient(x[0], x[1]);
    (0..2)
        .filter(|&i| !pinned(x[i], g[i], bounds))
        .map(|i| g[i].abs())
        .fold(0.0, f64::max)
}

/// Solves `-H_FF d = g_F` on the free coordinates; `None` if the reduced
/// Hessian is not negative definite.
fn newton_direction(h: [[f64; 2]; 2], g: [f64; 2], free: [bool; 2]) -> Option<[f64; 2]> {
    match free {
        [true, true] => {
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let scale = h[0][0].abs() * h[1][1].abs();
            if !(h[0][0] < 0.0 && det > 1e-12 * scale) {
                return None;
            }
            let d0 = -(h[1][1] * g[0] - h[0][1] * g[1]) / det;
            let d1 = -(-h[1][0] * g[0] + h[0][0] * g[1]) / det;
            Some([d0, d1])
        }
        [true, false] => (h[0][0] < 0.0).then(|| [-g[0] / h[0][0], 0.0]),
        [false, true] => (h[1][1] < 0.0).then(|| [0.0, -g[1] / h[1][1]]),
        [false, false] => Some([0.0, 0.0]),
    }
}
