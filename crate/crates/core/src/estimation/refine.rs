use crate::error::Result;
use crate::likelihood::{loglik, Observations};
use crate::model::{depth_to_tof, tof_to_depth, AcquisitionConfig, DetectorMode, SceneParams};

const SUBINTERVALS: usize = 16;
const BISECTIONS: usize = 80;

/// Continuous depth refinement within one bin of `depth_grid`.
///
/// Scans the analytic derivative over a subdivided `±Δ` window, bisects
/// every `+ → -` sign change and returns the best of these stationary
/// points, the window ends and the grid value. The returned objective is
/// never below the grid objective.
pub fn refine_depth(
    data: Observations<'_>,
    signal: f64,
    background: f64,
    depth_grid: f64,
    mode: DetectorMode,
    cfg: &AcquisitionConfig,
) -> Result<(f64, f64)> {
    let eval = |tau: f64| {
        let p = SceneParams {
            signal,
            background,
            depth: tof_to_depth(tau),
        };
        loglik(mode, &p, cfg, data)
    };
    let tau0 = depth_to_tof(depth_grid);
    let upper = cfg.period * (1.0 - 1e-12);
    let lo = (tau0 - cfg.bin_size).max(0.0);
    let hi = (tau0 + cfg.bin_size).min(upper);
    let dz_dtau = 0.5 * crate::model::SPEED_OF_LIGHT;

    let mut best = (tau0, eval(tau0)?.value);
    let consider = |tau: f64, value: f64, best: &mut (f64, f64)| {
        if value > best.1 {
            *best = (tau, value);
        }
    };

    let mut knots = Vec::with_capacity(SUBINTERVALS + 1);
    for i in 0..=SUBINTERVALS {
        let tau = lo + (hi - lo) * i as f64 / SUBINTERVALS as f64;
        let r = eval(tau)?;
        consider(tau, r.value, &mut best);
        knots.push((tau, r.grad[2] * dz_dtau));
    }
    for pair in knots.windows(2) {
        let ((mut a, ga), (mut b, gb)) = (pair[0], pair[1]);
        if !(ga > 0.0 && gb < 0.0) {
            continue;
        }
        for _ in 0..BISECTIONS {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if eval(mid)?.grad[2] > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let root = 0.5 * (a + b);
        let value = eval(root)?.value;
        consider(root, value, &mut best);
    }
    Ok((tof_to_depth(best.0), best.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PulseProfile;
    use crate::sim::{quantize, simulate, RngSeed};

    #[test]
    fn never_worse_than_grid() {
        for mode in DetectorMode::ALL {
            let cfg = AcquisitionConfig::simulation_default(mode);
            for t in 0..30 {
                let p = SceneParams::new(1.0, 1.0, 3.3).unwrap();
                let d = simulate(&p, &cfg, &RngSeed::new(60, t));
                let grid = tof_to_depth(((p.tof() / cfg.bin_size).floor() + 0.5) * cfg.bin_size);
                let g = loglik(mode, &SceneParams { depth: grid, ..p }, &cfg, (&d).into()).unwrap().value;
                let (_, v) = refine_depth((&d).into(), 1.0, 1.0, grid, mode, &cfg).unwrap();
                assert!(v >= g);
            }
        }
    }

    #[test]
    fn finds_the_stationary_point() {
        // dense noise-free data: arrivals on a fine grid under the pulse
        let cfg = AcquisitionConfig::simulation_default(DetectorMode::Ideal);
        let tau = 40.0137e-9;
        let times: Vec<f64> = (-300..=300).map(|i| tau + i as f64 * 1e-12).collect();
        let d = crate::sim::detect_ideal(&times, &cfg);
        let grid = tof_to_depth(((tau / cfg.bin_size).floor() + 0.5) * cfg.bin_size);
        let (z, _) = refine_depth((&d).into(), 1.0, 0.1, grid, DetectorMode::Ideal, &cfg).unwrap();
        // oracle: 10^6-point grid of the objective around the grid estimate
        let f = |t: f64| {
            loglik(
                DetectorMode::Ideal,
                &SceneParams::new(1.0, 0.1, tof_to_depth(t)).unwrap(),
                &cfg,
                (&d).into(),
            )
            .unwrap()
            .value
        };
        let center = depth_to_tof(grid);
        let n = 1_000_000;
        let mut best = (center, f64::NEG_INFINITY);
        for i in 0..=n {
            let t = center - cfg.bin_size + 2.0 * cfg.bin_size * i as f64 / n as f64;
            let v = f(t);
            if v > best.1 {
                best = (t, v);
            }
        }
        assert!((depth_to_tof(z) - best.0).abs() < 1e-12 + 2.0 * cfg.bin_size / n as f64);
        assert!((depth_to_tof(z) - tau).abs() < 1e-13);
    }

    #[test]
    fn refinement_improves_coarse_bins() {
        let cfg = AcquisitionConfig::new(100e-9, 100, 20e-9, DetectorMode::Ideal, 100e-12, PulseProfile::new(0.1e-9).unwrap()).unwrap();
        let p = SceneParams::new(5.0, 0.1, 5.123).unwrap();
        let (mut grid_se, mut fine_se) = (0.0, 0.0);
        for t in 0..300 {
            let d = simulate(&p, &cfg, &RngSeed::new(61, t));
            let h = quantize(&d, &cfg).unwrap();
            let grid = super::super::mf_depth(DetectorMode::Ideal, &h, p.signal, p.background, &cfg).unwrap();
            let (z, _) = refine_depth((&d).into(), p.signal, p.background, grid, DetectorMode::Ideal, &cfg).unwrap();
            grid_se += (grid - p.depth).powi(2);
            fine_se += (z - p.depth).powi(2);
        }
        assert!(fine_se < grid_se, "{fine_se} vs {grid_se}");
    }
}
