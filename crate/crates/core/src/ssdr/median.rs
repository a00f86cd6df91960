use super::geometry::ScanGrid;

/// Replaces the depth of every pixel with `|σ_p| > eps_init` by the median
/// of the pixelwise depths of its `k` angular nearest neighbours (self
/// excluded). Even neighbour counts average the two middle values.
pub fn median_smooth_init(grid: &ScanGrid, depths: &[f64], sigma: &[f64], eps_init: f64, k: usize) -> Vec<f64> {
    let p_count = grid.len();
    let k = k.min(p_count.saturating_sub(1));
    let mut out = depths.to_vec();
    if k == 0 {
        return out;
    }
    let mut neighbours: Vec<(f64, usize)> = Vec::with_capacity(p_count);
    let mut values = Vec::with_capacity(k);
    for p in (0..p_count).filter(|&p| sigma[p].abs() > eps_init) {
        neighbours.clear();
        neighbours.extend((0..p_count).filter(|&q| q != p).map(|q| (grid.angular_distance(p, q), q)));
        // order by distance, then index, so ties resolve deterministically
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        neighbours.select_nth_unstable_by(k - 1, cmp);
        values.clear();
        values.extend(neighbours[..k].iter().map(|&(_, q)| depths[q]));
        values.sort_by(f64::total_cmp);
        out[p] = if k % 2 == 1 {
            values[k / 2]
        } else {
            0.5 * (values[k / 2 - 1] + values[k / 2])
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> ScanGrid {
        ScanGrid::uniform([1.3, 1.8], [1.3, 1.8], [6, 6]).unwrap()
    }

    #[test]
    fn no_outliers_is_identity() {
        let g = grid();
        let d: Vec<f64> = (0..36).map(|i| 3.0 + i as f64 * 0.01).collect();
        assert_eq!(median_smooth_init(&g, &d, &[0.0; 36], 1e-3, 8), d);
    }

    #[test]
    fn single_outlier_in_constant_grid() {
        let g = grid();
        let mut d = vec![4.0; 36];
        d[14] = 11.0;
        let mut sigma = vec![0.0; 36];
        sigma[14] = 1.0;
        let out = median_smooth_init(&g, &d, &sigma, 1e-3, 8);
        assert_eq!(out, vec![4.0; 36]);
    }

    proptest! {
        #[test]
        fn inliers_fixed_and_range_kept(
            d in proptest::collection::vec(0.5f64..10.0, 36),
            sigma in proptest::collection::vec(-1.0f64..1.0, 36),
            k in 1usize..20,
        ) {
            let g = grid();
            let out = median_smooth_init(&g, &d, &sigma, 0.3, k);
            let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for p in 0..36 {
                if sigma[p].abs() <= 0.3 {
                    prop_assert_eq!(out[p], d[p]);
                }
                prop_assert!(out[p] >= lo && out[p] <= hi);
            }
        }
    }
}
