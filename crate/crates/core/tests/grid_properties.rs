use dsrm_core::patch_grid::{
    assemble_density, build_grid, global_count, local_ground_truth, CountMode, HeadAnnotations, LocalCountMatrix,
    PatchGrid, Point,
};
use proptest::prelude::*;

/// Straight transcription of the local-count definition: every head adds
/// `1 / (number of windows holding it)` to each window that holds it.
fn brute_local_counts(grid: &PatchGrid, ann: &HeadAnnotations) -> Vec<f64> {
    let p = grid.patch_size();
    let inside = |(top, left): (usize, usize), pt: &Point| {
        let (r, c) = (pt.y.floor() as usize, pt.x.floor() as usize);
        top <= r && r < top + p && left <= c && c < left + p
    };
    let windows: Vec<(usize, usize)> = grid.origins().collect();
    let mut out = vec![0.0; windows.len()];
    for pt in &ann.points {
        let holders: Vec<usize> = (0..windows.len()).filter(|&k| inside(windows[k], pt)).collect();
        assert!(!holders.is_empty(), "tiling left a head uncovered");
        for k in &holders {
            out[*k] += 1.0 / holders.len() as f64;
        }
    }
    out
}

fn image_and_points() -> impl Strategy<Value = (usize, usize, Vec<(f64, f64)>)> {
    (100usize..400, 100usize..400).prop_flat_map(|(h, w)| {
        let pts = prop::collection::vec((0.0..w as f64, 0.0..h as f64), 0..60);
        (Just(h), Just(w), pts)
    })
}

fn annotations(points: &[(f64, f64)]) -> HeadAnnotations {
    HeadAnnotations::new(points.iter().map(|&(x, y)| Point::new(x, y)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fractional_counts_conserve_heads((h, w, pts) in image_and_points()) {
        let grid = build_grid(h, w, 100, 50).unwrap();
        let ann = annotations(&pts);
        let counts = local_ground_truth(&grid, &ann, CountMode::Fractional).unwrap();
        let total = global_count(&counts).unwrap();
        prop_assert!((total - pts.len() as f64).abs() <= 1e-9 * (pts.len() as f64).max(1.0));
        let brute = brute_local_counts(&grid, &ann);
        for (a, b) in counts.values().iter().zip(&brute) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn tiling_covers_every_pixel((h, w, _pts) in image_and_points()) {
        let grid = build_grid(h, w, 100, 50).unwrap();
        prop_assert!(grid.coverage_map().min() >= 1);
        prop_assert_eq!(grid.row_origins().last().unwrap() + 100, h);
        prop_assert_eq!(grid.col_origins().last().unwrap() + 100, w);
    }

    #[test]
    fn density_mass_is_clamped_count_sum(
        (rows, cols) in (1usize..5, 1usize..5),
        seed in prop::collection::vec(-2.0f64..10.0, 16),
    ) {
        let h = 100 + 50 * (rows - 1);
        let w = 100 + 50 * (cols - 1);
        let grid = build_grid(h, w, 100, 50).unwrap();
        let values: Vec<f64> = (0..rows * cols).map(|k| seed[k % seed.len()]).collect();
        let counts = LocalCountMatrix::new(rows, cols, values.clone(), CountMode::Fractional).unwrap();
        let map = assemble_density(&grid, &counts).unwrap();
        let expected: f64 = values.iter().map(|v| v.max(0.0)).sum();
        prop_assert!((map.mass() - expected).abs() <= 1e-9 * expected.max(1.0));
        prop_assert!(map.values.iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn brute_force_over_small_grids() {
    for m in 1..8 {
        for n in 1..8 {
            let (h, w) = (100 + 50 * (m - 1), 100 + 50 * (n - 1));
            let grid = build_grid(h, w, 100, 50).unwrap();
            assert_eq!((grid.rows(), grid.cols()), (m, n));
            let pts: Vec<(f64, f64)> =
                (0..40).map(|k| (((k * 37) % w) as f64 + 0.5, ((k * 53) % h) as f64 + 0.25)).collect();
            let ann = annotations(&pts);
            let counts = local_ground_truth(&grid, &ann, CountMode::Fractional).unwrap();
            let brute = brute_local_counts(&grid, &ann);
            for (a, b) in counts.values().iter().zip(&brute) {
                assert!((a - b).abs() <= 1e-12, "{m}x{n}: {a} vs {b}");
            }
        }
    }
}
