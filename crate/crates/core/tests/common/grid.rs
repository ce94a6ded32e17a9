/// Coarse-to-fine grid search of a convex objective over [-3, 3]^3, ending
/// at step 1e-3. Convexity makes the refinement around the incumbent safe.
pub fn grid_search(f: impl Fn(&[f64; 3]) -> f64) -> ([f64; 3], f64) {
    let mut best = ([0.0; 3], f64::INFINITY);
    let mut center = [0.0; 3];
    for &(half, step) in &[(3.0, 0.05), (0.15, 0.005), (0.02, 0.001)] {
        let m = (2.0f64 * half / step).round() as i64;
        for a in 0..=m {
            for b in 0..=m {
                for c in 0..=m {
                    let p = [
                        (center[0] - half + step * a as f64).clamp(-3.0, 3.0),
                        (center[1] - half + step * b as f64).clamp(-3.0, 3.0),
                        (center[2] - half + step * c as f64).clamp(-3.0, 3.0),
                    ];
                    let v = f(&p);
                    if v < best.1 {
                        best = (p, v);
                    }
                }
            }
        }
        center = best.0;
    }
    best
}
