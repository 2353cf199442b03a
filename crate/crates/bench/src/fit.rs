//! Constant fitting for bounds of the form `y <= sum c_k * x_k`.

/// Smallest `c` with `measured <= c * basis` at every point.
pub fn envelope(points: &[(f64, f64)]) -> f64 {
    points
        .iter()
        .map(|&(measured, basis)| measured / basis)
        .fold(0.0, f64::max)
}

fn sse(xs: &[[f64; 2]], ys: &[f64], c: [f64; 2]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - c[0] * x[0] - c[1] * x[1];
            r * r
        })
        .sum()
}

/// Least squares over two features with both coefficients kept non-negative.
pub fn nnls2(xs: &[[f64; 2]], ys: &[f64]) -> [f64; 2] {
    let (mut s00, mut s01, mut s11, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, &y) in xs.iter().zip(ys) {
        s00 += x[0] * x[0];
        s01 += x[0] * x[1];
        s11 += x[1] * x[1];
        t0 += x[0] * y;
        t1 += x[1] * y;
    }
    let det = s00 * s11 - s01 * s01;
    let scale = s00 * s11;
    if scale > 0.0 && det.abs() > 1e-12 * scale {
        let c = [(t0 * s11 - t1 * s01) / det, (t1 * s00 - t0 * s01) / det];
        if c[0] >= 0.0 && c[1] >= 0.0 {
            return c;
        }
    }
    let mut candidates = vec![[0.0, 0.0]];
    if s00 > 0.0 {
        candidates.push([(t0 / s00).max(0.0), 0.0]);
    }
    if s11 > 0.0 {
        candidates.push([0.0, (t1 / s11).max(0.0)]);
    }
    candidates
        .into_iter()
        .min_by(|a, b| sse(xs, ys, *a).total_cmp(&sse(xs, ys, *b)))
        .expect("candidate list is never empty")
}

/// Non-negative least squares, then both coefficients scaled up together
/// until every point lies on or under the fitted bound.
pub fn envelope2(xs: &[[f64; 2]], ys: &[f64]) -> [f64; 2] {
    let c = nnls2(xs, ys);
    let worst = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let pred = c[0] * x[0] + c[1] * x[1];
            if pred > 0.0 {
                y / pred
            } else if *y > 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        })
        .fold(1.0, f64::max);
    [c[0] * worst, c[1] * worst]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_coefficients() {
        let xs: Vec<[f64; 2]> = (1..6).map(|k| [k as f64, 1.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x[0] + 2.0).collect();
        let c = envelope2(&xs, &ys);
        assert!((c[0] - 3.0).abs() < 1e-9 && (c[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn negative_intercept_is_clamped() {
        let xs = [[5.0, 1.0], [3.23, 1.0], [2.09, 1.0]];
        let ys = [24.37, 9.05, 3.75];
        let c = nnls2(&xs, &ys);
        assert_eq!(c[1], 0.0);
        let env = envelope2(&xs, &ys);
        for (x, y) in xs.iter().zip(ys) {
            assert!(env[0] * x[0] + env[1] * x[1] >= y - 1e-9);
        }
        assert!((env[0] - 24.37 / 5.0).abs() < 1e-9);
    }

    #[test]
    fn envelope_is_max_ratio() {
        assert_eq!(envelope(&[(2.0, 1.0), (3.0, 2.0)]), 2.0);
        assert_eq!(envelope(&[]), 0.0);
    }
}
