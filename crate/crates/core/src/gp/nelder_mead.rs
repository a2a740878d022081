//! Derivative-free simplex minimization.

/// Outcome of one Nelder-Mead run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest distance from the best vertex to any other vertex.
fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let best = &simplex[0];
    simplex[1..]
        .iter()
        .map(|v| v.iter().zip(best).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of edge `step`.
///
/// Standard coefficients (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2). Stops when the simplex diameter drops below `tol` or after
/// `max_iter` iterations. Non-finite objective values are treated as +inf.
pub fn minimize<F>(mut f: F, x0: &[f64], step: f64, tol: f64, max_iter: usize) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let f0 = eval(x0);
    if max_iter == 0 || n == 0 {
        return Minimum {
            x: x0.to_vec(),
            value: f0,
            iterations: 0,
            converged: n == 0,
        };
    }
    let mut simplex = vec![x0.to_vec()];
    let mut values = vec![f0];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        values.push(eval(&v));
        simplex.push(v);
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // Stable sort keeps ties in vertex order, so runs are reproducible.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if diameter(&simplex) < tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let reflected = along(1.0);
        let fr = eval(&reflected);
        if fr < values[0] {
            let expanded = along(2.0);
            let fe = eval(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let c = along(0.5);
            let v = eval(&c);
            (c, v)
        } else {
            let c = along(-0.5);
            let v = eval(&c);
            (c, v)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            for (x, b) in simplex[i].iter_mut().zip(&best) {
                *x = b + 0.5 * (*x - b);
            }
            values[i] = eval(&simplex[i]);
        }
    }
    Minimum {
        x: simplex.swap_remove(0),
        value: values[0],
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let m = minimize(
            |x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2),
            &[0.0, 0.0],
            0.5,
            1e-8,
            2000,
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock() {
        let m = minimize(
            |x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2),
            &[-1.2, 1.0],
            0.5,
            1e-10,
            5000,
        );
        assert!(m.value < 1e-10, "{}", m.value);
    }

    #[test]
    fn zero_iterations_returns_start() {
        let m = minimize(|x| x[0] * x[0], &[3.0], 0.5, 1e-6, 0);
        assert_eq!(m.x, vec![3.0]);
        assert_eq!(m.value, 9.0);
    }

    #[test]
    fn never_worse_than_start() {
        let start = [0.3, -0.7, 2.0];
        let f = |x: &[f64]| x.iter().map(|v| v.sin() + 0.1 * v * v).sum::<f64>();
        let m = minimize(f, &start, 0.5, 1e-6, 300);
        assert!(m.value <= f(&start));
    }
}
