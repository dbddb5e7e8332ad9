//! Nelder–Mead simplex minimisation with restarts.

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    /// Stop when the spread of function values falls below
    /// `tolerance * max(1, |f_best|)`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Per-coordinate size of the initial simplex.
    pub steps: Vec<f64>,
    /// Restart from the best vertex after convergence until a restart
    /// improves by less than the tolerance.
    pub max_restarts: usize,
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn nelder_mead_once<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: &[f64],
    opts: &SimplexOptions,
    budget: usize,
) -> SimplexResult {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opts.steps.get(i).copied().unwrap_or(0.1);
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| finite_or_inf(f(p))).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < budget {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let (best, worst) = (vals[0], vals[n]);
        if best.is_finite() && (worst - best) <= opts.tolerance * best.abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (pts[n][k] - centroid[k])).collect() };

        let xr = along(-1.0);
        let fr = finite_or_inf(f(&xr));
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = finite_or_inf(f(&xe));
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(-0.5);
            let fc = finite_or_inf(f(&xc));
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = finite_or_inf(f(&xc));
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = (0..n).map(|k| pts[0][k] + 0.5 * (pts[i][k] - pts[0][k])).collect();
            vals[i] = finite_or_inf(f(&shrunk));
            pts[i] = shrunk;
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    SimplexResult {
        x: pts[best].clone(),
        value: vals[best],
        iterations,
        converged,
    }
}

pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &SimplexOptions) -> SimplexResult {
    let mut result = nelder_mead_once(&mut f, x0, opts, opts.max_iterations);
    let mut used = result.iterations;
    for _ in 0..opts.max_restarts {
        if !result.converged || used >= opts.max_iterations {
            break;
        }
        let again = nelder_mead_once(&mut f, &result.x, opts, opts.max_iterations - used);
        used += again.iterations;
        let gain = result.value - again.value;
        let settled = gain <= opts.tolerance * result.value.abs().max(1.0);
        if again.value <= result.value {
            result = SimplexResult {
                iterations: used,
                ..again
            };
        }
        if settled {
            break;
        }
    }
    result.iterations = used;
    result
}
