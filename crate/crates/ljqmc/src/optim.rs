//! Bounded derivative-free simplex minimization (Nelder-Mead), used for the
//! nonlinear wavefunction parameters and for classical potential minima.

/// Result of a simplex minimization.
#[derive(Debug, Clone)]
pub struct OptResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
    /// Best objective after each accepted improvement.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_evals: usize,
    pub ftol: f64,
    pub xtol: f64,
    /// Per-parameter bounds; proposals are clipped to the box.
    pub bounds: Vec<(f64, f64)>,
    /// Initial simplex displacement per parameter.
    pub initial_step: Vec<f64>,
}

impl NelderMead {
    pub fn new(bounds: Vec<(f64, f64)>, initial_step: Vec<f64>) -> Self {
        NelderMead { max_evals: 2000, ftol: 1e-10, xtol: 1e-10, bounds, initial_step }
    }

    fn clip(&self, x: &mut [f64]) {
        for (xi, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *xi = xi.clamp(lo, hi);
        }
    }

    pub fn minimize(&self, mut f: impl FnMut(&[f64]) -> f64, x0: &[f64]) -> OptResult {
        let n = x0.len();
        assert_eq!(self.bounds.len(), n);
        assert_eq!(self.initial_step.len(), n);
        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::MAX / 4.0
            }
        };

        // initial simplex: x0 plus one displaced vertex per parameter
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        let mut start = x0.to_vec();
        self.clip(&mut start);
        let f0 = eval(&start, &mut evals);
        simplex.push((start.clone(), f0));
        for i in 0..n {
            let mut v = start.clone();
            v[i] += self.initial_step[i];
            if v[i] > self.bounds[i].1 {
                v[i] = start[i] - self.initial_step[i];
            }
            self.clip(&mut v);
            let fv = eval(&v, &mut evals);
            simplex.push((v, fv));
        }

        let mut history = vec![simplex.iter().map(|s| s.1).fold(f64::INFINITY, f64::min)];
        let mut converged = false;

        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
            let best = simplex[0].1;
            let worst = simplex[n].1;
            if *history.last().unwrap() > best {
                history.push(best);
            }
            let spread: f64 = (0..n)
                .map(|i| {
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for s in &simplex {
                        lo = lo.min(s.0[i]);
                        hi = hi.max(s.0[i]);
                    }
                    hi - lo
                })
                .fold(0.0, f64::max);
            if (worst - best).abs() <= self.ftol * (1.0 + best.abs()) && spread <= self.xtol {
                converged = true;
                break;
            }

            // centroid of all but worst
            let mut centroid = vec![0.0; n];
            for s in simplex.iter().take(n) {
                for i in 0..n {
                    centroid[i] += s.0[i] / n as f64;
                }
            }

            let mut reflected: Vec<f64> =
                (0..n).map(|i| centroid[i] + alpha * (centroid[i] - simplex[n].0[i])).collect();
            self.clip(&mut reflected);
            let fr = eval(&reflected, &mut evals);

            if fr < simplex[0].1 {
                let mut expanded: Vec<f64> =
                    (0..n).map(|i| centroid[i] + gamma * (reflected[i] - centroid[i])).collect();
                self.clip(&mut expanded);
                let fe = eval(&expanded, &mut evals);
                simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (reflected, fr);
            } else {
                let mut contracted: Vec<f64> =
                    (0..n).map(|i| centroid[i] + rho * (simplex[n].0[i] - centroid[i])).collect();
                self.clip(&mut contracted);
                let fc = eval(&contracted, &mut evals);
                if fc < simplex[n].1 {
                    simplex[n] = (contracted, fc);
                } else {
                    // shrink toward the best vertex
                    let best_x = simplex[0].0.clone();
                    for s in simplex.iter_mut().skip(1) {
                        for i in 0..n {
                            s.0[i] = best_x[i] + sigma * (s.0[i] - best_x[i]);
                        }
                        s.1 = eval(&s.0, &mut evals);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        if *history.last().unwrap() > simplex[0].1 {
            history.push(simplex[0].1);
        }
        OptResult { x: simplex[0].0.clone(), fx: simplex[0].1, evals, converged, history }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_bowl() {
        let nm = NelderMead::new(vec![(-10.0, 10.0); 3], vec![0.5; 3]);
        let r = nm.minimize(
            |x| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + (x[2] - 2.0).powi(2),
            &[0.0, 0.0, 0.0],
        );
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(r.x[1], -0.5, epsilon = 1e-4);
        assert_relative_eq!(r.x[2], 2.0, epsilon = 1e-4);
    }

    #[test]
    fn respects_bounds() {
        let nm = NelderMead::new(vec![(0.5, 2.0)], vec![0.3]);
        let r = nm.minimize(|x| x[0] * x[0], &[1.5]);
        assert_relative_eq!(r.x[0], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn history_monotone_nonincreasing() {
        let nm = NelderMead::new(vec![(-5.0, 5.0); 2], vec![0.7; 2]);
        let r = nm.minimize(|x| x[0].powi(4) + (x[1] - 1.0).powi(2), &[2.0, -2.0]);
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}
