//! Derivative-free minimisation.

/// Outcome of a Nelder–Mead run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_evaluations: usize,
    /// Fresh simplexes built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            f_tol: 1e-12,
            x_tol: 1e-9,
            max_evaluations: 40_000,
            restarts: 2,
        }
    }
}

impl NelderMead {
    /// Minimise `f` from `start`; non-finite values are treated as `+∞`.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, start: &[f64]) -> Minimum {
        let mut eval = |x: &[f64]| {
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut best = start.to_vec();
        let mut best_value = eval(&best);
        let mut evaluations = 1;
        let mut converged = false;
        for _ in 0..=self.restarts {
            let (x, v, used, ok) = self.run(
                &mut eval,
                &best,
                self.max_evaluations.saturating_sub(evaluations),
            );
            evaluations += used;
            let improved = v < best_value - self.f_tol * (1.0 + best_value.abs());
            if v <= best_value {
                best = x;
                best_value = v;
            }
            converged = ok;
            if !improved && ok {
                break;
            }
            if evaluations >= self.max_evaluations {
                break;
            }
        }
        Minimum {
            x: best,
            value: best_value,
            evaluations,
            converged,
        }
    }

    fn run<F: FnMut(&[f64]) -> f64>(
        &self,
        f: &mut F,
        start: &[f64],
        budget: usize,
    ) -> (Vec<f64>, f64, usize, bool) {
        let n = start.len();
        if n == 0 {
            return (Vec::new(), f(start), 1, true);
        }
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(start.to_vec());
        for j in 0..n {
            let mut v = start.to_vec();
            v[j] += 0.25 + 0.05 * v[j].abs();
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
        let mut used = n + 1;
        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        loop {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = (values[n] - values[0]).abs();
            let diameter = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if values[0].is_finite()
                && spread <= self.f_tol * (1.0 + values[0].abs())
                && diameter
                    <= self.x_tol * (1.0 + simplex[0].iter().map(|x| x.abs()).fold(0.0, f64::max))
            {
                return (simplex.swap_remove(0), values[0], used, true);
            }
            if used >= budget {
                return (simplex.swap_remove(0), values[0], used, false);
            }

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
            let reflected = along(alpha);
            let fr = f(&reflected);
            used += 1;
            if fr < values[0] {
                let expanded = along(gamma);
                let fe = f(&expanded);
                used += 1;
                if fe < fr {
                    simplex[n] = expanded;
                    values[n] = fe;
                } else {
                    simplex[n] = reflected;
                    values[n] = fr;
                }
            } else if fr < values[n - 1] {
                simplex[n] = reflected;
                values[n] = fr;
            } else {
                let (contracted, fc) = if fr < values[n] {
                    let c = along(rho);
                    let fc = f(&c);
                    (c, fc)
                } else {
                    let c = along(-rho);
                    let fc = f(&c);
                    (c, fc)
                };
                used += 1;
                if fc < values[n].min(fr) {
                    simplex[n] = contracted;
                    values[n] = fc;
                } else {
                    for i in 1..=n {
                        let shrunk: Vec<f64> = simplex[0]
                            .iter()
                            .zip(&simplex[i])
                            .map(|(b, x)| b + sigma * (x - b))
                            .collect();
                        values[i] = f(&shrunk);
                        simplex[i] = shrunk;
                    }
                    used += n;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let m = NelderMead::default().minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!(m.converged);
        assert!(
            (m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            m.x
        );
    }

    #[test]
    fn quadratic_in_five_dimensions() {
        let target = [1.0, -2.0, 0.5, 3.0, 0.0];
        let m = NelderMead::default().minimize(
            |x| {
                x.iter()
                    .zip(&target)
                    .enumerate()
                    .map(|(i, (a, b))| (i + 1) as f64 * (a - b).powi(2))
                    .sum()
            },
            &[0.0; 5],
        );
        for (a, b) in m.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn infeasible_region_is_avoided() {
        let m = NelderMead::default().minimize(
            |x| {
                if x[0] < 0.5 {
                    f64::NAN
                } else {
                    (x[0] - 1.0).powi(2)
                }
            },
            &[2.0],
        );
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }
}
