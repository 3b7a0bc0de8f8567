//! Derivative-free simplex minimization (Nelder-Mead).

/// Standard Nelder-Mead with reflection 1, expansion 2, contraction 0.5,
/// shrink 0.5. Deterministic: no internal randomness.
#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub max_iters: usize,
    /// Stop when every vertex is within this distance of the best vertex.
    pub x_tol: f64,
    /// Stop when the value spread across the simplex falls below this.
    pub f_tol: f64,
    /// Offset used to build the initial simplex around the start point.
    pub init_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iters: 2000,
            x_tol: 1e-8,
            f_tol: 1e-14,
            init_step: 0.1,
        }
    }
}

impl NelderMead {
    /// Minimize `f` starting from `x0`; returns the best point and its value.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> (Vec<f64>, f64) {
        let dim = x0.len();
        if dim == 0 {
            let v = f(x0);
            return (Vec::new(), v);
        }
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
        simplex.push(x0.to_vec());
        for i in 0..dim {
            let mut p = x0.to_vec();
            p[i] += if p[i].abs() > 1.0 {
                self.init_step * p[i].abs()
            } else {
                self.init_step
            };
            simplex.push(p);
        }
        let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

        for _ in 0..self.max_iters {
            // order: best first, worst last
            let mut order: Vec<usize> = (0..simplex.len()).collect();
            order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
            let simplex_sorted: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
            let values_sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
            simplex = simplex_sorted;
            values = values_sorted;

            if self.converged(&simplex, &values) {
                break;
            }

            let worst = dim;
            let centroid: Vec<f64> = (0..dim)
                .map(|j| simplex[..worst].iter().map(|p| p[j]).sum::<f64>() / dim as f64)
                .collect();

            let reflect: Vec<f64> = (0..dim)
                .map(|j| centroid[j] + (centroid[j] - simplex[worst][j]))
                .collect();
            let f_reflect = f(&reflect);

            if f_reflect < values[0] {
                let expand: Vec<f64> = (0..dim)
                    .map(|j| centroid[j] + 2.0 * (centroid[j] - simplex[worst][j]))
                    .collect();
                let f_expand = f(&expand);
                if f_expand < f_reflect {
                    simplex[worst] = expand;
                    values[worst] = f_expand;
                } else {
                    simplex[worst] = reflect;
                    values[worst] = f_reflect;
                }
            } else if f_reflect < values[worst - 1] {
                simplex[worst] = reflect;
                values[worst] = f_reflect;
            } else {
                let (towards, f_towards) = if f_reflect < values[worst] {
                    (reflect.clone(), f_reflect)
                } else {
                    (simplex[worst].clone(), values[worst])
                };
                let contract: Vec<f64> = (0..dim)
                    .map(|j| centroid[j] + 0.5 * (towards[j] - centroid[j]))
                    .collect();
                let f_contract = f(&contract);
                if f_contract < f_towards {
                    simplex[worst] = contract;
                    values[worst] = f_contract;
                } else {
                    // shrink toward the best vertex
                    for i in 1..=dim {
                        for j in 0..dim {
                            simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                        }
                        values[i] = f(&simplex[i]);
                    }
                }
            }
        }

        let best = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (simplex[best].clone(), values[best])
    }

    fn converged(&self, simplex: &[Vec<f64>], values: &[f64]) -> bool {
        let spread = values[values.len() - 1] - values[0];
        let max_dist = simplex[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        max_dist <= self.x_tol && spread.abs() <= self.f_tol.max(1e-14 * values[0].abs())
    }
}
