//! Derivative-free Nelder–Mead minimizer used by the EM M-step.

#[derive(Debug, Clone)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NelderMead {
    /// Initial simplex edge length along every axis.
    pub step: f64,
    /// Stop once every vertex lies within this infinity-norm distance of the best one.
    pub xtol: f64,
    pub max_evals: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

impl NelderMead {
    /// Minimizes `f` from `start`. Non-finite values are treated as `+inf`.
    pub fn minimize<F>(&self, start: &[f64], mut f: F) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = start.len();
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(start.to_vec());
        for i in 0..n {
            let mut v = start.to_vec();
            v[i] += self.step;
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut trial2 = vec![0.0; n];

        loop {
            // order ascending; ties keep index order so the run is deterministic
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0f64, f64::max);
            if spread < self.xtol || evals >= self.max_evals {
                break;
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for v in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / n as f64;
                }
            }
            let worst = simplex[n].clone();

            for k in 0..n {
                trial[k] = centroid[k] + REFLECT * (centroid[k] - worst[k]);
            }
            let f_reflect = eval(&trial, &mut evals);

            if f_reflect < values[0] {
                for k in 0..n {
                    trial2[k] = centroid[k] + EXPAND * (trial[k] - centroid[k]);
                }
                let f_expand = eval(&trial2, &mut evals);
                if f_expand < f_reflect {
                    simplex[n].copy_from_slice(&trial2);
                    values[n] = f_expand;
                } else {
                    simplex[n].copy_from_slice(&trial);
                    values[n] = f_reflect;
                }
                continue;
            }
            if f_reflect < values[n - 1] {
                simplex[n].copy_from_slice(&trial);
                values[n] = f_reflect;
                continue;
            }

            // contraction, outside if the reflection beat the worst vertex
            let outside = f_reflect < values[n];
            for k in 0..n {
                trial2[k] = if outside {
                    centroid[k] + CONTRACT * (trial[k] - centroid[k])
                } else {
                    centroid[k] + CONTRACT * (worst[k] - centroid[k])
                };
            }
            let f_contract = eval(&trial2, &mut evals);
            let bound = if outside { f_reflect } else { values[n] };
            if f_contract < bound {
                simplex[n].copy_from_slice(&trial2);
                values[n] = f_contract;
                continue;
            }

            let best = simplex[0].clone();
            for i in 1..=n {
                for k in 0..n {
                    simplex[i][k] = best[k] + SHRINK * (simplex[i][k] - best[k]);
                }
                values[i] = eval(&simplex[i], &mut evals);
            }
        }

        Minimum {
            x: simplex.swap_remove(0),
            value: values[0],
            evaluations: evals,
        }
    }
}
