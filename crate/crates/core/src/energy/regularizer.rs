use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GridSpec;
use crate::sum::pairwise_sum;

/// Weight and order of the higher-order smoothness term `γ|Dᵐu|²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    pub gamma: f64,
    pub m: usize,
    /// Allows `m = 2` in two dimensions.
    pub pragmatic: bool,
}

impl RegParams {
    pub fn new(gamma: f64, m: usize) -> Self {
        Self {
            gamma,
            m,
            pragmatic: false,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Contract(format!("gamma = {} must be positive", self.gamma)));
        }
        let sobolev = 2 * self.m > 2 + n;
        let relaxed = self.pragmatic && n == 2 && self.m == 2;
        if !(sobolev || relaxed) {
            return Err(Error::Contract(format!(
                "order m = {} needs m > 1 + n/2 for n = {n}",
                self.m
            )));
        }
        Ok(())
    }

    /// Warning text when the order is below the embedding threshold.
    pub fn warning(&self, n: usize) -> Option<String> {
        (2 * self.m <= 2 + n).then(|| {
            format!(
                "regularizer order m = {} is below 1 + n/2 for n = {n}; pragmatic mode",
                self.m
            )
        })
    }
}

impl Default for RegParams {
    fn default() -> Self {
        Self::new(1e-3, 3)
    }
}

/// One weighted row of a difference operator.
#[derive(Clone, Debug)]
struct Row {
    weight: f64,
    taps: Vec<(usize, f64)>,
}

/// All `m`-th order forward-difference tensor stencils on a grid, with the
/// multinomial multiplicity folded into the row weights, so that
/// `Σ rows weight·(Σ taps c·u)²` approximates `∫|Dᵐu|²`.
#[derive(Clone, Debug)]
pub struct DiffOperator {
    order: usize,
    rows: Vec<Row>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

fn forward_coefficients(k: usize, h: f64) -> Vec<f64> {
    let scale = h.powi(k as i32);
    (0..=k)
        .map(|j| {
            let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(k, j) / scale
        })
        .collect()
}

fn multi_indices(n: usize, m: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    let mut cur = [0usize; 3];
    fn rec(axis: usize, left: usize, n: usize, cur: &mut [usize; 3], out: &mut Vec<[usize; 3]>) {
        if axis == n - 1 {
            cur[axis] = left;
            out.push(*cur);
            return;
        }
        for k in (0..=left).rev() {
            cur[axis] = k;
            rec(axis + 1, left - k, n, cur, out);
        }
    }
    rec(0, m, n, &mut cur, &mut out);
    out
}

impl DiffOperator {
    pub fn new(grid: &GridSpec, order: usize) -> Self {
        let n = grid.dim();
        let shape = grid.shape();
        let mut rows = Vec::new();
        for alpha in multi_indices(n, order) {
            let mult = factorial(order) / alpha[..n].iter().map(|&k| factorial(k)).product::<f64>();
            let coef: Vec<Vec<f64>> = (0..n)
                .map(|a| forward_coefficients(alpha[a], grid.spacing(a)))
                .collect();
            let counts: Vec<usize> = (0..n).map(|a| shape[a] - alpha[a]).collect();
            let total: usize = counts.iter().product();
            for lin in 0..total {
                let mut rem = lin;
                let mut start = [0usize; 3];
                for a in (0..n).rev() {
                    start[a] = rem % counts[a];
                    rem /= counts[a];
                }
                let mut weight = mult;
                for a in 0..n {
                    weight *= if alpha[a] > 0 {
                        1.0 / counts[a] as f64
                    } else {
                        let h = grid.spacing(a);
                        if start[a] == 0 || start[a] == shape[a] - 1 {
                            0.5 * h
                        } else {
                            h
                        }
                    };
                }
                let ntaps: usize = (0..n).map(|a| alpha[a] + 1).product();
                let mut taps = Vec::with_capacity(ntaps);
                for t in 0..ntaps {
                    let mut r = t;
                    let mut mi = start;
                    let mut c = 1.0;
                    for a in 0..n {
                        let off = r % (alpha[a] + 1);
                        r /= alpha[a] + 1;
                        mi[a] += off;
                        c *= coef[a][off];
                    }
                    taps.push((grid.linear_index(&mi[..n]), c));
                }
                rows.push(Row { weight, taps });
            }
        }
        Self { order, rows }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `Σ weight·|Δ^α v|²` for a vector field with `n` interleaved components.
    pub fn seminorm_sq(&self, v: &[f64], n: usize) -> f64 {
        let terms: Vec<f64> = self
            .rows
            .iter()
            .map(|row| {
                let mut s = 0.0;
                for a in 0..n {
                    let r: f64 = row.taps.iter().map(|&(j, c)| c * v[j * n + a]).sum();
                    s += r * r;
                }
                row.weight * s
            })
            .collect();
        pairwise_sum(&terms)
    }

    /// Adds `scale · ∇ seminorm_sq(v)` to `grad`.
    pub fn accumulate_gradient(&self, v: &[f64], n: usize, scale: f64, grad: &mut [f64]) {
        for row in &self.rows {
            for a in 0..n {
                let r: f64 = row.taps.iter().map(|&(j, c)| c * v[j * n + a]).sum();
                let f = 2.0 * scale * row.weight * r;
                for &(j, c) in &row.taps {
                    grad[j * n + a] += f * c;
                }
            }
        }
    }
}

/// `γ·Σ|Dᵐu|²` and its gradient with respect to the node displacements.
pub fn regularizer_with_gradient(
    grid: &GridSpec,
    disp: &[f64],
    params: &RegParams,
) -> (f64, Vec<f64>) {
    let op = DiffOperator::new(grid, params.m);
    let n = grid.dim();
    let mut grad = vec![0.0; disp.len()];
    op.accumulate_gradient(disp, n, params.gamma, &mut grad);
    (params.gamma * op.seminorm_sq(disp, n), grad)
}
