//! Dual solver for ε-insensitive linear support vector regression.
//!
//! The dual is the box-constrained QP over per-sample coefficient pairs
//! (α, α*), tied by the zero-sum constraint Σ(α − α*) = 0, with linear-kernel
//! Gram matrix. It is solved by sequential minimal optimization with
//! second-order working-set selection; termination requires both the KKT
//! violation and the primal-dual gap to fall under tolerance.
//!
//! Rows are re-ordered internally into a canonical sort before solving, so
//! the returned coefficients, bias, and objective depend only on the sample
//! multiset, not on presentation order.

/// Converged dual solution. `beta[i]` is α_i − α_i* for input row `i`.
#[derive(Debug, Clone)]
#[allow(dead_code)] // diagnostic fields are read by tests only
pub(crate) struct SvrSolution {
    pub beta: Vec<f64>,
    pub bias: f64,
    /// Value of the maximized dual objective.
    pub dual_objective: f64,
    pub duality_gap: f64,
    pub kkt_violation: f64,
    pub iterations: usize,
}

/// Required duality gap at convergence, relative to `C·N`.
pub(crate) const GAP_TOL_PER_CN: f64 = 1e-6;

const MAX_ITERATIONS: usize = 5_000_000;
const CURVATURE_FLOOR: f64 = 1e-12;
const REFRESH_EVERY: usize = 1024;

pub(crate) fn solve(x: &[Vec<f64>], y: &[f64], c: f64, eps: f64) -> SvrSolution {
    let n = x.len();
    assert!(n >= 2, "solver needs at least two rows");
    assert!(c > 0.0 && eps >= 0.0);

    // Canonical order: lexicographic over (features, target).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        x[i].iter()
            .zip(x[j].iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| y[i].total_cmp(&y[j]))
    });
    let xs: Vec<&[f64]> = order.iter().map(|&i| x[i].as_slice()).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let sol = solve_sorted(&xs, &ys, c, eps);

    let mut beta = vec![0.0; n];
    for (sorted_pos, &orig) in order.iter().enumerate() {
        beta[orig] = sol.beta[sorted_pos];
    }
    SvrSolution { beta, ..sol }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| p * q).sum()
}

// Index convention: t < n is α_t, t >= n is α*_{t-n}; sign(t) = ±1.
fn solve_sorted(x: &[&[f64]], y: &[f64], c: f64, eps: f64) -> SvrSolution {
    let n = x.len();
    let kernel: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dot(x[i], x[j])).collect()).collect();

    let y_scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let kkt_tol = 1e-9 * y_scale;
    let gap_tol = GAP_TOL_PER_CN * c * n as f64;

    let mut a = vec![0.0f64; 2 * n];
    // glin[i] = (K β)_i = w·x_i for the current coefficients.
    let mut glin = vec![0.0f64; n];

    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let row = |t: usize| if t < n { t } else { t - n };
    // p_t: linear term of the dual objective (minimization form).
    let p = |t: usize| if t < n { eps - y[t] } else { eps + y[t - n] };
    // g_t = -s_t ∇_t; the bias must satisfy g_t <= b on the up set and
    // b <= g_t on the low set.
    let g = |t: usize, glin: &[f64]| -sign(t) * (sign(t) * glin[row(t)] + p(t));

    let mut iterations = 0usize;
    let (mut m_up, mut m_low);
    loop {
        // Working-set selection: first-order max violator from the up set,
        // second-order best-gain partner from the low set.
        let mut i_up = usize::MAX;
        m_up = f64::NEG_INFINITY;
        for t in 0..2 * n {
            let movable = if sign(t) > 0.0 { a[t] < c } else { a[t] > 0.0 };
            if movable {
                let gt = g(t, &glin);
                if gt > m_up {
                    m_up = gt;
                    i_up = t;
                }
            }
        }
        m_low = f64::INFINITY;
        let mut j_second = usize::MAX;
        let mut best_gain = 0.0f64;
        let ri = row(i_up);
        for t in 0..2 * n {
            let movable = if sign(t) > 0.0 { a[t] > 0.0 } else { a[t] < c };
            if !movable {
                continue;
            }
            let gt = g(t, &glin);
            if gt < m_low {
                m_low = gt;
            }
            if gt < m_up {
                let rt = row(t);
                let eta = (kernel[ri][ri] + kernel[rt][rt] - 2.0 * kernel[ri][rt]).max(CURVATURE_FLOOR);
                let gain = (m_up - gt) * (m_up - gt) / eta;
                if gain > best_gain {
                    best_gain = gain;
                    j_second = t;
                }
            }
        }

        if m_up - m_low <= kkt_tol || j_second == usize::MAX {
            // KKT satisfied; accept only if the duality gap is in as well.
            let (gap, _) = objectives(&a, &glin, y, c, eps, n, m_up, m_low);
            if gap <= gap_tol || iterations >= MAX_ITERATIONS {
                break;
            }
        }
        if iterations >= MAX_ITERATIONS {
            break;
        }
        iterations += 1;

        let i = i_up;
        let j = j_second;
        let (ri, rj) = (row(i), row(j));
        let eta = (kernel[ri][ri] + kernel[rj][rj] - 2.0 * kernel[ri][rj]).max(CURVATURE_FLOOR);
        let gi = g(i, &glin);
        let gj = g(j, &glin);
        // Step along the feasible direction a_i += s_i t, a_j -= s_j t.
        let mut t_step = (gi - gj) / eta;
        let t_max_i = if sign(i) > 0.0 { c - a[i] } else { a[i] };
        let t_max_j = if sign(j) > 0.0 { a[j] } else { c - a[j] };
        t_step = t_step.min(t_max_i).min(t_max_j);

        if t_step == t_max_i {
            a[i] = if sign(i) > 0.0 { c } else { 0.0 };
        } else {
            a[i] += sign(i) * t_step;
        }
        if t_step == t_max_j {
            a[j] = if sign(j) > 0.0 { 0.0 } else { c };
        } else {
            a[j] -= sign(j) * t_step;
        }

        if iterations % REFRESH_EVERY == 0 {
            refresh(&mut glin, &a, &kernel, n);
        } else {
            for r in 0..n {
                glin[r] += t_step * (kernel[r][ri] - kernel[r][rj]);
            }
        }
    }

    refresh(&mut glin, &a, &kernel, n);
    let (gap, dual_obj) = objectives(&a, &glin, y, c, eps, n, m_up, m_low);
    SvrSolution {
        beta: (0..n).map(|i| a[i] - a[i + n]).collect(),
        bias: 0.5 * (m_up + m_low),
        dual_objective: dual_obj,
        duality_gap: gap,
        kkt_violation: m_up - m_low,
        iterations,
    }
}

fn refresh(glin: &mut [f64], a: &[f64], kernel: &[Vec<f64>], n: usize) {
    for r in 0..n {
        glin[r] = (0..n).map(|i| kernel[r][i] * (a[i] - a[i + n])).sum();
    }
}

// Primal uses the midpoint bias of the current KKT interval; the gap is
// measured against the maximization-form dual objective.
fn objectives(
    a: &[f64],
    glin: &[f64],
    y: &[f64],
    c: f64,
    eps: f64,
    n: usize,
    m_up: f64,
    m_low: f64,
) -> (f64, f64) {
    let bias = 0.5 * (m_up + m_low);
    let mut quad = 0.0;
    let mut eps_term = 0.0;
    let mut y_term = 0.0;
    for i in 0..n {
        let beta = a[i] - a[i + n];
        quad += beta * glin[i];
        eps_term += eps * (a[i] + a[i + n]);
        y_term += y[i] * beta;
    }
    let dual = -0.5 * quad - eps_term + y_term;

    let mut loss = 0.0;
    for i in 0..n {
        loss += (y[i] - glin[i] - bias).abs().max(eps) - eps;
    }
    let primal = 0.5 * quad + c * loss;
    (primal - dual, dual)
}
