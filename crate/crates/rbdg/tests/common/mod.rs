//! Independent oracles for checking the solver kernels: brute-force grid
//! search, a generic equality-constrained QP solver fed by a numerically
//! extracted Hessian, a joint FISTA solver, and plain subgradient descent.
//! None of them share code with the implementation paths they check.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

/// Two-stage 1-D grid search for the scalar two-kink prox objective.
/// Returns the grid argmin and the final grid resolution.
pub fn grid_prox_oracle(v: f64, a: f64, b: f64, anchor: f64) -> (f64, f64) {
    let phi = |s: f64| a * s.abs() + b * (s - anchor).abs() + 0.5 * (s - v) * (s - v);
    let mut lo = -(v.abs() + anchor.abs() + 1.0);
    let mut hi = v.abs() + anchor.abs() + 1.0;
    let mut best = lo;
    let mut best_val = phi(lo);
    let mut resolution = 0.0;
    for _stage in 0..2 {
        let steps = 2000;
        resolution = (hi - lo) / steps as f64;
        for i in 0..=steps {
            let s = lo + resolution * i as f64;
            let val = phi(s);
            if val < best_val {
                best = s;
                best_val = val;
            }
        }
        lo = best - resolution;
        hi = best + resolution;
    }
    (best, resolution)
}

/// The filter-block objective evaluated through plain matrix arithmetic.
pub fn g_objective(
    g: &DMatrix<f64>,
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    s: &DMatrix<f64>,
    gamma: f64,
) -> f64 {
    (g * y - x).norm_squared() + gamma * (g * s - s * g).norm_squared()
}

/// Solves min f(vec G) s.t. Tr(G) = 1 for the quadratic `g_objective` by
/// extracting the Hessian and gradient numerically from black-box
/// evaluations and eliminating the constraint with an explicit null-space
/// basis. Independent of the production KKT assembly.
pub fn eqp_oracle(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    s: &DMatrix<f64>,
    gamma: f64,
) -> DMatrix<f64> {
    let n = s.nrows();
    let dim = n * n;
    let basis = |k: usize| {
        let mut m = DMatrix::<f64>::zeros(n, n);
        m[(k % n, k / n)] = 1.0;
        m
    };
    let eval = |m: &DMatrix<f64>| g_objective(m, y, x, s, gamma);

    let zero = DMatrix::<f64>::zeros(n, n);
    let f0 = eval(&zero);
    let f_single: Vec<f64> = (0..dim).map(|k| eval(&basis(k))).collect();

    // H_kl = f(e_k + e_l) - f(e_k) - f(e_l) + f(0) for a quadratic f
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    for k in 0..dim {
        for l in k..dim {
            let mut probe = basis(k);
            probe += basis(l);
            let v = eval(&probe) - f_single[k] - f_single[l] + f0;
            hess[(k, l)] = v;
            hess[(l, k)] = v;
        }
    }
    let grad0 = nalgebra::DVector::<f64>::from_fn(dim, |k, _| {
        f_single[k] - 0.5 * hess[(k, k)] - f0
    });

    // null-space basis of the trace constraint: off-diagonal unit matrices
    // plus consecutive diagonal differences
    let mut cols: Vec<nalgebra::DVector<f64>> = Vec::new();
    for k in 0..dim {
        let (r, c) = (k % n, k / n);
        if r != c {
            cols.push(nalgebra::DVector::from_fn(dim, |i, _| if i == k { 1.0 } else { 0.0 }));
        }
    }
    for i in 0..n - 1 {
        let mut v = nalgebra::DVector::<f64>::zeros(dim);
        v[i * n + i] = 1.0;
        v[(i + 1) * n + (i + 1)] = -1.0;
        cols.push(v);
    }
    let z = DMatrix::<f64>::from_columns(&cols);
    let x0 = nalgebra::DVector::<f64>::from_fn(dim, |k, _| {
        if k % n == k / n {
            1.0 / n as f64
        } else {
            0.0
        }
    });

    let reduced = z.transpose() * &hess * &z;
    let rhs = -(z.transpose() * (&hess * &x0 + &grad0));
    let w = reduced.lu().solve(&rhs).expect("reduced system solvable");
    let sol = x0 + z * w;
    DMatrix::from_column_slice(n, n, sol.as_slice())
}

/// Joint FISTA (with function restart) on the filter/source block:
/// min ||G Y - X||^2 + alpha ||X||_1 + gamma ||G S - S G||^2, Tr(G) = 1.
/// Returns the reached objective value.
pub fn fista_step1_oracle(
    y: &DMatrix<f64>,
    s: &DMatrix<f64>,
    alpha: f64,
    gamma: f64,
    iters: usize,
) -> f64 {
    let n = s.nrows();
    let m = y.ncols();

    let objective = |g: &DMatrix<f64>, x: &DMatrix<f64>| {
        (g * y - x).norm_squared()
            + alpha * x.iter().map(|v| v.abs()).sum::<f64>()
            + gamma * (g * s - s * g).norm_squared()
    };

    // power iteration on the joint smooth map for the step size
    let mut pg = DMatrix::<f64>::from_fn(n, n, |i, j| ((i * 31 + j * 17 + 3) % 13) as f64 - 6.0);
    let mut px = DMatrix::<f64>::from_fn(n, m, |i, j| ((i * 7 + j * 29 + 5) % 11) as f64 - 5.0);
    let mut lam = 0.0;
    for _ in 0..100 {
        let norm = (pg.norm_squared() + px.norm_squared()).sqrt();
        if norm == 0.0 {
            break;
        }
        pg /= norm;
        px /= norm;
        let r1 = &pg * y - &px;
        let r2 = (&pg * s - s * &pg) * gamma.sqrt();
        let ag = &r1 * y.transpose() + (&r2 * s.transpose() - s.transpose() * &r2) * gamma.sqrt();
        let ax = -&r1;
        lam = (pg.dot(&ag) + px.dot(&ax)).abs();
        pg = ag;
        px = ax;
    }
    let tau = 1.0 / (2.0 * lam * 1.05);

    let project = |g: &mut DMatrix<f64>| {
        let corr = (g.trace() - 1.0) / n as f64;
        for i in 0..n {
            g[(i, i)] -= corr;
        }
    };

    let mut g = DMatrix::<f64>::identity(n, n) / n as f64;
    let mut x = DMatrix::<f64>::zeros(n, m);
    let (mut zg, mut zx) = (g.clone(), x.clone());
    let mut theta: f64 = 1.0;
    let mut prev_obj = objective(&g, &x);
    for _ in 0..iters {
        let r = &zg * y - &zx;
        let c = &zg * s - s * &zg;
        let grad_g = (&r * y.transpose()) * 2.0 + (&c * s.transpose() - s.transpose() * &c) * (2.0 * gamma);
        let grad_x = -r * 2.0;
        let mut g_next = &zg - &grad_g * tau;
        project(&mut g_next);
        let x_next = (&zx - &grad_x * tau).map(|v| {
            let t = tau * alpha;
            if v.abs() <= t {
                0.0
            } else {
                v - t * v.signum()
            }
        });
        let obj = objective(&g_next, &x_next);
        if obj > prev_obj {
            // function restart
            theta = 1.0;
        }
        prev_obj = obj;
        let theta_next = (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) / 2.0;
        let mom = (theta - 1.0) / theta_next;
        zg = &g_next + (&g_next - &g) * mom;
        zx = &x_next + (&x_next - &x) * mom;
        project(&mut zg);
        g = g_next;
        x = x_next;
        theta = theta_next;
    }
    objective(&g, &x)
}

/// Plain subgradient descent with 1/sqrt(k) steps on the graph-denoising
/// objective. Returns the best objective value seen.
pub fn subgradient_s_oracle(
    s0: &DMatrix<f64>,
    g: &DMatrix<f64>,
    s_bar: &DMatrix<f64>,
    beta: f64,
    lambda: f64,
    gamma: f64,
    iters: usize,
) -> f64 {
    let objective = |s: &DMatrix<f64>| {
        beta * s.iter().map(|v| v.abs()).sum::<f64>()
            + lambda * (s - s_bar).iter().map(|v| v.abs()).sum::<f64>()
            + gamma * (g * s - s * g).norm_squared()
    };
    let mut s = s0.clone();
    let mut best = objective(&s);
    let step0 = 0.5 * (1.0 + s_bar.norm());
    for k in 1..=iters {
        let c = g * &s - &s * g;
        let smooth_grad = (g.transpose() * &c - &c * g.transpose()) * (2.0 * gamma);
        let sub = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
            beta * s[(i, j)].signum() + lambda * (s[(i, j)] - s_bar[(i, j)]).signum()
        });
        let dir = smooth_grad + sub;
        let norm = dir.norm();
        if norm == 0.0 {
            break;
        }
        s -= dir * (step0 / (norm * (k as f64).sqrt()));
        let obj = objective(&s);
        if obj < best {
            best = obj;
        }
    }
    best
}

/// Deterministic random matrix helper for oracle tests.
pub fn randn(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Random symmetric hollow matrix.
pub fn random_hollow_symmetric(rng: &mut impl rand::Rng, n: usize) -> DMatrix<f64> {
    let mut m = randn(rng, n, n);
    for i in 0..n {
        m[(i, i)] = 0.0;
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    m
}
