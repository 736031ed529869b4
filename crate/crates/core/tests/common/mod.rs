//! Test-only reference implementations. Everything here works on plain
//! `Vec<Vec<f64>>` and recomputes quantities from their definitions, so it
//! shares no code paths with the library.
#![allow(dead_code)]

use gossip_minimax::{
    build_topology, make_bilinear_quadratic, mixing_matrix, BilinearQuadratic, MixingMatrix, TopologyKind, WeightScheme,
};
use nalgebra::DMatrix;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(m: &DMatrix<f64>) -> Mat {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn identity(n: usize) -> Mat {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (r, k, c) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(r, c);
    for i in 0..r {
        for t in 0..k {
            let v = a[i][t];
            for j in 0..c {
                out[i][j] += v * b[t][j];
            }
        }
    }
    out
}

pub fn lin(a: &Mat, sa: f64, b: &Mat, sb: f64) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| sa * u + sb * v).collect()).collect()
}

pub fn frob_sq(a: &Mat) -> f64 {
    a.iter().flatten().map(|v| v * v).sum()
}

pub fn col_mean(a: &Mat) -> Vec<f64> {
    let n = a.len() as f64;
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

pub fn dev_sq(a: &Mat) -> f64 {
    let m = col_mean(a);
    a.iter().flat_map(|r| r.iter().zip(&m).map(|(v, c)| (v - c).powi(2))).sum()
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Stacked field `[∇_x f_i, −∇_y f_i]` of the bilinear-quadratic family,
/// written out from `f_i = xᵀy + μ/2‖x−a_i‖² − μ/2‖y−b_i‖²`.
pub fn field(a: &Mat, b: &Mat, mu: f64, z: &Mat) -> Mat {
    let p = a[0].len();
    z.iter()
        .enumerate()
        .map(|(i, row)| {
            let (x, y) = row.split_at(p);
            let mut out = vec![0.0; 2 * p];
            for j in 0..p {
                out[j] = y[j] + mu * (x[j] - a[i][j]);
                out[p + j] = -(x[j] - mu * (y[j] - b[i][j]));
            }
            out
        })
        .collect()
}

pub struct Instance {
    pub problem: BilinearQuadratic,
    pub w: MixingMatrix,
    pub a: Mat,
    pub b: Mat,
    pub mu: f64,
    pub wm: Mat,
}

pub fn instance(kind: TopologyKind, n: usize, p: usize, mu: f64, seed: u64) -> Instance {
    let problem = make_bilinear_quadratic(n, p, p, mu, seed, true).unwrap();
    let w = mixing_matrix(&build_topology(kind, n).unwrap(), WeightScheme::Metropolis).unwrap();
    Instance {
        a: to_mat(problem.centers_a()),
        b: to_mat(problem.centers_b()),
        wm: to_mat(w.weights()),
        problem,
        w,
        mu,
    }
}

pub fn ring16() -> Instance {
    instance(TopologyKind::Ring, 16, 2, 0.1, 7)
}

/// Oracle state `(z, z_prev, g, g_prev, r)`.
#[derive(Clone, Debug)]
pub struct OState {
    pub z: Mat,
    pub z_prev: Mat,
    pub g: Mat,
    pub g_prev: Mat,
    pub r: Mat,
}

pub fn ostate(inst: &Instance, z0: Mat) -> OState {
    let g = field(&inst.a, &inst.b, inst.mu, &z0);
    OState { z_prev: z0.clone(), z: z0, g_prev: g.clone(), r: g.clone(), g }
}

/// One gradient-tracking optimistic step with an arbitrary gossip matrix.
pub fn dogt_step(inst: &Instance, mix: &Mat, s: &OState, gamma: f64) -> OState {
    let dir = lin(&lin(&s.r, 1.0, &s.g, 1.0), 1.0, &s.g_prev, -1.0);
    let z = matmul(mix, &lin(&s.z, 1.0, &dir, -gamma));
    let g = field(&inst.a, &inst.b, inst.mu, &z);
    let r = matmul(mix, &lin(&lin(&s.r, 1.0, &g, 1.0), 1.0, &s.g, -1.0));
    OState { z_prev: s.z.clone(), z, g_prev: s.g.clone(), g, r }
}

/// `Ξ = z̄ − γ·mean(g − g_prev) − z*`.
pub fn xi(s: &OState, gamma: f64, z_star: &[f64]) -> Vec<f64> {
    let zb = col_mean(&s.z);
    let d = col_mean(&lin(&s.g, 1.0, &s.g_prev, -1.0));
    (0..zb.len()).map(|j| zb[j] - gamma * d[j] - z_star[j]).collect()
}

/// `Ψ` recomputed term by term from its definition.
pub fn psi(s: &OState, gamma: f64, l: f64, rho: f64, z_star: &[f64]) -> f64 {
    let n = s.z.len() as f64;
    let c1 = 72.0 * gamma * l / (n * (1.0 - rho));
    let c2 = 4608.0 * gamma.powi(3) * l / (n * (1.0 - rho).powi(3));
    let x: f64 = xi(s, gamma, z_star).iter().map(|v| v * v).sum();
    x + gamma * l / n * frob_sq(&lin(&s.z, 1.0, &s.z_prev, -1.0)) + c1 * dev_sq(&s.z) + c2 * dev_sq(&s.r)
}

/// `M_T` from `M_{t+1} = (1+η)WM_t − ηM_{t−1}`, `M_{−1} = M_0 = I`.
pub fn chebyshev_matrix(w: &Mat, eta: f64, rounds: usize) -> Mat {
    let n = w.len();
    let (mut prev, mut cur) = (identity(n), identity(n));
    for _ in 0..rounds {
        let next = lin(&matmul(w, &cur), 1.0 + eta, &prev, -eta);
        prev = cur;
        cur = next;
    }
    cur
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(m: &Mat) -> Vec<f64> {
    let n = m.len();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// `‖W − J‖₂²` via Jacobi on the symmetric `W − J`.
pub fn rho_jacobi(w: &Mat) -> f64 {
    let n = w.len();
    let shifted: Mat = w.iter().map(|r| r.iter().map(|v| v - 1.0 / n as f64).collect()).collect();
    jacobi_eigenvalues(&shifted).into_iter().map(|l| l * l).fold(0.0, f64::max)
}

/// Metropolis ring weights are circulant with eigenvalues
/// `(1 + 2cos(2πk/n))/3`.
pub fn rho_ring_circulant(n: usize) -> f64 {
    (1..n)
        .map(|k| (1.0 + 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()) / 3.0)
        .map(|l| l * l)
        .fold(0.0, f64::max)
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve(mut a: Mat, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Common fixed point of DGDA and D-OGDA, `Z = W(Z − γ(ZAᵀ + C))`, solved
/// directly as a linear system in row-major `vec(Z)`.
pub fn baseline_fixed_point(inst: &Instance, gamma: f64) -> Mat {
    let n = inst.a.len();
    let p = inst.a[0].len();
    let m = 2 * p;
    let mu = inst.mu;
    // F(z) = A z + c with A = [[μI, I], [−I, μI]], c = [−μa, −μb].
    let mut amat = zeros(m, m);
    for j in 0..p {
        amat[j][j] = mu;
        amat[j][p + j] = 1.0;
        amat[p + j][j] = -1.0;
        amat[p + j][p + j] = mu;
    }
    let c: Mat = (0..n).map(|i| inst.a[i].iter().chain(&inst.b[i]).map(|v| -mu * v).collect()).collect();
    let wc = matmul(&inst.wm, &c);
    let dim = n * m;
    let mut sys = zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        for r in 0..m {
            let row = i * m + r;
            sys[row][row] += 1.0;
            rhs[row] = -gamma * wc[i][r];
            for k in 0..n {
                let wik = inst.wm[i][k];
                if wik == 0.0 {
                    continue;
                }
                sys[row][k * m + r] -= wik;
                for s in 0..m {
                    sys[row][k * m + s] += gamma * wik * amat[r][s];
                }
            }
        }
    }
    let v = solve(sys, rhs);
    (0..n).map(|i| v[i * m..(i + 1) * m].to_vec()).collect()
}

/// `((1/n)‖Z − 1z*‖², (1/n)‖Z − 1z̄‖)` with `z* = 0`.
pub fn floors(z: &Mat) -> (f64, f64) {
    let n = z.len() as f64;
    (frob_sq(z) / n, dev_sq(z).sqrt() / n)
}

/// Centralized OGDA on the averaged objective,
/// `z⁺ = z − γ(2F(z) − F(z_prev))`, written with scalar loops.
pub fn centralized_ogda(a: &[f64], b: &[f64], mu: f64, z0: &[f64], gamma: f64, steps: usize) -> Vec<Vec<f64>> {
    let p = a.len();
    let f = |z: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; 2 * p];
        for j in 0..p {
            out[j] = z[p + j] + mu * (z[j] - a[j]);
            out[p + j] = -(z[j] - mu * (z[p + j] - b[j]));
        }
        out
    };
    let mut traj = vec![z0.to_vec()];
    let mut g_prev = f(z0);
    let mut z = z0.to_vec();
    for _ in 0..steps {
        let g = f(&z);
        for j in 0..2 * p {
            z[j] -= gamma * (2.0 * g[j] - g_prev[j]);
        }
        g_prev = g;
        traj.push(z.clone());
    }
    traj
}
