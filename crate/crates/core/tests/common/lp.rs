//! Dense two-phase simplex (Bland's rule) and dense LP formulations of the
//! decoders, built from explicit matrices rather than the library operators.

const EPS: f64 = 1e-10;

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&prow) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    fn optimize(&mut self, cost: &[f64], allowed: impl Fn(usize) -> bool) -> f64 {
        loop {
            let mut enter = None;
            for j in 0..self.ncols {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j]
                    - self
                        .rows
                        .iter()
                        .zip(&self.basis)
                        .map(|(row, &b)| cost[b] * row[j])
                        .sum::<f64>();
                if reduced < -1e-12 {
                    enter = Some(j);
                    break;
                }
            }
            let Some(c) = enter else { break };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14 || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    }
                }
            }
            let (r, _) = leave.expect("LP unbounded");
            self.pivot(r, c);
        }
        self.rows
            .iter()
            .zip(&self.basis)
            .map(|(row, &b)| cost[b] * row[self.ncols])
            .sum()
    }
}

/// `min cost^T v` subject to `g v <= h`, `v >= 0`. Returns the optimal value.
pub fn lp_min(cost: &[f64], g: &[Vec<f64>], h: &[f64]) -> f64 {
    let nv = cost.len();
    let m = g.len();
    let n_art = h.iter().filter(|&&v| v < 0.0).count();
    let ncols = nv + m + n_art;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = nv + m;
    for i in 0..m {
        let mut row = vec![0.0; ncols + 1];
        let sign = if h[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            row[j] = sign * g[i][j];
        }
        row[nv + i] = sign;
        row[ncols] = sign * h[i];
        if sign < 0.0 {
            row[art] = 1.0;
            basis.push(art);
            art += 1;
        } else {
            basis.push(nv + i);
        }
        rows.push(row);
    }
    let mut t = Tableau { rows, basis, ncols };
    if n_art > 0 {
        let mut phase1 = vec![0.0; ncols];
        for c in phase1.iter_mut().skip(nv + m) {
            *c = 1.0;
        }
        let infeas = t.optimize(&phase1, |_| true);
        assert!(infeas < 1e-8, "LP infeasible ({infeas})");
        for i in 0..m {
            if t.basis[i] >= nv + m {
                if let Some(c) = (0..nv + m).find(|&j| t.rows[i][j].abs() > 1e-9) {
                    t.pivot(i, c);
                }
            }
        }
    }
    let mut full = vec![0.0; ncols];
    full[..nv].copy_from_slice(cost);
    t.optimize(&full, |j| j < nv + m)
}

pub type Mat = Vec<Vec<f64>>;

pub fn identity(n: usize) -> Mat {
    (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect()
}

/// Forward difference, optionally with the circulant wrap entry.
pub fn diff_matrix(n: usize, circulant: bool) -> Mat {
    let mut d = identity(n);
    for i in 1..n {
        d[i][i - 1] = -1.0;
    }
    if circulant && n > 1 {
        d[0][n - 1] -= 1.0;
    }
    d
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for p in 0..k {
            let v = a[i][p];
            if v != 0.0 {
                for j in 0..m {
                    out[i][j] += v * b[p][j];
                }
            }
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn power(a: &Mat, k: usize) -> Mat {
    let mut out = identity(a.len());
    for _ in 0..k {
        out = matmul(&out, a);
    }
    out
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca, rb, cb) = (a.len(), a[0].len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; ca * cb]; ra * rb];
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[i * rb + k][j * cb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}

/// Optimal value of `min ||B z||_1` s.t. `|(C^{-1}(z - q))_i| <= bounds_i`,
/// solved in the variable `x = C^{-1}(z - q)` (so `z = C x + q`).
pub fn tv_lp(b: &Mat, c: &Mat, q: &[f64], bounds: &[f64]) -> f64 {
    let a = matmul(b, c);
    let off = matvec(b, q);
    let (m, n) = (a.len(), a[0].len());
    // Variables: s = x + bounds in [0, 2 bounds], then t >= |A x + off|.
    let nv = n + m;
    let shift = matvec(&a, bounds);
    let mut g = Vec::new();
    let mut h = Vec::new();
    for k in 0..m {
        let mut row = vec![0.0; nv];
        row[..n].copy_from_slice(&a[k]);
        row[n + k] = -1.0;
        g.push(row);
        h.push(shift[k] - off[k]);
        let mut row = vec![0.0; nv];
        for j in 0..n {
            row[j] = -a[k][j];
        }
        row[n + k] = -1.0;
        g.push(row);
        h.push(off[k] - shift[k]);
    }
    for i in 0..n {
        let mut row = vec![0.0; nv];
        row[i] = 1.0;
        g.push(row);
        h.push(2.0 * bounds[i]);
    }
    let mut cost = vec![0.0; nv];
    for v in cost.iter_mut().skip(n) {
        *v = 1.0;
    }
    lp_min(&cost, &g, &h)
}

/// Class 1: `B = (D^beta)^T`, `C = D^r`.
pub fn class1_lp(q: &[f64], beta: usize, r: usize, delta: f64) -> f64 {
    let n = q.len();
    let d = diff_matrix(n, false);
    tv_lp(&transpose(&power(&d, beta)), &power(&d, r), q, &vec![delta / 2.0; n])
}

/// Class 3: `B = D_1^beta`, `C = D^r`, boundary box on the last `r` entries.
pub fn class3_lp(q: &[f64], beta: usize, r: usize, delta: f64, boundary: f64) -> f64 {
    let n = q.len();
    let d = diff_matrix(n, false);
    let d1 = diff_matrix(n, true);
    let mut bounds = vec![delta / 2.0; n];
    for v in &mut bounds[n - r..] {
        *v = boundary;
    }
    tv_lp(&power(&d1, beta), &power(&d, r), q, &bounds)
}

/// Class 2 with `beta = r = 1` on a row-major `rows x cols` image:
/// `B = [D^T (x) I ; I (x) D^T]`, `C = D (x) D`.
pub fn class2_lp(q: &[f64], rows: usize, cols: usize, delta: f64) -> f64 {
    let dr = diff_matrix(rows, false);
    let dc = diff_matrix(cols, false);
    let mut b = kron(&transpose(&dr), &identity(cols));
    b.extend(kron(&identity(rows), &transpose(&dc)));
    tv_lp(&b, &kron(&dr, &dc), q, &vec![delta / 2.0; rows * cols])
}
