//! Reference computations used to check the solver. Nothing here shares code
//! with `mlr-core`: inputs are plain slices and every routine is a direct,
//! unoptimized transcription of its definition.

/// Dense Gaussian elimination with partial pivoting. `a` is row-major
/// `n × n`.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty system");
        a.swap(col, piv);
        b.swap(col, piv);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot = &top[col];
        for (r, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pivot[col];
            if f != 0.0 {
                for (x, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                    *x -= f * p;
                }
                b[col + 1 + r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Minimizer of `sum_ij w_ij ||z_i - z_j||^2` subject to `a_i^T z_i = b_i`,
/// from the stationarity system `[L (x) I, A^T; A, 0] [z; lambda] = [0; b]`
/// with `L` the weighted graph Laplacian. `w` is row-major `m × m`.
/// Returns `z` flattened row by row.
pub fn constrained_ls_oracle(a: &[Vec<f64>], b: &[f64], w: &[f64]) -> Vec<f64> {
    let m = a.len();
    let d = a[0].len();
    let n = m * d + m;
    let mut k = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    for i in 0..m {
        let deg: f64 = (0..m).filter(|&j| j != i).map(|j| w[i * m + j]).sum();
        for j in 0..m {
            let l = if i == j { deg } else { -w[i * m + j] };
            for t in 0..d {
                k[i * d + t][j * d + t] = l;
            }
        }
        for t in 0..d {
            k[i * d + t][m * d + i] = a[i][t];
            k[m * d + i][i * d + t] = a[i][t];
        }
        rhs[m * d + i] = b[i];
    }
    let mut x = gauss_solve(k, rhs);
    x.truncate(m * d);
    x
}

/// Points `z_i = z0_i + t_i u_i` on lines in the plane.
#[derive(Debug, Clone)]
pub struct PlanarLines {
    /// Foot of the perpendicular from the origin, `b a / ||a||^2`.
    pub base: Vec<[f64; 2]>,
    /// Unit direction of each line.
    pub dir: Vec<[f64; 2]>,
}

impl PlanarLines {
    /// Lines `a_i^T z = b_i`; every `a_i` must be nonzero.
    pub fn new(a: &[[f64; 2]], b: &[f64]) -> Self {
        let mut base = Vec::with_capacity(a.len());
        let mut dir = Vec::with_capacity(a.len());
        for (ai, &bi) in a.iter().zip(b) {
            let nn = ai[0] * ai[0] + ai[1] * ai[1];
            let n = nn.sqrt();
            base.push([bi * ai[0] / nn, bi * ai[1] / nn]);
            dir.push([-ai[1] / n, ai[0] / n]);
        }
        Self { base, dir }
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// `sum_{i != j} ||z_i - z_j||` at the given line coordinates.
    pub fn objective(&self, t: &[f64]) -> f64 {
        let m = self.len();
        let pts: Vec<[f64; 2]> = (0..m)
            .map(|i| {
                [
                    self.base[i][0] + t[i] * self.dir[i][0],
                    self.base[i][1] + t[i] * self.dir[i][1],
                ]
            })
            .collect();
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    s += ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
                }
            }
        }
        s
    }

    /// Largest `|t_i|` at which line `i` meets another line.
    pub fn intersection_reach(&self) -> f64 {
        let m = self.len();
        let mut reach: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                let det = self.dir[i][0] * self.dir[j][1] - self.dir[i][1] * self.dir[j][0];
                if i != j && det.abs() > 1e-12 {
                    let rx = self.base[j][0] - self.base[i][0];
                    let ry = self.base[j][1] - self.base[i][1];
                    reach = reach.max(((rx * self.dir[j][1] - ry * self.dir[j][0]) / det).abs());
                }
            }
        }
        reach
    }
}

/// Exhaustive search over a product grid of line coordinates, repeated on
/// windows centred at the incumbent: a window shrinks to two grid steps
/// when the incumbent is interior and is only re-centred when it sits on
/// the boundary. Returns the smallest objective seen.
///
/// Up to three lines get 201 points per axis; beyond that `budget` caps the
/// points per grid at `budget^(1/m)` per axis. Counts are made odd so the
/// incumbent stays on the grid.
pub fn grid_search(lines: &PlanarLines, half_width: f64, budget: f64) -> f64 {
    let m = lines.len();
    let mut n = if m <= 3 {
        201
    } else {
        (budget.powf(1.0 / m as f64) as usize).clamp(3, 201)
    };
    if n % 2 == 0 {
        n -= 1;
    }
    let mut center = vec![0.0; m];
    let mut h = half_width;
    let mut best = lines.objective(&center);
    let mut idx = vec![0usize; m];
    let mut t = vec![0.0; m];
    for _ in 0..400 {
        let step = 2.0 * h / (n - 1) as f64;
        let mut best_t = center.clone();
        idx.iter_mut().for_each(|x| *x = 0);
        'grid: loop {
            for c in 0..m {
                t[c] = center[c] - h + step * idx[c] as f64;
            }
            let v = lines.objective(&t);
            if v < best {
                best = v;
                best_t.copy_from_slice(&t);
            }
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < n {
                    continue 'grid;
                }
                *slot = 0;
            }
            break;
        }
        let on_edge = best_t
            .iter()
            .zip(&center)
            .any(|(b, c)| (b - c).abs() > h - 0.5 * step);
        center = best_t;
        if !on_edge {
            h = 2.0 * step;
        }
        if h < 1e-11 {
            break;
        }
    }
    best
}
