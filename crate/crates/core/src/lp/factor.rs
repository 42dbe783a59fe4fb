//! Basis factorization for the revised simplex.
//!
//! The basis is permuted to block lower-triangular form: a leading triangle
//! found by peeling row singletons, a trailing triangle found by peeling column
//! singletons, and a (usually small) kernel in between that gets a dense LU
//! with partial pivoting. Basis changes are applied as product-form eta
//! updates until the next refactorization.

/// Sparse column: `(row, value)` pairs.
pub(crate) type SparseCol = Vec<(usize, f64)>;

const SINGULAR_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Singular {
    /// Basis positions whose columns could not be pivoted.
    pub positions: Vec<usize>,
    /// Rows left without a pivot, same length as `positions`.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Pivot {
    row: usize,
    pos: usize,
    value: f64,
}

#[derive(Debug, Clone, Default)]
struct Kernel {
    rows: Vec<usize>,
    positions: Vec<usize>,
    /// Row-major LU of the permuted kernel, unit lower part implicit.
    lu: Vec<f64>,
    /// `perm[i]` is the kernel row (index into `rows`) used as pivot row `i`.
    perm: Vec<usize>,
}

impl Kernel {
    fn size(&self) -> usize {
        self.rows.len()
    }

    /// Solve `K x = rhs` where `rhs` is indexed by kernel row order and the
    /// result by kernel position order.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.size();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..k {
            let row = &self.lu[i * k..(i + 1) * k];
            let mut s = y[i];
            for (j, &l) in row.iter().enumerate().take(i) {
                s -= l * y[j];
            }
            y[i] = s;
        }
        for i in (0..k).rev() {
            let row = &self.lu[i * k..(i + 1) * k];
            let mut s = y[i];
            for j in i + 1..k {
                s -= row[j] * y[j];
            }
            y[i] = s / row[i];
        }
        y
    }

    /// Solve `K^T y = rhs` where `rhs` is indexed by kernel position order and
    /// the result by kernel row order.
    fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.size();
        // P K = L U  =>  K^T = U^T L^T P
        let mut z = rhs.to_vec();
        for i in 0..k {
            let mut s = z[i];
            for j in 0..i {
                s -= self.lu[j * k + i] * z[j];
            }
            z[i] = s / self.lu[i * k + i];
        }
        for i in (0..k).rev() {
            let mut s = z[i];
            for j in i + 1..k {
                s -= self.lu[j * k + i] * z[j];
            }
            z[i] = s;
        }
        let mut out = vec![0.0; k];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = z[i];
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    others: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct BasisFactor {
    m: usize,
    columns: Vec<SparseCol>,
    head: Vec<Pivot>,
    kernel: Kernel,
    tail: Vec<Pivot>,
    etas: Vec<Eta>,
}

impl BasisFactor {
    /// Factor the basis whose `k`-th column is `columns[k]`.
    pub fn new(m: usize, columns: Vec<SparseCol>) -> Result<Self, Singular> {
        assert_eq!(columns.len(), m, "basis must be square");
        let mut row_cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (k, col) in columns.iter().enumerate() {
            for &(i, _) in col {
                row_cols[i].push(k);
            }
        }
        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];
        let mut row_count: Vec<usize> = row_cols.iter().map(Vec::len).collect();

        // Leading triangle: rows with a single active entry.
        let mut head = Vec::new();
        let mut stack: Vec<usize> = (0..m).filter(|&i| row_count[i] == 1).collect();
        stack.reverse();
        while let Some(i) = stack.pop() {
            if !row_active[i] || row_count[i] != 1 {
                continue;
            }
            let Some(&k) = row_cols[i].iter().find(|&&k| col_active[k]) else {
                continue;
            };
            let value = entry(&columns[k], i);
            if value.abs() < SINGULAR_TOL {
                continue;
            }
            row_active[i] = false;
            col_active[k] = false;
            head.push(Pivot {
                row: i,
                pos: k,
                value,
            });
            for &(r, _) in &columns[k] {
                if row_active[r] {
                    row_count[r] -= 1;
                    if row_count[r] == 1 {
                        stack.push(r);
                    }
                }
            }
        }

        // Trailing triangle: columns with a single active entry.
        let mut col_count: Vec<usize> = columns
            .iter()
            .map(|col| col.iter().filter(|&&(i, _)| row_active[i]).count())
            .collect();
        let mut tail = Vec::new();
        let mut stack: Vec<usize> = (0..m)
            .filter(|&k| col_active[k] && col_count[k] == 1)
            .collect();
        stack.reverse();
        while let Some(k) = stack.pop() {
            if !col_active[k] || col_count[k] != 1 {
                continue;
            }
            let Some(&(i, value)) = columns[k].iter().find(|&&(i, _)| row_active[i]) else {
                continue;
            };
            if value.abs() < SINGULAR_TOL {
                continue;
            }
            row_active[i] = false;
            col_active[k] = false;
            tail.push(Pivot {
                row: i,
                pos: k,
                value,
            });
            for &c in &row_cols[i] {
                if col_active[c] {
                    col_count[c] -= 1;
                    if col_count[c] == 1 {
                        stack.push(c);
                    }
                }
            }
        }
        tail.reverse();

        let kernel_rows: Vec<usize> = (0..m).filter(|&i| row_active[i]).collect();
        let kernel_pos: Vec<usize> = (0..m).filter(|&k| col_active[k]).collect();
        debug_assert_eq!(kernel_rows.len(), kernel_pos.len());
        let kernel = factor_kernel(&columns, kernel_rows, kernel_pos)?;

        Ok(Self {
            m,
            columns,
            head,
            kernel,
            tail,
            etas: Vec::new(),
        })
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// Solve `B x = rhs`. Input indexed by row, output by basis position.
    pub fn ftran(&self, rhs: &[f64]) -> Vec<f64> {
        let mut v = rhs.to_vec();
        let mut x = vec![0.0; self.m];
        for p in &self.head {
            let xv = v[p.row] / p.value;
            x[p.pos] = xv;
            if xv != 0.0 {
                for &(i, a) in &self.columns[p.pos] {
                    v[i] -= a * xv;
                }
            }
        }
        if self.kernel.size() > 0 {
            let krhs: Vec<f64> = self.kernel.rows.iter().map(|&i| v[i]).collect();
            let kx = self.kernel.solve(&krhs);
            for (&pos, &xv) in self.kernel.positions.iter().zip(&kx) {
                x[pos] = xv;
                if xv != 0.0 {
                    for &(i, a) in &self.columns[pos] {
                        v[i] -= a * xv;
                    }
                }
            }
        }
        for p in &self.tail {
            let xv = v[p.row] / p.value;
            x[p.pos] = xv;
            if xv != 0.0 {
                for &(i, a) in &self.columns[p.pos] {
                    v[i] -= a * xv;
                }
            }
        }
        for eta in &self.etas {
            let xr = x[eta.pos] / eta.pivot;
            x[eta.pos] = xr;
            if xr != 0.0 {
                for &(i, a) in &eta.others {
                    x[i] -= a * xr;
                }
            }
        }
        x
    }

    /// Solve `B^T y = rhs`. Input indexed by basis position, output by row.
    pub fn btran(&self, rhs: &[f64]) -> Vec<f64> {
        let mut c = rhs.to_vec();
        for eta in self.etas.iter().rev() {
            let mut s = c[eta.pos];
            for &(i, a) in &eta.others {
                s -= a * c[i];
            }
            c[eta.pos] = s / eta.pivot;
        }
        let mut y = vec![0.0; self.m];
        let mut solved = vec![false; self.m];
        let dot_known = |col: &SparseCol, y: &[f64], solved: &[bool]| -> f64 {
            col.iter()
                .filter(|&&(i, _)| solved[i])
                .map(|&(i, a)| a * y[i])
                .sum()
        };
        // Reverse of the forward order: tail (last first), kernel, head.
        for p in self.tail.iter().rev() {
            let s = c[p.pos] - dot_known(&self.columns[p.pos], &y, &solved);
            y[p.row] = s / p.value;
            solved[p.row] = true;
        }
        if self.kernel.size() > 0 {
            let krhs: Vec<f64> = self
                .kernel
                .positions
                .iter()
                .map(|&pos| c[pos] - dot_known(&self.columns[pos], &y, &solved))
                .collect();
            let ky = self.kernel.solve_transpose(&krhs);
            for (&row, &yv) in self.kernel.rows.iter().zip(&ky) {
                y[row] = yv;
                solved[row] = true;
            }
        }
        for p in self.head.iter().rev() {
            let s = c[p.pos] - dot_known(&self.columns[p.pos], &y, &solved);
            y[p.row] = s / p.value;
            solved[p.row] = true;
        }
        y
    }

    /// Replace the column at basis position `pos`; `alpha` is the FTRAN of
    /// the entering column against the current basis.
    pub fn update(&mut self, pos: usize, alpha: &[f64]) {
        let others = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: alpha[pos],
            others,
        });
    }
}

fn entry(col: &SparseCol, row: usize) -> f64 {
    col.iter()
        .filter(|&&(i, _)| i == row)
        .map(|&(_, v)| v)
        .sum()
}

fn factor_kernel(
    columns: &[SparseCol],
    rows: Vec<usize>,
    positions: Vec<usize>,
) -> Result<Kernel, Singular> {
    let k = rows.len();
    if k == 0 {
        return Ok(Kernel::default());
    }
    let mut row_index = vec![usize::MAX; columns.len()];
    for (r, &i) in rows.iter().enumerate() {
        row_index[i] = r;
    }
    let mut a = vec![0.0; k * k];
    for (c, &pos) in positions.iter().enumerate() {
        for &(i, v) in &columns[pos] {
            let r = row_index[i];
            if r != usize::MAX {
                a[r * k + c] += v;
            }
        }
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut perm: Vec<usize> = (0..k).collect();
    let mut bad_cols = Vec::new();
    // `next` is the next unused pivot row; it equals `col` unless a column
    // has already been found dependent.
    let mut next = 0;
    for col in 0..k {
        let (piv, max) =
            (next..k)
                .map(|r| (r, a[r * k + col].abs()))
                .fold(
                    (next, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if max < SINGULAR_TOL * scale {
            bad_cols.push(col);
            continue;
        }
        if piv != next {
            for j in 0..k {
                a.swap(next * k + j, piv * k + j);
            }
            perm.swap(next, piv);
        }
        let d = a[next * k + col];
        for r in next + 1..k {
            let f = a[r * k + col] / d;
            a[r * k + col] = f;
            if f != 0.0 {
                for j in col + 1..k {
                    a[r * k + j] -= f * a[next * k + j];
                }
            }
        }
        next += 1;
    }
    if !bad_cols.is_empty() {
        return Err(Singular {
            positions: bad_cols.iter().map(|&c| positions[c]).collect(),
            rows: perm[next..].iter().map(|&r| rows[r]).collect(),
        });
    }
    Ok(Kernel {
        rows,
        positions,
        lu: a,
        perm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_cols(a: &[Vec<f64>]) -> Vec<SparseCol> {
        let m = a.len();
        (0..m)
            .map(|k| {
                (0..m)
                    .filter(|&i| a[i][k] != 0.0)
                    .map(|i| (i, a[i][k]))
                    .collect()
            })
            .collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }

    fn transpose_matvec(a: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let m = a.len();
        (0..m)
            .map(|k| (0..m).map(|i| a[i][k] * y[i]).sum())
            .collect()
    }

    fn check(a: Vec<Vec<f64>>) {
        let m = a.len();
        let f = BasisFactor::new(m, dense_to_cols(&a)).unwrap();
        let rhs: Vec<f64> = (0..m).map(|i| 1.0 + i as f64 * 0.5).collect();
        let x = f.ftran(&rhs);
        for (p, q) in matvec(&a, &x).iter().zip(&rhs) {
            assert!((p - q).abs() < 1e-10, "ftran residual");
        }
        let y = f.btran(&rhs);
        for (p, q) in transpose_matvec(&a, &y).iter().zip(&rhs) {
            assert!((p - q).abs() < 1e-10, "btran residual");
        }
    }

    #[test]
    fn triangular_and_kernel_bases() {
        check(vec![
            vec![2.0, 0.0, 0.0],
            vec![1.0, 3.0, 0.0],
            vec![0.0, 1.0, 4.0],
        ]);
        check(vec![
            vec![1.0, 2.0, 0.0, 0.0],
            vec![3.0, 4.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0, 5.0],
        ]);
        check(vec![
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ]);
    }

    #[test]
    fn eta_updates_track_column_replacement() {
        let mut a = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let mut f = BasisFactor::new(3, dense_to_cols(&a)).unwrap();
        let entering = [2.0, 1.0, -1.0];
        let alpha = f.ftran(&entering);
        f.update(1, &alpha);
        for (i, row) in a.iter_mut().enumerate() {
            row[1] = entering[i];
        }
        let rhs = [1.0, 2.0, 3.0];
        let x = f.ftran(&rhs);
        for (p, q) in matvec(&a, &x).iter().zip(&rhs) {
            assert!((p - q).abs() < 1e-12);
        }
        let y = f.btran(&rhs);
        for (p, q) in transpose_matvec(&a, &y).iter().zip(&rhs) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_basis_is_reported() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        let err = BasisFactor::new(2, dense_to_cols(&a)).unwrap_err();
        assert_eq!(err.positions.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }
}
