//! Sparse matrix storage and a direct LDL^T solver.
//!
//! The assembled operators are kept in CSR form with sorted column indices.
//! Linear systems are solved by a sparse LDL^T factorization (elimination-tree
//! based, up-looking) under a reverse Cuthill-McKee permutation, which keeps
//! fill-in acceptable for the 2D meshes handled here.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Compressed sparse row matrix with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from triplets. Duplicate entries are summed in
    /// insertion order, so the result is bit-reproducible for a fixed
    /// triplet sequence.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> CsrMatrix {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));
        let mut indptr = vec![0usize; n_rows + 1];
        let mut indices = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &t in &order {
            let (r, c, v) = triplets[t];
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n_rows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            indptr,
            indices,
            data,
        }
    }

    pub fn zeros_like(&self) -> CsrMatrix {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    /// Value at (i, j), zero if the entry is not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    /// Position of entry (i, j) in `data`, if present in the pattern.
    pub fn entry_index(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].binary_search(&j).ok().map(|p| a + p)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
        y
    }

    /// x^T A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// self + s * other, merging sparsity patterns.
    pub fn add_scaled(&self, s: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            for (cc, vv) in c.iter().zip(v) {
                triplets.push((i, *cc, *vv));
            }
            let (c, v) = other.row(i);
            for (cc, vv) in c.iter().zip(v) {
                triplets.push((i, *cc, s * *vv));
            }
        }
        CsrMatrix::from_triplets(self.n_rows, self.n_cols, &triplets)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                t.push((i, *c, *v));
            }
        }
        t
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                m[(i, *c)] = *v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// max |A - A^T| over stored entries; 0 for a symmetric matrix.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(*c, i)).abs());
            }
        }
        worst
    }
}

/// Reverse Cuthill-McKee ordering of a symmetric sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(pattern: &CsrMatrix) -> Vec<usize> {
    let n = pattern.n_rows;
    let degree: Vec<usize> = (0..n).map(|i| pattern.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.sort_by_key(|&i| degree[i]);
    for &seed in &nodes {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(pattern, seed, &degree);
        // Cuthill-McKee BFS with neighbors sorted by ascending degree.
        visited[start] = true;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = pattern
                .row(u)
                .0
                .iter()
                .copied()
                .filter(|&v| v != u && !visited[v])
                .collect();
            nbrs.sort_by_key(|&v| (degree[v], v));
            for v in nbrs {
                if !visited[v] {
                    visited[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(pattern: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut start = seed;
    let mut last_ecc = 0usize;
    for _ in 0..8 {
        let (far, ecc) = bfs_farthest(pattern, start, degree);
        if ecc <= last_ecc {
            break;
        }
        last_ecc = ecc;
        start = far;
    }
    start
}

fn bfs_farthest(pattern: &CsrMatrix, start: usize, degree: &[usize]) -> (usize, usize) {
    let n = pattern.n_rows;
    let mut dist = vec![usize::MAX; n];
    dist[start] = 0;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(start);
    let mut far = start;
    while let Some(u) = queue.pop_front() {
        if dist[u] > dist[far] || (dist[u] == dist[far] && degree[u] < degree[far]) {
            far = u;
        }
        for &v in pattern.row(u).0 {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    (far, dist[far])
}

/// Sparse LDL^T factorization of a symmetric matrix under an RCM permutation.
///
/// The symbolic analysis is reusable across matrices with the same pattern
/// (`analyze` once, `factor` per Newton iteration).
pub struct LdlSolver {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    parent: Vec<isize>,
    l_colptr: Vec<usize>,
    // filled during factor():
    l_rows: Vec<usize>,
    l_vals: Vec<f64>,
    d: Vec<f64>,
    // permuted upper-triangular CSC pattern of A, with source indices into A.data
    up_colptr: Vec<usize>,
    up_rows: Vec<usize>,
    up_src: Vec<usize>,
    factored: bool,
}

impl LdlSolver {
    /// Symbolic analysis of the pattern of `a` (values are ignored).
    pub fn analyze(a: &CsrMatrix) -> LdlSolver {
        assert_eq!(a.n_rows, a.n_cols);
        let n = a.n_rows;
        let perm = reverse_cuthill_mckee(a);
        let mut inv_perm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        // Permuted upper-triangular part in CSC, remembering where each value
        // comes from in a.data.
        let mut entries: Vec<(usize, usize, usize)> = Vec::new(); // (col, row, src)
        for i in 0..n {
            let (start, end) = (a.indptr[i], a.indptr[i + 1]);
            for p in start..end {
                let j = a.indices[p];
                let (pi, pj) = (inv_perm[i], inv_perm[j]);
                if pi <= pj {
                    entries.push((pj, pi, p));
                }
            }
        }
        entries.sort_unstable();
        let mut up_colptr = vec![0usize; n + 1];
        let mut up_rows = Vec::with_capacity(entries.len());
        let mut up_src = Vec::with_capacity(entries.len());
        for &(c, r, s) in &entries {
            up_colptr[c + 1] += 1;
            up_rows.push(r);
            up_src.push(s);
        }
        for j in 0..n {
            up_colptr[j + 1] += up_colptr[j];
        }
        // Elimination tree and column counts of L.
        let mut parent = vec![-1isize; n];
        let mut flag = vec![usize::MAX; n];
        let mut l_nz = vec![0usize; n];
        for j in 0..n {
            flag[j] = j;
            for p in up_colptr[j]..up_colptr[j + 1] {
                let mut i = up_rows[p];
                while i < j && flag[i] != j {
                    if parent[i] == -1 {
                        parent[i] = j as isize;
                    }
                    l_nz[i] += 1;
                    flag[i] = j;
                    i = parent[i] as usize;
                }
            }
        }
        let mut l_colptr = vec![0usize; n + 1];
        for j in 0..n {
            l_colptr[j + 1] = l_colptr[j] + l_nz[j];
        }
        let nnz_l = l_colptr[n];
        LdlSolver {
            n,
            perm,
            parent,
            l_colptr,
            l_rows: vec![0; nnz_l],
            l_vals: vec![0.0; nnz_l],
            d: vec![0.0; n],
            up_colptr,
            up_rows,
            up_src,
            factored: false,
        }
    }

    /// Numeric factorization of a matrix with the analyzed pattern.
    pub fn factor(&mut self, a: &CsrMatrix) -> Result<()> {
        let n = self.n;
        assert_eq!(a.n_rows, n);
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0usize; n];
        let mut flag = vec![usize::MAX; n];
        let mut l_next: Vec<usize> = self.l_colptr[..n].to_vec();
        for j in 0..n {
            let mut top = n;
            flag[j] = j;
            let mut dj = 0.0;
            for p in self.up_colptr[j]..self.up_colptr[j + 1] {
                let i = self.up_rows[p];
                let v = a.data[self.up_src[p]];
                if i == j {
                    dj = v;
                    continue;
                }
                y[i] += v;
                let mut len = 0usize;
                let mut k = i;
                while flag[k] != j {
                    pattern[len] = k;
                    len += 1;
                    flag[k] = j;
                    k = self.parent[k] as usize;
                }
                // push the path in reverse so processing order is topological
                for t in (0..len).rev() {
                    top -= 1;
                    pattern[top] = pattern[t];
                }
            }
            for t in top..n {
                let i = pattern[t];
                let yi = y[i];
                y[i] = 0.0;
                for p in self.l_colptr[i]..l_next[i] {
                    y[self.l_rows[p]] -= self.l_vals[p] * yi;
                }
                let lji = yi / self.d[i];
                dj -= lji * yi;
                self.l_rows[l_next[i]] = j;
                self.l_vals[l_next[i]] = lji;
                l_next[i] += 1;
            }
            if dj == 0.0 || !dj.is_finite() {
                return Err(Error::SingularTangent { col: j, pivot: dj });
            }
            self.d[j] = dj;
        }
        self.factored = true;
        Ok(())
    }

    /// Solves A x = b with the current factorization.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert!(self.factored);
        let n = self.n;
        let mut x: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for j in 0..n {
            let xj = x[j];
            for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                x[self.l_rows[p]] -= self.l_vals[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut acc = x[j];
            for p in self.l_colptr[j]..self.l_colptr[j + 1] {
                acc -= self.l_vals[p] * x[self.l_rows[p]];
            }
            x[j] = acc;
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            out[self.perm[i]] = x[i];
        }
        out
    }

    /// Solve with one step of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
        let mut x = self.solve(b);
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let dx = self.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        x
    }
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Norm induced by a (symmetric positive definite) Gram matrix.
pub fn gram_norm(w: &CsrMatrix, v: &[f64]) -> f64 {
    w.bilinear(v, v).max(0.0).sqrt()
}
