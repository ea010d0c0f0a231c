//! Sparse LDLᵀ factorization of quasi-definite matrices.
//!
//! The matrix is given as the upper triangle in compressed sparse column
//! form. Ordering uses approximate minimum degree; the numeric phase is an
//! up-looking factorization driven by the elimination tree, so no pivoting is
//! performed and the sign of every pivot is known in advance.

const NONE: usize = usize::MAX;

/// Upper-triangular CSC matrix.
#[derive(Debug, Clone, Default)]
pub struct UpperCsc {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
}

/// Symbolic and numeric factorization state for one sparsity pattern.
#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// Permuted pattern; `value_map[k]` is the slot of original entry `k`.
    ap: Vec<usize>,
    ai: Vec<usize>,
    value_map: Vec<usize>,
    ax: Vec<f64>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    /// Expected pivot sign per permuted index.
    signs: Vec<f64>,
    work: Vec<f64>,
}

impl Ldl {
    /// Symbolic analysis. `signs[i]` is +1 or −1, the sign of the `i`th pivot
    /// of the (quasi-definite) matrix in original ordering.
    pub fn new(pattern: &UpperCsc, signs: &[f64]) -> Self {
        let n = pattern.n;
        let perm = amd_order(pattern);
        let mut pinv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }

        // Permute the upper triangle: entry (i, j) lands at (min, max) of (pinv i, pinv j).
        let nnz = pattern.rowind.len();
        let mut counts = vec![0usize; n + 1];
        let mut targets = Vec::with_capacity(nnz);
        for j in 0..n {
            for k in pattern.colptr[j]..pattern.colptr[j + 1] {
                let i = pattern.rowind[k];
                let (pi, pj) = (pinv[i], pinv[j]);
                let (r, c) = if pi <= pj { (pi, pj) } else { (pj, pi) };
                counts[c + 1] += 1;
                targets.push((r, c));
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let ap = counts.clone();
        let mut next = counts;
        let mut ai = vec![0; nnz];
        let mut value_map = vec![0; nnz];
        for (k, &(r, c)) in targets.iter().enumerate() {
            let slot = next[c];
            next[c] += 1;
            ai[slot] = r;
            value_map[k] = slot;
        }

        let (etree, lnz) = elimination_tree(n, &ap, &ai);
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        let signs = perm.iter().map(|&old| signs[old]).collect();
        Ldl {
            n,
            perm,
            ap,
            ai,
            value_map,
            ax: vec![0.0; nnz],
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            signs,
            work: vec![0.0; n],
        }
    }

    /// Numeric factorization of the matrix whose upper-triangle values are
    /// `values`, in the order of the pattern passed to [`Ldl::new`].
    ///
    /// Pivots with the wrong sign or tiny magnitude are replaced by
    /// `sign · pivot_floor`; the number of such replacements is returned.
    pub fn factor(&mut self, values: &[f64], pivot_floor: f64) -> usize {
        for (k, &v) in values.iter().enumerate() {
            self.ax[self.value_map[k]] = v;
        }
        let n = self.n;
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        let mut bumped = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.ap[k]..self.ap[k + 1] {
                let b = self.ai[p];
                if b == k {
                    self.d[k] += self.ax[p];
                    continue;
                }
                y_vals[b] += self.ax[p];
                if y_used[b] {
                    continue;
                }
                y_used[b] = true;
                elim[0] = b;
                let mut n_elim = 1;
                let mut next = self.etree[b];
                while next != NONE && next < k {
                    if y_used[next] {
                        break;
                    }
                    y_used[next] = true;
                    elim[n_elim] = next;
                    n_elim += 1;
                    next = self.etree[next];
                }
                while n_elim > 0 {
                    n_elim -= 1;
                    y_idx[nnz_y] = elim[n_elim];
                    nnz_y += 1;
                }
            }
            for idx in (0..nnz_y).rev() {
                let c = y_idx[idx];
                let slot = next_space[c];
                let yc = y_vals[c];
                for j in self.lp[c]..slot {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[slot] = k;
                let l = yc * self.dinv[c];
                self.lx[slot] = l;
                self.d[k] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            let s = self.signs[k];
            if !(self.d[k] * s > pivot_floor) {
                self.d[k] = s * pivot_floor;
                bumped += 1;
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        bumped
    }

    /// Solve `K x = b` in place using the current factorization.
    pub fn solve(&mut self, b: &mut [f64]) {
        let n = self.n;
        let x = &mut self.work;
        for (new, &old) in self.perm.iter().enumerate() {
            x[new] = b[old];
        }
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for j in self.lp[i]..self.lp[i + 1] {
                    x[self.li[j]] -= self.lx[j] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] *= self.dinv[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }
}

fn elimination_tree(n: usize, ap: &[usize], ai: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut work = vec![NONE; n];
    let mut lnz = vec![0; n];
    let mut etree = vec![NONE; n];
    for j in 0..n {
        work[j] = j;
        for &start in &ai[ap[j]..ap[j + 1]] {
            let mut i = start;
            debug_assert!(i <= j, "pattern must be upper triangular");
            while work[i] != j {
                if etree[i] == NONE {
                    etree[i] = j;
                }
                lnz[i] += 1;
                work[i] = j;
                i = etree[i];
            }
        }
    }
    (etree, lnz)
}

fn amd_order(pattern: &UpperCsc) -> Vec<usize> {
    let n = pattern.n;
    if n == 0 {
        return Vec::new();
    }
    // AMD wants sorted, duplicate-free columns.
    let mut ap = Vec::with_capacity(n + 1);
    let mut ai = Vec::with_capacity(pattern.rowind.len());
    ap.push(0);
    for j in 0..n {
        let mut col: Vec<usize> = pattern.rowind[pattern.colptr[j]..pattern.colptr[j + 1]].to_vec();
        col.sort_unstable();
        col.dedup();
        ai.extend(col);
        ap.push(ai.len());
    }
    match amd::order(n, &ap, &ai, &amd::Control::default()) {
        Ok((p, _, _)) => p,
        Err(status) => {
            log::warn!("AMD ordering failed ({status:?}); using natural order");
            (0..n).collect()
        }
    }
}
