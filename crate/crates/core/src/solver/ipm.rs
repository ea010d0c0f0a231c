//! Primal-dual interior point method (Mehrotra predictor-corrector) for
//! convex QPs with a diagonal Hessian:
//!
//! ```text
//! minimize   ½ yᵀ diag(p) y + qᵀ y
//! subject to A y = b,  G y ≤ h,  lb ≤ y ≤ ub
//! ```
//!
//! Bound constraints are eliminated into the diagonal of the Newton system;
//! general rows stay in the quasi-definite augmented system, which is
//! factored with [`Ldl`].

use super::ldl::{Ldl, UpperCsc};

/// Sparse row: `(column, coefficient)` pairs with distinct columns.
pub(crate) type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, Default)]
pub(crate) struct Qp {
    pub n: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub g: Vec<SparseRow>,
    pub h: Vec<f64>,
    pub a: Vec<SparseRow>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmSettings {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IpmStatus {
    Solved,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmResult {
    pub y: Vec<f64>,
    pub status: IpmStatus,
    pub iterations: usize,
    /// Largest primal residual at exit.
    pub primal_residual: f64,
}

const STATIC_REG: f64 = 1e-9;
const PIVOT_FLOOR: f64 = 1e-13;
const REFINE_STEPS: usize = 2;
const REFINE_TOL: f64 = 1e-12;
/// Accuracy accepted when the iteration can make no further progress.
const STALL_TOL: f64 = 1e-6;

/// One bound `g·y_j ≤ g·bound` with `g = −1` (lower) or `+1` (upper).
#[derive(Debug, Clone, Copy)]
struct Bound {
    j: usize,
    g: f64,
    value: f64,
}

struct Kkt {
    n: usize,
    neq: usize,
    nin: usize,
    ldl: Ldl,
    values: Vec<f64>,
    /// Index into `values` of each diagonal entry.
    diag: Vec<usize>,
    /// Primal Hessian diagonal without regularization (for refinement).
    h_diag: Vec<f64>,
    w: Vec<f64>,
}

impl Kkt {
    fn new(n: usize, a: &[SparseRow], g: &[SparseRow]) -> Kkt {
        let neq = a.len();
        let nin = g.len();
        let dim = n + neq + nin;
        let mut colptr = Vec::with_capacity(dim + 1);
        let mut rowind = Vec::new();
        let mut values = Vec::new();
        let mut diag = Vec::with_capacity(dim);
        colptr.push(0);
        for j in 0..n {
            diag.push(rowind.len());
            rowind.push(j);
            values.push(0.0);
            colptr.push(rowind.len());
        }
        for (offset, rows) in [(n, a), (n + neq, g)] {
            for (r, row) in rows.iter().enumerate() {
                for &(j, v) in row {
                    rowind.push(j);
                    values.push(v);
                }
                diag.push(rowind.len());
                rowind.push(offset + r);
                values.push(0.0);
                colptr.push(rowind.len());
            }
        }
        let signs: Vec<f64> = (0..dim).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let pattern = UpperCsc {
            n: dim,
            colptr,
            rowind,
        };
        Kkt {
            n,
            neq,
            nin,
            ldl: Ldl::new(&pattern, &signs),
            values,
            diag,
            h_diag: vec![0.0; n],
            w: vec![0.0; nin],
        }
    }

    fn factor(&mut self, h_diag: &[f64], w: &[f64]) {
        self.h_diag.copy_from_slice(h_diag);
        self.w.copy_from_slice(w);
        for j in 0..self.n {
            self.values[self.diag[j]] = h_diag[j] + STATIC_REG;
        }
        for r in 0..self.neq {
            self.values[self.diag[self.n + r]] = -STATIC_REG;
        }
        for r in 0..self.nin {
            self.values[self.diag[self.n + self.neq + r]] = -(w[r] + STATIC_REG);
        }
        self.ldl.factor(&self.values, PIVOT_FLOOR);
    }

    /// Unregularized `K x`.
    fn apply(&self, a: &[SparseRow], g: &[SparseRow], x: &[f64], out: &mut [f64]) {
        let (n, neq) = (self.n, self.neq);
        for j in 0..n {
            out[j] = self.h_diag[j] * x[j];
        }
        for (r, row) in a.iter().enumerate() {
            let xr = x[n + r];
            let mut acc = 0.0;
            for &(j, v) in row {
                out[j] += v * xr;
                acc += v * x[j];
            }
            out[n + r] = acc;
        }
        for (r, row) in g.iter().enumerate() {
            let xr = x[n + neq + r];
            let mut acc = -self.w[r] * xr;
            for &(j, v) in row {
                out[j] += v * xr;
                acc += v * x[j];
            }
            out[n + neq + r] = acc;
        }
    }

    fn solve(&mut self, a: &[SparseRow], g: &[SparseRow], rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.ldl.solve(&mut x);
        let mut kx = vec![0.0; rhs.len()];
        let target = REFINE_TOL * (1.0 + inf_norm(rhs));
        for _ in 0..REFINE_STEPS {
            self.apply(a, g, &x, &mut kx);
            let mut res: Vec<f64> = rhs.iter().zip(&kx).map(|(r, k)| r - k).collect();
            if inf_norm(&res) <= target {
                break;
            }
            self.ldl.solve(&mut res);
            for (xi, d) in x.iter_mut().zip(&res) {
                *xi += d;
            }
        }
        x
    }
}

fn row_dot(row: &SparseRow, y: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * y[j]).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Largest step in `(0, 1]` keeping `v + α dv ≥ 0`.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(1.0, f64::min)
}

pub(crate) fn solve_qp(qp: &Qp, settings: IpmSettings) -> IpmResult {
    let n = qp.n;
    let mut a = qp.a.clone();
    let mut b = qp.b.clone();
    let mut bounds = Vec::new();
    for j in 0..n {
        let (l, u) = (qp.lb[j], qp.ub[j]);
        if l > u {
            return IpmResult {
                y: vec![0.0; n],
                status: IpmStatus::Infeasible,
                iterations: 0,
                primal_residual: l - u,
            };
        }
        if l == u {
            a.push(vec![(j, 1.0)]);
            b.push(l);
            continue;
        }
        if l.is_finite() {
            bounds.push(Bound {
                j,
                g: -1.0,
                value: l,
            });
        }
        if u.is_finite() {
            bounds.push(Bound {
                j,
                g: 1.0,
                value: u,
            });
        }
    }
    let g = &qp.g;
    let h = &qp.h;
    let (neq, nin, nb) = (a.len(), g.len(), bounds.len());
    let m_total = nin + nb;

    let scale = {
        let s = inf_norm(&qp.q).max(inf_norm(&qp.p));
        if s > 0.0 {
            1.0 / s
        } else {
            1.0
        }
    };
    let p: Vec<f64> = qp.p.iter().map(|v| v * scale).collect();
    let q: Vec<f64> = qp.q.iter().map(|v| v * scale).collect();
    let rhs_norm = 1.0
        + inf_norm(&b)
            .max(inf_norm(h))
            .max(bounds.iter().fold(0.0, |m, bd| m.max(bd.value.abs())));

    // Start at the box midpoint (or one unit inside a single bound).
    let mut y: Vec<f64> = (0..n)
        .map(|j| {
            let (l, u) = (qp.lb[j], qp.ub[j]);
            match (l.is_finite(), u.is_finite()) {
                (true, true) => 0.5 * (l + u),
                (true, false) => l + 1.0,
                (false, true) => u - 1.0,
                (false, false) => 0.0,
            }
        })
        .collect();
    let mut s_in: Vec<f64> = g
        .iter()
        .zip(h)
        .map(|(row, &hr)| (hr - row_dot(row, &y)).max(1.0))
        .collect();
    let mut l_in = vec![1.0; nin];
    let mut s_b: Vec<f64> = bounds
        .iter()
        .map(|bd| bd.g * (bd.value - y[bd.j]))
        .collect();
    let mut l_b = vec![1.0; nb];
    let mut nu = vec![0.0; neq];

    let mut kkt = Kkt::new(n, &a, g);
    let dim = n + neq + nin;

    let mut status = IpmStatus::MaxIter;
    let mut iterations = 0;
    let mut primal_residual = f64::INFINITY;
    let mut stalls = 0;
    let mut best_pres = f64::INFINITY;
    let mut since_progress = 0;
    let mut near_best: Option<(Vec<f64>, f64)> = None;
    let mut near_gap = f64::INFINITY;
    let mut near_stalls = 0;

    let mut r_d = vec![0.0; n];
    let mut r_eq = vec![0.0; neq];
    let mut r_in = vec![0.0; nin];
    let mut r_b = vec![0.0; nb];

    while iterations < settings.max_iter {
        // residuals
        for j in 0..n {
            r_d[j] = p[j] * y[j] + q[j];
        }
        for (r, row) in a.iter().enumerate() {
            r_eq[r] = row_dot(row, &y) - b[r];
            for &(j, v) in row {
                r_d[j] += v * nu[r];
            }
        }
        for (r, row) in g.iter().enumerate() {
            r_in[r] = row_dot(row, &y) + s_in[r] - h[r];
            for &(j, v) in row {
                r_d[j] += v * l_in[r];
            }
        }
        for (k, bd) in bounds.iter().enumerate() {
            r_b[k] = bd.g * y[bd.j] + s_b[k] - bd.g * bd.value;
            r_d[bd.j] += bd.g * l_b[k];
        }
        let gap: f64 = s_in.iter().zip(&l_in).map(|(s, l)| s * l).sum::<f64>()
            + s_b.iter().zip(&l_b).map(|(s, l)| s * l).sum::<f64>();
        let mu = if m_total > 0 {
            gap / m_total as f64
        } else {
            0.0
        };
        let pres = inf_norm(&r_eq).max(inf_norm(&r_in)).max(inf_norm(&r_b));
        let dres = inf_norm(&r_d);
        primal_residual = pres;
        let pobj: f64 = (0..n).map(|j| 0.5 * p[j] * y[j] * y[j] + q[j] * y[j]).sum();
        let near_solved = pres <= STALL_TOL * rhs_norm
            && dres <= STALL_TOL * (1.0 + inf_norm(&q))
            && gap <= STALL_TOL * (1.0 + pobj.abs());
        if pres <= settings.tol * rhs_norm
            && dres <= settings.tol * (1.0 + inf_norm(&q))
            && gap <= settings.tol * (1.0 + pobj.abs())
        {
            status = IpmStatus::Solved;
            break;
        }
        if near_solved {
            // Past this point further steps gain little and can lose accuracy
            // to round-off, so keep the iterate and stop once the gap stalls.
            if gap > 0.5 * near_gap {
                near_stalls += 1;
            } else {
                near_stalls = 0;
            }
            near_gap = near_gap.min(gap);
            near_best = Some((y.clone(), pres));
            if near_stalls >= 2 {
                break;
            }
        }
        if !(pres.is_finite() && dres.is_finite() && gap.is_finite())
            || l_in.iter().chain(&l_b).any(|&l| l > 1e13)
        {
            status = IpmStatus::Infeasible;
            break;
        }
        // A primal residual that stops shrinking while the other measures
        // converge means the constraints cannot all hold.
        if pres <= settings.tol * rhs_norm || pres < 0.9 * best_pres {
            best_pres = pres;
            since_progress = 0;
        } else {
            since_progress += 1;
            if since_progress >= 15 {
                break;
            }
        }
        iterations += 1;

        let mut h_diag = p.clone();
        for (k, bd) in bounds.iter().enumerate() {
            h_diag[bd.j] += l_b[k] / s_b[k];
        }
        let w: Vec<f64> = s_in.iter().zip(&l_in).map(|(s, l)| s / l).collect();
        kkt.factor(&h_diag, &w);

        let newton = |kkt: &mut Kkt, rc_in: &[f64], rc_b: &[f64]| {
            let mut rhs = vec![0.0; dim];
            for j in 0..n {
                rhs[j] = -r_d[j];
            }
            for (k, bd) in bounds.iter().enumerate() {
                rhs[bd.j] -= bd.g * (r_b[k] - rc_b[k] / l_b[k]) * l_b[k] / s_b[k];
            }
            for r in 0..neq {
                rhs[n + r] = -r_eq[r];
            }
            for r in 0..nin {
                rhs[n + neq + r] = -r_in[r] + rc_in[r] / l_in[r];
            }
            let sol = kkt.solve(&a, g, &rhs);
            let dy = sol[..n].to_vec();
            let dnu = sol[n..n + neq].to_vec();
            let dl_in = sol[n + neq..].to_vec();
            let ds_in: Vec<f64> = (0..nin)
                .map(|r| -(rc_in[r] + s_in[r] * dl_in[r]) / l_in[r])
                .collect();
            let dl_b: Vec<f64> = bounds
                .iter()
                .enumerate()
                .map(|(k, bd)| (bd.g * dy[bd.j] + r_b[k] - rc_b[k] / l_b[k]) * l_b[k] / s_b[k])
                .collect();
            let ds_b: Vec<f64> = (0..nb)
                .map(|k| -(rc_b[k] + s_b[k] * dl_b[k]) / l_b[k])
                .collect();
            (dy, dnu, ds_in, dl_in, ds_b, dl_b)
        };

        // predictor
        let rc_in: Vec<f64> = s_in.iter().zip(&l_in).map(|(s, l)| s * l).collect();
        let rc_b: Vec<f64> = s_b.iter().zip(&l_b).map(|(s, l)| s * l).collect();
        let (_, _, ds_in_a, dl_in_a, ds_b_a, dl_b_a) = newton(&mut kkt, &rc_in, &rc_b);
        let alpha_aff = max_step(&s_in, &ds_in_a)
            .min(max_step(&l_in, &dl_in_a))
            .min(max_step(&s_b, &ds_b_a))
            .min(max_step(&l_b, &dl_b_a));
        let sigma = if m_total > 0 && mu > 0.0 {
            let gap_aff: f64 = (0..nin)
                .map(|r| (s_in[r] + alpha_aff * ds_in_a[r]) * (l_in[r] + alpha_aff * dl_in_a[r]))
                .sum::<f64>()
                + (0..nb)
                    .map(|k| (s_b[k] + alpha_aff * ds_b_a[k]) * (l_b[k] + alpha_aff * dl_b_a[k]))
                    .sum::<f64>();
            (gap_aff / m_total as f64 / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        // corrector
        let rc_in: Vec<f64> = (0..nin)
            .map(|r| s_in[r] * l_in[r] + ds_in_a[r] * dl_in_a[r] - sigma * mu)
            .collect();
        let rc_b: Vec<f64> = (0..nb)
            .map(|k| s_b[k] * l_b[k] + ds_b_a[k] * dl_b_a[k] - sigma * mu)
            .collect();
        let (dy, dnu, ds_in, dl_in, ds_b, dl_b) = newton(&mut kkt, &rc_in, &rc_b);
        let alpha_max = max_step(&s_in, &ds_in)
            .min(max_step(&l_in, &dl_in))
            .min(max_step(&s_b, &ds_b))
            .min(max_step(&l_b, &dl_b));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !(finite(&dy)
            && finite(&dnu)
            && finite(&ds_in)
            && finite(&dl_in)
            && finite(&ds_b)
            && finite(&dl_b))
        {
            // numerical breakdown; keep the last iterate
            break;
        }
        let alpha = (0.99 * alpha_max).min(1.0);
        if alpha < 1e-10 {
            stalls += 1;
            if stalls >= 5 {
                break;
            }
        } else {
            stalls = 0;
        }
        for j in 0..n {
            y[j] += alpha * dy[j];
        }
        for r in 0..neq {
            nu[r] += alpha * dnu[r];
        }
        for r in 0..nin {
            s_in[r] += alpha * ds_in[r];
            l_in[r] += alpha * dl_in[r];
        }
        for k in 0..nb {
            s_b[k] += alpha * ds_b[k];
            l_b[k] += alpha * dl_b[k];
        }
    }

    if status == IpmStatus::MaxIter {
        if let Some((best_y, best_pres)) = near_best {
            // stalled at the limit of floating point accuracy
            y = best_y;
            primal_residual = best_pres;
            status = IpmStatus::Solved;
        } else if !(primal_residual <= STALL_TOL * rhs_norm) {
            status = IpmStatus::Infeasible;
        }
    }
    IpmResult {
        y,
        status,
        iterations,
        primal_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> IpmSettings {
        IpmSettings {
            tol: 1e-9,
            max_iter: 200,
        }
    }

    #[test]
    fn box_only_lp() {
        let qp = Qp {
            n: 2,
            p: vec![0.0, 0.0],
            q: vec![-1.0, 2.0],
            lb: vec![0.0, -1.0],
            ub: vec![5.0, 3.0],
            ..Default::default()
        };
        let r = solve_qp(&qp, settings());
        assert_eq!(r.status, IpmStatus::Solved);
        assert!((r.y[0] - 5.0).abs() < 1e-6 && (r.y[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn projected_quadratic() {
        // min (x - 3)² s.t. x ≤ 2
        let qp = Qp {
            n: 1,
            p: vec![2.0],
            q: vec![-6.0],
            lb: vec![f64::NEG_INFINITY],
            ub: vec![f64::INFINITY],
            g: vec![vec![(0, 1.0)]],
            h: vec![2.0],
            ..Default::default()
        };
        let r = solve_qp(&qp, settings());
        assert_eq!(r.status, IpmStatus::Solved);
        assert!((r.y[0] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn equality_and_fixed_variables() {
        // min x² + y² + z² s.t. x + y = 2, z fixed at 1
        let qp = Qp {
            n: 3,
            p: vec![2.0, 2.0, 2.0],
            q: vec![0.0; 3],
            lb: vec![-10.0, -10.0, 1.0],
            ub: vec![10.0, 10.0, 1.0],
            a: vec![vec![(0, 1.0), (1, 1.0)]],
            b: vec![2.0],
            ..Default::default()
        };
        let r = solve_qp(&qp, settings());
        assert_eq!(r.status, IpmStatus::Solved);
        for (v, e) in r.y.iter().zip([1.0, 1.0, 1.0]) {
            assert!((v - e).abs() < 1e-7);
        }
    }

    #[test]
    fn detects_infeasibility() {
        // x ≥ 0 box, x ≤ −1 row
        let qp = Qp {
            n: 1,
            p: vec![0.0],
            q: vec![1.0],
            lb: vec![0.0],
            ub: vec![10.0],
            g: vec![vec![(0, 1.0)]],
            h: vec![-1.0],
            ..Default::default()
        };
        assert_eq!(solve_qp(&qp, settings()).status, IpmStatus::Infeasible);
        let empty_box = Qp {
            n: 1,
            p: vec![0.0],
            q: vec![0.0],
            lb: vec![1.0],
            ub: vec![0.0],
            ..Default::default()
        };
        assert_eq!(
            solve_qp(&empty_box, settings()).status,
            IpmStatus::Infeasible
        );
    }
}
