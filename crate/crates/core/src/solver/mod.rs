//! Concave quadratic maximization with second-order-cone constraints.
//!
//! ```text
//! maximize   f·x − Σ_j d_j x_j² − Σ_k w_k max(E_k x + e_k) − Σ_k v_k ‖F_k x + f_k‖₂
//! subject to lower ≤ x ≤ upper,  G x ≤ h,  A x = b,
//!            ‖(R_l x + o_l, I_l x + o'_l)‖₂ ≤ c_l
//! ```
//!
//! Every cone is replaced by a polygonal outer approximation in its 2-D image
//! (or, for norm penalties, by tangent planes of the epigraph). The resulting
//! QP is solved by an interior point method; violated cones receive a new
//! tangent cut at the violating point and the QP is solved again until all
//! cones hold within tolerance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod ipm;
mod ldl;

use ipm::{IpmSettings, IpmStatus, Qp, SparseRow};

/// `Σ coeff · x[index] + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    #[serde(default)]
    pub constant: f64,
}

impl LinExpr {
    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        LinExpr { terms, constant }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }
}

/// `weight · max(exprs)`, subtracted from the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpigraphTerm {
    pub weight: f64,
    pub exprs: Vec<LinExpr>,
}

/// `weight · ‖exprs‖₂`, subtracted from the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTerm {
    pub weight: f64,
    pub exprs: Vec<LinExpr>,
}

/// `row · x ≤ rhs` (or `= rhs` when used as an equality).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub row: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `‖(re·x + offset_re, im·x + offset_im)‖₂ ≤ limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocConstraint {
    pub re: Vec<(usize, f64)>,
    pub im: Vec<(usize, f64)>,
    pub offset_re: f64,
    pub offset_im: f64,
    pub limit: f64,
}

impl SocConstraint {
    /// Image point `u = (re·x + o_re, im·x + o_im)`.
    pub fn image(&self, x: &[f64]) -> (f64, f64) {
        let dot = |row: &[(usize, f64)]| row.iter().map(|&(j, c)| c * x[j]).sum::<f64>();
        (
            dot(&self.re) + self.offset_re,
            dot(&self.im) + self.offset_im,
        )
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let (a, b) = self.image(x);
        (a.hypot(b) - self.limit).max(0.0)
    }

    /// Half-plane `g·u ≤ limit` for the unit direction at angle `theta`,
    /// pulled back to x-space.
    pub fn tangent(&self, theta: f64) -> LinearConstraint {
        let (gr, gi) = (theta.cos(), theta.sin());
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(self.re.len() + self.im.len());
        row.extend(self.re.iter().map(|&(j, c)| (j, gr * c)));
        row.extend(self.im.iter().map(|&(j, c)| (j, gi * c)));
        LinearConstraint {
            row: merge_terms(row),
            rhs: self.limit - gr * self.offset_re - gi * self.offset_im,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexProgram {
    pub n: usize,
    pub linear_cost: Vec<f64>,
    pub quad_cost: Vec<f64>,
    #[serde(default)]
    pub epigraph_terms: Vec<EpigraphTerm>,
    #[serde(default)]
    pub norm_terms: Vec<NormTerm>,
    #[serde(with = "bounds_serde::lower")]
    pub lower: Vec<f64>,
    #[serde(with = "bounds_serde::upper")]
    pub upper: Vec<f64>,
    #[serde(default)]
    pub linear_ineqs: Vec<LinearConstraint>,
    #[serde(default)]
    pub linear_eqs: Vec<LinearConstraint>,
    #[serde(default)]
    pub soc_constraints: Vec<SocConstraint>,
}

impl ConvexProgram {
    /// Program with `n` variables in `[lower, upper]` and a zero objective.
    pub fn new(n: usize, lower: f64, upper: f64) -> Self {
        ConvexProgram {
            n,
            linear_cost: vec![0.0; n],
            quad_cost: vec![0.0; n],
            epigraph_terms: Vec::new(),
            norm_terms: Vec::new(),
            lower: vec![lower; n],
            upper: vec![upper; n],
            linear_ineqs: Vec::new(),
            linear_eqs: Vec::new(),
            soc_constraints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let bad = |msg: String| Err(Error::InvalidProgram(msg));
        if self.linear_cost.len() != n
            || self.quad_cost.len() != n
            || self.lower.len() != n
            || self.upper.len() != n
        {
            return bad(format!("vector lengths do not match n = {n}"));
        }
        if self.quad_cost.iter().any(|&d| !(d >= 0.0)) {
            return bad("quadratic cost must be non-negative (concave objective)".into());
        }
        if self.linear_cost.iter().any(|c| !c.is_finite()) {
            return bad("linear cost must be finite".into());
        }
        let in_range = |terms: &[(usize, f64)]| terms.iter().all(|&(j, c)| j < n && c.is_finite());
        for t in &self.epigraph_terms {
            if !(t.weight >= 0.0)
                || t.exprs.is_empty()
                || !t.exprs.iter().all(|e| in_range(&e.terms))
            {
                return bad(
                    "epigraph terms need a non-negative weight and valid expressions".into(),
                );
            }
        }
        for t in &self.norm_terms {
            if !(t.weight >= 0.0)
                || t.exprs.is_empty()
                || !t.exprs.iter().all(|e| in_range(&e.terms))
            {
                return bad("norm terms need a non-negative weight and valid expressions".into());
            }
        }
        for c in self.linear_ineqs.iter().chain(&self.linear_eqs) {
            if !in_range(&c.row) || !c.rhs.is_finite() {
                return bad("linear constraint references an unknown variable".into());
            }
        }
        for s in &self.soc_constraints {
            if !in_range(&s.re) || !in_range(&s.im) || !(s.limit >= 0.0) {
                return bad("cone constraint is malformed".into());
            }
        }
        Ok(())
    }

    /// True objective at `x` (cones and penalties evaluated exactly).
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v: f64 = (0..self.n)
            .map(|j| self.linear_cost[j] * x[j] - self.quad_cost[j] * x[j] * x[j])
            .sum();
        for t in &self.epigraph_terms {
            v -= t.weight
                * t.exprs
                    .iter()
                    .map(|e| e.eval(x))
                    .fold(f64::NEG_INFINITY, f64::max);
        }
        for t in &self.norm_terms {
            v -= t.weight
                * t.exprs
                    .iter()
                    .map(|e| e.eval(x).powi(2))
                    .sum::<f64>()
                    .sqrt();
        }
        v
    }

    /// Largest violation of box, linear and cone constraints at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &[(usize, f64)]| row.iter().map(|&(j, c)| c * x[j]).sum::<f64>();
        let mut v: f64 = 0.0;
        for j in 0..self.n {
            v = v.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for c in &self.linear_ineqs {
            v = v.max(dot(&c.row) - c.rhs);
        }
        for c in &self.linear_eqs {
            v = v.max((dot(&c.row) - c.rhs).abs());
        }
        for s in &self.soc_constraints {
            v = v.max(s.violation(x));
        }
        v
    }

    /// Write the program as JSON for offline inspection.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: Vec<f64>,
    pub status: Status,
    pub objective: f64,
    pub max_violation: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub cuts: usize,
    /// Angles of the cuts that hold with equality at `x`, per cone. Passing
    /// these back as hints warm-starts a nearby program.
    #[serde(default)]
    pub active_cuts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    /// Cutting-plane rounds.
    pub max_iter: usize,
    /// Interior point iterations per round.
    pub inner_budget: usize,
    /// Facets of the initial polygon around each cone.
    pub seed_facets: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-4,
            max_iter: 50,
            inner_budget: 100_000,
            seed_facets: 4,
        }
    }
}

/// Tangent cut of cone `soc` at a point `x` that violates it.
pub fn add_soc_cut(soc: &SocConstraint, x: &[f64]) -> Result<LinearConstraint> {
    let (a, b) = soc.image(x);
    let norm = a.hypot(b);
    if norm <= soc.limit {
        return Err(Error::NotViolated {
            norm,
            limit: soc.limit,
        });
    }
    Ok(soc.tangent(b.atan2(a)))
}

fn merge_terms(mut terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    terms.sort_by_key(|&(j, _)| j);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (j, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += c,
            _ => out.push((j, c)),
        }
    }
    out.retain(|&(_, c)| c != 0.0);
    out
}

pub fn solve(program: &ConvexProgram, options: &SolveOptions) -> Result<Solution> {
    solve_with_hints(program, options, &[])
}

/// Like [`solve`], with extra initial cut angles per cone (`hints[i]` for
/// `soc_constraints[i]`, radians in the cone's 2-D image).
pub fn solve_with_hints(
    program: &ConvexProgram,
    options: &SolveOptions,
    hints: &[Vec<f64>],
) -> Result<Solution> {
    program.validate()?;
    let n = program.n;
    let ne = program.epigraph_terms.len();
    let nn = program.norm_terms.len();
    let dim = n + ne + nn;

    let mut p = vec![0.0; dim];
    let mut q = vec![0.0; dim];
    for j in 0..n {
        p[j] = 2.0 * program.quad_cost[j];
        q[j] = -program.linear_cost[j];
    }
    let mut lb = program.lower.clone();
    let mut ub = program.upper.clone();
    for (k, t) in program.epigraph_terms.iter().enumerate() {
        q[n + k] = t.weight;
        lb.push(f64::NEG_INFINITY);
        ub.push(f64::INFINITY);
    }
    for (k, t) in program.norm_terms.iter().enumerate() {
        q[n + ne + k] = t.weight;
        lb.push(0.0);
        ub.push(f64::INFINITY);
    }

    let mut g: Vec<SparseRow> = Vec::new();
    let mut h: Vec<f64> = Vec::new();
    for c in &program.linear_ineqs {
        g.push(merge_terms(c.row.clone()));
        h.push(c.rhs);
    }
    for (k, t) in program.epigraph_terms.iter().enumerate() {
        for e in &t.exprs {
            let mut row = merge_terms(e.terms.clone());
            row.push((n + k, -1.0));
            g.push(row);
            h.push(-e.constant);
        }
    }
    let push_cut = |g: &mut Vec<SparseRow>, h: &mut Vec<f64>, c: LinearConstraint| {
        g.push(c.row);
        h.push(c.rhs);
    };
    let facets = options.seed_facets.max(3);
    let mut angles: Vec<Vec<f64>> = vec![Vec::new(); program.soc_constraints.len()];
    for (i, soc) in program.soc_constraints.iter().enumerate() {
        if soc.re.is_empty() && soc.im.is_empty() {
            continue;
        }
        let seeds = (0..facets).map(|k| std::f64::consts::TAU * k as f64 / facets as f64);
        for theta in seeds.chain(hints.get(i).into_iter().flatten().copied()) {
            if angles[i].iter().any(|&a| angle_distance(a, theta) < 1e-9) {
                continue;
            }
            angles[i].push(theta);
            push_cut(&mut g, &mut h, soc.tangent(theta));
        }
    }
    let a: Vec<SparseRow> = program
        .linear_eqs
        .iter()
        .map(|c| merge_terms(c.row.clone()))
        .collect();
    let b: Vec<f64> = program.linear_eqs.iter().map(|c| c.rhs).collect();

    // A cone with no variables is either satisfied or impossible.
    for soc in &program.soc_constraints {
        if soc.re.is_empty()
            && soc.im.is_empty()
            && soc.offset_re.hypot(soc.offset_im) > soc.limit + options.tol
        {
            return Ok(infeasible(program, 0, 0, 0));
        }
    }

    let settings = IpmSettings {
        tol: (options.tol * 1e-4).max(1e-10),
        max_iter: options.inner_budget,
    };
    let seed_rows = g.len();
    let mut inner_total = 0;
    let mut last: Option<Vec<f64>> = None;
    for outer in 1..=options.max_iter.max(1) {
        let qp = Qp {
            n: dim,
            p: p.clone(),
            q: q.clone(),
            lb: lb.clone(),
            ub: ub.clone(),
            g: g.clone(),
            h: h.clone(),
            a: a.clone(),
            b: b.clone(),
        };
        let res = ipm::solve_qp(&qp, settings);
        inner_total += res.iterations;
        log::trace!(
            "round {outer}: {} interior point iterations, primal residual {:.2e}",
            res.iterations,
            res.primal_residual
        );
        if res.status == IpmStatus::Infeasible {
            return Ok(infeasible(program, outer, inner_total, g.len() - seed_rows));
        }
        let y = res.y;
        let x = &y[..n];

        let mut worst: f64 = 0.0;
        let mut new_cuts = 0;
        for (i, soc) in program.soc_constraints.iter().enumerate() {
            let v = soc.violation(x);
            worst = worst.max(v);
            if v > options.tol * 0.1 {
                let (re, im) = soc.image(x);
                angles[i].push(im.atan2(re));
                push_cut(&mut g, &mut h, soc.tangent(im.atan2(re)));
                new_cuts += 1;
            }
        }
        for (k, t) in program.norm_terms.iter().enumerate() {
            let vals: Vec<f64> = t.exprs.iter().map(|e| e.eval(x)).collect();
            let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
            let tk = y[n + ne + k];
            let gap = norm - tk;
            worst = worst.max(gap);
            if gap > options.tol * 0.1 && norm > 0.0 {
                // t ≥ g·(F x + f) with g = u/‖u‖
                let mut row = Vec::new();
                let mut constant = 0.0;
                for (e, v) in t.exprs.iter().zip(&vals) {
                    let gk = v / norm;
                    row.extend(e.terms.iter().map(|&(j, c)| (j, gk * c)));
                    constant += gk * e.constant;
                }
                let mut row = merge_terms(row);
                row.push((n + ne + k, -1.0));
                g.push(row);
                h.push(-constant);
                new_cuts += 1;
            }
        }
        let x = x.to_vec();
        let converged = worst <= options.tol || new_cuts == 0;
        log::trace!("outer {outer}: worst cone violation {worst:.3e}, {new_cuts} new cuts");
        if converged && res.status == IpmStatus::Solved {
            return Ok(finish(
                program,
                x,
                Status::Optimal,
                outer,
                inner_total,
                g.len() - seed_rows,
                &angles,
            ));
        }
        if converged {
            return Ok(finish(
                program,
                x,
                Status::MaxIter,
                outer,
                inner_total,
                g.len() - seed_rows,
                &angles,
            ));
        }
        last = Some(x);
    }
    let x = last.unwrap_or_else(|| vec![0.0; n]);
    Ok(finish(
        program,
        x,
        Status::MaxIter,
        options.max_iter,
        inner_total,
        g.len() - seed_rows,
        &angles,
    ))
}

/// Absolute difference of two angles, in `[0, π]`.
fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Relative slack below which a cut counts as active.
const ACTIVE_SLACK: f64 = 1e-3;

fn finish(
    program: &ConvexProgram,
    x: Vec<f64>,
    status: Status,
    outer: usize,
    inner: usize,
    cuts: usize,
    angles: &[Vec<f64>],
) -> Solution {
    let active_cuts = program
        .soc_constraints
        .iter()
        .zip(angles)
        .map(|(soc, list)| {
            let (re, im) = soc.image(&x);
            list.iter()
                .copied()
                .filter(|&t| {
                    soc.limit - (t.cos() * re + t.sin() * im) <= ACTIVE_SLACK * soc.limit.max(1.0)
                })
                .collect()
        })
        .collect();
    Solution {
        active_cuts,
        objective: program.objective(&x),
        max_violation: program.max_violation(&x),
        x,
        status,
        outer_iterations: outer,
        inner_iterations: inner,
        cuts,
    }
}

fn infeasible(program: &ConvexProgram, outer: usize, inner: usize, cuts: usize) -> Solution {
    Solution {
        x: vec![0.0; program.n],
        status: Status::Infeasible,
        objective: f64::NEG_INFINITY,
        max_violation: f64::INFINITY,
        outer_iterations: outer,
        inner_iterations: inner,
        cuts,
        active_cuts: Vec::new(),
    }
}

/// JSON has no infinities; unbounded sides are written as `null`.
mod bounds_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    fn ser<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(
            v.iter()
                .map(|x| if x.is_finite() { Some(*x) } else { None }),
        )
    }

    fn de<'de, D: Deserializer<'de>>(d: D, missing: f64) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(missing)).collect())
    }

    pub mod lower {
        use super::*;
        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            ser(v, s)
        }
        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            de(d, f64::NEG_INFINITY)
        }
    }

    pub mod upper {
        use super::*;
        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            ser(v, s)
        }
        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            de(d, f64::INFINITY)
        }
    }
}
