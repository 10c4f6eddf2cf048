//! Discrete norms, errors against exact solutions, elliptic projectors,
//! inf-sup estimation and convergence rates.

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{time_form, SpaceFactors, TimeFactors, Weight};
use crate::linalg::{dot, kron_apply, kron_dense, mat_vec, SpdFactor};
use crate::newton::NewtonSolver;
use crate::problems::{KinkLine, ProblemSpec};
use crate::quadrature::{gauss_rule, QuadratureRule};
use crate::splines::{test_space_of, Basis, SplineSpace};
use crate::system::{assemble_with, BlockSystem, DiscreteSolution};

// ---------------------------------------------------------------------------
// quadrature over space–time elements, split along a kink line if needed

/// (x, t, weight) on the rectangle [x0,x1]×[t0,t1]. If `kink` cuts the
/// rectangle, each side is triangulated and integrated separately.
pub fn element_points(
    x: (f64, f64),
    t: (f64, f64),
    kink: Option<KinkLine>,
    rule: &QuadratureRule,
) -> Vec<(f64, f64, f64)> {
    let corners = [(x.0, t.0), (x.1, t.0), (x.1, t.1), (x.0, t.1)];
    if let Some(k) = kink {
        let levels: Vec<f64> = corners.iter().map(|&(a, b)| k.level(a, b)).collect();
        let scale = (x.1 - x.0).max(t.1 - t.0);
        let eps = 1e-12 * scale;
        let lo = levels.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo < -eps && hi > eps {
            let mut out = Vec::new();
            for sign in [1.0, -1.0] {
                let poly = clip(&corners, |p| sign * k.level(p.0, p.1));
                for i in 1..poly.len().saturating_sub(1) {
                    triangle_points(poly[0], poly[i], poly[i + 1], rule, &mut out);
                }
            }
            return out;
        }
    }
    let mut out = Vec::with_capacity(rule.len() * rule.len());
    for (tq, wt) in rule.mapped(t.0, t.1) {
        for (xq, wx) in rule.mapped(x.0, x.1) {
            out.push((xq, tq, wx * wt));
        }
    }
    out
}

/// The part of a convex polygon where `level ≥ 0`.
fn clip(poly: &[(f64, f64)], level: impl Fn((f64, f64)) -> f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (lp, lq) = (level(p), level(q));
        if lp >= 0.0 {
            out.push(p);
        }
        if (lp > 0.0 && lq < 0.0) || (lp < 0.0 && lq > 0.0) {
            let s = lp / (lp - lq);
            out.push((p.0 + s * (q.0 - p.0), p.1 + s * (q.1 - p.1)));
        }
    }
    out
}

/// Collapsed tensor Gauss rule on a triangle.
fn triangle_points(
    p0: (f64, f64),
    p1: (f64, f64),
    p2: (f64, f64),
    rule: &QuadratureRule,
    out: &mut Vec<(f64, f64, f64)>,
) {
    let (ax, at) = (p1.0 - p0.0, p1.1 - p0.1);
    let (bx, bt) = (p2.0 - p0.0, p2.1 - p0.1);
    let det = (ax * bt - at * bx).abs();
    if det == 0.0 {
        return;
    }
    for (&u, &wu) in rule.nodes().iter().zip(rule.weights()) {
        for (&v, &wv) in rule.nodes().iter().zip(rule.weights()) {
            let (xi, eta) = (u, v * (1.0 - u));
            out.push((
                p0.0 + xi * ax + eta * bx,
                p0.1 + xi * at + eta * bt,
                wu * wv * (1.0 - u) * det,
            ));
        }
    }
}

/// Gauss points on [a, b], split where the kink crosses at time t.
pub fn segment_points(a: f64, b: f64, t: f64, kink: Option<KinkLine>, rule: &QuadratureRule) -> Vec<(f64, f64)> {
    if let Some(k) = kink {
        if let Some(xc) = k.crossing_at(t) {
            let eps = 1e-12 * (b - a);
            if xc > a + eps && xc < b - eps {
                return rule.mapped(a, xc).chain(rule.mapped(xc, b)).collect();
            }
        }
    }
    rule.mapped(a, b).collect()
}

// ---------------------------------------------------------------------------
// errors

/// Components of the V_{e,h} norm and plain L² norms. Either errors or,
/// for the reference, the same norms of the exact solution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorReport {
    /// ‖∂_t(U − U_h)‖ in L²_e
    pub err_dt_u_l2e: f64,
    /// ‖∂_t(V − V_h)‖ in the discrete weighted Newton seminorm
    pub err_dt_v_neh: f64,
    /// ‖c ∂_x(U − U_h)‖ in L²_e
    pub err_cgrad_u_l2e: f64,
    pub err_v_l2e: f64,
    /// root sum of squares of the four terms above
    pub err_veh: f64,
    pub err_u_l2e: f64,
    /// unweighted L²(Q_T)
    pub err_u_l2: f64,
    pub err_v_l2: f64,
    pub relative: bool,
}

impl ErrorReport {
    fn from_squares(s: &[f64; 7], neh: f64) -> Self {
        let [dt_u, cgrad, v_e, u_e, u, v, _] = *s;
        let veh = (dt_u + neh * neh + cgrad + v_e).sqrt();
        Self {
            err_dt_u_l2e: dt_u.sqrt(),
            err_dt_v_neh: neh,
            err_cgrad_u_l2e: cgrad.sqrt(),
            err_v_l2e: v_e.sqrt(),
            err_veh: veh,
            err_u_l2e: u_e.sqrt(),
            err_u_l2: u.sqrt(),
            err_v_l2: v.sqrt(),
            relative: false,
        }
    }
}

/// Absolute errors together with the norms of the exact solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPair {
    pub absolute: ErrorReport,
    pub reference: ErrorReport,
}

impl ErrorPair {
    /// V_{e,h} components are scaled by the exact V_{e,h} norm (so the
    /// squares still add up); the other norms by their own reference.
    pub fn relative(&self) -> ErrorReport {
        let (a, r) = (&self.absolute, &self.reference);
        let div = |x: f64, y: f64| if y > 0.0 { x / y } else { x };
        ErrorReport {
            err_dt_u_l2e: div(a.err_dt_u_l2e, r.err_veh),
            err_dt_v_neh: div(a.err_dt_v_neh, r.err_veh),
            err_cgrad_u_l2e: div(a.err_cgrad_u_l2e, r.err_veh),
            err_v_l2e: div(a.err_v_l2e, r.err_veh),
            err_veh: div(a.err_veh, r.err_veh),
            err_u_l2e: div(a.err_u_l2e, r.err_u_l2e),
            err_u_l2: div(a.err_u_l2, r.err_u_l2),
            err_v_l2: div(a.err_v_l2, r.err_v_l2),
            relative: true,
        }
    }

    /// ‖c∇(U − U_h)‖ relative to ‖c∇U‖.
    pub fn relative_cgrad(&self) -> f64 {
        let r = self.reference.err_cgrad_u_l2e;
        if r > 0.0 {
            self.absolute.err_cgrad_u_l2e / r
        } else {
            self.absolute.err_cgrad_u_l2e
        }
    }
}

/// Gauss points per element per direction for error quadrature.
pub fn error_points(solution: &DiscreteSolution) -> usize {
    solution.space_x.degree().max(solution.space_t.degree()) + 3
}

/// Errors of `solution` against the exact solution of `problem`.
pub fn error_report(solution: &DiscreteSolution, problem: &ProblemSpec, n_points: Option<usize>) -> Result<ErrorPair> {
    let ex = problem.exact()?;
    let q = n_points.unwrap_or_else(|| error_points(solution));
    let rule = gauss_rule(q)?;
    let (sx, st) = (&solution.space_x, &solution.space_t);
    let n_x = sx.dim();
    let weight = Weight::Exponential {
        final_time: problem.final_time,
    };
    let kink = problem.kink;
    let mesh_x = sx.knots();
    let mesh_t = st.knots();

    // [errors; exact norms], 7 squared slots each (last slot unused)
    let parts: Vec<[[f64; 7]; 2]> = (0..mesh_t.n_elements())
        .into_par_iter()
        .map(|et| {
            let mut acc = [[0.0; 7]; 2];
            let tb = mesh_t.element_bounds(et);
            for ex_i in 0..mesh_x.n_elements() {
                let xb = mesh_x.element_bounds(ex_i);
                for (x, t, w) in element_points(xb, tb, kink, &rule) {
                    let bx0 = sx.eval_on_element(ex_i, x, 0);
                    let bx1 = sx.eval_on_element(ex_i, x, 1);
                    let bt0 = st.eval_on_element(et, t, 0);
                    let bt1 = st.eval_on_element(et, t, 1);
                    let comb = DiscreteSolution::combine;
                    let (uc, vc) = (&solution.u_coeffs, &solution.v_coeffs);
                    let uh = comb(uc, n_x, &bx0, &bt0) + (solution.shift.u0)(x);
                    let uh_t = comb(uc, n_x, &bx0, &bt1);
                    let uh_x = comb(uc, n_x, &bx1, &bt0) + (solution.shift.u0_dx)(x);
                    let vh = comb(vc, n_x, &bx0, &bt0) + (solution.shift.v0)(x);
                    let (u, u_x, u_t) = ((ex.u)(x, t), (ex.u_dx)(x, t), (ex.u_dt)(x, t));
                    let v = u_t;
                    let c2 = (problem.c2)(x);
                    let we = w * weight.at(t);
                    let err = [
                        we * (u_t - uh_t).powi(2),
                        we * c2 * (u_x - uh_x).powi(2),
                        we * (v - vh).powi(2),
                        we * (u - uh).powi(2),
                        w * (u - uh).powi(2),
                        w * (v - vh).powi(2),
                    ];
                    let refs = [
                        we * u_t * u_t,
                        we * c2 * u_x * u_x,
                        we * v * v,
                        we * u * u,
                        w * u * u,
                        w * v * v,
                    ];
                    for k in 0..6 {
                        acc[0][k] += err[k];
                        acc[1][k] += refs[k];
                    }
                }
            }
            acc
        })
        .collect();
    let mut sums = [[0.0; 7]; 2];
    for p in &parts {
        for s in 0..2 {
            for k in 0..7 {
                sums[s][k] += p[s][k];
            }
        }
    }
    if sums.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Integration { node: f64::NAN });
    }

    // Newton seminorm of ∂_t(V − V_h): spatial loads per time node
    let newton = NewtonSolver::new(sx, &*problem.c2, None)?;
    let exact_moments = |t: f64| -> Result<Vec<f64>> {
        let mut b = vec![0.0; n_x];
        for e in 0..mesh_x.n_elements() {
            let (a, c) = mesh_x.element_bounds(e);
            for (x, w) in segment_points(a, c, t, kink, &rule) {
                let f = (ex.v_dt)(x, t);
                for (i, phi) in sx.eval_on_element(e, x, 0).iter() {
                    b[i] += w * f * phi;
                }
            }
        }
        if let Some(k) = kink.filter(|k| k.dt_v_mass != 0.0) {
            if let Some(xc) = k.crossing_at(t) {
                if xc > problem.omega.0 && xc < problem.omega.1 {
                    for (i, phi) in sx.eval(xc, 0)?.iter() {
                        b[i] += k.dt_v_mass * phi;
                    }
                }
            }
        }
        Ok(b)
    };
    let discrete_col = |t: f64| -> Vec<f64> {
        let e = mesh_t.element_of(t);
        let mut col = vec![0.0; n_x];
        for (b, v) in st.eval_on_element(e, t, 1).iter() {
            for (c, z) in col.iter_mut().zip(&solution.v_coeffs[b * n_x..(b + 1) * n_x]) {
                *c += v * z;
            }
        }
        col
    };
    let err_moments = |t: f64| -> Result<Vec<f64>> {
        let mut b = exact_moments(t)?;
        let m = mat_vec(newton.mass(), &discrete_col(t));
        for (bi, mi) in b.iter_mut().zip(m) {
            *bi -= mi;
        }
        Ok(b)
    };
    let tb = st.breakpoints();
    let neh_err = newton.seminorm_neh_with(&err_moments, tb, problem.final_time, q)?;
    let neh_ref = newton.seminorm_neh_with(&exact_moments, tb, problem.final_time, q)?;
    Ok(ErrorPair {
        absolute: ErrorReport::from_squares(&sums[0], neh_err),
        reference: ErrorReport::from_squares(&sums[1], neh_ref),
    })
}

/// log₂(e_k / e_{k+1}); the first entry has no predecessor.
pub fn eoc(errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for w in errors.windows(2) {
        out.push(if w[0] > 0.0 && w[1] > 0.0 {
            Some((w[0] / w[1]).log2())
        } else {
            None
        });
    }
    out.truncate(errors.len());
    out
}

/// Rates for a sequence of mesh sizes that need not halve.
pub fn eoc_with_h(errors: &[f64], h: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for k in 1..errors.len() {
        let (e0, e1) = (errors[k - 1], errors[k]);
        out.push(if e0 > 0.0 && e1 > 0.0 && h[k - 1] != h[k] {
            Some((e0 / e1).ln() / (h[k - 1] / h[k]).ln())
        } else {
            None
        });
    }
    out.truncate(errors.len());
    out
}

// ---------------------------------------------------------------------------
// discrete norms and the stability bound

/// The Gram matrices of the trial norm ‖·‖_{V_{e,h}} applied blockwise.
#[derive(Debug)]
pub struct NormOperators {
    pub time: TimeFactors,
    pub space: SpaceFactors,
    /// M_x K_x⁻¹ M_x
    pub sandwich: Mat<f64>,
}

impl NormOperators {
    pub fn new(sys: &BlockSystem) -> Result<Self> {
        let newton = NewtonSolver::from_factors(&sys.space_x, sys.space.clone())?;
        Ok(Self {
            time: sys.time.clone(),
            space: sys.space.clone(),
            sandwich: newton.sandwich(),
        })
    }

    /// ‖(U_h, V_h)‖²_{V_{e,h}} for the coefficient vector z = [u; v].
    pub fn veh_sq(&self, z: &[f64]) -> f64 {
        let n = z.len() / 2;
        let (u, v) = z.split_at(n);
        let (t, s) = (&self.time, &self.space);
        let xu: Vec<f64> = kron_apply(&t.stiffness, &s.mass, u)
            .iter()
            .zip(kron_apply(&t.mass, &s.stiffness, u))
            .map(|(a, b)| a + b)
            .collect();
        let xv: Vec<f64> = kron_apply(&t.stiffness, &self.sandwich, v)
            .iter()
            .zip(kron_apply(&t.mass, &s.mass, v))
            .map(|(a, b)| a + b)
            .collect();
        dot(u, &xu) + dot(v, &xv)
    }
}

/// 2√(C_Ω²/c0² + 4T²), the reciprocal of the inf-sup lower bound.
pub fn stability_constant(problem: &ProblemSpec) -> f64 {
    1.0 / problem.infsup_lower_bound()
}

/// Right-hand sides of the stability estimate, 2√(C_Ω²/c0²+4T²)·(‖F‖_{L²_e}
/// + a‖∂_x(c²∂_xU0)‖ + a‖c ∂_xV0‖) with initial-data norms in L²(Ω).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataBounds {
    /// a = 1, the form stated for the discrete problem
    pub discrete: f64,
    /// a = √T, the form stated for the continuous problem
    pub continuous: f64,
}

/// `None` if ∂_x(c²∂_xU0) is unavailable.
pub fn data_bound(problem: &ProblemSpec) -> Result<Option<DataBounds>> {
    let Some(flux) = problem.u0_flux_div.clone() else {
        return Ok(None);
    };
    let n = 64;
    let q = 8;
    let (a, b) = problem.omega;
    let xs: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let ts: Vec<f64> = (0..=n).map(|i| problem.final_time * i as f64 / n as f64).collect();
    let weight = Weight::Exponential {
        final_time: problem.final_time,
    };
    let f = problem.forcing.clone();
    let f_sq = crate::quadrature::integrate(
        |t| {
            let inner = crate::quadrature::integrate(|x| f(x, t).powi(2), &xs, q).unwrap_or(f64::NAN);
            inner * weight.at(t)
        },
        &ts,
        q,
    )?;
    let flux_sq = crate::quadrature::integrate(|x| flux(x).powi(2), &xs, q)?;
    let (c2, v0x) = (problem.c2.clone(), problem.v0_dx.clone());
    let cv_sq = crate::quadrature::integrate(|x| c2(x) * v0x(x).powi(2), &xs, q)?;
    let k = stability_constant(problem);
    let init = flux_sq.sqrt() + cv_sq.sqrt();
    let st = problem.final_time.sqrt();
    Ok(Some(DataBounds {
        discrete: k * (f_sq.sqrt() + init),
        continuous: k * (f_sq.sqrt() + st * init),
    }))
}

/// (w, ∂_t w)_e − (1/2T)‖w‖²_e − ½e⁻¹w(T)², relative to the largest term.
pub fn weighted_identity_residual(space_t: &SplineSpace, coeffs: &[f64], final_time: f64) -> Result<f64> {
    // the weight is not polynomial; on one element h = T, so use extra points
    let q = Some(space_t.degree() + 8);
    let cross = time_form(space_t, &test_space_of(space_t)?, 0, 0, final_time, q)?.matrix;
    let mass = time_form(space_t, space_t, 0, 0, final_time, q)?.matrix;
    // cross[i][j] = ∫ φ_j φ'_i e, so (w, w')_e = cᵀ cross c either way
    let lhs = dot(coeffs, &mat_vec(&cross, coeffs));
    let wt = space_t.evaluate(coeffs, final_time, 0)?;
    let a = dot(coeffs, &mat_vec(&mass, coeffs)) / (2.0 * final_time);
    let b = 0.5 * (-1f64).exp() * wt * wt;
    let scale = lhs.abs().max(a).max(b).max(f64::MIN_POSITIVE);
    Ok((lhs - a - b).abs() / scale)
}

// ---------------------------------------------------------------------------
// elliptic projectors

/// Π^∇ of a function of x: K z = (c² w', φ'_a).
pub fn project_space(
    space_x: &SplineSpace,
    c2: &dyn Fn(f64) -> f64,
    w_x: &dyn Fn(f64) -> f64,
    n_points: usize,
) -> Result<Vec<f64>> {
    let newton = NewtonSolver::new(space_x, c2, Some(n_points))?;
    let b = crate::system::space_moments_deriv(space_x, &|x| c2(x) * w_x(x), 1, n_points)?;
    Ok(newton.factor().solve(&b))
}

/// Π^{∂t} of a function of t (approximating w − w(0)): S_e y = (w', φ'_b)_e.
pub fn project_time(
    space_t: &SplineSpace,
    final_time: f64,
    w_t: &dyn Fn(f64) -> f64,
    n_points: usize,
) -> Result<Vec<f64>> {
    let se = time_form(space_t, space_t, 1, 1, final_time, Some(n_points))?.matrix;
    let b = time_moments_deriv(space_t, final_time, w_t, n_points)?;
    Ok(SpdFactor::new(&se, "weighted time stiffness")?.solve(&b))
}

/// (f, φ'_b)_e over (0, T).
fn time_moments_deriv(space_t: &SplineSpace, final_time: f64, f: &dyn Fn(f64) -> f64, n_points: usize) -> Result<Vec<f64>> {
    let weight = Weight::Exponential { final_time };
    let rule = gauss_rule(n_points)?;
    let mesh = space_t.knots();
    let mut b = vec![0.0; space_t.dim()];
    for e in 0..mesh.n_elements() {
        let (a, c) = mesh.element_bounds(e);
        for (t, w) in rule.mapped(a, c) {
            let v = f(t);
            if !v.is_finite() {
                return Err(Error::Integration { node: t });
            }
            for (i, d) in space_t.eval_on_element(e, t, 1).iter() {
                b[i] += w * weight.at(t) * v * d;
            }
        }
    }
    Ok(b)
}

/// The two compositions Π^∇Π^{∂t}W and Π^{∂t}Π^∇W as coefficient vectors
/// in S_x ⊗ S_t, each computed in its own order from ∂_x∂_t W.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    pub space_then_time: Vec<f64>,
    pub time_then_space: Vec<f64>,
}

pub fn project_space_time(
    space_x: &SplineSpace,
    space_t: &SplineSpace,
    c2: &(dyn Fn(f64) -> f64 + Sync),
    final_time: f64,
    w_xt: &(dyn Fn(f64, f64) -> f64 + Sync),
    n_points: usize,
) -> Result<ProjectionPair> {
    let (n_x, n_t) = (space_x.dim(), space_t.dim());
    let rule = gauss_rule(n_points)?;
    let weight = Weight::Exponential { final_time };
    let k = SpdFactor::new(&SpaceFactors::new(space_x, c2, Some(n_points))?.stiffness, "stiffness")?;
    let se = SpdFactor::new(
        &time_form(space_t, space_t, 1, 1, final_time, Some(n_points))?.matrix,
        "weighted time stiffness",
    )?;
    let (mx, mt) = (space_x.knots(), space_t.knots());

    // space first: z(t) = K⁻¹(c² W_xt(·,t), φ'), then S_e⁻¹ ∫ z(t) φ'_b e
    let mut g = vec![0.0; n_x * n_t];
    for e in 0..mt.n_elements() {
        let (a, b) = mt.element_bounds(e);
        for (t, wt) in rule.mapped(a, b) {
            let m = crate::system::space_moments_deriv(space_x, &|x| c2(x) * w_xt(x, t), 1, n_points)?;
            let z = k.solve(&m);
            for (j, d) in space_t.eval_on_element(e, t, 1).iter() {
                let s = wt * weight.at(t) * d;
                for i in 0..n_x {
                    g[j * n_x + i] += s * z[i];
                }
            }
        }
    }
    let space_then_time = apply_time_inverse(&se, &g, n_x, n_t);

    // time first: y(x) = S_e⁻¹ (W_xt(x,·), φ'_b)_e, then K⁻¹ ∫ c² y(x) φ'_a
    let mut h = vec![0.0; n_x * n_t];
    for e in 0..mx.n_elements() {
        let (a, b) = mx.element_bounds(e);
        for (x, wx) in rule.mapped(a, b) {
            let m = time_moments_deriv(space_t, final_time, &|t| w_xt(x, t), n_points)?;
            let y = se.solve(&m);
            let c = c2(x);
            for (i, d) in space_x.eval_on_element(e, x, 1).iter() {
                let s = wx * c * d;
                for j in 0..n_t {
                    h[j * n_x + i] += s * y[j];
                }
            }
        }
    }
    let mut time_then_space = vec![0.0; n_x * n_t];
    for j in 0..n_t {
        let col = k.solve(&h[j * n_x..(j + 1) * n_x]);
        time_then_space[j * n_x..(j + 1) * n_x].copy_from_slice(&col);
    }
    Ok(ProjectionPair {
        space_then_time,
        time_then_space,
    })
}

fn apply_time_inverse(se: &SpdFactor, g: &[f64], n_x: usize, n_t: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_x * n_t];
    for i in 0..n_x {
        let row: Vec<f64> = (0..n_t).map(|j| g[j * n_x + i]).collect();
        let y = se.solve(&row);
        for j in 0..n_t {
            out[j * n_x + i] = y[j];
        }
    }
    out
}

/// ‖Π^∇Π^{∂t}W − Π^{∂t}Π^∇W‖_{L²_e}.
pub fn commutation_check(
    space_x: &SplineSpace,
    space_t: &SplineSpace,
    c2: &(dyn Fn(f64) -> f64 + Sync),
    final_time: f64,
    w_xt: &(dyn Fn(f64, f64) -> f64 + Sync),
    n_points: usize,
) -> Result<f64> {
    let pair = project_space_time(space_x, space_t, c2, final_time, w_xt, n_points)?;
    let d: Vec<f64> = pair
        .space_then_time
        .iter()
        .zip(&pair.time_then_space)
        .map(|(a, b)| a - b)
        .collect();
    let mt = time_form(space_t, space_t, 0, 0, final_time, Some(n_points))?.matrix;
    let ms = SpaceFactors::new(space_x, &|_| 1.0, Some(n_points))?.mass;
    Ok(dot(&d, &kron_apply(&mt, &ms, &d)).max(0.0).sqrt())
}

/// min over z of ‖c(w' − z')‖ computed as a weighted least-squares problem
/// at the Gauss points, by QR. Returns (coefficients, residual norm).
pub fn space_best_approximation(
    space_x: &SplineSpace,
    c2: &dyn Fn(f64) -> f64,
    w_x: &dyn Fn(f64) -> f64,
    n_points: usize,
) -> Result<(Vec<f64>, f64)> {
    let rule = gauss_rule(n_points)?;
    let mesh = space_x.knots();
    let n = space_x.dim();
    let mut rows = Vec::new();
    for e in 0..mesh.n_elements() {
        let (a, b) = mesh.element_bounds(e);
        for (x, w) in rule.mapped(a, b) {
            let s = (w * c2(x)).sqrt();
            let mut r = vec![0.0; n + 1];
            for (i, d) in space_x.eval_on_element(e, x, 1).iter() {
                r[i] = s * d;
            }
            r[n] = s * w_x(x);
            rows.push(r);
        }
    }
    let m = rows.len();
    let a = Mat::from_fn(m, n, |i, j| rows[i][j]);
    let mut rhs = Mat::from_fn(m, 1, |i, _| rows[i][n]);
    let orig = rhs.clone();
    a.qr().solve_lstsq_in_place(rhs.as_mut());
    let z: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
    let res: f64 = (0..m)
        .map(|i| {
            let fit: f64 = (0..n).map(|j| a[(i, j)] * z[j]).sum();
            (orig[(i, 0)] - fit).powi(2)
        })
        .sum();
    Ok((z, res.sqrt()))
}

// ---------------------------------------------------------------------------
// inf-sup

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfSupEstimate {
    pub gamma_h: f64,
    pub lower_bound: f64,
    pub dims: (usize, usize),
}

pub const INFSUP_MAX_DOFS: usize = 2000;

fn block_diag(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    let (n, m) = (a.nrows(), b.nrows());
    Mat::from_fn(n + m, n + m, |i, j| match (i < n, j < n) {
        (true, true) => a[(i, j)],
        (false, false) => b[(i - n, j - n)],
        _ => 0.0,
    })
}

fn add(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)])
}

/// Trial and test Gram matrices X, Y of the discrete norms.
pub fn gram_matrices(sys: &BlockSystem) -> Result<(Mat<f64>, Mat<f64>)> {
    let ops = NormOperators::new(sys)?;
    let (t, s, mkm) = (&ops.time, &ops.space, &ops.sandwich);
    let xu = add(&kron_dense(&t.stiffness, &s.mass), &kron_dense(&t.mass, &s.stiffness));
    let xv = add(&kron_dense(&t.stiffness, mkm), &kron_dense(&t.mass, &s.mass));
    let yl = kron_dense(&t.stiffness, &s.mass);
    let yc = kron_dense(&t.stiffness, mkm);
    Ok((block_diag(&xu, &xv), block_diag(&yl, &yc)))
}

/// γ_h = σ_min(L_Y⁻¹ B L_X⁻ᵀ) with X = L_X L_Xᵀ, Y = L_Y L_Yᵀ.
pub fn estimate_infsup(
    problem: &ProblemSpec,
    space_x: &SplineSpace,
    space_t: &SplineSpace,
    n_points: Option<usize>,
) -> Result<InfSupEstimate> {
    let sys = assemble_with(problem, space_x, space_t, n_points)?;
    if sys.size() > INFSUP_MAX_DOFS {
        return Err(Error::InvalidSpace(format!(
            "{} unknowns exceed the dense inf-sup limit {INFSUP_MAX_DOFS}",
            sys.size()
        )));
    }
    let b = sys.dense_matrix();
    let (x, y) = gram_matrices(&sys)?;
    let lx = SpdFactor::new(&x, "trial Gram")
        .map_err(|e| Error::IndefiniteGram(e.to_string()))?
        .lower();
    let ly = SpdFactor::new(&y, "test Gram")
        .map_err(|e| Error::IndefiniteGram(e.to_string()))?
        .lower();
    // D = L_Y⁻¹ B, then E = L_X⁻¹ Dᵀ = (L_Y⁻¹ B L_X⁻ᵀ)ᵀ
    let mut d = b;
    ly.solve_lower_triangular_in_place(d.as_mut());
    let mut e = d.transpose().to_owned();
    lx.solve_lower_triangular_in_place(e.as_mut());
    let sv = e
        .singular_values()
        .map_err(|err| Error::Factorization(format!("svd: {err:?}")))?;
    let gamma_h = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(InfSupEstimate {
        gamma_h,
        lower_bound: problem.infsup_lower_bound(),
        dims: (sys.n_x, sys.n_t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{singular_case, smooth_case};
    use crate::splines::Constraint;
    use crate::system::solve;
    use std::f64::consts::PI;

    #[test]
    fn triangle_rule_integrates_polynomials() {
        let rule = gauss_rule(4).unwrap();
        let mut pts = Vec::new();
        triangle_points((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), &rule, &mut pts);
        let area: f64 = pts.iter().map(|p| p.2).sum();
        assert!((area - 0.5).abs() < 1e-15);
        let xy: f64 = pts.iter().map(|p| p.2 * p.0 * p.1).sum();
        assert!((xy - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn split_rectangle_keeps_area_and_integrates_piecewise() {
        let rule = gauss_rule(5).unwrap();
        let k = KinkLine {
            a: 1.0,
            b: -1.0,
            c: 0.2,
            dt_v_mass: 0.0,
        };
        let pts = element_points((0.0, 1.0), (0.0, 1.0), Some(k), &rule);
        let area: f64 = pts.iter().map(|p| p.2).sum();
        assert!((area - 1.0).abs() < 1e-14);
        // ∫ max(x − t + 0.2, 0)² over the unit square, by hand: region
        // s = x−t+0.2 > 0; the integral of s² equals 0.2336 (computed
        // below in closed form as ∫∫ over the polygon)
        let v: f64 = pts.iter().map(|p| p.2 * k.level(p.0, p.1).max(0.0).powi(2)).sum();
        let oracle = {
            // integrate over t: for each t the x-range is [max(0,t−0.2),1]
            let inner = |t: f64| {
                let lo = (t - 0.2f64).max(0.0);
                let s1 = 1.0 - t + 0.2;
                let s0 = lo - t + 0.2;
                (s1.powi(3) - s0.powi(3)) / 3.0
            };
            crate::quadrature::integrate(inner, &[0.0, 0.2, 1.0], 10).unwrap()
        };
        assert!((v - oracle).abs() < 1e-14, "{v} {oracle}");
    }

    #[test]
    fn eoc_of_halving_sequence() {
        let e = [1.0, 0.25, 0.0625];
        let r = eoc(&e);
        assert_eq!(r[0], None);
        assert!((r[1].unwrap() - 2.0).abs() < 1e-15);
        assert!((r[2].unwrap() - 2.0).abs() < 1e-15);
        let r = eoc_with_h(&e, &[1.0, 0.5, 0.25]);
        assert!((r[2].unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_problem_has_zero_errors() {
        let zero: crate::problems::FieldFn = std::sync::Arc::new(|_, _| 0.0);
        let f = crate::problems::SmoothField {
            u: zero.clone(),
            u_x: zero.clone(),
            u_t: zero.clone(),
            u_xx: zero.clone(),
            u_tt: zero.clone(),
            u_xt: zero,
        };
        let p = crate::problems::manufactured(
            "zero",
            f,
            std::sync::Arc::new(|_| 1.0),
            std::sync::Arc::new(|_| 0.0),
            1.0,
            (0.0, 1.0),
            1.0,
        )
        .unwrap()
        .spec;
        let sx = SplineSpace::uniform((0.0, 1.0), 4, 2, 1, Constraint::ZeroBoth).unwrap();
        let st = SplineSpace::uniform((0.0, 1.0), 4, 2, 1, Constraint::ZeroLeft).unwrap();
        let sol = solve(&p, &sx, &st).unwrap();
        let r = error_report(&sol, &p, None).unwrap().absolute;
        assert_eq!(r.err_veh, 0.0);
        assert_eq!(r.err_u_l2, 0.0);
    }

    #[test]
    fn norm_components_add_up() {
        for prob in [smooth_case(), singular_case()] {
            let p = prob.spec;
            let sx = SplineSpace::uniform(p.omega, 9, 2, 1, Constraint::ZeroBoth).unwrap();
            let st = SplineSpace::uniform((0.0, p.final_time), 6, 2, 1, Constraint::ZeroLeft).unwrap();
            let sol = solve(&p, &sx, &st).unwrap();
            let pair = error_report(&sol, &p, None).unwrap();
            for r in [pair.absolute, pair.relative()] {
                let sum = r.err_dt_u_l2e.powi(2)
                    + r.err_dt_v_neh.powi(2)
                    + r.err_cgrad_u_l2e.powi(2)
                    + r.err_v_l2e.powi(2);
                assert!((sum - r.err_veh.powi(2)).abs() <= 1e-13 * sum.max(1e-300));
                assert!(r.err_veh >= 0.0 && r.err_u_l2 >= 0.0 && r.err_v_l2 >= 0.0);
            }
        }
    }

    #[test]
    fn discrete_norm_matches_error_quadrature() {
        // the V_{e,h} norm of a discrete field via the Gram operators and via
        // quadrature of a problem whose exact solution is zero
        let p = smooth_case().spec;
        let sx = SplineSpace::uniform(p.omega, 5, 2, 1, Constraint::ZeroBoth).unwrap();
        let st = SplineSpace::uniform((0.0, 3.0), 4, 2, 1, Constraint::ZeroLeft).unwrap();
        let sys = assemble_with(&p, &sx, &st, Some(6)).unwrap();
        let z = sys.solve_coefficients().unwrap();
        let ops = NormOperators::new(&sys).unwrap();
        let gram = ops.veh_sq(&z);
        let mut zero = p.clone();
        let f0: crate::problems::FieldFn = std::sync::Arc::new(|_, _| 0.0);
        let s0: crate::problems::ScalarFn = std::sync::Arc::new(|_| 0.0);
        zero.exact = Some(crate::problems::ExactSolution {
            u: f0.clone(),
            u_dx: f0.clone(),
            u_dt: f0.clone(),
            v_dx: f0.clone(),
            v_dt: f0,
        });
        zero.u0 = s0.clone();
        zero.u0_dx = s0.clone();
        zero.v0 = s0.clone();
        zero.v0_dx = s0;
        let sol = DiscreteSolution::from_coefficients(sx, st, z, &zero);
        let quad = error_report(&sol, &zero, Some(6)).unwrap().absolute.err_veh.powi(2);
        assert!((gram - quad).abs() < 1e-11 * gram, "{gram} {quad}");
    }

    #[test]
    fn weighted_identity_on_examples() {
        let st = SplineSpace::uniform((0.0, 3.0), 5, 3, 2, Constraint::ZeroLeft).unwrap();
        let c: Vec<f64> = (0..st.dim()).map(|i| (i as f64 * 0.7).sin()).collect();
        assert!(weighted_identity_residual(&st, &c, 3.0).unwrap() < 1e-12);
    }

    #[test]
    fn time_projection_reproduces_trial_functions() {
        let st = SplineSpace::uniform((0.0, 3.0), 6, 2, 1, Constraint::ZeroLeft).unwrap();
        let c: Vec<f64> = (0..st.dim()).map(|i| 1.0 + i as f64).collect();
        let y = project_time(&st, 3.0, &|t| st.evaluate(&c, t, 1).unwrap(), 6).unwrap();
        for (a, b) in y.iter().zip(&c) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn space_projection_reproduces_and_best_approximates() {
        let sx = SplineSpace::uniform((0.0, 1.0), 7, 3, 2, Constraint::ZeroBoth).unwrap();
        let c2 = |x: f64| x + 1.0;
        let c: Vec<f64> = (0..sx.dim()).map(|i| (i as f64).cos()).collect();
        let z = project_space(&sx, &c2, &|x| sx.evaluate(&c, x, 1).unwrap(), 6).unwrap();
        for (a, b) in z.iter().zip(&c) {
            assert!((a - b).abs() < 1e-11);
        }
        let wx = |x: f64| PI * (PI * x).cos() + 3.0 * x * x;
        let z = project_space(&sx, &c2, &wx, 8).unwrap();
        let (zq, res) = space_best_approximation(&sx, &c2, &wx, 8).unwrap();
        let proj_err = crate::quadrature::integrate(
            |x| c2(x) * (sx.evaluate(&z, x, 1).unwrap() - wx(x)).powi(2),
            sx.breakpoints(),
            8,
        )
        .unwrap()
        .sqrt();
        assert!((proj_err - res).abs() < 1e-12, "{proj_err} {res}");
        for (a, b) in z.iter().zip(&zq) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn separable_fields_commute() {
        let sx = SplineSpace::uniform((0.0, 1.0), 6, 2, 1, Constraint::ZeroBoth).unwrap();
        let st = SplineSpace::uniform((0.0, 3.0), 5, 2, 1, Constraint::ZeroLeft).unwrap();
        let c2 = |x: f64| x + 1.0;
        let w_xt = |x: f64, t: f64| PI * (PI * x).cos() * (2.0 * t).cos() * 2.0;
        assert!(commutation_check(&sx, &st, &c2, 3.0, &w_xt, 6).unwrap() < 1e-12);
    }

    #[test]
    fn infsup_small_case() {
        let p = smooth_case().spec;
        let sx = SplineSpace::uniform(p.omega, 4, 1, 0, Constraint::ZeroBoth).unwrap();
        let st = SplineSpace::uniform((0.0, 3.0), 4, 1, 0, Constraint::ZeroLeft).unwrap();
        let est = estimate_infsup(&p, &sx, &st, None).unwrap();
        assert!(est.gamma_h >= est.lower_bound - 1e-10, "{est:?}");
        assert_eq!(est.dims, (3, 4));
    }
}
