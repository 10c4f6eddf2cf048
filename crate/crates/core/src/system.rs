//! The square space–time Petrov–Galerkin system and its solution.
//!
//! Unknowns are the shifted fields (U − U0, V − V0) in S_x ⊗ S_t, where
//! S_x vanishes on ∂Ω and S_t vanishes at t = 0. Test functions are
//! φ_a(x) ∂_tφ_b(t) for both equations. Ordering: U block, then V block,
//! each with the space index running fastest.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{SpaceFactors, TimeFactors, Weight};
use crate::linalg::{dot, kron_apply, norm2};
use crate::problems::{ProblemSpec, ScalarFn};
use crate::quadrature::gauss_rule;
use crate::splines::{test_space_of, Basis, BasisEval, Constraint, SplineSpace};

/// Relative residual the direct solve must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub n_x: usize,
    pub n_t: usize,
    pub space_x: SplineSpace,
    pub space_t: SplineSpace,
    pub final_time: f64,
    pub space: SpaceFactors,
    pub time: TimeFactors,
    pub rhs: Vec<f64>,
}

fn check_spaces(space_x: &SplineSpace, space_t: &SplineSpace, problem: &ProblemSpec) -> Result<()> {
    if space_x.constraint() != Constraint::ZeroBoth {
        return Err(Error::InvalidSpace("space trial space must vanish at both ends".into()));
    }
    if space_t.constraint() != Constraint::ZeroLeft {
        return Err(Error::InvalidSpace("time trial space must vanish at t = 0".into()));
    }
    let (a, b) = space_x.interval();
    if (a - problem.omega.0).abs() > 1e-14 || (b - problem.omega.1).abs() > 1e-14 {
        return Err(Error::InvalidSpace(format!(
            "space mesh ({a}, {b}) does not cover Omega {:?}",
            problem.omega
        )));
    }
    let (t0, t1) = space_t.interval();
    if t0 != 0.0 || t1 != problem.final_time {
        return Err(Error::InvalidSpace(format!(
            "time mesh ({t0}, {t1}) is not (0, {})",
            problem.final_time
        )));
    }
    Ok(())
}

/// Assembles with the default number of Gauss points.
pub fn assemble(problem: &ProblemSpec, space_x: &SplineSpace, space_t: &SplineSpace) -> Result<BlockSystem> {
    assemble_with(problem, space_x, space_t, None)
}

pub fn assemble_with(
    problem: &ProblemSpec,
    space_x: &SplineSpace,
    space_t: &SplineSpace,
    n_points: Option<usize>,
) -> Result<BlockSystem> {
    check_spaces(space_x, space_t, problem)?;
    let c2 = problem.c2.clone();
    let space = SpaceFactors::new(space_x, &*c2, n_points)?;
    let time = TimeFactors::new(space_t, problem.final_time, n_points)?;
    let rhs = load_vector(problem, space_x, space_t, &time.test_moments, n_points)?;
    Ok(BlockSystem {
        n_x: space_x.dim(),
        n_t: space_t.dim(),
        space_x: space_x.clone(),
        space_t: space_t.clone(),
        final_time: problem.final_time,
        space,
        time,
        rhs,
    })
}

fn points_for(space_x: &SplineSpace, space_t: &SplineSpace, n_points: Option<usize>) -> usize {
    n_points.unwrap_or(space_x.degree().max(space_t.degree()) + 2)
}

/// Space moments ∫ f φ_a over Ω.
pub fn space_moments(space_x: &SplineSpace, f: &dyn Fn(f64) -> f64, n_points: usize) -> Result<Vec<f64>> {
    space_moments_deriv(space_x, f, 0, n_points)
}

/// ∫ f D^d φ_a over Ω.
pub fn space_moments_deriv(
    space_x: &SplineSpace,
    f: &dyn Fn(f64) -> f64,
    d: usize,
    n_points: usize,
) -> Result<Vec<f64>> {
    split_moments(space_x, f, d, n_points, None)
}

/// As [`space_moments_deriv`], splitting the element that contains `cut`.
pub fn split_moments(
    space_x: &SplineSpace,
    f: &dyn Fn(f64) -> f64,
    d: usize,
    n_points: usize,
    cut: Option<f64>,
) -> Result<Vec<f64>> {
    let rule = gauss_rule(n_points)?;
    let mesh = space_x.knots();
    let mut out = vec![0.0; space_x.dim()];
    for e in 0..mesh.n_elements() {
        let (a, b) = mesh.element_bounds(e);
        let pts: Vec<(f64, f64)> = match cut {
            Some(c) if c > a + 1e-12 * (b - a) && c < b - 1e-12 * (b - a) => {
                rule.mapped(a, c).chain(rule.mapped(c, b)).collect()
            }
            _ => rule.mapped(a, b).collect(),
        };
        for (x, w) in pts {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::Integration { node: x });
            }
            for (i, phi) in space_x.eval_on_element(e, x, d).iter() {
                out[i] += w * v * phi;
            }
        }
    }
    Ok(out)
}

fn load_vector(
    problem: &ProblemSpec,
    space_x: &SplineSpace,
    space_t: &SplineSpace,
    test_moments: &[f64],
    n_points: Option<usize>,
) -> Result<Vec<f64>> {
    let (n_x, n_t) = (space_x.dim(), space_t.dim());
    let n = n_x * n_t;
    let q = points_for(space_x, space_t, n_points);
    let test_t = test_space_of(space_t)?;
    let rule = gauss_rule(q)?;
    let weight = Weight::Exponential {
        final_time: problem.final_time,
    };

    // (F, φ_a ∂_tφ_b)_e, one partial vector per time element, summed in order
    let mesh_t = space_t.knots();
    let mesh_x = space_x.knots();
    let kink = problem.kink;
    let partials: Vec<Result<Vec<f64>>> = (0..mesh_t.n_elements())
        .into_par_iter()
        .map(|et| {
            let mut part = vec![0.0; n];
            let tb = mesh_t.element_bounds(et);
            for ex in 0..mesh_x.n_elements() {
                let xb = mesh_x.element_bounds(ex);
                for (x, t, w) in crate::analysis::element_points(xb, tb, kink, &rule) {
                    let f = (problem.forcing)(x, t);
                    if !f.is_finite() {
                        return Err(Error::Integration { node: x });
                    }
                    if f == 0.0 {
                        continue;
                    }
                    let psi = test_t.eval_on_element(et, t, 0);
                    let phi = space_x.eval_on_element(ex, x, 0);
                    let s = w * weight.at(t) * f;
                    for (b, pb) in psi.iter() {
                        for (a, pa) in phi.iter() {
                            part[b * n_x + a] += s * pb * pa;
                        }
                    }
                }
            }
            Ok(part)
        })
        .collect();
    let mut lam = vec![0.0; n];
    for p in partials {
        for (l, v) in lam.iter_mut().zip(p?) {
            *l += v;
        }
    }

    let c2 = problem.c2.clone();
    let u0_dx = problem.u0_dx.clone();
    // initial data may be rough where the kink meets t = 0
    let cut = kink.and_then(|k| k.crossing_at(0.0));
    let flux = split_moments(space_x, &|x| c2(x) * u0_dx(x), 1, q, cut)?;
    let v0 = split_moments(space_x, &*problem.v0, 0, q, cut)?;
    let mut rhs = vec![0.0; 2 * n];
    for b in 0..n_t {
        for a in 0..n_x {
            let k = b * n_x + a;
            rhs[k] = lam[k] - flux[a] * test_moments[b];
            rhs[n + k] = -v0[a] * test_moments[b];
        }
    }
    Ok(rhs)
}

fn nonzeros(m: &Mat<f64>) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

impl BlockSystem {
    pub fn size(&self) -> usize {
        2 * self.n_x * self.n_t
    }

    /// Triplets of the expanded 2×2 block matrix.
    pub fn triplets(&self) -> Vec<Triplet<usize, usize, f64>> {
        let n = self.n_x * self.n_t;
        let nx = self.n_x;
        let kx = nonzeros(&self.space.stiffness);
        let mx = nonzeros(&self.space.mass);
        let se = nonzeros(&self.time.stiffness);
        let tc = nonzeros(&self.time.cross);
        let mut out = Vec::with_capacity(2 * (kx.len() + mx.len()) * (se.len() + tc.len()));
        let mut push = |time: &[(usize, usize, f64)], space: &[(usize, usize, f64)], r0: usize, c0: usize, sign: f64| {
            for &(b, l, tv) in time {
                for &(a, j, sv) in space {
                    out.push(Triplet::new(r0 + b * nx + a, c0 + l * nx + j, sign * tv * sv));
                }
            }
        };
        push(&tc, &kx, 0, 0, 1.0);
        push(&se, &mx, 0, n, 1.0);
        push(&se, &mx, n, 0, -1.0);
        push(&tc, &mx, n, n, 1.0);
        out
    }

    pub fn sparse_matrix(&self) -> Result<SparseColMat<usize, f64>> {
        let n = self.size();
        SparseColMat::try_new_from_triplets(n, n, &self.triplets())
            .map_err(|e| Error::SingularSystem(format!("sparse assembly: {e:?}")))
    }

    /// Dense expansion, for small systems.
    pub fn dense_matrix(&self) -> Mat<f64> {
        let n = self.size();
        let mut m = Mat::<f64>::zeros(n, n);
        for t in self.triplets() {
            m[(t.row, t.col)] += t.val;
        }
        m
    }

    /// B z using the Kronecker factors directly (no expanded matrix).
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n_x * self.n_t;
        let (u, v) = z.split_at(n);
        let (sx, tf) = (&self.space, &self.time);
        let r1a = kron_apply(&tf.cross, &sx.stiffness, u);
        let r1b = kron_apply(&tf.stiffness, &sx.mass, v);
        let r2a = kron_apply(&tf.stiffness, &sx.mass, u);
        let r2b = kron_apply(&tf.cross, &sx.mass, v);
        let mut out = Vec::with_capacity(2 * n);
        out.extend(r1a.iter().zip(&r1b).map(|(a, b)| a + b));
        out.extend(r2a.iter().zip(&r2b).map(|(a, b)| b - a));
        out
    }

    /// ‖B z − rhs‖ / ‖rhs‖, or the absolute residual when rhs = 0.
    pub fn relative_residual(&self, z: &[f64]) -> f64 {
        let r: Vec<f64> = self.apply(z).iter().zip(&self.rhs).map(|(a, b)| a - b).collect();
        let nr = norm2(&self.rhs);
        if nr == 0.0 {
            norm2(&r)
        } else {
            norm2(&r) / nr
        }
    }

    /// Sparse LU of the expanded matrix, with a few steps of iterative
    /// refinement if the first solve misses the residual contract.
    pub fn solve_coefficients(&self) -> Result<Vec<f64>> {
        let n = self.size();
        if norm2(&self.rhs) == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let a = self.sparse_matrix()?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::SingularSystem(format!("sparse LU: {e:?}")))?;
        let solve = |b: &[f64]| -> Vec<f64> {
            let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
            let x = lu.solve(&rhs);
            (0..n).map(|i| x[(i, 0)]).collect()
        };
        let mut z = solve(&self.rhs);
        for _ in 0..3 {
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::SingularSystem("non-finite solution".into()));
            }
            if self.relative_residual(&z) < 1e-13 {
                break;
            }
            let r: Vec<f64> = self.rhs.iter().zip(self.apply(&z)).map(|(b, az)| b - az).collect();
            let dz = solve(&r);
            for (zi, d) in z.iter_mut().zip(dz) {
                *zi += d;
            }
        }
        let res = self.relative_residual(&z);
        if !(res < RESIDUAL_TOL) {
            return Err(Error::SingularSystem(format!("relative residual {res:e}")));
        }
        Ok(z)
    }

    pub fn solve(&self, problem: &ProblemSpec) -> Result<DiscreteSolution> {
        let z = self.solve_coefficients()?;
        Ok(DiscreteSolution::from_coefficients(self.space_x.clone(), self.space_t.clone(), z, problem))
    }

    /// max over test functions of |A(z, test) − rhs(test)| relative to ‖rhs‖_∞
    /// (absolute when the load vanishes).
    pub fn galerkin_residual(&self, z: &[f64]) -> f64 {
        let bz = self.apply(z);
        let scale = self.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = bz.iter().zip(&self.rhs).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if scale == 0.0 {
            worst
        } else {
            worst / scale
        }
    }
}

/// Shift data (U0, V0) restored on evaluation.
#[derive(Clone)]
pub struct Shift {
    pub u0: ScalarFn,
    pub u0_dx: ScalarFn,
    pub v0: ScalarFn,
    pub v0_dx: ScalarFn,
}

impl Shift {
    pub fn of(problem: &ProblemSpec) -> Self {
        Self {
            u0: problem.u0.clone(),
            u0_dx: problem.u0_dx.clone(),
            v0: problem.v0.clone(),
            v0_dx: problem.v0_dx.clone(),
        }
    }
}

/// Computed (U_h, V_h). Coefficients are those of the shifted unknowns.
#[derive(Clone)]
pub struct DiscreteSolution {
    pub space_x: SplineSpace,
    pub space_t: SplineSpace,
    pub u_coeffs: Vec<f64>,
    pub v_coeffs: Vec<f64>,
    pub shift: Shift,
}

impl std::fmt::Debug for DiscreteSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteSolution")
            .field("n_x", &self.space_x.dim())
            .field("n_t", &self.space_t.dim())
            .finish()
    }
}

impl DiscreteSolution {
    pub fn from_coefficients(space_x: SplineSpace, space_t: SplineSpace, z: Vec<f64>, problem: &ProblemSpec) -> Self {
        let n = space_x.dim() * space_t.dim();
        assert_eq!(z.len(), 2 * n, "coefficient vector has the wrong length");
        let mut u = z;
        let v = u.split_off(n);
        Self {
            space_x,
            space_t,
            u_coeffs: u,
            v_coeffs: v,
            shift: Shift::of(problem),
        }
    }

    pub fn n_x(&self) -> usize {
        self.space_x.dim()
    }

    pub fn n_t(&self) -> usize {
        self.space_t.dim()
    }

    /// Both blocks concatenated, U first.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut z = self.u_coeffs.clone();
        z.extend_from_slice(&self.v_coeffs);
        z
    }

    /// Discrete part only, from pre-evaluated bases.
    pub fn combine(coeffs: &[f64], n_x: usize, bx: &BasisEval, bt: &BasisEval) -> f64 {
        let mut s = 0.0;
        for (b, tv) in bt.iter() {
            let row = &coeffs[b * n_x..(b + 1) * n_x];
            let mut inner = 0.0;
            for (a, xv) in bx.iter() {
                inner += row[a] * xv;
            }
            s += tv * inner;
        }
        s
    }

    /// (D^{d_x}_x D^{d_t}_t U_h, same for V_h) at (x, t), shift included.
    pub fn evaluate(&self, x: f64, t: f64, d_x: usize, d_t: usize) -> Result<(f64, f64)> {
        if d_x + d_t > 1 {
            return Err(Error::InvalidSpace(format!(
                "derivative orders ({d_x}, {d_t}) not supported"
            )));
        }
        let bx = self.space_x.eval(x, d_x)?;
        let bt = self.space_t.eval(t, d_t)?;
        let n_x = self.n_x();
        let mut u = Self::combine(&self.u_coeffs, n_x, &bx, &bt);
        let mut v = Self::combine(&self.v_coeffs, n_x, &bx, &bt);
        if d_t == 0 {
            if d_x == 0 {
                u += (self.shift.u0)(x);
                v += (self.shift.v0)(x);
            } else {
                u += (self.shift.u0_dx)(x);
                v += (self.shift.v0_dx)(x);
            }
        }
        Ok((u, v))
    }
}

/// Solves the problem on the given spaces.
pub fn solve(problem: &ProblemSpec, space_x: &SplineSpace, space_t: &SplineSpace) -> Result<DiscreteSolution> {
    assemble(problem, space_x, space_t)?.solve(problem)
}

/// Weighted inner product of two coefficient blocks in S_x ⊗ S_t, given
/// the space and time matrices; used by tests and norms.
pub fn tensor_form(time: &Mat<f64>, space: &Mat<f64>, a: &[f64], b: &[f64]) -> f64 {
    dot(a, &kron_apply(time, space, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{singular_case, smooth_case};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn spaces(p: &ProblemSpec, nx: usize, nt: usize, deg: usize, reg: usize) -> (SplineSpace, SplineSpace) {
        (
            SplineSpace::uniform(p.omega, nx, deg, reg, Constraint::ZeroBoth).unwrap(),
            SplineSpace::uniform((0.0, p.final_time), nt, deg, reg, Constraint::ZeroLeft).unwrap(),
        )
    }

    fn homogeneous() -> ProblemSpec {
        let mut p = smooth_case().spec;
        p.forcing = Arc::new(|_, _| 0.0);
        p.u0 = Arc::new(|_| 0.0);
        p.u0_dx = Arc::new(|_| 0.0);
        p.v0 = Arc::new(|_| 0.0);
        p.v0_dx = Arc::new(|_| 0.0);
        p.exact = None;
        p
    }

    #[test]
    fn sizes_are_square() {
        let p = smooth_case().spec;
        // n_x = 3, n_t = 4 with hats: 4 space elements, 4 time elements
        let (sx, st) = spaces(&p, 4, 4, 1, 0);
        let sys = assemble(&p, &sx, &st).unwrap();
        assert_eq!((sys.n_x, sys.n_t), (3, 4));
        assert_eq!(sys.size(), 24);
        let m = sys.dense_matrix();
        assert_eq!((m.nrows(), m.ncols()), (24, 24));
    }

    #[test]
    fn wrong_constraints_rejected() {
        let p = smooth_case().spec;
        let sx = SplineSpace::uniform(p.omega, 4, 2, 1, Constraint::ZeroLeft).unwrap();
        let st = SplineSpace::uniform((0.0, 3.0), 4, 2, 1, Constraint::ZeroLeft).unwrap();
        assert!(matches!(assemble(&p, &sx, &st), Err(Error::InvalidSpace(_))));
        let sx = SplineSpace::uniform(p.omega, 4, 2, 1, Constraint::ZeroBoth).unwrap();
        let st = SplineSpace::uniform((0.0, 3.0), 4, 2, 1, Constraint::ZeroBoth).unwrap();
        assert!(matches!(assemble(&p, &sx, &st), Err(Error::InvalidSpace(_))));
    }

    #[test]
    fn homogeneous_problem_gives_zero() {
        let p = homogeneous();
        let (sx, st) = spaces(&p, 4, 6, 2, 1);
        let sys = assemble(&p, &sx, &st).unwrap();
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
        let sol = sys.solve(&p).unwrap();
        assert!(sol.coefficients().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn expanded_matrix_matches_kronecker_apply() {
        let p = smooth_case().spec;
        let (sx, st) = spaces(&p, 5, 4, 3, 1);
        let sys = assemble(&p, &sx, &st).unwrap();
        let m = sys.dense_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..sys.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dense = crate::linalg::mat_vec(&m, &z);
        for (a, b) in dense.iter().zip(sys.apply(&z)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flux_term_of_smooth_rhs() {
        // with F and V0 switched off, row λ is −(c² U0', φ_a') ∫∂_tφ_b e
        let mut p = smooth_case().spec;
        p.forcing = Arc::new(|_, _| 0.0);
        let (sx, st) = spaces(&p, 4, 3, 2, 1);
        let sys = assemble_with(&p, &sx, &st, Some(10)).unwrap();
        let n = sys.n_x * sys.n_t;
        // space factor recomputed on a 64x finer mesh
        let fine: Vec<f64> = (0..=256).map(|i| i as f64 / 256.0).collect();
        let pi = std::f64::consts::PI;
        for a in 0..sys.n_x {
            let g = |x: f64| {
                let d = sx.eval(x, 1).unwrap();
                let phi = d.iter().find(|(i, _)| *i == a).map(|(_, v)| v).unwrap_or(0.0);
                (x + 1.0) * pi * (pi * x).cos() * phi
            };
            let s = crate::quadrature::integrate(g, &fine, 8).unwrap();
            for b in 0..sys.n_t {
                let expect = -s * sys.time.test_moments[b];
                assert!((sys.rhs[b * sys.n_x + a] - expect).abs() < 1e-12, "{a},{b}: {} vs {expect}", sys.rhs[b * sys.n_x + a]);
                assert_eq!(sys.rhs[n + b * sys.n_x + a], 0.0);
            }
        }
    }

    #[test]
    fn solve_meets_residual_and_orthogonality() {
        for prob in [smooth_case(), singular_case()] {
            let p = prob.spec;
            let (sx, st) = spaces(&p, 12, 8, 2, 1);
            let sys = assemble(&p, &sx, &st).unwrap();
            let z = sys.solve_coefficients().unwrap();
            assert!(sys.relative_residual(&z) < RESIDUAL_TOL);
            assert!(sys.galerkin_residual(&z) < 1e-9);
        }
    }

    #[test]
    fn evaluation_restores_shift() {
        let p = smooth_case().spec;
        let (sx, st) = spaces(&p, 8, 8, 2, 1);
        let sol = solve(&p, &sx, &st).unwrap();
        for &x in &[0.0, 0.1, 0.5, 0.9] {
            let (u, v) = sol.evaluate(x, 0.0, 0, 0).unwrap();
            assert!((u - (p.u0)(x)).abs() < 1e-15);
            assert!((v - (p.v0)(x)).abs() < 1e-15);
        }
        for &t in &[0.0, 1.3, 3.0] {
            for &x in &[0.0, 1.0] {
                let (u, v) = sol.evaluate(x, t, 0, 0).unwrap();
                assert!((u - (p.u0)(x)).abs() < 1e-15);
                assert!((v - (p.v0)(x)).abs() < 1e-15);
            }
        }
        assert!(sol.evaluate(1.5, 0.0, 0, 0).is_err());
        assert!(sol.evaluate(0.5, 3.5, 0, 0).is_err());
    }

    #[test]
    fn time_derivative_matches_finite_differences() {
        let p = smooth_case().spec;
        let (sx, st) = spaces(&p, 6, 6, 3, 2);
        let sol = solve(&p, &sx, &st).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for _ in 0..30 {
            let x = rng.gen_range(0.0..1.0);
            let t = rng.gen_range(0.01..2.99);
            let (du, dv) = sol.evaluate(x, t, 0, 1).unwrap();
            let (up, vp) = sol.evaluate(x, t + h, 0, 0).unwrap();
            let (um, vm) = sol.evaluate(x, t - h, 0, 0).unwrap();
            let fu = (up - um) / (2.0 * h);
            let fv = (vp - vm) / (2.0 * h);
            assert!((fu - du).abs() <= 1e-6 * du.abs().max(1.0));
            assert!((fv - dv).abs() <= 1e-6 * dv.abs().max(1.0));
        }
    }
}
