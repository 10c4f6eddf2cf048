//! Discrete Newton potential N_h: for a load u, the z ∈ S_x with
//! (c² z', w') = (u, w) for all w ∈ S_x, and the dual norms built on it.

use faer::Mat;
use rayon::prelude::*;

use crate::error::Result;
use crate::forms::{SpaceFactors, Weight};
use crate::linalg::{dot, mat_vec, sandwich_inverse, SpdFactor};
use crate::quadrature::gauss_rule;
use crate::splines::{Basis, SplineSpace};
use crate::system::space_moments;

#[derive(Debug)]
pub struct NewtonSolver {
    space: SplineSpace,
    factors: SpaceFactors,
    stiffness: SpdFactor,
}

impl NewtonSolver {
    pub fn new(space_x: &SplineSpace, c2: &dyn Fn(f64) -> f64, n_points: Option<usize>) -> Result<Self> {
        let factors = SpaceFactors::new(space_x, c2, n_points)?;
        Self::from_factors(space_x, factors)
    }

    pub fn from_factors(space_x: &SplineSpace, factors: SpaceFactors) -> Result<Self> {
        let stiffness = SpdFactor::new(&factors.stiffness, "c^2-stiffness")?;
        Ok(Self {
            space: space_x.clone(),
            factors,
            stiffness,
        })
    }

    pub fn space(&self) -> &SplineSpace {
        &self.space
    }

    pub fn mass(&self) -> &Mat<f64> {
        &self.factors.mass
    }

    pub fn stiffness(&self) -> &Mat<f64> {
        &self.factors.stiffness
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.stiffness
    }

    /// z = K⁻¹ b for a given load vector b_a = (u, φ_a).
    pub fn apply_moments(&self, b: &[f64]) -> Vec<f64> {
        self.stiffness.solve(b)
    }

    /// N_h of a discrete u ∈ S_x: z = K⁻¹ M u.
    pub fn apply_coeffs(&self, u: &[f64]) -> Vec<f64> {
        self.apply_moments(&mat_vec(&self.factors.mass, u))
    }

    /// N_h of a function, moments by composite Gauss with `n_points`.
    pub fn apply_fn(&self, f: &dyn Fn(f64) -> f64, n_points: usize) -> Result<Vec<f64>> {
        Ok(self.apply_moments(&space_moments(&self.space, f, n_points)?))
    }

    /// ‖c ∇ N_h u‖² = bᵀ K⁻¹ b with b the load vector of u.
    pub fn dual_sq_from_moments(&self, b: &[f64]) -> f64 {
        dot(b, &self.apply_moments(b))
    }

    /// ‖u‖²_{N_h} = uᵀ M K⁻¹ M u for u ∈ S_x.
    pub fn norm_sq(&self, u: &[f64]) -> f64 {
        self.dual_sq_from_moments(&mat_vec(&self.factors.mass, u))
    }

    /// M K⁻¹ M.
    pub fn sandwich(&self) -> Mat<f64> {
        sandwich_inverse(&self.factors.mass, &self.stiffness)
    }

    /// (∫₀ᵀ ‖c∇N_h v(·,s)‖² e^{-s/T} ds)^{1/2}, where `moments(s)` returns
    /// the spatial load vector of v(·, s). Time integral by Gauss on the
    /// given breakpoints.
    pub fn seminorm_neh_with(
        &self,
        moments: &(dyn Fn(f64) -> Result<Vec<f64>> + Sync),
        time_breakpoints: &[f64],
        final_time: f64,
        n_points: usize,
    ) -> Result<f64> {
        let rule = gauss_rule(n_points)?;
        let weight = Weight::Exponential { final_time };
        let parts: Vec<Result<f64>> = time_breakpoints
            .par_windows(2)
            .map(|w| {
                let mut s = 0.0;
                for (t, wt) in rule.mapped(w[0], w[1]) {
                    let b = moments(t)?;
                    s += wt * weight.at(t) * self.dual_sq_from_moments(&b);
                }
                Ok(s)
            })
            .collect();
        let mut total = 0.0;
        for p in parts {
            total += p?;
        }
        Ok(total.max(0.0).sqrt())
    }

    /// Seminorm of a space–time function v(x, t).
    pub fn seminorm_neh(
        &self,
        v: &(dyn Fn(f64, f64) -> f64 + Sync),
        time_breakpoints: &[f64],
        final_time: f64,
        n_points: usize,
    ) -> Result<f64> {
        let moments = |t: f64| space_moments(&self.space, &|x| v(x, t), n_points);
        self.seminorm_neh_with(&moments, time_breakpoints, final_time, n_points)
    }

    /// Seminorm of D_t^{d_t} w for w = Σ w_{ab} φ_a θ_b ∈ S_x ⊗ S_t, by
    /// evaluating w(·, s) at the time quadrature nodes.
    pub fn seminorm_neh_discrete(
        &self,
        w: &[f64],
        space_t: &SplineSpace,
        d_t: usize,
        final_time: f64,
        n_points: usize,
    ) -> Result<f64> {
        let n_x = self.space.dim();
        let mesh_t = space_t.knots();
        let moments = |t: f64| -> Result<Vec<f64>> {
            let e = mesh_t.element_of(t);
            let bt = space_t.eval_on_element(e, t, d_t);
            let mut col = vec![0.0; n_x];
            for (b, v) in bt.iter() {
                for (c, wv) in col.iter_mut().zip(&w[b * n_x..(b + 1) * n_x]) {
                    *c += v * wv;
                }
            }
            Ok(mat_vec(&self.factors.mass, &col))
        };
        self.seminorm_neh_with(&moments, space_t.breakpoints(), final_time, n_points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::time_form;
    use crate::splines::Constraint;
    use crate::system::tensor_form;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn zero_load() {
        let s = SplineSpace::uniform((0.0, 1.0), 8, 2, 1, Constraint::ZeroBoth).unwrap();
        let n = NewtonSolver::new(&s, &|_| 1.0, None).unwrap();
        assert!(n.apply_coeffs(&vec![0.0; s.dim()]).iter().all(|&v| v == 0.0));
        assert_eq!(n.norm_sq(&vec![0.0; s.dim()]), 0.0);
    }

    #[test]
    fn converges_to_poisson_solution() {
        // −z'' = sin(πx) on (0,1) ⇒ z = sin(πx)/π²
        let s = SplineSpace::uniform((0.0, 1.0), 64, 2, 1, Constraint::ZeroBoth).unwrap();
        let n = NewtonSolver::new(&s, &|_| 1.0, None).unwrap();
        let z = n.apply_fn(&|x| (PI * x).sin(), 6).unwrap();
        let err = crate::quadrature::integrate(
            |x| {
                let zh = s.evaluate(&z, x, 0).unwrap();
                (zh - (PI * x).sin() / (PI * PI)).powi(2)
            },
            s.breakpoints(),
            6,
        )
        .unwrap()
        .sqrt();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn self_adjoint_and_positive() {
        let s = SplineSpace::uniform((0.0, 1.0), 10, 3, 2, Constraint::ZeroBoth).unwrap();
        let n = NewtonSolver::new(&s, &|x| x + 1.0, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let u: Vec<f64> = (0..s.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..s.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // (N u, w) = (u, N w)
            let lhs = dot(&mat_vec(n.mass(), &n.apply_coeffs(&u)), &w);
            let rhs = dot(&u, &mat_vec(n.mass(), &n.apply_coeffs(&w)));
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
            assert!(n.norm_sq(&u) > 0.0);
        }
    }

    #[test]
    fn two_routes_for_discrete_seminorm() {
        let t_final = 3.0;
        let sx = SplineSpace::uniform((0.0, 1.0), 6, 2, 1, Constraint::ZeroBoth).unwrap();
        let st = SplineSpace::uniform((0.0, t_final), 5, 3, 2, Constraint::ZeroLeft).unwrap();
        let n = NewtonSolver::new(&sx, &|x| x + 1.0, None).unwrap();
        let mkm = n.sandwich();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w: Vec<f64> = (0..sx.dim() * st.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for d in 0..=1 {
            let tm = time_form(&st, &st, d, d, t_final, None).unwrap().matrix;
            let closed = tensor_form(&tm, &mkm, &w, &w);
            let nodal = n.seminorm_neh_discrete(&w, &st, d, t_final, 5).unwrap().powi(2);
            assert!((closed - nodal).abs() < 1e-11 * closed.max(1.0), "{closed} {nodal}");
        }
    }
}
