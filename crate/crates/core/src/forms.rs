//! Univariate mass/stiffness-type matrices.
//!
//! Time matrices carry the weight e^{-t/T}; space matrices carry a
//! coefficient such as c²(x). These are the Kronecker factors of the
//! space–time system and of every discrete norm.

use faer::Mat;

use crate::error::{Error, Result};
use crate::quadrature::gauss_rule;
use crate::splines::Basis;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    /// e^{-t/T}
    Exponential { final_time: f64 },
    One,
}

impl Weight {
    #[inline]
    pub fn at(self, t: f64) -> f64 {
        match self {
            Weight::Exponential { final_time } => (-t / final_time).exp(),
            Weight::One => 1.0,
        }
    }
}

/// Matrix with entries ∫ coeff · D^{d_test}ψ_i · D^{d_trial}φ_j · weight.
/// Rows index test functions, columns trial functions.
#[derive(Debug, Clone)]
pub struct UnivariateForm {
    pub matrix: Mat<f64>,
    pub d_trial: usize,
    pub d_test: usize,
    pub weight: Weight,
}

impl UnivariateForm {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Gauss points per element used when the caller does not override it.
pub fn default_points(trial: &dyn Basis, test: &dyn Basis) -> usize {
    trial.mesh().degree().max(test.mesh().degree()) + 2
}

fn same_mesh(trial: &dyn Basis, test: &dyn Basis) -> bool {
    trial.mesh().breakpoints() == test.mesh().breakpoints()
}

/// General element-by-element assembly.
pub fn assemble_form(
    trial: &dyn Basis,
    test: &dyn Basis,
    d_trial: usize,
    d_test: usize,
    weight: Weight,
    coefficient: &dyn Fn(f64) -> f64,
    n_points: Option<usize>,
) -> Result<UnivariateForm> {
    if !same_mesh(trial, test) {
        return Err(Error::DomainMismatch);
    }
    let n_points = n_points.unwrap_or_else(|| default_points(trial, test));
    let rule = gauss_rule(n_points)?;
    let mesh = trial.mesh();
    let mut matrix = Mat::<f64>::zeros(test.dim(), trial.dim());
    for e in 0..mesh.n_elements() {
        let (a, b) = mesh.element_bounds(e);
        for (x, w) in rule.mapped(a, b) {
            let c = coefficient(x);
            if !c.is_finite() {
                return Err(Error::Assembly { node: x });
            }
            let scale = w * c * weight.at(x);
            let phi = trial.eval_on_element(e, x, d_trial);
            let psi = test.eval_on_element(e, x, d_test);
            for (i, vi) in psi.iter() {
                let s = scale * vi;
                for (j, vj) in phi.iter() {
                    matrix[(i, j)] += s * vj;
                }
            }
        }
    }
    Ok(UnivariateForm {
        matrix,
        d_trial,
        d_test,
        weight,
    })
}

/// Time matrix with weight e^{-t/T}; both spaces must live on (0, T).
pub fn assemble_time_matrix(
    trial: &dyn Basis,
    test: &dyn Basis,
    d_trial: usize,
    d_test: usize,
    final_time: f64,
) -> Result<UnivariateForm> {
    time_form(trial, test, d_trial, d_test, final_time, None)
}

/// As [`assemble_time_matrix`] with an explicit number of Gauss points.
pub fn time_form(
    trial: &dyn Basis,
    test: &dyn Basis,
    d_trial: usize,
    d_test: usize,
    final_time: f64,
    n_points: Option<usize>,
) -> Result<UnivariateForm> {
    for s in [trial, test] {
        let (a, b) = s.mesh().interval();
        if a != 0.0 || b != final_time {
            return Err(Error::DomainMismatch);
        }
    }
    assemble_form(
        trial,
        test,
        d_trial,
        d_test,
        Weight::Exponential { final_time },
        &|_| 1.0,
        n_points,
    )
}

/// Unweighted space matrix with coefficient (c² for stiffness, 1 for mass).
pub fn assemble_space_matrix(
    trial: &dyn Basis,
    test: &dyn Basis,
    d_trial: usize,
    d_test: usize,
    coefficient: &dyn Fn(f64) -> f64,
) -> Result<UnivariateForm> {
    assemble_form(trial, test, d_trial, d_test, Weight::One, coefficient, None)
}

/// The univariate factors shared by assembly, norms and projectors.
#[derive(Debug, Clone)]
pub struct TimeFactors {
    /// ∫ φ_j φ_i e^{-t/T}
    pub mass: Mat<f64>,
    /// ∫ φ'_j φ'_i e^{-t/T}
    pub stiffness: Mat<f64>,
    /// ∫ φ_j φ'_i e^{-t/T}  (row = test ∂_tφ_i, column = trial φ_j)
    pub cross: Mat<f64>,
    /// ∫ φ'_i e^{-t/T}
    pub test_moments: Vec<f64>,
}

impl TimeFactors {
    pub fn new(
        space_t: &crate::splines::SplineSpace,
        final_time: f64,
        n_points: Option<usize>,
    ) -> Result<Self> {
        let test = crate::splines::test_space_of(space_t)?;
        let mass = time_form(space_t, space_t, 0, 0, final_time, n_points)?.matrix;
        let stiffness = time_form(space_t, space_t, 1, 1, final_time, n_points)?.matrix;
        let cross = time_form(space_t, &test, 0, 0, final_time, n_points)?.matrix;
        let n = n_points.unwrap_or_else(|| default_points(space_t, &test));
        let weight = Weight::Exponential { final_time };
        let mut test_moments = vec![0.0; test.dim()];
        let rule = gauss_rule(n)?;
        let mesh = space_t.knots();
        for e in 0..mesh.n_elements() {
            let (a, b) = mesh.element_bounds(e);
            for (t, w) in rule.mapped(a, b) {
                for (i, v) in test.eval_on_element(e, t, 0).iter() {
                    test_moments[i] += w * weight.at(t) * v;
                }
            }
        }
        Ok(Self {
            mass,
            stiffness,
            cross,
            test_moments,
        })
    }
}

/// Space mass M_x and c²-stiffness K_x on a constrained space.
#[derive(Debug, Clone)]
pub struct SpaceFactors {
    pub mass: Mat<f64>,
    pub stiffness: Mat<f64>,
}

impl SpaceFactors {
    pub fn new(
        space_x: &crate::splines::SplineSpace,
        c2: &dyn Fn(f64) -> f64,
        n_points: Option<usize>,
    ) -> Result<Self> {
        let one = |_: f64| 1.0;
        Ok(Self {
            mass: assemble_form(space_x, space_x, 0, 0, Weight::One, &one, n_points)?.matrix,
            stiffness: assemble_form(space_x, space_x, 1, 1, Weight::One, c2, n_points)?.matrix,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splines::{test_space_of, Constraint, KnotVector, SplineSpace};

    #[test]
    fn single_constant_element() {
        let t = 3.0;
        let kv = KnotVector::new(vec![0.0, t], 0, 1).unwrap();
        let s = SplineSpace::new(kv, Constraint::None).unwrap();
        let m = time_form(&s, &s, 0, 0, t, Some(10)).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (1, 1));
        let expect = t * (1.0 - (-1f64).exp());
        assert!((m.matrix[(0, 0)] - expect).abs() < 1e-13);
    }

    #[test]
    fn weighted_time_matrices_are_symmetric() {
        let s = SplineSpace::uniform((0.0, 3.0), 7, 3, 1, Constraint::ZeroLeft).unwrap();
        for d in 0..=2 {
            let m = assemble_time_matrix(&s, &s, d, d, 3.0).unwrap().matrix;
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    assert!((m[(i, j)] - m[(j, i)]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn identity_for_linear_function() {
        // w(t) = t on (0, 1) in a degree-1 zero-left space
        let s = SplineSpace::uniform((0.0, 1.0), 4, 1, 0, Constraint::ZeroLeft).unwrap();
        let test = test_space_of(&s).unwrap();
        let cross = time_form(&s, &test, 0, 0, 1.0, Some(10)).unwrap().matrix;
        let v: Vec<f64> = (1..=4).map(|i| i as f64 * 0.25).collect();
        let mut q = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                q += v[i] * cross[(i, j)] * v[j];
            }
        }
        let expect = 1.0 - 2.0 * (-1f64).exp();
        assert!((q - expect).abs() < 1e-13, "{q} vs {expect}");
    }

    #[test]
    fn hat_stiffness_is_tridiagonal() {
        let n = 8;
        let h = 1.0 / n as f64;
        let s = SplineSpace::uniform((0.0, 1.0), n, 1, 0, Constraint::ZeroBoth).unwrap();
        let k = assemble_space_matrix(&s, &s, 1, 1, &|_| 1.0).unwrap().matrix;
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                let expect = match i.abs_diff(j) {
                    0 => 2.0 / h,
                    1 => -1.0 / h,
                    _ => 0.0,
                };
                assert!((k[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_sums_to_domain_length() {
        let s = SplineSpace::uniform((-1.5, 1.5), 6, 3, 2, Constraint::None).unwrap();
        let m = assemble_space_matrix(&s, &s, 0, 0, &|_| 1.0).unwrap().matrix;
        let total: f64 = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).sum();
        assert!((total - 3.0).abs() < 1e-13);
    }

    #[test]
    fn variable_coefficient_is_sandwiched() {
        let s = SplineSpace::uniform((0.0, 1.0), 5, 2, 1, Constraint::ZeroBoth).unwrap();
        let k1 = assemble_space_matrix(&s, &s, 1, 1, &|_| 1.0).unwrap().matrix;
        let k2 = assemble_space_matrix(&s, &s, 1, 1, &|_| 2.0).unwrap().matrix;
        let kc = assemble_space_matrix(&s, &s, 1, 1, &|x| x + 1.0).unwrap().matrix;
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                let (lo, hi) = if k1[(i, j)] <= k2[(i, j)] { (k1[(i, j)], k2[(i, j)]) } else { (k2[(i, j)], k1[(i, j)]) };
                assert!(kc[(i, j)] >= lo - 1e-14 && kc[(i, j)] <= hi + 1e-14);
            }
        }
    }

    #[test]
    fn mismatched_meshes_are_rejected() {
        let a = SplineSpace::uniform((0.0, 1.0), 4, 2, 1, Constraint::None).unwrap();
        let b = SplineSpace::uniform((0.0, 1.0), 5, 2, 1, Constraint::None).unwrap();
        assert!(matches!(assemble_space_matrix(&a, &b, 0, 0, &|_| 1.0), Err(Error::DomainMismatch)));
        assert!(matches!(assemble_time_matrix(&a, &a, 0, 0, 3.0), Err(Error::DomainMismatch)));
    }

    #[test]
    fn non_finite_coefficient() {
        let a = SplineSpace::uniform((0.0, 1.0), 4, 2, 1, Constraint::None).unwrap();
        let r = assemble_space_matrix(&a, &a, 1, 1, &|x| if x > 0.5 { f64::INFINITY } else { 1.0 });
        assert!(matches!(r, Err(Error::Assembly { .. })));
    }
}
