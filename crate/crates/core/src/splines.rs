//! Univariate B-spline spaces on an interval.
//!
//! Knot vectors are open (clamped): each endpoint is repeated `degree + 1`
//! times and every interior breakpoint carries the same multiplicity, so the
//! inter-element regularity is `degree - multiplicity`. Homogeneous boundary
//! conditions are imposed by dropping the basis functions that do not vanish
//! at the constrained endpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which endpoints the retained basis functions vanish at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    None,
    ZeroLeft,
    ZeroBoth,
}

impl Constraint {
    fn left(self) -> bool {
        matches!(self, Constraint::ZeroLeft | Constraint::ZeroBoth)
    }

    fn right(self) -> bool {
        matches!(self, Constraint::ZeroBoth)
    }

    pub fn name(self) -> &'static str {
        match self {
            Constraint::None => "none",
            Constraint::ZeroLeft => "zero-left",
            Constraint::ZeroBoth => "zero-both",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Constraint::None),
            "zero-left" => Some(Constraint::ZeroLeft),
            "zero-both" => Some(Constraint::ZeroBoth),
            _ => None,
        }
    }
}

/// Open knot vector built from strictly increasing breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    breakpoints: Vec<f64>,
    degree: usize,
    multiplicity: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    pub fn new(breakpoints: Vec<f64>, degree: usize, interior_multiplicity: usize) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidKnots("need at least two breakpoints".into()));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidKnots("non-finite breakpoint".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidKnots("breakpoints must be strictly increasing".into()));
        }
        let max_mult = degree.max(1);
        if interior_multiplicity == 0 || interior_multiplicity > max_mult {
            return Err(Error::InvalidKnots(format!(
                "interior multiplicity {interior_multiplicity} outside 1..={max_mult}"
            )));
        }
        let n_interior = breakpoints.len() - 2;
        let mut knots = Vec::with_capacity(2 * (degree + 1) + n_interior * interior_multiplicity);
        knots.extend(std::iter::repeat(breakpoints[0]).take(degree + 1));
        for &b in &breakpoints[1..breakpoints.len() - 1] {
            knots.extend(std::iter::repeat(b).take(interior_multiplicity));
        }
        knots.extend(std::iter::repeat(*breakpoints.last().unwrap()).take(degree + 1));
        Ok(Self {
            breakpoints,
            degree,
            multiplicity: interior_multiplicity,
            knots,
        })
    }

    pub fn uniform(
        interval: (f64, f64),
        n_elements: usize,
        degree: usize,
        interior_multiplicity: usize,
    ) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::InvalidKnots("need at least one element".into()));
        }
        let (a, b) = interval;
        let h = (b - a) / n_elements as f64;
        let mut breaks: Vec<f64> = (0..=n_elements).map(|i| a + i as f64 * h).collect();
        // pin the right endpoint so interval checks are exact
        breaks[n_elements] = b;
        Self::new(breaks, degree, interior_multiplicity)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_multiplicity(&self) -> usize {
        self.multiplicity
    }

    /// Continuity order across interior breakpoints; -1 means discontinuous.
    pub fn regularity(&self) -> i64 {
        self.degree as i64 - self.multiplicity as i64
    }

    pub fn n_elements(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        (self.breakpoints[e], self.breakpoints[e + 1])
    }

    /// Number of B-splines before any boundary constraint is applied.
    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Element containing `x`; interior breakpoints belong to the element on
    /// their right, the right endpoint to the last element.
    pub fn element_of(&self, x: f64) -> usize {
        let n = self.n_elements();
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        idx.saturating_sub(1).min(n - 1)
    }

    fn span_of_element(&self, e: usize) -> usize {
        self.degree + e * self.multiplicity
    }

    /// Uniformly split every element in two (nested refinement).
    pub fn refined(&self) -> Self {
        let mut breaks = Vec::with_capacity(2 * self.breakpoints.len() - 1);
        for w in self.breakpoints.windows(2) {
            breaks.push(w[0]);
            breaks.push(0.5 * (w[0] + w[1]));
        }
        breaks.push(*self.breakpoints.last().unwrap());
        Self::new(breaks, self.degree, self.multiplicity).expect("refinement keeps a valid knot vector")
    }
}

/// Values (or derivatives) of the basis functions active at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub first_active_index: usize,
    pub values: Vec<f64>,
}

impl BasisEval {
    pub fn indices(&self) -> std::ops::Range<usize> {
        self.first_active_index..self.first_active_index + self.values.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &v)| (self.first_active_index + k, v))
    }

    /// Σ coeffs[i] * values[i] over the active functions.
    pub fn combine(&self, coeffs: &[f64]) -> f64 {
        self.iter().map(|(i, v)| coeffs[i] * v).sum()
    }
}

/// Anything that exposes an element-wise evaluable basis on a knot mesh.
pub trait Basis {
    fn dim(&self) -> usize;

    /// Polynomial degree of the represented functions on each element.
    fn poly_degree(&self) -> usize;

    fn mesh(&self) -> &KnotVector;

    /// Evaluate on element `e`; at element endpoints this gives the one-sided
    /// limit from inside the element.
    fn eval_on_element(&self, e: usize, x: f64, deriv_order: usize) -> BasisEval;

    fn eval(&self, x: f64, deriv_order: usize) -> Result<BasisEval> {
        let (lo, hi) = self.mesh().interval();
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfDomain { x, lo, hi });
        }
        Ok(self.eval_on_element(self.mesh().element_of(x), x, deriv_order))
    }
}

/// Spline space with optional homogeneous endpoint constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineSpace {
    knots: KnotVector,
    constraint: Constraint,
    dim: usize,
}

impl SplineSpace {
    pub fn new(knots: KnotVector, constraint: Constraint) -> Result<Self> {
        if constraint != Constraint::None && knots.degree() == 0 {
            return Err(Error::InvalidSpace(
                "boundary constraints need continuous splines (degree >= 1)".into(),
            ));
        }
        let removed = constraint.left() as usize + constraint.right() as usize;
        let n = knots.n_basis();
        if n <= removed {
            return Err(Error::InvalidSpace("no basis functions left after constraints".into()));
        }
        Ok(Self {
            dim: n - removed,
            knots,
            constraint,
        })
    }

    /// Uniform mesh with `n_elements` elements, degree `degree` and
    /// inter-element continuity `C^regularity`.
    pub fn uniform(
        interval: (f64, f64),
        n_elements: usize,
        degree: usize,
        regularity: usize,
        constraint: Constraint,
    ) -> Result<Self> {
        if degree == 0 || regularity >= degree {
            return Err(Error::InvalidRegularity {
                degree,
                regularity: regularity as i64,
            });
        }
        let knots = KnotVector::uniform(interval, n_elements, degree, degree - regularity)?;
        Self::new(knots, constraint)
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn degree(&self) -> usize {
        self.knots.degree()
    }

    pub fn regularity(&self) -> i64 {
        self.knots.regularity()
    }

    pub fn interval(&self) -> (f64, f64) {
        self.knots.interval()
    }

    pub fn n_elements(&self) -> usize {
        self.knots.n_elements()
    }

    pub fn breakpoints(&self) -> &[f64] {
        self.knots.breakpoints()
    }

    /// Same degree, regularity and constraint on the uniformly split mesh.
    pub fn refined(&self) -> Self {
        Self::new(self.knots.refined(), self.constraint).expect("refinement keeps a valid space")
    }

    /// Evaluate Σ coeffs_i D^d φ_i(x).
    pub fn evaluate(&self, coeffs: &[f64], x: f64, deriv_order: usize) -> Result<f64> {
        Ok(self.eval(x, deriv_order)?.combine(coeffs))
    }

    fn eval_span(&self, span: usize, x: f64, deriv_order: usize) -> BasisEval {
        let p = self.degree();
        let table = basis_derivatives(&self.knots.knots, span, x, p, deriv_order);
        let vals = &table[deriv_order];
        let full_first = span - p;
        let n_full = self.knots.n_basis();
        let start = usize::from(self.constraint.left() && full_first == 0);
        let end = if self.constraint.right() && span == n_full - 1 { p } else { p + 1 };
        let offset = usize::from(self.constraint.left());
        BasisEval {
            first_active_index: full_first + start - offset,
            values: vals[start..end].to_vec(),
        }
    }
}

impl Basis for SplineSpace {
    fn dim(&self) -> usize {
        self.dim
    }

    fn poly_degree(&self) -> usize {
        self.degree()
    }

    fn mesh(&self) -> &KnotVector {
        &self.knots
    }

    fn eval_on_element(&self, e: usize, x: f64, deriv_order: usize) -> BasisEval {
        self.eval_span(self.knots.span_of_element(e), x, deriv_order)
    }
}

/// The time-derivative image {∂_t φ_i} of a zero-left trial space.
///
/// Same dimension as the trial space; evaluation shifts the derivative
/// order by one.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSpace {
    trial: SplineSpace,
}

impl DerivativeSpace {
    pub fn trial(&self) -> &SplineSpace {
        &self.trial
    }
}

/// Test space paired with a zero-left time trial space.
pub fn test_space_of(trial: &SplineSpace) -> Result<DerivativeSpace> {
    if trial.constraint() != Constraint::ZeroLeft {
        return Err(Error::InvalidTestSpace);
    }
    Ok(DerivativeSpace {
        trial: trial.clone(),
    })
}

impl Basis for DerivativeSpace {
    fn dim(&self) -> usize {
        self.trial.dim()
    }

    fn poly_degree(&self) -> usize {
        self.trial.degree() - 1
    }

    fn mesh(&self) -> &KnotVector {
        self.trial.knots()
    }

    fn eval_on_element(&self, e: usize, x: f64, deriv_order: usize) -> BasisEval {
        self.trial.eval_on_element(e, x, deriv_order + 1)
    }
}

/// Cox–de Boor triangular scheme: returns `ders[k][j]`, the k-th derivative
/// of N_{span-p+j, p} at `x`, for k = 0..=n_deriv.
fn basis_derivatives(knots: &[f64], span: usize, x: f64, p: usize, n_deriv: usize) -> Vec<Vec<f64>> {
    let mut ders = vec![vec![0.0; p + 1]; n_deriv + 1];
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let n = n_deriv.min(p);
    let mut a = vec![vec![0.0; p + 1]; 2];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=n {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if r >= k {
                let rk = rk as usize;
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            let j1: usize = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2: usize = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for k in 1..=n {
        for v in ders[k].iter_mut() {
            *v *= factor;
        }
        factor *= (p - k) as f64;
    }
    ders
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize, p: usize, r: usize, c: Constraint) -> SplineSpace {
        SplineSpace::uniform((0.0, 1.0), n, p, r, c).unwrap()
    }

    #[test]
    fn dimensions_of_uniform_spaces() {
        assert_eq!(unit(4, 2, 1, Constraint::None).dim(), 6);
        assert_eq!(unit(4, 3, 1, Constraint::None).dim(), 10);
        let s = SplineSpace::uniform((0.0, 3.0), 8, 1, 0, Constraint::ZeroLeft).unwrap();
        assert_eq!(s.dim(), 8);
        assert_eq!(unit(5, 2, 1, Constraint::ZeroBoth).dim(), 5);
    }

    #[test]
    fn regularity_must_be_below_degree() {
        assert!(matches!(
            SplineSpace::uniform((0.0, 1.0), 4, 2, 2, Constraint::None),
            Err(Error::InvalidRegularity { .. })
        ));
        assert!(SplineSpace::uniform((0.0, 1.0), 0, 2, 1, Constraint::None).is_err());
    }

    #[test]
    fn knot_vector_rejects_bad_breakpoints() {
        assert!(KnotVector::new(vec![0.0, 0.5, 0.5, 1.0], 2, 1).is_err());
        assert!(KnotVector::new(vec![0.0], 2, 1).is_err());
        assert!(KnotVector::new(vec![0.0, 1.0], 2, 3).is_err());
    }

    #[test]
    fn hat_derivatives() {
        let s = unit(4, 1, 0, Constraint::None);
        let e = s.eval(0.3, 1).unwrap();
        assert_eq!(e.values.len(), 2);
        assert!((e.values[0] + 4.0).abs() < 1e-12);
        assert!((e.values[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_left_vanishes_at_left_endpoint() {
        for p in 1..=4 {
            let s = SplineSpace::uniform((0.0, 3.0), 5, p, p - 1, Constraint::ZeroLeft).unwrap();
            let e = s.eval(0.0, 0).unwrap();
            assert!(e.values.iter().all(|v| v.abs() < 1e-15), "p={p}: {:?}", e.values);
        }
    }

    #[test]
    fn zero_both_vanishes_at_both_endpoints() {
        let s = unit(6, 3, 2, Constraint::ZeroBoth);
        for x in [0.0, 1.0] {
            let e = s.eval(x, 0).unwrap();
            assert!(e.values.iter().all(|v| v.abs() < 1e-15));
        }
        let last = s.eval(1.0, 0).unwrap();
        assert!(last.indices().end <= s.dim());
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let s = unit(4, 2, 1, Constraint::None);
        assert!(matches!(s.eval(1.5, 0), Err(Error::OutOfDomain { .. })));
        assert!(s.eval(f64::NAN, 0).is_err());
    }

    #[test]
    fn test_view_is_derivative_of_trial() {
        let trial = SplineSpace::uniform((0.0, 3.0), 8, 2, 1, Constraint::ZeroLeft).unwrap();
        let test = test_space_of(&trial).unwrap();
        assert_eq!(test.dim(), trial.dim());
        for &x in &[0.0, 0.4, 1.5, 2.99, 3.0] {
            assert_eq!(test.eval(x, 0).unwrap(), trial.eval(x, 1).unwrap());
        }
        assert!(matches!(
            test_space_of(&unit(4, 2, 1, Constraint::None)),
            Err(Error::InvalidTestSpace)
        ));
    }

    #[test]
    fn degree_one_test_functions_are_piecewise_constant() {
        let trial = SplineSpace::uniform((0.0, 3.0), 8, 1, 0, Constraint::ZeroLeft).unwrap();
        let test = test_space_of(&trial).unwrap();
        for e in 0..8 {
            let (a, b) = trial.knots().element_bounds(e);
            let l = test.eval_on_element(e, a + 1e-3, 0);
            let r = test.eval_on_element(e, b - 1e-3, 0);
            assert_eq!(l.first_active_index, r.first_active_index);
            for (x, y) in l.values.iter().zip(&r.values) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivatives_beyond_degree_vanish() {
        let s = unit(3, 2, 1, Constraint::None);
        let e = s.eval(0.4, 3).unwrap();
        assert!(e.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn nonuniform_breakpoints_keep_partition_of_unity() {
        let kv = KnotVector::new(vec![0.0, 0.1, 0.15, 0.6, 1.0], 3, 2).unwrap();
        let s = SplineSpace::new(kv, Constraint::None).unwrap();
        assert_eq!(s.dim(), 4 + 3 * 2);
        for &x in &[0.0, 0.05, 0.12, 0.4, 0.99, 1.0] {
            let sum: f64 = s.eval(x, 0).unwrap().values.iter().sum();
            assert!((sum - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn refinement_is_nested() {
        let s = unit(3, 2, 1, Constraint::ZeroBoth);
        let r = s.refined();
        assert_eq!(r.n_elements(), 6);
        assert_eq!(r.dim(), 6 + 2 - 2);
    }
}
