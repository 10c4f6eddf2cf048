//! Problem data for the wave equation ∂²_t U − ∂_x(c² ∂_x U) = F on
//! Ω × (0, T) with homogeneous Dirichlet conditions, and the two
//! benchmark cases (a smooth standing wave and a traveling pulse with a
//! kink).

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Exact (U, V) with the first derivatives needed by the error norms.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: FieldFn,
    pub u_dx: FieldFn,
    /// ∂_t U, which is also V
    pub u_dt: FieldFn,
    pub v_dx: FieldFn,
    pub v_dt: FieldFn,
}

/// Line a·x + b·t + c = 0 across which the exact solution is not smooth.
/// Quadrature splits elements cut by it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinkLine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Weight of the point mass that ∂_tV carries on the line, as a
    /// distribution in x at fixed t (zero if V is continuous).
    pub dt_v_mass: f64,
}

impl KinkLine {
    pub fn level(&self, x: f64, t: f64) -> f64 {
        self.a * x + self.b * t + self.c
    }

    /// Where the line crosses the time slice t, if it is not horizontal.
    pub fn crossing_at(&self, t: f64) -> Option<f64> {
        (self.a != 0.0).then(|| -(self.b * t + self.c) / self.a)
    }
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub omega: (f64, f64),
    pub final_time: f64,
    pub c2: ScalarFn,
    /// Lower bound of c (not c²).
    pub c0: f64,
    pub forcing: FieldFn,
    pub u0: ScalarFn,
    pub u0_dx: ScalarFn,
    /// ∂_x(c² ∂_x U0), when available; only the stability bound uses it.
    pub u0_flux_div: Option<ScalarFn>,
    pub v0: ScalarFn,
    pub v0_dx: ScalarFn,
    pub exact: Option<ExactSolution>,
    pub kink: Option<KinkLine>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("omega", &self.omega)
            .field("final_time", &self.final_time)
            .field("c0", &self.c0)
            .field("has_exact", &self.exact.is_some())
            .field("kink", &self.kink)
            .finish()
    }
}

impl ProblemSpec {
    /// Length of Ω over π: the sharp Poincaré constant on an interval.
    pub fn poincare_constant(&self) -> f64 {
        (self.omega.1 - self.omega.0) / PI
    }

    /// 1 / (2 √(C_Ω²/c0² + 4T²)).
    pub fn infsup_lower_bound(&self) -> f64 {
        let c = self.poincare_constant() / self.c0;
        let t = self.final_time;
        1.0 / (2.0 * (c * c + 4.0 * t * t).sqrt())
    }

    pub fn exact(&self) -> Result<&ExactSolution> {
        self.exact.as_ref().ok_or(Error::MissingExact)
    }

    /// Checks c² ≥ c0² and, when an exact solution is present, its initial
    /// traces and ∂_t U against finite differences.
    pub fn validate(&self, samples: usize) -> Result<()> {
        let (a, b) = self.omega;
        if !(b > a) || !(self.final_time > 0.0) || !(self.c0 > 0.0) {
            return Err(Error::InvalidSpace("degenerate domain or c0".into()));
        }
        let n = samples.max(2);
        for i in 0..n {
            let x = a + (b - a) * (i as f64 + 0.5) / n as f64;
            let c2 = (self.c2)(x);
            if !(c2 >= self.c0 * self.c0 * (1.0 - 1e-12)) {
                return Err(Error::InvalidSpace(format!(
                    "c^2({x}) = {c2} below c0^2 = {}",
                    self.c0 * self.c0
                )));
            }
            if let Some(ex) = &self.exact {
                let du = ((ex.u)(x, 0.0) - (self.u0)(x)).abs();
                let dv = ((ex.u_dt)(x, 0.0) - (self.v0)(x)).abs();
                if du > 1e-10 || dv > 1e-10 {
                    return Err(Error::InvalidSpace(format!(
                        "exact solution does not match initial data at x = {x}"
                    )));
                }
                let t = self.final_time * (i as f64 + 0.5) / n as f64;
                let h = 1e-6;
                let fd = ((ex.u)(x, t + h) - (ex.u)(x, t - h)) / (2.0 * h);
                let an = (ex.u_dt)(x, t);
                if (fd - an).abs() > 1e-5 * (1.0 + an.abs()) {
                    return Err(Error::InvalidSpace(format!(
                        "V != dU/dt at ({x}, {t}): {an} vs {fd}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NamedProblem {
    pub name: String,
    pub spec: ProblemSpec,
}

/// U with all derivatives the manufactured forcing needs.
#[derive(Clone)]
pub struct SmoothField {
    pub u: FieldFn,
    pub u_x: FieldFn,
    pub u_t: FieldFn,
    pub u_xx: FieldFn,
    pub u_tt: FieldFn,
    pub u_xt: FieldFn,
}

/// Builds F = ∂²_t U − ∂_x(c² ∂_x U) and the initial traces of a given U.
pub fn manufactured(
    name: &str,
    field: SmoothField,
    c2: ScalarFn,
    c2_dx: ScalarFn,
    c0: f64,
    omega: (f64, f64),
    final_time: f64,
) -> Result<NamedProblem> {
    // reject fields that cannot be evaluated before handing them out
    let probe = [0.1234, 0.5, 0.8765];
    for &sx in &probe {
        for &st in &probe {
            let x = omega.0 + sx * (omega.1 - omega.0);
            let t = st * final_time;
            let vals = [
                (field.u)(x, t),
                (field.u_x)(x, t),
                (field.u_t)(x, t),
                (field.u_xx)(x, t),
                (field.u_tt)(x, t),
                (field.u_xt)(x, t),
                c2(x),
                c2_dx(x),
            ];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Expr(format!("derivative evaluation failed at ({x}, {t})")));
            }
        }
    }
    let f = field.clone();
    let (c2a, c2b) = (c2.clone(), c2_dx.clone());
    let forcing: FieldFn =
        Arc::new(move |x, t| (f.u_tt)(x, t) - (c2b(x) * (f.u_x)(x, t) + c2a(x) * (f.u_xx)(x, t)));
    let f = field.clone();
    let u0: ScalarFn = Arc::new(move |x| (f.u)(x, 0.0));
    let f = field.clone();
    let u0_dx: ScalarFn = Arc::new(move |x| (f.u_x)(x, 0.0));
    let f = field.clone();
    let v0: ScalarFn = Arc::new(move |x| (f.u_t)(x, 0.0));
    let f = field.clone();
    let v0_dx: ScalarFn = Arc::new(move |x| (f.u_xt)(x, 0.0));
    let f = field.clone();
    let (c2a, c2b) = (c2.clone(), c2_dx);
    let u0_flux_div: ScalarFn =
        Arc::new(move |x| c2b(x) * (f.u_x)(x, 0.0) + c2a(x) * (f.u_xx)(x, 0.0));
    let exact = ExactSolution {
        u: field.u.clone(),
        u_dx: field.u_x.clone(),
        u_dt: field.u_t.clone(),
        v_dx: field.u_xt.clone(),
        v_dt: field.u_tt.clone(),
    };
    Ok(NamedProblem {
        name: name.to_string(),
        spec: ProblemSpec {
            omega,
            final_time,
            c2,
            c0,
            forcing,
            u0,
            u0_dx,
            u0_flux_div: Some(u0_flux_div),
            v0,
            v0_dx,
            exact: Some(exact),
            kink: None,
        },
    })
}

const SMOOTH_FREQ: f64 = 1.25 * PI;

/// Ω = (0,1), T = 3, c² = x + 1, U = sin²(5πt/4) sin(πx) + sin(πx).
pub fn smooth_case() -> NamedProblem {
    let a = SMOOTH_FREQ;
    let g = move |t: f64| (a * t).sin().powi(2) + 1.0;
    let field = SmoothField {
        u: Arc::new(move |x, t| g(t) * (PI * x).sin()),
        u_x: Arc::new(move |x, t| g(t) * PI * (PI * x).cos()),
        u_t: Arc::new(move |x, t| a * (2.0 * a * t).sin() * (PI * x).sin()),
        u_xx: Arc::new(move |x, t| -g(t) * PI * PI * (PI * x).sin()),
        u_tt: Arc::new(move |x, t| 2.0 * a * a * (2.0 * a * t).cos() * (PI * x).sin()),
        u_xt: Arc::new(move |x, t| a * (2.0 * a * t).sin() * PI * (PI * x).cos()),
    };
    manufactured(
        "smooth",
        field,
        Arc::new(|x| x + 1.0),
        Arc::new(|_| 1.0),
        1.0,
        (0.0, 1.0),
        3.0,
    )
    .expect("smooth benchmark is well defined")
}

/// ω(s) = e^{−20(s−0.1)²} − e^{−20(s+0.1)²} and its first two derivatives.
pub fn pulse(s: f64) -> [f64; 3] {
    let (p, m) = (s - 0.1, s + 0.1);
    let (ep, em) = ((-20.0 * p * p).exp(), (-20.0 * m * m).exp());
    [
        ep - em,
        -40.0 * p * ep + 40.0 * m * em,
        (1600.0 * p * p - 40.0) * ep - (1600.0 * m * m - 40.0) * em,
    ]
}

/// Tolerance inside which a point counts as lying on the kink line; such
/// points take the limit from the s > 0 side.
const KINK_EPS: f64 = 1e-14;

#[inline]
fn active(s: f64) -> bool {
    s > -KINK_EPS
}

/// Ω = (−1.5, 1.5), T = 1, c = 1, F = 0, U = ω(x−t+1)·1_{>0}(x−t+1).
pub fn singular_case() -> NamedProblem {
    let s_of = |x: f64, t: f64| x - t + 1.0;
    let gate = |s: f64, k: usize| if active(s) { pulse(s.max(0.0))[k] } else { 0.0 };
    let exact = ExactSolution {
        u: Arc::new(move |x, t| gate(s_of(x, t), 0)),
        u_dx: Arc::new(move |x, t| gate(s_of(x, t), 1)),
        u_dt: Arc::new(move |x, t| -gate(s_of(x, t), 1)),
        v_dx: Arc::new(move |x, t| -gate(s_of(x, t), 2)),
        v_dt: Arc::new(move |x, t| gate(s_of(x, t), 2)),
    };
    NamedProblem {
        name: "singular".into(),
        spec: ProblemSpec {
            omega: (-1.5, 1.5),
            final_time: 1.0,
            c2: Arc::new(|_| 1.0),
            c0: 1.0,
            forcing: Arc::new(|_, _| 0.0),
            u0: Arc::new(move |x| gate(x + 1.0, 0)),
            u0_dx: Arc::new(move |x| gate(x + 1.0, 1)),
            // ∂_x²U0 has a point mass at x = −1, so no L² flux is available
            u0_flux_div: None,
            v0: Arc::new(move |x| -gate(x + 1.0, 1)),
            v0_dx: Arc::new(move |x| -gate(x + 1.0, 2)),
            exact: Some(exact),
            // V = −ω'(s)·1_{>0}(s) jumps by −ω'(0) across s = 0, and
            // ∂_t s = −1, so ∂_tV ∋ ω'(0) δ(x − t + 1)
            kink: Some(KinkLine {
                a: 1.0,
                b: -1.0,
                c: 1.0,
                dt_v_mass: pulse(0.0)[1],
            }),
        },
    }
}

pub fn by_name(name: &str) -> Option<NamedProblem> {
    match name {
        "smooth" => Some(smooth_case()),
        "singular" => Some(singular_case()),
        _ => None,
    }
}
