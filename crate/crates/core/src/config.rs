//! Run configuration: a flat TOML table with a fixed set of keys.
//!
//! ```toml
//! problem = "smooth"        # "smooth", "singular" or "inline"
//! degree = 2
//! regularity = "maximal"    # "maximal", "c1" or an integer
//! levels = [[4, 12], [8, 24]]
//! ```

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::problems::{by_name, manufactured, NamedProblem, ProblemSpec, ScalarFn, SmoothField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Solve,
    Convergence,
    Stability,
    Infsup,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Convergence => "convergence",
            Mode::Stability => "stability",
            Mode::Infsup => "infsup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularity {
    /// C^{p-1}
    Maximal,
    C1,
    Explicit(i64),
}

impl Regularity {
    /// Inter-element continuity for degree `p`.
    pub fn resolve(self, p: usize) -> Result<usize> {
        let r = match self {
            Regularity::Maximal => p as i64 - 1,
            Regularity::C1 => 1,
            Regularity::Explicit(r) => r,
        };
        if r < 0 || r >= p as i64 {
            return Err(Error::Config(format!("regularity {r} is invalid for degree {p}")));
        }
        Ok(r as usize)
    }

    pub fn label(self) -> String {
        match self {
            Regularity::Maximal => "maximal".into(),
            Regularity::C1 => "c1".into(),
            Regularity::Explicit(r) => r.to_string(),
        }
    }
}

impl Serialize for Regularity {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Regularity::Maximal => s.serialize_str("maximal"),
            Regularity::C1 => s.serialize_str("c1"),
            Regularity::Explicit(r) => s.serialize_i64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for Regularity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Regularity;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"maximal\", \"c1\" or an integer")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Regularity, E> {
                match v {
                    "maximal" => Ok(Regularity::Maximal),
                    "c1" => Ok(Regularity::C1),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Regularity, E> {
                Ok(Regularity::Explicit(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Regularity, E> {
                Ok(Regularity::Explicit(v as i64))
            }
        }
        d.deserialize_any(V)
    }
}

fn default_regularity() -> Regularity {
    Regularity::Maximal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub degree: usize,
    #[serde(default = "default_regularity")]
    pub regularity: Regularity,
    /// (elements in space, elements in time) per level
    pub levels: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    // inline problems only
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forcing: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<String>,
    /// exact U; F, U0 and V0 are then derived from it
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_u: Option<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn continuity(&self) -> Result<usize> {
        self.regularity.resolve(self.degree)
    }

    fn inline_fields_set(&self) -> bool {
        self.omega.is_some()
            || self.final_time.is_some()
            || self.c2.is_some()
            || self.c0.is_some()
            || self.forcing.is_some()
            || self.u0.is_some()
            || self.v0.is_some()
            || self.exact_u.is_some()
    }

    /// Checks everything that does not need a solve. `mode` is the mode
    /// the run will use (the subcommand); a conflicting `mode` key is an error.
    pub fn validate(&self, mode: Mode) -> Result<()> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(Error::Config(format!(
                    "config says mode = \"{}\" but the run is \"{}\"",
                    m.name(),
                    mode.name()
                )));
            }
        }
        if self.degree == 0 || self.degree > 10 {
            return Err(Error::Config(format!("degree {} outside 1..=10", self.degree)));
        }
        self.continuity()?;
        if self.levels.is_empty() {
            return Err(Error::Config("levels must not be empty".into()));
        }
        if self.levels.iter().any(|l| l[0] == 0 || l[1] == 0) {
            return Err(Error::Config("every level needs at least one element per direction".into()));
        }
        match mode {
            Mode::Convergence => {
                for w in self.levels.windows(2) {
                    if w[1][0] != 2 * w[0][0] || w[1][1] != 2 * w[0][1] {
                        return Err(Error::Config(format!(
                            "convergence levels must halve h in both directions: {:?} -> {:?}",
                            w[0], w[1]
                        )));
                    }
                }
            }
            Mode::Stability => {
                if self.levels.iter().any(|l| l[1] != self.levels[0][1]) {
                    return Err(Error::Config("stability levels must share the number of time elements".into()));
                }
            }
            _ => {}
        }
        if let Some(q) = self.quad_points {
            if q == 0 || q > crate::quadrature::MAX_POINTS {
                return Err(Error::Config(format!("quad_points {q} outside 1..=64")));
            }
        }
        self.problem()?;
        Ok(())
    }

    /// The problem described by this config.
    pub fn problem(&self) -> Result<NamedProblem> {
        if self.problem != "inline" {
            if self.inline_fields_set() {
                return Err(Error::Config(format!(
                    "inline problem keys given but problem = \"{}\"",
                    self.problem
                )));
            }
            return by_name(&self.problem).ok_or_else(|| {
                Error::Config(format!(
                    "unknown problem \"{}\" (expected smooth, singular or inline)",
                    self.problem
                ))
            });
        }
        inline_problem(self)
    }
}

fn need<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Config(format!("inline problem needs '{key}'")))
}

fn parse_expr(src: &str, key: &str, space_only: bool) -> Result<Expr> {
    let e = Expr::parse(src).map_err(|e| Error::Config(format!("{key}: {e}")))?;
    if space_only && e.depends_on(Var::T) {
        return Err(Error::Config(format!("{key} must not depend on t")));
    }
    Ok(e)
}

fn scalar(e: &Expr) -> ScalarFn {
    e.at_time(0.0)
}

fn inline_problem(cfg: &RunConfig) -> Result<NamedProblem> {
    let omega = *need(&cfg.omega, "omega")?;
    let final_time = *need(&cfg.final_time, "final_time")?;
    if !(omega[1] > omega[0]) || !(final_time > 0.0) {
        return Err(Error::Config("need omega[0] < omega[1] and final_time > 0".into()));
    }
    let c2 = parse_expr(need(&cfg.c2, "c2")?, "c2", true)?;
    let c0 = match cfg.c0 {
        Some(c0) => c0,
        None => {
            // sampled minimum of c
            let n = 1000;
            (0..=n)
                .map(|i| c2.eval(omega[0] + (omega[1] - omega[0]) * i as f64 / n as f64, 0.0))
                .fold(f64::INFINITY, f64::min)
                .max(0.0)
                .sqrt()
        }
    };
    if !(c0 > 0.0) {
        return Err(Error::Config("c must be bounded below by a positive c0".into()));
    }
    let c2_dx = c2.derivative(Var::X);
    let named = if let Some(u) = &cfg.exact_u {
        if cfg.forcing.is_some() || cfg.u0.is_some() || cfg.v0.is_some() {
            return Err(Error::Config("give either exact_u or forcing/u0/v0, not both".into()));
        }
        let u = parse_expr(u, "exact_u", false)?;
        let (ux, ut) = (u.derivative(Var::X), u.derivative(Var::T));
        let field = SmoothField {
            u: u.field(),
            u_xx: ux.derivative(Var::X).field(),
            u_tt: ut.derivative(Var::T).field(),
            u_xt: ux.derivative(Var::T).field(),
            u_x: ux.field(),
            u_t: ut.field(),
        };
        manufactured(
            "inline",
            field,
            scalar(&c2),
            scalar(&c2_dx),
            c0,
            (omega[0], omega[1]),
            final_time,
        )
        .map_err(|e| Error::Config(e.to_string()))?
    } else {
        let f = parse_expr(need(&cfg.forcing, "forcing")?, "forcing", false)?;
        let u0 = parse_expr(need(&cfg.u0, "u0")?, "u0", true)?;
        let v0 = parse_expr(need(&cfg.v0, "v0")?, "v0", true)?;
        let u0x = u0.derivative(Var::X);
        let (c2f, c2d, u0xf, u0xx) = (scalar(&c2), scalar(&c2_dx), scalar(&u0x), scalar(&u0x.derivative(Var::X)));
        let flux: ScalarFn = Arc::new(move |x| c2d(x) * u0xf(x) + c2f(x) * u0xx(x));
        NamedProblem {
            name: "inline".into(),
            spec: ProblemSpec {
                omega: (omega[0], omega[1]),
                final_time,
                c2: scalar(&c2),
                c0,
                forcing: f.field(),
                u0: scalar(&u0),
                u0_dx: scalar(&u0x),
                u0_flux_div: Some(flux),
                v0: scalar(&v0),
                v0_dx: scalar(&v0.derivative(Var::X)),
                exact: None,
                kink: None,
            },
        }
    };
    named
        .spec
        .validate(50)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(named)
}
