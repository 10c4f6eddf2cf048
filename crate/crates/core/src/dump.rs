//! Plain-text dump of a discrete solution.
//!
//! ```text
//! # xtwave solution
//! # problem smooth
//! # space x degree=2 regularity=1 constraint=zero-both breakpoints=0.0000000000000000e0,...
//! # space t degree=2 regularity=1 constraint=zero-left breakpoints=...
//! block,i_x,i_t,value
//! U,0,0,1.2345678901234567e-1
//! ```
//!
//! Values are written with 17 significant digits, so reading a dump back
//! gives the same bits. The coefficients are those of the shifted unknowns;
//! [`SolutionDump::reconstruct`] adds the initial data back.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::problems::ProblemSpec;
use crate::splines::{Basis, Constraint, KnotVector, SplineSpace};
use crate::system::DiscreteSolution;

const MAGIC: &str = "# xtwave solution";
const COLUMNS: &str = "block,i_x,i_t,value";

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionDump {
    pub problem: String,
    pub space_x: SplineSpace,
    pub space_t: SplineSpace,
    pub u_coeffs: Vec<f64>,
    pub v_coeffs: Vec<f64>,
}

fn space_line(axis: &str, s: &SplineSpace) -> String {
    let bps: Vec<String> = s.breakpoints().iter().map(|b| format!("{b:.16e}")).collect();
    format!(
        "# space {axis} degree={} regularity={} constraint={} breakpoints={}",
        s.degree(),
        s.regularity(),
        s.constraint().name(),
        bps.join(",")
    )
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Dump(msg.into())
}

fn parse_space(line: &str, axis: &str) -> Result<SplineSpace> {
    let rest = line
        .strip_prefix(&format!("# space {axis} "))
        .ok_or_else(|| bad(format!("expected '# space {axis}' line, got '{line}'")))?;
    let (mut degree, mut reg, mut constraint, mut bps) = (None, None, None, None);
    for field in rest.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(|| bad(format!("bad field '{field}'")))?;
        match k {
            "degree" => degree = v.parse::<usize>().ok(),
            "regularity" => reg = v.parse::<i64>().ok(),
            "constraint" => constraint = Constraint::from_name(v),
            "breakpoints" => {
                bps = v
                    .split(',')
                    .map(|b| b.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .ok()
            }
            _ => return Err(bad(format!("unknown field '{k}'"))),
        }
    }
    let (Some(p), Some(r), Some(c), Some(b)) = (degree, reg, constraint, bps) else {
        return Err(bad(format!("incomplete space line for {axis}")));
    };
    if r < 0 || r >= p as i64 {
        return Err(bad(format!("regularity {r} invalid for degree {p}")));
    }
    let knots = KnotVector::new(b, p, p - r as usize)?;
    SplineSpace::new(knots, c)
}

impl SolutionDump {
    pub fn from_solution(problem: &str, sol: &DiscreteSolution) -> Self {
        Self {
            problem: problem.to_string(),
            space_x: sol.space_x.clone(),
            space_t: sol.space_t.clone(),
            u_coeffs: sol.u_coeffs.clone(),
            v_coeffs: sol.v_coeffs.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let n_x = self.space_x.dim();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "# problem {}", self.problem);
        let _ = writeln!(s, "{}", space_line("x", &self.space_x));
        let _ = writeln!(s, "{}", space_line("t", &self.space_t));
        let _ = writeln!(s, "{COLUMNS}");
        for (block, c) in [("U", &self.u_coeffs), ("V", &self.v_coeffs)] {
            for (k, v) in c.iter().enumerate() {
                let _ = writeln!(s, "{block},{},{},{v:.16e}", k % n_x, k / n_x);
            }
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_text().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::read_from(text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> { lines.next().ok_or_else(|| bad("unexpected end of file"))?.map_err(Error::from) };
        if next()? != MAGIC {
            return Err(bad("missing header"));
        }
        let problem = next()?
            .strip_prefix("# problem ")
            .ok_or_else(|| bad("missing problem line"))?
            .to_string();
        let space_x = parse_space(&next()?, "x")?;
        let space_t = parse_space(&next()?, "t")?;
        if next()? != COLUMNS {
            return Err(bad("missing column header"));
        }
        let (n_x, n_t) = (space_x.dim(), space_t.dim());
        let n = n_x * n_t;
        let mut u = vec![f64::NAN; n];
        let mut v = vec![f64::NAN; n];
        let mut seen = 0usize;
        while let Some(line) = lines.next() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(bad(format!("bad row '{line}'")));
            }
            let ix: usize = parts[1].parse().map_err(|_| bad(format!("bad i_x in '{line}'")))?;
            let it: usize = parts[2].parse().map_err(|_| bad(format!("bad i_t in '{line}'")))?;
            let val: f64 = parts[3].parse().map_err(|_| bad(format!("bad value in '{line}'")))?;
            if ix >= n_x || it >= n_t {
                return Err(bad(format!("index out of range in '{line}'")));
            }
            let target = match parts[0] {
                "U" => &mut u,
                "V" => &mut v,
                b => return Err(bad(format!("unknown block '{b}'"))),
            };
            let slot = &mut target[it * n_x + ix];
            if !slot.is_nan() {
                return Err(bad(format!("duplicate row '{line}'")));
            }
            *slot = val;
            seen += 1;
        }
        if seen != 2 * n {
            return Err(bad(format!("expected {} rows, found {seen}", 2 * n)));
        }
        Ok(Self {
            problem,
            space_x,
            space_t,
            u_coeffs: u,
            v_coeffs: v,
        })
    }

    /// The solution with the initial data of `problem` added back.
    pub fn reconstruct(&self, problem: &ProblemSpec) -> Result<DiscreteSolution> {
        if self.space_x.interval() != problem.omega || self.space_t.interval() != (0.0, problem.final_time) {
            return Err(Error::DomainMismatch);
        }
        let mut z = self.u_coeffs.clone();
        z.extend_from_slice(&self.v_coeffs);
        Ok(DiscreteSolution::from_coefficients(
            self.space_x.clone(),
            self.space_t.clone(),
            z,
            problem,
        ))
    }
}
