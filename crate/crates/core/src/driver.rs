//! Batch runs: one row per level, written as CSV plus a plot data file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{data_bound, eoc, DataBounds, error_report, estimate_infsup, NormOperators, INFSUP_MAX_DOFS};
use crate::config::{Mode, RunConfig};
use crate::dump::SolutionDump;
use crate::error::{Error, Result};
use crate::problems::NamedProblem;
use crate::splines::{Basis, Constraint, SplineSpace};
use crate::system::{assemble_with, DiscreteSolution};

pub const CSV_HEADER: &str = "level,h_x,h_t,p,regularity,dofs,err_Veh,eoc_Veh,err_U_L2,eoc_U_L2,err_V_L2,eoc_V_L2,err_cgradU,eoc_cgradU,gamma_h,lower_bound,solve_seconds";

/// Galerkin residual accepted after a solve.
pub const GALERKIN_TOL: f64 = 1e-9;

/// Number of random evaluation points written in solve mode.
pub const N_SAMPLES: usize = 32;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    /// Falls back to the config's `output`, then to `xtwave-out`.
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

/// One CSV row. `None` fields are written empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelRow {
    pub level: usize,
    pub h_x: f64,
    pub h_t: f64,
    pub p: usize,
    pub regularity: usize,
    pub dofs: usize,
    pub err_veh: Option<f64>,
    pub eoc_veh: Option<f64>,
    pub err_u_l2: Option<f64>,
    pub eoc_u_l2: Option<f64>,
    pub err_v_l2: Option<f64>,
    pub eoc_v_l2: Option<f64>,
    pub err_cgrad_u: Option<f64>,
    pub eoc_cgrad_u: Option<f64>,
    pub gamma_h: Option<f64>,
    pub lower_bound: Option<f64>,
    pub solve_seconds: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl LevelRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:e},{:e},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.level,
            self.h_x,
            self.h_t,
            self.p,
            self.regularity,
            self.dofs,
            opt(self.err_veh),
            opt(self.eoc_veh),
            opt(self.err_u_l2),
            opt(self.eoc_u_l2),
            opt(self.err_v_l2),
            opt(self.eoc_v_l2),
            opt(self.err_cgrad_u),
            opt(self.eoc_cgrad_u),
            opt(self.gamma_h),
            opt(self.lower_bound),
            self.solve_seconds.map(|s| format!("{s:.3}")).unwrap_or_default(),
        )
    }
}

/// Stability mode extra: the discrete norm of the solution and its bound.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub level: usize,
    pub h_x: f64,
    pub h_t: f64,
    pub norm: f64,
    pub bound: Option<DataBounds>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub rows: Vec<LevelRow>,
    pub stability: Vec<StabilityRow>,
    pub files: Vec<PathBuf>,
}

pub fn results_csv(rows: &[LevelRow]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

/// Blocks of `x y` lines, one per curve, separated by two blank lines.
pub fn plot_data(mode: Mode, rows: &[LevelRow]) -> String {
    let (xname, xs): (&str, Vec<f64>) = match mode {
        Mode::Stability | Mode::Infsup => ("h_x", rows.iter().map(|r| r.h_x).collect()),
        _ => ("h_t", rows.iter().map(|r| r.h_t).collect()),
    };
    type Getter = fn(&LevelRow) -> Option<f64>;
    let curves: &[(&str, Getter)] = match mode {
        Mode::Infsup => &[("gamma_h", |r| r.gamma_h), ("lower_bound", |r| r.lower_bound)],
        _ => &[
            ("err_Veh", |r| r.err_veh),
            ("err_U_L2", |r| r.err_u_l2),
            ("err_V_L2", |r| r.err_v_l2),
            ("err_cgradU", |r| r.err_cgrad_u),
        ],
    };
    let mut s = String::new();
    for (name, get) in curves {
        let pts: Vec<(f64, f64)> = xs
            .iter()
            .zip(rows)
            .filter_map(|(&x, r)| get(r).map(|y| (x, y)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        if !s.is_empty() {
            s.push_str("\n\n");
        }
        let _ = writeln!(s, "# {xname} {name}");
        for (x, y) in pts {
            let _ = writeln!(s, "{x:e} {y:e}");
        }
    }
    s
}

fn spaces(named: &NamedProblem, p: usize, r: usize, level: [usize; 2]) -> Result<(SplineSpace, SplineSpace)> {
    let spec = &named.spec;
    let sx = SplineSpace::uniform(spec.omega, level[0], p, r, Constraint::ZeroBoth)?;
    let st = SplineSpace::uniform((0.0, spec.final_time), level[1], p, r, Constraint::ZeroLeft)?;
    Ok((sx, st))
}

struct LevelResult {
    row: LevelRow,
    stability: Option<StabilityRow>,
    solution: Option<DiscreteSolution>,
}

fn run_level(
    cfg: &RunConfig,
    mode: Mode,
    named: &NamedProblem,
    index: usize,
    level: [usize; 2],
) -> Result<LevelResult> {
    let spec = &named.spec;
    let p = cfg.degree;
    let r = cfg.continuity()?;
    let (sx, st) = spaces(named, p, r, level)?;
    let mut row = LevelRow {
        level: index,
        h_x: (spec.omega.1 - spec.omega.0) / level[0] as f64,
        h_t: spec.final_time / level[1] as f64,
        p,
        regularity: r,
        dofs: 2 * sx.dim() * st.dim(),
        ..Default::default()
    };
    if mode == Mode::Infsup {
        let est = estimate_infsup(spec, &sx, &st, cfg.quad_points)?;
        row.gamma_h = Some(est.gamma_h);
        row.lower_bound = Some(est.lower_bound);
        return Ok(LevelResult {
            row,
            stability: None,
            solution: None,
        });
    }

    let start = Instant::now();
    let sys = assemble_with(spec, &sx, &st, cfg.quad_points)?;
    let z = sys.solve_coefficients()?;
    row.solve_seconds = Some(start.elapsed().as_secs_f64());
    let res = sys.galerkin_residual(&z);
    if !(res < GALERKIN_TOL) {
        return Err(Error::SingularSystem(format!(
            "Galerkin residual {res:e} at level {index} exceeds {GALERKIN_TOL:e}"
        )));
    }
    let stability = if mode == Mode::Stability {
        let norm = NormOperators::new(&sys)?.veh_sq(&z).sqrt();
        Some(StabilityRow {
            level: index,
            h_x: row.h_x,
            h_t: row.h_t,
            norm,
            bound: data_bound(spec)?,
        })
    } else {
        None
    };
    let sol = DiscreteSolution::from_coefficients(sx, st, z, spec);
    if spec.exact.is_some() {
        let pair = error_report(&sol, spec, None)?;
        let rel = pair.relative();
        row.err_veh = Some(rel.err_veh);
        row.err_u_l2 = Some(rel.err_u_l2);
        row.err_v_l2 = Some(rel.err_v_l2);
        row.err_cgrad_u = Some(pair.relative_cgrad());
    }
    Ok(LevelResult {
        row,
        stability,
        solution: (mode == Mode::Solve).then_some(sol),
    })
}

fn fill_eocs(rows: &mut [LevelRow]) {
    type Field = fn(&mut LevelRow) -> (&mut Option<f64>, &mut Option<f64>);
    let fields: [Field; 4] = [
        |r| (&mut r.err_veh, &mut r.eoc_veh),
        |r| (&mut r.err_u_l2, &mut r.eoc_u_l2),
        |r| (&mut r.err_v_l2, &mut r.eoc_v_l2),
        |r| (&mut r.err_cgrad_u, &mut r.eoc_cgrad_u),
    ];
    for f in fields {
        let errs: Option<Vec<f64>> = rows.iter_mut().map(|r| *f(r).0).collect();
        let Some(errs) = errs else { continue };
        for (r, e) in rows.iter_mut().zip(eoc(&errs)) {
            *f(r).1 = e;
        }
    }
}

fn check_infsup_sizes(cfg: &RunConfig, named: &NamedProblem) -> Result<()> {
    let r = cfg.continuity()?;
    for &l in &cfg.levels {
        let (sx, st) = spaces(named, cfg.degree, r, l).map_err(|e| Error::Config(e.to_string()))?;
        let n = 2 * sx.dim() * st.dim();
        if n > INFSUP_MAX_DOFS {
            return Err(Error::Config(format!(
                "level {l:?} has {n} unknowns; inf-sup runs are limited to {INFSUP_MAX_DOFS}"
            )));
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::write(path, text)?;
    files.push(path.to_path_buf());
    Ok(())
}

/// Random points in Q_T with U_h, V_h there, reproducible from `seed`.
pub fn samples_csv(sol: &DiscreteSolution, seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = sol.space_x.interval();
    let (_, t_end) = sol.space_t.interval();
    let mut s = String::from("x,t,U_h,V_h\n");
    for _ in 0..N_SAMPLES {
        let x = rng.gen_range(a..b);
        let t = rng.gen_range(0.0..t_end);
        let (u, v) = sol.evaluate(x, t, 0, 0)?;
        let _ = writeln!(s, "{x:e},{t:e},{u:e},{v:e}");
    }
    Ok(s)
}

fn run_inner(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate(opts.mode)?;
    let named = cfg.problem()?;
    if opts.mode == Mode::Infsup {
        check_infsup_sizes(cfg, &named)?;
    }
    let out_dir = opts
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("xtwave-out"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out_dir.display())))?;

    // levels are independent; rows come back in level order
    let results: Vec<LevelResult> = cfg
        .levels
        .par_iter()
        .enumerate()
        .map(|(i, &l)| run_level(cfg, opts.mode, &named, i, l))
        .collect::<Result<_>>()?;

    let mut rows: Vec<LevelRow> = results.iter().map(|r| r.row.clone()).collect();
    if opts.mode == Mode::Convergence {
        fill_eocs(&mut rows);
    }
    let mut files = Vec::new();
    write(&out_dir.join("results.csv"), &results_csv(&rows), &mut files)?;
    write(&out_dir.join("plot.dat"), &plot_data(opts.mode, &rows), &mut files)?;
    write(&out_dir.join("config.toml"), &cfg.to_toml()?, &mut files)?;

    let stability: Vec<StabilityRow> = results.iter().filter_map(|r| r.stability.clone()).collect();
    if opts.mode == Mode::Stability {
        let mut s = String::from("level,h_x,h_t,stability_norm,data_bound,data_bound_sqrt_t\n");
        for r in &stability {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{},{}",
                r.level,
                r.h_x,
                r.h_t,
                r.norm,
                opt(r.bound.map(|b| b.discrete)),
                opt(r.bound.map(|b| b.continuous))
            );
        }
        write(&out_dir.join("stability.csv"), &s, &mut files)?;
    }
    if let Some(sol) = results.last().and_then(|r| r.solution.as_ref()) {
        let dump = SolutionDump::from_solution(&named.name, sol);
        let path = out_dir.join("solution.txt");
        dump.write(&path)?;
        files.push(path);
        let seed = opts.seed.or(cfg.seed).unwrap_or(0);
        write(&out_dir.join("samples.csv"), &samples_csv(sol, seed)?, &mut files)?;
    }
    Ok(RunOutput {
        out_dir,
        rows,
        stability,
        files,
    })
}

/// Runs `cfg` in the given mode and writes the artifacts.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutput> {
    // dense kernels run sequentially so results do not depend on threads
    faer::set_global_parallelism(faer::Par::Seq);
    match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_inner(cfg, opts))
        }
        None => run_inner(cfg, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_has_seventeen_columns() {
        assert_eq!(CSV_HEADER.split(',').count(), 17);
        let row = LevelRow::default();
        assert_eq!(row.to_csv().split(',').count(), 17);
        assert!(row.to_csv().ends_with(",,,"));
    }

    #[test]
    fn eocs_only_where_errors_exist() {
        let mut rows: Vec<LevelRow> = [0.4, 0.1, 0.025]
            .iter()
            .map(|&e| LevelRow {
                err_veh: Some(e),
                ..Default::default()
            })
            .collect();
        fill_eocs(&mut rows);
        assert_eq!(rows[0].eoc_veh, None);
        assert!((rows[2].eoc_veh.unwrap() - 2.0).abs() < 1e-12);
        assert!(rows.iter().all(|r| r.eoc_u_l2.is_none()));
    }

    #[test]
    fn plot_data_skips_empty_curves() {
        let rows = vec![LevelRow {
            h_x: 0.5,
            gamma_h: Some(0.3),
            lower_bound: Some(0.08),
            ..Default::default()
        }];
        let s = plot_data(Mode::Infsup, &rows);
        assert!(s.starts_with("# h_x gamma_h\n5e-1 3e-1\n"));
        assert_eq!(plot_data(Mode::Solve, &rows), "");
    }
}
