//! Command-line front end. Parses flags and `key=value` config files into an
//! [`ExperimentConfig`], dispatches the requested experiment and writes CSV
//! tables (plus optional binary field dumps) into the output directory.
//!
//! Exit codes: 0 on success, 1 when a solve does not converge or an experiment
//! fails at run time, 2 on configuration errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

use crate::diagnostics::{
    atom_detect, commutator_residual, cutoff_convergence_probe, energy_density, gamma_limit_value, power_density,
    Atom, AtomList,
};
use crate::error::{Error, Result};
use crate::extremals::{
    eps_schedule, glued_bubbles, recovery_sequence, rescaled_bubble, sigma_schedule, AtomSpec, BubbleProfile,
    BubbleSpec, CutoffSpec,
};
use crate::solver::{eps_sweep, solve, SolverConfig};
use crate::spaces::{
    box_lp_integral, box_sobolev_quotient, gagliardo_seminorm_sq, hoelder_envelope, hs_dot_norm_sq, lp_integral,
    DomainMask, ExponentPack, Shape,
};
use crate::spectral::{forward_transform, inverse_transform, write_field, Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CommandKind {
    BubbleVerify,
    NormsCheck,
    Solve,
    Sweep,
    RecoveryDemo,
    GammaCheck,
}

#[derive(Debug, Parser)]
#[command(name = "fracsob", version, about = "Fractional Sobolev pseudo-spectral experiments")]
struct Args {
    #[arg(value_enum)]
    command: CommandKind,
    /// Spatial dimension.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Fractional order, in (0, N/2).
    #[arg(long, allow_negative_numbers = true)]
    s: Option<f64>,
    /// Grid points per axis (power of two).
    #[arg(long = "M")]
    m: Option<usize>,
    /// Half-width of the periodic box [-L, L)^N.
    #[arg(long = "L")]
    l: Option<f64>,
    /// Comma-separated, strictly decreasing subcritical offsets.
    #[arg(long = "eps-schedule", allow_hyphen_values = true)]
    eps_schedule: Option<String>,
    /// Domain, e.g. `interval:-1,1`, `ball:0,0;1`, `box:-1,-1;1,1`, `polygon:0,0;1,0;0,1`.
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<String>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write binary field dumps.
    #[arg(long = "emit-fields")]
    emit_fields: bool,
    /// Omit timestamps so that every output file is byte-identical across runs.
    #[arg(long)]
    reproducible: bool,
    /// Solve every eps from the default start instead of the previous maximizer.
    #[arg(long = "cold-start")]
    cold_start: bool,
    /// `key=value` configuration file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub grid: Grid,
    pub pack: ExponentPack,
    pub mask: DomainMask,
    pub solver: SolverConfig,
    pub out: PathBuf,
    pub emit_fields: bool,
    pub reproducible: bool,
}

impl ExperimentConfig {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn seed(&self) -> u64 {
        self.solver.seed
    }
}

/// Values gathered from a config file or the command line before defaults.
#[derive(Debug, Default, Clone)]
struct Raw {
    n: Option<usize>,
    s: Option<f64>,
    m: Option<usize>,
    l: Option<f64>,
    eps_schedule: Option<Vec<f64>>,
    omega: Option<String>,
    max_iters: Option<usize>,
    tol: Option<f64>,
    damping: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    emit_fields: Option<bool>,
    reproducible: Option<bool>,
    warm_start: Option<bool>,
}

impl Raw {
    fn overlay(self, top: Raw) -> Raw {
        Raw {
            n: top.n.or(self.n),
            s: top.s.or(self.s),
            m: top.m.or(self.m),
            l: top.l.or(self.l),
            eps_schedule: top.eps_schedule.or(self.eps_schedule),
            omega: top.omega.or(self.omega),
            max_iters: top.max_iters.or(self.max_iters),
            tol: top.tol.or(self.tol),
            damping: top.damping.or(self.damping),
            seed: top.seed.or(self.seed),
            out: top.out.or(self.out),
            emit_fields: top.emit_fields.or(self.emit_fields),
            reproducible: top.reproducible.or(self.reproducible),
            warm_start: top.warm_start.or(self.warm_start),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{}`", v.trim())))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|t| parse_value(key, t)).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::config(key, format!("expected a boolean, got `{other}`"))),
    }
}

/// Parse `key=value` lines; `#` starts a comment. Keys may use `-` or `_`.
fn parse_file(text: &str) -> Result<Raw> {
    let mut raw = Raw::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::config(
                format!("line {}", lineno + 1),
                "expected key=value",
            ));
        };
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "N" => raw.n = Some(parse_value("N", v)?),
            "s" => raw.s = Some(parse_value("s", v)?),
            "M" => raw.m = Some(parse_value("M", v)?),
            "L" => raw.l = Some(parse_value("L", v)?),
            "eps_schedule" => raw.eps_schedule = Some(parse_list("eps_schedule", v)?),
            "omega" => raw.omega = Some(v.to_string()),
            "max_iters" => raw.max_iters = Some(parse_value("max_iters", v)?),
            "tol" => raw.tol = Some(parse_value("tol", v)?),
            "damping" => raw.damping = Some(parse_value("damping", v)?),
            "seed" => raw.seed = Some(parse_value("seed", v)?),
            "out" => raw.out = Some(PathBuf::from(v)),
            "emit_fields" => raw.emit_fields = Some(parse_bool("emit_fields", v)?),
            "reproducible" => raw.reproducible = Some(parse_bool("reproducible", v)?),
            "warm_start" => raw.warm_start = Some(parse_bool("warm_start", v)?),
            _ => return Err(Error::config(key, "unknown key")),
        }
    }
    Ok(raw)
}

fn parse_numbers(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(key, format!("bad number `{}`", t.trim())))
        })
        .collect()
}

/// Parse a domain spec such as `interval:-1,1` or `ball:0,0;0.5`.
pub fn parse_shape(text: &str) -> Result<Shape> {
    const KEY: &str = "omega";
    let (kind, body) = text
        .split_once(':')
        .ok_or_else(|| Error::config(KEY, "expected kind:parameters"))?;
    let parts: Vec<&str> = body.split(';').collect();
    let shape = match kind.trim() {
        "interval" => {
            let v = parse_numbers(KEY, body)?;
            if v.len() != 2 {
                return Err(Error::config(KEY, "interval needs a,b"));
            }
            Shape::Interval { a: v[0], b: v[1] }
        }
        "ball" => {
            if parts.len() != 2 {
                return Err(Error::config(KEY, "ball needs center;radius"));
            }
            Shape::Ball {
                center: parse_numbers(KEY, parts[0])?,
                radius: parse_value(KEY, parts[1])?,
            }
        }
        "box" => {
            if parts.len() != 2 {
                return Err(Error::config(KEY, "box needs lo;hi"));
            }
            Shape::Box {
                lo: parse_numbers(KEY, parts[0])?,
                hi: parse_numbers(KEY, parts[1])?,
            }
        }
        "polygon" => {
            let vertices = parts
                .iter()
                .map(|p| {
                    let v = parse_numbers(KEY, p)?;
                    if v.len() != 2 {
                        return Err(Error::config(KEY, "polygon vertices are x,y pairs"));
                    }
                    Ok([v[0], v[1]])
                })
                .collect::<Result<Vec<_>>>()?;
            Shape::Polygon { vertices }
        }
        other => return Err(Error::config(KEY, format!("unknown shape `{other}`"))),
    };
    Ok(shape)
}

fn default_shape(dim: usize) -> Shape {
    if dim == 1 {
        Shape::Interval { a: -1.0, b: 1.0 }
    } else {
        Shape::Ball {
            center: vec![0.0; dim],
            radius: 1.0,
        }
    }
}

fn finalize(command: CommandKind, raw: Raw) -> Result<ExperimentConfig> {
    let dim = raw.n.unwrap_or(1);
    if !(1..=3).contains(&dim) {
        return Err(Error::config("N", "must be 1, 2 or 3"));
    }
    let s = raw.s.unwrap_or(0.25);
    if !(s > 0.0 && s < dim as f64 / 2.0) {
        return Err(Error::config("s", "s must lie in (0, N/2)"));
    }
    let m = raw.m.unwrap_or(match dim {
        1 => 512,
        2 => 128,
        _ => 32,
    });
    let l = raw.l.unwrap_or(8.0);
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::config("L", "must be positive"));
    }
    let grid = Grid::new(dim, m, l).map_err(|e| Error::config("M", e.to_string()))?;
    let pack = ExponentPack::critical(dim, s).map_err(|e| Error::config("s", e.to_string()))?;
    let shape = match &raw.omega {
        Some(t) => parse_shape(t)?,
        None => default_shape(dim),
    };
    if shape.dim() != dim {
        return Err(Error::config(
            "omega",
            format!("domain has dimension {} but N = {dim}", shape.dim()),
        ));
    }
    let mask = DomainMask::new(&grid, shape).map_err(|e| Error::config("omega", e.to_string()))?;
    let defaults = SolverConfig::default();
    let solver = SolverConfig {
        max_iters: raw.max_iters.unwrap_or(defaults.max_iters),
        tol: raw.tol.unwrap_or(defaults.tol),
        damping: raw.damping.unwrap_or(defaults.damping),
        seed: raw.seed.unwrap_or(defaults.seed),
        perturbation: defaults.perturbation,
        eps_schedule: raw.eps_schedule.unwrap_or(defaults.eps_schedule),
        warm_start: raw.warm_start.unwrap_or(defaults.warm_start),
    };
    solver.validate()?;
    for &eps in &solver.eps_schedule {
        pack.with_eps(eps)
            .map_err(|e| Error::config("eps_schedule", e.to_string()))?;
    }
    Ok(ExperimentConfig {
        command,
        grid,
        pack,
        mask,
        solver,
        out: raw.out.unwrap_or_else(|| PathBuf::from("out")),
        emit_fields: raw.emit_fields.unwrap_or(false),
        reproducible: raw.reproducible.unwrap_or(false),
    })
}

/// Build a validated config from arguments (without the program name) and an
/// optional `key=value` file. A `--config` flag in `args` is used when `file`
/// is `None`. Precedence: command line, then file, then defaults.
pub fn parse_config<S: AsRef<str>>(args: &[S], file: Option<&Path>) -> Result<ExperimentConfig> {
    let argv = std::iter::once("fracsob").chain(args.iter().map(|a| a.as_ref()));
    let parsed = Args::try_parse_from(argv).map_err(|e| {
        let msg = e.to_string();
        Error::config("arguments", msg.lines().next().unwrap_or("").to_string())
    })?;
    let file = file.map(Path::to_path_buf).or_else(|| parsed.config.clone());
    let from_file = match &file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::config("config", format!("{}: {e}", p.display())))?;
            parse_file(&text)?
        }
        None => Raw::default(),
    };
    let eps_schedule = parsed
        .eps_schedule
        .as_deref()
        .map(|v| parse_list("eps_schedule", v))
        .transpose()?;
    let cli = Raw {
        n: parsed.n,
        s: parsed.s,
        m: parsed.m,
        l: parsed.l,
        eps_schedule,
        omega: parsed.omega.clone(),
        max_iters: parsed.max_iters,
        tol: parsed.tol,
        damping: parsed.damping,
        seed: parsed.seed,
        out: parsed.out.clone(),
        emit_fields: parsed.emit_fields.then_some(true),
        reproducible: parsed.reproducible.then_some(true),
        warm_start: parsed.cold_start.then_some(false),
    };
    finalize(parsed.command, from_file.overlay(cli))
}

/// Parse process arguments, run, and return the exit code.
pub fn run_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<String> = args
        .into_iter()
        .skip(1)
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    if args.iter().any(|a| a == "--help" || a == "-h" || a == "--version" || a == "-V") {
        let argv = std::iter::once("fracsob".to_string()).chain(args);
        if let Err(e) = Args::try_parse_from(argv) {
            let _ = e.print();
        }
        return 0;
    }
    match parse_config(&args, None) {
        Ok(config) => run(&config),
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Run a validated experiment and return the exit code.
pub fn run(config: &ExperimentConfig) -> i32 {
    let outcome = fs::create_dir_all(&config.out)
        .map_err(Error::from)
        .and_then(|_| match config.command {
            CommandKind::BubbleVerify => bubble_verify(config),
            CommandKind::NormsCheck => norms_check(config),
            CommandKind::Solve => solve_command(config),
            CommandKind::Sweep => sweep_command(config),
            CommandKind::RecoveryDemo => recovery_demo(config),
            CommandKind::GammaCheck => gamma_check(config),
        });
    match outcome {
        Ok(Status::Ok) => 0,
        Ok(Status::NotConverged) => {
            eprintln!("warning: at least one solve did not converge");
            1
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    NotConverged,
}

/// Leading `N,s,M,L,eps` columns shared by every table.
fn params(config: &ExperimentConfig, eps: f64) -> String {
    format!(
        "{},{},{},{},{}",
        config.dim(),
        config.pack.s,
        config.grid.points_per_dim(),
        config.grid.half_width(),
        eps
    )
}

fn write_table(config: &ExperimentConfig, name: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    fs::write(config.out.join(name), text)?;
    Ok(())
}

fn timestamp(config: &ExperimentConfig) -> Option<String> {
    if config.reproducible {
        return None;
    }
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Some(format!("unix:{secs}"))
}

fn dump_field(config: &ExperimentConfig, name: &str, u: &Field) -> Result<()> {
    let dir = config.out.join("fields");
    fs::create_dir_all(&dir)?;
    let file = fs::File::create(dir.join(name))?;
    write_field(u, std::io::BufWriter::new(file), timestamp(config).as_deref())
}

fn coords(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Bubble scale used by the CLI experiments: the box is `8 lambda` wide in half-width.
fn bubble_scale(config: &ExperimentConfig) -> f64 {
    config.grid.half_width() / 8.0
}

fn bubble_verify(config: &ExperimentConfig) -> Result<Status> {
    let lambda = bubble_scale(config);
    let spec = BubbleSpec::unit(lambda, vec![0.0; config.dim()], config.pack)?;
    let sstar = config.pack.sobolev_constant();
    let mut rows = Vec::new();
    for eps in eps_schedule(lambda, &config.grid) {
        let w = rescaled_bubble(&spec, eps, &config.grid)?;
        let q = box_sobolev_quotient(&w, &config.pack)?;
        rows.push(format!(
            "{},{},{},{},{},{},{}",
            params(config, eps),
            lambda,
            hs_dot_norm_sq(&w, config.pack.s),
            box_lp_integral(&w, config.pack.two_star),
            q,
            sstar,
            (q - sstar).abs() / sstar
        ));
    }
    write_table(
        config,
        "bubble_verify.csv",
        "N,s,M,L,eps,lambda,hs_norm_sq,lp_integral,quotient,sobolev_constant,rel_error",
        &rows,
    )?;
    Ok(Status::Ok)
}

/// Smooth field supported in the ball of radius `radius` about the origin: a
/// `C^infinity` bump times a random trigonometric polynomial of degree four
/// along a random direction.
pub fn random_compact_field(grid: &Grid, radius: f64, rng: &mut impl Rng) -> Result<Field> {
    let n = grid.dim();
    let mut dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-3);
    dir.iter_mut().for_each(|d| *d /= norm);
    let c0: f64 = rng.gen_range(-1.0..1.0);
    let coef: Vec<(f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    Field::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum::<f64>() / (radius * radius);
        if r2 >= 1.0 {
            return 0.0;
        }
        let bump = (1.0 - 1.0 / (1.0 - r2)).exp();
        let t: f64 = x.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>() * std::f64::consts::PI / radius;
        let poly: f64 = c0
            + coef
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let kk = (k + 1) as f64;
                    a * (kk * t).cos() + b * (kk * t).sin()
                })
                .sum::<f64>();
        bump * poly
    })
}

/// `[u]^2 / ||u||^2_{H^s}` in the continuum: `2 pi^{N/2} Gamma(1-s) / (s 4^s Gamma((N+2s)/2))`.
pub fn gagliardo_ratio_constant(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    2.0 * std::f64::consts::PI.powf(n / 2.0) * gamma(1.0 - s) / (s * 4f64.powf(s) * gamma((n + 2.0 * s) / 2.0))
}

fn norms_check(config: &ExperimentConfig) -> Result<Status> {
    let g = &config.grid;
    let s = config.pack.s;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed());
    let row = |q: &str, v: f64| {
        format!(
            "{q},{},{},{},{},{v}",
            config.dim(),
            g.points_per_dim(),
            g.half_width(),
            s
        )
    };
    let mut rows = Vec::new();
    let mut plancherel = 0.0f64;
    let mut roundtrip = 0.0f64;
    for _ in 0..10 {
        let u = Field::new(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let spec = forward_transform(&u);
        let e: f64 = spec.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>() * spec.spectral_weight();
        plancherel = plancherel.max((e - u.l2_norm_sq()).abs() / u.l2_norm_sq());
        let back = inverse_transform(&spec)?;
        roundtrip = roundtrip.max(back.lin_comb(1.0, &u, -1.0)?.max_abs() / u.max_abs());
    }
    rows.push(row("plancherel_max_rel_error", plancherel));
    rows.push(row("roundtrip_max_rel_error", roundtrip));
    if s < 1.0 {
        let radius = 0.5 * g.half_width().min(2.0);
        let mut ratios = Vec::new();
        for i in 0..5 {
            let u = random_compact_field(g, radius, &mut rng)?;
            let ratio = gagliardo_seminorm_sq(&u, s)? / hs_dot_norm_sq(&u, s);
            rows.push(row(&format!("gagliardo_ratio_{}", i + 1), ratio));
            ratios.push(ratio);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (ratios.len() - 1) as f64;
        rows.push(row("gagliardo_ratio_mean", mean));
        rows.push(row("gagliardo_ratio_cv", var.sqrt() / mean));
        rows.push(row("gagliardo_ratio_continuum", gagliardo_ratio_constant(config.dim(), s)));
    }
    write_table(config, "norms.csv", "quantity,N,M,L,s,value", &rows)?;
    Ok(Status::Ok)
}

const SOLVE_HEADER: &str =
    "N,s,M,L,eps,value,envelope,multiplier,iters,converged,argmax_coords,mass_r1,mass_r2,tail_energy";

fn solve_command(config: &ExperimentConfig) -> Result<Status> {
    let eps = config.solver.eps_schedule[0];
    let pack = config.pack.with_eps(eps)?;
    let r = solve(&pack, &config.mask, &config.solver, None)?;
    let stats = crate::diagnostics::concentration_stats(&r.maximizer, &pack, &config.mask)?;
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{}",
        params(config, eps),
        r.value,
        hoelder_envelope(&pack, &config.mask),
        r.multiplier,
        r.iters,
        r.converged,
        coords(&stats.argmax),
        stats.mass_r1,
        stats.mass_r2,
        stats.tail_energy
    );
    write_table(config, "solve.csv", SOLVE_HEADER, &[row])?;
    let mut trace = String::from("iter,value\n");
    for (i, v) in r.trace.iter().enumerate() {
        let _ = writeln!(trace, "{i},{v}");
    }
    fs::write(config.out.join("solve_trace.csv"), trace)?;
    if config.emit_fields {
        dump_field(config, &format!("u_eps{eps}.bin"), &r.maximizer)?;
    }
    Ok(if r.converged { Status::Ok } else { Status::NotConverged })
}

fn sweep_command(config: &ExperimentConfig) -> Result<Status> {
    let entries = eps_sweep(&config.pack, &config.mask, &config.solver)?;
    let mut rows = Vec::new();
    let mut status = Status::Ok;
    let mut atoms_json = Vec::new();
    for e in &entries {
        let pack = config.pack.with_eps(e.eps)?;
        let envelope = hoelder_envelope(&pack, &config.mask);
        match &e.outcome {
            Ok(o) => {
                let r = &o.result;
                if !r.converged {
                    status = Status::NotConverged;
                }
                rows.push(format!(
                    "{},{},{},{},{},{},{},{},{},{}",
                    params(config, e.eps),
                    r.value,
                    envelope,
                    r.multiplier,
                    r.iters,
                    r.converged,
                    coords(&o.stats.argmax),
                    o.stats.mass_r1,
                    o.stats.mass_r2,
                    o.stats.tail_energy
                ));
                atoms_json.push(format!("{{\"eps\":{},\"atoms\":{}}}", e.eps, o.stats.atoms.to_json()));
                if config.emit_fields {
                    dump_field(config, &format!("u_eps{}.bin", e.eps), &r.maximizer)?;
                }
            }
            Err(err) => {
                eprintln!("eps = {}: {err}", e.eps);
                status = Status::NotConverged;
                rows.push(format!(
                    "{},NaN,{envelope},NaN,0,false,,NaN,NaN,NaN",
                    params(config, e.eps)
                ));
            }
        }
    }
    write_table(config, "sweep.csv", SOLVE_HEADER, &rows)?;
    fs::write(config.out.join("sweep_atoms.json"), format!("[{}]\n", atoms_json.join(",")))?;
    Ok(status)
}

/// Smooth bump centered on the domain centroid with `||u||^2_{H^s} = energy`.
pub fn demo_field(mask: &DomainMask, s: f64, energy: f64) -> Result<Field> {
    let c = mask.centroid();
    let r = 0.9 * mask.shape().inner_distance(&c);
    let u = Field::from_fn(mask.grid(), |x| {
        let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (r * r);
        if d2 >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - d2)).exp()
        }
    })?;
    let u = mask.restrict(&u);
    let e = hs_dot_norm_sq(&u, s);
    if e <= 0.0 {
        return Err(Error::DegenerateInput("demo field vanishes on the grid".into()));
    }
    Ok(u.scaled((energy / e).sqrt()))
}

fn recovery_demo(config: &ExperimentConfig) -> Result<Status> {
    let mask = &config.mask;
    let pack = config.pack;
    let q = pack.two_star;
    let u = demo_field(mask, pack.s, 0.25)?;
    let atoms = AtomSpec::new(vec![mask.centroid()], vec![0.5])?;
    let limit = lp_integral(&u, q, mask) + pack.sobolev_constant() * 0.5f64.powf(q / 2.0);
    let profile = BubbleProfile { scale: 1.0, pack };
    let mut rows = Vec::new();
    for sigma in sigma_schedule(&atoms, mask) {
        for eps in eps_schedule(profile.scale, &config.grid) {
            match recovery_sequence(&u, &atoms, &profile, sigma, eps, mask) {
                Ok(rec) => {
                    let f = lp_integral(&rec.field, q, mask);
                    rows.push(format!(
                        "{},{sigma},{f},{limit},{},{}",
                        params(config, eps),
                        (f - limit).abs() / limit,
                        hs_dot_norm_sq(&rec.field, pack.s)
                    ));
                }
                Err(e) => eprintln!("sigma = {sigma}, eps = {eps}: {e}"),
            }
        }
    }
    write_table(
        config,
        "recovery.csv",
        "N,s,M,L,eps,sigma,f_value,limit_value,rel_gap,hs_norm_sq",
        &rows,
    )?;
    Ok(Status::Ok)
}

/// Admissible pairs `(u, mu)`: energy split between a smooth part and up to
/// three atoms, for each of a few total budgets.
pub fn admissible_pairs(mask: &DomainMask, s: f64) -> Result<Vec<(Field, AtomList)>> {
    let c = mask.centroid();
    let reach = 0.5 * mask.shape().inner_distance(&c);
    let mut out = Vec::new();
    for &smooth in &[0.0, 0.25, 0.5, 1.0] {
        let u = if smooth > 0.0 {
            demo_field(mask, s, smooth)?
        } else {
            Field::zeros(mask.grid())
        };
        let rest = 1.0 - smooth;
        for k in 0..=3usize {
            if k > 0 && rest <= 0.0 {
                continue;
            }
            let entries = (0..k)
                .map(|j| {
                    let mut x = c.clone();
                    x[0] += reach * (j as f64 - 1.0);
                    Atom {
                        x,
                        mu: rest / k as f64,
                        nu: 0.0,
                    }
                })
                .collect();
            out.push((u.clone(), AtomList { entries }));
        }
    }
    Ok(out)
}

fn gamma_check(config: &ExperimentConfig) -> Result<Status> {
    let mask = &config.mask;
    let pack = config.pack;
    let sstar = pack.sobolev_constant();
    let q = pack.two_star;
    let header = "N,s,M,L,eps,case,quantity,value,bound,within_bound";
    let mut rows = Vec::new();
    for (i, (u, atoms)) in admissible_pairs(mask, pack.s)?.iter().enumerate() {
        let v = gamma_limit_value(u, atoms, &pack, mask)?;
        let bound = 1.05 * sstar;
        rows.push(format!(
            "{},pair_{i},gamma_limit_value,{v},{bound},{}",
            params(config, 0.0),
            v <= bound
        ));
    }
    let lambda = bubble_scale(config);
    let center = vec![0.0; config.dim()];
    let spec = BubbleSpec::unit(lambda, center.clone(), pack)?;
    let cut = CutoffSpec::new(center.clone(), 0.5 * lambda)?;
    let phi = cut.sample(&config.grid);
    for eps in eps_schedule(lambda, &config.grid) {
        let w = rescaled_bubble(&spec, eps, &config.grid)?;
        let c = commutator_residual(&w, &phi, pack.s)?;
        rows.push(format!("{},bubble,commutator_residual,{c},,", params(config, eps)));
    }
    let u = demo_field(mask, pack.s, 1.0)?;
    let lambdas = [0.5, 0.25, 0.125];
    let probe_cut = CutoffSpec::new(mask.centroid(), 0.25 * mask.shape().inner_distance(&mask.centroid()))?;
    for (l, v) in lambdas.iter().zip(cutoff_convergence_probe(&u, &probe_cut, &lambdas, pack.s)?) {
        rows.push(format!("{},lambda_{l},cutoff_shrinking_norm,{v},,", params(config, 0.0)));
    }
    let atoms = AtomSpec::new(vec![mask.centroid()], vec![0.9])?;
    let profile = BubbleProfile { scale: 1.0, pack };
    for eps in eps_schedule(profile.scale, &config.grid) {
        let glued = match glued_bubbles(&atoms, &profile, eps, &config.grid, mask) {
            Ok(g) => g,
            Err(e) => {
                eprintln!("eps = {eps}: {e}");
                continue;
            }
        };
        let m = energy_density(&glued.field, pack.s)?;
        let nu = power_density(&glued.field, q);
        let radius = 0.05 * 2.0 * config.grid.half_width();
        for (j, a) in atom_detect(&m, &nu, radius, 0.1)?.entries.iter().enumerate() {
            let bound = 1.10 * sstar * a.mu.powf(q / 2.0);
            rows.push(format!(
                "{},atom_{j},nu,{},{bound},{}",
                params(config, eps),
                a.nu,
                a.nu <= bound
            ));
        }
    }
    write_table(config, "gamma_check.csv", header, &rows)?;
    Ok(Status::Ok)
}
