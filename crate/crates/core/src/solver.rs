//! Maximizers of the subcritical functional `F_eps(u) = int_Omega |u|^{2*-eps}`
//! over the unit `H^s` ball of fields supported in `Omega`.
//!
//! Each step solves the restricted Euler-Lagrange system
//! `P (-Delta)^s P v = |u|^{p-2} u` by conjugate gradients, then takes the damped
//! average with the current iterate and renormalizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{concentration_stats, ConcentrationStats};
use crate::error::{Error, Result};
use crate::spaces::{hs_dot_norm_sq, lp_integral, subcritical_value, DomainMask, ExponentPack, DEGENERATE_ENERGY};
use crate::spectral::{frac_power, Field};

/// Relative residual target for the inner linear solves.
const CG_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when successive values differ by less than `tol * value`.
    pub tol: f64,
    /// Weight of the new direction in the damped update, in `(0, 1]`.
    pub damping: f64,
    pub seed: u64,
    /// Relative amplitude of the random perturbation on the default start.
    pub perturbation: f64,
    pub eps_schedule: Vec<f64>,
    pub warm_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 5000,
            tol: 1e-8,
            damping: 0.8,
            seed: 0,
            perturbation: 0.05,
            eps_schedule: vec![0.8, 0.4, 0.2, 0.1],
            warm_start: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be positive"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::config("tol", "must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("damping", "must lie in (0, 1]"));
        }
        if !(self.perturbation >= 0.0 && self.perturbation < 1.0) {
            return Err(Error::config("perturbation", "must lie in [0, 1)"));
        }
        if self.eps_schedule.is_empty() {
            return Err(Error::config("eps_schedule", "empty"));
        }
        if self.eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::config("eps_schedule", "must be strictly decreasing"));
        }
        if self.eps_schedule.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::config("eps_schedule", "entries must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub maximizer: Field,
    pub value: f64,
    /// Lagrange multiplier `<(-Delta)^s u, u> / F_eps(u)`.
    pub multiplier: f64,
    /// Relative Euler-Lagrange residual over `Omega`.
    pub residual: f64,
    pub iters: usize,
    /// `F_eps` after each iteration, starting with the initial field.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Multiplier and relative residual of `(-Delta)^s u = lambda |u|^{p-2} u` on `Omega`.
pub fn el_residual(u: &Field, pack: &ExponentPack, mask: &DomainMask) -> Result<(f64, f64)> {
    let p = pack.exponent();
    let au = frac_power(u, 2.0 * pack.s)?;
    let energy = hs_dot_norm_sq(u, pack.s);
    let f = lp_integral(u, p, mask);
    if f <= 0.0 || energy < DEGENERATE_ENERGY {
        return Err(Error::DegenerateInput("zero field has no multiplier".into()));
    }
    let lambda = energy / f;
    let (a, v) = (au.values(), u.values());
    let mut num = 0.0;
    let mut den = 0.0;
    for &i in mask.indices() {
        let g = v[i].abs().powf(p - 2.0) * v[i];
        num += (a[i] - lambda * g).powi(2);
        den += a[i] * a[i];
    }
    Ok((lambda, (num / den).sqrt()))
}

/// `P (-Delta)^s P` acting on values at the cells of `Omega`.
struct RestrictedOperator<'a> {
    mask: &'a DomainMask,
    s: f64,
}

impl RestrictedOperator<'_> {
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let grid = self.mask.grid();
        let mut full = vec![0.0; grid.len()];
        for (&i, &v) in self.mask.indices().iter().zip(x) {
            full[i] = v;
        }
        let out = frac_power(&Field::new(grid, full)?, 2.0 * self.s)?;
        let vals = out.values();
        Ok(self.mask.indices().iter().map(|&i| vals[i]).collect())
    }

    /// Conjugate gradients from the initial guess `x`.
    fn solve(&self, b: &[f64], mut x: Vec<f64>) -> Result<Vec<f64>> {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let bnorm = dot(b, b).sqrt();
        if bnorm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let ax = self.apply(&x)?;
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let max_iters = 4 * b.len() + 100;
        for _ in 0..max_iters {
            if rr.sqrt() <= CG_TOLERANCE * bnorm {
                break;
            }
            let ap = self.apply(&p)?;
            let alpha = rr / dot(&p, &ap);
            for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
                *xi += alpha * pi;
                *ri -= alpha * api;
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
        }
        Ok(x)
    }
}

fn normalize(u: &Field, s: f64) -> Result<Field> {
    let e = hs_dot_norm_sq(u, s);
    if e < DEGENERATE_ENERGY {
        return Err(Error::DegenerateInput(format!("H^s energy {e:e} too small to normalize")));
    }
    Ok(u.scaled(1.0 / e.sqrt()))
}

/// Smooth bump centered on the domain centroid, optionally perturbed by a
/// seeded relative noise of amplitude `perturbation`.
pub fn initial_field(mask: &DomainMask, seed: u64, perturbation: f64) -> Result<Field> {
    let grid = mask.grid();
    let c = mask.centroid();
    let mut x = vec![0.0; grid.dim()];
    let mut radius: f64 = 0.0;
    for &i in mask.indices() {
        grid.point_into(i, &mut x);
        let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
        radius = radius.max(d2.sqrt());
    }
    radius += grid.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vals = vec![0.0; grid.len()];
    for &i in mask.indices() {
        grid.point_into(i, &mut x);
        let d2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
        let t = 1.0 - d2 / (radius * radius);
        let noise = if perturbation > 0.0 {
            1.0 + perturbation * rng.gen_range(-1.0..1.0)
        } else {
            1.0
        };
        vals[i] = t.max(0.0).powi(2) * noise;
    }
    Field::new(grid, vals)
}

/// Maximize `F_eps` over the unit ball. `init` defaults to [`initial_field`]
/// with the configured seed and perturbation.
pub fn solve(pack: &ExponentPack, mask: &DomainMask, config: &SolverConfig, init: Option<&Field>) -> Result<SolveResult> {
    config.validate()?;
    if pack.dim != mask.grid().dim() {
        return Err(Error::GridMismatch(format!(
            "pack dimension {} vs grid dimension {}",
            pack.dim,
            mask.grid().dim()
        )));
    }
    let start = match init {
        Some(u) => {
            if u.grid() != mask.grid() {
                return Err(Error::GridMismatch("initial field on a different grid".into()));
            }
            mask.restrict(u)
        }
        None => initial_field(mask, config.seed, config.perturbation)?,
    };
    let s = pack.s;
    let p = pack.exponent();
    let theta = config.damping;
    let op = RestrictedOperator { mask, s };
    let grid = mask.grid();

    let mut u = normalize(&start, s)?;
    let mut value = lp_integral(&u, p, mask);
    let mut trace = vec![value];
    let mut guess = vec![0.0; mask.count()];
    let mut converged = false;
    let mut iters = 0;
    while iters < config.max_iters {
        iters += 1;
        let vals = u.values();
        let rhs: Vec<f64> = mask
            .indices()
            .iter()
            .map(|&i| vals[i].abs().powf(p - 2.0) * vals[i])
            .collect();
        let sol = op.solve(&rhs, std::mem::take(&mut guess))?;
        let mut full = vec![0.0; grid.len()];
        for (&i, &v) in mask.indices().iter().zip(&sol) {
            full[i] = v;
        }
        guess = sol;
        let v = normalize(&Field::new(grid, full)?, s)?;
        u = normalize(&v.lin_comb(theta, &u, 1.0 - theta)?, s)?;
        let next = lp_integral(&u, p, mask);
        trace.push(next);
        let delta = (next - value).abs();
        value = next;
        if delta < config.tol * value {
            converged = true;
            break;
        }
    }
    let value = subcritical_value(&u, pack, mask)?;
    let (multiplier, residual) = el_residual(&u, pack, mask)?;
    Ok(SolveResult {
        maximizer: u,
        value,
        multiplier,
        residual,
        iters,
        trace,
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub result: SolveResult,
    pub stats: ConcentrationStats,
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub eps: f64,
    pub outcome: Result<SweepOutcome>,
}

/// Solve along `config.eps_schedule`, warm-starting each step from the last
/// successful maximizer when `config.warm_start` is set. Without warm starts the
/// steps are independent and run in parallel. A failure at one `eps` is recorded
/// in its entry and the sweep continues.
pub fn eps_sweep(pack: &ExponentPack, mask: &DomainMask, config: &SolverConfig) -> Result<Vec<SweepEntry>> {
    config.validate()?;
    for &eps in &config.eps_schedule {
        pack.with_eps(eps).map_err(|e| Error::config("eps_schedule", e.to_string()))?;
    }
    let run = |eps: f64, init: Option<&Field>| -> Result<SweepOutcome> {
        let p = pack.with_eps(eps)?;
        let result = solve(&p, mask, config, init)?;
        let stats = concentration_stats(&result.maximizer, &p, mask)?;
        Ok(SweepOutcome { result, stats })
    };
    if config.warm_start {
        let mut out: Vec<SweepEntry> = Vec::with_capacity(config.eps_schedule.len());
        let mut last: Option<Field> = None;
        for &eps in &config.eps_schedule {
            let outcome = run(eps, last.as_ref());
            if let Ok(o) = &outcome {
                last = Some(o.result.maximizer.clone());
            }
            out.push(SweepEntry { eps, outcome });
        }
        Ok(out)
    } else {
        Ok(config
            .eps_schedule
            .par_iter()
            .map(|&eps| SweepEntry {
                eps,
                outcome: run(eps, None),
            })
            .collect())
    }
}
