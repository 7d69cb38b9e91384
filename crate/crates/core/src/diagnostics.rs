//! Energy densities and the probes used to watch concentration happen: atom
//! extraction, ball masses, exterior tails, cutoff and commutator decay, and the
//! limit functional `F(u, mu)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremals::CutoffSpec;
use crate::spaces::{hs_dot_norm_sq, lp_integral, DomainMask, ExponentPack, CONSTRAINT_TOLERANCE};
use crate::spectral::{frac_power, Field, Grid};

/// Default atom cap.
pub const DEFAULT_MAX_ATOMS: usize = 16;

/// Nonnegative per-cell masses on a grid.
#[derive(Debug, Clone)]
pub struct EnergyMeasure {
    grid: Grid,
    masses: Vec<f64>,
    total: f64,
}

impl EnergyMeasure {
    pub fn new(grid: &Grid, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != grid.len() {
            return Err(Error::GridMismatch("one mass per cell".into()));
        }
        if let Some(i) = masses.iter().position(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let total = masses.iter().sum();
        Ok(EnergyMeasure {
            grid: grid.clone(),
            masses,
            total,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Cell with the largest mass; lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &m) in self.masses.iter().enumerate() {
            if m > self.masses[best] {
                best = i;
            }
        }
        best
    }

    pub fn argmax_point(&self) -> Vec<f64> {
        self.grid.point(self.argmax())
    }
}

/// Per-cell `|(-Delta)^{s/2} u|^2 h^N`.
pub fn energy_density(u: &Field, s: f64) -> Result<EnergyMeasure> {
    let a = frac_power(u, s)?;
    let h = u.grid().cell_volume();
    EnergyMeasure::new(u.grid(), a.values().iter().map(|v| v * v * h).collect())
}

/// Per-cell `|u|^p h^N`, the companion measure for atom bookkeeping.
pub fn power_density(u: &Field, p: f64) -> EnergyMeasure {
    let h = u.grid().cell_volume();
    let masses: Vec<f64> = u.values().iter().map(|v| v.abs().powf(p) * h).collect();
    let total = masses.iter().sum();
    EnergyMeasure {
        grid: u.grid().clone(),
        masses,
        total,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: Vec<f64>,
    pub mu: f64,
    pub nu: f64,
}

/// Detected atoms; serializes as `[{"x": [...], "mu": .., "nu": ..}]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AtomList {
    pub entries: Vec<Atom>,
}

impl AtomList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mu(&self) -> f64 {
        self.entries.iter().map(|a| a.mu).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("atoms serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomDetectOptions {
    pub radius: f64,
    pub threshold: f64,
    pub max_atoms: usize,
}

impl AtomDetectOptions {
    /// Radius 5% of the box width, threshold 10% of the total mass.
    pub fn defaults_for(grid: &Grid) -> Self {
        AtomDetectOptions {
            radius: 0.05 * 2.0 * grid.half_width(),
            threshold: 0.1,
            max_atoms: DEFAULT_MAX_ATOMS,
        }
    }
}

/// Lattice offsets within `radius`, as per-axis signed steps.
fn ball_offsets(grid: &Grid, radius: f64) -> Vec<Vec<isize>> {
    let n = grid.dim();
    let k = (radius / grid.spacing()).floor() as isize;
    let side = (2 * k + 1) as usize;
    let mut out = Vec::new();
    let mut off = vec![0isize; n];
    for flat in 0..side.pow(n as u32) {
        let mut rem = flat;
        for slot in off.iter_mut() {
            *slot = (rem % side) as isize - k;
            rem /= side;
        }
        let r2: f64 = off.iter().map(|&o| (o as f64 * grid.spacing()).powi(2)).sum();
        if r2 <= radius * radius * (1.0 + 1e-12) {
            out.push(off.clone());
        }
    }
    out
}

fn ball_sum(grid: &Grid, masses: &[f64], center: usize, offsets: &[Vec<isize>], scratch: &mut [usize]) -> f64 {
    let m = grid.points_per_dim() as isize;
    grid.multi_index(center, scratch);
    let base: Vec<isize> = scratch.iter().map(|&i| i as isize).collect();
    let mut acc = 0.0;
    'outer: for off in offsets {
        let mut flat = 0usize;
        for (b, o) in base.iter().zip(off) {
            let j = b + o;
            if j < 0 || j >= m {
                continue 'outer;
            }
            flat = flat * m as usize + j as usize;
        }
        acc += masses[flat];
    }
    acc
}

fn zero_ball(grid: &Grid, masses: &mut [f64], center: usize, offsets: &[Vec<isize>], scratch: &mut [usize]) {
    let m = grid.points_per_dim() as isize;
    grid.multi_index(center, scratch);
    let base: Vec<isize> = scratch.iter().map(|&i| i as isize).collect();
    'outer: for off in offsets {
        let mut flat = 0usize;
        for (b, o) in base.iter().zip(off) {
            let j = b + o;
            if j < 0 || j >= m {
                continue 'outer;
            }
            flat = flat * m as usize + j as usize;
        }
        masses[flat] = 0.0;
    }
}

/// Greedy peak extraction with default cap.
pub fn atom_detect(m: &EnergyMeasure, nu: &EnergyMeasure, radius: f64, threshold: f64) -> Result<AtomList> {
    atom_detect_with(
        m,
        nu,
        AtomDetectOptions {
            radius,
            threshold,
            max_atoms: DEFAULT_MAX_ATOMS,
        },
    )
}

pub fn atom_detect_with(m: &EnergyMeasure, nu: &EnergyMeasure, opts: AtomDetectOptions) -> Result<AtomList> {
    let order: Vec<usize> = (0..m.grid.len()).collect();
    atom_detect_in_order(m, nu, opts, &order)
}

/// [`atom_detect_with`] scanning candidate centers in `order`. The result does
/// not depend on the order: ties go to the lowest flat index.
pub fn atom_detect_in_order(
    m: &EnergyMeasure,
    nu: &EnergyMeasure,
    opts: AtomDetectOptions,
    order: &[usize],
) -> Result<AtomList> {
    let grid = &m.grid;
    if nu.grid != *grid {
        return Err(Error::GridMismatch("energy and critical measures differ".into()));
    }
    if !(opts.radius >= 2.0 * grid.spacing()) {
        return Err(Error::InvalidSpec(format!(
            "detection radius {} below two cells",
            opts.radius
        )));
    }
    if !(opts.threshold > 0.0 && opts.threshold < 1.0) {
        return Err(Error::InvalidSpec(format!(
            "threshold {} outside (0, 1)",
            opts.threshold
        )));
    }
    let offsets = ball_offsets(grid, opts.radius);
    let mut mu = m.masses.clone();
    let mut nus = nu.masses.clone();
    let mut scratch = vec![0usize; grid.dim()];
    let cutoff = opts.threshold * m.total;
    let mut atoms = AtomList::default();
    while atoms.len() < opts.max_atoms {
        let mut best: Option<(usize, f64)> = None;
        for &c in order {
            let b = ball_sum(grid, &mu, c, &offsets, &mut scratch);
            best = match best {
                Some((bi, bv)) if bv > b || (bv == b && bi < c) => Some((bi, bv)),
                _ => Some((c, b)),
            };
        }
        let Some((center, mass)) = best else { break };
        if !(mass >= cutoff) || mass <= 0.0 {
            break;
        }
        let nu_mass = ball_sum(grid, &nus, center, &offsets, &mut scratch);
        atoms.entries.push(Atom {
            x: grid.point(center),
            mu: mass,
            nu: nu_mass,
        });
        zero_ball(grid, &mut mu, center, &offsets, &mut scratch);
        zero_ball(grid, &mut nus, center, &offsets, &mut scratch);
    }
    Ok(atoms)
}

/// Mass of cells whose centers lie within `r` of `center`, plus the cell
/// containing `center`.
pub fn mass_in_ball(m: &EnergyMeasure, center: &[f64], r: f64) -> f64 {
    let g = &m.grid;
    let own = g.contains(center).then(|| g.nearest_index(center));
    let mut x = vec![0.0; g.dim()];
    let mut acc = 0.0;
    for (i, &v) in m.masses.iter().enumerate() {
        g.point_into(i, &mut x);
        let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
        if d2 <= r * r || own == Some(i) {
            acc += v;
        }
    }
    acc
}

/// Energy over cells farther than `margin` from the domain.
pub fn tail_energy(u: &Field, s: f64, mask: &DomainMask, margin: f64) -> Result<f64> {
    let m = energy_density(u, s)?;
    Ok(exterior_mass(&m, mask, margin))
}

/// Mass of `m` over cells farther than `margin` from the domain.
pub fn exterior_mass(m: &EnergyMeasure, mask: &DomainMask, margin: f64) -> f64 {
    let g = &m.grid;
    let mut x = vec![0.0; g.dim()];
    let mut acc = 0.0;
    for (i, &v) in m.masses.iter().enumerate() {
        g.point_into(i, &mut x);
        if mask.shape().distance(&x) > margin {
            acc += v;
        }
    }
    acc
}

/// `||u phi_l - u||_{H^s}` for `l >= 1` and `||u phi_l||_{H^s}` for `l < 1`,
/// where `phi_l` is the cutoff dilated by `l` about its center.
pub fn cutoff_convergence_probe(u: &Field, cut: &CutoffSpec, lambdas: &[f64], s: f64) -> Result<Vec<f64>> {
    lambdas
        .iter()
        .map(|&l| {
            let phi = cut.dilated(l)?.sample(u.grid());
            let cutu = u.mul(&phi)?;
            let target = if l >= 1.0 { cutu.lin_comb(1.0, u, -1.0)? } else { cutu };
            Ok(hs_dot_norm_sq(&target, s).sqrt())
        })
        .collect()
}

/// `||phi (-Delta)^{s/2} u - (-Delta)^{s/2} (phi u)||_{L^2}`.
pub fn commutator_residual(u: &Field, phi: &Field, s: f64) -> Result<f64> {
    let left = phi.mul(&frac_power(u, s)?)?;
    let right = frac_power(&phi.mul(u)?, s)?;
    Ok(left.lin_comb(1.0, &right, -1.0)?.l2_norm_sq().sqrt())
}

/// `F(u, mu) = int_Omega |u|^{2*} + S* sum mu_j^{2*/2}` on admissible pairs.
pub fn gamma_limit_value(u: &Field, atoms: &AtomList, pack: &ExponentPack, mask: &DomainMask) -> Result<f64> {
    let energy = hs_dot_norm_sq(u, pack.s);
    let atom_mass = atoms.total_mu();
    if energy + atom_mass > 1.0 + CONSTRAINT_TOLERANCE {
        return Err(Error::BudgetExceeded { energy, atom_mass });
    }
    let q = pack.two_star;
    let atom_part: f64 = atoms.entries.iter().map(|a| a.mu.powf(q / 2.0)).sum();
    Ok(lp_integral(u, q, mask) + pack.sobolev_constant() * atom_part)
}

/// Energy not accounted for by atoms or the regular part: `total - sum mu_j - e`.
pub fn nonatomic_residual(m: &EnergyMeasure, atoms: &AtomList, regular_energy: f64) -> f64 {
    m.total - atoms.total_mu() - regular_energy
}

/// Concentration summary attached to each sweep entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationStats {
    pub argmax: Vec<f64>,
    pub total: f64,
    /// Mass within `0.2 diam(Omega)` of the argmax.
    pub mass_r1: f64,
    /// Mass within `0.1 diam(Omega)` of the argmax.
    pub mass_r2: f64,
    /// Mass farther than `0.5 diam(Omega)` from the domain.
    pub tail_energy: f64,
    pub atoms: AtomList,
}

pub fn concentration_stats(u: &Field, pack: &ExponentPack, mask: &DomainMask) -> Result<ConcentrationStats> {
    let m = energy_density(u, pack.s)?;
    let diam = mask.diameter();
    let argmax = m.argmax_point();
    let nu = power_density(u, pack.exponent());
    let opts = AtomDetectOptions::defaults_for(u.grid());
    Ok(ConcentrationStats {
        mass_r1: mass_in_ball(&m, &argmax, 0.2 * diam),
        mass_r2: mass_in_ball(&m, &argmax, 0.1 * diam),
        tail_energy: exterior_mass(&m, mask, 0.5 * diam),
        total: m.total,
        atoms: atom_detect_with(&m, &nu, opts)?,
        argmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremals::{localized_bubble, BubbleSpec};
    use crate::spaces::Shape;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        make_grid(1, 256, 4.0).unwrap()
    }

    #[test]
    fn zero_field_measures() {
        let g = grid();
        let z = Field::zeros(&g);
        let m = energy_density(&z, 0.3).unwrap();
        assert!(m.masses().iter().all(|&v| v == 0.0));
        let mask = DomainMask::new(&g, Shape::Interval { a: -1.0, b: 1.0 }).unwrap();
        assert_eq!(tail_energy(&z, 0.3, &mask, 0.5).unwrap(), 0.0);
        let cut = CutoffSpec::new(vec![0.0], 0.5).unwrap();
        assert!(cutoff_convergence_probe(&z, &cut, &[4.0, 0.5], 0.3)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        assert_eq!(commutator_residual(&z, &cut.sample(&g), 0.3).unwrap(), 0.0);
    }

    #[test]
    fn harmonic_total_matches_hs_norm() {
        let g = grid();
        let u = Field::from_fn(&g, |x| (PI * x[0] / 4.0).cos()).unwrap();
        let m = energy_density(&u, 0.4).unwrap();
        let expected = (PI / 4.0).powf(0.8) * u.l2_norm_sq();
        assert!((m.total() - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn ball_mass_limits() {
        let g = grid();
        let u = Field::from_fn(&g, |x| (-x[0] * x[0]).exp()).unwrap();
        let m = energy_density(&u, 0.3).unwrap();
        assert!((mass_in_ball(&m, &[0.0], 100.0) - m.total()).abs() < 1e-14);
        let c = g.point(100);
        assert_eq!(mass_in_ball(&m, &c, 0.1 * g.spacing()), m.masses()[100]);
    }

    #[test]
    fn smooth_field_has_no_half_atom() {
        let g = grid();
        let u = Field::from_fn(&g, |x| (PI * x[0] / 4.0).sin() + 0.3 * (3.0 * PI * x[0] / 4.0).cos()).unwrap();
        let m = energy_density(&u, 0.3).unwrap();
        let nu = power_density(&u, 2.0 / 0.4);
        let atoms = atom_detect(&m, &nu, 0.4, 0.5).unwrap();
        assert!(atoms.is_empty());
    }

    #[test]
    fn detect_rejects_bad_parameters() {
        let g = grid();
        let m = energy_density(&Field::from_fn(&g, |x| (-x[0] * x[0]).exp()).unwrap(), 0.3).unwrap();
        assert!(atom_detect(&m, &m, g.spacing(), 0.1).is_err());
        assert!(atom_detect(&m, &m, 0.5, 1.0).is_err());
    }

    #[test]
    fn commutator_with_one_vanishes() {
        let g = grid();
        let u = Field::from_fn(&g, |x| (-x[0] * x[0] * 3.0).exp() * x[0]).unwrap();
        let one = Field::from_fn(&g, |_| 1.0).unwrap();
        assert_eq!(commutator_residual(&u, &one, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn gamma_limit_cases() {
        let g = make_grid(1, 512, 8.0).unwrap();
        let mask = DomainMask::new(&g, Shape::Interval { a: -1.0, b: 1.0 }).unwrap();
        let pack = ExponentPack::critical(1, 0.25).unwrap();
        let sstar = pack.sobolev_constant();
        let one = AtomList {
            entries: vec![Atom { x: vec![0.0], mu: 1.0, nu: 0.0 }],
        };
        let z = Field::zeros(&g);
        assert!((gamma_limit_value(&z, &one, &pack, &mask).unwrap() - sstar).abs() < 1e-14);
        assert_eq!(gamma_limit_value(&z, &AtomList::default(), &pack, &mask).unwrap(), 0.0);
        let two = AtomList {
            entries: vec![
                Atom { x: vec![0.0], mu: 0.7, nu: 0.0 },
                Atom { x: vec![0.5], mu: 0.4, nu: 0.0 },
            ],
        };
        assert!(matches!(
            gamma_limit_value(&z, &two, &pack, &mask),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn atom_json_shape() {
        let atoms = AtomList {
            entries: vec![Atom { x: vec![0.5, -1.0], mu: 0.25, nu: 0.125 }],
        };
        assert_eq!(atoms.to_json(), r#"[{"x":[0.5,-1.0],"mu":0.25,"nu":0.125}]"#);
        let back: AtomList = serde_json::from_str(&atoms.to_json()).unwrap();
        assert_eq!(back, atoms);
    }

    #[test]
    fn localized_bubble_keeps_energy_near_support() {
        let g = make_grid(1, 512, 8.0).unwrap();
        let pack = ExponentPack::critical(1, 0.25).unwrap();
        let spec = BubbleSpec::unit(1.0, vec![0.0], pack).unwrap();
        let cut = CutoffSpec::new(vec![0.0], 0.5).unwrap();
        let v = localized_bubble(&spec, &cut, 0.125, &g).unwrap().field;
        let m = energy_density(&v, 0.25).unwrap();
        assert!(mass_in_ball(&m, &[0.0], 1.0) >= 0.8 * m.total());
    }
}
