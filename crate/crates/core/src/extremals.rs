//! Sharp Sobolev constant, Talenti profiles and the bubble constructions built
//! from them: rescaling, cutoff localization, gluing at several points and
//! recovery sequences.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::spaces::{hs_dot_norm_sq, DomainMask, ExponentPack};
use crate::spectral::{Field, Grid};

/// Largest `(boundary / peak)^{2*}` density ratio accepted for an uncut bubble.
pub const DEFAULT_TAIL_THRESHOLD: f64 = 0.02;

/// Minimum resolved core width of a rescaled bubble, in cells.
pub const MIN_CORE_CELLS: f64 = 4.0;

fn check_order(dim: usize, s: f64) -> Result<()> {
    if dim == 0 || !(s > 0.0 && s < dim as f64 / 2.0) {
        return Err(Error::InvalidOrder(format!(
            "s must lie in (0, N/2), got N = {dim}, s = {s}"
        )));
    }
    Ok(())
}

/// `2N / (N - 2s)`.
pub fn critical_exponent(dim: usize, s: f64) -> Result<f64> {
    check_order(dim, s)?;
    let n = dim as f64;
    Ok(2.0 * n / (n - 2.0 * s))
}

/// Best constant in `||u||_{2*}^{2*} <= S* ||(-Delta)^{s/2} u||_2^{2*}`:
///
/// `S* = (2^{-2s} pi^{-s} G((N-2s)/2) / G((N+2s)/2) [G(N) / G(N/2)]^{2s/N})^{2*/2}`.
pub fn sobolev_constant(dim: usize, s: f64) -> Result<f64> {
    let two_star = critical_exponent(dim, s)?;
    let n = dim as f64;
    let base = 2f64.powf(-2.0 * s)
        * std::f64::consts::PI.powf(-s)
        * gamma((n - 2.0 * s) / 2.0)
        / gamma((n + 2.0 * s) / 2.0)
        * (gamma(n) / gamma(n / 2.0)).powf(2.0 * s / n);
    Ok(base.powf(two_star / 2.0))
}

/// `c / (lambda^2 + |x - x0|^2)^{(N - 2s)/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleSpec {
    pub amplitude: f64,
    pub scale: f64,
    pub center: Vec<f64>,
    pub pack: ExponentPack,
}

impl BubbleSpec {
    pub fn new(amplitude: f64, scale: f64, center: Vec<f64>, pack: ExponentPack) -> Result<Self> {
        let spec = BubbleSpec {
            amplitude,
            scale,
            center,
            pack,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Amplitude chosen so that the whole-space profile has unit `H^s` norm.
    ///
    /// Uses `int |u|^{2*} = S* ||u||^{2*}` for the extremal and the closed form
    /// `int (lambda^2 + |x|^2)^{-N} dx = pi^{N/2} G(N/2) / (G(N) lambda^N)`.
    pub fn unit(scale: f64, center: Vec<f64>, pack: ExponentPack) -> Result<Self> {
        let n = pack.dim as f64;
        let lp = std::f64::consts::PI.powf(n / 2.0) * gamma(n / 2.0) / (gamma(n) * scale.powf(n));
        let c = (pack.sobolev_constant() / lp).powf(1.0 / pack.two_star);
        Self::new(c, scale, center, pack)
    }

    fn validate(&self) -> Result<()> {
        if !(self.amplitude != 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidSpec("bubble amplitude must be nonzero".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidSpec("bubble scale must be positive".into()));
        }
        if self.center.len() != self.pack.dim {
            return Err(Error::InvalidSpec("bubble center has the wrong dimension".into()));
        }
        Ok(())
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        self.validate()?;
        if grid.dim() != self.pack.dim {
            return Err(Error::GridMismatch("bubble and grid dimensions differ".into()));
        }
        if !grid.contains(&self.center) {
            return Err(Error::InvalidSpec("bubble center lies outside the box".into()));
        }
        Ok(())
    }

    /// `eps^{-(N-2s)/2} u(x0 + (x - x0)/eps)`.
    pub fn rescaled_value(&self, x: &[f64], eps: f64) -> f64 {
        let decay = (self.pack.dim as f64 - 2.0 * self.pack.s) / 2.0;
        let r2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| ((a - b) / eps).powi(2))
            .sum();
        eps.powf(-decay) * self.amplitude / (self.scale * self.scale + r2).powf(decay)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.rescaled_value(x, 1.0)
    }

    fn sample(&self, grid: &Grid, eps: f64) -> Field {
        let mut x = vec![0.0; grid.dim()];
        let vals = (0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut x);
                self.rescaled_value(&x, eps)
            })
            .collect();
        Field::from_parts_unchecked(grid, vals)
    }
}

/// `(max boundary |u| / |u(center)|)^{2*}` over the outermost layer of the box.
fn tail_ratio(spec: &BubbleSpec, field: &Field, eps: f64) -> f64 {
    let g = field.grid();
    let m = g.points_per_dim();
    let mut idx = vec![0usize; g.dim()];
    let mut edge: f64 = 0.0;
    for (i, v) in field.values().iter().enumerate() {
        g.multi_index(i, &mut idx);
        if idx.iter().any(|&k| k == 0 || k == m - 1) {
            edge = edge.max(v.abs());
        }
    }
    let peak = spec.rescaled_value(&spec.center, eps).abs();
    (edge / peak).powf(spec.pack.two_star)
}

/// Samples the extremal profile at cell centers, optionally rescaled to unit
/// discrete `H^s` norm.
pub fn talenti_bubble(spec: &BubbleSpec, grid: &Grid, normalize: bool) -> Result<Field> {
    talenti_bubble_with_threshold(spec, grid, normalize, DEFAULT_TAIL_THRESHOLD)
}

pub fn talenti_bubble_with_threshold(
    spec: &BubbleSpec,
    grid: &Grid,
    normalize: bool,
    tail_threshold: f64,
) -> Result<Field> {
    spec.check_grid(grid)?;
    let u = spec.sample(grid, 1.0);
    let ratio = tail_ratio(spec, &u, 1.0);
    if ratio > tail_threshold {
        return Err(Error::TailTooFat {
            ratio,
            threshold: tail_threshold,
        });
    }
    if normalize {
        let e = hs_dot_norm_sq(&u, spec.pack.s);
        if e <= 0.0 {
            return Err(Error::DegenerateInput("bubble has zero H^s energy".into()));
        }
        Ok(u.scaled(1.0 / e.sqrt()))
    } else {
        Ok(u)
    }
}

fn check_resolved(spec: &BubbleSpec, eps: f64, grid: &Grid) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidSpec(format!("eps = {eps} must lie in (0, 1]")));
    }
    let width = eps * spec.scale;
    let min_width = MIN_CORE_CELLS * grid.spacing();
    if width < min_width {
        return Err(Error::UnderResolved { width, min_width });
    }
    Ok(())
}

/// `w_eps(x) = eps^{-(N-2s)/2} u(x0 + (x - x0)/eps)`, sampled directly from the
/// closed form.
pub fn rescaled_bubble(spec: &BubbleSpec, eps: f64, grid: &Grid) -> Result<Field> {
    spec.check_grid(grid)?;
    check_resolved(spec, eps, grid)?;
    let w = spec.sample(grid, eps);
    let ratio = tail_ratio(spec, &w, eps);
    if ratio > DEFAULT_TAIL_THRESHOLD {
        return Err(Error::TailTooFat {
            ratio,
            threshold: DEFAULT_TAIL_THRESHOLD,
        });
    }
    Ok(w)
}

/// Smooth bump: one on `B_rho(center)`, zero outside `B_{2 rho}(center)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub center: Vec<f64>,
    pub inner_radius: f64,
}

impl CutoffSpec {
    pub fn new(center: Vec<f64>, inner_radius: f64) -> Result<Self> {
        if !(inner_radius > 0.0 && inner_radius.is_finite()) {
            return Err(Error::InvalidSpec("cutoff radius must be positive".into()));
        }
        Ok(CutoffSpec {
            center,
            inner_radius,
        })
    }

    /// `phi(r) = 1` for `r <= rho`, `exp(1 - 1/(1 - t^2))` with
    /// `t = (r - rho)/rho` on `(rho, 2 rho)`, and `0` beyond.
    pub fn profile(&self, r: f64) -> f64 {
        let rho = self.inner_radius;
        if r <= rho {
            1.0
        } else if r >= 2.0 * rho {
            0.0
        } else {
            let t = (r - rho) / rho;
            (1.0 - 1.0 / (1.0 - t * t)).exp()
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        self.profile(r)
    }

    /// Same center, radius multiplied by `factor`.
    pub fn dilated(&self, factor: f64) -> Result<Self> {
        Self::new(self.center.clone(), self.inner_radius * factor)
    }

    pub fn sample(&self, grid: &Grid) -> Field {
        let mut x = vec![0.0; grid.dim()];
        let vals = (0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut x);
                self.value(&x)
            })
            .collect();
        Field::from_parts_unchecked(grid, vals)
    }

    /// Whether the outer ball `B_{2 rho}` lies inside the box.
    pub fn fits(&self, grid: &Grid) -> bool {
        self.center.len() == grid.dim()
            && self
                .center
                .iter()
                .all(|c| c.abs() + 2.0 * self.inner_radius <= grid.half_width())
    }
}

/// A cutoff-localized bubble normalized to unit `H^s` norm.
#[derive(Debug, Clone)]
pub struct LocalizedBubble {
    pub field: Field,
    /// `||phi w_eps||_{H^s}` before normalization.
    pub pre_norm: f64,
}

/// `v_eps = phi w_eps / ||phi w_eps||_{H^s}`.
pub fn localized_bubble(
    spec: &BubbleSpec,
    cut: &CutoffSpec,
    eps: f64,
    grid: &Grid,
) -> Result<LocalizedBubble> {
    spec.check_grid(grid)?;
    check_resolved(spec, eps, grid)?;
    if !cut.fits(grid) {
        return Err(Error::InvalidSpec(
            "cutoff double ball does not fit in the box".into(),
        ));
    }
    let w = spec.sample(grid, eps);
    let tilde = w.mul(&cut.sample(grid))?;
    let e = hs_dot_norm_sq(&tilde, spec.pack.s);
    if e <= 0.0 {
        return Err(Error::DegenerateInput("localized bubble vanishes on the grid".into()));
    }
    let pre_norm = e.sqrt();
    Ok(LocalizedBubble {
        field: tilde.scaled(1.0 / pre_norm),
        pre_norm,
    })
}

/// Distinct concentration points with masses summing below one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

impl AtomSpec {
    pub fn new(points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        let spec = AtomSpec { points, masses };
        spec.validate()?;
        Ok(spec)
    }

    pub fn empty() -> Self {
        AtomSpec {
            points: Vec::new(),
            masses: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        if self.points.len() != self.masses.len() {
            return Err(Error::InvalidSpec("one mass per atom point".into()));
        }
        if self.masses.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidSpec("atom masses must be positive".into()));
        }
        if !self.is_empty() && !(self.total_mass() < 1.0) {
            return Err(Error::InvalidSpec("total atom mass must be below 1".into()));
        }
        for (i, p) in self.points.iter().enumerate() {
            for q in &self.points[..i] {
                if p == q {
                    return Err(Error::InvalidSpec("atom points must be distinct".into()));
                }
            }
        }
        Ok(())
    }

    fn min_separation(&self) -> f64 {
        let mut d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            for q in &self.points[..i] {
                d = d.min(euclid(p, q));
            }
        }
        d
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Points outside the open domain move to the nearest inside cell center.
fn snap_into(mask: &DomainMask, p: &[f64]) -> Vec<f64> {
    if mask.shape().contains(p) {
        return p.to_vec();
    }
    let g = mask.grid();
    let mut best = (f64::INFINITY, 0usize);
    let mut x = vec![0.0; g.dim()];
    for &i in mask.indices() {
        g.point_into(i, &mut x);
        let d = euclid(&x, p);
        if d < best.0 {
            best = (d, i);
        }
    }
    g.point(best.1)
}

/// Scale and exponents shared by every bubble in a gluing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BubbleProfile {
    pub scale: f64,
    pub pack: ExponentPack,
}

#[derive(Debug, Clone)]
pub struct GluedBubbles {
    pub field: Field,
    /// Unit-norm `v_eps^j`, one per atom.
    pub components: Vec<Field>,
    pub pre_norms: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Inner cutoff radius used for every atom.
    pub radius: f64,
}

/// Default localization radius: balls `B_{2 rho}(x_j)` pairwise disjoint and
/// inside the domain.
pub fn default_glue_radius(atoms: &AtomSpec, mask: &DomainMask) -> f64 {
    let inner = atoms
        .points
        .iter()
        .map(|p| mask.shape().inner_distance(&snap_into(mask, p)))
        .fold(f64::INFINITY, f64::min);
    0.999 * (atoms.min_separation() / 4.0).min(inner / 2.0)
}

/// `u_eps^A = sum_j sqrt(mu_j) v_eps^j` with disjointly supported `v_eps^j`.
pub fn glued_bubbles(
    atoms: &AtomSpec,
    profile: &BubbleProfile,
    eps: f64,
    grid: &Grid,
    mask: &DomainMask,
) -> Result<GluedBubbles> {
    atoms.validate()?;
    glued_bubbles_with_radius(atoms, profile, eps, grid, mask, default_glue_radius(atoms, mask))
}

pub fn glued_bubbles_with_radius(
    atoms: &AtomSpec,
    profile: &BubbleProfile,
    eps: f64,
    grid: &Grid,
    mask: &DomainMask,
    radius: f64,
) -> Result<GluedBubbles> {
    atoms.validate()?;
    if !(radius > 0.0) {
        return Err(Error::OverlappingAtoms(format!(
            "localization radius {radius} is not positive"
        )));
    }
    let points: Vec<Vec<f64>> = atoms.points.iter().map(|p| snap_into(mask, p)).collect();
    for (i, p) in points.iter().enumerate() {
        for q in &points[..i] {
            if euclid(p, q) <= 4.0 * radius {
                return Err(Error::OverlappingAtoms(format!(
                    "points {p:?} and {q:?} closer than 4 rho = {}",
                    4.0 * radius
                )));
            }
        }
    }
    let mut total = Field::zeros(grid);
    let mut components = Vec::with_capacity(points.len());
    let mut pre_norms = Vec::with_capacity(points.len());
    for (p, &mu) in points.iter().zip(&atoms.masses) {
        let spec = BubbleSpec::unit(profile.scale, p.clone(), profile.pack)?;
        let cut = CutoffSpec::new(p.clone(), radius)?;
        let lb = localized_bubble(&spec, &cut, eps, grid)?;
        total = total.lin_comb(1.0, &lb.field, mu.sqrt())?;
        pre_norms.push(lb.pre_norm);
        components.push(lb.field);
    }
    Ok(GluedBubbles {
        field: total,
        components,
        pre_norms,
        points,
        radius,
    })
}

#[derive(Debug, Clone)]
pub struct RecoverySequence {
    /// `u phi_sigma + u_eps^A`.
    pub field: Field,
    /// `u phi_sigma`.
    pub smooth_part: Field,
    /// `u_eps^A`, zero when there are no atoms.
    pub atom_part: Field,
    pub phi_sigma: Field,
}

/// `phi_sigma = prod_j (1 - phi_j)`: zero on `B_rho(x_j)`, one off `B_{2 rho}(x_j)`.
pub fn hole_cutoff(points: &[Vec<f64>], rho: f64, grid: &Grid) -> Result<Field> {
    let mut out = Field::from_fn(grid, |_| 1.0)?;
    for p in points {
        let bump = CutoffSpec::new(p.clone(), rho)?.sample(grid);
        out = out.mul(&bump.map(|b| 1.0 - b))?;
    }
    Ok(out)
}

/// `u_bar = u phi_sigma + u_eps^A` with `rho_sigma = sigma`; atoms are localized
/// inside `B_{rho_sigma}(x_j)`, where `phi_sigma` vanishes.
pub fn recovery_sequence(
    u: &Field,
    atoms: &AtomSpec,
    profile: &BubbleProfile,
    sigma: f64,
    eps: f64,
    mask: &DomainMask,
) -> Result<RecoverySequence> {
    atoms.validate()?;
    let grid = mask.grid();
    if u.grid() != grid {
        return Err(Error::GridMismatch("field and mask grids differ".into()));
    }
    if !mask.supports(u) {
        return Err(Error::InvalidSpec("u must vanish outside the domain".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidSpec(format!("sigma = {sigma} must be positive")));
    }
    let energy = hs_dot_norm_sq(u, profile.pack.s);
    let budget = energy + atoms.total_mass();
    if !(budget < 1.0) {
        return Err(Error::EnergyBudgetExceeded(format!(
            "||u||^2 = {energy} plus atom mass {} is not below 1",
            atoms.total_mass()
        )));
    }
    let points: Vec<Vec<f64>> = atoms.points.iter().map(|p| snap_into(mask, p)).collect();
    let phi = hole_cutoff(&points, sigma, grid)?;
    let smooth_part = u.mul(&phi)?;
    let atom_part = if atoms.is_empty() {
        Field::zeros(grid)
    } else {
        let snapped = AtomSpec {
            points,
            masses: atoms.masses.clone(),
        };
        mask.restrict(&glued_bubbles_with_radius(&snapped, profile, eps, grid, mask, sigma / 2.0)?.field)
    };
    Ok(RecoverySequence {
        field: smooth_part.lin_comb(1.0, &atom_part, 1.0)?,
        smooth_part,
        atom_part,
        phi_sigma: phi,
    })
}

/// Geometric schedule `{1, 1/2, 1/4, 1/8}` truncated where the core of a bubble
/// of the given scale stops being resolved.
pub fn eps_schedule(scale: f64, grid: &Grid) -> Vec<f64> {
    [1.0, 0.5, 0.25, 0.125]
        .into_iter()
        .filter(|e| e * scale >= MIN_CORE_CELLS * grid.spacing())
        .collect()
}

/// `rho_sigma` values `{0.4, 0.2, 0.1} * d`, `d` the smallest atom distance to the
/// domain boundary.
pub fn sigma_schedule(atoms: &AtomSpec, mask: &DomainMask) -> Vec<f64> {
    let d = atoms
        .points
        .iter()
        .map(|p| mask.shape().inner_distance(&snap_into(mask, p)))
        .fold(f64::INFINITY, f64::min);
    [0.4, 0.2, 0.1].iter().map(|f| f * d).collect()
}
