//! Norms, seminorms and the variational functionals on a bounded domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremals::{critical_exponent, sobolev_constant};
use crate::spectral::{forward_transform, Field, Grid};

/// Tolerance on the unit `H^s` ball.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-8;

/// Smallest `H^s` energy accepted as a quotient denominator.
pub const DEGENERATE_ENERGY: f64 = 1e-14;

/// A bounded open set, sampled by cell-center membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Interval { a: f64, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Shape {
    /// Dimension the shape lives in, if fixed.
    pub fn dim(&self) -> usize {
        match self {
            Shape::Interval { .. } => 1,
            Shape::Ball { center, .. } => center.len(),
            Shape::Box { lo, .. } => lo.len(),
            Shape::Polygon { .. } => 2,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidMask(m.to_owned()));
        match self {
            Shape::Interval { a, b } if !(a < b) => bad("interval needs a < b"),
            Shape::Ball { radius, center } if !(*radius > 0.0) || center.is_empty() => {
                bad("ball needs a positive radius and a center")
            }
            Shape::Box { lo, hi }
                if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(hi).any(|(l, h)| !(l < h)) =>
            {
                bad("box needs lo < hi componentwise")
            }
            Shape::Polygon { vertices } if vertices.len() < 3 => bad("polygon needs 3+ vertices"),
            _ => Ok(()),
        }
    }

    /// Membership of the open set.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Shape::Interval { a, b } => x[0] > *a && x[0] < *b,
            Shape::Ball { center, radius } => dist(x, center) < *radius,
            Shape::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&c, (&l, &h))| c > l && c < h),
            Shape::Polygon { vertices } => {
                let (px, py) = (x[0], x[1]);
                let mut inside = false;
                let n = vertices.len();
                for i in 0..n {
                    let [xi, yi] = vertices[i];
                    let [xj, yj] = vertices[(i + n - 1) % n];
                    if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                        inside = !inside;
                    }
                }
                inside && self.distance_to_boundary(x) > 0.0
            }
        }
    }

    fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        match self {
            Shape::Interval { a, b } => (x[0] - a).abs().min((x[0] - b).abs()),
            Shape::Ball { center, radius } => (dist(x, center) - radius).abs(),
            Shape::Box { lo, hi } => {
                if self.contains(x) {
                    x.iter()
                        .zip(lo.iter().zip(hi))
                        .map(|(&c, (&l, &h))| (c - l).min(h - c))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    box_outside_distance(x, lo, hi)
                }
            }
            Shape::Polygon { vertices } => {
                let n = vertices.len();
                (0..n)
                    .map(|i| segment_distance([x[0], x[1]], vertices[i], vertices[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Euclidean distance from `x` to the closure of the set (zero inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            return 0.0;
        }
        match self {
            Shape::Interval { a, b } => (a - x[0]).max(x[0] - b).max(0.0),
            Shape::Ball { center, radius } => (dist(x, center) - radius).max(0.0),
            Shape::Box { lo, hi } => box_outside_distance(x, lo, hi),
            Shape::Polygon { .. } => self.distance_to_boundary(x),
        }
    }

    /// Distance from an interior point to the boundary (zero outside).
    pub fn inner_distance(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            self.distance_to_boundary(x)
        } else {
            0.0
        }
    }

    /// Axis-aligned bounding box `(lo, hi)` of the closure.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Shape::Interval { a, b } => (vec![*a], vec![*b]),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Polygon { vertices } => {
                let mut lo = vec![f64::INFINITY; 2];
                let mut hi = vec![f64::NEG_INFINITY; 2];
                for v in vertices {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Shape::Interval { a, b } => b - a,
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::Box { lo, hi } => dist(lo, hi),
            Shape::Polygon { vertices } => {
                let mut d: f64 = 0.0;
                for p in vertices {
                    for q in vertices {
                        d = d.max(dist(p, q));
                    }
                }
                d
            }
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn box_outside_distance(x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&c, (&l, &h))| (l - c).max(c - h).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    dist(&p, &[a[0] + t * dx, a[1] + t * dy])
}

/// Cells of a [`Grid`] whose centers lie in a [`Shape`].
#[derive(Debug, Clone)]
pub struct DomainMask {
    grid: Grid,
    shape: Shape,
    inside: Vec<bool>,
    indices: Vec<usize>,
}

impl DomainMask {
    pub fn new(grid: &Grid, shape: Shape) -> Result<Self> {
        shape.validate()?;
        if shape.dim() != grid.dim() {
            return Err(Error::InvalidMask(format!(
                "shape dimension {} does not match grid dimension {}",
                shape.dim(),
                grid.dim()
            )));
        }
        // The closure must stay clear of the outermost cell layer, x_0 = -L and x_{M-1} = L - h.
        let (lo, hi) = shape.bounds();
        let (first, last) = (-grid.half_width(), grid.half_width() - grid.spacing());
        if lo.iter().any(|&v| v <= first) || hi.iter().any(|&v| v >= last) {
            return Err(Error::InvalidMask(
                "domain touches the outermost layer of the box".into(),
            ));
        }
        let m = grid.points_per_dim();
        let mut x = vec![0.0; grid.dim()];
        let mut idx = vec![0usize; grid.dim()];
        let mut inside = vec![false; grid.len()];
        let mut indices = Vec::new();
        for (flat, slot) in inside.iter_mut().enumerate() {
            grid.point_into(flat, &mut x);
            if shape.contains(&x) {
                grid.multi_index(flat, &mut idx);
                if idx.iter().any(|&i| i == 0 || i == m - 1) {
                    return Err(Error::InvalidMask(
                        "domain touches the outermost layer of the box".into(),
                    ));
                }
                *slot = true;
                indices.push(flat);
            }
        }
        if indices.is_empty() {
            return Err(Error::InvalidMask("no cell center inside the domain".into()));
        }
        Ok(DomainMask {
            grid: grid.clone(),
            shape,
            inside,
            indices,
        })
    }

    /// Every cell except the outermost layer of the box.
    pub fn box_interior(grid: &Grid) -> Result<Self> {
        let l = grid.half_width();
        let h = grid.spacing();
        let (lo, hi) = (-l + 0.5 * h, l - 1.5 * h);
        let shape = if grid.dim() == 1 {
            Shape::Interval { a: lo, b: hi }
        } else {
            Shape::Box {
                lo: vec![lo; grid.dim()],
                hi: vec![hi; grid.dim()],
            }
        };
        Self::new(grid, shape)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    pub fn is_inside(&self, flat: usize) -> bool {
        self.inside[flat]
    }

    /// Flat indices of inside cells, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn measure(&self) -> f64 {
        self.indices.len() as f64 * self.grid.cell_volume()
    }

    pub fn diameter(&self) -> f64 {
        self.shape.diameter()
    }

    /// Mean of inside cell centers.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.grid.dim()];
        let mut x = vec![0.0; self.grid.dim()];
        for &i in &self.indices {
            self.grid.point_into(i, &mut x);
            c.iter_mut().zip(&x).for_each(|(a, b)| *a += b);
        }
        let n = self.indices.len() as f64;
        c.iter_mut().for_each(|a| *a /= n);
        c
    }

    /// Zeroes `u` outside the domain.
    pub fn restrict(&self, u: &Field) -> Field {
        let vals = u
            .values()
            .iter()
            .zip(&self.inside)
            .map(|(&v, &ins)| if ins { v } else { 0.0 })
            .collect();
        Field::from_parts_unchecked(u.grid(), vals)
    }

    /// Whether `u` vanishes on every outside cell.
    pub fn supports(&self, u: &Field) -> bool {
        u.values()
            .iter()
            .zip(&self.inside)
            .all(|(&v, &ins)| ins || v == 0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.shape).expect("shape serializes")
    }

    pub fn from_json(grid: &Grid, json: &str) -> Result<Self> {
        let shape: Shape =
            serde_json::from_str(json).map_err(|e| Error::InvalidMask(e.to_string()))?;
        Self::new(grid, shape)
    }
}

/// Dimension, order and subcritical offset, with `2* = 2N / (N - 2s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPack {
    pub dim: usize,
    pub s: f64,
    pub two_star: f64,
    pub eps: f64,
}

impl ExponentPack {
    pub fn new(dim: usize, s: f64, eps: f64) -> Result<Self> {
        let two_star = critical_exponent(dim, s)?;
        let pack = ExponentPack {
            dim,
            s,
            two_star,
            eps: 0.0,
        };
        pack.with_eps(eps)
    }

    pub fn critical(dim: usize, s: f64) -> Result<Self> {
        Self::new(dim, s, 0.0)
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps < self.two_star - 2.0) {
            return Err(Error::InvalidOrder(format!(
                "eps = {eps} must lie in [0, {})",
                self.two_star - 2.0
            )));
        }
        Ok(ExponentPack { eps, ..*self })
    }

    /// `2* - eps`.
    pub fn exponent(&self) -> f64 {
        self.two_star - self.eps
    }

    pub fn sobolev_constant(&self) -> f64 {
        sobolev_constant(self.dim, self.s).expect("pack validated on construction")
    }
}

/// `sum_{inside} |u|^p h^N`.
pub fn lp_integral(u: &Field, p: f64, mask: &DomainMask) -> f64 {
    debug_assert!(p > 0.0);
    let vals = u.values();
    mask.indices()
        .iter()
        .map(|&i| vals[i].abs().powf(p))
        .sum::<f64>()
        * u.grid().cell_volume()
}

/// `sum_{all cells} |u|^p h^N`.
pub fn box_lp_integral(u: &Field, p: f64) -> f64 {
    u.values().iter().map(|v| v.abs().powf(p)).sum::<f64>() * u.grid().cell_volume()
}

/// `||(-Delta)^{s/2} u||^2 = sum |xi|^{2s} |U|^2` with unitary weights.
pub fn hs_dot_norm_sq(u: &Field, s: f64) -> f64 {
    let two_s = 2.0 * s;
    forward_transform(u).weighted_energy(|xi| crate::spectral::power_symbol(xi, two_s))
}

/// The `H^s` pairing `<(-Delta)^{s/2} u, (-Delta)^{s/2} v>`.
pub fn hs_inner(u: &Field, v: &Field, s: f64) -> Result<f64> {
    u.check_same_grid(v)?;
    let (a, b) = (forward_transform(u), forward_transform(v));
    let two_s = 2.0 * s;
    Ok(a.coeffs()
        .iter()
        .zip(b.coeffs())
        .zip(u.grid().xi_abs())
        .map(|((x, y), &xi)| crate::spectral::power_symbol(xi, two_s) * (x * y.conj()).re)
        .sum::<f64>()
        * u.grid().cell_volume())
}

/// Inhomogeneous norm with weight `(1 + |xi|^2)^s`.
pub fn hs_full_norm_sq(u: &Field, s: f64) -> f64 {
    forward_transform(u).weighted_energy(|xi| (1.0 + xi * xi).powf(s))
}

/// Quadrature switches for [`gagliardo_seminorm_sq_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GagliardoOptions {
    /// Add the analytic self-cell integral driven by a central-difference gradient.
    pub local_correction: bool,
    /// Add pairs with one point outside the box (exact in one dimension, skipped otherwise).
    pub exterior_tail: bool,
}

impl Default for GagliardoOptions {
    fn default() -> Self {
        GagliardoOptions {
            local_correction: true,
            exterior_tail: true,
        }
    }
}

/// `int int |u(x) - u(y)|^2 / |x - y|^{N + 2s} dx dy` over `R^N`, for `u`
/// supported inside the box. Cost is `O(|supp u| M^N)`.
pub fn gagliardo_seminorm_sq(u: &Field, s: f64) -> Result<f64> {
    gagliardo_seminorm_sq_with(u, s, GagliardoOptions::default())
}

pub fn gagliardo_seminorm_sq_with(u: &Field, s: f64, opts: GagliardoOptions) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::UnsupportedOrder(s));
    }
    let g = u.grid();
    let n = g.dim();
    let m = g.points_per_dim();
    let h = g.spacing();
    let vals = u.values();
    let support: Vec<usize> = (0..g.len()).filter(|&i| vals[i] != 0.0).collect();
    if support.is_empty() {
        return Ok(0.0);
    }
    let power = -(n as f64 + 2.0 * s) / 2.0;

    let mut ii = vec![0usize; n];
    let mut jj = vec![0usize; n];
    let mut pairs = 0.0;
    for &i in &support {
        g.multi_index(i, &mut ii);
        let ui = vals[i];
        let mut row = 0.0;
        for (j, &uj) in vals.iter().enumerate() {
            if j == i {
                continue;
            }
            // Pairs inside the support are visited from both ends.
            let weight = if uj != 0.0 { 1.0 } else { 2.0 };
            g.multi_index(j, &mut jj);
            let r2: f64 = ii
                .iter()
                .zip(&jj)
                .map(|(&a, &b)| ((a as f64 - b as f64) * h).powi(2))
                .sum();
            let d = ui - uj;
            row += weight * d * d * r2.powf(power);
        }
        pairs += row;
    }
    let vol = g.cell_volume();
    let mut total = pairs * vol * vol;

    if opts.exterior_tail && n == 1 {
        let (a, b) = (-g.half_width() - 0.5 * h, g.half_width() - 0.5 * h);
        let tail: f64 = support
            .iter()
            .map(|&i| {
                let x = g.coord(i);
                vals[i].powi(2) * ((x - a).powf(-2.0 * s) + (b - x).powf(-2.0 * s)) / (2.0 * s)
            })
            .sum();
        total += 2.0 * tail * h;
    }

    if opts.local_correction {
        let c = self_cell_coefficient(n, s, h);
        let mut grad2 = 0.0;
        for i in 0..g.len() {
            g.multi_index(i, &mut ii);
            let mut gi = 0.0;
            for axis in 0..n {
                let orig = ii[axis];
                ii[axis] = (orig + 1) % m;
                let up = vals[g.flat_index(&ii)];
                ii[axis] = (orig + m - 1) % m;
                let down = vals[g.flat_index(&ii)];
                ii[axis] = orig;
                gi += ((up - down) / (2.0 * h)).powi(2);
            }
            grad2 += gi;
        }
        total += c * grad2;
    }
    Ok(total)
}

/// `int_{C x C} |x - y|^{-N-2s} |grad u . (x - y)|^2 dx dy / |grad u|^2` for a
/// cube `C` of side `h`, assuming isotropic gradients.
fn self_cell_coefficient(n: usize, s: f64, h: f64) -> f64 {
    let a = 1.0 - 2.0 * s;
    if n == 1 {
        return 2.0 * h.powf(a + 2.0) / ((a + 1.0) * (a + 2.0));
    }
    // Midpoint rule on [0,1]^N for (2^N / N) int |z|^{2-N-2s} prod(1 - z_i) dz.
    let k: usize = match n {
        2 => 64,
        3 => 24,
        _ => 10,
    };
    let step = 1.0 / k as f64;
    let mut idx = vec![0usize; n];
    let total_pts = k.pow(n as u32);
    let mut acc = 0.0;
    for flat in 0..total_pts {
        let mut rem = flat;
        for slot in idx.iter_mut() {
            *slot = rem % k;
            rem /= k;
        }
        let z: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) * step).collect();
        let r2: f64 = z.iter().map(|v| v * v).sum();
        let prod: f64 = z.iter().map(|v| 1.0 - v).product();
        acc += r2.powf((2.0 - n as f64 - 2.0 * s) / 2.0) * prod;
    }
    let unit = acc * step.powi(n as i32) * 2f64.powi(n as i32) / n as f64;
    unit * h.powf(n as f64 + 2.0 - 2.0 * s)
}

/// `int_Omega |u|^{2*} / ||u||_{H^s}^{2*}`.
pub fn sobolev_quotient(u: &Field, pack: &ExponentPack, mask: &DomainMask) -> Result<f64> {
    let den = hs_dot_norm_sq(u, pack.s);
    if den < DEGENERATE_ENERGY {
        return Err(Error::DegenerateInput(format!(
            "H^s energy {den:e} below {DEGENERATE_ENERGY:e}"
        )));
    }
    Ok(lp_integral(u, pack.two_star, mask) / den.powf(pack.two_star / 2.0))
}

/// Sobolev quotient with the critical integral over the whole box.
pub fn box_sobolev_quotient(u: &Field, pack: &ExponentPack) -> Result<f64> {
    let den = hs_dot_norm_sq(u, pack.s);
    if den < DEGENERATE_ENERGY {
        return Err(Error::DegenerateInput(format!(
            "H^s energy {den:e} below {DEGENERATE_ENERGY:e}"
        )));
    }
    Ok(box_lp_integral(u, pack.two_star) / den.powf(pack.two_star / 2.0))
}

/// `F_eps(u) = int_Omega |u|^{2* - eps}` on the unit `H^s` ball.
pub fn subcritical_value(u: &Field, pack: &ExponentPack, mask: &DomainMask) -> Result<f64> {
    let e = hs_dot_norm_sq(u, pack.s);
    if e > 1.0 + CONSTRAINT_TOLERANCE {
        return Err(Error::ConstraintViolated(e));
    }
    Ok(lp_integral(u, pack.exponent(), mask))
}

/// Hölder bound `S*^{(2*-eps)/2*} |Omega|^{eps/2*}` on `F_eps` over the unit ball.
pub fn hoelder_envelope(pack: &ExponentPack, mask: &DomainMask) -> f64 {
    let q = pack.two_star;
    pack.sobolev_constant().powf(pack.exponent() / q) * mask.measure().powf(pack.eps / q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{frac_power, make_grid};
    use std::f64::consts::PI;

    fn interval_mask(grid: &Grid, a: f64, b: f64) -> DomainMask {
        DomainMask::new(grid, Shape::Interval { a, b }).unwrap()
    }

    #[test]
    fn mask_rejects_boundary_contact_and_empty() {
        let g = make_grid(1, 16, 1.0).unwrap();
        assert!(matches!(
            DomainMask::new(&g, Shape::Interval { a: -2.0, b: 0.5 }),
            Err(Error::InvalidMask(_))
        ));
        assert!(matches!(
            DomainMask::new(&g, Shape::Interval { a: 0.01, b: 0.02 }),
            Err(Error::InvalidMask(_))
        ));
        assert!(matches!(
            DomainMask::new(
                &g,
                Shape::Ball {
                    center: vec![0.0, 0.0],
                    radius: 0.2
                }
            ),
            Err(Error::InvalidMask(_))
        ));
    }

    #[test]
    fn mask_json_round_trip() {
        let g = make_grid(2, 16, 2.0).unwrap();
        let mask = DomainMask::new(
            &g,
            Shape::Polygon {
                vertices: vec![[-1.0, -1.0], [1.0, -1.0], [0.0, 1.0]],
            },
        )
        .unwrap();
        let json = mask.to_json();
        assert!(json.starts_with(r#"{"kind":"polygon""#));
        let back = DomainMask::from_json(&g, &json).unwrap();
        assert_eq!(back.indices(), mask.indices());
    }

    #[test]
    fn shape_distances() {
        let b = Shape::Box {
            lo: vec![-1.0, -1.0],
            hi: vec![1.0, 1.0],
        };
        assert_eq!(b.distance(&[0.0, 0.0]), 0.0);
        assert!((b.distance(&[4.0, 5.0]) - 5.0).abs() < 1e-14);
        let p = Shape::Polygon {
            vertices: vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]],
        };
        assert!((p.distance(&[3.0, 0.0]) - 2.0).abs() < 1e-14);
        assert!((p.inner_distance(&[0.5, 0.0]) - 0.5).abs() < 1e-14);
        assert!((b.diameter() - 8f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn lp_integral_examples() {
        let g = make_grid(1, 64, 4.0).unwrap();
        let mask = interval_mask(&g, -1.01, 0.99);
        assert!((mask.measure() - 2.0).abs() < 1e-12);
        let one = Field::from_fn(&g, |_| 1.0).unwrap();
        assert!((lp_integral(&one, 4.0, &mask) - 2.0).abs() < 1e-12);
        assert_eq!(lp_integral(&Field::zeros(&g), 3.0, &mask), 0.0);

        let half: Vec<usize> = mask.indices().iter().copied().step_by(2).collect();
        let mut vals = vec![0.0; g.len()];
        for &i in &half {
            vals[i] = 1.0;
        }
        let ind = Field::new(&g, vals).unwrap();
        for p in [0.5, 2.0, 7.0] {
            assert!((lp_integral(&ind, p, &mask) - mask.measure() / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hs_dot_norm_examples() {
        let l = 2.0;
        let g = make_grid(1, 64, l).unwrap();
        let c = Field::from_fn(&g, |x| (PI * x[0] / l).cos()).unwrap();
        for s in [0.25, 0.5, 1.3] {
            let expected = (PI / l).powf(2.0 * s) * c.l2_norm_sq();
            assert!((hs_dot_norm_sq(&c, s) - expected).abs() < 1e-12 * expected);
        }
        let k = Field::from_fn(&g, |_| 3.0).unwrap();
        assert!(hs_dot_norm_sq(&k, 0.4).abs() < 1e-20);
    }

    #[test]
    fn hs_dot_matches_frac_power_norm() {
        let g = make_grid(2, 32, 3.0).unwrap();
        let u = Field::from_fn(&g, |x| (-(x[0] - 0.3).powi(2) - 2.0 * x[1] * x[1]).exp() * (1.0 + x[0])).unwrap();
        for s in [0.1, 0.5, 0.9] {
            let a = hs_dot_norm_sq(&u, s);
            let b = frac_power(&u, s).unwrap().l2_norm_sq();
            assert!((a - b).abs() < 1e-10 * a);
        }
    }

    /// Continuum value of `int |xi|^{2s} |F(e^{-|x|^2/2})|^2 dxi` on `R^1`, by
    /// composite Simpson on the radial integral `2 int_0^inf r^{2s} e^{-r^2} dr`.
    fn gaussian_oracle(s: f64) -> f64 {
        let (n, rmax) = (200_000usize, 12.0);
        let dr = rmax / n as f64;
        let f = |r: f64| if r == 0.0 { 0.0 } else { r.powf(2.0 * s) * (-r * r).exp() };
        let mut acc = f(0.0) + f(rmax);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * dr);
        }
        2.0 * acc * dr / 3.0
    }

    #[test]
    fn gaussian_matches_radial_quadrature() {
        // Frequency spacing pi/64 keeps the |xi|^{2s} cusp at 0 below 1%.
        let g = make_grid(1, 2048, 64.0).unwrap();
        let u = Field::from_fn(&g, |x| (-x[0] * x[0] / 2.0).exp()).unwrap();
        for s in [0.2, 0.35, 0.75] {
            let num = hs_dot_norm_sq(&u, s);
            let oracle = gaussian_oracle(s);
            assert!((num - oracle).abs() < 0.01 * oracle, "s={s}: {num} vs {oracle}");
        }
    }

    #[test]
    fn full_norm_examples() {
        let l = 3.0;
        let g = make_grid(1, 32, l).unwrap();
        let c = Field::from_fn(&g, |_| 2.0).unwrap();
        assert!((hs_full_norm_sq(&c, 0.7) - 4.0 * 2.0 * l).abs() < 1e-12);
        // |xi| = 1 needs pi k / L = 1, i.e. L = pi k.
        let g = make_grid(1, 32, PI).unwrap();
        let u = Field::from_fn(&g, |x| x[0].sin()).unwrap();
        let s = 0.6;
        assert!((hs_full_norm_sq(&u, s) - 2f64.powf(s) * u.l2_norm_sq()).abs() < 1e-12);
    }

    #[test]
    fn gagliardo_rejects_large_order_and_zero() {
        let g = make_grid(1, 32, 2.0).unwrap();
        let u = Field::from_fn(&g, |x| (-x[0] * x[0] * 4.0).exp()).unwrap();
        assert!(matches!(gagliardo_seminorm_sq(&u, 1.2), Err(Error::UnsupportedOrder(_))));
        assert_eq!(gagliardo_seminorm_sq(&Field::zeros(&g), 0.3).unwrap(), 0.0);
    }

    #[test]
    fn self_cell_coefficient_consistent_across_dims() {
        // 1-D closed form vs the same midpoint rule the N >= 2 path uses.
        let (s, h) = (0.3, 0.1);
        let exact = self_cell_coefficient(1, s, h);
        let k = 200_000;
        let mut acc = 0.0;
        for i in 0..k {
            let z = (i as f64 + 0.5) / k as f64;
            acc += z.powf(1.0 - 2.0 * s) * (1.0 - z);
        }
        let approx = 2.0 * acc / k as f64 * h.powf(3.0 - 2.0 * s);
        assert!((exact - approx).abs() < 1e-4 * exact);
    }

    #[test]
    fn quotient_homogeneity_and_degenerate() {
        let g = make_grid(1, 128, 4.0).unwrap();
        let mask = interval_mask(&g, -1.0, 1.0);
        let pack = ExponentPack::critical(1, 0.25).unwrap();
        let u = Field::from_fn(&g, |x| (1.0 - x[0] * x[0]).max(0.0)).unwrap();
        let q1 = sobolev_quotient(&u, &pack, &mask).unwrap();
        let q2 = sobolev_quotient(&u.scaled(2.0), &pack, &mask).unwrap();
        assert!((q1 - q2).abs() < 1e-10 * q1);
        assert!(matches!(
            sobolev_quotient(&Field::zeros(&g), &pack, &mask),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn subcritical_value_examples() {
        let g = make_grid(1, 128, 4.0).unwrap();
        let mask = interval_mask(&g, -1.0, 1.0);
        let pack = ExponentPack::new(1, 0.25, 0.5).unwrap();
        let u = Field::from_fn(&g, |x| (1.0 - x[0] * x[0]).max(0.0)).unwrap();
        let u = u.scaled(1.0 / hs_dot_norm_sq(&u, 0.25).sqrt());
        assert!((subcritical_value(&u, &pack, &mask).unwrap() - lp_integral(&u, 3.5, &mask)).abs() < 1e-15);
        let crit = pack.with_eps(0.0).unwrap();
        assert_eq!(subcritical_value(&u, &crit, &mask).unwrap(), lp_integral(&u, 4.0, &mask));
        assert_eq!(subcritical_value(&Field::zeros(&g), &pack, &mask).unwrap(), 0.0);
        assert!(matches!(
            subcritical_value(&u.scaled(1.01), &pack, &mask),
            Err(Error::ConstraintViolated(_))
        ));
    }

    #[test]
    fn envelope_examples() {
        let g = make_grid(1, 64, 4.0).unwrap();
        let unit = interval_mask(&g, -0.51, 0.49);
        assert!((unit.measure() - 1.0).abs() < 1e-12);
        let pack = ExponentPack::new(1, 0.25, 0.6).unwrap();
        let sstar = pack.sobolev_constant();
        assert!((hoelder_envelope(&pack, &unit) - sstar.powf(3.4 / 4.0)).abs() < 1e-12);
        let wide = interval_mask(&g, -2.0, 2.0);
        let crit = pack.with_eps(0.0).unwrap();
        assert!((hoelder_envelope(&crit, &wide) - sstar).abs() < 1e-12);
    }

    #[test]
    fn exponent_pack_validation() {
        assert!(ExponentPack::new(1, 0.5, 0.0).is_err());
        assert!(ExponentPack::new(1, 0.25, 2.0).is_err());
        let p = ExponentPack::new(2, 0.5, 1.0).unwrap();
        assert_eq!(p.two_star, 4.0);
        assert_eq!(p.exponent(), 3.0);
    }
}
