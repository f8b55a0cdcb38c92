//! Radius profiles, greedy Besicovitch coverings and sensor sets.
//!
//! Balls are open: `B(y, ρ) = {x : |x − y| < ρ}`. In one dimension all
//! measures are computed exactly by interval arithmetic; two-dimensional
//! sensor sets live on a grid and carry an explicit resolution error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declared per-axis overlap constant of the greedy construction: measured
/// overlaps are checked against `K_BES_1D` (d = 1) and `K_BES_2D` (d = 2).
pub const K_BES_1D: usize = 4;
pub const K_BES_2D: usize = 20;
/// Greedy iteration guard.
pub const MAX_BALLS: usize = 200_000;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `ρ(x) = min{R(1+|x|²)^{δ/2}, η·max(|x|, r₀)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusProfile {
    #[serde(rename = "R")]
    pub r_big: f64,
    pub delta: f64,
    pub eta: f64,
    pub r0: f64,
}

impl RadiusProfile {
    pub fn new(r_big: f64, delta: f64, eta: f64, r0: f64) -> Result<Self> {
        let p = RadiusProfile { r_big, delta, eta, r0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_big >= 1.0 && self.r_big.is_finite()) {
            return Err(Error::domain("R", format!("{} < 1", self.r_big)));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::domain("delta", format!("{} not in [0, 1]", self.delta)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::domain("eta", format!("{} not in (0, 1)", self.eta)));
        }
        if !(self.r0 >= 1.0 && self.r0.is_finite()) {
            return Err(Error::domain("r0", format!("{} < 1", self.r0)));
        }
        Ok(())
    }

    /// The upper envelope `R(1+|x|²)^{δ/2}`.
    pub fn envelope(&self, x: &[f64]) -> f64 {
        let n2: f64 = x.iter().map(|v| v * v).sum();
        self.r_big * (1.0 + n2).powf(self.delta / 2.0)
    }

    pub fn rho(&self, x: &[f64]) -> f64 {
        self.rho_at_norm(norm(x))
    }

    /// ρ depends on `|x|` only and is nondecreasing in it.
    pub fn rho_at_norm(&self, r: f64) -> f64 {
        let env = self.r_big * (1.0 + r * r).powf(self.delta / 2.0);
        env.min(self.eta * r.max(self.r0))
    }

    /// `max{r₀, r/(1−η)}`: radius of the region the covering must reach.
    pub fn covering_radius(&self, r: f64) -> f64 {
        self.r0.max(r / (1.0 - self.eta))
    }
}

pub fn rho(profile: &RadiusProfile, x: &[f64]) -> f64 {
    profile.rho(x)
}

/// Open ball `B(center, radius)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn volume(&self) -> f64 {
        ball_volume(self.dim(), self.radius)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist(&self.center, x) < self.radius
    }

    pub fn region(&self) -> crate::spectral::Region {
        crate::spectral::Region::ball(&self.center, self.radius)
    }
}

/// Besicovitch-type family `Q_k = B(y_k, ρ(y_k))` covering `B(0, r_cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covering {
    pub dim: usize,
    pub centers: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub kappa_measured: usize,
    pub target_radius: f64,
    pub kappa_declared: usize,
}

impl Covering {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn kappa_within_declared(&self) -> bool {
        self.kappa_measured <= self.kappa_declared
    }

    /// Number of balls containing `x`.
    pub fn multiplicity(&self, x: &[f64]) -> usize {
        self.centers
            .iter()
            .zip(&self.radii)
            .filter(|(c, r)| dist(c, x) < **r)
            .count()
    }

    pub fn ball(&self, k: usize) -> Ball {
        Ball::new(self.centers[k].clone(), self.radii[k])
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn ball_volume(dim: usize, r: f64) -> f64 {
    match dim {
        1 => 2.0 * r,
        _ => std::f64::consts::PI * r * r,
    }
}

/// Removes the open interval `(a, b)` from a sorted list of closed pieces.
fn subtract_open(pieces: &mut Vec<(f64, f64)>, a: f64, b: f64) {
    let mut out = Vec::with_capacity(pieces.len() + 1);
    for &(lo, hi) in pieces.iter() {
        if hi <= a || lo >= b {
            out.push((lo, hi));
            continue;
        }
        if lo <= a {
            out.push((lo, a));
        }
        if hi >= b {
            out.push((b, hi));
        }
    }
    *pieces = out;
}

fn cover_1d(profile: &RadiusProfile, t: f64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let clip = t * (1.0 - 1e-12);
    let mut uncovered = vec![(-t, t)];
    let mut centers = Vec::new();
    let mut radii = Vec::new();
    while !uncovered.is_empty() {
        if centers.len() >= MAX_BALLS {
            return Err(Error::numerical("besicovitch_cover", format!("iteration cap {MAX_BALLS} reached")));
        }
        // ρ is radial and nondecreasing, so its maximum over the uncovered set
        // sits at a component endpoint; ties go to the leftmost point.
        let mut best: Option<(f64, f64)> = None;
        for &(lo, hi) in &uncovered {
            for x in [lo, hi] {
                let rr = profile.rho_at_norm(x.abs());
                let better = match best {
                    None => true,
                    Some((bx, br)) => rr > br * (1.0 + 1e-12) || (rr >= br * (1.0 - 1e-12) && x < bx),
                };
                if better {
                    best = Some((x, rr));
                }
            }
        }
        let (x, _) = best.expect("nonempty uncovered set");
        let y = x.clamp(-clip, clip);
        let r = profile.rho_at_norm(y.abs());
        subtract_open(&mut uncovered, y - r, y + r);
        centers.push(vec![y]);
        radii.push(r);
    }
    Ok((centers, radii))
}

fn cover_2d(profile: &RadiusProfile, t: f64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let clip = t * (1.0 - 1e-12);
    let h = profile.rho_at_norm(0.0) / 8.0;
    let n = (2.0 * (t + h) / h).ceil() as usize + 1;
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let p = [-(t + h) + i as f64 * h, -(t + h) + j as f64 * h];
            if norm(&p) < t + h {
                pts.push((p, profile.rho_at_norm(norm(&p).min(clip))));
            }
        }
    }
    // Order candidates by decreasing ρ, then lexicographically.
    pts.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0[0].total_cmp(&b.0[0])).then(a.0[1].total_cmp(&b.0[1])));
    let mut covered = vec![false; pts.len()];
    let mut centers: Vec<Vec<f64>> = Vec::new();
    let mut radii = Vec::new();
    // A grid point counts as covered only if its whole cell is inside the ball.
    let margin = h * std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..pts.len() {
        if covered[i] {
            continue;
        }
        if centers.len() >= MAX_BALLS {
            return Err(Error::numerical("besicovitch_cover", format!("iteration cap {MAX_BALLS} reached")));
        }
        let p = pts[i].0;
        let s = norm(&p);
        let y = if s > clip { [p[0] * clip / s, p[1] * clip / s] } else { p };
        let r = profile.rho_at_norm(norm(&y));
        for (q, c) in pts.iter().zip(covered.iter_mut()) {
            if !*c && dist(&q.0, &y) + margin < r {
                *c = true;
            }
        }
        // The candidate itself must end up covered even if its cell is not.
        if !covered[i] && dist(&p, &y) < r {
            covered[i] = true;
        }
        centers.push(y.to_vec());
        radii.push(r);
    }
    Ok((centers, radii))
}

/// Exact maximal multiplicity of a family of open intervals.
fn overlap_1d(centers: &[Vec<f64>], radii: &[f64]) -> usize {
    let mut ends: Vec<f64> = Vec::with_capacity(2 * centers.len());
    for (c, r) in centers.iter().zip(radii) {
        ends.push(c[0] - r);
        ends.push(c[0] + r);
    }
    ends.sort_by(f64::total_cmp);
    ends.dedup();
    let iv: Vec<(f64, f64)> = centers.iter().zip(radii).map(|(c, r)| (c[0] - r, c[0] + r)).collect();
    ends.windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            iv.iter().filter(|(a, b)| *a < m && m < *b).count()
        })
        .max()
        .unwrap_or(0)
}

fn overlap_sampled(cover: &Covering, samples: usize, seed: u64) -> usize {
    let pts = sample_ball(cover.dim, cover.target_radius * 1.05 + 1.0, samples, seed);
    pts.par_iter().map(|p| cover.multiplicity(p)).max().unwrap_or(0)
}

/// Greedy maximal-radius covering of `B(0, max{r₀, r/(1−η)})`.
///
/// Repeatedly takes an uncovered point with the largest `ρ` (leftmost /
/// lexicographically first on ties), clipped to `|y| < r_cov`, and adds its
/// ball. In d = 1 the uncovered set is tracked exactly; in d = 2 on a grid of
/// spacing `ρ(0)/8` whose cells must lie entirely inside a ball to count as
/// covered, which makes grid coverage imply coverage of the disc.
pub fn besicovitch_cover(profile: &RadiusProfile, r: f64, dim: usize) -> Result<Covering> {
    profile.validate()?;
    if !(r >= 1.0 && r.is_finite()) {
        return Err(Error::domain("r", format!("{r} < 1")));
    }
    let t = profile.covering_radius(r);
    let (centers, radii) = match dim {
        1 => cover_1d(profile, t)?,
        2 => cover_2d(profile, t)?,
        d => return Err(Error::UnsupportedDimension(d)),
    };
    let mut cover = Covering {
        dim,
        centers,
        radii,
        kappa_measured: 0,
        target_radius: t,
        kappa_declared: if dim == 1 { K_BES_1D } else { K_BES_2D },
    };
    cover.kappa_measured = if dim == 1 {
        overlap_1d(&cover.centers, &cover.radii)
    } else {
        overlap_sampled(&cover, 100_000, 0x5eed)
    };
    Ok(cover)
}

/// Uniform samples from `B(0, radius)` in d = 1 or 2.
pub fn sample_ball(dim: usize, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| match dim {
            1 => vec![rng.random_range(-radius..radius)],
            _ => loop {
                let p = [rng.random_range(-radius..radius), rng.random_range(-radius..radius)];
                if norm(&p) < radius {
                    break p.to_vec();
                }
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub samples: usize,
    pub uncovered: usize,
    pub first_uncovered: Option<Vec<f64>>,
    /// With probability ≥ 95% the uncovered fraction of the target ball is
    /// below this value (rule of three when no gap is found).
    pub uncovered_fraction_bound_95: f64,
    pub max_multiplicity: usize,
}

impl CoverageReport {
    pub fn passed(&self) -> bool {
        self.uncovered == 0
    }
}

/// Randomized coverage and overlap check on `B(0, r_cov)`.
pub fn coverage_check(cover: &Covering, samples: usize, seed: u64) -> CoverageReport {
    let pts = sample_ball(cover.dim, cover.target_radius, samples, seed);
    let counts: Vec<usize> = pts.par_iter().map(|p| cover.multiplicity(p)).collect();
    let uncovered = counts.iter().filter(|&&c| c == 0).count();
    let first_uncovered = counts.iter().position(|&c| c == 0).map(|i| pts[i].clone());
    let uncovered_fraction_bound_95 = if uncovered == 0 {
        3.0 / samples.max(1) as f64
    } else {
        1.0
    };
    CoverageReport {
        samples,
        uncovered,
        first_uncovered,
        uncovered_fraction_bound_95,
        max_multiplicity: counts.into_iter().max().unwrap_or(0),
    }
}

/// Axis-aligned grid indicator for d = 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMask {
    pub origin: [f64; 2],
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `mask[i * ny + j]` for the cell `[x0 + i·h, ...) × [y0 + j·h, ...)`.
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SensorRepr {
    Whole { dim: usize },
    /// `∪_j [j·period, j·period + fill·period)`
    Periodic { period: f64, fill: f64 },
    /// Sorted disjoint intervals.
    Intervals { pieces: Vec<(f64, f64)> },
    Grid(GridMask),
}

/// A measurable sensor set `ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSet {
    pub description: String,
    pub repr: SensorRepr,
}

/// Outcome of a ball-measure query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub value: f64,
    /// Zero for exact (d = 1) computations.
    pub error_bound: f64,
}

impl SensorSet {
    pub fn whole(dim: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(SensorSet {
            description: format!("whole(d={dim})"),
            repr: SensorRepr::Whole { dim },
        })
    }

    pub fn intervals(mut pieces: Vec<(f64, f64)>, description: impl Into<String>) -> Result<Self> {
        if pieces.iter().any(|(a, b)| !(a < b) || a.is_nan() || b.is_nan()) {
            return Err(Error::domain("pieces", "every interval needs a < b"));
        }
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Merge overlapping or touching pieces.
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pieces.len());
        for (a, b) in pieces {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Ok(SensorSet {
            description: description.into(),
            repr: SensorRepr::Intervals { pieces: merged },
        })
    }

    pub fn grid(mask: GridMask, description: impl Into<String>) -> Result<Self> {
        if mask.mask.len() != mask.nx * mask.ny || !(mask.cell > 0.0) {
            return Err(Error::domain("mask", "grid shape does not match mask length"));
        }
        Ok(SensorSet {
            description: description.into(),
            repr: SensorRepr::Grid(mask),
        })
    }

    pub fn dim(&self) -> usize {
        match &self.repr {
            SensorRepr::Whole { dim } => *dim,
            SensorRepr::Grid(_) => 2,
            _ => 1,
        }
    }

    pub fn is_whole(&self) -> bool {
        matches!(self.repr, SensorRepr::Whole { .. })
    }

    fn periodic_cumulative(period: f64, fill: f64, x: f64) -> f64 {
        let j = (x / period).floor();
        let frac = x - j * period;
        j * fill * period + frac.min(fill * period)
    }

    /// `ω ∩ [a, b]` as sorted disjoint intervals (d = 1).
    pub fn pieces_in(&self, a: f64, b: f64) -> Result<Vec<(f64, f64)>> {
        if !(a < b) {
            return Ok(Vec::new());
        }
        match &self.repr {
            SensorRepr::Whole { dim: 1 } => Ok(vec![(a, b)]),
            SensorRepr::Periodic { period, fill } => {
                let mut out = Vec::new();
                let j0 = (a / period).floor() as i64;
                let j1 = (b / period).ceil() as i64;
                for j in j0..=j1 {
                    let lo = (j as f64 * period).max(a);
                    let hi = ((j as f64 + fill) * period).min(b);
                    if lo < hi {
                        out.push((lo, hi));
                    }
                }
                Ok(out)
            }
            SensorRepr::Intervals { pieces } => Ok(pieces
                .iter()
                .filter_map(|&(lo, hi)| {
                    let (l, h) = (lo.max(a), hi.min(b));
                    (l < h).then_some((l, h))
                })
                .collect()),
            _ => Err(Error::domain("omega", "interval decomposition requires a one-dimensional set")),
        }
    }

    /// `|ω ∩ B(center, radius)|` (exact in d = 1).
    pub fn ball_measure(&self, center: &[f64], radius: f64) -> Result<Measure> {
        if center.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: center.len(),
            });
        }
        let exact = |value| Measure { value, error_bound: 0.0 };
        match &self.repr {
            SensorRepr::Whole { dim } => Ok(exact(ball_volume(*dim, radius))),
            SensorRepr::Periodic { period, fill } => {
                let (a, b) = (center[0] - radius, center[0] + radius);
                Ok(exact(
                    Self::periodic_cumulative(*period, *fill, b) - Self::periodic_cumulative(*period, *fill, a),
                ))
            }
            SensorRepr::Intervals { .. } => {
                let p = self.pieces_in(center[0] - radius, center[0] + radius)?;
                Ok(exact(p.iter().map(|(a, b)| b - a).sum()))
            }
            SensorRepr::Grid(g) => Ok(grid_ball_measure(g, center, radius)),
        }
    }

    /// `|B ∩ ω| / |B|` for `B = B(center, radius)`.
    pub fn ball_density(&self, center: &[f64], radius: f64) -> Result<Measure> {
        let m = self.ball_measure(center, radius)?;
        let v = ball_volume(self.dim(), radius);
        Ok(Measure {
            value: m.value / v,
            error_bound: m.error_bound / v,
        })
    }
}

fn grid_ball_measure(g: &GridMask, c: &[f64], r: f64) -> Measure {
    let h = g.cell;
    let area = h * h;
    let i0 = (((c[0] - r - g.origin[0]) / h).floor().max(0.0)) as usize;
    let i1 = (((c[0] + r - g.origin[0]) / h).ceil().max(0.0) as usize).min(g.nx);
    let j0 = (((c[1] - r - g.origin[1]) / h).floor().max(0.0)) as usize;
    let j1 = (((c[1] + r - g.origin[1]) / h).ceil().max(0.0) as usize).min(g.ny);
    let (mut value, mut err) = (0.0, 0.0);
    const SUB: usize = 8;
    for i in i0..i1 {
        for j in j0..j1 {
            if !g.mask[i * g.ny + j] {
                continue;
            }
            let (x0, y0) = (g.origin[0] + i as f64 * h, g.origin[1] + j as f64 * h);
            let nearest = [c[0].clamp(x0, x0 + h) - c[0], c[1].clamp(y0, y0 + h) - c[1]];
            if norm(&nearest) >= r {
                continue;
            }
            let fx = (c[0] - x0).abs().max((c[0] - x0 - h).abs());
            let fy = (c[1] - y0).abs().max((c[1] - y0 - h).abs());
            if fx.hypot(fy) < r {
                value += area;
                continue;
            }
            // Cut cell: midpoint sub-sampling, whole cell area as error bound.
            let mut inside = 0;
            for a in 0..SUB {
                for b in 0..SUB {
                    let p = [x0 + (a as f64 + 0.5) * h / SUB as f64, y0 + (b as f64 + 0.5) * h / SUB as f64];
                    if dist(&p, c) < r {
                        inside += 1;
                    }
                }
            }
            value += area * inside as f64 / (SUB * SUB) as f64;
            err += area;
        }
    }
    Measure { value, error_bound: err }
}

/// `ω = ∪_j [j·period, j·period + fill·period)`.
pub fn sensor_periodic(period: f64, fill: f64) -> Result<SensorSet> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::domain("period", format!("{period} must be positive")));
    }
    if !(0.0..=1.0).contains(&fill) {
        return Err(Error::domain("fill", format!("{fill} not in [0, 1]")));
    }
    if fill == 1.0 {
        let mut w = SensorSet::whole(1)?;
        w.description = format!("periodic(period={period}, fill=1)");
        return Ok(w);
    }
    Ok(SensorSet {
        description: format!("periodic(period={period}, fill={fill})"),
        repr: SensorRepr::Periodic { period, fill },
    })
}

/// One random subinterval per cell `[j·period, (j+1)·period)` for
/// `|j·period| < extent`, of length uniform in `[min_fill, 1]·period` at a
/// uniform offset (seeded).
pub fn sensor_random_cells(period: f64, min_fill: f64, extent: f64, seed: u64) -> Result<SensorSet> {
    if !(period > 0.0 && extent > 0.0) || !(min_fill > 0.0 && min_fill <= 1.0) {
        return Err(Error::domain("min_fill", "random cells need positive period and extent, min_fill in (0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = (extent / period).ceil() as i64;
    let mut pieces = Vec::new();
    for j in -cells..cells {
        let len = rng.random_range(min_fill..=1.0) * period;
        let off = rng.random_range(0.0..=1.0) * (period - len);
        let lo = j as f64 * period + off;
        pieces.push((lo, lo + len));
    }
    SensorSet::intervals(
        pieces,
        format!("random-cells(period={period}, min_fill={min_fill}, extent={extent}, seed={seed})"),
    )
}

/// Periodic stripes `{x : x₁ mod period < fill·period}` on a grid over
/// `[-half, half]²` (d = 2).
pub fn sensor_stripes_2d(period: f64, fill: f64, half: f64, cell: f64) -> Result<SensorSet> {
    if !(period > 0.0 && cell > 0.0 && half > 0.0) || !(0.0..=1.0).contains(&fill) {
        return Err(Error::domain("period", "stripes need positive period, cell, extent and fill in [0, 1]"));
    }
    let n = (2.0 * half / cell).ceil() as usize;
    let mut mask = vec![false; n * n];
    for i in 0..n {
        let xm = -half + (i as f64 + 0.5) * cell;
        let on = (xm / period - (xm / period).floor()) < fill;
        for j in 0..n {
            mask[i * n + j] = on;
        }
    }
    SensorSet::grid(
        GridMask {
            origin: [-half, -half],
            cell,
            nx: n,
            ny: n,
            mask,
        },
        format!("stripes2d(period={period}, fill={fill})"),
    )
}

/// Density threshold for certification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityTarget {
    Constant { gamma: f64 },
    /// `γ₀ / (1 + |x|^a)`
    Decaying { gamma0: f64, a: f64 },
}

impl DensityTarget {
    pub fn at(&self, x: &[f64]) -> f64 {
        match *self {
            DensityTarget::Constant { gamma } => gamma,
            DensityTarget::Decaying { gamma0, a } => gamma0 / (1.0 + norm(x).powf(a)),
        }
    }
}

/// Lattice set whose density near `x` is at least `γ₀/(1+|x|^a)`, empty
/// beyond `extent`.
///
/// Cells of width `ρ(0)/4` are filled from the left with fraction
/// `min(1, boost·γ₀/(1+(|c|−ρ(c))₊^a))`, `c` the cell midpoint; `boost`
/// starts at 1.25 and doubles until [`certify_density`] passes on the grid
/// of centers with `|x| + ρ(x) ≤ extent`.
pub fn sensor_decaying_density(gamma0: f64, a: f64, profile: &RadiusProfile, extent: f64) -> Result<SensorSet> {
    profile.validate()?;
    if !(gamma0 > 0.0 && gamma0 < 1.0) {
        return Err(Error::domain("gamma0", format!("{gamma0} not in (0, 1)")));
    }
    if !(a >= 0.0) {
        return Err(Error::domain("a", format!("{a} < 0")));
    }
    if !(extent > profile.r0) {
        return Err(Error::domain("extent", format!("{extent} must exceed r0 = {}", profile.r0)));
    }
    let h = profile.rho_at_norm(0.0) / 4.0;
    let cells = (extent / h).ceil() as i64;
    let target = DensityTarget::Decaying { gamma0, a };
    let centers = density_sample_centers(profile, extent, 1);
    let mut boost = 1.25;
    for _ in 0..12 {
        let mut pieces = Vec::new();
        for j in -cells..cells {
            let lo = j as f64 * h;
            let mid = lo + 0.5 * h;
            let s = (mid.abs() - profile.rho_at_norm(mid.abs())).max(0.0);
            let fill = (boost * gamma0 / (1.0 + s.powf(a))).min(1.0);
            pieces.push((lo, lo + fill * h));
        }
        let omega = SensorSet::intervals(pieces, format!("decaying(gamma0={gamma0}, a={a}, extent={extent})"))?;
        let rep = certify_density(&omega, profile, target, &centers)?;
        if rep.passed {
            return Ok(omega);
        }
        boost *= 2.0;
    }
    Err(Error::numerical("sensor_decaying_density", "density could not be certified"))
}

/// Grid of centers with `|x| + ρ(x) ≤ extent` (spacing `ρ(0)/(8·refine)`).
pub fn density_sample_centers(profile: &RadiusProfile, extent: f64, refine: usize) -> Vec<Vec<f64>> {
    let h = profile.rho_at_norm(0.0) / (8.0 * refine.max(1) as f64);
    let n = (extent / h).ceil() as i64;
    (-n..=n)
        .map(|j| j as f64 * h)
        .filter(|x| x.abs() + profile.rho_at_norm(x.abs()) <= extent)
        .map(|x| vec![x])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub min_ratio: f64,
    pub argmin: Option<Vec<f64>>,
    /// Smallest `ratio − error − threshold(x)`.
    pub min_margin: f64,
    pub violations: Vec<Vec<f64>>,
    pub centers_checked: usize,
    pub passed: bool,
}

/// Checks `|B(x,ρ(x)) ∩ ω| / |B(x,ρ(x))| ≥ threshold(x)` at each center.
pub fn certify_density(
    omega: &SensorSet,
    profile: &RadiusProfile,
    target: DensityTarget,
    centers: &[Vec<f64>],
) -> Result<DensityReport> {
    let ratios: Vec<Measure> = centers
        .par_iter()
        .map(|x| omega.ball_density(x, profile.rho(x)))
        .collect::<Result<_>>()?;
    let mut rep = DensityReport {
        min_ratio: f64::INFINITY,
        argmin: None,
        min_margin: f64::INFINITY,
        violations: Vec::new(),
        centers_checked: centers.len(),
        passed: true,
    };
    for (x, m) in centers.iter().zip(&ratios) {
        if m.value < rep.min_ratio {
            rep.min_ratio = m.value;
            rep.argmin = Some(x.clone());
        }
        let margin = m.value - m.error_bound - target.at(x);
        rep.min_margin = rep.min_margin.min(margin);
        if margin < 0.0 || m.value == 0.0 {
            rep.violations.push(x.clone());
        }
    }
    rep.passed = rep.violations.is_empty() && !centers.is_empty();
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_profile() -> RadiusProfile {
        // ρ ≡ 1
        RadiusProfile::new(1.0, 0.0, 0.5, 2.0).unwrap()
    }

    #[test]
    fn rho_examples() {
        let p = RadiusProfile::new(1.0, 0.0, 0.5, 1.0).unwrap();
        assert_eq!(p.rho(&[0.0]), 0.5);
        let q = RadiusProfile::new(1.0, 1.0, 0.5, 1.0).unwrap();
        assert_eq!(q.rho(&[10.0]), 5.0);
        assert!(q.rho(&[10.0]) <= 0.5 * 10.0);
        // δ < 1 with r₀ = (4R)^{1/(1−δ)}: the cap never binds below the envelope.
        let (r, d) = (1.5, 0.5);
        let auto = RadiusProfile::new(r, d, 0.5, (4.0 * r).powf(1.0 / (1.0 - d))).unwrap();
        for k in 0..200 {
            let x = auto.r0 + 0.5 * k as f64;
            assert!(auto.envelope(&[x]) <= 0.5 * x + 1e-12);
        }
        assert!(RadiusProfile::new(0.5, 0.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn unit_radius_cover_is_a_lattice() {
        let c = besicovitch_cover(&unit_profile(), 3.0, 1).unwrap();
        assert_eq!(c.kappa_measured, 2);
        for w in c.centers.windows(2) {
            assert_abs_diff_eq!(w[1][0] - w[0][0], 1.0, epsilon = 1e-9);
        }
        let t = c.target_radius;
        assert!(c.centers.iter().all(|y| y[0].abs() < t));
        let rep = coverage_check(&c, 10_000, 7);
        assert!(rep.passed());
        assert_eq!(rep.max_multiplicity, 2);
    }

    #[test]
    fn variable_radius_cover_in_two_dimensions() {
        let p = RadiusProfile::new(1.0, 0.5, 0.5, 1.0).unwrap();
        let c = besicovitch_cover(&p, 3.0, 2).unwrap();
        let rep = coverage_check(&c, 20_000, 3);
        assert!(rep.passed(), "{:?}", rep.first_uncovered);
        assert!(c.kappa_within_declared(), "κ = {}", c.kappa_measured);
        assert!(c.centers.iter().all(|y| norm(y) < c.target_radius));
    }

    #[test]
    fn periodic_density_examples() {
        let w = sensor_periodic(1.0, 0.5).unwrap();
        let centers: Vec<Vec<f64>> = (0..400).map(|k| vec![-10.0 + 0.05 * k as f64]).collect();
        let rep = certify_density(&w, &unit_profile(), DensityTarget::Constant { gamma: 0.5 }, &centers).unwrap();
        assert!(rep.passed);
        assert_abs_diff_eq!(rep.min_ratio, 0.5, epsilon = 1e-12);
        let small = RadiusProfile::new(1.0, 0.0, 0.125, 2.0).unwrap();
        assert_eq!(small.rho(&[0.0]), 0.25);
        let bad = certify_density(&w, &small, DensityTarget::Constant { gamma: 0.1 }, &centers).unwrap();
        assert!(!bad.passed);
        assert_eq!(bad.min_ratio, 0.0);
        assert!(sensor_periodic(1.0, 1.0).unwrap().is_whole());
        let empty = sensor_periodic(1.0, 0.0).unwrap();
        let e = certify_density(&empty, &unit_profile(), DensityTarget::Constant { gamma: 0.01 }, &centers).unwrap();
        assert!(!e.passed);
    }

    #[test]
    fn whole_line_density_is_one() {
        let w = SensorSet::whole(1).unwrap();
        let rep = certify_density(&w, &unit_profile(), DensityTarget::Constant { gamma: 1.0 }, &[vec![0.3]]).unwrap();
        assert_eq!(rep.min_ratio, 1.0);
    }

    #[test]
    fn decaying_density_construction() {
        let p = unit_profile();
        let w = sensor_decaying_density(0.5, 1.0, &p, 12.0).unwrap();
        let d = w.ball_density(&[3.0], 1.0).unwrap().value;
        assert!(d >= 0.125, "{d}");
        // a = 0: the threshold γ₀/(1+|x|⁰) = γ₀/2 is constant, and so is the fill.
        let flat = sensor_decaying_density(0.5, 0.0, &p, 12.0).unwrap();
        let d: Vec<f64> = [-5.0, 0.0, 4.3].iter().map(|&x| flat.ball_density(&[x], 1.0).unwrap().value).collect();
        assert!(d.iter().all(|&v| v >= 0.25), "{d:?}");
        let SensorRepr::Intervals { pieces } = &flat.repr else { panic!() };
        let w0 = pieces[0].1 - pieces[0].0;
        assert!(pieces.iter().all(|(a, b)| ((b - a) - w0).abs() < 1e-12));
    }

    #[test]
    fn grid_measure_carries_error_bound() {
        let w = sensor_stripes_2d(1.0, 0.5, 6.0, 0.05).unwrap();
        let m = w.ball_density(&[0.2, -0.4], 1.0).unwrap();
        assert!((m.value - 0.5).abs() <= m.error_bound + 0.05);
        let whole = sensor_stripes_2d(1.0, 1.0, 6.0, 0.1).unwrap();
        let mw = whole.ball_measure(&[0.0, 0.0], 1.0).unwrap();
        assert!((mw.value - std::f64::consts::PI).abs() <= mw.error_bound);
    }

    #[test]
    fn interval_sets_merge_and_clip() {
        let w = SensorSet::intervals(vec![(2.0, 3.0), (0.0, 1.0), (0.5, 1.5)], "t").unwrap();
        assert_eq!(w.pieces_in(-1.0, 2.5).unwrap(), vec![(0.0, 1.5), (2.0, 2.5)]);
        assert_eq!(w.ball_measure(&[1.0], 1.0).unwrap().value, 1.5);
    }
}
