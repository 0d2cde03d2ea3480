//! Atomic measures, their construction from densities, blob smoothing and
//! geometric summary statistics.

use std::fmt::Write as _;

use rand::Rng as _;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::exponent::{unit_ball_volume, Exponent};
use crate::quadrature::{gauss_legendre, integrate};
use crate::rng::rng_from_seed;

/// Tolerance on the total mass of an [`EmpiricalMeasure`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Neumaier-compensated sum.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Weighted atoms `Σ m_i δ_{X_i}` in `R^d` with unit total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    positions: Vec<f64>,
    masses: Vec<f64>,
}

impl EmpiricalMeasure {
    /// `positions` is row-major, `dim` coordinates per atom.
    pub fn new(dim: usize, positions: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        let m = Self::unchecked_mass(dim, positions, masses)?;
        let total = compensated_sum(&m.masses);
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidInput(format!("masses sum to {total}, expected 1")));
        }
        Ok(m)
    }

    /// Like [`EmpiricalMeasure::new`] but rescales the masses to unit sum.
    pub fn normalized(dim: usize, positions: Vec<f64>, mut masses: Vec<f64>) -> Result<Self> {
        let total = compensated_sum(&masses);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidInput("total mass must be positive".into()));
        }
        masses.iter_mut().for_each(|m| *m /= total);
        Self::new(dim, positions, masses)
    }

    /// Equal masses `1/N`.
    pub fn uniform(dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 || positions.is_empty() {
            return Err(Error::InvalidInput("need at least one atom".into()));
        }
        let n = positions.len() / dim;
        Self::new(dim, positions, vec![1.0 / n as f64; n])
    }

    fn unchecked_mass(dim: usize, positions: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if masses.is_empty() {
            return Err(Error::InvalidInput("need at least one atom".into()));
        }
        if positions.len() != dim * masses.len() {
            return Err(Error::InvalidInput(format!(
                "{} coordinates for {} atoms in dimension {dim}",
                positions.len(),
                masses.len()
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite position".into()));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidInput("masses must be positive".into()));
        }
        Ok(EmpiricalMeasure { dim, positions, masses })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Same masses, new positions.
    pub fn with_positions(&self, positions: Vec<f64>) -> Result<Self> {
        Self::unchecked_mass(self.dim, positions, self.masses.clone())
    }

    pub fn center_of_mass(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for (i, m) in self.masses.iter().enumerate() {
            for (k, x) in self.position(i).iter().enumerate() {
                c[k] += m * x;
            }
        }
        c
    }

    /// Text form: header `d N`, then `x_1 … x_d m` per atom with 17
    /// significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() * (self.dim + 1) * 24 + 16);
        writeln!(s, "{} {}", self.dim, self.len()).unwrap();
        self.write_rows(&mut s);
        s
    }

    pub(crate) fn write_rows(&self, s: &mut String) {
        for i in 0..self.len() {
            for x in self.position(i) {
                write!(s, "{x:.16e} ").unwrap();
            }
            writeln!(s, "{:.16e}", self.masses[i]).unwrap();
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (m, rest) = Self::parse_block(&mut lines)?;
        if let Some((line, _)) = rest {
            return Err(Error::Parse { line: line + 1, msg: "trailing content".into() });
        }
        Ok(m)
    }

    /// Parse one `d N` block from `lines`, returning the measure and the
    /// next unconsumed line.
    pub(crate) fn parse_block<'a, I>(lines: &mut I) -> Result<(Self, Option<(usize, &'a str)>)>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
        let parse_err = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 2 {
            return Err(parse_err(hl, "header must be 'd N'"));
        }
        let dim: usize = h[0].parse().map_err(|_| parse_err(hl, "bad dimension"))?;
        let n: usize = h[1].parse().map_err(|_| parse_err(hl, "bad atom count"))?;
        let mut positions = Vec::with_capacity(n * dim);
        let mut masses = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = lines.next().ok_or_else(|| parse_err(hl, "fewer atoms than declared"))?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(ln, "bad number"))?;
            if vals.len() != dim + 1 {
                return Err(parse_err(ln, &format!("expected {} columns", dim + 1)));
            }
            positions.extend_from_slice(&vals[..dim]);
            masses.push(vals[dim]);
        }
        let m = Self::new(dim, positions, masses)?;
        Ok((m, lines.next()))
    }
}

/// A compactly supported probability density.
#[derive(Debug, Clone, PartialEq)]
pub enum DensitySpec {
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// `∝ (1 - |x-c|²/r²)^k` on `B(c, r)`.
    RadialBump { center: Vec<f64>, radius: f64, exponent: f64 },
    /// `∝ exp(-|x-c|²/(2σ²))` on `B(c, R)`.
    TruncatedGaussian { center: Vec<f64>, sigma: f64, support: f64 },
}

impl DensitySpec {
    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(Error::InvalidInput("box needs lo < hi on every axis".into()));
        }
        Self::checked(DensitySpec::UniformBox { lo, hi })
    }

    pub fn radial_bump(center: Vec<f64>, radius: f64, exponent: f64) -> Result<Self> {
        if center.is_empty() || !(radius > 0.0 && radius.is_finite()) || !(exponent >= 0.0 && exponent.is_finite()) {
            return Err(Error::InvalidInput("radial bump needs radius > 0 and exponent >= 0".into()));
        }
        Self::checked(DensitySpec::RadialBump { center, radius, exponent })
    }

    pub fn truncated_gaussian(center: Vec<f64>, sigma: f64, support: f64) -> Result<Self> {
        if center.is_empty() || !(sigma > 0.0 && sigma.is_finite()) || !(support > 0.0 && support.is_finite()) {
            return Err(Error::InvalidInput("truncated gaussian needs sigma > 0 and support > 0".into()));
        }
        Self::checked(DensitySpec::TruncatedGaussian { center, sigma, support })
    }

    /// Unit mass confirmed by an independent radial quadrature.
    fn checked(self) -> Result<Self> {
        if self.center().iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite center".into()));
        }
        let mass = self.quadrature_mass();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!("density integrates to {mass}, not 1")));
        }
        Ok(self)
    }

    fn quadrature_mass(&self) -> f64 {
        match self {
            DensitySpec::UniformBox { lo, hi } => {
                let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
                vol * self.density(lo)
            }
            _ => {
                let d = self.dim();
                let (_, r) = self.ball().unwrap();
                let c = self.center();
                let shell = d as f64 * unit_ball_volume(d);
                let f = |s: f64| {
                    let mut x = c.to_vec();
                    x[0] += s;
                    self.density(&x) * s.powi(d as i32 - 1)
                };
                shell * integrate(f, 0.0, r, 64, 10)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    fn center(&self) -> &[f64] {
        match self {
            DensitySpec::UniformBox { lo, .. } => lo,
            DensitySpec::RadialBump { center, .. } | DensitySpec::TruncatedGaussian { center, .. } => center,
        }
    }

    fn ball(&self) -> Option<(&[f64], f64)> {
        match self {
            DensitySpec::UniformBox { .. } => None,
            DensitySpec::RadialBump { center, radius, .. } => Some((center, *radius)),
            DensitySpec::TruncatedGaussian { center, support, .. } => Some((center, *support)),
        }
    }

    /// Normalizing constant `∫` of the unnormalized profile.
    fn normalizer(&self) -> f64 {
        let d = self.dim() as f64;
        match self {
            DensitySpec::UniformBox { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            DensitySpec::RadialBump { radius, exponent, .. } => {
                let k = *exponent;
                let lg = ln_gamma(k + 1.0) - ln_gamma(k + 1.0 + d / 2.0);
                std::f64::consts::PI.powf(d / 2.0) * lg.exp() * radius.powf(d)
            }
            DensitySpec::TruncatedGaussian { sigma, support, .. } => {
                let z = (2.0 * std::f64::consts::PI * sigma * sigma).powf(d / 2.0);
                z * gamma_lr(d / 2.0, support * support / (2.0 * sigma * sigma))
            }
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        match self {
            DensitySpec::UniformBox { lo, hi } => {
                if x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| v >= a && v <= b) {
                    1.0 / self.normalizer()
                } else {
                    0.0
                }
            }
            DensitySpec::RadialBump { center, radius, exponent } => {
                let r2 = dist2(x, center) / (radius * radius);
                if r2 >= 1.0 {
                    0.0
                } else {
                    (1.0 - r2).powf(*exponent) / self.normalizer()
                }
            }
            DensitySpec::TruncatedGaussian { center, sigma, support } => {
                let r2 = dist2(x, center);
                if r2 > support * support {
                    0.0
                } else {
                    (-r2 / (2.0 * sigma * sigma)).exp() / self.normalizer()
                }
            }
        }
    }

    /// Closed-form supremum of the density.
    pub fn sup_bound(&self) -> f64 {
        1.0 / self.normalizer()
    }

    /// `‖ρ‖_p`; radial profiles peak at the center, finite `p` uses the
    /// radial quadrature.
    pub fn lp_norm(&self, p: Exponent) -> f64 {
        match (self, p) {
            (DensitySpec::UniformBox { .. }, Exponent::Infinity) => self.sup_bound(),
            (DensitySpec::UniformBox { .. }, Exponent::Finite(p)) => self.normalizer().powf(1.0 / p - 1.0),
            (_, Exponent::Infinity) => self.density(self.center()),
            (_, Exponent::Finite(p)) => {
                let d = self.dim();
                let (c, r) = self.ball().unwrap();
                let shell = d as f64 * unit_ball_volume(d);
                let f = |s: f64| {
                    let mut x = c.to_vec();
                    x[0] += s;
                    self.density(&x).powf(p) * s.powi(d as i32 - 1)
                };
                (shell * integrate(f, 0.0, r, 64, 10)).powf(1.0 / p)
            }
        }
    }

    /// Axis-aligned bounding box of the support.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DensitySpec::UniformBox { lo, hi } => (lo.clone(), hi.clone()),
            _ => {
                let (c, r) = self.ball().unwrap();
                (c.iter().map(|v| v - r).collect(), c.iter().map(|v| v + r).collect())
            }
        }
    }

    /// `R` with `supp ρ ⊂ [-R, R]^d`.
    pub fn support_radius(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        lo.iter().chain(&hi).fold(0.0, |m, v| m.max(v.abs()))
    }

    fn support_volume(&self) -> f64 {
        match self {
            DensitySpec::UniformBox { .. } => self.normalizer(),
            _ => unit_ball_volume(self.dim()) * self.ball().unwrap().1.powi(self.dim() as i32),
        }
    }

    /// Mass of the axis-aligned cell `[lo, hi]`.
    pub fn cell_mass(&self, lo: &[f64], hi: &[f64]) -> f64 {
        match self {
            DensitySpec::UniformBox { lo: a, hi: b } => {
                let overlap: f64 = lo
                    .iter()
                    .zip(hi)
                    .zip(a.iter().zip(b))
                    .map(|((l, h), (a, b))| (h.min(*b) - l.max(*a)).max(0.0))
                    .product();
                overlap / self.normalizer()
            }
            _ => {
                let (c, r) = self.ball().unwrap();
                // cells entirely outside the ball carry nothing
                let gap2: f64 = lo
                    .iter()
                    .zip(hi)
                    .zip(c)
                    .map(|((l, h), c)| {
                        let g = (l - c).max(c - h).max(0.0);
                        g * g
                    })
                    .sum();
                if gap2 >= r * r {
                    return 0.0;
                }
                tensor_integrate(|x| self.density(x), lo, hi, 4)
            }
        }
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Tensor Gauss–Legendre over a box, `sub` subintervals of order 4 per axis.
fn tensor_integrate<F: Fn(&[f64]) -> f64>(f: F, lo: &[f64], hi: &[f64], sub: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(4);
    let d = lo.len();
    let per_axis = sub * nodes.len();
    let axis: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|k| {
            let h = (hi[k] - lo[k]) / sub as f64;
            (0..sub)
                .flat_map(|s| {
                    let a = lo[k] + s as f64 * h;
                    nodes
                        .iter()
                        .zip(&weights)
                        .map(move |(x, w)| (a + 0.5 * h * (x + 1.0), 0.5 * h * w))
                })
                .collect()
        })
        .collect();
    let total = per_axis.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut sum = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut w = 1.0;
        for k in 0..d {
            let (xi, wi) = axis[k][rem % per_axis];
            rem /= per_axis;
            x[k] = xi;
            w *= wi;
        }
        sum += w * f(&x);
    }
    sum
}

/// One atom per nonempty cell of the regular mesh of size `mesh` anchored at
/// the lower corner of the support's bounding box, placed at the cell center
/// and carrying the cell's mass.
pub fn grid_init(rho: &DensitySpec, mesh: f64, d: usize) -> Result<EmpiricalMeasure> {
    if !(mesh > 0.0 && mesh.is_finite()) {
        return Err(Error::InvalidInput(format!("mesh must be positive, got {mesh}")));
    }
    if d != rho.dim() {
        return Err(Error::DimensionMismatch { left: d, right: rho.dim() });
    }
    let (lo, hi) = rho.bounding_box();
    let counts: Vec<usize> = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (((b - a) / mesh) - 1e-9).ceil().max(1.0) as usize)
        .collect();
    let total: usize = counts.iter().product();
    let threshold = 1e-12 * mesh.powi(d as i32) / rho.support_volume();
    let mut positions = Vec::new();
    let mut masses = Vec::new();
    let mut cl = vec![0.0; d];
    let mut ch = vec![0.0; d];
    for flat in 0..total {
        let mut rem = flat;
        for k in 0..d {
            let i = rem % counts[k];
            rem /= counts[k];
            cl[k] = lo[k] + i as f64 * mesh;
            ch[k] = cl[k] + mesh;
        }
        let m = rho.cell_mass(&cl, &ch);
        if m >= threshold && m > 0.0 {
            positions.extend(cl.iter().map(|a| a + 0.5 * mesh));
            masses.push(m);
        }
    }
    if masses.is_empty() {
        return Err(Error::EmptySupport { mesh });
    }
    EmpiricalMeasure::normalized(d, positions, masses)
}

/// `N` iid draws from `rho` with masses `1/N`, by rejection against the
/// uniform law on the bounding box. A single ChaCha8 stream seeded with
/// `seed` is consumed in atom order.
pub fn iid_sample(rho: &DensitySpec, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::InvalidInput("N must be at least 1".into()));
    }
    let (lo, hi) = rho.bounding_box();
    let d = lo.len();
    let box_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let sup = rho.sup_bound();
    let rate = 1.0 / (sup * box_vol);
    if rate < 1e-4 {
        return Err(Error::IllConditionedDensity { rate });
    }
    let mut rng = rng_from_seed(seed);
    let mut positions = Vec::with_capacity(n * d);
    let mut x = vec![0.0; d];
    while positions.len() < n * d {
        for k in 0..d {
            x[k] = rng.gen_range(lo[k]..hi[k]);
        }
        let accept = match rho {
            DensitySpec::UniformBox { .. } => true,
            _ => rng.gen::<f64>() * sup < rho.density(&x),
        };
        if accept {
            positions.extend_from_slice(&x);
        }
    }
    EmpiricalMeasure::uniform(d, positions)
}

/// Blob radius `ε(N) = N^{-γ/d}`.
pub fn blob_radius(n: usize, gamma: f64, d: usize) -> f64 {
    (n as f64).powf(-gamma / d as f64)
}

/// `ρ_ε(x) = (c_d ε^d)^{-1} Σ m_i 1{|x - X_i| ≤ ε}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobDensity {
    pub atoms: EmpiricalMeasure,
    pub epsilon: f64,
}

pub fn blob_smooth(mu: &EmpiricalMeasure, epsilon: f64) -> Result<BlobDensity> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!("blob radius must be positive, got {epsilon}")));
    }
    Ok(BlobDensity { atoms: mu.clone(), epsilon })
}

impl BlobDensity {
    pub fn height(&self) -> f64 {
        1.0 / (unit_ball_volume(self.atoms.dim()) * self.epsilon.powi(self.atoms.dim() as i32))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let e2 = self.epsilon * self.epsilon;
        let mass: f64 = (0..self.atoms.len())
            .filter(|&i| dist2(self.atoms.position(i), x) <= e2)
            .map(|i| self.atoms.masses()[i])
            .sum();
        mass * self.height()
    }
}

/// Largest grid `blob_lp_norm` will allocate.
const MAX_BLOB_CELLS: usize = 1 << 27;

/// `‖ρ_ε‖_p` by midpoint counting on a grid of spacing `ε/resolution` over
/// the atoms' bounding box padded by `ε`.
pub fn blob_lp_norm(b: &BlobDensity, p: Exponent, resolution: usize) -> Result<f64> {
    if resolution < 4 {
        return Err(Error::InvalidInput("resolution must be at least 4".into()));
    }
    let mu = &b.atoms;
    let d = mu.dim();
    let eps = b.epsilon;
    let h = eps / resolution as f64;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for i in 0..mu.len() {
        for (k, x) in mu.position(i).iter().enumerate() {
            lo[k] = lo[k].min(x - eps);
            hi[k] = hi[k].max(x + eps);
        }
    }
    let counts: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| ((b - a) / h).ceil() as usize + 1).collect();
    let total = counts.iter().try_fold(1usize, |acc, c| acc.checked_mul(*c)).unwrap_or(usize::MAX);
    if total > MAX_BLOB_CELLS {
        return Err(Error::Capacity { pairs: total, limit: MAX_BLOB_CELLS });
    }
    let mut grid = vec![0.0f64; total];
    let reach = resolution as i64 + 1;
    let e2 = eps * eps;
    let mut stride = vec![1usize; d];
    for k in 1..d {
        stride[k] = stride[k - 1] * counts[k - 1];
    }
    let span = (2 * reach + 1) as usize;
    let local_total = span.pow(d as u32);
    for i in 0..mu.len() {
        let x = mu.position(i);
        let m = mu.masses()[i];
        let base: Vec<i64> = (0..d).map(|k| ((x[k] - lo[k]) / h).floor() as i64).collect();
        'cells: for flat in 0..local_total {
            let mut rem = flat;
            let mut idx = 0usize;
            let mut r2 = 0.0;
            for k in 0..d {
                let c = base[k] - reach + (rem % span) as i64;
                rem /= span;
                if c < 0 || c as usize >= counts[k] {
                    continue 'cells;
                }
                let mid = lo[k] + (c as f64 + 0.5) * h;
                r2 += (mid - x[k]) * (mid - x[k]);
                idx += c as usize * stride[k];
            }
            if r2 <= e2 {
                grid[idx] += m;
            }
        }
    }
    let height = b.height();
    Ok(match p {
        Exponent::Infinity => grid.iter().fold(0.0f64, |a, v| a.max(*v)) * height,
        Exponent::Finite(p) => {
            let cell = h.powi(d as i32);
            let s: f64 = grid.iter().filter(|v| **v > 0.0).map(|v| (v * height).powf(p) * cell).sum();
            s.powf(1.0 / p)
        }
    })
}

/// `min_{i≠j} |X_i - X_j|`, exact, by sorting along the first axis.
pub fn min_interparticle_distance(mu: &EmpiricalMeasure) -> Result<f64> {
    Ok(closest_pair(mu)?.2)
}

/// Indices `(i, j)` with `i < j` and distance of a closest pair.
pub fn closest_pair(mu: &EmpiricalMeasure) -> Result<(usize, usize, f64)> {
    closest_pair_of(mu.positions(), mu.dim())
}

pub(crate) fn closest_pair_of(positions: &[f64], d: usize) -> Result<(usize, usize, f64)> {
    let n = positions.len() / d;
    if n < 2 {
        return Err(Error::UndefinedStatistic("minimum distance needs at least two atoms"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| positions[a * d].total_cmp(&positions[b * d]));
    let mut best2 = f64::INFINITY;
    let mut pair = (0, 1);
    for (s, &i) in order.iter().enumerate() {
        let xi = &positions[i * d..(i + 1) * d];
        for &j in &order[s + 1..] {
            let xj = &positions[j * d..(j + 1) * d];
            let dx = xj[0] - xi[0];
            if dx * dx > best2 {
                break;
            }
            let r2 = dist2(xi, xj);
            if r2 < best2 {
                best2 = r2;
                pair = (i.min(j), i.max(j));
            }
        }
    }
    Ok((pair.0, pair.1, best2.sqrt()))
}

/// `max_i |X_i|_∞`.
pub fn support_radius(mu: &EmpiricalMeasure) -> f64 {
    mu.positions().iter().fold(0.0, |m, x| m.max(x.abs()))
}
