//! Finite coverings of the unit ball by balls of radius sigma.
//!
//! Every template is an axis-parallel lattice `spacing * (Z^d + shift)`
//! restricted to a neighbourhood of the unit ball. Because the lattice is
//! axis-parallel, the nearest template center to a point of the unit ball is
//! found by rounding coordinates, which is what the verifier and the premise
//! checks rely on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};
use crate::metric::{NormKind, NormSpec, REL_SLACK};

/// Largest lattice box we are willing to enumerate.
pub const MAX_LATTICE_BOX: u64 = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    EuclideanGrid,
    LinfGrid,
    LpGrid,
    BlackboxGrid,
}

impl Construction {
    pub fn as_str(self) -> &'static str {
        match self {
            Construction::EuclideanGrid => "euclidean-grid",
            Construction::LinfGrid => "linf-grid",
            Construction::LpGrid => "lp-grid",
            Construction::BlackboxGrid => "blackbox-grid",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CoveringTemplate {
    dim: usize,
    sigma: f64,
    norm: NormSpec,
    construction: Construction,
    spacing: f64,
    shift: f64,
    kmin: i32,
    kmax: i32,
    /// Lattice coordinates, lexicographically sorted, `dim` per center.
    lattice: Vec<i32>,
    centers: Vec<f64>,
}

fn check_args(dim: usize, sigma: f64) -> Result<()> {
    if dim == 0 {
        return parameter("dimension must be positive");
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return parameter(format!("sigma must lie in (0, 1), got {sigma}"));
    }
    Ok(())
}

impl CoveringTemplate {
    /// `(2 sigma / sqrt d) Z^d` intersected with B(0, 1 + sigma) under l2.
    pub fn euclidean_grid(dim: usize, sigma: f64) -> Result<Self> {
        check_args(dim, sigma)?;
        let spacing = 2.0 * sigma / (dim as f64).sqrt();
        Self::ball_lattice(dim, sigma, NormSpec::l2(), Construction::EuclideanGrid, spacing, 1.0)
    }

    /// Centers of the uniform subdivision of [-1, 1]^d into ceil(1/sigma)
    /// slabs per axis.
    pub fn linf_grid(dim: usize, sigma: f64) -> Result<Self> {
        check_args(dim, sigma)?;
        // The factor keeps 1/sigma that lands a hair above an integer from
        // adding a whole slab.
        let m = ((1.0 / sigma) * (1.0 - 1e-12)).ceil().max(1.0) as i64;
        let spacing = 2.0 / m as f64;
        let (shift, kmin, kmax) = if m % 2 == 0 {
            (0.5, -(m / 2), m / 2 - 1)
        } else {
            (0.0, -(m - 1) / 2, (m - 1) / 2)
        };
        let kmin = kmin as i32;
        let kmax = kmax as i32;
        check_box(dim, kmin, kmax)?;
        let mut t = CoveringTemplate {
            dim,
            sigma,
            norm: NormSpec::linf(),
            construction: Construction::LinfGrid,
            spacing,
            shift,
            kmin,
            kmax,
            lattice: Vec::new(),
            centers: Vec::new(),
        };
        t.enumerate(|_| true);
        Ok(t)
    }

    /// Axis-parallel grid of spacing `2 sigma / d^(1/p)` restricted to the
    /// l_p ball of radius 1 + sigma. `p = 2` is exactly [`Self::euclidean_grid`].
    pub fn lp_grid(dim: usize, p: f64, sigma: f64) -> Result<Self> {
        check_args(dim, sigma)?;
        if !(p >= 1.0) || p.is_infinite() {
            return parameter(format!("lp_grid needs 1 <= p < inf, got {p}"));
        }
        if p == 2.0 {
            return Self::euclidean_grid(dim, sigma);
        }
        let spacing = 2.0 * sigma / (dim as f64).powf(1.0 / p);
        Self::ball_lattice(dim, sigma, NormSpec::lp(p)?, Construction::LpGrid, spacing, 1.0)
    }

    /// Grid for a black-box norm with declared constants: spacing
    /// `2 sigma / (d c_high)`, enumerated over `|x|_inf <= (1 + sigma) / c_low`
    /// and kept where the norm is at most 1 + sigma.
    pub fn black_box_grid(dim: usize, norm: &NormSpec, sigma: f64) -> Result<Self> {
        check_args(dim, sigma)?;
        norm.check_dim(dim)?;
        if !norm.is_black_box() {
            return parameter("black_box_grid expects a black-box norm");
        }
        let (c_low, c_high) = norm.equivalence(dim);
        let spacing = 2.0 * sigma / (dim as f64 * c_high);
        Self::ball_lattice(
            dim,
            sigma,
            norm.clone(),
            Construction::BlackboxGrid,
            spacing,
            1.0 / c_low,
        )
    }

    /// The template this crate uses for `norm`.
    pub fn for_norm(norm: &NormSpec, dim: usize, sigma: f64) -> Result<Self> {
        match norm.kind() {
            NormKind::L2 => Self::euclidean_grid(dim, sigma),
            NormKind::Linf => Self::linf_grid(dim, sigma),
            NormKind::L1 => Self::lp_grid(dim, 1.0, sigma),
            NormKind::Lp(p) => Self::lp_grid(dim, *p, sigma),
            NormKind::BlackBox { .. } => Self::black_box_grid(dim, norm, sigma),
        }
    }

    fn ball_lattice(
        dim: usize,
        sigma: f64,
        norm: NormSpec,
        construction: Construction,
        spacing: f64,
        box_factor: f64,
    ) -> Result<Self> {
        let reach = (1.0 + sigma) * box_factor / spacing;
        let k = reach.ceil();
        if k > i32::MAX as f64 / 4.0 {
            return Err(Error::Budget {
                required: u128::MAX,
                limit: MAX_LATTICE_BOX as u128,
            });
        }
        let k = k as i32;
        check_box(dim, -k, k)?;
        let mut t = CoveringTemplate {
            dim,
            sigma,
            norm,
            construction,
            spacing,
            shift: 0.0,
            kmin: -k,
            kmax: k,
            lattice: Vec::new(),
            centers: Vec::new(),
        };
        let bound = (1.0 + sigma) * (1.0 + REL_SLACK);
        let norm = t.norm.clone();
        t.enumerate(|c| norm.norm(c) <= bound);
        Ok(t)
    }

    fn enumerate(&mut self, keep: impl Fn(&[f64]) -> bool) {
        let d = self.dim;
        let mut k = vec![self.kmin; d];
        let mut c = vec![0.0; d];
        loop {
            for a in 0..d {
                c[a] = self.spacing * (k[a] as f64 + self.shift);
            }
            if keep(&c) {
                self.lattice.extend_from_slice(&k);
                self.centers.extend_from_slice(&c);
            }
            // odometer, last axis fastest, which keeps lexicographic order
            let mut a = d;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                if k[a] < self.kmax {
                    k[a] += 1;
                    break;
                }
                k[a] = self.kmin;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn norm(&self) -> &NormSpec {
        &self.norm
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.lattice.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn lattice_coords(&self, i: usize) -> &[i32] {
        &self.lattice[i * self.dim..(i + 1) * self.dim]
    }

    /// Largest norm of a center.
    pub fn max_center_norm(&self) -> f64 {
        self.centers
            .chunks_exact(self.dim)
            .map(|c| self.norm.norm(c))
            .fold(0.0, f64::max)
    }

    /// Index of the center obtained by rounding `u` to the lattice. For `u` in
    /// the unit ball this center lies within sigma of `u`; `None` means the
    /// rounded lattice point is not part of the template.
    pub fn nearest(&self, u: &[f64]) -> Option<usize> {
        debug_assert_eq!(u.len(), self.dim);
        let mut key = [0i32; 8];
        let mut heap;
        let key: &mut [i32] = if self.dim <= 8 {
            &mut key[..self.dim]
        } else {
            heap = vec![0i32; self.dim];
            &mut heap
        };
        for a in 0..self.dim {
            let r = (u[a] / self.spacing - self.shift).round();
            key[a] = r.clamp(self.kmin as f64, self.kmax as f64) as i32;
        }
        self.find(key)
    }

    fn find(&self, key: &[i32]) -> Option<usize> {
        let d = self.dim;
        let (mut lo, mut hi) = (0usize, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.lattice[mid * d..(mid + 1) * d].cmp(key) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }
}

fn check_box(dim: usize, kmin: i32, kmax: i32) -> Result<()> {
    let side = (kmax as i64 - kmin as i64 + 1) as u64;
    let mut total: u64 = 1;
    for _ in 0..dim {
        total = total.saturating_mul(side);
    }
    if total > MAX_LATTICE_BOX {
        return Err(Error::Budget {
            required: total as u128,
            limit: MAX_LATTICE_BOX as u128,
        });
    }
    Ok(())
}

/// `{center + radius * c : c in template}` as a flat coordinate list.
pub fn scale_translate(template: &CoveringTemplate, center: &[f64], radius: f64) -> Result<Vec<f64>> {
    if center.len() != template.dim() {
        return Err(Error::Input(format!(
            "dimension mismatch: center has {}, template has {}",
            center.len(),
            template.dim()
        )));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return parameter(format!("scale radius must be positive, got {radius}"));
    }
    let d = template.dim();
    let mut out = Vec::with_capacity(template.centers().len());
    for c in template.centers().chunks_exact(d) {
        out.extend(c.iter().zip(center).map(|(ci, xi)| xi + radius * ci));
    }
    Ok(out)
}

/// Samples a point uniformly from the unit ball of `norm` by rejection from
/// the enclosing box.
pub fn sample_unit_ball<R: Rng + ?Sized>(norm: &NormSpec, dim: usize, rng: &mut R, out: &mut [f64]) {
    let (c_low, _) = norm.equivalence(dim);
    let half = 1.0 / c_low;
    loop {
        for v in out.iter_mut() {
            *v = rng.gen_range(-half..=half);
        }
        if norm.norm(out) <= 1.0 {
            return;
        }
    }
}
