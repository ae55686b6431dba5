//! Axis-aligned boxes, uniform grid partitions, and exact overlap-probability
//! computations.
//!
//! Everything here is measure-theoretically boring on purpose: boxes are
//! products of closed intervals, partitions are uniform grids with half-open
//! cells `[a, b)` (closed on the domain's upper faces so every domain point
//! has exactly one cell), and transition kernels are uniform distributions on
//! a box intersected with the domain and renormalized. That makes the mass a
//! kernel places on a cell a ratio of interval-length products, which we can
//! bound *exactly* over a whole source region by enumerating the critical
//! points of the per-dimension overlap ratio — no sampling, no slack.
//!
//! All computations are binary64; comparisons use the absolute tolerance
//! [`GEOM_TOL`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for geometric comparisons.
pub const GEOM_TOL: f64 = 1e-12;

/// Snap tolerance when deciding how many cells of width `w` tile an extent:
/// ratios within 1e-9 of an integer are treated as exact so that, e.g., a
/// width of 0.1 tiles an extent of 1.2 with 12 cells despite rounding.
const COUNT_SNAP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("box has lo > hi in dimension {dim}: {lo} > {hi}")]
    InvertedBox { dim: usize, lo: f64, hi: f64 },
    #[error("point {point:?} lies outside the domain in dimension {dim}")]
    DomainViolation { point: Vec<f64>, dim: usize },
    #[error("cell width must be positive, got {0}")]
    InvalidWidth(f64),
    #[error("domain extent must be positive in every dimension (dimension {0})")]
    EmptyDomain(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("region index {index:?} out of range for counts {counts:?}")]
    InvalidRegion { index: Vec<usize>, counts: Vec<usize> },
    #[error("kernel box has zero volume after intersection with the domain")]
    DegenerateKernel,
    #[error("cell {region} straddles the boundary of the {which} box")]
    InconsistentCell { region: RegionId, which: &'static str },
}

pub type Result<T> = core::result::Result<T, GeometryError>;

/// Point in `R^K`, stored as a coordinate vector.
pub type Point = Vec<f64>;

/// Axis-aligned box `Π_d [lo_d, hi_d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Point,
    pub hi: Point,
}

impl AxisBox {
    /// Creates a box, validating `lo.len() == hi.len()` and `lo[d] <= hi[d]`.
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(GeometryError::LengthMismatch(lo.len(), hi.len()));
        }
        for d in 0..lo.len() {
            if !(lo[d] <= hi[d]) {
                return Err(GeometryError::InvertedBox {
                    dim: d,
                    lo: lo[d],
                    hi: hi[d],
                });
            }
        }
        Ok(AxisBox { lo, hi })
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Side length along dimension `d`.
    #[must_use]
    pub fn extent(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }

    #[must_use]
    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|d| self.extent(d)).product()
    }

    #[must_use]
    pub fn midpoint(&self) -> Point {
        (0..self.dim())
            .map(|d| 0.5 * (self.lo[d] + self.hi[d]))
            .collect()
    }

    /// Closed-box membership: `lo[d] <= p[d] <= hi[d]` for every dimension.
    #[must_use]
    pub fn contains_closed(&self, p: &[f64]) -> bool {
        self.dim() == p.len()
            && (0..self.dim()).all(|d| self.lo[d] <= p[d] && p[d] <= self.hi[d])
    }

    /// Half-open membership `[lo, hi)`, except that a face lying on the
    /// domain's upper face is closed (so the domain boundary belongs to the
    /// outermost boxes and every domain point has a well-defined owner).
    #[must_use]
    pub fn contains_halfopen(&self, p: &[f64], domain: &AxisBox) -> bool {
        if self.dim() != p.len() {
            return false;
        }
        (0..self.dim()).all(|d| {
            let upper_ok = if self.hi[d] >= domain.hi[d] - GEOM_TOL {
                p[d] <= self.hi[d]
            } else {
                p[d] < self.hi[d]
            };
            self.lo[d] <= p[d] && upper_ok
        })
    }

    /// `true` when `other` lies inside `self` within [`GEOM_TOL`] per face.
    #[must_use]
    pub fn contains_box(&self, other: &AxisBox) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|d| {
                self.lo[d] <= other.lo[d] + GEOM_TOL && other.hi[d] <= self.hi[d] + GEOM_TOL
            })
    }
}

/// Per-dimension overlap length of `[alo, ahi]` and `[blo, bhi]`.
#[inline]
fn overlap_len(alo: f64, ahi: f64, blo: f64, bhi: f64) -> f64 {
    (ahi.min(bhi) - alo.max(blo)).max(0.0)
}

/// Cell identifier: one integer index per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionId(pub Vec<usize>);

impl std::fmt::Display for RegionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, ")")
    }
}

/// Uniform grid over a domain box.
///
/// Cells are half-open `[a, b)` products, closed on the domain's upper faces;
/// the last cell along a dimension may be narrower when the width does not
/// divide the extent. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPartition {
    domain: AxisBox,
    widths: Vec<f64>,
    counts: Vec<usize>,
}

impl GridPartition {
    /// Builds the grid with `counts[d] = ceil(extent_d / widths[d])` cells per
    /// dimension (ratios within 1e-9 of an integer snap to it).
    pub fn new(domain: AxisBox, widths: Vec<f64>) -> Result<Self> {
        if widths.len() != domain.dim() {
            return Err(GeometryError::LengthMismatch(widths.len(), domain.dim()));
        }
        let mut counts = Vec::with_capacity(widths.len());
        for (d, &w) in widths.iter().enumerate() {
            if !(w > 0.0) || !w.is_finite() {
                return Err(GeometryError::InvalidWidth(w));
            }
            let extent = domain.extent(d);
            if extent <= 0.0 {
                return Err(GeometryError::EmptyDomain(d));
            }
            let raw = extent / w;
            counts.push(((raw - COUNT_SNAP).ceil().max(1.0)) as usize);
        }
        Ok(GridPartition {
            domain,
            widths,
            counts,
        })
    }

    /// Convenience constructor: the same cell width in every dimension.
    pub fn uniform(domain: AxisBox, width: f64) -> Result<Self> {
        let k = domain.dim();
        Self::new(domain, vec![width; k])
    }

    #[must_use]
    pub fn domain(&self) -> &AxisBox {
        &self.domain
    }

    #[must_use]
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    #[must_use]
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.widths.len()
    }

    /// Total number of cells.
    #[must_use]
    pub fn num_regions(&self) -> usize {
        self.counts.iter().product()
    }

    /// Lower cell boundary `domain.lo[d] + i * width[d]`.
    #[inline]
    fn boundary(&self, d: usize, i: usize) -> f64 {
        self.domain.lo[d] + (i as f64) * self.widths[d]
    }

    /// Cell index along one dimension under the half-open convention.
    fn index_along(&self, d: usize, x: f64) -> Option<usize> {
        if x < self.domain.lo[d] || x > self.domain.hi[d] {
            return None;
        }
        let count = self.counts[d];
        let raw = ((x - self.domain.lo[d]) / self.widths[d]).floor();
        let mut i = (raw.max(0.0) as usize).min(count - 1);
        // Repair floating-point drift so the half-open contract holds exactly
        // against the boundaries used by `region_box`.
        while i > 0 && x < self.boundary(d, i) {
            i -= 1;
        }
        while i + 1 < count && x >= self.boundary(d, i + 1) {
            i += 1;
        }
        Some(i)
    }

    /// Maps a domain point to the cell containing it.
    pub fn region_of(&self, p: &[f64]) -> Result<RegionId> {
        if p.len() != self.dim() {
            return Err(GeometryError::LengthMismatch(p.len(), self.dim()));
        }
        let mut index = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            match self.index_along(d, p[d]) {
                Some(i) => index.push(i),
                None => {
                    return Err(GeometryError::DomainViolation {
                        point: p.to_vec(),
                        dim: d,
                    })
                }
            }
        }
        Ok(RegionId(index))
    }

    /// The box spanned by a cell (last cell along a dimension is capped at
    /// the domain's upper face).
    pub fn region_box(&self, id: &RegionId) -> Result<AxisBox> {
        self.check_region(id)?;
        let mut lo = Vec::with_capacity(self.dim());
        let mut hi = Vec::with_capacity(self.dim());
        for d in 0..self.dim() {
            let i = id.0[d];
            lo.push(self.boundary(d, i));
            hi.push(if i + 1 == self.counts[d] {
                self.domain.hi[d]
            } else {
                self.boundary(d, i + 1)
            });
        }
        AxisBox::new(lo, hi)
    }

    fn check_region(&self, id: &RegionId) -> Result<()> {
        if id.0.len() != self.dim() {
            return Err(GeometryError::LengthMismatch(id.0.len(), self.dim()));
        }
        if id.0.iter().zip(&self.counts).any(|(&i, &c)| i >= c) {
            return Err(GeometryError::InvalidRegion {
                index: id.0.clone(),
                counts: self.counts.clone(),
            });
        }
        Ok(())
    }

    /// Maximum cell diagonal (Euclidean diameter of the partition).
    #[must_use]
    pub fn granularity(&self) -> f64 {
        let mut sq = 0.0;
        for d in 0..self.dim() {
            // With at least two cells a full-width cell exists; with one cell
            // the single cell spans the whole extent.
            let m = if self.counts[d] >= 2 {
                self.widths[d]
            } else {
                self.domain.extent(d)
            };
            sq += m * m;
        }
        sq.sqrt()
    }

    /// Splits every cell into `factor^K` equal sub-cells.
    pub fn refine(&self, factor: usize) -> Result<GridPartition> {
        if factor == 0 {
            return Err(GeometryError::InvalidArgument(
                "refinement factor must be >= 1".into(),
            ));
        }
        let widths = self
            .widths
            .iter()
            .map(|w| w / (factor as f64))
            .collect::<Vec<_>>();
        GridPartition::new(self.domain.clone(), widths)
    }

    /// Row-major linear index (last dimension fastest).
    #[must_use]
    pub fn linear_index(&self, id: &RegionId) -> usize {
        let mut lin = 0;
        for d in 0..self.dim() {
            lin = lin * self.counts[d] + id.0[d];
        }
        lin
    }

    /// Inverse of [`linear_index`](Self::linear_index).
    #[must_use]
    pub fn region_from_linear(&self, mut lin: usize) -> RegionId {
        let mut index = vec![0usize; self.dim()];
        for d in (0..self.dim()).rev() {
            index[d] = lin % self.counts[d];
            lin /= self.counts[d];
        }
        RegionId(index)
    }

    /// Iterates all cells in row-major order.
    pub fn regions(&self) -> impl Iterator<Item = RegionId> + '_ {
        (0..self.num_regions()).map(|i| self.region_from_linear(i))
    }

    /// 1-D cell index along dimension `d` for coordinate `x` (used when
    /// slicing value tables along a grid row).
    pub fn index_on_axis(&self, d: usize, x: f64) -> Result<usize> {
        if d >= self.dim() {
            return Err(GeometryError::InvalidArgument(format!(
                "axis {d} out of range for dimension {}",
                self.dim()
            )));
        }
        self.index_along(d, x)
            .ok_or_else(|| GeometryError::DomainViolation {
                point: vec![x],
                dim: d,
            })
    }
}

/// Classification of a cell against the terminal boxes of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Regular,
    Goal,
    Failure,
}

/// Classifies every cell as goal, failure, or regular.
///
/// Requires the partition to be *consistent* with both terminal boxes: every
/// cell lies entirely inside or entirely outside each box (up to
/// [`GEOM_TOL`]). A straddling cell is an error naming the cell, because a
/// mixed cell would make the finite abstraction ill-defined.
pub fn classify_regions(
    partition: &GridPartition,
    goal: &AxisBox,
    failure: &AxisBox,
) -> Result<Vec<CellKind>> {
    let mut kinds = Vec::with_capacity(partition.num_regions());
    for id in partition.regions() {
        let cell = partition.region_box(&id)?;
        let in_goal = box_side(&cell, goal, &id, "goal")?;
        let in_failure = box_side(&cell, failure, &id, "failure")?;
        kinds.push(if in_goal {
            CellKind::Goal
        } else if in_failure {
            CellKind::Failure
        } else {
            CellKind::Regular
        });
    }
    Ok(kinds)
}

/// `Ok(true)` if `cell` is inside `other`, `Ok(false)` if (volume-)disjoint,
/// error if it straddles a face.
fn box_side(
    cell: &AxisBox,
    other: &AxisBox,
    id: &RegionId,
    which: &'static str,
) -> Result<bool> {
    if other.contains_box(cell) {
        return Ok(true);
    }
    let disjoint = (0..cell.dim()).any(|d| {
        cell.hi[d] <= other.lo[d] + GEOM_TOL || cell.lo[d] >= other.hi[d] - GEOM_TOL
    });
    if disjoint {
        Ok(false)
    } else {
        Err(GeometryError::InconsistentCell {
            region: id.clone(),
            which,
        })
    }
}

/// Probability that a uniform distribution on `kernel ∩ domain` lands in
/// `region`: `vol(kernel ∩ region ∩ domain) / vol(kernel ∩ domain)`.
pub fn overlap_fraction(kernel: &AxisBox, region: &AxisBox, domain: &AxisBox) -> Result<f64> {
    let k = kernel.dim();
    if region.dim() != k {
        return Err(GeometryError::LengthMismatch(region.dim(), k));
    }
    if domain.dim() != k {
        return Err(GeometryError::LengthMismatch(domain.dim(), k));
    }
    let mut num = 1.0;
    let mut den = 1.0;
    for d in 0..k {
        den *= overlap_len(kernel.lo[d], kernel.hi[d], domain.lo[d], domain.hi[d]);
        let lo = kernel.lo[d].max(domain.lo[d]).max(region.lo[d]);
        let hi = kernel.hi[d].min(domain.hi[d]).min(region.hi[d]);
        num *= (hi - lo).max(0.0);
    }
    if den <= 0.0 {
        return Err(GeometryError::DegenerateKernel);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Tight bounds on the mass a truncated uniform kernel places on `target`,
/// over *all* source points `s ∈ source`.
///
/// The kernel for source point `s` is uniform on the box centered at
/// `s + drift` with half-width `half_width`, intersected with `domain` and
/// renormalized. Because kernel, target, and domain are all axis-aligned
/// products, the mass factors into per-dimension ratios
/// `N_d(c) / D_d(c)` of overlap lengths, each a piecewise-rational function
/// of the center coordinate `c`. On every piece both `N_d` and `D_d` are
/// affine, so the ratio is monotone there and its extrema over the center
/// range sit at interval endpoints or breakpoints. Enumerating those critical
/// points per dimension and multiplying per-dimension minima (resp. maxima)
/// therefore gives the exact bounds — no sampling slack.
pub fn overlap_bounds(
    source: &AxisBox,
    drift: &[f64],
    half_width: f64,
    target: &AxisBox,
    domain: &AxisBox,
) -> Result<(f64, f64)> {
    let k = source.dim();
    if drift.len() != k {
        return Err(GeometryError::LengthMismatch(drift.len(), k));
    }
    if target.dim() != k {
        return Err(GeometryError::LengthMismatch(target.dim(), k));
    }
    if domain.dim() != k {
        return Err(GeometryError::LengthMismatch(domain.dim(), k));
    }
    if !(half_width > 0.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "half_width must be positive, got {half_width}"
        )));
    }
    let eps = half_width;
    let mut p_low = 1.0;
    let mut p_high = 1.0;
    for d in 0..k {
        let c0 = source.lo[d] + drift[d];
        let c1 = source.hi[d] + drift[d];
        // Target clipped to the domain; an empty clip means N ≡ 0.
        let a = target.lo[d].max(domain.lo[d]);
        let b = target.hi[d].min(domain.hi[d]);
        let (dlo, dhi) = (domain.lo[d], domain.hi[d]);

        let mut candidates = vec![c0, c1];
        for bp in [
            a - eps,
            a + eps,
            b - eps,
            b + eps,
            dlo - eps,
            dlo + eps,
            dhi - eps,
            dhi + eps,
        ] {
            if bp > c0 && bp < c1 {
                candidates.push(bp);
            }
        }

        let mut f_min = f64::INFINITY;
        let mut f_max = f64::NEG_INFINITY;
        for &c in &candidates {
            let den = overlap_len(c - eps, c + eps, dlo, dhi);
            if den <= 0.0 {
                return Err(GeometryError::DegenerateKernel);
            }
            let num = if a <= b {
                overlap_len(c - eps, c + eps, a, b)
            } else {
                0.0
            };
            let f = (num / den).clamp(0.0, 1.0);
            f_min = f_min.min(f);
            f_max = f_max.max(f);
        }
        p_low *= f_min;
        p_high *= f_max;
    }
    Ok((p_low.clamp(0.0, 1.0), p_high.clamp(0.0, 1.0)))
}
