//! Finite atomizations of reference measures.
//!
//! A σ-finite reference measure is represented by a finite list of weighted
//! atoms. Infinite-mass references (Lebesgue on a box, counting on an
//! infinite set) must be truncated by the caller; the [`MeasureKind`] flag
//! and optional truncation note record that choice.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::math;

/// Tolerance on `|total_mass - 1|` for probability-kind measures.
pub const PROBABILITY_MASS_TOL: f64 = 1e-9;

/// Default cap on the number of atoms produced by grid atomization.
pub const DEFAULT_ATOM_BUDGET: usize = 1_000_000;

/// Largest grid dimension accepted by [`atomize_density`].
pub const MAX_GRID_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasureKind {
    Probability,
    Counting,
    QuadratureTruncation,
}

/// Borrowed view of one atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom<'a> {
    pub id: usize,
    pub location: &'a [f64],
    pub mass: f64,
}

/// Reference measure as a finite list of atoms with nonnegative masses.
///
/// Locations are stored row-major in one buffer of `len() * dim()` reals.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomizedMeasure {
    masses: Vec<f64>,
    locations: Vec<f64>,
    dim: usize,
    total_mass: f64,
    kind: MeasureKind,
    truncation_note: Option<String>,
}

impl AtomizedMeasure {
    fn from_parts(
        masses: Vec<f64>,
        locations: Vec<f64>,
        dim: usize,
        kind: MeasureKind,
    ) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::EmptySupport);
        }
        for (atom, &mass) in masses.iter().enumerate() {
            if !(mass >= 0.0) || !mass.is_finite() {
                return Err(Error::InvalidMass { atom, mass });
            }
        }
        if !masses.iter().any(|&m| m > 0.0) {
            return Err(Error::EmptySupport);
        }
        debug_assert_eq!(locations.len(), masses.len() * dim);
        if let Some(v) = locations.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!(
                "non-finite atom location coordinate {v}"
            )));
        }
        check_unique_locations(&locations, dim, masses.len())?;
        let total_mass = math::sum(masses.iter().copied());
        if kind == MeasureKind::Probability && (total_mass - 1.0).abs() > PROBABILITY_MASS_TOL {
            return Err(Error::NotNormalized(total_mass));
        }
        Ok(Self {
            masses,
            locations,
            dim,
            total_mass,
            kind,
            truncation_note: None,
        })
    }

    /// Atoms located at their own index (`location = [i]`), the usual choice
    /// when risks are tabulated directly per atom.
    pub fn indexed(masses: &[f64], kind: MeasureKind) -> Result<Self> {
        let locations = (0..masses.len()).map(|i| i as f64).collect();
        Self::from_parts(masses.to_vec(), locations, 1, kind)
    }

    /// Uniform probability measure on `n` indexed atoms.
    pub fn uniform(n: usize) -> Result<Self> {
        let masses = alloc::vec![1.0 / n as f64; n];
        let mut m = Self::indexed(&masses, MeasureKind::Counting)?;
        if (m.total_mass - 1.0).abs() <= PROBABILITY_MASS_TOL {
            m.kind = MeasureKind::Probability;
        }
        Ok(m)
    }

    pub fn with_truncation_note(mut self, note: impl Into<String>) -> Self {
        self.truncation_note = Some(note.into());
        self
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn truncation_note(&self) -> Option<&str> {
        self.truncation_note.as_deref()
    }

    /// True when the atoms stand in for a larger parent measure.
    pub fn is_truncated(&self) -> bool {
        self.kind == MeasureKind::QuadratureTruncation || self.truncation_note.is_some()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn location(&self, i: usize) -> &[f64] {
        &self.locations[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atom(&self, i: usize) -> Atom<'_> {
        Atom {
            id: i,
            location: self.location(i),
            mass: self.masses[i],
        }
    }

    pub fn atoms(&self) -> impl ExactSizeIterator<Item = Atom<'_>> + '_ {
        (0..self.len()).map(move |i| self.atom(i))
    }

    /// Number of atoms carrying positive mass.
    pub fn support_size(&self) -> usize {
        self.masses.iter().filter(|&&m| m > 0.0).count()
    }
}

fn check_unique_locations(locations: &[f64], dim: usize, n: usize) -> Result<()> {
    if dim == 0 {
        return if n > 1 {
            Err(Error::DuplicateLocation { first: 0, second: 1 })
        } else {
            Ok(())
        };
    }
    let loc = |i: usize| &locations[i * dim..(i + 1) * dim];
    let cmp = |a: &usize, b: &usize| -> Ordering {
        loc(*a)
            .iter()
            .zip(loc(*b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(cmp);
    for w in order.windows(2) {
        if cmp(&w[0], &w[1]) == Ordering::Equal {
            let (first, second) = if w[0] < w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
            return Err(Error::DuplicateLocation { first, second });
        }
    }
    Ok(())
}

/// Builds a measure from explicit masses and locations, keeping input order.
pub fn make_discrete(
    masses: &[f64],
    locations: &[Vec<f64>],
    kind: MeasureKind,
) -> Result<AtomizedMeasure> {
    if masses.len() != locations.len() {
        return Err(Error::DimensionMismatch {
            expected: masses.len(),
            found: locations.len(),
        });
    }
    if masses.is_empty() {
        return Err(Error::EmptySupport);
    }
    let dim = locations[0].len();
    let mut flat = Vec::with_capacity(dim * locations.len());
    for loc in locations {
        if loc.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: loc.len(),
            });
        }
        flat.extend_from_slice(loc);
    }
    AtomizedMeasure::from_parts(masses.to_vec(), flat, dim, kind)
}

/// Midpoint-rule atomization of a density on a box: one atom per grid cell,
/// located at the cell midpoint, with mass `density(midpoint) * cell_volume`.
///
/// Cells are enumerated row-major (last axis fastest).
pub fn atomize_density<F>(
    lower: &[f64],
    upper: &[f64],
    cells_per_axis: &[usize],
    budget: usize,
    density: F,
) -> Result<AtomizedMeasure>
where
    F: Fn(&[f64]) -> f64,
{
    let d = lower.len();
    if upper.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: upper.len() });
    }
    if cells_per_axis.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: cells_per_axis.len(),
        });
    }
    if d == 0 || d > MAX_GRID_DIM {
        return Err(Error::InvalidArgument(alloc::format!(
            "grid dimension {d} outside 1..={MAX_GRID_DIM}"
        )));
    }
    for k in 0..d {
        if !(lower[k] < upper[k]) || !lower[k].is_finite() || !upper[k].is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "box axis {k}: need finite lower < upper, got [{}, {}]",
                lower[k], upper[k]
            )));
        }
        if cells_per_axis[k] == 0 {
            return Err(Error::InvalidArgument(alloc::format!("axis {k} has zero cells")));
        }
    }
    let requested = cells_per_axis
        .iter()
        .fold(1u128, |acc, &c| acc.saturating_mul(c as u128));
    if requested > budget as u128 {
        return Err(Error::BudgetExceeded {
            requested,
            budget: budget as u128,
        });
    }
    let n = requested as usize;
    let widths: Vec<f64> = (0..d)
        .map(|k| (upper[k] - lower[k]) / cells_per_axis[k] as f64)
        .collect();
    let volume: f64 = widths.iter().product();

    let mut masses = Vec::with_capacity(n);
    let mut locations = Vec::with_capacity(n * d);
    let mut index = alloc::vec![0usize; d];
    let mut mid = alloc::vec![0.0; d];
    for cell in 0..n {
        for k in 0..d {
            mid[k] = lower[k] + (index[k] as f64 + 0.5) * widths[k];
        }
        let value = density(&mid);
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeDensity { cell, value });
        }
        masses.push(value * volume);
        locations.extend_from_slice(&mid);
        for k in (0..d).rev() {
            index[k] += 1;
            if index[k] < cells_per_axis[k] {
                break;
            }
            index[k] = 0;
        }
    }
    AtomizedMeasure::from_parts(masses, locations, d, MeasureKind::QuadratureTruncation)
}

/// Nonnegative weights on the atoms of a base measure.
///
/// Membership in the set of measures absolutely continuous with respect to
/// the base (`weight_i > 0 ⇒ mass_i > 0`) is not enforced at construction so
/// that objectives can report `+∞` for measures outside it; see
/// [`MeasureOnAtoms::is_absolutely_continuous`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureOnAtoms {
    base: Arc<AtomizedMeasure>,
    weights: Vec<f64>,
    normalized: bool,
}

impl MeasureOnAtoms {
    pub fn new(base: Arc<AtomizedMeasure>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != base.len() {
            return Err(Error::BaseMismatch);
        }
        for (atom, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidMass { atom, mass: w });
            }
        }
        let total = math::sum(weights.iter().copied());
        Ok(Self {
            base,
            weights,
            normalized: (total - 1.0).abs() <= PROBABILITY_MASS_TOL,
        })
    }

    /// Rescales `weights` to sum to one.
    pub fn normalized(base: Arc<AtomizedMeasure>, weights: Vec<f64>) -> Result<Self> {
        let mut m = Self::new(base, weights)?;
        let total = math::sum(m.weights.iter().copied());
        if !(total > 0.0) {
            return Err(Error::EmptySupport);
        }
        for w in &mut m.weights {
            *w /= total;
        }
        m.normalized = true;
        Ok(m)
    }

    /// The base measure itself, as weights.
    pub fn reference(base: Arc<AtomizedMeasure>) -> Self {
        let weights = base.masses().to_vec();
        Self::new(base, weights).expect("base masses are valid weights")
    }

    /// The base measure rescaled to a probability measure.
    pub fn normalized_reference(base: Arc<AtomizedMeasure>) -> Self {
        let weights = base.masses().to_vec();
        Self::normalized(base, weights).expect("base has positive mass")
    }

    pub fn point_mass(base: Arc<AtomizedMeasure>, atom: usize) -> Result<Self> {
        if atom >= base.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "atom {atom} out of range for {} atoms",
                base.len()
            )));
        }
        let mut weights = alloc::vec![0.0; base.len()];
        weights[atom] = 1.0;
        Self::new(base, weights)
    }

    pub fn base(&self) -> &Arc<AtomizedMeasure> {
        &self.base
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_absolutely_continuous(&self) -> bool {
        self.weights
            .iter()
            .zip(self.base.masses())
            .all(|(&w, &m)| w == 0.0 || m > 0.0)
    }

    pub fn total(&self) -> f64 {
        math::sum(self.weights.iter().copied())
    }
}

/// Whether two handles denote the same atom set.
pub(crate) fn same_base(a: &Arc<AtomizedMeasure>, b: &Arc<AtomizedMeasure>) -> bool {
    Arc::ptr_eq(a, b) || (a.dim == b.dim && a.masses == b.masses && a.locations == b.locations)
}

/// `Σ_{p_i > 0} p_i log(p_i / r_i)`, with `0 log 0 = 0` and `+∞` when some
/// `p_i > 0` meets `r_i = 0`.
///
/// `r` need not be normalized (generalized relative entropy); the result is
/// nonnegative whenever `r` is a probability measure.
pub fn relative_entropy(p: &MeasureOnAtoms, r: &MeasureOnAtoms) -> Result<f64> {
    if !same_base(&p.base, &r.base) {
        return Err(Error::BaseMismatch);
    }
    if !p.normalized {
        return Err(Error::InvalidArgument(alloc::format!(
            "first argument must be a probability measure (total {})",
            p.total()
        )));
    }
    Ok(kl_terms(&p.weights, &r.weights))
}

pub(crate) fn kl_terms(p: &[f64], r: &[f64]) -> f64 {
    let mut acc = math::CompensatedSum::new();
    for (&pi, &ri) in p.iter().zip(r) {
        if pi > 0.0 {
            if ri == 0.0 {
                return f64::INFINITY;
            }
            acc.add(pi * math::ln(pi / ri));
        }
    }
    acc.value()
}
