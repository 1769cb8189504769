//! Dyadic frequency decomposition and the Besov-type norm calculators
//! built on it.
//!
//! The cutoff profile is a radial smooth bump supported in the annulus
//! `3/4 <= |xi| <= 8/3` whose dyadic dilates telescope to one. On the
//! discrete lattice the dilates are renormalized pointwise by their sum so
//! the partition identity holds exactly on the covered band; support zeros
//! are hard zeros, so blocks two or more indices apart stay exactly
//! disjoint. Blocks wholly above the dealias cutoff or below the smallest
//! nonzero frequency are dropped, making every norm here a band-limited
//! variant.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::field::{pointwise_magnitude, SpectralField};
use crate::grid::Grid;

/// Smooth step: 0 for tau <= 0, 1 for tau >= 1, C-infinity in between.
fn smooth_step(tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    if tau >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / tau).exp();
    let b = (-1.0 / (1.0 - tau)).exp();
    a / (a + b)
}

/// Radial low-pass profile: 1 on |xi| <= 3/4, 0 on |xi| >= 4/3.
fn chi(r: f64) -> f64 {
    1.0 - smooth_step((r - 0.75) / (4.0 / 3.0 - 0.75))
}

/// Annular cutoff `phi(r) = chi(r/2) - chi(r)`, supported in [3/4, 8/3];
/// its dilates `phi(2^-j r)` telescope to one for r > 0.
pub(crate) fn annulus_cutoff(r: f64) -> f64 {
    if r <= 0.75 || r >= 8.0 / 3.0 {
        return 0.0;
    }
    (chi(r / 2.0) - chi(r)).max(0.0)
}

/// Enlarged cutoff: 1 on the annulus [3/4, 8/3] (so it fixes
/// `annulus_cutoff` under multiplication), supported in [3/8, 10/3].
pub(crate) fn enlarged_cutoff(r: f64) -> f64 {
    if r <= 0.375 || r >= 10.0 / 3.0 {
        return 0.0;
    }
    if r <= 0.75 {
        smooth_step((r - 0.375) / (0.75 - 0.375))
    } else if r < 8.0 / 3.0 {
        1.0
    } else {
        1.0 - smooth_step((r - 8.0 / 3.0) / (10.0 / 3.0 - 8.0 / 3.0))
    }
}

/// The dyadic cutoff family realized on one grid's frequency lattice.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    grid: Grid,
    j_min: i32,
    j_max: i32,
    /// cutoff_samples[j - j_min][flat]
    cutoff_samples: Vec<Vec<f64>>,
}

impl DyadicPartition {
    pub const MIN_SHELLS: usize = 4;

    /// Build the renormalized partition for a grid.
    ///
    /// `j_min` is the smallest shell index containing a lattice frequency;
    /// `j_max` is the largest shell whose lower support edge stays at or
    /// below the axis dealias cutoff (higher shells would be wholly above
    /// it and are dropped).
    pub fn build(grid: &Grid) -> Result<Self> {
        Self::build_with_renormalization(grid, true)
    }

    /// Negative-control constructor: `renormalize = false` leaves the raw
    /// telescoped samples, which do not sum to one near the band edges.
    pub fn build_with_renormalization(grid: &Grid, renormalize: bool) -> Result<Self> {
        let xi_min = grid.fundamental_wavenumber();
        let xi_cut = grid.dealias_cutoff();

        // Smallest j with annulus_cutoff(2^-j xi_min) > 0: scan upward from
        // below the shell range (where the scaled frequency exceeds 8/3).
        let mut j_min = (xi_min.log2() - (8.0f64 / 3.0).log2()).floor() as i32 - 1;
        while annulus_cutoff(xi_min / 2f64.powi(j_min)) == 0.0 {
            j_min += 1;
            if j_min > 64 {
                return Err(CoreError::InvalidGrid(
                    "could not locate the lowest dyadic shell".into(),
                ));
            }
        }

        // Largest j with shell lower edge 3/4 * 2^j <= xi_cut.
        let j_max = (xi_cut / 0.75).log2().floor() as i32;

        let shells = (j_max - j_min + 1).max(0) as usize;
        if shells < Self::MIN_SHELLS {
            return Err(CoreError::TooFewShells {
                shells,
                min: Self::MIN_SHELLS,
            });
        }

        let pts = grid.total_points();
        let mut cutoff_samples = vec![vec![0.0f64; pts]; shells];
        for flat in 1..pts {
            let r = grid.xi_norm2(flat).sqrt();
            if r == 0.0 {
                continue;
            }
            for (s, row) in cutoff_samples.iter_mut().enumerate() {
                let j = j_min + s as i32;
                row[flat] = annulus_cutoff(r / 2f64.powi(j));
            }
        }

        if renormalize {
            let lo = 0.75 * 2f64.powi(j_min);
            let hi = 8.0 / 3.0 * 2f64.powi(j_max);
            for flat in 1..pts {
                let sum: f64 = cutoff_samples.iter().map(|row| row[flat]).sum();
                if sum > 0.0 {
                    for row in cutoff_samples.iter_mut() {
                        row[flat] /= sum;
                    }
                    continue;
                }
                // The bump tail underflows to an exact zero just inside the
                // support edge; assign such in-band points wholly to the one
                // shell whose support contains them.
                let r = grid.xi_norm2(flat).sqrt();
                if r >= lo && r <= hi {
                    let mut best: Option<(usize, f64)> = None;
                    for s in 0..shells {
                        let j = j_min + s as i32;
                        let scaled = r / 2f64.powi(j);
                        if scaled > 0.75 && scaled < 8.0 / 3.0 {
                            let dist = (scaled.log2() - 0.5).abs();
                            if best.map(|(_, d)| dist < d).unwrap_or(true) {
                                best = Some((s, dist));
                            }
                        }
                    }
                    if let Some((s, _)) = best {
                        cutoff_samples[s][flat] = 1.0;
                    }
                }
            }
        }

        Ok(Self {
            grid: *grid,
            j_min,
            j_max,
            cutoff_samples,
        })
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn j_min(&self) -> i32 {
        self.j_min
    }

    #[inline]
    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn shells(&self) -> impl Iterator<Item = i32> {
        self.j_min..=self.j_max
    }

    pub fn n_shells(&self) -> usize {
        (self.j_max - self.j_min + 1) as usize
    }

    /// Cutoff sample `phi(2^-j xi)` at a flat lattice index.
    #[inline]
    pub fn cutoff(&self, j: i32, flat: usize) -> f64 {
        self.cutoff_samples[(j - self.j_min) as usize][flat]
    }

    fn check_shell(&self, j: i32) -> Result<()> {
        if j < self.j_min || j > self.j_max {
            return Err(CoreError::ShellOutOfRange {
                j,
                j_min: self.j_min,
                j_max: self.j_max,
            });
        }
        Ok(())
    }

    /// Largest deviation of the lattice cutoff sum from one over the
    /// covered band `3/4 * 2^j_min <= |xi| <= 8/3 * 2^j_max`.
    pub fn partition_residual(&self) -> f64 {
        let lo = 0.75 * 2f64.powi(self.j_min);
        let hi = 8.0 / 3.0 * 2f64.powi(self.j_max);
        let mut worst = 0.0f64;
        for flat in 1..self.grid.total_points() {
            let r = self.grid.xi_norm2(flat).sqrt();
            if r < lo || r > hi {
                continue;
            }
            let sum: f64 = self.cutoff_samples.iter().map(|row| row[flat]).sum();
            worst = worst.max((sum - 1.0).abs());
        }
        worst
    }

    /// Frequency-block projection: multiply coefficients by `phi(2^-j xi)`.
    pub fn block(&self, f: &SpectralField, j: i32) -> Result<SpectralField> {
        self.check_shell(j)?;
        let row = &self.cutoff_samples[(j - self.j_min) as usize];
        Ok(f.apply_symbol(|flat| row[flat]))
    }

    /// Low-pass: the mean mode plus every block strictly below `j`.
    ///
    /// Smooth overlapping cutoffs make this a mollified (not sharp)
    /// projection; passes compose so that a wider one absorbs a narrower
    /// one: `low_pass(low_pass(f, j), j') = low_pass(f, j)` for `j' > j`.
    pub fn low_pass(&self, f: &SpectralField, j: i32) -> SpectralField {
        let pts = self.grid.total_points();
        let mut weights = vec![0.0f64; pts];
        weights[0] = 1.0;
        for (s, row) in self.cutoff_samples.iter().enumerate() {
            if self.j_min + (s as i32) <= j - 1 {
                for (w, v) in weights.iter_mut().zip(row) {
                    *w += v;
                }
            }
        }
        f.apply_symbol(|flat| weights[flat])
    }
}

/// Extended integrability / summation index: the supported values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LebesgueIndex {
    One,
    Two,
    Inf,
}

impl LebesgueIndex {
    fn reciprocal(self) -> f64 {
        match self {
            LebesgueIndex::One => 1.0,
            LebesgueIndex::Two => 0.5,
            LebesgueIndex::Inf => 0.0,
        }
    }

    fn from_reciprocal(inv: f64) -> Option<Self> {
        if (inv - 1.0).abs() < 1e-12 {
            Some(LebesgueIndex::One)
        } else if (inv - 0.5).abs() < 1e-12 {
            Some(LebesgueIndex::Two)
        } else if inv.abs() < 1e-12 {
            Some(LebesgueIndex::Inf)
        } else {
            None
        }
    }
}

/// Index triple (s, p, r) of a homogeneous Besov norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovIndex {
    pub s: f64,
    pub p: LebesgueIndex,
    pub r: LebesgueIndex,
}

impl BesovIndex {
    pub const fn new(s: f64, p: LebesgueIndex, r: LebesgueIndex) -> Self {
        Self { s, p, r }
    }

    /// The regularity -1 sup-type index used for velocity bounds.
    pub const MINUS_ONE_INF_INF: Self =
        Self::new(-1.0, LebesgueIndex::Inf, LebesgueIndex::Inf);

    /// The regularity 0 sup-type index used for director bounds.
    pub const ZERO_INF_INF: Self = Self::new(0.0, LebesgueIndex::Inf, LebesgueIndex::Inf);

    /// The regularity +1 index paired with time-L^1 in the decay estimates.
    pub const ONE_INF_INF: Self = Self::new(1.0, LebesgueIndex::Inf, LebesgueIndex::Inf);
}

/// L^p of a physical-space sample vector under uniform-grid quadrature.
fn lp_norm(samples: &[f64], p: LebesgueIndex, cell_volume: f64) -> f64 {
    match p {
        LebesgueIndex::Inf => samples.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        LebesgueIndex::One => samples.iter().map(|v| v.abs()).sum::<f64>() * cell_volume,
        LebesgueIndex::Two => {
            (samples.iter().map(|v| v * v).sum::<f64>() * cell_volume).sqrt()
        }
    }
}

/// L^p norm of one dyadic block, taken of the pointwise Euclidean magnitude
/// across components.
pub fn block_lp(
    f: &SpectralField,
    partition: &DyadicPartition,
    j: i32,
    p: LebesgueIndex,
) -> Result<f64> {
    let block = partition.block(f, j)?;
    let phys = block.to_physical()?;
    let mag = pointwise_magnitude(&phys, f.n_components());
    Ok(lp_norm(&mag, p, f.grid().cell_volume()))
}

fn combine_over_shells(terms: &[f64], r: LebesgueIndex) -> f64 {
    match r {
        LebesgueIndex::Inf => terms.iter().fold(0.0f64, |m, v| m.max(*v)),
        LebesgueIndex::One => terms.iter().sum(),
        LebesgueIndex::Two => terms.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

/// Homogeneous Besov norm `( sum_j 2^{jsr} ||Delta_j f||_{L^p}^r )^{1/r}`
/// over the resolvable shells (sup over j when r is infinite).
pub fn besov_norm(
    f: &SpectralField,
    partition: &DyadicPartition,
    idx: BesovIndex,
) -> Result<f64> {
    let mut terms = Vec::with_capacity(partition.n_shells());
    for j in partition.shells() {
        let a = block_lp(f, partition, j, idx.p)?;
        terms.push(2f64.powf(idx.s * j as f64) * a);
    }
    Ok(combine_over_shells(&terms, idx.r))
}

/// Time-exponent for the blockwise time norms: only 1 and infinity arise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeExponent {
    One,
    Inf,
}

/// Blockwise-in-time norm: per shell take the time-L^rho norm of
/// `t -> ||Delta_j f(t)||_{L^p}` over `[0, T]` (sup over samples for
/// rho = infinity, trapezoidal quadrature for rho = 1), then combine the
/// shell terms with weight `2^{js}` per `r`.
pub fn chemin_lerner_norm(
    series: &[(f64, SpectralField)],
    partition: &DyadicPartition,
    idx: BesovIndex,
    rho: TimeExponent,
    horizon: f64,
) -> Result<f64> {
    if series.is_empty() {
        return Err(CoreError::EmptyInput("time series"));
    }
    if rho == TimeExponent::One && series.len() < 2 {
        return Err(CoreError::EmptyInput(
            "time-L^1 norm needs at least 2 samples",
        ));
    }
    for w in series.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(CoreError::InvalidConfig(
                "series times must be strictly increasing".into(),
            ));
        }
    }
    if series.iter().any(|(t, _)| *t < 0.0 || *t > horizon + 1e-12) {
        return Err(CoreError::InvalidConfig(
            "series times must lie within [0, T]".into(),
        ));
    }

    let mut terms = Vec::with_capacity(partition.n_shells());
    for j in partition.shells() {
        let values: Vec<f64> = series
            .iter()
            .map(|(_, f)| block_lp(f, partition, j, idx.p))
            .collect::<Result<_>>()?;
        let time_norm = match rho {
            TimeExponent::Inf => values.iter().fold(0.0f64, |m, v| m.max(*v)),
            TimeExponent::One => {
                let mut acc = 0.0;
                for (w, pair) in series.windows(2).zip(values.windows(2)) {
                    let dt = w[1].0 - w[0].0;
                    acc += 0.5 * dt * (pair[0] + pair[1]);
                }
                acc
            }
        };
        terms.push(2f64.powf(idx.s * j as f64) * time_norm);
    }
    Ok(combine_over_shells(&terms, idx.r))
}

/// Outcome of the bilinear-product diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct ProductRatio {
    pub target: BesovIndex,
    pub product_norm: f64,
    pub factor_norms: (f64, f64),
    pub ratio: f64,
}

/// Diagnostic ratio `||fg|| / (||f|| ||g||)` in the product-mapping target
/// index `s_f + s_g - n (1/p_f + 1/p_g - 1/p)` with `p = max(p_f, p_g)` and
/// `1/r = min(1, 1/r_f + 1/r_g)`. No constant is asserted.
pub fn product_estimate_ratio(
    f: &SpectralField,
    g: &SpectralField,
    partition: &DyadicPartition,
    idx_f: BesovIndex,
    idx_g: BesovIndex,
) -> Result<ProductRatio> {
    if f.n_components() != 1 || g.n_components() != 1 {
        return Err(CoreError::InvalidField(
            "product diagnostic expects scalar fields".into(),
        ));
    }
    if idx_f.s + idx_g.s <= 0.0 {
        return Err(CoreError::InvalidConfig(
            "product estimate requires s_f + s_g > 0".into(),
        ));
    }
    let n = f.grid().n_dims() as f64;
    let p_inv = idx_f.p.reciprocal().min(idx_g.p.reciprocal());
    let p = LebesgueIndex::from_reciprocal(p_inv).expect("closed under min");
    let r_inv = (idx_f.r.reciprocal() + idx_g.r.reciprocal()).min(1.0);
    let r = LebesgueIndex::from_reciprocal(r_inv).unwrap_or(LebesgueIndex::One);
    let target = BesovIndex::new(
        idx_f.s + idx_g.s - n * (idx_f.p.reciprocal() + idx_g.p.reciprocal() - p_inv),
        p,
        r,
    );

    let nf = besov_norm(f, partition, idx_f)?;
    let ng = besov_norm(g, partition, idx_g)?;
    if nf == 0.0 || ng == 0.0 {
        return Err(CoreError::UndefinedRatio("a factor norm is zero"));
    }

    let pf = f.to_physical()?;
    let pg = g.to_physical()?;
    let prod: Vec<f64> = pf.iter().zip(&pg).map(|(a, b)| a * b).collect();
    let fg = SpectralField::from_physical(*f.grid(), 1, &prod)?;
    let np = besov_norm(&fg, partition, target)?;

    Ok(ProductRatio {
        target,
        product_norm: np,
        factor_norms: (nf, ng),
        ratio: np / (nf * ng),
    })
}

/// Which norm a time series of evaluations refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Instantaneous regularity -1 sup-type Besov norm.
    SupBesovM1,
    /// Cumulative time-L^1 of the regularity +1 blockwise norm.
    L1Besov1,
    /// Gradient-Carleson norm of the director.
    X,
    /// Carleson norm of the velocity.
    Z,
}

impl NormKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormKind::SupBesovM1 => "sup_besov_m1",
            NormKind::L1Besov1 => "l1_besov_p1",
            NormKind::X => "x",
            NormKind::Z => "z",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sup_besov_m1" => Some(NormKind::SupBesovM1),
            "l1_besov_p1" => Some(NormKind::L1Besov1),
            "x" => Some(NormKind::X),
            "z" => Some(NormKind::Z),
            _ => None,
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Time-stamped norm evaluations for one (k, m, kind) label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormSeries {
    pub k: u32,
    pub m: u32,
    pub kind: NormKind,
    samples: Vec<(f64, f64)>,
}

impl NormSeries {
    pub fn new(k: u32, m: u32, kind: NormKind) -> Self {
        Self {
            k,
            m,
            kind,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        if !t.is_finite() || !value.is_finite() || value < 0.0 {
            return Err(CoreError::NonFinite("norm series sample"));
        }
        if let Some((last, _)) = self.samples.last() {
            if t <= *last {
                return Err(CoreError::InvalidConfig(
                    "norm series times must be strictly increasing".into(),
                ));
            }
        }
        self.samples.push((t, value));
        Ok(())
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Convenience: coefficients of a single Hermitian cosine mode.
pub fn cosine_mode_field(grid: Grid, k: [i64; 3], amplitude: f64) -> SpectralField {
    let mut f = SpectralField::zeros(grid, 1);
    let n = grid.points_per_dim() as i64;
    let wrap = |v: i64| (((v % n) + n) % n) as usize;
    let plus = grid.flatten([wrap(k[0]), wrap(k[1]), wrap(k[2])]);
    let minus = grid.flatten([wrap(-k[0]), wrap(-k[1]), wrap(-k[2])]);
    f.component_mut(0)[plus] += Complex64::new(amplitude / 2.0, 0.0);
    f.component_mut(0)[minus] += Complex64::new(amplitude / 2.0, 0.0);
    f
}
