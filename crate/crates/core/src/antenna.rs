//! Directional antenna radiation patterns and the normalized adjacent-beam
//! power difference used to recover an MPC's offset from a steering angle.
//!
//! Angles are radians throughout. A pattern reports *amplitude* gain; the
//! power gain is its square.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wrap_pi;

/// Chi values are clamped to this magnitude before inversion.
pub const CHI_LIMIT: f64 = 1.0 - 1e-12;

/// Default offset grid for the table-driven inversion (0.01 degree).
pub const DEFAULT_INVERSION_STEP: f64 = 0.01 * PI / 180.0;

/// Which adjacent scan direction the strongest direction is paired with.
///
/// `Minus` pairs with the previous steering angle (offset `eps + spacing`),
/// `Plus` with the next one (offset `eps - spacing`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    fn adjacent_offset(self, eps: f64, spacing: f64) -> f64 {
        match self {
            Side::Minus => eps + spacing,
            Side::Plus => eps - spacing,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Minus => "minus",
            Side::Plus => "plus",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatternKind {
    /// `g(x) = sqrt(g_max) * exp(kappa * (cos x - 1))`.
    GaussianBeam { kappa: f64 },
    /// Calibrated (offset, amplitude gain) pairs, offsets strictly increasing
    /// starting at or below -pi. Interpolated linearly, wrapping at +-pi.
    Tabulated { table: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AntennaPattern {
    g_max: f64,
    hpbw: f64,
    kind: PatternKind,
}

/// Concentration parameter of the Gaussian beam for a given half-power
/// beamwidth.
pub fn kappa_from_hpbw(hpbw: f64) -> Result<f64> {
    if !(hpbw > 0.0 && hpbw < PI) {
        return Err(Error::Domain(format!(
            "half-power beamwidth must lie in (0, pi) rad, got {hpbw}"
        )));
    }
    Ok(SQRT_2.ln() / (1.0 - (0.5 * hpbw).cos()))
}

impl AntennaPattern {
    /// Gaussian beam with linear peak power gain `g_max`.
    pub fn gaussian(g_max: f64, hpbw: f64) -> Result<Self> {
        if !(g_max > 0.0 && g_max.is_finite()) {
            return Err(Error::Domain(format!("peak gain must be positive, got {g_max}")));
        }
        let kappa = kappa_from_hpbw(hpbw)?;
        Ok(Self {
            g_max,
            hpbw,
            kind: PatternKind::GaussianBeam { kappa },
        })
    }

    pub fn gaussian_db(g_max_db: f64, hpbw_deg: f64) -> Result<Self> {
        Self::gaussian(db_to_linear(g_max_db), hpbw_deg.to_radians())
    }

    /// Build a pattern from calibration pairs `(offset_rad, amplitude_gain)`.
    ///
    /// Peak gain and half-power beamwidth are read off the interpolant.
    pub fn tabulated(table: Vec<(f64, f64)>) -> Result<Self> {
        validate_table(&table)?;
        let mut pattern = Self {
            g_max: 0.0,
            hpbw: 0.0,
            kind: PatternKind::Tabulated { table },
        };
        let g0 = pattern.gain(0.0);
        if g0 <= 0.0 {
            return Err(Error::Invalid("tabulated pattern has zero gain at boresight".into()));
        }
        pattern.g_max = g0 * g0;
        pattern.hpbw = pattern.measure_hpbw()?;
        Ok(pattern)
    }

    /// Load a two-column CSV with header `offset_deg,gain`.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            Error::Invalid(format!("cannot open pattern table {}: {e}", path.as_ref().display()))
        })?;
        Self::read_csv(file)
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            offset_deg: f64,
            gain: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "offset_deg" || &headers[1] != "gain" {
            return Err(Error::Invalid(format!(
                "pattern table header must be `offset_deg,gain`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut table = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            table.push((row.offset_deg.to_radians(), row.gain));
        }
        Self::tabulated(table)
    }

    /// Sample this pattern onto a table with `step` spacing over [-pi, pi).
    pub fn to_table(&self, step: f64) -> Vec<(f64, f64)> {
        let n = (2.0 * PI / step).round() as usize;
        (0..n)
            .map(|i| {
                let x = -PI + i as f64 * (2.0 * PI / n as f64);
                (x, self.gain(x))
            })
            .collect()
    }

    pub fn kind(&self) -> &PatternKind {
        &self.kind
    }

    /// Linear peak power gain.
    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    pub fn hpbw(&self) -> f64 {
        self.hpbw
    }

    pub fn kappa(&self) -> Option<f64> {
        match self.kind {
            PatternKind::GaussianBeam { kappa } => Some(kappa),
            PatternKind::Tabulated { .. } => None,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, PatternKind::GaussianBeam { .. })
    }

    /// Amplitude gain toward `offset` from boresight.
    pub fn gain(&self, offset: f64) -> f64 {
        match &self.kind {
            // cos is 2pi-periodic, so no wrapping (and no wrapping roundoff)
            PatternKind::GaussianBeam { kappa } => {
                self.g_max.sqrt() * (kappa * (offset.cos() - 1.0)).exp()
            }
            PatternKind::Tabulated { table } => interpolate_circular(table, wrap_pi(offset)),
        }
    }

    /// Power gain `g(offset)^2`.
    pub fn power(&self, offset: f64) -> f64 {
        let g = self.gain(offset);
        g * g
    }

    /// Power gain at boresight, `g(0)^2`.
    pub fn peak_power(&self) -> f64 {
        self.power(0.0)
    }

    /// `d ln g / d offset`. Exact for the Gaussian beam; a centred difference
    /// with 0.05 degree step for tables.
    pub fn log_gain_derivative(&self, offset: f64) -> f64 {
        match &self.kind {
            PatternKind::GaussianBeam { kappa } => -kappa * offset.sin(),
            PatternKind::Tabulated { .. } => {
                let h = 0.05_f64.to_radians();
                let lo = self.gain(offset - h).max(f64::MIN_POSITIVE).ln();
                let hi = self.gain(offset + h).max(f64::MIN_POSITIVE).ln();
                (hi - lo) / (2.0 * h)
            }
        }
    }

    /// Mean of the ring power sum `sum_m g^2(phi_m - phi)` over all MPC
    /// angles, for `m` uniformly spaced steering directions. Equals
    /// `m / (2 pi) * integral of g^2 over the circle`.
    pub fn mean_ring_power(&self, m: usize) -> f64 {
        // composite Simpson over the circle; the integrand is smooth and periodic
        let n = 36_000;
        let h = 2.0 * PI / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * self.power(-PI + i as f64 * h);
        }
        m as f64 / (2.0 * PI) * acc * h / 3.0
    }

    fn measure_hpbw(&self) -> Result<f64> {
        let PatternKind::Tabulated { table } = &self.kind else {
            return Ok(self.hpbw);
        };
        let target = self.gain(0.0) / SQRT_2;
        let right = half_power_crossing(table, target, 1.0)
            .ok_or_else(|| Error::Invalid("pattern never drops to half power for positive offsets".into()))?;
        let left = half_power_crossing(table, target, -1.0)
            .ok_or_else(|| Error::Invalid("pattern never drops to half power for negative offsets".into()))?;
        Ok(right - left)
    }
}

fn validate_table(table: &[(f64, f64)]) -> Result<()> {
    if table.len() < 3 {
        return Err(Error::Invalid("pattern table needs at least 3 entries".into()));
    }
    for w in table.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::Invalid(format!(
                "pattern table offsets must be strictly increasing ({} then {} rad)",
                w[0].0, w[1].0
            )));
        }
    }
    for &(x, g) in table {
        if !x.is_finite() || !g.is_finite() || g < 0.0 {
            return Err(Error::Invalid(format!("bad pattern table entry ({x}, {g})")));
        }
    }
    let first = table[0].0;
    let last = table[table.len() - 1].0;
    if first > -PI + 1e-9 || last > PI + 1e-9 {
        return Err(Error::Invalid(
            "pattern table must start at -180 deg and end at or before +180 deg".into(),
        ));
    }
    Ok(())
}

/// Linear interpolation on a table covering [-pi, pi), closing the gap after
/// the last entry against the first one shifted by 2pi.
fn interpolate_circular(table: &[(f64, f64)], x: f64) -> f64 {
    let idx = table.partition_point(|&(a, _)| a <= x);
    let (x0, g0, x1, g1) = if idx == 0 {
        let (la, lg) = table[table.len() - 1];
        let (fa, fg) = table[0];
        (la - 2.0 * PI, lg, fa, fg)
    } else if idx == table.len() {
        let (la, lg) = table[table.len() - 1];
        let (fa, fg) = table[0];
        (la, lg, fa + 2.0 * PI, fg)
    } else {
        let (a, ga) = table[idx - 1];
        let (b, gb) = table[idx];
        (a, ga, b, gb)
    };
    if x1 == x0 {
        return g0;
    }
    let t = (x - x0) / (x1 - x0);
    g0 + t * (g1 - g0)
}

/// Walk the table away from boresight in `dir` and return the offset at
/// which the interpolated amplitude first drops to `target`.
fn half_power_crossing(table: &[(f64, f64)], target: f64, dir: f64) -> Option<f64> {
    let mut prev_x = 0.0;
    let mut prev_g = interpolate_circular(table, 0.0);
    let mut pts: Vec<(f64, f64)> = table
        .iter()
        .copied()
        .filter(|&(x, _)| x * dir > 0.0)
        .collect();
    if dir < 0.0 {
        pts.reverse();
    }
    for (x, g) in pts {
        if g <= target {
            let t = (prev_g - target) / (prev_g - g);
            return Some(prev_x + t * (x - prev_x));
        }
        prev_x = x;
        prev_g = g;
    }
    None
}

/// Normalized power difference between the direction offset `eps` from the
/// MPC and the adjacent direction on `side`, with the pattern's HPBW as the
/// angular spacing.
pub fn chi(pattern: &AntennaPattern, eps: f64, side: Side) -> f64 {
    chi_with_spacing(pattern, eps, side, pattern.hpbw())
}

/// Same metric with an explicit spacing between adjacent scan directions.
pub fn chi_with_spacing(pattern: &AntennaPattern, eps: f64, side: Side, spacing: f64) -> f64 {
    let adj = side.adjacent_offset(eps, spacing);
    match pattern.kind() {
        PatternKind::GaussianBeam { kappa } => (kappa * (eps.cos() - adj.cos())).tanh(),
        PatternKind::Tabulated { .. } => {
            let p = pattern.power(eps);
            let q = pattern.power(adj);
            if p + q == 0.0 {
                0.0
            } else {
                (p - q) / (p + q)
            }
        }
    }
}

/// Clamp a measured chi into the open interval the inversions accept.
/// Returns the clamped value and whether clamping happened.
pub fn clamp_chi(chi_val: f64) -> (f64, bool) {
    if chi_val.is_nan() {
        return (0.0, true);
    }
    if chi_val.abs() > CHI_LIMIT {
        (chi_val.signum() * CHI_LIMIT, true)
    } else {
        (chi_val, false)
    }
}

/// Closed-form inverse of [`chi`] for the Gaussian beam (spacing = HPBW).
pub fn invert_chi_closed(chi_val: f64, side: Side, hpbw: f64, kappa: f64) -> Result<f64> {
    invert_chi_closed_with_spacing(chi_val, side, hpbw, kappa)
}

/// Closed-form inverse of [`chi_with_spacing`] for the Gaussian beam.
///
/// With `g^2(a) / g^2(b) = exp(2 kappa (cos a - cos b))` and the
/// product-to-sum identity, `ln((1 + chi) / (1 - chi)) = +-4 kappa
/// sin(spacing / 2) sin(eps +- spacing / 2)`.
pub fn invert_chi_closed_with_spacing(
    chi_val: f64,
    side: Side,
    spacing: f64,
    kappa: f64,
) -> Result<f64> {
    if !(chi_val > -1.0 && chi_val < 1.0) {
        return Err(Error::Saturated {
            argument: if chi_val.is_nan() { f64::NAN } else { chi_val.signum() * f64::INFINITY },
        });
    }
    let sign = match side {
        Side::Minus => 1.0,
        Side::Plus => -1.0,
    };
    // ln((1 + x) / (1 - x)) = 2 atanh(x)
    let argument = sign * 2.0 * chi_val.atanh() / (4.0 * kappa * (0.5 * spacing).sin());
    if !(-1.0..=1.0).contains(&argument) {
        return Err(Error::Saturated { argument });
    }
    Ok(argument.asin() - sign * 0.5 * spacing)
}

/// Closed-form inverse that never fails: chi is clamped, and a saturated
/// arcsin argument or an offset beyond the adjacent half-spacing pins the
/// offset to +-spacing/2. The flag reports whether either happened.
pub fn invert_chi_closed_clamped(chi_val: f64, side: Side, spacing: f64, kappa: f64) -> (f64, bool) {
    let (c, clamped) = clamp_chi(chi_val);
    match invert_chi_closed_with_spacing(c, side, spacing, kappa) {
        Ok(eps) if eps.abs() <= 0.5 * spacing => (eps, clamped),
        Ok(eps) => (eps.signum() * 0.5 * spacing, true),
        // past the arcsin range the offset lies beyond the adjacent
        // half-spacing on the side the argument points to
        Err(Error::Saturated { argument }) => {
            let eps = if argument.is_nan() {
                0.0
            } else if argument > 0.0 {
                0.5 * spacing
            } else {
                -0.5 * spacing
            };
            (eps, true)
        }
        Err(_) => unreachable!("closed inversion only reports saturation"),
    }
}

/// Table-driven inverse: the grid offset in `[-hpbw/2, hpbw/2]` whose
/// model chi is closest to `chi_hat`. Ties go to the smaller `|eps|`.
pub fn invert_chi_tabulated(
    chi_hat: f64,
    side: Side,
    pattern: &AntennaPattern,
    grid_step: f64,
) -> f64 {
    invert_chi_tabulated_with_spacing(chi_hat, side, pattern, pattern.hpbw(), grid_step)
}

/// Table-driven inverse searching `[-spacing/2, spacing/2]`.
pub fn invert_chi_tabulated_with_spacing(
    chi_hat: f64,
    side: Side,
    pattern: &AntennaPattern,
    spacing: f64,
    grid_step: f64,
) -> f64 {
    assert!(grid_step > 0.0, "inversion grid step must be positive");
    let half = 0.5 * spacing;
    // candidates in order of increasing |eps| so strict improvement breaks ties
    let n = (half / grid_step + 1e-9).floor() as usize;
    let mut magnitudes: Vec<f64> = (0..=n).map(|i| i as f64 * grid_step).collect();
    if (half - magnitudes[n]).abs() <= 1e-9 * grid_step {
        magnitudes[n] = half; // outermost grid point sits on the boundary
    } else {
        magnitudes.push(half);
    }
    let mut best = 0.0;
    let mut best_err = f64::INFINITY;
    for &mag in &magnitudes {
        for eps in [mag, -mag] {
            let err = (chi_hat - chi_with_spacing(pattern, eps, side, spacing)).abs();
            if err < best_err {
                best_err = err;
                best = eps;
            }
        }
    }
    best
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
