//! Fisher information and Cramer-Rao bounds for the wideband DSS model.
//!
//! Each MPC contributes four real parameters, in this order: log amplitude
//! (so its bound is that of `alpha_hat / alpha`), phase, angle of arrival and
//! delay. The phase is referenced to the centre frequency, i.e. the model is
//! `alpha e^{j phase} e^{-j 2 pi (f - fc) tau}` up to a fixed per-MPC phasor.
//! This leaves the amplitude, angle and delay bounds unchanged and decouples
//! phase from delay on the symmetric frequency grid.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::antenna::AntennaPattern;
use crate::error::{Error, Result};
use crate::synthesis::{ArrayConfig, MpcTruth, SoundingConfig};

/// Condition number (of the diagonally scaled FIM) above which inversion is refused.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    /// `ln alpha`, equivalently the normalized amplitude `alpha_hat / alpha`.
    Amplitude,
    Phase,
    Angle,
    Delay,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::Amplitude, Param::Phase, Param::Angle, Param::Delay];

    pub fn as_str(self) -> &'static str {
        match self {
            Param::Amplitude => "alpha",
            Param::Phase => "phase",
            Param::Angle => "phi",
            Param::Delay => "tau",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Fisher information matrix with its parameter labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Fim {
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
}

impl Fim {
    pub fn from_matrix(matrix: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "FIM is {}x{} with {} labels",
                matrix.nrows(),
                matrix.ncols(),
                labels.len()
            )));
        }
        Ok(Self { matrix, labels })
    }

    pub fn n_mpcs(&self) -> usize {
        self.labels.len() / 4
    }

    pub fn entry(&self, l1: usize, p1: Param, l2: usize, p2: Param) -> f64 {
        self.matrix[(4 * l1 + p1.index(), 4 * l2 + p2.index())]
    }

    /// Eigenvalues of the (symmetrized) matrix in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// All eigenvalues `>= -1e-9 trace`.
    pub fn is_psd(&self) -> bool {
        let tol = -1e-9 * self.matrix.trace().abs();
        self.eigenvalues().iter().all(|&e| e >= tol)
    }
}

fn labels(n: usize) -> Vec<String> {
    (0..n)
        .flat_map(|l| Param::ALL.iter().map(move |p| format!("{}[{l}]", p.as_str())))
        .collect()
}

fn phasor(cycles: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * (cycles - cycles.round()))
}

/// Analytic FIM `(2 / sigma2) Re(D^H D)` over all `M K` observations.
pub fn fim(
    mpcs: &[MpcTruth],
    arr: &ArrayConfig,
    pat: &AntennaPattern,
    cfg: &SoundingConfig,
) -> Result<Fim> {
    if mpcs.is_empty() {
        return Err(Error::Invalid("at least one MPC is required".into()));
    }
    cfg.validate()?;
    arr.validate()?;
    if !(cfg.sigma2 > 0.0) {
        return Err(Error::Invalid("Fisher information needs a positive noise variance".into()));
    }
    let n = mpcs.len();
    let freqs = cfg.frequencies();
    let x: Vec<f64> = freqs.iter().map(|f| 2.0 * PI * (f - cfg.fc)).collect();

    // s_q(l, l') = sum_k x_k^q exp(j 2 pi f_k (tau_l - tau_l'))
    let mut sums = vec![[Complex64::new(0.0, 0.0); 3]; n * n];
    for a in 0..n {
        for b in a..n {
            let dt = mpcs[a].tau - mpcs[b].tau;
            let mut s = [Complex64::new(0.0, 0.0); 3];
            for (f, &xk) in freqs.iter().zip(&x) {
                let e = if dt == 0.0 { Complex64::new(1.0, 0.0) } else { phasor(f * dt) };
                s[0] += e;
                s[1] += e * xk;
                s[2] += e * xk * xk;
            }
            sums[a * n + b] = s;
            sums[b * n + a] = [s[0].conj(), s[1].conj(), s[2].conj()];
        }
    }

    let scale = cfg.pu.sqrt() * cfg.g_tx;
    let j = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    let mut f = DMatrix::<f64>::zeros(4 * n, 4 * n);
    for m in 0..arr.m {
        let steer = arr.steering(m);
        // per-MPC amplitude and derivative weights for this direction
        let terms: Vec<(Complex64, [Complex64; 4])> = mpcs
            .iter()
            .map(|mpc| {
                let x = steer - mpc.phi;
                let b = Complex64::from_polar(mpc.alpha * scale * pat.gain(x), mpc.phase);
                let w = [one, j, Complex64::new(-pat.log_gain_derivative(x), 0.0), one];
                (b, w)
            })
            .collect();
        for a in 0..n {
            for c in 0..n {
                let bb = terms[a].0.conj() * terms[c].0;
                if bb == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let s = &sums[a * n + c];
                for p in 0..4 {
                    for q in 0..4 {
                        let kernel = match (p == 3, q == 3) {
                            (false, false) => s[0],
                            (true, false) => j * s[1],
                            (false, true) => -j * s[1],
                            (true, true) => s[2],
                        };
                        let v = terms[a].1[p].conj() * terms[c].1[q] * bb * kernel;
                        f[(4 * a + p, 4 * c + q)] += v.re;
                    }
                }
            }
        }
    }
    f *= 2.0 / cfg.sigma2;
    // exact symmetry
    let f = (&f + f.transpose()) * 0.5;
    Fim::from_matrix(f, labels(n))
}

/// Per-MPC variance bounds. Amplitude is normalized (`alpha_hat / alpha`),
/// phase and angle in rad^2, delay in s^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcBound {
    pub amplitude: f64,
    pub phase: f64,
    pub angle: f64,
    pub delay: f64,
}

impl MpcBound {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Amplitude => self.amplitude,
            Param::Phase => self.phase,
            Param::Angle => self.angle,
            Param::Delay => self.delay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrlbReport {
    pub labels: Vec<String>,
    /// Diagonal of the inverse FIM, aligned with `labels`.
    pub variances: Vec<f64>,
    /// Condition number of the diagonally scaled FIM.
    pub condition: f64,
}

impl CrlbReport {
    pub fn mpc(&self, l: usize) -> MpcBound {
        let v = &self.variances[4 * l..4 * l + 4];
        MpcBound {
            amplitude: v[0],
            phase: v[1],
            angle: v[2],
            delay: v[3],
        }
    }

    pub fn n_mpcs(&self) -> usize {
        self.variances.len() / 4
    }
}

/// Diagonally scaled FIM `D^{-1/2} F D^{-1/2}`, its eigen-decomposition and condition number.
fn scaled(f: &Fim) -> Result<(DMatrix<f64>, Vec<f64>, SymmetricEigen<f64, nalgebra::Dyn>, f64)> {
    let n = f.matrix.nrows();
    let d: Vec<f64> = (0..n).map(|i| f.matrix[(i, i)]).collect();
    if let Some(i) = d.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::SingularFim {
            condition: f64::INFINITY,
            subspace: vec![f.labels[i].clone()],
        });
    }
    let s: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut nm = DMatrix::from_fn(n, n, |i, j| f.matrix[(i, j)] * s[i] * s[j]);
    nm = (&nm + nm.transpose()) * 0.5;
    let eig = SymmetricEigen::new(nm.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    Ok((nm, s, eig, cond))
}

/// Condition number of the diagonally scaled FIM.
pub fn condition_number(f: &Fim) -> f64 {
    scaled(f).map(|r| r.3).unwrap_or(f64::INFINITY)
}

/// Diagonal of `F^{-1}`. Refuses (with the weakest parameter directions)
/// when the scaled FIM's condition number exceeds [`MAX_CONDITION`].
pub fn crlb_from_fim(f: &Fim) -> Result<CrlbReport> {
    let (nm, s, eig, cond) = scaled(f)?;
    if cond > MAX_CONDITION {
        let imin = eig.eigenvalues.imin();
        let v = eig.eigenvectors.column(imin);
        let mut w: Vec<(f64, usize)> = v.iter().enumerate().map(|(i, x)| (x * x, i)).collect();
        w.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let subspace = w
            .iter()
            .filter(|(x, _)| *x >= 0.05)
            .map(|&(_, i)| f.labels[i].clone())
            .collect();
        return Err(Error::SingularFim {
            condition: cond,
            subspace,
        });
    }
    let chol = nm.cholesky().ok_or(Error::SingularFim {
        condition: cond,
        subspace: f.labels.clone(),
    })?;
    let inv = chol.inverse();
    let variances = (0..s.len()).map(|i| inv[(i, i)] * s[i] * s[i]).collect();
    Ok(CrlbReport {
        labels: f.labels.clone(),
        variances,
        condition: cond,
    })
}

fn ring_sums(arr: &ArrayConfig, pat: &AntennaPattern, phi_l: f64) -> (f64, f64) {
    let kappa = pat.kappa().unwrap_or(0.0);
    let mut g2 = 0.0;
    let mut sin2g2 = 0.0;
    for m in 0..arr.m {
        let x = arr.steering(m) - phi_l;
        let p = pat.power(x);
        g2 += p;
        sin2g2 += kappa * kappa * x.sin().powi(2) * p;
    }
    (g2, sin2g2)
}

fn require_gaussian(pat: &AntennaPattern) -> Result<()> {
    if pat.is_gaussian() {
        Ok(())
    } else {
        Err(Error::Domain("closed-form bounds need a Gaussian beam".into()))
    }
}

/// Single-MPC angle bound `1 / (2 gamma_i K kappa^2 sum_m sin^2(x_m) g^2(x_m))`, rad^2,
/// with `gamma_i = alpha^2 pu / sigma2` (times `g_tx^2`).
pub fn crlb_single_phi(
    gamma_i: f64,
    cfg: &SoundingConfig,
    arr: &ArrayConfig,
    pat: &AntennaPattern,
    phi_l: f64,
) -> Result<f64> {
    require_gaussian(pat)?;
    let (_, s) = ring_sums(arr, pat, phi_l);
    Ok(1.0 / (2.0 * gamma_i * cfg.g_tx * cfg.g_tx * cfg.k as f64 * s))
}

/// Single-MPC normalized-amplitude bound `1 / (2 gamma_i K sum_m g^2(x_m))`,
/// which is also the phase bound.
pub fn crlb_single_alpha(
    gamma_i: f64,
    cfg: &SoundingConfig,
    arr: &ArrayConfig,
    pat: &AntennaPattern,
    phi_l: f64,
) -> Result<f64> {
    require_gaussian(pat)?;
    let (g2, _) = ring_sums(arr, pat, phi_l);
    Ok(1.0 / (2.0 * gamma_i * cfg.g_tx * cfg.g_tx * cfg.k as f64 * g2))
}

/// Bounds for a scenario, via the full FIM.
pub fn crlb(
    mpcs: &[MpcTruth],
    arr: &ArrayConfig,
    pat: &AntennaPattern,
    cfg: &SoundingConfig,
) -> Result<CrlbReport> {
    crlb_from_fim(&fim(mpcs, arr, pat, cfg)?)
}

/// `1 / F_ii`: the bound each parameter would have if all others were known.
pub fn decoupled_bounds(f: &Fim) -> Vec<f64> {
    (0..f.matrix.nrows()).map(|i| 1.0 / f.matrix[(i, i)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn beam() -> AntennaPattern {
        AntennaPattern::gaussian_db(20.0, 10.0).unwrap()
    }

    fn arr() -> ArrayConfig {
        ArrayConfig::new(36).unwrap()
    }

    fn cfg(gamma_i: f64) -> SoundingConfig {
        SoundingConfig {
            sigma2: 1.0 / gamma_i,
            ..Default::default()
        }
    }

    /// Band-centre model summed directly over all observations.
    fn signal(theta: &[f64], tau_ref: &[f64], a: &ArrayConfig, p: &AntennaPattern, c: &SoundingConfig) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(a.m * c.k);
        for m in 0..a.m {
            for k in 0..c.k {
                let f = c.frequency(k);
                let mut v = Complex64::new(0.0, 0.0);
                for (l, t) in theta.chunks(4).enumerate() {
                    let amp = t[0].exp() * c.pu.sqrt() * c.g_tx * p.gain(a.steering(m) - t[2]);
                    let ph = t[1] - 2.0 * PI * (c.fc * tau_ref[l]).fract() - 2.0 * PI * (f - c.fc) * t[3];
                    v += Complex64::from_polar(amp, ph);
                }
                out.push(v);
            }
        }
        out
    }

    fn fd_fim(mpcs: &[MpcTruth], a: &ArrayConfig, p: &AntennaPattern, c: &SoundingConfig) -> DMatrix<f64> {
        let theta: Vec<f64> = mpcs.iter().flat_map(|m| [m.alpha.ln(), m.phase, m.phi, m.tau]).collect();
        let tau_ref: Vec<f64> = mpcs.iter().map(|m| m.tau).collect();
        let steps = [1e-6, 1e-6, 1e-6, 1e-6 * c.delay_step()];
        let n = theta.len();
        let cols: Vec<Vec<Complex64>> = (0..n)
            .map(|i| {
                let h = steps[i % 4];
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[i] += h;
                dn[i] -= h;
                let su = signal(&up, &tau_ref, a, p, c);
                let sd = signal(&dn, &tau_ref, a, p, c);
                su.iter().zip(&sd).map(|(u, d)| (u - d) / (2.0 * h)).collect()
            })
            .collect();
        DMatrix::from_fn(n, n, |i, j| {
            let acc: f64 = cols[i].iter().zip(&cols[j]).map(|(x, y)| (x.conj() * y).re).sum();
            2.0 / c.sigma2 * acc
        })
    }

    fn assert_fim_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let s = (a[(i, i)] * a[(j, j)]).sqrt();
                assert!((a[(i, j)] - b[(i, j)]).abs() <= tol * s, "({i},{j}): {} vs {}", a[(i, j)], b[(i, j)]);
            }
        }
    }

    #[test]
    fn analytic_matches_finite_differences() {
        let c = SoundingConfig { k: 101, sigma2: 0.5, ..Default::default() };
        let one = [MpcTruth::new(0.9, 0.4, 12.3e-9, 0.31)];
        assert_fim_close(&fim(&one, &arr(), &beam(), &c).unwrap().matrix, &fd_fim(&one, &arr(), &beam(), &c), 1e-5);
        let two = [
            MpcTruth::new(1.0, PI / 3.0, 25e-9, 3f64.to_radians()),
            MpcTruth::new(0.7, PI / 5.0, 25.4e-9, 11f64.to_radians()),
        ];
        let wide = AntennaPattern::gaussian_db(15.0, 30.0).unwrap();
        assert_fim_close(&fim(&two, &arr(), &wide, &c).unwrap().matrix, &fd_fim(&two, &arr(), &wide, &c), 1e-5);
    }

    #[test]
    fn tabulated_pattern_fim_close_to_gaussian() {
        let c = SoundingConfig { k: 64, sigma2: 1.0, ..Default::default() };
        let g = beam();
        let t = AntennaPattern::tabulated(g.to_table(0.01f64.to_radians())).unwrap();
        let mpc = [MpcTruth::new(1.0, 0.0, 5e-9, 0.2)];
        let a = fim(&mpc, &arr(), &g, &c).unwrap().matrix;
        let b = fim(&mpc, &arr(), &t, &c).unwrap().matrix;
        assert_fim_close(&a, &b, 1e-3);
    }

    #[test]
    fn sigma_scaling() {
        let mpc = [MpcTruth::new(1.0, 0.2, 10e-9, 0.4)];
        let a = fim(&mpc, &arr(), &beam(), &cfg(1.0)).unwrap().matrix;
        let b = fim(&mpc, &arr(), &beam(), &cfg(0.5)).unwrap().matrix;
        assert_relative_eq!(a, b * 2.0, max_relative = 1e-12);
    }

    #[test]
    fn single_mpc_structure() {
        let f = fim(&[MpcTruth::new(1.0, 0.2, 10e-9, 0.4)], &arr(), &beam(), &cfg(0.1)).unwrap();
        let scale = |a: Param, b: Param| (f.entry(0, a, 0, a) * f.entry(0, b, 0, b)).sqrt();
        // phase decouples from everything, delay decouples on the symmetric grid
        for p in [Param::Amplitude, Param::Angle, Param::Delay] {
            assert!(f.entry(0, Param::Phase, 0, p).abs() < 1e-12 * scale(Param::Phase, p));
        }
        for p in [Param::Amplitude, Param::Angle] {
            assert!(f.entry(0, Param::Delay, 0, p).abs() < 1e-9 * scale(Param::Delay, p));
        }
    }

    #[test]
    fn closed_forms_match_fim_diagonal() {
        let c = cfg(0.1);
        for phi in [0.0, 0.05, 0.1, 1.0, 2.5] {
            let f = fim(&[MpcTruth::new(1.0, 0.0, 25e-9, phi)], &arr(), &beam(), &c).unwrap();
            let d = decoupled_bounds(&f);
            assert_relative_eq!(crlb_single_alpha(0.1, &c, &arr(), &beam(), phi).unwrap(), d[0], max_relative = 1e-9);
            assert_relative_eq!(crlb_single_alpha(0.1, &c, &arr(), &beam(), phi).unwrap(), d[1], max_relative = 1e-9);
            assert_relative_eq!(crlb_single_phi(0.1, &c, &arr(), &beam(), phi).unwrap(), d[2], max_relative = 1e-9);
        }
    }

    #[test]
    fn closed_forms_vs_full_inverse() {
        // amplitude and angle couple through sum_m sin(x_m) g^2(x_m), which
        // vanishes only where the ring is symmetric about the MPC
        let c = cfg(0.1);
        for phi in [0.0_f64, 5.0, 0.37, 2.5, 7.2] {
            let phi = phi.to_radians();
            let f = fim(&[MpcTruth::new(1.0, 0.0, 25e-9, phi)], &arr(), &beam(), &c).unwrap();
            let r = crlb_from_fim(&f).unwrap().mpc(0);
            let fa = f.entry(0, Param::Amplitude, 0, Param::Amplitude);
            let fp = f.entry(0, Param::Angle, 0, Param::Angle);
            let fx = f.entry(0, Param::Amplitude, 0, Param::Angle);
            let rho2 = fx * fx / (fa * fp);
            let a = crlb_single_alpha(0.1, &c, &arr(), &beam(), phi).unwrap();
            let p = crlb_single_phi(0.1, &c, &arr(), &beam(), phi).unwrap();
            assert_relative_eq!(r.amplitude, a / (1.0 - rho2), max_relative = 1e-9);
            assert_relative_eq!(r.angle, p / (1.0 - rho2), max_relative = 1e-9);
            assert_relative_eq!(r.phase, a, max_relative = 1e-9);
            if phi == 0.0 || (phi - 5f64.to_radians()).abs() < 1e-15 {
                assert!(rho2 < 1e-20, "{rho2}");
            }
        }
    }

    #[test]
    fn angle_bound_envelope() {
        let c = cfg(0.1);
        let v: Vec<f64> = (0..=100)
            .map(|i| crlb_single_phi(0.1, &c, &arr(), &beam(), (i as f64 * 0.1).to_radians()).unwrap())
            .collect();
        let (imin, _) = v.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let (imax, _) = v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(imin, 50);
        assert!(imax == 0 || imax == 100);
        let a: Vec<f64> = (0..=100)
            .map(|i| crlb_single_alpha(0.1, &c, &arr(), &beam(), (i as f64 * 0.1).to_radians()).unwrap())
            .collect();
        let (amax, _) = a.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap();
        assert_eq!(amax, 50);
    }

    #[test]
    fn angle_bound_direct_sum() {
        let c = cfg(0.1);
        let pat = beam();
        let kappa = pat.kappa().unwrap();
        let phi = 5f64.to_radians();
        let mut s = 0.0;
        for m in 0..36 {
            let x = (m as f64 * 10.0 - 5.0).to_radians();
            let g2 = 100.0 * (2.0 * kappa * (x.cos() - 1.0)).exp();
            s += x.sin().powi(2) * g2;
        }
        let oracle = 1.0 / (2.0 * 0.1 * 1001.0 * kappa * kappa * s);
        assert_relative_eq!(crlb_single_phi(0.1, &c, &arr(), &pat, phi).unwrap(), oracle, max_relative = 1e-12);
        assert_relative_eq!(
            crlb_single_phi(1.0, &c, &arr(), &pat, phi).unwrap() * 10.0,
            crlb_single_phi(0.1, &c, &arr(), &pat, phi).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn closed_forms_need_gaussian() {
        let t = AntennaPattern::tabulated(beam().to_table(0.01)).unwrap();
        assert!(crlb_single_phi(1.0, &cfg(1.0), &arr(), &t, 0.0).is_err());
    }

    #[test]
    fn diagonal_fim_inverse() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 4.0, 8.0, 0.5]));
        let r = crlb_from_fim(&Fim::from_matrix(m, labels(1)).unwrap()).unwrap();
        for (v, e) in r.variances.iter().zip([0.5, 0.25, 0.125, 2.0]) {
            assert_relative_eq!(*v, e, max_relative = 1e-14);
        }
        assert_relative_eq!(r.condition, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn coincident_mpcs_are_singular() {
        let mpcs = [
            MpcTruth::new(1.0, PI / 3.0, 25e-9, 0.1),
            MpcTruth::new(1.0, PI / 5.0, 25e-9, 0.1),
        ];
        let f = fim(&mpcs, &arr(), &beam(), &cfg(0.1)).unwrap();
        match crlb_from_fim(&f) {
            Err(Error::SingularFim { condition, subspace }) => {
                assert!(condition > MAX_CONDITION);
                assert!(!subspace.is_empty());
            }
            other => panic!("expected singular FIM, got {other:?}"),
        }
    }

    #[test]
    fn separated_pair_decouples() {
        let c = cfg(0.1);
        let p1 = 3f64.to_radians();
        for sep in [31.0_f64, 45.0, 90.0] {
            let p2 = p1 + sep.to_radians();
            let mpcs = [MpcTruth::new(1.0, PI / 3.0, 25e-9, p1), MpcTruth::new(1.0, PI / 5.0, 25e-9, p2)];
            let pair = crlb(&mpcs, &arr(), &beam(), &c).unwrap();
            for (l, m) in mpcs.iter().enumerate() {
                let single = crlb(&[*m], &arr(), &beam(), &c).unwrap().mpc(0);
                let got = pair.mpc(l);
                for p in Param::ALL {
                    assert_relative_eq!(got.get(p), single.get(p), max_relative = 0.01);
                }
            }
        }
    }

    #[test]
    fn closely_spaced_pair_is_worse() {
        let c = cfg(0.1);
        let p1 = 3f64.to_radians();
        let single = crlb(&[MpcTruth::new(1.0, PI / 3.0, 25e-9, p1)], &arr(), &beam(), &c).unwrap().mpc(0);
        let mpcs = [
            MpcTruth::new(1.0, PI / 3.0, 25e-9, p1),
            MpcTruth::new(1.0, PI / 5.0, 25e-9, p1 + 5f64.to_radians()),
        ];
        let pair = crlb(&mpcs, &arr(), &beam(), &c).unwrap().mpc(0);
        assert!(pair.angle > 2.0 * single.angle);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn ring_rotation_invariance(phi in 0.0..(2.0 * PI), r in 0usize..36, tau in 0.0..100e-9) {
            let c = SoundingConfig { k: 64, sigma2: 1.0, ..Default::default() };
            let a = arr();
            let rot = a.steering(r);
            let mpcs = [MpcTruth::new(1.0, 0.3, tau, phi), MpcTruth::new(0.6, 1.3, tau + 3e-9, phi + 0.9)];
            let rotated: Vec<MpcTruth> = mpcs.iter().map(|m| MpcTruth::new(m.alpha, m.phase, m.tau, m.phi + rot)).collect();
            let x = crlb(&mpcs, &a, &beam(), &c).unwrap();
            let y = crlb(&rotated, &a, &beam(), &c).unwrap();
            for (u, v) in x.variances.iter().zip(&y.variances) {
                prop_assert!((u - v).abs() <= 1e-8 * u.abs());
            }
        }

        #[test]
        fn fim_is_psd(phi1 in 0.0..(2.0 * PI), d in 0.0..1.0f64, dt in 0.0..3e-9) {
            let c = SoundingConfig { k: 64, sigma2: 1.0, ..Default::default() };
            let mpcs = [MpcTruth::new(1.0, 0.3, 20e-9, phi1), MpcTruth::new(0.8, 1.0, 20e-9 + dt, phi1 + d)];
            prop_assert!(fim(&mpcs, &arr(), &beam(), &c).unwrap().is_psd());
        }
    }
}
