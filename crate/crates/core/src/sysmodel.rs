//! RIS-aided downlink system model.
//!
//! A multi-antenna base station serves single-antenna users through a passive
//! surface whose elements are tied together in groups sharing one discrete
//! phase. The direct BS-user path is blocked, so every user sees only the
//! cascaded BS→RIS→user channel. Active beamforming is zero-forcing with an
//! equal power split, which makes the sum-rate a deterministic function of the
//! phase configuration.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Condition number above which the zero-forcing inverse is regularized.
pub const ZF_CONDITION_LIMIT: f64 = 1e12;
/// Ridge added to the Gram matrix, relative to its mean diagonal.
pub const ZF_RIDGE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    pub m_antennas: usize,
    pub k_users: usize,
    pub n_elements: usize,
    pub group_size: usize,
    pub phase_bits: u32,
    /// Meters.
    pub d_bs_ris: f64,
    pub d_ris_user_min: f64,
    pub d_ris_user_max: f64,
    /// Linear Rician K-factor.
    pub rician_k: f64,
    pub pathloss_exp_bs_ris: f64,
    pub pathloss_exp_ris_user: f64,
    /// Path loss at 1 m, dB.
    pub pathloss_ref_db: f64,
    /// Total transmit power, dBm.
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            m_antennas: 8,
            k_users: 5,
            n_elements: 40,
            group_size: 10,
            phase_bits: 2,
            d_bs_ris: 50.0,
            d_ris_user_min: 50.0,
            d_ris_user_max: 60.0,
            rician_k: 10.0,
            pathloss_exp_bs_ris: 2.2,
            pathloss_exp_ris_user: 2.2,
            pathloss_ref_db: 30.0,
            tx_power_dbm: 30.0,
            noise_dbm: -94.0,
            seed: 0,
        }
    }
}

impl SystemConfig {
    pub fn with_elements(mut self, n_elements: usize) -> Self {
        self.n_elements = n_elements;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.group_size == 0 || self.n_elements == 0 {
            return fail("n_elements and group_size must be positive".into());
        }
        if self.n_elements % self.group_size != 0 {
            return fail(format!(
                "n_elements {} is not divisible by group_size {}",
                self.n_elements, self.group_size
            ));
        }
        if self.phase_bits == 0 || self.phase_bits > 16 {
            return fail(format!("phase_bits {} outside 1..=16", self.phase_bits));
        }
        if self.k_users == 0 {
            return fail("k_users must be positive".into());
        }
        if self.m_antennas < self.k_users {
            return fail(format!(
                "zero-forcing needs m_antennas ({}) >= k_users ({})",
                self.m_antennas, self.k_users
            ));
        }
        let distances = [self.d_bs_ris, self.d_ris_user_min, self.d_ris_user_max];
        if distances.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return fail("distances must be finite and positive".into());
        }
        if self.d_ris_user_min > self.d_ris_user_max {
            return fail("d_ris_user_min exceeds d_ris_user_max".into());
        }
        if !(self.rician_k >= 0.0) || self.rician_k.is_nan() {
            return fail("rician_k must be non-negative".into());
        }
        let scalars = [
            self.pathloss_exp_bs_ris,
            self.pathloss_exp_ris_user,
            self.pathloss_ref_db,
            self.tx_power_dbm,
            self.noise_dbm,
        ];
        if scalars.iter().any(|v| !v.is_finite()) {
            return fail("path-loss and power parameters must be finite".into());
        }
        Ok(())
    }

    /// Number of phase groups G.
    pub fn groups(&self) -> usize {
        self.n_elements / self.group_size
    }

    /// Number of phase levels L = 2^bits.
    pub fn levels(&self) -> usize {
        1usize << self.phase_bits
    }

    /// Size of the joint configuration space, L^G, saturating.
    pub fn space_size(&self) -> u128 {
        (self.levels() as u128)
            .checked_pow(self.groups() as u32)
            .unwrap_or(u128::MAX)
    }

    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    pub fn noise_w(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    /// Linear power gain of a link of length `distance` with exponent `exponent`.
    pub fn pathloss(&self, distance: f64, exponent: f64) -> f64 {
        10f64.powf(-(self.pathloss_ref_db + 10.0 * exponent * distance.log10()) / 10.0)
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// One discrete phase index per group; index `q` stands for the angle `2πq/L`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseConfig(Vec<usize>);

impl PhaseConfig {
    pub fn new(indices: Vec<usize>, levels: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&q| q >= levels) {
            return Err(Error::InvalidConfig(format!(
                "phase index {bad} outside 0..{levels}"
            )));
        }
        Ok(Self(indices))
    }

    pub fn zeros(groups: usize) -> Self {
        Self(vec![0; groups])
    }

    /// Decodes a joint index with the first group as the most significant digit,
    /// so ascending joint indices enumerate configurations lexicographically.
    pub fn from_index(mut index: usize, groups: usize, levels: usize) -> Self {
        let mut indices = vec![0; groups];
        for slot in indices.iter_mut().rev() {
            *slot = index % levels;
            index /= levels;
        }
        Self(indices)
    }

    pub fn to_index(&self, levels: usize) -> usize {
        self.0.iter().fold(0, |acc, &q| acc * levels + q)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn indices_mut(&mut self) -> &mut [usize] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn angle(index: usize, levels: usize) -> f64 {
        2.0 * PI * index as f64 / levels as f64
    }

    pub fn angles(&self, levels: usize) -> Vec<f64> {
        self.0.iter().map(|&q| Self::angle(q, levels)).collect()
    }
}

impl From<PhaseConfig> for Vec<usize> {
    fn from(p: PhaseConfig) -> Self {
        p.0
    }
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `g_bs_ris[n][m]`: RIS element `n`, BS antenna `m`.
    pub g_bs_ris: Vec<Vec<C64>>,
    /// `h_ris_user[k][n]`.
    pub h_ris_user: Vec<Vec<C64>>,
    pub user_distances: Vec<f64>,
    pub pathloss_bs_ris: f64,
    /// One linear gain per user.
    pub pathloss_ris_user: Vec<f64>,
}

impl ChannelRealization {
    pub fn n_elements(&self) -> usize {
        self.g_bs_ris.len()
    }

    pub fn m_antennas(&self) -> usize {
        self.g_bs_ris.first().map_or(0, Vec::len)
    }

    pub fn k_users(&self) -> usize {
        self.h_ris_user.len()
    }

    /// Keeps only the listed users, in the given order.
    pub fn select_users(&self, users: &[usize]) -> Self {
        Self {
            g_bs_ris: self.g_bs_ris.clone(),
            h_ris_user: users.iter().map(|&u| self.h_ris_user[u].clone()).collect(),
            user_distances: users.iter().map(|&u| self.user_distances[u]).collect(),
            pathloss_bs_ris: self.pathloss_bs_ris,
            pathloss_ris_user: users.iter().map(|&u| self.pathloss_ris_user[u]).collect(),
        }
    }

    fn check_finite(&self) -> Result<()> {
        let finite = |c: &C64| c.re.is_finite() && c.im.is_finite();
        let ok = self.g_bs_ris.iter().flatten().all(finite)
            && self.h_ris_user.iter().flatten().all(finite);
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite("channel realization"))
        }
    }
}

/// Line-of-sight parts of a realization before Rician mixing and path loss.
#[derive(Debug, Clone)]
pub struct LosComponents {
    pub g_bs_ris: Vec<Vec<C64>>,
    pub h_ris_user: Vec<Vec<C64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    pub sum_rate: f64,
    pub per_user_rates: Vec<f64>,
}

impl RateResult {
    fn from_rates(per_user_rates: Vec<f64>) -> Self {
        Self {
            sum_rate: per_user_rates.iter().sum(),
            per_user_rates,
        }
    }
}

/// Half-wavelength uniform linear array response.
fn steering(len: usize, angle: f64) -> Vec<C64> {
    let spatial = PI * angle.sin();
    (0..len)
        .map(|i| C64::from_polar(1.0, spatial * i as f64))
        .collect()
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn sample_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<ChannelRealization> {
    sample_channels_detailed(cfg, rng).map(|(real, _)| real)
}

/// Same draw as [`sample_channels`], also returning the unscaled LoS terms.
pub fn sample_channels_detailed<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<(ChannelRealization, LosComponents)> {
    cfg.validate()?;
    let (m, k, n) = (cfg.m_antennas, cfg.k_users, cfg.n_elements);
    let los_weight = (cfg.rician_k / (cfg.rician_k + 1.0)).sqrt();
    let nlos_weight = (1.0 / (cfg.rician_k + 1.0)).sqrt();

    let span = cfg.d_ris_user_max - cfg.d_ris_user_min;
    let user_distances: Vec<f64> = (0..k)
        .map(|_| cfg.d_ris_user_min + span * rng.random::<f64>())
        .collect();
    let pathloss_bs_ris = cfg.pathloss(cfg.d_bs_ris, cfg.pathloss_exp_bs_ris);
    let pathloss_ris_user: Vec<f64> = user_distances
        .iter()
        .map(|&d| cfg.pathloss(d, cfg.pathloss_exp_ris_user))
        .collect();

    let departure = rng.random::<f64>() * 2.0 * PI;
    let arrival = rng.random::<f64>() * 2.0 * PI;
    let a_bs = steering(m, departure);
    let a_ris = steering(n, arrival);
    let los_g: Vec<Vec<C64>> = a_ris
        .iter()
        .map(|ar| a_bs.iter().map(|ab| ar * ab.conj()).collect())
        .collect();
    let scale_g = pathloss_bs_ris.sqrt();
    let g_bs_ris = los_g
        .iter()
        .map(|row| {
            row.iter()
                .map(|&los| scale_g * (los_weight * los + nlos_weight * complex_gaussian(rng)))
                .collect()
        })
        .collect();

    let mut los_h = Vec::with_capacity(k);
    let mut h_ris_user = Vec::with_capacity(k);
    for user in 0..k {
        let los = steering(n, rng.random::<f64>() * 2.0 * PI);
        let scale = pathloss_ris_user[user].sqrt();
        h_ris_user.push(
            los.iter()
                .map(|&l| scale * (los_weight * l + nlos_weight * complex_gaussian(rng)))
                .collect(),
        );
        los_h.push(los);
    }

    Ok((
        ChannelRealization {
            g_bs_ris,
            h_ris_user,
            user_distances,
            pathloss_bs_ris,
            pathloss_ris_user,
        },
        LosComponents {
            g_bs_ris: los_g,
            h_ris_user: los_h,
        },
    ))
}

fn group_size_for(real: &ChannelRealization, groups: usize) -> Result<usize> {
    let n = real.n_elements();
    if groups == 0 || n % groups != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{groups} phase groups do not tile {n} elements"
        )));
    }
    if real.h_ris_user.iter().any(|h| h.len() != n) {
        return Err(Error::DimensionMismatch(
            "user channel length differs from element count".into(),
        ));
    }
    Ok(n / groups)
}

/// Per-user effective channels `Σ_n conj(h_kn) e^{jθ(n)} g_n`, one length-M row
/// per user. The group size is implied by the phase vector length.
pub fn effective_channels(
    real: &ChannelRealization,
    phase: &PhaseConfig,
    levels: usize,
) -> Result<Vec<Vec<C64>>> {
    effective_channels_masked(real, phase, levels, None)
}

/// As [`effective_channels`]; groups whose mask entry is `false` reflect nothing.
pub fn effective_channels_masked(
    real: &ChannelRealization,
    phase: &PhaseConfig,
    levels: usize,
    mask: Option<&[bool]>,
) -> Result<Vec<Vec<C64>>> {
    let group_size = group_size_for(real, phase.len())?;
    if let Some(mask) = mask {
        if mask.len() != phase.len() {
            return Err(Error::DimensionMismatch("mask length differs from group count".into()));
        }
    }
    let m = real.m_antennas();
    let phasors: Vec<C64> = phase
        .angles(levels)
        .into_iter()
        .enumerate()
        .map(|(g, a)| match mask {
            Some(mask) if !mask[g] => C64::new(0.0, 0.0),
            _ => C64::from_polar(1.0, a),
        })
        .collect();
    Ok(real
        .h_ris_user
        .iter()
        .map(|h| {
            let mut out = vec![C64::new(0.0, 0.0); m];
            for (n, (hn, row)) in h.iter().zip(&real.g_bs_ris).enumerate() {
                let coeff = hn.conj() * phasors[n / group_size];
                for (o, g) in out.iter_mut().zip(row) {
                    *o += coeff * g;
                }
            }
            out
        })
        .collect())
}

pub fn sum_rate(real: &ChannelRealization, phase: &PhaseConfig, cfg: &SystemConfig) -> Result<RateResult> {
    check_dims(real, cfg)?;
    real.check_finite()?;
    let h = effective_channels(real, phase, cfg.levels())?;
    zf_rates(&h, cfg.tx_power_w(), cfg.noise_w())
}

fn check_dims(real: &ChannelRealization, cfg: &SystemConfig) -> Result<()> {
    if real.n_elements() != cfg.n_elements
        || real.m_antennas() != cfg.m_antennas
        || real.k_users() != cfg.k_users
    {
        return Err(Error::DimensionMismatch(format!(
            "realization is {}x{} with {} users, config expects {}x{} with {}",
            real.n_elements(),
            real.m_antennas(),
            real.k_users(),
            cfg.n_elements,
            cfg.m_antennas,
            cfg.k_users
        )));
    }
    Ok(())
}

/// Zero-forcing precoder for the K×M effective channel `h`: columns of
/// `Hᴴ(HHᴴ)⁻¹`, each normalized to unit power. Returns the M×K precoder and
/// whether ridge regularization was needed.
pub fn zf_precoder(h: &[Vec<C64>]) -> Result<(DMatrix<C64>, bool)> {
    let k = h.len();
    let m = h.first().map_or(0, Vec::len);
    if h.iter().any(|row| row.len() != m) {
        return Err(Error::DimensionMismatch("ragged effective channel".into()));
    }
    if m < k {
        return Err(Error::DimensionMismatch(format!(
            "zero-forcing needs at least as many antennas ({m}) as users ({k})"
        )));
    }
    if h.iter().flatten().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::NonFinite("effective channel"));
    }
    let hm = DMatrix::from_fn(k, m, |r, c| h[r][c]);
    let mut gram = &hm * hm.adjoint();
    let mean_diag = (0..k).map(|i| gram[(i, i)].re).sum::<f64>() / k.max(1) as f64;
    if k == 0 || mean_diag == 0.0 {
        return Ok((DMatrix::zeros(m, k), true));
    }

    let sv = hm.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let mut regularized = smin <= 0.0 || smax / smin > ZF_CONDITION_LIMIT;
    if regularized {
        for i in 0..k {
            gram[(i, i)] += C64::new(ZF_RIDGE * mean_diag, 0.0);
        }
    }
    let solved = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&hm),
        None => {
            regularized = true;
            for i in 0..k {
                gram[(i, i)] += C64::new(ZF_RIDGE * mean_diag, 0.0);
            }
            gram.cholesky()
                .ok_or(Error::NonFinite("zero-forcing Gram matrix"))?
                .solve(&hm)
        }
    };
    let mut w = solved.adjoint();
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= C64::new(norm, 0.0);
        }
    }
    Ok((w, regularized))
}

/// Rates under zero-forcing with the total power split equally across users.
pub fn zf_rates(h: &[Vec<C64>], total_power: f64, noise: f64) -> Result<RateResult> {
    let k = h.len();
    if k == 0 {
        return Ok(RateResult::from_rates(Vec::new()));
    }
    let (w, _) = zf_precoder(h)?;
    let per_user = total_power / k as f64;
    let rates = h
        .iter()
        .enumerate()
        .map(|(user, row)| {
            let signal: C64 = row.iter().enumerate().map(|(m, c)| c * w[(m, user)]).sum();
            (1.0 + per_user * signal.norm_sqr() / noise).log2()
        })
        .collect();
    Ok(RateResult::from_rates(rates))
}

/// Sum-rate evaluator for one realization with the per-group cascaded channels
/// precomputed, so each evaluation costs O(K·G·M) plus a K×K inverse.
#[derive(Debug, Clone)]
pub struct RateObjective {
    /// `cascade[k][g][m]`.
    cascade: Vec<Vec<Vec<C64>>>,
    phasors: Vec<C64>,
    groups: usize,
    levels: usize,
    m: usize,
    total_power: f64,
    noise: f64,
}

impl RateObjective {
    pub fn new(real: &ChannelRealization, cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        Self::with_groups(real, cfg.groups(), cfg.levels(), cfg.tx_power_w(), cfg.noise_w())
    }

    /// Builds an evaluator without a full [`SystemConfig`]; the user count is
    /// taken from the realization.
    pub fn with_groups(
        real: &ChannelRealization,
        groups: usize,
        levels: usize,
        total_power: f64,
        noise: f64,
    ) -> Result<Self> {
        real.check_finite()?;
        let group_size = group_size_for(real, groups)?;
        let m = real.m_antennas();
        if real.k_users() > m {
            return Err(Error::DimensionMismatch(format!(
                "{} users exceed {m} antennas",
                real.k_users()
            )));
        }
        let cascade = real
            .h_ris_user
            .iter()
            .map(|h| {
                (0..groups)
                    .map(|g| {
                        let mut acc = vec![C64::new(0.0, 0.0); m];
                        for n in g * group_size..(g + 1) * group_size {
                            let coeff = h[n].conj();
                            for (a, x) in acc.iter_mut().zip(&real.g_bs_ris[n]) {
                                *a += coeff * x;
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        let phasors = (0..levels)
            .map(|q| C64::from_polar(1.0, PhaseConfig::angle(q, levels)))
            .collect();
        Ok(Self {
            cascade,
            phasors,
            groups,
            levels,
            m,
            total_power,
            noise,
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn k_users(&self) -> usize {
        self.cascade.len()
    }

    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    /// Cascaded channel of group `g` seen by user `k`, length M.
    pub fn cascade(&self, k: usize, g: usize) -> &[C64] {
        &self.cascade[k][g]
    }

    pub fn effective(&self, indices: &[usize], mask: Option<&[bool]>) -> Vec<Vec<C64>> {
        debug_assert_eq!(indices.len(), self.groups);
        self.cascade
            .iter()
            .map(|per_group| {
                let mut out = vec![C64::new(0.0, 0.0); self.m];
                for (g, (c, &q)) in per_group.iter().zip(indices).enumerate() {
                    if mask.is_some_and(|mask| !mask[g]) {
                        continue;
                    }
                    let ph = self.phasors[q];
                    for (o, x) in out.iter_mut().zip(c) {
                        *o += ph * x;
                    }
                }
                out
            })
            .collect()
    }

    pub fn rates(&self, indices: &[usize], mask: Option<&[bool]>) -> RateResult {
        zf_rates(&self.effective(indices, mask), self.total_power, self.noise)
            .expect("dimensions fixed at construction")
    }

    pub fn rates_with_power(&self, indices: &[usize], total_power: f64) -> RateResult {
        zf_rates(&self.effective(indices, None), total_power, self.noise)
            .expect("dimensions fixed at construction")
    }

    /// Sum-rate of a configuration, bits/s/Hz.
    pub fn value(&self, indices: &[usize]) -> f64 {
        self.rates(indices, None).sum_rate
    }

    pub fn value_masked(&self, indices: &[usize], mask: &[bool]) -> f64 {
        self.rates(indices, Some(mask)).sum_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    /// Mean of |h|² over all entries, linear.
    pub mean_power: f64,
    /// Mean configured path loss over the same entries, linear.
    pub configured_pathloss: f64,
    /// Mean of |h|²/PL, which is 1 for a correctly scaled link.
    pub power_ratio: f64,
    /// Moment-based K-factor estimate on the path-loss-normalized entries.
    pub k_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub samples: usize,
    pub bs_ris: LinkStats,
    pub ris_user: LinkStats,
}

#[derive(Default)]
struct MomentAccumulator {
    count: f64,
    power: f64,
    pathloss: f64,
    m2: f64,
    m4: f64,
}

impl MomentAccumulator {
    fn push(&mut self, h: C64, pathloss: f64) {
        let p = h.norm_sqr();
        let normalized = p / pathloss;
        self.count += 1.0;
        self.power += p;
        self.pathloss += pathloss;
        self.m2 += normalized;
        self.m4 += normalized * normalized;
    }

    fn finish(&self) -> LinkStats {
        let omega = self.m2 / self.count;
        let mu4 = self.m4 / self.count;
        // |s|^4 = 2Ω² − E|h|⁴ for a constant-modulus LoS term plus complex Gaussian scatter.
        let los_power = (2.0 * omega * omega - mu4).max(0.0).sqrt().min(omega);
        let scatter = omega - los_power;
        let k_factor = if scatter > 0.0 { los_power / scatter } else { f64::INFINITY };
        LinkStats {
            mean_power: self.power / self.count,
            configured_pathloss: self.pathloss / self.count,
            power_ratio: omega,
            k_factor,
        }
    }
}

/// Monte-Carlo check of the channel model over `n_samples` realizations drawn
/// from `cfg.seed`.
pub fn channel_stats(cfg: &SystemConfig, n_samples: usize) -> Result<ChannelStats> {
    if n_samples < 1000 {
        return Err(Error::InvalidConfig(format!(
            "channel_stats needs at least 1000 samples, got {n_samples}"
        )));
    }
    let mut rng = crate::seeded_rng(cfg.seed);
    let mut bs_ris = MomentAccumulator::default();
    let mut ris_user = MomentAccumulator::default();
    for _ in 0..n_samples {
        let real = sample_channels(cfg, &mut rng)?;
        for &h in real.g_bs_ris.iter().flatten() {
            bs_ris.push(h, real.pathloss_bs_ris);
        }
        for (row, &pl) in real.h_ris_user.iter().zip(&real.pathloss_ris_user) {
            for &h in row {
                ris_user.push(h, pl);
            }
        }
    }
    Ok(ChannelStats {
        samples: n_samples,
        bs_ris: bs_ris.finish(),
        ris_user: ris_user.finish(),
    })
}
