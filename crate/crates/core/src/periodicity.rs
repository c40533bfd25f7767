// SPDX-License-Identifier: Apache-2.0

//! Periodogram-based detection of per-location activity periods.
//!
//! Each location gets an activity sequence over the observation span at
//! time-bin resolution. The unitary DFT of that sequence yields a
//! periodogram; coefficients whose power clears a threshold are dominant
//! frequencies, and coefficient `k` corresponds to period `N / k`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::event_log::{discretize, DiscretizedEvent, EventLog};

/// Per-time-slot usage of one location.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivitySequence {
    location: String,
    values: Vec<f64>,
}

impl ActivitySequence {
    pub fn new(location: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::param("activity sequence", "needs at least 2 slots"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param(
                "activity sequence",
                "values must be finite and non-negative",
            ));
        }
        Ok(ActivitySequence {
            location: location.into(),
            values,
        })
    }

    pub fn location(&self) -> &str {
        &self.location
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Unitary DFT, evaluated directly: `X_k = N^{-1/2} Σ_n a_n e^{-2πikn/N}`.
pub fn dft(values: &[f64]) -> Vec<Complex64> {
    let n = values.len();
    let scale = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &a) in values.iter().enumerate() {
                // reduce k*t mod n first so the angle stays small
                let phase = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
                acc += Complex64::from_polar(a, phase);
            }
            acc * scale
        })
        .collect()
}

/// Same transform as [`dft`], computed with an FFT.
pub fn fft(values: &[f64]) -> Vec<Complex64> {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&a| Complex64::new(a, 0.0)).collect();
    if n == 0 {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|x| *x *= scale);
    buf
}

#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    power: Vec<f64>,
    n: usize,
}

impl Periodogram {
    /// Power at coefficients `k = 0 ..= ceil((N-1)/2)`.
    pub fn power(&self) -> &[f64] {
        &self.power
    }

    /// Length of the source sequence.
    pub fn source_len(&self) -> usize {
        self.n
    }

    /// `N / k`, infinite for the DC coefficient.
    pub fn period_of(&self, k: usize) -> f64 {
        if k == 0 {
            f64::INFINITY
        } else {
            self.n as f64 / k as f64
        }
    }

    /// Coefficient with the largest non-DC power.
    pub fn peak(&self) -> Option<usize> {
        (1..self.power.len()).max_by(|&a, &b| {
            self.power[a]
                .partial_cmp(&self.power[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.cmp(&a))
        })
    }
}

pub fn periodogram_len(n: usize) -> usize {
    n.saturating_sub(1).div_ceil(2) + 1
}

pub fn periodogram(seq: &ActivitySequence) -> Periodogram {
    let n = seq.len();
    let coeffs = fft(seq.values());
    Periodogram {
        power: coeffs[..periodogram_len(n)]
            .iter()
            .map(Complex64::norm_sqr)
            .collect(),
        n,
    }
}

/// How the dominant-power cut-off is derived from a periodogram.
///
/// All policies are computed over the non-DC coefficients and are relative to
/// the spectrum's own scale, so multiplying a sequence by a positive constant
/// never changes which periods are selected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// `mean + z * std` of the non-DC power.
    MeanStd { z: f64 },
    /// `mean * ln(M / alpha)` over `M` non-DC coefficients. For a white-noise
    /// sequence the non-DC ordinates are approximately exponential with the
    /// spectrum mean as scale, so the chance that any of them clears this
    /// level is about `alpha`.
    FalseAlarm { alpha: f64 },
    /// Fixed fraction of the total non-DC power.
    EnergyFraction { fraction: f64 },
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::FalseAlarm { alpha: 0.01 }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdPolicy::MeanStd { z } => write!(f, "mean-std:{z}"),
            ThresholdPolicy::FalseAlarm { alpha } => write!(f, "false-alarm:{alpha}"),
            ThresholdPolicy::EnergyFraction { fraction } => write!(f, "energy:{fraction}"),
        }
    }
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    /// Accepts `mean-std:<z>`, `false-alarm:<alpha>` and `energy:<fraction>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::param("threshold", format!("`{s}`: {msg}"));
        let (name, value) = s.split_once(':').ok_or_else(|| bad("expected <policy>:<value>"))?;
        let v: f64 = value.trim().parse().map_err(|_| bad("value is not a number"))?;
        let policy = match name.trim() {
            "mean-std" => ThresholdPolicy::MeanStd { z: v },
            "false-alarm" => ThresholdPolicy::FalseAlarm { alpha: v },
            "energy" => ThresholdPolicy::EnergyFraction { fraction: v },
            _ => return Err(bad("unknown policy")),
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ThresholdPolicy::MeanStd { z } => z.is_finite() && z >= 0.0,
            ThresholdPolicy::FalseAlarm { alpha } => alpha > 0.0 && alpha < 1.0,
            ThresholdPolicy::EnergyFraction { fraction } => fraction > 0.0 && fraction < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("threshold", format!("{self} out of range")))
        }
    }

    fn threshold(&self, non_dc: &[f64]) -> f64 {
        let m = non_dc.len() as f64;
        let mean = non_dc.iter().sum::<f64>() / m;
        match *self {
            ThresholdPolicy::MeanStd { z } => {
                let var = non_dc.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / m;
                mean + z * var.sqrt()
            }
            ThresholdPolicy::FalseAlarm { alpha } => mean * (m / alpha).ln().max(1.0),
            ThresholdPolicy::EnergyFraction { fraction } => fraction * mean * m,
        }
    }
}

/// Relative level below which a power entry counts as numerical zero.
const POWER_FLOOR: f64 = 1e-12;

/// Indices `k >= 1` of the coefficients whose power exceeds the policy
/// threshold and whose period `round(N / k)` lies in `[2, N]`.
pub fn dominant_indices(p: &Periodogram, policy: ThresholdPolicy) -> Vec<usize> {
    if p.power.len() < 2 {
        return Vec::new();
    }
    let floor = POWER_FLOOR * p.power.iter().sum::<f64>();
    let non_dc: Vec<f64> = p.power[1..]
        .iter()
        .map(|&x| if x <= floor { 0.0 } else { x })
        .collect();
    let threshold = policy.threshold(&non_dc);
    (1..p.power.len())
        .filter(|&k| non_dc[k - 1] > threshold)
        .filter(|&k| (2..=p.n).contains(&period_index(p.n, k)))
        .collect()
}

fn period_index(n: usize, k: usize) -> usize {
    (n as f64 / k as f64).round() as usize
}

/// Periods `round(N / k)` of the dominant coefficients.
pub fn dominant_periods(p: &Periodogram, policy: ThresholdPolicy) -> BTreeSet<usize> {
    dominant_indices(p, policy)
        .into_iter()
        .map(|k| period_index(p.n, k))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicityConfig {
    pub policy: ThresholdPolicy,
    /// A bin is high-activity when its count is at least `theta` times the
    /// location's busiest bin.
    pub theta: f64,
    /// Fold the sequence onto one day (`N = time_bins`) instead of using the
    /// full observation span.
    pub fold_daily: bool,
    /// Use 0/1 usage indicators per slot instead of counts.
    pub binary: bool,
}

impl Default for PeriodicityConfig {
    fn default() -> Self {
        PeriodicityConfig {
            policy: ThresholdPolicy::default(),
            theta: 0.5,
            fold_daily: false,
            binary: false,
        }
    }
}

impl PeriodicityConfig {
    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::param("theta", format!("{} not in (0, 1]", self.theta)));
        }
        Ok(())
    }
}

/// Binary location x time-bin relation, plus the periods found per location.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicRelation {
    pairs: BTreeSet<(usize, usize)>,
    periods: Vec<Option<BTreeSet<usize>>>,
    time_bins: usize,
}

impl PeriodicRelation {
    pub fn empty(n_locations: usize, time_bins: usize) -> Self {
        PeriodicRelation {
            pairs: BTreeSet::new(),
            periods: vec![Some(BTreeSet::new()); n_locations],
            time_bins,
        }
    }

    pub fn from_pairs(
        n_locations: usize,
        time_bins: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let pairs: BTreeSet<(usize, usize)> = pairs.into_iter().collect();
        assert!(pairs.iter().all(|&(l, b)| l < n_locations && b < time_bins));
        PeriodicRelation {
            pairs,
            periods: vec![None; n_locations],
            time_bins,
        }
    }

    /// `(location index, bin)` pairs.
    pub fn pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.pairs
    }

    pub fn contains(&self, location: usize, bin: usize) -> bool {
        self.pairs.contains(&(location, bin))
    }

    /// Dominant periods per location; `None` when the location was skipped.
    pub fn periods(&self) -> &[Option<BTreeSet<usize>>] {
        &self.periods
    }

    pub fn time_bins(&self) -> usize {
        self.time_bins
    }
}

/// Activity sequence of one location. Slots run from the first to the last
/// day present anywhere in the log.
pub fn activity_sequence(
    log: &EventLog,
    events: &[DiscretizedEvent],
    location: usize,
    cfg: &PeriodicityConfig,
) -> Vec<f64> {
    let bins = log.time_bins();
    let first_day = events.iter().map(|e| e.day).min().unwrap_or(0);
    let last_day = events.iter().map(|e| e.day).max().unwrap_or(0);
    let len = if cfg.fold_daily {
        bins
    } else {
        (last_day - first_day + 1) as usize * bins
    };
    let mut values = vec![0.0; len];
    for e in events.iter().filter(|e| e.location == location) {
        let slot = if cfg.fold_daily {
            e.bin
        } else {
            (e.day - first_day) as usize * bins + e.bin
        };
        if cfg.binary {
            values[slot] = 1.0;
        } else {
            values[slot] += 1.0;
        }
    }
    values
}

pub fn location_sequence(
    log: &EventLog,
    location: &str,
    cfg: &PeriodicityConfig,
) -> Result<ActivitySequence> {
    let idx = log.location_index(location).ok_or_else(|| Error::UnknownId {
        kind: "location",
        id: location.to_string(),
    })?;
    let events = discretize(log);
    ActivitySequence::new(location, activity_sequence(log, &events, idx, cfg))
}

/// Detects dominant periods per location and keeps `(location, bin)` pairs
/// for the high-activity bins of every location that has at least one.
pub fn periodic_relation(log: &EventLog, cfg: &PeriodicityConfig) -> Result<PeriodicRelation> {
    cfg.validate()?;
    let events = discretize(log);
    let bins = log.time_bins();
    let per_location: Vec<(Option<BTreeSet<usize>>, Vec<usize>)> = (0..log.locations().len())
        .into_par_iter()
        .map(|loc| {
            let values = activity_sequence(log, &events, loc, cfg);
            let observed = values.iter().filter(|&&v| v > 0.0).count();
            if values.len() < 2 || observed < 2 {
                warn!(
                    "location `{}` has {observed} observed slot(s); skipped for periodicity",
                    log.locations()[loc]
                );
                return (None, Vec::new());
            }
            let seq = ActivitySequence::new(log.locations()[loc].clone(), values)
                .expect("counts are non-negative");
            let periods = dominant_periods(&periodogram(&seq), cfg.policy);
            if periods.is_empty() {
                return (Some(periods), Vec::new());
            }
            let mut counts = vec![0usize; bins];
            for e in events.iter().filter(|e| e.location == loc) {
                counts[e.bin] += 1;
            }
            let peak = counts.iter().copied().max().unwrap_or(0) as f64;
            let active = (0..bins)
                .filter(|&b| counts[b] > 0 && counts[b] as f64 >= cfg.theta * peak)
                .collect();
            (Some(periods), active)
        })
        .collect();

    let mut pairs = BTreeSet::new();
    let mut periods = Vec::with_capacity(per_location.len());
    for (loc, (p, active)) in per_location.into_iter().enumerate() {
        pairs.extend(active.into_iter().map(|b| (loc, b)));
        periods.push(p);
    }
    Ok(PeriodicRelation {
        pairs,
        periods,
        time_bins: bins,
    })
}
