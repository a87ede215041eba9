//! Seeded regime-switching multichannel sensor data with labeled anomalies.
//!
//! Every channel is an AR(1) noise process riding on a piecewise-constant
//! level. At each regime shift all levels step by `±shift_magnitude_sigma ·
//! noise_sigma`. A subset of the shifts open an anomaly interval during which
//! some channels see inflated innovation variance plus a linear drift.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use super::frame::TimeSeriesFrame;
use super::noc::{label_from_noc, NocIntervals};
use crate::error::{Error, Result};
use crate::kvtext::Document;
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_channels: usize,
    pub n_regime_shifts: usize,
    pub anomaly_fraction: f64,
    pub noise_sigma: f64,
    pub shift_magnitude_sigma: f64,
    pub seed: u64,
    /// Number of anomaly intervals (capped by the number of shifts).
    pub n_anomaly_intervals: usize,
    pub cadence_secs: i64,
    pub start_epoch: i64,
    /// AR(1) coefficient of the per-channel noise.
    pub ar_coef: f64,
    /// Innovation standard-deviation multiplier inside anomalies.
    pub anomaly_noise_scale: f64,
    /// Total drift over an anomaly interval, in units of `noise_sigma`.
    pub anomaly_drift_sigma: f64,
    /// Fraction of channels affected by each anomaly.
    pub anomaly_channel_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 50_000,
            n_channels: 10,
            n_regime_shifts: 24,
            anomaly_fraction: 0.0156,
            noise_sigma: 1.0,
            shift_magnitude_sigma: 3.0,
            seed: 0,
            n_anomaly_intervals: 8,
            cadence_secs: 120,
            start_epoch: 1_700_000_000,
            ar_coef: 0.5,
            anomaly_noise_scale: 1.6,
            anomaly_drift_sigma: 2.0,
            anomaly_channel_fraction: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.n_samples < 1 || self.n_channels < 1 {
            return bad("n_samples and n_channels must be >= 1");
        }
        if !(0.0..0.5).contains(&self.anomaly_fraction) {
            return bad("anomaly_fraction must lie in [0, 0.5)");
        }
        if !(self.noise_sigma > 0.0) || !(self.shift_magnitude_sigma > 0.0) {
            return bad("noise_sigma and shift_magnitude_sigma must be > 0");
        }
        if !(self.ar_coef.abs() < 1.0) {
            return bad("ar_coef must satisfy |ar_coef| < 1");
        }
        if !(self.anomaly_noise_scale > 0.0) || !(0.0..=1.0).contains(&self.anomaly_channel_fraction) {
            return bad("anomaly_noise_scale must be > 0 and anomaly_channel_fraction in [0, 1]");
        }
        if self.n_regime_shifts >= self.n_samples {
            return bad("more regime shifts than samples");
        }
        if self.cadence_secs < 1 {
            return bad("cadence_secs must be >= 1");
        }
        Ok(())
    }

    pub fn to_document(&self) -> Document {
        let mut d = Document::new();
        d.push("n_samples", self.n_samples.to_string());
        d.push("n_channels", self.n_channels.to_string());
        d.push("n_regime_shifts", self.n_regime_shifts.to_string());
        d.push_f64("anomaly_fraction", self.anomaly_fraction);
        d.push_f64("noise_sigma", self.noise_sigma);
        d.push_f64("shift_magnitude_sigma", self.shift_magnitude_sigma);
        d.push("seed", self.seed.to_string());
        d.push("n_anomaly_intervals", self.n_anomaly_intervals.to_string());
        d.push("cadence_secs", self.cadence_secs.to_string());
        d.push("start_epoch", self.start_epoch.to_string());
        d.push_f64("ar_coef", self.ar_coef);
        d.push_f64("anomaly_noise_scale", self.anomaly_noise_scale);
        d.push_f64("anomaly_drift_sigma", self.anomaly_drift_sigma);
        d.push_f64("anomaly_channel_fraction", self.anomaly_channel_fraction);
        d
    }

    /// Reads overrides from a `synth.`-style section; absent keys keep defaults.
    pub fn from_document(doc: &Document) -> Result<Self> {
        let mut c = SynthConfig::default();
        macro_rules! set {
            ($field:ident, parsed) => {
                if let Some(v) = doc.parsed(stringify!($field))? {
                    c.$field = v;
                }
            };
            ($field:ident, float) => {
                if let Some(v) = doc.f64(stringify!($field))? {
                    c.$field = v;
                }
            };
        }
        set!(n_samples, parsed);
        set!(n_channels, parsed);
        set!(n_regime_shifts, parsed);
        set!(anomaly_fraction, float);
        set!(noise_sigma, float);
        set!(shift_magnitude_sigma, float);
        set!(seed, parsed);
        set!(n_anomaly_intervals, parsed);
        set!(cadence_secs, parsed);
        set!(start_epoch, parsed);
        set!(ar_coef, float);
        set!(anomaly_noise_scale, float);
        set!(anomaly_drift_sigma, float);
        set!(anomaly_channel_fraction, float);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Labeled frame (`true` = normal).
    pub frame: TimeSeriesFrame,
    pub noc: NocIntervals,
    /// Sample indices of every regime shift, ascending.
    pub change_points: Vec<usize>,
    /// Half-open sample ranges of the injected anomalies.
    pub anomalies: Vec<(usize, usize)>,
}

/// Stratified shift placement: one shift per equal-width stratum, uniformly
/// inside its middle half, so shifts are spread and never collide.
fn place_shifts<R: Rng>(n: usize, count: usize, rng: &mut R) -> Vec<usize> {
    let width = n as f64 / count as f64;
    (0..count)
        .map(|j| {
            let lo = (j as f64 + 0.25) * width;
            let hi = ((j as f64 + 0.75) * width).max(lo + 1.0);
            let idx = rng.random_range(lo..hi).floor() as usize;
            idx.clamp(1, n - 1)
        })
        .collect()
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let n = config.n_samples;
    let n_ch = config.n_channels;
    let mut rng = seed::rng(config.seed);

    let mut shifts = if config.n_regime_shifts > 0 {
        place_shifts(n, config.n_regime_shifts, &mut rng)
    } else {
        Vec::new()
    };
    shifts.dedup();

    let target_anomalous = (config.anomaly_fraction * n as f64).round() as usize;
    let mut anomalies: Vec<(usize, usize)> = Vec::new();
    if target_anomalous > 0 {
        if shifts.is_empty() {
            return Err(Error::Config(
                "synth: anomalies start at regime shifts, but n_regime_shifts = 0".into(),
            ));
        }
        let n_anom = config.n_anomaly_intervals.clamp(1, shifts.len());
        let len = ((target_anomalous as f64) / n_anom as f64).round().max(1.0) as usize;
        for j in 0..n_anom {
            let s = shifts[(j * 2 + 1) * shifts.len() / (2 * n_anom)];
            anomalies.push((s, s + len));
        }
        for w in anomalies.windows(2) {
            // Keep at least one normal sample between intervals.
            if w[1].0 <= w[0].1 {
                return Err(Error::Config(format!(
                    "synth: anomaly intervals [{}, {}) and [{}, {}) would overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        if let Some(&(_, end)) = anomalies.last() {
            if end > n {
                return Err(Error::Config(format!(
                    "synth: anomaly interval ends at {end}, beyond series length {n}"
                )));
            }
        }
    }

    // Positive baselines, as physical sensors read. Each shift moves every
    // level by one step of random sign, reflected so a level never wanders
    // more than three steps from its baseline.
    let base: Vec<f64> = (0..n_ch)
        .map(|c| config.noise_sigma * (20.0 + 5.0 * c as f64))
        .collect();
    let step = config.shift_magnitude_sigma * config.noise_sigma;
    let mut offset = vec![0.0; n_ch];
    let steps: Vec<Vec<f64>> = shifts
        .iter()
        .map(|_| {
            offset
                .iter_mut()
                .map(|o| {
                    let mut s = if rng.random_bool(0.5) { step } else { -step };
                    if (*o + s).abs() > 3.0 * step + 1e-9 {
                        s = -s;
                    }
                    *o += s;
                    s
                })
                .collect()
        })
        .collect();

    // Affected channels and drift direction per anomaly.
    let n_affected = ((config.anomaly_channel_fraction * n_ch as f64).ceil() as usize).min(n_ch);
    let affected: Vec<Vec<(usize, f64)>> = anomalies
        .iter()
        .map(|_| {
            let mut chans: Vec<usize> = sample(&mut rng, n_ch, n_affected).into_vec();
            chans.sort_unstable();
            chans
                .into_iter()
                .map(|c| (c, if rng.random_bool(0.5) { 1.0 } else { -1.0 }))
                .collect()
        })
        .collect();

    let innov_sd = config.noise_sigma * (1.0 - config.ar_coef * config.ar_coef).sqrt();
    let mut columns = vec![Vec::with_capacity(n); n_ch];
    let mut noise = vec![0.0; n_ch];
    for (c, col) in columns.iter_mut().enumerate() {
        noise[c] = config.noise_sigma * rng.sample::<f64, _>(StandardNormal);
        col.push(0.0);
    }
    let mut level = base.clone();
    let mut next_shift = 0;
    let mut anomaly_idx = 0;
    for t in 0..n {
        if next_shift < shifts.len() && shifts[next_shift] == t {
            for (l, s) in level.iter_mut().zip(&steps[next_shift]) {
                *l += s;
            }
            next_shift += 1;
        }
        while anomaly_idx < anomalies.len() && anomalies[anomaly_idx].1 <= t {
            anomaly_idx += 1;
        }
        let active = anomalies
            .get(anomaly_idx)
            .filter(|&&(s, e)| s <= t && t < e)
            .map(|&(s, e)| (anomaly_idx, (t - s) as f64 / (e - s) as f64));
        for c in 0..n_ch {
            let eps: f64 = rng.sample(StandardNormal);
            let mut scale = 1.0;
            let mut drift = 0.0;
            if let Some((a, progress)) = active {
                if let Some(&(_, dir)) = affected[a].iter().find(|(ch, _)| *ch == c) {
                    scale = config.anomaly_noise_scale;
                    drift = dir * config.anomaly_drift_sigma * config.noise_sigma * progress;
                }
            }
            if t > 0 {
                noise[c] = config.ar_coef * noise[c] + scale * innov_sd * eps;
            }
            let v = level[c] + noise[c] + drift;
            if t == 0 {
                columns[c][0] = v;
            } else {
                columns[c].push(v);
            }
        }
    }

    let timestamps: Vec<i64> = (0..n as i64)
        .map(|i| config.start_epoch + i * config.cadence_secs)
        .collect();
    let channels: Vec<String> = (0..n_ch).map(|c| format!("ch{c:02}")).collect();

    let mut noc_pairs = Vec::new();
    let mut cursor = 0usize;
    for &(s, e) in anomalies.iter().chain(std::iter::once(&(n, n))) {
        if s > cursor {
            let (a, b) = (timestamps[cursor], timestamps[s - 1]);
            if b > a {
                noc_pairs.push((a, b));
            } else if config.cadence_secs >= 2 {
                // A one-sample normal run still needs a non-empty interval.
                noc_pairs.push((a, a + config.cadence_secs / 2));
            } else {
                return Err(Error::Config(format!(
                    "synth: single-sample normal run at {cursor} cannot be expressed at 1 s cadence"
                )));
            }
        }
        cursor = e;
    }
    let noc = NocIntervals::new(noc_pairs)?;
    let frame = TimeSeriesFrame::new(timestamps, channels, columns)?;
    let frame = label_from_noc(frame, &noc);
    Ok(SyntheticData {
        frame,
        noc,
        change_points: shifts,
        anomalies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anomaly_fraction_is_respected() {
        let data = generate_synthetic(&SynthConfig {
            seed: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let anomalous = data.frame.labels().unwrap().iter().filter(|l| !**l).count();
        assert!((700..=860).contains(&anomalous), "{anomalous}");
        assert!(data.change_points.iter().all(|&c| c < 50_000));
        for &(s, _) in &data.anomalies {
            assert!(data.change_points.contains(&s));
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = SynthConfig {
            n_samples: 3000,
            seed: 11,
            ..SynthConfig::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SynthConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.frame, c.frame);
    }

    #[test]
    fn stationary_edge_case() {
        let data = generate_synthetic(&SynthConfig {
            n_samples: 2000,
            n_regime_shifts: 0,
            anomaly_fraction: 0.0,
            ..SynthConfig::default()
        })
        .unwrap();
        assert!(data.change_points.is_empty());
        assert!(data.frame.labels().unwrap().iter().all(|&l| l));
        assert_eq!(data.noc.len(), 1);
    }

    #[test]
    fn rejects_anomalies_without_shifts() {
        let err = generate_synthetic(&SynthConfig {
            n_samples: 2000,
            n_regime_shifts: 0,
            ..SynthConfig::default()
        });
        assert!(err.is_err());
    }

    #[test]
    fn rejects_overlong_anomalies() {
        let err = generate_synthetic(&SynthConfig {
            n_samples: 200,
            n_regime_shifts: 4,
            anomaly_fraction: 0.45,
            n_anomaly_intervals: 1,
            ..SynthConfig::default()
        });
        assert!(err.is_err());
    }

    #[test]
    fn config_document_round_trip() {
        let cfg = SynthConfig {
            seed: 99,
            anomaly_fraction: 0.02,
            ..SynthConfig::default()
        };
        assert_eq!(SynthConfig::from_document(&cfg.to_document()).unwrap(), cfg);
    }
}
