//! Signal features: band-limited differential entropy, log band energy,
//! per-channel statistics, and train-fitted normalization.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::numerics::{Matrix, Real};

/// Samples as named columns, optionally labelled per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FeatureMatrix<T> {
    pub data: Matrix<T>,
    pub names: Vec<String>,
    pub labels: Option<Vec<usize>>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(data: Matrix<T>, names: Vec<String>) -> Result<Self> {
        if names.len() != data.cols() {
            return dim_err(format!("{} names for {} columns", names.len(), data.cols()));
        }
        Ok(Self { data, names, labels: None })
    }

    /// Columns named `{prefix}0`, `{prefix}1`, ...
    pub fn with_prefix(data: Matrix<T>, prefix: &str) -> Self {
        let names = (0..data.cols()).map(|j| format!("{prefix}{j}")).collect();
        Self { data, names, labels: None }
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.data.rows() {
            return dim_err(format!("{} labels for {} rows", labels.len(), self.data.rows()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn cols(&self) -> usize {
        self.data.cols()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = self.names.clone();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.data.row_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.as_f64().to_string()).collect();
            if let Some(labels) = &self.labels {
                rec.push(labels[i].to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a headed CSV; a final column named `label` becomes the labels.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut names: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
        let has_label = names.last().is_some_and(|n| n == "label");
        if has_label {
            names.pop();
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut rows = 0;
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("row {}: bad number {s:?}", line + 1)))
            };
            for field in rec.iter().take(names.len()) {
                data.push(T::lit(parse(field)?));
            }
            if has_label {
                let v = parse(&rec[names.len()])?;
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Format(format!("row {}: bad label {v}", line + 1)));
                }
                labels.push(v as usize);
            }
            rows += 1;
        }
        let data = Matrix::from_vec(rows, names.len(), data)?;
        Ok(Self { data, names, labels: has_label.then_some(labels) })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Multichannel recording at a fixed sampling rate.
#[derive(Clone, Debug)]
pub struct SignalEpoch<T> {
    pub channels: Vec<Vec<T>>,
    pub sampling_rate: f64,
    pub channel_names: Vec<String>,
}

impl<T: Real> SignalEpoch<T> {
    pub fn new(channels: Vec<Vec<T>>, sampling_rate: f64) -> Result<Self> {
        if !(sampling_rate > 0.0) {
            return param_err(format!("sampling rate must be positive, got {sampling_rate}"));
        }
        if channels.is_empty() {
            return param_err("no channels");
        }
        if channels.iter().any(|c| c.len() != channels[0].len()) {
            return dim_err("channels differ in length");
        }
        let channel_names = (0..channels.len()).map(|i| format!("ch{i}")).collect();
        Ok(Self { channels, sampling_rate, channel_names })
    }

    pub fn samples(&self) -> usize {
        self.channels[0].len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl BandSpec {
    pub fn new(name: &str, low: f64, high: f64) -> Self {
        Self { name: name.into(), low, high }
    }
}

/// delta, theta, alpha, beta, gamma.
pub fn default_bands() -> Vec<BandSpec> {
    vec![
        BandSpec::new("delta", 1.0, 4.0),
        BandSpec::new("theta", 4.0, 8.0),
        BandSpec::new("alpha", 8.0, 14.0),
        BandSpec::new("beta", 14.0, 31.0),
        BandSpec::new("gamma", 31.0, 50.0),
    ]
}

pub const POWER_FLOOR: f64 = 1e-12;

/// Band powers per window, channel and band; `power[w][c][b]`.
fn band_powers<T: Real>(epoch: &SignalEpoch<T>, bands: &[BandSpec], window_seconds: f64) -> Result<Vec<Vec<Vec<T>>>> {
    let fs = epoch.sampling_rate;
    let nyquist = fs / 2.0;
    if bands.is_empty() {
        return param_err("no bands");
    }
    for b in bands {
        if !(b.low >= 0.0 && b.low < b.high) {
            return param_err(format!("band {}: need 0 <= low < high", b.name));
        }
        if b.high > nyquist + 1e-9 {
            return param_err(format!("band {} reaches {} Hz, above Nyquist {nyquist} Hz", b.name, b.high));
        }
    }
    let len = (window_seconds * fs).round() as usize;
    if !(window_seconds > 0.0) || len < 2 {
        return param_err("analysis window shorter than two samples");
    }
    let windows = epoch.samples() / len;
    if windows == 0 {
        return param_err(format!("epoch of {} samples is shorter than one {len}-sample window", epoch.samples()));
    }

    let hann: Vec<T> = (0..len)
        .map(|i| T::lit(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len - 1) as f64).cos()))
        .collect();
    let w_energy: T = hann.iter().map(|&w| w * w).sum();
    let norm = T::one() / (T::from_usize_lossy(len) * w_energy);
    let df = fs / len as f64;
    let half = len / 2;
    // one-sided bins with frequencies; DC and (even-length) Nyquist counted once
    let bins: Vec<(usize, f64, T)> = (0..=half)
        .map(|k| {
            let single = k == 0 || (len % 2 == 0 && k == half);
            (k, k as f64 * df, if single { T::one() } else { T::lit(2.0) })
        })
        .collect();
    let band_bins: Vec<Vec<(usize, T)>> = bands
        .iter()
        .map(|b| {
            let top_inclusive = (b.high - nyquist).abs() < 1e-9;
            bins.iter()
                .filter(|(_, f, _)| *f >= b.low && (*f < b.high || (top_inclusive && *f <= b.high)))
                .map(|&(k, _, m)| (k, m))
                .collect()
        })
        .collect();

    let fft = FftPlanner::<T>::new().plan_fft_forward(len);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); len];
    let mut out = Vec::with_capacity(windows);
    for w in 0..windows {
        let mut per_channel = Vec::with_capacity(epoch.channels.len());
        for ch in &epoch.channels {
            let frame = &ch[w * len..(w + 1) * len];
            for (slot, (&x, &h)) in buf.iter_mut().zip(frame.iter().zip(&hann)) {
                *slot = Complex::new(x * h, T::zero());
            }
            fft.process(&mut buf);
            let powers = band_bins
                .iter()
                .map(|bb| bb.iter().map(|&(k, m)| buf[k].norm_sqr() * m).sum::<T>() * norm)
                .collect();
            per_channel.push(powers);
        }
        out.push(per_channel);
    }
    Ok(out)
}

fn band_feature_matrix<T: Real>(
    epoch: &SignalEpoch<T>,
    bands: &[BandSpec],
    window_seconds: f64,
    what: &str,
    f: impl Fn(T) -> T,
) -> Result<FeatureMatrix<T>> {
    let powers = band_powers(epoch, bands, window_seconds)?;
    let floor = T::lit(POWER_FLOOR);
    let mut floored = 0usize;
    let cols = epoch.channels.len() * bands.len();
    let mut data = Vec::with_capacity(powers.len() * cols);
    for window in &powers {
        for channel in window {
            for &p in channel {
                let p = if p < floor {
                    floored += 1;
                    floor
                } else {
                    p
                };
                data.push(f(p));
            }
        }
    }
    if floored > 0 {
        log::warn!("{what}: {floored} band powers below {POWER_FLOOR:e}, floored");
    }
    let names = epoch
        .channel_names
        .iter()
        .flat_map(|c| bands.iter().map(move |b| format!("{c}_{}", b.name)))
        .collect();
    FeatureMatrix::new(Matrix::from_vec(powers.len(), cols, data)?, names)
}

/// Differential entropy `½·ln(2πe·σ²)` of each band-limited signal, one row
/// per non-overlapping Hann window.
pub fn de_band<T: Real>(epoch: &SignalEpoch<T>, bands: &[BandSpec], window_seconds: f64) -> Result<FeatureMatrix<T>> {
    let c = T::lit(2.0 * std::f64::consts::PI * std::f64::consts::E);
    band_feature_matrix(epoch, bands, window_seconds, "de_band", |p| T::lit(0.5) * (c * p).ln())
}

/// Natural log of the mean band energy per window.
pub fn log_band_energy<T: Real>(
    epoch: &SignalEpoch<T>,
    bands: &[BandSpec],
    window_seconds: f64,
) -> Result<FeatureMatrix<T>> {
    band_feature_matrix(epoch, bands, window_seconds, "log_band_energy", |p| p.ln())
}

pub const STAT_NAMES: [&str; 6] = ["max", "min", "mean", "std", "var", "sqsum"];

/// Max, min, mean, std, variance (N−1) and squared sum for every channel.
pub fn stat_features<T: Real>(epoch: &SignalEpoch<T>) -> Result<Vec<T>> {
    if epoch.samples() < 2 {
        return param_err("stat_features needs at least two samples per channel");
    }
    let n = T::from_usize_lossy(epoch.samples());
    let mut out = Vec::with_capacity(6 * epoch.channels.len());
    for ch in &epoch.channels {
        let max = ch.iter().copied().fold(T::neg_infinity(), T::max);
        let min = ch.iter().copied().fold(T::infinity(), T::min);
        let mean = ch.iter().copied().sum::<T>() / n;
        let var = ch.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one());
        let sq = ch.iter().map(|&x| x * x).sum::<T>();
        out.extend([max, min, mean, var.sqrt(), var, sq]);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    Zscore,
    Minmax,
}

/// Per-column affine map `(x − offset) / scale` fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Scaler<T> {
    pub mode: ScaleMode,
    pub offset: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Real> Scaler<T> {
    pub fn fit(train: &Matrix<T>, mode: ScaleMode) -> Result<Self> {
        let (n, d) = train.shape();
        if n == 0 {
            return param_err("cannot fit a scaler on zero rows");
        }
        let mut offset = Vec::with_capacity(d);
        let mut scale = Vec::with_capacity(d);
        let mut flat = 0usize;
        for j in 0..d {
            let col = train.column(j);
            let (o, s) = match mode {
                ScaleMode::Zscore => {
                    let mean = col.iter().copied().sum::<T>() / T::from_usize_lossy(n);
                    let dof = T::from_usize_lossy(n.max(2) - 1);
                    let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / dof;
                    (mean, var.sqrt())
                }
                ScaleMode::Minmax => {
                    let lo = col.iter().copied().fold(T::infinity(), T::min);
                    let hi = col.iter().copied().fold(T::neg_infinity(), T::max);
                    (lo, hi - lo)
                }
            };
            let s = if s > T::epsilon() * (T::one() + o.abs()) {
                s
            } else {
                flat += 1;
                T::one()
            };
            offset.push(o);
            scale.push(s);
        }
        if flat > 0 {
            log::warn!("normalize: {flat} zero-variance columns left unscaled");
        }
        Ok(Self { mode, offset, scale })
    }

    pub fn transform(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.offset.len() {
            return dim_err(format!("scaler fitted on {} columns, got {}", self.offset.len(), x.cols()));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, &o), &s) in out.row_mut(i).iter_mut().zip(&self.offset).zip(&self.scale) {
                *v = (*v - o) / s;
            }
        }
        Ok(out)
    }
}

/// Fits a scaler on `train` and applies it to `train` and each of `others`.
pub fn normalize<T: Real>(
    train: &Matrix<T>,
    others: &[&Matrix<T>],
    mode: ScaleMode,
) -> Result<(Matrix<T>, Vec<Matrix<T>>, Scaler<T>)> {
    let scaler = Scaler::fit(train, mode)?;
    let t = scaler.transform(train)?;
    let o = others.iter().map(|m| scaler.transform(m)).collect::<Result<_>>()?;
    Ok((t, o, scaler))
}

/// Clamps entries to `[0, 1]`, warning when anything moved.
pub fn clip_unit<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    let mut clipped = 0usize;
    let out = x.map(|v| {
        let c = v.max(T::zero()).min(T::one());
        if c != v {
            clipped += 1;
        }
        c
    });
    if clipped > 0 {
        log::warn!("{clipped} values outside [0, 1] clipped");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomStream;

    const HALF_LN_2PIE: f64 = 1.418_938_533_204_672_7;

    fn noise(seed: u64, n: usize, sigma: f64) -> Vec<f64> {
        let mut s = RandomStream::new(seed, 0);
        (0..n).map(|_| sigma * s.normal::<f64>()).collect()
    }

    fn full_band(fs: f64) -> Vec<BandSpec> {
        vec![BandSpec::new("all", 0.0, fs / 2.0)]
    }

    #[test]
    fn white_noise_de_matches_closed_form() {
        let fs = 256.0;
        let e = SignalEpoch::new(vec![noise(1, 4096, 1.0)], fs).unwrap();
        let de = de_band(&e, &full_band(fs), 16.0).unwrap();
        assert_eq!(de.data.shape(), (1, 1));
        assert!((de.data.get(0, 0) - HALF_LN_2PIE).abs() < 0.05, "{}", de.data.get(0, 0));
    }

    #[test]
    fn de_shifts_by_log_scale() {
        let fs = 256.0;
        let x = noise(2, 4096, 1.0);
        for a in [2.0, 5.0] {
            let base = de_band(&SignalEpoch::new(vec![x.clone()], fs).unwrap(), &full_band(fs), 16.0).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
            let s = de_band(&SignalEpoch::new(vec![scaled], fs).unwrap(), &full_band(fs), 16.0).unwrap();
            let diff = s.data.get(0, 0) - base.data.get(0, 0);
            assert!((diff - f64::ln(a)).abs() < 0.02, "a={a}: {diff}");
        }
    }

    #[test]
    fn sinusoid_concentrates_in_alpha() {
        let fs = 200.0;
        let x: Vec<f64> = (0..800).map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / fs).sin()).collect();
        let de = de_band(&SignalEpoch::new(vec![x], fs).unwrap(), &default_bands(), 4.0).unwrap();
        let alpha = de.data.get(0, 2);
        let gamma = de.data.get(0, 4);
        assert!(alpha - gamma > 3.0, "alpha {alpha} gamma {gamma}");
        assert_eq!(de.names[2], "ch0_alpha");
    }

    #[test]
    fn band_above_nyquist_rejected() {
        let e = SignalEpoch::new(vec![vec![0.0; 400]], 80.0).unwrap();
        assert!(matches!(de_band(&e, &default_bands(), 4.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn window_count_is_floor() {
        let fs = 100.0;
        let e = SignalEpoch::new(vec![noise(3, 1050, 1.0), noise(4, 1050, 1.0)], fs).unwrap();
        let de = de_band(&e, &default_bands(), 4.0).unwrap();
        assert_eq!(de.data.shape(), (2, 10));
        let short = SignalEpoch::new(vec![vec![1.0; 300]], fs).unwrap();
        assert!(de_band(&short, &default_bands(), 4.0).is_err());
    }

    #[test]
    fn zero_power_is_floored() {
        let fs = 128.0;
        let e = SignalEpoch::new(vec![vec![0.0; 512]], fs).unwrap();
        let de = de_band(&e, &default_bands(), 4.0).unwrap();
        let floor = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * POWER_FLOOR).ln();
        assert!(de.data.as_slice().iter().all(|&v| (v - floor).abs() < 1e-12));
        let le = log_band_energy(&e, &default_bands(), 4.0).unwrap();
        assert!(le.data.as_slice().iter().all(|&v| (v - POWER_FLOOR.ln()).abs() < 1e-12));
    }

    #[test]
    fn log_energy_scales_quadratically() {
        let fs = 128.0;
        let x = noise(5, 1024, 1.0);
        let ecg = vec![x.clone(), noise(6, 1024, 0.5)];
        let base = log_band_energy(&SignalEpoch::new(ecg.clone(), fs).unwrap(), &default_bands(), 4.0).unwrap();
        assert_eq!(base.cols(), 10);
        let doubled: Vec<Vec<f64>> = ecg.iter().map(|c| c.iter().map(|v| 2.0 * v).collect()).collect();
        let s = log_band_energy(&SignalEpoch::new(doubled, fs).unwrap(), &default_bands(), 4.0).unwrap();
        for (a, b) in s.data.as_slice().iter().zip(base.data.as_slice()) {
            assert!((a - b - 2.0 * f64::ln(2.0)).abs() < 0.02);
        }
    }

    #[test]
    fn stats_by_hand() {
        let e = SignalEpoch::new(vec![vec![1.0, 2.0, 3.0]], 1.0).unwrap();
        assert_eq!(stat_features(&e).unwrap(), vec![3.0, 1.0, 2.0, 1.0, 1.0, 14.0]);
        let c = SignalEpoch::new(vec![vec![1.5; 4]], 1.0).unwrap();
        assert_eq!(stat_features(&c).unwrap(), vec![1.5, 1.5, 1.5, 0.0, 0.0, 9.0]);
        let eight = SignalEpoch::new((0..8).map(|s| noise(s, 50, 1.0)).collect(), 1.0).unwrap();
        assert_eq!(stat_features(&eight).unwrap().len(), 48);
        assert!(stat_features(&SignalEpoch::new(vec![vec![1.0]], 1.0).unwrap()).is_err());
    }

    #[test]
    fn stats_permutation_invariant() {
        let x = noise(7, 101, 2.0);
        let mut y = x.clone();
        RandomStream::new(8, 0).shuffle(&mut y);
        let a = stat_features(&SignalEpoch::new(vec![x], 1.0).unwrap()).unwrap();
        let b = stat_features(&SignalEpoch::new(vec![y], 1.0).unwrap()).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn minmax_and_zscore() {
        let train = Matrix::from_vec(2, 1, vec![0.0, 10.0]).unwrap();
        let test = Matrix::from_vec(1, 1, vec![15.0]).unwrap();
        let (t, o, _) = normalize(&train, &[&test], ScaleMode::Minmax).unwrap();
        assert_eq!(t.as_slice(), &[0.0, 1.0]);
        assert_eq!(o[0].get(0, 0), 1.5);
        assert_eq!(clip_unit(&o[0]).get(0, 0), 1.0);

        let mut s = RandomStream::new(9, 0);
        let x = Matrix::from_fn(50, 3, |_, j| 3.0 * s.normal::<f64>() + j as f64);
        let (z, _, _) = normalize(&x, &[], ScaleMode::Zscore).unwrap();
        let (zz, _, _) = normalize(&z, &[], ScaleMode::Zscore).unwrap();
        assert!(z.sub(&zz).max_abs() < 1e-9);
        assert!(z.column_means().iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn constant_column_left_alone() {
        let x = Matrix::from_vec(3, 2, vec![1.0, 4.0, 2.0, 4.0, 3.0, 4.0]).unwrap();
        let (z, _, sc) = normalize(&x, &[], ScaleMode::Zscore).unwrap();
        assert_eq!(sc.scale[1], 1.0);
        assert!(z.column(1).iter().all(|&v| v == 0.0));
        assert!(normalize(&Matrix::<f64>::zeros(0, 2), &[], ScaleMode::Zscore).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let m = FeatureMatrix::with_prefix(Matrix::from_vec(2, 2, vec![0.1, -2.5, 1e-17, 3.0]).unwrap(), "f")
            .with_labels(vec![1, 0])
            .unwrap();
        m.write_csv(&path).unwrap();
        let back = FeatureMatrix::<f64>::read_csv(&path).unwrap();
        assert_eq!(back, m);
        std::fs::write(&path, "a,b\n1,x\n").unwrap();
        assert!(matches!(FeatureMatrix::<f64>::read_csv(&path), Err(Error::Format(_))));
    }
}
