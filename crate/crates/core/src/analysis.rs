//! Switching-current histograms, telegraph branch classification, dwell
//! statistics and bootstrap confidence intervals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::SwitchRecord;
use crate::error::{Error, Result};
use crate::physics::Branch;

/// Bin width used for mode detection (A).
pub const MODE_BIN_WIDTH: f64 = 0.005e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Uniform edges, one more than `counts` (A).
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_total: u64,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Fraction of the total in each bin.
    pub fn probabilities(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n_total as f64).collect()
    }
}

/// Histogram of raw values with half-open bins [lo, hi) starting at the
/// minimum value; the maximum always lands in the last bin.
pub fn histogram_values(values: &[f64], bin_width: f64) -> Result<Histogram> {
    if values.is_empty() {
        return Err(Error::EmptyInput("histogram needs at least one value"));
    }
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::domain("histogram", "bin width must be > 0"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("histogram", "values must be finite"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n_bins = ((hi - lo) / bin_width).floor() as usize + 1;
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        let k = (((v - lo) / bin_width).floor() as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    let bin_edges = (0..=n_bins).map(|k| lo + k as f64 * bin_width).collect();
    Ok(Histogram { bin_edges, counts, n_total: values.len() as u64 })
}

/// Histogram of switching currents.
pub fn histogram(records: &[SwitchRecord], bin_width: f64) -> Result<Histogram> {
    let values: Vec<f64> = records.iter().map(|r| r.switching_current).collect();
    histogram_values(&values, bin_width)
}

/// Centered 3-bin moving average; edge bins average over the bins present.
pub fn smooth3(counts: &[u64]) -> Vec<f64> {
    let n = counts.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let window = &counts[lo..=hi];
            window.iter().sum::<u64>() as f64 / window.len() as f64
        })
        .collect()
}

/// Indices of local maxima: strictly above the left neighbour and not below
/// the right one, so a plateau counts once at its left end.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (0..n)
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { values[i - 1] };
            let right = if i + 1 == n { f64::NEG_INFINITY } else { values[i + 1] };
            values[i] > left && values[i] >= right && values[i] > 0.0
        })
        .collect()
}

/// Smoothed maxima below this fraction of the highest one are counting noise.
pub const MIN_MODE_RATIO: f64 = 0.05;

/// Two maxima are distinct modes only if the smoothed histogram between them
/// falls to at most this fraction of the smaller one.
pub const MAX_VALLEY_RATIO: f64 = 0.5;

/// The highest smoothed mode and the highest distinct mode above the noise
/// floor, lower current first, as bin indices.
pub fn dominant_modes(h: &Histogram) -> Result<(usize, usize)> {
    let smooth = smooth3(&h.counts);
    let mut peaks = local_maxima(&smooth);
    peaks.sort_by(|&a, &b| smooth[b].total_cmp(&smooth[a]).then(a.cmp(&b)));
    let Some(&main) = peaks.first() else {
        return Err(Error::Unimodal("no mode found".into()));
    };
    let second = peaks[1..]
        .iter()
        .copied()
        .take_while(|&c| smooth[c] >= MIN_MODE_RATIO * smooth[main])
        .find(|&c| {
            let valley = smooth[c.min(main)..=c.max(main)].iter().copied().fold(f64::INFINITY, f64::min);
            valley <= MAX_VALLEY_RATIO * smooth[c]
        });
    let Some(second) = second else {
        return Err(Error::Unimodal(format!("1 mode found among {} local maxima", peaks.len())));
    };
    let (a, b) = (main.min(second), main.max(second));
    if b - a < 3 {
        return Err(Error::Unimodal(format!("modes only {} bins apart", b - a)));
    }
    Ok((a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchLabel {
    Upper,
    Lower,
}

impl BranchLabel {
    /// TLS branch the label points to: upper ↔ g, lower ↔ e.
    pub fn expected_flag(self) -> Branch {
        match self {
            BranchLabel::Upper => Branch::Ground,
            BranchLabel::Lower => Branch::Excited,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BranchLabel::Upper => "upper",
            BranchLabel::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchStats {
    pub labels: Vec<BranchLabel>,
    /// Midpoint between the two dominant modes (A).
    pub threshold: f64,
    pub dwell_upper: Vec<usize>,
    pub dwell_lower: Vec<usize>,
    pub mean_dwell_upper: f64,
    pub mean_dwell_lower: f64,
    pub jumps: usize,
    pub mean_is_upper: f64,
    pub mean_is_lower: f64,
}

impl BranchStats {
    /// Mean length over all maximal runs on either branch.
    pub fn mean_dwell(&self) -> f64 {
        let runs = self.dwell_upper.len() + self.dwell_lower.len();
        self.labels.len() as f64 / runs as f64
    }

    /// Every run length, both branches, in sequence order.
    pub fn dwell_lengths(&self) -> Vec<usize> {
        run_lengths(&self.labels).into_iter().map(|(_, n)| n).collect()
    }
}

fn mean_usize(v: &[usize]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<usize>() as f64 / v.len() as f64
    }
}

fn run_lengths(labels: &[BranchLabel]) -> Vec<(BranchLabel, usize)> {
    let mut runs: Vec<(BranchLabel, usize)> = Vec::new();
    for &l in labels {
        match runs.last_mut() {
            Some((last, n)) if *last == l => *n += 1,
            _ => runs.push((l, 1)),
        }
    }
    runs
}

/// Label a sequence of switching currents against the midpoint threshold.
pub fn classify_currents(currents: &[f64]) -> Result<BranchStats> {
    let h = histogram_values(currents, MODE_BIN_WIDTH)?;
    let (a, b) = dominant_modes(&h)?;
    let centers = h.centers();
    let threshold = 0.5 * (centers[a] + centers[b]);
    let labels: Vec<BranchLabel> = currents
        .iter()
        .map(|&i| if i > threshold { BranchLabel::Upper } else { BranchLabel::Lower })
        .collect();
    let runs = run_lengths(&labels);
    let pick = |want: BranchLabel| -> Vec<usize> {
        runs.iter().filter(|(l, _)| *l == want).map(|(_, n)| *n).collect()
    };
    let dwell_upper = pick(BranchLabel::Upper);
    let dwell_lower = pick(BranchLabel::Lower);
    let mean_of = |want: BranchLabel| -> f64 {
        let v: Vec<f64> = currents.iter().zip(&labels).filter(|(_, l)| **l == want).map(|(i, _)| *i).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    Ok(BranchStats {
        threshold,
        jumps: runs.len() - 1,
        mean_dwell_upper: mean_usize(&dwell_upper),
        mean_dwell_lower: mean_usize(&dwell_lower),
        mean_is_upper: mean_of(BranchLabel::Upper),
        mean_is_lower: mean_of(BranchLabel::Lower),
        dwell_upper,
        dwell_lower,
        labels,
    })
}

/// Measurement-only branch classification; engine flags are ignored.
pub fn classify_branches(records: &[SwitchRecord]) -> Result<BranchStats> {
    let currents: Vec<f64> = records.iter().map(|r| r.switching_current).collect();
    classify_currents(&currents)
}

/// Fraction of records whose measured branch matches the engine flag
/// (upper ↔ 0, lower ↔ 1).
pub fn label_fidelity(records: &[SwitchRecord]) -> Result<f64> {
    let stats = classify_branches(records)?;
    let hits = stats
        .labels
        .iter()
        .zip(records)
        .filter(|(l, r)| l.expected_flag() == r.flag_at_switch)
        .count();
    Ok(hits as f64 / records.len() as f64)
}

/// Branch changes per unit time: jumps / (length · ramp period).
pub fn jump_rate(stats: &BranchStats, ramp_period: f64) -> Result<f64> {
    if !(ramp_period > 0.0) {
        return Err(Error::domain("jump_rate", "ramp period must be > 0"));
    }
    Ok(stats.jumps as f64 / (stats.labels.len() as f64 * ramp_period))
}

/// Percentile bootstrap interval for mean(a) − mean(b), resampling each
/// sample with replacement.
pub fn bootstrap_mean_difference<R: Rng>(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    confidence: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("bootstrap needs two non-empty samples"));
    }
    if resamples == 0 || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::domain("bootstrap", "need resamples >= 1 and 0 < confidence < 1"));
    }
    let resample_mean = |x: &[f64], rng: &mut R| -> f64 {
        (0..x.len()).map(|_| x[rng.random_range(0..x.len())]).sum::<f64>() / x.len() as f64
    };
    let mut diffs: Vec<f64> = (0..resamples).map(|_| resample_mean(a, rng) - resample_mean(b, rng)).collect();
    diffs.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - confidence);
    let at = |q: f64| diffs[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Ok((at(tail), at(1.0 - tail)))
}

/// Total-variation distance between two weight vectors on a shared grid.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::domain("total_variation", "distributions must share a grid"));
    }
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    if !(sp > 0.0 && sq > 0.0) {
        return Err(Error::EmptyInput("distribution with zero mass"));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a / sp - b / sq).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::stream_rng;

    fn lbl(s: &str) -> Vec<f64> {
        s.chars().map(|c| if c == 'U' { 35.66e-6 } else { 35.60e-6 }).collect()
    }

    #[test]
    fn single_value_histogram() {
        let h = histogram_values(&[35.6e-6], 0.01e-6).unwrap();
        assert_eq!(h.counts, vec![1]);
        assert_eq!(h.n_total, 1);
        assert!(histogram_values(&[], 1.0).is_err());
        assert!(histogram_values(&[1.0], 0.0).is_err());
    }

    #[test]
    fn half_open_bins() {
        let h = histogram_values(&[0.0, 0.5, 1.0, 1.5, 2.0], 1.0).unwrap();
        assert_eq!(h.counts, vec![2, 2, 1]);
        assert_eq!(h.bin_edges, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn alternating_sequence() {
        let s = classify_currents(&lbl("ULULULUL")).unwrap();
        assert_eq!(s.jumps, 7);
        assert!(s.dwell_upper.iter().chain(&s.dwell_lower).all(|&d| d == 1));
        assert_eq!(s.mean_dwell(), 1.0);
        assert!(s.mean_is_upper > s.mean_is_lower);
        let r = jump_rate(&s, 1e-2).unwrap();
        assert!((r - 7.0 / 8.0 / 1e-2).abs() < 1e-9);
    }

    #[test]
    fn dwell_bookkeeping() {
        let s = classify_currents(&lbl("UUULLUUUULLLLLU")).unwrap();
        assert_eq!(s.dwell_upper, vec![3, 4, 1]);
        assert_eq!(s.dwell_lower, vec![2, 5]);
        assert_eq!(s.jumps, 4);
        assert_eq!(s.dwell_upper.iter().chain(&s.dwell_lower).sum::<usize>(), 15);
        assert!((s.threshold - 35.63e-6).abs() < 0.006e-6);
    }

    #[test]
    fn tail_noise_is_not_a_mode() {
        let w = 0.005e-6;
        let counts = [1, 2, 1, 0, 1, 1, 2, 4, 4, 6, 8, 14, 24, 28, 33, 54, 85, 118, 138, 189, 222, 253, 257, 233, 168, 100, 42, 8, 4];
        let mut v = Vec::new();
        for (k, &c) in counts.iter().enumerate() {
            v.extend(std::iter::repeat_n(35.5e-6 + (k as f64 + 0.5) * w, c));
        }
        assert!(matches!(classify_currents(&v), Err(Error::Unimodal(_))));
        // A genuine second branch 20 bins lower is found; the midpoint
        // threshold also takes the main peak's extreme tail.
        v.extend(std::iter::repeat_n(35.5e-6 - 19.5 * w, 60));
        let lower = classify_currents(&v).unwrap().labels.iter().filter(|&&l| l == BranchLabel::Lower).count();
        assert!((60..=64).contains(&lower), "{lower}");
    }

    #[test]
    fn constant_sequence_is_unimodal() {
        assert!(matches!(classify_currents(&lbl("UUUU")), Err(Error::Unimodal(_))));
        let close = [35.600e-6, 35.601e-6, 35.6105e-6, 35.6115e-6];
        assert!(matches!(classify_currents(&close), Err(Error::Unimodal(_))));
    }

    #[test]
    fn zero_jumps_zero_rate() {
        let mut v = lbl("UUUU");
        v.push(35.60e-6);
        let s = classify_currents(&v).unwrap();
        assert_eq!(s.jumps, 1);
        let s = BranchStats { jumps: 0, ..s };
        assert_eq!(jump_rate(&s, 1.0).unwrap(), 0.0);
        assert!(jump_rate(&s, 0.0).is_err());
    }

    #[test]
    fn bootstrap_detects_shift() {
        let a: Vec<f64> = (0..200).map(|k| (k % 7) as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 2.0).collect();
        let (lo, hi) = bootstrap_mean_difference(&a, &b, 2000, 0.95, &mut stream_rng(3, 0)).unwrap();
        assert!(lo < -2.0 + 0.6 && hi > -2.0 - 0.6 && hi < 0.0);
        let (lo, hi) = bootstrap_mean_difference(&a, &a, 2000, 0.95, &mut stream_rng(3, 1)).unwrap();
        assert!(lo < 0.0 && hi > 0.0);
    }

    #[test]
    fn tv_distance() {
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 1.0);
        assert_eq!(total_variation(&[1.0, 1.0], &[2.0, 2.0]).unwrap(), 0.0);
        assert!(total_variation(&[1.0], &[1.0, 2.0]).is_err());
        assert!(total_variation(&[0.0], &[1.0]).is_err());
    }
}
