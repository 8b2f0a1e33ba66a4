//! Position and heading errors, nearest-rank percentile reports, empirical
//! CDFs, and a k-nearest-neighbour baseline.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{normalize_degrees, Pose};

/// Percentile levels reported in summaries.
pub const LEVELS: [u32; 3] = [68, 95, 99];

/// Euclidean distance in the `(x_e, x_n)` plane, meters.
pub fn horizontal_error(pred: &Pose, truth: &Pose) -> f64 {
    (pred.x_e - truth.x_e).hypot(pred.x_n - truth.x_n)
}

/// Smallest angle between two headings in degrees, in `[0, 180]`.
pub fn heading_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(360.0);
    d.min(360.0 - d)
}

pub fn heading_error(pred: &Pose, truth: &Pose) -> f64 {
    heading_difference(pred.gamma, truth.gamma)
}

/// Nearest-rank percentile: the `ceil(level * n / 100)`-th smallest value.
pub fn percentile(errors: &[f64], level: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Empty("percentile of an empty list".into()));
    }
    if !(level > 0.0 && level <= 100.0) {
        return Err(Error::Domain(format!("percentile level must be in (0, 100], got {level}")));
    }
    if errors.iter().any(|e| e.is_nan()) {
        return Err(Error::Domain("percentile of a list containing NaN".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank(level, sorted.len()) - 1])
}

/// 1-based nearest rank. `level * n` is formed before dividing so integer
/// levels never pick up rounding from `level / 100`.
fn rank(level: f64, n: usize) -> usize {
    ((level * n as f64 / 100.0).ceil() as usize).clamp(1, n)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    /// Network name, or `knn`.
    pub network: String,
    /// `leu`, `heu` or `train`.
    pub split: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub position_errors: Vec<f64>,
    pub heading_errors: Vec<f64>,
    /// Level -> (position m, heading deg).
    pub percentiles: BTreeMap<u32, (f64, f64)>,
    pub meta: ReportMeta,
}

impl ErrorReport {
    pub fn from_predictions(preds: &[Pose], truths: &[Pose], meta: ReportMeta) -> Result<Self> {
        if preds.len() != truths.len() {
            return Err(Error::Shape(format!("{} predictions for {} records", preds.len(), truths.len())));
        }
        if preds.is_empty() {
            return Err(Error::Empty("no test records to evaluate".into()));
        }
        let position_errors: Vec<f64> = preds.iter().zip(truths).map(|(p, t)| horizontal_error(p, t)).collect();
        let heading_errors: Vec<f64> = preds.iter().zip(truths).map(|(p, t)| heading_error(p, t)).collect();
        let mut percentiles = BTreeMap::new();
        for level in LEVELS {
            let l = level as f64;
            percentiles.insert(level, (percentile(&position_errors, l)?, percentile(&heading_errors, l)?));
        }
        Ok(Self {
            position_errors,
            heading_errors,
            percentiles,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.position_errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position_errors.is_empty()
    }

    pub fn position(&self, level: u32) -> f64 {
        self.percentiles[&level].0
    }

    pub fn heading(&self, level: u32) -> f64 {
        self.percentiles[&level].1
    }

    pub fn position_cdf(&self) -> Vec<(f64, f64)> {
        empirical_cdf(&self.position_errors)
    }

    pub fn heading_cdf(&self) -> Vec<(f64, f64)> {
        empirical_cdf(&self.heading_errors)
    }

    /// `index,position_error_m,heading_error_deg` per test record.
    pub fn write_samples_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "position_error_m", "heading_error_deg"])?;
        for (i, (p, h)) in self.position_errors.iter().zip(&self.heading_errors).enumerate() {
            w.write_record([i.to_string(), p.to_string(), h.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// `error,cumulative_fraction` for position and heading side by side.
    pub fn write_cdf_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["position_error_m", "position_fraction", "heading_error_deg", "heading_fraction"])?;
        for ((pe, pf), (he, hf)) in self.position_cdf().into_iter().zip(self.heading_cdf()) {
            w.write_record([pe.to_string(), pf.to_string(), he.to_string(), hf.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn summary_row(&self) -> Vec<String> {
        let mut row = vec![self.meta.network.clone(), self.meta.split.clone()];
        row.extend(LEVELS.iter().map(|&l| self.position(l).to_string()));
        row.extend(LEVELS.iter().map(|&l| self.heading(l).to_string()));
        row
    }
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "network",
    "split",
    "p68_position_m",
    "p95_position_m",
    "p99_position_m",
    "p68_heading_deg",
    "p95_heading_deg",
    "p99_heading_deg",
];

pub fn write_summary_csv(path: &Path, reports: &[&ErrorReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in reports {
        w.write_record(r.summary_row())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `(value, i / n)` for the ascending-sorted samples, one point per sample.
pub fn empirical_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.into_iter().enumerate().map(|(i, v)| (v, (i + 1) as f64 / n)).collect()
}

/// Mean position and circular-mean heading of the `k` training samples
/// nearest to `query`. Distance ties go to the lower training index.
pub fn knn_predict(train_x: &[Vec<f64>], train_poses: &[Pose], query: &[f64], k: usize) -> Result<Pose> {
    if k == 0 || k > train_x.len() {
        return Err(Error::Config(format!("k must be in 1..={}, got {k}", train_x.len())));
    }
    // Sorted (distance, index) of the best k so far.
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, x) in train_x.iter().enumerate() {
        if x.len() != query.len() {
            return Err(Error::Shape(format!("feature length {} vs query {}", x.len(), query.len())));
        }
        let d: f64 = x.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, i));
        best.truncate(k);
    }
    let n = k as f64;
    let (mut e, mut no, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
    for &(_, i) in &best {
        let p = &train_poses[i];
        e += p.x_e;
        no += p.x_n;
        let g = p.gamma.to_radians();
        s += g.sin();
        c += g.cos();
    }
    Ok(Pose {
        x_e: e / n,
        x_n: no / n,
        gamma: normalize_degrees(s.atan2(c).to_degrees()),
    })
}

pub fn knn_baseline(
    train_x: &[Vec<f64>],
    train_poses: &[Pose],
    test_x: &[Vec<f64>],
    test_poses: &[Pose],
    k: usize,
    meta: ReportMeta,
) -> Result<ErrorReport> {
    if train_x.len() != train_poses.len() || test_x.len() != test_poses.len() {
        return Err(Error::Shape("features and poses differ in length".into()));
    }
    let preds = test_x
        .iter()
        .map(|q| knn_predict(train_x, train_poses, q, k))
        .collect::<Result<Vec<_>>>()?;
    ErrorReport::from_predictions(&preds, test_poses, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta() -> ReportMeta {
        ReportMeta {
            network: "t".into(),
            split: "leu".into(),
            seed: 0,
        }
    }

    #[test]
    fn position_examples() {
        let o = Pose::new(0.0, 0.0, 0.0);
        assert_eq!(horizontal_error(&o, &o), 0.0);
        assert_eq!(horizontal_error(&Pose::new(3.0, 4.0, 0.0), &o), 5.0);
        assert_eq!(horizontal_error(&Pose::new(0.0, 0.0, 90.0), &o), 0.0);
    }

    #[test]
    fn heading_examples() {
        assert_eq!(heading_difference(179.0, -179.0), 2.0);
        assert_eq!(heading_difference(90.0, -90.0), 180.0);
        assert_eq!(heading_difference(33.0, 33.0), 0.0);
        assert_eq!(heading_difference(10.0, 370.0), 0.0);
        assert_eq!(heading_difference(-170.0, 170.0), 20.0);
    }

    proptest! {
        #[test]
        fn heading_symmetric_bounded_periodic(a in -720.0f64..720.0, b in -720.0f64..720.0) {
            let d = heading_difference(a, b);
            prop_assert!((0.0..=180.0).contains(&d));
            prop_assert_eq!(d, heading_difference(b, a));
            prop_assert!((heading_difference(a + 360.0, b) - d).abs() < 1e-9);
        }

        #[test]
        fn percentiles_monotone(v in prop::collection::vec(0.0f64..100.0, 1..200)) {
            let p: Vec<f64> = [1.0, 25.0, 50.0, 68.0, 95.0, 99.0, 100.0].iter().map(|&l| percentile(&v, l).unwrap()).collect();
            prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn percentile_examples() {
        let v: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        assert_eq!(percentile(&v, 68.0).unwrap(), 68.0);
        assert_eq!(percentile(&v, 95.0).unwrap(), 95.0);
        assert_eq!(percentile(&v, 100.0).unwrap(), 100.0);
        assert_eq!(percentile(&v, 0.5).unwrap(), 1.0);
        for l in [1.0, 50.0, 99.9] {
            assert_eq!(percentile(&[4.2], l).unwrap(), 4.2);
        }
        assert!(matches!(percentile(&[], 50.0), Err(Error::Empty(_))));
        assert!(percentile(&[1.0], 0.0).is_err());
        assert!(percentile(&[1.0], 100.5).is_err());
    }

    #[test]
    fn percentile_matches_counting_oracle() {
        // Oracle: the smallest sample v with at least level% of samples <= v.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let n = rng.random_range(1..60);
            let v: Vec<f64> = (0..n).map(|_| (rng.random_range(0..20) as f64) * 0.5).collect();
            for level in [68u32, 95, 99, 50, 1] {
                let oracle = v
                    .iter()
                    .copied()
                    .filter(|&x| 100 * v.iter().filter(|&&y| y <= x).count() >= level as usize * n)
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(percentile(&v, level as f64).unwrap(), oracle);
            }
        }
    }

    #[test]
    fn perfect_predictor_gives_zero_report() {
        let poses: Vec<Pose> = (0..10).map(|i| Pose::new(i as f64, 2.0, -170.0 + 30.0 * i as f64)).collect();
        let r = ErrorReport::from_predictions(&poses, &poses, meta()).unwrap();
        for l in LEVELS {
            assert_eq!(r.percentiles[&l], (0.0, 0.0));
        }
        assert!(ErrorReport::from_predictions(&[], &[], meta()).is_err());
        assert!(ErrorReport::from_predictions(&poses[..2], &poses, meta()).is_err());
    }

    #[test]
    fn cdf_has_every_sample() {
        let cdf = empirical_cdf(&[3.0, 1.0, 2.0, 2.0]);
        assert_eq!(cdf, vec![(1.0, 0.25), (2.0, 0.5), (2.0, 0.75), (3.0, 1.0)]);
    }

    #[test]
    fn knn_memorizes_with_k1() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<Vec<f64>> = (0..30).map(|_| (0..5).map(|_| rng.random()).collect()).collect();
        let poses: Vec<Pose> = (0..30).map(|i| Pose::new(i as f64, -(i as f64), 12.0 * i as f64)).collect();
        let r = knn_baseline(&x, &poses, &x[5..15], &poses[5..15], 1, meta()).unwrap();
        assert!(r.position_errors.iter().all(|&e| e == 0.0));
        assert!(r.heading_errors.iter().all(|&e| e < 1e-9));
    }

    #[test]
    fn knn_full_k_gives_global_mean() {
        let x: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let poses = vec![
            Pose::new(0.0, 0.0, 170.0),
            Pose::new(2.0, 0.0, -170.0),
            Pose::new(0.0, 4.0, 170.0),
            Pose::new(2.0, 4.0, -170.0),
        ];
        for q in [[-5.0], [1.5], [9.0]] {
            let p = knn_predict(&x, &poses, &q, 4).unwrap();
            assert!((p.x_e - 1.0).abs() < 1e-12 && (p.x_n - 2.0).abs() < 1e-12);
            // Circular mean of 170 and -170 is 180, not 0.
            assert!(heading_difference(p.gamma, 180.0) < 1e-9);
        }
        assert!(knn_predict(&x, &poses, &[0.0], 0).is_err());
        assert!(knn_predict(&x, &poses, &[0.0], 5).is_err());
        assert!(knn_predict(&x, &poses, &[0.0, 1.0], 1).is_err());
    }

    #[test]
    fn csv_exports() {
        let dir = tempfile::tempdir().unwrap();
        let truths = vec![Pose::new(0.0, 0.0, 0.0), Pose::new(1.0, 1.0, 10.0)];
        let preds = vec![Pose::new(3.0, 4.0, 5.0), Pose::new(1.0, 1.0, 10.0)];
        let r = ErrorReport::from_predictions(&preds, &truths, meta()).unwrap();
        r.write_samples_csv(&dir.path().join("s.csv")).unwrap();
        write_summary_csv(&dir.path().join("sum.csv"), &[&r]).unwrap();
        let s = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert_eq!(s, "index,position_error_m,heading_error_deg\n0,5,5\n1,0,0\n");
        let sum = std::fs::read_to_string(dir.path().join("sum.csv")).unwrap();
        let row: Vec<&str> = sum.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row.len(), 8);
        assert_eq!(&row[..2], ["t", "leu"]);
        assert!(row[2..].iter().all(|v| v.parse::<f64>().is_ok()));
    }
}
