//! Mode-recovery and distribution-quality metrics.
//!
//! Generated points are assigned to their nearest mixture mode inside a
//! capture radius; the resulting frequency histogram yields the captured
//! mode count, its entropy, and the total variation distance to the target
//! weights. A Gaussian-kernel MMD estimate serves as a scalar two-sample
//! diagnostic between generated and real samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::MixtureSpec;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Thresholds for mode assignment and reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    /// Capture radius in units of the component sigma.
    pub capture_radius_sigmas: f64,
    /// A mode counts as captured when it holds at least this fraction of
    /// the assigned points.
    pub capture_min_frac: f64,
    /// Kernel bandwidth for the MMD diagnostic; `None` selects the median
    /// pairwise distance of the reference sample.
    pub mmd_bandwidth: Option<f64>,
    /// Histogram target; defaults to the mixture weights.
    pub target_weights: Option<Vec<f64>>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            capture_radius_sigmas: 3.0,
            capture_min_frac: 0.02,
            mmd_bandwidth: None,
            target_weights: None,
        }
    }
}

/// Everything the mode-recovery study reports for one sample of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub modes_captured: usize,
    /// Assigned-point counts per mode; sums to `hq_fraction * n_samples`.
    pub histogram: Vec<usize>,
    /// Entropy of the assigned-point frequencies, in nats.
    pub entropy: f64,
    /// Total variation between assigned frequencies and the target weights.
    pub tv_to_target: f64,
    /// Fraction of points inside some capture radius.
    pub hq_fraction: f64,
    /// MMD^2 against the reference sample, when one was provided.
    pub mmd2: Option<f64>,
    /// Set when no point was assigned to any mode; the histogram is all
    /// zeros and tv is computed against that all-zero convention.
    pub degenerate: bool,
}

impl EvalReport {
    /// Fixed CSV column order shared by every report emitter.
    pub fn csv_header() -> &'static str {
        "run_id,seed,iteration,modes_captured,entropy,tv,hq_fraction,mmd2"
    }

    pub fn csv_row(&self, run_id: &str, seed: u64, iteration: usize) -> String {
        let mmd = self.mmd2.map_or(String::new(), |v| format!("{v}"));
        format!(
            "{run_id},{seed},{iteration},{},{},{},{},{mmd}",
            self.modes_captured, self.entropy, self.tv_to_target, self.hq_fraction
        )
    }
}

/// Map each point to the nearest component mean, if it lies within
/// `capture_radius_sigmas * sigma` of it; ties break toward the lowest
/// component index.
pub fn assign_modes(
    points: &Tensor,
    spec: &MixtureSpec,
    capture_radius_sigmas: f64,
) -> Result<Vec<Option<usize>>, EvalError> {
    if points.cols() != spec.dim {
        return Err(EvalError::Dimension(format!(
            "points have dimension {}, mixture has {}",
            points.cols(),
            spec.dim
        )));
    }
    let data = points.data();
    let n = points.rows();
    let dim = spec.dim;
    let mut out = Vec::with_capacity(n);
    for row in 0..n {
        let p = &data[row * dim..(row + 1) * dim];
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in spec.components.iter().enumerate() {
            let d2: f64 = c
                .mean
                .iter()
                .zip(p)
                .map(|(&m, &v)| (v - m) * (v - m))
                .sum();
            match best {
                Some((_, bd)) if d2 >= bd => {}
                _ => best = Some((j, d2)),
            }
        }
        let (j, d2) = best.expect("validated mixtures are non-empty");
        let radius = capture_radius_sigmas * spec.components[j].variance.sqrt();
        out.push(if d2.sqrt() <= radius { Some(j) } else { None });
    }
    Ok(out)
}

/// Full mode-recovery report for a sample of generated points. When a
/// reference (real) sample is given, the MMD diagnostic is included.
pub fn evaluate(
    points: &Tensor,
    reference: Option<&Tensor>,
    spec: &MixtureSpec,
    settings: &EvalSettings,
) -> Result<EvalReport, EvalError> {
    if points.rows() == 0 {
        return Err(EvalError::InvalidParameter("no points to evaluate".into()));
    }
    let assignment = assign_modes(points, spec, settings.capture_radius_sigmas)?;
    let k = spec.components.len();
    let mut histogram = vec![0usize; k];
    for a in assignment.iter().flatten() {
        histogram[*a] += 1;
    }
    let assigned: usize = histogram.iter().sum();
    let n = points.rows();

    let target = match &settings.target_weights {
        Some(w) => {
            if w.len() != k {
                return Err(EvalError::InvalidParameter(format!(
                    "target weights have {} entries for {k} modes",
                    w.len()
                )));
            }
            w.clone()
        }
        None => spec.weights(),
    };

    let degenerate = assigned == 0;
    let freqs: Vec<f64> = if degenerate {
        vec![0.0; k]
    } else {
        histogram.iter().map(|&c| c as f64 / assigned as f64).collect()
    };

    // The `+ 0.0` normalizes the -0.0 that a point-mass histogram yields.
    let entropy = -freqs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
        + 0.0;
    let tv_to_target = 0.5
        * freqs
            .iter()
            .zip(&target)
            .map(|(&p, &w)| (p - w).abs())
            .sum::<f64>();
    let modes_captured = if degenerate {
        0
    } else {
        freqs.iter().filter(|&&p| p >= settings.capture_min_frac).count()
    };

    let mmd2 = match reference {
        Some(real) => {
            let bw = match settings.mmd_bandwidth {
                Some(b) => b,
                None => median_pairwise_distance(real),
            };
            Some(mmd2_rbf(points, real, bw)?)
        }
        None => None,
    };

    Ok(EvalReport {
        n_samples: n,
        modes_captured,
        histogram,
        entropy,
        tv_to_target,
        hq_fraction: assigned as f64 / n as f64,
        mmd2,
        degenerate,
    })
}

/// Biased (V-statistic) squared maximum mean discrepancy with the Gaussian
/// kernel `exp(-|u - v|^2 / (2 bandwidth^2))`, clamped at zero from below.
pub fn mmd2_rbf(a: &Tensor, b: &Tensor, bandwidth: f64) -> Result<f64, EvalError> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(EvalError::InvalidParameter(format!(
            "bandwidth {bandwidth} is not positive"
        )));
    }
    if a.cols() != b.cols() {
        return Err(EvalError::Dimension(format!(
            "samples have dimensions {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    if a.rows() == 0 || b.rows() == 0 {
        return Err(EvalError::InvalidParameter("empty sample".into()));
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let kaa = mean_kernel(&a.data(), &a.data(), a.cols(), gamma);
    let kbb = mean_kernel(&b.data(), &b.data(), b.cols(), gamma);
    let kab = mean_kernel(&a.data(), &b.data(), a.cols(), gamma);
    Ok((kaa + kbb - 2.0 * kab).max(0.0))
}

fn mean_kernel(a: &[f64], b: &[f64], dim: usize, gamma: f64) -> f64 {
    let n = a.len() / dim;
    let m = b.len() / dim;
    let mut total = 0.0;
    for i in 0..n {
        let u = &a[i * dim..(i + 1) * dim];
        for j in 0..m {
            let v = &b[j * dim..(j + 1) * dim];
            let d2: f64 = u.iter().zip(v).map(|(&x, &y)| (x - y) * (x - y)).sum();
            total += (-gamma * d2).exp();
        }
    }
    total / (n as f64 * m as f64)
}

/// Median heuristic bandwidth: median pairwise distance over (a capped
/// prefix of) the sample.
pub fn median_pairwise_distance(sample: &Tensor) -> f64 {
    const CAP: usize = 1024;
    let n = sample.rows().min(CAP);
    let dim = sample.cols();
    let data = sample.data();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let u = &data[i * dim..(i + 1) * dim];
        for j in (i + 1)..n {
            let v = &data[j * dim..(j + 1) * dim];
            let d2: f64 = u.iter().zip(v).map(|(&x, &y)| (x - y) * (x - y)).sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists[dists.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ring_mixture, sample_mixture, MixtureComponent};
    use crate::rng::{stream, Stream};
    use rand::Rng;

    fn ring8() -> MixtureSpec {
        ring_mixture(8, 2.0, 0.01).unwrap()
    }

    #[test]
    fn point_at_mode_mean_is_assigned_to_it() {
        let spec = ring8();
        let points = Tensor::from_rows(&[spec.components[3].mean.clone()]).unwrap();
        let a = assign_modes(&points, &spec, 3.0).unwrap();
        assert_eq!(a, vec![Some(3)]);
    }

    #[test]
    fn ring_center_is_unassigned() {
        let spec = ring8();
        let points = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let a = assign_modes(&points, &spec, 3.0).unwrap();
        assert_eq!(a, vec![None]);
    }

    #[test]
    fn equidistant_point_outside_radius_is_unassigned() {
        // Half way between modes 0 and 1, far outside 3 sigma = 0.3.
        let spec = ring8();
        let m0 = &spec.components[0].mean;
        let m1 = &spec.components[1].mean;
        let mid = vec![(m0[0] + m1[0]) / 2.0, (m0[1] + m1[1]) / 2.0];
        let a = assign_modes(&Tensor::from_rows(&[mid]).unwrap(), &spec, 3.0).unwrap();
        assert_eq!(a, vec![None]);
    }

    #[test]
    fn tie_breaks_toward_lowest_index() {
        // Two coincident components; any captured point is ambiguous.
        let spec = MixtureSpec::new(
            1,
            vec![
                MixtureComponent {
                    mean: vec![0.0],
                    variance: 1.0,
                    weight: 0.5,
                },
                MixtureComponent {
                    mean: vec![0.0],
                    variance: 1.0,
                    weight: 0.5,
                },
            ],
        )
        .unwrap();
        let a = assign_modes(&Tensor::from_rows(&[vec![0.1]]).unwrap(), &spec, 3.0).unwrap();
        assert_eq!(a, vec![Some(0)]);
    }

    #[test]
    fn uniform_assignment_maximizes_entropy_and_zeroes_tv() {
        let spec = ring8();
        let rows: Vec<Vec<f64>> = (0..8)
            .flat_map(|j| std::iter::repeat(spec.components[j].mean.clone()).take(5))
            .collect();
        let points = Tensor::from_rows(&rows).unwrap();
        let report = evaluate(&points, None, &spec, &EvalSettings::default()).unwrap();
        assert_eq!(report.modes_captured, 8);
        assert!((report.entropy - 8.0f64.ln()).abs() < 1e-12);
        assert!((report.entropy - 2.0794).abs() < 1e-4);
        assert!(report.tv_to_target.abs() < 1e-12);
        assert_eq!(report.hq_fraction, 1.0);
    }

    #[test]
    fn point_mass_on_one_mode() {
        let spec = ring8();
        let rows = vec![spec.components[0].mean.clone(); 40];
        let report = evaluate(
            &Tensor::from_rows(&rows).unwrap(),
            None,
            &spec,
            &EvalSettings::default(),
        )
        .unwrap();
        assert_eq!(report.modes_captured, 1);
        assert_eq!(report.entropy, 0.0);
        assert!((report.tv_to_target - 0.875).abs() < 1e-12);
    }

    #[test]
    fn no_assigned_points_flags_degenerate_report() {
        let spec = ring8();
        let rows = vec![vec![0.0, 0.0]; 10];
        let report = evaluate(
            &Tensor::from_rows(&rows).unwrap(),
            None,
            &spec,
            &EvalSettings::default(),
        )
        .unwrap();
        assert!(report.degenerate);
        assert_eq!(report.modes_captured, 0);
        assert_eq!(report.entropy, 0.0);
        assert!((report.tv_to_target - 0.5).abs() < 1e-12); // 0.5 * sum(w)
        assert_eq!(report.hq_fraction, 0.0);
    }

    #[test]
    fn histogram_sums_to_assigned_count() {
        let spec = ring8();
        let mut rng = stream(5, Stream::EvalData);
        let (points, _) = sample_mixture(&spec, 5000, &mut rng);
        let report = evaluate(&points, None, &spec, &EvalSettings::default()).unwrap();
        let total: usize = report.histogram.iter().sum();
        assert_eq!(total as f64, report.hq_fraction * report.n_samples as f64);
    }

    #[test]
    fn true_draws_recover_every_mode() {
        // Self-consistency: real draws from the target must score well.
        // With a 3 sigma capture radius the expected assigned fraction is
        // 1 - exp(-4.5) ~ 0.9889 in two dimensions.
        let spec = ring8();
        let mut rng = stream(17, Stream::EvalData);
        let (points, _) = sample_mixture(&spec, 10_000, &mut rng);
        let report = evaluate(&points, None, &spec, &EvalSettings::default()).unwrap();
        assert_eq!(report.modes_captured, 8);
        assert!(report.tv_to_target < 0.02, "tv = {}", report.tv_to_target);
        let expected_hq = 1.0 - (-4.5f64).exp();
        assert!(
            (report.hq_fraction - expected_hq).abs() < 0.004,
            "hq = {}, expected about {expected_hq}",
            report.hq_fraction
        );
        assert!(report.hq_fraction > 0.98);
        assert!(report.entropy > 1.9);
    }

    #[test]
    fn assignment_is_permutation_equivariant_and_rotation_invariant() {
        let spec = ring8();
        let mut rng = stream(21, Stream::EvalData);
        let (points, _) = sample_mixture(&spec, 64, &mut rng);
        let base = assign_modes(&points, &spec, 3.0).unwrap();

        // Reversing the points reverses the assignment vector.
        let data = points.to_vec();
        let mut reversed = Vec::with_capacity(data.len());
        for row in (0..64).rev() {
            reversed.extend_from_slice(&data[row * 2..(row + 1) * 2]);
        }
        let rev = assign_modes(&Tensor::from_data(64, 2, reversed).unwrap(), &spec, 3.0).unwrap();
        let mut expected = base.clone();
        expected.reverse();
        assert_eq!(rev, expected);

        // Rotating the component list relabels assignments accordingly.
        let shift = 3;
        let mut rotated = spec.clone();
        rotated.components.rotate_left(shift);
        let relabeled = assign_modes(&points, &rotated, 3.0).unwrap();
        for (orig, rot) in base.iter().zip(&relabeled) {
            match (orig, rot) {
                (Some(j), Some(r)) => assert_eq!(*r, (j + 8 - shift) % 8),
                (None, None) => {}
                other => panic!("assignment changed shape under rotation: {other:?}"),
            }
        }
    }

    #[test]
    fn mmd_of_identical_samples_is_zero() {
        let spec = ring8();
        let mut rng = stream(3, Stream::EvalData);
        let (a, _) = sample_mixture(&spec, 200, &mut rng);
        let v = mmd2_rbf(&a, &a, 1.0).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn mmd_is_symmetric() {
        let spec = ring8();
        let mut rng = stream(4, Stream::EvalData);
        let (a, _) = sample_mixture(&spec, 150, &mut rng);
        let (b, _) = sample_mixture(&spec, 120, &mut rng);
        let ab = mmd2_rbf(&a, &b, 0.7).unwrap();
        let ba = mmd2_rbf(&b, &a, 0.7).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn mmd_matches_brute_force_double_sum() {
        let mut rng = stream(6, Stream::EvalData);
        let a_data: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b_data: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = Tensor::from_data(20, 2, a_data.clone()).unwrap();
        let b = Tensor::from_data(15, 2, b_data.clone()).unwrap();
        let bw = 0.9;
        let got = mmd2_rbf(&a, &b, bw).unwrap();

        // Independent double loop.
        let k = |u: &[f64], v: &[f64]| {
            let d2 = (u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2);
            (-d2 / (2.0 * bw * bw)).exp()
        };
        let rows = |d: &Vec<f64>, n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|i| d[i * 2..(i + 1) * 2].to_vec()).collect()
        };
        let (ar, br) = (rows(&a_data, 20), rows(&b_data, 15));
        let mut kaa = 0.0;
        for u in &ar {
            for v in &ar {
                kaa += k(u, v);
            }
        }
        kaa /= 400.0;
        let mut kbb = 0.0;
        for u in &br {
            for v in &br {
                kbb += k(u, v);
            }
        }
        kbb /= 225.0;
        let mut kab = 0.0;
        for u in &ar {
            for v in &br {
                kab += k(u, v);
            }
        }
        kab /= 300.0;
        let expected = (kaa + kbb - 2.0 * kab).max(0.0);
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn mmd_of_separated_point_masses() {
        // Distance >> bandwidth: cross term vanishes, within term is 1.
        let a = Tensor::from_rows(&vec![vec![0.0, 0.0]; 10]).unwrap();
        let b = Tensor::from_rows(&vec![vec![100.0, 0.0]; 10]).unwrap();
        let v = mmd2_rbf(&a, &b, 0.5).unwrap();
        assert!((v - 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn mmd_separates_ring_from_single_mode() {
        let spec = ring8();
        let mut rng = stream(8, Stream::EvalData);
        let (real_a, _) = sample_mixture(&spec, 2000, &mut rng);
        let (real_b, _) = sample_mixture(&spec, 2000, &mut rng);
        let single = MixtureSpec::new(
            2,
            vec![MixtureComponent {
                mean: vec![2.0, 0.0],
                variance: 0.01,
                weight: 1.0,
            }],
        )
        .unwrap();
        let (collapsed, _) = sample_mixture(&single, 2000, &mut rng);
        let bw = median_pairwise_distance(&real_a);
        let same = mmd2_rbf(&real_a, &real_b, bw).unwrap();
        let different = mmd2_rbf(&collapsed, &real_a, bw).unwrap();
        assert!(
            different > 10.0 * same,
            "same {same} vs different {different}"
        );
    }

    #[test]
    fn bandwidth_must_be_positive() {
        let a = Tensor::from_rows(&[vec![0.0]]).unwrap();
        assert!(mmd2_rbf(&a, &a, 0.0).is_err());
        assert!(mmd2_rbf(&a, &a, -1.0).is_err());
    }

    #[test]
    fn csv_row_has_fixed_column_count() {
        let spec = ring8();
        let rows = vec![spec.components[0].mean.clone(); 4];
        let report = evaluate(
            &Tensor::from_rows(&rows).unwrap(),
            None,
            &spec,
            &EvalSettings::default(),
        )
        .unwrap();
        let header_cols = EvalReport::csv_header().split(',').count();
        let row = report.csv_row("run-1", 7, 25000);
        assert_eq!(row.split(',').count(), header_cols);
        assert!(row.starts_with("run-1,7,25000,1,"));
    }
}
