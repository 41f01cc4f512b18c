//! TOA measurement model: propagation delay, sample-grid quantization,
//! empirical per-channel integer-sample errors, LOS flags, and RSTD
//! formation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{BsLayout, Point2};
use crate::scalar::Scalar;

/// Speed of light in m/s, exact SI value.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Integer-sample error support shared by all channel profiles, in units
/// of the sampling period.
pub const ERROR_SUPPORT: [i8; 4] = [-1, 0, 1, 2];

/// Categorical distribution of integer-sample TOA errors for one channel
/// type, obtained by normalizing measured occurrence counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelProfile {
    name: String,
    probabilities: [f64; 4],
}

impl ChannelProfile {
    /// Normalizes raw occurrence counts over [`ERROR_SUPPORT`].
    pub fn from_counts(name: &str, counts: [u64; 4]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::domain(
                "channel profile needs at least one nonzero count",
            ));
        }
        let total = total as f64;
        Ok(Self {
            name: name.to_string(),
            probabilities: counts.map(|c| c as f64 / total),
        })
    }

    /// Probabilities directly (must be non-negative and sum to 1).
    pub fn from_probabilities(name: &str, probabilities: [f64; 4]) -> Result<Self> {
        if probabilities.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::domain("probabilities must lie in [0, 1]"));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "probabilities must sum to 1, got {sum}"
            )));
        }
        Ok(Self {
            name: name.to_string(),
            probabilities,
        })
    }

    /// AWGN channel, standing in for the pure LOS scenario.
    pub fn awgn() -> Self {
        Self::from_counts("awgn", [90, 6842, 68, 0]).unwrap()
    }

    /// Extended Pedestrian A channel.
    pub fn epa() -> Self {
        Self::from_counts("epa", [121, 6737, 138, 4]).unwrap()
    }

    /// Extended Vehicular A channel, standing in for mixed LOS/NLOS.
    pub fn eva() -> Self {
        Self::from_counts("eva", [376, 3586, 2502, 559]).unwrap()
    }

    /// Degenerate profile that never perturbs the quantized TOA.
    pub fn error_free() -> Self {
        Self::from_counts("clean", [0, 1, 0, 0]).unwrap()
    }

    /// Lookup by the names accepted in experiment configurations.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "awgn" => Some(Self::awgn()),
            "epa" => Some(Self::epa()),
            "eva" => Some(Self::eva()),
            "clean" => Some(Self::error_free()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn probabilities(&self) -> [f64; 4] {
        self.probabilities
    }

    /// Draws one integer-sample error.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> i8 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_positive = 1; // zero-error entry as a safe fallback
        for (idx, &p) in self.probabilities.iter().enumerate() {
            if p > 0.0 {
                last_positive = idx;
            }
            acc += p;
            if u < acc {
                return ERROR_SUPPORT[idx];
            }
        }
        ERROR_SUPPORT[last_positive]
    }
}

/// Per-BS TOA measurements and derived RSTDs for one UE realization.
#[derive(Clone, Debug)]
pub struct MeasurementSet<F> {
    /// True propagation delays, seconds, one per BS.
    pub toa_true: Vec<F>,
    /// Measured TOAs on the sampling grid, seconds.
    pub toa_measured: Vec<F>,
    /// `toa_measured[i] - toa_measured[0]`, one per neighbor.
    pub rstd: Vec<F>,
    /// Per-neighbor flag, 1 when the drawn error exceeded zero samples.
    pub los_status: Vec<u8>,
    /// Sampling rate in Hz; infinite for the unquantized model.
    pub fs: F,
}

impl<F: Scalar> MeasurementSet<F> {
    /// RSTDs converted to meters.
    pub fn rstd_meters(&self) -> Vec<F> {
        let c = F::from(SPEED_OF_LIGHT).unwrap();
        self.rstd.iter().map(|&t| t * c).collect()
    }
}

/// Propagation delay from `bs` to `p`.
pub fn toa_true<F: Scalar>(p: Point2<F>, bs: Point2<F>) -> F {
    p.dist(bs) / F::from(SPEED_OF_LIGHT).unwrap()
}

/// Measures the TOAs of every BS in `layout` for a UE at `p`: the true
/// delay is rounded to the nearest sample of the `fs` grid, then an
/// integer-sample error drawn from `profile` is added, independently per
/// BS. LOS flags record a positive error draw for each neighbor.
pub fn measure_toa<F: Scalar, R: Rng + ?Sized>(
    p: Point2<F>,
    layout: &BsLayout<F>,
    profile: &ChannelProfile,
    fs: F,
    rng: &mut R,
) -> MeasurementSet<F> {
    debug_assert!(fs > F::zero());
    let n = layout.n_bs();
    let mut toa_t = Vec::with_capacity(n);
    let mut toa_m = Vec::with_capacity(n);
    let mut los = Vec::with_capacity(n - 1);
    for (i, &bs) in layout.positions().iter().enumerate() {
        let t = toa_true(p, bs);
        let k = profile.draw(rng);
        let measured = ((t * fs).round() + F::from(k).unwrap()) / fs;
        toa_t.push(t);
        toa_m.push(measured);
        if i >= 1 {
            los.push(u8::from(k > 0));
        }
    }
    let rstd = compute_rstd(&toa_m).expect("layout has at least two BSs");
    MeasurementSet {
        toa_true: toa_t,
        toa_measured: toa_m,
        rstd,
        los_status: los,
        fs,
    }
}

/// Unquantized, error-free measurement: the infinite-sampling-rate
/// surrogate used to close the loop against the exact solver.
pub fn measure_toa_exact<F: Scalar>(p: Point2<F>, layout: &BsLayout<F>) -> MeasurementSet<F> {
    let toa_t: Vec<F> = layout.positions().iter().map(|&bs| toa_true(p, bs)).collect();
    let rstd = compute_rstd(&toa_t).expect("layout has at least two BSs");
    MeasurementSet {
        toa_measured: toa_t.clone(),
        toa_true: toa_t,
        rstd,
        los_status: vec![0; layout.n_bs() - 1],
        fs: F::infinity(),
    }
}

/// RSTDs by subtracting the reference TOA: `out[i-1] = toas[i] - toas[0]`.
pub fn compute_rstd<F: Scalar>(toas: &[F]) -> Result<Vec<F>> {
    if toas.len() < 2 {
        return Err(Error::domain(format!(
            "need at least 2 TOAs to form RSTDs, got {}",
            toas.len()
        )));
    }
    Ok(toas[1..].iter().map(|&t| t - toas[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, SeedDomain};
    use approx::assert_relative_eq;

    #[test]
    fn profiles_normalize_their_counts() {
        let awgn = ChannelProfile::awgn();
        let p = awgn.probabilities();
        assert_relative_eq!(p[0], 90.0 / 7000.0, max_relative = 1e-15);
        assert_relative_eq!(p[1], 6842.0 / 7000.0, max_relative = 1e-15);
        assert_relative_eq!(p[2], 68.0 / 7000.0, max_relative = 1e-15);
        assert_eq!(p[3], 0.0);

        // the EVA row is normalized by its own printed sum
        let eva = ChannelProfile::eva();
        let q = eva.probabilities();
        for (i, count) in [376.0, 3586.0, 2502.0, 559.0].iter().enumerate() {
            assert_relative_eq!(q[i], count / 7023.0, max_relative = 1e-15);
        }
        assert_relative_eq!(q.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        let clean = ChannelProfile::error_free();
        assert_eq!(clean.probabilities(), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn all_zero_counts_are_rejected() {
        assert!(matches!(
            ChannelProfile::from_counts("x", [0, 0, 0, 0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bad_probability_vectors_are_rejected() {
        assert!(ChannelProfile::from_probabilities("x", [0.5, 0.5, 0.1, 0.0]).is_err());
        assert!(ChannelProfile::from_probabilities("x", [-0.1, 1.1, 0.0, 0.0]).is_err());
        assert!(ChannelProfile::from_probabilities("x", [0.25, 0.25, 0.25, 0.25]).is_ok());
    }

    #[test]
    fn toa_true_is_distance_over_c() {
        let p = Point2::new(299792458.0f64, 0.0);
        assert_relative_eq!(toa_true(p, Point2::zero()), 1.0, max_relative = 1e-15);
        assert_eq!(toa_true(Point2::<f64>::zero(), Point2::zero()), 0.0);
        let q = Point2::new(500.0f64, 0.0);
        assert_relative_eq!(
            toa_true(q, Point2::zero()),
            500.0 / 299792458.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn quantizer_rounds_to_the_nearest_sample() {
        // 100 m is 0.64 samples at 1.92 MHz, so it rounds up to one full
        // sample: a measured range of c / fs ~ 156.14 m.
        let layout = BsLayout::<f64>::new(500.0, 7).unwrap();
        let p = Point2::new(100.0, 0.0);
        let mut rng = derive_rng(1, SeedDomain::DatasetSample, 0);
        let m = measure_toa(p, &layout, &ChannelProfile::error_free(), 1.92e6, &mut rng);
        let expected = 1.0 / 1.92e6;
        assert_relative_eq!(m.toa_measured[0], expected, max_relative = 1e-15);
        assert_relative_eq!(
            m.toa_measured[0] * SPEED_OF_LIGHT,
            156.14190520833332,
            max_relative = 1e-12
        );
    }

    #[test]
    fn error_free_measurements_stay_within_half_a_sample() {
        let layout = BsLayout::<f64>::new(500.0, 7).unwrap();
        let profile = ChannelProfile::error_free();
        let fs = 1.92e6;
        let mut rng = derive_rng(2, SeedDomain::DatasetSample, 0);
        for _ in 0..300 {
            let p = layout.sample_ue(&mut rng);
            let m = measure_toa(p, &layout, &profile, fs, &mut rng);
            for (t, q) in m.toa_true.iter().zip(&m.toa_measured) {
                assert!((q - t).abs() <= 0.5 / fs * (1.0 + 1e-12));
                // measured TOAs sit on the sampling grid
                let samples = q * fs;
                assert!((samples - samples.round()).abs() < 1e-6);
            }
            assert!(m.los_status.iter().all(|&s| s == 0));
        }
    }

    #[test]
    fn total_error_is_bounded_by_support() {
        let layout = BsLayout::<f64>::new(500.0, 7).unwrap();
        let profile = ChannelProfile::eva();
        let fs = 1.92e6;
        let mut rng = derive_rng(3, SeedDomain::DatasetSample, 0);
        for _ in 0..300 {
            let p = layout.sample_ue(&mut rng);
            let m = measure_toa(p, &layout, &profile, fs, &mut rng);
            for (t, q) in m.toa_true.iter().zip(&m.toa_measured) {
                assert!((q - t).abs() <= 2.5 / fs * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn los_flags_track_positive_errors() {
        let layout = BsLayout::<f64>::new(500.0, 7).unwrap();
        let fs = 1.92e6;
        let always_plus_one = ChannelProfile::from_counts("plus1", [0, 0, 1, 0]).unwrap();
        let never_positive = ChannelProfile::from_counts("nonpos", [1, 1, 0, 0]).unwrap();
        let mut rng = derive_rng(4, SeedDomain::DatasetSample, 0);
        let p = layout.sample_ue(&mut rng);
        let m = measure_toa(p, &layout, &always_plus_one, fs, &mut rng);
        assert!(m.los_status.iter().all(|&s| s == 1));
        let m = measure_toa(p, &layout, &never_positive, fs, &mut rng);
        assert!(m.los_status.iter().all(|&s| s == 0));

        // cross-check against the error reconstructed from the outputs
        let mixed = ChannelProfile::eva();
        for trial in 0..50 {
            let mut rng = derive_rng(5, SeedDomain::DatasetSample, trial);
            let p = layout.sample_ue(&mut rng);
            let m = measure_toa(p, &layout, &mixed, fs, &mut rng);
            for i in 1..layout.n_bs() {
                let grid = (m.toa_true[i] * fs).round() / fs;
                let k = ((m.toa_measured[i] - grid) * fs).round() as i64;
                assert_eq!(m.los_status[i - 1], u8::from(k > 0));
            }
        }
    }

    #[test]
    fn rstd_is_elementwise_subtraction() {
        assert_eq!(compute_rstd(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(compute_rstd(&[1.0, 3.0, 2.0]).unwrap(), vec![2.0, 1.0]);
        assert!(compute_rstd(&[1.0]).is_err());

        let mut rng = derive_rng(6, SeedDomain::DatasetSample, 0);
        let toas: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rstd = compute_rstd(&toas).unwrap();
        for i in 1..7 {
            assert_eq!(rstd[i - 1], toas[i] - toas[0]);
        }
    }

    #[test]
    fn draw_frequencies_match_the_profile() {
        let eva = ChannelProfile::eva();
        let n = 100_000;
        let mut counts = [0u64; 4];
        let mut rng = derive_rng(7, SeedDomain::DatasetSample, 0);
        for _ in 0..n {
            let k = eva.draw(&mut rng);
            let idx = ERROR_SUPPORT.iter().position(|&s| s == k).unwrap();
            counts[idx] += 1;
        }
        let plus_one_freq = counts[2] as f64 / n as f64;
        assert!((plus_one_freq - 2502.0 / 7023.0).abs() < 0.01);

        // chi-square sanity: 3 degrees of freedom, significance 0.001
        let mut stat = 0.0;
        for (obs, p) in counts.iter().zip(eva.probabilities()) {
            let expected = p * n as f64;
            stat += (*obs as f64 - expected).powi(2) / expected;
        }
        assert!(stat < 16.266, "chi-square statistic too large: {stat}");
    }

    #[test]
    fn awgn_never_draws_the_zero_probability_bin() {
        let awgn = ChannelProfile::awgn();
        let mut rng = derive_rng(8, SeedDomain::DatasetSample, 0);
        for _ in 0..100_000 {
            assert_ne!(awgn.draw(&mut rng), 2);
        }
    }

    #[test]
    fn exact_measurement_has_no_quantization() {
        let layout = BsLayout::<f64>::new(500.0, 7).unwrap();
        let mut rng = derive_rng(9, SeedDomain::DatasetSample, 0);
        let p = layout.sample_ue(&mut rng);
        let m = measure_toa_exact(p, &layout);
        assert_eq!(m.toa_true, m.toa_measured);
        assert!(m.fs.is_infinite());
        for i in 1..7 {
            let h = layout.distance_diff(p, i).unwrap();
            assert_relative_eq!(m.rstd[i - 1] * SPEED_OF_LIGHT, h, max_relative = 1e-9);
        }
    }
}
