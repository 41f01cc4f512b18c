//! Monte Carlo evaluation: empirical error distributions, the quantized
//! RSTD alphabet, and paired solver-vs-network comparisons.

use crate::channel::{measure_toa, ChannelProfile, SPEED_OF_LIGHT};
use crate::dataset::{build_features, FeatureSchema};
use crate::error::{Error, Result};
use crate::geometry::BsLayout;
use crate::mlp::{forward, MlpParams};
use crate::rng::{derive_rng, SeedDomain};
use crate::scalar::Scalar;
use crate::solver::{solve, SolverOptions};

/// Empirical distribution of a scalar quantity (positioning errors,
/// normalized RSTDs, ...): sorted values with quantile and mean accessors.
#[derive(Clone, Debug)]
pub struct ErrorCdf<F> {
    sorted: Vec<F>,
    mean: F,
}

impl<F: Scalar> ErrorCdf<F> {
    pub fn new(mut values: Vec<F>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("empirical distribution of nothing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("distribution values must be finite"));
        }
        values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = values.iter().copied().sum::<F>() / F::from(values.len()).unwrap();
        Ok(Self {
            sorted: values,
            mean,
        })
    }

    pub fn mean(&self) -> F {
        self.mean
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[F] {
        &self.sorted
    }

    /// Linear-interpolation quantile; `q` is clamped to [0, 1].
    pub fn quantile(&self, q: F) -> F {
        let q = q.max(F::zero()).min(F::one());
        let n = self.sorted.len();
        if n == 1 {
            return self.sorted[0];
        }
        let pos = q * F::from(n - 1).unwrap();
        let lo = pos.floor().to_usize().unwrap().min(n - 2);
        let frac = pos - F::from(lo).unwrap();
        self.sorted[lo] + (self.sorted[lo + 1] - self.sorted[lo]) * frac
    }

    pub fn median(&self) -> F {
        self.quantile(F::from(0.5).unwrap())
    }

    /// Empirical CDF at `x`: the fraction of values `<= x`.
    pub fn fraction_below(&self, x: F) -> F {
        let count = self.sorted.partition_point(|&v| v <= x);
        F::from(count).unwrap() / F::from(self.sorted.len()).unwrap()
    }

    /// Number of distinct stored values (exact equality).
    pub fn distinct_values(&self) -> usize {
        let mut count = 1;
        for w in self.sorted.windows(2) {
            if w[0] != w[1] {
                count += 1;
            }
        }
        count
    }

    /// `(value, cdf)` pairs suitable for plotting a staircase.
    pub fn points(&self) -> impl Iterator<Item = (F, F)> + '_ {
        let n = F::from(self.sorted.len()).unwrap();
        self.sorted
            .iter()
            .enumerate()
            .map(move |(i, &v)| (v, F::from(i + 1).unwrap() / n))
    }
}

/// The quantized normalized RSTD grid for one inter-site distance and
/// sampling rate: values `k * c / (fs * d_cell)` for integer `k` between
/// the rounded geometric extremes.
#[derive(Clone, Debug)]
pub struct RstdAlphabet<F> {
    pub k_min: i64,
    pub k_max: i64,
    pub values: Vec<F>,
}

impl<F: Scalar> RstdAlphabet<F> {
    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    /// Grid spacing `c / (fs * d_cell)`.
    pub fn spacing(d_cell: F, fs: F) -> F {
        F::from(SPEED_OF_LIGHT).unwrap() / (fs * d_cell)
    }
}

/// Rounded half away from zero, matching `f64::round`.
fn round_half_away<F: Scalar>(x: F) -> i64 {
    if (x.abs().fract() - F::from(0.5).unwrap()).abs() == F::zero() {
        log::warn!("rounding an exact half-sample boundary: {x}");
    }
    x.round().to_i64().unwrap()
}

/// Quantized normalized RSTD alphabet over the nominal distance-difference
/// range `[-d_cell, d_cell / 3]`.
pub fn rstd_alphabet<F: Scalar>(d_cell: F, fs: F) -> RstdAlphabet<F> {
    debug_assert!(d_cell > F::zero() && fs > F::zero());
    let c = F::from(SPEED_OF_LIGHT).unwrap();
    let ratio = fs * d_cell / c;
    let k_min = -round_half_away(ratio);
    let k_max = round_half_away(ratio / F::from(3.0).unwrap());
    let spacing = RstdAlphabet::spacing(d_cell, fs);
    let values = (k_min..=k_max)
        .map(|k| F::from(k).unwrap() * spacing)
        .collect();
    RstdAlphabet {
        k_min,
        k_max,
        values,
    }
}

/// Empirical distribution of quantized normalized RSTDs over random UEs
/// (sampling-grid quantization only, no channel error), pooled across
/// neighbors. This is the staircase whose step count grows with the
/// inter-site distance.
pub fn normalized_diff_cdf<F: Scalar>(
    layout: &BsLayout<F>,
    fs: F,
    n_draws: usize,
    seed: u64,
) -> Result<ErrorCdf<F>> {
    if n_draws == 0 {
        return Err(Error::domain("need at least one draw"));
    }
    let profile = ChannelProfile::error_free();
    let c = F::from(SPEED_OF_LIGHT).unwrap();
    let d = layout.d_cell();
    let mut values = Vec::with_capacity(n_draws * (layout.n_bs() - 1));
    for i in 0..n_draws {
        let mut rng = derive_rng(seed, SeedDomain::EvalSample, i as u64);
        let p = layout.sample_ue(&mut rng);
        let m = measure_toa(p, layout, &profile, fs, &mut rng);
        for &rstd in &m.rstd {
            values.push(c * rstd / d);
        }
    }
    ErrorCdf::new(values)
}

/// Scenario shared by every method in one comparison.
#[derive(Clone, Debug)]
pub struct ComparisonConfig<F> {
    pub d_cell: F,
    pub n_bs: usize,
    pub profile: ChannelProfile,
    pub fs: F,
    pub n_test: usize,
    pub seed: u64,
    pub solver: SolverOptions<F>,
}

/// A positioning method under evaluation.
pub enum Method<'a, F> {
    GaussNewton,
    Dnn {
        params: &'a MlpParams<F>,
        include_los: bool,
    },
}

pub struct LabeledMethod<'a, F> {
    pub label: String,
    pub method: Method<'a, F>,
}

/// Per-method outcome of a comparison.
#[derive(Clone, Debug)]
pub struct MethodResult<F> {
    pub label: String,
    pub cdf: ErrorCdf<F>,
    /// `1 - mean / mean_of_gauss_newton`, when a Gauss-Newton entry ran.
    pub improvement_vs_gn: Option<F>,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport<F> {
    pub results: Vec<MethodResult<F>>,
    pub config_echo: String,
}

/// Evaluates every method on the same `n_test` seeded measurement
/// realizations (paired comparison) and reports one error CDF per method.
pub fn run_comparison<F: Scalar>(
    config: &ComparisonConfig<F>,
    methods: &[LabeledMethod<'_, F>],
) -> Result<ComparisonReport<F>> {
    if methods.is_empty() {
        return Err(Error::domain("no methods to compare"));
    }
    if config.n_test == 0 {
        return Err(Error::domain("need at least one test draw"));
    }
    let layout = BsLayout::new(config.d_cell, config.n_bs)?;
    for m in methods {
        if let Method::Dnn {
            params,
            include_los,
        } = &m.method
        {
            let schema = FeatureSchema::new(config.n_bs, *include_los)?;
            if params.input_width() != schema.width() {
                return Err(Error::dimension(format!(
                    "method `{}` expects {} inputs but schema `{}` provides {}",
                    m.label,
                    params.input_width(),
                    schema.tag(),
                    schema.width()
                )));
            }
        }
    }

    let d = config.d_cell;
    let mut errors: Vec<Vec<F>> = vec![Vec::with_capacity(config.n_test); methods.len()];
    for i in 0..config.n_test {
        let mut rng = derive_rng(config.seed, SeedDomain::EvalSample, i as u64);
        let p = layout.sample_ue(&mut rng);
        let m = measure_toa(p, &layout, &config.profile, config.fs, &mut rng);
        let rstd_m = m.rstd_meters();
        for (slot, lm) in errors.iter_mut().zip(methods) {
            let estimate = match &lm.method {
                Method::GaussNewton => solve(&rstd_m, &layout, &config.solver)?.estimate,
                Method::Dnn {
                    params,
                    include_los,
                } => {
                    let features = build_features(&m, &layout, *include_los)?;
                    let out = forward(params, &features)?;
                    crate::geometry::Point2::new(out[0] * d, out[1] * d)
                }
            };
            slot.push(estimate.dist(p));
        }
    }

    let gn_mean = methods
        .iter()
        .position(|m| matches!(m.method, Method::GaussNewton))
        .map(|idx| errors[idx].iter().copied().sum::<F>() / F::from(config.n_test).unwrap());

    let mut results = Vec::with_capacity(methods.len());
    for (lm, errs) in methods.iter().zip(errors) {
        let cdf = ErrorCdf::new(errs)?;
        let improvement = match (&lm.method, gn_mean) {
            (Method::Dnn { .. }, Some(gn)) => Some(F::one() - cdf.mean() / gn),
            _ => None,
        };
        results.push(MethodResult {
            label: lm.label.clone(),
            cdf,
            improvement_vs_gn: improvement,
        });
    }

    Ok(ComparisonReport {
        results,
        config_echo: format!(
            "d_cell={} n_bs={} channel={} fs={} n_test={} seed={}",
            config.d_cell,
            config.n_bs,
            config.profile.name(),
            config.fs,
            config.n_test,
            config.seed
        ),
    })
}
