//! Feature assembly, dataset generation at scale, and the text dataset
//! format (data file plus `.meta` sidecar).
//!
//! Features per neighbor are the interleaved triple
//! `(c * rstd / d_cell, bs_x / d_cell, bs_y / d_cell)`; when LOS flags are
//! requested they are appended as a trailing block. Targets are the UE
//! position divided by `d_cell`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::channel::{measure_toa, measure_toa_exact, ChannelProfile, MeasurementSet, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::geometry::{self, BsLayout};
use crate::rng::{derive_rng, SeedDomain};
use crate::scalar::Scalar;

pub const SCHEMA_VERSION: u32 = 1;
pub const DATASET_FORMAT: &str = "otdoa-dataset/1";

/// Feature layout descriptor: how many BSs contribute and whether LOS
/// flags are appended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureSchema {
    pub n_bs: usize,
    pub include_los: bool,
}

impl FeatureSchema {
    pub fn new(n_bs: usize, include_los: bool) -> Result<Self> {
        if !(geometry::MIN_BS..=geometry::MAX_BS).contains(&n_bs) {
            return Err(Error::domain(format!(
                "BS count must be in {}..={}, got {n_bs}",
                geometry::MIN_BS,
                geometry::MAX_BS
            )));
        }
        Ok(Self { n_bs, include_los })
    }

    /// Number of feature columns.
    pub fn width(&self) -> usize {
        let neighbors = self.n_bs - 1;
        3 * neighbors + if self.include_los { neighbors } else { 0 }
    }

    /// Stable identifier embedded in dataset and model files.
    pub fn tag(&self) -> String {
        format!(
            "v{} n_bs={} los={}",
            SCHEMA_VERSION, self.n_bs, self.include_los as u8
        )
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        let mut n_bs = None;
        let mut los = None;
        let mut version = None;
        for part in tag.split_whitespace() {
            if let Some(v) = part.strip_prefix('v') {
                version = v.parse::<u32>().ok();
            } else if let Some(v) = part.strip_prefix("n_bs=") {
                n_bs = v.parse::<usize>().ok();
            } else if let Some(v) = part.strip_prefix("los=") {
                los = match v {
                    "0" => Some(false),
                    "1" => Some(true),
                    _ => None,
                };
            }
        }
        match (version, n_bs, los) {
            (Some(v), Some(n), Some(l)) if v == SCHEMA_VERSION => Self::new(n, l),
            _ => Err(Error::format(format!("unrecognized schema tag `{tag}`"))),
        }
    }

    /// Documented column order of the data file.
    pub fn column_names(&self) -> Vec<String> {
        let mut cols = Vec::with_capacity(self.width() + 2);
        for i in 1..self.n_bs {
            cols.push(format!("rstd_{i}"));
            cols.push(format!("bs_x_{i}"));
            cols.push(format!("bs_y_{i}"));
        }
        if self.include_los {
            for i in 1..self.n_bs {
                cols.push(format!("los_{i}"));
            }
        }
        cols.push("target_x".into());
        cols.push("target_y".into());
        cols
    }
}

/// One training example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<F> {
    pub features: Vec<F>,
    pub target: [F; 2],
}

/// Generation knobs for one dataset.
#[derive(Clone, Debug)]
pub struct GeneratorConfig<F> {
    pub d_cell: F,
    pub n_bs: usize,
    pub profile: ChannelProfile,
    pub fs: F,
    /// When false, measurements skip the sampling grid and the channel
    /// error entirely (infinite-rate surrogate).
    pub quantize: bool,
    pub n_samples: usize,
    pub include_los: bool,
    pub seed: u64,
}

/// A generated dataset together with its schema and provenance.
#[derive(Clone, Debug)]
pub struct Dataset<F> {
    pub schema: FeatureSchema,
    pub config: GeneratorConfig<F>,
    pub samples: Vec<Sample<F>>,
}

/// Normalized feature vector for one measurement.
pub fn build_features<F: Scalar>(
    m: &MeasurementSet<F>,
    layout: &BsLayout<F>,
    include_los: bool,
) -> Result<Vec<F>> {
    let neighbors = layout.n_bs() - 1;
    if m.rstd.len() != neighbors || m.los_status.len() != neighbors {
        return Err(Error::dimension(format!(
            "measurement covers {} neighbors, layout has {}",
            m.rstd.len(),
            neighbors
        )));
    }
    let d = layout.d_cell();
    let c = F::from(SPEED_OF_LIGHT).unwrap();
    let mut features = Vec::with_capacity(3 * neighbors + if include_los { neighbors } else { 0 });
    for (i, &bs) in layout.positions().iter().enumerate().skip(1) {
        features.push(c * m.rstd[i - 1] / d);
        features.push(bs.x / d);
        features.push(bs.y / d);
    }
    if include_los {
        for &s in &m.los_status {
            features.push(F::from(s).unwrap());
        }
    }
    Ok(features)
}

/// Draws `n_samples` independent (UE, measurement) realizations and
/// assembles them into normalized samples. Sample `i` owns the random
/// stream `(seed, DatasetSample, i)`, so generation order is immaterial
/// and any sample can be reproduced in isolation.
pub fn generate_dataset<F: Scalar>(config: &GeneratorConfig<F>) -> Result<Dataset<F>> {
    if config.n_samples == 0 {
        return Err(Error::domain("a dataset needs at least one sample"));
    }
    let layout = BsLayout::new(config.d_cell, config.n_bs)?;
    let schema = FeatureSchema::new(config.n_bs, config.include_los)?;
    let d = config.d_cell;
    let mut samples = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let mut rng = derive_rng(config.seed, SeedDomain::DatasetSample, i as u64);
        let p = layout.sample_ue(&mut rng);
        let m = if config.quantize {
            measure_toa(p, &layout, &config.profile, config.fs, &mut rng)
        } else {
            measure_toa_exact(p, &layout)
        };
        let features = build_features(&m, &layout, config.include_los)?;
        samples.push(Sample {
            features,
            target: [p.x / d, p.y / d],
        });
    }
    Ok(Dataset {
        schema,
        config: config.clone(),
        samples,
    })
}

impl<F: Scalar> Dataset<F> {
    /// Canonical rendering of the sample block: one line per sample,
    /// space-separated shortest round-trip floats.
    pub fn render_data(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let mut first = true;
            for v in s.features.iter().chain(&s.target[..]) {
                if !first {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
                first = false;
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the rendered sample block.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.render_data().as_bytes()))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Errors unless the dataset carries the expected feature schema.
    pub fn require_schema(&self, expected: &FeatureSchema) -> Result<()> {
        if &self.schema != expected {
            return Err(Error::format(format!(
                "dataset schema `{}` does not match expected `{}`",
                self.schema.tag(),
                expected.tag()
            )));
        }
        Ok(())
    }

    /// Feature rows and targets as parallel slices for training.
    pub fn feature_rows(&self) -> (Vec<&[F]>, Vec<[F; 2]>) {
        let feats = self.samples.iter().map(|s| s.features.as_slice()).collect();
        let tgts = self.samples.iter().map(|s| s.target).collect();
        (feats, tgts)
    }
}

fn meta_path(data_path: &Path) -> PathBuf {
    data_path.with_extension("meta")
}

/// Writes the data file and its `.meta` sidecar (same stem, `meta`
/// extension).
pub fn save_dataset<F: Scalar>(dataset: &Dataset<F>, data_path: &Path) -> Result<()> {
    let data = dataset.render_data();
    let digest = hex::encode(Sha256::digest(data.as_bytes()));

    let cfg = &dataset.config;
    let probs = cfg.profile.probabilities();
    let mut meta = String::new();
    let _ = writeln!(meta, "format = {DATASET_FORMAT}");
    let _ = writeln!(meta, "schema = {}", dataset.schema.tag());
    let _ = writeln!(meta, "d_cell = {}", cfg.d_cell);
    let _ = writeln!(meta, "fs = {}", cfg.fs);
    let _ = writeln!(meta, "quantize = {}", cfg.quantize);
    let _ = writeln!(meta, "channel = {}", cfg.profile.name());
    let _ = writeln!(
        meta,
        "channel_probs = {} {} {} {}",
        probs[0], probs[1], probs[2], probs[3]
    );
    let _ = writeln!(meta, "seed = {}", cfg.seed);
    let _ = writeln!(meta, "count = {}", dataset.samples.len());
    let _ = writeln!(meta, "columns = {}", dataset.schema.column_names().join(" "));
    let _ = writeln!(meta, "digest = sha256:{digest}");

    fs::write(data_path, data)?;
    fs::write(meta_path(data_path), meta)?;
    Ok(())
}

/// Reads a dataset written by [`save_dataset`], verifying the recorded
/// digest and column count.
pub fn load_dataset<F: Scalar>(data_path: &Path) -> Result<Dataset<F>> {
    let meta_text = fs::read_to_string(meta_path(data_path))?;
    let mut format = None;
    let mut schema = None;
    let mut d_cell = None;
    let mut fs_hz = None;
    let mut quantize = None;
    let mut channel = None;
    let mut channel_probs = None;
    let mut seed = None;
    let mut count = None;
    let mut digest = None;
    for line in meta_text.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "format" => format = Some(value.to_string()),
            "schema" => schema = Some(FeatureSchema::from_tag(value)?),
            "d_cell" => d_cell = value.parse::<f64>().ok(),
            "fs" => fs_hz = value.parse::<f64>().ok(),
            "quantize" => quantize = value.parse::<bool>().ok(),
            "channel" => channel = Some(value.to_string()),
            "channel_probs" => {
                let parts: Vec<f64> = value
                    .split_whitespace()
                    .filter_map(|t| t.parse().ok())
                    .collect();
                if parts.len() == 4 {
                    channel_probs = Some([parts[0], parts[1], parts[2], parts[3]]);
                }
            }
            "seed" => seed = value.parse::<u64>().ok(),
            "count" => count = value.parse::<usize>().ok(),
            "digest" => digest = value.strip_prefix("sha256:").map(str::to_string),
            _ => {}
        }
    }

    if format.as_deref() != Some(DATASET_FORMAT) {
        return Err(Error::format(format!(
            "expected dataset format {DATASET_FORMAT}, found {format:?}"
        )));
    }
    let schema = schema.ok_or_else(|| Error::format("missing schema in sidecar"))?;
    let (d_cell, fs_hz) = match (d_cell, fs_hz) {
        (Some(d), Some(f)) => (d, f),
        _ => return Err(Error::format("missing d_cell or fs in sidecar")),
    };
    let quantize = quantize.ok_or_else(|| Error::format("missing quantize in sidecar"))?;
    let channel = channel.ok_or_else(|| Error::format("missing channel in sidecar"))?;
    let probs = channel_probs.ok_or_else(|| Error::format("missing channel_probs"))?;
    let seed = seed.ok_or_else(|| Error::format("missing seed in sidecar"))?;
    let count = count.ok_or_else(|| Error::format("missing count in sidecar"))?;
    let digest = digest.ok_or_else(|| Error::format("missing digest in sidecar"))?;

    let data = fs::read_to_string(data_path)?;
    let actual = hex::encode(Sha256::digest(data.as_bytes()));
    if actual != digest {
        return Err(Error::format(format!(
            "data file digest mismatch: sidecar says {digest}, file hashes to {actual}"
        )));
    }

    let width = schema.width();
    let mut samples = Vec::with_capacity(count);
    for (lineno, line) in data.lines().enumerate() {
        let values: Vec<F> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::format(format!("line {}: bad value `{t}`: {e}", lineno + 1)))
                    .map(|v| F::from(v).unwrap())
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != width + 2 {
            return Err(Error::format(format!(
                "line {}: expected {} columns, found {}",
                lineno + 1,
                width + 2,
                values.len()
            )));
        }
        let target = [values[width], values[width + 1]];
        samples.push(Sample {
            features: values[..width].to_vec(),
            target,
        });
    }
    if samples.len() != count {
        return Err(Error::format(format!(
            "sidecar promises {count} samples, data file holds {}",
            samples.len()
        )));
    }

    let profile = ChannelProfile::from_probabilities(&channel, probs)
        .map_err(|e| Error::format(format!("bad channel_probs: {e}")))?;
    Ok(Dataset {
        schema,
        config: GeneratorConfig {
            d_cell: F::from(d_cell).unwrap(),
            n_bs: schema.n_bs,
            profile,
            fs: F::from(fs_hz).unwrap(),
            quantize,
            n_samples: count,
            include_los: schema.include_los,
            seed,
        },
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{self, SolverOptions};
    use approx::assert_relative_eq;

    fn small_config(include_los: bool) -> GeneratorConfig<f64> {
        GeneratorConfig {
            d_cell: 500.0,
            n_bs: 7,
            profile: ChannelProfile::awgn(),
            fs: 1.92e6,
            quantize: true,
            n_samples: 200,
            include_los,
            seed: 2024,
        }
    }

    #[test]
    fn schema_widths_and_tags() {
        let plain = FeatureSchema::new(7, false).unwrap();
        assert_eq!(plain.width(), 18);
        let flagged = FeatureSchema::new(7, true).unwrap();
        assert_eq!(flagged.width(), 24);
        let reduced = FeatureSchema::new(4, false).unwrap();
        assert_eq!(reduced.width(), 9);

        assert_eq!(FeatureSchema::from_tag(&flagged.tag()).unwrap(), flagged);
        assert!(FeatureSchema::from_tag("v9 n_bs=7 los=0").is_err());
        assert!(FeatureSchema::from_tag("garbage").is_err());
    }

    #[test]
    fn features_interleave_rstd_and_coordinates() {
        let layout = BsLayout::<f64>::new(500.0, 7).unwrap();
        let m = MeasurementSet {
            toa_true: vec![0.0; 7],
            toa_measured: vec![0.0; 7],
            rstd: vec![0.0; 6],
            los_status: vec![0; 6],
            fs: 1.92e6,
        };
        let f = build_features(&m, &layout, false).unwrap();
        assert_eq!(f.len(), 18);
        // neighbor 1 at (1, 0), neighbor 2 at (cos 60°, sin 60°)
        assert_eq!(&f[0..3], &[0.0, 1.0, 0.0]);
        assert_eq!(f[3], 0.0);
        assert_relative_eq!(f[4], 0.5, max_relative = 1e-15);
        assert_relative_eq!(f[5], 0.8660254037844386, max_relative = 1e-15);

        let with_flags = build_features(&m, &layout, true).unwrap();
        assert_eq!(with_flags.len(), 24);
        assert!(with_flags[18..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn unquantized_features_are_scale_invariant() {
        let small = BsLayout::<f64>::new(500.0, 7).unwrap();
        let big = BsLayout::<f64>::new(1000.0, 7).unwrap();
        let p = crate::geometry::Point2::new(133.7, -91.25);
        let p2 = p * 2.0;
        let m1 = measure_toa_exact(p, &small);
        let m2 = measure_toa_exact(p2, &big);
        let f1 = build_features(&m1, &small, false).unwrap();
        let f2 = build_features(&m2, &big, false).unwrap();
        for (a, b) in f1.iter().zip(&f2) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn generated_samples_are_reproducible_per_index() {
        let config = small_config(true);
        let ds = generate_dataset(&config).unwrap();
        assert_eq!(ds.len(), 200);

        // rebuild sample 17 from its own stream
        let layout = BsLayout::new(config.d_cell, config.n_bs).unwrap();
        let mut rng = derive_rng(config.seed, SeedDomain::DatasetSample, 17);
        let p = layout.sample_ue(&mut rng);
        let m = measure_toa(p, &layout, &config.profile, config.fs, &mut rng);
        let features = build_features(&m, &layout, true).unwrap();
        assert_eq!(ds.samples[17].features, features);
        assert_eq!(ds.samples[17].target, [p.x / 500.0, p.y / 500.0]);

        // feature RSTD slots equal c * rstd / d_cell exactly
        for (slot, rstd) in (0..6).map(|i| (3 * i, m.rstd[i])) {
            let expected = SPEED_OF_LIGHT * rstd / 500.0;
            assert_eq!(ds.samples[17].features[slot].to_bits(), expected.to_bits());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = small_config(false);
        let a = generate_dataset(&config).unwrap();
        let b = generate_dataset(&config).unwrap();
        assert_eq!(a.render_data(), b.render_data());
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn feature_magnitudes_respect_the_construction_bound() {
        // |normalized rstd| <= 1 (geometry) + 4 c/(fs d): one sample of
        // rounding split plus an error spread of up to 3 samples
        let config = GeneratorConfig {
            n_samples: 3000,
            profile: ChannelProfile::eva(),
            ..small_config(false)
        };
        let ds = generate_dataset(&config).unwrap();
        let bound = 1.0 + 4.0 * SPEED_OF_LIGHT / (config.fs * config.d_cell);
        for s in &ds.samples {
            for i in 0..6 {
                assert!(s.features[3 * i].abs() <= bound);
            }
            assert!(s.target[0].abs() <= 1.5 + 1e-12);
            assert!(s.target[1].abs() <= 1.5 + 1e-12);
        }
    }

    #[test]
    fn exact_generation_closes_the_loop_with_the_solver() {
        let config = GeneratorConfig {
            quantize: false,
            profile: ChannelProfile::error_free(),
            n_samples: 50,
            ..small_config(false)
        };
        let ds = generate_dataset(&config).unwrap();
        let layout = BsLayout::new(config.d_cell, config.n_bs).unwrap();
        let opts = SolverOptions {
            step_tol: 1e-9,
            ..SolverOptions::default()
        };
        for s in &ds.samples {
            let rstd_m: Vec<f64> = (0..6).map(|i| s.features[3 * i] * 500.0).collect();
            let result = solver::solve(&rstd_m, &layout, &opts).unwrap();
            let target = crate::geometry::Point2::new(s.target[0] * 500.0, s.target[1] * 500.0);
            assert!(result.estimate.dist(target) < 1e-6 * 500.0);
        }
    }

    #[test]
    fn dataset_files_round_trip() {
        let dir = std::env::temp_dir().join(format!("otdoa-core-ds-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("small.data");

        let config = small_config(true);
        let ds = generate_dataset(&config).unwrap();
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset::<f64>(&path).unwrap();
        assert_eq!(loaded.schema, ds.schema);
        assert_eq!(loaded.samples, ds.samples);
        assert_eq!(loaded.config.seed, config.seed);
        assert_eq!(loaded.config.profile.name(), "awgn");

        // rewriting produces identical bytes
        let first = fs::read(&path).unwrap();
        save_dataset(&ds, &path).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());

        // tampering with the data file breaks the digest check
        let mut text = String::from_utf8(first).unwrap();
        text.replace_range(0..1, "9");
        fs::write(&path, &text).unwrap();
        assert!(matches!(load_dataset::<f64>(&path), Err(Error::Format(_))));
    }

    #[test]
    fn digest_changes_iff_samples_change() {
        let config = small_config(false);
        let mut ds = generate_dataset(&config).unwrap();
        let before = ds.digest();
        assert_eq!(before, generate_dataset(&config).unwrap().digest());
        ds.samples[0].features[0] += 1e-9;
        assert_ne!(before, ds.digest());
    }

    #[test]
    fn schema_mismatch_is_a_format_error() {
        let config = small_config(false);
        let ds = generate_dataset(&config).unwrap();
        let expected = FeatureSchema::new(7, true).unwrap();
        assert!(matches!(
            ds.require_schema(&expected),
            Err(Error::Format(_))
        ));
    }
}
