// Temporary calibration harness: trains at experiment scale and compares
// against the Gauss-Newton baseline on a paired test set.

use std::time::Instant;

use otdoa_core::channel::ChannelProfile;
use otdoa_core::dataset::{generate_dataset, GeneratorConfig};
use otdoa_core::eval::{run_comparison, ComparisonConfig, LabeledMethod, Method};
use otdoa_core::mlp::{train, MlpSpec, TrainConfig};
use otdoa_core::solver::SolverOptions;

fn main() {
    let d_cell = 500.0;
    let profile = ChannelProfile::awgn();
    let config = GeneratorConfig {
        d_cell,
        n_bs: 7,
        profile: profile.clone(),
        fs: 1.92e6,
        quantize: true,
        n_samples: 100_000,
        include_los: false,
        seed: 7001,
    };
    let ds = generate_dataset(&config).unwrap();
    let (feats, tgts) = ds.feature_rows();
    let spec = MlpSpec::standard(18).unwrap();

    // distribution of raw GN errors, to size the divergence problem
    {
        let cmp = ComparisonConfig {
            d_cell,
            n_bs: 7,
            profile: profile.clone(),
            fs: 1.92e6,
            n_test: 1000,
            seed: 9103,
            solver: SolverOptions::default(),
        };
        let methods = [LabeledMethod {
            label: "gn".into(),
            method: Method::GaussNewton,
        }];
        let report = run_comparison(&cmp, &methods).unwrap();
        let vals = report.results[0].cdf.values();
        let r_region = d_cell * (1.0 + 1.0 / 3.0f64.sqrt());
        let beyond_region = vals.iter().filter(|&&e| e > r_region).count();
        let beyond_10d = vals.iter().filter(|&&e| e > 10.0 * d_cell).count();
        let clamped_mean: f64 = vals
            .iter()
            .map(|&e| e.min(2.0 * r_region))
            .sum::<f64>()
            / vals.len() as f64;
        println!(
            "raw GN: median {:.2}, p90 {:.2}, beyond region {} / 1000, beyond 10d {} / 1000, crude-capped mean {:.2}",
            report.results[0].cdf.median(),
            report.results[0].cdf.quantile(0.9),
            beyond_region,
            beyond_10d,
            clamped_mean
        );
    }

    for epochs in [30usize, 60, 100] {
        let cfg = TrainConfig {
            epochs,
            seed: 7001,
            ..TrainConfig::default()
        };
        let t1 = Instant::now();
        let out = train(&spec, &cfg, &feats, &tgts).unwrap();
        let dt = t1.elapsed();

        let cmp = ComparisonConfig {
            d_cell,
            n_bs: 7,
            profile: profile.clone(),
            fs: 1.92e6,
            n_test: 1000,
            seed: 9103,
            solver: SolverOptions::default(),
        };
        let methods = [
            LabeledMethod {
                label: "gn".into(),
                method: Method::GaussNewton,
            },
            LabeledMethod {
                label: "dnn".into(),
                method: Method::Dnn {
                    params: &out.params,
                    include_los: false,
                },
            },
        ];
        let report = run_comparison(&cmp, &methods).unwrap();
        let gn = &report.results[0];
        let dnn = &report.results[1];
        println!(
            "epochs {:3}: {:6.2?}  best_val {:.5} @ {:2}  gn mean {:.2} med {:.2} | dnn mean {:.2} med {:.2} | improvement {:.1}%",
            epochs,
            dt,
            out.log[out.best_epoch].val_mse,
            out.best_epoch,
            gn.cdf.mean(),
            gn.cdf.median(),
            dnn.cdf.mean(),
            dnn.cdf.median(),
            100.0 * dnn.improvement_vs_gn.unwrap()
        );
    }
}
