use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::metrics::{exposure_correlation, mean_sd, pearson, pehe};
use super::spec::{Estimator, ExperimentSpec, Variant};
use crate::baselines::fraction_exposure;
use crate::error::Result;
use crate::graph::AttributedGraph;
use crate::model::{fit, ExposureKind, TrainConfig};
use crate::netgen::{augment_noise, generate, NetGenConfig, NetworkModel};
use crate::sim::{simulate, Mechanism, SimConfig, SimOutput};

/// One (seed, setting, estimator) cell. Columns after `corr_baseline` are
/// empty unless the run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub seed: u64,
    pub network: String,
    pub mechanism: String,
    pub estimator: String,
    pub pehe: Option<f64>,
    pub runtime_s: Option<f64>,
    pub corr_rho: Option<f64>,
    pub corr_rho_cf: Option<f64>,
    pub corr_baseline: Option<f64>,
    pub error: Option<String>,
}

/// Mean and standard deviation per (network, mechanism, estimator) over
/// the successful seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub network: String,
    pub mechanism: String,
    pub estimator: String,
    pub runs: usize,
    pub failures: usize,
    pub pehe_mean: Option<f64>,
    pub pehe_sd: Option<f64>,
    pub corr_rho_mean: Option<f64>,
    pub corr_rho_cf_mean: Option<f64>,
    pub corr_baseline_mean: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct DataSetting {
    model: NetworkModel,
    ba_m: usize,
    noise: f64,
    mechanism: Mechanism,
}

#[derive(Debug, Clone, Copy)]
struct FitSetting {
    variant: Variant,
    lambda_bal: f64,
    d_e: usize,
}

fn data_settings(spec: &ExperimentSpec) -> Vec<DataSetting> {
    let mut out = Vec::new();
    for &model in &spec.models {
        // The attachment parameter only matters for BA graphs.
        let ms: &[usize] = if model == NetworkModel::Ba { &spec.ba_m } else { &spec.ba_m[..1] };
        for &ba_m in ms {
            for &noise in &spec.noise {
                for &mechanism in &spec.mechanisms {
                    out.push(DataSetting { model, ba_m, noise, mechanism });
                }
            }
        }
    }
    out
}

fn fit_settings(spec: &ExperimentSpec, est: Estimator) -> Vec<FitSetting> {
    let learned = est.exposure == ExposureKind::Egonet;
    // Mask, encoder and exposure width do not exist for the baselines.
    let variants: &[Variant] = if learned { &spec.variants } else { &[Variant::Full] };
    let d_es: &[usize] = if learned { &spec.d_e } else { &spec.d_e[..1] };
    let mut out = Vec::new();
    for &variant in variants {
        for &lambda_bal in &spec.lambda_bal {
            for &d_e in d_es {
                out.push(FitSetting { variant, lambda_bal, d_e });
            }
        }
    }
    out
}

fn network_label(d: &DataSetting) -> String {
    let mut s = match d.model {
        NetworkModel::Ba => format!("ba_m{}", d.ba_m),
        other => other.to_string(),
    };
    if d.noise != 0.0 {
        s.push_str(&format!("_noise{:+}", d.noise));
    }
    s
}

fn estimator_label(spec: &ExperimentSpec, est: Estimator, f: &FitSetting) -> String {
    let mut s = est.name();
    if f.variant != Variant::Full {
        s.push_str(&format!("/{}", f.variant));
    }
    if spec.lambda_bal.len() > 1 {
        s.push_str(&format!("/lambda_bal={}", f.lambda_bal));
    }
    if spec.d_e.len() > 1 && est.exposure == ExposureKind::Egonet {
        s.push_str(&format!("/d_e={}", f.d_e));
    }
    s
}

struct Data {
    observed: AttributedGraph,
    sim: SimOutput,
    corr_baseline: Option<f64>,
}

fn make_data(spec: &ExperimentSpec, d: &DataSetting, seed: u64) -> Result<Data> {
    let net = NetGenConfig { model: d.model, ba_m: d.ba_m, seed, ..spec.network.clone() };
    let g = generate(&net)?;
    let sim = simulate(&g, &SimConfig { mechanism: d.mechanism, seed, ..spec.sim.clone() })?;
    // Outcomes come from the true graph; estimators only see the noisy one.
    let observed = if d.noise != 0.0 { augment_noise(&g, d.noise, seed)? } else { g };
    let z = fraction_exposure(&observed, &sim.t)?;
    let corr_baseline = pearson(&z, &sim.rho_true).map(f64::abs);
    Ok(Data { observed, sim, corr_baseline })
}

fn run_cell(data: &Data, est: Estimator, cfg: &TrainConfig, timing: bool, row: &mut ResultRow) -> Result<()> {
    let start = Instant::now();
    let report = fit(&data.observed, &data.sim.t, &data.sim.y, est.exposure, cfg)?;
    let pred = report.model.predict(&data.observed, &data.sim.t)?;
    if timing {
        row.runtime_s = Some(start.elapsed().as_secs_f64());
    }
    row.pehe = Some(pehe(&data.sim.hpe_true, &pred.hpe)?);
    row.corr_rho = exposure_correlation(&pred.rho, &data.sim.rho_true)?;
    row.corr_rho_cf = exposure_correlation(&pred.rho_cf, &data.sim.rho_true_cf)?;
    Ok(())
}

/// Runs every seed x setting x estimator cell. Failures are recorded in
/// the row's `error` column and the run continues. Rows are ordered by
/// seed, then setting, then estimator.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        for d in data_settings(spec) {
            let network = network_label(&d);
            let data = make_data(spec, &d, seed);
            for &est in &spec.estimators {
                for f in fit_settings(spec, est) {
                    let mut row = ResultRow {
                        seed,
                        network: network.clone(),
                        mechanism: d.mechanism.to_string(),
                        estimator: estimator_label(spec, est, &f),
                        pehe: None,
                        runtime_s: None,
                        corr_rho: None,
                        corr_rho_cf: None,
                        corr_baseline: None,
                        error: None,
                    };
                    let mut cfg = TrainConfig { head: est.head, lambda_bal: f.lambda_bal, d_e: f.d_e, seed, ..spec.train.clone() };
                    f.variant.apply(&mut cfg);
                    let outcome = match &data {
                        Ok(data) => {
                            row.corr_baseline = data.corr_baseline;
                            run_cell(data, est, &cfg, spec.timing, &mut row)
                        }
                        Err(e) => Err(crate::Error::Input(format!("data generation failed: {e}"))),
                    };
                    if let Err(e) = outcome {
                        warn!("seed {seed} {} {} {}: {e}", row.network, row.mechanism, row.estimator);
                        row.pehe = None;
                        row.error = Some(e.to_string());
                    }
                    info!("seed {seed} {} {} {}: pehe {:?}", row.network, row.mechanism, row.estimator, row.pehe);
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

/// Groups rows by (network, mechanism, estimator) in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in rows {
        let key = (r.network.clone(), r.mechanism.clone(), r.estimator.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(network, mechanism, estimator)| {
            let cell: Vec<&ResultRow> =
                rows.iter().filter(|r| r.network == network && r.mechanism == mechanism && r.estimator == estimator).collect();
            let collect = |f: fn(&ResultRow) -> Option<f64>| cell.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
            let pehe = mean_sd(&collect(|r| r.pehe));
            let mean = |f: fn(&ResultRow) -> Option<f64>| mean_sd(&collect(f)).map(|(m, _)| m);
            SummaryRow {
                runs: cell.len(),
                failures: cell.iter().filter(|r| r.error.is_some()).count(),
                pehe_mean: pehe.map(|p| p.0),
                pehe_sd: pehe.map(|p| p.1),
                corr_rho_mean: mean(|r| r.corr_rho),
                corr_rho_cf_mean: mean(|r| r.corr_rho_cf),
                corr_baseline_mean: mean(|r| r.corr_baseline),
                network,
                mechanism,
                estimator,
            }
        })
        .collect()
}

pub fn write_rows<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(input: impl std::io::Read) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}

/// Whitespace-separated summary for plotting tools; missing values are
/// written as `nan`.
pub fn write_plot_data(summary: &[SummaryRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "# network mechanism estimator pehe_mean pehe_sd")?;
    let num = |v: Option<f64>| v.map_or("nan".to_string(), |x| x.to_string());
    for s in summary {
        writeln!(out, "{} {} {} {} {}", s.network, s.mechanism, s.estimator, num(s.pehe_mean), num(s.pehe_sd))?;
    }
    Ok(())
}

/// Writes `results.csv`, `summary.csv`, `summary.dat` and the spec itself
/// (`spec.txt`) into `dir`.
pub fn write_experiment(spec: &ExperimentSpec, rows: &[ResultRow], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let create = |name: &str| std::fs::File::create(dir.join(name)).map(std::io::BufWriter::new);
    write_rows(rows, create("results.csv")?)?;
    let summary = summarize(rows);
    write_rows(&summary, create("summary.csv")?)?;
    write_plot_data(&summary, create("summary.dat")?)?;
    std::fs::write(dir.join("spec.txt"), spec.to_string())?;
    Ok(())
}
