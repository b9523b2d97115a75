//! Experiment orchestration: resolves the schedule (tuning when requested),
//! runs the configured sampler plus an evaluation-matched single-chain
//! baseline, computes metrics, and persists traces, metrics, reports, and a
//! manifest that reproduces the run bit-exactly.

use super::config::{Algorithm, AutoOr, ExperimentConfig, ExperimentKind};
use super::idx::load_idx_dataset;
use crate::energy::{
    EnergyModel, GridMixtureModel, LogQuadraticModel, MixtureFamily, RbmModel, TableEnergy,
};
use crate::error::{Error, Result, ResultExt};
use crate::learning::{
    ais_log_z, block_gibbs_step, exact_log_likelihood, NegativeSampler, PcdState,
};
use crate::metrics::{
    emc, emc_coverage, forward_kl, histogram, log_mmd, median_heuristic, mmd_rff, RffFeatureMap,
};
use crate::oracle::{
    detailed_balance_residual, exact_pt_kernel, first_chain_marginal, log_linear_fit,
    product_target, stationary_distribution, tempered_target, tv_curve, tv_distance,
    PtKernelOptions,
};
use crate::space::StateVector;
use crate::tempering::{ReplicaEnsemble, SwapCriterion};
use crate::tuning::{tune, Schedule, TuneOptions, TuneReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub trace_paths: Vec<PathBuf>,
    pub metrics_path: Option<PathBuf>,
    pub tuner_report_path: Option<PathBuf>,
    pub oracle_report_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    pub training_log_path: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub csv_schema_version: u32,
    pub kind: String,
    pub config_sha256: String,
    /// The effective configuration, embedded verbatim; re-running from the
    /// manifest replays exactly this document.
    pub config_toml: String,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn format_f64(v: f64) -> String {
    // shortest round-trip representation; stable across runs
    format!("{v}")
}

/// One metrics row; serialized as CSV `metric,value,n_samples,seed,params`.
#[derive(Debug, Clone)]
struct MetricRow {
    metric: String,
    value: f64,
    n_samples: usize,
    seed: u64,
    params: String,
}

fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("metric,value,n_samples,seed,params\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.metric,
            format_f64(r.value),
            r.n_samples,
            r.seed,
            r.params
        );
    }
    out
}

/// Collected trace of one sampler run: one record per post-swap step.
struct Trace {
    lines: String,
}

impl Trace {
    fn new() -> Self {
        Self {
            lines: String::from("step,energy,state,swaps\n"),
        }
    }

    fn record(&mut self, step: usize, energy: f64, state: &StateVector, swaps: &str) {
        let state_repr = if state.dim() <= 64 {
            state.to_compact_string()
        } else {
            format!("{:016x}", state.hash64())
        };
        let _ = writeln!(
            self.lines,
            "{},{},{},{}",
            step,
            format_f64(energy),
            state_repr,
            swaps
        );
    }
}

struct SamplerOutput {
    samples: Vec<StateVector>,
    trace: Trace,
    gradient_evals: u64,
    pair_acceptance: Vec<f64>,
}

struct SamplerSpec {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    p: f64,
    rho: f64,
    criterion: SwapCriterion,
    adjusted: bool,
}

fn run_sampler<M: EnergyModel + ?Sized>(
    model: &M,
    spec: &SamplerSpec,
    init: Vec<StateVector>,
    steps: usize,
    burn_in: usize,
    thinning: usize,
    master_seed: u64,
) -> Result<SamplerOutput> {
    let mut ensemble = ReplicaEnsemble::new(
        model,
        init,
        spec.betas.clone(),
        &spec.alphas,
        spec.p,
        spec.rho,
        spec.criterion,
        master_seed,
    )?;
    let k = spec.betas.len() as u64;
    let evals_per_step = k * if spec.adjusted { 2 } else { 1 };
    let mut trace = Trace::new();
    let mut samples = Vec::new();
    for step in 0..burn_in + steps {
        let info = ensemble.step(model, spec.adjusted)?;
        let swaps: String = info
            .swaps
            .iter()
            .map(|s| if s.accepted { '1' } else { '0' })
            .collect();
        trace.record(step, ensemble.cold_energy(), ensemble.cold_state(), &swaps);
        if step >= burn_in && (step - burn_in) % thinning == 0 {
            samples.push(ensemble.cold_state().clone());
        }
    }
    Ok(SamplerOutput {
        samples,
        trace,
        gradient_evals: evals_per_step * (burn_in + steps) as u64,
        pair_acceptance: ensemble
            .pair_stats()
            .iter()
            .map(|s| s.acceptance_rate())
            .collect(),
    })
}

fn seeded(master: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(master ^ salt.wrapping_mul(0x9e3779b97f4a7c15))
}

fn build_grid_model(config: &ExperimentConfig) -> Result<GridMixtureModel> {
    let family = match config.kind {
        ExperimentKind::SyntheticMog => MixtureFamily::Gaussian,
        ExperimentKind::SyntheticMos => MixtureFamily::StudentT,
        _ => return Err(Error::Config("not a synthetic kind".to_string())),
    };
    let m = &config.model;
    GridMixtureModel::ring(
        family,
        m.components.unwrap_or(8),
        m.radius.unwrap_or(3.0),
        m.variance.unwrap_or(0.12),
        if family == MixtureFamily::StudentT {
            Some(m.dof.unwrap_or(2.0))
        } else {
            None
        },
        m.bounds.unwrap_or([-4.0, 4.0, -4.0, 4.0]),
        m.cells.unwrap_or(100),
    )
}

fn tune_options(config: &ExperimentConfig, fixed_chains: Option<usize>) -> TuneOptions {
    let t = &config.tuning;
    TuneOptions {
        pilot_steps: t.pilot_steps,
        max_rounds: t.max_rounds,
        tol: t.tol,
        beta_min: t.beta_min,
        initial_chains: fixed_chains.unwrap_or(t.initial_chains),
        alpha: primary_alpha(config),
        p: config.sampler.p,
        adjusted: config.sampler.algorithm.adjusted(),
        criterion: config.sampler.swap.into(),
        k_total: config.run.k_total,
    }
}

fn primary_alpha(config: &ExperimentConfig) -> f64 {
    config
        .sampler
        .alpha
        .or_else(|| {
            config
                .sampler
                .alphas
                .as_ref()
                .and_then(|a| a.first().copied())
        })
        .unwrap_or(0.2)
}

/// Resolves the schedule for a tempered run: explicit betas, or tuning when
/// `betas = "auto"`. A fixed `chains` count pins the tuner's K.
fn resolve_schedule<M: EnergyModel + ?Sized>(
    config: &ExperimentConfig,
    model: &M,
    seed: u64,
) -> Result<(Vec<f64>, Option<TuneReport>)> {
    let sampler = &config.sampler;
    if !sampler.algorithm.tempered() {
        return Ok((vec![1.0], None));
    }
    if let Some(betas) = sampler.betas.as_ref().and_then(|b| b.value()) {
        return Ok((betas.clone(), None));
    }
    let fixed = sampler.chains.as_ref().and_then(|c| c.value().copied());
    let mut opts = tune_options(config, fixed);
    if fixed.is_some() {
        // honor the requested chain count: keep the loop schedule
        let report = tune(model, &opts, seed).stage("tuning")?;
        let last = report.rounds.last().expect("at least one round");
        let schedule = Schedule::new(last.betas.clone())?;
        return Ok((schedule.betas().to_vec(), Some(report)));
    }
    opts.k_total = config.run.k_total;
    let report = tune(model, &opts, seed).stage("tuning")?;
    Ok((report.schedule.betas().to_vec(), Some(report)))
}

fn sampler_spec(config: &ExperimentConfig, betas: Vec<f64>) -> SamplerSpec {
    let alphas = match (&config.sampler.alphas, config.sampler.alpha) {
        (Some(per_chain), _) if per_chain.len() == betas.len() => per_chain.clone(),
        (_, Some(a)) => vec![a],
        (Some(per_chain), None) => vec![per_chain[0]],
        (None, None) => vec![0.2],
    };
    SamplerSpec {
        alphas,
        p: config.sampler.p,
        rho: config.sampler.rho,
        criterion: config.sampler.swap.into(),
        adjusted: config.sampler.algorithm.adjusted(),
        betas,
    }
}

fn baseline_spec(config: &ExperimentConfig) -> SamplerSpec {
    SamplerSpec {
        betas: vec![1.0],
        alphas: vec![primary_alpha(config)],
        p: config.sampler.p,
        rho: 0.0,
        criterion: config.sampler.swap.into(),
        adjusted: config.sampler.algorithm.adjusted(),
    }
}

fn baseline_name(config: &ExperimentConfig) -> &'static str {
    if config.sampler.algorithm.adjusted() {
        "dmala"
    } else {
        "dula"
    }
}

/// Exact reference samples from a normalized table via inverse CDF.
fn exact_table_samples<R: Rng>(probs: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let cdf: Vec<f64> = probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            cdf.partition_point(|c| *c < u).min(probs.len() - 1)
        })
        .collect()
}

struct SyntheticSeedResult {
    rows: Vec<MetricRow>,
    traces: Vec<(String, String)>, // (file name, contents)
    tuner_report: Option<TuneReport>,
}

fn synthetic_seed_run(
    config: &ExperimentConfig,
    model: &GridMixtureModel,
    seed: u64,
) -> Result<SyntheticSeedResult> {
    let space = model.space();
    let (betas, tuner_report) = resolve_schedule(config, model, seed)?;
    let k = betas.len();
    let spec = sampler_spec(config, betas);
    let mut init_rng = seeded(seed, 1);
    let init: Vec<StateVector> = (0..k).map(|_| space.uniform_state(&mut init_rng)).collect();
    let steps = config.run.steps;
    let burn_in = config.run.burn_in;
    let main = run_sampler(
        model,
        &spec,
        init,
        steps,
        burn_in,
        config.run.thinning,
        seed,
    )
    .stage("main sampler")?;

    let mut runs = vec![(config.sampler.algorithm.as_str().to_string(), main)];
    if config.sampler.baseline && config.sampler.algorithm.tempered() {
        let bspec = baseline_spec(config);
        let mut init_rng = seeded(seed, 2);
        let init = vec![space.uniform_state(&mut init_rng)];
        let baseline = run_sampler(
            model,
            &bspec,
            init,
            steps * k,
            burn_in * k,
            config.run.thinning,
            seed ^ 0xbaaaaaad,
        )
        .stage("baseline sampler")?;
        runs.push((baseline_name(config).to_string(), baseline));
    }

    // reference set and shared feature map
    let probs = model.normalized_probs();
    let mut ref_rng = seeded(config.metrics.mmd_seed, seed);
    let ref_indices = exact_table_samples(&probs, config.metrics.reference_samples, &mut ref_rng);
    let ref_points: Vec<Vec<f64>> = ref_indices
        .iter()
        .map(|&i| {
            let s = space.state_at(i);
            model.center_of(&s).to_vec()
        })
        .collect();
    let sigma = match &config.metrics.mmd_sigma {
        AutoOr::Value(v) => *v,
        AutoOr::Tag(_) => median_heuristic(&ref_points, 50_000)?,
    };
    let mut map_rng = ChaCha8Rng::seed_from_u64(config.metrics.mmd_seed);
    let map = RffFeatureMap::new(2, config.metrics.mmd_features, sigma, &mut map_rng)?;

    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for (name, run) in &runs {
        let points: Vec<Vec<f64>> = run
            .samples
            .iter()
            .map(|s| model.center_of(s).to_vec())
            .collect();
        let n = points.len();
        let params = format!(
            "sampler={name};chains={};sigma={sigma:.6};features={}",
            if name.starts_with("pt-") { k } else { 1 },
            config.metrics.mmd_features
        );
        let mmd = mmd_rff(&points, &ref_points, &map).stage("mmd")?;
        rows.push(MetricRow {
            metric: format!("{name}/mmd"),
            value: mmd,
            n_samples: n,
            seed,
            params: params.clone(),
        });
        rows.push(MetricRow {
            metric: format!("{name}/log_mmd"),
            value: log_mmd(mmd),
            n_samples: n,
            seed,
            params: params.clone(),
        });
        let counts = histogram(run.samples.iter().map(|s| space.index_of(s)), probs.len());
        let kl = forward_kl(&probs, &counts, config.metrics.kl_smoothing).stage("kl")?;
        rows.push(MetricRow {
            metric: format!("{name}/forward_kl"),
            value: kl,
            n_samples: n,
            seed,
            params: params.clone(),
        });
        if config.metrics.emc {
            let posteriors: Vec<Vec<f64>> = run
                .samples
                .iter()
                .map(|s| model.mode_posterior(s))
                .collect();
            rows.push(MetricRow {
                metric: format!("{name}/emc"),
                value: emc(&posteriors).stage("emc")?,
                n_samples: n,
                seed,
                params: params.clone(),
            });
            rows.push(MetricRow {
                metric: format!("{name}/emc_coverage"),
                value: emc_coverage(&posteriors).stage("emc")?,
                n_samples: n,
                seed,
                params: params.clone(),
            });
        }
        rows.push(MetricRow {
            metric: format!("{name}/gradient_evals"),
            value: run.gradient_evals as f64,
            n_samples: n,
            seed,
            params: params.clone(),
        });
        for (pair, acc) in run.pair_acceptance.iter().enumerate() {
            rows.push(MetricRow {
                metric: format!("{name}/pair_acceptance_{pair}"),
                value: *acc,
                n_samples: n,
                seed,
                params: params.clone(),
            });
        }
        traces.push((
            format!("trace_{name}_seed{seed}.csv"),
            run.trace.lines.clone(),
        ));
    }
    Ok(SyntheticSeedResult {
        rows,
        traces,
        tuner_report,
    })
}

fn run_synthetic(config: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    let model = build_grid_model(config).stage("model construction")?;
    let results: Result<Vec<SyntheticSeedResult>> = config
        .run
        .seeds
        .par_iter()
        .map(|&seed| synthetic_seed_run(config, &model, seed))
        .collect();
    let results = results?;

    let mut rows = Vec::new();
    let mut trace_paths = Vec::new();
    let mut tuner_report_path = None;
    for result in &results {
        rows.extend(result.rows.iter().cloned());
        for (name, contents) in &result.traces {
            let path = out_dir.join(name);
            write_file(&path, contents.as_bytes())?;
            trace_paths.push(path);
        }
    }
    if let Some(report) = results.iter().find_map(|r| r.tuner_report.as_ref()) {
        let path = out_dir.join("tuner_report.json");
        write_file(
            &path,
            serde_json::to_string_pretty(report)
                .expect("serializable")
                .as_bytes(),
        )?;
        tuner_report_path = Some(path);
    }
    let metrics_path = out_dir.join("metrics.csv");
    write_file(&metrics_path, metrics_csv(&rows).as_bytes())?;
    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        manifest_path: out_dir.join("manifest.json"),
        trace_paths,
        metrics_path: Some(metrics_path),
        tuner_report_path,
        oracle_report_path: None,
        checkpoint_path: None,
        training_log_path: None,
    })
}

/// Dataset item with maximal energy under the model; ties break toward the
/// lowest index.
pub fn mode_initialize<M: EnergyModel + ?Sized>(
    model: &M,
    dataset: &[StateVector],
) -> Result<StateVector> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut best = 0usize;
    let mut best_energy = f64::NEG_INFINITY;
    for (i, x) in dataset.iter().enumerate() {
        model.check_state(x)?;
        let u = model.energy(x);
        if u > best_energy {
            best_energy = u;
            best = i;
        }
    }
    Ok(dataset[best].clone())
}

fn run_rbm_sample(config: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    let rbm_path = config.model.rbm_file.as_ref().expect("validated");
    let model = RbmModel::load(Path::new(rbm_path)).stage("rbm load")?;
    let space = model.space();
    let dataset = match &config.model.dataset {
        Some(path) => Some(
            load_idx_dataset(
                Path::new(path),
                config.model.binarize_threshold.unwrap_or(0.5),
            )
            .stage("dataset load")?,
        ),
        None => None,
    };

    let mut rows = Vec::new();
    let mut trace_paths = Vec::new();
    let mut tuner_report_path = None;
    for &seed in &config.run.seeds {
        let (betas, tuner_report) = resolve_schedule(config, &model, seed)?;
        let k = betas.len();
        let spec = sampler_spec(config, betas);
        let init_state = match &dataset {
            Some(data) => mode_initialize(&model, data)?,
            None => space.uniform_state(&mut seeded(seed, 1)),
        };
        let steps = config.run.steps;
        let burn_in = config.run.burn_in;
        let main = run_sampler(
            &model,
            &spec,
            vec![init_state.clone(); k],
            steps,
            burn_in,
            config.run.thinning,
            seed,
        )
        .stage("main sampler")?;
        let mut runs = vec![(config.sampler.algorithm.as_str().to_string(), main)];
        if config.sampler.baseline && config.sampler.algorithm.tempered() {
            let baseline = run_sampler(
                &model,
                &baseline_spec(config),
                vec![init_state.clone()],
                steps * k,
                burn_in * k,
                config.run.thinning,
                seed ^ 0xbaaaaaad,
            )
            .stage("baseline sampler")?;
            runs.push((baseline_name(config).to_string(), baseline));
        }

        // ground truth from block-Gibbs, which exploits the bipartite structure
        let mut gibbs_rng = seeded(config.metrics.mmd_seed, seed ^ 0x6b);
        let mut x = space.uniform_state(&mut gibbs_rng);
        for _ in 0..1000 {
            x = block_gibbs_step(&model, &x, &mut gibbs_rng)?;
        }
        let mut reference = Vec::with_capacity(config.metrics.reference_samples);
        for _ in 0..config.metrics.reference_samples {
            for _ in 0..2 {
                x = block_gibbs_step(&model, &x, &mut gibbs_rng)?;
            }
            reference.push(x.to_real());
        }
        let sigma = match &config.metrics.mmd_sigma {
            AutoOr::Value(v) => *v,
            AutoOr::Tag(_) => median_heuristic(&reference, 50_000)?,
        };
        let mut map_rng = ChaCha8Rng::seed_from_u64(config.metrics.mmd_seed);
        let map = RffFeatureMap::new(
            space.dim(),
            config.metrics.mmd_features,
            sigma,
            &mut map_rng,
        )?;
        for (name, run) in &runs {
            let points: Vec<Vec<f64>> = run.samples.iter().map(|s| s.to_real()).collect();
            let params = format!("sampler={name};sigma={sigma:.6}");
            let mmd = mmd_rff(&points, &reference, &map)?;
            rows.push(MetricRow {
                metric: format!("{name}/mmd"),
                value: mmd,
                n_samples: points.len(),
                seed,
                params: params.clone(),
            });
            rows.push(MetricRow {
                metric: format!("{name}/log_mmd"),
                value: log_mmd(mmd),
                n_samples: points.len(),
                seed,
                params: params.clone(),
            });
            rows.push(MetricRow {
                metric: format!("{name}/gradient_evals"),
                value: run.gradient_evals as f64,
                n_samples: points.len(),
                seed,
                params,
            });
            let path = out_dir.join(format!("trace_{name}_seed{seed}.csv"));
            write_file(&path, run.trace.lines.as_bytes())?;
            trace_paths.push(path);
        }
        if let Some(report) = tuner_report {
            if tuner_report_path.is_none() {
                let path = out_dir.join("tuner_report.json");
                write_file(
                    &path,
                    serde_json::to_string_pretty(&report)
                        .expect("serializable")
                        .as_bytes(),
                )?;
                tuner_report_path = Some(path);
            }
        }
    }
    let metrics_path = out_dir.join("metrics.csv");
    write_file(&metrics_path, metrics_csv(&rows).as_bytes())?;
    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        manifest_path: out_dir.join("manifest.json"),
        trace_paths,
        metrics_path: Some(metrics_path),
        tuner_report_path,
        oracle_report_path: None,
        checkpoint_path: None,
        training_log_path: None,
    })
}

fn negative_sampler(config: &ExperimentConfig, betas: &[f64]) -> NegativeSampler {
    let alpha = primary_alpha(config);
    match config.sampler.algorithm {
        Algorithm::Dula => NegativeSampler::Dula { alpha },
        Algorithm::Dmala => NegativeSampler::Dmala { alpha },
        Algorithm::PtDula | Algorithm::PtDmala => NegativeSampler::PtDmala {
            betas: betas.to_vec(),
            alpha,
            rho: config.sampler.rho,
        },
    }
}

fn run_rbm_learn(config: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    let dataset_path = config.model.dataset.as_ref().expect("validated");
    let data = load_idx_dataset(
        Path::new(dataset_path),
        config.model.binarize_threshold.unwrap_or(0.5),
    )
    .stage("dataset load")?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_visible = data[0].dim();
    let seed = config.run.seeds[0];
    let initial = match &config.model.rbm_file {
        Some(path) => RbmModel::load(Path::new(path)).stage("rbm load")?,
        None => {
            let n_hidden = config.model.n_hidden.expect("validated");
            let mut rng = seeded(seed, 3);
            let mut model = RbmModel::zeros(n_hidden, n_visible);
            for w in model.w.iter_mut() {
                *w = rng.gen_range(-0.01..0.01);
            }
            model
        }
    };
    let betas = match config.sampler.betas.as_ref().and_then(|b| b.value()) {
        Some(b) => b.clone(),
        None => Schedule::geometric(
            config
                .sampler
                .chains
                .as_ref()
                .and_then(|c| c.value().copied())
                .unwrap_or(4),
            config.tuning.beta_min,
        )?
        .betas()
        .to_vec(),
    };
    let learn = &config.learn;
    let mut pcd = PcdState::new(
        initial,
        negative_sampler(config, &betas),
        learn.pcd_chains,
        learn.learning_rate,
        seed,
    )?;

    let mut log = String::from("epoch,metric,value\n");
    let mut shuffle_rng = seeded(seed, 4);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let evaluate = |pcd: &PcdState, epoch: usize, log: &mut String| -> Result<()> {
        if n_visible <= 20 {
            let ll = exact_log_likelihood(&pcd.model, &data)?;
            let _ = writeln!(log, "{epoch},exact_log_likelihood,{}", format_f64(ll));
        } else {
            let mut rng = seeded(seed, 5 + epoch as u64);
            let ais = ais_log_z(
                &pcd.model,
                learn.ais_temps,
                1,
                learn.ais_particles,
                &mut rng,
            )?;
            let mean_energy: f64 =
                data.iter().map(|x| pcd.model.energy(x)).sum::<f64>() / data.len() as f64;
            let _ = writeln!(
                log,
                "{epoch},ais_log_likelihood,{}",
                format_f64(mean_energy - ais.log_z)
            );
        }
        Ok(())
    };

    for epoch in 0..learn.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(learn.batch_size) {
            let batch_states: Vec<StateVector> = batch.iter().map(|&i| data[i].clone()).collect();
            pcd.update(&batch_states, learn.pcd_steps)
                .stage("pcd update")?;
        }
        if learn.eval_every > 0 && (epoch + 1) % learn.eval_every == 0 {
            evaluate(&pcd, epoch + 1, &mut log)?;
        }
    }
    evaluate(&pcd, learn.epochs, &mut log)?;

    let checkpoint_path = out_dir.join("checkpoint.json");
    pcd.save_checkpoint(&checkpoint_path)?;
    let training_log_path = out_dir.join("training_log.csv");
    write_file(&training_log_path, log.as_bytes())?;
    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        manifest_path: out_dir.join("manifest.json"),
        trace_paths: Vec::new(),
        metrics_path: None,
        tuner_report_path: None,
        oracle_report_path: None,
        checkpoint_path: Some(checkpoint_path),
        training_log_path: Some(training_log_path),
    })
}

fn run_tune_only(config: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    let seed = config.run.seeds[0];
    let opts = tune_options(config, None);
    let report = match config.kind {
        ExperimentKind::TuneOnly => match (&config.model.rbm_file, config.model.components) {
            (Some(path), _) => {
                let model = RbmModel::load(Path::new(path)).stage("rbm load")?;
                tune(&model, &opts, seed).stage("tuning")?
            }
            (None, Some(_)) => {
                let mut synthetic = config.clone();
                synthetic.kind = ExperimentKind::SyntheticMog;
                let model = build_grid_model(&synthetic).stage("model construction")?;
                tune(&model, &opts, seed).stage("tuning")?
            }
            (None, None) => {
                return Err(Error::Config(
                    "tune-only needs `model.rbm_file` or `model.components`".to_string(),
                ))
            }
        },
        _ => unreachable!(),
    };
    let path = out_dir.join("tuner_report.json");
    write_file(
        &path,
        serde_json::to_string_pretty(&report)
            .expect("serializable")
            .as_bytes(),
    )?;
    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        manifest_path: out_dir.join("manifest.json"),
        trace_paths: Vec::new(),
        metrics_path: None,
        tuner_report_path: Some(path),
        oracle_report_path: None,
        checkpoint_path: None,
        training_log_path: None,
    })
}

fn run_oracle_suite(config: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    let dim = config.model.dim.unwrap_or(2).min(3);
    let instances = config.model.instances.unwrap_or(5);
    let seed = config.run.seeds[0];
    let cap = 1u64 << 14;
    let mut report = String::from("check,instance,model,k,value,threshold,pass\n");
    let mut all_pass = true;
    for inst in 0..instances {
        let mut rng = seeded(seed, 100 + inst as u64);
        let space = crate::space::DiscreteSpace::binary(dim)?;
        let n = space.embedding_dim();
        let quad = LogQuadraticModel::new(
            space,
            (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )?;
        let table_vals: Vec<f64> = (0..(1usize << dim))
            .map(|_| rng.gen_range(-1.5..1.5))
            .collect();
        let table = TableEnergy::new(space, table_vals)?;
        let models: [(&str, &dyn EnergyModel); 2] = [("log-quadratic", &quad), ("table", &table)];
        for (model_name, model) in models {
            for k in [2usize, 3] {
                let mut betas = vec![1.0];
                for i in 1..k {
                    betas.push(1.0 - i as f64 * (0.7 / (k - 1) as f64));
                }
                let opts = PtKernelOptions {
                    betas: betas.clone(),
                    alphas: vec![0.5],
                    p: 2.0,
                    rho: 1.0,
                    adjusted: true,
                    criterion: SwapCriterion::Standard,
                };
                let kernel = exact_pt_kernel(model, &opts, cap).stage("kernel build")?;
                let target = product_target(model, &betas, cap)?;
                let residual = detailed_balance_residual(&kernel, &target);
                let pass = residual < 1e-12;
                all_pass &= pass;
                let _ = writeln!(
                    report,
                    "detailed_balance,{inst},{model_name},{k},{},1e-12,{pass}",
                    format_f64(residual)
                );
                let stationary = stationary_distribution(&kernel)?;
                let marginal = first_chain_marginal(&stationary, 1 << dim);
                let pi = tempered_target(model, 1.0, cap)?;
                let tv = tv_distance(&marginal, &pi);
                let pass = tv < 1e-10;
                all_pass &= pass;
                let _ = writeln!(
                    report,
                    "first_chain_marginal_tv,{inst},{model_name},{k},{},1e-10,{pass}",
                    format_f64(tv)
                );
            }
        }
    }
    // geometric decay shape on a two-mode instance
    {
        let space = crate::space::DiscreteSpace::binary(4)?;
        let d = 4.0;
        let table: Vec<f64> = (0..16u32)
            .map(|bits| {
                let s = bits.count_ones() as f64;
                6.0 * ((2.0 * s - d).abs() / d).powi(2)
            })
            .collect();
        let model = TableEnergy::new(space, table)?;
        let opts = PtKernelOptions {
            betas: vec![1.0, 0.3],
            alphas: vec![0.3],
            p: 2.0,
            rho: 1.0,
            adjusted: true,
            criterion: SwapCriterion::Standard,
        };
        let kernel = exact_pt_kernel(&model, &opts, cap)?;
        let mut init = vec![0.0; kernel.dim()];
        init[kernel.dim() - 1] = 1.0;
        let curve = tv_curve(&kernel, &init, 500)?;
        let (slope, r2) = log_linear_fit(&curve, 50, 500)?;
        let pass = slope < 0.0 && r2 > 0.999;
        all_pass &= pass;
        let _ = writeln!(
            report,
            "log_tv_linearity,0,two-mode,2,{},r2>0.999,{pass}",
            format_f64(r2)
        );
        let _ = writeln!(
            report,
            "log_tv_slope,0,two-mode,2,{},<0,{}",
            format_f64(slope),
            slope < 0.0
        );
    }
    let path = out_dir.join("oracle_report.csv");
    write_file(&path, report.as_bytes())?;
    if !all_pass {
        return Err(Error::invalid("oracle-suite", "one or more checks failed"));
    }
    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        manifest_path: out_dir.join("manifest.json"),
        trace_paths: Vec::new(),
        metrics_path: None,
        tuner_report_path: None,
        oracle_report_path: Some(path),
        checkpoint_path: None,
        training_log_path: None,
    })
}

/// Runs the configured experiment into `out_dir`, writing a manifest that
/// reproduces the run byte-for-byte.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunArtifacts> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let config_toml = config.to_toml_string();
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        csv_schema_version: CSV_SCHEMA_VERSION,
        kind: config.kind.as_str().to_string(),
        config_sha256: hex_sha256(config_toml.as_bytes()),
        config_toml,
    };
    let artifacts = match config.kind {
        ExperimentKind::SyntheticMog | ExperimentKind::SyntheticMos => {
            run_synthetic(config, out_dir)?
        }
        ExperimentKind::RbmSample => run_rbm_sample(config, out_dir)?,
        ExperimentKind::RbmLearn => run_rbm_learn(config, out_dir)?,
        ExperimentKind::TuneOnly => run_tune_only(config, out_dir)?,
        ExperimentKind::OracleSuite => run_oracle_suite(config, out_dir)?,
    };
    write_file(
        &artifacts.manifest_path,
        serde_json::to_string_pretty(&manifest)
            .expect("serializable")
            .as_bytes(),
    )?;
    Ok(artifacts)
}

/// Replays the run recorded in a manifest into a (possibly different)
/// output directory.
pub fn rerun_from_manifest(manifest_path: &Path, out_dir: &Path) -> Result<RunArtifacts> {
    let text = std::fs::read_to_string(manifest_path).map_err(|source| Error::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.display().to_string(),
        message: e.to_string(),
    })?;
    if hex_sha256(manifest.config_toml.as_bytes()) != manifest.config_sha256 {
        return Err(Error::Config(
            "manifest config hash does not match its embedded config".to_string(),
        ));
    }
    let config = ExperimentConfig::from_toml_str(&manifest.config_toml, "manifest")?;
    run_experiment(&config, out_dir)
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::DiscreteSpace;

    #[test]
    fn mode_initialize_picks_the_energy_argmax() {
        let space = DiscreteSpace::binary(3).unwrap();
        let model = LogQuadraticModel::linear(space, vec![1.0, -0.5, 0.25]).unwrap();
        // single item: that item
        let single = vec![space.state_at(2)];
        assert_eq!(mode_initialize(&model, &single).unwrap(), single[0]);
        // ties break toward the lowest index
        let tied = vec![space.state_at(1), space.state_at(1)];
        assert_eq!(mode_initialize(&model, &tied).unwrap(), tied[0]);
        // matches an exhaustive scan over a full enumeration
        let all = space.enumerate(64).unwrap();
        let best = mode_initialize(&model, &all).unwrap();
        let max_energy = all
            .iter()
            .map(|s| model.energy(s))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(model.energy(&best), max_energy);
        // empty dataset is an error
        assert!(matches!(
            mode_initialize(&model, &[]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn sha256_hex_is_stable() {
        assert_eq!(
            hex_sha256(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
