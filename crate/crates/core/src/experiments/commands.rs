use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::manifest::{config_hash, RunManifest, TOOL, VERSION};
use crate::concentration::{
    lipschitz_estimates, t1_constant, tail_check, Branch, ConstantsBundle, LipschitzEstimates, LoglikRatio,
    TransportConstants,
};
use crate::error::{Error, Result};
use crate::filtering::run_filter;
use crate::hypothesis::{
    annulus_meets_space, build_composite_test, cover_annulus, fit_kappa, rate_constant, sample_pairs,
    verify_testing_condition, CoveringReport, DivergenceSource, IidGaussianDivergence, KappaBounds,
    MonteCarloDivergence, TestingPlan,
};
use crate::model::simulate_path;
use crate::posterior::{
    batch_means_se, bvm_diagnostic, bvm_tv_distance, contraction_diagnostic, delta_n0, effective_sample_size,
    gelman_rubin, lan_remainder, run_chains, rw_metropolis, score, score_and_fisher, McmcConfig, PosteriorRun, Prior,
};
use crate::rng::{derive_seed, label, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Simulate,
    Constants,
    Tests,
    Posterior,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Constants => "constants",
            Command::Tests => "tests",
            Command::Posterior => "posterior",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Command::Simulate, Command::Constants, Command::Tests, Command::Posterior]
            .into_iter()
            .find(|c| c.name() == name)
    }
}

/// Output directory that remembers what was written.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut f = self.create(name)?;
        write(&mut f)?;
        let path = self.dir.join(name);
        f.flush().map_err(|e| Error::io(path, e))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut f = self.create(name)?;
        serde_json::to_writer_pretty(&mut f, value)?;
        let path = self.dir.join(name);
        f.write_all(b"\n").and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
    }
}

/// Runs `command` and writes its artifacts plus `manifest.json` under `out`.
pub fn run(command: Command, config: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    let started = chrono::Utc::now().to_rfc3339();
    let mut outputs = Outputs::new(out)?;
    match command {
        Command::Simulate => cmd_simulate(config, &mut outputs)?,
        Command::Constants => cmd_constants(config, &mut outputs)?,
        Command::Tests => cmd_tests(config, &mut outputs)?,
        Command::Posterior => cmd_posterior(config, &mut outputs)?,
    }
    outputs.files.sort();
    let manifest = RunManifest {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        command: command.name().to_string(),
        scenario: config.scenario.clone(),
        seed: config.seed,
        config_hash: config_hash(config)?,
        started,
        finished: chrono::Utc::now().to_rfc3339(),
        outputs: outputs.files.clone(),
        config: serde_json::to_value(config)?,
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn block<'a, T>(b: &'a Option<T>, name: &str) -> Result<&'a T> {
    b.as_ref().ok_or_else(|| Error::config(format!("config has no [{name}] block")))
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let block = block(&cfg.simulate, "simulate")?;
    let spec = cfg.spec();
    for &n in &block.n_grid {
        let path = simulate_path(spec, &cfg.theta0, n, cfg.seed)?;
        out.csv(&format!("path_n{n}.csv"), |w| path.write_csv(w))?;
        let trace = run_filter(spec, &cfg.theta0, &path.observations)?;
        out.csv(&format!("filter_n{n}.csv"), |w| trace.write_csv(w))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ConstantsOutput<'a> {
    transport: &'a TransportConstants,
    lipschitz: &'a LipschitzEstimates,
    bundle: &'a ConstantsBundle,
}

/// Constants at `theta0` for the configured branch.
pub fn constants_for(cfg: &ExperimentConfig) -> Result<(TransportConstants, LipschitzEstimates, ConstantsBundle)> {
    let block = block(&cfg.constants, "constants")?;
    let spec = cfg.spec();
    let branch = match block.branch {
        Some(b) => b,
        None => Branch::for_emission(&spec.emission(&cfg.theta0)?),
    };
    let t1 = t1_constant(spec, &cfg.theta0, branch, block.c_y).map_err(|e| match e {
        Error::ConstantsUnavailable(msg) if block.c_y.is_none() => {
            Error::config(format!("constants.c_y is required here: {msg}"))
        }
        other => other,
    })?;
    let plan = crate::concentration::SamplingPlan {
        seed: derive_seed(cfg.seed, &[label::LIPSCHITZ]),
        ..block.sampling.clone()
    };
    let lip = lipschitz_estimates(spec, &cfg.theta0, block.horizon, &plan, branch)?;
    let bundle = ConstantsBundle::compose(&t1, &lip);
    Ok((t1, lip, bundle))
}

fn cmd_constants(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let (t1, lip, bundle) = constants_for(cfg)?;
    out.json("constants.json", &ConstantsOutput { transport: &t1, lipschitz: &lip, bundle: &bundle })?;
    out.json("mixing.json", &t1.mixing)?;
    out.csv("constants.csv", |w| bundle.write_csv(w))?;
    if let Some(tail) = &block(&cfg.constants, "constants")?.tail {
        let spec = cfg.spec();
        let f = LoglikRatio::new(spec, &tail.theta_1, &tail.theta_2)?;
        let scale = (tail.n as f64 * bundle.c_tilde).sqrt();
        let radii: Vec<f64> = tail.radii_sd.iter().map(|k| k * scale).collect();
        let check = tail_check(
            spec,
            &cfg.theta0,
            |ys| f.eval(ys),
            bundle.c_tilde,
            tail.n,
            tail.replicates,
            &radii,
            derive_seed(cfg.seed, &[label::TAIL]),
        )?;
        out.csv("tail.csv", |w| check.write_csv(w))?;
        out.json("tail.json", &check)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CoveringRow {
    n: usize,
    j: usize,
    eps: f64,
    radius: f64,
    count: usize,
    bound: f64,
    grid_points: usize,
}

fn cmd_tests(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let block = block(&cfg.tests, "tests")?;
    let spec = cfg.spec();
    let theta0 = cfg.theta0.as_slice();
    let mc = MonteCarloDivergence {
        spec,
        n: block.divergence.n,
        replicates: block.divergence.replicates,
        seed: derive_seed(cfg.seed, &[label::DIVERGENCE]),
    };
    let closed = IidGaussianDivergence::for_spec(spec);
    let source: &dyn DivergenceSource = match &closed {
        Some(c) => c,
        None => &mc,
    };

    let kappa: Option<KappaBounds> = match &block.kappa {
        Some(k) => {
            let pairs =
                sample_pairs(spec.space(), k.pairs, k.min_dist, k.max_dist, derive_seed(cfg.seed, &[label::TESTS]))?;
            let fit = fit_kappa(source, &pairs)?;
            out.json("kappa.json", &fit)?;
            Some(fit)
        }
        None => None,
    };
    let rate = match (&kappa, block.c_tilde) {
        (Some(k), Some(c)) => Some(rate_constant(k.kappa_1, k.kappa_2, c)),
        _ => None,
    };

    let mut reports = Vec::new();
    for &n in &block.n_grid {
        let eps = block.eps.eps(n);
        let mut j = block.m;
        while annulus_meets_space(theta0, eps, j, spec.space()) {
            reports.push((n, cover_annulus(theta0, eps, j, block.xi, spec.space(), block.strategy)?));
            j += 1;
        }
    }
    out.csv("coverings.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        for (n, r) in &reports {
            w.serialize(CoveringRow {
                n: *n,
                j: r.j,
                eps: r.eps,
                radius: r.radius,
                count: r.count,
                bound: r.bound,
                grid_points: r.grid_points,
            })?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    })?;
    let reports: Vec<&CoveringReport> = reports.iter().map(|(_, r)| r).collect();
    out.json("coverings.json", &reports)?;

    for &n in &block.n_grid {
        let test = build_composite_test(spec, theta0, block.eps.eps(n), block.m, block.xi, source, block.strategy)?;
        out.json(&format!("composite_n{n}.json"), &test)?;
    }
    let plan = TestingPlan {
        theta0: cfg.theta0.clone(),
        n_grid: block.n_grid.clone(),
        j_grid: block.j_grid.clone(),
        eps: block.eps,
        m: block.m,
        xi: block.xi,
        replicates: block.replicates,
        type1_replicates: block.type1_replicates,
        radius_factors: block.radius_factors.clone(),
        strategy: block.strategy,
        seed: derive_seed(cfg.seed, &[label::TESTS, 1]),
    };
    let report = verify_testing_condition(spec, &plan, source, rate)?;
    out.csv("error_rates.csv", |w| report.write_csv(w))?;
    out.json("error_rates.json", &report)?;
    Ok(())
}

#[derive(Serialize)]
struct ChainSummary<'a> {
    runs: &'a [PosteriorRun],
    mean: Vec<f64>,
    batch_se: Vec<f64>,
    ess: Vec<f64>,
    gelman_rubin: Option<Vec<f64>>,
    data_mean: f64,
}

#[derive(Serialize)]
struct TvRow {
    n: usize,
    tv: f64,
    noise_floor: f64,
    samples: usize,
    acceptance_rate: f64,
}

fn cmd_posterior(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let block = block(&cfg.posterior, "posterior")?;
    let spec = cfg.spec();
    let theta0 = cfg.theta0.as_slice();
    let prior = Prior::new(block.prior.clone(), spec.space().clone())?;
    let p0 = spec.resolve(theta0)?;
    let mcmc = McmcConfig { seed: derive_seed(cfg.seed, &[label::MCMC]), ..block.mcmc.clone() };

    let data = |n: usize| p0.simulate_observations(n, &mut stream(cfg.seed, &[label::DATA, n as u64]));
    let ys = data(block.n);
    let runs = run_chains(spec, &prior, &ys, &mcmc, block.chains.max(1))?;
    let summary = ChainSummary {
        mean: runs[0].mean(),
        batch_se: (0..spec.dim()).map(|i| batch_means_se(&runs[0].column(i))).collect(),
        ess: (0..spec.dim()).map(|i| effective_sample_size(&runs[0].column(i))).collect(),
        gelman_rubin: if runs.len() >= 2 { Some(gelman_rubin(&runs)?) } else { None },
        data_mean: ys.iter().sum::<f64>() / ys.len() as f64,
        runs: &runs,
    };
    out.csv("posterior_run.csv", |w| runs[0].write_csv(w))?;
    out.json("posterior_run.json", &summary)?;

    let fisher = score_and_fisher(
        spec,
        theta0,
        block.fisher.n,
        block.fisher.replicates,
        derive_seed(cfg.seed, &[label::FISHER]),
    )?;
    out.json("fisher.json", &fisher)?;
    let h_grid = block.lan.as_ref().map(|l| l.h_grid.clone()).unwrap_or_default();
    let bvm = bvm_diagnostic(spec, theta0, &ys, &fisher, &h_grid, Some(&runs[0]))?;
    out.json("bvm.json", &bvm)?;

    if let Some(lan) = &block.lan {
        let rep = lan_remainder(
            spec,
            theta0,
            &fisher.neg_hessian,
            &lan.n_grid,
            &lan.h_grid,
            lan.replicates,
            derive_seed(cfg.seed, &[label::LAN]),
        )?;
        out.csv("lan.csv", |w| {
            let mut w = csv::Writer::from_writer(w);
            w.write_record(["n", "h", "mean_abs", "se", "replicates"])?;
            for r in &rep.rows {
                let h: Vec<String> = r.h.iter().map(|v| v.to_string()).collect();
                w.write_record([
                    r.n.to_string(),
                    h.join(";"),
                    r.mean_abs.to_string(),
                    r.se.to_string(),
                    r.replicates.to_string(),
                ])?;
            }
            w.flush().map_err(csv::Error::from)?;
            Ok(())
        })?;
        out.json("lan.json", &rep)?;
    }

    if let Some(c) = &block.contraction {
        let chain_cfg = McmcConfig { iterations: c.iterations.unwrap_or(mcmc.iterations), ..mcmc.clone() };
        let diag = contraction_diagnostic(
            spec,
            &prior,
            theta0,
            &c.n_grid,
            &c.m_grid,
            c.replicates,
            c.eps,
            &chain_cfg,
            derive_seed(cfg.seed, &[label::DATA, 1]),
        )?;
        out.csv("contraction.csv", |w| diag.write_csv(w))?;
        out.json("contraction.json", &diag)?;
    }

    if !block.tv_n_grid.is_empty() {
        let rows: Vec<TvRow> = block
            .tv_n_grid
            .iter()
            .map(|&n| {
                let ys = data(n);
                let cfg_n = McmcConfig { start: Some(theta0.to_vec()), ..mcmc.clone() };
                let run = rw_metropolis(spec, &prior, &ys, &cfg_n)?;
                let s = score(spec, theta0, &ys)?;
                let (delta, _) = delta_n0(&fisher.neg_hessian, &s, n)?;
                let tv = bvm_tv_distance(&run, &delta, &fisher.neg_hessian, theta0, theta0.len() > 2)?;
                Ok(TvRow {
                    n,
                    tv: tv.tv,
                    noise_floor: tv.noise_floor,
                    samples: tv.samples,
                    acceptance_rate: run.acceptance_rate,
                })
            })
            .collect::<Result<_>>()?;
        out.csv("tv_trend.csv", |w| {
            let mut w = csv::Writer::from_writer(w);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush().map_err(csv::Error::from)?;
            Ok(())
        })?;
    }
    Ok(())
}
