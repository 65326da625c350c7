use aggcox::geometry::IndependentBoundaries;
use aggcox::inference::{ChainOutput, Sampler};
use aggcox::io::{
    load_dataset, load_or_build_partition, parse_regions, read_bytes, read_counts, read_json,
    read_regions, write_atomic, write_counts, write_json, write_regions, AsciiRaster, Manifest,
    RunConfig,
};
use aggcox::predict::{
    compare_processes, exceedance, predictive_counts, quantile, reaggregate, PredictiveDraws,
};
use aggcox::simulate::{generate, synthetic_wards};
use aggcox::{Error, Result};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::path::{Path, PathBuf};

const PREDICT_STREAM: u64 = 20;

fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let cfg = RunConfig::read(path)?;
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

/// Runs `body` and writes the command's manifest, flagged incomplete on failure.
fn with_manifest(
    command: &str,
    config: &Path,
    seed: Option<u64>,
    body: impl FnOnce(&RunConfig, &mut Outputs) -> Result<()>,
) -> Result<()> {
    let cfg = load_config(config, seed)?;
    let root = cfg.paths.output.clone();
    let mut out = Outputs {
        root: root.clone(),
        manifest: Manifest::new(command, &cfg),
    };
    let path = root.join(format!("manifest-{command}.json"));
    match body(&cfg, &mut out) {
        Ok(()) => {
            out.manifest.complete = true;
            out.manifest.write(&path)?;
            info!(
                "{command} finished; manifest digest {}",
                out.manifest.digest()
            );
            Ok(())
        }
        Err(e) => {
            out.manifest.error = Some(e.to_string());
            if let Err(w) = out.manifest.write(&path) {
                log::warn!("could not write manifest: {w}");
            }
            Err(e)
        }
    }
}

struct Outputs {
    root: PathBuf,
    manifest: Manifest,
}

impl Outputs {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Records a file already written at `path`.
    fn record(&mut self, path: &Path) -> Result<()> {
        self.manifest.record(&self.root, path)
    }

    fn json<T: serde::Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let p = self.path(rel);
        write_json(&p, value)?;
        self.record(&p)
    }

    fn raster(&mut self, rel: &str, raster: &AsciiRaster) -> Result<()> {
        let p = self.path(rel);
        raster.write(&p)?;
        self.record(&p)
    }

    fn csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let p = self.path(rel);
        let err = |e: csv::Error| Error::Validation(format!("{}: {e}", p.display()));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?;
        write_atomic(&p, &bytes)?;
        self.record(&p)
    }
}

fn fmt(v: f64) -> String {
    v.to_string()
}

pub fn simulate(config: &Path, seed: Option<u64>) -> Result<()> {
    with_manifest("simulate", config, seed, |cfg, out| {
        let section = cfg.simulate.as_ref().ok_or_else(|| {
            Error::InvalidConfig("the configuration has no [simulate] section".into())
        })?;
        let ds = generate(&section.synthetic_config(&cfg.grid), cfg.seed)?;
        let grid = cfg.grid.build()?;
        write_regions(&cfg.paths.regions, &ds.regions)?;
        out.record(&cfg.paths.regions)?;
        write_counts(&cfg.paths.counts, &ds.regions, &ds.totals)?;
        out.record(&cfg.paths.counts)?;
        for (src, layer) in cfg.paths.covariates.iter().zip(&ds.covariates) {
            let raster = AsciiRaster::from_grid(&grid, layer)?;
            for f in &src.files {
                raster.write(f)?;
                out.record(f)?;
            }
        }
        let ones = AsciiRaster::from_grid(&grid, &vec![1.0; grid.n_cells()])?;
        for f in &cfg.paths.offset {
            ones.write(f)?;
            out.record(f)?;
        }
        if let (Some(agg), true) = (&cfg.aggregate, section.wards > 0) {
            let wards = synthetic_wards(&cfg.grid.window, section.wards, cfg.seed)?;
            write_regions(&agg.regions, &wards)?;
            out.record(&agg.regions)?;
        }
        for t in 0..grid.n_times() {
            out.raster(
                &format!("truth/y_t{t}.asc"),
                &AsciiRaster::from_grid(&grid, &ds.y[t])?,
            )?;
            let n: Vec<f64> = ds.n[t].iter().map(|&c| c as f64).collect();
            out.raster(
                &format!("truth/cell_counts_t{t}.asc"),
                &AsciiRaster::from_grid(&grid, &n)?,
            )?;
        }
        out.json(
            "truth/truth.json",
            &json!({
                "seed": ds.seed,
                "config": ds.config,
                "params": ds.params,
                "covariate_names": ds.covariate_names,
                "dropped": ds.dropped,
            }),
        )?;
        info!(
            "simulated {} events over {} regions ({} dropped)",
            ds.totals.total(),
            ds.regions.len(),
            ds.dropped.iter().sum::<u64>()
        );
        Ok(())
    })
}

pub fn prepare(config: &Path, seed: Option<u64>) -> Result<()> {
    with_manifest("prepare", config, seed, |cfg, out| {
        let grid = cfg.grid.build()?;
        let bytes = read_bytes(&cfg.paths.regions)?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|e| Error::Validation(format!("{}: {e}", cfg.paths.regions.display())))?;
        let regions = parse_regions(&text, &cfg.paths.regions)?;
        let totals = read_counts(&cfg.paths.counts, &regions, grid.n_times())?;
        let cached = load_or_build_partition(&out.path("cache"), &grid, &regions, &bytes)?;
        out.record(&cached.path)?;
        let coverage = cached.partition.coverage();
        out.raster("coverage.asc", &AsciiRaster::from_grid(&grid, &coverage)?)?;
        let uncovered = coverage.iter().filter(|&&c| c == 0.0).count();
        out.json(
            "prepare.json",
            &json!({
                "partition_digest": cached.digest,
                "n_cells": grid.n_cells(),
                "n_regions": regions.len(),
                "uncovered_cells": uncovered,
                "total_events": totals.total(),
            }),
        )?;
        info!(
            "partition {} ({})",
            cached.digest,
            if cached.hit { "cached" } else { "built" }
        );
        Ok(())
    })
}

pub fn fit(
    config: &Path,
    seed: Option<u64>,
    checkpoint_every: Option<usize>,
    resume: bool,
) -> Result<()> {
    with_manifest("fit", config, seed, |cfg, out| {
        let ds = load_dataset(cfg)?;
        let stochastic = !ds.regions.all_fixed();
        let ckpt = out.path("fit.ckpt");
        let mut sampler = Sampler::new(&ds.spec, &ds.regions, &ds.totals, cfg.sampler.clone());
        if stochastic {
            sampler = sampler.stochastic(&IndependentBoundaries);
        }
        if let Some(every) = checkpoint_every {
            std::fs::create_dir_all(&out.root).map_err(|e| Error::Io {
                path: out.root.display().to_string(),
                source: e,
            })?;
            sampler = sampler.checkpoint(&ckpt, every);
        }
        info!(
            "fitting {} regions on {} cells x {} times ({})",
            ds.regions.len(),
            ds.grid.n_cells(),
            ds.grid.n_times(),
            if stochastic {
                "stochastic boundaries"
            } else {
                "fixed boundaries"
            }
        );
        let chain = if resume {
            sampler.resume(&ckpt)?
        } else {
            sampler.run()?
        };
        let violations = chain.conservation_violations(&ds.totals);
        if violations > 0 {
            return Err(Error::Validation(format!(
                "{violations} retained samples break conservation of the reported totals"
            )));
        }
        out.json("chain.json", &chain)?;
        let mut header = vec!["iteration".to_string()];
        header.extend(chain.beta_names.iter().map(|n| format!("beta_{n}")));
        header.extend(["log_sigma", "log_phi", "log_theta"].map(String::from));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        out.csv("chain.csv", &header, &chain_rows(&chain))?;
        out.csv(
            "fit_summary.csv",
            &["parameter", "mean", "sd", "q05", "median", "q95"],
            &summary_rows(&chain),
        )?;
        out.json(
            "fit.json",
            &json!({
                "stochastic": stochastic,
                "samples": chain.n_samples(),
                "acceptance": chain.acceptance.last(),
                "final_step": chain.final_step,
                "invalid_proposals": chain.invalid_proposals,
                "conservation_violations": violations,
                "covariate_scaling": ds.scaling,
            }),
        )?;
        Ok(())
    })
}

/// One row per retained draw.
fn chain_rows(chain: &ChainOutput) -> Vec<Vec<String>> {
    chain
        .samples
        .iter()
        .map(|s| {
            let mut row = vec![s.iteration.to_string()];
            row.extend(s.beta.iter().map(|&b| fmt(b)));
            row.extend([s.log_sigma, s.log_phi, s.log_theta].map(fmt));
            row
        })
        .collect()
}

fn summary_rows(chain: &ChainOutput) -> Vec<Vec<String>> {
    let mut columns: Vec<(String, Vec<f64>)> = chain
        .beta_names
        .iter()
        .enumerate()
        .map(|(k, name)| (format!("beta_{name}"), chain.beta_column(k)))
        .collect();
    columns.push((
        "sigma".into(),
        chain.samples.iter().map(|s| s.log_sigma.exp()).collect(),
    ));
    columns.push((
        "phi".into(),
        chain.samples.iter().map(|s| s.log_phi.exp()).collect(),
    ));
    columns.push((
        "theta".into(),
        chain.samples.iter().map(|s| s.log_theta.exp()).collect(),
    ));
    columns
        .into_iter()
        .map(|(name, mut v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd =
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            v.sort_by(f64::total_cmp);
            vec![
                name,
                fmt(mean),
                fmt(sd),
                fmt(quantile(&v, 0.05)),
                fmt(quantile(&v, 0.5)),
                fmt(quantile(&v, 0.95)),
            ]
        })
        .collect()
}

pub fn predict(config: &Path, seed: Option<u64>) -> Result<()> {
    with_manifest("predict", config, seed, |cfg, out| {
        let ds = load_dataset(cfg)?;
        let chain: ChainOutput = read_json(&out.path("chain.json"))?;
        let grid = &ds.grid;
        let n = grid.n_cells();
        let map = exceedance(&chain, &cfg.predict.thresholds)?;
        for t in 0..grid.n_times() {
            let slice = |v: &[f64]| v[t * n..(t + 1) * n].to_vec();
            out.raster(
                &format!("mean_y_t{t}.asc"),
                &AsciiRaster::from_grid(grid, &slice(&map.mean_y))?,
            )?;
            out.raster(
                &format!("relative_risk_t{t}.asc"),
                &AsciiRaster::from_grid(grid, &slice(&map.mean_exp_y))?,
            )?;
            for (k, c) in map.thresholds.iter().enumerate() {
                let p = map.slice(k, t);
                out.raster(
                    &format!("exceedance_{c}_t{t}.asc"),
                    &AsciiRaster::from_grid(grid, p)?,
                )?;
                let img = out.path(&format!("exceedance_{c}_t{t}.pgm"));
                write_atomic(&img, pgm(grid.nx, grid.ny, p).as_bytes())?;
                out.record(&img)?;
            }
        }
        out.json("exceedance.json", &map)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(PREDICT_STREAM);
        let draws = predictive_counts(&chain, &ds.spec, &mut rng)?;
        let mean = draws.mean();
        for t in 0..grid.n_times() {
            out.raster(
                &format!("predictive_mean_t{t}.asc"),
                &AsciiRaster::from_grid(grid, &mean[t * n..(t + 1) * n])?,
            )?;
        }
        out.json("predictive.json", &draws)?;
        Ok(())
    })
}

/// Greyscale image of probabilities in [0, 1], top row first.
fn pgm(nx: usize, ny: usize, p: &[f64]) -> String {
    let mut s = format!("P2\n{nx} {ny}\n255\n");
    for r in (0..ny).rev() {
        let row: Vec<String> = (0..nx)
            .map(|c| ((p[r * nx + c].clamp(0.0, 1.0) * 255.0).round() as u8).to_string())
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn aggregate(
    config: &Path,
    seed: Option<u64>,
    regions: Option<PathBuf>,
    processes: Vec<(String, PathBuf)>,
) -> Result<()> {
    with_manifest("aggregate", config, seed, |cfg, out| {
        let grid = cfg.grid.build()?;
        let regions_path = regions
            .or_else(|| cfg.aggregate.as_ref().map(|a| a.regions.clone()))
            .ok_or_else(|| {
                Error::InvalidConfig(
                    "no partition to aggregate onto; set [aggregate] regions".into(),
                )
            })?;
        let new = read_regions(&regions_path)?;
        let processes = if processes.is_empty() {
            vec![("fit".to_string(), out.path("predictive.json"))]
        } else {
            processes
        };
        let draws: Vec<(String, PredictiveDraws)> = processes
            .into_iter()
            .map(|(name, p)| read_json(&p).map(|d| (name, d)))
            .collect::<Result<_>>()?;
        let times: Vec<usize> = match cfg.aggregate.as_ref().and_then(|a| a.time) {
            Some(t) => vec![t],
            None => (0..grid.n_times()).collect(),
        };
        let mut rows = Vec::new();
        let mut winners = Vec::new();
        let mut results = Vec::new();
        for &t in &times {
            let per_process = draws
                .iter()
                .map(|(name, d)| {
                    reaggregate(&d.slice(t), &new, &grid, cfg.predict.level)
                        .map(|r| (name.as_str(), r))
                })
                .collect::<Result<Vec<_>>>()?;
            for (name, r) in &per_process {
                for s in &r.summaries {
                    rows.push(vec![
                        name.to_string(),
                        t.to_string(),
                        s.id.clone(),
                        fmt(s.mean),
                        fmt(s.median),
                        fmt(s.lower),
                        fmt(s.upper),
                        r.outside.contains(&s.id).to_string(),
                    ]);
                }
            }
            if per_process.len() > 1 {
                let refs: Vec<(&str, &_)> = per_process.iter().map(|(n, r)| (*n, r)).collect();
                let table = compare_processes(&refs)?;
                for (i, id) in table.region_ids.iter().enumerate() {
                    let names: Vec<&str> = table.winners[i]
                        .iter()
                        .map(|&k| table.processes[k].as_str())
                        .collect();
                    let mut row = vec![t.to_string(), id.clone(), names.join(";")];
                    row.extend(table.win_probability[i].iter().map(|&p| fmt(p)));
                    winners.push(row);
                }
                results.push(json!({"time": t, "processes": per_process, "winners": table}));
            } else {
                results.push(json!({"time": t, "processes": per_process}));
            }
        }
        out.csv(
            "reaggregation.csv",
            &[
                "process",
                "time",
                "region_id",
                "mean",
                "median",
                "lower",
                "upper",
                "outside",
            ],
            &rows,
        )?;
        if draws.len() > 1 {
            let mut header = vec![
                "time".to_string(),
                "region_id".to_string(),
                "winners".to_string(),
            ];
            header.extend(draws.iter().map(|(n, _)| format!("p_win_{n}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            out.csv("winners.csv", &header, &winners)?;
        }
        out.json("reaggregation.json", &results)?;
        Ok(())
    })
}
