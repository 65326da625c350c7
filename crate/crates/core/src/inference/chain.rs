use super::checkpoint::{read_checkpoint, write_checkpoint, RngPosition};
use super::mala::{mala_step, Adaptation, ChainPoint, StepInfo, Tuning};
use super::target::{LatentState, Layout};
use super::ModelSpec;
use crate::allocation::{
    base_mass, draw_augmented_counts, exact_q, initialise_counts, mc_q, AllocationTable,
    AugmentedCounts, EffortWeights, QTable, RegionTotals,
};
use crate::error::{Error, Result};
use crate::field::Fft2;
use crate::geometry::{
    build_partition_with, realise_regions, BoundaryDraw, BoundaryPrior, CellPartition, Grid,
    IndependentBoundaries, PartitionOptions, RegionSet,
};
use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// How overlap corrections are computed inside the sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum QMethod {
    Exact,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// MALA updates between successive redraws of the latent counts.
    pub resample_every: usize,
    pub initial_step: f64,
    pub target_accept: f64,
    pub seed: u64,
    pub q_method: QMethod,
    /// Boundary draws for the marginal correction diagnostic.
    pub marginal_draws: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig::with_iterations(10_000)
    }
}

impl SamplerConfig {
    /// Burn-in of 2% and thinning to keep about 1000 samples.
    pub fn with_iterations(iterations: usize) -> Self {
        let burn_in = iterations / 50;
        SamplerConfig {
            iterations,
            burn_in,
            thin: ((iterations - burn_in) / 1000).max(1),
            resample_every: 10,
            initial_step: 0.1,
            target_accept: 0.574,
            seed: 1,
            q_method: QMethod::Exact,
            marginal_draws: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.burn_in >= self.iterations {
            return bad(format!(
                "burn-in {} must be below the iteration count {}",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 || self.resample_every == 0 {
            return bad("thinning and resampling frequency must be at least 1".into());
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad(format!(
                "initial step {} must be positive",
                self.initial_step
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad(format!(
                "target acceptance {} must lie in (0, 1)",
                self.target_accept
            ));
        }
        if let QMethod::MonteCarlo { samples: 0 } = self.q_method {
            return bad("Monte Carlo correction needs at least one sample".into());
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// One retained draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub iteration: usize,
    pub beta: Vec<f64>,
    pub log_sigma: f64,
    pub log_phi: f64,
    pub log_theta: f64,
    /// `Y_tj`, slice-major.
    pub y: Vec<f64>,
    /// `N_tj`, slice-major.
    pub n: Vec<u64>,
    /// `sum_j alloc[t][i][j]`, slice-major, for conservation checks.
    pub region_totals: Vec<u64>,
    pub boundary: Vec<BoundaryDraw>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub n_cells: usize,
    pub n_times: usize,
    pub n_regions: usize,
    pub beta_names: Vec<String>,
    pub config: SamplerConfig,
    pub samples: Vec<Sample>,
    pub log_target: Vec<f64>,
    /// Running acceptance rate after each iteration.
    pub acceptance: Vec<f64>,
    pub invalid_proposals: u64,
    pub final_step: f64,
}

impl ChainOutput {
    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Retained `(region, time)` totals that differ from the observed ones.
    pub fn conservation_violations(&self, totals: &RegionTotals) -> usize {
        let m = self.n_regions;
        self.samples
            .iter()
            .map(|s| {
                (0..self.n_times)
                    .flat_map(|t| (0..m).map(move |i| (t, i)))
                    .filter(|&(t, i)| s.region_totals[t * m + i] != totals.get(t, i))
                    .count()
            })
            .sum()
    }

    /// Posterior mean of `Y`, slice-major.
    pub fn mean_y(&self) -> Result<Vec<f64>> {
        let first = self
            .samples
            .first()
            .ok_or_else(|| Error::EmptyChain("no retained samples".into()))?;
        let mut acc = vec![0.0; first.y.len()];
        for s in &self.samples {
            for (a, y) in acc.iter_mut().zip(&s.y) {
                *a += y;
            }
        }
        let n = self.samples.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }

    pub fn beta_column(&self, k: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.beta[k]).collect()
    }
}

/// Geometry-derived inputs of the allocation step for one boundary realisation.
#[derive(Clone, Debug)]
struct Frame {
    partitions: Vec<Arc<CellPartition>>,
    q: Vec<Arc<QTable>>,
    coverage: Vec<Vec<f64>>,
    draws: Vec<BoundaryDraw>,
}

fn q_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    rng
}

fn build_frame(
    grid: &Grid,
    realised: &RegionSet,
    draws: Vec<BoundaryDraw>,
    weights: &EffortWeights,
    method: QMethod,
    seed: u64,
) -> Result<Frame> {
    let mut cache: HashMap<Vec<bool>, (Arc<CellPartition>, Arc<QTable>)> = HashMap::new();
    let mut partitions = Vec::with_capacity(grid.n_times());
    let mut q = Vec::with_capacity(grid.n_times());
    let mut coverage = Vec::with_capacity(grid.n_times());
    for t in 0..grid.n_times() {
        let mask = realised.active_at(t);
        if !cache.contains_key(&mask) {
            let opts = PartitionOptions {
                active: Some(mask.clone()),
                ..PartitionOptions::default()
            };
            let p = build_partition_with(grid, realised, &opts)?;
            let table = match method {
                QMethod::Exact => exact_q(&p, weights)?,
                QMethod::MonteCarlo { samples } => {
                    // common random numbers: identical geometry gives identical corrections
                    mc_q(grid, realised, &p, weights, samples, &mut q_rng(seed))?
                }
            };
            cache.insert(mask.clone(), (Arc::new(p), Arc::new(table)));
        }
        let (p, table) = &cache[&mask];
        coverage.push(p.coverage());
        partitions.push(Arc::clone(p));
        q.push(Arc::clone(table));
    }
    Ok(Frame {
        partitions,
        q,
        coverage,
        draws,
    })
}

fn realise_frame(
    grid: &Grid,
    regions: &RegionSet,
    prior: &dyn BoundaryPrior,
    weights: &EffortWeights,
    method: QMethod,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Frame> {
    let (realised, draws) = realise_regions(regions, prior, rng)?;
    build_frame(grid, &realised, draws, weights, method, seed)
}

fn frame_from_draws(
    grid: &Grid,
    regions: &RegionSet,
    draws: &[BoundaryDraw],
    weights: &EffortWeights,
    method: QMethod,
    seed: u64,
) -> Result<Frame> {
    let mut realised = regions.clone();
    for (r, d) in realised.regions.iter_mut().zip(draws) {
        r.geometry = r.realise(*d)?;
    }
    build_frame(grid, &realised, draws.to_vec(), weights, method, seed)
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointBody {
    stochastic: bool,
    next_iteration: usize,
    state: LatentState,
    counts: AugmentedCounts,
    tuning: Tuning,
    adaptation: Adaptation,
    draws: Vec<BoundaryDraw>,
    accepted: u64,
    output: ChainOutput,
}

/// Gibbs driver for fixed or stochastic regions.
pub struct Sampler<'a> {
    spec: &'a ModelSpec,
    regions: &'a RegionSet,
    totals: &'a RegionTotals,
    config: SamplerConfig,
    weights: Option<EffortWeights>,
    prior: &'a dyn BoundaryPrior,
    stochastic: bool,
    checkpoint: Option<(PathBuf, usize)>,
    stop_after: Option<usize>,
}

impl<'a> Sampler<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        regions: &'a RegionSet,
        totals: &'a RegionTotals,
        config: SamplerConfig,
    ) -> Self {
        Sampler {
            spec,
            regions,
            totals,
            config,
            weights: None,
            prior: &IndependentBoundaries,
            stochastic: false,
            checkpoint: None,
            stop_after: None,
        }
    }

    /// Redraw boundaries (and partitions) before every count update.
    pub fn stochastic(mut self, prior: &'a dyn BoundaryPrior) -> Self {
        self.stochastic = true;
        self.prior = prior;
        self
    }

    pub fn weights(mut self, weights: EffortWeights) -> Self {
        self.weights = Some(weights);
        self
    }

    /// Writes a checkpoint at the first count update after every `every` iterations.
    pub fn checkpoint(mut self, path: impl Into<PathBuf>, every: usize) -> Self {
        self.checkpoint = Some((path.into(), every.max(1)));
        self
    }

    /// Stops (after checkpointing) once this many iterations have run.
    pub fn stop_after(mut self, iterations: usize) -> Self {
        self.stop_after = Some(iterations);
        self
    }

    fn validate(&self) -> Result<EffortWeights> {
        self.config.validate()?;
        self.spec.validate()?;
        self.regions.validate()?;
        if self.totals.n_regions() != self.regions.len() {
            return Err(Error::DimensionMismatch(format!(
                "totals cover {} regions, region set has {}",
                self.totals.n_regions(),
                self.regions.len()
            )));
        }
        if self.totals.n_times() != self.spec.n_times() {
            return Err(Error::DimensionMismatch(format!(
                "totals cover {} time slices, grid has {}",
                self.totals.n_times(),
                self.spec.n_times()
            )));
        }
        for (i, r) in self.regions.iter().enumerate() {
            for t in 0..self.totals.n_times() {
                if !r.is_active(t) && self.totals.get(t, i) > 0 {
                    return Err(Error::Validation(format!(
                        "region `{}` reports {} events at time {t} but is not active then",
                        r.id,
                        self.totals.get(t, i)
                    )));
                }
            }
        }
        if !self.stochastic && !self.regions.all_fixed() {
            return Err(Error::InvalidModel(
                "regions with boundary models need the stochastic sampler".into(),
            ));
        }
        match &self.weights {
            Some(w) if w.n_regions() != self.regions.len() => Err(Error::DimensionMismatch(
                "effort weights do not match the region set".into(),
            )),
            Some(w) => Ok(w.clone()),
            None => EffortWeights::from_regions(self.regions),
        }
    }

    fn name_region(&self, e: Error) -> Error {
        match e {
            Error::NoAllocationMass {
                region,
                time,
                total,
            } => {
                let id = region
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| self.regions.regions.get(i))
                    .map_or(region, |r| r.id.clone());
                Error::NoAllocationMass {
                    region: id,
                    time,
                    total,
                }
            }
            other => other,
        }
    }

    fn draw_counts(
        &self,
        frame: &Frame,
        point: &ChainPoint,
        rng: &mut ChaCha8Rng,
    ) -> Result<AugmentedCounts> {
        let spec = self.spec;
        let tables = (0..spec.n_times())
            .map(|t| {
                let zb = spec.linear_predictor(t, &point.state.beta);
                let eta: Vec<f64> = zb
                    .iter()
                    .zip(&point.eval.y[t])
                    .map(|(a, b)| a + b)
                    .collect();
                let offset = spec.offset_slice(t);
                let p = base_mass(&frame.partitions[t], &eta, Some(&offset))?;
                AllocationTable::new(spec.n_cells(), p, &frame.q[t])
            })
            .collect::<Result<Vec<_>>>()?;
        draw_augmented_counts(self.totals, &tables, rng).map_err(|e| self.name_region(e))
    }

    fn initial_tuning(&self, layout: &Layout, point: &ChainPoint, exposure: &[Vec<f64>]) -> Tuning {
        let spec = self.spec;
        let mut precond = vec![1.0; layout.dim()];
        let mut pos = layout.n_gamma;
        for &k in &layout.beta_free {
            let mut info = 0.0;
            for (t, ex) in exposure.iter().enumerate().take(spec.n_times()) {
                let zb = spec.linear_predictor(t, &point.state.beta);
                for j in 0..spec.n_cells() {
                    let mu = ex[j] * (zb[j] + point.eval.y[t][j]).exp();
                    let z = spec.design(t, j, k);
                    info += mu * z * z;
                }
            }
            if let super::Prior::Normal { sd, .. } = spec.priors.beta[k] {
                info += 1.0 / (sd * sd);
            }
            precond[pos] = 1.0 / info.max(1e-12);
            pos += 1;
        }
        let scalar_priors = [
            (layout.sigma_free, spec.priors.log_sigma),
            (layout.phi_free, spec.priors.log_phi),
            (layout.theta_free, spec.priors.log_theta),
        ];
        for (free, prior) in scalar_priors {
            if free {
                if let super::Prior::Normal { sd, .. } = prior {
                    precond[pos] = (sd * sd).min(0.01);
                }
                pos += 1;
            }
        }
        Tuning {
            step: self.config.initial_step,
            precond,
        }
    }

    pub fn run(self) -> Result<ChainOutput> {
        let weights = self.validate()?;
        let cfg = self.config.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut boundary_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        boundary_rng.set_stream(1);

        let frame = if self.stochastic {
            realise_frame(
                &self.spec.grid,
                self.regions,
                self.prior,
                &weights,
                cfg.q_method,
                cfg.seed,
                &mut boundary_rng,
            )?
        } else {
            let draws = vec![BoundaryDraw::Fixed; self.regions.len()];
            build_frame(
                &self.spec.grid,
                self.regions,
                draws,
                &weights,
                cfg.q_method,
                cfg.seed,
            )?
        };
        let offsets: Vec<Vec<f64>> = (0..self.spec.n_times())
            .map(|t| self.spec.offset_slice(t))
            .collect();
        let parts: Vec<&CellPartition> = frame.partitions.iter().map(|p| p.as_ref()).collect();
        let counts = initialise_counts(self.totals, &parts, Some(&offsets), &mut rng)
            .map_err(|e| self.name_region(e))?;
        let exposure = self.spec.exposure(&frame.coverage);
        let state = LatentState::initial(self.spec, self.totals.total() as f64, &exposure);
        let layout = Layout::new(self.spec);
        let fft = Arc::new(Fft2::new(
            self.spec.grid.extended_dims().0,
            self.spec.grid.extended_dims().1,
        ));
        let point = ChainPoint::new(
            self.spec,
            &layout,
            state.clone(),
            &counts_f64(&counts),
            &exposure,
            Some(Arc::clone(&fft)),
        )?;
        let tuning = self.initial_tuning(&layout, &point, &exposure);
        let adaptation = Adaptation::new(cfg.target_accept, layout.n_gamma, &tuning);
        let output = ChainOutput {
            n_cells: self.spec.n_cells(),
            n_times: self.spec.n_times(),
            n_regions: self.regions.len(),
            beta_names: beta_names(self.spec),
            config: cfg.clone(),
            samples: Vec::with_capacity(cfg.n_retained()),
            log_target: Vec::with_capacity(cfg.iterations),
            acceptance: Vec::with_capacity(cfg.iterations),
            invalid_proposals: 0,
            final_step: tuning.step,
        };
        let body = CheckpointBody {
            stochastic: self.stochastic,
            next_iteration: 0,
            state,
            counts,
            tuning,
            adaptation,
            draws: frame.draws.clone(),
            accepted: 0,
            output,
        };
        self.drive(weights, body, frame, rng, boundary_rng, fft)
    }

    /// Continues a run from a checkpoint written by [`Sampler::checkpoint`].
    pub fn resume(self, path: &Path) -> Result<ChainOutput> {
        let weights = self.validate()?;
        let (rngs, body): (Vec<RngPosition>, CheckpointBody) = read_checkpoint(path)?;
        if rngs.len() != 2 {
            return Err(Error::Checkpoint(format!(
                "expected 2 rng streams, found {}",
                rngs.len()
            )));
        }
        if body.stochastic != self.stochastic || body.output.config != self.config {
            return Err(Error::Checkpoint(
                "checkpoint was written by a differently configured sampler".into(),
            ));
        }
        let frame = frame_from_draws(
            &self.spec.grid,
            self.regions,
            &body.draws,
            &weights,
            self.config.q_method,
            self.config.seed,
        )?;
        let fft = Arc::new(Fft2::new(
            self.spec.grid.extended_dims().0,
            self.spec.grid.extended_dims().1,
        ));
        self.drive(
            weights,
            body,
            frame,
            rngs[0].restore(),
            rngs[1].restore(),
            fft,
        )
    }

    fn drive(
        &self,
        weights: EffortWeights,
        body: CheckpointBody,
        mut frame: Frame,
        mut rng: ChaCha8Rng,
        mut boundary_rng: ChaCha8Rng,
        fft: Arc<Fft2>,
    ) -> Result<ChainOutput> {
        let spec = self.spec;
        let cfg = &self.config;
        let layout = Layout::new(spec);
        let CheckpointBody {
            next_iteration,
            state,
            mut counts,
            mut tuning,
            mut adaptation,
            mut accepted,
            mut output,
            ..
        } = body;
        let mut exposure = spec.exposure(&frame.coverage);
        let mut n_f = counts_f64(&counts);
        let mut point = ChainPoint::new(
            spec,
            &layout,
            state,
            &n_f,
            &exposure,
            Some(Arc::clone(&fft)),
        )?;
        let mut next_ckpt = self
            .checkpoint
            .as_ref()
            .map(|(_, every)| (next_iteration / every + 1) * every);

        let mut i = next_iteration;
        while i < cfg.iterations {
            let block_end = (i / cfg.resample_every + 1) * cfg.resample_every;
            let steps_end = block_end.min(cfg.iterations);
            let resample = block_end <= cfg.iterations;

            let next_frame = std::thread::scope(|scope| -> Result<Option<Frame>> {
                let builder = if self.stochastic && resample {
                    let b_rng = &mut boundary_rng;
                    let weights = &weights;
                    Some(scope.spawn(move || {
                        realise_frame(
                            &spec.grid,
                            self.regions,
                            self.prior,
                            weights,
                            cfg.q_method,
                            cfg.seed,
                            b_rng,
                        )
                    }))
                } else {
                    None
                };
                while i < steps_end {
                    let (cand, info) = mala_step(
                        spec,
                        &layout,
                        &point,
                        &n_f,
                        &exposure,
                        &tuning,
                        Some(Arc::clone(&fft)),
                        &mut rng,
                    );
                    if let Some(c) = cand {
                        point = c;
                    }
                    self.record(&mut output, &mut accepted, &info, &point);
                    if i < cfg.burn_in {
                        adaptation.update(&mut tuning, &info, &layout.pack(&point.state));
                    }
                    if i >= cfg.burn_in && (i - cfg.burn_in + 1).is_multiple_of(cfg.thin) {
                        output
                            .samples
                            .push(make_sample(i, &point, &counts, &frame.draws));
                    }
                    i += 1;
                }
                match builder {
                    Some(h) => h.join().expect("partition builder panicked").map(Some),
                    None => Ok(None),
                }
            })?;

            if resample {
                if let Some(f) = next_frame {
                    frame = f;
                    exposure = spec.exposure(&frame.coverage);
                }
                counts = self.draw_counts(&frame, &point, &mut rng)?;
                n_f = counts_f64(&counts);
                point = ChainPoint::new(
                    spec,
                    &layout,
                    point.state,
                    &n_f,
                    &exposure,
                    Some(Arc::clone(&fft)),
                )?;
                if let (Some((path, every)), Some(due)) = (&self.checkpoint, next_ckpt) {
                    let stopping = self.stop_after.is_some_and(|s| i >= s);
                    if i >= due || stopping {
                        output.final_step = tuning.step;
                        let body = CheckpointBody {
                            stochastic: self.stochastic,
                            next_iteration: i,
                            state: point.state.clone(),
                            counts: counts.clone(),
                            tuning: tuning.clone(),
                            adaptation: adaptation.clone(),
                            draws: frame.draws.clone(),
                            accepted,
                            output: output.clone(),
                        };
                        write_checkpoint(
                            path,
                            &[RngPosition::of(&rng), RngPosition::of(&boundary_rng)],
                            &body,
                        )?;
                        debug!("checkpoint at iteration {i}");
                        next_ckpt = Some((i / every + 1) * every);
                    }
                }
            }
            if self.stop_after.is_some_and(|s| i >= s) && i < cfg.iterations {
                output.final_step = tuning.step;
                return Ok(output);
            }
        }
        output.final_step = tuning.step;
        info!(
            "chain finished: {} samples, acceptance {:.3}, step {:.4}, {} invalid proposals",
            output.samples.len(),
            output.acceptance.last().copied().unwrap_or(0.0),
            tuning.step,
            output.invalid_proposals
        );
        Ok(output)
    }

    fn record(
        &self,
        output: &mut ChainOutput,
        accepted: &mut u64,
        info: &StepInfo,
        point: &ChainPoint,
    ) {
        if info.accepted {
            *accepted += 1;
        }
        if info.invalid_proposal {
            output.invalid_proposals += 1;
        }
        output.log_target.push(point.eval.value);
        let n = output.acceptance.len() as f64 + 1.0;
        output.acceptance.push(*accepted as f64 / n);
    }
}

fn counts_f64(c: &AugmentedCounts) -> Vec<Vec<f64>> {
    (0..c.n_times()).map(|t| c.cell_counts_f64(t)).collect()
}

fn beta_names(spec: &ModelSpec) -> Vec<String> {
    std::iter::once("intercept".to_string())
        .chain(spec.covariate_names.iter().cloned())
        .collect()
}

fn make_sample(
    iteration: usize,
    point: &ChainPoint,
    counts: &AugmentedCounts,
    draws: &[BoundaryDraw],
) -> Sample {
    let s = &point.state;
    Sample {
        iteration,
        beta: s.beta.clone(),
        log_sigma: s.log_sigma,
        log_phi: s.log_phi,
        log_theta: s.log_theta,
        y: point.eval.y.concat(),
        n: counts.cells.concat(),
        region_totals: counts
            .slices
            .iter()
            .flat_map(|sl| (0..sl.regions.len()).map(|i| sl.region_total(i)))
            .collect(),
        boundary: draws.to_vec(),
    }
}

/// Data-augmentation sampler for fixed (possibly overlapping) regions.
pub fn run_fixed(
    spec: &ModelSpec,
    regions: &RegionSet,
    totals: &RegionTotals,
    config: SamplerConfig,
) -> Result<ChainOutput> {
    Sampler::new(spec, regions, totals, config).run()
}

/// Data-augmentation sampler that redraws region boundaries before every count update.
pub fn run_stochastic(
    spec: &ModelSpec,
    regions: &RegionSet,
    totals: &RegionTotals,
    config: SamplerConfig,
    prior: &dyn BoundaryPrior,
) -> Result<ChainOutput> {
    Sampler::new(spec, regions, totals, config)
        .stochastic(prior)
        .run()
}
