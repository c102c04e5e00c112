//! Success-probability experiments.
//!
//! Every cell of an experiment (size, image, restart) draws its randomness
//! from a seed derived from the master seed and the cell coordinates, so the
//! tables are identical whatever the worker count.

use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::analysis;
use crate::builder::{build_grid_rays_3d, make_instance, project, random_image, build_grid_rays_2d};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::localsearch;
use crate::model::{sigma_to_image, BinaryImage, MachineConfig, RunReport, TomographyInstance};
use crate::seed;

/// 95 % two-sided normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessEstimate {
    pub restarts: usize,
    pub successes: usize,
    pub p_succ: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_agitations: f64,
}

impl SuccessEstimate {
    fn from_counts(restarts: usize, successes: usize, agitations: usize) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(successes, restarts);
        SuccessEstimate {
            restarts,
            successes,
            p_succ: successes as f64 / restarts.max(1) as f64,
            ci_lo,
            ci_hi,
            mean_agitations: agitations as f64 / restarts.max(1) as f64,
        }
    }
}

/// Outcome of one restart, re-checked against the data.
#[derive(Debug, Clone, Copy)]
struct Cell {
    solved: bool,
    agitations: usize,
}

fn verified(instance: &TomographyInstance, report: &RunReport) -> Cell {
    Cell {
        solved: report.failure.is_none() && analysis::is_solution(instance, &report.final_sigma),
        agitations: report.agitations_used,
    }
}

fn v2_cell(instance: &TomographyInstance, config: &MachineConfig, restart: usize) -> Cell {
    let config = MachineConfig {
        seed: seed::derive(config.seed, &[restart as u64]),
        ..config.clone()
    };
    match dynamics::run_machine(instance, &config) {
        Ok(report) => verified(instance, &report),
        Err(_) => Cell {
            solved: false,
            agitations: 0,
        },
    }
}

fn tally(cells: &[Cell]) -> SuccessEstimate {
    SuccessEstimate::from_counts(
        cells.len(),
        cells.iter().filter(|c| c.solved).count(),
        cells.iter().map(|c| c.agitations).sum(),
    )
}

/// P_succ of the agitated machine over `restarts` independent chains.
/// Restart `i` runs with seed `derive(config.seed, [i])`.
pub fn sample_success_v2(instance: &TomographyInstance, restarts: usize, config: &MachineConfig) -> SuccessEstimate {
    sample_success_v2_with(instance, restarts, config, Execution::default())
}

pub fn sample_success_v2_with(
    instance: &TomographyInstance,
    restarts: usize,
    config: &MachineConfig,
    exec: Execution,
) -> SuccessEstimate {
    assert!(restarts >= 1, "need at least one restart");
    let cells = exec.map(restarts, |i| v2_cell(instance, config, i));
    tally(&cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    SizeSweep,
    TSweep,
    ThreeDDemo,
}

impl ExperimentKind {
    pub fn label(self) -> &'static str {
        match self {
            ExperimentKind::SizeSweep => "size_sweep",
            ExperimentKind::TSweep => "t_sweep",
            ExperimentKind::ThreeDDemo => "demo3d",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Square image sides W.
    pub sizes: Vec<usize>,
    /// Stage durations for the T-sweep.
    pub t_grid: Vec<f64>,
    pub images_per_size: usize,
    /// Machine restarts per image (or demo seeds for the 3D demo).
    pub restarts: usize,
    /// Local-search restarts per image; 0 skips the baseline.
    pub local_search_restarts: usize,
    pub density: f64,
    /// Volume for the 3D demo, `[nx, ny, nz]`.
    pub volume: [usize; 3],
    pub machine: MachineConfig,
    pub master_seed: u64,
    /// Fill the `wall_ms` column (makes tables non-reproducible).
    pub record_timing: bool,
}

impl ExperimentSpec {
    /// Desk-scale size sweep: W = 4..=15, 5 images, 100 machine restarts and
    /// 10⁴ local-search restarts per image, T = 5, M = 600, ≤ 10 agitations.
    pub fn size_sweep() -> Self {
        ExperimentSpec {
            kind: ExperimentKind::SizeSweep,
            sizes: (4..=15).collect(),
            t_grid: vec![5.0],
            images_per_size: 5,
            restarts: 100,
            local_search_restarts: 10_000,
            density: 0.5,
            volume: [8, 8, 4],
            machine: MachineConfig::default(),
            master_seed: 0,
            record_timing: false,
        }
    }

    /// T-sweep over [2.0, 5.3] with 5 agitations.
    pub fn t_sweep() -> Self {
        ExperimentSpec {
            kind: ExperimentKind::TSweep,
            sizes: vec![5, 10, 15],
            t_grid: vec![2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.3],
            local_search_restarts: 0,
            machine: MachineConfig {
                max_agitations: 5,
                ..MachineConfig::default()
            },
            ..ExperimentSpec::size_sweep()
        }
    }

    /// 8×8×4 volumes at density 0.3, ten seeds, with [`demo3d_machine`].
    pub fn demo3d() -> Self {
        ExperimentSpec {
            kind: ExperimentKind::ThreeDDemo,
            sizes: vec![8],
            restarts: 10,
            local_search_restarts: 0,
            density: 0.3,
            machine: demo3d_machine(),
            ..ExperimentSpec::size_sweep()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.restarts == 0 {
            return bad("restarts must be >= 1");
        }
        match self.kind {
            ExperimentKind::SizeSweep | ExperimentKind::TSweep => {
                if self.sizes.is_empty() {
                    return bad("size list is empty");
                }
                if self.sizes.contains(&0) {
                    return bad("sizes must be positive");
                }
                if self.images_per_size == 0 {
                    return bad("images per size must be >= 1");
                }
            }
            ExperimentKind::ThreeDDemo => {
                if self.volume.contains(&0) {
                    return bad("volume extents must be positive");
                }
            }
        }
        if self.kind == ExperimentKind::TSweep {
            if self.t_grid.is_empty() {
                return bad("T grid is empty");
            }
            if self.t_grid.iter().any(|&t| !(t > 0.0 && t <= 6.0)) {
                return bad("T grid must lie in (0, 6]");
            }
        }
        if !(0.0..=1.0).contains(&self.density) {
            return bad("density outside [0, 1]");
        }
        self.machine.validate()
    }

    fn image_instance(&self, width: usize, image: usize) -> Result<TomographyInstance> {
        let cell = [width as u64, image as u64];
        let img = random_image(
            &[width, width],
            self.density,
            seed::derive(self.master_seed, &[cell[0], cell[1], 0]),
        )?;
        let rays = build_grid_rays_2d(width, width)?;
        let projections = project(&img, &rays)?;
        make_instance(rays, projections, seed::derive(self.master_seed, &[cell[0], cell[1], 1]))
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    #[serde(rename = "W")]
    pub size: String,
    #[serde(rename = "T")]
    pub stage_time: Option<f64>,
    pub method: String,
    pub restarts: usize,
    pub successes: usize,
    pub p_succ: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_agitations: f64,
    pub wall_ms: Option<u128>,
}

impl ResultRow {
    fn new(
        spec: &ExperimentSpec,
        size: String,
        stage_time: Option<f64>,
        method: &str,
        estimate: &SuccessEstimate,
        wall: Duration,
    ) -> Self {
        ResultRow {
            experiment: spec.kind.label().to_string(),
            size,
            stage_time,
            method: method.to_string(),
            restarts: estimate.restarts,
            successes: estimate.successes,
            p_succ: estimate.p_succ,
            ci_lo: estimate.ci_lo,
            ci_hi: estimate.ci_hi,
            mean_agitations: estimate.mean_agitations,
            wall_ms: spec.record_timing.then_some(wall.as_millis()),
        }
    }
}

/// Pooled machine estimate over all images of one size. Since each image
/// gets the same number of restarts, the pooled fraction equals the mean of
/// the per-image fractions.
fn sweep_v2(spec: &ExperimentSpec, instances: &[TomographyInstance], width: usize, config: &MachineConfig, exec: Execution) -> SuccessEstimate {
    let restarts = spec.restarts;
    let cells = exec.map(instances.len() * restarts, |k| {
        let (image, restart) = (k / restarts, k % restarts);
        let config = MachineConfig {
            seed: seed::derive(spec.master_seed, &[width as u64, image as u64, 2]),
            ..config.clone()
        };
        v2_cell(&instances[image], &config, restart)
    });
    tally(&cells)
}

fn sweep_local_search(spec: &ExperimentSpec, instances: &[TomographyInstance], width: usize, exec: Execution) -> SuccessEstimate {
    let restarts = spec.local_search_restarts;
    let cells = exec.map(instances.len() * restarts, |k| {
        let (image, restart) = (k / restarts, k % restarts);
        let s = seed::derive(spec.master_seed, &[width as u64, image as u64, 3, restart as u64]);
        let report = localsearch::local_search_1opt(&instances[image], s);
        verified(&instances[image], &report)
    });
    tally(&cells)
}

fn instances_for(spec: &ExperimentSpec, width: usize) -> Result<Vec<TomographyInstance>> {
    (0..spec.images_per_size)
        .map(|i| spec.image_instance(width, i))
        .collect()
}

/// P_succ(W) for the machine and (optionally) the 1-opt baseline.
pub fn size_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    size_sweep_with(spec, Execution::default())
}

pub fn size_sweep_with(spec: &ExperimentSpec, exec: Execution) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &width in &spec.sizes {
        let instances = instances_for(spec, width)?;
        let start = Instant::now();
        let v2 = sweep_v2(spec, &instances, width, &spec.machine, exec);
        rows.push(ResultRow::new(spec, width.to_string(), Some(spec.machine.stage_time), "v2", &v2, start.elapsed()));
        if spec.local_search_restarts > 0 {
            let start = Instant::now();
            let ls = sweep_local_search(spec, &instances, width, exec);
            rows.push(ResultRow::new(spec, width.to_string(), None, "local_search", &ls, start.elapsed()));
        }
    }
    Ok(rows)
}

/// P_succ(T) per size with M fixed; the same images are used for every T.
pub fn t_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    t_sweep_with(spec, Execution::default())
}

pub fn t_sweep_with(spec: &ExperimentSpec, exec: Execution) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &width in &spec.sizes {
        let instances = instances_for(spec, width)?;
        for &t in &spec.t_grid {
            let config = MachineConfig {
                stage_time: t,
                ..spec.machine.clone()
            };
            let start = Instant::now();
            let est = sweep_v2(spec, &instances, width, &config, exec);
            rows.push(ResultRow::new(spec, width.to_string(), Some(t), "v2", &est, start.elapsed()));
        }
    }
    Ok(rows)
}

pub const DEMO_MAX_VOXELS: usize = 2048;

/// Machine settings for the 3D demo: the 2D time step, but eight times
/// longer stages and up to 50 agitations. Three crossing ray families relax
/// much more slowly than two; at the 2D settings only about a third of
/// 8×8×4 volumes are reconstructed, with these about 95 %.
pub fn demo3d_machine() -> MachineConfig {
    MachineConfig {
        stage_time: 40.0,
        steps_per_stage: 4800,
        max_agitations: 50,
        ..MachineConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub original: BinaryImage,
    pub reconstruction: BinaryImage,
    /// Unscaled ray charges of the reconstruction.
    pub residuals: Vec<i64>,
    /// Projections of the reconstruction equal the input projections.
    pub verified: bool,
    pub report: RunReport,
}

/// Reconstruct a random volume from its three axis projections.
///
/// `seed` fixes the volume and the ray weights; the machine runs with
/// `derive(seed, [2, config.seed])`. A successful reconstruction reproduces
/// the data but need not equal the original volume.
pub fn three_d_demo(dims: [usize; 3], density: f64, seed: u64, config: &MachineConfig) -> Result<DemoOutcome> {
    let voxels = dims.iter().product::<usize>();
    if voxels > DEMO_MAX_VOXELS {
        return Err(Error::InvalidDims(format!(
            "{voxels} voxels exceed the demo limit of {DEMO_MAX_VOXELS}"
        )));
    }
    let original = layered_volume(dims, density, seed::derive(seed, &[0]))?;
    let rays = build_grid_rays_3d(dims[0], dims[1], dims[2])?;
    let projections = project(&original, &rays)?;
    let instance = make_instance(rays, projections.clone(), seed::derive(seed, &[1]))?;
    let config = MachineConfig {
        seed: seed::derive(seed, &[2, config.seed]),
        ..config.clone()
    };
    let report = dynamics::run_machine(&instance, &config)?;
    let reconstruction = sigma_to_image(&report.final_sigma, original.dims())?;
    let verified = project(&reconstruction, instance.rays())? == projections;
    Ok(DemoOutcome {
        original,
        reconstruction,
        residuals: report.residuals.clone(),
        verified,
        report,
    })
}

/// Volume sampled one z-layer at a time, each layer with its own stream.
fn layered_volume(dims: [usize; 3], density: f64, seed: u64) -> Result<BinaryImage> {
    let [nx, ny, nz] = dims;
    let mut values = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        let layer = random_image(&[nx, ny], density, seed::derive(seed, &[z as u64]))?;
        values.extend_from_slice(layer.values());
    }
    BinaryImage::new(dims.to_vec(), values)
}

/// `restarts` independent demo volumes; one row with the pooled count.
pub fn demo3d_sweep(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    demo3d_sweep_with(spec, Execution::default())
}

pub fn demo3d_sweep_with(spec: &ExperimentSpec, exec: Execution) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let start = Instant::now();
    let outcomes = exec.map(spec.restarts, |i| {
        let s = seed::derive(spec.master_seed, &[i as u64]);
        three_d_demo(spec.volume, spec.density, s, &spec.machine)
    });
    let mut cells = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let o = outcome?;
        cells.push(Cell {
            solved: o.verified && o.residuals.iter().all(|&q| q == 0),
            agitations: o.report.agitations_used,
        });
    }
    let [nx, ny, nz] = spec.volume;
    Ok(vec![ResultRow::new(
        spec,
        format!("{nx}x{ny}x{nz}"),
        Some(spec.machine.stage_time),
        "v2",
        &tally(&cells),
        start.elapsed(),
    )])
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    match spec.kind {
        ExperimentKind::SizeSweep => size_sweep(spec),
        ExperimentKind::TSweep => t_sweep(spec),
        ExperimentKind::ThreeDDemo => demo3d_sweep(spec),
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}
