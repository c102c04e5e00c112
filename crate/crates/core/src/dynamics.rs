//! Equations of motion of the V₂ model in vector-charge form.
//!
//! For a free relaxed spin α the drift is Ẋ_α = q⃗_α · ε⃗(X_α) with
//! ε⃗(X) = Σ_{X_β < X} q⃗_β − Σ_{X_β > X} q⃗_β, the auxiliary spin taking part
//! as a fixed particle at the origin. Rays are orthogonal directions, so the
//! dot product splits into independent one-dimensional problems, one per ray:
//!
//! Ẋ_α = σ_α Σ_{r ∈ D(α)} λ(r) ε_r(X_α),
//!
//! where ε_r is the scalar field of the integer charges σ_β (and q̃₀(r) for
//! the auxiliary spin) on ray r. Each ε_r is evaluated for all members at
//! once by sorting the ray by X and sweeping prefix sums. Coincident
//! coordinates do not interact (sgn 0 = 0).

use std::time::Instant;

use rand::Rng as _;

use crate::analysis;
use crate::error::{Error, Result};
use crate::model::{MachineConfig, RunReport, SpinState, TomographyInstance};
use crate::seed::{self, Rng};

/// Marks the auxiliary spin inside a ray ordering.
const AUX: usize = usize::MAX;

/// Reusable scratch space for drift evaluation.
///
/// Keeps the per-ray ordering of members by X between calls; consecutive
/// Euler steps barely reorder anything, so re-sorting is close to linear.
#[derive(Debug, Clone)]
pub struct DriftBuffer {
    order: Vec<Vec<usize>>,
    drift: Vec<f64>,
    aux_drift: f64,
}

impl DriftBuffer {
    pub fn new(instance: &TomographyInstance) -> Self {
        let order = instance
            .rays()
            .rays()
            .iter()
            .map(|ray| ray.iter().copied().chain(std::iter::once(AUX)).collect())
            .collect();
        DriftBuffer {
            order,
            drift: vec![0.0; instance.node_count()],
            aux_drift: 0.0,
        }
    }

    /// Drift of every free spin.
    pub fn compute(&mut self, instance: &TomographyInstance, state: &SpinState) -> &[f64] {
        let sigma = state.sigma();
        let x = state.x();
        let pos = |node: usize| if node == AUX { 0.0 } else { x[node] };
        let charge = |r: usize, node: usize| {
            if node == AUX {
                instance.spin_data()[r]
            } else {
                i64::from(sigma[node])
            }
        };

        self.drift.fill(0.0);
        self.aux_drift = 0.0;
        for (r, order) in self.order.iter_mut().enumerate() {
            insertion_sort_by_key(order, pos);
            let lambda = instance.lambda()[r];
            let total: i64 = order.iter().map(|&u| charge(r, u)).sum();

            let mut below = 0i64;
            let mut i = 0;
            while i < order.len() {
                let level = pos(order[i]);
                let mut j = i;
                let mut group = 0i64;
                while j < order.len() && pos(order[j]) == level {
                    group += charge(r, order[j]);
                    j += 1;
                }
                let field = (below - (total - below - group)) as f64;
                for &u in &order[i..j] {
                    if u == AUX {
                        self.aux_drift += lambda * instance.spin_data()[r] as f64 * field;
                    } else {
                        self.drift[u] += lambda * f64::from(sigma[u]) * field;
                    }
                }
                below += group;
                i = j;
            }
        }
        &self.drift
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    /// q⃗₀ · ε⃗(0) from the last [`compute`](Self::compute). The auxiliary
    /// spin never moves; this is only its formal drift.
    pub fn aux_drift(&self) -> f64 {
        self.aux_drift
    }
}

fn insertion_sort_by_key(v: &mut [usize], key: impl Fn(usize) -> f64) {
    for i in 1..v.len() {
        let item = v[i];
        let k = key(item);
        let mut j = i;
        while j > 0 && key(v[j - 1]) > k {
            v[j] = v[j - 1];
            j -= 1;
        }
        v[j] = item;
    }
}

/// One-shot drift evaluation.
pub fn drift(instance: &TomographyInstance, state: &SpinState) -> Vec<f64> {
    DriftBuffer::new(instance).compute(instance, state).to_vec()
}

/// Σ_{α ∈ subset} Ẋ_α.
pub fn drift_rate_of_subset(instance: &TomographyInstance, state: &SpinState, subset: &[usize]) -> f64 {
    let d = drift(instance, state);
    subset.iter().map(|&a| d[a]).sum()
}

/// Move every spin by `displacement`, wrapping X back into [−1, 1) and
/// flipping σ once per boundary crossing. Returns the number of flips.
///
/// A displacement of magnitude 2 or more would cross a boundary more than
/// once; that is rejected before anything is modified.
pub fn apply_displacement(state: &mut SpinState, displacement: &[f64]) -> Result<usize> {
    assert_eq!(displacement.len(), state.len());
    if let Some((node, &d)) = displacement
        .iter()
        .enumerate()
        .find(|(_, d)| d.is_nan() || d.abs() >= 2.0)
    {
        return Err(Error::StepOverflow {
            node,
            displacement: d.abs(),
        });
    }
    let (sigma, x) = state.parts_mut();
    let mut flips = 0;
    for ((s, x), &d) in sigma.iter_mut().zip(x.iter_mut()).zip(displacement) {
        let mut next = *x + d;
        if next >= 1.0 {
            next -= 2.0;
            *s = -*s;
            flips += 1;
        } else if next < -1.0 {
            next += 2.0;
            *s = -*s;
            flips += 1;
        }
        *x = next;
    }
    Ok(flips)
}

/// Drift evaluation plus boundary bookkeeping for a fixed instance.
#[derive(Debug, Clone)]
pub struct Integrator<'a> {
    instance: &'a TomographyInstance,
    buffer: DriftBuffer,
    step: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(instance: &'a TomographyInstance) -> Self {
        Integrator {
            instance,
            buffer: DriftBuffer::new(instance),
            step: vec![0.0; instance.node_count()],
        }
    }

    /// One Euler step X ← X + dt·Ẋ with the wrap rule. Returns the flip count.
    pub fn euler_step(&mut self, state: &mut SpinState, dt: f64) -> Result<usize> {
        let drift = self.buffer.compute(self.instance, state);
        for (s, &v) in self.step.iter_mut().zip(drift) {
            *s = v * dt;
        }
        apply_displacement(state, &self.step)
    }

    /// `steps` Euler steps of size `duration / steps`.
    ///
    /// When `trace` is given as `(stride, t0, samples)`, the relaxed cut is
    /// pushed every `stride` steps (and at the start) with absolute time
    /// `t0 + elapsed`. Returns the total flip count.
    pub fn evolve_stage(
        &mut self,
        state: &mut SpinState,
        duration: f64,
        steps: usize,
        mut trace: Option<(usize, f64, &mut Vec<(f64, f64)>)>,
    ) -> Result<usize> {
        let dt = duration / steps as f64;
        let mut flips = 0;
        if let Some((_, t0, samples)) = trace.as_mut() {
            samples.push((*t0, analysis::relaxed_cut(self.instance, state)));
        }
        for k in 1..=steps {
            flips += self.euler_step(state, dt)?;
            if let Some((stride, t0, samples)) = trace.as_mut() {
                if k % *stride == 0 {
                    samples.push((*t0 + k as f64 * dt, analysis::relaxed_cut(self.instance, state)));
                }
            }
        }
        Ok(flips)
    }
}

pub fn euler_step(instance: &TomographyInstance, state: &mut SpinState, dt: f64) -> Result<usize> {
    Integrator::new(instance).euler_step(state, dt)
}

pub fn evolve_stage(instance: &TomographyInstance, state: &mut SpinState, duration: f64, steps: usize) -> Result<usize> {
    Integrator::new(instance).evolve_stage(state, duration, steps, None)
}

/// Redraw every continuous component uniformly from [−1, 1); σ is kept.
pub fn agitate(state: &mut SpinState, rng: &mut Rng) {
    let (_, x) = state.parts_mut();
    for v in x.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
}

/// Uniform ±1 spins and uniform continuous components.
pub fn random_state(node_count: usize, rng: &mut Rng) -> SpinState {
    let sigma = (0..node_count)
        .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
        .collect();
    let x = (0..node_count).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SpinState::new(sigma, x).expect("sampled state is in range")
}

/// Run the agitated machine from a random initial state drawn from
/// `config.seed`.
pub fn run_machine(instance: &TomographyInstance, config: &MachineConfig) -> Result<RunReport> {
    let mut rng = seed::rng(config.seed);
    let state = random_state(instance.node_count(), &mut rng);
    run_machine_from(instance, config, state, &mut rng)
}

/// Stage loop: evolve for T, stop if every ray charge vanishes, otherwise
/// agitate and try again, at most `max_agitations` times.
///
/// A step overflow ends the run unsolved with the diagnostic in
/// [`RunReport::failure`].
pub fn run_machine_from(
    instance: &TomographyInstance,
    config: &MachineConfig,
    mut state: SpinState,
    rng: &mut Rng,
) -> Result<RunReport> {
    config.validate()?;
    if state.len() != instance.node_count() {
        return Err(Error::LengthMismatch {
            expected: instance.node_count(),
            actual: state.len(),
        });
    }
    let start = Instant::now();
    let mut integrator = Integrator::new(instance);
    let mut trace = config.trace_stride.map(|_| Vec::new());
    let mut stage_cuts = Vec::new();
    let mut agitations = 0;
    let mut steps = 0u64;
    let mut failure = None;
    let mut solved = false;

    loop {
        let t0 = steps as f64 * config.dt();
        let sampler = config
            .trace_stride
            .zip(trace.as_mut())
            .map(|(stride, samples)| (stride, t0, samples));
        match integrator.evolve_stage(&mut state, config.stage_time, config.steps_per_stage, sampler) {
            Ok(_) => steps += config.steps_per_stage as u64,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
        stage_cuts.push(analysis::cut_value(instance, state.sigma()));
        if analysis::is_solution(instance, state.sigma()) {
            solved = true;
            break;
        }
        if agitations == config.max_agitations {
            break;
        }
        agitate(&mut state, rng);
        agitations += 1;
    }

    let residuals = analysis::residuals(instance, state.sigma());
    Ok(RunReport {
        solved,
        agitations_used: agitations,
        final_sigma: state.into_sigma(),
        residuals,
        stage_cuts,
        cut_trace: trace,
        steps,
        elapsed: start.elapsed(),
        failure,
    })
}
