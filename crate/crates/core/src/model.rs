//! Domain types shared by the solver, the oracles and the harness.
//!
//! Free nodes are indexed exactly like pixels: node `α` is the `α`-th value
//! of the row-major image. The auxiliary spin (σ₀ = +1, X₀ = 0) that carries
//! the projection data is never stored; every routine that needs it treats it
//! as a fixed particle at the origin.

use std::collections::BTreeMap;
use std::time::Duration;

use crate::error::{Error, Result};

/// Binary values on a 1–3 dimensional grid.
///
/// `dims[0]` is the fastest-varying axis (row length), so the flat index of
/// `(x, y, z)` is `x + dims[0] * (y + dims[1] * z)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    dims: Vec<usize>,
    values: Vec<u8>,
}

impl BinaryImage {
    pub fn new(dims: Vec<usize>, values: Vec<u8>) -> Result<Self> {
        let expected = checked_volume(&dims)?;
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|&v| v > 1) {
            return Err(Error::InvalidImage(format!(
                "value {} at index {pos} is not 0 or 1",
                values[pos]
            )));
        }
        Ok(BinaryImage { dims, values })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n = checked_volume(&dims)?;
        Ok(BinaryImage {
            dims,
            values: vec![0; n],
        })
    }

    /// Build a 2D image from rows of equal length.
    pub fn from_rows(rows: &[&[u8]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidImage("ragged rows".into()));
        }
        BinaryImage::new(vec![width, height], rows.concat())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1).count()
    }

    /// Spin encoding: set pixels are spin up.
    pub fn to_sigma(&self) -> Vec<i8> {
        image_to_sigma(self)
    }
}

pub(crate) fn checked_volume(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > 3 {
        return Err(Error::InvalidDims(format!(
            "expected 1 to 3 dimensions, got {}",
            dims.len()
        )));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidDims(format!("zero extent in {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidDims(format!("volume of {dims:?} overflows")))
}

pub fn image_to_sigma(image: &BinaryImage) -> Vec<i8> {
    image
        .values
        .iter()
        .map(|&v| if v == 1 { 1 } else { -1 })
        .collect()
}

/// Inverse of [`image_to_sigma`]; the continuous components are ignored.
pub fn sigma_to_image(sigma: &[i8], dims: &[usize]) -> Result<BinaryImage> {
    let expected = checked_volume(dims)?;
    if sigma.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: sigma.len(),
        });
    }
    let values = sigma.iter().map(|&s| u8::from(s > 0)).collect();
    BinaryImage::new(dims.to_vec(), values)
}

/// Why a family of node subsets is not a valid ray system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RayViolation {
    NoNodes,
    EmptyRay { ray: usize },
    NodeOutOfRange { ray: usize, node: usize },
    DuplicateNode { ray: usize, node: usize },
    /// Two rays sharing more than one node.
    SharedNodes {
        first: usize,
        second: usize,
        shared: Vec<usize>,
    },
}

impl std::fmt::Display for RayViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RayViolation::NoNodes => write!(f, "node count must be positive"),
            RayViolation::EmptyRay { ray } => write!(f, "ray {ray} is empty"),
            RayViolation::NodeOutOfRange { ray, node } => {
                write!(f, "ray {ray} references node {node} out of range")
            }
            RayViolation::DuplicateNode { ray, node } => {
                write!(f, "ray {ray} lists node {node} twice")
            }
            RayViolation::SharedNodes {
                first,
                second,
                shared,
            } => write!(f, "rays {first} and {second} share nodes {shared:?}"),
        }
    }
}

impl From<RayViolation> for Error {
    fn from(v: RayViolation) -> Self {
        Error::InvalidRays(v.to_string())
    }
}

/// A family of node subsets in which any two rays share at most one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaySystem {
    node_count: usize,
    rays: Vec<Vec<usize>>,
    /// Rays containing each node, in increasing ray order.
    memberships: Vec<Vec<usize>>,
    /// Groups of rays that each partition the node set (grid axis families).
    families: Vec<Vec<usize>>,
}

impl RaySystem {
    /// Validating constructor.
    pub fn new(node_count: usize, rays: Vec<Vec<usize>>) -> Result<Self> {
        let system = RaySystem::new_unchecked(node_count, rays);
        check_rays(&system)?;
        Ok(system)
    }

    /// Builds the system without checking the intersection property.
    ///
    /// Out-of-range node indices are dropped from the membership table, so
    /// the result is only safe to pass to [`crate::builder::validate_ray_system`].
    pub fn new_unchecked(node_count: usize, rays: Vec<Vec<usize>>) -> Self {
        let mut memberships = vec![Vec::new(); node_count];
        for (r, ray) in rays.iter().enumerate() {
            for &node in ray {
                if let Some(m) = memberships.get_mut(node) {
                    m.push(r);
                }
            }
        }
        RaySystem {
            node_count,
            rays,
            memberships,
            families: Vec::new(),
        }
    }

    /// Attach axis families; each family must cover every node exactly once.
    pub fn with_families(mut self, families: Vec<Vec<usize>>) -> Result<Self> {
        for (f, family) in families.iter().enumerate() {
            let mut seen = vec![false; self.node_count];
            for &r in family {
                let ray = self
                    .rays
                    .get(r)
                    .ok_or_else(|| Error::InvalidRays(format!("family {f}: no ray {r}")))?;
                for &node in ray {
                    if std::mem::replace(&mut seen[node], true) {
                        return Err(Error::InvalidRays(format!(
                            "family {f} covers node {node} twice"
                        )));
                    }
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::InvalidRays(format!(
                    "family {f} does not cover every node"
                )));
            }
        }
        self.families = families;
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn ray_count(&self) -> usize {
        self.rays.len()
    }

    pub fn rays(&self) -> &[Vec<usize>] {
        &self.rays
    }

    pub fn ray(&self, r: usize) -> &[usize] {
        &self.rays[r]
    }

    /// N(r).
    pub fn ray_len(&self, r: usize) -> usize {
        self.rays[r].len()
    }

    /// D(α): the rays through node `α`.
    pub fn rays_of(&self, node: usize) -> &[usize] {
        &self.memberships[node]
    }

    pub fn families(&self) -> &[Vec<usize>] {
        &self.families
    }
}

/// Checks ranges, emptiness, duplicates and the pairwise intersection bound.
///
/// Offending ray pairs are reported in lexicographic order, so the first one
/// returned is the smallest `(first, second)`.
pub(crate) fn check_rays(system: &RaySystem) -> std::result::Result<(), RayViolation> {
    if system.node_count == 0 {
        return Err(RayViolation::NoNodes);
    }
    for (r, ray) in system.rays.iter().enumerate() {
        if ray.is_empty() {
            return Err(RayViolation::EmptyRay { ray: r });
        }
        let mut seen = std::collections::HashSet::with_capacity(ray.len());
        for &node in ray {
            if node >= system.node_count {
                return Err(RayViolation::NodeOutOfRange { ray: r, node });
            }
            if !seen.insert(node) {
                return Err(RayViolation::DuplicateNode { ray: r, node });
            }
        }
    }
    let mut shared: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (node, rays) in system.memberships.iter().enumerate() {
        for (i, &a) in rays.iter().enumerate() {
            for &b in &rays[i + 1..] {
                shared.entry((a, b)).or_default().push(node);
            }
        }
    }
    if let Some(((first, second), nodes)) = shared.into_iter().find(|(_, n)| n.len() > 1) {
        return Err(RayViolation::SharedNodes {
            first,
            second,
            shared: nodes,
        });
    }
    Ok(())
}

/// Ray system plus projection data, with the derived spin-side quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyInstance {
    pub(crate) rays: RaySystem,
    pub(crate) projections: Vec<u32>,
    pub(crate) spin_data: Vec<i64>,
    pub(crate) lambda: Vec<f64>,
    pub(crate) lambda_seed: Option<u64>,
}

impl TomographyInstance {
    pub fn rays(&self) -> &RaySystem {
        &self.rays
    }

    pub fn node_count(&self) -> usize {
        self.rays.node_count
    }

    pub fn ray_count(&self) -> usize {
        self.rays.rays.len()
    }

    /// P(r).
    pub fn projections(&self) -> &[u32] {
        &self.projections
    }

    /// q̃₀(r) = N(r) − 2 P(r), the auxiliary spin's coupling to ray `r`.
    pub fn spin_data(&self) -> &[i64] {
        &self.spin_data
    }

    /// Ray weights λ(r).
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Seed the λ weights were drawn with, if any.
    pub fn lambda_seed(&self) -> Option<u64> {
        self.lambda_seed
    }

    /// Replace the ray weights. Only positivity is required here, so unit
    /// weights can be used to study the unscaled dynamics.
    pub fn with_lambda(mut self, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != self.ray_count() {
            return Err(Error::LengthMismatch {
                expected: self.ray_count(),
                actual: lambda.len(),
            });
        }
        if lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidConfig("ray weights must be positive".into()));
        }
        self.lambda = lambda;
        self.lambda_seed = None;
        Ok(self)
    }

    /// Unit weights on every ray.
    pub fn unscaled(self) -> Self {
        let n = self.ray_count();
        self.with_lambda(vec![1.0; n]).expect("unit weights are valid")
    }

    /// Re-derive q̃₀ from N and P and compare.
    pub fn check_invariants(&self) -> Result<()> {
        for r in 0..self.ray_count() {
            let n = self.rays.ray_len(r) as i64;
            let p = self.projections[r] as i64;
            if p > n {
                return Err(Error::InfeasibleProjection {
                    ray: r,
                    projection: self.projections[r],
                    len: n as usize,
                });
            }
            if self.spin_data[r] != n - 2 * p {
                return Err(Error::Inconsistent(format!(
                    "ray {r}: spin data {} != N - 2P = {}",
                    self.spin_data[r],
                    n - 2 * p
                )));
            }
        }
        Ok(())
    }
}

/// Vector charges with the √λ(r) scaling applied.
///
/// Entry `(r, v)` of a free charge is the `r`-th coordinate of q⃗_α; the
/// auxiliary charge is dense over all rays.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorChargeTable {
    pub free: Vec<Vec<(usize, f64)>>,
    pub aux: Vec<f64>,
}

impl VectorChargeTable {
    pub fn dot(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
        a.iter()
            .map(|&(ra, va)| {
                b.iter()
                    .find(|&&(rb, _)| rb == ra)
                    .map_or(0.0, |&(_, vb)| va * vb)
            })
            .sum()
    }

    pub fn dot_aux(&self, node: usize) -> f64 {
        self.free[node].iter().map(|&(r, v)| v * self.aux[r]).sum()
    }

    /// Negate the charge of `node` after its spin flipped.
    pub fn flip(&mut self, node: usize) {
        for entry in &mut self.free[node] {
            entry.1 = -entry.1;
        }
    }
}

/// Relaxed spins: binary components σ and continuous components X ∈ [−1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SpinState {
    sigma: Vec<i8>,
    x: Vec<f64>,
}

impl SpinState {
    pub fn new(sigma: Vec<i8>, x: Vec<f64>) -> Result<Self> {
        if sigma.len() != x.len() {
            return Err(Error::LengthMismatch {
                expected: sigma.len(),
                actual: x.len(),
            });
        }
        if let Some(i) = sigma.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidState(format!(
                "sigma[{i}] = {} is not ±1",
                sigma[i]
            )));
        }
        if let Some(i) = x.iter().position(|v| !(-1.0..1.0).contains(v)) {
            return Err(Error::InvalidState(format!(
                "x[{i}] = {} outside [-1, 1)",
                x[i]
            )));
        }
        Ok(SpinState { sigma, x })
    }

    pub fn sigma(&self) -> &[i8] {
        &self.sigma
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// ξ_α = σ_α + X_α (the periodic offset 4k is not tracked).
    pub fn xi(&self) -> Vec<f64> {
        self.sigma
            .iter()
            .zip(&self.x)
            .map(|(&s, &x)| f64::from(s) + x)
            .collect()
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut [i8], &mut [f64]) {
        (&mut self.sigma, &mut self.x)
    }

    pub fn into_sigma(self) -> Vec<i8> {
        self.sigma
    }
}

/// How terminal states are perturbed between stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AgitationMode {
    /// Every continuous component is redrawn uniformly from [−1, 1).
    #[default]
    FullResample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineConfig {
    /// Machine time per stage, T.
    pub stage_time: f64,
    /// Euler steps per stage, M.
    pub steps_per_stage: usize,
    pub max_agitations: usize,
    pub seed: u64,
    pub agitation: AgitationMode,
    /// Record the relaxed cut every `n` steps when set.
    pub trace_stride: Option<usize>,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            stage_time: 5.0,
            steps_per_stage: 600,
            max_agitations: 10,
            seed: 0,
            agitation: AgitationMode::FullResample,
            trace_stride: None,
        }
    }
}

impl MachineConfig {
    pub fn new(stage_time: f64, steps_per_stage: usize, max_agitations: usize, seed: u64) -> Result<Self> {
        let config = MachineConfig {
            stage_time,
            steps_per_stage,
            max_agitations,
            seed,
            ..MachineConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stage_time.is_finite() && self.stage_time > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "stage time must be positive, got {}",
                self.stage_time
            )));
        }
        if self.steps_per_stage == 0 {
            return Err(Error::InvalidConfig("steps per stage must be >= 1".into()));
        }
        if self.trace_stride == Some(0) {
            return Err(Error::InvalidConfig("trace stride must be >= 1".into()));
        }
        let dt = self.dt();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidConfig(format!("time step {dt} is not positive")));
        }
        Ok(())
    }

    /// Δt = T / M.
    pub fn dt(&self) -> f64 {
        self.stage_time / self.steps_per_stage as f64
    }
}

/// Outcome of one machine (or local search) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub solved: bool,
    pub agitations_used: usize,
    pub final_sigma: Vec<i8>,
    /// Unscaled ray charges Q(r; σ) at termination.
    pub residuals: Vec<i64>,
    /// Binary cut at the end of every stage.
    pub stage_cuts: Vec<i64>,
    /// `(machine time, relaxed cut)` samples, when tracing was requested.
    pub cut_trace: Option<Vec<(f64, f64)>>,
    pub steps: u64,
    pub elapsed: Duration,
    /// Set when the run aborted, e.g. on a step overflow.
    pub failure: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn glider() -> BinaryImage {
        BinaryImage::from_rows(&[&[0, 1, 0], &[0, 0, 1], &[1, 1, 1]]).unwrap()
    }

    #[test]
    fn sigma_encoding_examples() {
        let diag = BinaryImage::from_rows(&[&[1, 0], &[0, 1]]).unwrap();
        assert_eq!(image_to_sigma(&diag), vec![1, -1, -1, 1]);

        let zeros = BinaryImage::zeros(vec![3, 3]).unwrap();
        assert_eq!(image_to_sigma(&zeros), vec![-1; 9]);

        // element-wise: 0 -> -1, 1 -> +1
        let expected: Vec<i8> = glider()
            .values()
            .iter()
            .map(|&v| 2 * v as i8 - 1)
            .collect();
        assert_eq!(expected, vec![-1, 1, -1, -1, -1, 1, 1, 1, 1]);
        assert_eq!(image_to_sigma(&glider()), expected);
    }

    #[test]
    fn sigma_to_image_examples() {
        let img = sigma_to_image(&[1, -1], &[2]).unwrap();
        assert_eq!(img.values(), &[1, 0]);
        let zeros = sigma_to_image(&[-1; 9], &[3, 3]).unwrap();
        assert_eq!(zeros, BinaryImage::zeros(vec![3, 3]).unwrap());
        assert_eq!(sigma_to_image(&glider().to_sigma(), &[3, 3]).unwrap(), glider());
        assert!(matches!(
            sigma_to_image(&[1, 1, 1], &[2, 2]),
            Err(Error::LengthMismatch { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn image_rejects_bad_input() {
        assert!(BinaryImage::new(vec![2], vec![0, 2]).is_err());
        assert!(BinaryImage::new(vec![2, 2], vec![0, 1, 1]).is_err());
        assert!(BinaryImage::new(vec![], vec![]).is_err());
        assert!(BinaryImage::new(vec![1, 1, 1, 1], vec![0]).is_err());
        assert!(BinaryImage::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn spin_state_checks_ranges() {
        assert!(SpinState::new(vec![1, -1], vec![-1.0, 0.999]).is_ok());
        assert!(SpinState::new(vec![1], vec![1.0]).is_err());
        assert!(SpinState::new(vec![1], vec![-1.0001]).is_err());
        assert!(SpinState::new(vec![0], vec![0.0]).is_err());
        assert!(SpinState::new(vec![1], vec![f64::NAN]).is_err());
        assert!(SpinState::new(vec![1, 1], vec![0.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MachineConfig::new(5.0, 600, 10, 0).is_ok());
        assert!(MachineConfig::new(0.0, 600, 10, 0).is_err());
        assert!(MachineConfig::new(5.0, 0, 10, 0).is_err());
        assert!(MachineConfig::new(f64::INFINITY, 10, 0, 0).is_err());
        assert!((MachineConfig::default().dt() - 5.0 / 600.0).abs() < 1e-15);
    }

    #[test]
    fn types_are_send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<BinaryImage>();
        assert_send_sync::<RaySystem>();
        assert_send_sync::<TomographyInstance>();
        assert_send_sync::<SpinState>();
        assert_send_sync::<RunReport>();
        assert_send_sync::<MachineConfig>();
    }
}
