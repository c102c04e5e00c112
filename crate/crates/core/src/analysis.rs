//! Objective functions, ray residuals, cluster detection and exact oracles.
//!
//! Binary quantities (`cut_value`, `ray_charge`) use the unscaled integer
//! charges. The relaxed cut uses the λ-scaled charges so that it is the
//! objective whose gradient the dynamics follows.

use crate::builder::{self, build_grid_rays_2d, Adjacency};
use crate::error::{Error, Result};
use crate::model::{BinaryImage, SpinState, TomographyInstance};

/// H = ½ Σ_{m,n} A_{mn} σ_m σ_n.
pub fn ising_energy(adjacency: &Adjacency, sigma: &[i8]) -> i64 {
    let n = adjacency.size();
    assert_eq!(sigma.len(), n);
    let mut sum = 0;
    for m in 0..n {
        for k in 0..n {
            sum += adjacency.get(m, k) * i64::from(sigma[m]) * i64::from(sigma[k]);
        }
    }
    sum / 2
}

/// C = ¼ Σ_{m,n} A_{mn} (1 − σ_m σ_n).
pub fn graph_cut(adjacency: &Adjacency, sigma: &[i8]) -> i64 {
    let n = adjacency.size();
    assert_eq!(sigma.len(), n);
    let mut sum = 0;
    for m in 0..n {
        for k in 0..n {
            sum += adjacency.get(m, k) * (1 - i64::from(sigma[m]) * i64::from(sigma[k]));
        }
    }
    sum / 4
}

/// Q(r; σ) = Σ_{α ∈ R(r)} σ_α + q̃₀(r).
pub fn ray_charge(instance: &TomographyInstance, sigma: &[i8], r: usize) -> i64 {
    instance
        .rays()
        .ray(r)
        .iter()
        .map(|&a| i64::from(sigma[a]))
        .sum::<i64>()
        + instance.spin_data()[r]
}

pub fn residuals(instance: &TomographyInstance, sigma: &[i8]) -> Vec<i64> {
    (0..instance.ray_count())
        .map(|r| ray_charge(instance, sigma, r))
        .collect()
}

/// C̄ = Σ_r (N(r) − P(r))².
pub fn max_cut_bound(instance: &TomographyInstance) -> i64 {
    (0..instance.ray_count())
        .map(|r| {
            let d = instance.rays().ray_len(r) as i64 - i64::from(instance.projections()[r]);
            d * d
        })
        .sum()
}

/// C(σ) = C̄ − ¼ Σ_r Q(r; σ)².
pub fn cut_value(instance: &TomographyInstance, sigma: &[i8]) -> i64 {
    let penalty: i64 = residuals(instance, sigma).iter().map(|q| q * q).sum();
    max_cut_bound(instance) - penalty / 4
}

pub fn is_solution(instance: &TomographyInstance, sigma: &[i8]) -> bool {
    (0..instance.ray_count()).all(|r| ray_charge(instance, sigma, r) == 0)
}

/// Relaxed cut C_V₂(σ, X) with the auxiliary spin pinned at (+1, 0).
pub fn relaxed_cut(instance: &TomographyInstance, state: &SpinState) -> f64 {
    relaxed_cut_with_aux(instance, state, 1, 0.0)
}

/// Relaxed cut with the auxiliary spin at an arbitrary phase point.
///
/// C_V₂ = Σ_r λ(r) [(N − P)² − ¼ Q(r)²] + ½ Σ_r λ(r) Σ_{α<β ∈ R̃(r)} c_α c_β |X_α − X_β|,
/// where c is σ for free spins and σ₀ q̃₀(r) for the auxiliary one.
pub fn relaxed_cut_with_aux(instance: &TomographyInstance, state: &SpinState, aux_sigma: i8, aux_x: f64) -> f64 {
    let sigma = state.sigma();
    let x = state.x();
    let mut total = 0.0;
    for (r, ray) in instance.rays().rays().iter().enumerate() {
        let lambda = instance.lambda()[r];
        let aux_charge = i64::from(aux_sigma) * instance.spin_data()[r];
        let q: i64 = ray.iter().map(|&a| i64::from(sigma[a])).sum::<i64>() + aux_charge;
        let gap = ray.len() as i64 - i64::from(instance.projections()[r]);
        let binary = (gap * gap) as f64 - (q * q) as f64 / 4.0;

        let mut pairs = 0.0;
        for (i, &a) in ray.iter().enumerate() {
            let ca = f64::from(sigma[a]);
            for &b in &ray[i + 1..] {
                pairs += ca * f64::from(sigma[b]) * (x[a] - x[b]).abs();
            }
            pairs += ca * aux_charge as f64 * (x[a] - aux_x).abs();
        }
        total += lambda * (binary + 0.5 * pairs);
    }
    total
}

/// A state translated on the phase circles, including the auxiliary spin.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedState {
    pub state: SpinState,
    pub aux_sigma: i8,
    pub aux_x: f64,
}

/// Translate a phase point by `shift`, returning the wrapped coordinate and
/// whether σ flips (odd number of boundary crossings).
fn shift_point(x: f64, shift: f64) -> (f64, bool) {
    let moved = x + shift;
    let mut turns = ((moved + 1.0) / 2.0).floor();
    let mut y = moved - 2.0 * turns;
    if y >= 1.0 {
        y -= 2.0;
        turns += 1.0;
    } else if y < -1.0 {
        y += 2.0;
        turns -= 1.0;
    }
    (y, turns.rem_euclid(2.0) == 1.0)
}

/// Global translation X → X + r·1 of every spin, the auxiliary one included,
/// inverting σ at each boundary crossing.
///
/// The auxiliary spin has to move with the rest for the relaxed cut to stay
/// invariant; its new phase point is returned next to the free spins.
pub fn global_shift(state: &SpinState, shift: f64) -> ShiftedState {
    let mut sigma = state.sigma().to_vec();
    let mut x = state.x().to_vec();
    for (s, v) in sigma.iter_mut().zip(x.iter_mut()) {
        let (y, flip) = shift_point(*v, shift);
        *v = y;
        if flip {
            *s = -*s;
        }
    }
    let (aux_x, aux_flip) = shift_point(0.0, shift);
    ShiftedState {
        state: SpinState::new(sigma, x).expect("shifted coordinates are wrapped"),
        aux_sigma: if aux_flip { -1 } else { 1 },
        aux_x,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongCluster {
    /// Free nodes in the cluster.
    pub nodes: Vec<usize>,
    pub contains_aux: bool,
    /// Mean continuous component of the members.
    pub position: f64,
}

/// Strong clusters ordered by increasing position.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    pub clusters: Vec<StrongCluster>,
}

impl ClusterPartition {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }
}

/// Default gap tolerance, 1e−9 · N.
pub fn default_cluster_tolerance(node_count: usize) -> f64 {
    1e-9 * node_count.max(1) as f64
}

/// Single-linkage grouping of the sorted coordinates (auxiliary spin at 0):
/// neighbours closer than `tol` share a cluster.
pub fn detect_strong_clusters(state: &SpinState, tol: f64) -> ClusterPartition {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut points: Vec<(f64, Option<usize>)> = state
        .x()
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, Some(i)))
        .chain(std::iter::once((0.0, None)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut clusters: Vec<StrongCluster> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, node) in points {
        if clusters.is_empty() || x - last > tol {
            if let Some(c) = clusters.last_mut() {
                c.position = sum / count as f64;
            }
            clusters.push(StrongCluster {
                nodes: Vec::new(),
                contains_aux: false,
                position: x,
            });
            sum = 0.0;
            count = 0;
        }
        let c = clusters.last_mut().expect("pushed above");
        match node {
            Some(i) => c.nodes.push(i),
            None => c.contains_aux = true,
        }
        sum += x;
        count += 1;
        last = x;
    }
    if let Some(c) = clusters.last_mut() {
        c.position = sum / count as f64;
    }
    ClusterPartition { clusters }
}

/// Unscaled vector charge of a cluster, one component per ray.
pub fn cluster_charge(instance: &TomographyInstance, sigma: &[i8], cluster: &StrongCluster) -> Vec<i64> {
    let mut charge = vec![0i64; instance.ray_count()];
    for &a in &cluster.nodes {
        for &r in instance.rays().rays_of(a) {
            charge[r] += i64::from(sigma[a]);
        }
    }
    if cluster.contains_aux {
        for (c, &q) in charge.iter_mut().zip(instance.spin_data()) {
            *c += q;
        }
    }
    charge
}

pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    /// Spin configurations whose image reproduces every projection.
    pub solutions: Vec<Vec<i8>>,
    pub max_cut: i64,
    /// Configurations attaining `max_cut`.
    pub maximizers: Vec<Vec<i8>>,
}

/// Exhaustive enumeration over all 2^N spin configurations.
///
/// Cuts are summed edge by edge over the ray cliques with one auxiliary
/// vertex per ray, and solutions are recognised by comparing projections;
/// neither goes through the ray-charge formulas.
pub fn brute_force_solutions(instance: &TomographyInstance) -> Result<BruteForce> {
    let n = instance.node_count();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            nodes: n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let rays = instance.rays();
    let mut solutions = Vec::new();
    let mut maximizers = Vec::new();
    let mut max_cut = i64::MIN;
    for mask in 0u32..(1u32 << n) {
        let up = |a: usize| mask >> a & 1 == 1;
        let mut cut = 0i64;
        let mut matches = true;
        for (r, ray) in rays.rays().iter().enumerate() {
            let set = ray.iter().filter(|&&a| up(a)).count();
            matches &= set as u32 == instance.projections()[r];
            for (i, &a) in ray.iter().enumerate() {
                for &b in &ray[i + 1..] {
                    if up(a) != up(b) {
                        cut += 1;
                    }
                }
                // the auxiliary vertex is spin up
                if !up(a) {
                    cut += instance.spin_data()[r];
                }
            }
        }
        let sigma = || (0..n).map(|a| if up(a) { 1 } else { -1 }).collect::<Vec<i8>>();
        if matches {
            solutions.push(sigma());
        }
        if cut > max_cut {
            max_cut = cut;
            maximizers.clear();
        }
        if cut == max_cut {
            maximizers.push(sigma());
        }
    }
    Ok(BruteForce {
        solutions,
        max_cut,
        maximizers,
    })
}

/// A two-ray defect on a 2×2 grid that no single flip can repair.
#[derive(Debug, Clone)]
pub struct DefectFixture {
    pub instance: TomographyInstance,
    /// Continuous components place the pair above every other member of
    /// their rays (and above the auxiliary spin).
    pub state: SpinState,
    /// Flipping both spins solves the instance.
    pub pair: (usize, usize),
}

/// Data: rows (1, 1), columns (1, 1). Spins: the top row fully set and the
/// bottom row empty, so row 0 has Q = +2 and row 1 has Q = −2 while both
/// columns are satisfied. Nodes 1 and 3 share column 1; flipping the pair
/// yields the diagonal image.
pub fn build_defect_fixture() -> DefectFixture {
    let rays = build_grid_rays_2d(2, 2).expect("2x2 grid");
    let instance = builder::make_instance(rays, vec![1, 1, 1, 1], 0).expect("consistent data");
    let image = BinaryImage::from_rows(&[&[1, 1], &[0, 0]]).expect("2x2 image");
    let state = SpinState::new(image.to_sigma(), vec![-0.3, 0.5, 0.1, 0.6]).expect("valid state");
    DefectFixture {
        instance,
        state,
        pair: (1, 3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{instance_from_image, make_instance, random_image, to_adjacency};
    use crate::model::RaySystem;

    fn glider() -> BinaryImage {
        BinaryImage::from_rows(&[&[0, 1, 0], &[0, 0, 1], &[1, 1, 1]]).unwrap()
    }

    fn single_edge() -> Adjacency {
        let mut adj = Adjacency::zeros(2);
        adj.add_edge(0, 1, 1);
        adj
    }

    #[test]
    fn energy_examples() {
        assert_eq!(ising_energy(&single_edge(), &[1, 1]), 1);
        assert_eq!(ising_energy(&single_edge(), &[1, -1]), -1);
    }

    #[test]
    fn energy_and_cut_are_linked() {
        let mut adj = Adjacency::zeros(4);
        for (m, n, w) in [(0, 1, 3), (0, 2, -2), (1, 3, 5), (2, 3, 1), (0, 3, -4)] {
            adj.add_edge(m, n, w);
        }
        for mask in 0..16u32 {
            let sigma: Vec<i8> = (0..4).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect();
            let lhs = 4 * graph_cut(&adj, &sigma);
            assert_eq!(lhs, adj.total_weight() - 2 * ising_energy(&adj, &sigma));
        }
    }

    #[test]
    fn cut_examples() {
        let rays = RaySystem::new(4, vec![vec![0, 1, 2, 3]]).unwrap();
        let inst = make_instance(rays, vec![1], 0).unwrap();
        assert_eq!(ray_charge(&inst, &[1; 4], 0), 6);
        assert_eq!(cut_value(&inst, &[1; 4]), 0);
        assert_eq!(max_cut_bound(&inst), 9);

        let g = instance_from_image(&glider(), 0).unwrap();
        assert_eq!(max_cut_bound(&g), 14);
        assert_eq!(cut_value(&g, &glider().to_sigma()), 14);

        let empty = instance_from_image(&BinaryImage::zeros(vec![3, 3]).unwrap(), 0).unwrap();
        assert_eq!(max_cut_bound(&empty), 54);
    }

    #[test]
    fn ray_charge_examples() {
        let full = make_instance(RaySystem::new(3, vec![vec![0, 1, 2]]).unwrap(), vec![3], 0).unwrap();
        assert_eq!(ray_charge(&full, &[1, 1, 1], 0), 0);
        let empty = make_instance(RaySystem::new(3, vec![vec![0, 1, 2]]).unwrap(), vec![0], 0).unwrap();
        assert_eq!(ray_charge(&empty, &[1, 1, 1], 0), 6);
        let one = make_instance(RaySystem::new(3, vec![vec![0, 1, 2]]).unwrap(), vec![1], 0).unwrap();
        assert_eq!(ray_charge(&one, &[1, -1, -1], 0), 0);
    }

    #[test]
    fn solution_examples() {
        let g = instance_from_image(&glider(), 0).unwrap();
        assert!(is_solution(&g, &glider().to_sigma()));

        let empty = instance_from_image(&BinaryImage::zeros(vec![3, 3]).unwrap(), 0).unwrap();
        assert!(!is_solution(&empty, &[1; 9]));

        // rows 0 and 1 both have one pixel; swapping them keeps the data
        let img = BinaryImage::from_rows(&[&[1, 0, 0], &[0, 1, 0], &[1, 1, 0]]).unwrap();
        let swapped = BinaryImage::from_rows(&[&[0, 1, 0], &[1, 0, 0], &[1, 1, 0]]).unwrap();
        let inst = instance_from_image(&img, 0).unwrap();
        assert_ne!(img, swapped);
        assert!(is_solution(&inst, &swapped.to_sigma()));
    }

    #[test]
    fn relaxed_cut_examples() {
        let rays = RaySystem::new(2, vec![vec![0, 1]]).unwrap();
        let inst = make_instance(rays, vec![1], 0).unwrap().unscaled();
        let state = SpinState::new(vec![1, -1], vec![0.5, -0.5]).unwrap();
        assert!((relaxed_cut(&inst, &state) - 0.5).abs() < 1e-15);

        // coincident spins: only the λ-weighted binary cut remains
        let g = instance_from_image(&glider(), 3).unwrap();
        let sigma = vec![1, -1, 1, 1, -1, -1, 1, 1, -1];
        let state = SpinState::new(sigma.clone(), vec![0.0; 9]).unwrap();
        let weighted: f64 = residuals(&g, &sigma)
            .iter()
            .enumerate()
            .map(|(r, q)| {
                let gap = (3 - g.projections()[r] as i64) as f64;
                g.lambda()[r] * (gap * gap - (q * q) as f64 / 4.0)
            })
            .sum();
        assert!((relaxed_cut(&g, &state) - weighted).abs() < 1e-12);
    }

    #[test]
    fn shift_examples() {
        let state = SpinState::new(vec![1, -1, 1], vec![0.2, -0.9, 0.95]).unwrap();
        let same = global_shift(&state, 0.0);
        assert_eq!(same.state, state);
        assert_eq!((same.aux_sigma, same.aux_x), (1, 0.0));

        let half_turn = global_shift(&state, 2.0);
        for (a, b) in half_turn.state.x().iter().zip(state.x()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(half_turn.state.sigma(), &[-1, 1, -1]);
        assert_eq!(half_turn.aux_sigma, -1);

        let full_turn = global_shift(&state, 4.0);
        assert_eq!(full_turn.state.sigma(), state.sigma());
        assert_eq!(full_turn.aux_sigma, 1);

        let inst = instance_from_image(&random_image(&[3, 1], 0.5, 1).unwrap(), 1).unwrap();
        let shifted = global_shift(&state, 0.5);
        let before = relaxed_cut(&inst, &state);
        let after = relaxed_cut_with_aux(&inst, &shifted.state, shifted.aux_sigma, shifted.aux_x);
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn cluster_examples() {
        let state = SpinState::new(vec![1, -1, 1], vec![0.3, 0.3, -0.7]).unwrap();
        let parts = detect_strong_clusters(&state, 1e-6);
        let nodes: Vec<_> = parts.clusters.iter().map(|c| (c.nodes.clone(), c.contains_aux)).collect();
        assert_eq!(
            nodes,
            vec![(vec![2], false), (vec![], true), (vec![0, 1], false)]
        );

        let spread = SpinState::new(vec![1; 4], vec![-0.6, -0.2, 0.2, 0.6]).unwrap();
        assert_eq!(detect_strong_clusters(&spread, 1e-6).len(), 5);
    }

    #[test]
    fn brute_force_examples() {
        let one = instance_from_image(&BinaryImage::new(vec![1, 1], vec![1]).unwrap(), 0).unwrap();
        assert_eq!(brute_force_solutions(&one).unwrap().solutions, vec![vec![1]]);

        let diag = instance_from_image(&BinaryImage::from_rows(&[&[1, 0], &[0, 1]]).unwrap(), 0).unwrap();
        let bf = brute_force_solutions(&diag).unwrap();
        assert_eq!(bf.solutions, vec![vec![-1, 1, 1, -1], vec![1, -1, -1, 1]]);

        let g = instance_from_image(&glider(), 0).unwrap();
        let bf = brute_force_solutions(&g).unwrap();
        assert!(!bf.solutions.is_empty());
        assert_eq!(bf.max_cut, 14);
        assert!(bf.solutions.iter().all(|s| cut_value(&g, s) == 14));

        let big = instance_from_image(&BinaryImage::zeros(vec![7, 3]).unwrap(), 0).unwrap();
        assert!(matches!(brute_force_solutions(&big), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn adjacency_cut_matches_ray_formula() {
        for seed in 0..10 {
            let img = random_image(&[4, 3], 0.5, seed).unwrap();
            let inst = instance_from_image(&img, seed).unwrap();
            let adj = to_adjacency(&inst);
            let sigma = random_image(&[12], 0.5, seed + 100).unwrap().to_sigma();
            let mut full = sigma.clone();
            full.push(1);
            assert_eq!(graph_cut(&adj, &full), cut_value(&inst, &sigma));
        }
    }

    #[test]
    fn defect_fixture_shape() {
        let fx = build_defect_fixture();
        let res = residuals(&fx.instance, fx.state.sigma());
        assert_eq!(res, vec![2, -2, 0, 0]);
        let mut fixed = fx.state.sigma().to_vec();
        fixed[fx.pair.0] = -fixed[fx.pair.0];
        fixed[fx.pair.1] = -fixed[fx.pair.1];
        assert!(is_solution(&fx.instance, &fixed));
    }
}
