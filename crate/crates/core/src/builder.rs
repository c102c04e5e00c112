//! Ray systems, projections and instance assembly.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::{check_rays, BinaryImage, RaySystem, RayViolation, TomographyInstance, VectorChargeTable};
use crate::seed;

/// Rows of a `width × height` grid followed by its columns.
pub fn build_grid_rays_2d(width: usize, height: usize) -> Result<RaySystem> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDims(format!("{width}x{height}")));
    }
    let mut rays = Vec::with_capacity(width + height);
    for y in 0..height {
        rays.push((0..width).map(|x| x + width * y).collect());
    }
    for x in 0..width {
        rays.push((0..height).map(|y| x + width * y).collect());
    }
    let families = vec![(0..height).collect(), (height..height + width).collect()];
    RaySystem::new(width * height, rays)?.with_families(families)
}

/// Axis-aligned lines of an `nx × ny × nz` volume: x-lines, then y-lines,
/// then z-lines.
pub fn build_grid_rays_3d(nx: usize, ny: usize, nz: usize) -> Result<RaySystem> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidDims(format!("{nx}x{ny}x{nz}")));
    }
    let index = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let mut rays: Vec<Vec<usize>> = Vec::with_capacity(ny * nz + nx * nz + nx * ny);
    for z in 0..nz {
        for y in 0..ny {
            rays.push((0..nx).map(|x| index(x, y, z)).collect());
        }
    }
    for z in 0..nz {
        for x in 0..nx {
            rays.push((0..ny).map(|y| index(x, y, z)).collect());
        }
    }
    for y in 0..ny {
        for x in 0..nx {
            rays.push((0..nz).map(|z| index(x, y, z)).collect());
        }
    }
    let a = ny * nz;
    let b = a + nx * nz;
    let families = vec![(0..a).collect(), (a..b).collect(), (b..rays.len()).collect()];
    RaySystem::new(nx * ny * nz, rays)?.with_families(families)
}

/// Grid rays matching the dimensionality of `dims` (1D images get one ray).
pub fn build_grid_rays(dims: &[usize]) -> Result<RaySystem> {
    match *dims {
        [n] if n > 0 => RaySystem::new(n, vec![(0..n).collect()])?.with_families(vec![vec![0]]),
        [w, h] => build_grid_rays_2d(w, h),
        [x, y, z] => build_grid_rays_3d(x, y, z),
        _ => Err(Error::InvalidDims(format!("{dims:?}"))),
    }
}

pub fn validate_ray_system(rays: &RaySystem) -> std::result::Result<(), RayViolation> {
    check_rays(rays)
}

/// P(r) = Σ_{u ∈ R(r)} s(u).
pub fn project(image: &BinaryImage, rays: &RaySystem) -> Result<Vec<u32>> {
    if image.len() != rays.node_count() {
        return Err(Error::LengthMismatch {
            expected: rays.node_count(),
            actual: image.len(),
        });
    }
    let values = image.values();
    Ok(rays
        .rays()
        .iter()
        .map(|ray| ray.iter().map(|&u| u32::from(values[u])).sum())
        .collect())
}

pub fn make_instance(rays: RaySystem, projections: Vec<u32>, seed: u64) -> Result<TomographyInstance> {
    let lambda = lambda_weights(rays.ray_count(), seed);
    let mut instance = assemble(rays, projections, lambda)?;
    instance.lambda_seed = Some(seed);
    Ok(instance)
}

fn assemble(rays: RaySystem, projections: Vec<u32>, lambda: Vec<f64>) -> Result<TomographyInstance> {
    if projections.len() != rays.ray_count() {
        return Err(Error::LengthMismatch {
            expected: rays.ray_count(),
            actual: projections.len(),
        });
    }
    for (r, &p) in projections.iter().enumerate() {
        if p as usize > rays.ray_len(r) {
            return Err(Error::InfeasibleProjection {
                ray: r,
                projection: p,
                len: rays.ray_len(r),
            });
        }
    }
    // Complete axis families each count every set pixel once.
    let masses: Vec<u64> = rays
        .families()
        .iter()
        .map(|f| f.iter().map(|&r| u64::from(projections[r])).sum())
        .collect();
    if let Some(w) = masses.windows(2).find(|w| w[0] != w[1]) {
        return Err(Error::Inconsistent(format!(
            "total mass differs across ray families ({} vs {})",
            w[0], w[1]
        )));
    }
    let spin_data = projections
        .iter()
        .enumerate()
        .map(|(r, &p)| rays.ray_len(r) as i64 - 2 * i64::from(p))
        .collect();
    Ok(TomographyInstance {
        rays,
        projections,
        spin_data,
        lambda,
        lambda_seed: None,
    })
}

/// The first `count` primes.
pub fn first_primes(count: usize) -> Vec<u64> {
    if count == 0 {
        return Vec::new();
    }
    // p_n < n (ln n + ln ln n) for n >= 6
    let n = count.max(6) as f64;
    let limit = (n * (n.ln() + n.ln().ln())).ceil() as usize + 1;
    let mut composite = vec![false; limit + 1];
    let mut primes = Vec::with_capacity(count);
    for i in 2..=limit {
        if composite[i] {
            continue;
        }
        primes.push(i as u64);
        if primes.len() == count {
            break;
        }
        let mut j = i * i;
        while j <= limit {
            composite[j] = true;
            j += i;
        }
    }
    primes
}

fn isqrt(n: u64) -> u64 {
    let mut s = (n as f64).sqrt() as u64;
    while s * s > n {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= n {
        s += 1;
    }
    s
}

/// λ = √p / ⌊√p⌋ for a prime p; irrational and in (1, √3].
pub fn lambda_of_prime(p: u64) -> f64 {
    (p as f64).sqrt() / isqrt(p) as f64
}

/// Distinct ray weights drawn from a seeded shuffle of the first `2 R` primes.
pub fn lambda_weights(ray_count: usize, seed: u64) -> Vec<f64> {
    let mut primes = first_primes(2 * ray_count);
    let mut rng = seed::rng(seed::derive(seed, &[0x001a_3bda]));
    primes.shuffle(&mut rng);
    primes
        .into_iter()
        .take(ray_count)
        .map(lambda_of_prime)
        .collect()
}

/// q⃗_α = σ_α Σ_{r ∈ D(α)} √λ(r) e⃗(r) and q⃗₀ = Σ_r q̃₀(r) √λ(r) e⃗(r).
pub fn assemble_charges(instance: &TomographyInstance, sigma: &[i8]) -> Result<VectorChargeTable> {
    let n = instance.node_count();
    if sigma.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: sigma.len(),
        });
    }
    let lambda = instance.lambda();
    let free = (0..n)
        .map(|a| {
            instance
                .rays()
                .rays_of(a)
                .iter()
                .map(|&r| (r, f64::from(sigma[a]) * lambda[r].sqrt()))
                .collect()
        })
        .collect();
    let aux = instance
        .spin_data()
        .iter()
        .zip(lambda)
        .map(|(&q, &l)| q as f64 * l.sqrt())
        .collect();
    Ok(VectorChargeTable { free, aux })
}

/// Dense symmetric weighted adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    size: usize,
    weights: Vec<i64>,
}

impl Adjacency {
    pub fn zeros(size: usize) -> Self {
        Adjacency {
            size,
            weights: vec![0; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, m: usize, n: usize) -> i64 {
        self.weights[m * self.size + n]
    }

    /// Adds `w` to both (m, n) and (n, m).
    pub fn add_edge(&mut self, m: usize, n: usize, w: i64) {
        self.weights[m * self.size + n] += w;
        if m != n {
            self.weights[n * self.size + m] += w;
        }
    }

    pub fn total_weight(&self) -> i64 {
        self.weights.iter().sum()
    }
}

/// The graph G_{s,P} with all auxiliary spins contracted into one vertex,
/// stored last (index `node_count`). Weights are unscaled.
pub fn to_adjacency(instance: &TomographyInstance) -> Adjacency {
    let n = instance.node_count();
    let aux = n;
    let mut adj = Adjacency::zeros(n + 1);
    for (r, ray) in instance.rays().rays().iter().enumerate() {
        for (i, &a) in ray.iter().enumerate() {
            for &b in &ray[i + 1..] {
                adj.add_edge(a, b, 1);
            }
            adj.add_edge(a, aux, instance.spin_data()[r]);
        }
    }
    adj
}

/// I.i.d. Bernoulli(`density`) pixels.
pub fn random_image(dims: &[usize], density: f64, seed: u64) -> Result<BinaryImage> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidConfig(format!(
            "density {density} outside [0, 1]"
        )));
    }
    let n = crate::model::checked_volume(dims)?;
    let mut rng = seed::rng(seed);
    let values = (0..n).map(|_| u8::from(rng.gen_bool(density))).collect();
    BinaryImage::new(dims.to_vec(), values)
}

/// Grid rays for the image's shape plus its projections.
pub fn instance_from_image(image: &BinaryImage, seed: u64) -> Result<TomographyInstance> {
    let rays = build_grid_rays(image.dims())?;
    let projections = project(image, &rays)?;
    make_instance(rays, projections, seed)
}
