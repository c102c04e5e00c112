//! Text formats for instances and images.
//!
//! Instance files:
//!
//! ```text
//! DTOMO 1
//! nodes 4
//! rays 4
//! ray 0 : 0 1 = 1
//! ray 1 : 2 3 = 1
//! ray 2 : 0 2 = 1
//! ray 3 : 1 3 = 1
//! seed 7
//! ```
//!
//! `#` starts a comment; blank lines are ignored. Rays may appear in any
//! order but every id in `0..R` must occur exactly once. Without a `seed`
//! line the weights are derived from seed 0. The canonical form lists rays by
//! id and always ends with the seed line.
//!
//! Image files: `DIMG d1 [d2 [d3]]` followed by rows of `0`/`1`, `d1`
//! characters each; 3D layers are separated by one blank line.

use std::fmt::Write as _;

use crate::builder::{make_instance, validate_ray_system};
use crate::error::{Error, Result};
use crate::model::{BinaryImage, RaySystem, RayViolation, TomographyInstance};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("expected {what}, found {tok:?}")))
}

/// Value of a `key <n>` line.
fn keyed<T: std::str::FromStr>(text: &str, key: &str, line: usize) -> Result<T> {
    let mut it = text.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(v), None) if k == key => parse_num(v, line, key),
        _ => Err(parse_err(line, format!("expected \"{key} <int>\", found {text:?}"))),
    }
}

pub fn parse_instance(text: &str) -> Result<TomographyInstance> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l)))
        .filter(|(_, l)| !l.is_empty());
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| parse_err(text.lines().count() + 1, format!("unexpected end of file, expected {what}")))
    };

    let (ln, header) = next("header")?;
    if header.split_whitespace().collect::<Vec<_>>() != ["DTOMO", "1"] {
        return Err(parse_err(ln, format!("bad header {header:?}, expected \"DTOMO 1\"")));
    }
    let (ln, l) = next("node count")?;
    let nodes: usize = keyed(l, "nodes", ln)?;
    if nodes == 0 {
        return Err(parse_err(ln, "instance needs at least one node"));
    }
    let (ln, l) = next("ray count")?;
    let ray_count: usize = keyed(l, "rays", ln)?;
    if ray_count == 0 {
        return Err(parse_err(ln, "instance needs at least one ray"));
    }

    let mut rays: Vec<Option<(Vec<usize>, u32, usize)>> = vec![None; ray_count];
    let mut seed = None;
    for (ln, l) in lines {
        if seed.is_some() {
            return Err(parse_err(ln, "content after seed line"));
        }
        if l.starts_with("seed") {
            seed = Some(keyed::<u64>(l, "seed", ln)?);
            continue;
        }
        let (id, nodes_list, p) = parse_ray_line(l, ln)?;
        if id >= ray_count {
            return Err(parse_err(ln, format!("ray id {id} out of range (rays {ray_count})")));
        }
        if rays[id].is_some() {
            return Err(parse_err(ln, format!("duplicate ray id {id}")));
        }
        if let Some(&u) = nodes_list.iter().find(|&&u| u >= nodes) {
            return Err(parse_err(ln, format!("node index {u} out of range (nodes {nodes})")));
        }
        if p as usize > nodes_list.len() {
            return Err(Error::InfeasibleProjection {
                ray: id,
                projection: p,
                len: nodes_list.len(),
            });
        }
        rays[id] = Some((nodes_list, p, ln));
    }
    if let Some(missing) = rays.iter().position(Option::is_none) {
        return Err(parse_err(text.lines().count(), format!("ray {missing} is missing")));
    }
    let rays: Vec<_> = rays.into_iter().flatten().collect();
    let (members, projections): (Vec<Vec<usize>>, Vec<u32>) =
        rays.iter().map(|(m, p, _)| (m.clone(), *p)).unzip();
    let system = RaySystem::new_unchecked(nodes, members);
    if let Err(v) = validate_ray_system(&system) {
        let ray = match v {
            RayViolation::NoNodes => 0,
            RayViolation::EmptyRay { ray }
            | RayViolation::NodeOutOfRange { ray, .. }
            | RayViolation::DuplicateNode { ray, .. } => ray,
            RayViolation::SharedNodes { second, .. } => second,
        };
        return Err(parse_err(rays[ray].2, format!("invalid ray system: {v}")));
    }
    make_instance(system, projections, seed.unwrap_or(0))
}

fn parse_ray_line(l: &str, ln: usize) -> Result<(usize, Vec<usize>, u32)> {
    let rest = l
        .strip_prefix("ray")
        .filter(|r| r.starts_with(char::is_whitespace))
        .ok_or_else(|| parse_err(ln, format!("expected ray line, found {l:?}")))?;
    let (id, rest) = rest
        .split_once(':')
        .ok_or_else(|| parse_err(ln, "missing ':' in ray line"))?;
    let (body, p) = rest
        .split_once('=')
        .ok_or_else(|| parse_err(ln, "missing '=' in ray line"))?;
    let id = parse_num(id.trim(), ln, "ray id")?;
    let p = parse_num(p.trim(), ln, "projection")?;
    let nodes = body
        .split_whitespace()
        .map(|t| parse_num(t, ln, "node index"))
        .collect::<Result<Vec<usize>>>()?;
    if nodes.is_empty() {
        return Err(parse_err(ln, format!("ray {id} has no nodes")));
    }
    Ok((id, nodes, p))
}

pub fn serialize_instance(instance: &TomographyInstance) -> String {
    let mut out = String::new();
    let rays = instance.rays();
    let _ = writeln!(out, "DTOMO 1");
    let _ = writeln!(out, "nodes {}", rays.node_count());
    let _ = writeln!(out, "rays {}", rays.ray_count());
    for (r, ray) in rays.rays().iter().enumerate() {
        let nodes: Vec<String> = ray.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "ray {r} : {} = {}", nodes.join(" "), instance.projections()[r]);
    }
    if let Some(seed) = instance.lambda_seed() {
        let _ = writeln!(out, "seed {seed}");
    }
    out
}

pub fn parse_image(text: &str) -> Result<BinaryImage> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
    let (ln_header, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| parse_err(1, "empty image file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("DIMG") {
        return Err(parse_err(ln_header, format!("bad header {header:?}, expected \"DIMG d1 [d2 [d3]]\"")));
    }
    let dims = toks
        .map(|t| parse_num::<usize>(t, ln_header, "dimension"))
        .collect::<Result<Vec<_>>>()?;
    if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
        return Err(parse_err(ln_header, format!("invalid dimensions {dims:?}")));
    }
    let width = dims[0];
    let height = dims.get(1).copied().unwrap_or(1);
    let depth = dims.get(2).copied().unwrap_or(1);

    let mut values = Vec::with_capacity(width * height * depth);
    let mut last_line = ln_header;
    for z in 0..depth {
        if z > 0 {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => {}
                Some((ln, _)) => return Err(parse_err(ln, "expected blank line between layers")),
                None => return Err(parse_err(last_line + 1, "missing layer")),
            }
        }
        for _ in 0..height {
            let (ln, row) = lines
                .next()
                .ok_or_else(|| parse_err(last_line + 1, "missing image row"))?;
            last_line = ln;
            if row.len() != width {
                return Err(parse_err(ln, format!("row has {} cells, expected {width}", row.len())));
            }
            for c in row.chars() {
                match c {
                    '0' => values.push(0),
                    '1' => values.push(1),
                    _ => return Err(parse_err(ln, format!("invalid cell {c:?}"))),
                }
            }
        }
    }
    if let Some((ln, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(parse_err(ln, "trailing content after image"));
    }
    BinaryImage::new(dims, values)
}

pub fn serialize_image(image: &BinaryImage) -> String {
    let dims = image.dims();
    let mut out = String::from("DIMG");
    for d in dims {
        let _ = write!(out, " {d}");
    }
    out.push('\n');
    let width = dims[0];
    let layer = width * dims.get(1).copied().unwrap_or(1);
    for (z, chunk) in image.values().chunks(layer).enumerate() {
        if z > 0 {
            out.push('\n');
        }
        for row in chunk.chunks(width) {
            out.extend(row.iter().map(|&v| if v == 1 { '1' } else { '0' }));
            out.push('\n');
        }
    }
    out
}
