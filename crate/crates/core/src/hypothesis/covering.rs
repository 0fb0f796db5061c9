use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{euclidean, ParamSpace, ParamVector};

/// How ball centres are chosen on the annulus grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverStrategy {
    /// Repeatedly take the grid point covering the most uncovered points.
    #[default]
    MaxCoverage,
    /// Repeatedly take the uncovered point farthest from all centres.
    FarthestPoint,
}

/// Balls of radius `xi j eps` covering `{j eps < |theta - theta_0| <= 2 j eps} ∩ Theta`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoveringReport {
    pub xi: f64,
    pub j: usize,
    pub eps: f64,
    pub radius: f64,
    pub centers: Vec<ParamVector>,
    pub count: usize,
    /// `(12 / xi)^d`.
    pub bound: f64,
    pub grid_points: usize,
    pub strategy: CoverStrategy,
}

/// Grid spacing is `xi j eps / GRID_DIVISIONS`.
pub const GRID_DIVISIONS: usize = 10;
const MAX_GRID_POINTS: usize = 4_000_000;
/// Relative slack so lattice points exactly one radius apart count as covered.
const RADIUS_SLACK: f64 = 1e-9;

/// Covers the annulus with `radius = xi j eps` balls centred on grid points.
///
/// The grid is offset by half a cell from `theta0`, so no grid point lies on
/// either sphere of the annulus.
pub fn cover_annulus(
    theta0: &[f64],
    eps: f64,
    j: usize,
    xi: f64,
    space: &ParamSpace,
    strategy: CoverStrategy,
) -> Result<CoveringReport> {
    cover_annulus_with(theta0, eps, j, xi, space, strategy, GRID_DIVISIONS)
}

#[allow(clippy::too_many_arguments)]
pub fn cover_annulus_with(
    theta0: &[f64],
    eps: f64,
    j: usize,
    xi: f64,
    space: &ParamSpace,
    strategy: CoverStrategy,
    divisions: usize,
) -> Result<CoveringReport> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::invalid(format!("xi must lie in (0, 1), got {xi}")));
    }
    if j == 0 || !(eps > 0.0) || divisions == 0 {
        return Err(Error::invalid("covering needs j >= 1, eps > 0 and at least one grid division"));
    }
    space.check(theta0)?;
    let d = theta0.len();
    let inner = j as f64 * eps;
    let radius = xi * inner;
    let h = radius / divisions as f64;
    let bound = (12.0 / xi).powi(d as i32);

    let grid = annulus_grid(theta0, inner, h, space)?;
    let reach = radius * (1.0 + RADIUS_SLACK);
    let centers_idx = match strategy {
        CoverStrategy::MaxCoverage => max_coverage(&grid, reach, h, divisions),
        CoverStrategy::FarthestPoint => farthest_point(&grid.points, reach),
    };
    let centers: Vec<ParamVector> =
        centers_idx.iter().map(|&i| ParamVector::new(grid.points[i].clone())).collect::<Result<_>>()?;

    // certificate: every grid point is within the radius of some centre
    for p in &grid.points {
        if !centers.iter().any(|c| euclidean(p, c) <= reach) {
            return Err(Error::Numeric(format!("covering left grid point {p:?} uncovered")));
        }
    }
    if centers.len() as f64 > bound {
        return Err(Error::CoveringBound { j, count: centers.len(), bound });
    }
    Ok(CoveringReport {
        xi,
        j,
        eps,
        radius,
        count: centers.len(),
        centers,
        bound,
        grid_points: grid.points.len(),
        strategy,
    })
}

/// True when some point of `Theta` lies strictly beyond `j eps` from `theta0`.
pub fn annulus_meets_space(theta0: &[f64], eps: f64, j: usize, space: &ParamSpace) -> bool {
    space.max_distance_from(theta0) > j as f64 * eps
}

struct Grid {
    points: Vec<Vec<f64>>,
    /// Integer lattice coordinates of each point.
    keys: Vec<Vec<i64>>,
}

fn annulus_grid(theta0: &[f64], inner: f64, h: f64, space: &ParamSpace) -> Result<Grid> {
    let d = theta0.len();
    let outer = 2.0 * inner;
    // lattice index k maps to theta0 + (k + 1/2) h
    let ranges: Vec<(i64, i64)> = (0..d)
        .map(|i| {
            let lo = (theta0[i] - outer).max(space.lower()[i]);
            let hi = (theta0[i] + outer).min(space.upper()[i]);
            (((lo - theta0[i]) / h - 0.5).ceil() as i64, ((hi - theta0[i]) / h - 0.5).floor() as i64)
        })
        .collect();
    let total: f64 = ranges.iter().map(|(a, b)| (b - a + 1).max(0) as f64).product();
    if total > MAX_GRID_POINTS as f64 {
        return Err(Error::invalid(format!("annulus grid would need {total} points; use fewer grid divisions")));
    }
    let mut points = Vec::new();
    let mut keys = Vec::new();
    if ranges.iter().any(|(a, b)| b < a) {
        return Ok(Grid { points, keys });
    }
    let mut key: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        let p: Vec<f64> = key.iter().zip(theta0).map(|(k, t)| t + (*k as f64 + 0.5) * h).collect();
        let r = euclidean(&p, theta0);
        if r > inner && r <= outer && space.contains(&p) {
            points.push(p);
            keys.push(key.clone());
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == d {
                return Ok(Grid { points, keys });
            }
            key[i] += 1;
            if key[i] <= ranges[i].1 {
                break;
            }
            key[i] = ranges[i].0;
            i += 1;
        }
    }
}

/// Greedy set cover with lazily updated gains. Ties go to the lowest index.
fn max_coverage(grid: &Grid, radius: f64, h: f64, divisions: usize) -> Vec<usize> {
    let n = grid.points.len();
    if n == 0 {
        return Vec::new();
    }
    let d = grid.keys[0].len();
    let index: HashMap<&[i64], usize> = grid.keys.iter().enumerate().map(|(i, k)| (k.as_slice(), i)).collect();
    let reach = divisions as i64;
    let offsets: Vec<Vec<i64>> = lattice_ball(d, reach, radius / h);
    let covers: Vec<Vec<usize>> = grid
        .keys
        .iter()
        .enumerate()
        .map(|(i, k)| {
            offsets
                .iter()
                .filter_map(|o| {
                    let key: Vec<i64> = k.iter().zip(o).map(|(a, b)| a + b).collect();
                    index.get(key.as_slice()).copied()
                })
                .filter(|&q| euclidean(&grid.points[q], &grid.points[i]) <= radius)
                .collect()
        })
        .collect();

    let mut covered = vec![false; n];
    let mut remaining = n;
    // max-heap on (gain, reversed index) so ties favour small indices
    let mut heap: BinaryHeap<(usize, std::cmp::Reverse<usize>)> =
        covers.iter().enumerate().map(|(i, c)| (c.len(), std::cmp::Reverse(i))).collect();
    let mut chosen = Vec::new();
    while remaining > 0 {
        let (gain, std::cmp::Reverse(i)) = heap.pop().expect("uncovered points remain");
        let fresh = covers[i].iter().filter(|&&q| !covered[q]).count();
        if fresh < gain {
            heap.push((fresh, std::cmp::Reverse(i)));
            continue;
        }
        if fresh == 0 {
            break;
        }
        for &q in &covers[i] {
            if !covered[q] {
                covered[q] = true;
                remaining -= 1;
            }
        }
        chosen.push(i);
    }
    chosen
}

/// Integer offsets within Euclidean distance `r` (in cells) of the origin.
fn lattice_ball(d: usize, reach: i64, r: f64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut key = vec![-reach; d];
    loop {
        let norm: f64 = key.iter().map(|k| (*k as f64).powi(2)).sum::<f64>().sqrt();
        if norm <= r + 1e-9 {
            out.push(key.clone());
        }
        let mut i = 0;
        loop {
            if i == d {
                return out;
            }
            key[i] += 1;
            if key[i] <= reach {
                break;
            }
            key[i] = -reach;
            i += 1;
        }
    }
}

/// Gonzalez-style farthest-point covering starting from the first grid point.
fn farthest_point(points: &[Vec<f64>], radius: f64) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut nearest = vec![f64::INFINITY; points.len()];
    let mut chosen = vec![0];
    loop {
        let last = &points[*chosen.last().unwrap()];
        for (p, best) in points.iter().zip(nearest.iter_mut()) {
            *best = best.min(euclidean(p, last));
        }
        let (far, dist) =
            nearest
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, d)| if *d > acc.1 { (i, *d) } else { acc });
        if dist <= radius {
            return chosen;
        }
        chosen.push(far);
    }
}
