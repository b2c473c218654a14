//! Grid A* with line-of-sight shortcutting.
//!
//! Moves are 8-connected with unit cost for straight steps and √2 for
//! diagonals; a diagonal may not cut the corner of an occupied cell. Path
//! costs are carried as `(straight, diagonal)` step counts so that equal
//! paths compare equal exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::flight::{TrajectoryPlan, Waypoint};

use super::map::OccupancyMap;

/// Path cost in steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepCost {
    pub straight: u32,
    pub diagonal: u32,
}

impl StepCost {
    /// Cost in cell lengths.
    pub fn value(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * SQRT_2
    }

    fn add(self, diagonal: bool) -> Self {
        if diagonal {
            Self { diagonal: self.diagonal + 1, ..self }
        } else {
            Self { straight: self.straight + 1, ..self }
        }
    }
}

/// The 8-connected neighbors reachable from `cell`, with a flag for diagonal moves.
pub fn grid_neighbors(map: &OccupancyMap, cell: [usize; 2]) -> impl Iterator<Item = ([usize; 2], bool)> + '_ {
    const DIRS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    let (nx, ny) = (map.dims[0] as i64, map.dims[1] as i64);
    let free = move |x: i64, y: i64| x >= 0 && y >= 0 && x < nx && y < ny && !map.is_occupied([x as usize, y as usize]);
    let (cx, cy) = (cell[0] as i64, cell[1] as i64);
    DIRS.iter().filter_map(move |&(dx, dy)| {
        let (x, y) = (cx + dx, cy + dy);
        if !free(x, y) {
            return None;
        }
        let diagonal = dx != 0 && dy != 0;
        if diagonal && !(free(cx + dx, cy) && free(cx, cy + dy)) {
            return None;
        }
        Some(([x as usize, y as usize], diagonal))
    })
}

struct Open {
    f: f64,
    g: StepCost,
    cell: [usize; 2],
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // Min-heap on f, then on g (deeper first), then on cell for determinism.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.value().total_cmp(&other.g.value()))
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

fn octile(a: [usize; 2], b: [usize; 2]) -> f64 {
    let dx = a[0].abs_diff(b[0]) as f64;
    let dy = a[1].abs_diff(b[1]) as f64;
    (dx.max(dy) - dx.min(dy)) + dx.min(dy) * SQRT_2
}

/// Shortest cell path from `start` to `goal` (both inclusive) and its cost.
pub fn astar(map: &OccupancyMap, start: [usize; 2], goal: [usize; 2]) -> Result<(Vec<[usize; 2]>, StepCost)> {
    for (what, c) in [("start", start), ("goal", goal)] {
        if c[0] >= map.dims[0] || c[1] >= map.dims[1] {
            return Err(Error::input(format!("{what} cell {c:?} outside the map")));
        }
        if map.is_occupied(c) {
            return Err(Error::input(format!("{what} cell {c:?} is occupied")));
        }
    }
    let n = map.dims[0] * map.dims[1];
    let mut best: Vec<Option<StepCost>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    best[map.index(start)] = Some(StepCost::default());
    heap.push(Open {
        f: octile(start, goal),
        g: StepCost::default(),
        cell: start,
    });

    while let Some(Open { g, cell, .. }) = heap.pop() {
        let ci = map.index(cell);
        if best[ci].is_some_and(|b| b.value() < g.value()) {
            continue;
        }
        if cell == goal {
            let mut path = vec![goal];
            let mut i = ci;
            while parent[i] != usize::MAX {
                i = parent[i];
                path.push([i % map.dims[0], i / map.dims[0]]);
            }
            path.reverse();
            return Ok((path, g));
        }
        for (next, diagonal) in grid_neighbors(map, cell) {
            let ng = g.add(diagonal);
            let ni = map.index(next);
            if best[ni].is_none_or(|b| ng.value() < b.value()) {
                best[ni] = Some(ng);
                parent[ni] = ci;
                heap.push(Open {
                    f: ng.value() + octile(next, goal),
                    g: ng,
                    cell: next,
                });
            }
        }
    }
    Err(Error::Planning(format!("no path from cell {start:?} to cell {goal:?}")))
}

/// Every cell a segment touches, including both neighbors where it passes
/// exactly through a cell corner. `None` if it leaves the map.
pub fn supercover(map: &OccupancyMap, a: [f64; 2], b: [f64; 2]) -> Option<Vec<[usize; 2]>> {
    let (ga, gb) = (map.to_grid(a), map.to_grid(b));
    let mut cell = [map.cell_of(a)?, map.cell_of(b)?];
    let end = cell[1];
    let mut out = vec![cell[0]];
    let d = [gb[0] - ga[0], gb[1] - ga[1]];
    let step = [d[0].signum() as i64, d[1].signum() as i64];
    let mut t_max = [0.0; 2];
    let mut t_delta = [f64::INFINITY; 2];
    for k in 0..2 {
        if d[k] != 0.0 {
            let boundary = if d[k] > 0.0 { cell[0][k] as f64 + 1.0 } else { cell[0][k] as f64 };
            t_max[k] = (boundary - ga[k]) / d[k];
            t_delta[k] = 1.0 / d[k].abs();
        } else {
            t_max[k] = f64::INFINITY;
        }
    }
    let shift = |c: [usize; 2], k: usize| -> Option<[usize; 2]> {
        let mut n = c;
        let v = c[k] as i64 + step[k];
        if v < 0 || v >= map.dims[k] as i64 {
            return None;
        }
        n[k] = v as usize;
        Some(n)
    };
    let budget = map.dims[0] + map.dims[1] + 2;
    for _ in 0..budget * 2 {
        if cell[0] == end {
            return Some(out);
        }
        let tie = (t_max[0] - t_max[1]).abs() <= 1e-12 * t_max[0].abs().max(1.0);
        if tie {
            out.push(shift(cell[0], 0)?);
            out.push(shift(cell[0], 1)?);
            cell[0] = shift(shift(cell[0], 0)?, 1)?;
            t_max[0] += t_delta[0];
            t_max[1] += t_delta[1];
        } else {
            let k = if t_max[0] < t_max[1] { 0 } else { 1 };
            if t_max[k] > 1.0 + 1e-12 {
                // Rounding left us short of the end cell; it is adjacent.
                cell[0] = end;
            } else {
                cell[0] = shift(cell[0], k)?;
                t_max[k] += t_delta[k];
            }
        }
        out.push(cell[0]);
    }
    Some(out)
}

/// Whether the straight segment crosses only free cells.
pub fn line_of_sight(map: &OccupancyMap, a: [f64; 2], b: [f64; 2]) -> bool {
    supercover(map, a, b).is_some_and(|cells| cells.iter().all(|c| !map.is_occupied(*c)))
}

/// Greedy shortcutting: from each kept point jump to the farthest later
/// point still in line of sight.
pub fn shortcut(map: &OccupancyMap, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    let mut i = 0;
    while i + 1 < points.len() {
        let j = (i + 2..points.len())
            .rev()
            .find(|&j| line_of_sight(map, points[i], points[j]))
            .unwrap_or(i + 1);
        out.push(points[j]);
        i = j;
    }
    out
}

/// A* + shortcutting in the plane; endpoints are kept exact, interior
/// vertices are cell centers.
pub fn plan_polyline(map: &OccupancyMap, start: [f64; 2], goal: [f64; 2]) -> Result<Vec<[f64; 2]>> {
    let cell = |p: [f64; 2], what: &str| {
        map.cell_of(p)
            .filter(|c| !map.is_occupied(*c))
            .ok_or_else(|| Error::input(format!("{what} {p:?} is not in a free map cell")))
    };
    let (sc, gc) = (cell(start, "start")?, cell(goal, "goal")?);
    let (cells, _) = astar(map, sc, gc)?;
    let mut points: Vec<[f64; 2]> = cells.iter().map(|c| map.cell_center(*c)).collect();
    points[0] = start;
    *points.last_mut().unwrap() = goal;
    if points.len() == 1 {
        points.push(goal);
    }
    Ok(shortcut(map, &points))
}

/// Tallest building under any cell the polyline crosses.
pub fn max_height_along(map: &OccupancyMap, polyline: &[[f64; 2]]) -> f64 {
    polyline
        .windows(2)
        .filter_map(|w| supercover(map, w[0], w[1]))
        .flatten()
        .map(|c| map.height(c))
        .fold(0.0, f64::max)
}

/// Lift a planar polyline to a constant-altitude plan with tangent yaw.
pub fn lift_polyline(name: &str, polyline: &[[f64; 2]], altitude: f64, speed: f64) -> Result<TrajectoryPlan> {
    let heading = |a: [f64; 2], b: [f64; 2]| (b[1] - a[1]).atan2(b[0] - a[0]);
    let n = polyline.len();
    let waypoints = polyline
        .iter()
        .enumerate()
        .map(|(i, p)| Waypoint {
            position: [p[0], p[1], altitude],
            yaw: if i + 1 < n {
                heading(*p, polyline[i + 1])
            } else {
                heading(polyline[i.saturating_sub(1)], *p)
            },
            target_speed: speed,
        })
        .collect();
    TrajectoryPlan::new(name, waypoints)
}

/// Plan a one-way path at `cruise_altitude` above the tallest building it
/// crosses.
pub fn plan_path(map: &OccupancyMap, start: [f64; 2], goal: [f64; 2], cruise_altitude: f64, speed: f64) -> Result<TrajectoryPlan> {
    check_flight(cruise_altitude, speed)?;
    let line = plan_polyline(map, start, goal)?;
    let alt = cruise_altitude + max_height_along(map, &line);
    lift_polyline("planned", &line, alt, speed)
}

/// Out-and-back: the planned path to `goal` followed by its reverse.
pub fn plan_out_and_back(map: &OccupancyMap, base: [f64; 2], goal: [f64; 2], cruise_altitude: f64, speed: f64) -> Result<TrajectoryPlan> {
    check_flight(cruise_altitude, speed)?;
    let out = plan_polyline(map, base, goal)?;
    let alt = cruise_altitude + max_height_along(map, &out);
    let mut line = out.clone();
    line.extend(out.iter().rev().skip(1));
    lift_polyline("out-and-back", &line, alt, speed)
}

fn check_flight(cruise_altitude: f64, speed: f64) -> Result<()> {
    if !(cruise_altitude.is_finite() && cruise_altitude >= 0.0) {
        return Err(Error::input("cruise_altitude must be finite and >= 0"));
    }
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::input("speed must be > 0"));
    }
    Ok(())
}
