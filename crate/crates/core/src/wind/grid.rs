use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InletDistribution, SampledInlet};
use crate::error::{Error, Result};
use crate::flight::{parse_row, Vec3};
use crate::util::{preamble_pairs, read_to_string};

/// A uniform 3-D grid of wind vectors computed for one reference inlet condition.
///
/// Vectors are stored with `k` varying fastest: index `(i·ny + j)·nz + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindGrid {
    pub origin: Vec3,
    pub cell_size: f64,
    pub dims: [usize; 3],
    pub vectors: Vec<Vec3>,
    pub ref_angle_deg: f64,
    pub ref_speed: f64,
}

impl WindGrid {
    pub fn new(
        origin: Vec3,
        cell_size: f64,
        dims: [usize; 3],
        vectors: Vec<Vec3>,
        ref_angle_deg: f64,
        ref_speed: f64,
    ) -> Result<Self> {
        let g = Self {
            origin,
            cell_size,
            dims,
            vectors,
            ref_angle_deg,
            ref_speed,
        };
        g.validate()?;
        Ok(g)
    }

    /// Same vector at every node.
    pub fn uniform(origin: Vec3, cell_size: f64, dims: [usize; 3], vector: Vec3, ref_angle_deg: f64, ref_speed: f64) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(origin, cell_size, dims, vec![vector; n], ref_angle_deg, ref_speed)
    }

    fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::input("wind grid cell size must be positive"));
        }
        if self.dims.iter().any(|d| *d < 2) {
            return Err(Error::input(format!("wind grid dims {:?} must be >= 2 per axis", self.dims)));
        }
        let n: usize = self.dims.iter().product();
        if self.vectors.len() != n {
            return Err(Error::input(format!(
                "wind grid has {} vectors, dims imply {n}",
                self.vectors.len()
            )));
        }
        if self.vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::input("wind grid vectors must be finite"));
        }
        if !(self.ref_speed > 0.0 && self.ref_speed.is_finite()) || !self.ref_angle_deg.is_finite() {
            return Err(Error::input("wind grid reference speed must be > 0 and angle finite"));
        }
        Ok(())
    }

    #[inline]
    fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.vectors[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    /// Trilinear interpolation; positions outside the grid clamp to its boundary.
    pub fn interpolate(&self, position: Vec3) -> Vec3 {
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let max_idx = (self.dims[a] - 1) as f64;
            let g = ((position[a] - self.origin[a]) / self.cell_size).clamp(0.0, max_idx);
            let b = (g.floor() as usize).min(self.dims[a] - 2);
            base[a] = b;
            frac[a] = g - b as f64;
        }
        let mut out = [0.0; 3];
        for (di, wi) in [(0, 1.0 - frac[0]), (1, frac[0])] {
            for (dj, wj) in [(0, 1.0 - frac[1]), (1, frac[1])] {
                for (dk, wk) in [(0, 1.0 - frac[2]), (1, frac[2])] {
                    let w = wi * wj * wk;
                    if w == 0.0 {
                        continue;
                    }
                    let v = self.node(base[0] + di, base[1] + dj, base[2] + dk);
                    for c in 0..3 {
                        out[c] += w * v[c];
                    }
                }
            }
        }
        out
    }

    pub fn from_csv_str(text: &str, path: &Path) -> Result<Self> {
        let mut origin = None;
        let mut cell = None;
        let mut dims = None;
        let mut angle = None;
        let mut speed = None;
        let mut vectors = Vec::new();
        let mut offset = 0usize;
        let parse_err = |offset: usize, message: String| Error::Parse {
            path: path.into(),
            offset,
            message,
        };
        for line in text.lines() {
            let line_offset = offset;
            offset += line.len() + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed.starts_with('#') {
                for (k, v) in preamble_pairs(trimmed) {
                    let nums: std::result::Result<Vec<f64>, _> = v.split(',').map(str::parse::<f64>).collect();
                    let nums = nums.map_err(|e| parse_err(line_offset, format!("bad value for {k}: {e}")))?;
                    let want = |n: usize| -> Result<()> {
                        if nums.len() == n {
                            Ok(())
                        } else {
                            Err(parse_err(line_offset, format!("{k} needs {n} values")))
                        }
                    };
                    match k {
                        "origin" => {
                            want(3)?;
                            origin = Some([nums[0], nums[1], nums[2]]);
                        }
                        "cell" => {
                            want(1)?;
                            cell = Some(nums[0]);
                        }
                        "dims" => {
                            want(3)?;
                            if nums.iter().any(|d| *d < 0.0 || d.fract() != 0.0) {
                                return Err(parse_err(line_offset, "dims must be non-negative integers".into()));
                            }
                            dims = Some([nums[0] as usize, nums[1] as usize, nums[2] as usize]);
                        }
                        "ref_angle_deg" => {
                            want(1)?;
                            angle = Some(nums[0]);
                        }
                        "ref_speed" => {
                            want(1)?;
                            speed = Some(nums[0]);
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if trimmed.starts_with('i') {
                continue; // optional column header
            }
            let d = dims.ok_or_else(|| parse_err(line_offset, "data row before dims header".into()))?;
            if d.contains(&0) {
                return Err(parse_err(line_offset, "dims must be >= 2 per axis".into()));
            }
            let row = parse_row(trimmed, 6, path, line_offset)?;
            let n = vectors.len();
            let expect = [n / (d[1] * d[2]), (n / d[2]) % d[1], n % d[2]];
            let got = [row[0], row[1], row[2]];
            if got.iter().zip(expect).any(|(g, e)| *g != e as f64) {
                return Err(parse_err(
                    line_offset,
                    format!("row index {got:?} out of row-major order (expected {expect:?})"),
                ));
            }
            vectors.push([row[3], row[4], row[5]]);
        }
        let missing = |k: &str| Error::load(path, format!("header is missing {k}"));
        Self::new(
            origin.ok_or_else(|| missing("origin"))?,
            cell.ok_or_else(|| missing("cell"))?,
            dims.ok_or_else(|| missing("dims"))?,
            vectors,
            angle.ok_or_else(|| missing("ref_angle_deg"))?,
            speed.ok_or_else(|| missing("ref_speed"))?,
        )
        .map_err(|e| Error::load(path, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv_str(&read_to_string(path)?, path)
    }

    pub fn to_csv_string(&self) -> String {
        let o = self.origin;
        let d = self.dims;
        let mut out = format!(
            "# origin={},{},{} cell={} dims={},{},{} ref_angle_deg={} ref_speed={}\ni,j,k,u,v,w\n",
            o[0], o[1], o[2], self.cell_size, d[0], d[1], d[2], self.ref_angle_deg, self.ref_speed
        );
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let v = self.node(i, j, k);
                    let _ = writeln!(out, "{i},{j},{k},{},{},{}", v[0], v[1], v[2]);
                }
            }
        }
        out
    }
}

/// Library of wind grids keyed by reference inlet angle, plus the inlet distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindFieldSet {
    grids: Vec<WindGrid>,
    pub inlet: InletDistribution,
}

impl WindFieldSet {
    pub fn new(mut grids: Vec<WindGrid>, inlet: InletDistribution) -> Result<Self> {
        if grids.is_empty() {
            return Err(Error::input("wind field set needs at least one grid"));
        }
        inlet.validate()?;
        grids.sort_by(|a, b| a.ref_angle_deg.total_cmp(&b.ref_angle_deg));
        if grids.windows(2).any(|w| w[0].ref_angle_deg == w[1].ref_angle_deg) {
            return Err(Error::input("wind grid reference angles must be distinct"));
        }
        Ok(Self { grids, inlet })
    }

    pub fn grids(&self) -> &[WindGrid] {
        &self.grids
    }

    /// Grid whose reference angle is nearest (on the circle) to `angle_deg`;
    /// ties go to the smaller reference angle.
    pub fn select(&self, angle_deg: f64) -> &WindGrid {
        let dist = |g: &WindGrid| {
            let d = (angle_deg - g.ref_angle_deg).rem_euclid(360.0);
            d.min(360.0 - d)
        };
        // Grids are sorted by angle, so the first minimum is the smaller angle.
        let mut best = &self.grids[0];
        let mut best_d = dist(best);
        for g in &self.grids[1..] {
            let d = dist(g);
            if d < best_d {
                best = g;
                best_d = d;
            }
        }
        best
    }
}

/// Constant wind at `position` for a sampled inlet condition.
pub fn lookup_wind(set: &WindFieldSet, inlet: &SampledInlet, position: Vec3) -> Vec3 {
    let grid = set.select(inlet.angle_deg);
    let scale = inlet.speed / grid.ref_speed;
    let v = grid.interpolate(position);
    [v[0] * scale, v[1] * scale, v[2] * scale]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inlet() -> InletDistribution {
        InletDistribution::new(0.0, 2.0, 0.0, 0.0).unwrap()
    }

    fn ramp_grid() -> WindGrid {
        // u = 2·i, so interpolation along x is linear.
        let dims = [3, 2, 2];
        let mut vectors = Vec::new();
        for i in 0..3 {
            for _j in 0..2 {
                for _k in 0..2 {
                    vectors.push([2.0 * i as f64, 0.0, 0.0]);
                }
            }
        }
        WindGrid::new([0.0; 3], 10.0, dims, vectors, 0.0, 1.0).unwrap()
    }

    #[test]
    fn uniform_field_scales_with_speed() {
        let g = WindGrid::uniform([0.0; 3], 5.0, [4, 4, 3], [2.0, 0.0, 0.0], 0.0, 2.0).unwrap();
        let set = WindFieldSet::new(vec![g], inlet()).unwrap();
        let s = SampledInlet { angle_deg: 3.0, speed: 4.0 };
        for p in [[0.0, 0.0, 0.0], [7.3, 2.1, 4.4], [-100.0, 300.0, 9.0]] {
            assert_eq!(lookup_wind(&set, &s, p), [4.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn node_positions_return_node_vector() {
        let g = ramp_grid();
        assert_eq!(g.interpolate([10.0, 0.0, 10.0]), [2.0, 0.0, 0.0]);
        assert_eq!(g.interpolate([20.0, 10.0, 0.0]), [4.0, 0.0, 0.0]);
    }

    #[test]
    fn midpoint_interpolates_halfway() {
        let g = ramp_grid();
        let v = g.interpolate([5.0, 3.0, 7.0]);
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1] == 0.0 && v[2] == 0.0, "{v:?}");
        assert_eq!(g.interpolate([5.0, 0.0, 0.0]), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn outside_positions_clamp() {
        let g = ramp_grid();
        assert_eq!(g.interpolate([-50.0, 0.0, 0.0]), [0.0, 0.0, 0.0]);
        assert_eq!(g.interpolate([500.0, 99.0, -3.0]), [4.0, 0.0, 0.0]);
    }

    #[test]
    fn nearest_angle_selection_with_ties() {
        let mk = |a: f64, u: f64| WindGrid::uniform([0.0; 3], 1.0, [2, 2, 2], [u, 0.0, 0.0], a, 1.0).unwrap();
        let set = WindFieldSet::new(vec![mk(90.0, 3.0), mk(0.0, 1.0), mk(270.0, 4.0)], inlet()).unwrap();
        assert_eq!(set.select(10.0).ref_angle_deg, 0.0);
        assert_eq!(set.select(45.0).ref_angle_deg, 0.0);
        assert_eq!(set.select(-20.0).ref_angle_deg, 0.0);
        assert_eq!(set.select(300.0).ref_angle_deg, 270.0);
        assert_eq!(set.select(180.0).ref_angle_deg, 90.0);
    }

    #[test]
    fn duplicate_angles_rejected() {
        let g = ramp_grid();
        assert!(WindFieldSet::new(vec![g.clone(), g], inlet()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = ramp_grid();
        let text = g.to_csv_string();
        let back = WindGrid::from_csv_str(&text, Path::new("g.csv")).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn out_of_order_rows_rejected() {
        let text = "# origin=0,0,0 cell=1 dims=2,2,2 ref_angle_deg=0 ref_speed=1\n0,0,1,1,0,0\n";
        assert!(matches!(
            WindGrid::from_csv_str(text, Path::new("g.csv")),
            Err(Error::Parse { .. })
        ));
    }
}
