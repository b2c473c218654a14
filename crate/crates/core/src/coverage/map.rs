//! Occupancy grid and its PGM + JSON sidecar file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::read_to_string;

/// 2-D occupancy grid. Cell `(ix, iy)` covers
/// `[origin + (ix, iy)·cell, origin + (ix+1, iy+1)·cell)`; storage is
/// row-major with `iy` as the row, `iy = 0` at the smallest y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMap {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub dims: [usize; 2],
    occupied: Vec<bool>,
    heights: Option<Vec<f64>>,
}

/// Georeferencing sidecar for a PGM map. `heights`, if present, follow the
/// PGM pixel order (top row first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub origin: [f64; 2],
    pub cell_size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heights: Option<Vec<f64>>,
}

impl OccupancyMap {
    pub fn new(origin: [f64; 2], cell_size: f64, dims: [usize; 2], occupied: Vec<bool>, heights: Option<Vec<f64>>) -> Result<Self> {
        if dims[0] < 2 || dims[1] < 2 {
            return Err(Error::input(format!("map dims must be >= 2 per axis, got {dims:?}")));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::input("map cell_size must be > 0"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::input("map origin must be finite"));
        }
        let n = dims[0] * dims[1];
        if occupied.len() != n {
            return Err(Error::input(format!("map has {} cells, expected {n}", occupied.len())));
        }
        if let Some(h) = &heights {
            if h.len() != n {
                return Err(Error::input(format!("map heights have {} cells, expected {n}", h.len())));
            }
            if h.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::input("map heights must be finite and >= 0"));
            }
        }
        Ok(Self {
            origin,
            cell_size,
            dims,
            occupied,
            heights,
        })
    }

    pub fn empty(origin: [f64; 2], cell_size: f64, dims: [usize; 2]) -> Result<Self> {
        Self::new(origin, cell_size, dims, vec![false; dims[0] * dims[1]], None)
    }

    pub fn index(&self, cell: [usize; 2]) -> usize {
        cell[1] * self.dims[0] + cell[0]
    }

    pub fn is_occupied(&self, cell: [usize; 2]) -> bool {
        self.occupied[self.index(cell)]
    }

    pub fn set_occupied(&mut self, cell: [usize; 2], value: bool) {
        let i = self.index(cell);
        self.occupied[i] = value;
    }

    pub fn height(&self, cell: [usize; 2]) -> f64 {
        self.heights.as_ref().map_or(0.0, |h| h[self.index(cell)])
    }

    pub fn has_heights(&self) -> bool {
        self.heights.is_some()
    }

    pub fn free_cell_count(&self) -> usize {
        self.occupied.iter().filter(|o| !**o).count()
    }

    /// Position in continuous cell coordinates (cell `(i, j)` spans `[i, i+1)`).
    pub fn to_grid(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.origin[0]) / self.cell_size,
            (p[1] - self.origin[1]) / self.cell_size,
        ]
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<[usize; 2]> {
        let g = self.to_grid(p);
        if !(g[0] >= 0.0 && g[1] >= 0.0) {
            return None;
        }
        let c = [g[0].floor() as usize, g[1].floor() as usize];
        (c[0] < self.dims[0] && c[1] < self.dims[1]).then_some(c)
    }

    pub fn cell_center(&self, cell: [usize; 2]) -> [f64; 2] {
        [
            self.origin[0] + (cell[0] as f64 + 0.5) * self.cell_size,
            self.origin[1] + (cell[1] as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Free and inside the map.
    pub fn is_free_at(&self, p: [f64; 2]) -> bool {
        self.cell_of(p).is_some_and(|c| !self.is_occupied(c))
    }

    /// Read a PGM (P2 or P5; pixels at or above half of maxval are occupied)
    /// with its JSON sidecar.
    pub fn load(pgm_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let sidecar: MapSidecar = serde_json::from_str(&read_to_string(sidecar_path)?)
            .map_err(|e| Error::load(sidecar_path, e.to_string()))?;
        let img = image::ImageReader::open(pgm_path)
            .map_err(|e| Error::io(pgm_path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(pgm_path, e))?
            .decode()
            .map_err(|e| Error::load(pgm_path, e.to_string()))?
            .into_luma16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut occupied = vec![false; w * h];
        let mut heights = sidecar.heights.as_ref().map(|_| vec![0.0; w * h]);
        for row in 0..h {
            let iy = h - 1 - row;
            for ix in 0..w {
                let px = img.get_pixel(ix as u32, row as u32).0[0];
                occupied[iy * w + ix] = px >= u16::MAX / 2;
                if let (Some(dst), Some(src)) = (heights.as_mut(), sidecar.heights.as_ref()) {
                    dst[iy * w + ix] = *src.get(row * w + ix).ok_or_else(|| {
                        Error::load(sidecar_path, format!("heights has {} values, map has {}", src.len(), w * h))
                    })?;
                }
            }
        }
        if let Some(src) = &sidecar.heights {
            if src.len() != w * h {
                return Err(Error::load(sidecar_path, format!("heights has {} values, map has {}", src.len(), w * h)));
            }
        }
        Self::new(sidecar.origin, sidecar.cell_size, [w, h], occupied, heights)
            .map_err(|e| Error::load(pgm_path, e.to_string()))
    }

    /// Binary P5 image, top row first.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let [w, h] = self.dims;
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for row in 0..h {
            let iy = h - 1 - row;
            out.extend((0..w).map(|ix| if self.is_occupied([ix, iy]) { 255u8 } else { 0u8 }));
        }
        out
    }

    pub fn sidecar(&self) -> MapSidecar {
        let [w, h] = self.dims;
        MapSidecar {
            origin: self.origin,
            cell_size: self.cell_size,
            heights: self.heights.as_ref().map(|src| {
                (0..h)
                    .flat_map(|row| (0..w).map(move |ix| src[(h - 1 - row) * w + ix]))
                    .collect()
            }),
        }
    }

    pub fn save(&self, pgm_path: &Path, sidecar_path: &Path) -> Result<()> {
        std::fs::write(pgm_path, self.to_pgm_bytes()).map_err(|e| Error::io(pgm_path, e))?;
        let json = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serialises");
        std::fs::write(sidecar_path, json).map_err(|e| Error::io(sidecar_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_checked() {
        assert!(OccupancyMap::empty([0.0, 0.0], 1.0, [1, 5]).is_err());
        assert!(OccupancyMap::empty([0.0, 0.0], 0.0, [5, 5]).is_err());
        assert!(OccupancyMap::new([0.0, 0.0], 1.0, [2, 2], vec![false; 3], None).is_err());
    }

    #[test]
    fn cell_lookup() {
        let m = OccupancyMap::empty([-10.0, 5.0], 2.0, [10, 4]).unwrap();
        assert_eq!(m.cell_of([-10.0, 5.0]), Some([0, 0]));
        assert_eq!(m.cell_of([-0.1, 12.9]), Some([4, 3]));
        assert_eq!(m.cell_of([10.0, 6.0]), None);
        assert_eq!(m.cell_of([-10.1, 6.0]), None);
        assert_eq!(m.cell_center([0, 0]), [-9.0, 6.0]);
    }

    #[test]
    fn pgm_round_trip_with_heights() {
        let mut m = OccupancyMap::new(
            [1.0, 2.0],
            0.5,
            [3, 2],
            vec![false; 6],
            Some(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]),
        )
        .unwrap();
        m.set_occupied([2, 1], true);
        let dir = tempfile::tempdir().unwrap();
        let (p, s) = (dir.path().join("m.pgm"), dir.path().join("m.json"));
        m.save(&p, &s).unwrap();
        // Top PGM row is the largest y.
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[bytes.len() - 6..], &[0, 0, 255, 0, 0, 0]);
        let back = OccupancyMap::load(&p, &s).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.height([1, 1]), 4.0);
    }

    #[test]
    fn ascii_pgm_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let (p, s) = (dir.path().join("m.pgm"), dir.path().join("m.json"));
        std::fs::write(&p, "P2\n# test\n2 2\n255\n255 0\n0 0\n").unwrap();
        std::fs::write(&s, r#"{"origin":[0,0],"cell_size":1}"#).unwrap();
        let m = OccupancyMap::load(&p, &s).unwrap();
        assert!(m.is_occupied([0, 1]));
        assert_eq!(m.free_cell_count(), 3);
    }

    #[test]
    fn bad_sidecar_heights_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (p, s) = (dir.path().join("m.pgm"), dir.path().join("m.json"));
        std::fs::write(&p, "P2\n2 2\n255\n0 0\n0 0\n").unwrap();
        std::fs::write(&s, r#"{"origin":[0,0],"cell_size":1,"heights":[1,2,3]}"#).unwrap();
        assert!(OccupancyMap::load(&p, &s).is_err());
    }
}
