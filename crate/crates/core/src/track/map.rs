use std::path::Path;

use image::GenericImageView;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::edt::distance_field;
use super::TrackError;

/// Map metadata in the usual robotics occupancy-map layout.
///
/// ```yaml
/// image: aut.png
/// resolution: 0.05
/// origin: [-20.0, -12.0, 0.0]
/// occupied_thresh: 0.45
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub image: String,
    pub resolution: f64,
    pub origin: [f64; 3],
    pub occupied_thresh: f64,
}

impl MapMetadata {
    pub fn parse(text: &str) -> Result<Self, TrackError> {
        let meta: MapMetadata =
            serde_yaml::from_str(text).map_err(|e| TrackError::Metadata(e.to_string()))?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("metadata serializes")
    }

    fn validate(&self) -> Result<(), TrackError> {
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(TrackError::InvalidResolution(self.resolution));
        }
        if !(0.0..=1.0).contains(&self.occupied_thresh) {
            return Err(TrackError::Metadata(format!(
                "occupied_thresh {} outside [0, 1]",
                self.occupied_thresh
            )));
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return Err(TrackError::Metadata("non-finite origin".into()));
        }
        Ok(())
    }
}

/// Occupancy grid with its distance field.
///
/// Cell `[row, col]` covers world x ∈ origin.x + [col, col+1)·resolution and
/// y ∈ origin.y + [row, row+1)·resolution (in the origin frame); row 0 is the
/// bottom image row.
#[derive(Debug, Clone)]
pub struct TrackMap {
    grid: Array2<bool>,
    resolution: f64,
    origin: [f64; 3],
    distance: Array2<f64>,
}

impl TrackMap {
    pub fn from_grid(grid: Array2<bool>, resolution: f64, origin: [f64; 3]) -> Result<Self, TrackError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(TrackError::InvalidResolution(resolution));
        }
        if grid.is_empty() {
            return Err(TrackError::Image("empty grid".into()));
        }
        if grid.iter().all(|&o| o) {
            return Err(TrackError::NoFreeSpace);
        }
        let distance = distance_field(&grid, resolution);
        Ok(Self {
            grid,
            resolution,
            origin,
            distance,
        })
    }

    /// Decodes a grayscale (or colour, converted to luma) image.
    pub fn load(image_bytes: &[u8], meta: &MapMetadata) -> Result<Self, TrackError> {
        meta.validate()?;
        let img = image::load_from_memory(image_bytes).map_err(|e| TrackError::Image(e.to_string()))?;
        let (w, h) = img.dimensions();
        let luma = img.to_luma8();
        let threshold = meta.occupied_thresh;
        let grid = Array2::from_shape_fn((h as usize, w as usize), |(row, col)| {
            let px = luma.get_pixel(col as u32, h - 1 - row as u32)[0];
            (px as f64 / 255.0) < threshold
        });
        Self::from_grid(grid, meta.resolution, meta.origin)
    }

    /// Reads the metadata file and the image it names (relative to the
    /// metadata file's directory).
    pub fn load_from_files(metadata_path: &Path) -> Result<Self, TrackError> {
        let text = std::fs::read_to_string(metadata_path)?;
        let meta = MapMetadata::parse(&text)?;
        let dir = metadata_path.parent().unwrap_or_else(|| Path::new("."));
        let bytes = std::fs::read(dir.join(&meta.image))?;
        Self::load(&bytes, &meta)
    }

    /// Writes the grid as an 8-bit PNG (occupied black, free white) plus
    /// its metadata file.
    pub fn save(&self, metadata_path: &Path) -> Result<(), TrackError> {
        let stem = metadata_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("map")
            .to_string();
        let image_name = format!("{stem}.png");
        let (rows, cols) = self.grid.dim();
        let img = image::GrayImage::from_fn(cols as u32, rows as u32, |x, y| {
            let row = rows - 1 - y as usize;
            image::Luma([if self.grid[[row, x as usize]] { 0 } else { 255 }])
        });
        let dir = metadata_path.parent().unwrap_or_else(|| Path::new("."));
        img.save(dir.join(&image_name))
            .map_err(|e| TrackError::Image(e.to_string()))?;
        let meta = MapMetadata {
            image: image_name,
            resolution: self.resolution,
            origin: self.origin,
            occupied_thresh: 0.5,
        };
        std::fs::write(metadata_path, meta.to_yaml())?;
        Ok(())
    }

    pub fn grid(&self) -> &Array2<bool> {
        &self.grid
    }

    pub fn distance_field(&self) -> &Array2<f64> {
        &self.distance
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    /// (rows, cols)
    pub fn dims(&self) -> (usize, usize) {
        self.grid.dim()
    }

    /// World extent (width, height) in meters.
    pub fn extent(&self) -> (f64, f64) {
        let (rows, cols) = self.grid.dim();
        (cols as f64 * self.resolution, rows as f64 * self.resolution)
    }

    pub fn occupied_count(&self) -> usize {
        self.grid.iter().filter(|&&o| o).count()
    }

    /// World point expressed in fractional cell units of the origin frame.
    pub fn world_to_grid(&self, x: f64, y: f64) -> (f64, f64) {
        let [ox, oy, yaw] = self.origin;
        let (dx, dy) = (x - ox, y - oy);
        let (s, c) = yaw.sin_cos();
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        (lx / self.resolution, ly / self.resolution)
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let [ox, oy, yaw] = self.origin;
        let lx = (col as f64 + 0.5) * self.resolution;
        let ly = (row as f64 + 0.5) * self.resolution;
        let (s, c) = yaw.sin_cos();
        (ox + c * lx - s * ly, oy + s * lx + c * ly)
    }

    /// Cell (row, col) containing a world point, if inside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (gx, gy) = self.world_to_grid(x, y);
        let (rows, cols) = self.grid.dim();
        if gx < 0.0 || gy < 0.0 || !gx.is_finite() || !gy.is_finite() {
            return None;
        }
        let (col, row) = (gx.floor() as usize, gy.floor() as usize);
        (row < rows && col < cols).then_some((row, col))
    }

    /// Occupied, or outside the grid.
    pub fn is_occupied(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).map_or(true, |rc| self.grid[rc])
    }

    /// Distance to the nearest occupied cell center, bilinearly interpolated
    /// between cell centers. Zero on occupied cells and outside the grid.
    pub fn distance_at(&self, x: f64, y: f64) -> f64 {
        match self.cell_at(x, y) {
            None => 0.0,
            Some(rc) if self.grid[rc] => 0.0,
            Some(_) => {
                let (gx, gy) = self.world_to_grid(x, y);
                bilinear(&self.distance, gx - 0.5, gy - 0.5)
            }
        }
    }

    /// Disc footprint collision test.
    pub fn collision(&self, x: f64, y: f64, halfwidth: f64) -> bool {
        self.distance_at(x, y) <= halfwidth
    }
}

/// Bilinear sample of a `[row, col]` field at fractional (col, row),
/// clamped to the field boundary.
pub(crate) fn bilinear(field: &Array2<f64>, u: f64, v: f64) -> f64 {
    let (rows, cols) = field.dim();
    let u = u.clamp(0.0, (cols - 1) as f64);
    let v = v.clamp(0.0, (rows - 1) as f64);
    let c0 = (u.floor() as usize).min(cols.saturating_sub(2));
    let r0 = (v.floor() as usize).min(rows.saturating_sub(2));
    let c1 = (c0 + 1).min(cols - 1);
    let r1 = (r0 + 1).min(rows - 1);
    let tu = u - c0 as f64;
    let tv = v - r0 as f64;
    let a = field[[r0, c0]] * (1.0 - tu) + field[[r0, c1]] * tu;
    let b = field[[r1, c0]] * (1.0 - tu) + field[[r1, c1]] * tu;
    a * (1.0 - tv) + b * tv
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, ImageFormat, Luma};
    use std::io::Cursor;

    fn png(img: &GrayImage) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png).unwrap();
        buf.into_inner()
    }

    fn meta(res: f64) -> MapMetadata {
        MapMetadata {
            image: "x.png".into(),
            resolution: res,
            origin: [0.0, 0.0, 0.0],
            occupied_thresh: 0.5,
        }
    }

    #[test]
    fn white_image_has_no_obstacles() {
        let img = GrayImage::from_pixel(10, 10, Luma([255]));
        let map = TrackMap::load(&png(&img), &meta(0.1)).unwrap();
        assert_eq!(map.occupied_count(), 0);
        assert_eq!(map.dims(), (10, 10));
        let (w, h) = map.extent();
        assert!((w - 1.0).abs() < 1e-12 && (h - 1.0).abs() < 1e-12);
        assert!(map.distance_field().iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn single_black_pixel() {
        let mut img = GrayImage::from_pixel(10, 10, Luma([255]));
        img.put_pixel(3, 4, Luma([0]));
        let map = TrackMap::load(&png(&img), &meta(0.1)).unwrap();
        assert_eq!(map.occupied_count(), 1);
        // image row 4 from the top is grid row 10 - 1 - 4
        let rc = (5, 3);
        assert!(map.grid()[rc]);
        assert_eq!(map.distance_field()[rc], 0.0);
        let (x, y) = map.cell_center(5, 3);
        assert!(map.is_occupied(x, y));
        assert!((map.distance_field()[[5, 4]] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let img = GrayImage::from_pixel(4, 4, Luma([255]));
        assert!(matches!(
            TrackMap::load(&png(&img), &meta(0.0)),
            Err(TrackError::InvalidResolution(_))
        ));
        assert!(matches!(
            TrackMap::load(b"not an image", &meta(0.1)),
            Err(TrackError::Image(_))
        ));
        let black = GrayImage::from_pixel(4, 4, Luma([0]));
        assert!(matches!(
            TrackMap::load(&png(&black), &meta(0.1)),
            Err(TrackError::NoFreeSpace)
        ));
    }

    #[test]
    fn metadata_parses_yaml() {
        let m = MapMetadata::parse(
            "image: aut.png\nresolution: 0.05\norigin: [-1.5, 2.0, 0.0]\noccupied_thresh: 0.45\n",
        )
        .unwrap();
        assert_eq!(m.image, "aut.png");
        assert_eq!(m.origin, [-1.5, 2.0, 0.0]);
        assert!(MapMetadata::parse("image: a.png\nresolution: -1\norigin: [0,0,0]\noccupied_thresh: 0.5").is_err());
    }

    #[test]
    fn save_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let mut grid = Array2::from_elem((8, 12), false);
        grid[[2, 7]] = true;
        grid[[0, 0]] = true;
        let map = TrackMap::from_grid(grid.clone(), 0.05, [1.0, -2.0, 0.0]).unwrap();
        let path = dir.path().join("m.yaml");
        map.save(&path).unwrap();
        let back = TrackMap::load_from_files(&path).unwrap();
        assert_eq!(back.grid(), &grid);
        assert_eq!(back.origin(), [1.0, -2.0, 0.0]);
    }

    #[test]
    fn collision_in_corridor() {
        // corridor 1 m wide between walls at rows 0 and 21 at 0.05 m
        let mut grid = Array2::from_elem((22, 40), false);
        for c in 0..40 {
            grid[[0, c]] = true;
            grid[[21, c]] = true;
        }
        let map = TrackMap::from_grid(grid, 0.05, [0.0, 0.0, 0.0]).unwrap();
        let (x, y) = (1.0, 0.55);
        assert!(!map.collision(x, y, 0.15));
        let (wx, wy) = map.cell_center(0, 10);
        assert!(map.collision(wx, wy, 0.15));
        assert!(map.collision(-1.0, 0.5, 0.15));
    }
}
