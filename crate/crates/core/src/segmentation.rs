//! HSV range masking, connected-region extraction and the width/height
//! ratio filter.

use serde::{Deserialize, Serialize};

use crate::colorspace::Hsv8;
use crate::error::{Error, Result};
use crate::raster::{BitImage, RasterImage};

/// Inclusive box in HSV space. Hue wraparound is expressed as two ranges,
/// never as `h_min > h_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HsvRange {
    pub h_min: u8,
    pub h_max: u8,
    pub s_min: u8,
    pub s_max: u8,
    pub v_min: u8,
    pub v_max: u8,
}

impl HsvRange {
    pub const FULL: HsvRange = HsvRange::new((0, 179), (0, 255), (0, 255));

    pub const fn new(h: (u8, u8), s: (u8, u8), v: (u8, u8)) -> Self {
        Self {
            h_min: h.0,
            h_max: h.1,
            s_min: s.0,
            s_max: s.1,
            v_min: v.0,
            v_max: v.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_min > self.h_max || self.s_min > self.s_max || self.v_min > self.v_max {
            return Err(Error::Config(format!("HSV range {self:?} has min > max")));
        }
        if self.h_max > 179 {
            return Err(Error::Config(format!("hue bound {} exceeds 179", self.h_max)));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, p: Hsv8) -> bool {
        (self.h_min..=self.h_max).contains(&p.h)
            && (self.s_min..=self.s_max).contains(&p.s)
            && (self.v_min..=self.v_max).contains(&p.v)
    }

    /// Number of HSV lattice points inside the box.
    pub fn volume(&self) -> u64 {
        let span = |lo: u8, hi: u8| u64::from(hi.saturating_sub(lo)) + 1;
        span(self.h_min, self.h_max) * span(self.s_min, self.s_max) * span(self.v_min, self.v_max)
    }
}

/// Inclusive pixel bounds of one connected region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoundingRect {
    pub x_min: usize,
    pub x_max: usize,
    pub y_min: usize,
    pub y_max: usize,
    pub pixel_count: usize,
}

impl BoundingRect {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn y_center(&self) -> f64 {
        (self.y_min + self.y_max) as f64 / 2.0
    }

    pub fn aspect(&self) -> f64 {
        self.width() as f64 / self.height() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// Pixel is on iff it falls inside at least one of `ranges`.
pub fn hsv_mask(img: &RasterImage<Hsv8>, ranges: &[HsvRange]) -> Result<BitImage> {
    if ranges.is_empty() {
        return Err(Error::Parameter("HSV mask needs at least one range".into()));
    }
    Ok(img.map(|&p| ranges.iter().any(|r| r.contains(p))))
}

/// Count of on pixels, without materializing the mask.
pub fn mask_count(img: &RasterImage<Hsv8>, ranges: &[HsvRange]) -> usize {
    img.pixels()
        .iter()
        .filter(|&&p| ranges.iter().any(|r| r.contains(p)))
        .count()
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let grand = self.parent[self.parent[i as usize] as usize];
            self.parent[i as usize] = grand;
            i = grand;
        }
        i
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Two-pass union-find labeling. Returns one rect per region, ordered by the
/// region's first pixel in raster order.
pub fn connected_components_with(mask: &BitImage, connectivity: Connectivity) -> Vec<BoundingRect> {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut sets = DisjointSet { parent: vec![0] };

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut neighbors = [0u32; 4];
            let mut n = 0;
            let mut push = |l: u32| {
                if l != 0 {
                    neighbors[n] = l;
                    n += 1;
                }
            };
            if x > 0 {
                push(labels[y * w + x - 1]);
            }
            if y > 0 {
                push(labels[(y - 1) * w + x]);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        push(labels[(y - 1) * w + x - 1]);
                    }
                    if x + 1 < w {
                        push(labels[(y - 1) * w + x + 1]);
                    }
                }
            }
            let label = if n == 0 {
                let fresh = sets.parent.len() as u32;
                sets.parent.push(fresh);
                fresh
            } else {
                let mut root = neighbors[0];
                for &other in &neighbors[1..n] {
                    root = sets.union(root, other);
                }
                sets.find(root)
            };
            labels[y * w + x] = label;
        }
    }

    let mut slot = vec![usize::MAX; sets.parent.len()];
    let mut rects: Vec<BoundingRect> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = sets.find(l) as usize;
            if slot[root] == usize::MAX {
                slot[root] = rects.len();
                rects.push(BoundingRect {
                    x_min: x,
                    x_max: x,
                    y_min: y,
                    y_max: y,
                    pixel_count: 0,
                });
            }
            let r = &mut rects[slot[root]];
            r.x_min = r.x_min.min(x);
            r.x_max = r.x_max.max(x);
            r.y_max = y;
            r.pixel_count += 1;
        }
    }
    rects
}

/// 8-connected regions of on pixels.
pub fn connected_components(mask: &BitImage) -> Vec<BoundingRect> {
    connected_components_with(mask, Connectivity::Eight)
}

/// Keeps rects whose inclusive width/height ratio is at least `whr`.
pub fn filter_by_whr(rects: &[BoundingRect], whr: f64) -> Vec<BoundingRect> {
    rects.iter().copied().filter(|r| r.aspect() >= whr).collect()
}
