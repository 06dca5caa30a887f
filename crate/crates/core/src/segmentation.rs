//! SLIC superpixels: the interpretable units perturbed by the explainer.
//!
//! Clustering runs in (L, a, b, x, y) space starting from a regular grid of
//! centers. A final pass splits disconnected clusters, keeps the largest piece
//! of each, and folds stray pieces smaller than a quarter of the grid cell
//! into their largest neighbour, so every label of the result is a single
//! 4-connected region.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Per-pixel partition of an image into `num_segments` regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    num_segments: usize,
}

impl Segmentation {
    /// Wraps a label map after checking the partition and connectivity
    /// invariants. `num_segments` is one past the largest label.
    pub fn from_labels(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimension(format!(
                "segmentation must be at least 1x1, got {height}x{width}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} label map needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        let k = labels.iter().copied().max().unwrap_or(0) as usize + 1;
        let seg = Self {
            height,
            width,
            labels,
            num_segments: k,
        };
        if let Some(missing) = seg.sizes().iter().position(|&n| n == 0) {
            return Err(Error::InvalidParam(format!(
                "label {missing} unused in a {k}-segment map"
            )));
        }
        if let Some(split) = seg.first_disconnected_label() {
            return Err(Error::InvalidParam(format!(
                "label {split} is not 4-connected"
            )));
        }
        Ok(seg)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.width + col] as usize
    }

    /// Pixel count of every segment.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_segments];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// Flat pixel indices grouped by segment.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_segments];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }

    /// True when `img` has the same raster size.
    pub fn matches(&self, img: &Image) -> bool {
        img.height() == self.height && img.width() == self.width
    }

    fn first_disconnected_label(&self) -> Option<usize> {
        let mut seen = vec![false; self.labels.len()];
        let mut started = vec![false; self.num_segments];
        for start in 0..self.labels.len() {
            if seen[start] {
                continue;
            }
            let l = self.labels[start] as usize;
            if started[l] {
                return Some(l);
            }
            started[l] = true;
            flood(self.height, self.width, start, &mut seen, |i| {
                self.labels[i] as usize == l
            });
        }
        None
    }

    /// Writes the label map as a 16-bit grayscale PNG.
    pub fn save_label_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if self.num_segments > usize::from(u16::MAX) + 1 {
            return Err(Error::InvalidParam(format!(
                "{} segments do not fit a 16-bit label png",
                self.num_segments
            )));
        }
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> = image::ImageBuffer::from_raw(
            self.width as u32,
            self.height as u32,
            self.labels.iter().map(|&l| l as u16).collect(),
        )
        .expect("label buffer matches dimensions");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::InvalidParam(format!("png encoding failed: {other}")),
            })
    }

    pub fn load_label_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| Error::Decode {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?
            .into_luma16();
        let (w, h) = decoded.dimensions();
        let labels = decoded.into_raw().into_iter().map(u32::from).collect();
        Self::from_labels(h as usize, w as usize, labels)
    }
}

/// JSON companion of the label PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSidecar {
    pub num_segments: usize,
    pub height: usize,
    pub width: usize,
    pub parameters: SlicParams,
    pub seed: u64,
}

/// SLIC tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    pub target_segments: usize,
    pub compactness: f64,
    pub max_iter: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            target_segments: 50,
            compactness: 10.0,
            max_iter: 10,
        }
    }
}

/// Fragments smaller than this fraction of the grid cell area are merged.
const MIN_FRAGMENT_FRACTION: f64 = 0.25;
/// Most segments returned, as a multiple of the target.
const MAX_SEGMENT_FACTOR: usize = 2;

#[derive(Debug, Clone, Copy)]
struct Center {
    lab: [f64; 3],
    row: f64,
    col: f64,
}

/// Segments `img` into roughly `params.target_segments` superpixels.
///
/// The result is fully determined by the image and parameters. `seed` is
/// accepted so every stage of a run shares one seed; grid initialisation
/// does not draw random numbers.
pub fn slic_segment(img: &Image, params: &SlicParams, seed: u64) -> Result<Segmentation> {
    let _ = seed;
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    if params.target_segments == 0 || params.target_segments > n {
        return Err(Error::InvalidParam(format!(
            "target_segments must be in [1, {n}], got {}",
            params.target_segments
        )));
    }
    if !params.compactness.is_finite() || params.compactness <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "compactness must be positive, got {}",
            params.compactness
        )));
    }
    if params.max_iter == 0 {
        return Err(Error::InvalidParam("max_iter must be at least 1".into()));
    }

    let lab: Vec<[f64; 3]> = (0..n).map(|i| rgb_to_lab(img.pixel_at(i))).collect();
    let step = (n as f64 / params.target_segments as f64).sqrt();

    let grid_rows = ((h as f64 / step).round() as usize).clamp(1, h.min(params.target_segments));
    let grid_cols =
        ((params.target_segments as f64 / grid_rows as f64).round() as usize).clamp(1, w);
    let mut centers = initial_centers(&lab, h, w, grid_rows, grid_cols);

    // Search window must reach every pixel of a grid cell even when the
    // rounded grid is coarser than `step`.
    let reach = 2.0
        * step
            .max(h as f64 / grid_rows as f64)
            .max(w as f64 / grid_cols as f64);
    let spatial_scale = (params.compactness / step).powi(2);

    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..params.max_iter {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        let mut next = vec![u32::MAX; n];
        for (k, c) in centers.iter().enumerate() {
            let r0 = (c.row - reach).floor().max(0.0) as usize;
            let r1 = ((c.row + reach).ceil() as usize).min(h - 1);
            let c0 = (c.col - reach).floor().max(0.0) as usize;
            let c1 = ((c.col + reach).ceil() as usize).min(w - 1);
            for r in r0..=r1 {
                for col in c0..=c1 {
                    let i = r * w + col;
                    let d = distance(c, &lab[i], r, col, spatial_scale);
                    if d < dist[i] {
                        dist[i] = d;
                        next[i] = k as u32;
                    }
                }
            }
        }
        for i in 0..n {
            if next[i] == u32::MAX {
                let (r, col) = (i / w, i % w);
                let (k, _) = centers
                    .iter()
                    .enumerate()
                    .map(|(k, c)| (k, distance(c, &lab[i], r, col, spatial_scale)))
                    .fold(
                        (0, f64::INFINITY),
                        |best, cur| if cur.1 < best.1 { cur } else { best },
                    );
                next[i] = k as u32;
            }
        }
        let converged = next == labels;
        labels = next;
        if converged {
            break;
        }
        update_centers(&mut centers, &labels, &lab, w);
    }

    let min_fragment = ((MIN_FRAGMENT_FRACTION * step * step).floor() as usize).max(1);
    let max_segments = params.target_segments.saturating_mul(MAX_SEGMENT_FACTOR);
    let labels = enforce_connectivity(&labels, h, w, min_fragment, max_segments);
    let k = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    Ok(Segmentation {
        height: h,
        width: w,
        labels,
        num_segments: k,
    })
}

#[inline]
fn distance(c: &Center, px: &[f64; 3], row: usize, col: usize, spatial_scale: f64) -> f64 {
    let dc = (c.lab[0] - px[0]).powi(2) + (c.lab[1] - px[1]).powi(2) + (c.lab[2] - px[2]).powi(2);
    let ds = (c.row - row as f64).powi(2) + (c.col - col as f64).powi(2);
    dc + spatial_scale * ds
}

fn initial_centers(lab: &[[f64; 3]], h: usize, w: usize, rows: usize, cols: usize) -> Vec<Center> {
    let gradient = |r: usize, c: usize| -> f64 {
        let at = |r: usize, c: usize| lab[r * w + c];
        let (up, down) = (at(r.saturating_sub(1), c), at((r + 1).min(h - 1), c));
        let (left, right) = (at(r, c.saturating_sub(1)), at(r, (c + 1).min(w - 1)));
        (0..3)
            .map(|i| (down[i] - up[i]).powi(2) + (right[i] - left[i]).powi(2))
            .sum()
    };

    let mut centers = Vec::with_capacity(rows * cols);
    for gr in 0..rows {
        for gc in 0..cols {
            let row = (gr as f64 + 0.5) * h as f64 / rows as f64 - 0.5;
            let col = (gc as f64 + 0.5) * w as f64 / cols as f64 - 0.5;
            let (pr, pc) = (row.round() as usize, col.round() as usize);
            // Move off edges: take the lowest-gradient pixel of the 3x3
            // neighbourhood, staying put unless strictly better.
            let mut best = (row, col, gradient(pr, pc), pr, pc);
            for nr in pr.saturating_sub(1)..=(pr + 1).min(h - 1) {
                for nc in pc.saturating_sub(1)..=(pc + 1).min(w - 1) {
                    let g = gradient(nr, nc);
                    if g < best.2 {
                        best = (nr as f64, nc as f64, g, nr, nc);
                    }
                }
            }
            centers.push(Center {
                lab: lab[best.3 * w + best.4],
                row: best.0,
                col: best.1,
            });
        }
    }
    centers
}

fn update_centers(centers: &mut [Center], labels: &[u32], lab: &[[f64; 3]], w: usize) {
    let mut sums = vec![[0.0f64; 5]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (i, &l) in labels.iter().enumerate() {
        let s = &mut sums[l as usize];
        s[0] += lab[i][0];
        s[1] += lab[i][1];
        s[2] += lab[i][2];
        s[3] += (i / w) as f64;
        s[4] += (i % w) as f64;
        counts[l as usize] += 1;
    }
    for ((c, s), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
        if n > 0 {
            let n = n as f64;
            *c = Center {
                lab: [s[0] / n, s[1] / n, s[2] / n],
                row: s[3] / n,
                col: s[4] / n,
            };
        }
    }
}

/// Breadth-first fill over 4-neighbours accepted by `same`, marking `seen`.
/// Returns the visited pixels in visit order.
fn flood(
    h: usize,
    w: usize,
    start: usize,
    seen: &mut [bool],
    same: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let mut out = Vec::new();
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        out.push(i);
        let (r, c) = (i / w, i % w);
        let mut visit = |j: usize| {
            if !seen[j] && same(j) {
                seen[j] = true;
                queue.push_back(j);
            }
        };
        if r > 0 {
            visit(i - w);
        }
        if r + 1 < h {
            visit(i + w);
        }
        if c > 0 {
            visit(i - 1);
        }
        if c + 1 < w {
            visit(i + 1);
        }
    }
    out
}

/// Splits every label into 4-connected components, folds stray components
/// below `min_size` into their largest adjacent group, and relabels densely
/// in raster order. The largest component of each label is never folded, so
/// noisy images cannot collapse into a handful of segments. If more than
/// `max_segments` groups survive, the smallest are folded the same way.
fn enforce_connectivity(
    labels: &[u32],
    h: usize,
    w: usize,
    min_size: usize,
    max_segments: usize,
) -> Vec<u32> {
    let n = labels.len();
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let id = sizes.len();
        let pixels = flood(h, w, start, &mut seen, |j| labels[j] == labels[start]);
        for &p in &pixels {
            comp[p] = id;
        }
        sizes.push(pixels.len());
    }

    let n_comp = sizes.len();
    let mut primary = vec![false; n_comp];
    let mut best_of_label: BTreeMap<u32, usize> = BTreeMap::new();
    for i in 0..n {
        let entry = best_of_label.entry(labels[i]).or_insert(comp[i]);
        if sizes[comp[i]] > sizes[*entry] {
            *entry = comp[i];
        }
    }
    for &c in best_of_label.values() {
        primary[c] = true;
    }

    let mut adjacent = vec![BTreeSet::new(); n_comp];
    for i in 0..n {
        let (r, c) = (i / w, i % w);
        if c + 1 < w && comp[i] != comp[i + 1] {
            adjacent[comp[i]].insert(comp[i + 1]);
            adjacent[comp[i + 1]].insert(comp[i]);
        }
        if r + 1 < h && comp[i] != comp[i + w] {
            adjacent[comp[i]].insert(comp[i + w]);
            adjacent[comp[i + w]].insert(comp[i]);
        }
    }

    let mut groups = Groups::new(sizes);
    loop {
        let mut merged = false;
        for c in 0..n_comp {
            let root = groups.find(c);
            if root != c || primary[root] || groups.size[root] >= min_size {
                continue;
            }
            let candidates: Vec<usize> = adjacent[root]
                .iter()
                .map(|&a| groups.find(a))
                .filter(|&a| a != root)
                .collect();
            let target = candidates
                .into_iter()
                .max_by(|&a, &b| groups.size[a].cmp(&groups.size[b]).then(b.cmp(&a)));
            if let Some(target) = target {
                let absorbed = std::mem::take(&mut adjacent[root]);
                let kept = groups.union_into(root, target);
                adjacent[kept].extend(absorbed);
                merged = true;
            }
        }
        if !merged {
            break;
        }
    }

    let mut roots: Vec<usize> = (0..n_comp).filter(|&c| groups.find(c) == c).collect();
    while roots.len() > max_segments.max(1) {
        let smallest = *roots
            .iter()
            .min_by_key(|&&r| (groups.size[r], r))
            .expect("more than one group");
        let candidates: Vec<usize> = adjacent[smallest]
            .iter()
            .map(|&a| groups.find(a))
            .filter(|&a| a != smallest)
            .collect();
        let Some(target) = candidates
            .into_iter()
            .max_by(|&a, &b| groups.size[a].cmp(&groups.size[b]).then(b.cmp(&a)))
        else {
            break;
        };
        let absorbed = std::mem::take(&mut adjacent[smallest]);
        let kept = groups.union_into(smallest, target);
        adjacent[kept].extend(absorbed);
        roots.retain(|&r| r != smallest);
    }

    let mut relabel = vec![u32::MAX; n_comp];
    let mut next = 0u32;
    comp.iter()
        .map(|&c| {
            let root = groups.find(c);
            if relabel[root] == u32::MAX {
                relabel[root] = next;
                next += 1;
            }
            relabel[root]
        })
        .collect()
}

/// Union-find over components where the absorbing group keeps its root.
struct Groups {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Groups {
    fn new(size: Vec<usize>) -> Self {
        Self {
            parent: (0..size.len()).collect(),
            size,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union_into(&mut self, from: usize, into: usize) -> usize {
        self.parent[from] = into;
        self.size[into] += self.size[from];
        into
    }
}

/// Symmetric, irreflexive neighbour relation between segment labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<BTreeSet<usize>>,
}

impl Adjacency {
    pub fn neighbors(&self, label: usize) -> &BTreeSet<usize> {
        &self.neighbors[label]
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.neighbors.get(a).is_some_and(|s| s.contains(&b))
    }

    /// Unordered pairs `(a, b)` with `a < b`, sorted.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(a, s)| s.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    }
}

/// Labels that share a 4-adjacent pixel pair.
pub fn segment_adjacency(seg: &Segmentation) -> Adjacency {
    let (h, w) = (seg.height, seg.width);
    let mut neighbors = vec![BTreeSet::new(); seg.num_segments];
    let mut link = |a: u32, b: u32| {
        if a != b {
            neighbors[a as usize].insert(b as usize);
            neighbors[b as usize].insert(a as usize);
        }
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w {
                link(seg.labels[i], seg.labels[i + 1]);
            }
            if r + 1 < h {
                link(seg.labels[i], seg.labels[i + w]);
            }
        }
    }
    Adjacency { neighbors }
}

// sRGB (D65) -> CIE XYZ, linear-light input.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];
const D65_WHITE: [f64; 3] = [0.950_47, 1.0, 1.088_83];

/// Converts an sRGB pixel in `[0, 1]` to CIE L*a*b* under D65.
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let linear = rgb.map(|c| {
        if c <= 0.040_45 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    });
    let xyz: [f64; 3] = std::array::from_fn(|i| {
        (0..3).map(|j| RGB_TO_XYZ[i][j] * linear[j]).sum::<f64>() / D65_WHITE[i]
    });
    const EPS: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    let f = xyz.map(|t| {
        if t > EPS {
            t.cbrt()
        } else {
            (KAPPA * t + 16.0) / 116.0
        }
    });
    [
        116.0 * f[1] - 16.0,
        500.0 * (f[0] - f[1]),
        200.0 * (f[1] - f[2]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(target: usize) -> SlicParams {
        SlicParams {
            target_segments: target,
            ..SlicParams::default()
        }
    }

    #[test]
    fn lab_reference_points() {
        let white = rgb_to_lab([1.0, 1.0, 1.0]);
        assert!((white[0] - 100.0).abs() < 1e-3, "{white:?}");
        assert!(white[1].abs() < 1e-3 && white[2].abs() < 1e-3);
        assert_eq!(rgb_to_lab([0.0; 3]), [0.0, 0.0, 0.0]);
        // Pure sRGB red, widely tabulated as (53.24, 80.09, 67.20).
        let red = rgb_to_lab([1.0, 0.0, 0.0]);
        assert!(
            (red[0] - 53.24).abs() < 0.01
                && (red[1] - 80.09).abs() < 0.01
                && (red[2] - 67.20).abs() < 0.01
        );
    }

    #[test]
    fn single_target_gives_single_segment() {
        let img = Image::new(3, 5, (0..45).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let seg = slic_segment(&img, &params(1), 0).unwrap();
        assert_eq!(seg.num_segments(), 1);
        assert!(seg.labels().iter().all(|&l| l == 0));

        let tall = Image::filled(100, 2, [0.3; 3]).unwrap();
        assert_eq!(
            slic_segment(&tall, &params(1), 0).unwrap().num_segments(),
            1
        );
    }

    #[test]
    fn uniform_image_splits_into_quadrants() {
        let img = Image::filled(16, 16, [0.4, 0.5, 0.6]).unwrap();
        let seg = slic_segment(&img, &params(4), 0).unwrap();
        assert_eq!(seg.num_segments(), 4);
        assert_eq!(seg.sizes(), vec![64; 4]);
        for r in 0..16 {
            for c in 0..16 {
                let expected = (r / 8) * 2 + c / 8;
                assert_eq!(seg.label(r, c), expected, "pixel ({r},{c})");
            }
        }
    }

    #[test]
    fn boundary_follows_color_edge() {
        let mut img = Image::filled(16, 16, [0.0; 3]).unwrap();
        for r in 0..16 {
            for c in 8..16 {
                img.set_pixel_at(r * 16 + c, [1.0; 3]);
            }
        }
        let seg = slic_segment(&img, &params(2), 0).unwrap();
        for half in [0..8, 8..16] {
            let mut counts = std::collections::HashMap::new();
            for r in 0..16 {
                for c in half.clone() {
                    *counts.entry(seg.label(r, c)).or_insert(0) += 1;
                }
            }
            let majority = counts.values().max().unwrap();
            assert!(*majority as f64 >= 0.95 * 128.0, "{counts:?}");
        }
        assert_ne!(seg.label(0, 0), seg.label(0, 15));
    }

    #[test]
    fn rejects_bad_params() {
        let img = Image::filled(4, 4, [0.0; 3]).unwrap();
        assert!(slic_segment(&img, &params(0), 0).is_err());
        assert!(slic_segment(&img, &params(17), 0).is_err());
        let mut p = params(2);
        p.compactness = 0.0;
        assert!(slic_segment(&img, &p, 0).is_err());
        p.compactness = 10.0;
        p.max_iter = 0;
        assert!(slic_segment(&img, &p, 0).is_err());
    }

    #[test]
    fn segment_cap_folds_smallest_groups() {
        let labels = vec![0, 1, 0, 1, 0];
        assert_eq!(
            enforce_connectivity(&labels, 1, 5, 1, 2),
            vec![0, 0, 0, 0, 1]
        );
    }

    #[test]
    fn busy_block_texture_stays_within_twice_target() {
        let palette = [
            [0.9, 0.1, 0.1],
            [0.1, 0.8, 0.2],
            [0.1, 0.2, 0.9],
            [0.9, 0.9, 0.1],
            [0.5, 0.1, 0.6],
        ];
        let data = (0..64 * 64)
            .flat_map(|i| palette[((i / 64 / 4) * 7 + (i % 64 / 4) * 3) % 5])
            .collect();
        let img = Image::new(64, 64, data).unwrap();
        let seg = slic_segment(&img, &params(50), 0).unwrap();
        assert!(
            (25..=100).contains(&seg.num_segments()),
            "{}",
            seg.num_segments()
        );
    }

    #[test]
    fn one_segment_per_pixel_allowed() {
        let img = Image::new(2, 2, (0..12).map(|i| i as f64 / 12.0).collect()).unwrap();
        let seg = slic_segment(&img, &params(4), 0).unwrap();
        assert!(seg.num_segments() >= 1 && seg.num_segments() <= 4);
        Segmentation::from_labels(2, 2, seg.labels().to_vec()).unwrap();
    }

    #[test]
    fn adjacency_examples() {
        let one = Segmentation::from_labels(2, 2, vec![0; 4]).unwrap();
        assert!(segment_adjacency(&one).pairs().is_empty());

        let pair = Segmentation::from_labels(1, 2, vec![0, 1]).unwrap();
        assert_eq!(segment_adjacency(&pair).pairs(), vec![(0, 1)]);

        let quad = Segmentation::from_labels(2, 2, vec![0, 1, 2, 3]).unwrap();
        let adj = segment_adjacency(&quad);
        assert_eq!(adj.pairs(), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert!(adj.contains(1, 0) && !adj.contains(0, 3) && !adj.contains(0, 0));
    }

    #[test]
    fn from_labels_checks_invariants() {
        assert!(Segmentation::from_labels(1, 3, vec![0, 2, 0]).is_err());
        assert!(Segmentation::from_labels(1, 3, vec![0, 1, 0]).is_err());
        assert!(Segmentation::from_labels(1, 3, vec![0, 1]).is_err());
    }

    #[test]
    fn connectivity_pass_merges_small_fragments() {
        // Stray pieces are absorbed; each label's main body survives even
        // when it is smaller than the minimum.
        let labels = vec![0, 0, 1, 0, 1];
        assert_eq!(
            enforce_connectivity(&labels, 1, 5, 2, usize::MAX),
            vec![0, 0, 1, 1, 1]
        );
        let labels = vec![0, 0, 0, 0, 1, 0, 0, 0, 0];
        assert_eq!(enforce_connectivity(&labels, 3, 3, 2, usize::MAX), labels);
        // Two separated pieces of the same label become two labels.
        let labels = vec![0, 1, 0];
        assert_eq!(
            enforce_connectivity(&labels, 1, 3, 1, usize::MAX),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn label_png_roundtrip() {
        let img = Image::new(
            8,
            8,
            (0..192).map(|i| ((i * 37) % 101) as f64 / 100.0).collect(),
        )
        .unwrap();
        let seg = slic_segment(&img, &params(4), 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.png");
        seg.save_label_png(&path).unwrap();
        assert_eq!(Segmentation::load_label_png(&path).unwrap(), seg);
    }
}
