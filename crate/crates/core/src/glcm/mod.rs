//! Gray-level co-occurrence matrices in 2D, 2.5D and volume-space 3D.
//!
//! A GLCM for offset `d` counts ordered value pairs `(v(p), v(p + d))` over
//! every element `p` whose partner lies inside the region. Regions can carry
//! a validity mask; pairs touching a masked-out element are skipped.
//!
//! Sequences feed the fusion classifier. Each timestep is a concatenation of
//! row-major vectorized matrices (or of descriptor vectors):
//!
//! | mode                 | timesteps            | blocks per timestep |
//! |----------------------|----------------------|---------------------|
//! | `2d_directions`      | 8 angles             | 1                   |
//! | `slices_2_5d`        | one per slice        | 8 angles            |
//! | `vs_3d`              | one per volume space | 13 directions       |
//! | `vs_3d_by_direction` | 13 directions        | one per volume space|

mod haralick;

use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagio::{GrayImage, Volume};

pub use haralick::{haralick, Descriptor, HaralickVector};

/// Slices per volume space.
pub const VS_DEPTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Direction {
    pub dz: i32,
    pub dy: i32,
    pub dx: i32,
}

impl Direction {
    pub const fn new(dz: i32, dy: i32, dx: i32) -> Self {
        Direction { dz, dy, dx }
    }

    pub fn negate(self) -> Self {
        Direction::new(-self.dz, -self.dy, -self.dx)
    }

    /// Angle in degrees for in-plane directions, with 0° pointing along +x and 90° "up" (-y).
    pub fn angle_deg(self) -> Option<u32> {
        if self.dz != 0 {
            return None;
        }
        DIRECTIONS_2D
            .iter()
            .position(|d| *d == self)
            .map(|k| 45 * k as u32)
    }

    pub fn label(self) -> String {
        match self.angle_deg() {
            Some(a) => format!("{a}deg"),
            None => format!("({},{},{})", self.dz, self.dy, self.dx),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

const DIRECTIONS_2D: [Direction; 8] = [
    Direction::new(0, 0, 1),
    Direction::new(0, -1, 1),
    Direction::new(0, -1, 0),
    Direction::new(0, -1, -1),
    Direction::new(0, 0, -1),
    Direction::new(0, 1, -1),
    Direction::new(0, 1, 0),
    Direction::new(0, 1, 1),
];

const DIRECTIONS_3D: [Direction; 13] = [
    Direction::new(0, 0, 1),
    Direction::new(0, 1, 0),
    Direction::new(1, 0, 0),
    Direction::new(0, 1, 1),
    Direction::new(0, 1, -1),
    Direction::new(1, 0, 1),
    Direction::new(1, 0, -1),
    Direction::new(1, 1, 0),
    Direction::new(1, -1, 0),
    Direction::new(1, 1, 1),
    Direction::new(1, 1, -1),
    Direction::new(1, -1, 1),
    Direction::new(1, -1, -1),
];

/// The eight in-plane unit offsets for 0°, 45°, ..., 315°.
pub fn directions_2d() -> [Direction; 8] {
    DIRECTIONS_2D
}

/// The 13 half-space offsets of the 26-neighbourhood.
pub fn directions_3d() -> [Direction; 13] {
    DIRECTIONS_3D
}

/// A borrowed `depth x height x width` grid with an optional validity mask.
#[derive(Debug, Clone, Copy)]
pub struct GridView<'a> {
    pub dims: [usize; 3],
    pub values: &'a [u16],
    pub mask: Option<&'a [bool]>,
}

impl<'a> GridView<'a> {
    pub fn of_image(img: &'a GrayImage) -> Self {
        GridView {
            dims: [1, img.height(), img.width()],
            values: img.pixels(),
            mask: None,
        }
    }

    pub fn of_volume(vol: &'a Volume) -> Self {
        GridView {
            dims: vol.dims(),
            values: vol.voxels(),
            mask: None,
        }
    }

    pub fn with_mask(self, mask: Option<&'a [bool]>) -> Self {
        GridView { mask, ..self }
    }

    /// Slices `[start, start + count)` of the grid.
    pub fn slices(&self, start: usize, count: usize) -> Self {
        let plane = self.dims[1] * self.dims[2];
        let range = start * plane..(start + count) * plane;
        GridView {
            dims: [count, self.dims[1], self.dims[2]],
            values: &self.values[range.clone()],
            mask: self.mask.map(|m| &m[range]),
        }
    }
}

/// A co-occurrence matrix for one offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    pub levels: usize,
    pub direction: Direction,
    pub distance: usize,
    pub symmetric: bool,
    /// Row-major `levels x levels` pair counts.
    pub counts: Vec<u64>,
    /// `counts / sum(counts)`, or all zeros when there are no pairs.
    pub probs: Vec<f64>,
}

impl Glcm {
    pub fn pairs(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs() == 0
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.levels + j]
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.levels + j]
    }
}

/// Counts value pairs at offset `distance * dir` within `region`.
pub fn compute_glcm(
    region: GridView<'_>,
    dir: Direction,
    levels: usize,
    symmetric: bool,
    distance: usize,
) -> Result<Glcm> {
    if distance == 0 {
        return Err(Error::Config("pair distance must be at least 1".into()));
    }
    let valid = |i: usize| region.mask.is_none_or(|m| m[i]);
    if let Some(&v) = region
        .values
        .iter()
        .enumerate()
        .filter(|&(i, _)| valid(i))
        .map(|(_, v)| v)
        .find(|&&v| v as usize >= levels)
    {
        return Err(Error::Range {
            value: v.into(),
            levels: levels as u32,
        });
    }

    let [d, h, w] = region.dims.map(|x| x as isize);
    let k = distance as isize;
    let (oz, oy, ox) = (
        dir.dz as isize * k,
        dir.dy as isize * k,
        dir.dx as isize * k,
    );
    let range = |n: isize, o: isize| (0.max(-o), n.min(n - o));
    let (z0, z1) = range(d, oz);
    let (y0, y1) = range(h, oy);
    let (x0, x1) = range(w, ox);

    let mut counts = vec![0u64; levels * levels];
    let offset = (oz * h + oy) * w + ox;
    for z in z0..z1 {
        for y in y0..y1 {
            let row = (z * h + y) * w;
            for x in x0..x1 {
                let p = (row + x) as usize;
                let q = (row + x + offset) as usize;
                if !(valid(p) && valid(q)) {
                    continue;
                }
                let (a, b) = (region.values[p] as usize, region.values[q] as usize);
                counts[a * levels + b] += 1;
                if symmetric {
                    counts[b * levels + a] += 1;
                }
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let probs = if total == 0 {
        vec![0.0; counts.len()]
    } else {
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    };
    Ok(Glcm {
        levels,
        direction: dir,
        distance,
        symmetric,
        counts,
        probs,
    })
}

/// Three consecutive slices of a volume; slices past the end are padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VolumeSpace {
    pub start: usize,
    /// Number of real (non-padding) slices, 1 to 3.
    pub real_slices: usize,
}

impl VolumeSpace {
    pub fn padding(&self) -> usize {
        VS_DEPTH - self.real_slices
    }

    /// The real slices of this space; padding is never counted.
    pub fn view<'a>(&self, grid: &GridView<'a>) -> GridView<'a> {
        grid.slices(self.start, self.real_slices)
    }
}

/// Splits `depth` slices into `ceil(depth / 3)` volume spaces.
pub fn partition_vs(depth: usize) -> Vec<VolumeSpace> {
    (0..depth.div_ceil(VS_DEPTH))
        .map(|k| {
            let start = k * VS_DEPTH;
            VolumeSpace {
                start,
                real_slices: VS_DEPTH.min(depth - start),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceMode {
    Directions2d,
    Slices2_5d,
    Vs3d,
    Vs3dByDirection,
}

impl SequenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SequenceMode::Directions2d => "2d_directions",
            SequenceMode::Slices2_5d => "slices_2_5d",
            SequenceMode::Vs3d => "vs_3d",
            SequenceMode::Vs3dByDirection => "vs_3d_by_direction",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "2d_directions" | "2d" => SequenceMode::Directions2d,
            "slices_2_5d" | "2_5d" | "2.5d" => SequenceMode::Slices2_5d,
            "vs_3d" | "3d" => SequenceMode::Vs3d,
            "vs_3d_by_direction" | "3d_by_direction" => SequenceMode::Vs3dByDirection,
            other => return Err(Error::Config(format!("unknown sequence mode {other:?}"))),
        })
    }
}

impl fmt::Display for SequenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlcmOptions {
    pub levels: usize,
    pub symmetric: bool,
    pub distance: usize,
}

impl GlcmOptions {
    pub fn new(levels: usize) -> Self {
        GlcmOptions {
            levels,
            symmetric: false,
            distance: 1,
        }
    }
}

/// Per-timestep GLCM blocks, kept so both raw and descriptor sequences can be built.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmBlocks {
    pub mode: SequenceMode,
    pub levels: usize,
    pub timesteps: Vec<Vec<Glcm>>,
}

fn glcms(grid: GridView<'_>, dirs: &[Direction], opts: GlcmOptions) -> Result<Vec<Glcm>> {
    dirs.par_iter()
        .map(|&d| compute_glcm(grid, d, opts.levels, opts.symmetric, opts.distance))
        .collect()
}

/// Eight direction GLCMs of one slice, one per timestep.
pub fn blocks_2d(
    slice: &GrayImage,
    opts: GlcmOptions,
    mask: Option<&[bool]>,
) -> Result<GlcmBlocks> {
    let grid = GridView::of_image(slice).with_mask(mask);
    Ok(GlcmBlocks {
        mode: SequenceMode::Directions2d,
        levels: opts.levels,
        timesteps: glcms(grid, &DIRECTIONS_2D, opts)?
            .into_iter()
            .map(|g| vec![g])
            .collect(),
    })
}

/// Eight in-plane GLCMs per slice, one timestep per slice.
pub fn blocks_2_5d(vol: &Volume, opts: GlcmOptions, mask: Option<&[bool]>) -> Result<GlcmBlocks> {
    let grid = GridView::of_volume(vol).with_mask(mask);
    let timesteps = (0..vol.depth())
        .into_par_iter()
        .map(|z| glcms(grid.slices(z, 1), &DIRECTIONS_2D, opts))
        .collect::<Result<_>>()?;
    Ok(GlcmBlocks {
        mode: SequenceMode::Slices2_5d,
        levels: opts.levels,
        timesteps,
    })
}

/// Thirteen 3D GLCMs per volume space, one timestep per space.
pub fn blocks_3d(vol: &Volume, opts: GlcmOptions, mask: Option<&[bool]>) -> Result<GlcmBlocks> {
    let grid = GridView::of_volume(vol).with_mask(mask);
    let timesteps = partition_vs(vol.depth())
        .into_par_iter()
        .map(|vs| glcms(vs.view(&grid), &DIRECTIONS_3D, opts))
        .collect::<Result<_>>()?;
    Ok(GlcmBlocks {
        mode: SequenceMode::Vs3d,
        levels: opts.levels,
        timesteps,
    })
}

/// The volume-space GLCMs regrouped so each timestep is one direction across all spaces.
pub fn blocks_by_direction(
    vol: &Volume,
    opts: GlcmOptions,
    mask: Option<&[bool]>,
) -> Result<GlcmBlocks> {
    let per_vs = blocks_3d(vol, opts, mask)?;
    let timesteps = (0..DIRECTIONS_3D.len())
        .map(|d| per_vs.timesteps.iter().map(|ts| ts[d].clone()).collect())
        .collect();
    Ok(GlcmBlocks {
        mode: SequenceMode::Vs3dByDirection,
        levels: opts.levels,
        timesteps,
    })
}

impl GlcmBlocks {
    /// Row-major vectorization of each block's probabilities.
    pub fn vectorize(&self) -> GlcmSequence {
        let timesteps: Vec<Vec<f64>> = self
            .timesteps
            .iter()
            .map(|blocks| {
                blocks
                    .iter()
                    .flat_map(|g| g.probs.iter().copied())
                    .collect()
            })
            .collect();
        let feature_len = timesteps.first().map_or(0, Vec::len);
        GlcmSequence {
            mode: self.mode,
            levels: self.levels,
            feature_len,
            timesteps,
            padding: 0,
        }
    }

    /// Replaces every block by its descriptor vector. Empty blocks become zero vectors.
    pub fn descriptors(&self, set: &[Descriptor]) -> GlcmSequence {
        let timesteps: Vec<Vec<f64>> = self
            .timesteps
            .par_iter()
            .map(|blocks| {
                blocks
                    .iter()
                    .flat_map(|g| match haralick(g) {
                        Ok(hv) => hv.select(set),
                        Err(_) => vec![0.0; set.len()],
                    })
                    .collect()
            })
            .collect();
        let feature_len = timesteps.first().map_or(0, Vec::len);
        GlcmSequence {
            mode: self.mode,
            levels: self.levels,
            feature_len,
            timesteps,
            padding: 0,
        }
    }
}

/// An ordered sequence of equal-length feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmSequence {
    pub mode: SequenceMode,
    pub levels: usize,
    pub feature_len: usize,
    pub timesteps: Vec<Vec<f64>>,
    /// Leading zero timesteps added by [`GlcmSequence::pad_front`].
    pub padding: usize,
}

pub fn sequence_2d(slice: &GrayImage, levels: usize) -> Result<GlcmSequence> {
    Ok(blocks_2d(slice, GlcmOptions::new(levels), None)?.vectorize())
}

pub fn sequence_2_5d(vol: &Volume, levels: usize) -> Result<GlcmSequence> {
    Ok(blocks_2_5d(vol, GlcmOptions::new(levels), None)?.vectorize())
}

pub fn sequence_3d(vol: &Volume, levels: usize) -> Result<GlcmSequence> {
    Ok(blocks_3d(vol, GlcmOptions::new(levels), None)?.vectorize())
}

pub fn stack_by_direction(vol: &Volume, levels: usize) -> Result<GlcmSequence> {
    Ok(blocks_by_direction(vol, GlcmOptions::new(levels), None)?.vectorize())
}

/// Descriptor sequence with all 16 descriptors per block.
pub fn sequence_descriptors(blocks: &GlcmBlocks) -> GlcmSequence {
    blocks.descriptors(&Descriptor::ALL)
}

const TENSOR_MAGIC_FIELDS: usize = 4;

impl GlcmSequence {
    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty()
    }

    /// Number of non-padding timesteps.
    pub fn real_len(&self) -> usize {
        self.timesteps.len() - self.padding
    }

    /// Prepends zero vectors until the sequence has `len` timesteps.
    pub fn pad_front(&mut self, len: usize) {
        let extra = len.saturating_sub(self.timesteps.len());
        if extra > 0 {
            let zeros = vec![vec![0.0; self.feature_len]; extra];
            self.timesteps.splice(0..0, zeros);
            self.padding += extra;
        }
    }

    /// Writes `mode,timesteps,f,G` then little-endian `f64`s, row-major.
    pub fn write_tensor<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{},{},{},{}",
            self.mode,
            self.timesteps.len(),
            self.feature_len,
            self.levels
        )?;
        for ts in &self.timesteps {
            for v in ts {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_tensor<R: BufRead>(mut input: R) -> Result<Self> {
        let mut header = String::new();
        input
            .read_line(&mut header)
            .map_err(|e| Error::Format(format!("tensor header: {e}")))?;
        let fields: Vec<&str> = header.trim_end().split(',').collect();
        if fields.len() != TENSOR_MAGIC_FIELDS {
            return Err(Error::Format(format!("bad tensor header {header:?}")));
        }
        let mode = SequenceMode::parse(fields[0])?;
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad tensor header field {s:?}")))
        };
        let (t, f, g) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Format(format!("tensor body: {e}")))?;
        if bytes.len() != t * f * 8 {
            return Err(Error::SizeMismatch {
                expected: t * f * 8,
                found: bytes.len(),
            });
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let timesteps = if f == 0 {
            vec![Vec::new(); t]
        } else {
            values.chunks(f).map(<[f64]>::to_vec).collect()
        };
        Ok(GlcmSequence {
            mode,
            levels: g,
            feature_len: f,
            timesteps,
            padding: 0,
        })
    }
}

/// CSV rows `timestep,block,<descriptor names...>` for a block set.
pub fn descriptors_csv(blocks: &GlcmBlocks) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("timestep,block,direction");
    for d in Descriptor::ALL {
        let _ = write!(out, ",{}", d.name());
    }
    out.push('\n');
    for (t, ts) in blocks.timesteps.iter().enumerate() {
        for (b, g) in ts.iter().enumerate() {
            let _ = write!(out, "{t},{b},\"{}\"", g.direction);
            let values =
                haralick(g).map_or_else(|_| vec![f64::NAN; 16], |h| h.select(&Descriptor::ALL));
            for v in values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn image(w: usize, h: usize, levels: u32, px: &[u16]) -> GrayImage {
        GrayImage::new(w, h, levels, px.to_vec()).unwrap()
    }

    fn volume(dims: [usize; 3], levels: u32, voxels: Vec<u16>) -> Volume {
        Volume::new(dims, levels, voxels, [1.0; 3]).unwrap()
    }

    fn random_volume(rng: &mut ChaCha8Rng, dims: [usize; 3], levels: u16) -> Volume {
        let n = dims.iter().product();
        volume(
            dims,
            levels.into(),
            (0..n).map(|_| rng.gen_range(0..levels)).collect(),
        )
    }

    /// Naive oracle: every ordered pair of in-bounds positions whose difference is the offset.
    fn naive_counts(vol: &Volume, dir: Direction, levels: usize, dist: i32) -> Vec<u64> {
        let [d, h, w] = vol.dims().map(|x| x as i32);
        let mut c = vec![0u64; levels * levels];
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let (z2, y2, x2) = (z + dist * dir.dz, y + dist * dir.dy, x + dist * dir.dx);
                    if (0..d).contains(&z2) && (0..h).contains(&y2) && (0..w).contains(&x2) {
                        let a = vol.get(z as usize, y as usize, x as usize) as usize;
                        let b = vol.get(z2 as usize, y2 as usize, x2 as usize) as usize;
                        c[a * levels + b] += 1;
                    }
                }
            }
        }
        c
    }

    #[test]
    fn direction_sets() {
        let d2 = directions_2d();
        assert_eq!(d2.iter().collect::<HashSet<_>>().len(), 8);
        assert_eq!(d2[0], Direction::new(0, 0, 1));
        assert_eq!(d2[4], d2[0].negate());
        assert_eq!(d2[2].angle_deg(), Some(90));
        assert_eq!(d2[7].label(), "315deg");

        let d3 = directions_3d();
        assert_eq!(d3.len(), 13);
        let all: HashSet<_> = d3.iter().flat_map(|&d| [d, d.negate()]).collect();
        assert_eq!(all.len(), 26);
        let mut neighbours = HashSet::new();
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if (dz, dy, dx) != (0, 0, 0) {
                        neighbours.insert(Direction::new(dz, dy, dx));
                    }
                }
            }
        }
        assert_eq!(all, neighbours);
        for d in d3 {
            assert!(!d3.contains(&d.negate()));
        }
    }

    #[test]
    fn glcm_examples() {
        let im = image(2, 2, 2, &[0, 0, 1, 1]);
        let g = compute_glcm(GridView::of_image(&im), directions_2d()[0], 2, false, 1).unwrap();
        assert_eq!(g.counts, vec![1, 0, 0, 1]);
        assert_eq!(g.probs, vec![0.5, 0.0, 0.0, 0.5]);

        let c = image(3, 3, 4, &[2; 9]);
        let g = compute_glcm(GridView::of_image(&c), directions_2d()[1], 4, false, 1).unwrap();
        assert_eq!(g.prob(2, 2), 1.0);
        assert_eq!(g.probs.iter().filter(|&&p| p > 0.0).count(), 1);

        let one = image(1, 1, 4, &[3]);
        for d in directions_2d() {
            assert!(compute_glcm(GridView::of_image(&one), d, 4, false, 1)
                .unwrap()
                .is_empty());
        }

        let err = compute_glcm(GridView::of_image(&c), directions_2d()[0], 2, false, 1);
        assert!(matches!(err, Err(Error::Range { .. })));
    }

    #[test]
    fn mask_excludes_pairs() {
        let im = image(3, 1, 4, &[1, 2, 3]);
        let mask = [true, true, false];
        let g = compute_glcm(
            GridView::of_image(&im).with_mask(Some(&mask)),
            directions_2d()[0],
            4,
            false,
            1,
        )
        .unwrap();
        assert_eq!(g.pairs(), 1);
        assert_eq!(g.count(1, 2), 1);
    }

    #[test]
    fn partition_examples() {
        let p = partition_vs(9);
        assert_eq!(p.iter().map(|v| v.start).collect::<Vec<_>>(), vec![0, 3, 6]);
        assert!(p.iter().all(|v| v.padding() == 0));
        let p = partition_vs(7);
        assert_eq!(p.len(), 3);
        assert_eq!(
            p[2],
            VolumeSpace {
                start: 6,
                real_slices: 1
            }
        );
        assert_eq!(p[2].padding(), 2);
        assert_eq!(partition_vs(1).len(), 1);
    }

    #[test]
    fn depth_one_volume_has_no_through_plane_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_volume(&mut rng, [1, 4, 4], 4);
        let blocks = blocks_3d(&v, GlcmOptions::new(4), None).unwrap();
        assert_eq!(blocks.timesteps.len(), 1);
        for g in &blocks.timesteps[0] {
            assert_eq!(g.is_empty(), g.direction.dz != 0);
        }
    }

    #[test]
    fn sequence_2d_shapes() {
        let c = image(4, 4, 32, &[5; 16]);
        let s = sequence_2d(&c, 32).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s.feature_len, 1024);
        assert!(s.timesteps.iter().all(|t| t == &s.timesteps[0]));
        assert_eq!(s.timesteps[0][5 * 32 + 5], 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let px: Vec<u16> = (0..25).map(|_| rng.gen_range(0..8)).collect();
        let im = image(5, 5, 8, &px);
        let s = sequence_2d(&im, 8).unwrap();
        let direct =
            compute_glcm(GridView::of_image(&im), directions_2d()[0], 8, false, 1).unwrap();
        assert_eq!(s.timesteps[0], direct.probs);
    }

    #[test]
    fn sequence_2_5d_shapes() {
        let v = volume([5, 3, 3], 4, vec![0; 45]);
        let s = sequence_2_5d(&v, 4).unwrap();
        assert_eq!((s.len(), s.feature_len), (5, 8 * 16));
        for ts in &s.timesteps {
            for block in ts.chunks(16) {
                assert_eq!(block[0], 1.0);
                assert!(block[1..].iter().all(|&x| x == 0.0));
            }
        }
        let mut vox = vec![1u16; 9];
        vox.extend(vec![1u16; 9]);
        let v = volume([2, 3, 3], 4, vox);
        let s = sequence_2_5d(&v, 4).unwrap();
        assert_eq!(s.timesteps[0], s.timesteps[1]);
    }

    #[test]
    fn sequence_3d_and_direction_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_volume(&mut rng, [3, 4, 4], 4);
        let s = sequence_3d(&v, 4).unwrap();
        assert_eq!((s.len(), s.feature_len), (1, 13 * 16));
        let stacked = stack_by_direction(&v, 4).unwrap();
        for d in 0..13 {
            assert_eq!(stacked.timesteps[d], s.timesteps[0][d * 16..(d + 1) * 16]);
        }

        let plane: Vec<u16> = (0..48).map(|_| rng.gen_range(0..4)).collect();
        let v = volume([6, 4, 4], 4, plane.iter().chain(&plane).copied().collect());
        let s = sequence_3d(&v, 4).unwrap();
        assert_eq!(s.timesteps[0], s.timesteps[1]);
        let stacked = stack_by_direction(&v, 4).unwrap();
        assert_eq!((stacked.len(), stacked.feature_len), (13, 32));
        for d in 0..13 {
            for vs in 0..2 {
                assert_eq!(
                    stacked.timesteps[d][vs * 16..(vs + 1) * 16],
                    s.timesteps[vs][d * 16..(d + 1) * 16]
                );
            }
        }
    }

    #[test]
    fn random_6x4x4_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_volume(&mut rng, [6, 4, 4], 4);
        let blocks = blocks_3d(&v, GlcmOptions::new(4), None).unwrap();
        for (k, vs) in partition_vs(6).iter().enumerate() {
            let sub = volume(
                [3, 4, 4],
                4,
                v.voxels()[vs.start * 16..(vs.start + 3) * 16].to_vec(),
            );
            for (g, d) in blocks.timesteps[k].iter().zip(directions_3d()) {
                assert_eq!(g.counts, naive_counts(&sub, d, 4, 1));
            }
        }
    }

    #[test]
    fn descriptor_sequence_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_volume(&mut rng, [6, 5, 5], 4);
        let b3 = blocks_3d(&v, GlcmOptions::new(4), None).unwrap();
        let d3 = sequence_descriptors(&b3);
        assert_eq!(d3.feature_len, 208);
        let h = haralick(&b3.timesteps[1][4]).unwrap();
        assert_eq!(
            d3.timesteps[1][4 * 16..5 * 16],
            h.select(&Descriptor::ALL)[..]
        );

        let b2 = blocks_2_5d(&v, GlcmOptions::new(4), None).unwrap();
        assert_eq!(sequence_descriptors(&b2).feature_len, 128);

        // a one-slice space has empty through-plane matrices
        let v = random_volume(&mut rng, [4, 5, 5], 4);
        let d = sequence_descriptors(&blocks_3d(&v, GlcmOptions::new(4), None).unwrap());
        assert!(d.timesteps[1][2 * 16..3 * 16].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pad_front_and_tensor_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = random_volume(&mut rng, [2, 3, 3], 2);
        let mut s = sequence_2_5d(&v, 2).unwrap();
        s.pad_front(5);
        assert_eq!((s.len(), s.padding, s.real_len()), (5, 3, 2));
        assert!(s.timesteps[0].iter().all(|&x| x == 0.0));

        let mut buf = Vec::new();
        s.write_tensor(&mut buf).unwrap();
        assert!(buf.starts_with(b"slices_2_5d,5,32,2\n"));
        let back = GlcmSequence::read_tensor(&buf[..]).unwrap();
        assert_eq!(back.timesteps, s.timesteps);
        assert!(GlcmSequence::read_tensor(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn order_independent_under_thread_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = random_volume(&mut rng, [9, 6, 6], 8);
        let run = |n| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| blocks_3d(&v, GlcmOptions::new(8), None).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    proptest! {
        #[test]
        fn transpose_duality_and_symmetric_mode(
            seed in 0u64..10_000, d in 1usize..5, h in 1usize..6, w in 1usize..6, k in 0usize..13,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_volume(&mut rng, [d, h, w], 5);
            let dir = directions_3d()[k];
            let grid = GridView::of_volume(&v);
            let fwd = compute_glcm(grid, dir, 5, false, 1).unwrap();
            let back = compute_glcm(grid, dir.negate(), 5, false, 1).unwrap();
            let sym = compute_glcm(grid, dir, 5, true, 1).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    prop_assert_eq!(fwd.count(i, j), back.count(j, i));
                    prop_assert_eq!(sym.count(i, j), fwd.count(i, j) + back.count(i, j));
                    prop_assert_eq!(sym.prob(i, j), sym.prob(j, i));
                }
            }
            if !fwd.is_empty() {
                prop_assert!((fwd.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn feature_bookkeeping(seed in 0u64..10_000, d in 1usize..10, hw in 2usize..6, g in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_volume(&mut rng, [d, hw, hw], g as u16);
            let s3 = sequence_3d(&v, g).unwrap();
            prop_assert_eq!(s3.len(), d.div_ceil(3));
            prop_assert_eq!(s3.feature_len, 13 * g * g);
            let s25 = sequence_2_5d(&v, g).unwrap();
            prop_assert_eq!((s25.len(), s25.feature_len), (d, 8 * g * g));
            let sd = stack_by_direction(&v, g).unwrap();
            prop_assert_eq!((sd.len(), sd.feature_len), (13, d.div_ceil(3) * g * g));
            prop_assert!(s3.timesteps.iter().all(|t| t.len() == s3.feature_len));
        }
    }
}
