//! Manhattan and nested Manhattan street systems, stationary and Palm.
//!
//! A Manhattan grid is the union of horizontal lines at the arrivals of one
//! renewal process and vertical lines at the arrivals of another. The nested
//! grid adds, inside every block of a main grid, an independent side-street
//! Manhattan grid clipped to the block.
//!
//! The Palm samplers pick which family carries the origin with probability
//! proportional to its street intensity and then use the Palm renewal process
//! for that family only.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::distributions::{InterArrival, InterArrivalSpec};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::renewal::{sample_palm_renewal, sample_stationary_renewal, RenewalRealization};
use crate::rng::{derive_seed, substream, RandomStream};

const PALM_BLOCK_TAG: u64 = 0x5041_4c4d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Main,
    Side,
}

/// Which family of lines carries the origin in a Palm Manhattan grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PalmBranch {
    OnHorizontal,
    OnVertical,
}

/// Branch taken by the nested Palm sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NestedBranch {
    /// Origin on a main street; all side grids stationary.
    Main(PalmBranch),
    /// Main grid stationary; origin on a side street of its block.
    Side(PalmBranch),
}

impl NestedBranch {
    pub fn palm_branch(&self) -> PalmBranch {
        match *self {
            NestedBranch::Main(b) | NestedBranch::Side(b) => b,
        }
    }
}

/// Axis-aligned street piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Endpoint with the smaller running coordinate.
    pub start: Point,
    pub end: Point,
    pub orientation: Orientation,
    pub provenance: Provenance,
}

impl Segment {
    pub fn horizontal(y: f64, x0: f64, x1: f64, provenance: Provenance) -> Self {
        Segment {
            start: Point::new(x0, y),
            end: Point::new(x1, y),
            orientation: Orientation::Horizontal,
            provenance,
        }
    }

    pub fn vertical(x: f64, y0: f64, y1: f64, provenance: Provenance) -> Self {
        Segment {
            start: Point::new(x, y0),
            end: Point::new(x, y1),
            orientation: Orientation::Vertical,
            provenance,
        }
    }

    pub fn length(&self) -> f64 {
        match self.orientation {
            Orientation::Horizontal => self.end.x - self.start.x,
            Orientation::Vertical => self.end.y - self.start.y,
        }
    }

    /// The fixed coordinate: `y` of a horizontal segment, `x` of a vertical one.
    pub fn level(&self) -> f64 {
        match self.orientation {
            Orientation::Horizontal => self.start.y,
            Orientation::Vertical => self.start.x,
        }
    }

    /// Running-coordinate interval.
    pub fn span(&self) -> (f64, f64) {
        match self.orientation {
            Orientation::Horizontal => (self.start.x, self.end.x),
            Orientation::Vertical => (self.start.y, self.end.y),
        }
    }

    /// Point at arc length `t` from `start`.
    pub fn point_at(&self, t: f64) -> Point {
        match self.orientation {
            Orientation::Horizontal => Point::new(self.start.x + t, self.start.y),
            Orientation::Vertical => Point::new(self.start.x, self.start.y + t),
        }
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        let (lo, hi) = self.span();
        let (along, across) = match self.orientation {
            Orientation::Horizontal => (p.x, p.y - self.start.y),
            Orientation::Vertical => (p.y, p.x - self.start.x),
        };
        let off = if along < lo {
            lo - along
        } else if along > hi {
            along - hi
        } else {
            0.0
        };
        off.hypot(across)
    }

    pub fn contains(&self, p: Point) -> bool {
        let (lo, hi) = self.span();
        match self.orientation {
            Orientation::Horizontal => p.y == self.start.y && p.x >= lo && p.x <= hi,
            Orientation::Vertical => p.x == self.start.x && p.y >= lo && p.y <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManhattanGrid {
    pub vertical_xs: RenewalRealization,
    pub horizontal_ys: RenewalRealization,
    pub window_half_width: f64,
}

impl ManhattanGrid {
    pub fn window(&self) -> Rect {
        Rect::square(self.window_half_width)
    }

    pub fn has_street_through_origin(&self) -> bool {
        self.vertical_xs.contains_zero() || self.horizontal_ys.contains_zero()
    }
}

/// Side-street grid of one block, already clipped to the block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGrid {
    pub rect: Rect,
    pub vertical_xs: Vec<f64>,
    pub horizontal_ys: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedManhattanGrid {
    pub main: ManhattanGrid,
    pub blocks: Vec<BlockGrid>,
    pub side_spec_h: InterArrivalSpec,
    pub side_spec_v: InterArrivalSpec,
}

impl NestedManhattanGrid {
    /// Index of the block whose closed rectangle contains `p`.
    pub fn block_containing(&self, p: Point) -> Option<usize> {
        self.blocks.iter().position(|b| b.rect.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreetSystem {
    Manhattan(ManhattanGrid),
    Nested(NestedManhattanGrid),
}

impl StreetSystem {
    pub fn main(&self) -> &ManhattanGrid {
        match self {
            StreetSystem::Manhattan(g) => g,
            StreetSystem::Nested(n) => &n.main,
        }
    }

    pub fn window_half_width(&self) -> f64 {
        self.main().window_half_width
    }

    pub fn window(&self) -> Rect {
        self.main().window()
    }

    /// Maximal street segments inside `clip`, collinear overlaps merged.
    pub fn segments(&self, clip: &Rect) -> Vec<Segment> {
        segments(self, clip)
    }

    /// Exact predicate: `p` lies on a street inside the window.
    pub fn contains_point(&self, p: Point) -> bool {
        if !self.window().contains(p) {
            return false;
        }
        let main = self.main();
        if main.vertical_xs.points.contains(&p.x) || main.horizontal_ys.points.contains(&p.y) {
            return true;
        }
        match self {
            StreetSystem::Manhattan(_) => false,
            StreetSystem::Nested(n) => n.blocks.iter().any(|b| {
                b.rect.contains(p) && (b.vertical_xs.contains(&p.x) || b.horizontal_ys.contains(&p.y))
            }),
        }
    }

    /// JSON dump: main coordinates plus per-block side coordinates.
    pub fn to_json(&self) -> serde_json::Value {
        let main = self.main();
        let blocks: Vec<serde_json::Value> = match self {
            StreetSystem::Manhattan(_) => Vec::new(),
            StreetSystem::Nested(n) => n
                .blocks
                .iter()
                .map(|b| {
                    json!({
                        "rect": [b.rect.x0, b.rect.y0, b.rect.x1, b.rect.y1],
                        "vertical_xs": b.vertical_xs,
                        "horizontal_ys": b.horizontal_ys,
                    })
                })
                .collect(),
        };
        json!({
            "window_half_width": main.window_half_width,
            "vertical_xs": main.vertical_xs.points,
            "horizontal_ys": main.horizontal_ys.points,
            "blocks": blocks,
        })
    }
}

/// Street intensities (expected street length per unit area).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intensities {
    pub gamma_h: f64,
    pub gamma_v: f64,
    pub gamma: f64,
    pub gamma_1: f64,
    pub gamma_bar: f64,
}

pub fn intensities(
    horizontal: &InterArrival,
    vertical: &InterArrival,
    side: Option<(&InterArrival, &InterArrival)>,
) -> Intensities {
    let gamma_h = horizontal.intensity();
    let gamma_v = vertical.intensity();
    let gamma = gamma_h + gamma_v;
    let gamma_1 = side.map_or(0.0, |(h, v)| h.intensity() + v.intensity());
    Intensities {
        gamma_h,
        gamma_v,
        gamma,
        gamma_1,
        gamma_bar: gamma + gamma_1,
    }
}

/// Gap laws of the two line families of a Manhattan grid.
#[derive(Debug, Clone)]
pub struct GridLaws {
    pub horizontal: InterArrival,
    pub vertical: InterArrival,
}

impl GridLaws {
    pub fn new(horizontal: InterArrivalSpec, vertical: InterArrivalSpec) -> Result<Self> {
        Ok(GridLaws {
            horizontal: InterArrival::new(horizontal)?,
            vertical: InterArrival::new(vertical)?,
        })
    }

    pub fn intensities(&self) -> Intensities {
        intensities(&self.horizontal, &self.vertical, None)
    }

    /// `gamma_h / gamma`, the probability that the Palm origin sits on a horizontal line.
    pub fn horizontal_weight(&self) -> f64 {
        let i = self.intensities();
        i.gamma_h / i.gamma
    }
}

#[derive(Debug, Clone)]
pub struct NestedLaws {
    pub main: GridLaws,
    pub side: GridLaws,
}

impl NestedLaws {
    pub fn intensities(&self) -> Intensities {
        intensities(
            &self.main.horizontal,
            &self.main.vertical,
            Some((&self.side.horizontal, &self.side.vertical)),
        )
    }

    /// `gamma / gamma_bar`, the probability that the Palm origin sits on a main street.
    pub fn main_weight(&self) -> f64 {
        let i = self.intensities();
        i.gamma / i.gamma_bar
    }
}

pub fn sample_manhattan(laws: &GridLaws, w: f64, rng: &mut RandomStream) -> Result<ManhattanGrid> {
    let horizontal_ys = sample_stationary_renewal(&laws.horizontal, w, rng)?;
    let vertical_xs = sample_stationary_renewal(&laws.vertical, w, rng)?;
    Ok(ManhattanGrid {
        vertical_xs,
        horizontal_ys,
        window_half_width: w,
    })
}

/// Palm Manhattan grid: with probability `gamma_h / gamma` the horizontal
/// coordinates are a Palm renewal process and the vertical ones stationary,
/// otherwise the other way round.
pub fn sample_manhattan_palm(laws: &GridLaws, w: f64, rng: &mut RandomStream) -> Result<(ManhattanGrid, PalmBranch)> {
    let u: f64 = rng.random();
    let branch = if u <= laws.horizontal_weight() {
        PalmBranch::OnHorizontal
    } else {
        PalmBranch::OnVertical
    };
    let (horizontal_ys, vertical_xs) = match branch {
        PalmBranch::OnHorizontal => (
            sample_palm_renewal(&laws.horizontal, w, rng)?,
            sample_stationary_renewal(&laws.vertical, w, rng)?,
        ),
        PalmBranch::OnVertical => (
            sample_stationary_renewal(&laws.horizontal, w, rng)?,
            sample_palm_renewal(&laws.vertical, w, rng)?,
        ),
    };
    Ok((
        ManhattanGrid {
            vertical_xs,
            horizontal_ys,
            window_half_width: w,
        },
        branch,
    ))
}

/// Block edges along one axis: window boundary plus main-street coordinates.
fn block_edges(coords: &[f64], w: f64) -> Vec<f64> {
    let mut edges = Vec::with_capacity(coords.len() + 2);
    edges.push(-w);
    edges.extend(coords.iter().copied().filter(|&c| c > -w && c < w));
    edges.push(w);
    edges
}

fn block_rects(main: &ManhattanGrid) -> Vec<(u64, u64, Rect)> {
    let w = main.window_half_width;
    let ex = block_edges(&main.vertical_xs.points, w);
    let ey = block_edges(&main.horizontal_ys.points, w);
    let mut rects = Vec::with_capacity((ex.len() - 1) * (ey.len() - 1));
    for (i, xw) in ex.windows(2).enumerate() {
        for (j, yw) in ey.windows(2).enumerate() {
            rects.push((i as u64, j as u64, Rect::new(xw[0], yw[0], xw[1], yw[1])));
        }
    }
    rects
}

fn clip_coords(points: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    points.iter().copied().filter(|&c| c >= lo && c <= hi).collect()
}

/// Stationary side grid of one block, sampled in block-centred coordinates.
fn stationary_block(side: &GridLaws, rect: Rect, rng: &mut RandomStream) -> Result<BlockGrid> {
    let c = rect.center();
    let hx = 0.5 * rect.width();
    let hy = 0.5 * rect.height();
    let xs = sample_stationary_renewal(&side.vertical, hx, rng)?;
    let ys = sample_stationary_renewal(&side.horizontal, hy, rng)?;
    let shift = |pts: &[f64], off: f64, lo: f64, hi: f64| -> Vec<f64> {
        pts.iter().map(|p| p + off).filter(|&p| p >= lo && p <= hi).collect()
    };
    Ok(BlockGrid {
        rect,
        vertical_xs: shift(&xs.points, c.x, rect.x0, rect.x1),
        horizontal_ys: shift(&ys.points, c.y, rect.y0, rect.y1),
    })
}

/// Palm side grid of the block containing the origin.
fn palm_block(side: &GridLaws, rect: Rect, rng: &mut RandomStream) -> Result<(BlockGrid, PalmBranch)> {
    let reach = rect.x0.abs().max(rect.x1.abs()).max(rect.y0.abs()).max(rect.y1.abs());
    let (grid, branch) = sample_manhattan_palm(side, reach, rng)?;
    Ok((
        BlockGrid {
            rect,
            vertical_xs: clip_coords(&grid.vertical_xs.points, rect.x0, rect.x1),
            horizontal_ys: clip_coords(&grid.horizontal_ys.points, rect.y0, rect.y1),
        },
        branch,
    ))
}

fn fill_blocks(
    main: &ManhattanGrid,
    side: &GridLaws,
    block_seed: u64,
    palm_at_origin: bool,
) -> Result<(Vec<BlockGrid>, Option<PalmBranch>)> {
    let rects = block_rects(main);
    let palm_index = if palm_at_origin {
        rects.iter().position(|(_, _, r)| r.contains(Point::ORIGIN))
    } else {
        None
    };
    let mut branch = None;
    let mut blocks = Vec::with_capacity(rects.len());
    for (k, &(i, j, rect)) in rects.iter().enumerate() {
        if Some(k) == palm_index {
            let mut rng = substream(block_seed, &[i, j, PALM_BLOCK_TAG]);
            let (block, b) = palm_block(side, rect, &mut rng)?;
            branch = Some(b);
            blocks.push(block);
        } else {
            let mut rng = substream(block_seed, &[i, j]);
            blocks.push(stationary_block(side, rect, &mut rng)?);
        }
    }
    Ok((blocks, branch))
}

pub fn sample_nested(laws: &NestedLaws, w: f64, rng: &mut RandomStream) -> Result<NestedManhattanGrid> {
    let main = sample_manhattan(&laws.main, w, rng)?;
    let block_seed = derive_seed(rng.random(), &[]);
    let (blocks, _) = fill_blocks(&main, &laws.side, block_seed, false)?;
    Ok(NestedManhattanGrid {
        main,
        blocks,
        side_spec_h: *laws.side.horizontal.spec(),
        side_spec_v: *laws.side.vertical.spec(),
    })
}

/// Palm nested grid: with probability `gamma / gamma_bar` a Palm main grid with
/// stationary side grids, otherwise a stationary main grid whose origin block
/// carries a Palm side grid.
pub fn sample_nested_palm(
    laws: &NestedLaws,
    w: f64,
    rng: &mut RandomStream,
) -> Result<(NestedManhattanGrid, NestedBranch)> {
    let u: f64 = rng.random();
    let on_main = u <= laws.main_weight();
    let (main, main_branch) = if on_main {
        let (g, b) = sample_manhattan_palm(&laws.main, w, rng)?;
        (g, Some(b))
    } else {
        (sample_manhattan(&laws.main, w, rng)?, None)
    };
    let block_seed = derive_seed(rng.random(), &[]);
    let (blocks, side_branch) = fill_blocks(&main, &laws.side, block_seed, !on_main)?;
    let branch = match (main_branch, side_branch) {
        (Some(b), _) => NestedBranch::Main(b),
        (None, Some(b)) => NestedBranch::Side(b),
        (None, None) => unreachable!("the window always contains the origin block"),
    };
    Ok((
        NestedManhattanGrid {
            main,
            blocks,
            side_spec_h: *laws.side.horizontal.spec(),
            side_spec_v: *laws.side.vertical.spec(),
        },
        branch,
    ))
}

fn push_grid_segments(out: &mut Vec<Segment>, xs: &[f64], ys: &[f64], clip: &Rect, provenance: Provenance) {
    if clip.height() > 0.0 {
        for &x in xs.iter().filter(|&&x| x >= clip.x0 && x <= clip.x1) {
            out.push(Segment::vertical(x, clip.y0, clip.y1, provenance));
        }
    }
    if clip.width() > 0.0 {
        for &y in ys.iter().filter(|&&y| y >= clip.y0 && y <= clip.y1) {
            out.push(Segment::horizontal(y, clip.x0, clip.x1, provenance));
        }
    }
}

/// Merges collinear overlapping or touching pieces into maximal segments.
fn merge_collinear(mut raw: Vec<Segment>) -> Vec<Segment> {
    raw.sort_by(|a, b| {
        a.orientation
            .cmp(&b.orientation)
            .then(a.level().total_cmp(&b.level()))
            .then(a.span().0.total_cmp(&b.span().0))
    });
    let mut out: Vec<Segment> = Vec::with_capacity(raw.len());
    for s in raw {
        if let Some(last) = out.last_mut() {
            if last.orientation == s.orientation && last.level() == s.level() && s.span().0 <= last.span().1 {
                if s.span().1 > last.span().1 {
                    last.end = s.end;
                }
                if s.provenance == Provenance::Main {
                    last.provenance = Provenance::Main;
                }
                continue;
            }
        }
        out.push(s);
    }
    out
}

pub fn segments(streets: &StreetSystem, clip: &Rect) -> Vec<Segment> {
    let Some(clip) = clip.intersect(&streets.window()) else {
        return Vec::new();
    };
    let main = streets.main();
    let mut raw = Vec::new();
    push_grid_segments(
        &mut raw,
        &main.vertical_xs.points,
        &main.horizontal_ys.points,
        &clip,
        Provenance::Main,
    );
    if let StreetSystem::Nested(n) = streets {
        for b in &n.blocks {
            if let Some(bc) = b.rect.intersect(&clip) {
                push_grid_segments(&mut raw, &b.vertical_xs, &b.horizontal_ys, &bc, Provenance::Side);
            }
        }
    }
    merge_collinear(raw)
}

pub fn total_length(segments: &[Segment]) -> f64 {
    segments.iter().map(Segment::length).sum()
}

/// Serializable description of a street model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreetModel {
    Manhattan {
        horizontal: InterArrivalSpec,
        vertical: InterArrivalSpec,
    },
    Nested {
        horizontal: InterArrivalSpec,
        vertical: InterArrivalSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        side_horizontal: Option<InterArrivalSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        side_vertical: Option<InterArrivalSpec>,
    },
}

/// Validated street model.
#[derive(Debug, Clone)]
pub enum StreetLaws {
    Manhattan(GridLaws),
    Nested(NestedLaws),
}

impl StreetLaws {
    pub fn new(model: &StreetModel) -> Result<Self> {
        match model {
            StreetModel::Manhattan { horizontal, vertical } => {
                Ok(StreetLaws::Manhattan(GridLaws::new(*horizontal, *vertical)?))
            }
            StreetModel::Nested {
                horizontal,
                vertical,
                side_horizontal,
                side_vertical,
            } => {
                let (sh, sv) = match (side_horizontal, side_vertical) {
                    (Some(h), Some(v)) => (*h, *v),
                    (Some(h), None) => (*h, *h),
                    (None, Some(v)) => (*v, *v),
                    (None, None) => {
                        return Err(Error::InvalidParameter(
                            "nested street model needs side_horizontal or side_vertical".into(),
                        ))
                    }
                };
                Ok(StreetLaws::Nested(NestedLaws {
                    main: GridLaws::new(*horizontal, *vertical)?,
                    side: GridLaws::new(sh, sv)?,
                }))
            }
        }
    }

    pub fn intensities(&self) -> Intensities {
        match self {
            StreetLaws::Manhattan(g) => g.intensities(),
            StreetLaws::Nested(n) => n.intensities(),
        }
    }

    /// Street length per unit area of the whole system.
    pub fn street_intensity(&self) -> f64 {
        self.intensities().gamma_bar
    }

    /// Largest mean gap of any line family.
    pub fn max_mean_gap(&self) -> f64 {
        let grid = |g: &GridLaws| g.horizontal.mean().max(g.vertical.mean());
        match self {
            StreetLaws::Manhattan(g) => grid(g),
            StreetLaws::Nested(n) => grid(&n.main).max(grid(&n.side)),
        }
    }

    pub fn sample_stationary(&self, w: f64, rng: &mut RandomStream) -> Result<StreetSystem> {
        Ok(match self {
            StreetLaws::Manhattan(g) => StreetSystem::Manhattan(sample_manhattan(g, w, rng)?),
            StreetLaws::Nested(n) => StreetSystem::Nested(sample_nested(n, w, rng)?),
        })
    }

    /// Palm street system and the orientation of the street carrying the origin.
    pub fn sample_palm(&self, w: f64, rng: &mut RandomStream) -> Result<(StreetSystem, PalmBranch)> {
        Ok(match self {
            StreetLaws::Manhattan(g) => {
                let (grid, b) = sample_manhattan_palm(g, w, rng)?;
                (StreetSystem::Manhattan(grid), b)
            }
            StreetLaws::Nested(n) => {
                let (grid, b) = sample_nested_palm(n, w, rng)?;
                (StreetSystem::Nested(grid), b.palm_branch())
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::renewal::Flavor;
    use crate::rng::stream;

    fn det(mu: f64) -> InterArrivalSpec {
        InterArrivalSpec::Deterministic { mu }
    }

    fn realization(points: Vec<f64>, w: f64) -> RenewalRealization {
        RenewalRealization {
            points,
            window_half_width: w,
            flavor: Flavor::Stationary,
        }
    }

    fn grid(xs: Vec<f64>, ys: Vec<f64>, w: f64) -> StreetSystem {
        StreetSystem::Manhattan(ManhattanGrid {
            vertical_xs: realization(xs, w),
            horizontal_ys: realization(ys, w),
            window_half_width: w,
        })
    }

    #[test]
    fn intensity_bookkeeping() {
        let laws = GridLaws::new(det(1.0), det(1.0)).unwrap();
        assert_eq!(laws.intensities().gamma, 2.0);
        let laws = GridLaws::new(InterArrivalSpec::Exponential { rate: 0.5 }, det(1.0)).unwrap();
        let i = laws.intensities();
        assert_eq!((i.gamma_h, i.gamma_v, i.gamma), (0.5, 1.0, 1.5));
        let nested = NestedLaws {
            main: GridLaws::new(det(10.0), det(10.0)).unwrap(),
            side: GridLaws::new(det(1.0), det(1.0)).unwrap(),
        };
        let i = nested.intensities();
        assert!((i.gamma - 0.2).abs() < 1e-15);
        assert_eq!(i.gamma_1, 2.0);
        assert!((i.gamma_bar - 2.2).abs() < 1e-15);
    }

    #[test]
    fn unit_square_clip_on_lattice() {
        let s = grid(vec![-1.0, 0.0, 1.0, 2.0], vec![-1.0, 0.0, 1.0, 2.0], 3.0);
        let segs = s.segments(&Rect::new(0.0, 0.0, 1.0, 1.0));
        assert_eq!(segs.len(), 4);
        assert!(segs.iter().all(|s| s.length() == 1.0));
    }

    #[test]
    fn empty_grid_has_no_segments() {
        let s = grid(vec![], vec![], 3.0);
        assert!(s.segments(&s.window()).is_empty());
    }

    #[test]
    fn palm_origin_is_on_a_street() {
        let laws = GridLaws::new(InterArrivalSpec::Exponential { rate: 1.0 }, det(1.0)).unwrap();
        for seed in 0..200 {
            let (g, branch) = sample_manhattan_palm(&laws, 5.0, &mut stream(seed)).unwrap();
            let s = StreetSystem::Manhattan(g.clone());
            assert!(s.contains_point(Point::ORIGIN));
            match branch {
                PalmBranch::OnHorizontal => assert!(g.horizontal_ys.contains_zero()),
                PalmBranch::OnVertical => assert!(g.vertical_xs.contains_zero()),
            }
        }
    }

    #[test]
    fn collinear_overlaps_merge() {
        let raw = vec![
            Segment::horizontal(1.0, 0.0, 2.0, Provenance::Side),
            Segment::horizontal(1.0, 1.0, 3.0, Provenance::Main),
            Segment::horizontal(1.0, 3.0, 4.0, Provenance::Side),
            Segment::horizontal(1.0, 5.0, 6.0, Provenance::Side),
            Segment::vertical(1.0, 0.0, 1.0, Provenance::Side),
        ];
        let merged = merge_collinear(raw);
        assert_eq!(merged.len(), 3);
        let h: Vec<_> = merged.iter().filter(|s| s.orientation == Orientation::Horizontal).collect();
        assert_eq!(h[0].span(), (0.0, 4.0));
        assert_eq!(h[0].provenance, Provenance::Main);
        assert_eq!(h[1].span(), (5.0, 6.0));
    }

    #[test]
    fn nested_lattice_blocks() {
        let laws = NestedLaws {
            main: GridLaws::new(det(10.0), det(10.0)).unwrap(),
            side: GridLaws::new(det(1.0), det(1.0)).unwrap(),
        };
        for seed in 0..20 {
            let n = sample_nested(&laws, 15.0, &mut stream(seed)).unwrap();
            let interior: Vec<_> = n
                .blocks
                .iter()
                .filter(|b| b.rect.x0 > -15.0 && b.rect.x1 < 15.0 && b.rect.y0 > -15.0 && b.rect.y1 < 15.0)
                .collect();
            assert!(!interior.is_empty());
            for b in interior {
                assert!((b.rect.width() - 10.0).abs() < 1e-9 && (b.rect.height() - 10.0).abs() < 1e-9);
                let inner_x = b.vertical_xs.iter().filter(|&&x| x > b.rect.x0 && x < b.rect.x1).count();
                let inner_y = b.horizontal_ys.iter().filter(|&&y| y > b.rect.y0 && y < b.rect.y1).count();
                assert!(inner_x == 9 || inner_x == 10, "{inner_x}");
                assert!(inner_y == 9 || inner_y == 10, "{inner_y}");
            }
        }
    }

    #[test]
    fn side_segments_respect_blocks() {
        let laws = NestedLaws {
            main: GridLaws::new(
                InterArrivalSpec::TruncatedGaussian { mu: 5.0, sigma: 1.0 },
                InterArrivalSpec::Exponential { rate: 0.25 },
            )
            .unwrap(),
            side: GridLaws::new(InterArrivalSpec::Exponential { rate: 1.0 }, det(0.7)).unwrap(),
        };
        for seed in 0..30 {
            let (n, _) = sample_nested_palm(&laws, 12.0, &mut stream(seed)).unwrap();
            let s = StreetSystem::Nested(n.clone());
            assert!(s.contains_point(Point::ORIGIN));
            for b in &n.blocks {
                assert!(b.vertical_xs.iter().all(|&x| x >= b.rect.x0 && x <= b.rect.x1));
                assert!(b.horizontal_ys.iter().all(|&y| y >= b.rect.y0 && y <= b.rect.y1));
            }
            for seg in s.segments(&s.window()).iter().filter(|s| s.provenance == Provenance::Side) {
                let mid = seg.point_at(0.5 * seg.length());
                let block = n.block_containing(mid).expect("side segment inside some block");
                let r = n.blocks[block].rect;
                assert!(r.contains(seg.start) && r.contains(seg.end));
            }
        }
    }

    #[test]
    fn side_branch_origin_inside_block_interior() {
        let laws = NestedLaws {
            main: GridLaws::new(det(10.0), det(10.0)).unwrap(),
            side: GridLaws::new(det(1.0), det(1.0)).unwrap(),
        };
        for seed in 0..100 {
            let (n, branch) = sample_nested_palm(&laws, 20.0, &mut stream(seed)).unwrap();
            if let NestedBranch::Side(_) = branch {
                assert!(!n.main.has_street_through_origin());
                let b = &n.blocks[n.block_containing(Point::ORIGIN).unwrap()];
                assert!(b.vertical_xs.contains(&0.0) || b.horizontal_ys.contains(&0.0));
            } else {
                assert!(n.main.has_street_through_origin());
            }
        }
    }

    #[test]
    fn street_model_defaults_side_specs() {
        let m: StreetModel = serde_json::from_str(
            r#"{"type":"nested","horizontal":{"kind":"deterministic","mu":10},
                "vertical":{"kind":"deterministic","mu":10},
                "side_horizontal":{"kind":"exponential","rate":1}}"#,
        )
        .unwrap();
        let StreetLaws::Nested(n) = StreetLaws::new(&m).unwrap() else {
            panic!("expected nested laws");
        };
        assert_eq!(n.side.vertical.spec(), n.side.horizontal.spec());
        let bare = StreetModel::Nested {
            horizontal: det(1.0),
            vertical: det(1.0),
            side_horizontal: None,
            side_vertical: None,
        };
        assert!(StreetLaws::new(&bare).is_err());
    }

    #[test]
    fn street_system_json_shape() {
        let s = grid(vec![0.5], vec![0.0], 1.0);
        let v = s.to_json();
        assert_eq!(v["vertical_xs"], json!([0.5]));
        assert_eq!(v["horizontal_ys"], json!([0.0]));
        assert_eq!(v["blocks"], json!([]));
    }
}
