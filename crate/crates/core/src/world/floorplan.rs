use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kinematics::{BodyDims, RobotState};
use super::Cell;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tile {
    Free,
    Wall,
}

/// Coarse vertical class used by the occlusion filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightClass {
    #[serde(alias = "floor-level")]
    Floor,
    #[serde(alias = "surface-level")]
    Surface,
    Tall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub class_name: String,
    pub anchor: Cell,
    pub footprint: Vec<Cell>,
    pub height_class: HeightClass,
    /// Index of the supporting instance in [`Floorplan::objects`].
    pub on_top_of: Option<usize>,
    pub restricted: bool,
    pub obstacle: bool,
}

impl ObjectInstance {
    pub fn covers(&self, cell: Cell) -> bool {
        self.footprint.contains(&cell)
    }
}

/// Serialized floorplan document. `cells[y]` is row `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorplanDoc {
    #[serde(default)]
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<String>,
    /// Zone label to inclusive rectangles `[x0, y0, x1, y1]`.
    pub zones: BTreeMap<String, Vec<[i32; 4]>>,
    #[serde(default)]
    pub doors: Vec<[i32; 2]>,
    #[serde(default)]
    pub objects: Vec<ObjectDoc>,
    #[serde(default = "default_cell_size")]
    pub cell_size_m: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub restricted_zones: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<PoseDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<PoseDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

fn default_cell_size() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectDoc {
    pub class: String,
    pub anchor: [i32; 2],
    #[serde(default)]
    pub footprint: Vec<[i32; 2]>,
    pub height_class: HeightClass,
    #[serde(default)]
    pub on_top_of: Option<usize>,
    #[serde(default)]
    pub restricted: bool,
    #[serde(default)]
    pub obstacle: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseDoc {
    pub x: i32,
    pub y: i32,
    #[serde(default)]
    pub heading_deg: u16,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FloorplanError {
    #[error("floorplan must be at least 1x1 (got {width}x{height})")]
    Empty { width: usize, height: usize },
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("row {row} has {found} cells, expected {expected}")]
    RowWidth { row: usize, expected: usize, found: usize },
    #[error("unknown tile {ch:?} at ({x}, {y})")]
    BadTile { x: usize, y: usize, ch: char },
    #[error("zone {zone:?} rectangle {rect:?} leaves the grid")]
    ZoneOutOfBounds { zone: String, rect: [i32; 4] },
    #[error("cell ({x}, {y}) is claimed by zones {first:?} and {second:?}")]
    ZoneOverlap { x: i32, y: i32, first: String, second: String },
    #[error("cell ({x}, {y}) has no zone label")]
    Unzoned { x: i32, y: i32 },
    #[error("restricted zone {0:?} is not declared")]
    UnknownZone(String),
    #[error("door ({x}, {y}) is outside the grid")]
    DoorOutOfBounds { x: i32, y: i32 },
    #[error("door ({x}, {y}) is on a wall cell")]
    DoorOnWall { x: i32, y: i32 },
    #[error("door ({x}, {y}) does not separate two zones")]
    DoorNotBetweenZones { x: i32, y: i32 },
    #[error("object {index} ({class}) has cell ({x}, {y}) outside the grid")]
    ObjectOffGrid { index: usize, class: String, x: i32, y: i32 },
    #[error("object {index} ({class}) has cell ({x}, {y}) on a wall")]
    ObjectOnWall { index: usize, class: String, x: i32, y: i32 },
    #[error("object {index} ({class}) anchor is not part of its footprint")]
    AnchorOutsideFootprint { index: usize, class: String },
    #[error("object {index} ({class}) rests on {support}, which does not exist or does not hold its anchor")]
    BadSupport { index: usize, class: String, support: usize },
    #[error("{which} pose ({x}, {y}) is not a free cell")]
    BadPose { which: &'static str, x: i32, y: i32 },
}

/// Validated, immutable floorplan.
#[derive(Clone, Debug, PartialEq)]
pub struct Floorplan {
    pub name: String,
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    zone_index: Vec<usize>,
    zone_labels: Vec<String>,
    restricted_zones: BTreeSet<usize>,
    doors: BTreeSet<Cell>,
    objects: Vec<ObjectInstance>,
    /// Per cell: the obstacle instances covering it.
    obstacle_cover: Vec<Vec<usize>>,
    cell_size_m: f64,
    start: Option<PoseDoc>,
    goal: Option<PoseDoc>,
    target: Option<String>,
}

impl Floorplan {
    pub fn from_doc(doc: &FloorplanDoc) -> Result<Self, FloorplanError> {
        let (width, height) = (doc.width, doc.height);
        if width == 0 || height == 0 {
            return Err(FloorplanError::Empty { width, height });
        }
        if doc.cells.len() != height {
            return Err(FloorplanError::RowCount { expected: height, found: doc.cells.len() });
        }
        let mut tiles = Vec::with_capacity(width * height);
        for (y, row) in doc.cells.iter().enumerate() {
            let n = row.chars().count();
            if n != width {
                return Err(FloorplanError::RowWidth { row: y, expected: width, found: n });
            }
            for (x, ch) in row.chars().enumerate() {
                tiles.push(match ch {
                    '.' => Tile::Free,
                    '#' => Tile::Wall,
                    _ => return Err(FloorplanError::BadTile { x, y, ch }),
                });
            }
        }

        let mut zone_labels: Vec<String> = doc.zones.keys().cloned().collect();
        zone_labels.sort();
        let mut zone_index = alloc::vec![usize::MAX; width * height];
        for (zi, label) in zone_labels.iter().enumerate() {
            for rect in &doc.zones[label] {
                let [x0, y0, x1, y1] = *rect;
                if x0 > x1 || y0 > y1 || x0 < 0 || y0 < 0 || x1 >= width as i32 || y1 >= height as i32 {
                    return Err(FloorplanError::ZoneOutOfBounds { zone: label.clone(), rect: *rect });
                }
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let i = y as usize * width + x as usize;
                        if zone_index[i] != usize::MAX && zone_index[i] != zi {
                            return Err(FloorplanError::ZoneOverlap {
                                x,
                                y,
                                first: zone_labels[zone_index[i]].clone(),
                                second: label.clone(),
                            });
                        }
                        zone_index[i] = zi;
                    }
                }
            }
        }
        if let Some(i) = zone_index.iter().position(|&z| z == usize::MAX) {
            return Err(FloorplanError::Unzoned { x: (i % width) as i32, y: (i / width) as i32 });
        }
        let mut restricted_zones = BTreeSet::new();
        for z in &doc.restricted_zones {
            match zone_labels.iter().position(|l| l == z) {
                Some(i) => {
                    restricted_zones.insert(i);
                }
                None => return Err(FloorplanError::UnknownZone(z.clone())),
            }
        }

        let mut plan = Floorplan {
            name: doc.name.clone(),
            width,
            height,
            tiles,
            zone_index,
            zone_labels,
            restricted_zones,
            doors: BTreeSet::new(),
            objects: Vec::new(),
            obstacle_cover: alloc::vec![Vec::new(); width * height],
            cell_size_m: doc.cell_size_m,
            start: doc.start,
            goal: doc.goal,
            target: doc.target.clone(),
        };

        for &[x, y] in &doc.doors {
            let c = Cell::new(x, y);
            if !plan.in_bounds(c) {
                return Err(FloorplanError::DoorOutOfBounds { x, y });
            }
            if plan.tile(c) != Some(Tile::Free) {
                return Err(FloorplanError::DoorOnWall { x, y });
            }
            let mut seen = BTreeSet::new();
            seen.insert(plan.zone_index[plan.idx(c)]);
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let n = c.offset(dx, dy);
                if plan.in_bounds(n) {
                    seen.insert(plan.zone_index[plan.idx(n)]);
                } else {
                    seen.insert(usize::MAX);
                }
            }
            if seen.len() < 2 {
                return Err(FloorplanError::DoorNotBetweenZones { x, y });
            }
            plan.doors.insert(c);
        }

        for (index, o) in doc.objects.iter().enumerate() {
            let anchor = Cell::from(o.anchor);
            let mut footprint: Vec<Cell> = o.footprint.iter().map(|&c| Cell::from(c)).collect();
            if footprint.is_empty() {
                footprint.push(anchor);
            }
            for c in core::iter::once(anchor).chain(footprint.iter().copied()) {
                if !plan.in_bounds(c) {
                    return Err(FloorplanError::ObjectOffGrid { index, class: o.class.clone(), x: c.x, y: c.y });
                }
                if plan.tile(c) != Some(Tile::Free) {
                    return Err(FloorplanError::ObjectOnWall { index, class: o.class.clone(), x: c.x, y: c.y });
                }
            }
            if !footprint.contains(&anchor) {
                return Err(FloorplanError::AnchorOutsideFootprint { index, class: o.class.clone() });
            }
            plan.objects.push(ObjectInstance {
                class_name: o.class.clone(),
                anchor,
                footprint,
                height_class: o.height_class,
                on_top_of: o.on_top_of,
                restricted: o.restricted,
                obstacle: o.obstacle,
            });
        }
        for (index, o) in plan.objects.iter().enumerate() {
            if let Some(support) = o.on_top_of {
                let ok = support != index
                    && plan.objects.get(support).is_some_and(|base| base.covers(o.anchor));
                if !ok {
                    return Err(FloorplanError::BadSupport { index, class: o.class_name.clone(), support });
                }
            }
        }
        for (index, o) in plan.objects.iter().enumerate() {
            if o.obstacle {
                for &c in &o.footprint {
                    let i = plan.idx(c);
                    plan.obstacle_cover[i].push(index);
                }
            }
        }
        for (which, pose) in [("start", plan.start), ("goal", plan.goal)] {
            if let Some(p) = pose {
                let c = Cell::new(p.x, p.y);
                if !plan.is_traversable(c) {
                    return Err(FloorplanError::BadPose { which, x: p.x, y: p.y });
                }
            }
        }
        Ok(plan)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size_m(&self) -> f64 {
        self.cell_size_m
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    fn idx(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    pub fn tile(&self, c: Cell) -> Option<Tile> {
        self.in_bounds(c).then(|| self.tiles[self.idx(c)])
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.tile(c) != Some(Tile::Free)
    }

    /// Free and not covered by an obstacle footprint.
    pub fn is_traversable(&self, c: Cell) -> bool {
        self.tile(c) == Some(Tile::Free) && self.obstacle_cover[self.idx(c)].is_empty()
    }

    /// Obstacle instances whose footprint covers `c`.
    pub fn obstacles_at(&self, c: Cell) -> &[usize] {
        if self.in_bounds(c) {
            &self.obstacle_cover[self.idx(c)]
        } else {
            &[]
        }
    }

    pub fn zone_of(&self, c: Cell) -> Option<&str> {
        self.in_bounds(c).then(|| self.zone_labels[self.zone_index[self.idx(c)]].as_str())
    }

    pub fn zones(&self) -> &[String] {
        &self.zone_labels
    }

    pub fn is_restricted_zone(&self, c: Cell) -> bool {
        self.in_bounds(c) && self.restricted_zones.contains(&self.zone_index[self.idx(c)])
    }

    /// Restricted zone cell or restricted object footprint.
    pub fn is_restricted_cell(&self, c: Cell) -> bool {
        self.is_restricted_zone(c) || self.objects.iter().any(|o| o.restricted && o.covers(c))
    }

    pub fn is_door(&self, c: Cell) -> bool {
        self.doors.contains(&c)
    }

    pub fn doors(&self) -> impl Iterator<Item = Cell> + '_ {
        self.doors.iter().copied()
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height as i32)
            .flat_map(move |y| (0..self.width as i32).map(move |x| Cell::new(x, y)))
            .filter(move |&c| self.tile(c) == Some(Tile::Free))
    }

    pub fn start_pose(&self, dims: BodyDims) -> Option<RobotState> {
        self.start.map(|p| RobotState::new(p.x, p.y, p.heading_deg, dims))
    }

    pub fn goal_pose(&self, dims: BodyDims) -> Option<RobotState> {
        self.goal.map(|p| RobotState::new(p.x, p.y, p.heading_deg, dims))
    }

    pub fn default_target(&self) -> Option<&str> {
        self.target.as_deref()
    }

    /// Distinct object classes placed in the plan.
    pub fn classes(&self) -> BTreeSet<&str> {
        self.objects.iter().map(|o| o.class_name.as_str()).collect()
    }
}

#[cfg(test)]
pub(crate) use tests::doc as test_doc;
