#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;

use semnav_core::perception::{ClassInfo, ClassTable, Tag};
use semnav_core::world::{Cell, Floorplan, FloorplanDoc, HeightClass, ObjectDoc};

fn info(name: &str, tags: &[Tag], dims: [f64; 3], restricted: bool) -> ClassInfo {
    ClassInfo { name: name.into(), tags: tags.to_vec(), avg_dims_m: dims, restricted }
}

/// Household classes used by the authored plans, plus `c0..c7` for generated corpora.
pub fn classes() -> ClassTable {
    use Tag::*;
    let mut v = vec![
        info("cup", &[TargetEligible, Relational], [0.08, 0.10, 0.08], false),
        info("bottle", &[TargetEligible, Relational], [0.08, 0.25, 0.08], false),
        info("table", &[Relational, Obstacle], [1.2, 0.75, 0.8], false),
        info("chair", &[Relational, Obstacle], [0.45, 0.90, 0.5], false),
        info("tv", &[TargetEligible, Relational], [1.0, 0.6, 0.1], false),
        info("orange", &[TargetEligible, Relational], [0.08, 0.08, 0.08], false),
        info("sofa", &[Relational, Obstacle], [2.0, 0.9, 0.9], false),
        info("server_rack", &[Obstacle], [0.6, 2.0, 1.0], true),
        info("door", &[Extension], [0.9, 2.0, 0.1], false),
        info("opening", &[Extension], [1.0, 2.0, 0.1], false),
        info("wall", &[Extension], [1.0, 2.5, 0.1], false),
        info("floor", &[Extension], [1.0, 0.01, 1.0], false),
        info("ceiling", &[Extension], [1.0, 0.01, 1.0], false),
    ];
    for i in 0..8 {
        let s = 0.1 + 0.1 * i as f64;
        v.push(info(&format!("c{i}"), &[TargetEligible, Relational], [s, s, s], false));
    }
    ClassTable::new(v).unwrap()
}

pub fn obj(class: &str, anchor: [i32; 2], height: HeightClass, obstacle: bool) -> ObjectDoc {
    ObjectDoc { class: class.into(), anchor, footprint: vec![], height_class: height, on_top_of: None, restricted: false, obstacle }
}

/// A plan from text rows, `#` for wall and `.` for floor, with one zone covering everything.
pub fn plan<S: AsRef<str>>(rows: &[S], objects: Vec<ObjectDoc>) -> Floorplan {
    let (w, h) = (rows[0].as_ref().len(), rows.len());
    let doc = FloorplanDoc {
        name: "authored".into(),
        width: w,
        height: h,
        cells: rows.iter().map(|r| r.as_ref().to_string()).collect(),
        zones: BTreeMap::from([("office".to_string(), vec![[0, 0, w as i32 - 1, h as i32 - 1]])]),
        doors: vec![],
        objects,
        cell_size_m: 0.5,
        restricted_zones: vec![],
        start: None,
        goal: None,
        target: None,
    };
    Floorplan::from_doc(&doc).unwrap()
}

/// Walled rectangle with free interior.
pub fn room(w: usize, h: usize) -> Vec<String> {
    (0..h)
        .map(|y| {
            (0..w)
                .map(|x| if x == 0 || y == 0 || x == w - 1 || y == h - 1 { '#' } else { '.' })
                .collect()
        })
        .collect()
}

/// 10x10 plan with interior walls, two obstacles and a cup.
const ROWS: [&str; 10] = [
    "##########",
    "#........#",
    "#..#.....#",
    "#..#..#..#",
    "#.....#..#",
    "####..#..#",
    "#........#",
    "#..##....#",
    "#........#",
    "##########",
];

pub fn lattice_plan() -> Floorplan {
    plan(
        &ROWS,
        vec![
            obj("table", [7, 2], HeightClass::Surface, true),
            obj("chair", [2, 6], HeightClass::Tall, true),
            obj("cup", [5, 8], HeightClass::Floor, false),
        ],
    )
}

pub fn open_cell(plan: &Floorplan, c: Cell) -> bool {
    plan.in_bounds(c) && !plan.is_wall(c) && plan.obstacles_at(c).is_empty()
}
