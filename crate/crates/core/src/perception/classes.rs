use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Floorplan, UnknownClass};

/// Object categories a detection can fall into. A class may carry several.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    TargetEligible,
    Relational,
    Obstacle,
    /// Scene structure: door, opening, wall, floor, ceiling.
    Extension,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    #[serde(rename = "class")]
    pub name: String,
    pub tags: Vec<Tag>,
    /// Average width, height, depth in metres.
    pub avg_dims_m: [f64; 3],
    #[serde(default)]
    pub restricted: bool,
}

impl ClassInfo {
    pub fn has(&self, tag: Tag) -> bool {
        self.tags.contains(&tag)
    }

    pub fn frontal_area(&self) -> f64 {
        self.avg_dims_m[0] * self.avg_dims_m[1]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ClassTableError {
    #[error("class {0:?} is listed more than once")]
    Duplicate(String),
    #[error("class {class:?} has non-positive dimensions")]
    BadDims { class: String },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassTable {
    by_name: BTreeMap<String, ClassInfo>,
}

pub const DOOR: &str = "door";
pub const OPENING: &str = "opening";
pub const WALL: &str = "wall";
pub const FLOOR: &str = "floor";
pub const CEILING: &str = "ceiling";

impl ClassTable {
    pub fn new(classes: Vec<ClassInfo>) -> Result<Self, ClassTableError> {
        let mut by_name = BTreeMap::new();
        for c in classes {
            if c.avg_dims_m.iter().any(|&d| !(d > 0.0)) {
                return Err(ClassTableError::BadDims { class: c.name });
            }
            if by_name.contains_key(&c.name) {
                return Err(ClassTableError::Duplicate(c.name));
            }
            by_name.insert(c.name.clone(), c);
        }
        Ok(Self { by_name })
    }

    pub fn get(&self, name: &str) -> Option<&ClassInfo> {
        self.by_name.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&ClassInfo, UnknownClass> {
        self.get(name).ok_or_else(|| UnknownClass(name.into()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassInfo> {
        self.by_name.values()
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn has_tag(&self, name: &str, tag: Tag) -> bool {
        self.get(name).is_some_and(|c| c.has(tag))
    }

    pub fn is_extension(&self, name: &str) -> bool {
        self.has_tag(name, Tag::Extension)
    }

    pub fn is_opening(&self, name: &str) -> bool {
        name == DOOR || name == OPENING
    }

    pub fn is_restricted(&self, name: &str) -> bool {
        self.get(name).is_some_and(|c| c.restricted)
    }

    /// Class name to average dimensions, as stored alongside learned relations.
    pub fn vocabulary(&self) -> BTreeMap<String, [f64; 3]> {
        self.by_name.iter().map(|(k, v)| (k.clone(), v.avg_dims_m)).collect()
    }

    /// Every class placed in the plan must be known.
    pub fn check_plan(&self, plan: &Floorplan) -> Result<(), UnknownClass> {
        for name in plan.classes() {
            self.require(name)?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) fn test_table() -> ClassTable {
    use alloc::vec;
    let c = |name: &str, tags: Vec<Tag>, dims: [f64; 3], restricted: bool| ClassInfo {
        name: name.into(),
        tags,
        avg_dims_m: dims,
        restricted,
    };
    use Tag::*;
    ClassTable::new(vec![
        c("cup", vec![TargetEligible, Relational], [0.08, 0.10, 0.08], false),
        c("bottle", vec![TargetEligible, Relational], [0.08, 0.25, 0.08], false),
        c("table", vec![Relational, Obstacle], [1.2, 0.75, 0.8], false),
        c("chair", vec![Relational, Obstacle], [0.45, 0.90, 0.5], false),
        c("tv", vec![TargetEligible, Relational], [1.0, 0.6, 0.1], false),
        c("orange", vec![TargetEligible, Relational], [0.08, 0.08, 0.08], false),
        c("sink", vec![Relational, Obstacle], [0.6, 0.9, 0.5], false),
        c("fridge", vec![Relational, Obstacle], [0.7, 1.8, 0.7], false),
        c("server_rack", vec![Obstacle], [0.6, 2.0, 1.0], true),
        c("door", vec![Extension], [0.9, 2.0, 0.1], false),
        c("opening", vec![Extension], [1.0, 2.0, 0.1], false),
        c("wall", vec![Extension], [1.0, 2.5, 0.1], false),
        c("floor", vec![Extension], [1.0, 0.01, 1.0], false),
        c("ceiling", vec![Extension], [1.0, 0.01, 1.0], false),
    ])
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn duplicates_rejected() {
        let c = ClassInfo { name: "cup".into(), tags: vec![], avg_dims_m: [0.1, 0.1, 0.1], restricted: false };
        assert_eq!(ClassTable::new(vec![c.clone(), c]), Err(ClassTableError::Duplicate("cup".into())));
    }

    #[test]
    fn tags_and_areas() {
        let t = test_table();
        assert!(t.is_extension("wall"));
        assert!(!t.is_extension("cup"));
        assert!(t.is_restricted("server_rack"));
        assert!((t.get("chair").unwrap().frontal_area() - 0.405).abs() < 1e-12);
        assert!(t.require("unicorn").is_err());
    }
}
