//! Plain-text (TOML) intersection descriptions.
//!
//! A description lists lanes, movements, the conflicting movement pairs and
//! an optional fixed-time signal plan. Comments are allowed anywhere and are
//! ignored on load.
//!
//! ```toml
//! name = "WGG"
//! control_zone_radius_m = 30.0
//! conflicts = [["EB_in_1>EB_out_0", "NB_in_1>NB_out_0"]]
//!
//! [[lanes]]
//! id = "EB_in_1"
//! approach = "EB"          # NB | EB | SB | WB (direction of travel)
//! role = "entry"           # entry | exit
//! index = 1                # 0 = leftmost
//! length_m = 150.0
//! turns = ["straight"]
//!
//! [[movements]]
//! id = "EB_in_1>EB_out_0"
//! origin = "EB_in_1"
//! destination = "EB_out_0"
//! turn = "straight"
//! internal_length_m = 30.0
//!
//! [[phases]]
//! duration_s = 7.0
//! green = ["EB_in_1>EB_out_0"]
//! yellow = []
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConflictMatrix, IntersectionModel, IntersectionName, Lane, Movement, MovementId, NetError, PhaseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Description {
    name: IntersectionName,
    #[serde(default = "default_zone")]
    control_zone_radius_m: f64,
    #[serde(default)]
    conflicts: Vec<[MovementId; 2]>,
    lanes: Vec<Lane>,
    movements: Vec<Movement>,
    #[serde(default)]
    phases: Vec<PhaseSpec>,
}

fn default_zone() -> f64 {
    super::DEFAULT_CONTROL_ZONE
}

const HEADER: &str = "\
# Intersection description.
# Lane ids are `<travel direction>_<in|out>_<index>`; index 0 is the leftmost lane.
# Movement ids are `<origin lane>><destination lane>`.
# `conflicts` lists unordered movement pairs that may not share the box.
# `phases` is the fixed-time signal plan; unlisted movements are red.
";

/// Serializes a model to the description format. Output is byte-stable
/// for a given model.
pub fn to_toml(model: &IntersectionModel) -> String {
    let desc = Description {
        name: model.name.clone(),
        control_zone_radius_m: model.control_zone_radius,
        conflicts: model
            .conflicts
            .pairs()
            .map(|(a, b)| [model.movements[a].id.clone(), model.movements[b].id.clone()])
            .collect(),
        lanes: model.lanes.clone(),
        movements: model.movements.clone(),
        phases: model.signal_phases.clone(),
    };
    let body = toml::to_string(&desc).expect("description serializes");
    format!("{HEADER}\n{body}")
}

pub fn from_toml(text: &str) -> Result<IntersectionModel, NetError> {
    let desc: Description = toml::from_str(text).map_err(|e| NetError::Invalid(e.to_string()))?;
    let mut conflicts = ConflictMatrix::empty(desc.movements.len());
    let index_of = |id: &MovementId| {
        desc.movements
            .iter()
            .position(|m| &m.id == id)
            .ok_or_else(|| NetError::UnknownMovement(id.0.clone()))
    };
    for [a, b] in &desc.conflicts {
        let (ia, ib) = (index_of(a)?, index_of(b)?);
        if ia == ib {
            return Err(NetError::Invalid(format!("movement `{a}` listed as conflicting with itself")));
        }
        conflicts.set(ia, ib);
    }
    IntersectionModel::new(
        desc.name,
        desc.lanes,
        desc.movements,
        conflicts,
        desc.control_zone_radius_m,
        desc.phases,
    )
}

pub fn load(path: impl AsRef<Path>) -> Result<IntersectionModel, NetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| NetError::Invalid(format!("{}: {e}", path.display())))?;
    from_toml(&text)
}

pub fn save(model: &IntersectionModel, path: impl AsRef<Path>) -> std::io::Result<()> {
    fs::write(path, to_toml(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::build_intersection;

    #[test]
    fn round_trip_is_exact() {
        for name in [IntersectionName::Wgg, IntersectionName::Wgm] {
            let model = build_intersection(name);
            let text = to_toml(&model);
            let back = from_toml(&text).unwrap();
            assert_eq!(back.lanes, model.lanes);
            assert_eq!(back.movements, model.movements);
            assert_eq!(back.conflicts, model.conflicts);
            assert_eq!(back.signal_phases, model.signal_phases);
            assert_eq!(to_toml(&back), text);
        }
    }

    #[test]
    fn rejects_unknown_movement_in_conflicts() {
        let model = build_intersection(IntersectionName::Wgg);
        let text = to_toml(&model).replacen("conflicts = [", "conflicts = [[\"nope\", \"EB_in_1>EB_out_0\"], ", 1);
        assert!(matches!(from_toml(&text), Err(NetError::UnknownMovement(_))));
    }

    #[test]
    fn custom_names_survive() {
        let model = build_intersection(IntersectionName::Wgg);
        let text = to_toml(&model).replacen("name = \"WGG\"", "name = \"Elm-Main\"", 1);
        let back = from_toml(&text).unwrap();
        assert_eq!(back.name, IntersectionName::Custom("Elm-Main".into()));
    }
}
