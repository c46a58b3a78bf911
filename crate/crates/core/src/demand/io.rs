use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{validate_record, DemandError, Scenario, ScenarioName, VehicleClass, VehicleRecord, DEFAULT_DURATION};
use crate::net::{IntersectionModel, LaneId};

const HEADER: [&str; 5] = ["vehicle_id", "entry_time_s", "start_lane", "end_lane", "vclass"];

/// Rounds to the dataset's 0.1 s resolution.
pub(crate) fn quantize(t: f64) -> f64 {
    (t * 10.0).round() / 10.0
}

/// Loads a scenario file. The scenario name is taken from the file stem.
pub fn load_scenario(path: impl AsRef<Path>, model: &IntersectionModel) -> Result<Scenario, DemandError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| ScenarioName::parse(&s.to_string_lossy()))
        .unwrap_or_else(|| ScenarioName::Custom("unnamed".into()));
    let file = File::open(path)
        .map_err(|e| DemandError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_scenario(file, model, name)
}

/// Parses CSV text. Rows may come in any order; the result is time-sorted.
pub fn parse_scenario<R: Read>(reader: R, model: &IntersectionModel, name: ScenarioName) -> Result<Scenario, DemandError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DemandError::Parse {
            row: 1,
            column: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut cols = [0usize; 4];
    for (slot, name) in cols.iter_mut().zip(&HEADER[..4]) {
        *slot = col(name).ok_or_else(|| DemandError::Parse {
            row: 1,
            column: name.to_string(),
            message: "missing required column".into(),
        })?;
    }
    let vclass_col = col("vclass");
    if let Some(extra) = headers.iter().find(|h| !HEADER.contains(h)) {
        return Err(DemandError::Parse {
            row: 1,
            column: extra.to_string(),
            message: "unknown column".into(),
        });
    }

    let mut records = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for result in rdr.records() {
        let rec = result.map_err(|e| DemandError::Parse {
            row: e.position().map(|p| p.line()).unwrap_or(0),
            column: "-".into(),
            message: e.to_string(),
        })?;
        let row = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize, message: String| DemandError::Parse {
            row,
            column: HEADER[i].to_string(),
            message,
        };
        let vehicle_id: u64 = field(cols[0])
            .parse()
            .map_err(|e| bad(0, format!("`{}`: {e}", field(cols[0]))))?;
        let entry_time: f64 = field(cols[1])
            .parse()
            .map_err(|e| bad(1, format!("`{}`: {e}", field(cols[1]))))?;
        if !(entry_time >= 0.0 && entry_time.is_finite()) {
            return Err(bad(1, format!("entry time {entry_time} must be finite and >= 0")));
        }
        let vclass = match vclass_col {
            Some(c) => field(c).parse::<VehicleClass>().map_err(|e| bad(4, e))?,
            None => VehicleClass::Hv,
        };
        if !seen.insert(vehicle_id) {
            return Err(bad(0, format!("duplicate vehicle id {vehicle_id}")));
        }
        let r = VehicleRecord {
            vehicle_id,
            entry_time: quantize(entry_time),
            start_lane: LaneId::new(field(cols[2])),
            end_lane: LaneId::new(field(cols[3])),
            vclass,
        };
        validate_record(model, &r, row)?;
        records.push(r);
    }
    let last = records.iter().map(|r| r.entry_time).fold(0.0, f64::max);
    let duration = if last <= DEFAULT_DURATION {
        DEFAULT_DURATION
    } else {
        (last / 60.0).ceil() * 60.0
    };
    let mut s = Scenario {
        name,
        intersection: model.name.clone(),
        records,
        duration,
    };
    s.sort();
    Ok(s)
}

pub fn write_scenario<W: Write>(s: &Scenario, writer: W) -> Result<(), DemandError> {
    let mut w = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| DemandError::Io(std::io::Error::other(e));
    w.write_record(HEADER).map_err(to_io)?;
    for r in &s.records {
        w.write_record([
            r.vehicle_id.to_string().as_str(),
            format!("{:.1}", r.entry_time).as_str(),
            r.start_lane.as_str(),
            r.end_lane.as_str(),
            r.vclass.code(),
        ])
        .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), DemandError> {
    write_scenario(s, File::create(path)?)
}
