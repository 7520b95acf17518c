//! JSON and JSONL file handling for the runner.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::detection::{Detection2D, DetectionRecord};
use crate::error::{Error, Result};
use crate::geometry::{PoseBuffer, PoseRecord, TimedPose};
use crate::simulator::{GroundTruthFrame, SimOutput};
use crate::tracker::FrameReport;

/// Reads one JSON value per non-blank line; errors carry the 1-based line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let name = path.display().to_string();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            source_name: name.clone(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection2D>> {
    read_jsonl::<DetectionRecord>(path)?
        .into_iter()
        .map(Detection2D::try_from)
        .collect()
}

pub fn load_poses(path: &Path) -> Result<PoseBuffer> {
    let poses = read_jsonl::<PoseRecord>(path)?
        .into_iter()
        .map(TimedPose::try_from)
        .collect::<Result<Vec<_>>>()?;
    PoseBuffer::new(poses)
}

pub fn load_reports(path: &Path) -> Result<Vec<FrameReport>> {
    read_jsonl(path)
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthFrame>> {
    read_jsonl(path)
}

/// File names written by [`write_sim_output`].
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const POSES_FILE: &str = "poses.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";
pub const MAP_FILE: &str = "map.json";
pub const CALIB_DIR: &str = "calib";
pub const CONFIG_FILE: &str = "pipeline_config.json";

/// Writes the simulated streams, the map, one calibration file per camera
/// and a matching pipeline config into `dir`.
pub fn write_sim_output(out: &SimOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join(CALIB_DIR))?;
    write_jsonl(&dir.join(DETECTIONS_FILE), &out.detections)?;
    write_jsonl(&dir.join(POSES_FILE), &out.poses)?;
    write_jsonl(&dir.join(GROUND_TRUTH_FILE), &out.ground_truth)?;
    write_json(&dir.join(MAP_FILE), &out.map)?;
    for cam in &out.cameras {
        write_json(&dir.join(CALIB_DIR).join(format!("{}.json", cam.camera_id)), &cam.to_calibration())?;
    }
    write_json(&dir.join(CONFIG_FILE), &out.config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "{\"t\": 1.0, \"tracks\": []}\n\n{\"t\": oops}\n").unwrap();
        match load_reports(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let frames = vec![
            FrameReport { t: 0.1, tracks: vec![] },
            FrameReport { t: 0.2, tracks: vec![] },
        ];
        write_jsonl(&p, &frames).unwrap();
        assert_eq!(load_reports(&p).unwrap(), frames);
    }
}
