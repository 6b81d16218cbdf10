//! Adapter for detectors that run as external processes.
//!
//! The command is invoked with the path of a grayscale PNG appended to its
//! arguments. On success it exits 0 and prints either the path of a
//! probability-map PGM, or JSON boxes `[x0,y0,x1,y1,score]`: one array per
//! line, or one array of arrays.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::Detector;
use crate::corpus::save_gray;
use crate::error::{Error, Result};
use crate::eval::ScoredBox;
use crate::geometry::PixelBox;
use crate::raster::Raster;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    /// Decide per call from the first non-blank output line.
    #[default]
    Auto,
    Map,
    Boxes,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalSpec {
    /// Program followed by its leading arguments.
    pub command: Vec<String>,
    pub output: OutputFormat,
}

pub enum ExternalOutput {
    Map(Raster<f32>),
    Boxes(Vec<ScoredBox>),
}

#[derive(Debug)]
pub struct ExternalDetector {
    spec: ExternalSpec,
    program: PathBuf,
    /// Calls through one handle run one at a time.
    lock: Mutex<()>,
}

fn resolve_program(name: &str) -> Option<PathBuf> {
    let p = Path::new(name);
    if p.components().count() > 1 || p.is_absolute() {
        return p.is_file().then(|| p.to_path_buf());
    }
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|d| d.join(name))
            .find(|c| c.is_file())
    })
}

/// Builds a handle for an external detector after checking that the program
/// exists.
pub fn register_external(spec: ExternalSpec) -> Result<Detector> {
    let first = spec
        .command
        .first()
        .ok_or_else(|| Error::InvalidArgument("external detector command is empty".into()))?;
    let program = resolve_program(first)
        .ok_or_else(|| Error::External(format!("cannot resolve program `{first}`")))?;
    Ok(Detector::External(ExternalDetector {
        spec,
        program,
        lock: Mutex::new(()),
    }))
}

impl ExternalDetector {
    pub fn spec(&self) -> &ExternalSpec {
        &self.spec
    }

    pub fn invoke(&self, image: &Raster<f32>) -> Result<ExternalOutput> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let dir = tempfile::tempdir().map_err(|e| Error::External(format!("temp dir: {e}")))?;
        let input = dir.path().join("input.png");
        save_gray(image, &input)?;
        let out = Command::new(&self.program)
            .args(&self.spec.command[1..])
            .arg(&input)
            .output()
            .map_err(|e| Error::External(format!("{}: {e}", self.program.display())))?;
        if !out.status.success() {
            return Err(Error::External(format!(
                "{} exited with {}: {}",
                self.program.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let stdout = String::from_utf8(out.stdout)
            .map_err(|_| Error::External("adapter output is not UTF-8".into()))?;
        let (h, w) = image.dims();
        let first = stdout.lines().map(str::trim).find(|l| !l.is_empty());
        let format = match (self.spec.output, first) {
            (OutputFormat::Auto, Some(l)) if l.starts_with('[') => OutputFormat::Boxes,
            (OutputFormat::Auto, Some(_)) => OutputFormat::Map,
            (OutputFormat::Auto, None) => {
                return Err(Error::External("adapter printed nothing".into()))
            }
            (f, _) => f,
        };
        match format {
            OutputFormat::Boxes => Ok(ExternalOutput::Boxes(parse_boxes(&stdout, h, w)?)),
            _ => {
                let path = first.ok_or_else(|| Error::External("adapter printed no map path".into()))?;
                let map = load_map(Path::new(path))?;
                if map.dims() != (h, w) {
                    return Err(Error::External(format!(
                        "map is {:?}, image is {:?}",
                        map.dims(),
                        (h, w)
                    )));
                }
                Ok(ExternalOutput::Map(map))
            }
        }
    }
}

/// Reads a probability map image (PGM or PNG, 8 or 16 bit) into `[0,1]`.
pub fn load_map(path: &Path) -> Result<Raster<f32>> {
    let img = image::open(path)
        .map_err(|e| Error::External(format!("{}: {e}", path.display())))?
        .to_luma32f();
    let (w, h) = img.dimensions();
    Ok(Raster::from_vec(h as usize, w as usize, img.into_raw()))
}

fn box_from_values(v: &[f64], h: usize, w: usize) -> Result<ScoredBox> {
    if v.len() != 5 || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::External(format!("bad box {v:?}")));
    }
    let cx = |x: f64| (x.max(0.0).round() as usize).min(w);
    let cy = |y: f64| (y.max(0.0).round() as usize).min(h);
    let (x0, y0, x1, y1) = (cx(v[0]), cy(v[1]), cx(v[2]), cy(v[3]));
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::External(format!("empty box {v:?}")));
    }
    Ok(ScoredBox {
        bbox: PixelBox::new(x0, y0, x1, y1),
        score: v[4].clamp(0.0, 1.0) as f32,
    })
}

/// Parses adapter box output, clamping coordinates into the image.
pub fn parse_boxes(text: &str, h: usize, w: usize) -> Result<Vec<ScoredBox>> {
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| Error::External(format!("malformed box line `{line}`: {e}")))?;
        let arr = value
            .as_array()
            .ok_or_else(|| Error::External(format!("expected an array, got `{line}`")))?;
        let nested = arr.iter().all(|v| v.is_array());
        let rows: Vec<&serde_json::Value> = if nested && !arr.is_empty() {
            arr.iter().collect()
        } else if nested {
            Vec::new()
        } else {
            vec![&value]
        };
        for row in rows {
            let nums: Option<Vec<f64>> = row
                .as_array()
                .map(|r| r.iter().map(|x| x.as_f64()).collect())
                .unwrap_or(None);
            let nums = nums.ok_or_else(|| Error::External(format!("non-numeric box in `{line}`")))?;
            out.push(box_from_values(&nums, h, w)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_formats() {
        let a = parse_boxes("[1,2,5,6,0.5]\n[0,0,3,3,0.9]\n", 10, 10).unwrap();
        let b = parse_boxes("[[1,2,5,6,0.5],[0,0,3,3,0.9]]", 10, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].bbox, PixelBox::new(1, 2, 5, 6));
        assert!(parse_boxes("[]", 10, 10).unwrap().is_empty());
        assert!(parse_boxes("[1,2,3]", 10, 10).is_err());
        assert!(parse_boxes("not json", 10, 10).is_err());
        let c = parse_boxes("[-3,-1,40,40,2]", 10, 12).unwrap();
        assert_eq!(c[0].bbox, PixelBox::new(0, 0, 12, 10));
        assert_eq!(c[0].score, 1.0);
    }

    #[test]
    fn missing_program_is_an_error() {
        let spec = ExternalSpec {
            command: vec!["/nonexistent/detector-binary".into()],
            output: OutputFormat::Auto,
        };
        assert!(matches!(register_external(spec), Err(Error::External(_))));
    }

    #[test]
    fn failing_program_is_an_error_not_empty() {
        let Ok(d) = register_external(ExternalSpec {
            command: vec!["false".into()],
            output: OutputFormat::Boxes,
        }) else {
            return;
        };
        let r = d.detect(&Raster::filled(20, 20, 1.0), &Default::default());
        assert!(matches!(r, Err(Error::External(_))));
    }
}
