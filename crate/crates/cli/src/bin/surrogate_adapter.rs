//! External-detector adapter backed by a surrogate checkpoint.
//!
//! `surrogate-adapter <checkpoint> [--boxes] <image.png>`
//!
//! Prints the path of a 16-bit PGM probability map written next to the
//! image, or with `--boxes` one JSON array `[x0,y0,x1,y1,score]` per line.
//! Lets the external adapter path be exercised against a known detector.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use image::{ImageBuffer, Luma};
use udup_core::corpus::load_gray;
use udup_core::detector::{Detector, Surrogate};
use udup_core::eval::PostProcess;

fn run(checkpoint: &Path, boxes: bool, image: &Path) -> udup_core::Result<String> {
    let detector = Detector::Surrogate(Surrogate::load(checkpoint)?);
    let input = load_gray(image)?;
    if boxes {
        let found = detector.detect(&input, &PostProcess::default())?;
        if found.is_empty() {
            return Ok("[]\n".into());
        }
        let lines: String = found
            .iter()
            .map(|b| format!("[{},{},{},{},{}]\n", b.bbox.x0, b.bbox.y0, b.bbox.x1, b.bbox.y1, b.score))
            .collect();
        return Ok(lines);
    }
    let map = detector.forward(&input)?.values;
    let (h, w) = map.dims();
    let data: Vec<u16> = map
        .as_slice()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, data).expect("map length matches dimensions");
    let out: PathBuf = image.with_extension("map.pgm");
    buf.save(&out)?;
    Ok(format!("{}\n", out.display()))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (boxes, rest): (Vec<&String>, Vec<&String>) = args.iter().partition(|a| *a == "--boxes");
    if rest.len() != 2 {
        eprintln!("usage: surrogate-adapter <checkpoint> [--boxes] <image.png>");
        return ExitCode::from(2);
    }
    match run(Path::new(rest[0]), !boxes.is_empty(), Path::new(rest[1])) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
