//! Built-in stroke font.
//!
//! Glyphs live on a unit grid: ascenders and capitals start at y = 0, the
//! x-height line is y = 2, the baseline is y = 6 and descenders end at y = 8.
//! Every glyph is a set of polylines drawn with a round pen of width
//! [`STROKE_WIDTH`] units, so a glyph outline is a union of capsules.

/// Full glyph extent (ascender to descender) in grid units.
pub const EM_HEIGHT: f64 = 8.0;
/// Pen width in grid units.
pub const STROKE_WIDTH: f64 = 1.2;
/// Gap between consecutive glyphs of a word, in grid units.
pub const LETTER_GAP: f64 = 1.7;

pub type Point = (f64, f64);

#[derive(Clone, Debug)]
pub struct Glyph {
    pub width: f64,
    pub strokes: Vec<Vec<Point>>,
}

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Vec<Point> {
    let span = to_deg - from_deg;
    let n = ((span.abs() / 20.0).ceil() as usize).max(2);
    (0..=n)
        .map(|i| {
            let t = (from_deg + span * i as f64 / n as f64).to_radians();
            (cx + rx * t.cos(), cy - ry * t.sin())
        })
        .collect()
}

fn line(pts: &[Point]) -> Vec<Point> {
    pts.to_vec()
}

fn glyph(width: f64, strokes: Vec<Vec<Point>>) -> Glyph {
    Glyph { width, strokes }
}

fn bowl() -> Vec<Point> {
    arc(1.5, 4.0, 1.5, 2.0, 0.0, 360.0)
}

fn chain(mut a: Vec<Point>, b: Vec<Point>) -> Vec<Point> {
    a.extend(b);
    a
}

/// Looks up a glyph. Returns `None` for characters outside the font.
pub fn lookup(c: char) -> Option<Glyph> {
    let g = match c {
        'a' => glyph(3.0, vec![bowl(), line(&[(3.0, 2.0), (3.0, 6.0)])]),
        'b' => glyph(3.0, vec![line(&[(0.0, 0.0), (0.0, 6.0)]), bowl()]),
        'c' => glyph(3.0, vec![arc(1.5, 4.0, 1.5, 2.0, 45.0, 315.0)]),
        'd' => glyph(3.0, vec![line(&[(3.0, 0.0), (3.0, 6.0)]), bowl()]),
        'e' => glyph(
            3.0,
            vec![line(&[(0.0, 4.0), (3.0, 4.0)]), arc(1.5, 4.0, 1.5, 2.0, 0.0, 320.0)],
        ),
        'f' => glyph(
            2.5,
            vec![
                line(&[(2.5, 0.3), (1.6, 0.0), (1.0, 0.7), (1.0, 6.0)]),
                line(&[(0.0, 2.0), (2.3, 2.0)]),
            ],
        ),
        'g' => glyph(
            3.0,
            vec![
                bowl(),
                chain(line(&[(3.0, 2.0), (3.0, 7.0)]), arc(1.5, 7.0, 1.5, 1.0, 0.0, -180.0)),
            ],
        ),
        'h' => glyph(
            3.0,
            vec![
                line(&[(0.0, 0.0), (0.0, 6.0)]),
                chain(arc(1.5, 3.5, 1.5, 1.5, 180.0, 0.0), line(&[(3.0, 6.0)])),
            ],
        ),
        'i' => glyph(
            1.0,
            vec![line(&[(0.5, 2.0), (0.5, 6.0)]), line(&[(0.5, 0.5), (0.5, 0.9)])],
        ),
        'j' => glyph(
            1.5,
            vec![
                chain(line(&[(1.2, 2.0), (1.2, 7.0)]), arc(0.2, 7.0, 1.0, 1.0, 0.0, -120.0)),
                line(&[(1.2, 0.5), (1.2, 0.9)]),
            ],
        ),
        'k' => glyph(
            2.8,
            vec![
                line(&[(0.0, 0.0), (0.0, 6.0)]),
                line(&[(2.7, 2.0), (0.0, 4.5)]),
                line(&[(1.0, 3.6), (2.8, 6.0)]),
            ],
        ),
        'l' => glyph(1.0, vec![line(&[(0.5, 0.0), (0.5, 6.0)])]),
        'm' => glyph(
            4.4,
            vec![
                line(&[(0.0, 2.0), (0.0, 6.0)]),
                chain(arc(1.1, 3.3, 1.1, 1.3, 180.0, 0.0), line(&[(2.2, 6.0)])),
                chain(arc(3.3, 3.3, 1.1, 1.3, 180.0, 0.0), line(&[(4.4, 6.0)])),
            ],
        ),
        'n' => glyph(
            3.0,
            vec![
                line(&[(0.0, 2.0), (0.0, 6.0)]),
                chain(arc(1.5, 3.5, 1.5, 1.5, 180.0, 0.0), line(&[(3.0, 6.0)])),
            ],
        ),
        'o' => glyph(3.0, vec![bowl()]),
        'p' => glyph(3.0, vec![line(&[(0.0, 2.0), (0.0, 8.0)]), bowl()]),
        'q' => glyph(3.0, vec![line(&[(3.0, 2.0), (3.0, 8.0)]), bowl()]),
        'r' => glyph(
            2.5,
            vec![
                line(&[(0.0, 2.0), (0.0, 6.0)]),
                arc(2.0, 3.6, 2.0, 1.6, 180.0, 70.0),
            ],
        ),
        's' => glyph(
            3.0,
            vec![chain(
                arc(1.5, 3.0, 1.4, 1.0, 30.0, 270.0),
                arc(1.5, 5.0, 1.4, 1.0, 90.0, -150.0),
            )],
        ),
        't' => glyph(
            2.5,
            vec![
                line(&[(1.0, 0.8), (1.0, 5.3), (1.5, 6.0), (2.4, 5.8)]),
                line(&[(0.0, 2.0), (2.4, 2.0)]),
            ],
        ),
        'u' => glyph(
            3.0,
            vec![
                chain(line(&[(0.0, 2.0)]), arc(1.5, 4.5, 1.5, 1.5, 180.0, 360.0)),
                line(&[(3.0, 2.0), (3.0, 6.0)]),
            ],
        ),
        'v' => glyph(3.0, vec![line(&[(0.0, 2.0), (1.5, 6.0), (3.0, 2.0)])]),
        'w' => glyph(
            4.4,
            vec![line(&[(0.0, 2.0), (1.1, 6.0), (2.2, 3.0), (3.3, 6.0), (4.4, 2.0)])],
        ),
        'x' => glyph(
            3.0,
            vec![line(&[(0.0, 2.0), (3.0, 6.0)]), line(&[(3.0, 2.0), (0.0, 6.0)])],
        ),
        'y' => glyph(
            3.0,
            vec![
                line(&[(0.0, 2.0), (1.5, 6.0)]),
                line(&[(3.0, 2.0), (1.5, 6.0), (0.9, 7.6), (0.0, 7.8)]),
            ],
        ),
        'z' => glyph(3.0, vec![line(&[(0.0, 2.0), (3.0, 2.0), (0.0, 6.0), (3.0, 6.0)])]),

        'A' => glyph(
            4.0,
            vec![
                line(&[(0.0, 6.0), (2.0, 0.0), (4.0, 6.0)]),
                line(&[(0.7, 4.0), (3.3, 4.0)]),
            ],
        ),
        'B' => glyph(
            4.2,
            vec![
                line(&[(0.0, 0.0), (0.0, 6.0)]),
                chain(
                    chain(line(&[(0.0, 0.0), (2.5, 0.0)]), arc(2.5, 1.5, 1.5, 1.5, 90.0, -90.0)),
                    line(&[(0.0, 3.0)]),
                ),
                chain(
                    chain(line(&[(0.0, 3.0), (2.7, 3.0)]), arc(2.7, 4.5, 1.5, 1.5, 90.0, -90.0)),
                    line(&[(0.0, 6.0)]),
                ),
            ],
        ),
        'C' => glyph(4.0, vec![arc(2.2, 3.0, 2.2, 3.0, 50.0, 310.0)]),
        'D' => glyph(
            4.0,
            vec![
                line(&[(0.0, 0.0), (0.0, 6.0)]),
                chain(
                    chain(line(&[(0.0, 0.0), (1.5, 0.0)]), arc(1.5, 3.0, 2.5, 3.0, 90.0, -90.0)),
                    line(&[(0.0, 6.0)]),
                ),
            ],
        ),
        'E' => glyph(
            3.8,
            vec![
                line(&[(3.8, 0.0), (0.0, 0.0), (0.0, 6.0), (3.8, 6.0)]),
                line(&[(0.0, 3.0), (3.0, 3.0)]),
            ],
        ),
        'F' => glyph(
            3.8,
            vec![
                line(&[(3.8, 0.0), (0.0, 0.0), (0.0, 6.0)]),
                line(&[(0.0, 3.0), (3.0, 3.0)]),
            ],
        ),
        'G' => glyph(
            4.3,
            vec![
                arc(2.2, 3.0, 2.2, 3.0, 50.0, 330.0),
                line(&[(2.4, 3.4), (4.2, 3.4), (4.2, 5.2)]),
            ],
        ),
        'H' => glyph(
            4.0,
            vec![
                line(&[(0.0, 0.0), (0.0, 6.0)]),
                line(&[(4.0, 0.0), (4.0, 6.0)]),
                line(&[(0.0, 3.0), (4.0, 3.0)]),
            ],
        ),
        'I' => glyph(
            2.0,
            vec![
                line(&[(1.0, 0.0), (1.0, 6.0)]),
                line(&[(0.0, 0.0), (2.0, 0.0)]),
                line(&[(0.0, 6.0), (2.0, 6.0)]),
            ],
        ),
        'J' => glyph(
            3.0,
            vec![chain(line(&[(3.0, 0.0), (3.0, 4.5)]), arc(1.5, 4.5, 1.5, 1.5, 0.0, -180.0))],
        ),
        'K' => glyph(
            4.0,
            vec![
                line(&[(0.0, 0.0), (0.0, 6.0)]),
                line(&[(4.0, 0.0), (0.0, 3.6)]),
                line(&[(1.3, 2.6), (4.0, 6.0)]),
            ],
        ),
        'L' => glyph(3.5, vec![line(&[(0.0, 0.0), (0.0, 6.0), (3.5, 6.0)])]),
        'M' => glyph(
            5.0,
            vec![line(&[(0.0, 6.0), (0.0, 0.0), (2.5, 4.0), (5.0, 0.0), (5.0, 6.0)])],
        ),
        'N' => glyph(4.0, vec![line(&[(0.0, 6.0), (0.0, 0.0), (4.0, 6.0), (4.0, 0.0)])]),
        'O' => glyph(4.4, vec![arc(2.2, 3.0, 2.2, 3.0, 0.0, 360.0)]),
        'P' => glyph(
            4.0,
            vec![chain(
                chain(
                    line(&[(0.0, 6.0), (0.0, 0.0), (2.5, 0.0)]),
                    arc(2.5, 1.6, 1.5, 1.6, 90.0, -90.0),
                ),
                line(&[(0.0, 3.2)]),
            )],
        ),
        'Q' => glyph(
            4.4,
            vec![
                arc(2.2, 3.0, 2.2, 3.0, 0.0, 360.0),
                line(&[(2.6, 4.4), (4.4, 6.3)]),
            ],
        ),
        'R' => glyph(
            4.0,
            vec![
                chain(
                    chain(
                        line(&[(0.0, 6.0), (0.0, 0.0), (2.5, 0.0)]),
                        arc(2.5, 1.6, 1.5, 1.6, 90.0, -90.0),
                    ),
                    line(&[(0.0, 3.2)]),
                ),
                line(&[(2.0, 3.2), (4.0, 6.0)]),
            ],
        ),
        'S' => glyph(
            4.0,
            vec![chain(
                arc(2.0, 1.5, 1.8, 1.5, 30.0, 270.0),
                arc(2.0, 4.5, 1.8, 1.5, 90.0, -150.0),
            )],
        ),
        'T' => glyph(
            4.0,
            vec![line(&[(0.0, 0.0), (4.0, 0.0)]), line(&[(2.0, 0.0), (2.0, 6.0)])],
        ),
        'U' => glyph(
            4.0,
            vec![chain(
                chain(line(&[(0.0, 0.0), (0.0, 4.0)]), arc(2.0, 4.0, 2.0, 2.0, 180.0, 360.0)),
                line(&[(4.0, 0.0)]),
            )],
        ),
        'V' => glyph(4.0, vec![line(&[(0.0, 0.0), (2.0, 6.0), (4.0, 0.0)])]),
        'W' => glyph(
            5.0,
            vec![line(&[(0.0, 0.0), (1.2, 6.0), (2.5, 1.5), (3.8, 6.0), (5.0, 0.0)])],
        ),
        'X' => glyph(
            4.0,
            vec![line(&[(0.0, 0.0), (4.0, 6.0)]), line(&[(4.0, 0.0), (0.0, 6.0)])],
        ),
        'Y' => glyph(
            4.0,
            vec![
                line(&[(0.0, 0.0), (2.0, 3.0), (4.0, 0.0)]),
                line(&[(2.0, 3.0), (2.0, 6.0)]),
            ],
        ),
        'Z' => glyph(4.0, vec![line(&[(0.0, 0.0), (4.0, 0.0), (0.0, 6.0), (4.0, 6.0)])]),

        '0' => glyph(3.5, vec![arc(1.75, 3.0, 1.75, 3.0, 0.0, 360.0)]),
        '1' => glyph(
            3.0,
            vec![
                line(&[(0.5, 1.2), (1.75, 0.0), (1.75, 6.0)]),
                line(&[(0.5, 6.0), (3.0, 6.0)]),
            ],
        ),
        '2' => glyph(
            3.5,
            vec![chain(
                arc(1.75, 1.75, 1.75, 1.75, 160.0, -30.0),
                line(&[(0.0, 6.0), (3.5, 6.0)]),
            )],
        ),
        '3' => glyph(
            3.5,
            vec![chain(
                arc(1.75, 1.5, 1.6, 1.5, 150.0, -90.0),
                arc(1.75, 4.5, 1.75, 1.5, 90.0, -150.0),
            )],
        ),
        '4' => glyph(
            3.5,
            vec![line(&[(2.8, 6.0), (2.8, 0.0), (0.0, 4.2), (3.5, 4.2)])],
        ),
        '5' => glyph(
            3.5,
            vec![chain(
                line(&[(3.3, 0.0), (0.4, 0.0), (0.2, 3.0)]),
                arc(1.75, 4.2, 1.75, 1.8, 140.0, -150.0),
            )],
        ),
        '6' => glyph(
            3.5,
            vec![
                arc(1.75, 4.2, 1.75, 1.8, 0.0, 360.0),
                line(&[(3.2, 0.2), (1.5, 0.6), (0.3, 2.5), (0.0, 4.2)]),
            ],
        ),
        '7' => glyph(3.5, vec![line(&[(0.0, 0.0), (3.5, 0.0), (1.2, 6.0)])]),
        '8' => glyph(
            3.5,
            vec![
                arc(1.75, 1.5, 1.5, 1.5, 0.0, 360.0),
                arc(1.75, 4.5, 1.75, 1.5, 0.0, 360.0),
            ],
        ),
        '9' => glyph(
            3.5,
            vec![
                arc(1.75, 1.8, 1.75, 1.8, 0.0, 360.0),
                line(&[(3.5, 1.8), (3.2, 4.2), (2.0, 5.8), (0.3, 5.9)]),
            ],
        ),

        '.' => glyph(0.6, vec![line(&[(0.3, 5.6), (0.3, 6.0)])]),
        ',' => glyph(0.8, vec![line(&[(0.6, 5.4), (0.6, 6.0), (0.0, 7.2)])]),
        '-' => glyph(2.0, vec![line(&[(0.0, 4.0), (2.0, 4.0)])]),
        '\'' => glyph(0.6, vec![line(&[(0.3, 0.0), (0.3, 1.6)])]),
        _ => return None,
    };
    Some(g)
}
