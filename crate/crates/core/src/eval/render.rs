//! SVG plots of a maze with a trajectory and its task markers.

use std::fmt::Write as _;

use crate::maze::{MazeSpec, TaskSpec, Vec2};

const CELL: f64 = 40.0;

fn px(v: f64) -> String {
    format!("{:.2}", v * CELL)
}

/// Maze walls, the trajectory polyline, start (green), goal (red) and the
/// optional coin (gold). Output depends only on the inputs.
pub fn render_svg(maze: &MazeSpec, positions: &[Vec2], task: Option<&TaskSpec>) -> String {
    let (w, h) = (maze.cols() as f64 * CELL, maze.rows() as f64 * CELL);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r##"<rect width="{w}" height="{h}" fill="#ffffff"/>"##);
    for r in 0..maze.rows() {
        for c in 0..maze.cols() {
            if !maze.is_open(r, c) {
                let _ = writeln!(
                    s,
                    r##"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="#3b3b3b"/>"##,
                    px(c as f64),
                    px(r as f64)
                );
            }
        }
    }
    if !positions.is_empty() {
        let pts: Vec<String> = positions.iter().map(|p| format!("{},{}", px(p[0]), px(p[1]))).collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            pts.join(" ")
        );
    }
    if let Some(t) = task {
        let mut marker = |p: Vec2, r: f64, color: &str| {
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{}" r="{}" fill="{color}"/>"#,
                px(p[0]),
                px(p[1]),
                px(r)
            );
        };
        marker(t.start, 0.15, "#2ca02c");
        marker(t.goal, 0.15, "#d62728");
        if let Some(c) = t.coin {
            marker(c, 0.12, "#e6b800");
        }
    }
    s.push_str("</svg>\n");
    s
}
