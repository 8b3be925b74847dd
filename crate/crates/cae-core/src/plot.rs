//! Hand-rolled SVG artifacts: heatmaps, grid maps with trajectories and
//! policy arrows, planar arena maps, and learning curves.
//!
//! Everything is emitted as plain self-contained SVG text with no external
//! assets, so the files open anywhere and diff cleanly.

use crate::env::{ActionId, MdpSpec, State, Wall};
use crate::eval::Heatmap;
use crate::Result;
use std::fmt::Write as _;
use std::io::Write;

/// Minimal SVG builder: fixed viewport, shapes appended in paint order.
pub struct SvgCanvas {
    width: f64,
    height: f64,
    body: String,
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl SvgCanvas {
    pub fn new(width: f64, height: f64) -> SvgCanvas {
        SvgCanvas {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = write!(
            self.body,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\"/>",
            fmt_num(x),
            fmt_num(y),
            fmt_num(w),
            fmt_num(h)
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = write!(
            self.body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{stroke}\" \
             stroke-width=\"{}\" stroke-linecap=\"round\"/>",
            fmt_num(x1),
            fmt_num(y1),
            fmt_num(x2),
            fmt_num(y2),
            fmt_num(width)
        );
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        let _ = write!(
            self.body,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"{fill}\"/>",
            fmt_num(cx),
            fmt_num(cy),
            fmt_num(r)
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        if points.len() < 2 {
            return;
        }
        let pts: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{},{}", fmt_num(*x), fmt_num(*y)))
            .collect();
        let _ = write!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{}\" \
             stroke-linejoin=\"round\" stroke-linecap=\"round\"/>",
            pts.join(" "),
            fmt_num(width)
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, content: &str) {
        let escaped = content
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        let _ = write!(
            self.body,
            "<text x=\"{}\" y=\"{}\" font-size=\"{}\" font-family=\"monospace\" \
             fill=\"#333\">{escaped}</text>",
            fmt_num(x),
            fmt_num(y),
            fmt_num(size)
        );
    }

    /// Line with a solid triangular head at the far end.
    pub fn arrow(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let (dx, dy) = (x2 - x1, y2 - y1);
        let len = (dx * dx + dy * dy).sqrt();
        if len < 1e-9 {
            return;
        }
        let (ux, uy) = (dx / len, dy / len);
        let head = (3.0 * width).min(len * 0.5);
        let (bx, by) = (x2 - ux * head, y2 - uy * head);
        self.line(x1, y1, bx, by, stroke, width);
        let (px, py) = (-uy, ux);
        let half = head * 0.5;
        let _ = write!(
            self.body,
            "<polygon points=\"{},{} {},{} {},{}\" fill=\"{stroke}\"/>",
            fmt_num(x2),
            fmt_num(y2),
            fmt_num(bx + px * half),
            fmt_num(by + py * half),
            fmt_num(bx - px * half),
            fmt_num(by - py * half)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
             viewBox=\"0 0 {w} {h}\"><rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>{}</svg>\n",
            self.body,
            w = fmt_num(self.width),
            h = fmt_num(self.height)
        )
    }
}

/// Linear grayscale fill: 0 is white, 1 is black, out-of-range clamped.
pub fn gray(value: f64) -> String {
    let level = (255.0 * (1.0 - value.clamp(0.0, 1.0))).round() as u8;
    format!("#{level:02x}{level:02x}{level:02x}")
}

/// Heatmap as a grid of grayscale cells (value 0 white, 1 black), row 0 at
/// the bottom so the y axis points up.
pub fn heatmap_svg(map: &Heatmap, cell_px: f64) -> String {
    let mut svg = SvgCanvas::new(map.width as f64 * cell_px, map.height as f64 * cell_px);
    for y in 0..map.height {
        for x in 0..map.width {
            let py = (map.height - 1 - y) as f64 * cell_px;
            svg.rect(
                x as f64 * cell_px,
                py,
                cell_px,
                cell_px,
                &gray(map.value(x, y)),
            );
        }
    }
    svg.finish()
}

/// A grid world drawn from its enumerated model: cells on a lattice, dead
/// ends filled dark, impassable edges drawn as walls (an edge is impassable
/// when the move that should cross it most likely leaves the state put).
pub struct GridMap<'a> {
    pub mdp: &'a MdpSpec,
    pub width: i32,
    pub height: i32,
    pub cell_px: f64,
}

impl GridMap<'_> {
    fn cell_of(&self, idx: usize) -> Option<(i32, i32)> {
        match self.mdp.states[idx] {
            State::Cell { x, y } if x >= 0 && y >= 0 => Some((x, y)),
            _ => None,
        }
    }

    fn center(&self, x: i32, y: i32) -> (f64, f64) {
        (
            (x as f64 + 0.5) * self.cell_px,
            (self.height as f64 - 1.0 - y as f64 + 0.5) * self.cell_px,
        )
    }

    fn base(&self, svg: &mut SvgCanvas) {
        let px = self.cell_px;
        let lookup: std::collections::HashMap<(i32, i32), usize> = (0..self.mdp.n_states())
            .filter_map(|s| self.cell_of(s).map(|c| (c, s)))
            .collect();
        for y in 0..self.height {
            for x in 0..self.width {
                let (cx, cy) = self.center(x, y);
                let fill = match lookup.get(&(x, y)) {
                    // Dead ends and blocked cells share the dark fill: both
                    // are places a plan cannot pass through.
                    Some(&s) if !self.mdp.terminal[s] => "#f4f4f4",
                    _ => "#444444",
                };
                svg.rect(cx - px / 2.0, cy - px / 2.0, px, px, fill);
            }
        }
        // Grid lines.
        for i in 0..=self.width {
            let x = i as f64 * px;
            svg.line(x, 0.0, x, self.height as f64 * px, "#cccccc", 0.5);
        }
        for j in 0..=self.height {
            let y = j as f64 * px;
            svg.line(0.0, y, self.width as f64 * px, y, "#cccccc", 0.5);
        }
        // Edge walls: deterministic moves toward a live neighbour cell that
        // nonetheless bounce back.
        if self.mdp.deterministic {
            for s in 0..self.mdp.n_states() {
                let Some((x, y)) = self.cell_of(s) else {
                    continue;
                };
                for (a, (dx, dy)) in
                    [(0, 1), (0, -1), (-1, 0), (1, 0)].into_iter().enumerate()
                {
                    if a >= self.mdp.action_count {
                        break;
                    }
                    let (tx, ty) = (x + dx, y + dy);
                    if !lookup.contains_key(&(tx, ty)) {
                        continue; // blocked cell or board edge, already shaded
                    }
                    if self.mdp.most_likely_next(s, a) == s {
                        let (cx, cy) = self.center(x, y);
                        // The shared edge between (x,y) and (tx,ty); note the
                        // flipped y axis.
                        let (ex, ey) = (cx + dx as f64 * px / 2.0, cy - dy as f64 * px / 2.0);
                        if dx == 0 {
                            svg.line(ex - px / 2.0, ey, ex + px / 2.0, ey, "#222222", 2.0);
                        } else {
                            svg.line(ex, ey - px / 2.0, ex, ey + px / 2.0, "#222222", 2.0);
                        }
                    }
                }
            }
        }
    }

    /// Base map only.
    pub fn render(&self) -> String {
        let mut svg = SvgCanvas::new(
            self.width as f64 * self.cell_px,
            self.height as f64 * self.cell_px,
        );
        self.base(&mut svg);
        svg.finish()
    }

    /// Base map plus a state-index path (start dot, goal ring).
    pub fn render_trajectory(&self, path: &[usize], goal: usize) -> String {
        let mut svg = SvgCanvas::new(
            self.width as f64 * self.cell_px,
            self.height as f64 * self.cell_px,
        );
        self.base(&mut svg);
        if let Some(State::Cell { x, y }) = self
            .mdp
            .goals
            .get(goal)
            .map(|g| match g {
                crate::env::Goal::Cell { x, y } => State::Cell { x: *x, y: *y },
                crate::env::Goal::Region { x, y } => State::Pose {
                    x: *x,
                    y: *y,
                    heading: 0.0,
                },
            })
        {
            let (cx, cy) = self.center(x, y);
            svg.circle(cx, cy, self.cell_px * 0.38, "#2a9d2a");
        }
        let pts: Vec<(f64, f64)> = path
            .iter()
            .filter_map(|&s| self.cell_of(s).map(|(x, y)| self.center(x, y)))
            .collect();
        svg.polyline(&pts, "#d62728", self.cell_px * 0.12);
        if let Some(&(x, y)) = pts.first() {
            svg.circle(x, y, self.cell_px * 0.18, "#1f77b4");
        }
        svg.finish()
    }

    /// Base map plus one arrow per non-terminal cell pointing at the most
    /// likely successor under `act`; cells whose move keeps them put get a
    /// dot instead.
    pub fn render_policy(&self, goal: usize, mut act: impl FnMut(usize) -> ActionId) -> String {
        let mut svg = SvgCanvas::new(
            self.width as f64 * self.cell_px,
            self.height as f64 * self.cell_px,
        );
        self.base(&mut svg);
        for s in 0..self.mdp.n_states() {
            if self.mdp.terminal[s] || self.mdp.goal_hit[s][goal] {
                continue;
            }
            let Some((x, y)) = self.cell_of(s) else {
                continue;
            };
            let nxt = self.mdp.most_likely_next(s, act(s));
            let (cx, cy) = self.center(x, y);
            match self.cell_of(nxt) {
                Some((tx, ty)) if nxt != s => {
                    let (dx, dy) = ((tx - x) as f64, (ty - y) as f64);
                    let n = (dx * dx + dy * dy).sqrt();
                    let scale = self.cell_px * 0.32 / n;
                    svg.arrow(
                        cx - dx * scale,
                        cy + dy * scale,
                        cx + dx * scale,
                        cy - dy * scale,
                        "#1f77b4",
                        self.cell_px * 0.07,
                    );
                }
                _ => svg.circle(cx, cy, self.cell_px * 0.08, "#1f77b4"),
            }
        }
        // Mark the goal.
        for s in 0..self.mdp.n_states() {
            if self.mdp.goal_hit[s][goal] {
                if let Some((x, y)) = self.cell_of(s) {
                    let (cx, cy) = self.center(x, y);
                    svg.circle(cx, cy, self.cell_px * 0.3, "#2a9d2a");
                }
            }
        }
        svg.finish()
    }
}

/// Planar arena: boundary box, interior walls, a position path, and a goal
/// disc. `size` is the arena's side length in world units.
pub fn planar_trajectory_svg(
    size: f64,
    walls: &[Wall],
    path: &[(f64, f64)],
    goal: (f64, f64),
    goal_radius: f64,
    px_per_unit: f64,
) -> String {
    let side = size * px_per_unit;
    let mut svg = SvgCanvas::new(side, side);
    let map = |x: f64, y: f64| (x * px_per_unit, side - y * px_per_unit);
    let (gx, gy) = map(goal.0, goal.1);
    svg.circle(gx, gy, goal_radius * px_per_unit, "#bde5bd");
    svg.circle(gx, gy, 2.0, "#2a9d2a");
    for w in walls {
        let (x1, y1) = map(w.x1, w.y1);
        let (x2, y2) = map(w.x2, w.y2);
        svg.line(x1, y1, x2, y2, "#222222", 2.5);
    }
    let pts: Vec<(f64, f64)> = path.iter().map(|&(x, y)| map(x, y)).collect();
    svg.polyline(&pts, "#d62728", 1.5);
    if let Some(&(x, y)) = pts.first() {
        svg.circle(x, y, 3.0, "#1f77b4");
    }
    let mut boxed = SvgCanvas::new(side, side);
    boxed.body = svg.body;
    boxed.line(0.0, 0.0, side, 0.0, "#222222", 1.0);
    boxed.line(side, 0.0, side, side, "#222222", 1.0);
    boxed.line(side, side, 0.0, side, "#222222", 1.0);
    boxed.line(0.0, side, 0.0, 0.0, "#222222", 1.0);
    boxed.finish()
}

/// Line chart of one or more series over a shared integer x axis, with
/// autoscaled y, light gridlines, and a legend.
pub fn curves_svg(series: &[(String, Vec<f64>)], title: &str) -> String {
    let (w, h) = (640.0, 360.0);
    let (ml, mr, mt, mb) = (50.0, 16.0, 28.0, 34.0);
    let mut svg = SvgCanvas::new(w, h);
    svg.text(ml, 18.0, 13.0, title);
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let finite: Vec<f64> = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    if n < 2 || finite.is_empty() {
        svg.text(ml, h / 2.0, 12.0, "not enough data");
        return svg.finish();
    }
    let (mut lo, mut hi) = (
        finite.iter().copied().fold(f64::INFINITY, f64::min),
        finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    if (hi - lo).abs() < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let plot_w = w - ml - mr;
    let plot_h = h - mt - mb;
    let sx = |i: usize| ml + plot_w * i as f64 / (n - 1) as f64;
    let sy = |v: f64| mt + plot_h * (1.0 - (v - lo) / (hi - lo));
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = sy(v);
        svg.line(ml, y, w - mr, y, "#dddddd", 0.6);
        svg.text(4.0, y + 4.0, 10.0, &format!("{v:.2}"));
    }
    svg.line(ml, mt, ml, h - mb, "#333333", 1.0);
    svg.line(ml, h - mb, w - mr, h - mb, "#333333", 1.0);
    svg.text(w - mr - 30.0, h - 8.0, 10.0, &format!("{}", n - 1));
    svg.text(ml, h - 8.0, 10.0, "0");
    let palette = ["#1f77b4", "#d62728", "#2a9d2a", "#9467bd", "#e6a400"];
    for (si, (label, vals)) in series.iter().enumerate() {
        let color = palette[si % palette.len()];
        let pts: Vec<(f64, f64)> = vals
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| (sx(i), sy(v)))
            .collect();
        svg.polyline(&pts, color, 1.5);
        let ly = mt + 14.0 * si as f64;
        svg.line(w - mr - 120.0, ly, w - mr - 100.0, ly, color, 2.0);
        svg.text(w - mr - 94.0, ly + 4.0, 10.0, label);
    }
    svg.finish()
}

/// Trajectory table: step index, state coordinates, action taken. The action
/// column is empty on the final row (no action leaves the last state).
pub fn trajectory_csv(
    out: &mut dyn Write,
    states: &[State],
    actions: &[ActionId],
) -> Result<()> {
    writeln!(out, "t,x,y,heading,action")?;
    for (t, s) in states.iter().enumerate() {
        let (x, y, heading) = match *s {
            State::Cell { x, y } => (x as f64, y as f64, String::new()),
            State::Pose { x, y, heading } => (x, y, format!("{heading}")),
        };
        let action = actions
            .get(t)
            .map(|a| a.to_string())
            .unwrap_or_default();
        writeln!(out, "{t},{x},{y},{heading},{action}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Environment, FrozenLake, Goal, LineWorld, MiniMaze};
    use crate::eval::{goal_lattice, heatmap};
    use crate::oracle::compute_c_star;
    use crate::policy::TableValues;

    #[test]
    fn grayscale_maps_zero_to_white_and_one_to_black() {
        assert_eq!(gray(0.0), "#ffffff");
        assert_eq!(gray(1.0), "#000000");
        assert_eq!(gray(2.0), "#000000");
        assert_eq!(gray(-1.0), "#ffffff");
        assert_eq!(gray(0.5), "#808080");
    }

    #[test]
    fn heatmap_svg_has_one_cell_per_value() {
        let env = LineWorld::new(4).unwrap();
        let mdp = env.enumerate().unwrap();
        let table = compute_c_star(&mdp, 3);
        let tv = TableValues {
            table: &table,
            mdp: &mdp,
        };
        let (goals, w, h) = goal_lattice(&env, 0);
        let map = heatmap(&tv, &crate::env::State::cell(0, 0), 0, goals, w, h);
        let svg = heatmap_svg(&map, 12.0);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        // Background plus four cells.
        assert_eq!(svg.matches("<rect").count(), 1 + 4);
        assert!(svg.contains("#000000")); // the source cell at budget 0
        assert!(svg.contains("#ffffff"));
    }

    #[test]
    fn grid_map_marks_dead_ends_and_walls() {
        let lake = FrozenLake::standard();
        let mdp = lake.enumerate().unwrap();
        let gm = GridMap {
            mdp: &mdp,
            width: 5,
            height: 7,
            cell_px: 20.0,
        };
        let svg = gm.render();
        // Six holes painted dark.
        assert_eq!(svg.matches("#444444").count(), 6);

        let maze = MiniMaze::standard();
        let maze_mdp = maze.enumerate().unwrap();
        let spec = maze.spec();
        let gm = GridMap {
            mdp: &maze_mdp,
            width: spec.bounds[0].1 as i32 + 1,
            height: spec.bounds[1].1 as i32 + 1,
            cell_px: 16.0,
        };
        let svg = gm.render();
        // Two blocked columns of seven cells each, no dead-end states.
        assert_eq!(svg.matches("#444444").count(), 14);
    }

    #[test]
    fn trajectory_and_policy_layers_render() {
        let env = LineWorld::new(5).unwrap();
        let mdp = env.enumerate().unwrap();
        let table = compute_c_star(&mdp, 5);
        let gm = GridMap {
            mdp: &mdp,
            width: 5,
            height: 1,
            cell_px: 20.0,
        };
        let svg = gm.render_trajectory(&[0, 1, 2, 3], 3);
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("#2a9d2a")); // goal marker
        let svg = gm.render_policy(4, |s| table.greedy(s, 4, 4));
        assert!(svg.contains("<polygon")); // at least one arrow head
    }

    #[test]
    fn planar_map_draws_walls_path_and_goal() {
        let svg = planar_trajectory_svg(
            15.0,
            &[Wall {
                x1: 3.0,
                y1: 7.5,
                x2: 12.0,
                y2: 7.5,
            }],
            &[(1.5, 13.5), (2.0, 12.8), (2.8, 12.1)],
            (5.0, 5.0),
            0.5,
            20.0,
        );
        assert!(svg.contains("<polyline"));
        assert!(svg.matches("<line").count() >= 5); // wall + border
        assert!(svg.contains("<circle"));
    }

    #[test]
    fn curves_scale_and_label() {
        let svg = curves_svg(
            &[
                ("rate".to_string(), vec![0.0, 0.4, 0.6, 0.9]),
                ("loss".to_string(), (0..4).map(|i| 1.0 / (1.0 + i as f64)).collect()),
            ],
            "training",
        );
        assert!(svg.contains("training"));
        assert!(svg.contains("rate"));
        assert!(svg.contains("loss"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        let empty = curves_svg(&[("x".into(), vec![1.0])], "t");
        assert!(empty.contains("not enough data"));
    }

    #[test]
    fn trajectory_csv_rows_align_with_steps() {
        let states = vec![
            crate::env::State::cell(0, 0),
            crate::env::State::cell(1, 0),
            crate::env::State::Pose {
                x: 1.5,
                y: 2.5,
                heading: 90.0,
            },
        ];
        let mut buf = Vec::new();
        trajectory_csv(&mut buf, &states, &[1, 0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0,0,0,,1");
        assert_eq!(lines[3], "2,1.5,2.5,90,");
    }

    #[test]
    fn goal_markers_appear_for_goal_cells() {
        let env = LineWorld::new(3).unwrap();
        let _ = Goal::cell(1, 0);
        let mdp = env.enumerate().unwrap();
        let gm = GridMap {
            mdp: &mdp,
            width: 3,
            height: 1,
            cell_px: 10.0,
        };
        let svg = gm.render_policy(1, |_| 1);
        assert!(svg.contains("#2a9d2a"));
    }
}
