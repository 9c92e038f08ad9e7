use super::{CenterEstimate, OccupancyGrid};
use crate::geometry::Vec2;
use std::fmt::Write;

const SCALE: f64 = 10.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// SVG picture of an occupancy grid: occupied cells shaded, cell centres as dots
/// coloured by cluster, estimated centres as crosses and true centres as triangles.
pub fn render_svg(grid: &OccupancyGrid, estimate: &CenterEstimate, truth: &[Vec2], bin_side: f64) -> String {
    let size = bin_side * SCALE;
    let px = |p: Vec2| (p.x * SCALE, size - p.y * SCALE);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{size:.0}" viewBox="0 0 {size:.0} {size:.0}">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{size:.0}" height="{size:.0}" fill="#ffffff" stroke="#000000" stroke-width="2"/>"##);
    let d = grid.delta * SCALE;
    for i in 0..grid.rows {
        for j in 0..grid.cols {
            let c = grid.cell_center(i, j);
            let (x, y) = px(c);
            let fill = if grid.get(i, j) { "#bbbbbb" } else { "none" };
            let _ = writeln!(
                s,
                r##"<rect x="{:.1}" y="{:.1}" width="{d:.1}" height="{d:.1}" fill="{fill}" stroke="#dddddd" stroke-width="0.5"/>"##,
                x - d / 2.0,
                y - d / 2.0
            );
        }
    }
    let occupied = grid.occupied_centers();
    for (k, members) in estimate.members.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for &m in members {
            let (x, y) = px(occupied[m]);
            let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="6" fill="{color}"/>"#);
        }
    }
    for (k, c) in estimate.centers.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let (x, y) = px(*c);
        let _ = writeln!(
            s,
            r#"<path d="M{:.1},{:.1} L{:.1},{:.1} M{:.1},{:.1} L{:.1},{:.1}" stroke="{color}" stroke-width="4"/>"#,
            x - 12.0,
            y - 12.0,
            x + 12.0,
            y + 12.0,
            x - 12.0,
            y + 12.0,
            x + 12.0,
            y - 12.0
        );
    }
    for t in truth {
        let (x, y) = px(*t);
        let _ = writeln!(
            s,
            r##"<polygon points="{:.1},{:.1} {:.1},{:.1} {:.1},{:.1}" fill="none" stroke="#000000" stroke-width="3"/>"##,
            x,
            y - 14.0,
            x - 12.0,
            y + 8.0,
            x + 12.0,
            y + 8.0
        );
    }
    s.push_str("</svg>\n");
    s
}
