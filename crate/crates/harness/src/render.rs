//! Vector rendering of a scene: one rectangle and label per object.

use std::fmt::Write as _;

use intent_grasp::world::Scene;

const TABLE_FILL: &str = "#d8c8a8";
const UNKNOWN_FILL: &str = "#9e9e9e";

fn fill(color: Option<&str>) -> &'static str {
    match color {
        Some("red") => "#d32f2f",
        Some("blue") => "#1976d2",
        Some("green") => "#388e3c",
        Some("yellow") => "#fbc02d",
        Some("orange") => "#f57c00",
        Some("pink") => "#f48fb1",
        Some("white") => "#fafafa",
        Some("black") => "#212121",
        Some("brown") => "#795548",
        Some("silver") => "#bdbdbd",
        Some("gray") => "#757575",
        Some("clear") => "#e0f7fa",
        _ => UNKNOWN_FILL,
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// SVG document for `scene`. Objects are drawn in scene order, each as a
/// `<g class="object">` holding exactly one `<rect>` and one `<text>` label.
pub fn scene_svg(scene: &Scene) -> String {
    let (w, h) = (scene.width, scene.height);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" style="background:{TABLE_FILL}" data-scene-id="{}">"#,
        escape(&scene.id)
    );
    for o in &scene.objects {
        let b = o.bbox;
        let color = o.attributes.get("color").map(String::as_str);
        let label = match color {
            Some(c) => format!("{c} {}", o.category),
            None => o.category.clone(),
        };
        let _ = writeln!(
            s,
            r##"  <g class="object" data-id="{}" data-category="{}"><rect x="{}" y="{}" width="{}" height="{}" fill="{}" fill-opacity="0.75" stroke="#333333" stroke-width="1.5"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text></g>"##,
            escape(&o.id),
            escape(&o.category),
            b.x1,
            b.y1,
            b.width(),
            b.height(),
            fill(color),
            b.x1 + 2.0,
            b.y1 + 12.0,
            escape(&label),
        );
    }
    s.push_str("</svg>\n");
    s
}
