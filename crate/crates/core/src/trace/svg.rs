//! SVG export of an execution timeline.
//!
//! Machine-checkable structure: every task rectangle carries `data-worker`,
//! `data-task`, `data-start-ns` and `data-end-ns`; the ready curve carries
//! `data-ready` as comma-separated `time:count` pairs.

use std::collections::HashMap;
use std::fmt::Write;

use super::Timeline;
use crate::task::TaskId;

const LEFT: f64 = 90.0;
const PLOT_WIDTH: f64 = 1000.0;
const LANE_HEIGHT: f64 = 24.0;
const LANE_GAP: f64 = 6.0;
const CURVE_HEIGHT: f64 = 80.0;

const PALETTE: [&str; 6] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders `timeline`. `names` labels rectangles; `deps` draws an arrow
/// from each predecessor's rectangle to its successor's.
pub fn render(
    timeline: &Timeline,
    names: &HashMap<TaskId, String>,
    deps: Option<&[(TaskId, TaskId)]>,
) -> String {
    let span = (timeline.end_ns - timeline.start_ns).max(1) as f64;
    let x = |t: u64| LEFT + (t.saturating_sub(timeline.start_ns)) as f64 / span * PLOT_WIDTH;
    let lanes = timeline.lanes.len();
    let curve_top = 20.0 + lanes as f64 * (LANE_HEIGHT + LANE_GAP) + 20.0;
    let height = curve_top + CURVE_HEIGHT + 30.0 + 16.0 * lanes as f64 + 20.0;
    let width = LEFT + PLOT_WIDTH + 20.0;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">
<defs><marker id="arrow" markerWidth="6" markerHeight="6" refX="6" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="#555"/></marker></defs>
<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"##
    );

    let mut centers: HashMap<TaskId, (f64, f64, f64)> = HashMap::new();
    for (row, (worker, lane)) in timeline.lanes.iter().enumerate() {
        let y = 20.0 + row as f64 * (LANE_HEIGHT + LANE_GAP);
        let _ = writeln!(
            out,
            r#"<text x="4" y="{:.1}">worker {worker}</text>"#,
            y + LANE_HEIGHT * 0.7
        );
        for iv in lane {
            let (x0, x1) = (x(iv.start_ns), x(iv.end_ns));
            let fill = PALETTE[(iv.task.0 as usize) % PALETTE.len()];
            let name = names
                .get(&iv.task)
                .cloned()
                .unwrap_or_else(|| iv.task.to_string());
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.3}" y="{y:.1}" width="{:.3}" height="{LANE_HEIGHT}" fill="{fill}" stroke="black" stroke-width="0.3" data-worker="{worker}" data-task="{}" data-start-ns="{}" data-end-ns="{}"><title>{}</title></rect>"#,
                (x1 - x0).max(0.0),
                iv.task.0,
                iv.start_ns,
                iv.end_ns,
                escape(&name)
            );
            centers.insert(iv.task, (x0, x1, y + LANE_HEIGHT / 2.0));
        }
    }

    if let Some(deps) = deps {
        for (a, b) in deps {
            if let (Some(pa), Some(pb)) = (centers.get(a), centers.get(b)) {
                let _ = writeln!(
                    out,
                    r##"<line x1="{:.3}" y1="{:.1}" x2="{:.3}" y2="{:.1}" stroke="#555" stroke-width="0.5" marker-end="url(#arrow)" data-from="{}" data-to="{}"/>"##,
                    pa.1, pa.2, pb.0, pb.2, a.0, b.0
                );
            }
        }
    }

    let peak = timeline.ready.iter().map(|s| s.1).max().unwrap_or(0).max(1) as f64;
    let base = curve_top + CURVE_HEIGHT;
    let yc = |c: i64| base - c as f64 / peak * CURVE_HEIGHT;
    let mut points = format!("{:.3},{:.1}", x(timeline.start_ns), yc(0));
    let mut prev = 0i64;
    for &(t, c) in &timeline.ready {
        let _ = write!(
            points,
            " {:.3},{:.1} {:.3},{:.1}",
            x(t),
            yc(prev),
            x(t),
            yc(c)
        );
        prev = c;
    }
    let _ = write!(points, " {:.3},{:.1}", x(timeline.end_ns), yc(prev));
    let encoded: Vec<String> = timeline
        .ready
        .iter()
        .map(|(t, c)| format!("{t}:{c}"))
        .collect();
    let _ = writeln!(
        out,
        r##"<text x="4" y="{:.1}">ready</text>
<line x1="{LEFT}" y1="{base:.1}" x2="{:.1}" y2="{base:.1}" stroke="black" stroke-width="0.5"/>
<polyline fill="none" stroke="#b07aa1" stroke-width="1" points="{points}" data-ready="{}"/>"##,
        curve_top + 12.0,
        LEFT + PLOT_WIDTH,
        encoded.join(",")
    );

    let mut y = base + 30.0;
    for (worker, idle) in timeline.idle_ns() {
        let _ = writeln!(
            out,
            r#"<text x="4" y="{y:.1}" class="idle" data-worker="{worker}" data-idle-ns="{idle}">extension metric: worker {worker} idle {:.3} ms</text>"#,
            idle as f64 / 1e6
        );
        y += 16.0;
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Interval;
    use std::collections::BTreeMap;

    #[test]
    fn two_sequential_tasks_one_lane() {
        let mut lanes = BTreeMap::new();
        lanes.insert(
            0,
            vec![
                Interval {
                    task: TaskId(1),
                    start_ns: 0,
                    end_ns: 10,
                },
                Interval {
                    task: TaskId(2),
                    start_ns: 10,
                    end_ns: 30,
                },
            ],
        );
        let tl = Timeline {
            lanes,
            ready: vec![(0, 1), (0, 0), (10, 1), (10, 0)],
            start_ns: 0,
            end_ns: 30,
        };
        let svg = render(&tl, &HashMap::new(), Some(&[(TaskId(1), TaskId(2))]));
        assert_eq!(svg.matches("data-task=").count(), 2);
        assert!(svg.contains(r#"data-ready="0:1,0:0,10:1,10:0""#));
        assert!(svg.contains("data-from=\"1\" data-to=\"2\""));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
