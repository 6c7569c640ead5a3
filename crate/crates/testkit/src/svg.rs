//! Extracts the machine-readable parts of a trace SVG.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct LaneRect {
    pub worker: usize,
    pub task: u64,
    pub x: f64,
    pub width: f64,
    pub start_ns: u64,
    pub end_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceSvg {
    pub rects: Vec<LaneRect>,
    pub ready: Vec<(u64, i64)>,
    pub idle_ns: BTreeMap<usize, u64>,
}

fn attr<'a>(element: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = element.find(&key)? + key.len();
    let end = element[start..].find('"')? + start;
    Some(&element[start..end])
}

fn parse_attr<T: std::str::FromStr>(element: &str, name: &str) -> Result<T, String> {
    attr(element, name)
        .ok_or_else(|| format!("missing {name}"))?
        .parse()
        .map_err(|_| format!("bad {name}"))
}

/// Every `<tag ...>` start tag in document order.
fn elements<'a>(svg: &'a str, tag: &str) -> Vec<&'a str> {
    let open = format!("<{tag} ");
    svg.match_indices(open.as_str())
        .filter_map(|(i, _)| {
            let end = svg[i..].find('>')? + i;
            Some(&svg[i..=end])
        })
        .collect()
}

pub fn parse(svg: &str) -> Result<TraceSvg, String> {
    if !svg.contains("<svg") || !svg.trim_end().ends_with("</svg>") {
        return Err("not an svg document".into());
    }
    let mut out = TraceSvg::default();
    for el in elements(svg, "rect")
        .into_iter()
        .filter(|e| e.contains("data-task="))
    {
        out.rects.push(LaneRect {
            worker: parse_attr(el, "data-worker")?,
            task: parse_attr(el, "data-task")?,
            x: parse_attr(el, "x")?,
            width: parse_attr(el, "width")?,
            start_ns: parse_attr(el, "data-start-ns")?,
            end_ns: parse_attr(el, "data-end-ns")?,
        });
    }
    let ready = elements(svg, "polyline")
        .into_iter()
        .find_map(|e| attr(e, "data-ready"))
        .ok_or("missing ready curve")?;
    for pair in ready.split(',').filter(|p| !p.is_empty()) {
        let (t, c) = pair.split_once(':').ok_or("bad ready pair")?;
        out.ready.push((
            t.parse().map_err(|_| "bad ready time")?,
            c.parse().map_err(|_| "bad ready count")?,
        ));
    }
    for el in elements(svg, "text")
        .into_iter()
        .filter(|e| e.contains("class=\"idle\""))
    {
        out.idle_ns.insert(
            parse_attr(el, "data-worker")?,
            parse_attr(el, "data-idle-ns")?,
        );
    }
    Ok(out)
}

/// Pairs of rectangles on the same worker lane whose time spans overlap.
pub fn overlapping(rects: &[LaneRect]) -> Vec<(u64, u64)> {
    let mut by_worker: BTreeMap<usize, Vec<&LaneRect>> = BTreeMap::new();
    for r in rects {
        by_worker.entry(r.worker).or_default().push(r);
    }
    let mut out = Vec::new();
    for lane in by_worker.values_mut() {
        lane.sort_by_key(|r| (r.start_ns, r.end_ns));
        for w in lane.windows(2) {
            if w[1].start_ns < w[0].end_ns {
                out.push((w[0].task, w[1].task));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_rects_and_curve() {
        let svg = r#"<svg>
<rect x="0" y="0" width="5" height="5" fill="white"/>
<rect x="1.5" y="2" width="3.000" height="24" data-worker="0" data-task="7" data-start-ns="10" data-end-ns="20"><title>t</title></rect>
<rect x="5" y="2" width="1" height="24" data-worker="0" data-task="8" data-start-ns="15" data-end-ns="30"><title>u</title></rect>
<polyline points="" data-ready="0:1,3:0"/>
<text x="4" y="1" class="idle" data-worker="0" data-idle-ns="42">idle</text>
</svg>"#;
        let t = parse(svg).unwrap();
        assert_eq!(t.rects.len(), 2);
        assert_eq!(t.rects[0].task, 7);
        assert_eq!(t.ready, vec![(0, 1), (3, 0)]);
        assert_eq!(t.idle_ns[&0], 42);
        assert_eq!(overlapping(&t.rects), vec![(7, 8)]);
    }
}
