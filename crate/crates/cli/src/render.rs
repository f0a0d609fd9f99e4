//! Static SVG renderings: attention-map heatmaps with the DP path and onset
//! ticks, and paired automatic/manual segmentation timelines. Output bytes
//! are deterministic for fixed inputs, which keeps them diffable in tests.

use anyhow::{bail, Result};

use acsr_core::ctc::PhoneInventory;
use acsr_core::model::AttentionMap;
use acsr_core::segmentation::{AttentionPath, Onset, Segmentation};

const CELL: usize = 8;
const TRACK_HEIGHT: usize = 28;
const TRACK_GAP: usize = 14;
const LABEL_SPACE: usize = 16;

/// Heatmap of the attention scores (darker = stronger), the attention path
/// outlined, and one vertical tick per detected onset.
pub fn render_attention_svg(
    map: &AttentionMap,
    path: &AttentionPath,
    onsets: &[Onset],
) -> Result<String> {
    let t_len = map.scores.nrows();
    if map.scores.ncols() != t_len {
        bail!("attention map must be square");
    }
    for &(i, j) in &path.cells {
        if i >= t_len || j >= t_len {
            bail!("path cell ({i}, {j}) outside the {t_len}-frame map");
        }
    }
    let size = t_len * CELL;
    let max = map.scores.iter().copied().fold(0.0f64, f64::max);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" \
         viewBox=\"0 0 {size} {size}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{size}\" height=\"{size}\" fill=\"white\"/>\n"
    ));
    // Key frame i runs down the rows, query frame j across the columns.
    for i in 0..t_len {
        for j in 0..t_len {
            let value = if max > 0.0 { map.scores[[i, j]] / max } else { 0.0 };
            let shade = (255.0 - value * 255.0).round() as u8;
            if shade == 255 {
                continue; // white on white
            }
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"rgb({shade},{shade},{shade})\"/>\n",
                j * CELL,
                i * CELL
            ));
        }
    }
    for &(i, j) in &path.cells {
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"none\" \
             stroke=\"#e6731e\" stroke-width=\"1\"/>\n",
            j * CELL,
            i * CELL
        ));
    }
    for onset in onsets {
        let y = onset.frame * CELL + CELL / 2;
        svg.push_str(&format!(
            "<line x1=\"0\" y1=\"{y}\" x2=\"{size}\" y2=\"{y}\" stroke=\"#2266cc\" \
             stroke-width=\"1\" stroke-dasharray=\"3 3\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn track(
    svg: &mut String,
    seg: &Segmentation,
    inventory: &PhoneInventory,
    y: usize,
    fill: &str,
) {
    for s in &seg.segments {
        let x = s.start * CELL;
        let w = (s.end - s.start) * CELL;
        svg.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{TRACK_HEIGHT}\" fill=\"{fill}\" \
             stroke=\"#444444\" stroke-width=\"1\"/>\n"
        ));
        let label = inventory.symbol(s.phone).unwrap_or("?");
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"10\" \
             text-anchor=\"middle\">{label}</text>\n",
            x + w / 2,
            y + TRACK_HEIGHT / 2 + 4
        ));
    }
}

/// Two aligned timelines (automatic above, manual below); regions where an
/// automatic segment overlaps a manual segment with the same label are
/// highlighted as true positives.
pub fn render_segmentation_svg(
    auto: &Segmentation,
    manual: &Segmentation,
    inventory: &PhoneInventory,
) -> Result<String> {
    if auto.frames != manual.frames {
        bail!(
            "segmentations cover different spans: {} vs {} frames",
            auto.frames,
            manual.frames
        );
    }
    let width = auto.frames * CELL;
    let height = LABEL_SPACE + 2 * TRACK_HEIGHT + TRACK_GAP;
    let auto_y = LABEL_SPACE;
    let manual_y = LABEL_SPACE + TRACK_HEIGHT + TRACK_GAP;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"0\" y=\"{}\" font-family=\"monospace\" font-size=\"10\">auto / manual</text>\n",
        LABEL_SPACE - 4
    ));
    track(&mut svg, auto, inventory, auto_y, "#dce6f2");
    track(&mut svg, manual, inventory, manual_y, "#e8e8e8");

    // True positives: same-label overlap between the tracks.
    for a in &auto.segments {
        for m in &manual.segments {
            if a.phone != m.phone {
                continue;
            }
            let lo = a.start.max(m.start);
            let hi = a.end.min(m.end);
            if lo >= hi {
                continue;
            }
            let x = lo * CELL;
            let w = (hi - lo) * CELL;
            let y = auto_y + TRACK_HEIGHT;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{TRACK_GAP}\" \
                 fill=\"#e6731e\"/>\n"
            ));
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use acsr_core::features::Modality;
    use acsr_core::segmentation::Segment;
    use ndarray::Array2;

    fn inventory() -> PhoneInventory {
        PhoneInventory::from_text("aa\nbb\n").unwrap()
    }

    #[test]
    fn single_cell_map_renders() {
        let map = AttentionMap::new(Array2::from_elem((1, 1), 1.0), Modality::Lips).unwrap();
        let path = AttentionPath { cells: vec![(0, 0)], cumulative: 1.0 };
        let svg = render_attention_svg(&map, &path, &[]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(!svg.contains("dasharray")); // no onset ticks
    }

    #[test]
    fn uniform_map_has_uniform_shade_and_outlined_diagonal() {
        let map = AttentionMap::new(Array2::from_elem((4, 4), 0.25), Modality::Lips).unwrap();
        let path = AttentionPath { cells: (0..4).map(|i| (i, i)).collect(), cumulative: 1.0 };
        let svg = render_attention_svg(&map, &path, &[]).unwrap();
        // All 16 cells share one shade (max-normalized to 0).
        assert_eq!(svg.matches("rgb(0,0,0)").count(), 16);
        assert_eq!(svg.matches("stroke=\"#e6731e\"").count(), 4);
    }

    #[test]
    fn identical_segmentations_highlight_everything() {
        let seg = Segmentation::new(
            vec![
                Segment { phone: 1, start: 0, end: 5 },
                Segment { phone: 2, start: 5, end: 10 },
            ],
            Modality::Lips,
            10,
        )
        .unwrap();
        let svg = render_segmentation_svg(&seg, &seg, &inventory()).unwrap();
        assert_eq!(svg.matches("#e6731e").count(), 2);
        assert!(svg.contains(">aa<"));
        assert!(svg.contains(">bb<"));
    }

    #[test]
    fn label_disjoint_segmentations_highlight_nothing() {
        let auto = Segmentation::new(
            vec![Segment { phone: 1, start: 0, end: 10 }],
            Modality::Lips,
            10,
        )
        .unwrap();
        let manual = Segmentation::new(
            vec![Segment { phone: 2, start: 0, end: 10 }],
            Modality::Lips,
            10,
        )
        .unwrap();
        let svg = render_segmentation_svg(&auto, &manual, &inventory()).unwrap();
        assert_eq!(svg.matches("#e6731e").count(), 0);
    }

    fn compare_golden(name: &str, got: &str) {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/golden")
            .join(name);
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, got).unwrap();
            return;
        }
        let want = std::fs::read_to_string(&path)
            .unwrap_or_else(|_| panic!("missing golden {name}; run with UPDATE_GOLDEN=1"));
        assert_eq!(got, want, "golden {name} drifted; rerun with UPDATE_GOLDEN=1 if intended");
    }

    #[test]
    fn golden_attention_svg_is_byte_stable() {
        use acsr_core::segmentation::{attention_path, detect_onsets};
        // Deterministic fixture: strong planted path over a low background.
        let t = 8usize;
        let planted: Vec<(usize, usize)> = vec![
            (0, 0), (1, 1), (2, 2), (3, 2), (4, 2), (5, 3), (6, 4), (6, 5), (7, 6), (7, 7),
        ];
        let mut scores = Array2::from_elem((t, t), 0.02);
        for &(i, j) in &planted {
            scores[[i, j]] = 0.9;
        }
        for mut row in scores.outer_iter_mut() {
            let sum: f64 = row.sum();
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let map = AttentionMap::new(scores, Modality::HandShape).unwrap();
        let path = attention_path(&map, 30).unwrap();
        assert_eq!(path.cells, planted, "fixture path drifted");
        let onsets = detect_onsets(&path);
        let svg = render_attention_svg(&map, &path, &onsets).unwrap();
        compare_golden("attention.svg", &svg);
    }

    #[test]
    fn golden_timeline_svg_is_byte_stable() {
        let auto = Segmentation::new(
            vec![
                Segment { phone: 1, start: 0, end: 6 },
                Segment { phone: 2, start: 6, end: 13 },
                Segment { phone: 1, start: 13, end: 20 },
            ],
            Modality::Lips,
            20,
        )
        .unwrap();
        let manual = Segmentation::new(
            vec![
                Segment { phone: 1, start: 0, end: 5 },
                Segment { phone: 2, start: 5, end: 14 },
                Segment { phone: 1, start: 14, end: 20 },
            ],
            Modality::Lips,
            20,
        )
        .unwrap();
        let svg = render_segmentation_svg(&auto, &manual, &inventory()).unwrap();
        compare_golden("timeline.svg", &svg);
    }

    #[test]
    fn frame_mismatch_is_rejected() {
        let a = Segmentation::new(
            vec![Segment { phone: 1, start: 0, end: 5 }],
            Modality::Lips,
            5,
        )
        .unwrap();
        let b = Segmentation::new(
            vec![Segment { phone: 1, start: 0, end: 6 }],
            Modality::Lips,
            6,
        )
        .unwrap();
        assert!(render_segmentation_svg(&a, &b, &inventory()).is_err());
    }
}
