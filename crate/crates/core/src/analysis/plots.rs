use std::path::Path;

use plotters::prelude::*;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dashed,
    Points,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
    /// Index into the palette; series sharing a colour belong together.
    pub colour: usize,
}

#[derive(Clone, Debug)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    /// Replaces numeric x tick labels, indexed by rounded x.
    pub x_ticks: Option<Vec<String>>,
    pub series: Vec<Series>,
}

const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

fn plot_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> Error + '_ {
    move |e| Error::Data(format!("plotting {}: {e}", path.display()))
}

/// Renders `fig` as an SVG file.
pub fn render_svg(fig: &Figure, path: &Path) -> Result<()> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err(path))?;
        let (x0, x1) = fig.x_range;
        let (y0, y1) = fig.y_range;
        let mut chart = ChartBuilder::on(&root)
            .caption(&fig.title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(plot_err(path))?;
        let ticks = fig.x_ticks.clone();
        let formatter = move |x: &f64| match &ticks {
            Some(t) => {
                let i = x.round();
                if (x - i).abs() < 1e-9 && i >= 0.0 {
                    t.get(i as usize).cloned().unwrap_or_default()
                } else {
                    String::new()
                }
            }
            None => format!("{x:.2}"),
        };
        let mut mesh = chart.configure_mesh();
        mesh.x_desc(&fig.x_label)
            .y_desc(&fig.y_label)
            .x_label_formatter(&formatter);
        if let Some(t) = &fig.x_ticks {
            mesh.x_labels(t.len());
        }
        mesh.draw().map_err(plot_err(path))?;
        for s in &fig.series {
            let colour = PALETTE[s.colour % PALETTE.len()];
            let pts = s.points.iter().copied();
            let anno = match s.mark {
                Mark::Line => chart
                    .draw_series(LineSeries::new(pts, colour.stroke_width(2)))
                    .map_err(plot_err(path))?,
                Mark::Dashed => chart
                    .draw_series(DashedLineSeries::new(pts, 6, 4, colour.stroke_width(1)))
                    .map_err(plot_err(path))?,
                Mark::Points => chart
                    .draw_series(pts.map(|p| Circle::new(p, 3, colour.filled())))
                    .map_err(plot_err(path))?,
            };
            anno.label(&s.name).legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 16, y)], colour.stroke_width(2))
            });
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .position(SeriesLabelPosition::LowerLeft)
            .draw()
            .map_err(plot_err(path))?;
        root.present().map_err(plot_err(path))?;
    }
    crate::util::write_atomic(path, svg.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_an_svg_document() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.svg");
        let fig = Figure {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            x_range: (0.0, 2.0),
            y_range: (0.0, 1.0),
            x_ticks: Some(vec!["a".into(), "b".into(), "c".into()]),
            series: vec![
                Series {
                    name: "line".into(),
                    points: vec![(0.0, 0.1), (1.0, 0.5), (2.0, 0.9)],
                    mark: Mark::Line,
                    colour: 0,
                },
                Series {
                    name: "pts".into(),
                    points: vec![(0.5, 0.5)],
                    mark: Mark::Points,
                    colour: 1,
                },
            ],
        };
        render_svg(&fig, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("</svg>"));
    }
}
