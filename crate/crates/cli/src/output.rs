//! CSV and SVG emission.

use std::io::Write;
use std::path::Path;

use plotters::prelude::*;

use crate::error::{CliError, Result};
use crate::experiment::Results;

pub const CSV_HEADER: [&str; 6] = ["method", "gamma", "run", "iteration", "sq_dist", "lyapunov"];

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Rows ordered by (method, gamma, run, iteration) in config order.
pub fn write_csv<W: Write>(results: &Results, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for (cell, runs) in results.cells.iter().zip(&results.runs) {
        let gamma = fmt_f64(cell.spec.gamma);
        for (r, rows) in runs.iter().enumerate() {
            let run = r.to_string();
            for row in rows {
                let lyap = row.lyapunov.map(fmt_f64).unwrap_or_default();
                w.write_record([
                    cell.label.as_str(),
                    gamma.as_str(),
                    run.as_str(),
                    row.iteration.to_string().as_str(),
                    fmt_f64(row.sq_dist).as_str(),
                    lyap.as_str(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(results: &Results, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_csv(results, std::io::BufWriter::new(file)).map_err(|e| CliError::io(path, e.into()))
}

/// Panels in first-appearance order: one per explicit γ, plus one shared
/// panel for all theory stepsizes.
fn panels(results: &Results) -> Vec<(String, Vec<usize>)> {
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, c) in results.cells.iter().enumerate() {
        let title = if c.theory {
            "theory stepsizes".to_string()
        } else {
            format!("γ = {}", fmt_f64(c.spec.gamma))
        };
        match out.iter_mut().find(|(t, _)| *t == title) {
            Some((_, members)) => members.push(i),
            None => out.push((title, vec![i])),
        }
    }
    out
}

const PANEL_W: u32 = 420;
const PANEL_H: u32 = 340;
const Y_FLOOR: f64 = 1e-300;
const Y_CAP: f64 = 1e300;

fn plot_value(y: f64) -> f64 {
    if y.is_nan() {
        Y_CAP
    } else {
        y.clamp(Y_FLOOR, Y_CAP)
    }
}

/// Self-contained SVG: one log-scale panel of mean `sq_dist` per γ.
pub fn render_svg(results: &Results) -> String {
    let groups = panels(results);
    let mut svg = String::new();
    {
        let width = PANEL_W * groups.len() as u32;
        let root = SVGBackend::with_string(&mut svg, (width, PANEL_H)).into_drawing_area();
        root.fill(&WHITE).expect("svg fill");
        let areas = root.split_evenly((1, groups.len()));
        for ((title, members), area) in groups.iter().zip(areas) {
            draw_panel(results, title, members, &area).expect("svg panel");
        }
        root.present().expect("svg present");
    }
    svg
}

fn draw_panel(
    results: &Results,
    title: &str,
    members: &[usize],
    area: &DrawingArea<SVGBackend<'_>, plotters::coord::Shift>,
) -> std::result::Result<(), DrawingAreaErrorKind<std::io::Error>> {
    let curves: Vec<(usize, Vec<(f64, f64)>)> = members
        .iter()
        .map(|&c| {
            let pts = results
                .mean_curve(c)
                .into_iter()
                .map(|(k, y)| (k as f64, plot_value(y)))
                .collect();
            (c, pts)
        })
        .collect();
    let x_max = curves
        .iter()
        .flat_map(|(_, p)| p.last().map(|q| q.0))
        .fold(1.0, f64::max);
    let ys = curves.iter().flat_map(|(_, p)| p.iter().map(|q| q.1));
    let (lo, hi) = ys.fold((f64::INFINITY, 0.0f64), |(lo, hi), y| (lo.min(y), hi.max(y)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo / 10.0, lo * 10.0) };
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(30)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..x_max, (lo..hi).log_scale())?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .y_desc("mean ‖x_k − x*‖²")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()?;
    for (slot, (c, pts)) in curves.into_iter().enumerate() {
        let colour = Palette99::pick(slot).to_rgba();
        chart
            .draw_series(LineSeries::new(pts, colour.stroke_width(2)))?
            .label(results.cells[c].label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], colour.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::UpperRight)
        .draw()?;
    Ok(())
}

pub fn write_svg_file(results: &Results, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(results)).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{Cell, Row};
    use sppm_core::{CorrectionStrategy, MethodSpec, Sampler};

    fn results() -> Results {
        let spec = |g: f64| MethodSpec::new(CorrectionStrategy::None, Sampler::uniform(2), g, 2, None).unwrap();
        let rows = |scale: f64, lyap: bool| {
            (0..3)
                .map(|k| Row {
                    iteration: k,
                    sq_dist: scale / (k as f64 + 1.0),
                    lyapunov: lyap.then_some(0.1),
                })
                .collect::<Vec<_>>()
        };
        Results {
            cells: vec![
                Cell {
                    label: "first-method".into(),
                    spec: spec(0.5),
                    theory: false,
                },
                Cell {
                    label: "second-method".into(),
                    spec: spec(1e-4),
                    theory: true,
                },
            ],
            runs: vec![vec![rows(1.0, true), rows(3.0, true)], vec![rows(1e-20, false)]],
        }
    }

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1e-4, 1.0, 123456.789, 1e-300, 5e-324, 1e100, 2.0f64.sqrt()] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1.0), "1.0");
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&results(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method,gamma,run,iteration,sq_dist,lyapunov");
        assert_eq!(lines[1], "first-method,0.5,0,0,1.0,0.1");
        assert_eq!(lines[4], "first-method,0.5,1,0,3.0,0.1");
        assert_eq!(lines[7], "second-method,0.0001,0,0,1e-20,");
        assert_eq!(lines.len(), 10);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn svg_has_one_panel_per_gamma_and_no_external_refs() {
        let svg = render_svg(&results());
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("γ = 0.5") && svg.contains("theory stepsizes"));
        assert!(!svg.contains("href") && !svg.contains("http://www.w3.org/1999/xlink"));
        assert!(svg.contains("first-method") && svg.contains("second-method"));
    }

    #[test]
    fn svg_survives_zeros_and_overflow() {
        let mut r = results();
        r.runs[1][0][2].sq_dist = 0.0;
        r.runs[0][0][2].sq_dist = f64::INFINITY;
        let svg = render_svg(&r);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
