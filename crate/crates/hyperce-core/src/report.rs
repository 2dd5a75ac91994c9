//! Benchmark report rendering: CSV serialization (round-trip safe) and a
//! self-contained multi-panel SVG figure.
//!
//! CSV stores the cell means in dB (`10·log10`), one panel per delay
//! profile in the SVG, one polyline per (estimator, Doppler) series.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::benchmark::{ReportRow, ReportTable};
use crate::channel::TdlProfileName;
use crate::{Error, Result};

/// The CSV column order.
pub const CSV_HEADER: [&str; 6] = [
    "estimator",
    "profile",
    "doppler_hz",
    "snr_db",
    "mean_nmse_db",
    "samples",
];

/// Convert a linear NMSE to dB. Zero maps to `-inf`, which the CSV codec
/// round-trips.
pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Convert a dB NMSE back to linear scale.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    estimator: String,
    profile: String,
    doppler_hz: f64,
    snr_db: f64,
    mean_nmse_db: f64,
    samples: usize,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// Write a report table as CSV: the header line, then one line per row,
/// with means converted to dB. Floats print in shortest round-trip form.
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] if the table fails validation and
/// [`Error::Format`] on serialization failure.
pub fn write_csv<W: Write>(table: &ReportTable, out: W) -> Result<()> {
    table.validate()?;
    let mut w = csv::Writer::from_writer(out);
    for row in &table.rows {
        w.serialize(CsvRow {
            estimator: row.estimator.clone(),
            profile: row.profile.label().to_string(),
            doppler_hz: row.doppler_hz,
            snr_db: row.snr_db,
            mean_nmse_db: to_db(row.mean_nmse),
            samples: row.samples,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a CSV report back into a table, converting dB means to linear.
///
/// # Errors
///
/// Returns [`Error::Format`] if the header or any row does not parse, and
/// [`Error::InvalidConfig`] if the decoded table fails validation.
pub fn read_csv<R: Read>(input: R) -> Result<ReportTable> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = r.headers().map_err(csv_err)?;
    if headers != CSV_HEADER.as_slice() {
        return Err(Error::Format(format!(
            "unexpected csv header {headers:?}; expected {CSV_HEADER:?}"
        )));
    }
    let mut rows = Vec::new();
    for record in r.deserialize() {
        let record: CsvRow = record.map_err(csv_err)?;
        rows.push(ReportRow {
            estimator: record.estimator,
            profile: TdlProfileName::parse(&record.profile)?,
            doppler_hz: record.doppler_hz,
            snr_db: record.snr_db,
            mean_nmse: from_db(record.mean_nmse_db),
            samples: record.samples,
        });
    }
    let table = ReportTable { rows };
    table.validate()?;
    Ok(table)
}

const PANEL_W: f64 = 380.0;
const PANEL_H: f64 = 280.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 46.0;
const LEGEND_ROW_H: f64 = 18.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A plotted curve: one estimator at one Doppler.
struct Series {
    estimator: String,
    doppler_hz: f64,
    color: &'static str,
}

impl Series {
    fn legend_label(&self, many_dopplers: bool) -> String {
        if many_dopplers {
            format!("{} @ {} Hz", self.estimator, self.doppler_hz)
        } else {
            self.estimator.clone()
        }
    }
}

/// Render the table as a multi-panel SVG: one panel per delay profile,
/// NMSE in dB against SNR, one polyline per (estimator, Doppler) series.
/// Non-finite means (for example the perfect-CSI floor at `-inf` dB) are
/// dropped from their polyline.
///
/// # Errors
///
/// Returns [`Error::InvalidConfig`] if the table fails validation and
/// [`Error::Io`] on write failure.
pub fn write_svg<W: Write>(table: &ReportTable, mut out: W) -> Result<()> {
    table.validate()?;

    // Panels and series in first-appearance order.
    let mut profiles: Vec<TdlProfileName> = Vec::new();
    let mut series: Vec<Series> = Vec::new();
    for row in &table.rows {
        if !profiles.contains(&row.profile) {
            profiles.push(row.profile);
        }
        if !series
            .iter()
            .any(|s| s.estimator == row.estimator && s.doppler_hz == row.doppler_hz)
        {
            series.push(Series {
                estimator: row.estimator.clone(),
                doppler_hz: row.doppler_hz,
                color: PALETTE[series.len() % PALETTE.len()],
            });
        }
    }
    let many_dopplers = series
        .iter()
        .map(|s| s.doppler_hz.to_bits())
        .collect::<BTreeSet<_>>()
        .len()
        > 1;

    let legend_cols = ((PANEL_W * profiles.len() as f64 - 20.0) / 190.0).max(1.0) as usize;
    let legend_rows = series.len().div_ceil(legend_cols);
    let legend_h = legend_rows as f64 * LEGEND_ROW_H + 8.0;
    let fig_w = PANEL_W * profiles.len() as f64;
    let fig_h = PANEL_H + legend_h;

    // Shared axes across panels keep the figure comparable.
    let snrs: Vec<f64> = {
        let mut s: Vec<f64> = table.rows.iter().map(|r| r.snr_db).collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    };
    let (x_min, x_max) = pad_range(snrs[0], snrs[snrs.len() - 1]);
    let finite_db: Vec<f64> = table
        .rows
        .iter()
        .map(|r| to_db(r.mean_nmse))
        .filter(|v| v.is_finite())
        .collect();
    let (y_min, y_max) = if finite_db.is_empty() {
        (-1.0, 1.0)
    } else {
        let lo = finite_db.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        pad_range(lo, hi)
    };

    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{fig_w:.0}\" height=\"{fig_h:.0}\" \
         viewBox=\"0 0 {fig_w:.0} {fig_h:.0}\" font-family=\"sans-serif\" font-size=\"11\">"
    )?;
    writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>")?;

    for (pi, profile) in profiles.iter().enumerate() {
        let ox = pi as f64 * PANEL_W;
        let plot_x = ox + MARGIN_L;
        let plot_y = MARGIN_T;
        let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
        let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
        let sx = |v: f64| plot_x + (v - x_min) / (x_max - x_min) * plot_w;
        let sy = |v: f64| plot_y + (y_max - v) / (y_max - y_min) * plot_h;

        writeln!(
            out,
            "<rect x=\"{plot_x:.1}\" y=\"{plot_y:.1}\" width=\"{plot_w:.1}\" \
             height=\"{plot_h:.1}\" fill=\"none\" stroke=\"#444\"/>"
        )?;
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-weight=\"bold\">{}</text>",
            plot_x + plot_w / 2.0,
            plot_y - 10.0,
            xml_escape(profile.label())
        )?;

        // X ticks at the swept SNRs (thinned if dense) and a shared label.
        let stride = snrs.len().div_ceil(8).max(1);
        for snr in snrs.iter().step_by(stride) {
            let x = sx(*snr);
            writeln!(
                out,
                "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>",
                plot_y + plot_h,
                plot_y + plot_h + 4.0
            )?;
            writeln!(
                out,
                "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{snr}</text>",
                plot_y + plot_h + 16.0
            )?;
        }
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">SNR (dB)</text>",
            plot_x + plot_w / 2.0,
            plot_y + plot_h + 32.0
        )?;

        // Y ticks: five evenly spaced, gridlines behind the data.
        for ti in 0..5 {
            let v = y_min + (y_max - y_min) * ti as f64 / 4.0;
            let y = sy(v);
            writeln!(
                out,
                "<line x1=\"{plot_x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
                 stroke=\"#ddd\"/>",
                plot_x + plot_w
            )?;
            writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.1}</text>",
                plot_x - 6.0,
                y + 4.0
            )?;
        }
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" \
             transform=\"rotate(-90 {0:.1} {1:.1})\">NMSE (dB)</text>",
            ox + 14.0,
            plot_y + plot_h / 2.0
        )?;

        for s in &series {
            let mut pts: Vec<(f64, f64)> = table
                .rows
                .iter()
                .filter(|r| {
                    r.profile == *profile
                        && r.estimator == s.estimator
                        && r.doppler_hz == s.doppler_hz
                })
                .map(|r| (r.snr_db, to_db(r.mean_nmse)))
                .filter(|(_, db)| db.is_finite())
                .collect();
            if pts.is_empty() {
                continue;
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let coords: Vec<String> = pts
                .iter()
                .map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y)))
                .collect();
            writeln!(
                out,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.6\"/>",
                coords.join(" "),
                s.color
            )?;
            for c in &coords {
                let (x, y) = c.split_once(',').unwrap();
                writeln!(
                    out,
                    "<circle cx=\"{x}\" cy=\"{y}\" r=\"2.2\" fill=\"{}\"/>",
                    s.color
                )?;
            }
        }
    }

    // Legend strip below the panels.
    for (si, s) in series.iter().enumerate() {
        let col = si % legend_cols;
        let lrow = si / legend_cols;
        let x = 12.0 + col as f64 * 190.0;
        let y = PANEL_H + 8.0 + lrow as f64 * LEGEND_ROW_H;
        writeln!(
            out,
            "<line x1=\"{x:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"{}\" \
             stroke-width=\"2\"/>",
            x + 22.0,
            s.color
        )?;
        writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
            x + 28.0,
            y + 4.0,
            xml_escape(&s.legend_label(many_dopplers))
        )?;
    }

    writeln!(out, "</svg>")?;
    Ok(())
}

/// Pad a data range so flat or degenerate series still get a drawable axis.
fn pad_range(lo: f64, hi: f64) -> (f64, f64) {
    if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(estimator: &str, snr_db: f64, mean_nmse: f64) -> ReportRow {
        ReportRow {
            estimator: estimator.to_string(),
            profile: TdlProfileName::TdlA,
            doppler_hz: 100.0,
            snr_db,
            mean_nmse,
            samples: 64,
        }
    }

    #[test]
    fn test_single_row_csv_is_header_plus_one_line() {
        let table = ReportTable {
            rows: vec![row("LMMSE", 10.0, 1.0)],
        };
        let mut buf = Vec::new();
        write_csv(&table, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "estimator,profile,doppler_hz,snr_db,mean_nmse_db,samples");
        // A linear mean of 1 is exactly 0 dB.
        assert_eq!(lines[1], "LMMSE,TDL-A,100.0,10.0,0.0,64");
    }

    #[test]
    fn test_csv_round_trips_awkward_floats() {
        let table = ReportTable {
            rows: vec![
                row("LS_BILINEAR", 0.0, 0.123_456_789_012_345_67),
                row("LS_BILINEAR", 10.0, 3.9e-5),
                row("PERFECT_CSI", 10.0, 0.0),
            ],
        };
        let mut buf = Vec::new();
        write_csv(&table, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows.len(), 3);
        for (a, b) in table.rows.iter().zip(&back.rows) {
            assert_eq!(a.estimator, b.estimator);
            assert_eq!(a.profile, b.profile);
            assert_eq!(a.doppler_hz, b.doppler_hz);
            assert_eq!(a.snr_db, b.snr_db);
            assert_eq!(a.samples, b.samples);
            let tol = 1e-9 * a.mean_nmse.abs().max(1e-300);
            assert!(
                (a.mean_nmse - b.mean_nmse).abs() <= tol,
                "{} vs {}",
                a.mean_nmse,
                b.mean_nmse
            );
        }
        // The zero mean survives as exactly zero via the -inf dB encoding.
        assert_eq!(back.rows[2].mean_nmse, 0.0);
    }

    #[test]
    fn test_read_csv_rejects_malformed_input() {
        assert!(read_csv("estimator,profile\nLMMSE,TDL-A".as_bytes()).is_err());
        let bad_profile =
            "estimator,profile,doppler_hz,snr_db,mean_nmse_db,samples\nLMMSE,TDL-X,100,10,0,64";
        assert!(read_csv(bad_profile.as_bytes()).is_err());
        let bad_float =
            "estimator,profile,doppler_hz,snr_db,mean_nmse_db,samples\nLMMSE,TDL-A,abc,10,0,64";
        assert!(read_csv(bad_float.as_bytes()).is_err());
        assert!(read_csv("".as_bytes()).is_err());
    }

    #[test]
    fn test_svg_draws_a_panel_per_profile_and_a_polyline_per_series() {
        let mut rows = Vec::new();
        for profile in [TdlProfileName::TdlA, TdlProfileName::TdlB] {
            for est in ["LS_BILINEAR", "LMMSE"] {
                for snr in [0.0, 10.0, 20.0] {
                    rows.push(ReportRow {
                        estimator: est.to_string(),
                        profile,
                        doppler_hz: 100.0,
                        snr_db: snr,
                        mean_nmse: 0.1 / (1.0 + snr),
                        samples: 8,
                    });
                }
            }
        }
        let table = ReportTable { rows };
        let mut buf = Vec::new();
        write_svg(&table, &mut buf).unwrap();
        let svg = String::from_utf8(buf).unwrap();
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.contains(">TDL-A<") && svg.contains(">TDL-B<"));
        assert!(svg.contains("NMSE (dB)") && svg.contains("SNR (dB)"));
    }

    #[test]
    fn test_svg_drops_nonfinite_points_but_keeps_the_series() {
        let table = ReportTable {
            rows: vec![
                row("PERFECT_CSI", 0.0, 0.0),
                row("PERFECT_CSI", 10.0, 0.5),
                row("PERFECT_CSI", 20.0, 0.25),
            ],
        };
        let mut buf = Vec::new();
        write_svg(&table, &mut buf).unwrap();
        let svg = String::from_utf8(buf).unwrap();
        // One polyline with two surviving points (two markers).
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn test_db_conversion_round_trip_and_zero() {
        assert_eq!(to_db(1.0), 0.0);
        assert!((to_db(0.5) - (-3.010_299_956_639_812)).abs() < 1e-12);
        assert_eq!(to_db(0.0), f64::NEG_INFINITY);
        assert_eq!(from_db(f64::NEG_INFINITY), 0.0);
        let v = 0.037_2;
        assert!((from_db(to_db(v)) - v).abs() < 1e-15);
    }
}
