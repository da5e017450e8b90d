//! Tables, SVG line plots and PNG image grids.
//!
//! Plots are rendered from a [`Table`] only, so every figure can be
//! regenerated from the CSV written next to it.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::io_util;

/// Numeric columns with a header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: Vec<String>, rows: Vec<Vec<f64>>) -> Self {
        Self { headers, rows }
    }

    /// Table from named columns of equal length.
    pub fn from_columns(columns: Vec<(&str, Vec<f64>)>) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.1.len());
        if columns.iter().any(|c| c.1.len() != n) {
            return Err(Error::dim("columns differ in length"));
        }
        let headers = columns.iter().map(|c| c.0.to_string()).collect();
        let rows = (0..n).map(|i| columns.iter().map(|c| c.1[i]).collect()).collect();
        Ok(Self { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::arg(format!("no column named {name:?}")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers).map_err(csv_err)?;
        for row in &self.rows {
            if row.len() != self.headers.len() {
                return Err(Error::dim("row length differs from header"));
            }
            w.write_record(row.iter().map(|x| x.to_string())).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::format("CSV", e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(String::from)
            .collect::<Vec<_>>();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::format("CSV", format!("{f:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self { headers, rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io_util::write_atomic(path, self.to_csv_string()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("CSV", e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            log_y: false,
            width: 640,
            height: 400,
        }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line plot of the `y_columns` of `table` against `x_column`. Non-finite
/// points (and non-positive ones on a log axis) are skipped.
pub fn svg_line_plot(
    table: &Table,
    x_column: &str,
    y_columns: &[&str],
    opts: &PlotOptions,
) -> Result<String> {
    let xs = table.column(x_column)?;
    let series = y_columns
        .iter()
        .map(|c| table.column(c).map(|v| (*c, v)))
        .collect::<Result<Vec<_>>>()?;
    let ty = |y: f64| if opts.log_y { y.log10() } else { y };
    let points: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, ys)| {
            xs.iter()
                .zip(ys)
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!opts.log_y || **y > 0.0))
                .map(|(&x, &y)| (x, ty(y)))
                .collect()
        })
        .collect();

    let all = points.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y0 -= 0.5;
        y1 += 0.5;
    }

    let (w, h) = (opts.width as f64, opts.height as f64);
    let (left, right, top, bottom) = (64.0, 16.0, 32.0, 48.0);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        w / 2.0,
        escape(&opts.title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let ylabel = if opts.log_y { format!("1e{yv:.1}") } else { format!("{yv:.3}") };
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            px(xv),
            h - bottom + 16.0,
            xv
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ylabel}</text>"#,
            left - 4.0,
            py(yv) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (left + w - right) / 2.0,
        h - 8.0,
        escape(&opts.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(&opts.y_label)
    );
    for (k, ((name, _), pts)) in series.iter().zip(&points).enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        if !pts.is_empty() {
            let d: Vec<String> = pts
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| format!("{}{:.2} {:.2}", if i == 0 { 'M' } else { 'L' }, px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                d.join(" ")
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" fill="{colour}" text-anchor="end">{}</text>"#,
            w - right - 4.0,
            top + 14.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Tiles images stored one per table row (values in `[-1, 1]`, row-major
/// `side x side`) into a grayscale grid with a one-pixel gutter.
pub fn image_grid(table: &Table, side: usize, columns: usize) -> Result<GrayImage> {
    if columns == 0 || side == 0 {
        return Err(Error::arg("grid needs positive side and column count"));
    }
    if table.rows.iter().any(|r| r.len() != side * side) {
        return Err(Error::dim(format!("rows must hold {side}x{side} images")));
    }
    let n = table.rows.len();
    let grid_rows = n.div_ceil(columns).max(1);
    let cell = side as u32 + 1;
    let mut img = GrayImage::from_pixel(columns as u32 * cell + 1, grid_rows as u32 * cell + 1, Luma([128]));
    for (k, row) in table.rows.iter().enumerate() {
        let (gy, gx) = ((k / columns) as u32, (k % columns) as u32);
        for (i, &x) in row.iter().enumerate() {
            let v = ((x.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
            let (r, c) = ((i / side) as u32, (i % side) as u32);
            img.put_pixel(1 + gx * cell + c, 1 + gy * cell + r, Luma([v]));
        }
    }
    Ok(img)
}

pub fn save_png(img: &GrayImage, path: &Path) -> Result<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    io_util::write_atomic(path, buf.get_ref())
}

pub fn save_text(text: &str, path: &Path) -> Result<()> {
    io_util::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let t = Table::from_columns(vec![("i", vec![1.0, 2.0]), ("s", vec![0.5, -1e-300])]).unwrap();
        let text = t.to_csv_string().unwrap();
        assert!(text.starts_with("i,s\n"));
        assert_eq!(Table::read_csv(text.as_bytes()).unwrap(), t);
        assert!(Table::read_csv("a\nx\n".as_bytes()).is_err());
    }

    #[test]
    fn svg_mentions_series() {
        let t = Table::from_columns(vec![("x", vec![0.0, 1.0, 2.0]), ("y", vec![3.0, 2.0, 0.0])]).unwrap();
        let opts = PlotOptions {
            log_y: true,
            ..Default::default()
        };
        let svg = svg_line_plot(&t, "x", &["y"], &opts).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains(">y</text>"));
        assert!(svg_line_plot(&t, "x", &["z"], &opts).is_err());
        let empty = Table::from_columns(vec![("x", vec![]), ("y", vec![])]).unwrap();
        assert!(svg_line_plot(&empty, "x", &["y"], &opts).is_ok());
    }

    #[test]
    fn grid_layout() {
        let t = Table::new(vec![], vec![vec![-1.0, 1.0, 1.0, -1.0]; 3]);
        let img = image_grid(&t, 2, 2).unwrap();
        assert_eq!(img.dimensions(), (7, 7));
        assert_eq!(img.get_pixel(1, 1)[0], 0);
        assert_eq!(img.get_pixel(2, 1)[0], 255);
        assert_eq!(img.get_pixel(1, 4)[0], 0);
        assert_eq!(img.get_pixel(4, 4)[0], 128);
    }
}
