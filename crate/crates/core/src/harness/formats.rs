//! On-disk formats: timeseries and Poincare CSV, the Wigner grid text file,
//! and a contour rendering of a grid.
//!
//! Every number is written as `{:.8e}` (nine significant digits, no locale).

use std::io::{BufRead, Write};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::observables::{GridSpec, ObservableRecord, WignerGrid};

pub const TIMESERIES_HEADER: [&str; 5] = ["t", "excitation", "purity", "linear_entropy", "von_neumann"];
pub const POINCARE_HEADER: [&str; 2] = ["x", "y"];
const GRID_MAGIC: &str = "# kerrchaos wigner grid v1";

pub fn fmt_num(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::Format(format!("refusing to write non-finite value {x}")));
    }
    Ok(format!("{x:.8e}"))
}

fn parse_num(s: &str) -> Result<f64> {
    let x: f64 = s.trim().parse().map_err(|_| Error::Format(format!("not a number: {s:?}")))?;
    if !x.is_finite() {
        return Err(Error::Format(format!("non-finite value {s:?}")));
    }
    Ok(x)
}

pub fn write_timeseries<W: Write>(out: W, records: &[ObservableRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMESERIES_HEADER)?;
    for r in records {
        w.write_record([
            fmt_num(r.t)?,
            fmt_num(r.excitation)?,
            fmt_num(r.purity)?,
            fmt_num(r.linear_entropy)?,
            fmt_num(r.von_neumann)?,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_timeseries<R: std::io::Read>(input: R) -> Result<Vec<ObservableRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(TIMESERIES_HEADER.iter().copied()) {
        return Err(Error::Format("unexpected timeseries header".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let v = |k: usize| parse_num(&rec[k]);
        out.push(ObservableRecord {
            t: v(0)?,
            excitation: v(1)?,
            purity: v(2)?,
            linear_entropy: v(3)?,
            von_neumann: v(4)?,
        });
    }
    Ok(out)
}

pub fn write_points<W: Write>(out: W, points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POINCARE_HEADER)?;
    for &(x, y) in points {
        w.write_record([fmt_num(x)?, fmt_num(y)?])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points<R: std::io::Read>(input: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(POINCARE_HEADER.iter().copied()) {
        return Err(Error::Format("unexpected Poincare header".into()));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok((parse_num(&rec[0])?, parse_num(&rec[1])?))
        })
        .collect()
}

/// Wigner grid plus the time it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub t: f64,
    pub grid: WignerGrid,
}

impl GridFile {
    /// Header lines (`key value`), a `data` line, then `ny` rows of `nx`
    /// values; row `j` holds `y = y_min + j dy`.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let s = &self.grid.spec;
        writeln!(out, "{GRID_MAGIC}")?;
        writeln!(out, "t {}", fmt_num(self.t)?)?;
        writeln!(out, "x_min {}", fmt_num(s.x_min)?)?;
        writeln!(out, "x_max {}", fmt_num(s.x_max)?)?;
        writeln!(out, "y_min {}", fmt_num(s.y_min)?)?;
        writeln!(out, "y_max {}", fmt_num(s.y_max)?)?;
        writeln!(out, "nx {}", s.nx)?;
        writeln!(out, "ny {}", s.ny)?;
        writeln!(out, "data")?;
        for j in 0..s.ny {
            let row: Result<Vec<String>> = (0..s.nx).map(|i| fmt_num(self.grid.at(i, j))).collect();
            writeln!(out, "{}", row?.join(" "))?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Format("grid file ended early".into()))?.map_err(Error::from)
        };
        if next()? != GRID_MAGIC {
            return Err(Error::Format("not a Wigner grid file".into()));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = next()?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                _ => Err(Error::Format(format!("expected {key}, got {line:?}"))),
            }
        };
        let t = parse_num(&field("t")?)?;
        let x_min = parse_num(&field("x_min")?)?;
        let x_max = parse_num(&field("x_max")?)?;
        let y_min = parse_num(&field("y_min")?)?;
        let y_max = parse_num(&field("y_max")?)?;
        let count = |s: String| s.trim().parse::<usize>().map_err(|_| Error::Format(format!("bad count {s:?}")));
        let nx = count(field("nx")?)?;
        let ny = count(field("ny")?)?;
        let spec = GridSpec { x_min, x_max, y_min, y_max, nx, ny };
        spec.validate().map_err(|e| Error::Format(e.to_string()))?;
        if next()? != "data" {
            return Err(Error::Format("missing data marker".into()));
        }
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let line = next()?;
            let row: Vec<f64> = line.split_whitespace().map(parse_num).collect::<Result<_>>()?;
            if row.len() != nx {
                return Err(Error::Format(format!("row {j} has {} values, expected {nx}", row.len())));
            }
            values.extend(row);
        }
        Ok(GridFile { t, grid: WignerGrid { spec, values } })
    }
}

/// Contour image of a grid: diverging colour map (blue negative, red
/// positive) with `levels` dark iso-lines on each side of zero.
pub fn render_contours(grid: &WignerGrid, pixels: u32, levels: usize) -> Result<RgbImage> {
    let s = &grid.spec;
    if pixels < 2 || levels == 0 {
        return Err(Error::InvalidParameter("need at least 2 pixels and 1 level".into()));
    }
    let scale = grid.max().abs().max(grid.min().abs()).max(f64::MIN_POSITIVE);
    let aspect = (s.y_max - s.y_min) / (s.x_max - s.x_min);
    let (w, h) = (pixels, ((pixels as f64 * aspect).round() as u32).max(2));
    // bilinear sample in grid index space
    let sample = |px: u32, py: u32| {
        let fx = px as f64 / (w - 1) as f64 * (s.nx - 1) as f64;
        let fy = (h - 1 - py) as f64 / (h - 1) as f64 * (s.ny - 1) as f64;
        let (i0, j0) = ((fx.floor() as usize).min(s.nx - 2), (fy.floor() as usize).min(s.ny - 2));
        let (u, v) = (fx - i0 as f64, fy - j0 as f64);
        let g = |i, j| grid.at(i, j);
        (1.0 - u) * (1.0 - v) * g(i0, j0) + u * (1.0 - v) * g(i0 + 1, j0) + (1.0 - u) * v * g(i0, j0 + 1)
            + u * v * g(i0 + 1, j0 + 1)
    };
    let band = |z: f64| ((z / scale) * levels as f64).floor() as i64;
    let mut field = vec![0.0; (w * h) as usize];
    for py in 0..h {
        for px in 0..w {
            field[(py * w + px) as usize] = sample(px, py);
        }
    }
    let mut img = RgbImage::new(w, h);
    for py in 0..h {
        for px in 0..w {
            let z = field[(py * w + px) as usize];
            let b = band(z);
            let edge = (px + 1 < w && band(field[(py * w + px + 1) as usize]) != b)
                || (py + 1 < h && band(field[((py + 1) * w + px) as usize]) != b);
            let c = (z / scale).clamp(-1.0, 1.0);
            let fade = |k: f64| (255.0 * (1.0 - k)).round() as u8;
            let mut rgb = if c >= 0.0 { [255, fade(c), fade(c)] } else { [fade(-c), fade(-c), 255] };
            if edge {
                rgb = [40, 40, 40];
            }
            img.put_pixel(px, py, Rgb(rgb));
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn number_format_is_canonical(x in proptest::num::f64::NORMAL | proptest::num::f64::ZERO) {
            let s = fmt_num(x).unwrap();
            let y = parse_num(&s).unwrap();
            prop_assert_eq!(fmt_num(y).unwrap(), s);
            prop_assert!((y - x).abs() <= 1e-8 * x.abs());
        }
    }

    fn rec(t: f64) -> ObservableRecord {
        ObservableRecord { t, excitation: 1.0 / 3.0, purity: 0.75, linear_entropy: 0.25, von_neumann: 1e-20 }
    }

    #[test]
    fn timeseries_format() {
        let mut buf = Vec::new();
        write_timeseries(&mut buf, &[rec(0.0), rec(0.1)]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,excitation,purity,linear_entropy,von_neumann"));
        assert_eq!(
            lines.next(),
            Some("0.00000000e0,3.33333333e-1,7.50000000e-1,2.50000000e-1,1.00000000e-20")
        );
        let back = read_timeseries(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].t, 0.1);
        assert!((back[0].excitation - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_timeseries_is_header_only() {
        let mut buf = Vec::new();
        write_timeseries(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "t,excitation,purity,linear_entropy,von_neumann\n");
        assert!(read_timeseries(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut r = rec(0.0);
        r.purity = f64::NAN;
        assert!(write_timeseries(Vec::new(), &[r]).is_err());
    }

    #[test]
    fn points_round_trip() {
        let pts = vec![(1.5, -2.25), (0.0, 3.0e-7)];
        let mut buf = Vec::new();
        write_points(&mut buf, &pts).unwrap();
        assert_eq!(read_points(buf.as_slice()).unwrap(), pts);
    }

    fn sample_grid() -> GridFile {
        let spec = GridSpec { x_min: -2.0, x_max: 2.0, y_min: -1.0, y_max: 3.0, nx: 5, ny: 3 };
        let values = (0..15).map(|k| (k as f64 - 7.0) * 0.01).collect();
        GridFile { t: 12.5, grid: WignerGrid { spec, values } }
    }

    #[test]
    fn grid_file_round_trips() {
        let g = sample_grid();
        let mut buf = Vec::new();
        g.write(&mut buf).unwrap();
        let back = GridFile::read(buf.as_slice()).unwrap();
        assert_eq!(back.grid.spec, g.grid.spec);
        assert_eq!(back.t, g.t);
        for (a, b) in back.grid.values.iter().zip(&g.grid.values) {
            assert!((a - b).abs() < 1e-10);
        }
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(again, buf);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# kerrchaos wigner grid v1\nt 1.25000000e1\nx_min -2.00000000e0\n"));
    }

    #[test]
    fn grid_file_rejects_damage() {
        let g = sample_grid();
        let mut buf = Vec::new();
        g.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let short: String = text.lines().take(11).map(|l| format!("{l}\n")).collect();
        assert!(GridFile::read(short.as_bytes()).is_err());
        let swapped = text.replace("nx 5", "ny 5");
        assert!(GridFile::read(swapped.as_bytes()).is_err());
        assert!(GridFile::read("hello\n".as_bytes()).is_err());
    }

    #[test]
    fn contour_render() {
        let g = sample_grid();
        let img = render_contours(&g.grid, 64, 4).unwrap();
        assert_eq!(img.width(), 64);
        assert_eq!(img.height(), 64);
        // bottom-left is the most negative corner
        let Rgb([r, _, b]) = *img.get_pixel(0, 63);
        assert!(b > r);
        assert!(render_contours(&g.grid, 1, 4).is_err());
    }
}
