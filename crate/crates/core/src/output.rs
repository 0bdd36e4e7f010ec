//! CSV and SVG writers for simulation results.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::Result;
use crate::model::EquilibriumState;
use crate::riemann::RiemannSystem;
use crate::sim::{FrameData, SimResult};

/// Frames in long format, `t` major then `x`. Physical frames are written as
/// absolute states, target frames as `beta`.
pub fn write_fields<W: Write>(out: W, eq: &EquilibriumState, r: &SimResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let zs = eq.state_vector();
    let physical = matches!(r.frames.first().map(|f| &f.data), Some(FrameData::Physical(_)));
    if physical {
        w.write_record(["t", "x", "rho1", "v1", "rho2", "v2"])?;
    } else {
        w.write_record(["t", "x", "beta"])?;
    }
    for f in &r.frames {
        match &f.data {
            FrameData::Physical(psi) => {
                for (x, p) in r.xs.iter().zip(psi) {
                    let z = zs + p;
                    w.write_record(&[
                        f.t.to_string(),
                        x.to_string(),
                        z[0].to_string(),
                        z[1].to_string(),
                        z[2].to_string(),
                        z[3].to_string(),
                    ])?;
                }
            }
            FrameData::Beta(b) => {
                for (x, v) in r.xs.iter().zip(b) {
                    w.write_record(&[f.t.to_string(), x.to_string(), v.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Scalar series `t, U, supnorm, l2norm, betaL`.
pub fn write_series<W: Write>(out: W, r: &SimResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "U", "supnorm", "l2norm", "betaL"])?;
    let s = &r.series;
    for i in 0..s.len() {
        w.write_record(&[
            s.t[i].to_string(),
            s.control[i].to_string(),
            s.sup_norm[i].to_string(),
            s.l2_norm[i].to_string(),
            s.beta_outlet[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Source coefficients and state scaling of the Riemann system at `xs`.
pub fn write_riemann<W: Write>(out: W, rs: &RiemannSystem, xs: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_string()];
    for i in 1..=4 {
        for j in 1..=4 {
            if i != j {
                header.push(format!("sigma{i}{j}"));
            }
        }
    }
    header.extend((1..=4).map(|i| format!("scale{i}")));
    w.write_record(&header)?;
    for &x in xs {
        let s = rs.sigma(x);
        let mut rec = vec![x.to_string()];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    rec.push(s[(i, j)].to_string());
                }
            }
        }
        rec.extend(rs.scale_diag(x).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn color(v: f64) -> String {
    // blue - white - red
    let v = v.clamp(-1.0, 1.0);
    let (r, g, b) = if v >= 0.0 {
        (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
    } else {
        (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Space-time heatmap of the relative class-1 density perturbation (or of
/// `beta` for target runs), colors saturating at the initial amplitude.
pub fn heatmap_svg(eq: &EquilibriumState, r: &SimResult) -> String {
    const W: usize = 160;
    const H: usize = 160;
    const CELL: usize = 3;
    let value = |f: &FrameData, m: usize| match f {
        FrameData::Physical(p) => p[m][0] / eq.density[0],
        FrameData::Beta(b) => b[m],
    };
    let nx = r.xs.len();
    let nt = r.frames.len();
    let cols = nx.min(W);
    let rows = nt.min(H);
    let amp = r
        .frames
        .first()
        .map(|f| (0..nx).fold(0.0_f64, |a, m| a.max(value(&f.data, m).abs())))
        .filter(|a| *a > 0.0)
        .unwrap_or(1.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" shape-rendering="crispEdges">"#,
        cols * CELL + 60,
        rows * CELL + 40
    );
    for row in 0..rows {
        let f = &r.frames[row * (nt - 1) / (rows - 1).max(1)];
        for col in 0..cols {
            let m = col * (nx - 1) / (cols - 1).max(1);
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}"/>"#,
                50 + col * CELL,
                10 + (rows - 1 - row) * CELL,
                color(value(&f.data, m) / amp)
            );
        }
    }
    let t_end = r.frames.last().map(|f| f.t).unwrap_or(0.0);
    let _ = writeln!(
        s,
        r#"<text x="50" y="{}" font-size="10">x: 0 .. {} m</text>"#,
        rows * CELL + 25,
        r.xs[nx - 1]
    );
    let _ = writeln!(
        s,
        r#"<text x="2" y="20" font-size="10">t={t_end:.0}</text><text x="2" y="{}" font-size="10">t=0</text>"#,
        rows * CELL + 10
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors_span_the_scale() {
        assert_eq!(color(0.0), "#ffffff");
        assert_eq!(color(1.0), "#ff0000");
        assert_eq!(color(-2.0), "#0000ff");
    }
}
