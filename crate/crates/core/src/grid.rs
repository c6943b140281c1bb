//! Cartesian discretization of the phonon momentum ball.
//!
//! Cells of side `spacing` with a corner at the origin are clipped to the
//! ball of radius `lambda_max`. Each cell becomes one mode whose momentum
//! is the centroid of the clipped region, whose weight is its volume and
//! whose coupling integral is `∫ dk / |k|` over it. All moments are
//! computed once per cell class under the octahedral symmetry of the
//! lattice and then reflected/permuted, so the `k ↔ -k` pairing is exact.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadratureConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Centroid momentum of the clipped cell.
    pub k: [f64; 3],
    /// Clipped cell volume.
    pub weight: f64,
    /// `∫_cell dk / |k|`.
    pub coupling_integral: f64,
    /// Lattice index; the cell is `[i h, (i+1) h]` per axis.
    pub cell: [i32; 3],
}

impl Mode {
    pub fn norm(&self) -> f64 {
        norm3(&self.k)
    }
}

pub(crate) fn norm3(k: &[f64; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumGrid {
    pub modes: Vec<Mode>,
    pub lambda_max: f64,
    pub spacing: f64,
    pub symmetric: bool,
}

/// Moments of one clipped cell: volume, `∫1/|k|`, and the three first
/// moments `∫k_d`.
type Moments = [f64; 5];

fn origin_cell_moments(h: f64, r: f64, cfg: &QuadratureConfig) -> Moments {
    // Spherical coordinates over the positive octant; the ray in
    // direction u leaves the cube [0,h]^3 at h / max(u) and the ball at r.
    let clip = h / r;
    let outer = |phi: f64| -> Moments {
        let (sp, cp) = phi.sin_cos();
        let m = sp.max(cp);
        let mut breaks = vec![(1.0 / m).atan()];
        if clip < 1.0 {
            breaks.push(clip.acos());
            if clip / m <= 1.0 {
                breaks.push((clip / m).asin());
            }
        }
        integrate(
            |theta: f64| {
                let (st, ct) = theta.sin_cos();
                let u = [st * cp, st * sp, ct];
                let umax = u[0].max(u[1]).max(u[2]);
                let rmax = r.min(h / umax);
                let r2 = rmax * rmax;
                let r3 = r2 * rmax;
                let r4 = r2 * r2;
                [
                    st * r3 / 3.0,
                    st * r2 / 2.0,
                    st * r4 / 4.0 * u[0],
                    st * r4 / 4.0 * u[1],
                    st * r4 / 4.0 * u[2],
                ]
            },
            0.0,
            FRAC_PI_2,
            &breaks,
            cfg,
        )
    };
    integrate(outer, 0.0, FRAC_PI_2, &[std::f64::consts::FRAC_PI_4], cfg)
}

fn box_moments(lo: [f64; 3], h: f64, r: f64, cfg: &QuadratureConfig) -> Moments {
    let [x0, y0, z0] = lo;
    let (x1, y1, z1) = (x0 + h, y0 + h, z0 + h);
    let r2 = r * r;
    let zs = [0.0, z0, z1];
    let ys = [0.0, y0, y1];

    let mut xbreaks = Vec::new();
    for a in ys {
        for b in zs {
            let d = r2 - a * a - b * b;
            if d > 0.0 {
                xbreaks.push(d.sqrt());
                xbreaks.push(-d.sqrt());
            }
        }
    }
    let outer = |x: f64| -> Moments {
        let rho2 = r2 - x * x;
        if rho2 <= 0.0 {
            return [0.0; 5];
        }
        let rho = rho2.sqrt();
        let ya = y0.max(-rho);
        let yb = y1.min(rho);
        let mut ybreaks = Vec::new();
        for b in zs {
            let d = rho2 - b * b;
            if d > 0.0 {
                ybreaks.push(d.sqrt());
                ybreaks.push(-d.sqrt());
            }
        }
        integrate(
            |y: f64| {
                let hz2 = rho2 - y * y;
                if hz2 <= 0.0 {
                    return [0.0; 5];
                }
                let hz = hz2.sqrt();
                let za = z0.max(-hz);
                let zb = z1.min(hz);
                if za >= zb {
                    return [0.0; 5];
                }
                let len = zb - za;
                let perp = (x * x + y * y).sqrt();
                [
                    len,
                    (zb / perp).asinh() - (za / perp).asinh(),
                    x * len,
                    y * len,
                    0.5 * (zb * zb - za * za),
                ]
            },
            ya,
            yb,
            &ybreaks,
            cfg,
        )
    };
    integrate(outer, x0.max(-r), x1.min(r), &xbreaks, cfg)
}

/// Moments of the canonical cell with nonnegative sorted indices.
fn canonical_moments(idx: [i32; 3], h: f64, r: f64, cfg: &QuadratureConfig) -> Moments {
    if idx == [0, 0, 0] {
        origin_cell_moments(h, r, cfg)
    } else {
        let lo = idx.map(|i| i as f64 * h);
        box_moments(lo, h, r, cfg)
    }
}

/// Reflection/permutation taking a cell index to its canonical class.
struct Canon {
    key: [i32; 3],
    /// `axis_of[d]` = canonical axis holding original axis `d`.
    axis_of: [usize; 3],
    sign: [f64; 3],
}

fn canonicalize(cell: [i32; 3]) -> Canon {
    let mut folded = [(0i32, 0usize); 3];
    let mut sign = [1.0; 3];
    for d in 0..3 {
        let i = cell[d];
        if i >= 0 {
            folded[d] = (i, d);
        } else {
            folded[d] = (-i - 1, d);
            sign[d] = -1.0;
        }
    }
    let mut sorted = folded;
    sorted.sort();
    let mut axis_of = [0usize; 3];
    for (pos, &(_, d)) in sorted.iter().enumerate() {
        axis_of[d] = pos;
    }
    Canon {
        key: [sorted[0].0, sorted[1].0, sorted[2].0],
        axis_of,
        sign,
    }
}

/// Build the clipped-cell grid of the ball `|k| ≤ lambda_max`.
pub fn build_grid(lambda_max: f64, spacing: f64) -> Result<MomentumGrid> {
    build_grid_with(lambda_max, spacing, &QuadratureConfig::default())
}

pub fn build_grid_with(lambda_max: f64, spacing: f64, cfg: &QuadratureConfig) -> Result<MomentumGrid> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) || !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda_max = {lambda_max} and spacing = {spacing} must be positive"
        )));
    }
    if spacing >= lambda_max {
        return Err(Error::InvalidArgument(format!(
            "spacing {spacing} must be smaller than lambda_max {lambda_max}"
        )));
    }
    let h = spacing;
    let r = lambda_max;
    let n = (r / h).ceil() as i32;

    let mut classes = Vec::new();
    for a in 0..n {
        for b in a..n {
            for c in b..n {
                let near = (a * a + b * b + c * c) as f64 * h * h;
                if near < r * r {
                    classes.push([a, b, c]);
                }
            }
        }
    }
    let table: HashMap<[i32; 3], Moments> = classes
        .par_iter()
        .map(|&key| (key, canonical_moments(key, h, r, cfg)))
        .collect();

    let mut modes = Vec::new();
    for i in -n..n {
        for j in -n..n {
            for k in -n..n {
                let cell = [i, j, k];
                let canon = canonicalize(cell);
                let Some(m) = table.get(&canon.key) else {
                    continue;
                };
                let vol = m[0];
                if !(vol > 0.0) {
                    continue;
                }
                let mut centroid = [0.0; 3];
                for d in 0..3 {
                    centroid[d] = canon.sign[d] * m[2 + canon.axis_of[d]] / vol;
                }
                modes.push(Mode {
                    k: centroid,
                    weight: vol,
                    coupling_integral: m[1],
                    cell,
                });
            }
        }
    }
    sort_modes(&mut modes);
    Ok(MomentumGrid {
        modes,
        lambda_max,
        spacing,
        symmetric: true,
    })
}

fn sort_modes(modes: &mut [Mode]) {
    modes.sort_by(|a, b| {
        a.norm()
            .total_cmp(&b.norm())
            .then(a.k[0].total_cmp(&b.k[0]))
            .then(a.k[1].total_cmp(&b.k[1]))
            .then(a.k[2].total_cmp(&b.k[2]))
    });
}

impl MomentumGrid {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.modes.iter().map(|m| m.weight).sum()
    }

    /// Indices of modes whose centroid satisfies `|k| ≤ cutoff`.
    pub fn modes_within(&self, cutoff: f64) -> Vec<usize> {
        (0..self.modes.len()).filter(|&i| self.modes[i].norm() <= cutoff).collect()
    }

    /// Permutation `i -> j` with `modes[j]` the mirror image of `modes[i]`.
    pub fn mirror_permutation(&self) -> Option<Vec<usize>> {
        let mut by_cell: HashMap<[i32; 3], usize> = HashMap::with_capacity(self.modes.len());
        for (i, m) in self.modes.iter().enumerate() {
            by_cell.insert(m.cell, i);
        }
        self.modes
            .iter()
            .map(|m| {
                let mirror = m.cell.map(|i| -i - 1);
                let j = *by_cell.get(&mirror)?;
                let o = &self.modes[j];
                let exact = o.weight == m.weight
                    && o.coupling_integral == m.coupling_integral
                    && (0..3).all(|d| o.k[d] == -m.k[d]);
                exact.then_some(j)
            })
            .collect()
    }

    pub fn id(&self) -> String {
        format!("grid(lambda_max={},spacing={},modes={})", self.lambda_max, self.spacing, self.modes.len())
    }

    /// Columnar text: `# lambda_max spacing mode_count`, then
    /// `kx ky kz weight coupling_integral` per mode.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# {:.16e} {:.16e} {}", self.lambda_max, self.spacing, self.modes.len()).unwrap();
        for m in &self.modes {
            writeln!(
                s,
                "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                m.k[0], m.k[1], m.k[2], m.weight, m.coupling_integral
            )
            .unwrap();
        }
        s
    }

    pub fn write_text(&self, mut w: impl Write) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    /// Parse the columnar format. Lattice indices are recovered from the
    /// centroids.
    pub fn read_text(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty grid file".into()))??;
        let fields: Vec<&str> = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Config("grid header must start with '#'".into()))?
            .split_whitespace()
            .collect();
        if fields.len() != 3 {
            return Err(Error::Config(format!("bad grid header: {header}")));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("{s}: {e}")));
        let lambda_max = parse(fields[0])?;
        let spacing = parse(fields[1])?;
        let count: usize = fields[2].parse().map_err(|e| Error::Config(format!("{}: {e}", fields[2])))?;
        let mut modes = Vec::with_capacity(count);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line.split_whitespace().map(parse).collect::<Result<_>>()?;
            if v.len() != 5 {
                return Err(Error::Config(format!("bad grid line: {line}")));
            }
            let k = [v[0], v[1], v[2]];
            modes.push(Mode {
                k,
                weight: v[3],
                coupling_integral: v[4],
                cell: k.map(|c| (c / spacing).floor() as i32),
            });
        }
        if modes.len() != count {
            return Err(Error::Config(format!("header says {count} modes, found {}", modes.len())));
        }
        let mut g = MomentumGrid {
            modes,
            lambda_max,
            spacing,
            symmetric: false,
        };
        g.symmetric = g.mirror_permutation().is_some();
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_grid(1.0, 2.0).is_err());
        assert!(build_grid(1.0, 1.0).is_err());
        assert!(build_grid(-1.0, 0.5).is_err());
        assert!(build_grid(1.0, 0.0).is_err());
    }

    #[test]
    fn ball_volume_unit_half_spacing() {
        let g = build_grid(1.0, 0.5).unwrap();
        let want = 4.0 / 3.0 * PI;
        assert!(((g.total_weight() - want) / want).abs() < 1e-6, "{}", g.total_weight());
    }

    #[test]
    fn ball_volume_other_grids() {
        for (r, h) in [(3.0, 0.75), (2.0, 0.5), (1.3, 0.4), (2.0, 1.0)] {
            let g = build_grid(r, h).unwrap();
            let want = 4.0 / 3.0 * PI * r * r * r;
            assert!(((g.total_weight() - want) / want).abs() < 1e-6, "r={r} h={h}");
            // ∫_{|k|<=r} dk/|k| = 2π r².
            let ci: f64 = g.modes.iter().map(|m| m.coupling_integral).sum();
            assert!(((ci - 2.0 * PI * r * r) / (2.0 * PI * r * r)).abs() < 1e-6, "r={r} h={h}");
        }
    }

    #[test]
    fn mirror_pair_exists() {
        let g = build_grid(1.0, 0.5).unwrap();
        let a = g.modes.iter().find(|m| m.cell == [1, 0, 0]).unwrap();
        let b = g.modes.iter().find(|m| m.cell == [-2, -1, -1]).unwrap();
        assert_eq!(a.weight, b.weight);
        assert_eq!(a.coupling_integral, b.coupling_integral);
        assert_eq!(a.k.map(|x| -x), b.k);
        assert!(g.mirror_permutation().is_some());
    }

    #[test]
    fn interior_cell_centroid_is_center() {
        let g = build_grid(3.0, 0.75).unwrap();
        let m = g.modes.iter().find(|m| m.cell == [1, 0, 0]).unwrap();
        assert!((m.weight - 0.75f64.powi(3)).abs() < 1e-12);
        for (d, c) in [1.125, 0.375, 0.375].iter().enumerate() {
            assert!((m.k[d] - c).abs() < 1e-12);
        }
    }

    #[test]
    fn no_zero_centroid_and_positive_moments() {
        let g = build_grid(2.0, 0.5).unwrap();
        for m in &g.modes {
            assert!(m.norm() > 0.0 && m.weight > 0.0 && m.coupling_integral > 0.0);
            assert!(m.norm() <= g.lambda_max);
        }
    }

    #[test]
    fn ordered_by_norm() {
        let g = build_grid(2.0, 0.5).unwrap();
        assert!(g.modes.windows(2).all(|w| w[0].norm() <= w[1].norm()));
    }

    #[test]
    fn centroid_regime() {
        let g = build_grid(2.0, 0.1).unwrap();
        let diam = 0.1 * 3f64.sqrt();
        let mut checked = 0;
        for m in &g.modes {
            if m.norm() / diam > 10.0 {
                let rel = (m.coupling_integral - m.weight / m.norm()).abs() / m.coupling_integral;
                assert!(rel < 1e-3, "{m:?}");
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn quadrature_refinement_is_stable() {
        let coarse = build_grid_with(2.0, 0.5, &QuadratureConfig { rel_tol: 1e-8, ..Default::default() }).unwrap();
        let fine = build_grid_with(2.0, 0.5, &QuadratureConfig { rel_tol: 1e-12, abs_tol: 1e-17, ..Default::default() }).unwrap();
        // Near-ties in |k| may order differently, so pair modes by cell.
        let fine: std::collections::HashMap<_, _> = fine.modes.iter().map(|m| (m.cell, m)).collect();
        assert_eq!(fine.len(), coarse.len());
        for a in &coarse.modes {
            let b = fine[&a.cell];
            if a.cell.iter().all(|&i| i == 0 || i == -1) {
                continue;
            }
            let rel = (a.coupling_integral - b.coupling_integral).abs() / b.coupling_integral;
            assert!(rel < 1e-6, "{:?}: {rel}", a.cell);
        }
    }

    #[test]
    fn origin_cell_matches_cartesian_oracle() {
        // Unclipped cube with a corner at the origin:
        // ∫_{[0,1]^3} dk/|k| = 3 ln((1+√3)/√2) - π/4, scaling as h².
        let h = 0.5;
        let m = origin_cell_moments(h, 10.0, &QuadratureConfig::default());
        let s3 = 3f64.sqrt();
        let unit = 3.0 * ((1.0 + s3) / 2f64.sqrt()).ln() - PI / 4.0;
        assert!((m[1] - unit * h * h).abs() < 1e-10, "{} vs {}", m[1], unit * h * h);
        assert!((m[0] - h * h * h).abs() < 1e-12);
        assert!((m[2] / m[0] - h / 2.0).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let g = build_grid(1.0, 0.5).unwrap();
        let text = g.to_text();
        assert!(text.starts_with("# "));
        let back = MomentumGrid::read_text(text.as_bytes()).unwrap();
        assert_eq!(back.modes.len(), g.modes.len());
        for (a, b) in back.modes.iter().zip(&g.modes) {
            assert_eq!(a.k, b.k);
            assert_eq!(a.weight, b.weight);
            assert_eq!(a.cell, b.cell);
        }
        assert!(back.symmetric);
    }
}
