//! Adaptive Gauss–Kronrod quadrature for vector-valued integrands.
//!
//! Pieces between caller-supplied breakpoints are mapped through the
//! smoothstep substitution `x = a + (b-a)(3u² - 2u³)`, whose vanishing
//! derivative at both ends tames square-root endpoint singularities such
//! as the edge of a disk.

/// Relative accuracy target per piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    /// Absolute error accepted per piece regardless of `rel_tol`; keeps
    /// pieces whose integral vanishes from refining forever.
    pub abs_tol: f64,
    pub max_depth: u32,
    /// Maximum number of bisections per piece.
    pub max_splits: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: 1e-11,
            abs_tol: 1e-15,
            max_depth: 30,
            max_splits: 4000,
        }
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<const N: usize>(f: &mut impl FnMut(f64) -> [f64; N], a: f64, b: f64) -> ([f64; N], [f64; N]) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = [0.0; N];
    let mut g = [0.0; N];
    let fc = f(c);
    for n in 0..N {
        k[n] = WGK[7] * fc[n];
        g[n] = WG[3] * fc[n];
    }
    for i in 0..7 {
        let f1 = f(c - h * XGK[i]);
        let f2 = f(c + h * XGK[i]);
        for n in 0..N {
            let s = f1[n] + f2[n];
            k[n] += WGK[i] * s;
            if i % 2 == 1 {
                g[n] += WG[i / 2] * s;
            }
        }
    }
    for n in 0..N {
        k[n] *= h;
        g[n] *= h;
    }
    (k, g)
}

fn adapt<const N: usize>(
    f: &mut impl FnMut(f64) -> [f64; N],
    a: f64,
    b: f64,
    estimate: ([f64; N], [f64; N]),
    abs_tol: &[f64; N],
    depth: u32,
    max_depth: u32,
    budget: &mut usize,
) -> [f64; N] {
    let (k, g) = estimate;
    // Differences at the roundoff floor cannot be reduced by bisection.
    let ok = (0..N).all(|n| (k[n] - g[n]).abs() <= abs_tol[n].max(64.0 * f64::EPSILON * k[n].abs()));
    if ok || depth >= max_depth || *budget == 0 {
        return k;
    }
    *budget -= 1;
    let m = 0.5 * (a + b);
    let left = gk15(f, a, m);
    let right = gk15(f, m, b);
    let half: [f64; N] = std::array::from_fn(|n| 0.5 * abs_tol[n]);
    let l = adapt(f, a, m, left, &half, depth + 1, max_depth, budget);
    let r = adapt(f, m, b, right, &half, depth + 1, max_depth, budget);
    std::array::from_fn(|n| l[n] + r[n])
}

/// Integrate over `[a, b]` splitting at `breaks` (unsorted, values
/// outside `(a, b)` ignored).
pub fn integrate<const N: usize>(
    mut f: impl FnMut(f64) -> [f64; N],
    a: f64,
    b: f64,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> [f64; N] {
    if !(b > a) {
        return [0.0; N];
    }
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * (b - a));

    let mut total = [0.0; N];
    for w in pts.windows(2) {
        let (p, q) = (w[0], w[1]);
        let len = q - p;
        if len <= 0.0 {
            continue;
        }
        let mut g = |u: f64| {
            let x = p + len * u * u * (3.0 - 2.0 * u);
            let jac = len * 6.0 * u * (1.0 - u);
            let v = f(x);
            std::array::from_fn(|n| v[n] * jac)
        };
        let first = gk15(&mut g, 0.0, 1.0);
        let abs_tol: [f64; N] = std::array::from_fn(|n| (cfg.rel_tol * first.0[n].abs()).max(cfg.abs_tol));
        let mut budget = cfg.max_splits;
        let piece = adapt(&mut g, 0.0, 1.0, first, &abs_tol, 0, cfg.max_depth, &mut budget);
        for n in 0..N {
            total[n] += piece[n];
        }
    }
    total
}
