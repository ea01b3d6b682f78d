//! Discrete norms on a uniform grid `x_i = i * dx`, `i = 0..=n`.
//!
//! `L2` uses the composite trapezoid rule; the `H1` seminorm uses forward differences,
//! i.e. the exact gradient norm of the piecewise-linear interpolant. With these two
//! choices the ghost-node Neumann Laplacian is self-adjoint and
//! `<u, -D u>_trap = |u|_grad^2` whenever `u_0 = 0`.

/// Trapezoid approximation of `int u^2 dx`.
pub fn l2_sq(u: &[f64], dx: f64) -> f64 {
    let n = u.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = u[1..n - 1].iter().map(|v| v * v).sum();
    dx * (inner + 0.5 * (u[0] * u[0] + u[n - 1] * u[n - 1]))
}

/// Trapezoid approximation of `int u v dx`.
pub fn l2_inner(u: &[f64], v: &[f64], dx: f64) -> f64 {
    let n = u.len();
    assert_eq!(n, v.len());
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = u[1..n - 1].iter().zip(&v[1..n - 1]).map(|(a, b)| a * b).sum();
    dx * (inner + 0.5 * (u[0] * v[0] + u[n - 1] * v[n - 1]))
}

/// `int (u')^2 dx` of the piecewise-linear interpolant.
pub fn grad_sq(u: &[f64], dx: f64) -> f64 {
    u.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>() / dx
}

/// Uniform spacing of `nodes`, or `None` when the grid is not uniform to `1e-9` relative.
pub fn uniform_spacing(nodes: &[f64]) -> Option<f64> {
    if nodes.len() < 2 {
        return None;
    }
    let n = nodes.len() - 1;
    let h = (nodes[n] - nodes[0]) / n as f64;
    if !(h > 0.0) {
        return None;
    }
    let scale = nodes[n].abs().max(nodes[0].abs()).max(h);
    let uniform = nodes
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * scale);
    uniform.then_some(h)
}

/// For every node of `coarse`, the index of the coincident node of `fine`.
///
/// Both grids must be uniform with `dt_coarse` an integer multiple of `dt_fine`;
/// nodes of `coarse` outside the span of `fine` are skipped. Returns pairs
/// `(coarse_index, fine_index)`.
pub fn nested_pairs(coarse: &[f64], fine: &[f64]) -> Option<Vec<(usize, usize)>> {
    let hf = uniform_spacing(fine)?;
    let scale = fine
        .iter()
        .chain(coarse)
        .fold(hf, |m, v| m.max(v.abs()));
    let tol = 1e-9 * scale;
    let mut out = Vec::with_capacity(coarse.len());
    for (ic, &t) in coarse.iter().enumerate() {
        let pos = (t - fine[0]) / hf;
        let k = pos.round();
        if k < -0.5 || k > (fine.len() - 1) as f64 + 0.5 {
            continue;
        }
        let k = k as usize;
        if (fine[k] - t).abs() > tol {
            return None;
        }
        out.push((ic, k));
    }
    Some(out)
}
