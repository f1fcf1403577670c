//! Metric reconstruction from a connection on a rectangular grid: residuals
//! of the compatibility system `∂_k g_ij = C^l_{ki} g_lj + C^l_{kj} g_il`,
//! least-squares reconstruction from an anchor node, a refinement-based
//! metrizability verdict, SPD projection and scale anchoring.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{check_chart, check_dim, pair_index, Chart, Connection, FormKind, QuadraticForm, TangentMove};
use crate::linalg::{self, BandedSpd, Matrix, Vector};

/// A rectangular grid `origin + i·spacing`, `0 ≤ i < counts`, with the last
/// axis varying fastest in node order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    chart: String,
    origin: Vec<f64>,
    spacing: Vec<f64>,
    counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(chart: &Chart, origin: &[f64], spacing: &[f64], counts: &[usize]) -> Result<Self> {
        Self::raw(chart.id(), chart.dim(), origin, spacing, counts)
    }

    pub(crate) fn raw(chart: &str, d: usize, origin: &[f64], spacing: &[f64], counts: &[usize]) -> Result<Self> {
        check_dim("grid origin", d, origin.len())?;
        check_dim("grid spacing", d, spacing.len())?;
        check_dim("grid counts", d, counts.len())?;
        if spacing.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::invalid("grid spacings must be positive and finite"));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::NonFinite("grid origin"));
        }
        if counts.contains(&0) {
            return Err(Error::invalid("grid counts must be positive"));
        }
        Ok(Self {
            chart: chart.to_string(),
            origin: origin.to_vec(),
            spacing: spacing.to_vec(),
            counts: counts.to_vec(),
        })
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn stride(&self, axis: usize) -> usize {
        self.counts[axis + 1..].iter().product()
    }

    /// Multi-index of a node.
    pub fn index(&self, node: usize) -> Vec<usize> {
        let mut out = alloc::vec![0; self.dim()];
        let mut r = node;
        for k in (0..self.dim()).rev() {
            out[k] = r % self.counts[k];
            r /= self.counts[k];
        }
        out
    }

    pub fn node(&self, index: &[usize]) -> usize {
        index.iter().enumerate().map(|(k, i)| i * self.stride(k)).sum()
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.index(node)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.origin[k] + i as f64 * self.spacing[k])
            .collect()
    }

    /// The node closest to `x`.
    pub fn nearest_node(&self, x: &[f64]) -> Result<usize> {
        check_dim("grid point", self.dim(), x.len())?;
        let idx: Vec<usize> = (0..self.dim())
            .map(|k| {
                let t = libm::round((x[k] - self.origin[k]) / self.spacing[k]);
                t.clamp(0.0, (self.counts[k] - 1) as f64) as usize
            })
            .collect();
        Ok(self.node(&idx))
    }

    /// Same extent with each spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            chart: self.chart.clone(),
            origin: self.origin.clone(),
            spacing: self.spacing.iter().map(|h| h / 2.0).collect(),
            counts: self.counts.iter().map(|n| 2 * n - 1).collect(),
        }
    }
}

/// Per-node values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<T> {
    grid: GridSpec,
    values: Vec<T>,
}

impl<T> GridField<T> {
    pub fn new(grid: GridSpec, values: Vec<T>) -> Result<Self> {
        check_dim("grid field values", grid.len(), values.len())?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> Result<T>) -> Result<Self> {
        let values = (0..grid.len()).map(|n| f(&grid.coords(n))).collect::<Result<Vec<T>>>()?;
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn at(&self, node: usize) -> &T {
        &self.values[node]
    }
}

impl GridField<Matrix> {
    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|m| m * a).collect(),
        }
    }
}

fn pack(m: &Matrix) -> Vector {
    let d = m.nrows();
    let mut v = Vector::zeros(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            v[pair_index(d, i, j)] = m[(i, j)];
        }
    }
    v
}

fn unpack(v: &[f64], d: usize) -> Matrix {
    Matrix::from_fn(d, d, |i, j| v[pair_index(d, i, j)])
}

/// Packed linear map `g ↦ (C^l_{ki} g_lj + C^l_{kj} g_il)_{i≤j}` for axis `k`.
fn transport_matrix(conn: &Connection, k: usize) -> Matrix {
    let d = conn.dim();
    let p = d * (d + 1) / 2;
    let mut t = Matrix::zeros(p, p);
    for i in 0..d {
        for j in i..d {
            let r = pair_index(d, i, j);
            for l in 0..d {
                t[(r, pair_index(d, l, j))] += conn.get(l, k, i);
                t[(r, pair_index(d, i, l))] += conn.get(l, k, j);
            }
        }
    }
    t
}

/// Off-diagonal components count twice in a Frobenius norm.
fn component_weights(d: usize) -> Vec<f64> {
    let mut w = alloc::vec![0.0; d * (d + 1) / 2];
    for i in 0..d {
        for j in i..d {
            w[pair_index(d, i, j)] = if i == j { 1.0 } else { libm::sqrt(2.0) };
        }
    }
    w
}

fn check_fields(g: &GridField<Matrix>, c: &GridField<Connection>) -> Result<()> {
    if g.grid != c.grid {
        return Err(Error::invalid("metric and connection fields are not co-located"));
    }
    let d = g.grid.dim();
    for (m, conn) in g.values.iter().zip(&c.values) {
        check_dim("metric field", d, m.nrows())?;
        check_dim("metric field", d, m.ncols())?;
        check_chart("connection field", g.grid.chart(), conn.chart())?;
    }
    Ok(())
}

/// Frobenius norm of `∂_k g_ij − C^l_{ki}g_lj − C^l_{kj}g_il` at each node,
/// with second-order central differences inside and one-sided at the edges.
pub fn metric_pde_residual(g: &GridField<Matrix>, c: &GridField<Connection>) -> Result<Vec<f64>> {
    check_fields(g, c)?;
    let grid = &g.grid;
    if grid.counts.iter().any(|&n| n < 3) {
        return Err(Error::invalid("metric residual needs at least 3 nodes per axis"));
    }
    let d = grid.dim();
    let mut out = Vec::with_capacity(grid.len());
    for n in 0..grid.len() {
        let idx = grid.index(n);
        let gn = &g.values[n];
        let conn = &c.values[n];
        let mut sq = 0.0;
        for k in 0..d {
            let s = grid.stride(k);
            let h = grid.spacing[k];
            let last = grid.counts[k] - 1;
            let dg = if idx[k] == 0 {
                (&g.values[n + s] * 4.0 - gn * 3.0 - &g.values[n + 2 * s]) / (2.0 * h)
            } else if idx[k] == last {
                (gn * 3.0 - &g.values[n - s] * 4.0 + &g.values[n - 2 * s]) / (2.0 * h)
            } else {
                (&g.values[n + s] - &g.values[n - s]) / (2.0 * h)
            };
            for i in 0..d {
                for j in 0..d {
                    let mut r = dg[(i, j)];
                    for l in 0..d {
                        r -= conn.get(l, k, i) * gn[(l, j)] + conn.get(l, k, j) * gn[(i, l)];
                    }
                    sq += r * r;
                }
            }
        }
        out.push(libm::sqrt(sq));
    }
    Ok(out)
}

/// Least-squares metric field with its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub metrics: GridField<Matrix>,
    /// Root-mean-square edge residual, in derivative units.
    pub residual: f64,
    /// `residual` relative to the anchor metric's norm.
    pub relative_residual: f64,
}

impl Reconstruction {
    /// Projects every node onto the SPD cone.
    pub fn projected(&self, floor: f64, scale: f64) -> Result<GridField<QuadraticForm>> {
        let chart = self.metrics.grid.chart().to_string();
        let values = self
            .metrics
            .values
            .iter()
            .map(|m| spd_project_matrix(&chart, m, floor, scale))
            .collect::<Result<Vec<_>>>()?;
        GridField::new(self.metrics.grid.clone(), values)
    }
}

/// Solves the compatibility system in least squares with the metric fixed
/// at `anchor_node`.
///
/// Each grid edge `n → n + e_k` contributes the trapezoidal transport
/// equation `(g_{n'} − g_n)/h = ½(T_k(x_n)g_n + T_k(x_{n'})g_{n'})`. The
/// normal equations are Jacobi-scaled and solved by banded Cholesky.
pub fn reconstruct_metric(c: &GridField<Connection>, anchor_node: usize, anchor: &QuadraticForm) -> Result<Reconstruction> {
    let grid = &c.grid;
    let d = grid.dim();
    check_chart("anchor metric", grid.chart(), anchor.chart())?;
    check_dim("anchor metric", d, anchor.dim())?;
    if anchor_node >= grid.len() {
        return Err(Error::invalid(format!("anchor node {anchor_node} outside grid of {} nodes", grid.len())));
    }
    crate::liquidity::require_pd(anchor.matrix(), "anchor metric")?;
    for conn in &c.values {
        check_chart("connection field", grid.chart(), conn.chart())?;
    }
    let p = d * (d + 1) / 2;
    let nodes = grid.len();
    let g_anchor = pack(anchor.matrix());
    let unknown = |node: usize| -> Option<usize> {
        match node.cmp(&anchor_node) {
            core::cmp::Ordering::Less => Some(node * p),
            core::cmp::Ordering::Equal => None,
            core::cmp::Ordering::Greater => Some((node - 1) * p),
        }
    };
    let weights = component_weights(d);
    let transports: Vec<Vec<Matrix>> = c
        .values
        .iter()
        .map(|conn| (0..d).map(|k| transport_matrix(conn, k)).collect())
        .collect();

    // edge blocks: rows = weights·[−(I + h/2 T_n)/h | (I − h/2 T_n')/h]
    let edge_blocks = |n: usize, k: usize| -> (Matrix, Matrix) {
        let h = grid.spacing[k];
        let n2 = n + grid.stride(k);
        let id = Matrix::identity(p, p);
        let mut a = -(&id + &transports[n][k] * (0.5 * h)) / h;
        let mut b = (&id - &transports[n2][k] * (0.5 * h)) / h;
        for r in 0..p {
            a.row_mut(r).scale_mut(weights[r]);
            b.row_mut(r).scale_mut(weights[r]);
        }
        (a, b)
    };

    let edges: Vec<(usize, usize)> = (0..nodes)
        .flat_map(|n| {
            let idx = grid.index(n);
            (0..d).filter(move |&k| idx[k] + 1 < grid.counts[k]).map(move |k| (n, k))
        })
        .collect();

    let total = (nodes - 1) * p;
    if total == 0 {
        return Ok(Reconstruction {
            metrics: GridField::new(grid.clone(), alloc::vec![anchor.matrix().clone()])?,
            residual: 0.0,
            relative_residual: 0.0,
        });
    }
    let max_stride = (0..d).map(|k| grid.stride(k)).max().unwrap_or(1);
    let bw = ((max_stride + 1) * p).min(total - 1);
    let mut normal = BandedSpd::zeros(total, bw);
    let mut rhs = alloc::vec![0.0; total];
    for &(n, k) in &edges {
        let n2 = n + grid.stride(k);
        let (a, b) = edge_blocks(n, k);
        let ends = [(unknown(n), &a), (unknown(n2), &b)];
        // right-hand side from a fixed anchor end
        let mut r = Vector::zeros(p);
        for (u, blk) in &ends {
            if u.is_none() {
                r -= *blk * &g_anchor;
            }
        }
        for (u1, b1) in &ends {
            let Some(u1) = u1 else { continue };
            let btr = b1.transpose() * &r;
            for i in 0..p {
                rhs[u1 + i] += btr[i];
            }
            for (u2, b2) in &ends {
                let Some(u2) = u2 else { continue };
                if u2 < u1 {
                    continue;
                }
                let prod = b1.transpose() * *b2;
                // a diagonal block is symmetric, so its upper half suffices
                for i in 0..p {
                    for j in 0..p {
                        if u1 != u2 || i <= j {
                            normal.add(u1 + i, u2 + j, prod[(i, j)]);
                        }
                    }
                }
            }
        }
    }
    let scale: Vec<f64> = (0..total)
        .map(|i| {
            let v = normal.diag(i);
            if v > 0.0 {
                1.0 / libm::sqrt(v)
            } else {
                1.0
            }
        })
        .collect();
    normal.scale(&scale);
    for (r, s) in rhs.iter_mut().zip(&scale) {
        *r *= s;
    }
    normal.solve(&mut rhs)?;
    for (r, s) in rhs.iter_mut().zip(&scale) {
        *r *= s;
    }

    let packed: Vec<Vector> = (0..nodes)
        .map(|n| match unknown(n) {
            None => g_anchor.clone(),
            Some(u) => Vector::from_column_slice(&rhs[u..u + p]),
        })
        .collect();
    let mut sq = 0.0;
    for &(n, k) in &edges {
        let (a, b) = edge_blocks(n, k);
        sq += (a * &packed[n] + b * &packed[n + grid.stride(k)]).norm_squared();
    }
    let residual = if edges.is_empty() {
        0.0
    } else {
        libm::sqrt(sq / edges.len() as f64)
    };
    let values: Vec<Matrix> = packed.iter().map(|v| unpack(v.as_slice(), d)).collect();
    if values.iter().any(|m| !linalg::all_finite(m)) {
        return Err(Error::NonFinite("reconstructed metric"));
    }
    let anchor_norm = linalg::max_abs(anchor.matrix());
    Ok(Reconstruction {
        metrics: GridField::new(grid.clone(), values)?,
        residual,
        relative_residual: residual / anchor_norm,
    })
}

/// Outcome of the refinement test.
#[derive(Debug, Clone, PartialEq)]
pub struct MetrizabilityVerdict {
    pub coarse_residual: f64,
    pub fine_residual: f64,
    /// `log2(coarse / fine)`; infinite when both vanish.
    pub order: f64,
    pub metrizable: bool,
}

/// Minimum convergence order for a connection to count as metrizable.
pub const METRIZABLE_ORDER: f64 = 1.5;

/// Reconstructs on `grid` and on its refinement and declares the connection
/// metrizable when the relative residual shrinks at order ≥ 1.5, or is at
/// round-off level on both grids.
pub fn metrizability_verdict(
    grid: &GridSpec,
    connection: &dyn Fn(&[f64]) -> Result<Connection>,
    anchor_point: &[f64],
    anchor: &QuadraticForm,
) -> Result<MetrizabilityVerdict> {
    let run = |g: &GridSpec| -> Result<f64> {
        let field = GridField::from_fn(g, connection)?;
        let node = g.nearest_node(anchor_point)?;
        Ok(reconstruct_metric(&field, node, anchor)?.relative_residual)
    };
    let coarse = run(grid)?;
    let fine = run(&grid.refined())?;
    const ROUND_OFF: f64 = 1e-10;
    let (order, metrizable) = if coarse <= ROUND_OFF && fine <= ROUND_OFF {
        (f64::INFINITY, true)
    } else {
        let o = libm::log2(coarse / fine);
        (o, o >= METRIZABLE_ORDER)
    };
    Ok(MetrizabilityVerdict {
        coarse_residual: coarse,
        fine_residual: fine,
        order,
        metrizable,
    })
}

fn spd_project_matrix(chart: &str, m: &Matrix, floor: f64, scale: f64) -> Result<QuadraticForm> {
    if !(floor > 0.0 && floor.is_finite()) || !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::invalid("SPD floor must be positive and the scale non-negative"));
    }
    let sym = linalg::symmetrize(m, crate::geometry::Tolerances::default().symmetry_repair)?;
    let eig = sym.clone().symmetric_eigen();
    let big = eig.eigenvalues.iter().fold(scale, |a, v| a.max(v.abs()));
    let lo = floor * big;
    if !(lo > 0.0) {
        return Err(Error::invalid("SPD projection of a zero matrix needs a positive scale"));
    }
    let out = if eig.eigenvalues.iter().all(|v| *v >= lo) {
        sym
    } else {
        let clipped = eig.eigenvalues.map(|v| v.max(lo));
        let q = &eig.eigenvectors;
        let p = q * Matrix::from_diagonal(&clipped) * q.transpose();
        (&p + p.transpose()) * 0.5
    };
    QuadraticForm::from_matrix(chart, out, FormKind::Penalty, &Default::default())
}

/// Clips eigenvalues at `floor·max(max|λ|, scale)`. `scale` sets the
/// absolute floor used for (near-)zero inputs.
pub fn spd_project(form: &QuadraticForm, floor: f64, scale: f64) -> Result<QuadraticForm> {
    spd_project_matrix(form.chart(), form.matrix(), floor, scale)
}

/// `α = L0²/(v0ᵀĝv0)` and the rescaled form `αĝ`, so that `‖v0‖_g = L0`.
pub fn anchor_scale(form: &QuadraticForm, v0: &TangentMove, l0: f64) -> Result<(f64, QuadraticForm)> {
    if !(l0 > 0.0 && l0.is_finite()) {
        return Err(Error::invalid(format!("anchor length must be positive, got {l0}")));
    }
    let n2 = form.eval(v0)?;
    if !(n2 > 0.0) {
        return Err(Error::Undefined("anchor direction has zero length under the metric"));
    }
    let alpha = l0 * l0 / n2;
    Ok((alpha, form.scaled(alpha)?))
}

/// [`anchor_scale`] applied to a whole metric field, measured at `node`.
pub fn anchor_scale_field(field: &GridField<Matrix>, node: usize, v0: &TangentMove, l0: f64) -> Result<(f64, GridField<Matrix>)> {
    if node >= field.grid.len() {
        return Err(Error::invalid(format!("node {node} outside grid")));
    }
    let form = QuadraticForm::from_matrix(field.grid.chart(), field.values[node].clone(), FormKind::HessianTarget, &Default::default())?;
    let (alpha, _) = anchor_scale(&form, v0, l0)?;
    Ok((alpha, field.scaled(alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{covariant_hessian, Gradient};
    use crate::liquidity::levi_civita;
    use alloc::vec;
    use proptest::prelude::*;

    fn chart() -> Chart {
        Chart::spot_vol("vol-point")
    }

    /// `g = diag(e^σ, 1)` on (S, σ), with its analytic derivatives.
    fn exp_metric(x: &[f64]) -> (Matrix, Vec<Matrix>) {
        let e = libm::exp(x[1]);
        let g = Matrix::from_row_slice(2, 2, &[e, 0.0, 0.0, 1.0]);
        let dg = vec![Matrix::zeros(2, 2), Matrix::from_row_slice(2, 2, &[e, 0.0, 0.0, 0.0])];
        (g, dg)
    }

    fn exp_connection(x: &[f64]) -> Result<Connection> {
        let (g, dg) = exp_metric(x);
        levi_civita(&QuadraticForm::penalty(&chart(), g)?, &dg)
    }

    /// Non-metrizable: `C^S_{Sσ} = S`, all else zero; the curvature has a
    /// nonzero trace, which no metric connection allows.
    fn skew_connection(x: &[f64]) -> Result<Connection> {
        let mut c = Connection::zeros(&chart());
        c.set(0, 0, 1, x[0]);
        Ok(c)
    }

    fn grid(h: f64, n: usize) -> GridSpec {
        GridSpec::new(&chart(), &[1.0, 0.0], &[h, h], &[n, n]).unwrap()
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = GridSpec::new(&chart(), &[1.0, 0.0], &[0.5, 0.25], &[3, 4]).unwrap();
        assert_eq!(g.len(), 12);
        for n in 0..12 {
            assert_eq!(g.node(&g.index(n)), n);
        }
        assert_eq!(g.coords(5), vec![1.5, 0.25]);
        assert_eq!(g.nearest_node(&[1.6, 0.3]).unwrap(), 5);
        assert_eq!(g.refined().counts(), &[5, 7]);
        assert!(GridSpec::new(&chart(), &[0.0, 0.0], &[0.0, 1.0], &[3, 3]).is_err());
    }

    #[test]
    fn residual_examples() {
        let gs = grid(0.1, 4);
        let g = GridField::from_fn(&gs, |_| Ok(Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]))).unwrap();
        let c = GridField::from_fn(&gs, |_| Ok(Connection::zeros(&chart()))).unwrap();
        assert!(metric_pde_residual(&g, &c).unwrap().iter().all(|r| *r < 1e-13));

        let small = grid(0.1, 2);
        let g2 = GridField::from_fn(&small, |_| Ok(Matrix::identity(2, 2))).unwrap();
        let c2 = GridField::from_fn(&small, |_| Ok(Connection::zeros(&chart()))).unwrap();
        assert!(metric_pde_residual(&g2, &c2).is_err());
    }

    #[test]
    fn residual_converges_for_levi_civita() {
        let max_res = |h: f64, n: usize| {
            let gs = grid(h, n);
            let g = GridField::from_fn(&gs, |x| Ok(exp_metric(x).0)).unwrap();
            let c = GridField::from_fn(&gs, exp_connection).unwrap();
            metric_pde_residual(&g, &c).unwrap().into_iter().fold(0.0, f64::max)
        };
        let r1 = max_res(1e-2, 21);
        let r2 = max_res(5e-3, 41);
        assert!(r1 < 1e-4);
        let order = libm::log2(r1 / r2);
        assert!((order - 2.0).abs() < 0.2, "order {order}");
    }

    #[test]
    fn residual_stays_bounded_for_skew_connection() {
        let run = |h: f64, n: usize| {
            let gs = grid(h, n);
            let c = GridField::from_fn(&gs, skew_connection).unwrap();
            let anchor = QuadraticForm::penalty(&chart(), Matrix::identity(2, 2)).unwrap();
            let rec = reconstruct_metric(&c, 0, &anchor).unwrap();
            let res = metric_pde_residual(&rec.metrics, &c).unwrap();
            res.iter().map(|r| r * r).sum::<f64>().sqrt() / (res.len() as f64).sqrt()
        };
        let r1 = run(0.05, 9);
        let r2 = run(0.025, 17);
        let r3 = run(0.0125, 33);
        assert!(r1 > 1e-2 && r2 > 0.5 * r1 && r3 > 0.5 * r2, "{r1} {r2} {r3}");
    }

    #[test]
    fn zero_connection_reconstructs_constant_anchor() {
        let gs = grid(0.1, 5);
        let c = GridField::from_fn(&gs, |_| Ok(Connection::zeros(&chart()))).unwrap();
        let anchor = QuadraticForm::penalty(&chart(), Matrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0])).unwrap();
        let rec = reconstruct_metric(&c, 12, &anchor).unwrap();
        for m in rec.metrics.values() {
            assert!((m - anchor.matrix()).amax() < 1e-12);
        }
        assert!(rec.residual < 1e-12);
    }

    #[test]
    fn recovers_known_metric_and_is_linear_in_anchor() {
        let gs = grid(1e-2, 21);
        let c = GridField::from_fn(&gs, exp_connection).unwrap();
        let node = gs.nearest_node(&[1.1, 0.1]).unwrap();
        let x0 = gs.coords(node);
        let anchor = QuadraticForm::penalty(&chart(), exp_metric(&x0).0).unwrap();
        let rec = reconstruct_metric(&c, node, &anchor).unwrap();
        for n in 0..gs.len() {
            let exact = exp_metric(&gs.coords(n)).0;
            assert!((rec.metrics.at(n) - &exact).amax() < 1e-4);
        }
        let scaled = reconstruct_metric(&c, node, &anchor.scaled(3.0).unwrap()).unwrap();
        for n in 0..gs.len() {
            assert!((scaled.metrics.at(n) - rec.metrics.at(n) * 3.0).amax() < 1e-10);
        }
    }

    #[test]
    fn verdict_separates_metrizable_from_skew() {
        let anchor = QuadraticForm::penalty(&chart(), Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let gs = GridSpec::new(&chart(), &[1.0, 0.0], &[0.05, 0.05], &[9, 9]).unwrap();
        let ok = metrizability_verdict(&gs, &exp_connection, &[1.0, 0.0], &anchor).unwrap();
        assert!(ok.metrizable, "{ok:?}");
        let bad = metrizability_verdict(&gs, &skew_connection, &[1.0, 0.0], &anchor).unwrap();
        assert!(!bad.metrizable, "{bad:?}");
        let flat = metrizability_verdict(&gs, &|_| Ok(Connection::zeros(&chart())), &[1.0, 0.0], &anchor).unwrap();
        assert!(flat.metrizable);
    }

    #[test]
    fn spd_projection_examples() {
        let c = chart();
        let spd = QuadraticForm::penalty(&c, Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        let p = spd_project(&spd, 1e-6, 1.0).unwrap();
        assert!((p.matrix() - spd.matrix()).amax() < 1e-12);

        let ind = QuadraticForm::hessian(&c, Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).unwrap();
        let p = spd_project(&ind, 1e-6, 1.0).unwrap();
        assert!((p.matrix() - Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-6])).amax() < 1e-15);
        assert_eq!(p.kind(), FormKind::Penalty);

        let zero = QuadraticForm::hessian(&c, Matrix::zeros(2, 2)).unwrap();
        let p = spd_project(&zero, 1e-6, 2.0).unwrap();
        assert!((p.matrix() - Matrix::identity(2, 2) * 2e-6).amax() < 1e-20);
        assert!(spd_project(&zero, 1e-6, 0.0).is_err());
    }

    #[test]
    fn anchor_scale_examples() {
        let c = chart();
        let id = QuadraticForm::penalty(&c, Matrix::identity(2, 2)).unwrap();
        let v0 = TangentMove::new(&c, &[1.0, 0.0]).unwrap();
        let (alpha, g) = anchor_scale(&id, &v0, 2.0).unwrap();
        assert_eq!(alpha, 4.0);
        assert!((g.eval(&v0).unwrap() - 4.0).abs() < 1e-12);
        let (again, _) = anchor_scale(&g, &v0, 2.0).unwrap();
        assert!((again - 1.0).abs() < 1e-15);
        assert!(anchor_scale(&id, &TangentMove::new(&c, &[0.0, 0.0]).unwrap(), 1.0).is_err());

        let x = [1.0, 0.3];
        let (gm, dg) = exp_metric(&x);
        let base = levi_civita(&QuadraticForm::penalty(&c, gm.clone()).unwrap(), &dg).unwrap();
        let scaled_dg: Vec<Matrix> = dg.iter().map(|m| m * alpha).collect();
        let scaled = levi_civita(&QuadraticForm::penalty(&c, gm * alpha).unwrap(), &scaled_dg).unwrap();
        assert!(base.max_abs_diff(&scaled) < 1e-12);
    }

    #[test]
    fn anchor_scale_field_hits_target_length() {
        let gs = grid(0.1, 3);
        let f = GridField::from_fn(&gs, |x| Ok(exp_metric(x).0)).unwrap();
        let v0 = TangentMove::new(&chart(), &[0.5, 0.5]).unwrap();
        let (_, scaled) = anchor_scale_field(&f, 4, &v0, 0.7).unwrap();
        let q = QuadraticForm::penalty(&chart(), scaled.at(4).clone()).unwrap();
        assert!((q.eval(&v0).unwrap() - 0.49).abs() < 1e-12);
    }

    #[test]
    fn separable_diagonal_metric_has_no_vanna_coefficients() {
        let x = [1.3, 0.2];
        let g = Matrix::from_row_slice(2, 2, &[x[0] * x[0], 0.0, 0.0, libm::exp(x[1])]);
        let dg = vec![
            Matrix::from_row_slice(2, 2, &[2.0 * x[0], 0.0, 0.0, 0.0]),
            Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, libm::exp(x[1])]),
        ];
        let conn = levi_civita(&QuadraticForm::penalty(&chart(), g).unwrap(), &dg).unwrap();
        assert_eq!(conn.get(0, 0, 1), 0.0);
        assert_eq!(conn.get(1, 0, 1), 0.0);
    }

    proptest! {
        #[test]
        fn vanna_projection_identity(
            a in 0.5..3.0f64, b in 0.5..3.0f64, cc in -0.4..0.4f64,
            da in proptest::array::uniform3(-1.0..1.0f64),
            db in proptest::array::uniform3(-1.0..1.0f64),
            delta in -1.0..1.0f64, vega in 0.0..100.0f64,
            h in proptest::array::uniform3(-5.0..5.0f64), hvv in -5.0..5.0f64,
        ) {
            let c = chart();
            let g = Matrix::from_row_slice(2, 2, &[a, cc, cc, b]);
            let dg = vec![
                Matrix::from_row_slice(2, 2, &[da[0], da[1], da[1], da[2]]),
                Matrix::from_row_slice(2, 2, &[db[0], db[1], db[1], db[2]]),
            ];
            let conn = levi_civita(&QuadraticForm::penalty(&c, g).unwrap(), &dg).unwrap();
            let hess = QuadraticForm::hessian(&c, Matrix::from_row_slice(2, 2, &[h[0], h[1], h[1], h[2]])).unwrap();
            let grad = Gradient::new(&c, &[delta, vega]).unwrap();
            let cov = covariant_hessian(&hess, &conn, &grad).unwrap();
            let lhs = cov.matrix()[(0, 1)] - hvv;
            let rhs = h[1] - hvv - (conn.get(0, 0, 1) * delta + conn.get(1, 0, 1) * vega);
            let scale = h[1].abs() + hvv.abs() + (conn.get(0, 0, 1) * delta).abs() + (conn.get(1, 0, 1) * vega).abs();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn spd_projection_is_idempotent_and_order_preserving(
            e in proptest::array::uniform3(-2.0..2.0f64), angle in 0.0..3.2f64,
        ) {
            let c = Chart::new("xyz", &["x", "y", "z"], &["u", "u", "u"]).unwrap();
            let (s, co) = (libm::sin(angle), libm::cos(angle));
            let q = Matrix::from_row_slice(3, 3, &[co, -s, 0.0, s, co, 0.0, 0.0, 0.0, 1.0]);
            let m = &q * Matrix::from_diagonal(&Vector::from_column_slice(&e)) * q.transpose();
            let f = QuadraticForm::hessian(&c, (&m + m.transpose()) * 0.5).unwrap();
            let p1 = spd_project(&f, 1e-3, 1.0).unwrap();
            let p2 = spd_project(&p1, 1e-3, 1.0).unwrap();
            prop_assert!((p1.matrix() - p2.matrix()).amax() < 1e-12);
            let before = linalg::sym_eigenvalues(f.matrix());
            let after = linalg::sym_eigenvalues(p1.matrix());
            for w in 0..2 {
                prop_assert!(after[w] <= after[w + 1] + 1e-12);
                prop_assert!(before[w] <= before[w + 1] + 1e-12);
            }
            prop_assert!(after[0] > 0.0);
        }
    }
}
