//! Uniform Cartesian and radial grids with a shared discrete Dirichlet form.
//!
//! Every grid stores node volumes `V_k` and a list of edges with conductances
//! `c_e`, plus a per-node boundary conductance toward the Dirichlet wall. The
//! kinetic energy is `Σ_e c_e (u_i - u_j)² + Σ_k b_k u_k²`, which equals
//! `⟨u, -Δ_h u⟩_V` for the operator returned by [`Grid::neg_laplacian`].

use std::sync::Arc;

use crate::quad;

#[derive(Clone, Debug, PartialEq)]
pub enum Geometry {
    /// Nodes `x = -L + (k+1) h`, `h = 2L/(n+1)`, per axis; zero on `|x_i| = L`.
    Cartesian { dim: usize, nodes_per_axis: usize, half_width: f64 },
    /// Cell centres `r_k = (k + ½) h`, `h = R/n`; zero at `r = R`.
    Radial { dim: usize, nodes: usize, radius: f64 },
}

#[derive(Clone, Debug)]
pub struct Grid {
    geometry: Geometry,
    spacing: f64,
    volumes: Vec<f64>,
    edges: Vec<(u32, u32)>,
    conductance: Vec<f64>,
    boundary: Vec<f64>,
    diagonal: Vec<f64>,
}

impl Grid {
    pub fn cartesian(dim: usize, nodes_per_axis: usize, half_width: f64) -> Arc<Grid> {
        assert!((1..=3).contains(&dim), "dimension must be 1, 2 or 3");
        assert!(nodes_per_axis >= 3 && half_width > 0.0);
        let n = nodes_per_axis;
        let h = 2.0 * half_width / (n + 1) as f64;
        let total = n.pow(dim as u32);
        let cell = h.powi(dim as i32);
        let c = h.powi(dim as i32 - 2);
        let mut edges = Vec::with_capacity(dim * total);
        let mut boundary = vec![0.0; total];
        for k in 0..total {
            let mut stride = 1;
            let mut rest = k;
            for _ in 0..dim {
                let i = rest % n;
                rest /= n;
                if i + 1 < n {
                    edges.push((k as u32, (k + stride) as u32));
                } else {
                    boundary[k] += c;
                }
                if i == 0 {
                    boundary[k] += c;
                }
                stride *= n;
            }
        }
        let conductance = vec![c; edges.len()];
        Self::assemble(
            Geometry::Cartesian { dim, nodes_per_axis: n, half_width },
            h,
            vec![cell; total],
            edges,
            conductance,
            boundary,
        )
    }

    pub fn radial(dim: usize, nodes: usize, radius: f64) -> Arc<Grid> {
        assert!(dim == 2 || dim == 3, "radial grids need d = 2 or 3");
        assert!(nodes >= 2 && radius > 0.0);
        let h = radius / nodes as f64;
        let omega = quad::unit_sphere_area(dim);
        let p = dim as i32 - 1;
        let volumes = (0..nodes).map(|k| omega * ((k as f64 + 0.5) * h).powi(p) * h).collect();
        let edges: Vec<(u32, u32)> = (0..nodes - 1).map(|k| (k as u32, k as u32 + 1)).collect();
        let conductance = (0..nodes - 1).map(|k| omega * ((k + 1) as f64 * h).powi(p) / h).collect();
        let mut boundary = vec![0.0; nodes];
        boundary[nodes - 1] = omega * radius.powi(p) / (0.5 * h);
        Self::assemble(Geometry::Radial { dim, nodes, radius }, h, volumes, edges, conductance, boundary)
    }

    fn assemble(
        geometry: Geometry,
        spacing: f64,
        volumes: Vec<f64>,
        edges: Vec<(u32, u32)>,
        conductance: Vec<f64>,
        boundary: Vec<f64>,
    ) -> Arc<Grid> {
        let mut diagonal = boundary.clone();
        for (&(i, j), &c) in edges.iter().zip(&conductance) {
            diagonal[i as usize] += c;
            diagonal[j as usize] += c;
        }
        for (d, v) in diagonal.iter_mut().zip(&volumes) {
            *d /= v;
        }
        Arc::new(Grid { geometry, spacing, volumes, edges, conductance, boundary, diagonal })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        match self.geometry {
            Geometry::Cartesian { dim, .. } | Geometry::Radial { dim, .. } => dim,
        }
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.geometry, Geometry::Radial { .. })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Half-width of the Cartesian box or radius of the radial domain.
    pub fn extent(&self) -> f64 {
        match self.geometry {
            Geometry::Cartesian { half_width, .. } => half_width,
            Geometry::Radial { radius, .. } => radius,
        }
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Nodes per axis (Cartesian) or radial node count.
    pub fn axis_len(&self) -> usize {
        match self.geometry {
            Geometry::Cartesian { nodes_per_axis, .. } => nodes_per_axis,
            Geometry::Radial { nodes, .. } => nodes,
        }
    }

    /// Coordinates of node `k` along each axis (length 1 for radial grids).
    pub fn point(&self, k: usize) -> Vec<f64> {
        match self.geometry {
            Geometry::Cartesian { dim, nodes_per_axis: n, half_width } => {
                let mut rest = k;
                (0..dim)
                    .map(|_| {
                        let i = rest % n;
                        rest /= n;
                        -half_width + (i + 1) as f64 * self.spacing
                    })
                    .collect()
            }
            Geometry::Radial { .. } => vec![(k as f64 + 0.5) * self.spacing],
        }
    }

    /// `|x_k|`.
    pub fn radius(&self, k: usize) -> f64 {
        match self.geometry {
            Geometry::Radial { .. } => (k as f64 + 0.5) * self.spacing,
            Geometry::Cartesian { .. } => self.point(k).iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.radius(k)).collect()
    }

    /// Integer index of node `k` along each axis.
    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        let n = self.axis_len();
        let mut rest = k;
        (0..self.dim_axes())
            .map(|_| {
                let i = rest % n;
                rest /= n;
                i
            })
            .collect()
    }

    fn dim_axes(&self) -> usize {
        match self.geometry {
            Geometry::Cartesian { dim, .. } => dim,
            Geometry::Radial { .. } => 1,
        }
    }

    /// `Σ_k V_k u_k w_k`.
    pub fn inner(&self, u: &[f64], w: &[f64]) -> f64 {
        self.volumes.iter().zip(u).zip(w).map(|((v, a), b)| v * a * b).sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// `Σ_k V_k u_k`.
    pub fn integral(&self, u: &[f64]) -> f64 {
        self.volumes.iter().zip(u).map(|(v, a)| v * a).sum()
    }

    /// Discrete `‖∇u‖²` including the Dirichlet wall.
    pub fn dirichlet_energy(&self, u: &[f64]) -> f64 {
        let inner: f64 = self
            .edges
            .iter()
            .zip(&self.conductance)
            .map(|(&(i, j), c)| c * (u[i as usize] - u[j as usize]).powi(2))
            .sum();
        inner + self.boundary.iter().zip(u).map(|(b, x)| b * x * x).sum::<f64>()
    }

    /// `out = -Δ_h u`.
    pub fn neg_laplacian(&self, u: &[f64], out: &mut [f64]) {
        for (o, (b, x)) in out.iter_mut().zip(self.boundary.iter().zip(u)) {
            *o = b * x;
        }
        for (&(i, j), c) in self.edges.iter().zip(&self.conductance) {
            let (i, j) = (i as usize, j as usize);
            let flux = c * (u[i] - u[j]);
            out[i] += flux;
            out[j] -= flux;
        }
        for (o, v) in out.iter_mut().zip(&self.volumes) {
            *o /= v;
        }
    }

    /// Neighbouring node pairs.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Diagonal of `-Δ_h`.
    pub fn laplacian_diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Scale `u` to unit `V`-norm; returns the previous norm.
    pub fn normalize(&self, u: &mut [f64]) -> f64 {
        let n = self.norm(u);
        if n > 0.0 {
            u.iter_mut().for_each(|x| *x /= n);
        }
        n
    }

    /// Same geometry with twice the resolution (spacing halved).
    pub fn refined(&self) -> Arc<Grid> {
        match self.geometry {
            Geometry::Cartesian { dim, nodes_per_axis, half_width } => {
                Grid::cartesian(dim, 2 * nodes_per_axis + 1, half_width)
            }
            Geometry::Radial { dim, nodes, radius } => Grid::radial(dim, 2 * nodes, radius),
        }
    }
}

/// Values sampled on a grid.
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        assert_eq!(grid.len(), values.len(), "value count must match the grid");
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        Self { grid, values }
    }

    pub fn norm(&self) -> f64 {
        self.grid.norm(&self.values)
    }

    pub fn normalized(mut self) -> Self {
        self.grid.normalize(&mut self.values);
        self
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    /// `u²` as a density.
    pub fn squared(&self) -> GridFunction {
        GridFunction::new(self.grid.clone(), self.values.iter().map(|x| x * x).collect())
    }

    /// Cell masses `V_k u_k`.
    pub fn masses(&self) -> Vec<f64> {
        self.values.iter().zip(self.grid.volumes()).map(|(x, v)| x * v).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Wave functions are grid functions carrying an L²-normalization.
pub type WaveFunction = GridFunction;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cartesian_laplacian_matches_second_difference() {
        let g = Grid::cartesian(1, 9, 1.0);
        let u: Vec<f64> = (0..9).map(|k| g.point(k)[0].powi(2)).collect();
        let mut out = vec![0.0; 9];
        g.neg_laplacian(&u, &mut out);
        for &o in &out[1..8] {
            assert!((o + 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn quadratic_form_is_the_dirichlet_energy() {
        for g in [Grid::cartesian(2, 7, 1.5), Grid::radial(3, 20, 2.0), Grid::radial(2, 11, 1.0)] {
            let u: Vec<f64> = (0..g.len()).map(|k| ((k * 37 % 11) as f64).sin()).collect();
            let mut lu = vec![0.0; g.len()];
            g.neg_laplacian(&u, &mut lu);
            let form = g.inner(&u, &lu);
            assert!((form - g.dirichlet_energy(&u)).abs() < 1e-10 * form.abs());
        }
    }

    #[test]
    fn radial_volumes_sum_to_ball_volume() {
        let g = Grid::radial(3, 100, 2.0);
        let vol: f64 = g.volumes().iter().sum();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 8.0;
        assert!((vol - exact).abs() < 1e-3 * exact);
    }

    #[test]
    fn node_coordinates() {
        let g = Grid::cartesian(2, 3, 1.0);
        assert_eq!(g.point(4), vec![0.0, 0.0]);
        assert_eq!(g.point(0), vec![-0.5, -0.5]);
        assert_eq!(g.multi_index(5), vec![2, 1]);
        assert_eq!(g.refined().axis_len(), 7);
    }
}
