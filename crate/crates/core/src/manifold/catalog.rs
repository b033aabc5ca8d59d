use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{gram_schmidt, wrap_toward, AnalyticManifold};
use crate::autodiff::{NodeId, Tape, Unary};
use crate::error::{Error, Result};
use crate::tensor::{dot, norm};

/// Row-major `[n, k]` matrix whose columns are the given vectors.
fn columns_to_weight(cols: &[Vec<f64>]) -> Vec<f64> {
    let n = cols[0].len();
    let k = cols.len();
    let mut w = vec![0.0; n * k];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            w[i * k + j] = c[i];
        }
    }
    w
}

fn random_frame(n: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let basis = gram_schmidt(cols);
        if basis.len() == k {
            return basis;
        }
    }
}

/// Circle of radius `r` centred at the origin, embedded isometrically in
/// `ℝⁿ` through an orthonormal 2-frame.
#[derive(Debug, Clone)]
pub struct EmbeddedCircle {
    radius: f64,
    frame: [Vec<f64>; 2],
    weight: Arc<Vec<f64>>,
}

impl EmbeddedCircle {
    /// The unit circle in the plane.
    pub fn unit() -> Self {
        Self::with_frame(1.0, [vec![1.0, 0.0], vec![0.0, 1.0]])
    }

    /// Unit circle in `ℝⁿ` spanned by a seeded random orthonormal frame.
    pub fn embedded(n: usize, seed: u64) -> Self {
        assert!(n >= 2, "ambient dimension must be at least 2");
        let mut f = random_frame(n, 2, seed).into_iter();
        Self::with_frame(1.0, [f.next().unwrap(), f.next().unwrap()])
    }

    pub fn with_frame(radius: f64, frame: [Vec<f64>; 2]) -> Self {
        assert!(radius > 0.0);
        assert_eq!(frame[0].len(), frame[1].len());
        let weight = Arc::new(columns_to_weight(&frame));
        Self {
            radius,
            frame,
            weight,
        }
    }

    pub fn frame(&self) -> &[Vec<f64>; 2] {
        &self.frame
    }

    fn plane_coords(&self, x: &[f64]) -> (f64, f64) {
        (dot(&self.frame[0], x), dot(&self.frame[1], x))
    }

    fn embed(&self, a: f64, b: f64) -> Vec<f64> {
        self.frame[0]
            .iter()
            .zip(&self.frame[1])
            .map(|(f0, f1)| a * f0 + b * f1)
            .collect()
    }
}

impl AnalyticManifold for EmbeddedCircle {
    fn name(&self) -> String {
        format!("circle(r={}, n={})", self.radius, self.ambient_dim())
    }

    fn ambient_dim(&self) -> usize {
        self.frame[0].len()
    }

    fn intrinsic_dim(&self) -> usize {
        1
    }

    fn reach(&self) -> f64 {
        self.radius
    }

    fn chart(&self, z: &[f64]) -> Vec<f64> {
        self.embed(self.radius * z[0].cos(), self.radius * z[0].sin())
    }

    fn chart_jacobian(&self, z: &[f64]) -> Vec<Vec<f64>> {
        vec![self.embed(-self.radius * z[0].sin(), self.radius * z[0].cos())]
    }

    fn record_chart(&self, tape: &mut Tape, z: NodeId) -> Result<NodeId> {
        let c = tape.unary(z, Unary::Cos);
        let s = tape.unary(z, Unary::Sin);
        let cs = tape.concat(&[c, s])?;
        let scaled = tape.scale(cs, self.radius);
        let n = self.ambient_dim();
        tape.dense(scaled, self.weight.clone(), Arc::new(vec![0.0; n]), None)
    }

    fn chart_inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (a, b) = self.plane_coords(x);
        Ok(vec![b.atan2(a)])
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let (a, b) = self.plane_coords(x);
        let r = a.hypot(b);
        if r == 0.0 {
            // every circle point is nearest; take the chart origin
            return self.chart(&[0.0]);
        }
        self.embed(self.radius * a / r, self.radius * b / r)
    }

    fn distance(&self, x: &[f64]) -> f64 {
        let (a, b) = self.plane_coords(x);
        let in_plane = self.embed(a, b);
        let off_plane: f64 = x
            .iter()
            .zip(&in_plane)
            .map(|(xi, pi)| (xi - pi) * (xi - pi))
            .sum();
        let radial = a.hypot(b) - self.radius;
        (off_plane + radial * radial).sqrt()
    }

    fn tangent_basis(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let theta = self.chart_inverse(x)?[0];
        Ok(vec![self.embed(-theta.sin(), theta.cos())])
    }

    fn sample_latent(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![rng.random_range(-PI..PI)]
    }

    fn align_latent(&self, reference: &[f64], z: &[f64]) -> Vec<f64> {
        vec![wrap_toward(reference[0], z[0])]
    }
}

/// Sphere of radius `r` in `ℝ³`, charted by polar angle θ and azimuth φ.
#[derive(Debug, Clone)]
pub struct Sphere {
    radius: f64,
}

impl Sphere {
    pub fn new(radius: f64) -> Self {
        assert!(radius > 0.0);
        Self { radius }
    }
}

const POLE_TOL: f64 = 1e-9;

impl AnalyticManifold for Sphere {
    fn name(&self) -> String {
        format!("sphere(r={})", self.radius)
    }

    fn ambient_dim(&self) -> usize {
        3
    }

    fn intrinsic_dim(&self) -> usize {
        2
    }

    fn reach(&self) -> f64 {
        self.radius
    }

    fn chart(&self, z: &[f64]) -> Vec<f64> {
        let (st, ct) = z[0].sin_cos();
        let (sp, cp) = z[1].sin_cos();
        let r = self.radius;
        vec![r * st * cp, r * st * sp, r * ct]
    }

    fn chart_jacobian(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let (st, ct) = z[0].sin_cos();
        let (sp, cp) = z[1].sin_cos();
        let r = self.radius;
        vec![
            vec![r * ct * cp, r * ct * sp, -r * st],
            vec![-r * st * sp, r * st * cp, 0.0],
        ]
    }

    fn record_chart(&self, tape: &mut Tape, z: NodeId) -> Result<NodeId> {
        let theta = tape.slice(z, 0, 1)?;
        let phi = tape.slice(z, 1, 1)?;
        let st = tape.unary(theta, Unary::Sin);
        let ct = tape.unary(theta, Unary::Cos);
        let sp = tape.unary(phi, Unary::Sin);
        let cp = tape.unary(phi, Unary::Cos);
        let x = tape.mul(st, cp)?;
        let y = tape.mul(st, sp)?;
        let xyz = tape.concat(&[x, y, ct])?;
        Ok(tape.scale(xyz, self.radius))
    }

    fn chart_inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::ChartUndefined("sphere centre".into()));
        }
        let rho = x[0].hypot(x[1]);
        if rho / r < POLE_TOL {
            return Err(Error::ChartUndefined(format!(
                "sphere pole ({:.3e}, {:.3e}, {:.3e})",
                x[0], x[1], x[2]
            )));
        }
        Ok(vec![(x[2] / r).clamp(-1.0, 1.0).acos(), x[1].atan2(x[0])])
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let r = norm(x);
        if r == 0.0 {
            return vec![0.0, 0.0, self.radius];
        }
        x.iter().map(|v| v * self.radius / r).collect()
    }

    fn distance(&self, x: &[f64]) -> f64 {
        (norm(x) - self.radius).abs()
    }

    /// Orthonormal complement of the normal direction; valid at the poles too.
    fn tangent_basis(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::ChartUndefined("sphere centre".into()));
        }
        let normal: Vec<f64> = x.iter().map(|v| v / r).collect();
        // seed with the coordinate axes least aligned with the normal
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| normal[i].abs().total_cmp(&normal[j].abs()));
        let mut axes = vec![normal];
        for &i in &order[..2] {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            axes.push(e);
        }
        let mut basis = gram_schmidt(axes);
        basis.remove(0);
        Ok(basis)
    }

    fn sample_latent(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let u: f64 = rng.random_range(-1.0..1.0);
        let phi: f64 = rng.random_range(-PI..PI);
        vec![u.acos(), phi]
    }

    fn align_latent(&self, reference: &[f64], z: &[f64]) -> Vec<f64> {
        vec![z[0], wrap_toward(reference[1], z[1])]
    }
}

/// Axis-aligned ellipse `(a cos t, b sin t)`: a closed curve with
/// non-constant curvature.
#[derive(Debug, Clone)]
pub struct Ellipse {
    a: f64,
    b: f64,
    reach_bound: f64,
}

/// Grid resolution for the dense search in numeric projection.
const PROJECTION_GRID: usize = 10_000;
const GOLDEN_STEPS: usize = 20;

impl Ellipse {
    pub fn new(a: f64, b: f64) -> Self {
        assert!(a > 0.0 && b > 0.0);
        let mut e = Self {
            a,
            b,
            reach_bound: 0.0,
        };
        e.reach_bound = 1.0 / e.max_curvature();
        e
    }

    /// Largest curvature over a dense parameter grid.
    pub fn max_curvature(&self) -> f64 {
        (0..PROJECTION_GRID)
            .map(|i| self.curvature(TAU * i as f64 / PROJECTION_GRID as f64))
            .fold(0.0, f64::max)
    }

    pub fn curvature(&self, t: f64) -> f64 {
        let (s, c) = t.sin_cos();
        let (dx, dy) = (-self.a * s, self.b * c);
        let (ddx, ddy) = (-self.a * c, -self.b * s);
        (dx * ddy - dy * ddx).abs() / (dx * dx + dy * dy).powf(1.5)
    }

    fn point(&self, t: f64) -> [f64; 2] {
        [self.a * t.cos(), self.b * t.sin()]
    }

    fn dist2(&self, x: &[f64], t: f64) -> f64 {
        let p = self.point(t);
        (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)
    }

    /// Parameter of the nearest point: dense grid, golden-section refinement,
    /// then a Newton polish on the stationarity condition.
    fn nearest_parameter(&self, x: &[f64]) -> f64 {
        let h = TAU / PROJECTION_GRID as f64;
        let (mut best_t, mut best) = (0.0, f64::INFINITY);
        for i in 0..PROJECTION_GRID {
            let t = h * i as f64;
            let d = self.dist2(x, t);
            if d < best {
                best = d;
                best_t = t;
            }
        }
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (best_t - h, best_t + h);
        let mut c = hi - inv_phi * (hi - lo);
        let mut d = lo + inv_phi * (hi - lo);
        for _ in 0..GOLDEN_STEPS {
            if self.dist2(x, c) < self.dist2(x, d) {
                hi = d;
            } else {
                lo = c;
            }
            c = hi - inv_phi * (hi - lo);
            d = lo + inv_phi * (hi - lo);
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..5 {
            // g(t) = c'(t)·(c(t) − x)
            let (s, co) = t.sin_cos();
            let p = self.point(t);
            let d1 = [-self.a * s, self.b * co];
            let d2 = [-self.a * co, -self.b * s];
            let r = [p[0] - x[0], p[1] - x[1]];
            let g = d1[0] * r[0] + d1[1] * r[1];
            let dg = d2[0] * r[0] + d2[1] * r[1] + d1[0] * d1[0] + d1[1] * d1[1];
            if dg <= 0.0 {
                break;
            }
            let next = t - g / dg;
            if self.dist2(x, next) <= self.dist2(x, t) {
                t = next;
            } else {
                break;
            }
        }
        t
    }
}

impl AnalyticManifold for Ellipse {
    fn name(&self) -> String {
        format!("ellipse(a={}, b={})", self.a, self.b)
    }

    fn ambient_dim(&self) -> usize {
        2
    }

    fn intrinsic_dim(&self) -> usize {
        1
    }

    /// `1 / max curvature`; the bottleneck term is not binding for an ellipse.
    fn reach(&self) -> f64 {
        self.reach_bound
    }

    fn chart(&self, z: &[f64]) -> Vec<f64> {
        self.point(z[0]).to_vec()
    }

    fn chart_jacobian(&self, z: &[f64]) -> Vec<Vec<f64>> {
        let (s, c) = z[0].sin_cos();
        vec![vec![-self.a * s, self.b * c]]
    }

    fn record_chart(&self, tape: &mut Tape, z: NodeId) -> Result<NodeId> {
        let c = tape.unary(z, Unary::Cos);
        let s = tape.unary(z, Unary::Sin);
        let cs = tape.concat(&[c, s])?;
        let w = Arc::new(vec![self.a, 0.0, 0.0, self.b]);
        tape.dense(cs, w, Arc::new(vec![0.0, 0.0]), None)
    }

    fn chart_inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = self.nearest_parameter(x);
        Ok(vec![wrap_toward(0.0, t)])
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.point(self.nearest_parameter(x)).to_vec()
    }

    fn sample_latent(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![rng.random_range(-PI..PI)]
    }

    fn align_latent(&self, reference: &[f64], z: &[f64]) -> Vec<f64> {
        vec![wrap_toward(reference[0], z[0])]
    }
}

/// Affine subspace `offset + span(basis)`; flat, so the reach is infinite.
#[derive(Debug, Clone)]
pub struct LinearSubspace {
    basis: Vec<Vec<f64>>,
    offset: Vec<f64>,
    weight: Arc<Vec<f64>>,
}

impl LinearSubspace {
    pub fn new(spanning: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let k = spanning.len();
        let basis = gram_schmidt(spanning);
        if basis.len() != k || k == 0 {
            return Err(Error::invalid("subspace spanning vectors are dependent"));
        }
        if basis[0].len() != offset.len() {
            return Err(Error::invalid("offset dimension differs from basis"));
        }
        let weight = Arc::new(columns_to_weight(&basis));
        Ok(Self {
            basis,
            offset,
            weight,
        })
    }

    pub fn random(n: usize, k: usize, seed: u64) -> Self {
        Self::new(random_frame(n, k, seed), vec![0.0; n]).expect("random frame is independent")
    }
}

impl AnalyticManifold for LinearSubspace {
    fn name(&self) -> String {
        format!("subspace(k={}, n={})", self.basis.len(), self.offset.len())
    }

    fn ambient_dim(&self) -> usize {
        self.offset.len()
    }

    fn intrinsic_dim(&self) -> usize {
        self.basis.len()
    }

    fn reach(&self) -> f64 {
        f64::INFINITY
    }

    fn chart(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.offset.clone();
        for (zj, b) in z.iter().zip(&self.basis) {
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi += zj * bi;
            }
        }
        x
    }

    fn chart_jacobian(&self, _z: &[f64]) -> Vec<Vec<f64>> {
        self.basis.clone()
    }

    fn record_chart(&self, tape: &mut Tape, z: NodeId) -> Result<NodeId> {
        tape.dense(z, self.weight.clone(), Arc::new(self.offset.clone()), None)
    }

    fn chart_inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        let centred = crate::tensor::sub(x, &self.offset);
        Ok(self.basis.iter().map(|b| dot(b, &centred)).collect())
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let z = self.chart_inverse(x).expect("total chart");
        self.chart(&z)
    }

    fn tangent_basis(&self, _x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self.basis.clone())
    }

    fn sample_latent(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.basis.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }
}
