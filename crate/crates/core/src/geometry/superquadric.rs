use nalgebra::{Matrix3, Vector2, Vector3};

use super::dual::{Dual, Real};
use crate::error::{Error, Result};

/// Number of scalar parameters per superquadric:
/// scale (3), shape exponents (2), rotation quaternion (4), translation (3).
pub const SQ_PARAMS: usize = 12;

pub(crate) type Dual12 = Dual<SQ_PARAMS>;

/// Box constraints applied after every optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeBounds {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub eps_min: f64,
    pub eps_max: f64,
}

impl Default for ShapeBounds {
    fn default() -> Self {
        Self {
            alpha_min: 0.1,
            alpha_max: 1.0,
            eps_min: 0.1,
            eps_max: 1.9,
        }
    }
}

impl ShapeBounds {
    pub fn contains(&self, sq: &Superquadric) -> bool {
        sq.alpha.iter().all(|a| (self.alpha_min..=self.alpha_max).contains(a))
            && sq.epsilon.iter().all(|e| (self.eps_min..=self.eps_max).contains(e))
    }
}

/// Superquadric `S(x) = f(R^-1 (x - t); alpha, epsilon)`: 1 on the surface,
/// below 1 inside, above 1 outside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Superquadric {
    pub alpha: Vector3<f64>,
    pub epsilon: Vector2<f64>,
    /// Quaternion `(w, x, y, z)`; rotates canonical into world coordinates.
    pub rotation: [f64; 4],
    pub translation: Vector3<f64>,
}

impl Superquadric {
    pub fn new(alpha: Vector3<f64>, epsilon: Vector2<f64>, rotation: [f64; 4], translation: Vector3<f64>) -> Self {
        Self {
            alpha,
            epsilon,
            rotation,
            translation,
        }
    }

    pub fn sphere(center: Vector3<f64>, radius: f64) -> Self {
        Self::new(
            Vector3::repeat(radius),
            Vector2::new(1.0, 1.0),
            [1.0, 0.0, 0.0, 0.0],
            center,
        )
    }

    pub fn to_params(&self) -> [f64; SQ_PARAMS] {
        let a = &self.alpha;
        let e = &self.epsilon;
        let q = &self.rotation;
        let t = &self.translation;
        [a.x, a.y, a.z, e.x, e.y, q[0], q[1], q[2], q[3], t.x, t.y, t.z]
    }

    pub fn from_params(p: &[f64]) -> Self {
        Self::new(
            Vector3::new(p[0], p[1], p[2]),
            Vector2::new(p[3], p[4]),
            [p[5], p[6], p[7], p[8]],
            Vector3::new(p[9], p[10], p[11]),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.to_params().iter().all(|v| v.is_finite())
    }

    pub fn quaternion_norm(&self) -> f64 {
        self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Clamps scale and shape into `bounds` and renormalizes the quaternion.
    /// A quaternion already within rounding of unit length is left as is,
    /// so projecting twice changes nothing.
    pub fn project(&mut self, bounds: &ShapeBounds) {
        for a in self.alpha.iter_mut() {
            *a = a.clamp(bounds.alpha_min, bounds.alpha_max);
        }
        for e in self.epsilon.iter_mut() {
            *e = e.clamp(bounds.eps_min, bounds.eps_max);
        }
        let n = self.quaternion_norm();
        if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            return;
        }
        if n > 0.0 {
            for q in &mut self.rotation {
                *q /= n;
            }
        } else {
            self.rotation = [1.0, 0.0, 0.0, 0.0];
        }
    }

    /// Canonical-to-world rotation (the quaternion is normalized first).
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = rotation_matrix(self.rotation);
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    /// Implicit value `S(x)`.
    pub fn value(&self, x: &Vector3<f64>) -> f64 {
        self.prepare().value(x)
    }

    /// World-space gradient `dS/dx`.
    pub fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let (_, g) = world_value_grad(&self.to_params(), [x.x, x.y, x.z]);
        Vector3::new(g[0], g[1], g[2])
    }

    /// `dS/dθ` in parameter order (alpha, epsilon, quaternion, translation).
    pub fn param_gradient(&self, x: &Vector3<f64>) -> [f64; SQ_PARAMS] {
        self.dual_eval(x).0.eps
    }

    /// `S` and `dS/dx`, both carrying derivatives with respect to all 12
    /// parameters.
    pub(crate) fn dual_eval(&self, x: &Vector3<f64>) -> (Dual12, [Dual12; 3]) {
        let p = self.to_params();
        let params: [Dual12; SQ_PARAMS] = std::array::from_fn(|i| Dual12::variable(p[i], i));
        let xd = [Dual12::cst(x.x), Dual12::cst(x.y), Dual12::cst(x.z)];
        world_value_grad(&params, xd)
    }

    /// Jacobian of the unit normal with respect to the parameters
    /// (row `i` is `d n_i / dθ`).
    pub fn normal_param_jacobian(&self, x: &Vector3<f64>) -> Result<[[f64; SQ_PARAMS]; 3]> {
        let (_, g) = self.dual_eval(x);
        let n = normalize3(g)?;
        Ok([n[0].eps, n[1].eps, n[2].eps])
    }

    pub(crate) fn prepare(&self) -> PreparedQuadric {
        PreparedQuadric::new(self)
    }
}

/// `S(x)` for a single primitive.
pub fn sq_implicit(sq: &Superquadric, x: &Vector3<f64>) -> f64 {
    sq.value(x)
}

/// Union of primitives: minimum implicit value and the index attaining it
/// (lowest index on ties).
pub fn sq_union(sqs: &[Superquadric], x: &Vector3<f64>) -> Result<(f64, usize)> {
    if sqs.is_empty() {
        return Err(Error::Domain("superquadric union of an empty list".into()));
    }
    let mut best = (f64::INFINITY, 0);
    for (i, sq) in sqs.iter().enumerate() {
        let v = sq.value(x);
        if v < best.0 {
            best = (v, i);
        }
    }
    Ok(best)
}

/// Unit normal of the union surface at `x` (gradient of the winning primitive).
pub fn sq_normal(sqs: &[Superquadric], x: &Vector3<f64>) -> Result<Vector3<f64>> {
    let (_, i) = sq_union(sqs, x)?;
    let g = sqs[i].gradient(x);
    let m = g.norm();
    if !(m > 1e-12) {
        return Err(Error::DegenerateNormal { magnitude: m });
    }
    Ok(g / m)
}

pub(crate) fn normalize3<R: Real>(g: [R; 3]) -> Result<[R; 3]> {
    let m = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    if !(m.re() > 1e-12) {
        return Err(Error::DegenerateNormal { magnitude: m.re() });
    }
    Ok([g[0] / m, g[1] / m, g[2] / m])
}

/// Rotation matrix of the normalized quaternion `(w, x, y, z)`.
pub(crate) fn rotation_matrix<R: Real>(q: [R; 4]) -> [[R; 3]; 3] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    let one = R::cst(1.0);
    let two = R::cst(2.0);
    [
        [
            one - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
        ],
        [
            two * (x * y + w * z),
            one - two * (x * x + z * z),
            two * (y * z - w * x),
        ],
        [
            two * (x * z - w * y),
            two * (y * z + w * x),
            one - two * (x * x + y * y),
        ],
    ]
}

#[inline]
fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Canonical-frame value and gradient. Absolute values are taken on the base
/// terms before the fractional powers so the surface is defined in every
/// octant.
pub(crate) fn canonical_value_grad<R: Real>(p: [R; 3], alpha: [R; 3], eps: [R; 2]) -> (R, [R; 3]) {
    let two = R::cst(2.0);
    let one = R::cst(1.0);
    let pw = two / eps[1];
    let qw = two / eps[0];
    let r = eps[1] / eps[0];

    let ax = p[0].abs() / alpha[0];
    let ay = p[1].abs() / alpha[1];
    let az = p[2].abs() / alpha[2];

    let tx = ax.powr(pw);
    let ty = ay.powr(pw);
    let a = tx + ty;
    let f = a.powr(r) + az.powr(qw);

    let (gx, gy) = if a.re() > 0.0 {
        let outer = r * a.powr(r - one) * pw;
        (
            (outer * ax.powr(pw - one) / alpha[0]).scale(sign(p[0].re())),
            (outer * ay.powr(pw - one) / alpha[1]).scale(sign(p[1].re())),
        )
    } else {
        (R::cst(0.0), R::cst(0.0))
    };
    let gz = (qw * az.powr(qw - one) / alpha[2]).scale(sign(p[2].re()));
    (f, [gx, gy, gz])
}

/// World-frame value and gradient for packed parameters.
pub(crate) fn world_value_grad<R: Real>(params: &[R; SQ_PARAMS], x: [R; 3]) -> (R, [R; 3]) {
    let rot = rotation_matrix([params[5], params[6], params[7], params[8]]);
    value_grad_with_rotation(params, &rot, x)
}

fn value_grad_with_rotation<R: Real>(params: &[R; SQ_PARAMS], rot: &[[R; 3]; 3], x: [R; 3]) -> (R, [R; 3]) {
    let d = [x[0] - params[9], x[1] - params[10], x[2] - params[11]];
    // canonical = R^T (x - t)
    let pc: [R; 3] = std::array::from_fn(|i| rot[0][i] * d[0] + rot[1][i] * d[1] + rot[2][i] * d[2]);
    let (f, gc) = canonical_value_grad(pc, [params[0], params[1], params[2]], [params[3], params[4]]);
    let g: [R; 3] = std::array::from_fn(|j| rot[j][0] * gc[0] + rot[j][1] * gc[1] + rot[j][2] * gc[2]);
    (f, g)
}

/// Parameters and rotation as duals over all 12 parameters, built once for
/// many evaluations.
#[derive(Clone, Debug)]
pub(crate) struct DualQuadric {
    pub params: [Dual12; SQ_PARAMS],
    rot: [[Dual12; 3]; 3],
}

impl DualQuadric {
    pub fn new(sq: &Superquadric) -> Self {
        let p = sq.to_params();
        let params: [Dual12; SQ_PARAMS] = std::array::from_fn(|i| Dual12::variable(p[i], i));
        let rot = rotation_matrix([params[5], params[6], params[7], params[8]]);
        Self { params, rot }
    }

    /// Same result as [`Superquadric::dual_eval`].
    pub fn value_grad(&self, x: &Vector3<f64>) -> (Dual12, [Dual12; 3]) {
        let xd = [Dual12::cst(x.x), Dual12::cst(x.y), Dual12::cst(x.z)];
        value_grad_with_rotation(&self.params, &self.rot, xd)
    }
}

/// Superquadric with its rotation and exponents precomputed for fast
/// repeated evaluation of `S`.
#[derive(Clone, Debug)]
pub(crate) struct PreparedQuadric {
    pub rot: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub inv_alpha: Vector3<f64>,
    pub alpha: Vector3<f64>,
    pub eps1: f64,
    eps2: f64,
    pw: f64,
    qw: f64,
    r: f64,
}

impl PreparedQuadric {
    pub fn new(sq: &Superquadric) -> Self {
        Self {
            rot: sq.rotation_matrix(),
            translation: sq.translation,
            inv_alpha: sq.alpha.map(|a| 1.0 / a),
            alpha: sq.alpha,
            eps1: sq.epsilon.x,
            eps2: sq.epsilon.y,
            pw: 2.0 / sq.epsilon.y,
            qw: 2.0 / sq.epsilon.x,
            r: sq.epsilon.y / sq.epsilon.x,
        }
    }

    #[inline]
    pub fn to_canonical(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rot.tr_mul(&(x - self.translation))
    }

    #[inline]
    pub fn canonical_value(&self, c: &Vector3<f64>) -> f64 {
        let ax = (c.x * self.inv_alpha.x).abs();
        let ay = (c.y * self.inv_alpha.y).abs();
        let az = (c.z * self.inv_alpha.z).abs();
        (ax.powf(self.pw) + ay.powf(self.pw)).powf(self.r) + az.powf(self.qw)
    }

    #[inline]
    pub fn value(&self, x: &Vector3<f64>) -> f64 {
        self.canonical_value(&self.to_canonical(x))
    }

    /// Canonical-frame gradient at canonical point `c`.
    pub fn canonical_grad(&self, c: &Vector3<f64>) -> Vector3<f64> {
        let (_, g) = canonical_value_grad(
            [c.x, c.y, c.z],
            [self.alpha.x, self.alpha.y, self.alpha.z],
            [self.eps1, self.eps2],
        );
        Vector3::new(g[0], g[1], g[2])
    }

    /// Half extents of a canonical box containing `{S <= level}` (level >= 1).
    pub fn level_box(&self, level: f64) -> Vector3<f64> {
        self.alpha * level.powf(self.eps1 / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_sphere() -> Superquadric {
        Superquadric::sphere(Vector3::zeros(), 1.0)
    }

    #[test]
    fn sphere_values() {
        let s = unit_sphere();
        assert!((s.value(&Vector3::new(1.0, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        assert_eq!(s.value(&Vector3::zeros()), 0.0);
        assert!((s.value(&Vector3::new(2.0, 0.0, 0.0)) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn translated_and_scaled() {
        let s = Superquadric::sphere(Vector3::new(1.0, 0.0, 0.0), 1.0);
        assert!((s.value(&Vector3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-12);
        let mut s = unit_sphere();
        s.alpha = Vector3::new(2.0, 1.0, 1.0);
        assert!((s.value(&Vector3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn defined_in_all_octants() {
        let mut s = unit_sphere();
        s.epsilon = Vector2::new(0.4, 1.3);
        let v = s.value(&Vector3::new(0.3, -0.2, 0.1));
        let w = s.value(&Vector3::new(-0.3, 0.2, -0.1));
        assert!(v.is_finite());
        assert_eq!(v, w);
    }

    #[test]
    fn union_picks_minimum_lowest_index_on_tie() {
        let a = Superquadric::sphere(Vector3::new(-2.0, 0.0, 0.0), 1.0);
        let b = Superquadric::sphere(Vector3::new(2.0, 0.0, 0.0), 1.0);
        let (v, i) = sq_union(&[a, b], &Vector3::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!((v, i), (0.0, 1));
        let (_, i) = sq_union(&[a, b], &Vector3::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(i, 0);
        assert!(sq_union(&[], &Vector3::zeros()).is_err());
        let (v, _) = sq_union(&[a], &Vector3::new(0.3, 0.1, 0.0)).unwrap();
        assert_eq!(v, a.value(&Vector3::new(0.3, 0.1, 0.0)));
    }

    #[test]
    fn sphere_normal_and_degenerate_center() {
        let s = [unit_sphere()];
        let n = sq_normal(&s, &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((n - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        assert!(matches!(
            sq_normal(&s, &Vector3::zeros()),
            Err(Error::DegenerateNormal { .. })
        ));
    }

    #[test]
    fn dual_and_f64_paths_agree() {
        let sq = Superquadric::new(
            Vector3::new(0.7, 0.4, 0.9),
            Vector2::new(0.6, 1.4),
            [0.9, 0.1, -0.3, 0.2],
            Vector3::new(0.1, -0.2, 0.3),
        );
        let x = Vector3::new(0.5, 0.1, -0.4);
        let (s, g) = sq.dual_eval(&x);
        assert!((s.re - sq.value(&x)).abs() < 1e-12 * s.re.abs().max(1.0));
        let gf = sq.gradient(&x);
        for k in 0..3 {
            assert!((g[k].re - gf[k]).abs() < 1e-12 * gf.norm());
        }
    }

    #[test]
    fn projection_enforces_bounds() {
        let mut sq = Superquadric::new(
            Vector3::new(0.05, 2.0, 0.5),
            Vector2::new(0.01, 3.0),
            [2.0, 0.0, 0.0, 0.0],
            Vector3::zeros(),
        );
        let b = ShapeBounds::default();
        sq.project(&b);
        assert!(b.contains(&sq));
        assert!((sq.quaternion_norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn level_box_contains_sublevel_set() {
        let sq = Superquadric::new(
            Vector3::new(0.5, 0.3, 0.8),
            Vector2::new(1.7, 0.3),
            [1.0, 0.0, 0.0, 0.0],
            Vector3::zeros(),
        );
        let prep = sq.prepare();
        let level = 2.2;
        let bx = prep.level_box(level);
        // just outside each face of the box the value exceeds the level
        for axis in 0..3 {
            let mut c = Vector3::zeros();
            c[axis] = bx[axis] * 1.0001;
            assert!(prep.canonical_value(&c) > level);
        }
    }
}
