//! Compliance model: spring-like contact forces and the impedance-consistent target.
//!
//! With zero desired acceleration, constant gains and a quasi-static contact,
//! the Cartesian impedance law
//!
//! ```text
//! F = K_m (ẍ - ẍ_d) + K_d (ẋ - ẋ_d) + K_p (x - x_d)
//! ```
//!
//! reduces to `K_p (x_imp - x_ref) + K_d (ẋ_imp - ẋ_ref) = f_ext`. Assuming the
//! reference velocity is tracked, the compliant target is
//! `x_imp = x_ref + K_p⁻¹ f_ext`, which is what [`compliant_target`] computes.
//! `K_d` and `K_m` are carried in [`ImpedanceGains`] but play no role at runtime.

use nalgebra::{Cholesky, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImpedanceError {
    #[error("stiffness matrix is not symmetric positive-definite")]
    SingularGains,
}

#[derive(Serialize, Deserialize)]
struct GainsWire {
    stiffness: [[f64; 3]; 3],
    damping: [[f64; 3]; 3],
    inertia: [[f64; 3]; 3],
}

fn to_rows(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

fn from_rows(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| r[i][j])
}

/// Stiffness `K_p` (N/m), damping `K_d` (N·s/m) and inertia `K_m` (kg) gains.
///
/// The stiffness is validated once at construction; the Cholesky factor is kept
/// so every compliant-target evaluation is a triangular solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GainsWire", into = "GainsWire")]
pub struct ImpedanceGains {
    stiffness: Matrix3<f64>,
    damping: Matrix3<f64>,
    inertia: Matrix3<f64>,
    #[serde(skip)]
    factor: Matrix3<f64>,
}

impl TryFrom<GainsWire> for ImpedanceGains {
    type Error = ImpedanceError;

    fn try_from(w: GainsWire) -> Result<Self, Self::Error> {
        ImpedanceGains::new(from_rows(&w.stiffness), from_rows(&w.damping), from_rows(&w.inertia))
    }
}

impl From<ImpedanceGains> for GainsWire {
    fn from(g: ImpedanceGains) -> Self {
        GainsWire {
            stiffness: to_rows(&g.stiffness),
            damping: to_rows(&g.damping),
            inertia: to_rows(&g.inertia),
        }
    }
}

impl Default for ImpedanceGains {
    fn default() -> Self {
        Self::diagonal(100.0, 20.0, 1.0).expect("default gains are SPD")
    }
}

impl ImpedanceGains {
    pub fn new(
        stiffness: Matrix3<f64>,
        damping: Matrix3<f64>,
        inertia: Matrix3<f64>,
    ) -> Result<Self, ImpedanceError> {
        let symmetric = (stiffness - stiffness.transpose()).abs().max() <= 1e-12 * stiffness.abs().max();
        if !symmetric || stiffness.iter().any(|v| !v.is_finite()) {
            return Err(ImpedanceError::SingularGains);
        }
        let chol = Cholesky::new(stiffness).ok_or(ImpedanceError::SingularGains)?;
        let factor = chol.l();
        if factor.diagonal().iter().any(|d| *d <= 0.0 || !d.is_finite()) {
            return Err(ImpedanceError::SingularGains);
        }
        Ok(Self { stiffness, damping, inertia, factor })
    }

    /// Isotropic gains: `k_p·I`, `k_d·I`, `k_m·I`.
    pub fn diagonal(k_p: f64, k_d: f64, k_m: f64) -> Result<Self, ImpedanceError> {
        Self::new(
            Matrix3::identity() * k_p,
            Matrix3::identity() * k_d,
            Matrix3::identity() * k_m,
        )
    }

    pub fn with_stiffness(stiffness: Matrix3<f64>) -> Result<Self, ImpedanceError> {
        let d = Self::default();
        Self::new(stiffness, d.damping, d.inertia)
    }

    pub fn stiffness(&self) -> &Matrix3<f64> {
        &self.stiffness
    }

    pub fn damping(&self) -> &Matrix3<f64> {
        &self.damping
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    /// Solves `K_p · x = f` through the stored Cholesky factor.
    pub fn solve(&self, force: &Vector3<f64>) -> Vector3<f64> {
        let l = &self.factor;
        // forward substitution L y = f
        let y0 = force.x / l[(0, 0)];
        let y1 = (force.y - l[(1, 0)] * y0) / l[(1, 1)];
        let y2 = (force.z - l[(2, 0)] * y0 - l[(2, 1)] * y1) / l[(2, 2)];
        // back substitution Lᵀ x = y
        let x2 = y2 / l[(2, 2)];
        let x1 = (y1 - l[(2, 1)] * x2) / l[(1, 1)];
        let x0 = (y0 - l[(1, 0)] * x1 - l[(2, 0)] * x2) / l[(0, 0)];
        Vector3::new(x0, x1, x2)
    }
}

/// What the contact spring pushed against.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ContactSource {
    #[default]
    None,
    Surface(String),
}

/// Force acting on one end-effector, Newtons, world frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExternalForce {
    pub force: Vector3<f64>,
    pub source: ContactSource,
}

impl ExternalForce {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(force: Vector3<f64>) -> Self {
        Self { force, source: ContactSource::None }
    }

    pub fn is_zero(&self) -> bool {
        self.force == Vector3::zeros()
    }

    /// Adds another contact; the source of the larger force wins the tag.
    pub fn accumulate(&mut self, other: ExternalForce) {
        if other.force.norm() > self.force.norm() {
            self.source = other.source;
        }
        self.force += other.force;
    }
}

/// Position target shifted by the compliance offset. The velocity term equals the
/// reference velocity and is not stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompliantTarget {
    pub position: Vector3<f64>,
    pub offset: Vector3<f64>,
}

/// `x_imp = x_ref + K_p⁻¹ f_ext`. A zero force returns the reference bit-for-bit.
pub fn compliant_target(x_ref: &Vector3<f64>, f_ext: &ExternalForce, gains: &ImpedanceGains) -> CompliantTarget {
    if f_ext.is_zero() {
        return CompliantTarget { position: *x_ref, offset: Vector3::zeros() };
    }
    let offset = gains.solve(&f_ext.force);
    CompliantTarget { position: x_ref + offset, offset }
}

/// Contact geometry an end-effector can press into.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    /// Solid half-space `{p : (p - point)·normal < 0}`; `normal` points out of the solid.
    HalfSpace { point: Vector3<f64>, normal: Vector3<f64> },
    /// Solid axis-aligned box.
    Aabb { min: Vector3<f64>, max: Vector3<f64> },
}

impl Surface {
    /// Penetration depth (≥ 0) and the outward normal of the face to exit through.
    pub fn penetration(&self, p: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
        match self {
            Surface::HalfSpace { point, normal } => {
                let n = normal.normalize();
                let depth = -(p - point).dot(&n);
                (depth > 0.0).then_some((depth, n))
            }
            Surface::Aabb { min, max } => {
                if (0..3).any(|i| p[i] <= min[i] || p[i] >= max[i]) {
                    return None;
                }
                let mut best = (f64::INFINITY, Vector3::zeros());
                for i in 0..3 {
                    let to_min = p[i] - min[i];
                    let to_max = max[i] - p[i];
                    if to_min < best.0 {
                        let mut n = Vector3::zeros();
                        n[i] = -1.0;
                        best = (to_min, n);
                    }
                    if to_max < best.0 {
                        let mut n = Vector3::zeros();
                        n[i] = 1.0;
                        best = (to_max, n);
                    }
                }
                Some(best)
            }
        }
    }
}

/// Linear spring `f = k_s · max(0, depth) · n`.
pub fn spring_contact_force(ee_pos: &Vector3<f64>, surface: &Surface, k_s: f64) -> ExternalForce {
    match surface.penetration(ee_pos) {
        Some((depth, normal)) => ExternalForce::new(normal * (k_s * depth)),
        None => ExternalForce::zero(),
    }
}

/// First-order low-pass on a 3-vector, exact discretisation of `τ ẏ = u - y`.
///
/// A time constant of zero passes the input through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LowPass3 {
    pub state: Vector3<f64>,
}

impl LowPass3 {
    pub fn update(&mut self, input: &Vector3<f64>, dt: f64, time_constant: f64) -> Vector3<f64> {
        if time_constant <= 0.0 {
            self.state = *input;
        } else {
            let alpha = 1.0 - (-dt / time_constant).exp();
            self.state += (input - self.state) * alpha;
        }
        self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent 3×3 solve by Cramer's rule.
    pub(crate) fn cramer(a: &Matrix3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
        let det = a.determinant();
        Vector3::from_fn(|i, _| {
            let mut m = *a;
            m.set_column(i, b);
            m.determinant() / det
        })
    }

    fn random_spd(rng: &mut impl Rng) -> Matrix3<f64> {
        let a = Matrix3::from_fn(|_, _| rng.gen_range(-10.0..10.0));
        let m = a * a.transpose() + Matrix3::identity();
        (m + m.transpose()) * 0.5
    }

    #[test]
    fn zero_force_is_identity() {
        let x = Vector3::new(0.3, -0.2, 0.81);
        let t = compliant_target(&x, &ExternalForce::zero(), &ImpedanceGains::default());
        assert_eq!(t.position, x);
    }

    #[test]
    fn diagonal_offset() {
        let t = compliant_target(&Vector3::zeros(), &ExternalForce::new(Vector3::new(10.0, 0.0, -5.0)), &ImpedanceGains::default());
        assert_relative_eq!(t.offset, Vector3::new(0.10, 0.0, -0.05), epsilon = 1e-15);
    }

    #[test]
    fn random_spd_matches_cramer() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let k = random_spd(&mut rng);
            let gains = ImpedanceGains::with_stiffness(k).unwrap();
            let f = Vector3::from_fn(|_, _| rng.gen_range(-50.0..50.0));
            let got = compliant_target(&Vector3::zeros(), &ExternalForce::new(f), &gains).offset;
            let expected = cramer(&k, &f);
            assert!((got - expected).amax() < 1e-10, "{got} vs {expected}");
        }
    }

    #[test]
    fn rejects_non_spd() {
        let singular = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_eq!(ImpedanceGains::with_stiffness(singular), Err(ImpedanceError::SingularGains));
        let indefinite = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, 1.0));
        assert_eq!(ImpedanceGains::with_stiffness(indefinite), Err(ImpedanceError::SingularGains));
        let asymmetric = Matrix3::new(2.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0);
        assert_eq!(ImpedanceGains::with_stiffness(asymmetric), Err(ImpedanceError::SingularGains));
    }

    #[test]
    fn gains_json_round_trip_and_validation() {
        let g = ImpedanceGains::diagonal(150.0, 10.0, 2.0).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let back: ImpedanceGains = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
        let bad = json.replace("150.0", "-150.0");
        assert!(serde_json::from_str::<ImpedanceGains>(&bad).is_err());
    }

    #[test]
    fn spring_force_examples() {
        let wall = Surface::HalfSpace { point: Vector3::new(1.0, 0.0, 0.0), normal: Vector3::new(-1.0, 0.0, 0.0) };
        // 0.02 m outside the wall
        assert!(spring_contact_force(&Vector3::new(0.98, 0.0, 0.0), &wall, 500.0).is_zero());
        let f = spring_contact_force(&Vector3::new(1.01, 0.0, 0.0), &wall, 500.0);
        assert_relative_eq!(f.force, Vector3::new(-5.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn box_face_normal_is_nearest_face() {
        let b = Surface::Aabb { min: Vector3::new(0.0, 0.0, 0.0), max: Vector3::new(1.0, 1.0, 0.6) };
        let f = spring_contact_force(&Vector3::new(-0.0 + 0.004, 0.5, 0.3), &b, 500.0);
        assert_relative_eq!(f.force, Vector3::new(-2.0, 0.0, 0.0), epsilon = 1e-12);
        assert!(spring_contact_force(&Vector3::new(0.5, 0.5, 0.61), &b, 500.0).is_zero());
    }

    #[test]
    fn low_pass_converges_and_zero_tau_passes_through() {
        let mut lp = LowPass3::default();
        let u = Vector3::new(1.0, -2.0, 0.5);
        for _ in 0..200 {
            lp.update(&u, 0.02, 0.1);
        }
        assert_relative_eq!(lp.state, u, epsilon = 1e-12);
        let mut raw = LowPass3::default();
        assert_eq!(raw.update(&u, 0.02, 0.0), u);
    }

    proptest! {
        #[test]
        fn offset_is_linear_in_force_and_inverse_in_stiffness(seed in any::<u64>(), alpha in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_spd(&mut rng);
            let f = Vector3::from_fn(|_, _| rng.gen_range(-20.0..20.0));
            let g = ImpedanceGains::with_stiffness(k).unwrap();
            let g_scaled = ImpedanceGains::with_stiffness(k * alpha).unwrap();
            let base = compliant_target(&Vector3::zeros(), &ExternalForce::new(f), &g).offset;
            let scaled_force = compliant_target(&Vector3::zeros(), &ExternalForce::new(f * alpha), &g).offset;
            let stiffer = compliant_target(&Vector3::zeros(), &ExternalForce::new(f), &g_scaled).offset;
            let tol = 1e-9 * (1.0 + base.norm() * alpha);
            prop_assert!((scaled_force - base * alpha).norm() < tol);
            prop_assert!((stiffer - base / alpha).norm() < tol);
        }

        #[test]
        fn low_pass_keeps_steady_state(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, tau in 0.0f64..0.5) {
            let u = Vector3::new(x, y, z);
            let mut lp = LowPass3 { state: u };
            prop_assert_eq!(lp.update(&u, 0.02, tau), u);
        }
    }
}
