//! Unit quaternions, their logarithmic and exponential maps, and the
//! integration step used by the orientation movement primitive.
//!
//! A quaternion is written `q = [v, u]` with scalar part `v` and vector part
//! `u`. Every value produced by this module has unit norm.

use std::f64::consts::PI;
use std::ops::Mul;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance accepted on the norm of quaternions handed to [`qmul`].
pub const UNIT_TOLERANCE: f64 = 1e-6;
/// Below this vector-part / rotation norm the maps switch to series expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Unit quaternion on S³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    v: f64,
    u: [f64; 3],
}

/// Rotation vector in R³ (scaled axis, radians).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RotVec(pub [f64; 3]);

impl RotVec {
    pub const ZERO: RotVec = RotVec([0.0; 3]);

    pub fn z(angle: f64) -> Self {
        RotVec([0.0, 0.0, angle])
    }

    pub fn norm(&self) -> f64 {
        norm3(&self.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        RotVec([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

fn norm3(a: &[f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl TryFrom<[f64; 4]> for Quaternion {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        let q = Quaternion {
            v: c[0],
            u: [c[1], c[2], c[3]],
        };
        if !c.iter().all(|x| x.is_finite()) || (q.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Domain(format!("not a unit quaternion: {c:?}")));
        }
        Ok(q)
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        [q.v, q.u[0], q.u[1], q.u[2]]
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        v: 1.0,
        u: [0.0; 3],
    };

    /// Normalises `(v, u)` onto the unit sphere.
    pub fn new(v: f64, u: [f64; 3]) -> Result<Self> {
        let n = (v * v + u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::Domain(format!("cannot normalise ({v}, {u:?})")));
        }
        Ok(Quaternion {
            v: v / n,
            u: [u[0] / n, u[1] / n, u[2] / n],
        })
    }

    pub fn scalar(&self) -> f64 {
        self.v
    }

    pub fn vector(&self) -> [f64; 3] {
        self.u
    }

    pub fn norm(&self) -> f64 {
        (self.v * self.v + self.u[0] * self.u[0] + self.u[1] * self.u[1] + self.u[2] * self.u[2]).sqrt()
    }

    fn renormalized(self) -> Self {
        let n = self.norm();
        Quaternion {
            v: self.v / n,
            u: [self.u[0] / n, self.u[1] / n, self.u[2] / n],
        }
    }

    fn negated(self) -> Self {
        Quaternion {
            v: -self.v,
            u: [-self.u[0], -self.u[1], -self.u[2]],
        }
    }

    fn check_unit(&self) -> Result<()> {
        if (self.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Domain(format!("non-unit quaternion, norm {}", self.norm())));
        }
        Ok(())
    }
}

/// Hamilton product `q1 * q2`.
pub fn qmul(q1: &Quaternion, q2: &Quaternion) -> Result<Quaternion> {
    q1.check_unit()?;
    q2.check_unit()?;
    let c = cross(&q1.u, &q2.u);
    let dot = q1.u[0] * q2.u[0] + q1.u[1] * q2.u[1] + q1.u[2] * q2.u[2];
    let q = Quaternion {
        v: q1.v * q2.v - dot,
        u: [
            q1.v * q2.u[0] + q2.v * q1.u[0] + c[0],
            q1.v * q2.u[1] + q2.v * q1.u[1] + c[1],
            q1.v * q2.u[2] + q2.v * q1.u[2] + c[2],
        ],
    };
    Ok(q.renormalized())
}

impl Mul for Quaternion {
    type Output = Quaternion;

    /// Panics only if an operand is not unit, which the type prevents.
    fn mul(self, rhs: Quaternion) -> Quaternion {
        qmul(&self, &rhs).expect("unit quaternions")
    }
}

pub fn qconj(q: &Quaternion) -> Quaternion {
    Quaternion {
        v: q.v,
        u: [-q.u[0], -q.u[1], -q.u[2]],
    }
}

/// Logarithmic map S³ → R³, `arccos(v) u/|u|`, zero for the identity.
///
/// The angle is evaluated as `atan2(|u|, v)`, which equals `arccos(v)` on the
/// unit sphere and stays accurate near `v = ±1`.
pub fn qlog(q: &Quaternion) -> Result<RotVec> {
    let s = norm3(&q.u);
    if s < SMALL_ANGLE {
        if q.v < 0.0 {
            return Err(Error::Domain("log of -1 + [0 0 0] is undefined".into()));
        }
        if s == 0.0 {
            return Ok(RotVec::ZERO);
        }
        // atan2(s, v) / s = (1 + s^2/(3 v^2) ...)/v ~ 1/v for tiny s
        let k = 1.0 / q.v;
        return Ok(RotVec([q.u[0] * k, q.u[1] * k, q.u[2] * k]));
    }
    let k = s.atan2(q.v) / s;
    Ok(RotVec([q.u[0] * k, q.u[1] * k, q.u[2] * k]))
}

/// Exponential map R³ → S³, defined for `|w| < π`.
pub fn qexp(w: &RotVec) -> Result<Quaternion> {
    let theta = w.norm();
    if !theta.is_finite() || theta >= PI {
        return Err(Error::Domain(format!("exp needs |w| < pi, got {theta}")));
    }
    let sinc = if theta < SMALL_ANGLE {
        1.0 - theta * theta / 6.0
    } else {
        theta.sin() / theta
    };
    let q = Quaternion {
        v: theta.cos(),
        u: [w.0[0] * sinc, w.0[1] * sinc, w.0[2] * sinc],
    };
    Ok(q.renormalized())
}

/// One integration step `Exp((dt/2) eta/tau) * q`.
pub fn qintegrate(q: &Quaternion, eta: &RotVec, dt: f64, tau: f64) -> Result<Quaternion> {
    if dt <= 0.0 || tau <= 0.0 {
        return Err(Error::invalid(format!("qintegrate needs dt, tau > 0 (dt={dt}, tau={tau})")));
    }
    let half = eta.scale(0.5 * dt / tau);
    if half.norm() >= PI {
        return Err(Error::Domain(format!(
            "integration step too large: |dt/2 eta/tau| = {}",
            half.norm()
        )));
    }
    qmul(&qexp(&half)?, q)
}

/// Orientation error `2 log(g * conj(q))` along the shorter of the two
/// rotations represented by `g * conj(q)` and its negation.
pub fn orientation_error(goal: &Quaternion, q: &Quaternion) -> Result<RotVec> {
    let mut d = qmul(goal, &qconj(q))?;
    if d.v < 0.0 {
        d = d.negated();
    }
    Ok(qlog(&d)?.scale(2.0))
}

/// Rotation by `psi` radians about the z axis.
pub fn yaw_to_quat(psi: f64) -> Quaternion {
    let h = 0.5 * psi;
    Quaternion {
        v: h.cos(),
        u: [0.0, 0.0, h.sin()],
    }
}

/// Heading about the z axis in `(-pi, pi]`.
pub fn quat_to_yaw(q: &Quaternion) -> f64 {
    let [x, y, z] = q.u;
    let siny = 2.0 * (q.v * z + x * y);
    let cosy = 1.0 - 2.0 * (y * y + z * z);
    siny.atan2(cosy)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: &Quaternion, b: &Quaternion, tol: f64) -> bool {
        (a.v - b.v).abs() < tol && (0..3).all(|i| (a.u[i] - b.u[i]).abs() < tol)
    }

    fn random_quat(rng: &mut impl Rng) -> Quaternion {
        loop {
            let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            if let Ok(q) = Quaternion::new(c[0], [c[1], c[2], c[3]]) {
                return q;
            }
        }
    }

    #[test]
    fn product_identities() {
        let q = Quaternion::new(0.3, [0.1, -0.5, 0.7]).unwrap();
        assert!(close(&(q * Quaternion::IDENTITY), &q, 1e-15));
        let i = Quaternion::new(0.0, [1.0, 0.0, 0.0]).unwrap();
        let j = Quaternion::new(0.0, [0.0, 1.0, 0.0]).unwrap();
        let k = Quaternion::new(0.0, [0.0, 0.0, 1.0]).unwrap();
        assert!(close(&(i * j), &k, 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let q = random_quat(&mut rng);
            assert!(close(&(q * qconj(&q)), &Quaternion::IDENTITY, 1e-12));
        }
    }

    #[test]
    fn product_rejects_non_unit() {
        let bad = Quaternion {
            v: 2.0,
            u: [0.0; 3],
        };
        assert!(qmul(&bad, &Quaternion::IDENTITY).is_err());
        assert!(Quaternion::try_from([1.0, 1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(qconj(&Quaternion::IDENTITY), Quaternion::IDENTITY);
        let q = Quaternion::new(0.6, [0.8, 0.0, 0.0]).unwrap();
        let c = qconj(&q);
        assert!((c.scalar() - 0.6).abs() < 1e-15 && (c.vector()[0] + 0.8).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let q = random_quat(&mut rng);
            assert_eq!(qconj(&qconj(&q)), q);
        }
    }

    #[test]
    fn log_examples() {
        assert_eq!(qlog(&Quaternion::IDENTITY).unwrap(), RotVec::ZERO);
        let w = qlog(&Quaternion::new(0.0, [1.0, 0.0, 0.0]).unwrap()).unwrap();
        assert!((w.0[0] - PI / 2.0).abs() < 1e-15 && w.0[1] == 0.0 && w.0[2] == 0.0);
        let minus_one = Quaternion::new(-1.0, [0.0; 3]).unwrap();
        assert!(matches!(qlog(&minus_one), Err(Error::Domain(_))));
    }

    #[test]
    fn exp_examples() {
        assert_eq!(qexp(&RotVec::ZERO).unwrap(), Quaternion::IDENTITY);
        let q = qexp(&RotVec([PI / 2.0, 0.0, 0.0])).unwrap();
        assert!(close(&q, &Quaternion::new(0.0, [1.0, 0.0, 0.0]).unwrap(), 1e-15));
        assert!(qexp(&RotVec([PI, 0.0, 0.0])).is_err());
        let tiny = qexp(&RotVec([1e-10, 0.0, 0.0])).unwrap();
        assert!((tiny.vector()[0] - 1e-10).abs() < 1e-24);
    }

    #[test]
    fn integrate_examples() {
        let q = Quaternion::new(0.5, [0.5, 0.5, 0.5]).unwrap();
        assert_eq!(qintegrate(&q, &RotVec::ZERO, 0.1, 1.0).unwrap(), q);
        let r = qintegrate(&Quaternion::IDENTITY, &RotVec([PI, 0.0, 0.0]), 1.0, 1.0).unwrap();
        assert!(close(&r, &Quaternion::new(0.0, [1.0, 0.0, 0.0]).unwrap(), 1e-15));
        assert!(qintegrate(&q, &RotVec([7.0, 0.0, 0.0]), 1.0, 1.0).is_err());
    }

    #[test]
    fn constant_flow_is_split_invariant() {
        let eta = RotVec([0.3, -1.1, 0.7]);
        let q0 = Quaternion::new(0.9, [0.1, 0.2, -0.3]).unwrap();
        let one = qintegrate(&q0, &eta, 1.0, 1.0).unwrap();
        let many = (0..100).fold(q0, |q, _| qintegrate(&q, &eta, 0.01, 1.0).unwrap());
        assert!(close(&one, &many, 1e-6));
    }

    #[test]
    fn yaw_examples() {
        assert_eq!(yaw_to_quat(0.0), Quaternion::IDENTITY);
        let q = yaw_to_quat(PI / 2.0);
        let h = 2f64.sqrt() / 2.0;
        assert!(close(&q, &Quaternion::new(h, [0.0, 0.0, h]).unwrap(), 1e-15));
    }

    #[test]
    fn planar_orientation_error_is_wrapped_yaw_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a: f64 = rng.random_range(-PI..PI);
            let b: f64 = rng.random_range(-PI..PI);
            let e = orientation_error(&yaw_to_quat(a), &yaw_to_quat(b)).unwrap();
            let expect = wrap_angle(a - b);
            if (expect.abs() - PI).abs() > 1e-9 {
                assert!((e.0[2] - expect).abs() < 1e-9, "{a} {b} {:?} {expect}", e);
            }
            assert!(e.0[0].abs() < 1e-12 && e.0[1].abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn operations_stay_unit(c in prop::array::uniform4(-1.0f64..1.0), w in prop::array::uniform3(-1.0f64..1.0)) {
            prop_assume!(c.iter().map(|x| x * x).sum::<f64>() > 1e-6);
            let q = Quaternion::new(c[0], [c[1], c[2], c[3]]).unwrap();
            prop_assert!((q.norm() - 1.0).abs() < 1e-9);
            let p = qexp(&RotVec(w)).unwrap();
            prop_assert!(((q * p).norm() - 1.0).abs() < 1e-9);
            prop_assert!((qintegrate(&q, &RotVec(w), 0.5, 1.0).unwrap().norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn yaw_round_trip(psi in -3.14159f64..3.14159) {
            prop_assert!((quat_to_yaw(&yaw_to_quat(psi)) - psi).abs() < 1e-12);
        }
    }
}
