//! Serial-chain manipulator: kinematics, rigid-body dynamics and the
//! joint-space integrator that closes the task-space control loop.

use nalgebra::{
    DMatrix, DVector, Isometry3, Matrix3, Matrix6, Translation3, Unit, UnitQuaternion, Vector3,
    Vector6,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest singular value below which the pseudoinverse is damped.
pub const SINGULAR_THRESHOLD: f64 = 1e-4;
/// Tikhonov damping λ² of the pseudoinverse near singularities.
pub const PINV_DAMPING: f64 = 1e-6;
/// Joint speed treated as a runaway of the closed loop (rad/s).
pub const RUNAWAY_SPEED: f64 = 1e3;
/// Cap on the implicit momentum solve; it usually settles in three or four.
const MOMENTUM_ITERATIONS: usize = 12;

/// End-effector pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            position: Vector3::new(x, y, 0.0),
            orientation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
        }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        let mut orientation = iso.rotation;
        orientation.renormalize();
        Self {
            position: iso.translation.vector,
            orientation,
        }
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.euler_angles().2
    }

    /// Position followed by the orientation as a rotation vector.
    pub fn to_vector(&self) -> Vector6<f64> {
        let r = self.orientation.scaled_axis();
        Vector6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            r.x,
            r.y,
            r.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            position: Vector3::new(v[0], v[1], v[2]),
            orientation: UnitQuaternion::from_scaled_axis(Vector3::new(v[3], v[4], v[5])),
        }
    }

    /// Translate by a world-frame offset, keeping orientation.
    pub fn shifted(&self, offset: Vector3<f64>) -> Self {
        Self {
            position: self.position + offset,
            orientation: self.orientation,
        }
    }

    /// Affine blend toward `other`: linear in position, slerp in orientation.
    pub fn interpolate(&self, other: &Pose, s: f64) -> Pose {
        if s <= 0.0 {
            return *self;
        }
        if s >= 1.0 {
            return *other;
        }
        Pose {
            position: self.position + (other.position - self.position) * s,
            orientation: self.orientation.slerp(&other.orientation, s),
        }
    }
}

/// `x̃ = x_d - x`: position difference and the rotation vector of `R_d Rᵀ`.
pub fn pose_error(desired: &Pose, actual: &Pose) -> Vector6<f64> {
    let dp = desired.position - actual.position;
    let dr = (desired.orientation * actual.orientation.inverse()).scaled_axis();
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Revolute joint, located in the parent frame by `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub origin: Isometry3<f64>,
    pub axis: Unit<Vector3<f64>>,
}

/// Rigid link carried by the preceding joint. COM and inertia in the joint frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Matrix3<f64>,
}

impl Link {
    /// Slender cylinder of radius `radius` lying along the frame's +x axis.
    pub fn rod_x(mass: f64, length: f64, radius: f64) -> Self {
        let axial = 0.5 * mass * radius * radius;
        let transverse = mass * (3.0 * radius * radius + length * length) / 12.0;
        Self {
            mass,
            com: Vector3::new(0.5 * length, 0.0, 0.0),
            inertia: Matrix3::from_diagonal(&Vector3::new(axial, transverse, transverse)),
        }
    }

    pub fn lumped(mass: f64, com: Vector3<f64>, radius: f64) -> Self {
        let i = 0.4 * mass * radius * radius;
        Self {
            mass,
            com,
            inertia: Matrix3::from_diagonal_element(i),
        }
    }
}

/// Joint positions and velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub t: f64,
    pub q: DVector<f64>,
    pub qd: DVector<f64>,
    /// Generalised momentum. After a step it trails `M(q) q̇` by half a
    /// step of the drive, and `staggered` is set.
    pub p: DVector<f64>,
    #[serde(default)]
    pub staggered: bool,
}

impl ArmState {
    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            t: 0.0,
            q,
            qd: DVector::zeros(n),
            p: DVector::zeros(n),
            staggered: false,
        }
    }

    pub fn moving(model: &ArmModel, q: DVector<f64>, qd: DVector<f64>) -> Self {
        let p = model.mass_matrix(&q) * &qd;
        Self {
            t: 0.0,
            q,
            qd,
            p,
            staggered: false,
        }
    }
}

/// World-frame joint data for one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    /// Frame of each link (after its joint rotation).
    pub frames: Vec<Isometry3<f64>>,
    /// Joint origins.
    pub origins: Vec<Vector3<f64>>,
    /// Joint axes.
    pub axes: Vec<Vector3<f64>>,
    pub end_effector: Isometry3<f64>,
}

/// Task-space inertia and damping seen at the end-effector.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDynamics {
    pub lambda: Matrix6<f64>,
    pub d: Vector6<f64>,
}

/// Damped Moore–Penrose pseudoinverse.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: DMatrix<f64>,
    pub sigma_min: f64,
    pub damped: bool,
}

pub fn pseudo_inverse(j: &DMatrix<f64>) -> PseudoInverse {
    let svd = j.clone().svd(true, true);
    let sigma_min = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let damped = sigma_min < SINGULAR_THRESHOLD;
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let inv: DVector<f64> = svd.singular_values.map(|s| {
        if damped {
            s / (s * s + PINV_DAMPING)
        } else {
            1.0 / s
        }
    });
    let matrix = v_t.transpose() * DMatrix::from_diagonal(&inv) * u.transpose();
    PseudoInverse {
        matrix,
        sigma_min,
        damped,
    }
}

/// `(I - J⁺J) τ_null`. Returns the torque and whether damping was active.
pub fn nullspace_projection(j: &DMatrix<f64>, tau_null: &DVector<f64>) -> (DVector<f64>, bool) {
    let pinv = pseudo_inverse(j);
    let n = j.ncols();
    let projector = DMatrix::<f64>::identity(n, n) - &pinv.matrix * j;
    (projector * tau_null, pinv.damped)
}

/// Joint torque command and whether the damped inverse was needed.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueCommand {
    pub tau: DVector<f64>,
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    pub base: Isometry3<f64>,
    pub joints: Vec<Joint>,
    pub links: Vec<Link>,
    pub tool: Isometry3<f64>,
    pub gravity: Vector3<f64>,
}

impl ArmModel {
    pub fn new(
        base: Isometry3<f64>,
        joints: Vec<Joint>,
        links: Vec<Link>,
        tool: Isometry3<f64>,
        gravity: Vector3<f64>,
    ) -> Result<Self> {
        if joints.is_empty() || joints.len() != links.len() {
            return Err(Error::InvalidModel(format!(
                "{} joints and {} links",
                joints.len(),
                links.len()
            )));
        }
        if links.iter().any(|l| !(l.mass > 0.0)) {
            return Err(Error::InvalidModel("link masses must be > 0".into()));
        }
        Ok(Self {
            base,
            joints,
            links,
            tool,
            gravity,
        })
    }

    /// Planar chain in the xy-plane with joints about z and gravity along -y.
    pub fn planar(lengths: &[f64], masses: &[f64], gravity: f64) -> Result<Self> {
        if lengths.len() != masses.len() || !(1..=7).contains(&lengths.len()) {
            return Err(Error::InvalidModel(format!(
                "planar chain needs 1..=7 links with one mass each, got {} lengths and {} masses",
                lengths.len(),
                masses.len()
            )));
        }
        if lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidModel("link lengths must be > 0".into()));
        }
        let mut joints = Vec::with_capacity(lengths.len());
        let mut offset = 0.0;
        for &l in lengths {
            joints.push(Joint {
                origin: Isometry3::from_parts(
                    Translation3::new(offset, 0.0, 0.0),
                    UnitQuaternion::identity(),
                ),
                axis: Vector3::z_axis(),
            });
            offset = l;
        }
        let links = lengths
            .iter()
            .zip(masses)
            .map(|(&l, &m)| Link::rod_x(m, l, 0.02))
            .collect();
        let tool = Isometry3::from_parts(
            Translation3::new(offset, 0.0, 0.0),
            UnitQuaternion::identity(),
        );
        Self::new(
            Isometry3::identity(),
            joints,
            links,
            tool,
            Vector3::new(0.0, -gravity, 0.0),
        )
    }

    /// Default desk-scale plant: three links of 0.3, 0.3 and 0.2 m.
    pub fn planar3() -> Self {
        Self::planar(&[0.3, 0.3, 0.2], &[1.5, 1.0, 0.5], 9.81).expect("valid default chain")
    }

    /// Seven-joint spatial arm with Panda-like geometry, gravity along -z.
    pub fn spatial7() -> Self {
        use std::f64::consts::FRAC_PI_2;
        // modified DH: (a_{i-1}, d_i, alpha_{i-1})
        let dh = [
            (0.0, 0.333, 0.0),
            (0.0, 0.0, -FRAC_PI_2),
            (0.0, 0.316, FRAC_PI_2),
            (0.0825, 0.0, FRAC_PI_2),
            (-0.0825, 0.384, -FRAC_PI_2),
            (0.0, 0.0, FRAC_PI_2),
            (0.088, 0.0, FRAC_PI_2),
        ];
        let masses = [4.97, 0.65, 3.23, 3.59, 1.23, 1.67, 0.74];
        let coms = [
            Vector3::new(0.0, -0.03, -0.07),
            Vector3::new(0.0, -0.07, 0.03),
            Vector3::new(0.04, 0.03, -0.07),
            Vector3::new(-0.05, 0.1, 0.03),
            Vector3::new(0.0, 0.04, -0.11),
            Vector3::new(0.05, -0.01, 0.01),
            Vector3::new(0.01, 0.0, 0.08),
        ];
        let joints = dh
            .iter()
            .map(|&(a, d, alpha)| {
                let rot = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), alpha);
                let trans = rot * Vector3::new(a, 0.0, 0.0) + rot * Vector3::new(0.0, 0.0, d);
                Joint {
                    origin: Isometry3::from_parts(Translation3::from(trans), rot),
                    axis: Vector3::z_axis(),
                }
            })
            .collect();
        let links = masses
            .iter()
            .zip(coms)
            .map(|(&m, c)| Link::lumped(m, c, 0.06))
            .collect();
        let tool = Isometry3::from_parts(
            Translation3::new(0.0, 0.0, 0.107),
            UnitQuaternion::identity(),
        );
        Self::new(
            Isometry3::identity(),
            joints,
            links,
            tool,
            Vector3::new(0.0, 0.0, -9.81),
        )
        .expect("valid default chain")
    }

    pub fn with_base(mut self, base: Isometry3<f64>) -> Self {
        self.base = base;
        self
    }

    pub fn with_gravity(mut self, gravity: Vector3<f64>) -> Self {
        self.gravity = gravity;
        self
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn kinematics(&self, q: &DVector<f64>) -> Kinematics {
        let n = self.dof();
        let mut frames = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        let mut parent = self.base;
        for (i, joint) in self.joints.iter().enumerate() {
            let placed = parent * joint.origin;
            let axis = placed.rotation * joint.axis.into_inner();
            let rot = UnitQuaternion::from_axis_angle(&joint.axis, q[i]);
            let frame = placed * Isometry3::from_parts(Translation3::identity(), rot);
            origins.push(placed.translation.vector);
            axes.push(axis);
            frames.push(frame);
            parent = frame;
        }
        Kinematics {
            frames,
            origins,
            axes,
            end_effector: parent * self.tool,
        }
    }

    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Pose {
        Pose::from_isometry(&self.kinematics(q).end_effector)
    }

    /// Geometric Jacobian at the tool point, linear rows first.
    pub fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        jacobian_from(&self.kinematics(q))
    }

    /// End-effector twist `J q̇`.
    pub fn twist(&self, state: &ArmState) -> Vector6<f64> {
        let j = self.jacobian(&state.q);
        let v = j * &state.qd;
        Vector6::from_iterator(v.iter().cloned())
    }

    fn com_jacobians(&self, kin: &Kinematics, link: usize) -> (DMatrix<f64>, Vector3<f64>) {
        let n = self.dof();
        let c = kin.frames[link] * nalgebra::Point3::from(self.links[link].com);
        let mut jv = DMatrix::zeros(3, n);
        for j in 0..=link {
            let col = kin.axes[j].cross(&(c.coords - kin.origins[j]));
            jv.fixed_view_mut::<3, 1>(0, j).copy_from(&col);
        }
        (jv, c.coords)
    }

    /// Joint-space inertia `M(q)`.
    pub fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.mass_matrix_at(&self.kinematics(q))
    }

    fn mass_matrix_at(&self, kin: &Kinematics) -> DMatrix<f64> {
        let n = self.dof();
        let mut m = DMatrix::zeros(n, n);
        for (i, link) in self.links.iter().enumerate() {
            let (jv, _) = self.com_jacobians(kin, i);
            let mut jw = DMatrix::zeros(3, n);
            for j in 0..=i {
                jw.fixed_view_mut::<3, 1>(0, j).copy_from(&kin.axes[j]);
            }
            let r = kin.frames[i].rotation.to_rotation_matrix();
            let inertia_world = r.matrix() * link.inertia * r.matrix().transpose();
            m += jv.transpose() * &jv * link.mass
                + jw.transpose()
                    * DMatrix::from_iterator(3, 3, inertia_world.iter().cloned())
                    * &jw;
        }
        // symmetrise rounding
        let mt = m.transpose();
        (m + mt) * 0.5
    }

    /// Damped Newton solve for joint angles reaching `target`, started at `seed`.
    pub fn inverse_kinematics(&self, target: &Pose, seed: &DVector<f64>) -> Result<DVector<f64>> {
        let mut q = seed.clone();
        for _ in 0..200 {
            let err = pose_error(target, &self.forward_kinematics(&q));
            if err.amax() < 1e-12 {
                return Ok(q);
            }
            let j = self.jacobian(&q);
            let jt = j.transpose();
            let reg = &j * &jt + DMatrix::<f64>::identity(6, 6) * 1e-9;
            let step = jt
                * reg
                    .lu()
                    .solve(&DVector::from_column_slice(err.as_slice()))
                    .unwrap_or_else(|| DVector::zeros(6));
            q += step;
        }
        let residual = pose_error(target, &self.forward_kinematics(&q)).amax();
        if residual < 1e-9 {
            Ok(q)
        } else {
            Err(Error::InvalidModel(format!(
                "target pose unreachable (residual {residual:.2e})"
            )))
        }
    }

    /// Recursive Newton–Euler inverse dynamics `M q̈ + C q̇ + g`.
    pub fn inverse_dynamics(
        &self,
        q: &DVector<f64>,
        qd: &DVector<f64>,
        qdd: &DVector<f64>,
        with_gravity: bool,
    ) -> DVector<f64> {
        self.inverse_dynamics_at(&self.kinematics(q), qd, qdd, with_gravity)
    }

    fn inverse_dynamics_at(
        &self,
        kin: &Kinematics,
        qd: &DVector<f64>,
        qdd: &DVector<f64>,
        with_gravity: bool,
    ) -> DVector<f64> {
        let n = self.dof();
        let mut omega = Vector3::zeros();
        let mut alpha = Vector3::zeros();
        let mut acc = if with_gravity {
            -self.gravity
        } else {
            Vector3::zeros()
        };
        let mut prev_origin = kin.origins[0];
        let mut forces = Vec::with_capacity(n);
        let mut moments = Vec::with_capacity(n);
        let mut coms = Vec::with_capacity(n);
        for i in 0..n {
            let z = kin.axes[i];
            let o = kin.origins[i];
            let d = o - prev_origin;
            // joint origin rides on the previous link
            acc += alpha.cross(&d) + omega.cross(&omega.cross(&d));
            let omega_next = omega + z * qd[i];
            alpha = alpha + z * qdd[i] + omega.cross(&(z * qd[i]));
            omega = omega_next;
            let link = &self.links[i];
            let c = (kin.frames[i] * nalgebra::Point3::from(link.com)).coords;
            let rc = c - o;
            let acc_c = acc + alpha.cross(&rc) + omega.cross(&omega.cross(&rc));
            let r = kin.frames[i].rotation.to_rotation_matrix();
            let inertia = r.matrix() * link.inertia * r.matrix().transpose();
            forces.push(acc_c * link.mass);
            moments.push(inertia * alpha + omega.cross(&(inertia * omega)));
            coms.push(c);
            prev_origin = o;
        }
        let mut tau = DVector::zeros(n);
        let mut f_child = Vector3::zeros();
        let mut n_child = Vector3::zeros();
        let mut child_origin = Vector3::zeros();
        for i in (0..n).rev() {
            let o = kin.origins[i];
            let f = forces[i] + f_child;
            let moment = moments[i]
                + (coms[i] - o).cross(&forces[i])
                + n_child
                + (child_origin - o).cross(&f_child);
            tau[i] = kin.axes[i].dot(&moment);
            f_child = f;
            n_child = moment;
            child_origin = o;
        }
        tau
    }

    /// Gravity, Coriolis and centrifugal torques `F_ND(q, q̇)`.
    pub fn compensate_nonlinear_dynamics(
        &self,
        q: &DVector<f64>,
        qd: &DVector<f64>,
    ) -> DVector<f64> {
        self.inverse_dynamics(q, qd, &DVector::zeros(self.dof()), true)
    }

    pub fn gravity_torques(&self, q: &DVector<f64>) -> DVector<f64> {
        let n = self.dof();
        self.inverse_dynamics(q, &DVector::zeros(n), &DVector::zeros(n), true)
    }

    /// Task-space inertia `(J M⁻¹ Jᵀ)⁺` and the supplied damping diagonal.
    pub fn task_dynamics(&self, q: &DVector<f64>, damping: Vector6<f64>) -> TaskDynamics {
        let j = self.jacobian(q);
        let m = self.mass_matrix(q);
        let m_inv = m
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| DMatrix::identity(self.dof(), self.dof()));
        let inv_lambda = &j * m_inv * j.transpose();
        let lambda = pseudo_inverse(&inv_lambda).matrix;
        TaskDynamics {
            lambda: Matrix6::from_iterator(lambda.iter().cloned()),
            d: damping,
        }
    }

    /// `τ_c = Jᵀ h + F_ND + (I - J⁺J) τ_null`.
    pub fn assemble_torque_command(
        &self,
        wrench: &Vector6<f64>,
        q: &DVector<f64>,
        qd: &DVector<f64>,
        tau_null: Option<&DVector<f64>>,
    ) -> TorqueCommand {
        let j = self.jacobian(q);
        let mut tau = j.transpose() * DVector::from_column_slice(wrench.as_slice());
        tau += self.compensate_nonlinear_dynamics(q, qd);
        let mut singular = false;
        if let Some(tn) = tau_null {
            let (proj, damped) = nullspace_projection(&j, tn);
            tau += proj;
            singular = damped;
        }
        TorqueCommand { tau, singular }
    }

    /// Joint accelerations for the given torque and end-effector wrench.
    pub fn forward_dynamics(
        &self,
        state: &ArmState,
        tau: &DVector<f64>,
        external_wrench: &Vector6<f64>,
    ) -> Result<DVector<f64>> {
        let j = self.jacobian(&state.q);
        let bias = self.compensate_nonlinear_dynamics(&state.q, &state.qd);
        let rhs =
            tau + j.transpose() * DVector::from_column_slice(external_wrench.as_slice()) - bias;
        let m = self.mass_matrix(&state.q);
        let chol = m.cholesky().ok_or_else(|| Error::Divergence {
            t: state.t,
            reason: "mass matrix lost positive definiteness".into(),
        })?;
        Ok(chol.solve(&rhs))
    }

    /// `Ṁ(q, q̇) q̇`, from the time derivatives of the link Jacobians.
    pub fn mass_rate_product(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        self.mass_rate_product_at(&self.kinematics(q), qd)
    }

    fn mass_rate_product_at(&self, kin: &Kinematics, qd: &DVector<f64>) -> DVector<f64> {
        let n = self.dof();
        // axis rates and joint-origin velocities
        let mut z_dot = Vec::with_capacity(n);
        let mut v_origin = Vec::with_capacity(n);
        let mut omega = Vector3::zeros();
        for j in 0..n {
            z_dot.push(omega.cross(&kin.axes[j]));
            let mut v = Vector3::zeros();
            for k in 0..j {
                v += kin.axes[k].cross(&(kin.origins[j] - kin.origins[k])) * qd[k];
            }
            v_origin.push(v);
            omega += kin.axes[j] * qd[j];
        }
        let mut out = DVector::zeros(n);
        let mut omega = Vector3::zeros();
        for (i, link) in self.links.iter().enumerate() {
            omega += kin.axes[i] * qd[i];
            let (jv, c) = self.com_jacobians(kin, i);
            let v_c = &jv * qd;
            let v_c = Vector3::new(v_c[0], v_c[1], v_c[2]);
            let r = kin.frames[i].rotation.to_rotation_matrix();
            let inertia = r.matrix() * link.inertia * r.matrix().transpose();
            let mut jv_dot_qd = Vector3::zeros();
            let mut jw_dot_qd = Vector3::zeros();
            for j in 0..=i {
                jv_dot_qd += (z_dot[j].cross(&(c - kin.origins[j]))
                    + kin.axes[j].cross(&(v_c - v_origin[j])))
                    * qd[j];
                jw_dot_qd += z_dot[j] * qd[j];
            }
            let i_omega = inertia * omega;
            let i_dot_omega = omega.cross(&i_omega);
            let lin_moment = jv_dot_qd * link.mass;
            let ang_moment = i_dot_omega + inertia * jw_dot_qd;
            for j in 0..=i {
                let jv_dot =
                    z_dot[j].cross(&(c - kin.origins[j])) + kin.axes[j].cross(&(v_c - v_origin[j]));
                out[j] += link.mass * jv_dot.dot(&v_c)
                    + kin.axes[j].cross(&(c - kin.origins[j])).dot(&lin_moment)
                    + z_dot[j].dot(&i_omega)
                    + kin.axes[j].dot(&ang_moment);
            }
        }
        out
    }

    /// Störmer–Verlet step in momentum form, with `h = dt/2` and the held
    /// drive `G = τ + Jᵀ F_ext` taken whole in the first half kick:
    ///
    /// ```text
    /// p½ = p + dt G + h ∂L/∂q(q, M(q)⁻¹ p½)
    /// q⁺ = q + h (M(q)⁻¹ + M(q⁺)⁻¹) p½
    /// p⁺ = p½ + h ∂L/∂q(q⁺, M(q⁺)⁻¹ p½)
    /// ```
    ///
    /// A held spring force split over both kicks is sampled at a stale
    /// position in the second one and pumps energy into stiff contacts.
    /// The carried `p` lags the physical momentum by `h G`, so the reported
    /// velocity is `M(q⁺)⁻¹ (p⁺ + h G)`, and a state that is not yet
    /// staggered is shifted by `-h G` on entry.
    pub fn step(
        &self,
        state: &ArmState,
        tau: &DVector<f64>,
        external_wrench: &Vector6<f64>,
        dt: f64,
    ) -> Result<ArmState> {
        let t = state.t + dt;
        let h = 0.5 * dt;
        let diverged = |reason: &str| Error::Divergence {
            t,
            reason: reason.to_string(),
        };
        let spd = |m: DMatrix<f64>| {
            m.cholesky()
                .ok_or_else(|| diverged("mass matrix lost positive definiteness"))
        };
        let zero = DVector::zeros(self.dof());
        let lagrangian_grad = |kin: &Kinematics, v: &DVector<f64>| {
            self.mass_rate_product_at(kin, v) - self.inverse_dynamics_at(kin, v, &zero, true)
        };
        let converged = |delta: f64, scale: f64| !(delta > 1e-15 * (1.0 + scale));

        let kin0 = self.kinematics(&state.q);
        let j = jacobian_from(&kin0);
        let drive = tau + j.transpose() * DVector::from_column_slice(external_wrench.as_slice());
        let chol0 = spd(self.mass_matrix_at(&kin0))?;

        let p0 = if state.staggered {
            state.p.clone()
        } else {
            &state.p - &drive * h
        };
        let mut p_half = &p0 + &drive * dt;
        let mut v0 = chol0.solve(&p_half);
        for _ in 0..MOMENTUM_ITERATIONS {
            p_half = &p0 + &drive * dt + lagrangian_grad(&kin0, &v0) * h;
            let next = chol0.solve(&p_half);
            let delta = (&next - &v0).amax();
            v0 = next;
            if converged(delta, v0.amax()) {
                break;
            }
        }

        let mut q = &state.q + &v0 * dt;
        for _ in 0..MOMENTUM_ITERATIONS {
            let v1 = spd(self.mass_matrix(&q))?.solve(&p_half);
            let next = &state.q + (&v0 + v1) * h;
            let delta = (&next - &q).amax();
            q = next;
            if converged(delta, q.amax()) {
                break;
            }
        }
        if q.iter().chain(p_half.iter()).any(|v| !v.is_finite()) {
            return Err(diverged("non-finite joint state"));
        }

        let kin1 = self.kinematics(&q);
        let chol1 = spd(self.mass_matrix_at(&kin1))?;
        let v1 = chol1.solve(&p_half);
        let p = &p_half + lagrangian_grad(&kin1, &v1) * h;
        let qd = chol1.solve(&(&p + &drive * h));
        let speed = qd.amax();
        if !speed.is_finite() || speed > RUNAWAY_SPEED {
            return Err(Error::Divergence {
                t,
                reason: format!("joint speed {speed:.1} rad/s"),
            });
        }
        Ok(ArmState {
            t,
            q,
            qd,
            p,
            staggered: true,
        })
    }

    pub fn kinetic_energy(&self, state: &ArmState) -> f64 {
        let m = self.mass_matrix(&state.q);
        0.5 * state.qd.dot(&(m * &state.qd))
    }

    pub fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        let kin = self.kinematics(q);
        self.links
            .iter()
            .enumerate()
            .map(|(i, link)| {
                let c = (kin.frames[i] * nalgebra::Point3::from(link.com)).coords;
                -link.mass * self.gravity.dot(&c)
            })
            .sum()
    }

    pub fn mechanical_energy(&self, state: &ArmState) -> f64 {
        self.kinetic_energy(state) + self.potential_energy(&state.q)
    }
}

pub fn jacobian_from(kin: &Kinematics) -> DMatrix<f64> {
    let n = kin.axes.len();
    let p = kin.end_effector.translation.vector;
    let mut j = DMatrix::zeros(6, n);
    for i in 0..n {
        let z = kin.axes[i];
        let lin = z.cross(&(p - kin.origins[i]));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    j
}
