//! Classical fourth-order Runge–Kutta stepping for linear generators.

use num_complex::Complex64;

use crate::model::SuperOperator;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Scratch buffers reused across steps.
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k: Vec<Complex64>,
    stage: Vec<Complex64>,
    acc: Vec<Complex64>,
}

impl Rk4Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            k: vec![ZERO; n],
            stage: vec![ZERO; n],
            acc: vec![ZERO; n],
        }
    }
}

/// Advances `x` by one step of size `dt` under `dx/dt = A x`.
pub fn rk4_step<A: SuperOperator + ?Sized>(
    op: &A,
    x: &mut [Complex64],
    dt: f64,
    ws: &mut Rk4Workspace,
) {
    let Rk4Workspace { k, stage, acc } = ws;
    acc.copy_from_slice(x);

    op.apply(x, k);
    for i in 0..x.len() {
        acc[i] += (dt / 6.0) * k[i];
        stage[i] = x[i] + (0.5 * dt) * k[i];
    }
    op.apply(stage, k);
    for i in 0..x.len() {
        acc[i] += (dt / 3.0) * k[i];
        stage[i] = x[i] + (0.5 * dt) * k[i];
    }
    op.apply(stage, k);
    for i in 0..x.len() {
        acc[i] += (dt / 3.0) * k[i];
        stage[i] = x[i] + dt * k[i];
    }
    op.apply(stage, k);
    for i in 0..x.len() {
        x[i] = acc[i] + (dt / 6.0) * k[i];
    }
}

/// Propagator `x ↦ R(A·dt)^steps x`, with `R` the RK4 stability polynomial.
///
/// `R` is a polynomial in `A`, so the propagator shares the eigenvectors of
/// `A` and maps an eigenvalue `λ` to `R(λ dt)^steps ≈ e^{λ·steps·dt}`.
pub struct Rk4Propagator<'a, A: SuperOperator + ?Sized> {
    pub op: &'a A,
    pub dt: f64,
    pub steps: usize,
}

impl<'a, A: SuperOperator + ?Sized> Rk4Propagator<'a, A> {
    /// Picks `dt = safety / ρ` from the operator's spectral-radius bound and
    /// the number of steps to cover `tau`.
    pub fn covering(op: &'a A, tau: f64, safety: f64) -> Self {
        let rho = op.spectral_radius_bound().max(1e-12);
        let steps = ((tau * rho / safety).ceil() as usize).max(1);
        Self {
            op,
            dt: tau / steps as f64,
            steps,
        }
    }

    pub fn tau(&self) -> f64 {
        self.dt * self.steps as f64
    }
}

impl<A: SuperOperator + ?Sized> SuperOperator for Rk4Propagator<'_, A> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        y.copy_from_slice(x);
        let mut ws = Rk4Workspace::new(x.len());
        for _ in 0..self.steps {
            rk4_step(self.op, y, self.dt, &mut ws);
        }
    }

    fn spectral_radius_bound(&self) -> f64 {
        1.0
    }
}

/// `|R(z)|` for the RK4 stability polynomial.
pub fn stability_factor(z: Complex64) -> f64 {
    (1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0).norm()
}
