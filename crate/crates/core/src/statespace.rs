//! Continuous-time LTI models `dx/dt = A x + B u`, `y = C x + D u`, their
//! zero-order-hold discretization, and streamed time-response simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Lu, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub labels: Labels,
}

/// Optional names for states, inputs and outputs. Empty lists mean unnamed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
}

impl StateSpaceModel {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.rows();
        if n == 0 || !a.is_square() {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if b.rows() != n || b.cols() == 0 {
            return Err(Error::Dimension(format!(
                "B is {}x{}, expected {n} rows and at least one input",
                b.rows(),
                b.cols()
            )));
        }
        let m = b.cols();
        if c.cols() != n || c.rows() == 0 {
            return Err(Error::Dimension(format!(
                "C is {}x{}, expected {n} columns and at least one output",
                c.rows(),
                c.cols()
            )));
        }
        let p = c.rows();
        if d.rows() != p || d.cols() != m {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {p}x{m}",
                d.rows(),
                d.cols()
            )));
        }
        Ok(StateSpaceModel {
            a,
            b,
            c,
            d,
            labels: Labels::default(),
        })
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        let check = |what: &str, names: &[String], want: usize| {
            if names.is_empty() || names.len() == want {
                Ok(())
            } else {
                Err(Error::Dimension(format!(
                    "{} {what} names given for {want} {what}s",
                    names.len()
                )))
            }
        };
        check("state", &labels.states, self.n_states())?;
        check("input", &labels.inputs, self.n_inputs())?;
        check("output", &labels.outputs, self.n_outputs())?;
        self.labels = labels;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.a.rows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.cols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.rows()
    }
}

/// Zero-order-hold discretization of a [`StateSpaceModel`] at step `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub ad: Mat,
    pub bd: Mat,
    pub c: Mat,
    pub d: Mat,
    pub dt: f64,
}

impl DiscreteModel {
    pub fn n_states(&self) -> usize {
        self.ad.rows()
    }

    pub fn n_inputs(&self) -> usize {
        self.bd.cols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.rows()
    }
}

// Padé coefficients and 1-norm thresholds for the scaling-and-squaring
// exponential (Higham 2005).
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
#[allow(clippy::excessive_precision)]
const THETA: [(f64, &[f64]); 4] = [
    (1.495585217958292e-2, &PADE3),
    (2.539398330063230e-1, &PADE5),
    (9.504178996162932e-1, &PADE7),
    (2.097847961257068e0, &PADE9),
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a diagonal Padé approximant
/// of degree 3 to 13, chosen from the 1-norm.
pub fn expm(m: &Mat) -> Result<Mat> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expm needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::Numeric("expm argument has non-finite entries".into()));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let norm = m.norm1();

    for (theta, coeffs) in THETA {
        if norm <= theta {
            let (u, v) = pade_low(m, coeffs);
            return pade_solve(&u, &v);
        }
    }

    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = m.scaled(0.5f64.powi(squarings));
    let (u, v) = pade13(&scaled);
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    if !r.is_finite() {
        return Err(Error::Numeric("expm overflowed".into()));
    }
    Ok(r)
}

fn pade_low(a: &Mat, b: &[f64]) -> (Mat, Mat) {
    let n = a.rows();
    let a2 = a.matmul(a);
    let mut u_inner = Mat::identity(n).scaled(b[1]);
    let mut v = Mat::identity(n).scaled(b[0]);
    let mut power = Mat::identity(n);
    for j in 1..b.len() / 2 {
        power = power.matmul(&a2);
        u_inner.axpy(b[2 * j + 1], &power);
        v.axpy(b[2 * j], &power);
    }
    (a.matmul(&u_inner), v)
}

fn pade13(a: &Mat) -> (Mat, Mat) {
    let b = &PADE13;
    let n = a.rows();
    let ident = Mat::identity(n);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let mut u_hi = a6.scaled(b[13]);
    u_hi.axpy(b[11], &a4);
    u_hi.axpy(b[9], &a2);
    let mut u_inner = a6.matmul(&u_hi);
    u_inner.axpy(b[7], &a6);
    u_inner.axpy(b[5], &a4);
    u_inner.axpy(b[3], &a2);
    u_inner.axpy(b[1], &ident);
    let u = a.matmul(&u_inner);

    let mut v_hi = a6.scaled(b[12]);
    v_hi.axpy(b[10], &a4);
    v_hi.axpy(b[8], &a2);
    let mut v = a6.matmul(&v_hi);
    v.axpy(b[6], &a6);
    v.axpy(b[4], &a4);
    v.axpy(b[2], &a2);
    v.axpy(b[0], &ident);
    (u, v)
}

fn pade_solve(u: &Mat, v: &Mat) -> Result<Mat> {
    let lu = Lu::factor(&v.sub(u))?;
    Ok(lu.solve(&v.add(u)))
}

/// Exact discretization for inputs held constant over each step: exponentiates
/// the augmented matrix `[[A, B], [0, 0]]·dt` and reads `Ad` and `Bd` from its
/// top block row. Never inverts `A`.
pub fn discretize_zoh(model: &StateSpaceModel, dt: f64) -> Result<DiscreteModel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!("time step must be positive, got {dt}")));
    }
    let n = model.n_states();
    let m = model.n_inputs();
    if model.b.rows() != n {
        return Err(Error::Dimension("B rows differ from state count".into()));
    }
    let mut aug = Mat::zeros(n + m, n + m);
    aug.set_block(0, 0, &model.a.scaled(dt));
    aug.set_block(0, n, &model.b.scaled(dt));
    let e = expm(&aug)?;
    Ok(DiscreteModel {
        ad: e.block(0, 0, n, n),
        bd: e.block(0, n, n, m),
        c: model.c.clone(),
        d: model.d.clone(),
        dt,
    })
}

/// A length-`len()` sequence of input vectors, produced one step at a time.
pub trait InputSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn width(&self) -> usize;

    /// Writes the input vector for step `k` into `u` (length [`width`](Self::width)).
    fn fill(&self, k: usize, u: &mut [f64]);
}

impl<V: AsRef<[f64]>> InputSource for [V] {
    fn len(&self) -> usize {
        <[V]>::len(self)
    }

    fn width(&self) -> usize {
        self.first().map_or(0, |v| v.as_ref().len())
    }

    fn fill(&self, k: usize, u: &mut [f64]) {
        u.copy_from_slice(self[k].as_ref());
    }
}

impl<V: AsRef<[f64]>> InputSource for Vec<V> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn width(&self) -> usize {
        InputSource::width(self.as_slice())
    }

    fn fill(&self, k: usize, u: &mut [f64]) {
        self.as_slice().fill(k, u)
    }
}

/// Steps the discrete model over every input, passing each output `y_k` to
/// `sink` as it is produced. Returns the state after the last step.
///
/// For step `k`: `y_k = C x_k + D u_k`, then `x_{k+1} = Ad x_k + Bd u_k`.
pub fn simulate<I, F>(model: &DiscreteModel, inputs: &I, x0: &[f64], mut sink: F) -> Result<Vec<f64>>
where
    I: InputSource + ?Sized,
    F: FnMut(usize, &[f64]),
{
    let n = model.n_states();
    let m = model.n_inputs();
    let p = model.n_outputs();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, model has {n} states",
            x0.len()
        )));
    }
    if inputs.is_empty() {
        return Err(Error::Empty("input sequence".into()));
    }
    if inputs.width() != m {
        return Err(Error::Dimension(format!(
            "inputs have width {}, model has {m} inputs",
            inputs.width()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { step: 0 });
    }

    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut u = vec![0.0; m];
    let mut y = vec![0.0; p];

    for k in 0..inputs.len() {
        inputs.fill(k, &mut u);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(model.c.row(i), &x) + dot(model.d.row(i), &u);
        }
        sink(k, &y);
        for (i, xi) in next.iter_mut().enumerate() {
            *xi = dot(model.ad.row(i), &x) + dot(model.bd.row(i), &u);
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
        std::mem::swap(&mut x, &mut next);
    }
    Ok(x)
}

/// Steady-state gain `D - C A^{-1} B`, via an LU solve of `A X = B`.
pub fn dc_gain(model: &StateSpaceModel) -> Result<Mat> {
    let lu = Lu::factor(&model.a)?;
    let x = lu.solve(&model.b);
    Ok(model.d.sub(&model.c.matmul(&x)))
}

/// Equilibrium for constant input `u0`: solves `A x = -B u0`.
pub fn steady_state(model: &StateSpaceModel, u0: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if u0.len() != model.n_inputs() {
        return Err(Error::Dimension(format!(
            "input has {} entries, model has {} inputs",
            u0.len(),
            model.n_inputs()
        )));
    }
    let lu = Lu::factor(&model.a)?;
    let rhs: Vec<f64> = model.b.matvec(u0).into_iter().map(|v| -v).collect();
    let x = lu.solve_vec(&rhs);
    let y: Vec<f64> = (0..model.n_outputs())
        .map(|i| dot(model.c.row(i), &x) + dot(model.d.row(i), u0))
        .collect();
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64, c: f64, d: f64) -> StateSpaceModel {
        let m = |v| Mat::new(1, 1, vec![v]).unwrap();
        StateSpaceModel::new(m(a), m(b), m(c), m(d)).unwrap()
    }

    #[test]
    fn expm_zero_is_identity() {
        assert_eq!(expm(&Mat::zeros(3, 3)).unwrap(), Mat::identity(3));
    }

    #[test]
    fn expm_nilpotent() {
        let m = Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]).unwrap();
        let e = expm(&m).unwrap();
        let want = Mat::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert!(e.sub(&want).max_abs() < 1e-15, "{e:?}");
    }

    #[test]
    fn expm_scalar_minus_one() {
        let e = expm(&Mat::new(1, 1, vec![-1.0]).unwrap()).unwrap();
        assert!((e[(0, 0)] - 0.367_879_441_171_442_3).abs() < 1e-12);
    }

    #[test]
    fn expm_scalar_across_degrees() {
        // One value per Padé branch plus a few that need squaring.
        for &v in &[1e-3, 0.2, 0.9, 2.0, 5.0, -9.5, 30.0, -120.0] {
            let e = expm(&Mat::new(1, 1, vec![v]).unwrap()).unwrap()[(0, 0)];
            let want = f64::exp(v);
            assert!(((e - want) / want).abs() < 1e-12, "v={v}: {e} vs {want}");
        }
    }

    #[test]
    fn expm_rotation() {
        // exp([[0, -t], [t, 0]]) is a rotation by t.
        let t = 2.5;
        let e = expm(&Mat::from_rows(&[[0.0, -t], [t, 0.0]]).unwrap()).unwrap();
        let want = Mat::from_rows(&[[t.cos(), -t.sin()], [t.sin(), t.cos()]]).unwrap();
        assert!(e.sub(&want).max_abs() < 1e-13);
    }

    #[test]
    fn expm_errors() {
        assert!(matches!(expm(&Mat::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn zoh_integrator() {
        let d = discretize_zoh(&scalar(0.0, 1.0, 1.0, 0.0), 1.0).unwrap();
        assert_eq!(d.ad[(0, 0)], 1.0);
        assert!((d.bd[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zoh_first_order() {
        let d = discretize_zoh(&scalar(-1.0, 1.0, 1.0, 0.0), 1.0).unwrap();
        assert!((d.ad[(0, 0)] - (-1.0f64).exp()).abs() < 1e-12);
        assert!((d.bd[(0, 0)] - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn zoh_small_step_matches_taylor() {
        let dt = 0.001;
        let d = discretize_zoh(&scalar(-1.0, 1.0, 1.0, 0.0), dt).unwrap();
        assert!((d.ad[(0, 0)] - (1.0 - dt)).abs() < 1e-6);
    }

    #[test]
    fn zoh_rejects_bad_step() {
        assert!(discretize_zoh(&scalar(-1.0, 1.0, 1.0, 0.0), 0.0).is_err());
        assert!(discretize_zoh(&scalar(-1.0, 1.0, 1.0, 0.0), f64::NAN).is_err());
    }

    #[test]
    fn step_response_closed_form() {
        let d = discretize_zoh(&scalar(-1.0, 1.0, 1.0, 0.0), 1.0).unwrap();
        let inputs = vec![[1.0]; 5];
        let mut ys = Vec::new();
        simulate(&d, &inputs, &[0.0], |_, y| ys.push(y[0])).unwrap();
        assert_eq!(ys[0], 0.0);
        assert!((ys[1] - 0.632_120_6).abs() < 1e-6);
        assert!((ys[2] - 0.864_664_7).abs() < 1e-6);
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let d = discretize_zoh(&scalar(-0.3, 2.0, 1.5, 0.0), 1.0).unwrap();
        let inputs = vec![[0.0]; 50];
        simulate(&d, &inputs, &[0.0], |_, y| assert_eq!(y[0], 0.0)).unwrap();
    }

    #[test]
    fn single_step_is_output_equation() {
        let d = discretize_zoh(&scalar(-0.3, 2.0, 1.5, 0.25), 1.0).unwrap();
        let mut seen = Vec::new();
        simulate(&d, &[[4.0]][..], &[2.0], |k, y| seen.push((k, y[0]))).unwrap();
        assert_eq!(seen, vec![(0, 1.5 * 2.0 + 0.25 * 4.0)]);
    }

    #[test]
    fn divergence_reports_step() {
        let d = DiscreteModel {
            ad: Mat::new(1, 1, vec![1e300]).unwrap(),
            bd: Mat::new(1, 1, vec![0.0]).unwrap(),
            c: Mat::new(1, 1, vec![1.0]).unwrap(),
            d: Mat::new(1, 1, vec![0.0]).unwrap(),
            dt: 1.0,
        };
        let err = simulate(&d, &vec![[0.0]; 10], &[1.0], |_, _| {}).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 1 }), "{err}");
    }

    #[test]
    fn simulate_checks_shapes() {
        let d = discretize_zoh(&scalar(-1.0, 1.0, 1.0, 0.0), 1.0).unwrap();
        assert!(matches!(
            simulate(&d, &vec![[1.0, 2.0]], &[0.0], |_, _| {}),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            simulate(&d, &Vec::<[f64; 1]>::new(), &[0.0], |_, _| {}),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            simulate(&d, &vec![[1.0]], &[0.0, 0.0], |_, _| {}),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn dc_gain_scalar() {
        let g = dc_gain(&scalar(-2.0, 1.0, 1.0, 0.0)).unwrap();
        assert!((g[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dc_gain_pure_feedthrough() {
        let a = Mat::diag(&[-1.0, -3.0]);
        let m = StateSpaceModel::new(a, Mat::zeros(2, 2), Mat::identity(2), Mat::identity(2)).unwrap();
        assert_eq!(dc_gain(&m).unwrap(), Mat::identity(2));
    }

    #[test]
    fn dc_gain_identity_output() {
        let a = Mat::from_rows(&[[-2.0, 1.0], [0.5, -3.0]]).unwrap();
        let b = Mat::from_rows(&[[1.0], [2.0]]).unwrap();
        let m = StateSpaceModel::new(a.clone(), b.clone(), Mat::identity(2), Mat::zeros(2, 1)).unwrap();
        let g = dc_gain(&m).unwrap();
        // -A^{-1} B by Cramer's rule: det = 5.5
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let x0 = -(a[(1, 1)] * b[(0, 0)] - a[(0, 1)] * b[(1, 0)]) / det;
        let x1 = -(-a[(1, 0)] * b[(0, 0)] + a[(0, 0)] * b[(1, 0)]) / det;
        assert!((g[(0, 0)] - x0).abs() < 1e-14);
        assert!((g[(1, 0)] - x1).abs() < 1e-14);
    }

    #[test]
    fn dc_gain_singular() {
        assert!(matches!(dc_gain(&scalar(0.0, 1.0, 1.0, 0.0)), Err(Error::Singular(_))));
    }

    #[test]
    fn steady_state_scalar() {
        let (x, y) = steady_state(&scalar(-1.0, 1.0, 1.0, 0.0), &[5.0]).unwrap();
        assert!((x[0] - 5.0).abs() < 1e-15);
        assert!((y[0] - 5.0).abs() < 1e-15);
        let (x, y) = steady_state(&scalar(-1.0, 1.0, 1.0, 0.0), &[0.0]).unwrap();
        assert_eq!((x[0], y[0]), (0.0, 0.0));
    }

    #[test]
    fn model_dimension_checks() {
        let a = Mat::identity(2);
        assert!(StateSpaceModel::new(a.clone(), Mat::zeros(3, 1), Mat::zeros(1, 2), Mat::zeros(1, 1)).is_err());
        assert!(StateSpaceModel::new(a.clone(), Mat::zeros(2, 1), Mat::zeros(1, 3), Mat::zeros(1, 1)).is_err());
        assert!(StateSpaceModel::new(a.clone(), Mat::zeros(2, 1), Mat::zeros(1, 2), Mat::zeros(1, 2)).is_err());
        assert!(StateSpaceModel::new(Mat::zeros(2, 3), Mat::zeros(2, 1), Mat::zeros(1, 3), Mat::zeros(1, 1)).is_err());
        assert!(StateSpaceModel::new(a, Mat::zeros(2, 1), Mat::zeros(1, 2), Mat::zeros(1, 1)).is_ok());
    }
}
