//! Method coefficients (Butcher, partitioned, additive and splitting) and the
//! algebraic conditions that decide which observables a method handles.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::tolerances;

/// Names accepted by [`builtin_tableau`].
pub const BUILTIN_TABLEAUX: [&str; 9] = [
    "explicit-euler",
    "implicit-euler",
    "midpoint",
    "heun",
    "rk4",
    "gauss2",
    "gauss3",
    "lobatto-iiia-2",
    "lobatto-iiib-2",
];

/// Coefficients `(A, b, c)` of an s-stage Runge–Kutta method.
#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau<T> {
    name: String,
    a: Vec<Vec<T>>,
    b: Vec<T>,
    c: Vec<T>,
    order: u32,
    nonstandard_c: bool,
}

impl<T: Real> ButcherTableau<T> {
    /// Builds a tableau and checks consistency: `sum b = 1` and, unless
    /// `nonstandard_c` is set, `c_i = sum_j a_ij`.
    pub fn new(
        name: impl Into<String>,
        a: Vec<Vec<T>>,
        b: Vec<T>,
        c: Vec<T>,
        order: u32,
        nonstandard_c: bool,
    ) -> Result<Self> {
        let name = name.into();
        let invalid = |reason: String| Error::InvalidTableau {
            name: name.clone(),
            reason,
        };
        let s = b.len();
        if s == 0 {
            return Err(invalid("no stages".into()));
        }
        if a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(invalid(format!("A must be {s}x{s}")));
        }
        if c.len() != s {
            return Err(invalid(format!("c must have {s} entries")));
        }
        if order == 0 {
            return Err(invalid("declared order must be positive".into()));
        }
        let all = a.iter().flatten().chain(&b).chain(&c);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coefficient".into()));
        }
        // consistency checks scale with the working precision
        let tol = lit::<T>(tolerances::CONSISTENCY).max(T::epsilon() * lit(16.0));
        let weight_sum: T = b.iter().copied().sum();
        if (weight_sum - T::one()).abs() > tol {
            return Err(invalid(format!("weights sum to {weight_sum}, not 1")));
        }
        if !nonstandard_c {
            for (i, row) in a.iter().enumerate() {
                let row_sum: T = row.iter().copied().sum();
                if (row_sum - c[i]).abs() > tol {
                    return Err(invalid(format!("c[{i}] = {} differs from row sum {row_sum}", c[i])));
                }
            }
        }
        Ok(Self {
            name,
            a,
            b,
            c,
            order,
            nonstandard_c,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn stages(&self) -> usize {
        self.b.len()
    }
    pub fn a(&self) -> &[Vec<T>] {
        &self.a
    }
    pub fn b(&self) -> &[T] {
        &self.b
    }
    pub fn c(&self) -> &[T] {
        &self.c
    }
    pub fn order(&self) -> u32 {
        self.order
    }
    pub fn nonstandard_c(&self) -> bool {
        self.nonstandard_c
    }

    /// Strictly lower-triangular `A`: stages can be evaluated in sequence.
    pub fn is_explicit(&self) -> bool {
        self.a
            .iter()
            .enumerate()
            .all(|(i, row)| row[i..].iter().all(|v| *v == T::zero()))
    }

    /// Largest `|c_i - sum_j a_ij|`.
    pub fn row_sum_defect(&self) -> T {
        self.a
            .iter()
            .zip(&self.c)
            .map(|(row, &ci)| (row.iter().copied().sum::<T>() - ci).abs())
            .fold(T::zero(), T::max)
    }

    pub fn weight_sum_defect(&self) -> T {
        (self.b.iter().copied().sum::<T>() - T::one()).abs()
    }

    /// Same coefficients in another scalar type.
    pub fn cast<U: Real>(&self) -> ButcherTableau<U> {
        let conv = |v: &T| U::lit(v.to_f64_lossy());
        ButcherTableau {
            name: self.name.clone(),
            a: self.a.iter().map(|r| r.iter().map(conv).collect()).collect(),
            b: self.b.iter().map(conv).collect(),
            c: self.c.iter().map(conv).collect(),
            order: self.order,
            nonstandard_c: self.nonstandard_c,
        }
    }
}

fn from_f64<T: Real>(
    name: &str,
    a: &[&[f64]],
    b: &[f64],
    c: &[f64],
    order: u32,
    nonstandard_c: bool,
) -> ButcherTableau<T> {
    let a = a.iter().map(|row| row.iter().map(|&v| lit(v)).collect()).collect();
    let b = b.iter().map(|&v| lit(v)).collect();
    let c = c.iter().map(|&v| lit(v)).collect();
    ButcherTableau::new(name, a, b, c, order, nonstandard_c).expect("builtin tableau is consistent")
}

/// Classical coefficient sets by name; see [`BUILTIN_TABLEAUX`].
pub fn builtin_tableau<T: Real>(name: &str) -> Result<ButcherTableau<T>> {
    let s3 = 3f64.sqrt();
    let s15 = 15f64.sqrt();
    let tab = match name {
        "explicit-euler" => from_f64(name, &[&[0.0]], &[1.0], &[0.0], 1, false),
        "implicit-euler" => from_f64(name, &[&[1.0]], &[1.0], &[1.0], 1, false),
        "midpoint" => from_f64(name, &[&[0.5]], &[1.0], &[0.5], 2, false),
        "heun" => from_f64(name, &[&[0.0, 0.0], &[1.0, 0.0]], &[0.5, 0.5], &[0.0, 1.0], 2, false),
        "rk4" => from_f64(
            name,
            &[
                &[0.0, 0.0, 0.0, 0.0],
                &[0.5, 0.0, 0.0, 0.0],
                &[0.0, 0.5, 0.0, 0.0],
                &[0.0, 0.0, 1.0, 0.0],
            ],
            &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            &[0.0, 0.5, 0.5, 1.0],
            4,
            false,
        ),
        "gauss2" => from_f64(
            name,
            &[&[0.25, 0.25 - s3 / 6.0], &[0.25 + s3 / 6.0, 0.25]],
            &[0.5, 0.5],
            &[0.5 - s3 / 6.0, 0.5 + s3 / 6.0],
            4,
            false,
        ),
        "gauss3" => from_f64(
            name,
            &[
                &[5.0 / 36.0, 2.0 / 9.0 - s15 / 15.0, 5.0 / 36.0 - s15 / 30.0],
                &[5.0 / 36.0 + s15 / 24.0, 2.0 / 9.0, 5.0 / 36.0 - s15 / 24.0],
                &[5.0 / 36.0 + s15 / 30.0, 2.0 / 9.0 + s15 / 15.0, 5.0 / 36.0],
            ],
            &[5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0],
            &[0.5 - s15 / 10.0, 0.5, 0.5 + s15 / 10.0],
            6,
            false,
        ),
        // trapezoidal rule
        "lobatto-iiia-2" => from_f64(name, &[&[0.0, 0.0], &[0.5, 0.5]], &[0.5, 0.5], &[0.0, 1.0], 2, false),
        // c = (0, 1) with rows summing to 1/2, hence nonstandard
        "lobatto-iiib-2" => from_f64(name, &[&[0.5, 0.0], &[0.5, 0.0]], &[0.5, 0.5], &[0.0, 1.0], 2, true),
        _ => return Err(Error::UnknownBuiltin(name.to_string())),
    };
    Ok(tab)
}

/// `M_ij = b_i a_ij + b_j a_ji - b_i b_j`; zero exactly when the method
/// preserves quadratic invariants.
pub fn quadratic_condition_matrix<T: Real>(tab: &ButcherTableau<T>) -> Vec<Vec<T>> {
    let s = tab.stages();
    let (a, b) = (tab.a(), tab.b());
    (0..s)
        .map(|i| (0..s).map(|j| b[i] * a[i][j] + b[j] * a[j][i] - b[i] * b[j]).collect())
        .collect()
}

pub fn quadratic_defect<T: Real>(tab: &ButcherTableau<T>) -> T {
    quadratic_condition_matrix(tab)
        .iter()
        .flatten()
        .fold(T::zero(), |m, v| m.max(v.abs()))
}

pub fn preserves_quadratic<T: Real>(tab: &ButcherTableau<T>, tol: T) -> bool {
    quadratic_defect(tab) <= tol
}

pub fn b_nonnegative<T: Real>(tab: &ButcherTableau<T>) -> bool {
    tab.b().iter().all(|&bi| bi >= T::zero())
}

/// Tableaux sharing a stage count, one per additive component.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveTableau<T> {
    parts: Vec<ButcherTableau<T>>,
}

impl<T: Real> AdditiveTableau<T> {
    pub fn new(parts: Vec<ButcherTableau<T>>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("additive tableau needs a part".into()))?;
        let s = first.stages();
        if let Some(bad) = parts.iter().find(|p| p.stages() != s) {
            return Err(Error::InvalidTableau {
                name: bad.name().to_string(),
                reason: format!("has {} stages, expected {s}", bad.stages()),
            });
        }
        Ok(Self { parts })
    }

    pub fn parts(&self) -> &[ButcherTableau<T>] {
        &self.parts
    }
    pub fn components(&self) -> usize {
        self.parts.len()
    }
    pub fn stages(&self) -> usize {
        self.parts[0].stages()
    }
    pub fn is_explicit(&self) -> bool {
        self.parts.iter().all(ButcherTableau::is_explicit)
    }
    pub fn name(&self) -> String {
        self.parts
            .iter()
            .map(ButcherTableau::name)
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// A tableau per part plus the part index of every state coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionedTableau<T> {
    tableau: AdditiveTableau<T>,
    partition: Vec<usize>,
}

impl<T: Real> PartitionedTableau<T> {
    pub fn new(parts: Vec<ButcherTableau<T>>, partition: Vec<usize>) -> Result<Self> {
        let tableau = AdditiveTableau::new(parts)?;
        if let Some(&bad) = partition.iter().find(|&&p| p >= tableau.components()) {
            return Err(Error::InvalidArgument(format!(
                "partition refers to part {bad}, only {} parts",
                tableau.components()
            )));
        }
        Ok(Self { tableau, partition })
    }

    /// Two parts; the first `split` coordinates go to part 0, the rest to 1.
    pub fn pair(first: ButcherTableau<T>, second: ButcherTableau<T>, dim: usize, split: usize) -> Result<Self> {
        let partition = (0..dim).map(|i| usize::from(i >= split)).collect();
        Self::new(vec![first, second], partition)
    }

    pub fn parts(&self) -> &[ButcherTableau<T>] {
        self.tableau.parts()
    }
    pub fn partition(&self) -> &[usize] {
        &self.partition
    }
    pub fn as_additive(&self) -> &AdditiveTableau<T> {
        &self.tableau
    }
    pub fn name(&self) -> String {
        self.tableau.name()
    }
}

/// Which `(mu, nu)` combinations [`ark_quadratic_condition`] inspects.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionMode {
    /// All pairs: quadratic invariants irrespective of partitioning.
    Full,
    /// Only `mu != nu`: invariants at most bilinear across parts.
    Bilinear,
}

/// Largest violation of the sufficient additive conditions: weights shared by
/// every part, and `b_i a_ij^[mu] + b_j a_ji^[nu] = b_i b_j` over the pairs
/// selected by `mode`.
pub fn ark_quadratic_defect<T: Real>(atab: &AdditiveTableau<T>, mode: ConditionMode) -> T {
    let parts = atab.parts();
    let s = atab.stages();
    let mut worst = T::zero();
    let b0 = parts[0].b();
    for p in parts {
        for (x, y) in p.b().iter().zip(b0) {
            worst = worst.max((*x - *y).abs());
        }
    }
    for (nu, pn) in parts.iter().enumerate() {
        for (mu, pm) in parts.iter().enumerate() {
            if mode == ConditionMode::Bilinear && mu == nu {
                continue;
            }
            for i in 0..s {
                for j in 0..s {
                    let v = pn.b()[i] * pm.a()[i][j] + pm.b()[j] * pn.a()[j][i] - pn.b()[i] * pm.b()[j];
                    worst = worst.max(v.abs());
                }
            }
        }
    }
    worst
}

/// Reports whether the sufficient condition holds within `tol`; a `false`
/// does not mean the method fails to preserve the invariants.
pub fn ark_quadratic_condition<T: Real>(atab: &AdditiveTableau<T>, tol: T, mode: ConditionMode) -> bool {
    ark_quadratic_defect(atab, mode) <= tol
}

/// Composition of exact component flows: stage `(nu, tau)` advances
/// component `nu` by `tau * dt`, stages applied in order.
#[derive(Clone, Debug, PartialEq)]
pub struct SplittingScheme<T> {
    components: usize,
    stages: Vec<(usize, T)>,
}

impl<T: Real> SplittingScheme<T> {
    pub fn new(components: usize, stages: Vec<(usize, T)>) -> Result<Self> {
        if components == 0 {
            return Err(Error::InvalidArgument("splitting needs a component".into()));
        }
        let tol = lit::<T>(tolerances::CONSISTENCY).max(T::epsilon() * lit(16.0));
        for nu in 0..components {
            let total: T = stages.iter().filter(|(k, _)| *k == nu).map(|(_, tau)| *tau).sum();
            if (total - T::one()).abs() > tol {
                return Err(Error::InvalidArgument(format!(
                    "fractions of component {nu} sum to {total}, not 1"
                )));
            }
        }
        if let Some((k, _)) = stages.iter().find(|(k, _)| *k >= components) {
            return Err(Error::InvalidArgument(format!(
                "stage refers to component {k} of {components}"
            )));
        }
        Ok(Self { components, stages })
    }

    /// Full step of component 0, then of component 1.
    pub fn lie_trotter() -> Self {
        Self::new(2, vec![(0, T::one()), (1, T::one())]).expect("consistent")
    }

    /// Half step of component 1, full step of 0, half step of 1.
    pub fn strang() -> Self {
        let half = lit::<T>(0.5);
        Self::new(2, vec![(1, half), (0, T::one()), (1, half)]).expect("consistent")
    }

    pub fn components(&self) -> usize {
        self.components
    }
    pub fn stages(&self) -> &[(usize, T)] {
        &self.stages
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtins() -> Vec<ButcherTableau<f64>> {
        BUILTIN_TABLEAUX.iter().map(|n| builtin_tableau(n).unwrap()).collect()
    }

    // brute-force sums over the eight trees up to order four
    fn order_conditions(t: &ButcherTableau<f64>) -> Vec<(f64, f64)> {
        let s = t.stages();
        let (a, b) = (t.a(), t.b());
        let c: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        let ac: Vec<f64> = (0..s).map(|i| (0..s).map(|j| a[i][j] * c[j]).sum()).collect();
        let ac2: Vec<f64> = (0..s).map(|i| (0..s).map(|j| a[i][j] * c[j] * c[j]).sum()).collect();
        let aac: Vec<f64> = (0..s).map(|i| (0..s).map(|j| a[i][j] * ac[j]).sum()).collect();
        let sum = |g: &dyn Fn(usize) -> f64| (0..s).map(|i| b[i] * g(i)).sum::<f64>();
        vec![
            (sum(&|_| 1.0), 1.0),
            (sum(&|i| c[i]), 0.5),
            (sum(&|i| c[i] * c[i]), 1.0 / 3.0),
            (sum(&|i| ac[i]), 1.0 / 6.0),
            (sum(&|i| c[i].powi(3)), 0.25),
            (sum(&|i| c[i] * ac[i]), 0.125),
            (sum(&|i| ac2[i]), 1.0 / 12.0),
            (sum(&|i| aac[i]), 1.0 / 24.0),
        ]
    }

    #[test]
    fn midpoint_and_explicit_euler_coefficients() {
        let m = builtin_tableau::<f64>("midpoint").unwrap();
        assert_eq!((m.a(), m.b(), m.c()), (&[vec![0.5]][..], &[1.0][..], &[0.5][..]));
        let e = builtin_tableau::<f64>("explicit-euler").unwrap();
        assert_eq!((e.a(), e.b(), e.c()), (&[vec![0.0]][..], &[1.0][..], &[0.0][..]));
        assert!(e.is_explicit() && !m.is_explicit());
    }

    #[test]
    fn gauss_and_rk4_satisfy_order_four_conditions() {
        for name in ["gauss2", "gauss3", "rk4"] {
            let t = builtin_tableau::<f64>(name).unwrap();
            for (k, (got, want)) in order_conditions(&t).into_iter().enumerate() {
                assert!((got - want).abs() < 1e-14, "{name} tree {k}: {got} vs {want}");
            }
        }
        let t = builtin_tableau::<f64>("gauss2").unwrap();
        let r3 = 3f64.sqrt() / 6.0;
        assert!((t.a()[0][1] - (0.25 - r3)).abs() < 1e-16);
        assert!((t.a()[1][0] - (0.25 + r3)).abs() < 1e-16);
    }

    #[test]
    fn gauss2_stability_function_matches_exp_to_fifth_order() {
        // R(z) = 1 + z b^T (I - zA)^{-1} 1 on y' = y, closed form for s = 2
        let t = builtin_tableau::<f64>("gauss2").unwrap();
        let r = |z: f64| {
            let a = t.a();
            let m = [1.0 - z * a[0][0], -z * a[0][1], -z * a[1][0], 1.0 - z * a[1][1]];
            let det = m[0] * m[3] - m[1] * m[2];
            let k0 = (m[3] - m[1]) / det;
            let k1 = (m[0] - m[2]) / det;
            1.0 + z * (t.b()[0] * k0 + t.b()[1] * k1)
        };
        let e1 = (r(0.04) - 0.04f64.exp()).abs();
        let e2 = (r(0.02) - 0.02f64.exp()).abs();
        let ratio = e1 / e2;
        assert!((ratio - 32.0).abs() < 2.0, "ratio {ratio}");
    }

    #[test]
    fn builtins_are_consistent() {
        for t in builtins() {
            assert!(t.weight_sum_defect() <= 1e-14, "{}", t.name());
            if !t.nonstandard_c() {
                assert!(t.row_sum_defect() <= 1e-14, "{}", t.name());
            }
        }
        assert!(builtin_tableau::<f64>("rk5").is_err());
    }

    #[test]
    fn quadratic_condition_examples() {
        let m = |n| quadratic_condition_matrix(&builtin_tableau::<f64>(n).unwrap());
        assert_eq!(m("midpoint"), vec![vec![0.0]]);
        assert_eq!(m("explicit-euler"), vec![vec![-1.0]]);
        let rk4_max = m("rk4").iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(rk4_max > 0.1);
        let keep = |n| preserves_quadratic(&builtin_tableau::<f64>(n).unwrap(), 1e-12);
        assert!(keep("midpoint") && keep("gauss2") && keep("gauss3"));
        assert!(!keep("rk4") && !keep("lobatto-iiia-2") && !keep("lobatto-iiib-2"));
    }

    #[test]
    fn quadratic_condition_matrix_is_symmetric() {
        for t in builtins() {
            let m = quadratic_condition_matrix(&t);
            for i in 0..t.stages() {
                for j in 0..t.stages() {
                    assert_eq!(m[i][j], m[j][i]);
                }
            }
        }
    }

    #[test]
    fn ark_condition_agrees_with_single_tableau() {
        for t in builtins() {
            let single = AdditiveTableau::new(vec![t.clone()]).unwrap();
            assert_eq!(
                ark_quadratic_condition(&single, 1e-12, ConditionMode::Full),
                preserves_quadratic(&t, 1e-12),
                "{}",
                t.name()
            );
        }
    }

    #[test]
    fn lobatto_pair_is_bilinear_but_not_fully_quadratic() {
        let pair = AdditiveTableau::new(vec![
            builtin_tableau::<f64>("lobatto-iiia-2").unwrap(),
            builtin_tableau("lobatto-iiib-2").unwrap(),
        ])
        .unwrap();
        assert!(ark_quadratic_condition(&pair, 1e-12, ConditionMode::Bilinear));
        assert!(!ark_quadratic_condition(&pair, 1e-12, ConditionMode::Full));
        let mid = builtin_tableau::<f64>("midpoint").unwrap();
        let twice = AdditiveTableau::new(vec![mid.clone(), mid]).unwrap();
        assert!(ark_quadratic_condition(&twice, 1e-12, ConditionMode::Full));
    }

    #[test]
    fn negative_weight_detected() {
        let t = ButcherTableau::new(
            "neg",
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![2.0, -1.0],
            vec![0.0, 1.0],
            1,
            false,
        )
        .unwrap();
        assert!(!b_nonnegative(&t));
        assert!(b_nonnegative(&builtin_tableau::<f64>("gauss2").unwrap()));
    }

    #[test]
    fn inconsistent_tableaux_rejected() {
        let bad_b = ButcherTableau::new("x", vec![vec![0.5]], vec![0.9], vec![0.5], 1, false);
        assert!(matches!(bad_b, Err(Error::InvalidTableau { .. })));
        let bad_c = ButcherTableau::new("x", vec![vec![0.5]], vec![1.0], vec![0.0], 1, false);
        assert!(bad_c.is_err());
        assert!(ButcherTableau::new("x", vec![vec![0.5]], vec![1.0], vec![0.0], 1, true).is_ok());
    }

    #[test]
    fn splitting_consistency() {
        assert!(SplittingScheme::<f64>::new(2, vec![(0, 1.0), (1, 0.5)]).is_err());
        assert_eq!(SplittingScheme::<f64>::strang().stages().len(), 3);
    }

    #[test]
    fn f32_tableaux_round_from_f64() {
        let t = builtin_tableau::<f32>("gauss3").unwrap();
        assert!(preserves_quadratic(&t, 1e-6));
    }
}
