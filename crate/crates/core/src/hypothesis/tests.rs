use serde::{Deserialize, Serialize};

use super::covering::{annulus_meets_space, cover_annulus, CoverStrategy};
use super::divergence::DivergenceSource;
use crate::error::{Error, Result};
use crate::model::{euclidean, HmmParams, HmmSpec, ParamVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Simple,
    Ball,
    Composite,
}

/// One likelihood-ratio test `1{l_n(theta_0) - l_n(center) <= n r}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberTest {
    pub center: ParamVector,
    /// Annulus index for composite members.
    pub j: Option<usize>,
    /// `J(theta_0 | center)` used to pick the critical value.
    pub j_hat: f64,
    pub critical: f64,
}

/// A test of `H_0: theta = theta_0`. A decision of `true` rejects `H_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: TestKind,
    pub null: ParamVector,
    pub members: Vec<MemberTest>,
    pub eps: Option<f64>,
    pub m: Option<usize>,
    pub xi: Option<f64>,
}

fn check_distinct(theta0: &[f64], theta1: &[f64]) -> Result<()> {
    if theta0.len() != theta1.len() {
        return Err(Error::invalid("test centres must have the null's dimension"));
    }
    if theta0 == theta1 {
        return Err(Error::invalid("alternative centre coincides with the null"));
    }
    Ok(())
}

fn check_critical(r: f64, lo: f64, hi: f64) -> Result<()> {
    if !(r > lo && r < hi) {
        return Err(Error::invalid(format!("critical value {r} outside the interval ({lo}, {hi})")));
    }
    Ok(())
}

/// Simple test against `theta1`. `r` defaults to `J / 8` and must lie in
/// `(0, J / 4)`.
pub fn build_simple_test(
    spec: &HmmSpec,
    theta0: &[f64],
    theta1: &[f64],
    j_hat: f64,
    r: Option<f64>,
) -> Result<TestFunction> {
    spec.space().check(theta0)?;
    spec.space().check(theta1)?;
    check_distinct(theta0, theta1)?;
    if !(j_hat > 0.0) {
        return Err(Error::invalid(format!("divergence {j_hat} must be positive")));
    }
    let r = r.unwrap_or(j_hat / 8.0);
    check_critical(r, 0.0, j_hat / 4.0)?;
    Ok(TestFunction {
        kind: TestKind::Simple,
        null: ParamVector::new(theta0.to_vec())?,
        members: vec![MemberTest { center: ParamVector::new(theta1.to_vec())?, j: None, j_hat, critical: r }],
        eps: None,
        m: None,
        xi: None,
    })
}

fn ball_member(
    theta0: &[f64],
    center: &[f64],
    eps: f64,
    j_hat: f64,
    r: Option<f64>,
    j: Option<usize>,
) -> Result<MemberTest> {
    check_distinct(theta0, center)?;
    let dist = euclidean(theta0, center);
    if !(dist > eps && dist < 2.0 * eps) {
        return Err(Error::invalid(format!("ball centre at distance {dist} is not in ({eps}, {})", 2.0 * eps)));
    }
    if !(j_hat > 0.0) {
        return Err(Error::invalid(format!("divergence {j_hat} must be positive")));
    }
    let r = r.unwrap_or(3.0 * j_hat / 8.0);
    check_critical(r, j_hat / 4.0, j_hat / 2.0)?;
    Ok(MemberTest { center: ParamVector::new(center.to_vec())?, j, j_hat, critical: r })
}

/// Test built around the centre of a small ball at distance in `(eps, 2 eps)`.
/// `r` defaults to `3 J / 8` and must lie in `(J / 4, J / 2)`.
pub fn build_ball_test(
    spec: &HmmSpec,
    theta0: &[f64],
    center: &[f64],
    eps: f64,
    j_hat: f64,
    r: Option<f64>,
) -> Result<TestFunction> {
    spec.space().check(theta0)?;
    spec.space().check(center)?;
    let member = ball_member(theta0, center, eps, j_hat, r, None)?;
    Ok(TestFunction {
        kind: TestKind::Ball,
        null: ParamVector::new(theta0.to_vec())?,
        members: vec![member],
        eps: Some(eps),
        m: None,
        xi: None,
    })
}

/// Maximum of ball tests over the coverings of every annulus `j >= m` that
/// still meets the parameter box.
pub fn build_composite_test(
    spec: &HmmSpec,
    theta0: &[f64],
    eps: f64,
    m: usize,
    xi: f64,
    source: &dyn DivergenceSource,
    strategy: CoverStrategy,
) -> Result<TestFunction> {
    if m == 0 {
        return Err(Error::invalid("composite test needs M >= 1"));
    }
    spec.space().check(theta0)?;
    let mut members = Vec::new();
    let mut j = m;
    while annulus_meets_space(theta0, eps, j, spec.space()) {
        let cover = cover_annulus(theta0, eps, j, xi, spec.space(), strategy)?;
        for c in &cover.centers {
            let v = source.divergence(theta0, c)?;
            if v.j <= 3.0 * v.se || v.j <= 0.0 {
                return Err(Error::Identifiability { a: theta0.to_vec(), b: c.to_vec(), j: v.j, se: v.se });
            }
            members.push(ball_member(theta0, c, j as f64 * eps, v.j, None, Some(j))?);
        }
        j += 1;
    }
    Ok(TestFunction {
        kind: TestKind::Composite,
        null: ParamVector::new(theta0.to_vec())?,
        members,
        eps: Some(eps),
        m: Some(m),
        xi: Some(xi),
    })
}

impl TestFunction {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Resolves every centre once so decisions only run filters.
    pub fn prepare(&self, spec: &HmmSpec) -> Result<PreparedTest> {
        Ok(PreparedTest {
            null: spec.resolve(&self.null)?,
            members: self.members.iter().map(|m| Ok((spec.resolve(&m.center)?, m.critical))).collect::<Result<_>>()?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Reject iff `stat <= n r`.
pub fn rejects(stat: f64, n: usize, critical: f64) -> bool {
    stat <= n as f64 * critical
}

/// A [`TestFunction`] with resolved parameters.
#[derive(Clone, Debug)]
pub struct PreparedTest {
    null: HmmParams,
    members: Vec<(HmmParams, f64)>,
}

impl PreparedTest {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `l_n(theta_0) - l_n(center_k)` for every member.
    pub fn statistics(&self, ys: &[f64]) -> Result<Vec<f64>> {
        let l0 = self.null.log_likelihood(ys)?;
        self.members.iter().map(|(p, _)| Ok(l0 - p.log_likelihood(ys)?)).collect()
    }

    pub fn decide(&self, ys: &[f64]) -> Result<bool> {
        self.decide_in_order(ys, 0..self.members.len())
    }

    /// Same decision as [`decide`](Self::decide), visiting members in `order`
    /// and stopping at the first rejection. `order` must cover every member
    /// for the result to be exact.
    pub fn decide_in_order<I: IntoIterator<Item = usize>>(&self, ys: &[f64], order: I) -> Result<bool> {
        if self.members.is_empty() {
            return Ok(false);
        }
        let l0 = self.null.log_likelihood(ys)?;
        for k in order {
            let (p, r) = &self.members[k];
            if rejects(l0 - p.log_likelihood(ys)?, ys.len(), *r) {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Member indices sorted by the distance of their centre to `theta`.
    pub fn order_by_distance(&self, test: &TestFunction, theta: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..test.members.len()).collect();
        idx.sort_by(|&a, &b| {
            euclidean(&test.members[a].center, theta).total_cmp(&euclidean(&test.members[b].center, theta))
        });
        idx
    }
}

#[cfg(test)]
mod unit {
    use super::*;
    use crate::hypothesis::IidGaussianDivergence;
    use crate::model::ParamSpace;

    fn iid() -> HmmSpec {
        HmmSpec::iid_gaussian(1.0, ParamSpace::new(vec![-1.0], vec![1.0]).unwrap()).unwrap()
    }

    #[test]
    fn boundary_is_inclusive() {
        assert!(rejects(40.0, 100, 0.4));
        assert!(!rejects(40.000001, 100, 0.4));
    }

    #[test]
    fn simple_test_default_and_interval() {
        let spec = iid();
        let t = build_simple_test(&spec, &[0.0], &[0.5], 0.125, None).unwrap();
        assert_eq!(t.members[0].critical, 0.125 / 8.0);
        assert!(build_simple_test(&spec, &[0.0], &[0.5], 0.125, Some(0.04)).is_err());
        assert!(build_simple_test(&spec, &[0.0], &[0.0], 0.125, None).is_err());
    }

    #[test]
    fn simple_test_decision_matches_statistic() {
        let spec = iid();
        let t = build_simple_test(&spec, &[0.0], &[0.5], 0.125, None).unwrap();
        let p = t.prepare(&spec).unwrap();
        // l0 - l1 = sum (y - 0.25) * (-0.5) ... far above n r for ys near 0
        let ys = vec![0.0; 50];
        let stat = p.statistics(&ys).unwrap()[0];
        assert!((stat - 50.0 * 0.125).abs() < 1e-9);
        assert!(!p.decide(&ys).unwrap());
        let ys = vec![0.5; 50];
        assert!(p.decide(&ys).unwrap());
    }

    #[test]
    fn ball_test_geometry() {
        let spec = iid();
        assert!(build_ball_test(&spec, &[0.0], &[0.3], 0.2, 0.045, None).is_ok());
        assert!(build_ball_test(&spec, &[0.0], &[0.5], 0.2, 0.125, None).is_err());
        assert!(build_ball_test(&spec, &[0.0], &[0.3], 0.2, 0.045, Some(0.01)).is_err());
    }

    #[test]
    fn composite_is_max_of_members() {
        let spec = iid();
        let src = IidGaussianDivergence { sigma: 1.0 };
        let t = build_composite_test(&spec, &[0.0], 0.2, 1, 0.25, &src, CoverStrategy::MaxCoverage).unwrap();
        assert!(t.len() > 4);
        let p = t.prepare(&spec).unwrap();
        for ys in [vec![0.0; 30], vec![0.4; 30], vec![-0.6; 30], vec![0.05; 30]] {
            let stats = p.statistics(&ys).unwrap();
            let any = stats.iter().zip(&t.members).any(|(s, m)| rejects(*s, ys.len(), m.critical));
            assert_eq!(p.decide(&ys).unwrap(), any);
            let order = p.order_by_distance(&t, &[0.5]);
            assert_eq!(p.decide_in_order(&ys, order).unwrap(), any);
        }
    }

    #[test]
    fn composite_round_trips_through_json() {
        let spec = iid();
        let src = IidGaussianDivergence { sigma: 1.0 };
        let t = build_composite_test(&spec, &[0.1], 0.3, 1, 0.25, &src, CoverStrategy::MaxCoverage).unwrap();
        let back = TestFunction::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(t, back);
    }
}
