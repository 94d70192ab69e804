//! Exact configuration sums over small windows.
//!
//! Every field configuration of the window (and of any explicit exterior
//! sites) is enumerated, weighted with `exp(-S)` from the local action and
//! the exterior weights, and summed with [`ExactSum`]. Results are therefore
//! bit-identical for any enumeration order or block split.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact_sum::ExactSum;
use crate::lattice::{log_config_weight, FieldGrid, LatticeConfiguration, ModelParams, Potential};
use crate::observables::{eval_on_config, ObservableExpr};

/// Largest number of configurations enumerated by default.
pub const DEFAULT_BUDGET: f64 = 1e8;
/// Induced boundary states that differ by more than this (after scaling to a
/// unit maximum) make an exterior fixture invalid.
pub const FIXTURE_TOLERANCE: f64 = 1e-12;

/// Sites beyond a boundary that are summed over explicitly.
#[derive(Clone, Debug, PartialEq)]
pub struct ExteriorChain {
    /// 1 or 2 extra sites.
    pub sites: usize,
    pub epsilon: f64,
    pub potential: Potential,
    pub z: f64,
    /// Weight on the outermost extra site.
    pub far: DVector<f64>,
}

impl ExteriorChain {
    fn log_link(&self, a: f64, b: f64) -> f64 {
        let v = |x: f64| self.potential.eval(x).expect("exterior potential must be closed form");
        let d = a - b;
        0.5 * (self.z / (2.0 * std::f64::consts::PI * self.epsilon)).ln()
            - 0.5 * self.epsilon * (v(a) + v(b))
            - self.z / (2.0 * self.epsilon) * d * d
    }

    /// Weight of one assignment of the extra sites, ordered from the boundary
    /// outwards, given the boundary value.
    fn weight(&self, grid: &FieldGrid, boundary: usize, extra: &[usize]) -> f64 {
        let mut log_w = 0.0;
        let mut prev = grid.value(boundary);
        for &i in extra {
            let x = grid.value(i);
            log_w += self.log_link(prev, x);
            prev = x;
        }
        log_w.exp() * self.far[*extra.last().expect("at least one extra site")]
    }

    fn validate(&self, grid: &FieldGrid) -> Result<()> {
        if !(1..=2).contains(&self.sites) {
            return Err(Error::InvalidParams(format!("exterior chain needs 1 or 2 sites, got {}", self.sites)));
        }
        if !(self.epsilon > 0.0 && self.z > 0.0) {
            return Err(Error::InvalidParams("exterior chain needs eps > 0 and Z > 0".into()));
        }
        if self.potential.eval(0.0).is_none() {
            return Err(Error::InvalidParams("exterior chain needs a closed-form potential".into()));
        }
        check_table(&self.far, grid)
    }
}

/// What stands in for the distribution beyond one boundary site.
#[derive(Clone, Debug, PartialEq)]
pub enum ExteriorSide {
    /// Weight function of the boundary field value.
    Table(DVector<f64>),
    Chain(ExteriorChain),
}

impl ExteriorSide {
    fn extra_sites(&self) -> usize {
        match self {
            ExteriorSide::Table(_) => 0,
            ExteriorSide::Chain(c) => c.sites,
        }
    }

    fn validate(&self, grid: &FieldGrid) -> Result<()> {
        match self {
            ExteriorSide::Table(t) => check_table(t, grid),
            ExteriorSide::Chain(c) => c.validate(grid),
        }
    }

    /// The boundary state this exterior induces, with the extra sites summed
    /// out exactly.
    pub fn induced_state(&self, grid: &FieldGrid) -> Result<DVector<f64>> {
        self.validate(grid)?;
        let n = grid.n_points();
        Ok(match self {
            ExteriorSide::Table(t) => t.clone(),
            ExteriorSide::Chain(c) => DVector::from_fn(n, |b, _| {
                let mut acc = ExactSum::new();
                let mut extra = vec![0; c.sites];
                loop {
                    acc.add(c.weight(grid, b, &extra));
                    if !advance(&mut extra, n) {
                        break;
                    }
                }
                acc.value()
            }),
        })
    }
}

fn check_table(t: &DVector<f64>, grid: &FieldGrid) -> Result<()> {
    if t.len() != grid.n_points() {
        return Err(Error::GridMismatch);
    }
    if let Some(bad) = t.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::InvalidParams(format!("exterior weight {bad} is not strictly positive")));
    }
    Ok(())
}

/// Odometer over `n`-valued digits, last digit fastest.
fn advance(digits: &mut [usize], n: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < n {
            return true;
        }
        *d = 0;
    }
    false
}

/// Exterior weights on both boundary sites of the window.
#[derive(Clone, Debug, PartialEq)]
pub struct ExteriorWeights {
    pub lower: ExteriorSide,
    pub upper: ExteriorSide,
}

impl ExteriorWeights {
    pub fn uniform(grid: &FieldGrid) -> Self {
        let ones = DVector::from_element(grid.n_points(), 1.0);
        Self::tables(ones.clone(), ones)
    }

    pub fn tables(lower: DVector<f64>, upper: DVector<f64>) -> Self {
        Self { lower: ExteriorSide::Table(lower), upper: ExteriorSide::Table(upper) }
    }

    pub fn validate(&self, grid: &FieldGrid) -> Result<()> {
        self.lower.validate(grid)?;
        self.upper.validate(grid)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleOptions {
    pub budget: f64,
    /// Visit grid points in this order instead of ascending.
    pub permutation: Option<Vec<usize>>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { budget: DEFAULT_BUDGET, permutation: None }
    }
}

/// `sum A w / sum w` over all configurations of the window of `params`.
pub fn brute_expectation(
    a: &ObservableExpr,
    params: &ModelParams,
    grid: &FieldGrid,
    exterior: &ExteriorWeights,
) -> Result<f64> {
    Ok(brute_expectations(std::slice::from_ref(a), params, grid, exterior, &OracleOptions::default())?[0])
}

/// [`brute_expectation`] for several observables in one enumeration.
pub fn brute_expectations(
    observables: &[ObservableExpr],
    params: &ModelParams,
    grid: &FieldGrid,
    exterior: &ExteriorWeights,
    options: &OracleOptions,
) -> Result<Vec<f64>> {
    params.validate_for(grid)?;
    exterior.validate(grid)?;
    let n = grid.n_points();
    let window = params.window_len();
    let lo_extra = exterior.lower.extra_sites();
    let hi_extra = exterior.upper.extra_sites();
    let total_sites = window + lo_extra + hi_extra;
    let configs = (n as f64).powi(total_sites as i32);
    if configs > options.budget {
        return Err(Error::BudgetExceeded { configs, budget: options.budget });
    }
    let order: Vec<usize> = match &options.permutation {
        Some(p) => {
            let mut sorted = p.clone();
            sorted.sort_unstable();
            if sorted != (0..n).collect::<Vec<_>>() {
                return Err(Error::Other("enumeration order is not a permutation of the grid".into()));
            }
            p.clone()
        }
        None => (0..n).collect(),
    };
    // Fail on unsupported observables before enumerating.
    for a in observables {
        if let Some((lo, hi)) = a.support() {
            if lo < 0 || hi >= window as i64 {
                return Err(Error::SupportViolation { lo, hi, len: window });
            }
        }
        for t in a.terms() {
            t.coeff.value(params.epsilon(), params.uniform_z())?;
        }
    }

    // Digits: [lower extra (outermost first) | window | upper extra (innermost first)].
    // Blocks are indexed by the first digit.
    let block = |first: usize| -> Result<(Vec<ExactSum>, ExactSum)> {
        let mut nums = vec![ExactSum::new(); observables.len()];
        let mut den = ExactSum::new();
        let mut digits = vec![0usize; total_sites - 1];
        let mut config = LatticeConfiguration::from_raw(0, vec![0; window]);
        let mut lower_extra = vec![0usize; lo_extra];
        let mut upper_extra = vec![0usize; hi_extra];
        loop {
            let full = std::iter::once(first).chain(digits.iter().copied()).map(|d| order[d]);
            for (k, idx) in full.enumerate() {
                if k < lo_extra {
                    // boundary outwards: reverse of the digit order
                    lower_extra[lo_extra - 1 - k] = idx;
                } else if k < lo_extra + window {
                    config.indices_mut()[k - lo_extra] = idx;
                } else {
                    upper_extra[k - lo_extra - window] = idx;
                }
            }
            let mut w = log_config_weight(&config, params, grid)?.exp();
            let first_idx = config.indices()[0];
            let last_idx = config.indices()[window - 1];
            w *= match &exterior.lower {
                ExteriorSide::Table(t) => t[first_idx],
                ExteriorSide::Chain(c) => c.weight(grid, first_idx, &lower_extra),
            };
            w *= match &exterior.upper {
                ExteriorSide::Table(t) => t[last_idx],
                ExteriorSide::Chain(c) => c.weight(grid, last_idx, &upper_extra),
            };
            den.add(w);
            for (acc, a) in nums.iter_mut().zip(observables) {
                acc.add(eval_on_config(a, &config, grid, params)? * w);
            }
            if !advance(&mut digits, n) {
                break;
            }
        }
        Ok((nums, den))
    };
    let partials: Vec<(Vec<ExactSum>, ExactSum)> = (0..n).into_par_iter().map(block).collect::<Result<_>>()?;
    let mut nums = vec![ExactSum::new(); observables.len()];
    let mut den = ExactSum::new();
    for (pn, pd) in &partials {
        for (acc, p) in nums.iter_mut().zip(pn) {
            acc.merge(p);
        }
        den.merge(pd);
    }
    let d = den.value();
    if d == 0.0 || !d.is_finite() {
        return Err(Error::ZeroNorm(d));
    }
    Ok(nums.iter().map(|x| x.value() / d).collect())
}

/// Outcome of comparing local expectations under two exteriors.
#[derive(Clone, Debug, PartialEq)]
pub struct IrrelevanceReport {
    /// Largest absolute difference of expectations over the battery.
    pub discrepancy: f64,
    /// Largest difference of the induced boundary states, each scaled to a
    /// unit maximum, over both sides.
    pub state_mismatch: f64,
    pub fixture_valid: bool,
}

impl IrrelevanceReport {
    pub fn ensure_valid(&self) -> Result<&Self> {
        if self.fixture_valid {
            Ok(self)
        } else {
            Err(Error::InvalidFixture(self.state_mismatch))
        }
    }
}

fn scaled_to_unit_max(v: &DVector<f64>) -> DVector<f64> {
    v / v.max()
}

/// Evaluates the battery of local observables with both exteriors. The
/// fixture is valid when both exteriors induce the same boundary states up
/// to normalization.
pub fn exterior_irrelevance_check(
    battery: &[ObservableExpr],
    params: &ModelParams,
    grid: &FieldGrid,
    ext1: &ExteriorWeights,
    ext2: &ExteriorWeights,
    options: &OracleOptions,
) -> Result<IrrelevanceReport> {
    let mut state_mismatch: f64 = 0.0;
    for (a, b) in [(&ext1.lower, &ext2.lower), (&ext1.upper, &ext2.upper)] {
        let sa = scaled_to_unit_max(&a.induced_state(grid)?);
        let sb = scaled_to_unit_max(&b.induced_state(grid)?);
        state_mismatch = state_mismatch.max((sa - sb).amax());
    }
    let e1 = brute_expectations(battery, params, grid, ext1, options)?;
    let e2 = brute_expectations(battery, params, grid, ext2, options)?;
    let discrepancy = e1.iter().zip(&e2).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(IrrelevanceReport { discrepancy, state_mismatch, fixture_valid: state_mismatch <= FIXTURE_TOLERANCE })
}

/// Local observables on the interior of a window: single-site powers,
/// nearest-neighbour products and both discrete derivatives wherever their
/// stencils fit.
pub fn default_battery(window_len: usize) -> Vec<ObservableExpr> {
    let mut out = Vec::new();
    let last = window_len as i64 - 2;
    for s in 1..=last {
        out.push(ObservableExpr::phi(s));
        out.push(ObservableExpr::pow(s, 2));
        if s < last {
            out.push(crate::observables::classical_product(&ObservableExpr::phi(s + 1), &ObservableExpr::phi(s)));
            let d = ObservableExpr::dfwd(s);
            out.push(crate::observables::classical_product(&d, &d));
        }
        if s > 1 && s < last {
            let d = ObservableExpr::dsym(s);
            out.push(d.clone());
            out.push(crate::observables::classical_product(&d, &d));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SiteProfile;
    use crate::observables::{classical_product, expectation};
    use crate::states::{Side, StateVector};
    use crate::transfer::Chain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decoupled_site_is_a_uniform_average() {
        let g = FieldGrid::symmetric(3, 1.0).unwrap();
        let p = ModelParams::uniform(1.0, Potential::free(), 1e-300, 1).unwrap();
        let x2 = brute_expectation(&ObservableExpr::pow(1, 2), &p, &g, &ExteriorWeights::uniform(&g)).unwrap();
        assert!((x2 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn odd_observables_vanish_by_symmetry() {
        let g = FieldGrid::symmetric(7, 2.0).unwrap();
        let p = ModelParams::uniform(0.5, Potential::Quartic { mu2: 0.4, lambda: 0.9 }, 1.2, 3).unwrap();
        let gauss = DVector::from_fn(7, |i, _| (-g.value(i).powi(2)).exp());
        let ext = ExteriorWeights::tables(gauss.clone(), gauss);
        let d = ObservableExpr::dsym(2);
        for a in [
            ObservableExpr::phi(2),
            ObservableExpr::pow(1, 3),
            d.clone(),
            classical_product(&d, &ObservableExpr::pow(3, 2)),
        ] {
            let v = brute_expectation(&a, &p, &g, &ext).unwrap();
            assert!(v.abs() < 1e-15, "{a}: {v}");
        }
    }

    fn random_model(rng: &mut ChaCha8Rng, n_sites: usize) -> ModelParams {
        let len = n_sites + 2;
        let pots = (0..len)
            .map(|_| Potential::Quartic { mu2: rng.gen_range(-0.5..1.5), lambda: rng.gen_range(0.0..1.0) })
            .collect();
        let zs = (0..len).map(|_| 1.0).collect();
        ModelParams::new(rng.gen_range(0.3..0.8), SiteProfile::PerSite(pots), SiteProfile::PerSite(zs), n_sites).unwrap()
    }

    #[test]
    fn four_site_window_matches_transfer_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let p = random_model(&mut rng, 2);
            let g = FieldGrid::symmetric(8, 2.0).unwrap();
            let lo = DVector::from_fn(8, |_, _| rng.gen_range(0.1..1.0));
            let hi = DVector::from_fn(8, |_, _| rng.gen_range(0.1..1.0));
            let ext = ExteriorWeights::tables(lo.clone(), hi.clone());
            let chain = Chain::new(p.clone(), g).unwrap();
            let ket = StateVector::positive(lo, 0, Side::Ket).unwrap();
            let bra = StateVector::positive(hi, 3, Side::Bra).unwrap();
            let battery = default_battery(4);
            let brute = brute_expectations(&battery, &p, &g, &ext, &OracleOptions::default()).unwrap();
            for (a, b) in battery.iter().zip(brute) {
                let t = expectation(&chain, a, &bra, &ket).unwrap();
                assert!((t - b).abs() <= 1e-10 * b.abs().max(1e-300), "{a}: {t} vs {b}");
            }
        }
    }

    #[test]
    fn permuted_enumeration_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_model(&mut rng, 2);
        let g = FieldGrid::symmetric(6, 1.5).unwrap();
        let ext = ExteriorWeights::tables(
            DVector::from_fn(6, |_, _| rng.gen_range(0.1..1.0)),
            DVector::from_fn(6, |_, _| rng.gen_range(0.1..1.0)),
        );
        let battery = default_battery(4);
        let plain = brute_expectations(&battery, &p, &g, &ext, &OracleOptions::default()).unwrap();
        let options = OracleOptions { permutation: Some(vec![3, 0, 5, 1, 4, 2]), ..OracleOptions::default() };
        let permuted = brute_expectations(&battery, &p, &g, &ext, &options).unwrap();
        for (x, y) in plain.iter().zip(&permuted) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let bad = OracleOptions { permutation: Some(vec![0, 0, 1, 2, 3, 4]), ..OracleOptions::default() };
        assert!(brute_expectations(&battery, &p, &g, &ext, &bad).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let g = FieldGrid::symmetric(10, 2.0).unwrap();
        let p = ModelParams::uniform(0.5, Potential::harmonic(1.0), 1.0, 7).unwrap();
        let r = brute_expectation(&ObservableExpr::phi(3), &p, &g, &ExteriorWeights::uniform(&g));
        assert_eq!(r, Err(Error::BudgetExceeded { configs: 1e9, budget: 1e8 }));
    }

    #[test]
    fn rejects_bad_exteriors() {
        let g = FieldGrid::symmetric(5, 1.0).unwrap();
        let p = ModelParams::uniform(0.5, Potential::harmonic(1.0), 1.0, 1).unwrap();
        let mut t = DVector::from_element(5, 1.0);
        t[2] = 0.0;
        let ext = ExteriorWeights::tables(t, DVector::from_element(5, 1.0));
        assert!(brute_expectation(&ObservableExpr::phi(1), &p, &g, &ext).is_err());
    }

    fn gaussian_chain(g: &FieldGrid, sites: usize, width: f64) -> ExteriorChain {
        ExteriorChain {
            sites,
            epsilon: 0.6,
            potential: Potential::harmonic(0.8),
            z: 1.1,
            far: DVector::from_fn(g.n_points(), |i, _| (-0.5 * (g.value(i) / width).powi(2)).exp()),
        }
    }

    #[test]
    fn scaled_exterior_changes_nothing() {
        let g = FieldGrid::symmetric(6, 1.5).unwrap();
        let p = ModelParams::uniform(0.4, Potential::Quartic { mu2: 0.5, lambda: 0.3 }, 1.0, 3).unwrap();
        let base = DVector::from_fn(6, |i, _| 0.2 + (g.value(i) + 0.3).powi(2));
        let ext1 = ExteriorWeights::tables(base.clone(), base.clone());
        let battery = default_battery(5);
        for (factor, tol) in [(2.0, 0.0), (3.0, 1e-15)] {
            let ext2 = ExteriorWeights::tables(&base * factor, base.clone());
            let r = exterior_irrelevance_check(&battery, &p, &g, &ext1, &ext2, &OracleOptions::default()).unwrap();
            assert!(r.fixture_valid);
            assert!(r.discrepancy <= tol, "factor {factor}: {}", r.discrepancy);
        }
    }

    #[test]
    fn integrated_exterior_chain_matches_its_table() {
        let g = FieldGrid::symmetric(6, 1.5).unwrap();
        let p = ModelParams::uniform(0.4, Potential::Quartic { mu2: 0.5, lambda: 0.3 }, 1.0, 2).unwrap();
        let lower = ExteriorSide::Chain(gaussian_chain(&g, 2, 0.7));
        let upper = ExteriorSide::Chain(gaussian_chain(&g, 1, 1.3));
        let ext2 = ExteriorWeights { lower: lower.clone(), upper: upper.clone() };
        let ext1 = ExteriorWeights::tables(lower.induced_state(&g).unwrap(), upper.induced_state(&g).unwrap());
        let battery = default_battery(4);
        let r = exterior_irrelevance_check(&battery, &p, &g, &ext1, &ext2, &OracleOptions::default()).unwrap();
        assert!(r.ensure_valid().is_ok());
        assert!(r.discrepancy <= 1e-12, "{}", r.discrepancy);
    }

    #[test]
    fn negative_control_is_flagged() {
        let g = FieldGrid::symmetric(6, 1.5).unwrap();
        let p = ModelParams::uniform(0.4, Potential::Quartic { mu2: 0.5, lambda: 0.3 }, 1.0, 2).unwrap();
        let lower = ExteriorSide::Chain(gaussian_chain(&g, 1, 0.7));
        let ext2 = ExteriorWeights { lower, upper: ExteriorSide::Table(DVector::from_element(6, 1.0)) };
        let ext1 = ExteriorWeights::uniform(&g);
        let battery = default_battery(4);
        let r = exterior_irrelevance_check(&battery, &p, &g, &ext1, &ext2, &OracleOptions::default()).unwrap();
        assert!(!r.fixture_valid);
        assert!(r.discrepancy > 1e-6);
        assert!(matches!(r.ensure_valid(), Err(Error::InvalidFixture(_))));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn oracle_agrees_with_transfer_route_under_any_order(
            seed in 0u64..1000,
            n_sites in 1usize..3,
            n_points in 3usize..7,
            eps in 0.2f64..0.8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_model(&mut rng, n_sites).same_with_epsilon(eps).unwrap();
            let g = FieldGrid::symmetric(n_points, rng.gen_range(0.8..2.5)).unwrap();
            let lo = DVector::from_fn(n_points, |_, _| rng.gen_range(0.1..1.0));
            let hi = DVector::from_fn(n_points, |_, _| rng.gen_range(0.1..1.0));
            let ext = ExteriorWeights::tables(lo.clone(), hi.clone());
            let len = p.window_len();
            let chain = Chain::new(p.clone(), g).unwrap();
            let ket = StateVector::positive(lo, 0, Side::Ket).unwrap();
            let bra = StateVector::positive(hi, len - 1, Side::Bra).unwrap();
            let battery = default_battery(len);
            let plain = brute_expectations(&battery, &p, &g, &ext, &OracleOptions::default()).unwrap();
            let mut order: Vec<usize> = (0..n_points).collect();
            order.rotate_left(seed as usize % n_points);
            order.swap(0, n_points - 1);
            let options = OracleOptions { permutation: Some(order), ..OracleOptions::default() };
            let permuted = brute_expectations(&battery, &p, &g, &ext, &options).unwrap();
            for ((a, b), c) in battery.iter().zip(&plain).zip(&permuted) {
                proptest::prop_assert_eq!(b.to_bits(), c.to_bits());
                let t = expectation(&chain, a, &bra, &ket).unwrap();
                proptest::prop_assert!((t - b).abs() <= 1e-10 * b.abs(), "{}: {} vs {}", a, t, b);
            }
        }
    }
}
