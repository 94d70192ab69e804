//! Chain geometry, local action and configuration weights.
//!
//! Sites carry a real field value `phi` that is discretized on a uniform
//! [`FieldGrid`]. Neighbouring sites are coupled through the kinetic term
//! `Z/(2 eps) (phi_{n+1} - phi_n)^2`; every site carries a potential
//! `V(phi) = mu2 phi^2 / 2 + lambda phi^4 / 8` or a tabulated one.
//!
//! The kinetic coefficient is the same quantity that multiplies the
//! derivative term in the local action (sometimes written `M` for the mass of
//! each oscillator); here it is always called `z`.

use crate::error::{Error, Result};

/// Amplitude below which the field distribution is considered negligible when
/// picking a default truncation of the field axis.
const TRUNCATION_AMPLITUDE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldGrid {
    n_points: usize,
    phi_min: f64,
    phi_max: f64,
}

impl FieldGrid {
    /// Uniform grid on `[-phi_max, phi_max]`.
    pub fn symmetric(n_points: usize, phi_max: f64) -> Result<Self> {
        Self::new(n_points, -phi_max, phi_max)
    }

    /// Uniform grid on `[phi_min, phi_max]`; use [`FieldGrid::symmetric`]
    /// unless an asymmetric axis is really wanted.
    pub fn new(n_points: usize, phi_min: f64, phi_max: f64) -> Result<Self> {
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {n_points}")));
        }
        if !(phi_min.is_finite() && phi_max.is_finite()) || phi_max <= phi_min {
            return Err(Error::InvalidGrid(format!("empty field range [{phi_min}, {phi_max}]")));
        }
        Ok(Self { n_points, phi_min, phi_max })
    }

    /// Symmetric grid whose spacing is at most `width / resolution`.
    pub fn resolving(phi_max: f64, width: f64, resolution: f64) -> Result<Self> {
        let target = width / resolution;
        let intervals = (2.0 * phi_max / target).ceil() as usize;
        Self::symmetric(intervals.max(2) + 1, phi_max)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn phi_min(&self) -> f64 {
        self.phi_min
    }

    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }

    pub fn spacing(&self) -> f64 {
        (self.phi_max - self.phi_min) / (self.n_points - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        // Count from the nearer end so that symmetric grids are exactly
        // symmetric under phi -> -phi.
        let last = self.n_points - 1;
        if 2 * i == last && self.is_symmetric() {
            0.0
        } else if 2 * i < last {
            self.phi_min + i as f64 * self.spacing()
        } else {
            self.phi_max - (last - i) as f64 * self.spacing()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.value(i)).collect()
    }

    /// Index of the mirror point `-phi` on a symmetric grid.
    pub fn mirror(&self, i: usize) -> usize {
        self.n_points - 1 - i
    }

    pub fn is_symmetric(&self) -> bool {
        self.phi_min == -self.phi_max
    }
}

/// On-site potential.
#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    /// `V(phi) = mu2 phi^2 / 2 + lambda phi^4 / 8`.
    Quartic { mu2: f64, lambda: f64 },
    /// Values of `V` at every grid point.
    Table(Vec<f64>),
}

impl Potential {
    pub fn harmonic(mu2: f64) -> Self {
        Potential::Quartic { mu2, lambda: 0.0 }
    }

    pub fn free() -> Self {
        Potential::Quartic { mu2: 0.0, lambda: 0.0 }
    }

    /// Value at grid point `i`.
    pub fn at(&self, grid: &FieldGrid, i: usize) -> f64 {
        match self {
            Potential::Quartic { .. } => self.eval(grid.value(i)).expect("closed-form potential"),
            Potential::Table(v) => v[i],
        }
    }

    /// Closed-form value, `None` for tables.
    pub fn eval(&self, phi: f64) -> Option<f64> {
        match *self {
            Potential::Quartic { mu2, lambda } => {
                let p2 = phi * phi;
                Some(0.5 * mu2 * p2 + 0.125 * lambda * p2 * p2)
            }
            Potential::Table(_) => None,
        }
    }

    pub fn is_even(&self) -> bool {
        matches!(self, Potential::Quartic { .. })
    }

    pub fn validate(&self, grid: Option<&FieldGrid>) -> Result<()> {
        match self {
            Potential::Quartic { mu2, lambda } => {
                if !mu2.is_finite() || !lambda.is_finite() {
                    return Err(Error::InvalidParams("non-finite potential coefficient".into()));
                }
                if *lambda < 0.0 {
                    return Err(Error::InvalidParams(format!("lambda = {lambda} < 0")));
                }
            }
            Potential::Table(v) => {
                if let Some(g) = grid {
                    if v.len() != g.n_points() {
                        return Err(Error::InvalidParams(format!(
                            "potential table has {} entries for a {}-point grid",
                            v.len(),
                            g.n_points()
                        )));
                    }
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidParams("non-finite potential table entry".into()));
                }
            }
        }
        Ok(())
    }
}

/// A per-site quantity that is either constant along the chain or tabulated
/// for every site of the window.
#[derive(Clone, Debug, PartialEq)]
pub enum SiteProfile<T> {
    Uniform(T),
    PerSite(Vec<T>),
}

impl<T> SiteProfile<T> {
    pub fn at(&self, site: usize) -> &T {
        match self {
            SiteProfile::Uniform(x) => x,
            SiteProfile::PerSite(v) => &v[site],
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, SiteProfile::Uniform(_))
    }

    fn len_ok(&self, len: usize) -> bool {
        match self {
            SiteProfile::Uniform(_) => true,
            SiteProfile::PerSite(v) => v.len() == len,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    epsilon: f64,
    potentials: SiteProfile<Potential>,
    z: SiteProfile<f64>,
    n_sites: usize,
}

impl ModelParams {
    /// Translation invariant chain with `n_sites` interior sites.
    pub fn uniform(epsilon: f64, potential: Potential, z: f64, n_sites: usize) -> Result<Self> {
        Self::new(epsilon, SiteProfile::Uniform(potential), SiteProfile::Uniform(z), n_sites)
    }

    /// Per-site profiles must list one entry for every site of the window,
    /// i.e. `n_sites + 2` entries including both boundary sites.
    pub fn new(
        epsilon: f64,
        potentials: SiteProfile<Potential>,
        z: SiteProfile<f64>,
        n_sites: usize,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParams(format!("epsilon = {epsilon} must be > 0")));
        }
        let len = n_sites + 2;
        if !potentials.len_ok(len) || !z.len_ok(len) {
            return Err(Error::InvalidParams(format!(
                "per-site profiles need {len} entries (n_sites + 2)"
            )));
        }
        match &z {
            SiteProfile::Uniform(x) => check_z(*x)?,
            SiteProfile::PerSite(v) => v.iter().try_for_each(|x| check_z(*x))?,
        }
        match &potentials {
            SiteProfile::Uniform(p) => p.validate(None)?,
            SiteProfile::PerSite(v) => v.iter().try_for_each(|p| p.validate(None))?,
        }
        Ok(Self { epsilon, potentials, z, n_sites })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Number of sites in the window, boundary sites included.
    pub fn window_len(&self) -> usize {
        self.n_sites + 2
    }

    pub fn potential(&self, site: usize) -> &Potential {
        self.potentials.at(site)
    }

    pub fn z(&self, site: usize) -> f64 {
        *self.z.at(site)
    }

    /// Kinetic coefficient of the link `site -> site + 1`, the mean of the two
    /// site values.
    pub fn z_link(&self, site: usize) -> f64 {
        0.5 * (self.z(site) + self.z(site + 1))
    }

    /// The common kinetic coefficient, if it is site independent.
    pub fn uniform_z(&self) -> Option<f64> {
        match self.z {
            SiteProfile::Uniform(z) => Some(z),
            SiteProfile::PerSite(ref v) => {
                let first = v[0];
                v.iter().all(|&x| x == first).then_some(first)
            }
        }
    }

    pub fn is_translation_invariant(&self) -> bool {
        let pots = match &self.potentials {
            SiteProfile::Uniform(_) => true,
            SiteProfile::PerSite(v) => v.iter().all(|p| p == &v[0]),
        };
        pots && self.uniform_z().is_some()
    }

    pub fn same_with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(epsilon, self.potentials.clone(), self.z.clone(), self.n_sites)
    }

    pub fn with_n_sites(&self, n_sites: usize) -> Result<Self> {
        if !(self.potentials.is_uniform() && self.z.is_uniform()) {
            return Err(Error::InvalidParams("cannot resize a chain with per-site profiles".into()));
        }
        Self::new(self.epsilon, self.potentials.clone(), self.z.clone(), n_sites)
    }

    /// Checks that tabulated potentials match `grid`.
    pub fn validate_for(&self, grid: &FieldGrid) -> Result<()> {
        match &self.potentials {
            SiteProfile::Uniform(p) => p.validate(Some(grid)),
            SiteProfile::PerSite(v) => v.iter().try_for_each(|p| p.validate(Some(grid))),
        }
    }

    /// Default truncation of the field axis.
    ///
    /// Picks the smallest `phi_max` where the semiclassical decay
    /// `exp(-int_0^phi sqrt(2 Z V))` of the field distribution drops below
    /// `1e-12` on every site. Tabulated or flat potentials have no default.
    pub fn default_phi_max(&self) -> Result<f64> {
        let mut best: f64 = 0.0;
        for site in 0..self.window_len() {
            let pot = self.potential(site);
            let z = self.z(site);
            let (mu2, lambda) = match *pot {
                Potential::Quartic { mu2, lambda } => (mu2, lambda),
                Potential::Table(_) => {
                    return Err(Error::InvalidParams(
                        "tabulated potentials need an explicit phi_max".into(),
                    ))
                }
            };
            if mu2 <= 0.0 && lambda <= 0.0 {
                return Err(Error::InvalidParams(
                    "potential does not confine the field; give phi_max explicitly".into(),
                ));
            }
            best = best.max(decay_length(z, |phi| pot.eval(phi).unwrap()));
        }
        Ok(best)
    }
}

fn check_z(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("kinetic coefficient z = {z} must be > 0")))
    }
}

fn decay_length(z: f64, v: impl Fn(f64) -> f64) -> f64 {
    let target = -TRUNCATION_AMPLITUDE.ln();
    let exponent = |phi: f64| {
        // Simpson rule on [0, phi].
        let n = 200;
        let h = phi / n as f64;
        let f = |x: f64| (2.0 * z * v(x).max(0.0)).sqrt();
        let mut s = f(0.0) + f(phi);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        s * h / 3.0
    };
    let mut hi = 1.0;
    while exponent(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if exponent(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Grid indices of the field on consecutive sites `first_site, first_site+1, ...`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeConfiguration {
    first_site: usize,
    values: Vec<usize>,
}

impl LatticeConfiguration {
    pub fn new(first_site: usize, values: Vec<usize>, grid: &FieldGrid) -> Result<Self> {
        if let Some(&bad) = values.iter().find(|&&v| v >= grid.n_points()) {
            return Err(Error::InvalidGrid(format!(
                "configuration index {bad} outside a {}-point grid",
                grid.n_points()
            )));
        }
        Ok(Self { first_site, values })
    }

    /// Used by the enumerator, which guarantees valid indices.
    pub(crate) fn from_raw(first_site: usize, values: Vec<usize>) -> Self {
        Self { first_site, values }
    }

    pub fn first_site(&self) -> usize {
        self.first_site
    }

    pub fn last_site(&self) -> usize {
        self.first_site + self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.values
    }

    pub(crate) fn indices_mut(&mut self) -> &mut [usize] {
        &mut self.values
    }

    pub fn contains(&self, site: i64) -> bool {
        site >= self.first_site as i64 && site <= self.last_site() as i64
    }

    /// Grid index at `site`.
    pub fn index_at(&self, site: usize) -> usize {
        self.values[site - self.first_site]
    }

    pub fn phi(&self, site: usize, grid: &FieldGrid) -> f64 {
        grid.value(self.index_at(site))
    }
}

/// `L_n = V_n(phi_n) + Z_n/(4 eps^2) [(phi_{n+1} - phi_n)^2 + (phi_n - phi_{n-1})^2]`.
pub fn local_lagrangian(
    config: &LatticeConfiguration,
    site: usize,
    params: &ModelParams,
    grid: &FieldGrid,
) -> Result<f64> {
    if site <= config.first_site() || site >= config.last_site() {
        return Err(Error::BoundaryAccess { site, len: config.len() });
    }
    let eps = params.epsilon();
    let prev = config.phi(site - 1, grid);
    let here = config.phi(site, grid);
    let next = config.phi(site + 1, grid);
    let kinetic = (next - here).powi(2) + (here - prev).powi(2);
    Ok(params.potential(site).at(grid, config.index_at(site))
        + params.z(site) / (4.0 * eps * eps) * kinetic)
}

/// Discrete action of the window spanned by `config`, with half-weight
/// potential and quarter-weight kinetic terms on the two boundary sites.
pub fn window_action(config: &LatticeConfiguration, params: &ModelParams, grid: &FieldGrid) -> Result<f64> {
    if config.len() < 2 {
        return Err(Error::WindowTooShort(config.len()));
    }
    let eps = params.epsilon();
    let n1 = config.first_site();
    let n2 = config.last_site();
    let mut action = 0.0;
    for n in n1 + 1..n2 {
        action += eps * local_lagrangian(config, n, params, grid)?;
    }
    let v = |n: usize| params.potential(n).at(grid, config.index_at(n));
    action += 0.5 * eps * (v(n2) + v(n1));
    let d_hi = (config.phi(n2, grid) - config.phi(n2 - 1, grid)) / eps;
    let d_lo = (config.phi(n1 + 1, grid) - config.phi(n1, grid)) / eps;
    action += 0.25 * eps * (params.z(n2) * d_hi * d_hi + params.z(n1) * d_lo * d_lo);
    Ok(action)
}

/// Log of the measure factor `sqrt(Z_link / (2 pi eps))` of one link.
pub fn log_measure_factor(params: &ModelParams, link: usize) -> f64 {
    0.5 * (params.z_link(link) / (2.0 * std::f64::consts::PI * params.epsilon())).ln()
}

/// `ln` of the configuration weight: `-S` plus one log measure factor per link.
pub fn log_config_weight(config: &LatticeConfiguration, params: &ModelParams, grid: &FieldGrid) -> Result<f64> {
    let action = window_action(config, params, grid)?;
    let measure: f64 = (config.first_site()..config.last_site())
        .map(|link| log_measure_factor(params, link))
        .sum();
    Ok(measure - action)
}

/// `exp(-S)` times `sqrt(Z/(2 pi eps))` per link.
pub fn config_weight(config: &LatticeConfiguration, params: &ModelParams, grid: &FieldGrid) -> Result<f64> {
    log_config_weight(config, params, grid).map(f64::exp)
}
