//! The experiments behind the subcommands. Each returns its complete CSV
//! table; nothing is written before the whole table is known.

use nalgebra::DVector;
use rayon::prelude::*;

use super::config::{Config, ConfigError, ProductKind};
use crate::error::Error;
use crate::lattice::ModelParams;
use crate::observables::{
    classical_product, expectation, parse_observable, quantum_product, HeisenbergMap, ModeFrame, ObservableExpr,
};
use crate::operators::SpectralDecomposition;
use crate::oracle::{
    brute_expectations, default_battery, exterior_irrelevance_check, ExteriorChain, ExteriorSide, ExteriorWeights,
    OracleOptions,
};
use crate::states::{boundary_state, evolve_state, expect_operator, BoundaryKind, Side, StateVector};
use crate::transfer::{check_coupling, Chain, SpectralPropagator};

pub const DEFAULT_LEVELS: usize = 5;
/// Oracle and operator values must agree to this, relative to `max(|oracle|, 1)`.
pub const ORACLE_TOLERANCE: f64 = 1e-10;
pub const EXTERIOR_TOLERANCE: f64 = 1e-12;
/// Largest transport factor kept when an anti-ordered product is summed over
/// intermediate modes.
pub const ANTI_ORDERED_MAX_GROWTH: f64 = 1e8;

#[derive(Debug)]
pub enum RunError {
    Config(String),
    /// Budget or conditioning refusal.
    Refused(String),
    Internal(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Refused(_) => 3,
            RunError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) | RunError::Refused(m) | RunError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.0)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::BudgetExceeded { .. }
            | Error::IllConditioned { .. }
            | Error::CouplingViolated { .. }
            | Error::NoConvergence(_) => RunError::Refused(msg),
            Error::InvalidParams(_)
            | Error::InvalidGrid(_)
            | Error::Syntax { .. }
            | Error::SupportViolation { .. }
            | Error::SiteOutOfWindow { .. }
            | Error::WindowTooShort(_)
            | Error::InvalidState(_)
            | Error::UnsupportedBasis(_) => RunError::Config(msg),
            _ => RunError::Internal(msg),
        }
    }
}

/// A finished table and whether every check in it passed.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub csv: String,
    pub passed: bool,
}

impl Report {
    fn ok(csv: String) -> Self {
        Self { csv, passed: true }
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn states(cfg: &Config, chain: &Chain) -> Result<(StateVector, StateVector), RunError> {
    let bra = boundary_state(cfg.bra()?, chain, Side::Bra)?;
    let ket = boundary_state(cfg.ket()?, chain, Side::Ket)?;
    Ok((bra, ket))
}

fn chain_for(cfg: &Config, params: ModelParams, refine: bool) -> Result<Chain, RunError> {
    let grid = cfg.grid_for(&params, refine)?;
    check_coupling(params.epsilon(), cfg.model.z, &grid)?;
    Ok(Chain::new(params, grid)?)
}

/// Lowest levels of the Hamiltonian and of `-ln(lambda)/eps` for the step
/// kernel.
pub fn run_spectrum(cfg: &Config) -> Result<Report, RunError> {
    let chain = chain_for(cfg, cfg.params()?, false)?;
    let h = chain.hamiltonian(0)?;
    let sd = SpectralDecomposition::of_matrix(h.entries())?;
    let levels = cfg.experiment.levels.unwrap_or(DEFAULT_LEVELS).min(sd.len());
    let kernel = SpectralPropagator::new(&chain)?.energies(levels);
    let e = sd.eigenvalues();
    let mut csv = String::from("n,E_n,E_n_minus_E0,kernel_E_n,kernel_E_n_minus_E0\n");
    for n in 0..levels {
        csv += &format!("{n},{},{},{},{}\n", num(e[n]), num(e[n] - e[0]), num(kernel[n]), num(kernel[n] - kernel[0]));
    }
    Ok(Report::ok(csv))
}

/// One point of the derivative ambiguity sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmbiguityPoint {
    pub epsilon: f64,
    pub dfwd2: f64,
    pub dsym2: f64,
    pub gap: f64,
    pub scaled_gap: f64,
}

/// `<(dfwd)^2>` and `<(dsym)^2>` at the centre of the window.
pub fn ambiguity_point(chain: &Chain, bra: &StateVector, ket: &StateVector) -> crate::Result<AmbiguityPoint> {
    let c = (chain.window_len() as i64 - 1) / 2;
    let square = |a: ObservableExpr| classical_product(&a, &a);
    let dfwd2 = expectation(chain, &square(ObservableExpr::dfwd(c)), bra, ket)?;
    let dsym2 = expectation(chain, &square(ObservableExpr::dsym(c)), bra, ket)?;
    let eps = chain.params().epsilon();
    let z = chain
        .params()
        .uniform_z()
        .ok_or_else(|| Error::InvalidParams("the sweep needs a uniform Z".into()))?;
    let gap = dfwd2 - dsym2;
    Ok(AmbiguityPoint { epsilon: eps, dfwd2, dsym2, gap, scaled_gap: gap * 2.0 * eps * z })
}

pub fn run_ambiguity(cfg: &Config) -> Result<Report, RunError> {
    if cfg.model.n_sites < 3 {
        return Err(RunError::Config("config field `model.n_sites`: the sweep needs at least 3 sites".into()));
    }
    let eps_list = cfg.experiment.eps_list.clone().unwrap_or_else(|| vec![cfg.model.epsilon]);
    let points: Vec<AmbiguityPoint> = eps_list
        .par_iter()
        .map(|&eps| {
            let chain = chain_for(cfg, cfg.params_with_epsilon(eps)?, true)?;
            let (bra, ket) = states(cfg, &chain)?;
            Ok(ambiguity_point(&chain, &bra, &ket)?)
        })
        .collect::<Result<_, RunError>>()?;
    let mut csv = String::from("eps,dfwd2,dsym2,gap,gap_2epsZ\n");
    for p in points {
        csv += &format!(
            "{},{},{},{},{}\n",
            num(p.epsilon),
            num(p.dfwd2),
            num(p.dsym2),
            num(p.gap),
            num(p.scaled_gap)
        );
    }
    Ok(Report::ok(csv))
}

fn tau_to_site(tau: f64, chain: &Chain, field: &str) -> Result<usize, RunError> {
    let eps = chain.params().epsilon();
    let s = tau / eps;
    let r = s.round();
    if !tau.is_finite() || (s - r).abs() > 1e-9 * r.abs().max(1.0) {
        return Err(RunError::Config(format!("config field `{field}`: tau = {tau} is not a multiple of epsilon")));
    }
    let last = chain.window_len() as f64 - 2.0;
    if r < 1.0 || r > last {
        return Err(RunError::Config(format!(
            "config field `{field}`: tau = {tau} is not inside the window interior [{eps}, {}]",
            last * eps
        )));
    }
    Ok(r as usize)
}

/// `{bra| A_H B_H |ket}` without a symbolic image of the product.
pub fn numeric_product(
    chain: &Chain,
    a: &ObservableExpr,
    b: &ObservableExpr,
    bra: &StateVector,
    ket: &StateVector,
    ground_states: bool,
) -> crate::Result<f64> {
    let reference = chain.window_len() / 2;
    if ground_states && chain.params().is_translation_invariant() {
        let frame = ModeFrame::new(chain, reference)?;
        let (block, _) = frame.product_block(a, b, 1, ANTI_ORDERED_MAX_GROWTH)?;
        return Ok(block[(0, 0)]);
    }
    let map = HeisenbergMap::new(chain, reference)?;
    let op = map.to_heisenberg(a)?.mul(&map.to_heisenberg(b)?)?;
    let ket_r = evolve_state(chain, ket, reference)?;
    let bra_r = evolve_state(chain, bra, reference)?;
    expect_operator(&bra_r, &op, &ket_r)
}

pub fn run_correlate(cfg: &Config) -> Result<Report, RunError> {
    let pairs = cfg
        .experiment
        .pairs
        .clone()
        .ok_or_else(|| RunError::Config("config field `experiment.pairs`: required for correlate".into()))?;
    let kind = cfg.product()?;
    let chain = chain_for(cfg, cfg.params()?, false)?;
    let (bra, ket) = states(cfg, &chain)?;
    let ground = cfg.ket()? == BoundaryKind::Ground && cfg.bra()? == BoundaryKind::Ground;
    let sites: Vec<(usize, usize)> = pairs
        .iter()
        .map(|&[t1, t2]| {
            Ok((tau_to_site(t1, &chain, "experiment.pairs")?, tau_to_site(t2, &chain, "experiment.pairs")?))
        })
        .collect::<Result<_, RunError>>()?;
    let rows: Vec<(f64, bool)> = sites
        .par_iter()
        .map(|&(s1, s2)| {
            let phi = |s: usize| ObservableExpr::phi(s as i64);
            let (a, b) = match kind {
                ProductKind::Classical => {
                    return Ok((expectation(&chain, &classical_product(&phi(s1), &phi(s2)), &bra, &ket)?, false))
                }
                ProductKind::Quantum => (phi(s1), phi(s2)),
                ProductKind::QuantumAntiordered => (phi(s1.min(s2)), phi(s1.max(s2))),
            };
            match quantum_product(&a, &b) {
                Ok(image) => Ok((expectation(&chain, &image, &bra, &ket)?, false)),
                Err(Error::UnsupportedBasis(_)) => Ok((numeric_product(&chain, &a, &b, &bra, &ket, ground)?, true)),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<_, RunError>>()?;
    let mut csv = String::from("tau1,tau2,value,numeric_only\n");
    for (&[t1, t2], (v, numeric)) in pairs.iter().zip(rows) {
        csv += &format!("{},{},{},{}\n", num(t1), num(t2), num(v), u8::from(numeric));
    }
    Ok(Report::ok(csv))
}

/// Oracle against transfer route for each observable, then the exterior
/// fixture built from the configured boundary states.
pub fn run_oracle_check(cfg: &Config) -> Result<Report, RunError> {
    // Both sides are the same finite sum, so the coupling rule does not apply.
    let params = cfg.params()?;
    let grid = cfg.grid_for(&params, false)?;
    let chain = Chain::new(params.clone(), grid)?;
    let observables = match &cfg.experiment.observables {
        Some(list) => list
            .iter()
            .map(|s| {
                parse_observable(s).map_err(|e| RunError::Config(format!("config field `experiment.observables`: `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => default_battery(chain.window_len()),
    };
    let (bra, ket) = states(cfg, &chain)?;
    let ext = ExteriorWeights::tables(ket.values().clone(), bra.values().clone());
    let options = OracleOptions::default();
    let brute = brute_expectations(&observables, &params, &grid, &ext, &options)?;

    let exterior_chain = |sites, far: &DVector<f64>| ExteriorChain {
        sites,
        epsilon: params.epsilon(),
        potential: cfg.potential(),
        z: cfg.model.z,
        far: far.clone(),
    };
    let lower = ExteriorSide::Chain(exterior_chain(2, ket.values()));
    let upper = ExteriorSide::Chain(exterior_chain(1, bra.values()));
    let integrated = ExteriorWeights::tables(lower.induced_state(&grid)?, upper.induced_state(&grid)?);
    let explicit = ExteriorWeights { lower, upper };
    let report = exterior_irrelevance_check(&observables, &params, &grid, &integrated, &explicit, &options)?;

    let mut passed = true;
    let mut csv = String::from("check,observable,oracle,operator,discrepancy,pass\n");
    for (a, o) in observables.iter().zip(&brute) {
        let t = expectation(&chain, a, &bra, &ket)?;
        let d = (t - o).abs() / o.abs().max(1.0);
        let ok = d <= ORACLE_TOLERANCE;
        passed &= ok;
        csv += &format!("oracle,\"{a}\",{},{},{},{}\n", num(*o), num(t), num(d), u8::from(ok));
    }
    let ok = report.fixture_valid && report.discrepancy <= EXTERIOR_TOLERANCE;
    passed &= ok;
    csv += &format!("exterior,battery,,,{},{}\n", num(report.discrepancy), u8::from(ok));
    Ok(Report { csv, passed })
}
