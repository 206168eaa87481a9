//! Brute-force evaluation of the defining correlator integral
//! `G(nu) = integral Phi^nu exp(-S) DPhi`, the independent ground truth for
//! the reduction and evolution legs.
//!
//! Two methods: tensor-product Gauss-Legendre quadrature on a truncated box
//! (small site counts) and importance-sampled Monte Carlo drawing each site
//! from its bond-free density, with the bond factor as a reweighting.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::evolution::onsite_moment;
use crate::lattice::{LatticeSpec, MultiIndex, PotentialCoefficients, Site};
use crate::quad::gauss_legendre;
use crate::Real;

const MAX_QUADRATURE_SITES: usize = 4;
const MAX_MC_SITES: usize = 10;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OracleMethod {
    TensorQuadrature { nodes_per_axis: usize },
    MonteCarlo { samples: u64 },
}

#[derive(Clone, Copy, Debug)]
pub struct OracleConfig {
    pub method: OracleMethod,
    /// Integration half-width; derived from the action when absent.
    pub phi_max: Option<f64>,
    pub seed: u64,
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            method: OracleMethod::TensorQuadrature { nodes_per_axis: 48 },
            phi_max: None,
            seed: 7,
            tol: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OracleResult<F> {
    pub unnormalized: F,
    pub normalized: F,
    /// Node-doubling difference (quadrature) or standard error (MC) of the
    /// normalized value.
    pub error: F,
}

struct NumericAction<F> {
    sites: Vec<Site>,
    a: Vec<F>,
    k: Vec<F>,
    g: Vec<F>,
    lambda: Vec<F>,
    /// Bonds as (site index, site index, coupling).
    bonds: Vec<(usize, usize, F)>,
    even: bool,
}

impl<F: Real> NumericAction<F> {
    fn new(spec: &LatticeSpec) -> Result<Self> {
        if !spec.is_numeric() {
            return Err(Error::NumericCouplingsRequired("oracle".into()));
        }
        let sites = spec.sites().to_vec();
        let position = |s: &Site| sites.iter().position(|x| x == s).unwrap();
        let mut action = NumericAction {
            sites: sites.clone(),
            a: Vec::new(),
            k: Vec::new(),
            g: Vec::new(),
            lambda: Vec::new(),
            bonds: Vec::new(),
            even: spec.is_even(),
        };
        for site in &sites {
            let pot = spec.potential_at(site);
            action.a.push(coupling_value(&pot.a));
            action.k.push(coupling_value(&pot.k));
            action.g.push(coupling_value(&pot.g));
            action.lambda.push(coupling_value(&pot.lambda));
        }
        for ((a, b), w) in spec.bonds() {
            action
                .bonds
                .push((position(a), position(b), coupling_value(w)));
        }
        action.check_integrable()?;
        Ok(action)
    }

    /// Sufficient integrability condition: every site needs a positive
    /// quartic coupling, or a positive quadratic remainder after absorbing
    /// the incident bond magnitudes (`|w phi phi'| <= |w|(phi^2+phi'^2)/2`).
    fn check_integrable(&self) -> Result<()> {
        for (i, _) in self.sites.iter().enumerate() {
            let lambda = self.lambda[i];
            if lambda < F::zero() {
                return Err(Error::NonIntegrableAction(format!(
                    "negative quartic coupling at {}",
                    self.sites[i]
                )));
            }
            if lambda > F::zero() {
                continue;
            }
            if !self.g[i].is_zero() {
                return Err(Error::NonIntegrableAction(format!(
                    "cubic term without quartic damping at {}",
                    self.sites[i]
                )));
            }
            let bond_load: F = self
                .bonds
                .iter()
                .filter(|(a, b, _)| *a == i || *b == i)
                .map(|(_, _, w)| w.abs())
                .fold(F::zero(), |acc, w| acc + w);
            if self.k[i] - bond_load <= F::zero() {
                return Err(Error::NonIntegrableAction(format!(
                    "quadratic form not positive at {} after bond absorption",
                    self.sites[i]
                )));
            }
        }
        Ok(())
    }

    fn on_site(&self, i: usize, phi: F) -> F {
        let two = F::from_f64_lossy(2.0);
        let three = F::from_f64_lossy(3.0);
        let four = F::from_f64_lossy(4.0);
        self.a[i] * phi
            + self.k[i] * phi * phi / two
            + self.g[i] * phi * phi * phi / three
            + self.lambda[i] * phi * phi * phi * phi / four
    }

    fn total(&self, phis: &[F]) -> F {
        let mut s = F::zero();
        for (i, phi) in phis.iter().enumerate() {
            s += self.on_site(i, *phi);
        }
        for (a, b, w) in &self.bonds {
            s -= *w * phis[*a] * phis[*b];
        }
        s
    }

    /// Half-width beyond which the worst-case integrand tail is negligible.
    fn radius(&self, max_occupation: u32, tol: F) -> F {
        let log_target = tol.ln() - F::from_f64_lossy(30.0);
        let nu_f = F::from_f64_lossy(f64::from(max_occupation));
        let mut radius = F::from_f64_lossy(4.0);
        'grow: for _ in 0..80 {
            for (i, _) in self.sites.iter().enumerate() {
                let bond_load: F = self
                    .bonds
                    .iter()
                    .filter(|(a, b, _)| *a == i || *b == i)
                    .map(|(_, _, w)| w.abs())
                    .fold(F::zero(), |acc, w| acc + w);
                let two = F::from_f64_lossy(2.0);
                let worst = self.lambda[i] * radius.powi(4) / F::from_f64_lossy(4.0)
                    + (self.k[i] - bond_load) * radius * radius / two
                    - self.a[i].abs() * radius
                    - self.g[i].abs() * radius.powi(3) / F::from_f64_lossy(3.0);
                if nu_f * radius.ln() - worst >= log_target {
                    radius *= F::from_f64_lossy(1.4);
                    continue 'grow;
                }
            }
            break;
        }
        radius
    }
}

fn coupling_value<F: Real>(c: &crate::lattice::Coupling) -> F {
    F::from_f64_lossy(c.to_f64().expect("numeric coupling"))
}

/// Tensor grid sharing one weight field `prod w_i * exp(-S)` across many
/// correlator queries on the same lattice.
pub struct OracleGrid<F> {
    action: NumericAction<F>,
    nodes: Vec<F>,
    weight_field: Vec<F>,
    vacuum: F,
}

impl<F: Real> OracleGrid<F> {
    pub fn new(spec: &LatticeSpec, nodes_per_axis: usize, phi_max: Option<F>) -> Result<Self> {
        let action = NumericAction::new(spec)?;
        let site_count = action.sites.len();
        if site_count > MAX_QUADRATURE_SITES {
            return Err(Error::DimensionTooLarge {
                method: "tensor-quadrature",
                sites: site_count,
                max: MAX_QUADRATURE_SITES,
            });
        }
        let radius = phi_max.unwrap_or_else(|| action.radius(8, F::from_f64_lossy(1e-14)));
        let (raw_nodes, raw_weights) = gauss_legendre::<F>(nodes_per_axis);
        let nodes: Vec<F> = raw_nodes.iter().map(|x| *x * radius).collect();
        let weights: Vec<F> = raw_weights.iter().map(|w| *w * radius).collect();

        let total_points = nodes_per_axis.pow(site_count as u32);
        let mut weight_field = vec![F::zero(); total_points];
        let mut phis = vec![F::zero(); site_count];
        for (flat, field) in weight_field.iter_mut().enumerate() {
            let mut rest = flat;
            let mut gauss = F::one();
            for s in (0..site_count).rev() {
                let digit = rest % nodes_per_axis;
                rest /= nodes_per_axis;
                phis[s] = nodes[digit];
                gauss *= weights[digit];
            }
            *field = gauss * (-action.total(&phis)).exp();
        }
        let mut grid = OracleGrid {
            action,
            nodes,
            weight_field,
            vacuum: F::zero(),
        };
        grid.vacuum = grid.unnormalized(&MultiIndex::new());
        Ok(grid)
    }

    pub fn vacuum(&self) -> F {
        self.vacuum
    }

    /// `G(nu)` on this grid, by a deterministic sweep in flat-index order.
    pub fn unnormalized(&self, nu: &MultiIndex) -> F {
        let site_count = self.action.sites.len();
        let n = self.nodes.len();
        let occupations: Vec<u32> = self
            .action
            .sites
            .iter()
            .map(|site| nu.get(site))
            .collect();
        // per-site power tables over the shared node list
        let pow_tables: Vec<Option<Vec<F>>> = occupations
            .iter()
            .map(|&occ| {
                if occ == 0 {
                    None
                } else {
                    Some(self.nodes.iter().map(|x| x.powi(occ as i32)).collect())
                }
            })
            .collect();
        let mut total = F::zero();
        for (flat, weight) in self.weight_field.iter().enumerate() {
            let mut rest = flat;
            let mut mono = F::one();
            for s in (0..site_count).rev() {
                let digit = rest % n;
                rest /= n;
                if let Some(table) = &pow_tables[s] {
                    mono *= table[digit];
                }
            }
            total += mono * *weight;
        }
        total
    }

    pub fn normalized(&self, nu: &MultiIndex) -> F {
        if self.action.even && nu.weight() % 2 == 1 {
            return F::zero();
        }
        self.unnormalized(nu) / self.vacuum
    }
}

/// Evaluates one correlator with an internal error estimate.
///
/// Quadrature runs the full grid at `n` and `2n` nodes per axis and reports
/// their difference; Monte Carlo reports the delta-method standard error of
/// the normalized ratio. Odd weight with an even action returns exact zero.
pub fn direct_correlator<F: Real>(
    spec: &LatticeSpec,
    nu: &MultiIndex,
    cfg: &OracleConfig,
) -> Result<OracleResult<F>> {
    let action = NumericAction::<F>::new(spec)?;
    if action.even && nu.weight() % 2 == 1 {
        return Ok(OracleResult {
            unnormalized: F::zero(),
            normalized: F::zero(),
            error: F::zero(),
        });
    }
    match cfg.method {
        OracleMethod::TensorQuadrature { nodes_per_axis } => {
            let radius = cfg
                .phi_max
                .map(F::from_f64_lossy)
                .unwrap_or_else(|| {
                    let max_occ = nu.iter().map(|(_, o)| o).max().unwrap_or(0);
                    action.radius(max_occ, F::from_f64_lossy(cfg.tol * 1e-3))
                });
            let coarse = OracleGrid::new(spec, nodes_per_axis, Some(radius))?;
            let fine = OracleGrid::new(spec, nodes_per_axis * 2, Some(radius))?;
            let coarse_norm = coarse.normalized(nu);
            let fine_norm = fine.normalized(nu);
            Ok(OracleResult {
                unnormalized: fine.unnormalized(nu),
                normalized: fine_norm,
                error: (fine_norm - coarse_norm).abs(),
            })
        }
        OracleMethod::MonteCarlo { samples } => monte_carlo(spec, &action, nu, samples, cfg),
    }
}

fn monte_carlo<F: Real>(
    spec: &LatticeSpec,
    action: &NumericAction<F>,
    nu: &MultiIndex,
    samples: u64,
    cfg: &OracleConfig,
) -> Result<OracleResult<F>> {
    let site_count = action.sites.len();
    if site_count > MAX_MC_SITES {
        return Err(Error::DimensionTooLarge {
            method: "monte-carlo",
            sites: site_count,
            max: MAX_MC_SITES,
        });
    }
    let radius = cfg
        .phi_max
        .map(F::from_f64_lossy)
        .unwrap_or_else(|| action.radius(0, F::from_f64_lossy(1e-12)));

    // per-site uniform-envelope rejection samplers for exp(-V_i)
    let mut max_density = vec![F::zero(); site_count];
    for (i, cap) in max_density.iter_mut().enumerate() {
        let mut best = F::zero();
        let scan = 2048;
        for s in 0..=scan {
            let phi = -radius
                + F::from_f64_lossy(2.0) * radius * F::from_usize_lossy(s)
                    / F::from_usize_lossy(scan);
            let density = (-action.on_site(i, phi)).exp();
            if density > best {
                best = density;
            }
        }
        *cap = best * F::from_f64_lossy(1.05);
    }

    let occupations: Vec<u32> = action.sites.iter().map(|site| nu.get(site)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut phis = vec![F::zero(); site_count];

    let mut sum_x = F::zero();
    let mut sum_xx = F::zero();
    let mut sum_y = F::zero();
    let mut sum_yy = F::zero();
    let mut sum_xy = F::zero();
    for _ in 0..samples {
        for i in 0..site_count {
            phis[i] = loop {
                let phi = F::from_f64_lossy(rng.gen_range(-1.0..1.0)) * radius;
                let accept = (-action.on_site(i, phi)).exp() / max_density[i];
                if F::from_f64_lossy(rng.gen::<f64>()) < accept {
                    break phi;
                }
            };
        }
        let mut bond_energy = F::zero();
        for (a, b, w) in &action.bonds {
            bond_energy += *w * phis[*a] * phis[*b];
        }
        let reweight = bond_energy.exp();
        let mut mono = F::one();
        for (i, &occ) in occupations.iter().enumerate() {
            if occ > 0 {
                mono *= phis[i].powi(occ as i32);
            }
        }
        let x = mono * reweight;
        let y = reweight;
        sum_x += x;
        sum_xx += x * x;
        sum_y += y;
        sum_yy += y * y;
        sum_xy += x * y;
    }
    let n = F::from_f64_lossy(samples as f64);
    let mean_x = sum_x / n;
    let mean_y = sum_y / n;
    let var_x = (sum_xx / n - mean_x * mean_x) / n;
    let var_y = (sum_yy / n - mean_y * mean_y) / n;
    let cov = (sum_xy / n - mean_x * mean_y) / n;

    // delta method for the ratio mean_x / mean_y
    let ratio = mean_x / mean_y;
    let rel_var = var_x / (mean_x * mean_x) - F::from_f64_lossy(2.0) * cov / (mean_x * mean_y)
        + var_y / (mean_y * mean_y);
    let ratio_se = (ratio * ratio * rel_var).abs().sqrt();

    // unnormalized value needs the sampling-density normalizations
    let mut norm_product = F::one();
    for site in spec.sites() {
        let pot: &PotentialCoefficients = spec.potential_at(site);
        norm_product *= onsite_moment::<F>(0, pot, F::from_f64_lossy(1e-12))?;
    }
    Ok(OracleResult {
        unnormalized: mean_x * norm_product,
        normalized: ratio,
        error: ratio_se,
    })
}
