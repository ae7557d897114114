use clap::Args;
use polyalm::{AlmConfig, Mode, Mu0Policy};
use serde::{Deserialize, Serialize};

/// Overrides of the solver defaults for the instance's matrix order.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFlags {
    /// proposed (growing active set) or standard (full grid from the start)
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Grid points added per outer iteration
    #[arg(long)]
    pub zeta: Option<usize>,
    /// Finest grid shell
    #[arg(long)]
    pub rmax: Option<usize>,
    #[arg(long)]
    pub rho0: Option<f64>,
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub eps_l: Option<f64>,
    #[arg(long)]
    pub eps_v: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Radius of the multiplier safeguard ball
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub inner_max_iter: Option<usize>,
    /// paper_literal_RI or polar_projected
    #[arg(long)]
    pub mu0: Option<Mu0Policy>,
}

impl ConfigFlags {
    pub fn config(&self, m: usize, seed: u64) -> AlmConfig {
        let mut c = AlmConfig::for_order(m);
        c.seed = seed;
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        set!(mode => mode, zeta => zeta, rmax => r_max, rho0 => rho0, eps0 => eps0,
             eps_l => eps_l, eps_v => eps_v, sigma => sigma, tau => tau, radius => radius,
             max_outer => max_outer, inner_max_iter => inner_max_iter, mu0 => mu0_policy);
        c
    }
}

/// Parses `1,2,5` and ranges like `1-3` (inclusive).
pub fn parse_list<T>(text: &str) -> Result<Vec<T>, String>
where
    T: std::str::FromStr + TryFrom<u64>,
    T::Err: std::fmt::Display,
{
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-').filter(|(a, _)| !a.is_empty()) {
            let lo: u64 = a.parse().map_err(|e| format!("{part}: {e}"))?;
            let hi: u64 = b.parse().map_err(|e| format!("{part}: {e}"))?;
            if lo > hi {
                return Err(format!("empty range {part}"));
            }
            for v in lo..=hi {
                out.push(T::try_from(v).map_err(|_| format!("{v} out of range"))?);
            }
        } else {
            out.push(part.parse().map_err(|e| format!("{part}: {e}"))?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}
