//! Problem instances: loading from files, synthetic generation, writing.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use otm_core::objectives::Objective;
use otm_core::synthetic::{CootProblem, GwProblem, LinearProblem, RobustProblem};
use otm_core::{Marginal, ProductManifold, SupportMask, TransportManifold};
use rand::Rng;

use crate::error::CliError;
use crate::io::{read_marginal, read_mask, read_matrix, write_marginal, write_matrix};

/// Cost matrices drawn for a synthetic robust problem when `--dims` gives none.
pub const DEFAULT_ROBUST_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProblemKind {
    Linear,
    Gw,
    Coot,
    Robust,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Linear => "linear",
            ProblemKind::Gw => "gw",
            ProblemKind::Coot => "coot",
            ProblemKind::Robust => "robust",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `MxN`, `MxNxK` (robust: K cost matrices) or `MxNxD1xD2` (coot).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims(pub Vec<usize>);

impl FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Result<Vec<usize>, _> = s.split(['x', 'X', ',']).map(|p| p.trim().parse::<usize>()).collect();
        match parts {
            Ok(v) if (2..=4).contains(&v.len()) && v.iter().all(|d| *d > 0) => Ok(Dims(v)),
            _ => Err(format!("expected positive dims like 4x5 or 20x30x5x4, got {s:?}")),
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

/// Input file locations. Unset paths fall back to conventional names inside
/// `dir` (`mu1.csv`, `cost.csv`, `cost_0.csv`, ...).
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub dir: Option<PathBuf>,
    pub mu1: Option<PathBuf>,
    pub mu2: Option<PathBuf>,
    pub nu1: Option<PathBuf>,
    pub nu2: Option<PathBuf>,
    pub cost: Option<PathBuf>,
    pub costs: Vec<PathBuf>,
    pub s1: Option<PathBuf>,
    pub s2: Option<PathBuf>,
    pub x: Option<PathBuf>,
    pub z: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub feature_mask: Option<PathBuf>,
}

impl Inputs {
    fn any_data(&self) -> bool {
        self.dir.is_some()
            || [
                &self.mu1, &self.mu2, &self.nu1, &self.nu2, &self.cost, &self.s1, &self.s2, &self.x, &self.z,
            ]
            .iter()
            .any(|p| p.is_some())
            || !self.costs.is_empty()
    }

    fn resolve(&self, explicit: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
        if let Some(p) = explicit {
            return Ok(p.clone());
        }
        match &self.dir {
            Some(dir) => {
                let p = dir.join(name);
                if p.is_file() {
                    Ok(p)
                } else {
                    Err(CliError::Setup(format!("missing input file {}", p.display())))
                }
            }
            None => Err(CliError::Setup(format!(
                "missing input {name} (pass it explicitly or via --input)"
            ))),
        }
    }

    fn robust_costs(&self) -> Result<Vec<PathBuf>, CliError> {
        if !self.costs.is_empty() {
            return Ok(self.costs.clone());
        }
        let Some(dir) = &self.dir else {
            return Err(CliError::Setup("robust problem needs --costs or --input".into()));
        };
        let found: Vec<PathBuf> = (0..)
            .map(|k| dir.join(format!("cost_{k}.csv")))
            .take_while(|p| p.is_file())
            .collect();
        if found.is_empty() {
            return Err(CliError::Setup(format!("no cost_0.csv in {}", dir.display())));
        }
        Ok(found)
    }
}

#[derive(Debug, Clone)]
pub enum ProblemData {
    Linear(LinearProblem),
    Gw(GwProblem),
    Coot(CootProblem),
    Robust(RobustProblem),
}

impl ProblemData {
    pub fn kind(&self) -> ProblemKind {
        match self {
            ProblemData::Linear(_) => ProblemKind::Linear,
            ProblemData::Gw(_) => ProblemKind::Gw,
            ProblemData::Coot(_) => ProblemKind::Coot,
            ProblemData::Robust(_) => ProblemKind::Robust,
        }
    }

    pub fn generate<R: Rng + ?Sized>(kind: ProblemKind, dims: &Dims, rng: &mut R) -> Result<Self, CliError> {
        let d = &dims.0;
        let need = |n: &[usize]| {
            if n.contains(&d.len()) {
                Ok(())
            } else {
                Err(CliError::Setup(format!(
                    "{kind} problems take dims with {n:?} parts, got {dims}"
                )))
            }
        };
        let data = match kind {
            ProblemKind::Linear => {
                need(&[2])?;
                ProblemData::Linear(LinearProblem::generate(rng, d[0], d[1]).map_err(CliError::setup)?)
            }
            ProblemKind::Gw => {
                need(&[2])?;
                ProblemData::Gw(GwProblem::generate(rng, d[0], d[1]).map_err(CliError::setup)?)
            }
            ProblemKind::Coot => {
                need(&[4])?;
                ProblemData::Coot(CootProblem::generate(rng, d[0], d[1], d[2], d[3]).map_err(CliError::setup)?)
            }
            ProblemKind::Robust => {
                need(&[2, 3])?;
                let count = d.get(2).copied().unwrap_or(DEFAULT_ROBUST_COUNT);
                ProblemData::Robust(RobustProblem::generate(rng, d[0], d[1], count).map_err(CliError::setup)?)
            }
        };
        Ok(data)
    }

    /// Reads the files for `kind`. Returns `None` when no data inputs were given.
    pub fn load(kind: ProblemKind, inputs: &Inputs) -> Result<Option<Self>, CliError> {
        if !inputs.any_data() {
            return Ok(None);
        }
        let marginal = |p: &Option<PathBuf>, name: &str| -> Result<Marginal, CliError> {
            read_marginal(&inputs.resolve(p, name)?)
        };
        let matrix = |p: &Option<PathBuf>, name: &str| read_matrix(&inputs.resolve(p, name)?);
        let mu1 = marginal(&inputs.mu1, "mu1.csv")?;
        let mu2 = marginal(&inputs.mu2, "mu2.csv")?;
        let data = match kind {
            ProblemKind::Linear => ProblemData::Linear(LinearProblem {
                mu1,
                mu2,
                cost: matrix(&inputs.cost, "cost.csv")?,
            }),
            ProblemKind::Gw => ProblemData::Gw(GwProblem {
                mu1,
                mu2,
                s1: matrix(&inputs.s1, "s1.csv")?,
                s2: matrix(&inputs.s2, "s2.csv")?,
            }),
            ProblemKind::Coot => ProblemData::Coot(CootProblem {
                mu1,
                mu2,
                nu1: marginal(&inputs.nu1, "nu1.csv")?,
                nu2: marginal(&inputs.nu2, "nu2.csv")?,
                x: matrix(&inputs.x, "x.csv")?,
                z: matrix(&inputs.z, "z.csv")?,
            }),
            ProblemKind::Robust => ProblemData::Robust(RobustProblem {
                mu1,
                mu2,
                costs: inputs
                    .robust_costs()?
                    .iter()
                    .map(|p| read_matrix(p))
                    .collect::<Result<_, _>>()?,
            }),
        };
        Ok(Some(data))
    }

    /// Writes the instance under the conventional names used by [`Inputs`].
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::new();
        let mut marginal = |name: &str, w: &Marginal| -> Result<(), CliError> {
            let p = dir.join(name);
            write_marginal(&p, w)?;
            written.push(p);
            Ok(())
        };
        let (mu1, mu2) = self.sample_marginals();
        marginal("mu1.csv", mu1)?;
        marginal("mu2.csv", mu2)?;
        if let ProblemData::Coot(c) = self {
            marginal("nu1.csv", &c.nu1)?;
            marginal("nu2.csv", &c.nu2)?;
        }
        let matrices: Vec<(String, &nalgebra::DMatrix<f64>)> = match self {
            ProblemData::Linear(p) => vec![("cost.csv".into(), &p.cost)],
            ProblemData::Gw(p) => vec![("s1.csv".into(), &p.s1), ("s2.csv".into(), &p.s2)],
            ProblemData::Coot(p) => vec![("x.csv".into(), &p.x), ("z.csv".into(), &p.z)],
            ProblemData::Robust(p) => p
                .costs
                .iter()
                .enumerate()
                .map(|(k, c)| (format!("cost_{k}.csv"), c))
                .collect(),
        };
        for (name, m) in matrices {
            let p = dir.join(name);
            write_matrix(&p, m)?;
            written.push(p);
        }
        Ok(written)
    }

    fn sample_marginals(&self) -> (&Marginal, &Marginal) {
        match self {
            ProblemData::Linear(p) => (&p.mu1, &p.mu2),
            ProblemData::Gw(p) => (&p.mu1, &p.mu2),
            ProblemData::Coot(p) => (&p.mu1, &p.mu2),
            ProblemData::Robust(p) => (&p.mu1, &p.mu2),
        }
    }

    /// Marginal pairs, one per coupling the objective takes.
    pub fn marginal_pairs(&self) -> Vec<(Marginal, Marginal)> {
        let (mu1, mu2) = self.sample_marginals();
        let mut out = vec![(mu1.clone(), mu2.clone())];
        if let ProblemData::Coot(c) = self {
            out.push((c.nu1.clone(), c.nu2.clone()));
        }
        out
    }

    pub fn objective(&self, temperature: f64) -> Result<Box<dyn Objective>, CliError> {
        let obj: Box<dyn Objective> = match self {
            ProblemData::Linear(p) => Box::new(p.objective().map_err(CliError::setup)?),
            ProblemData::Gw(p) => Box::new(p.objective().map_err(CliError::setup)?),
            ProblemData::Coot(p) => Box::new(p.objective().map_err(CliError::setup)?),
            ProblemData::Robust(p) => Box::new(p.objective(temperature).map_err(CliError::setup)?),
        };
        Ok(obj)
    }

    /// Product manifold over the couplings, with optional support masks for
    /// the first (sample) and second (feature) coupling.
    pub fn manifold(
        &self,
        mask: Option<SupportMask>,
        feature_mask: Option<SupportMask>,
    ) -> Result<ProductManifold, CliError> {
        let pairs = self.marginal_pairs();
        if feature_mask.is_some() && pairs.len() < 2 {
            return Err(CliError::Setup(format!(
                "--feature-mask applies to coot only, not {}",
                self.kind()
            )));
        }
        let masks = [mask, feature_mask];
        let components = pairs
            .into_iter()
            .zip(masks)
            .map(|((a, b), mask)| match mask {
                Some(mask) => TransportManifold::masked(a, b, mask),
                None => TransportManifold::new(a, b),
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::setup)?;
        ProductManifold::new(components).map_err(CliError::setup)
    }
}

pub fn load_masks(inputs: &Inputs) -> Result<(Option<SupportMask>, Option<SupportMask>), CliError> {
    let mask = inputs.mask.as_deref().map(read_mask).transpose()?;
    let feature = inputs.feature_mask.as_deref().map(read_mask).transpose()?;
    Ok((mask, feature))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dims_parse() {
        assert_eq!("4x5".parse::<Dims>().unwrap(), Dims(vec![4, 5]));
        assert_eq!("20X30x5x4".parse::<Dims>().unwrap(), Dims(vec![20, 30, 5, 4]));
        assert!("4".parse::<Dims>().is_err());
        assert!("4x0".parse::<Dims>().is_err());
        assert!("axb".parse::<Dims>().is_err());
    }

    #[test]
    fn written_instances_load_back() {
        let dir = tempfile::tempdir().unwrap();
        for (kind, dims) in [
            (ProblemKind::Linear, "3x4"),
            (ProblemKind::Gw, "3x4"),
            (ProblemKind::Coot, "3x4x2x5"),
            (ProblemKind::Robust, "3x4x2"),
        ] {
            let sub = dir.path().join(kind.name());
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let data = ProblemData::generate(kind, &dims.parse().unwrap(), &mut rng).unwrap();
            data.write(&sub).unwrap();
            let inputs = Inputs {
                dir: Some(sub),
                ..Inputs::default()
            };
            let back = ProblemData::load(kind, &inputs).unwrap().unwrap();
            let x = data.objective(0.1).unwrap();
            let y = back.objective(0.1).unwrap();
            let pm = data.manifold(None, None).unwrap();
            let p = pm.product_coupling().unwrap();
            let plans = otm_core::objectives::plans(&p);
            assert_eq!(x.cost(&plans).to_bits(), y.cost(&plans).to_bits(), "{kind}");
            assert_eq!(data.marginal_pairs(), back.marginal_pairs());
        }
    }

    #[test]
    fn wrong_dims_arity_is_a_setup_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = ProblemData::generate(ProblemKind::Coot, &"3x4".parse().unwrap(), &mut rng).unwrap_err();
        assert!(matches!(err, CliError::Setup(_)));
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let inputs = Inputs {
            dir: Some(dir.path().to_path_buf()),
            ..Inputs::default()
        };
        let err = ProblemData::load(ProblemKind::Linear, &inputs).unwrap_err();
        assert!(err.to_string().contains("mu1.csv"), "{err}");
    }
}
