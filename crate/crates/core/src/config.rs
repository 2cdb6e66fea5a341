//! JSON experiment configuration.
//!
//! A config names a model (family kind, coefficients, boxes, grid
//! resolution), the parameter, initial distributions, horizons, trajectory
//! counts, probe settings, and the master seed. The command-line front end
//! works at `f64`.

use crate::error::{HmmError, Result};
use crate::measures::{BoxBounds, GridMeasure, ParameterPoint};
use crate::models::{
    ConjugateEmission, FiniteModel, GaussianComponent, MixtureModel, ModelFamily, Poly, PolyTerm,
    TruncatedStateSpaceModel, WeightAffine,
};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSpec {
    #[serde(default)]
    pub constant: f64,
    pub theta_coefs: Vec<f64>,
    pub x_coefs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyTermSpec {
    pub coef: f64,
    #[serde(default)]
    pub theta_pows: Vec<u32>,
    #[serde(default)]
    pub x_pows: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelConfig {
    Finite {
        transition: Vec<Vec<f64>>,
        emission: Vec<Vec<f64>>,
        #[serde(default)]
        transition_coupling: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default)]
        emission_coupling: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default)]
        param_box: Option<Vec<[f64; 2]>>,
        #[serde(default)]
        delta_model: Option<f64>,
        #[serde(default)]
        conjugate_emission: bool,
    },
    Mixture {
        state_bounds: Vec<[f64; 2]>,
        state_resolution: Vec<usize>,
        obs_bounds: Vec<[f64; 2]>,
        obs_resolution: Vec<usize>,
        components_x: Vec<GaussianSpec>,
        components_y: Vec<GaussianSpec>,
        weights_x: Vec<WeightSpec>,
        weights_y: Vec<WeightSpec>,
        param_box: Vec<[f64; 2]>,
        delta_model: f64,
        #[serde(default)]
        conjugate_emission: bool,
    },
    StateSpace {
        state_bounds: Vec<[f64; 2]>,
        state_resolution: Vec<usize>,
        obs_bounds: Vec<[f64; 2]>,
        obs_resolution: Vec<usize>,
        drift: Vec<Vec<PolyTermSpec>>,
        state_gain: Vec<Vec<PolyTermSpec>>,
        observation_map: Vec<Vec<PolyTermSpec>>,
        observation_gain: Vec<Vec<PolyTermSpec>>,
        param_box: Vec<[f64; 2]>,
        delta_model: f64,
        #[serde(default)]
        conjugate_emission: bool,
    },
}

fn to_bounds(spec: &[[f64; 2]]) -> Result<BoxBounds<f64>> {
    BoxBounds::new(
        spec.iter().map(|b| b[0]).collect(),
        spec.iter().map(|b| b[1]).collect(),
    )
}

fn to_polys(spec: &[Vec<PolyTermSpec>]) -> Vec<Poly<f64>> {
    spec.iter()
        .map(|terms| Poly {
            terms: terms
                .iter()
                .map(|t| PolyTerm {
                    coef: t.coef,
                    theta_pows: t.theta_pows.clone(),
                    x_pows: t.x_pows.clone(),
                })
                .collect(),
        })
        .collect()
}

impl ModelConfig {
    pub fn build(&self) -> Result<Arc<dyn ModelFamily<f64>>> {
        let (model, conjugate): (Arc<dyn ModelFamily<f64>>, bool) = match self {
            ModelConfig::Finite {
                transition,
                emission,
                transition_coupling,
                emission_coupling,
                param_box,
                delta_model,
                conjugate_emission,
            } => {
                let n = transition.len();
                let m = emission.first().map_or(0, |r| r.len());
                let zero3 = |rows: usize, cols: usize, d: usize| {
                    vec![vec![vec![0.0; d]; cols]; rows]
                };
                let pb = match param_box {
                    Some(b) => to_bounds(b)?,
                    None => BoxBounds::new(vec![-0.1], vec![0.1])?,
                };
                let d = pb.dim();
                let tc = transition_coupling.clone().unwrap_or_else(|| zero3(n, n, d));
                let ec = emission_coupling.clone().unwrap_or_else(|| zero3(n, m, d));
                let model = FiniteModel::from_probs(
                    transition.clone(),
                    emission.clone(),
                    tc,
                    ec,
                    pb,
                    delta_model.unwrap_or(0.05),
                )?;
                (model, *conjugate_emission)
            }
            ModelConfig::Mixture {
                state_bounds,
                state_resolution,
                obs_bounds,
                obs_resolution,
                components_x,
                components_y,
                weights_x,
                weights_y,
                param_box,
                delta_model,
                conjugate_emission,
            } => {
                let comp = |specs: &[GaussianSpec]| {
                    specs
                        .iter()
                        .map(|s| GaussianComponent {
                            mean: s.mean.clone(),
                            sd: s.sd.clone(),
                        })
                        .collect::<Vec<_>>()
                };
                let weights = |specs: &[WeightSpec]| {
                    specs
                        .iter()
                        .map(|s| WeightAffine {
                            constant: s.constant,
                            theta_coefs: s.theta_coefs.clone(),
                            x_coefs: s.x_coefs.clone(),
                        })
                        .collect::<Vec<_>>()
                };
                let model = MixtureModel::new(
                    to_bounds(state_bounds)?,
                    state_resolution,
                    to_bounds(obs_bounds)?,
                    obs_resolution,
                    comp(components_x),
                    comp(components_y),
                    weights(weights_x),
                    weights(weights_y),
                    to_bounds(param_box)?,
                    *delta_model,
                )?;
                (model, *conjugate_emission)
            }
            ModelConfig::StateSpace {
                state_bounds,
                state_resolution,
                obs_bounds,
                obs_resolution,
                drift,
                state_gain,
                observation_map,
                observation_gain,
                param_box,
                delta_model,
                conjugate_emission,
            } => {
                let model = TruncatedStateSpaceModel::new(
                    to_bounds(state_bounds)?,
                    state_resolution,
                    to_bounds(obs_bounds)?,
                    obs_resolution,
                    to_polys(drift),
                    to_polys(state_gain),
                    to_polys(observation_map),
                    to_polys(observation_gain),
                    to_bounds(param_box)?,
                    *delta_model,
                )?;
                (model, *conjugate_emission)
            }
        };
        Ok(if conjugate {
            ConjugateEmission::new(model)
        } else {
            model
        })
    }
}

/// Initial-distribution specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    Uniform,
    Dirac { at: Vec<f64> },
    Masses { masses: Vec<f64> },
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Uniform
    }
}

impl InitSpec {
    pub fn build(&self, model: &dyn ModelFamily<f64>) -> Result<GridMeasure<f64>> {
        let space = model.state_space().clone();
        match self {
            InitSpec::Uniform => Ok(GridMeasure::uniform(space)),
            InitSpec::Dirac { at } => GridMeasure::dirac(space, at),
            InitSpec::Masses { masses } => GridMeasure::from_masses(space, masses),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default = "default_probe_order")]
    pub order: usize,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
}

fn default_probe_order() -> usize {
    32
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            radius: None,
            order: default_probe_order(),
            direction: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub init: InitSpec,
    /// Second initialization for paired experiments (forgetting,
    /// λ-independence); defaults to a point mass at the first grid node.
    #[serde(default)]
    pub init_b: Option<InitSpec>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_num_traj")]
    pub num_traj: usize,
    #[serde(default = "default_num_paths")]
    pub num_paths: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Imaginary part of the parameter for complex-continuation runs.
    #[serde(default)]
    pub eta_im: Option<Vec<f64>>,
    /// Observation quantization bins per dimension for the joint kernel.
    #[serde(default)]
    pub obs_bins: Option<usize>,
    /// Imaginary perturbation size for complex-measure forgetting pairs.
    #[serde(default)]
    pub complex_perturbation: Option<f64>,
    /// Parameter of the data-generating model for `loglik`; defaults to
    /// `theta` (matched data).
    #[serde(default)]
    pub true_theta: Option<Vec<f64>>,
    #[serde(default)]
    pub true_init: Option<InitSpec>,
    #[serde(default)]
    pub probe: ProbeConfig,
}

fn default_horizons() -> Vec<usize> {
    vec![8, 16, 32, 64]
}

fn default_num_traj() -> usize {
    10_000
}

fn default_num_paths() -> usize {
    200
}

fn default_n_max() -> usize {
    100
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| HmmError::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HmmError::Config(
                "horizons must be non-empty and strictly increasing".into(),
            ));
        }
        if self.num_traj == 0 || self.num_paths == 0 || self.n_max == 0 {
            return Err(HmmError::Config(
                "num_traj, num_paths and n_max must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn theta_point(&self, model: &dyn ModelFamily<f64>) -> Result<ParameterPoint<f64>> {
        if self.theta.len() != model.param_dim() {
            return Err(HmmError::Config(format!(
                "theta has {} coordinates, model expects {}",
                self.theta.len(),
                model.param_dim()
            )));
        }
        let bx = model.param_box();
        for (k, &t) in self.theta.iter().enumerate() {
            if t < bx.lower[k] || t > bx.upper[k] {
                return Err(HmmError::Config(format!(
                    "theta[{k}] = {t} outside the parameter box"
                )));
            }
        }
        Ok(ParameterPoint::real_point(&self.theta))
    }

    /// θ lifted by the configured imaginary part, when one is given.
    pub fn eta_point(&self, model: &dyn ModelFamily<f64>) -> Result<ParameterPoint<f64>> {
        let theta = self.theta_point(model)?;
        match &self.eta_im {
            None => Ok(theta),
            Some(im) => {
                if im.len() != self.theta.len() {
                    return Err(HmmError::Config("eta_im dimension mismatch".into()));
                }
                ParameterPoint::complex_point(&self.theta, im)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_config_roundtrip() {
        let text = r#"{
            "model": {
                "family": "finite",
                "transition": [[0.9, 0.1], [0.1, 0.9]],
                "emission": [[0.9, 0.1], [0.2, 0.8]]
            },
            "theta": [0.0],
            "master_seed": 42
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let model = cfg.model.build().unwrap();
        assert_eq!(model.param_dim(), 1);
        let theta = cfg.theta_point(model.as_ref()).unwrap();
        assert!(theta.is_real());
        assert_eq!(cfg.master_seed, 42);
        assert_eq!(cfg.horizons, vec![8, 16, 32, 64]);
    }

    #[test]
    fn malformed_config_is_reported() {
        let err = ExperimentConfig::from_json("{ \"model\": 3 }").unwrap_err();
        match err {
            HmmError::Config(msg) => assert!(msg.contains("line"), "message: {msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn theta_outside_box_rejected() {
        let text = r#"{
            "model": {
                "family": "finite",
                "transition": [[0.5, 0.5], [0.5, 0.5]],
                "emission": [[0.6, 0.4], [0.4, 0.6]]
            },
            "theta": [5.0]
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let model = cfg.model.build().unwrap();
        assert!(cfg.theta_point(model.as_ref()).is_err());
    }
}
