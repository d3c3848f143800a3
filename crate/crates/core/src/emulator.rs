//! A fitted constrained emulator in the user's input units.

use nalgebra::DVector;

use crate::basis::KnotGrid;
use crate::config::{DomainTransform, MethodChoice, RunConfig, AUTO_MIN_ACCEPTANCE, AUTO_PROBE};
use crate::error::{CgpError, Result};
use crate::kernel::KernelSpec;
use crate::model::{DesignData, FiniteDimModel};
use crate::posterior::{GridOperator, PredictionGrid};
use crate::qp::{reformulate, solve_reduced, QpSolution};
use crate::tmvn::{
    probe_acceptance, sample_gibbs, sample_rejection_from_mode, ConditionedGaussian, Polyhedron, SampleBatch,
    SamplerMethod,
};

#[derive(Debug, Clone)]
pub struct Emulator {
    config: RunConfig,
    transform: DomainTransform,
    kernel: KernelSpec,
    inputs: Vec<Vec<f64>>,
    data: DesignData,
    model: FiniteDimModel,
    cond: ConditionedGaussian,
    polyhedron: Polyhedron,
    mode: QpSolution,
}

impl Emulator {
    /// Builds the model and solves for the mode. `inputs` are in the
    /// configured domain's units.
    pub fn fit(config: RunConfig, inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let transform = config.transform()?;
        let d = config.dim();
        let mut unit = Vec::with_capacity(inputs.len());
        for x in &inputs {
            if x.len() != d {
                return Err(CgpError::DimensionMismatch { expected: d, got: x.len() });
            }
            unit.push(transform.to_unit(x)?);
        }
        let data = DesignData::new(unit, outputs)?;
        let kernel = transform.scale_kernel(&config.kernel);
        let grids = config
            .subdivisions
            .resolve(d, "subdivisions")?
            .into_iter()
            .map(KnotGrid::uniform)
            .collect::<Result<Vec<_>>>()?;
        let kind = config.constraint.to_kind()?;
        let model = FiniteDimModel::build(&kernel, &grids, &data, &kind, config.model_options())?;
        let polyhedron = Polyhedron::from_system(model.inequality());
        let reduced = reformulate(
            model.gamma(),
            model.design_matrix(),
            model.equality_rhs(),
            &polyhedron.matrix,
            &polyhedron.rhs,
            config.jitter,
        )?;
        let mode = solve_reduced(&reduced)?;
        let cond = ConditionedGaussian::from_whitened(reduced.whitened, model.design_matrix());
        Ok(Emulator {
            config,
            transform,
            kernel,
            inputs,
            data,
            model,
            cond,
            polyhedron,
            mode,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn transform(&self) -> &DomainTransform {
        &self.transform
    }

    /// The kernel with length-scales on `[0, 1]^d`.
    pub fn unit_kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn unit_data(&self) -> &DesignData {
        &self.data
    }

    pub fn model(&self) -> &FiniteDimModel {
        &self.model
    }

    pub fn conditioned(&self) -> &ConditionedGaussian {
        &self.cond
    }

    pub fn polyhedron(&self) -> &Polyhedron {
        &self.polyhedron
    }

    pub fn mode(&self) -> &QpSolution {
        &self.mode
    }

    /// `ξ_I`.
    pub fn kriging_coefficients(&self) -> &DVector<f64> {
        self.cond.mean()
    }

    /// The configured evaluation grid on `[0, 1]^d`, with the design
    /// coordinates merged into every axis.
    pub fn default_grid(&self) -> Result<PredictionGrid> {
        PredictionGrid::uniform(&self.config.grid_resolution()?, self.data.inputs())
    }

    /// Grid points in input units.
    pub fn grid_points(&self, grid: &PredictionGrid) -> Vec<Vec<f64>> {
        grid.points().iter().map(|u| self.transform.from_unit(u)).collect()
    }

    pub fn unit_points(&self, points: &[Vec<f64>]) -> Result<PredictionGrid> {
        let unit = points
            .iter()
            .map(|x| self.transform.to_unit(x))
            .collect::<Result<Vec<_>>>()?;
        PredictionGrid::from_points(unit)
    }

    pub fn operator(&self, grid: &PredictionGrid) -> Result<GridOperator> {
        GridOperator::new(&self.model, grid)
    }

    /// The inequality mode at points in input units.
    pub fn mode_at(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.operator(&self.unit_points(points)?)?.apply(self.mode.minimizer.as_slice())
    }

    /// The kriging mean at points in input units.
    pub fn kriging_mean_at(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.operator(&self.unit_points(points)?)?.apply(self.cond.mean().as_slice())
    }

    /// Draws coefficient vectors with the configured sampler and `seed`.
    pub fn sample(&self, seed: u64, n_samples: usize) -> Result<SampleBatch> {
        let section = &self.config.sampler;
        let method = match section.method {
            MethodChoice::Rejection => SamplerMethod::RejectionFromMode,
            MethodChoice::Gibbs => SamplerMethod::Gibbs,
            MethodChoice::Auto => {
                let rate = probe_acceptance(&self.cond, &self.mode.minimizer, &self.polyhedron, seed, AUTO_PROBE)?;
                if rate < AUTO_MIN_ACCEPTANCE {
                    log::info!("rejection acceptance {rate:.2e} is below {AUTO_MIN_ACCEPTANCE:e}; using Gibbs");
                    SamplerMethod::Gibbs
                } else {
                    SamplerMethod::RejectionFromMode
                }
            }
        };
        let mut cfg = section.with_method(method);
        cfg.seed = seed;
        cfg.n_samples = n_samples;
        match method {
            SamplerMethod::RejectionFromMode => {
                sample_rejection_from_mode(&self.cond, &self.mode.minimizer, &self.polyhedron, &cfg)
            }
            SamplerMethod::Gibbs => sample_gibbs(&self.cond, &self.mode.minimizer, &self.polyhedron, &cfg),
        }
    }
}
