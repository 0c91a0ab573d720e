use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{flush_below_floor, EmissionGrid, TransformId, TransformedGrid, EMISSION_MAX};
use crate::neuralnet::{Model, Tensor4};
use crate::resample::{bicubic_resample, clamp_non_negative, Factor, Plane, ResampleSpec};
use crate::transforms::{InvertibleTransform, Preprocessor};

/// Grids per network forward pass at inference.
pub const INFERENCE_BATCH: usize = 16;

/// Anything that maps LR grids to HR grids.
pub trait Upscaler {
    fn name(&self) -> String;

    fn alpha(&self) -> usize;

    fn upscale(&self, lr: &[&EmissionGrid]) -> Result<Vec<EmissionGrid>>;
}

/// Brings a physical field into the grid envelope: negatives and values
/// below the floor become zero, values above the ceiling are capped.
pub(crate) fn to_emission_grid(like: &EmissionGrid, h: usize, w: usize, mut values: Vec<f64>) -> Result<EmissionGrid> {
    for v in values.iter_mut() {
        *v = v.clamp(0.0, EMISSION_MAX);
    }
    flush_below_floor(&mut values);
    like.with_values(h, w, values)
}

/// Stacks equally sized grids into a `[n, 1, h, w]` tensor.
pub fn stack_transformed(items: &[TransformedGrid]) -> Result<Tensor4> {
    let (h, w) = (items[0].height(), items[0].width());
    let mut data = Vec::with_capacity(items.len() * h * w);
    for t in items {
        if (t.height(), t.width()) != (h, w) {
            return Err(Error::Shape("grids in a batch differ in size".into()));
        }
        data.extend_from_slice(t.values());
    }
    Tensor4::new([items.len(), 1, h, w], data)
}

/// The learned pipeline `clamp≥0(T⁻¹(clamp[0,1](N(T(lr)))))`.
#[derive(Clone)]
pub struct Pipeline {
    pub model: Arc<Model>,
    pub preprocessor: Arc<dyn Preprocessor>,
    pub label: String,
}

impl Pipeline {
    pub fn new(model: Model, preprocessor: Arc<dyn Preprocessor>, label: impl Into<String>) -> Self {
        Self {
            model: Arc::new(model),
            preprocessor,
            label: label.into(),
        }
    }

    /// Network output in the transformed domain, clamped to `[0, 1]`, plus
    /// the transform that produced each input.
    pub fn predict_transformed(
        &self,
        lr: &[&EmissionGrid],
    ) -> Result<Vec<(TransformedGrid, Arc<dyn InvertibleTransform>)>> {
        let mut out = Vec::with_capacity(lr.len());
        for chunk in lr.chunks(INFERENCE_BATCH) {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut transforms = Vec::with_capacity(chunk.len());
            for g in chunk {
                let t = self.preprocessor.transform_for(g)?;
                inputs.push(t.apply(g)?);
                transforms.push(t);
            }
            let y = self.model.forward(&stack_transformed(&inputs)?)?;
            let (h, w) = (y.height(), y.width());
            for (b, t) in transforms.into_iter().enumerate() {
                let vals = y.item(b).iter().map(|v| v.clamp(0.0, 1.0)).collect();
                out.push((TransformedGrid::new(h, w, vals, TransformId::Raw)?, t));
            }
        }
        Ok(out)
    }
}

impl Upscaler for Pipeline {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn alpha(&self) -> usize {
        self.model.alpha()
    }

    fn upscale(&self, lr: &[&EmissionGrid]) -> Result<Vec<EmissionGrid>> {
        self.predict_transformed(lr)?
            .into_iter()
            .zip(lr)
            .map(|((tg, t), g)| {
                let (h, w) = (tg.height(), tg.width());
                let phys = t.invert(&tg, g.meta())?;
                to_emission_grid(g, h, w, phys.into_values())
            })
            .collect()
    }
}

/// Super-resolves one grid with `model` and `preprocessor`.
pub fn super_resolve(
    model: &Model,
    preprocessor: Arc<dyn Preprocessor>,
    lr: &EmissionGrid,
) -> Result<EmissionGrid> {
    let p = Pipeline::new(model.clone(), preprocessor, "");
    Ok(p.upscale(&[lr])?.remove(0))
}

/// Plain bicubic enlargement, the reference baseline.
#[derive(Debug, Clone, Copy)]
pub struct Bicubic {
    pub alpha: usize,
}

impl Upscaler for Bicubic {
    fn name(&self) -> String {
        "bicubic".into()
    }

    fn alpha(&self) -> usize {
        self.alpha
    }

    fn upscale(&self, lr: &[&EmissionGrid]) -> Result<Vec<EmissionGrid>> {
        let spec = ResampleSpec::new(Factor::up(self.alpha as u32));
        lr.iter()
            .map(|g| {
                let (h, w) = g.dims();
                let up = clamp_non_negative(&bicubic_resample(&Plane::new(h, w, g.values().to_vec())?, &spec)?);
                to_emission_grid(g, up.height, up.width, up.data)
            })
            .collect()
    }
}
