//! Equal-weight combination of covariance forecasts.

use nalgebra::DMatrix;

use super::{EstimateError, ModelId};

#[derive(Debug, Clone, PartialEq)]
pub struct Combined {
    pub sigma: DMatrix<f64>,
    pub used: Vec<ModelId>,
    pub missing: Vec<ModelId>,
}

/// Entrywise mean of the available inputs; `None` entries are recorded as
/// missing.
pub fn combine_parameters(inputs: &[(ModelId, Option<&DMatrix<f64>>)]) -> Result<Combined, EstimateError> {
    let available: Vec<(ModelId, &DMatrix<f64>)> =
        inputs.iter().filter_map(|(m, s)| s.map(|s| (*m, s))).collect();
    let Some((_, first)) = available.first() else {
        return Err(EstimateError::Degenerate("no component estimates to combine".into()));
    };
    let shape = first.shape();
    if available.iter().any(|(_, s)| s.shape() != shape) {
        return Err(EstimateError::Degenerate("component estimates differ in shape".into()));
    }
    let mut sum = DMatrix::zeros(shape.0, shape.1);
    for (_, s) in &available {
        sum += *s;
    }
    Ok(Combined {
        sigma: sum / available.len() as f64,
        used: available.iter().map(|(m, _)| *m).collect(),
        missing: inputs.iter().filter(|(_, s)| s.is_none()).map(|(m, _)| *m).collect(),
    })
}
