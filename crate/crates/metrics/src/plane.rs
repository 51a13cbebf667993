use crate::{MetricError, Result};

/// Borrowed row-major 2-D map.
#[derive(Debug, Clone, Copy)]
pub struct Plane<'a> {
    pub data: &'a [f64],
    pub height: usize,
    pub width: usize,
}

impl<'a> Plane<'a> {
    pub fn new(data: &'a [f64], height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(MetricError::BadShape(format!(
                "{} values for a {height}x{width} map",
                data.len()
            )));
        }
        Ok(Self { data, height, width })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Validates a (prediction, ground truth) pair and returns the gt as booleans.
pub(crate) fn check_pair(pred: Plane<'_>, gt: Plane<'_>) -> Result<Vec<bool>> {
    if pred.height != gt.height || pred.width != gt.width {
        return Err(MetricError::BadShape(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    gt.data
        .iter()
        .map(|&g| {
            if g == 0.0 {
                Ok(false)
            } else if g == 1.0 {
                Ok(true)
            } else {
                Err(MetricError::BadMask(g))
            }
        })
        .collect()
}

/// Number of thresholds in `thresholds` (ascending) that `value` reaches.
#[inline]
pub(crate) fn level(thresholds: &[f64], value: f64) -> usize {
    thresholds.partition_point(|&t| t <= value)
}
