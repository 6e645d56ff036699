//! The learning-curve container shared by every estimator, and increment
//! (`δ(n, m) = τ(n) − τ(m)`) evaluation on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    ImpintRaw,
    ImpintSmoothed,
    Brie,
    Subex,
    Oracle,
}

impl Provenance {
    fn monotone(self) -> bool {
        matches!(self, Provenance::ImpintSmoothed | Provenance::Brie | Provenance::Subex)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: usize,
    pub value: f64,
    pub std_error: Option<f64>,
}

impl CurvePoint {
    pub fn new(m: usize, value: f64) -> Self {
        Self {
            m,
            value,
            std_error: None,
        }
    }
}

/// The LOOCV anchor of a bias-corrected curve. `base` keeps the smoothed
/// IMPINT values the shift was applied to, so increments can be taken on
/// them directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrieAnchor {
    pub size: usize,
    pub cv_error: f64,
    pub offset: f64,
    pub base: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    points: Vec<CurvePoint>,
    provenance: Provenance,
    anchor: Option<BrieAnchor>,
}

const MONO_TOL: f64 = 1e-12;

impl LearningCurve {
    pub fn new(points: Vec<CurvePoint>, provenance: Provenance) -> Result<Self> {
        if provenance == Provenance::Brie {
            return Err(Error::InvalidInput("use LearningCurve::brie for bias-corrected curves".into()));
        }
        check_sizes(&points)?;
        for pt in &points {
            if !(0.0..=1.0).contains(&pt.value) {
                return Err(Error::InvalidInput(format!("value {} at m={} outside [0, 1]", pt.value, pt.m)));
            }
        }
        if provenance.monotone() && points.windows(2).any(|w| w[1].value > w[0].value + MONO_TOL) {
            return Err(Error::InvalidInput(format!("{provenance:?} curve must be non-increasing")));
        }
        Ok(Self {
            points,
            provenance,
            anchor: None,
        })
    }

    /// Shift a smoothed IMPINT curve so its value at `anchor_size` equals
    /// `cv_error`. The anchor point is set to `cv_error` exactly.
    pub fn brie(smoothed: &LearningCurve, anchor_size: usize, cv_error: f64) -> Result<Self> {
        if smoothed.provenance != Provenance::ImpintSmoothed {
            return Err(Error::InvalidInput("BRIE shifts a smoothed IMPINT curve".into()));
        }
        let at = smoothed
            .index_of(anchor_size)
            .ok_or_else(|| Error::InvalidInput(format!("anchor size {anchor_size} not in curve")))?;
        let offset = cv_error - smoothed.points[at].value;
        let points = smoothed
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| CurvePoint {
                m: p.m,
                value: if i == at { cv_error } else { p.value + offset },
                std_error: p.std_error,
            })
            .collect();
        Ok(Self {
            points,
            provenance: Provenance::Brie,
            anchor: Some(BrieAnchor {
                size: anchor_size,
                cv_error,
                offset,
                base: smoothed.values(),
            }),
        })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn anchor(&self) -> Option<&BrieAnchor> {
        self.anchor.as_ref()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.m).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn index_of(&self, m: usize) -> Option<usize> {
        self.points.binary_search_by_key(&m, |p| p.m).ok()
    }

    /// Values as reported: clamped to `[0, 1]`, with a flag for clamped points.
    pub fn reported(&self) -> Vec<(CurvePoint, bool)> {
        self.points
            .iter()
            .map(|p| {
                let v = p.value.clamp(0.0, 1.0);
                (CurvePoint { value: v, ..*p }, v != p.value)
            })
            .collect()
    }

    /// Value at `m`, linearly interpolated between neighbours when `m` was
    /// not estimated directly. The flag reports interpolation.
    pub fn value_at(&self, m: usize) -> Result<(f64, bool)> {
        interpolate(&self.sizes(), &self.values(), m)
    }
}

fn check_sizes(points: &[CurvePoint]) -> Result<()> {
    if points.windows(2).any(|w| w[1].m <= w[0].m) {
        return Err(Error::InvalidInput("curve sizes must be strictly increasing".into()));
    }
    if points.iter().any(|p| !p.value.is_finite()) {
        return Err(Error::InvalidInput("curve values must be finite".into()));
    }
    Ok(())
}

fn interpolate(sizes: &[usize], values: &[f64], m: usize) -> Result<(f64, bool)> {
    let (Some(&lo), Some(&hi)) = (sizes.first(), sizes.last()) else {
        return Err(Error::InvalidInput("empty curve".into()));
    };
    if m < lo || m > hi {
        return Err(Error::OutOfRange { size: m, lo, hi });
    }
    match sizes.binary_search(&m) {
        Ok(i) => Ok((values[i], false)),
        Err(i) => {
            let (m0, m1) = (sizes[i - 1] as f64, sizes[i] as f64);
            let t = (m as f64 - m0) / (m1 - m0);
            Ok((values[i - 1] + t * (values[i] - values[i - 1]), true))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta {
    pub value: f64,
    /// At least one endpoint was interpolated.
    pub interpolated: bool,
}

/// `curve(n) − curve(m)`. Bias-corrected curves are differenced on their
/// unshifted base, so the anchor offset cancels exactly.
pub fn delta_estimate(curve: &LearningCurve, n: usize, m: usize) -> Result<Delta> {
    let sizes = curve.sizes();
    let values = match &curve.anchor {
        Some(a) => a.base.clone(),
        None => curve.values(),
    };
    let (vn, i1) = interpolate(&sizes, &values, n)?;
    let (vm, i2) = interpolate(&sizes, &values, m)?;
    Ok(Delta {
        value: vn - vm,
        interpolated: i1 || i2,
    })
}
