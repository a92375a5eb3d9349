use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncated linear map between dB pathloss and unit-interval gray values.
///
/// Pathloss here is `P_rx - P_tx` in dB, so larger means stronger signal;
/// `max_pathloss` is the largest value found in the data and
/// `truncation` the level mapped to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossCodec {
    pub max_pathloss: f64,
    pub truncation: f64,
}

impl PathlossCodec {
    pub fn new(max_pathloss: f64, truncation: f64) -> Result<Self> {
        let codec = Self {
            max_pathloss,
            truncation,
        };
        codec.validate()?;
        Ok(codec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_pathloss.is_finite() && self.truncation.is_finite())
            || self.max_pathloss <= self.truncation
        {
            return Err(Error::Config(format!(
                "codec needs max_pathloss > truncation (got {} <= {})",
                self.max_pathloss, self.truncation
            )));
        }
        Ok(())
    }

    fn span(&self) -> f64 {
        self.max_pathloss - self.truncation
    }

    pub fn to_gray(&self, pathloss: f64) -> Result<f64> {
        if pathloss > self.max_pathloss {
            return Err(Error::PathlossAboveMax {
                pathloss,
                max: self.max_pathloss,
            });
        }
        Ok(((pathloss - self.truncation) / self.span()).max(0.0))
    }

    /// Inverse of [`to_gray`](Self::to_gray); exact only for pathloss in
    /// `[truncation, max_pathloss]`.
    pub fn from_gray(&self, gray: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&gray) {
            return Err(Error::Domain(format!("gray value {gray} outside [0, 1]")));
        }
        Ok(self.truncation + gray * self.span())
    }
}

impl Default for PathlossCodec {
    fn default() -> Self {
        Self {
            max_pathloss: 0.0,
            truncation: -100.0,
        }
    }
}
