use super::MetricError;

/// Row-major binary pixel grid. One-bits are foreground.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

fn check_dims(width: u32, height: u32, len: usize) -> Result<usize, MetricError> {
    if width == 0 || height == 0 {
        return Err(MetricError::ZeroSize(width, height));
    }
    let expected = width as usize * height as usize;
    if len != expected {
        return Err(MetricError::Length {
            width,
            height,
            expected,
            actual: len,
        });
    }
    Ok(expected)
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, MetricError> {
        check_dims(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self, MetricError> {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn full(width: u32, height: u32) -> Result<Self, MetricError> {
        Self::new(width, height, vec![true; width as usize * height as usize])
    }

    /// Builds a mask from a predicate over `(x, y)`.
    pub fn from_fn(
        width: u32,
        height: u32,
        f: impl Fn(u32, u32) -> bool,
    ) -> Result<Self, MetricError> {
        check_dims(width, height, width as usize * height as usize)?;
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let idx = y as usize * self.width as usize + x as usize;
        self.bits[idx] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Same pixels as 0/1 probabilities.
    pub fn to_prob(&self) -> ProbMask {
        ProbMask {
            width: self.width,
            height: self.height,
            values: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub(crate) fn ensure_same_dims(&self, other_w: u32, other_h: u32) -> Result<(), MetricError> {
        if self.dims() != (other_w, other_h) {
            return Err(MetricError::DimensionMismatch {
                left_w: other_w,
                left_h: other_h,
                right_w: self.width,
                right_h: self.height,
            });
        }
        Ok(())
    }
}

/// Row-major per-pixel foreground probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl ProbMask {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, MetricError> {
        check_dims(width, height, values.len())?;
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(MetricError::Probability { index, value });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: u32, height: u32, p: f64) -> Result<Self, MetricError> {
        Self::new(width, height, vec![p; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Thresholds at `p >= cutoff`.
    pub fn binarize(&self, cutoff: f64) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.values.iter().map(|&p| p >= cutoff).collect(),
        }
    }
}
