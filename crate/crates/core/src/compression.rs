//! Segment compression functions and their exact error measures.
//!
//! A function is evaluated on the segment-local index `1..=len`; a global
//! index `i` inside a segment starting at `s` maps to `i - s + 1`.

use thiserror::Error;

use crate::scalar::{compensated_sum, Scalar};
use crate::series::ErrorMeasures;

#[derive(Debug, Error, PartialEq)]
pub enum CompressionError {
    #[error("cannot fit or measure an empty segment")]
    EmptyInput,
    #[error("local index {index} outside segment of length {len}")]
    IndexOutOfSegment { index: u64, len: u64 },
    #[error("unknown function kind tag {0}")]
    UnknownKind(u8),
    #[error("descriptor truncated")]
    Truncated,
}

/// Which family of functions summarizes a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FunctionKind {
    /// Piecewise aggregate approximation: the segment mean.
    Constant,
    /// Piecewise linear representation: the least-squares line.
    Linear,
}

impl FunctionKind {
    pub fn tag(self) -> u8 {
        match self {
            FunctionKind::Constant => 0,
            FunctionKind::Linear => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, CompressionError> {
        match tag {
            0 => Ok(FunctionKind::Constant),
            1 => Ok(FunctionKind::Linear),
            t => Err(CompressionError::UnknownKind(t)),
        }
    }
}

/// Parameters of a fitted segment function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionDescriptor<S> {
    /// `f(i) = b`
    Constant { b: S },
    /// `f(i) = a * i + b`, `i` the 1-based local index.
    Linear { a: S, b: S },
}

impl<S: Scalar> FunctionDescriptor<S> {
    pub fn kind(&self) -> FunctionKind {
        match self {
            FunctionDescriptor::Constant { .. } => FunctionKind::Constant,
            FunctionDescriptor::Linear { .. } => FunctionKind::Linear,
        }
    }

    /// Value at local index `i`, without bounds checking.
    #[inline]
    pub fn value_at(&self, i: u64) -> S {
        match *self {
            FunctionDescriptor::Constant { b } => b,
            FunctionDescriptor::Linear { a, b } => a * S::of_u64(i) + b,
        }
    }

    /// Value at local index `i` of a segment with `len` points.
    pub fn eval(&self, i: u64, len: u64) -> Result<S, CompressionError> {
        if i == 0 || i > len {
            return Err(CompressionError::IndexOutOfSegment { index: i, len });
        }
        Ok(self.value_at(i))
    }

    /// Largest `|f(i)|` over `1..=len`. Linear functions peak at an end.
    pub fn max_abs(&self, len: u64) -> S {
        match *self {
            FunctionDescriptor::Constant { b } => b.abs(),
            FunctionDescriptor::Linear { .. } => self.value_at(1).abs().max(self.value_at(len).abs()),
        }
    }

    pub fn coefficients(&self) -> Vec<S> {
        match *self {
            FunctionDescriptor::Constant { b } => vec![b],
            FunctionDescriptor::Linear { a, b } => vec![a, b],
        }
    }

    pub fn encoded_len(&self) -> usize {
        1 + 8 * self.coefficients().len()
    }

    /// Kind byte followed by little-endian `f64` coefficients.
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.push(self.kind().tag());
        for c in self.coefficients() {
            out.extend_from_slice(&c.as_f64().to_le_bytes());
        }
    }

    /// Decodes one descriptor from the front of `bytes`; returns it and the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), CompressionError> {
        let (&tag, rest) = bytes.split_first().ok_or(CompressionError::Truncated)?;
        let kind = FunctionKind::from_tag(tag)?;
        let n = match kind {
            FunctionKind::Constant => 1,
            FunctionKind::Linear => 2,
        };
        if rest.len() < 8 * n {
            return Err(CompressionError::Truncated);
        }
        let coef = |k: usize| {
            let mut raw = [0u8; 8];
            raw.copy_from_slice(&rest[8 * k..8 * k + 8]);
            S::lit(f64::from_le_bytes(raw))
        };
        let desc = match kind {
            FunctionKind::Constant => FunctionDescriptor::Constant { b: coef(0) },
            FunctionKind::Linear => FunctionDescriptor::Linear { a: coef(0), b: coef(1) },
        };
        Ok((desc, 1 + 8 * n))
    }
}

/// Fits `kind` to `data`: the mean for constants, ordinary least squares
/// over the local index for lines.
pub fn fit<S: Scalar>(kind: FunctionKind, data: &[S]) -> Result<FunctionDescriptor<S>, CompressionError> {
    if data.is_empty() {
        return Err(CompressionError::EmptyInput);
    }
    let n = S::of_u64(data.len() as u64);
    let mean = compensated_sum(data.iter().copied()) / n;
    Ok(match kind {
        FunctionKind::Constant => FunctionDescriptor::Constant { b: mean },
        FunctionKind::Linear if data.len() == 1 => FunctionDescriptor::Linear { a: S::zero(), b: data[0] },
        FunctionKind::Linear => {
            let m = data.len() as u64;
            let x_mean = S::of_u64(m + 1) / S::lit(2.0);
            // sum over x = 1..m of (x - x_mean)^2 = m (m^2 - 1) / 12
            let sxx = S::of_u64(m) * (S::of_u64(m) * S::of_u64(m) - S::one()) / S::lit(12.0);
            let sxy = compensated_sum(
                data.iter().enumerate().map(|(k, &y)| (S::of_u64(k as u64 + 1) - x_mean) * (y - mean)),
            );
            let a = sxy / sxx;
            FunctionDescriptor::Linear { a, b: mean - a * x_mean }
        }
    })
}

/// Exact `(L, d*, f*)` of `data` against `f`.
pub fn measure<S: Scalar>(data: &[S], f: &FunctionDescriptor<S>) -> Result<ErrorMeasures<S>, CompressionError> {
    if data.is_empty() {
        return Err(CompressionError::EmptyInput);
    }
    let l1 = compensated_sum(data.iter().enumerate().map(|(k, &d)| (d - f.value_at(k as u64 + 1)).abs()));
    let d_star = data.iter().fold(S::zero(), |m, d| m.max(d.abs()));
    Ok(ErrorMeasures::new(l1, d_star, f.max_abs(data.len() as u64)))
}

/// L1 residual only; the split search calls this many times.
pub(crate) fn l1_residual<S: Scalar>(data: &[S], f: &FunctionDescriptor<S>) -> S {
    let mut acc = S::zero();
    for (k, &d) in data.iter().enumerate() {
        acc += (d - f.value_at(k as u64 + 1)).abs();
    }
    acc
}
