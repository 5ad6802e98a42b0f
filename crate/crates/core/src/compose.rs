//! Union of the view-independent and view-dependent renders.
//!
//! Ink is combined by multiplying transparencies, so an all-white image is
//! the identity and the operation is commutative and associative.

use crate::canvas::ImageBuffer;
use crate::error::Result;

pub fn composite(ind: &ImageBuffer, dep: &ImageBuffer) -> Result<ImageBuffer> {
    ind.check_dims(dep)?;
    let data = ind.data.iter().zip(&dep.data).map(|(a, b)| a * b).collect();
    Ok(ImageBuffer {
        width: ind.width,
        height: ind.height,
        data,
    })
}

/// Returns `(grad_ind, grad_dep)` for upstream gradient `grad_out`.
pub fn composite_backward(
    ind: &ImageBuffer,
    dep: &ImageBuffer,
    grad_out: &ImageBuffer,
) -> Result<(ImageBuffer, ImageBuffer)> {
    ind.check_dims(dep)?;
    ind.check_dims(grad_out)?;
    let scale = |other: &ImageBuffer| ImageBuffer {
        width: ind.width,
        height: ind.height,
        data: grad_out.data.iter().zip(&other.data).map(|(g, o)| g * o).collect(),
    };
    Ok((scale(dep), scale(ind)))
}
