//! Conditioning pack construction, grayscale guidance, and the attribute
//! encoder that feeds the pack into the velocity model.

mod encoder;
mod gray;
mod mapping;
mod pack;

pub use encoder::AttributeEncoder;
pub use gray::{to_grayscale_keyframe, LUMA};
pub use mapping::{map_blocks_to_layers, BlockMapping};
pub use pack::{
    build_pack, downsample_mask, ConditioningPack, PackInputs, PackMode, Segment, SegmentKind, TargetPlacement,
};

use crate::error::Result;
use crate::model::{Hints, Injection, InjectionRecord, VelocityModel};
use crate::{Mat, Scalar};

/// Velocity prediction with the attribute encoder live, recording the
/// injection term applied at each mapped layer.
pub fn inject_forward<S: Scalar>(
    model: &VelocityModel<S>,
    xt: &Mat<S>,
    pack: &ConditioningPack<S>,
    t: S,
    injection: Injection<S>,
) -> Result<(Mat<S>, Vec<InjectionRecord<S>>)> {
    let mut tape = crate::graph::Tape::new(model.params());
    let mut trace = Vec::new();
    let v = model.forward_on(&mut tape, xt, Hints::Live(pack), t, injection, Some(&mut trace))?;
    Ok((tape.value(v).clone(), trace))
}
