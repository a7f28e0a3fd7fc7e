//! Attribute encoder: transformer blocks over the conditioning pack whose
//! outputs are added into the backbone.

use rand::Rng;

use super::mapping::{map_blocks_to_layers, BlockMapping};
use super::pack::ConditioningPack;
use crate::error::{ensure, Result};
use crate::graph::{ParamStore, Tape, Var};
use crate::model::{gather, group_index, position_table, Block, Linear, ModelConfig};
use crate::{Mat, Scalar};

#[derive(Debug, Clone)]
pub struct AttributeEncoder {
    input: Linear,
    blocks: Vec<Block>,
    outs: Vec<Linear>,
    mapping: BlockMapping,
}

impl AttributeEncoder {
    /// Block `h` starts as a copy of the backbone block it feeds. Output
    /// projections start at zero so a fresh encoder leaves the backbone
    /// untouched.
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        config: &ModelConfig,
        backbone: &[Block],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mapping = map_blocks_to_layers(config.encoder_depth, backbone.len())?;
        let token_in = config.group * config.group * (config.latent_dim + 1);
        let input = Linear::init(store, "encoder.input", token_in, config.width, 1.0, rng);
        let blocks = mapping
            .layers()
            .iter()
            .enumerate()
            .map(|(h, &l)| Block::copy(store, &format!("encoder.block{h}"), &backbone[l]))
            .collect();
        let outs = (0..mapping.len())
            .map(|h| Linear::zeros(store, &format!("encoder.out{h}"), config.width, config.width))
            .collect();
        Ok(Self {
            input,
            blocks,
            outs,
            mapping,
        })
    }

    pub fn mapping(&self) -> &BlockMapping {
        &self.mapping
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// Pack tokens with the mask appended as one extra channel, grouped like
    /// the backbone input.
    pub fn pack_input<S: Scalar>(config: &ModelConfig, pack: &ConditioningPack<S>) -> Result<Mat<S>> {
        let d = config.latent_dim;
        ensure!(pack.dim == d, Shape, "pack width {} vs model latent dim {d}", pack.dim);
        let n = pack.token_count();
        let mut flat = Vec::with_capacity(n * (d + 1));
        for i in 0..n {
            flat.extend_from_slice(pack.tokens.row(i));
            flat.push(pack.mask[i]);
        }
        let g = config.group;
        let (gr, gc) = pack.grid;
        ensure!(
            gr % g == 0 && gc % g == 0,
            Shape,
            "latent grid {gr}x{gc} not divisible by group {g}"
        );
        let index = group_index(pack.frames(), pack.grid, d + 1, g);
        Ok(gather(&flat, &index, n / (g * g), g * g * (d + 1)))
    }

    /// One injection term per encoder block, restricted to the rows that
    /// line up with the source segment (and therefore with `x_t`).
    pub fn forward_on<S: Scalar>(
        &self,
        tape: &mut Tape<'_, S>,
        config: &ModelConfig,
        pack: &ConditioningPack<S>,
    ) -> Result<Vec<Var>> {
        let g = config.group;
        let grouped_grid = (pack.grid.0 / g, pack.grid.1 / g);
        let x = tape.constant(Self::pack_input(config, pack)?);
        let mut e = self.input.forward(tape, x)?;
        let positions: Vec<usize> = (0..pack.frames()).collect();
        let pos = tape.constant(position_table(&positions, grouped_grid, config.width));
        e = tape.add(e, pos)?;
        let per_frame = grouped_grid.0 * grouped_grid.1;
        let src = pack.source_segment();
        let mut hints = Vec::with_capacity(self.blocks.len());
        for (block, out) in self.blocks.iter().zip(&self.outs) {
            e = block.forward(tape, e, config.heads)?;
            let rows = tape.slice_rows(e, src.frame_start * per_frame, src.frames * per_frame)?;
            hints.push(out.forward(tape, rows)?);
        }
        Ok(hints)
    }
}
