use crate::error::{ensure, Result};

/// Which backbone layer each attribute-encoder block feeds. Indices are
/// zero-based: `layer_of(h)` is the layer that receives block `h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMapping {
    layers: Vec<usize>,
    backbone_depth: usize,
}

impl BlockMapping {
    pub fn layer_of(&self, block: usize) -> usize {
        self.layers[block]
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn backbone_depth(&self) -> usize {
        self.backbone_depth
    }

    /// Encoder block injected before backbone layer `layer`, if any.
    pub fn block_for_layer(&self, layer: usize) -> Option<usize> {
        self.layers.iter().position(|&l| l == layer)
    }
}

/// Evenly spaced monotone mapping: with one-based numbering block `h` feeds
/// layer `ceil(h · L / H)`, so the last block always feeds the last layer
/// and `H = L` gives the identity.
pub fn map_blocks_to_layers(encoder_depth: usize, backbone_depth: usize) -> Result<BlockMapping> {
    ensure!(encoder_depth >= 1, InvalidArgument, "attribute encoder needs at least one block");
    ensure!(
        encoder_depth <= backbone_depth,
        InvalidArgument,
        "{encoder_depth} encoder blocks cannot map into {backbone_depth} backbone layers"
    );
    let layers = (1..=encoder_depth)
        .map(|h| (h * backbone_depth).div_ceil(encoder_depth) - 1)
        .collect();
    Ok(BlockMapping {
        layers,
        backbone_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_tables() {
        assert_eq!(map_blocks_to_layers(4, 4).unwrap().layers(), &[0, 1, 2, 3]);
        assert_eq!(map_blocks_to_layers(2, 4).unwrap().layers(), &[1, 3]);
        assert_eq!(map_blocks_to_layers(1, 4).unwrap().layers(), &[3]);
        assert_eq!(map_blocks_to_layers(3, 4).unwrap().layers(), &[1, 2, 3]);
    }

    #[test]
    fn invalid_depths() {
        assert!(map_blocks_to_layers(5, 4).is_err());
        assert!(map_blocks_to_layers(0, 4).is_err());
    }

    #[test]
    fn strictly_increasing_and_ends_at_last_layer() {
        for l in 1..=12 {
            for h in 1..=l {
                let m = map_blocks_to_layers(h, l).unwrap();
                assert!(m.layers().windows(2).all(|w| w[0] < w[1]));
                assert_eq!(*m.layers().last().unwrap(), l - 1);
            }
        }
    }
}
