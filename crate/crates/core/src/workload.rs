//! Layer and tile arithmetic.
//!
//! Everything here is a pure function of a [`LayerShape`] and a [`TileConfig`]:
//! how a layer is cut into processing passes, how much data every pass moves,
//! how long the MAC array is busy, and how much on-chip SRAM the tiles need.
//!
//! Passes are ordered by the across-tile loop nest `b, e, f, m, c` with the
//! input-channel loop innermost, so an output tile is complete after
//! `ceil(C / TC)` consecutive passes.

use serde::{Deserialize, Serialize};

use crate::error::{DimensionError, TileError};

/// Pipeline-fill latency of the MAC array, in cycles.
pub const DEFAULT_PIPELINE_FILL: u64 = 8;

/// Dimensions of one convolutional layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    pub batch: u32,
    pub in_channels: u32,
    pub out_channels: u32,
    pub in_height: u32,
    pub in_width: u32,
    pub filter_height: u32,
    pub filter_width: u32,
    pub out_height: u32,
    pub out_width: u32,
    pub stride: u32,
    /// Zero padding on every border. Padded pixels are never fetched from DRAM.
    #[serde(default)]
    pub padding: u32,
}

/// Computes `(E, F)` for a padding-free convolution.
pub fn derive_output_dims(
    in_height: u32,
    in_width: u32,
    filter_height: u32,
    filter_width: u32,
    stride: u32,
) -> Result<(u32, u32), DimensionError> {
    derive_output_dims_padded(in_height, in_width, filter_height, filter_width, stride, 0)
}

pub fn derive_output_dims_padded(
    in_height: u32,
    in_width: u32,
    filter_height: u32,
    filter_width: u32,
    stride: u32,
    padding: u32,
) -> Result<(u32, u32), DimensionError> {
    if stride == 0 {
        return Err(DimensionError::ZeroStride);
    }
    let axis = |input: u32, filter: u32, axis: &'static str| {
        let padded = input + 2 * padding;
        if filter == 0 || input == 0 {
            return Err(DimensionError::Zero(axis));
        }
        if filter > padded {
            return Err(DimensionError::FilterLargerThanInput { axis, input: padded, filter });
        }
        if !(padded - filter).is_multiple_of(stride) {
            return Err(DimensionError::NotDivisible { axis, input: padded, filter, stride });
        }
        Ok((padded - filter) / stride + 1)
    };
    Ok((axis(in_height, filter_height, "height")?, axis(in_width, filter_width, "width")?))
}

impl LayerShape {
    /// Builds a padding-free layer, deriving the output dimensions.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        batch: u32,
        in_channels: u32,
        out_channels: u32,
        in_height: u32,
        in_width: u32,
        filter_height: u32,
        filter_width: u32,
        stride: u32,
    ) -> Result<Self, DimensionError> {
        Self::with_padding(
            batch,
            in_channels,
            out_channels,
            in_height,
            in_width,
            filter_height,
            filter_width,
            stride,
            0,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_padding(
        batch: u32,
        in_channels: u32,
        out_channels: u32,
        in_height: u32,
        in_width: u32,
        filter_height: u32,
        filter_width: u32,
        stride: u32,
        padding: u32,
    ) -> Result<Self, DimensionError> {
        let (out_height, out_width) =
            derive_output_dims_padded(in_height, in_width, filter_height, filter_width, stride, padding)?;
        let layer = Self {
            batch,
            in_channels,
            out_channels,
            in_height,
            in_width,
            filter_height,
            filter_width,
            out_height,
            out_width,
            stride,
            padding,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Third convolutional layer of AlexNet: 256 → 384 channels over a
    /// 13×13 map, stored with its one-pixel halo as a 15×15 input.
    pub fn alexnet_conv3(batch: u32) -> Self {
        Self::new(batch, 256, 384, 15, 15, 3, 3, 1).expect("valid preset")
    }

    /// First convolutional layer of AlexNet: 227×227×3 input, 11×11 filters, stride 4.
    pub fn alexnet_conv1(batch: u32) -> Self {
        Self::new(batch, 3, 96, 227, 227, 11, 11, 4).expect("valid preset")
    }

    pub fn validate(&self) -> Result<(), DimensionError> {
        let fields = [
            ("batch", self.batch),
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("in_height", self.in_height),
            ("in_width", self.in_width),
            ("filter_height", self.filter_height),
            ("filter_width", self.filter_width),
            ("out_height", self.out_height),
            ("out_width", self.out_width),
            ("stride", self.stride),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(DimensionError::Zero(name));
            }
        }
        let (e, f) = derive_output_dims_padded(
            self.in_height,
            self.in_width,
            self.filter_height,
            self.filter_width,
            self.stride,
            self.padding,
        )?;
        if (e, f) != (self.out_height, self.out_width) {
            return Err(DimensionError::OutputMismatch { expected: (e, f), actual: (self.out_height, self.out_width) });
        }
        Ok(())
    }

    /// Multiply-accumulate operations in the whole layer.
    pub fn mac_count(&self) -> u64 {
        [
            self.batch,
            self.in_channels,
            self.out_channels,
            self.out_height,
            self.out_width,
            self.filter_height,
            self.filter_width,
        ]
        .iter()
        .map(|&v| v as u64)
        .product()
    }

    /// Arithmetic operations (one multiply and one add per MAC).
    pub fn ops(&self) -> u64 {
        2 * self.mac_count()
    }
}

/// Tile sizes and MAC-array unroll factors of one design point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileConfig {
    pub tb: u32,
    pub tc: u32,
    pub tm: u32,
    pub te: u32,
    pub tf: u32,
    pub um: u32,
    pub uc: u32,
}

impl TileConfig {
    /// A tile whose unroll factors equal its channel tile sizes.
    pub fn constrained(tb: u32, tc: u32, tm: u32, te: u32, tf: u32) -> Self {
        Self { tb, tc, tm, te, tf, um: tm, uc: tc }
    }

    pub fn is_constrained(&self) -> bool {
        self.um == self.tm && self.uc == self.tc
    }

    /// MAC units in the array.
    pub fn mac_units(&self) -> u64 {
        self.um as u64 * self.uc as u64
    }

    /// Checks the tile against a layer.
    ///
    /// An unroll factor must divide its tile size, except when the tile
    /// already spans the whole layer dimension and is smaller than the
    /// unroll factor; the array then runs partially filled.
    pub fn validate(&self, layer: &LayerShape) -> Result<(), TileError> {
        let bounds = [
            ("TB", self.tb, layer.batch),
            ("TC", self.tc, layer.in_channels),
            ("TM", self.tm, layer.out_channels),
            ("TE", self.te, layer.out_height),
            ("TF", self.tf, layer.out_width),
        ];
        for (name, value, max) in bounds {
            if value == 0 || value > max {
                return Err(TileError::OutOfRange { name, value, max });
            }
        }
        let unroll =
            [("UM", self.um, "TM", self.tm, layer.out_channels), ("UC", self.uc, "TC", self.tc, layer.in_channels)];
        for (uname, u, tname, t, dim) in unroll {
            if u == 0 {
                return Err(TileError::OutOfRange { name: uname, value: u, max: t });
            }
            let partial_whole_layer = t < u && t == dim;
            if t % u != 0 && !partial_whole_layer {
                return Err(TileError::UnrollMismatch { unroll: uname, tile: tname, u, t });
            }
        }
        Ok(())
    }
}

fn ceil_div(a: u32, b: u32) -> u32 {
    a.div_ceil(b)
}

/// Number of input rows (or columns) a tile of `out` outputs needs, ignoring borders.
pub fn halo_extent(out: u32, stride: u32, filter: u32) -> u32 {
    (out - 1) * stride + filter
}

/// Summary of the pass decomposition for nominal (full) tiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassPlan {
    pub pass_count: u64,
    pub ifm_pixels_per_pass: u64,
    pub w_weights_per_pass: u64,
    pub ofm_pixels_per_store: u64,
    pub ofm_store_period: u32,
    pub compute_cycles_per_pass: u64,
}

/// Tile-grid dimensions: how many tiles along each of `b, e, f, m, c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileGrid {
    pub nb: u32,
    pub ne: u32,
    pub nf: u32,
    pub nm: u32,
    pub nc: u32,
}

impl TileGrid {
    pub fn new(layer: &LayerShape, tile: &TileConfig) -> Self {
        Self {
            nb: ceil_div(layer.batch, tile.tb),
            ne: ceil_div(layer.out_height, tile.te),
            nf: ceil_div(layer.out_width, tile.tf),
            nm: ceil_div(layer.out_channels, tile.tm),
            nc: ceil_div(layer.in_channels, tile.tc),
        }
    }

    pub fn pass_count(&self) -> u64 {
        [self.nb, self.ne, self.nf, self.nm, self.nc].iter().map(|&v| v as u64).product()
    }

    /// Number of output tiles (each stored once).
    pub fn output_tiles(&self) -> u64 {
        self.pass_count() / self.nc as u64
    }
}

/// Origin and clamped extent of the tile processed by one pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassTile {
    pub pass_index: u64,
    pub b0: u32,
    pub c0: u32,
    pub m0: u32,
    pub e0: u32,
    pub f0: u32,
    pub tb: u32,
    pub tc: u32,
    pub tm: u32,
    pub te: u32,
    pub tf: u32,
    /// Index of the output tile this pass accumulates into.
    pub output_tile: u64,
    pub first_channel_tile: bool,
    pub last_channel_tile: bool,
}

/// Inclusive-exclusive range of input rows or columns fetched for a tile,
/// after clipping the halo against the padded border.
pub fn input_span(out0: u32, out_len: u32, stride: u32, filter: u32, padding: u32, input: u32) -> (u32, u32) {
    let lo = (out0 * stride) as i64 - padding as i64;
    let hi = ((out0 + out_len - 1) * stride + filter) as i64 - padding as i64;
    let lo = lo.clamp(0, input as i64) as u32;
    let hi = hi.clamp(0, input as i64) as u32;
    (lo, hi)
}

impl PassTile {
    pub fn ifm_rows(&self, layer: &LayerShape) -> (u32, u32) {
        input_span(self.e0, self.te, layer.stride, layer.filter_height, layer.padding, layer.in_height)
    }

    pub fn ifm_cols(&self, layer: &LayerShape) -> (u32, u32) {
        input_span(self.f0, self.tf, layer.stride, layer.filter_width, layer.padding, layer.in_width)
    }

    pub fn ifm_amount(&self, layer: &LayerShape) -> u64 {
        let (r0, r1) = self.ifm_rows(layer);
        let (c0, c1) = self.ifm_cols(layer);
        self.tb as u64 * self.tc as u64 * (r1 - r0) as u64 * (c1 - c0) as u64
    }

    pub fn weight_amount(&self, layer: &LayerShape) -> u64 {
        self.tc as u64 * self.tm as u64 * layer.filter_height as u64 * layer.filter_width as u64
    }

    pub fn ofm_amount(&self) -> u64 {
        self.tb as u64 * self.tm as u64 * self.te as u64 * self.tf as u64
    }
}

/// Decodes a pass index into its tile, using the `b, e, f, m, c` loop order.
pub fn pass_tile(layer: &LayerShape, tile: &TileConfig, pass_index: u64) -> PassTile {
    let grid = TileGrid::new(layer, tile);
    let mut rest = pass_index;
    let ci = (rest % grid.nc as u64) as u32;
    rest /= grid.nc as u64;
    let mi = (rest % grid.nm as u64) as u32;
    rest /= grid.nm as u64;
    let fi = (rest % grid.nf as u64) as u32;
    rest /= grid.nf as u64;
    let ei = (rest % grid.ne as u64) as u32;
    rest /= grid.ne as u64;
    let bi = rest as u32;
    debug_assert!(bi < grid.nb, "pass index out of range");

    let clamp = |i: u32, t: u32, dim: u32| (i * t, t.min(dim - i * t));
    let (b0, tb) = clamp(bi, tile.tb, layer.batch);
    let (c0, tc) = clamp(ci, tile.tc, layer.in_channels);
    let (m0, tm) = clamp(mi, tile.tm, layer.out_channels);
    let (e0, te) = clamp(ei, tile.te, layer.out_height);
    let (f0, tf) = clamp(fi, tile.tf, layer.out_width);
    PassTile {
        pass_index,
        b0,
        c0,
        m0,
        e0,
        f0,
        tb,
        tc,
        tm,
        te,
        tf,
        output_tile: pass_index / grid.nc as u64,
        first_channel_tile: ci == 0,
        last_channel_tile: ci + 1 == grid.nc,
    }
}

/// MAC-array busy time of one pass with the given (possibly clamped) extent.
pub fn compute_cycles(layer: &LayerShape, tile: &TileConfig, pass: &PassTile, pipeline_fill: u64) -> u64 {
    layer.filter_height as u64
        * layer.filter_width as u64
        * pass.tb as u64
        * pass.te as u64
        * pass.tf as u64
        * pass.tc.div_ceil(tile.uc) as u64
        * pass.tm.div_ceil(tile.um) as u64
        + pipeline_fill
}

/// Nominal input-feature-map tile size in pixels.
pub fn ifm_tile_size(layer: &LayerShape, tile: &TileConfig) -> u64 {
    tile.tb as u64
        * tile.tc as u64
        * halo_extent(tile.te, layer.stride, layer.filter_height) as u64
        * halo_extent(tile.tf, layer.stride, layer.filter_width) as u64
}

pub fn weight_tile_size(layer: &LayerShape, tile: &TileConfig) -> u64 {
    tile.tc as u64 * tile.tm as u64 * layer.filter_height as u64 * layer.filter_width as u64
}

pub fn ofm_tile_size(tile: &TileConfig) -> u64 {
    tile.tb as u64 * tile.tm as u64 * tile.te as u64 * tile.tf as u64
}

/// Decomposes a layer into processing passes for nominal tiles.
pub fn plan_passes(layer: &LayerShape, tile: &TileConfig) -> PassPlan {
    plan_passes_with_fill(layer, tile, DEFAULT_PIPELINE_FILL)
}

pub fn plan_passes_with_fill(layer: &LayerShape, tile: &TileConfig, pipeline_fill: u64) -> PassPlan {
    let grid = TileGrid::new(layer, tile);
    let r = layer.filter_height as u64;
    let s = layer.filter_width as u64;
    let compute = r
        * s
        * tile.tb as u64
        * tile.te as u64
        * tile.tf as u64
        * tile.tc.div_ceil(tile.uc) as u64
        * tile.tm.div_ceil(tile.um) as u64
        + pipeline_fill;
    PassPlan {
        pass_count: grid.pass_count(),
        ifm_pixels_per_pass: ifm_tile_size(layer, tile),
        w_weights_per_pass: weight_tile_size(layer, tile),
        ofm_pixels_per_store: ofm_tile_size(tile),
        ofm_store_period: grid.nc,
        compute_cycles_per_pass: compute,
    }
}

/// On-chip SRAM needed by a tile, in pixels plus weights, with double buffering.
pub fn buffer_footprint(layer: &LayerShape, tile: &TileConfig) -> u64 {
    2 * (ifm_tile_size(layer, tile) + weight_tile_size(layer, tile) + ofm_tile_size(tile))
}

/// Per-layer totals of everything the DMACs move.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficTotals {
    pub ifm: u64,
    pub weights: u64,
    pub ofm: u64,
}

impl TrafficTotals {
    pub fn total(&self) -> u64 {
        self.ifm + self.weights + self.ofm
    }
}

/// Sums the clamped communication amounts over every pass.
pub fn layer_traffic(layer: &LayerShape, tile: &TileConfig) -> TrafficTotals {
    let grid = TileGrid::new(layer, tile);
    let mut totals = TrafficTotals::default();
    for p in 0..grid.pass_count() {
        let pt = pass_tile(layer, tile, p);
        totals.ifm += pt.ifm_amount(layer);
        totals.weights += pt.weight_amount(layer);
        if pt.last_channel_tile {
            totals.ofm += pt.ofm_amount();
        }
    }
    totals
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_layer() -> LayerShape {
        // 12x12 input, 3x3 filters → 10x10 outputs.
        LayerShape::new(1, 12, 12, 12, 12, 3, 3, 1).unwrap()
    }

    #[test]
    fn output_dims_examples() {
        assert_eq!(derive_output_dims(15, 15, 3, 3, 1).unwrap(), (13, 13));
        assert_eq!(derive_output_dims(7, 5, 7, 5, 1).unwrap(), (1, 1));
        assert_eq!(derive_output_dims(227, 227, 11, 11, 4).unwrap().0, 55);
    }

    #[test]
    fn output_dims_rejects_non_divisible() {
        assert!(matches!(derive_output_dims(16, 15, 3, 3, 2), Err(DimensionError::NotDivisible { .. })));
        assert!(derive_output_dims(2, 2, 3, 3, 1).is_err());
    }

    #[test]
    fn small_layer_pass_plan() {
        let layer = small_layer();
        let tile = TileConfig::constrained(1, 3, 4, 5, 5);
        let plan = plan_passes(&layer, &tile);
        assert_eq!(plan.pass_count, 48);
        assert_eq!(plan.ofm_store_period, 4);
    }

    #[test]
    fn small_layer_pass_amounts() {
        let layer = LayerShape::alexnet_conv3(1);
        let tile = TileConfig::constrained(1, 2, 64, 6, 13);
        let plan = plan_passes(&layer, &tile);
        assert_eq!(plan.ifm_pixels_per_pass, 240);
        assert_eq!(plan.w_weights_per_pass, 1152);
        assert_eq!(plan.ofm_pixels_per_store, 64 * 6 * 13);
        assert_eq!(plan.compute_cycles_per_pass, 9 * 6 * 13 + DEFAULT_PIPELINE_FILL);
    }

    #[test]
    fn footprint_examples() {
        let unit = LayerShape::new(1, 1, 1, 1, 1, 1, 1, 1).unwrap();
        assert_eq!(buffer_footprint(&unit, &TileConfig::constrained(1, 1, 1, 1, 1)), 6);
        let layer = LayerShape::alexnet_conv3(1);
        let tile = TileConfig::constrained(1, 2, 64, 6, 13);
        assert_eq!(buffer_footprint(&layer, &tile), 12768);
    }

    #[test]
    fn store_period_one_when_single_channel_tile() {
        let layer = small_layer();
        let tile = TileConfig::constrained(1, 12, 4, 5, 5);
        assert_eq!(plan_passes(&layer, &tile).ofm_store_period, 1);
        assert!(pass_tile(&layer, &tile, 0).last_channel_tile);
    }

    #[test]
    fn edge_tiles_are_clamped() {
        let layer = LayerShape::alexnet_conv3(1);
        let tile = TileConfig::constrained(1, 6, 21, 7, 13);
        let grid = TileGrid::new(&layer, &tile);
        assert_eq!(grid.nc, 43);
        let last = pass_tile(&layer, &tile, grid.pass_count() - 1);
        assert_eq!(last.tc, 256 - 42 * 6);
        assert_eq!(last.tm, 384 - 18 * 21);
        assert_eq!(last.te, 13 - 7);
        assert!(last.last_channel_tile);
    }

    #[test]
    fn unroll_validation() {
        let layer = LayerShape::alexnet_conv1(1);
        // TC = C = 3 below UC = 6: partially filled array is allowed.
        let t = TileConfig { tb: 1, tc: 3, tm: 48, te: 5, tf: 5, um: 16, uc: 6 };
        assert!(t.validate(&layer).is_ok());
        let bad = TileConfig { tm: 40, ..t };
        assert!(matches!(bad.validate(&layer), Err(TileError::UnrollMismatch { .. })));
        let too_big = TileConfig { tb: 2, ..t };
        assert!(matches!(too_big.validate(&layer), Err(TileError::OutOfRange { .. })));
    }

    #[test]
    fn constrained_compute_formula() {
        let layer = small_layer();
        let tile = TileConfig::constrained(1, 3, 4, 5, 5);
        let pt = pass_tile(&layer, &tile, 0);
        assert_eq!(compute_cycles(&layer, &tile, &pt, 8), 9 * 25 + 8);
        let unconstrained = TileConfig { um: 2, uc: 3, ..tile };
        assert_eq!(compute_cycles(&layer, &unconstrained, &pt, 8), 9 * 25 * 2 + 8);
    }

    #[test]
    fn padding_reduces_boundary_loads() {
        let layer = LayerShape::with_padding(1, 1, 1, 13, 13, 3, 3, 1, 1).unwrap();
        assert_eq!((layer.out_height, layer.out_width), (13, 13));
        let tile = TileConfig::constrained(1, 1, 1, 6, 13);
        let first = pass_tile(&layer, &tile, 0);
        // rows -1..7 clipped to 0..7, all 13 columns
        assert_eq!(first.ifm_amount(&layer), 7 * 13);
    }
}
