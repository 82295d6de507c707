#pragma once

#include <torch/torch.h>

#include <filesystem>

namespace vvp::data {

/// Bank of single-digit glyph images, [N, G, G] float32 in [0,1] with values
/// on the u8 grid (multiples of 1/255).
struct GlyphBank {
    torch::Tensor glyphs;

    int64_t size() const { return glyphs.size(0); }
    int64_t glyph_size() const { return glyphs.size(1); }
    torch::Tensor glyph(int64_t i) const { return glyphs[i]; }
};

/// Procedurally rasterized bank of 100 digit glyphs (10 styles per digit,
/// 28x28). Deterministic; lets tests and demos run without external data.
GlyphBank builtin_glyph_bank();

/// Loads glyphs from an IDX image file (the common handwritten-digit format,
/// magic 0x00000803). Values are normalized to [0,1].
GlyphBank load_idx_images(const std::filesystem::path& path, int64_t max_images = -1);

/// Returns a bank resized to `size` x `size` pixels, re-quantized to the u8
/// grid. `size` == current size returns the input unchanged.
GlyphBank scale_bank(const GlyphBank& bank, int64_t size);

}  // namespace vvp::data
