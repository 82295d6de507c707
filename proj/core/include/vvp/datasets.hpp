#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vvp/glyphs.hpp"

namespace vvp::data {

/// A full pixel sequence, frames [T, H, W, C] float32 in [0,1]. H and W must
/// be divisible by 4 (encoder shape contract), T >= 2.
struct VideoSequence {
    torch::Tensor frames;
    std::string source_id;

    void validate() const;
    int64_t frames_count() const { return frames.size(0); }
};

/// One bouncing digit: glyph image plus top-left position and velocity in
/// pixels / pixels-per-frame. The glyph box always stays inside the canvas.
struct DigitState {
    torch::Tensor glyph;  // [G, G]
    double x = 0.0;
    double y = 0.0;
    double vx = 0.0;
    double vy = 0.0;

    double speed() const { return std::hypot(vx, vy); }
};

/// Advances one frame: position moves by velocity; crossing a canvas border
/// reflects the position and flips that velocity component. Speed magnitude
/// is preserved exactly.
DigitState step_digit(const DigitState& state, int64_t canvas_h, int64_t canvas_w);

struct MovingMnistConfig {
    int64_t n_sequences = 1;
    int64_t t_total = 20;
    int64_t n_digits = 2;
    int64_t canvas_h = 64;
    int64_t canvas_w = 64;
    int64_t digit_size = 28;  // glyphs are rescaled to this size
    double v_min = 2.0;
    double v_max = 5.0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

/// Deterministic bouncing-digit synthesis. Digits are drawn uniformly from
/// the bank, placed uniformly at valid positions, directions uniform on the
/// unit circle, speeds uniform in [v_min, v_max]; overlaps are composited by
/// elementwise max. Sequence k depends only on (seed, k), so generation can
/// be split across workers without changing the output.
std::vector<VideoSequence> generate_moving_mnist(const MovingMnistConfig& cfg,
                                                 const GlyphBank& bank);

/// Paper-default geometry (64x64 canvas, 28px digits, speeds [2,5]).
std::vector<VideoSequence> generate_moving_mnist(int64_t n_sequences, int64_t t_total,
                                                 int64_t n_digits, std::uint64_t seed,
                                                 const GlyphBank& bank);

// ---------------------------------------------------------------------------
// On-disk format: <dir>/manifest.json + <dir>/data.bin. Frames are stored as
// uint8 (x255) raw THWC tensors back to back; the manifest records byte
// offsets, geometry and an fnv1a64 checksum of data.bin.
// ---------------------------------------------------------------------------

struct DatasetManifest {
    int version = 1;
    std::string dtype = "u8";
    std::string shape_order = "THWC";
    int64_t count = 0;
    std::array<int64_t, 3> frame_size{0, 0, 0};  // H, W, C
    std::uint64_t seed = 0;
    std::vector<int64_t> offsets;
    std::vector<int64_t> lengths;  // frames per sequence
    std::vector<std::string> source_ids;
    std::string checksum;  // fnv1a64 of data.bin, hex
    nlohmann::json generation;

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

/// Writes sequences to `dir` (created if needed). Frames are quantized to the
/// u8 grid; sequences already on that grid round-trip bitwise.
void write_dataset(const std::vector<VideoSequence>& seqs, const std::filesystem::path& dir,
                   std::uint64_t seed = 0, nlohmann::json generation = {});

/// Random-access reader. The manifest is validated on open (offsets, sizes,
/// checksum); reads are const and safe to issue concurrently.
class DatasetReader {
public:
    static DatasetReader open(const std::filesystem::path& dir);
    ~DatasetReader();
    DatasetReader(DatasetReader&&) noexcept;
    DatasetReader& operator=(DatasetReader&&) noexcept;
    DatasetReader(const DatasetReader&) = delete;
    DatasetReader& operator=(const DatasetReader&) = delete;

    int64_t size() const { return manifest_.count; }
    const DatasetManifest& manifest() const { return manifest_; }
    VideoSequence sequence(int64_t index) const;

    /// All sequences as one [N, T, H, W, C] u8 tensor (uniform lengths only).
    torch::Tensor all_frames_u8() const;

private:
    DatasetReader() = default;
    DatasetManifest manifest_;
    std::filesystem::path dir_;
    int fd_ = -1;
};

/// Convenience: open + load everything.
std::vector<VideoSequence> read_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Folder ingestion (KTH-style): a directory of frame images is one sequence;
// a directory of such directories is a list of sequences.
// ---------------------------------------------------------------------------

struct FolderLoadOptions {
    int64_t target_h = 64;
    int64_t target_w = 64;
    bool grayscale = true;
    /// When set, only sequences whose name contains person<NN> with
    /// person_min <= NN <= person_max are kept.
    std::optional<std::pair<int, int>> person_range;
};

std::vector<VideoSequence> load_video_folder(const std::filesystem::path& path,
                                             const FolderLoadOptions& opts);

}  // namespace vvp::data
