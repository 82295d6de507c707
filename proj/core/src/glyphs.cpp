#include "vvp/glyphs.hpp"

#include <opencv2/imgproc.hpp>

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "vvp/common.hpp"

namespace vvp::data {

namespace {

using Point = std::array<double, 2>;
using Stroke = std::vector<Point>;

/// Closed elliptical stroke sampled as a polyline.
Stroke ellipse(double cx, double cy, double rx, double ry, int n = 24) {
    Stroke s;
    for (int i = 0; i <= n; ++i) {
        const double th = 2.0 * M_PI * i / n;
        s.push_back({cx + rx * std::sin(th), cy - ry * std::cos(th)});
    }
    return s;
}

/// Digit skeletons in a unit box, x right, y down.
std::vector<Stroke> digit_skeleton(int digit) {
    switch (digit) {
        case 0:
            return {ellipse(0.50, 0.50, 0.27, 0.40)};
        case 1:
            return {{{0.32, 0.26}, {0.54, 0.10}, {0.54, 0.90}}};
        case 2:
            return {{{0.22, 0.30},
                     {0.30, 0.13},
                     {0.50, 0.09},
                     {0.70, 0.14},
                     {0.76, 0.32},
                     {0.60, 0.55},
                     {0.24, 0.90},
                     {0.78, 0.90}}};
        case 3:
            return {{{0.24, 0.16},
                     {0.48, 0.09},
                     {0.72, 0.19},
                     {0.72, 0.36},
                     {0.50, 0.48},
                     {0.74, 0.60},
                     {0.74, 0.79},
                     {0.50, 0.91},
                     {0.24, 0.83}}};
        case 4:
            return {{{0.62, 0.10}, {0.20, 0.62}, {0.82, 0.62}}, {{0.62, 0.10}, {0.62, 0.90}}};
        case 5:
            return {{{0.74, 0.10},
                     {0.28, 0.10},
                     {0.25, 0.45},
                     {0.55, 0.42},
                     {0.75, 0.56},
                     {0.75, 0.76},
                     {0.53, 0.91},
                     {0.26, 0.84}}};
        case 6:
            return {{{0.66, 0.10},
                     {0.42, 0.26},
                     {0.28, 0.54},
                     {0.28, 0.76},
                     {0.48, 0.91},
                     {0.70, 0.80},
                     {0.70, 0.60},
                     {0.50, 0.50},
                     {0.30, 0.60}}};
        case 7:
            return {{{0.22, 0.10}, {0.78, 0.10}, {0.46, 0.90}}};
        case 8:
            return {ellipse(0.50, 0.29, 0.21, 0.19), ellipse(0.50, 0.68, 0.25, 0.23)};
        case 9:
        default:
            return {ellipse(0.47, 0.31, 0.21, 0.21),
                    {{0.68, 0.31}, {0.67, 0.60}, {0.54, 0.90}}};
    }
}

double point_segment_distance(double px, double py, const Point& a, const Point& b) {
    const double dx = b[0] - a[0], dy = b[1] - a[1];
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - a[0]) * dx + (py - a[1]) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double qx = a[0] + t * dx, qy = a[1] + t * dy;
    return std::hypot(px - qx, py - qy);
}

torch::Tensor rasterize(const std::vector<Stroke>& strokes, int size, double thickness) {
    constexpr int kSupersample = 4;
    const int n = size * kSupersample;
    const double aa = 0.6 / size;  // ~0.6 final-resolution pixels of soft edge

    std::vector<float> hi(static_cast<std::size_t>(n) * n, 0.0f);
    for (int yy = 0; yy < n; ++yy) {
        const double py = (yy + 0.5) / n;
        for (int xx = 0; xx < n; ++xx) {
            const double px = (xx + 0.5) / n;
            double d = 1e9;
            for (const auto& stroke : strokes) {
                for (std::size_t i = 0; i + 1 < stroke.size(); ++i) {
                    d = std::min(d, point_segment_distance(px, py, stroke[i], stroke[i + 1]));
                }
            }
            double v = 0.0;
            if (d <= thickness) {
                v = 1.0;
            } else if (d <= thickness + aa) {
                v = (thickness + aa - d) / aa;
            }
            hi[static_cast<std::size_t>(yy) * n + xx] = static_cast<float>(v);
        }
    }

    auto out = torch::zeros({size, size}, torch::kFloat32);
    auto acc = out.accessor<float, 2>();
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            float sum = 0.0f;
            for (int sy = 0; sy < kSupersample; ++sy) {
                for (int sx = 0; sx < kSupersample; ++sx) {
                    sum += hi[static_cast<std::size_t>(y * kSupersample + sy) * n +
                              (x * kSupersample + sx)];
                }
            }
            acc[y][x] = sum / (kSupersample * kSupersample);
        }
    }
    return torch::round(out * 255.0f) / 255.0f;
}

std::vector<Stroke> jitter(const std::vector<Stroke>& strokes, Rng& rng) {
    const double slant = rng.uniform(-0.14, 0.14);
    const double scale = rng.uniform(0.88, 1.02);
    const double dx = rng.uniform(-0.03, 0.03);
    const double dy = rng.uniform(-0.03, 0.03);

    std::vector<Stroke> out;
    out.reserve(strokes.size());
    for (const auto& stroke : strokes) {
        Stroke s;
        s.reserve(stroke.size());
        for (const auto& p : stroke) {
            double x = p[0] + rng.uniform(-0.015, 0.015);
            double y = p[1] + rng.uniform(-0.015, 0.015);
            x += slant * (0.5 - y);               // shear
            x = 0.5 + (x - 0.5) * scale + dx;     // scale about the center
            y = 0.5 + (y - 0.5) * scale + dy;
            s.push_back({std::clamp(x, 0.07, 0.93), std::clamp(y, 0.07, 0.93)});
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

GlyphBank builtin_glyph_bank() {
    constexpr int kSize = 28;
    constexpr int kVariants = 10;
    std::vector<torch::Tensor> glyphs;
    glyphs.reserve(10 * kVariants);
    for (int digit = 0; digit < 10; ++digit) {
        const auto skeleton = digit_skeleton(digit);
        for (int v = 0; v < kVariants; ++v) {
            Rng rng(derive_seed(0x676c797068ULL, static_cast<std::uint64_t>(digit),
                                static_cast<std::uint64_t>(v)));
            const double thickness = rng.uniform(0.050, 0.075);
            glyphs.push_back(rasterize(jitter(skeleton, rng), kSize, thickness));
        }
    }
    return GlyphBank{torch::stack(glyphs)};
}

GlyphBank load_idx_images(const std::filesystem::path& path, int64_t max_images) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open glyph file: " + path.string());

    auto read_be32 = [&in, &path]() {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) {
            throw DataError("truncated IDX header in " + path.string());
        }
        return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
               (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
    };

    const auto magic = read_be32();
    if (magic != 0x00000803) {
        throw DataError("not an IDX image file (bad magic): " + path.string());
    }
    const int64_t count = read_be32();
    const int64_t rows = read_be32();
    const int64_t cols = read_be32();
    const int64_t n = (max_images > 0 && max_images < count) ? max_images : count;

    std::vector<unsigned char> buf(static_cast<std::size_t>(n * rows * cols));
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
        throw DataError("truncated IDX payload in " + path.string());
    }
    auto t = torch::from_blob(buf.data(), {n, rows, cols}, torch::kUInt8).clone();
    return GlyphBank{t.to(torch::kFloat32) / 255.0f};
}

GlyphBank scale_bank(const GlyphBank& bank, int64_t size) {
    if (size == bank.glyph_size()) return bank;
    if (size < 4) throw ContractError("scale_bank: glyph size must be >= 4");

    const int64_t n = bank.size();
    const int64_t g = bank.glyph_size();
    auto src = bank.glyphs.contiguous();
    auto out = torch::zeros({n, size, size}, torch::kFloat32);
    for (int64_t i = 0; i < n; ++i) {
        cv::Mat in_mat(static_cast<int>(g), static_cast<int>(g), CV_32F,
                       src[i].data_ptr<float>());
        cv::Mat out_mat(static_cast<int>(size), static_cast<int>(size), CV_32F,
                        out[i].data_ptr<float>());
        cv::resize(in_mat, out_mat, out_mat.size(), 0, 0, cv::INTER_AREA);
    }
    return GlyphBank{torch::round(out.clamp(0, 1) * 255.0f) / 255.0f};
}

}  // namespace vvp::data
