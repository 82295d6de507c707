#include "vvp/datasets.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>

#include "vvp/common.hpp"

namespace vvp::data {

namespace fs = std::filesystem;
using nlohmann::json;

void VideoSequence::validate() const {
    if (frames.dim() != 4) {
        throw ContractError("VideoSequence: frames must be [T,H,W,C], got rank " +
                            std::to_string(frames.dim()));
    }
    if (frames.size(0) < 2) throw ContractError("VideoSequence: T must be >= 2");
    if (frames.size(1) % 4 != 0 || frames.size(2) % 4 != 0) {
        throw ContractError("VideoSequence: H and W must be divisible by 4, got " +
                            c10::str(frames.sizes()));
    }
    check_finite("VideoSequence.frames", frames);
    const double lo = frames.min().item<double>();
    const double hi = frames.max().item<double>();
    if (lo < -1e-6 || hi > 1.0 + 1e-6) {
        throw ContractError("VideoSequence: values must lie in [0,1], got [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
}

DigitState step_digit(const DigitState& state, int64_t canvas_h, int64_t canvas_w) {
    const double max_x = static_cast<double>(canvas_w - state.glyph.size(1));
    const double max_y = static_cast<double>(canvas_h - state.glyph.size(0));
    if (max_x < 0 || max_y < 0) {
        throw ContractError("step_digit: glyph larger than canvas");
    }

    DigitState next = state;
    next.x += next.vx;
    next.y += next.vy;
    // Reflect until inside; one pass suffices whenever |v| <= box size.
    for (int guard = 0; guard < 64; ++guard) {
        bool moved = false;
        if (next.x < 0.0) {
            next.x = -next.x;
            next.vx = -next.vx;
            moved = true;
        } else if (next.x > max_x) {
            next.x = 2.0 * max_x - next.x;
            next.vx = -next.vx;
            moved = true;
        }
        if (next.y < 0.0) {
            next.y = -next.y;
            next.vy = -next.vy;
            moved = true;
        } else if (next.y > max_y) {
            next.y = 2.0 * max_y - next.y;
            next.vy = -next.vy;
            moved = true;
        }
        if (!moved) break;
    }
    next.x = std::clamp(next.x, 0.0, max_x);
    next.y = std::clamp(next.y, 0.0, max_y);
    return next;
}

json MovingMnistConfig::to_json() const {
    return json{{"n_sequences", n_sequences}, {"t_total", t_total},
                {"n_digits", n_digits},       {"canvas_h", canvas_h},
                {"canvas_w", canvas_w},       {"digit_size", digit_size},
                {"v_min", v_min},             {"v_max", v_max},
                {"seed", seed}};
}

namespace {

void composite_max(torch::Tensor& frame, const torch::Tensor& glyph, int64_t x0, int64_t y0) {
    const int64_t g = glyph.size(0);
    auto region = frame.index({torch::indexing::Slice(y0, y0 + g),
                               torch::indexing::Slice(x0, x0 + g), 0});
    region.copy_(torch::maximum(region, glyph));
}

}  // namespace

std::vector<VideoSequence> generate_moving_mnist(const MovingMnistConfig& cfg,
                                                 const GlyphBank& bank) {
    if (bank.size() == 0) throw ContractError("generate_moving_mnist: empty glyph bank");
    if (cfg.t_total < 2) throw ContractError("generate_moving_mnist: t_total must be >= 2");
    if (cfg.v_min < 0 || cfg.v_max < cfg.v_min) {
        throw ContractError("generate_moving_mnist: invalid speed range");
    }

    const GlyphBank scaled = scale_bank(bank, cfg.digit_size);
    const double max_x = static_cast<double>(cfg.canvas_w - cfg.digit_size);
    const double max_y = static_cast<double>(cfg.canvas_h - cfg.digit_size);
    if (max_x < 0 || max_y < 0) throw ContractError("generate_moving_mnist: digit exceeds canvas");

    std::vector<VideoSequence> out(static_cast<std::size_t>(cfg.n_sequences));
    // Each sequence depends only on (seed, k); the loop is trivially
    // parallelizable by index with identical results.
    at::parallel_for(0, cfg.n_sequences, 1, [&](int64_t begin, int64_t end) {
        for (int64_t k = begin; k < end; ++k) {
            Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(k)));

            std::vector<DigitState> digits;
            digits.reserve(static_cast<std::size_t>(cfg.n_digits));
            for (int64_t d = 0; d < cfg.n_digits; ++d) {
                DigitState st;
                st.glyph = scaled.glyph(static_cast<int64_t>(
                    rng.uniform_int(static_cast<std::uint64_t>(scaled.size()))));
                st.x = rng.uniform(0.0, std::nextafter(max_x, max_x + 1.0));
                st.y = rng.uniform(0.0, std::nextafter(max_y, max_y + 1.0));
                const double theta = rng.uniform(0.0, 2.0 * M_PI);
                const double speed = rng.uniform(cfg.v_min, cfg.v_max);
                st.vx = speed * std::cos(theta);
                st.vy = speed * std::sin(theta);
                digits.push_back(std::move(st));
            }

            auto frames = torch::zeros({cfg.t_total, cfg.canvas_h, cfg.canvas_w, 1},
                                       torch::kFloat32);
            for (int64_t t = 0; t < cfg.t_total; ++t) {
                auto frame = frames[t];
                for (auto& st : digits) {
                    composite_max(frame, st.glyph, static_cast<int64_t>(std::lround(st.x)),
                                  static_cast<int64_t>(std::lround(st.y)));
                }
                if (t + 1 < cfg.t_total) {
                    for (auto& st : digits) st = step_digit(st, cfg.canvas_h, cfg.canvas_w);
                }
            }
            out[static_cast<std::size_t>(k)] =
                VideoSequence{frames, "mmnist-" + std::to_string(cfg.seed) + "-" +
                                          std::to_string(k)};
        }
    });
    return out;
}

std::vector<VideoSequence> generate_moving_mnist(int64_t n_sequences, int64_t t_total,
                                                 int64_t n_digits, std::uint64_t seed,
                                                 const GlyphBank& bank) {
    MovingMnistConfig cfg;
    cfg.n_sequences = n_sequences;
    cfg.t_total = t_total;
    cfg.n_digits = n_digits;
    cfg.seed = seed;
    return generate_moving_mnist(cfg, bank);
}

// ---------------------------------------------------------------------------
// Storage
// ---------------------------------------------------------------------------

json DatasetManifest::to_json() const {
    return json{{"version", version},
                {"dtype", dtype},
                {"shape_order", shape_order},
                {"count", count},
                {"frame_size", frame_size},
                {"seed", seed},
                {"offsets", offsets},
                {"lengths", lengths},
                {"source_ids", source_ids},
                {"checksum", checksum},
                {"generation", generation}};
}

DatasetManifest DatasetManifest::from_json(const json& j) {
    DatasetManifest m;
    try {
        m.version = j.at("version").get<int>();
        m.dtype = j.at("dtype").get<std::string>();
        m.shape_order = j.at("shape_order").get<std::string>();
        m.count = j.at("count").get<int64_t>();
        m.frame_size = j.at("frame_size").get<std::array<int64_t, 3>>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.offsets = j.at("offsets").get<std::vector<int64_t>>();
        m.lengths = j.at("lengths").get<std::vector<int64_t>>();
        m.source_ids = j.value("source_ids", std::vector<std::string>{});
        m.checksum = j.at("checksum").get<std::string>();
        m.generation = j.value("generation", json::object());
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
    if (m.dtype != "u8") throw DataError("unsupported dtype in manifest: " + m.dtype);
    if (m.shape_order != "THWC") {
        throw DataError("unsupported shape order in manifest: " + m.shape_order);
    }
    return m;
}

void write_dataset(const std::vector<VideoSequence>& seqs, const fs::path& dir,
                   std::uint64_t seed, json generation) {
    if (seqs.empty()) throw ContractError("write_dataset: no sequences");
    for (const auto& s : seqs) s.validate();

    const auto hw = seqs.front().frames.sizes();
    for (const auto& s : seqs) {
        if (s.frames.size(1) != hw[1] || s.frames.size(2) != hw[2] || s.frames.size(3) != hw[3]) {
            throw ContractError("write_dataset: sequences must share frame geometry");
        }
    }

    fs::create_directories(dir);
    DatasetManifest m;
    m.count = static_cast<int64_t>(seqs.size());
    m.frame_size = {hw[1], hw[2], hw[3]};
    m.seed = seed;
    m.generation = std::move(generation);

    std::ofstream bin(dir / "data.bin", std::ios::binary | std::ios::trunc);
    if (!bin) throw DataError("cannot write " + (dir / "data.bin").string());

    std::uint64_t hash = 0xcbf29ce484222325ULL;
    int64_t offset = 0;
    for (const auto& s : seqs) {
        auto u8 = (s.frames.clamp(0, 1) * 255.0f).round().to(torch::kUInt8).contiguous();
        const auto n = static_cast<std::size_t>(u8.numel());
        m.offsets.push_back(offset);
        m.lengths.push_back(s.frames.size(0));
        m.source_ids.push_back(s.source_id);
        bin.write(reinterpret_cast<const char*>(u8.data_ptr<uint8_t>()),
                  static_cast<std::streamsize>(n));
        hash = fnv1a64(u8.data_ptr<uint8_t>(), n, hash);
        offset += static_cast<int64_t>(n);
    }
    bin.close();
    if (!bin) throw DataError("write failed for " + (dir / "data.bin").string());

    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
    m.checksum = hex;

    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    if (!mf) throw DataError("cannot write " + (dir / "manifest.json").string());
    mf << m.to_json().dump(2) << "\n";
}

DatasetReader DatasetReader::open(const fs::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    const auto data_path = dir / "data.bin";
    if (!fs::exists(manifest_path)) {
        throw DataError("missing manifest: " + manifest_path.string());
    }

    std::ifstream mf(manifest_path);
    json j;
    try {
        mf >> j;
    } catch (const json::exception& e) {
        throw DataError("unparsable manifest " + manifest_path.string() + ": " + e.what());
    }
    auto m = DatasetManifest::from_json(j);

    if (m.count != static_cast<int64_t>(m.offsets.size()) ||
        m.count != static_cast<int64_t>(m.lengths.size())) {
        throw DataError("corrupt dataset: manifest count " + std::to_string(m.count) +
                        " does not match stored sequences");
    }
    for (std::size_t i = 1; i < m.offsets.size(); ++i) {
        if (m.offsets[i] <= m.offsets[i - 1]) {
            throw DataError("corrupt dataset: offsets not strictly increasing");
        }
    }

    const int64_t frame_bytes = m.frame_size[0] * m.frame_size[1] * m.frame_size[2];
    int64_t expected = 0;
    for (std::size_t i = 0; i < m.offsets.size(); ++i) {
        if (m.offsets[i] != expected) {
            throw DataError("corrupt dataset: offset " + std::to_string(i) + " misaligned");
        }
        expected += m.lengths[i] * frame_bytes;
    }

    std::error_code ec;
    const auto actual = static_cast<int64_t>(fs::file_size(data_path, ec));
    if (ec) throw DataError("missing data file: " + data_path.string());
    if (actual != expected) {
        throw DataError("corrupt dataset: data.bin has " + std::to_string(actual) +
                        " bytes, expected " + std::to_string(expected));
    }

    // Full checksum pass; catches silent truncation-with-padding and bitrot.
    {
        std::ifstream bin(data_path, std::ios::binary);
        std::vector<char> buf(1 << 20);
        std::uint64_t hash = 0xcbf29ce484222325ULL;
        while (bin) {
            bin.read(buf.data(), static_cast<std::streamsize>(buf.size()));
            hash = fnv1a64(buf.data(), static_cast<std::size_t>(bin.gcount()), hash);
        }
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
        if (m.checksum != hex) {
            throw DataError("corrupt dataset: checksum mismatch in " + data_path.string());
        }
    }

    DatasetReader r;
    r.manifest_ = std::move(m);
    r.dir_ = dir;
    r.fd_ = ::open(data_path.c_str(), O_RDONLY);
    if (r.fd_ < 0) throw DataError("cannot open " + data_path.string());
    return r;
}

DatasetReader::~DatasetReader() {
    if (fd_ >= 0) ::close(fd_);
}

DatasetReader::DatasetReader(DatasetReader&& other) noexcept
    : manifest_(std::move(other.manifest_)), dir_(std::move(other.dir_)), fd_(other.fd_) {
    other.fd_ = -1;
}

DatasetReader& DatasetReader::operator=(DatasetReader&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        manifest_ = std::move(other.manifest_);
        dir_ = std::move(other.dir_);
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

VideoSequence DatasetReader::sequence(int64_t index) const {
    if (index < 0 || index >= manifest_.count) {
        throw ContractError("DatasetReader: index " + std::to_string(index) + " out of range");
    }
    const auto& fsz = manifest_.frame_size;
    const int64_t t = manifest_.lengths[static_cast<std::size_t>(index)];
    const int64_t bytes = t * fsz[0] * fsz[1] * fsz[2];

    auto u8 = torch::empty({t, fsz[0], fsz[1], fsz[2]}, torch::kUInt8);
    const auto got = ::pread(fd_, u8.data_ptr<uint8_t>(), static_cast<std::size_t>(bytes),
                             manifest_.offsets[static_cast<std::size_t>(index)]);
    if (got != bytes) throw DataError("short read from " + (dir_ / "data.bin").string());

    std::string id = index < static_cast<int64_t>(manifest_.source_ids.size())
                         ? manifest_.source_ids[static_cast<std::size_t>(index)]
                         : dir_.string() + "#" + std::to_string(index);
    return VideoSequence{u8.to(torch::kFloat32) / 255.0f, std::move(id)};
}

torch::Tensor DatasetReader::all_frames_u8() const {
    const auto& fsz = manifest_.frame_size;
    const int64_t t = manifest_.lengths.empty() ? 0 : manifest_.lengths.front();
    for (auto len : manifest_.lengths) {
        if (len != t) throw ContractError("all_frames_u8: sequences have varying lengths");
    }
    auto out = torch::empty({manifest_.count, t, fsz[0], fsz[1], fsz[2]}, torch::kUInt8);
    const int64_t bytes = t * fsz[0] * fsz[1] * fsz[2];
    for (int64_t i = 0; i < manifest_.count; ++i) {
        const auto got = ::pread(fd_, out[i].data_ptr<uint8_t>(), static_cast<std::size_t>(bytes),
                                 manifest_.offsets[static_cast<std::size_t>(i)]);
        if (got != bytes) throw DataError("short read from " + (dir_ / "data.bin").string());
    }
    return out;
}

std::vector<VideoSequence> read_dataset(const fs::path& dir) {
    auto reader = DatasetReader::open(dir);
    std::vector<VideoSequence> out;
    out.reserve(static_cast<std::size_t>(reader.size()));
    for (int64_t i = 0; i < reader.size(); ++i) out.push_back(reader.sequence(i));
    return out;
}

// ---------------------------------------------------------------------------
// Folder ingestion
// ---------------------------------------------------------------------------

namespace {

bool is_image_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    static const char* kExts[] = {".png", ".jpg", ".jpeg", ".bmp", ".pgm", ".ppm", ".tif",
                                  ".tiff"};
    return std::any_of(std::begin(kExts), std::end(kExts),
                       [&](const char* e) { return ext == e; });
}

VideoSequence load_one_folder(const fs::path& dir, const FolderLoadOptions& opts) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    }
    if (files.empty()) throw DataError("no frames found in " + dir.string());
    std::sort(files.begin(), files.end());

    const int64_t c = opts.grayscale ? 1 : 3;
    auto frames = torch::zeros({static_cast<int64_t>(files.size()), opts.target_h, opts.target_w, c},
                               torch::kFloat32);
    for (std::size_t i = 0; i < files.size(); ++i) {
        cv::Mat img = cv::imread(files[i].string(),
                                 opts.grayscale ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
        if (img.empty()) throw DataError("unreadable frame: " + files[i].string());
        cv::Mat resized;
        cv::resize(img, resized, cv::Size(static_cast<int>(opts.target_w),
                                          static_cast<int>(opts.target_h)),
                   0, 0, cv::INTER_AREA);
        if (!opts.grayscale) cv::cvtColor(resized, resized, cv::COLOR_BGR2RGB);
        cv::Mat f32;
        resized.convertTo(f32, opts.grayscale ? CV_32FC1 : CV_32FC3, 1.0 / 255.0);
        auto t = torch::from_blob(f32.data, {opts.target_h, opts.target_w, c}, torch::kFloat32);
        frames[static_cast<int64_t>(i)].copy_(t);
    }
    VideoSequence seq{frames, dir.filename().string()};
    seq.validate();
    return seq;
}

std::optional<int> parse_person_id(const std::string& name) {
    static const std::regex re("person(\\d+)");
    std::smatch m;
    if (std::regex_search(name, m, re)) return std::stoi(m[1].str());
    return std::nullopt;
}

}  // namespace

std::vector<VideoSequence> load_video_folder(const fs::path& path,
                                             const FolderLoadOptions& opts) {
    if (!fs::exists(path)) throw DataError("no such path: " + path.string());
    if (!fs::is_directory(path)) throw DataError("not a directory: " + path.string());

    std::vector<fs::path> subdirs;
    bool has_images = false;
    for (const auto& e : fs::directory_iterator(path)) {
        if (e.is_directory()) subdirs.push_back(e.path());
        else if (e.is_regular_file() && is_image_file(e.path())) has_images = true;
    }
    std::sort(subdirs.begin(), subdirs.end());

    std::vector<VideoSequence> out;
    if (subdirs.empty()) {
        if (!has_images) throw DataError("empty folder: " + path.string());
        out.push_back(load_one_folder(path, opts));
        return out;
    }

    for (const auto& d : subdirs) {
        if (opts.person_range) {
            const auto id = parse_person_id(d.filename().string());
            if (!id || *id < opts.person_range->first || *id > opts.person_range->second) {
                continue;
            }
        }
        out.push_back(load_one_folder(d, opts));
    }
    if (out.empty()) throw DataError("no sequences matched in " + path.string());
    return out;
}

}  // namespace vvp::data
