#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dpdnet/confmap.hpp"
#include "dpdnet/tensor.hpp"

namespace dpdnet {

// Native-resolution depth frame in millimeters; zero marks invalid pixels.
struct DepthFrame {
    int height = 0, width = 0;
    std::vector<uint16_t> depth_mm;
    std::string source_id;
    int frame_index = 0;

    uint16_t at(int r, int c) const { return depth_mm[size_t(r) * width + c]; }
    uint16_t& at(int r, int c) { return depth_mm[size_t(r) * width + c]; }
};

enum class DepthFormat { Pgm16, Png16, RawLE16 };

inline DepthFormat format_from_path(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".pgm") return DepthFormat::Pgm16;
    if (ext == ".png") return DepthFormat::Png16;
    if (ext == ".raw") return DepthFormat::RawLE16;
    throw Error("cannot infer depth format from extension of " + path);
}

// ---- 16-bit PGM (P5, big-endian sample bytes) ------------------------------

inline void save_depth_pgm(const DepthFrame& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open " + path + " for writing");
    os << "P5\n" << f.width << ' ' << f.height << "\n65535\n";
    for (uint16_t v : f.depth_mm) {
        os.put(char(v >> 8));
        os.put(char(v & 0xff));
    }
    require(os.good(), "I/O failure writing " + path);
}

namespace detail {

inline int pgm_next_int(std::istream& is, const std::string& path) {
    // skips whitespace and '#' comments
    int c;
    while ((c = is.peek()) != EOF) {
        if (c == '#') {
            std::string line;
            std::getline(is, line);
        } else if (std::isspace(c)) {
            is.get();
        } else {
            break;
        }
    }
    int v;
    if (!(is >> v)) throw Error("malformed PGM header in " + path);
    return v;
}

}  // namespace detail

inline DepthFrame load_depth_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "cannot open " + path);
    std::string magic;
    is >> magic;
    require(magic == "P5", "not a binary PGM: " + path);
    DepthFrame f;
    f.width = detail::pgm_next_int(is, path);
    f.height = detail::pgm_next_int(is, path);
    int maxval = detail::pgm_next_int(is, path);
    require(maxval > 255 && maxval <= 65535, "expected a 16-bit PGM in " + path);
    is.get();  // single whitespace after maxval
    f.depth_mm.resize(size_t(f.width) * f.height);
    std::vector<char> raw(f.depth_mm.size() * 2);
    is.read(raw.data(), std::streamsize(raw.size()));
    if (size_t(is.gcount()) != raw.size())
        throw Error("truncated PGM " + path + ": expected " + std::to_string(raw.size()) +
                    " sample bytes, got " + std::to_string(is.gcount()));
    for (size_t i = 0; i < f.depth_mm.size(); ++i)
        f.depth_mm[i] = uint16_t((uint8_t(raw[2 * i]) << 8) | uint8_t(raw[2 * i + 1]));
    f.source_id = path;
    return f;
}

// ---- 16-bit grayscale PNG --------------------------------------------------

inline void save_depth_png(const DepthFrame& f, const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    require(fp != nullptr, "cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw Error("libpng failure writing " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, f.width, f.height, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<uint8_t> row(size_t(f.width) * 2);
    for (int r = 0; r < f.height; ++r) {
        for (int c = 0; c < f.width; ++c) {
            uint16_t v = f.at(r, c);  // PNG stores big-endian samples
            row[2 * c] = uint8_t(v >> 8);
            row[2 * c + 1] = uint8_t(v & 0xff);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline DepthFrame load_depth_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    require(fp != nullptr, "cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw Error("libpng failure reading " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    DepthFrame f;
    f.width = int(png_get_image_width(png, info));
    f.height = int(png_get_image_height(png, info));
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);
    if (depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw Error("expected 16-bit grayscale PNG in " + path);
    }
    f.depth_mm.resize(size_t(f.width) * f.height);
    std::vector<uint8_t> row(size_t(f.width) * 2);
    for (int r = 0; r < f.height; ++r) {
        png_read_row(png, row.data(), nullptr);
        for (int c = 0; c < f.width; ++c)
            f.at(r, c) = uint16_t((row[2 * c] << 8) | row[2 * c + 1]);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    f.source_id = path;
    return f;
}

// ---- raw little-endian 16-bit with sidecar dims ----------------------------
// Sidecar is <path>.dims holding "height width" in text.

inline void save_depth_raw(const DepthFrame& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open " + path + " for writing");
    for (uint16_t v : f.depth_mm) {
        os.put(char(v & 0xff));
        os.put(char(v >> 8));
    }
    std::ofstream sc(path + ".dims");
    sc << f.height << ' ' << f.width << '\n';
    require(os.good() && sc.good(), "I/O failure writing " + path);
}

inline DepthFrame load_depth_raw(const std::string& path) {
    std::ifstream sc(path + ".dims");
    require(sc.good(), "missing sidecar dims file " + path + ".dims");
    DepthFrame f;
    require(bool(sc >> f.height >> f.width), "malformed sidecar " + path + ".dims");
    require(f.height > 0 && f.width > 0, "bad dims in sidecar " + path + ".dims");
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "cannot open " + path);
    f.depth_mm.resize(size_t(f.width) * f.height);
    std::vector<char> raw(f.depth_mm.size() * 2);
    is.read(raw.data(), std::streamsize(raw.size()));
    if (size_t(is.gcount()) != raw.size())
        throw Error("truncated raw depth " + path + ": expected " + std::to_string(raw.size()) +
                    " bytes, got " + std::to_string(is.gcount()));
    for (size_t i = 0; i < f.depth_mm.size(); ++i)
        f.depth_mm[i] = uint16_t(uint8_t(raw[2 * i]) | (uint8_t(raw[2 * i + 1]) << 8));
    f.source_id = path;
    return f;
}

inline DepthFrame load_depth(const std::string& path, DepthFormat fmt) {
    switch (fmt) {
        case DepthFormat::Pgm16: return load_depth_pgm(path);
        case DepthFormat::Png16: return load_depth_png(path);
        case DepthFormat::RawLE16: return load_depth_raw(path);
    }
    throw Error("unreachable");
}
inline DepthFrame load_depth(const std::string& path) {
    return load_depth(path, format_from_path(path));
}

inline void save_depth(const DepthFrame& f, const std::string& path) {
    switch (format_from_path(path)) {
        case DepthFormat::Pgm16: return save_depth_pgm(f, path);
        case DepthFormat::Png16: return save_depth_png(f, path);
        case DepthFormat::RawLE16: return save_depth_raw(f, path);
    }
}

// ---- normalization / resizing ----------------------------------------------

// Invalid (zero) pixels filled with the median valid depth, resized to the
// target extents (2x2 averaging when the source is exactly double, bilinear
// otherwise), then divided by max_depth_mm into [0,1].
template <class S = float>
TensorT<S> prepare_input(const DepthFrame& f, int target_h, int target_w, double max_depth_mm) {
    require(f.height > 0 && f.width > 0 && !f.depth_mm.empty(), "empty depth frame");
    require(max_depth_mm > 0, "max depth must be positive");
    std::vector<uint16_t> valid;
    valid.reserve(f.depth_mm.size());
    for (uint16_t v : f.depth_mm)
        if (v != 0) valid.push_back(v);
    require(!valid.empty(), "degenerate frame: no valid depth pixels in " + f.source_id);
    std::nth_element(valid.begin(), valid.begin() + valid.size() / 2, valid.end());
    const double fill = double(valid[valid.size() / 2]);

    auto sample = [&](int r, int c) -> double {
        uint16_t v = f.depth_mm[size_t(r) * f.width + c];
        return v == 0 ? fill : double(v);
    };

    std::vector<S> out(size_t(target_h) * target_w);
    if (f.height == 2 * target_h && f.width == 2 * target_w) {
        for (int r = 0; r < target_h; ++r)
            for (int c = 0; c < target_w; ++c)
                out[size_t(r) * target_w + c] =
                    S((sample(2 * r, 2 * c) + sample(2 * r, 2 * c + 1) + sample(2 * r + 1, 2 * c) +
                       sample(2 * r + 1, 2 * c + 1)) /
                      4.0);
    } else if (f.height == target_h && f.width == target_w) {
        for (int r = 0; r < target_h; ++r)
            for (int c = 0; c < target_w; ++c) out[size_t(r) * target_w + c] = S(sample(r, c));
    } else {
        const double sr = double(f.height) / target_h, sc = double(f.width) / target_w;
        for (int r = 0; r < target_h; ++r)
            for (int c = 0; c < target_w; ++c) {
                double y = (r + 0.5) * sr - 0.5, x = (c + 0.5) * sc - 0.5;
                int y0 = std::clamp(int(std::floor(y)), 0, f.height - 1);
                int x0 = std::clamp(int(std::floor(x)), 0, f.width - 1);
                int y1 = std::min(y0 + 1, f.height - 1), x1 = std::min(x0 + 1, f.width - 1);
                double wy = std::clamp(y - y0, 0.0, 1.0), wx = std::clamp(x - x0, 0.0, 1.0);
                double v = (1 - wy) * ((1 - wx) * sample(y0, x0) + wx * sample(y0, x1)) +
                           wy * ((1 - wx) * sample(y1, x0) + wx * sample(y1, x1));
                out[size_t(r) * target_w + c] = S(v);
            }
    }
    for (auto& v : out) v = S(std::clamp(double(v) / max_depth_mm, 0.0, 1.0));
    return TensorT<S>::from_vector({target_h, target_w}, std::move(out));
}

// Per-axis linear label rescaling, clamped to the target bounds.
inline std::vector<PixelPos> rescale_labels(const std::vector<PixelPos>& labels, int from_h,
                                            int from_w, int to_h, int to_w) {
    require(from_h > 0 && from_w > 0 && to_h > 0 && to_w > 0, "sizes must be positive");
    std::vector<PixelPos> out = labels;
    for (auto& l : out) {
        l.row = std::clamp((int)std::lround(double(l.row) * to_h / from_h), 0, to_h - 1);
        l.col = std::clamp((int)std::lround(double(l.col) * to_w / from_w), 0, to_w - 1);
    }
    return out;
}

// ---- dataset manifest ------------------------------------------------------
// Line-delimited text: one header line with dataset constants, then one
// record per line: path <TAB> condition <TAB> r,c;r,c;...

struct ManifestRecord {
    std::string path;  // relative to the manifest location
    std::string condition;  // single | two | multi | no-people
    std::vector<PixelPos> heads;
};

struct DatasetManifest {
    int height = 0, width = 0;
    double max_depth_mm = 4500.0;
    std::vector<ManifestRecord> records;
    std::string base_dir;  // set on load; not serialized

    std::string resolve(const ManifestRecord& r) const {
        std::filesystem::path p(r.path);
        if (p.is_absolute() || base_dir.empty()) return r.path;
        return (std::filesystem::path(base_dir) / p).string();
    }
};

inline std::string condition_for_count(size_t people) {
    if (people == 0) return "no-people";
    if (people == 1) return "single";
    if (people == 2) return "two";
    return "multi";
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream os(path);
    require(os.good(), "cannot open " + path + " for writing");
    os << "manifest v1 height=" << m.height << " width=" << m.width
       << " max_depth_mm=" << m.max_depth_mm << '\n';
    for (const auto& r : m.records) {
        os << r.path << '\t' << r.condition << '\t';
        for (size_t i = 0; i < r.heads.size(); ++i)
            os << (i ? ";" : "") << r.heads[i].row << ',' << r.heads[i].col;
        os << '\n';
    }
    require(os.good(), "I/O failure writing " + path);
}

inline DatasetManifest load_manifest(const std::string& path, bool check_files = true) {
    std::ifstream is(path);
    require(is.good(), "cannot open manifest " + path);
    DatasetManifest m;
    m.base_dir = std::filesystem::path(path).parent_path().string();
    std::string header;
    require(bool(std::getline(is, header)), "empty manifest " + path);
    {
        std::istringstream hs(header);
        std::string word;
        hs >> word;
        require(word == "manifest", "bad manifest header in " + path);
        hs >> word;
        require(word == "v1", "unsupported manifest version in " + path);
        while (hs >> word) {
            auto eq = word.find('=');
            require(eq != std::string::npos, "bad manifest header field '" + word + "'");
            std::string key = word.substr(0, eq), val = word.substr(eq + 1);
            if (key == "height") m.height = std::stoi(val);
            else if (key == "width") m.width = std::stoi(val);
            else if (key == "max_depth_mm") m.max_depth_mm = std::stod(val);
            else throw Error("unknown manifest header field '" + key + "' in " + path);
        }
    }
    require(m.height > 0 && m.width > 0, "manifest missing frame dimensions: " + path);
    std::string line;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto t1 = line.find('\t');
        auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
        require(t1 != std::string::npos && t2 != std::string::npos,
                "malformed manifest record at " + path + ":" + std::to_string(lineno));
        ManifestRecord r;
        r.path = line.substr(0, t1);
        r.condition = line.substr(t1 + 1, t2 - t1 - 1);
        std::string heads = line.substr(t2 + 1);
        std::istringstream hs(heads);
        std::string tok;
        while (std::getline(hs, tok, ';')) {
            if (tok.empty()) continue;
            auto comma = tok.find(',');
            require(comma != std::string::npos,
                    "malformed centroid '" + tok + "' at " + path + ":" + std::to_string(lineno));
            PixelPos p{std::stoi(tok.substr(0, comma)), std::stoi(tok.substr(comma + 1))};
            require(p.row >= 0 && p.row < m.height && p.col >= 0 && p.col < m.width,
                    "centroid out of bounds at " + path + ":" + std::to_string(lineno));
            r.heads.push_back(p);
        }
        if (check_files)
            require(std::filesystem::exists(m.resolve(r)),
                    "manifest references missing file " + m.resolve(r));
        m.records.push_back(std::move(r));
    }
    return m;
}

}  // namespace dpdnet
