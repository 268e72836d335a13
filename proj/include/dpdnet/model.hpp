#pragma once

#include <cstring>
#include <fstream>
#include <random>

#include "dpdnet/layers.hpp"

namespace dpdnet {

enum class Variant : uint8_t { Standard = 0, Fast = 1 };

inline int variant_height(Variant v) { return v == Variant::Standard ? 212 : 106; }
inline int variant_width(Variant v) { return v == Variant::Standard ? 256 : 128; }
// Gaussian footprint of the target maps, in pixels at the variant resolution.
inline double variant_sigma(Variant v) { return v == Variant::Standard ? 6.0 : 3.0; }

inline Variant parse_variant(const std::string& s) {
    if (s == "std" || s == "standard") return Variant::Standard;
    if (s == "fast") return Variant::Fast;
    throw Error("unknown variant '" + s + "' (expected std or fast)");
}
inline const char* variant_name(Variant v) { return v == Variant::Standard ? "std" : "fast"; }

using ShapeTrace = std::vector<std::pair<std::string, Shape>>;

// Named parameter/buffer registry. Handles are shared with the layers, so the
// registry stays valid when the owning model moves.
template <class S>
class Registry {
  public:
    TensorT<S> param(const std::string& name, TensorT<S> t) {
        insert(params_, name, t);
        t.set_requires_grad(true);
        return t;
    }
    TensorT<S> buffer(const std::string& name, TensorT<S> t) {
        insert(buffers_, name, t);
        return t;
    }
    std::vector<std::pair<std::string, TensorT<S>>>& params() { return params_; }
    std::vector<std::pair<std::string, TensorT<S>>>& buffers() { return buffers_; }
    const std::vector<std::pair<std::string, TensorT<S>>>& params() const { return params_; }
    const std::vector<std::pair<std::string, TensorT<S>>>& buffers() const { return buffers_; }

    TensorT<S>* find(const std::string& name) {
        for (auto& [n, t] : params_)
            if (n == name) return &t;
        for (auto& [n, t] : buffers_)
            if (n == name) return &t;
        return nullptr;
    }

  private:
    void insert(std::vector<std::pair<std::string, TensorT<S>>>& v, const std::string& name,
                const TensorT<S>& t) {
        for (auto& [n, _] : v)
            if (n == name) throw Error("duplicate parameter name " + name);
        v.emplace_back(name, t);
    }
    std::vector<std::pair<std::string, TensorT<S>>> params_, buffers_;
};

namespace detail {

template <class S>
TensorT<S> he_uniform(Shape shape, int fan_in, std::mt19937_64& rng) {
    S limit = std::sqrt(S(6) / S(fan_in));
    std::uniform_real_distribution<double> dist(-double(limit), double(limit));
    std::vector<S> v(static_cast<size_t>(numel(shape)));
    for (auto& x : v) x = S(dist(rng));
    return TensorT<S>::from_vector(std::move(shape), std::move(v));
}

inline EdgeAmounts split_rows(int row_amount, int col_amount) {
    EdgeAmounts a;
    a.top = (row_amount + 1) / 2;
    a.bottom = row_amount / 2;
    a.left = (col_amount + 1) / 2;
    a.right = col_amount / 2;
    return a;
}

}  // namespace detail

template <class S>
struct ConvLayer {
    TensorT<S> weight, bias;
    int stride = 1;

    static ConvLayer make(Registry<S>& reg, const std::string& name, int k, int cin, int cout,
                          int stride, std::mt19937_64& rng) {
        ConvLayer l;
        l.stride = stride;
        l.weight = reg.param(name + ".weight",
                             detail::he_uniform<S>({k, k, cin, cout}, k * k * cin, rng));
        l.bias = reg.param(name + ".bias", TensorT<S>::zeros({cout}));
        return l;
    }
    TensorT<S> operator()(const TensorT<S>& x) const { return conv2d(x, weight, bias, stride, stride); }
};

template <class S>
struct TConvLayer {
    TensorT<S> weight, bias;  // weight (k,k,cout,cin)
    int stride = 2;

    static TConvLayer make(Registry<S>& reg, const std::string& name, int k, int cin, int cout,
                           int stride, std::mt19937_64& rng) {
        TConvLayer l;
        l.stride = stride;
        l.weight = reg.param(name + ".weight",
                             detail::he_uniform<S>({k, k, cout, cin}, k * k * cin, rng));
        l.bias = reg.param(name + ".bias", TensorT<S>::zeros({cout}));
        return l;
    }
    TensorT<S> operator()(const TensorT<S>& x) const {
        return transposed_conv2d(x, weight, bias, stride, stride);
    }
};

template <class S>
struct SepConvLayer {
    TensorT<S> depthwise, pointwise, bias;
    int stride = 1;

    static SepConvLayer make(Registry<S>& reg, const std::string& name, int k, int cin, int cout,
                             int stride, std::mt19937_64& rng) {
        SepConvLayer l;
        l.stride = stride;
        l.depthwise = reg.param(name + ".depthwise", detail::he_uniform<S>({k, k, cin}, k * k, rng));
        l.pointwise =
            reg.param(name + ".pointwise", detail::he_uniform<S>({1, 1, cin, cout}, cin, rng));
        l.bias = reg.param(name + ".bias", TensorT<S>::zeros({cout}));
        return l;
    }
    TensorT<S> operator()(const TensorT<S>& x) const {
        return separable_conv2d(x, depthwise, pointwise, bias, stride, stride);
    }
};

template <class S>
struct BNLayer {
    TensorT<S> gamma, beta, run_mean, run_var;
    S momentum = S(0.99);
    S epsilon = S(1e-3);

    static BNLayer make(Registry<S>& reg, const std::string& name, int c) {
        BNLayer l;
        l.gamma = reg.param(name + ".gamma", TensorT<S>::full({c}, S(1)));
        l.beta = reg.param(name + ".beta", TensorT<S>::zeros({c}));
        l.run_mean = reg.buffer(name + ".running_mean", TensorT<S>::zeros({c}));
        l.run_var = reg.buffer(name + ".running_var", TensorT<S>::full({c}, S(1)));
        return l;
    }
    TensorT<S> operator()(const TensorT<S>& x, bool training) const {
        return batch_norm(x, gamma, beta, const_cast<std::vector<S>&>(run_mean.data()),
                          const_cast<std::vector<S>&>(run_var.data()), momentum, epsilon, training);
    }
};

enum class BlockDirection { Encoding, Decoding };
enum class ConvFlavor { Standard, Separable };

struct ResidualBlockSpec {
    int a = 0, b = 0, c = 0;
    int kernel = 3;
    int stride = 1;
    BlockDirection direction = BlockDirection::Encoding;
    ConvFlavor flavor = ConvFlavor::Standard;
};

// Bottleneck residual block. Encoding: strided 1x1 entry halves the spatial
// dims; decoding: nearest upsampling doubles them. The shortcut is a 1x1
// projection to c channels, strided/upsampled to match.
template <class S>
struct ResidualBlock {
    ResidualBlockSpec spec;
    ConvLayer<S> conv1, conv3, shortcut;
    ConvLayer<S> conv2_std;
    SepConvLayer<S> conv2_sep;
    BNLayer<S> bn1, bn2, bn3, bn_s;

    static ResidualBlock make(Registry<S>& reg, const std::string& name, ResidualBlockSpec spec,
                              int cin, std::mt19937_64& rng) {
        require(spec.a > 0 && spec.b > 0 && spec.c > 0 && spec.kernel > 0 && spec.stride > 0,
                "invalid residual block spec for " + name);
        ResidualBlock blk;
        blk.spec = spec;
        const bool enc = spec.direction == BlockDirection::Encoding;
        blk.conv1 = ConvLayer<S>::make(reg, name + ".conv1", 1, cin, spec.a, enc ? spec.stride : 1, rng);
        if (spec.flavor == ConvFlavor::Separable)
            blk.conv2_sep = SepConvLayer<S>::make(reg, name + ".conv2", spec.kernel, spec.a, spec.b, 1, rng);
        else
            blk.conv2_std = ConvLayer<S>::make(reg, name + ".conv2", spec.kernel, spec.a, spec.b, 1, rng);
        blk.conv3 = ConvLayer<S>::make(reg, name + ".conv3", 1, spec.b, spec.c, 1, rng);
        blk.shortcut =
            ConvLayer<S>::make(reg, name + ".shortcut", 1, cin, spec.c, enc ? spec.stride : 1, rng);
        blk.bn1 = BNLayer<S>::make(reg, name + ".bn1", spec.a);
        blk.bn2 = BNLayer<S>::make(reg, name + ".bn2", spec.b);
        blk.bn3 = BNLayer<S>::make(reg, name + ".bn3", spec.c);
        blk.bn_s = BNLayer<S>::make(reg, name + ".bn_s", spec.c);
        return blk;
    }

    TensorT<S> operator()(const TensorT<S>& x, bool training) const {
        const bool dec = spec.direction == BlockDirection::Decoding;
        TensorT<S> m = x, s = x;
        if (dec && spec.stride > 1) {
            m = upsample_nearest(m, spec.stride, spec.stride);
            s = upsample_nearest(s, spec.stride, spec.stride);
        }
        m = relu(bn1(conv1(m), training));
        m = spec.flavor == ConvFlavor::Separable ? conv2_sep(m) : conv2_std(m);
        m = relu(bn2(m, training));
        m = bn3(conv3(m), training);
        s = bn_s(shortcut(s), training);
        return relu(add(m, s));
    }
};

template <class S>
struct ForwardResult {
    TensorT<S> main_out, refined_out;
};

// The main stage: stem, three encoding blocks, three separable decoding
// blocks, then crop/upsample/transposed-conv back to the input resolution.
template <class S>
struct MainBlock {
    int in_h, in_w;
    ConvLayer<S> stem;
    BNLayer<S> stem_bn;
    ResidualBlock<S> enc1, enc2, enc3, dec1, dec2, dec3;
    TConvLayer<S> up_conv;
    BNLayer<S> up_bn;
    ConvLayer<S> out_conv;

    static MainBlock make(Registry<S>& reg, const std::string& prefix, int in_h, int in_w,
                          int in_c, double fs, std::mt19937_64& rng) {
        auto f = [fs](int n) { return std::max(1, (int)std::lround(n * fs)); };
        MainBlock m;
        m.in_h = in_h;
        m.in_w = in_w;
        m.stem = ConvLayer<S>::make(reg, prefix + ".stem.conv", 7, in_c, f(64), 2, rng);
        m.stem_bn = BNLayer<S>::make(reg, prefix + ".stem.bn", f(64));
        auto eb = [&](int a, int b, int c, int s) {
            return ResidualBlockSpec{f(a), f(b), f(c), 3, s, BlockDirection::Encoding, ConvFlavor::Standard};
        };
        auto db = [&](int a, int b, int c, int s) {
            return ResidualBlockSpec{f(a), f(b), f(c), 3, s, BlockDirection::Decoding, ConvFlavor::Separable};
        };
        m.enc1 = ResidualBlock<S>::make(reg, prefix + ".enc1", eb(64, 64, 256, 1), f(64), rng);
        m.enc2 = ResidualBlock<S>::make(reg, prefix + ".enc2", eb(128, 128, 512, 2), f(256), rng);
        m.enc3 = ResidualBlock<S>::make(reg, prefix + ".enc3", eb(256, 256, 1024, 2), f(512), rng);
        m.dec1 = ResidualBlock<S>::make(reg, prefix + ".dec1", db(1024, 1024, 256, 1), f(1024), rng);
        m.dec2 = ResidualBlock<S>::make(reg, prefix + ".dec2", db(512, 512, 128, 2), f(256), rng);
        m.dec3 = ResidualBlock<S>::make(reg, prefix + ".dec3", db(256, 256, 64, 2), f(128), rng);
        m.up_conv = TConvLayer<S>::make(reg, prefix + ".up.conv", 7, f(64), f(64), 2, rng);
        m.up_bn = BNLayer<S>::make(reg, prefix + ".up.bn", f(64));
        m.out_conv = ConvLayer<S>::make(reg, prefix + ".out.conv", 3, f(64), 1, 1, rng);
        return m;
    }

    TensorT<S> operator()(const TensorT<S>& x, bool training, ShapeTrace* trace,
                          const std::string& tag) const {
        auto rec = [&](const char* name, const TensorT<S>& t) {
            if (trace) trace->emplace_back(tag + "." + name, t.shape());
            return t;
        };
        rec("input", x);
        auto h = rec("stem", relu(stem_bn(stem(x), training)));
        h = rec("pool", max_pool(h, 3, 3));
        h = rec("enc1", enc1(h, training));
        h = rec("enc2", enc2(h, training));
        h = rec("enc3", enc3(h, training));
        h = rec("dec1", dec1(h, training));
        h = rec("dec2", dec2(h, training));
        h = rec("dec3", dec3(h, training));
        // pre-crop so that upsample x3 then stride-2 transposed conv lands on
        // 2*(3*target_sixth) >= (in_h, in_w)
        int th = ceil_div(in_h, 6), tw = ceil_div(in_w, 6);
        h = rec("crop1", crop2d(h, detail::split_rows(h.dim(1) - th, h.dim(2) - tw)));
        h = rec("upsample", upsample_nearest(h, 3, 3));
        h = rec("tconv", up_conv(h));
        h = rec("crop2", crop2d(h, detail::split_rows(h.dim(1) - in_h, h.dim(2) - in_w)));
        h = relu(up_bn(h, training));
        h = rec("out_conv", out_conv(h));
        return rec("output", sigmoid(h));
    }
};

// The refinement stage: a shallower encoder-decoder over the fused
// (depth image, main confidence map) pair.
template <class S>
struct RefinementBlock {
    int in_h, in_w;
    ConvLayer<S> stem;
    BNLayer<S> stem_bn;
    ResidualBlock<S> enc1, enc2, dec1, dec2;
    ConvLayer<S> out_conv;

    static RefinementBlock make(Registry<S>& reg, const std::string& prefix, int in_h, int in_w,
                                double fs, std::mt19937_64& rng) {
        auto f = [fs](int n) { return std::max(1, (int)std::lround(n * fs)); };
        RefinementBlock r;
        r.in_h = in_h;
        r.in_w = in_w;
        r.stem = ConvLayer<S>::make(reg, prefix + ".stem.conv", 7, 2, f(64), 2, rng);
        r.stem_bn = BNLayer<S>::make(reg, prefix + ".stem.bn", f(64));
        auto eb = [&](int a, int b, int c, int s) {
            return ResidualBlockSpec{f(a), f(b), f(c), 3, s, BlockDirection::Encoding, ConvFlavor::Standard};
        };
        auto db = [&](int a, int b, int c, int s) {
            return ResidualBlockSpec{f(a), f(b), f(c), 3, s, BlockDirection::Decoding, ConvFlavor::Standard};
        };
        r.enc1 = ResidualBlock<S>::make(reg, prefix + ".enc1", eb(64, 64, 256, 1), f(64), rng);
        r.enc2 = ResidualBlock<S>::make(reg, prefix + ".enc2", eb(128, 128, 512, 2), f(256), rng);
        r.dec1 = ResidualBlock<S>::make(reg, prefix + ".dec1", db(512, 512, 128, 2), f(512), rng);
        r.dec2 = ResidualBlock<S>::make(reg, prefix + ".dec2", db(256, 256, 64, 2), f(128), rng);
        r.out_conv = ConvLayer<S>::make(reg, prefix + ".out.conv", 3, f(64), 1, 1, rng);
        return r;
    }

    TensorT<S> operator()(const TensorT<S>& fused, bool training, ShapeTrace* trace,
                          const std::string& tag) const {
        auto rec = [&](const char* name, const TensorT<S>& t) {
            if (trace) trace->emplace_back(tag + "." + name, t.shape());
            return t;
        };
        rec("input", fused);
        auto h = rec("stem", relu(stem_bn(stem(fused), training)));
        h = rec("pool", max_pool(h, 3, 3));
        h = rec("enc1", enc1(h, training));
        h = rec("enc2", enc2(h, training));
        h = rec("dec1", dec1(h, training));
        h = rec("dec2", dec2(h, training));
        // pad so that upsample x3 reaches at least the target size
        int th = std::max(h.dim(1), ceil_div(in_h, 3)), tw = std::max(h.dim(2), ceil_div(in_w, 3));
        h = rec("pad", zero_pad2d(h, detail::split_rows(th - h.dim(1), tw - h.dim(2))));
        h = rec("upsample", upsample_nearest(h, 3, 3));
        h = rec("crop", crop2d(h, detail::split_rows(h.dim(1) - in_h, h.dim(2) - in_w)));
        h = rec("out_conv", out_conv(h));
        return rec("output", sigmoid(h));
    }
};

template <class S>
class DPDnetT {
  public:
    DPDnetT(Variant variant, double filter_scale, uint64_t seed)
        : variant_(variant), filter_scale_(filter_scale) {
        require(filter_scale > 0, "filter scale must be positive");
        std::mt19937_64 rng(derive_seed(seed, "model-init"));
        int h = variant_height(variant), w = variant_width(variant);
        main_ = MainBlock<S>::make(registry_, "main", h, w, 1, filter_scale, rng);
        refine_ = RefinementBlock<S>::make(registry_, "refine", h, w, filter_scale, rng);
    }

    ForwardResult<S> forward(const TensorT<S>& depth, bool training,
                             ShapeTrace* trace = nullptr) const {
        require(depth.shape().size() == 4 && depth.dim(3) == 1,
                "model input must be (B,H,W,1), got " + shape_str(depth.shape()));
        require(depth.dim(1) == input_height() && depth.dim(2) == input_width(),
                "input size " + shape_str(depth.shape()) + " does not match the " +
                    variant_name(variant_) + " variant (" + std::to_string(input_height()) + "x" +
                    std::to_string(input_width()) + ")");
        ForwardResult<S> r;
        r.main_out = main_(depth, training, trace, "main");
        auto fused = concat_channels(depth, r.main_out);
        r.refined_out = refine_(fused, training, trace, "refine");
        return r;
    }

    Variant variant() const { return variant_; }
    double filter_scale() const { return filter_scale_; }
    int input_height() const { return variant_height(variant_); }
    int input_width() const { return variant_width(variant_); }
    double sigma() const { return variant_sigma(variant_); }

    Registry<S>& registry() { return registry_; }
    const Registry<S>& registry() const { return registry_; }

    std::vector<TensorT<S>> parameters() {
        std::vector<TensorT<S>> out;
        for (auto& [n, t] : registry_.params()) out.push_back(t);
        return out;
    }
    // Parameters of the main stage only (names under "main.").
    std::vector<TensorT<S>> main_parameters() {
        std::vector<TensorT<S>> out;
        for (auto& [n, t] : registry_.params())
            if (n.rfind("main.", 0) == 0) out.push_back(t);
        return out;
    }
    void zero_grads() {
        for (auto& [n, t] : registry_.params()) t.zero_grad();
    }

  private:
    Variant variant_;
    double filter_scale_;
    Registry<S> registry_;
    MainBlock<S> main_;
    RefinementBlock<S> refine_;
};

using DPDnet = DPDnetT<float>;

// ---- checkpoint serialization ---------------------------------------------
// Layout: "DPDN" magic, u16 version, u8 variant tag, u32 tensor count, then
// per tensor: u16 name length, name bytes, u32 rank, u32 dims, f32 data.
// All integers and floats little-endian.

namespace detail {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void write_pod(std::ostream& os, T v) {
    write_bytes(os, &v, sizeof(v));
}

template <class T>
T read_pod(std::istream& is, const std::string& what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw Error("checkpoint truncated while reading " + what);
    return v;
}

}  // namespace detail

template <class S>
void save_checkpoint(const DPDnetT<S>& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open checkpoint for writing: " + path);
    detail::write_bytes(os, "DPDN", 4);
    detail::write_pod<uint16_t>(os, 1);
    detail::write_pod<uint8_t>(os, static_cast<uint8_t>(model.variant()));
    const auto& reg = model.registry();
    detail::write_pod<uint32_t>(os, uint32_t(reg.params().size() + reg.buffers().size()));
    auto write_tensor = [&](const std::string& name, const TensorT<S>& t) {
        detail::write_pod<uint16_t>(os, uint16_t(name.size()));
        detail::write_bytes(os, name.data(), name.size());
        detail::write_pod<uint32_t>(os, uint32_t(t.shape().size()));
        for (int d : t.shape()) detail::write_pod<uint32_t>(os, uint32_t(d));
        for (S v : t.data()) detail::write_pod<float>(os, float(v));
    };
    for (const auto& [n, t] : reg.params()) write_tensor(n, t);
    for (const auto& [n, t] : reg.buffers()) write_tensor(n, t);
    require(os.good(), "I/O failure while writing checkpoint " + path);
}

template <class S = float>
DPDnetT<S> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), "cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, "DPDN", 4) == 0, "bad checkpoint magic in " + path);
    auto version = detail::read_pod<uint16_t>(is, "version");
    require(version == 1, "unsupported checkpoint version " + std::to_string(version));
    auto vtag = detail::read_pod<uint8_t>(is, "variant tag");
    require(vtag <= 1, "bad variant tag " + std::to_string(vtag));
    Variant variant = static_cast<Variant>(vtag);
    auto count = detail::read_pod<uint32_t>(is, "tensor count");

    struct Entry {
        Shape shape;
        std::vector<float> data;
    };
    std::vector<std::pair<std::string, Entry>> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        auto nlen = detail::read_pod<uint16_t>(is, "name length");
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        if (!is) throw Error("checkpoint truncated while reading tensor name");
        auto rank = detail::read_pod<uint32_t>(is, "rank of " + name);
        Entry e;
        for (uint32_t d = 0; d < rank; ++d)
            e.shape.push_back(int(detail::read_pod<uint32_t>(is, "dims of " + name)));
        e.data.resize(size_t(numel(e.shape)));
        is.read(reinterpret_cast<char*>(e.data.data()),
                std::streamsize(e.data.size() * sizeof(float)));
        if (!is) throw Error("checkpoint truncated while reading data of tensor " + name);
        entries.emplace_back(std::move(name), std::move(e));
    }

    // Filter scale is recovered from the stem width (64 at scale 1).
    double fs = 1.0;
    for (auto& [n, e] : entries)
        if (n == "main.stem.conv.weight") fs = double(e.shape.back()) / 64.0;
    DPDnetT<S> model(variant, fs, 0);
    auto& reg = model.registry();
    size_t filled = 0;
    for (auto& [name, e] : entries) {
        TensorT<S>* dst = reg.find(name);
        if (!dst) throw Error("checkpoint tensor " + name + " is not part of the model");
        require(dst->shape() == e.shape, "shape mismatch for tensor " + name + ": file has " +
                                             shape_str(e.shape) + ", model expects " +
                                             shape_str(dst->shape()));
        auto& v = dst->mutable_data();
        for (size_t k = 0; k < v.size(); ++k) v[k] = S(e.data[k]);
        ++filled;
    }
    size_t expected = reg.params().size() + reg.buffers().size();
    require(filled == expected, "checkpoint " + path + " fills " + std::to_string(filled) + " of " +
                                    std::to_string(expected) + " model tensors");
    return model;
}

}  // namespace dpdnet
