#pragma once

// Siamese online/target network pair: a small strided-conv encoder with
// global average pooling, two-layer projection and prediction heads, the
// instance-fusion linear map, and the momentum (EMA) target update.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "univip/rng.hpp"
#include "univip/tensor.hpp"

namespace univip {

struct ModelDims {
    size_t in_channels = 3;
    std::vector<size_t> conv_channels = {16, 32, 64, 64};  // stride-2 blocks
    size_t feat_dim = 64;    // encoder output after pooling
    size_t hidden = 64;      // mlp hidden width in both heads
    size_t d = 32;           // projection/prediction output dim
    int k = 4;               // instances fused per sample
};

inline double momentum_schedule(long step, long total_steps, double m0) {
    if (total_steps < 1) throw UsageError("momentum_schedule: total_steps must be >= 1");
    if (step < 0 || step > total_steps) {
        throw UsageError("momentum_schedule: step " + std::to_string(step) + " outside [0, " +
                         std::to_string(total_steps) + "]");
    }
    if (m0 < 0.0 || m0 >= 1.0) throw UsageError("momentum_schedule: m0 must be in [0,1)");
    // pin the endpoints; cos(pi) in floating point lands a hair off -1
    if (step == 0) return m0;
    if (step == total_steps) return 1.0;
    double c = std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps));
    return 1.0 - (1.0 - m0) * (c + 1.0) / 2.0;
}

template <typename T>
struct NamedParam {
    std::string name;
    TensorT<T> tensor;  // aliases the model's node
};

namespace detail {

template <typename T>
struct ConvBlock {
    TensorT<T> w, b;
};

template <typename T>
struct Mlp {
    TensorT<T> w1, b1, w2, b2;
};

// encoder + projection; the online branch additionally owns the predictor
template <typename T>
struct Branch {
    std::vector<ConvBlock<T>> convs;
    Mlp<T> proj;
};

} // namespace detail

template <typename T>
class ModelT {
public:
    ModelT(const ModelDims& dims, uint64_t seed) : dims_(dims) {
        if (dims.k < 1) throw UsageError("model: k must be >= 1");
        if (dims.conv_channels.empty() || dims.conv_channels.back() != dims.feat_dim) {
            throw UsageError("model: conv channel list must end at feat_dim");
        }
        Rng rng(seed);
        online_ = init_branch(rng, true);
        pred_ = init_mlp(dims_.d, dims_.hidden, dims_.d, rng, true);
        init_fusion(rng);
        target_ = clone_branch_values(online_);
    }

    const ModelDims& dims() const { return dims_; }

    // --- forward paths ------------------------------------------------------

    // scene or instance tensor (3,H,W) -> post-predictor online vector (d)
    TensorT<T> online_forward(const TensorT<T>& img) const {
        return mlp_forward(pred_, project(online_, img));
    }

    // (3,H,W) -> post-projection online vector, the branch the EMA tracks
    TensorT<T> online_projection(const TensorT<T>& img) const { return project(online_, img); }

    // (3,H,W) -> post-projection target vector; target params carry no grad
    TensorT<T> target_forward(const TensorT<T>& img) const { return project(target_, img); }

    // last conv activation map before pooling, for structure probes
    TensorT<T> encoder_map(const TensorT<T>& img) const { return conv_stack(online_, img); }

    // K online instance vectors -> fused vector of dim d
    TensorT<T> fuse_instances(const std::vector<TensorT<T>>& inst) const {
        if (static_cast<int>(inst.size()) != dims_.k) {
            throw ShapeError("fuse_instances: expected " + std::to_string(dims_.k) +
                             " vectors, got " + std::to_string(inst.size()));
        }
        for (const auto& v : inst) {
            if (v.shape() != Shape{dims_.d}) {
                throw ShapeError("fuse_instances: bad vector shape " + shape_str(v.shape()));
            }
        }
        TensorT<T> cat = reshape(concat(inst, 0), {1, static_cast<size_t>(dims_.k) * dims_.d});
        TensorT<T> out = add(matmul(cat, fusion_w_), reshape(fusion_b_, {1, dims_.d}));
        return reshape(out, {dims_.d});
    }

    // --- parameter access ----------------------------------------------------

    std::vector<NamedParam<T>> parameters() {
        std::vector<NamedParam<T>> out;
        collect_branch("online", online_, out);
        collect_mlp("online.pred", pred_, out);
        out.push_back({"online.fusion.weight", fusion_w_});
        out.push_back({"online.fusion.bias", fusion_b_});
        collect_branch("target", target_, out);
        return out;
    }

    std::vector<NamedParam<T>> online_parameters() {
        std::vector<NamedParam<T>> out;
        collect_branch("online", online_, out);
        collect_mlp("online.pred", pred_, out);
        out.push_back({"online.fusion.weight", fusion_w_});
        out.push_back({"online.fusion.bias", fusion_b_});
        return out;
    }

    // xi = m xi + (1-m) theta over the encoder+projection pairs
    void ema_update(double m) {
        if (m < 0.0 || m > 1.0) throw UsageError("ema_update: momentum outside [0,1]");
        for (size_t i = 0; i < online_.convs.size(); ++i) {
            ema_tensor(target_.convs[i].w, online_.convs[i].w, m);
            ema_tensor(target_.convs[i].b, online_.convs[i].b, m);
        }
        ema_tensor(target_.proj.w1, online_.proj.w1, m);
        ema_tensor(target_.proj.b1, online_.proj.b1, m);
        ema_tensor(target_.proj.w2, online_.proj.w2, m);
        ema_tensor(target_.proj.b2, online_.proj.b2, m);
    }

    TensorT<T>& fusion_weight() { return fusion_w_; }
    TensorT<T>& fusion_bias() { return fusion_b_; }

private:
    ModelDims dims_;
    detail::Branch<T> online_;
    detail::Mlp<T> pred_;
    TensorT<T> fusion_w_, fusion_b_;
    detail::Branch<T> target_;

    static void ema_tensor(TensorT<T>& dst, const TensorT<T>& src, double m) {
        auto& d = dst.node()->data;
        const auto& s = src.data();
        for (size_t i = 0; i < d.size(); ++i) {
            d[i] = static_cast<T>(m * static_cast<double>(d[i]) +
                                  (1.0 - m) * static_cast<double>(s[i]));
        }
    }

    TensorT<T> uniform_init(Shape shape, size_t fan_in, Rng& rng, bool grad) const {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<T> data(shape_numel(shape));
        for (T& v : data) v = static_cast<T>(rng.uniform(-bound, bound));
        return TensorT<T>::from_data(std::move(shape), std::move(data), grad);
    }

    detail::Branch<T> init_branch(Rng& rng, bool grad) const {
        detail::Branch<T> br;
        size_t c_in = dims_.in_channels;
        for (size_t c_out : dims_.conv_channels) {
            detail::ConvBlock<T> blk;
            blk.w = uniform_init({c_out, c_in, 3, 3}, c_in * 9, rng, grad);
            blk.b = TensorT<T>::zeros({c_out}, grad);
            br.convs.push_back(std::move(blk));
            c_in = c_out;
        }
        br.proj = init_mlp(dims_.feat_dim, dims_.hidden, dims_.d, rng, grad);
        return br;
    }

    detail::Mlp<T> init_mlp(size_t in, size_t hidden, size_t out, Rng& rng, bool grad) const {
        detail::Mlp<T> mlp;
        mlp.w1 = uniform_init({in, hidden}, in, rng, grad);
        mlp.b1 = TensorT<T>::zeros({hidden}, grad);
        mlp.w2 = uniform_init({hidden, out}, hidden, rng, grad);
        mlp.b2 = TensorT<T>::zeros({out}, grad);
        return mlp;
    }

    // starts near block averaging so the fused vector opens as the mean
    // instance feature
    void init_fusion(Rng& rng) {
        const size_t kd = static_cast<size_t>(dims_.k) * dims_.d;
        std::vector<T> w(kd * dims_.d);
        for (size_t r = 0; r < kd; ++r) {
            for (size_t c = 0; c < dims_.d; ++c) {
                T base = (r % dims_.d == c) ? static_cast<T>(1.0 / dims_.k) : T(0);
                w[r * dims_.d + c] = base + static_cast<T>(rng.uniform(-0.01, 0.01));
            }
        }
        fusion_w_ = TensorT<T>::from_data({kd, dims_.d}, std::move(w), true);
        fusion_b_ = TensorT<T>::zeros({dims_.d}, true);
    }

    detail::Branch<T> clone_branch_values(const detail::Branch<T>& src) const {
        detail::Branch<T> dst;
        for (const auto& blk : src.convs) {
            detail::ConvBlock<T> c;
            c.w = TensorT<T>::from_data(blk.w.shape(), blk.w.data(), false);
            c.b = TensorT<T>::from_data(blk.b.shape(), blk.b.data(), false);
            dst.convs.push_back(std::move(c));
        }
        auto copy = [](const TensorT<T>& t) {
            return TensorT<T>::from_data(t.shape(), t.data(), false);
        };
        dst.proj.w1 = copy(src.proj.w1);
        dst.proj.b1 = copy(src.proj.b1);
        dst.proj.w2 = copy(src.proj.w2);
        dst.proj.b2 = copy(src.proj.b2);
        return dst;
    }

    TensorT<T> conv_stack(const detail::Branch<T>& br, const TensorT<T>& img) const {
        if (img.ndim() != 3 || img.shape()[0] != dims_.in_channels) {
            throw ShapeError("encoder: expected (" + std::to_string(dims_.in_channels) +
                             ",H,W), got " + shape_str(img.shape()));
        }
        TensorT<T> x = reshape(img, {1, img.shape()[0], img.shape()[1], img.shape()[2]});
        for (const auto& blk : br.convs) {
            x = conv2d(x, blk.w, 2, 1);
            x = add(x, reshape(blk.b, {blk.b.shape()[0], size_t(1), size_t(1)}));
            x = relu(x);
        }
        return x;
    }

    TensorT<T> encode(const detail::Branch<T>& br, const TensorT<T>& img) const {
        TensorT<T> x = global_avg_pool(conv_stack(br, img));
        return reshape(x, {size_t(1), dims_.feat_dim});
    }

    TensorT<T> mlp_forward(const detail::Mlp<T>& mlp, const TensorT<T>& x) const {
        TensorT<T> flat = x.ndim() == 1 ? reshape(x, {size_t(1), x.shape()[0]}) : x;
        TensorT<T> h = relu(add(matmul(flat, mlp.w1), reshape(mlp.b1, {1, mlp.b1.shape()[0]})));
        TensorT<T> o = add(matmul(h, mlp.w2), reshape(mlp.b2, {1, mlp.b2.shape()[0]}));
        return reshape(o, {o.shape()[1]});
    }

    TensorT<T> project(const detail::Branch<T>& br, const TensorT<T>& img) const {
        return mlp_forward(br.proj, encode(br, img));
    }

    void collect_branch(const std::string& prefix, detail::Branch<T>& br,
                        std::vector<NamedParam<T>>& out) {
        for (size_t i = 0; i < br.convs.size(); ++i) {
            std::string base = prefix + ".encoder.conv" + std::to_string(i + 1);
            out.push_back({base + ".weight", br.convs[i].w});
            out.push_back({base + ".bias", br.convs[i].b});
        }
        collect_mlp(prefix + ".proj", br.proj, out);
    }

    void collect_mlp(const std::string& prefix, detail::Mlp<T>& mlp,
                     std::vector<NamedParam<T>>& out) {
        out.push_back({prefix + ".fc1.weight", mlp.w1});
        out.push_back({prefix + ".fc1.bias", mlp.b1});
        out.push_back({prefix + ".fc2.weight", mlp.w2});
        out.push_back({prefix + ".fc2.bias", mlp.b2});
    }
};

using Model = ModelT<double>;
using ModelF = ModelT<float>;

} // namespace univip
