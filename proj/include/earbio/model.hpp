#ifndef EARBIO_MODEL_HPP
#define EARBIO_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "earbio/nn.hpp"
#include "earbio/random.hpp"

namespace earbio::nn {

/// Conv blocks (3x3 conv, pad 1 -> optional ReLU -> 2x2 max pool) followed by one dense layer.
struct ArchSpec {
    int input_size = 64;
    int in_channels = 3;
    std::vector<int> conv_channels{8, 16, 32};
    int class_count = 2;
    bool use_relu = true;

    int feature_side() const noexcept { return input_size >> conv_channels.size(); }
    std::size_t feature_count() const noexcept {
        const int ch = conv_channels.empty() ? in_channels : conv_channels.back();
        return static_cast<std::size_t>(ch) * feature_side() * feature_side();
    }

    void validate() const {
        const int div = 1 << conv_channels.size();
        if (input_size <= 0 || input_size % div != 0) {
            throw Error(Errc::InvalidConfig, "input_size must be a positive multiple of " + std::to_string(div));
        }
        if (in_channels <= 0 || class_count < 1) throw Error(Errc::InvalidConfig, "channels and classes must be >= 1");
        for (int c : conv_channels)
            if (c <= 0) throw Error(Errc::InvalidConfig, "conv channel counts must be positive");
    }

    friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    int fan_in = 0;  // 0 for biases
};

/// Parameters live in one flat vector; blocks() describes the layout.
class CompactCnn {
public:
    CompactCnn() : CompactCnn(ArchSpec{}) {}

    explicit CompactCnn(ArchSpec arch) : arch_(std::move(arch)) {
        arch_.validate();
        std::size_t off = 0;
        int in_c = arch_.in_channels;
        for (std::size_t i = 0; i < arch_.conv_channels.size(); ++i) {
            const int oc = arch_.conv_channels[i];
            const auto wsz = static_cast<std::size_t>(oc) * in_c * 9;
            blocks_.push_back({"conv" + std::to_string(i) + ".weight", off, wsz, in_c * 9});
            off += wsz;
            blocks_.push_back({"conv" + std::to_string(i) + ".bias", off, static_cast<std::size_t>(oc), 0});
            off += oc;
            in_c = oc;
        }
        const std::size_t features = arch_.feature_count();
        const auto dsz = features * arch_.class_count;
        blocks_.push_back({"dense.weight", off, dsz, static_cast<int>(features)});
        off += dsz;
        blocks_.push_back({"dense.bias", off, static_cast<std::size_t>(arch_.class_count), 0});
        off += arch_.class_count;
        params_.assign(off, 0.0);
    }

    const ArchSpec& arch() const noexcept { return arch_; }
    const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
    std::vector<double>& params() noexcept { return params_; }
    const std::vector<double>& params() const noexcept { return params_; }
    std::size_t parameter_count() const noexcept { return params_.size(); }

    /// He-uniform weights, U(-sqrt(6 / fan_in), sqrt(6 / fan_in)); zero biases.
    void init_he_uniform(std::uint64_t seed) {
        Rng rng(combine_seed(seed, "he-uniform"));
        for (const auto& b : blocks_) {
            const double lim = b.fan_in > 0 ? std::sqrt(6.0 / b.fan_in) : 0.0;
            for (std::size_t i = 0; i < b.size; ++i) params_[b.offset + i] = b.fan_in > 0 ? rng.uniform(-lim, lim) : 0.0;
        }
    }

    Tensor4 logits(const Tensor4& x) const { return run(x, {}, nullptr, nullptr).logits; }

    /// Mean cross-entropy. Optionally fills the flat gradient and a hash of
    /// every ReLU mask and pool argmax (changes iff the network's piecewise
    /// linear region changes).
    double loss(const Tensor4& x, std::span<const int> labels, std::vector<double>* grad = nullptr,
                std::uint64_t* signature = nullptr, Tensor4* logits_out = nullptr) const {
        Pass p = run(x, labels, grad, signature);
        if (logits_out) *logits_out = std::move(p.logits);
        return p.loss;
    }

    std::vector<int> predict(const Tensor4& x) const {
        const Tensor4 z = logits(x);
        std::vector<int> out(static_cast<std::size_t>(z.n));
        const auto k = z.sample_size();
        for (int i = 0; i < z.n; ++i) out[i] = argmax_row({z.data.data() + i * k, k});
        return out;
    }

private:
    struct Pass {
        Tensor4 logits;
        double loss = 0.0;
    };

    Tensor4 conv_weight(std::size_t block, int oc, int ic) const {
        Tensor4 w(oc, ic, 3, 3);
        const auto& b = blocks_[block];
        std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size, w.data.begin());
        return w;
    }

    std::span<const double> slice(std::size_t block) const {
        return {params_.data() + blocks_[block].offset, blocks_[block].size};
    }

    Pass run(const Tensor4& x, std::span<const int> labels, std::vector<double>* grad,
             std::uint64_t* signature) const {
        if (x.c != arch_.in_channels || x.h != arch_.input_size || x.w != arch_.input_size) {
            throw Error(Errc::ShapeMismatch, "model input must be (n, " + std::to_string(arch_.in_channels) + ", " +
                                                 std::to_string(arch_.input_size) + ", " +
                                                 std::to_string(arch_.input_size) + ")");
        }
        const std::size_t nblocks = arch_.conv_channels.size();
        std::vector<Tensor4> inputs(nblocks), pre(nblocks), act(nblocks);
        std::vector<std::vector<std::size_t>> argmax(nblocks);
        std::vector<Tensor4> weights(nblocks);
        Tensor4 cur = x;
        int in_c = arch_.in_channels;
        std::uint64_t sig = 0xcbf29ce484222325ULL;
        auto fold = [&sig](std::uint64_t v) { sig = mix64(sig ^ v); };
        for (std::size_t i = 0; i < nblocks; ++i) {
            const int oc = arch_.conv_channels[i];
            weights[i] = conv_weight(2 * i, oc, in_c);
            inputs[i] = std::move(cur);
            pre[i] = conv2d_forward(inputs[i], weights[i], slice(2 * i + 1), 1, 1);
            act[i] = arch_.use_relu ? relu(pre[i]) : pre[i];
            PoolResult p = maxpool2x2(act[i]);
            if (signature) {
                if (arch_.use_relu)
                    for (double v : pre[i].data) fold(v > 0.0);
                for (auto a : p.argmax) fold(a);
            }
            argmax[i] = std::move(p.argmax);
            cur = std::move(p.out);
            in_c = oc;
        }
        const std::size_t dw = 2 * nblocks, db = dw + 1;
        Pass pass{dense_forward(cur, slice(dw), slice(db)), 0.0};
        if (signature) *signature = sig;
        if (labels.empty()) return pass;

        LossResult lr = softmax_cross_entropy(pass.logits, labels);
        pass.loss = lr.loss;
        if (!grad) return pass;

        grad->assign(params_.size(), 0.0);
        DenseGrads dg = dense_backward(lr.grad_logits, cur, slice(dw));
        std::copy(dg.grad_w.begin(), dg.grad_w.end(), grad->begin() + static_cast<std::ptrdiff_t>(blocks_[dw].offset));
        std::copy(dg.grad_b.begin(), dg.grad_b.end(), grad->begin() + static_cast<std::ptrdiff_t>(blocks_[db].offset));
        Tensor4 g = std::move(dg.grad_x);
        for (std::size_t i = nblocks; i-- > 0;) {
            Tensor4 gp = maxpool_backward(g, argmax[i], act[i]);
            if (arch_.use_relu) gp = relu_backward(gp, pre[i]);
            ConvGrads cg = conv2d_backward(gp, inputs[i], weights[i], 1, 1);
            std::copy(cg.grad_w.data.begin(), cg.grad_w.data.end(),
                      grad->begin() + static_cast<std::ptrdiff_t>(blocks_[2 * i].offset));
            std::copy(cg.grad_b.begin(), cg.grad_b.end(),
                      grad->begin() + static_cast<std::ptrdiff_t>(blocks_[2 * i + 1].offset));
            g = std::move(cg.grad_x);
        }
        return pass;
    }

    ArchSpec arch_;
    std::vector<ParamBlock> blocks_;
    std::vector<double> params_;
};

struct GradientCheckReport {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // perturbation crossed a ReLU kink or changed a pool argmax
    std::vector<std::size_t> checked_per_block;
    double tolerance = 1e-3;

    bool passed() const noexcept { return checked > 0 && max_relative_error < tolerance; }
};

/// Relative error |a - n| / max(|a|, |n|, 1e-8).
inline double relative_error(double analytic, double numeric) noexcept {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Central-difference check of `samples` parameters spread over every block.
/// Parameters whose +/- eps perturbation moves the network into a different
/// linear region are skipped and replaced by another draw from the same block.
inline GradientCheckReport gradient_check(const CompactCnn& model, const Tensor4& batch, std::span<const int> labels,
                                          double eps, std::size_t samples = 256, std::uint64_t seed = 0,
                                          double tolerance = 1e-3) {
    CompactCnn probe = model;
    std::vector<double> grad;
    std::uint64_t base_sig = 0;
    probe.loss(batch, labels, &grad, &base_sig);

    const auto& blocks = probe.blocks();
    const std::size_t nb = blocks.size();
    // Quotas: an even share per block, leftover capacity redistributed round-robin.
    std::vector<std::size_t> quota(nb, 0);
    const std::size_t share = (samples + nb - 1) / nb;
    std::size_t assigned = 0;
    for (std::size_t b = 0; b < nb; ++b) assigned += (quota[b] = std::min(share, blocks[b].size));
    for (bool progress = true; assigned < samples && progress;) {
        progress = false;
        for (std::size_t b = 0; b < nb && assigned < samples; ++b)
            if (quota[b] < blocks[b].size) { ++quota[b]; ++assigned; progress = true; }
    }

    GradientCheckReport rep;
    rep.tolerance = tolerance;
    rep.checked_per_block.assign(nb, 0);
    Rng rng(combine_seed(seed, "gradient-check"));
    auto& theta = probe.params();
    for (std::size_t b = 0; b < nb; ++b) {
        std::vector<std::size_t> order(blocks[b].size);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = blocks[b].offset + i;
        rng.shuffle(order);
        for (std::size_t idx : order) {
            if (rep.checked_per_block[b] >= quota[b]) break;
            const double saved = theta[idx];
            std::uint64_t sp = 0, sm = 0;
            theta[idx] = saved + eps;
            const double fp = probe.loss(batch, labels, nullptr, &sp);
            theta[idx] = saved - eps;
            const double fm = probe.loss(batch, labels, nullptr, &sm);
            theta[idx] = saved;
            if (sp != base_sig || sm != base_sig) {
                ++rep.skipped;
                continue;
            }
            const double numeric = (fp - fm) / (2.0 * eps);
            rep.max_relative_error = std::max(rep.max_relative_error, relative_error(grad[idx], numeric));
            ++rep.checked_per_block[b];
            ++rep.checked;
        }
    }
    return rep;
}

}  // namespace earbio::nn

#endif
