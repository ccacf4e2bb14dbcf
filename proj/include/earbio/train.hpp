#ifndef EARBIO_TRAIN_HPP
#define EARBIO_TRAIN_HPP

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "earbio/dataset.hpp"
#include "earbio/geometry.hpp"
#include "earbio/model.hpp"
#include "earbio/parallel.hpp"

namespace earbio {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 16;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    int input_size = 64;

    void validate() const {
        if (epochs < 1 || batch_size < 1) throw Error(Errc::InvalidConfig, "epochs and batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw Error(Errc::InvalidConfig, "learning_rate must be > 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(Errc::InvalidConfig, "momentum must be in [0, 1)");
        if (input_size <= 0) throw Error(Errc::InvalidConfig, "input_size must be positive");
    }
};

struct EpochMetrics {
    int epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;  // of the pre-update predictions seen during the epoch
};

/// A network plus the label order its outputs refer to.
struct TrainedModel {
    nn::CompactCnn network;
    std::vector<std::string> labels;

    int class_index(const std::string& label) const {
        const auto it = std::lower_bound(labels.begin(), labels.end(), label);
        return it != labels.end() && *it == label ? static_cast<int>(it - labels.begin()) : -1;
    }
};

struct TrainResult {
    TrainedModel model;
    std::vector<EpochMetrics> metrics;
};

/// Model input for one image: RGB, resized to size x size, centred to [-0.5, 0.5].
inline void write_input(const Image& img, int size, double* dst) {
    const Image rgb = resize_bilinear(to_rgb(img), size, size);
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) dst[c * plane + static_cast<std::size_t>(y) * size + x] = rgb.at(x, y, c) - 0.5;
}

inline nn::Tensor4 load_inputs(const std::vector<Record>& recs, int size, int jobs = 1) {
    nn::Tensor4 x(static_cast<int>(recs.size()), 3, size, size);
    parallel_for(recs.size(), jobs, [&](std::size_t i) {
        Image img;
        try {
            img = load_image(recs[i].path);
        } catch (const Error& e) {
            throw Error(e.code(), "record " + recs[i].id + " (" + recs[i].path.string() + "): " + e.what());
        }
        write_input(img, size, x.data.data() + i * x.sample_size());
    });
    return x;
}

/// SGD with momentum: v <- mu v - lr g; theta <- theta + v.
class SgdMomentum {
public:
    SgdMomentum(std::size_t n, double lr, double momentum) : v_(n, 0.0), lr_(lr), mu_(momentum) {}

    void step(std::vector<double>& theta, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            v_[i] = mu_ * v_[i] - lr_ * grad[i];
            theta[i] += v_[i];
        }
    }

private:
    std::vector<double> v_;
    double lr_, mu_;
};

inline nn::Tensor4 gather(const nn::Tensor4& x, std::span<const std::size_t> idx) {
    nn::Tensor4 b(static_cast<int>(idx.size()), x.c, x.h, x.w);
    const auto s = x.sample_size();
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * s), s,
                    b.data.begin() + static_cast<std::ptrdiff_t>(i * s));
    return b;
}

/// Mini-batch SGD over in-memory inputs. Bit-deterministic for a given (x, y, cfg, arch).
inline TrainResult train_tensors(const nn::Tensor4& x, const std::vector<int>& y, const TrainConfig& cfg,
                                 const nn::ArchSpec& arch, std::vector<std::string> labels) {
    cfg.validate();
    if (x.n == 0) throw Error(Errc::EmptyTrainSplit, "no training samples");
    TrainResult res{{nn::CompactCnn(arch), std::move(labels)}, {}};
    auto& net = res.model.network;
    net.init_he_uniform(cfg.seed);
    SgdMomentum opt(net.parameter_count(), cfg.learning_rate, cfg.momentum);
    Rng shuffle_rng(combine_seed(cfg.seed, "shuffle"));
    std::vector<std::size_t> order(static_cast<std::size_t>(x.n));
    std::vector<double> grad;
    for (int e = 0; e < cfg.epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            const nn::Tensor4 batch = gather(x, idx);
            std::vector<int> by(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) by[i] = y[idx[i]];
            nn::Tensor4 z;
            loss_sum += net.loss(batch, by, &grad, nullptr, &z) * static_cast<double>(idx.size());
            const auto k = z.sample_size();
            for (std::size_t i = 0; i < idx.size(); ++i) correct += nn::argmax_row({z.data.data() + i * k, k}) == by[i];
            opt.step(net.params(), grad);
        }
        res.metrics.push_back({e + 1, loss_sum / static_cast<double>(order.size()),
                               static_cast<double>(correct) / static_cast<double>(order.size())});
    }
    return res;
}

inline nn::ArchSpec arch_for(const TrainConfig& cfg, std::size_t class_count, std::vector<int> conv_channels) {
    nn::ArchSpec a;
    a.input_size = cfg.input_size;
    a.in_channels = 3;
    a.conv_channels = std::move(conv_channels);
    a.class_count = static_cast<int>(class_count);
    return a;
}

/// Trains on the TRAIN records. Class indices follow the sorted labels of the whole manifest.
inline TrainResult train(const DatasetManifest& m, const TrainConfig& cfg,
                         std::vector<int> conv_channels = {8, 16, 32}, int jobs = 1) {
    cfg.validate();
    const auto recs = m.select(Split::Train);
    if (recs.empty()) throw Error(Errc::EmptyTrainSplit, "manifest has no TRAIN records");
    TrainedModel proto{nn::CompactCnn(arch_for(cfg, m.labels().size(), conv_channels)), m.labels()};
    std::vector<int> y(recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) y[i] = proto.class_index(recs[i].label);
    const nn::Tensor4 x = load_inputs(recs, cfg.input_size, jobs);
    return train_tensors(x, y, cfg, proto.network.arch(), std::move(proto.labels));
}

/// Fraction of records whose argmax prediction equals their label. Labels the
/// model has never seen count as errors.
inline double accuracy_on(const TrainedModel& model, const std::vector<Record>& recs, int jobs = 1) {
    const int size = model.network.arch().input_size;
    std::size_t correct = 0;
    constexpr std::size_t chunk = 64;
    for (std::size_t start = 0; start < recs.size(); start += chunk) {
        const std::vector<Record> part(recs.begin() + static_cast<std::ptrdiff_t>(start),
                                       recs.begin() + static_cast<std::ptrdiff_t>(std::min(recs.size(), start + chunk)));
        const auto pred = model.network.predict(load_inputs(part, size, jobs));
        for (std::size_t i = 0; i < part.size(); ++i) correct += pred[i] == model.class_index(part[i].label);
    }
    return static_cast<double>(correct) / static_cast<double>(recs.size());
}

inline double evaluate(const TrainedModel& model, const DatasetManifest& m, int jobs = 1) {
    const auto recs = m.select(Split::Test);
    if (recs.empty()) throw Error(Errc::EmptyTestSplit, "manifest has no TEST records");
    return accuracy_on(model, recs, jobs);
}

inline constexpr const char* kCheckpointFormat = "earbio_cnn_v1";

inline nlohmann::json checkpoint_json(const TrainedModel& m) {
    const auto& a = m.network.arch();
    return {{"format", kCheckpointFormat},
            {"arch",
             {{"input_size", a.input_size},
              {"in_channels", a.in_channels},
              {"conv_channels", a.conv_channels},
              {"class_count", a.class_count},
              {"use_relu", a.use_relu}}},
            {"labels", m.labels},
            {"params", m.network.params()}};
}

inline void save_checkpoint(const TrainedModel& m, const fs::path& path) {
    const std::string text = checkpoint_json(m).dump() + "\n";
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw Error(Errc::IoError, "cannot write checkpoint " + path.string());
    }
}

inline TrainedModel load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot read checkpoint " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("format") != kCheckpointFormat) throw Error(Errc::SchemaVersionMismatch, "checkpoint format");
        const auto& ja = j.at("arch");
        nn::ArchSpec a;
        a.input_size = ja.at("input_size").get<int>();
        a.in_channels = ja.at("in_channels").get<int>();
        a.conv_channels = ja.at("conv_channels").get<std::vector<int>>();
        a.class_count = ja.at("class_count").get<int>();
        a.use_relu = ja.at("use_relu").get<bool>();
        TrainedModel m{nn::CompactCnn(a), j.at("labels").get<std::vector<std::string>>()};
        auto params = j.at("params").get<std::vector<double>>();
        if (params.size() != m.network.parameter_count() || m.labels.size() != static_cast<std::size_t>(a.class_count)) {
            throw Error(Errc::ShapeMismatch, "checkpoint parameter or label count");
        }
        m.network.params() = std::move(params);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::MalformedManifest, "checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace earbio

#endif
