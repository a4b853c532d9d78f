#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "icth/tape.hpp"
#include "icth/util.hpp"

namespace icth::nn {

struct ICTHConfig {
    int d_m = 16;          // model/embedding dimension, even
    int n_heads = 2;
    int d_k = 8;
    int d_v = 8;
    int n_layers = 1;
    int linformer_k = 0;   // 0 -> min(64, max_seq_len)
    double beta = 1.0;     // softplus temperature, fixed (not learned)
    int integ_points = 8;  // trapezoid sub-points per inter-record segment
    int max_seq_len = 128;

    int k() const { return linformer_k > 0 ? linformer_k : std::min(64, max_seq_len); }

    void check() const {
        if (d_m < 2 || d_m % 2 != 0) throw std::invalid_argument("config: d_m must be even and >= 2");
        if (n_heads < 1) throw std::invalid_argument("config: n_heads must be >= 1");
        if (d_k < 1 || d_v < 1) throw std::invalid_argument("config: head dims must be >= 1");
        if (n_layers < 1) throw std::invalid_argument("config: n_layers must be >= 1");
        if (!(beta > 0.0)) throw std::invalid_argument("config: beta must be > 0");
        if (integ_points < 2) throw std::invalid_argument("config: integ_points must be >= 2");
        if (max_seq_len < 1) throw std::invalid_argument("config: max_seq_len must be >= 1");
        if (k() > max_seq_len) throw std::invalid_argument("config: linformer_k must be <= max_seq_len");
    }
};

// One fully connected context layer (tanh) followed by a sigmoid affine map;
// turns log(duration) or log(count + 1) into a (0,1) mask over d_m entries.
struct MaskEncoder {
    Mat ctx_w, ctx_b;  // 1 x d_m each (input is a scalar)
    Mat map_w;         // d_m x d_m
    Mat map_b;         // 1 x d_m
};

struct LayerWeights {
    std::vector<Mat> wq, wk, wv;  // per head: d_m x d_k / d_k / d_v
    Mat wo;                       // (h * d_v) x d_m
    Mat e, f;                     // Linformer projections, k x max_seq_len, shared across heads
    Mat ff_w1, ff_b1;             // d_m x h, 1 x h
    Mat ff_w2, ff_b2;             // h x d_m, 1 x d_m
};

struct ICTHWeights {
    std::vector<LayerWeights> layers;
    MaskEncoder dur, cnt;
    Mat head_w;  // d_m x 1, intensity head
    Mat alpha;   // 1 x 1, inter-record trend
};

template <typename W, typename Fn>
void for_each_mask_tensor(W& m, const std::string& prefix, Fn&& fn) {
    fn(prefix + ".ctx_w", m.ctx_w);
    fn(prefix + ".ctx_b", m.ctx_b);
    fn(prefix + ".map_w", m.map_w);
    fn(prefix + ".map_b", m.map_b);
}

// Visits every weight tensor in a fixed order; the optimizer, the gradient
// buffers and the checkpoint format all rely on this order.
template <typename W, typename Fn>
void for_each_tensor(W& w, Fn&& fn) {
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        auto& lw = w.layers[l];
        for (std::size_t h = 0; h < lw.wq.size(); ++h) fn(p + "wq." + std::to_string(h), lw.wq[h]);
        for (std::size_t h = 0; h < lw.wk.size(); ++h) fn(p + "wk." + std::to_string(h), lw.wk[h]);
        for (std::size_t h = 0; h < lw.wv.size(); ++h) fn(p + "wv." + std::to_string(h), lw.wv[h]);
        fn(p + "wo", lw.wo);
        fn(p + "e", lw.e);
        fn(p + "f", lw.f);
        fn(p + "ff_w1", lw.ff_w1);
        fn(p + "ff_b1", lw.ff_b1);
        fn(p + "ff_w2", lw.ff_w2);
        fn(p + "ff_b2", lw.ff_b2);
    }
    for_each_mask_tensor(w.dur, "dur", fn);
    for_each_mask_tensor(w.cnt, "cnt", fn);
    fn("head_w", w.head_w);
    fn("alpha", w.alpha);
}

namespace detail {

inline Mat gaussian(int r, int c, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Mat m(r, c);
    for (double& x : m.a) x = dist(rng);
    return m;
}

inline Mat xavier(int fan_in, int fan_out, std::mt19937_64& rng) {
    return gaussian(fan_in, fan_out, std::sqrt(2.0 / (fan_in + fan_out)), rng);
}

// Bucket-mean projection (slot r averages its stretch of positions) plus
// dense noise so every slot is attendable from position zero.
inline Mat projection_init(int k, int n, std::mt19937_64& rng) {
    Mat m = gaussian(k, n, 0.01, rng);
    for (int r = 0; r < k; ++r) {
        int lo = static_cast<int>(static_cast<std::int64_t>(r) * n / k);
        int hi = static_cast<int>(static_cast<std::int64_t>(r + 1) * n / k);
        if (hi <= lo) hi = lo + 1;
        for (int j = lo; j < hi && j < n; ++j) m.at(r, j) += 1.0 / (hi - lo);
    }
    return m;
}

} // namespace detail

inline ICTHWeights init_weights(const ICTHConfig& cfg, std::uint64_t seed) {
    cfg.check();
    std::mt19937_64 rng = make_rng(seed, 0x1c7f);
    ICTHWeights w;
    w.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (auto& lw : w.layers) {
        for (int h = 0; h < cfg.n_heads; ++h) {
            lw.wq.push_back(detail::xavier(cfg.d_m, cfg.d_k, rng));
            lw.wk.push_back(detail::xavier(cfg.d_m, cfg.d_k, rng));
            lw.wv.push_back(detail::xavier(cfg.d_m, cfg.d_v, rng));
        }
        lw.wo = detail::xavier(cfg.n_heads * cfg.d_v, cfg.d_m, rng);
        lw.e = detail::projection_init(cfg.k(), cfg.max_seq_len, rng);
        lw.f = detail::projection_init(cfg.k(), cfg.max_seq_len, rng);
        lw.ff_w1 = detail::xavier(cfg.d_m, cfg.n_heads, rng);
        lw.ff_b1 = Mat(1, cfg.n_heads, 0.0);
        lw.ff_w2 = detail::xavier(cfg.n_heads, cfg.d_m, rng);
        lw.ff_b2 = Mat(1, cfg.d_m, 0.0);
    }
    for (MaskEncoder* me : {&w.dur, &w.cnt}) {
        me->ctx_w = detail::gaussian(1, cfg.d_m, 0.5, rng);
        me->ctx_b = Mat(1, cfg.d_m, 0.0);
        me->map_w = detail::xavier(cfg.d_m, cfg.d_m, rng);
        me->map_b = Mat(1, cfg.d_m, 0.0);
    }
    w.head_w = detail::xavier(cfg.d_m, 1, rng);
    w.alpha = detail::gaussian(1, 1, 0.01, rng);
    return w;
}

// Weights sized like `like` but all zero; gradient accumulation buffers.
template <typename W>
W zeros_like(const W& like) {
    W z = like;
    for_each_tensor(z, [](const std::string&, Mat& m) {
        for (double& x : m.a) x = 0.0;
    });
    return z;
}

inline ICTHWeights zero_weights(const ICTHConfig& cfg) { return zeros_like(init_weights(cfg, 0)); }

// ---- checkpoint container --------------------------------------------------
// One JSON object: {"version": 1, "config": {...}, "tensors": {name: {"shape":
// [r, c], "data": [...]}}}. Tensor names are listed in docs/checkpoint_format.md.

inline nlohmann::json config_to_json(const ICTHConfig& c) {
    return nlohmann::json{{"d_m", c.d_m},
                          {"n_heads", c.n_heads},
                          {"d_k", c.d_k},
                          {"d_v", c.d_v},
                          {"n_layers", c.n_layers},
                          {"linformer_k", c.linformer_k},
                          {"beta", c.beta},
                          {"integ_points", c.integ_points},
                          {"max_seq_len", c.max_seq_len}};
}

inline ICTHConfig config_from_json(const nlohmann::json& j) {
    ICTHConfig c;
    c.d_m = j.value("d_m", c.d_m);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_k = j.value("d_k", c.d_k);
    c.d_v = j.value("d_v", c.d_v);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.linformer_k = j.value("linformer_k", c.linformer_k);
    c.beta = j.value("beta", c.beta);
    c.integ_points = j.value("integ_points", c.integ_points);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.check();
    return c;
}

inline std::string checkpoint_to_json(const ICTHConfig& cfg,
                                      const std::vector<std::pair<std::string, const Mat*>>& tensors) {
    std::string out = "{\"version\":1,\"config\":";
    out += config_to_json(cfg).dump();
    out += ",\"tensors\":{";
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (i) out += ',';
        const auto& [name, m] = tensors[i];
        out += "\"" + json_escape(name) + "\":{\"shape\":[" + std::to_string(m->rows) + "," +
               std::to_string(m->cols) + "],\"data\":[";
        for (std::size_t e = 0; e < m->a.size(); ++e) {
            if (e) out += ',';
            out += fmt17(m->a[e]);
        }
        out += "]}";
    }
    out += "}}";
    return out;
}

struct Checkpoint {
    ICTHConfig config;
    std::map<std::string, Mat> tensors;
};

template <typename W>
void save_checkpoint(const std::string& path, const ICTHConfig& cfg, const W& weights,
                     const std::vector<std::pair<std::string, const Mat*>>& extra = {}) {
    std::vector<std::pair<std::string, const Mat*>> tensors;
    for_each_tensor(const_cast<W&>(weights), [&](const std::string& name, Mat& m) {
        tensors.emplace_back("backbone." + name, &m);
    });
    for (const auto& t : extra) tensors.push_back(t);
    atomic_write_file(path, checkpoint_to_json(cfg, tensors) + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    if (!j.contains("version") || j["version"].get<int>() != 1)
        throw std::runtime_error("checkpoint: missing or unsupported version");
    Checkpoint ck;
    ck.config = config_from_json(j.at("config"));
    for (const auto& [name, tj] : j.at("tensors").items()) {
        Mat m(tj.at("shape")[0].get<int>(), tj.at("shape")[1].get<int>());
        const auto& data = tj.at("data");
        if (data.size() != m.size()) throw std::runtime_error("checkpoint: tensor size mismatch for " + name);
        for (std::size_t i = 0; i < m.size(); ++i) m.a[i] = data[i].get<double>();
        ck.tensors[name] = std::move(m);
    }
    return ck;
}

// Rehydrates backbone weights from a loaded checkpoint.
inline ICTHWeights weights_from_checkpoint(const Checkpoint& ck) {
    ICTHWeights w = init_weights(ck.config, 0);
    for_each_tensor(w, [&](const std::string& name, Mat& m) {
        auto it = ck.tensors.find("backbone." + name);
        if (it == ck.tensors.end()) throw std::runtime_error("checkpoint: missing tensor backbone." + name);
        if (it->second.rows != m.rows || it->second.cols != m.cols)
            throw std::runtime_error("checkpoint: shape mismatch for backbone." + name);
        m = it->second;
    });
    return w;
}

} // namespace icth::nn
