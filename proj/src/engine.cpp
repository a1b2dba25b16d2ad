#include "assimlab/engine.hpp"

#include "assimlab/error.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>

namespace assimlab::w2v2 {

const char* to_string(Component c) {
    switch (c) {
        case Component::head_output: return "head_output";
        case Component::head_value: return "head_value";
        case Component::mlp_output: return "mlp_output";
    }
    return "?";
}

Component component_from_string(const std::string& s) {
    if (s == "head_output" || s == "head") return Component::head_output;
    if (s == "head_value" || s == "value") return Component::head_value;
    if (s == "mlp_output" || s == "mlp") return Component::mlp_output;
    throw ConfigError("unknown component kind '" + s + "'");
}

std::vector<float> normalize_input(const std::vector<float>& samples) {
    double mean = 0.0;
    for (float s : samples) mean += s;
    mean /= double(std::max<std::size_t>(samples.size(), 1));
    double var = 0.0;
    for (float s : samples) var += (s - mean) * (s - mean);
    var /= double(std::max<std::size_t>(samples.size(), 1));
    const double inv = 1.0 / std::sqrt(var + 1e-7);
    std::vector<float> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = float((samples[i] - mean) * inv);
    return out;
}

namespace {

void layer_norm_channels(Tensor& x, const Tensor& w, const Tensor& b, float eps) {
    Tensor t = transpose(x);
    layer_norm_rows_inplace(t, w, b, eps);
    x = transpose(t);
}

// "same" padding of K/2 on both sides; an even kernel yields one extra
// output frame, which is trimmed.
Tensor positional_conv(const Checkpoint& ck, const Tensor& hidden) {
    const auto& cfg = ck.config;
    const std::size_t t = hidden.rows(), d = hidden.cols(), pad = cfg.pos_conv_kernel / 2;
    Tensor padded = Tensor::matrix(d, t + 2 * pad);
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t c = 0; c < d; ++c) padded(c, pad + r) = hidden(r, c);
    Tensor conv = conv1d(padded, ck.pos_conv_w, 1, &ck.pos_conv_b, cfg.pos_conv_groups);
    Tensor out = Tensor::matrix(t, d);
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t r = 0; r < t; ++r) out(r, c) = gelu(conv(c, r));
    return out;
}

void check_patch(const Checkpoint& ck, const Patch& p, std::size_t frames) {
    const auto& cfg = ck.config;
    if (p.layer < 1 || std::size_t(p.layer) > cfg.num_layers) {
        throw RangeError("patch layer " + std::to_string(p.layer) + " outside 1.." + std::to_string(cfg.num_layers));
    }
    const bool headed = p.component != Component::mlp_output;
    if (headed && (p.head < 0 || std::size_t(p.head) >= cfg.num_heads)) {
        throw RangeError("patch head " + std::to_string(p.head) + " outside 0.." + std::to_string(cfg.num_heads - 1));
    }
    const std::size_t width = p.component == Component::head_value ? cfg.head_dim() : cfg.hidden_dim;
    if (p.rows.rank() != 2 || p.rows.rows() != p.frames.size() || p.rows.cols() != width) {
        throw DimensionError("patch rows " + p.rows.shape_string() + " do not match " +
                             std::to_string(p.frames.size()) + " frames of width " + std::to_string(width));
    }
    for (auto f : p.frames) {
        if (f >= frames) {
            throw RangeError("patch frame " + std::to_string(f) + " outside run of " + std::to_string(frames) +
                             " frames");
        }
    }
}

void apply_rows(const Patch& p, float* base, std::size_t ld, std::size_t col0, std::size_t width) {
    for (std::size_t i = 0; i < p.frames.size(); ++i) {
        std::copy_n(p.rows.data() + i * width, width, base + p.frames[i] * ld + col0);
    }
}

struct LayerPatches {
    std::vector<const Patch*> value, head, mlp;
};

}  // namespace

Tensor encode_features(const Checkpoint& ck, const audio::AudioBuffer& audio) {
    const auto& cfg = ck.config;
    if (audio.sample_rate != cfg.sample_rate) {
        throw ConfigError("audio sample rate " + std::to_string(audio.sample_rate) + " Hz does not match model rate " +
                          std::to_string(cfg.sample_rate) + " Hz");
    }
    frame_count(cfg, audio.size());  // throws when too short

    std::vector<float> input = cfg.do_normalize ? normalize_input(audio.samples) : audio.samples;
    const std::size_t n = input.size();
    Tensor x({1, n}, std::move(input));
    for (std::size_t i = 0; i < ck.conv.size(); ++i) {
        const auto& cl = ck.conv[i];
        x = conv1d(x, cl.weight, cfg.conv_strides[i], cl.bias ? &*cl.bias : nullptr);
        if (cl.norm_weight) {
            if (cfg.feat_extract_norm == "group") {
                channel_norm_inplace(x, *cl.norm_weight, *cl.norm_bias, cfg.group_norm_eps);
            } else {
                layer_norm_channels(x, *cl.norm_weight, *cl.norm_bias, cfg.layer_norm_eps);
            }
        }
        gelu_inplace(x.values());
    }
    Tensor feats = transpose(x);  // [T × C]
    layer_norm_rows_inplace(feats, ck.proj_norm_w, ck.proj_norm_b, cfg.layer_norm_eps);
    Tensor hidden = linear(feats, ck.proj_w, &ck.proj_b);
    add_inplace(hidden, positional_conv(ck, hidden));
    layer_norm_rows_inplace(hidden, ck.enc_norm_w, ck.enc_norm_b, cfg.layer_norm_eps);
    return hidden;
}

ActivationStore run_layers(const Checkpoint& ck, Tensor x, int first_layer, const CaptureSelector& capture,
                           const std::vector<Patch>& patches) {
    const auto& cfg = ck.config;
    const std::size_t t = x.rows(), d = cfg.hidden_dim, nh = cfg.num_heads, hd = cfg.head_dim();
    if (x.cols() != d) throw DimensionError("layer input width " + std::to_string(x.cols()) + " != hidden size");
    if (first_layer < 1 || std::size_t(first_layer) > cfg.num_layers + 1) {
        throw RangeError("first layer " + std::to_string(first_layer) + " out of range");
    }

    std::map<int, LayerPatches> by_layer;
    for (const auto& p : patches) {
        check_patch(ck, p, t);
        if (p.layer < first_layer) {
            throw RangeError("patch at layer " + std::to_string(p.layer) + " precedes resume layer " +
                             std::to_string(first_layer));
        }
        auto& lp = by_layer[p.layer];
        (p.component == Component::head_value ? lp.value
         : p.component == Component::head_output ? lp.head
                                                   : lp.mlp)
            .push_back(&p);
    }

    ActivationStore store;
    if (capture.hidden) store.hidden.emplace(first_layer - 1, x);
    const float scaling = 1.0f / std::sqrt(float(hd));
    std::vector<float> scores(t * t);
    std::vector<float> ctx(t * hd);
    Tensor contrib = Tensor::matrix(t, d);

    for (int layer = first_layer; std::size_t(layer) <= cfg.num_layers; ++layer) {
        const auto& w = ck.layers[std::size_t(layer - 1)];
        const LayerPatches* lp = by_layer.count(layer) ? &by_layer.at(layer) : nullptr;
        const bool cap = capture.wants(layer);

        Tensor q = linear(x, w.q_w, &w.q_b);
        for (float& v : q.values()) v *= scaling;
        Tensor k = linear(x, w.k_w, &w.k_b);
        Tensor v = linear(x, w.v_w, &w.v_b);
        if (lp) {
            for (const Patch* p : lp->value) apply_rows(*p, v.data(), d, std::size_t(p->head) * hd, hd);
        }

        Tensor attn = Tensor::matrix(t, d);
        for (std::size_t h = 0; h < nh; ++h) {
            const std::size_t off = h * hd;
            if (cap && capture.value) {
                Tensor vh = Tensor::matrix(t, hd);
                for (std::size_t r = 0; r < t; ++r) std::copy_n(v.data() + r * d + off, hd, vh.data() + r * hd);
                store.value.emplace(HeadKey{layer, int(h)}, std::move(vh));
            }
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(t), int(t), int(hd), 1.0f, q.data() + off,
                        int(d), k.data() + off, int(d), 0.0f, scores.data(), int(t));
            for (std::size_t r = 0; r < t; ++r) softmax_inplace(std::span<float>(scores).subspan(r * t, t));
            if (cap && capture.attention) {
                store.attention.emplace(HeadKey{layer, int(h)}, Tensor({t, t}, scores));
            }
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(t), int(hd), int(t), 1.0f, scores.data(),
                        int(t), v.data() + off, int(d), 0.0f, ctx.data(), int(hd));
            // this head's write into the residual stream: ctx_h · W_out[:, h]ᵀ
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(t), int(d), int(hd), 1.0f, ctx.data(), int(hd),
                        w.out_w.data() + off, int(d), 0.0f, contrib.data(), int(d));
            if (lp) {
                for (const Patch* p : lp->head)
                    if (std::size_t(p->head) == h) apply_rows(*p, contrib.data(), d, 0, d);
            }
            if (cap && capture.head_out) store.head_out.emplace(HeadKey{layer, int(h)}, contrib);
            add_inplace(attn, contrib);
        }
        for (std::size_t r = 0; r < t; ++r) {
            float* row = attn.data() + r * d;
            for (std::size_t c = 0; c < d; ++c) row[c] += w.out_b[c];
        }
        if (cap && capture.attn_out) store.attn_out.emplace(layer, attn);

        add_inplace(attn, x);
        layer_norm_rows_inplace(attn, w.attn_norm_w, w.attn_norm_b, cfg.layer_norm_eps);

        Tensor ff = linear(attn, w.ff_in_w, &w.ff_in_b);
        gelu_inplace(ff.values());
        ff = linear(ff, w.ff_out_w, &w.ff_out_b);
        if (lp) {
            for (const Patch* p : lp->mlp) apply_rows(*p, ff.data(), d, 0, d);
        }
        if (cap && capture.mlp_out) store.mlp_out.emplace(layer, ff);

        add_inplace(attn, ff);
        layer_norm_rows_inplace(attn, w.final_norm_w, w.final_norm_b, cfg.layer_norm_eps);
        x = std::move(attn);
        if (capture.hidden) store.hidden.emplace(layer, x);
    }
    store.logits = linear(x, ck.head_w, &ck.head_b);
    return store;
}

ActivationStore forward(const Checkpoint& ck, const audio::AudioBuffer& audio, const CaptureSelector& capture,
                        const std::vector<Patch>& patches) {
    return run_layers(ck, encode_features(ck, audio), 1, capture, patches);
}

Tensor attention_sublayer_reference(const Checkpoint& ck, int layer, const Tensor& x) {
    const auto& cfg = ck.config;
    const auto& w = ck.layers.at(std::size_t(layer - 1));
    const std::size_t t = x.rows(), d = cfg.hidden_dim, hd = cfg.head_dim();
    Tensor q = linear(x, w.q_w, &w.q_b);
    for (float& v : q.values()) v *= 1.0f / std::sqrt(float(hd));
    Tensor k = linear(x, w.k_w, &w.k_b);
    Tensor v = linear(x, w.v_w, &w.v_b);
    Tensor ctx = Tensor::matrix(t, d);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        const std::size_t off = h * hd;
        Tensor scores = Tensor::matrix(t, t);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t j = 0; j < t; ++j) {
                double s = 0.0;
                for (std::size_t e = 0; e < hd; ++e) s += double(q(i, off + e)) * k(j, off + e);
                scores(i, j) = float(s);
            }
        scores = softmax(scores, 1);
        for (std::size_t i = 0; i < t; ++i)
            for (std::size_t e = 0; e < hd; ++e) {
                double s = 0.0;
                for (std::size_t j = 0; j < t; ++j) s += double(scores(i, j)) * v(j, off + e);
                ctx(i, off + e) = float(s);
            }
    }
    return linear(ctx, w.out_w, &w.out_b);
}

}  // namespace assimlab::w2v2
