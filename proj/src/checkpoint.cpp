#include "assimlab/checkpoint.hpp"

#include "assimlab/error.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <cmath>
#include <fstream>

namespace assimlab::w2v2 {

namespace fs = std::filesystem;
using nlohmann::json;

Vocab::Vocab(std::vector<std::string> tokens, int blank, int delimiter)
    : tokens_(std::move(tokens)), blank_(blank), delimiter_(delimiter) {
    if (blank_ < 0 || std::size_t(blank_) >= tokens_.size()) throw ConfigError("vocab has no valid blank symbol");
    if (delimiter_ < 0 || std::size_t(delimiter_) >= tokens_.size()) {
        throw ConfigError("vocab has no word delimiter '|'");
    }
}

std::optional<int> Vocab::find(char c) const {
    const char up = char(std::toupper(static_cast<unsigned char>(c)));
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].size() == 1 && tokens_[i][0] == up && int(i) != blank_) return int(i);
    }
    return std::nullopt;
}

int Vocab::id_of(char c) const {
    auto id = find(c);
    if (!id) throw ConfigError(std::string("character '") + c + "' is not in the vocabulary");
    return *id;
}

bool Vocab::emits(int id) const {
    return id != blank_ && id >= 0 && std::size_t(id) < tokens_.size() && tokens_[std::size_t(id)].size() == 1;
}

std::size_t ModelConfig::receptive_field() const {
    std::size_t field = 1, jump = 1;
    for (std::size_t i = 0; i < conv_kernels.size(); ++i) {
        field += (conv_kernels[i] - 1) * jump;
        jump *= conv_strides[i];
    }
    return field;
}

std::size_t ModelConfig::hop() const {
    std::size_t jump = 1;
    for (auto s : conv_strides) jump *= s;
    return jump;
}

std::size_t frame_count(const ModelConfig& config, std::size_t num_samples) {
    if (num_samples < config.receptive_field()) {
        throw InputTooShortError("audio of " + std::to_string(num_samples) + " samples is shorter than the " +
                                 std::to_string(config.receptive_field()) + "-sample receptive field");
    }
    std::size_t len = num_samples;
    for (std::size_t i = 0; i < config.conv_kernels.size(); ++i) {
        len = (len - config.conv_kernels[i]) / config.conv_strides[i] + 1;
    }
    return len;
}

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw LoadError("missing file " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

template <typename T>
void take(const json& j, const char* key, T& dst) {
    if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

}  // namespace

ModelConfig load_config(const fs::path& dir) {
    const json j = read_json(dir / "config.json");
    ModelConfig c;
    take(j, "conv_dim", c.conv_dims);
    take(j, "conv_kernel", c.conv_kernels);
    take(j, "conv_stride", c.conv_strides);
    take(j, "conv_bias", c.conv_bias);
    take(j, "feat_extract_norm", c.feat_extract_norm);
    take(j, "hidden_size", c.hidden_dim);
    take(j, "num_hidden_layers", c.num_layers);
    take(j, "num_attention_heads", c.num_heads);
    take(j, "intermediate_size", c.ffn_dim);
    take(j, "num_conv_pos_embeddings", c.pos_conv_kernel);
    take(j, "num_conv_pos_embedding_groups", c.pos_conv_groups);
    take(j, "layer_norm_eps", c.layer_norm_eps);
    take(j, "vocab_size", c.vocab_size);

    if (j.value("do_stable_layer_norm", false)) {
        throw ConfigError("pre-norm (do_stable_layer_norm) checkpoints are not supported; expected post-norm layers");
    }
    for (const char* act : {"hidden_act", "feat_extract_activation"}) {
        if (j.contains(act) && j.at(act) != "gelu") throw ConfigError(std::string(act) + " must be gelu");
    }
    if (c.conv_dims.size() != c.conv_kernels.size() || c.conv_dims.size() != c.conv_strides.size() ||
        c.conv_dims.empty()) {
        throw ConfigError("conv_dim, conv_kernel and conv_stride must have equal nonzero length");
    }
    if (c.num_heads == 0 || c.hidden_dim % c.num_heads != 0) {
        throw ConfigError("hidden_size must be divisible by num_attention_heads");
    }
    if (c.feat_extract_norm != "group" && c.feat_extract_norm != "layer") {
        throw ConfigError("feat_extract_norm must be 'group' or 'layer'");
    }
    if (c.hidden_dim % c.pos_conv_groups != 0) throw ConfigError("hidden_size must be divisible by pos conv groups");

    if (fs::exists(dir / "preprocessor_config.json")) {
        const json p = read_json(dir / "preprocessor_config.json");
        take(p, "do_normalize", c.do_normalize);
        take(p, "sampling_rate", c.sample_rate);
    }
    return c;
}

Vocab load_vocab(const fs::path& vocab_json, int blank_id_hint) {
    const json j = read_json(vocab_json);
    std::vector<std::string> tokens(j.size());
    for (const auto& [tok, id] : j.items()) {
        const int i = id.get<int>();
        if (i < 0 || std::size_t(i) >= tokens.size() || !tokens[std::size_t(i)].empty()) {
            throw ConfigError("vocab.json ids must be a permutation of 0..n-1");
        }
        tokens[std::size_t(i)] = tok;
    }
    int blank = -1, delim = -1;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == "<pad>") blank = int(i);
        if (tokens[i] == "|") delim = int(i);
    }
    if (blank_id_hint >= 0) blank = blank_id_hint;
    if (blank < 0) throw ConfigError("unknown vocab blank: no <pad> token and no pad_token_id");
    return Vocab(std::move(tokens), blank, delim);
}

namespace {

std::string strip_prefix(const std::string& name) {
    static const std::string prefix = "wav2vec2.";
    return name.rfind(prefix, 0) == 0 ? name.substr(prefix.size()) : name;
}

class TensorTable {
public:
    explicit TensorTable(const TensorMap& raw) {
        for (const auto& [k, v] : raw) table_.emplace(strip_prefix(k), v);
    }

    bool has(const std::string& name) const { return table_.count(name) != 0; }

    Tensor get(const std::string& name, const std::vector<std::size_t>& shape) const {
        auto it = table_.find(name);
        if (it == table_.end()) throw LoadError("checkpoint is missing tensor '" + name + "'");
        Tensor t = it->second;
        if (t.shape() != shape) {
            // 1-D parameters are sometimes stored with singleton axes
            std::size_t n = 1;
            for (auto d : shape) n *= d;
            if (t.size() != n || shape.size() != 1) {
                throw LoadError("tensor '" + name + "' has shape " + t.shape_string() + ", expected " +
                                Tensor(shape).shape_string());
            }
            t = t.reshaped(shape);
        }
        if (!t.all_finite()) throw LoadError("tensor '" + name + "' contains non-finite values");
        return t;
    }

private:
    TensorMap table_;
};

}  // namespace

Checkpoint checkpoint_from_tensors(ModelConfig cfg, Vocab vocab, const TensorMap& raw) {
    if (vocab.size() != cfg.vocab_size) {
        throw ConfigError("vocab.json has " + std::to_string(vocab.size()) + " entries but config vocab_size is " +
                          std::to_string(cfg.vocab_size));
    }
    const TensorTable t(raw);
    Checkpoint ck;
    const std::size_t d = cfg.hidden_dim, f = cfg.ffn_dim;

    std::size_t c_in = 1;
    for (std::size_t i = 0; i < cfg.conv_dims.size(); ++i) {
        const std::string p = "feature_extractor.conv_layers." + std::to_string(i) + ".";
        const std::size_t c_out = cfg.conv_dims[i];
        ConvLayerWeights cl;
        cl.weight = t.get(p + "conv.weight", {c_out, c_in, cfg.conv_kernels[i]});
        if (cfg.conv_bias) cl.bias = t.get(p + "conv.bias", {c_out});
        const bool normed = cfg.feat_extract_norm == "layer" || i == 0;
        if (normed) {
            cl.norm_weight = t.get(p + "layer_norm.weight", {c_out});
            cl.norm_bias = t.get(p + "layer_norm.bias", {c_out});
        }
        ck.conv.push_back(std::move(cl));
        c_in = c_out;
    }

    ck.proj_norm_w = t.get("feature_projection.layer_norm.weight", {c_in});
    ck.proj_norm_b = t.get("feature_projection.layer_norm.bias", {c_in});
    ck.proj_w = t.get("feature_projection.projection.weight", {d, c_in});
    ck.proj_b = t.get("feature_projection.projection.bias", {d});

    const std::string pc = "encoder.pos_conv_embed.conv.";
    const std::vector<std::size_t> pc_shape{d, d / cfg.pos_conv_groups, cfg.pos_conv_kernel};
    if (t.has(pc + "weight")) {
        ck.pos_conv_w = t.get(pc + "weight", pc_shape);
    } else {
        // weight norm over dim 2: w[:,:,k] = g[k] * v[:,:,k] / ||v[:,:,k]||
        Tensor g = t.get(pc + "weight_g", {1, 1, cfg.pos_conv_kernel});
        Tensor v = t.get(pc + "weight_v", pc_shape);
        const std::size_t k = cfg.pos_conv_kernel, outer = pc_shape[0] * pc_shape[1];
        std::vector<double> norm(k, 0.0);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t kk = 0; kk < k; ++kk) norm[kk] += double(v[o * k + kk]) * v[o * k + kk];
        for (auto& n : norm) n = std::sqrt(n);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t kk = 0; kk < k; ++kk) v[o * k + kk] = float(double(g[kk]) * v[o * k + kk] / norm[kk]);
        ck.pos_conv_w = std::move(v);
    }
    ck.pos_conv_b = t.get(pc + "bias", {d});
    ck.enc_norm_w = t.get("encoder.layer_norm.weight", {d});
    ck.enc_norm_b = t.get("encoder.layer_norm.bias", {d});

    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const std::string p = "encoder.layers." + std::to_string(l) + ".";
        EncoderLayerWeights w;
        w.q_w = t.get(p + "attention.q_proj.weight", {d, d});
        w.q_b = t.get(p + "attention.q_proj.bias", {d});
        w.k_w = t.get(p + "attention.k_proj.weight", {d, d});
        w.k_b = t.get(p + "attention.k_proj.bias", {d});
        w.v_w = t.get(p + "attention.v_proj.weight", {d, d});
        w.v_b = t.get(p + "attention.v_proj.bias", {d});
        w.out_w = t.get(p + "attention.out_proj.weight", {d, d});
        w.out_b = t.get(p + "attention.out_proj.bias", {d});
        w.attn_norm_w = t.get(p + "layer_norm.weight", {d});
        w.attn_norm_b = t.get(p + "layer_norm.bias", {d});
        w.ff_in_w = t.get(p + "feed_forward.intermediate_dense.weight", {f, d});
        w.ff_in_b = t.get(p + "feed_forward.intermediate_dense.bias", {f});
        w.ff_out_w = t.get(p + "feed_forward.output_dense.weight", {d, f});
        w.ff_out_b = t.get(p + "feed_forward.output_dense.bias", {d});
        w.final_norm_w = t.get(p + "final_layer_norm.weight", {d});
        w.final_norm_b = t.get(p + "final_layer_norm.bias", {d});
        ck.layers.push_back(std::move(w));
    }
    ck.head_w = t.get("lm_head.weight", {cfg.vocab_size, d});
    ck.head_b = t.get("lm_head.bias", {cfg.vocab_size});
    ck.config = std::move(cfg);
    ck.vocab = std::move(vocab);
    return ck;
}

Checkpoint load_checkpoint(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw LoadError("model directory " + dir.string() + " does not exist");
    ModelConfig cfg = load_config(dir);
    const json j = read_json(dir / "config.json");
    const int pad_id = j.contains("pad_token_id") && j.at("pad_token_id").is_number_integer()
                           ? j.at("pad_token_id").get<int>()
                           : -1;
    Vocab vocab = load_vocab(dir / "vocab.json", pad_id);
    const TensorMap raw = read_safetensors(dir / "model.safetensors");
    return checkpoint_from_tensors(std::move(cfg), std::move(vocab), raw);
}

}  // namespace assimlab::w2v2
