#pragma once

#include "assimlab/safetensors.hpp"
#include "assimlab/tensor.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace assimlab::w2v2 {

// Character vocabulary of the CTC head.
class Vocab {
public:
    Vocab() = default;
    Vocab(std::vector<std::string> tokens, int blank, int delimiter);

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::string& token(int id) const { return tokens_.at(std::size_t(id)); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    int blank() const noexcept { return blank_; }
    int delimiter() const noexcept { return delimiter_; }
    // Id of a single character (case-insensitive); nullopt if absent.
    std::optional<int> find(char c) const;
    int id_of(char c) const;  // throws ConfigError
    // Single printable characters emit; blank and multi-character specials
    // such as <s> or <unk> do not.
    bool emits(int id) const;

    friend bool operator==(const Vocab&, const Vocab&) = default;

private:
    std::vector<std::string> tokens_;
    int blank_ = 0;
    int delimiter_ = -1;
};

struct ModelConfig {
    std::vector<std::size_t> conv_dims{512, 512, 512, 512, 512, 512, 512};
    std::vector<std::size_t> conv_kernels{10, 3, 3, 3, 3, 2, 2};
    std::vector<std::size_t> conv_strides{5, 2, 2, 2, 2, 2, 2};
    bool conv_bias = false;
    std::string feat_extract_norm = "group";  // "group" or "layer"
    std::size_t hidden_dim = 768;
    std::size_t num_layers = 12;
    std::size_t num_heads = 12;
    std::size_t ffn_dim = 3072;
    std::size_t pos_conv_kernel = 128;
    std::size_t pos_conv_groups = 16;
    float layer_norm_eps = 1e-5f;
    float group_norm_eps = 1e-5f;
    float feature_layer_norm_eps = 1e-5f;
    std::size_t sample_rate = 16000;
    bool do_normalize = true;
    std::size_t vocab_size = 32;

    std::size_t head_dim() const { return hidden_dim / num_heads; }
    // Samples seen by one output frame and the hop between frames.
    std::size_t receptive_field() const;
    std::size_t hop() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ConvLayerWeights {
    Tensor weight;  // [C_out × C_in × K]
    std::optional<Tensor> bias;
    std::optional<Tensor> norm_weight, norm_bias;
};

struct EncoderLayerWeights {
    Tensor q_w, q_b, k_w, k_b, v_w, v_b, out_w, out_b;
    Tensor attn_norm_w, attn_norm_b;
    Tensor ff_in_w, ff_in_b, ff_out_w, ff_out_b;
    Tensor final_norm_w, final_norm_b;
};

struct Checkpoint {
    ModelConfig config;
    Vocab vocab;
    std::vector<ConvLayerWeights> conv;
    Tensor proj_norm_w, proj_norm_b, proj_w, proj_b;
    Tensor pos_conv_w, pos_conv_b;  // effective weight (weight norm folded in)
    Tensor enc_norm_w, enc_norm_b;
    std::vector<EncoderLayerWeights> layers;
    Tensor head_w, head_b;
};

// Parses config.json (HuggingFace Wav2Vec2 keys, base-architecture defaults
// for anything absent) plus an optional preprocessor_config.json.
ModelConfig load_config(const std::filesystem::path& dir);
Vocab load_vocab(const std::filesystem::path& vocab_json, int blank_id_hint = -1);

// Reads config.json, vocab.json and model.safetensors from dir and
// validates every required tensor's presence, shape and finiteness.
Checkpoint load_checkpoint(const std::filesystem::path& dir);
Checkpoint checkpoint_from_tensors(ModelConfig config, Vocab vocab, const TensorMap& tensors);

// frames produced by the conv stack for num_samples input samples
std::size_t frame_count(const ModelConfig& config, std::size_t num_samples);

}  // namespace assimlab::w2v2
