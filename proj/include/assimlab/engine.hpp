#pragma once

#include "assimlab/audio.hpp"
#include "assimlab/checkpoint.hpp"
#include "assimlab/tensor.hpp"

#include <map>
#include <set>
#include <utility>
#include <vector>

namespace assimlab::w2v2 {

// Layers are 1-based (1..num_layers); hidden layer 0 is the residual stream
// entering the first transformer layer. Heads are 0-based.
using HeadKey = std::pair<int, int>;  // (layer, head)

enum class Component { head_output, head_value, mlp_output };

const char* to_string(Component c);
Component component_from_string(const std::string& s);

struct CaptureSelector {
    bool hidden = false;
    bool head_out = false;
    bool value = false;
    bool mlp_out = false;
    bool attn_out = false;  // whole attention sublayer output (heads + bias)
    bool attention = false; // attention probabilities [heads][T×T]
    std::set<int> layers;   // restrict component captures; empty = every layer

    static CaptureSelector none() { return {}; }
    static CaptureSelector all() { return {true, true, true, true, true, false, {}}; }
    static CaptureSelector hidden_only() { return {true, false, false, false, false, false, {}}; }
    bool wants(int layer) const { return layers.empty() || layers.count(layer) != 0; }
};

struct ActivationStore {
    std::map<int, Tensor> hidden;             // layer -> [frames × hidden_dim]
    std::map<HeadKey, Tensor> head_out;       // -> [frames × hidden_dim]
    std::map<HeadKey, Tensor> value;          // -> [frames × head_dim]
    std::map<int, Tensor> mlp_out;            // -> [frames × hidden_dim]
    std::map<int, Tensor> attn_out;           // -> [frames × hidden_dim]
    std::map<HeadKey, Tensor> attention;      // -> [frames × frames]
    Tensor logits;                            // [frames × vocab]

    std::size_t frames() const { return logits.empty() ? 0 : logits.rows(); }
};

// Rows to overwrite in one component during a forward pass. rows has one
// row per entry of frames (width hidden_dim, or head_dim for head_value).
struct Patch {
    Component component = Component::mlp_output;
    int layer = 1;
    int head = -1;
    std::vector<std::size_t> frames;
    Tensor rows;
};

// Zero-mean/unit-variance input scaling of the reference preprocessor.
std::vector<float> normalize_input(const std::vector<float>& samples);

// Conv feature extractor, feature projection, positional convolution and
// encoder layer norm: the residual stream entering layer 1.
Tensor encode_features(const Checkpoint& ckpt, const audio::AudioBuffer& audio);

// Full forward pass.
ActivationStore forward(const Checkpoint& ckpt, const audio::AudioBuffer& audio,
                        const CaptureSelector& capture = CaptureSelector::none(),
                        const std::vector<Patch>& patches = {});

// Runs transformer layers first_layer..num_layers and the CTC head, starting
// from `input`, the residual stream entering first_layer.
ActivationStore run_layers(const Checkpoint& ckpt, Tensor input, int first_layer, const CaptureSelector& capture,
                           const std::vector<Patch>& patches = {});

// Monolithic attention sublayer output (context · W_outᵀ + b) recomputed
// from a layer's input; used to check the per-head decomposition.
Tensor attention_sublayer_reference(const Checkpoint& ckpt, int layer, const Tensor& layer_input);

}  // namespace assimlab::w2v2
