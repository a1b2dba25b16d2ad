#pragma once

#include "assimlab/checkpoint.hpp"
#include "assimlab/experiment.hpp"
#include "assimlab/tensor.hpp"
#include "assimlab/timit.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace assimlab::probing {

// (underlying-class phoneme, surface-class phoneme); label 0 and 1.
using Contrast = std::pair<std::string, std::string>;

struct FrameRef {
    std::size_t utterance = 0;
    std::size_t frame = 0;
    int label = 0;
};

// Frames touching exactly one side of the contrast, before balancing.
std::vector<FrameRef> label_contrast_frames(const std::vector<Utterance>& utts, const Contrast& contrast,
                                            const PhoneFold& fold, const w2v2::ModelConfig& cfg);

// Uniformly downsamples the majority class to the minority count. Output is
// in (utterance, frame) order.
std::vector<FrameRef> balance(const std::vector<FrameRef>& frames, std::uint64_t seed);

struct ProbeDataset {
    Contrast contrast;
    int layer = 0;
    std::string split;
    Tensor features;  // [N × hidden]
    std::vector<int> labels;

    std::size_t count(int label) const;
};

// One dataset per requested layer from a single forward pass per utterance.
std::map<int, ProbeDataset> build_frame_datasets(const w2v2::Checkpoint& ckpt, const std::vector<Utterance>& utts,
                                                 const Contrast& contrast, const std::vector<int>& layers,
                                                 const PhoneFold& fold, const std::string& split, std::uint64_t seed,
                                                 std::size_t jobs = 1);

ProbeDataset build_frame_dataset(const w2v2::Checkpoint& ckpt, const std::vector<Utterance>& utts,
                                 const Contrast& contrast, int layer, const PhoneFold& fold, const std::string& split,
                                 std::uint64_t seed);

struct LossAndGradient {
    double loss = 0.0;
    Eigen::VectorXd grad_w;
    double grad_b = 0.0;
};

// mean logistic loss + (l2/2)·‖w‖² over rows of z with labels y ∈ {0,1}.
LossAndGradient logistic_loss(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                              double l2);

struct TrainOptions {
    std::optional<double> l2_strength;  // default 1/N_train
    double tol = 1e-6;                  // on the gradient max-norm
    std::size_t max_iterations = 100;
};

struct ProbeModel {
    int layer = 0;
    Contrast contrast;
    std::vector<double> weights;
    double bias = 0.0;
    std::vector<double> mean, scale;  // z = (x - mean) / scale

    struct Training {
        double l2_strength = 0.0;
        double tol = 0.0;
        std::size_t iterations = 0;
        bool converged = false;
        double final_loss = 0.0;
        double grad_max_norm = 0.0;
        std::size_t n_train = 0;
        std::vector<double> loss_history;
    } training;

    // Probability of the surface class (label 1).
    double predict_surface(std::span<const float> x) const;
    double predict_underlying(std::span<const float> x) const { return 1.0 - predict_surface(x); }
};

// Newton's method with backtracking line search on z-scored features.
ProbeModel train_probe(const ProbeDataset& ds, const TrainOptions& options = {});

double accuracy(const ProbeModel& model, const ProbeDataset& ds);

nlohmann::ordered_json probe_to_json(const ProbeModel& m);
ProbeModel probe_from_json(const nlohmann::json& j);

// Probe contrast for a stimulus's underlying/surface characters, e.g. N/M → (n, m), N/G → (n, ng).
Contrast contrast_for(char underlying, char surface);

enum class CurveGroup { compensation, no_compensation, control };
const char* to_string(CurveGroup g);

struct CurveRow {
    int layer = 0;
    CurveGroup group = CurveGroup::compensation;
    double mean_prob_underlying = 0.0;
    double sem = 0.0;
    std::size_t n = 0;
};

struct StimulusProbabilities {
    std::string id;
    CurveGroup group = CurveGroup::compensation;
    std::map<int, double> prob_underlying;  // layer -> probability
};

std::vector<CurveRow> curves_from_probabilities(const std::vector<StimulusProbabilities>& stimuli);

struct CurveReport {
    std::vector<CurveRow> rows;
    std::vector<StimulusProbabilities> stimuli;
    std::vector<std::pair<std::string, std::string>> excluded;  // id, reason
};

using ProbeSet = std::map<Contrast, std::map<int, ProbeModel>>;

// Transcribes each stimulus, locates its critical frame, applies every
// layer's probe for the stimulus's contrast and groups by the final
// transcription (control rows form their own group).
CurveReport layerwise_curves(const w2v2::Checkpoint& ckpt, const ProbeSet& probes,
                             const std::vector<behavioral::StimulusRecord>& stimuli, std::size_t jobs = 1);

std::string curves_csv(const std::vector<CurveRow>& rows);

}  // namespace assimlab::probing
