#include "assimlab/probe.hpp"

#include "assimlab/csv.hpp"
#include "assimlab/engine.hpp"
#include "assimlab/error.hpp"
#include "assimlab/resample.hpp"
#include "assimlab/rng.hpp"
#include "assimlab/stats.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <tuple>
#include <cmath>
#include <thread>

namespace assimlab::probing {

namespace {

double sigmoid(double s) {
    if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

// log(1 + exp(s)) without overflow
double softplus(double s) { return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))); }

template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex m;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(m);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        }
    };
    const std::size_t t = std::max<std::size_t>(1, std::min(jobs, n));
    if (t == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < t; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

std::vector<FrameRef> label_contrast_frames(const std::vector<Utterance>& utts, const Contrast& contrast,
                                            const PhoneFold& fold, const w2v2::ModelConfig& cfg) {
    std::vector<FrameRef> out;
    for (std::size_t u = 0; u < utts.size(); ++u) {
        const auto& utt = utts[u];
        if (utt.audio.size() < cfg.receptive_field()) continue;
        const std::size_t frames = w2v2::frame_count(cfg, utt.audio.size());
        const auto labels = frame_labels(utt.phones, frames, cfg.hop(), cfg.receptive_field(), fold);
        for (std::size_t f = 0; f < frames; ++f) {
            const bool a = labels[f].count(contrast.first) != 0;
            const bool b = labels[f].count(contrast.second) != 0;
            if (a != b) out.push_back({u, f, b ? 1 : 0});
        }
    }
    return out;
}

std::vector<FrameRef> balance(const std::vector<FrameRef>& frames, std::uint64_t seed) {
    std::vector<FrameRef> cls[2];
    for (const auto& f : frames) cls[f.label].push_back(f);
    if (cls[0].empty() || cls[1].empty()) {
        throw DataError("contrast class is empty (" + std::to_string(cls[0].size()) + " vs " +
                        std::to_string(cls[1].size()) + " frames)");
    }
    const int major = cls[0].size() > cls[1].size() ? 0 : 1;
    Rng rng(seed);
    rng.shuffle(cls[major]);
    cls[major].resize(cls[1 - major].size());
    std::vector<FrameRef> out(cls[0]);
    out.insert(out.end(), cls[1].begin(), cls[1].end());
    std::sort(out.begin(), out.end(), [](const FrameRef& a, const FrameRef& b) {
        return std::tie(a.utterance, a.frame) < std::tie(b.utterance, b.frame);
    });
    return out;
}

std::size_t ProbeDataset::count(int label) const { return std::size_t(std::count(labels.begin(), labels.end(), label)); }

std::map<int, ProbeDataset> build_frame_datasets(const w2v2::Checkpoint& ckpt, const std::vector<Utterance>& utts,
                                                 const Contrast& contrast, const std::vector<int>& layers,
                                                 const PhoneFold& fold, const std::string& split, std::uint64_t seed,
                                                 std::size_t jobs) {
    const auto refs = balance(label_contrast_frames(utts, contrast, fold, ckpt.config), seed);
    const std::size_t d = ckpt.config.hidden_dim;
    for (int l : layers) {
        if (l < 0 || std::size_t(l) > ckpt.config.num_layers) throw RangeError("probe layer " + std::to_string(l) + " out of range");
    }
    std::map<int, ProbeDataset> out;
    for (int l : layers) {
        auto& ds = out[l];
        ds.contrast = contrast;
        ds.layer = l;
        ds.split = split;
        ds.features = Tensor::matrix(refs.size(), d);
        for (const auto& r : refs) ds.labels.push_back(r.label);
    }
    // rows of refs grouped per utterance
    std::map<std::size_t, std::vector<std::size_t>> by_utt;
    for (std::size_t i = 0; i < refs.size(); ++i) by_utt[refs[i].utterance].push_back(i);
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> work(by_utt.begin(), by_utt.end());

    parallel_for(work.size(), jobs, [&](std::size_t w) {
        const auto& [u, rows] = work[w];
        w2v2::CaptureSelector cap = w2v2::CaptureSelector::hidden_only();
        const auto store = w2v2::forward(ckpt, utts[u].audio, cap);
        for (int l : layers) {
            const Tensor& h = store.hidden.at(l);
            auto& feats = out.at(l).features;
            for (std::size_t i : rows) {
                auto src = h.row(refs[i].frame);
                std::copy(src.begin(), src.end(), feats.data() + i * d);
            }
        }
    });
    return out;
}

ProbeDataset build_frame_dataset(const w2v2::Checkpoint& ckpt, const std::vector<Utterance>& utts,
                                 const Contrast& contrast, int layer, const PhoneFold& fold, const std::string& split,
                                 std::uint64_t seed) {
    return std::move(build_frame_datasets(ckpt, utts, contrast, {layer}, fold, split, seed).at(layer));
}

LossAndGradient logistic_loss(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                              double l2) {
    const double n = double(z.rows());
    const Eigen::VectorXd s = (z * w).array() + b;
    LossAndGradient out;
    Eigen::VectorXd r(s.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        loss += softplus(s[i]) - y[i] * s[i];
        r[i] = sigmoid(s[i]) - y[i];
    }
    out.loss = loss / n + 0.5 * l2 * w.squaredNorm();
    out.grad_w = z.transpose() * r / n + l2 * w;
    out.grad_b = r.sum() / n;
    return out;
}

ProbeModel train_probe(const ProbeDataset& ds, const TrainOptions& opt) {
    const std::size_t n = ds.features.rows(), d = ds.features.cols();
    if (n == 0) throw DataError("probe training set is empty");
    if (!ds.features.all_finite()) throw DataError("probe features contain non-finite values");

    ProbeModel m;
    m.layer = ds.layer;
    m.contrast = ds.contrast;
    m.mean.assign(d, 0.0);
    m.scale.assign(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += ds.features(i, j);
        mu /= double(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (ds.features(i, j) - mu) * (ds.features(i, j) - mu);
        var /= double(n);
        m.mean[j] = mu;
        m.scale[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    Eigen::MatrixXd z(n, d);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) z(i, j) = (ds.features(i, j) - m.mean[j]) / m.scale[j];
        y[i] = ds.labels[i];
    }

    const double l2 = opt.l2_strength.value_or(1.0 / double(n));
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;
    auto& t = m.training;
    t.l2_strength = l2;
    t.tol = opt.tol;
    t.n_train = n;

    auto cur = logistic_loss(z, y, w, b, l2);
    t.loss_history.push_back(cur.loss);
    for (t.iterations = 0; t.iterations < opt.max_iterations; ++t.iterations) {
        t.grad_max_norm = std::max(cur.grad_w.size() ? cur.grad_w.cwiseAbs().maxCoeff() : 0.0, std::abs(cur.grad_b));
        if (t.grad_max_norm < opt.tol) {
            t.converged = true;
            break;
        }
        // Hessian of the augmented parameter vector (w, b)
        const Eigen::VectorXd s = (z * w).array() + b;
        Eigen::VectorXd sw(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(s[Eigen::Index(i)]);
            sw[Eigen::Index(i)] = p * (1.0 - p);
        }
        Eigen::MatrixXd za(n, d + 1);
        za.leftCols(d) = z;
        za.col(Eigen::Index(d)).setOnes();
        Eigen::MatrixXd h = za.transpose() * sw.asDiagonal() * za / double(n);
        h.topLeftCorner(d, d).diagonal().array() += l2;
        h(Eigen::Index(d), Eigen::Index(d)) += 1e-12;
        Eigen::VectorXd g(d + 1);
        g << cur.grad_w, cur.grad_b;
        const Eigen::VectorXd step = -h.ldlt().solve(g);
        const double slope = g.dot(step);

        double alpha = 1.0;
        LossAndGradient next;
        Eigen::VectorXd w_new;
        double b_new = b;
        for (int k = 0; k < 60; ++k, alpha *= 0.5) {
            w_new = w + alpha * step.head(d);
            b_new = b + alpha * step[Eigen::Index(d)];
            next = logistic_loss(z, y, w_new, b_new, l2);
            if (next.loss <= cur.loss + 1e-4 * alpha * slope) break;
        }
        if (next.loss > cur.loss) break;  // no descent possible at working precision
        w = w_new;
        b = b_new;
        cur = std::move(next);
        t.loss_history.push_back(cur.loss);
    }
    t.final_loss = cur.loss;
    t.grad_max_norm = std::max(cur.grad_w.size() ? cur.grad_w.cwiseAbs().maxCoeff() : 0.0, std::abs(cur.grad_b));
    t.converged = t.grad_max_norm < opt.tol;
    m.weights.assign(w.data(), w.data() + d);
    m.bias = b;
    return m;
}

double ProbeModel::predict_surface(std::span<const float> x) const {
    if (x.size() != weights.size()) throw DimensionError("probe expects " + std::to_string(weights.size()) + " features");
    double s = bias;
    for (std::size_t j = 0; j < x.size(); ++j) s += weights[j] * (double(x[j]) - mean[j]) / scale[j];
    return sigmoid(s);
}

double accuracy(const ProbeModel& model, const ProbeDataset& ds) {
    if (ds.labels.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        const int pred = model.predict_surface(ds.features.row(i)) > 0.5 ? 1 : 0;
        hits += pred == ds.labels[i];
    }
    return double(hits) / double(ds.labels.size());
}

nlohmann::ordered_json probe_to_json(const ProbeModel& m) {
    nlohmann::ordered_json j;
    j["layer"] = m.layer;
    j["layer_convention"] = "0 = residual stream entering the first transformer layer";
    j["contrast"] = {{"underlying", m.contrast.first}, {"surface", m.contrast.second}};
    j["label_convention"] = "1 = surface class, 0 = underlying class";
    j["weights"] = m.weights;
    j["bias"] = m.bias;
    j["standardization"] = {{"mean", m.mean}, {"scale", m.scale}};
    const auto& t = m.training;
    j["training"] = {{"optimizer", "newton with backtracking line search"},
                     {"l2_strength", t.l2_strength},
                     {"objective", "mean logistic loss + l2/2 * |w|^2"},
                     {"tol", t.tol},
                     {"iterations", t.iterations},
                     {"converged", t.converged},
                     {"final_loss", t.final_loss},
                     {"grad_max_norm", t.grad_max_norm},
                     {"n_train", t.n_train}};
    return j;
}

ProbeModel probe_from_json(const nlohmann::json& j) {
    ProbeModel m;
    try {
        m.layer = j.at("layer").get<int>();
        m.contrast = {j.at("contrast").at("underlying").get<std::string>(), j.at("contrast").at("surface").get<std::string>()};
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
        m.mean = j.at("standardization").at("mean").get<std::vector<double>>();
        m.scale = j.at("standardization").at("scale").get<std::vector<double>>();
        if (j.contains("training")) {
            const auto& t = j.at("training");
            m.training.l2_strength = t.value("l2_strength", 0.0);
            m.training.tol = t.value("tol", 0.0);
            m.training.iterations = t.value("iterations", std::size_t(0));
            m.training.converged = t.value("converged", false);
            m.training.final_loss = t.value("final_loss", 0.0);
            m.training.grad_max_norm = t.value("grad_max_norm", 0.0);
            m.training.n_train = t.value("n_train", std::size_t(0));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("probe file: ") + e.what());
    }
    if (m.mean.size() != m.weights.size() || m.scale.size() != m.weights.size()) {
        throw ParseError("probe file: standardization does not match the weight count");
    }
    for (double v : m.weights)
        if (!std::isfinite(v)) throw DataError("probe file has non-finite weights");
    return m;
}

Contrast contrast_for(char underlying, char surface) {
    auto phone = [](char c) { return std::string(1, char(std::tolower(static_cast<unsigned char>(c)))); };
    if (underlying == 'N' && surface == 'G') return {"n", "ng"};
    return {phone(underlying), phone(surface)};
}

const char* to_string(CurveGroup g) {
    switch (g) {
        case CurveGroup::compensation: return "compensation";
        case CurveGroup::no_compensation: return "no_compensation";
        case CurveGroup::control: return "control";
    }
    return "?";
}

std::vector<CurveRow> curves_from_probabilities(const std::vector<StimulusProbabilities>& stimuli) {
    std::map<std::pair<int, CurveGroup>, std::vector<double>> cells;
    for (const auto& s : stimuli)
        for (const auto& [layer, p] : s.prob_underlying) cells[{layer, s.group}].push_back(p);
    std::vector<CurveRow> rows;
    for (const auto& [key, v] : cells) {
        const auto sum = stats::summarize(v);
        rows.push_back({key.first, key.second, sum.mean, sum.sem, sum.n});
    }
    return rows;
}

CurveReport layerwise_curves(const w2v2::Checkpoint& ckpt, const ProbeSet& probes,
                             const std::vector<behavioral::StimulusRecord>& stimuli, std::size_t jobs) {
    struct Slot {
        std::optional<StimulusProbabilities> probs;
        std::string excluded;
    };
    std::vector<Slot> slots(stimuli.size());
    parallel_for(stimuli.size(), jobs, [&](std::size_t i) {
        const auto& r = stimuli[i];
        auto& slot = slots[i];
        try {
            auto it = probes.find(contrast_for(r.underlying_char, r.surface_char));
            if (it == probes.end() || it->second.empty()) {
                slot.excluded = "no probes for this contrast";
                return;
            }
            auto audio = audio::read_audio(r.audio_path);
            if (audio.sample_rate != ckpt.config.sample_rate) audio = audio::resample(audio, ckpt.config.sample_rate);
            const auto store = w2v2::forward(ckpt, audio, w2v2::CaptureSelector::hidden_only());
            const auto align = ctc::greedy_decode(store.logits, ckpt.vocab);
            const auto j = behavioral::judge_compensation(align.transcript, r);
            if (j.verdict == behavioral::Verdict::unjudgeable) {
                slot.excluded = "target word unalignable: " + j.reason;
                return;
            }
            std::size_t frame = 0;
            if (!behavioral::underlying_prob(store.logits, align, ckpt.vocab, r, j, &frame)) {
                slot.excluded = "critical consonant not emitted";
                return;
            }
            StimulusProbabilities sp;
            sp.id = r.id;
            sp.group = r.condition == behavioral::Condition::control ? CurveGroup::control
                       : j.verdict == behavioral::Verdict::compensated ? CurveGroup::compensation
                                                                        : CurveGroup::no_compensation;
            for (const auto& [layer, model] : it->second) {
                sp.prob_underlying[layer] = model.predict_underlying(store.hidden.at(layer).row(frame));
            }
            slot.probs = std::move(sp);
        } catch (const std::exception& e) {
            slot.excluded = e.what();
        }
    });
    CurveReport rep;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i].probs) rep.stimuli.push_back(std::move(*slots[i].probs));
        else rep.excluded.emplace_back(stimuli[i].id, slots[i].excluded);
    }
    rep.rows = curves_from_probabilities(rep.stimuli);
    return rep;
}

std::string curves_csv(const std::vector<CurveRow>& rows) {
    csv::Table t;
    t.header = {"layer", "group", "mean_prob_underlying", "sem", "n"};
    for (const auto& r : rows) {
        t.rows.push_back({std::to_string(r.layer), to_string(r.group), csv::number(r.mean_prob_underlying),
                          csv::number(r.sem), std::to_string(r.n)});
    }
    return csv::format(t);
}

}  // namespace assimlab::probing
