// Acceptance suite: one PASS/FAIL line per top-level criterion, with the
// measured quantities. Exit status is nonzero when any criterion fails.

#include "support.hpp"

#include "assimlab/assemble.hpp"
#include "assimlab/audio.hpp"
#include "assimlab/bigram.hpp"
#include "assimlab/csv.hpp"
#include "assimlab/error.hpp"
#include "assimlab/ctc.hpp"
#include "assimlab/engine.hpp"
#include "assimlab/experiment.hpp"
#include "assimlab/intervention.hpp"
#include "assimlab/probe.hpp"
#include "assimlab/resample.hpp"
#include "assimlab/rng.hpp"
#include "assimlab/safetensors.hpp"
#include "assimlab/stats.hpp"
#include "assimlab/timit.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace assimlab;
using namespace assimlab::testing;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;
    std::vector<std::string> not_run;

    void check(bool ok, const std::string& what) {
        if (!ok) pass = false;
        notes.push_back(std::string(ok ? "ok " : "FAILED ") + what);
    }
};

std::string fmt(double v, int prec = 6) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const char* env(const char* name) {
    const char* v = std::getenv(name);
    return v && *v ? v : nullptr;
}

// ---------------------------------------------------------------------------
// Forward parity

Outcome forward_parity() {
    Outcome o;
    const auto& ck = tiny_model();
    const auto index = nlohmann::json::parse(csv::read_text(golden_dir() / "index.json"));
    const double tol = index.at("tolerance_max_abs").get<double>();
    for (const auto& clip : index.at("clips")) {
        const std::string id = clip.at("id");
        const auto golden = read_safetensors(golden_dir() / clip.at("tensors").get<std::string>());
        const auto audio = audio::read_wav(golden_dir() / clip.at("wav").get<std::string>());

        const auto t0 = Clock::now();
        const auto store = w2v2::forward(ck, audio, w2v2::CaptureSelector::all());
        const double secs = seconds_since(t0);

        double worst = max_abs_diff(store.logits, golden.at("logits"));
        o.check(worst <= tol, id + " logits max|diff| " + fmt(worst) + " <= " + fmt(tol));
        double worst_inner = 0.0;
        for (const auto& [name, ref] : golden) {
            const Tensor* mine = nullptr;
            int a = 0, b = 0;
            if (std::sscanf(name.c_str(), "hidden.%d", &a) == 1) mine = &store.hidden.at(a);
            else if (std::sscanf(name.c_str(), "head_out.%d.%d", &a, &b) == 2) mine = &store.head_out.at({a, b});
            else if (std::sscanf(name.c_str(), "value.%d.%d", &a, &b) == 2) mine = &store.value.at({a, b});
            else if (std::sscanf(name.c_str(), "mlp_out.%d", &a) == 1) mine = &store.mlp_out.at(a);
            if (mine) worst_inner = std::max(worst_inner, max_abs_diff(*mine, ref));
        }
        o.check(worst_inner <= tol, id + " captured activations max|diff| " + fmt(worst_inner));

        const auto align = ctc::greedy_decode(store.logits, ck.vocab);
        const std::string expected = clip.at("transcript");
        o.check(align.transcript == expected, id + " transcript \"" + align.transcript + "\"");

        // per-head decomposition versus a monolithic recomputation of the sublayer
        double decomp = 0.0;
        for (int layer = 1; layer <= int(ck.config.num_layers); ++layer) {
            Tensor sum = Tensor::matrix(store.frames(), ck.config.hidden_dim);
            for (int h = 0; h < int(ck.config.num_heads); ++h) add_inplace(sum, store.head_out.at({layer, h}));
            const auto& b = ck.layers[std::size_t(layer - 1)].out_b;
            for (std::size_t r = 0; r < sum.rows(); ++r)
                for (std::size_t c = 0; c < sum.cols(); ++c) sum(r, c) += b[c];
            const auto ref = w2v2::attention_sublayer_reference(ck, layer, store.hidden.at(layer - 1));
            decomp = std::max(decomp, max_abs_diff(sum, ref));
        }
        o.check(decomp <= 1e-4, id + " head-sum vs monolithic attention max|diff| " + fmt(decomp));
        o.check(secs < 30.0, id + " forward " + fmt(secs, 3) + " s");

        const auto again = w2v2::forward(ck, audio, w2v2::CaptureSelector::all());
        o.check(again.logits == store.logits, id + " rerun bit-identical");
    }
    return o;
}

// ---------------------------------------------------------------------------
// CTC

Outcome ctc_properties() {
    Outcome o;
    const auto& vocab = tiny_model().vocab;
    const std::size_t V = vocab.size();
    std::vector<int> letters;
    for (int id = 0; id < int(V); ++id)
        if (vocab.emits(id) && id != vocab.delimiter()) letters.push_back(id);

    auto one_hot = [&](const std::vector<int>& frames) {
        Tensor t = Tensor::matrix(frames.size(), V);
        for (std::size_t i = 0; i < frames.size(); ++i) t(i, std::size_t(frames[i])) = 1.0f;
        return t;
    };

    // explicit collapse cases
    {
        const int b = vocab.blank();
        auto id = [&](char c) { return vocab.id_of(c); };
        const auto a = ctc::greedy_decode(
            one_hot({b, id('H'), id('H'), id('E'), b, id('L'), id('L'), b, id('L'), id('O')}), vocab);
        o.check(a.transcript == "HELLO", "collapse example gives \"" + a.transcript + "\"");
        const auto z = ctc::greedy_decode(one_hot(std::vector<int>(12, b)), vocab);
        o.check(z.transcript.empty() && z.emissions.empty(), "all-blank frames give \"\"");
    }

    Rng rng(12345);
    std::size_t failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t words = 1 + rng.below(5);
        std::string text;
        std::vector<int> frames;
        std::vector<std::size_t> expected_first;
        int last = -1;
        auto blanks = [&](std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) frames.push_back(vocab.blank());
            if (n) last = vocab.blank();
        };
        blanks(rng.below(3));
        for (std::size_t w = 0; w < words; ++w) {
            if (w) {
                text.push_back(' ');
                blanks(rng.below(2));
                const std::size_t n = 1 + rng.below(2);
                for (std::size_t i = 0; i < n; ++i) frames.push_back(vocab.delimiter());
                last = vocab.delimiter();
                blanks(rng.below(2));
            }
            const std::size_t len = 1 + rng.below(8);
            for (std::size_t k = 0; k < len; ++k) {
                const int id = letters[rng.below(letters.size())];
                text += vocab.token(id);
                if (id == last || rng.below(4) == 0) blanks(1 + rng.below(2));
                expected_first.push_back(frames.size());
                const std::size_t run = 1 + rng.below(3);
                for (std::size_t r = 0; r < run; ++r) frames.push_back(id);
                last = id;
            }
        }
        blanks(rng.below(3));

        // low-level noise below the one-hot winner must not matter
        Tensor logits = one_hot(frames);
        for (float& v : logits.values()) v += float(rng.uniform() * 0.5);
        const auto a = ctc::greedy_decode(logits, vocab);
        bool ok = a.transcript == text;
        std::size_t letter = 0;
        for (const auto& e : a.emissions) {
            if (e.symbol == ' ') continue;
            ok = ok && letter < expected_first.size() && e.first_frame == expected_first[letter];
            ++letter;
        }
        ok = ok && letter == expected_first.size();
        if (!ok) ++failures;
    }
    o.check(failures == 0, "1000 random strings round-trip with exact emission frames (" + std::to_string(failures) +
                               " failures)");
    return o;
}

// ---------------------------------------------------------------------------
// Interventions

template <class S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using RowT = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <class S>
MatT<S> to_mat(const Tensor& t) {
    MatT<S> m(t.rows(), t.cols());
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) m(Eigen::Index(r), Eigen::Index(c)) = S(t(r, c));
    return m;
}

template <class S>
RowT<S> to_row(const Tensor& t) {
    RowT<S> v(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) v(Eigen::Index(i)) = S(t[i]);
    return v;
}

template <class S>
MatT<S> layer_norm_rows(const MatT<S>& x, const Tensor& g, const Tensor& b, S eps) {
    MatT<S> out(x.rows(), x.cols());
    const auto gr = to_row<S>(g), br = to_row<S>(b);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const S mean = x.row(r).mean();
        const S var = (x.row(r).array() - mean).square().mean();
        out.row(r) = ((x.row(r).array() - mean) / std::sqrt(var + eps)).matrix().cwiseProduct(gr) + br;
    }
    return out;
}

// One encoder layer computed from scratch with Eigen, written from the
// architecture description: head `head`'s value rows `frames` are replaced
// by `rows` and attention is recomputed.
template <class S>
MatT<S> oracle_layer(const w2v2::Checkpoint& ck, int layer, const MatT<S>& x, int head,
                     const std::vector<std::size_t>& frames, const MatT<S>& rows) {
    const auto& w = ck.layers[std::size_t(layer - 1)];
    const auto d = Eigen::Index(ck.config.hidden_dim), hd = Eigen::Index(ck.config.head_dim());
    auto lin = [&](const MatT<S>& in, const Tensor& W, const Tensor& B) {
        MatT<S> y = in * to_mat<S>(W).transpose();
        y.rowwise() += to_row<S>(B);
        return y;
    };
    MatT<S> q = lin(x, w.q_w, w.q_b), k = lin(x, w.k_w, w.k_b), v = lin(x, w.v_w, w.v_b);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        v.block(Eigen::Index(frames[i]), head * hd, 1, hd) = rows.row(Eigen::Index(i));
    }
    MatT<S> ctx(x.rows(), d);
    for (Eigen::Index h = 0; h < Eigen::Index(ck.config.num_heads); ++h) {
        MatT<S> s = q.middleCols(h * hd, hd) * k.middleCols(h * hd, hd).transpose() / std::sqrt(S(hd));
        for (Eigen::Index r = 0; r < s.rows(); ++r) {
            const S m = s.row(r).maxCoeff();
            s.row(r) = (s.row(r).array() - m).exp().matrix();
            s.row(r) /= s.row(r).sum();
        }
        ctx.middleCols(h * hd, hd) = s * v.middleCols(h * hd, hd);
    }
    const S eps = S(ck.config.layer_norm_eps);
    MatT<S> attn = lin(ctx, w.out_w, w.out_b);
    MatT<S> h1 = layer_norm_rows<S>(x + attn, w.attn_norm_w, w.attn_norm_b, eps);
    MatT<S> ff = lin(h1, w.ff_in_w, w.ff_in_b);
    ff = ff.unaryExpr([](S z) { return S(0.5) * z * (S(1) + std::erf(z / std::sqrt(S(2)))); });
    ff = lin(ff, w.ff_out_w, w.ff_out_b);
    return layer_norm_rows<S>(h1 + ff, w.final_norm_w, w.final_norm_b, eps);
}

template <class S>
Tensor to_tensor(const MatT<S>& m) {
    Tensor t = Tensor::matrix(std::size_t(m.rows()), std::size_t(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) t(std::size_t(r), std::size_t(c)) = float(m(r, c));
    return t;
}

// The same layer from the library's dense primitives: the value matrix is
// overwritten in place and attention is recomputed over full matrices, with
// no patch machinery. Each head's output projection is accumulated in head
// order before the bias, the order the architecture's decomposition
// defines; a recomputation that sums in another order already sits about
// ten float32 ulps away from the engine after the remaining layers.
Tensor brute_force_layer(const w2v2::Checkpoint& ck, int layer, const Tensor& x, int head,
                         const std::vector<std::size_t>& frames, const Tensor& rows) {
    const auto& w = ck.layers[std::size_t(layer - 1)];
    const std::size_t T = x.rows(), d = ck.config.hidden_dim, hd = ck.config.head_dim();
    Tensor q = linear(x, w.q_w, &w.q_b);
    for (float& s : q.values()) s *= 1.0f / std::sqrt(float(hd));
    const Tensor k = linear(x, w.k_w, &w.k_b);
    Tensor v = linear(x, w.v_w, &w.v_b);
    for (std::size_t i = 0; i < frames.size(); ++i)
        for (std::size_t c = 0; c < hd; ++c) v(frames[i], std::size_t(head) * hd + c) = rows(i, c);
    auto cols = [](const Tensor& m, std::size_t first, std::size_t n) {
        Tensor out = Tensor::matrix(m.rows(), n);
        for (std::size_t r = 0; r < m.rows(); ++r)
            for (std::size_t c = 0; c < n; ++c) out(r, c) = m(r, first + c);
        return out;
    };
    Tensor attn = Tensor::matrix(T, d);
    for (std::size_t h = 0; h < ck.config.num_heads; ++h) {
        const Tensor probs = softmax(matmul(cols(q, h * hd, hd), transpose(cols(k, h * hd, hd))), 1);
        const Tensor ctx = matmul(probs, cols(v, h * hd, hd));
        add_inplace(attn, matmul(ctx, transpose(cols(w.out_w, h * hd, hd))));
    }
    for (std::size_t r = 0; r < T; ++r)
        for (std::size_t c = 0; c < d; ++c) attn(r, c) += w.out_b[c];
    add_inplace(attn, x);
    const Tensor h1 = layer_norm(attn, w.attn_norm_w, w.attn_norm_b, ck.config.layer_norm_eps);
    Tensor ff = linear(gelu(linear(h1, w.ff_in_w, &w.ff_in_b)), w.ff_out_w, &w.ff_out_b);
    Tensor out = h1;
    add_inplace(out, ff);
    return layer_norm(out, w.final_norm_w, w.final_norm_b, ck.config.layer_norm_eps);
}

Outcome intervention_invariants() {
    Outcome o;
    const auto& ck = tiny_model();
    const auto tone = audio::read_wav(golden_dir() / "tone_1s.wav");
    const auto babble = audio::read_wav(golden_dir() / "babble_2s.wav");
    const int L = int(ck.config.num_layers), H = int(ck.config.num_heads);

    // same-run patches over every component
    {
        const auto full = w2v2::forward(ck, tone, w2v2::CaptureSelector::all());
        const std::size_t T = full.frames();
        std::size_t components = 0, exact = 0, exact_resumed = 0;
        for (int layer = 1; layer <= L; ++layer) {
            for (int h = -1; h < H; ++h) {
                intervention::InterventionSpec s;
                s.layer = layer;
                s.component = h < 0 ? w2v2::Component::mlp_output : w2v2::Component::head_output;
                s.head = h;
                s.frames = s.source_frames = {0, T - 1};
                const auto a = intervention::run_with_interventions(ck, tone, full, {s});
                const auto b = intervention::run_with_interventions(ck, full, full, {s});
                ++components;
                exact += a.logits == full.logits;
                exact_resumed += b.logits == full.logits;
            }
        }
        o.check(components == 156 && exact == components && exact_resumed == components,
                "same-run patches bit-exact: " + std::to_string(exact) + "/" + std::to_string(components) +
                    " from audio, " + std::to_string(exact_resumed) + " resumed");
    }

    // head_value patches against the double-precision recomputation
    {
        w2v2::CaptureSelector cap = w2v2::CaptureSelector::all();
        const auto target = w2v2::forward(ck, tone, cap);
        const auto source = w2v2::forward(ck, babble, cap);
        const ctc::FrameSpan tf{10, 16}, sf{40, 46};
        std::vector<std::size_t> frames;
        for (std::size_t f = tf.first; f <= tf.last; ++f) frames.push_back(f);
        // Primary oracle: the dense-primitive recomputation above. Second
        // opinion: an Eigen float64 recomputation, whose own unpatched
        // distance from the engine is pure rounding; the patch may not add
        // more than the tolerance on top of that floor.
        double worst = 0.0, floor_brute = 0.0, worst64 = 0.0, floor64 = 0.0, moved = 0.0;
        for (int layer = 1; layer <= L; ++layer) {
            const Tensor& x = target.hidden.at(layer - 1);
            const MatT<double> x64 = to_mat<double>(x);
            for (int h = 0; h < H; ++h) {
                intervention::InterventionSpec s{layer, w2v2::Component::head_value, h, tf, sf};
                const auto patched = intervention::run_with_interventions(ck, target, source, {s});
                auto rest = [&](const Tensor& y) {
                    return w2v2::run_layers(ck, y, layer + 1, w2v2::CaptureSelector::none()).logits;
                };
                auto slice = [](const Tensor& m, ctc::FrameSpan span) {
                    Tensor out = Tensor::matrix(span.length(), m.cols());
                    for (std::size_t r = 0; r < span.length(); ++r)
                        for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(span.first + r, c);
                    return out;
                };
                const Tensor rows = slice(source.value.at({layer, h}), sf);
                const Tensor own = slice(target.value.at({layer, h}), tf);
                worst = std::max(worst, max_abs_diff(patched.logits, rest(brute_force_layer(ck, layer, x, h, frames, rows))));
                floor_brute = std::max(floor_brute, max_abs_diff(target.logits, rest(brute_force_layer(ck, layer, x, h, frames, own))));

                const auto b64 = rest(to_tensor<double>(oracle_layer<double>(ck, layer, x64, h, frames, to_mat<double>(rows))));
                const auto u64 = rest(to_tensor<double>(oracle_layer<double>(ck, layer, x64, h, frames, to_mat<double>(own))));
                worst64 = std::max(worst64, max_abs_diff(patched.logits, b64));
                floor64 = std::max(floor64, max_abs_diff(target.logits, u64));
                moved = std::max(moved, max_abs_diff(patched.logits, target.logits));
            }
        }
        o.check(worst <= 1e-5, "head_value patches vs brute-force recomputation max|diff| " + fmt(worst) +
                                   " over 144 heads (same recomputation unpatched: " + fmt(floor_brute) +
                                   "; largest patch effect " + fmt(moved) + ")");
        o.check(worst64 <= floor64 + 1e-5, "float64 recomputation: patched " + fmt(worst64) + " vs unpatched floor " +
                                               fmt(floor64));
    }

    // sweep grid shape
    {
        const auto setup = intervention::prepare_sweep(ck, tone, babble, 'N', 'M', 0, 0);
        const auto positions = intervention::canonical_positions(0, 0, 0, 0, 1, 1);
        const auto results = intervention::sweep_components(ck, setup, positions);
        const auto table = csv::parse(intervention::sweep_csv(results));
        std::map<std::string, std::size_t> rows;
        for (const auto& r : table.rows) ++rows[r[table.column("position")]];
        bool ok = rows.size() == 6;
        for (const auto& [p, n] : rows) ok = ok && n == std::size_t(L * (H + 1));
        o.check(ok, "sweep CSV: " + std::to_string(rows.size()) + " positions x " +
                        std::to_string(rows.empty() ? 0 : rows.begin()->second) + " rows");
    }
    return o;
}

// ---------------------------------------------------------------------------
// Behavioral

Outcome behavioral_reproduction() {
    Outcome o;
    const auto records = behavioral::load_manifest(data_dir() / "exp1_stimuli.csv");
    const auto table = csv::read(data_dir() / "exp1_annotated_transcripts.csv");
    std::map<std::string, std::string> transcripts, expected;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        transcripts[table.at(i, "id")] = table.at(i, "transcript");
        expected[table.at(i, "id")] = table.at(i, "expected_verdict");
    }

    // counts straight from the annotated table
    std::map<std::string, std::pair<long, long>> want;  // condition -> (k, n)
    for (const auto& r : records) {
        auto& [k, n] = want[behavioral::to_string(r.condition)];
        const auto& v = expected.at(r.id);
        if (v == "unjudgeable") continue;
        ++n;
        k += v == "compensated";
    }

    const auto rep = behavioral::evaluate_transcripts(records, transcripts, {});
    std::size_t agree = 0;
    for (const auto& item : rep.items) agree += expected.at(item.record.id) == behavioral::to_string(item.judgement.verdict);
    o.check(agree == records.size(), "per-item verdicts agree with the table: " + std::to_string(agree) + "/" +
                                         std::to_string(records.size()));

    std::map<std::string, const behavioral::ConditionSummary*> got;
    for (const auto& c : rep.conditions) got[behavioral::to_string(c.condition)] = &c;
    for (const auto& [cond, kn] : want) {
        const auto* c = got.count(cond) ? got.at(cond) : nullptr;
        o.check(c && c->k == kn.first && c->n == kn.second,
                cond + " " + (c ? std::to_string(c->k) + "/" + std::to_string(c->n) : std::string("missing")) +
                    " (table " + std::to_string(kn.first) + "/" + std::to_string(kn.second) + ")");
    }
    const auto& via = *got.at("viable");
    const auto& unv = *got.at("unviable");
    o.check(via.k == 36 && via.n == 48 && unv.k == 19 && unv.n == 48 && got.at("control")->k == 47,
            "counts 36/48, 19/48, 47/48");
    o.check(via.rate > unv.rate, "viable rate " + fmt(via.rate, 4) + " > unviable rate " + fmt(unv.rate, 4));
    o.check(std::abs(unv.rate * 100.0 - 40.0) <= 5.0, "unviable rate " + fmt(unv.rate * 100.0, 4) + "% within 40 +/- 5");

    if (const char* corpus_path = env("LIBRISPEECH_TRANSCRIPTS")) {
        const auto corpus = behavioral::BigramCorpus::from_file(corpus_path);
        using behavioral::MatchMode;
        const long gs = corpus.count("GREAT", "MATCH", MatchMode::strict);
        const long gl = corpus.count("GREAT", "MATCH", MatchMode::loose);
        const long ol = corpus.count("OWN", "LIFE", MatchMode::strict);
        o.check(gs == 40 && gl == 43, "great match strict " + std::to_string(gs) + " loose " + std::to_string(gl));
        o.check(ol == 1025, "own life strict " + std::to_string(ol));
    } else {
        o.not_run.push_back("bigram counts (set LIBRISPEECH_TRANSCRIPTS to a LibriSpeech transcript file or directory)");
    }
    return o;
}

// ---------------------------------------------------------------------------
// Statistics

Outcome statistics() {
    Outcome o;
    {
        const auto w = stats::wilson_interval(24, 48, 1.96);
        // independent evaluation in long double
        const long double n = 48, p = 0.5L, z = 1.96L;
        const long double centre = (p + z * z / (2 * n)) / (1 + z * z / n);
        const long double half = z / (1 + z * z / n) * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
        o.check(std::abs(w.low - double(centre - half)) < 1e-12 && std::abs(w.high - double(centre + half)) < 1e-12,
                "Wilson(24,48) matches long-double evaluation");
        // statsmodels proportion_confint(24, 48, method="wilson"), exact 97.5% quantile
        o.check(std::abs(w.low - 0.3638933) <= 1e-5 && std::abs(w.high - 0.6361067) <= 1e-5,
                "Wilson(24,48) = (" + fmt(w.low, 5) + ", " + fmt(w.high, 5) + ") matches an external package");
        o.notes.push_back("note the rounded target (0.366, 0.634) is 2.1e-3 from this score-interval value; see README");
    }
    {
        const std::vector<double> x{1, 2, 3, 4, 5};
        const std::vector<double> rev{5, 4, 3, 2, 1};
        const std::vector<double> swap{2, 1, 4, 3, 5};
        const double a = stats::spearman_rho(x, x).rho, b = stats::spearman_rho(x, rev).rho,
                     c = stats::spearman_rho(x, swap).rho;
        o.check(a == 1.0 && b == -1.0, "identical -> " + fmt(a) + ", reversed -> " + fmt(b));
        o.check(std::abs(c - 0.8) < 1e-15, "two swapped pairs -> " + fmt(c, 17) + " (1 - 6*4/120 = 0.8)");
        const std::vector<double> tx{1, 2, 2, 3}, ty{1, 3, 3, 4};
        o.check(std::abs(stats::spearman_rho(tx, ty).rho - 1.0) < 1e-15, "tied ranks, same order -> 1");
    }
    {
        Rng rng(7);
        std::size_t held = 0;
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = 5 + rng.below(60);
            std::vector<double> x(n), y(n), fx(n), gy(n);
            for (std::size_t i = 0; i < n; ++i) {
                x[i] = rng.normal();
                y[i] = 0.5 * x[i] + rng.normal();
                if (rng.below(5) == 0) y[i] = std::round(y[i]);  // some ties
                fx[i] = std::exp(x[i]);
                gy[i] = y[i] * y[i] * y[i] + 2.0 * y[i];
            }
            const double r1 = stats::spearman_rho(x, y).rho, r2 = stats::spearman_rho(fx, gy).rho;
            held += std::abs(r1 - r2) < 1e-12;
        }
        o.check(held == 100, "monotone-transform invariance on " + std::to_string(held) + "/100 datasets");
    }
    return o;
}

// ---------------------------------------------------------------------------
// Probing

probing::ProbeDataset make_dataset(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
    probing::ProbeDataset ds;
    ds.contrast = {"a", "b"};
    ds.features = Tensor::matrix(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) ds.features(r, c) = float(rows[r][c]);
    ds.labels = labels;
    return ds;
}

Outcome probing_suite() {
    Outcome o;
    const auto t0 = Clock::now();
    Rng rng(3);
    {
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            const Eigen::Index n = 30, d = 6;
            Eigen::MatrixXd z(n, d);
            Eigen::VectorXd y(n), w(d);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < d; ++j) z(i, j) = rng.normal();
                y(i) = double(rng.below(2));
            }
            for (Eigen::Index j = 0; j < d; ++j) w(j) = rng.normal();
            const double b = rng.normal(), l2 = 0.3, eps = 1e-6;
            const auto g = probing::logistic_loss(z, y, w, b, l2);
            Eigen::VectorXd num(d + 1), ana(d + 1);
            for (Eigen::Index j = 0; j < d; ++j) {
                Eigen::VectorXd wp = w, wm = w;
                wp(j) += eps;
                wm(j) -= eps;
                num(j) = (probing::logistic_loss(z, y, wp, b, l2).loss - probing::logistic_loss(z, y, wm, b, l2).loss) /
                         (2 * eps);
                ana(j) = g.grad_w(j);
            }
            num(d) = (probing::logistic_loss(z, y, w, b + eps, l2).loss - probing::logistic_loss(z, y, w, b - eps, l2).loss) /
                     (2 * eps);
            ana(d) = g.grad_b;
            worst = std::max(worst, (num - ana).norm() / std::max(1e-12, (num + ana).norm()));
        }
        o.check(worst < 1e-4, "gradient vs central differences, relative error " + fmt(worst));
    }
    {
        auto blobs = [&](std::size_t per_class) {
            std::vector<std::vector<double>> rows;
            std::vector<int> labels;
            for (int label = 0; label < 2; ++label) {
                const double m = label ? 3.0 : -3.0;
                for (std::size_t i = 0; i < per_class; ++i) {
                    rows.push_back({m + rng.normal(), m + rng.normal()});
                    labels.push_back(label);
                }
            }
            return make_dataset(rows, labels);
        };
        const auto train = blobs(500), test = blobs(500);
        const auto model = probing::train_probe(train);
        const double acc = probing::accuracy(model, test);
        o.check(acc >= 0.99, "separable blobs test accuracy " + fmt(acc, 4));
    }
    {
        auto noise = [&](std::size_t n) {
            std::vector<std::vector<double>> rows;
            std::vector<int> labels;
            for (std::size_t i = 0; i < n; ++i) {
                std::vector<double> r(10);
                for (auto& v : r) v = rng.normal();
                rows.push_back(r);
                labels.push_back(int(i % 2));
            }
            return make_dataset(rows, labels);
        };
        const auto train = noise(2000), test = noise(4000);
        const auto model = probing::train_probe(train);
        const double acc = probing::accuracy(model, test);
        o.check(std::abs(acc - 0.5) <= 0.05, "label-independent features test accuracy " + fmt(acc, 4));
    }
    {
        const auto ds = make_dataset({{-1.0}, {1.0}}, {0, 1});
        const auto m = probing::train_probe(ds);
        o.check(std::abs(m.bias) < 1e-3 && m.weights.at(0) > 0,
                "symmetric 1-D pair: bias " + fmt(m.bias) + ", weight " + fmt(m.weights.at(0)));
    }
    const double secs = seconds_since(t0);
    o.check(secs < 300.0, "probe suite " + fmt(secs, 3) + " s");

    const char* timit = env("TIMIT_DIR");
    const char* model = env("ASSIMLAB_MODEL");
    if (timit && model) {
        const auto ck = w2v2::load_checkpoint(model);
        const auto fold = probing::PhoneFold::load(data_dir() / "timit_phone_fold.json");
        const auto corpus = probing::ingest_timit(timit, 1000, 200);
        const probing::Contrast nm{"n", "m"};
        const std::vector<int> layers{1, 6, 9, 12};
        const auto train = probing::build_frame_datasets(ck, corpus.train.utterances, nm, layers, fold, "train", 0);
        const auto test = probing::build_frame_datasets(ck, corpus.test.utterances, nm, layers, fold, "test", 0);
        const double tr = double(train.at(1).count(0)), te = double(test.at(1).count(0));
        o.check(std::abs(tr / 3325.0 - 1.0) <= 0.10 && std::abs(te / 773.0 - 1.0) <= 0.10,
                "n/m frames per class " + fmt(tr) + " / " + fmt(te) + " (3325 / 773 +/- 10%)");
        std::map<int, double> acc;
        for (int l : layers) acc[l] = probing::accuracy(probing::train_probe(train.at(l)), test.at(l));
        o.check(std::max({acc[6], acc[9], acc[12]}) > acc[1],
                "test accuracy L1 " + fmt(acc[1], 4) + ", L6 " + fmt(acc[6], 4) + ", L9 " + fmt(acc[9], 4) + ", L12 " +
                    fmt(acc[12], 4));
    } else {
        o.not_run.push_back("TIMIT frame counts and layer accuracies (set TIMIT_DIR and ASSIMLAB_MODEL)");
    }
    return o;
}

// ---------------------------------------------------------------------------
// Assembly and resampling

audio::AudioBuffer pcm_noise(std::size_t n, Rng& rng) {
    audio::AudioBuffer a;
    a.samples.resize(n);
    for (auto& s : a.samples) s = float(std::int64_t(rng.below(40000)) - 20000) / 32768.0f;
    return a;
}

// Windowed DFT power at bin k of N (direct evaluation).
double dft_power(const std::vector<double>& x, std::size_t k) {
    const double N = double(x.size());
    double re = 0.0, im = 0.0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double ph = -2.0 * M_PI * double(k) * double(n) / N;
        re += x[n] * std::cos(ph);
        im += x[n] * std::sin(ph);
    }
    return re * re + im * im;
}

struct SineResult {
    double peak_hz = 0.0;
    double alias_db = 0.0;
};

SineResult sine_test(double freq, std::size_t from, std::size_t to) {
    audio::AudioBuffer in;
    in.sample_rate = from;
    in.samples.resize(from * 2);
    for (std::size_t i = 0; i < in.samples.size(); ++i) {
        in.samples[i] = float(0.5 * std::sin(2.0 * M_PI * freq * double(i) / double(from)));
    }
    const auto out = audio::resample(in, to);
    const std::size_t N = 4000;  // 4 Hz bins at 16 kHz, so 1 kHz is bin 250
    const std::size_t start = (out.samples.size() - N) / 2;
    std::vector<double> x(N);
    for (std::size_t n = 0; n < N; ++n) {
        const double t = 2.0 * M_PI * double(n) / double(N - 1);
        const double w = 0.35875 - 0.48829 * std::cos(t) + 0.14128 * std::cos(2 * t) - 0.01168 * std::cos(3 * t);
        x[n] = w * out.samples[start + n];
    }
    const std::size_t signal_bin = std::size_t(std::llround(freq * double(N) / double(to)));
    double total = 0.0, signal = 0.0, peak = -1.0;
    std::size_t peak_bin = 0;
    for (std::size_t k = 0; k <= N / 2; ++k) {
        const double p = dft_power(x, k);
        total += p;
        if (k + 4 >= signal_bin && k <= signal_bin + 4) signal += p;  // main lobe of the window
        if (p > peak) peak = p, peak_bin = k;
    }
    return {double(peak_bin) * double(to) / double(N), 10.0 * std::log10(std::max(total - signal, 1e-300) / signal)};
}

Outcome assembly_suite() {
    Outcome o;
    Rng rng(99);
    auto verbatim = [](const audio::Assembly& a, const audio::AudioBuffer& seg, std::size_t idx) {
        const auto& p = a.placements.at(idx);
        return p.length == seg.size() && p.offset + p.length <= a.audio.size() &&
               std::memcmp(a.audio.samples.data() + p.offset, seg.samples.data(), seg.size() * sizeof(float)) == 0;
    };

    std::size_t built = 0, exact_len = 0, exact_segments = 0, segments = 0;
    auto verify = [&](const audio::AssemblyPlan& plan) {
        const auto a = audio::assemble_stimulus(plan);
        ++built;
        exact_len += a.audio.size() == 128000 && a.audio.sample_rate == 16000;
        for (std::size_t i = 0; i < plan.segments.size(); ++i) {
            ++segments;
            exact_segments += verbatim(a, plan.segments[i], i);
        }
        // the file written to disk holds the same samples
        const auto back = audio::parse_wav(audio::encode_wav(a.audio));
        return back.samples == a.audio.samples;
    };
    bool roundtrip = true;
    for (int trial = 0; trial < 20; ++trial) {
        audio::AssemblyPlan single;
        single.segments = {pcm_noise(8000 + rng.below(100000), rng)};
        if (trial % 2) single.silence = pcm_noise(1000 + rng.below(3000), rng);
        roundtrip = verify(single) && roundtrip;

        audio::AssemblyPlan pair;
        pair.layout = audio::Layout::pair;
        pair.segments = {pcm_noise(8000 + rng.below(40000), rng), pcm_noise(8000 + rng.below(40000), rng)};
        if (trial % 3 == 0) pair.silence = pcm_noise(500 + rng.below(3000), rng);
        roundtrip = verify(pair) && roundtrip;
    }
    o.check(exact_len == built, std::to_string(exact_len) + "/" + std::to_string(built) +
                                    " assemblies are 128000 samples at 16 kHz");
    o.check(exact_segments == segments,
            std::to_string(exact_segments) + "/" + std::to_string(segments) + " segments bit-identical at their offsets");
    o.check(roundtrip, "16-bit WAV encoding preserves assembled samples");

    {
        audio::AssemblyPlan over;
        over.segments = {pcm_noise(130000, rng)};
        bool threw = false;
        try {
            audio::assemble_stimulus(over);
        } catch (const RangeError&) {
            threw = true;
        }
        o.check(threw, "overlong content rejected");
    }

    const auto s = sine_test(1000.0, 44100, 16000);
    o.check(std::abs(s.peak_hz - 1000.0) < 1e-9, "1 kHz sine 44100->16000: peak at " + fmt(s.peak_hz) + " Hz");
    o.check(s.alias_db < -60.0, "energy outside the 1 kHz main lobe " + fmt(s.alias_db, 4) + " dB");
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {"forward parity", forward_parity},
        {"CTC property suite", ctc_properties},
        {"intervention invariants", intervention_invariants},
        {"behavioral reproduction", behavioral_reproduction},
        {"statistics", statistics},
        {"probing", probing_suite},
        {"audio assembly", assembly_suite},
    };
    bool all = true;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << c.name;
        if (!o.not_run.empty()) std::cout << " (gated parts not run: " << o.not_run.size() << ")";
        std::cout << "\n";
        for (const auto& n : o.notes) std::cout << "        " << n << "\n";
        for (const auto& n : o.not_run) std::cout << "        NOT RUN " << n << "\n";
    }
    return all ? 0 : 1;
}
