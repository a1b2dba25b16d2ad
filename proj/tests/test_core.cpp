#include "support.hpp"

#include "assimlab/engine.hpp"
#include "assimlab/error.hpp"
#include "assimlab/rng.hpp"
#include "assimlab/safetensors.hpp"
#include "assimlab/tensor.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace assimlab;
using namespace assimlab::testing;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Tensor t = Tensor::matrix(r, c);
    for (float& v : t.values()) v = float(rng.normal());
    return t;
}

std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "assimlab_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("matmul agrees with a double-precision triple loop") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.below(64), k = 1 + rng.below(64), n = 1 + rng.below(64);
        const Tensor a = random_matrix(m, k, rng), b = random_matrix(k, n, rng);
        const Tensor c = matmul(a, b);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double ref = 0.0, mag = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    ref += double(a(i, p)) * double(b(p, j));
                    mag += std::abs(double(a(i, p)) * double(b(p, j)));
                }
                CHECK(std::abs(c(i, j) - ref) <= 1e-4 * std::max(1.0, mag));
            }
        }
    }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    CHECK_THROWS_AS(matmul(Tensor::matrix(2, 3), Tensor::matrix(4, 2)), DimensionError);
}

TEST_CASE("linear uses the [out x in] weight layout") {
    const Tensor x = Tensor::from_rows({{1, 2}});
    const Tensor w = Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}});
    const Tensor b({3}, {0.5f, 0.0f, -1.0f});
    const Tensor y = linear(x, w, &b);
    REQUIRE(y.shape() == std::vector<std::size_t>{1, 3});
    CHECK(y(0, 0) == 1.5f);
    CHECK(y(0, 1) == 2.0f);
    CHECK(y(0, 2) == 2.0f);
}

TEST_CASE("softmax is stable for large inputs and normalizes rows") {
    const Tensor x = Tensor::from_rows({{1000, 1001, 1002}, {-5, -5, -5}});
    const Tensor s = softmax(x, 1);
    CHECK(std::isfinite(s(0, 0)));
    CHECK(s(0, 0) + s(0, 1) + s(0, 2) == doctest::Approx(1.0));
    CHECK(s(1, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(s(0, 2) > s(0, 1));
}

TEST_CASE("layer norm uses the population variance") {
    const Tensor x = Tensor::from_rows({{1, 2, 3, 4}});
    const Tensor g({4}, {1, 1, 1, 1}), b({4}, {0, 0, 0, 0});
    const Tensor y = layer_norm(x, g, b, 0.0f);
    const double sd = std::sqrt(1.25);
    CHECK(y(0, 0) == doctest::Approx(-1.5 / sd).epsilon(1e-6));
    CHECK(y(0, 3) == doctest::Approx(1.5 / sd).epsilon(1e-6));
}

TEST_CASE("gelu is the exact erf form") {
    CHECK(gelu(0.0f) == 0.0f);
    CHECK(gelu(1.0f) == doctest::Approx(0.8413447460685429).epsilon(1e-6));
    CHECK(gelu(-1.0f) == doctest::Approx(-0.15865525393145707).epsilon(1e-6));
}

TEST_CASE("conv1d computes a valid strided grouped cross-correlation") {
    // two channels, groups = 2, kernel 2, stride 2
    const Tensor x({2, 5}, {1, 2, 3, 4, 5, 10, 20, 30, 40, 50});
    const Tensor w({2, 1, 2}, {1, -1, 0.5f, 0.5f});
    const Tensor y = conv1d(x, w, 2, nullptr, 2);
    REQUIRE(y.shape() == std::vector<std::size_t>{2, 2});
    CHECK(y(0, 0) == -1.0f);
    CHECK(y(0, 1) == -1.0f);
    CHECK(y(1, 0) == 15.0f);
    CHECK(y(1, 1) == 35.0f);
    CHECK(conv1d_output_length(5, 2, 2) == 2);
}

TEST_CASE("tensor construction enforces the shape invariant") {
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), DimensionError);
    CHECK(Tensor({2, 3}).size() == 6);
}

TEST_CASE("safetensors round-trip is byte-stable") {
    TensorMap m;
    m["b"] = Tensor({2}, {1.5f, -2.0f});
    m["a"] = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
    const auto p1 = temp_path("rt1.safetensors"), p2 = temp_path("rt2.safetensors");
    write_safetensors(p1, m);
    const auto back = read_safetensors(p1);
    CHECK(back.at("a") == m.at("a"));
    CHECK(back.at("b") == m.at("b"));
    write_safetensors(p2, back);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), {}), s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
}

TEST_CASE("safetensors rejects truncated files") {
    const auto p = temp_path("bad.safetensors");
    std::ofstream(p, std::ios::binary) << "abc";
    CHECK_THROWS_AS(read_safetensors(p), Error);
}

TEST_CASE("frame arithmetic of the feature encoder") {
    w2v2::ModelConfig cfg;
    CHECK(cfg.hop() == 320);
    CHECK(cfg.receptive_field() == 400);
    CHECK(w2v2::frame_count(cfg, 128000) == 399);
    CHECK(w2v2::frame_count(cfg, 16000) == 49);
    CHECK(w2v2::frame_count(cfg, 400) == 1);
    CHECK_THROWS_AS(w2v2::frame_count(cfg, 399), InputTooShortError);
}

TEST_CASE("checkpoint loading reports missing files") {
    CHECK_THROWS_AS(w2v2::load_checkpoint(temp_path("no_such_model")), Error);
}

TEST_CASE("tiny checkpoint loads with the expected geometry") {
    const auto& ck = tiny_model();
    CHECK(ck.config.num_layers == 12);
    CHECK(ck.config.num_heads == 12);
    CHECK(ck.layers.size() == 12);
    CHECK(ck.vocab.size() == 32);
    CHECK(ck.vocab.blank() == 0);
    CHECK(ck.vocab.token(ck.vocab.delimiter()) == "|");
    CHECK_FALSE(ck.vocab.emits(ck.vocab.blank()));
    CHECK_THROWS_AS(ck.vocab.id_of('#'), ConfigError);
}

TEST_CASE("resuming from a captured residual stream reproduces the full pass") {
    const auto& ck = tiny_model();
    Rng rng(5);
    audio::AudioBuffer a;
    a.samples.resize(12000);
    for (auto& s : a.samples) s = float(0.1 * rng.normal());
    const auto full = w2v2::forward(ck, a, w2v2::CaptureSelector::hidden_only());
    for (int first : {1, 5, 12, 13}) {
        const auto resumed = w2v2::run_layers(ck, full.hidden.at(first - 1), first, w2v2::CaptureSelector::none());
        CHECK(resumed.logits == full.logits);
    }
}

TEST_CASE("patches are validated against the run") {
    const auto& ck = tiny_model();
    audio::AudioBuffer a;
    a.samples.assign(4000, 0.01f);
    w2v2::Patch p;
    p.component = w2v2::Component::mlp_output;
    p.layer = 13;
    p.frames = {0};
    p.rows = Tensor::matrix(1, ck.config.hidden_dim);
    CHECK_THROWS_AS(w2v2::forward(ck, a, {}, {p}), RangeError);
    p.layer = 2;
    p.frames = {1000};
    CHECK_THROWS_AS(w2v2::forward(ck, a, {}, {p}), RangeError);
    p.frames = {0};
    p.rows = Tensor::matrix(1, 3);
    CHECK_THROWS_AS(w2v2::forward(ck, a, {}, {p}), DimensionError);
}

TEST_CASE("captures are restricted to the requested layers") {
    const auto& ck = tiny_model();
    audio::AudioBuffer a;
    a.samples.assign(4000, 0.0f);
    w2v2::CaptureSelector cap;
    cap.mlp_out = true;
    cap.layers = {3, 7};
    const auto s = w2v2::forward(ck, a, cap);
    CHECK(s.mlp_out.size() == 2);
    CHECK(s.mlp_out.count(3) == 1);
    CHECK(s.head_out.empty());
}
