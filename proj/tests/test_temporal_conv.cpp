#include <doctest.h>

#include <cmath>

#include "sdlpgc/errors.hpp"
#include "sdlpgc/model.hpp"
#include "sdlpgc/temporal_conv.hpp"
#include "support.hpp"

using namespace sdlpgc;
using ag::Var;

namespace {

struct Stack {
    nn::ParamStore store;
    std::mt19937_64 rng;
    tc::GatedTC gated;

    Stack(std::size_t cin, std::size_t cout, std::size_t dilation, std::uint64_t seed = 1)
        : rng(seed), gated(nn::ParamBuilder(store, rng, "tc"), cin, cout, tc::kDefaultKernels, dilation) {}
};

void fill(const Var& v, double value) {
    Var alias = v;
    alias.mutable_value().fill(value);
}

// Direct per-timestep sum: branch with kernel k reads the k most recent
// dilated taps ending at the aligned input step.
Tensor inception_oracle(const tc::DilatedInception& inc, const Tensor& x) {
    const std::size_t B = x.dim(0), C = x.dim(1), N = x.dim(2), T = x.dim(3), d = inc.dilation();
    const std::size_t span = d * (inc.max_kernel() - 1), Tp = T - span;
    const std::size_t per = inc.weights()[0].dim(0);
    Tensor out({B, per * inc.kernels().size(), N, Tp});
    for (std::size_t br = 0; br < inc.kernels().size(); ++br) {
        const std::size_t k = inc.kernels()[br];
        const Tensor& w = inc.weights()[br].value();
        const Tensor& bias = inc.biases()[br].value();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < per; ++o)
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t t = 0; t < Tp; ++t) {
                        const std::size_t now = t + span;
                        double acc = bias[o];
                        for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t m = 0; m < k; ++m)
                                acc += w.at({o, c, m}) * x.at({b, c, n, now - (k - 1 - m) * d});
                        out.at({b, br * per + o, n, t}) = acc;
                    }
    }
    return out;
}

}  // namespace

TEST_CASE("receptive field sums the per-block spans") {
    CHECK(tc::receptive_field(2, 2) == 1 + 6 * 1 + 6 * 2);
    CHECK(tc::receptive_field(2, 2) == 19);
    CHECK(tc::receptive_field(1, 1) == 7);
    CHECK(tc::receptive_field(2, 1) == 13);
    CHECK(tc::receptive_field(3, 2, 3) == 1 + 2 * (1 + 2 + 4));
    CHECK(tc::dilation_schedule(3, 2) == std::vector<std::size_t>{1, 2, 4});

    CHECK_NOTHROW(tc::check_receptive_field(1, 1, 7, 12));
    CHECK_THROWS_AS(tc::check_receptive_field(2, 1, 7, 12), ConfigError);
    try {
        tc::check_receptive_field(2, 2, 7, 12);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("19") != std::string::npos);
        CHECK(msg.find("(1, 1)") != std::string::npos);
    }
}

TEST_CASE("model config rejects an unpadded stack that does not fit") {
    ModelConfig c;
    c.num_nodes = 3;
    c.padding = PaddingPolicy::none;
    CHECK_THROWS_AS(c.validate(), ConfigError);  // 13 > 12
    c.blocks = 1;
    CHECK_NOTHROW(c.validate());
    c.blocks = 2;
    c.padding = PaddingPolicy::left;
    CHECK_NOTHROW(c.validate());
    CHECK(c.padding_len() == 1);
    c.dilation_base = 2;
    CHECK(c.padded_input_len() == 19);
    CHECK(c.padding_len() == 7);
}

TEST_CASE("inception with a lag-0 delta kernel projects and crops the input") {
    Stack s(2, 8, 1);
    const auto& inc = s.gated.filter();
    // channel projection P[o][c] shared by every branch
    const double P[2][2] = {{1.5, -0.5}, {0.25, 2.0}};
    for (std::size_t br = 0; br < 4; ++br) {
        Var w = inc.weights()[br];
        Tensor& wt = w.mutable_value();
        wt.fill(0.0);
        const std::size_t k = inc.kernels()[br];
        for (std::size_t o = 0; o < 2; ++o)
            for (std::size_t c = 0; c < 2; ++c) wt.at({o, c, k - 1}) = P[o][c];
        fill(inc.biases()[br], 0.0);
    }
    std::mt19937_64 rng(3);
    const Tensor x = testing::random_tensor({2, 2, 3, 10}, rng);
    const Tensor y = inc(Var(x)).value();
    REQUIRE(y.shape() == Shape{2, 8, 3, 4});
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t br = 0; br < 4; ++br)
            for (std::size_t o = 0; o < 2; ++o)
                for (std::size_t n = 0; n < 3; ++n)
                    for (std::size_t t = 0; t < 4; ++t) {
                        const double expect = P[o][0] * x.at({b, 0, n, t + 6}) + P[o][1] * x.at({b, 1, n, t + 6});
                        CHECK(y.at({b, br * 2 + o, n, t}) == doctest::Approx(expect).epsilon(1e-12));
                    }
}

TEST_CASE("inception matches the naive convolution loop") {
    for (std::size_t d : {1, 2}) {
        Stack s(2, 4, d, 10 + d);
        std::mt19937_64 rng(d);
        const std::size_t T = d == 1 ? 13 : 16;
        const Tensor x = testing::random_tensor({2, 2, 3, T}, rng);
        const Tensor y = s.gated.filter()(Var(x)).value();
        const Tensor expect = inception_oracle(s.gated.filter(), x);
        REQUIRE(y.shape() == expect.shape());
        CHECK(max_abs_diff(y, expect) < 1e-6);
    }
}

TEST_CASE("inception length boundaries") {
    for (std::size_t d : {1, 2, 3}) {
        Stack s(1, 4, d);
        const auto& inc = s.gated.filter();
        CHECK(inc.output_length(1 + 6 * d) == 1);
        CHECK(inc.output_length(20 + 6 * d) == 20);
        CHECK(inc(Var(Tensor({1, 1, 2, 1 + 6 * d}))).dim(3) == 1);
        try {
            inc(Var(Tensor({1, 1, 2, 6 * d})));
            FAIL("expected a length error");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find("T=" + std::to_string(1 + 6 * d)) != std::string::npos);
        }
    }
}

TEST_CASE("gating") {
    std::mt19937_64 rng(4);
    const Tensor x = testing::random_tensor({2, 4, 3, 9}, rng, -3, 3);

    SUBCASE("closed gate halves tanh of the filter") {
        Stack s(4, 8, 1);
        for (const auto& w : s.gated.gate().weights()) fill(w, 0.0);
        for (const auto& b : s.gated.gate().biases()) fill(b, 0.0);
        const Tensor f = s.gated.filter()(Var(x)).value();
        const Tensor y = s.gated(Var(x)).value();
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(0.5 * std::tanh(f[i])).epsilon(1e-14));
    }
    SUBCASE("zero filter gives zero output") {
        Stack s(4, 8, 1);
        for (const auto& w : s.gated.filter().weights()) fill(w, 0.0);
        for (const auto& b : s.gated.filter().biases()) fill(b, 0.0);
        const Tensor y = s.gated(Var(x)).value();
        for (double v : y.values()) CHECK(v == 0.0);
    }
    SUBCASE("outputs stay inside (-1, 1)") {
        Stack s(4, 8, 1, 99);
        for (const auto& w : s.gated.filter().weights())
            for (double& v : Var(w).mutable_value().values()) v *= 3.0;
        const Tensor moderate = testing::random_tensor({2, 4, 3, 9}, rng, -4, 4);
        const Tensor y = s.gated(Var(moderate)).value();
        for (double v : y.values()) {
            CHECK(v > -1.0);
            CHECK(v < 1.0);
        }
        // far inputs saturate to the closed bound in floating point
        const Tensor far = s.gated(Var(testing::random_tensor({2, 4, 3, 9}, rng, -50, 50))).value();
        for (double v : far.values()) CHECK(std::abs(v) <= 1.0);
    }
}

TEST_CASE("temporal convolution is causal") {
    Stack s(2, 8, 1, 5);
    std::mt19937_64 rng(6);
    const std::size_t T = 12, span = 6;
    const Tensor x = testing::random_tensor({1, 2, 3, T}, rng);
    const Tensor base = s.gated(Var(x)).value();
    for (std::size_t tau = 0; tau < T; ++tau) {
        Tensor xp = x;
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t n = 0; n < 3; ++n) xp.at({0, c, n, tau}) += 5.0;
        const Tensor y = s.gated(Var(xp)).value();
        for (std::size_t t = 0; t < T - span; ++t) {
            // output t is aligned with input step t + span
            double diff = 0.0;
            for (std::size_t c = 0; c < 8; ++c)
                for (std::size_t n = 0; n < 3; ++n) diff = std::max(diff, std::abs(y.at({0, c, n, t}) - base.at({0, c, n, t})));
            if (t + span < tau) CHECK(diff == 0.0);
            if (t + span == tau) CHECK(diff > 0.0);
        }
    }
}

TEST_CASE("shape law across dilations and kernel sets") {
    for (std::size_t d : {1, 2, 4}) {
        nn::ParamStore store;
        std::mt19937_64 rng(1);
        tc::DilatedInception inc(nn::ParamBuilder(store, rng), 1, 6, {2, 3, 5}, d);
        const std::size_t T = 30;
        CHECK(inc(Var(Tensor({1, 1, 2, T}))).dim(3) == T - d * 4);
    }
    nn::ParamStore store;
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(tc::DilatedInception(nn::ParamBuilder(store, rng), 1, 6, {2, 3, 6, 7}, 1), ConfigError);
}
