#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "lpgc_oracle.hpp"
#include "sdlpgc/lpgc.hpp"
#include "support.hpp"

using namespace sdlpgc;
using ag::Var;
using lpgc::BranchConfig;

namespace {

BranchConfig small(std::size_t cin, std::size_t c, std::size_t depth, std::size_t d, bool evolve = true) {
    BranchConfig cfg;
    cfg.in_channels = cin;
    cfg.channels = c;
    cfg.hidden = 3;
    cfg.embed_dim = d;
    cfg.out_channels = c + 1;
    cfg.depth = depth;
    cfg.self_evolution = evolve;
    return cfg;
}

struct Fixture {
    nn::ParamStore store;
    std::mt19937_64 rng;
    lpgc::Branch br;

    Fixture(const BranchConfig& cfg, std::uint64_t seed) : rng(seed), br(nn::ParamBuilder(store, rng, "b"), cfg) {}
    Tensor& p(const std::string& name) { return store.get("b." + name).mutable_value(); }
};

Tensor random_stochastic(std::size_t batch, std::size_t n, std::mt19937_64& rng) {
    Tensor a = testing::random_tensor({batch, n, n}, rng, 0.0, 1.0);
    for (std::size_t r = 0; r < batch * n; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c) s += a[r * n + c];
        for (std::size_t c = 0; c < n; ++c) a[r * n + c] /= s;
    }
    return a;
}

Tensor permute_nodes(const Tensor& x, const std::vector<std::size_t>& perm, std::size_t axis) {
    Tensor out(x.shape());
    std::size_t inner = 1, outer = 1;
    for (std::size_t a = axis + 1; a < x.rank(); ++a) inner *= x.dim(a);
    for (std::size_t a = 0; a < axis; ++a) outer *= x.dim(a);
    const std::size_t n = x.dim(axis);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < inner; ++k) out[(o * n + i) * inner + k] = x[(o * n + perm[i]) * inner + k];
    return out;
}

}  // namespace

TEST_CASE("self-evolution of a zero network is zero") {
    Fixture f(small(2, 2, 3, 2), 1);
    for (const char* n : {"fc1", "fc2", "fc3", "fc4"}) {
        f.p(std::string(n) + ".weight").fill(0.0);
        f.p(std::string(n) + ".bias").fill(0.0);
    }
    std::mt19937_64 rng(1);
    const Tensor ev = f.br.self_evolution(Var(testing::random_tensor({2, 2, 3, 4}, rng)),
                                          Var(testing::random_tensor({3, 2}, rng))).value();
    for (double v : ev.values()) CHECK(v == 0.0);
}

TEST_CASE("self-evolution injects the node embedding") {
    Fixture f(small(2, 2, 3, 2), 2);
    std::mt19937_64 rng(2);
    Tensor x = testing::random_tensor({1, 2, 2, 1}, rng);
    x.at({0, 0, 1, 0}) = x.at({0, 0, 0, 0});
    x.at({0, 1, 1, 0}) = x.at({0, 1, 0, 0});
    const Tensor emb({2, 2}, {0.5, -0.2, -0.7, 0.9});
    const Tensor ev = f.br.self_evolution(Var(x), Var(emb)).value();
    CHECK(std::abs(ev.at({0, 0, 0, 0}) - ev.at({0, 0, 1, 0})) + std::abs(ev.at({0, 1, 0, 0}) - ev.at({0, 1, 1, 0})) >
          1e-6);
}

TEST_CASE("self-evolution matches the scalar oracle") {
    Fixture f(small(2, 2, 3, 3), 3);
    std::mt19937_64 rng(3);
    const Tensor x = testing::random_tensor({1, 2, 2, 1}, rng);
    const Tensor emb = testing::random_tensor({2, 3}, rng);
    const Tensor ev = f.br.self_evolution(Var(x), Var(emb)).value();
    const auto tr = oracle::propagate(f.br, x, random_stochastic(1, 2, rng), emb);
    CHECK(max_abs_diff(ev, tr.evolution) < 1e-6);
}

TEST_CASE("restart probability") {
    Fixture f(small(2, 2, 3, 2), 4);
    std::mt19937_64 rng(4);
    const Var ev(testing::random_tensor({2, 2, 3, 4}, rng, -3, 3));
    const Var z(testing::random_tensor({2, 2, 3, 4}, rng, -3, 3));

    const Tensor a = f.br.restart_probability(ev, z).value();
    CHECK(a.shape() == Shape{2, 1, 3, 4});
    for (double v : a.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    f.p("fc5.weight").fill(0.0);
    f.p("fc5.bias").fill(0.0);
    const Tensor half = f.br.restart_probability(ev, z).value();
    for (double v : half.values()) CHECK(v == 0.5);
    f.p("fc5.bias").fill(20.0);
    const Tensor sat = f.br.restart_probability(ev, z).value();
    for (double v : sat.values()) CHECK(v > 1.0 - 1e-8);
}

TEST_CASE("full restart keeps every later state at the self-evolution") {
    Fixture f(small(2, 2, 4, 2), 5);
    f.p("fc5.bias").fill(40.0);
    f.p("fc5.weight").fill(0.0);
    std::mt19937_64 rng(5);
    const Var x(testing::random_tensor({2, 2, 3, 2}, rng));
    const Var emb(testing::random_tensor({3, 2}, rng));
    const auto prop = f.br.propagate(x, Var(random_stochastic(2, 3, rng)), emb);
    const Tensor ev = f.br.self_evolution(x, emb).value();
    for (std::size_t l = 1; l < 4; ++l) CHECK(max_abs_diff(prop.states[l].value(), ev) < 1e-12);
}

TEST_CASE("no restart over the identity graph is a fixed point") {
    Fixture f(small(2, 2, 4, 2), 6);
    f.p("fc5.bias").fill(-40.0);
    f.p("fc5.weight").fill(0.0);
    std::mt19937_64 rng(6);
    Tensor eye({1, 3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at({0, i, i}) = 1.0;
    const auto prop = f.br.propagate(Var(testing::random_tensor({2, 2, 3, 2}, rng)), Var(eye),
                                     Var(testing::random_tensor({3, 2}, rng)));
    for (std::size_t l = 1; l < 4; ++l) CHECK(max_abs_diff(prop.states[l].value(), prop.states[0].value()) < 1e-12);
}

TEST_CASE("one averaging step over a two-node graph") {
    const Tensor avg({1, 2, 2}, {0.5, 0.5, 0.5, 0.5});
    const Tensor z({1, 1, 2, 1}, {1.0, 0.0});
    const Tensor mixed = ag::node_mix(Var(avg), Var(z)).value();
    CHECK(mixed[0] == doctest::Approx(0.5));
    CHECK(mixed[1] == doctest::Approx(0.5));

    // Same through a branch: alpha = 0 and an identity input map.
    for (bool evolve : {false, true}) {
        Fixture f(small(1, 1, 2, 2, evolve), 7);
        f.p("input_map.weight").fill(1.0);
        f.p("input_map.bias").fill(0.0);
        if (evolve) {
            f.p("fc5.weight").fill(0.0);
            f.p("fc5.bias").fill(-40.0);
        }
        const auto prop = f.br.propagate(Var(z), Var(avg), Var(Tensor({2, 2}, {1, 2, 3, 4})));
        CHECK(prop.states[1].value()[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(prop.states[1].value()[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("propagation rejects graphs that are not row-stochastic") {
    Fixture f(small(2, 2, 2, 2), 8);
    std::mt19937_64 rng(8);
    const Var x(testing::random_tensor({1, 2, 2, 1}, rng));
    const Var emb(testing::random_tensor({2, 2}, rng));
    CHECK_THROWS_AS(f.br.propagate(x, Var(Tensor({1, 2, 2}, {0.6, 0.6, 0.5, 0.5})), emb), std::invalid_argument);
    CHECK_THROWS_AS(f.br.propagate(x, Var(Tensor({1, 2, 2}, {1.2, -0.2, 0.5, 0.5})), emb), std::invalid_argument);
    CHECK_NOTHROW(f.br.propagate(x, Var(Tensor({1, 2, 2}, {0.50005, 0.5, 0.5, 0.5})), emb));
}

TEST_CASE("vectorized propagation matches the per-node oracle") {
    std::mt19937_64 rng(9);
    for (std::size_t trial = 0; trial < 12; ++trial) {
        const std::size_t n = 1 + trial % 6, depth = 1 + trial % 4, c = 1 + trial % 3;
        const bool evolve = trial % 5 != 4;
        Fixture f(small(c + 1, c, depth, 2, evolve), 200 + trial);
        const Tensor x = testing::random_tensor({2, c + 1, n, 2}, rng);
        const Tensor adj = random_stochastic(trial % 2 ? 2 : 1, n, rng);
        const Tensor emb = testing::random_tensor({n, 2}, rng);
        const auto prop = f.br.propagate(Var(x), Var(adj), Var(emb));
        const auto tr = oracle::propagate(f.br, x, adj, emb);
        CHECK(max_abs_diff(prop.output.value(), tr.output) < 1e-10);
        for (std::size_t l = 0; l < depth; ++l) CHECK(max_abs_diff(prop.states[l].value(), tr.states[l]) < 1e-10);
        for (std::size_t l = 0; l < prop.alphas.size(); ++l)
            CHECK(max_abs_diff(prop.alphas[l].value(), tr.alphas[l]) < 1e-10);
    }
}

TEST_CASE("each propagation step stays inside the convex hull") {
    Fixture f(small(2, 3, 4, 2), 10);
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 5; ++trial) {
        const Var x(testing::random_tensor({2, 2, 5, 3}, rng, -2, 2));
        const Var emb(testing::random_tensor({5, 2}, rng));
        const auto prop = f.br.propagate(x, Var(random_stochastic(2, 5, rng)), emb);
        const Tensor ev = f.br.self_evolution(x, emb).value();
        for (std::size_t l = 0; l + 1 < prop.states.size(); ++l) {
            const Tensor& z = prop.states[l].value();
            const double lo = std::min(*std::min_element(z.values().begin(), z.values().end()),
                                       *std::min_element(ev.values().begin(), ev.values().end()));
            const double hi = std::max(*std::max_element(z.values().begin(), z.values().end()),
                                       *std::max_element(ev.values().begin(), ev.values().end()));
            for (double v : prop.states[l + 1].value().values()) {
                CHECK(v >= lo - 1e-12);
                CHECK(v <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("propagation is node-permutation equivariant") {
    Fixture f(small(2, 2, 3, 3), 11);
    std::mt19937_64 rng(11);
    const std::size_t n = 5;
    const Tensor x = testing::random_tensor({2, 2, n, 2}, rng);
    const Tensor adj = random_stochastic(2, n, rng);
    const Tensor emb = testing::random_tensor({n, 3}, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    const Tensor out = f.br(Var(x), Var(adj), Var(emb)).value();
    const Tensor adj_p = permute_nodes(permute_nodes(adj, perm, 1), perm, 2);
    const Tensor out_p = f.br(Var(permute_nodes(x, perm, 2)), Var(adj_p), Var(permute_nodes(emb, perm, 0))).value();
    CHECK(max_abs_diff(out_p, permute_nodes(out, perm, 2)) < 1e-6);
}

TEST_CASE("branch gradients match finite differences") {
    for (bool evolve : {true, false}) {
        Fixture f(small(2, 2, 2, 2, evolve), 12);
        std::mt19937_64 rng(12);
        const Var x(testing::random_tensor({1, 2, 4, 2}, rng));
        const Var adj(random_stochastic(1, 4, rng));
        const Var emb(testing::random_tensor({4, 2}, rng));
        const Var weights(testing::random_tensor({1, 3, 4, 2}, rng));
        const auto errors = testing::gradcheck(f.store, [&] { return ag::sum(ag::mul(f.br(x, adj, emb), weights)); });
        CHECK(errors.size() == f.store.count());
        for (const auto& e : errors) {
            INFO(e.name << " rel=" << e.relative);
            CHECK(e.relative < 1e-4);
        }
    }
}

TEST_CASE("dual branch sums two independent branches") {
    auto cfg = small(2, 2, 3, 2);
    nn::ParamStore store;
    std::mt19937_64 init(13);
    lpgc::DualBranch dual(nn::ParamBuilder(store, init, "dual"), cfg);
    CHECK(store.contains("dual.static.fc5.weight"));
    CHECK(store.contains("dual.dynamic.fc5.weight"));
    CHECK(store.get("dual.static.fc1.weight").value() != store.get("dual.dynamic.fc1.weight").value());

    std::mt19937_64 rng(13);
    const Var x(testing::random_tensor({2, 2, 4, 3}, rng));
    const Var as(random_stochastic(1, 4, rng));
    const Var ad(random_stochastic(2, 4, rng));
    const Var emb(testing::random_tensor({4, 2}, rng));

    SUBCASE("random case") {
        const Tensor sum = dual(x, as, ad, emb).value();
        const auto s = oracle::propagate(dual.static_branch(), x.value(), as.value(), emb.value());
        const auto d = oracle::propagate(dual.dynamic_branch(), x.value(), ad.value(), emb.value());
        Tensor expect = s.output;
        for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += d.output[i];
        CHECK(max_abs_diff(sum, expect) < 1e-6);
    }
    SUBCASE("silenced dynamic branch") {
        store.get("dual.dynamic.fc6.weight").mutable_value().fill(0.0);
        store.get("dual.dynamic.fc6.bias").mutable_value().fill(0.0);
        const Tensor only = dual.static_branch()(x, as, emb).value();
        CHECK(max_abs_diff(dual(x, as, ad, emb).value(), only) == 0.0);
    }
    SUBCASE("identical branches over one graph double the output") {
        for (auto& [name, var] : store) {
            const std::string twin = "dual.static" + name.substr(std::string("dual.dynamic").size());
            if (name.rfind("dual.dynamic", 0) == 0) var.mutable_value() = store.get(twin).value();
        }
        const Tensor single = dual.static_branch()(x, as, emb).value();
        const Tensor both = dual(x, as, as, emb).value();
        for (std::size_t i = 0; i < both.size(); ++i) CHECK(both[i] == doctest::Approx(2.0 * single[i]).epsilon(1e-14));
    }
}
