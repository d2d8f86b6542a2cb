#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "nartsp/ops.hpp"
#include "support/gradcheck.hpp"

using namespace nartsp;
using nartsp::testing::check_gradients;
using nartsp::testing::probe;
using nartsp::testing::random_array;

namespace {

constexpr double kElementaryTol = 1e-6;
constexpr int kSeeds = 100;

using Leaves = std::vector<std::pair<std::string, Var<double>>>;

Var<double> leaf(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    return Var<double>::leaf(random_array(std::move(s), rng, lo, hi));
}

void expect_grad(const Leaves& leaves, const std::function<Var<double>()>& f) {
    const auto r = check_gradients(leaves, f);
    INFO("worst tensor " << r.worst_name << " rel err " << r.worst);
    CHECK(r.worst < kElementaryTol);
}

}  // namespace

TEST_CASE("matmul and linear agree with explicit loops") {
    std::mt19937_64 rng(7);
    auto a = leaf({3, 4}, rng), b = leaf({4, 2}, rng), bias = leaf({2}, rng);
    auto c = matmul(a, b);
    auto x3 = Var<double>::constant(random_array({2, 3, 4}, rng));
    auto l = linear(x3, b, bias);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 4; ++k) s += a.value().at(i, k) * b.value().at(k, j);
            CHECK(c.value().at(i, j) == doctest::Approx(s).epsilon(1e-12));
            for (std::size_t r = 0; r < 2; ++r) {
                double t = bias.value()[j];
                for (std::size_t k = 0; k < 4; ++k) t += x3.value().at(r, i, k) * b.value().at(k, j);
                CHECK(l.value().at(r, i, j) == doctest::Approx(t).epsilon(1e-12));
            }
        }
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("elementary op gradients match central differences over 100 seeds") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        CAPTURE(seed);
        std::mt19937_64 rng(seed);
        const auto s = static_cast<std::uint64_t>(seed) + 1000;
        {
            auto a = leaf({3, 4}, rng), b = leaf({4, 2}, rng);
            expect_grad({{"a", a}, {"b", b}}, [&] { return probe(matmul(a, b), s); });
        }
        {
            auto x = leaf({2, 3, 4}, rng), w = leaf({4, 5}, rng), b = leaf({5}, rng);
            expect_grad({{"x", x}, {"w", w}, {"b", b}}, [&] { return probe(linear(x, w, b), s); });
        }
        {
            auto a = leaf({2, 5}, rng), b = leaf({2, 5}, rng);
            expect_grad({{"a", a}, {"b", b}}, [&] { return probe(add(a, b), s); });
            expect_grad({{"a", a}, {"b", b}}, [&] { return probe(mul(a, b), s); });
            expect_grad({{"a", a}}, [&] { return probe(scale(a, 0.37), s); });
            expect_grad({{"a", a}}, [&] { return probe(leaky_relu(a, 0.2), s); });
            expect_grad({{"a", a}}, [&] { return probe(relu(a), s); });
            expect_grad({{"a", a}}, [&] { return probe(sigmoid(a), s); });
        }
        {
            auto x = leaf({2, 3, 4}, rng, -2, 2);
            for (std::size_t axis = 0; axis < 3; ++axis) {
                expect_grad({{"x", x}}, [&] { return probe(softmax(x, axis), s); });
            }
        }
        {
            auto x = leaf({2, 3, 4, 2}, rng, -2, 2);
            Mask m({3, 4, 1}, 0);
            for (std::size_t i = 0; i < 3; ++i) m[i * 4 + (i + seed) % 4] = 1;  // one masked entry per row
            expect_grad({{"x", x}}, [&] { return probe(softmax(masked_fill(x, m, masked_logit<double>()), 2), s); });
        }
        {
            auto x = leaf({3, 4}, rng);
            expect_grad({{"x", x}}, [&] { return probe(reshape(x, {2, 6}), s); });
            expect_grad({{"x", x}}, [&] { return probe(slice_rows(x, 1, 3), s); });
            expect_grad({{"x", x}}, [&] { return probe(tile_leading(x, 3), s); });
            expect_grad({{"x", x}}, [&] { return probe(sum(mul(x, x)), s); });
            expect_grad({{"x", x}}, [&] { return probe(mean(mul(x, x)), s); });
        }
        {
            auto p = leaf({2, 3, 4}, rng), q = leaf({2, 5, 4}, rng);
            expect_grad({{"p", p}, {"q", q}}, [&] { return probe(pair_add(p, q), s); });
        }
        {
            auto x = leaf({2, 3, 8}, rng), a = leaf({8}, rng);
            expect_grad({{"x", x}, {"a", a}}, [&] { return probe(head_dot(x, a, 4), s); });
            auto q = leaf({2, 3, 8}, rng), k = leaf({2, 5, 8}, rng);
            expect_grad({{"q", q}, {"k", k}}, [&] { return probe(head_scores(q, k, 2), s); });
            auto w = leaf({2, 3, 5, 2}, rng), v = leaf({2, 5, 8}, rng);
            expect_grad({{"w", w}, {"v", v}}, [&] { return probe(head_aggregate(w, v), s); });
        }
    }
}

TEST_CASE("choice_log_prob gradient matches central differences over 100 seeds") {
    for (int seed = 0; seed < kSeeds; ++seed) {
        CAPTURE(seed);
        std::mt19937_64 rng(seed);
        const std::size_t B = 2, n = 5;
        auto beta = leaf({B, n}, rng, -2, 2), scores = leaf({B, n, n}, rng, -2, 2);
        std::vector<ChoiceSequence> seqs(B);
        for (std::size_t b = 0; b < B; ++b) {
            std::vector<std::uint32_t> perm{0, 1, 2, 3, 4};
            std::shuffle(perm.begin(), perm.end(), rng);
            seqs[b].start = b == 0 ? static_cast<std::int64_t>(perm[0]) : -1;
            std::vector<std::uint8_t> allowed(n, 1);
            allowed[perm[0]] = 0;
            for (std::size_t t = 1; t < n; ++t) {
                seqs[b].steps.push_back({perm[t - 1], perm[t], allowed});
                allowed[perm[t]] = 0;
            }
        }
        expect_grad({{"beta", beta}, {"scores", scores}}, [&] { return probe(choice_log_prob(beta, scores, seqs), seed); });
    }
}

TEST_CASE("choice_log_prob equals the sum of restricted log-softmax terms") {
    std::mt19937_64 rng(3);
    auto beta = Var<double>::constant(random_array({1, 3}, rng));
    auto scores = Var<double>::constant(random_array({1, 3, 3}, rng));
    ChoiceSequence seq;
    seq.start = 2;
    seq.steps.push_back({2, 0, {1, 1, 0}});
    const auto lp = choice_log_prob(beta, scores, {seq}).value()[0];
    auto lse = [](double a, double b) { return std::log(std::exp(a) + std::exp(b)); };
    const auto& bv = beta.value();
    const auto& sv = scores.value();
    const double expected = bv[2] - std::log(std::exp(bv[0]) + std::exp(bv[1]) + std::exp(bv[2])) + sv[6] - lse(sv[6], sv[7]);
    CHECK(lp == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("masked softmax puts exact zeros on masked entries and rows sum to one") {
    std::mt19937_64 rng(11);
    auto x = Var<double>::constant(random_array({4, 6}, rng, -30, 30));
    Mask m({4, 6}, 0);
    m[1] = m[7] = m[8] = m[23] = 1;
    const auto p = softmax(masked_fill(x, m, masked_logit<double>()), 1).value();
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 6; ++c) {
            if (m[r * 6 + c]) CHECK(p[r * 6 + c] == 0.0);
            s += p[r * 6 + c];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    Mask all({1, 6}, 1);
    CHECK_THROWS_AS(softmax(masked_fill(Var<double>::constant(random_array({1, 6}, rng)), all, masked_logit<double>()), 1),
                    ContractError);
    auto bad = random_array({1, 6}, rng);
    bad[2] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(softmax(Var<double>::constant(bad), 1), NumericError);
    bad[2] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(softmax(Var<double>::constant(bad), 1), NumericError);
}

TEST_CASE("head_scores and head_aggregate follow per-slice definitions") {
    std::mt19937_64 rng(5);
    auto q = Var<double>::constant(random_array({1, 2, 4}, rng));
    auto k = Var<double>::constant(random_array({1, 3, 4}, rng));
    const auto s = head_scores(q, k, 2).value();
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t h = 0; h < 2; ++h) {
                double d = 0;
                for (std::size_t c = 2 * h; c < 2 * h + 2; ++c) d += q.value().at(0, i, c) * k.value().at(0, j, c);
                CHECK(s.at(0, i, j, h) == doctest::Approx(d).epsilon(1e-12));
            }
    auto w = Var<double>::constant(random_array({1, 2, 3, 2}, rng));
    auto v = Var<double>::constant(random_array({1, 3, 4}, rng));
    const auto agg = head_aggregate(w, v).value();
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t c = 0; c < 4; ++c) {
            double t = 0;
            for (std::size_t j = 0; j < 3; ++j) t += w.value().at(0, i, j, c / 2) * v.value().at(0, j, c);
            CHECK(agg.at(0, i, c) == doctest::Approx(t).epsilon(1e-12));
        }
}

TEST_CASE("gradients accumulate over shared uses and respect NoGradGuard") {
    auto x = Var<double>::leaf(Array<double>({2}, std::vector<double>{1.5, -2.0}));
    backward(sum(mul(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(3.0));
    CHECK(x.grad()[1] == doctest::Approx(-4.0));
    {
        NoGradGuard ng;
        auto y = sum(mul(x, x));
        CHECK_FALSE(y.requires_grad());
    }
    CHECK_THROWS_AS(backward(mul(x, x)), ContractError);
}

TEST_CASE("parameter copies are deep") {
    Parameter<double> p("w", Array<double>({2}, 1.0));
    Parameter<double> q = p;
    q.mutable_value()[0] = 5.0;
    CHECK(p.value()[0] == 1.0);
    CHECK(q.name() == "w");
}
