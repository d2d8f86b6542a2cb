#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "nartsp/decoder.hpp"
#include "nartsp/model.hpp"
#include "support/model_checks.hpp"

using namespace nartsp;
using nartsp::testing::random_array;
using nartsp::testing::toy_config;

namespace {

constexpr double kBnScale = 1.0 / 1.00000499998750006;  // 1 / sqrt(1 + 1e-5): a fresh BN in eval mode

double leaky(double x, double s) { return x > 0 ? x : s * x; }

Var<double> rand_var(Shape s, std::mt19937_64& rng) { return Var<double>::constant(random_array(std::move(s), rng)); }

}  // namespace

TEST_CASE("reference configuration has the expected parameter count") {
    Model<float> m(ModelConfig::reference(), 1);
    // Closed form: inputs 5h; per module 6h^2 + 9h (node + edge) and 2h^2
    // (W_q, W_k); every module but the last adds h^2 + 2h (W_v, BN);
    // the symbol vector h; FC h^2 + h + h + 1.
    const std::size_t h = 128, L = 6;
    const std::size_t expect = 5 * h + L * (8 * h * h + 9 * h) + (L - 1) * (h * h + 2 * h) + h + (h * h + 2 * h + 1);
    CHECK(m.parameter_count() == expect);
    CHECK(m.parameter_count() == 893953);
    CHECK(std::abs(static_cast<double>(m.parameter_count()) / 0.91e6 - 1.0) < 0.05);
}

TEST_CASE("configuration validation") {
    auto c = ModelConfig::desk();
    c.heads = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig::desk();
    c.gnn_layers = 0;
    CHECK_THROWS_AS(Model<float>(c, 1), ConfigError);
}

TEST_CASE("construction is deterministic in the seed") {
    Model<float> a(ModelConfig::desk(), 5), b(ModelConfig::desk(), 5), c(ModelConfig::desk(), 6);
    std::vector<Array<float>> va, vb, vc;
    a.for_each_parameter([&](const Parameter<float>& p) { va.push_back(p.value()); });
    b.for_each_parameter([&](const Parameter<float>& p) { vb.push_back(p.value()); });
    c.for_each_parameter([&](const Parameter<float>& p) { vc.push_back(p.value()); });
    CHECK(va == vb);
    CHECK_FALSE(va == vc);
}

TEST_CASE("neighbor mask keeps the ceil(n/5) nearest nodes above the threshold") {
    const auto cfg = ModelConfig::desk();
    for (std::size_t n : {10, 25, 26, 100}) {
        CAPTURE(n);
        const auto dm = distance_matrix(generate_uniform(n, n));
        const auto m = neighbor_mask(dm, cfg);
        const std::size_t k = n <= 25 ? n - 1 : (n + 4) / 5;
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(m[i * n + i] == 0);
            std::vector<std::pair<double, std::size_t>> d;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) d.emplace_back(dm(i, j), j);
            std::sort(d.begin(), d.end());
            std::size_t count = 0;
            for (std::size_t j = 0; j < n; ++j) count += m[i * n + j];
            CHECK(count == k);
            for (std::size_t t = 0; t < k; ++t) CHECK(m[i * n + d[t].second] == 1);
        }
    }
    CHECK(neighbor_mask(distance_matrix(generate_uniform(100, 3)), cfg).storage().size() == 10000);
}

TEST_CASE("embedding is an affine map of coordinates and distances") {
    Model<double> m(toy_config(), 2);
    const auto inst = generate_uniform(4, 9);
    const auto g = make_batch(std::span(&inst, 1), m.config());
    auto [v, e] = m.embed(g);
    const auto dm = distance_matrix(inst);
    auto& Wv = m.layer(0).W_vv;  // unused here; just make sure the accessor works
    (void)Wv;
    std::vector<const Parameter<double>*> ps;
    m.for_each_parameter([&](const Parameter<double>& p) { ps.push_back(&p); });
    const auto& W_v = ps[0]->value();
    const auto& W_e = ps[2]->value();
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 8; ++c) {
            const double x = inst.coords[i][0] * W_v.at(0, c) + inst.coords[i][1] * W_v.at(1, c);
            CHECK(v.value().at(0, i, c) == doctest::Approx(x).epsilon(1e-12));
            for (std::size_t j = 0; j < 4; ++j) CHECK(e.value().at(0, i, j, c) == doctest::Approx(dm(i, j) * W_e.at(0, c)));
        }
}

TEST_CASE("node update matches an explicit attention computation") {
    const std::size_t B = 2, n = 5, h = 8, H = 2, w = h / H;
    auto cfg = toy_config(h, 2, H);
    Model<double> m(cfg, 3);
    std::mt19937_64 rng(4);
    auto v = rand_var({B, n, h}, rng);
    auto e = rand_var({B, n, n, h}, rng);
    Mask ex({B, n, n, 1}, 0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < n; ++i) ex.at(b, i, (i + 1) % n, 0) = 1;  // exclude one neighbor per row
    Var<double> alpha;
    auto out = m.node_update(0, v, e, ex, Mode::eval, &alpha);

    const auto& L = m.layer(0);
    const auto& Wvv = L.W_vv.value();
    const auto& Wve = L.W_ve.value();
    const auto& a = L.attn.value();
    const auto& V = v.value();
    const auto& E = e.value();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::vector<double>> al(H, std::vector<double>(n, 0.0));
            for (std::size_t k = 0; k < H; ++k) {
                std::vector<double> lam(n);
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0;
                    for (std::size_t c = k * w; c < (k + 1) * w; ++c) {
                        double p = 0, q = 0;
                        for (std::size_t r = 0; r < h; ++r) {
                            p += V.at(b, i, r) * Wvv.at(r, c) + V.at(b, j, r) * Wvv.at(h + r, c);
                            q += E.at(b, i, j, r) * Wve.at(r, c);
                        }
                        s += a[c] * p + a[h + c] * q;
                    }
                    lam[j] = leaky(s, 0.2);
                }
                double mx = -1e300, z = 0;
                for (std::size_t j = 0; j < n; ++j)
                    if (!ex.at(b, i, j, 0)) mx = std::max(mx, lam[j]);
                for (std::size_t j = 0; j < n; ++j)
                    if (!ex.at(b, i, j, 0)) z += std::exp(lam[j] - mx);
                for (std::size_t j = 0; j < n; ++j) {
                    al[k][j] = ex.at(b, i, j, 0) ? 0.0 : std::exp(lam[j] - mx) / z;
                    CHECK(alpha.value().at(b, i, j, k) == doctest::Approx(al[k][j]).epsilon(1e-10));
                }
            }
            for (std::size_t c = 0; c < h; ++c) {
                double agg = V.at(b, i, c);
                for (std::size_t j = 0; j < n; ++j) agg += al[c / w][j] * V.at(b, j, c);
                CHECK(out.value().at(b, i, c) == doctest::Approx(agg * kBnScale).epsilon(1e-10));
            }
        }
}

TEST_CASE("attention rows are distributions and a single neighbor gets all the weight") {
    auto cfg = toy_config(8, 1, 2);
    Model<double> m(cfg, 5);
    std::mt19937_64 rng(6);
    const std::size_t n = 6;
    auto v = rand_var({1, n, 8}, rng);
    auto e = rand_var({1, n, n, 8}, rng);
    Mask ex({1, n, n, 1}, 1);
    for (std::size_t i = 0; i < n; ++i) ex.at(0, i, (i + 2) % n, 0) = 0;
    Var<double> alpha;
    m.node_update(0, v, e, ex, Mode::eval, &alpha);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t j = 0; j < n; ++j) CHECK(alpha.value().at(0, i, j, k) == (j == (i + 2) % n ? 1.0 : 0.0));

    Mask none({1, n, n, 1}, 0);
    m.node_update(0, v, e, none, Mode::eval, &alpha);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 2; ++k) {
            double s = 0;
            for (std::size_t j = 0; j < n; ++j) s += alpha.value().at(0, i, j, k);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("edge update matches an explicit gated residual") {
    const std::size_t n = 3, h = 4;
    Model<double> m(toy_config(h, 1, 2), 7);
    std::mt19937_64 rng(8);
    auto& L = m.layer(0);
    L.b_e1.mutable_value() = random_array({h}, rng);
    L.b_e2.mutable_value() = random_array({h}, rng);
    L.b_ee.mutable_value() = random_array({h}, rng);
    auto v = rand_var({1, n, h}, rng);
    auto e = rand_var({1, n, n, h}, rng);
    auto out = m.edge_update(0, v, e, Mode::eval);
    const auto& V = v.value();
    const auto& E = e.value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < h; ++c) {
                double s = L.b_e1.value()[c] + L.b_e2.value()[c] + L.b_ee.value()[c];
                for (std::size_t r = 0; r < h; ++r) {
                    s += V.at(0, i, r) * L.W_e1.value().at(r, c) + V.at(0, j, r) * L.W_e2.value().at(r, c) +
                         E.at(0, i, j, r) * L.W_ee.value().at(r, c);
                }
                const double want = (1.0 / (1.0 + std::exp(-s)) + E.at(0, i, j, c)) * kBnScale;
                CHECK(out.value().at(0, i, j, c) == doctest::Approx(want).epsilon(1e-10));
            }
}

TEST_CASE("symbol update matches an explicit computation") {
    const std::size_t n = 4, h = 4;
    Model<double> m(toy_config(h, 2, 2), 9);
    std::mt19937_64 rng(10);
    auto vh = rand_var({1, 1, h}, rng);
    auto v = rand_var({1, n, h}, rng);
    const auto& L = m.layer(0);
    auto out = m.symbol_update(0, vh, v, Mode::eval);
    std::vector<double> q(h, 0.0);
    for (std::size_t c = 0; c < h; ++c)
        for (std::size_t r = 0; r < h; ++r) q[c] += vh.value()[r] * L.W_q.value().at(r, c);
    std::vector<double> agg(vh.value().storage());
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < h; ++c) {
            double k = 0;
            for (std::size_t r = 0; r < h; ++r) k += v.value().at(0, j, r) * L.W_k.value().at(r, c);
            s += q[c] * k;
        }
        for (std::size_t c = 0; c < h; ++c) {
            double val = 0;
            for (std::size_t r = 0; r < h; ++r) val += v.value().at(0, j, r) * L.W_v.value().at(r, c);
            agg[c] += leaky(s, 0.2) * val;
        }
    }
    for (std::size_t c = 0; c < h; ++c) CHECK(out.value()[c] == doctest::Approx(agg[c] * kBnScale).epsilon(1e-10));

    // With W_q = 0 every attention weight vanishes and the update is BN(v_h).
    m.layer(0).W_q.mutable_value().fill(0.0);
    out = m.symbol_update(0, vh, v, Mode::eval);
    for (std::size_t c = 0; c < h; ++c) CHECK(out.value()[c] == doctest::Approx(vh.value()[c] * kBnScale).epsilon(1e-12));
    CHECK_THROWS_AS(m.symbol_update(1, vh, v, Mode::eval), ContractError);
}

TEST_CASE("pointer logits are leaky dot products through the last module") {
    const std::size_t n = 5, h = 4;
    Model<double> m(toy_config(h, 2, 2), 11);
    std::mt19937_64 rng(12);
    auto vh = rand_var({1, 1, h}, rng);
    auto v = rand_var({1, n, h}, rng);
    auto beta = m.pointer(vh, v);
    const auto& L = m.layer(1);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < h; ++c) {
            double q = 0, k = 0;
            for (std::size_t r = 0; r < h; ++r) {
                q += vh.value()[r] * L.W_q.value().at(r, c);
                k += v.value().at(0, j, r) * L.W_k.value().at(r, c);
            }
            s += q * k;
        }
        CHECK(beta.value().at(0, j) == doctest::Approx(leaky(s, 0.2)).epsilon(1e-12));
    }
}

TEST_CASE("edge scores with one FC layer are linear and collapse to the bias for zero weights") {
    auto cfg = toy_config(4, 1, 2);
    cfg.fc_layers = 1;
    Model<double> m(cfg, 13);
    std::mt19937_64 rng(14);
    auto e = rand_var({1, 3, 3, 4}, rng);
    Parameter<double>* w = nullptr;
    Parameter<double>* b = nullptr;
    m.for_each_parameter([&](Parameter<double>& p) {
        if (p.name() == "fc.0.W") w = &p;
        if (p.name() == "fc.0.b") b = &p;
    });
    REQUIRE(w);
    REQUIRE(b);
    b->mutable_value()[0] = 0.75;
    auto a = m.edge_scores(e);
    for (std::size_t i = 0; i < 9; ++i) {
        double s = 0.75;
        for (std::size_t c = 0; c < 4; ++c) s += e.value()[i * 4 + c] * w->value()[c];
        CHECK(a.value()[i] == doctest::Approx(s).epsilon(1e-12));
    }
    w->mutable_value().fill(0.0);
    a = m.edge_scores(e);
    for (std::size_t i = 0; i < 9; ++i) CHECK(a.value()[i] == 0.75);
}

TEST_CASE("disabling the pointer forces node 0 as the start") {
    auto cfg = ModelConfig::desk();
    cfg.pointer_enabled = false;
    Model<float> m(cfg, 15);
    Model<float> with(ModelConfig::desk(), 15);
    CHECK(m.parameter_count() < with.parameter_count());
    const auto insts = generate_uniform_batch(12, 3, 16);
    for (const auto& out : m.infer(make_batch(insts, cfg))) {
        const auto p = start_distribution(out);
        CHECK(p[0] == 1.0);
        for (std::size_t i = 1; i < p.size(); ++i) CHECK(p[i] == 0.0);
        CHECK(greedy_decode(out).tour[0] == 0);
    }
}

TEST_CASE("eval-mode outputs do not depend on the rest of the batch") {
    Model<double> m(toy_config(16, 3, 4), 17);
    const auto insts = generate_uniform_batch(30, 3, 18);  // n > 25 exercises the sparse mask
    const auto all = m.infer(make_batch(insts, m.config()));
    for (std::size_t b = 0; b < 3; ++b) {
        const auto one = m.infer(make_batch(std::span(&insts[b], 1), m.config()))[0];
        for (std::size_t i = 0; i < 30; ++i) CHECK(one.beta[i] == doctest::Approx(all[b].beta[i]).epsilon(1e-12));
        CHECK(one.scores.storage() == all[b].scores.storage());
    }
}

TEST_CASE("forward produces finite outputs on 1000 random instances") {
    Model<float> m(ModelConfig::desk(), 19);
    std::size_t bad = 0;
    for (std::size_t chunk = 0; chunk < 20; ++chunk) {
        const std::size_t n = 5 + chunk * 3;
        const auto insts = generate_uniform_batch(n, 50, 100 + chunk);
        for (const auto& out : m.infer(make_batch(insts, m.config()))) {
            for (double x : out.beta) bad += !std::isfinite(x);
            for (double x : out.scores.storage()) bad += !std::isfinite(x);
        }
    }
    CHECK(bad == 0);
    CHECK(m.forward_count() == 20);
}

TEST_CASE("model is permutation equivariant") {
    Model<double> m(toy_config(16, 3, 4), 20);
    std::mt19937_64 rng(21);
    for (std::size_t t = 0; t < 10; ++t) {
        const auto r = nartsp::testing::check_equivariance(m, generate_uniform(t % 2 ? 20 : 30, 200 + t), rng);
        CHECK(r.worst_beta < 1e-9);
        CHECK(r.worst_scores < 1e-9);
        CHECK(r.tours_match);
    }
}

TEST_CASE("full model gradients match central differences") {
    for (std::uint64_t seed : {1, 2}) {
        for (Mode mode : {Mode::train, Mode::eval}) {
            CAPTURE(seed);
            auto cfg = toy_config(8, 2, 2);
            const auto r = nartsp::testing::full_model_gradcheck(cfg, 6, 2, seed, mode);
            INFO("worst " << r.worst_name << " " << r.worst);
            CHECK(r.worst < 1e-5);
        }
    }
    auto sparse = toy_config(8, 2, 2);
    sparse.neighbor_threshold = 3;
    sparse.pointer_enabled = false;
    const auto r = nartsp::testing::full_model_gradcheck(sparse, 6, 2, 3, Mode::train);
    INFO("worst " << r.worst_name << " " << r.worst);
    CHECK(r.worst < 1e-5);
}

TEST_CASE("copy_state duplicates parameters and running statistics") {
    Model<float> a(ModelConfig::desk(), 1), b(ModelConfig::desk(), 2);
    const auto insts = generate_uniform_batch(10, 4, 3);
    a.forward(make_batch(insts, a.config()), Mode::train);
    copy_state(a, b);
    const auto oa = a.infer(make_batch(insts, a.config()));
    const auto ob = b.infer(make_batch(insts, b.config()));
    for (std::size_t i = 0; i < 4; ++i) CHECK(oa[i].scores == ob[i].scores);
    auto other = ModelConfig::desk();
    other.hidden = 32;
    Model<float> c(other, 1);
    CHECK_THROWS_AS(copy_state(a, c), ContractError);
}
