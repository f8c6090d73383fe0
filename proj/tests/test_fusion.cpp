#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "mtts/fusion.hpp"

using namespace mtts;
using namespace mtts::fusion;
namespace g = mtts::grad;

namespace {

InputWindow sample_window(int k) {
    InputWindow w;
    w.cont_window = {{0.0, 0.3}, {0.5, -0.1}, {1.0, 0.8}, {1.5, 0.2}};
    w.event_window = {{0.2, 0, 0.0}, {0.9, k - 1, 0.4}, {1.4, 1, -0.3}};
    w.window_end = 1.5;
    return w;
}

}  // namespace

TEST_CASE("fuse_mean endpoints and midpoint") {
    g::Tape t;
    const int xc = t.leaf(g::Tensor::vec({1.0, 2.0, 3.0}));
    const int xe = t.leaf(g::Tensor::vec({-1.0, 0.0, 7.0}));
    CHECK(t.value(fuse_mean(t, xc, xe, 0.0)).data ==
          std::vector<double>{1.0, 2.0, 3.0});
    CHECK(t.value(fuse_mean(t, xc, xe, 1.0)).data ==
          std::vector<double>{-1.0, 0.0, 7.0});
    const auto& mid = t.value(fuse_mean(t, xc, xe, 0.5)).data;
    CHECK(mid[0] == doctest::Approx(0.0));
    CHECK(mid[1] == doctest::Approx(1.0));
    CHECK(mid[2] == doctest::Approx(5.0));
    // fusing a vector with itself is the identity for any beta
    const auto& self = t.value(fuse_mean(t, xc, xc, 0.73)).data;
    CHECK(self[0] == doctest::Approx(1.0));
    CHECK(self[2] == doctest::Approx(3.0));
}

TEST_CASE("fuse_concat preserves order and length") {
    g::Tape t;
    const int xc = t.leaf(g::Tensor::vec({1.0, 2.0}));
    const int xe = t.leaf(g::Tensor::vec({3.0, 4.0, 5.0}));
    const auto& out = t.value(fuse_concat(t, xc, xe));
    REQUIRE(out.shape == std::vector<std::size_t>{5});
    CHECK(out.data == std::vector<double>{1.0, 2.0, 3.0, 4.0, 5.0});
}

TEST_CASE("fuse_share") {
    g::Tape t;
    const int xc = t.leaf(g::Tensor::vec({1.0, 2.0, 3.0, 4.0}));
    const int xe = t.leaf(g::Tensor::vec({10.0, 20.0, 30.0}));
    SUBCASE("output length is l_c + l_e - r") {
        for (int r = 1; r <= 2; ++r) {
            const auto& out = t.value(fuse_share(t, xc, xe, 0.5, r));
            CHECK(out.shape[0] == 4 + 3 - static_cast<std::size_t>(r));
        }
    }
    SUBCASE("beta 0 keeps the continuous side of the shared block") {
        const auto& out = t.value(fuse_share(t, xc, xe, 0.0, 2)).data;
        // shared block, then the event remainder, then the cont remainder
        CHECK(out == std::vector<double>{1.0, 2.0, 30.0, 3.0, 4.0});
    }
    SUBCASE("matches the slice-and-mean construction") {
        const double beta = 0.3;
        const auto& out = t.value(fuse_share(t, xc, xe, beta, 2)).data;
        CHECK(out[0] == doctest::Approx(beta * 10.0 + (1 - beta) * 1.0));
        CHECK(out[1] == doctest::Approx(beta * 20.0 + (1 - beta) * 2.0));
        CHECK(out[2] == doctest::Approx(30.0));
        CHECK(out[3] == doctest::Approx(3.0));
        CHECK(out[4] == doctest::Approx(4.0));
    }
    SUBCASE("r out of range is rejected") {
        CHECK_THROWS_AS((void)fuse_share(t, xc, xe, 0.5, 0), ConfigError);
        CHECK_THROWS_AS((void)fuse_share(t, xc, xe, 0.5, 3), ConfigError);
    }
}

TEST_CASE("fuse_gating") {
    SUBCASE("zero fusion weights average the two projections") {
        g::Tape t;
        GatingParams p;
        g::Tensor eye = g::Tensor::zeros({2, 2});
        eye.at(0, 0) = eye.at(1, 1) = 1.0;
        p.w_c = t.leaf(eye);
        p.w_e = t.leaf(eye);
        p.w_f = t.leaf(g::Tensor::zeros({2, 4}));
        const int xc = t.leaf(g::Tensor::vec({0.4, -0.9}));
        const int xe = t.leaf(g::Tensor::vec({1.2, 0.1}));
        const auto& out = t.value(fuse_gating(t, xc, xe, p)).data;
        for (int i = 0; i < 2; ++i) {
            const double hc = std::tanh(t.value(xc).data[i]);
            const double he = std::tanh(t.value(xe).data[i]);
            CHECK(out[i] == doctest::Approx(0.5 * (hc + he)).epsilon(1e-12));
        }
    }
    SUBCASE("matches a hand computation in two dimensions") {
        g::Tape t;
        GatingParams p;
        const std::vector<double> wc = {0.3, -0.1, 0.2, 0.5};
        const std::vector<double> we = {-0.2, 0.4, 0.1, -0.3};
        const std::vector<double> wf = {0.1, -0.2, 0.3, 0.4,
                                        -0.5, 0.2, 0.0, 0.1};
        auto mk = [&](std::vector<std::size_t> shape, std::vector<double> v) {
            g::Tensor tt = g::Tensor::zeros(std::move(shape));
            tt.data = std::move(v);
            return t.leaf(tt);
        };
        p.w_c = mk({2, 2}, wc);
        p.w_e = mk({2, 2}, we);
        p.w_f = mk({2, 4}, wf);
        const std::vector<double> xcv = {0.7, -0.4}, xev = {-0.1, 0.9};
        const int xc = t.leaf(g::Tensor::vec(xcv));
        const int xe = t.leaf(g::Tensor::vec(xev));
        const auto& out = t.value(fuse_gating(t, xc, xe, p)).data;

        double hc[2], he[2];
        for (int i = 0; i < 2; ++i) {
            hc[i] = std::tanh(wc[i * 2] * xcv[0] + wc[i * 2 + 1] * xcv[1]);
            he[i] = std::tanh(we[i * 2] * xev[0] + we[i * 2 + 1] * xev[1]);
        }
        const double cat[4] = {he[0], he[1], hc[0], hc[1]};
        for (int i = 0; i < 2; ++i) {
            double a = 0.0;
            for (int j = 0; j < 4; ++j) a += wf[i * 4 + j] * cat[j];
            const double z = 1.0 / (1.0 + std::exp(-a));
            const double expect = z * he[i] + (1.0 - z) * hc[i];
            CHECK(out[i] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("corr_penalty") {
    SUBCASE("identical batches give +1, negated batches give -1") {
        g::Tape t;
        g::Tensor a = g::Tensor::zeros({3, 2});
        a.data = {1.0, -0.5, 2.0, 0.5, -1.0, 3.0};
        g::Tensor neg = a;
        for (double& v : neg.data) v = -v;
        const int na = t.leaf(a);
        CHECK(t.value(corr_penalty(t, na, t.leaf(a))).data[0] ==
              doctest::Approx(1.0).epsilon(1e-12));
        CHECK(t.value(corr_penalty(t, na, t.leaf(neg))).data[0] ==
              doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("matches an independent Pearson computation") {
        Rng rng(808);
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t n = 2 + rng.uniform_int(6);
            const std::size_t d = 1 + rng.uniform_int(5);
            g::Tensor a = g::Tensor::zeros({n, d});
            g::Tensor b = g::Tensor::zeros({n, d});
            for (double& v : a.data) v = rng.normal();
            for (double& v : b.data) v = rng.normal();
            g::Tape t;
            const double got =
                t.value(corr_penalty(t, t.leaf(a), t.leaf(b))).data[0];
            // covariance-form oracle, distinct from the centered-sum code path
            double total = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    sa += a.at(i, j);
                    sb += b.at(i, j);
                    sab += a.at(i, j) * b.at(i, j);
                    saa += a.at(i, j) * a.at(i, j);
                    sbb += b.at(i, j) * b.at(i, j);
                }
                const double nn = static_cast<double>(n);
                const double cov = sab - sa * sb / nn;
                const double va = saa - sa * sa / nn;
                const double vb = sbb - sb * sb / nn;
                if (va > 0 && vb > 0) total += cov / std::sqrt(va * vb);
            }
            CHECK(got ==
                  doctest::Approx(total / static_cast<double>(d)).epsilon(1e-10));
        }
    }
    SUBCASE("a zero-variance dimension contributes zero") {
        g::Tape t;
        g::Tensor a = g::Tensor::zeros({3, 2});
        a.data = {5.0, 1.0, 5.0, 2.0, 5.0, 3.0};  // column 0 is constant
        g::Tensor b = g::Tensor::zeros({3, 2});
        b.data = {0.1, 1.0, 0.7, 2.0, -0.3, 3.0};
        const double got = t.value(corr_penalty(t, t.leaf(a), t.leaf(b))).data[0];
        CHECK(got == doctest::Approx(0.5).epsilon(1e-12));  // only column 1, r=1
    }
    SUBCASE("gradient matches finite differences") {
        Rng rng(4242);
        const std::size_t n = 4, d = 3;
        auto build = [&](g::Tape& t, int flat) {
            std::vector<int> ra, rb;
            for (std::size_t i = 0; i < n; ++i) {
                ra.push_back(g::slice(t, flat, i * d, (i + 1) * d));
                rb.push_back(
                    g::slice(t, flat, n * d + i * d, n * d + (i + 1) * d));
            }
            return corr_penalty(t, stack_rows(t, ra), stack_rows(t, rb));
        };
        std::vector<double> x(2 * n * d);
        for (double& v : x) v = rng.normal();
        auto eval = [&](const std::vector<double>& xs) {
            g::Tape t;
            return t.value(build(t, t.leaf(g::Tensor::vec(xs)))).data[0];
        };
        g::Tape t;
        const int leaf = t.leaf(g::Tensor::vec(x));
        const int loss = build(t, leaf);
        t.backward(loss);
        CHECK(gradcheck::max_rel_error(eval, x, t.grad(leaf).data) < 1e-5);
    }
}

TEST_CASE("align_latest") {
    SUBCASE("documented trace with a tie") {
        g::Tape t;
        auto feat = [&](double v) { return t.leaf(g::Tensor::vec({v, v})); };
        const int c0 = feat(1), c1 = feat(2), c2 = feat(3);
        const int e0 = feat(10), e1 = feat(20);
        const auto pairs = align_latest(
            t, {{0.0, c0}, {1.0, c1}, {2.0, c2}}, {{0.5, e0}, {2.0, e1}}, 2, 2);
        REQUIRE(pairs.size() == 5);
        CHECK(pairs[0].time == 0.0);
        CHECK(pairs[0].cont_node == c0);
        CHECK(t.value(pairs[0].event_node).data ==
              std::vector<double>{0.0, 0.0});  // no event seen yet
        CHECK(pairs[1].time == 0.5);
        CHECK(pairs[1].cont_node == c0);
        CHECK(pairs[1].event_node == e0);
        CHECK(pairs[2].cont_node == c1);
        CHECK(pairs[2].event_node == e0);
        // tie at t=2: the continuous entry comes first, before e1 lands
        CHECK(pairs[3].time == 2.0);
        CHECK(pairs[3].cont_node == c2);
        CHECK(pairs[3].event_node == e0);
        CHECK(pairs[4].time == 2.0);
        CHECK(pairs[4].cont_node == c2);
        CHECK(pairs[4].event_node == e1);
    }
    SUBCASE("no events pads every entry with zeros") {
        g::Tape t;
        const int c0 = t.leaf(g::Tensor::vec({1.0, 2.0, 3.0}));
        const auto pairs = align_latest(t, {{0.0, c0}}, {}, 3, 4);
        REQUIRE(pairs.size() == 1);
        CHECK(t.value(pairs[0].event_node).shape ==
              std::vector<std::size_t>{4});
        CHECK(t.value(pairs[0].event_node).data ==
              std::vector<double>(4, 0.0));
    }
    SUBCASE("agrees with a quadratic reference on random timelines") {
        Rng rng(616);
        for (int trial = 0; trial < 50; ++trial) {
            g::Tape t;
            std::vector<TimedFeature> cont, events;
            double tc = 0.0, te = 0.0;
            const std::size_t nc = 1 + rng.uniform_int(8);
            const std::size_t ne = rng.uniform_int(8);
            for (std::size_t i = 0; i < nc; ++i) {
                tc += rng.uniform(0.0, 1.0);
                cont.push_back({tc, t.leaf(g::Tensor::vec({rng.normal()}))});
            }
            for (std::size_t i = 0; i < ne; ++i) {
                te += rng.uniform(0.0, 1.0);
                events.push_back({te, t.leaf(g::Tensor::vec({rng.normal()}))});
            }
            const auto pairs = align_latest(t, cont, events, 1, 1);
            REQUIRE(pairs.size() == nc + ne);
            for (std::size_t i = 0; i + 1 < pairs.size(); ++i)
                CHECK(pairs[i].time <= pairs[i + 1].time);
            // reference: a flat merge carrying the latest node from each side
            struct Entry {
                double time;
                bool is_cont;
                int node;
            };
            std::vector<Entry> merged;
            for (const auto& f : cont) merged.push_back({f.time, true, f.node});
            for (const auto& f : events)
                merged.push_back({f.time, false, f.node});
            std::stable_sort(merged.begin(), merged.end(),
                             [](const Entry& a, const Entry& b) {
                                 if (a.time != b.time) return a.time < b.time;
                                 return a.is_cont && !b.is_cont;
                             });
            int last_c = -1, last_e = -1;
            for (std::size_t i = 0; i < merged.size(); ++i) {
                if (merged[i].is_cont)
                    last_c = merged[i].node;
                else
                    last_e = merged[i].node;
                CHECK(pairs[i].time == merged[i].time);
                if (last_c >= 0)
                    CHECK(pairs[i].cont_node == last_c);
                else
                    CHECK(t.value(pairs[i].cont_node).data ==
                          std::vector<double>{0.0});
                if (last_e >= 0)
                    CHECK(pairs[i].event_node == last_e);
                else
                    CHECK(t.value(pairs[i].event_node).data ==
                          std::vector<double>{0.0});
            }
        }
    }
}

TEST_CASE("valid_combinations covers exactly the supported families") {
    const auto combos = valid_combinations();
    CHECK(combos.size() == 14);
    int late = 0, unimodal = 0;
    for (const auto& s : combos) {
        CHECK_NOTHROW(s.validate());
        if (s.ftype == FusionType::Late) {
            ++late;
            CHECK((s.method == FusionMethod::Mean ||
                   s.method == FusionMethod::Corr));
        }
        if (s.ftype == FusionType::UnimodalCont ||
            s.ftype == FusionType::UnimodalEvent) {
            ++unimodal;
            CHECK(s.method == FusionMethod::None);
        }
    }
    CHECK(late == 2);
    CHECK(unimodal == 2);

    FusionSpec bad;
    bad.ftype = FusionType::Late;
    bad.method = FusionMethod::Gating;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.ftype = FusionType::UnimodalCont;
    bad.method = FusionMethod::Concat;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.ftype = FusionType::Intermediate;
    bad.method = FusionMethod::None;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("forward output shapes hold for every family") {
    const int k = 3;
    for (const auto& spec : valid_combinations()) {
        CAPTURE(spec.name());
        Model model(spec, k, 4, 99);
        const auto out = model.forward(sample_window(k));
        CHECK(out.event_scores.size() == k);
        for (double v : out.cont_next) CHECK(std::isfinite(v));
        for (double v : out.event_scores) CHECK(std::isfinite(v));
        CHECK(std::isfinite(out.dt_next));
    }
}

TEST_CASE("late fusion with unit betas ignores the continuous branch") {
    FusionSpec spec;
    spec.ftype = FusionType::Late;
    spec.method = FusionMethod::Mean;
    spec.late_betas = {1.0, 1.0, 1.0};
    Model model(spec, 3, 4, 7);
    auto w = sample_window(3);
    const auto base = model.forward(w);
    for (auto& s : w.cont_window) s.value += 5.0;
    const auto perturbed = model.forward(w);
    CHECK(perturbed.cont_next == base.cont_next);
    CHECK(perturbed.event_scores == base.event_scores);
    CHECK(perturbed.dt_next == base.dt_next);
}

TEST_CASE("late fusion emits a probability distribution") {
    for (const char* method : {"mean", "corr"}) {
        FusionSpec spec;
        spec.ftype = FusionType::Late;
        spec.method = fusion_method_from_string(method);
        spec.late_betas = {0.3, 0.6, 0.4};
        Model model(spec, 4, 4, 11);
        const auto out = model.forward(sample_window(4));
        double sum = 0.0;
        for (double v : out.event_scores) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("unimodal models ignore the other modality") {
    auto w = sample_window(3);
    {
        FusionSpec spec;
        spec.ftype = FusionType::UnimodalCont;
        spec.method = FusionMethod::None;
        Model model(spec, 3, 4, 21);
        const auto base = model.forward(w);
        auto w2 = w;
        for (auto& e : w2.event_window) e.dt_std += 3.0;
        w2.event_window[0].type = 2;
        CHECK(model.forward(w2).cont_next == base.cont_next);
        CHECK(model.forward(w2).event_scores == base.event_scores);
    }
    {
        FusionSpec spec;
        spec.ftype = FusionType::UnimodalEvent;
        spec.method = FusionMethod::None;
        Model model(spec, 3, 4, 22);
        const auto base = model.forward(w);
        auto w2 = w;
        for (auto& s : w2.cont_window) s.value = -s.value + 1.0;
        CHECK(model.forward(w2).cont_next == base.cont_next);
        CHECK(model.forward(w2).event_scores == base.event_scores);
    }
}

TEST_CASE("same seed rebuilds the same model") {
    FusionSpec spec;
    spec.ftype = FusionType::Intermediate;
    spec.method = FusionMethod::Gating;
    Model a(spec, 3, 4, 1234);
    Model b(spec, 3, 4, 1234);
    Model c(spec, 3, 4, 1235);
    const auto w = sample_window(3);
    CHECK(a.forward(w).cont_next == b.forward(w).cont_next);
    CHECK(a.forward(w).cont_next != c.forward(w).cont_next);
}

TEST_CASE("gradients flow to trainable parameters in every family") {
    const int k = 3;
    const auto w = sample_window(k);
    for (const auto& spec : valid_combinations()) {
        CAPTURE(spec.name());
        Model model(spec, k, 4, 55);
        g::Tape t;
        const auto nodes = model.build(t, w);
        int loss = g::mse(t, nodes.cont_pred,
                          g::Tensor::vec({0.1, -0.2, 0.3, 0.0, 0.1}));
        loss = g::add(t, loss, g::mse(t, nodes.dt_pred, g::Tensor::vec({0.5})));
        const int type_loss = nodes.scores_are_probs
                                  ? g::nll_probs(t, nodes.event_scores, 1)
                                  : g::cross_entropy(t, nodes.event_scores, 1);
        loss = g::add(t, loss, type_loss);
        model.params().zero_grad();
        t.backward(loss);
        double total = 0.0;
        for (const auto& [name, value] : model.params().values()) {
            if (name == "norm.stats") continue;
            const auto& grads = model.params().gradient(name).data;
            for (double v : grads) {
                REQUIRE(std::isfinite(v));
                total += std::abs(v);
            }
        }
        CHECK(total > 0.0);
    }
}
