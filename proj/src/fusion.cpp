#include "mtts/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace mtts::fusion {

std::string to_string(FusionType t) {
    switch (t) {
        case FusionType::Early: return "early";
        case FusionType::Intermediate: return "intermediate";
        case FusionType::Late: return "late";
        case FusionType::UnimodalCont: return "unimodal_cont";
        case FusionType::UnimodalEvent: return "unimodal_event";
    }
    return "?";
}

std::string to_string(FusionMethod m) {
    switch (m) {
        case FusionMethod::Concat: return "concat";
        case FusionMethod::Mean: return "mean";
        case FusionMethod::Corr: return "corr";
        case FusionMethod::Gating: return "gating";
        case FusionMethod::Share: return "share";
        case FusionMethod::None: return "none";
    }
    return "?";
}

FusionType fusion_type_from_string(const std::string& s) {
    if (s == "early") return FusionType::Early;
    if (s == "intermediate") return FusionType::Intermediate;
    if (s == "late") return FusionType::Late;
    if (s == "unimodal_cont") return FusionType::UnimodalCont;
    if (s == "unimodal_event") return FusionType::UnimodalEvent;
    throw ConfigError("unknown fusion type: " + s);
}

FusionMethod fusion_method_from_string(const std::string& s) {
    if (s == "concat") return FusionMethod::Concat;
    if (s == "mean") return FusionMethod::Mean;
    if (s == "corr") return FusionMethod::Corr;
    if (s == "gating") return FusionMethod::Gating;
    if (s == "share") return FusionMethod::Share;
    if (s == "none") return FusionMethod::None;
    throw ConfigError("unknown fusion method: " + s);
}

void FusionSpec::validate() const {
    const bool unimodal =
        ftype == FusionType::UnimodalCont || ftype == FusionType::UnimodalEvent;
    if (unimodal) {
        if (method != FusionMethod::None)
            throw ConfigError("unimodal models take method \"none\", got " +
                              to_string(method));
    } else if (ftype == FusionType::Late) {
        if (method != FusionMethod::Mean && method != FusionMethod::Corr)
            throw ConfigError("late fusion is limited to mean and corr, got " +
                              to_string(method));
    } else {
        if (method == FusionMethod::None)
            throw ConfigError("multimodal models need a fusion method");
    }
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta out of [0,1]");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (r < 1) throw ConfigError("r must be >= 1");
    for (double b : late_betas)
        if (!(b >= 0.0 && b <= 1.0))
            throw ConfigError("late_betas entries must be in [0,1]");
}

std::string FusionSpec::name() const {
    return to_string(ftype) + "_" + to_string(method);
}

std::vector<FusionSpec> valid_combinations() {
    std::vector<FusionSpec> out;
    const FusionMethod all[] = {FusionMethod::Concat, FusionMethod::Mean,
                                FusionMethod::Corr, FusionMethod::Gating,
                                FusionMethod::Share};
    for (FusionMethod m : all) out.push_back({FusionType::Early, m});
    for (FusionMethod m : all) out.push_back({FusionType::Intermediate, m});
    out.push_back({FusionType::Late, FusionMethod::Mean});
    out.push_back({FusionType::Late, FusionMethod::Corr});
    out.push_back({FusionType::UnimodalCont, FusionMethod::None});
    out.push_back({FusionType::UnimodalEvent, FusionMethod::None});
    return out;
}

int fuse_concat(Tape& t, int xc, int xe) { return grad::concat(t, {xc, xe}); }

int fuse_mean(Tape& t, int xc, int xe, double beta) {
    return grad::add(t, grad::scale(t, xe, beta), grad::scale(t, xc, 1.0 - beta));
}

int fuse_share(Tape& t, int xc, int xe, double beta, int r) {
    const auto lc = t.value(xc).shape[0];
    const auto le = t.value(xe).shape[0];
    if (r <= 0 || static_cast<std::size_t>(r) >= std::min(lc, le))
        throw ConfigError("fuse_share: r must satisfy 0 < r < min(l_c, l_e)");
    const auto ur = static_cast<std::size_t>(r);
    const int shared = fuse_mean(t, grad::slice(t, xc, 0, ur),
                                 grad::slice(t, xe, 0, ur), beta);
    return grad::concat(
        t, {shared, grad::slice(t, xe, ur, le), grad::slice(t, xc, ur, lc)});
}

int fuse_gating(Tape& t, int xc, int xe, const GatingParams& p) {
    const int h_c = grad::tanh_op(t, grad::matmul(t, p.w_c, xc));
    const int h_e = grad::tanh_op(t, grad::matmul(t, p.w_e, xe));
    const int z =
        grad::sigmoid(t, grad::matmul(t, p.w_f, grad::concat(t, {h_e, h_c})));
    const int one_minus_z = grad::add_scalar(t, grad::scale(t, z, -1.0), 1.0);
    return grad::add(t, grad::mul(t, z, h_e), grad::mul(t, one_minus_z, h_c));
}

int stack_rows(Tape& t, const std::vector<int>& rows) {
    if (rows.empty()) throw DimensionError("stack_rows: no inputs");
    const std::size_t len = t.value(rows[0]).shape[0];
    for (int r : rows)
        if (t.value(r).shape.size() != 1 || t.value(r).shape[0] != len)
            throw DimensionError("stack_rows: inputs must be 1-D of equal length");
    Tensor out = Tensor::zeros({rows.size(), len});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(t.value(rows[i]).data.begin(), t.value(rows[i]).data.end(),
                  out.data.begin() + i * len);
    return t.push(std::move(out), rows, [rows, len](Tape& tp, int id) {
        const Tensor& g = tp.grad(id);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::vector<double> dr(g.data.begin() + i * len,
                                   g.data.begin() + (i + 1) * len);
            const Tensor& v = tp.value(rows[i]);
            Tensor& pg = tp.grad(rows[i]);
            if (pg.data.empty()) pg = Tensor::zeros(v.shape);
            for (std::size_t j = 0; j < len; ++j) pg.data[j] += dr[j];
        }
    });
}

int corr_penalty(Tape& t, int xc_batch, int xe_batch) {
    const Tensor& a = t.value(xc_batch);
    const Tensor& b = t.value(xe_batch);
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape != b.shape)
        throw DimensionError("corr_penalty: expects equal-shape 2-D batches, " +
                             a.shape_str() + " vs " + b.shape_str());
    const std::size_t n = a.shape[0];
    const std::size_t d = a.shape[1];
    if (n < 2) throw DimensionError("corr_penalty: needs at least 2 samples");

    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double ma = 0.0, mb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ma += a.at(i, j);
            mb += b.at(i, j);
        }
        ma /= n;
        mb /= n;
        double cab = 0.0, saa = 0.0, sbb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double da = a.at(i, j) - ma;
            const double db = b.at(i, j) - mb;
            cab += da * db;
            saa += da * da;
            sbb += db * db;
        }
        if (saa > 0.0 && sbb > 0.0) total += cab / std::sqrt(saa * sbb);
    }
    const double penalty = total / static_cast<double>(d);

    return t.push(
        Tensor::scalar(penalty), {xc_batch, xe_batch},
        [xc_batch, xe_batch, n, d](Tape& tp, int id) {
            const double g = tp.grad(id).data[0];
            const Tensor& a2 = tp.value(xc_batch);
            const Tensor& b2 = tp.value(xe_batch);
            std::vector<double> da(a2.size(), 0.0), db(b2.size(), 0.0);
            for (std::size_t j = 0; j < d; ++j) {
                double ma = 0.0, mb = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    ma += a2.at(i, j);
                    mb += b2.at(i, j);
                }
                ma /= n;
                mb /= n;
                double cab = 0.0, saa = 0.0, sbb = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double dai = a2.at(i, j) - ma;
                    const double dbi = b2.at(i, j) - mb;
                    cab += dai * dbi;
                    saa += dai * dai;
                    sbb += dbi * dbi;
                }
                if (!(saa > 0.0 && sbb > 0.0)) continue;
                const double denom = std::sqrt(saa * sbb);
                const double r = cab / denom;
                for (std::size_t i = 0; i < n; ++i) {
                    const double dai = a2.at(i, j) - ma;
                    const double dbi = b2.at(i, j) - mb;
                    // d r / d a_ij and symmetric term; mean over dimensions.
                    da[i * d + j] += g / d * (dbi / denom - r * dai / saa);
                    db[i * d + j] += g / d * (dai / denom - r * dbi / sbb);
                }
            }
            auto apply = [&](int node, const std::vector<double>& delta) {
                Tensor& pg = tp.grad(node);
                if (pg.data.empty()) pg = Tensor::zeros(tp.value(node).shape);
                for (std::size_t i = 0; i < delta.size(); ++i)
                    pg.data[i] += delta[i];
            };
            apply(xc_batch, da);
            apply(xe_batch, db);
        });
}

std::vector<AlignedPair> align_latest(Tape& t,
                                      const std::vector<TimedFeature>& cont,
                                      const std::vector<TimedFeature>& events,
                                      std::size_t cont_width,
                                      std::size_t event_width) {
    const int zero_c = t.leaf(Tensor::zeros({cont_width}));
    const int zero_e = t.leaf(Tensor::zeros({event_width}));
    std::vector<AlignedPair> out;
    out.reserve(cont.size() + events.size());
    std::size_t ic = 0, ie = 0;
    int last_c = zero_c, last_e = zero_e;
    while (ic < cont.size() || ie < events.size()) {
        const bool take_cont =
            ie >= events.size() ||
            (ic < cont.size() && cont[ic].time <= events[ie].time);
        if (take_cont) {
            last_c = cont[ic].node;
            out.push_back({cont[ic].time, last_c, last_e});
            ++ic;
        } else {
            last_e = events[ie].node;
            out.push_back({events[ie].time, last_c, last_e});
            ++ie;
        }
    }
    return out;
}

// ---- Model ----

Model::Model(FusionSpec spec, int k_event_types, std::size_t hidden,
             std::uint64_t init_seed)
    : spec_(spec),
      k_(k_event_types),
      hidden_(hidden),
      init_rng_(splitmix64(init_seed)) {
    spec_.validate();
    if (k_ < 2) throw ConfigError("model requires k >= 2 event types");
    if (hidden_ < 2) throw ConfigError("hidden size must be >= 2");
    if (spec_.method == FusionMethod::Share &&
        static_cast<std::size_t>(spec_.r) >= hidden_)
        throw ConfigError("share: r must be < hidden size");
    // Force parameter registration now so initialization does not depend on
    // the first window seen.
    Tape warmup;
    InputWindow w;
    w.cont_window = {{0.0, 0.0}, {1.0, 0.0}};
    w.event_window = {{0.0, 0, 0.0}};
    w.window_end = 1.0;
    build(warmup, w);
}

Model::Branch Model::run_cont_branch(Tape& tape, const InputWindow& w,
                                     const std::string& prefix) {
    if (w.cont_window.empty())
        throw ConfigError("continuous window is empty");
    const auto p = grad::lstm_params(tape, store_, prefix, 1, hidden_, init_rng_);
    int h = tape.leaf(Tensor::zeros({hidden_}));
    int c = tape.leaf(Tensor::zeros({hidden_}));
    Branch br;
    for (const auto& s : w.cont_window) {
        const int x = tape.leaf(Tensor::vec({s.value}));
        std::tie(h, c) = grad::lstm_cell(tape, x, h, c, p);
        br.steps.push_back({s.time, h});
    }
    br.final_h = h;
    return br;
}

Model::Branch Model::run_event_branch(Tape& tape, const InputWindow& w,
                                      const std::string& prefix) {
    if (w.event_window.empty())
        throw ConfigError("event window is empty");
    const std::size_t d = static_cast<std::size_t>(k_) + 1;
    const auto p = grad::lstm_params(tape, store_, prefix, d, hidden_, init_rng_);
    int h = tape.leaf(Tensor::zeros({hidden_}));
    int c = tape.leaf(Tensor::zeros({hidden_}));
    Branch br;
    for (const auto& e : w.event_window) {
        Tensor x = Tensor::zeros({d});
        x.data[e.type] = 1.0;  // one-hot type + standardized gap
        x.data[d - 1] = e.dt_std;
        const int xn = tape.leaf(std::move(x));
        std::tie(h, c) = grad::lstm_cell(tape, xn, h, c, p);
        br.steps.push_back({e.time, h});
    }
    br.final_h = h;
    return br;
}

int Model::fuse_pair(Tape& tape, int xc, int xe, const GatingParams* gating) {
    switch (spec_.method) {
        case FusionMethod::Concat:
            return fuse_concat(tape, xc, xe);
        case FusionMethod::Mean:
        case FusionMethod::Corr:
            return fuse_mean(tape, xc, xe, spec_.beta);
        case FusionMethod::Gating:
            return fuse_gating(tape, xc, xe, *gating);
        case FusionMethod::Share:
            return fuse_share(tape, xc, xe, spec_.beta, spec_.r);
        case FusionMethod::None:
            break;
    }
    throw ConfigError("no fusion method for unimodal model");
}

ForwardNodes Model::head(Tape& tape, int rep, const std::string& prefix) {
    const std::size_t g = tape.value(rep).shape[0];
    ForwardNodes out;
    out.event_scores = grad::linear(tape, store_, prefix + ".event", rep, g,
                                    static_cast<std::size_t>(k_), init_rng_);
    out.dt_pred = grad::linear(tape, store_, prefix + ".dt", rep, g, 1, init_rng_);

    // 5-step recurrent decoder for the continuous forecast.
    const int h0 = grad::tanh_op(
        tape, grad::linear(tape, store_, prefix + ".dec_init", rep, g, hidden_,
                           init_rng_));
    const auto dec =
        grad::lstm_params(tape, store_, prefix + ".dec", 1, hidden_, init_rng_);
    int h = h0;
    int c = tape.leaf(Tensor::zeros({hidden_}));
    int y_prev = tape.leaf(Tensor::vec({0.0}));
    std::vector<int> ys;
    for (int step = 0; step < 5; ++step) {
        std::tie(h, c) = grad::lstm_cell(tape, y_prev, h, c, dec);
        const int y = grad::linear(tape, store_, prefix + ".dec_out", h, hidden_,
                                   1, init_rng_);
        ys.push_back(y);
        y_prev = y;
    }
    out.cont_pred = grad::concat(tape, ys);
    return out;
}

ForwardNodes Model::build(Tape& tape, const InputWindow& window) {
    switch (spec_.ftype) {
        case FusionType::UnimodalCont: {
            Branch br = run_cont_branch(tape, window, "cont");
            return head(tape, br.final_h, "head");
        }
        case FusionType::UnimodalEvent: {
            Branch br = run_event_branch(tape, window, "event");
            return head(tape, br.final_h, "head");
        }
        case FusionType::Intermediate: {
            Branch bc = run_cont_branch(tape, window, "cont");
            Branch be = run_event_branch(tape, window, "event");
            GatingParams gp{};
            if (spec_.method == FusionMethod::Gating) {
                gp.w_c = store_.param(tape, "fuse.w_c", {hidden_, hidden_},
                                      hidden_, init_rng_);
                gp.w_e = store_.param(tape, "fuse.w_e", {hidden_, hidden_},
                                      hidden_, init_rng_);
                gp.w_f = store_.param(tape, "fuse.w_f", {hidden_, 2 * hidden_},
                                      2 * hidden_, init_rng_);
            }
            const int rep = fuse_pair(tape, bc.final_h, be.final_h,
                                      spec_.method == FusionMethod::Gating
                                          ? &gp
                                          : nullptr);
            ForwardNodes out = head(tape, rep, "head");
            if (spec_.method == FusionMethod::Corr) {
                out.rep_cont = bc.final_h;
                out.rep_event = be.final_h;
            }
            return out;
        }
        case FusionType::Early: {
            Branch bc = run_cont_branch(tape, window, "cont");
            Branch be = run_event_branch(tape, window, "event");
            GatingParams gp{};
            if (spec_.method == FusionMethod::Gating) {
                gp.w_c = store_.param(tape, "fuse.w_c", {hidden_, hidden_},
                                      hidden_, init_rng_);
                gp.w_e = store_.param(tape, "fuse.w_e", {hidden_, hidden_},
                                      hidden_, init_rng_);
                gp.w_f = store_.param(tape, "fuse.w_f", {hidden_, 2 * hidden_},
                                      2 * hidden_, init_rng_);
            }
            const auto pairs =
                align_latest(tape, bc.steps, be.steps, hidden_, hidden_);
            std::vector<int> fused;
            int acc_c = -1, acc_e = -1;
            for (const auto& pr : pairs) {
                fused.push_back(fuse_pair(tape, pr.cont_node, pr.event_node,
                                          spec_.method == FusionMethod::Gating
                                              ? &gp
                                              : nullptr));
                if (spec_.method == FusionMethod::Corr) {
                    acc_c = acc_c < 0 ? pr.cont_node
                                      : grad::add(tape, acc_c, pr.cont_node);
                    acc_e = acc_e < 0 ? pr.event_node
                                      : grad::add(tape, acc_e, pr.event_node);
                }
            }
            const std::size_t fw = tape.value(fused.front()).shape[0];
            const auto mm =
                grad::lstm_params(tape, store_, "mm", fw, hidden_, init_rng_);
            int h = tape.leaf(Tensor::zeros({hidden_}));
            int c = tape.leaf(Tensor::zeros({hidden_}));
            for (int f : fused) std::tie(h, c) = grad::lstm_cell(tape, f, h, c, mm);
            ForwardNodes out = head(tape, h, "head");
            if (spec_.method == FusionMethod::Corr) {
                const double inv = 1.0 / static_cast<double>(pairs.size());
                out.rep_cont = grad::scale(tape, acc_c, inv);
                out.rep_event = grad::scale(tape, acc_e, inv);
            }
            return out;
        }
        case FusionType::Late: {
            Branch bc = run_cont_branch(tape, window, "cont");
            Branch be = run_event_branch(tape, window, "event");
            ForwardNodes pc = head(tape, bc.final_h, "cont_head");
            ForwardNodes pe = head(tape, be.final_h, "event_head");
            ForwardNodes out;
            out.cont_pred =
                fuse_mean(tape, pc.cont_pred, pe.cont_pred, spec_.late_betas[0]);
            out.dt_pred =
                fuse_mean(tape, pc.dt_pred, pe.dt_pred, spec_.late_betas[1]);
            // Event predictions are fused in probability space.
            const int prob_c = grad::softmax_rows(tape, pc.event_scores);
            const int prob_e = grad::softmax_rows(tape, pe.event_scores);
            out.event_scores =
                fuse_mean(tape, prob_c, prob_e, spec_.late_betas[2]);
            out.scores_are_probs = true;
            if (spec_.method == FusionMethod::Corr) {
                out.rep_cont = bc.final_h;
                out.rep_event = be.final_h;
            }
            return out;
        }
    }
    throw ConfigError("unhandled fusion type");
}

ForecastOutput Model::forward(const InputWindow& window) {
    Tape tape;
    const ForwardNodes nodes = build(tape, window);
    ForecastOutput out;
    const Tensor& cp = tape.value(nodes.cont_pred);
    for (int i = 0; i < 5; ++i) out.cont_next[i] = cp.data[i];
    out.event_scores = tape.value(nodes.event_scores).data;
    out.dt_next = tape.value(nodes.dt_pred).data[0];
    return out;
}

}  // namespace mtts::fusion
