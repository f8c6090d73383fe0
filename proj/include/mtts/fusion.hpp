#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mtts/nn.hpp"
#include "mtts/tape.hpp"

namespace mtts::fusion {

using grad::ParamStore;
using grad::Tape;
using grad::Tensor;

enum class FusionType { Early, Intermediate, Late, UnimodalCont, UnimodalEvent };
enum class FusionMethod { Concat, Mean, Corr, Gating, Share, None };

std::string to_string(FusionType t);
std::string to_string(FusionMethod m);
FusionType fusion_type_from_string(const std::string& s);
FusionMethod fusion_method_from_string(const std::string& s);

struct FusionSpec {
    FusionType ftype = FusionType::Intermediate;
    FusionMethod method = FusionMethod::Concat;
    double beta = 0.5;
    double lambda = 0.0;
    int r = 1;
    // Per-prediction weights for late fusion: (cont, dt, event type).
    std::array<double, 3> late_betas{0.5, 0.5, 0.5};

    void validate() const;  // throws ConfigError
    std::string name() const;  // "<type>_<method>"
};

// The 14 valid type x method families.
std::vector<FusionSpec> valid_combinations();

// Model input. Continuous values and event delta-times arrive already
// standardized by the training-set statistics.
struct InputWindow {
    struct ContSample {
        double time;
        double value;
    };
    struct EventSample {
        double time;
        int type;
        double dt_std;  // standardized gap to the previous event
    };
    std::vector<ContSample> cont_window;
    std::vector<EventSample> event_window;
    double window_end = 0.0;
};

struct ForecastOutput {
    std::array<double, 5> cont_next{};
    // Raw logits, except for late fusion where these are fused probabilities.
    std::vector<double> event_scores;
    double dt_next = 0.0;
};

// ---- fusion primitives (tape ops) ----

int fuse_concat(Tape& t, int xc, int xe);
int fuse_mean(Tape& t, int xc, int xe, double beta);
int fuse_share(Tape& t, int xc, int xe, double beta, int r);

struct GatingParams {
    int w_c, w_e, w_f;
};
int fuse_gating(Tape& t, int xc, int xe, const GatingParams& p);

// Stacks same-length 1-D nodes into a (rows x len) matrix node.
int stack_rows(Tape& t, const std::vector<int>& rows);

// Mean over feature dimensions of the per-dimension Pearson correlation
// across the batch (rows). Zero-variance dimensions contribute 0.
int corr_penalty(Tape& t, int xc_batch, int xe_batch);

// ---- temporal alignment ----

struct TimedFeature {
    double time;
    int node;  // 1-D feature node on the tape
};

struct AlignedPair {
    double time;
    int cont_node;   // latest continuous feature at time <= t, or zeros
    int event_node;  // latest event feature at time <= t, or zeros
};

// Merged time-ordered stream; one entry per feature in either timeline.
// Ties emit the continuous entry first.
std::vector<AlignedPair> align_latest(Tape& t,
                                      const std::vector<TimedFeature>& cont,
                                      const std::vector<TimedFeature>& events,
                                      std::size_t cont_width,
                                      std::size_t event_width);

// ---- models ----

// Tape nodes of one forward pass, kept for loss construction.
struct ForwardNodes {
    int cont_pred = -1;     // length 5
    int event_scores = -1;  // length K (logits, or probabilities for late)
    int dt_pred = -1;       // length 1
    bool scores_are_probs = false;
    // Pre-fusion representations, set when method == Corr.
    int rep_cont = -1;
    int rep_event = -1;
};

class Model {
public:
    Model(FusionSpec spec, int k_event_types, std::size_t hidden,
          std::uint64_t init_seed);

    // Builds the forward graph for one window on the given tape.
    ForwardNodes build(Tape& tape, const InputWindow& window);

    ForecastOutput forward(const InputWindow& window);

    const FusionSpec& spec() const { return spec_; }
    int k_event_types() const { return k_; }
    std::size_t hidden() const { return hidden_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

private:
    struct Branch {
        std::vector<TimedFeature> steps;  // per-step hidden states
        int final_h = -1;
    };
    Branch run_cont_branch(Tape& tape, const InputWindow& w,
                           const std::string& prefix);
    Branch run_event_branch(Tape& tape, const InputWindow& w,
                            const std::string& prefix);
    int fuse_pair(Tape& tape, int xc, int xe, const GatingParams* gating);
    ForwardNodes head(Tape& tape, int rep, const std::string& prefix);

    FusionSpec spec_;
    int k_;
    std::size_t hidden_;
    ParamStore store_;
    Rng init_rng_;
};

}  // namespace mtts::fusion
