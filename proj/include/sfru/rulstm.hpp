#pragma once

#include <random>
#include <vector>

#include "sfru/numerics.hpp"

namespace sfru {

/// Gate blocks in wx/wh/b are ordered input/forget/candidate/output, fixed
/// project-wide.
struct LstmParams {
  Param* wx = nullptr;  // 4d x D
  Param* wh = nullptr;  // 4d x d
  Param* b = nullptr;   // 4d

  int hidden() const { return wh->value.cols; }
  int input_dim() const { return wx->value.cols; }
};

/// Hidden and context vectors of one encoder or decoder.
struct BranchState {
  Vec h, c;
};

struct LstmStepTrace {
  Vec z, h_in, c_in;
  Vec i, f, g, o;
  Vec c_out, tanh_c;
};

/// Gradient wrt a BranchState.
struct StateGrad {
  Vec h, c;
};

BranchState lstm_step(const Vec& z, const BranchState& s, const LstmParams& p,
                      LstmStepTrace* trace = nullptr);

/// Given gradients wrt the step's outputs, accumulates parameter gradients and
/// returns gradients wrt (h_in, c_in); writes dL/dz into *gz when given.
StateGrad lstm_step_backward(const LstmStepTrace& t, const LstmParams& p, const StateGrad& gout,
                             Vec* gz = nullptr);

struct EncodeTrace {
  std::vector<LstmStepTrace> steps;
};

/// Rolling encoder from zero state; state[t] depends only on seq[0..t].
std::vector<BranchState> roll_encode(const std::vector<Vec>& seq, const LstmParams& p,
                                     EncodeTrace* trace = nullptr);

/// Reverse sweep over the encode trace. `injected[t]` carries the gradients
/// accumulated at state t from every consumer; entries may be empty (zero).
void roll_encode_backward(const EncodeTrace& t, const LstmParams& p,
                          const std::vector<StateGrad>& injected,
                          std::vector<Vec>* gseq = nullptr);

struct UnrollTrace {
  std::vector<LstmStepTrace> steps;
};

/// Applies lstm_step n times from r, feeding the same anchor input each time.
BranchState unroll_decode(const Vec& z_anchor, const BranchState& r, int n, const LstmParams& p,
                          UnrollTrace* trace = nullptr);

/// Returns the gradient wrt the initial state r; anchor input gradients are
/// summed over all steps into *gz_anchor when given.
StateGrad unroll_decode_backward(const UnrollTrace& t, const LstmParams& p, const StateGrad& gout,
                                 Vec* gz_anchor = nullptr);

struct ClassifierParams {
  Param* w = nullptr;  // C x 2d (or C x k*2d for concatenated states)
  Param* b = nullptr;  // C
};

struct ClassifyTrace {
  Vec input;  // post-dropout [h;c]
  Vec mask;   // per-entry inverted-dropout scale, empty when inactive
};

/// affine on [h;c]; inverted dropout (Bernoulli(keep)/keep) on the classifier
/// input when dropout_active, training only.
Vec classify(const BranchState& u, const ClassifierParams& clf, double keep, bool dropout_active,
             std::mt19937_64* rng, ClassifyTrace* trace = nullptr);

StateGrad classify_backward(const ClassifyTrace& t, const ClassifierParams& clf,
                            const Vec& glogits);

struct BranchParams {
  LstmParams enc;
  LstmParams dec;
  ClassifierParams clf;
  double dropout_keep = 0.2;
};

/// Registers one branch's tensors under `prefix.` and returns wired views.
/// Forget-gate bias rows are set to +1 by init_branch_bias after init.
BranchParams make_branch_params(ParamStore& store, const std::string& prefix, int input_dim,
                                int hidden, int classes, double dropout_keep = 0.2);
void init_forget_bias(BranchParams& p, double value = 1.0);

/// One emitted prediction: step index on the branch's own grid, anticipation
/// time in seconds, and logits over all classes.
struct StepPrediction {
  int t = 0;
  double tau_a = 0.0;
  Vec logits;
};

struct BranchForwardTrace {
  std::vector<Vec> seq;
  EncodeTrace enc;
  std::vector<BranchState> enc_states;
  std::vector<UnrollTrace> dec;        // one per anticipation step
  std::vector<ClassifyTrace> clf;      // one per anticipation step
  std::vector<int> steps;              // branch-grid t per prediction
  int s_enc = 0;
  int unroll_stride = 1;
};

/// Encoder over the whole branch-grid sequence; for each t in (s_enc, len]:
/// unroll the decoder for unroll_stride*(len-t)+1 steps from the encoder state
/// with the observation at t as anchor, then classify. tau_a = alpha*(len-t+1).
/// unroll_stride=1 unrolls on the branch's own grid; stride=R reproduces the
/// literal fast-grid index range.
std::vector<StepPrediction> branch_forward(const std::vector<Vec>& seq, int s_enc, double alpha,
                                           const BranchParams& p, bool dropout_active,
                                           std::mt19937_64* rng,
                                           BranchForwardTrace* trace = nullptr,
                                           int unroll_stride = 1);

/// branch_forward restricted to an explicit subset of anticipation steps
/// (branch-grid, 1-based, strictly increasing, all in (s_enc, len]).
std::vector<StepPrediction> branch_forward_at(const std::vector<Vec>& seq, int s_enc,
                                              const std::vector<int>& steps, double alpha,
                                              const BranchParams& p, bool dropout_active,
                                              std::mt19937_64* rng,
                                              BranchForwardTrace* trace = nullptr,
                                              int unroll_stride = 1);

/// Exact reverse-mode gradients from per-prediction logit gradients.
/// Throws std::invalid_argument when the trace is missing or inconsistent.
void branch_backward(const BranchForwardTrace& t, const BranchParams& p,
                     const std::vector<Vec>& glogits);

}  // namespace sfru
