#pragma once

#include <string>
#include <vector>

#include "sfru/rulstm.hpp"

namespace sfru {

/// Two-scale clock. Fast-grid step indices are 1-based; slow steps sit at
/// t = kR + 1. Fused outputs are the slow indices inside the anticipation
/// stage.
struct ClockConfig {
  double alpha_s = 0.0;
  double alpha_f = 0.0;
  double tau_e = 0.0;
  double tau_span = 0.0;
  int ratio = 1;       // R = alpha_s / alpha_f
  int total_fast = 0;  // T
  int s_enc_f = 0, s_ant_f = 0;
  int s_enc_s = 0, s_ant_s = 0;
  std::vector<int> slow_indices;
  std::vector<int> fused_steps;
  std::vector<double> fused_tau;
};

ClockConfig build_clock(double alpha_s, double alpha_f, double tau_e, double tau_span);

/// n-branch generalization on a common finest grid. Branch order follows the
/// alphas argument; fused steps are the intersection of all branches'
/// anticipation steps.
struct MultiClock {
  std::vector<double> alphas;
  double alpha_f = 0.0;  // finest
  double tau_e = 0.0;
  double tau_span = 0.0;
  int total_fast = 0;
  std::vector<int> strides;  // alpha_i / alpha_f
  std::vector<int> s_enc, s_ant;
  std::vector<int> fused_steps;  // fast-grid, 1-based
  std::vector<double> fused_tau;
};

MultiClock build_multi_clock(const std::vector<double>& alphas, double tau_e, double tau_span);
MultiClock to_multi_clock(const ClockConfig& c);

/// Branch-grid step index of fast-grid step t for a branch with this stride.
inline int branch_step_of(int fast_step, int stride) { return (fast_step - 1) / stride + 1; }

/// One-hidden-layer rectifier MLP: y = w2 relu(w1 x + b1) + b2.
struct MlpParams {
  Param* w1 = nullptr;
  Param* b1 = nullptr;
  Param* w2 = nullptr;
  Param* b2 = nullptr;

  int in_dim() const { return w1->value.cols; }
  int out_dim() const { return w2->value.rows; }
};

MlpParams make_mlp_params(ParamStore& store, const std::string& prefix, int in, int hidden,
                          int out);

struct MlpTrace {
  Vec x;
  Vec h;  // post-relu hidden
};

Vec mlp_forward(const MlpParams& p, const Vec& x, MlpTrace* trace = nullptr);
/// Accumulates parameter grads and returns dL/dx.
Vec mlp_backward(const MlpParams& p, const MlpTrace& t, const Vec& gy);

using SfAttnParams = MlpParams;
using FusionWeights = Vec;

struct SfAttnTrace {
  MlpTrace mlp;
  Vec weights;
};

/// softmax(MLP(concat of branch states)); one weight per branch.
FusionWeights sf_attention(const std::vector<BranchState>& states, const SfAttnParams& p,
                           SfAttnTrace* trace = nullptr);

/// Backward through sf_attention given dL/dweights; returns per-branch state
/// gradients.
std::vector<StateGrad> sf_attention_backward(const SfAttnParams& p, const SfAttnTrace& t,
                                             const Vec& gweights);

/// Convex combination sum_b w_b * l_b.
Vec fuse_logits(const std::vector<Vec>& logits, const FusionWeights& w);

/// Arithmetic mean of the per-branch logits.
Vec ensemble_fuse(const std::vector<Vec>& logits);

/// Prediction from the concatenated branch states directly (no per-branch
/// logits); affine map so that one branch reduces exactly to classify.
Vec concat_predict(const std::vector<BranchState>& states, const ClassifierParams& clf,
                   double keep = 1.0, bool dropout_active = false, std::mt19937_64* rng = nullptr,
                   ClassifyTrace* trace = nullptr);
std::vector<StateGrad> concat_predict_backward(const ClassifyTrace& t, const ClassifierParams& clf,
                                               const Vec& glogits, int n_branches);

enum class FusionScheme { Attention, Ensemble, Concat };

struct FusedPrediction {
  int t = 0;  // fast-grid index
  double tau_a = 0.0;
  Vec logits;
  FusionWeights weights;           // per branch; empty for concat
  std::vector<Vec> branch_logits;  // empty for concat
};

struct MultiScaleTrace {
  std::vector<BranchForwardTrace> branches;
  std::vector<SfAttnTrace> attn;     // attention scheme, one per fused step
  std::vector<ClassifyTrace> joint;  // concat scheme, one per fused step
  std::vector<std::vector<Vec>> branch_logits;
  std::vector<Vec> weights;
  FusionScheme scheme = FusionScheme::Attention;
  int n_branches = 0;
};

/// Runs every branch on its own subsampled grid over the fast-grid sequence
/// and fuses at the clock's fused steps. The attention input is the
/// concatenation of the branches' encoder states at the fused instant.
std::vector<FusedPrediction> multi_scale_forward(const std::vector<Vec>& fast_seq,
                                                 const MultiClock& clock,
                                                 const std::vector<const BranchParams*>& branches,
                                                 FusionScheme scheme, const SfAttnParams* attn,
                                                 const ClassifierParams* joint_clf,
                                                 bool dropout_active = false,
                                                 std::mt19937_64* rng = nullptr,
                                                 MultiScaleTrace* trace = nullptr,
                                                 bool literal_unroll = false);

void multi_scale_backward(const MultiScaleTrace& t, const MultiClock& clock,
                          const std::vector<const BranchParams*>& branches,
                          const SfAttnParams* attn, const ClassifierParams* joint_clf,
                          const std::vector<Vec>& gfused);

/// Two-branch convenience wrapper: branch order (slow, fast).
std::vector<FusedPrediction> slowfast_forward(const std::vector<Vec>& fast_seq,
                                              const ClockConfig& clock, const BranchParams& slow,
                                              const BranchParams& fast, FusionScheme scheme,
                                              const SfAttnParams* attn,
                                              const ClassifierParams* joint_clf = nullptr,
                                              bool dropout_active = false,
                                              std::mt19937_64* rng = nullptr,
                                              MultiScaleTrace* trace = nullptr,
                                              bool literal_unroll = false);

}  // namespace sfru
