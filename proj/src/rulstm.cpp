#include "sfru/rulstm.hpp"

#include <cmath>
#include <stdexcept>

namespace sfru {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// pre-activations a = wx z + wh h + b, as one 4d vector
Vec gate_preactivations(const Vec& z, const Vec& h, const LstmParams& p) {
  const Mat& wx = p.wx->value;
  const Mat& wh = p.wh->value;
  const Vec& b = p.b->vec();
  Vec a(b);
  for (int r = 0; r < wx.rows; ++r) {
    const double* xr = &wx.data[static_cast<std::size_t>(r) * wx.cols];
    const double* hr = &wh.data[static_cast<std::size_t>(r) * wh.cols];
    double acc = 0.0;
    for (int c = 0; c < wx.cols; ++c) acc += xr[c] * z[c];
    for (int c = 0; c < wh.cols; ++c) acc += hr[c] * h[c];
    a[r] += acc;
  }
  return a;
}

}  // namespace

BranchState lstm_step(const Vec& z, const BranchState& s, const LstmParams& p,
                      LstmStepTrace* trace) {
  const int d = p.hidden();
  if (static_cast<int>(z.size()) != p.input_dim() || static_cast<int>(s.h.size()) != d ||
      static_cast<int>(s.c.size()) != d) {
    throw std::invalid_argument("lstm_step: shape mismatch, input " + std::to_string(z.size()) +
                                " vs D=" + std::to_string(p.input_dim()) + ", state " +
                                std::to_string(s.h.size()) + " vs d=" + std::to_string(d));
  }
  const Vec a = gate_preactivations(z, s.h, p);
  Vec i(d), f(d), g(d), o(d), c_out(d), tanh_c(d), h_out(d);
  for (int k = 0; k < d; ++k) {
    i[k] = sigmoid(a[k]);
    f[k] = sigmoid(a[d + k]);
    g[k] = std::tanh(a[2 * d + k]);
    o[k] = sigmoid(a[3 * d + k]);
    c_out[k] = f[k] * s.c[k] + i[k] * g[k];
    tanh_c[k] = std::tanh(c_out[k]);
    h_out[k] = o[k] * tanh_c[k];
  }
  if (trace != nullptr) {
    trace->z = z;
    trace->h_in = s.h;
    trace->c_in = s.c;
    trace->i = i;
    trace->f = f;
    trace->g = g;
    trace->o = o;
    trace->c_out = c_out;
    trace->tanh_c = tanh_c;
  }
  return BranchState{std::move(h_out), std::move(c_out)};
}

StateGrad lstm_step_backward(const LstmStepTrace& t, const LstmParams& p, const StateGrad& gout,
                             Vec* gz) {
  const int d = p.hidden();
  Vec da(4 * d);
  Vec gc_in(d);
  for (int k = 0; k < d; ++k) {
    const double gh = gout.h.empty() ? 0.0 : gout.h[k];
    const double gc_out_direct = gout.c.empty() ? 0.0 : gout.c[k];
    const double go = gh * t.tanh_c[k];
    const double gc_total = gc_out_direct + gh * t.o[k] * (1.0 - t.tanh_c[k] * t.tanh_c[k]);
    const double gi = gc_total * t.g[k];
    const double gf = gc_total * t.c_in[k];
    const double gg = gc_total * t.i[k];
    gc_in[k] = gc_total * t.f[k];
    da[k] = gi * t.i[k] * (1.0 - t.i[k]);
    da[d + k] = gf * t.f[k] * (1.0 - t.f[k]);
    da[2 * d + k] = gg * (1.0 - t.g[k] * t.g[k]);
    da[3 * d + k] = go * t.o[k] * (1.0 - t.o[k]);
  }
  Mat& gwx = p.wx->grad;
  Mat& gwh = p.wh->grad;
  Vec& gb = p.b->gvec();
  const Mat& wx = p.wx->value;
  const Mat& wh = p.wh->value;
  Vec gh_in(d, 0.0);
  if (gz != nullptr) gz->assign(wx.cols, 0.0);
  for (int r = 0; r < 4 * d; ++r) {
    const double g = da[r];
    gb[r] += g;
    double* gxr = &gwx.data[static_cast<std::size_t>(r) * wx.cols];
    const double* xr = &wx.data[static_cast<std::size_t>(r) * wx.cols];
    for (int c = 0; c < wx.cols; ++c) {
      gxr[c] += g * t.z[c];
      if (gz != nullptr) (*gz)[c] += xr[c] * g;
    }
    double* ghr = &gwh.data[static_cast<std::size_t>(r) * wh.cols];
    const double* hr = &wh.data[static_cast<std::size_t>(r) * wh.cols];
    for (int c = 0; c < d; ++c) {
      ghr[c] += g * t.h_in[c];
      gh_in[c] += hr[c] * g;
    }
  }
  return StateGrad{std::move(gh_in), std::move(gc_in)};
}

std::vector<BranchState> roll_encode(const std::vector<Vec>& seq, const LstmParams& p,
                                     EncodeTrace* trace) {
  if (seq.empty()) throw std::invalid_argument("roll_encode: empty sequence");
  const int d = p.hidden();
  std::vector<BranchState> states;
  states.reserve(seq.size());
  BranchState s{Vec(d, 0.0), Vec(d, 0.0)};
  if (trace != nullptr) trace->steps.resize(seq.size());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    s = lstm_step(seq[t], s, p, trace != nullptr ? &trace->steps[t] : nullptr);
    states.push_back(s);
  }
  return states;
}

void roll_encode_backward(const EncodeTrace& t, const LstmParams& p,
                          const std::vector<StateGrad>& injected, std::vector<Vec>* gseq) {
  if (t.steps.empty()) throw std::invalid_argument("roll_encode_backward: missing trace");
  if (injected.size() != t.steps.size()) {
    throw std::invalid_argument("roll_encode_backward: injected gradient count mismatch");
  }
  const int d = p.hidden();
  if (gseq != nullptr) gseq->assign(t.steps.size(), Vec());
  StateGrad carry{Vec(d, 0.0), Vec(d, 0.0)};
  for (std::size_t idx = t.steps.size(); idx-- > 0;) {
    if (!injected[idx].h.empty()) {
      for (int k = 0; k < d; ++k) carry.h[k] += injected[idx].h[k];
    }
    if (!injected[idx].c.empty()) {
      for (int k = 0; k < d; ++k) carry.c[k] += injected[idx].c[k];
    }
    Vec gz;
    carry = lstm_step_backward(t.steps[idx], p, carry, gseq != nullptr ? &gz : nullptr);
    if (gseq != nullptr) (*gseq)[idx] = std::move(gz);
  }
}

BranchState unroll_decode(const Vec& z_anchor, const BranchState& r, int n, const LstmParams& p,
                          UnrollTrace* trace) {
  if (n < 1) throw std::invalid_argument("unroll_decode: n must be >= 1, got " + std::to_string(n));
  BranchState s = r;
  if (trace != nullptr) trace->steps.resize(n);
  for (int q = 0; q < n; ++q) {
    s = lstm_step(z_anchor, s, p, trace != nullptr ? &trace->steps[q] : nullptr);
  }
  return s;
}

StateGrad unroll_decode_backward(const UnrollTrace& t, const LstmParams& p, const StateGrad& gout,
                                 Vec* gz_anchor) {
  if (t.steps.empty()) throw std::invalid_argument("unroll_decode_backward: missing trace");
  StateGrad carry = gout;
  if (gz_anchor != nullptr) gz_anchor->assign(p.input_dim(), 0.0);
  for (std::size_t q = t.steps.size(); q-- > 0;) {
    Vec gz;
    carry = lstm_step_backward(t.steps[q], p, carry, gz_anchor != nullptr ? &gz : nullptr);
    if (gz_anchor != nullptr) {
      for (std::size_t k = 0; k < gz.size(); ++k) (*gz_anchor)[k] += gz[k];
    }
  }
  return carry;
}

Vec classify(const BranchState& u, const ClassifierParams& clf, double keep, bool dropout_active,
             std::mt19937_64* rng, ClassifyTrace* trace) {
  Vec input(u.h);
  input.insert(input.end(), u.c.begin(), u.c.end());
  if (clf.w->value.cols != static_cast<int>(input.size())) {
    throw std::invalid_argument("classify: classifier width " + std::to_string(clf.w->value.cols) +
                                " does not match state width " + std::to_string(input.size()));
  }
  Vec mask;
  if (dropout_active && keep < 1.0) {
    if (rng == nullptr) throw std::invalid_argument("classify: dropout requires an RNG");
    std::bernoulli_distribution coin(keep);
    mask.resize(input.size());
    for (std::size_t k = 0; k < input.size(); ++k) {
      mask[k] = coin(*rng) ? 1.0 / keep : 0.0;
      input[k] *= mask[k];
    }
  }
  if (trace != nullptr) {
    trace->input = input;
    trace->mask = mask;
  }
  return affine(clf.w->value, clf.b->vec(), input);
}

StateGrad classify_backward(const ClassifyTrace& t, const ClassifierParams& clf,
                            const Vec& glogits) {
  Vec ginput;
  affine_backward(clf.w->value, t.input, glogits, clf.w->grad, clf.b->gvec(), &ginput);
  if (!t.mask.empty()) {
    for (std::size_t k = 0; k < ginput.size(); ++k) ginput[k] *= t.mask[k];
  }
  const std::size_t d = ginput.size() / 2;
  StateGrad g;
  g.h.assign(ginput.begin(), ginput.begin() + d);
  g.c.assign(ginput.begin() + d, ginput.end());
  return g;
}

BranchParams make_branch_params(ParamStore& store, const std::string& prefix, int input_dim,
                                int hidden, int classes, double dropout_keep) {
  BranchParams p;
  p.enc.wx = &store.add_matrix(prefix + ".enc.wx", 4 * hidden, input_dim);
  p.enc.wh = &store.add_matrix(prefix + ".enc.wh", 4 * hidden, hidden);
  p.enc.b = &store.add_vector(prefix + ".enc.b", 4 * hidden, input_dim + hidden);
  p.dec.wx = &store.add_matrix(prefix + ".dec.wx", 4 * hidden, input_dim);
  p.dec.wh = &store.add_matrix(prefix + ".dec.wh", 4 * hidden, hidden);
  p.dec.b = &store.add_vector(prefix + ".dec.b", 4 * hidden, input_dim + hidden);
  p.clf.w = &store.add_matrix(prefix + ".clf.w", classes, 2 * hidden);
  p.clf.b = &store.add_vector(prefix + ".clf.b", classes, 2 * hidden);
  p.dropout_keep = dropout_keep;
  return p;
}

void init_forget_bias(BranchParams& p, double value) {
  for (LstmParams* lp : {&p.enc, &p.dec}) {
    const int d = lp->hidden();
    for (int k = 0; k < d; ++k) lp->b->vec()[d + k] = value;
  }
}

std::vector<StepPrediction> branch_forward_at(const std::vector<Vec>& seq, int s_enc,
                                              const std::vector<int>& steps, double alpha,
                                              const BranchParams& p, bool dropout_active,
                                              std::mt19937_64* rng, BranchForwardTrace* trace,
                                              int unroll_stride) {
  const int len = static_cast<int>(seq.size());
  if (s_enc < 0 || len <= s_enc) {
    throw std::invalid_argument("branch_forward: need at least one anticipation step, got len=" +
                                std::to_string(len) + " with s_enc=" + std::to_string(s_enc));
  }
  if (unroll_stride < 1) throw std::invalid_argument("branch_forward: unroll_stride must be >= 1");
  for (std::size_t k = 0; k < steps.size(); ++k) {
    if (steps[k] <= s_enc || steps[k] > len || (k > 0 && steps[k] <= steps[k - 1])) {
      throw std::invalid_argument("branch_forward: bad anticipation step " +
                                  std::to_string(steps[k]));
    }
  }
  EncodeTrace local_enc;
  EncodeTrace* enc_trace = trace != nullptr ? &trace->enc : &local_enc;
  std::vector<BranchState> states = roll_encode(seq, p.enc, enc_trace);
  if (trace != nullptr) {
    trace->seq = seq;
    trace->enc_states = states;
    trace->dec.clear();
    trace->clf.clear();
    trace->steps.clear();
    trace->s_enc = s_enc;
    trace->unroll_stride = unroll_stride;
  }
  std::vector<StepPrediction> out;
  out.reserve(steps.size());
  for (int t : steps) {
    const int n = unroll_stride * (len - t) + 1;
    UnrollTrace* dec_trace = nullptr;
    ClassifyTrace* clf_trace = nullptr;
    if (trace != nullptr) {
      trace->dec.emplace_back();
      dec_trace = &trace->dec.back();
      trace->clf.emplace_back();
      clf_trace = &trace->clf.back();
      trace->steps.push_back(t);
    }
    const BranchState u = unroll_decode(seq[t - 1], states[t - 1], n, p.dec, dec_trace);
    StepPrediction pred;
    pred.t = t;
    pred.tau_a = alpha * (len - t + 1);
    pred.logits = classify(u, p.clf, p.dropout_keep, dropout_active, rng, clf_trace);
    out.push_back(std::move(pred));
  }
  return out;
}

std::vector<StepPrediction> branch_forward(const std::vector<Vec>& seq, int s_enc, double alpha,
                                           const BranchParams& p, bool dropout_active,
                                           std::mt19937_64* rng, BranchForwardTrace* trace,
                                           int unroll_stride) {
  const int len = static_cast<int>(seq.size());
  if (s_enc < 0 || len <= s_enc) {
    throw std::invalid_argument("branch_forward: need at least one anticipation step, got len=" +
                                std::to_string(len) + " with s_enc=" + std::to_string(s_enc));
  }
  std::vector<int> steps;
  steps.reserve(len - s_enc);
  for (int t = s_enc + 1; t <= len; ++t) steps.push_back(t);
  return branch_forward_at(seq, s_enc, steps, alpha, p, dropout_active, rng, trace, unroll_stride);
}

void branch_backward(const BranchForwardTrace& t, const BranchParams& p,
                     const std::vector<Vec>& glogits) {
  if (t.enc.steps.empty() || t.dec.empty()) {
    throw std::invalid_argument("branch_backward: missing forward trace");
  }
  if (glogits.size() != t.dec.size()) {
    throw std::invalid_argument("branch_backward: expected " + std::to_string(t.dec.size()) +
                                " logit gradients, got " + std::to_string(glogits.size()));
  }
  std::vector<StateGrad> injected(t.enc.steps.size());
  for (std::size_t k = 0; k < t.dec.size(); ++k) {
    const StateGrad gu = classify_backward(t.clf[k], p.clf, glogits[k]);
    const StateGrad gr = unroll_decode_backward(t.dec[k], p.dec, gu, nullptr);
    const int step = t.steps[k] - 1;
    StateGrad& inj = injected[step];
    if (inj.h.empty()) {
      inj = gr;
    } else {
      for (std::size_t i = 0; i < gr.h.size(); ++i) {
        inj.h[i] += gr.h[i];
        inj.c[i] += gr.c[i];
      }
    }
  }
  roll_encode_backward(t.enc, p.enc, injected, nullptr);
}

}  // namespace sfru
