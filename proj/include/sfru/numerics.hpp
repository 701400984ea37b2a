#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace sfru {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Shape is fixed at construction.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec data;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return data.size(); }
};

bool all_finite(const Vec& v);

/// y = W x + b. Throws std::invalid_argument naming both shapes on mismatch.
Vec affine(const Mat& w, const Vec& b, const Vec& x);

/// Accumulates dL/dW, dL/db from upstream gy; writes dL/dx into *gx when given.
void affine_backward(const Mat& w, const Vec& x, const Vec& gy, Mat& gw, Vec& gb, Vec* gx);

/// Max-shifted softmax; entries in (0,1), sum 1.
Vec softmax(const Vec& v);

/// VJP of softmax: given y = softmax(v) and gy, returns dL/dv.
Vec softmax_vjp(const Vec& y, const Vec& gy);

/// -log softmax(logits)[label], computed without forming softmax explicitly.
double cross_entropy(const Vec& logits, int label);

/// dL/dlogits = gloss * (softmax(logits) - onehot(label)).
Vec cross_entropy_backward(const Vec& logits, int label, double gloss);

/// |a-b| / max(1e-8, |a|+|b|): the project-wide gradient check metric.
double relative_error(double a, double b);

/// One named parameter tensor with a same-shape gradient accumulator.
/// Vectors are stored as n x 1. fan_in drives uniform initialization.
struct Param {
  std::string name;
  Mat value;
  Mat grad;
  int fan_in = 0;

  bool is_vector() const { return value.cols == 1; }
  Vec& vec() { return value.data; }
  const Vec& vec() const { return value.data; }
  Vec& gvec() { return grad.data; }
};

/// Named parameter tensors with deterministic (insertion) iteration order.
class ParamStore {
 public:
  Param& add_matrix(const std::string& name, int rows, int cols, int fan_in = -1);
  Param& add_vector(const std::string& name, int n, int fan_in);

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

  /// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per tensor, one RNG stream
  /// consumed in insertion order.
  void init_uniform(std::uint64_t seed);

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<std::unique_ptr<Param>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Central finite differences (f(th+eps e) - f(th-eps e)) / (2 eps) for every
/// scalar entry of every tensor in params. f must be pure; params are
/// restored bit-exactly. Throws std::runtime_error on non-finite f.
std::map<std::string, Mat> finite_diff_grad(const std::function<double(ParamStore&)>& f,
                                            ParamStore& params, double eps = 1e-5);

/// Runs `backward` (which must populate analytic grads), then compares them
/// against finite_diff_grad of `loss`. Returns the max relative error.
double gradcheck_max_rel_error(const std::function<double(ParamStore&)>& loss,
                               const std::function<void(ParamStore&)>& backward,
                               ParamStore& params, double eps = 1e-5);

/// splitmix64 mix of a base seed and a stream tag, for independent RNG streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace sfru
