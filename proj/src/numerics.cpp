#include "sfru/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sfru {

bool all_finite(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vec affine(const Mat& w, const Vec& b, const Vec& x) {
  if (w.cols != static_cast<int>(x.size()) || w.rows != static_cast<int>(b.size())) {
    throw std::invalid_argument("affine: shape mismatch, W is " + std::to_string(w.rows) + "x" +
                                std::to_string(w.cols) + ", b has " + std::to_string(b.size()) +
                                ", x has " + std::to_string(x.size()));
  }
  Vec y(b);
  for (int r = 0; r < w.rows; ++r) {
    const double* wr = &w.data[static_cast<std::size_t>(r) * w.cols];
    double acc = 0.0;
    for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] += acc;
  }
  return y;
}

void affine_backward(const Mat& w, const Vec& x, const Vec& gy, Mat& gw, Vec& gb, Vec* gx) {
  if (static_cast<int>(gy.size()) != w.rows || static_cast<int>(x.size()) != w.cols) {
    throw std::invalid_argument("affine_backward: shape mismatch");
  }
  for (int r = 0; r < w.rows; ++r) {
    const double g = gy[r];
    gb[r] += g;
    double* gwr = &gw.data[static_cast<std::size_t>(r) * w.cols];
    for (int c = 0; c < w.cols; ++c) gwr[c] += g * x[c];
  }
  if (gx != nullptr) {
    gx->assign(w.cols, 0.0);
    for (int r = 0; r < w.rows; ++r) {
      const double g = gy[r];
      const double* wr = &w.data[static_cast<std::size_t>(r) * w.cols];
      for (int c = 0; c < w.cols; ++c) (*gx)[c] += wr[c] * g;
    }
  }
}

Vec softmax(const Vec& v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  Vec y(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    y[i] = std::exp(v[i] - m);
    sum += y[i];
  }
  for (double& e : y) e /= sum;
  return y;
}

Vec softmax_vjp(const Vec& y, const Vec& gy) {
  double dot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * gy[i];
  Vec gv(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) gv[i] = y[i] * (gy[i] - dot);
  return gv;
}

double cross_entropy(const Vec& logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size())) {
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(logits.size()) + " classes");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - m);
  return std::log(sum) - (logits[label] - m);
}

Vec cross_entropy_backward(const Vec& logits, int label, double gloss) {
  Vec g = softmax(logits);
  for (double& e : g) e *= gloss;
  g[label] -= gloss;
  return g;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

Param& ParamStore::add_matrix(const std::string& name, int rows, int cols, int fan_in) {
  if (index_.count(name) != 0) {
    throw std::invalid_argument("ParamStore: duplicate parameter name '" + name + "'");
  }
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Mat(rows, cols);
  p->grad = Mat(rows, cols);
  p->fan_in = fan_in > 0 ? fan_in : cols;
  index_[name] = entries_.size();
  entries_.push_back(std::move(p));
  return *entries_.back();
}

Param& ParamStore::add_vector(const std::string& name, int n, int fan_in) {
  return add_matrix(name, n, 1, fan_in);
}

Param& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
  return *entries_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
  return *entries_[it->second];
}

bool ParamStore::contains(const std::string& name) const { return index_.count(name) != 0; }

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : entries_) std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
}

void ParamStore::init_uniform(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : entries_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, p->fan_in)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p->value.data) v = dist(rng);
  }
}

std::map<std::string, Mat> finite_diff_grad(const std::function<double(ParamStore&)>& f,
                                            ParamStore& params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
  std::map<std::string, Mat> out;
  for (auto& p : params) {
    Mat est(p->value.rows, p->value.cols);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data[i];
      p->value.data[i] = saved + eps;
      const double fp = f(params);
      p->value.data[i] = saved - eps;
      const double fm = f(params);
      p->value.data[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw std::runtime_error("finite_diff_grad: non-finite objective at parameter '" +
                                 p->name + "'");
      }
      est.data[i] = (fp - fm) / (2.0 * eps);
    }
    out.emplace(p->name, std::move(est));
  }
  return out;
}

double gradcheck_max_rel_error(const std::function<double(ParamStore&)>& loss,
                               const std::function<void(ParamStore&)>& backward,
                               ParamStore& params, double eps) {
  params.zero_grad();
  backward(params);
  std::map<std::string, Mat> analytic;
  for (const auto& p : params) analytic.emplace(p->name, p->grad);
  const auto fd = finite_diff_grad(loss, params, eps);
  double worst = 0.0;
  for (const auto& [name, est] : fd) {
    const Mat& an = analytic.at(name);
    for (std::size_t i = 0; i < est.size(); ++i) {
      worst = std::max(worst, relative_error(an.data[i], est.data[i]));
    }
  }
  return worst;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace sfru
