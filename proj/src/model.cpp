#include "metastack/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metastack/vecmath.hpp"

namespace metastack {

GlobalModel GlobalModel::zeros(int d, int classes) {
  GlobalModel m;
  m.d = d;
  m.classes = classes;
  m.params.assign(static_cast<std::size_t>(classes) * (d + 1), 0.0);
  return m;
}

void GlobalModel::validate() const {
  if (static_cast<int>(params.size()) != param_dim())
    throw std::invalid_argument("model parameter length does not match architecture");
  if (!all_finite(params))
    throw std::invalid_argument("model parameters must be finite");
}

void softmax_logits(const GlobalModel& m, std::span<const double> x,
                    std::span<double> logits) {
  for (int c = 0; c < m.classes; ++c) {
    double z = m.bias(c);
    const double* w = m.params.data() + static_cast<std::size_t>(c) * m.d;
    for (int j = 0; j < m.d; ++j) z += w[j] * x[j];
    logits[c] = z;
  }
}

int predict_class(const GlobalModel& m, std::span<const double> x) {
  std::vector<double> logits(m.classes);
  softmax_logits(m, x, logits);
  int best = 0;
  for (int c = 1; c < m.classes; ++c)
    if (logits[c] > logits[best]) best = c;
  return best;
}

namespace {

// log softmax denominator, numerically stable
double log_sum_exp(std::span<const double> z) {
  double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  return mx + std::log(s);
}

}  // namespace

double eval_loss(const GlobalModel& m, const Dataset& data) {
  if (data.x.empty()) throw std::invalid_argument("eval_loss: empty dataset");
  if (data.d != m.d) throw std::invalid_argument("eval_loss: dimension mismatch");
  std::vector<double> logits(m.classes);
  double total = 0.0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    softmax_logits(m, data.x[i], logits);
    total += log_sum_exp(logits) - logits[data.y[i]];
  }
  return total / static_cast<double>(data.x.size());
}

double eval_accuracy(const GlobalModel& m, const Dataset& data) {
  if (data.x.empty()) throw std::invalid_argument("eval_accuracy: empty dataset");
  int hits = 0;
  for (std::size_t i = 0; i < data.x.size(); ++i)
    if (predict_class(m, data.x[i]) == data.y[i]) hits++;
  return static_cast<double>(hits) / static_cast<double>(data.x.size());
}

BackdoorMetrics eval_backdoor_metrics(const GlobalModel& m, const Dataset& poisoned) {
  BackdoorMetrics out;
  out.loss = eval_loss(m, poisoned);
  out.accuracy = eval_accuracy(m, poisoned);
  return out;
}

std::vector<double> loss_gradient(const GlobalModel& m, const Dataset& data) {
  if (data.x.empty()) throw std::invalid_argument("loss_gradient: empty dataset");
  std::vector<double> grad(m.param_dim(), 0.0);
  std::vector<double> logits(m.classes);
  std::vector<double> p(m.classes);
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    softmax_logits(m, data.x[i], logits);
    double lse = log_sum_exp(logits);
    for (int c = 0; c < m.classes; ++c) p[c] = std::exp(logits[c] - lse);
    p[data.y[i]] -= 1.0;
    const auto& x = data.x[i];
    for (int c = 0; c < m.classes; ++c) {
      double* gw = grad.data() + static_cast<std::size_t>(c) * m.d;
      for (int j = 0; j < m.d; ++j) gw[j] += p[c] * x[j];
      grad[static_cast<std::size_t>(m.classes) * m.d + c] += p[c];
    }
  }
  double inv = 1.0 / static_cast<double>(data.x.size());
  for (double& g : grad) g *= inv;
  return grad;
}

std::vector<double> local_sgd_update(const GlobalModel& m, const Dataset& data,
                                     double lr, int steps) {
  GlobalModel local = m;
  for (int s = 0; s < steps; ++s) {
    std::vector<double> g = loss_gradient(local, data);
    for (std::size_t i = 0; i < local.params.size(); ++i) local.params[i] -= lr * g[i];
  }
  std::vector<double> update(m.params.size());
  for (std::size_t i = 0; i < update.size(); ++i) update[i] = m.params[i] - local.params[i];
  return update;
}

}  // namespace metastack
