#pragma once

#include <span>
#include <vector>

#include "metastack/dataset.hpp"

namespace metastack {

// Multinomial logistic regression: C*(d+1) parameters laid out as the C x d
// weight matrix (row-major) followed by C biases.
struct GlobalModel {
  std::vector<double> params;
  int d = 0;
  int classes = 0;

  static GlobalModel zeros(int d, int classes);
  int param_dim() const { return classes * (d + 1); }
  void validate() const;
  double weight(int c, int j) const { return params[c * d + j]; }
  double bias(int c) const { return params[classes * d + c]; }
};

void softmax_logits(const GlobalModel& m, std::span<const double> x,
                    std::span<double> logits);

// Argmax with lowest-index tie-break.
int predict_class(const GlobalModel& m, std::span<const double> x);

// Mean cross-entropy over the dataset; >= 0.
double eval_loss(const GlobalModel& m, const Dataset& data);

double eval_accuracy(const GlobalModel& m, const Dataset& data);

struct BackdoorMetrics {
  double loss = 0.0;      // F(w, U') on the triggered, relabeled set
  double accuracy = 0.0;  // fraction predicted as the target class
};

BackdoorMetrics eval_backdoor_metrics(const GlobalModel& m, const Dataset& poisoned);

// Gradient of mean cross-entropy w.r.t. the flat parameter vector.
std::vector<double> loss_gradient(const GlobalModel& m, const Dataset& data);

// Runs `steps` full-batch gradient steps with rate lr from m on `data` and
// returns the model update g = w_initial - w_final (so w - g descends).
std::vector<double> local_sgd_update(const GlobalModel& m, const Dataset& data,
                                     double lr, int steps);

}  // namespace metastack
