#pragma once

#include <limits>
#include <map>
#include <optional>

namespace metastack {

struct ScFit {
  double c = 0.0;
  double d = 0.0;
  double max_abs_residual = 0.0;
  int n_samples = 0;
  bool c_negative = false;  // the strict-competitiveness assertion c < 0
};

// One per-iteration diagnostics snapshot. Residuals are NaN until a
// diagnostics pass fills them.
struct DiagnosticRecord {
  int iteration = 0;
  double defender_residual = std::numeric_limits<double>::quiet_NaN();
  double defender_residual_se = std::numeric_limits<double>::quiet_NaN();
  std::map<int, double> attacker_residuals;  // type id -> ||grad_phi L_A||
  std::optional<ScFit> sc_fit;
  std::optional<double> pl_ratio;
  std::optional<double> grad_check_rel_err;
  double wallclock_s = 0.0;

  double attacker_residual_max() const {
    double m = std::numeric_limits<double>::quiet_NaN();
    for (const auto& [id, r] : attacker_residuals)
      if (!(m == m) || r > m) m = r;
    return m;
  }
};

}  // namespace metastack
