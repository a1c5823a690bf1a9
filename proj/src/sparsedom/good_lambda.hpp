#pragma once

#include <string>
#include <vector>

namespace sparsedom {

struct GoodLambdaRow {
  double lambda = 0.0;
  double gamma_or_eps = 0.0;
  double bad_measure = 0.0;
  double superlevel_measure = 0.0;
  double ratio = 0.0;
  double overlap_min = 0.0;  // NaN when the bad set is empty
};

struct GoodLambdaCurve {
  std::vector<GoodLambdaRow> rows;
  // Per row, the smallest overlap * eps^q * c_engine (or overlap * gamma^2 *
  // c_engine) over the bad set. The certificate requires 2^q - 1 (or 3).
  std::vector<double> certificate_min;
  bool passed = true;
  std::vector<std::string> failures;
};

}  // namespace sparsedom
