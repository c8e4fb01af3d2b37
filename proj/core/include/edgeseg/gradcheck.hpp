#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace edgeseg {

struct GradCheckCase {
  std::string name;  // "<case>.<tensor>"
  double max_rel_err = 0.0;
  bool passed = false;
  // set when no probed coordinate had a loss smooth across the whole
  // finite-difference window; such a tensor cannot be scored honestly at
  // the fixed step and is reported instead of counted either way
  bool skipped = false;
};

struct GradCheckReport {
  std::string target;
  std::uint64_t seed = 0;
  double tolerance = 0.0;
  std::vector<GradCheckCase> cases;
  bool all_passed = true;  // over scored cases
  int skipped = 0;
};

/// Central finite differences against the analytic backward, all in double
/// with h = 1e-5. Relative error of a probed coordinate is
/// |analytic - fd| / max(|analytic|, |fd|, 1e-6); a case passes when the
/// worst probe stays under the tolerance.

/// One case per tensor-op backward (convolutions, batchnorm in both modes,
/// each activation, pooling, concat, add, channel scaling, softmax,
/// cross-entropy, and a conv feeding cross-entropy).
GradCheckReport gradcheck_ops(double tolerance, std::uint64_t seed);

/// Composite subgraphs: squeeze-excitation gate, inverted residual blocks
/// with and without stride, a decoder level, and a small full network
/// trained against cross-entropy.
GradCheckReport gradcheck_blocks(double tolerance, std::uint64_t seed);

/// The three full architectures at reduced input size, probing a spread of
/// parameter tensors per model.
GradCheckReport gradcheck_model(double tolerance, std::uint64_t seed);

std::string gradcheck_report_text(const GradCheckReport& r);

}  // namespace edgeseg
