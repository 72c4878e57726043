#pragma once

#include <cstdint>
#include <string>

namespace nwc::train {

struct GradCheckReport {
  std::size_t codecs = 0;
  std::size_t entries = 0;
  std::size_t redrawn = 0;  // batches rejected for sitting near a ReLU kink
  double max_rel_error = 0;
  std::string worst;  // parameter name and index of the largest error
};

/// Compares tape gradients of importance_aware_loss on small random codecs
/// against central differences of an independent double-precision
/// evaluation of the same loss (same noise draw). Relative error per entry is
/// |a - f| / max(|a|, |f|, 1e-4 * max(1, |loss|)); the floor keeps float32
/// round-off on near-zero entries from dominating. Batches with a ReLU pre-activation near
/// zero are redrawn, since central differences straddle the kink there.
GradCheckReport gradient_check(std::size_t codecs, std::uint64_t seed, int width = 8);

}  // namespace nwc::train
