#include <mtac/belief.hpp>
#include <mtac/log.hpp>

#include <cmath>
#include <stdexcept>

namespace mtac {

Belief Belief::uniform(int num_classes) {
  if (num_classes < 1) throw std::invalid_argument("belief: need at least one class");
  return {Eigen::VectorXd::Constant(num_classes, 1.0 / num_classes)};
}

int Belief::argmax() const {
  Eigen::Index idx = 0;
  probs.maxCoeff(&idx);
  return static_cast<int>(idx);
}

Belief conflate(const Belief& b, const ClassProbability& p) {
  return conflate_weighted(b, p, 1.0);
}

Belief conflate_weighted(const Belief& b, const ClassProbability& p, double w) {
  if (b.probs.size() != p.probs.size()) {
    throw std::invalid_argument("conflate: class counts differ");
  }
  if (!(w >= 0.0)) throw std::invalid_argument("conflate: weight must be non-negative");
  Eigen::VectorXd prod(b.probs.size());
  for (Eigen::Index c = 0; c < prod.size(); ++c) {
    // pow(0, 0) is 1, so w = 0 leaves the belief untouched.
    const double pc = w == 1.0 ? p.probs[c] : std::pow(p.probs[c], w);
    prod[c] = b.probs[c] * pc;
  }
  const double z = prod.sum();
  if (!(z > 0.0) || !std::isfinite(z)) {
    log::warn("conflate: measurement has no overlap with the belief, fusion skipped");
    return b;
  }
  return {prod / z};
}

double normalized_entropy(std::span<const double> dist) {
  const std::size_t c = dist.size();
  if (c <= 1) return 0.0;
  double h = 0.0;
  for (double p : dist) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(c));
}

double normalized_entropy(const Eigen::VectorXd& dist) {
  return normalized_entropy(std::span<const double>(dist.data(), static_cast<std::size_t>(dist.size())));
}

ClassificationStatus update_status(const Belief& b, ClassificationStatus status) {
  if (!status.classified && b.probs.size() > 0 && b.max_prob() >= status.b_max) {
    status.classified = true;
  }
  return status;
}

}  // namespace mtac
