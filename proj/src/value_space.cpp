#include "mmflow/value_space.hpp"

#include <algorithm>
#include <cmath>

namespace mmflow {

std::string to_string(ReferenceCase c) { return c == ReferenceCase::A ? "A" : "B"; }

ReferenceCase reference_case_from_string(const std::string& s) {
  if (s == "A" || s == "a") return ReferenceCase::A;
  if (s == "B" || s == "b") return ReferenceCase::B;
  throw InvalidArgument("unknown reference case '" + s + "' (expected A or B)");
}

ValueSpace::ValueSpace(std::vector<double> lower, std::vector<double> upper,
                       std::vector<double> reference, ReferenceCase c)
    : lower_(std::move(lower)), upper_(std::move(upper)), reference_(std::move(reference)),
      case_(c) {
  if (lower_.empty()) throw InvalidArgument("value space needs at least one component");
  if (lower_.size() != upper_.size() || lower_.size() != reference_.size())
    throw InvalidArgument("value space bounds and reference differ in length");
  for (std::size_t j = 0; j < lower_.size(); ++j) {
    if (!(lower_[j] < upper_[j]))
      throw InvalidArgument("value space: lower bound must be below upper bound");
    if (case_ == ReferenceCase::A && reference_[j] != lower_[j])
      throw InvalidArgument("case A requires reference == lower corner");
    if (case_ == ReferenceCase::B && !(reference_[j] > lower_[j] && reference_[j] < upper_[j]))
      throw InvalidArgument("case B requires the reference strictly inside S");
  }
}

ValueSpace ValueSpace::case_a(std::vector<double> lower, std::vector<double> upper) {
  auto ref = lower;
  return ValueSpace(std::move(lower), std::move(upper), std::move(ref), ReferenceCase::A);
}

ValueSpace ValueSpace::case_b(std::vector<double> lower, std::vector<double> upper,
                              std::vector<double> reference) {
  return ValueSpace(std::move(lower), std::move(upper), std::move(reference), ReferenceCase::B);
}

bool ValueSpace::contains(std::span<const double> z) const {
  if (z.size() != components()) return false;
  for (std::size_t j = 0; j < z.size(); ++j)
    if (!contains(j, z[j])) return false;
  return true;
}

double xlogx(double s) {
  if (s <= 1e-300) return 0.0;
  return s * std::log(s);
}

namespace {

constexpr int kValidationSamples = 1024;

// Central differences with the stencil pulled inside [lo, hi]. Near an
// endpoint the step shrinks with the distance to it, since entropies blow
// up there.
double fd_first(const EntropyMobilityPair::ScalarMap& f, double s, double lo, double hi) {
  const double gap = std::min(s - lo, hi - s);
  const double h = std::clamp(1e-3 * gap, 1e-9 * (hi - lo), 1e-5 * (hi - lo));
  const double c = std::clamp(s, lo + h, hi - h);
  return (f(c + h) - f(c - h)) / (2 * h);
}

double fd_second(const EntropyMobilityPair::ScalarMap& f, double s, double lo, double hi) {
  const double h = 1e-4 * (hi - lo);
  const double c = std::clamp(s, lo + h, hi - h);
  return (f(c + h) - 2 * f(c) + f(c - h)) / (h * h);
}

}  // namespace

EntropyMobilityPair::EntropyMobilityPair(double lower, double upper, Functions fns)
    : lower_(lower), upper_(upper), fns_(std::move(fns)) {
  if (!(lower_ < upper_)) throw InvalidArgument("entropy/mobility pair: lower >= upper");
}

EntropyMobilityPair EntropyMobilityPair::logarithmic(double a, double b, double scale) {
  if (!(a < b)) throw InvalidArgument("logarithmic pair: lower >= upper");
  if (!(scale > 0)) throw InvalidArgument("logarithmic pair: scale must be positive");
  const double w = b - a;
  Functions f;
  f.entropy = [=](double s) {
    return scale * (xlogx(s - a) + xlogx(b - s) - xlogx(w));
  };
  f.entropy_derivative = [=](double s) { return scale * (std::log(s - a) - std::log(b - s)); };
  f.entropy_second_derivative = [=](double s) {
    return scale * (1.0 / (s - a) + 1.0 / (b - s));
  };
  f.mobility = [=](double s) { return (s - a) * (b - s) / (w * scale); };
  f.mobility_derivative = [=](double s) { return (a + b - 2 * s) / (w * scale); };
  f.mobility_second_derivative = [=](double) { return -2.0 / (w * scale); };
  return EntropyMobilityPair(a, b, std::move(f));
}

EntropyMobilityPair EntropyMobilityPair::custom(double a, double b, Functions fns) {
  if (!fns.entropy || !fns.entropy_derivative || !fns.mobility)
    throw InvalidArgument("custom pair needs entropy, entropy derivative and mobility");
  EntropyMobilityPair pair(a, b, std::move(fns));
  const double w = b - a;
  const double h_scale = std::max(1.0, std::abs(pair.fns_.entropy(a + 0.5 * w)));
  if (std::abs(pair.fns_.entropy(a)) > 1e-12 * h_scale ||
      std::abs(pair.fns_.entropy(b)) > 1e-12 * h_scale)
    throw InvalidArgument("custom pair: entropy must vanish at both endpoints");
  if (std::abs(pair.fns_.mobility(a)) > 1e-12 || std::abs(pair.fns_.mobility(b)) > 1e-12)
    throw InvalidArgument("custom pair: mobility must vanish at both endpoints");
  const bool exact_h2 = static_cast<bool>(pair.fns_.entropy_second_derivative);
  const double recip_tol = exact_h2 ? 1e-10 : 1e-5;
  double m_max = 0;
  for (int i = 0; i < kValidationSamples; ++i) {
    const double s = a + (i + 0.5) / kValidationSamples * w;
    m_max = std::max(m_max, pair.fns_.mobility(s));
  }
  for (int i = 0; i < kValidationSamples; ++i) {
    const double s = a + (i + 0.5) / kValidationSamples * w;
    if (pair.fns_.entropy(s) > 1e-14 * h_scale)
      throw InvalidArgument("custom pair: entropy must be non-positive");
    const double m = pair.fns_.mobility(s);
    if (!(m > 0)) throw InvalidArgument("custom pair: mobility must be positive inside S");
    const double m2 = pair.mobility_second_derivative(s);
    const double m2_tol = pair.fns_.mobility_second_derivative ? 1e-10 : 1e-4 * m_max / (w * w);
    if (m2 > m2_tol) throw InvalidArgument("custom pair: mobility must be concave");
    const double h2 = pair.entropy_second_derivative(s);
    if (!(h2 > 0)) throw InvalidArgument("custom pair: entropy must be strictly convex");
    if (std::abs(h2 * m - 1.0) > recip_tol)
      throw InvalidArgument("custom pair: mobility is not the reciprocal of h''");
  }
  return pair;
}

double EntropyMobilityPair::entropy(double s) const {
  if (s < lower_ || s > upper_) throw InvalidArgument("entropy evaluated outside its interval");
  if (s == lower_ || s == upper_) return 0.0;
  return fns_.entropy(s);
}

double EntropyMobilityPair::entropy_derivative(double s) const {
  return fns_.entropy_derivative(s);
}

double EntropyMobilityPair::entropy_second_derivative(double s) const {
  if (fns_.entropy_second_derivative) return fns_.entropy_second_derivative(s);
  return fd_first(fns_.entropy_derivative, s, lower_, upper_);
}

double EntropyMobilityPair::mobility(double s) const {
  if (s <= lower_ || s >= upper_) return 0.0;
  return fns_.mobility(s);
}

double EntropyMobilityPair::mobility_derivative(double s) const {
  if (fns_.mobility_derivative) return fns_.mobility_derivative(s);
  return fd_first(fns_.mobility, s, lower_, upper_);
}

double EntropyMobilityPair::mobility_second_derivative(double s) const {
  if (fns_.mobility_second_derivative) return fns_.mobility_second_derivative(s);
  return fd_second(fns_.mobility, s, lower_, upper_);
}

PairList logarithmic_pairs(const ValueSpace& space) {
  PairList pairs;
  for (std::size_t j = 0; j < space.components(); ++j)
    pairs.push_back(EntropyMobilityPair::logarithmic(space.lower(j), space.upper(j)));
  return pairs;
}

double heat_entropy_component(const ValueSpace& space, const EntropyMobilityPair& pair,
                              std::size_t j, double s) {
  if (!space.contains(j, s)) throw InvalidArgument("heat entropy: value outside S");
  const double h = pair.entropy(s);
  if (space.reference_case() == ReferenceCase::A) return h;
  const double ref = space.reference(j);
  return h - pair.entropy(ref) - pair.entropy_derivative(ref) * (s - ref);
}

double heat_entropy_component_derivative(const ValueSpace& space,
                                         const EntropyMobilityPair& pair, std::size_t j,
                                         double s) {
  const double d = pair.entropy_derivative(s);
  if (space.reference_case() == ReferenceCase::A) return d;
  return d - pair.entropy_derivative(space.reference(j));
}

double heat_entropy_density(const ValueSpace& space, const PairList& pairs,
                            std::span<const double> z) {
  if (pairs.size() != space.components() || z.size() != space.components())
    throw InvalidArgument("heat entropy: component count mismatch");
  double total = 0;
  for (std::size_t j = 0; j < z.size(); ++j)
    total += heat_entropy_component(space, pairs[j], j, z[j]);
  return total;
}

}  // namespace mmflow
