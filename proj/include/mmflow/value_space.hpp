#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmflow {

/// Thrown when an input violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Where the reference state sits inside the value cuboid.
///   A: reference equals the lower corner (mass-constrained setting).
///   B: reference strictly inside the cuboid.
enum class ReferenceCase { A, B };

std::string to_string(ReferenceCase c);
ReferenceCase reference_case_from_string(const std::string& s);

/// Value cuboid S = [lower_1, upper_1] x ... x [lower_n, upper_n] together
/// with the reference state z_ref used to measure masses, moments and norms.
class ValueSpace {
 public:
  /// Case A: the reference is the lower corner.
  static ValueSpace case_a(std::vector<double> lower, std::vector<double> upper);
  /// Case B: the reference must lie strictly inside S.
  static ValueSpace case_b(std::vector<double> lower, std::vector<double> upper,
                           std::vector<double> reference);

  std::size_t components() const { return lower_.size(); }
  double lower(std::size_t j) const { return lower_[j]; }
  double upper(std::size_t j) const { return upper_[j]; }
  double reference(std::size_t j) const { return reference_[j]; }
  double width(std::size_t j) const { return upper_[j] - lower_[j]; }
  std::span<const double> lower() const { return lower_; }
  std::span<const double> upper() const { return upper_; }
  std::span<const double> reference() const { return reference_; }
  ReferenceCase reference_case() const { return case_; }

  bool contains(std::span<const double> z) const;
  bool contains(std::size_t j, double s) const { return s >= lower_[j] && s <= upper_[j]; }
  bool interior(std::size_t j, double s) const { return s > lower_[j] && s < upper_[j]; }

 private:
  ValueSpace(std::vector<double> lower, std::vector<double> upper,
             std::vector<double> reference, ReferenceCase c);

  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<double> reference_;
  ReferenceCase case_;
};

/// s log s with the continuous extension 0 log 0 = 0.
double xlogx(double s);

/// Per-component entropy h_j with its induced mobility m_j = 1 / h_j''.
///
/// The entropy is strictly convex, non-positive and vanishes at both ends
/// of [lower, upper]; the mobility is concave, positive inside and zero at
/// both ends. Outside the interval the mobility is extended by zero.
/// Instances are immutable.
class EntropyMobilityPair {
 public:
  using ScalarMap = std::function<double(double)>;

  /// Closed-form user functions. Missing derivatives are replaced by
  /// central finite differences (step 1e-5 relative to the interval width).
  struct Functions {
    ScalarMap entropy;
    ScalarMap entropy_derivative;
    ScalarMap mobility;
    ScalarMap mobility_derivative;         // optional
    ScalarMap mobility_second_derivative;  // optional
    ScalarMap entropy_second_derivative;   // optional
  };

  /// h(s) = (s-a)log(s-a) + (b-s)log(b-s) - (b-a)log(b-a),
  /// m(s) = (s-a)(b-s)/(b-a).
  static EntropyMobilityPair logarithmic(double lower, double upper, double scale = 1.0);

  /// Validates the structural hypotheses on 1024 interior sample points and
  /// throws InvalidArgument on the first violation.
  static EntropyMobilityPair custom(double lower, double upper, Functions fns);

  double lower() const { return lower_; }
  double upper() const { return upper_; }

  /// Entropy on [lower, upper]; throws outside.
  double entropy(double s) const;
  /// h' on the open interval.
  double entropy_derivative(double s) const;
  double entropy_second_derivative(double s) const;
  /// Mobility, extended by zero outside [lower, upper].
  double mobility(double s) const;
  double mobility_derivative(double s) const;
  double mobility_second_derivative(double s) const;

 private:
  EntropyMobilityPair(double lower, double upper, Functions fns);

  double lower_;
  double upper_;
  Functions fns_;
};

using PairList = std::vector<EntropyMobilityPair>;

/// One logarithmic pair per component of the value space.
PairList logarithmic_pairs(const ValueSpace& space);

/// Heat entropy density h_ref(z): h(z) in case A, Bregman divergence of h
/// from the reference in case B. Throws if z lies outside S.
double heat_entropy_density(const ValueSpace& space, const PairList& pairs,
                            std::span<const double> z);

/// Componentwise pieces of heat_entropy_density (summed over j they give it).
double heat_entropy_component(const ValueSpace& space, const EntropyMobilityPair& pair,
                              std::size_t j, double s);

/// Derivative of heat_entropy_component with respect to s (interior only).
double heat_entropy_component_derivative(const ValueSpace& space,
                                         const EntropyMobilityPair& pair, std::size_t j,
                                         double s);

}  // namespace mmflow
