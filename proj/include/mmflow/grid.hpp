#pragma once

#include <Eigen/Core>

#include "mmflow/value_space.hpp"

namespace mmflow {

/// Rows are components, columns are cells (or faces for face arrays).
using Array2D = Eigen::ArrayXXd;

/// Uniform cell-centered grid on [-L, L] with N >= 4 cells.
class Grid1D {
 public:
  Grid1D(double half_length, int cells);

  double half_length() const { return half_length_; }
  int cells() const { return cells_; }
  int faces() const { return cells_ + 1; }
  double spacing() const { return spacing_; }
  double center(int i) const { return -half_length_ + (i + 0.5) * spacing_; }
  double face(int f) const { return -half_length_ + f * spacing_; }
  Eigen::ArrayXd centers() const;

  bool operator==(const Grid1D& other) const {
    return half_length_ == other.half_length_ && cells_ == other.cells_;
  }

 private:
  double half_length_;
  int cells_;
  double spacing_;
};

/// Cell-centered values of an n-component field on a Grid1D.
class GridField {
 public:
  GridField(Grid1D grid, std::size_t components);
  GridField(Grid1D grid, Array2D values);

  /// Field with every cell equal to the given constant vector.
  static GridField constant(const Grid1D& grid, std::span<const double> value);

  const Grid1D& grid() const { return grid_; }
  std::size_t components() const { return static_cast<std::size_t>(values_.rows()); }
  int cells() const { return grid_.cells(); }
  const Array2D& values() const { return values_; }
  Array2D& values() { return values_; }
  double operator()(std::size_t j, int i) const { return values_(static_cast<Eigen::Index>(j), i); }
  double& operator()(std::size_t j, int i) { return values_(static_cast<Eigen::Index>(j), i); }

  /// Throws InvalidArgument if any value leaves S.
  void require_in(const ValueSpace& space) const;
  bool lies_in(const ValueSpace& space) const;
  /// True if every value is strictly inside S.
  bool lies_inside(const ValueSpace& space) const;

 private:
  Grid1D grid_;
  Array2D values_;
};

void require_same_grid(const GridField& a, const GridField& b);

/// (u_{i+1}-u_i)/dx on interior faces, 0 on the two boundary faces.
Array2D face_gradient(const GridField& u);
Array2D face_gradient(const Grid1D& grid, const Array2D& cells);

/// (w_{f+1}-w_f)/dx; the negative adjoint of face_gradient.
Array2D divergence(const Grid1D& grid, const Array2D& faces);

/// Discrete Laplacian with zero-flux (reflecting) boundary cells.
Array2D second_difference(const GridField& u);
Array2D second_difference(const Grid1D& grid, const Array2D& cells);

/// Midpoint quadrature sum(dx * v).
double integrate(const Grid1D& grid, const Eigen::Ref<const Eigen::ArrayXd>& cellwise);

/// Component masses of u - z_ref.
Eigen::VectorXd mass_vector(const GridField& u, const ValueSpace& space);
/// Component second moments, integral of x^2 (u_j - z_ref_j).
Eigen::VectorXd second_moment(const GridField& u, const ValueSpace& space);

/// u - z_ref as a raw array.
Array2D deviation(const GridField& u, const ValueSpace& space);

double l2_norm(const GridField& u, const ValueSpace& space);
/// ||d/dx (u - z_ref)||_{L2} computed on faces.
double h1_seminorm(const GridField& u);
double h1_norm(const GridField& u, const ValueSpace& space);
double h2_seminorm(const GridField& u);

/// Quadrature of the heat entropy density over the grid.
double heat_entropy(const ValueSpace& space, const PairList& pairs, const GridField& u);

}  // namespace mmflow
