#include "mmflow/grid.hpp"

#include <cmath>

namespace mmflow {

Grid1D::Grid1D(double half_length, int cells)
    : half_length_(half_length), cells_(cells), spacing_(2.0 * half_length / cells) {
  if (!(half_length > 0)) throw InvalidArgument("grid half length must be positive");
  if (cells < 4) throw InvalidArgument("grid needs at least 4 cells");
}

Eigen::ArrayXd Grid1D::centers() const {
  Eigen::ArrayXd x(cells_);
  for (int i = 0; i < cells_; ++i) x(i) = center(i);
  return x;
}

GridField::GridField(Grid1D grid, std::size_t components)
    : grid_(grid), values_(Array2D::Zero(static_cast<Eigen::Index>(components), grid.cells())) {}

GridField::GridField(Grid1D grid, Array2D values) : grid_(grid), values_(std::move(values)) {
  if (values_.cols() != grid_.cells())
    throw InvalidArgument("field column count does not match the grid");
  if (values_.rows() < 1) throw InvalidArgument("field needs at least one component");
}

GridField GridField::constant(const Grid1D& grid, std::span<const double> value) {
  GridField u(grid, value.size());
  for (std::size_t j = 0; j < value.size(); ++j) u.values_.row(static_cast<Eigen::Index>(j)).setConstant(value[j]);
  return u;
}

bool GridField::lies_in(const ValueSpace& space) const {
  if (components() != space.components()) return false;
  for (std::size_t j = 0; j < components(); ++j)
    for (int i = 0; i < cells(); ++i)
      if (!space.contains(j, (*this)(j, i))) return false;
  return true;
}

bool GridField::lies_inside(const ValueSpace& space) const {
  if (components() != space.components()) return false;
  for (std::size_t j = 0; j < components(); ++j)
    for (int i = 0; i < cells(); ++i)
      if (!space.interior(j, (*this)(j, i))) return false;
  return true;
}

void GridField::require_in(const ValueSpace& space) const {
  if (components() != space.components())
    throw InvalidArgument("field and value space differ in component count");
  if (!lies_in(space)) throw InvalidArgument("field takes values outside the value space");
}

void require_same_grid(const GridField& a, const GridField& b) {
  if (!(a.grid() == b.grid()) || a.components() != b.components())
    throw InvalidArgument("fields live on different grids");
}

Array2D face_gradient(const Grid1D& grid, const Array2D& cells) {
  const int n = grid.cells();
  Array2D g = Array2D::Zero(cells.rows(), n + 1);
  g.middleCols(1, n - 1) = (cells.rightCols(n - 1) - cells.leftCols(n - 1)) / grid.spacing();
  return g;
}

Array2D face_gradient(const GridField& u) { return face_gradient(u.grid(), u.values()); }

Array2D divergence(const Grid1D& grid, const Array2D& faces) {
  const int n = grid.cells();
  return (faces.rightCols(n) - faces.leftCols(n)) / grid.spacing();
}

Array2D second_difference(const Grid1D& grid, const Array2D& cells) {
  return divergence(grid, face_gradient(grid, cells));
}

Array2D second_difference(const GridField& u) { return second_difference(u.grid(), u.values()); }

double integrate(const Grid1D& grid, const Eigen::Ref<const Eigen::ArrayXd>& cellwise) {
  if (cellwise.size() != grid.cells()) throw InvalidArgument("integrate: size mismatch");
  return grid.spacing() * cellwise.sum();
}

Array2D deviation(const GridField& u, const ValueSpace& space) {
  if (u.components() != space.components())
    throw InvalidArgument("field and value space differ in component count");
  Array2D d = u.values();
  for (std::size_t j = 0; j < u.components(); ++j) d.row(static_cast<Eigen::Index>(j)) -= space.reference(j);
  return d;
}

Eigen::VectorXd mass_vector(const GridField& u, const ValueSpace& space) {
  const Array2D d = deviation(u, space);
  Eigen::VectorXd m(d.rows());
  for (Eigen::Index j = 0; j < d.rows(); ++j) m(j) = integrate(u.grid(), d.row(j).transpose());
  return m;
}

Eigen::VectorXd second_moment(const GridField& u, const ValueSpace& space) {
  const Array2D d = deviation(u, space);
  const Eigen::ArrayXd x2 = u.grid().centers().square();
  Eigen::VectorXd m(d.rows());
  for (Eigen::Index j = 0; j < d.rows(); ++j)
    m(j) = integrate(u.grid(), d.row(j).transpose() * x2);
  return m;
}

double l2_norm(const GridField& u, const ValueSpace& space) {
  return std::sqrt(u.grid().spacing() * deviation(u, space).square().sum());
}

double h1_seminorm(const GridField& u) {
  return std::sqrt(u.grid().spacing() * face_gradient(u).square().sum());
}

double h1_norm(const GridField& u, const ValueSpace& space) {
  const double l2 = l2_norm(u, space);
  const double d1 = h1_seminorm(u);
  return std::sqrt(l2 * l2 + d1 * d1);
}

double h2_seminorm(const GridField& u) {
  return std::sqrt(u.grid().spacing() * second_difference(u).square().sum());
}

double heat_entropy(const ValueSpace& space, const PairList& pairs, const GridField& u) {
  if (pairs.size() != space.components() || u.components() != space.components())
    throw InvalidArgument("heat entropy: component count mismatch");
  double total = 0;
  for (std::size_t j = 0; j < u.components(); ++j)
    for (int i = 0; i < u.cells(); ++i)
      total += heat_entropy_component(space, pairs[j], j, u(j, i));
  return u.grid().spacing() * total;
}

}  // namespace mmflow
