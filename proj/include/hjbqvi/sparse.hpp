#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "hjbqvi/grid.hpp"

namespace hjbqvi {

struct Entry {
  Index col;
  double value;
};

// Row-compressed sparse matrix; columns ascending within each row.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(Index rows, Index cols) : rows_(rows), cols_(cols), row_start_{0} {
    row_start_.reserve(rows + 1);
  }

  // Rows are appended in order. Duplicate columns are merged.
  void append_row(std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.col < b.col; });
    for (const Entry& e : entries) {
      if (entries_.size() > row_start_.back() && entries_.back().col == e.col)
        entries_.back().value += e.value;
      else
        entries_.push_back(e);
    }
    row_start_.push_back(entries_.size());
  }

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index nonzeros() const { return entries_.size(); }
  bool complete() const { return row_start_.size() == rows_ + 1; }

  std::span<const Entry> row(Index i) const {
    return {entries_.data() + row_start_[i], row_start_[i + 1] - row_start_[i]};
  }
  std::span<Entry> row(Index i) {
    return {entries_.data() + row_start_[i], row_start_[i + 1] - row_start_[i]};
  }

  double at(Index i, Index j) const {
    for (const Entry& e : row(i))
      if (e.col == j) return e.value;
    return 0.0;
  }

  double row_dot(Index i, std::span<const double> x) const {
    double s = 0.0;
    for (const Entry& e : row(i)) s += e.value * x[e.col];
    return s;
  }

  double row_sum(Index i) const {
    double s = 0.0;
    for (const Entry& e : row(i)) s += e.value;
    return s;
  }

  std::vector<double> multiply(std::span<const double> x) const {
    std::vector<double> y(rows_);
    for (Index i = 0; i < rows_; ++i) y[i] = row_dot(i, x);
    return y;
  }

  // (row, col, value) triplets, row-major, 17 significant digits.
  void write_triplets(std::ostream& os) const {
    const auto flags = os.flags();
    const auto prec = os.precision();
    os << std::setprecision(17);
    for (Index i = 0; i < rows_; ++i)
      for (const Entry& e : row(i)) os << i << ' ' << e.col << ' ' << e.value << '\n';
    os.flags(flags);
    os.precision(prec);
  }

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_start_{0};
  std::vector<Entry> entries_;
};

}  // namespace hjbqvi
