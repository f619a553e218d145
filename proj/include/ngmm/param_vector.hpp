#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ngmm {

/// Flat parameter storage with named, disjoint, contiguous segments.
///
/// Each segment is a column-major matrix view into the flat array, so the
/// optimizer works on one vector while model code addresses `layer0.weight`.
template <typename Scalar>
class BasicParamVector {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  struct Segment {
    std::string name;
    Eigen::Index offset;
    Eigen::Index rows;
    Eigen::Index cols;
    Eigen::Index size() const { return rows * cols; }
  };

  BasicParamVector() = default;

  /// Append a zero-initialized segment.
  void add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("segment '" + name + "' has empty shape");
    if (contains(name)) throw std::invalid_argument("duplicate segment '" + name + "'");
    const Eigen::Index offset = values_.size();
    segments_.push_back({std::move(name), offset, rows, cols});
    values_.conservativeResize(offset + rows * cols);
    values_.tail(rows * cols).setZero();
  }

  bool contains(std::string_view name) const {
    return std::any_of(segments_.begin(), segments_.end(),
                       [&](const Segment& s) { return s.name == name; });
  }

  const Segment& segment_info(std::string_view name) const {
    for (const auto& s : segments_)
      if (s.name == name) return s;
    throw std::out_of_range("no parameter segment named '" + std::string(name) + "'");
  }

  Eigen::Map<Matrix> segment(std::string_view name) {
    const auto& s = segment_info(name);
    return Eigen::Map<Matrix>(values_.data() + s.offset, s.rows, s.cols);
  }

  Eigen::Map<const Matrix> segment(std::string_view name) const {
    const auto& s = segment_info(name);
    return Eigen::Map<const Matrix>(values_.data() + s.offset, s.rows, s.cols);
  }

  const std::vector<Segment>& segments() const { return segments_; }
  const Vector& flat() const { return values_; }
  Vector& flat() { return values_; }
  Eigen::Index size() const { return values_.size(); }

  bool same_layout(const BasicParamVector& other) const {
    if (segments_.size() != other.segments_.size()) return false;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto& a = segments_[i];
      const auto& b = other.segments_[i];
      if (a.name != b.name || a.offset != b.offset || a.rows != b.rows || a.cols != b.cols) return false;
    }
    return true;
  }

  BasicParamVector zeros_like() const {
    BasicParamVector out = *this;
    out.values_.setZero();
    return out;
  }

  /// Rebuild a parameter vector with this layout from a flat array.
  BasicParamVector unpack(const Vector& flat) const {
    if (flat.size() != values_.size())
      throw std::invalid_argument("unpack: flat size " + std::to_string(flat.size()) +
                                  " does not match layout size " + std::to_string(values_.size()));
    BasicParamVector out = *this;
    out.values_ = flat;
    return out;
  }

 private:
  std::vector<Segment> segments_;
  Vector values_;
};

using ParamVector = BasicParamVector<double>;

}  // namespace ngmm
