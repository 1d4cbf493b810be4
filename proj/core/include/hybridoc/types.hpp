#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace hybridoc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Axis-aligned box used for declared state domains and mesh ranges.
struct Box {
  Vec lo;
  Vec hi;

  Box() = default;
  Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {}

  static Box unbounded(int dim) {
    return Box(Vec::Constant(dim, -kInf), Vec::Constant(dim, kInf));
  }

  bool contains(const Vec& x, double slack = 0.0) const {
    for (int i = 0; i < x.size() && i < lo.size(); ++i) {
      if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
    }
    return true;
  }

  int dim() const { return static_cast<int>(lo.size()); }
};

// ---- error taxonomy ----------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TangentialCrossing : Error { using Error::Error; };
struct BlockingDetected   : Error { using Error::Error; };
struct NoRealRoot         : Error { using Error::Error; };
struct Underdetermined    : Error { using Error::Error; };
struct NoCandidate        : Error { using Error::Error; };
struct GridTooCoarse      : Error { using Error::Error; };
struct OutOfGrid          : Error { using Error::Error; };
struct UnboundedBelow     : Error { using Error::Error; };
struct BlockingNonEmpty   : Error { using Error::Error; };
struct IncompatibleRuns   : Error { using Error::Error; };
struct ValidationError    : Error { using Error::Error; };

}  // namespace hybridoc
