#pragma once

#include "hybridoc/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hybridoc {

using ScalarField = std::function<double(double, const Vec&)>;
using VectorField = std::function<Vec(double, const Vec&)>;
using MatrixField = std::function<Mat(double, const Vec&)>;
using Predicate   = std::function<bool(double, const Vec&)>;

/// One guard chart: a scalar level function h with the convention that the
/// flow domain lies in {h < 0} and a crossing fires when h rises through zero
/// with dh·f > 0. `domain` restricts which zero-crossings count (e.g. the
/// falling half of a contact surface). `reset` must be a smooth formula valid
/// in a neighbourhood of the guard so that `reset_jacobian` is its ambient
/// differential.
struct GuardChart {
  std::string id;
  ScalarField h;
  VectorField grad_h;                 // spatial gradient of h
  ScalarField dh_dt;                  // time partial; empty means 0
  Predicate domain;                   // empty means all of {h = 0}
  VectorField reset;
  MatrixField reset_jacobian;         // ambient differential of `reset`
  int transversal_sign = +1;
  bool beating = false;               // folded instantaneous cascade branch
  int fold_depth = 0;                 // number of extra instantaneous firings folded in

  bool in_domain(double t, const Vec& x) const { return !domain || domain(t, x); }
  double time_slope(double t, const Vec& x) const { return dh_dt ? dh_dt(t, x) : 0.0; }
};

struct HybridSystem {
  int dim = 0;
  VectorField field;
  MatrixField field_jacobian;         // optional; needed by variational propagation
  std::vector<GuardChart> guards;     // ordered; earlier chart wins overlaps
  bool time_dependent_guards = false;
  Box box;                            // declared state box

  const GuardChart& guard(const std::string& id) const;
};

struct ResetEvent {
  double t = 0.0;
  Vec x_pre;
  Vec x_post;
  std::string guard_id;
  int chart_index = -1;
  int beat_count = 0;
  double transversality = 0.0;        // dh·f at x_pre
};

enum class TerminalStatus { completed, zeno_detected, blocking_detected, escaped_domain };

const char* to_string(TerminalStatus s);

/// Dense representation of one smooth flow segment: Hermite nodes (t, x, f)
/// recorded at sub-step resolution.
struct Segment {
  std::vector<double> ts;
  std::vector<Vec> xs;
  std::vector<Vec> fs;

  double t_begin() const { return ts.front(); }
  double t_end() const { return ts.back(); }
  Vec eval(double t) const;           // cubic Hermite between adjacent nodes
  Vec deriv(double t) const;
};

struct HybridArc {
  std::vector<Segment> segments;
  std::vector<ResetEvent> events;
  TerminalStatus status = TerminalStatus::completed;
  double t0 = 0.0;
  double t1 = 0.0;                    // realized end time
  std::string diagnostic;

  Vec sample(double t) const;
  Vec initial_state() const { return segments.front().xs.front(); }
  Vec final_state() const { return segments.back().xs.back(); }
  double zeno_time_estimate() const;  // geometric extrapolation of event gaps
};

struct FlowConfig {
  double rtol = 1e-9;
  double atol = 1e-11;
  double init_step = 1e-4;
  double max_step = kInf;
  double tol_event = 1e-10;           // |h| at the localized crossing
  double tol_time = 1e-12;            // bisection bracket width
  double tol_transversal = 1e-8;      // below this, a crossing is grazing
  int max_beats = 16;
  int zeno_window = 32;               // consecutive shrinking gaps before declaring Zeno
  double zeno_ratio = 0.999;
  int nodes_per_step = 8;             // dense sub-sampling used for event scan
  long max_steps = 20'000'000;
  long max_events = 1'000'000;
};

}  // namespace hybridoc
