#include "hybridoc/flow.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

namespace hybridoc {

namespace {

using StdState = std::vector<double>;

Vec to_vec(const StdState& s) {
  return Eigen::Map<const Vec>(s.data(), static_cast<Eigen::Index>(s.size()));
}

StdState to_std(const Vec& v) { return StdState(v.data(), v.data() + v.size()); }

double hermite_scalar(double t, double t0, double x0, double f0, double t1, double x1,
                      double f1) {
  const double h = t1 - t0;
  if (h <= 0.0) return x0;
  const double s = (t - t0) / h;
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * x0 + (s3 - 2 * s2 + s) * h * f0 +
         (-2 * s3 + 3 * s2) * x1 + (s3 - s2) * h * f1;
}

double hermite_deriv_scalar(double t, double t0, double x0, double f0, double t1, double x1,
                            double f1) {
  const double h = t1 - t0;
  if (h <= 0.0) return f0;
  const double s = (t - t0) / h;
  const double s2 = s * s;
  return ((6 * s2 - 6 * s) * x0 + (3 * s2 - 4 * s + 1) * h * f0 + (-6 * s2 + 6 * s) * x1 +
          (3 * s2 - 2 * s) * h * f1) /
         h;
}

std::size_t bracket_index(const std::vector<double>& ts, double t) {
  auto it = std::upper_bound(ts.begin(), ts.end(), t);
  if (it == ts.begin()) return 0;
  std::size_t i = static_cast<std::size_t>(it - ts.begin()) - 1;
  return std::min(i, ts.size() - 2);
}

// Total time derivative of h along the flow: dh·f plus the explicit time slope.
double crossing_speed(const GuardChart& chart, const VectorField& field, double t,
                      const Vec& x) {
  return chart.grad_h(t, x).dot(field(t, x)) + chart.time_slope(t, x);
}

}  // namespace

const GuardChart& HybridSystem::guard(const std::string& id) const {
  for (const auto& g : guards) {
    if (g.id == id) return g;
  }
  throw ValidationError("unknown guard chart '" + id + "'");
}

const char* to_string(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::completed: return "completed";
    case TerminalStatus::zeno_detected: return "zeno_detected";
    case TerminalStatus::blocking_detected: return "blocking_detected";
    case TerminalStatus::escaped_domain: return "escaped_domain";
  }
  return "?";
}

const char* to_string(ZenoClass z) {
  switch (z) {
    case ZenoClass::none: return "none";
    case ZenoClass::steady: return "steady";
    case ZenoClass::spasmodic: return "spasmodic";
  }
  return "?";
}

Vec Segment::eval(double t) const {
  if (ts.size() == 1) return xs.front();
  const std::size_t i = bracket_index(ts, t);
  Vec out(xs.front().size());
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    out[k] = hermite_scalar(t, ts[i], xs[i][k], fs[i][k], ts[i + 1], xs[i + 1][k],
                            fs[i + 1][k]);
  }
  return out;
}

Vec Segment::deriv(double t) const {
  if (ts.size() == 1) return fs.front();
  const std::size_t i = bracket_index(ts, t);
  Vec out(xs.front().size());
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    out[k] = hermite_deriv_scalar(t, ts[i], xs[i][k], fs[i][k], ts[i + 1], xs[i + 1][k],
                                  fs[i + 1][k]);
  }
  return out;
}

Vec HybridArc::sample(double t) const {
  if (segments.empty()) throw Error("empty arc");
  if (t <= segments.front().t_begin()) return segments.front().xs.front();
  for (const auto& seg : segments) {
    if (t <= seg.t_end()) return seg.eval(t);
  }
  return segments.back().xs.back();
}

double HybridArc::zeno_time_estimate() const {
  const std::size_t n = events.size();
  if (n < 3) return kInf;
  const double g1 = events[n - 2].t - events[n - 3].t;
  const double g2 = events[n - 1].t - events[n - 2].t;
  if (g1 <= 0.0 || g2 <= 0.0 || g2 >= g1) return kInf;
  const double r = g2 / g1;
  return events[n - 1].t + g2 * r / (1.0 - r);
}

// ---- event localization --------------------------------------------------------

namespace {

struct Crossing {
  double t;       // global time
  Vec x;
  double speed;   // total crossing speed of h
  int chart_index;
};

// Scans h over precomputed nodes, brackets the first upward zero-crossing and
// refines it with the supplied dense evaluator. Returns nullopt when no
// qualifying root exists on the node range.
template <class Eval>
std::optional<Crossing> scan_chart(const GuardChart& chart, int chart_index,
                                   const VectorField& field, const std::vector<double>& ts,
                                   const std::vector<double>& hs, const Eval& eval,
                                   const FlowConfig& cfg) {
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const double h0 = hs[i], h1 = hs[i + 1];
    const bool sign_change = (h0 <= 0.0 && h1 > 0.0);
    const bool touch = (std::abs(h0) <= cfg.tol_event && h1 > cfg.tol_event);
    if (!sign_change && !touch) continue;

    double ta = ts[i], tb = ts[i + 1];
    double ha = h0;
    // Regula-falsi seeded bisection on the dense output.
    while (tb - ta > cfg.tol_time) {
      double tm = 0.5 * (ta + tb);
      const Vec xm = eval(tm);
      const double hm = chart.h(tm, xm);
      if ((ha <= 0.0 && hm > 0.0) || (ha > 0.0 && hm <= 0.0)) {
        tb = tm;
      } else {
        ta = tm;
        ha = hm;
      }
    }
    const double t_star = tb;
    const Vec x_star = eval(t_star);
    if (!chart.in_domain(t_star, x_star)) continue;

    const double speed = crossing_speed(chart, field, t_star, x_star);
    if (std::abs(speed) < cfg.tol_transversal) {
      std::ostringstream os;
      os << "grazing contact with guard '" << chart.id << "' at t=" << t_star
         << " (crossing speed " << speed << ")";
      throw TangentialCrossing(os.str());
    }
    if (speed < 0.0) continue;  // wrong-direction artifact of a touch bracket
    return Crossing{t_star, x_star, speed, chart_index};
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::pair<double, Vec>> locate_crossing(const Segment& seg,
                                                      const GuardChart& chart,
                                                      const VectorField& field,
                                                      const FlowConfig& cfg) {
  std::vector<double> hs(seg.ts.size());
  for (std::size_t i = 0; i < seg.ts.size(); ++i) hs[i] = chart.h(seg.ts[i], seg.xs[i]);
  auto eval = [&seg](double t) { return seg.eval(t); };
  auto hit = scan_chart(chart, 0, field, seg.ts, hs, eval, cfg);
  if (!hit) return std::nullopt;
  return std::make_pair(hit->t, hit->x);
}

std::pair<Vec, int> apply_reset(const HybridSystem& sys, const GuardChart& chart, double t,
                                const Vec& x_pre, const FlowConfig& cfg) {
  Vec x = chart.reset(t, x_pre);
  int beats = chart.fold_depth;
  for (int round = 0; round < cfg.max_beats; ++round) {
    const GuardChart* refire = nullptr;
    for (const auto& g : sys.guards) {
      if (std::abs(g.h(t, x)) <= cfg.tol_event && g.in_domain(t, x)) {
        refire = &g;
        break;
      }
    }
    if (!refire) return {x, beats};
    x = refire->reset(t, x);
    beats += 1 + refire->fold_depth;
  }
  throw BlockingDetected("reset cascade exceeded max_beats on guard '" + chart.id + "'");
}

// ---- hybrid flow ---------------------------------------------------------------

HybridArc flow(const HybridSystem& sys, const Vec& x0, double t_start, double t_end,
               const FlowConfig& cfg) {
  if (!std::isfinite(t_start) || !std::isfinite(t_end) || t_end <= t_start)
    throw ValidationError("flow: t_span must be finite with t_end > t_start");
  if (x0.size() != sys.dim) throw ValidationError("flow: x0 dimension mismatch");
  for (const auto& g : sys.guards) {
    if (std::abs(g.h(t_start, x0)) <= cfg.tol_event && g.in_domain(t_start, x0))
      throw ValidationError("flow: x0 lies on guard '" + g.id + "'");
  }

  namespace ode = boost::numeric::odeint;
  using Stepper = ode::runge_kutta_dopri5<StdState>;

  HybridArc arc;
  arc.t0 = t_start;
  arc.t1 = t_start;

  Vec x = x0;
  double seg_base = t_start;     // segments integrate in local time for resolution
  long total_steps = 0;
  int shrink_streak = 0;         // consecutive geometrically shrinking event gaps
  double last_gap = kInf;

  auto push_node = [&](Segment& seg, double t, const Vec& xs, const Vec& fs) {
    if (!seg.ts.empty() && t <= seg.ts.back()) return;
    seg.ts.push_back(t);
    seg.xs.push_back(xs);
    seg.fs.push_back(fs);
  };

  while (true) {
    Segment seg;
    push_node(seg, seg_base, x, sys.field(seg_base, x));

    const double span_local = t_end - seg_base;
    if (span_local <= cfg.tol_time) {
      arc.segments.push_back(std::move(seg));
      arc.t1 = seg_base;
      arc.status = TerminalStatus::completed;
      return arc;
    }

    double dt0 = std::min({cfg.init_step, span_local, cfg.max_step});
    if (!arc.events.empty() && std::isfinite(last_gap)) dt0 = std::min(dt0, last_gap / 8.0);
    dt0 = std::max(dt0, span_local * 1e-14);

    auto stepper = std::isfinite(cfg.max_step)
                       ? ode::make_dense_output(cfg.atol, cfg.rtol, cfg.max_step, Stepper())
                       : ode::make_dense_output(cfg.atol, cfg.rtol, Stepper());
    auto rhs = [&](const StdState& s, StdState& dsdt, double tau) {
      const Vec d = sys.field(seg_base + tau, to_vec(s));
      dsdt.assign(d.data(), d.data() + d.size());
    };

    StdState s = to_std(x);
    stepper.initialize(s, 0.0, dt0);

    std::optional<Crossing> event;
    bool segment_done = false;

    while (!segment_done && !event) {
      stepper.do_step(rhs);
      if (++total_steps > cfg.max_steps) throw Error("flow: step budget exhausted");

      double tau_lo = stepper.previous_time();
      double tau_hi = std::min(stepper.current_time(), span_local);
      if (stepper.current_time() >= span_local) segment_done = true;
      if (tau_hi <= tau_lo) break;

      // Dense sub-sampling of the accepted step.
      const int K = std::max(2, cfg.nodes_per_step);
      std::vector<double> ts(K + 1);
      std::vector<Vec> xs(K + 1);
      for (int i = 0; i <= K; ++i) {
        const double tau = tau_lo + (tau_hi - tau_lo) * i / K;
        StdState tmp(s.size());
        stepper.calc_state(tau, tmp);
        ts[i] = seg_base + tau;
        xs[i] = to_vec(tmp);
      }

      auto eval_global = [&](double t_global) {
        StdState tmp(s.size());
        stepper.calc_state(t_global - seg_base, tmp);
        return to_vec(tmp);
      };

      // Earliest qualifying crossing over all charts; chart order breaks ties.
      for (int ci = 0; ci < static_cast<int>(sys.guards.size()); ++ci) {
        const auto& chart = sys.guards[ci];
        std::vector<double> hs(ts.size());
        for (std::size_t i = 0; i < ts.size(); ++i) hs[i] = chart.h(ts[i], xs[i]);
        auto hit = scan_chart(chart, ci, sys.field, ts, hs, eval_global, cfg);
        if (hit && (!event || hit->t < event->t - cfg.tol_time)) event = hit;
      }

      const double t_cut = event ? event->t : ts.back();
      for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i] < t_cut - cfg.tol_time) {
          push_node(seg, ts[i], xs[i], sys.field(ts[i], xs[i]));
          if (sys.box.dim() == sys.dim && !sys.box.contains(xs[i])) {
            arc.segments.push_back(std::move(seg));
            arc.t1 = ts[i];
            arc.status = TerminalStatus::escaped_domain;
            arc.diagnostic = "state left the declared box";
            return arc;
          }
        }
      }
      if (!event && segment_done) {
        const Vec x_fin = eval_global(t_end);
        push_node(seg, t_end, x_fin, sys.field(t_end, x_fin));
      }
    }

    if (!event) {
      arc.segments.push_back(std::move(seg));
      arc.t1 = t_end;
      arc.status = TerminalStatus::completed;
      return arc;
    }

    // Close the segment exactly at the crossing.
    const Vec f_pre = sys.field(event->t, event->x);
    push_node(seg, event->t, event->x, f_pre);
    arc.segments.push_back(std::move(seg));
    arc.t1 = event->t;

    const auto& chart = sys.guards[event->chart_index];
    ResetEvent ev;
    ev.t = event->t;
    ev.x_pre = event->x;
    ev.guard_id = chart.id;
    ev.chart_index = event->chart_index;
    ev.transversality = event->speed;
    try {
      auto [x_post, beats] = apply_reset(sys, chart, event->t, event->x, cfg);
      ev.x_post = x_post;
      ev.beat_count = beats;
    } catch (const BlockingDetected& e) {
      ev.x_post = ev.x_pre;
      ev.beat_count = cfg.max_beats;
      arc.events.push_back(std::move(ev));
      arc.status = TerminalStatus::blocking_detected;
      arc.diagnostic = e.what();
      return arc;
    }
    arc.events.push_back(ev);
    if (static_cast<long>(arc.events.size()) > cfg.max_events)
      throw Error("flow: event budget exhausted");

    // Zeno bookkeeping on inter-event gaps.
    if (arc.events.size() >= 2) {
      const double gap = ev.t - arc.events[arc.events.size() - 2].t;
      if (std::isfinite(last_gap)) {
        shrink_streak = (gap <= cfg.zeno_ratio * last_gap) ? shrink_streak + 1 : 0;
      }
      const double eps_floor = 64.0 * std::numeric_limits<double>::epsilon() *
                               std::max(1.0, std::abs(ev.t));
      bool zeno = gap < eps_floor;
      if (!zeno && shrink_streak >= cfg.zeno_window) {
        const double r = gap / last_gap;
        const double limit = ev.t + gap * r / (1.0 - r);
        zeno = (r < 1.0) && (limit <= t_end);
      }
      last_gap = gap;
      if (zeno) {
        Segment tail;
        push_node(tail, ev.t, ev.x_post, sys.field(ev.t, ev.x_post));
        arc.segments.push_back(std::move(tail));
        arc.status = TerminalStatus::zeno_detected;
        arc.diagnostic = "event gaps contract geometrically";
        return arc;
      }
    }

    if (sys.box.dim() == sys.dim && !sys.box.contains(ev.x_post)) {
      Segment tail;
      push_node(tail, ev.t, ev.x_post, sys.field(ev.t, ev.x_post));
      arc.segments.push_back(std::move(tail));
      arc.status = TerminalStatus::escaped_domain;
      arc.diagnostic = "reset image left the declared box";
      return arc;
    }

    x = ev.x_post;
    seg_base = ev.t;
  }
}

ZenoClass classify_zeno(const HybridArc& arc, const Box& box, const FlowConfig& cfg) {
  const int w = cfg.zeno_window;
  if (static_cast<int>(arc.events.size()) < w) return ZenoClass::none;

  const std::size_t n = arc.events.size();
  double log_ratio_sum = 0.0;
  int ratios = 0;
  for (std::size_t i = n - w + 1; i + 1 < n; ++i) {
    const double g0 = arc.events[i].t - arc.events[i - 1].t;
    const double g1 = arc.events[i + 1].t - arc.events[i].t;
    if (g0 <= 0.0 || g1 <= 0.0) continue;
    log_ratio_sum += std::log(g1 / g0);
    ++ratios;
  }
  if (ratios == 0) return ZenoClass::steady;  // gaps below time resolution
  const double mean_ratio = std::exp(log_ratio_sum / ratios);
  if (mean_ratio > cfg.zeno_ratio) return ZenoClass::none;

  bool confined = true;
  for (std::size_t i = n - w; i < n; ++i) {
    if (!box.contains(arc.events[i].x_pre)) {
      confined = false;
      break;
    }
  }
  return confined ? ZenoClass::steady : ZenoClass::spasmodic;
}

}  // namespace hybridoc
