#pragma once

#include "hybridoc/system.hpp"

#include <optional>
#include <utility>

namespace hybridoc {

/// Simulates the hybrid system from x0 over t_span: adaptive dense-output
/// integration between guard crossings, event localization to cfg.tol_time,
/// instantaneous reset cascades (beating), Zeno and domain-escape diagnosis.
HybridArc flow(const HybridSystem& sys, const Vec& x0, double t_start, double t_end,
               const FlowConfig& cfg = {});

/// Earliest qualifying guard root on a stored dense segment, or nullopt.
/// A root qualifies when h crosses zero in the firing direction inside the
/// chart's domain. Grazing roots (|dh·f| below cfg.tol_transversal) throw.
std::optional<std::pair<double, Vec>> locate_crossing(const Segment& seg,
                                                      const GuardChart& chart,
                                                      const VectorField& field,
                                                      const FlowConfig& cfg = {});

/// Applies the chart reset, then re-fires instantaneously while the image
/// lands on some guard's domain. Returns the final off-guard state and the
/// number of extra firings (plus any fold depth declared by the charts hit).
std::pair<Vec, int> apply_reset(const HybridSystem& sys, const GuardChart& chart,
                                double t, const Vec& x_pre, const FlowConfig& cfg = {});

enum class ZenoClass { none, steady, spasmodic };

const char* to_string(ZenoClass z);

/// Ratio-test classification of an event accumulation: steady when the event
/// states stay inside `box` and the inter-event gaps look summable, spasmodic
/// when the gaps shrink but the states run off, none otherwise.
ZenoClass classify_zeno(const HybridArc& arc, const Box& box, const FlowConfig& cfg = {});

}  // namespace hybridoc
