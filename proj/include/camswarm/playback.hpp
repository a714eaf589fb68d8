#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace camswarm::playback {

struct View {
  std::string id;
  double rel_yaw = 0;  // degrees
  std::string media;   // opaque reference, "-" when there is none
  bool operator==(const View&) const = default;
};

/// Views sorted by centered yaw, with the cell boundaries between neighbours.
struct ViewSet {
  std::vector<View> views;
  std::vector<double> centered;    // ascending, one per view
  std::vector<double> boundaries;  // midpoints of adjacent centered yaws
  double offset = 0;               // circular mean that was subtracted
};

/// Throws Error(InsufficientViews) for fewer than two views and
/// Error(DuplicateView) for a repeated id or yaw.
ViewSet build_view_graph(std::vector<View> views);

/// Index into vs.views of the view whose centered yaw is circularly closest
/// to `tilt_delta`; exact ties go to the smaller centered yaw.
std::size_t select_view_index(const ViewSet& vs, double tilt_delta);
const std::string& select_view(const ViewSet& vs, double tilt_delta);

struct Transition {
  std::int64_t t_ms = 0;
  std::string from;
  std::string to;
  bool operator==(const Transition&) const = default;
};

class EditTimeline {
 public:
  /// Throws Error(Validation) for a non-positive duration or a malformed id,
  /// Error(DuplicateView) and Error(UnknownView) for the view table.
  EditTimeline(std::int64_t duration_ms, std::vector<View> views, std::string initial_view);

  /// Throws Error(Order) unless last transition < t_ms < duration,
  /// Error(Noop) for the current view and Error(UnknownView).
  void add_transition(std::int64_t t_ms, const std::string& to_view);

  std::int64_t duration_ms() const { return duration_ms_; }
  const std::vector<View>& views() const { return views_; }
  const std::string& initial_view() const { return initial_; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  const std::string& current_view() const;
  bool has_view(std::string_view id) const;

  bool operator==(const EditTimeline&) const = default;

 private:
  std::int64_t duration_ms_;
  std::vector<View> views_;
  std::string initial_;
  std::vector<Transition> transitions_;
};

struct Segment {
  std::string view;
  std::int64_t t_start = 0;
  std::int64_t t_end = 0;
  bool operator==(const Segment&) const = default;
};

struct Marker {
  std::int64_t t_ms = 0;
  std::string from;
  std::string to;
  std::string kind = "interpolated";
  bool operator==(const Marker&) const = default;
};

struct RenderPlan {
  std::int64_t duration_ms = 0;
  std::vector<View> views;
  std::vector<Segment> segments;
  std::vector<Marker> markers;
  bool operator==(const RenderPlan&) const = default;
};

RenderPlan export_edl(const EditTimeline& tl);

/// Checks tiling, chain consistency and marker/segment agreement.
/// Throws Error(Validation) naming the first violation.
void validate_plan(const RenderPlan& plan);

/// Rebuilds the timeline a plan was exported from. Throws Error(Validation)
/// for a plan that is not a valid export.
EditTimeline import_edl(const RenderPlan& plan);

std::string format_edl(const RenderPlan& plan);
/// Throws Error(Parse) with a line-anchored message.
RenderPlan parse_edl(std::string_view text);

/// Timeline source files:
///   duration <ms>
///   view <id> <rel_yaw> <media>
///   initial <id>
///   cut <t_ms> <id>
/// Blank lines and lines starting with '#' are ignored. Errors keep their code
/// and gain a "line N: " prefix.
EditTimeline parse_timeline(std::string_view text);
std::string format_timeline(const EditTimeline& tl);

/// Shortest text that reads back to the same double.
std::string format_number(double v);

}  // namespace camswarm::playback
