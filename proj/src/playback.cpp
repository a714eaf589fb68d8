#include "camswarm/playback.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

#include "camswarm/error.hpp"
#include "camswarm/geometry.hpp"
#include "text.hpp"

namespace camswarm::playback {

namespace {

constexpr std::string_view kEdlHeader = "# camswarm edl v1";

bool reserved(std::string_view id) {
  return id == "duration" || id == "view" || id == "transition" || id == "initial" || id == "cut";
}

void check_token(const std::string& s, std::string_view what) {
  const bool bad = s.empty() || s.front() == '#' ||
                   std::any_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; });
  if (bad) throw Error(ErrorCode::Validation, std::string(what) + " '" + s + "' must be a single non-empty token");
}

Error at_line(std::size_t line, const Error& e) {
  return Error(e.code(), "line " + std::to_string(line) + ": " + e.what());
}

Error parse_error(std::size_t line, const std::string& msg) {
  return Error(ErrorCode::Parse, "line " + std::to_string(line) + ": " + msg);
}

template <typename T>
T need_number(std::string_view tok, std::size_t line, std::string_view what) {
  const auto v = text::number<T>(tok);
  if (!v || (std::is_floating_point_v<T> && !std::isfinite(static_cast<double>(*v)))) {
    throw parse_error(line, "bad " + std::string(what) + " '" + std::string(tok) + "'");
  }
  return *v;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// View graph

ViewSet build_view_graph(std::vector<View> views) {
  if (views.size() < 2) throw Error(ErrorCode::InsufficientViews, "need at least two views");
  std::set<std::string> ids;
  std::set<double> wrapped;
  std::vector<double> yaws;
  for (const auto& v : views) {
    if (!ids.insert(v.id).second) throw Error(ErrorCode::DuplicateView, "duplicate view id '" + v.id + "'");
    if (!std::isfinite(v.rel_yaw)) throw Error(ErrorCode::Validation, "view '" + v.id + "' has a non-finite yaw");
    if (!wrapped.insert(geometry::wrap_angle(v.rel_yaw)).second) {
      throw Error(ErrorCode::DuplicateView, "view '" + v.id + "' repeats a yaw");
    }
    yaws.push_back(v.rel_yaw);
  }
  ViewSet vs;
  vs.offset = geometry::circular_mean(yaws);
  std::vector<std::pair<double, View>> keyed;
  for (auto& v : views) keyed.emplace_back(geometry::wrap_angle(v.rel_yaw - vs.offset), std::move(v));
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0, j = 1; j < keyed.size(); ++i, ++j) {
    if (keyed[i].first == keyed[j].first) {
      throw Error(ErrorCode::DuplicateView, "views '" + keyed[i].second.id + "' and '" + keyed[j].second.id +
                                                "' share a yaw");
    }
  }
  for (auto& [c, v] : keyed) {
    vs.centered.push_back(c);
    vs.views.push_back(std::move(v));
  }
  for (std::size_t i = 0; i + 1 < vs.centered.size(); ++i) {
    vs.boundaries.push_back((vs.centered[i] + vs.centered[i + 1]) / 2);
  }
  return vs;
}

std::size_t select_view_index(const ViewSet& vs, double tilt_delta) {
  if (vs.views.empty()) throw Error(ErrorCode::InsufficientViews, "empty view set");
  const double t = geometry::wrap_angle(tilt_delta);
  const auto cell = static_cast<std::size_t>(
      std::lower_bound(vs.boundaries.begin(), vs.boundaries.end(), t) - vs.boundaries.begin());
  // The cell found on the line is the answer up to rounding at a boundary;
  // the two ends are candidates too because the circle wraps behind them.
  const std::size_t last = vs.views.size() - 1;
  const std::size_t candidates[] = {cell == 0 ? 0 : cell - 1, cell, std::min(cell + 1, last), 0, last};
  std::size_t best = cell;
  double best_d = geometry::circular_distance(t, vs.centered[cell]);
  for (std::size_t c : candidates) {
    const double d = geometry::circular_distance(t, vs.centered[c]);
    if (d < best_d || (d == best_d && vs.centered[c] < vs.centered[best])) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

const std::string& select_view(const ViewSet& vs, double tilt_delta) {
  return vs.views[select_view_index(vs, tilt_delta)].id;
}

// ---------------------------------------------------------------------------
// Timeline

EditTimeline::EditTimeline(std::int64_t duration_ms, std::vector<View> views, std::string initial_view)
    : duration_ms_(duration_ms), views_(std::move(views)), initial_(std::move(initial_view)) {
  if (duration_ms_ <= 0) throw Error(ErrorCode::Validation, "duration must be positive");
  std::set<std::string> ids;
  for (const auto& v : views_) {
    check_token(v.id, "view id");
    if (reserved(v.id)) throw Error(ErrorCode::Validation, "view id '" + v.id + "' is a reserved word");
    check_token(v.media, "media reference");
    if (!std::isfinite(v.rel_yaw)) throw Error(ErrorCode::Validation, "view '" + v.id + "' has a non-finite yaw");
    if (!ids.insert(v.id).second) throw Error(ErrorCode::DuplicateView, "duplicate view id '" + v.id + "'");
  }
  if (!has_view(initial_)) throw Error(ErrorCode::UnknownView, "unknown initial view '" + initial_ + "'");
}

bool EditTimeline::has_view(std::string_view id) const {
  return std::any_of(views_.begin(), views_.end(), [&](const View& v) { return v.id == id; });
}

const std::string& EditTimeline::current_view() const {
  return transitions_.empty() ? initial_ : transitions_.back().to;
}

void EditTimeline::add_transition(std::int64_t t_ms, const std::string& to_view) {
  const std::int64_t after = transitions_.empty() ? 0 : transitions_.back().t_ms;
  if (t_ms <= after || t_ms >= duration_ms_) {
    throw Error(ErrorCode::Order, "transition at " + std::to_string(t_ms) + " ms must fall in (" +
                                      std::to_string(after) + ", " + std::to_string(duration_ms_) + ")");
  }
  if (!has_view(to_view)) throw Error(ErrorCode::UnknownView, "unknown view '" + to_view + "'");
  if (to_view == current_view()) throw Error(ErrorCode::Noop, "already on view '" + to_view + "'");
  transitions_.push_back({t_ms, current_view(), to_view});
}

RenderPlan export_edl(const EditTimeline& tl) {
  RenderPlan plan;
  plan.duration_ms = tl.duration_ms();
  plan.views = tl.views();
  std::int64_t start = 0;
  std::string view = tl.initial_view();
  for (const auto& tr : tl.transitions()) {
    plan.segments.push_back({view, start, tr.t_ms});
    plan.markers.push_back({tr.t_ms, tr.from, tr.to, "interpolated"});
    start = tr.t_ms;
    view = tr.to;
  }
  plan.segments.push_back({view, start, tl.duration_ms()});
  return plan;
}

void validate_plan(const RenderPlan& plan) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::Validation, msg); };
  if (plan.duration_ms <= 0) fail("duration must be positive");
  if (plan.segments.empty()) fail("no segments");
  std::set<std::string> ids;
  for (const auto& v : plan.views) ids.insert(v.id);
  std::int64_t cursor = 0;
  for (std::size_t i = 0; i < plan.segments.size(); ++i) {
    const auto& s = plan.segments[i];
    if (!ids.contains(s.view)) fail("segment " + std::to_string(i) + " uses unknown view '" + s.view + "'");
    if (s.t_start != cursor) fail("segment " + std::to_string(i) + " starts at " + std::to_string(s.t_start) +
                                  ", expected " + std::to_string(cursor));
    if (s.t_end <= s.t_start) fail("segment " + std::to_string(i) + " is empty or reversed");
    if (i > 0 && plan.segments[i - 1].view == s.view) fail("segment " + std::to_string(i) + " repeats its view");
    cursor = s.t_end;
  }
  if (cursor != plan.duration_ms) fail("segments end at " + std::to_string(cursor) + ", not at the duration");
  if (plan.markers.size() + 1 != plan.segments.size()) fail("marker count does not match segment count");
  for (std::size_t i = 0; i < plan.markers.size(); ++i) {
    const auto& m = plan.markers[i];
    const auto& before = plan.segments[i];
    const auto& after = plan.segments[i + 1];
    if (m.t_ms != after.t_start || m.from != before.view || m.to != after.view) {
      fail("transition " + std::to_string(i) + " does not join its segments");
    }
    if (m.kind != "interpolated") fail("transition " + std::to_string(i) + " has unknown kind '" + m.kind + "'");
  }
}

EditTimeline import_edl(const RenderPlan& plan) {
  validate_plan(plan);
  EditTimeline tl(plan.duration_ms, plan.views, plan.segments.front().view);
  for (const auto& m : plan.markers) tl.add_transition(m.t_ms, m.to);
  return tl;
}

// ---------------------------------------------------------------------------
// Text formats

std::string format_edl(const RenderPlan& plan) {
  std::string out;
  out += kEdlHeader;
  out += "\nduration " + std::to_string(plan.duration_ms) + "\n";
  for (const auto& v : plan.views) out += "view " + v.id + " " + format_number(v.rel_yaw) + " " + v.media + "\n";
  for (const auto& s : plan.segments) {
    out += s.view + " " + std::to_string(s.t_start) + " " + std::to_string(s.t_end) + "\n";
  }
  for (const auto& m : plan.markers) {
    out += "transition " + std::to_string(m.t_ms) + " " + m.from + " " + m.to + " " + m.kind + "\n";
  }
  return out;
}

RenderPlan parse_edl(std::string_view body) {
  RenderPlan plan;
  const auto ls = text::lines(body);
  if (ls.empty() || text::tokens(ls.front()) != text::tokens(kEdlHeader)) {
    throw parse_error(1, "missing '" + std::string(kEdlHeader) + "' header");
  }
  bool have_duration = false;
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const std::size_t n = i + 1;
    const auto tok = text::tokens(ls[i]);
    if (tok.empty()) continue;
    if (tok[0] == "duration") {
      if (tok.size() != 2 || have_duration) throw parse_error(n, "expected a single 'duration <ms>'");
      plan.duration_ms = need_number<std::int64_t>(tok[1], n, "duration");
      have_duration = true;
    } else if (tok[0] == "view") {
      if (tok.size() != 4) throw parse_error(n, "expected 'view <id> <rel_yaw> <media>'");
      plan.views.push_back({std::string(tok[1]), need_number<double>(tok[2], n, "yaw"), std::string(tok[3])});
    } else if (tok[0] == "transition") {
      if (tok.size() != 5) throw parse_error(n, "expected 'transition <t> <from> <to> <kind>'");
      plan.markers.push_back({need_number<std::int64_t>(tok[1], n, "time"), std::string(tok[2]),
                              std::string(tok[3]), std::string(tok[4])});
    } else if (tok[0].front() == '#') {
      continue;
    } else {
      if (tok.size() != 3) throw parse_error(n, "expected '<view> <t_start> <t_end>'");
      plan.segments.push_back({std::string(tok[0]), need_number<std::int64_t>(tok[1], n, "start"),
                               need_number<std::int64_t>(tok[2], n, "end")});
    }
  }
  if (!have_duration) throw parse_error(ls.size(), "missing duration");
  return plan;
}

EditTimeline parse_timeline(std::string_view body) {
  std::optional<std::int64_t> duration;
  std::vector<View> views;
  std::optional<std::string> initial;
  std::size_t initial_line = 0;
  std::vector<std::pair<std::size_t, std::pair<std::int64_t, std::string>>> cuts;
  const auto ls = text::lines(body);
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const std::size_t n = i + 1;
    if (text::is_comment_or_blank(ls[i])) continue;
    const auto tok = text::tokens(ls[i]);
    if (tok[0] == "duration") {
      if (tok.size() != 2 || duration) throw parse_error(n, "expected a single 'duration <ms>'");
      duration = need_number<std::int64_t>(tok[1], n, "duration");
    } else if (tok[0] == "view") {
      if (tok.size() != 4) throw parse_error(n, "expected 'view <id> <rel_yaw> <media>'");
      views.push_back({std::string(tok[1]), need_number<double>(tok[2], n, "yaw"), std::string(tok[3])});
    } else if (tok[0] == "initial") {
      if (tok.size() != 2 || initial) throw parse_error(n, "expected a single 'initial <id>'");
      initial = std::string(tok[1]);
      initial_line = n;
    } else if (tok[0] == "cut") {
      if (tok.size() != 3) throw parse_error(n, "expected 'cut <t_ms> <id>'");
      cuts.push_back({n, {need_number<std::int64_t>(tok[1], n, "time"), std::string(tok[2])}});
    } else {
      throw parse_error(n, "unknown directive '" + std::string(tok[0]) + "'");
    }
  }
  if (!duration) throw parse_error(ls.size(), "missing duration");
  if (!initial) throw parse_error(ls.size(), "missing initial view");
  std::optional<EditTimeline> tl;
  try {
    tl.emplace(*duration, std::move(views), *initial);
  } catch (const Error& e) {
    throw at_line(initial_line, e);
  }
  for (const auto& [n, cut] : cuts) {
    try {
      tl->add_transition(cut.first, cut.second);
    } catch (const Error& e) {
      throw at_line(n, e);
    }
  }
  return std::move(*tl);
}

std::string format_timeline(const EditTimeline& tl) {
  std::string out = "duration " + std::to_string(tl.duration_ms()) + "\n";
  for (const auto& v : tl.views()) out += "view " + v.id + " " + format_number(v.rel_yaw) + " " + v.media + "\n";
  out += "initial " + tl.initial_view() + "\n";
  for (const auto& t : tl.transitions()) out += "cut " + std::to_string(t.t_ms) + " " + t.to + "\n";
  return out;
}

}  // namespace camswarm::playback
