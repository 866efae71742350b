#include "iatrpo/svg.hpp"

#include <array>
#include <ostream>

#include "iatrpo/error.hpp"
#include "iatrpo/records.hpp"

namespace iatrpo {
namespace {

constexpr double kScale = 60.0;  // pixels per metre
constexpr double kMargin = 10.0;
constexpr std::array<const char*, 4> kColors = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};

struct Frame {
  envs::Rect course;
  double px(double x) const { return kMargin + (x - course.x0) * kScale; }
  double py(double y) const { return kMargin + (course.y1 - y) * kScale; }
};

void polyline(std::ostream& out, const Frame& f, const envs::Point& start,
              const std::vector<envs::Point>& pts, const char* color, bool dashed) {
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"";
  if (dashed) out << " stroke-dasharray=\"5,3\"";
  out << " points=\"";
  out << format_double(f.px(start.x)) << ',' << format_double(f.py(start.y));
  for (const auto& p : pts) out << ' ' << format_double(f.px(p.x)) << ',' << format_double(f.py(p.y));
  out << "\"/>\n";
}

}  // namespace

void render_trajectories(const envs::EnvConfig& env, const std::vector<EpisodeTrace>& traces,
                         const std::vector<EpisodeTrace>& singles, std::ostream& out) {
  require(!traces.empty(), "render_trajectories: no traces");
  const envs::EnvId id = traces.front().env_id;
  Frame f{env.course(id)};
  const double w = 2 * kMargin + (f.course.x1 - f.course.x0) * kScale;
  const double h = 2 * kMargin + (f.course.y1 - f.course.y0) * kScale;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_double(w)
      << "\" height=\"" << format_double(h) << "\" viewBox=\"0 0 " << format_double(w) << ' '
      << format_double(h) << "\">\n";
  out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\""
      << format_double(w - 2 * kMargin) << "\" height=\"" << format_double(h - 2 * kMargin)
      << "\" fill=\"white\" stroke=\"black\"/>\n";
  if (envs::is_lane_change(id)) {
    for (std::size_t k = 1; k < env.geometry.lane_centers.size(); ++k) {
      const double y = 0.5 * (env.geometry.lane_centers[k - 1] + env.geometry.lane_centers[k]);
      out << "<line x1=\"" << format_double(f.px(f.course.x0)) << "\" y1=\"" << format_double(f.py(y))
          << "\" x2=\"" << format_double(f.px(f.course.x1)) << "\" y2=\"" << format_double(f.py(y))
          << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"8,8\"/>\n";
    }
  }
  for (const auto& b : env.geometry.lane_barriers) {
    if (!envs::is_lane_change(id)) break;
    out << "<rect x=\"" << format_double(f.px(b.x0)) << "\" y=\"" << format_double(f.py(b.y1))
        << "\" width=\"" << format_double((b.x1 - b.x0) * kScale) << "\" height=\""
        << format_double((b.y1 - b.y0) * kScale) << "\" fill=\"#666666\"/>\n";
  }
  const double goal_r = env.geometry.goal_radius * kScale;
  for (const auto& tr : traces) {
    for (std::size_t i = 0; i < tr.num_agents(); ++i) {
      const char* color = kColors[tr.roles[i] % kColors.size()];
      out << "<circle cx=\"" << format_double(f.px(tr.goals[i].x)) << "\" cy=\""
          << format_double(f.py(tr.goals[i].y)) << "\" r=\"" << format_double(goal_r)
          << "\" fill=\"none\" stroke=\"" << color << "\" stroke-opacity=\"0.5\"/>\n";
    }
  }
  for (const auto& tr : singles) {
    for (std::size_t i = 0; i < tr.num_agents(); ++i) {
      polyline(out, f, tr.starts[i], tr.positions[i], kColors[tr.roles[i] % kColors.size()], true);
    }
  }
  for (const auto& tr : traces) {
    for (std::size_t i = 0; i < tr.num_agents(); ++i) {
      polyline(out, f, tr.starts[i], tr.positions[i], kColors[tr.roles[i] % kColors.size()], false);
    }
  }
  out << "</svg>\n";
}

}  // namespace iatrpo
