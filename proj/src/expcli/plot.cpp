// Minimal SVG charts for the experiment reports. Output depends only on the
// report contents, so plots are as reproducible as the reports themselves.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "duskill/error.hpp"
#include "duskill/expcli/experiments.hpp"
#include "duskill/nn/tensor_io.hpp"

namespace duskill::expcli {

using nlohmann::json;

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string color(int i) { return kPalette[static_cast<std::size_t>(std::abs(i)) % std::size(kPalette)]; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void fix() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

// One plotting area inside the document.
class Panel {
 public:
  Panel(double x0, double y0, double w, double h, Range xr, Range yr) : x0_(x0), y0_(y0), w_(w), h_(h), xr_(xr), yr_(yr) {
    xr_.fix();
    yr_.fix();
  }

  double px(double x) const { return x0_ + (x - xr_.lo) / (xr_.hi - xr_.lo) * w_; }
  double py(double y) const { return y0_ + h_ - (y - yr_.lo) / (yr_.hi - yr_.lo) * h_; }

  void axes(std::ostringstream& o, const std::string& title, const std::string& xlabel, const std::string& ylabel) const {
    o << "<rect x='" << x0_ << "' y='" << y0_ << "' width='" << w_ << "' height='" << h_
      << "' fill='none' stroke='#444'/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double xv = xr_.lo + (xr_.hi - xr_.lo) * i / 4.0;
      const double yv = yr_.lo + (yr_.hi - yr_.lo) * i / 4.0;
      o << "<text x='" << px(xv) << "' y='" << y0_ + h_ + 14 << "' font-size='10' text-anchor='middle'>" << num(xv)
        << "</text>\n";
      o << "<text x='" << x0_ - 4 << "' y='" << py(yv) + 3 << "' font-size='10' text-anchor='end'>" << num(yv)
        << "</text>\n";
      o << "<line x1='" << x0_ << "' x2='" << x0_ + w_ << "' y1='" << py(yv) << "' y2='" << py(yv)
        << "' stroke='#ddd'/>\n";
    }
    o << "<text x='" << x0_ + w_ / 2 << "' y='" << y0_ - 8 << "' font-size='13' text-anchor='middle'>" << esc(title)
      << "</text>\n";
    o << "<text x='" << x0_ + w_ / 2 << "' y='" << y0_ + h_ + 30 << "' font-size='11' text-anchor='middle'>"
      << esc(xlabel) << "</text>\n";
    o << "<text transform='translate(" << x0_ - 42 << "," << y0_ + h_ / 2
      << ") rotate(-90)' font-size='11' text-anchor='middle'>" << esc(ylabel) << "</text>\n";
  }

  void line(std::ostringstream& o, const std::vector<double>& xs, const std::vector<double>& ys, const std::string& c,
            bool dots = false) const {
    if (xs.empty()) return;
    o << "<polyline fill='none' stroke='" << c << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < xs.size(); ++i) o << px(xs[i]) << "," << py(ys[i]) << " ";
    o << "'/>\n";
    if (dots)
      for (std::size_t i = 0; i < xs.size(); ++i)
        o << "<circle cx='" << px(xs[i]) << "' cy='" << py(ys[i]) << "' r='2.5' fill='" << c << "'/>\n";
  }

  void error_bar(std::ostringstream& o, double x, double y, double e, const std::string& c) const {
    o << "<line x1='" << px(x) << "' x2='" << px(x) << "' y1='" << py(y - e) << "' y2='" << py(y + e) << "' stroke='"
      << c << "'/>\n";
  }

  double x0() const { return x0_; }
  double y0() const { return y0_; }
  double width() const { return w_; }

 private:
  double x0_, y0_, w_, h_;
  Range xr_, yr_;
};

void legend(std::ostringstream& o, double x, double y, const std::vector<std::pair<std::string, std::string>>& items) {
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double yy = y + 14.0 * static_cast<double>(i);
    o << "<rect x='" << x << "' y='" << yy - 8 << "' width='10' height='10' fill='" << items[i].second << "'/>\n";
    o << "<text x='" << x + 14 << "' y='" << yy + 1 << "' font-size='10'>" << esc(items[i].first) << "</text>\n";
  }
}

std::string document(double w, double h, const std::string& body) {
  std::ostringstream o;
  o << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "' font-family='sans-serif'>\n"
    << "<rect width='100%' height='100%' fill='white'/>\n"
    << body << "</svg>\n";
  return o.str();
}

std::string plot_rl(const json& r) {
  std::vector<double> cx, cy, ex, ey, es;
  Range xr, yr;
  for (const auto& p : r.at("curve")) {
    if (p.at("episodes").get<int>() == 0) continue;
    cx.push_back(p.at("env_step").get<double>());
    cy.push_back(p.at("mean_return").get<double>());
  }
  for (const auto& e : r.at("evals")) {
    const auto returns = e.at("returns").get<std::vector<double>>();
    ex.push_back(e.at("env_step").get<double>());
    ey.push_back(e.at("mean").get<double>());
    es.push_back(sample_std(returns));
  }
  for (double v : cx) xr.add(v);
  for (double v : ex) xr.add(v);
  for (double v : cy) yr.add(v);
  for (std::size_t i = 0; i < ey.size(); ++i) yr.add(ey[i] + es[i]), yr.add(ey[i] - es[i]);
  Panel p(60, 40, 520, 300, xr, yr);
  std::ostringstream o;
  p.axes(o, "online RL: " + r.at("variant").get<std::string>() + " seed " + std::to_string(r.at("seed").get<std::uint64_t>()),
         "environment steps", "return");
  p.line(o, cx, cy, color(7));
  p.line(o, ex, ey, color(0), true);
  for (std::size_t i = 0; i < ex.size(); ++i) p.error_bar(o, ex[i], ey[i], es[i], color(0));
  legend(o, 600, 60, {{"training episodes", color(7)}, {"evaluation", color(0)}});
  return document(720, 390, o.str());
}

std::string plot_sweep(const json& r) {
  std::vector<double> xs, ys, ss;
  Range xr, yr;
  for (const auto& p : r.at("points")) {
    xs.push_back(p.at("shots").get<double>());
    ys.push_back(p.at("mean").get<double>());
    ss.push_back(p.at("std").get<double>());
    xr.add(xs.back());
    yr.add(ys.back() + ss.back());
    yr.add(ys.back() - ss.back());
  }
  yr.add(0.0);
  Panel p(60, 40, 440, 300, xr, yr);
  std::ostringstream o;
  p.axes(o, "few-shot sweep: " + r.at("variant").get<std::string>() + " (" + r.at("level").get<std::string>() + ")",
         "demonstrations per task", "mean return");
  p.line(o, xs, ys, color(0), true);
  for (std::size_t i = 0; i < xs.size(); ++i) p.error_bar(o, xs[i], ys[i], ss[i], color(0));
  return document(540, 390, o.str());
}

std::string plot_fewshot(const json& r) {
  const auto table = MetricsTable::from_json(r.at("table"));
  std::vector<const MetricsRow*> rows;
  for (const auto& row : table.rows)
    if (row.domain == "all") rows.push_back(&row);
  Range xr, yr;
  xr.add(-0.5);
  xr.add(static_cast<double>(rows.size()) - 0.5);
  yr.add(0.0);
  for (const auto* row : rows) yr.add(row->mean + row->std);
  Panel p(60, 40, 60.0 * std::max<std::size_t>(rows.size(), 3), 300, xr, yr);
  std::ostringstream o;
  p.axes(o, "few-shot: " + r.at("variant").get<std::string>() + ", " + std::to_string(r.at("shots").get<int>()) + " demos",
         "level", "mean return");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double x = static_cast<double>(i);
    const double left = p.px(x - 0.3), right = p.px(x + 0.3);
    const double top = p.py(rows[i]->mean), base = p.py(0.0);
    o << "<rect x='" << left << "' y='" << std::min(top, base) << "' width='" << right - left << "' height='"
      << std::abs(base - top) << "' fill='" << color(static_cast<int>(i)) << "'/>\n";
    p.error_bar(o, x, rows[i]->mean, rows[i]->std, "#000");
    o << "<text x='" << p.px(x) << "' y='" << base + 26 << "' font-size='10' text-anchor='middle'>"
      << esc(rows[i]->level) << "</text>\n";
  }
  return document(p.x0() + p.width() + 40, 390, o.str());
}

std::string plot_embedding(const json& r) {
  const auto& labels = r.at("labels");
  std::vector<int> task, domain;
  for (const auto& l : labels) {
    task.push_back(l.at("task").get<int>());
    domain.push_back(l.at("domain_id").get<int>());
  }
  std::ostringstream o;
  auto panel = [&](const json& emb, double x0, const std::string& title, const std::vector<int>& colour_by) {
    Range xr, yr;
    const auto& proj = emb.at("projection");
    for (const auto& c : proj) xr.add(c.at(0).get<double>()), yr.add(c.at(1).get<double>());
    Panel p(x0, 40, 320, 320, xr, yr);
    p.axes(o, title + " (ARI task " + num(emb.at("ari_task").get<double>()) + ", domain " +
                  num(emb.at("ari_domain").get<double>()) + ")",
           "PC1", "PC2");
    for (std::size_t i = 0; i < proj.size(); ++i) {
      const double x = p.px(proj[i].at(0).get<double>()), y = p.py(proj[i].at(1).get<double>());
      const std::string c = color(colour_by[i]);
      if (domain[i] % 2 == 0)
        o << "<circle cx='" << x << "' cy='" << y << "' r='2.5' fill='" << c << "' fill-opacity='0.7'/>\n";
      else
        o << "<rect x='" << x - 2.5 << "' y='" << y - 2.5 << "' width='5' height='5' fill='" << c
          << "' fill-opacity='0.7'/>\n";
    }
  };
  panel(r.at("z_rho"), 70, "domain-invariant", task);
  if (r.contains("z_sigma")) panel(r.at("z_sigma"), 480, "domain-variant", domain);
  o << "<text x='70' y='400' font-size='10'>colour: task (left), domain (right); marker: domain</text>\n";
  return document(r.contains("z_sigma") ? 840 : 430, 420, o.str());
}

// Training losses from a checkpoint's loss_log.jsonl.
std::string plot_loss_log(const fs::path& path) {
  std::istringstream in(nn::read_file_bytes(path));
  std::vector<double> steps;
  std::map<std::string, std::vector<double>> series;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw FileError(path.string() + ": malformed line: " + e.what());
    }
    steps.push_back(j.at("step").get<double>());
    for (const char* k : {"rec", "total", "prior_rho", "prior_sigma"})
      if (j.contains(k)) series[k].push_back(j[k].get<double>());
  }
  Range xr, yr;
  for (double s : steps) xr.add(s);
  for (const auto& [k, v] : series)
    for (double y : v)
      if (y > 0) yr.add(std::log10(y));
  Panel p(60, 40, 520, 300, xr, yr);
  std::ostringstream o;
  p.axes(o, "pretraining losses", "update step", "log10 loss");
  std::vector<std::pair<std::string, std::string>> items;
  int i = 0;
  for (const auto& [k, v] : series) {
    std::vector<double> xs, ys;
    for (std::size_t n = 0; n < v.size() && n < steps.size(); ++n)
      if (v[n] > 0) xs.push_back(steps[n]), ys.push_back(std::log10(v[n]));
    p.line(o, xs, ys, color(i));
    items.emplace_back(k, color(i++));
  }
  legend(o, 600, 60, items);
  return document(720, 390, o.str());
}

}  // namespace

std::vector<fs::path> plot_reports(const std::vector<fs::path>& reports, const fs::path& out_dir) {
  std::vector<fs::path> out;
  fs::create_directories(out_dir);
  for (const auto& path : reports) {
    if (!fs::exists(path)) throw FileError("missing report " + path.string());
    std::string svg;
    if (path.extension() == ".jsonl") {
      svg = plot_loss_log(path);
    } else {
      const json r = read_json(path);
      const std::string kind = r.value("kind", "");
      try {
        if (kind == "rl") svg = plot_rl(r);
        else if (kind == "sweep") svg = plot_sweep(r);
        else if (kind == "fewshot") svg = plot_fewshot(r);
        else if (kind == "embedding") svg = plot_embedding(r);
        else throw FileError(path.string() + " is not a known report (kind '" + kind + "')");
      } catch (const json::exception& e) {
        throw FileError(path.string() + ": malformed report: " + e.what());
      }
    }
    fs::path target = out_dir / path.filename();
    target.replace_extension(".svg");
    if (path.extension() == ".jsonl") target = out_dir / (path.parent_path().filename().string() + "_loss.svg");
    nn::write_file_bytes(target, svg);
    out.push_back(target);
  }
  return out;
}

}  // namespace duskill::expcli
