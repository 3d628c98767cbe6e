#include "rsn/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rsn/common.hpp"
#include "rsn/store.hpp"

namespace rsn {

namespace {

std::string fmt(double v, int decimals = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s == "-0.00" || s == "-0.0" || s == "-0") s = s.substr(1);
  return s;
}

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string rgb(int r, int g, int b) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

std::string diverging(double v, double scale) {
  const double t = std::clamp(std::fabs(v) / scale, 0.0, 1.0);
  const int fade = static_cast<int>(std::lround(255.0 * (1.0 - t)));
  return v >= 0 ? rgb(255, fade, fade) : rgb(fade, fade, 255);
}

const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

std::string heatmap_svg(const std::string& title, const std::vector<std::string>& rows,
                        const std::vector<std::string>& cols,
                        const std::vector<std::vector<std::optional<double>>>& values,
                        double scale) {
  if (scale <= 0) scale = 1.0;
  const int cell = 56, left = 150, top = 150;
  const int w = left + cell * static_cast<int>(cols.size()) + 20;
  const int h = top + cell * static_cast<int>(rows.size()) + 40;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"10\" y=\"20\" font-size=\"14\">" << esc(title) << "</text>\n";
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const int x = left + cell * static_cast<int>(j) + cell / 2;
    s << "<text transform=\"translate(" << x << "," << top - 6
      << ") rotate(-45)\">" << esc(cols[j]) << "</text>\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int y = top + cell * static_cast<int>(i);
    s << "<text x=\"" << left - 6 << "\" y=\"" << y + cell / 2 + 4
      << "\" text-anchor=\"end\">" << esc(rows[i]) << "</text>\n";
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const int x = left + cell * static_cast<int>(j);
      const auto& v = (i < values.size() && j < values[i].size()) ? values[i][j] : std::nullopt;
      const std::string fill = v ? diverging(*v, scale) : "#cccccc";
      s << "<rect class=\"cell\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"" << fill << "\" stroke=\"#ffffff\"/>\n";
      s << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
        << "\" text-anchor=\"middle\">" << (v ? fmt(*v) : "n/a") << "</text>\n";
    }
  }
  s << "<text x=\"10\" y=\"" << h - 12 << "\">red: positive, blue: negative, saturates at |v| = "
    << fmt(scale) << "; grey: undefined</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string curve_svg(const std::string& title, const std::vector<double>& x,
                      const std::vector<Series>& series, bool log_x, const std::string& x_label,
                      const std::string& y_label) {
  const int W = 560, H = 360, L = 60, R = 150, T = 40, B = 50;
  for (const auto& sr : series)
    if (sr.y.size() != x.size())
      throw ValidationError("series '" + sr.name + "' does not match the x values in length");
  std::vector<double> xs = x;
  if (log_x)
    for (auto& v : xs) {
      if (v <= 0) throw ValidationError("log-scale axis needs positive x values");
      v = std::log10(v);
    }
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!xs.empty()) {
    x0 = *std::min_element(xs.begin(), xs.end());
    x1 = *std::max_element(xs.begin(), xs.end());
  }
  if (x1 == x0) x1 = x0 + 1;
  for (const auto& sr : series)
    for (double v : sr.y) y1 = std::max(y1, v), y0 = std::min(y0, v);
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"10\" y=\"20\" font-size=\"14\">" << esc(title) << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < x.size(); ++i)
    s << "<text x=\"" << fmt(px(xs[i]), 1) << "\" y=\"" << H - B + 14
      << "\" text-anchor=\"middle\">" << fmt(x[i], x[i] == std::floor(x[i]) ? 0 : 2)
      << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = y0 + (y1 - y0) * t / 4.0;
    s << "<text x=\"" << L - 6 << "\" y=\"" << fmt(py(v) + 4, 1) << "\" text-anchor=\"end\">"
      << fmt(v) << "</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << esc(x_label) << (log_x ? " (log scale)" : "") << "</text>\n";
  s << "<text transform=\"translate(14," << (T + H - B) / 2 << ") rotate(-90)\" "
    << "text-anchor=\"middle\">" << esc(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % 8];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < std::min(xs.size(), series[k].y.size()); ++i)
      s << (i ? " " : "") << fmt(px(xs[i]), 1) << "," << fmt(py(series[k].y[i]), 1);
    s << "\"/>\n";
    const int ly = T + 16 * static_cast<int>(k);
    s << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30
      << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << W - R + 34 << "\" y=\"" << ly + 4 << "\">" << esc(series[k].name)
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string bar_svg(const std::string& title, const std::vector<std::string>& labels,
                    const std::vector<double>& values) {
  const int W = 60 + 50 * static_cast<int>(labels.size()) + 20, H = 260, B = 40, T = 40;
  double mx = 1;
  for (double v : values) mx = std::max(mx, v);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"10\" y=\"20\" font-size=\"14\">" << esc(title) << "</text>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = i < values.size() ? values[i] : 0.0;
    const double bh = v / mx * (H - T - B);
    const int x = 60 + 50 * static_cast<int>(i);
    s << "<rect class=\"bar\" x=\"" << x << "\" y=\"" << fmt(H - B - bh, 1) << "\" width=\"36\" height=\""
      << fmt(bh, 1) << "\" fill=\"#1f77b4\"/>\n";
    s << "<text x=\"" << x + 18 << "\" y=\"" << fmt(H - B - bh - 4, 1)
      << "\" text-anchor=\"middle\">" << fmt(v, 0) << "</text>\n";
    s << "<text x=\"" << x + 18 << "\" y=\"" << H - B + 14 << "\" text-anchor=\"middle\">"
      << esc(labels[i]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

namespace {

std::vector<std::vector<std::optional<double>>> cells(const nlohmann::json& m) {
  std::vector<std::vector<std::optional<double>>> out;
  for (const auto& row : m) {
    std::vector<std::optional<double>> r;
    for (const auto& c : row)
      r.push_back(c.is_null() ? std::nullopt : std::optional<double>(c.get<double>()));
    out.push_back(r);
  }
  return out;
}

}  // namespace

std::vector<ReportEntry> render_report(const nlohmann::json& results,
                                       const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<ReportEntry> entries;
  auto emit = [&](const std::string& title, const std::string& file, const std::string& svg) {
    write_text_file(out_dir / file, svg);
    entries.push_back({title, file});
  };
  try {
    if (results.contains("drop_matrix")) {
      const auto& d = results["drop_matrix"];
      const auto rels = d.at("relations").get<std::vector<std::string>>();
      emit("Accuracy drop (row: evaluated relation, column: masked relation)", "drop_matrix.svg",
           heatmap_svg("accuracy drop", rels, rels, cells(d.at("drop")), 1.0));
    }
    if (results.contains("overlap")) {
      const auto& o = results["overlap"];
      const auto names = o.at("names").get<std::vector<std::string>>();
      const double k = o.at("k").get<double>();
      emit("Top-k overlap between relations", "overlap.svg",
           heatmap_svg("top-k overlap (k = " + fmt(k, 0) + ")", names, names, cells(o.at("counts")),
                       k));
    }
    if (results.contains("concept_overlap")) {
      const auto& o = results["concept_overlap"];
      emit("Top-k overlap between relations and concepts", "concept_overlap.svg",
           heatmap_svg("relation x concept overlap", o.at("rows").get<std::vector<std::string>>(),
                       o.at("cols").get<std::vector<std::string>>(), cells(o.at("counts")),
                       o.at("k").get<double>()));
    }
    if (results.contains("sweeps")) {
      for (const auto& c : results["sweeps"]) {
        const auto rel = c.at("relation").get<std::string>();
        std::vector<double> x, self, others;
        for (const auto& p : c.at("points")) {
          x.push_back(p.at("k").get<double>());
          self.push_back(p.at("acc_self").get<double>());
          others.push_back(p.at("acc_others_mean").get<double>());
        }
        emit("Neuron-count sweep: " + rel, "sweep_" + rel + ".svg",
             curve_svg("sweep " + rel, x, {{"self", self}, {"others (mean)", others}}, true,
                       "masked neurons", "accuracy"));
      }
    }
    if (results.contains("layer_histograms")) {
      for (const auto& [rel, h] : results["layer_histograms"].items()) {
        std::vector<std::string> labels;
        std::vector<double> v;
        for (std::size_t i = 0; i < h.size(); ++i) {
          labels.push_back("L" + std::to_string(i));
          v.push_back(h[i].get<double>());
        }
        emit("Layer distribution of top-k neurons: " + rel, "layers_" + rel + ".svg",
             bar_svg("layers " + rel, labels, v));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("results document does not parse: ") + e.what());
  }

  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>rsnlab report</title>"
       << "</head>\n<body>\n<h1>rsnlab report</h1>\n"
       << "<p>Heatmaps use a diverging scale: white is 0, red positive, blue negative, "
       << "saturating at the value printed under each chart. Grey cells are undefined "
       << "(zero baseline accuracy).</p>\n<p>" << entries.size() << " figure(s).</p>\n<ul>\n";
  for (const auto& e : entries)
    html << "<li><a href=\"" << esc(e.file) << "\">" << esc(e.title) << "</a><br><img src=\""
         << esc(e.file) << "\"></li>\n";
  html << "</ul>\n</body></html>\n";
  write_text_file(out_dir / "index.html", html.str());
  return entries;
}

}  // namespace rsn
