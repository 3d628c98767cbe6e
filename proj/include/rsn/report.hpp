#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rsn {

// Diverging scale for signed values: 0 is white, positive values shade to red,
// negative values to blue, saturating at |v| = scale. Missing cells are grey.
std::string heatmap_svg(const std::string& title, const std::vector<std::string>& rows,
                        const std::vector<std::string>& cols,
                        const std::vector<std::vector<std::optional<double>>>& values,
                        double scale);

struct Series {
  std::string name;
  std::vector<double> y;
};

// Line chart over shared x values; log_x requires every x > 0.
std::string curve_svg(const std::string& title, const std::vector<double>& x,
                      const std::vector<Series>& series, bool log_x, const std::string& x_label,
                      const std::string& y_label);

std::string bar_svg(const std::string& title, const std::vector<std::string>& labels,
                    const std::vector<double>& values);

struct ReportEntry {
  std::string title;
  std::string file;  // relative to the report directory
};

// Renders every figure the results document supports into out_dir and writes
// index.html. Recognized keys: "drop_matrix", "overlap", "sweeps",
// "layer_histograms", "concept_overlap". Unknown keys are ignored.
std::vector<ReportEntry> render_report(const nlohmann::json& results,
                                       const std::filesystem::path& out_dir);

}  // namespace rsn
