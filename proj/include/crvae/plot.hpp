#pragma once

// Self-contained SVG plot writers (line chart, cluster scatter, annotated
// heatmap) plus an unannotated PPM raster fallback for the heatmap. Every
// writer takes freeform comment lines that are embedded in the output, so
// artifact headers (seed etc.) survive in rendered files too.

#include <string>
#include <vector>

#include "crvae/types.hpp"

namespace crvae {

struct Series {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

void svg_line_chart(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<Series>& series, const std::vector<std::string>& comments);

void svg_scatter(const std::string& path, const std::string& title,
                 const std::vector<double>& xs, const std::vector<double>& ys,
                 const std::vector<int>& cluster_ids, const std::vector<std::string>& comments);

void svg_heatmap(const std::string& path, const std::string& title,
                 const std::vector<std::string>& row_names,
                 const std::vector<std::string>& col_names, const Matd& values,
                 const std::vector<std::string>& comments);

// Raster variant: one colored block per cell, no text.
void ppm_heatmap(const std::string& path, const Matd& values,
                 const std::vector<std::string>& comments);

}  // namespace crvae
