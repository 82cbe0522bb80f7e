#include "crvae/compare.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "crvae/csv.hpp"
#include "crvae/plot.hpp"

namespace crvae {

Matd embed_tags(const TagSet& set, PhraseBackend& backend) {
  if (set.uninterpreted)
    throw ContractViolation("cluster " + std::to_string(set.cluster_id) +
                            " is uninterpreted; cannot embed its tags");
  Matd vecs = backend.embed(set.tags);
  if (vecs.rows() != static_cast<Eigen::Index>(set.tags.size()) ||
      vecs.cols() != PhraseBackend::kDim)
    throw BackendError("phrase backend returned " + std::to_string(vecs.rows()) + "x" +
                       std::to_string(vecs.cols()) + " for " + std::to_string(set.tags.size()) +
                       " tags");
  return vecs;
}

double pair_similarity(const Matd& a, const Matd& b) {
  if (a.rows() == 0 || b.rows() == 0) throw ContractViolation("pair_similarity: empty tag set");
  auto normalized = [](const Matd& m) {
    Matd out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double n = m.row(i).norm();
      if (n > 0)
        out.row(i) /= n;
      else {
        out.row(i).setZero();
        log_warn("pair_similarity: zero-norm tag vector treated as similarity 0");
      }
    }
    return out;
  };
  const Matd sims = normalized(a) * normalized(b).transpose();
  std::vector<double> flat(sims.data(), sims.data() + sims.size());
  const size_t top = std::min<size_t>(10, flat.size());
  std::partial_sort(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(top), flat.end(),
                    std::greater<double>());
  return std::accumulate(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(top), 0.0) /
         static_cast<double>(top);
}

namespace {

std::string display_name(const std::map<int, std::string>& names, int id, const char* prefix) {
  auto it = names.find(id);
  return it != names.end() ? it->second : prefix + std::to_string(id);
}

// descending best-pair similarity; stable so equal keys keep cluster order
std::vector<size_t> sort_order(const std::vector<double>& best) {
  std::vector<size_t> idx(best.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t x, size_t y) { return best[x] > best[y]; });
  return idx;
}

}  // namespace

PairSimilarityMatrix similarity_matrix(const std::vector<TagSet>& clusters_a,
                                       const std::vector<TagSet>& clusters_b,
                                       PhraseBackend& backend,
                                       const std::map<int, std::string>& names_a,
                                       const std::map<int, std::string>& names_b) {
  std::vector<const TagSet*> a, b;
  for (const auto& c : clusters_a)
    if (c.uninterpreted)
      log_warn("cluster " + std::to_string(c.cluster_id) + " (side A) is uninterpreted; excluded");
    else
      a.push_back(&c);
  for (const auto& c : clusters_b)
    if (c.uninterpreted)
      log_warn("cluster " + std::to_string(c.cluster_id) + " (side B) is uninterpreted; excluded");
    else
      b.push_back(&c);
  if (a.empty() || b.empty())
    throw StageError("similarity matrix needs at least one interpreted cluster per side");

  std::vector<Matd> emb_a, emb_b;
  for (auto* c : a) emb_a.push_back(embed_tags(*c, backend));
  for (auto* c : b) emb_b.push_back(embed_tags(*c, backend));

  Matd raw(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j)
      raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          pair_similarity(emb_a[i], emb_b[j]);

  std::vector<double> best_row(a.size()), best_col(b.size());
  for (size_t i = 0; i < a.size(); ++i) best_row[i] = raw.row(static_cast<Eigen::Index>(i)).maxCoeff();
  for (size_t j = 0; j < b.size(); ++j) best_col[j] = raw.col(static_cast<Eigen::Index>(j)).maxCoeff();
  const auto ri = sort_order(best_row), ci = sort_order(best_col);

  PairSimilarityMatrix m;
  m.values.resize(raw.rows(), raw.cols());
  for (size_t i = 0; i < ri.size(); ++i) {
    m.row_ids.push_back(a[ri[i]]->cluster_id);
    m.row_names.push_back(display_name(names_a, a[ri[i]]->cluster_id, "A"));
    for (size_t j = 0; j < ci.size(); ++j)
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          raw(static_cast<Eigen::Index>(ri[i]), static_cast<Eigen::Index>(ci[j]));
  }
  for (size_t j = 0; j < ci.size(); ++j) {
    m.col_ids.push_back(b[ci[j]]->cluster_id);
    m.col_names.push_back(display_name(names_b, b[ci[j]]->cluster_id, "B"));
  }
  return m;
}

void export_heatmap(const PairSimilarityMatrix& m, const std::string& csv_path,
                    const std::string& image_path, const std::string& image_format,
                    const std::vector<std::string>& comments) {
  if (m.values.rows() == 0 || m.values.cols() == 0)
    throw ContractViolation("export_heatmap: empty matrix");
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw StageError("cannot write " + csv_path);
    for (const auto& c : comments) out << "# " << c << "\n";
    std::vector<std::string> header{""};
    header.insert(header.end(), m.col_names.begin(), m.col_names.end());
    out << csv::join_row(header) << "\n";
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
      std::vector<std::string> row{m.row_names[static_cast<size_t>(i)]};
      for (Eigen::Index j = 0; j < m.values.cols(); ++j)
        row.push_back(csv::format_fixed(m.values(i, j), 4));
      out << csv::join_row(row) << "\n";
    }
  }
  if (image_format == "svg")
    svg_heatmap(image_path, "Cluster pair similarity", m.row_names, m.col_names, m.values,
                comments);
  else if (image_format == "ppm")
    ppm_heatmap(image_path, m.values, comments);
  else
    throw ConfigError("unknown heatmap image format '" + image_format + "' (svg or ppm)");
}

PairSimilarityMatrix read_heatmap_csv(const std::string& path) {
  const auto& rows = csv::read_file(path).rows;
  if (rows.size() < 2 || rows[0].size() < 2 || !rows[0][0].empty())
    throw ParseError(path + ": not a heatmap file");
  PairSimilarityMatrix m;
  m.col_names.assign(rows[0].begin() + 1, rows[0].end());
  m.values.resize(static_cast<Eigen::Index>(rows.size() - 1),
                  static_cast<Eigen::Index>(m.col_names.size()));
  for (size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw ParseError(path + ": record " + std::to_string(i) + " has " +
                       std::to_string(rows[i].size()) + " fields");
    m.row_names.push_back(rows[i][0]);
    for (size_t j = 1; j < rows[i].size(); ++j)
      m.values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1)) =
          std::stod(rows[i][j]);
  }
  return m;
}

}  // namespace crvae
