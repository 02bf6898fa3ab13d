#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nnsparse/bench.hpp"
#include "nnsparse/conditions.hpp"
#include "nnsparse/core.hpp"
#include "nnsparse/solvers.hpp"

namespace nnsparse {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 17 significant digits: enough for exact double round-trips in text form.
inline std::string format_full(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Write-then-rename so an interrupted run never leaves a truncated file.
inline void atomic_write_text(const std::filesystem::path& path,
                              const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os << content;
    os.flush();
    if (!os) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() +
                        ": " + ec.message());
}

namespace detail {

inline double parse_field(const std::string& field, const std::string& file, int line) {
  const char* begin = field.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0'))
    throw ParseError(file + ":" + std::to_string(line) + ": cannot parse '" + field +
                     "' as a number");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(' ');
    const auto e = f.find_last_not_of(' ');
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

}  // namespace detail

/// Read a rectangular CSV of numbers. With `header`, the first line is taken
/// as column names. Parse failures name the offending 1-based line.
inline Matrix read_csv_matrix(const std::filesystem::path& path, bool header = false,
                              std::vector<std::string>* names = nullptr) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  size_t cols = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (header && line_no == 1) {
      if (names) *names = fields;
      continue;
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields)
      row.push_back(detail::parse_field(f, path.string(), line_no));
    if (cols == 0) {
      cols = row.size();
    } else if (row.size() != cols) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(cols) + " fields, found " +
                       std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path.string() + ": no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

inline void write_csv_matrix(const std::filesystem::path& path, const Matrix& m,
                             const std::vector<std::string>* header = nullptr) {
  std::ostringstream os;
  if (header) {
    for (size_t c = 0; c < header->size(); ++c)
      os << (c ? "," : "") << (*header)[c];
    os << "\n";
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      os << (c ? "," : "") << format_full(m(r, c));
    os << "\n";
  }
  atomic_write_text(path, os.str());
}

inline nlohmann::json support_to_json(const Support& s) {
  return nlohmann::json(s.indices());
}

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Vector vector_from_json(const nlohmann::json& arr) {
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (size_t i = 0; i < arr.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  return v;
}

inline void write_ground_truth_json(const std::filesystem::path& path,
                                    const GroundTruth& truth, const Support& support) {
  nlohmann::json j;
  j["coefficients"] = vector_to_json(truth.coefficients);
  j["distortion"] = vector_to_json(truth.distortion);
  j["support"] = support_to_json(support);
  atomic_write_text(path, j.dump(2) + "\n");
}

struct LoadedTruth {
  GroundTruth truth;
  Support support;
};

inline LoadedTruth read_ground_truth_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  try {
    GroundTruth truth(vector_from_json(j.at("coefficients")),
                      vector_from_json(j.at("distortion")));
    Support support(j.at("support").get<std::vector<int>>());
    return {std::move(truth), std::move(support)};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline nlohmann::json kkt_to_json(const KKTCertificate& kkt, double kkt_tol) {
  nlohmann::json j;
  j["stationarity_residuals"] = vector_to_json(kkt.stationarity_residuals);
  j["complementarity_max"] = kkt.complementarity_max;
  j["dual_feasibility_min"] = kkt.dual_feasibility_min;
  j["primal_feasibility_min"] = kkt.primal_feasibility_min;
  j["optimal"] = kkt.is_optimal(kkt_tol);
  return j;
}

inline nlohmann::json solution_to_json(const Solution& sol, double kkt_tol = 1e-6) {
  nlohmann::json j;
  j["x"] = vector_to_json(sol.x);
  j["support"] = support_to_json(sol.support);
  j["objective"] = sol.objective;
  j["iterations"] = sol.iterations;
  j["converged"] = sol.converged;
  j["non_unique"] = sol.non_unique;
  j["kkt"] = kkt_to_json(sol.kkt, kkt_tol);
  return j;
}

inline nlohmann::json margins_to_json(const std::map<int, double>& margins) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [atom, m] : margins) j[std::to_string(atom)] = m;
  return j;
}

inline nlohmann::json condition_report_to_json(const ConditionReport& rep) {
  nlohmann::json j;
  j["erc"] = rep.erc;
  j["perc"] = rep.perc;
  j["psc"] = margins_to_json(rep.psc_per_atom);
  nlohmann::json margins;
  margins["mcc"] = rep.mcc_margin;
  margins["nscc"] = margins_to_json(rep.nscc_margins);
  margins["perc_max"] = rep.perc_max_margin;
  margins["perc_amax"] = rep.perc_amax_margin;
  margins["erc_mrc_noise"] = rep.erc_mrc_noise_margin
                                 ? nlohmann::json(*rep.erc_mrc_noise_margin)
                                 : nlohmann::json();
  margins["erc_mrc_coef"] = rep.erc_mrc_coef_margin
                                ? nlohmann::json(*rep.erc_mrc_coef_margin)
                                : nlohmann::json();
  if (!rep.base_margins.empty()) margins["base"] = margins_to_json(rep.base_margins);
  j["margins"] = margins;
  nlohmann::json verdicts;
  verdicts["apmrc"] = rep.verdicts.apmrc;
  verdicts["perc_max"] = rep.verdicts.perc_max;
  verdicts["perc_amax"] = rep.verdicts.perc_amax;
  verdicts["erc_mrc"] =
      rep.verdicts.erc_mrc ? nlohmann::json(*rep.verdicts.erc_mrc) : nlohmann::json();
  verdicts["base_strict"] = rep.verdicts.base_strict
                                ? nlohmann::json(*rep.verdicts.base_strict)
                                : nlohmann::json();
  verdicts["base_weak"] = rep.verdicts.base_weak
                              ? nlohmann::json(*rep.verdicts.base_weak)
                              : nlohmann::json();
  j["verdicts"] = verdicts;
  j["base_partial"] = rep.base_partial;
  return j;
}

inline std::string support_field(const Support& s) {
  std::string out;
  for (size_t i = 0; i < s.indices().size(); ++i) {
    if (i) out += ';';
    out += std::to_string(s.indices()[i]);
  }
  return out;
}

/// One confusion CSV: rows are conditions, columns the four cells.
inline void write_confusion_csv(const std::filesystem::path& path,
                                const std::array<ConfusionMatrix, kNumMrcs>& cells) {
  std::ostringstream os;
  os << "condition,true_correct,true_incorrect,false_correct,false_incorrect\n";
  for (int c = 0; c < kNumMrcs; ++c) {
    const ConfusionMatrix& cm = cells[static_cast<size_t>(c)];
    os << kMrcNames[static_cast<size_t>(c)] << "," << cm.true_correct << ","
       << cm.true_incorrect << "," << cm.false_correct << "," << cm.false_incorrect
       << "\n";
  }
  atomic_write_text(path, os.str());
}

/// Per-instance record CSV with every margin and outcome, for downstream
/// plotting or auditing.
inline void write_records_csv(const std::filesystem::path& path,
                              const BatchResult& batch) {
  std::ostringstream os;
  os << "instance,seed,gamma_requested,gamma,distortion,usable,correct,"
        "erc,perc,mcc_margin,min_nscc_margin,perc_max_margin,perc_amax_margin,"
        "erc_mrc_noise_margin,erc_mrc_coef_margin,"
        "apmrc,perc_max,perc_amax,erc_mrc,"
        "boundary_apmrc,boundary_perc_max,boundary_perc_amax,boundary_erc_mrc,"
        "true_support,estimated_support\n";
  for (const InstanceOutcome& r : batch.records) {
    os << r.instance_index << "," << r.seed << "," << format_full(r.gamma_requested)
       << "," << format_full(r.gamma) << "," << to_string(r.distortion) << ","
       << (r.usable ? 1 : 0) << "," << (r.correct ? 1 : 0) << ",";
    if (r.usable) {
      os << format_full(r.report.erc) << "," << format_full(r.report.perc) << ","
         << format_full(r.report.mcc_margin) << ","
         << format_full(r.report.min_nscc_margin()) << ","
         << format_full(r.report.perc_max_margin) << ","
         << format_full(r.report.perc_amax_margin) << ","
         << (r.report.erc_mrc_noise_margin ? format_full(*r.report.erc_mrc_noise_margin)
                                           : "")
         << ","
         << (r.report.erc_mrc_coef_margin ? format_full(*r.report.erc_mrc_coef_margin)
                                          : "")
         << ",";
    } else {
      os << ",,,,,,,,";
    }
    for (int c = 0; c < kNumMrcs; ++c)
      os << (r.verdict[static_cast<size_t>(c)] ? 1 : 0) << ",";
    for (int c = 0; c < kNumMrcs; ++c)
      os << (r.boundary[static_cast<size_t>(c)] ? 1 : 0) << ",";
    os << support_field(r.true_support) << "," << support_field(r.estimated_support)
       << "\n";
  }
  atomic_write_text(path, os.str());
}

}  // namespace nnsparse
