#pragma once

// Experiment driver behind the command-line tool: configuration, the
// decompose / reconstruct / compare / phantom runs and the CSV report format.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mcwl/lifting.hpp"
#include "mcwl/metrics.hpp"
#include "mcwl/motion.hpp"
#include "mcwl/volume.hpp"

namespace mcwl {

// Bad configuration or command-line usage (exit code 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A decomposition did not invert bit-exactly (exit code 1).
struct ReconstructionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kExitOk = 0, kExitReconstruction = 1, kExitUsage = 2 };

struct Config {
  std::string input;  // volume file, or "phantom" for a generated one
  std::string output_dir = "mcwl_out";
  std::vector<Method> methods{Method::none, Method::block, Method::mesh, Method::graph};
  LiftingParams params;
  std::uint64_t seed = 1;
};

inline constexpr std::string_view kConfigKeys[] = {
    "input", "output_dir", "methods", "grid_size", "block_size", "search_range",
    "knn", "update_variant", "distances", "seed"};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw UsageError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline std::vector<Method> parse_methods(const std::string& v) {
  std::vector<Method> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto m = parse_method(item);
    if (!m) throw UsageError("config: unknown method '" + item + "'");
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
  }
  if (out.empty()) throw UsageError("config: 'methods' is empty");
  return out;
}

}  // namespace detail

inline void set_config_value(Config& c, const std::string& key, const std::string& raw) {
  const std::string v = detail::trim(raw);
  if (key == "input") c.input = v;
  else if (key == "output_dir") c.output_dir = v;
  else if (key == "methods") c.methods = detail::parse_methods(v);
  else if (key == "grid_size") c.params.grid_size = detail::parse_int(key, v);
  else if (key == "block_size") c.params.block_size = detail::parse_int(key, v);
  else if (key == "search_range") c.params.search_range = detail::parse_int(key, v);
  else if (key == "knn") c.params.knn = detail::parse_int(key, v);
  else if (key == "update_variant") {
    if (v == "transpose") c.params.update = UpdateVariant::transpose;
    else if (v == "eq5") c.params.update = UpdateVariant::eq5;
    else throw UsageError("config: update_variant must be 'transpose' or 'eq5'");
  } else if (key == "distances") {
    if (v == "subpixel") c.params.distances = DistanceMode::subpixel;
    else if (v == "rounded") c.params.distances = DistanceMode::rounded;
    else throw UsageError("config: distances must be 'subpixel' or 'rounded'");
  } else if (key == "seed") {
    try {
      c.seed = std::stoull(v);
    } catch (const std::exception&) {
      throw UsageError("config: 'seed' expects a non-negative integer");
    }
  } else {
    throw UsageError("config: unknown key '" + key + "'");
  }
}

// key = value lines; '#' starts a comment.
inline void apply_config_text(Config& c, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(c, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

inline void apply_config_file(Config& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(c, ss.str());
}

inline void validate(const Config& c) {
  if (c.input.empty()) throw UsageError("no input given (set 'input' or --input)");
  const auto& p = c.params;
  if (p.grid_size < 2 || p.grid_size > 255) throw UsageError("grid_size must lie in [2,255]");
  if (p.block_size < 1 || p.block_size > 255) throw UsageError("block_size must lie in [1,255]");
  if (p.search_range < 0 || p.search_range > 127)
    throw UsageError("search_range must lie in [0,127]");
  if (p.knn < 1) throw UsageError("knn must be >= 1");
}

inline std::string methods_string(const std::vector<Method>& ms) {
  std::string s;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (i) s += ',';
    s += to_string(ms[i]);
  }
  return s;
}

// Canonical text form; reloading it reproduces the configuration. The output
// directory is left out so that reruns into different directories produce
// identical files.
inline std::string config_text(const Config& c) {
  std::ostringstream os;
  os << "input = " << c.input << '\n'
     << "methods = " << methods_string(c.methods) << '\n'
     << "grid_size = " << c.params.grid_size << '\n'
     << "block_size = " << c.params.block_size << '\n'
     << "search_range = " << c.params.search_range << '\n'
     << "knn = " << c.params.knn << '\n'
     << "update_variant = " << (c.params.update == UpdateVariant::transpose ? "transpose" : "eq5")
     << '\n'
     << "distances = " << (c.params.distances == DistanceMode::subpixel ? "subpixel" : "rounded")
     << '\n'
     << "seed = " << c.seed << '\n';
  return os.str();
}

inline Volume load_input(const Config& c) {
  if (c.input == "phantom") {
    PhantomSpec spec;
    spec.rng_seed = c.seed;
    return generate_phantom(spec).volume;
  }
  if (!std::filesystem::exists(c.input))
    throw UsageError("input '" + c.input + "' does not exist");
  return load_volume(c.input);
}

// ---------------------------------------------------------------------------
// Reports

struct ReportRow {
  std::string method;
  std::string pair_index;  // integer, or "mean" for the per-method summary
  double psnr_lp_db = 0.0;
  double hp_mean_energy = 0.0;
  double lp_entropy_bytes = 0.0;
  double hp_entropy_bytes = 0.0;
  std::size_t mvf_bytes = 0;
  bool is_summary() const { return pair_index == "mean"; }
};

inline constexpr std::string_view kReportColumns =
    "method,pair_index,psnr_lp_db,hp_mean_energy,lp_entropy_bytes,hp_entropy_bytes,mvf_bytes";

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline double parse_number(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw FormatError("report: bad number '" + s + "'");
  }
}

inline std::string report_text(const Config& c, const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "# mcwl report v1\n"
     << "# lp_psnr_reference = odd frame of each pair (first frame)\n"
     << "# psnr_lp_db summary = arithmetic mean of per-pair dB\n";
  std::istringstream cfg(config_text(c));
  for (std::string line; std::getline(cfg, line);) os << "# " << line << '\n';
  os << kReportColumns << '\n';
  for (const auto& r : rows)
    os << r.method << ',' << r.pair_index << ',' << format_number(r.psnr_lp_db) << ','
       << format_number(r.hp_mean_energy) << ',' << format_number(r.lp_entropy_bytes) << ','
       << format_number(r.hp_entropy_bytes) << ',' << r.mvf_bytes << '\n';
  return os.str();
}

inline std::vector<ReportRow> parse_report(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::vector<ReportRow> rows;
  bool header = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kReportColumns) throw FormatError("report: unexpected column header");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 7) throw FormatError("report: expected 7 fields in '" + line + "'");
    ReportRow r;
    r.method = f[0];
    r.pair_index = f[1];
    r.psnr_lp_db = parse_number(f[2]);
    r.hp_mean_energy = parse_number(f[3]);
    r.lp_entropy_bytes = parse_number(f[4]);
    r.hp_entropy_bytes = parse_number(f[5]);
    r.mvf_bytes = static_cast<std::size_t>(parse_number(f[6]));
    rows.push_back(std::move(r));
  }
  if (!header) throw FormatError("report: missing column header");
  return rows;
}

inline std::vector<ReportRow> load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read report '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_report(ss.str());
}

// ---------------------------------------------------------------------------
// decompose

struct MethodResult {
  Method method = Method::none;
  Decomposition decomposition;
  std::vector<std::vector<std::uint8_t>> mvf_records;  // per pair, empty for none
  std::vector<ReportRow> rows;                         // per pair, then summary
};

struct DecomposeResult {
  std::vector<MethodResult> methods;
  std::vector<ReportRow> rows;
  std::filesystem::path report_path;
};

inline std::filesystem::path method_dir(const std::filesystem::path& out, Method m) {
  return out / std::string(to_string(m));
}

inline MethodResult decompose_with(const Volume& v, Method m, const LiftingParams& params) {
  MethodResult r;
  r.method = m;
  r.decomposition = decompose_volume(v, m, params);
  if (compose_volume(r.decomposition, params) != v)
    throw ReconstructionError("method " + std::string(to_string(m)) +
                              ": reconstruction is not bit-exact");

  const auto& d = r.decomposition;
  const auto quality = lp_quality(d.lp, v);
  std::size_t mvf_total = 0;
  for (int t = 0; t < v.pair_count(); ++t) {
    const auto& mv = d.motion[static_cast<std::size_t>(t)];
    r.mvf_records.push_back(mv ? encode_mvf(*mv) : std::vector<std::uint8_t>{});
    ReportRow row;
    row.method = std::string(to_string(m));
    row.pair_index = std::to_string(t);
    row.psnr_lp_db = quality.per_pair_db[static_cast<std::size_t>(t)];
    row.hp_mean_energy = mean_energy(d.hp.frame(t));
    row.lp_entropy_bytes = entropy_bits(d.lp.frame(t)).bytes();
    row.hp_entropy_bytes = entropy_bits(d.hp.frame(t)).bytes();
    row.mvf_bytes = r.mvf_records.back().size();
    mvf_total += row.mvf_bytes;
    r.rows.push_back(row);
  }
  ReportRow sum;
  sum.method = std::string(to_string(m));
  sum.pair_index = "mean";
  sum.psnr_lp_db = quality.average_db;
  sum.hp_mean_energy = mean_energy(d.hp);
  sum.lp_entropy_bytes = entropy_bits(d.lp).bytes();
  sum.hp_entropy_bytes = entropy_bits(d.hp).bytes();
  sum.mvf_bytes = mvf_total;
  r.rows.push_back(sum);
  return r;
}

inline void write_method_artifacts(const MethodResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_volume(r.decomposition.lp, dir / "lp.mcwl");
  save_volume(r.decomposition.hp, dir / "hp.mcwl");
  if (r.method != Method::none) {
    std::vector<std::uint8_t> all;
    for (const auto& rec : r.mvf_records) all.insert(all.end(), rec.begin(), rec.end());
    detail::write_file(dir / "motion.mvf", all);
  }
}

// Writes J_P of every pair as "row col weight" text (graph method only).
inline void dump_graph_matrices(const MethodResult& r, int width, int height,
                                const LiftingParams& params, const std::filesystem::path& dir) {
  for (std::size_t t = 0; t < r.decomposition.motion.size(); ++t) {
    const auto& mv = r.decomposition.motion[t];
    if (!mv || !std::holds_alternative<MeshMVF>(*mv)) continue;
    const auto ops = graph_operators(std::get<MeshMVF>(*mv), width, height, params);
    std::ofstream os(dir / ("jp_pair" + std::to_string(t) + ".txt"));
    write_triplets(os, ops.jp);
  }
}

// Decomposes the input with every configured method, verifies bit-exact
// reconstruction and only then writes artifacts and report.csv.
inline DecomposeResult run_decompose(const Config& c, bool dump_matrices = false) {
  validate(c);
  const Volume v = load_input(c);
  DecomposeResult out;
  for (Method m : c.methods) out.methods.push_back(decompose_with(v, m, c.params));

  const MethodResult* mesh = nullptr;
  const MethodResult* graph = nullptr;
  for (const auto& r : out.methods) {
    if (r.method == Method::mesh) mesh = &r;
    if (r.method == Method::graph) graph = &r;
  }
  if (mesh && graph && mesh->mvf_records != graph->mvf_records)
    throw ReconstructionError("mesh and graph methods produced different motion fields");

  const std::filesystem::path dir = c.output_dir;
  std::filesystem::create_directories(dir);
  for (const auto& r : out.methods) {
    write_method_artifacts(r, method_dir(dir, r.method));
    if (dump_matrices && r.method == Method::graph)
      dump_graph_matrices(r, v.width(), v.height(), c.params, method_dir(dir, r.method));
    out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
  }
  {
    std::ofstream cfg(dir / "config.txt", std::ios::trunc);
    cfg << config_text(c);
  }
  out.report_path = dir / "report.csv";
  std::ofstream rep(out.report_path, std::ios::binary | std::ios::trunc);
  rep << report_text(c, out.rows);
  if (!rep) throw IoError("cannot write '" + out.report_path.string() + "'");
  return out;
}

// ---------------------------------------------------------------------------
// reconstruct

inline std::vector<AnyMvf> load_mvf_stream(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  std::vector<AnyMvf> out;
  std::size_t off = 0;
  while (off < bytes.size()) out.push_back(decode_mvf(bytes, off));
  return out;
}

// Rebuilds the input volume of one method from a decompose output directory.
inline Volume run_reconstruct(const std::filesystem::path& dir, Method m) {
  Config c;
  const auto cfg = dir / "config.txt";
  if (!std::filesystem::exists(cfg))
    throw UsageError("'" + dir.string() + "' has no config.txt; not a decompose output");
  apply_config_file(c, cfg);
  const auto mdir = method_dir(dir, m);
  if (!std::filesystem::exists(mdir / "lp.mcwl"))
    throw UsageError("no subbands for method '" + std::string(to_string(m)) + "' in " +
                     dir.string());
  Decomposition d;
  d.method = m;
  d.lp = load_volume(mdir / "lp.mcwl");
  d.hp = load_volume(mdir / "hp.mcwl");
  if (m == Method::none) {
    d.motion.assign(static_cast<std::size_t>(d.lp.frame_count()), std::nullopt);
  } else {
    for (auto& mv : load_mvf_stream(mdir / "motion.mvf")) d.motion.emplace_back(std::move(mv));
  }
  return compose_volume(d, c.params);
}

// ---------------------------------------------------------------------------
// compare

struct CompareRow {
  std::string label;
  double psnr_lp_db = 0.0;
  double hp_mean_energy = 0.0;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  std::vector<CompareRow> deltas;
};

// Difference that treats equal values (including equal infinities) as zero.
inline double delta(double a, double b) { return a == b ? 0.0 : a - b; }

// Tabulates the per-method summaries of two or more reports.
//
// When every report covers the same methods (re-runs of one experiment),
// the delta rows are last report minus first, per method. Otherwise the
// methods are merged into one table and the delta is proposed - baseline.
inline CompareResult run_compare(const std::vector<std::vector<ReportRow>>& reports,
                                 const std::string& proposed = "graph",
                                 const std::string& baseline = "mesh") {
  if (reports.size() < 2) throw UsageError("compare needs at least two reports");

  struct Summary {
    std::map<std::string, ReportRow> by_method;
    std::vector<std::string> order;
    std::set<std::string> pairs;
  };
  std::vector<Summary> sums;
  for (const auto& rep : reports) {
    Summary s;
    for (const auto& r : rep) {
      if (r.is_summary()) {
        if (!s.by_method.emplace(r.method, r).second)
          throw UsageError("report lists method '" + r.method + "' twice");
        s.order.push_back(r.method);
      } else {
        s.pairs.insert(r.pair_index);
      }
    }
    if (s.order.empty()) throw UsageError("report has no summary rows");
    sums.push_back(std::move(s));
  }
  for (const auto& s : sums)
    if (s.pairs != sums.front().pairs) throw UsageError("reports cover different pair sets");

  CompareResult out;
  const bool same_methods = std::all_of(sums.begin(), sums.end(), [&](const Summary& s) {
    return std::set<std::string>(s.order.begin(), s.order.end()) ==
           std::set<std::string>(sums.front().order.begin(), sums.front().order.end());
  });

  if (same_methods) {
    for (std::size_t k = 0; k < sums.size(); ++k)
      for (const auto& m : sums[k].order) {
        const auto& r = sums[k].by_method.at(m);
        out.rows.push_back({"#" + std::to_string(k + 1) + " " + m, r.psnr_lp_db, r.hp_mean_energy});
      }
    for (const auto& m : sums.front().order) {
      const auto& a = sums.back().by_method.at(m);
      const auto& b = sums.front().by_method.at(m);
      out.deltas.push_back({"delta " + m + " (last - first)", delta(a.psnr_lp_db, b.psnr_lp_db),
                            delta(a.hp_mean_energy, b.hp_mean_energy)});
    }
    return out;
  }

  std::map<std::string, ReportRow> merged;
  for (const auto& s : sums)
    for (const auto& m : s.order) {
      if (!merged.emplace(m, s.by_method.at(m)).second)
        throw UsageError("method '" + m + "' appears in more than one report");
      out.rows.push_back({m, s.by_method.at(m).psnr_lp_db, s.by_method.at(m).hp_mean_energy});
    }
  const auto p = merged.find(proposed);
  const auto b = merged.find(baseline);
  if (p == merged.end() || b == merged.end())
    throw UsageError("compare: reports must contain both '" + proposed + "' and '" + baseline + "'");
  out.deltas.push_back({"delta " + proposed + " - " + baseline,
                        delta(p->second.psnr_lp_db, b->second.psnr_lp_db),
                        delta(p->second.hp_mean_energy, b->second.hp_mean_energy)});
  return out;
}

inline std::string compare_table(const CompareResult& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-32s %14s %16s\n", "", "PSNR LP [dB]", "Mean energy HP");
  os << buf;
  auto line = [&](const CompareRow& row, bool signed_values) {
    const char* fmt = signed_values ? "%-32s %+14.2f %+16.2f\n" : "%-32s %14.2f %16.2f\n";
    std::snprintf(buf, sizeof buf, fmt, row.label.c_str(), row.psnr_lp_db, row.hp_mean_energy);
    os << buf;
  };
  for (const auto& row : r.rows) line(row, false);
  os << std::string(64, '-') << '\n';
  for (const auto& row : r.deltas) line(row, true);
  return os.str();
}

inline std::string compare_csv(const CompareResult& r) {
  std::ostringstream os;
  os << "label,psnr_lp_db,hp_mean_energy\n";
  for (const auto* group : {&r.rows, &r.deltas})
    for (const auto& row : *group)
      os << row.label << ',' << format_number(row.psnr_lp_db) << ','
         << format_number(row.hp_mean_energy) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// phantom

inline std::filesystem::path sidecar_path(const std::filesystem::path& volume_path) {
  auto p = volume_path;
  p += ".gt";
  return p;
}

inline Phantom run_phantom(const PhantomSpec& spec, const std::filesystem::path& out) {
  Phantom ph = generate_phantom(spec);
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  save_volume(ph.volume, out);
  save_displacement_sidecar(ph.pair_displacement, sidecar_path(out));
  return ph;
}

}  // namespace mcwl
