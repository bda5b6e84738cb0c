// mcwl: motion-compensated wavelet lifting of image volumes.
//
//   mcwl phantom     --output vol.mcwl [--width 128 --height 128 --frames 4 ...]
//   mcwl decompose   --config run.cfg | --input vol.mcwl [--output-dir out ...]
//   mcwl reconstruct --dir out --method graph --output rec.mcwl [--reference vol.mcwl]
//   mcwl compare     a/report.csv b/report.csv [--csv summary.csv]
//
// Exit codes: 0 ok, 1 reconstruction failure, 2 usage error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mcwl/pipeline.hpp"

namespace {

struct DecomposeFlags {
  std::string config;
  std::optional<std::string> input, output_dir, methods, update_variant, distances;
  std::optional<int> grid_size, block_size, search_range, knn;
  std::optional<std::uint64_t> seed;
  bool dump_matrices = false;
};

mcwl::Config build_config(const DecomposeFlags& f) {
  mcwl::Config c;
  if (!f.config.empty()) mcwl::apply_config_file(c, f.config);
  auto set = [&c](const char* key, const auto& v) {
    if (!v) return;
    if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, std::string>)
      mcwl::set_config_value(c, key, *v);
    else
      mcwl::set_config_value(c, key, std::to_string(*v));
  };
  set("input", f.input);
  set("output_dir", f.output_dir);
  set("methods", f.methods);
  set("update_variant", f.update_variant);
  set("distances", f.distances);
  set("grid_size", f.grid_size);
  set("block_size", f.block_size);
  set("search_range", f.search_range);
  set("knn", f.knn);
  set("seed", f.seed);
  return c;
}

int cmd_decompose(const DecomposeFlags& f) {
  const auto cfg = build_config(f);
  const auto result = mcwl::run_decompose(cfg, f.dump_matrices);
  std::printf("%-6s %6s %12s %14s %10s\n", "method", "pair", "PSNR LP[dB]", "HP energy", "MVF bytes");
  for (const auto& r : result.rows)
    std::printf("%-6s %6s %12s %14s %10zu\n", r.method.c_str(), r.pair_index.c_str(),
                mcwl::format_number(r.psnr_lp_db).c_str(),
                mcwl::format_number(r.hp_mean_energy).c_str(), r.mvf_bytes);
  std::printf("reconstruction verified; report written to %s\n", result.report_path.c_str());
  return mcwl::kExitOk;
}

int cmd_reconstruct(const std::string& dir, const std::string& method, const std::string& output,
                    const std::string& reference) {
  const auto m = mcwl::parse_method(method);
  if (!m) throw mcwl::UsageError("unknown method '" + method + "'");
  const auto v = mcwl::run_reconstruct(dir, *m);
  if (!output.empty()) mcwl::save_volume(v, output);
  if (!reference.empty()) {
    if (!std::filesystem::exists(reference))
      throw mcwl::UsageError("reference '" + reference + "' does not exist");
    if (mcwl::load_volume(reference) != v) {
      std::fprintf(stderr, "reconstruction differs from %s\n", reference.c_str());
      return mcwl::kExitReconstruction;
    }
    std::printf("reconstruction matches %s bit-exactly\n", reference.c_str());
  }
  return mcwl::kExitOk;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& csv,
                const std::string& proposed, const std::string& baseline) {
  std::vector<std::vector<mcwl::ReportRow>> reports;
  for (const auto& p : paths) reports.push_back(mcwl::load_report(p));
  const auto r = mcwl::run_compare(reports, proposed, baseline);
  std::cout << mcwl::compare_table(r);
  if (!csv.empty()) {
    std::ofstream os(csv, std::ios::binary | std::ios::trunc);
    if (!os) throw mcwl::IoError("cannot write '" + csv + "'");
    os << mcwl::compare_csv(r);
  }
  return mcwl::kExitOk;
}

int cmd_phantom(const mcwl::PhantomSpec& spec, const std::string& output) {
  mcwl::run_phantom(spec, output);
  std::printf("wrote %s and %s\n", output.c_str(), mcwl::sidecar_path(output).c_str());
  return mcwl::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Motion-compensated wavelet lifting for image volumes"};
  app.require_subcommand(1);

  mcwl::PhantomSpec spec;
  std::string phantom_out;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic deformable phantom");
  phantom->add_option("--output,-o", phantom_out, "Output volume file")->required();
  phantom->add_option("--width", spec.width)->capture_default_str();
  phantom->add_option("--height", spec.height)->capture_default_str();
  phantom->add_option("--frames", spec.frame_count)->capture_default_str();
  phantom->add_option("--blobs", spec.blob_count)->capture_default_str();
  phantom->add_option("--amplitude", spec.contraction_amplitude,
                      "Max displacement in pixels (<= 8)")->capture_default_str();
  phantom->add_option("--noise", spec.noise_sigma)->capture_default_str();
  phantom->add_option("--seed", spec.rng_seed)->capture_default_str();

  DecomposeFlags df;
  auto* decompose = app.add_subcommand("decompose", "One temporal Haar step with each method");
  decompose->add_option("--config,-c", df.config, "key = value configuration file");
  decompose->add_option("--input,-i", df.input, "Input volume, or 'phantom'");
  decompose->add_option("--output-dir,-o", df.output_dir);
  decompose->add_option("--methods", df.methods, "Comma list of none,block,mesh,graph");
  decompose->add_option("--grid-size", df.grid_size);
  decompose->add_option("--block-size", df.block_size);
  decompose->add_option("--search-range", df.search_range);
  decompose->add_option("--knn", df.knn);
  decompose->add_option("--update-variant", df.update_variant, "transpose or eq5");
  decompose->add_option("--distances", df.distances, "subpixel or rounded");
  decompose->add_option("--seed", df.seed);
  decompose->add_flag("--dump-matrices", df.dump_matrices,
                      "Write J_P of each pair as text triplets (graph method)");

  std::string rec_dir, rec_method, rec_out, rec_ref;
  auto* reconstruct = app.add_subcommand("reconstruct", "Invert a decompose output");
  reconstruct->add_option("--dir,-d", rec_dir, "decompose output directory")->required();
  reconstruct->add_option("--method,-m", rec_method)->required();
  reconstruct->add_option("--output,-o", rec_out, "Reconstructed volume file");
  reconstruct->add_option("--reference,-r", rec_ref, "Volume to compare against");

  std::vector<std::string> cmp_paths;
  std::string cmp_csv, cmp_proposed = "graph", cmp_baseline = "mesh";
  auto* compare = app.add_subcommand("compare", "Tabulate reports with a delta row");
  compare->add_option("reports", cmp_paths, "report.csv files")->required()->expected(2, -1);
  compare->add_option("--csv", cmp_csv, "Also write the table as CSV");
  compare->add_option("--proposed", cmp_proposed)->capture_default_str();
  compare->add_option("--baseline", cmp_baseline)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? mcwl::kExitOk : mcwl::kExitUsage;
  }

  try {
    if (*phantom) return cmd_phantom(spec, phantom_out);
    if (*decompose) return cmd_decompose(df);
    if (*reconstruct) return cmd_reconstruct(rec_dir, rec_method, rec_out, rec_ref);
    if (*compare) return cmd_compare(cmp_paths, cmp_csv, cmp_proposed, cmp_baseline);
  } catch (const mcwl::ReconstructionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return mcwl::kExitReconstruction;
  } catch (const mcwl::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return mcwl::kExitUsage;
  } catch (const mcwl::InvalidArgument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return mcwl::kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return mcwl::kExitUsage;
  }
  return mcwl::kExitUsage;
}
