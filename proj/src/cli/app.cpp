#include <filesystem>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "augkit/cli.hpp"
#include "augkit/error.hpp"
#include "augkit/imaging.hpp"
#include "augkit/png_io.hpp"
#include "augkit/tensor_io.hpp"

namespace augkit::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct Args {
  std::optional<fs::path> manifest, config, out;
  std::optional<uint64_t> seed;
  std::optional<unsigned> threads;

  std::optional<double> iou_thresh, canny_sigma, canny_low, canny_high;
  std::optional<fs::path> emb_src, emb_gen, records;
  std::optional<uint64_t> pairs;
  std::optional<double> kernel_sigma;
  std::optional<std::string> k_list;

  std::optional<std::string> mode;
  std::optional<fs::path> style, cache;

  std::optional<int> d;
  std::optional<std::string> grid;
  std::optional<double> eps, tolerance;
  bool corrupt_grad = false;

  std::optional<fs::path> in;
  std::optional<double> sigma, low, high;
};

std::vector<int> parse_k_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("--k expects a comma-separated list of integers, got \"" + s + "\"");
    }
  }
  return out;
}

std::pair<int, int> parse_grid(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t a = 0, b = 0;
    const int h = std::stoi(s.substr(0, x), &a);
    const int w = std::stoi(s.substr(x + 1), &b);
    if (a != x || b != s.size() - x - 1) throw std::invalid_argument(s);
    return {h, w};
  } catch (const std::exception&) {
    throw ValidationError("--grid expects HxW, got \"" + s + "\"");
  }
}

Config resolve_config(const Args& a) {
  Config c = a.config ? Config::load(*a.config) : Config{};
  if (a.seed) c.seed = *a.seed;
  if (a.threads) c.threads = *a.threads;
  if (a.iou_thresh) c.structure.iou_threshold = *a.iou_thresh;
  if (a.canny_sigma) c.structure.canny.sigma = *a.canny_sigma;
  if (a.canny_low) c.structure.canny.low = *a.canny_low;
  if (a.canny_high) c.structure.canny.high = *a.canny_high;
  if (a.pairs) c.distribution.diversity_pairs = *a.pairs;
  if (a.kernel_sigma) c.distribution.kernel.sigma = *a.kernel_sigma;
  if (a.k_list) c.text.k = parse_k_list(*a.k_list);
  if (a.mode) c.prompt.mode = *a.mode;
  if (a.d) {
    c.pam.model.d = *a.d;
    c.pam.model.context_dim = *a.d;
    c.pam.model.timestep_dim = *a.d;
    c.pam.model.text_dim = *a.d;
  }
  if (a.grid) std::tie(c.pam.height, c.pam.width) = parse_grid(*a.grid);
  if (a.eps) c.pam.eps = *a.eps;
  if (a.tolerance) c.pam.tolerance = *a.tolerance;
  c.validate();
  return c;
}

const fs::path& require(const std::optional<fs::path>& p, const char* flag) {
  if (!p) throw ValidationError(std::string("missing required option ") + flag);
  return *p;
}

void emit(const std::optional<fs::path>& out_path, const std::string& text, std::ostream& out) {
  if (out_path) {
    tensorio::write_file_atomic(*out_path, text);
  } else {
    out << text;
  }
}

int exit_code_for(const Error& e) { return static_cast<int>(e.kind()); }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Evaluation, prompt generation and PAM numerics for condition-guided "
               "driving-scene augmentation"};
  app.require_subcommand(1);
  app.fallthrough();
  Args a;
  app.add_option("--manifest", a.manifest, "Pair manifest JSON");
  app.add_option("--config", a.config, "Config JSON (overrides defaults)");
  app.add_option("--out", a.out, "Output file (stdout when omitted)");
  app.add_option("--seed", a.seed, "Root seed");
  app.add_option("--threads", a.threads, "Worker threads");

  auto* validate = app.add_subcommand("validate", "Check every artifact of a manifest");
  auto* structure = app.add_subcommand("eval-structure", "mIoU, depth RMSE, edge L1, object F1");
  auto* distribution = app.add_subcommand("eval-distribution", "CMMD, LPIPS and MS-SSIM");
  auto* text = app.add_subcommand("eval-text", "R-Precision over alignment records");
  auto* all = app.add_subcommand("eval", "All metric families");
  auto* prompt = app.add_subcommand("prompt-gen", "Training or evaluation prompts");
  auto* pamcheck = app.add_subcommand("pam-check", "Finite-difference check of the PAM backward");
  auto* canny = app.add_subcommand("canny", "Canny edge map of one image");

  for (auto* sub : {structure, all}) {
    sub->add_option("--iou-thresh", a.iou_thresh, "Box IoU threshold");
    sub->add_option("--canny-sigma", a.canny_sigma, "Canny Gaussian sigma");
    sub->add_option("--canny-low", a.canny_low, "Canny low threshold");
    sub->add_option("--canny-high", a.canny_high, "Canny high threshold");
  }
  for (auto* sub : {distribution, all}) {
    sub->add_option("--embeddings-src", a.emb_src, "ACTF [N,d] embeddings of originals");
    sub->add_option("--embeddings-gen", a.emb_gen, "ACTF [M,d] embeddings of generations");
    sub->add_option("--pairs", a.pairs, "Diversity pair count");
    sub->add_option("--kernel-sigma", a.kernel_sigma, "RBF bandwidth");
  }
  for (auto* sub : {text, all}) {
    sub->add_option("--records", a.records, "ACTF [N,C,d] alignment records");
    sub->add_option("--k", a.k_list, "Comma-separated K values");
  }
  prompt->add_option("--mode", a.mode, "train or eval");
  prompt->add_option("--style", a.style, "Style dictionary JSON");
  prompt->add_option("--cache", a.cache, "Caption cache JSONL (resume mode)");
  pamcheck->add_option("--d", a.d, "Feature width D");
  pamcheck->add_option("--grid", a.grid, "Grid as HxW");
  pamcheck->add_option("--eps", a.eps, "Finite-difference step");
  pamcheck->add_option("--tolerance", a.tolerance, "Maximum relative error");
  pamcheck->add_flag("--corrupt-grad", a.corrupt_grad, "Perturb the analytic gradient");
  canny->add_option("--in", a.in, "Input PNG");
  canny->add_option("--sigma", a.sigma, "Gaussian sigma");
  canny->add_option("--low", a.low, "Low threshold");
  canny->add_option("--high", a.high, "High threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    const Config config = resolve_config(a);
    if (validate->parsed()) {
      int errors = 0;
      const auto rep = run_validate(require(a.manifest, "--manifest"), &errors);
      emit(a.out, rep.dump(2) + "\n", out);
      for (const auto& e : rep["errors"]) {
        err << "pair " << (e["pair_id"].is_null() ? std::string("-") : e["pair_id"].dump())
            << ": " << e["file"].get<std::string>() << ": " << e["message"].get<std::string>()
            << "\n";
      }
      return errors == 0 ? 0 : 1;
    }
    unsigned families = 0;
    if (structure->parsed()) families = static_cast<unsigned>(Families::kStructure);
    if (distribution->parsed()) families = static_cast<unsigned>(Families::kDistribution);
    if (text->parsed()) families = static_cast<unsigned>(Families::kText);
    if (all->parsed()) families = static_cast<unsigned>(Families::kAll);
    if (families != 0) {
      EvalInputs in{require(a.manifest, "--manifest"), a.emb_src, a.emb_gen, a.records};
      const auto outcome = run_eval(in, config, families);
      emit(a.out, outcome.report.dump(2) + "\n", out);
      if (outcome.failure != 0) {
        err << "error: " << outcome.report["error"]["message"].get<std::string>()
            << " (partial report)\n";
      }
      return outcome.failure;
    }
    if (prompt->parsed()) {
      const auto run = run_prompt({require(a.manifest, "--manifest"), a.style, a.cache}, config);
      std::string lines;
      for (const auto& r : run.records) lines += promptgen::to_json_line(r) + "\n";
      emit(a.out, lines, out);
      for (const auto& w : run.warnings) err << "warning: " << w << "\n";
      const ordered_json summary{{"records", run.records.size()},
                                 {"regenerations", run.regenerations},
                                 {"cache_hits", run.cache_hits},
                                 {"warnings", run.warnings.size()}};
      (a.out ? out : err) << summary.dump() << "\n";
      return 0;
    }
    if (pamcheck->parsed()) {
      const auto rep = run_pam_check(config, {a.corrupt_grad});
      emit(a.out, rep.dump(2) + "\n", out);
      if (!rep["pass"].get<bool>()) {
        err << "error: max relative error " << rep["max_rel_error"].get<double>()
            << " exceeds tolerance " << config.pam.tolerance << "\n";
        return static_cast<int>(ErrorKind::kMetric);
      }
      return 0;
    }
    if (canny->parsed()) {
      imaging::CannyParams p = config.structure.canny;
      if (a.sigma) p.sigma = *a.sigma;
      if (a.low) p.low = *a.low;
      if (a.high) p.high = *a.high;
      const auto gray = imaging::to_grayscale(tensorio::read_png(require(a.in, "--in")));
      const auto edges = imaging::canny(gray, p);
      tensorio::write_png(imaging::edge_map_to_image(edges), require(a.out, "--out"));
      return 0;
    }
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kIo);
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kValidation);
  }
}

}  // namespace augkit::cli
