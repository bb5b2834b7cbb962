// Command-line front end for the synthetic EEG attribution pipeline.
#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "tsxai/error.hpp"
#include "tsxai/pipeline.hpp"
#include "tsxai/tensor.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::string method;
  bool quiet = false;
};

tsxai::PipelineConfig resolve(const Options& opt) {
  tsxai::PipelineConfig cfg = opt.config.empty() ? tsxai::PipelineConfig{} : tsxai::load_pipeline_config(opt.config);
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  if (const char* env = std::getenv("TSXAI_OUT"); env != nullptr && *env != '\0') cfg.output_dir = env;
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.jobs) cfg.jobs = *opt.jobs;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  tsxai::tune_allocator();
  CLI::App app{"Train InceptionTime on synthetic EEG cohorts and compare attribution methods"};
  app.set_version_flag("--version", tsxai::tool_version());
  app.require_subcommand(1);

  Options opt;
  const std::vector<std::pair<std::string, std::string>> stages = {
      {"synth", "generate a synthetic cohort with planted channel effects"},
      {"preprocess", "band-pass filter and re-reference every recording"},
      {"split", "assign subjects to stratified cross-validation folds"},
      {"train", "train one model per fold and write classification metrics"},
      {"explain", "compute attribution maps and channel profiles"},
      {"report", "agreement metrics, consensus ranking and figures"},
      {"all", "run every stage in order"},
  };
  for (const auto& [name, help] : stages) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", opt.config, "INI configuration file")->check(CLI::ExistingFile);
    sub->add_option("-o,--out", opt.out, "output directory (TSXAI_OUT overrides)");
    sub->add_option("--seed", opt.seed, "master seed");
    sub->add_option("-j,--jobs", opt.jobs, "worker threads for attribution")->check(CLI::PositiveNumber);
    sub->add_flag("-q,--quiet", opt.quiet, "only log warnings and errors");
    if (name == "explain") sub->add_option("-m,--method", opt.method, "run a single attribution method");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (opt.quiet) spdlog::set_level(spdlog::level::warn);

  try {
    tsxai::Pipeline pipeline(resolve(opt));
    const std::string stage = app.get_subcommands().front()->get_name();
    if (stage == "synth") pipeline.synth();
    else if (stage == "preprocess") pipeline.preprocess();
    else if (stage == "split") pipeline.split();
    else if (stage == "train") pipeline.train();
    else if (stage == "explain")
      pipeline.explain(opt.method.empty() ? std::nullopt : std::optional(tsxai::parse_method(opt.method)));
    else if (stage == "report") pipeline.report();
    else pipeline.run_all();
  } catch (const tsxai::ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const tsxai::DataError& e) {
    spdlog::error("data error: {}", e.what());
    return 3;
  } catch (const tsxai::NumericError& e) {
    spdlog::error("numeric error: {}", e.what());
    return 4;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
