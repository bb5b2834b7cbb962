#include "tsxai/pipeline.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "tsxai/agreement.hpp"
#include "tsxai/checkpoint.hpp"
#include "tsxai/error.hpp"
#include "tsxai/figures.hpp"
#include "tsxai/recording_io.hpp"

#ifndef TSXAI_VERSION
#define TSXAI_VERSION "0.0.0"
#endif

namespace tsxai {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// value parsing and formatting

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    const auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <class T>
T parse_as(const std::string& key, const std::string& v) {
  if constexpr (std::is_same_v<T, bool>) return to_bool(key, v);
  else if constexpr (std::is_same_v<T, double>) return to_double(key, v);
  else return static_cast<T>(to_u64(key, v));
}

template <class T>
std::string format_as(const T& v) {
  if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
  else if constexpr (std::is_same_v<T, double>) return fmt(v);
  else return std::to_string(v);
}

std::vector<PlantedEffect> parse_effects(const std::string& key, const std::string& text) {
  // "F4+Fz:8:13:1.0:2.0, T6+O2:13:30:1.0:1.8"
  std::vector<PlantedEffect> effects;
  for (const auto& item : split_list(text, ',')) {
    const auto parts = split_list(item, ':');
    if (parts.size() != 5) throw ConfigError(key + ": effect '" + item + "' needs channels:low:high:control:case");
    PlantedEffect e;
    e.channels = split_list(parts[0], '+');
    if (e.channels.empty()) throw ConfigError(key + ": effect '" + item + "' names no channels");
    e.low_hz = to_double(key, parts[1]);
    e.high_hz = to_double(key, parts[2]);
    e.control_multiplier = to_double(key, parts[3]);
    e.case_multiplier = to_double(key, parts[4]);
    effects.push_back(std::move(e));
  }
  return effects;
}

std::string format_effects(const std::vector<PlantedEffect>& effects) {
  std::string out;
  for (const auto& e : effects) {
    if (!out.empty()) out += ", ";
    for (std::size_t i = 0; i < e.channels.size(); ++i) out += (i ? "+" : "") + e.channels[i];
    out += ":" + fmt(e.low_hz) + ":" + fmt(e.high_hz) + ":" + fmt(e.control_multiplier) + ":" + fmt(e.case_multiplier);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&, const fs::path&)> set;
  std::function<std::string(const PipelineConfig&)> get;
  bool hashed = true;
};

template <class T, class Access>
Field scalar(std::string key, Access access, bool hashed = true) {
  return {key,
          [key, access](PipelineConfig& c, const std::string& v, const fs::path&) { access(c) = parse_as<T>(key, v); },
          [access](const PipelineConfig& c) { return format_as<T>(access(c)); }, hashed};
}

template <class Access>
Field path_field(std::string key, Access access, bool hashed = true) {
  return {key,
          [access](PipelineConfig& c, const std::string& v, const fs::path& base) {
            fs::path p(v);
            access(c) = (p.is_relative() && !base.empty()) ? base / p : p;
          },
          [access](const PipelineConfig& c) { return access(c).string(); }, hashed};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(scalar<std::size_t>("cohort.subjects_per_class", [](auto& c) -> auto& { return c.cohort.subjects_per_class; }));
    f.push_back(scalar<double>("cohort.recording_seconds", [](auto& c) -> auto& { return c.cohort.recording_seconds; }));
    f.push_back(scalar<double>("cohort.sample_rate", [](auto& c) -> auto& { return c.cohort.sample_rate; }));
    f.push_back(scalar<double>("cohort.noise_exponent", [](auto& c) -> auto& { return c.cohort.noise_exponent; }));
    f.push_back(scalar<double>("cohort.background_rms", [](auto& c) -> auto& { return c.cohort.background_rms; }));
    f.push_back(scalar<double>("cohort.burst_amplitude", [](auto& c) -> auto& { return c.cohort.burst_amplitude; }));
    f.push_back(scalar<double>("cohort.subject_variability", [](auto& c) -> auto& { return c.cohort.subject_variability; }));
    f.push_back({"cohort.effects",
                 [](PipelineConfig& c, const std::string& v, const fs::path&) {
                   c.cohort.effects = parse_effects("cohort.effects", v);
                 },
                 [](const PipelineConfig& c) { return format_effects(c.cohort.effects); }});

    f.push_back(scalar<double>("preprocess.low_hz", [](auto& c) -> auto& { return c.low_hz; }));
    f.push_back(scalar<double>("preprocess.high_hz", [](auto& c) -> auto& { return c.high_hz; }));
    f.push_back(scalar<std::size_t>("preprocess.num_taps", [](auto& c) -> auto& { return c.num_taps; }));
    f.push_back(scalar<double>("preprocess.window_seconds", [](auto& c) -> auto& { return c.segmentation.window_seconds; }));
    f.push_back(scalar<double>("preprocess.overlap_seconds", [](auto& c) -> auto& { return c.segmentation.overlap_seconds; }));
    f.push_back(scalar<double>("preprocess.max_seconds", [](auto& c) -> auto& { return c.segmentation.max_seconds; }));

    f.push_back(scalar<std::size_t>("split.folds", [](auto& c) -> auto& { return c.folds; }));
    f.push_back(scalar<double>("split.validation_fraction", [](auto& c) -> auto& { return c.validation_fraction; }));

    f.push_back(scalar<std::size_t>("model.depth", [](auto& c) -> auto& { return c.model.depth; }));
    f.push_back(scalar<std::size_t>("model.filters", [](auto& c) -> auto& { return c.model.filters; }));
    f.push_back(scalar<std::size_t>("model.bottleneck_channels", [](auto& c) -> auto& { return c.model.bottleneck_channels; }));
    f.push_back(scalar<bool>("model.residual", [](auto& c) -> auto& { return c.model.residual; }));
    f.push_back({"model.kernel_lengths",
                 [](PipelineConfig& c, const std::string& v, const fs::path&) {
                   const auto parts = split_list(v, ',');
                   if (parts.size() != 3) throw ConfigError("model.kernel_lengths: expected three comma-separated lengths");
                   for (std::size_t i = 0; i < 3; ++i) c.model.kernel_lengths[i] = to_u64("model.kernel_lengths", parts[i]);
                 },
                 [](const PipelineConfig& c) {
                   const auto& k = c.model.kernel_lengths;
                   return std::to_string(k[0]) + "," + std::to_string(k[1]) + "," + std::to_string(k[2]);
                 }});

    f.push_back(scalar<double>("train.max_learning_rate", [](auto& c) -> auto& { return c.train.max_learning_rate; }));
    f.push_back(scalar<std::size_t>("train.batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
    f.push_back(scalar<std::size_t>("train.epochs", [](auto& c) -> auto& { return c.train.epochs; }));

    f.push_back({"explain.methods",
                 [](PipelineConfig& c, const std::string& v, const fs::path&) {
                   c.explain.methods.clear();
                   for (const auto& name : split_list(v, ',')) c.explain.methods.push_back(parse_method(name));
                 },
                 [](const PipelineConfig& c) {
                   std::string out;
                   for (Method m : c.explain.methods) out += (out.empty() ? "" : ",") + method_name(m);
                   return out;
                 }});
    f.push_back(scalar<std::size_t>("explain.ig_steps", [](auto& c) -> auto& { return c.explain.ig_steps; }));
    f.push_back(scalar<bool>("explain.ig_gaussian_baseline", [](auto& c) -> auto& { return c.explain.ig_gaussian_baseline; }));
    f.push_back(scalar<std::size_t>("explain.background_size", [](auto& c) -> auto& { return c.explain.background_size; }));
    f.push_back(scalar<std::size_t>("explain.occlusion_window", [](auto& c) -> auto& { return c.explain.occlusion.window; }));
    f.push_back(scalar<std::size_t>("explain.occlusion_stride", [](auto& c) -> auto& { return c.explain.occlusion.stride; }));
    f.push_back(scalar<double>("explain.occlusion_mask_value", [](auto& c) -> auto& { return c.explain.occlusion.mask_value; }));
    f.push_back({"explain.perturbation_target",
                 [](PipelineConfig& c, const std::string& v, const fs::path&) {
                   if (v == "probability") c.explain.occlusion.output = TargetOutput::kProbability;
                   else if (v == "logit") c.explain.occlusion.output = TargetOutput::kLogit;
                   else throw ConfigError("explain.perturbation_target: expected probability or logit");
                 },
                 [](const PipelineConfig& c) {
                   return std::string(c.explain.occlusion.output == TargetOutput::kLogit ? "logit" : "probability");
                 }});
    f.push_back(scalar<std::size_t>("explain.segments_per_subject", [](auto& c) -> auto& { return c.explain.segments_per_subject; }));
    f.push_back(scalar<std::size_t>("explain.max_segments", [](auto& c) -> auto& { return c.explain.max_segments; }));
    f.push_back(scalar<std::size_t>("explain.saved_maps_per_fold", [](auto& c) -> auto& { return c.explain.saved_maps_per_fold; }));
    f.push_back(scalar<std::size_t>("explain.band_taps", [](auto& c) -> auto& { return c.explain.band_taps; }));

    f.push_back({"report.profile_class",
                 [](PipelineConfig& c, const std::string& v, const fs::path&) {
                   try {
                     c.report.profile_class = parse_label(v);
                   } catch (const std::exception&) {
                     throw ConfigError("report.profile_class: expected case or control");
                   }
                 },
                 [](const PipelineConfig& c) { return label_name(c.report.profile_class); }});
    f.push_back(scalar<std::size_t>("report.jaccard_k", [](auto& c) -> auto& { return c.report.jaccard_k; }));
    f.push_back(path_field("report.regions_file", [](auto& c) -> auto& { return c.report.regions_file; }));
    f.push_back(path_field("report.adjacency_file", [](auto& c) -> auto& { return c.report.adjacency_file; }));

    f.push_back(scalar<std::uint64_t>("run.seed", [](auto& c) -> auto& { return c.seed; }));
    f.push_back(scalar<std::size_t>("run.jobs", [](auto& c) -> auto& { return c.jobs; }, false));
    f.push_back(path_field("run.output_dir", [](auto& c) -> auto& { return c.output_dir; }, false));
    return f;
  }();
  return table;
}

// Fields that follow from others.
void derive(PipelineConfig& c) {
  c.cohort.seed = c.seed;
  c.train.validation_fraction = c.validation_fraction;
  c.model.input_channels = kMontageChannels;
  c.model.input_length = static_cast<std::size_t>(std::llround(c.segmentation.window_seconds * c.cohort.sample_rate));
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 failed");
  }
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char buf[3];
  for (unsigned i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

// ---------------------------------------------------------------------------
// file helpers

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw DataError("missing directory " + dir.string() + " (run the previous stage first)");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no " + ext + " files in " + dir.string());
  return out;
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
  return out + "\n";
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must be stored by index.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// splits

struct SplitsFile {
  std::vector<SubjectInfo> subjects;
  std::vector<FoldPartition> partitions;
};

std::string splits_json(const std::vector<SubjectInfo>& subjects, const FoldSplit& split,
                        const std::vector<FoldPartition>& partitions, const PipelineConfig& c) {
  json j;
  j["folds"] = split.k;
  j["seed"] = c.seed;
  j["validation_fraction"] = c.validation_fraction;
  json subs = json::array();
  for (const auto& s : subjects) {
    int fold = -1;
    for (std::size_t f = 0; f < split.k; ++f)
      if (std::find(split.test_subjects[f].begin(), split.test_subjects[f].end(), s.id) != split.test_subjects[f].end())
        fold = static_cast<int>(f);
    subs.push_back({{"id", s.id}, {"label", label_name(s.label)}, {"test_fold", fold}});
  }
  j["subjects"] = subs;
  json parts = json::array();
  for (std::size_t f = 0; f < partitions.size(); ++f)
    parts.push_back({{"fold", f},
                     {"train", partitions[f].train},
                     {"validation", partitions[f].validation},
                     {"test", partitions[f].test}});
  j["partitions"] = parts;
  return j.dump(2) + "\n";
}

SplitsFile load_splits(const fs::path& path, std::size_t expected_folds) {
  if (!fs::exists(path)) throw DataError("missing " + path.string() + " (run split first)");
  const json j = read_json(path);
  SplitsFile s;
  try {
    for (const auto& sub : j.at("subjects"))
      s.subjects.push_back({sub.at("id").get<std::string>(), parse_label(sub.at("label").get<std::string>())});
    for (const auto& p : j.at("partitions"))
      s.partitions.push_back({p.at("train").get<std::vector<std::string>>(),
                              p.at("validation").get<std::vector<std::string>>(),
                              p.at("test").get<std::vector<std::string>>()});
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (s.partitions.size() != expected_folds)
    throw DataError("splits.json has " + std::to_string(s.partitions.size()) + " folds, configuration expects " +
                    std::to_string(expected_folds));
  for (std::size_t f = 0; f < s.partitions.size(); ++f) {
    if (s.partitions[f].test.empty()) throw DataError("fold " + std::to_string(f) + " has an empty test set");
    if (s.partitions[f].train.empty()) throw DataError("fold " + std::to_string(f) + " has an empty training set");
    check_subject_disjoint(s.partitions[f]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// segments

using SegmentsBySubject = std::map<std::string, std::vector<Segment>>;

SegmentsBySubject load_segments(const fs::path& dir, const SegmentationParams& params) {
  SegmentsBySubject out;
  for (const auto& path : files_with_extension(dir, ".tsrc")) {
    const Recording rec = read_recording(path);
    auto segs = segment_recording(rec, params);
    if (!out.emplace(rec.subject_id, std::move(segs)).second) throw DataError("duplicate subject " + rec.subject_id);
  }
  return out;
}

std::vector<Segment> gather(const SegmentsBySubject& all, const std::vector<std::string>& ids, int fold) {
  std::vector<Segment> out;
  for (const auto& id : ids) {
    const auto it = all.find(id);
    if (it == all.end()) throw DataError("no preprocessed recording for subject " + id);
    for (Segment s : it->second) {
      s.fold = fold;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::size_t label_index(ClassLabel l) { return static_cast<std::size_t>(l); }

std::string fold_name(std::size_t f) { return "fold" + std::to_string(f); }

fs::path checkpoint_path(std::size_t f) { return fs::path("models") / (fold_name(f) + ".itck"); }

/// `take` of `n` items spread evenly, in order.
std::vector<std::size_t> spread(std::size_t n, std::size_t take) {
  std::vector<std::size_t> out;
  if (take == 0 || take >= n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  for (std::size_t j = 0; j < take; ++j) out.push_back((2 * j + 1) * n / (2 * take));
  return out;
}

// ---------------------------------------------------------------------------
// regions / adjacency files

std::size_t configured_channel(const std::string& name, const std::string& where) {
  try {
    return channel_index(name);
  } catch (const std::invalid_argument&) {
    throw ConfigError(where + ": unknown channel '" + name + "'");
  }
}

RegionMap load_regions(const fs::path& path) {
  if (path.empty()) return default_regions();
  // "<name>: ch, ch, ..." per line
  RegionMap regions;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ConfigError(path.string() + ": expected '<region>: <channels>'");
    Region r{trim(line.substr(0, colon)), {}};
    for (const auto& ch : split_list(line.substr(colon + 1), ','))
      r.channels.push_back(configured_channel(ch, path.string()));
    regions.push_back(std::move(r));
  }
  try {
    validate_regions(regions, kMontageChannels);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return regions;
}

AdjacencyGraph load_adjacency(const fs::path& path) {
  if (path.empty()) return default_adjacency();
  // "A-B" per line
  std::vector<std::pair<std::string, std::string>> edges;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto parts = split_list(line, '-');
    if (parts.size() != 2) throw ConfigError(path.string() + ": expected 'A-B' per line, got '" + line + "'");
    edges.emplace_back(parts[0], parts[1]);
  }
  try {
    return make_adjacency(default_channel_names(), edges);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---------------------------------------------------------------------------

std::string tool_version() { return TSXAI_VERSION; }

std::string profile_key(Method method) {
  return method_name(method);
}

std::vector<std::string> agreement_methods(const ExplainConfig& config) {
  std::vector<std::string> out;
  for (Method m : config.methods) out.push_back(profile_key(m));
  return out;
}

void PipelineConfig::validate() const {
  if (cohort.subjects_per_class == 0) throw ConfigError("cohort.subjects_per_class must be positive");
  if (!(cohort.recording_seconds > 0.0)) throw ConfigError("cohort.recording_seconds must be positive");
  if (!(cohort.sample_rate > 0.0)) throw ConfigError("cohort.sample_rate must be positive");
  for (const auto& e : cohort.effects) {
    for (const auto& ch : e.channels) configured_channel(ch, "cohort.effects");
    if (!(e.low_hz >= 0.0 && e.low_hz < e.high_hz && e.high_hz < cohort.sample_rate / 2))
      throw ConfigError("cohort.effects: band edges must satisfy 0 <= low < high < fs/2");
    if (!(e.control_multiplier >= 0.0 && e.case_multiplier >= 0.0))
      throw ConfigError("cohort.effects: multipliers must be nonnegative");
  }
  if (!(segmentation.window_seconds > 0.0) || !(segmentation.overlap_seconds >= 0.0) ||
      !(segmentation.overlap_seconds < segmentation.window_seconds))
    throw ConfigError("preprocess: need window_seconds > overlap_seconds >= 0");
  if (segmentation.window_seconds > cohort.recording_seconds)
    throw ConfigError("preprocess.window_seconds exceeds cohort.recording_seconds");
  design_bandpass(low_hz, high_hz, cohort.sample_rate, num_taps);
  if (folds < 2) throw ConfigError("split.folds must be at least 2");
  if (folds > cohort.subjects_per_class)
    throw ConfigError("split.folds (" + std::to_string(folds) + ") exceeds subjects per class (" +
                      std::to_string(cohort.subjects_per_class) + "); some test folds would be empty");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
    throw ConfigError("split.validation_fraction must lie in (0, 1)");
  model.validate();
  train.validate();
  if (explain.methods.empty()) throw ConfigError("explain.methods must not be empty");
  std::set<Method> seen(explain.methods.begin(), explain.methods.end());
  if (seen.size() != explain.methods.size()) throw ConfigError("explain.methods lists a method twice");
  if (explain.ig_steps == 0) throw ConfigError("explain.ig_steps must be positive");
  if (explain.background_size == 0) throw ConfigError("explain.background_size must be positive");
  if (explain.occlusion.window == 0 || explain.occlusion.stride == 0 ||
      explain.occlusion.window > model.input_length)
    throw ConfigError("explain: occlusion window/stride must be positive and fit in a segment");
  if (explain.max_segments < folds) throw ConfigError("explain.max_segments must allow one segment per fold");
  if (explain.band_taps == 0 || explain.band_taps % 2 == 0) throw ConfigError("explain.band_taps must be odd");
  if (report.jaccard_k == 0 || report.jaccard_k > kMontageChannels)
    throw ConfigError("report.jaccard_k must lie in [1, 19]");
  for (const fs::path& p : {report.regions_file, report.adjacency_file})
    if (!p.empty() && !fs::is_regular_file(p)) throw ConfigError("referenced file does not exist: " + p.string());
  load_regions(report.regions_file);
  load_adjacency(report.adjacency_file);
  if (jobs == 0) throw ConfigError("run.jobs must be positive");
}

std::map<std::string, std::string> PipelineConfig::canonical() const {
  std::map<std::string, std::string> out;
  for (const Field& f : fields()) out[f.key] = f.get(*this);
  return out;
}

std::string PipelineConfig::hash() const {
  std::set<std::string> unhashed;
  for (const Field& f : fields())
    if (!f.hashed) unhashed.insert(f.key);
  std::string text;
  for (const auto& [key, value] : canonical())  // sorted by key, so source order never matters
    if (!unhashed.count(key)) text += key + "=" + value + "\n";
  return sha256_hex(text);
}

PipelineConfig parse_pipeline_config(std::istream& in, const fs::path& base_dir) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  std::map<std::string, const Field*> by_key;
  for (const Field& f : fields()) by_key[f.key] = &f;

  PipelineConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config: key '" + section + "' is outside any section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = by_key.find(full);
      if (it == by_key.end()) throw ConfigError("config: unknown key '" + key + "' in section [" + section + "]");
      it->second->set(config, trim(value.data()), base_dir);
    }
  }
  derive(config);
  config.validate();
  return config;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_pipeline_config(in, path.parent_path());
}

// ---------------------------------------------------------------------------

std::string RunManifest::to_json() const {
  json j;
  j["tool"] = tool;
  j["version"] = version;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["config"] = config;
  j["stage_seconds"] = stage_seconds;
  j["artifacts"] = artifacts;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    RunManifest m;
    m.tool = j.at("tool").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.stage_seconds = j.at("stage_seconds").get<std::map<std::string, double>>();
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  derive(config_);
  config_.validate();
  manifest_.version = tool_version();
  manifest_.config_hash = config_.hash();
  manifest_.seed = config_.seed;
  manifest_.config = config_.canonical();
  const fs::path existing = out() / "manifest.json";
  if (fs::exists(existing)) {
    const RunManifest prior = RunManifest::from_json(read_file(existing));
    if (prior.config_hash == manifest_.config_hash) {
      manifest_.stage_seconds = prior.stage_seconds;
      manifest_.artifacts = prior.artifacts;
    } else {
      spdlog::warn("configuration changed since the last run in {}; earlier stage records are dropped",
                   out().string());
    }
  }
}

void Pipeline::record(const fs::path& path) {
  const std::string rel = fs::relative(path, out()).generic_string();
  if (std::find(manifest_.artifacts.begin(), manifest_.artifacts.end(), rel) == manifest_.artifacts.end())
    manifest_.artifacts.push_back(rel);
}

void Pipeline::write_text(const fs::path& relative, const std::string& text) {
  const fs::path path = out() / relative;
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw DataError("cannot write " + path.string());
  record(path);
}

void Pipeline::finish_stage(const std::string& name, double seconds) {
  manifest_.stage_seconds[name] = seconds;
  std::erase_if(manifest_.artifacts, [&](const std::string& rel) { return !fs::exists(out() / rel); });
  std::sort(manifest_.artifacts.begin(), manifest_.artifacts.end());
  fs::create_directories(out());
  std::ofstream f(out() / "manifest.json", std::ios::binary);
  f << manifest_.to_json();
  if (!f) throw DataError("cannot write manifest.json");
  spdlog::info("{} finished in {:.1f} s", name, seconds);
}

// ---------------------------------------------------------------------------
// synth

void Pipeline::synth() {
  const auto t0 = std::chrono::steady_clock::now();
  spdlog::info("synth: {} subjects per class, {} s each", config_.cohort.subjects_per_class,
               config_.cohort.recording_seconds);
  const Cohort cohort = generate_synthetic_cohort(config_.cohort);
  fs::create_directories(out() / "recordings");
  for (const auto& rec : cohort.recordings) {
    const auto [data, sidecar] = write_recording(rec, out() / "recordings" / rec.subject_id);
    record(data);
    record(sidecar);
  }
  // Channel-profile layout; "source" replaces the attribution method.
  json gt;
  gt["level"] = level_name(ProfileLevel::kGlobal);
  gt["source"] = "planted";
  gt["label"] = label_name(ClassLabel::kCase);
  gt["folds"] = json::array();
  gt["channels"] = default_channel_names();
  gt["values"] = cohort.ground_truth;
  std::vector<std::string> planted;
  for (std::size_t c = 0; c < cohort.ground_truth.size(); ++c)
    if (cohort.ground_truth[c] > 0.0) planted.push_back(default_channel_names()[c]);
  gt["planted"] = planted;
  json effects = json::array();
  for (const auto& e : config_.cohort.effects)
    effects.push_back({{"channels", e.channels},
                       {"low_hz", e.low_hz},
                       {"high_hz", e.high_hz},
                       {"control_multiplier", e.control_multiplier},
                       {"case_multiplier", e.case_multiplier}});
  gt["effects"] = effects;
  write_text("ground_truth.json", gt.dump(2) + "\n");
  finish_stage("synth", seconds_since(t0));
}

// ---------------------------------------------------------------------------
// preprocess

void Pipeline::preprocess() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto inputs = files_with_extension(out() / "recordings", ".tsrc");
  fs::create_directories(out() / "preprocessed");
  for (const auto& path : inputs) {
    const Recording raw = read_recording(path);
    if (raw.sample_rate != config_.cohort.sample_rate)
      throw DataError(path.string() + ": sample rate differs from the configured " + fmt(config_.cohort.sample_rate));
    const Recording clean =
        common_average_reference(fir_bandpass(raw, config_.low_hz, config_.high_hz, config_.num_taps));
    const auto [data, sidecar] = write_recording(clean, out() / "preprocessed" / clean.subject_id);
    record(data);
    record(sidecar);
  }
  spdlog::info("preprocess: {} recordings", inputs.size());
  finish_stage("preprocess", seconds_since(t0));
}

// ---------------------------------------------------------------------------
// split

void Pipeline::split() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SubjectInfo> subjects;
  for (const auto& path : files_with_extension(out() / "preprocessed", ".json")) {
    const json side = read_json(path);
    try {
      subjects.push_back({side.at("subject_id").get<std::string>(), parse_label(side.at("label").get<std::string>())});
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  const FoldSplit split = stratified_subject_kfold(subjects, config_.folds, config_.seed + 1);
  std::vector<FoldPartition> partitions;
  for (std::size_t f = 0; f < split.k; ++f) {
    if (split.test_subjects[f].empty()) throw DataError("fold " + std::to_string(f) + " has an empty test set");
    partitions.push_back(fold_partition(split, subjects, f, config_.validation_fraction, config_.seed + 1));
    check_subject_disjoint(partitions.back());
  }
  write_text("splits.json", splits_json(subjects, split, partitions, config_));
  finish_stage("split", seconds_since(t0));
}

// ---------------------------------------------------------------------------
// train

void Pipeline::train() {
  const auto t0 = std::chrono::steady_clock::now();
  const SplitsFile splits = load_splits(out() / "splits.json", config_.folds);
  const SegmentsBySubject all = load_segments(out() / "preprocessed", config_.segmentation);

  static const std::vector<std::string> metric_columns = {"accuracy", "balanced_accuracy", "precision", "recall",
                                                          "f1",       "roc_auc",           "pr_auc"};
  std::vector<std::vector<double>> fold_metrics;
  std::string history = csv_row({"fold", "epoch", "train_loss", "validation_loss", "learning_rate"});
  std::string predictions = csv_row({"fold", "subject", "label", "p_control", "p_case", "predicted"});

  for (std::size_t f = 0; f < splits.partitions.size(); ++f) {
    const FoldPartition& part = splits.partitions[f];
    const int fold = static_cast<int>(f);
    auto train_segs = gather(all, part.train, fold);
    auto val_segs = gather(all, part.validation, fold);
    auto test_segs = gather(all, part.test, fold);
    const ZScoreStats stats = zscore_fit(train_segs);
    zscore_apply(stats, train_segs);
    zscore_apply(stats, val_segs);
    zscore_apply(stats, test_segs);

    TrainConfig tc = config_.train;
    tc.seed = config_.seed + 100 + f;
    const auto tf = std::chrono::steady_clock::now();
    const TrainedModel model = train_fold(train_segs, val_segs, tc, config_.model, stats, fold);
    spdlog::info("train: fold {} ({} segments) in {:.1f} s, best epoch {}", f, train_segs.size(), seconds_since(tf),
                 model.best_epoch);
    fs::create_directories(out() / "models");
    write_checkpoint(model, out() / checkpoint_path(f));
    record(out() / checkpoint_path(f));

    for (std::size_t e = 0; e < model.history.size(); ++e) {
      const auto& h = model.history[e];
      history += csv_row({std::to_string(f), std::to_string(e), fmt(h.train_loss), fmt(h.validation_loss),
                          fmt(h.learning_rate)});
    }

    std::map<std::string, std::vector<Segment>> by_subject;
    for (auto& s : test_segs) by_subject[s.subject_id].push_back(std::move(s));
    std::vector<SubjectPrediction> preds;
    std::vector<std::size_t> labels;
    for (const auto& id : part.test) {
      const auto& segs = by_subject.at(id);
      preds.push_back(predict_subject(model.network, segs));
      labels.push_back(label_index(segs.front().label));
      const auto& p = preds.back();
      predictions += csv_row({std::to_string(f), id, label_name(segs.front().label), fmt(p.probabilities[0]),
                              fmt(p.probabilities[1]), label_name(static_cast<ClassLabel>(p.label))});
    }
    const ClassificationMetrics m = classification_metrics(preds, labels);
    fold_metrics.push_back({m.accuracy, m.balanced_accuracy, m.precision, m.recall, m.f1, m.roc_auc, m.pr_auc});
    spdlog::info("train: fold {} accuracy {:.3f}, ROC AUC {:.3f}", f, m.accuracy, m.roc_auc);
  }

  std::vector<std::string> header = {"fold"};
  header.insert(header.end(), metric_columns.begin(), metric_columns.end());
  std::string metrics = csv_row(header);
  for (std::size_t f = 0; f < fold_metrics.size(); ++f) {
    std::vector<std::string> row = {std::to_string(f)};
    for (double v : fold_metrics[f]) row.push_back(fmt(v));
    metrics += csv_row(row);
  }
  std::vector<std::string> mean_row = {"mean"}, std_row = {"std"};
  const double n = static_cast<double>(fold_metrics.size());
  for (std::size_t c = 0; c < metric_columns.size(); ++c) {
    double mean = 0.0;
    for (const auto& r : fold_metrics) mean += r[c];
    mean /= n;
    double var = 0.0;
    for (const auto& r : fold_metrics) var += (r[c] - mean) * (r[c] - mean);
    mean_row.push_back(fmt(mean));
    std_row.push_back(fmt(std::sqrt(var / n)));
  }
  metrics += csv_row(mean_row) + csv_row(std_row);
  write_text("metrics/fold_metrics.csv", metrics);
  write_text("metrics/training_history.csv", history);
  write_text("metrics/subject_predictions.csv", predictions);
  finish_stage("train", seconds_since(t0));
}

// ---------------------------------------------------------------------------
// explain

namespace {

struct Selected {
  std::vector<const Segment*> segments;  // normalized copies owned by the fold
  std::vector<std::size_t> targets;
};

// Outputs of one method key accumulated over folds.
struct KeyOutputs {
  Method method;
  std::vector<SegmentProfile> profiles;
  std::vector<std::string> segment_rows;  // CSV rows
  std::map<int, RegionBandHeatmap> fold_heatmaps;
  std::vector<AttributionMap> saved;
  std::map<int, std::vector<double>> gradcam_temporal;  // fold -> mean curve (profile class)
};

std::string segment_row(const SegmentProfile& p, const Segment& s, std::size_t target) {
  std::vector<std::string> row = {segment_id(s), s.subject_id, label_name(s.label), std::to_string(p.fold),
                                  std::to_string(target)};
  for (double v : p.values) row.push_back(fmt(v));
  return csv_row(row);
}

RegionBandHeatmap mean_heatmap(const std::map<int, RegionBandHeatmap>& folds) {
  RegionBandHeatmap out = folds.begin()->second;
  for (auto& row : out.values) std::fill(row.begin(), row.end(), 0.0);
  for (const auto& [f, h] : folds)
    for (std::size_t r = 0; r < h.values.size(); ++r)
      for (std::size_t b = 0; b < h.values[r].size(); ++b)
        out.values[r][b] += h.values[r][b] / static_cast<double>(folds.size());
  return out;
}

}  // namespace

void Pipeline::explain(std::optional<Method> only) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExplainConfig& ec = config_.explain;
  std::vector<Method> methods = ec.methods;
  if (only) methods = {*only};

  // Validate every input before producing any output.
  const SplitsFile splits = load_splits(out() / "splits.json", config_.folds);
  for (std::size_t f = 0; f < splits.partitions.size(); ++f)
    if (!fs::exists(out() / checkpoint_path(f)))
      throw DataError("missing " + checkpoint_path(f).string() + " (run train first)");
  const SegmentsBySubject all = load_segments(out() / "preprocessed", config_.segmentation);

  std::vector<std::string> keys;
  std::map<std::string, KeyOutputs> outputs;
  for (Method m : methods) {
    keys.push_back(profile_key(m));
    outputs[profile_key(m)].method = m;
    if (m == Method::kIntegratedGradients && ec.ig_gaussian_baseline) {
      keys.push_back("ig_gaussian");
      outputs["ig_gaussian"].method = m;
    }
  }
  const std::vector<Band> bands = default_bands();
  const RegionMap regions = load_regions(config_.report.regions_file);
  const std::size_t per_fold_cap = (ec.max_segments + config_.folds - 1) / config_.folds;
  const double fs_hz = config_.cohort.sample_rate;

  for (std::size_t f = 0; f < splits.partitions.size(); ++f) {
    const int fold = static_cast<int>(f);
    const TrainedModel model = read_checkpoint(out() / checkpoint_path(f));
    if (model.config().input_length != config_.model.input_length)
      throw DataError(checkpoint_path(f).string() + " does not match the configured segment length");
    const auto& part = splits.partitions[f];

    auto test = gather(all, part.test, fold);
    zscore_apply(model.normalization, test);

    // Correctly classified segments, spread over each subject's recording, then round robin across subjects.
    std::vector<Tensor> windows;
    for (const auto& s : test) windows.push_back(s.window);
    const Tensor probs = evaluate_probabilities(model.network, stack(windows));
    std::map<std::string, std::vector<std::size_t>> correct;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const std::span<const double> row(probs.data() + i * 2, 2);
      if (argmax(row) == label_index(test[i].label)) correct[test[i].subject_id].push_back(i);
    }
    std::vector<std::vector<std::size_t>> queues;
    for (const auto& id : part.test) {
      const auto& idx = correct[id];
      std::vector<std::size_t> q;
      for (std::size_t j : spread(idx.size(), ec.segments_per_subject)) q.push_back(idx[j]);
      queues.push_back(std::move(q));
    }
    std::vector<std::size_t> chosen;
    for (std::size_t round = 0; chosen.size() < per_fold_cap; ++round) {
      bool any = false;
      for (const auto& q : queues) {
        if (round < q.size() && chosen.size() < per_fold_cap) {
          chosen.push_back(q[round]);
          any = true;
        }
      }
      if (!any) break;
    }
    std::sort(chosen.begin(), chosen.end());
    if (chosen.empty()) throw DataError("fold " + std::to_string(f) + ": no correctly classified test segments");
    Selected sel;
    for (std::size_t i : chosen) {
      sel.segments.push_back(&test[i]);
      sel.targets.push_back(label_index(test[i].label));
    }
    const std::size_t n = chosen.size();
    spdlog::info("explain: fold {} explaining {} of {} test segments", f, n, test.size());

    // DeepSHAP references: seeded draw of training segments.
    std::vector<Tensor> background;
    if (std::find(methods.begin(), methods.end(), Method::kDeepShap) != methods.end()) {
      auto train_segs = gather(all, part.train, fold);
      std::mt19937_64 rng(config_.seed + 200 + f);
      std::vector<std::size_t> order(train_segs.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t k = 0; k < std::min(ec.background_size, order.size()); ++k)
        background.push_back(zscore_apply(model.normalization, train_segs[order[k]].window));
    }
    // Normalized training data has zero mean and unit variance per channel.
    const BaselineSpec gaussian = BaselineSpec::gaussian(std::vector<double>(kMontageChannels, 0.0),
                                                         std::vector<double>(kMontageChannels, 1.0),
                                                         config_.seed + 300 + f);

    for (const std::string& key : keys) {
      KeyOutputs& ko = outputs[key];
      const auto tm = std::chrono::steady_clock::now();
      std::vector<AttributionMap> maps(n);
      std::vector<Tensor> cams;
      std::vector<SegmentProfile> profiles(n);

      auto make_map = [&](std::size_t i, Tensor values, std::string baseline) {
        AttributionMap m;
        m.method = ko.method;
        m.segment_id = segment_id(*sel.segments[i]);
        m.fold = fold;
        m.subject_id = sel.segments[i]->subject_id;
        m.label = sel.segments[i]->label;
        m.target = sel.targets[i];
        m.baseline = std::move(baseline);
        m.values = std::move(values);
        return m;
      };

      if (ko.method == Method::kPermutation) {
        std::vector<Tensor> batch;
        for (const Segment* s : sel.segments) batch.push_back(s->window);
        if (n < 2) throw DataError("fold " + std::to_string(f) + ": permutation needs at least two segments");
        const PermutationResult pr =
            permutation_importance(model.network, stack(batch), sel.targets, config_.seed + 400 + f, ec.occlusion.output);
        for (std::size_t i = 0; i < n; ++i) {
          SegmentProfile& p = profiles[i];
          p.method = Method::kPermutation;
          p.fold = fold;
          p.subject_id = sel.segments[i]->subject_id;
          p.label = sel.segments[i]->label;
          for (std::size_t c = 0; c < kMontageChannels; ++c)
            p.values.push_back(std::abs(pr.drops[i * kMontageChannels + c]));
        }
      } else {
        if (ko.method == Method::kGradCam) cams.resize(n);
        parallel_for(n, config_.jobs, [&](std::size_t i) {
          const Tensor& x = sel.segments[i]->window;
          const std::size_t target = sel.targets[i];
          switch (ko.method) {
            case Method::kIntegratedGradients:
              if (key == "ig_gaussian") {
                const Tensor base = gaussian.materialize(x.shape(), f * 1000003ULL + chosen[i]);
                maps[i] = make_map(i, integrated_gradients(model.network, x, base, ec.ig_steps, target),
                                   gaussian.descriptor());
              } else {
                maps[i] = make_map(i, integrated_gradients(model.network, x, Tensor(x.shape()), ec.ig_steps, target),
                                   "zero");
              }
              break;
            case Method::kInputXGradient:
              maps[i] = make_map(i, input_x_gradient(model.network, x, target), "none");
              break;
            case Method::kGradCam:
              // channel relevance comes from the Input x Gradient map; the CAM itself is temporal only
              maps[i] = make_map(i, input_x_gradient(model.network, x, target), "none");
              maps[i].method = Method::kInputXGradient;
              cams[i] = grad_cam(model.network, x, target);
              break;
            case Method::kDeepShap:
              maps[i] = make_map(i, deep_shap(model.network, x, background, target),
                                 BaselineSpec::background_set(background).descriptor());
              break;
            case Method::kOcclusion:
              maps[i] = make_map(i, occlusion(model.network, x, target, ec.occlusion), "mask:" + fmt(ec.occlusion.mask_value));
              break;
            case Method::kPermutation:
              break;
          }
          if (!maps[i].values.all_finite())
            throw NumericError(key + ": non-finite attribution for segment " + maps[i].segment_id);
          profiles[i] = segment_profile(maps[i]);
          profiles[i].method = ko.method;
        });
      }

      // Region x band heatmap over the profile class.
      if (ko.method != Method::kPermutation) {
        std::vector<AttributionMap> cls_maps;
        std::vector<Segment> cls_segs;
        for (std::size_t i = 0; i < n; ++i) {
          if (sel.segments[i]->label != config_.report.profile_class) continue;
          cls_maps.push_back(maps[i]);
          cls_segs.push_back(*sel.segments[i]);
        }
        if (!cls_maps.empty())
          ko.fold_heatmaps[fold] =
              band_region_heatmap(cls_maps, cls_segs, bands, regions, fs_hz, ec.band_taps);
      }
      if (!cams.empty()) {
        std::vector<double> curve(cams.front().size(), 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (sel.segments[i]->label != config_.report.profile_class) continue;
          for (std::size_t t = 0; t < curve.size(); ++t) curve[t] += cams[i][t];
          ++count;
        }
        if (count > 0) {
          for (double& v : curve) v /= static_cast<double>(count);
          ko.gradcam_temporal[fold] = std::move(curve);
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        ko.segment_rows.push_back(segment_row(profiles[i], *sel.segments[i], sel.targets[i]));
        ko.profiles.push_back(std::move(profiles[i]));
      }
      if (ko.method != Method::kPermutation) {
        for (std::size_t i = 0; i < std::min(n, ec.saved_maps_per_fold); ++i) {
          ko.saved.push_back(maps[i]);
          if (!cams.empty()) {
            AttributionMap cam = maps[i];
            cam.method = Method::kGradCam;
            cam.values = cams[i];
            cam.baseline = "none";
            ko.saved.push_back(std::move(cam));
          }
        }
      }
      spdlog::info("explain: fold {} {} in {:.1f} s", f, key, seconds_since(tm));
    }
  }

  // Persist.
  const auto names = default_channel_names();
  const std::vector<std::pair<std::string, std::optional<ClassLabel>>> classes = {
      {"case", ClassLabel::kCase}, {"control", ClassLabel::kControl}, {"all", std::nullopt}};
  for (const std::string& key : keys) {
    const KeyOutputs& ko = outputs[key];
    const fs::path dir = fs::path("profiles") / key;
    std::vector<std::string> header = {"segment", "subject", "label", "fold", "target"};
    header.insert(header.end(), names.begin(), names.end());
    write_text(dir / "segments.csv",
               csv_row(header) + std::accumulate(ko.segment_rows.begin(), ko.segment_rows.end(), std::string()));
    for (const auto& [cls, label] : classes) {
      std::vector<SegmentProfile> subset;
      for (const auto& p : ko.profiles)
        if (!label || p.label == *label) subset.push_back(p);
      if (subset.empty()) continue;
      for (const auto& [fold, profile] : fold_profiles(subset))
        write_text(dir / (fold_name(static_cast<std::size_t>(fold)) + "_" + cls + ".json"),
                   channel_profile_json(profile, names));
      write_text(dir / ("global_" + cls + ".json"),
                 channel_profile_json(aggregate(subset, ProfileLevel::kGlobal), names));
    }
    if (!ko.fold_heatmaps.empty()) {
      for (const auto& [fold, h] : ko.fold_heatmaps)
        write_text(fs::path("heatmaps") / key / (fold_name(static_cast<std::size_t>(fold)) + ".json"), heatmap_json(h));
      write_text(fs::path("heatmaps") / key / "global.json", heatmap_json(mean_heatmap(ko.fold_heatmaps)));
    }
    if (!ko.gradcam_temporal.empty()) {
      json j;
      j["label"] = label_name(config_.report.profile_class);
      for (const auto& [fold, curve] : ko.gradcam_temporal) j["folds"][fold_name(static_cast<std::size_t>(fold))] = curve;
      write_text(dir / "temporal.json", j.dump(2) + "\n");
    }
    for (const auto& m : ko.saved) {
      std::string stem = m.segment_id;
      std::replace(stem.begin(), stem.end(), '/', '_');
      if (m.method == Method::kGradCam) stem += "_cam";
      const fs::path rel = fs::path("attributions") / key / fold_name(static_cast<std::size_t>(m.fold)) / stem;
      fs::create_directories((out() / rel).parent_path());
      write_attribution_map(m, out() / rel);
      record(out() / (rel.string() + ".json"));
      record(out() / (rel.string() + ".bin"));
    }
  }
  finish_stage(only ? "explain:" + method_name(*only) : "explain", seconds_since(t0));
}

// ---------------------------------------------------------------------------
// report

namespace {

ChannelProfile load_profile(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("missing " + path.string() + " (run explain first)");
  return parse_channel_profile_json(read_file(path));
}

RegionBandHeatmap load_heatmap(const fs::path& path) {
  const json j = read_json(path);
  RegionBandHeatmap h;
  try {
    h.regions = j.at("regions").get<std::vector<std::string>>();
    for (const auto& b : j.at("bands"))
      h.bands.push_back({b.at("name").get<std::string>(), b.at("low_hz").get<double>(), b.at("high_hz").get<double>()});
    h.values = j.at("values").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return h;
}

}  // namespace

void Pipeline::report() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto names = default_channel_names();
  const std::string cls = label_name(config_.report.profile_class);
  const RegionMap regions = load_regions(config_.report.regions_file);
  const AdjacencyGraph graph = load_adjacency(config_.report.adjacency_file);
  const std::vector<std::string> methods = agreement_methods(config_.explain);
  if (methods.size() < 2) throw ConfigError("report compares methods and needs at least two in explain.methods");

  std::map<std::string, std::vector<std::vector<double>>> fold_values;
  std::map<std::string, std::vector<double>> global_values;
  // A fold contributes only if it had correctly classified segments of the profile class.
  std::vector<std::size_t> folds;
  for (std::size_t f = 0; f < config_.folds; ++f) {
    bool present = true;
    for (const auto& key : methods)
      present = present && fs::exists(out() / "profiles" / key / (fold_name(f) + "_" + cls + ".json"));
    if (present) folds.push_back(f);
    else spdlog::warn("report: fold {} has no {} profiles and is left out", f, cls);
  }
  if (folds.size() < 2)
    throw DataError("report needs " + cls + " profiles from at least two folds (run explain first)");
  for (const auto& key : methods) {
    const fs::path dir = out() / "profiles" / key;
    for (std::size_t f : folds)
      fold_values[key].push_back(load_profile(dir / (fold_name(f) + "_" + cls + ".json")).values);
    global_values[key] = load_profile(dir / ("global_" + cls + ".json")).values;
  }

  const AgreementReport rep =
      build_agreement_report(fold_values, global_values, names, regions, graph, config_.report.jaccard_k);
  write_text("reports/agreement.json", agreement_report_json(rep));
  write_text("reports/agreement_table.csv", agreement_table_csv(rep));

  auto matrix_csv = [&](const std::vector<std::vector<double>>& m) {
    std::vector<std::string> header = {"method"};
    header.insert(header.end(), rep.matrices.methods.begin(), rep.matrices.methods.end());
    std::string text = csv_row(header);
    for (std::size_t i = 0; i < m.size(); ++i) {
      std::vector<std::string> row = {rep.matrices.methods[i]};
      for (double v : m[i]) row.push_back(fmt(v));
      text += csv_row(row);
    }
    return text;
  };
  write_text("reports/kendall_tau.csv", matrix_csv(rep.matrices.tau));
  write_text("reports/jaccard_top" + std::to_string(rep.matrices.jaccard_k) + ".csv", matrix_csv(rep.matrices.jaccard));

  std::string consensus = csv_row({"rank", "channel", "score", "confidence"});
  for (std::size_t r = 0; r < rep.consensus.size(); ++r)
    consensus += csv_row({std::to_string(r + 1), names[rep.consensus[r].channel], fmt(rep.consensus[r].score),
                          fmt(rep.consensus[r].confidence)});
  write_text("reports/consensus.csv", consensus);

  // IG baseline stability, when both IG runs exist.
  const fs::path gauss_dir = out() / "profiles" / "ig_gaussian";
  if (global_values.count("ig") && fs::exists(gauss_dir)) {
    std::map<int, std::vector<double>> zero, gauss;
    for (std::size_t i = 0; i < folds.size(); ++i) {
      zero[static_cast<int>(folds[i])] = fold_values["ig"][i];
      gauss[static_cast<int>(folds[i])] = load_profile(gauss_dir / (fold_name(folds[i]) + "_" + cls + ".json")).values;
    }
    std::string text = csv_row({"fold", "kendall_tau", "jaccard_top1", "jaccard_top3", "jaccard_top5"});
    for (const auto& s : ig_baseline_stability(zero, gauss))
      text += csv_row({std::to_string(s.fold), fmt(s.tau), fmt(s.jaccard[0]), fmt(s.jaccard[1]), fmt(s.jaccard[2])});
    write_text("reports/ig_baseline_stability.csv", text);
  }

  // Planted-channel recovery against the synthetic ground truth.
  std::vector<bool> planted(names.size(), false);
  if (fs::exists(out() / "ground_truth.json")) {
    const json gt = read_json(out() / "ground_truth.json");
    for (const auto& ch : gt.at("planted")) planted[channel_index(ch.get<std::string>())] = true;
    std::string text = csv_row({"method", "channel", "rank"});
    auto add = [&](const std::string& method, const std::vector<std::size_t>& rank_of) {
      for (std::size_t c = 0; c < names.size(); ++c)
        if (planted[c]) text += csv_row({method, names[c], std::to_string(rank_of[c] + 1)});
    };
    for (const auto& key : methods) add(key, rank_profile(global_values[key]).rank_of());
    std::vector<std::size_t> consensus_rank(names.size());
    for (std::size_t r = 0; r < rep.consensus.size(); ++r) consensus_rank[rep.consensus[r].channel] = r;
    add("consensus", consensus_rank);
    write_text("reports/planted_recovery.csv", text);
  }

  // Figures.
  const auto coords = default_scalp_coordinates();
  for (const auto& key : methods) {
    for (const std::string c : {"case", "control"}) {
      const fs::path p = out() / "profiles" / key / ("global_" + c + ".json");
      if (!fs::exists(p)) continue;
      const auto values = load_profile(p).values;
      write_text("figures/profile_" + key + "_" + c + ".svg",
                 figures::bar_chart(key + " channel relevance (" + c + ")", names, values, planted));
    }
    write_text("figures/topomap_" + key + ".svg",
               figures::topomap(key + " scalp relevance (" + cls + ")", global_values[key], names, coords));
    const fs::path hm = out() / "heatmaps" / key / "global.json";
    if (fs::exists(hm)) {
      const RegionBandHeatmap h = load_heatmap(hm);
      std::vector<std::string> band_names;
      for (const auto& b : h.bands) band_names.push_back(b.name);
      double hi = 0.0;
      for (const auto& row : h.values) hi = std::max(hi, *std::max_element(row.begin(), row.end()));
      write_text("figures/region_band_" + key + ".svg",
                 figures::heatmap(key + " region x band relevance (" + cls + ")", h.regions, band_names, h.values, 0.0, hi));
    }
  }
  {
    const std::vector<std::string> axes = {"SRA", "regional SRA", "1 - CoV", "Gini", "STV"};
    std::map<std::string, std::vector<double>> series;
    for (const auto& [key, a] : rep.per_method)
      series[key] = {a.sra, a.regional_sra, std::clamp(1.0 - a.cov, 0.0, 1.0), a.gini, a.stv};
    write_text("figures/agreement_radar.svg", figures::radar("Stability and sparsity per method", axes, series));
  }
  write_text("figures/kendall_tau.svg", figures::heatmap("Kendall tau between global profiles", rep.matrices.methods,
                                                         rep.matrices.methods, rep.matrices.tau, -1.0, 1.0));
  write_text("figures/consensus.svg", figures::consensus_chart(rep.consensus, names));
  finish_stage("report", seconds_since(t0));
}

void Pipeline::run_all() {
  synth();
  preprocess();
  split();
  train();
  explain();
  report();
}

}  // namespace tsxai
