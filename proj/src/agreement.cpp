#include "tsxai/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace tsxai {
namespace {

void require_same_size(std::size_t a, std::size_t b, const char* op) {
  if (a != b) throw std::invalid_argument(std::string(op) + ": lists have different lengths");
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(std::span<const double> v) {
  const double m = mean_of(v);
  double sq = 0.0;
  for (double x : v) sq += (x - m) * (x - m);
  return std::sqrt(sq / static_cast<double>(v.size()));
}

// Counts inversions of `seq` while merge-sorting it.
std::uint64_t count_inversions(std::vector<std::size_t>& seq, std::vector<std::size_t>& scratch, std::size_t lo,
                               std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(seq, scratch, lo, mid) + count_inversions(seq, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (seq[i] <= seq[j]) {
      scratch[k++] = seq[i++];
    } else {
      inv += mid - i;
      scratch[k++] = seq[j++];
    }
  }
  while (i < mid) scratch[k++] = seq[i++];
  while (j < hi) scratch[k++] = seq[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            seq.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

std::vector<double> min_max(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = *hi - *lo;
  std::vector<double> out(v.size(), 0.0);
  if (range > 0.0)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
  return out;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::vector<std::size_t> RankedList::rank_of() const {
  std::vector<std::size_t> r(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) r[order[pos]] = pos;
  return r;
}

RankedList rank_profile(std::span<const double> profile) {
  RankedList out;
  out.order.resize(profile.size());
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](std::size_t a, std::size_t b) { return profile[a] > profile[b]; });
  return out;
}

RankedList ranked_list(std::vector<std::size_t> order) {
  std::vector<bool> seen(order.size(), false);
  for (std::size_t c : order) {
    if (c >= order.size() || seen[c]) throw std::invalid_argument("ranked_list: not a permutation");
    seen[c] = true;
  }
  return RankedList{std::move(order)};
}

double coefficient_of_variation(std::span<const std::vector<double>> folds) {
  if (folds.size() < 2) throw std::invalid_argument("coefficient_of_variation: need at least two folds");
  const std::size_t C = folds.front().size();
  for (const auto& f : folds) require_same_size(f.size(), C, "coefficient_of_variation");
  double total = 0.0;
  std::size_t kept = 0;
  std::vector<double> column(folds.size());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t f = 0; f < folds.size(); ++f) column[f] = folds[f][c];
    const double m = mean_of(column);
    if (std::abs(m) < 1e-12) continue;
    total += population_std(column) / m;
    ++kept;
  }
  if (kept == 0) throw std::invalid_argument("coefficient_of_variation: every channel has zero mean");
  return total / static_cast<double>(kept);
}

double gini_sparsity(std::span<const double> profile) {
  if (profile.empty()) throw std::invalid_argument("gini_sparsity: empty profile");
  std::vector<double> a(profile.begin(), profile.end());
  for (double v : a)
    if (v < 0.0 || !std::isfinite(v)) throw std::invalid_argument("gini_sparsity: values must be finite and >= 0");
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double weighted = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * a[i];
    sum += a[i];
  }
  if (sum <= 0.0) throw std::invalid_argument("gini_sparsity: all-zero profile");
  return weighted / (n * sum);
}

double jaccard_topk(const RankedList& a, const RankedList& b, std::size_t k) {
  require_same_size(a.size(), b.size(), "jaccard_topk");
  if (k == 0 || k > a.size()) throw std::invalid_argument("jaccard_topk: k out of range");
  std::vector<std::size_t> x(a.order.begin(), a.order.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::size_t> y(b.order.begin(), b.order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::vector<std::size_t> common;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(common));
  return static_cast<double>(common.size()) / static_cast<double>(2 * k - common.size());
}

double kendall_tau(const RankedList& a, const RankedList& b) {
  require_same_size(a.size(), b.size(), "kendall_tau");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("kendall_tau: need at least two items");
  const auto rank_b = b.rank_of();
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> seq(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    const std::size_t item = a.order[pos];
    if (item >= n || seen[item]) throw std::invalid_argument("kendall_tau: rankings cover different items");
    seen[item] = true;
    seq[pos] = rank_b[item];
  }
  std::vector<std::size_t> scratch(n);
  const double discordant = static_cast<double>(count_inversions(seq, scratch, 0, n));
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return (pairs - 2.0 * discordant) / pairs;
}

double sequential_rank_agreement(std::span<const RankedList> lists) {
  if (lists.size() < 2) throw std::invalid_argument("sequential_rank_agreement: need at least two lists");
  const std::size_t n = lists.front().size();
  for (const auto& l : lists) require_same_size(l.size(), n, "sequential_rank_agreement");
  if (n == 0) throw std::invalid_argument("sequential_rank_agreement: empty lists");
  double total = 0.0;
  for (std::size_t d = 1; d <= n; ++d) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < lists.size(); ++i)
      for (std::size_t j = i + 1; j < lists.size(); ++j, ++pairs) sum += jaccard_topk(lists[i], lists[j], d);
    total += sum / static_cast<double>(pairs);
  }
  return total / static_cast<double>(n);
}

std::vector<double> region_profile(std::span<const double> profile, const RegionMap& regions) {
  validate_regions(regions, profile.size());
  std::vector<double> out;
  for (const Region& r : regions) {
    double sum = 0.0;
    for (std::size_t c : r.channels) sum += profile[c];
    out.push_back(sum / static_cast<double>(r.channels.size()));
  }
  return out;
}

double regional_sra(std::span<const std::vector<double>> fold_profiles, const RegionMap& regions) {
  std::vector<RankedList> lists;
  for (const auto& p : fold_profiles) lists.push_back(rank_profile(region_profile(p, regions)));
  return sequential_rank_agreement(lists);
}

double spatial_temporal_variation(std::span<const double> profile, const AdjacencyGraph& graph) {
  if (profile.size() != graph.vertices.size())
    throw std::invalid_argument("spatial_temporal_variation: profile does not match graph vertices");
  if (graph.edges.empty()) throw std::invalid_argument("spatial_temporal_variation: graph has no edges");
  const auto a = min_max(profile);
  double total = 0.0;
  for (const auto& [i, j] : graph.edges) {
    if (i >= a.size() || j >= a.size()) throw std::invalid_argument("spatial_temporal_variation: edge out of range");
    total += std::abs(a[i] - a[j]);
  }
  return total / static_cast<double>(graph.edges.size());
}

std::vector<ConsensusEntry> consensus_profile(const std::map<std::string, std::vector<double>>& methods) {
  if (methods.size() < 2) throw std::invalid_argument("consensus_profile: need at least two methods");
  const std::size_t C = methods.begin()->second.size();
  if (C < 2) throw std::invalid_argument("consensus_profile: need at least two channels");
  std::vector<double> score(C, 0.0);
  std::vector<std::vector<double>> ranks(C);
  for (const auto& [name, profile] : methods) {
    require_same_size(profile.size(), C, "consensus_profile");
    const auto norm = min_max(profile);
    const auto rank = rank_profile(profile).rank_of();
    for (std::size_t c = 0; c < C; ++c) {
      score[c] += norm[c];
      ranks[c].push_back(static_cast<double>(rank[c]) / static_cast<double>(C - 1));
    }
  }
  for (double& s : score) s /= static_cast<double>(methods.size());
  std::vector<ConsensusEntry> out;
  for (std::size_t c : rank_profile(score).order) out.push_back({c, score[c], 1.0 - population_std(ranks[c])});
  return out;
}

MethodMatrices pairwise_method_matrices(const std::map<std::string, std::vector<double>>& methods,
                                        std::size_t jaccard_k) {
  if (methods.size() < 2) throw std::invalid_argument("pairwise_method_matrices: need at least two methods");
  MethodMatrices m;
  m.jaccard_k = jaccard_k;
  std::vector<RankedList> lists;
  for (const auto& [name, profile] : methods) {
    m.methods.push_back(name);
    lists.push_back(rank_profile(profile));
  }
  const std::size_t M = lists.size();
  m.tau.assign(M, std::vector<double>(M, 1.0));
  m.jaccard.assign(M, std::vector<double>(M, 1.0));
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = i + 1; j < M; ++j) {
      m.tau[i][j] = m.tau[j][i] = kendall_tau(lists[i], lists[j]);
      m.jaccard[i][j] = m.jaccard[j][i] = jaccard_topk(lists[i], lists[j], std::min(jaccard_k, lists[i].size()));
    }
  }
  return m;
}

MethodAgreement method_agreement(std::span<const std::vector<double>> folds, const RegionMap& regions,
                                 const AdjacencyGraph& graph) {
  if (folds.size() < 2) throw std::invalid_argument("method_agreement: need at least two folds");
  MethodAgreement out;
  std::vector<RankedList> lists;
  for (const auto& p : folds) {
    lists.push_back(rank_profile(p));
    out.gini += gini_sparsity(p);
    out.stv += spatial_temporal_variation(p, graph);
  }
  out.gini /= static_cast<double>(folds.size());
  out.stv /= static_cast<double>(folds.size());
  out.sra = sequential_rank_agreement(lists);
  out.regional_sra = regional_sra(folds, regions);
  out.cov = coefficient_of_variation(folds);
  return out;
}

AgreementReport build_agreement_report(const std::map<std::string, std::vector<std::vector<double>>>& fold_profiles,
                                       const std::map<std::string, std::vector<double>>& global_profiles,
                                       const std::vector<std::string>& channel_names, const RegionMap& regions,
                                       const AdjacencyGraph& graph, std::size_t jaccard_k) {
  AgreementReport report;
  report.channel_names = channel_names;
  for (const auto& [method, folds] : fold_profiles) report.per_method[method] = method_agreement(folds, regions, graph);
  report.matrices = pairwise_method_matrices(global_profiles, jaccard_k);
  report.consensus = consensus_profile(global_profiles);
  return report;
}

std::string agreement_report_json(const AgreementReport& report) {
  nlohmann::ordered_json j;
  j["channels"] = report.channel_names;
  auto& methods = j["methods"];
  methods = nlohmann::ordered_json::object();
  for (const auto& [name, m] : report.per_method) {
    methods[name] = {{"sra", m.sra}, {"regional_sra", m.regional_sra}, {"cov", m.cov}, {"gini", m.gini},
                     {"stv", m.stv}};
  }
  j["matrix_methods"] = report.matrices.methods;
  j["kendall_tau"] = report.matrices.tau;
  j["jaccard_k"] = report.matrices.jaccard_k;
  j["jaccard"] = report.matrices.jaccard;
  auto& consensus = j["consensus"];
  consensus = nlohmann::ordered_json::array();
  for (const auto& e : report.consensus) {
    consensus.push_back({{"channel", report.channel_names.at(e.channel)}, {"score", e.score},
                         {"confidence", e.confidence}});
  }
  return j.dump(2) + "\n";
}

std::string agreement_table_csv(const AgreementReport& report) {
  std::string out = "method,sra,regional_sra,cov,gini,stv\n";
  for (const auto& [name, m] : report.per_method) {
    out += name;
    for (double v : {m.sra, m.regional_sra, m.cov, m.gini, m.stv}) out += "," + format_number(v);
    out += "\n";
  }
  return out;
}

}  // namespace tsxai
