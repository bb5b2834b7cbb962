#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tsxai/montage.hpp"

namespace tsxai {

/// Channel indices ordered best first: descending value, ties by ascending index.
struct RankedList {
  std::vector<std::size_t> order;

  std::size_t size() const noexcept { return order.size(); }
  /// rank_of()[c] = 0-based position of item c.
  std::vector<std::size_t> rank_of() const;
};

RankedList rank_profile(std::span<const double> profile);
/// Throws std::invalid_argument unless `order` is a permutation of 0..n-1.
RankedList ranked_list(std::vector<std::size_t> order);

/// Mean over channels of population-std / mean across folds; channels with mean < 1e-12 are skipped.
double coefficient_of_variation(std::span<const std::vector<double>> fold_profiles);

/// Gini coefficient of a nonnegative profile; 0 for uniform, (n-1)/n for one-hot.
double gini_sparsity(std::span<const double> profile);

double jaccard_topk(const RankedList& a, const RankedList& b, std::size_t k);

/// Kendall tau-a via merge-sort inversion counting.
double kendall_tau(const RankedList& a, const RankedList& b);

/// Mean over depths d = 1..n of the mean pairwise Jaccard of the top-d sets.
double sequential_rank_agreement(std::span<const RankedList> lists);

/// Mean member-channel value for every region.
std::vector<double> region_profile(std::span<const double> profile, const RegionMap& regions);

/// SRA over region rankings of each fold profile.
double regional_sra(std::span<const std::vector<double>> fold_profiles, const RegionMap& regions);

/// Mean absolute difference of min-max normalized values across graph edges; 0 for a flat profile.
double spatial_temporal_variation(std::span<const double> profile, const AdjacencyGraph& graph);

struct ConsensusEntry {
  std::size_t channel = 0;
  double score = 0.0;       // mean of min-max normalized method profiles
  double confidence = 0.0;  // 1 - population std of normalized ranks across methods
};

/// Entries sorted by descending score (ties by ascending channel).
std::vector<ConsensusEntry> consensus_profile(const std::map<std::string, std::vector<double>>& method_profiles);

struct MethodMatrices {
  std::vector<std::string> methods;
  std::vector<std::vector<double>> tau;
  std::vector<std::vector<double>> jaccard;
  std::size_t jaccard_k = 10;
};

MethodMatrices pairwise_method_matrices(const std::map<std::string, std::vector<double>>& method_profiles,
                                        std::size_t jaccard_k = 10);

struct MethodAgreement {
  double sra = 0.0;
  double regional_sra = 0.0;
  double cov = 0.0;
  double gini = 0.0;  // mean over folds
  double stv = 0.0;   // mean over folds
};

/// The five stability statistics of one method from its fold profiles.
MethodAgreement method_agreement(std::span<const std::vector<double>> fold_profiles, const RegionMap& regions,
                                 const AdjacencyGraph& graph);

struct AgreementReport {
  std::vector<std::string> channel_names;
  std::map<std::string, MethodAgreement> per_method;
  MethodMatrices matrices;
  std::vector<ConsensusEntry> consensus;
};

/// Full report from per-method fold profiles (method -> fold -> profile) and global profiles.
AgreementReport build_agreement_report(const std::map<std::string, std::vector<std::vector<double>>>& fold_profiles,
                                       const std::map<std::string, std::vector<double>>& global_profiles,
                                       const std::vector<std::string>& channel_names, const RegionMap& regions,
                                       const AdjacencyGraph& graph, std::size_t jaccard_k = 10);

std::string agreement_report_json(const AgreementReport& report);
/// One row per method: method,sra,regional_sra,cov,gini,stv.
std::string agreement_table_csv(const AgreementReport& report);

}  // namespace tsxai
