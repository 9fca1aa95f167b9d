#pragma once

// Batch scoring and top-K subset selection.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefrank/core.hpp"
#include "prefrank/trainer.hpp"

namespace prefrank {

struct ScoredRecord {
  std::string candidate_id;
  std::string group_id;
  double mu1 = 0.0;
  double mu2 = 0.0;
  double mu_agg = 0.0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double sigma_agg = 0.0;
  std::uint64_t checkpoint_digest = 0;

  friend bool operator==(const ScoredRecord&, const ScoredRecord&) = default;
};

// Sorted by candidate_id; DuplicateId if an id repeats.
std::vector<ScoredRecord> score_batch(const TrainedModel& model,
                                      std::span<const EditCandidate> candidates,
                                      std::uint64_t checkpoint_digest);
std::vector<ScoredRecord> score_groups(const TrainedModel& model,
                                       std::span<const CheckedGroup> groups,
                                       std::uint64_t checkpoint_digest);

enum class SelectionMode { Mean, LowerConfidence };

std::string to_string(SelectionMode m);
SelectionMode parse_selection_mode(const std::string& s);

struct SelectionConfig {
  std::size_t k = 0;
  SelectionMode mode = SelectionMode::Mean;
  // Lower-confidence key is mu_agg - lambda * sigma_agg.
  double lambda = 1.0;
};

double selection_key(const ScoredRecord& r, const SelectionConfig& config);

struct SubsetRecord {
  ScoredRecord record;
  std::size_t rank = 0;  // 1-based
  double key = 0.0;
};

// Highest key first; equal keys fall back to ascending candidate_id.
std::vector<SubsetRecord> select_topk(std::span<const ScoredRecord> records,
                                      const SelectionConfig& config);

nlohmann::ordered_json to_json(const ScoredRecord& r);
ScoredRecord scored_record_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const SubsetRecord& r,
                               const SelectionConfig& config);

void write_scored(const std::filesystem::path& path,
                  std::span<const ScoredRecord> records);
std::vector<ScoredRecord> read_scored(const std::filesystem::path& path);
void write_subset(const std::filesystem::path& path,
                  std::span<const SubsetRecord> subset,
                  const SelectionConfig& config);
// Subset files carry every scored field, so they read back as scored records.
std::vector<ScoredRecord> read_subset(const std::filesystem::path& path);

}  // namespace prefrank
