#pragma once

// On-disk formats and the synthetic dataset generator.
//
// Feature file (bit-exact, little-endian):
//   "PRFT" | u32 version (1) | u64 count | u32 dim | count x dim x f32
// so its length is always 20 + count * dim * 4 bytes. A sibling
// "<stem>.index.jsonl" maps rows to ids, one {"row": i, "candidate_id": id}
// object per line, in row order.
//
// Manifest: JSONL, one object per line with group_id, candidate_id,
// generator_tag and optional z1, z2 (together) and annotator_id. A candidate
// rated by several annotators appears on several lines.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefrank/core.hpp"

namespace prefrank {

inline constexpr char kFeatureMagic[4] = {'P', 'R', 'F', 'T'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 20;

inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kFeatureFile = "features.prft";
inline constexpr const char* kTruthFile = "truth.jsonl";
inline constexpr const char* kTuplesFile = "tuples.jsonl";
inline constexpr const char* kTruthTuplesFile = "truth_tuples.jsonl";

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      const std::string& bytes);

struct FeatureTable {
  std::uint32_t dim = 0;
  std::vector<std::string> ids;
  // Row-major, ids.size() x dim.
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * dim, dim);
  }
};

std::string encode_feature_file(std::uint32_t dim,
                                std::span<const float> values);
// Returns (dim, values); HeaderCorrupt unless the length matches the header.
std::pair<std::uint32_t, std::vector<float>> decode_feature_file(
    const std::string& bytes);

std::filesystem::path index_path_for(const std::filesystem::path& feature_path);

void write_features(const std::filesystem::path& feature_path,
                    const FeatureTable& table);
FeatureTable read_features(const std::filesystem::path& feature_path);

struct ManifestRecord {
  std::string group_id;
  std::string candidate_id;
  std::string generator_tag;
  std::optional<int> z1;
  std::optional<int> z2;
  std::optional<std::string> annotator_id;

  friend bool operator==(const ManifestRecord&,
                         const ManifestRecord&) = default;
};

ManifestRecord parse_manifest_line(const std::string& line,
                                   std::size_t line_no);
std::string manifest_line(const ManifestRecord& record);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

// Joins manifest rows with feature rows by candidate_id. Groups come back
// sorted by group_id.
std::vector<CheckedGroup> load_dataset(const std::filesystem::path& manifest,
                                       const std::filesystem::path& features);
// <dir>/manifest.jsonl + <dir>/features.prft
std::vector<CheckedGroup> load_dataset_dir(const std::filesystem::path& dir);

// Features are stored as f32; values not representable in f32 are rounded.
void write_dataset(std::span<const CheckedGroup> groups,
                   const std::filesystem::path& manifest,
                   const std::filesystem::path& features);

std::vector<RankTuple> read_tuples(const std::filesystem::path& path);
void write_tuples(const std::filesystem::path& path,
                  std::span<const RankTuple> tuples);

struct SyntheticSpec {
  std::size_t n_groups = 100;
  std::size_t candidates_per_group = 7;
  std::size_t dim = 16;
  // Latent noise: q_d = w_d . x + noise_sigma * eps.
  double noise_sigma = 0.2;
  // Per-annotation noise on the standardized latent before quantization.
  double annotator_noise = 0.0;
  // Per-group, per-dimension offset (annotator leniency) before quantization.
  double group_bias_sigma = 0.0;
  std::array<double, 3> thresholds = {-1.0, 0.0, 1.0};
  std::uint64_t seed = 0;
  // Unit-norm random directions drawn from the seed when absent.
  std::optional<std::array<std::vector<double>, 2>> true_weights;

  void validate() const;
};

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SyntheticSpec& spec);

struct TruthRecord {
  std::string group_id;
  std::string candidate_id;
  double q1 = 0.0;
  double q2 = 0.0;

  double aggregate() const { return q1 + q2; }
  friend bool operator==(const TruthRecord&, const TruthRecord&) = default;
};

struct SyntheticDataset {
  std::vector<CheckedGroup> groups;
  std::vector<TruthRecord> truth;
  std::array<std::vector<double>, 2> weights;
};

// Features x ~ N(0, I) (rounded to f32), latent q_d = w_d . x + noise, and
// Likert z_d = quantize(q_d / sd(q_d) + bias + annotator noise).
SyntheticDataset gen_synthetic(const SyntheticSpec& spec);

int quantize_likert(double value, const std::array<double, 3>& thresholds);

void write_truth(const std::filesystem::path& path,
                 std::span<const TruthRecord> truth);
std::vector<TruthRecord> read_truth(const std::filesystem::path& path);

// Writes manifest, features + index, truth table, annotation-ordered tuples
// and latent-ordered tuples into `dir`.
void write_synthetic(const std::filesystem::path& dir,
                     const SyntheticDataset& dataset,
                     std::size_t tuples_per_group_per_k = 2,
                     std::uint64_t tuple_seed = 0);

}  // namespace prefrank
