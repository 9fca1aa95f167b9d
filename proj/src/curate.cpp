#include "prefrank/curate.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "prefrank/data.hpp"
#include "prefrank/digest.hpp"

namespace prefrank {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<ScoredRecord> score_batch(const TrainedModel& model,
                                      std::span<const EditCandidate> candidates,
                                      std::uint64_t checkpoint_digest) {
  std::vector<ScoredRecord> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (c.dim() != model.params.architecture().input_dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "candidate " + c.candidate_id() + " has feature length " +
                      std::to_string(c.dim()) + ", model expects " +
                      std::to_string(model.params.architecture().input_dim));
    }
    const GaussianScore s = model.score(c.feature());
    out.push_back({c.candidate_id(), c.group_id(), s.mu()[0], s.mu()[1],
                   s.mu_agg(), s.sigma()[0], s.sigma()[1], s.sigma_agg(),
                   checkpoint_digest});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.candidate_id < b.candidate_id;
  });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].candidate_id == out[i - 1].candidate_id) {
      throw Error(ErrorCode::DuplicateId,
                  "candidate " + out[i].candidate_id + " scored twice");
    }
  }
  return out;
}

std::vector<ScoredRecord> score_groups(const TrainedModel& model,
                                       std::span<const CheckedGroup> groups,
                                       std::uint64_t checkpoint_digest) {
  std::vector<EditCandidate> all;
  for (const auto& g : groups) {
    all.insert(all.end(), g.candidates().begin(), g.candidates().end());
  }
  return score_batch(model, all, checkpoint_digest);
}

std::string to_string(SelectionMode m) {
  return m == SelectionMode::Mean ? "mean" : "lower_confidence";
}

SelectionMode parse_selection_mode(const std::string& s) {
  if (s == "mean") return SelectionMode::Mean;
  if (s == "lower_confidence" || s == "lcb") return SelectionMode::LowerConfidence;
  throw Error(ErrorCode::InvalidConfig, "unknown selection mode '" + s + "'");
}

double selection_key(const ScoredRecord& r, const SelectionConfig& config) {
  if (config.mode == SelectionMode::Mean) return r.mu_agg;
  return r.mu_agg - config.lambda * r.sigma_agg;
}

std::vector<SubsetRecord> select_topk(std::span<const ScoredRecord> records,
                                      const SelectionConfig& config) {
  if (config.k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (config.k > records.size()) {
    throw Error(ErrorCode::KTooLarge,
                "k = " + std::to_string(config.k) + " exceeds " +
                    std::to_string(records.size()) + " candidates");
  }
  if (!std::isfinite(config.lambda) || config.lambda < 0.0) {
    throw Error(ErrorCode::InvalidArgument,
                "lambda must be finite and >= 0, got " +
                    std::to_string(config.lambda));
  }
  std::set<std::string> seen;
  std::vector<SubsetRecord> keyed;
  keyed.reserve(records.size());
  for (const auto& r : records) {
    if (!seen.insert(r.candidate_id).second) {
      throw Error(ErrorCode::DuplicateId,
                  "candidate " + r.candidate_id + " listed twice");
    }
    const double key = selection_key(r, config);
    if (!std::isfinite(key)) {
      throw Error(ErrorCode::InvalidArgument,
                  "candidate " + r.candidate_id + " has a non-finite score");
    }
    keyed.push_back({r, 0, key});
  }
  std::sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    if (a.key != b.key) return a.key > b.key;
    return a.record.candidate_id < b.record.candidate_id;
  });
  keyed.resize(config.k);
  for (std::size_t i = 0; i < keyed.size(); ++i) keyed[i].rank = i + 1;
  return keyed;
}

ordered_json to_json(const ScoredRecord& r) {
  ordered_json j;
  j["candidate_id"] = r.candidate_id;
  j["group_id"] = r.group_id;
  j["mu1"] = r.mu1;
  j["mu2"] = r.mu2;
  j["mu_agg"] = r.mu_agg;
  j["sigma1"] = r.sigma1;
  j["sigma2"] = r.sigma2;
  j["sigma_agg"] = r.sigma_agg;
  j["checkpoint_digest"] = digest_hex(r.checkpoint_digest);
  return j;
}

ScoredRecord scored_record_from_json(const json& j) {
  ScoredRecord r;
  try {
    r.candidate_id = j.at("candidate_id").get<std::string>();
    r.group_id = j.at("group_id").get<std::string>();
    r.mu1 = j.at("mu1").get<double>();
    r.mu2 = j.at("mu2").get<double>();
    r.mu_agg = j.at("mu_agg").get<double>();
    r.sigma1 = j.at("sigma1").get<double>();
    r.sigma2 = j.at("sigma2").get<double>();
    r.sigma_agg = j.at("sigma_agg").get<double>();
    const auto hex = j.at("checkpoint_digest").get<std::string>();
    std::size_t used = 0;
    r.checkpoint_digest = std::stoull(hex, &used, 16);
    if (used != hex.size()) throw std::invalid_argument(hex);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("scored record: ") + e.what());
  } catch (const std::logic_error& e) {
    throw Error(ErrorCode::ParseError,
                std::string("scored record: bad checkpoint_digest ") + e.what());
  }
  return r;
}

ordered_json to_json(const SubsetRecord& r, const SelectionConfig& config) {
  ordered_json j = to_json(r.record);
  j["k"] = config.k;
  j["rank"] = r.rank;
  j["selection_mode"] = to_string(config.mode);
  if (config.mode == SelectionMode::LowerConfidence) j["lambda"] = config.lambda;
  j["selection_key"] = r.key;
  return j;
}

namespace {

std::vector<ScoredRecord> read_records(const std::filesystem::path& path,
                                       const std::string& what) {
  std::istringstream in(read_file_bytes(path));
  std::vector<ScoredRecord> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, what + " line " +
                                             std::to_string(line_no) + ": " +
                                             e.what());
    }
    try {
      out.push_back(scored_record_from_json(j));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError,
                  what + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

void write_scored(const std::filesystem::path& path,
                  std::span<const ScoredRecord> records) {
  std::string text;
  for (const auto& r : records) text += to_json(r).dump() + "\n";
  write_file_bytes(path, text);
}

std::vector<ScoredRecord> read_scored(const std::filesystem::path& path) {
  return read_records(path, "scored");
}

void write_subset(const std::filesystem::path& path,
                  std::span<const SubsetRecord> subset,
                  const SelectionConfig& config) {
  std::string text;
  for (const auto& r : subset) text += to_json(r, config).dump() + "\n";
  write_file_bytes(path, text);
}

std::vector<ScoredRecord> read_subset(const std::filesystem::path& path) {
  return read_records(path, "subset");
}

}  // namespace prefrank
