#include "prefrank/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "prefrank/eval.hpp"

namespace prefrank {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  const std::string text = read_file_bytes(path);
  std::vector<std::string> lines;
  std::istringstream ss(text);
  for (std::string line; std::getline(ss, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

json parse_json_line(const std::string& line, std::size_t line_no,
                     const std::string& what) {
  try {
    json j = json::parse(line);
    if (!j.is_object()) {
      throw Error(ErrorCode::ParseError, what + " line " +
                                             std::to_string(line_no) +
                                             ": expected a JSON object");
    }
    return j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError,
                what + " line " + std::to_string(line_no) + ": " + e.what());
  }
}

template <typename T>
T required(const json& j, const char* key, std::size_t line_no,
           const std::string& what) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw Error(ErrorCode::ParseError, what + " line " +
                                           std::to_string(line_no) +
                                           ": missing key '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ParseError, what + " line " +
                                           std::to_string(line_no) +
                                           ": wrong type for '" + key + "'");
  }
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l;
    out += '\n';
  }
  return out;
}

}  // namespace

std::string encode_feature_file(std::uint32_t dim,
                                std::span<const float> values) {
  if (dim == 0 || values.size() % dim != 0) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature values do not form rows of width " +
                    std::to_string(dim));
  }
  detail::ByteWriter w;
  w.bytes(std::string_view(kFeatureMagic, 4));
  w.u32(kFeatureVersion);
  w.u64(values.size() / dim);
  w.u32(dim);
  for (float v : values) w.f32(v);
  return w.data();
}

std::pair<std::uint32_t, std::vector<float>> decode_feature_file(
    const std::string& bytes) {
  detail::ByteReader r(bytes, ErrorCode::HeaderCorrupt, "feature file");
  if (r.bytes(4) != std::string_view(kFeatureMagic, 4)) {
    throw Error(ErrorCode::HeaderCorrupt, "feature file: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kFeatureVersion) {
    throw Error(ErrorCode::HeaderCorrupt,
                "feature file: unsupported version " + std::to_string(version));
  }
  const std::uint64_t count = r.u64();
  const std::uint32_t dim = r.u32();
  const std::uint64_t payload = r.remaining();
  if (dim == 0 || count > payload / 4 / dim ||
      payload != count * static_cast<std::uint64_t>(dim) * 4) {
    throw Error(ErrorCode::HeaderCorrupt,
                "feature file: length " + std::to_string(bytes.size()) +
                    " does not match header (count " + std::to_string(count) +
                    ", dim " + std::to_string(dim) + ")");
  }
  std::vector<float> values(count * dim);
  for (float& v : values) v = r.f32();
  return {dim, std::move(values)};
}

fs::path index_path_for(const fs::path& feature_path) {
  fs::path p = feature_path;
  p.replace_extension(".index.jsonl");
  return p;
}

void write_features(const fs::path& feature_path, const FeatureTable& table) {
  if (table.values.size() != table.ids.size() * table.dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature table has mismatched id and value counts");
  }
  write_file_bytes(feature_path, encode_feature_file(table.dim, table.values));
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    ordered_json row;
    row["row"] = i;
    row["candidate_id"] = table.ids[i];
    lines.push_back(row.dump());
  }
  write_file_bytes(index_path_for(feature_path), join_lines(lines));
}

FeatureTable read_features(const fs::path& feature_path) {
  FeatureTable table;
  auto [dim, values] = decode_feature_file(read_file_bytes(feature_path));
  table.dim = dim;
  table.values = std::move(values);
  const std::size_t count = table.values.size() / dim;

  const auto index = index_path_for(feature_path);
  std::set<std::string> seen;
  const auto lines = read_lines(index);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (blank(lines[n])) continue;
    const json j = parse_json_line(lines[n], n + 1, "index");
    const auto row = required<std::size_t>(j, "row", n + 1, "index");
    auto id = required<std::string>(j, "candidate_id", n + 1, "index");
    if (row != table.ids.size()) {
      throw Error(ErrorCode::ParseError,
                  "index line " + std::to_string(n + 1) + ": row " +
                      std::to_string(row) + " out of order");
    }
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::DuplicateId,
                  "index line " + std::to_string(n + 1) + ": candidate " + id +
                      " listed twice");
    }
    table.ids.push_back(std::move(id));
  }
  if (table.ids.size() != count) {
    throw Error(ErrorCode::HeaderCorrupt,
                "index lists " + std::to_string(table.ids.size()) +
                    " rows but feature header declares " +
                    std::to_string(count));
  }
  return table;
}

ManifestRecord parse_manifest_line(const std::string& line,
                                   std::size_t line_no) {
  const json j = parse_json_line(line, line_no, "manifest");
  ManifestRecord r;
  r.group_id = required<std::string>(j, "group_id", line_no, "manifest");
  r.candidate_id = required<std::string>(j, "candidate_id", line_no, "manifest");
  r.generator_tag =
      required<std::string>(j, "generator_tag", line_no, "manifest");
  const bool has_z1 = j.contains("z1");
  const bool has_z2 = j.contains("z2");
  if (has_z1 != has_z2) {
    throw Error(ErrorCode::ParseError, "manifest line " +
                                           std::to_string(line_no) +
                                           ": z1 and z2 must appear together");
  }
  if (has_z1) {
    r.z1 = required<int>(j, "z1", line_no, "manifest");
    r.z2 = required<int>(j, "z2", line_no, "manifest");
  }
  if (j.contains("annotator_id")) {
    r.annotator_id =
        required<std::string>(j, "annotator_id", line_no, "manifest");
  }
  return r;
}

std::string manifest_line(const ManifestRecord& r) {
  ordered_json j;
  j["group_id"] = r.group_id;
  j["candidate_id"] = r.candidate_id;
  j["generator_tag"] = r.generator_tag;
  if (r.z1) j["z1"] = *r.z1;
  if (r.z2) j["z2"] = *r.z2;
  if (r.annotator_id) j["annotator_id"] = *r.annotator_id;
  return j.dump();
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::vector<ManifestRecord> records;
  const auto lines = read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (blank(lines[n])) continue;
    records.push_back(parse_manifest_line(lines[n], n + 1));
  }
  return records;
}

std::vector<CheckedGroup> load_dataset(const fs::path& manifest,
                                       const fs::path& features) {
  const auto records = read_manifest(manifest);
  if (!fs::exists(features)) {
    const std::string first =
        records.empty() ? std::string("<none>") : records.front().candidate_id;
    throw Error(ErrorCode::MissingFeatureRow,
                "feature file " + features.string() +
                    " not found; no row for candidate " + first);
  }
  const FeatureTable table = read_features(features);
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < table.ids.size(); ++i) row_of[table.ids[i]] = i;

  struct Pending {
    std::vector<EditCandidate> candidates;
    std::vector<DimensionalAnnotation> annotations;
  };
  std::map<std::string, Pending> groups;
  // candidate_id -> (group_id, generator_tag) of its first manifest line
  std::map<std::string, std::pair<std::string, std::string>> owner;
  for (const auto& r : records) {
    auto [it, inserted] =
        owner.emplace(r.candidate_id, std::make_pair(r.group_id, r.generator_tag));
    if (inserted) {
      auto row = row_of.find(r.candidate_id);
      if (row == row_of.end()) {
        throw Error(ErrorCode::MissingFeatureRow,
                    "candidate " + r.candidate_id + " has no feature row");
      }
      const auto f = table.row(row->second);
      groups[r.group_id].candidates.emplace_back(
          r.candidate_id, r.group_id, r.generator_tag,
          std::vector<double>(f.begin(), f.end()));
    } else if (it->second != std::make_pair(r.group_id, r.generator_tag)) {
      throw Error(ErrorCode::DuplicateId,
                  "candidate " + r.candidate_id +
                      " appears with conflicting group or generator");
    }
    if (r.z1) {
      groups[r.group_id].annotations.emplace_back(
          r.candidate_id, *r.z1, *r.z2, r.annotator_id.value_or(""));
    }
  }
  for (const auto& id : table.ids) {
    if (!owner.contains(id)) {
      throw Error(ErrorCode::UnknownCandidateInIndex,
                  "index lists candidate " + id + " absent from the manifest");
    }
  }
  std::vector<CheckedGroup> out;
  out.reserve(groups.size());
  for (auto& [id, pending] : groups) {
    out.push_back(validate_group(std::move(pending.candidates),
                                 std::move(pending.annotations)));
  }
  return out;
}

std::vector<CheckedGroup> load_dataset_dir(const fs::path& dir) {
  return load_dataset(dir / kManifestFile, dir / kFeatureFile);
}

void write_dataset(std::span<const CheckedGroup> groups,
                   const fs::path& manifest, const fs::path& features) {
  FeatureTable table;
  std::vector<std::string> lines;
  for (const auto& g : groups) {
    if (table.dim == 0) table.dim = static_cast<std::uint32_t>(g.dim());
    if (g.dim() != table.dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "group " + g.group_id() + " feature length differs");
    }
    for (const auto& c : g.candidates()) {
      table.ids.push_back(c.candidate_id());
      for (double v : c.feature()) table.values.push_back(static_cast<float>(v));
      ManifestRecord r{g.group_id(), c.candidate_id(), c.generator_tag(),
                       std::nullopt, std::nullopt, std::nullopt};
      const auto anns = g.annotations_for(c.candidate_id());
      if (anns.empty()) lines.push_back(manifest_line(r));
      for (const auto& a : anns) {
        r.z1 = a.z1();
        r.z2 = a.z2();
        r.annotator_id = a.annotator_id().empty()
                             ? std::nullopt
                             : std::optional<std::string>(a.annotator_id());
        lines.push_back(manifest_line(r));
      }
    }
  }
  write_file_bytes(manifest, join_lines(lines));
  write_features(features, table);
}

std::vector<RankTuple> read_tuples(const fs::path& path) {
  std::vector<RankTuple> tuples;
  const auto lines = read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (blank(lines[n])) continue;
    const json j = parse_json_line(lines[n], n + 1, "tuples");
    auto group = required<std::string>(j, "group_id", n + 1, "tuples");
    auto members =
        required<std::vector<std::string>>(j, "members", n + 1, "tuples");
    try {
      tuples.emplace_back(std::move(group), std::move(members));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError,
                  "tuples line " + std::to_string(n + 1) + ": " + e.what());
    }
  }
  return tuples;
}

void write_tuples(const fs::path& path, std::span<const RankTuple> tuples) {
  std::vector<std::string> lines;
  for (const auto& t : tuples) {
    ordered_json j;
    j["group_id"] = t.group_id();
    j["members"] = t.members();
    lines.push_back(j.dump());
  }
  write_file_bytes(path, join_lines(lines));
}

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::InvalidConfig, "synthetic spec: " + what);
  };
  if (n_groups == 0) fail("n_groups must be positive");
  if (candidates_per_group < 2) fail("candidates_per_group must be >= 2");
  if (dim == 0) fail("dim must be positive");
  for (double s : {noise_sigma, annotator_noise, group_bias_sigma}) {
    if (!(s >= 0.0) || !std::isfinite(s)) fail("noise levels must be >= 0");
  }
  if (!(thresholds[0] < thresholds[1] && thresholds[1] < thresholds[2])) {
    fail("thresholds must be strictly increasing");
  }
  if (true_weights) {
    for (const auto& w : *true_weights) {
      if (w.size() != dim) fail("true_weights length must equal dim");
    }
  }
}

SyntheticSpec synthetic_spec_from_json(const json& j) {
  if (!j.is_object()) {
    throw Error(ErrorCode::InvalidConfig, "synthetic spec must be an object");
  }
  static const std::set<std::string> known = {
      "n_groups",   "candidates_per_group", "dim",  "noise_sigma",
      "annotator_noise", "group_bias_sigma", "thresholds", "seed",
      "true_weights"};
  for (const auto& item : j.items()) {
    if (!known.contains(item.key())) {
      throw Error(ErrorCode::InvalidConfig,
                  "synthetic spec: unknown key '" + item.key() + "'");
    }
  }
  SyntheticSpec s;
  try {
    s.n_groups = j.value("n_groups", s.n_groups);
    s.candidates_per_group =
        j.value("candidates_per_group", s.candidates_per_group);
    s.dim = j.value("dim", s.dim);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.annotator_noise = j.value("annotator_noise", s.annotator_noise);
    s.group_bias_sigma = j.value("group_bias_sigma", s.group_bias_sigma);
    s.thresholds = j.value("thresholds", s.thresholds);
    s.seed = j.value("seed", s.seed);
    if (j.contains("true_weights")) {
      const auto& w = j.at("true_weights");
      s.true_weights = std::array<std::vector<double>, 2>{
          w.at("w1").get<std::vector<double>>(),
          w.at("w2").get<std::vector<double>>()};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig,
                std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

json to_json(const SyntheticSpec& s) {
  json j = {{"n_groups", s.n_groups},
            {"candidates_per_group", s.candidates_per_group},
            {"dim", s.dim},
            {"noise_sigma", s.noise_sigma},
            {"annotator_noise", s.annotator_noise},
            {"group_bias_sigma", s.group_bias_sigma},
            {"thresholds", s.thresholds},
            {"seed", s.seed}};
  if (s.true_weights) {
    j["true_weights"] = {{"w1", (*s.true_weights)[0]},
                         {"w2", (*s.true_weights)[1]}};
  }
  return j;
}

int quantize_likert(double value, const std::array<double, 3>& thresholds) {
  int z = kLikertMin;
  for (double t : thresholds) {
    if (value > t) ++z;
  }
  return z;
}

namespace {

std::string padded(std::size_t value, int width) {
  std::string s = std::to_string(value);
  if (static_cast<int>(s.size()) < width) {
    s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
  }
  return s;
}

constexpr std::size_t kSyntheticGenerators = 6;
constexpr std::size_t kSyntheticAnnotators = 8;

}  // namespace

SyntheticDataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticDataset out;
  if (spec.true_weights) {
    out.weights = *spec.true_weights;
  } else {
    for (auto& w : out.weights) {
      w.resize(spec.dim);
      double norm2 = 0.0;
      for (double& v : w) {
        v = normal(rng);
        norm2 += v * v;
      }
      const double inv = 1.0 / std::sqrt(norm2);
      for (double& v : w) v *= inv;
    }
  }
  std::array<double, 2> latent_sd{};
  for (std::size_t d = 0; d < 2; ++d) {
    double norm2 = 0.0;
    for (double v : out.weights[d]) norm2 += v * v;
    latent_sd[d] = std::sqrt(norm2 + spec.noise_sigma * spec.noise_sigma);
    if (latent_sd[d] == 0.0) latent_sd[d] = 1.0;
  }

  const int group_width = spec.n_groups > 10000 ? 8 : 4;
  for (std::size_t g = 0; g < spec.n_groups; ++g) {
    const std::string group_id = "g" + padded(g, group_width);
    const std::string annotator = "rater-" + padded(g % kSyntheticAnnotators, 2);
    std::array<double, 2> bias{};
    for (double& b : bias) b = spec.group_bias_sigma * normal(rng);

    std::vector<EditCandidate> candidates;
    std::vector<DimensionalAnnotation> annotations;
    for (std::size_t c = 0; c < spec.candidates_per_group; ++c) {
      const std::string id = group_id + "-c" + padded(c, 2);
      const std::size_t generator = (g * 7 + c * 3) % kSyntheticGenerators;
      const std::string tag =
          "synth-gen-" + std::to_string(generator) + "/seed-" + padded(c, 2);
      std::vector<double> x(spec.dim);
      for (double& v : x) v = static_cast<float>(normal(rng));
      std::array<double, 2> q{};
      std::array<int, 2> z{};
      for (std::size_t d = 0; d < 2; ++d) {
        double dot = 0.0;
        for (std::size_t i = 0; i < spec.dim; ++i) dot += out.weights[d][i] * x[i];
        q[d] = dot + spec.noise_sigma * normal(rng);
        const double observed =
            q[d] / latent_sd[d] + bias[d] + spec.annotator_noise * normal(rng);
        z[d] = quantize_likert(observed, spec.thresholds);
      }
      candidates.emplace_back(id, group_id, tag, std::move(x));
      annotations.emplace_back(id, z[0], z[1], annotator);
      out.truth.push_back({group_id, id, q[0], q[1]});
    }
    out.groups.push_back(
        validate_group(std::move(candidates), std::move(annotations)));
  }
  return out;
}

void write_truth(const fs::path& path, std::span<const TruthRecord> truth) {
  std::vector<std::string> lines;
  for (const auto& t : truth) {
    ordered_json j;
    j["group_id"] = t.group_id;
    j["candidate_id"] = t.candidate_id;
    j["q1"] = t.q1;
    j["q2"] = t.q2;
    lines.push_back(j.dump());
  }
  write_file_bytes(path, join_lines(lines));
}

std::vector<TruthRecord> read_truth(const fs::path& path) {
  std::vector<TruthRecord> truth;
  const auto lines = read_lines(path);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (blank(lines[n])) continue;
    const json j = parse_json_line(lines[n], n + 1, "truth");
    truth.push_back({required<std::string>(j, "group_id", n + 1, "truth"),
                     required<std::string>(j, "candidate_id", n + 1, "truth"),
                     required<double>(j, "q1", n + 1, "truth"),
                     required<double>(j, "q2", n + 1, "truth")});
  }
  return truth;
}

void write_synthetic(const fs::path& dir, const SyntheticDataset& dataset,
                     std::size_t tuples_per_group_per_k,
                     std::uint64_t tuple_seed) {
  fs::create_directories(dir);
  write_dataset(dataset.groups, dir / kManifestFile, dir / kFeatureFile);
  write_truth(dir / kTruthFile, dataset.truth);

  std::map<std::string, std::vector<std::pair<std::string, double>>> latent;
  for (const auto& t : dataset.truth) {
    latent[t.group_id].emplace_back(t.candidate_id, t.aggregate());
  }
  std::vector<RankTuple> annotated, truthful;
  for (std::size_t k = 2; k <= 4; ++k) {
    for (const auto& g : dataset.groups) {
      for (auto& t : annotation_tuples(g, k, tuples_per_group_per_k, tuple_seed)) {
        annotated.push_back(std::move(t));
      }
      for (auto& t : build_tuples(g.group_id(), latent[g.group_id()], k,
                                  tuples_per_group_per_k, tuple_seed)) {
        truthful.push_back(std::move(t));
      }
    }
  }
  write_tuples(dir / kTuplesFile, annotated);
  write_tuples(dir / kTruthTuplesFile, truthful);
}

}  // namespace prefrank
