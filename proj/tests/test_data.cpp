#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <bit>
#include <cstring>
#include <filesystem>
#include <map>

#include "prefrank/data.hpp"
#include "prefrank/eval.hpp"
#include "prefrank/trainer.hpp"

using namespace prefrank;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("prefrank_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void put_le(std::string& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// Feature file assembled byte by byte, the way an external exporter would.
std::string raw_feature_file(std::uint64_t count, std::uint32_t dim,
                             const std::vector<float>& values) {
  std::string out = "PRFT";
  put_le(out, 1, 4);
  put_le(out, count, 8);
  put_le(out, dim, 4);
  for (float v : values) put_le(out, std::bit_cast<std::uint32_t>(v), 4);
  return out;
}

void write_text(const fs::path& p, const std::string& text) { write_file_bytes(p, text); }

template <typename F>
Error error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an Error");
  return Error(ErrorCode::InvalidArgument, "");
}

}  // namespace

TEST_CASE("hand-written 148-byte feature file decodes") {
  std::vector<float> values(4 * 8);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = 0.25f * float(i) - 3.0f;
  const std::string bytes = raw_feature_file(4, 8, values);
  REQUIRE(bytes.size() == 148);
  const auto [dim, decoded] = decode_feature_file(bytes);
  CHECK(dim == 8);
  CHECK(decoded == values);
  CHECK(encode_feature_file(8, values) == bytes);
  CHECK(kFeatureHeaderBytes == 20);

  TempDir tmp("feat148");
  write_text(tmp.path / "emb.prft", bytes);
  std::string index;
  for (int r = 0; r < 4; ++r) {
    index += R"({"row": )" + std::to_string(r) + R"(, "candidate_id": "x)" +
             std::to_string(r) + "\"}\n";
  }
  write_text(tmp.path / "emb.index.jsonl", index);
  const auto table = read_features(tmp.path / "emb.prft");
  CHECK(table.ids == std::vector<std::string>{"x0", "x1", "x2", "x3"});
  CHECK(table.row(2)[0] == values[16]);
}

TEST_CASE("feature length must match the header") {
  std::vector<float> values(6, 1.0f);
  const std::string bytes = raw_feature_file(2, 3, values);
  for (const std::string& bad :
       {bytes.substr(0, bytes.size() - 4), bytes + std::string(4, '\0'),
        raw_feature_file(3, 3, values), bytes.substr(0, 10)}) {
    CHECK(error_of([&] { decode_feature_file(bad); }).code() == ErrorCode::HeaderCorrupt);
  }
  std::string wrong_magic = bytes;
  wrong_magic[3] = 'X';
  CHECK(error_of([&] { decode_feature_file(wrong_magic); }).code() == ErrorCode::HeaderCorrupt);
  // count * dim * 4 overflowing 64 bits must not pass the length check
  CHECK(error_of([&] { decode_feature_file(raw_feature_file(1ULL << 62, 4, {})); }).code() ==
        ErrorCode::HeaderCorrupt);
}

TEST_CASE("index files: ids are unique and rows ordered") {
  TempDir tmp("index");
  write_text(tmp.path / "f.prft", raw_feature_file(2, 1, {1.0f, 2.0f}));
  write_text(tmp.path / "f.index.jsonl",
             "{\"row\":0,\"candidate_id\":\"a\"}\n{\"row\":1,\"candidate_id\":\"a\"}\n");
  CHECK(error_of([&] { read_features(tmp.path / "f.prft"); }).code() == ErrorCode::DuplicateId);
  write_text(tmp.path / "f.index.jsonl", "{\"row\":0,\"candidate_id\":\"a\"}\n");
  CHECK(error_of([&] { read_features(tmp.path / "f.prft"); }).code() == ErrorCode::HeaderCorrupt);
  CHECK(index_path_for("dir/emb.prft") == fs::path("dir/emb.index.jsonl"));
}

TEST_CASE("manifest lines") {
  const auto r = parse_manifest_line(
      R"({"group_id":"g","candidate_id":"c","generator_tag":"m/1","z1":3,"z2":4,"annotator_id":"r"})", 1);
  CHECK(r.z1 == 3);
  CHECK(r.z2 == 4);
  CHECK(r.annotator_id == "r");
  CHECK(parse_manifest_line(manifest_line(r), 1) == r);
  const auto bare = parse_manifest_line(R"({"group_id":"g","candidate_id":"c","generator_tag":"m"})", 1);
  CHECK_FALSE(bare.z1.has_value());

  const auto e1 = error_of([] { parse_manifest_line("{not json", 7); });
  CHECK(e1.code() == ErrorCode::ParseError);
  CHECK(std::string(e1.what()).find("line 7") != std::string::npos);
  CHECK(error_of([] { parse_manifest_line(R"({"group_id":"g","generator_tag":"m"})", 2); }).code() ==
        ErrorCode::ParseError);
  CHECK(error_of([] {
          parse_manifest_line(R"({"group_id":"g","candidate_id":"c","generator_tag":"m","z1":2})", 3);
        }).code() == ErrorCode::ParseError);
  CHECK(error_of([] {
          parse_manifest_line(R"({"group_id":"g","candidate_id":7,"generator_tag":"m"})", 3);
        }).code() == ErrorCode::ParseError);
  CHECK(error_of([] { parse_manifest_line("[1,2]", 4); }).code() == ErrorCode::ParseError);
}

namespace {

void write_three(const fs::path& dir, const std::vector<std::string>& index_ids) {
  write_text(dir / "manifest.jsonl",
             R"({"group_id":"g","candidate_id":"a","generator_tag":"m","z1":4,"z2":4})" "\n"
             R"({"group_id":"g","candidate_id":"b","generator_tag":"m","z1":3,"z2":2})" "\n"
             "\n"
             R"({"group_id":"g","candidate_id":"c","generator_tag":"m","z1":1,"z2":2})" "\n");
  FeatureTable t;
  t.dim = 2;
  t.ids = index_ids;
  for (std::size_t i = 0; i < index_ids.size(); ++i) {
    t.values.push_back(float(i));
    t.values.push_back(-float(i));
  }
  write_features(dir / "features.prft", t);
}

}  // namespace

TEST_CASE("load_dataset joins manifest and features") {
  TempDir tmp("join");
  write_three(tmp.path, {"c", "a", "b"});
  const auto groups = load_dataset_dir(tmp.path);
  REQUIRE(groups.size() == 1);
  CHECK(groups[0].size() == 3);
  CHECK(groups[0].find("a")->feature()[0] == 1.0);
  CHECK(groups[0].find("c")->feature()[1] == 0.0);
  CHECK(groups[0].annotations_for("b")[0].z2() == 2);
}

TEST_CASE("load_dataset join errors name the id") {
  TempDir tmp("join_err");
  write_three(tmp.path, {"a", "b"});
  auto e = error_of([&] { load_dataset_dir(tmp.path); });
  CHECK(e.code() == ErrorCode::MissingFeatureRow);
  CHECK(std::string(e.what()).find("candidate c") != std::string::npos);

  write_three(tmp.path, {"a", "b", "c", "stray"});
  e = error_of([&] { load_dataset_dir(tmp.path); });
  CHECK(e.code() == ErrorCode::UnknownCandidateInIndex);
  CHECK(std::string(e.what()).find("stray") != std::string::npos);

  write_three(tmp.path, {"a", "b", "c"});
  const auto bytes = read_file_bytes(tmp.path / "features.prft");
  write_text(tmp.path / "features.prft", bytes.substr(0, bytes.size() - 3));
  CHECK(error_of([&] { load_dataset_dir(tmp.path); }).code() == ErrorCode::HeaderCorrupt);

  fs::remove(tmp.path / "features.prft");
  CHECK(error_of([&] { load_dataset_dir(tmp.path); }).code() == ErrorCode::MissingFeatureRow);

  write_three(tmp.path, {"a", "b", "c"});
  write_text(tmp.path / "manifest.jsonl",
             R"({"group_id":"g","candidate_id":"a","generator_tag":"m"})" "\n{oops}\n");
  e = error_of([&] { load_dataset_dir(tmp.path); });
  CHECK(e.code() == ErrorCode::ParseError);
  CHECK(std::string(e.what()).find("line 2") != std::string::npos);
}

TEST_CASE("repeated manifest lines add annotations from several raters") {
  TempDir tmp("multi");
  write_text(tmp.path / "manifest.jsonl",
             R"({"group_id":"g","candidate_id":"a","generator_tag":"m","z1":4,"z2":4,"annotator_id":"r1"})" "\n"
             R"({"group_id":"g","candidate_id":"a","generator_tag":"m","z1":3,"z2":4,"annotator_id":"r2"})" "\n"
             R"({"group_id":"g","candidate_id":"b","generator_tag":"m","z1":2,"z2":2,"annotator_id":"r1"})" "\n");
  FeatureTable t{1, {"a", "b"}, {0.5f, 1.5f}};
  write_features(tmp.path / "features.prft", t);
  const auto groups = load_dataset_dir(tmp.path);
  CHECK(groups[0].annotations_for("a").size() == 2);
  write_text(tmp.path / "manifest.jsonl",
             R"({"group_id":"g","candidate_id":"a","generator_tag":"m","z1":4,"z2":4,"annotator_id":"r1"})" "\n"
             R"({"group_id":"g","candidate_id":"a","generator_tag":"m","z1":3,"z2":4,"annotator_id":"r1"})" "\n"
             R"({"group_id":"g","candidate_id":"b","generator_tag":"m"})" "\n");
  CHECK(error_of([&] { load_dataset_dir(tmp.path); }).code() == ErrorCode::DuplicateAnnotation);
}

TEST_CASE("write then load reproduces the dataset") {
  SyntheticSpec spec;
  spec.n_groups = 12;
  spec.dim = 5;
  spec.seed = 4;
  const auto ds = gen_synthetic(spec);
  TempDir tmp("roundtrip");
  write_dataset(ds.groups, tmp.path / "m.jsonl", tmp.path / "f.prft");
  CHECK(load_dataset(tmp.path / "m.jsonl", tmp.path / "f.prft") == ds.groups);
  std::vector<RankTuple> tuples = {RankTuple("g0000", {"g0000-c01", "g0000-c00"}),
                                   RankTuple("g0001", {"b", "a", "c", "d"})};
  write_tuples(tmp.path / "t.jsonl", tuples);
  CHECK(read_tuples(tmp.path / "t.jsonl") == tuples);
  write_truth(tmp.path / "truth.jsonl", ds.truth);
  CHECK(read_truth(tmp.path / "truth.jsonl") == ds.truth);
}

TEST_CASE("synthetic generator counts and determinism") {
  SyntheticSpec spec;
  spec.n_groups = 100;
  spec.candidates_per_group = 7;
  spec.seed = 12;
  const auto ds = gen_synthetic(spec);
  std::size_t candidates = 0, pairs = 0;
  for (const auto& g : ds.groups) {
    candidates += g.size();
    pairs += build_pairs(g, 0).size();
    CHECK(g.dim() == 16);
  }
  CHECK(candidates == 700);
  CHECK(pairs == 2100);
  CHECK(ds.truth.size() == 700);
  CHECK(ds.groups.front().group_id() == "g0000");
  CHECK(ds.groups.front().candidates()[3].candidate_id() == "g0000-c03");

  TempDir a("synth_a"), b("synth_b");
  write_synthetic(a.path, ds);
  write_synthetic(b.path, gen_synthetic(spec));
  for (const char* f : {kManifestFile, kFeatureFile, "features.index.jsonl", kTruthFile,
                        kTuplesFile, kTruthTuplesFile}) {
    CHECK(read_file_bytes(a.path / f) == read_file_bytes(b.path / f));
  }
  spec.seed = 13;
  write_synthetic(b.path, gen_synthetic(spec));
  CHECK(read_file_bytes(a.path / kFeatureFile) != read_file_bytes(b.path / kFeatureFile));
}

TEST_CASE("noise-free Likert scores preserve latent order") {
  SyntheticSpec spec;
  spec.n_groups = 40;
  spec.noise_sigma = 0.0;
  spec.seed = 2;
  const auto ds = gen_synthetic(spec);
  std::map<std::string, TruthRecord> truth;
  for (const auto& t : ds.truth) truth[t.candidate_id] = t;
  std::size_t strict_pairs = 0;
  for (const auto& g : ds.groups) {
    const auto& anns = g.annotations();
    for (const auto& x : anns) {
      for (const auto& y : anns) {
        const auto& tx = truth.at(x.candidate_id());
        const auto& ty = truth.at(y.candidate_id());
        // Monotone quantization never inverts a dimension's order.
        if (x.z1() > y.z1()) CHECK(tx.q1 > ty.q1);
        if (x.z2() > y.z2()) CHECK(tx.q2 > ty.q2);
        if (x.sum() > y.sum()) {
          ++strict_pairs;
          CHECK((tx.q1 > ty.q1 || tx.q2 > ty.q2));
        }
      }
    }
    // Within each dimension, Spearman(z_d, q_d) over non-tied entries is 1.
    for (std::size_t d = 0; d < 2; ++d) {
      for (std::size_t i = 0; i < anns.size(); ++i) {
        for (std::size_t j = 0; j < anns.size(); ++j) {
          if (anns[i].z(d) < anns[j].z(d)) {
            const auto& ti = truth.at(anns[i].candidate_id());
            const auto& tj = truth.at(anns[j].candidate_id());
            CHECK((d == 0 ? ti.q1 < tj.q1 : ti.q2 < tj.q2));
          }
        }
      }
    }
  }
  CHECK(strict_pairs > 0);
}

TEST_CASE("quantizer and spec validation") {
  const std::array<double, 3> th = {-1.0, 0.0, 1.0};
  CHECK(quantize_likert(-5.0, th) == 1);
  CHECK(quantize_likert(-1.0, th) == 1);
  CHECK(quantize_likert(-0.5, th) == 2);
  CHECK(quantize_likert(0.5, th) == 3);
  CHECK(quantize_likert(9.0, th) == 4);

  SyntheticSpec s;
  s.thresholds = {0.0, 0.0, 1.0};
  CHECK_THROWS_AS(s.validate(), Error);
  const auto j = nlohmann::json::parse(R"({"n_groups": 3, "dim": 2, "seed": 5,
      "true_weights": {"w1": [1, 0], "w2": [0, 1]}})");
  const auto parsed = synthetic_spec_from_json(j);
  CHECK(parsed.n_groups == 3);
  CHECK(synthetic_spec_from_json(to_json(parsed)).true_weights == parsed.true_weights);
  CHECK(error_of([] { synthetic_spec_from_json({{"groups", 3}}); }).code() ==
        ErrorCode::InvalidConfig);
  CHECK(error_of([] {
          synthetic_spec_from_json(nlohmann::json::parse(
              R"({"dim": 3, "true_weights": {"w1": [1, 0], "w2": [0, 1]}})"));
        }).code() == ErrorCode::InvalidConfig);
  const auto ds = gen_synthetic(parsed);
  CHECK(ds.weights[0] == std::vector<double>{1.0, 0.0});
}

TEST_CASE("generated tuple files are strictly ordered") {
  SyntheticSpec spec;
  spec.n_groups = 5;
  spec.seed = 1;
  const auto ds = gen_synthetic(spec);
  TempDir tmp("tuples");
  write_synthetic(tmp.path, ds, 3, 0);
  std::map<std::string, double> latent;
  for (const auto& t : ds.truth) latent[t.candidate_id] = t.aggregate();
  const auto truth_tuples = read_tuples(tmp.path / kTruthTuplesFile);
  CHECK(truth_tuples.size() == 5 * 3 * 3);
  const auto acc = multiway_accuracy([&](const std::string& id) { return latent.at(id); },
                                     truth_tuples);
  CHECK(acc.overall.accuracy() == 1.0);
  std::map<std::string, double> human;
  for (const auto& g : ds.groups) {
    for (const auto& c : g.candidates()) human[c.candidate_id()] = *human_score(g, c.candidate_id());
  }
  const auto ann = read_tuples(tmp.path / kTuplesFile);
  CHECK(multiway_accuracy([&](const std::string& id) { return human.at(id); }, ann)
            .overall.accuracy() == 1.0);
}
